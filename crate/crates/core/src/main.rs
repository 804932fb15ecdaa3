fn main() {
    std::process::exit(gsinpaint::cli::run(std::env::args_os()));
}
