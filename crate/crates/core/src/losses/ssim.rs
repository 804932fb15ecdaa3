use crate::error::{Error, Result};
use crate::raster::Raster;

pub const WINDOW: usize = 11;
pub const WINDOW_SIGMA: f64 = 1.5;
pub const C1: f64 = 1e-4;
pub const C2: f64 = 9e-4;

fn window_weights() -> [f64; WINDOW * WINDOW] {
    let r = (WINDOW / 2) as f64;
    let g: Vec<f64> = (0..WINDOW)
        .map(|i| (-((i as f64 - r).powi(2)) / (2.0 * WINDOW_SIGMA * WINDOW_SIGMA)).exp())
        .collect();
    let s: f64 = g.iter().sum();
    let mut w = [0.0; WINDOW * WINDOW];
    for y in 0..WINDOW {
        for x in 0..WINDOW {
            w[y * WINDOW + x] = g[y] * g[x] / (s * s);
        }
    }
    w
}

/// Local statistics of one window position.
struct Moments {
    mu_a: f64,
    mu_b: f64,
    aa: f64,
    bb: f64,
    ab: f64,
}

fn check(a: &Raster, b: &Raster, mask: Option<&Raster>) -> Result<()> {
    a.ensure_same_shape(b, "SSIM")?;
    if a.width() < WINDOW || a.height() < WINDOW {
        return Err(Error::Dimension(format!(
            "SSIM needs at least {WINDOW}x{WINDOW} pixels, got {}x{}",
            a.width(),
            a.height()
        )));
    }
    if let Some(m) = mask {
        a.ensure_same_size(m, "SSIM mask")?;
    }
    Ok(())
}

/// Window positions (top-left corners) whose center lies on a masked pixel.
fn positions(a: &Raster, mask: Option<&Raster>) -> Vec<(usize, usize)> {
    let r = WINDOW / 2;
    let mut out = Vec::new();
    for y in 0..=a.height() - WINDOW {
        for x in 0..=a.width() - WINDOW {
            if mask.is_none_or(|m| m.get(x + r, y + r, 0) > 0.0) {
                out.push((x, y));
            }
        }
    }
    out
}

fn moments(a: &Raster, b: &Raster, w: &[f64], x: usize, y: usize, c: usize) -> Moments {
    let mut m = Moments {
        mu_a: 0.0,
        mu_b: 0.0,
        aa: 0.0,
        bb: 0.0,
        ab: 0.0,
    };
    for dy in 0..WINDOW {
        for dx in 0..WINDOW {
            let k = w[dy * WINDOW + dx];
            let (va, vb) = (a.get(x + dx, y + dy, c), b.get(x + dx, y + dy, c));
            m.mu_a += k * va;
            m.mu_b += k * vb;
            m.aa += k * va * va;
            m.bb += k * vb * vb;
            m.ab += k * va * vb;
        }
    }
    m
}

fn terms(m: &Moments) -> (f64, f64, f64, f64) {
    let a1 = 2.0 * m.mu_a * m.mu_b + C1;
    let a2 = 2.0 * (m.ab - m.mu_a * m.mu_b) + C2;
    let b1 = m.mu_a * m.mu_a + m.mu_b * m.mu_b + C1;
    let b2 = (m.aa - m.mu_a * m.mu_a) + (m.bb - m.mu_b * m.mu_b) + C2;
    (a1, a2, b1, b2)
}

/// Mean SSIM over every fully contained 11×11 Gaussian window and every
/// channel. With a mask, only windows centered on masked pixels count.
pub fn ssim(a: &Raster, b: &Raster, mask: Option<&Raster>) -> Result<f64> {
    check(a, b, mask)?;
    let w = window_weights();
    let pos = positions(a, mask);
    if pos.is_empty() {
        return Err(Error::Invalid("SSIM mask selects no window".into()));
    }
    let mut total = 0.0;
    for c in 0..a.channels() {
        for &(x, y) in &pos {
            let (a1, a2, b1, b2) = terms(&moments(a, b, &w, x, y, c));
            total += a1 * a2 / (b1 * b2);
        }
    }
    Ok(total / (pos.len() * a.channels()) as f64)
}

/// SSIM and its gradient with respect to `a`.
pub fn ssim_with_grad(a: &Raster, b: &Raster) -> Result<(f64, Raster)> {
    check(a, b, None)?;
    let w = window_weights();
    let pos = positions(a, None);
    let n = (pos.len() * a.channels()) as f64;
    let mut total = 0.0;
    let mut grad = Raster::new(a.width(), a.height(), a.channels());
    for c in 0..a.channels() {
        for &(x, y) in &pos {
            let m = moments(a, b, &w, x, y, c);
            let (a1, a2, b1, b2) = terms(&m);
            let s = a1 * a2 / (b1 * b2);
            total += s;
            // dS with respect to the raw moments μ_a, E[a²], E[ab]
            let g_mu = s
                * (2.0 * m.mu_b / a1 - 2.0 * m.mu_b / a2 - 2.0 * m.mu_a / b1 + 2.0 * m.mu_a / b2)
                / n;
            let g_aa = -s / b2 / n;
            let g_ab = 2.0 * s / a2 / n;
            for dy in 0..WINDOW {
                for dx in 0..WINDOW {
                    let k = w[dy * WINDOW + dx];
                    let (px, py) = (x + dx, y + dy);
                    let (va, vb) = (a.get(px, py, c), b.get(px, py, c));
                    let g = grad.get(px, py, c) + k * (g_mu + 2.0 * va * g_aa + vb * g_ab);
                    grad.set(px, py, c, g);
                }
            }
        }
    }
    Ok((total / n, grad))
}
