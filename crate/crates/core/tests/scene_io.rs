use std::fs;

use gsinpaint::error::Error;
use gsinpaint::raster::Raster;
use gsinpaint::scene_io::{
    camera_center, load_scene, save_scene, write_png, InpaintPrompts, SceneBundle, View,
};
use gsinpaint::synthetic::{orbit_pose, toy_scene};
use gsinpaint::scene_io::CameraIntrinsics;
use image::{GrayImage, Luma};
use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn quantized_scene(n: u32, seed: u64) -> SceneBundle {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let intr = CameraIntrinsics::new(16, 12, 20.0, 21.0, 8.0, 6.0).unwrap();
    let views = (0..n)
        .map(|id| View {
            id,
            intrinsics: intr,
            pose: orbit_pose(0.3 * id as f64, 3.0, 0.2, Vector3::new(0.1, 0.0, 0.0)),
            image: Raster::from_fn(16, 12, 3, |_, _, _| rng.gen_range(0..=255u8) as f64 / 255.0),
            mask: Raster::from_fn(16, 12, 1, |_, _, _| if rng.gen_bool(0.3) { 1.0 } else { 0.0 }),
            depth: Some(Raster::from_fn(16, 12, 1, |_, _, _| rng.gen_range(0.5f32..5.0) as f64)),
        })
        .collect();
    SceneBundle::new(views, InpaintPrompts::default()).unwrap()
}

#[test]
fn save_then_load_is_identity() {
    let dir = tempfile::tempdir().unwrap();
    let scene = quantized_scene(3, 1);
    save_scene(&scene, dir.path()).unwrap();
    let back = load_scene(dir.path()).unwrap();
    assert_eq!(back.ids(), vec![0, 1, 2]);
    assert_eq!(back, scene);
}

#[test]
fn toy_scene_survives_disk_except_image_quantization() {
    let dir = tempfile::tempdir().unwrap();
    let toy = toy_scene().unwrap();
    save_scene(&toy.scene, dir.path()).unwrap();
    let back = load_scene(dir.path()).unwrap();
    for (a, b) in toy.scene.views.iter().zip(&back.views) {
        assert_eq!(a.pose, b.pose);
        assert_eq!(a.mask, b.mask);
        let err = a.image.data().iter().zip(b.image.data()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        assert!(err <= 0.5 / 255.0 + 1e-12);
    }
}

#[test]
fn loaded_poses_satisfy_center_identity() {
    let dir = tempfile::tempdir().unwrap();
    save_scene(&quantized_scene(4, 2), dir.path()).unwrap();
    for v in load_scene(dir.path()).unwrap().views {
        let c = camera_center(&v.pose);
        assert!((v.pose.rotation * c + v.pose.translation).norm() < 1e-9);
    }
}

#[test]
fn mask_mismatch_names_the_view() {
    let dir = tempfile::tempdir().unwrap();
    save_scene(&quantized_scene(3, 3), dir.path()).unwrap();
    write_png(&dir.path().join("masks/1.png"), &Raster::new(16, 16, 1)).unwrap();
    match load_scene(dir.path()) {
        Err(Error::View { view, message }) => {
            assert_eq!(view, 1);
            assert!(message.contains("dimension"), "{message}");
        }
        other => panic!("expected a view error, got {other:?}"),
    }
}

#[test]
fn masks_binarize_at_128() {
    let dir = tempfile::tempdir().unwrap();
    save_scene(&quantized_scene(1, 4), dir.path()).unwrap();
    let gray = GrayImage::from_fn(16, 12, |x, _| Luma([(x * 17) as u8]));
    gray.save(dir.path().join("masks/0.png")).unwrap();
    let scene = load_scene(dir.path()).unwrap();
    for x in 0..16 {
        let expected = if x * 17 >= 128 { 1.0 } else { 0.0 };
        assert_eq!(scene.views[0].mask.get(x, 3, 0), expected);
    }
}

#[test]
fn stretched_rotation_in_camera_file_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    save_scene(&quantized_scene(1, 5), dir.path()).unwrap();
    let path = dir.path().join("cameras.txt");
    let text = fs::read_to_string(&path).unwrap();
    let line = text.lines().find(|l| !l.starts_with('#') && !l.trim().is_empty()).unwrap();
    let mut fields: Vec<String> = line.split_whitespace().map(String::from).collect();
    // first rotation row scaled to norm 1.1
    for f in &mut fields[7..10] {
        *f = (f.parse::<f64>().unwrap() * 1.1).to_string();
    }
    fs::write(&path, text.replace(line, &fields.join(" "))).unwrap();
    let err = load_scene(dir.path()).unwrap_err();
    assert!(err.to_string().contains("orthonormal"), "{err}");
}
