mod common;

use common::{check_l1_gradients, random_scene};
use gsinpaint::raster::Raster;
use gsinpaint::render::{rasterize, rasterize_with_state, render_backward, Gaussian3D, GaussianCloud};
use gsinpaint::synthetic::{front_camera, random_cloud};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn l1_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (pose, intr) = front_camera(32, 40.0);
    for _ in 0..4 {
        let (cloud, target) = random_scene(&mut rng, 10, 32, 40.0);
        let r = check_l1_gradients(&cloud, &target, &pose, &intr, 1e-4, 1e-3, 1e-5);
        eprintln!("{r:?}");
        assert_eq!(r.failures, 0, "{r:?}");
        assert!(r.straddling * 10 <= r.checked, "{r:?}");
    }
}

#[test]
fn depth_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (pose, intr) = front_camera(24, 30.0);
    let (cloud, _) = random_scene(&mut rng, 6, 24, 30.0);
    let weights = Raster::from_fn(24, 24, 1, |x, y, _| ((x * 7 + y * 3) % 5) as f64 - 2.0);
    let loss = |c: &GaussianCloud| -> f64 {
        let out = rasterize(c, &pose, &intr).unwrap();
        out.depth.data().iter().zip(weights.data()).map(|(d, w)| d * w).sum()
    };
    let grads = render_backward(&cloud, &pose, &intr, &Raster::new(24, 24, 3), Some(&weights)).unwrap();
    let h = 1e-5;
    for i in 0..cloud.len() {
        for group in common::GROUPS {
            for k in 0..common::group_len(group) {
                let mut p = cloud.clone();
                *common::param_mut(&mut p, i, group, k) += h;
                let mut m = cloud.clone();
                *common::param_mut(&mut m, i, group, k) -= h;
                let fd = (loss(&p) - loss(&m)) / (2.0 * h);
                let an = common::grad_value(&grads, i, group, k);
                assert!(
                    (fd - an).abs() <= (1e-4 * fd.abs().max(an.abs())).max(1e-6),
                    "gaussian {i} {group}[{k}]: {an} vs {fd}"
                );
            }
        }
    }
}

#[test]
fn weights_sum_to_one_and_colors_stay_in_hull() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (pose, intr) = front_camera(32, 40.0);
    for _ in 0..20 {
        let n = rng.gen_range(1..=12);
        let cloud = random_cloud(&mut rng, n, 32, 40.0);
        let (out, state) = rasterize_with_state(&cloud, &pose, &intr).unwrap();
        for s in state.weight_sums() {
            assert!((s - 1.0).abs() < 1e-6);
        }
        for c in 0..3 {
            let lo = cloud.gaussians.iter().map(|g| g.color[c]).fold(cloud.background[c], f64::min);
            let hi = cloud.gaussians.iter().map(|g| g.color[c]).fold(cloud.background[c], f64::max);
            for y in 0..32 {
                for x in 0..32 {
                    let v = out.color.get(x, y, c);
                    assert!(v >= lo - 1e-12 && v <= hi + 1e-12);
                }
            }
        }
    }
}

#[test]
fn depth_does_not_decrease_when_pushed_back() {
    let (pose, intr) = front_camera(32, 40.0);
    let mut last = 0.0;
    for step in 0..40 {
        let z = 1.0 + 0.1 * step as f64;
        let g = Gaussian3D::isotropic([0.0, 0.0, z], 0.05, 0.8, [1.0; 3]);
        let out = rasterize(&GaussianCloud::new(vec![g], [0.0; 3]), &pose, &intr).unwrap();
        let d = out.depth.get(16, 16, 0);
        assert!(d >= last, "depth fell from {last} to {d} at z = {z}");
        last = d;
    }
}
