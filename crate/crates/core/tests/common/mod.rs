#![allow(dead_code)]

use gsinpaint::raster::Raster;
use gsinpaint::render::{
    rasterize, rasterize_with_state, render_backward, CloudGradients, GaussianCloud,
};
use gsinpaint::scene_io::{CameraIntrinsics, CameraPose};
use gsinpaint::synthetic::{random_cloud, random_image};
use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const GROUPS: [&str; 5] = ["position", "rotation", "log_scale", "opacity_logit", "color"];

pub fn group_len(group: &str) -> usize {
    match group {
        "position" | "log_scale" | "color" => 3,
        "rotation" => 4,
        _ => 1,
    }
}

pub fn param_mut<'a>(cloud: &'a mut GaussianCloud, i: usize, group: &str, k: usize) -> &'a mut f64 {
    let g = &mut cloud.gaussians[i];
    match group {
        "position" => &mut g.position[k],
        "rotation" => &mut g.rotation[k],
        "log_scale" => &mut g.log_scale[k],
        "opacity_logit" => &mut g.opacity_logit,
        "color" => &mut g.color[k],
        _ => unreachable!(),
    }
}

pub fn grad_value(grads: &CloudGradients, i: usize, group: &str, k: usize) -> f64 {
    match group {
        "position" => grads.position[i][k],
        "rotation" => grads.rotation[i][k],
        "log_scale" => grads.log_scale[i][k],
        "opacity_logit" => grads.opacity_logit[i],
        "color" => grads.color[i][k],
        _ => unreachable!(),
    }
}

/// Summed L1 distance between the rendered color and `target`.
pub fn l1_sum(cloud: &GaussianCloud, pose: &CameraPose, intr: &CameraIntrinsics, target: &Raster) -> f64 {
    let out = rasterize(cloud, pose, intr).unwrap();
    out.color
        .data()
        .iter()
        .zip(target.data())
        .map(|(a, b)| (a - b).abs())
        .sum()
}

/// Random scene of up to `max_gaussians` and a random target image.
pub fn random_scene<R: Rng>(
    rng: &mut R,
    max_gaussians: usize,
    size: usize,
    focal: f64,
) -> (GaussianCloud, Raster) {
    let n = rng.gen_range(1..=max_gaussians);
    let cloud = random_cloud(rng, n, size, focal);
    let target = random_image(rng, size, size, 3);
    (cloud, target)
}

/// Everything that decides which smooth branch the summed L1 loss is on:
/// the active compositing set and the sign of every residual.
fn branch(
    cloud: &GaussianCloud,
    pose: &CameraPose,
    intr: &CameraIntrinsics,
    target: &Raster,
) -> (Vec<Vec<(usize, bool)>>, Vec<bool>) {
    let (out, state) = rasterize_with_state(cloud, pose, intr).unwrap();
    let signs = out.color.data().iter().zip(target.data()).map(|(a, b)| a > b).collect();
    (state.active_set(), signs)
}

#[derive(Debug, Default, Clone, Copy)]
pub struct GradCheck {
    pub checked: usize,
    /// Parameters whose finite-difference stencil straddles a footprint
    /// cutoff, depth swap, termination or L1 kink.
    pub straddling: usize,
    pub failures: usize,
    pub worst_excess: f64,
}

/// Compares analytic gradients of the summed L1 loss with central finite
/// differences of step `h` for every parameter of every Gaussian.
pub fn check_l1_gradients(
    cloud: &GaussianCloud,
    target: &Raster,
    pose: &CameraPose,
    intr: &CameraIntrinsics,
    h: f64,
    rel: f64,
    abs: f64,
) -> GradCheck {
    let out = rasterize(cloud, pose, intr).unwrap();
    let upstream = out.color.zip_map(target, |a, b| (a - b).signum());
    let grads = render_backward(cloud, pose, intr, &upstream, None).unwrap();
    let mut report = GradCheck::default();
    for i in 0..cloud.len() {
        for group in GROUPS {
            for k in 0..group_len(group) {
                let mut plus = cloud.clone();
                *param_mut(&mut plus, i, group, k) += h;
                let mut minus = cloud.clone();
                *param_mut(&mut minus, i, group, k) -= h;
                if branch(&plus, pose, intr, target) != branch(&minus, pose, intr, target) {
                    report.straddling += 1;
                    continue;
                }
                let fd = (l1_sum(&plus, pose, intr, target) - l1_sum(&minus, pose, intr, target))
                    / (2.0 * h);
                let an = grad_value(&grads, i, group, k);
                let allowed = (rel * fd.abs().max(an.abs())).max(abs);
                let err = (fd - an).abs();
                report.checked += 1;
                if err > allowed {
                    report.failures += 1;
                    eprintln!("gaussian {i} {group}[{k}]: analytic {an:.6e} fd {fd:.6e}");
                }
                report.worst_excess = report.worst_excess.max(err / allowed);
            }
        }
    }
    report
}

/// Minimum within-cluster sum of squares over every partition of `points`
/// into exactly `k` non-empty groups, by depth-first search with the
/// partial objective as a bound. Group labels are canonical: a point may
/// only open the next unused group.
pub fn exhaustive_partition(points: &[Vector3<f64>], k: usize, upper: f64) -> (f64, Vec<usize>) {
    struct Search<'a> {
        points: &'a [Vector3<f64>],
        k: usize,
        count: Vec<f64>,
        sum: Vec<Vector3<f64>>,
        sq: Vec<f64>,
        labels: Vec<usize>,
        best: f64,
        best_labels: Vec<usize>,
    }
    impl Search<'_> {
        fn cost(&self) -> f64 {
            (0..self.k)
                .filter(|&j| self.count[j] > 0.0)
                .map(|j| self.sq[j] - self.sum[j].norm_squared() / self.count[j])
                .sum()
        }
        fn go(&mut self, i: usize, used: usize) {
            let cost = self.cost();
            if cost >= self.best {
                return;
            }
            // not enough points left to open the remaining groups
            if self.k - used > self.points.len() - i {
                return;
            }
            if i == self.points.len() {
                self.best = cost;
                self.best_labels = self.labels.clone();
                return;
            }
            let p = self.points[i];
            for j in 0..(used + 1).min(self.k) {
                self.count[j] += 1.0;
                self.sum[j] += p;
                self.sq[j] += p.norm_squared();
                self.labels.push(j);
                self.go(i + 1, used.max(j + 1));
                self.labels.pop();
                self.count[j] -= 1.0;
                self.sum[j] -= p;
                self.sq[j] -= p.norm_squared();
            }
        }
    }
    let mut s = Search {
        points,
        k,
        count: vec![0.0; k],
        sum: vec![Vector3::zeros(); k],
        sq: vec![0.0; k],
        labels: Vec::new(),
        best: upper,
        best_labels: Vec::new(),
    };
    s.go(0, 0);
    (s.best, s.best_labels)
}

/// Relabels so that groups are numbered by first appearance.
pub fn canonical(labels: &[usize]) -> Vec<usize> {
    let mut map = std::collections::HashMap::new();
    labels
        .iter()
        .map(|l| {
            let n = map.len();
            *map.entry(*l).or_insert(n)
        })
        .collect()
}

/// 30 points around three centers 10 apart, spread ±0.5, with the
/// generating labels.
pub fn three_blobs(seed: u64) -> (Vec<Vector3<f64>>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centers = [
        Vector3::new(0.0, 0.0, 0.0),
        Vector3::new(10.0, 0.0, 0.0),
        Vector3::new(0.0, 10.0, 3.0),
    ];
    let spread = 0.5;
    let mut points = Vec::new();
    let mut truth = Vec::new();
    for i in 0..30 {
        let c = i % 3;
        let offset = Vector3::from_fn(|_, _| rng.gen_range(-spread..spread));
        points.push(centers[c] + offset);
        truth.push(c);
    }
    (points, truth)
}
