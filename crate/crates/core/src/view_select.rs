//! K-means over camera centers and per-cluster reference view selection.

use std::fmt::Write as _;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub const MAX_LLOYD_ITERS: usize = 100;

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterAssignment {
    /// Cluster index per input point.
    pub labels: Vec<usize>,
    pub centroids: Vec<Vector3<f64>>,
}

impl ClusterAssignment {
    pub fn k(&self) -> usize {
        self.centroids.len()
    }

    pub fn members(&self, cluster: usize) -> impl Iterator<Item = usize> + '_ {
        self.labels
            .iter()
            .enumerate()
            .filter(move |(_, &l)| l == cluster)
            .map(|(i, _)| i)
    }
}

/// One reference view id per cluster, in cluster order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReferenceSet {
    pub reference_view_ids: Vec<u32>,
}

/// Within-cluster sum of squared distances.
pub fn wcss(points: &[Vector3<f64>], a: &ClusterAssignment) -> f64 {
    points
        .iter()
        .zip(&a.labels)
        .map(|(p, &l)| (p - a.centroids[l]).norm_squared())
        .sum()
}

fn nearest(p: &Vector3<f64>, centroids: &[Vector3<f64>]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (j, c) in centroids.iter().enumerate() {
        let d = (p - c).norm_squared();
        // strict comparison keeps the lower index on ties
        if d < best_d {
            best_d = d;
            best = j;
        }
    }
    best
}

fn distinct_count(points: &[Vector3<f64>]) -> usize {
    let mut seen: Vec<&Vector3<f64>> = Vec::new();
    for p in points {
        if !seen.contains(&p) {
            seen.push(p);
        }
    }
    seen.len()
}

fn plus_plus_init(points: &[Vector3<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vector3<f64>> {
    let mut centroids = vec![points[rng.gen_range(0..points.len())]];
    let mut d2: Vec<f64> = points
        .iter()
        .map(|p| (p - centroids[0]).norm_squared())
        .collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let mut target = rng.gen::<f64>() * total;
        let mut pick = d2.iter().rposition(|&d| d > 0.0).unwrap_or(0);
        for (i, &d) in d2.iter().enumerate() {
            if d <= 0.0 {
                continue;
            }
            if target < d {
                pick = i;
                break;
            }
            target -= d;
        }
        let c = points[pick];
        for (slot, p) in d2.iter_mut().zip(points) {
            *slot = slot.min((p - c).norm_squared());
        }
        centroids.push(c);
    }
    centroids
}

fn update_centroids(points: &[Vector3<f64>], labels: &[usize], centroids: &mut [Vector3<f64>]) {
    let k = centroids.len();
    let mut sums = vec![Vector3::zeros(); k];
    let mut counts = vec![0usize; k];
    for (p, &l) in points.iter().zip(labels) {
        sums[l] += p;
        counts[l] += 1;
    }
    for j in 0..k {
        if counts[j] > 0 {
            centroids[j] = sums[j] / counts[j] as f64;
        }
    }
}

/// Gives each empty cluster the point farthest from its current centroid.
fn repair_empty(points: &[Vector3<f64>], labels: &mut [usize], centroids: &mut [Vector3<f64>]) {
    let k = centroids.len();
    loop {
        let mut counts = vec![0usize; k];
        for &l in labels.iter() {
            counts[l] += 1;
        }
        let Some(empty) = counts.iter().position(|&c| c == 0) else {
            return;
        };
        let mut far = None;
        let mut far_d = -1.0;
        for (i, p) in points.iter().enumerate() {
            if counts[labels[i]] < 2 {
                continue;
            }
            let d = (p - centroids[labels[i]]).norm_squared();
            if d > far_d {
                far_d = d;
                far = Some(i);
            }
        }
        let Some(i) = far else { return };
        labels[i] = empty;
        centroids[empty] = points[i];
        update_centroids(points, labels, centroids);
    }
}

/// Seeded k-means++ followed by Lloyd iterations. Also returns the
/// within-cluster sum of squares after every update step.
pub fn kmeans_with_trace(
    points: &[Vector3<f64>],
    k: usize,
    seed: u64,
) -> Result<(ClusterAssignment, Vec<f64>)> {
    if k == 0 {
        return Err(Error::Invalid("k must be at least 1".into()));
    }
    let distinct = distinct_count(points);
    if distinct < k {
        return Err(Error::Invalid(format!(
            "k-means needs {k} distinct points, got {distinct}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = plus_plus_init(points, k, &mut rng);
    let mut labels: Vec<usize> = vec![usize::MAX; points.len()];
    let mut trace = Vec::new();
    for _ in 0..MAX_LLOYD_ITERS {
        let next: Vec<usize> = points.iter().map(|p| nearest(p, &centroids)).collect();
        if next == labels {
            break;
        }
        labels = next;
        update_centroids(points, &labels, &mut centroids);
        repair_empty(points, &mut labels, &mut centroids);
        let a = ClusterAssignment {
            labels: labels.clone(),
            centroids: centroids.clone(),
        };
        trace.push(wcss(points, &a));
    }
    Ok((ClusterAssignment { labels, centroids }, trace))
}

pub fn kmeans(points: &[Vector3<f64>], k: usize, seed: u64) -> Result<ClusterAssignment> {
    kmeans_with_trace(points, k, seed).map(|(a, _)| a)
}

/// Per cluster, the member whose center is nearest the centroid; ties go to
/// the lowest view id.
pub fn select_references(
    assignment: &ClusterAssignment,
    centers: &[Vector3<f64>],
    view_ids: &[u32],
) -> ReferenceSet {
    let reference_view_ids = (0..assignment.k())
        .map(|j| {
            assignment
                .members(j)
                .map(|i| ((centers[i] - assignment.centroids[j]).norm(), view_ids[i]))
                .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
                .map(|(_, id)| id)
                .expect("every cluster has a member")
        })
        .collect();
    ReferenceSet { reference_view_ids }
}

/// Clustering of a scene's views with their reference views.
#[derive(Debug, Clone, PartialEq)]
pub struct Clustering {
    pub view_ids: Vec<u32>,
    pub assignment: ClusterAssignment,
    pub references: ReferenceSet,
}

impl Clustering {
    pub fn compute(view_ids: &[u32], centers: &[Vector3<f64>], k: usize, seed: u64) -> Result<Self> {
        if view_ids.len() != centers.len() {
            return Err(Error::Dimension("one camera center per view is required".into()));
        }
        let assignment = kmeans(centers, k, seed)?;
        let references = select_references(&assignment, centers, view_ids);
        Ok(Self {
            view_ids: view_ids.to_vec(),
            assignment,
            references,
        })
    }

    /// Cluster label of a clustered view.
    pub fn assign_cluster(&self, view_id: u32) -> Result<usize> {
        self.view_ids
            .iter()
            .position(|&v| v == view_id)
            .map(|i| self.assignment.labels[i])
            .ok_or_else(|| Error::Invalid(format!("view {view_id} was not clustered")))
    }

    pub fn reference_for(&self, view_id: u32) -> Result<u32> {
        Ok(self.references.reference_view_ids[self.assign_cluster(view_id)?])
    }

    pub fn is_reference(&self, view_id: u32) -> bool {
        self.references.reference_view_ids.contains(&view_id)
    }

    /// `view_id cluster_id is_reference` per line, in view order.
    pub fn report(&self) -> String {
        let mut s = String::new();
        for (i, &id) in self.view_ids.iter().enumerate() {
            let _ = writeln!(
                s,
                "{id} {} {}",
                self.assignment.labels[i],
                u8::from(self.is_reference(id))
            );
        }
        s
    }
}
