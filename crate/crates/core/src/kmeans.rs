//! Lloyd's k-means with k-means++ seeding, deterministic under a seed.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::{axpy, Matrix};

pub const MAX_ITERATIONS: usize = 300;

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult {
    pub assignments: Vec<usize>,
    pub centroids: Matrix,
    pub inertia: f64,
    /// Inertia after every assignment step.
    pub inertia_trace: Vec<f64>,
    pub iterations: usize,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Index of the nearest centroid; ties go to the lowest index.
fn nearest(point: &[f64], centroids: &Matrix) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for c in 0..centroids.rows() {
        let d = sq_dist(point, centroids.row(c));
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

pub fn kmeans(points: &Matrix, k: usize, seed: u64) -> Result<KMeansResult> {
    let n = points.rows();
    if n == 0 {
        return Err(Error::param("points", "empty input"));
    }
    if k == 0 || k > n {
        return Err(Error::param("k", format!("must satisfy 1 <= k <= {n}, got {k}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = plus_plus_seeds(points, k, &mut rng);
    let mut assignments = vec![usize::MAX; n];
    let mut inertia_trace = Vec::new();
    let mut iterations = 0;

    while iterations < MAX_ITERATIONS {
        iterations += 1;
        let mut next: Vec<usize> = Vec::with_capacity(n);
        let mut dists: Vec<f64> = Vec::with_capacity(n);
        for p in points.row_iter() {
            let (c, d) = nearest(p, &centroids);
            next.push(c);
            dists.push(d);
        }
        repair_empty(&mut next, &mut dists, points, &mut centroids);
        inertia_trace.push(dists.iter().sum());
        let stable = next == assignments;
        assignments = next;
        centroids = means(points, &assignments, k);
        if stable {
            break;
        }
    }
    let inertia = points.row_iter().zip(&assignments).map(|(p, &c)| sq_dist(p, centroids.row(c))).sum();
    Ok(KMeansResult { assignments, centroids, inertia, inertia_trace, iterations })
}

fn plus_plus_seeds(points: &Matrix, k: usize, rng: &mut ChaCha8Rng) -> Matrix {
    let n = points.rows();
    let mut chosen = vec![rng.random_range(0..n)];
    let mut d2: Vec<f64> = points.row_iter().map(|p| sq_dist(p, points.row(chosen[0]))).collect();
    while chosen.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.random_range(0.0..total);
            let mut pick = n - 1;
            for (i, &d) in d2.iter().enumerate() {
                if d > 0.0 && target < d {
                    pick = i;
                    break;
                }
                target -= d;
            }
            // floating-point leftovers must not land on a zero-weight point
            if d2[pick] == 0.0 {
                pick = (0..n).rev().find(|&i| d2[i] > 0.0).unwrap_or(pick);
            }
            pick
        } else {
            // all remaining points coincide with a centre
            (0..n).find(|i| !chosen.contains(i)).unwrap_or(0)
        };
        chosen.push(next);
        for (i, p) in points.row_iter().enumerate() {
            d2[i] = d2[i].min(sq_dist(p, points.row(next)));
        }
    }
    points.select_rows(&chosen)
}

/// Gives every empty cluster the point currently farthest from its centroid,
/// taken from a cluster that can spare it.
fn repair_empty(assign: &mut [usize], dists: &mut [f64], points: &Matrix, centroids: &mut Matrix) {
    let k = centroids.rows();
    let mut sizes = vec![0usize; k];
    for &a in assign.iter() {
        sizes[a] += 1;
    }
    for c in 0..k {
        if sizes[c] > 0 {
            continue;
        }
        let mut best: Option<usize> = None;
        for i in 0..assign.len() {
            if sizes[assign[i]] > 1 && best.is_none_or(|b| dists[i] > dists[b]) {
                best = Some(i);
            }
        }
        let Some(i) = best else { break };
        sizes[assign[i]] -= 1;
        assign[i] = c;
        sizes[c] = 1;
        dists[i] = 0.0;
        centroids.row_mut(c).copy_from_slice(points.row(i));
    }
}

fn means(points: &Matrix, assign: &[usize], k: usize) -> Matrix {
    let d = points.cols();
    let mut sums = Matrix::zeros(k, d);
    let mut counts = vec![0usize; k];
    for (p, &a) in points.row_iter().zip(assign) {
        axpy(1.0, p, sums.row_mut(a));
        counts[a] += 1;
    }
    for (c, &cnt) in counts.iter().enumerate() {
        if cnt > 0 {
            sums.row_mut(c).iter_mut().for_each(|v| *v /= cnt as f64);
        }
    }
    sums
}
