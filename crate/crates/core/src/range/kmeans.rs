use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::metric::{l2_sq, Points};

/// Centroids and the number of points assigned to each.
#[derive(Debug, Clone, PartialEq)]
pub struct Clustering {
    pub centroids: Points,
    pub sizes: Vec<usize>,
}

fn nearest(p: &[f64], centroids: &Points) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centroids.rows().enumerate() {
        let d = l2_sq(p, c);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

/// Seeded k-means++ initialization followed by Lloyd iterations.
pub fn kmeans(points: &Points, k: usize, max_iter: usize, seed: u64) -> Clustering {
    let n = points.len();
    let k = k.clamp(1, n.max(1));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = Points::with_capacity(points.dim(), k);
    centroids.push(points.row(rng.gen_range(0..n)));
    let mut d2: Vec<f64> = points.rows().map(|p| l2_sq(p, centroids.row(0))).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        if total == 0.0 {
            break;
        }
        let mut target = rng.gen_range(0.0..total);
        let mut pick = n - 1;
        for (i, &w) in d2.iter().enumerate() {
            if target < w {
                pick = i;
                break;
            }
            target -= w;
        }
        centroids.push(points.row(pick));
        let c = centroids.len() - 1;
        for (i, p) in points.rows().enumerate() {
            d2[i] = d2[i].min(l2_sq(p, centroids.row(c)));
        }
    }

    let k = centroids.len();
    let dim = points.dim();
    let mut assign = vec![usize::MAX; n];
    for _ in 0..max_iter {
        let next: Vec<usize> = (0..n)
            .into_par_iter()
            .map(|i| nearest(points.row(i), &centroids).0)
            .collect();
        if next == assign {
            break;
        }
        assign = next;
        let mut sums = vec![0.0; k * dim];
        let mut counts = vec![0usize; k];
        for (i, &a) in assign.iter().enumerate() {
            counts[a] += 1;
            for (s, x) in sums[a * dim..(a + 1) * dim].iter_mut().zip(points.row(i)) {
                *s += x;
            }
        }
        let mut updated = Points::with_capacity(dim, k);
        for j in 0..k {
            if counts[j] == 0 {
                updated.push(centroids.row(j));
            } else {
                let mean: Vec<f64> = sums[j * dim..(j + 1) * dim]
                    .iter()
                    .map(|s| s / counts[j] as f64)
                    .collect();
                updated.push(&mean);
            }
        }
        centroids = updated;
    }
    let mut sizes = vec![0usize; k];
    for p in points.rows() {
        sizes[nearest(p, &centroids).0] += 1;
    }
    Clustering { centroids, sizes }
}
