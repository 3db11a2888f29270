//! Per-class geometry of the fused space and the candidate counts derived from it.
//!
//! For every attribute class `a` (or attribute combination in the multi-attribute
//! case) we keep the member count `N_a`, an enclosing radius `R_a` around the class
//! centroid, and the minimum cross-class distance `d_min(a, b)`. The separation
//! metric `gamma_a = min_b d_min(a, b) / R_a - 1` then sizes the candidate list:
//!
//! ```text
//! k' = min(k, N_a)                                              if N_a = 1 or R_a = 0
//! k' = ceil(k * (1 + ln(1/eps) / (gamma_a^2 F) * (N - N_a) / N_a))   otherwise
//! ```
//!
//! with `F = 1` for a single attribute. Counts are capped at `N`, and a
//! non-positive `gamma_a` (overlapping classes) yields `N` directly.
//!
//! For large `gamma` the expected count over a query distribution behaves like
//! `k * (1 + sum_a P(a) * min(eps / N_a, (N - N_a) / N_a))`; we compute the exact
//! weighted sum instead.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metric::{l2, l2_sq, Points};
use crate::record::AttrKey;

/// Geometry of one class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassGeometry {
    pub count: usize,
    /// Max distance from the class centroid to a member; zero iff all members coincide.
    pub radius: f64,
    pub centroid: Vec<f64>,
    /// Separation metric; `+inf` for singleton or zero-radius classes, or when no other
    /// class exists.
    pub gamma: f64,
}

/// Class statistics keyed by `K`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterStats<K: Ord> {
    keys: Vec<K>,
    index: BTreeMap<K, usize>,
    classes: Vec<ClassGeometry>,
    /// Row-major `C x C` matrix of minimum cross-class distances; diagonal is `+inf`.
    d_min: Vec<f64>,
    total: usize,
}

impl<K: Ord + Clone> ClusterStats<K> {
    /// Computes statistics for `fused[i]` belonging to class `classes[i]`.
    pub fn compute(fused: &Points, classes: &[K]) -> Result<Self> {
        if fused.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if fused.len() != classes.len() {
            return Err(Error::dim(format!(
                "{} points but {} class labels",
                fused.len(),
                classes.len()
            )));
        }
        let mut keys: Vec<K> = Vec::new();
        let mut index = BTreeMap::new();
        let labels: Vec<usize> = classes
            .iter()
            .map(|k| {
                *index.entry(k.clone()).or_insert_with(|| {
                    keys.push(k.clone());
                    keys.len() - 1
                })
            })
            .collect();
        let c = keys.len();
        let mut members: Vec<Vec<usize>> = vec![Vec::new(); c];
        for (i, &l) in labels.iter().enumerate() {
            members[l].push(i);
        }

        let dim = fused.dim();
        let geoms: Vec<(usize, f64, Vec<f64>)> = members
            .par_iter()
            .map(|ids| {
                let mut centroid = vec![0.0; dim];
                for &i in ids {
                    for (s, x) in centroid.iter_mut().zip(fused.row(i)) {
                        *s += x;
                    }
                }
                let n = ids.len() as f64;
                centroid.iter_mut().for_each(|s| *s /= n);
                let first = fused.row(ids[0]);
                let coincide = ids.iter().all(|&i| fused.row(i) == first);
                let radius = if coincide {
                    0.0
                } else {
                    ids.iter()
                        .map(|&i| l2(fused.row(i), &centroid))
                        .fold(0.0, f64::max)
                };
                (ids.len(), radius, centroid)
            })
            .collect();

        let rows: Vec<Vec<f64>> = (0..c)
            .into_par_iter()
            .map(|a| {
                let mut row = vec![f64::INFINITY; c];
                for &i in &members[a] {
                    let x = fused.row(i);
                    for (j, &lj) in labels.iter().enumerate() {
                        if lj != a {
                            let d = l2_sq(x, fused.row(j));
                            if d < row[lj] {
                                row[lj] = d;
                            }
                        }
                    }
                }
                row.iter_mut().for_each(|d| *d = d.sqrt());
                row
            })
            .collect();
        let d_min: Vec<f64> = rows.into_iter().flatten().collect();

        let classes = geoms
            .into_iter()
            .enumerate()
            .map(|(a, (count, radius, centroid))| {
                let gamma = if count == 1 || radius == 0.0 {
                    f64::INFINITY
                } else {
                    let nearest = d_min[a * c..(a + 1) * c]
                        .iter()
                        .copied()
                        .fold(f64::INFINITY, f64::min);
                    nearest / radius - 1.0
                };
                ClassGeometry {
                    count,
                    radius,
                    centroid,
                    gamma,
                }
            })
            .collect();

        Ok(Self {
            keys,
            index,
            classes,
            d_min,
            total: fused.len(),
        })
    }

    /// Assembles statistics from precomputed parts; `d_min` is a row-major `C x C`
    /// matrix. Gamma values are taken as given.
    pub fn from_parts(keys: Vec<K>, classes: Vec<ClassGeometry>, d_min: Vec<f64>) -> Result<Self> {
        let c = keys.len();
        if classes.len() != c || d_min.len() != c * c {
            return Err(Error::dim("inconsistent class statistics"));
        }
        let index: BTreeMap<K, usize> = keys
            .iter()
            .cloned()
            .enumerate()
            .map(|(i, k)| (k, i))
            .collect();
        if index.len() != c {
            return Err(Error::arg("duplicate class keys"));
        }
        let total = classes.iter().map(|g| g.count).sum();
        Ok(Self {
            keys,
            index,
            classes,
            d_min,
            total,
        })
    }

    pub fn total(&self) -> usize {
        self.total
    }

    pub fn num_classes(&self) -> usize {
        self.keys.len()
    }

    pub fn keys(&self) -> &[K] {
        &self.keys
    }

    pub fn class_id(&self, key: &K) -> Option<usize> {
        self.index.get(key).copied()
    }

    pub fn class(&self, id: usize) -> &ClassGeometry {
        &self.classes[id]
    }

    pub fn get(&self, key: &K) -> Option<&ClassGeometry> {
        self.class_id(key).map(|i| &self.classes[i])
    }

    /// Minimum distance between members of classes `a` and `b` (`+inf` when `a == b`).
    pub fn d_min(&self, a: usize, b: usize) -> f64 {
        self.d_min[a * self.keys.len() + b]
    }

    fn candidates(&self, k: usize, eps: f64, key: &K, levels: usize) -> Result<usize> {
        let g = self.get(key).ok_or(Error::UnknownAttribute)?;
        candidate_count(k, eps, self.total, g.count, g.radius, g.gamma, levels)
    }
}

/// Per-attribute-value statistics of a single-attribute index.
pub type SingleStats = ClusterStats<AttrKey>;

/// Statistics keyed by attribute combinations after `levels` chained transforms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiClusterStats {
    pub levels: usize,
    pub stats: ClusterStats<AttrKey>,
}

impl MultiClusterStats {
    pub fn compute(fused: &Points, combos: &[AttrKey], levels: usize) -> Result<Self> {
        if levels < 1 {
            return Err(Error::arg(
                "multi-attribute statistics need at least one attribute",
            ));
        }
        Ok(Self {
            levels,
            stats: ClusterStats::compute(fused, combos)?,
        })
    }
}

/// The candidate-count formula on raw class figures.
pub fn candidate_count(
    k: usize,
    eps: f64,
    total: usize,
    class_count: usize,
    radius: f64,
    gamma: f64,
    levels: usize,
) -> Result<usize> {
    if k < 1 {
        return Err(Error::arg("k must be at least 1"));
    }
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(Error::arg(format!("eps must lie in (0, 1], got {eps}")));
    }
    if levels < 1 {
        return Err(Error::arg("levels must be at least 1"));
    }
    let floor = k.min(class_count);
    if class_count <= 1 || radius == 0.0 {
        return Ok(floor);
    }
    if !(gamma > 0.0) {
        return Ok(total.max(floor));
    }
    let log_term = -eps.ln();
    let ratio = (total - class_count) as f64 / class_count as f64;
    let raw = k as f64 * (1.0 + log_term / (gamma * gamma * levels as f64) * ratio);
    // Absorb rounding noise when the product lands on an integer.
    let kp = (raw * (1.0 - 1e-12)).ceil();
    if !kp.is_finite() || kp >= total as f64 {
        return Ok(total.max(floor));
    }
    Ok((kp as usize).max(floor))
}

/// Candidate count for a single-attribute query on class `key`.
pub fn candidate_size_single(
    k: usize,
    eps: f64,
    stats: &SingleStats,
    key: &AttrKey,
) -> Result<usize> {
    stats.candidates(k, eps, key, 1)
}

/// Candidate count for an attribute combination after `levels` chained transforms.
pub fn candidate_size_multi(
    k: usize,
    eps: f64,
    stats: &MultiClusterStats,
    combo: &AttrKey,
    levels: usize,
) -> Result<usize> {
    if levels != stats.levels {
        return Err(Error::arg(format!(
            "statistics built for {} attributes, query names {levels}",
            stats.levels
        )));
    }
    stats.stats.candidates(k, eps, combo, levels)
}

/// Probability-weighted mean candidate count over a class distribution.
pub fn expected_candidate_size(
    k: usize,
    eps: f64,
    stats: &SingleStats,
    class_probs: &[(AttrKey, f64)],
) -> Result<f64> {
    let mass: f64 = class_probs.iter().map(|(_, p)| p).sum();
    if (mass - 1.0).abs() > 1e-9 || class_probs.iter().any(|(_, p)| *p < 0.0) {
        return Err(Error::arg(format!(
            "class probabilities must sum to 1, got {mass}"
        )));
    }
    let mut acc = 0.0;
    for (key, p) in class_probs {
        acc += p * candidate_size_single(k, eps, stats, key)? as f64;
    }
    Ok(acc)
}

/// Candidate count for an attribute value or combination absent from the index:
/// `ceil(k (1 + ln(1/eps)))`, clamped to `[min(k, n), n]`.
pub fn fallback_candidate_count(k: usize, eps: f64, n: usize) -> Result<usize> {
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(Error::arg(format!("eps must lie in (0, 1], got {eps}")));
    }
    let raw = (k as f64 * (1.0 - eps.ln()) * (1.0 - 1e-12)).ceil();
    Ok((raw as usize).clamp(k.min(n), n))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn key(x: f64) -> AttrKey {
        AttrKey::of(&[x])
    }

    fn synthetic(gamma: f64, total: usize, na: usize) -> SingleStats {
        let g = |count, gamma| ClassGeometry {
            count,
            radius: 1.0,
            centroid: vec![0.0],
            gamma,
        };
        ClusterStats::from_parts(
            vec![key(0.0), key(1.0)],
            vec![g(na, gamma), g(total - na, gamma)],
            vec![f64::INFINITY, gamma + 1.0, gamma + 1.0, f64::INFINITY],
        )
        .unwrap()
    }

    #[test]
    fn zero_radius_class() {
        let p = Points::from_rows(2, &[[1.0, 1.0], [1.0, 1.0]]).unwrap();
        let s = ClusterStats::compute(&p, &[key(0.0), key(0.0)]).unwrap();
        assert_eq!(s.class(0).radius, 0.0);
        assert_eq!(s.class(0).count, 2);
        assert_eq!(candidate_size_single(10, 0.05, &s, &key(0.0)).unwrap(), 2);
    }

    #[test]
    fn singleton_classes() {
        let p = Points::from_rows(2, &[[0.0, 0.0], [3.0, 4.0]]).unwrap();
        let s = ClusterStats::compute(&p, &[key(0.0), key(1.0)]).unwrap();
        assert_eq!(s.d_min(0, 1), 5.0);
        assert_eq!(s.d_min(1, 0), 5.0);
        assert!(s.class(0).gamma.is_infinite());
        assert_eq!(candidate_size_single(10, 0.05, &s, &key(0.0)).unwrap(), 1);
    }

    #[test]
    fn empty_input() {
        assert!(matches!(
            ClusterStats::<AttrKey>::compute(&Points::new(2), &[]),
            Err(Error::EmptyDataset)
        ));
    }

    #[test]
    fn stats_match_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 500;
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..3).map(|_| rng.gen_range(-5.0..5.0)).collect())
            .collect();
        let labels: Vec<usize> = (0..n).map(|_| rng.gen_range(0..5)).collect();
        let keys: Vec<AttrKey> = labels.iter().map(|&l| key(l as f64)).collect();
        let s = ClusterStats::compute(&Points::from_rows(3, &rows).unwrap(), &keys).unwrap();
        for a in 0..5usize {
            for b in 0..5usize {
                if a == b {
                    continue;
                }
                let mut best = f64::INFINITY;
                for i in 0..n {
                    for j in 0..n {
                        if labels[i] == a && labels[j] == b {
                            let d = rows[i]
                                .iter()
                                .zip(&rows[j])
                                .map(|(x, y)| (x - y) * (x - y))
                                .sum::<f64>()
                                .sqrt();
                            best = best.min(d);
                        }
                    }
                }
                let ia = s.class_id(&key(a as f64)).unwrap();
                let ib = s.class_id(&key(b as f64)).unwrap();
                assert_eq!(s.d_min(ia, ib), best);
            }
            let members: Vec<&Vec<f64>> = (0..n)
                .filter(|&i| labels[i] == a)
                .map(|i| &rows[i])
                .collect();
            let g = s.get(&key(a as f64)).unwrap();
            assert_eq!(g.count, members.len());
            let mut c = [0.0; 3];
            for m in &members {
                for t in 0..3 {
                    c[t] += m[t];
                }
            }
            c.iter_mut().for_each(|x| *x /= members.len() as f64);
            let r = members
                .iter()
                .map(|m| {
                    m.iter()
                        .zip(&c)
                        .map(|(x, y)| (x - y) * (x - y))
                        .sum::<f64>()
                        .sqrt()
                })
                .fold(0.0, f64::max);
            assert!((g.radius - r).abs() < 1e-12);
        }
        assert_eq!(s.total(), n);
    }

    #[test]
    fn formula_examples() {
        let s = synthetic(1.0, 1000, 100);
        let e = (-1.0f64).exp();
        assert_eq!(candidate_size_single(10, e, &s, &key(0.0)).unwrap(), 100);
        assert_eq!(candidate_size_single(10, 1.0, &s, &key(0.0)).unwrap(), 10);
        let m = MultiClusterStats {
            levels: 2,
            stats: s.clone(),
        };
        assert_eq!(candidate_size_multi(10, e, &m, &key(0.0), 2).unwrap(), 55);
        assert!(candidate_size_multi(10, e, &m, &key(0.0), 1).is_err());
        assert!(matches!(
            candidate_size_single(10, e, &s, &key(9.0)),
            Err(Error::UnknownAttribute)
        ));
    }

    #[test]
    fn full_mass_class_gives_k() {
        let g = ClassGeometry {
            count: 50,
            radius: 1.0,
            centroid: vec![0.0],
            gamma: f64::INFINITY,
        };
        let s = ClusterStats::from_parts(vec![key(0.0)], vec![g], vec![f64::INFINITY]).unwrap();
        let m = MultiClusterStats {
            levels: 3,
            stats: s,
        };
        assert_eq!(
            candidate_size_multi(10, 0.01, &m, &key(0.0), 3).unwrap(),
            10
        );
    }

    #[test]
    fn expected_size() {
        let s = synthetic(1.0, 1000, 100);
        let e = (-1.0f64).exp();
        let single = expected_candidate_size(10, e, &s, &[(key(0.0), 1.0)]).unwrap();
        assert_eq!(single, 100.0);
        assert!(expected_candidate_size(10, e, &s, &[(key(0.0), 0.5)]).is_err());
        assert!(matches!(
            expected_candidate_size(10, e, &s, &[(key(7.0), 1.0)]),
            Err(Error::UnknownAttribute)
        ));
        // Two classes with the same k' give that k'.
        let g = |c| ClassGeometry {
            count: c,
            radius: 1.0,
            centroid: vec![0.0],
            gamma: 2.0,
        };
        let s2 = ClusterStats::from_parts(
            vec![key(0.0), key(1.0)],
            vec![g(500), g(500)],
            vec![f64::INFINITY, 3.0, 3.0, f64::INFINITY],
        )
        .unwrap();
        let c = candidate_size_single(10, 0.05, &s2, &key(0.0)).unwrap() as f64;
        let v =
            expected_candidate_size(10, 0.05, &s2, &[(key(0.0), 0.3), (key(1.0), 0.7)]).unwrap();
        assert!((v - c).abs() < 1e-12);
    }

    #[test]
    fn expected_size_zipf_matches_direct_sum() {
        let counts = [400usize, 200, 133, 100, 80];
        let gammas = [0.5, 1.0, 1.5, 2.0, 3.0];
        let total: usize = counts.iter().sum();
        let classes = counts
            .iter()
            .zip(&gammas)
            .map(|(&c, &g)| ClassGeometry {
                count: c,
                radius: 1.0,
                centroid: vec![0.0],
                gamma: g,
            })
            .collect();
        let keys: Vec<AttrKey> = (0..5).map(|i| key(i as f64)).collect();
        let mut dm = vec![1.0; 25];
        for i in 0..5 {
            dm[i * 6] = f64::INFINITY;
        }
        let s = ClusterStats::from_parts(keys.clone(), classes, dm).unwrap();
        let h: f64 = (1..=5).map(|r| 1.0 / r as f64).sum();
        let probs: Vec<(AttrKey, f64)> = keys
            .iter()
            .enumerate()
            .map(|(i, k)| (k.clone(), 1.0 / ((i + 1) as f64 * h)))
            .collect();
        let direct: f64 = (0..5)
            .map(|i| {
                let ratio = (total - counts[i]) as f64 / counts[i] as f64;
                let raw = 10.0 * (1.0 + 0.05f64.recip().ln() / (gammas[i] * gammas[i]) * ratio);
                probs[i].1 * raw.ceil().min(total as f64)
            })
            .sum();
        let got = expected_candidate_size(10, 0.05, &s, &probs).unwrap();
        assert!((got - direct).abs() < 1e-9, "{got} vs {direct}");
    }

    #[test]
    fn overlapping_classes_take_everything() {
        assert_eq!(
            candidate_count(10, 0.05, 1000, 100, 1.0, -0.5, 1).unwrap(),
            1000
        );
        assert_eq!(
            candidate_count(10, 0.05, 1000, 100, 1.0, 0.0, 1).unwrap(),
            1000
        );
    }

    proptest::proptest! {
        #[test]
        fn monotone_in_eps_and_gamma(
            k in 1usize..50,
            na in 2usize..500,
            extra in 0usize..5000,
            g1 in 0.05f64..20.0,
            dg in 0.0f64..20.0,
            e1 in 0.001f64..1.0,
            de in 0.0f64..1.0,
        ) {
            let total = na + extra;
            let e2 = (e1 + de).min(1.0);
            let a = candidate_count(k, e1, total, na, 1.0, g1, 1).unwrap();
            let b = candidate_count(k, e2, total, na, 1.0, g1, 1).unwrap();
            proptest::prop_assert!(b <= a);
            let c = candidate_count(k, e1, total, na, 1.0, g1 + dg, 1).unwrap();
            proptest::prop_assert!(c <= a);
            proptest::prop_assert!(c >= k.min(na));
            let far = candidate_count(k, e1, total, na, 1.0, 1e9, 1).unwrap();
            proptest::prop_assert_eq!(far, k.min(total).max(k.min(na)));
        }
    }
}
