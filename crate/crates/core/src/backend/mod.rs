//! Nearest-neighbor backends over fused vectors.
//!
//! [`Backend::Flat`] scans every point and is exact; it doubles as the oracle for
//! the approximate [`Backend::Graph`] index. Both return hits sorted by ascending
//! distance with ties broken by ascending id.

mod flat;
mod hnsw;

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

pub use flat::FlatIndex;
pub use hnsw::HnswIndex;

use crate::error::{Error, Result};
use crate::metric::Points;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BackendKind {
    Flat,
    Graph,
}

impl std::str::FromStr for BackendKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "flat" => Ok(BackendKind::Flat),
            "graph" | "hnsw" => Ok(BackendKind::Graph),
            other => Err(Error::arg(format!("unknown backend {other:?}"))),
        }
    }
}

/// Build and search parameters of the graph backend.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GraphParams {
    /// Maximum out-degree on upper layers; layer 0 allows twice as many.
    pub max_degree: usize,
    pub ef_construction: usize,
    /// Lower bound on the search beam; the effective beam is `max(k, ef_search)`.
    pub ef_search: usize,
    pub seed: u64,
}

impl Default for GraphParams {
    fn default() -> Self {
        Self {
            max_degree: 16,
            ef_construction: 200,
            ef_search: 64,
            seed: 0x5eed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BackendConfig {
    pub kind: BackendKind,
    pub graph: GraphParams,
}

impl BackendConfig {
    pub fn flat() -> Self {
        Self {
            kind: BackendKind::Flat,
            graph: GraphParams::default(),
        }
    }

    pub fn graph(graph: GraphParams) -> Self {
        Self {
            kind: BackendKind::Graph,
            graph,
        }
    }
}

impl Default for BackendConfig {
    fn default() -> Self {
        Self::flat()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchHit {
    pub id: usize,
    pub distance: f64,
}

pub(crate) fn hit_order(a: &SearchHit, b: &SearchHit) -> Ordering {
    a.distance.total_cmp(&b.distance).then(a.id.cmp(&b.id))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Backend {
    Flat(FlatIndex),
    Graph(HnswIndex),
}

impl Backend {
    pub fn build(points: Points, config: &BackendConfig) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if points.dim() == 0 {
            return Err(Error::dim("points must have dimension >= 1"));
        }
        Ok(match config.kind {
            BackendKind::Flat => Backend::Flat(FlatIndex::new(points)),
            BackendKind::Graph => Backend::Graph(HnswIndex::build(points, config.graph)),
        })
    }

    /// Builds from rows, rejecting rows of differing dimension.
    pub fn build_rows<R: AsRef<[f64]>>(rows: &[R], config: &BackendConfig) -> Result<Self> {
        let first = rows.first().ok_or(Error::EmptyDataset)?;
        let dim = first.as_ref().len();
        let points = Points::from_rows(dim, rows)
            .ok_or_else(|| Error::dim("points have differing dimensions"))?;
        Self::build(points, config)
    }

    pub fn kind(&self) -> BackendKind {
        match self {
            Backend::Flat(_) => BackendKind::Flat,
            Backend::Graph(_) => BackendKind::Graph,
        }
    }

    pub fn points(&self) -> &Points {
        match self {
            Backend::Flat(f) => f.points(),
            Backend::Graph(g) => g.points(),
        }
    }

    pub fn len(&self) -> usize {
        self.points().len()
    }

    pub fn is_empty(&self) -> bool {
        self.points().is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points().dim()
    }

    /// The `min(k, N)` nearest points to `q`.
    pub fn search(&self, q: &[f64], k: usize) -> Result<Vec<SearchHit>> {
        if k < 1 {
            return Err(Error::arg("k must be at least 1"));
        }
        if q.len() != self.dim() {
            return Err(Error::dim(format!(
                "query dimension {} != index dimension {}",
                q.len(),
                self.dim()
            )));
        }
        Ok(match self {
            Backend::Flat(f) => f.search(q, k),
            Backend::Graph(g) => g.search(q, k, g.params().ef_search.max(k)),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_points(n: usize, dim: usize, seed: u64) -> Points {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = Points::with_capacity(dim, n);
        for _ in 0..n {
            let row: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
            p.push(&row);
        }
        p
    }

    #[test]
    fn build_small_and_empty() {
        let b = Backend::build_rows(
            &[[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]],
            &BackendConfig::flat(),
        )
        .unwrap();
        assert_eq!(b.len(), 3);
        let empty: [[f64; 2]; 0] = [];
        assert!(matches!(
            Backend::build_rows(&empty, &BackendConfig::flat()),
            Err(Error::EmptyDataset)
        ));
        assert!(matches!(
            Backend::build_rows(&[vec![0.0, 0.0], vec![1.0]], &BackendConfig::flat()),
            Err(Error::InvalidDimension(_))
        ));
    }

    #[test]
    fn search_edge_cases() {
        for config in [
            BackendConfig::flat(),
            BackendConfig::graph(GraphParams::default()),
        ] {
            let pts = random_points(50, 4, 3);
            let probe = pts.row(17).to_vec();
            let b = Backend::build(pts, &config).unwrap();
            let hits = b.search(&probe, 3).unwrap();
            assert_eq!(hits[0].id, 17);
            assert_eq!(hits[0].distance, 0.0);
            assert_eq!(b.search(&probe, 80).unwrap().len(), 50);
            assert!(matches!(
                b.search(&probe, 0),
                Err(Error::InvalidArgument(_))
            ));
            assert!(matches!(
                b.search(&probe[..2], 1),
                Err(Error::InvalidDimension(_))
            ));
        }
    }

    #[test]
    fn flat_matches_naive_scan() {
        let pts = random_points(1000, 8, 5);
        let b = Backend::build(pts.clone(), &BackendConfig::flat()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..20 {
            let q: Vec<f64> = (0..8).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let k = rng.gen_range(1..40);
            let mut naive: Vec<(f64, usize)> = (0..pts.len())
                .map(|i| {
                    let d: f64 = pts
                        .row(i)
                        .iter()
                        .zip(&q)
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum();
                    (d.sqrt(), i)
                })
                .collect();
            naive.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let got: Vec<usize> = b.search(&q, k).unwrap().iter().map(|h| h.id).collect();
            let want: Vec<usize> = naive[..k].iter().map(|x| x.1).collect();
            assert_eq!(got, want);
        }
    }

    #[test]
    fn ties_break_by_id() {
        let b =
            Backend::build_rows(&[[1.0], [-1.0], [1.0], [0.0]], &BackendConfig::flat()).unwrap();
        let hits = b.search(&[0.0], 4).unwrap();
        let ids: Vec<usize> = hits.iter().map(|h| h.id).collect();
        assert_eq!(ids, vec![3, 0, 1, 2]);
    }

    #[test]
    fn graph_is_deterministic_under_seed() {
        let pts = random_points(500, 6, 9);
        let a = Backend::build(pts.clone(), &BackendConfig::graph(GraphParams::default())).unwrap();
        let b = Backend::build(pts, &BackendConfig::graph(GraphParams::default())).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn graph_recall_against_flat() {
        let n = 10_000;
        let pts = random_points(n, 16, 21);
        let flat = Backend::build(pts.clone(), &BackendConfig::flat()).unwrap();
        let params = GraphParams {
            ef_search: 128,
            ..GraphParams::default()
        };
        let graph = Backend::build(pts, &BackendConfig::graph(params)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let mut found = 0usize;
        for _ in 0..100 {
            let q: Vec<f64> = (0..16).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let truth: std::collections::HashSet<usize> =
                flat.search(&q, 10).unwrap().iter().map(|h| h.id).collect();
            found += graph
                .search(&q, 10)
                .unwrap()
                .iter()
                .filter(|h| truth.contains(&h.id))
                .count();
        }
        let recall = found as f64 / 1000.0;
        assert!(recall >= 0.95, "recall@10 = {recall}");
    }
}
