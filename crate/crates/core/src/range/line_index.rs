use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::balltree::BallTree;
use crate::error::{Error, Result};
use crate::geometry::{line_similarity, LineSegment, RangeQuery, SimilarityWeights};
use crate::metric::{l2, Points};

/// A pre-indexed range line with its tube radius and local density.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexedLine {
    pub segment: LineSegment,
    pub base_radius: f64,
    pub density: f64,
    /// The sampled query and range the line was built from.
    pub source: RangeQuery,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
enum CellKey {
    /// Zero-length lines.
    Point,
    Direction(Vec<i64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Cell {
    members: Vec<usize>,
    midpoints: BallTree,
}

/// Lines bucketed by direction, with a midpoint ball tree per bucket.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HierarchicalLineIndex {
    nu: f64,
    weights: SimilarityWeights,
    d_max: f64,
    lines: Vec<IndexedLine>,
    cells: BTreeMap<CellKey, Cell>,
}

/// Unit direction with the sign fixed so that the largest-magnitude component is
/// positive; opposite orientations of a line share it.
fn canonical_direction(seg: &LineSegment) -> Option<Vec<f64>> {
    let mut u = seg.direction()?;
    let lead = u
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()).then(b.0.cmp(&a.0)))
        .map(|x| x.0)
        .unwrap_or(0);
    if u[lead] < 0.0 {
        u.iter_mut().for_each(|x| *x = -*x);
    }
    Some(u)
}

fn cell_key(seg: &LineSegment, nu: f64) -> CellKey {
    match canonical_direction(seg) {
        None => CellKey::Point,
        Some(u) => CellKey::Direction(u.iter().map(|x| (x / nu).round() as i64).collect()),
    }
}

/// The cell itself and the cells one step away along a single coordinate.
fn neighboring_cells(key: &CellKey) -> Vec<CellKey> {
    match key {
        CellKey::Point => vec![CellKey::Point],
        CellKey::Direction(k) => {
            let mut out = vec![key.clone()];
            for i in 0..k.len() {
                for step in [-1, 1] {
                    let mut n = k.clone();
                    n[i] += step;
                    out.push(CellKey::Direction(n));
                }
            }
            out
        }
    }
}

/// Similarity that tolerates zero-length segments: two points compare by position
/// alone, a point never matches a proper segment in direction or length.
pub fn pair_similarity(
    s1: &LineSegment,
    s2: &LineSegment,
    w: &SimilarityWeights,
    d_max: f64,
) -> Result<f64> {
    match (s1.is_degenerate(), s2.is_degenerate()) {
        (false, false) => line_similarity(s1, s2, w, d_max),
        (a, b) => {
            w.validate()?;
            let position = (1.0 - l2(&s1.midpoint(), &s2.midpoint()) / d_max).max(0.0);
            let shape = if a && b { w.direction + w.length } else { 0.0 };
            let sim = shape + w.position * position;
            Ok(if s1 == s2 {
                1.0
            } else {
                sim.min(1.0 - f64::EPSILON / 2.0)
            })
        }
    }
}

impl HierarchicalLineIndex {
    pub fn build(
        lines: Vec<IndexedLine>,
        nu: f64,
        weights: SimilarityWeights,
        d_max: f64,
    ) -> Result<Self> {
        if lines.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if !(nu > 0.0 && nu <= std::f64::consts::PI) {
            return Err(Error::arg(format!(
                "angular resolution must lie in (0, pi], got {nu}"
            )));
        }
        if !(d_max > 0.0) {
            return Err(Error::arg(format!("d_max must be > 0, got {d_max}")));
        }
        weights.validate()?;
        let mut groups: BTreeMap<CellKey, Vec<usize>> = BTreeMap::new();
        for (i, l) in lines.iter().enumerate() {
            groups.entry(cell_key(&l.segment, nu)).or_default().push(i);
        }
        let dim = lines[0].segment.dim();
        let cells = groups
            .into_iter()
            .map(|(key, members)| {
                let mut mids = Points::with_capacity(dim, members.len());
                for &m in &members {
                    mids.push(&lines[m].segment.midpoint());
                }
                (
                    key,
                    Cell {
                        members,
                        midpoints: BallTree::new(mids),
                    },
                )
            })
            .collect();
        Ok(Self {
            nu,
            weights,
            d_max,
            lines,
            cells,
        })
    }

    pub fn lines(&self) -> &[IndexedLine] {
        &self.lines
    }

    pub fn line(&self, id: usize) -> &IndexedLine {
        &self.lines[id]
    }

    pub fn len(&self) -> usize {
        self.lines.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lines.is_empty()
    }

    pub fn num_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn d_max(&self) -> f64 {
        self.d_max
    }

    /// Lines sharing the direction cell of `seg`.
    pub fn cell_members(&self, seg: &LineSegment) -> &[usize] {
        self.cells
            .get(&cell_key(seg, self.nu))
            .map(|c| &c.members[..])
            .unwrap_or(&[])
    }

    /// The indexed line most similar to `query` and its similarity.
    ///
    /// Candidates come from the query's direction cell and its neighbors, within
    /// `kappa * |query|` of the query midpoint; the scan stops early once a
    /// similarity above `tau` is seen. With no candidates every line is scanned.
    pub fn find_nearest(&self, query: &LineSegment, tau: f64, kappa: f64) -> Result<(usize, f64)> {
        if query.dim() != self.lines[0].segment.dim() {
            return Err(Error::dim("query line dimension differs from the index"));
        }
        let mid = query.midpoint();
        let radius = kappa * query.length();
        let mut candidates = Vec::new();
        for key in neighboring_cells(&cell_key(query, self.nu)) {
            if let Some(cell) = self.cells.get(&key) {
                candidates.extend(
                    cell.midpoints
                        .within(&mid, radius)
                        .into_iter()
                        .map(|i| cell.members[i]),
                );
            }
        }
        if candidates.is_empty() {
            candidates = (0..self.lines.len()).collect();
        }
        let mut best = (candidates[0], f64::NEG_INFINITY);
        for id in candidates {
            let sim = pair_similarity(query, &self.lines[id].segment, &self.weights, self.d_max)?;
            if sim > best.1 {
                best = (id, sim);
            }
            if best.1 > tau {
                break;
            }
        }
        Ok(best)
    }
}
