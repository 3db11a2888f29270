use serde::{Deserialize, Serialize};

use super::{hit_order, SearchHit};
use crate::metric::{l2_sq, Points};

/// Exhaustive scan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlatIndex {
    points: Points,
}

impl FlatIndex {
    pub fn new(points: Points) -> Self {
        Self { points }
    }

    pub fn points(&self) -> &Points {
        &self.points
    }

    pub fn search(&self, q: &[f64], k: usize) -> Vec<SearchHit> {
        let mut hits: Vec<SearchHit> = self
            .points
            .rows()
            .enumerate()
            .map(|(id, p)| SearchHit {
                id,
                distance: l2_sq(p, q),
            })
            .collect();
        if k < hits.len() {
            hits.select_nth_unstable_by(k - 1, hit_order);
            hits.truncate(k);
        }
        hits.sort_unstable_by(hit_order);
        for h in &mut hits {
            h.distance = h.distance.sqrt();
        }
        hits
    }
}
