//! Layered proximity graph (HNSW).
//!
//! Nodes are inserted in id order with levels drawn from a seeded generator, so a
//! given point set and seed always produce the same graph. Neighbor lists are
//! pruned with the diversity heuristic and back-filled with the closest pruned
//! candidates up to the degree bound.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{GraphParams, SearchHit};
use crate::metric::{l2_sq, Points};

#[derive(Debug, Clone, Copy, PartialEq)]
struct Cand {
    dist: f64,
    id: u32,
}

impl Eq for Cand {}

impl Ord for Cand {
    fn cmp(&self, other: &Self) -> Ordering {
        self.dist
            .total_cmp(&other.dist)
            .then(self.id.cmp(&other.id))
    }
}

impl PartialOrd for Cand {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HnswIndex {
    points: Points,
    params: GraphParams,
    /// `links[node][layer]` holds the neighbor ids of `node` on `layer`.
    links: Vec<Vec<Vec<u32>>>,
    entry: u32,
    top_layer: usize,
}

impl HnswIndex {
    pub fn build(points: Points, params: GraphParams) -> Self {
        let n = points.len();
        let m = params.max_degree.max(2);
        let level_mult = 1.0 / (m as f64).ln();
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
        let mut idx = HnswIndex {
            points,
            params,
            links: Vec::with_capacity(n),
            entry: 0,
            top_layer: 0,
        };
        for id in 0..n {
            let u: f64 = rng.gen_range(f64::EPSILON..1.0);
            let level = ((-u.ln() * level_mult).floor() as usize).min(16);
            idx.insert(id as u32, level);
        }
        idx
    }

    pub fn points(&self) -> &Points {
        &self.points
    }

    pub fn params(&self) -> &GraphParams {
        &self.params
    }

    fn degree_bound(&self, layer: usize) -> usize {
        let m = self.params.max_degree.max(2);
        if layer == 0 {
            2 * m
        } else {
            m
        }
    }

    #[inline]
    fn dist(&self, q: &[f64], id: u32) -> f64 {
        l2_sq(q, self.points.row(id as usize))
    }

    fn insert(&mut self, id: u32, level: usize) {
        self.links.push(vec![Vec::new(); level + 1]);
        if id == 0 {
            self.entry = 0;
            self.top_layer = level;
            return;
        }
        let q = self.points.row(id as usize).to_vec();
        let mut ep = Cand {
            dist: self.dist(&q, self.entry),
            id: self.entry,
        };
        for layer in (level + 1..=self.top_layer).rev() {
            ep = self.greedy(&q, ep, layer);
        }
        let mut entries = vec![ep];
        for layer in (0..=level.min(self.top_layer)).rev() {
            let found = self.search_layer(&q, &entries, self.params.ef_construction.max(1), layer);
            let bound = self.degree_bound(layer);
            let chosen = self.select(&found, self.params.max_degree.max(2));
            self.links[id as usize][layer] = chosen.iter().map(|c| c.id).collect();
            for c in &chosen {
                self.link_back(c.id, id, layer, bound);
            }
            entries = found;
        }
        if level > self.top_layer {
            self.top_layer = level;
            self.entry = id;
        }
    }

    fn link_back(&mut self, from: u32, to: u32, layer: usize, bound: usize) {
        let list = &self.links[from as usize][layer];
        if list.len() < bound {
            self.links[from as usize][layer].push(to);
            return;
        }
        let base = self.points.row(from as usize).to_vec();
        let mut cands: Vec<Cand> = list
            .iter()
            .chain(std::iter::once(&to))
            .map(|&n| Cand {
                dist: self.dist(&base, n),
                id: n,
            })
            .collect();
        cands.sort();
        let chosen = self.select(&cands, bound);
        self.links[from as usize][layer] = chosen.iter().map(|c| c.id).collect();
    }

    /// Diversity heuristic over candidates sorted by ascending distance.
    fn select(&self, sorted: &[Cand], m: usize) -> Vec<Cand> {
        let mut kept: Vec<Cand> = Vec::with_capacity(m);
        let mut pruned: Vec<Cand> = Vec::new();
        for &c in sorted {
            if kept.len() >= m {
                break;
            }
            let row = self.points.row(c.id as usize);
            let diverse = kept
                .iter()
                .all(|k| l2_sq(row, self.points.row(k.id as usize)) > c.dist);
            if diverse {
                kept.push(c);
            } else {
                pruned.push(c);
            }
        }
        for c in pruned {
            if kept.len() >= m {
                break;
            }
            kept.push(c);
        }
        kept
    }

    fn greedy(&self, q: &[f64], mut best: Cand, layer: usize) -> Cand {
        loop {
            let mut improved = false;
            for &n in &self.links[best.id as usize][layer] {
                let c = Cand {
                    dist: self.dist(q, n),
                    id: n,
                };
                if c < best {
                    best = c;
                    improved = true;
                }
            }
            if !improved {
                return best;
            }
        }
    }

    /// Beam search on one layer; returns up to `ef` candidates sorted ascending.
    fn search_layer(&self, q: &[f64], entries: &[Cand], ef: usize, layer: usize) -> Vec<Cand> {
        let mut visited = vec![false; self.links.len()];
        let mut frontier: BinaryHeap<Reverse<Cand>> = BinaryHeap::new();
        let mut best: BinaryHeap<Cand> = BinaryHeap::new();
        for &e in entries {
            if !visited[e.id as usize] {
                visited[e.id as usize] = true;
                frontier.push(Reverse(e));
                best.push(e);
            }
        }
        while best.len() > ef {
            best.pop();
        }
        while let Some(Reverse(c)) = frontier.pop() {
            if let Some(worst) = best.peek() {
                if best.len() >= ef && c > *worst {
                    break;
                }
            }
            for &n in &self.links[c.id as usize][layer] {
                if visited[n as usize] {
                    continue;
                }
                visited[n as usize] = true;
                let cand = Cand {
                    dist: self.dist(q, n),
                    id: n,
                };
                if best.len() < ef || cand < *best.peek().unwrap() {
                    frontier.push(Reverse(cand));
                    best.push(cand);
                    if best.len() > ef {
                        best.pop();
                    }
                }
            }
        }
        best.into_sorted_vec()
    }

    pub fn search(&self, q: &[f64], k: usize, ef: usize) -> Vec<SearchHit> {
        if self.links.is_empty() {
            return Vec::new();
        }
        let mut ep = Cand {
            dist: self.dist(q, self.entry),
            id: self.entry,
        };
        for layer in (1..=self.top_layer).rev() {
            ep = self.greedy(q, ep, layer);
        }
        let found = self.search_layer(q, &[ep], ef.max(k), 0);
        found
            .into_iter()
            .take(k)
            .map(|c| SearchHit {
                id: c.id as usize,
                distance: c.dist.sqrt(),
            })
            .collect()
    }
}
