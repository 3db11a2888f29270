//! Prioritized multi-attribute fusion.
//!
//! Attributes are fused one level at a time, lowest priority first, so the
//! highest-priority attribute is applied last and carries the largest weight in
//! the final space. Each level picks its own `(alpha, beta)` from the extremes of
//! the space produced by the previous level. Intermediate spaces are kept so that
//! priority changes and attribute insertions only recompute the levels that
//! actually change.

use serde::{Deserialize, Serialize};

use crate::backend::{Backend, BackendConfig};
use crate::error::{Error, Result};
use crate::fusion::{estimate_extremes, select_parameters, FusionParams};
use crate::hybrid::{fuse_all, rank_hits, QueryResult, ScoredHit};
use crate::metric::{l2, Points};
use crate::record::{check_uniform, AttrKey, Record};
use crate::stats::{candidate_size_multi, fallback_candidate_count, MultiClusterStats};

/// Attribute indices from highest to lowest priority.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PriorityOrder(Vec<usize>);

impl PriorityOrder {
    pub fn new(pi: Vec<usize>) -> Result<Self> {
        let mut seen = vec![false; pi.len()];
        for &a in &pi {
            if a >= pi.len() || seen[a] {
                return Err(Error::InvalidPriority(format!(
                    "{pi:?} is not a permutation of 0..{}",
                    pi.len()
                )));
            }
            seen[a] = true;
        }
        Ok(Self(pi))
    }

    /// Attribute 0 highest, attribute `f - 1` lowest.
    pub fn identity(f: usize) -> Self {
        Self((0..f).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    /// Attribute indices in the order their transforms are applied.
    pub fn application_order(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.iter().rev().copied()
    }

    /// The 1-based divergence point `j`: the smallest position from which both
    /// orders agree through the lowest priority. `j - 1` levels differ.
    pub fn divergence(&self, other: &PriorityOrder) -> Result<usize> {
        if self.len() != other.len() {
            return Err(Error::InvalidPriority(format!(
                "orders cover {} and {} attributes",
                self.len(),
                other.len()
            )));
        }
        let shared = self
            .0
            .iter()
            .rev()
            .zip(other.0.iter().rev())
            .take_while(|(a, b)| a == b)
            .count();
        Ok(self.len() - shared + 1)
    }
}

impl std::str::FromStr for PriorityOrder {
    type Err = Error;

    /// Parses a comma-separated list such as `2,0,1`.
    fn from_str(s: &str) -> Result<Self> {
        let pi = s
            .split(',')
            .map(|t| t.trim().parse::<usize>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::InvalidPriority(format!("{s:?}: {e}")))?;
        Self::new(pi)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChainConfig {
    pub epsilon_f: f64,
    /// Multiplies every derived `alpha`; values above one strengthen the
    /// attribute separation at each level.
    pub alpha_multiplier: f64,
    pub backend: BackendConfig,
}

impl Default for ChainConfig {
    fn default() -> Self {
        Self {
            epsilon_f: 1.0,
            alpha_multiplier: 1.0,
            backend: BackendConfig::flat(),
        }
    }
}

/// One transform of the chain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Level {
    pub attribute: usize,
    pub params: FusionParams,
}

/// Where a new attribute enters the priority order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Position {
    Highest,
    /// 0-based slot in the new order; `F` (the old attribute count) is lowest.
    At(usize),
}

/// Per-attribute spread of a result set, in priority order.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorityCheck {
    pub holds: bool,
    pub means: Vec<f64>,
    pub variances: Vec<f64>,
}

/// A rebuilt index together with the number of levels that were recomputed.
#[derive(Debug, Clone, PartialEq)]
pub struct Updated {
    pub index: MultiIndex,
    pub recomputed_levels: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiIndex {
    config: ChainConfig,
    order: PriorityOrder,
    /// Levels in application order.
    levels: Vec<Level>,
    /// `spaces[i]` is the fused space after `levels[..=i]`.
    spaces: Vec<Points>,
    stats: Option<MultiClusterStats>,
    backend: Backend,
    contents: Points,
    attrs: Vec<Points>,
}

fn level_params(current: &Points, attr: &Points, config: &ChainConfig) -> Result<FusionParams> {
    if !(config.alpha_multiplier >= 1.0) || !config.alpha_multiplier.is_finite() {
        return Err(Error::arg(format!(
            "alpha multiplier must be >= 1, got {}",
            config.alpha_multiplier
        )));
    }
    let ext = estimate_extremes(current, attr)?;
    let mut p = select_parameters(
        ext.delta_max,
        ext.separation.sigma_min(),
        current.dim(),
        attr.dim(),
        config.epsilon_f,
    )?;
    p.alpha *= config.alpha_multiplier;
    Ok(p)
}

fn combination_keys(attrs: &[Points], n: usize) -> Vec<AttrKey> {
    (0..n)
        .map(|i| AttrKey::of_combination(attrs.iter().map(|a| a.row(i))))
        .collect()
}

impl MultiIndex {
    /// Builds from records whose attribute slots are indexed `0..F`.
    pub fn build(records: &[Record], order: PriorityOrder, config: &ChainConfig) -> Result<Self> {
        let (d, ms) = check_uniform(records)?;
        let contents = Points::from_rows(
            d,
            &records.iter().map(|r| &r.content[..]).collect::<Vec<_>>(),
        )
        .expect("checked dims");
        let attrs = ms
            .iter()
            .enumerate()
            .map(|(j, &m)| {
                Points::from_rows(
                    m,
                    &records
                        .iter()
                        .map(|r| &r.attributes[j][..])
                        .collect::<Vec<_>>(),
                )
                .expect("checked dims")
            })
            .collect();
        Self::build_from(contents, attrs, order, config)
    }

    pub fn build_from(
        contents: Points,
        attrs: Vec<Points>,
        order: PriorityOrder,
        config: &ChainConfig,
    ) -> Result<Self> {
        if contents.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if order.len() != attrs.len() {
            return Err(Error::InvalidPriority(format!(
                "order names {} attributes, records carry {}",
                order.len(),
                attrs.len()
            )));
        }
        if attrs.iter().any(|a| a.len() != contents.len()) {
            return Err(Error::dim("every record needs every attribute"));
        }
        Self::assemble(contents, attrs, order, *config, Vec::new(), Vec::new()).map(|u| u.index)
    }

    /// Completes the chain from the reusable levels `kept` and their spaces.
    fn assemble(
        contents: Points,
        attrs: Vec<Points>,
        order: PriorityOrder,
        config: ChainConfig,
        mut levels: Vec<Level>,
        mut spaces: Vec<Points>,
    ) -> Result<Updated> {
        let reused = levels.len();
        for attribute in order.application_order().skip(reused) {
            let current = spaces.last().unwrap_or(&contents);
            let params = level_params(current, &attrs[attribute], &config)?;
            let next = fuse_all(current, &attrs[attribute], params.alpha, params.beta);
            levels.push(Level { attribute, params });
            spaces.push(next);
        }
        let recomputed_levels = levels.len() - reused;
        let fused = spaces.last().unwrap_or(&contents).clone();
        let stats = if attrs.is_empty() {
            None
        } else {
            Some(MultiClusterStats::compute(
                &fused,
                &combination_keys(&attrs, contents.len()),
                attrs.len(),
            )?)
        };
        let backend = Backend::build(fused, &config.backend)?;
        let index = MultiIndex {
            config,
            order,
            levels,
            spaces,
            stats,
            backend,
            contents,
            attrs,
        };
        Ok(Updated {
            index,
            recomputed_levels,
        })
    }

    pub fn order(&self) -> &PriorityOrder {
        &self.order
    }

    pub fn levels(&self) -> &[Level] {
        &self.levels
    }

    pub fn config(&self) -> &ChainConfig {
        &self.config
    }

    pub fn num_attributes(&self) -> usize {
        self.attrs.len()
    }

    pub fn len(&self) -> usize {
        self.contents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.contents.is_empty()
    }

    pub fn stats(&self) -> Option<&MultiClusterStats> {
        self.stats.as_ref()
    }

    pub fn backend(&self) -> &Backend {
        &self.backend
    }

    pub fn contents(&self) -> &Points {
        &self.contents
    }

    pub fn attributes(&self, j: usize) -> &Points {
        &self.attrs[j]
    }

    /// Final fused vectors.
    pub fn fused(&self) -> &Points {
        self.backend.points()
    }

    /// Re-rank weights `(w per level in application order, w_v)`.
    pub fn weights(&self) -> (Vec<f64>, f64) {
        let mut w = Vec::with_capacity(self.levels.len());
        let mut prod = 1.0;
        for l in &self.levels {
            w.push(l.params.alpha * prod);
            prod *= l.params.beta;
        }
        (w, prod)
    }

    /// Runs `q` with attributes `f_q[j]` (indexed by attribute slot) through the chain.
    pub fn transform(&self, q: &[f64], f_q: &[&[f64]]) -> Result<Vec<f64>> {
        self.check_query(q, f_q)?;
        let mut cur = q.to_vec();
        let mut next = vec![0.0; q.len()];
        for l in &self.levels {
            crate::fusion::psi_into(
                &cur,
                f_q[l.attribute],
                l.params.alpha,
                l.params.beta,
                &mut next,
            );
            std::mem::swap(&mut cur, &mut next);
        }
        Ok(cur)
    }

    fn check_query(&self, q: &[f64], f_q: &[&[f64]]) -> Result<()> {
        if q.len() != self.contents.dim() {
            return Err(Error::dim(format!(
                "query dim {} != {}",
                q.len(),
                self.contents.dim()
            )));
        }
        if f_q.len() != self.attrs.len() {
            return Err(Error::arg(format!(
                "expected {} query attributes, got {}",
                self.attrs.len(),
                f_q.len()
            )));
        }
        for (j, (f, a)) in f_q.iter().zip(&self.attrs).enumerate() {
            if f.len() != a.dim() {
                return Err(Error::dim(format!(
                    "attribute {j} has dim {}, expected {}",
                    f.len(),
                    a.dim()
                )));
            }
        }
        Ok(())
    }

    pub fn query(
        &self,
        q: &[f64],
        f_q: &[&[f64]],
        k: usize,
        eps: f64,
        attr_approx: bool,
    ) -> Result<QueryResult> {
        if k < 1 {
            return Err(Error::arg("k must be at least 1"));
        }
        let fused_q = self.transform(q, f_q)?;
        let n = self.len();
        let k_prime = match &self.stats {
            None => k.min(n),
            Some(stats) => {
                let combo = AttrKey::of_combination(f_q.iter().copied());
                if stats.stats.class_id(&combo).is_some() {
                    candidate_size_multi(k, eps, stats, &combo, self.attrs.len())?.min(n)
                } else if attr_approx {
                    fallback_candidate_count(k, eps, n)?
                } else {
                    return Ok(QueryResult {
                        hits: Vec::new(),
                        k_prime: 0,
                        truncated: true,
                    });
                }
            }
        };
        let (w, w_v) = self.weights();
        let mut hits: Vec<ScoredHit> = Vec::with_capacity(k_prime);
        for c in self.backend.search(&fused_q, k_prime)? {
            let mut attr_score = 0.0;
            let mut exact = true;
            for (l, wl) in self.levels.iter().zip(&w) {
                let s = l2(self.attrs[l.attribute].row(c.id), f_q[l.attribute]);
                exact &= s == 0.0;
                attr_score += wl * s;
            }
            if !attr_approx && !exact {
                continue;
            }
            let rho = l2(self.contents.row(c.id), q);
            hits.push(ScoredHit {
                id: c.id,
                content_distance: rho,
                attribute_distance: attr_score,
                score: attr_score + w_v * rho,
            });
        }
        rank_hits(&mut hits, k);
        let truncated = hits.len() < k;
        Ok(QueryResult {
            hits,
            k_prime,
            truncated,
        })
    }

    /// Mean and variance of each attribute's distance to the query over `ids`, in
    /// priority order; holds when the variances never decrease.
    pub fn verify_monotone_priority(&self, ids: &[usize], f_q: &[&[f64]]) -> Result<PriorityCheck> {
        if ids.is_empty() {
            return Err(Error::arg("result set is empty"));
        }
        if f_q.len() != self.attrs.len() {
            return Err(Error::arg(format!(
                "expected {} query attributes, got {}",
                self.attrs.len(),
                f_q.len()
            )));
        }
        let k = ids.len() as f64;
        let mut means = Vec::with_capacity(self.order.len());
        let mut variances = Vec::with_capacity(self.order.len());
        for &a in self.order.as_slice() {
            let dists: Vec<f64> = ids
                .iter()
                .map(|&i| l2(self.attrs[a].row(i), f_q[a]))
                .collect();
            let mu = dists.iter().sum::<f64>() / k;
            variances.push(dists.iter().map(|s| (s - mu) * (s - mu)).sum::<f64>() / k);
            means.push(mu);
        }
        let holds = variances.windows(2).all(|w| w[0] <= w[1] + 1e-9);
        Ok(PriorityCheck {
            holds,
            means,
            variances,
        })
    }

    /// Reorders priorities, recomputing only the levels after the shared
    /// lowest-priority prefix of the application order.
    pub fn update_priority(self, order: PriorityOrder) -> Result<Updated> {
        let j = self.order.divergence(&order)?;
        let keep = self.levels.len() + 1 - j;
        let MultiIndex {
            config,
            mut levels,
            mut spaces,
            contents,
            attrs,
            ..
        } = self;
        levels.truncate(keep);
        spaces.truncate(keep);
        Self::assemble(contents, attrs, order, config, levels, spaces)
    }

    /// Adds a new attribute (it receives slot index `F`) at `position` in the order.
    pub fn add_attribute(self, values: Points, position: Position) -> Result<Updated> {
        let f = self.attrs.len();
        let slot = match position {
            Position::Highest => 0,
            Position::At(p) if p <= f => p,
            Position::At(p) => {
                return Err(Error::InvalidPriority(format!(
                    "position {p} outside 0..={f}"
                )));
            }
        };
        if values.len() != self.contents.len() {
            return Err(Error::dim(format!(
                "{} values for {} records",
                values.len(),
                self.contents.len()
            )));
        }
        let mut pi = self.order.as_slice().to_vec();
        pi.insert(slot, f);
        let order = PriorityOrder::new(pi)?;
        // Attributes below the insertion slot are applied first and stay valid.
        let keep = f - slot;
        let MultiIndex {
            config,
            mut levels,
            mut spaces,
            contents,
            mut attrs,
            ..
        } = self;
        levels.truncate(keep);
        spaces.truncate(keep);
        attrs.push(values);
        Self::assemble(contents, attrs, order, config, levels, spaces)
    }
}
