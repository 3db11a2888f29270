//! Range-filtered search.
//!
//! A range query fuses to a segment, and the in-range records cluster in a thin
//! tube around it. Offline, segments for representative queries and ranges are
//! sampled, each gets a tube radius, and the points inside every (slightly
//! widened) tube are indexed by position along the segment. Online, the query's
//! segment is matched to the most similar indexed one, whose tube is searched with
//! the radius grown by the Hausdorff distance between the two; survivors are
//! filtered by the range in the original attribute space and ranked by content
//! distance.

mod balltree;
mod cylinder;
mod kmeans;
mod line_index;
mod sampling;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use balltree::BallTree;
pub use cylinder::CylindricalIndex;
pub use kmeans::{kmeans, Clustering};
pub use line_index::{pair_similarity, HierarchicalLineIndex, IndexedLine};
pub use sampling::{estimate_distributions, sample_range_lines, Distributions, SamplingConfig};

use crate::error::{Error, Result};
use crate::fusion::{estimate_extremes, select_parameters, FusionParams};
use crate::geometry::{
    adjusted_k, hausdorff_distance, local_density, range_to_line, tube_density, RangeQuery,
    SimilarityWeights,
};
use crate::hybrid::{fuse_all, QueryResult, ScoredHit};
use crate::metric::{l2, Points};
use crate::record::{check_uniform, Record};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RangeConfig {
    pub epsilon_f: f64,
    /// Lower bound on the attribute separation used for parameter selection, as a
    /// fraction of the attribute span. Continuous attributes have near-zero
    /// separation, which would otherwise drive `alpha` without bound.
    pub separation_floor: f64,
    pub alpha_override: Option<f64>,
    pub beta_override: Option<f64>,
    /// Coverage target of the sampled lines in the fused space; defaults to 2% of
    /// the fused bounding-box diagonal.
    pub eps_cover: Option<f64>,
    pub delta: f64,
    /// Neighbor count the tube radii are sized for.
    pub k: usize,
    /// Endpoint spread `c` of the range distribution.
    pub spread: f64,
    pub max_lines: usize,
    pub nu: f64,
    pub tau: f64,
    pub kappa: f64,
    pub weights: SimilarityWeights,
    /// Constant of the candidate-count compensation term.
    pub compensation: f64,
    /// Held-out queries used to size the Hausdorff slack, and the quantile kept.
    pub holdout: usize,
    pub slack_quantile: f64,
    pub seed: u64,
}

impl Default for RangeConfig {
    fn default() -> Self {
        Self {
            epsilon_f: 1.0,
            separation_floor: 0.1,
            alpha_override: None,
            beta_override: None,
            eps_cover: None,
            delta: 0.05,
            k: 10,
            spread: 1.0,
            max_lines: 256,
            nu: std::f64::consts::PI / 180.0,
            tau: 0.95,
            kappa: 2.0,
            weights: SimilarityWeights::default(),
            compensation: 2.0,
            holdout: 200,
            slack_quantile: 0.95,
            seed: 0x5eed,
        }
    }
}

/// Result of a range query with the line it was served from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RangeResult {
    pub result: QueryResult,
    pub line: usize,
    pub hausdorff: f64,
    pub radius: f64,
    /// The most similar line could not hold the widened tube and a closer one
    /// was used instead.
    pub fell_back: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RangeIndex {
    params: FusionParams,
    config: RangeConfig,
    lines: HierarchicalLineIndex,
    cylinders: Vec<CylindricalIndex>,
    slack: f64,
    contents: Points,
    attrs: Points,
    fused: Points,
}

fn bbox_diagonal(p: &Points) -> f64 {
    let dim = p.dim();
    let mut lo = vec![f64::INFINITY; dim];
    let mut hi = vec![f64::NEG_INFINITY; dim];
    for r in p.rows() {
        for i in 0..dim {
            lo[i] = lo[i].min(r[i]);
            hi[i] = hi[i].max(r[i]);
        }
    }
    lo.iter()
        .zip(&hi)
        .map(|(a, b)| (b - a) * (b - a))
        .sum::<f64>()
        .sqrt()
}

fn range_params(contents: &Points, attrs: &Points, cfg: &RangeConfig) -> Result<FusionParams> {
    if let (Some(a), Some(b)) = (cfg.alpha_override, cfg.beta_override) {
        return FusionParams::manual(a, b, contents.dim(), attrs.dim());
    }
    let ext = estimate_extremes(contents, attrs)?;
    let span = bbox_diagonal(attrs);
    let sigma = if span == 0.0 {
        f64::INFINITY
    } else {
        ext.separation.sigma_min().max(cfg.separation_floor * span)
    };
    let mut p = select_parameters(
        ext.delta_max,
        sigma,
        contents.dim(),
        attrs.dim(),
        cfg.epsilon_f,
    )?;
    if cfg.alpha_override.is_some() || cfg.beta_override.is_some() {
        let m = FusionParams::manual(
            cfg.alpha_override.unwrap_or(p.alpha),
            cfg.beta_override.unwrap_or(p.beta),
            p.d,
            p.m,
        )?;
        p.alpha = m.alpha;
        p.beta = m.beta;
    }
    Ok(p)
}

fn quantile(mut xs: Vec<f64>, q: f64) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    xs.sort_by(f64::total_cmp);
    let rank = ((q * xs.len() as f64).ceil() as usize).clamp(1, xs.len());
    xs[rank - 1]
}

impl RangeIndex {
    /// Builds from records carrying exactly one attribute vector each.
    pub fn build(records: &[Record], config: &RangeConfig) -> Result<Self> {
        let (d, ms) = check_uniform(records)?;
        if ms.len() != 1 {
            return Err(Error::dim(format!(
                "expected one attribute per record, found {}",
                ms.len()
            )));
        }
        let contents = Points::from_rows(
            d,
            &records.iter().map(|r| &r.content[..]).collect::<Vec<_>>(),
        )
        .expect("checked dims");
        let attrs = Points::from_rows(
            ms[0],
            &records
                .iter()
                .map(|r| &r.attributes[0][..])
                .collect::<Vec<_>>(),
        )
        .expect("checked dims");
        Self::build_from(contents, attrs, config)
    }

    pub fn build_from(contents: Points, attrs: Points, config: &RangeConfig) -> Result<Self> {
        if contents.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if contents.len() != attrs.len() {
            return Err(Error::dim("content and attribute counts differ"));
        }
        if !(config.slack_quantile > 0.0 && config.slack_quantile <= 1.0) {
            return Err(Error::arg("slack quantile must lie in (0, 1]"));
        }
        let params = range_params(&contents, &attrs, config)?;
        let fused = fuse_all(&contents, &attrs, params.alpha, params.beta);
        let d_max = match bbox_diagonal(&fused) {
            d if d > 0.0 => d,
            _ => 1.0,
        };
        let eps_cover = config.eps_cover.unwrap_or(0.02 * d_max);
        let dist = estimate_distributions(&contents, &attrs, config.spread, config.seed)?;
        let sampling = SamplingConfig {
            eps_cover,
            delta: config.delta,
            k: config.k,
            max_lines: config.max_lines,
        };
        let sampled = sample_range_lines(&contents, &attrs, &dist, &params, &sampling)?;
        let mut lines = HierarchicalLineIndex::build(sampled, config.nu, config.weights, d_max)?;

        let slack = Self::measure_slack(&contents, &attrs, &params, &lines, config)?;
        let cylinders = lines
            .lines()
            .par_iter()
            .map(|l| CylindricalIndex::build(l.segment.clone(), &fused, l.base_radius + slack))
            .collect::<Result<Vec<_>>>()?;
        let with_density = lines
            .lines()
            .par_iter()
            .zip(&cylinders)
            .map(|(l, c)| {
                let r = l.base_radius;
                let density = if l.segment.is_degenerate() {
                    tube_density(c.count_within(r), r, 2.0 * r)
                } else {
                    local_density(&l.segment, &fused, r)?
                };
                Ok(IndexedLine {
                    density,
                    ..l.clone()
                })
            })
            .collect::<Result<Vec<_>>>()?;
        lines = HierarchicalLineIndex::build(with_density, config.nu, config.weights, d_max)?;
        Ok(Self {
            params,
            config: *config,
            lines,
            cylinders,
            slack,
            contents,
            attrs,
            fused,
        })
    }

    /// Twice the chosen quantile of the Hausdorff distance from held-out range
    /// queries to their matched lines: the tube is searched at the base radius
    /// plus that distance, and the search widens it by the distance again.
    fn measure_slack(
        contents: &Points,
        attrs: &Points,
        params: &FusionParams,
        lines: &HierarchicalLineIndex,
        config: &RangeConfig,
    ) -> Result<f64> {
        let n = contents.len();
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x6a09_e667);
        let queries: Vec<RangeQuery> = (0..config.holdout)
            .map(|_| {
                let q = contents.row(rng.gen_range(0..n)).to_vec();
                let (a, b) = (
                    attrs.row(rng.gen_range(0..n)),
                    attrs.row(rng.gen_range(0..n)),
                );
                let l = a.iter().zip(b).map(|(x, y)| x.min(*y)).collect();
                let u = a.iter().zip(b).map(|(x, y)| x.max(*y)).collect();
                RangeQuery { q, l, u }
            })
            .collect();
        let gaps = queries
            .par_iter()
            .map(|rq| {
                let lq = range_to_line(rq, params)?;
                let (id, _) = lines.find_nearest(&lq, config.tau, config.kappa)?;
                Ok(hausdorff_distance(&lq, &lines.line(id).segment))
            })
            .collect::<Result<Vec<f64>>>()?;
        Ok(2.0 * quantile(gaps, config.slack_quantile))
    }

    pub fn params(&self) -> &FusionParams {
        &self.params
    }

    pub fn config(&self) -> &RangeConfig {
        &self.config
    }

    pub fn line_index(&self) -> &HierarchicalLineIndex {
        &self.lines
    }

    pub fn cylinders(&self) -> &[CylindricalIndex] {
        &self.cylinders
    }

    /// Hausdorff slack added to every tube radius.
    pub fn slack(&self) -> f64 {
        self.slack
    }

    pub fn len(&self) -> usize {
        self.contents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.contents.is_empty()
    }

    pub fn contents(&self) -> &Points {
        &self.contents
    }

    pub fn attributes(&self) -> &Points {
        &self.attrs
    }

    pub fn fused(&self) -> &Points {
        &self.fused
    }

    /// Top-`k` records by content distance to `q` among those with `l <= f <= u`.
    pub fn query(
        &self,
        q: &[f64],
        l: &[f64],
        u: &[f64],
        k: usize,
        eps: f64,
    ) -> Result<RangeResult> {
        if k < 1 {
            return Err(Error::arg("k must be at least 1"));
        }
        if q.len() != self.params.d || l.len() != self.params.m || u.len() != self.params.m {
            return Err(Error::dim(format!(
                "range query dims ({}, {}, {}) do not match ({}, {})",
                q.len(),
                l.len(),
                u.len(),
                self.params.d,
                self.params.m
            )));
        }
        let rq = RangeQuery::new(q.to_vec(), l.to_vec(), u.to_vec())?;
        let lq = range_to_line(&rq, &self.params)?;
        let (first, _) = self
            .lines
            .find_nearest(&lq, self.config.tau, self.config.kappa)?;

        let attempt = |id: usize| -> Result<(Vec<usize>, f64, f64)> {
            let line = self.lines.line(id);
            let d_h = hausdorff_distance(&lq, &line.segment);
            let radius = line.base_radius + d_h;
            let ids = self.cylinders[id].search(&self.fused, &lq, radius)?;
            Ok((ids, d_h, radius))
        };
        let (line, fell_back, (ids, d_h, radius)) = match attempt(first) {
            Ok(found) => (first, false, found),
            Err(Error::RadiusTooLarge {
                required,
                available,
            }) => {
                // Retry on the closest line whose tube is wide enough.
                let fallback = self
                    .lines
                    .lines()
                    .iter()
                    .enumerate()
                    .map(|(i, l)| (i, hausdorff_distance(&lq, &l.segment)))
                    .filter(|&(i, d)| {
                        self.lines.line(i).base_radius + 2.0 * d <= self.cylinders[i].max_radius()
                    })
                    .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
                match fallback {
                    Some((i, _)) => (i, true, attempt(i)?),
                    None => {
                        return Err(Error::RadiusTooLarge {
                            required,
                            available,
                        })
                    }
                }
            }
            Err(e) => return Err(e),
        };
        let k_prime = adjusted_k(
            k,
            eps,
            d_h,
            self.lines.line(line).density,
            self.config.compensation,
        )?;

        let mut hits: Vec<ScoredHit> = ids
            .into_iter()
            .filter(|&i| rq.contains(self.attrs.row(i)))
            .map(|i| {
                let d = l2(self.contents.row(i), q);
                ScoredHit {
                    id: i,
                    content_distance: d,
                    attribute_distance: 0.0,
                    score: d,
                }
            })
            .collect();
        crate::hybrid::rank_hits(&mut hits, k);
        let truncated = hits.len() < k;
        Ok(RangeResult {
            result: QueryResult {
                hits,
                k_prime,
                truncated,
            },
            line,
            hausdorff: d_h,
            radius,
            fell_back,
        })
    }
}
