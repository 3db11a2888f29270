//! Single-attribute hybrid index.
//!
//! Offline, every record is fused with its attribute and the fused points are
//! indexed by an ordinary nearest-neighbor backend. Online, the query is fused
//! with its requested attribute, `k'` candidates are pulled from the backend, and
//! candidates are re-ranked by `alpha * s_f + beta * s_v` where `s_f` is the
//! attribute distance and `s_v` the content distance. With `attr_approx = false`
//! any candidate whose attribute differs from the query's is dropped.

use serde::{Deserialize, Serialize};

use crate::backend::{Backend, BackendConfig, BackendKind};
use crate::error::{Error, Result};
use crate::fusion::{estimate_extremes, psi_into, select_parameters, FusionParams};
use crate::metric::{l2, Points};
use crate::record::{check_uniform, AttrKey, Record};
use crate::stats::{candidate_size_single, fallback_candidate_count, SingleStats};

/// Index construction options.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BuildConfig {
    pub epsilon_f: f64,
    pub alpha_override: Option<f64>,
    pub beta_override: Option<f64>,
    pub backend: BackendConfig,
}

impl Default for BuildConfig {
    fn default() -> Self {
        Self {
            epsilon_f: 1.0,
            alpha_override: None,
            beta_override: None,
            backend: BackendConfig::flat(),
        }
    }
}

/// One re-ranked result.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoredHit {
    pub id: usize,
    pub content_distance: f64,
    pub attribute_distance: f64,
    pub score: f64,
}

/// Ranked results of a hybrid or range query.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct QueryResult {
    pub hits: Vec<ScoredHit>,
    /// Number of candidates requested from the backend (or retained from the tube,
    /// for range queries).
    pub k_prime: usize,
    /// Fewer than `k` results survived filtering.
    pub truncated: bool,
}

impl QueryResult {
    pub fn ids(&self) -> Vec<usize> {
        self.hits.iter().map(|h| h.id).collect()
    }
}

pub(crate) fn rank_hits(hits: &mut Vec<ScoredHit>, k: usize) {
    hits.sort_by(|a, b| a.score.total_cmp(&b.score).then(a.id.cmp(&b.id)));
    hits.truncate(k);
}

/// Resolves fusion parameters from data extremes plus optional overrides.
pub(crate) fn resolve_params(
    contents: &Points,
    attrs: &Points,
    epsilon_f: f64,
    alpha_override: Option<f64>,
    beta_override: Option<f64>,
) -> Result<FusionParams> {
    if let (Some(alpha), Some(beta)) = (alpha_override, beta_override) {
        return FusionParams::manual(alpha, beta, contents.dim(), attrs.dim());
    }
    let ext = estimate_extremes(contents, attrs)?;
    let mut p = select_parameters(
        ext.delta_max,
        ext.separation.sigma_min(),
        contents.dim(),
        attrs.dim(),
        epsilon_f,
    )?;
    if alpha_override.is_some() || beta_override.is_some() {
        let alpha = alpha_override.unwrap_or(p.alpha);
        let beta = beta_override.unwrap_or(p.beta);
        let manual = FusionParams::manual(alpha, beta, p.d, p.m)?;
        p.alpha = manual.alpha;
        p.beta = manual.beta;
    }
    Ok(p)
}

/// Fuses every row of `contents` with the matching row of `attrs`.
pub(crate) fn fuse_all(contents: &Points, attrs: &Points, alpha: f64, beta: f64) -> Points {
    let mut out = Points::with_capacity(contents.dim(), contents.len());
    let mut buf = vec![0.0; contents.dim()];
    for (v, f) in contents.rows().zip(attrs.rows()) {
        psi_into(v, f, alpha, beta, &mut buf);
        out.push(&buf);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HybridIndex {
    params: FusionParams,
    stats: SingleStats,
    backend: Backend,
    contents: Points,
    attrs: Points,
}

impl HybridIndex {
    /// Builds from records carrying exactly one attribute vector each.
    pub fn build(records: &[Record], config: &BuildConfig) -> Result<Self> {
        let (d, ms) = check_uniform(records)?;
        if ms.len() != 1 {
            return Err(Error::dim(format!(
                "expected one attribute per record, found {}",
                ms.len()
            )));
        }
        let m = ms[0];
        let contents = Points::from_rows(
            d,
            &records.iter().map(|r| &r.content[..]).collect::<Vec<_>>(),
        )
        .expect("checked dims");
        let attrs = Points::from_rows(
            m,
            &records
                .iter()
                .map(|r| &r.attributes[0][..])
                .collect::<Vec<_>>(),
        )
        .expect("checked dims");
        Self::build_from(contents, attrs, config)
    }

    pub fn build_from(contents: Points, attrs: Points, config: &BuildConfig) -> Result<Self> {
        if contents.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if contents.len() != attrs.len() {
            return Err(Error::dim("content and attribute counts differ"));
        }
        let params = resolve_params(
            &contents,
            &attrs,
            config.epsilon_f,
            config.alpha_override,
            config.beta_override,
        )?;
        let fused = fuse_all(&contents, &attrs, params.alpha, params.beta);
        let keys: Vec<AttrKey> = attrs.rows().map(AttrKey::of).collect();
        let stats = SingleStats::compute(&fused, &keys)?;
        let backend = Backend::build(fused, &config.backend)?;
        Ok(Self {
            params,
            stats,
            backend,
            contents,
            attrs,
        })
    }

    /// Reassembles an index from stored sections, checking that they agree.
    pub(crate) fn from_parts(
        params: FusionParams,
        stats: SingleStats,
        backend: Backend,
        contents: Points,
        attrs: Points,
    ) -> Result<Self> {
        let n = contents.len();
        if attrs.len() != n || backend.len() != n || stats.total() != n {
            return Err(Error::Corrupt(
                "index sections disagree on the record count".into(),
            ));
        }
        if contents.dim() != params.d || attrs.dim() != params.m || backend.dim() != params.d {
            return Err(Error::Corrupt(
                "index sections disagree on dimensions".into(),
            ));
        }
        Ok(Self {
            params,
            stats,
            backend,
            contents,
            attrs,
        })
    }

    pub fn params(&self) -> &FusionParams {
        &self.params
    }

    pub fn stats(&self) -> &SingleStats {
        &self.stats
    }

    pub fn backend(&self) -> &Backend {
        &self.backend
    }

    pub fn backend_kind(&self) -> BackendKind {
        self.backend.kind()
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
        self.backend.points()
    }

    /// Candidate count used for a query on attribute `f_q`.
    pub fn candidate_count(&self, k: usize, eps: f64, f_q: &[f64]) -> Result<Option<usize>> {
        let key = AttrKey::of(f_q);
        if self.stats.class_id(&key).is_some() {
            let kp = candidate_size_single(k, eps, &self.stats, &key)?;
            return Ok(Some(kp.min(self.len())));
        }
        Ok(None)
    }

    pub fn query(
        &self,
        q: &[f64],
        f_q: &[f64],
        k: usize,
        eps: f64,
        attr_approx: bool,
    ) -> Result<QueryResult> {
        if k < 1 {
            return Err(Error::arg("k must be at least 1"));
        }
        if q.len() != self.params.d || f_q.len() != self.params.m {
            return Err(Error::dim(format!(
                "query dims ({}, {}) do not match index dims ({}, {})",
                q.len(),
                f_q.len(),
                self.params.d,
                self.params.m
            )));
        }
        let k_prime = match self.candidate_count(k, eps, f_q)? {
            Some(kp) => kp,
            None if attr_approx => fallback_candidate_count(k, eps, self.len())?,
            None => {
                return Ok(QueryResult {
                    hits: Vec::new(),
                    k_prime: 0,
                    truncated: true,
                })
            }
        };
        let mut fused_q = vec![0.0; q.len()];
        psi_into(q, f_q, self.params.alpha, self.params.beta, &mut fused_q);
        let candidates = self.backend.search(&fused_q, k_prime)?;
        let mut hits: Vec<ScoredHit> = candidates
            .iter()
            .filter_map(|c| {
                let s_f = l2(self.attrs.row(c.id), f_q);
                if !attr_approx && s_f != 0.0 {
                    return None;
                }
                let s_v = l2(self.contents.row(c.id), q);
                Some(ScoredHit {
                    id: c.id,
                    content_distance: s_v,
                    attribute_distance: s_f,
                    score: self.params.alpha * s_f + self.params.beta * s_v,
                })
            })
            .collect();
        rank_hits(&mut hits, k);
        let truncated = hits.len() < k;
        Ok(QueryResult {
            hits,
            k_prime,
            truncated,
        })
    }
}
