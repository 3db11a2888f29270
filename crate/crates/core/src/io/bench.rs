//! Recall and throughput measurement against an exhaustive filtered scan.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::persist::StoredIndex;
use crate::error::{Error, Result};
use crate::geometry::RangeQuery;
use crate::metric::{l2, Points};

/// One benchmark query. Exact queries carry one attribute vector per indexed
/// attribute.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum BenchQuery {
    Exact {
        q: Vec<f64>,
        attrs: Vec<Vec<f64>>,
    },
    Range {
        q: Vec<f64>,
        l: Vec<f64>,
        u: Vec<f64>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub k: usize,
    pub eps: f64,
    pub attr_approx: bool,
    /// Worker threads; zero uses every core.
    pub threads: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            k: 10,
            eps: 0.01,
            attr_approx: false,
            threads: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub index: String,
    pub records: usize,
    pub config: BenchConfig,
    pub per_query_recall: Vec<f64>,
    pub k_prime: Vec<usize>,
    pub recall: f64,
    pub qps: f64,
}

/// `|got ∩ truth| / min(k, |truth|)`, counting only the first `k` of each; an
/// empty truth set scores 1.
pub fn recall_at_k(got: &[usize], truth: &[usize], k: usize) -> f64 {
    let truth = &truth[..truth.len().min(k)];
    if truth.is_empty() {
        return 1.0;
    }
    let t: HashSet<usize> = truth.iter().copied().collect();
    got.iter().take(k).filter(|i| t.contains(i)).count() as f64 / truth.len() as f64
}

fn scan(contents: &Points, q: &[f64], k: usize, keep: impl Fn(usize) -> bool) -> Vec<usize> {
    let mut hits: Vec<(f64, usize)> = (0..contents.len())
        .filter(|&i| keep(i))
        .map(|i| (l2(contents.row(i), q), i))
        .collect();
    hits.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    hits.truncate(k);
    hits.into_iter().map(|h| h.1).collect()
}

fn mismatch(index: &StoredIndex) -> Error {
    Error::arg(format!(
        "query type does not match a {} index",
        index.kind_name()
    ))
}

/// Exact filtered top-`k` by content distance.
pub fn oracle(index: &StoredIndex, query: &BenchQuery, k: usize) -> Result<Vec<usize>> {
    match (index, query) {
        (StoredIndex::Hybrid(h), BenchQuery::Exact { q, attrs }) if attrs.len() == 1 => {
            Ok(scan(h.contents(), q, k, |i| {
                h.attributes().row(i) == &attrs[0][..]
            }))
        }
        (StoredIndex::Multi(m), BenchQuery::Exact { q, attrs })
            if attrs.len() == m.num_attributes() =>
        {
            Ok(scan(m.contents(), q, k, |i| {
                (0..attrs.len()).all(|j| m.attributes(j).row(i) == &attrs[j][..])
            }))
        }
        (StoredIndex::Range(r), BenchQuery::Range { q, l, u }) => {
            let rq = RangeQuery::new(q.clone(), l.clone(), u.clone())?;
            Ok(scan(r.contents(), q, k, |i| {
                rq.contains(r.attributes().row(i))
            }))
        }
        _ => Err(mismatch(index)),
    }
}

/// Runs `query` through the index: result ids and the candidate count used.
pub fn run_query(
    index: &StoredIndex,
    query: &BenchQuery,
    cfg: &BenchConfig,
) -> Result<(Vec<usize>, usize)> {
    let res = match (index, query) {
        (StoredIndex::Hybrid(h), BenchQuery::Exact { q, attrs }) if attrs.len() == 1 => {
            h.query(q, &attrs[0], cfg.k, cfg.eps, cfg.attr_approx)?
        }
        (StoredIndex::Multi(m), BenchQuery::Exact { q, attrs }) => {
            let refs: Vec<&[f64]> = attrs.iter().map(|a| &a[..]).collect();
            m.query(q, &refs, cfg.k, cfg.eps, cfg.attr_approx)?
        }
        (StoredIndex::Range(r), BenchQuery::Range { q, l, u }) => {
            r.query(q, l, u, cfg.k, cfg.eps)?.result
        }
        _ => return Err(mismatch(index)),
    };
    Ok((res.ids(), res.k_prime))
}

pub fn bench(
    index: &StoredIndex,
    queries: &[BenchQuery],
    cfg: &BenchConfig,
) -> Result<BenchReport> {
    if queries.is_empty() {
        return Err(Error::arg("no benchmark queries"));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads)
        .build()
        .map_err(|e| Error::arg(format!("thread pool: {e}")))?;
    let (answers, elapsed) = pool.install(|| {
        let start = Instant::now();
        let answers: Vec<Result<(Vec<usize>, usize)>> = queries
            .par_iter()
            .map(|q| run_query(index, q, cfg))
            .collect();
        (answers, start.elapsed())
    });
    let answers = answers.into_iter().collect::<Result<Vec<_>>>()?;
    let truths = pool.install(|| {
        queries
            .par_iter()
            .map(|q| oracle(index, q, cfg.k))
            .collect::<Result<Vec<_>>>()
    })?;
    let per_query_recall: Vec<f64> = answers
        .iter()
        .zip(&truths)
        .map(|((got, _), truth)| recall_at_k(got, truth, cfg.k))
        .collect();
    let recall = per_query_recall.iter().sum::<f64>() / queries.len() as f64;
    Ok(BenchReport {
        index: index.kind_name().to_owned(),
        records: index.len(),
        config: *cfg,
        k_prime: answers.iter().map(|a| a.1).collect(),
        per_query_recall,
        recall,
        qps: queries.len() as f64 / elapsed.as_secs_f64().max(1e-12),
    })
}

impl BenchReport {
    pub fn table(&self) -> String {
        let mean_kp = self.k_prime.iter().sum::<usize>() as f64 / self.k_prime.len().max(1) as f64;
        let mut s = String::new();
        let _ = writeln!(s, "{:<12} {:>10}", "index", self.index);
        let _ = writeln!(s, "{:<12} {:>10}", "records", self.records);
        let _ = writeln!(s, "{:<12} {:>10}", "queries", self.per_query_recall.len());
        let _ = writeln!(s, "{:<12} {:>10}", "k", self.config.k);
        let _ = writeln!(s, "{:<12} {:>10}", "eps", self.config.eps);
        let _ = writeln!(s, "{:<12} {:>10.4}", "recall@k", self.recall);
        let _ = writeln!(s, "{:<12} {:>10.1}", "mean k'", mean_kp);
        let _ = writeln!(s, "{:<12} {:>10.1}", "qps", self.qps);
        s
    }

    /// One JSON object per query followed by a summary object.
    pub fn json_lines(&self) -> String {
        let mut s = String::new();
        for (i, (r, kp)) in self.per_query_recall.iter().zip(&self.k_prime).enumerate() {
            let line =
                serde_json::json!({ "type": "query", "query": i, "recall": r, "k_prime": kp });
            let _ = writeln!(s, "{line}");
        }
        let summary = serde_json::json!({
            "type": "summary",
            "index": self.index,
            "records": self.records,
            "config": self.config,
            "recall": self.recall,
            "qps": self.qps,
        });
        let _ = writeln!(s, "{summary}");
        s
    }
}
