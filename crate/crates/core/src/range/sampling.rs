use rayon::prelude::*;

use super::kmeans::kmeans;
use super::line_index::IndexedLine;
use crate::error::{Error, Result};
use crate::fusion::FusionParams;
use crate::geometry::{
    hausdorff_distance, optimal_radius, range_to_line, LineSegment, RadiusParams, RangeQuery,
};
use crate::metric::{l2, Points};
use crate::record::AttrKey;

/// Sample sets standing in for the query and range distributions.
#[derive(Debug, Clone, PartialEq)]
pub struct Distributions {
    /// Cluster centroids of the content vectors, largest cluster first.
    pub queries: Points,
    pub weights: Vec<usize>,
    /// Candidate lower and upper range endpoints.
    pub lower: Points,
    pub upper: Points,
}

/// Standard-normal grid used to sample each endpoint distribution.
const GRID: usize = 17;
const GRID_SPAN: f64 = 2.0;

/// Query samples from k-means with `ceil(sqrt(n))` centroids; endpoint samples
/// from a grid over `N(mu - c sigma, sigma^2 / 2)` and `N(mu + c sigma, sigma^2 / 2)`
/// per attribute component, clipped to the observed range.
pub fn estimate_distributions(
    contents: &Points,
    attrs: &Points,
    c: f64,
    seed: u64,
) -> Result<Distributions> {
    let n = contents.len();
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    if attrs.len() != n {
        return Err(Error::dim("content and attribute counts differ"));
    }
    let k = (n as f64).sqrt().ceil() as usize;
    let clusters = kmeans(contents, k, 25, seed);
    let mut order: Vec<usize> = (0..clusters.sizes.len()).collect();
    order.sort_by(|&a, &b| clusters.sizes[b].cmp(&clusters.sizes[a]).then(a.cmp(&b)));
    let mut queries = Points::with_capacity(contents.dim(), order.len());
    for &j in &order {
        queries.push(clusters.centroids.row(j));
    }
    let weights = order.iter().map(|&j| clusters.sizes[j]).collect();

    let m = attrs.dim();
    let mut mu = vec![0.0; m];
    let mut lo = vec![f64::INFINITY; m];
    let mut hi = vec![f64::NEG_INFINITY; m];
    for f in attrs.rows() {
        for i in 0..m {
            mu[i] += f[i];
            lo[i] = lo[i].min(f[i]);
            hi[i] = hi[i].max(f[i]);
        }
    }
    mu.iter_mut().for_each(|x| *x /= n as f64);
    let mut sigma = vec![0.0; m];
    for f in attrs.rows() {
        for i in 0..m {
            sigma[i] += (f[i] - mu[i]).powi(2);
        }
    }
    sigma.iter_mut().for_each(|s| *s = (*s / n as f64).sqrt());

    let grid = |shift: f64| {
        let mut pts = Points::new(m);
        let mut seen = std::collections::HashSet::new();
        for g in 0..GRID {
            let z = -GRID_SPAN + 2.0 * GRID_SPAN * g as f64 / (GRID - 1) as f64;
            let row: Vec<f64> = (0..m)
                .map(|i| {
                    (mu[i] + shift * c * sigma[i] + sigma[i] / 2f64.sqrt() * z).clamp(lo[i], hi[i])
                })
                .collect();
            if seen.insert(AttrKey::of(&row)) {
                pts.push(&row);
            }
        }
        pts
    };
    Ok(Distributions {
        queries,
        weights,
        lower: grid(-1.0),
        upper: grid(1.0),
    })
}

/// Greedy farthest-first ordering of `points` starting from index 0, stopped once
/// every point lies within `resolution` of a chosen one. Returns chosen indices.
fn farthest_first(
    n: usize,
    resolution: f64,
    cap: usize,
    dist: impl Fn(usize, usize) -> f64 + Sync,
) -> Vec<usize> {
    if n == 0 {
        return Vec::new();
    }
    let mut chosen = vec![0usize];
    let mut gap: Vec<f64> = (0..n).into_par_iter().map(|i| dist(0, i)).collect();
    while chosen.len() < cap {
        let (far, &d) = gap
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1).then(b.0.cmp(&a.0)))
            .expect("non-empty");
        if d <= resolution {
            break;
        }
        chosen.push(far);
        gap.par_iter_mut()
            .enumerate()
            .for_each(|(i, g)| *g = g.min(dist(far, i)));
    }
    chosen
}

/// Options of [`sample_range_lines`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplingConfig {
    /// Coverage target in the fused space.
    pub eps_cover: f64,
    /// Failure probability of the tube radius.
    pub delta: f64,
    /// Neighbors the tube radius must capture.
    pub k: usize,
    pub max_lines: usize,
}

/// Samples query lines covering the estimated query distribution and prunes them
/// to an `eps_cover`-net under the Hausdorff distance (at most `max_lines`). Each
/// line gets its base tube radius from an exact scan at its sampled query.
pub fn sample_range_lines(
    contents: &Points,
    attrs: &Points,
    dist: &Distributions,
    params: &FusionParams,
    cfg: &SamplingConfig,
) -> Result<Vec<IndexedLine>> {
    if contents.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if !(cfg.eps_cover > 0.0) || cfg.k < 1 || cfg.max_lines < 1 {
        return Err(Error::arg(
            "eps_cover must be > 0, k and max_lines at least 1",
        ));
    }
    let r_q = params.beta * cfg.eps_cover;
    let r_r = params.beta * cfg.eps_cover / params.alpha;
    let qs = farthest_first(dist.queries.len(), r_q, usize::MAX, |a, b| {
        l2(dist.queries.row(a), dist.queries.row(b))
    });
    let ls = farthest_first(dist.lower.len(), r_r, usize::MAX, |a, b| {
        l2(dist.lower.row(a), dist.lower.row(b))
    });
    let us = farthest_first(dist.upper.len(), r_r, usize::MAX, |a, b| {
        l2(dist.upper.row(a), dist.upper.row(b))
    });

    // Any two endpoint samples form a range, so narrow ranges near either end of
    // the attribute domain are covered as well.
    let endpoints: Vec<&[f64]> = ls
        .iter()
        .map(|&i| dist.lower.row(i))
        .chain(us.iter().map(|&i| dist.upper.row(i)))
        .collect();
    let mut ranges: Vec<(Vec<f64>, Vec<f64>)> = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for (i, l) in endpoints.iter().enumerate() {
        for u in &endpoints[i..] {
            let lo: Vec<f64> = l.iter().zip(*u).map(|(a, b)| a.min(*b)).collect();
            let hi: Vec<f64> = l.iter().zip(*u).map(|(a, b)| a.max(*b)).collect();
            if seen.insert(AttrKey::of_combination([&lo[..], &hi[..]])) {
                ranges.push((lo, hi));
            }
        }
    }

    let mut sources = Vec::with_capacity(qs.len() * ranges.len());
    for &qi in &qs {
        for (l, u) in &ranges {
            sources.push(RangeQuery::new(
                dist.queries.row(qi).to_vec(),
                l.clone(),
                u.clone(),
            )?);
        }
    }
    let segments = sources
        .iter()
        .map(|s| range_to_line(s, params))
        .collect::<Result<Vec<LineSegment>>>()?;
    let keep = farthest_first(segments.len(), cfg.eps_cover, cfg.max_lines, |a, b| {
        hausdorff_distance(&segments[a], &segments[b])
    });

    keep.into_par_iter()
        .map(|i| {
            let source = sources[i].clone();
            let base_radius = base_radius(contents, attrs, &source, params, cfg)?;
            Ok(IndexedLine {
                segment: segments[i].clone(),
                base_radius,
                density: 0.0,
                source,
            })
        })
        .collect()
}

/// Tube radius for one sampled range query; floored at a tiny positive value so
/// that ranges holding no records still get a valid tube.
fn base_radius(
    contents: &Points,
    attrs: &Points,
    rq: &RangeQuery,
    params: &FusionParams,
    cfg: &SamplingConfig,
) -> Result<f64> {
    let mut dists: Vec<f64> = contents
        .rows()
        .zip(attrs.rows())
        .filter(|(_, f)| rq.contains(f))
        .map(|(v, _)| l2(v, &rq.q))
        .collect();
    let take = cfg.k.min(dists.len());
    let (d_k, sigma) = if take == 0 {
        (0.0, 0.0)
    } else {
        if take < dists.len() {
            dists.select_nth_unstable_by(take - 1, f64::total_cmp);
        }
        let top = &dists[..take];
        let d_k = top.iter().copied().fold(0.0, f64::max);
        let mean = top.iter().sum::<f64>() / take as f64;
        let var = top.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / take as f64;
        (d_k, var.sqrt())
    };
    let r = optimal_radius(
        &RadiusParams {
            d_k,
            n: contents.len(),
            sigma,
            delta: cfg.delta,
        },
        params.beta,
    )?;
    Ok(r.max(1e-9))
}
