//! Segment geometry in the fused space.
//!
//! A range query `(q, l, u)` fuses to the segment from `psi(q, l)` to `psi(q, u)`:
//! sweeping the attribute from `l` to `u` moves the fused query linearly along it.
//! Records whose attribute lies in the range sit within `|v - q| / beta` of that
//! segment, which is what the range engine's tubes exploit.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fusion::{psi_with, FusionParams};
use crate::metric::{dot, l2, l2_sq, Points};

/// Segment `a + t (b - a)` for `t` in `[0, 1]`; `a == b` is allowed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineSegment {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
}

impl LineSegment {
    pub fn new(a: Vec<f64>, b: Vec<f64>) -> Result<Self> {
        if a.len() != b.len() || a.is_empty() {
            return Err(Error::dim(format!(
                "endpoint dims {} and {}",
                a.len(),
                b.len()
            )));
        }
        Ok(Self { a, b })
    }

    pub fn dim(&self) -> usize {
        self.a.len()
    }

    pub fn is_degenerate(&self) -> bool {
        self.a == self.b
    }

    pub fn length(&self) -> f64 {
        l2(&self.a, &self.b)
    }

    pub fn midpoint(&self) -> Vec<f64> {
        self.a
            .iter()
            .zip(&self.b)
            .map(|(x, y)| 0.5 * (x + y))
            .collect()
    }

    pub fn point_at(&self, t: f64) -> Vec<f64> {
        self.a
            .iter()
            .zip(&self.b)
            .map(|(x, y)| x + t * (y - x))
            .collect()
    }

    fn delta(&self) -> Vec<f64> {
        self.b.iter().zip(&self.a).map(|(y, x)| y - x).collect()
    }

    /// Unit direction, `None` for a degenerate segment.
    pub fn direction(&self) -> Option<Vec<f64>> {
        let d = self.delta();
        let n = dot(&d, &d).sqrt();
        if n == 0.0 {
            return None;
        }
        Some(d.into_iter().map(|x| x / n).collect())
    }

    /// Parameter of the point of the segment closest to `x`.
    pub fn project(&self, x: &[f64]) -> f64 {
        self.line_parameter(x).clamp(0.0, 1.0)
    }

    /// Parameter of the orthogonal projection of `x` onto the infinite line.
    fn line_parameter(&self, x: &[f64]) -> f64 {
        let mut num = 0.0;
        let mut den = 0.0;
        for ((xi, ai), bi) in x.iter().zip(&self.a).zip(&self.b) {
            let di = bi - ai;
            num += (xi - ai) * di;
            den += di * di;
        }
        if den == 0.0 {
            0.0
        } else {
            num / den
        }
    }

    /// Sub-segment between parameters `t0` and `t1`.
    pub fn slice(&self, t0: f64, t1: f64) -> LineSegment {
        LineSegment {
            a: self.point_at(t0),
            b: self.point_at(t1),
        }
    }
}

/// A range-filtered query over one attribute.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RangeQuery {
    pub q: Vec<f64>,
    pub l: Vec<f64>,
    pub u: Vec<f64>,
}

impl RangeQuery {
    pub fn new(q: Vec<f64>, l: Vec<f64>, u: Vec<f64>) -> Result<Self> {
        if l.len() != u.len() {
            return Err(Error::dim("range bounds differ in dimension"));
        }
        if let Some(i) = l.iter().zip(&u).position(|(a, b)| !(a <= b)) {
            return Err(Error::InvalidRange(i));
        }
        Ok(Self { q, l, u })
    }

    pub fn contains(&self, f: &[f64]) -> bool {
        f.iter()
            .zip(&self.l)
            .zip(&self.u)
            .all(|((x, lo), hi)| lo <= x && x <= hi)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CylCoords {
    pub t: f64,
    pub r: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadiusParams {
    /// Content distance of the k-th nearest in-range record.
    pub d_k: f64,
    pub n: usize,
    /// Standard deviation of the neighbor distances.
    pub sigma: f64,
    /// Failure probability.
    pub delta: f64,
}

/// Weights of the direction, position and length terms of [`line_similarity`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimilarityWeights {
    pub direction: f64,
    pub position: f64,
    pub length: f64,
}

impl Default for SimilarityWeights {
    fn default() -> Self {
        Self {
            direction: 0.4,
            position: 0.4,
            length: 0.2,
        }
    }
}

impl SimilarityWeights {
    pub fn validate(&self) -> Result<()> {
        let w = [self.direction, self.position, self.length];
        if w.iter().any(|x| !(*x >= 0.0)) || (w.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::arg(format!(
                "similarity weights must be >= 0 and sum to 1, got {w:?}"
            )));
        }
        Ok(())
    }
}

pub fn range_to_line(query: &RangeQuery, p: &FusionParams) -> Result<LineSegment> {
    if query.q.len() != p.d || query.l.len() != p.m {
        return Err(Error::dim(format!(
            "range query dims ({}, {}) do not match ({}, {})",
            query.q.len(),
            query.l.len(),
            p.d,
            p.m
        )));
    }
    let a = psi_with(&query.q, &query.l, p.alpha, p.beta)?;
    let b = psi_with(&query.q, &query.u, p.alpha, p.beta)?;
    LineSegment::new(a, b)
}

pub fn point_segment_distance(x: &[f64], line: &LineSegment) -> f64 {
    let t = line.project(x);
    let mut s = 0.0;
    for ((xi, ai), bi) in x.iter().zip(&line.a).zip(&line.b) {
        let p = ai + t * (bi - ai);
        s += (xi - p) * (xi - p);
    }
    s.sqrt()
}

/// Minimum distance between two segments.
pub fn segment_distance(s1: &LineSegment, s2: &LineSegment) -> f64 {
    let mut best = point_segment_distance(&s1.a, s2)
        .min(point_segment_distance(&s1.b, s2))
        .min(point_segment_distance(&s2.a, s1))
        .min(point_segment_distance(&s2.b, s1));
    // Interior stationary point of |s1(s) - s2(t)|^2, when the segments are not parallel.
    let d1 = s1.delta();
    let d2 = s2.delta();
    let r: Vec<f64> = s1.a.iter().zip(&s2.a).map(|(x, y)| x - y).collect();
    let (a, b, c) = (dot(&d1, &d1), dot(&d1, &d2), dot(&d2, &d2));
    let (d, e) = (dot(&d1, &r), dot(&d2, &r));
    let den = a * c - b * b;
    if den > 1e-12 * a * c {
        let s = (b * e - c * d) / den;
        let t = (a * e - b * d) / den;
        if (0.0..=1.0).contains(&s) && (0.0..=1.0).contains(&t) {
            let p = s1.point_at(s);
            let q = s2.point_at(t);
            best = best.min(l2(&p, &q));
        }
    }
    best
}

/// Hausdorff distance between two segments.
///
/// The distance to a convex set is convex along a segment, so each directed
/// distance is attained at an endpoint and the result is exact.
pub fn hausdorff_distance(s1: &LineSegment, s2: &LineSegment) -> f64 {
    let h12 = point_segment_distance(&s1.a, s2).max(point_segment_distance(&s1.b, s2));
    let h21 = point_segment_distance(&s2.a, s1).max(point_segment_distance(&s2.b, s1));
    h12.max(h21)
}

fn same_segment(s1: &LineSegment, s2: &LineSegment) -> bool {
    (s1.a == s2.a && s1.b == s2.b) || (s1.a == s2.b && s1.b == s2.a)
}

/// Orientation-free similarity in `[0, 1]`, equal to one exactly when the
/// segments coincide as unordered endpoint pairs.
pub fn line_similarity(
    s1: &LineSegment,
    s2: &LineSegment,
    w: &SimilarityWeights,
    d_max: f64,
) -> Result<f64> {
    w.validate()?;
    if !(d_max > 0.0) {
        return Err(Error::arg(format!("d_max must be > 0, got {d_max}")));
    }
    if s1.dim() != s2.dim() {
        return Err(Error::dim("segments differ in dimension"));
    }
    let (Some(u1), Some(u2)) = (s1.direction(), s2.direction()) else {
        return Err(Error::DegenerateLine);
    };
    if same_segment(s1, s2) {
        return Ok(1.0);
    }
    let cos = dot(&u1, &u2).abs().min(1.0);
    let position = (1.0 - l2(&s1.midpoint(), &s2.midpoint()) / d_max).max(0.0);
    let (l1, l2_) = (s1.length(), s2.length());
    let ratio = (l1 / l2_).min(l2_ / l1);
    let sim = w.direction * cos + w.position * position + w.length * ratio;
    // Rounding can lift nearly identical segments to exactly one.
    Ok(sim.clamp(0.0, 1.0 - f64::EPSILON / 2.0))
}

pub fn cylindrical_coords(x: &[f64], line: &LineSegment) -> Result<CylCoords> {
    if line.is_degenerate() {
        return Err(Error::DegenerateLine);
    }
    let t = line.project(x);
    Ok(CylCoords {
        t,
        r: point_segment_distance(x, line),
    })
}

/// Tube radius `d_k / beta + sqrt(-ln(delta / 2) / (2 n)) * sigma`.
pub fn optimal_radius(rp: &RadiusParams, beta: f64) -> Result<f64> {
    if !(rp.delta > 0.0 && rp.delta < 2.0) {
        return Err(Error::arg(format!(
            "delta must lie in (0, 2), got {}",
            rp.delta
        )));
    }
    if rp.n < 1 || !(beta > 0.0) || !(rp.d_k >= 0.0) || !(rp.sigma >= 0.0) {
        return Err(Error::arg(
            "radius parameters must be finite with n >= 1 and beta > 0",
        ));
    }
    let tail = (-(rp.delta / 2.0).ln() / (2.0 * rp.n as f64)).sqrt();
    Ok(rp.d_k / beta + tail * rp.sigma)
}

/// Points per unit tube volume around `line`: `N_r / (pi r^2 |b - a|)`, where `N_r`
/// counts points within `r` whose projection falls inside the segment, so that
/// the count and the cylinder volume describe the same region.
pub fn local_density(line: &LineSegment, points: &Points, r: f64) -> Result<f64> {
    if !(r > 0.0) {
        return Err(Error::arg(format!("radius must be > 0, got {r}")));
    }
    if line.is_degenerate() {
        return Err(Error::DegenerateLine);
    }
    let r2 = r * r;
    let inside = points
        .rows()
        .filter(|x| {
            let t = line.line_parameter(x);
            (0.0..=1.0).contains(&t) && l2_sq(x, &line.point_at(t)) <= r2
        })
        .count();
    Ok(tube_density(inside, r, line.length()))
}

pub(crate) fn tube_density(count: usize, r: f64, length: f64) -> f64 {
    count as f64 / (std::f64::consts::PI * r * r * length)
}

/// Candidate count `k + ceil(c ln(1/eps) delta_h eta)`.
pub fn adjusted_k(k: usize, eps: f64, delta_h: f64, eta: f64, c: f64) -> Result<usize> {
    if k < 1 {
        return Err(Error::arg("k must be at least 1"));
    }
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::arg(format!("eps must lie in (0, 1), got {eps}")));
    }
    if !(delta_h >= 0.0) || !(eta >= 0.0) || !(c >= 0.0) {
        return Err(Error::arg("delta_h, eta and c must be >= 0"));
    }
    let extra = c * -eps.ln() * delta_h * eta;
    if !extra.is_finite() {
        return Err(Error::arg("adjusted candidate count overflows"));
    }
    // Absorb rounding noise when the product lands on an integer.
    Ok(k + (extra * (1.0 - 1e-12)).ceil() as usize)
}
