//! The attribute-fusing transform and its parameter selection.
//!
//! A content vector `v` of dimension `d` is split into `ceil(d/m)` blocks of
//! length `m` (the last one shorter when `m` does not divide `d`). Each block
//! is shifted by `alpha * f` and the result is scaled by `1/beta`:
//!
//! ```text
//! psi(v, f) = [ (v_1 - alpha f) / beta, ..., (v_n - alpha f) / beta ]
//! ```
//!
//! Records sharing an attribute keep their mutual distances up to the factor
//! `1/beta`; records with different attributes are pushed apart by
//! `(alpha/beta) * sqrt(d/m) * |f_1 - f_2|` when their contents coincide.
//!
//! Parameter selection sets both separation inequalities to equality:
//! `beta = delta_max / epsilon_f` and
//! `alpha = beta * delta_max / (sigma_min * sqrt(d/m)) * (1 + epsilon_f * beta / delta_max)`,
//! each floored at `1 + ETA_MIN`. The shorter closed form that drops `beta`
//! from the `alpha` expression, `delta_max / (sigma_min sqrt(d/m)) * (1 + epsilon_f)`,
//! is weaker than the bound it is derived from and is not used.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metric::{l2_sq, Points};
use crate::record::AttrKey;

/// Margin keeping `alpha` and `beta` strictly above one.
pub const ETA_MIN: f64 = 1e-6;

/// Parameters of one application of the transform.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FusionParams {
    pub alpha: f64,
    pub beta: f64,
    /// Maximum fused distance between two records of the same attribute class.
    pub epsilon_f: f64,
    /// Maximum pairwise content distance of the dataset.
    pub delta_max: f64,
    /// Minimum distance between distinct attribute values; infinite when there is
    /// only one attribute class.
    pub sigma_min: f64,
    pub d: usize,
    pub m: usize,
}

impl FusionParams {
    /// Parameters chosen by hand (e.g. overrides from the command line). Only the
    /// structural invariants are checked, not the separation bound.
    pub fn manual(alpha: f64, beta: f64, d: usize, m: usize) -> Result<Self> {
        let p = FusionParams {
            alpha,
            beta,
            epsilon_f: f64::NAN,
            delta_max: f64::NAN,
            sigma_min: f64::NAN,
            d,
            m,
        };
        p.check_structure()?;
        Ok(p)
    }

    fn check_structure(&self) -> Result<()> {
        check_dims(self.d, self.m)?;
        if !(self.alpha > 1.0) || !self.alpha.is_finite() {
            return Err(Error::arg(format!(
                "alpha must be finite and > 1, got {}",
                self.alpha
            )));
        }
        if !(self.beta > 1.0) || !self.beta.is_finite() {
            return Err(Error::arg(format!(
                "beta must be finite and > 1, got {}",
                self.beta
            )));
        }
        Ok(())
    }

    /// Full invariant check: structure plus both separation conditions.
    pub fn validate(&self) -> Result<()> {
        self.check_structure()?;
        if !(self.epsilon_f > 0.0) || !(self.delta_max >= 0.0) || !(self.sigma_min > 0.0) {
            return Err(Error::arg("epsilon_f, delta_max and sigma_min must be set"));
        }
        let tol = 1e-12;
        if self.beta < (self.delta_max / self.epsilon_f) * (1.0 - tol) {
            return Err(Error::arg("beta below delta_max / epsilon_f"));
        }
        let lb = alpha_lower_bound(
            self.beta,
            self.delta_max,
            self.sigma_min,
            self.d,
            self.m,
            self.epsilon_f,
        );
        if self.alpha < lb * (1.0 - tol) {
            return Err(Error::arg(format!(
                "alpha {} below lower bound {lb}",
                self.alpha
            )));
        }
        Ok(())
    }

    /// `true` when the separation inequalities were used to derive these parameters.
    pub fn is_derived(&self) -> bool {
        self.epsilon_f.is_finite()
    }
}

fn check_dims(d: usize, m: usize) -> Result<()> {
    if m < 1 || d < 1 || m > d {
        return Err(Error::dim(format!("need 1 <= m <= d, got m={m}, d={d}")));
    }
    Ok(())
}

/// Splits `v` into consecutive blocks of length `m`; the final block is shorter
/// when `m` does not divide `v.len()`.
pub fn block_partition(v: &[f64], m: usize) -> Result<Vec<&[f64]>> {
    check_dims(v.len(), m)?;
    Ok(v.chunks(m).collect())
}

/// Writes `psi(v, f)` into `out` without validating dimensions.
#[inline]
pub fn psi_into(v: &[f64], f: &[f64], alpha: f64, beta: f64, out: &mut [f64]) {
    let m = f.len();
    for (i, (o, x)) in out.iter_mut().zip(v).enumerate() {
        *o = (x - alpha * f[i % m]) / beta;
    }
}

/// Applies the transform with explicit `alpha`, `beta`.
pub fn psi_with(v: &[f64], f: &[f64], alpha: f64, beta: f64) -> Result<Vec<f64>> {
    check_dims(v.len(), f.len())?;
    let mut out = vec![0.0; v.len()];
    psi_into(v, f, alpha, beta, &mut out);
    Ok(out)
}

/// Applies the transform under `p`, checking dimensions against it.
pub fn psi_transform(v: &[f64], f: &[f64], p: &FusionParams) -> Result<Vec<f64>> {
    if v.len() != p.d || f.len() != p.m {
        return Err(Error::dim(format!(
            "expected content dim {} and attribute dim {}, got {} and {}",
            p.d,
            p.m,
            v.len(),
            f.len()
        )));
    }
    psi_with(v, f, p.alpha, p.beta)
}

/// Lower bound on `alpha` for a given `beta`. Zero for a zero-diameter dataset or
/// when no attribute separation is needed.
pub fn alpha_lower_bound(
    beta: f64,
    delta_max: f64,
    sigma_min: f64,
    d: usize,
    m: usize,
    epsilon_f: f64,
) -> f64 {
    if delta_max == 0.0 || sigma_min.is_infinite() {
        return 0.0;
    }
    let scale = (d as f64 / m as f64).sqrt();
    (beta * delta_max) / (sigma_min * scale) * (1.0 + epsilon_f * beta / delta_max)
}

/// Smallest parameters meeting both separation conditions.
///
/// `sigma_min = f64::INFINITY` means the dataset has a single attribute class, in
/// which case `alpha` drops to its floor.
pub fn select_parameters(
    delta_max: f64,
    sigma_min: f64,
    d: usize,
    m: usize,
    epsilon_f: f64,
) -> Result<FusionParams> {
    check_dims(d, m)?;
    if !(delta_max >= 0.0) || !delta_max.is_finite() {
        return Err(Error::arg(format!(
            "delta_max must be finite and >= 0, got {delta_max}"
        )));
    }
    if !(epsilon_f > 0.0) || !epsilon_f.is_finite() {
        return Err(Error::arg(format!(
            "epsilon_f must be finite and > 0, got {epsilon_f}"
        )));
    }
    if sigma_min == 0.0 {
        return Err(Error::DegenerateSeparation(
            "distinct attribute classes share a value (sigma_min = 0)".into(),
        ));
    }
    if !(sigma_min > 0.0) {
        return Err(Error::arg(format!(
            "sigma_min must be > 0, got {sigma_min}"
        )));
    }
    let floor = 1.0 + ETA_MIN;
    let beta = (delta_max / epsilon_f).max(floor);
    let alpha = alpha_lower_bound(beta, delta_max, sigma_min, d, m, epsilon_f).max(floor);
    let p = FusionParams {
        alpha,
        beta,
        epsilon_f,
        delta_max,
        sigma_min,
        d,
        m,
    };
    p.check_structure()?;
    Ok(p)
}

/// Dataset extremes driving parameter selection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Extremes {
    pub delta_max: f64,
    pub separation: Separation,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Separation {
    /// Minimum distance between attribute vectors of different classes.
    Min(f64),
    /// Only one attribute class exists; alpha may sit at its floor.
    NotNeeded,
}

impl Separation {
    /// `sigma_min` as consumed by [`select_parameters`].
    pub fn sigma_min(self) -> f64 {
        match self {
            Separation::Min(s) => s,
            Separation::NotNeeded => f64::INFINITY,
        }
    }
}

/// Maximum pairwise content distance and minimum inter-class attribute distance.
pub fn estimate_extremes(contents: &Points, attrs: &Points) -> Result<Extremes> {
    if contents.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if contents.len() != attrs.len() {
        return Err(Error::dim(format!(
            "{} content vectors but {} attribute vectors",
            contents.len(),
            attrs.len()
        )));
    }
    let delta_max = max_pairwise(contents).sqrt();

    let mut seen = std::collections::HashSet::new();
    let mut distinct = Points::new(attrs.dim());
    for a in attrs.rows() {
        if seen.insert(AttrKey::of(a)) {
            distinct.push(a);
        }
    }
    let separation = if distinct.len() < 2 {
        Separation::NotNeeded
    } else {
        Separation::Min(min_pairwise(&distinct).sqrt())
    };
    Ok(Extremes {
        delta_max,
        separation,
    })
}

fn max_pairwise(p: &Points) -> f64 {
    (0..p.len())
        .into_par_iter()
        .map(|i| {
            let a = p.row(i);
            ((i + 1)..p.len())
                .map(|j| l2_sq(a, p.row(j)))
                .fold(0.0, f64::max)
        })
        .reduce(|| 0.0, f64::max)
}

fn min_pairwise(p: &Points) -> f64 {
    (0..p.len())
        .into_par_iter()
        .map(|i| {
            let a = p.row(i);
            ((i + 1)..p.len())
                .map(|j| l2_sq(a, p.row(j)))
                .fold(f64::INFINITY, f64::min)
        })
        .reduce(|| f64::INFINITY, f64::min)
}
