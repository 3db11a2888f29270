//! Synthetic workloads for benchmarks and tests.
//!
//! Content vectors are uniform in `[0, 1)^d`. Categorical attributes assign each
//! record one of `classes` labels drawn uniformly or from a Zipf law with
//! exponent `s` (label 0 most frequent); every label maps to a distinct point of
//! the integer grid `{0..9}^m`. Numeric attributes are uniform in `[0, 1)`.

use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Zipf};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metric::Points;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum LabelDistribution {
    Uniform,
    Zipf(f64),
}

impl FromStr for LabelDistribution {
    type Err = Error;

    /// `uniform` or `zipf:<s>`.
    fn from_str(s: &str) -> Result<Self> {
        if s == "uniform" {
            return Ok(Self::Uniform);
        }
        match s.strip_prefix("zipf:").map(str::parse::<f64>) {
            Some(Ok(e)) if e > 0.0 => Ok(Self::Zipf(e)),
            _ => Err(Error::arg(format!("unknown label distribution {s:?}"))),
        }
    }
}

pub fn uniform_points(n: usize, dim: usize, seed: u64) -> Points {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p = Points::with_capacity(dim, n);
    let mut row = vec![0.0; dim];
    for _ in 0..n {
        row.iter_mut().for_each(|x| *x = rng.gen::<f64>());
        p.push(&row);
    }
    p
}

pub fn labels(n: usize, classes: usize, dist: LabelDistribution, seed: u64) -> Result<Vec<usize>> {
    if classes < 1 {
        return Err(Error::arg("need at least one class"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match dist {
        LabelDistribution::Uniform => Ok((0..n).map(|_| rng.gen_range(0..classes)).collect()),
        LabelDistribution::Zipf(s) => {
            let z = Zipf::new(classes as u64, s).map_err(|e| Error::arg(format!("zipf: {e}")))?;
            Ok((0..n).map(|_| z.sample(&mut rng) as usize - 1).collect())
        }
    }
}

/// `classes` distinct points of `{0..9}^m`, in a seeded order.
pub fn class_vectors(classes: usize, m: usize, seed: u64) -> Result<Points> {
    let capacity = 10f64.powi(m as i32);
    if m < 1 || classes as f64 > capacity {
        return Err(Error::arg(format!(
            "cannot place {classes} classes on a 10^{m} grid"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seen = std::collections::HashSet::new();
    let mut out = Points::with_capacity(m, classes);
    if capacity <= 4.0 * classes as f64 {
        let mut all: Vec<usize> = (0..capacity as usize).collect();
        all.shuffle(&mut rng);
        for code in all.into_iter().take(classes) {
            let row: Vec<f64> = (0..m)
                .map(|i| ((code / 10usize.pow(i as u32)) % 10) as f64)
                .collect();
            out.push(&row);
        }
        return Ok(out);
    }
    while out.len() < classes {
        let row: Vec<u8> = (0..m).map(|_| rng.gen_range(0..10u8)).collect();
        if seen.insert(row.clone()) {
            out.push(&row.iter().map(|&x| x as f64).collect::<Vec<_>>());
        }
    }
    Ok(out)
}

/// Attribute rows for the given labels.
pub fn attributes_for(labels: &[usize], classes: &Points) -> Points {
    let mut out = Points::with_capacity(classes.dim(), labels.len());
    for &l in labels {
        out.push(classes.row(l));
    }
    out
}

/// A content set with one categorical attribute.
#[derive(Debug, Clone, PartialEq)]
pub struct Categorical {
    pub contents: Points,
    pub attributes: Points,
    pub labels: Vec<usize>,
    pub classes: Points,
}

pub fn categorical(
    n: usize,
    d: usize,
    m: usize,
    classes: usize,
    dist: LabelDistribution,
    seed: u64,
) -> Result<Categorical> {
    let contents = uniform_points(n, d, seed);
    let labels = labels(n, classes, dist, seed.wrapping_add(1))?;
    let classes = class_vectors(classes, m, seed.wrapping_add(2))?;
    let attributes = attributes_for(&labels, &classes);
    Ok(Categorical {
        contents,
        attributes,
        labels,
        classes,
    })
}
