use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A content vector with its ordered attribute vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub content: Vec<f64>,
    pub attributes: Vec<Vec<f64>>,
}

impl Record {
    pub fn new(content: Vec<f64>, attributes: Vec<Vec<f64>>) -> Self {
        Self {
            content,
            attributes,
        }
    }

    /// Record with exactly one attribute vector.
    pub fn single(content: Vec<f64>, attribute: Vec<f64>) -> Self {
        Self {
            content,
            attributes: vec![attribute],
        }
    }

    pub fn attribute(&self, j: usize) -> &[f64] {
        &self.attributes[j]
    }
}

/// Identity of an attribute value: the exact bit pattern of its components.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct AttrKey(Vec<u64>);

impl AttrKey {
    pub fn of(values: &[f64]) -> Self {
        // -0.0 and 0.0 compare equal numerically; fold them together.
        AttrKey(
            values
                .iter()
                .map(|v| if *v == 0.0 { 0u64 } else { v.to_bits() })
                .collect(),
        )
    }

    /// Key for a tuple of attribute vectors, one per attribute slot.
    pub fn of_combination<'a, I>(parts: I) -> Self
    where
        I: IntoIterator<Item = &'a [f64]>,
    {
        let mut bits = Vec::new();
        for p in parts {
            bits.push(p.len() as u64);
            bits.extend(AttrKey::of(p).0);
        }
        AttrKey(bits)
    }
}

/// Checks that all records share the content dimension and per-slot attribute dimensions,
/// returning `(d, [m_1, ..., m_F])`.
pub fn check_uniform(records: &[Record]) -> Result<(usize, Vec<usize>)> {
    let first = records.first().ok_or(Error::EmptyDataset)?;
    let d = first.content.len();
    let ms: Vec<usize> = first.attributes.iter().map(Vec::len).collect();
    if d == 0 {
        return Err(Error::dim("content dimension must be at least 1"));
    }
    for (i, r) in records.iter().enumerate() {
        if r.content.len() != d {
            return Err(Error::dim(format!(
                "record {i}: content dimension {} != {d}",
                r.content.len()
            )));
        }
        if r.attributes.len() != ms.len() {
            return Err(Error::dim(format!(
                "record {i}: {} attributes, expected {}",
                r.attributes.len(),
                ms.len()
            )));
        }
        for (j, (a, m)) in r.attributes.iter().zip(&ms).enumerate() {
            if a.len() != *m {
                return Err(Error::dim(format!(
                    "record {i}: attribute {j} has dimension {}, expected {m}",
                    a.len()
                )));
            }
        }
        if r.content
            .iter()
            .chain(r.attributes.iter().flatten())
            .any(|x| !x.is_finite())
        {
            return Err(Error::arg(format!("record {i}: non-finite value")));
        }
    }
    Ok((d, ms))
}
