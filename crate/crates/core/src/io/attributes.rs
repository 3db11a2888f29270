//! Attribute files and the categorical embedding.
//!
//! An attribute file starts with a schema line naming each attribute's kind and
//! dimension, then a CSV header and one row per record:
//!
//! ```text
//! #schema 2,cat:3
//! id,attr_1,attr_2
//! 0,0.5,1.0,red
//! 1,0.1,2.0,blue
//! ```
//!
//! A numeric attribute of dimension `m` spans `m` cells. A categorical attribute
//! spans a single token cell and is embedded into `m` dimensions; a bare `cat`
//! leaves `m` to the caller.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::metric::Points;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AttributeKind {
    Numeric(usize),
    /// Zero means the embedding dimension was not declared.
    Categorical(usize),
}

impl AttributeKind {
    pub fn dim(self) -> usize {
        match self {
            Self::Numeric(m) | Self::Categorical(m) => m,
        }
    }

    fn cells(self) -> usize {
        match self {
            Self::Numeric(m) => m,
            Self::Categorical(_) => 1,
        }
    }
}

impl FromStr for AttributeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.trim() == "cat" {
            return Ok(Self::Categorical(0));
        }
        let (cat, m) = match s.trim().strip_prefix("cat:") {
            Some(rest) => (true, rest),
            None => (false, s.trim()),
        };
        let m: usize = m
            .parse()
            .map_err(|_| Error::arg(format!("bad schema entry {s:?}")))?;
        if m < 1 {
            return Err(Error::arg("attribute dimension must be at least 1"));
        }
        Ok(if cat {
            Self::Categorical(m)
        } else {
            Self::Numeric(m)
        })
    }
}

/// Token-to-vector table of one categorical attribute.
pub type Vocabulary = BTreeMap<String, Vec<f64>>;

/// A raw attribute column before embedding.
#[derive(Debug, Clone, PartialEq)]
pub enum AttributeColumn {
    Numeric(Points),
    Tokens(Vec<String>),
}

fn fnv1a(bytes: &[u8], seed: u64) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64 ^ seed.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Embeds a column into `m` dimensions. Numeric rows pass through unchanged
/// (their dimension must be `m`). Tokens map to points of the integer grid
/// `{0..g-1}^m` chosen by a seeded hash; a taken point is resolved by stepping
/// to the next grid point, so distinct tokens always sit at distance >= 1.
pub fn embed_attributes(column: &AttributeColumn, m: usize, seed: u64) -> Result<Points> {
    if m < 1 {
        return Err(Error::arg("attribute dimension must be at least 1"));
    }
    let tokens = match column {
        AttributeColumn::Numeric(p) => {
            if p.dim() != m {
                return Err(Error::dim(format!(
                    "numeric attribute has dimension {}, expected {m}",
                    p.dim()
                )));
            }
            return Ok(p.clone());
        }
        AttributeColumn::Tokens(t) => t,
    };
    let distinct: HashSet<&str> = tokens.iter().map(String::as_str).collect();
    // Grid side with at least four points per distinct token.
    let want = 4.0 * distinct.len().max(1) as f64;
    let side = (want.powf(1.0 / m as f64).ceil() as u64).max(2);
    let mut taken: HashSet<Vec<u64>> = HashSet::new();
    let mut assigned: HashMap<&str, Vec<u64>> = HashMap::new();
    let mut out = Points::with_capacity(m, tokens.len());
    for t in tokens {
        let cell = assigned.entry(t.as_str()).or_insert_with(|| {
            let mut cell: Vec<u64> = (0..m)
                .map(|i| fnv1a(t.as_bytes(), seed ^ i as u64) % side)
                .collect();
            while !taken.insert(cell.clone()) {
                for c in cell.iter_mut() {
                    *c = (*c + 1) % side;
                    if *c != 0 {
                        break;
                    }
                }
            }
            cell
        });
        out.push(&cell.iter().map(|&c| c as f64).collect::<Vec<_>>());
    }
    Ok(out)
}

/// Attribute table read from a file, one column per attribute.
#[derive(Debug, Clone, PartialEq)]
pub struct AttributeTable {
    pub schema: Vec<AttributeKind>,
    pub columns: Vec<AttributeColumn>,
}

impl AttributeTable {
    pub fn len(&self) -> usize {
        match self.columns.first() {
            Some(AttributeColumn::Numeric(p)) => p.len(),
            Some(AttributeColumn::Tokens(t)) => t.len(),
            None => 0,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Embedded attribute points, one per attribute, with the vocabulary of every
    /// categorical attribute. Undeclared categorical dimensions use `default_m`.
    pub fn embed(
        &self,
        seed: u64,
        default_m: usize,
    ) -> Result<(Vec<Points>, Vec<Option<Vocabulary>>)> {
        let mut points = Vec::with_capacity(self.columns.len());
        let mut vocab = Vec::with_capacity(self.columns.len());
        for (kind, col) in self.schema.iter().zip(&self.columns) {
            let m = match kind.dim() {
                0 => default_m,
                m => m,
            };
            let p = embed_attributes(col, m, seed)?;
            vocab.push(match col {
                AttributeColumn::Tokens(t) => Some(
                    t.iter()
                        .cloned()
                        .zip(p.rows().map(<[f64]>::to_vec))
                        .collect(),
                ),
                AttributeColumn::Numeric(_) => None,
            });
            points.push(p);
        }
        Ok((points, vocab))
    }

    /// Embeds query rows with the vocabularies of an existing index. Tokens the
    /// index has never seen are an error.
    pub fn embed_with(&self, vocab: &[Option<Vocabulary>]) -> Result<Vec<Points>> {
        if vocab.len() != self.columns.len() {
            return Err(Error::dim(format!(
                "{} query attributes for an index with {}",
                self.columns.len(),
                vocab.len()
            )));
        }
        self.columns
            .iter()
            .zip(vocab)
            .map(|(col, v)| match (col, v) {
                (AttributeColumn::Numeric(p), None) => Ok(p.clone()),
                (AttributeColumn::Tokens(t), Some(v)) => {
                    let m = v.values().next().map_or(1, Vec::len);
                    let mut out = Points::with_capacity(m, t.len());
                    for tok in t {
                        out.push(v.get(tok).ok_or_else(|| {
                            Error::arg(format!("unknown attribute value {tok:?}"))
                        })?);
                    }
                    Ok(out)
                }
                _ => Err(Error::arg("query attribute kinds do not match the index")),
            })
            .collect()
    }
}

pub fn load_attributes(path: &Path) -> Result<AttributeTable> {
    read_attributes(BufReader::new(File::open(path)?))
}

/// Parses an attribute file; rows may appear in any order but their ids must be
/// exactly `0..n`.
pub fn read_attributes<R: Read>(reader: R) -> Result<AttributeTable> {
    let mut reader = BufReader::new(reader);
    let mut first = String::new();
    reader.read_line(&mut first)?;
    let schema_len = first.len() as u64;
    let declared = first
        .trim()
        .strip_prefix("#schema")
        .ok_or_else(|| Error::Parse {
            offset: 0,
            message: "missing '#schema' line".into(),
        })?;
    let schema = declared
        .split(',')
        .map(|s| s.parse::<AttributeKind>())
        .collect::<Result<Vec<_>>>()
        .map_err(|e| Error::Parse {
            offset: 0,
            message: e.to_string(),
        })?;
    let cells: usize = schema.iter().map(|k| k.cells()).sum();

    let mut rdr = csv::ReaderBuilder::new()
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| Error::Parse {
            offset: schema_len,
            message: e.to_string(),
        })?
        .clone();
    if headers.len() != schema.len() + 1 || headers.get(0) != Some("id") {
        return Err(Error::Parse {
            offset: schema_len,
            message: format!("header must be id plus {} attribute names", schema.len()),
        });
    }
    let mut rows: Vec<(usize, Vec<String>)> = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::Parse {
            offset: schema_len + e.position().map(|p| p.byte()).unwrap_or(0),
            message: e.to_string(),
        })?;
        let offset = schema_len + rec.position().map(|p| p.byte()).unwrap_or(0);
        if rec.len() != cells + 1 {
            return Err(Error::Parse {
                offset,
                message: format!("row has {} cells, expected {}", rec.len(), cells + 1),
            });
        }
        let id = rec[0].parse::<usize>().map_err(|_| Error::Parse {
            offset,
            message: format!("bad id {:?}", &rec[0]),
        })?;
        rows.push((id, rec.iter().skip(1).map(str::to_owned).collect()));
    }
    rows.sort_by_key(|r| r.0);
    if rows.iter().enumerate().any(|(i, r)| r.0 != i) {
        return Err(Error::Parse {
            offset: schema_len,
            message: "ids must be exactly 0..n".into(),
        });
    }

    let mut columns = Vec::with_capacity(schema.len());
    let mut at = 0;
    for kind in &schema {
        columns.push(match *kind {
            AttributeKind::Numeric(m) => {
                let mut p = Points::with_capacity(m, rows.len());
                for (id, cells) in &rows {
                    let row = cells[at..at + m]
                        .iter()
                        .map(|c| c.parse::<f64>())
                        .collect::<std::result::Result<Vec<_>, _>>()
                        .map_err(|_| Error::Parse {
                            offset: schema_len,
                            message: format!("non-numeric cell in row {id}"),
                        })?;
                    p.push(&row);
                }
                AttributeColumn::Numeric(p)
            }
            AttributeKind::Categorical(_) => {
                AttributeColumn::Tokens(rows.iter().map(|r| r.1[at].clone()).collect())
            }
        });
        at += kind.cells();
    }
    Ok(AttributeTable { schema, columns })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metric::l2;

    #[test]
    fn equal_tokens_share_a_vector() {
        let col = AttributeColumn::Tokens(vec!["A".into(), "A".into(), "B".into()]);
        let p = embed_attributes(&col, 3, 7).unwrap();
        assert_eq!(p.row(0), p.row(1));
        assert_ne!(p.row(0), p.row(2));
        assert_eq!(p, embed_attributes(&col, 3, 7).unwrap());
    }

    #[test]
    fn numeric_passes_through() {
        let p = Points::from_rows(2, &[[0.5, 1.5], [2.0, -1.0]]).unwrap();
        assert_eq!(
            embed_attributes(&AttributeColumn::Numeric(p.clone()), 2, 1).unwrap(),
            p
        );
        assert!(embed_attributes(&AttributeColumn::Numeric(p), 3, 1).is_err());
    }

    #[test]
    fn many_tokens_stay_apart() {
        let tokens: Vec<String> = (0..10_000).map(|i| format!("tok{i}")).collect();
        let p = embed_attributes(&AttributeColumn::Tokens(tokens), 10, 3).unwrap();
        let mut cells = HashSet::new();
        for r in p.rows() {
            assert!(cells.insert(r.iter().map(|x| *x as i64).collect::<Vec<_>>()));
        }
        // Distinct integer grid points are at least 1 apart; spot-check a scan.
        for i in 0..300 {
            for j in (i + 1)..300 {
                assert!(l2(p.row(i), p.row(j)) >= 1.0);
            }
        }
    }

    #[test]
    fn parse_attribute_file() {
        let text = "#schema 2,cat:3\nid,attr_1,attr_2\n1,0.1,2.0,blue\n0,0.5,1.0,red\n";
        let t = read_attributes(text.as_bytes()).unwrap();
        assert_eq!(
            t.schema,
            vec![AttributeKind::Numeric(2), AttributeKind::Categorical(3)]
        );
        assert_eq!(t.len(), 2);
        assert_eq!(
            t.columns[0],
            AttributeColumn::Numeric(Points::from_rows(2, &[[0.5, 1.0], [0.1, 2.0]]).unwrap())
        );
        assert_eq!(
            t.columns[1],
            AttributeColumn::Tokens(vec!["red".into(), "blue".into()])
        );
        let (e, vocab) = t.embed(1, 10).unwrap();
        assert_eq!((e[0].dim(), e[1].dim()), (2, 3));
        assert!(vocab[0].is_none());
        assert_eq!(vocab[1].as_ref().unwrap()["red"], e[1].row(0));

        let q = read_attributes("#schema 2,cat:3\nid,a,b\n0,9,9,blue\n".as_bytes()).unwrap();
        assert_eq!(q.embed_with(&vocab).unwrap()[1].row(0), e[1].row(1));
        let unseen = read_attributes("#schema 2,cat:3\nid,a,b\n0,9,9,green\n".as_bytes()).unwrap();
        assert!(unseen.embed_with(&vocab).is_err());
    }

    #[test]
    fn undeclared_categorical_dimension() {
        let t = read_attributes("#schema cat\nid,a\n0,x\n1,y\n".as_bytes()).unwrap();
        assert_eq!(t.schema, vec![AttributeKind::Categorical(0)]);
        assert_eq!(t.embed(0, 4).unwrap().0[0].dim(), 4);
    }

    #[test]
    fn malformed_attribute_files() {
        assert!(read_attributes("id,a\n0,1\n".as_bytes()).is_err());
        assert!(read_attributes("#schema 1\nid,a\n0,1,2\n".as_bytes()).is_err());
        assert!(read_attributes("#schema 1\nid,a\n0,1\n2,1\n".as_bytes()).is_err());
        assert!(read_attributes("#schema 1\nid,a\n0,x\n".as_bytes()).is_err());
    }
}
