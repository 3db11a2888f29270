//! Index files.
//!
//! Layout (little-endian): the 8-byte magic `FUSEDIDX`, a `u32` format version, a
//! `u8` index kind and a `u32` section count, then sections of `u16` tag, `u64`
//! length and a bincode payload, and finally a CRC-32 of every preceding byte.
//! Readers skip section tags they do not know.

use std::fs;
use std::io::{Cursor, Read};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use serde::de::DeserializeOwned;
use serde::Serialize;

use super::attributes::Vocabulary;
use crate::error::{Error, Result};
use crate::hybrid::HybridIndex;
use crate::metric::Points;
use crate::multi::MultiIndex;
use crate::range::RangeIndex;

pub const MAGIC: &[u8; 8] = b"FUSEDIDX";
pub const VERSION: u32 = 1;

const TAG_PARAMS: u16 = 1;
const TAG_STATS: u16 = 2;
const TAG_BACKEND: u16 = 3;
const TAG_DATA: u16 = 4;
const TAG_CHAIN: u16 = 5;
const TAG_RANGE: u16 = 6;
const TAG_VOCAB: u16 = 7;

/// Any index the command-line tool can build.
#[derive(Debug, Clone)]
pub enum StoredIndex {
    Hybrid(HybridIndex),
    Multi(MultiIndex),
    Range(RangeIndex),
}

impl StoredIndex {
    fn kind(&self) -> u8 {
        match self {
            Self::Hybrid(_) => 1,
            Self::Multi(_) => 2,
            Self::Range(_) => 3,
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            Self::Hybrid(_) => "hybrid",
            Self::Multi(_) => "multi",
            Self::Range(_) => "range",
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Self::Hybrid(i) => i.len(),
            Self::Multi(i) => i.len(),
            Self::Range(i) => i.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// An index together with the vocabularies of its categorical attributes.
#[derive(Debug, Clone)]
pub struct IndexFile {
    pub index: StoredIndex,
    /// One entry per attribute; `None` for numeric attributes. Empty when the
    /// index was built from embedded vectors directly.
    pub vocabulary: Vec<Option<Vocabulary>>,
}

impl From<StoredIndex> for IndexFile {
    fn from(index: StoredIndex) -> Self {
        Self {
            index,
            vocabulary: Vec::new(),
        }
    }
}

fn encode<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    bincode::serialize(value).map_err(|e| Error::Corrupt(format!("encode: {e}")))
}

fn decode<T: DeserializeOwned>(bytes: &[u8]) -> Result<T> {
    bincode::deserialize(bytes).map_err(|e| Error::Corrupt(format!("decode: {e}")))
}

pub fn to_bytes(file: &IndexFile) -> Result<Vec<u8>> {
    let index = &file.index;
    let mut sections: Vec<(u16, Vec<u8>)> = match index {
        StoredIndex::Hybrid(h) => vec![
            (TAG_PARAMS, encode(h.params())?),
            (TAG_STATS, encode(h.stats())?),
            (TAG_BACKEND, encode(h.backend())?),
            (TAG_DATA, encode(&(h.contents(), h.attributes()))?),
        ],
        StoredIndex::Multi(m) => vec![(TAG_CHAIN, encode(m)?)],
        StoredIndex::Range(r) => vec![(TAG_RANGE, encode(r)?)],
    };
    if !file.vocabulary.is_empty() {
        sections.push((TAG_VOCAB, encode(&file.vocabulary)?));
    }
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.write_u32::<LittleEndian>(VERSION)?;
    out.write_u8(index.kind())?;
    out.write_u32::<LittleEndian>(sections.len() as u32)?;
    for (tag, payload) in sections {
        out.write_u16::<LittleEndian>(tag)?;
        out.write_u64::<LittleEndian>(payload.len() as u64)?;
        out.extend_from_slice(&payload);
    }
    let crc = crc32fast::hash(&out);
    out.write_u32::<LittleEndian>(crc)?;
    Ok(out)
}

pub fn from_bytes(bytes: &[u8]) -> Result<IndexFile> {
    let header = MAGIC.len() + 4 + 1 + 4;
    if bytes.len() < header + 4 {
        return Err(Error::Corrupt("file is truncated".into()));
    }
    if &bytes[..8] != MAGIC {
        return Err(Error::Corrupt("bad magic".into()));
    }
    let mut cur = Cursor::new(&bytes[8..]);
    let version = cur.read_u32::<LittleEndian>()?;
    if version != VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let (body, trailer) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(trailer.try_into().expect("4 bytes"));
    if crc32fast::hash(body) != stored {
        return Err(Error::Corrupt("checksum mismatch".into()));
    }
    let mut cur = Cursor::new(&body[12..]);
    let kind = cur.read_u8()?;
    let count = cur.read_u32::<LittleEndian>()?;
    let mut sections = Vec::with_capacity(count as usize);
    for _ in 0..count {
        let tag = cur
            .read_u16::<LittleEndian>()
            .map_err(|_| Error::Corrupt("truncated section header".into()))?;
        let len = cur
            .read_u64::<LittleEndian>()
            .map_err(|_| Error::Corrupt("truncated section header".into()))?;
        let remaining = body.len() as u64 - cur.position();
        if len > remaining {
            return Err(Error::Corrupt(format!("section {tag} overruns the file")));
        }
        let mut payload = vec![0u8; len as usize];
        cur.read_exact(&mut payload)?;
        sections.push((tag, payload));
    }
    let section = |tag: u16| -> Result<&[u8]> {
        sections
            .iter()
            .find(|s| s.0 == tag)
            .map(|s| &s.1[..])
            .ok_or_else(|| Error::Corrupt(format!("missing section {tag}")))
    };
    let vocabulary = match section(TAG_VOCAB) {
        Ok(v) => decode(v)?,
        Err(_) => Vec::new(),
    };
    let index = match kind {
        1 => {
            let (contents, attrs): (Points, Points) = decode(section(TAG_DATA)?)?;
            StoredIndex::Hybrid(HybridIndex::from_parts(
                decode(section(TAG_PARAMS)?)?,
                decode(section(TAG_STATS)?)?,
                decode(section(TAG_BACKEND)?)?,
                contents,
                attrs,
            )?)
        }
        2 => StoredIndex::Multi(decode(section(TAG_CHAIN)?)?),
        3 => StoredIndex::Range(decode(section(TAG_RANGE)?)?),
        k => return Err(Error::Corrupt(format!("unknown index kind {k}"))),
    };
    let attributes = match &index {
        StoredIndex::Multi(m) => m.num_attributes(),
        _ => 1,
    };
    if !vocabulary.is_empty() && vocabulary.len() != attributes {
        return Err(Error::Corrupt(format!(
            "vocabulary covers {} attributes, index has {attributes}",
            vocabulary.len()
        )));
    }
    Ok(IndexFile { index, vocabulary })
}

pub fn save_index(path: &Path, file: &IndexFile) -> Result<()> {
    fs::write(path, to_bytes(file)?)?;
    Ok(())
}

pub fn load_index(path: &Path) -> Result<IndexFile> {
    from_bytes(&fs::read(path)?)
}
