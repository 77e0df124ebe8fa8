// SPDX-License-Identifier: MIT OR Apache-2.0

//! Binary representation-record files.
//!
//! All integers and floats are little-endian.
//!
//! | offset | size | field                         |
//! |--------|------|-------------------------------|
//! | 0      | 4    | magic `CGRP`                  |
//! | 4      | 4    | format version (u32, = 1)     |
//! | 8      | 4    | d (u32)                       |
//! | 12     | 4    | vocabulary size (u32)         |
//! | 16     | 4    | concept count (u32)           |
//! | 20     | 8    | record count (u64)            |
//! | 28     | 4    | flags (u32)                   |
//!
//! Flags: bit 0 must be set and means the last vocabulary entry is EOS; bits 16..32
//! hold the index of the n/a concept. Bits 1..16 are reserved and must be zero.
//!
//! The header is followed by the vocabulary and concept-name tables, each entry a
//! u32 byte length and UTF-8 bytes, then the records: word id (u32), concept id
//! (u32), and `d` f32 values.

use std::path::Path;

use crate::concept::{ConceptId, ConceptSet, Vocab, WordId};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"CGRP";
pub const FORMAT_VERSION: u32 = 1;
pub const HEADER_LEN: usize = 32;
const FLAG_EOS_LAST: u32 = 1;
const RESERVED_MASK: u32 = 0x0000_fffe;

/// One stored (word, concept, representation) triple.
#[derive(Debug, Clone, PartialEq)]
pub struct RepRecord {
    pub word: WordId,
    pub concept: ConceptId,
    pub rep: Vec<f32>,
}

/// Contents of a record file.
#[derive(Debug, Clone, PartialEq)]
pub struct RepRecordFile {
    pub dim: usize,
    pub vocab: Vocab,
    pub concepts: ConceptSet,
    pub records: Vec<RepRecord>,
}

impl RepRecordFile {
    /// Checks ids, dimensions, and finiteness.
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.dim > u32::MAX as usize {
            return Err(Error::domain("record dimension must be in 1..=u32::MAX"));
        }
        if self.vocab.eos() + 1 != self.vocab.len() {
            return Err(Error::domain("record files require EOS to be the last vocabulary entry"));
        }
        if self.concepts.na() > 0xffff {
            return Err(Error::domain("n/a concept index does not fit the flags field"));
        }
        for (i, r) in self.records.iter().enumerate() {
            if r.word >= self.vocab.len() {
                return Err(Error::domain(format!("record {i}: word id {} out of range", r.word)));
            }
            if r.concept >= self.concepts.len() {
                return Err(Error::domain(format!("record {i}: concept id {} out of range", r.concept)));
            }
            if r.rep.len() != self.dim {
                return Err(Error::DimensionMismatch {
                    what: "record representation",
                    expected: self.dim,
                    got: r.rep.len(),
                });
            }
            if r.rep.iter().any(|v| !v.is_finite()) {
                return Err(Error::domain(format!("record {i}: non-finite value")));
            }
        }
        Ok(())
    }

    /// Serializes to bytes after validation.
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        self.validate()?;
        let mut out = Vec::with_capacity(HEADER_LEN + self.records.len() * (8 + 4 * self.dim));
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.dim as u32).to_le_bytes());
        out.extend_from_slice(&u32_len(self.vocab.len(), "vocabulary")?.to_le_bytes());
        out.extend_from_slice(&u32_len(self.concepts.len(), "concept set")?.to_le_bytes());
        out.extend_from_slice(&(self.records.len() as u64).to_le_bytes());
        let flags = FLAG_EOS_LAST | ((self.concepts.na() as u32) << 16);
        out.extend_from_slice(&flags.to_le_bytes());
        for s in self.vocab.words().iter().chain(self.concepts.values()) {
            out.extend_from_slice(&u32_len(s.len(), "string")?.to_le_bytes());
            out.extend_from_slice(s.as_bytes());
        }
        for r in &self.records {
            out.extend_from_slice(&(r.word as u32).to_le_bytes());
            out.extend_from_slice(&(r.concept as u32).to_le_bytes());
            for v in &r.rep {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    /// Parses and validates bytes.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut cur = Cursor { bytes, pos: 0 };
        let magic = cur.take(4, "magic")?;
        if magic != MAGIC {
            return Err(Error::Format {
                offset: 0,
                message: format!("bad magic {magic:?}"),
            });
        }
        let version = cur.u32("format version")?;
        if version != FORMAT_VERSION {
            return Err(Error::Format {
                offset: 4,
                message: format!("unsupported format version {version}"),
            });
        }
        let dim = cur.u32("dimension")? as usize;
        if dim == 0 {
            return Err(Error::Format {
                offset: 8,
                message: "dimension is zero".into(),
            });
        }
        let n_vocab = cur.u32("vocabulary size")? as usize;
        let n_concepts = cur.u32("concept count")? as usize;
        let n_records = cur.u64("record count")?;
        let flags_at = cur.pos as u64;
        let flags = cur.u32("flags")?;
        if flags & FLAG_EOS_LAST == 0 || flags & RESERVED_MASK != 0 {
            return Err(Error::Format {
                offset: flags_at,
                message: format!("unsupported flags {flags:#010x}"),
            });
        }
        let na = (flags >> 16) as usize;

        let mut words = Vec::with_capacity(n_vocab.min(1 << 20));
        for _ in 0..n_vocab {
            words.push(cur.string("vocabulary entry")?);
        }
        let mut names = Vec::with_capacity(n_concepts.min(1 << 16));
        for _ in 0..n_concepts {
            names.push(cur.string("concept name")?);
        }
        let tables_end = cur.pos as u64;
        if n_vocab == 0 {
            return Err(Error::Format {
                offset: 12,
                message: "empty vocabulary".into(),
            });
        }
        let vocab = Vocab::with_eos_at(words, n_vocab - 1).map_err(|e| Error::Format {
            offset: HEADER_LEN as u64,
            message: e.to_string(),
        })?;
        let concepts = ConceptSet::new(names, na).map_err(|e| Error::Format {
            offset: flags_at,
            message: e.to_string(),
        })?;

        let record_len = 8 + 4 * dim as u64;
        let remaining = bytes.len() as u64 - tables_end;
        let expected = n_records.checked_mul(record_len).ok_or(Error::Format {
            offset: 20,
            message: "record count overflows".into(),
        })?;
        if remaining != expected {
            return Err(Error::Format {
                offset: tables_end + remaining.min(expected),
                message: format!("expected {expected} bytes of records for {n_records} records, found {remaining}"),
            });
        }
        let mut records = Vec::with_capacity(n_records as usize);
        for _ in 0..n_records {
            let at = cur.pos as u64;
            let word = cur.u32("word id")? as usize;
            let concept = cur.u32("concept id")? as usize;
            if word >= vocab.len() || concept >= concepts.len() {
                return Err(Error::Format {
                    offset: at,
                    message: format!("id out of range (word {word}, concept {concept})"),
                });
            }
            let mut rep = Vec::with_capacity(dim);
            for _ in 0..dim {
                let vat = cur.pos as u64;
                let v = f32::from_le_bytes(cur.take(4, "value")?.try_into().expect("4 bytes"));
                if !v.is_finite() {
                    return Err(Error::Format {
                        offset: vat,
                        message: "non-finite value".into(),
                    });
                }
                rep.push(v);
            }
            records.push(RepRecord { word, concept, rep });
        }
        Ok(Self {
            dim,
            vocab,
            concepts,
            records,
        })
    }
}

fn u32_len(n: usize, what: &str) -> Result<u32> {
    u32::try_from(n).map_err(|_| Error::domain(format!("{what} too large for the record format")))
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::Format {
                offset: self.pos as u64,
                message: format!("truncated while reading {what}"),
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().expect("8 bytes")))
    }

    fn string(&mut self, what: &str) -> Result<String> {
        let at = self.pos as u64;
        let n = self.u32(what)? as usize;
        let raw = self.take(n, what)?;
        String::from_utf8(raw.to_vec()).map_err(|_| Error::Format {
            offset: at,
            message: format!("{what} is not valid UTF-8"),
        })
    }
}

/// Writes a record file.
pub fn write_records(path: &Path, vocab: &Vocab, concepts: &ConceptSet, records: &[RepRecord]) -> Result<()> {
    let dim = records.first().map_or(1, |r| r.rep.len());
    write_record_file(
        path,
        &RepRecordFile {
            dim,
            vocab: vocab.clone(),
            concepts: concepts.clone(),
            records: records.to_vec(),
        },
    )
}

/// Writes a record file with an explicit dimension (needed for empty files).
pub fn write_record_file(path: &Path, file: &RepRecordFile) -> Result<()> {
    let bytes = file.to_bytes()?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Reads and validates a record file.
pub fn read_records(path: &Path) -> Result<RepRecordFile> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    RepRecordFile::from_bytes(&bytes)
}
