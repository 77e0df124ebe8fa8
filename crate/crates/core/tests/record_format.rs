// SPDX-License-Identifier: MIT OR Apache-2.0

//! Byte-level conformance of record files, using a hand-written encoder that
//! mirrors what an external extractor would emit.

use concept_subspace::io::{read_records, write_record_file, RepRecord, RepRecordFile, HEADER_LEN};
use concept_subspace::{ConceptSet, Error, Vocab};

const D: usize = 1280;

fn le32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn string(out: &mut Vec<u8>, s: &str) {
    le32(out, s.len() as u32);
    out.extend_from_slice(s.as_bytes());
}

fn rep(i: usize) -> Vec<f32> {
    (0..D).map(|k| ((i * D + k) as f32 * 0.37).sin() * 3.0).collect()
}

/// Header + tables + `n` records; vocab `[walks, walk, marche, <eos>]`, concepts
/// `[n/a, sg, pl]` with n/a at 0.
fn assemble(n: usize, flags: u32) -> Vec<u8> {
    let mut b = Vec::new();
    b.extend_from_slice(b"CGRP");
    le32(&mut b, 1);
    le32(&mut b, D as u32);
    le32(&mut b, 4);
    le32(&mut b, 3);
    b.extend_from_slice(&(n as u64).to_le_bytes());
    le32(&mut b, flags);
    for s in ["walks", "walk", "marche", "<eos>", "n/a", "sg", "pl"] {
        string(&mut b, s);
    }
    for i in 0..n {
        le32(&mut b, (i % 4) as u32);
        le32(&mut b, (i % 3) as u32);
        for v in rep(i) {
            b.extend_from_slice(&v.to_le_bytes());
        }
    }
    b
}

fn tables_end() -> usize {
    HEADER_LEN + ["walks", "walk", "marche", "<eos>", "n/a", "sg", "pl"].iter().map(|s| 4 + s.len()).sum::<usize>()
}

fn format_offset(r: Result<RepRecordFile, Error>) -> u64 {
    match r {
        Err(Error::Format { offset, .. }) => offset,
        other => panic!("expected a format error, got {other:?}"),
    }
}

#[test]
fn hand_assembled_file_parses() {
    let bytes = assemble(5, 1);
    let f = RepRecordFile::from_bytes(&bytes).unwrap();
    assert_eq!(f.dim, D);
    assert_eq!(f.vocab.words(), ["walks", "walk", "marche", "<eos>"]);
    assert_eq!(f.vocab.eos(), 3);
    assert_eq!(f.concepts.values(), ["n/a", "sg", "pl"]);
    assert_eq!(f.concepts.na(), 0);
    assert_eq!(f.records.len(), 5);
    for (i, r) in f.records.iter().enumerate() {
        assert_eq!(r.word, i % 4);
        assert_eq!(r.concept, i % 3);
        assert_eq!(r.rep, rep(i));
    }
    // The writer reproduces the same bytes.
    assert_eq!(f.to_bytes().unwrap(), bytes);
}

#[test]
fn na_index_lives_in_high_flag_bits() {
    let f = RepRecordFile::from_bytes(&assemble(1, 1 | (2 << 16))).unwrap();
    assert_eq!(f.concepts.na(), 2);
}

#[test]
fn round_trip_through_disk() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("r.cgrp");
    let file = RepRecordFile {
        dim: 3,
        vocab: Vocab::new(["a", "b"], "<eos>").unwrap(),
        concepts: ConceptSet::new(["n/a", "x"], 0).unwrap(),
        records: (0..1000)
            .map(|i| RepRecord {
                word: i % 3,
                concept: i % 2,
                rep: vec![i as f32, -(i as f32) * 0.5, f32::MIN_POSITIVE],
            })
            .collect(),
    };
    write_record_file(&path, &file).unwrap();
    assert_eq!(read_records(&path).unwrap(), file);
}

#[test]
fn zero_records_is_valid() {
    let f = RepRecordFile::from_bytes(&assemble(0, 1)).unwrap();
    assert!(f.records.is_empty());
    assert_eq!(f.dim, D);
}

#[test]
fn empty_input_is_rejected_at_offset_zero() {
    assert_eq!(format_offset(RepRecordFile::from_bytes(&[])), 0);
}

#[test]
fn bad_magic() {
    let mut b = assemble(1, 1);
    b[0] = b'X';
    assert_eq!(format_offset(RepRecordFile::from_bytes(&b)), 0);
}

#[test]
fn bad_version() {
    let mut b = assemble(1, 1);
    b[4] = 2;
    assert_eq!(format_offset(RepRecordFile::from_bytes(&b)), 4);
}

#[test]
fn reserved_flags_and_missing_eos_flag() {
    assert_eq!(format_offset(RepRecordFile::from_bytes(&assemble(1, 1 | 2))), 28);
    assert_eq!(format_offset(RepRecordFile::from_bytes(&assemble(1, 0))), 28);
}

#[test]
fn truncated_header() {
    let b = assemble(1, 1);
    assert_eq!(format_offset(RepRecordFile::from_bytes(&b[..30])), 28);
}

#[test]
fn truncated_records_report_where_data_ends() {
    let b = assemble(3, 1);
    let cut = b.len() - 10;
    let off = format_offset(RepRecordFile::from_bytes(&b[..cut]));
    let record_len = 8 + 4 * D;
    // The error points at the first missing byte.
    assert_eq!(off as usize, cut);
    assert!(off as usize > tables_end() + 2 * record_len);
}

#[test]
fn trailing_bytes_are_rejected() {
    let mut b = assemble(2, 1);
    b.push(0);
    let off = format_offset(RepRecordFile::from_bytes(&b));
    assert_eq!(off as usize, tables_end() + 2 * (8 + 4 * D));
}

#[test]
fn out_of_range_ids() {
    let mut b = assemble(2, 1);
    let second = tables_end() + 8 + 4 * D;
    b[second..second + 4].copy_from_slice(&9u32.to_le_bytes());
    assert_eq!(format_offset(RepRecordFile::from_bytes(&b)) as usize, second);
}

#[test]
fn non_finite_values() {
    let mut b = assemble(1, 1);
    let at = tables_end() + 8 + 4 * 7;
    b[at..at + 4].copy_from_slice(&f32::NAN.to_le_bytes());
    assert_eq!(format_offset(RepRecordFile::from_bytes(&b)) as usize, at);
}

#[test]
fn invalid_utf8_in_tables() {
    let mut b = assemble(0, 1);
    b[HEADER_LEN + 4] = 0xff;
    assert_eq!(format_offset(RepRecordFile::from_bytes(&b)) as usize, HEADER_LEN);
}

#[test]
fn writer_rejects_invalid_contents() {
    let bad = RepRecordFile {
        dim: 2,
        vocab: Vocab::new(["a"], "<eos>").unwrap(),
        concepts: ConceptSet::new(["n/a", "x"], 0).unwrap(),
        records: vec![RepRecord {
            word: 0,
            concept: 0,
            rep: vec![1.0],
        }],
    };
    assert!(bad.to_bytes().is_err());
}
