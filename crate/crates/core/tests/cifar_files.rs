//! Loader checks against crafted full-size CIFAR binary files.

use std::path::Path;

use tscn_core::data::{
    load_cifar10, load_cifar100, Split, CIFAR100_RECORD_BYTES, CIFAR10_RECORD_BYTES,
};
use tscn_core::error::Error;

const RECORDS: usize = 10_000;

/// Deterministic synthetic record bytes: every byte a function of the
/// record index and position, labels cycling within range.
fn cifar10_file(file_idx: usize, bad_label_at: Option<usize>) -> Vec<u8> {
    let mut out = Vec::with_capacity(RECORDS * CIFAR10_RECORD_BYTES);
    for r in 0..RECORDS {
        let label = if bad_label_at == Some(r) { 10 } else { ((file_idx + r) % 10) as u8 };
        out.push(label);
        for p in 0..CIFAR10_RECORD_BYTES - 1 {
            out.push(((r * 31 + p * 7 + file_idx) % 256) as u8);
        }
    }
    out
}

fn write_cifar10_dir(dir: &Path, bad_label: bool) {
    for (i, name) in [
        "data_batch_1.bin",
        "data_batch_2.bin",
        "data_batch_3.bin",
        "data_batch_4.bin",
        "data_batch_5.bin",
        "test_batch.bin",
    ]
    .iter()
    .enumerate()
    {
        let bad = if bad_label && i == 2 { Some(17) } else { None };
        std::fs::write(dir.join(name), cifar10_file(i, bad)).unwrap();
    }
}

#[test]
fn loads_sixty_thousand_records_with_split_flags() {
    let dir = tempfile::tempdir().unwrap();
    write_cifar10_dir(dir.path(), false);
    let ds = load_cifar10(dir.path()).unwrap();
    assert_eq!(ds.len(), 60_000);
    assert_eq!(ds.split_indices(Split::Train).len(), 50_000);
    assert_eq!(ds.split_indices(Split::Test).len(), 10_000);
    assert_eq!(ds.n_classes(), 10);
    // spot-check a pixel against the generator formula: record 3 of file 0,
    // pixel position 5 -> (3*31 + 5*7 + 0) % 256 = 128
    assert_eq!(ds.image(3).data()[5], 128);
    assert_eq!(ds.fine_label(3), 3);
}

#[test]
fn missing_file_is_named() {
    let dir = tempfile::tempdir().unwrap();
    match load_cifar10(dir.path()) {
        Err(Error::MissingFile { path }) => {
            assert!(path.ends_with("data_batch_1.bin"));
        }
        other => panic!("expected missing-file error, got {other:?}"),
    }
}

#[test]
fn truncated_file_reports_expected_and_actual() {
    let dir = tempfile::tempdir().unwrap();
    write_cifar10_dir(dir.path(), false);
    let victim = dir.path().join("data_batch_2.bin");
    let bytes = std::fs::read(&victim).unwrap();
    std::fs::write(&victim, &bytes[..bytes.len() - 100]).unwrap();
    match load_cifar10(dir.path()) {
        Err(Error::BadFileSize { expected, actual, .. }) => {
            assert_eq!(expected, 30_730_000);
            assert_eq!(actual, 30_730_000 - 100);
        }
        other => panic!("expected size error, got {other:?}"),
    }
}

#[test]
fn out_of_range_label_is_located() {
    let dir = tempfile::tempdir().unwrap();
    write_cifar10_dir(dir.path(), true);
    match load_cifar10(dir.path()) {
        Err(Error::LabelRange { record, value, limit, .. }) => {
            assert_eq!(record, 17);
            assert_eq!(value, 10);
            assert_eq!(limit, 9);
        }
        other => panic!("expected label error, got {other:?}"),
    }
}

fn cifar100_file(records: usize, bad_coarse_at: Option<usize>) -> Vec<u8> {
    let mut out = Vec::with_capacity(records * CIFAR100_RECORD_BYTES);
    for r in 0..records {
        let coarse = if bad_coarse_at == Some(r) { 20 } else { (r % 20) as u8 };
        out.push(coarse);
        out.push((r % 100) as u8);
        for p in 0..CIFAR100_RECORD_BYTES - 2 {
            out.push(((r * 13 + p) % 256) as u8);
        }
    }
    out
}

#[test]
fn cifar100_loads_and_checks_ranges() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("train.bin"), cifar100_file(50_000, None)).unwrap();
    std::fs::write(dir.path().join("test.bin"), cifar100_file(10_000, None)).unwrap();
    let ds = load_cifar100(dir.path()).unwrap();
    assert_eq!(ds.len(), 60_000);
    assert_eq!(ds.coarse_labels().unwrap()[21], 1);
    assert_eq!(ds.fine_label(21), 21);

    std::fs::write(dir.path().join("test.bin"), cifar100_file(10_000, Some(4))).unwrap();
    match load_cifar100(dir.path()) {
        Err(Error::LabelRange { kind: "coarse", record: 4, value: 20, .. }) => {}
        other => panic!("expected coarse label error, got {other:?}"),
    }
}
