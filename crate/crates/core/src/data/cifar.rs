//! Bit-exact readers for the CIFAR-10/100 binary distributions.
//!
//! CIFAR-10 records are 3073 bytes: one label byte, then 3072 pixel bytes
//! as a red plane, a green plane, and a blue plane, each 32x32 row-major.
//! CIFAR-100 records carry a coarse label byte and a fine label byte ahead
//! of the same 3072 pixels.

use std::fs;
use std::path::Path;

use super::{LabeledDataset, Split};
use crate::augment::ImageU8;
use crate::error::{Error, Result};

pub const CIFAR_SIDE: usize = 32;
const PIXEL_BYTES: usize = 3 * CIFAR_SIDE * CIFAR_SIDE;
pub const CIFAR10_RECORD_BYTES: usize = 1 + PIXEL_BYTES;
pub const CIFAR100_RECORD_BYTES: usize = 2 + PIXEL_BYTES;
const RECORDS_PER_FILE: usize = 10_000;

const CIFAR10_TRAIN_FILES: [&str; 5] = [
    "data_batch_1.bin",
    "data_batch_2.bin",
    "data_batch_3.bin",
    "data_batch_4.bin",
    "data_batch_5.bin",
];

const CIFAR10_CLASSES: [&str; 10] = [
    "airplane",
    "automobile",
    "bird",
    "cat",
    "deer",
    "dog",
    "frog",
    "horse",
    "ship",
    "truck",
];

const CIFAR100_FINE: [&str; 100] = [
    "apple", "aquarium_fish", "baby", "bear", "beaver", "bed", "bee", "beetle", "bicycle",
    "bottle", "bowl", "boy", "bridge", "bus", "butterfly", "camel", "can", "castle",
    "caterpillar", "cattle", "chair", "chimpanzee", "clock", "cloud", "cockroach", "couch",
    "crab", "crocodile", "cup", "dinosaur", "dolphin", "elephant", "flatfish", "forest", "fox",
    "girl", "hamster", "house", "kangaroo", "keyboard", "lamp", "lawn_mower", "leopard", "lion",
    "lizard", "lobster", "man", "maple_tree", "motorcycle", "mountain", "mouse", "mushroom",
    "oak_tree", "orange", "orchid", "otter", "palm_tree", "pear", "pickup_truck", "pine_tree",
    "plain", "plate", "poppy", "porcupine", "possum", "rabbit", "raccoon", "ray", "road",
    "rocket", "rose", "sea", "seal", "shark", "shrew", "skunk", "skyscraper", "snail", "snake",
    "spider", "squirrel", "streetcar", "sunflower", "sweet_pepper", "table", "tank", "telephone",
    "television", "tiger", "tractor", "train", "trout", "tulip", "turtle", "wardrobe", "whale",
    "willow_tree", "wolf", "woman", "worm",
];

const CIFAR100_COARSE: [&str; 20] = [
    "aquatic_mammals",
    "fish",
    "flowers",
    "food_containers",
    "fruit_and_vegetables",
    "household_electrical_devices",
    "household_furniture",
    "insects",
    "large_carnivores",
    "large_man-made_outdoor_things",
    "large_natural_outdoor_scenes",
    "large_omnivores_and_herbivores",
    "medium_mammals",
    "non-insect_invertebrates",
    "people",
    "reptiles",
    "small_mammals",
    "trees",
    "vehicles_1",
    "vehicles_2",
];

fn parse_pixels(pixels: &[u8]) -> ImageU8 {
    ImageU8::new(CIFAR_SIDE, CIFAR_SIDE, pixels.to_vec()).expect("pixel block has fixed size")
}

/// Split one CIFAR-10 record into its label byte and image.
pub fn parse_cifar10_record(record: &[u8]) -> Result<(u8, ImageU8)> {
    if record.len() != CIFAR10_RECORD_BYTES {
        return Err(Error::BadDataLength {
            rows: 1,
            cols: CIFAR10_RECORD_BYTES,
            len: record.len(),
        });
    }
    Ok((record[0], parse_pixels(&record[1..])))
}

/// Split one CIFAR-100 record into coarse label, fine label, and image.
pub fn parse_cifar100_record(record: &[u8]) -> Result<(u8, u8, ImageU8)> {
    if record.len() != CIFAR100_RECORD_BYTES {
        return Err(Error::BadDataLength {
            rows: 1,
            cols: CIFAR100_RECORD_BYTES,
            len: record.len(),
        });
    }
    Ok((record[0], record[1], parse_pixels(&record[2..])))
}

/// Inverse of [`parse_cifar10_record`], byte for byte.
pub fn write_cifar10_record(label: u8, img: &ImageU8) -> Vec<u8> {
    let mut out = Vec::with_capacity(CIFAR10_RECORD_BYTES);
    out.push(label);
    out.extend_from_slice(img.data());
    out
}

/// Inverse of [`parse_cifar100_record`], byte for byte.
pub fn write_cifar100_record(coarse: u8, fine: u8, img: &ImageU8) -> Vec<u8> {
    let mut out = Vec::with_capacity(CIFAR100_RECORD_BYTES);
    out.push(coarse);
    out.push(fine);
    out.extend_from_slice(img.data());
    out
}

fn read_expected(path: &Path, expected: u64) -> Result<Vec<u8>> {
    let meta = fs::metadata(path).map_err(|_| Error::MissingFile { path: path.into() })?;
    if meta.len() != expected {
        return Err(Error::BadFileSize { path: path.into(), expected, actual: meta.len() });
    }
    fs::read(path).map_err(|e| Error::io(path, e))
}

/// Load the six-file CIFAR-10 binary distribution from `dir`.
///
/// All 60 000 images are returned in one dataset; the five training batches
/// are flagged [`Split::Train`] and `test_batch.bin` [`Split::Test`].
pub fn load_cifar10(dir: &Path) -> Result<LabeledDataset> {
    let mut images = Vec::with_capacity(6 * RECORDS_PER_FILE);
    let mut labels = Vec::with_capacity(6 * RECORDS_PER_FILE);
    let mut splits = Vec::with_capacity(6 * RECORDS_PER_FILE);

    let files = CIFAR10_TRAIN_FILES
        .iter()
        .map(|f| (*f, Split::Train))
        .chain(std::iter::once(("test_batch.bin", Split::Test)));
    for (name, split) in files {
        let path = dir.join(name);
        let bytes = read_expected(&path, (RECORDS_PER_FILE * CIFAR10_RECORD_BYTES) as u64)?;
        for (rec_idx, record) in bytes.chunks_exact(CIFAR10_RECORD_BYTES).enumerate() {
            let (label, img) = parse_cifar10_record(record)?;
            if label > 9 {
                return Err(Error::LabelRange {
                    path: path.clone(),
                    record: rec_idx,
                    kind: "class",
                    value: label,
                    limit: 9,
                });
            }
            images.push(img);
            labels.push(label as usize);
            splits.push(split);
        }
    }
    LabeledDataset::new(
        images,
        labels,
        None,
        CIFAR10_CLASSES.iter().map(|s| s.to_string()).collect(),
        None,
        splits,
    )
}

/// Load the CIFAR-100 binary distribution (`train.bin` + `test.bin`).
pub fn load_cifar100(dir: &Path) -> Result<LabeledDataset> {
    let mut images = Vec::with_capacity(6 * RECORDS_PER_FILE);
    let mut fine = Vec::with_capacity(6 * RECORDS_PER_FILE);
    let mut coarse = Vec::with_capacity(6 * RECORDS_PER_FILE);
    let mut splits = Vec::with_capacity(6 * RECORDS_PER_FILE);

    for (name, records, split) in [
        ("train.bin", 5 * RECORDS_PER_FILE, Split::Train),
        ("test.bin", RECORDS_PER_FILE, Split::Test),
    ] {
        let path = dir.join(name);
        let bytes = read_expected(&path, (records * CIFAR100_RECORD_BYTES) as u64)?;
        for (rec_idx, record) in bytes.chunks_exact(CIFAR100_RECORD_BYTES).enumerate() {
            let (c, f, img) = parse_cifar100_record(record)?;
            if c > 19 {
                return Err(Error::LabelRange {
                    path: path.clone(),
                    record: rec_idx,
                    kind: "coarse",
                    value: c,
                    limit: 19,
                });
            }
            if f > 99 {
                return Err(Error::LabelRange {
                    path: path.clone(),
                    record: rec_idx,
                    kind: "fine",
                    value: f,
                    limit: 99,
                });
            }
            images.push(img);
            fine.push(f as usize);
            coarse.push(c as usize);
            splits.push(split);
        }
    }
    LabeledDataset::new(
        images,
        fine,
        Some(coarse),
        CIFAR100_FINE.iter().map(|s| s.to_string()).collect(),
        Some(CIFAR100_COARSE.iter().map(|s| s.to_string()).collect()),
        splits,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn record_format_round_trips() {
        let mut record = vec![0u8; CIFAR10_RECORD_BYTES];
        record[0] = 3;
        record[CIFAR10_RECORD_BYTES - 1] = 255; // blue plane, last row, last col
        let (label, img) = parse_cifar10_record(&record).unwrap();
        assert_eq!(label, 3);
        assert_eq!(img.get(2, 31, 31), 255);
        assert_eq!(img.get(0, 0, 0), 0);
        assert_eq!(write_cifar10_record(label, &img), record);
    }

    #[test]
    fn cifar100_record_labels() {
        let mut record = vec![0u8; CIFAR100_RECORD_BYTES];
        record[0] = 7;
        record[1] = 42;
        record[2] = 9; // red plane origin
        let (coarse, fine, img) = parse_cifar100_record(&record).unwrap();
        assert_eq!((coarse, fine), (7, 42));
        assert_eq!(img.get(0, 0, 0), 9);
        assert_eq!(write_cifar100_record(coarse, fine, &img), record);
    }

    #[test]
    fn wrong_record_length_rejected() {
        assert!(parse_cifar10_record(&[0u8; 10]).is_err());
        assert!(parse_cifar100_record(&[0u8; CIFAR10_RECORD_BYTES]).is_err());
    }
}
