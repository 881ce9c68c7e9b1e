//! Dataset ingestion and deterministic epoch batching.
//!
//! Two sources: the bit-exact CIFAR-10/100 binary distributions, and a
//! seeded synthetic generator small enough to train against on a laptop
//! CPU. Both produce the same [`LabeledDataset`] shape; training itself
//! never looks at the labels, only the evaluation stack does.

mod cifar;
mod synthetic;

pub use cifar::{
    load_cifar10, load_cifar100, parse_cifar10_record, parse_cifar100_record,
    write_cifar10_record, write_cifar100_record, CIFAR100_RECORD_BYTES, CIFAR10_RECORD_BYTES,
    CIFAR_SIDE,
};
pub use synthetic::{generate_synthetic, SynthConfig};

use crate::augment::ImageU8;
use crate::error::{Error, Result};
use crate::numeric::{stream_id, RandomStream};

/// Train/test membership of one image.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

/// Images with fine labels, optional coarse labels, and split flags.
#[derive(Debug, Clone)]
pub struct LabeledDataset {
    images: Vec<ImageU8>,
    fine_labels: Vec<usize>,
    coarse_labels: Option<Vec<usize>>,
    class_names: Vec<String>,
    coarse_class_names: Option<Vec<String>>,
    splits: Vec<Split>,
}

impl LabeledDataset {
    pub fn new(
        images: Vec<ImageU8>,
        fine_labels: Vec<usize>,
        coarse_labels: Option<Vec<usize>>,
        class_names: Vec<String>,
        coarse_class_names: Option<Vec<String>>,
        splits: Vec<Split>,
    ) -> Result<Self> {
        let n = images.len();
        if fine_labels.len() != n || splits.len() != n {
            return Err(Error::LabelCount { labels: fine_labels.len(), rows: n });
        }
        if let Some(c) = &coarse_labels {
            if c.len() != n {
                return Err(Error::LabelCount { labels: c.len(), rows: n });
            }
        }
        if let Some(bad) = fine_labels.iter().find(|&&l| l >= class_names.len()) {
            return Err(Error::Config {
                reason: format!("label {bad} exceeds class count {}", class_names.len()),
            });
        }
        Ok(LabeledDataset {
            images,
            fine_labels,
            coarse_labels,
            class_names,
            coarse_class_names,
            splits,
        })
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn image(&self, i: usize) -> &ImageU8 {
        &self.images[i]
    }

    pub fn images(&self) -> &[ImageU8] {
        &self.images
    }

    pub fn fine_label(&self, i: usize) -> usize {
        self.fine_labels[i]
    }

    pub fn fine_labels(&self) -> &[usize] {
        &self.fine_labels
    }

    pub fn coarse_labels(&self) -> Option<&[usize]> {
        self.coarse_labels.as_deref()
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn coarse_class_names(&self) -> Option<&[String]> {
        self.coarse_class_names.as_deref()
    }

    pub fn n_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn split(&self, i: usize) -> Split {
        self.splits[i]
    }

    /// Indices belonging to one split, in dataset order.
    pub fn split_indices(&self, split: Split) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.splits[i] == split).collect()
    }

    /// Image shape as (channels, height, width); datasets are uniform.
    pub fn image_shape(&self) -> (usize, usize, usize) {
        let img = &self.images[0];
        (crate::augment::CHANNELS, img.height(), img.width())
    }
}

const SHUFFLE_TAG: u64 = 0x4241_5443;

/// Deterministic mini-batch index plan for one epoch.
///
/// The permutation of `0..n` is a pure function of `(seed, epoch)`; it is
/// chunked into `n / b` full batches and the incomplete remainder dropped,
/// so the contrastive denominator size never varies within a run.
pub fn epoch_batches(n: usize, b: usize, seed: u64, epoch: u64) -> Result<Vec<Vec<usize>>> {
    if b < 2 {
        return Err(Error::BatchTooSmall { batch: b });
    }
    if b > n {
        return Err(Error::BatchTooLarge { batch: b, n });
    }
    let mut idx: Vec<usize> = (0..n).collect();
    let mut rng = RandomStream::new(seed, stream_id(&[SHUFFLE_TAG, epoch]));
    rng.shuffle(&mut idx);
    idx.truncate((n / b) * b);
    Ok(idx.chunks_exact(b).map(|c| c.to_vec()).collect())
}
