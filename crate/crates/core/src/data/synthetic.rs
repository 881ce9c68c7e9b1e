//! Seeded synthetic image dataset for desk-scale experiments.
//!
//! Each class is a fixed (shape, hue) pair: a colored disk, square, cross,
//! ring, or stripe pattern on a dark background. Per image, position and
//! size jitter plus additive pixel noise come from a stream keyed by the
//! image index, so the dataset is bit-identical across processes and the
//! class identity survives crops, flips, and moderate color jitter.

use super::{LabeledDataset, Split};
use crate::augment::{hsv_to_rgb, ImageU8, CHANNELS};
use crate::error::{Error, Result};
use crate::numeric::{stream_id, RandomStream};

const SYNTH_TAG: u64 = 0x5359_4E54;
const SHAPES: [&str; 5] = ["disk", "square", "cross", "ring", "stripes"];

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    /// Number of classes; the first five use the fixed shape table.
    pub classes: usize,
    pub per_class: usize,
    /// Square image side in pixels.
    pub side: usize,
    /// Scale of per-image position/size jitter; 0 makes a class's images identical.
    pub jitter: f64,
    /// Additive pixel noise amplitude as a fraction of full scale.
    pub noise: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig { classes: 5, per_class: 1000, side: 16, jitter: 1.0, noise: 0.04 }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.classes == 0 || self.per_class == 0 {
            return Err(Error::Config { reason: "classes and per_class must be >= 1".into() });
        }
        if self.side < 8 {
            return Err(Error::Config {
                reason: format!("image side must be >= 8, got {}", self.side),
            });
        }
        if self.jitter < 0.0 || self.noise < 0.0 {
            return Err(Error::Config { reason: "jitter and noise must be >= 0".into() });
        }
        Ok(())
    }
}

fn class_hue(class: usize) -> f64 {
    // hues 0.2 apart cover the circle for the 5-entry table; extra classes
    // reuse shapes with offset hues
    ((class % 5) as f64 * 0.2 + (class / 5) as f64 * 0.1).rem_euclid(1.0)
}

fn shape_mask(shape: usize, side: usize, cx: f64, cy: f64, r: f64, phase: f64) -> Vec<bool> {
    let mut mask = vec![false; side * side];
    for y in 0..side {
        for x in 0..side {
            let dx = x as f64 + 0.5 - cx;
            let dy = y as f64 + 0.5 - cy;
            let dist = (dx * dx + dy * dy).sqrt();
            let inside = match shape {
                0 => dist <= r,
                1 => dx.abs() <= 0.85 * r && dy.abs() <= 0.85 * r,
                2 => {
                    (dx.abs() <= 0.35 * r && dy.abs() <= r)
                        || (dy.abs() <= 0.35 * r && dx.abs() <= r)
                }
                3 => dist <= r && dist >= 0.55 * r,
                _ => {
                    let period = side as f64 / 4.0;
                    ((y as f64 + phase * period) / period).fract() < 0.5
                }
            };
            if inside {
                mask[y * side + x] = true;
            }
        }
    }
    mask
}

/// Generate `classes * per_class` images, round-robin over classes.
///
/// The last fifth of every class's draws is flagged [`Split::Test`]. The
/// dataset is a pure function of `(cfg, seed)`.
pub fn generate_synthetic(cfg: &SynthConfig, seed: u64) -> Result<LabeledDataset> {
    cfg.validate()?;
    let n = cfg.classes * cfg.per_class;
    let side = cfg.side;
    let test_from = cfg.per_class - cfg.per_class / 5;

    let mut images = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    let mut splits = Vec::with_capacity(n);
    for i in 0..n {
        let class = i % cfg.classes;
        let instance = i / cfg.classes;
        let mut rng = RandomStream::new(seed, stream_id(&[SYNTH_TAG, i as u64]));
        let j = cfg.jitter;

        let half = side as f64 / 2.0;
        let cx = half + j * rng.uniform(-1.0, 1.0) * side as f64 * 0.15;
        let cy = half + j * rng.uniform(-1.0, 1.0) * side as f64 * 0.15;
        let r = side as f64 * (0.28 + j * rng.uniform(-1.0, 1.0) * 0.08);
        let phase = j * rng.next_f64();

        // the class hue is noisy and the background varies per image, so
        // color alone does not settle the class; the shape has to be read
        let hue = (class_hue(class) + j * rng.uniform(-1.0, 1.0) * 0.05).rem_euclid(1.0);
        let sat = 0.8 + j * rng.uniform(-1.0, 1.0) * 0.15;
        let val = 0.85 + j * rng.uniform(-1.0, 1.0) * 0.12;
        let bg_hue = j * rng.next_f64();
        let bg_val = 0.12 + j * rng.next_f64() * 0.28;

        let (fr, fg, fb) = hsv_to_rgb(hue as f32, sat as f32, val as f32);
        let (br, bgc, bb) = hsv_to_rgb(bg_hue as f32, 0.25, bg_val as f32);
        let fg_color = [fr * 255.0, fg * 255.0, fb * 255.0];
        let bg_color = [br * 255.0, bgc * 255.0, bb * 255.0];

        let mask = shape_mask(class % 5, side, cx, cy, r, phase);
        let mut data = vec![0u8; CHANNELS * side * side];
        for c in 0..CHANNELS {
            for (p, &inside) in mask.iter().enumerate() {
                let base = if inside { fg_color[c] } else { bg_color[c] };
                let noisy = base as f64 + cfg.noise * rng.uniform(-1.0, 1.0) * 255.0;
                data[c * side * side + p] = noisy.round().clamp(0.0, 255.0) as u8;
            }
        }
        images.push(ImageU8::new(side, side, data)?);
        labels.push(class);
        splits.push(if instance >= test_from { Split::Test } else { Split::Train });
    }

    let class_names = (0..cfg.classes)
        .map(|c| {
            if cfg.classes <= 5 {
                SHAPES[c].to_string()
            } else {
                format!("{}-{}", SHAPES[c % 5], c)
            }
        })
        .collect();
    LabeledDataset::new(images, labels, None, class_names, None, splits)
}
