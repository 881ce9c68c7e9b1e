//! Stochastic augmentation pipeline producing the two views per image.
//!
//! Each view runs crop -> flip -> color jitter -> grayscale, every step
//! gated or parameterized by draws from a per-view child stream, then scales
//! to floats in `[0, 1]`. Given the same image, policy, and stream, the two
//! views are a pure function of the stream's `(seed, id)`, so augmentation
//! can fan out across workers without changing results.

use crate::error::{Error, Result};
use crate::numeric::{RandomStream, Real};

pub const CHANNELS: usize = 3;

/// 8-bit RGB image, channel-planar (all of R, then G, then B, row-major).
#[derive(Debug, Clone, PartialEq)]
pub struct ImageU8 {
    height: usize,
    width: usize,
    data: Vec<u8>,
}

impl ImageU8 {
    pub fn new(height: usize, width: usize, data: Vec<u8>) -> Result<Self> {
        if data.len() != CHANNELS * height * width {
            return Err(Error::BadDataLength {
                rows: CHANNELS * height,
                cols: width,
                len: data.len(),
            });
        }
        Ok(ImageU8 { height, width, data })
    }

    pub fn filled(height: usize, width: usize, value: u8) -> Self {
        ImageU8 { height, width, data: vec![value; CHANNELS * height * width] }
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn data(&self) -> &[u8] {
        &self.data
    }

    #[inline]
    pub fn get(&self, c: usize, y: usize, x: usize) -> u8 {
        self.data[(c * self.height + y) * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, c: usize, y: usize, x: usize, v: u8) {
        self.data[(c * self.height + y) * self.width + x] = v;
    }

    pub fn plane(&self, c: usize) -> &[u8] {
        &self.data[c * self.height * self.width..(c + 1) * self.height * self.width]
    }

    /// Scale to floats in `[0, 1]`, keeping the channel-planar layout.
    pub fn to_float<T: Real>(&self) -> FloatImage<T> {
        FloatImage {
            c: CHANNELS,
            h: self.height,
            w: self.width,
            data: self.data.iter().map(|&v| T::from_f64(v as f64 / 255.0)).collect(),
        }
    }
}

/// Float image in `[0, 1]`, channel-planar; what the encoder consumes.
#[derive(Debug, Clone, PartialEq)]
pub struct FloatImage<T> {
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub data: Vec<T>,
}

/// Augmentation strengths and probabilities.
///
/// The default follows the standard contrastive recipe for 32x32 images:
/// crop scale `[0.08, 1]`, aspect `[3/4, 4/3]`, flip `p = 0.5`, color jitter
/// `(0.4, 0.4, 0.4, 0.1)` applied with `p = 0.8`, grayscale `p = 0.2`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AugmentPolicy {
    pub crop_scale: (f64, f64),
    pub crop_aspect: (f64, f64),
    pub flip_p: f64,
    pub brightness: f64,
    pub contrast: f64,
    pub saturation: f64,
    pub hue: f64,
    pub jitter_p: f64,
    pub grayscale_p: f64,
}

impl Default for AugmentPolicy {
    fn default() -> Self {
        AugmentPolicy {
            crop_scale: (0.08, 1.0),
            crop_aspect: (0.75, 4.0 / 3.0),
            flip_p: 0.5,
            brightness: 0.4,
            contrast: 0.4,
            saturation: 0.4,
            hue: 0.1,
            jitter_p: 0.8,
            grayscale_p: 0.2,
        }
    }
}

impl AugmentPolicy {
    /// Identity policy: full-frame crop, nothing else applied.
    pub fn identity() -> Self {
        AugmentPolicy {
            crop_scale: (1.0, 1.0),
            crop_aspect: (1.0, 1.0),
            flip_p: 0.0,
            brightness: 0.0,
            contrast: 0.0,
            saturation: 0.0,
            hue: 0.0,
            jitter_p: 0.0,
            grayscale_p: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let prob = |name: &str, p: f64| {
            if (0.0..=1.0).contains(&p) {
                Ok(())
            } else {
                Err(Error::Config { reason: format!("{name} probability {p} outside [0, 1]") })
            }
        };
        prob("flip", self.flip_p)?;
        prob("jitter", self.jitter_p)?;
        prob("grayscale", self.grayscale_p)?;
        if !(self.crop_scale.0 > 0.0
            && self.crop_scale.0 <= self.crop_scale.1
            && self.crop_scale.1 <= 1.0)
        {
            return Err(Error::Config {
                reason: format!("crop scale range {:?} not within (0, 1]", self.crop_scale),
            });
        }
        if !(self.crop_aspect.0 > 0.0 && self.crop_aspect.0 <= self.crop_aspect.1) {
            return Err(Error::Config {
                reason: format!("crop aspect range {:?} invalid", self.crop_aspect),
            });
        }
        Ok(())
    }
}

#[inline]
fn round_u8(v: f32) -> u8 {
    (v + 0.5).floor().clamp(0.0, 255.0) as u8
}

/// Bilinear sample of the rectangle `(x0, y0, cw, ch)` of `img`, resized to
/// `out_h x out_w`. Pixel centers align: source = (dst + 0.5) * scale - 0.5.
fn resize_region(
    img: &ImageU8,
    x0: usize,
    y0: usize,
    cw: usize,
    ch: usize,
    out_h: usize,
    out_w: usize,
) -> ImageU8 {
    let sx = cw as f32 / out_w as f32;
    let sy = ch as f32 / out_h as f32;
    let mut out = vec![0u8; CHANNELS * out_h * out_w];
    for c in 0..CHANNELS {
        let plane = img.plane(c);
        let w = img.width;
        for oy in 0..out_h {
            let fy = (oy as f32 + 0.5) * sy - 0.5;
            let iy = fy.floor();
            let dy = fy - iy;
            let y_lo = (iy as isize).clamp(0, ch as isize - 1) as usize + y0;
            let y_hi = (iy as isize + 1).clamp(0, ch as isize - 1) as usize + y0;
            let row_lo = &plane[y_lo * w..y_lo * w + w];
            let row_hi = &plane[y_hi * w..y_hi * w + w];
            let out_row = &mut out[(c * out_h + oy) * out_w..(c * out_h + oy + 1) * out_w];
            for (ox, o) in out_row.iter_mut().enumerate() {
                let fx = (ox as f32 + 0.5) * sx - 0.5;
                let ix = fx.floor();
                let dx = fx - ix;
                let x_lo = (ix as isize).clamp(0, cw as isize - 1) as usize + x0;
                let x_hi = (ix as isize + 1).clamp(0, cw as isize - 1) as usize + x0;
                let top = (1.0 - dx) * row_lo[x_lo] as f32 + dx * row_lo[x_hi] as f32;
                let bot = (1.0 - dx) * row_hi[x_lo] as f32 + dx * row_hi[x_hi] as f32;
                *o = round_u8((1.0 - dy) * top + dy * bot);
            }
        }
    }
    ImageU8 { height: out_h, width: out_w, data: out }
}

/// Bilinear resize of the whole image.
pub fn bilinear_resize(img: &ImageU8, out_h: usize, out_w: usize) -> ImageU8 {
    resize_region(img, 0, 0, img.width, img.height, out_h, out_w)
}

/// Random area/aspect crop, rescaled back to the original size.
///
/// The crop area fraction is uniform in the policy's scale range and the
/// aspect ratio log-uniform in its aspect range; degenerate sizes clamp to
/// at least one pixel and at most the full frame, so this never fails.
pub fn random_resized_crop(
    img: &ImageU8,
    policy: &AugmentPolicy,
    rng: &mut RandomStream,
) -> ImageU8 {
    let (h, w) = (img.height, img.width);
    let area = (h * w) as f64 * rng.uniform(policy.crop_scale.0, policy.crop_scale.1);
    let aspect = rng.uniform(policy.crop_aspect.0.ln(), policy.crop_aspect.1.ln()).exp();
    let cw = ((area * aspect).sqrt().round() as usize).clamp(1, w);
    let ch = ((area / aspect).sqrt().round() as usize).clamp(1, h);
    let x0 = rng.below((w - cw + 1) as u64) as usize;
    let y0 = rng.below((h - ch + 1) as u64) as usize;
    resize_region(img, x0, y0, cw, ch, h, w)
}

/// Mirror left-right: columns reversed within every channel.
pub fn hflip(img: &ImageU8) -> ImageU8 {
    let mut out = img.clone();
    for c in 0..CHANNELS {
        for y in 0..img.height {
            for x in 0..img.width {
                out.set(c, y, x, img.get(c, y, img.width - 1 - x));
            }
        }
    }
    out
}

/// ITU-R 601 luma, replicated to all three channels.
///
/// Integer arithmetic (299, 587, 114 over 1000) keeps already-gray pixels
/// exactly fixed.
pub fn to_grayscale(img: &ImageU8) -> ImageU8 {
    let mut out = img.clone();
    for y in 0..img.height {
        for x in 0..img.width {
            let r = img.get(0, y, x) as u32;
            let g = img.get(1, y, x) as u32;
            let b = img.get(2, y, x) as u32;
            let l = ((299 * r + 587 * g + 114 * b + 500) / 1000) as u8;
            for c in 0..CHANNELS {
                out.set(c, y, x, l);
            }
        }
    }
    out
}

fn luma_f32(r: f32, g: f32, b: f32) -> f32 {
    0.299 * r + 0.587 * g + 0.114 * b
}

/// Random brightness, contrast, saturation, and hue, in that fixed order.
///
/// Multiplicative factors are uniform in `[1 - s, 1 + s]` (floored at 0) and
/// the hue shift is uniform in `[-s_h, s_h]` turns of the hue circle; each
/// stage clamps back into `[0, 255]`. Stages whose draw lands exactly on the
/// identity are skipped, so zero strengths leave the image untouched.
pub fn color_jitter(img: &ImageU8, policy: &AugmentPolicy, rng: &mut RandomStream) -> ImageU8 {
    let fb = rng.uniform((1.0 - policy.brightness).max(0.0), 1.0 + policy.brightness) as f32;
    let fc = rng.uniform((1.0 - policy.contrast).max(0.0), 1.0 + policy.contrast) as f32;
    let fs = rng.uniform((1.0 - policy.saturation).max(0.0), 1.0 + policy.saturation) as f32;
    let hue = rng.uniform(-policy.hue, policy.hue) as f32;

    let npx = img.height * img.width;
    let mut buf: Vec<f32> = img.data.iter().map(|&v| v as f32).collect();
    let clamp = |buf: &mut [f32]| {
        for v in buf.iter_mut() {
            *v = v.clamp(0.0, 255.0);
        }
    };

    if fb != 1.0 {
        for v in buf.iter_mut() {
            *v *= fb;
        }
        clamp(&mut buf);
    }
    if fc != 1.0 {
        let mut mean = 0.0f32;
        for p in 0..npx {
            mean += luma_f32(buf[p], buf[npx + p], buf[2 * npx + p]);
        }
        mean /= npx as f32;
        for v in buf.iter_mut() {
            *v = mean + fc * (*v - mean);
        }
        clamp(&mut buf);
    }
    if fs != 1.0 {
        for p in 0..npx {
            let l = luma_f32(buf[p], buf[npx + p], buf[2 * npx + p]);
            for c in 0..CHANNELS {
                let v = &mut buf[c * npx + p];
                *v = l + fs * (*v - l);
            }
        }
        clamp(&mut buf);
    }
    if hue != 0.0 {
        for p in 0..npx {
            let (r, g, b) = (buf[p] / 255.0, buf[npx + p] / 255.0, buf[2 * npx + p] / 255.0);
            let (h, s, v) = rgb_to_hsv(r, g, b);
            let (r, g, b) = hsv_to_rgb((h + hue).rem_euclid(1.0), s, v);
            buf[p] = r * 255.0;
            buf[npx + p] = g * 255.0;
            buf[2 * npx + p] = b * 255.0;
        }
        clamp(&mut buf);
    }

    let data = buf.into_iter().map(round_u8).collect();
    ImageU8 { height: img.height, width: img.width, data }
}

fn rgb_to_hsv(r: f32, g: f32, b: f32) -> (f32, f32, f32) {
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let delta = max - min;
    let h = if delta == 0.0 {
        0.0
    } else if max == r {
        (((g - b) / delta).rem_euclid(6.0)) / 6.0
    } else if max == g {
        ((b - r) / delta + 2.0) / 6.0
    } else {
        ((r - g) / delta + 4.0) / 6.0
    };
    let s = if max == 0.0 { 0.0 } else { delta / max };
    (h, s, max)
}

pub(crate) fn hsv_to_rgb(h: f32, s: f32, v: f32) -> (f32, f32, f32) {
    let h6 = h * 6.0;
    let c = v * s;
    let x = c * (1.0 - (h6.rem_euclid(2.0) - 1.0).abs());
    let m = v - c;
    let (r, g, b) = match h6 as usize {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    (r + m, g + m, b + m)
}

/// One full pipeline pass: crop, maybe flip, maybe jitter, maybe grayscale.
pub fn augment_view(img: &ImageU8, policy: &AugmentPolicy, rng: &mut RandomStream) -> ImageU8 {
    let mut view = random_resized_crop(img, policy, rng);
    if rng.chance(policy.flip_p) {
        view = hflip(&view);
    }
    if rng.chance(policy.jitter_p) {
        view = color_jitter(&view, policy, rng);
    }
    if rng.chance(policy.grayscale_p) {
        view = to_grayscale(&view);
    }
    view
}

/// The two views of one image, as `[0, 1]` floats.
///
/// Views draw from the stream's children 0 and 1, so the result is a pure
/// function of `(img, policy, seed, stream id)` and independent of worker
/// scheduling.
pub fn augment_pair<T: Real>(
    img: &ImageU8,
    policy: &AugmentPolicy,
    rng: &RandomStream,
) -> (FloatImage<T>, FloatImage<T>) {
    let a = augment_view(img, policy, &mut rng.fork(0)).to_float();
    let b = augment_view(img, policy, &mut rng.fork(1)).to_float();
    (a, b)
}
