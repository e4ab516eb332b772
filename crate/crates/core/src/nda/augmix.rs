//! AugMix-style stochastic mixing of augmentation chains.
//!
//! Op magnitudes scale as `(severity / 10) · op_max`, so severities above 10
//! push past the usual range; each op clamps to its valid domain.

use rand::Rng;

use super::image::Image;
use crate::error::{Error, Result};
use crate::rng::dirichlet_ones;

const ROTATE_MAX_DEG: f64 = 30.0;
const TRANSLATE_MAX_FRAC: f64 = 1.0 / 3.0;
const SHEAR_MAX: f64 = 0.3;
const POSTERIZE_MAX: f64 = 4.0;
const SOLARIZE_MAX: f64 = 1.0;

/// A single pixel-space operation with its resolved magnitude.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AugOp {
    Identity,
    /// Degrees, counter-clockwise.
    Rotate(f64),
    /// Pixels; positive moves content right.
    TranslateX(i64),
    /// Pixels; positive moves content down.
    TranslateY(i64),
    ShearX(f64),
    ShearY(f64),
    /// Bits kept per 8-bit sample.
    Posterize(u32),
    /// Samples at or above the threshold are inverted.
    Solarize(f64),
    Invert,
}

const OP_KINDS: usize = 8;

impl AugOp {
    /// Draws one of the eight non-identity ops at the given severity.
    pub fn sample<R: Rng + ?Sized>(severity: u32, height: usize, width: usize, rng: &mut R) -> Self {
        let level = severity as f64 / 10.0;
        let kind = rng.random_range(0..OP_KINDS);
        let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
        match kind {
            0 => AugOp::Rotate(sign * (level * ROTATE_MAX_DEG).min(180.0)),
            1 => {
                let px = (level * TRANSLATE_MAX_FRAC * width as f64).round().min(width as f64);
                AugOp::TranslateX((sign * px) as i64)
            }
            2 => {
                let px = (level * TRANSLATE_MAX_FRAC * height as f64).round().min(height as f64);
                AugOp::TranslateY((sign * px) as i64)
            }
            3 => AugOp::ShearX(sign * (level * SHEAR_MAX).min(1.0)),
            4 => AugOp::ShearY(sign * (level * SHEAR_MAX).min(1.0)),
            5 => {
                let bits = 4.0 - (level * POSTERIZE_MAX).round();
                AugOp::Posterize(bits.clamp(1.0, 8.0) as u32)
            }
            6 => AugOp::Solarize((1.0 - level * SOLARIZE_MAX).clamp(0.0, 1.0)),
            _ => AugOp::Invert,
        }
    }

    pub fn apply(&self, img: &Image) -> Image {
        match *self {
            AugOp::Identity => img.clone(),
            AugOp::Rotate(deg) => {
                let (s, c) = deg.to_radians().sin_cos();
                let (cx, cy) = center(img);
                remap(img, |x, y| {
                    let (dx, dy) = (x - cx, y - cy);
                    (c * dx + s * dy + cx, -s * dx + c * dy + cy)
                })
            }
            AugOp::TranslateX(px) => remap(img, |x, y| (x - px as f64, y)),
            AugOp::TranslateY(px) => remap(img, |x, y| (x, y - px as f64)),
            AugOp::ShearX(s) => {
                let (_, cy) = center(img);
                remap(img, |x, y| (x + s * (y - cy), y))
            }
            AugOp::ShearY(s) => {
                let (cx, _) = center(img);
                remap(img, |x, y| (x, y + s * (x - cx)))
            }
            AugOp::Posterize(bits) => {
                let mask = !((1u32 << (8 - bits.min(8))) - 1) as u8;
                map_samples(img, |v| (super::image::quantize(v) & mask) as f64 / 255.0)
            }
            AugOp::Solarize(threshold) => map_samples(img, |v| if v >= threshold { 1.0 - v } else { v }),
            AugOp::Invert => map_samples(img, |v| 1.0 - v),
        }
    }
}

fn center(img: &Image) -> (f64, f64) {
    ((img.width() as f64 - 1.0) / 2.0, (img.height() as f64 - 1.0) / 2.0)
}

/// Nearest-neighbor inverse mapping with zero fill outside the source.
fn remap(img: &Image, source: impl Fn(f64, f64) -> (f64, f64)) -> Image {
    let mut out = img.blank_like();
    let (h, w) = (img.height() as i64, img.width() as i64);
    for y in 0..img.height() {
        for x in 0..img.width() {
            let (sx, sy) = source(x as f64, y as f64);
            let (sx, sy) = (sx.round() as i64, sy.round() as i64);
            if (0..w).contains(&sx) && (0..h).contains(&sy) {
                out.pixel_mut(y, x)
                    .copy_from_slice(img.pixel(sy as usize, sx as usize));
            }
        }
    }
    out
}

fn map_samples(img: &Image, f: impl Fn(f64) -> f64) -> Image {
    let mut out = img.clone();
    out.data_mut().iter_mut().for_each(|v| *v = f(*v).clamp(0.0, 1.0));
    out
}

/// Deterministic mixing core: `(1 − m)·img + m·Σ_i w_i · chain_i(img)`, clamped.
pub fn augmix_mix(img: &Image, chains: &[Vec<AugOp>], weights: &[f64], m: f64) -> Result<Image> {
    if chains.len() != weights.len() {
        return Err(Error::input(format!(
            "{} chains but {} weights",
            chains.len(),
            weights.len()
        )));
    }
    if !(0.0..=1.0).contains(&m) {
        return Err(Error::input(format!("mixing weight must lie in [0, 1], got {m}")));
    }
    let mut mixed = vec![0.0; img.data().len()];
    for (chain, &w) in chains.iter().zip(weights) {
        let out = chain.iter().fold(img.clone(), |acc, op| op.apply(&acc));
        for (acc, v) in mixed.iter_mut().zip(out.data()) {
            *acc += w * v;
        }
    }
    let data = img
        .data()
        .iter()
        .zip(mixed)
        .map(|(orig, aug)| (1.0 - m) * orig + m * aug)
        .collect();
    Ok(Image::from_clamped(img.height(), img.width(), img.channels(), data))
}

/// Samples `width` chains of random depth in `depth_range` (inclusive),
/// Dirichlet(1) chain weights and a Beta(1, 1) skip weight, then mixes.
pub fn augmix_lite<R: Rng + ?Sized>(
    img: &Image,
    severity: u32,
    width: usize,
    depth_range: [usize; 2],
    rng: &mut R,
) -> Result<Image> {
    if severity < 1 {
        return Err(Error::input("augmix severity must be at least 1"));
    }
    if width < 1 || depth_range[0] > depth_range[1] {
        return Err(Error::input("augmix needs width ≥ 1 and a valid depth range"));
    }
    let chains: Vec<Vec<AugOp>> = (0..width)
        .map(|_| {
            let depth = rng.random_range(depth_range[0]..=depth_range[1]);
            (0..depth)
                .map(|_| AugOp::sample(severity, img.height(), img.width(), rng))
                .collect()
        })
        .collect();
    let weights = dirichlet_ones(rng, width);
    // Beta(1, 1) is uniform on [0, 1].
    let m = rng.random::<f64>();
    augmix_mix(img, &chains, &weights, m)
}

/// Light augmentation used by the "Aug.+" baselines: severity 3, no jigsaw.
pub fn mild_augmix<R: Rng + ?Sized>(img: &Image, rng: &mut R) -> Result<Image> {
    augmix_lite(img, 3, 3, [1, 3], rng)
}
