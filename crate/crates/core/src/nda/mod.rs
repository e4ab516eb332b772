//! Negative data augmentation: severe pixel-space corruptions used as
//! synthetic outliers, plus mild augmentation for the "Aug.+" baselines.
//!
//! Two corruption branches are chosen at random per image:
//! AugMix at high severity followed by a non-identity jigsaw shuffle, or a
//! random convolution with a large kernel.

mod augmix;
mod image;
mod jigsaw;
mod randconv;
mod vector;

pub use augmix::{augmix_lite, augmix_mix, mild_augmix, AugOp};
pub use image::{quantize, Image};
pub use jigsaw::{invert_permutation, jigsaw, random_non_identity_permutation, validate_permutation};
pub use randconv::{randconv, randconv_with_kernel, ConvKernel};
pub use vector::VectorView;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NdaConfig {
    pub augmix_severity: u32,
    pub augmix_width: usize,
    pub augmix_depth_range: [usize; 2],
    /// Patches per side; 4 gives 16 patches.
    pub jigsaw_grid: usize,
    pub randconv_kernel_sizes: Vec<usize>,
    /// Probability of the AugMix∘Jigsaw branch (otherwise RandConv).
    pub branch_prob_augjig: f64,
    /// Vector inputs only: canvas width per coordinate as a multiple of the
    /// training data's range, centered on it.
    pub vector_canvas_scale: f64,
}

impl Default for NdaConfig {
    fn default() -> Self {
        Self {
            augmix_severity: 11,
            augmix_width: 3,
            augmix_depth_range: [1, 3],
            jigsaw_grid: 4,
            randconv_kernel_sizes: vec![9, 11, 13, 15, 17, 19],
            branch_prob_augjig: 0.5,
            vector_canvas_scale: 3.0,
        }
    }
}

impl NdaConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, why: String| Err(Error::Config(format!("nda.{key}: {why}")));
        if self.augmix_severity < 1 {
            return bad("augmix_severity", "must be at least 1".into());
        }
        if self.augmix_width < 1 {
            return bad("augmix_width", "must be at least 1".into());
        }
        let [lo, hi] = self.augmix_depth_range;
        if lo < 1 || lo > hi {
            return bad("augmix_depth_range", format!("invalid range [{lo}, {hi}]"));
        }
        if self.jigsaw_grid < 1 {
            return bad("jigsaw_grid", "must be at least 1".into());
        }
        if let Some(k) = self.randconv_kernel_sizes.iter().find(|&&k| k < 3 || k % 2 == 0) {
            return bad("randconv_kernel_sizes", format!("{k} is not an odd size ≥ 3"));
        }
        if !(0.0..=1.0).contains(&self.branch_prob_augjig) {
            return bad("branch_prob_augjig", "must lie in [0, 1]".into());
        }
        if !(self.vector_canvas_scale >= 1.0) || !self.vector_canvas_scale.is_finite() {
            return bad("vector_canvas_scale", "must be at least 1".into());
        }
        if self.branch_prob_augjig < 1.0 && self.randconv_kernel_sizes.is_empty() {
            return bad("randconv_kernel_sizes", "empty while the RandConv branch is reachable".into());
        }
        if self.branch_prob_augjig > 0.0 && self.jigsaw_grid < 2 {
            return bad("jigsaw_grid", "must be at least 2 for a non-identity shuffle".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NdaBranch {
    AugmixJigsaw,
    RandConv,
}

/// Applies a fixed corruption branch.
pub fn nda_apply<R: Rng + ?Sized>(
    img: &Image,
    branch: NdaBranch,
    cfg: &NdaConfig,
    rng: &mut R,
) -> Result<Image> {
    match branch {
        NdaBranch::AugmixJigsaw => {
            let mixed = augmix_lite(
                img,
                cfg.augmix_severity,
                cfg.augmix_width,
                cfg.augmix_depth_range,
                rng,
            )?;
            let perm = random_non_identity_permutation(cfg.jigsaw_grid * cfg.jigsaw_grid, rng)?;
            jigsaw(&mixed, cfg.jigsaw_grid, &perm)
        }
        NdaBranch::RandConv => {
            if cfg.randconv_kernel_sizes.is_empty() {
                return Err(Error::Config("nda.randconv_kernel_sizes is empty".into()));
            }
            let k = cfg.randconv_kernel_sizes[rng.random_range(0..cfg.randconv_kernel_sizes.len())];
            randconv(img, k, rng)
        }
    }
}

pub fn choose_branch<R: Rng + ?Sized>(cfg: &NdaConfig, rng: &mut R) -> NdaBranch {
    if rng.random::<f64>() < cfg.branch_prob_augjig {
        NdaBranch::AugmixJigsaw
    } else {
        NdaBranch::RandConv
    }
}

/// One negative sample: a random branch applied to `img`.
pub fn nda_sample<R: Rng + ?Sized>(img: &Image, cfg: &NdaConfig, rng: &mut R) -> Result<Image> {
    let branch = choose_branch(cfg, rng);
    nda_apply(img, branch, cfg, rng)
}

/// Corrupts a batch. Image `i` uses the stream derived from `(seed, i)`, so
/// the result does not depend on scheduling or processing order.
pub fn nda_batch(images: &[Image], cfg: &NdaConfig, seed: u64) -> Result<Vec<Image>> {
    images
        .par_iter()
        .enumerate()
        .map(|(i, img)| nda_sample(img, cfg, &mut rng::stream(seed, i as u64)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    fn textured(h: usize, w: usize, c: usize, seed: u64) -> Image {
        let mut r = seeded(seed);
        Image::new(h, w, c, (0..h * w * c).map(|_| r.random()).collect()).unwrap()
    }

    #[test]
    fn default_config_is_valid() {
        NdaConfig::default().validate().unwrap();
        let mut c = NdaConfig::default();
        c.randconv_kernel_sizes.push(8);
        assert!(c.validate().is_err());
        let c = NdaConfig { branch_prob_augjig: 1.5, ..NdaConfig::default() };
        assert!(c.validate().is_err());
    }

    #[test]
    fn augjig_branch_always_changes_textured_input() {
        let cfg = NdaConfig::default();
        let img = textured(32, 32, 3, 1);
        let mut rng = seeded(2);
        for _ in 0..50 {
            let out = nda_apply(&img, NdaBranch::AugmixJigsaw, &cfg, &mut rng).unwrap();
            assert_ne!(out, img);
        }
    }

    #[test]
    fn branch_frequencies_are_balanced() {
        let cfg = NdaConfig::default();
        let mut rng = seeded(17);
        let n = 10_000;
        let augjig = (0..n)
            .filter(|_| choose_branch(&cfg, &mut rng) == NdaBranch::AugmixJigsaw)
            .count() as f64;
        let sigma = (n as f64 * 0.25).sqrt();
        assert!((augjig - n as f64 / 2.0).abs() <= 3.0 * sigma);
    }

    #[test]
    fn batch_is_order_independent() {
        let cfg = NdaConfig::default();
        let images: Vec<Image> = (0..6).map(|i| textured(24, 24, 3, i)).collect();
        let forward = nda_batch(&images, &cfg, 42).unwrap();
        // Processing a single image with its derived stream gives the same result.
        for i in (0..6).rev() {
            let solo = nda_sample(&images[i], &cfg, &mut rng::stream(42, i as u64)).unwrap();
            assert_eq!(solo, forward[i]);
        }
        assert_eq!(forward, nda_batch(&images, &cfg, 42).unwrap());
        for out in &forward {
            assert!(out.data().iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }
}
