//! Image view of plain feature vectors.
//!
//! A `d`-dimensional input is mapped into [0, 1] with a per-coordinate
//! canvas: the bounding box of a reference set widened by
//! `vector_canvas_scale` about its center, so corruptions can leave the
//! data's support. The result is laid out as a single-channel `h x w`
//! raster (`h·w = d`, as square as possible). The NDA configuration is
//! adapted to the raster: the jigsaw grid shrinks to the largest size that
//! tiles it, and kernel sizes are limited to the raster's shorter side.

use rand::Rng;

use super::{augmix, nda_sample, Image, NdaConfig};
use crate::error::{check_dim, Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct VectorView {
    lo: Vec<f64>,
    span: Vec<f64>,
    height: usize,
    width: usize,
    cfg: NdaConfig,
}

/// Most-square factorization `h x w` of `dim` with `h ≤ w`.
pub(crate) fn raster_shape(dim: usize) -> (usize, usize) {
    let mut h = (dim as f64).sqrt() as usize;
    while h > 1 && dim % h != 0 {
        h -= 1;
    }
    let h = h.max(1);
    (h, dim / h)
}

impl VectorView {
    pub fn fit(reference: &[Vec<f64>], base: &NdaConfig) -> Result<Self> {
        let dim = reference
            .first()
            .map(Vec::len)
            .ok_or_else(|| Error::input("vector view needs at least one reference vector"))?;
        if dim == 0 {
            return Err(Error::input("vector view needs nonzero dimension"));
        }
        let mut lo = vec![f64::INFINITY; dim];
        let mut hi = vec![f64::NEG_INFINITY; dim];
        for x in reference {
            check_dim(dim, x.len())?;
            for i in 0..dim {
                lo[i] = lo[i].min(x[i]);
                hi[i] = hi[i].max(x[i]);
            }
        }
        base.validate()?;
        let scale = base.vector_canvas_scale;
        let span: Vec<f64> = lo
            .iter()
            .zip(&hi)
            .map(|(l, h)| if h > l { (h - l) * scale } else { 1.0 })
            .collect();
        let lo = lo.iter().zip(&hi).zip(&span).map(|((l, h), s)| 0.5 * (l + h) - 0.5 * s).collect();
        let (height, width) = raster_shape(dim);
        let cfg = adapt_config(base, height, width)?;
        Ok(Self {
            lo,
            span,
            height,
            width,
            cfg,
        })
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    /// NDA settings after adapting to the raster.
    pub fn config(&self) -> &NdaConfig {
        &self.cfg
    }

    pub fn to_image(&self, x: &[f64]) -> Result<Image> {
        check_dim(self.lo.len(), x.len())?;
        let data = x
            .iter()
            .zip(self.lo.iter().zip(&self.span))
            .map(|(v, (l, s))| (v - l) / s)
            .collect();
        Ok(Image::from_clamped(self.height, self.width, 1, data))
    }

    pub fn from_image(&self, img: &Image) -> Vec<f64> {
        img.data()
            .iter()
            .zip(self.lo.iter().zip(&self.span))
            .map(|(v, (l, s))| l + v * s)
            .collect()
    }

    /// Severe corruption of one vector via the adapted NDA pipeline.
    pub fn corrupt<R: Rng + ?Sized>(&self, x: &[f64], rng: &mut R) -> Result<Vec<f64>> {
        let img = self.to_image(x)?;
        Ok(self.from_image(&nda_sample(&img, &self.cfg, rng)?))
    }

    /// Mild AugMix of one vector.
    pub fn mild<R: Rng + ?Sized>(&self, x: &[f64], rng: &mut R) -> Result<Vec<f64>> {
        let img = self.to_image(x)?;
        Ok(self.from_image(&augmix::mild_augmix(&img, rng)?))
    }
}

fn adapt_config(base: &NdaConfig, height: usize, width: usize) -> Result<NdaConfig> {
    let mut cfg = base.clone();
    cfg.jigsaw_grid = (2..=base.jigsaw_grid.max(1))
        .rev()
        .find(|g| height % g == 0 && width % g == 0)
        .unwrap_or(1);
    let side = height.min(width);
    cfg.randconv_kernel_sizes.retain(|&k| k <= side);
    if cfg.randconv_kernel_sizes.is_empty() {
        let largest_odd = if side % 2 == 1 { side } else { side.saturating_sub(1) };
        if largest_odd >= 3 {
            cfg.randconv_kernel_sizes.push(largest_odd);
        }
    }
    let jigsaw_ok = cfg.jigsaw_grid >= 2;
    let conv_ok = !cfg.randconv_kernel_sizes.is_empty();
    cfg.branch_prob_augjig = match (jigsaw_ok, conv_ok) {
        (true, true) => base.branch_prob_augjig,
        (true, false) => 1.0,
        (false, true) => 0.0,
        (false, false) => {
            return Err(Error::input(format!(
                "a {height}x{width} raster supports neither jigsaw nor random convolution"
            )))
        }
    };
    cfg.validate()?;
    Ok(cfg)
}
