use rand::Rng;

use super::image::Image;
use crate::error::{Error, Result};
use crate::rng::fill_standard_normal;

/// Square convolution kernel mapping `channels` inputs to `channels` outputs.
/// Weights are indexed `[c_out][c_in][ky][kx]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvKernel {
    pub size: usize,
    pub channels: usize,
    pub weights: Vec<f64>,
}

impl ConvKernel {
    /// Weights iid `N(0, 1/(size²·channels))`.
    pub fn random<R: Rng + ?Sized>(size: usize, channels: usize, rng: &mut R) -> Self {
        let mut weights = vec![0.0; channels * channels * size * size];
        fill_standard_normal(rng, &mut weights);
        let std = 1.0 / (size as f64 * (channels as f64).sqrt());
        weights.iter_mut().for_each(|w| *w *= std);
        Self {
            size,
            channels,
            weights,
        }
    }

    /// Per-channel centered delta.
    pub fn identity(size: usize, channels: usize) -> Self {
        let mut weights = vec![0.0; channels * channels * size * size];
        let r = size / 2;
        for c in 0..channels {
            weights[((c * channels + c) * size + r) * size + r] = 1.0;
        }
        Self {
            size,
            channels,
            weights,
        }
    }

    #[inline]
    pub fn weight(&self, c_out: usize, c_in: usize, ky: usize, kx: usize) -> f64 {
        self.weights[((c_out * self.channels + c_in) * self.size + ky) * self.size + kx]
    }
}

/// Zero-padded "same" convolution followed by per-image min-max
/// renormalization; a constant response maps to 0.5 everywhere.
pub fn randconv_with_kernel(img: &Image, kernel: &ConvKernel) -> Result<Image> {
    let k = kernel.size;
    if k % 2 == 0 || k < 1 {
        return Err(Error::input(format!("kernel size must be odd, got {k}")));
    }
    if k > img.height().min(img.width()) {
        return Err(Error::input(format!(
            "kernel size {k} exceeds the {}x{} image",
            img.height(),
            img.width()
        )));
    }
    if kernel.channels != img.channels() {
        return Err(Error::DimensionMismatch {
            expected: img.channels(),
            got: kernel.channels,
        });
    }
    let (h, w, ch) = (img.height(), img.width(), img.channels());
    let r = k / 2;
    let mut out = vec![0.0; h * w * ch];
    for y in 0..h {
        // Taps falling into the zero padding are skipped; their products are
        // ±0 and would not change a nonzero accumulator.
        let ky_lo = r.saturating_sub(y);
        let ky_hi = (h + r - y).min(k);
        for x in 0..w {
            let kx_lo = r.saturating_sub(x);
            let kx_hi = (w + r - x).min(k);
            for co in 0..ch {
                let mut acc = 0.0;
                for ci in 0..ch {
                    for ky in ky_lo..ky_hi {
                        let sy = y + ky - r;
                        for kx in kx_lo..kx_hi {
                            let sx = x + kx - r;
                            acc += kernel.weight(co, ci, ky, kx) * img.get(sy, sx, ci);
                        }
                    }
                }
                out[(y * w + x) * ch + co] = acc;
            }
        }
    }
    Ok(Image::from_clamped(h, w, ch, min_max_normalize(out)))
}

pub(crate) fn min_max_normalize(mut v: Vec<f64>) -> Vec<f64> {
    let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    if !(span > 0.0) || !span.is_finite() {
        v.iter_mut().for_each(|x| *x = 0.5);
    } else {
        v.iter_mut().for_each(|x| *x = (*x - lo) / span);
    }
    v
}

/// Random convolution with a freshly drawn `kernel_size x kernel_size` kernel.
pub fn randconv<R: Rng + ?Sized>(img: &Image, kernel_size: usize, rng: &mut R) -> Result<Image> {
    if kernel_size % 2 == 0 || kernel_size < 3 {
        return Err(Error::input(format!(
            "kernel size must be odd and at least 3, got {kernel_size}"
        )));
    }
    if kernel_size > img.height().min(img.width()) {
        return Err(Error::input(format!(
            "kernel size {kernel_size} exceeds the {}x{} image",
            img.height(),
            img.width()
        )));
    }
    let kernel = ConvKernel::random(kernel_size, img.channels(), rng);
    randconv_with_kernel(img, &kernel)
}
