//! Class-conditional Gaussian model of the latent space.
//!
//! Each class `k` is modeled as `N(mean_k, Σ)` with a covariance shared across
//! classes. The shared covariance induces a linear discriminant: the class
//! posterior is a softmax over `mean_kᵀ Σ⁻¹ h − ½ mean_kᵀ Σ⁻¹ mean_k + log prior_k`,
//! and the negated logit is the per-class GDA energy.
//!
//! All quantities use the regularized covariance `Σ + εI` through its lower
//! Cholesky factor; no explicit inverse is ever formed.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::Rng;

use crate::error::{check_dim, check_finite, Error, Result};
use crate::linalg;
use crate::rng::fill_standard_normal;

/// Default multiplier for the covariance ridge: `ε = scale · trace(Σ)/d`.
pub const DEFAULT_EPSILON_SCALE: f64 = 1e-6;

const MAGIC: &[u8; 4] = b"GDA1";

/// Per-class means with a shared, regularized covariance and class priors.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassGaussianModel {
    classes: usize,
    dim: usize,
    /// `classes x dim`, row-major.
    means: Vec<f64>,
    /// Unregularized pooled covariance, `dim x dim`.
    covariance: Vec<f64>,
    /// Lower factor of `covariance + epsilon·I`.
    chol: Vec<f64>,
    priors: Vec<f64>,
    epsilon: f64,
    // Cached per-class terms: Σ⁻¹ mean_k and ½ mean_kᵀ Σ⁻¹ mean_k.
    precision_means: Vec<f64>,
    half_quad: Vec<f64>,
    log_det_chol: f64,
}

/// Result of comparing the energy gap between a class mean and a point `t`
/// with its quadratic upper bound, plus the induced free-energy lower bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyGapReport {
    /// `energy(mean_k, k) − energy(t, k)`.
    pub gap: f64,
    /// `½ (t − mean_k)ᵀ Σ⁻¹ (t + mean_k)`.
    pub bound: f64,
    /// `gap < bound`.
    pub holds: bool,
    /// `t` coincides with the class mean, so the strict inequality degenerates
    /// to equality.
    pub boundary: bool,
    /// GDA free energy `−log Σ_j exp(−energy(t, j))`.
    pub free_energy: f64,
    /// `−log Σ_j exp(−energy(mean_j, j) + bound_j)`.
    pub free_energy_lower_bound: f64,
    /// `free_energy > free_energy_lower_bound`.
    pub free_energy_bound_holds: bool,
}

impl ClassGaussianModel {
    /// Maximum-likelihood fit: per-class sample means, pooled covariance
    /// normalized by the total sample count, empirical class priors.
    ///
    /// The ridge `ε = epsilon_scale · trace(Σ)/d` is added before factorizing.
    pub fn fit(
        embeddings: &[Vec<f64>],
        labels: &[usize],
        classes: usize,
        epsilon_scale: f64,
    ) -> Result<Self> {
        if classes == 0 {
            return Err(Error::input("at least one class is required"));
        }
        if embeddings.len() != labels.len() {
            return Err(Error::input(format!(
                "{} embeddings but {} labels",
                embeddings.len(),
                labels.len()
            )));
        }
        if !(epsilon_scale >= 0.0) || !epsilon_scale.is_finite() {
            return Err(Error::input("epsilon_scale must be finite and nonnegative"));
        }
        let dim = embeddings
            .first()
            .map(Vec::len)
            .ok_or_else(|| Error::Estimation("no embeddings".into()))?;
        if dim == 0 {
            return Err(Error::input("embedding dimension must be at least 1"));
        }
        let mut counts = vec![0usize; classes];
        for (x, &y) in embeddings.iter().zip(labels) {
            check_dim(dim, x.len())?;
            check_finite(x, "embedding")?;
            if y >= classes {
                return Err(Error::InvalidClass { class: y, classes });
            }
            counts[y] += 1;
        }
        if let Some(k) = counts.iter().position(|&c| c < 2) {
            return Err(Error::Estimation(format!(
                "class {k} has {} samples; at least 2 are required",
                counts[k]
            )));
        }

        let mut means = vec![0.0; classes * dim];
        for (x, &y) in embeddings.iter().zip(labels) {
            for (m, v) in means[y * dim..(y + 1) * dim].iter_mut().zip(x) {
                *m += v;
            }
        }
        for (k, &c) in counts.iter().enumerate() {
            means[k * dim..(k + 1) * dim]
                .iter_mut()
                .for_each(|m| *m /= c as f64);
        }

        let total = embeddings.len() as f64;
        let mut covariance = vec![0.0; dim * dim];
        let mut dev = vec![0.0; dim];
        for (x, &y) in embeddings.iter().zip(labels) {
            for ((d, v), m) in dev.iter_mut().zip(x).zip(&means[y * dim..(y + 1) * dim]) {
                *d = v - m;
            }
            for i in 0..dim {
                for j in i..dim {
                    covariance[i * dim + j] += dev[i] * dev[j];
                }
            }
        }
        for i in 0..dim {
            for j in i..dim {
                let v = covariance[i * dim + j] / total;
                covariance[i * dim + j] = v;
                covariance[j * dim + i] = v;
            }
        }

        let trace: f64 = (0..dim).map(|i| covariance[i * dim + i]).sum();
        let epsilon = if trace > 0.0 {
            epsilon_scale * trace / dim as f64
        } else {
            epsilon_scale
        };
        let priors = counts.iter().map(|&c| c as f64 / total).collect();
        Self::from_parts(classes, dim, means, covariance, priors, epsilon)
    }

    /// Assembles a model from explicit parameters and factorizes `Σ + εI`.
    pub fn from_parts(
        classes: usize,
        dim: usize,
        means: Vec<f64>,
        covariance: Vec<f64>,
        priors: Vec<f64>,
        epsilon: f64,
    ) -> Result<Self> {
        if classes == 0 || dim == 0 {
            return Err(Error::input("model needs at least one class and one dimension"));
        }
        check_dim(classes * dim, means.len())?;
        check_dim(dim * dim, covariance.len())?;
        check_dim(classes, priors.len())?;
        check_finite(&means, "means")?;
        check_finite(&covariance, "covariance")?;
        check_finite(&priors, "priors")?;
        if !(epsilon >= 0.0) || !epsilon.is_finite() {
            return Err(Error::input("epsilon must be finite and nonnegative"));
        }
        if priors.iter().any(|&p| p < 0.0) {
            return Err(Error::input("priors must be nonnegative"));
        }
        let prior_sum: f64 = priors.iter().sum();
        if (prior_sum - 1.0).abs() > 1e-12 {
            return Err(Error::input(format!("priors sum to {prior_sum}, not 1")));
        }
        let scale = covariance.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for i in 0..dim {
            for j in 0..i {
                let (a, b) = (covariance[i * dim + j], covariance[j * dim + i]);
                if (a - b).abs() > 1e-12 * scale {
                    return Err(Error::input(format!(
                        "covariance is not symmetric at ({i}, {j})"
                    )));
                }
            }
        }

        let mut regularized = covariance.clone();
        for i in 0..dim {
            regularized[i * dim + i] += epsilon;
        }
        let chol = linalg::cholesky(&regularized, dim)?;
        let log_det_chol = (0..dim).map(|i| chol[i * dim + i].ln()).sum();

        let mut precision_means = means.clone();
        let mut half_quad = Vec::with_capacity(classes);
        for k in 0..classes {
            let row = &mut precision_means[k * dim..(k + 1) * dim];
            linalg::cholesky_solve(&chol, dim, row);
            half_quad.push(0.5 * linalg::dot(row, &means[k * dim..(k + 1) * dim]));
        }

        Ok(Self {
            classes,
            dim,
            means,
            covariance,
            chol,
            priors,
            epsilon,
            precision_means,
            half_quad,
            log_det_chol,
        })
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn mean(&self, k: usize) -> &[f64] {
        &self.means[k * self.dim..(k + 1) * self.dim]
    }

    pub fn means(&self) -> &[f64] {
        &self.means
    }

    /// Pooled covariance before regularization.
    pub fn covariance(&self) -> &[f64] {
        &self.covariance
    }

    /// Lower Cholesky factor of `covariance + epsilon·I`.
    pub fn cholesky_factor(&self) -> &[f64] {
        &self.chol
    }

    pub fn priors(&self) -> &[f64] {
        &self.priors
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// `covariance + epsilon·I`.
    pub fn regularized_covariance(&self) -> Vec<f64> {
        let mut c = self.covariance.clone();
        for i in 0..self.dim {
            c[i * self.dim + i] += self.epsilon;
        }
        c
    }

    fn check_query(&self, x: &[f64], k: usize) -> Result<()> {
        check_dim(self.dim, x.len())?;
        self.check_class(k)
    }

    fn check_class(&self, k: usize) -> Result<()> {
        if k >= self.classes {
            return Err(Error::InvalidClass {
                class: k,
                classes: self.classes,
            });
        }
        Ok(())
    }

    /// Squared Mahalanobis distance of `x` from the mean of class `k`.
    pub fn mahalanobis_sq(&self, x: &[f64], k: usize) -> Result<f64> {
        self.check_query(x, k)?;
        let mut r: Vec<f64> = x.iter().zip(self.mean(k)).map(|(a, m)| a - m).collect();
        linalg::solve_lower(&self.chol, self.dim, &mut r);
        Ok(linalg::dot(&r, &r))
    }

    /// `log N(x; mean_k, Σ + εI)`.
    pub fn log_density(&self, x: &[f64], k: usize) -> Result<f64> {
        let m = self.mahalanobis_sq(x, k)?;
        let d = self.dim as f64;
        Ok(-0.5 * d * std::f64::consts::TAU.ln() - self.log_det_chol - 0.5 * m)
    }

    fn logit(&self, h: &[f64], k: usize) -> f64 {
        let a = &self.precision_means[k * self.dim..(k + 1) * self.dim];
        linalg::dot(a, h) - self.half_quad[k] + self.priors[k].ln()
    }

    /// Class posterior `p(y | h)` under the shared-covariance model.
    pub fn posterior(&self, h: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim, h.len())?;
        let mut p: Vec<f64> = (0..self.classes).map(|k| self.logit(h, k)).collect();
        linalg::softmax_in_place(&mut p);
        Ok(p)
    }

    /// Per-class GDA energy `−mean_kᵀ Σ⁻¹ h + ½ mean_kᵀ Σ⁻¹ mean_k − log prior_k`.
    pub fn gda_energy(&self, h: &[f64], k: usize) -> Result<f64> {
        self.check_query(h, k)?;
        if self.priors[k] <= 0.0 {
            return Err(Error::Numerical(format!(
                "class {k} has zero prior; its energy is undefined"
            )));
        }
        Ok(-self.logit(h, k))
    }

    /// GDA free energy `−log Σ_k exp(−energy(h, k))`.
    pub fn free_energy(&self, h: &[f64]) -> Result<f64> {
        check_dim(self.dim, h.len())?;
        let logits: Vec<f64> = (0..self.classes).map(|k| self.logit(h, k)).collect();
        Ok(-linalg::log_sum_exp(&logits))
    }

    /// Draws from `N(mean_k, Σ + εI)`.
    pub fn sample<R: Rng + ?Sized>(&self, k: usize, rng: &mut R) -> Result<Vec<f64>> {
        self.check_class(k)?;
        let mut z = vec![0.0; self.dim];
        fill_standard_normal(rng, &mut z);
        self.sample_with_noise(k, &z)
    }

    /// Deterministic core of [`sample`](Self::sample): `mean_k + L z`.
    pub fn sample_with_noise(&self, k: usize, z: &[f64]) -> Result<Vec<f64>> {
        self.check_query(z, k)?;
        let lz = linalg::lower_mul(&self.chol, self.dim, z);
        Ok(self.mean(k).iter().zip(lz).map(|(m, v)| m + v).collect())
    }

    /// Checks `energy(mean_k) − energy(t) < ½ (t − mean_k)ᵀ Σ⁻¹ (t + mean_k)` and
    /// evaluates the free-energy lower bound it implies at `t`.
    pub fn check_energy_gap_bound(&self, t: &[f64], k: usize) -> Result<EnergyGapReport> {
        self.check_query(t, k)?;
        let dim = self.dim;
        let bound_for = |j: usize| {
            let mean = self.mean(j);
            let mut w: Vec<f64> = t.iter().zip(mean).map(|(a, m)| a - m).collect();
            linalg::cholesky_solve(&self.chol, dim, &mut w);
            let gap = linalg::dot(mean, &w);
            let sum: Vec<f64> = t.iter().zip(mean).map(|(a, m)| a + m).collect();
            (gap, 0.5 * linalg::dot(&sum, &w))
        };

        let (gap, bound) = bound_for(k);
        let boundary = t == self.mean(k);

        let mut lower_terms = Vec::with_capacity(self.classes);
        for j in 0..self.classes {
            let (_, b) = bound_for(j);
            // −energy(mean_j, j) is the logit at the mean.
            lower_terms.push(self.logit(self.mean(j), j) + b);
        }
        let free_energy = self.free_energy(t)?;
        let free_energy_lower_bound = -linalg::log_sum_exp(&lower_terms);

        Ok(EnergyGapReport {
            gap,
            bound,
            holds: !boundary && gap < bound,
            boundary,
            free_energy,
            free_energy_lower_bound,
            free_energy_bound_holds: free_energy > free_energy_lower_bound,
        })
    }

    /// Binary encoding: `"GDA1"`, u32 K, u32 d, then little-endian f64 arrays
    /// (means row-major, covariance row-major, priors, epsilon).
    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&(self.classes as u32).to_le_bytes())?;
        w.write_all(&(self.dim as u32).to_le_bytes())?;
        for v in self
            .means
            .iter()
            .chain(&self.covariance)
            .chain(&self.priors)
            .chain(std::iter::once(&self.epsilon))
        {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self> {
        let mut magic = [0u8; 4];
        read_exact(r, &mut magic)?;
        if &magic != MAGIC {
            return Err(Error::format("bad magic, expected GDA1"));
        }
        let classes = read_u32(r)? as usize;
        let dim = read_u32(r)? as usize;
        if classes == 0 || dim == 0 || classes > 1 << 20 || dim > 1 << 14 {
            return Err(Error::format(format!("implausible shape K={classes}, d={dim}")));
        }
        let means = read_f64s(r, classes * dim)?;
        let covariance = read_f64s(r, dim * dim)?;
        let priors = read_f64s(r, classes)?;
        let epsilon = read_f64s(r, 1)?[0];
        if r.read(&mut [0u8; 1])? != 0 {
            return Err(Error::format("trailing bytes after model"));
        }
        Self::from_parts(classes, dim, means, covariance, priors, epsilon)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_from(&mut BufReader::new(File::open(path)?))
    }
}

pub(crate) fn read_exact<R: Read>(r: &mut R, buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => Error::format("truncated file"),
        _ => Error::Io(e),
    })
}

pub(crate) fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b)?;
    Ok(u32::from_le_bytes(b))
}

pub(crate) fn read_f64s<R: Read>(r: &mut R, n: usize) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(n);
    let mut b = [0u8; 8];
    for _ in 0..n {
        read_exact(r, &mut b)?;
        out.push(f64::from_le_bytes(b));
    }
    Ok(out)
}
