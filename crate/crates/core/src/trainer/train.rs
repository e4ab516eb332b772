//! Training loop for the baseline grid and the combined method.

use std::fmt;
use std::fs::File;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::energy::free_energy_unchecked;
use crate::error::{Error, Result};
use crate::gda::ClassGaussianModel;
use crate::nda::{mild_augmix, nda_sample, Image, NdaConfig, VectorView};
use crate::rng::{self, StreamRng};
use crate::store::EmbeddingStore;
use crate::tails::{pick, sample_boundary_outliers, sample_tails, TailSample, TailSamplerConfig};

use super::loss::{argmax, total_loss, LossBatch, LossWeights};
use super::optim::AdamW;
use super::params::ModelParams;

/// Which inlier and outlier sets the energy terms use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Mode {
    /// Cross-entropy only.
    CeOnly,
    /// Latent virtual inliers + NDA outliers.
    Ours,
    /// NDA outliers only.
    NdaOnly,
    /// Mild AugMix on inputs + NDA outliers.
    AugNda,
    /// Latent boundary samples used as outliers.
    VosLike,
    /// Mild AugMix on inputs + latent boundary outliers.
    AugVos,
}

impl Mode {
    pub const ALL: [Mode; 6] = [
        Mode::CeOnly,
        Mode::Ours,
        Mode::NdaOnly,
        Mode::AugNda,
        Mode::VosLike,
        Mode::AugVos,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::CeOnly => "CE_ONLY",
            Mode::Ours => "OURS",
            Mode::NdaOnly => "NDA_ONLY",
            Mode::AugNda => "AUG_NDA",
            Mode::VosLike => "VOS_LIKE",
            Mode::AugVos => "AUG_VOS",
        }
    }

    pub fn uses_store(self) -> bool {
        matches!(self, Mode::Ours | Mode::VosLike | Mode::AugVos)
    }

    pub fn uses_nda(self) -> bool {
        matches!(self, Mode::Ours | Mode::NdaOnly | Mode::AugNda)
    }

    pub fn uses_mild_augmentation(self) -> bool {
        matches!(self, Mode::AugNda | Mode::AugVos)
    }

    pub fn is_vos(self) -> bool {
        matches!(self, Mode::VosLike | Mode::AugVos)
    }

    /// Baselines whose inlier set is the (possibly augmented) training batch.
    pub fn batch_inliers(self) -> bool {
        matches!(self, Mode::NdaOnly | Mode::AugNda | Mode::VosLike | Mode::AugVos)
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Mode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown mode {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    /// Halve the learning rate every this many epochs (0 disables).
    pub lr_halve_every: usize,
    pub weight_decay: f64,
    pub batch_size: usize,
    /// Weight of the virtual-inlier term.
    pub alpha: f64,
    /// Weight of the outlier term.
    pub beta: f64,
    pub m_id: f64,
    pub m_ood: f64,
    pub temperature: f64,
    /// First epoch with an active outlier/inlier term. Unset: 0 for NDA modes,
    /// 40% of `epochs` for the VOS-like modes.
    pub regularizer_start_epoch: Option<usize>,
    pub mode: Mode,
    pub seed: u64,
    pub hidden_widths: Vec<usize>,
    pub latent_dim: usize,
    /// Steps between Gaussian refits (and tail pool redraws).
    pub refit_every: usize,
    pub queue_capacity: usize,
    /// Embeddings per class before the first fit. Unset: `latent_dim + 2`.
    pub min_per_class: Option<usize>,
    pub epsilon_scale: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 50,
            lr: 1e-3,
            lr_halve_every: 10,
            weight_decay: 5e-4,
            batch_size: 128,
            alpha: 0.1,
            beta: 0.1,
            m_id: -20.0,
            m_ood: -7.0,
            temperature: 1.0,
            regularizer_start_epoch: None,
            mode: Mode::Ours,
            seed: 0,
            hidden_widths: vec![64, 64],
            latent_dim: 16,
            refit_every: 50,
            queue_capacity: 1000,
            min_per_class: None,
            epsilon_scale: crate::gda::DEFAULT_EPSILON_SCALE,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, why: &str| Err(Error::Config(format!("train.{key}: {why}")));
        if self.epochs == 0 {
            return bad("epochs", "must be at least 1");
        }
        if !(self.lr > 0.0) || !self.lr.is_finite() {
            return bad("lr", "must be positive");
        }
        if !(self.weight_decay >= 0.0) {
            return bad("weight_decay", "must be nonnegative");
        }
        if self.batch_size == 0 {
            return bad("batch_size", "must be at least 1");
        }
        if !(self.alpha >= 0.0) {
            return bad("alpha", "must be nonnegative");
        }
        if !(self.beta >= 0.0) {
            return bad("beta", "must be nonnegative");
        }
        if !(self.m_id < self.m_ood) {
            return bad("m_id", "must be strictly below m_ood");
        }
        if !(self.temperature > 0.0) || !self.temperature.is_finite() {
            return bad("temperature", "must be positive");
        }
        if self.latent_dim == 0 || self.hidden_widths.contains(&0) {
            return bad("hidden_widths", "layer widths must be nonzero");
        }
        if self.refit_every == 0 {
            return bad("refit_every", "must be at least 1");
        }
        if self.queue_capacity < 2 {
            return bad("queue_capacity", "must be at least 2");
        }
        if let Some(m) = self.min_per_class {
            if m < 2 || m > self.queue_capacity {
                return bad("min_per_class", "must lie in [2, queue_capacity]");
            }
        }
        if !(self.epsilon_scale >= 0.0) {
            return bad("epsilon_scale", "must be nonnegative");
        }
        Ok(())
    }

    pub fn regularizer_start(&self) -> usize {
        self.regularizer_start_epoch.unwrap_or(if self.mode.is_vos() {
            (0.4 * self.epochs as f64).round() as usize
        } else {
            0
        })
    }

    pub fn min_per_class(&self) -> usize {
        self.min_per_class
            .unwrap_or(self.latent_dim + 2)
            .min(self.queue_capacity)
    }

    pub fn lr_at(&self, epoch: usize) -> f64 {
        if self.lr_halve_every == 0 {
            return self.lr;
        }
        self.lr * 0.5f64.powi((epoch / self.lr_halve_every) as i32)
    }

    fn loss_weights(&self) -> LossWeights {
        LossWeights {
            alpha: self.alpha,
            beta: self.beta,
            m_id: self.m_id,
            m_ood: self.m_ood,
            temperature: self.temperature,
        }
    }
}

/// Labeled training inputs. When `image_shape` is set, each input is a
/// flattened `(height, width, channels)` raster in [0, 1] and corruptions act
/// on it directly; otherwise inputs are plain vectors corrupted through a
/// [`VectorView`].
#[derive(Debug, Clone, Copy)]
pub struct TrainData<'a> {
    pub inputs: &'a [Vec<f64>],
    pub labels: &'a [usize],
    pub classes: usize,
    pub image_shape: Option<(usize, usize, usize)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub ce: f64,
    pub l_id: f64,
    pub l_ood: f64,
    pub acc: f64,
    pub lr: f64,
}

/// Call counters used to check that each mode only touches its own machinery.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TrainStats {
    pub steps: usize,
    pub gaussian_fits: usize,
    pub tail_sampler_calls: usize,
    pub nda_calls: usize,
    pub mild_aug_calls: usize,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: ModelParams,
    pub history: Vec<EpochRecord>,
    pub stats: TrainStats,
    /// Last fitted latent model, if the mode uses one.
    pub gaussian: Option<ClassGaussianModel>,
}

enum Corruptor {
    Image { shape: (usize, usize, usize), cfg: NdaConfig },
    Vector(VectorView),
}

impl Corruptor {
    fn new(data: &TrainData<'_>, cfg: &NdaConfig) -> Result<Self> {
        match data.image_shape {
            Some(shape) => {
                cfg.validate()?;
                Ok(Corruptor::Image { shape, cfg: cfg.clone() })
            }
            None => Ok(Corruptor::Vector(VectorView::fit(data.inputs, cfg)?)),
        }
    }

    fn as_image(shape: (usize, usize, usize), x: &[f64]) -> Result<Image> {
        Image::new(shape.0, shape.1, shape.2, x.to_vec())
    }

    fn severe(&self, x: &[f64], rng: &mut StreamRng) -> Result<Vec<f64>> {
        match self {
            Corruptor::Image { shape, cfg } => {
                Ok(nda_sample(&Self::as_image(*shape, x)?, cfg, rng)?.into_data())
            }
            Corruptor::Vector(view) => view.corrupt(x, rng),
        }
    }

    fn mild(&self, x: &[f64], rng: &mut StreamRng) -> Result<Vec<f64>> {
        match self {
            Corruptor::Image { shape, .. } => {
                Ok(mild_augmix(&Self::as_image(*shape, x)?, rng)?.into_data())
            }
            Corruptor::Vector(view) => view.mild(x, rng),
        }
    }
}

// Stream indices for the independent random streams of one run.
const STREAM_INIT: u64 = 1;
const STREAM_SHUFFLE: u64 = 2;
const STREAM_TAILS: u64 = 3;
const STREAM_PICK: u64 = 4;
const STREAM_NDA: u64 = 5;
const STREAM_MILD: u64 = 6;

/// Trains a classifier under `cfg.mode`. Deterministic given `cfg.seed`.
pub fn train(
    data: &TrainData<'_>,
    cfg: &TrainConfig,
    tails_cfg: &TailSamplerConfig,
    nda_cfg: &NdaConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    tails_cfg.validate()?;
    if data.inputs.is_empty() || data.inputs.len() != data.labels.len() {
        return Err(Error::input("training set is empty or inputs/labels differ in length"));
    }
    if data.classes < 2 {
        return Err(Error::input("training needs at least 2 classes"));
    }
    if let Some(&y) = data.labels.iter().find(|&&y| y >= data.classes) {
        return Err(Error::InvalidClass { class: y, classes: data.classes });
    }
    let input_dim = data.inputs[0].len();
    for x in data.inputs {
        crate::error::check_dim(input_dim, x.len())?;
        crate::error::check_finite(x, "training input")?;
    }

    let mode = cfg.mode;
    let mut params = ModelParams::init(
        input_dim,
        &cfg.hidden_widths,
        cfg.latent_dim,
        data.classes,
        &mut rng::stream(cfg.seed, STREAM_INIT),
    )?;
    let mut opt = AdamW::new(&params, cfg.weight_decay);
    let weights = cfg.loss_weights();
    let corruptor = if mode.uses_nda() || mode.uses_mild_augmentation() {
        Some(Corruptor::new(data, nda_cfg)?)
    } else {
        None
    };
    let mut store = if mode.uses_store() {
        Some(EmbeddingStore::new(data.classes, cfg.latent_dim, cfg.queue_capacity)?)
    } else {
        None
    };

    let mut shuffle_rng = rng::stream(cfg.seed, STREAM_SHUFFLE);
    let mut tails_rng = rng::stream(cfg.seed, STREAM_TAILS);
    let mut pick_rng = rng::stream(cfg.seed, STREAM_PICK);
    let nda_seed = rng::derive_seed(cfg.seed, STREAM_NDA);
    let mild_seed = rng::derive_seed(cfg.seed, STREAM_MILD);

    let reg_start = cfg.regularizer_start();
    let min_ready = cfg.min_per_class();
    let mut gaussian: Option<ClassGaussianModel> = None;
    let mut tail_pool: Vec<Vec<TailSample>> = Vec::new();
    let mut stats = TrainStats::default();
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut order: Vec<usize> = (0..data.inputs.len()).collect();
    let mut step = 0usize;

    for epoch in 0..cfg.epochs {
        let lr = cfg.lr_at(epoch);
        let regularize = epoch >= reg_start;
        order.shuffle(&mut shuffle_rng);
        let (mut ce_sum, mut id_sum, mut ood_sum) = (0.0, 0.0, 0.0);
        let mut correct = 0usize;
        let mut batches = 0usize;

        for chunk in order.chunks(cfg.batch_size) {
            let labels: Vec<usize> = chunk.iter().map(|&i| data.labels[i]).collect();
            let mut inputs: Vec<Vec<f64>> = chunk.iter().map(|&i| data.inputs[i].clone()).collect();
            if mode.uses_mild_augmentation() {
                let c = corruptor.as_ref().expect("corruptor built for augmented modes");
                let step_seed = rng::derive_seed(mild_seed, step as u64);
                for (j, x) in inputs.iter_mut().enumerate() {
                    *x = c.mild(x, &mut rng::stream(step_seed, j as u64))?;
                }
                stats.mild_aug_calls += inputs.len();
            }

            // Refresh the latent Gaussian and its tail pool.
            if let Some(store) = store.as_ref() {
                let due = gaussian.is_none() || step % cfg.refit_every == 0;
                if due && store.ready(min_ready) {
                    let (emb, lab) = store.snapshot();
                    let model = ClassGaussianModel::fit(&emb, &lab, data.classes, cfg.epsilon_scale)?;
                    stats.gaussian_fits += 1;
                    tail_pool = (0..data.classes)
                        .map(|k| {
                            stats.tail_sampler_calls += 1;
                            if mode.is_vos() {
                                sample_boundary_outliers(&model, k, tails_cfg, &mut tails_rng)
                            } else {
                                sample_tails(&model, k, tails_cfg, &mut tails_rng)
                            }
                        })
                        .collect::<Result<_>>()?;
                    gaussian = Some(model);
                }
            }

            let mut tails: Vec<Vec<f64>> = Vec::new();
            if regularize && !tail_pool.is_empty() {
                for pool in &tail_pool {
                    tails.extend(
                        pick(pool, tails_cfg.per_class_batch, &mut pick_rng)
                            .into_iter()
                            .map(|t| t.vector.clone()),
                    );
                }
            }

            let mut outliers: Vec<Vec<f64>> = Vec::new();
            if mode.uses_nda() && regularize {
                let c = corruptor.as_ref().expect("corruptor built for NDA modes");
                let step_seed = rng::derive_seed(nda_seed, step as u64);
                outliers = inputs
                    .iter()
                    .enumerate()
                    .map(|(j, x)| c.severe(x, &mut rng::stream(step_seed, j as u64)))
                    .collect::<Result<_>>()?;
                stats.nda_calls += outliers.len();
            }

            let input_inliers: &[Vec<f64>] = if mode.batch_inliers() && regularize { &inputs } else { &[] };
            let batch = if mode.is_vos() {
                LossBatch {
                    inputs: &inputs,
                    labels: &labels,
                    input_inliers,
                    latent_outliers: &tails,
                    ..Default::default()
                }
            } else {
                LossBatch {
                    inputs: &inputs,
                    labels: &labels,
                    inlier_tails: &tails,
                    input_inliers,
                    input_outliers: &outliers,
                    ..Default::default()
                }
            };
            let out = match total_loss(&params, &batch, &weights) {
                Ok(out) => out,
                Err(Error::Numerical(detail)) => {
                    return Err(Error::Diverged {
                        epoch,
                        step,
                        detail,
                        last_finite: Box::new(params),
                    })
                }
                Err(e) => return Err(e),
            };

            if let Some(store) = store.as_mut() {
                for (z, &y) in out.latents.iter().zip(&labels) {
                    store.push(y, z)?;
                }
            }

            let before = params.clone();
            opt.step(&mut params, &out.grads, lr);
            if !params.is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    step,
                    detail: "parameters became non-finite after the update".into(),
                    last_finite: Box::new(before),
                });
            }

            ce_sum += out.ce;
            id_sum += out.l_id;
            ood_sum += out.l_ood;
            correct += out.correct;
            batches += 1;
            step += 1;
        }

        let nb = batches as f64;
        history.push(EpochRecord {
            epoch,
            ce: ce_sum / nb,
            l_id: id_sum / nb,
            l_ood: ood_sum / nb,
            acc: correct as f64 / data.inputs.len() as f64,
            lr,
        });
    }
    stats.steps = step;

    Ok(TrainOutcome {
        params,
        history,
        stats,
        gaussian,
    })
}

/// Negative free energy `−E(x)` for each input; higher means more in-distribution.
pub fn score_inputs(params: &ModelParams, inputs: &[Vec<f64>], temperature: f64) -> Result<Vec<f64>> {
    inputs
        .iter()
        .map(|x| {
            let (_, logits) = params.forward(x)?;
            if logits.iter().any(|v| !v.is_finite()) {
                return Err(Error::Numerical("non-finite logits while scoring".into()));
            }
            Ok(-free_energy_unchecked(&logits, temperature))
        })
        .collect()
}

pub fn predict(params: &ModelParams, inputs: &[Vec<f64>]) -> Result<Vec<usize>> {
    inputs
        .iter()
        .map(|x| Ok(argmax(&params.forward(x)?.1)))
        .collect()
}

pub fn write_history(path: impl AsRef<Path>, history: &[EpochRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(File::create(path)?);
    for rec in history {
        w.serialize(rec).map_err(crate::energy::csv_error)?;
    }
    w.flush()?;
    Ok(())
}
