//! Energy-based out-of-distribution detection with latent virtual inliers
//! and negative data augmentation.
//!
//! A small MLP classifier is trained so that in-distribution inputs get low
//! free energy `E(x) = -T logsumexp(f(x)/T)` and synthetic outliers get high
//! energy. Outliers come from severe pixel-space corruptions ([`nda`]);
//! inliers are pulled in by shaping the energy of low-likelihood samples from
//! a class-conditional Gaussian fitted to the latent features ([`gda`],
//! [`tails`]). Inputs are scored with `-E`.

pub mod cli;
pub mod config;
pub mod data;
pub mod energy;
pub mod error;
pub mod gda;
pub mod layer;
pub mod linalg;
pub mod metrics;
pub mod nda;
pub mod rng;
pub mod store;
pub mod tails;
pub mod trainer;

pub use config::RunConfig;
pub use data::{gen_synthetic, DatasetBundle, EmbeddingSet, SyntheticSpec};
pub use energy::{detect, free_energy, latent_energy, Decision, DetectorConfig, EnergyScore};
pub use error::{Error, Result};
pub use gda::ClassGaussianModel;
pub use metrics::{aupr_in, auroc, balanced_accuracy, histogram, EvalReport};
pub use nda::{Image, NdaConfig};
pub use store::EmbeddingStore;
pub use tails::{sample_tails, TailSample, TailSamplerConfig};
pub use trainer::{train, Checkpoint, Mode, ModelParams, TrainConfig, TrainData};
