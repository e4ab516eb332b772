//! Free-energy scores and the thresholded detector.
//!
//! `E(x) = −T · log Σ_k exp(f_k(x) / T)` for logits `f`. Scores are reported as
//! negative energy `−E`, so higher means more in-distribution.

use std::fs::File;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::layer::Linear;

pub const DEFAULT_TEMPERATURE: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyScore {
    pub value: f64,
    pub temperature: f64,
}

impl EnergyScore {
    pub fn neg(&self) -> f64 {
        -self.value
    }
}

/// `E = −T (m/T + log Σ exp((f_k − m)/T))` with `m = max f`.
pub fn free_energy(logits: &[f64], temperature: f64) -> Result<EnergyScore> {
    if logits.is_empty() {
        return Err(Error::input("free energy needs at least one logit"));
    }
    if !(temperature > 0.0) || !temperature.is_finite() {
        return Err(Error::input(format!(
            "temperature must be positive and finite, got {temperature}"
        )));
    }
    if logits.iter().any(|v| !v.is_finite()) {
        return Err(Error::input("logits must be finite"));
    }
    Ok(EnergyScore {
        value: free_energy_unchecked(logits, temperature),
        temperature,
    })
}

pub(crate) fn free_energy_unchecked(logits: &[f64], temperature: f64) -> f64 {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let s: f64 = logits.iter().map(|f| ((f - m) / temperature).exp()).sum();
    -temperature * (m / temperature + s.ln())
}

/// `∂E/∂f_k = −softmax(f/T)_k`.
pub fn free_energy_grad_logits(logits: &[f64], temperature: f64) -> Vec<f64> {
    let mut p: Vec<f64> = logits.iter().map(|f| f / temperature).collect();
    crate::linalg::softmax_in_place(&mut p);
    p.iter_mut().for_each(|v| *v = -*v);
    p
}

/// Energy of a latent vector evaluated through the classifier head only.
pub fn latent_energy(head: &Linear, t: &[f64], temperature: f64) -> Result<EnergyScore> {
    check_dim(head.inputs, t.len())?;
    free_energy(&head.forward_unchecked(t), temperature)
}

/// Gradient of [`latent_energy`] with respect to the latent input.
pub fn latent_energy_grad(head: &Linear, t: &[f64], temperature: f64) -> Result<Vec<f64>> {
    check_dim(head.inputs, t.len())?;
    let logits = head.forward_unchecked(t);
    Ok(head.backward_input(&free_energy_grad_logits(&logits, temperature)))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectorConfig {
    pub tau: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    Inlier,
    Outlier,
}

/// Flags an outlier iff `−E ≤ τ`.
pub fn detect(score_neg_energy: f64, cfg: &DetectorConfig) -> Decision {
    if score_neg_energy <= cfg.tau {
        Decision::Outlier
    } else {
        Decision::Inlier
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScoreLabel {
    #[serde(rename = "ID")]
    Id,
    #[serde(rename = "OOD")]
    Ood,
}

impl std::str::FromStr for ScoreLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ID" => Ok(ScoreLabel::Id),
            "OOD" => Ok(ScoreLabel::Ood),
            other => Err(Error::input(format!("label must be ID or OOD, got {other:?}"))),
        }
    }
}

/// One row of a score file (`id,score,label`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRow {
    pub id: String,
    pub score: f64,
    pub label: ScoreLabel,
}

pub fn write_scores(path: impl AsRef<Path>, rows: &[ScoreRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(File::create(path)?);
    for row in rows {
        w.serialize(row).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_scores(path: impl AsRef<Path>) -> Result<Vec<ScoreRow>> {
    let mut r = csv::Reader::from_reader(File::open(path)?);
    let headers = r.headers().map_err(csv_error)?.clone();
    if headers.iter().collect::<Vec<_>>() != ["id", "score", "label"] {
        return Err(Error::format(format!(
            "score file header must be id,score,label, got {}",
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut rows = Vec::new();
    for rec in r.deserialize() {
        let row: ScoreRow = rec.map_err(csv_error)?;
        if !row.score.is_finite() {
            return Err(Error::format(format!("non-finite score for id {}", row.id)));
        }
        rows.push(row);
    }
    Ok(rows)
}

pub(crate) fn csv_error(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::format(format!("{other:?}")),
    }
}
