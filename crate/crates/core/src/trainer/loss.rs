//! Training objective: cross-entropy on real data plus squared-hinge energy
//! margins on virtual inliers (`L_ID`) and outliers (`L_OOD`).
//!
//! `L_ID = mean max(0, E − m_id)²` over inliers and `L_OOD = mean
//! max(0, m_ood − E)²` over outliers. Latent samples are evaluated through the
//! head only, input-space samples through the full network. The total is
//! `CE + α·L_ID + β·L_OOD`, and empty inputs contribute exactly zero.

use crate::energy::{free_energy_grad_logits, free_energy_unchecked};
use crate::error::{check_dim, Error, Result};
use crate::linalg;

use super::params::ModelParams;

/// `(max(0, e − m_id))²`.
pub fn loss_id(energy: f64, m_id: f64) -> f64 {
    let h = (energy - m_id).max(0.0);
    h * h
}

/// `∂/∂e` of [`loss_id`].
pub fn loss_id_grad(energy: f64, m_id: f64) -> f64 {
    2.0 * (energy - m_id).max(0.0)
}

/// `(max(0, m_ood − e))²`.
pub fn loss_ood(energy: f64, m_ood: f64) -> f64 {
    let h = (m_ood - energy).max(0.0);
    h * h
}

/// `∂/∂e` of [`loss_ood`]; zero at the hinge.
pub fn loss_ood_grad(energy: f64, m_ood: f64) -> f64 {
    -2.0 * (m_ood - energy).max(0.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub alpha: f64,
    pub beta: f64,
    pub m_id: f64,
    pub m_ood: f64,
    pub temperature: f64,
}

/// Everything one objective evaluation sees.
#[derive(Debug, Clone, Copy, Default)]
pub struct LossBatch<'a> {
    /// Real training inputs (cross-entropy term).
    pub inputs: &'a [Vec<f64>],
    pub labels: &'a [usize],
    /// Latent virtual inliers routed into `L_ID`.
    pub inlier_tails: &'a [Vec<f64>],
    /// Input-space inliers routed into `L_ID` through the full network.
    pub input_inliers: &'a [Vec<f64>],
    /// Latent boundary samples routed into `L_OOD` (VOS-like baseline).
    pub latent_outliers: &'a [Vec<f64>],
    /// Pixel-space outliers routed into `L_OOD` through the full network.
    pub input_outliers: &'a [Vec<f64>],
}

#[derive(Debug, Clone)]
pub struct LossBreakdown {
    pub total: f64,
    pub ce: f64,
    pub l_id: f64,
    pub l_ood: f64,
    /// Correct predictions among `inputs`.
    pub correct: usize,
    /// Latent vectors of `inputs`, in order.
    pub latents: Vec<Vec<f64>>,
    pub grads: ModelParams,
}

fn non_finite(what: &str, index: usize, values: &[f64]) -> Error {
    Error::Numerical(format!(
        "non-finite {what} for sample {index}: {:?}",
        &values[..values.len().min(8)]
    ))
}

/// Evaluates the full objective and its gradient with respect to every parameter.
pub fn total_loss(params: &ModelParams, batch: &LossBatch<'_>, w: &LossWeights) -> Result<LossBreakdown> {
    if batch.inputs.len() != batch.labels.len() {
        return Err(Error::input("inputs and labels differ in length"));
    }
    let classes = params.classes();
    let temp = w.temperature;
    let mut grads = params.zeros_like();

    let mut ce = 0.0;
    let mut correct = 0;
    let mut latents = Vec::with_capacity(batch.inputs.len());
    if !batch.inputs.is_empty() {
        let scale = 1.0 / batch.inputs.len() as f64;
        for (i, (x, &y)) in batch.inputs.iter().zip(batch.labels).enumerate() {
            if y >= classes {
                return Err(Error::InvalidClass { class: y, classes });
            }
            let trace = params.trace(x)?;
            if trace.logits.iter().any(|v| !v.is_finite()) {
                return Err(non_finite("logits", i, &trace.logits));
            }
            let lse = linalg::log_sum_exp(&trace.logits);
            ce += lse - trace.logits[y];
            let mut d = trace.logits.clone();
            linalg::softmax_in_place(&mut d);
            let pred = argmax(&trace.logits);
            if pred == y {
                correct += 1;
            }
            d[y] -= 1.0;
            params.backward(&trace, &d, scale, &mut grads);
            latents.push(trace.latent().to_vec());
        }
        ce *= scale;
    }

    let l_id = hinge_term(
        params,
        batch.inlier_tails,
        batch.input_inliers,
        w.alpha,
        |e| (loss_id(e, w.m_id), loss_id_grad(e, w.m_id)),
        temp,
        "inlier",
        &mut grads,
    )?;
    let l_ood = hinge_term(
        params,
        batch.latent_outliers,
        batch.input_outliers,
        w.beta,
        |e| (loss_ood(e, w.m_ood), loss_ood_grad(e, w.m_ood)),
        temp,
        "outlier",
        &mut grads,
    )?;

    let total = ce + w.alpha * l_id + w.beta * l_ood;
    if !total.is_finite() {
        return Err(Error::Numerical(format!(
            "non-finite loss (ce={ce}, l_id={l_id}, l_ood={l_ood})"
        )));
    }
    Ok(LossBreakdown {
        total,
        ce,
        l_id,
        l_ood,
        correct,
        latents,
        grads,
    })
}

/// Mean hinge value over latent and input samples combined; accumulates
/// `weight ×` its gradient into `grads` (skipped when `weight` is 0).
#[allow(clippy::too_many_arguments)]
fn hinge_term(
    params: &ModelParams,
    latent: &[Vec<f64>],
    input: &[Vec<f64>],
    weight: f64,
    hinge: impl Fn(f64) -> (f64, f64),
    temp: f64,
    what: &str,
    grads: &mut ModelParams,
) -> Result<f64> {
    let n = latent.len() + input.len();
    if n == 0 {
        return Ok(0.0);
    }
    let scale = weight / n as f64;
    let mut sum = 0.0;
    for (i, t) in latent.iter().enumerate() {
        check_dim(params.latent_dim(), t.len())?;
        let logits = params.head.forward_unchecked(t);
        if logits.iter().any(|v| !v.is_finite()) {
            return Err(non_finite(&format!("latent {what} logits"), i, &logits));
        }
        let (value, de) = hinge(free_energy_unchecked(&logits, temp));
        sum += value;
        if de != 0.0 && weight != 0.0 {
            let d: Vec<f64> = free_energy_grad_logits(&logits, temp).iter().map(|g| g * de).collect();
            params.backward_head(t, &d, scale, grads);
        }
    }
    for (i, x) in input.iter().enumerate() {
        let trace = params.trace(x)?;
        if trace.logits.iter().any(|v| !v.is_finite()) {
            return Err(non_finite(&format!("{what} logits"), i, &trace.logits));
        }
        let (value, de) = hinge(free_energy_unchecked(&trace.logits, temp));
        sum += value;
        if de != 0.0 && weight != 0.0 {
            let d: Vec<f64> = free_energy_grad_logits(&trace.logits, temp).iter().map(|g| g * de).collect();
            params.backward(&trace, &d, scale, grads);
        }
    }
    Ok(sum / n as f64)
}

pub(crate) fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}
