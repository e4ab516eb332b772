use rand::Rng;

use crate::error::{check_dim, Result};
use crate::rng::fill_standard_normal;

/// Fully connected layer `y = W x + b` with `W` stored `outputs x inputs`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub inputs: usize,
    pub outputs: usize,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Linear {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            inputs,
            outputs,
            weight: vec![0.0; inputs * outputs],
            bias: vec![0.0; outputs],
        }
    }

    /// He-normal weights, zero bias.
    pub fn he_init<R: Rng + ?Sized>(inputs: usize, outputs: usize, rng: &mut R) -> Self {
        let mut layer = Self::zeros(inputs, outputs);
        fill_standard_normal(rng, &mut layer.weight);
        let scale = (2.0 / inputs as f64).sqrt();
        layer.weight.iter_mut().for_each(|w| *w *= scale);
        layer
    }

    pub fn param_count(&self) -> usize {
        self.weight.len() + self.bias.len()
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.inputs, x.len())?;
        Ok(self.forward_unchecked(x))
    }

    pub(crate) fn forward_unchecked(&self, x: &[f64]) -> Vec<f64> {
        self.weight
            .chunks_exact(self.inputs)
            .zip(&self.bias)
            .map(|(row, b)| crate::linalg::dot(row, x) + b)
            .collect()
    }

    /// `Wᵀ g`.
    pub(crate) fn backward_input(&self, grad_out: &[f64]) -> Vec<f64> {
        let mut gx = vec![0.0; self.inputs];
        for (row, g) in self.weight.chunks_exact(self.inputs).zip(grad_out) {
            if *g != 0.0 {
                for (acc, w) in gx.iter_mut().zip(row) {
                    *acc += g * w;
                }
            }
        }
        gx
    }

    /// Accumulates `scale · g xᵀ` into `grad_w` and `scale · g` into `grad_b`.
    pub(crate) fn accumulate_grad(
        &self,
        x: &[f64],
        grad_out: &[f64],
        scale: f64,
        grad_w: &mut [f64],
        grad_b: &mut [f64],
    ) {
        for ((row, g), gb) in grad_w
            .chunks_exact_mut(self.inputs)
            .zip(grad_out)
            .zip(grad_b.iter_mut())
        {
            let s = scale * g;
            if s != 0.0 {
                for (acc, xi) in row.iter_mut().zip(x) {
                    *acc += s * xi;
                }
                *gb += s;
            }
        }
    }
}
