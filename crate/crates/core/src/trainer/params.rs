//! Feature extractor + linear head and the checkpoint format.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::Rng;

use crate::error::{check_dim, Error, Result};
use crate::gda::{read_exact, read_f64s, read_u32};
use crate::layer::Linear;

const MAGIC: &[u8; 4] = b"OODM";
const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    /// Bypasses the nonlinearity; the network becomes affine.
    Identity,
}

/// Classifier `F = c ∘ h`: `h` is a stack of dense layers with an activation
/// after each (the last one produces the latent vector), `c` a linear head.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub extractor: Vec<Linear>,
    pub head: Linear,
    pub activation: Activation,
}

/// Per-layer activations from one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    /// Input to each extractor layer, then the latent vector (input to the head).
    pub inputs: Vec<Vec<f64>>,
    /// Pre-activation output of each extractor layer.
    pub pre: Vec<Vec<f64>>,
    pub logits: Vec<f64>,
}

impl ForwardTrace {
    pub fn latent(&self) -> &[f64] {
        self.inputs.last().expect("trace always holds the latent")
    }
}

impl ModelParams {
    /// He-initialized network `input_dim → widths... → latent_dim → classes`.
    pub fn init<R: Rng + ?Sized>(
        input_dim: usize,
        hidden_widths: &[usize],
        latent_dim: usize,
        classes: usize,
        rng: &mut R,
    ) -> Result<Self> {
        if input_dim == 0 || latent_dim == 0 || classes == 0 || hidden_widths.contains(&0) {
            return Err(Error::input("layer widths must be nonzero"));
        }
        let mut extractor = Vec::new();
        let mut prev = input_dim;
        for &w in hidden_widths.iter().chain(std::iter::once(&latent_dim)) {
            extractor.push(Linear::he_init(prev, w, rng));
            prev = w;
        }
        let head = Linear::he_init(latent_dim, classes, rng);
        Ok(Self {
            extractor,
            head,
            activation: Activation::Relu,
        })
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            extractor: self
                .extractor
                .iter()
                .map(|l| Linear::zeros(l.inputs, l.outputs))
                .collect(),
            head: Linear::zeros(self.head.inputs, self.head.outputs),
            activation: self.activation,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.extractor.first().map_or(self.head.inputs, |l| l.inputs)
    }

    pub fn latent_dim(&self) -> usize {
        self.head.inputs
    }

    pub fn classes(&self) -> usize {
        self.head.outputs
    }

    pub fn param_count(&self) -> usize {
        self.layers().map(Linear::param_count).sum()
    }

    pub fn layers(&self) -> impl Iterator<Item = &Linear> {
        self.extractor.iter().chain(std::iter::once(&self.head))
    }

    /// Every weight and bias buffer, extractor first, head last.
    pub fn tensors(&self) -> Vec<&[f64]> {
        self.layers()
            .flat_map(|l| [l.weight.as_slice(), l.bias.as_slice()])
            .collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        self.extractor
            .iter_mut()
            .chain(std::iter::once(&mut self.head))
            .flat_map(|l| [l.weight.as_mut_slice(), l.bias.as_mut_slice()])
            .collect()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }

    fn check_shapes(&self) -> Result<()> {
        let mut prev = None;
        for l in self.layers() {
            check_dim(l.inputs * l.outputs, l.weight.len())?;
            check_dim(l.outputs, l.bias.len())?;
            if let Some(p) = prev {
                check_dim(p, l.inputs)?;
            }
            prev = Some(l.outputs);
        }
        Ok(())
    }

    fn activate(&self, v: &mut [f64]) {
        if self.activation == Activation::Relu {
            v.iter_mut().for_each(|x| *x = x.max(0.0));
        }
    }

    pub fn trace(&self, x: &[f64]) -> Result<ForwardTrace> {
        check_dim(self.input_dim(), x.len())?;
        let mut inputs = Vec::with_capacity(self.extractor.len() + 1);
        let mut pre = Vec::with_capacity(self.extractor.len());
        let mut cur = x.to_vec();
        for layer in &self.extractor {
            let z = layer.forward_unchecked(&cur);
            let mut a = z.clone();
            self.activate(&mut a);
            inputs.push(cur);
            pre.push(z);
            cur = a;
        }
        let logits = self.head.forward_unchecked(&cur);
        inputs.push(cur);
        Ok(ForwardTrace {
            inputs,
            pre,
            logits,
        })
    }

    /// Returns `(latent, logits)`.
    pub fn forward(&self, x: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let mut t = self.trace(x)?;
        let latent = t.inputs.pop().expect("latent present");
        Ok((latent, t.logits))
    }

    /// Backpropagates `d_logits` through a traced pass, accumulating
    /// `scale ·` gradients into `grads`.
    pub(crate) fn backward(&self, trace: &ForwardTrace, d_logits: &[f64], scale: f64, grads: &mut ModelParams) {
        let latent = trace.latent();
        self.head
            .accumulate_grad(latent, d_logits, scale, &mut grads.head.weight, &mut grads.head.bias);
        let mut g = self.head.backward_input(d_logits);
        for (i, layer) in self.extractor.iter().enumerate().rev() {
            if self.activation == Activation::Relu {
                for (gv, z) in g.iter_mut().zip(&trace.pre[i]) {
                    if *z <= 0.0 {
                        *gv = 0.0;
                    }
                }
            }
            let gl = &mut grads.extractor[i];
            layer.accumulate_grad(&trace.inputs[i], &g, scale, &mut gl.weight, &mut gl.bias);
            if i > 0 {
                g = layer.backward_input(&g);
            }
        }
    }

    /// Backpropagates `d_logits` through the head only, for a latent input.
    pub(crate) fn backward_head(&self, latent: &[f64], d_logits: &[f64], scale: f64, grads: &mut ModelParams) {
        self.head
            .accumulate_grad(latent, d_logits, scale, &mut grads.head.weight, &mut grads.head.bias);
    }
}

/// Model parameters plus the JSON echo of the configuration that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: ModelParams,
    pub config_json: String,
}

impl Checkpoint {
    /// `"OODM"`, u32 version, u8 activation, u32 layer count, per layer
    /// (u32 outputs, u32 inputs), then per layer the f64 little-endian
    /// weights (row-major) and biases, then u32 length + config JSON.
    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        let p = &self.params;
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&[match p.activation {
            Activation::Relu => 0u8,
            Activation::Identity => 1u8,
        }])?;
        let layers: Vec<&Linear> = p.layers().collect();
        w.write_all(&(layers.len() as u32).to_le_bytes())?;
        for l in &layers {
            w.write_all(&(l.outputs as u32).to_le_bytes())?;
            w.write_all(&(l.inputs as u32).to_le_bytes())?;
        }
        for l in &layers {
            for v in l.weight.iter().chain(&l.bias) {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        let cfg = self.config_json.as_bytes();
        w.write_all(&(cfg.len() as u32).to_le_bytes())?;
        w.write_all(cfg)?;
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self> {
        let mut magic = [0u8; 4];
        read_exact(r, &mut magic)?;
        if &magic != MAGIC {
            return Err(Error::format("bad magic, expected OODM"));
        }
        let version = read_u32(r)?;
        if version != VERSION {
            return Err(Error::format(format!("unsupported checkpoint version {version}")));
        }
        let mut act = [0u8; 1];
        read_exact(r, &mut act)?;
        let activation = match act[0] {
            0 => Activation::Relu,
            1 => Activation::Identity,
            other => return Err(Error::format(format!("unknown activation tag {other}"))),
        };
        let count = read_u32(r)? as usize;
        if !(1..=64).contains(&count) {
            return Err(Error::format(format!("implausible layer count {count}")));
        }
        let mut shapes = Vec::with_capacity(count);
        for _ in 0..count {
            let out = read_u32(r)? as usize;
            let inp = read_u32(r)? as usize;
            if out == 0 || inp == 0 || out * inp > 1 << 26 {
                return Err(Error::format(format!("implausible layer shape {out}x{inp}")));
            }
            shapes.push((out, inp));
        }
        let mut layers = Vec::with_capacity(count);
        for (out, inp) in shapes {
            let weight = read_f64s(r, out * inp)?;
            let bias = read_f64s(r, out)?;
            layers.push(Linear {
                inputs: inp,
                outputs: out,
                weight,
                bias,
            });
        }
        let len = read_u32(r)? as usize;
        let mut cfg = vec![0u8; len];
        read_exact(r, &mut cfg)?;
        let config_json =
            String::from_utf8(cfg).map_err(|_| Error::format("config echo is not UTF-8"))?;
        if r.read(&mut [0u8; 1])? != 0 {
            return Err(Error::format("trailing bytes after checkpoint"));
        }
        let head = layers.pop().expect("count ≥ 1");
        let params = ModelParams {
            extractor: layers,
            head,
            activation,
        };
        params
            .check_shapes()
            .map_err(|e| Error::format(format!("layer shapes do not chain: {e}")))?;
        Ok(Self {
            params,
            config_json,
        })
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
