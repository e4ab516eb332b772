//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use oodk_core::nda::{ConvKernel, Image};

/// Error-free transformation `a + b = s + e`.
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    let e = (a - (s - bb)) + (b - bb);
    (s, e)
}

/// `−T·log Σ exp(f/T)` by direct summation (no max shift) with a
/// double-double accumulator. Inputs must keep `f/T` within ±700.
pub fn dd_free_energy(logits: &[f64], t: f64) -> f64 {
    let (mut hi, mut lo) = (0.0f64, 0.0f64);
    for &f in logits {
        let (s, e) = two_sum(hi, (f / t).exp());
        hi = s;
        lo += e;
    }
    let (s, e) = two_sum(hi, lo);
    // log(s + e) = log(s) + log1p(e/s).
    -t * (s.ln() + (e / s).ln_1p())
}

/// Pairwise count: wins + ties/2 over all ID×OOD pairs.
pub fn brute_auroc(id: &[f64], ood: &[f64]) -> f64 {
    let mut twice = 0u64;
    for &a in id {
        for &b in ood {
            if a > b {
                twice += 2;
            } else if a == b {
                twice += 1;
            }
        }
    }
    twice as f64 / (2 * id.len() * ood.len()) as f64
}

/// For each distinct threshold (descending), recount TP/FP from scratch.
pub fn brute_aupr_in(id: &[f64], ood: &[f64]) -> f64 {
    let mut thresholds: Vec<f64> = id.iter().chain(ood).copied().collect();
    thresholds.sort_by(|a, b| b.total_cmp(a));
    thresholds.dedup();
    let mut area = 0.0;
    let mut prev_recall = 0.0;
    for t in thresholds {
        let tp = id.iter().filter(|&&s| s >= t).count();
        let fp = ood.iter().filter(|&&s| s >= t).count();
        let recall = tp as f64 / id.len() as f64;
        let precision = tp as f64 / (tp + fp) as f64;
        area += precision * (recall - prev_recall);
        prev_recall = recall;
    }
    area
}

/// Mean diagonal ratio of the row-normalized confusion matrix over
/// nonempty rows.
pub fn confusion_balanced_accuracy(pred: &[usize], truth: &[usize], classes: usize) -> f64 {
    let mut m = vec![vec![0usize; classes]; classes];
    for (&p, &t) in pred.iter().zip(truth) {
        m[t][p] += 1;
    }
    let mut sum = 0.0;
    let mut rows = 0;
    for (k, row) in m.iter().enumerate() {
        let n: usize = row.iter().sum();
        if n > 0 {
            sum += row[k] as f64 / n as f64;
            rows += 1;
        }
    }
    sum / rows as f64
}

/// Bin index by scanning every bin's `[low, high)` interval (last bin closed).
pub fn scan_bin(v: f64, bins: &[oodk_core::metrics::HistBin]) -> usize {
    let last = bins.len() - 1;
    for (i, b) in bins.iter().enumerate() {
        if v >= b.bin_low && (v < b.bin_high || (i == last && v <= b.bin_high)) {
            return i;
        }
    }
    panic!("{v} falls outside every bin");
}

/// Direct zero-padded "same" convolution visiting every tap, followed by
/// min-max renormalization.
pub fn naive_randconv(img: &Image, kernel: &ConvKernel) -> Vec<f64> {
    let (h, w, c) = (img.height(), img.width(), img.channels());
    let k = kernel.size;
    let r = (k / 2) as isize;
    let mut out = vec![0.0; h * w * c];
    for y in 0..h {
        for x in 0..w {
            for co in 0..c {
                let mut acc = 0.0;
                for ci in 0..c {
                    for ky in 0..k {
                        for kx in 0..k {
                            let sy = y as isize + ky as isize - r;
                            let sx = x as isize + kx as isize - r;
                            let v = if sy < 0 || sx < 0 || sy >= h as isize || sx >= w as isize {
                                0.0
                            } else {
                                img.get(sy as usize, sx as usize, ci)
                            };
                            acc += kernel.weight(co, ci, ky, kx) * v;
                        }
                    }
                }
                out[(y * w + x) * c + co] = acc;
            }
        }
    }
    let lo = out.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = out.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi > lo {
        out.iter().map(|v| (v - lo) / (hi - lo)).collect()
    } else {
        vec![0.5; out.len()]
    }
}

/// CDF of the chi-square distribution with 2 degrees of freedom by composite
/// Simpson integration of its density `½ e^{−x/2}`.
pub fn chi2_2_cdf(x: f64) -> f64 {
    let n = 20_000;
    let h = x / n as f64;
    let f = |u: f64| 0.5 * (-0.5 * u).exp();
    let mut s = f(0.0) + f(x);
    for i in 1..n {
        let u = i as f64 * h;
        s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(u);
    }
    s * h / 3.0
}

/// Quantile of [`chi2_2_cdf`] by bisection.
pub fn chi2_2_quantile(p: f64) -> f64 {
    let (mut lo, mut hi) = (0.0, 100.0);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if chi2_2_cdf(mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Hand-computed pooled-covariance example: class 0 = {(1,1), (3,1), (2,4)},
/// class 1 = {(5,0), (7,2)}. Means (2,2) and (6,1); scatter
/// [[4, 2], [2, 8]] over 5 samples; priors (3/5, 2/5).
pub struct HandFit {
    pub points: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    pub means: [[f64; 2]; 2],
    pub covariance: [f64; 4],
    pub priors: [f64; 2],
}

pub fn hand_fit() -> HandFit {
    HandFit {
        points: vec![
            vec![1.0, 1.0],
            vec![3.0, 1.0],
            vec![2.0, 4.0],
            vec![5.0, 0.0],
            vec![7.0, 2.0],
        ],
        labels: vec![0, 0, 0, 1, 1],
        means: [[2.0, 2.0], [6.0, 1.0]],
        covariance: [4.0 / 5.0, 2.0 / 5.0, 2.0 / 5.0, 8.0 / 5.0],
        priors: [3.0 / 5.0, 2.0 / 5.0],
    }
}

pub fn rel_err(a: f64, b: f64, scale: f64) -> f64 {
    (a - b).abs() / scale.max(f64::MIN_POSITIVE)
}

pub mod grad {
    use oodk_core::energy::{latent_energy, latent_energy_grad};
    use oodk_core::layer::Linear;
    use oodk_core::trainer::{total_loss, LossBatch, LossWeights, ModelParams};
    use oodk_core::rng::seeded;
    use rand::Rng;

    /// Every ReLU sign and hinge activity the objective depends on. A
    /// finite-difference probe is only valid if this is constant over it.
    fn kink_pattern(p: &ModelParams, b: &LossBatch<'_>, w: &LossWeights) -> Vec<bool> {
        let mut out = Vec::new();
        let energy = |logits: &[f64]| oodk_core::free_energy(logits, w.temperature).unwrap().value;
        let mut full = |xs: &[Vec<f64>], hinge: Option<Box<dyn Fn(f64) -> bool>>| {
            for x in xs {
                let t = p.trace(x).unwrap();
                for z in t.pre.iter().flatten() {
                    out.push(*z > 0.0);
                }
                if let Some(h) = &hinge {
                    out.push(h(energy(&t.logits)));
                }
            }
        };
        let (m_id, m_ood) = (w.m_id, w.m_ood);
        full(b.inputs, None);
        full(b.input_inliers, Some(Box::new(move |e| e > m_id)));
        full(b.input_outliers, Some(Box::new(move |e| e < m_ood)));
        for t in b.inlier_tails {
            out.push(energy(&p.head.forward(t).unwrap()) > m_id);
        }
        for t in b.latent_outliers {
            out.push(energy(&p.head.forward(t).unwrap()) < m_ood);
        }
        out
    }

    fn coord(p: &mut ModelParams, mut idx: usize) -> &mut f64 {
        for t in p.tensors_mut() {
            if idx < t.len() {
                return &mut t[idx];
            }
            idx -= t.len();
        }
        panic!("coordinate out of range");
    }

    fn flat(p: &ModelParams) -> Vec<f64> {
        p.tensors().into_iter().flatten().copied().collect()
    }

    pub struct Report {
        pub checked: usize,
        pub max_rel: f64,
    }

    /// Compares analytic gradients with a five-point central difference on
    /// `want` randomly chosen coordinates where no kink lies within the probe.
    pub fn check(params: &ModelParams, batch: &LossBatch<'_>, w: &LossWeights, want: usize, seed: u64) -> Report {
        let analytic = flat(&total_loss(params, batch, w).unwrap().grads);
        let base = kink_pattern(params, batch, w);
        let n = analytic.len();
        let mut rng = seeded(seed);
        let mut report = Report { checked: 0, max_rel: 0.0 };
        let mut attempts = 0;
        while report.checked < want {
            attempts += 1;
            assert!(attempts < 50 * want, "too few smooth coordinates");
            let i = rng.random_range(0..n);
            let mut p = params.clone();
            let x0 = *coord(&mut p, i);
            let h = 1e-3 * x0.abs().max(1.0);
            let mut vals = [0.0; 4];
            let mut smooth = true;
            for (slot, step) in [2.0, 1.0, -1.0, -2.0].iter().enumerate() {
                *coord(&mut p, i) = x0 + step * h;
                if kink_pattern(&p, batch, w) != base {
                    smooth = false;
                    break;
                }
                vals[slot] = total_loss(&p, batch, w).unwrap().total;
            }
            if !smooth {
                continue;
            }
            let numeric = (-vals[0] + 8.0 * vals[1] - 8.0 * vals[2] + vals[3]) / (12.0 * h);
            let a = analytic[i];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
            report.max_rel = report.max_rel.max(rel);
            report.checked += 1;
        }
        report
    }

    /// Small network with every kind of loss input.
    pub struct Fixture {
        pub params: ModelParams,
        pub inputs: Vec<Vec<f64>>,
        pub labels: Vec<usize>,
        pub tails: Vec<Vec<f64>>,
        pub inliers: Vec<Vec<f64>>,
        pub latent_out: Vec<Vec<f64>>,
        pub outliers: Vec<Vec<f64>>,
    }

    impl Fixture {
        pub fn full_batch(&self) -> LossBatch<'_> {
            LossBatch {
                inputs: &self.inputs,
                labels: &self.labels,
                inlier_tails: &self.tails,
                input_inliers: &self.inliers,
                latent_outliers: &self.latent_out,
                input_outliers: &self.outliers,
            }
        }
    }

    fn vectors(rng: &mut impl Rng, n: usize, d: usize, scale: f64) -> Vec<Vec<f64>> {
        (0..n).map(|_| (0..d).map(|_| rng.random_range(-scale..scale)).collect()).collect()
    }

    pub fn fixture(seed: u64) -> Fixture {
        let mut rng = seeded(seed);
        let params = ModelParams::init(6, &[10, 8], 5, 3, &mut rng).unwrap();
        Fixture {
            params,
            inputs: vectors(&mut rng, 8, 6, 2.0),
            labels: (0..8).map(|i| i % 3).collect(),
            tails: vectors(&mut rng, 4, 5, 3.0),
            inliers: vectors(&mut rng, 4, 6, 2.0),
            latent_out: vectors(&mut rng, 4, 5, 3.0),
            outliers: vectors(&mut rng, 4, 6, 4.0),
        }
    }

    /// Margins that keep every hinge active for a freshly initialized network.
    pub const ACTIVE: LossWeights = LossWeights { alpha: 0.3, beta: 0.7, m_id: -20.0, m_ood: 5.0, temperature: 1.0 };

    /// Gradient of the head's energy with respect to a latent vector, on
    /// random heads, points and temperatures.
    pub fn check_latent_energy(seed: u64, want: usize) -> Report {
        let mut rng = seeded(seed);
        let mut report = Report { checked: 0, max_rel: 0.0 };
        while report.checked < want {
            let head = Linear::he_init(5, rng.random_range(2..6), &mut rng);
            let t: Vec<f64> = (0..5).map(|_| rng.random_range(-3.0..3.0)).collect();
            let temp = rng.random_range(0.5..2.0);
            let g = latent_energy_grad(&head, &t, temp).unwrap();
            for i in 0..5 {
                let h = 1e-3;
                let at = |d: f64| {
                    let mut u = t.clone();
                    u[i] += d;
                    latent_energy(&head, &u, temp).unwrap().value
                };
                let numeric = (-at(2.0 * h) + 8.0 * at(h) - 8.0 * at(-h) + at(-2.0 * h)) / (12.0 * h);
                let rel = (g[i] - numeric).abs() / g[i].abs().max(numeric.abs()).max(1e-6);
                report.max_rel = report.max_rel.max(rel);
                report.checked += 1;
            }
        }
        report
    }
}
