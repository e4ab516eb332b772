//! Library results against independent reference computations.

mod common;

use common::*;
use nalgebra::{DMatrix, DVector};
use oodk_core::energy::free_energy;
use oodk_core::metrics::{aupr_in, auroc, balanced_accuracy, histogram};
use oodk_core::nda::{randconv_with_kernel, ConvKernel, Image};
use oodk_core::rng::{fill_standard_normal, seeded};
use oodk_core::tails::{sample_tails, TailSamplerConfig};
use oodk_core::ClassGaussianModel;
use rand::Rng;

#[test]
fn free_energy_matches_extended_precision_sum() {
    let mut rng = seeded(11);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let k = rng.random_range(1..=20);
        let t = 10f64.powf(rng.random_range(-1.0..1.0));
        let spread = rng.random_range(0.1..60.0) * t;
        let logits: Vec<f64> = (0..k).map(|_| rng.random_range(-spread..spread)).collect();
        let got = free_energy(&logits, t).unwrap().value;
        let want = dd_free_energy(&logits, t);
        // Scale: the magnitude of the problem (|E| or the largest |logit|).
        let scale = want.abs().max(logits.iter().fold(0.0f64, |m, v| m.max(v.abs())));
        worst = worst.max(rel_err(got, want, scale));
    }
    assert!(worst <= 1e-12, "worst relative error {worst:e}");
}

fn tied_scores<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    // A coarse grid forces plenty of ties within and across the two sets.
    (0..n).map(|_| (rng.random_range(-2.0f64..2.0) * 4.0).round() / 4.0).collect()
}

#[test]
fn ranking_metrics_match_brute_force() {
    let mut rng = seeded(12);
    for case in 0..300 {
        let n = rng.random_range(1..=200);
        let m = rng.random_range(1..=200);
        let (id, ood) = if case % 2 == 0 {
            (tied_scores(&mut rng, n), tied_scores(&mut rng, m))
        } else {
            (
                (0..n).map(|_| rng.random::<f64>() + 0.3).collect(),
                (0..m).map(|_| rng.random::<f64>()).collect(),
            )
        };
        let a = auroc(&id, &ood).unwrap();
        assert!((a - brute_auroc(&id, &ood)).abs() <= 1e-12, "case {case}");
        let p = aupr_in(&id, &ood).unwrap();
        assert!((p - brute_aupr_in(&id, &ood)).abs() <= 1e-12, "case {case}");
    }
}

#[test]
fn balanced_accuracy_matches_confusion_matrix() {
    let mut rng = seeded(13);
    for _ in 0..300 {
        let classes = rng.random_range(2..8);
        let n = rng.random_range(1..400);
        let truth: Vec<usize> = (0..n).map(|_| rng.random_range(0..classes)).collect();
        let pred: Vec<usize> = truth
            .iter()
            .map(|&t| if rng.random::<f64>() < 0.6 { t } else { rng.random_range(0..classes) })
            .collect();
        let got = balanced_accuracy(&pred, &truth, classes).unwrap();
        let want = confusion_balanced_accuracy(&pred, &truth, classes);
        assert!((got - want).abs() <= 1e-12);
    }
}

#[test]
fn histogram_matches_linear_scan() {
    let mut rng = seeded(14);
    for _ in 0..100 {
        let bins = rng.random_range(1..40);
        let id: Vec<f64> = (0..rng.random_range(1..200)).map(|_| rng.random_range(-5.0..5.0)).collect();
        let n_ood = rng.random_range(0..200);
        let ood = tied_scores(&mut rng, n_ood);
        let hist = histogram(&id, &ood, bins).unwrap();
        let mut id_counts = vec![0; hist.len()];
        let mut ood_counts = vec![0; hist.len()];
        for &v in &id {
            id_counts[scan_bin(v, &hist)] += 1;
        }
        for &v in &ood {
            ood_counts[scan_bin(v, &hist)] += 1;
        }
        assert_eq!(hist.iter().map(|b| b.id_count).collect::<Vec<_>>(), id_counts);
        assert_eq!(hist.iter().map(|b| b.ood_count).collect::<Vec<_>>(), ood_counts);
    }
}

#[test]
fn randconv_is_bit_identical_to_naive_convolution() {
    let mut rng = seeded(15);
    for (h, w, c, k) in [(9, 9, 1, 3), (12, 10, 3, 5), (16, 16, 3, 9), (19, 23, 1, 19), (7, 7, 3, 7)] {
        let data: Vec<f64> = (0..h * w * c).map(|_| rng.random()).collect();
        let img = Image::new(h, w, c, data).unwrap();
        let kernel = ConvKernel::random(k, c, &mut rng);
        let got = randconv_with_kernel(&img, &kernel).unwrap();
        let want = naive_randconv(&img, &kernel);
        let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(got.data()), bits(&want), "{h}x{w}x{c} k={k}");
    }
}

#[test]
fn gda_fit_matches_hand_example() {
    let hand = hand_fit();
    let model = ClassGaussianModel::fit(&hand.points, &hand.labels, 2, 1e-6).unwrap();
    for k in 0..2 {
        for i in 0..2 {
            assert!((model.mean(k)[i] - hand.means[k][i]).abs() <= 1e-12);
        }
        assert!((model.priors()[k] - hand.priors[k]).abs() <= 1e-12);
    }
    for i in 0..4 {
        assert!((model.covariance()[i] - hand.covariance[i]).abs() <= 1e-12);
    }
    // ε = 1e-6 · trace / d = 1e-6 · 2.4 / 2.
    assert!((model.epsilon() - 1.2e-6).abs() <= 1e-18);
}

#[test]
fn gda_fit_matches_empirical_moments() {
    let mut rng = seeded(16);
    let (d, classes) = (5, 3);
    let mut points = Vec::new();
    let mut labels = Vec::new();
    for i in 0..500 {
        let k = i % classes;
        let mut z = vec![0.0; d];
        fill_standard_normal(&mut rng, &mut z);
        points.push(z.iter().enumerate().map(|(j, v)| v * (1.0 + j as f64) + 3.0 * k as f64).collect::<Vec<_>>());
        labels.push(k);
    }
    let model = ClassGaussianModel::fit(&points, &labels, classes, 1e-6).unwrap();

    // Independent route: per-class means by direct averaging, then the
    // pooled scatter summed over all samples.
    let mut means = vec![vec![0.0; d]; classes];
    let mut counts = vec![0usize; classes];
    for (x, &y) in points.iter().zip(&labels) {
        counts[y] += 1;
        for j in 0..d {
            means[y][j] += x[j];
        }
    }
    for k in 0..classes {
        means[k].iter_mut().for_each(|v| *v /= counts[k] as f64);
    }
    let mut scatter = DMatrix::<f64>::zeros(d, d);
    for (x, &y) in points.iter().zip(&labels) {
        let r = DVector::from_iterator(d, x.iter().zip(&means[y]).map(|(a, m)| a - m));
        scatter += &r * r.transpose();
    }
    scatter /= points.len() as f64;
    for k in 0..classes {
        for j in 0..d {
            assert!((model.mean(k)[j] - means[k][j]).abs() <= 1e-12);
        }
        assert!((model.priors()[k] - counts[k] as f64 / 500.0).abs() <= 1e-15);
    }
    for i in 0..d {
        for j in 0..d {
            assert!((model.covariance()[i * d + j] - scatter[(i, j)]).abs() <= 1e-12 * scatter.amax());
        }
    }
}

fn random_model(rng: &mut impl Rng, classes: usize, d: usize) -> ClassGaussianModel {
    let a = DMatrix::<f64>::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
    let cov = &a * a.transpose() + DMatrix::<f64>::identity(d, d) * 0.3;
    let means: Vec<f64> = (0..classes * d).map(|_| rng.random_range(-3.0..3.0)).collect();
    let mut priors: Vec<f64> = (0..classes).map(|_| rng.random_range(0.2..1.0)).collect();
    let s: f64 = priors.iter().sum();
    priors.iter_mut().for_each(|p| *p /= s);
    let last = 1.0 - priors[..classes - 1].iter().sum::<f64>();
    priors[classes - 1] = last;
    let cov_rows: Vec<f64> = (0..d * d).map(|i| cov[(i / d, i % d)]).collect();
    ClassGaussianModel::from_parts(classes, d, means, cov_rows, priors, 0.0).unwrap()
}

#[test]
fn gda_queries_match_explicit_inverse() {
    let mut rng = seeded(17);
    for _ in 0..50 {
        let (classes, d) = (rng.random_range(2..6), rng.random_range(1..7));
        let model = random_model(&mut rng, classes, d);
        let cov = DMatrix::from_row_slice(d, d, &model.regularized_covariance());
        let inv = cov.clone().try_inverse().unwrap();
        let log_det = cov.determinant().ln();
        for _ in 0..20 {
            let x: Vec<f64> = (0..d).map(|_| rng.random_range(-6.0..6.0)).collect();
            let xv = DVector::from_column_slice(&x);
            let mut logits = Vec::new();
            for k in 0..classes {
                let mu = DVector::from_column_slice(model.mean(k));
                let r = &xv - &mu;
                let m = (r.transpose() * &inv * &r)[(0, 0)];
                let got_m = model.mahalanobis_sq(&x, k).unwrap();
                assert!((got_m - m).abs() <= 1e-9 * m.max(1.0), "{got_m} vs {m}");
                let ld = -0.5 * d as f64 * (2.0 * std::f64::consts::PI).ln() - 0.5 * log_det - 0.5 * m;
                assert!((model.log_density(&x, k).unwrap() - ld).abs() <= 1e-9 * ld.abs().max(1.0));
                let logit = (mu.transpose() * &inv * &xv)[(0, 0)] - 0.5 * (mu.transpose() * &inv * &mu)[(0, 0)]
                    + model.priors()[k].ln();
                assert!((model.gda_energy(&x, k).unwrap() + logit).abs() <= 1e-9 * logit.abs().max(1.0));
                logits.push(logit);

                // bound − gap = ½ Mahalanobis².
                let rep = model.check_energy_gap_bound(&x, k).unwrap();
                assert!((rep.bound - rep.gap - 0.5 * m).abs() <= 1e-9 * (rep.bound.abs() + rep.gap.abs()).max(1.0));
            }
            let mx = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = logits.iter().map(|l| (l - mx).exp()).sum();
            let post = model.posterior(&x).unwrap();
            for k in 0..classes {
                assert!((post[k] - (logits[k] - mx).exp() / z).abs() <= 1e-9);
            }
        }
    }
}

#[test]
fn sampling_reproduces_model_moments() {
    let mut rng = seeded(18);
    let model = random_model(&mut rng, 2, 3);
    let n = 100_000;
    let d = 3;
    let mut sum = vec![0.0; d];
    let mut outer = vec![0.0; d * d];
    for _ in 0..n {
        let x = model.sample(1, &mut rng).unwrap();
        let r: Vec<f64> = x.iter().zip(model.mean(1)).map(|(a, m)| a - m).collect();
        for i in 0..d {
            sum[i] += r[i];
            for j in 0..d {
                outer[i * d + j] += r[i] * r[j];
            }
        }
    }
    let cov = model.regularized_covariance();
    for i in 0..d {
        let se = (cov[i * d + i] / n as f64).sqrt();
        assert!((sum[i] / n as f64).abs() < 5.0 * se, "mean coordinate {i}");
        for j in 0..d {
            let emp = outer[i * d + j] / n as f64;
            // Var of a product of jointly normal coordinates: σii σjj + σij².
            let se = ((cov[i * d + i] * cov[j * d + j] + cov[i * d + j].powi(2)) / n as f64).sqrt();
            assert!((emp - cov[i * d + j]).abs() < 5.0 * se, "cov ({i},{j}): {emp} vs {}", cov[i * d + j]);
        }
    }
}

#[test]
fn chi_square_quantile_oracle() {
    let q = chi2_2_quantile(0.99);
    // Closed form for 2 degrees of freedom: −2 ln(0.01).
    assert!((q - (-2.0 * 0.01f64.ln())).abs() < 1e-6);
}

#[test]
fn tails_lie_beyond_the_chi_square_quantile() {
    let model = ClassGaussianModel::from_parts(1, 2, vec![0.0, 0.0], vec![1.0, 0.0, 0.0, 1.0], vec![1.0], 0.0).unwrap();
    let q = chi2_2_quantile(0.99);
    let cfg = TailSamplerConfig::default();
    let tails = sample_tails(&model, 0, &cfg, &mut seeded(19)).unwrap();
    assert_eq!(tails.len(), 64);
    let mean_m: f64 = tails.iter().map(|t| model.mahalanobis_sq(&t.vector, 0).unwrap()).sum::<f64>() / 64.0;
    assert!(mean_m > q, "mean tail Mahalanobis² {mean_m} vs quantile {q}");
    for t in &tails {
        assert!(t.density_log <= t.implied_delta_log);
    }
}
