//! Low-likelihood tail sampling from the class-conditional Gaussians.
//!
//! For class `k`, `draws_total` points are drawn from `N(mean_k, Σ)`, ranked by
//! log-density, and the `rank` least likely are kept. The log-density of the
//! `rank`-th smallest draw acts as the likelihood threshold. The same draws
//! serve as virtual inliers (pulled toward low energy) or, for the VOS-like
//! baseline, as boundary outliers (pushed toward high energy).

use rand::seq::index::sample as sample_indices;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gda::ClassGaussianModel;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TailSamplerConfig {
    /// Draws per class (N).
    pub draws_n_total: usize,
    /// How many of the least likely draws to keep (n).
    pub rank_n: usize,
    /// Tails consumed per training step per class.
    pub per_class_batch: usize,
}

impl Default for TailSamplerConfig {
    fn default() -> Self {
        Self {
            draws_n_total: 10_000,
            rank_n: 64,
            per_class_batch: 1,
        }
    }
}

impl TailSamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.rank_n < 1 || self.rank_n > self.draws_n_total {
            return Err(Error::Config(format!(
                "tails.rank_n must lie in [1, draws_n_total={}], got {}",
                self.draws_n_total, self.rank_n
            )));
        }
        if self.per_class_batch > self.rank_n {
            return Err(Error::Config(format!(
                "tails.per_class_batch ({}) exceeds tails.rank_n ({})",
                self.per_class_batch, self.rank_n
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TailSample {
    pub vector: Vec<f64>,
    pub class_id: usize,
    pub density_log: f64,
    /// Log-density of the `rank_n`-th least likely draw.
    pub implied_delta_log: f64,
}

/// Virtual inliers for class `k`, ordered by ascending log-density.
/// Ties are broken by draw index.
pub fn sample_tails<R: Rng + ?Sized>(
    model: &ClassGaussianModel,
    k: usize,
    cfg: &TailSamplerConfig,
    rng: &mut R,
) -> Result<Vec<TailSample>> {
    cfg.validate()?;
    if k >= model.classes() {
        return Err(Error::InvalidClass {
            class: k,
            classes: model.classes(),
        });
    }
    let mut draws = Vec::with_capacity(cfg.draws_n_total);
    for _ in 0..cfg.draws_n_total {
        let x = model.sample(k, rng)?;
        let logd = model.log_density(&x, k)?;
        draws.push((x, logd));
    }
    let mut order: Vec<usize> = (0..draws.len()).collect();
    order.sort_by(|&a, &b| draws[a].1.total_cmp(&draws[b].1).then(a.cmp(&b)));
    order.truncate(cfg.rank_n);
    let delta = draws[order[cfg.rank_n - 1]].1;

    let mut slots: Vec<Option<(Vec<f64>, f64)>> = draws.into_iter().map(Some).collect();
    Ok(order
        .into_iter()
        .map(|i| {
            let (vector, density_log) = slots[i].take().expect("index used once");
            TailSample {
                vector,
                class_id: k,
                density_log,
                implied_delta_log: delta,
            }
        })
        .collect())
}

/// Boundary outliers for the VOS-like baseline. The sampling mechanism is
/// identical to [`sample_tails`]; only the consumer differs.
pub fn sample_boundary_outliers<R: Rng + ?Sized>(
    model: &ClassGaussianModel,
    k: usize,
    cfg: &TailSamplerConfig,
    rng: &mut R,
) -> Result<Vec<TailSample>> {
    sample_tails(model, k, cfg, rng)
}

/// Uniformly picks `count` distinct tails without replacement.
pub fn pick<'a, R: Rng + ?Sized>(
    tails: &'a [TailSample],
    count: usize,
    rng: &mut R,
) -> Vec<&'a TailSample> {
    let count = count.min(tails.len());
    sample_indices(rng, tails.len(), count)
        .into_iter()
        .map(|i| &tails[i])
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    fn unit_model() -> ClassGaussianModel {
        ClassGaussianModel::from_parts(
            2,
            2,
            vec![0.0, 0.0, 4.0, 4.0],
            vec![1.0, 0.0, 0.0, 1.0],
            vec![0.5, 0.5],
            0.0,
        )
        .unwrap()
    }

    fn cfg(n_total: usize, n: usize) -> TailSamplerConfig {
        TailSamplerConfig {
            draws_n_total: n_total,
            rank_n: n,
            per_class_batch: 1,
        }
    }

    #[test]
    fn single_rank_is_minimum_density() {
        let m = unit_model();
        let mut a = seeded(3);
        let tails = sample_tails(&m, 0, &cfg(3, 1), &mut a).unwrap();
        assert_eq!(tails.len(), 1);

        let mut b = seeded(3);
        let draws: Vec<Vec<f64>> = (0..3).map(|_| m.sample(0, &mut b).unwrap()).collect();
        let min = draws
            .iter()
            .min_by(|x, y| {
                m.log_density(x, 0)
                    .unwrap()
                    .total_cmp(&m.log_density(y, 0).unwrap())
            })
            .unwrap();
        assert_eq!(&tails[0].vector, min);
        assert_eq!(tails[0].density_log, tails[0].implied_delta_log);
    }

    #[test]
    fn all_below_threshold_and_sorted() {
        let m = unit_model();
        let tails = sample_tails(&m, 1, &cfg(2000, 50), &mut seeded(8)).unwrap();
        assert_eq!(tails.len(), 50);
        for w in tails.windows(2) {
            assert!(w[0].density_log <= w[1].density_log);
        }
        assert!(tails.iter().all(|t| t.density_log <= t.implied_delta_log && t.class_id == 1));
        assert_eq!(tails.last().unwrap().density_log, tails[0].implied_delta_log);
    }

    #[test]
    fn full_rank_returns_every_draw() {
        let m = unit_model();
        let tails = sample_tails(&m, 0, &cfg(40, 40), &mut seeded(2)).unwrap();
        assert_eq!(tails.len(), 40);
        let mut r = seeded(2);
        let mut draws: Vec<Vec<f64>> = (0..40).map(|_| m.sample(0, &mut r).unwrap()).collect();
        let mut got: Vec<Vec<f64>> = tails.into_iter().map(|t| t.vector).collect();
        draws.sort_by(|a, b| a.partial_cmp(b).unwrap());
        got.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(got, draws);
    }

    #[test]
    fn boundary_outliers_match_tails() {
        let m = unit_model();
        let a = sample_tails(&m, 0, &cfg(500, 16), &mut seeded(4)).unwrap();
        let b = sample_boundary_outliers(&m, 0, &cfg(500, 16), &mut seeded(4)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn larger_rank_raises_threshold() {
        let m = unit_model();
        let mut last = f64::NEG_INFINITY;
        for n in [1, 5, 20, 64, 200] {
            let t = sample_tails(&m, 0, &cfg(1000, n), &mut seeded(10)).unwrap();
            assert!(t[0].implied_delta_log >= last);
            last = t[0].implied_delta_log;
        }
    }

    #[test]
    fn config_validation() {
        assert!(cfg(10, 0).validate().is_err());
        assert!(cfg(10, 11).validate().is_err());
        let mut c = cfg(10, 2);
        c.per_class_batch = 3;
        assert!(c.validate().is_err());
        assert!(TailSamplerConfig::default().validate().is_ok());
        assert!(matches!(
            sample_tails(&unit_model(), 2, &cfg(10, 2), &mut seeded(0)),
            Err(Error::InvalidClass { .. })
        ));
    }

    #[test]
    fn pick_is_distinct() {
        let m = unit_model();
        let t = sample_tails(&m, 0, &cfg(100, 10), &mut seeded(1)).unwrap();
        let p = pick(&t, 4, &mut seeded(2));
        assert_eq!(p.len(), 4);
        for i in 0..4 {
            for j in i + 1..4 {
                assert_ne!(p[i].vector, p[j].vector);
            }
        }
    }
}
