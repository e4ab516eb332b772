//! Python bindings. Vectors cross the boundary as lists of floats, images as
//! flat lists in (row, column, channel) order.

use pyo3::exceptions::{PyOSError, PyValueError};
use pyo3::prelude::*;

use oodk_core::nda::{nda_sample, Image, NdaConfig};
use oodk_core::rng::seeded;
use oodk_core::trainer::{predict, score_inputs};
use oodk_core::{
    ClassGaussianModel, Checkpoint, Error, Mode, RunConfig, TailSamplerConfig, TrainData,
};

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Io(_) => PyOSError::new_err(e.to_string()),
        _ => PyValueError::new_err(format!("{}: {e}", e.kind())),
    }
}

fn run_config(json: Option<&str>) -> PyResult<RunConfig> {
    json.map_or(Ok(RunConfig::default()), |j| RunConfig::from_json(j).map_err(py_err))
}

/// Free energy `−T·logsumexp(logits/T)`.
#[pyfunction]
#[pyo3(signature = (logits, temperature = 1.0))]
fn free_energy(logits: Vec<f64>, temperature: f64) -> PyResult<f64> {
    Ok(oodk_core::free_energy(&logits, temperature).map_err(py_err)?.value)
}

#[pyfunction]
fn auroc(id_scores: Vec<f64>, ood_scores: Vec<f64>) -> PyResult<f64> {
    oodk_core::auroc(&id_scores, &ood_scores).map_err(py_err)
}

#[pyfunction]
fn aupr_in(id_scores: Vec<f64>, ood_scores: Vec<f64>) -> PyResult<f64> {
    oodk_core::aupr_in(&id_scores, &ood_scores).map_err(py_err)
}

#[pyfunction]
fn balanced_accuracy(pred: Vec<usize>, truth: Vec<usize>, classes: usize) -> PyResult<f64> {
    oodk_core::balanced_accuracy(&pred, &truth, classes).map_err(py_err)
}

/// Shared-covariance class-conditional Gaussian model.
#[pyclass(name = "GaussianModel", module = "oodk")]
struct PyGaussianModel {
    inner: ClassGaussianModel,
}

#[pymethods]
impl PyGaussianModel {
    #[staticmethod]
    #[pyo3(signature = (embeddings, labels, classes, epsilon_scale = 1e-6))]
    fn fit(embeddings: Vec<Vec<f64>>, labels: Vec<usize>, classes: usize, epsilon_scale: f64) -> PyResult<Self> {
        let inner = ClassGaussianModel::fit(&embeddings, &labels, classes, epsilon_scale).map_err(py_err)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(Self { inner: ClassGaussianModel::load(path).map_err(py_err)? })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        self.inner.save(path).map_err(py_err)
    }

    #[getter]
    fn classes(&self) -> usize {
        self.inner.classes()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    #[getter]
    fn epsilon(&self) -> f64 {
        self.inner.epsilon()
    }

    #[getter]
    fn priors(&self) -> Vec<f64> {
        self.inner.priors().to_vec()
    }

    fn mean(&self, k: usize) -> PyResult<Vec<f64>> {
        if k >= self.inner.classes() {
            return Err(py_err(Error::InvalidClass { class: k, classes: self.inner.classes() }));
        }
        Ok(self.inner.mean(k).to_vec())
    }

    fn log_density(&self, x: Vec<f64>, k: usize) -> PyResult<f64> {
        self.inner.log_density(&x, k).map_err(py_err)
    }

    fn mahalanobis_sq(&self, x: Vec<f64>, k: usize) -> PyResult<f64> {
        self.inner.mahalanobis_sq(&x, k).map_err(py_err)
    }

    fn posterior(&self, h: Vec<f64>) -> PyResult<Vec<f64>> {
        self.inner.posterior(&h).map_err(py_err)
    }

    fn gda_energy(&self, h: Vec<f64>, k: usize) -> PyResult<f64> {
        self.inner.gda_energy(&h, k).map_err(py_err)
    }

    fn free_energy(&self, h: Vec<f64>) -> PyResult<f64> {
        self.inner.free_energy(&h).map_err(py_err)
    }

    /// Whether the strict energy-gap bound holds at `t` for class `k`.
    fn check_energy_gap_bound(&self, t: Vec<f64>, k: usize) -> PyResult<bool> {
        Ok(self.inner.check_energy_gap_bound(&t, k).map_err(py_err)?.holds)
    }

    /// The `n` least likely of `draws` samples from class `k`.
    #[pyo3(signature = (k, n = 64, draws = 10000, seed = 0))]
    fn sample_tails(&self, k: usize, n: usize, draws: usize, seed: u64) -> PyResult<Vec<Vec<f64>>> {
        let cfg = TailSamplerConfig { draws_n_total: draws, rank_n: n, ..TailSamplerConfig::default() };
        let tails = oodk_core::sample_tails(&self.inner, k, &cfg, &mut seeded(seed)).map_err(py_err)?;
        Ok(tails.into_iter().map(|t| t.vector).collect())
    }

    fn __repr__(&self) -> String {
        format!("GaussianModel(classes={}, dim={})", self.inner.classes(), self.inner.dim())
    }
}

/// A trained classifier with its configuration echo.
#[pyclass(name = "Model", module = "oodk")]
struct PyModel {
    inner: Checkpoint,
}

#[pymethods]
impl PyModel {
    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(Self { inner: Checkpoint::load(path).map_err(py_err)? })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        self.inner.save(path).map_err(py_err)
    }

    #[getter]
    fn config_json(&self) -> String {
        self.inner.config_json.clone()
    }

    /// Negative free energy per input; higher means more in-distribution.
    #[pyo3(signature = (inputs, temperature = 1.0))]
    fn score(&self, inputs: Vec<Vec<f64>>, temperature: f64) -> PyResult<Vec<f64>> {
        score_inputs(&self.inner.params, &inputs, temperature).map_err(py_err)
    }

    fn predict(&self, inputs: Vec<Vec<f64>>) -> PyResult<Vec<usize>> {
        predict(&self.inner.params, &inputs).map_err(py_err)
    }
}

/// Trains on labeled vectors. `config_json` follows the CLI config format.
#[pyfunction]
#[pyo3(signature = (inputs, labels, classes, mode = "OURS", config_json = None, seed = None, epochs = None))]
fn train(
    inputs: Vec<Vec<f64>>,
    labels: Vec<usize>,
    classes: usize,
    mode: &str,
    config_json: Option<&str>,
    seed: Option<u64>,
    epochs: Option<usize>,
) -> PyResult<PyModel> {
    let mut cfg = run_config(config_json)?;
    cfg.train.mode = mode.parse::<Mode>().map_err(py_err)?;
    if let Some(s) = seed {
        cfg.train.seed = s;
    }
    if let Some(e) = epochs {
        cfg.train.epochs = e;
    }
    let data = TrainData { inputs: &inputs, labels: &labels, classes, image_shape: None };
    let out = oodk_core::train(&data, &cfg.train, &cfg.tails, &cfg.nda).map_err(py_err)?;
    Ok(PyModel { inner: Checkpoint { params: out.params, config_json: cfg.to_json() } })
}

/// Synthetic benchmark as a dict of `(inputs, labels)` pairs keyed by split.
#[pyfunction]
#[pyo3(signature = (seed = 0, config_json = None))]
fn generate_synthetic(
    py: Python<'_>,
    seed: u64,
    config_json: Option<&str>,
) -> PyResult<Py<pyo3::types::PyDict>> {
    let mut cfg = run_config(config_json)?;
    cfg.synthetic.seed = seed;
    let b = oodk_core::gen_synthetic(&cfg.synthetic, &mut seeded(seed)).map_err(py_err)?;
    let d = pyo3::types::PyDict::new(py);
    for (name, split) in [
        ("train", &b.train),
        ("test_id", &b.test_id),
        ("test_semantic", &b.test_semantic),
        ("test_modality", &b.test_modality),
    ] {
        d.set_item(name, (split.inputs.clone(), split.labels.clone()))?;
    }
    d.set_item("k_known", b.k_known)?;
    Ok(d.unbind())
}

/// One negative-augmentation draw on an image in [0, 1].
#[pyfunction]
#[pyo3(signature = (data, height, width, channels, seed, config_json = None))]
fn nda(
    data: Vec<f64>,
    height: usize,
    width: usize,
    channels: usize,
    seed: u64,
    config_json: Option<&str>,
) -> PyResult<Vec<f64>> {
    let cfg: NdaConfig = run_config(config_json)?.nda;
    let img = Image::new(height, width, channels, data).map_err(py_err)?;
    Ok(nda_sample(&img, &cfg, &mut seeded(seed)).map_err(py_err)?.into_data())
}

#[pymodule]
fn oodk(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyGaussianModel>()?;
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(free_energy, m)?)?;
    m.add_function(wrap_pyfunction!(auroc, m)?)?;
    m.add_function(wrap_pyfunction!(aupr_in, m)?)?;
    m.add_function(wrap_pyfunction!(balanced_accuracy, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(generate_synthetic, m)?)?;
    m.add_function(wrap_pyfunction!(nda, m)?)?;
    Ok(())
}
