//! Python bindings for the edgecache experiment library.

use pyo3::exceptions::{PyKeyError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyBytes, PyDict};

use edgecache::cache::{apply_action, CacheAction, CacheState, Owner};
use edgecache::ddpg;
use edgecache::env::{zipf_pmf as core_zipf, Catalog, ContentId, Permutation};
use edgecache::fl;
use edgecache::gradcheck::{check_all, Architecture};
use edgecache::harness;
use edgecache::nn::{Matrix, ModelParams};
use edgecache::rng::MasterSeed;
use edgecache::{Error, ExperimentConfig};

fn py_err(e: Error) -> PyErr {
    PyValueError::new_err(format!("{}: {e}", e.kind()))
}

/// Experiment configuration with the same keys as the INI format.
#[pyclass(name = "Config", from_py_object)]
#[derive(Clone)]
struct PyConfig {
    inner: ExperimentConfig,
}

#[pymethods]
impl PyConfig {
    #[new]
    #[pyo3(signature = (**overrides))]
    fn new(overrides: Option<&Bound<'_, PyDict>>) -> PyResult<Self> {
        let mut inner = ExperimentConfig::default();
        if let Some(d) = overrides {
            for (k, v) in d.iter() {
                let key: String = k.extract()?;
                inner.set(&key, &v.str()?.to_string()).map_err(py_err)?;
            }
        }
        inner.validate().map_err(py_err)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn from_ini(text: &str) -> PyResult<Self> {
        Ok(Self { inner: ExperimentConfig::parse(text).map_err(py_err)? })
    }

    fn set(&mut self, key: &str, value: &str) -> PyResult<()> {
        self.inner.set(key, value).map_err(py_err)
    }

    fn get(&self, key: &str) -> PyResult<String> {
        self.inner.get(key).ok_or_else(|| PyKeyError::new_err(key.to_string()))
    }

    fn to_ini(&self) -> String {
        self.inner.to_ini()
    }

    fn validate(&self) -> PyResult<()> {
        self.inner.validate().map_err(py_err)
    }

    fn __repr__(&self) -> String {
        format!("Config(policy={}, seed={})", self.inner.policy, self.inner.seed)
    }
}

/// Network parameters in the portable binary format.
#[pyclass(name = "Model", from_py_object)]
#[derive(Clone)]
struct PyModel {
    inner: ModelParams,
}

#[pymethods]
impl PyModel {
    #[staticmethod]
    fn predictor(n_contents: usize, window: usize, hidden: usize, seed: u64) -> PyResult<Self> {
        let mut rng = MasterSeed(seed).stream("py/predictor");
        Ok(Self { inner: fl::new_predictor(n_contents, window, hidden, &mut rng).map_err(py_err)? })
    }

    #[staticmethod]
    fn actor(n_contents: usize, hidden: usize, seed: u64) -> PyResult<Self> {
        let mut rng = MasterSeed(seed).stream("py/actor");
        Ok(Self { inner: ddpg::new_actor(n_contents, hidden, &mut rng).map_err(py_err)? })
    }

    #[staticmethod]
    fn from_bytes(data: &[u8]) -> PyResult<Self> {
        Ok(Self { inner: ModelParams::from_bytes(data).map_err(py_err)? })
    }

    fn to_bytes<'py>(&self, py: Python<'py>) -> Bound<'py, PyBytes> {
        PyBytes::new(py, &self.inner.to_bytes())
    }

    fn flat(&self) -> Vec<f64> {
        self.inner.flat()
    }

    fn digest(&self) -> String {
        self.inner.digest()
    }

    #[getter]
    fn n_params(&self) -> usize {
        self.inner.n_params()
    }

    #[getter]
    fn input_dim(&self) -> usize {
        self.inner.input_dim()
    }

    #[getter]
    fn output_dim(&self) -> usize {
        self.inner.output_dim()
    }

    /// Forward pass over a list of input rows.
    fn predict(&self, rows: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
        let x = Matrix::from_rows(&rows).map_err(py_err)?;
        let y = self.inner.predict(&x).map_err(py_err)?;
        Ok((0..y.rows()).map(|r| y.row(r).to_vec()).collect())
    }
}

#[pyfunction]
#[pyo3(signature = (alpha, n_contents, permutation=None))]
fn zipf_pmf(alpha: f64, n_contents: usize, permutation: Option<Vec<ContentId>>) -> PyResult<Vec<f64>> {
    let catalog = Catalog::new(n_contents).map_err(py_err)?;
    let perm = match permutation {
        Some(p) => Permutation::new(p).map_err(py_err)?,
        None => Permutation::identity(n_contents),
    };
    Ok(core_zipf(alpha, &catalog, &perm).map_err(py_err)?.as_slice().to_vec())
}

#[pyfunction]
fn fedavg(models: Vec<PyModel>, weights: Vec<f64>) -> PyResult<PyModel> {
    let refs: Vec<&ModelParams> = models.iter().map(|m| &m.inner).collect();
    Ok(PyModel { inner: fl::fedavg(&refs, &weights).map_err(py_err)? })
}

/// Top-M decode of actor scores; returns the cache after the action.
#[pyfunction]
fn decode_action(scores: Vec<f64>, cached: Vec<ContentId>, capacity: usize, new_files: Vec<ContentId>) -> PyResult<Vec<ContentId>> {
    let mut cache = CacheState::new(Owner::Server, capacity);
    for id in cached {
        cache.insert_for_fill(id).map_err(py_err)?;
    }
    let action: CacheAction = ddpg::decode_action(&scores, &cache, &new_files);
    Ok(apply_action(&cache, &new_files, &action).map_err(py_err)?.entries().to_vec())
}

/// Runs one experiment; returns the summary plus the metrics CSV.
#[pyfunction]
fn run_experiment<'py>(py: Python<'py>, config: &PyConfig) -> PyResult<Bound<'py, PyDict>> {
    let cfg = config.inner.clone();
    let out = py.detach(|| harness::run_experiment(&cfg)).map_err(py_err)?;
    let d = PyDict::new(py);
    let s = &out.summary;
    d.set_item("policy", &s.policy)?;
    d.set_item("seed", s.seed)?;
    d.set_item("private", s.private)?;
    d.set_item("mean_h0", s.mean_h0)?;
    d.set_item("sd_h0", s.sd_h0)?;
    d.set_item("traffic_slots", s.traffic_slots)?;
    d.set_item("mean_hi", s.mean_hi)?;
    d.set_item("audit_clean", out.audit.is_clean())?;
    d.set_item("metrics_csv", harness::to_csv(&out.rows))?;
    d.set_item("training_csv", harness::training_log_csv(&out.training))?;
    Ok(d)
}

/// Finite-difference check; returns `(network, max relative error)` pairs.
#[pyfunction]
#[pyo3(signature = (n_contents=24, window=10, predictor_hidden=128, hidden=128, draws=20, seed=0))]
fn gradcheck(py: Python<'_>, n_contents: usize, window: usize, predictor_hidden: usize, hidden: usize, draws: usize, seed: u64) -> PyResult<Vec<(String, f64)>> {
    let arch = Architecture { n_contents, window, predictor_hidden, hidden };
    let reports = py.detach(|| check_all(&arch, draws, MasterSeed(seed))).map_err(py_err)?;
    Ok(reports.into_iter().map(|r| (r.name, r.max_rel_err)).collect())
}

#[pymodule]
fn edgecache_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyConfig>()?;
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(zipf_pmf, m)?)?;
    m.add_function(wrap_pyfunction!(fedavg, m)?)?;
    m.add_function(wrap_pyfunction!(decode_action, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add_function(wrap_pyfunction!(gradcheck, m)?)?;
    m.add("CSV_HEADER", harness::CSV_HEADER)?;
    Ok(())
}
