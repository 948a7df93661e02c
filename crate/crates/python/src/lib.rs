//! Python bindings for `lcreg`.

use std::path::PathBuf;

use nalgebra::DMatrix;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use lcreg::estimators::{self, Algorithm, EstimatorConfig, Initialization};
use lcreg::harness::{self, TrueModel};
use lcreg::io::{self as lio, CsvLayout};
use lcreg::{model, pg, LcError};

fn to_py(e: LcError) -> PyErr {
    if e.is_input_error() {
        PyValueError::new_err(e.to_string())
    } else {
        PyRuntimeError::new_err(e.to_string())
    }
}

fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn rows_matrix(rows: &[Vec<f64>], ncols: usize) -> PyResult<DMatrix<f64>> {
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(PyValueError::new_err("matrix rows differ in length"));
    }
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    Ok(DMatrix::from_row_slice(rows.len(), ncols, &flat))
}

fn parse_algorithm(name: &str) -> PyResult<Algorithm> {
    name.parse().map_err(to_py)
}

/// Categorical responses and a covariate design matrix.
#[pyclass(name = "Dataset", module = "lcreg", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyDataset {
    inner: lcreg::Dataset,
}

#[pymethods]
impl PyDataset {
    /// `responses` holds 1-based codes, one row per unit.
    #[new]
    fn new(
        responses: Vec<Vec<usize>>,
        category_counts: Vec<usize>,
        design: Vec<Vec<f64>>,
    ) -> PyResult<Self> {
        let p = design.first().map_or(0, Vec::len);
        let design = rows_matrix(&design, p)?;
        lcreg::Dataset::new(responses, category_counts, design)
            .map(|inner| PyDataset { inner })
            .map_err(to_py)
    }

    #[staticmethod]
    #[pyo3(signature = (path, n_items, categories=None, intercept=false))]
    fn from_csv(
        path: PathBuf,
        n_items: usize,
        categories: Option<Vec<usize>>,
        intercept: bool,
    ) -> PyResult<Self> {
        let layout = CsvLayout {
            n_items,
            categories,
            intercept,
        };
        lio::read_dataset_file(&path, &layout)
            .map(|inner| PyDataset { inner })
            .map_err(to_py)
    }

    fn to_csv(&self, path: PathBuf) -> PyResult<()> {
        let file = std::fs::File::create(path).map_err(|e| to_py(e.into()))?;
        lio::write_dataset_csv(&self.inner, file).map_err(to_py)
    }

    #[getter]
    fn n_units(&self) -> usize {
        self.inner.n_units()
    }

    #[getter]
    fn n_items(&self) -> usize {
        self.inner.n_items()
    }

    #[getter]
    fn n_covariates(&self) -> usize {
        self.inner.n_covariates()
    }

    #[getter]
    fn category_counts(&self) -> Vec<usize> {
        self.inner.category_counts().to_vec()
    }

    #[getter]
    fn responses(&self) -> Vec<Vec<usize>> {
        self.inner.responses_one_based()
    }

    #[getter]
    fn design(&self) -> Vec<Vec<f64>> {
        matrix_rows(self.inner.design())
    }

    fn __repr__(&self) -> String {
        format!(
            "Dataset(n_units={}, n_items={}, n_covariates={})",
            self.inner.n_units(),
            self.inner.n_items(),
            self.inner.n_covariates()
        )
    }
}

/// Class coefficients (`R-1` rows, reference class last) and item profiles.
#[pyclass(name = "Params", module = "lcreg", frozen, from_py_object)]
#[derive(Clone)]
struct PyParams {
    inner: lcreg::ModelParams,
}

#[pymethods]
impl PyParams {
    #[new]
    #[pyo3(signature = (n_classes, beta, pi, n_covariates=None))]
    fn new(
        n_classes: usize,
        beta: Vec<Vec<f64>>,
        pi: Vec<Vec<Vec<f64>>>,
        n_covariates: Option<usize>,
    ) -> PyResult<Self> {
        let p = beta.first().map(Vec::len).or(n_covariates).unwrap_or(0);
        let beta = rows_matrix(&beta, p)?;
        lcreg::ModelParams::new(n_classes, beta, pi)
            .map(|inner| PyParams { inner })
            .map_err(to_py)
    }

    #[staticmethod]
    #[pyo3(signature = (text, n_covariates=None))]
    fn from_json(text: &str, n_covariates: Option<usize>) -> PyResult<Self> {
        lio::read_params_json(text.as_bytes(), n_covariates)
            .map(|inner| PyParams { inner })
            .map_err(to_py)
    }

    fn to_json(&self) -> PyResult<String> {
        let mut buf = Vec::new();
        lio::write_params_json(&self.inner, &mut buf).map_err(to_py)?;
        String::from_utf8(buf).map_err(|e| PyRuntimeError::new_err(e.to_string()))
    }

    #[getter]
    fn n_classes(&self) -> usize {
        self.inner.n_classes
    }

    #[getter]
    fn beta(&self) -> Vec<Vec<f64>> {
        matrix_rows(&self.inner.beta)
    }

    #[getter]
    fn pi(&self) -> Vec<Vec<Vec<f64>>> {
        self.inner.pi.clone()
    }

    fn __repr__(&self) -> String {
        format!(
            "Params(n_classes={}, n_covariates={})",
            self.inner.n_classes,
            self.inner.beta.ncols()
        )
    }
}

#[pyclass(name = "FitResult", module = "lcreg", frozen)]
struct PyFitResult {
    inner: estimators::FitResult,
}

#[pymethods]
impl PyFitResult {
    #[getter]
    fn algorithm(&self) -> &'static str {
        self.inner.algorithm.as_str()
    }

    #[getter]
    fn params(&self) -> PyParams {
        PyParams {
            inner: self.inner.params.clone(),
        }
    }

    #[getter]
    fn loglik_trace(&self) -> Vec<f64> {
        self.inner.loglik_trace.clone()
    }

    #[getter]
    fn loglik(&self) -> f64 {
        self.inner.final_loglik()
    }

    #[getter]
    fn iterations(&self) -> usize {
        self.inner.iterations
    }

    #[getter]
    fn converged(&self) -> bool {
        self.inner.converged
    }

    #[getter]
    fn stop_reason(&self) -> String {
        format!("{:?}", self.inner.stop_reason).to_lowercase()
    }

    #[getter]
    fn decay_count(&self) -> usize {
        self.inner.decay_count
    }

    #[getter]
    fn switch_iteration(&self) -> Option<usize> {
        self.inner.switch_iteration
    }

    #[getter]
    fn wall_time(&self) -> f64 {
        self.inner.wall_time
    }

    fn __repr__(&self) -> String {
        format!(
            "FitResult(algorithm={:?}, loglik={}, iterations={}, decays={})",
            self.inner.algorithm.as_str(),
            self.inner.final_loglik(),
            self.inner.iterations,
            self.inner.decay_count
        )
    }
}

fn config(
    tol: f64,
    max_iter: usize,
    epsilon: f64,
    alpha: f64,
    seed: u64,
) -> PyResult<EstimatorConfig> {
    let cfg = EstimatorConfig {
        tol,
        max_iter,
        epsilon,
        alpha,
        seed,
        ..EstimatorConfig::default()
    };
    cfg.validate().map_err(to_py)?;
    Ok(cfg)
}

/// Random starting values (the same draw for a given seed across algorithms).
#[pyfunction]
fn init_random(data: &PyDataset, n_classes: usize, seed: u64) -> PyResult<PyParams> {
    estimators::init_random(&data.inner, n_classes, seed)
        .map(|init| PyParams { inner: init.params })
        .map_err(to_py)
}

/// Fits one estimator. Starts from `init` when given, otherwise from
/// `init_random(data, n_classes, seed)`.
#[pyfunction]
#[pyo3(signature = (
    algorithm, data, n_classes, seed=0, init=None,
    tol=1e-11, max_iter=100_000, epsilon=0.01, alpha=1.0
))]
#[allow(clippy::too_many_arguments)]
fn fit(
    py: Python<'_>,
    algorithm: &str,
    data: &PyDataset,
    n_classes: usize,
    seed: u64,
    init: Option<PyParams>,
    tol: f64,
    max_iter: usize,
    epsilon: f64,
    alpha: f64,
) -> PyResult<PyFitResult> {
    let algorithm = parse_algorithm(algorithm)?;
    let cfg = config(tol, max_iter, epsilon, alpha, seed)?;
    let init = match init {
        Some(p) => Initialization { params: p.inner },
        None => estimators::init_random(&data.inner, n_classes, seed).map_err(to_py)?,
    };
    let data = &data.inner;
    py.detach(|| estimators::fit(algorithm, data, n_classes, &init, &cfg))
        .map(|inner| PyFitResult { inner })
        .map_err(to_py)
}

#[pyfunction]
fn log_likelihood(params: &PyParams, data: &PyDataset) -> PyResult<f64> {
    model::log_likelihood(&params.inner, &data.inner).map_err(to_py)
}

/// Posterior class probabilities, one row per unit.
#[pyfunction]
fn responsibilities(params: &PyParams, data: &PyDataset) -> PyResult<Vec<Vec<f64>>> {
    model::responsibilities(&params.inner, &data.inner)
        .map(|s| matrix_rows(s.weights()))
        .map_err(to_py)
}

/// Prior class probabilities given the covariates, one row per unit.
#[pyfunction]
fn class_probabilities(params: &PyParams, data: &PyDataset) -> PyResult<Vec<Vec<f64>>> {
    model::class_probabilities(&params.inner, &data.inner)
        .map(|m| matrix_rows(&m))
        .map_err(to_py)
}

/// Mean of a Pólya-gamma PG(1, z) variable.
#[pyfunction]
fn pg_expectation(z: f64) -> PyResult<f64> {
    pg::pg_expectation(z).map_err(to_py)
}

/// Draws `n` units from a model. `model` is `"election"`, `"random"` (shape
/// from `n_classes`, `n_items`, `n_categories`) or a true-model JSON string.
/// Returns the dataset and 1-based true labels.
#[pyfunction]
#[pyo3(signature = (n, seed=0, model="random", n_classes=3, n_items=12, n_categories=4))]
fn simulate(
    n: usize,
    seed: u64,
    model: &str,
    n_classes: usize,
    n_items: usize,
    n_categories: usize,
) -> PyResult<(PyDataset, Vec<usize>)> {
    let truth = match model {
        "election" => TrueModel::election_analog(),
        "random" => TrueModel::random(n_classes, n_items, n_categories, seed).map_err(to_py)?,
        json => lio::read_true_model_json(json.as_bytes()).map_err(to_py)?,
    };
    let sim = harness::simulate(&truth, n, seed).map_err(to_py)?;
    let labels = sim.labels.iter().map(|l| l + 1).collect();
    Ok((PyDataset { inner: sim.dataset }, labels))
}

/// Parameters of the built-in survey-shaped three-class model.
#[pyfunction]
fn election_model() -> PyParams {
    PyParams {
        inner: TrueModel::election_analog().params,
    }
}

/// Multi-start benchmark; returns the report as a JSON string.
#[pyfunction]
#[pyo3(signature = (
    data, n_classes, algorithms, n_runs=100, seed=1, jobs=1,
    tol=1e-11, max_iter=100_000, epsilon=0.01, alpha=1.0
))]
#[allow(clippy::too_many_arguments)]
fn run_benchmark(
    py: Python<'_>,
    data: &PyDataset,
    n_classes: usize,
    algorithms: Vec<String>,
    n_runs: usize,
    seed: u64,
    jobs: usize,
    tol: f64,
    max_iter: usize,
    epsilon: f64,
    alpha: f64,
) -> PyResult<String> {
    let algs = algorithms
        .iter()
        .map(|a| parse_algorithm(a))
        .collect::<PyResult<Vec<_>>>()?;
    let cfg = config(tol, max_iter, epsilon, alpha, seed)?;
    let data = &data.inner;
    let report = py
        .detach(|| {
            harness::run_benchmark_with_jobs(data, n_classes, &algs, n_runs, &cfg, seed, jobs)
        })
        .map_err(to_py)?;
    let mut buf = Vec::new();
    lio::write_report_json(&report, &mut buf).map_err(to_py)?;
    String::from_utf8(buf).map_err(|e| PyRuntimeError::new_err(e.to_string()))
}

#[pymodule]
#[pyo3(name = "lcreg")]
fn lcreg_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add(
        "ALGORITHMS",
        Algorithm::ALL
            .iter()
            .map(|a| a.as_str())
            .collect::<Vec<_>>(),
    )?;
    m.add_class::<PyDataset>()?;
    m.add_class::<PyParams>()?;
    m.add_class::<PyFitResult>()?;
    m.add_function(wrap_pyfunction!(init_random, m)?)?;
    m.add_function(wrap_pyfunction!(fit, m)?)?;
    m.add_function(wrap_pyfunction!(log_likelihood, m)?)?;
    m.add_function(wrap_pyfunction!(responsibilities, m)?)?;
    m.add_function(wrap_pyfunction!(class_probabilities, m)?)?;
    m.add_function(wrap_pyfunction!(pg_expectation, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(election_model, m)?)?;
    m.add_function(wrap_pyfunction!(run_benchmark, m)?)?;
    Ok(())
}
