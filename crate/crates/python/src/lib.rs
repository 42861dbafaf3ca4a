//! Python bindings: `import pyclms`.

use std::path::PathBuf;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use clms::channel::{RawFrame, ReceivedFrame};
use clms::cli::{exit_code_for, EXIT_NUMERICAL};
use clms::experiments::{self, ExperimentResult};
use clms::{linalg, theory, Algorithm, LinkMode, C64};

fn to_py(e: clms::Error) -> PyErr {
    if exit_code_for(&e) == EXIT_NUMERICAL {
        PyRuntimeError::new_err(e.to_string())
    } else {
        PyValueError::new_err(e.to_string())
    }
}

/// Scenario plus experiment settings, as read from a config file.
#[pyclass(name = "Config", module = "pyclms", skip_from_py_object)]
#[derive(Clone)]
struct PyConfig {
    inner: clms::Config,
}

#[pymethods]
impl PyConfig {
    #[staticmethod]
    fn parse(text: &str) -> PyResult<Self> {
        clms::parse_config(text).map(|inner| PyConfig { inner }).map_err(to_py)
    }

    #[staticmethod]
    fn from_file(path: PathBuf) -> PyResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| to_py(e.into()))?;
        Self::parse(&text)
    }

    /// The bundled five-node network; `digital=True` for the link-failure variant.
    #[staticmethod]
    #[pyo3(signature = (digital = false))]
    fn reference(digital: bool) -> Self {
        let inner = if digital { clms::Config::reference_digital() } else { clms::Config::reference() };
        PyConfig { inner }
    }

    fn to_text(&self) -> String {
        clms::serialize_config(&self.inner)
    }

    #[getter]
    fn num_nodes(&self) -> usize {
        self.inner.scenario.num_nodes()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.scenario.dim()
    }

    #[getter]
    fn mode(&self) -> &'static str {
        self.inner.scenario.mode.as_str()
    }

    #[setter]
    fn set_mode(&mut self, mode: &str) -> PyResult<()> {
        self.inner.scenario.mode = mode.parse::<LinkMode>().map_err(PyValueError::new_err)?;
        Ok(())
    }

    #[getter]
    fn true_weights(&self) -> Vec<C64> {
        self.inner.scenario.true_weights.clone()
    }

    #[getter]
    fn node_positions(&self) -> Vec<(f64, f64)> {
        self.inner.scenario.node_positions.iter().map(|p| (p[0], p[1])).collect()
    }

    #[getter]
    fn distances(&self) -> Vec<f64> {
        (0..self.num_nodes()).map(|k| self.inner.scenario.distance(k)).collect()
    }

    #[getter]
    fn trials(&self) -> usize {
        self.inner.experiment.trials
    }

    #[setter]
    fn set_trials(&mut self, v: usize) {
        self.inner.experiment.trials = v;
    }

    #[getter]
    fn iterations(&self) -> usize {
        self.inner.experiment.iterations
    }

    /// Also clamps the steady-state window to the new length.
    #[setter]
    fn set_iterations(&mut self, v: usize) {
        self.inner.experiment.iterations = v;
        self.inner.experiment.window = self.inner.experiment.window.min(v);
    }

    #[getter]
    fn window(&self) -> usize {
        self.inner.experiment.window
    }

    #[setter]
    fn set_window(&mut self, v: usize) {
        self.inner.experiment.window = v;
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.experiment.seed
    }

    #[setter]
    fn set_seed(&mut self, v: u64) {
        self.inner.experiment.seed = v;
    }

    #[getter]
    fn step_size(&self) -> f64 {
        self.inner.experiment.step_size
    }

    #[setter]
    fn set_step_size(&mut self, v: f64) {
        self.inner.experiment.step_size = v;
    }

    #[getter]
    fn bc_step_size(&self) -> f64 {
        self.inner.experiment.bc_step_size
    }

    #[setter]
    fn set_bc_step_size(&mut self, v: f64) {
        self.inner.experiment.bc_step_size = v;
    }

    #[getter]
    fn algorithms(&self) -> Vec<&'static str> {
        self.inner.experiment.algorithms.iter().map(|a| a.as_str()).collect()
    }

    #[setter]
    fn set_algorithms(&mut self, names: Vec<String>) -> PyResult<()> {
        self.inner.experiment.algorithms = names
            .iter()
            .map(|n| n.parse::<Algorithm>().map_err(PyValueError::new_err))
            .collect::<PyResult<_>>()?;
        Ok(())
    }

    fn __repr__(&self) -> String {
        format!("Config(mode={}, num_nodes={}, dim={})", self.mode(), self.num_nodes(), self.dim())
    }
}

/// Fusion-center estimator driven frame by frame from Python.
#[pyclass(name = "AdaptiveFilter", module = "pyclms")]
struct PyFilter {
    inner: clms::AdaptiveFilter,
}

#[pymethods]
impl PyFilter {
    /// `reg_noise_var` holds the per-node regressor link-noise variance
    /// (required for `bc_clms`).
    #[new]
    #[pyo3(signature = (algorithm, dim, step, reg_noise_var = None))]
    fn new(algorithm: &str, dim: usize, step: f64, reg_noise_var: Option<Vec<f64>>) -> PyResult<Self> {
        let alg: Algorithm = algorithm.parse().map_err(PyValueError::new_err)?;
        let mut f = clms::AdaptiveFilter::new(alg, dim, step).map_err(to_py)?;
        if let Some(vars) = reg_noise_var {
            let covs: Vec<_> = vars.iter().map(|v| linalg::scaled_identity(dim, *v)).collect();
            f = f.with_reg_noise_cov(&covs).map_err(to_py)?;
        }
        Ok(PyFilter { inner: f })
    }

    #[getter]
    fn weights(&self) -> Vec<C64> {
        self.inner.weights().to_vec()
    }

    #[getter]
    fn is_diverged(&self) -> bool {
        self.inner.is_diverged()
    }

    /// One gated update. Each frame is `None` (failed link) or
    /// `(regressor, datum, eq_gain)`.
    fn update(&mut self, frames: Vec<Option<(Vec<C64>, C64, C64)>>) -> PyResult<()> {
        let frames: Vec<ReceivedFrame> = frames
            .into_iter()
            .map(|f| match f {
                None => ReceivedFrame::Failed,
                Some((regressor, datum, eq_gain)) => ReceivedFrame::Delivered { regressor, datum, eq_gain },
            })
            .collect();
        self.inner.update(&frames, &[]).map_err(to_py)
    }

    /// One baseline update on raw `(regressor, datum)` pairs.
    fn update_raw(&mut self, raw: Vec<(Vec<C64>, C64)>) -> PyResult<()> {
        let raw: Vec<RawFrame> = raw.into_iter().map(|(regressor, datum)| RawFrame { regressor, datum }).collect();
        self.inner.baseline_step(&raw).map_err(to_py)
    }
}

#[pyfunction]
fn theory_report<'py>(py: Python<'py>, config: &PyConfig) -> PyResult<Bound<'py, PyDict>> {
    let c = &config.inner;
    let t = clms::TheoryReport::compute(&c.scenario, c.experiment.bc_step_size, c.beta).map_err(to_py)?;
    let d = PyDict::new(py);
    d.set_item("distances", t.distances.clone())?;
    d.set_item("threshold_snrs", t.threshold_snrs.clone())?;
    d.set_item("success_probs", t.success_probs.clone())?;
    d.set_item("eq_power", t.eq_power.clone())?;
    d.set_item("hat_noise_var", t.hat_noise_var.clone())?;
    d.set_item("biased_opt", t.biased_opt.clone())?;
    d.set_item("unbiased_opt", t.unbiased_opt.clone())?;
    d.set_item("bias", t.bias.clone())?;
    d.set_item("clms_mu_max", t.clms_mu_max)?;
    d.set_item("bc_mu_max", t.bc_mu_max)?;
    d.set_item("steady_msd", t.steady_msd)?;
    d.set_item("steady_msd_db", t.steady_msd_db())?;
    Ok(d)
}

fn result_dict<'py>(py: Python<'py>, r: &ExperimentResult) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    let algs = PyDict::new(py);
    for a in &r.algorithms {
        let e = PyDict::new(py);
        e.set_item("msd", a.msd.clone())?;
        e.set_item("mean_error_norm", a.mean_error.iter().map(|v| linalg::norm(v)).collect::<Vec<_>>())?;
        e.set_item("empirical_bias", a.empirical_bias.clone())?;
        e.set_item("bias_std_error", a.bias_std_error.clone())?;
        e.set_item("steady_msd_db", a.steady_msd_db())?;
        e.set_item("completed_trials", a.completed_trials)?;
        e.set_item("diverged_trials", a.diverged_trials)?;
        algs.set_item(a.algorithm.as_str(), e)?;
    }
    d.set_item("algorithms", algs)?;
    d.set_item("success_rates", r.success_rates())?;
    d.set_item("link_draws", r.link_draws)?;
    d.set_item("seed", r.seed)?;
    Ok(d)
}

/// Monte Carlo ensemble with the config's experiment settings.
#[pyfunction]
fn run_ensemble<'py>(py: Python<'py>, config: &PyConfig) -> PyResult<Bound<'py, PyDict>> {
    let c = config.inner.clone();
    let r = py.detach(move || experiments::run_ensemble(&c.scenario, &c.experiment)).map_err(to_py)?;
    result_dict(py, &r)
}

/// Ensemble vs closed forms: `(all_pass, rows)`.
#[pyfunction]
fn compare<'py>(py: Python<'py>, config: &PyConfig) -> PyResult<(bool, Vec<Bound<'py, PyDict>>)> {
    let c = config.inner.clone();
    let cmp = py
        .detach(move || -> clms::Result<_> {
            let t = clms::TheoryReport::compute(&c.scenario, c.experiment.bc_step_size, c.beta)?;
            let r = experiments::run_ensemble(&c.scenario, &c.experiment)?;
            Ok(experiments::compare_with_theory(&r, &t, &c.tolerances))
        })
        .map_err(to_py)?;
    let rows = cmp
        .rows
        .iter()
        .map(|row| {
            let d = PyDict::new(py);
            d.set_item("quantity", &row.quantity)?;
            d.set_item("simulated", row.simulated)?;
            d.set_item("predicted", row.predicted)?;
            d.set_item("abs_delta", row.abs_delta)?;
            d.set_item("db_delta", row.db_delta)?;
            d.set_item("pass", row.pass)?;
            Ok(d)
        })
        .collect::<PyResult<_>>()?;
    Ok((cmp.all_pass(), rows))
}

#[pyfunction]
fn success_probability(fading_var: f64, distance: f64, nominal_range: f64, path_loss_exp: f64) -> f64 {
    clms::channel::success_probability(fading_var, distance, nominal_range, path_loss_exp)
}

#[pyfunction]
fn expected_eq_power(fading_var: f64, distance: f64, nominal_range: f64, path_loss_exp: f64, tx_power: f64) -> f64 {
    theory::expected_eq_power(fading_var, distance, nominal_range, path_loss_exp, tx_power)
}

/// `(mu_max for CLMS, mu_max for BC-CLMS)`.
#[pyfunction]
fn stability_bounds(config: &PyConfig) -> PyResult<(f64, f64)> {
    theory::stability_bounds(&config.inner.scenario).map_err(to_py)
}

#[pyfunction]
fn clms_bias(config: &PyConfig) -> PyResult<Vec<C64>> {
    theory::clms_bias(&config.inner.scenario).map_err(to_py)
}

#[pyfunction]
#[pyo3(signature = (config, step, beta = theory::CIRCULAR_GAUSSIAN_BETA))]
fn bc_steady_state_msd(config: &PyConfig, step: f64, beta: f64) -> PyResult<f64> {
    theory::bc_steady_state_msd(&config.inner.scenario, step, beta).map_err(to_py)
}

#[pyfunction]
#[pyo3(signature = (variance, w, trials, seed = 0))]
fn moment_factor_oracle(py: Python<'_>, variance: f64, w: Vec<C64>, trials: usize, seed: u64) -> Option<f64> {
    py.detach(move || {
        let mut rng = clms::rng::placement_rng(seed);
        theory::moment_factor_oracle(variance, &w, trials, theory::NoiseKind::CircularComplex, &mut rng)
    })
}

#[pymodule]
fn pyclms(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyConfig>()?;
    m.add_class::<PyFilter>()?;
    m.add_function(wrap_pyfunction!(theory_report, m)?)?;
    m.add_function(wrap_pyfunction!(run_ensemble, m)?)?;
    m.add_function(wrap_pyfunction!(compare, m)?)?;
    m.add_function(wrap_pyfunction!(success_probability, m)?)?;
    m.add_function(wrap_pyfunction!(expected_eq_power, m)?)?;
    m.add_function(wrap_pyfunction!(stability_bounds, m)?)?;
    m.add_function(wrap_pyfunction!(clms_bias, m)?)?;
    m.add_function(wrap_pyfunction!(bc_steady_state_msd, m)?)?;
    m.add_function(wrap_pyfunction!(moment_factor_oracle, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
