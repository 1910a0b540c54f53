//! Python bindings. Vectors cross the boundary as lists of floats; results
//! come back as plain dicts and lists.

use std::path::PathBuf;

use dpmeta::harness::{self, Arm, CalibrationRecord, SweepAxis};
use dpmeta::learners::SampleOrder;
use dpmeta::seeding::{stream, Purpose};
use dpmeta::{Error, LossFunction, ParamDomain, ParamVector};
use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Io { .. } => PyIOError::new_err(e.to_string()),
        Error::Invariant(_) => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

trait OrPy<T> {
    fn py(self) -> PyResult<T>;
}

impl<T> OrPy<T> for dpmeta::Result<T> {
    fn py(self) -> PyResult<T> {
        self.map_err(py_err)
    }
}

fn vector(x: Vec<f64>) -> PyResult<ParamVector> {
    ParamVector::new(x).py()
}

fn domain(center: Option<Vec<f64>>, radius: f64, dim: usize) -> PyResult<ParamDomain> {
    let center = match center {
        Some(c) => vector(c)?,
        None => ParamVector::zeros(dim),
    };
    ParamDomain::ball(center, radius).py()
}

#[pyclass(name = "PrivacyParams", module = "dpmeta", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyPrivacyParams(dpmeta::PrivacyParams);

#[pymethods]
impl PyPrivacyParams {
    #[new]
    #[pyo3(signature = (epsilon, delta, group_size = 1))]
    fn new(epsilon: f64, delta: f64, group_size: u32) -> PyResult<Self> {
        Ok(Self(
            dpmeta::PrivacyParams::with_group_size(epsilon, delta, group_size).py()?,
        ))
    }

    #[getter]
    fn epsilon(&self) -> f64 {
        self.0.epsilon()
    }

    #[getter]
    fn delta(&self) -> f64 {
        self.0.delta()
    }

    #[getter]
    fn group_size(&self) -> u32 {
        self.0.group_size()
    }

    /// `(epsilon, delta)` after converting to the configured group size.
    fn group_guarantee(&self) -> (f64, f64) {
        let g = dpmeta::group_dp(&self.0);
        (g.epsilon, g.delta)
    }

    fn __repr__(&self) -> String {
        format!(
            "PrivacyParams(epsilon={}, delta={}, group_size={})",
            self.0.epsilon(),
            self.0.delta(),
            self.0.group_size()
        )
    }
}

#[pyclass(name = "NoisySgdPlan", module = "dpmeta", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyNoisySgdPlan(dpmeta::NoisySgdPlan);

#[pymethods]
impl PyNoisySgdPlan {
    #[new]
    fn new(steps_n: usize, step_size: f64, noise_variance: f64, clip_bound: f64) -> PyResult<Self> {
        Ok(Self(
            dpmeta::NoisySgdPlan::custom(steps_n, step_size, noise_variance, clip_bound).py()?,
        ))
    }

    /// Budgeted plan for `m` samples in dimension `d`.
    #[staticmethod]
    fn calibrate(
        m: usize,
        privacy: &PyPrivacyParams,
        d: usize,
        lipschitz_g: f64,
        gamma: f64,
    ) -> PyResult<Self> {
        Ok(Self(
            dpmeta::NoisySgdPlan::calibrate(m, &privacy.0, d, lipschitz_g, gamma).py()?,
        ))
    }

    #[getter]
    fn steps_n(&self) -> usize {
        self.0.steps_n()
    }

    #[getter]
    fn step_size(&self) -> f64 {
        self.0.step_size()
    }

    #[getter]
    fn noise_variance(&self) -> f64 {
        self.0.noise_variance()
    }

    #[getter]
    fn clip_bound(&self) -> f64 {
        self.0.clip_bound()
    }

    fn __repr__(&self) -> String {
        format!(
            "NoisySgdPlan(steps_n={}, step_size={}, noise_variance={}, clip_bound={})",
            self.0.steps_n(),
            self.0.step_size(),
            self.0.noise_variance(),
            self.0.clip_bound()
        )
    }
}

#[pyclass(name = "MetaState", module = "dpmeta")]
struct PyMetaState(dpmeta::MetaState);

#[pymethods]
impl PyMetaState {
    #[new]
    fn new(phi_init: Vec<f64>) -> PyResult<Self> {
        Ok(Self(dpmeta::MetaState::new(vector(phi_init)?)))
    }

    /// Folds one released parameter into the running mean.
    fn step(&mut self, theta_bar: Vec<f64>) -> PyResult<()> {
        self.0 = dpmeta::meta_step(&self.0, &vector(theta_bar)?).py()?;
        Ok(())
    }

    #[getter]
    fn phi(&self) -> Vec<f64> {
        self.0.phi().as_slice().to_vec()
    }

    #[getter]
    fn phi_hat(&self) -> Vec<f64> {
        self.0.phi_hat().into_vec()
    }

    #[getter]
    fn task_count(&self) -> usize {
        self.0.task_count()
    }
}

#[pyclass(name = "ExperimentConfig", module = "dpmeta", skip_from_py_object)]
#[derive(Clone)]
struct PyExperimentConfig(harness::ExperimentConfig);

#[pymethods]
impl PyExperimentConfig {
    /// Parses `key = value` text; an empty string gives the defaults.
    #[new]
    #[pyo3(signature = (text = ""))]
    fn new(text: &str) -> PyResult<Self> {
        Ok(Self(text.parse().py()?))
    }

    #[staticmethod]
    fn from_file(path: PathBuf) -> PyResult<Self> {
        Ok(Self(harness::ExperimentConfig::from_file(path).py()?))
    }

    /// Sets one key. Values are given in config-file syntax; numbers, bools
    /// and sequences of numbers are converted.
    fn set(&mut self, key: &str, value: &Bound<'_, PyAny>) -> PyResult<()> {
        let text = if let Ok(b) = value.extract::<bool>() {
            b.to_string()
        } else if let Ok(v) = value.extract::<Vec<f64>>() {
            v.iter().map(f64::to_string).collect::<Vec<_>>().join(",")
        } else {
            value.str()?.to_string()
        };
        self.0.set_value(key, &text).py()
    }

    fn validate(&self) -> PyResult<()> {
        self.0.validate().py()
    }

    #[getter]
    fn master_seed(&self) -> u64 {
        self.0.master_seed
    }

    fn __str__(&self) -> String {
        self.0.to_config_string()
    }
}

fn calibration_dict<'py>(py: Python<'py>, c: &CalibrationRecord) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("m", c.m)?;
    d.set_item("d", c.d)?;
    d.set_item("lipschitz_g", c.lipschitz_g)?;
    d.set_item("smoothness_beta", c.smoothness_beta)?;
    d.set_item("growth_alpha", c.growth_alpha)?;
    d.set_item("diameter", c.diameter)?;
    d.set_item("n", c.steps_n)?;
    d.set_item("noisy_sgd_step_size", c.noisy_step_size)?;
    d.set_item("sigma_sq", c.sigma_sq)?;
    d.set_item("gamma", c.gamma)?;
    d.set_item("gamma_variant", c.gamma_variant.as_str())?;
    d.set_item("eta", c.eta)?;
    d.set_item("smoothness_bound", c.smoothness_bound)?;
    d.set_item("smoothness_certified", c.smoothness_certified)?;
    d.set_item("epsilon", c.per_task.epsilon)?;
    d.set_item("delta", c.per_task.delta)?;
    d.set_item("group", (c.group.epsilon, c.group.delta))?;
    d.set_item("composed", (c.composed.epsilon, c.composed.delta))?;
    Ok(d)
}

#[pyclass(name = "MetricsReport", module = "dpmeta", frozen)]
struct PyMetricsReport(harness::MetricsReport);

#[pymethods]
impl PyMetricsReport {
    #[getter]
    fn seed(&self) -> u64 {
        self.0.seed
    }

    #[getter]
    fn axis_value(&self) -> Option<f64> {
        self.0.axis_value
    }

    #[getter]
    fn calibration<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        calibration_dict(py, &self.0.calibration)
    }

    /// `{arm: {"mean", "std", "std_error", "excess"}}`
    #[getter]
    fn arms<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let out = PyDict::new(py);
        for a in &self.0.arms {
            let d = PyDict::new(py);
            d.set_item("mean", a.mean)?;
            d.set_item("std", a.std)?;
            d.set_item("std_error", a.std_error)?;
            d.set_item("excess", a.excess.clone())?;
            out.set_item(a.arm.as_str(), d)?;
        }
        Ok(out)
    }

    fn mean_excess(&self, arm: &str) -> PyResult<f64> {
        let arm =
            Arm::parse(arm).ok_or_else(|| PyValueError::new_err(format!("unknown arm `{arm}`")))?;
        self.0
            .arm(arm)
            .map(|a| a.mean)
            .ok_or_else(|| PyValueError::new_err(format!("arm `{}` was not run", arm.as_str())))
    }

    #[getter]
    fn mean_surrogate_loss(&self) -> f64 {
        self.0.mean_surrogate_loss
    }

    #[getter]
    fn v_bar_sq_realized(&self) -> f64 {
        self.0.v_bar_sq_realized
    }

    #[getter]
    fn phi_hat(&self) -> Vec<f64> {
        self.0.phi_hat.as_slice().to_vec()
    }

    #[getter]
    fn warnings(&self) -> Vec<String> {
        self.0.warnings.clone()
    }

    #[getter]
    fn wall_clock_s(&self) -> f64 {
        self.0.wall_clock_s
    }

    fn to_csv(&self) -> String {
        harness::to_csv(std::slice::from_ref(&self.0))
    }

    fn __str__(&self) -> String {
        self.0.summary_text()
    }
}

#[pyfunction]
#[pyo3(signature = (v, radius, center = None))]
fn project(v: Vec<f64>, radius: f64, center: Option<Vec<f64>>) -> PyResult<Vec<f64>> {
    let dom = domain(center, radius, v.len())?;
    Ok(dpmeta::project(&vector(v)?, &dom).py()?.into_vec())
}

#[pyfunction]
fn clip_norm(v: Vec<f64>, bound: f64) -> PyResult<Vec<f64>> {
    Ok(dpmeta::clip_norm(&vector(v)?, bound).py()?.into_vec())
}

#[pyfunction]
fn step_budget(m: usize, privacy: &PyPrivacyParams, d: usize) -> usize {
    dpmeta::step_budget(m, &privacy.0, d)
}

#[pyfunction]
fn noise_variance(n: usize, m: usize, lipschitz_g: f64, privacy: &PyPrivacyParams) -> f64 {
    dpmeta::noise_variance(n, m, lipschitz_g, &privacy.0)
}

#[pyfunction]
#[pyo3(signature = (lipschitz_g, alpha, d, m, privacy, variant = "lemma_a3"))]
fn meta_gamma(
    lipschitz_g: f64,
    alpha: f64,
    d: usize,
    m: usize,
    privacy: &PyPrivacyParams,
    variant: &str,
) -> PyResult<f64> {
    let variant = variant.parse().py()?;
    Ok(dpmeta::meta_gamma(
        lipschitz_g,
        alpha,
        d,
        m,
        &privacy.0,
        variant,
    ))
}

#[pyfunction]
fn test_time_eta(similarity_v: f64, alpha: f64, lipschitz_g: f64, m: usize) -> f64 {
    dpmeta::test_time_eta(similarity_v, alpha, lipschitz_g, m)
}

fn quadratic_losses(
    anchors: Vec<Vec<f64>>,
    curvature: f64,
    dom: &ParamDomain,
) -> PyResult<Vec<LossFunction>> {
    anchors
        .into_iter()
        .map(|a| dpmeta::make_quadratic(vector(a)?, curvature, dom).py())
        .collect()
}

/// OGD over `½·a·‖θ − anchor‖²` sample losses; returns `(averaged, final)`.
#[pyfunction]
#[pyo3(signature = (anchors, curvature, init, eta, radius, center = None))]
fn ogd_quadratic(
    anchors: Vec<Vec<f64>>,
    curvature: f64,
    init: Vec<f64>,
    eta: f64,
    radius: f64,
    center: Option<Vec<f64>>,
) -> PyResult<(Vec<f64>, Vec<f64>)> {
    let dom = domain(center, radius, init.len())?;
    let losses = quadratic_losses(anchors, curvature, &dom)?;
    let cfg = dpmeta::OgdConfig::new(eta, losses.len()).py()?;
    let out = dpmeta::ogd_run(&losses, &vector(init)?, &cfg, &dom).py()?;
    Ok((
        out.averaged_iterate.into_vec(),
        out.final_iterate.into_vec(),
    ))
}

/// Noisy SGD over quadratic sample losses; returns `(averaged, final)`.
/// `order` pins the sampled indices; otherwise they are drawn from `seed`.
#[pyfunction]
#[pyo3(signature = (anchors, curvature, init, plan, radius, seed = 0, center = None, order = None))]
#[allow(clippy::too_many_arguments)]
fn noisy_sgd_quadratic(
    anchors: Vec<Vec<f64>>,
    curvature: f64,
    init: Vec<f64>,
    plan: &PyNoisySgdPlan,
    radius: f64,
    seed: u64,
    center: Option<Vec<f64>>,
    order: Option<Vec<usize>>,
) -> PyResult<(Vec<f64>, Vec<f64>)> {
    let dom = domain(center, radius, init.len())?;
    let losses = quadratic_losses(anchors, curvature, &dom)?;
    let order = match &order {
        Some(idx) => SampleOrder::Pinned(idx),
        None => SampleOrder::UniformWithReplacement,
    };
    let mut rng = stream(seed, 0, Purpose::User);
    let out = dpmeta::noisy_sgd_run_with(
        &losses,
        &vector(init)?,
        &plan.0,
        &dom,
        order,
        false,
        &mut rng,
    )
    .py()?;
    Ok((
        out.averaged_iterate.into_vec(),
        out.final_iterate.into_vec(),
    ))
}

#[pyfunction]
fn calibrate<'py>(py: Python<'py>, cfg: &PyExperimentConfig) -> PyResult<Bound<'py, PyDict>> {
    calibration_dict(py, &harness::calibrate(&cfg.0).py()?)
}

/// Meta-trains and evaluates every arm; writes the CSV if `output_path` is set.
#[pyfunction]
fn run_experiment(py: Python<'_>, cfg: &PyExperimentConfig) -> PyResult<PyMetricsReport> {
    let cfg = cfg.0.clone();
    let report = py.detach(|| harness::run_experiment(&cfg)).py()?;
    Ok(PyMetricsReport(report))
}

#[pyfunction]
fn sweep(
    py: Python<'_>,
    cfg: &PyExperimentConfig,
    axis: &str,
    values: Vec<f64>,
) -> PyResult<Vec<PyMetricsReport>> {
    let axis: SweepAxis = axis.parse().py()?;
    let cfg = cfg.0.clone();
    let reports = py.detach(|| harness::sweep(&cfg, axis, &values)).py()?;
    Ok(reports.into_iter().map(PyMetricsReport).collect())
}

#[pymodule(name = "dpmeta")]
fn dpmeta_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyPrivacyParams>()?;
    m.add_class::<PyNoisySgdPlan>()?;
    m.add_class::<PyMetaState>()?;
    m.add_class::<PyExperimentConfig>()?;
    m.add_class::<PyMetricsReport>()?;
    m.add_function(wrap_pyfunction!(project, m)?)?;
    m.add_function(wrap_pyfunction!(clip_norm, m)?)?;
    m.add_function(wrap_pyfunction!(step_budget, m)?)?;
    m.add_function(wrap_pyfunction!(noise_variance, m)?)?;
    m.add_function(wrap_pyfunction!(meta_gamma, m)?)?;
    m.add_function(wrap_pyfunction!(test_time_eta, m)?)?;
    m.add_function(wrap_pyfunction!(ogd_quadratic, m)?)?;
    m.add_function(wrap_pyfunction!(noisy_sgd_quadratic, m)?)?;
    m.add_function(wrap_pyfunction!(calibrate, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add_function(wrap_pyfunction!(sweep, m)?)?;
    Ok(())
}
