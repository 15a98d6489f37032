//! Python bindings: models, belief updates, perception wrappers,
//! environments, the offline solver and the experiment harness.

use std::sync::Arc;

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use pbp_core::belief;
use pbp_core::envs::{env_step, EnvInstance, EnvSpec};
use pbp_core::harness::{self, ExperimentConfig};
use pbp_core::model::{self as core_model, Belief, ModelSpec, VPomdpModel};
use pbp_core::perception::{self, keyed_rng, PerceptionOutput};
use pbp_core::PbpError;

fn py_err(e: PbpError) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn json_err(e: serde_json::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn to_python<'py>(py: Python<'py>, json: &str) -> PyResult<Bound<'py, PyAny>> {
    py.import("json")?.call_method1("loads", (json,))
}

fn belief_from(b: &[f64]) -> PyResult<Belief> {
    Belief::from_dense(b).map_err(py_err)
}

#[pyclass(name = "Model", frozen)]
struct PyModel {
    inner: Arc<VPomdpModel>,
}

#[pymethods]
impl PyModel {
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let spec: ModelSpec = serde_json::from_str(text).map_err(json_err)?;
        Ok(PyModel {
            inner: Arc::new(VPomdpModel::from_spec(spec).map_err(py_err)?),
        })
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.inner.to_spec()).map_err(json_err)
    }

    #[getter]
    fn n_states(&self) -> usize {
        self.inner.n_states()
    }

    #[getter]
    fn n_actions(&self) -> usize {
        self.inner.n_actions()
    }

    #[getter]
    fn n_vision_classes(&self) -> usize {
        self.inner.n_vision_classes()
    }

    #[getter]
    fn n_nonvision_obs(&self) -> usize {
        self.inner.n_nonvision_obs()
    }

    #[getter]
    fn discount(&self) -> f64 {
        self.inner.discount()
    }

    fn vision_class(&self, s: usize) -> PyResult<usize> {
        if s >= self.inner.n_states() {
            return Err(PyValueError::new_err(format!("state {s} out of range")));
        }
        Ok(self.inner.vision_class(s))
    }

    fn initial_belief(&self) -> Vec<f64> {
        self.inner.initial_belief().to_dense(self.inner.n_states())
    }

    fn propagate(&self, b: Vec<f64>, a: usize) -> PyResult<Vec<f64>> {
        core_model::propagate(&self.inner, &belief_from(&b)?, a).map_err(py_err)
    }

    fn __repr__(&self) -> String {
        format!(
            "Model(states={}, actions={}, vision_classes={})",
            self.inner.n_states(),
            self.inner.n_actions(),
            self.inner.n_vision_classes()
        )
    }
}

/// Perception-based update; returns `(belief, fallback)`.
#[pyfunction]
#[pyo3(signature = (model, b, a, perc_dist, z_nv=None))]
fn pbp_update(model: &PyModel, b: Vec<f64>, a: usize, perc_dist: Vec<f64>, z_nv: Option<usize>) -> PyResult<(Vec<f64>, bool)> {
    let out = belief::pbp_update(&model.inner, &belief_from(&b)?, a, &perc_dist, z_nv).map_err(py_err)?;
    Ok((out.belief.to_dense(model.inner.n_states()), out.fallback))
}

#[pyfunction]
#[pyo3(signature = (model, b, a, perc_dist, z_nv=None))]
fn psrl_update(model: &PyModel, b: Vec<f64>, a: usize, perc_dist: Vec<f64>, z_nv: Option<usize>) -> PyResult<(Vec<f64>, bool)> {
    let out = belief::psrl_update(&model.inner, &belief_from(&b)?, a, &perc_dist, z_nv).map_err(py_err)?;
    Ok((out.belief.to_dense(model.inner.n_states()), out.fallback))
}

/// Bayes filter with a per-state observation likelihood.
#[pyfunction]
fn standard_belief_update(model: &PyModel, b: Vec<f64>, a: usize, obs_prob: Vec<f64>) -> PyResult<Vec<f64>> {
    let out = core_model::standard_belief_update(&model.inner, &belief_from(&b)?, a, &obs_prob).map_err(py_err)?;
    Ok(out.to_dense(model.inner.n_states()))
}

#[pyfunction]
fn multiplicative_pool(d1: Vec<f64>, d2: Vec<f64>) -> PyResult<Vec<f64>> {
    belief::multiplicative_pool(&d1, &d2).map_err(py_err)
}

#[pyfunction]
fn apply_tuq(dist: Vec<f64>, uncertainty: f64, eps: f64) -> PyResult<Vec<f64>> {
    let out = PerceptionOutput::new(dist, uncertainty).map_err(py_err)?;
    Ok(perception::apply_tuq(&out, eps))
}

#[pyfunction]
fn apply_wuq(dist: Vec<f64>, uncertainty: f64) -> PyResult<Vec<f64>> {
    let out = PerceptionOutput::new(dist, uncertainty).map_err(py_err)?;
    Ok(perception::apply_wuq(&out))
}

#[pyfunction]
fn uncertainty_entropy(dist: Vec<f64>) -> f64 {
    perception::uncertainty_entropy(&dist)
}

#[pyfunction]
fn uncertainty_confidence(dist: Vec<f64>) -> f64 {
    perception::uncertainty_confidence(&dist)
}

#[pyclass(name = "Env", frozen)]
struct PyEnv {
    inner: EnvInstance,
}

#[pymethods]
impl PyEnv {
    /// `spec` is a JSON environment spec such as `{"name": "frozen-lake", "size": 4}`.
    #[new]
    #[pyo3(signature = (spec, seed=0))]
    fn new(spec: &str, seed: u64) -> PyResult<Self> {
        let spec: EnvSpec = serde_json::from_str(spec).map_err(json_err)?;
        Ok(PyEnv {
            inner: EnvInstance::with_defaults(spec, seed).map_err(py_err)?,
        })
    }

    #[getter]
    fn label(&self) -> String {
        self.inner.spec.label()
    }

    #[getter]
    fn model(&self) -> PyModel {
        PyModel {
            inner: self.inner.model.clone(),
        }
    }

    #[getter]
    fn horizon(&self) -> usize {
        self.inner.horizon
    }

    fn sample_initial(&self, seed: u64) -> usize {
        self.inner.model.sample_initial(&mut keyed_rng(seed, 0))
    }

    /// One step from `state`; `t` is the number of steps already taken and
    /// `seed` keys the randomness. Returns a dict.
    fn step<'py>(&self, py: Python<'py>, state: usize, action: usize, t: usize, seed: u64) -> PyResult<Bound<'py, PyAny>> {
        let mut rng = keyed_rng(seed, t as u64);
        let out = env_step(&self.inner, state, action, t, &mut rng).map_err(py_err)?;
        let json = serde_json::json!({
            "next_state": out.next_state,
            "obs_id": out.obs_id,
            "z_nv": out.z_nv,
            "reward": out.reward,
            "done": out.done,
        });
        to_python(py, &json.to_string())
    }

    /// Perception output `(dist, uncertainty)` for an image id.
    fn perceive(&self, obs_id: &str) -> PyResult<(Vec<f64>, f64)> {
        let out = self.inner.channel.table.predict(obs_id).map_err(py_err)?;
        Ok((out.dist, out.uncertainty))
    }
}

fn parse_config(config: &str) -> PyResult<ExperimentConfig> {
    let cfg: ExperimentConfig = serde_json::from_str(config).map_err(json_err)?;
    cfg.validate().map_err(py_err)?;
    Ok(cfg)
}

/// Plans for a JSON experiment config and returns the solver summary.
#[pyfunction]
fn solve_hsvi<'py>(py: Python<'py>, config: &str) -> PyResult<Bound<'py, PyAny>> {
    let cfg = parse_config(config)?;
    let json = py
        .detach(|| -> pbp_core::Result<String> {
            let env = harness::build_env(&cfg)?;
            let (pm, up) = harness::planning_setup(&cfg, &env)?;
            let sol = pbp_core::hsvi::solve(&pm, &up, &cfg.hsvi)?;
            Ok(serde_json::json!({
                "lower": sol.lower,
                "upper": sol.upper,
                "iterations": sol.iterations,
                "converged": sol.converged,
                "seconds": sol.seconds,
                "nodes": sol.nodes,
                "alpha_vectors": sol.policy.vectors.len(),
            })
            .to_string())
        })
        .map_err(py_err)?;
    to_python(py, &json)
}

/// Runs a full experiment and returns the result record as a dict.
#[pyfunction]
fn run_experiment<'py>(py: Python<'py>, config: &str) -> PyResult<Bound<'py, PyAny>> {
    let cfg = parse_config(config)?;
    let rec = py.detach(|| harness::run_experiment(&cfg)).map_err(py_err)?;
    to_python(py, &serde_json::to_string(&rec).map_err(json_err)?)
}

/// Noise sweep; returns one record per probability.
#[pyfunction]
fn sweep_noise<'py>(py: Python<'py>, config: &str, probabilities: Vec<f64>) -> PyResult<Bound<'py, PyAny>> {
    let cfg = parse_config(config)?;
    let recs = py.detach(|| harness::sweep_noise(&cfg, &probabilities)).map_err(py_err)?;
    to_python(py, &serde_json::to_string(&recs).map_err(json_err)?)
}

#[pyfunction]
#[pyo3(signature = (seed=0))]
fn run_selftest<'py>(py: Python<'py>, seed: u64) -> PyResult<Bound<'py, PyAny>> {
    let res = py.detach(|| harness::run_selftest(seed)).map_err(py_err)?;
    to_python(py, &serde_json::to_string(&res).map_err(json_err)?)
}

#[pymodule]
pub fn pbp(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyModel>()?;
    m.add_class::<PyEnv>()?;
    m.add_function(wrap_pyfunction!(pbp_update, m)?)?;
    m.add_function(wrap_pyfunction!(psrl_update, m)?)?;
    m.add_function(wrap_pyfunction!(standard_belief_update, m)?)?;
    m.add_function(wrap_pyfunction!(multiplicative_pool, m)?)?;
    m.add_function(wrap_pyfunction!(apply_tuq, m)?)?;
    m.add_function(wrap_pyfunction!(apply_wuq, m)?)?;
    m.add_function(wrap_pyfunction!(uncertainty_entropy, m)?)?;
    m.add_function(wrap_pyfunction!(uncertainty_confidence, m)?)?;
    m.add_function(wrap_pyfunction!(solve_hsvi, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add_function(wrap_pyfunction!(sweep_noise, m)?)?;
    m.add_function(wrap_pyfunction!(run_selftest, m)?)?;
    Ok(())
}
