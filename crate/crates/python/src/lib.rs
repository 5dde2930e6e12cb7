//! Python bindings. Structured results cross the boundary as plain dicts and
//! lists built from the same JSON the CLI writes.

use std::sync::Arc;
use std::time::Duration;

use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;
use serde::Serialize;

use steersmc::engine::{self, InferenceConfig, Method};
use steersmc::steering::{self as core_steering, ModelSet};
use steersmc::tasks::{self, ConstraintSpec};
use steersmc::token_model::{self as core_tm, ModelQuery, Tokenizer};

create_exception!(
    steersmc_py,
    SteerError,
    PyException,
    "Typed steersmc error; args are (kind, message)."
);

fn to_py(err: steersmc::Error) -> PyErr {
    SteerError::new_err((err.kind().as_str(), err.to_string()))
}

fn json_to_py<'py>(py: Python<'py>, value: &impl Serialize) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyValueError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

#[pyclass(name = "TokenModel", frozen)]
struct PyTokenModel {
    inner: Arc<core_tm::TokenModel>,
}

#[pymethods]
impl PyTokenModel {
    /// Uniform model over `vocab`; the last entry is EOS.
    #[staticmethod]
    fn uniform(vocab: Vec<String>) -> PyResult<Self> {
        let v = core_tm::Vocabulary::with_trailing_eos(vocab).map_err(to_py)?;
        Ok(Self {
            inner: Arc::new(core_tm::TokenModel::uniform(v)),
        })
    }

    /// Table model from its JSON document.
    #[staticmethod]
    fn load_table(source: &str) -> PyResult<Self> {
        Ok(Self {
            inner: Arc::new(core_tm::TokenModel::load_table(source).map_err(to_py)?),
        })
    }

    #[staticmethod]
    #[pyo3(signature = (corpus, order, smoothing, tokenizer = "char"))]
    fn train_ngram(corpus: &str, order: usize, smoothing: f64, tokenizer: &str) -> PyResult<Self> {
        let tok = match tokenizer {
            "char" => Tokenizer::Char,
            "whitespace" => Tokenizer::Whitespace,
            other => {
                return Err(PyValueError::new_err(format!(
                    "unknown tokenizer {other:?}"
                )))
            }
        };
        Ok(Self {
            inner: Arc::new(
                core_tm::TokenModel::train_ngram(corpus, order, smoothing, tok).map_err(to_py)?,
            ),
        })
    }

    #[getter]
    fn vocab(&self) -> Vec<String> {
        self.inner.vocabulary().tokens().to_vec()
    }

    #[getter]
    fn eos_id(&self) -> u32 {
        self.inner.vocabulary().eos_id()
    }

    #[pyo3(signature = (context, prompt_tag = "proposal", hints = None))]
    fn next_distribution(
        &self,
        context: Vec<u32>,
        prompt_tag: &str,
        hints: Option<Vec<String>>,
    ) -> PyResult<Vec<f64>> {
        let hints = hints.unwrap_or_default();
        self.inner
            .next_distribution(&ModelQuery::new(&context, prompt_tag).with_hints(&hints))
            .map_err(to_py)
    }

    #[pyo3(signature = (prefix, continuation, prompt_tag = "prior"))]
    fn sequence_logprob(
        &self,
        prefix: Vec<u32>,
        continuation: Vec<u32>,
        prompt_tag: &str,
    ) -> PyResult<f64> {
        self.inner
            .sequence_logprob(&prefix, &continuation, prompt_tag)
            .map_err(to_py)
    }

    fn tokenize(&self, text: &str) -> PyResult<Vec<u32>> {
        self.inner.vocabulary().tokenize(text).map_err(to_py)
    }

    fn render(&self, ids: Vec<u32>) -> String {
        self.inner.vocabulary().render(&ids)
    }
}

#[pyclass(name = "SteeringPlan", frozen)]
struct PySteeringPlan {
    inner: core_steering::SteeringPlan,
}

#[pymethods]
impl PySteeringPlan {
    #[staticmethod]
    fn parse(document: &str) -> PyResult<Self> {
        Ok(Self {
            inner: core_steering::parse_plan(document).map_err(to_py)?,
        })
    }

    fn to_json(&self) -> String {
        self.inner.to_document()
    }

    #[getter]
    fn max_tokens(&self) -> usize {
        self.inner.max_tokens
    }

    #[getter]
    fn step_kinds(&self) -> Vec<&'static str> {
        self.inner.steps.iter().map(|s| s.kind_name()).collect()
    }
}

fn models(model: &PyTokenModel, prior: Option<&PyTokenModel>) -> PyResult<ModelSet> {
    match prior {
        None => Ok(ModelSet::single(model.inner.clone())),
        Some(p) => ModelSet::new(model.inner.clone(), p.inner.clone()).map_err(to_py),
    }
}

/// Run a plan and return a dict with `candidates`, `selected_text`,
/// `diagnostics` and `error` (None or `(kind, message)`).
#[pyfunction]
#[pyo3(signature = (plan, model, method = "smc", n_particles = 16, seed = 0, ess_threshold = None,
                    max_steps = 1000, timeout = None, resample_scheme = "multinomial", prior = None))]
#[allow(clippy::too_many_arguments)]
fn run_inference<'py>(
    py: Python<'py>,
    plan: &PySteeringPlan,
    model: &PyTokenModel,
    method: &str,
    n_particles: usize,
    seed: u64,
    ess_threshold: Option<f64>,
    max_steps: usize,
    timeout: Option<f64>,
    resample_scheme: &str,
    prior: Option<&PyTokenModel>,
) -> PyResult<Bound<'py, PyDict>> {
    let method: Method = method
        .parse()
        .map_err(|e: steersmc::Error| PyValueError::new_err(e.to_string()))?;
    let scheme = serde_json::from_value(serde_json::Value::String(resample_scheme.into()))
        .map_err(|_| {
            PyValueError::new_err(format!("unknown resample scheme {resample_scheme:?}"))
        })?;
    let timeout = timeout
        .map(Duration::try_from_secs_f64)
        .transpose()
        .map_err(|e| PyValueError::new_err(e.to_string()))?;
    let config = InferenceConfig {
        ess_threshold,
        max_steps,
        timeout,
        resample_scheme: scheme,
        ..InferenceConfig::new(method, n_particles, seed)
    };
    let models = models(model, prior)?;
    let outcome = py.detach(|| engine::run_inference(&plan.inner, &models, &config));
    let out = PyDict::new(py);
    out.set_item("candidates", json_to_py(py, &outcome.candidates)?)?;
    out.set_item("selected_text", outcome.selected_text())?;
    out.set_item("selected_index", outcome.selected_index)?;
    out.set_item("diagnostics", json_to_py(py, &outcome.diagnostics)?)?;
    out.set_item(
        "error",
        outcome
            .error
            .as_ref()
            .map(|e| (e.kind().as_str(), e.to_string())),
    )?;
    Ok(out)
}

/// Exact target distribution as `(table, z)` where `table` maps token-id
/// tuples to probabilities.
#[pyfunction]
#[pyo3(signature = (plan, model, prior = None))]
fn brute_force_target<'py>(
    py: Python<'py>,
    plan: &PySteeringPlan,
    model: &PyTokenModel,
    prior: Option<&PyTokenModel>,
) -> PyResult<(Bound<'py, PyDict>, f64)> {
    let models = models(model, prior)?;
    let table = py
        .detach(|| tasks::brute_force_target(&plan.inner, &models))
        .map_err(to_py)?;
    let out = PyDict::new(py);
    for (seq, p) in &table.probs {
        out.set_item(pyo3::types::PyTuple::new(py, seq)?, p)?;
    }
    Ok((out, table.z))
}

/// Verify `text` against constraints given as a JSON list.
#[pyfunction]
fn verify<'py>(py: Python<'py>, constraints: &str, text: &str) -> PyResult<Bound<'py, PyAny>> {
    let specs: Vec<ConstraintSpec> =
        serde_json::from_str(constraints).map_err(|e| PyValueError::new_err(e.to_string()))?;
    for (i, c) in specs.iter().enumerate() {
        c.validate(&format!("constraints[{i}]")).map_err(to_py)?;
    }
    json_to_py(py, &tasks::verify(&specs, text))
}

#[pyfunction]
fn weighted_pass_at_1(candidates: Vec<(Option<f64>, bool)>) -> f64 {
    tasks::weighted_pass_at_1(&candidates)
}

#[pyfunction]
fn effective_sample_size(normalized: Vec<f64>) -> f64 {
    engine::effective_sample_size(&normalized)
}

#[pyfunction]
fn generate_task_instances<'py>(
    py: Python<'py>,
    task_type: &str,
    count: usize,
    seed: u64,
) -> PyResult<Bound<'py, PyAny>> {
    json_to_py(
        py,
        &tasks::generate_task_instances(task_type, count, seed).map_err(to_py)?,
    )
}

#[pymodule]
fn steersmc_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("SteerError", m.py().get_type::<SteerError>())?;
    m.add_class::<PyTokenModel>()?;
    m.add_class::<PySteeringPlan>()?;
    m.add_function(wrap_pyfunction!(run_inference, m)?)?;
    m.add_function(wrap_pyfunction!(brute_force_target, m)?)?;
    m.add_function(wrap_pyfunction!(verify, m)?)?;
    m.add_function(wrap_pyfunction!(weighted_pass_at_1, m)?)?;
    m.add_function(wrap_pyfunction!(effective_sample_size, m)?)?;
    m.add_function(wrap_pyfunction!(generate_task_instances, m)?)?;
    Ok(())
}
