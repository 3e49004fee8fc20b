//! Python bindings for the conservation-law engine.
//!
//! Functions mirror the CLI subcommands and return the same versioned JSON
//! report envelopes as strings (`json.loads` on the Python side). Model
//! specifications and closure parameters are passed as JSON strings too, so
//! the Python surface stays schema-stable with the CLI:
//!
//! ```python
//! import conslaw_py, json
//! report = json.loads(conslaw_py.count('{"kind": "linear", "widths": [2, 2, 2]}'))
//! assert report["payload"]["closure"]["num_laws"] == 3
//! ```

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use conslaw::flowsim::FlowConfig;
use conslaw::lieclosure::ClosureParams;
use conslaw::models::{self, ModelSpec};
use conslaw::poly::Poly;
use conslaw::report::{run_count, run_find, run_reproduce, run_simulate, run_verify, ReportError};

fn parse_model(model_json: &str) -> PyResult<ModelSpec> {
    serde_json::from_str(model_json).map_err(|e| PyValueError::new_err(format!("model spec: {e}")))
}

fn parse_params(params_json: Option<&str>) -> PyResult<ClosureParams> {
    match params_json {
        None => Ok(ClosureParams::default()),
        Some(text) => serde_json::from_str(text)
            .map_err(|e| PyValueError::new_err(format!("closure params: {e}"))),
    }
}

fn to_py_err(e: ReportError) -> PyErr {
    match &e {
        ReportError::Pool(_) => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn render(report: serde_json::Value) -> String {
    serde_json::to_string(&report).expect("report serializes")
}

/// Count independent conservation laws of a model via Lie-bracket closure.
/// Returns the `count` report envelope as a JSON string.
#[pyfunction]
#[pyo3(signature = (model_json, params_json=None))]
fn count(model_json: &str, params_json: Option<&str>) -> PyResult<String> {
    let spec = parse_model(model_json)?;
    let params = parse_params(params_json)?;
    let run = run_count(&spec, &params).map_err(to_py_err)?;
    Ok(render(run.to_report()))
}

/// Solve for a basis of polynomial conservation laws of total degree
/// `max_degree` or less. Returns the `find` report envelope as JSON.
#[pyfunction]
#[pyo3(signature = (model_json, max_degree=2, params_json=None))]
fn find(model_json: &str, max_degree: u32, params_json: Option<&str>) -> PyResult<String> {
    let spec = parse_model(model_json)?;
    let params = parse_params(params_json)?;
    let run = run_find(&spec, &params, max_degree).map_err(to_py_err)?;
    Ok(render(run.to_report()))
}

/// Check symbolically whether each candidate polynomial (in variables
/// t1..tD) is conserved. Returns the `verify` report envelope as JSON.
#[pyfunction]
fn verify(model_json: &str, laws: Vec<String>) -> PyResult<String> {
    let spec = parse_model(model_json)?;
    spec.validate()
        .map_err(|e| PyValueError::new_err(e.to_string()))?;
    let dim = spec.num_params();
    let mut candidates = Vec::with_capacity(laws.len());
    for text in &laws {
        let poly = Poly::parse(text, dim, "t")
            .map_err(|e| PyValueError::new_err(format!("law '{text}': {e}")))?;
        candidates.push((text.clone(), poly));
    }
    let run = run_verify(&spec, &candidates).map_err(to_py_err)?;
    Ok(render(run.to_report()))
}

/// Integrate gradient flow for a flow configuration (same JSON schema as the
/// CLI's `--flow` file) and report energies, activation flips, and the drift
/// of each closed-form law. Returns the `simulate` report envelope as JSON.
#[pyfunction]
fn simulate(flow_json: &str) -> PyResult<String> {
    let config: FlowConfig = serde_json::from_str(flow_json)
        .map_err(|e| PyValueError::new_err(format!("flow config: {e}")))?;
    let run = run_simulate(&config).map_err(to_py_err)?;
    Ok(render(run.to_report()))
}

/// Run the ten seeded benchmark architectures and compare computed law
/// counts with closed-form predictions. Returns the `reproduce` report
/// envelope as JSON.
#[pyfunction]
#[pyo3(signature = (seed=0, jobs=None))]
fn reproduce(seed: u64, jobs: Option<usize>) -> PyResult<String> {
    let run = run_reproduce(seed, jobs).map_err(to_py_err)?;
    Ok(render(run.to_report()))
}

/// Closed-form conservation laws of a model family, rendered in t1..tD.
#[pyfunction]
fn known_laws(model_json: &str) -> PyResult<Vec<String>> {
    let spec = parse_model(model_json)?;
    let laws = models::known_laws(&spec).map_err(|e| PyValueError::new_err(e.to_string()))?;
    Ok(laws.iter().map(|p| p.render("t")).collect())
}

/// The reparametrization map of a model, one rendered polynomial per
/// component, in the flattened parameter variables t1..tD.
#[pyfunction]
fn reparametrization(model_json: &str) -> PyResult<Vec<String>> {
    let spec = parse_model(model_json)?;
    spec.validate()
        .map_err(|e| PyValueError::new_err(e.to_string()))?;
    let phi = models::build_phi(&spec).map_err(|e| PyValueError::new_err(e.to_string()))?;
    Ok(phi.components().iter().map(|p| p.render("t")).collect())
}

/// Names and index ranges of the flattened parameter layout.
#[pyfunction]
fn layout(model_json: &str) -> PyResult<Vec<String>> {
    let spec = parse_model(model_json)?;
    spec.validate()
        .map_err(|e| PyValueError::new_err(e.to_string()))?;
    Ok(spec.layout().describe())
}

#[pymodule]
fn conslaw_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(count, m)?)?;
    m.add_function(wrap_pyfunction!(find, m)?)?;
    m.add_function(wrap_pyfunction!(verify, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(reproduce, m)?)?;
    m.add_function(wrap_pyfunction!(known_laws, m)?)?;
    m.add_function(wrap_pyfunction!(reparametrization, m)?)?;
    m.add_function(wrap_pyfunction!(layout, m)?)?;
    m.add("SCHEMA_VERSION", conslaw::report::SCHEMA_VERSION)?;
    Ok(())
}
