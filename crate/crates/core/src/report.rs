//! Run orchestration and machine-readable reports.
//!
//! Every CLI subcommand is backed by a `run_*` function here that returns a
//! plain result struct; `to_report()` wraps it into the versioned JSON
//! envelope
//!
//! ```json
//! {"schema_version": 1, "version": "...", "command": "...",
//!  "config": {...}, "payload": {...}}
//! ```
//!
//! Reports are byte-deterministic for a fixed configuration: object keys are
//! emitted in sorted order, floats use shortest round-trip formatting, and
//! wall-clock timing is deliberately excluded (the CLI prints elapsed time on
//! the human-readable channel only).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};
use thiserror::Error;

use crate::flowsim::{
    conservation_drift, energy, simulate, DriftStats, FlowConfig, FlowError, Trajectory,
};
use crate::lawfinder::{
    find_polynomial_laws, independence_report, IndependenceReport, LawFinderError,
};
use crate::lieclosure::{
    close_over_points, sample_distinct_points, ClosureError, ClosureParams, ClosureResult,
    StopReason,
};
use crate::models::{
    build_phi, derive_seed, known_laws, predicted_law_count, ModelError, ModelKind, ModelSpec,
};
use crate::poly::{Poly, PolyError};

pub const SCHEMA_VERSION: u32 = 1;

/// Process exit codes shared by the CLI and the integration tests.
pub mod exit {
    pub const OK: i32 = 0;
    /// `verify` found a candidate that is not conserved.
    pub const VERIFY_FAILED: i32 = 1;
    /// Closure dimensions stagnated but disagree across sample points.
    pub const DIM_DISAGREEMENT: i32 = 2;
    /// An iteration, degree, ansatz, or sampling budget was exhausted.
    pub const RESOURCE_CAP: i32 = 3;
    /// `reproduce` found a row whose computed count differs from the
    /// closed-form prediction.
    pub const REPRODUCE_MISMATCH: i32 = 4;
    /// Command-line usage error.
    pub const USAGE: i32 = 64;
    /// Unparsable or inconsistent user input (models, laws, configs).
    pub const INVALID_INPUT: i32 = 65;
    /// File could not be read or written.
    pub const IO: i32 = 66;
    /// Unexpected internal failure.
    pub const INTERNAL: i32 = 70;
}

#[derive(Debug, Error)]
pub enum ReportError {
    #[error(transparent)]
    Closure(#[from] ClosureError),
    #[error(transparent)]
    LawFinder(#[from] LawFinderError),
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Poly(#[from] PolyError),
    #[error("thread pool: {0}")]
    Pool(String),
}

impl ReportError {
    pub fn exit_code(&self) -> i32 {
        match self {
            ReportError::LawFinder(LawFinderError::AnsatzTooLarge { .. }) => exit::RESOURCE_CAP,
            ReportError::Closure(ClosureError::NotEnoughPoints { .. }) => exit::RESOURCE_CAP,
            ReportError::Closure(ClosureError::Model(ModelError::SampleFailed { .. })) => {
                exit::RESOURCE_CAP
            }
            ReportError::Model(ModelError::SampleFailed { .. }) => exit::RESOURCE_CAP,
            ReportError::Pool(_) => exit::INTERNAL,
            _ => exit::INVALID_INPUT,
        }
    }
}

/// Exit code expressing how a closure run ended.
pub fn closure_exit_code(result: &ClosureResult) -> i32 {
    match result.stop_reason {
        StopReason::Stagnated => exit::OK,
        StopReason::DimDisagreement => exit::DIM_DISAGREEMENT,
        StopReason::MaxIterations | StopReason::DegreeCapExceeded => exit::RESOURCE_CAP,
    }
}

fn report_json<C: Serialize, P: Serialize>(command: &str, config: &C, payload: &P) -> Value {
    json!({
        "schema_version": SCHEMA_VERSION,
        "version": env!("CARGO_PKG_VERSION"),
        "command": command,
        "config": config,
        "payload": payload,
    })
}

// ---------------------------------------------------------------------------
// count

#[derive(Clone, Debug, Serialize)]
pub struct CountRun {
    pub model: ModelSpec,
    pub params: ClosureParams,
    pub closure: ClosureResult,
    /// Closed-form prediction evaluated at the first sample point, when the
    /// family has one.
    pub predicted_num_laws: Option<usize>,
    pub layout: Vec<String>,
}

pub fn run_count(spec: &ModelSpec, params: &ClosureParams) -> Result<CountRun, ReportError> {
    spec.validate()?;
    let phi = build_phi(spec)?;
    let points: Vec<Vec<i64>> = sample_distinct_points(spec, params)?
        .into_iter()
        .map(|gp| gp.theta)
        .collect();
    let closure = close_over_points(&phi, &points, params);
    let predicted_num_laws = predicted_law_count(spec, &points[0]);
    Ok(CountRun {
        model: spec.clone(),
        params: params.clone(),
        closure,
        predicted_num_laws,
        layout: spec.layout().describe(),
    })
}

impl CountRun {
    pub fn exit_code(&self) -> i32 {
        closure_exit_code(&self.closure)
    }

    pub fn to_report(&self) -> Value {
        report_json(
            "count",
            &json!({"model": self.model, "params": self.params}),
            &json!({
                "closure": self.closure,
                "predicted_num_laws": self.predicted_num_laws,
                "layout": self.layout,
            }),
        )
    }

    pub fn render_human(&self) -> String {
        let mut out = String::new();
        let c = &self.closure;
        out.push_str(&format!(
            "model: {} (D = {}, d = {})\n",
            self.model.arch_key(),
            c.ambient_dim,
            c.output_dim
        ));
        for line in &self.layout {
            out.push_str(&format!("  {line}\n"));
        }
        out.push_str(&format!(
            "sampled {} generic points with bound {} (seed {})\n",
            c.points.len(),
            self.params.bound,
            self.params.seed
        ));
        out.push_str("dims per iteration:\n");
        for (k, row) in c.dims_per_iteration.iter().enumerate() {
            let dims: Vec<String> = row.iter().map(ToString::to_string).collect();
            out.push_str(&format!("  W_{k}: {}\n", dims.join(" ")));
        }
        out.push_str(&format!("stop: {:?}", c.stop_reason).to_lowercase());
        if let Some(step) = c.stagnation_step {
            out.push_str(&format!(" (stagnation step {step})"));
        }
        out.push('\n');
        out.push_str(&format!("involutive at step 0: {}\n", c.frobenius_at_step0));
        match (c.final_dim, c.num_laws) {
            (Some(fd), Some(n)) => {
                out.push_str(&format!("dim Lie(W)(theta) = {fd}\n"));
                out.push_str(&format!("independent conservation laws: {n}\n"));
            }
            _ => out.push_str("no certified law count (run did not stagnate)\n"),
        }
        if let Some(p) = self.predicted_num_laws {
            out.push_str(&format!("closed-form prediction: {p}\n"));
        }
        out
    }
}

// ---------------------------------------------------------------------------
// find

#[derive(Clone, Debug, Serialize)]
pub struct FindRun {
    pub model: ModelSpec,
    pub params: ClosureParams,
    pub max_degree: u32,
    pub laws: Vec<String>,
    pub degrees: Vec<u32>,
    pub dimension: usize,
    pub ansatz_size: usize,
    pub points: Vec<Vec<i64>>,
    pub independence: IndependenceReport,
}

pub fn run_find(
    spec: &ModelSpec,
    params: &ClosureParams,
    max_degree: u32,
) -> Result<FindRun, ReportError> {
    spec.validate()?;
    let phi = build_phi(spec)?;
    let basis = find_polynomial_laws(&phi, max_degree)?;
    let points: Vec<Vec<i64>> = sample_distinct_points(spec, params)?
        .into_iter()
        .map(|gp| gp.theta)
        .collect();
    let independence = independence_report(&basis.laws, &points);
    Ok(FindRun {
        model: spec.clone(),
        params: params.clone(),
        max_degree,
        laws: basis.rendered("t"),
        degrees: basis.degrees(),
        dimension: basis.dimension(),
        ansatz_size: basis.ansatz_size,
        points,
        independence,
    })
}

impl FindRun {
    pub fn to_report(&self) -> Value {
        report_json(
            "find",
            &json!({"model": self.model, "params": self.params, "max_degree": self.max_degree}),
            &json!({
                "dimension": self.dimension,
                "laws": self.laws,
                "degrees": self.degrees,
                "ansatz_size": self.ansatz_size,
                "points": self.points,
                "independence": self.independence,
            }),
        )
    }

    pub fn render_human(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "model: {} — law space of degree <= {} has dimension {} (ansatz size {})\n",
            self.model.arch_key(),
            self.max_degree,
            self.dimension,
            self.ansatz_size
        ));
        for (law, deg) in self.laws.iter().zip(&self.degrees) {
            out.push_str(&format!("  [deg {deg}] {law}\n"));
        }
        out.push_str(&format!(
            "functionally independent laws at {} sample points: {} (per point: {})\n",
            self.points.len(),
            self.independence.max,
            self.independence
                .per_point
                .iter()
                .map(ToString::to_string)
                .collect::<Vec<_>>()
                .join(" ")
        ));
        out
    }
}

// ---------------------------------------------------------------------------
// verify

#[derive(Clone, Debug, Serialize)]
pub struct LawCheck {
    pub law: String,
    pub conserved: bool,
    /// Rendered nonzero residuals ⟨∇h, ∇φ_i⟩ (empty when conserved).
    pub residuals: Vec<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct VerifyRun {
    pub model: ModelSpec,
    pub results: Vec<LawCheck>,
    pub all_conserved: bool,
}

pub fn run_verify(spec: &ModelSpec, laws: &[(String, Poly)]) -> Result<VerifyRun, ReportError> {
    spec.validate()?;
    let phi = build_phi(spec)?;
    let mut results = Vec::new();
    for (text, poly) in laws {
        let residuals = crate::lawfinder::conservation_residuals(&phi, poly)?;
        let conserved = residuals.iter().all(Poly::is_zero);
        results.push(LawCheck {
            law: text.clone(),
            conserved,
            residuals: if conserved {
                Vec::new()
            } else {
                residuals
                    .iter()
                    .filter(|r| !r.is_zero())
                    .map(|r| r.render("t"))
                    .collect()
            },
        });
    }
    let all_conserved = results.iter().all(|r| r.conserved);
    Ok(VerifyRun {
        model: spec.clone(),
        results,
        all_conserved,
    })
}

impl VerifyRun {
    pub fn exit_code(&self) -> i32 {
        if self.all_conserved {
            exit::OK
        } else {
            exit::VERIFY_FAILED
        }
    }

    pub fn to_report(&self) -> Value {
        let laws: Vec<&str> = self.results.iter().map(|r| r.law.as_str()).collect();
        report_json(
            "verify",
            &json!({"model": self.model, "laws": laws}),
            &json!({"all_conserved": self.all_conserved, "results": self.results}),
        )
    }

    pub fn render_human(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("model: {}\n", self.model.arch_key()));
        for r in &self.results {
            if r.conserved {
                out.push_str(&format!("  OK    {}\n", r.law));
            } else {
                out.push_str(&format!("  FAIL  {}\n", r.law));
                for res in &r.residuals {
                    out.push_str(&format!("        residual: {res}\n"));
                }
            }
        }
        out.push_str(if self.all_conserved {
            "all candidate laws are conserved\n"
        } else {
            "some candidate laws are NOT conserved\n"
        });
        out
    }
}

// ---------------------------------------------------------------------------
// simulate

#[derive(Clone, Debug, Serialize)]
pub struct LawDrift {
    pub law: String,
    #[serde(flatten)]
    pub stats: DriftStats,
}

#[derive(Clone, Debug, Serialize)]
pub struct SimulateRun {
    pub config: FlowConfig,
    #[serde(skip)]
    pub trajectory: Trajectory,
    pub initial_energy: f64,
    pub final_energy: f64,
    pub diverged: bool,
    pub states_recorded: usize,
    pub total_activation_flips: usize,
    pub final_state: Vec<f64>,
    /// Drift of each closed-form known law along the trajectory.
    pub law_drift: Vec<LawDrift>,
}

pub fn run_simulate(config: &FlowConfig) -> Result<SimulateRun, ReportError> {
    let trajectory = simulate(config)?;
    let initial_energy = energy(config, &trajectory.states[0]);
    let final_state = trajectory.states.last().unwrap().clone();
    let final_energy = energy(config, &final_state);
    let law_drift = known_laws(&config.model)?
        .iter()
        .map(|law| LawDrift {
            law: law.render("t"),
            stats: conservation_drift(&trajectory.states, law),
        })
        .collect();
    Ok(SimulateRun {
        config: config.clone(),
        initial_energy,
        final_energy,
        diverged: trajectory.diverged,
        states_recorded: trajectory.states.len(),
        total_activation_flips: trajectory.relu_activation_flips.iter().sum(),
        final_state,
        law_drift,
        trajectory,
    })
}

impl SimulateRun {
    pub fn to_report(&self) -> Value {
        report_json(
            "simulate",
            &self.config,
            &json!({
                "initial_energy": self.initial_energy,
                "final_energy": self.final_energy,
                "diverged": self.diverged,
                "states_recorded": self.states_recorded,
                "total_activation_flips": self.total_activation_flips,
                "final_state": self.final_state,
                "law_drift": self.law_drift,
            }),
        )
    }

    pub fn render_human(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "model: {} — {:?} flow, horizon {}, {} steps\n",
            self.config.model.arch_key(),
            self.config.integrator,
            self.config.horizon,
            self.config.steps
        ));
        out.push_str(&format!(
            "energy: {:.6e} -> {:.6e}\n",
            self.initial_energy, self.final_energy
        ));
        if self.diverged {
            out.push_str(&format!(
                "DIVERGED after {} recorded states\n",
                self.states_recorded
            ));
        }
        out.push_str(&format!(
            "activation flips: {}\n",
            self.total_activation_flips
        ));
        for d in &self.law_drift {
            out.push_str(&format!(
                "  drift {:.3e} (relative {:.3e})  {}\n",
                d.stats.max_abs_drift, d.stats.max_relative_drift, d.law
            ));
        }
        out
    }
}

// ---------------------------------------------------------------------------
// reproduce

/// The ten seeded benchmark architectures: even rows are linear networks of
/// depth 2–3, odd rows two-layer ReLU networks with a seeded bias coin flip;
/// all widths drawn from 2..=4. Returns (model, per-row closure seed) pairs.
pub fn reproduce_models(seed: u64) -> Vec<(ModelSpec, u64)> {
    (0..10u64)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0x5EED_0000 + i));
            let spec = if i % 2 == 0 {
                let q = rng.random_range(2..=3usize);
                let widths = (0..=q).map(|_| rng.random_range(2..=4)).collect();
                ModelSpec::network(ModelKind::Linear, widths)
            } else {
                let widths = (0..3).map(|_| rng.random_range(2..=4)).collect();
                let kind = if rng.random_bool(0.5) {
                    ModelKind::Relu2Bias
                } else {
                    ModelKind::Relu2NoBias
                };
                ModelSpec::network(kind, widths)
            };
            (spec, derive_seed(seed, 0xA0C0_0000 + i))
        })
        .collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct ReproduceRow {
    pub index: usize,
    pub arch: String,
    pub model: ModelSpec,
    pub seed: u64,
    pub predicted_num_laws: Option<usize>,
    pub computed_num_laws: Option<usize>,
    pub stop_reason: StopReason,
    pub matched: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct ReproduceOutcome {
    pub seed: u64,
    pub rows: Vec<ReproduceRow>,
    pub all_match: bool,
}

pub fn run_reproduce(seed: u64, jobs: Option<usize>) -> Result<ReproduceOutcome, ReportError> {
    let work = || -> Result<Vec<ReproduceRow>, ReportError> {
        reproduce_models(seed)
            .into_par_iter()
            .enumerate()
            .map(|(index, (spec, row_seed))| {
                let params = ClosureParams {
                    seed: row_seed,
                    ..ClosureParams::default()
                };
                let points: Vec<Vec<i64>> = sample_distinct_points(&spec, &params)?
                    .into_iter()
                    .map(|gp| gp.theta)
                    .collect();
                let predicted = predicted_law_count(&spec, &points[0]);
                let phi = build_phi(&spec)?;
                let result = close_over_points(&phi, &points, &params);
                let matched = result.num_laws.is_some() && result.num_laws == predicted;
                Ok(ReproduceRow {
                    index,
                    arch: spec.arch_key(),
                    model: spec,
                    seed: row_seed,
                    predicted_num_laws: predicted,
                    computed_num_laws: result.num_laws,
                    stop_reason: result.stop_reason,
                    matched,
                })
            })
            .collect()
    };
    let rows = match jobs {
        Some(j) if j > 0 => rayon::ThreadPoolBuilder::new()
            .num_threads(j)
            .build()
            .map_err(|e| ReportError::Pool(e.to_string()))?
            .install(work),
        _ => work(),
    }?;
    Ok(ReproduceOutcome {
        seed,
        all_match: rows.iter().all(|r| r.matched),
        rows,
    })
}

impl ReproduceOutcome {
    pub fn exit_code(&self) -> i32 {
        if self.all_match {
            exit::OK
        } else {
            exit::REPRODUCE_MISMATCH
        }
    }

    pub fn to_report(&self) -> Value {
        report_json(
            "reproduce",
            &json!({"seed": self.seed}),
            &json!({"all_match": self.all_match, "rows": self.rows}),
        )
    }

    pub fn render_human(&self) -> String {
        let mut out = String::new();
        out.push_str("idx  architecture          predicted  computed  match\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{:<4} {:<21} {:>9} {:>9}  {}\n",
                r.index,
                r.arch,
                r.predicted_num_laws
                    .map_or("-".to_string(), |v| v.to_string()),
                r.computed_num_laws
                    .map_or("-".to_string(), |v| v.to_string()),
                if r.matched { "yes" } else { "NO" }
            ));
        }
        out.push_str(if self.all_match {
            "all computed law counts match the closed-form predictions\n"
        } else {
            "MISMATCH between computed and predicted law counts\n"
        });
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flowsim::{seeded_flow_config, Integrator};
    use crate::poly::Poly;

    fn linear222() -> ModelSpec {
        ModelSpec::network(ModelKind::Linear, vec![2, 2, 2])
    }

    #[test]
    fn count_run_produces_matching_prediction_and_report() {
        let run = run_count(&linear222(), &ClosureParams::default()).unwrap();
        assert_eq!(run.closure.num_laws, Some(3));
        assert_eq!(run.predicted_num_laws, Some(3));
        assert_eq!(run.exit_code(), exit::OK);
        let report = run.to_report();
        assert_eq!(report["schema_version"], 1);
        assert_eq!(report["command"], "count");
        assert_eq!(report["payload"]["closure"]["num_laws"], 3);
        assert_eq!(report["payload"]["closure"]["stop_reason"], "stagnated");
        // Timing must not leak into the machine-readable report.
        assert!(serde_json::to_string(&report)
            .unwrap()
            .find("elapsed")
            .is_none());
        let human = run.render_human();
        assert!(human.contains("independent conservation laws: 3"));
    }

    #[test]
    fn count_exit_codes_follow_stop_reasons() {
        let params = ClosureParams {
            max_iter: 1,
            ..ClosureParams::default()
        };
        let run = run_count(&linear222(), &params).unwrap();
        assert_eq!(run.exit_code(), exit::RESOURCE_CAP);
        let spec = ModelSpec::custom(vec!["t1^9*t2^8".into(), "t1^2*t2".into()], 2);
        let run = run_count(&spec, &ClosureParams::default()).unwrap();
        assert_eq!(run.exit_code(), exit::RESOURCE_CAP);
    }

    #[test]
    fn find_run_reports_basis_and_independence() {
        let spec = ModelSpec::custom(vec!["t1*t2".into()], 2);
        let run = run_find(&spec, &ClosureParams::default(), 2).unwrap();
        assert_eq!(run.laws, ["t1^2 - t2^2"]);
        assert_eq!(run.dimension, 1);
        assert_eq!(run.independence.max, 1);
        let report = run.to_report();
        assert_eq!(report["payload"]["laws"][0], "t1^2 - t2^2");
        assert!(run.render_human().contains("[deg 2] t1^2 - t2^2"));
    }

    #[test]
    fn verify_run_flags_non_laws() {
        let spec = ModelSpec::custom(vec!["t1*t2".into()], 2);
        let good = (
            "t1^2 - t2^2".to_string(),
            Poly::parse("t1^2 - t2^2", 2, "t").unwrap(),
        );
        let bad = ("t1".to_string(), Poly::parse("t1", 2, "t").unwrap());
        let run = run_verify(&spec, std::slice::from_ref(&good)).unwrap();
        assert!(run.all_conserved);
        assert_eq!(run.exit_code(), exit::OK);
        let run = run_verify(&spec, &[good, bad]).unwrap();
        assert!(!run.all_conserved);
        assert_eq!(run.exit_code(), exit::VERIFY_FAILED);
        assert_eq!(run.results[1].residuals, ["t2"]);
        assert!(run.render_human().contains("FAIL  t1"));
    }

    #[test]
    fn simulate_run_tracks_known_law_drift() {
        let cfg = seeded_flow_config(&linear222(), 7, 6, 1.0, 500, Integrator::Rk4).unwrap();
        let run = run_simulate(&cfg).unwrap();
        assert!(!run.diverged);
        assert_eq!(run.law_drift.len(), 3);
        assert!(run
            .law_drift
            .iter()
            .all(|d| d.stats.max_relative_drift < 1e-6));
        assert!(run.final_energy < run.initial_energy);
        let report = run.to_report();
        assert_eq!(report["payload"]["states_recorded"], 501);
        assert!(report["payload"]["law_drift"][0]["max_relative_drift"].is_f64());
    }

    #[test]
    fn reproduce_rows_are_deterministic_and_alternate_families() {
        let a = reproduce_models(0);
        let b = reproduce_models(0);
        assert_eq!(a, b);
        assert_eq!(a.len(), 10);
        for (i, (spec, _)) in a.iter().enumerate() {
            if i % 2 == 0 {
                assert_eq!(spec.kind, ModelKind::Linear);
                assert!(spec.widths.len() == 3 || spec.widths.len() == 4);
            } else {
                assert!(matches!(
                    spec.kind,
                    ModelKind::Relu2Bias | ModelKind::Relu2NoBias
                ));
                assert_eq!(spec.widths.len(), 3);
            }
            assert!(spec.widths.iter().all(|w| (2..=4).contains(w)));
        }
        let c = reproduce_models(1);
        assert_ne!(a, c);
    }

    #[test]
    fn reproduce_run_matches_predictions_on_every_row() {
        let outcome = run_reproduce(0, Some(2)).unwrap();
        assert_eq!(outcome.rows.len(), 10);
        assert!(outcome.all_match, "rows: {:#?}", outcome.rows);
        assert_eq!(outcome.exit_code(), exit::OK);
        let again = run_reproduce(0, None).unwrap();
        assert_eq!(
            serde_json::to_string(&outcome.to_report()).unwrap(),
            serde_json::to_string(&again.to_report()).unwrap()
        );
        assert!(outcome
            .render_human()
            .contains("all computed law counts match"));
    }

    #[test]
    fn error_exit_codes_distinguish_resource_caps_from_bad_input() {
        let spec = ModelSpec::custom(vec!["t1*t2".into()], 2);
        let err = ReportError::from(LawFinderError::AnsatzTooLarge {
            unknowns: 100,
            degree: 9,
            cap: 10,
        });
        assert_eq!(err.exit_code(), exit::RESOURCE_CAP);
        let err =
            run_verify(&spec, &[("t9".into(), Poly::parse("t9", 9, "t").unwrap())]).unwrap_err();
        assert_eq!(err.exit_code(), exit::INVALID_INPUT);
    }
}
