//! Numerical gradient-flow simulation used to corroborate the symbolic
//! results: integrate θ̇ = −∇E(θ) for the network families, measure how well
//! candidate conservation laws are preserved along the trajectory, and (for
//! scalar overparametrized linear models) compare the induced dynamics of
//! z = u·v against its closed-form Riemannian flow ż = −M(z)∇f(z).
//!
//! Conventions: squared loss E(θ) = ½ Σ_s ‖f_θ(x_s) − y_s‖²; ReLU hidden
//! activations with σ'(0) = 0 in the backward pass; the output layer is
//! always affine. Integration uses a fixed step dt = horizon/steps with
//! explicit Euler or classical RK4. Every accepted step is recorded; for
//! ReLU models the number of (sample, hidden neuron) activation sign changes
//! between consecutive recorded states is tallied per step.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::models::{LayoutEntry, ModelError, ModelKind, ModelSpec};
use crate::poly::Poly;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Loss {
    Squared,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Integrator {
    Euler,
    Rk4,
}

/// One supervised pair; `x` has the model's input width, `y` its output
/// width.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowConfig {
    pub model: ModelSpec,
    pub loss: Loss,
    pub dataset: Vec<Sample>,
    pub theta_init: Vec<f64>,
    pub horizon: f64,
    pub steps: usize,
    pub integrator: Integrator,
}

#[derive(Debug, Error)]
pub enum FlowError {
    #[error("gradient flow is only defined for network kinds, not '{0}'")]
    UnsupportedModel(String),
    #[error("invalid flow configuration: {0}")]
    BadConfig(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Recorded gradient-flow trajectory. `states.len() == times.len()` and
/// `relu_activation_flips.len() == states.len() − 1` always hold; when
/// `diverged` is set, integration stopped at the last finite state.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub relu_activation_flips: Vec<usize>,
    pub diverged: bool,
}

fn is_relu(kind: ModelKind) -> bool {
    matches!(
        kind,
        ModelKind::Relu2NoBias | ModelKind::Relu2Bias | ModelKind::ReluDeepNoBias
    )
}

/// Per-layer (weight, bias) layout entries in forward order.
fn layers(spec: &ModelSpec) -> Vec<(LayoutEntry, Option<LayoutEntry>)> {
    let layout = spec.layout();
    (1..spec.widths.len())
        .map(|i| {
            let w = layout.entry(&format!("layer{i}.weight")).clone();
            let b = if spec.kind == ModelKind::Relu2Bias {
                Some(layout.entry(&format!("layer{i}.bias")).clone())
            } else {
                None
            };
            (w, b)
        })
        .collect()
}

fn affine(theta: &[f64], w: &LayoutEntry, b: Option<&LayoutEntry>, v: &[f64]) -> Vec<f64> {
    (0..w.rows)
        .map(|r| {
            let mut acc = b.map_or(0.0, |b| theta[b.index(r, 0)]);
            for c in 0..w.cols {
                acc += theta[w.index(r, c)] * v[c];
            }
            acc
        })
        .collect()
}

impl FlowConfig {
    pub fn validate(&self) -> Result<(), FlowError> {
        self.model.validate()?;
        if self.model.kind == ModelKind::Custom {
            return Err(FlowError::UnsupportedModel("custom".into()));
        }
        let d = self.model.num_params();
        if self.theta_init.len() != d {
            return Err(FlowError::BadConfig(format!(
                "theta_init has {} entries, model has {} parameters",
                self.theta_init.len(),
                d
            )));
        }
        if self.dataset.is_empty() {
            return Err(FlowError::BadConfig("dataset is empty".into()));
        }
        let (m, n) = (self.model.widths[0], *self.model.widths.last().unwrap());
        for (s, sample) in self.dataset.iter().enumerate() {
            if sample.x.len() != m || sample.y.len() != n {
                return Err(FlowError::BadConfig(format!(
                    "sample {s} has shape ({}, {}), expected ({m}, {n})",
                    sample.x.len(),
                    sample.y.len()
                )));
            }
        }
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            return Err(FlowError::BadConfig(
                "horizon must be positive and finite".into(),
            ));
        }
        if self.steps == 0 {
            return Err(FlowError::BadConfig("steps must be at least 1".into()));
        }
        Ok(())
    }
}

/// Model output f_θ(x).
pub fn predict(spec: &ModelSpec, theta: &[f64], x: &[f64]) -> Vec<f64> {
    let relu = is_relu(spec.kind);
    let layer_entries = layers(spec);
    let q = layer_entries.len();
    let mut a = x.to_vec();
    for (i, (w, b)) in layer_entries.iter().enumerate() {
        a = affine(theta, w, b.as_ref(), &a);
        if relu && i + 1 < q {
            for v in a.iter_mut() {
                *v = v.max(0.0);
            }
        }
    }
    a
}

/// Squared-loss energy E(θ) = ½ Σ_s ‖f_θ(x_s) − y_s‖².
pub fn energy(config: &FlowConfig, theta: &[f64]) -> f64 {
    let mut total = 0.0;
    for sample in &config.dataset {
        let out = predict(&config.model, theta, &sample.x);
        total += out
            .iter()
            .zip(&sample.y)
            .map(|(o, y)| (o - y) * (o - y))
            .sum::<f64>();
    }
    0.5 * total
}

/// Analytic ∇E(θ) via backpropagation (σ'(0) = 0 at ReLU kinks).
pub fn energy_gradient(config: &FlowConfig, theta: &[f64]) -> Vec<f64> {
    let spec = &config.model;
    let relu = is_relu(spec.kind);
    let layer_entries = layers(spec);
    let q = layer_entries.len();
    let mut grad = vec![0.0; spec.num_params()];
    for sample in &config.dataset {
        // Forward pass, keeping activations and hidden pre-activations.
        let mut acts: Vec<Vec<f64>> = vec![sample.x.clone()];
        let mut preacts: Vec<Vec<f64>> = Vec::with_capacity(q);
        for (i, (w, b)) in layer_entries.iter().enumerate() {
            let z = affine(theta, w, b.as_ref(), &acts[i]);
            let a = if relu && i + 1 < q {
                z.iter().map(|&v| v.max(0.0)).collect()
            } else {
                z.clone()
            };
            preacts.push(z);
            acts.push(a);
        }
        // Backward pass.
        let mut delta: Vec<f64> = acts[q].iter().zip(&sample.y).map(|(o, y)| o - y).collect();
        for i in (0..q).rev() {
            let (w, b) = &layer_entries[i];
            for r in 0..w.rows {
                for c in 0..w.cols {
                    grad[w.index(r, c)] += delta[r] * acts[i][c];
                }
                if let Some(b) = b {
                    grad[b.index(r, 0)] += delta[r];
                }
            }
            if i > 0 {
                let mut prev = vec![0.0; w.cols];
                for c in 0..w.cols {
                    for r in 0..w.rows {
                        prev[c] += theta[w.index(r, c)] * delta[r];
                    }
                    if relu && preacts[i - 1][c] <= 0.0 {
                        prev[c] = 0.0;
                    }
                }
                delta = prev;
            }
        }
    }
    grad
}

/// Hidden activation signs (strictly positive pre-activation) for every
/// dataset sample; empty for models without ReLU.
fn activation_pattern(config: &FlowConfig, theta: &[f64]) -> Vec<bool> {
    let spec = &config.model;
    if !is_relu(spec.kind) {
        return Vec::new();
    }
    let layer_entries = layers(spec);
    let q = layer_entries.len();
    let mut pattern = Vec::new();
    for sample in &config.dataset {
        let mut a = sample.x.clone();
        for (i, (w, b)) in layer_entries.iter().enumerate() {
            let z = affine(theta, w, b.as_ref(), &a);
            if i + 1 < q {
                pattern.extend(z.iter().map(|&v| v > 0.0));
                a = z.into_iter().map(|v| v.max(0.0)).collect();
            }
        }
    }
    pattern
}

/// Integrate θ̇ = −∇E(θ) with a fixed step.
///
/// The per-step flip count tallies activation sign changes across *every*
/// point where the integrator evaluates the gradient (for rk4: the two
/// midpoints and the trial endpoint as well as the accepted states). A
/// trajectory that slides along an activation boundary flickers at stage
/// points without the accepted states ever changing pattern; such runs are
/// non-smooth and must not report zero flips.
pub fn simulate(config: &FlowConfig) -> Result<Trajectory, FlowError> {
    config.validate()?;
    let dt = config.horizon / config.steps as f64;
    let rhs = |theta: &[f64]| -> Vec<f64> {
        energy_gradient(config, theta)
            .into_iter()
            .map(|g| -g)
            .collect()
    };
    let mut times = vec![0.0];
    let mut states = vec![config.theta_init.clone()];
    let mut flips = Vec::new();
    let mut diverged = false;
    let mut pattern = activation_pattern(config, &config.theta_init);
    for k in 1..=config.steps {
        let theta = states.last().unwrap();
        let mut stages: Vec<Vec<f64>> = Vec::new();
        let next = match config.integrator {
            Integrator::Euler => {
                let k1 = rhs(theta);
                theta
                    .iter()
                    .zip(&k1)
                    .map(|(t, k)| t + dt * k)
                    .collect::<Vec<f64>>()
            }
            Integrator::Rk4 => {
                let k1 = rhs(theta);
                let mid1: Vec<f64> = theta
                    .iter()
                    .zip(&k1)
                    .map(|(t, k)| t + 0.5 * dt * k)
                    .collect();
                let k2 = rhs(&mid1);
                let mid2: Vec<f64> = theta
                    .iter()
                    .zip(&k2)
                    .map(|(t, k)| t + 0.5 * dt * k)
                    .collect();
                let k3 = rhs(&mid2);
                let end: Vec<f64> = theta.iter().zip(&k3).map(|(t, k)| t + dt * k).collect();
                let k4 = rhs(&end);
                let next = theta
                    .iter()
                    .enumerate()
                    .map(|(j, t)| t + dt / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]))
                    .collect();
                stages = vec![mid1, mid2, end];
                next
            }
        };
        if next.iter().any(|v| !v.is_finite()) {
            diverged = true;
            break;
        }
        let mut step_flips = 0usize;
        for point in stages.iter().map(Vec::as_slice).chain([next.as_slice()]) {
            let new_pattern = activation_pattern(config, point);
            step_flips += pattern
                .iter()
                .zip(&new_pattern)
                .filter(|(a, b)| a != b)
                .count();
            pattern = new_pattern;
        }
        flips.push(step_flips);
        times.push(k as f64 * dt);
        states.push(next);
    }
    Ok(Trajectory {
        times,
        states,
        relu_activation_flips: flips,
        diverged,
    })
}

/// How well a candidate law h is preserved along recorded states.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DriftStats {
    /// h(θ(0)).
    pub initial_value: f64,
    /// max_k |h(θ_k) − h(θ_0)|.
    pub max_abs_drift: f64,
    /// max_abs_drift / max(1, |h(θ_0)|).
    pub max_relative_drift: f64,
}

pub fn conservation_drift(states: &[Vec<f64>], h: &Poly) -> DriftStats {
    assert!(!states.is_empty());
    let initial = h.eval_f64(&states[0]);
    let max_abs = states
        .iter()
        .map(|s| (h.eval_f64(s) - initial).abs())
        .fold(0.0, f64::max);
    DriftStats {
        initial_value: initial,
        max_abs_drift: max_abs,
        max_relative_drift: max_abs / initial.abs().max(1.0),
    }
}

/// Comparison of the flow induced on z = u·v by a scalar-output linear model
/// `[d, 1, 1]` against the closed-form Riemannian dynamics
/// ż = −M(z)∇f(z), M(z) = ‖z‖_δ·I + ‖z‖_δ⁻¹·zz⊤ with
/// ‖z‖_δ = δ + √(δ² + ‖z‖²) and δ = ½(u(0)² − ‖v(0)‖²).
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RiemannianReport {
    pub delta: f64,
    /// max over interior steps of the relative deviation between the
    /// centered finite difference of z and −M(z)∇f(z).
    pub max_residual: f64,
}

pub fn riemannian_residual(config: &FlowConfig) -> Result<RiemannianReport, FlowError> {
    config.validate()?;
    let spec = &config.model;
    if spec.kind != ModelKind::Linear
        || spec.widths.len() != 3
        || spec.widths[1] != 1
        || spec.widths[2] != 1
    {
        return Err(FlowError::BadConfig(
            "Riemannian comparison needs a linear model with widths [d, 1, 1]".into(),
        ));
    }
    let d = spec.widths[0];
    let traj = simulate(config)?;
    if traj.diverged {
        return Err(FlowError::BadConfig("trajectory diverged".into()));
    }
    // θ = (v ∈ R^d, u): z = u·v.
    let z_of = |theta: &[f64]| -> Vec<f64> {
        let u = theta[d];
        theta[..d].iter().map(|&vi| u * vi).collect()
    };
    let theta0 = &traj.states[0];
    let delta = 0.5 * (theta0[d] * theta0[d] - theta0[..d].iter().map(|v| v * v).sum::<f64>());
    let grad_f = |z: &[f64]| -> Vec<f64> {
        let mut g = vec![0.0; d];
        for sample in &config.dataset {
            let r = z.iter().zip(&sample.x).map(|(a, b)| a * b).sum::<f64>() - sample.y[0];
            for (gi, xi) in g.iter_mut().zip(&sample.x) {
                *gi += r * xi;
            }
        }
        g
    };
    let dt = config.horizon / config.steps as f64;
    let mut max_residual: f64 = 0.0;
    for k in 1..traj.states.len().saturating_sub(1) {
        let z = z_of(&traj.states[k]);
        let z_prev = z_of(&traj.states[k - 1]);
        let z_next = z_of(&traj.states[k + 1]);
        let fd: Vec<f64> = z_next
            .iter()
            .zip(&z_prev)
            .map(|(a, b)| (a - b) / (2.0 * dt))
            .collect();
        let g = grad_f(&z);
        let norm_z = z.iter().map(|v| v * v).sum::<f64>().sqrt();
        let scale = delta + (delta * delta + norm_z * norm_z).sqrt();
        let zg = z.iter().zip(&g).map(|(a, b)| a * b).sum::<f64>();
        let expected: Vec<f64> = if scale == 0.0 {
            // Balanced initialization at z = 0: M(0) vanishes.
            vec![0.0; d]
        } else {
            z.iter()
                .zip(&g)
                .map(|(zi, gi)| -(scale * gi + zg / scale * zi))
                .collect()
        };
        let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let diff: Vec<f64> = fd.iter().zip(&expected).map(|(a, b)| a - b).collect();
        let denom = norm(&fd).max(norm(&expected));
        let residual = if denom == 0.0 {
            0.0
        } else {
            norm(&diff) / denom
        };
        max_residual = max_residual.max(residual);
    }
    Ok(RiemannianReport {
        delta,
        max_residual,
    })
}

/// Deterministic random flow configuration: dataset and initial point drawn
/// uniformly from [−1, 1].
pub fn seeded_flow_config(
    spec: &ModelSpec,
    seed: u64,
    num_samples: usize,
    horizon: f64,
    steps: usize,
    integrator: Integrator,
) -> Result<FlowConfig, FlowError> {
    spec.validate()?;
    if spec.kind == ModelKind::Custom {
        return Err(FlowError::UnsupportedModel("custom".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (m, n) = (spec.widths[0], *spec.widths.last().unwrap());
    let dataset = (0..num_samples)
        .map(|_| Sample {
            x: (0..m).map(|_| rng.random_range(-1.0..=1.0)).collect(),
            y: (0..n).map(|_| rng.random_range(-1.0..=1.0)).collect(),
        })
        .collect();
    let theta_init = (0..spec.num_params())
        .map(|_| rng.random_range(-1.0..=1.0))
        .collect();
    Ok(FlowConfig {
        model: spec.clone(),
        loss: Loss::Squared,
        dataset,
        theta_init,
        horizon,
        steps,
        integrator,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::known_laws;

    fn spec(kind: ModelKind, widths: &[usize]) -> ModelSpec {
        ModelSpec::network(kind, widths.to_vec())
    }

    fn config(kind: ModelKind, widths: &[usize], seed: u64) -> FlowConfig {
        seeded_flow_config(&spec(kind, widths), seed, 6, 1.0, 200, Integrator::Rk4).unwrap()
    }

    #[test]
    fn analytic_gradient_matches_finite_differences() {
        for (kind, widths) in [
            (ModelKind::Linear, vec![2, 2, 2]),
            (ModelKind::Linear, vec![2, 3, 2, 1]),
            (ModelKind::Relu2NoBias, vec![3, 2, 2]),
            (ModelKind::Relu2Bias, vec![2, 2, 1]),
            (ModelKind::ReluDeepNoBias, vec![2, 2, 2, 2]),
        ] {
            let cfg = config(kind, &widths, 17);
            let theta = cfg.theta_init.clone();
            let grad = energy_gradient(&cfg, &theta);
            let h = 1e-6;
            for j in 0..theta.len() {
                let mut plus = theta.clone();
                let mut minus = theta.clone();
                plus[j] += h;
                minus[j] -= h;
                let fd = (energy(&cfg, &plus) - energy(&cfg, &minus)) / (2.0 * h);
                assert!(
                    (grad[j] - fd).abs() <= 1e-5 * (1.0 + fd.abs()),
                    "{kind:?} coordinate {j}: analytic {} vs fd {fd}",
                    grad[j]
                );
            }
        }
    }

    #[test]
    fn exact_interpolation_point_is_stationary() {
        let cfg = FlowConfig {
            model: spec(ModelKind::Linear, &[1, 1, 1]),
            loss: Loss::Squared,
            dataset: vec![Sample {
                x: vec![1.0],
                y: vec![1.0],
            }],
            theta_init: vec![1.0, 1.0],
            horizon: 1.0,
            steps: 50,
            integrator: Integrator::Rk4,
        };
        let traj = simulate(&cfg).unwrap();
        assert!(!traj.diverged);
        for state in &traj.states {
            assert_eq!(state, &vec![1.0, 1.0]);
        }
    }

    #[test]
    fn relu_kink_uses_zero_derivative() {
        // v = 0 puts the hidden neuron exactly at the kink; with σ'(0) = 0
        // both partial derivatives vanish identically.
        let cfg = FlowConfig {
            model: spec(ModelKind::Relu2NoBias, &[1, 1, 1]),
            loss: Loss::Squared,
            dataset: vec![Sample {
                x: vec![1.0],
                y: vec![1.0],
            }],
            theta_init: vec![0.0, 1.0],
            horizon: 1.0,
            steps: 10,
            integrator: Integrator::Euler,
        };
        assert_eq!(energy_gradient(&cfg, &cfg.theta_init), vec![0.0, 0.0]);
    }

    #[test]
    fn energy_decreases_along_flows() {
        for (kind, widths) in [
            (ModelKind::Linear, vec![2, 2, 2]),
            (ModelKind::Relu2NoBias, vec![2, 2, 2]),
            (ModelKind::Relu2Bias, vec![2, 2, 2]),
            (ModelKind::ReluDeepNoBias, vec![2, 2, 2, 2]),
        ] {
            let cfg = config(kind, &widths, 3);
            let traj = simulate(&cfg).unwrap();
            assert!(!traj.diverged);
            let energies: Vec<f64> = traj.states.iter().map(|s| energy(&cfg, s)).collect();
            for w in energies.windows(2) {
                assert!(
                    w[1] <= w[0] + 1e-9,
                    "energy increased: {} -> {}",
                    w[0],
                    w[1]
                );
            }
            assert!(energies.last().unwrap() < energies.first().unwrap());
        }
    }

    /// Observed convergence order from final states at N, 2N, 4N steps.
    fn observed_order(integrator: Integrator, base_steps: usize) -> f64 {
        let finals: Vec<Vec<f64>> = [1, 2, 4]
            .iter()
            .map(|&mult| {
                let cfg = FlowConfig {
                    steps: base_steps * mult,
                    integrator,
                    ..seeded_flow_config(
                        &spec(ModelKind::Linear, &[2, 2, 2]),
                        11,
                        6,
                        0.5,
                        base_steps,
                        integrator,
                    )
                    .unwrap()
                };
                simulate(&cfg).unwrap().states.last().unwrap().clone()
            })
            .collect();
        let dist = |a: &[f64], b: &[f64]| {
            a.iter()
                .zip(b)
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt()
        };
        (dist(&finals[0], &finals[1]) / dist(&finals[1], &finals[2])).log2()
    }

    #[test]
    fn rk4_has_fourth_order_convergence() {
        assert!(observed_order(Integrator::Rk4, 16) >= 3.5);
    }

    #[test]
    fn euler_has_first_order_convergence() {
        let order = observed_order(Integrator::Euler, 64);
        assert!((0.7..=1.3).contains(&order), "observed order {order}");
    }

    #[test]
    fn known_laws_drift_below_tolerance_under_rk4() {
        let s = spec(ModelKind::Linear, &[2, 2, 2]);
        let cfg = seeded_flow_config(&s, 5, 6, 1.0, 2000, Integrator::Rk4).unwrap();
        let traj = simulate(&cfg).unwrap();
        for law in known_laws(&s).unwrap() {
            let drift = conservation_drift(&traj.states, &law);
            assert!(
                drift.max_relative_drift <= 1e-6,
                "law drifted by {}",
                drift.max_relative_drift
            );
        }
    }

    #[test]
    fn non_conserved_quantity_visibly_drifts() {
        let s = spec(ModelKind::Linear, &[2, 2, 2]);
        let cfg = seeded_flow_config(&s, 5, 6, 1.0, 2000, Integrator::Rk4).unwrap();
        let traj = simulate(&cfg).unwrap();
        let coordinate = Poly::var(8, 0);
        let drift = conservation_drift(&traj.states, &coordinate);
        assert!(drift.max_relative_drift > 1e-3);
    }

    #[test]
    fn activation_flips_are_counted() {
        // Start with a barely-active neuron that the target pushes through
        // its kink.
        let cfg = FlowConfig {
            model: spec(ModelKind::Relu2NoBias, &[1, 1, 1]),
            loss: Loss::Squared,
            dataset: vec![Sample {
                x: vec![1.0],
                y: vec![-1.0],
            }],
            theta_init: vec![0.1, 1.0],
            horizon: 4.0,
            steps: 400,
            integrator: Integrator::Rk4,
        };
        let traj = simulate(&cfg).unwrap();
        assert!(!traj.diverged);
        assert_eq!(traj.relu_activation_flips.len(), traj.states.len() - 1);
        assert_eq!(traj.relu_activation_flips.iter().sum::<usize>(), 1);
        // Linear models report no flips.
        let cfg = config(ModelKind::Linear, &[2, 2, 2], 1);
        let traj = simulate(&cfg).unwrap();
        assert!(traj.relu_activation_flips.iter().all(|&f| f == 0));
    }

    #[test]
    fn unstable_explicit_steps_are_reported_as_divergence() {
        let cfg = FlowConfig {
            model: spec(ModelKind::Linear, &[1, 1, 1]),
            loss: Loss::Squared,
            dataset: vec![Sample {
                x: vec![1.0],
                y: vec![5.0],
            }],
            theta_init: vec![2.0, 2.0],
            horizon: 1e6,
            steps: 10,
            integrator: Integrator::Euler,
        };
        let traj = simulate(&cfg).unwrap();
        assert!(traj.diverged);
        assert!(traj.states.len() < 11);
        assert!(traj.states.iter().all(|s| s.iter().all(|v| v.is_finite())));
    }

    #[test]
    fn riemannian_flow_matches_induced_dynamics() {
        let s = spec(ModelKind::Linear, &[2, 1, 1]);
        let cfg = seeded_flow_config(&s, 9, 6, 1.0, 4000, Integrator::Rk4).unwrap();
        let report = riemannian_residual(&cfg).unwrap();
        assert!(
            report.max_residual <= 1e-3,
            "residual {}",
            report.max_residual
        );
    }

    #[test]
    fn riemannian_flow_matches_with_balanced_initialization() {
        // δ = 0: u² = ‖v‖² at t = 0.
        let mut cfg = seeded_flow_config(
            &spec(ModelKind::Linear, &[2, 1, 1]),
            13,
            6,
            1.0,
            4000,
            Integrator::Rk4,
        )
        .unwrap();
        cfg.theta_init = vec![0.6, 0.8, 1.0];
        let report = riemannian_residual(&cfg).unwrap();
        assert_eq!(report.delta, 0.0);
        assert!(
            report.max_residual <= 1e-3,
            "residual {}",
            report.max_residual
        );
    }

    #[test]
    fn riemannian_residual_is_zero_at_a_stationary_zero() {
        // z(0) = 0 with balanced initialization stays at the M(0) = 0
        // degenerate point; the 0/0 guard reports zero residual.
        let mut cfg = seeded_flow_config(
            &spec(ModelKind::Linear, &[2, 1, 1]),
            13,
            4,
            1.0,
            100,
            Integrator::Rk4,
        )
        .unwrap();
        cfg.theta_init = vec![0.0, 0.0, 0.0];
        let report = riemannian_residual(&cfg).unwrap();
        assert_eq!(report.delta, 0.0);
        assert_eq!(report.max_residual, 0.0);
    }

    #[test]
    fn riemannian_comparison_rejects_other_architectures() {
        let cfg = config(ModelKind::Linear, &[2, 2, 2], 0);
        assert!(matches!(
            riemannian_residual(&cfg),
            Err(FlowError::BadConfig(_))
        ));
    }

    #[test]
    fn config_validation_catches_shape_errors() {
        let mut cfg = config(ModelKind::Linear, &[2, 2, 2], 0);
        cfg.theta_init.pop();
        assert!(matches!(cfg.validate(), Err(FlowError::BadConfig(_))));
        let mut cfg = config(ModelKind::Linear, &[2, 2, 2], 0);
        cfg.dataset[0].x.pop();
        assert!(matches!(cfg.validate(), Err(FlowError::BadConfig(_))));
        let mut cfg = config(ModelKind::Linear, &[2, 2, 2], 0);
        cfg.horizon = f64::INFINITY;
        assert!(matches!(cfg.validate(), Err(FlowError::BadConfig(_))));
        let custom = FlowConfig {
            model: ModelSpec::custom(vec!["t1*t2".into()], 2),
            loss: Loss::Squared,
            dataset: vec![Sample {
                x: vec![1.0],
                y: vec![1.0],
            }],
            theta_init: vec![1.0, 1.0],
            horizon: 1.0,
            steps: 1,
            integrator: Integrator::Euler,
        };
        assert!(matches!(
            custom.validate(),
            Err(FlowError::UnsupportedModel(_))
        ));
    }

    #[test]
    fn flow_config_round_trips_through_json() {
        let cfg = config(ModelKind::Relu2Bias, &[2, 2, 1], 21);
        let json = serde_json::to_string(&cfg).unwrap();
        let back: FlowConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn seeded_configs_are_deterministic() {
        let s = spec(ModelKind::Linear, &[2, 2, 2]);
        let a = seeded_flow_config(&s, 4, 3, 1.0, 10, Integrator::Euler).unwrap();
        let b = seeded_flow_config(&s, 4, 3, 1.0, 10, Integrator::Euler).unwrap();
        assert_eq!(a, b);
        let c = seeded_flow_config(&s, 5, 3, 1.0, 10, Integrator::Euler).unwrap();
        assert_ne!(a.theta_init, c.theta_init);
    }
}
