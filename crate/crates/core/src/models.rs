//! Built-in model families: their polynomial reparametrizations φ, variable
//! layouts, certified generic sample points, and the conservation laws known
//! in closed form.
//!
//! Width conventions: `widths = [n_0, …, n_q]` with `n_0` the input dimension
//! and `n_q` the output dimension. Layer `i` carries a weight matrix
//! `A_i ∈ R^{n_i × n_{i−1}}` (stored row-major), plus a bias vector of length
//! `n_i` for the bias variant. θ is the concatenation of the layers in order,
//! biases directly after their layer's matrix.
//!
//! Reparametrizations:
//! * `linear`: φ = A_q ⋯ A_1, all n_q·n_0 entries (degree-q polynomials);
//! * `relu2_nobias` `[m, r, n]`: per hidden neuron j the n·m entries of
//!   u_j v_j⊤ (u_j the j-th column of the output layer, v_j the j-th row of
//!   the input layer), grouped neuron by neuron;
//! * `relu2_bias`: additionally u_j b_j per neuron and the output bias c;
//! * `relu_deep_nobias`: all path products A_1[j1,l]·A_2[j2,j1]⋯A_q[k,j_{q−1}],
//!   ordered lexicographically by (output k, j_{q−1}, …, j_1, input l);
//! * `custom`: caller-supplied polynomial texts in `t1..tD`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exactalg::{rat, RatMatrix, Rational};
use crate::poly::{ParseError, Poly};

/// Maximum resampling attempts before generic-point sampling gives up.
pub const MAX_SAMPLE_ATTEMPTS: u32 = 100;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModelKind {
    #[serde(rename = "linear")]
    Linear,
    #[serde(rename = "relu2_nobias")]
    Relu2NoBias,
    #[serde(rename = "relu2_bias")]
    Relu2Bias,
    #[serde(rename = "relu_deep_nobias")]
    ReluDeepNoBias,
    #[serde(rename = "custom")]
    Custom,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Linear => "linear",
            ModelKind::Relu2NoBias => "relu2_nobias",
            ModelKind::Relu2Bias => "relu2_bias",
            ModelKind::ReluDeepNoBias => "relu_deep_nobias",
            ModelKind::Custom => "custom",
        }
    }

    pub fn parse(s: &str) -> Result<Self, ModelError> {
        match s {
            "linear" => Ok(ModelKind::Linear),
            "relu2_nobias" => Ok(ModelKind::Relu2NoBias),
            "relu2_bias" => Ok(ModelKind::Relu2Bias),
            "relu_deep_nobias" => Ok(ModelKind::ReluDeepNoBias),
            "custom" => Ok(ModelKind::Custom),
            other => Err(ModelError::UnknownKind(other.to_string())),
        }
    }

    fn has_bias(self) -> bool {
        matches!(self, ModelKind::Relu2Bias)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("unknown model kind '{0}'")]
    UnknownKind(String),
    #[error("invalid widths: {0}")]
    InvalidWidths(String),
    #[error("custom models require 'dim'")]
    MissingDim,
    #[error("custom models require at least one 'phi' polynomial")]
    MissingPhi,
    #[error("field '{0}' is only valid for custom models")]
    UnexpectedCustomField(&'static str),
    #[error("phi[{index}]: {source}")]
    PhiParse {
        index: usize,
        #[source]
        source: ParseError,
    },
    #[error("known laws are only defined for network kinds, not custom φ")]
    KnownLawsUnavailable,
    #[error(
        "no certified generic point found after {attempts} attempts (seed {seed}, bound {bound})"
    )]
    SampleFailed {
        attempts: u32,
        seed: u64,
        bound: i64,
    },
}

/// Model description; serializes to/from the JSON schema
/// `{"kind": ..., "widths": [...], "phi": [...], "dim": ...}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kind: ModelKind,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub widths: Vec<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub phi: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
}

impl ModelSpec {
    pub fn network(kind: ModelKind, widths: Vec<usize>) -> Self {
        ModelSpec {
            kind,
            widths,
            phi: Vec::new(),
            dim: None,
        }
    }

    pub fn custom(phi: Vec<String>, dim: usize) -> Self {
        ModelSpec {
            kind: ModelKind::Custom,
            widths: Vec::new(),
            phi,
            dim: Some(dim),
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        match self.kind {
            ModelKind::Custom => {
                if self.dim.is_none() {
                    return Err(ModelError::MissingDim);
                }
                if self.dim == Some(0) {
                    return Err(ModelError::InvalidWidths("dim must be positive".into()));
                }
                if self.phi.is_empty() {
                    return Err(ModelError::MissingPhi);
                }
                if !self.widths.is_empty() {
                    return Err(ModelError::InvalidWidths(
                        "custom models take 'dim', not 'widths'".into(),
                    ));
                }
            }
            kind => {
                if !self.phi.is_empty() {
                    return Err(ModelError::UnexpectedCustomField("phi"));
                }
                if self.dim.is_some() {
                    return Err(ModelError::UnexpectedCustomField("dim"));
                }
                if self.widths.contains(&0) {
                    return Err(ModelError::InvalidWidths("widths must be positive".into()));
                }
                let min_len = match kind {
                    ModelKind::Relu2NoBias | ModelKind::Relu2Bias => 3,
                    ModelKind::ReluDeepNoBias => 3,
                    _ => 2,
                };
                if self.widths.len() < min_len {
                    return Err(ModelError::InvalidWidths(format!(
                        "{} needs at least {} widths, got {}",
                        kind.as_str(),
                        min_len,
                        self.widths.len()
                    )));
                }
                if matches!(kind, ModelKind::Relu2NoBias | ModelKind::Relu2Bias)
                    && self.widths.len() != 3
                {
                    return Err(ModelError::InvalidWidths(format!(
                        "{} takes exactly 3 widths [m, r, n], got {}",
                        kind.as_str(),
                        self.widths.len()
                    )));
                }
            }
        }
        Ok(())
    }

    /// Number of layers q.
    pub fn depth(&self) -> usize {
        self.widths.len().saturating_sub(1)
    }

    /// Total parameter count D.
    pub fn num_params(&self) -> usize {
        self.layout().total()
    }

    /// Short architecture label, e.g. `linear[2,2,2]`.
    pub fn arch_key(&self) -> String {
        if self.kind == ModelKind::Custom {
            format!("custom(dim={})", self.dim.unwrap_or(0))
        } else {
            let widths: Vec<String> = self.widths.iter().map(ToString::to_string).collect();
            format!("{}[{}]", self.kind.as_str(), widths.join(","))
        }
    }

    /// Variable layout of the flattened parameter vector θ.
    pub fn layout(&self) -> VariableLayout {
        let mut entries = Vec::new();
        let mut offset = 0;
        if self.kind == ModelKind::Custom {
            let d = self.dim.unwrap_or(0);
            entries.push(LayoutEntry {
                name: "theta".to_string(),
                rows: d,
                cols: 1,
                offset,
            });
            offset += d;
        } else {
            for i in 1..self.widths.len() {
                let (rows, cols) = (self.widths[i], self.widths[i - 1]);
                entries.push(LayoutEntry {
                    name: format!("layer{i}.weight"),
                    rows,
                    cols,
                    offset,
                });
                offset += rows * cols;
                if self.kind.has_bias() {
                    entries.push(LayoutEntry {
                        name: format!("layer{i}.bias"),
                        rows,
                        cols: 1,
                        offset,
                    });
                    offset += rows;
                }
            }
        }
        VariableLayout {
            entries,
            total: offset,
        }
    }
}

/// Placement of one named parameter block inside the flattened θ.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct LayoutEntry {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub offset: usize,
}

impl LayoutEntry {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Flat variable index of entry (r, c), row-major.
    pub fn index(&self, r: usize, c: usize) -> usize {
        debug_assert!(r < self.rows && c < self.cols);
        self.offset + r * self.cols + c
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct VariableLayout {
    entries: Vec<LayoutEntry>,
    total: usize,
}

impl VariableLayout {
    pub fn total(&self) -> usize {
        self.total
    }

    pub fn entries(&self) -> &[LayoutEntry] {
        &self.entries
    }

    pub fn entry(&self, name: &str) -> &LayoutEntry {
        self.entries
            .iter()
            .find(|e| e.name == name)
            .unwrap_or_else(|| panic!("no layout entry named '{name}'"))
    }

    /// Human-readable mapping of variable ranges to parameter blocks.
    pub fn describe(&self) -> Vec<String> {
        self.entries
            .iter()
            .map(|e| {
                if e.cols == 1 {
                    format!(
                        "t{}..t{}: {} (len {})",
                        e.offset + 1,
                        e.offset + e.len(),
                        e.name,
                        e.rows
                    )
                } else {
                    format!(
                        "t{}..t{}: {} ({}x{}, row-major)",
                        e.offset + 1,
                        e.offset + e.len(),
                        e.name,
                        e.rows,
                        e.cols
                    )
                }
            })
            .collect()
    }
}

/// The reparametrization φ: R^D → R^d as a list of polynomials.
#[derive(Clone, Debug, PartialEq)]
pub struct ReparamMap {
    dim: usize,
    components: Vec<Poly>,
}

impl ReparamMap {
    /// Ambient parameter dimension D.
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Output dimension d.
    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn components(&self) -> &[Poly] {
        &self.components
    }

    pub fn max_degree(&self) -> u32 {
        self.components
            .iter()
            .map(Poly::total_degree)
            .max()
            .unwrap_or(0)
    }
}

/// Symbolic weight matrix of a layout entry: entry (r, c) is the variable
/// `θ_{index(r,c)}`.
fn symbolic_matrix(dim: usize, e: &LayoutEntry) -> Vec<Vec<Poly>> {
    (0..e.rows)
        .map(|r| (0..e.cols).map(|c| Poly::var(dim, e.index(r, c))).collect())
        .collect()
}

fn matrix_product(a: &[Vec<Poly>], b: &[Vec<Poly>]) -> Vec<Vec<Poly>> {
    let (n, k) = (a.len(), b.len());
    let m = b[0].len();
    (0..n)
        .map(|i| {
            (0..m)
                .map(|j| {
                    let mut acc = Poly::zero(a[0][0].dim());
                    for l in 0..k {
                        debug_assert!(l < k && a[i].len() == k);
                        acc = acc.add(&a[i][l].mul(&b[l][j]).expect("uniform dimensions"));
                    }
                    acc
                })
                .collect()
        })
        .collect()
}

/// Build the reparametrization φ for a model.
pub fn build_phi(spec: &ModelSpec) -> Result<ReparamMap, ModelError> {
    spec.validate()?;
    let layout = spec.layout();
    let dim = layout.total();
    let components = match spec.kind {
        ModelKind::Linear => {
            let q = spec.depth();
            let mut prod = symbolic_matrix(dim, layout.entry("layer1.weight"));
            for i in 2..=q {
                let a = symbolic_matrix(dim, layout.entry(&format!("layer{i}.weight")));
                prod = matrix_product(&a, &prod);
            }
            prod.into_iter().flatten().collect()
        }
        ModelKind::Relu2NoBias | ModelKind::Relu2Bias => {
            let (m, r, n) = (spec.widths[0], spec.widths[1], spec.widths[2]);
            let w1 = layout.entry("layer1.weight").clone();
            let w2 = layout.entry("layer2.weight").clone();
            let mut out = Vec::new();
            for j in 0..r {
                for k in 0..n {
                    for l in 0..m {
                        out.push(var_product(dim, &[w2.index(k, j), w1.index(j, l)]));
                    }
                }
                if spec.kind.has_bias() {
                    let b1 = layout.entry("layer1.bias");
                    for k in 0..n {
                        out.push(var_product(dim, &[w2.index(k, j), b1.index(j, 0)]));
                    }
                }
            }
            if spec.kind.has_bias() {
                let b2 = layout.entry("layer2.bias");
                for k in 0..n {
                    out.push(Poly::var(dim, b2.index(k, 0)));
                }
            }
            out
        }
        ModelKind::ReluDeepNoBias => {
            let q = spec.depth();
            let weights: Vec<LayoutEntry> = (1..=q)
                .map(|i| layout.entry(&format!("layer{i}.weight")).clone())
                .collect();
            let mut out = Vec::new();
            // Paths ordered lexicographically by (k, j_{q−1}, …, j_1, l).
            let mut path = vec![0usize; q + 1]; // path[0]=l, path[i]=j_i, path[q]=k
            loop {
                let vars: Vec<usize> = (1..=q)
                    .map(|i| weights[i - 1].index(path[i], path[i - 1]))
                    .collect();
                out.push(var_product(dim, &vars));
                // Advance the multi-index, input index fastest.
                let mut pos = 0;
                loop {
                    path[pos] += 1;
                    if path[pos] < spec.widths[pos] {
                        break;
                    }
                    path[pos] = 0;
                    pos += 1;
                    if pos > q {
                        return Ok(ReparamMap {
                            dim,
                            components: out,
                        });
                    }
                }
            }
        }
        ModelKind::Custom => {
            let d = spec.dim.unwrap();
            spec.phi
                .iter()
                .enumerate()
                .map(|(index, text)| {
                    Poly::parse(text, d, "t")
                        .map_err(|source| ModelError::PhiParse { index, source })
                })
                .collect::<Result<Vec<_>, _>>()?
        }
    };
    Ok(ReparamMap { dim, components })
}

/// Product of distinct variables as a single monomial (repeats accumulate).
fn var_product(dim: usize, vars: &[usize]) -> Poly {
    let mut exps = vec![0u32; dim];
    for &v in vars {
        exps[v] += 1;
    }
    Poly::monomial(dim, &exps, rat(1))
}

/// Genericity certificates, `None` when not applicable for the model kind.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Certificates {
    pub full_rank_stack: Option<bool>,
    pub nonzero_neurons: Option<bool>,
    pub distinct_hyperplanes: Option<bool>,
}

impl Certificates {
    pub fn all_hold(&self) -> bool {
        [
            self.full_rank_stack,
            self.nonzero_neurons,
            self.distinct_hyperplanes,
        ]
        .iter()
        .all(|c| c.unwrap_or(true))
    }
}

/// An integer sample point together with verified genericity certificates.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct GenericPoint {
    pub theta: Vec<i64>,
    pub certificates: Certificates,
    pub attempts: u32,
}

impl GenericPoint {
    pub fn as_rationals(&self) -> Vec<Rational> {
        self.theta.iter().map(|&x| rat(x)).collect()
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Deterministic seed derivation for independent sampling streams.
pub(crate) fn derive_seed(seed: u64, stream: u64) -> u64 {
    splitmix64(seed ^ splitmix64(stream))
}

/// Sample an integer point with coordinates uniform in [−bound, bound]\{0},
/// resampling (up to [`MAX_SAMPLE_ATTEMPTS`] derived seeds) until every
/// applicable certificate is verified. Deterministic given (spec, seed, bound).
pub fn sample_generic_point(
    spec: &ModelSpec,
    seed: u64,
    bound: i64,
) -> Result<GenericPoint, ModelError> {
    spec.validate()?;
    assert!(bound >= 1, "bound must be at least 1");
    let d = spec.num_params();
    for attempt in 0..MAX_SAMPLE_ATTEMPTS {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, u64::from(attempt)));
        let theta: Vec<i64> = (0..d)
            .map(|_| loop {
                let v = rng.random_range(-bound..=bound);
                if v != 0 {
                    break v;
                }
            })
            .collect();
        let certificates = check_certificates(spec, &theta);
        if certificates.all_hold() {
            return Ok(GenericPoint {
                theta,
                certificates,
                attempts: attempt + 1,
            });
        }
    }
    Err(ModelError::SampleFailed {
        attempts: MAX_SAMPLE_ATTEMPTS,
        seed,
        bound,
    })
}

fn entry_rows_i64(theta: &[i64], e: &LayoutEntry) -> Vec<Vec<i64>> {
    (0..e.rows)
        .map(|r| (0..e.cols).map(|c| theta[e.index(r, c)]).collect())
        .collect()
}

/// Verify genericity certificates at a point (never assumed: every flag that
/// is `Some` was actually checked with exact arithmetic).
pub fn check_certificates(spec: &ModelSpec, theta: &[i64]) -> Certificates {
    let layout = spec.layout();
    assert_eq!(theta.len(), layout.total());
    let mut certs = Certificates {
        full_rank_stack: None,
        nonzero_neurons: None,
        distinct_hyperplanes: None,
    };
    match spec.kind {
        ModelKind::Custom => {}
        ModelKind::Linear => {
            if spec.depth() >= 2 {
                certs.full_rank_stack = Some(
                    interface_stack_ranks(spec, theta)
                        .iter()
                        .enumerate()
                        .all(|(i, &rk)| {
                            let n_i = spec.widths[i + 1];
                            let stacked_rows = spec.widths[i] + spec.widths[i + 2];
                            rk == n_i.min(stacked_rows)
                        }),
                );
            }
        }
        ModelKind::Relu2NoBias | ModelKind::Relu2Bias | ModelKind::ReluDeepNoBias => {
            let q = spec.depth();
            let mut nonzero = true;
            for i in 1..q {
                let a_in = layout.entry(&format!("layer{i}.weight"));
                let a_out = layout.entry(&format!("layer{}.weight", i + 1));
                for j in 0..spec.widths[i] {
                    let row_nonzero = (0..a_in.cols).any(|c| theta[a_in.index(j, c)] != 0);
                    let col_nonzero = (0..a_out.rows).any(|r| theta[a_out.index(r, j)] != 0);
                    nonzero &= row_nonzero && col_nonzero;
                }
            }
            certs.nonzero_neurons = Some(nonzero);

            // First-layer hyperplanes must be pairwise distinct. Without
            // biases all hyperplanes pass through the origin, so for input
            // dimension 1 they necessarily coincide and the certificate is
            // not applicable.
            let m = spec.widths[0];
            let with_bias = spec.kind.has_bias();
            if with_bias || m >= 2 {
                let w1 = layout.entry("layer1.weight");
                let rows: Vec<Vec<i64>> = (0..spec.widths[1])
                    .map(|j| {
                        let mut row: Vec<i64> = (0..m).map(|c| theta[w1.index(j, c)]).collect();
                        if with_bias {
                            row.push(theta[layout.entry("layer1.bias").index(j, 0)]);
                        }
                        row
                    })
                    .collect();
                let mut distinct = true;
                for a in 0..rows.len() {
                    for b in a + 1..rows.len() {
                        if proportional(&rows[a], &rows[b]) {
                            distinct = false;
                        }
                    }
                }
                certs.distinct_hyperplanes = Some(distinct);
            }
        }
    }
    certs
}

/// True iff all 2×2 minors of the two stacked vectors vanish.
fn proportional(a: &[i64], b: &[i64]) -> bool {
    for i in 0..a.len() {
        for j in i + 1..a.len() {
            if i128::from(a[i]) * i128::from(b[j]) != i128::from(a[j]) * i128::from(b[i]) {
                return false;
            }
        }
    }
    true
}

/// For linear models: the exact rank of the stacked pair (A_{i+1}; A_i⊤) at
/// each hidden interface i, evaluated at θ.
pub fn interface_stack_ranks(spec: &ModelSpec, theta: &[i64]) -> Vec<usize> {
    assert_eq!(spec.kind, ModelKind::Linear);
    let layout = spec.layout();
    let q = spec.depth();
    (1..q)
        .map(|i| {
            let a_in = entry_rows_i64(theta, layout.entry(&format!("layer{i}.weight")));
            let a_out = entry_rows_i64(theta, layout.entry(&format!("layer{}.weight", i + 1)));
            let mut rows: Vec<Vec<i64>> = a_out;
            for c in 0..a_in[0].len() {
                rows.push(a_in.iter().map(|row| row[c]).collect());
            }
            RatMatrix::from_i64_rows(&rows).rank()
        })
        .collect()
}

/// The number of independent conservation laws predicted in closed form:
/// per-interface Σ rk_i(2n_i+1−rk_i)/2 for linear models (rk_i the exact rank
/// of the sampled interface stack), Σ n_i over hidden interfaces for ReLU
/// models. `None` for custom models.
pub fn predicted_law_count(spec: &ModelSpec, theta: &[i64]) -> Option<usize> {
    match spec.kind {
        ModelKind::Linear => {
            let q = spec.depth();
            if q < 2 {
                return Some(0);
            }
            let ranks = interface_stack_ranks(spec, theta);
            Some(
                ranks
                    .iter()
                    .enumerate()
                    .map(|(i, &rk)| {
                        let n_i = spec.widths[i + 1];
                        rk * (2 * n_i + 1 - rk) / 2
                    })
                    .sum(),
            )
        }
        ModelKind::Relu2NoBias | ModelKind::Relu2Bias | ModelKind::ReluDeepNoBias => {
            Some(spec.widths[1..spec.widths.len() - 1].iter().sum())
        }
        ModelKind::Custom => None,
    }
}

/// Conservation laws known in closed form (balancedness between consecutive
/// layers): for linear models all upper-triangle entries of
/// A_{i+1}⊤A_{i+1} − A_i A_i⊤ per hidden interface, for ReLU models the
/// diagonal only (with b_j² joining the incoming norm when biases exist).
pub fn known_laws(spec: &ModelSpec) -> Result<Vec<Poly>, ModelError> {
    spec.validate()?;
    let layout = spec.layout();
    let dim = layout.total();
    let q = spec.depth();
    match spec.kind {
        ModelKind::Custom => Err(ModelError::KnownLawsUnavailable),
        ModelKind::Linear => {
            let mut laws = Vec::new();
            for i in 1..q {
                let a_in = layout.entry(&format!("layer{i}.weight")).clone();
                let a_out = layout.entry(&format!("layer{}.weight", i + 1)).clone();
                let n_i = spec.widths[i];
                for a in 0..n_i {
                    for b in a..n_i {
                        // (A_{i+1}⊤A_{i+1})[a,b] − (A_i A_i⊤)[a,b]
                        let mut h = Poly::zero(dim);
                        for k in 0..a_out.rows {
                            h = h.add(&var_product(dim, &[a_out.index(k, a), a_out.index(k, b)]));
                        }
                        for l in 0..a_in.cols {
                            h = h.sub(&var_product(dim, &[a_in.index(a, l), a_in.index(b, l)]));
                        }
                        laws.push(h);
                    }
                }
            }
            Ok(laws)
        }
        ModelKind::Relu2NoBias | ModelKind::Relu2Bias | ModelKind::ReluDeepNoBias => {
            let mut laws = Vec::new();
            for i in 1..q {
                let a_in = layout.entry(&format!("layer{i}.weight")).clone();
                let a_out = layout.entry(&format!("layer{}.weight", i + 1)).clone();
                for j in 0..spec.widths[i] {
                    let mut h = Poly::zero(dim);
                    for k in 0..a_out.rows {
                        h = h.add(&var_product(dim, &[a_out.index(k, j), a_out.index(k, j)]));
                    }
                    for l in 0..a_in.cols {
                        h = h.sub(&var_product(dim, &[a_in.index(j, l), a_in.index(j, l)]));
                    }
                    if spec.kind.has_bias() {
                        let b = layout.entry(&format!("layer{i}.bias")).index(j, 0);
                        h = h.sub(&var_product(dim, &[b, b]));
                    }
                    laws.push(h);
                }
            }
            Ok(laws)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(kind: ModelKind, widths: &[usize]) -> ModelSpec {
        ModelSpec::network(kind, widths.to_vec())
    }

    #[test]
    fn parameter_counts_match_closed_forms() {
        assert_eq!(spec(ModelKind::Linear, &[2, 2, 2]).num_params(), 8);
        assert_eq!(
            spec(ModelKind::Linear, &[2, 3, 4, 2]).num_params(),
            6 + 12 + 8
        );
        // (n+m)r and (n+m+1)r + n for the two-layer ReLU variants.
        assert_eq!(spec(ModelKind::Relu2NoBias, &[3, 2, 2]).num_params(), 10);
        assert_eq!(spec(ModelKind::Relu2Bias, &[3, 2, 2]).num_params(), 14);
        assert_eq!(ModelSpec::custom(vec!["t1*t2".into()], 2).num_params(), 2);
    }

    #[test]
    fn layout_places_biases_after_their_layer() {
        let layout = spec(ModelKind::Relu2Bias, &[3, 2, 2]).layout();
        let names: Vec<&str> = layout.entries().iter().map(|e| e.name.as_str()).collect();
        assert_eq!(
            names,
            [
                "layer1.weight",
                "layer1.bias",
                "layer2.weight",
                "layer2.bias"
            ]
        );
        assert_eq!(layout.entry("layer1.bias").offset, 6);
        assert_eq!(layout.entry("layer2.weight").offset, 8);
        let descr = layout.describe();
        assert_eq!(descr[0], "t1..t6: layer1.weight (2x3, row-major)");
        assert_eq!(descr[1], "t7..t8: layer1.bias (len 2)");
    }

    #[test]
    fn linear_phi_matches_entrywise_expansion() {
        // Oracle: φ_{kl} = Σ_j A2[k,j]·A1[j,l], expanded directly from layout
        // indices, independently of the generic matrix-product code.
        let s = spec(ModelKind::Linear, &[2, 2, 2]);
        let phi = build_phi(&s).unwrap();
        assert_eq!(phi.len(), 4);
        assert_eq!(phi.dim(), 8);
        let layout = s.layout();
        let (a1, a2) = (layout.entry("layer1.weight"), layout.entry("layer2.weight"));
        let mut expected = Vec::new();
        for k in 0..2 {
            for l in 0..2 {
                let mut p = Poly::zero(8);
                for j in 0..2 {
                    p = p.add(&var_product(8, &[a2.index(k, j), a1.index(j, l)]));
                }
                expected.push(p);
            }
        }
        assert_eq!(phi.components(), expected.as_slice());
        assert_eq!(phi.max_degree(), 2);
    }

    #[test]
    fn deep_linear_phi_has_degree_q() {
        let phi = build_phi(&spec(ModelKind::Linear, &[2, 2, 2, 2])).unwrap();
        assert_eq!(phi.len(), 4);
        assert_eq!(phi.max_degree(), 3);
        // Each entry is a sum over 4 hidden paths.
        assert_eq!(phi.components()[0].num_terms(), 4);
    }

    #[test]
    fn relu2_nobias_phi_lists_rank_one_blocks() {
        // widths [2,1,1]: θ = (v1, v2, u), φ = (u·v1, u·v2).
        let phi = build_phi(&spec(ModelKind::Relu2NoBias, &[2, 1, 1])).unwrap();
        let texts: Vec<String> = phi.components().iter().map(|p| p.render("t")).collect();
        assert_eq!(texts, ["t1*t3", "t2*t3"]);
    }

    #[test]
    fn relu2_bias_phi_appends_bias_products_and_output_bias() {
        // widths [1,1,1]: θ = (v, b, u, c), φ = (u·v, u·b, c).
        let phi = build_phi(&spec(ModelKind::Relu2Bias, &[1, 1, 1])).unwrap();
        let texts: Vec<String> = phi.components().iter().map(|p| p.render("t")).collect();
        assert_eq!(texts, ["t1*t3", "t2*t3", "t4"]);
    }

    #[test]
    fn deep_relu_with_two_layers_spans_the_relu2_entries() {
        let a = build_phi(&spec(ModelKind::Relu2NoBias, &[2, 2, 2])).unwrap();
        let b = build_phi(&spec(ModelKind::ReluDeepNoBias, &[2, 2, 2])).unwrap();
        let mut ta: Vec<String> = a.components().iter().map(|p| p.render("t")).collect();
        let mut tb: Vec<String> = b.components().iter().map(|p| p.render("t")).collect();
        ta.sort();
        tb.sort();
        assert_eq!(ta, tb);
    }

    #[test]
    fn deep_relu_paths_are_products_along_the_network() {
        // widths [2,2,2,2]: 16 paths, each a degree-3 monomial.
        let phi = build_phi(&spec(ModelKind::ReluDeepNoBias, &[2, 2, 2, 2])).unwrap();
        assert_eq!(phi.len(), 16);
        assert!(phi.components().iter().all(|p| p.num_terms() == 1));
        assert!(phi.components().iter().all(|p| p.total_degree() == 3));
    }

    #[test]
    fn custom_phi_parses_and_reports_errors_with_index() {
        let ok = build_phi(&ModelSpec::custom(vec!["t1*t2".into()], 2)).unwrap();
        assert_eq!(ok.len(), 1);
        let err = build_phi(&ModelSpec::custom(vec!["t1".into(), "t9".into()], 2)).unwrap_err();
        assert!(matches!(err, ModelError::PhiParse { index: 1, .. }));
    }

    #[test]
    fn sampling_is_deterministic_and_certified() {
        let s = spec(ModelKind::Linear, &[2, 2, 2]);
        let p1 = sample_generic_point(&s, 7, 10).unwrap();
        let p2 = sample_generic_point(&s, 7, 10).unwrap();
        assert_eq!(p1, p2);
        assert!(p1.theta.iter().all(|&x| x != 0 && x.abs() <= 10));
        assert_eq!(p1.certificates.full_rank_stack, Some(true));
        let p3 = sample_generic_point(&s, 8, 10).unwrap();
        assert_ne!(p1.theta, p3.theta);
    }

    #[test]
    fn relu_certificates_mark_hyperplanes_not_applicable_for_1d_inputs() {
        let s = spec(ModelKind::Relu2NoBias, &[1, 2, 1]);
        let p = sample_generic_point(&s, 0, 10).unwrap();
        assert_eq!(p.certificates.nonzero_neurons, Some(true));
        assert_eq!(p.certificates.distinct_hyperplanes, None);
        let s = spec(ModelKind::Relu2Bias, &[1, 2, 1]);
        let p = sample_generic_point(&s, 0, 10).unwrap();
        assert_eq!(p.certificates.distinct_hyperplanes, Some(true));
    }

    #[test]
    fn certificate_checks_reject_bad_points() {
        let s = spec(ModelKind::Relu2NoBias, &[2, 2, 1]);
        // Second neuron's input row is proportional to the first.
        let theta = vec![1, 2, 2, 4, 1, 1];
        let c = check_certificates(&s, &theta);
        assert_eq!(c.distinct_hyperplanes, Some(false));
        // Rank-deficient stack for a linear model.
        let s = spec(ModelKind::Linear, &[1, 2, 1]);
        let theta = vec![1, 2, 1, 2]; // A1 = (1,2)ᵀ, A2 = (1,2): stack rank 1 < 2
        let c = check_certificates(&s, &theta);
        assert_eq!(c.full_rank_stack, Some(false));
    }

    #[test]
    fn known_laws_are_orthogonal_to_phi_gradients() {
        for s in [
            spec(ModelKind::Linear, &[2, 2, 2]),
            spec(ModelKind::Linear, &[2, 3, 2, 2]),
            spec(ModelKind::Relu2NoBias, &[3, 2, 2]),
            spec(ModelKind::Relu2Bias, &[2, 2, 2]),
            spec(ModelKind::ReluDeepNoBias, &[2, 2, 2, 2]),
        ] {
            let phi = build_phi(&s).unwrap();
            let laws = known_laws(&s).unwrap();
            assert!(!laws.is_empty());
            for h in &laws {
                for f in phi.components() {
                    let mut inner = Poly::zero(phi.dim());
                    for j in 0..phi.dim() {
                        inner = inner.add(&h.partial(j).mul(&f.partial(j)).unwrap());
                    }
                    assert!(
                        inner.is_zero(),
                        "law {h} not conserved for {}",
                        s.arch_key()
                    );
                }
            }
        }
    }

    #[test]
    fn known_law_counts_follow_balancedness() {
        // Linear: n_i(n_i+1)/2 per hidden interface; ReLU: n_i per interface.
        let laws = known_laws(&spec(ModelKind::Linear, &[2, 2, 2])).unwrap();
        assert_eq!(laws.len(), 3);
        let laws = known_laws(&spec(ModelKind::Linear, &[2, 3, 2, 2])).unwrap();
        assert_eq!(laws.len(), 6 + 3);
        let laws = known_laws(&spec(ModelKind::Relu2NoBias, &[3, 2, 2])).unwrap();
        assert_eq!(laws.len(), 2);
        let laws = known_laws(&spec(ModelKind::ReluDeepNoBias, &[2, 3, 2, 2])).unwrap();
        assert_eq!(laws.len(), 3 + 2);
    }

    #[test]
    fn known_laws_for_small_linear_model_are_the_balancedness_entries() {
        // linear [1,2,1]: Ψ = A2⊤A2 − A1A1⊤ upper triangle.
        let laws = known_laws(&spec(ModelKind::Linear, &[1, 2, 1])).unwrap();
        let texts: Vec<String> = laws.iter().map(|p| p.render("t")).collect();
        assert_eq!(texts, ["-t1^2 + t3^2", "-t1*t2 + t3*t4", "-t2^2 + t4^2"]);
    }

    #[test]
    fn predicted_counts_use_interface_stack_ranks() {
        let s = spec(ModelKind::Linear, &[2, 2, 2]);
        let p = sample_generic_point(&s, 0, 10).unwrap();
        assert_eq!(predicted_law_count(&s, &p.theta), Some(3));
        let s = spec(ModelKind::Linear, &[2, 2, 2, 2]);
        let p = sample_generic_point(&s, 0, 10).unwrap();
        assert_eq!(predicted_law_count(&s, &p.theta), Some(6));
        let s = spec(ModelKind::Relu2Bias, &[3, 4, 2]);
        let p = sample_generic_point(&s, 0, 10).unwrap();
        assert_eq!(predicted_law_count(&s, &p.theta), Some(4));
    }

    #[test]
    fn validation_rejects_malformed_specs() {
        assert!(spec(ModelKind::Linear, &[2]).validate().is_err());
        assert!(spec(ModelKind::Relu2NoBias, &[2, 2, 2, 2])
            .validate()
            .is_err());
        assert!(spec(ModelKind::Linear, &[2, 0, 2]).validate().is_err());
        assert!(ModelSpec::custom(vec![], 3).validate().is_err());
        let mut s = spec(ModelKind::Linear, &[2, 2]);
        s.dim = Some(3);
        assert!(s.validate().is_err());
    }

    #[test]
    fn spec_round_trips_through_json() {
        let s = spec(ModelKind::Relu2Bias, &[3, 2, 2]);
        let json = serde_json::to_string(&s).unwrap();
        assert_eq!(json, r#"{"kind":"relu2_bias","widths":[3,2,2]}"#);
        let back: ModelSpec = serde_json::from_str(&json).unwrap();
        assert_eq!(back, s);
        let c = ModelSpec::custom(vec!["t1*t2".into()], 2);
        let json = serde_json::to_string(&c).unwrap();
        assert_eq!(json, r#"{"kind":"custom","phi":["t1*t2"],"dim":2}"#);
    }
}
