//! Repeated-interaction models: a system meets a fresh environment copy in
//! every round, evolving under `U = exp(-i H tau)` with
//! `H = H_S ⊗ 1 + 1 ⊗ H_E + lambda H_I`.
//!
//! Composite indices are `i * d_E + mu`: system slow, environment fast.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qlinalg::{
    expm_i_hermitian, gibbs_weights, herm_eig, CMatrix, DensityMatrix, C64, ZERO,
};
use crate::tol::Tolerances;

pub const MODEL_SCHEMA: &str = "qprecision-model/1";

/// System-environment coupling operator, multiplied by `lambda` in `H`.
#[derive(Debug, Clone, PartialEq)]
pub enum Interaction {
    /// `V_S ⊗ V_E`.
    Factored { v_s: CMatrix, v_e: CMatrix },
    /// Arbitrary Hermitian operator on the joint space.
    General(CMatrix),
}

/// Complete description of a repeated-interaction model.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub d_s: usize,
    pub d_e: usize,
    pub h_s: CMatrix,
    /// Diagonal: the environment is measured in its energy basis.
    pub h_e: CMatrix,
    pub interaction: Interaction,
    pub lambda: f64,
    pub beta: f64,
    pub tau: f64,
    pub rounds: usize,
    /// Environment preparation. `None` means the Gibbs weights of `H_E` at
    /// `beta`; anything else switches off the heat bookkeeping.
    pub env_probs: Option<Vec<f64>>,
}

/// Environment energies `eps_mu`, read off the diagonal of `H_E`.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvEnergies {
    pub eps: Vec<f64>,
}

impl ModelSpec {
    /// Checks dimensions, Hermiticity, a diagonal `H_E` and the scalar ranges.
    pub fn validate(&self) -> Result<()> {
        let tol = Tolerances::DEFAULT;
        if self.d_s < 2 || self.d_e < 2 {
            return Err(Error::InvalidModel(format!("d_S = {}, d_E = {}", self.d_s, self.d_e)));
        }
        let d = self.d_s * self.d_e;
        check_square(&self.h_s, self.d_s, "H_S")?;
        check_square(&self.h_e, self.d_e, "H_E")?;
        match &self.interaction {
            Interaction::Factored { v_s, v_e } => {
                check_square(v_s, self.d_s, "V_S")?;
                check_square(v_e, self.d_e, "V_E")?;
            }
            Interaction::General(h_i) => check_square(h_i, d, "H_I")?,
        }
        if !self.h_e.is_diagonal(tol.hermitian) {
            return Err(Error::InvalidModel("H_E is not diagonal".into()));
        }
        if !(self.tau > 0.0) || !self.tau.is_finite() {
            return Err(Error::InvalidModel(format!("tau = {}", self.tau)));
        }
        if self.rounds < 1 {
            return Err(Error::InvalidModel("N must be at least 1".into()));
        }
        if !(self.beta >= 0.0) || !self.beta.is_finite() {
            return Err(Error::InvalidModel(format!("beta = {}", self.beta)));
        }
        if !self.lambda.is_finite() {
            return Err(Error::InvalidModel(format!("lambda = {}", self.lambda)));
        }
        if let Some(p) = &self.env_probs {
            check_probabilities(p, self.d_e)?;
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.d_s * self.d_e
    }

    /// `lambda` times the coupling operator.
    pub fn interaction_hamiltonian(&self) -> CMatrix {
        let h_i = match &self.interaction {
            Interaction::Factored { v_s, v_e } => v_s.kron(v_e),
            Interaction::General(h) => h.clone(),
        };
        h_i.scale_real(self.lambda)
    }

    /// `H_S ⊗ 1 + 1 ⊗ H_E`.
    pub fn free_hamiltonian(&self) -> CMatrix {
        &self.h_s.kron(&CMatrix::identity(self.d_e)) + &CMatrix::identity(self.d_s).kron(&self.h_e)
    }

    pub fn hamiltonian(&self) -> CMatrix {
        &self.free_hamiltonian() + &self.interaction_hamiltonian()
    }

    pub fn env_energies(&self) -> EnvEnergies {
        EnvEnergies { eps: self.h_e.diagonal().iter().map(|z| z.re).collect() }
    }

    /// Environment preparation probabilities `p_mu`.
    pub fn env_probs(&self) -> Vec<f64> {
        match &self.env_probs {
            Some(p) => p.clone(),
            None => gibbs_weights(&self.env_energies().eps, self.beta),
        }
    }

    /// Whether the environment starts thermal, so that `Σ` is heat over temperature.
    pub fn is_thermal_environment(&self) -> bool {
        self.env_probs.is_none()
    }

    pub fn env_state(&self) -> Result<DensityMatrix> {
        DensityMatrix::diagonal(&self.env_probs())
    }

    pub fn with_lambda(&self, lambda: f64) -> Self {
        Self { lambda, ..self.clone() }
    }

    /// Rotates a non-diagonal `H_E` (and the coupling) into its eigenbasis.
    /// Returns a warning when a rotation happened.
    pub fn diagonalize_env(mut self) -> Result<(Self, Option<String>)> {
        if self.h_e.is_diagonal(Tolerances::DEFAULT.hermitian) {
            return Ok((self, None));
        }
        let eig = herm_eig(&self.h_e)?;
        let w = &eig.vectors;
        let wd = w.adjoint();
        self.h_e = CMatrix::diag(&eig.values);
        self.interaction = match self.interaction {
            Interaction::Factored { v_s, v_e } => {
                Interaction::Factored { v_s, v_e: wd.matmul(&v_e).matmul(w) }
            }
            Interaction::General(h) => {
                let big = CMatrix::identity(self.d_s).kron(w);
                Interaction::General(big.adjoint().matmul(&h).matmul(&big))
            }
        };
        let warning = "H_E was not diagonal; the model was rotated into the H_E eigenbasis".to_string();
        Ok((self, Some(warning)))
    }
}

fn check_square(m: &CMatrix, d: usize, name: &str) -> Result<()> {
    if m.rows() != d || m.cols() != d {
        return Err(Error::Dim(format!("{name} is {}x{}, expected {d}x{d}", m.rows(), m.cols())));
    }
    let herr = m.hermiticity_error();
    if herr > Tolerances::DEFAULT.hermitian * m.max_abs().max(1.0) {
        return Err(Error::Hermiticity(herr));
    }
    Ok(())
}

fn check_probabilities(p: &[f64], d: usize) -> Result<()> {
    if p.len() != d {
        return Err(Error::Dim(format!("{} probabilities for {d} outcomes", p.len())));
    }
    let sum: f64 = p.iter().sum();
    if p.iter().any(|&x| !(x >= 0.0)) || (sum - 1.0).abs() > Tolerances::DEFAULT.probability_sum {
        return Err(Error::InvalidModel(format!("not a probability vector: {p:?}")));
    }
    Ok(())
}

/// One interaction round: operators `M_{mu nu}` on the system, labelled by
/// the environment outcomes before (`nu`) and after (`mu`) the interaction.
#[derive(Debug, Clone, PartialEq)]
pub struct KrausSet {
    d_s: usize,
    d_e: usize,
    /// Indexed `mu * d_E + nu`.
    ops: Vec<CMatrix>,
    /// `M_{mu nu} / sqrt(p_nu)`, i.e. `<mu|U|nu>`; zero where `p_nu = 0`
    /// unless built from a unitary.
    blocks: Vec<CMatrix>,
    env_probs: Vec<f64>,
}

impl KrausSet {
    /// Validates shapes, the probability vector and completeness.
    pub fn new(d_s: usize, d_e: usize, ops: Vec<CMatrix>, env_probs: Vec<f64>) -> Result<Self> {
        if ops.len() != d_e * d_e {
            return Err(Error::Dim(format!("{} operators for d_E = {d_e}", ops.len())));
        }
        if ops.iter().any(|m| m.rows() != d_s || m.cols() != d_s) {
            return Err(Error::Dim(format!("Kraus operators must be {d_s}x{d_s}")));
        }
        check_probabilities(&env_probs, d_e)?;
        let blocks = ops
            .iter()
            .enumerate()
            .map(|(k, m)| {
                let p = env_probs[k % d_e];
                if p > 0.0 {
                    m.scale_real(1.0 / p.sqrt())
                } else {
                    CMatrix::zeros(d_s, d_s)
                }
            })
            .collect();
        Self::with_blocks(d_s, d_e, ops, blocks, env_probs)
    }

    fn with_blocks(
        d_s: usize,
        d_e: usize,
        ops: Vec<CMatrix>,
        blocks: Vec<CMatrix>,
        env_probs: Vec<f64>,
    ) -> Result<Self> {
        let k = Self { d_s, d_e, ops, blocks, env_probs };
        let err = k.completeness_error();
        if err > Tolerances::DEFAULT.completeness {
            return Err(Error::Kraus(err));
        }
        Ok(k)
    }

    pub fn d_s(&self) -> usize {
        self.d_s
    }

    pub fn d_e(&self) -> usize {
        self.d_e
    }

    pub fn env_probs(&self) -> &[f64] {
        &self.env_probs
    }

    /// `M_{mu nu}`.
    pub fn op(&self, mu: usize, nu: usize) -> &CMatrix {
        &self.ops[mu * self.d_e + nu]
    }

    /// `<mu|U|nu>`, the Kraus operator without the preparation weight.
    pub fn block(&self, mu: usize, nu: usize) -> &CMatrix {
        &self.blocks[mu * self.d_e + nu]
    }

    /// Iterates `((mu, nu), M_{mu nu})`.
    pub fn iter(&self) -> impl Iterator<Item = ((usize, usize), &CMatrix)> {
        let d_e = self.d_e;
        self.ops.iter().enumerate().map(move |(k, m)| ((k / d_e, k % d_e), m))
    }

    /// `max |sum M^H M - 1|`.
    pub fn completeness_error(&self) -> f64 {
        let mut sum = CMatrix::zeros(self.d_s, self.d_s);
        for m in &self.ops {
            sum += &m.adjoint().matmul(m);
        }
        sum.max_abs_diff(&CMatrix::identity(self.d_s))
    }

    /// `max |sum M M^H - 1|`; zero for unital channels.
    pub fn unitality_error(&self) -> f64 {
        let mut sum = CMatrix::zeros(self.d_s, self.d_s);
        for m in &self.ops {
            sum += &m.matmul(&m.adjoint());
        }
        sum.max_abs_diff(&CMatrix::identity(self.d_s))
    }
}

/// `exp(-i H tau)` on the joint space.
pub fn total_unitary(spec: &ModelSpec) -> Result<CMatrix> {
    spec.validate()?;
    expm_i_hermitian(&spec.hamiltonian(), spec.tau)
}

/// `M_{mu nu} = sqrt(p_nu) <mu|U|nu>` for a joint unitary.
pub fn kraus_from_unitary(u: &CMatrix, d_s: usize, d_e: usize, env_probs: &[f64]) -> Result<KrausSet> {
    if u.rows() != d_s * d_e || !u.is_square() {
        return Err(Error::Dim(format!("unitary is {}x{}, expected {}", u.rows(), u.cols(), d_s * d_e)));
    }
    check_probabilities(env_probs, d_e)?;
    let mut ops = Vec::with_capacity(d_e * d_e);
    let mut blocks = Vec::with_capacity(d_e * d_e);
    for mu in 0..d_e {
        for nu in 0..d_e {
            let b = CMatrix::from_fn(d_s, d_s, |i, j| u[(i * d_e + mu, j * d_e + nu)]);
            ops.push(b.scale_real(env_probs[nu].sqrt()));
            blocks.push(b);
        }
    }
    KrausSet::with_blocks(d_s, d_e, ops, blocks, env_probs.to_vec())
}

pub fn forward_kraus(spec: &ModelSpec) -> Result<KrausSet> {
    let u = total_unitary(spec)?;
    kraus_from_unitary(&u, spec.d_s, spec.d_e, &spec.env_probs())
}

/// Backward set `B_{mu nu} = sqrt(p_nu / p_mu) M_{nu mu}^H`, i.e. the backward
/// process with time reversal taken as complex conjugation in the
/// measurement basis.
pub fn backward_kraus(forward: &KrausSet) -> Result<KrausSet> {
    let p = forward.env_probs();
    if let Some(k) = p.iter().position(|&x| !(x > 0.0)) {
        return Err(Error::Support(k));
    }
    let d_e = forward.d_e();
    let mut ops = Vec::with_capacity(d_e * d_e);
    let mut blocks = Vec::with_capacity(d_e * d_e);
    for mu in 0..d_e {
        for nu in 0..d_e {
            ops.push(forward.op(nu, mu).adjoint().scale_real((p[nu] / p[mu]).sqrt()));
            blocks.push(forward.block(nu, mu).adjoint());
        }
    }
    KrausSet::with_blocks(forward.d_s(), d_e, ops, blocks, p.to_vec())
}

/// `sum M rho M^H` without validation of the result.
pub fn channel_apply_matrix(k: &KrausSet, rho: &CMatrix) -> Result<CMatrix> {
    if rho.rows() != k.d_s() || !rho.is_square() {
        return Err(Error::Dim(format!("state is {}x{}, channel acts on {}", rho.rows(), rho.cols(), k.d_s())));
    }
    let mut out = CMatrix::zeros(k.d_s(), k.d_s());
    for (_, m) in k.iter() {
        out += &m.sandwich(rho);
    }
    Ok(out)
}

pub fn channel_apply(k: &KrausSet, rho: &DensityMatrix) -> Result<DensityMatrix> {
    DensityMatrix::from_numerical(&channel_apply_matrix(k, rho.matrix())?)
}

/// Matrix of the channel on row-major vectorized operators, `sum M ⊗ conj(M)`.
pub fn transfer_matrix(k: &KrausSet) -> CMatrix {
    let d2 = k.d_s() * k.d_s();
    let mut t = CMatrix::zeros(d2, d2);
    for (_, m) in k.iter() {
        t += &m.kron(&m.conj());
    }
    t
}

/// Fixed point of a linear map on `d x d` matrices given by its transfer
/// matrix. The trace condition replaces the equation of the `(0,0)` entry;
/// the smallest singular value of the resulting system measures how well the
/// fixed point is isolated.
pub(crate) fn fixed_point(t: &CMatrix, d: usize) -> Result<DensityMatrix> {
    let d2 = d * d;
    let mut a = t - &CMatrix::identity(d2);
    for c in 0..d2 {
        a[(0, c)] = if c % (d + 1) == 0 { C64::new(1.0, 0.0) } else { ZERO };
    }
    let gap = smallest_singular_value(&a);
    if gap < Tolerances::DEFAULT.stationary_gap {
        return Err(Error::NonUniqueStationary { gap });
    }
    let mut b = vec![ZERO; d2];
    b[0] = C64::new(1.0, 0.0);
    let x = a.solve(&b)?;
    let rho = CMatrix::from_vec(d, d, x)?;
    DensityMatrix::from_numerical(&rho)
}

/// Inverse iteration on `A^H A`; zero when `A` is numerically singular.
fn smallest_singular_value(a: &CMatrix) -> f64 {
    let n = a.rows();
    let ah = a.adjoint();
    let mut x: Vec<C64> = (0..n).map(|i| C64::new(1.0 + 0.1 * i as f64, 0.3)).collect();
    let mut estimate = 0.0;
    for _ in 0..30 {
        let y = match ah.solve(&x).and_then(|y| a.solve(&y)) {
            Ok(y) => y,
            Err(_) => return 0.0,
        };
        let ny = y.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        let nx = x.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if !ny.is_finite() || ny == 0.0 {
            return 0.0;
        }
        // ||(A^H A)^{-1} x|| / ||x|| converges to 1 / sigma_min^2.
        let next = (nx / ny).sqrt();
        x = y.into_iter().map(|z| z / ny).collect();
        if (next - estimate).abs() <= 1e-12 * next {
            return next;
        }
        estimate = next;
    }
    estimate
}

/// Stationary state `rho = E(rho)` of the one-round channel.
pub fn stationary_state(k: &KrausSet) -> Result<DensityMatrix> {
    let rho = fixed_point(&transfer_matrix(k), k.d_s())?;
    let residual = channel_apply_matrix(k, rho.matrix())?.max_abs_diff(rho.matrix());
    if residual > Tolerances::DEFAULT.fixed_point {
        return Err(Error::Consistency(format!("stationary residual {residual:e}")));
    }
    Ok(rho)
}

/// Energy-conserving coupling `g |m, mu><n, nu| + h.c.`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResonantCoupling {
    pub m: usize,
    pub mu: usize,
    pub n: usize,
    pub nu: usize,
    pub g: C64,
}

/// Model with diagonal `H_S`, `H_E` and an interaction that only connects
/// joint levels of equal total energy. Every joint level may share its total
/// energy with at most one other level, and the spectra must be
/// nondegenerate; models of this class produce no coherence and have
/// vanishing forward-backward asymmetry.
pub fn thermal_operation_model(
    epsilon_s: &[f64],
    epsilon_e: &[f64],
    couplings: &[ResonantCoupling],
    tau: f64,
    beta: f64,
) -> Result<ModelSpec> {
    let tol = Tolerances::DEFAULT.resonance;
    for (name, eps) in [("system", epsilon_s), ("environment", epsilon_e)] {
        for i in 0..eps.len() {
            for j in i + 1..eps.len() {
                if (eps[i] - eps[j]).abs() <= tol {
                    return Err(Error::Degeneracy(format!("{name} levels {i} and {j}")));
                }
            }
        }
    }
    let (d_s, d_e) = (epsilon_s.len(), epsilon_e.len());
    let total = |i: usize, a: usize| epsilon_s[i] + epsilon_e[a];
    for i in 0..d_s {
        for a in 0..d_e {
            let shared = (0..d_s)
                .flat_map(|j| (0..d_e).map(move |b| (j, b)))
                .filter(|&(j, b)| (total(i, a) - total(j, b)).abs() <= tol)
                .count();
            if shared > 2 {
                return Err(Error::Degeneracy(format!(
                    "{shared} joint levels share the total energy of ({i}, {a})"
                )));
            }
        }
    }
    let mut used = vec![false; d_s * d_e];
    let mut h_i = CMatrix::zeros(d_s * d_e, d_s * d_e);
    for c in couplings {
        if c.m >= d_s || c.n >= d_s || c.mu >= d_e || c.nu >= d_e {
            return Err(Error::Dim(format!("coupling {c:?} out of range")));
        }
        let (a, b) = (c.m * d_e + c.mu, c.n * d_e + c.nu);
        if a == b {
            return Err(Error::Resonance(format!("coupling of ({}, {}) to itself", c.m, c.mu)));
        }
        let mismatch = total(c.m, c.mu) - total(c.n, c.nu);
        if mismatch.abs() > tol {
            return Err(Error::Resonance(format!(
                "({}, {}) <-> ({}, {}) differ by {mismatch}",
                c.m, c.mu, c.n, c.nu
            )));
        }
        if used[a] || used[b] {
            return Err(Error::InvalidModel(format!("level in {c:?} is coupled twice")));
        }
        used[a] = true;
        used[b] = true;
        h_i[(a, b)] += c.g;
        h_i[(b, a)] += c.g.conj();
    }
    let spec = ModelSpec {
        d_s,
        d_e,
        h_s: CMatrix::diag(epsilon_s),
        h_e: CMatrix::diag(epsilon_e),
        interaction: Interaction::General(h_i),
        lambda: 1.0,
        beta,
        tau,
        rounds: 1,
        env_probs: None,
    };
    spec.validate()?;
    Ok(spec)
}

#[derive(Serialize, Deserialize)]
struct Dims {
    #[serde(rename = "d_S")]
    d_s: usize,
    #[serde(rename = "d_E")]
    d_e: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    schema: String,
    dims: Dims,
    #[serde(rename = "H_S")]
    h_s: CMatrix,
    #[serde(rename = "H_E")]
    h_e: CMatrix,
    #[serde(rename = "V_S", default, skip_serializing_if = "Option::is_none")]
    v_s: Option<CMatrix>,
    #[serde(rename = "V_E", default, skip_serializing_if = "Option::is_none")]
    v_e: Option<CMatrix>,
    #[serde(rename = "H_I", default, skip_serializing_if = "Option::is_none")]
    h_i: Option<CMatrix>,
    lambda: f64,
    beta: f64,
    tau: f64,
    #[serde(rename = "N")]
    rounds: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    env_probs: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    initial_state: Option<CMatrix>,
}

/// A model file: the spec, an optional initial system state (which selects
/// the nonstationary protocol), and warnings raised while loading.
#[derive(Debug, Clone)]
pub struct ModelDocument {
    pub spec: ModelSpec,
    pub initial_state: Option<DensityMatrix>,
    pub warnings: Vec<String>,
}

impl ModelDocument {
    pub fn from_json(text: &str) -> Result<Self> {
        let f: ModelFile = serde_json::from_str(text)?;
        if f.schema != MODEL_SCHEMA {
            return Err(Error::InvalidModel(format!("schema {:?}, expected {MODEL_SCHEMA:?}", f.schema)));
        }
        let interaction = match (f.v_s, f.v_e, f.h_i) {
            (Some(v_s), Some(v_e), None) => Interaction::Factored { v_s, v_e },
            (None, None, Some(h)) => Interaction::General(h),
            _ => {
                return Err(Error::InvalidModel("give either V_S and V_E, or H_I".into()));
            }
        };
        let spec = ModelSpec {
            d_s: f.dims.d_s,
            d_e: f.dims.d_e,
            h_s: f.h_s,
            h_e: f.h_e,
            interaction,
            lambda: f.lambda,
            beta: f.beta,
            tau: f.tau,
            rounds: f.rounds,
            env_probs: f.env_probs,
        };
        // Shapes and Hermiticity first, so the rotation sees sane input.
        spec.clone().with_diagonal_placeholder().validate()?;
        let (spec, warning) = spec.diagonalize_env()?;
        spec.validate()?;
        let initial_state = f.initial_state.map(DensityMatrix::new).transpose()?;
        if let Some(rho) = &initial_state {
            if rho.dim() != spec.d_s {
                return Err(Error::Dim(format!("initial state has dimension {}", rho.dim())));
            }
        }
        Ok(Self { spec, initial_state, warnings: warning.into_iter().collect() })
    }

    pub fn to_json(&self) -> Result<String> {
        let s = &self.spec;
        let (v_s, v_e, h_i) = match &s.interaction {
            Interaction::Factored { v_s, v_e } => (Some(v_s.clone()), Some(v_e.clone()), None),
            Interaction::General(h) => (None, None, Some(h.clone())),
        };
        let f = ModelFile {
            schema: MODEL_SCHEMA.into(),
            dims: Dims { d_s: s.d_s, d_e: s.d_e },
            h_s: s.h_s.clone(),
            h_e: s.h_e.clone(),
            v_s,
            v_e,
            h_i,
            lambda: s.lambda,
            beta: s.beta,
            tau: s.tau,
            rounds: s.rounds,
            env_probs: s.env_probs.clone(),
            initial_state: self.initial_state.as_ref().map(|r| r.matrix().clone()),
        };
        Ok(serde_json::to_string_pretty(&f)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

impl ModelSpec {
    /// Copy with `H_E` replaced by its diagonal, for validating everything else.
    fn with_diagonal_placeholder(mut self) -> Self {
        if self.h_e.is_square() && self.h_e.rows() == self.d_e && self.h_e.hermiticity_error() <= 1e-12 {
            let d: Vec<f64> = self.h_e.diagonal().iter().map(|z| z.re).collect();
            self.h_e = CMatrix::diag(&d);
        }
        self
    }
}
