//! Lindblad dynamics: no-jump evolution, jump-unraveled Kraus sets for the
//! forward and backward processes, and the Markovian bound quantities.

use std::path::Path;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::fixed_point;
use crate::qlinalg::random::random_hermitian;
use crate::qlinalg::{herm_eig, kl_divergence, CMatrix, DensityMatrix, C64, ZERO};
use crate::tol::Tolerances;

pub const LINDBLAD_SCHEMA: &str = "qprecision-lindblad/1";

/// Detailed-balance tolerance on `L_k - e^{Δs_k/2} L_{k*}^H`.
const LDB_TOL: f64 = 1e-10;
/// Accepted truncation error of the Taylor no-jump propagator.
const TAYLOR_BUDGET: f64 = 1e-12;
/// Accepted accumulated RK4 local error.
const RK4_BUDGET: f64 = 1e-9;

/// One jump channel. `pair` names the reverse channel; `None` leaves the
/// channel unpaired, which is fine for quantities that never reverse jumps.
#[derive(Debug, Clone, PartialEq)]
pub struct Jump {
    pub op: CMatrix,
    /// Entropy change in the environment, `Δs_k`.
    pub ds: f64,
    pub pair: Option<usize>,
}

/// GKSL generator `-i[H, ρ] + Σ (L ρ L^H - ½{L^H L, ρ})`.
#[derive(Debug, Clone, PartialEq)]
pub struct LindbladSpec {
    pub d_s: usize,
    pub h: CMatrix,
    pub jumps: Vec<Jump>,
}

impl LindbladSpec {
    pub fn new(h: CMatrix, jumps: Vec<Jump>) -> Result<Self> {
        let spec = Self { d_s: h.rows(), h, jumps };
        spec.validate()?;
        Ok(spec)
    }

    /// Shapes, Hermiticity of `H`, and local detailed balance for paired jumps.
    pub fn validate(&self) -> Result<()> {
        let d = self.d_s;
        if d == 0 || self.h.rows() != d || !self.h.is_square() {
            return Err(Error::Dim(format!("H must be {d}x{d}")));
        }
        let herr = self.h.hermiticity_error();
        if herr > Tolerances::DEFAULT.hermitian * self.h.max_abs().max(1.0) {
            return Err(Error::Hermiticity(herr));
        }
        for (k, j) in self.jumps.iter().enumerate() {
            if j.op.rows() != d || j.op.cols() != d {
                return Err(Error::Dim(format!("jump {k} is not {d}x{d}")));
            }
            if !j.ds.is_finite() {
                return Err(Error::InvalidModel(format!("jump {k} has entropy change {}", j.ds)));
            }
            let Some(kp) = j.pair else { continue };
            let partner = self
                .jumps
                .get(kp)
                .ok_or_else(|| Error::InvalidModel(format!("jump {k} paired with missing {kp}")))?;
            if partner.pair != Some(k) {
                return Err(Error::InvalidModel(format!("pairing of jumps {k} and {kp} is not mutual")));
            }
            let scaled = partner.op.adjoint().scale_real((j.ds / 2.0).exp());
            let err = j.op.max_abs_diff(&scaled);
            if err > LDB_TOL {
                return Err(Error::InvalidModel(format!(
                    "jumps {k} and {kp} violate local detailed balance by {err:e}"
                )));
            }
        }
        Ok(())
    }

    pub fn jump_ops(&self) -> Vec<CMatrix> {
        self.jumps.iter().map(|j| j.op.clone()).collect()
    }

    /// `𝖫 = Σ L^H L`.
    pub fn jump_sum(&self) -> CMatrix {
        let mut acc = CMatrix::zeros(self.d_s, self.d_s);
        for j in &self.jumps {
            acc += &j.op.adjoint().matmul(&j.op);
        }
        acc
    }

    /// Row-major vectorized generator. `signflip` replaces `-i[H, ·]` by `+i[H, ·]`.
    pub fn liouvillian(&self, signflip: bool) -> CMatrix {
        let d = self.d_s;
        let id = CMatrix::identity(d);
        let s = if signflip { 1.0 } else { -1.0 };
        let comm = &self.h.kron(&id) - &id.kron(&self.h.transpose());
        let mut l = comm.scale(C64::new(0.0, s));
        for j in &self.jumps {
            let ll = j.op.adjoint().matmul(&j.op);
            l += &j.op.kron(&j.op.conj());
            l += &ll.kron(&id).scale_real(-0.5);
            l += &id.kron(&ll.transpose()).scale_real(-0.5);
        }
        l
    }

    /// Upper estimate of the generator norm used for step selection.
    fn generator_norm(&self) -> f64 {
        2.0 * self.h.norm_1() + 2.0 * self.jumps.iter().map(|j| j.op.norm_1().powi(2)).sum::<f64>()
    }

    pub fn to_json(&self) -> Result<String> {
        let file = LindbladFile {
            schema: LINDBLAD_SCHEMA.to_string(),
            d_s: self.d_s,
            h: self.h.clone(),
            jumps: self.jump_ops(),
            ds: self.jumps.iter().map(|j| j.ds).collect(),
            pairs: self.jumps.iter().map(|j| j.pair).collect(),
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let f: LindbladFile = serde_json::from_str(text)?;
        if f.schema != LINDBLAD_SCHEMA {
            return Err(Error::Config(format!("expected schema {LINDBLAD_SCHEMA}, got {}", f.schema)));
        }
        let k = f.jumps.len();
        if f.ds.len() != k || f.pairs.len() != k {
            return Err(Error::Config(format!("{k} jumps but {} ds and {} pairs", f.ds.len(), f.pairs.len())));
        }
        let jumps = f
            .jumps
            .into_iter()
            .zip(f.ds)
            .zip(f.pairs)
            .map(|((op, ds), pair)| Jump { op, ds, pair })
            .collect();
        let spec = Self { d_s: f.d_s, h: f.h, jumps };
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

#[derive(Serialize, Deserialize)]
struct LindbladFile {
    schema: String,
    #[serde(rename = "d_S")]
    d_s: usize,
    #[serde(rename = "H")]
    h: CMatrix,
    #[serde(rename = "L")]
    jumps: Vec<CMatrix>,
    ds: Vec<f64>,
    pairs: Vec<Option<usize>>,
}

/// Qubit driven by `ω σx / 2` and decaying through `√γ |0><1|`.
pub fn driven_qubit(omega: f64, gamma: f64) -> LindbladSpec {
    let h = CMatrix::pauli_x().scale_real(omega / 2.0);
    let l = CMatrix::from_real(2, 2, &[0.0, gamma.sqrt(), 0.0, 0.0]).expect("2x2");
    LindbladSpec { d_s: 2, h, jumps: vec![Jump { op: l, ds: 0.0, pair: None }] }
}

/// Diagonal `H` with thermal jumps `√w_{mn} |m><n|` between every pair of
/// levels, `w_{mn} = rate · e^{β(ε_n - ε_m)/2}`, so that `Δs = β(ε_n - ε_m)`.
pub fn incoherent(eps: &[f64], beta: f64, rate: f64) -> Result<LindbladSpec> {
    let d = eps.len();
    let mut transitions = Vec::new();
    for n in 0..d {
        for m in 0..d {
            if m != n {
                transitions.push((m, n));
            }
        }
    }
    let jumps = transitions
        .iter()
        .map(|&(m, n)| {
            let ds = beta * (eps[n] - eps[m]);
            let w = rate * (ds / 2.0).exp();
            let op = CMatrix::from_fn(d, d, |i, j| if i == m && j == n { C64::new(w.sqrt(), 0.0) } else { ZERO });
            let pair = transitions.iter().position(|&t| t == (n, m));
            Jump { op, ds, pair }
        })
        .collect();
    LindbladSpec::new(CMatrix::diag(eps), jumps)
}

/// Random Hermitian `H` and `k` unpaired jumps with complex entries in the
/// unit square scaled by `sqrt(rate)`.
pub fn random_lindblad<R: Rng + ?Sized>(rng: &mut R, d: usize, k: usize, rate: f64) -> LindbladSpec {
    let h = random_hermitian(rng, d);
    let jumps = (0..k)
        .map(|_| {
            let op = CMatrix::from_fn(d, d, |_, _| {
                C64::new(rng.random_range(-1.0..=1.0), rng.random_range(-1.0..=1.0)) * rate.sqrt()
            });
            Jump { op, ds: 0.0, pair: None }
        })
        .collect();
    LindbladSpec { d_s: d, h, jumps }
}

/// `H_eff = H - (i/2) 𝖫`.
pub fn effective_hamiltonian(spec: &LindbladSpec) -> CMatrix {
    &spec.h - &spec.jump_sum().scale(C64::new(0.0, 0.5))
}

/// Substeps that keep `||H_eff||_1 T / steps <= 1/2`.
pub fn no_jump_steps(spec: &LindbladSpec, t: f64) -> usize {
    let norm = effective_hamiltonian(spec).norm_1() * t;
    ((2.0 * norm).ceil() as usize).max(1)
}

/// Taylor series of `exp(a)` for `||a||_1 <= 1`, with its remainder bound.
fn taylor_exp(a: &CMatrix) -> (CMatrix, f64) {
    let n = a.rows();
    let norm = a.norm_1();
    let mut term = CMatrix::identity(n);
    let mut sum = CMatrix::identity(n);
    let mut bound = 1.0;
    for k in 1..=40 {
        term = term.matmul(a).scale_real(1.0 / k as f64);
        sum += &term;
        bound *= norm / (k + 1) as f64;
        if bound * norm.exp() < 1e-18 {
            break;
        }
    }
    (sum, bound * norm.exp())
}

/// `exp(-i H_eff T)` as the `steps`-th power of a Taylor-expanded substep.
///
/// Fails with `Accuracy` when a substep exceeds `||H_eff||_1 dt <= 1` or the
/// accumulated truncation bound exceeds `1e-12`.
pub fn no_jump_propagator(spec: &LindbladSpec, t: f64, steps: usize) -> Result<CMatrix> {
    if !(t >= 0.0) || steps == 0 {
        return Err(Error::Domain(format!("no-jump propagator needs T >= 0 and steps > 0, got {t}, {steps}")));
    }
    let a = effective_hamiltonian(spec).scale(C64::new(0.0, -t / steps as f64));
    let norm = a.norm_1();
    if norm > 1.0 {
        return Err(Error::Accuracy(format!("substep norm {norm:.3} exceeds 1; use more steps")));
    }
    let (step, remainder) = taylor_exp(&a);
    let total = remainder * steps as f64;
    if total > TAYLOR_BUDGET {
        return Err(Error::Accuracy(format!("Taylor remainder {total:e}")));
    }
    Ok(step.powi(steps))
}

fn check_state_dim(spec: &LindbladSpec, rho: &DensityMatrix) -> Result<()> {
    if rho.dim() != spec.d_s {
        return Err(Error::Dim(format!("state of dimension {} for d_S = {}", rho.dim(), spec.d_s)));
    }
    Ok(())
}

/// Inactivity `𝒫 = tr(e^{-iH_eff T} ρ e^{iH_eff^H T})`, the no-jump probability.
pub fn inactivity(spec: &LindbladSpec, rho: &DensityMatrix, t: f64) -> Result<f64> {
    check_state_dim(spec, rho)?;
    let u = no_jump_propagator(spec, t, no_jump_steps(spec, t))?;
    Ok(u.sandwich(rho.matrix()).trace().re)
}

/// Loschmidt echo `η = |tr(e^{-iH_eff T} ρ)|²`.
pub fn loschmidt_echo(spec: &LindbladSpec, rho: &DensityMatrix, t: f64) -> Result<f64> {
    check_state_dim(spec, rho)?;
    let u = no_jump_propagator(spec, t, no_jump_steps(spec, t))?;
    Ok(u.matmul(rho.matrix()).trace().norm_sqr())
}

/// Dynamical activity `𝒜_T = T Σ tr(L ρ L^H)`.
pub fn dynamical_activity(spec: &LindbladSpec, rho: &DensityMatrix, t: f64) -> f64 {
    t * spec.jumps.iter().map(|j| j.op.sandwich(rho.matrix()).trace().re).sum::<f64>()
}

/// `dρ/dt` under the generator, or under `+i[H, ·]` when `signflip`.
pub fn lindblad_rhs(spec: &LindbladSpec, rho: &CMatrix, signflip: bool) -> CMatrix {
    let s = if signflip { 1.0 } else { -1.0 };
    let mut out = spec.h.commutator(rho).scale(C64::new(0.0, s));
    for j in &spec.jumps {
        let ll = j.op.adjoint().matmul(&j.op);
        out += &j.op.sandwich(rho);
        let anti = &ll.matmul(rho) + &rho.matmul(&ll);
        out += &anti.scale_real(-0.5);
    }
    out
}

/// Fewest RK4 steps meeting the accumulated local-error budget.
pub fn rk4_steps(spec: &LindbladSpec, t: f64) -> usize {
    let x = spec.generator_norm() * t;
    let steps = (x.powi(5) / (120.0 * RK4_BUDGET)).powf(0.25).ceil();
    (steps as usize).max(1)
}

/// Fixed-step RK4 integration of the master equation over `[0, T]`.
pub fn lindblad_evolve(
    spec: &LindbladSpec,
    rho0: &DensityMatrix,
    t: f64,
    steps: usize,
    signflip: bool,
) -> Result<DensityMatrix> {
    check_state_dim(spec, rho0)?;
    if !(t >= 0.0) || steps == 0 {
        return Err(Error::Domain(format!("evolution needs T >= 0 and steps > 0, got {t}, {steps}")));
    }
    let dt = t / steps as f64;
    let local = (spec.generator_norm() * dt).powi(5) / 120.0;
    if local * steps as f64 > RK4_BUDGET {
        return Err(Error::Accuracy(format!("RK4 error estimate {:e} with {steps} steps", local * steps as f64)));
    }
    let mut rho = rho0.matrix().clone();
    for _ in 0..steps {
        let k1 = lindblad_rhs(spec, &rho, signflip);
        let k2 = lindblad_rhs(spec, &(&rho + &k1.scale_real(dt / 2.0)), signflip);
        let k3 = lindblad_rhs(spec, &(&rho + &k2.scale_real(dt / 2.0)), signflip);
        let k4 = lindblad_rhs(spec, &(&rho + &k3.scale_real(dt)), signflip);
        let mut incr = k1;
        incr += &k2.scale_real(2.0);
        incr += &k3.scale_real(2.0);
        incr += &k4;
        rho += &incr.scale_real(dt / 6.0);
    }
    let tr = rho.trace();
    if (tr.re - 1.0).abs() > 1e-9 || tr.im.abs() > 1e-9 {
        return Err(Error::Accuracy(format!("trace drifted to {tr}")));
    }
    let eig = herm_eig(&rho.hermitian_part())?;
    if eig.values[0] < -1e-8 {
        return Err(Error::Accuracy(format!("negative eigenvalue {:e}", eig.values[0])));
    }
    DensityMatrix::from_numerical(&eig.apply(|x| C64::new(x.max(0.0), 0.0)))
}

/// Evolution with the step count from [`rk4_steps`].
pub fn evolve(spec: &LindbladSpec, rho0: &DensityMatrix, t: f64, signflip: bool) -> Result<DensityMatrix> {
    lindblad_evolve(spec, rho0, t, rk4_steps(spec, t), signflip)
}

/// Stationary state of the generator.
pub fn stationary_state(spec: &LindbladSpec) -> Result<DensityMatrix> {
    let d2 = spec.d_s * spec.d_s;
    let shifted = &spec.liouvillian(false) + &CMatrix::identity(d2);
    let rho = fixed_point(&shifted, spec.d_s)?;
    let residual = lindblad_rhs(spec, rho.matrix(), false).max_abs();
    if residual > Tolerances::DEFAULT.fixed_point {
        return Err(Error::Consistency(format!("stationary residual {residual:e}")));
    }
    Ok(rho)
}

/// `D(p||q)` between the eigenvalues `p` of `ρ_ss` and the populations `q`
/// of `e^{𝓛̃T} ρ_ss` in the same eigenbasis. Infinite when supports differ.
pub fn sigma_star_dp_lower_bound(spec: &LindbladSpec, rho_ss: &DensityMatrix, t: f64) -> Result<f64> {
    let eig = rho_ss.eig()?;
    let tilde = evolve(spec, rho_ss, t, true)?;
    let q: Vec<f64> = (0..eig.dim())
        .map(|k| {
            let v = eig.vector(k);
            let w = tilde.matrix().mat_vec(&v);
            v.iter().zip(&w).map(|(a, b)| (a.conj() * b).re).sum::<f64>().max(0.0)
        })
        .collect();
    let p: Vec<f64> = eig.values.iter().map(|&x| x.max(0.0)).collect();
    Ok(kl_divergence(&p, &q).value())
}

/// First-order step operators of one time slice, completed exactly.
#[derive(Debug, Clone)]
pub struct Unraveling {
    pub dt: f64,
    /// `[(1 - iH_eff dt) C, L_1 √dt C, ...]`.
    pub forward: Vec<CMatrix>,
    /// `[(1 + iH_eff^H dt) C̃, L_1 √dt C̃, ...]`.
    pub backward: Vec<CMatrix>,
    /// `max|C - 1|` of the forward completion factor, `O(dt²)`.
    pub correction: f64,
    pub correction_backward: f64,
}

/// Right-multiplies by `(Σ J^H J)^{-1/2}` and returns the size of the factor.
fn complete(ops: Vec<CMatrix>) -> Result<(Vec<CMatrix>, f64)> {
    let d = ops[0].rows();
    let mut s = CMatrix::zeros(d, d);
    for j in &ops {
        s += &j.adjoint().matmul(j);
    }
    let eig = herm_eig(&s.hermitian_part())?;
    if eig.values[0] <= 0.0 {
        return Err(Error::Singular("step operators annihilate a state".into()));
    }
    let c = eig.apply(|x| C64::new(1.0 / x.sqrt(), 0.0));
    let size = c.max_abs_diff(&CMatrix::identity(d));
    Ok((ops.iter().map(|j| j.matmul(&c)).collect(), size))
}

pub fn unraveled_kraus_sets(spec: &LindbladSpec, t: f64, steps: usize) -> Result<Unraveling> {
    if !(t > 0.0) || steps == 0 {
        return Err(Error::Domain(format!("unraveling needs T > 0 and steps > 0, got {t}, {steps}")));
    }
    let dt = t / steps as f64;
    let d = spec.d_s;
    let id = CMatrix::identity(d);
    let heff = effective_hamiltonian(spec);
    let jumps: Vec<CMatrix> = spec.jumps.iter().map(|j| j.op.scale_real(dt.sqrt())).collect();
    let mut fwd = vec![&id - &heff.scale(C64::new(0.0, dt))];
    fwd.extend(jumps.iter().cloned());
    let mut bwd = vec![&id + &heff.adjoint().scale(C64::new(0.0, dt))];
    bwd.extend(jumps);
    let (forward, correction) = complete(fwd)?;
    let (backward, correction_backward) = complete(bwd)?;
    Ok(Unraveling { dt, forward, backward, correction, correction_backward })
}

/// Which jump records to enumerate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PathLimit {
    Exact,
    /// Only records with at most this many jumps; the rest is reported as
    /// truncated mass.
    MaxJumps(usize),
}

impl PathLimit {
    /// Exact enumeration up to 12 steps and 3 channels, otherwise at most 2 jumps.
    pub fn default_for(steps: usize, channels: usize) -> Self {
        if steps <= 12 && channels <= 3 {
            PathLimit::Exact
        } else {
            PathLimit::MaxJumps(2)
        }
    }

    fn max_jumps(self, steps: usize) -> usize {
        match self {
            PathLimit::Exact => steps,
            PathLimit::MaxJumps(j) => j.min(steps),
        }
    }
}

fn binomial(n: usize, k: usize) -> u128 {
    (0..k).fold(1u128, |acc, i| acc * (n - i) as u128 / (i + 1) as u128)
}

/// Number of jump records with at most `max_jumps` jumps.
fn record_count(steps: usize, channels: usize, max_jumps: usize) -> u128 {
    (0..=max_jumps).map(|j| binomial(steps, j).saturating_mul((channels as u128).saturating_pow(j as u32))).sum()
}

/// Path averages of the discretized jump process started from `ρ` and
/// measured in its eigenbasis at both ends.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MarkovPathStats {
    pub steps: usize,
    pub dt: f64,
    pub limit: PathLimit,
    pub paths: u128,
    pub total_probability: f64,
    pub truncated_mass: f64,
    /// `<ln P(γ)/P̃(γ)>` with `P̃` from the backward step operators.
    pub sigma_star: f64,
    /// Probability of recording no jump in any slice.
    pub inactivity: f64,
    /// `Σ P̃(γ)` over the support of `P`.
    pub ift_check: f64,
    pub correction: f64,
    pub correction_backward: f64,
}

#[derive(Default, Clone, Copy)]
struct PathAcc {
    total: f64,
    sigma_star: f64,
    inactive: f64,
    ift: f64,
}

impl PathAcc {
    fn merge(self, o: Self) -> Self {
        Self {
            total: self.total + o.total,
            sigma_star: self.sigma_star + o.sigma_star,
            inactive: self.inactive + o.inactive,
            ift: self.ift + o.ift,
        }
    }
}

struct Walker<'a> {
    fwd: &'a [CMatrix],
    bwd: &'a [CMatrix],
    p: &'a [f64],
    steps: usize,
    max_jumps: usize,
}

impl Walker<'_> {
    fn leaf(&self, a: &CMatrix, b: &CMatrix, jumps: usize, acc: &mut PathAcc) {
        let floor = Tolerances::DEFAULT.zero_probability;
        let d = self.p.len();
        for n in 0..d {
            for m in 0..d {
                let pf = self.p[n] * a[(m, n)].norm_sqr();
                let pb = self.p[n] * b[(m, n)].norm_sqr();
                acc.total += pf;
                if jumps == 0 {
                    acc.inactive += pf;
                }
                if pf > floor {
                    acc.ift += pb;
                    acc.sigma_star += if pb > floor { pf * (pf / pb).ln() } else { f64::INFINITY };
                }
            }
        }
    }

    fn walk(&self, depth: usize, jumps: usize, a: &CMatrix, b: &CMatrix, acc: &mut PathAcc) {
        if depth == self.steps {
            self.leaf(a, b, jumps, acc);
            return;
        }
        for k in 0..self.fwd.len() {
            let nj = jumps + usize::from(k > 0);
            if nj > self.max_jumps {
                break;
            }
            self.walk(depth + 1, nj, &self.fwd[k].matmul(a), &self.bwd[k].matmul(b), acc);
        }
    }
}

/// Enumerates jump records of the unraveled process. `P(γ) = p_n
/// |<m|J_{k_N}...J_{k_1}|n>|²` in the eigenbasis of `ρ`, and `P̃(γ)` uses the
/// backward step operators in the same order.
pub fn markov_path_stats(
    spec: &LindbladSpec,
    rho: &DensityMatrix,
    t: f64,
    steps: usize,
    limit: PathLimit,
    cap: u64,
) -> Result<MarkovPathStats> {
    check_state_dim(spec, rho)?;
    let un = unraveled_kraus_sets(spec, t, steps)?;
    let channels = spec.jumps.len();
    let max_jumps = limit.max_jumps(steps);
    let d = spec.d_s as u128;
    let paths = record_count(steps, channels, max_jumps).saturating_mul(d * d);
    if paths > u128::from(cap) {
        return Err(Error::EnumerationCap { needed: paths, cap });
    }
    let eig = rho.eig()?;
    let v = &eig.vectors;
    let vh = v.adjoint();
    let rotate = |ops: &[CMatrix]| -> Vec<CMatrix> { ops.iter().map(|j| vh.matmul(&j.matmul(v))).collect() };
    let fwd = rotate(&un.forward);
    let bwd = rotate(&un.backward);
    let p: Vec<f64> = eig.values.iter().map(|&x| x.max(0.0)).collect();
    let walker = Walker { fwd: &fwd, bwd: &bwd, p: &p, steps, max_jumps };

    let first: Vec<usize> = (0..fwd.len()).filter(|&k| usize::from(k > 0) <= max_jumps).collect();
    let parts: Vec<PathAcc> = first
        .par_iter()
        .map(|&k| {
            let mut acc = PathAcc::default();
            walker.walk(1, usize::from(k > 0), &fwd[k], &bwd[k], &mut acc);
            acc
        })
        .collect();
    let acc = parts.into_iter().fold(PathAcc::default(), PathAcc::merge);
    Ok(MarkovPathStats {
        steps,
        dt: un.dt,
        limit,
        paths,
        total_probability: acc.total,
        truncated_mass: (1.0 - acc.total).max(0.0),
        sigma_star: acc.sigma_star,
        inactivity: acc.inactive,
        ift_check: acc.ift,
        correction: un.correction,
        correction_backward: un.correction_backward,
    })
}
