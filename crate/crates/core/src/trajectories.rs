//! Two-point-measurement trajectories `γ = {n, (ν₁, μ₁), …, (ν_N, μ_N), m}`:
//! exact enumeration, Monte Carlo sampling, and the trajectory statistics
//! entering the uncertainty relations.
//!
//! Enumeration stores the bare amplitude `a(γ) = |<m'|U_{μ_N ν_N} ⋯ U_{μ₁ ν₁}|n>|²`
//! with `U_{μν} = <μ|U|ν>`. All four path probabilities are products of
//! `a(γ)` or `a(γ̃)` with preparation probabilities:
//!
//! | quantity | value |
//! |---|---|
//! | `P(γ)`  | `p_n Π p_ν a(γ)` |
//! | `P(γ̃)`  | `p_m Π p_μ a(γ̃)` |
//! | `P̃(γ̃)` | `q_m Π p_μ a(γ)` |
//! | `P̃(γ)`  | `q_n Π p_ν a(γ̃)` |
//!
//! where `q` are the final-measurement probabilities (`q = p` when the
//! system starts stationary).

use std::io::Write;
use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{total_unitary, KrausSet, ModelSpec};
use crate::qlinalg::{
    partial_trace_env_matrix, quantum_rel_entropy, vn_entropy, CMatrix, DensityMatrix, C64,
};
use crate::rng;
use crate::tol::Tolerances;

/// Work unit for parallel reductions; fixed so results do not depend on the
/// number of threads.
const CHUNK: usize = 1 << 14;

/// Samples per Monte Carlo chunk, each chunk with its own random stream.
pub const MC_CHUNK: u64 = 4096;

/// Outcome record of one run.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct Trajectory {
    /// Initial system outcome.
    pub n: usize,
    /// `(ν_i, μ_i)`: environment outcome before and after round `i`.
    pub pairs: Vec<(usize, usize)>,
    /// Final system outcome.
    pub m: usize,
}

impl Trajectory {
    pub fn rounds(&self) -> usize {
        self.pairs.len()
    }

    /// `γ̃ = {m, (μ_N, ν_N), …, (μ₁, ν₁), n}`.
    pub fn reverse(&self) -> Self {
        Self { n: self.m, pairs: self.pairs.iter().rev().map(|&(nu, mu)| (mu, nu)).collect(), m: self.n }
    }

    /// No environment changed its state: `ν_i = μ_i` for every round.
    pub fn is_inactive(&self) -> bool {
        self.pairs.iter().all(|&(nu, mu)| nu == mu)
    }
}

pub fn reverse(gamma: &Trajectory) -> Trajectory {
    gamma.reverse()
}

/// Whether the system starts in the stationary state of the channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Protocol {
    Stationary,
    General,
}

/// Bases and probabilities of the initial and final system measurements.
#[derive(Debug, Clone)]
pub struct MeasurementSetup {
    pub protocol: Protocol,
    /// `p_n`, eigenvalues of the initial state.
    pub init_probs: Vec<f64>,
    /// Columns are the initial measurement basis `|n>`.
    pub init_basis: CMatrix,
    /// `q_n`, eigenvalues of the final state.
    pub final_probs: Vec<f64>,
    /// Columns are the final measurement basis `|n'>`.
    pub final_basis: CMatrix,
}

fn spectral(rho: &DensityMatrix) -> Result<(Vec<f64>, CMatrix)> {
    let eig = rho.eig()?;
    let clipped: Vec<f64> = eig.values.iter().map(|&x| x.max(0.0)).collect();
    let total: f64 = clipped.iter().sum();
    Ok((clipped.into_iter().map(|x| x / total).collect(), eig.vectors))
}

impl MeasurementSetup {
    /// Both measurements in the eigenbasis of a stationary state.
    pub fn stationary(rho: &DensityMatrix) -> Result<Self> {
        let (p, basis) = spectral(rho)?;
        Ok(Self {
            protocol: Protocol::Stationary,
            init_probs: p.clone(),
            init_basis: basis.clone(),
            final_probs: p,
            final_basis: basis,
        })
    }

    /// Initial measurement in the eigenbasis of `rho0`, final one in the
    /// eigenbasis of `E^N(rho0)`.
    pub fn general(k: &KrausSet, rho0: &DensityMatrix, rounds: usize) -> Result<Self> {
        let path = state_path(k, rho0, rounds)?;
        let (p, init_basis) = spectral(rho0)?;
        let (q, final_basis) = spectral(&path[rounds])?;
        Ok(Self { protocol: Protocol::General, init_probs: p, init_basis, final_probs: q, final_basis })
    }

    pub fn dim(&self) -> usize {
        self.init_probs.len()
    }
}

/// `[rho0, E(rho0), …, E^N(rho0)]`.
pub fn state_path(k: &KrausSet, rho0: &DensityMatrix, rounds: usize) -> Result<Vec<DensityMatrix>> {
    let mut path = vec![rho0.clone()];
    for i in 0..rounds {
        let next = crate::model::channel_apply(k, &path[i])?;
        path.push(next);
    }
    Ok(path)
}

/// Every trajectory of an `N`-round protocol with its bare amplitude.
///
/// Trajectory index: `(n * d_E^{2N} + e) * d_S + m`, where `e` has base-`d_E`
/// digits `ν₁ μ₁ ν₂ μ₂ … ν_N μ_N`, most significant first. Reversal maps
/// `e` to its digit reversal and swaps `n` and `m`.
#[derive(Debug, Clone)]
pub struct Enumeration {
    d_s: usize,
    d_e: usize,
    rounds: usize,
    env_count: usize,
    setup: MeasurementSetup,
    env_probs: Vec<f64>,
    bare: Vec<f64>,
}

/// Enumerates all `d_S² d_E^{2N}` trajectories, or fails when that exceeds `cap`.
pub fn enumerate(fwd: &KrausSet, setup: &MeasurementSetup, rounds: usize, cap: u64) -> Result<Enumeration> {
    let (d_s, d_e) = (fwd.d_s(), fwd.d_e());
    if setup.dim() != d_s || setup.init_basis.rows() != d_s || setup.final_basis.rows() != d_s {
        return Err(Error::Dim(format!("measurement setup of dimension {} for d_S = {d_s}", setup.dim())));
    }
    if rounds < 1 {
        return Err(Error::InvalidModel("N must be at least 1".into()));
    }
    let needed = (d_s as u128).pow(2) * (d_e as u128).pow(2 * rounds as u32);
    if needed > u128::from(cap) {
        return Err(Error::EnumerationCap { needed, cap });
    }
    let env_count = d_e.pow(2 * rounds as u32);
    let final_dual = setup.final_basis.adjoint();
    let tasks = d_s * d_e * d_e;
    let blocks: Vec<Vec<f64>> = (0..tasks)
        .into_par_iter()
        .map(|t| {
            let (n, nu, mu) = (t / (d_e * d_e), (t / d_e) % d_e, t % d_e);
            let psi = fwd.block(mu, nu).mat_vec(&setup.init_basis.column(n));
            let mut out = Vec::with_capacity(env_count / (d_e * d_e) * d_s);
            descend(fwd, &final_dual, psi, rounds - 1, &mut out);
            out
        })
        .collect();
    let bare = blocks.concat();
    debug_assert_eq!(bare.len(), d_s * env_count * d_s);
    Ok(Enumeration { d_s, d_e, rounds, env_count, setup: setup.clone(), env_probs: fwd.env_probs().to_vec(), bare })
}

/// Squared amplitudes at the rounding level of a product of unitaries are zeros.
fn floor_amplitude(a: f64) -> f64 {
    if a < Tolerances::DEFAULT.amplitude_floor { 0.0 } else { a }
}

fn descend(k: &KrausSet, final_dual: &CMatrix, psi: Vec<C64>, remaining: usize, out: &mut Vec<f64>) {
    if remaining == 0 {
        out.extend(final_dual.mat_vec(&psi).iter().map(|z| floor_amplitude(z.norm_sqr())));
        return;
    }
    let d_e = k.d_e();
    for nu in 0..d_e {
        for mu in 0..d_e {
            descend(k, final_dual, k.block(mu, nu).mat_vec(&psi), remaining - 1, out);
        }
    }
}

impl Enumeration {
    pub fn len(&self) -> usize {
        self.bare.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bare.is_empty()
    }

    pub fn rounds(&self) -> usize {
        self.rounds
    }

    pub fn d_s(&self) -> usize {
        self.d_s
    }

    pub fn d_e(&self) -> usize {
        self.d_e
    }

    pub fn setup(&self) -> &MeasurementSetup {
        &self.setup
    }

    pub fn env_probs(&self) -> &[f64] {
        &self.env_probs
    }

    pub fn trajectory(&self, idx: usize) -> Trajectory {
        let mut g = Trajectory { n: 0, pairs: vec![(0, 0); self.rounds], m: 0 };
        self.fill(idx, &mut g);
        g
    }

    fn fill(&self, idx: usize, g: &mut Trajectory) {
        g.m = idx % self.d_s;
        let rest = idx / self.d_s;
        g.n = rest / self.env_count;
        let mut e = rest % self.env_count;
        for i in (0..self.rounds).rev() {
            let mu = e % self.d_e;
            e /= self.d_e;
            let nu = e % self.d_e;
            e /= self.d_e;
            g.pairs[i] = (nu, mu);
        }
    }

    pub fn index_of(&self, g: &Trajectory) -> usize {
        let e = g.pairs.iter().fold(0, |acc, &(nu, mu)| (acc * self.d_e + nu) * self.d_e + mu);
        (g.n * self.env_count + e) * self.d_s + g.m
    }

    pub fn reverse_index(&self, idx: usize) -> usize {
        let m = idx % self.d_s;
        let rest = idx / self.d_s;
        let n = rest / self.env_count;
        let mut e = rest % self.env_count;
        let mut rev = 0;
        for _ in 0..2 * self.rounds {
            rev = rev * self.d_e + e % self.d_e;
            e /= self.d_e;
        }
        (m * self.env_count + rev) * self.d_s + n
    }

    /// `a(γ)`.
    pub fn bare_amplitude(&self, idx: usize) -> f64 {
        self.bare[idx]
    }

    fn weights(&self, g: &Trajectory) -> (f64, f64) {
        g.pairs.iter().fold((1.0, 1.0), |(pn, pm), &(nu, mu)| (pn * self.env_probs[nu], pm * self.env_probs[mu]))
    }

    /// `P(γ)`.
    pub fn p_fwd(&self, idx: usize) -> f64 {
        let g = self.trajectory(idx);
        self.probabilities(idx, &g).fwd
    }

    /// `P(γ̃)`.
    pub fn p_fwd_reversed(&self, idx: usize) -> f64 {
        let g = self.trajectory(idx);
        self.probabilities(idx, &g).fwd_reversed
    }

    /// `P̃(γ)`.
    pub fn p_bwd_same(&self, idx: usize) -> f64 {
        let g = self.trajectory(idx);
        self.probabilities(idx, &g).bwd_same
    }

    /// `P̃(γ̃)`.
    pub fn p_bwd_reversed(&self, idx: usize) -> f64 {
        let g = self.trajectory(idx);
        self.probabilities(idx, &g).bwd_reversed
    }

    pub fn probabilities(&self, idx: usize, g: &Trajectory) -> PathProbabilities {
        let s = &self.setup;
        let (pi_nu, pi_mu) = self.weights(g);
        let a = self.bare[idx];
        let a_rev = self.bare[self.reverse_index(idx)];
        PathProbabilities {
            fwd: s.init_probs[g.n] * pi_nu * a,
            fwd_reversed: s.init_probs[g.m] * pi_mu * a_rev,
            bwd_same: s.final_probs[g.n] * pi_nu * a_rev,
            bwd_reversed: s.final_probs[g.m] * pi_mu * a,
        }
    }

    /// `(γ, P(γ))` in index order.
    pub fn iter(&self) -> impl Iterator<Item = (Trajectory, f64)> + '_ {
        (0..self.len()).map(move |idx| {
            let g = self.trajectory(idx);
            let p = self.probabilities(idx, &g).fwd;
            (g, p)
        })
    }

    pub fn total_probability(&self) -> f64 {
        self.iter().map(|(_, p)| p).sum()
    }

    /// Statistics with the default inactive set (no environment change).
    pub fn stats(&self, observable: &Observable) -> Result<TrajectoryStats> {
        self.stats_with(observable, &Trajectory::is_inactive)
    }

    /// Statistics with a custom inactive set `𝓘`.
    pub fn stats_with(
        &self,
        observable: &Observable,
        inactive: &(dyn Fn(&Trajectory) -> bool + Sync),
    ) -> Result<TrajectoryStats> {
        let s = &self.setup;
        let ln_p: Vec<f64> = s.init_probs.iter().map(|x| x.ln()).collect();
        let ln_q: Vec<f64> = s.final_probs.iter().map(|x| x.ln()).collect();
        let ln_env: Vec<f64> = self.env_probs.iter().map(|x| x.ln()).collect();
        let stationary = s.protocol == Protocol::Stationary;
        let floor = Tolerances::DEFAULT.zero_probability;
        let n_chunks = self.len().div_ceil(CHUNK);

        let first: Vec<Partial> = (0..n_chunks)
            .into_par_iter()
            .map(|c| {
                let mut acc = Partial::default();
                let mut g = Trajectory { n: 0, pairs: vec![(0, 0); self.rounds], m: 0 };
                for idx in c * CHUNK..((c + 1) * CHUNK).min(self.len()) {
                    self.fill(idx, &mut g);
                    let pr = self.probabilities(idx, &g);
                    let denom = pr.fwd + pr.fwd_reversed;
                    if denom > 0.0 {
                        acc.ell += 0.5 * (pr.fwd - pr.fwd_reversed).powi(2) / denom;
                    }
                    if pr.fwd < floor {
                        acc.excluded += pr.fwd;
                        continue;
                    }
                    let p = pr.fwd;
                    acc.total += p;
                    let phi = observable.value(&g);
                    acc.first_moment += p * phi;
                    if inactive(&g) {
                        acc.inactive += p;
                    } else {
                        acc.active += p;
                    }
                    let env_log: f64 = g.pairs.iter().map(|&(nu, mu)| ln_env[nu] - ln_env[mu]).sum();
                    acc.sigma += p * (ln_p[g.n] - ln_q[g.m] + env_log);
                    let a = self.bare[idx];
                    let a_rev = self.bare[self.reverse_index(idx)];
                    acc.sigma_star += p * (ln_p[g.n] - ln_q[g.n] + (a / a_rev).ln());
                    if !stationary {
                        acc.boundary += p * (ln_q[g.m] + ln_q[g.n] - ln_p[g.m] - ln_p[g.n]);
                    }
                    acc.log_ratio_reversed += p * (p / pr.fwd_reversed).ln();
                    acc.ift += pr.bwd_same;
                }
                acc
            })
            .collect();
        let sums = first.into_iter().fold(Partial::default(), Partial::merge);
        let mean = sums.first_moment / sums.total;

        let centered: Vec<(f64, f64)> = (0..n_chunks)
            .into_par_iter()
            .map(|c| {
                let mut var = 0.0;
                let mut second = 0.0;
                let mut g = Trajectory { n: 0, pairs: vec![(0, 0); self.rounds], m: 0 };
                for idx in c * CHUNK..((c + 1) * CHUNK).min(self.len()) {
                    self.fill(idx, &mut g);
                    let p = self.probabilities(idx, &g).fwd;
                    if p < floor {
                        continue;
                    }
                    let phi = observable.value(&g);
                    var += p * (phi - mean).powi(2);
                    second += p * phi * phi;
                }
                (var, second)
            })
            .collect();
        let (var, second) = centered.into_iter().fold((0.0, 0.0), |(a, b), (x, y)| (a + x, b + y));

        let stats = TrajectoryStats {
            protocol: s.protocol,
            mean_phi: mean,
            var_phi: var / sums.total,
            second_moment: second / sums.total,
            sigma: sums.sigma,
            sigma_star: sums.sigma_star,
            boundary_b: sums.boundary,
            inactivity: sums.inactive,
            activity: sums.active,
            ell: sums.ell,
            ift_check: sums.ift,
            log_ratio_reversed: sums.log_ratio_reversed,
            total_probability: sums.total,
            excluded_mass: sums.excluded,
        };
        stats.check_consistency()?;
        Ok(stats)
    }
}

/// `P(γ)`, `P(γ̃)`, `P̃(γ)` and `P̃(γ̃)` for one trajectory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathProbabilities {
    pub fwd: f64,
    pub fwd_reversed: f64,
    pub bwd_same: f64,
    pub bwd_reversed: f64,
}

/// `P̃(γ)`, the backward-process probability of the same record.
pub fn backward_prob(en: &Enumeration, gamma: &Trajectory) -> f64 {
    let idx = en.index_of(gamma);
    en.probabilities(idx, gamma).bwd_same
}

#[derive(Default, Clone, Copy)]
struct Partial {
    total: f64,
    excluded: f64,
    first_moment: f64,
    inactive: f64,
    active: f64,
    sigma: f64,
    sigma_star: f64,
    boundary: f64,
    log_ratio_reversed: f64,
    ell: f64,
    ift: f64,
}

impl Partial {
    fn merge(self, o: Partial) -> Partial {
        Partial {
            total: self.total + o.total,
            excluded: self.excluded + o.excluded,
            first_moment: self.first_moment + o.first_moment,
            inactive: self.inactive + o.inactive,
            active: self.active + o.active,
            sigma: self.sigma + o.sigma,
            sigma_star: self.sigma_star + o.sigma_star,
            boundary: self.boundary + o.boundary,
            log_ratio_reversed: self.log_ratio_reversed + o.log_ratio_reversed,
            ell: self.ell + o.ell,
            ift: self.ift + o.ift,
        }
    }
}

/// Ensemble averages over the trajectory distribution. Entropic quantities
/// are in nats and may be `+inf` when a forward path has no backward
/// counterpart (for example a pure environment).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrajectoryStats {
    pub protocol: Protocol,
    pub mean_phi: f64,
    pub var_phi: f64,
    pub second_moment: f64,
    /// `Σ = <ln P(γ)/P̃(γ̃)>`.
    pub sigma: f64,
    /// `Σ* = <ln P(γ)/P̃(γ)>`.
    pub sigma_star: f64,
    /// `𝔟 = <ln q_m q_n / p_m p_n>`, zero for a stationary start.
    pub boundary_b: f64,
    /// `𝒫`, the probability of the inactive set.
    pub inactivity: f64,
    /// `1 - 𝒫`, summed directly.
    pub activity: f64,
    /// `ℓ = ½ Σ (P(γ) - P(γ̃))² / (P(γ) + P(γ̃))`.
    pub ell: f64,
    /// `Σ P̃(γ)` over the support of `P`; equals `<exp(-σ*)>`.
    pub ift_check: f64,
    /// `<ln P(γ)/P(γ̃)>`, which equals `Σ + Σ* + 𝔟`.
    pub log_ratio_reversed: f64,
    pub total_probability: f64,
    /// Probability carried by trajectories below the zero threshold.
    pub excluded_mass: f64,
}

impl TrajectoryStats {
    /// `Var[φ] / <φ>²`, or `None` when the mean vanishes.
    pub fn rel_fluct(&self) -> Option<f64> {
        let scale = self.second_moment.sqrt().max(f64::MIN_POSITIVE);
        if self.mean_phi.abs() <= 1e-12 * scale || self.mean_phi == 0.0 {
            None
        } else {
            Some(self.var_phi / (self.mean_phi * self.mean_phi))
        }
    }

    /// `Σ + Σ* + 𝔟`, the argument of the generalized TUR bound.
    pub fn total_asymmetry(&self) -> f64 {
        self.sigma + self.sigma_star + self.boundary_b
    }

    fn check_consistency(&self) -> Result<()> {
        let tol = Tolerances::DEFAULT.negative_entropy;
        if self.sigma < -tol || self.sigma_star < -tol {
            return Err(Error::Consistency(format!(
                "negative entropy production: Σ = {:e}, Σ* = {:e}",
                self.sigma, self.sigma_star
            )));
        }
        Ok(())
    }
}

pub fn compute_stats(en: &Enumeration, observable: &Observable) -> Result<TrajectoryStats> {
    en.stats(observable)
}

/// Time-antisymmetric current or generic observable vanishing on `𝓘`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ObservableKind {
    Current,
    Generic,
}

type ObservableFn = dyn Fn(&Trajectory) -> f64 + Send + Sync;

/// Real function of a trajectory.
#[derive(Clone)]
pub struct Observable {
    name: String,
    kind: ObservableKind,
    func: Arc<ObservableFn>,
}

impl std::fmt::Debug for Observable {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Observable").field("name", &self.name).field("kind", &self.kind).finish()
    }
}

impl Observable {
    pub fn new(
        name: impl Into<String>,
        kind: ObservableKind,
        func: impl Fn(&Trajectory) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self { name: name.into(), kind, func: Arc::new(func) }
    }

    /// `φ(γ) = Σ_i c[μ_i][ν_i]`, counting environment transitions `ν → μ`.
    pub fn env_sum(name: impl Into<String>, kind: ObservableKind, c: Vec<Vec<f64>>) -> Result<Self> {
        let d = c.len();
        if c.iter().any(|row| row.len() != d) {
            return Err(Error::Dim("coefficient matrix must be square".into()));
        }
        match kind {
            ObservableKind::Current => {
                for a in 0..d {
                    for b in 0..d {
                        if c[a][b] != -c[b][a] {
                            return Err(Error::Observable(format!("c[{a}][{b}] + c[{b}][{a}] != 0")));
                        }
                    }
                }
            }
            ObservableKind::Generic => {
                if let Some(a) = (0..d).find(|&a| c[a][a] != 0.0) {
                    return Err(Error::Observable(format!("c[{a}][{a}] = {} != 0", c[a][a])));
                }
            }
        }
        Ok(Self::new(name, kind, move |g: &Trajectory| g.pairs.iter().map(|&(nu, mu)| c[mu][nu]).sum()))
    }

    /// `1[γ ∉ 𝓘]`, which saturates the kinetic bound.
    pub fn activity_indicator() -> Self {
        Self::new("activity_indicator", ObservableKind::Generic, |g: &Trajectory| {
            if g.is_inactive() {
                0.0
            } else {
                1.0
            }
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn kind(&self) -> ObservableKind {
        self.kind
    }

    pub fn value(&self, g: &Trajectory) -> f64 {
        (self.func)(g)
    }

    /// Checks the defining property over every enumerated trajectory:
    /// `φ(γ̃) = -φ(γ)` for currents, `φ = 0` on `𝓘` for generic observables.
    pub fn check(&self, en: &Enumeration) -> Result<()> {
        self.check_with(en, &Trajectory::is_inactive)
    }

    pub fn check_with(&self, en: &Enumeration, inactive: &dyn Fn(&Trajectory) -> bool) -> Result<()> {
        for idx in 0..en.len() {
            let g = en.trajectory(idx);
            let v = self.value(&g);
            match self.kind {
                ObservableKind::Current => {
                    let r = self.value(&g.reverse());
                    if (v + r).abs() > 1e-12 * (1.0 + v.abs()) {
                        return Err(Error::Observable(format!("{}: φ(γ̃) != -φ(γ) at {g:?}", self.name)));
                    }
                }
                ObservableKind::Generic => {
                    if inactive(&g) && v != 0.0 {
                        return Err(Error::Observable(format!("{}: φ = {v} on inactive {g:?}", self.name)));
                    }
                }
            }
        }
        Ok(())
    }
}

/// `N D(U(ρ⊗ρ_E)U† ‖ ρ⊗ρ_E)` for a stationary `ρ`.
pub fn sigma_from_states(spec: &ModelSpec, rho_s: &DensityMatrix) -> Result<f64> {
    let u = total_unitary(spec)?;
    let product = rho_s.kron(&spec.env_state()?);
    let joint = DensityMatrix::from_numerical(&u.sandwich(product.matrix()))?;
    Ok(spec.rounds as f64 * quantum_rel_entropy(&joint, &product)?.value())
}

/// `Σ_i D(U(ρ_{i-1}⊗ρ_E)U† ‖ ρ_i⊗ρ_E)` along `rho_path = [ρ₀, …, ρ_N]`.
pub fn sigma_from_states_general(spec: &ModelSpec, rho_path: &[DensityMatrix]) -> Result<f64> {
    if rho_path.len() != spec.rounds + 1 {
        return Err(Error::Dim(format!("{} states for N = {}", rho_path.len(), spec.rounds)));
    }
    let u = total_unitary(spec)?;
    let env = spec.env_state()?;
    let mut total = 0.0;
    for w in rho_path.windows(2) {
        let joint = DensityMatrix::from_numerical(&u.sandwich(w[0].kron(&env).matrix()))?;
        total += quantum_rel_entropy(&joint, &w[1].kron(&env))?.value();
    }
    Ok(total)
}

/// `S̄_EE = Σ p_n p_ν S(tr_E U|n,ν><n,ν|U†)` over the eigenbasis of `ρ_S`.
pub fn entanglement_entropy_avg(spec: &ModelSpec, rho_s: &DensityMatrix) -> Result<f64> {
    let u = total_unitary(spec)?;
    let (p, basis) = spectral(rho_s)?;
    let p_env = spec.env_probs();
    let (d_s, d_e) = (spec.d_s, spec.d_e);
    let mut total = 0.0;
    for n in 0..d_s {
        for nu in 0..d_e {
            let w = p[n] * p_env[nu];
            if w == 0.0 {
                continue;
            }
            let col: Vec<C64> =
                (0..d_s * d_e).map(|r| if r % d_e == nu { basis[(r / d_e, n)] } else { C64::new(0.0, 0.0) }).collect();
            let psi = u.mat_vec(&col);
            let reduced = partial_trace_env_matrix(&CMatrix::outer(&psi, &psi), d_s, d_e)?;
            total += w * vn_entropy(&DensityMatrix::from_numerical(&reduced)?)?;
        }
    }
    Ok(total)
}

/// Writes one CSV line per trajectory:
/// `n, nu_1..nu_N, mu_1..mu_N, m, p_fwd, p_bwd_same, p_fwd_reversed, phi`.
pub fn write_trajectory_csv<W: Write>(en: &Enumeration, observable: &Observable, mut w: W) -> Result<()> {
    let rounds = en.rounds();
    let mut header = vec!["n".to_string()];
    header.extend((1..=rounds).map(|i| format!("nu_{i}")));
    header.extend((1..=rounds).map(|i| format!("mu_{i}")));
    header.extend(["m", "p_fwd", "p_bwd_same", "p_fwd_reversed", "phi"].map(String::from));
    writeln!(w, "{}", header.join(","))?;
    for idx in 0..en.len() {
        let g = en.trajectory(idx);
        let pr = en.probabilities(idx, &g);
        let mut fields = vec![g.n.to_string()];
        fields.extend(g.pairs.iter().map(|&(nu, _)| nu.to_string()));
        fields.extend(g.pairs.iter().map(|&(_, mu)| mu.to_string()));
        fields.push(g.m.to_string());
        fields.extend([pr.fwd, pr.bwd_same, pr.fwd_reversed, observable.value(&g)].map(|x| x.to_string()));
        writeln!(w, "{}", fields.join(","))?;
    }
    Ok(())
}

/// Monte Carlo estimates; `sigma` and `sigma_star` average the exact
/// per-trajectory log ratios over the sampled paths.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McEstimate {
    pub samples: u64,
    pub mean_phi: f64,
    pub var_phi: f64,
    /// Standard error of `mean_phi`.
    pub stderr_phi: f64,
    pub inactivity: f64,
    pub sigma: f64,
    pub sigma_star: f64,
}

#[derive(Default, Clone, Copy)]
struct McPartial {
    count: f64,
    mean: f64,
    m2: f64,
    inactive: f64,
    sigma: f64,
    sigma_star: f64,
}

impl McPartial {
    fn push(&mut self, phi: f64, inactive: bool, sigma: f64, sigma_star: f64) {
        self.count += 1.0;
        let delta = phi - self.mean;
        self.mean += delta / self.count;
        self.m2 += delta * (phi - self.mean);
        self.inactive += f64::from(u8::from(inactive));
        self.sigma += sigma;
        self.sigma_star += sigma_star;
    }

    fn merge(self, o: McPartial) -> McPartial {
        if self.count == 0.0 {
            return o;
        }
        if o.count == 0.0 {
            return self;
        }
        let count = self.count + o.count;
        let delta = o.mean - self.mean;
        McPartial {
            count,
            mean: self.mean + delta * o.count / count,
            m2: self.m2 + o.m2 + delta * delta * self.count * o.count / count,
            inactive: self.inactive + o.inactive,
            sigma: self.sigma + o.sigma,
            sigma_star: self.sigma_star + o.sigma_star,
        }
    }
}

fn draw<R: Rng + ?Sized>(rng: &mut R, weights: &[f64]) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (k, &w) in weights.iter().enumerate() {
        if u < w {
            return k;
        }
        u -= w;
    }
    weights.iter().rposition(|&w| w > 0.0).unwrap_or(0)
}

fn bare_path(k: &KrausSet, start: &[C64], steps: impl Iterator<Item = (usize, usize)>, end: &[C64]) -> f64 {
    let mut psi = start.to_vec();
    for (mu, nu) in steps {
        psi = k.block(mu, nu).mat_vec(&psi);
    }
    floor_amplitude(end.iter().zip(&psi).map(|(a, b)| a.conj() * b).sum::<C64>().norm_sqr())
}

/// Samples trajectories sequentially: `n` from `p_n`, then each round's
/// `(ν, μ)` with probability `p_ν ‖U_{μν}ψ‖²`, then `m` by the Born rule.
/// Results depend only on `seed`, not on the thread count.
pub fn mc_sample(
    fwd: &KrausSet,
    setup: &MeasurementSetup,
    rounds: usize,
    observable: &Observable,
    n_samples: u64,
    seed: u64,
) -> Result<McEstimate> {
    if n_samples == 0 {
        return Err(Error::Domain("at least one sample is required".into()));
    }
    let (d_s, d_e) = (fwd.d_s(), fwd.d_e());
    let p_env = fwd.env_probs();
    let chunks = n_samples.div_ceil(MC_CHUNK);
    let init_cols: Vec<Vec<C64>> = (0..d_s).map(|n| setup.init_basis.column(n)).collect();
    let final_cols: Vec<Vec<C64>> = (0..d_s).map(|n| setup.final_basis.column(n)).collect();
    let partials: Vec<McPartial> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = rng::stream(seed, "trajectories/mc", c);
            let count = MC_CHUNK.min(n_samples - c * MC_CHUNK);
            let mut acc = McPartial::default();
            let mut g = Trajectory { n: 0, pairs: vec![(0, 0); rounds], m: 0 };
            for _ in 0..count {
                g.n = draw(&mut rng, &setup.init_probs);
                let mut psi = init_cols[g.n].clone();
                for i in 0..rounds {
                    let candidates: Vec<Vec<C64>> =
                        (0..d_e * d_e).map(|t| fwd.block(t % d_e, t / d_e).mat_vec(&psi)).collect();
                    let weights: Vec<f64> = candidates
                        .iter()
                        .enumerate()
                        .map(|(t, v)| p_env[t / d_e] * v.iter().map(|z| z.norm_sqr()).sum::<f64>())
                        .collect();
                    let t = draw(&mut rng, &weights);
                    let (nu, mu) = (t / d_e, t % d_e);
                    g.pairs[i] = (nu, mu);
                    let norm = weights[t].sqrt() / p_env[nu].sqrt();
                    psi = candidates[t].iter().map(|z| z / norm).collect();
                }
                let born: Vec<f64> = final_cols
                    .iter()
                    .map(|f| f.iter().zip(&psi).map(|(a, b)| a.conj() * b).sum::<C64>().norm_sqr())
                    .collect();
                g.m = draw(&mut rng, &born);
                let a = bare_path(fwd, &init_cols[g.n], g.pairs.iter().map(|&(nu, mu)| (mu, nu)), &final_cols[g.m]);
                let a_rev =
                    bare_path(fwd, &init_cols[g.m], g.pairs.iter().rev().map(|&(nu, mu)| (nu, mu)), &final_cols[g.n]);
                let env_log: f64 = g.pairs.iter().map(|&(nu, mu)| (p_env[nu] / p_env[mu]).ln()).sum();
                let sigma = (setup.init_probs[g.n] / setup.final_probs[g.m]).ln() + env_log;
                let sigma_star = (setup.init_probs[g.n] / setup.final_probs[g.n]).ln() + (a / a_rev).ln();
                acc.push(observable.value(&g), g.is_inactive(), sigma, sigma_star);
            }
            acc
        })
        .collect();
    let total = partials.into_iter().fold(McPartial::default(), McPartial::merge);
    let var = total.m2 / total.count;
    Ok(McEstimate {
        samples: n_samples,
        mean_phi: total.mean,
        var_phi: var,
        stderr_phi: (var / total.count).sqrt(),
        inactivity: total.inactive / total.count,
        sigma: total.sigma / total.count,
        sigma_star: total.sigma_star / total.count,
    })
}
