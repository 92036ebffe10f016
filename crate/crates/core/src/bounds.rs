//! Bound functions and the comparisons between measured precision and the
//! generalized uncertainty relations.

use serde::{Serialize, Serializer};

use crate::error::{Error, Result};
use crate::model::KrausSet;
use crate::qlinalg::{herm_eig, CMatrix, DensityMatrix};
use crate::tol::Tolerances;
use crate::trajectories::{ObservableKind, TrajectoryStats};

/// Below this argument `f` is evaluated from its Laurent series.
pub const F_SERIES_CUTOFF: f64 = 1e-6;

/// Coefficient in the short-time lower bound on `Σ*`.
pub const C_STAR: f64 = 8.0 / 9.0;

/// Inverse of `x tanh x` on `[0, inf)`.
pub fn phi_inverse(y: f64) -> Result<f64> {
    if y.is_nan() || y < 0.0 {
        return Err(Error::Domain(format!("Φ needs y >= 0, got {y}")));
    }
    if y == 0.0 {
        return Ok(0.0);
    }
    if y.is_infinite() {
        return Ok(f64::INFINITY);
    }
    let g = |x: f64| x * x.tanh() - y;
    // x^2 >= x tanh x >= x - 1
    let mut lo = y.sqrt() * (1.0 - 1e-12);
    let mut hi = y.sqrt().max(y) + 1.0;
    let mut x = if y < 1.0 { y.sqrt() } else { y };
    for _ in 0..200 {
        let gx = g(x);
        if gx == 0.0 {
            return Ok(x);
        }
        if gx < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        let t = x.tanh();
        let slope = t + x * (1.0 - t * t);
        let newton = x - gx / slope;
        let next = if newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
        if (next - x).abs() <= 4.0 * f64::EPSILON * x {
            return Ok(next);
        }
        x = next;
    }
    Ok(x)
}

/// `f(x) = 4[Φ(x/2)/x]² - 1`, the generalized TUR bound function.
///
/// Evaluated as `r(2 + r)` with `r = 2Φ/x - 1 = 4Φ/(x(e^{2Φ} + 1))`, which
/// keeps full relative accuracy for large `x`. Small arguments use
/// `2/x - 2/3 + 2x/45`. `f(inf) = 0`.
pub fn f_bound(x: f64) -> Result<f64> {
    if x.is_nan() || x <= 0.0 {
        return Err(Error::Domain(format!("f needs x > 0, got {x}")));
    }
    if x.is_infinite() {
        return Ok(0.0);
    }
    if x < F_SERIES_CUTOFF {
        return Ok(2.0 / x - 2.0 / 3.0 + 2.0 * x / 45.0);
    }
    let phi = phi_inverse(x / 2.0)?;
    let r = 4.0 * phi / (x * ((2.0 * phi).exp() + 1.0));
    Ok(r * (2.0 + r))
}

/// `csch²(Φ(x/2))`, the closed form of `f`.
pub fn f_bound_csch(x: f64) -> Result<f64> {
    if x.is_nan() || x <= 0.0 {
        return Err(Error::Domain(format!("f needs x > 0, got {x}")));
    }
    let s = phi_inverse(x / 2.0)?.sinh();
    Ok(1.0 / (s * s))
}

/// A bound value, or a marker that the bound carries no information.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Bound {
    Value(f64),
    Vacuous,
}

impl Bound {
    fn finite(x: f64) -> Self {
        if x.is_finite() {
            Bound::Value(x)
        } else {
            Bound::Vacuous
        }
    }

    pub fn value(self) -> Option<f64> {
        match self {
            Bound::Value(x) => Some(x),
            Bound::Vacuous => None,
        }
    }

    pub fn is_vacuous(self) -> bool {
        matches!(self, Bound::Vacuous)
    }
}

impl Serialize for Bound {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Bound::Value(x) => s.serialize_f64(*x),
            Bound::Vacuous => s.serialize_str("vacuous"),
        }
    }
}

/// Bounds evaluated for one observable, with margins `rel_fluct - bound`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundReport {
    pub observable: String,
    pub kind: ObservableKind,
    pub rel_fluct: Bound,
    /// `f(Σ + Σ* + 𝔟)`.
    pub tur_bound: Bound,
    /// `f(Σ)`, the conventional TUR that ignores the asymmetry.
    pub tur_sigma_only: Bound,
    /// `1/(𝒫⁻¹ - 1)`.
    pub kur_bound: Bound,
    /// `1/(𝒜 - 1)`.
    pub survival_bound: Option<Bound>,
    /// `1/(η⁻¹ - 1)`.
    pub loschmidt_bound: Option<Bound>,
    pub quality_factor: Bound,
    pub tur_margin: Option<f64>,
    pub tur_sigma_only_margin: Option<f64>,
    pub kur_margin: Option<f64>,
}

fn margin(rel: Bound, bound: Bound) -> Option<f64> {
    Some(rel.value()? - bound.value()?)
}

fn tur_value(x: f64) -> Result<Bound> {
    if x.is_nan() {
        return Err(Error::Domain("TUR argument is NaN".into()));
    }
    if x <= 0.0 {
        return Ok(Bound::Vacuous);
    }
    Ok(Bound::finite(f_bound(x)?))
}

/// `1/(x⁻¹ - 1)` computed as `x / (1 - x)` from both parts.
fn inverse_minus_one(x: f64, one_minus_x: f64) -> Bound {
    if x <= 0.0 || one_minus_x <= 0.0 {
        Bound::Vacuous
    } else {
        Bound::finite(x / one_minus_x)
    }
}

impl BoundReport {
    /// Evaluates every bound that the statistics support. Nothing is checked.
    pub fn evaluate(name: &str, kind: ObservableKind, stats: &TrajectoryStats) -> Result<Self> {
        let rel_fluct = stats.rel_fluct().map_or(Bound::Vacuous, Bound::finite);
        let tur_bound = tur_value(stats.total_asymmetry())?;
        let tur_sigma_only = tur_value(stats.sigma)?;
        let kur_bound = inverse_minus_one(stats.inactivity, stats.activity);
        let quality_factor = match (rel_fluct, tur_sigma_only) {
            (Bound::Value(r), Bound::Value(f)) if f > 0.0 => Bound::finite(r / f),
            _ => Bound::Vacuous,
        };
        Ok(Self {
            observable: name.to_string(),
            kind,
            rel_fluct,
            tur_bound,
            tur_sigma_only,
            kur_bound,
            survival_bound: None,
            loschmidt_bound: None,
            quality_factor,
            tur_margin: margin(rel_fluct, tur_bound),
            tur_sigma_only_margin: margin(rel_fluct, tur_sigma_only),
            kur_margin: margin(rel_fluct, kur_bound),
        })
    }

    /// Adds `1/(𝒜 - 1)` for a survival activity `𝒜`.
    pub fn with_survival(mut self, survival: f64) -> Self {
        self.survival_bound = Some(if survival > 1.0 {
            Bound::finite(1.0 / (survival - 1.0))
        } else {
            Bound::Vacuous
        });
        self
    }

    /// Adds `1/(η⁻¹ - 1)` for a Loschmidt echo `η`.
    pub fn with_loschmidt(mut self, eta: f64) -> Self {
        self.loschmidt_bound = Some(inverse_minus_one(eta, 1.0 - eta));
        self
    }

    /// The TUR applies to currents only; the KUR to every registered observable.
    pub fn tur_applies(&self) -> bool {
        self.kind == ObservableKind::Current
    }

    /// Fails with `BoundViolation` if a bound that applies is violated.
    pub fn check(&self) -> Result<()> {
        if self.tur_applies() {
            check_margin("tur", self.tur_margin, self.tur_bound)?;
        }
        check_margin("kur", self.kur_margin, self.kur_bound)
    }
}

fn check_margin(name: &str, margin: Option<f64>, bound: Bound) -> Result<()> {
    let (Some(m), Some(b)) = (margin, bound.value()) else {
        return Ok(());
    };
    if m < -Tolerances::DEFAULT.bound_margin * b.max(1.0) {
        return Err(Error::BoundViolation { name: name.to_string(), margin: m });
    }
    Ok(())
}

/// Evaluates and checks `Var[φ]/<φ>² >= f(Σ + Σ* + 𝔟)` for a current.
pub fn check_tur(stats: &TrajectoryStats) -> Result<BoundReport> {
    let report = BoundReport::evaluate("current", ObservableKind::Current, stats)?;
    check_margin("tur", report.tur_margin, report.tur_bound)?;
    Ok(report)
}

/// Evaluates and checks `Var[φ]/<φ>² >= 1/(𝒫⁻¹ - 1)`.
pub fn check_kur(stats: &TrajectoryStats, name: &str) -> Result<BoundReport> {
    let report = BoundReport::evaluate(name, ObservableKind::Generic, stats)?;
    check_margin("kur", report.kur_margin, report.kur_bound)?;
    Ok(report)
}

/// `(Var[φ]/<φ>²) / f(Σ)`; `None` when either factor is undefined.
pub fn quality_factor(stats: &TrajectoryStats) -> Result<Option<f64>> {
    let Some(rel) = stats.rel_fluct() else {
        return Ok(None);
    };
    match tur_value(stats.sigma)? {
        Bound::Value(f) if f > 0.0 => Ok(Some(rel / f)),
        _ => Ok(None),
    }
}

/// Survival activity `𝒜 = tr[(V₀†V₀)⁻¹ ρ_S]` with `V₀ = M₀₀^N`.
///
/// Requires the environment to start in its level 0 with certainty.
pub fn survival_activity(fwd: &KrausSet, rho_s: &DensityMatrix, rounds: usize) -> Result<f64> {
    let p = fwd.env_probs();
    if p[0] != 1.0 || p[1..].iter().any(|&x| x != 0.0) {
        return Err(Error::Mode(format!("survival activity needs a pure environment, got {p:?}")));
    }
    if rho_s.dim() != fwd.d_s() {
        return Err(Error::Dim(format!("state of dimension {} for d_S = {}", rho_s.dim(), fwd.d_s())));
    }
    let v0 = fwd.op(0, 0).powi(rounds);
    let eig = herm_eig(&v0.adjoint().matmul(&v0))?;
    let min = eig.values[0];
    if min <= 1e-12 {
        return Err(Error::Singular(format!("V0^H V0 has eigenvalue {min:e}")));
    }
    let rho = rho_s.matrix();
    let mut acc = 0.0;
    for (k, &lam) in eig.values.iter().enumerate() {
        let v = eig.vector(k);
        let rv = rho.mat_vec(&v);
        let w: f64 = v.iter().zip(&rv).map(|(a, b)| (a.conj() * b).re).sum();
        acc += w / lam;
    }
    Ok(acc)
}

/// Short-time lower bound `(8/9)|<[H,𝖫]>|² / <2H² + 𝖫²/2> · T²` with
/// `𝖫 = Σ L†L`.
pub fn short_time_sigma_star_lb(h: &CMatrix, jumps: &[CMatrix], rho_s: &DensityMatrix, t: f64) -> f64 {
    let d = h.rows();
    let mut big_l = CMatrix::zeros(d, d);
    for l in jumps {
        big_l += &l.adjoint().matmul(l);
    }
    let num = rho_s.expectation(&h.commutator(&big_l)).norm_sqr();
    if num == 0.0 {
        return 0.0;
    }
    let den_op = &h.matmul(h).scale_real(2.0) + &big_l.matmul(&big_l).scale_real(0.5);
    let den = rho_s.expectation(&den_op).re;
    if den <= 0.0 {
        return 0.0;
    }
    C_STAR * num / den * t * t
}
