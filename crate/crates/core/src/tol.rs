//! Numerical tolerances shared by every module.

/// Central record of numerical tolerances.
///
/// Functions read [`Tolerances::DEFAULT`]; the record exists so every
/// threshold lives in one place.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    /// Entrywise `max|A - A^H|` accepted for Hermitian inputs.
    pub hermitian: f64,
    /// Relative off-diagonal Frobenius norm at which Jacobi sweeps stop.
    pub jacobi: f64,
    /// Allowed deviation of a density-matrix trace from 1.
    pub trace: f64,
    /// Most negative eigenvalue accepted in a density matrix.
    pub positivity: f64,
    /// Eigenvalues below this are treated as exact zeros in `ln`.
    pub eig_floor: f64,
    /// Completeness of a Kraus set, `max|sum M^H M - 1|`.
    pub completeness: f64,
    /// Environment probabilities must sum to 1 within this.
    pub probability_sum: f64,
    /// Fixed-point residual `max|E(rho) - rho|` of a stationary state.
    pub fixed_point: f64,
    /// Smallest acceptable gap of the transfer matrix around eigenvalue 1.
    pub stationary_gap: f64,
    /// Squared transition amplitudes below this are rounding noise and read as 0.
    pub amplitude_floor: f64,
    /// Trajectories with probability below this are excluded from log-ratio sums.
    pub zero_probability: f64,
    /// Negative Σ or Σ* beyond this signals a broken backward construction.
    pub negative_entropy: f64,
    /// Margin below which a bound is reported as violated.
    pub bound_margin: f64,
    /// Energy mismatch accepted for a resonant coupling.
    pub resonance: f64,
    /// Default cap on the number of enumerated trajectories.
    pub enumeration_cap: u64,
}

impl Tolerances {
    pub const DEFAULT: Tolerances = Tolerances {
        hermitian: 1e-12,
        jacobi: 1e-13,
        trace: 1e-12,
        positivity: 1e-10,
        eig_floor: 1e-14,
        completeness: 1e-10,
        probability_sum: 1e-12,
        fixed_point: 1e-10,
        stationary_gap: 1e-8,
        amplitude_floor: 1e-28,
        zero_probability: 1e-300,
        negative_entropy: 1e-8,
        bound_margin: 1e-9,
        resonance: 1e-12,
        enumeration_cap: 10_000_000,
    };
}

impl Default for Tolerances {
    fn default() -> Self {
        Self::DEFAULT
    }
}
