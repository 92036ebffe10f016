use crate::error::{Error, Result};
use crate::tol::Tolerances;

use super::eig::{herm_eig, HermEig};
use super::matrix::{CMatrix, C64};

/// Positive semidefinite, unit-trace Hermitian matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    matrix: CMatrix,
}

impl DensityMatrix {
    /// Validates Hermiticity, unit trace and positivity.
    pub fn new(matrix: CMatrix) -> Result<Self> {
        let tol = Tolerances::DEFAULT;
        if !matrix.is_square() {
            return Err(Error::Dim(format!("{}x{} density matrix", matrix.rows(), matrix.cols())));
        }
        let herr = matrix.hermiticity_error();
        if herr > tol.hermitian {
            return Err(Error::InvalidState(format!("Hermiticity error {herr:e}")));
        }
        let tr = matrix.trace();
        if (tr.re - 1.0).abs() > tol.trace || tr.im.abs() > tol.trace {
            return Err(Error::InvalidState(format!("trace {tr}")));
        }
        let matrix = matrix.hermitian_part();
        let min = herm_eig(&matrix)?.values[0];
        if min < -tol.positivity {
            return Err(Error::InvalidState(format!("negative eigenvalue {min:e}")));
        }
        Ok(Self { matrix })
    }

    /// Hermitizes and rescales to unit trace before validating. For matrices
    /// that are density matrices up to round-off.
    pub fn from_numerical(matrix: &CMatrix) -> Result<Self> {
        let h = matrix.hermitian_part();
        let tr = h.trace().re;
        if !(tr > 0.0) {
            return Err(Error::InvalidState(format!("non-positive trace {tr}")));
        }
        Self::new(h.scale_real(1.0 / tr))
    }

    pub fn pure(psi: &[C64]) -> Result<Self> {
        let norm: f64 = psi.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(Error::InvalidState("zero vector".into()));
        }
        let v: Vec<C64> = psi.iter().map(|z| z / norm).collect();
        Self::from_numerical(&CMatrix::outer(&v, &v))
    }

    pub fn diagonal(probs: &[f64]) -> Result<Self> {
        Self::new(CMatrix::diag(probs))
    }

    pub fn maximally_mixed(d: usize) -> Self {
        Self { matrix: CMatrix::diag(&vec![1.0 / d as f64; d]) }
    }

    pub fn dim(&self) -> usize {
        self.matrix.rows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> CMatrix {
        self.matrix
    }

    pub fn eig(&self) -> Result<HermEig> {
        herm_eig(&self.matrix)
    }

    /// `tr(A rho)`.
    pub fn expectation(&self, a: &CMatrix) -> C64 {
        a.matmul(&self.matrix).trace()
    }

    pub fn kron(&self, other: &DensityMatrix) -> DensityMatrix {
        DensityMatrix { matrix: self.matrix.kron(&other.matrix) }
    }
}

/// Traces out the environment factor (the fast index) of a state on `d_s * d_e`.
pub fn partial_trace_env(rho: &DensityMatrix, d_s: usize, d_e: usize) -> Result<DensityMatrix> {
    Ok(DensityMatrix { matrix: partial_trace_env_matrix(rho.matrix(), d_s, d_e)? })
}

/// Partial trace over the environment for an arbitrary operator.
pub fn partial_trace_env_matrix(a: &CMatrix, d_s: usize, d_e: usize) -> Result<CMatrix> {
    if a.rows() != d_s * d_e || a.cols() != d_s * d_e {
        return Err(Error::Dim(format!(
            "partial trace of {}x{} over d_s={d_s}, d_e={d_e}",
            a.rows(),
            a.cols()
        )));
    }
    Ok(CMatrix::from_fn(d_s, d_s, |i, j| (0..d_e).map(|mu| a[(i * d_e + mu, j * d_e + mu)]).sum()))
}

/// Thermal state `exp(-beta h) / tr exp(-beta h)`.
pub fn gibbs_state(h: &CMatrix, beta: f64) -> Result<DensityMatrix> {
    if !(beta >= 0.0) {
        return Err(Error::Domain(format!("inverse temperature {beta}")));
    }
    let eig = herm_eig(h)?;
    let weights = gibbs_weights(&eig.values, beta);
    let w: Vec<C64> = weights.iter().map(|&x| C64::new(x, 0.0)).collect();
    let m = eig.with_values(&w);
    DensityMatrix::from_numerical(&m)
}

/// Normalized Boltzmann weights of a list of energies.
pub fn gibbs_weights(energies: &[f64], beta: f64) -> Vec<f64> {
    let e0 = energies.iter().copied().fold(f64::INFINITY, f64::min);
    let w: Vec<f64> = energies.iter().map(|&e| (-beta * (e - e0)).exp()).collect();
    let z: f64 = w.iter().sum();
    w.into_iter().map(|x| x / z).collect()
}

/// `x ln x` with `0 ln 0 = 0` and values below the eigenvalue floor treated as 0.
fn xlogx(x: f64) -> f64 {
    if x < Tolerances::DEFAULT.eig_floor {
        0.0
    } else {
        x * x.ln()
    }
}

/// Von Neumann entropy in nats.
pub fn vn_entropy(rho: &DensityMatrix) -> Result<f64> {
    let eig = rho.eig()?;
    Ok((-eig.values.iter().map(|&x| xlogx(x)).sum::<f64>()).max(0.0))
}

/// Shannon entropy in nats.
pub fn shannon_entropy(p: &[f64]) -> f64 {
    -p.iter().map(|&x| xlogx(x)).sum::<f64>()
}

/// Relative entropy that may be infinite when supports do not nest.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RelEntropy {
    Finite(f64),
    Infinite,
}

impl RelEntropy {
    pub fn value(self) -> f64 {
        match self {
            RelEntropy::Finite(x) => x,
            RelEntropy::Infinite => f64::INFINITY,
        }
    }

    pub fn is_finite(self) -> bool {
        matches!(self, RelEntropy::Finite(_))
    }
}

/// Quantum relative entropy `tr rho (ln rho - ln sigma)` in nats.
pub fn quantum_rel_entropy(rho: &DensityMatrix, sigma: &DensityMatrix) -> Result<RelEntropy> {
    if rho.dim() != sigma.dim() {
        return Err(Error::Dim(format!("D(rho||sigma) with dims {} and {}", rho.dim(), sigma.dim())));
    }
    let floor = Tolerances::DEFAULT.eig_floor;
    let er = rho.eig()?;
    let es = sigma.eig()?;
    let neg_entropy: f64 = er.values.iter().map(|&x| xlogx(x)).sum();
    let mut cross = 0.0;
    for (k, &s) in es.values.iter().enumerate() {
        let v = es.vector(k);
        let w = rho.matrix().mat_vec(&v);
        let weight: f64 = v.iter().zip(&w).map(|(a, b)| (a.conj() * b).re).sum();
        if s < floor {
            if weight > 1e-12 {
                return Ok(RelEntropy::Infinite);
            }
            continue;
        }
        cross += weight * s.ln();
    }
    Ok(RelEntropy::Finite(neg_entropy - cross))
}

/// Classical Kullback-Leibler divergence in nats.
pub fn kl_divergence(p: &[f64], q: &[f64]) -> RelEntropy {
    let mut d = 0.0;
    for (&a, &b) in p.iter().zip(q) {
        if a <= 0.0 {
            continue;
        }
        if b <= 0.0 {
            return RelEntropy::Infinite;
        }
        d += a * (a / b).ln();
    }
    RelEntropy::Finite(d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qlinalg::matrix::{I, ONE, ZERO};
    use crate::qlinalg::testutil::{random_density, random_hermitian, random_pure};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn partial_trace_of_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let rho = random_density(&mut rng, 2);
        let sigma = random_density(&mut rng, 3);
        let red = partial_trace_env(&rho.kron(&sigma), 2, 3).unwrap();
        assert!(red.matrix().max_abs_diff(rho.matrix()) < 1e-14);
    }

    #[test]
    fn partial_trace_of_bell_state() {
        let s = 1.0 / 2f64.sqrt();
        let bell = DensityMatrix::pure(&[C64::new(s, 0.0), ZERO, ZERO, C64::new(s, 0.0)]).unwrap();
        let red = partial_trace_env(&bell, 2, 2).unwrap();
        assert!(red.matrix().max_abs_diff(&CMatrix::diag(&[0.5, 0.5])) < 1e-15);
    }

    #[test]
    fn partial_trace_matches_double_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (ds, de) = (3, 2);
        let psi = random_pure(&mut rng, ds * de);
        let rho = DensityMatrix::pure(&psi).unwrap();
        let red = partial_trace_env(&rho, ds, de).unwrap();
        for i in 0..ds {
            for j in 0..ds {
                let mut acc = ZERO;
                for mu in 0..de {
                    acc += psi[i * de + mu] * psi[j * de + mu].conj();
                }
                assert!((red.matrix()[(i, j)] - acc).norm() < 1e-14);
            }
        }
    }

    #[test]
    fn partial_trace_dimension_mismatch() {
        let rho = DensityMatrix::maximally_mixed(4);
        assert!(matches!(partial_trace_env(&rho, 3, 2), Err(Error::Dim(_))));
    }

    #[test]
    fn gibbs_infinite_temperature() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let h = random_hermitian(&mut rng, 3);
        let g = gibbs_state(&h, 0.0).unwrap();
        assert!(g.matrix().max_abs_diff(&CMatrix::diag(&[1.0 / 3.0; 3])) < 1e-14);
    }

    #[test]
    fn gibbs_two_level() {
        let (eps, beta) = (0.8, 1.7);
        let g = gibbs_state(&CMatrix::diag(&[0.0, eps]), beta).unwrap();
        let p0 = 1.0 / (1.0 + (-beta * eps).exp());
        assert!((g.matrix()[(0, 0)].re - p0).abs() < 1e-15);
    }

    #[test]
    fn gibbs_commutes_with_hamiltonian() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let h = random_hermitian(&mut rng, 4);
        let g = gibbs_state(&h, 1.0).unwrap();
        assert!((g.matrix().trace() - ONE).norm() < 1e-14);
        assert!(g.eig().unwrap().values[0] > 0.0);
        assert!(h.commutator(g.matrix()).max_abs() <= 1e-10);
    }

    #[test]
    fn entropies() {
        let pure = DensityMatrix::pure(&[C64::new(0.6, 0.0), C64::new(0.0, 0.8)]).unwrap();
        assert!(vn_entropy(&pure).unwrap().abs() < 1e-14);
        let mixed = DensityMatrix::maximally_mixed(2);
        assert!((vn_entropy(&mixed).unwrap() - 2f64.ln()).abs() < 1e-15);
        let d = DensityMatrix::diagonal(&[0.3, 0.7]).unwrap();
        let expected = -0.3 * 0.3f64.ln() - 0.7 * 0.7f64.ln();
        assert!((vn_entropy(&d).unwrap() - expected).abs() < 1e-15);
    }

    #[test]
    fn relative_entropy_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let rho = random_density(&mut rng, 3);
        assert!(quantum_rel_entropy(&rho, &rho).unwrap().value().abs() < 1e-12);
        let zero = DensityMatrix::diagonal(&[1.0, 0.0]).unwrap();
        let d = quantum_rel_entropy(&zero, &DensityMatrix::maximally_mixed(2)).unwrap();
        assert!((d.value() - 2f64.ln()).abs() < 1e-14);
        assert_eq!(
            quantum_rel_entropy(&DensityMatrix::maximally_mixed(2), &zero).unwrap(),
            RelEntropy::Infinite
        );
    }

    #[test]
    fn commuting_pair_matches_classical_kl() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let u = crate::qlinalg::testutil::random_unitary(&mut rng, 4);
        let p = [0.1, 0.2, 0.3, 0.4];
        let q = [0.25, 0.05, 0.5, 0.2];
        let rho = DensityMatrix::from_numerical(&u.sandwich(&CMatrix::diag(&p))).unwrap();
        let sigma = DensityMatrix::from_numerical(&u.sandwich(&CMatrix::diag(&q))).unwrap();
        let kl: f64 = p.iter().zip(&q).map(|(a, b)| a * (a / b).ln()).sum();
        let d = quantum_rel_entropy(&rho, &sigma).unwrap().value();
        assert!((d - kl).abs() < 1e-12, "{d} vs {kl}");
    }

    #[test]
    fn klein_inequality_on_random_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for k in 0..1000 {
            let n = 2 + k % 3;
            let rho = random_density(&mut rng, n);
            let sigma = random_density(&mut rng, n);
            assert!(quantum_rel_entropy(&rho, &sigma).unwrap().value() >= -1e-10);
        }
    }

    #[test]
    fn density_validation_errors() {
        let not_unit = CMatrix::diag(&[0.5, 0.6]);
        assert!(DensityMatrix::new(not_unit).is_err());
        let negative = CMatrix::diag(&[1.2, -0.2]);
        assert!(DensityMatrix::new(negative).is_err());
        let non_herm = CMatrix::from_vec(2, 2, vec![C64::new(0.5, 0.0), I, ZERO, C64::new(0.5, 0.0)]);
        assert!(DensityMatrix::new(non_herm.unwrap()).is_err());
    }
}
