//! Cyclic Jacobi eigensolver for small Hermitian matrices.

use crate::error::{Error, Result};
use crate::tol::Tolerances;

use super::matrix::{CMatrix, C64, ZERO};

const MAX_SWEEPS: usize = 100;

/// Components with modulus below this are skipped when fixing eigenvector phases.
const PHASE_THRESHOLD: f64 = 1e-8;

/// Spectral decomposition `A = V diag(values) V^H`.
#[derive(Debug, Clone)]
pub struct HermEig {
    /// Eigenvalues in ascending order.
    pub values: Vec<f64>,
    /// Unitary matrix whose columns are the eigenvectors.
    pub vectors: CMatrix,
}

impl HermEig {
    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn vector(&self, k: usize) -> Vec<C64> {
        self.vectors.column(k)
    }

    /// Rebuilds `V diag(f(values)) V^H`.
    pub fn apply(&self, f: impl Fn(f64) -> C64) -> CMatrix {
        let fv: Vec<C64> = self.values.iter().map(|&x| f(x)).collect();
        self.with_values(&fv)
    }

    /// `V diag(values) V^H` for replacement eigenvalues.
    pub fn with_values(&self, fv: &[C64]) -> CMatrix {
        let n = self.dim();
        let v = &self.vectors;
        CMatrix::from_fn(n, n, |i, j| (0..n).map(|k| v[(i, k)] * fv[k] * v[(j, k)].conj()).sum())
    }
}

/// Eigen-decomposition of a Hermitian matrix.
///
/// Eigenvalues come back ascending. Each eigenvector is scaled so that its
/// first component of modulus above `1e-8` is real and positive, which makes
/// the output deterministic for nondegenerate spectra.
pub fn herm_eig(a: &CMatrix) -> Result<HermEig> {
    let tol = Tolerances::DEFAULT;
    let herr = a.hermiticity_error();
    if herr > tol.hermitian * a.max_abs().max(1.0) {
        return Err(Error::Hermiticity(herr));
    }
    let n = a.rows();
    let mut m = a.hermitian_part();
    let mut v = CMatrix::identity(n);
    let norm = m.frobenius_norm();
    let target = tol.jacobi * norm;

    let mut sweeps = 0;
    loop {
        let off = off_diagonal_norm(&m);
        if off <= target || off == 0.0 {
            break;
        }
        if sweeps == MAX_SWEEPS {
            return Err(Error::Convergence { sweeps, off });
        }
        sweeps += 1;
        for p in 0..n {
            for q in p + 1..n {
                rotate(&mut m, &mut v, p, q);
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[(i, i)].re.total_cmp(&m[(j, j)].re));
    let values = order.iter().map(|&i| m[(i, i)].re).collect();
    let mut vectors = CMatrix::from_fn(n, n, |r, c| v[(r, order[c])]);
    for c in 0..n {
        if let Some(r) = (0..n).find(|&r| vectors[(r, c)].norm() > PHASE_THRESHOLD) {
            let z = vectors[(r, c)];
            let phase = z.conj() / z.norm();
            for k in 0..n {
                vectors[(k, c)] *= phase;
            }
            vectors[(r, c)] = C64::new(vectors[(r, c)].norm(), 0.0);
        }
    }
    Ok(HermEig { values, vectors })
}

fn off_diagonal_norm(m: &CMatrix) -> f64 {
    let n = m.rows();
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                s += m[(i, j)].norm_sqr();
            }
        }
    }
    s.sqrt()
}

/// Zeroes `m[p][q]` with the unitary `J = diag-phase * real rotation`,
/// updating `m <- J^H m J` and `v <- v J`.
fn rotate(m: &mut CMatrix, v: &mut CMatrix, p: usize, q: usize) {
    let apq = m[(p, q)];
    let r = apq.norm();
    if r == 0.0 {
        return;
    }
    let n = m.rows();
    let phase = apq / r; // e^{i phi}
    let app = m[(p, p)].re;
    let aqq = m[(q, q)].re;
    let tau = (aqq - app) / (2.0 * r);
    let t = if tau == 0.0 { 1.0 } else { tau.signum() / (tau.abs() + (1.0 + tau * tau).sqrt()) };
    let c = 1.0 / (1.0 + t * t).sqrt();
    let s = t * c;
    let ph_conj = phase.conj();
    // J_pp = c, J_pq = s, J_qp = -s e^{-i phi}, J_qq = c e^{-i phi}
    let jqp = -ph_conj * s;
    let jqq = ph_conj * c;

    for k in 0..n {
        let akp = m[(k, p)];
        let akq = m[(k, q)];
        m[(k, p)] = akp * c + akq * jqp;
        m[(k, q)] = akp * s + akq * jqq;
        let vkp = v[(k, p)];
        let vkq = v[(k, q)];
        v[(k, p)] = vkp * c + vkq * jqp;
        v[(k, q)] = vkp * s + vkq * jqq;
    }
    for k in 0..n {
        let apk = m[(p, k)];
        let aqk = m[(q, k)];
        m[(p, k)] = apk * c + aqk * jqp.conj();
        m[(q, k)] = apk * s + aqk * jqq.conj();
    }
    m[(p, q)] = ZERO;
    m[(q, p)] = ZERO;
    m[(p, p)] = C64::new(m[(p, p)].re, 0.0);
    m[(q, q)] = C64::new(m[(q, q)].re, 0.0);
}

/// `exp(-i h t)` for Hermitian `h`, via the eigen-decomposition.
pub fn expm_i_hermitian(h: &CMatrix, t: f64) -> Result<CMatrix> {
    let eig = herm_eig(h)?;
    Ok(eig.apply(|x| C64::from_polar(1.0, -x * t)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qlinalg::matrix::{I, ONE};
    use crate::qlinalg::testutil::random_hermitian;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn check_decomposition(a: &CMatrix, eig: &HermEig) {
        let n = a.rows();
        let av = a.matmul(&eig.vectors);
        let vl = CMatrix::from_fn(n, n, |i, j| eig.vectors[(i, j)] * eig.values[j]);
        assert!(av.max_abs_diff(&vl) <= 1e-10, "AV - VL = {:e}", av.max_abs_diff(&vl));
        assert!(eig.vectors.unitarity_error() <= 1e-10);
        assert!(eig.values.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn pauli_x_spectrum() {
        let eig = herm_eig(&CMatrix::pauli_x()).unwrap();
        assert!((eig.values[0] + 1.0).abs() < 1e-15);
        assert!((eig.values[1] - 1.0).abs() < 1e-15);
        check_decomposition(&CMatrix::pauli_x(), &eig);
    }

    #[test]
    fn identity_is_deterministic() {
        let eig = herm_eig(&CMatrix::identity(3)).unwrap();
        assert_eq!(eig.values, vec![1.0, 1.0, 1.0]);
        assert_eq!(eig.vectors, CMatrix::identity(3));
    }

    #[test]
    fn random_reconstruction() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for n in [2, 3, 6, 10] {
            let a = random_hermitian(&mut rng, n);
            let eig = herm_eig(&a).unwrap();
            check_decomposition(&a, &eig);
            let rebuilt = eig.apply(|x| C64::new(x, 0.0));
            assert!(rebuilt.max_abs_diff(&a) <= 1e-10);
        }
    }

    #[test]
    fn phase_convention_holds() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let a = random_hermitian(&mut rng, 5);
        let eig = herm_eig(&a).unwrap();
        for c in 0..5 {
            let first = (0..5).map(|r| eig.vectors[(r, c)]).find(|z| z.norm() > 1e-8).unwrap();
            assert_eq!(first.im, 0.0);
            assert!(first.re > 0.0);
        }
    }

    #[test]
    fn rejects_non_hermitian() {
        let a = CMatrix::from_vec(2, 2, vec![ONE, I, I, ONE]).unwrap();
        assert!(matches!(herm_eig(&a), Err(Error::Hermiticity(_))));
    }

    #[test]
    fn expm_pauli_z() {
        let theta = 0.37;
        let u = expm_i_hermitian(&CMatrix::pauli_z(), theta).unwrap();
        let expected =
            CMatrix::diag_complex(&[C64::from_polar(1.0, -theta), C64::from_polar(1.0, theta)]);
        assert!(u.max_abs_diff(&expected) < 1e-15);
    }

    #[test]
    fn expm_at_zero_time_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let h = random_hermitian(&mut rng, 4);
        let u = expm_i_hermitian(&h, 0.0).unwrap();
        assert!(u.max_abs_diff(&CMatrix::identity(4)) < 1e-12);
    }

    /// Scaling-and-squaring Taylor series, independent of the eigen route.
    fn taylor_expm(a: &CMatrix) -> CMatrix {
        let n = a.rows();
        let norm = a.norm_1();
        let squarings = if norm > 0.25 { (norm / 0.25).log2().ceil() as u32 } else { 0 };
        let scaled = a.scale_real(1.0 / f64::from(2u32.pow(squarings)));
        let mut term = CMatrix::identity(n);
        let mut sum = CMatrix::identity(n);
        for k in 1..=30 {
            term = term.matmul(&scaled).scale_real(1.0 / k as f64);
            sum += &term;
        }
        for _ in 0..squarings {
            sum = sum.matmul(&sum);
        }
        sum
    }

    #[test]
    fn expm_matches_taylor_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let h = random_hermitian(&mut rng, 4);
        let t = 0.7;
        let u = expm_i_hermitian(&h, t).unwrap();
        let oracle = taylor_expm(&h.scale(C64::new(0.0, -t)));
        assert!(u.max_abs_diff(&oracle) <= 1e-9, "{:e}", u.max_abs_diff(&oracle));
        assert!(u.unitarity_error() <= 1e-10);
    }

    #[test]
    fn handles_already_diagonal_and_degenerate() {
        let a = CMatrix::diag(&[3.0, -1.0, 3.0, 0.5]);
        let eig = herm_eig(&a).unwrap();
        assert_eq!(eig.values, vec![-1.0, 0.5, 3.0, 3.0]);
        check_decomposition(&a, &eig);
    }
}
