//! Random matrices for sampling experiments and tests.

use rand::Rng;

use super::density::DensityMatrix;
use super::eig::expm_i_hermitian;
use super::matrix::{CMatrix, C64};

fn uniform_c64<R: Rng + ?Sized>(rng: &mut R) -> C64 {
    C64::new(rng.random_range(-1.0..=1.0), rng.random_range(-1.0..=1.0))
}

/// Hermitian matrix with real and imaginary parts of the upper triangle iid
/// uniform in `[-1, 1]`, a real uniform diagonal, and the lower triangle
/// mirrored by conjugation.
pub fn random_hermitian<R: Rng + ?Sized>(rng: &mut R, n: usize) -> CMatrix {
    let mut m = CMatrix::zeros(n, n);
    for i in 0..n {
        m[(i, i)] = C64::new(rng.random_range(-1.0..=1.0), 0.0);
        for j in i + 1..n {
            let z = uniform_c64(rng);
            m[(i, j)] = z;
            m[(j, i)] = z.conj();
        }
    }
    m
}

/// Unitary generated by a random Hermitian matrix.
pub fn random_unitary<R: Rng + ?Sized>(rng: &mut R, n: usize) -> CMatrix {
    let h = random_hermitian(rng, n);
    expm_i_hermitian(&h, 2.0).expect("random Hermitian matrix diagonalizes")
}

/// Normalized state vector.
pub fn random_pure<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<C64> {
    let v: Vec<C64> = (0..n).map(|_| uniform_c64(rng)).collect();
    let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    v.into_iter().map(|z| z / norm).collect()
}

/// Full-rank mixed state `G G^H / tr(G G^H)`.
pub fn random_density<R: Rng + ?Sized>(rng: &mut R, n: usize) -> DensityMatrix {
    let g = CMatrix::from_fn(n, n, |_, _| uniform_c64(rng));
    let m = g.matmul(&g.adjoint());
    DensityMatrix::from_numerical(&m).expect("G G^H is a valid state")
}
