//! Dense complex linear algebra for small Hermitian and unitary matrices,
//! plus the quantum-information primitives built on it.

mod density;
mod eig;
mod matrix;
pub mod random;

pub use density::{
    gibbs_state, gibbs_weights, kl_divergence, partial_trace_env, partial_trace_env_matrix,
    quantum_rel_entropy, shannon_entropy, vn_entropy, DensityMatrix, RelEntropy,
};
pub use eig::{expm_i_hermitian, herm_eig, HermEig};
pub use matrix::{CMatrix, C64, I, ONE, ZERO};

#[cfg(test)]
pub(crate) use random as testutil;

#[cfg(test)]
mod proptests {
    use super::random::{random_density, random_hermitian};
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn eig_residuals_are_small(seed in any::<u64>(), n in 1usize..9) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = random_hermitian(&mut rng, n);
            let eig = herm_eig(&a).unwrap();
            let av = a.matmul(&eig.vectors);
            let vl = CMatrix::from_fn(n, n, |i, j| eig.vectors[(i, j)] * eig.values[j]);
            prop_assert!(av.max_abs_diff(&vl) <= 1e-10);
            prop_assert!(eig.vectors.unitarity_error() <= 1e-10);
        }

        #[test]
        fn expm_forward_then_back_is_identity(seed in any::<u64>(), t in -3.0f64..3.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let h = random_hermitian(&mut rng, 4);
            let u = expm_i_hermitian(&h, t).unwrap();
            let v = expm_i_hermitian(&h, -t).unwrap();
            prop_assert!(u.matmul(&v).max_abs_diff(&CMatrix::identity(4)) <= 1e-10);
        }

        #[test]
        fn partial_trace_is_linear_and_trace_preserving(seed in any::<u64>(), w in 0.0f64..1.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = random_density(&mut rng, 6);
            let b = random_density(&mut rng, 6);
            let mix = &a.matrix().scale_real(w) + &b.matrix().scale_real(1.0 - w);
            let lhs = partial_trace_env_matrix(&mix, 2, 3).unwrap();
            let ra = partial_trace_env_matrix(a.matrix(), 2, 3).unwrap();
            let rb = partial_trace_env_matrix(b.matrix(), 2, 3).unwrap();
            let rhs = &ra.scale_real(w) + &rb.scale_real(1.0 - w);
            prop_assert!(lhs.max_abs_diff(&rhs) <= 1e-14);
            prop_assert!((lhs.trace() - ONE).norm() <= 1e-12);
        }
    }
}
