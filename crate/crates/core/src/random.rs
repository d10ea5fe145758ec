//! Seeded random problem instances shared by tests, gradient checks and the
//! acceptance suite.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::qp::QuadraticProgram;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Counter-based stream key: mixes several integers into one seed.
pub fn mix_seed(parts: &[u64]) -> u64 {
    // splitmix64 over the running state
    let mut state = 0x9E37_79B9_7F4A_7C15u64;
    for &p in parts {
        state ^= p.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        state = z ^ (z >> 31);
    }
    state
}

pub fn normal_matrix<R: Rng>(rng: &mut R, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

pub fn normal_vector<R: Rng>(rng: &mut R, len: usize) -> DVector<f64> {
    DVector::from_fn(len, |_, _| rng.sample(StandardNormal))
}

/// Strictly convex QP with a strictly feasible point, so that the feasible
/// set is nonempty and equality rows have full rank almost surely.
pub fn random_feasible_qp<R: Rng>(rng: &mut R, n: usize, m: usize, p: usize) -> QuadraticProgram {
    let l = normal_matrix(rng, n, n);
    let mut q = &l * l.transpose() / n as f64;
    for i in 0..n {
        q[(i, i)] += 0.1;
    }
    let c = normal_vector(rng, n) * 3.0;
    let z0 = normal_vector(rng, n);
    let g = normal_matrix(rng, m, n);
    let h = &g * &z0 + DVector::from_fn(m, |_, _| rng.gen_range(0.1..1.0));
    let a = normal_matrix(rng, p, n);
    let b = &a * &z0;
    QuadraticProgram::new(q, c, g, h, a, b).expect("random QP is valid by construction")
}
