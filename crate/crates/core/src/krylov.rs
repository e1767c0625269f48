//! Lanczos approximation of `exp(-i tau H) v` for Hermitian `H`.

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;

use crate::error::Result;
use crate::spectral::{C64, ZERO};

#[derive(Clone, Debug)]
pub struct KrylovOutcome {
    pub vector: Vec<C64>,
    /// A posteriori estimate `beta_m |e_m^T exp(-i tau T_m) e_1| ||v||`.
    pub error_estimate: f64,
    /// Krylov dimension actually used (smaller on breakdown).
    pub dimension: usize,
}

// Fixed chunks summed in order keep reductions bit-reproducible for any
// thread count.
const CHUNK: usize = 4096;

fn dot(a: &[C64], b: &[C64]) -> C64 {
    a.par_chunks(CHUNK)
        .zip(b.par_chunks(CHUNK))
        .map(|(x, y)| x.iter().zip(y).map(|(x, y)| x.conj() * y).sum::<C64>())
        .collect::<Vec<_>>()
        .into_iter()
        .sum()
}

pub(crate) fn norm(a: &[C64]) -> f64 {
    a.par_chunks(CHUNK)
        .map(|x| x.iter().map(|v| v.norm_sqr()).sum::<f64>())
        .collect::<Vec<_>>()
        .into_iter()
        .sum::<f64>()
        .sqrt()
}

fn axpy(y: &mut [C64], alpha: C64, x: &[C64]) {
    y.par_iter_mut().zip(x).for_each(|(yi, xi)| *yi += alpha * xi);
}

/// `beta0 Q exp(-i tau Λ) Q^T e_1` for the tridiagonal `T = Q Λ Q^T`.
fn small_exponential(alpha: &[f64], beta: &[f64], tau: f64, beta0: f64) -> Vec<C64> {
    let dim = alpha.len();
    let mut t = DMatrix::<f64>::zeros(dim, dim);
    for i in 0..dim {
        t[(i, i)] = alpha[i];
        if i + 1 < dim {
            t[(i, i + 1)] = beta[i];
            t[(i + 1, i)] = beta[i];
        }
    }
    let eig = SymmetricEigen::new(t);
    let mut y = vec![ZERO; dim];
    for (col, &lambda) in eig.eigenvalues.iter().enumerate() {
        let phase = C64::from_polar(1.0, -tau * lambda) * eig.eigenvectors[(0, col)];
        for (row, slot) in y.iter_mut().enumerate() {
            *slot += eig.eigenvectors[(row, col)] * phase;
        }
    }
    y.iter_mut().for_each(|x| *x *= beta0);
    y
}

/// Approximates `exp(-i tau H) v` from a Krylov space of dimension at most `m`.
///
/// `apply` computes `H x`. Basis vectors are fully reorthogonalized. The
/// iteration stops early once the error estimate drops to `tol` (pass 0 to
/// always build the full space).
pub fn lanczos_expm(
    mut apply: impl FnMut(&[C64]) -> Result<Vec<C64>>,
    v: &[C64],
    tau: f64,
    m: usize,
    tol: f64,
) -> Result<KrylovOutcome> {
    let beta0 = norm(v);
    if beta0 == 0.0 || tau == 0.0 {
        return Ok(KrylovOutcome {
            vector: v.to_vec(),
            error_estimate: 0.0,
            dimension: 0,
        });
    }
    let m = m.max(1);
    let mut basis: Vec<Vec<C64>> = Vec::with_capacity(m);
    basis.push(v.iter().map(|x| x / beta0).collect());
    let mut alpha = Vec::with_capacity(m);
    let mut beta: Vec<f64> = Vec::with_capacity(m);
    let mut y;
    let mut estimate;
    loop {
        let j = alpha.len();
        let mut w = apply(&basis[j])?;
        let a = dot(&basis[j], &w).re;
        alpha.push(a);
        axpy(&mut w, C64::new(-a, 0.0), &basis[j]);
        if j > 0 {
            axpy(&mut w, C64::new(-beta[j - 1], 0.0), &basis[j - 1]);
        }
        for b in &basis {
            let proj = dot(b, &w);
            axpy(&mut w, -proj, b);
        }
        let b = norm(&w);
        let scale = alpha.iter().fold(0.0f64, |s, x| s.max(x.abs())).max(1.0);
        y = small_exponential(&alpha, &beta, tau, beta0);
        if b <= 1e-13 * scale {
            // invariant subspace: the projection is exact
            estimate = 0.0;
            break;
        }
        estimate = b * y[j].norm();
        if j + 1 == m || (tol > 0.0 && estimate <= tol) {
            break;
        }
        beta.push(b);
        basis.push(w.iter().map(|x| x / b).collect());
    }

    let mut out = vec![ZERO; v.len()];
    for (coef, b) in y.iter().zip(&basis) {
        axpy(&mut out, *coef, b);
    }
    Ok(KrylovOutcome {
        vector: out,
        error_estimate: estimate,
        dimension: alpha.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_hermitian(n: usize, seed: u64) -> DMatrix<C64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = DMatrix::<C64>::from_fn(n, n, |_, _| {
            C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
        });
        (&a + a.adjoint()) * C64::new(0.5, 0.0)
    }

    #[test]
    fn matches_dense_exponential() {
        let n = 40;
        let h = random_hermitian(n, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let v: Vec<C64> = (0..n)
            .map(|_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect();
        let tau = 0.2;
        // dense reference through the Hermitian eigendecomposition
        let eig = h.clone().symmetric_eigen();
        let phases = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| C64::from_polar(1.0, -tau * l)));
        let u = &eig.eigenvectors * phases * eig.eigenvectors.adjoint();
        let reference = &u * nalgebra::DVector::from_vec(v.clone());

        let out = lanczos_expm(
            |x| {
                let xv = nalgebra::DVector::from_vec(x.to_vec());
                Ok((&h * xv).as_slice().to_vec())
            },
            &v,
            tau,
            16,
            0.0,
        )
        .unwrap();
        let err: f64 = out
            .vector
            .iter()
            .zip(reference.iter())
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            .sqrt();
        assert!(err < 1e-10, "err {err:e}");
        assert!(out.error_estimate < 1e-8);
        let n_in = norm(&v);
        assert!((norm(&out.vector) - n_in).abs() < 1e-12 * n_in);
    }

    #[test]
    fn breakdown_on_eigenvector_is_exact() {
        let diag = [1.0, 2.0, 3.0];
        let v = vec![ZERO, C64::new(2.0, 0.0), ZERO];
        let out = lanczos_expm(
            |x| Ok(x.iter().zip(diag).map(|(a, d)| a * d).collect()),
            &v,
            0.7,
            12,
            0.0,
        )
        .unwrap();
        assert_eq!(out.dimension, 1);
        let expected = C64::from_polar(2.0, -0.7 * 2.0);
        assert!((out.vector[1] - expected).norm() < 1e-14);
        assert_eq!(out.error_estimate, 0.0);
    }

    #[test]
    fn zero_step_is_identity() {
        let v = vec![C64::new(1.0, 2.0); 5];
        let out = lanczos_expm(|_| unreachable!(), &v, 0.0, 12, 0.0).unwrap();
        assert_eq!(out.vector, v);
    }

    #[test]
    fn early_stop_meets_tolerance_with_fewer_vectors() {
        let n = 64;
        let diag: Vec<f64> = (0..n).map(|i| (i as f64 * 0.37).sin()).collect();
        let v: Vec<C64> = (0..n).map(|i| C64::new(1.0, i as f64 / n as f64)).collect();
        let apply = |x: &[C64]| Ok(x.iter().zip(&diag).map(|(a, d)| a * d).collect::<Vec<_>>());
        let full = lanczos_expm(apply, &v, 0.1, 30, 0.0).unwrap();
        let early = lanczos_expm(apply, &v, 0.1, 30, 1e-9).unwrap();
        assert!(early.dimension < full.dimension);
        assert!(early.error_estimate <= 1e-9);
        let err: f64 = early.vector.iter().zip(&full.vector).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt();
        assert!(err < 1e-9, "err {err:e}");
        for (e, d) in early.vector.iter().zip(&diag).zip(&v).map(|((e, d), x)| (e, x * C64::from_polar(1.0, -0.1 * d))) {
            assert!((e - d).norm() < 1e-9);
        }
    }
}
