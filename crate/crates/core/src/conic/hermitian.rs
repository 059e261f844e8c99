//! Real symmetric embedding of complex Hermitian matrices, and rank-one
//! recovery of beamforming vectors from lifted PSD solutions.

use super::ConicError;
use crate::{C64, CMat, CVec, RMat, RVec};

/// Embeds a complex matrix `H = A + iB` as the real `2n x 2n` matrix
/// `[[A, -B], [B, A]]`. No Hermitian validation; see [`embed_hermitian`].
pub fn embed_complex(h: &CMat) -> RMat {
    let (r, c) = h.shape();
    let mut out = RMat::zeros(2 * r, 2 * c);
    for j in 0..c {
        for i in 0..r {
            let v = h[(i, j)];
            out[(i, j)] = v.re;
            out[(i, j + c)] = -v.im;
            out[(i + r, j)] = v.im;
            out[(i + r, j + c)] = v.re;
        }
    }
    out
}

/// Embeds a Hermitian matrix as a real symmetric one. `H` is PSD iff the
/// embedding is PSD, every eigenvalue of `H` appears twice, and
/// `trace(embedding) = 2 trace(H)`; trace-based constraints must account for
/// the factor 2.
pub fn embed_hermitian(h: &CMat) -> Result<RMat, ConicError> {
    if h.nrows() != h.ncols() {
        return Err(ConicError::NotHermitian("matrix is not square".into()));
    }
    let dev = (h - h.adjoint()).norm();
    let scale = h.norm();
    if dev > 1e-10 * scale.max(1e-300) && dev > 1e-14 {
        return Err(ConicError::NotHermitian(format!(
            "deviation from Hermitian symmetry {dev:.3e} exceeds 1e-10 * {scale:.3e}"
        )));
    }
    Ok(embed_complex(h))
}

/// Inverse of [`embed_hermitian`] with symmetry averaging: maps a (nearly)
/// embedding-structured real symmetric `2n x 2n` matrix back to the complex
/// Hermitian `n x n` matrix it represents.
pub fn reconstruct_hermitian(x: &RMat) -> Result<CMat, ConicError> {
    let d = x.nrows();
    if x.ncols() != d || d % 2 != 0 {
        return Err(ConicError::BadDimension(format!(
            "embedded matrix must be square with even dimension, got {}x{}",
            d,
            x.ncols()
        )));
    }
    let n = d / 2;
    let mut out = CMat::zeros(n, n);
    for j in 0..n {
        for i in 0..n {
            let re = 0.5 * (x[(i, j)] + x[(i + n, j + n)]);
            let im = 0.5 * (x[(i + n, j)] - x[(i, j + n)]);
            out[(i, j)] = C64::new(re, im);
        }
    }
    // Hermitize against residual asymmetry.
    let herm = (&out + out.adjoint()) * C64::new(0.5, 0.0);
    Ok(herm)
}

/// Eigenvalues of a complex Hermitian matrix via its real embedding, sorted
/// descending. Each eigenvalue of `H` appears once (the doubled spectrum of
/// the embedding is collapsed by taking every other entry).
pub fn hermitian_eigenvalues(h: &CMat) -> Result<RVec, ConicError> {
    let emb = embed_hermitian(h)?;
    let mut ev: Vec<f64> = emb.symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(|a, b| b.partial_cmp(a).unwrap());
    Ok(RVec::from_iterator(h.nrows(), ev.into_iter().step_by(2)))
}

/// Dominant-eigenpair extraction from a (numerically) PSD Hermitian matrix.
///
/// Returns `v = sqrt(lambda_1) u_1` and the residual `lambda_2 / lambda_1`
/// (0 for the zero matrix). Errors if the matrix is indefinite beyond the
/// `-1e-9` eigenvalue floor.
pub fn extract_rank_one(x: &CMat) -> Result<(CVec, f64), ConicError> {
    let n = x.nrows();
    let emb = embed_hermitian(x)?;
    let eig = nalgebra::SymmetricEigen::new(emb);
    let mut order: Vec<usize> = (0..2 * n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).unwrap());
    let l1 = eig.eigenvalues[order[0]];
    let lmin = eig.eigenvalues[order[2 * n - 1]];
    if lmin < -1e-9 * l1.abs().max(1.0) {
        return Err(ConicError::Indefinite { min_eig: lmin });
    }
    if l1 <= 0.0 {
        return Ok((CVec::zeros(n), 0.0));
    }
    // The embedding doubles every eigenvalue: the second distinct one sits at
    // sorted position 2.
    let l2 = eig.eigenvalues[order[2]].max(0.0);
    let uemb = eig.eigenvectors.column(order[0]);
    let mut v = CVec::from_iterator(n, (0..n).map(|i| C64::new(uemb[i], uemb[i + n])));
    // The embedded eigenvector [a; b] represents a + ib up to norm 1 overall;
    // rescale to a unit complex vector before applying sqrt(lambda_1).
    let norm = v.norm();
    if norm > 0.0 {
        v /= C64::new(norm, 0.0);
    }
    v *= C64::new(l1.sqrt(), 0.0);
    Ok((v, l2 / l1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    fn random_complex(n: usize, rng: &mut ChaCha12Rng) -> CMat {
        CMat::from_fn(n, n, |_, _| C64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5))
    }

    fn random_hermitian(n: usize, rng: &mut ChaCha12Rng) -> CMat {
        let a = random_complex(n, rng);
        (&a + a.adjoint()) * C64::new(0.5, 0.0)
    }

    #[test]
    fn embed_real_scalar() {
        let h = CMat::from_element(1, 1, C64::new(1.0, 0.0));
        let e = embed_hermitian(&h).unwrap();
        assert_eq!(e, RMat::identity(2, 2));
    }

    #[test]
    fn embed_pauli_y_doubles_spectrum() {
        let mut h = CMat::zeros(2, 2);
        h[(0, 1)] = C64::new(0.0, -1.0);
        h[(1, 0)] = C64::new(0.0, 1.0);
        let e = embed_hermitian(&h).unwrap();
        let mut ev: Vec<f64> = e.symmetric_eigenvalues().iter().copied().collect();
        ev.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for (got, want) in ev.iter().zip([-1.0, -1.0, 1.0, 1.0]) {
            assert_relative_eq!(*got, want, epsilon = 1e-12);
        }
    }

    #[test]
    fn embed_rejects_non_hermitian() {
        let mut h = CMat::zeros(2, 2);
        h[(0, 1)] = C64::new(1.0, 0.0);
        assert!(embed_hermitian(&h).is_err());
    }

    #[test]
    fn eigenvalue_doubling_random() {
        let mut rng = ChaCha12Rng::seed_from_u64(9);
        for _ in 0..10 {
            let h = random_hermitian(5, &mut rng);
            let emb = embed_hermitian(&h).unwrap();
            let mut ev: Vec<f64> = emb.symmetric_eigenvalues().iter().copied().collect();
            ev.sort_by(|a, b| a.partial_cmp(b).unwrap());
            // pairs of equal values
            for p in 0..5 {
                assert_relative_eq!(ev[2 * p], ev[2 * p + 1], epsilon = 1e-9);
            }
            // and they match the collapsed spectrum helper
            let hev = hermitian_eigenvalues(&h).unwrap();
            for (p, v) in hev.iter().enumerate() {
                assert_relative_eq!(*v, ev[2 * (4 - p) + 1], epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn embedding_is_multiplicative() {
        // *-algebra homomorphism: embed(A B) = embed(A) embed(B), checked on
        // Hermitian pairs (the product itself need not be Hermitian).
        let mut rng = ChaCha12Rng::seed_from_u64(11);
        for _ in 0..10 {
            let a = random_hermitian(4, &mut rng);
            let b = random_hermitian(4, &mut rng);
            let lhs = embed_complex(&(&a * &b));
            let rhs = embed_complex(&a) * embed_complex(&b);
            assert!((lhs - rhs).norm() < 1e-10);
        }
    }

    #[test]
    fn reconstruct_round_trips() {
        let mut rng = ChaCha12Rng::seed_from_u64(13);
        let h = random_hermitian(6, &mut rng);
        let back = reconstruct_hermitian(&embed_hermitian(&h).unwrap()).unwrap();
        assert!((back - h).norm() < 1e-12);
    }

    #[test]
    fn extract_rank_one_cases() {
        let mut rng = ChaCha12Rng::seed_from_u64(17);
        // X = v v^H returns v up to a global phase.
        let v = CVec::from_fn(4, |_, _| C64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5));
        let x = &v * v.adjoint();
        let (got, res) = extract_rank_one(&x).unwrap();
        assert!(res <= 1e-12, "residual {res}");
        let phase = got.dotc(&v);
        let aligned = &got * (phase / C64::new(phase.norm(), 0.0));
        assert!((aligned - &v).norm() < 1e-8 * v.norm());

        // Isotropic matrix: residual 1.
        let x = CMat::identity(2, 2);
        let (_, res) = extract_rank_one(&x).unwrap();
        assert_relative_eq!(res, 1.0, epsilon = 1e-12);

        // Perturbation check: X = v v^H + eps I.
        let v = CVec::from_fn(3, |_, _| C64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5));
        let vn = &v / C64::new(v.norm(), 0.0);
        let x = &vn * vn.adjoint() + CMat::identity(3, 3) * C64::new(1e-8, 0.0);
        let (_, res) = extract_rank_one(&x).unwrap();
        assert_relative_eq!(res, 1e-8, max_relative = 1e-3);

        // Zero matrix.
        let (v0, res) = extract_rank_one(&CMat::zeros(3, 3)).unwrap();
        assert_eq!(res, 0.0);
        assert_eq!(v0.norm(), 0.0);

        // Indefinite beyond the floor errors.
        let mut x = CMat::zeros(2, 2);
        x[(0, 0)] = C64::new(1.0, 0.0);
        x[(1, 1)] = C64::new(-1e-3, 0.0);
        assert!(extract_rank_one(&x).is_err());
    }
}
