//! Dense complex linear-algebra kernels.
//!
//! Matrices are `ndarray::Array2<Complex64>` in the default row-major
//! storage order. The `vec`/`unvec` pair always stacks *columns*; the
//! Kronecker-vectorization identities used by the sensing-matrix
//! construction depend on that convention.

use ndarray::{linalg::general_mat_mul, Array1, Array2, ArrayView2, Axis};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CMat = Array2<Complex64>;
pub type CVec = Array1<Complex64>;

/// Complex matrix product computed as four real GEMMs.
///
/// Splitting into real/imaginary parts routes the heavy lifting through
/// `matrixmultiply`'s f64 kernels, which is considerably faster than a
/// naive complex triple loop at the Gram-matrix sizes used for coherence
/// evaluation.
pub fn matmul<'a, 'b, A, B>(a: A, b: B) -> CMat
where
    A: Into<ArrayView2<'a, Complex64>>,
    B: Into<ArrayView2<'b, Complex64>>,
{
    let a = a.into();
    let b = b.into();
    assert_eq!(
        a.ncols(),
        b.nrows(),
        "matmul inner dimensions {}x{} vs {}x{}",
        a.nrows(),
        a.ncols(),
        b.nrows(),
        b.ncols()
    );
    let ar = a.mapv(|z| z.re);
    let ai = a.mapv(|z| z.im);
    let br = b.mapv(|z| z.re);
    let bi = b.mapv(|z| z.im);

    let mut cr = Array2::<f64>::zeros((a.nrows(), b.ncols()));
    let mut ci = cr.clone();
    general_mat_mul(1.0, &ar, &br, 0.0, &mut cr);
    general_mat_mul(-1.0, &ai, &bi, 1.0, &mut cr);
    general_mat_mul(1.0, &ar, &bi, 0.0, &mut ci);
    general_mat_mul(1.0, &ai, &br, 1.0, &mut ci);

    let mut out = CMat::zeros((a.nrows(), b.ncols()));
    ndarray::Zip::from(&mut out)
        .and(&cr)
        .and(&ci)
        .for_each(|o, &re, &im| *o = Complex64::new(re, im));
    out
}

/// `a * v` for a column vector.
pub fn matvec(a: &CMat, v: &CVec) -> CVec {
    let col = v.view().insert_axis(Axis(1));
    matmul(a.view(), col).index_axis(Axis(1), 0).to_owned()
}

/// Conjugate transpose.
pub fn adjoint(a: &CMat) -> CMat {
    let mut out = CMat::zeros((a.ncols(), a.nrows()));
    for i in 0..a.nrows() {
        for j in 0..a.ncols() {
            out[[j, i]] = a[[i, j]].conj();
        }
    }
    out
}

/// Entrywise conjugate.
pub fn conj(a: &CMat) -> CMat {
    a.mapv(|z| z.conj())
}

/// Real and imaginary parts of the Gram matrix `a^H a`.
///
/// Contiguous transposes keep all four real GEMMs on fast paths; the
/// parts stay separate so coherence scans avoid building 16-byte complex
/// entries.
pub fn gram_parts(a: &CMat) -> (Array2<f64>, Array2<f64>) {
    let ar = a.mapv(|z| z.re);
    let ai = a.mapv(|z| z.im);
    let art = ar.t().to_owned();
    let ait = ai.t().to_owned();
    let n = a.ncols();
    let mut re = Array2::<f64>::zeros((n, n));
    general_mat_mul(1.0, &art, &ar, 0.0, &mut re);
    general_mat_mul(1.0, &ait, &ai, 1.0, &mut re);
    let mut im = Array2::<f64>::zeros((n, n));
    general_mat_mul(1.0, &art, &ai, 0.0, &mut im);
    general_mat_mul(-1.0, &ait, &ar, 1.0, &mut im);
    (re, im)
}

/// Gram matrix `a^H a`.
pub fn gram(a: &CMat) -> CMat {
    let (re, im) = gram_parts(a);
    let n = re.nrows();
    let mut out = CMat::zeros((n, n));
    ndarray::Zip::from(&mut out)
        .and(&re)
        .and(&im)
        .for_each(|o, &r, &i| *o = Complex64::new(r, i));
    out
}

/// Squared column mutual coherence, computed block-wise over the upper
/// triangle of the Gram matrix so only ~half the GEMM work is done.
///
/// Returns an error for a zero column (undefined normalization).
pub(crate) fn coherence_squared(a: &CMat) -> crate::error::Result<f64> {
    use ndarray::s;
    let n = a.ncols();
    let ar = a.mapv(|z| z.re);
    let ai = a.mapv(|z| z.im);
    let art = ar.t().to_owned();
    let ait = ai.t().to_owned();

    let block = 256usize;
    let starts: Vec<usize> = (0..n).step_by(block).collect();

    let mut norms_sq = vec![0.0f64; n];
    for j in 0..n {
        let mut acc = 0.0;
        for i in 0..a.nrows() {
            acc += ar[[i, j]] * ar[[i, j]] + ai[[i, j]] * ai[[i, j]];
        }
        if acc <= 0.0 {
            return Err(crate::error::Error::DegenerateInput(format!(
                "column {} has zero norm",
                j
            )));
        }
        norms_sq[j] = acc;
    }

    let mut mu_sq = 0.0f64;
    let mut re = Array2::<f64>::zeros((block, block));
    let mut im = Array2::<f64>::zeros((block, block));
    for &bi in &starts {
        let ei = (bi + block).min(n);
        for &bj in &starts {
            if bj < bi {
                continue;
            }
            let ej = (bj + block).min(n);
            let (ri, rj) = (ei - bi, ej - bj);
            let lt_r = art.slice(s![bi..ei, ..]);
            let lt_i = ait.slice(s![bi..ei, ..]);
            let rt_r = ar.slice(s![.., bj..ej]);
            let rt_i = ai.slice(s![.., bj..ej]);
            let mut re_v = re.slice_mut(s![..ri, ..rj]);
            general_mat_mul(1.0, &lt_r, &rt_r, 0.0, &mut re_v);
            general_mat_mul(1.0, &lt_i, &rt_i, 1.0, &mut re_v);
            let mut im_v = im.slice_mut(s![..ri, ..rj]);
            general_mat_mul(1.0, &lt_r, &rt_i, 0.0, &mut im_v);
            general_mat_mul(-1.0, &lt_i, &rt_r, 1.0, &mut im_v);
            for p in 0..ri {
                let col0 = if bi == bj { p + 1 } else { 0 };
                for q in col0..rj {
                    let e = re[[p, q]] * re[[p, q]] + im[[p, q]] * im[[p, q]];
                    let r = e / (norms_sq[bi + p] * norms_sq[bj + q]);
                    if r > mu_sq {
                        mu_sq = r;
                    }
                }
            }
        }
    }
    Ok(mu_sq)
}

pub fn frobenius_norm(a: &CMat) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub fn vec_norm(v: &CVec) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Relative Frobenius distance `||a-b|| / ||b||` (absolute when `b` is zero).
pub fn rel_err(a: &CMat, b: &CMat) -> f64 {
    let denom = frobenius_norm(b);
    let num = frobenius_norm(&(a - b));
    if denom == 0.0 {
        num
    } else {
        num / denom
    }
}

pub fn rel_err_vec(a: &CVec, b: &CVec) -> f64 {
    let denom = vec_norm(b);
    let num = vec_norm(&(a - b));
    if denom == 0.0 {
        num
    } else {
        num / denom
    }
}

/// Kronecker product: block (i,j) of the result is `a[i,j] * b`.
pub fn kron(a: &CMat, b: &CMat) -> CMat {
    let (ra, ca) = a.dim();
    let (rb, cb) = b.dim();
    let mut out = CMat::zeros((ra * rb, ca * cb));
    for ia in 0..ra {
        for ja in 0..ca {
            let s = a[[ia, ja]];
            if s == Complex64::ZERO {
                continue;
            }
            for ib in 0..rb {
                for jb in 0..cb {
                    out[[ia * rb + ib, ja * cb + jb]] = s * b[[ib, jb]];
                }
            }
        }
    }
    out
}

/// Transposed Khatri-Rao (row-wise Kronecker) product.
///
/// Row `n` of the result is `kron(a.row(n), b.row(n))`; both inputs must
/// have the same number of rows.
pub fn transposed_khatri_rao(a: &CMat, b: &CMat) -> Result<CMat> {
    if a.nrows() != b.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "transposed Khatri-Rao row counts {} vs {}",
            a.nrows(),
            b.nrows()
        )));
    }
    let (n, ca) = a.dim();
    let cb = b.ncols();
    let mut out = CMat::zeros((n, ca * cb));
    for r in 0..n {
        for ja in 0..ca {
            let s = a[[r, ja]];
            for jb in 0..cb {
                out[[r, ja * cb + jb]] = s * b[[r, jb]];
            }
        }
    }
    Ok(out)
}

/// Column-stacking vectorization.
pub fn vec_mat(a: &CMat) -> CVec {
    let (rows, cols) = a.dim();
    let mut out = CVec::zeros(rows * cols);
    for j in 0..cols {
        for i in 0..rows {
            out[j * rows + i] = a[[i, j]];
        }
    }
    out
}

/// Inverse of [`vec_mat`].
pub fn unvec_mat(v: &CVec, rows: usize, cols: usize) -> Result<CMat> {
    if v.len() != rows * cols {
        return Err(Error::DimensionMismatch(format!(
            "unvec: length {} != {}x{}",
            v.len(),
            rows,
            cols
        )));
    }
    let mut out = CMat::zeros((rows, cols));
    for j in 0..cols {
        for i in 0..rows {
            out[[i, j]] = v[j * rows + i];
        }
    }
    Ok(out)
}

/// Condition-number guard used by [`lstsq`]: the ratio of extreme
/// R-diagonal magnitudes is a cheap lower bound on cond(a).
const COND_LIMIT: f64 = 1e12;

/// Least-squares solve `min_X ||a X - b||_F` via Householder QR.
///
/// Requires `a.nrows() >= a.ncols()` and full column rank; a diagonal
/// ratio of the triangular factor above `1e12` is reported as a
/// numerical-rank error. Supports in the pursuit algorithms stay small,
/// so no pivoting is needed.
pub fn lstsq(a: &CMat, b: &CMat) -> Result<CMat> {
    let (m, n) = a.dim();
    let p = b.ncols();
    if b.nrows() != m {
        return Err(Error::DimensionMismatch(format!(
            "lstsq: lhs has {} rows, rhs has {}",
            m,
            b.nrows()
        )));
    }
    if m < n {
        return Err(Error::DimensionMismatch(format!(
            "lstsq: underdetermined system {}x{}",
            m, n
        )));
    }
    if n == 0 {
        return Ok(CMat::zeros((0, p)));
    }

    let mut r = a.clone();
    let mut y = b.clone();

    for k in 0..n {
        let mut nrm2 = 0.0;
        for i in k..m {
            nrm2 += r[[i, k]].norm_sqr();
        }
        let nrm = nrm2.sqrt();
        if nrm == 0.0 {
            return Err(Error::NumericalRank(format!(
                "lstsq: column {} is zero below the diagonal",
                k
            )));
        }
        let x0 = r[[k, k]];
        let phase = if x0.norm() == 0.0 {
            Complex64::new(1.0, 0.0)
        } else {
            x0 / x0.norm()
        };
        let alpha = -phase * nrm;
        let v0 = x0 - alpha;
        let vnorm2 = 2.0 * (nrm2 + nrm * x0.norm());
        let tau = 2.0 / vnorm2;

        // Reflector v lives in column k (v0 at the pivot); apply
        // H = I - tau v v^H to the trailing columns of r and to y.
        for j in (k + 1)..n {
            let mut w = v0.conj() * r[[k, j]];
            for i in (k + 1)..m {
                w += r[[i, k]].conj() * r[[i, j]];
            }
            let s = tau * w;
            r[[k, j]] -= s * v0;
            for i in (k + 1)..m {
                let vik = r[[i, k]];
                r[[i, j]] -= s * vik;
            }
        }
        for j in 0..p {
            let mut w = v0.conj() * y[[k, j]];
            for i in (k + 1)..m {
                w += r[[i, k]].conj() * y[[i, j]];
            }
            let s = tau * w;
            y[[k, j]] -= s * v0;
            for i in (k + 1)..m {
                let vik = r[[i, k]];
                y[[i, j]] -= s * vik;
            }
        }
        r[[k, k]] = alpha;
        for i in (k + 1)..m {
            r[[i, k]] = Complex64::ZERO;
        }
    }

    let mut dmax = 0.0_f64;
    let mut dmin = f64::INFINITY;
    for k in 0..n {
        let d = r[[k, k]].norm();
        dmax = dmax.max(d);
        dmin = dmin.min(d);
    }
    if dmin == 0.0 || dmax / dmin > COND_LIMIT {
        return Err(Error::NumericalRank(format!(
            "lstsq: condition estimate {:.3e} exceeds {:.0e}",
            if dmin == 0.0 {
                f64::INFINITY
            } else {
                dmax / dmin
            },
            COND_LIMIT
        )));
    }

    let mut x = CMat::zeros((n, p));
    for j in 0..p {
        for i in (0..n).rev() {
            let mut s = y[[i, j]];
            for l in (i + 1)..n {
                s -= r[[i, l]] * x[[l, j]];
            }
            x[[i, j]] = s / r[[i, i]];
        }
    }
    Ok(x)
}

/// Vector right-hand-side convenience wrapper around [`lstsq`].
pub fn lstsq_vec(a: &CMat, y: &CVec) -> Result<CVec> {
    let b = y.view().insert_axis(Axis(1)).to_owned();
    Ok(lstsq(a, &b)?.index_axis(Axis(1), 0).to_owned())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::Rng;
    use rand_chacha::{rand_core::SeedableRng, ChaCha20Rng};

    fn randn_mat(rng: &mut impl Rng, rows: usize, cols: usize) -> CMat {
        CMat::from_shape_fn((rows, cols), |_| {
            Complex64::new(
                rng.sample::<f64, _>(rand_distr::StandardNormal),
                rng.sample::<f64, _>(rand_distr::StandardNormal),
            )
        })
    }

    fn eye(n: usize) -> CMat {
        CMat::from_shape_fn((n, n), |(i, j)| {
            if i == j {
                Complex64::new(1.0, 0.0)
            } else {
                Complex64::ZERO
            }
        })
    }

    #[test]
    fn kron_identity_case() {
        let out = kron(&eye(2), &eye(2));
        assert_eq!(rel_err(&out, &eye(4)), 0.0);
    }

    #[test]
    fn kron_scalar_case() {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let b = randn_mat(&mut rng, 3, 4);
        let a = CMat::from_elem((1, 1), Complex64::new(2.0, 0.0));
        let out = kron(&a, &b);
        assert!(rel_err(&out, &b.mapv(|z| 2.0 * z)) < 1e-15);
    }

    #[test]
    fn kron_matches_quadruple_loop_oracle() {
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        let a = randn_mat(&mut rng, 3, 2);
        let b = randn_mat(&mut rng, 3, 2);
        let out = kron(&a, &b);
        for ia in 0..3 {
            for ja in 0..2 {
                for ib in 0..3 {
                    for jb in 0..2 {
                        let expect = a[[ia, ja]] * b[[ib, jb]];
                        let got = out[[ia * 3 + ib, ja * 2 + jb]];
                        assert_abs_diff_eq!(got.re, expect.re, epsilon = 1e-15);
                        assert_abs_diff_eq!(got.im, expect.im, epsilon = 1e-15);
                    }
                }
            }
        }
    }

    #[test]
    fn kron_mixed_product_property() {
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        for _ in 0..20 {
            let a = randn_mat(&mut rng, 3, 2);
            let c = randn_mat(&mut rng, 2, 4);
            let b = randn_mat(&mut rng, 2, 3);
            let d = randn_mat(&mut rng, 3, 2);
            let lhs = matmul(&kron(&a, &b), &kron(&c, &d));
            let rhs = kron(&matmul(&a, &c), &matmul(&b, &d));
            assert!(rel_err(&lhs, &rhs) < 1e-12);
        }
    }

    #[test]
    fn tkr_all_ones() {
        let ones = CMat::from_elem((2, 2), Complex64::new(1.0, 0.0));
        let out = transposed_khatri_rao(&ones, &ones).unwrap();
        assert_eq!(out.dim(), (2, 4));
        assert!(out
            .iter()
            .all(|z| (z - Complex64::new(1.0, 0.0)).norm() == 0.0));
    }

    #[test]
    fn tkr_single_row_equals_kron() {
        let mut rng = ChaCha20Rng::seed_from_u64(4);
        let a = randn_mat(&mut rng, 1, 3);
        let b = randn_mat(&mut rng, 1, 4);
        let out = transposed_khatri_rao(&a, &b).unwrap();
        assert!(rel_err(&out, &kron(&a, &b)) < 1e-15);
    }

    #[test]
    fn tkr_rowwise_kron_oracle() {
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let a = randn_mat(&mut rng, 4, 3);
        let b = randn_mat(&mut rng, 4, 5);
        let out = transposed_khatri_rao(&a, &b).unwrap();
        assert_eq!(out.dim(), (4, 15));
        for r in 0..4 {
            let ra = a.row(r).insert_axis(Axis(0)).to_owned();
            let rb = b.row(r).insert_axis(Axis(0)).to_owned();
            let expect = kron(&ra, &rb);
            for c in 0..15 {
                assert!((out[[r, c]] - expect[[0, c]]).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn tkr_row_mismatch_errors() {
        let a = CMat::zeros((2, 2));
        let b = CMat::zeros((3, 2));
        assert!(matches!(
            transposed_khatri_rao(&a, &b),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn lstsq_square_invertible() {
        let mut rng = ChaCha20Rng::seed_from_u64(6);
        let a = randn_mat(&mut rng, 4, 4);
        let b = randn_mat(&mut rng, 4, 2);
        let x = lstsq(&a, &b).unwrap();
        assert!(rel_err(&matmul(&a, &x), &b) < 1e-10);
    }

    #[test]
    fn lstsq_consistent_system_zero_residual() {
        let mut rng = ChaCha20Rng::seed_from_u64(7);
        let a = randn_mat(&mut rng, 8, 3);
        let x_true = randn_mat(&mut rng, 3, 2);
        let b = matmul(&a, &x_true);
        let x = lstsq(&a, &b).unwrap();
        assert!(rel_err(&matmul(&a, &x), &b) < 1e-10);
        assert!(rel_err(&x, &x_true) < 1e-10);
    }

    #[test]
    fn lstsq_matches_normal_equations_oracle() {
        let mut rng = ChaCha20Rng::seed_from_u64(8);
        let a = randn_mat(&mut rng, 10, 3);
        let b = randn_mat(&mut rng, 10, 2);
        let x = lstsq(&a, &b).unwrap();
        // (a^H a)^{-1} a^H b via a small explicit solve
        let aha = gram(&a);
        let ahb = matmul(&adjoint(&a), &b);
        let oracle = lstsq(&aha, &ahb).unwrap();
        assert!(rel_err(&x, &oracle) < 1e-9);
    }

    #[test]
    fn lstsq_residual_orthogonality() {
        let mut rng = ChaCha20Rng::seed_from_u64(9);
        for _ in 0..20 {
            let a = randn_mat(&mut rng, 12, 4);
            let b = randn_mat(&mut rng, 12, 3);
            let x = lstsq(&a, &b).unwrap();
            let resid = &matmul(&a, &x) - &b;
            let lhs = frobenius_norm(&matmul(&adjoint(&a), &resid));
            let rhs = frobenius_norm(&matmul(&adjoint(&a), &b));
            assert!(lhs / rhs < 1e-9, "orthogonality ratio {}", lhs / rhs);
        }
    }

    #[test]
    fn lstsq_rank_deficient_errors() {
        let mut rng = ChaCha20Rng::seed_from_u64(10);
        let col = randn_mat(&mut rng, 6, 1);
        let mut a = CMat::zeros((6, 2));
        for i in 0..6 {
            a[[i, 0]] = col[[i, 0]];
            a[[i, 1]] = col[[i, 0]];
        }
        let b = randn_mat(&mut rng, 6, 1);
        assert!(matches!(lstsq(&a, &b), Err(Error::NumericalRank(_))));
    }

    #[test]
    fn vec_of_row_vector_is_transpose() {
        let mut rng = ChaCha20Rng::seed_from_u64(11);
        let a = randn_mat(&mut rng, 1, 5);
        let v = vec_mat(&a);
        for j in 0..5 {
            assert_eq!(v[j], a[[0, j]]);
        }
    }

    #[test]
    fn unvec_roundtrip() {
        let mut rng = ChaCha20Rng::seed_from_u64(12);
        let a = randn_mat(&mut rng, 4, 6);
        let back = unvec_mat(&vec_mat(&a), 4, 6).unwrap();
        assert_eq!(rel_err(&back, &a), 0.0);
    }

    #[test]
    fn unvec_size_mismatch_errors() {
        let v = CVec::zeros(5);
        assert!(matches!(
            unvec_mat(&v, 2, 3),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn kron_vec_identity() {
        // vec(A B C) == kron(C^T, A) vec(B) over random shapes
        let mut rng = ChaCha20Rng::seed_from_u64(13);
        for _ in 0..100 {
            let (m, k, l, n) = (
                rng.gen_range(1..5),
                rng.gen_range(1..5),
                rng.gen_range(1..5),
                rng.gen_range(1..5),
            );
            let a = randn_mat(&mut rng, m, k);
            let b = randn_mat(&mut rng, k, l);
            let c = randn_mat(&mut rng, l, n);
            let lhs = vec_mat(&matmul(&matmul(&a, &b), &c));
            let ct = c.t().to_owned();
            let rhs = matvec(&kron(&ct, &a), &vec_mat(&b));
            assert!(rel_err_vec(&lhs, &rhs) < 1e-12);
        }
    }

    #[test]
    fn matmul_matches_naive() {
        let mut rng = ChaCha20Rng::seed_from_u64(14);
        let a = randn_mat(&mut rng, 5, 7);
        let b = randn_mat(&mut rng, 7, 3);
        let fast = matmul(&a, &b);
        let mut naive = CMat::zeros((5, 3));
        for i in 0..5 {
            for j in 0..3 {
                let mut s = Complex64::ZERO;
                for k in 0..7 {
                    s += a[[i, k]] * b[[k, j]];
                }
                naive[[i, j]] = s;
            }
        }
        assert!(rel_err(&fast, &naive) < 1e-13);
    }
}
