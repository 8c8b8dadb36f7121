//! Kronecker-structured sensing matrix and the per-user cascade OMP.

use crate::channel::{SteeringDictionary, SystemConfig};
use crate::error::{Error, Result};
use crate::linalg::{adjoint, lstsq_vec, matmul, unvec_mat, vec_norm, CMat, CVec};
use crate::recovery::RecoveryOutput;
use crate::ris::PhaseSchedule;

/// The (J N_B) x (G_B G_R) sensing matrix of the cascade recovery.
///
/// Row block j is `kron(conj(F_B), psi(j)^T F_R)`; applied to the
/// column-stacked vec(D_k) it reproduces the equivalent channel of
/// block j.
#[derive(Debug, Clone)]
pub struct SensingMatrix {
    pub q: CMat,
    pub n_bs: usize,
    pub n_blocks: usize,
    pub grid_bs: usize,
    pub grid_ris: usize,
}

/// Assemble the sensing matrix for a dictionary/schedule pair.
pub fn build_sensing_matrix(dict: &SteeringDictionary, schedule: &PhaseSchedule) -> SensingMatrix {
    let n_bs = dict.f_bs.nrows();
    let g_b = dict.f_bs.ncols();
    let g_r = dict.f_ris.ncols();
    let j_blocks = schedule.n_blocks();

    // V = Psi^T F_R, row j = psi(j)^T F_R.
    let v = matmul(schedule.psi.t(), &dict.f_ris);

    let mut q = CMat::zeros((j_blocks * n_bs, g_b * g_r));
    for j in 0..j_blocks {
        for r in 0..n_bs {
            let out_row = j * n_bs + r;
            for b in 0..g_b {
                let f = dict.f_bs[[r, b]].conj();
                for m in 0..g_r {
                    q[[out_row, b * g_r + m]] = f * v[[j, m]];
                }
            }
        }
    }
    SensingMatrix {
        q,
        n_bs,
        n_blocks: j_blocks,
        grid_bs: g_b,
        grid_ris: g_r,
    }
}

/// One OMP solve.
#[derive(Debug, Clone)]
pub struct OmpResult {
    pub support: Vec<usize>,
    /// Coefficients matching `support`.
    pub coeffs: CVec,
    /// Residual norm after each iteration.
    pub residual_norms: Vec<f64>,
}

/// Orthogonal matching pursuit with known sparsity.
///
/// Selection maximizes the column-normalized correlation
/// `|q_j^H r| / ||q_j||` (ties to the lowest index), followed by a
/// least-squares re-fit on the support and a residual update. Rows
/// flagged in `erased_rows` are removed from both `y` and `q` before
/// solving. Stops early when the residual is negligible.
pub fn omp(y: &CVec, q: &CMat, sparsity: usize, erased_rows: Option<&[bool]>) -> Result<OmpResult> {
    if y.len() != q.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "omp: measurement length {} vs {} sensing rows",
            y.len(),
            q.nrows()
        )));
    }
    if let Some(mask) = erased_rows {
        if mask.len() != q.nrows() {
            return Err(Error::DimensionMismatch(format!(
                "omp: mask length {} vs {} rows",
                mask.len(),
                q.nrows()
            )));
        }
    }

    let keep: Vec<usize> = (0..q.nrows())
        .filter(|&i| erased_rows.map_or(true, |m| !m[i]))
        .collect();
    if keep.len() < sparsity {
        return Err(Error::InsufficientMeasurements(format!(
            "{} unmasked rows cannot support sparsity {}",
            keep.len(),
            sparsity
        )));
    }

    let n = q.ncols();
    let mut qm = CMat::zeros((keep.len(), n));
    let mut ym = CVec::zeros(keep.len());
    for (r, &src) in keep.iter().enumerate() {
        ym[r] = y[src];
        for c in 0..n {
            qm[[r, c]] = q[[src, c]];
        }
    }
    let qm_h = adjoint(&qm);
    let col_norms: Vec<f64> = (0..n)
        .map(|j| {
            (0..keep.len())
                .map(|i| qm[[i, j]].norm_sqr())
                .sum::<f64>()
                .sqrt()
        })
        .collect();
    let y_norm = vec_norm(&ym);

    let mut residual = ym.clone();
    let mut support: Vec<usize> = Vec::with_capacity(sparsity);
    let mut coeffs = CVec::zeros(0);
    let mut residual_norms = Vec::with_capacity(sparsity);
    let mut in_support = vec![false; n];

    for _ in 0..sparsity {
        let corr = crate::linalg::matvec(&qm_h, &residual);
        let mut best = -1.0_f64;
        let mut best_idx = 0usize;
        for j in 0..n {
            if in_support[j] || col_norms[j] == 0.0 {
                continue;
            }
            let metric = corr[j].norm() / col_norms[j];
            if metric > best {
                best = metric;
                best_idx = j;
            }
        }
        if best < 0.0 {
            break; // no admissible column left
        }
        support.push(best_idx);
        in_support[best_idx] = true;

        let mut sub = CMat::zeros((keep.len(), support.len()));
        for (col, &idx) in support.iter().enumerate() {
            for i in 0..keep.len() {
                sub[[i, col]] = qm[[i, idx]];
            }
        }
        coeffs = lstsq_vec(&sub, &ym)?;
        residual = &ym - &crate::linalg::matvec(&sub, &coeffs);
        let r_norm = vec_norm(&residual);
        residual_norms.push(r_norm);
        if r_norm <= 1e-10 * y_norm {
            break;
        }
    }

    Ok(OmpResult {
        support,
        coeffs,
        residual_norms,
    })
}

/// A user's recovered sparse cascade.
#[derive(Debug, Clone)]
pub struct CascadeEstimate {
    /// Sparse coefficient vector of length G_B * G_R.
    pub d_hat: CVec,
    /// The unvectorized G_R x G_B coefficient matrix.
    pub d_mat: CMat,
    /// Reconstructed cascaded channel F_R D_hat F_B^H (N_R x N_B).
    pub h_hat: CMat,
    pub support: Vec<usize>,
}

/// Recover every user's cascade from the stacked equivalent channels.
///
/// Erased blocks are removed from the solve by row masking. A user whose
/// unmasked measurement count falls below the sparsity is reported as an
/// insufficient-measurements failure in their slot.
pub fn estimate_cascades(
    recovery: &RecoveryOutput,
    sensing: &SensingMatrix,
    dict: &SteeringDictionary,
    cfg: &SystemConfig,
) -> Vec<Result<CascadeEstimate>> {
    let sparsity = cfg.cascade_sparsity();
    let f_bs_h = adjoint(&dict.f_bs);
    recovery
        .stacked
        .iter()
        .zip(recovery.erased.iter())
        .map(|(g, erased_blocks)| {
            let mut row_mask = vec![false; sensing.q.nrows()];
            for (j, &e) in erased_blocks.iter().enumerate() {
                if e {
                    for r in 0..sensing.n_bs {
                        row_mask[j * sensing.n_bs + r] = true;
                    }
                }
            }
            let res = omp(g, &sensing.q, sparsity, Some(&row_mask))?;
            let mut d_hat = CVec::zeros(sensing.grid_bs * sensing.grid_ris);
            for (&idx, &c) in res.support.iter().zip(res.coeffs.iter()) {
                d_hat[idx] = c;
            }
            let d_mat = unvec_mat(&d_hat, sensing.grid_ris, sensing.grid_bs)?;
            let h_hat = matmul(&matmul(&dict.f_ris, &d_mat), &f_bs_h);
            Ok(CascadeEstimate {
                d_hat,
                d_mat,
                h_hat,
                support: res.support,
            })
        })
        .collect()
}
