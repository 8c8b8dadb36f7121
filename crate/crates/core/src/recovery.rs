//! Per-block S-OMP signal recovery and ID-bit permutation resolution.
//!
//! S-OMP over-selects: it runs `n_iters >= K` greedy iterations (default
//! `min(2K, M, N)`) and then keeps the K support entries whose
//! least-squares coefficient rows carry the largest l2 norms. Wasted
//! early picks are absorbed by the re-fit, which noiselessly assigns
//! them near-zero rows, so the pruning recovers the transmitted support
//! far more reliably than stopping at exactly K selections.

use crate::airlink::ReceivedBlocks;
use crate::channel::SystemConfig;
use crate::codebook::{decode_index, Codebook};
use crate::error::{Error, Result};
use crate::linalg::{adjoint, frobenius_norm, lstsq, matmul, CMat, CVec};

/// Result of one S-OMP run: the pruned support in descending
/// coefficient-row-norm order, the matching rows, and diagnostics.
#[derive(Debug, Clone)]
pub struct SompResult {
    /// K codebook indices, ordered by decreasing row norm.
    pub support: Vec<usize>,
    /// K x N_B coefficient rows matching `support`.
    pub rows: CMat,
    /// Every selected index in selection order (length <= n_iters).
    pub selection_order: Vec<usize>,
    /// Residual Frobenius norm after each iteration.
    pub residual_norms: Vec<f64>,
}

/// Default S-OMP selection depth: over-select to twice the user count,
/// capped by the rank limit min(M, N).
pub fn default_somp_iters(k_users: usize, m: usize, n: usize) -> usize {
    (2 * k_users).min(m).min(n)
}

/// Simultaneous OMP on one received block.
///
/// Each iteration selects the unselected codebook column maximizing
/// `||R^H c_n|| / ||c_n||`, re-solves the least squares of the block on
/// the selected columns and updates the residual. Ties break toward the
/// lowest column index. Stops early once at least `k_users` columns are
/// selected and the residual is negligible.
pub fn somp(y_block: &CMat, book: &Codebook, k_users: usize, n_iters: usize) -> Result<SompResult> {
    let c = &book.matrix;
    let (m, n) = c.dim();
    if y_block.nrows() != m {
        return Err(Error::DimensionMismatch(format!(
            "received block has {} rows, codewords have {}",
            y_block.nrows(),
            m
        )));
    }
    if k_users == 0 || n_iters < k_users {
        return Err(Error::Config(format!(
            "somp needs n_iters >= k_users >= 1, got {} and {}",
            n_iters, k_users
        )));
    }
    if n_iters > m.min(n) {
        return Err(Error::Config(format!(
            "somp n_iters {} exceeds rank limit min(M, N) = {}",
            n_iters,
            m.min(n)
        )));
    }

    let c_h = adjoint(c);
    let col_norms: Vec<f64> = (0..n)
        .map(|j| (0..m).map(|i| c[[i, j]].norm_sqr()).sum::<f64>().sqrt())
        .collect();
    let y_norm = frobenius_norm(y_block);

    let mut residual = y_block.clone();
    let mut selected: Vec<usize> = Vec::with_capacity(n_iters);
    let mut in_support = vec![false; n];
    let mut coeffs = CMat::zeros((0, y_block.ncols()));
    let mut residual_norms = Vec::with_capacity(n_iters);

    for _ in 0..n_iters {
        let corr = matmul(&c_h, &residual);
        let mut best = -1.0_f64;
        let mut best_idx = 0usize;
        for j in 0..n {
            if in_support[j] {
                continue;
            }
            let row_norm = corr.row(j).iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            let metric = row_norm / col_norms[j];
            if metric > best {
                best = metric;
                best_idx = j;
            }
        }
        selected.push(best_idx);
        in_support[best_idx] = true;

        let mut sub = CMat::zeros((m, selected.len()));
        for (col, &idx) in selected.iter().enumerate() {
            for i in 0..m {
                sub[[i, col]] = c[[i, idx]];
            }
        }
        coeffs = lstsq(&sub, y_block)?;
        residual = y_block - &matmul(&sub, &coeffs);
        let r_norm = frobenius_norm(&residual);
        residual_norms.push(r_norm);
        if selected.len() >= k_users && r_norm <= 1e-10 * y_norm {
            break;
        }
    }

    // Keep the K entries with the largest coefficient-row norms.
    let mut order: Vec<usize> = (0..selected.len()).collect();
    let norms: Vec<f64> = (0..selected.len())
        .map(|i| coeffs.row(i).iter().map(|z| z.norm_sqr()).sum::<f64>())
        .collect();
    order.sort_by(|&a, &b| norms[b].partial_cmp(&norms[a]).unwrap().then(a.cmp(&b)));
    order.truncate(k_users);

    let support: Vec<usize> = order.iter().map(|&i| selected[i]).collect();
    let mut rows = CMat::zeros((support.len(), y_block.ncols()));
    for (r, &i) in order.iter().enumerate() {
        for c_ in 0..y_block.ncols() {
            rows[[r, c_]] = coeffs[[i, c_]];
        }
    }

    Ok(SompResult {
        support,
        rows,
        selection_order: selected,
        residual_norms,
    })
}

/// A recovered (codeword index, equivalent-channel row) assigned to a user.
#[derive(Debug, Clone)]
pub struct ResolvedBlock {
    pub codeword_index: usize,
    /// The user's equivalent-channel row estimate (length N_B).
    pub row: CVec,
}

/// Assign raw S-OMP outputs to users through their ID ranges.
///
/// A user matched by exactly one index is resolved; zero matches or a
/// collision leaves the user erased (colliding indices are assigned to
/// nobody). Indices outside every range are discarded.
pub fn resolve_permutation(
    support: &[usize],
    rows: &CMat,
    book: &Codebook,
) -> Vec<Option<ResolvedBlock>> {
    let mut buckets: Vec<Vec<usize>> = vec![Vec::new(); book.n_users];
    for (pos, &idx) in support.iter().enumerate() {
        if let Ok((user, _)) = decode_index(book, idx) {
            buckets[user].push(pos);
        }
    }
    buckets
        .into_iter()
        .map(|positions| match positions.as_slice() {
            [pos] => Some(ResolvedBlock {
                codeword_index: support[*pos],
                row: rows.row(*pos).to_owned(),
            }),
            _ => None,
        })
        .collect()
}

/// Per-block recovery results plus the stacked per-user measurements.
#[derive(Debug, Clone)]
pub struct BlockRecovery {
    pub block: usize,
    /// Pruned support in decreasing row-norm order.
    pub raw_support: Vec<usize>,
    /// Rows matching `raw_support`.
    pub raw_rows: CMat,
    pub per_user: Vec<Option<ResolvedBlock>>,
}

#[derive(Debug, Clone)]
pub struct RecoveryOutput {
    pub blocks: Vec<BlockRecovery>,
    /// Per user the stacked equivalent channel g_k (length J * N_B);
    /// erased blocks contribute zero segments.
    pub stacked: Vec<CVec>,
    /// Erasure mask indexed `[user][block]`.
    pub erased: Vec<Vec<bool>>,
}

impl RecoveryOutput {
    pub fn erasure_count(&self) -> usize {
        self.erased
            .iter()
            .map(|row| row.iter().filter(|&&e| e).count())
            .sum()
    }
}

/// Run S-OMP and permutation resolution on every block with the default
/// selection depth.
pub fn recover_all_blocks(
    received: &ReceivedBlocks,
    book: &Codebook,
    cfg: &SystemConfig,
) -> Result<RecoveryOutput> {
    let n_iters = default_somp_iters(cfg.n_users, book.codeword_len(), book.n_codewords());
    recover_all_blocks_with(received, book, cfg, n_iters)
}

/// As [`recover_all_blocks`] with an explicit S-OMP selection depth.
pub fn recover_all_blocks_with(
    received: &ReceivedBlocks,
    book: &Codebook,
    cfg: &SystemConfig,
    n_iters: usize,
) -> Result<RecoveryOutput> {
    let k = cfg.n_users;
    let n_bs = cfg.n_bs_antennas;
    let j_blocks = received.y.len();

    let mut blocks = Vec::with_capacity(j_blocks);
    let mut stacked = vec![CVec::zeros(j_blocks * n_bs); k];
    let mut erased = vec![vec![false; j_blocks]; k];

    for (j, y) in received.y.iter().enumerate() {
        let res = somp(y, book, k, n_iters)?;
        let per_user = resolve_permutation(&res.support, &res.rows, book);
        for (user, slot) in per_user.iter().enumerate() {
            match slot {
                Some(r) => {
                    for c in 0..n_bs {
                        stacked[user][j * n_bs + c] = r.row[c];
                    }
                }
                None => erased[user][j] = true,
            }
        }
        blocks.push(BlockRecovery {
            block: j,
            raw_support: res.support,
            raw_rows: res.rows,
            per_user,
        });
    }

    Ok(RecoveryOutput {
        blocks,
        stacked,
        erased,
    })
}
