//! Block-wise received-signal synthesis.
//!
//! Each block is assembled along two independent routes: the per-user
//! superposition of codeword/equivalent-channel outer products, and the
//! codebook times the row-sparse indicator matrix. The two must agree to
//! 1e-12 before noise is added; a mismatch indicates an internal model
//! inconsistency and is reported as an error rather than silently used.

use ndarray::ArrayView1;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::channel::{ChannelRealization, SystemConfig};
use crate::codebook::{BlockMessage, Codebook};
use crate::error::{Error, Result};
use crate::linalg::{frobenius_norm, matmul, CMat};
use crate::ris::PhaseSchedule;

/// Everything needed to synthesize one coherence interval.
#[derive(Debug, Clone)]
pub struct TransmissionScenario {
    pub cfg: SystemConfig,
    pub book: Codebook,
    pub channels: ChannelRealization,
    pub schedule: PhaseSchedule,
    /// Messages indexed `[user][block]`.
    pub messages: Vec<Vec<BlockMessage>>,
}

impl TransmissionScenario {
    pub fn validate(&self) -> Result<()> {
        let k = self.cfg.n_users;
        let j = self.cfg.n_blocks;
        if self.messages.len() != k {
            return Err(Error::Config(format!(
                "messages cover {} users, expected {}",
                self.messages.len(),
                k
            )));
        }
        for (user, row) in self.messages.iter().enumerate() {
            if row.len() != j {
                return Err(Error::Config(format!(
                    "user {} has {} block messages, expected {}",
                    user,
                    row.len(),
                    j
                )));
            }
            for (block, msg) in row.iter().enumerate() {
                if msg.user != user || msg.block != block {
                    return Err(Error::Config(format!(
                        "message at [{}][{}] labeled (user {}, block {})",
                        user, block, msg.user, msg.block
                    )));
                }
            }
        }
        if self.schedule.psi.dim() != (self.cfg.n_ris_elements, j) {
            return Err(Error::Config(format!(
                "schedule is {:?}, expected ({}, {})",
                self.schedule.psi.dim(),
                self.cfg.n_ris_elements,
                j
            )));
        }
        if self.book.codeword_len() != self.cfg.codeword_len
            || self.book.m_bits != self.cfg.bits_per_block
            || self.book.n_users != k
        {
            return Err(Error::Config("codebook disagrees with config".into()));
        }
        if self.channels.cascades.len() != k {
            return Err(Error::Config(
                "channel realization has wrong user count".into(),
            ));
        }
        Ok(())
    }
}

/// Received blocks plus the ground truth the metrics compare against.
#[derive(Debug, Clone)]
pub struct ReceivedBlocks {
    /// J received blocks, each M x N_B.
    pub y: Vec<CMat>,
    /// Complex noise variance sigma^2 (per entry, both components summed).
    pub noise_var: f64,
    /// Per block the true equivalent channel G(j), K x N_B.
    pub ground_truth_equiv: Vec<CMat>,
}

/// Equivalent channel G(j): row k is `psi(j)^T H_k`.
pub fn equivalent_channel(psi_col: ArrayView1<Complex64>, channels: &ChannelRealization) -> CMat {
    let k = channels.cascades.len();
    let n_bs = channels.h_rb.ncols();
    let mut g = CMat::zeros((k, n_bs));
    for (row, cascade) in channels.cascades.iter().enumerate() {
        for c in 0..n_bs {
            let mut acc = Complex64::ZERO;
            for r in 0..cascade.nrows() {
                acc += psi_col[r] * cascade[[r, c]];
            }
            g[[row, c]] = acc;
        }
    }
    g
}

/// Receive-referenced noise power for a target per-entry SNR.
///
/// sigma^2 = mean squared magnitude of all noiseless entries divided by
/// 10^(snr_db/10); an infinite SNR yields zero noise.
pub fn noise_variance_for_snr(noiseless: &[CMat], snr_db: f64) -> Result<f64> {
    let mut power = 0.0;
    let mut count = 0usize;
    for block in noiseless {
        power += block.iter().map(|z| z.norm_sqr()).sum::<f64>();
        count += block.len();
    }
    if count == 0 || power == 0.0 {
        return Err(Error::DegenerateInput(
            "all-zero noiseless signal has no defined SNR".into(),
        ));
    }
    Ok(power / count as f64 / 10f64.powf(snr_db / 10.0))
}

/// Synthesize all J received blocks at the requested SNR.
pub fn synthesize(
    scenario: &TransmissionScenario,
    snr_db: f64,
    rng: &mut impl Rng,
) -> Result<ReceivedBlocks> {
    scenario.validate()?;
    let cfg = &scenario.cfg;
    let m = cfg.codeword_len;
    let n_bs = cfg.n_bs_antennas;
    let k = cfg.n_users;
    let n = scenario.book.n_codewords();

    let mut noiseless = Vec::with_capacity(cfg.n_blocks);
    let mut truth = Vec::with_capacity(cfg.n_blocks);
    for j in 0..cfg.n_blocks {
        let g = equivalent_channel(scenario.book_psi(j), &scenario.channels);

        // Route (a): sum of codeword/equivalent-row outer products.
        let mut y_a = CMat::zeros((m, n_bs));
        for user in 0..k {
            let idx = scenario.messages[user][j].codeword_index;
            for r in 0..m {
                let x = scenario.book.matrix[[r, idx]];
                for c in 0..n_bs {
                    y_a[[r, c]] += x * g[[user, c]];
                }
            }
        }

        // Route (b): codebook times the K-row-sparse indicator matrix.
        let mut lambda = CMat::zeros((n, n_bs));
        for user in 0..k {
            let idx = scenario.messages[user][j].codeword_index;
            for c in 0..n_bs {
                lambda[[idx, c]] += g[[user, c]];
            }
        }
        let y_b = matmul(&scenario.book.matrix, &lambda);

        let diff = frobenius_norm(&(&y_a - &y_b));
        let scale = frobenius_norm(&y_b).max(1e-300);
        if diff / scale > 1e-12 {
            return Err(Error::ModelInconsistency(format!(
                "block {}: construction routes disagree by {:.3e} relative",
                j,
                diff / scale
            )));
        }

        noiseless.push(y_a);
        truth.push(g);
    }

    let noise_var = if snr_db.is_infinite() && snr_db > 0.0 {
        0.0
    } else {
        noise_variance_for_snr(&noiseless, snr_db)?
    };

    let s = (noise_var / 2.0).sqrt();
    let y = noiseless
        .into_iter()
        .map(|mut block| {
            if s > 0.0 {
                block.mapv_inplace(|z| {
                    z + Complex64::new(
                        s * rng.sample::<f64, _>(StandardNormal),
                        s * rng.sample::<f64, _>(StandardNormal),
                    )
                });
            }
            block
        })
        .collect();

    Ok(ReceivedBlocks {
        y,
        noise_var,
        ground_truth_equiv: truth,
    })
}

impl TransmissionScenario {
    fn book_psi(&self, j: usize) -> ArrayView1<'_, Complex64> {
        self.schedule.psi.column(j)
    }
}
