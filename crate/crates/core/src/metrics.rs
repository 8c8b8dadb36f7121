//! NMSE, weighted BER, and the data-rate figure.

use crate::channel::SystemConfig;
use crate::codebook::{decode_index, BlockMessage, Codebook};
use crate::error::{Error, Result};
use crate::linalg::{frobenius_norm, CMat};
use crate::recovery::RecoveryOutput;

/// Reporting floor for NMSE in dB (exact recovery would be -inf).
pub const NMSE_DB_FLOOR: f64 = -150.0;

/// Per-trial normalized MSE `||H - H_hat||_F^2 / ||H||_F^2`.
///
/// Returns the linear ratio and its dB value floored at -150 dB.
pub fn nmse(h_true: &CMat, h_est: &CMat) -> Result<(f64, f64)> {
    if h_true.dim() != h_est.dim() {
        return Err(Error::DimensionMismatch(format!(
            "nmse shapes {:?} vs {:?}",
            h_true.dim(),
            h_est.dim()
        )));
    }
    let denom = frobenius_norm(h_true).powi(2);
    if denom == 0.0 {
        return Err(Error::DegenerateInput("zero true channel".into()));
    }
    let linear = frobenius_norm(&(h_est - h_true)).powi(2) / denom;
    Ok((linear, nmse_db(linear)))
}

pub fn nmse_db(linear: f64) -> f64 {
    if linear <= 0.0 {
        NMSE_DB_FLOOR
    } else {
        (10.0 * linear.log10()).max(NMSE_DB_FLOOR)
    }
}

/// Bit-error accounting with ID bits weighted M_b times data bits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BerBreakdown {
    /// Weighted BER: sum(M_b e_id + e_dat) / (blocks * (M_b M_K + M_b - M_K)).
    pub weighted: f64,
    pub numerator: u64,
    pub denominator: u64,
    pub id_errors: u64,
    pub data_errors: u64,
    pub id_bits_total: u64,
    pub data_bits_total: u64,
    pub erasures: u64,
}

impl BerBreakdown {
    pub fn id_ber(&self) -> f64 {
        if self.id_bits_total == 0 {
            0.0
        } else {
            self.id_errors as f64 / self.id_bits_total as f64
        }
    }

    pub fn data_ber(&self) -> f64 {
        if self.data_bits_total == 0 {
            0.0
        } else {
            self.data_errors as f64 / self.data_bits_total as f64
        }
    }
}

/// Compare transmitted messages with per-block recovery outcomes.
///
/// A resolved block contributes its ID-bit and data-bit mismatches; an
/// erased block counts as a total loss (all M_K ID bits and all data
/// bits wrong).
pub fn weighted_ber(
    truth: &[Vec<BlockMessage>],
    recovery: &RecoveryOutput,
    book: &Codebook,
) -> Result<BerBreakdown> {
    let k = truth.len();
    if k != book.n_users || recovery.erased.len() != k {
        return Err(Error::Accounting(format!(
            "user counts disagree: truth {}, book {}, recovery {}",
            k,
            book.n_users,
            recovery.erased.len()
        )));
    }
    let j = recovery.blocks.len();
    let m_b = book.m_bits as u64;
    let m_k = book.id_bits as u64;
    let m_d = m_b - m_k;

    let mut out = BerBreakdown {
        weighted: 0.0,
        numerator: 0,
        denominator: 0,
        id_errors: 0,
        data_errors: 0,
        id_bits_total: 0,
        data_bits_total: 0,
        erasures: 0,
    };

    for (user, row) in truth.iter().enumerate() {
        if row.len() != j {
            return Err(Error::Accounting(format!(
                "user {} covers {} blocks, recovery has {}",
                user,
                row.len(),
                j
            )));
        }
        for (block, msg) in row.iter().enumerate() {
            let (e_id, e_dat) = match &recovery.blocks[block].per_user[user] {
                Some(resolved) => {
                    let (rec_user, rec_data) = decode_index(book, resolved.codeword_index)
                        .map_err(|e| Error::Accounting(format!("resolved index invalid: {e}")))?;
                    let e_id = (rec_user ^ msg.user).count_ones() as u64;
                    let e_dat = rec_data
                        .iter()
                        .zip(msg.data_bits.iter())
                        .filter(|(a, b)| a != b)
                        .count() as u64;
                    (e_id, e_dat)
                }
                None => {
                    out.erasures += 1;
                    (m_k, m_d)
                }
            };
            out.id_errors += e_id;
            out.data_errors += e_dat;
            out.numerator += m_b * e_id + e_dat;
            out.denominator += m_b * m_k + m_d;
            out.id_bits_total += m_k;
            out.data_bits_total += m_d;
        }
    }
    out.weighted = if out.denominator == 0 {
        0.0
    } else {
        out.numerator as f64 / out.denominator as f64
    };
    Ok(out)
}

/// Net data rate in bits per channel use: K (M_b - M_K) / M.
pub fn data_rate(cfg: &SystemConfig) -> f64 {
    (cfg.n_users * (cfg.bits_per_block - cfg.id_bits())) as f64 / cfg.codeword_len as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codebook::{encode, gen_codebook};
    use crate::linalg::CVec;
    use crate::recovery::{BlockRecovery, ResolvedBlock};
    use num_complex::Complex64;
    use rand::Rng as _;
    use rand_chacha::{rand_core::SeedableRng, ChaCha20Rng};

    #[test]
    fn nmse_trivial_cases() {
        let h = CMat::from_elem((2, 2), Complex64::new(1.0, 1.0));
        let (lin, db) = nmse(&h, &h).unwrap();
        assert_eq!(lin, 0.0);
        assert_eq!(db, NMSE_DB_FLOOR);
        let zero = CMat::zeros((2, 2));
        let (lin, db) = nmse(&h, &zero).unwrap();
        assert!((lin - 1.0).abs() < 1e-15);
        assert!(db.abs() < 1e-12);
        let double = h.mapv(|z| 2.0 * z);
        let (lin, _) = nmse(&h, &double).unwrap();
        assert!((lin - 1.0).abs() < 1e-15);
        assert!(matches!(nmse(&zero, &h), Err(Error::DegenerateInput(_))));
    }

    /// Build a recovery that reproduces `truth` except for the listed
    /// erasures and substitutions.
    fn recovery_from(
        truth: &[Vec<BlockMessage>],
        _book: &Codebook,
        erase: &[(usize, usize)],
        substitute: &[(usize, usize, usize)],
    ) -> RecoveryOutput {
        let k = truth.len();
        let j = truth[0].len();
        let n_bs = 2;
        let mut blocks = Vec::new();
        for block in 0..j {
            let mut per_user: Vec<Option<ResolvedBlock>> = (0..k)
                .map(|user| {
                    Some(ResolvedBlock {
                        codeword_index: truth[user][block].codeword_index,
                        row: CVec::zeros(n_bs),
                    })
                })
                .collect();
            for &(u, b) in erase {
                if b == block {
                    per_user[u] = None;
                }
            }
            for &(u, b, idx) in substitute {
                if b == block {
                    per_user[u] = Some(ResolvedBlock {
                        codeword_index: idx,
                        row: CVec::zeros(n_bs),
                    });
                }
            }
            blocks.push(BlockRecovery {
                block,
                raw_support: Vec::new(),
                raw_rows: CMat::zeros((0, n_bs)),
                per_user,
            });
        }
        let erased: Vec<Vec<bool>> = (0..k)
            .map(|u| (0..j).map(|b| blocks[b].per_user[u].is_none()).collect())
            .collect();
        RecoveryOutput {
            blocks,
            stacked: vec![CVec::zeros(j * n_bs); k],
            erased,
        }
    }

    fn truth_messages(
        book: &Codebook,
        j: usize,
        rng: &mut impl rand::Rng,
    ) -> Vec<Vec<BlockMessage>> {
        (0..book.n_users)
            .map(|user| {
                (0..j)
                    .map(|block| {
                        let bits: Vec<bool> = (0..book.data_bits()).map(|_| rng.gen()).collect();
                        let (mut m, _) = encode(book, user, &bits).unwrap();
                        m.block = block;
                        m
                    })
                    .collect()
            })
            .collect()
    }

    #[test]
    fn perfect_recovery_is_zero() {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let book = gen_codebook(28, 8, 4, &mut rng).unwrap();
        let truth = truth_messages(&book, 60, &mut rng);
        let rec = recovery_from(&truth, &book, &[], &[]);
        let ber = weighted_ber(&truth, &rec, &book).unwrap();
        assert_eq!(ber.weighted, 0.0);
        assert_eq!(ber.erasures, 0);
    }

    #[test]
    fn single_erasure_arithmetic() {
        // One erased block among K*J = 240: (8*2 + 6) / (240*(8*2+6)) = 1/240.
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        let book = gen_codebook(28, 8, 4, &mut rng).unwrap();
        let truth = truth_messages(&book, 60, &mut rng);
        let rec = recovery_from(&truth, &book, &[(2, 17)], &[]);
        let ber = weighted_ber(&truth, &rec, &book).unwrap();
        assert!((ber.weighted - 1.0 / 240.0).abs() < 1e-15);
        assert_eq!(ber.erasures, 1);
        assert_eq!(ber.id_errors, 2);
        assert_eq!(ber.data_errors, 6);
    }

    #[test]
    fn fault_injection_matches_independent_recount() {
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let book = gen_codebook(20, 6, 4, &mut rng).unwrap();
        let j = 12;
        for _ in 0..20 {
            let truth = truth_messages(&book, j, &mut rng);
            let mut erase = Vec::new();
            let mut substitute = Vec::new();
            for user in 0..4usize {
                for block in 0..j {
                    match rng.gen_range(0..10) {
                        0 => erase.push((user, block)),
                        1 => {
                            // substitute a random index within the user's range
                            let idx = book.user_range(user).start
                                + rng.gen_range(0..(1 << book.data_bits()));
                            substitute.push((user, block, idx));
                        }
                        _ => {}
                    }
                }
            }
            let rec = recovery_from(&truth, &book, &erase, &substitute);
            let got = weighted_ber(&truth, &rec, &book).unwrap();

            // independent recount: walk every bit position with its weight
            let m_b = book.m_bits;
            let m_k = book.id_bits;
            let mut num = 0u64;
            let mut den = 0u64;
            for user in 0..4usize {
                for block in 0..j {
                    let t_bits = &truth[user][block].full_bits;
                    let r_bits: Option<Vec<bool>> =
                        rec.blocks[block].per_user[user].as_ref().map(|r| {
                            (0..m_b)
                                .rev()
                                .map(|i| (r.codeword_index >> i) & 1 == 1)
                                .collect()
                        });
                    for pos in 0..m_b {
                        let weight = if pos < m_k { m_b as u64 } else { 1 };
                        den += weight;
                        let wrong = match &r_bits {
                            Some(rb) => rb[pos] != t_bits[pos],
                            None => true,
                        };
                        if wrong {
                            num += weight;
                        }
                    }
                }
            }
            assert_eq!(got.numerator, num);
            assert_eq!(got.denominator, den);
        }
    }

    #[test]
    fn coverage_mismatch_errors() {
        let mut rng = ChaCha20Rng::seed_from_u64(4);
        let book = gen_codebook(20, 6, 4, &mut rng).unwrap();
        let mut truth = truth_messages(&book, 8, &mut rng);
        let rec = recovery_from(&truth, &book, &[], &[]);
        truth[1].pop();
        assert!(matches!(
            weighted_ber(&truth, &rec, &book),
            Err(Error::Accounting(_))
        ));
    }

    #[test]
    fn data_rate_paper_value_exact() {
        let cfg = SystemConfig {
            n_bs_antennas: 4,
            n_ris_elements: 32,
            n_users: 4,
            grid_bs: 16,
            grid_ris: 64,
            paths_rb: 2,
            paths_ru: 2,
            codeword_len: 28,
            bits_per_block: 8,
            n_blocks: 30,
            snr_db: 10.0,
            seed: 1,
        };
        assert_eq!(data_rate(&cfg), 6.0 / 7.0);
    }

    #[test]
    fn data_rate_limits() {
        let mut cfg = SystemConfig {
            n_bs_antennas: 2,
            n_ris_elements: 4,
            n_users: 1,
            grid_bs: 2,
            grid_ris: 4,
            paths_rb: 1,
            paths_ru: 1,
            codeword_len: 10,
            bits_per_block: 6,
            n_blocks: 4,
            snr_db: 0.0,
            seed: 0,
        };
        // K = 1: no ID bits, rate M_b / M
        assert_eq!(data_rate(&cfg), 0.6);
        // doubling M halves the rate
        cfg.codeword_len = 20;
        assert_eq!(data_rate(&cfg), 0.3);
    }
}
