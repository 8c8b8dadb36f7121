//! RIS phase schedules: random draws and coherence-minimizing design.
//!
//! The optimized design minimizes `|| (Psi^T F_R)^H (Psi^T F_R) - xi I ||_F^2`
//! over unit-modulus Psi, alternating a closed-form update of the
//! normalization parameter xi with one Riemannian gradient step on the
//! product-of-circles manifold (Armijo backtracking, entrywise-normalize
//! retraction).

use std::io::{BufRead, Write};

use num_complex::Complex64;
use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::{conj, frobenius_norm, gram, matmul, CMat};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScheduleOrigin {
    Random,
    Optimized,
    Imported,
}

/// N_R x J unit-modulus phase schedule; column j drives block j.
#[derive(Debug, Clone)]
pub struct PhaseSchedule {
    pub psi: CMat,
    pub origin: ScheduleOrigin,
}

impl PhaseSchedule {
    pub fn n_ris(&self) -> usize {
        self.psi.nrows()
    }

    pub fn n_blocks(&self) -> usize {
        self.psi.ncols()
    }

    /// Largest entrywise deviation from unit modulus.
    pub fn modulus_error(&self) -> f64 {
        self.psi
            .iter()
            .map(|z| (z.norm() - 1.0).abs())
            .fold(0.0, f64::max)
    }
}

/// Draw phases i.i.d. uniform on (0, 2pi].
pub fn random_schedule(n_ris: usize, j_blocks: usize, rng: &mut impl Rng) -> PhaseSchedule {
    let psi = CMat::from_shape_fn((n_ris, j_blocks), |_| {
        let theta = 2.0 * std::f64::consts::PI * (1.0 - rng.gen::<f64>());
        Complex64::from_polar(1.0, theta)
    });
    PhaseSchedule {
        psi,
        origin: ScheduleOrigin::Random,
    }
}

/// Column mutual coherence: max over column pairs of the normalized
/// inner-product magnitude.
pub fn mutual_coherence(a: &CMat) -> Result<f64> {
    let n = a.ncols();
    if n < 2 {
        return Err(Error::DimensionMismatch(
            "mutual coherence needs at least two columns".into(),
        ));
    }
    Ok(crate::linalg::coherence_squared(a)?.sqrt())
}

/// Objective value and Euclidean (Wirtinger, d/d conj(Psi)) gradient of
/// `f(Psi) = ||A^H A - xi I||_F^2` with `A = Psi^T F_R`.
///
/// The gradient is `2 conj(F_R) (A E)^T` with `E = A^H A - xi I`. The
/// formula is valid for arbitrary complex `psi`, which the central
/// finite-difference validation relies on.
pub fn design_objective(psi: &CMat, f_ris: &CMat, xi: f64) -> (f64, CMat) {
    let a = matmul(psi.t(), f_ris);
    let mut e = gram(&a);
    for i in 0..e.nrows() {
        e[[i, i]] -= xi;
    }
    let value = frobenius_norm(&e).powi(2);
    let ae_t = matmul(&a, &e).t().to_owned();
    let egrad = matmul(&conj(f_ris), &ae_t).mapv(|z| 2.0 * z);
    (value, egrad)
}

fn objective_value(psi: &CMat, f_ris: &CMat, xi: f64) -> f64 {
    let a = matmul(psi.t(), f_ris);
    let mut e = gram(&a);
    for i in 0..e.nrows() {
        e[[i, i]] -= xi;
    }
    frobenius_norm(&e).powi(2)
}

/// Closed-form minimizer of the objective over xi:
/// `tr(A^H A) / G_R = ||A||_F^2 / G_R`, the mean of the Gram diagonal.
pub fn optimal_xi(psi: &CMat, f_ris: &CMat) -> f64 {
    let a = matmul(psi.t(), f_ris);
    frobenius_norm(&a).powi(2) / f_ris.ncols() as f64
}

/// Project a Euclidean gradient onto the tangent space of the
/// product-of-circles manifold at `psi`.
fn tangent_project(egrad: &CMat, psi: &CMat) -> CMat {
    let mut out = egrad.clone();
    ndarray::Zip::from(&mut out).and(psi).for_each(|g, &p| {
        let radial = (*g * p.conj()).re;
        *g -= radial * p;
    });
    out
}

/// Entrywise normalization back onto the manifold.
fn retract(m: &CMat) -> CMat {
    m.mapv(|z| {
        let r = z.norm();
        if r > 0.0 {
            z / r
        } else {
            Complex64::new(1.0, 0.0)
        }
    })
}

#[derive(Debug, Clone, Copy)]
pub struct OptimizeOptions {
    pub max_iters: usize,
    /// Stop when the relative objective decrease falls below this.
    pub tol: f64,
    pub armijo_init: f64,
    pub armijo_shrink: f64,
    pub armijo_c: f64,
}

impl Default for OptimizeOptions {
    fn default() -> Self {
        Self {
            max_iters: 500,
            tol: 1e-6,
            armijo_init: 1.0,
            armijo_shrink: 0.5,
            armijo_c: 1e-4,
        }
    }
}

const ARMIJO_MIN_STEP: f64 = 9.094947017729282e-13; // 2^-40

/// Alternating xi-update / Riemannian-gradient-step minimization.
///
/// Returns the optimized schedule together with the objective trace
/// `f(Psi_i, xi_i)` (xi_i optimal for Psi_i), which is non-increasing.
pub fn optimize_schedule(
    f_ris: &CMat,
    n_ris: usize,
    j_blocks: usize,
    init: &PhaseSchedule,
    opts: &OptimizeOptions,
) -> Result<(PhaseSchedule, Vec<f64>)> {
    if init.psi.dim() != (n_ris, j_blocks) {
        return Err(Error::DimensionMismatch(format!(
            "init schedule is {:?}, expected ({}, {})",
            init.psi.dim(),
            n_ris,
            j_blocks
        )));
    }
    if f_ris.nrows() != n_ris {
        return Err(Error::DimensionMismatch(format!(
            "dictionary has {} rows, schedule {}",
            f_ris.nrows(),
            n_ris
        )));
    }
    if init.modulus_error() > 1e-9 {
        return Err(Error::DegenerateInput(
            "init schedule is not unit-modulus".into(),
        ));
    }

    let mut psi = init.psi.clone();
    let mut trace = Vec::new();
    for _ in 0..opts.max_iters {
        let xi = optimal_xi(&psi, f_ris);
        let (f, egrad) = design_objective(&psi, f_ris, xi);
        if !f.is_finite() {
            return Err(Error::Numerical("objective is not finite".into()));
        }
        trace.push(f);
        let rgrad = tangent_project(&egrad, &psi);
        let g2 = frobenius_norm(&rgrad).powi(2);

        let mut step = opts.armijo_init;
        let mut accepted = None;
        while step >= ARMIJO_MIN_STEP {
            let cand = retract(&(&psi - &rgrad.mapv(|z| step * z)));
            let f_cand = objective_value(&cand, f_ris, xi);
            if f_cand <= f - opts.armijo_c * step * g2 {
                accepted = Some((cand, f_cand));
                break;
            }
            step *= opts.armijo_shrink;
        }
        let Some((cand, f_cand)) = accepted else {
            break; // numerically stationary: no decrease direction left
        };
        psi = cand;
        if f == 0.0 || (f - f_cand) / f < opts.tol {
            break;
        }
    }
    let xi = optimal_xi(&psi, f_ris);
    trace.push(objective_value(&psi, f_ris, xi));

    Ok((
        PhaseSchedule {
            psi,
            origin: ScheduleOrigin::Optimized,
        },
        trace,
    ))
}

// --- schedule file format ------------------------------------------------

/// Write a schedule as J lines of N_R phase values in radians.
pub fn write_schedule(sched: &PhaseSchedule, w: &mut impl Write) -> Result<()> {
    for j in 0..sched.n_blocks() {
        let mut first = true;
        for n in 0..sched.n_ris() {
            if !first {
                write!(w, " ")?;
            }
            write!(w, "{}", sched.psi[[n, j]].arg())?;
            first = false;
        }
        writeln!(w)?;
    }
    Ok(())
}

/// Parse a schedule written by [`write_schedule`].
pub fn read_schedule(reader: impl BufRead) -> Result<PhaseSchedule> {
    let mut columns: Vec<Vec<f64>> = Vec::new();
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let phases: std::result::Result<Vec<f64>, _> =
            line.split_whitespace().map(str::parse).collect();
        let phases = phases.map_err(|_| Error::Parse("schedule file: bad phase value".into()))?;
        if let Some(first) = columns.first() {
            if phases.len() != first.len() {
                return Err(Error::Parse(
                    "schedule file: inconsistent element counts per line".into(),
                ));
            }
        }
        columns.push(phases);
    }
    if columns.is_empty() || columns[0].is_empty() {
        return Err(Error::Parse("schedule file contains no phases".into()));
    }
    let n_ris = columns[0].len();
    let j = columns.len();
    let mut psi = CMat::zeros((n_ris, j));
    for (jj, col) in columns.iter().enumerate() {
        for (n, &theta) in col.iter().enumerate() {
            psi[[n, jj]] = Complex64::from_polar(1.0, theta);
        }
    }
    Ok(PhaseSchedule {
        psi,
        origin: ScheduleOrigin::Imported,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{build_dictionaries, SystemConfig};
    use crate::linalg::kron;
    use rand_chacha::{rand_core::SeedableRng, ChaCha20Rng};

    fn small_dict(n: usize, g: usize) -> CMat {
        let cfg = SystemConfig {
            n_bs_antennas: 2,
            n_ris_elements: n,
            n_users: 2,
            grid_bs: 2,
            grid_ris: g,
            paths_rb: 1,
            paths_ru: 1,
            codeword_len: 8,
            bits_per_block: 4,
            n_blocks: 4,
            snr_db: 10.0,
            seed: 0,
        };
        build_dictionaries(&cfg).f_ris
    }

    #[test]
    fn random_schedule_unit_modulus() {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let s = random_schedule(16, 8, &mut rng);
        assert!(s.modulus_error() < 1e-12);
        assert_eq!(s.origin, ScheduleOrigin::Random);
    }

    #[test]
    fn random_schedules_differ_across_seeds() {
        let mut a_rng = ChaCha20Rng::seed_from_u64(2);
        let mut b_rng = ChaCha20Rng::seed_from_u64(3);
        let a = random_schedule(8, 4, &mut a_rng);
        let b = random_schedule(8, 4, &mut b_rng);
        assert_ne!(a.psi, b.psi);
    }

    #[test]
    fn random_phase_mean_near_zero() {
        let mut rng = ChaCha20Rng::seed_from_u64(4);
        let n = 100_000;
        let s = random_schedule(n, 1, &mut rng);
        let mean = s.psi.iter().sum::<Complex64>() / n as f64;
        let sigma = (0.5 / n as f64).sqrt();
        assert!(mean.re.abs() < 3.0 * sigma, "re {}", mean.re);
        assert!(mean.im.abs() < 3.0 * sigma, "im {}", mean.im);
    }

    #[test]
    fn coherence_orthogonal_columns_zero() {
        let eye = CMat::from_shape_fn((4, 4), |(i, j)| {
            if i == j {
                Complex64::new(1.0, 0.0)
            } else {
                Complex64::ZERO
            }
        });
        assert!(mutual_coherence(&eye).unwrap() < 1e-15);
    }

    #[test]
    fn coherence_repeated_column_is_one() {
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let s = random_schedule(6, 3, &mut rng);
        let mut a = s.psi.clone();
        for i in 0..6 {
            a[[i, 2]] = a[[i, 0]];
        }
        assert!((mutual_coherence(&a).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn coherence_matches_pairwise_loop_oracle() {
        let mut rng = ChaCha20Rng::seed_from_u64(6);
        let a = CMat::from_shape_fn((8, 12), |_| {
            Complex64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)
        });
        let fast = mutual_coherence(&a).unwrap();
        let mut oracle = 0.0_f64;
        for m in 0..12 {
            for n in (m + 1)..12 {
                let mut ip = Complex64::ZERO;
                let mut nm = 0.0;
                let mut nn = 0.0;
                for r in 0..8 {
                    ip += a[[r, m]].conj() * a[[r, n]];
                    nm += a[[r, m]].norm_sqr();
                    nn += a[[r, n]].norm_sqr();
                }
                oracle = oracle.max(ip.norm() / (nm.sqrt() * nn.sqrt()));
            }
        }
        assert!((fast - oracle).abs() < 1e-12);
    }

    #[test]
    fn coherence_zero_column_errors() {
        let mut a = CMat::zeros((4, 3));
        a[[0, 0]] = Complex64::new(1.0, 0.0);
        a[[1, 2]] = Complex64::new(1.0, 0.0);
        assert!(matches!(
            mutual_coherence(&a),
            Err(Error::DegenerateInput(_))
        ));
    }

    #[test]
    fn objective_zero_for_perfect_gram() {
        // Psi = 4-point DFT (unit modulus), F_R = I: the Gram of Psi^T is
        // 4 I, so the objective vanishes at xi* = 4.
        let n = 4;
        let eye = CMat::from_shape_fn((n, n), |(i, j)| {
            if i == j {
                Complex64::new(1.0, 0.0)
            } else {
                Complex64::ZERO
            }
        });
        let psi = CMat::from_shape_fn((n, n), |(r, c)| {
            Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI * (r * c) as f64 / n as f64)
        });
        let xi = optimal_xi(&psi, &eye);
        assert!((xi - 4.0).abs() < 1e-12);
        let (value, _) = design_objective(&psi, &eye, xi);
        assert!(value < 1e-20, "value {}", value);
    }

    fn fd_gradient(psi: &CMat, f_ris: &CMat, xi: f64, i: usize, j: usize) -> Complex64 {
        let h = 1e-6;
        let mut p = psi.clone();
        p[[i, j]] += h;
        let fp = objective_value(&p, f_ris, xi);
        let mut p = psi.clone();
        p[[i, j]] -= h;
        let fm = objective_value(&p, f_ris, xi);
        let d_re = (fp - fm) / (2.0 * h);
        let mut p = psi.clone();
        p[[i, j]] += Complex64::new(0.0, h);
        let fp = objective_value(&p, f_ris, xi);
        let mut p = psi.clone();
        p[[i, j]] -= Complex64::new(0.0, h);
        let fm = objective_value(&p, f_ris, xi);
        let d_im = (fp - fm) / (2.0 * h);
        Complex64::new(d_re / 2.0, d_im / 2.0)
    }

    #[test]
    fn scalar_case_matches_hand_computation() {
        // N_R = J = G_R = 1: A = psi * c, f = (|c|^2 - xi)^2 regardless of
        // the phase, so the gradient is radial and hand-computable.
        let c = Complex64::new(0.8, -0.3);
        let f_ris = CMat::from_elem((1, 1), c);
        let psi = CMat::from_elem((1, 1), Complex64::from_polar(1.0, 0.7));
        let xi = 0.4;
        let (value, egrad) = design_objective(&psi, &f_ris, xi);
        let expect = (c.norm_sqr() - xi).powi(2);
        assert!((value - expect).abs() < 1e-14);
        // 2 conj(F)(AE)^T = 2 conj(c) * psi * c * (|c|^2 - xi)
        let expect_grad = 2.0 * c.conj() * psi[[0, 0]] * c * (c.norm_sqr() - xi);
        assert!((egrad[[0, 0]] - expect_grad).norm() < 1e-14);
        let fd = fd_gradient(&psi, &f_ris, xi, 0, 0);
        assert!((egrad[[0, 0]] - fd).norm() / fd.norm() < 1e-5);
    }

    #[test]
    fn gradient_matches_central_finite_differences() {
        let f_ris = small_dict(8, 16);
        let mut rng = ChaCha20Rng::seed_from_u64(7);
        for _ in 0..5 {
            let s = random_schedule(8, 5, &mut rng);
            let xi = optimal_xi(&s.psi, &f_ris);
            let (_, egrad) = design_objective(&s.psi, &f_ris, xi);
            for _ in 0..4 {
                let i = rng.gen_range(0..8);
                let j = rng.gen_range(0..5);
                let fd = fd_gradient(&s.psi, &f_ris, xi, i, j);
                let rel = (egrad[[i, j]] - fd).norm() / fd.norm().max(1e-12);
                assert!(rel < 1e-5, "relative gradient error {}", rel);
            }
        }
    }

    #[test]
    fn optimal_xi_matches_trace_oracle_and_minimizes() {
        let f_ris = small_dict(8, 16);
        let mut rng = ChaCha20Rng::seed_from_u64(8);
        let s = random_schedule(8, 6, &mut rng);
        let a = matmul(s.psi.t(), &f_ris);
        let g = gram(&a);
        let trace: f64 = (0..16).map(|i| g[[i, i]].re).sum();
        let xi = optimal_xi(&s.psi, &f_ris);
        assert!((xi - trace / 16.0).abs() < 1e-12);
        let (at_star, _) = design_objective(&s.psi, &f_ris, xi);
        let (above, _) = design_objective(&s.psi, &f_ris, xi + 0.1);
        let (below, _) = design_objective(&s.psi, &f_ris, xi - 0.1);
        assert!(at_star <= above && at_star <= below);
    }

    #[test]
    fn optimizer_trace_monotone_and_unit_modulus() {
        let f_ris = small_dict(16, 32);
        let mut rng = ChaCha20Rng::seed_from_u64(9);
        let init = random_schedule(16, 10, &mut rng);
        let (out, trace) =
            optimize_schedule(&f_ris, 16, 10, &init, &OptimizeOptions::default()).unwrap();
        assert!(out.modulus_error() < 1e-12);
        assert!(trace.len() >= 2);
        for w in trace.windows(2) {
            assert!(
                w[1] <= w[0] * (1.0 + 1e-12) + 1e-12,
                "trace not monotone: {} -> {}",
                w[0],
                w[1]
            );
        }
        assert!(*trace.last().unwrap() < trace[0]);
    }

    #[test]
    fn optimizer_returns_stationary_init_unchanged() {
        // G_R = N_R = 1 makes the objective identically zero at xi*, so
        // any unit-modulus point is stationary.
        let f_ris = CMat::from_elem((1, 1), Complex64::new(1.0, 0.0));
        let init = PhaseSchedule {
            psi: CMat::from_shape_fn((1, 3), |(_, j)| {
                Complex64::from_polar(1.0, 0.3 * (j as f64 + 1.0))
            }),
            origin: ScheduleOrigin::Random,
        };
        let (out, trace) =
            optimize_schedule(&f_ris, 1, 3, &init, &OptimizeOptions::default()).unwrap();
        assert!(trace.len() <= 2);
        for (a, b) in out.psi.iter().zip(init.psi.iter()) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn riemannian_gradient_is_tangent() {
        let f_ris = small_dict(8, 16);
        let mut rng = ChaCha20Rng::seed_from_u64(10);
        let s = random_schedule(8, 5, &mut rng);
        let xi = optimal_xi(&s.psi, &f_ris);
        let (_, egrad) = design_objective(&s.psi, &f_ris, xi);
        let rgrad = tangent_project(&egrad, &s.psi);
        for (g, p) in rgrad.iter().zip(s.psi.iter()) {
            assert!((g * p.conj()).re.abs() < 1e-10);
        }
    }

    #[test]
    fn optimized_beats_random_coherence_small() {
        let f_ris = small_dict(16, 32);
        let mut rng = ChaCha20Rng::seed_from_u64(11);
        let mut wins = 0;
        for _ in 0..5 {
            let init = random_schedule(16, 10, &mut rng);
            let mu_rand = mutual_coherence(&matmul(init.psi.t(), &f_ris)).unwrap();
            let (opt, _) =
                optimize_schedule(&f_ris, 16, 10, &init, &OptimizeOptions::default()).unwrap();
            let mu_opt = mutual_coherence(&matmul(opt.psi.t(), &f_ris)).unwrap();
            if mu_opt < mu_rand {
                wins += 1;
            }
        }
        assert!(wins >= 4, "only {}/5 paired runs improved", wins);
    }

    #[test]
    fn coherence_decoupling_on_kron_product() {
        let cfg = SystemConfig {
            n_bs_antennas: 2,
            n_ris_elements: 8,
            n_users: 2,
            grid_bs: 4,
            grid_ris: 16,
            paths_rb: 1,
            paths_ru: 1,
            codeword_len: 8,
            bits_per_block: 4,
            n_blocks: 6,
            snr_db: 10.0,
            seed: 0,
        };
        let dict = build_dictionaries(&cfg);
        let mut rng = ChaCha20Rng::seed_from_u64(12);
        let s = random_schedule(8, 6, &mut rng);
        let b = matmul(s.psi.t(), &dict.f_ris);
        let a = conj(&dict.f_bs);
        let mu_kron = mutual_coherence(&kron(&a, &b)).unwrap();
        let mu_max = mutual_coherence(&a)
            .unwrap()
            .max(mutual_coherence(&b).unwrap());
        assert!((mu_kron - mu_max).abs() < 1e-12);
    }

    #[test]
    fn schedule_file_roundtrip() {
        let mut rng = ChaCha20Rng::seed_from_u64(13);
        let s = random_schedule(8, 5, &mut rng);
        let mut buf = Vec::new();
        write_schedule(&s, &mut buf).unwrap();
        let back = read_schedule(std::io::BufReader::new(&buf[..])).unwrap();
        assert_eq!(back.psi.dim(), (8, 5));
        assert_eq!(back.origin, ScheduleOrigin::Imported);
        for (a, b) in back.psi.iter().zip(s.psi.iter()) {
            assert!((a - b).norm() < 1e-15);
        }
    }

    #[test]
    fn schedule_file_rejects_ragged_lines() {
        let text = "0.1 0.2 0.3\n0.4 0.5\n";
        assert!(matches!(
            read_schedule(std::io::BufReader::new(text.as_bytes())),
            Err(Error::Parse(_))
        ));
    }
}
