//! Fast oracle checks runnable from the CLI (`risblind selftest`).
//!
//! One line per check; any failure exits with code 2.

use rand::Rng as _;

use risblind::airlink::{equivalent_channel, synthesize, TransmissionScenario};
use risblind::cascade::{build_sensing_matrix, estimate_cascades, omp};
use risblind::channel::{build_dictionaries, sample_channel, SystemConfig};
use risblind::codebook::{decode_index, encode, gen_codebook};
use risblind::error::Error;
use risblind::experiment::derive_rng;
use risblind::linalg::{
    adjoint, conj, kron, lstsq_vec, matmul, matvec, rel_err, rel_err_vec, vec_mat, vec_norm, CMat,
    CVec,
};
use risblind::metrics::{data_rate, weighted_ber};
use risblind::recovery::recover_all_blocks;
use risblind::ris::{mutual_coherence, optimize_schedule, random_schedule, OptimizeOptions};

use num_complex::Complex64;

struct Report {
    failures: usize,
}

impl Report {
    fn check(&mut self, name: &str, ok: bool, detail: String) {
        if ok {
            println!("PASS {name}");
        } else {
            println!("FAIL {name}: {detail}");
            self.failures += 1;
        }
    }
}

fn paper_config() -> SystemConfig {
    SystemConfig::default()
}

pub fn run() -> Result<(), Error> {
    let mut report = Report { failures: 0 };
    let cfg = paper_config();
    let dict = build_dictionaries(&cfg);

    // cascade factorization + sensing-matrix consistency
    {
        let mut worst_factor = 0.0_f64;
        let mut worst_q = 0.0_f64;
        for seed in 0..3u64 {
            let mut rng = derive_rng(7, &[100, seed]);
            let real = sample_channel(&cfg, &dict, &mut rng);
            let sched = random_schedule(cfg.n_ris_elements, cfg.n_blocks, &mut rng);
            let sensing = build_sensing_matrix(&dict, &sched);
            for k in 0..cfg.n_users {
                let rebuilt = matmul(
                    &matmul(&dict.f_ris, &real.d_cascade[k]),
                    &adjoint(&dict.f_bs),
                );
                worst_factor = worst_factor.max(rel_err(&rebuilt, &real.cascades[k]));
                let mut g = CVec::zeros(cfg.n_blocks * cfg.n_bs_antennas);
                for j in 0..cfg.n_blocks {
                    let eq = equivalent_channel(sched.psi.column(j), &real);
                    for c in 0..cfg.n_bs_antennas {
                        g[j * cfg.n_bs_antennas + c] = eq[[k, c]];
                    }
                }
                let pred = matvec(&sensing.q, &vec_mat(&real.d_cascade[k]));
                worst_q = worst_q.max(rel_err_vec(&pred, &g));
            }
        }
        report.check(
            "cascade-factorization",
            worst_factor < 1e-10,
            format!("worst relative residual {worst_factor:.3e}"),
        );
        report.check(
            "sensing-matrix-consistency",
            worst_q < 1e-10,
            format!("worst relative residual {worst_q:.3e}"),
        );
    }

    // coherence permutation invariance + decoupling on a small instance
    {
        let small = SystemConfig {
            n_bs_antennas: 2,
            n_ris_elements: 8,
            grid_bs: 4,
            grid_ris: 16,
            n_blocks: 6,
            ..paper_config()
        };
        let d = build_dictionaries(&small);
        let mut rng = derive_rng(7, &[200]);
        let sched = random_schedule(8, 6, &mut rng);
        let sensing = build_sensing_matrix(&d, &sched);
        let v = matmul(sched.psi.t(), &d.f_ris);
        let fb = conj(&d.f_bs);
        let q_tilde = kron(&fb, &v);
        let mu_q = mutual_coherence(&sensing.q)?;
        let mu_t = mutual_coherence(&q_tilde)?;
        let mu_max = mutual_coherence(&fb)?.max(mutual_coherence(&v)?);
        report.check(
            "coherence-row-permutation",
            (mu_q - mu_t).abs() < 1e-12,
            format!("|{mu_q} - {mu_t}|"),
        );
        report.check(
            "coherence-decoupling",
            (mu_t - mu_max).abs() < 1e-12,
            format!("|{mu_t} - {mu_max}|"),
        );
    }

    // analytic gradient vs central finite differences
    {
        let small = SystemConfig {
            n_ris_elements: 8,
            grid_ris: 16,
            ..paper_config()
        };
        let d = build_dictionaries(&small);
        let mut rng = derive_rng(7, &[300]);
        let mut worst = 0.0_f64;
        for _ in 0..3 {
            let s = random_schedule(8, 5, &mut rng);
            let xi = risblind::ris::optimal_xi(&s.psi, &d.f_ris);
            let (_, egrad) = risblind::ris::design_objective(&s.psi, &d.f_ris, xi);
            for _ in 0..3 {
                let i = rng.gen_range(0..8);
                let j = rng.gen_range(0..5);
                let h = 1e-6;
                let eval = |p: &CMat| risblind::ris::design_objective(p, &d.f_ris, xi).0;
                let mut p = s.psi.clone();
                p[[i, j]] += h;
                let fp = eval(&p);
                let mut p = s.psi.clone();
                p[[i, j]] -= h;
                let fm = eval(&p);
                let dre = (fp - fm) / (2.0 * h);
                let mut p = s.psi.clone();
                p[[i, j]] += Complex64::new(0.0, h);
                let fp = eval(&p);
                let mut p = s.psi.clone();
                p[[i, j]] -= Complex64::new(0.0, h);
                let fm = eval(&p);
                let dim = (fp - fm) / (2.0 * h);
                let fd = Complex64::new(dre / 2.0, dim / 2.0);
                let rel = (egrad[[i, j]] - fd).norm() / fd.norm().max(1e-12);
                worst = worst.max(rel);
            }
        }
        report.check(
            "manifold-gradient-fd",
            worst < 1e-5,
            format!("worst relative error {worst:.3e}"),
        );
    }

    // optimizer: monotone trace and coherence improvement
    {
        let small = SystemConfig {
            n_ris_elements: 16,
            grid_ris: 32,
            ..paper_config()
        };
        let d = build_dictionaries(&small);
        let mut rng = derive_rng(7, &[400]);
        let init = random_schedule(16, 10, &mut rng);
        let mu0 = mutual_coherence(&matmul(init.psi.t(), &d.f_ris))?;
        let (opt, trace) = optimize_schedule(&d.f_ris, 16, 10, &init, &OptimizeOptions::default())?;
        let mu1 = mutual_coherence(&matmul(opt.psi.t(), &d.f_ris))?;
        let monotone = trace
            .windows(2)
            .all(|w| w[1] <= w[0] * (1.0 + 1e-12) + 1e-12);
        report.check(
            "optimizer-monotone-trace",
            monotone,
            "objective increased".into(),
        );
        report.check(
            "optimizer-improves-coherence",
            mu1 < mu0,
            format!("{mu0:.4} -> {mu1:.4}"),
        );
    }

    // OMP sparsity-1 against the exhaustive single-column oracle
    {
        let mut rng = derive_rng(7, &[500]);
        let mut ok = true;
        for _ in 0..20 {
            let s = 0.5f64.sqrt();
            let q = CMat::from_shape_fn((6, 8), |_| {
                Complex64::new(
                    s * rng.sample::<f64, _>(rand_distr::StandardNormal),
                    s * rng.sample::<f64, _>(rand_distr::StandardNormal),
                )
            });
            let y = CVec::from_shape_fn(6, |_| {
                Complex64::new(
                    s * rng.sample::<f64, _>(rand_distr::StandardNormal),
                    s * rng.sample::<f64, _>(rand_distr::StandardNormal),
                )
            });
            let mut best = (0usize, f64::INFINITY);
            for jcol in 0..8 {
                let sub = q
                    .column(jcol)
                    .to_owned()
                    .insert_axis(ndarray::Axis(1))
                    .to_owned();
                let x = lstsq_vec(&sub, &y)?;
                let r = vec_norm(&(&y - &matvec(&sub, &x)));
                if r < best.1 {
                    best = (jcol, r);
                }
            }
            let res = omp(&y, &q, 1, None)?;
            ok &= res.support[0] == best.0;
        }
        report.check("omp-exhaustive-sparsity1", ok, "selection mismatch".into());
    }

    // codebook roundtrip
    {
        let mut rng = derive_rng(7, &[600]);
        let book = gen_codebook(28, 8, 4, &mut rng)?;
        let mut ok = true;
        for n in 0..book.n_codewords() {
            let (user, data) = decode_index(&book, n)?;
            let (msg, _) = encode(&book, user, &data)?;
            ok &= msg.codeword_index == n;
        }
        report.check("codebook-roundtrip", ok, "index mismatch".into());
    }

    // data rate at the default scenario
    {
        let rate = data_rate(&cfg);
        report.check(
            "data-rate",
            rate == 6.0 / 7.0,
            format!("got {rate}, expected 6/7"),
        );
    }

    // noiseless end-to-end on a single-path scenario
    {
        let small = SystemConfig {
            n_bs_antennas: 2,
            n_ris_elements: 8,
            n_users: 2,
            grid_bs: 4,
            grid_ris: 16,
            paths_rb: 1,
            paths_ru: 1,
            codeword_len: 16,
            bits_per_block: 5,
            n_blocks: 8,
            snr_db: f64::INFINITY,
            seed: 1,
        };
        let d = build_dictionaries(&small);
        let mut rng = derive_rng(7, &[700]);
        let channels = sample_channel(&small, &d, &mut rng);
        let book = gen_codebook(16, 5, 2, &mut rng)?;
        let sched = random_schedule(8, 8, &mut rng);
        let sensing = build_sensing_matrix(&d, &sched);
        let mut messages = Vec::new();
        for user in 0..2 {
            let mut row = Vec::new();
            for block in 0..8 {
                let bits: Vec<bool> = (0..4).map(|_| rng.gen()).collect();
                let (mut msg, _) = encode(&book, user, &bits)?;
                msg.block = block;
                row.push(msg);
            }
            messages.push(row);
        }
        let scenario = TransmissionScenario {
            cfg: small.clone(),
            book: book.clone(),
            channels,
            schedule: sched,
            messages: messages.clone(),
        };
        let rx = synthesize(&scenario, f64::INFINITY, &mut rng)?;
        let recovery = recover_all_blocks(&rx, &book, &small)?;
        let ber = weighted_ber(&messages, &recovery, &book)?;
        let estimates = estimate_cascades(&recovery, &sensing, &d, &small);
        let mut worst_nmse = 0.0_f64;
        for (k, est) in estimates.iter().enumerate() {
            match est {
                Ok(e) => {
                    worst_nmse =
                        worst_nmse.max(rel_err(&e.h_hat, &scenario.channels.cascades[k]).powi(2))
                }
                Err(_) => worst_nmse = f64::INFINITY,
            }
        }
        report.check(
            "noiseless-end-to-end",
            ber.weighted == 0.0 && worst_nmse < 1e-9,
            format!("BER {}, worst NMSE {:.3e}", ber.weighted, worst_nmse),
        );
    }

    if report.failures == 0 {
        println!("selftest: all checks passed");
        Ok(())
    } else {
        Err(Error::Numerical(format!(
            "selftest: {} check(s) failed",
            report.failures
        )))
    }
}
