//! Monte-Carlo experiment driver: sweeps, aggregation, CSV and plots.
//!
//! Determinism: every random object in a trial is drawn from a ChaCha
//! stream keyed by (master seed, purpose tag, sweep-point values, trial
//! index), so results do not depend on execution order or worker-thread
//! count. Trial streams deliberately exclude the schedule source, giving
//! schedule arms common random numbers: comparisons between random and
//! optimized schedules then see identical channels, codebooks, payloads
//! and noise.

use std::fs;
use std::io::Write as _;
use std::path::PathBuf;
use std::time::Instant;

use rand::Rng;
use rand_chacha::{rand_core::SeedableRng, ChaCha20Rng};
use rayon::prelude::*;

use crate::airlink::{synthesize, TransmissionScenario};
use crate::cascade::{build_sensing_matrix, estimate_cascades, SensingMatrix};
use crate::channel::{build_dictionaries, sample_channel, SteeringDictionary, SystemConfig};
use crate::codebook::{encode, gen_codebook, BlockMessage, Codebook};
use crate::error::{Error, Result};
use crate::metrics::{data_rate, nmse, nmse_db, weighted_ber, BerBreakdown};
use crate::plot::{line_plot_svg, Series};
use crate::recovery::{recover_all_blocks, RecoveryOutput};
use crate::ris::{
    optimize_schedule, random_schedule, read_schedule, OptimizeOptions, PhaseSchedule,
};

/// Where the RIS schedule of a run comes from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ScheduleSource {
    /// Fresh uniform phases per trial.
    Random,
    /// Coherence-minimized once per block count and shared by all trials.
    Optimized,
    /// Loaded from a schedule file and shared by all trials.
    File(PathBuf),
}

impl ScheduleSource {
    pub fn tag(&self) -> &'static str {
        match self {
            ScheduleSource::Random => "random",
            ScheduleSource::Optimized => "optimized",
            ScheduleSource::File(_) => "file",
        }
    }
}

/// Sweep axes; an empty axis falls back to the base config value.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SweepAxes {
    pub snr_db: Vec<f64>,
    pub m: Vec<usize>,
    pub j: Vec<usize>,
    pub k: Vec<usize>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct OutputSpec {
    pub csv: Option<PathBuf>,
    pub svg_dir: Option<PathBuf>,
    /// Optional per-trial record table.
    pub trials_csv: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub base: SystemConfig,
    pub sweep: SweepAxes,
    pub schedule: ScheduleSource,
    pub trials: usize,
    pub master_seed: u64,
    /// Reuse one codebook for all trials of a sweep point instead of
    /// redrawing per trial.
    pub freeze_codebook: bool,
    pub output: OutputSpec,
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::Config("trials must be positive".into()));
        }
        for cfg in self.points() {
            cfg.validate()?;
        }
        Ok(())
    }

    /// Sweep points in CSV row order (m, then j, then k, then snr).
    pub fn points(&self) -> Vec<SystemConfig> {
        let pick = |axis: &Vec<usize>, base: usize| -> Vec<usize> {
            if axis.is_empty() {
                vec![base]
            } else {
                axis.clone()
            }
        };
        let snrs = if self.sweep.snr_db.is_empty() {
            vec![self.base.snr_db]
        } else {
            self.sweep.snr_db.clone()
        };
        let mut out = Vec::new();
        for &m in &pick(&self.sweep.m, self.base.codeword_len) {
            for &j in &pick(&self.sweep.j, self.base.n_blocks) {
                for &k in &pick(&self.sweep.k, self.base.n_users) {
                    for &snr in &snrs {
                        let mut cfg = self.base.clone();
                        cfg.codeword_len = m;
                        cfg.n_blocks = j;
                        cfg.n_users = k;
                        cfg.snr_db = snr;
                        out.push(cfg);
                    }
                }
            }
        }
        out
    }
}

// --- deterministic stream derivation -------------------------------------

const TAG_CHANNEL: u64 = 1;
const TAG_CODEBOOK: u64 = 2;
const TAG_MESSAGES: u64 = 3;
const TAG_NOISE: u64 = 4;
const TAG_SCHEDULE: u64 = 5;
const TAG_OPT_INIT: u64 = 6;

fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Independent ChaCha stream keyed by the master seed and labelled fields.
pub fn derive_rng(master: u64, fields: &[u64]) -> ChaCha20Rng {
    let mut h = mix64(master ^ 0x7269_7362_6c69_6e64); // "risblind"
    for &f in fields {
        h = mix64(h ^ f);
    }
    ChaCha20Rng::seed_from_u64(h)
}

fn point_fields(tag: u64, cfg: &SystemConfig, trial: u64) -> [u64; 6] {
    [
        tag,
        cfg.snr_db.to_bits(),
        cfg.codeword_len as u64,
        cfg.n_blocks as u64,
        cfg.n_users as u64,
        trial,
    ]
}

// --- per-trial pipeline ---------------------------------------------------

/// Outcome of one Monte-Carlo trial.
#[derive(Debug, Clone)]
pub struct TrialRecord {
    pub trial: usize,
    pub snr_db: f64,
    /// Linear per-user NMSE; failed cascade estimates count as 1.
    pub per_user_nmse: Vec<f64>,
    /// The same in dB (floored).
    pub per_user_nmse_db: Vec<f64>,
    pub ber: BerBreakdown,
    /// Users whose cascade estimate failed outright.
    pub failed_users: u32,
    pub runtime_s: f64,
}

fn draw_messages(
    book: &Codebook,
    cfg: &SystemConfig,
    rng: &mut impl Rng,
) -> Result<Vec<Vec<BlockMessage>>> {
    let n_data = book.data_bits();
    let mut messages = Vec::with_capacity(cfg.n_users);
    for user in 0..cfg.n_users {
        let mut row = Vec::with_capacity(cfg.n_blocks);
        for block in 0..cfg.n_blocks {
            let bits: Vec<bool> = (0..n_data).map(|_| rng.gen()).collect();
            let (mut msg, _) = encode(book, user, &bits)?;
            msg.block = block;
            row.push(msg);
        }
        messages.push(row);
    }
    Ok(messages)
}

struct PointContext<'a> {
    cfg: &'a SystemConfig,
    dict: &'a SteeringDictionary,
    master_seed: u64,
    /// Schedule and sensing matrix when shared across trials.
    fixed: Option<(&'a PhaseSchedule, &'a SensingMatrix)>,
    frozen_book: Option<&'a Codebook>,
}

fn run_point_trial(ctx: &PointContext<'_>, trial: usize) -> Result<TrialRecord> {
    let start = Instant::now();
    let cfg = ctx.cfg;
    let t = trial as u64;

    let mut rng_channel = derive_rng(ctx.master_seed, &point_fields(TAG_CHANNEL, cfg, t));
    let channels = sample_channel(cfg, ctx.dict, &mut rng_channel);

    let book = match ctx.frozen_book {
        Some(b) => b.clone(),
        None => {
            let mut rng = derive_rng(ctx.master_seed, &point_fields(TAG_CODEBOOK, cfg, t));
            gen_codebook(cfg.codeword_len, cfg.bits_per_block, cfg.n_users, &mut rng)?
        }
    };

    let mut rng_msg = derive_rng(ctx.master_seed, &point_fields(TAG_MESSAGES, cfg, t));
    let messages = draw_messages(&book, cfg, &mut rng_msg)?;

    let (schedule_owned, sensing_owned);
    let (schedule, sensing): (&PhaseSchedule, &SensingMatrix) = match ctx.fixed {
        Some((s, q)) => (s, q),
        None => {
            let mut rng = derive_rng(ctx.master_seed, &point_fields(TAG_SCHEDULE, cfg, t));
            schedule_owned = random_schedule(cfg.n_ris_elements, cfg.n_blocks, &mut rng);
            sensing_owned = build_sensing_matrix(ctx.dict, &schedule_owned);
            (&schedule_owned, &sensing_owned)
        }
    };

    let scenario = TransmissionScenario {
        cfg: cfg.clone(),
        book: book.clone(),
        channels,
        schedule: schedule.clone(),
        messages: messages.clone(),
    };
    let mut rng_noise = derive_rng(ctx.master_seed, &point_fields(TAG_NOISE, cfg, t));
    let received = synthesize(&scenario, cfg.snr_db, &mut rng_noise)?;

    let recovery = recover_all_blocks(&received, &book, cfg)?;
    let estimates = estimate_cascades(&recovery, sensing, ctx.dict, cfg);

    let mut per_user_nmse = Vec::with_capacity(cfg.n_users);
    let mut failed_users = 0u32;
    for (k, est) in estimates.iter().enumerate() {
        let linear = match est {
            Ok(e) => nmse(&scenario.channels.cascades[k], &e.h_hat)?.0,
            Err(_) => {
                failed_users += 1;
                1.0
            }
        };
        per_user_nmse.push(linear);
    }
    let per_user_nmse_db = per_user_nmse.iter().map(|&l| nmse_db(l)).collect();
    let ber = weighted_ber(&messages, &recovery, &book)?;

    Ok(TrialRecord {
        trial,
        snr_db: cfg.snr_db,
        per_user_nmse,
        per_user_nmse_db,
        ber,
        failed_users,
        runtime_s: start.elapsed().as_secs_f64(),
    })
}

// --- aggregation and outputs ----------------------------------------------

/// Aggregated results of one sweep point.
#[derive(Debug, Clone)]
pub struct PointSummary {
    pub snr_db: f64,
    pub m: usize,
    pub j: usize,
    pub k: usize,
    pub schedule: String,
    pub trials: usize,
    /// Trials that aborted with a numerical failure (excluded from means).
    pub failed_trials: usize,
    pub ber_weighted: f64,
    pub ber_id: f64,
    pub ber_data: f64,
    pub nmse_linear_mean: f64,
    pub nmse_db: f64,
    pub erasure_rate: f64,
    pub data_rate: f64,
}

pub const CSV_HEADER: &str =
    "snr_db,m,j,k,schedule,trials,ber_weighted,ber_id,ber_data,nmse_db,erasure_rate,data_rate";

#[derive(Debug)]
pub struct ExperimentOutput {
    pub summaries: Vec<PointSummary>,
    /// Per sweep point, the per-trial records in trial order (failed
    /// trials omitted).
    pub records: Vec<Vec<TrialRecord>>,
    /// The aggregated CSV document (also written to `output.csv`).
    pub csv: String,
}

fn aggregate(
    cfg: &SystemConfig,
    tag: &str,
    trials: usize,
    records: &[TrialRecord],
) -> PointSummary {
    let mut num = 0u64;
    let mut den = 0u64;
    let mut id_err = 0u64;
    let mut id_tot = 0u64;
    let mut dat_err = 0u64;
    let mut dat_tot = 0u64;
    let mut erasures = 0u64;
    let mut nmse_sum = 0.0;
    let mut nmse_count = 0usize;
    for r in records {
        num += r.ber.numerator;
        den += r.ber.denominator;
        id_err += r.ber.id_errors;
        id_tot += r.ber.id_bits_total;
        dat_err += r.ber.data_errors;
        dat_tot += r.ber.data_bits_total;
        erasures += r.ber.erasures;
        for &l in &r.per_user_nmse {
            nmse_sum += l;
            nmse_count += 1;
        }
    }
    let ratio = |a: u64, b: u64| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let nmse_linear_mean = if nmse_count == 0 {
        f64::NAN
    } else {
        nmse_sum / nmse_count as f64
    };
    let blocks = (cfg.n_users * cfg.n_blocks * records.len()) as u64;
    PointSummary {
        snr_db: cfg.snr_db,
        m: cfg.codeword_len,
        j: cfg.n_blocks,
        k: cfg.n_users,
        schedule: tag.to_string(),
        trials,
        failed_trials: trials - records.len(),
        ber_weighted: ratio(num, den),
        ber_id: ratio(id_err, id_tot),
        ber_data: ratio(dat_err, dat_tot),
        nmse_linear_mean,
        nmse_db: nmse_db(nmse_linear_mean),
        erasure_rate: ratio(erasures, blocks),
        data_rate: data_rate(cfg),
    }
}

fn render_csv(spec: &ExperimentSpec, summaries: &[PointSummary]) -> String {
    let mut out = String::new();
    out.push_str("# risblind sweep results\n");
    out.push_str(&format!(
        "# master_seed={} trials_per_point={} schedule={} freeze_codebook={}\n",
        spec.master_seed,
        spec.trials,
        spec.schedule.tag(),
        spec.freeze_codebook
    ));
    out.push_str(
        "# ber_weighted = sum(Mb*e_id + e_dat) / (user_blocks * (Mb*MK + (Mb - MK))); an erased user-block counts every bit as wrong\n",
    );
    out.push_str(
        "# nmse_db = 10*log10(mean linear NMSE over trials and users), floored at -150 dB\n",
    );
    out.push_str(CSV_HEADER);
    out.push('\n');
    for s in summaries {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}\n",
            s.snr_db,
            s.m,
            s.j,
            s.k,
            s.schedule,
            s.trials,
            s.ber_weighted,
            s.ber_id,
            s.ber_data,
            s.nmse_db,
            s.erasure_rate,
            s.data_rate
        ));
    }
    out
}

fn render_trials_csv(all: &[(PointSummary, &[TrialRecord])]) -> String {
    let mut out = String::new();
    out.push_str("snr_db,m,j,k,schedule,trial,ber_weighted,erasures,failed_users,nmse_db_mean\n");
    for (point, records) in all {
        for r in *records {
            let mean_lin =
                r.per_user_nmse.iter().sum::<f64>() / r.per_user_nmse.len().max(1) as f64;
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{}\n",
                point.snr_db,
                point.m,
                point.j,
                point.k,
                point.schedule,
                r.trial,
                r.ber.weighted,
                r.ber.erasures,
                r.failed_users,
                nmse_db(mean_lin)
            ));
        }
    }
    out
}

fn write_plots(dir: &PathBuf, summaries: &[PointSummary]) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut groups: Vec<(String, Vec<(f64, f64, f64)>)> = Vec::new();
    for s in summaries {
        let label = format!("M={} J={} K={} {}", s.m, s.j, s.k, s.schedule);
        match groups.iter_mut().find(|(l, _)| *l == label) {
            Some((_, pts)) => pts.push((s.snr_db, s.ber_weighted, s.nmse_db)),
            None => groups.push((label, vec![(s.snr_db, s.ber_weighted, s.nmse_db)])),
        }
    }
    let ber_series: Vec<Series> = groups
        .iter()
        .map(|(label, pts)| Series {
            label: label.clone(),
            points: pts.iter().map(|&(x, y, _)| (x, y)).collect(),
        })
        .collect();
    let nmse_series: Vec<Series> = groups
        .iter()
        .map(|(label, pts)| Series {
            label: label.clone(),
            points: pts.iter().map(|&(x, _, y)| (x, y)).collect(),
        })
        .collect();
    fs::write(
        dir.join("ber_vs_snr.svg"),
        line_plot_svg(
            "Weighted BER vs SNR",
            "SNR (dB)",
            "weighted BER (log)",
            &ber_series,
            true,
        ),
    )?;
    fs::write(
        dir.join("nmse_vs_snr.svg"),
        line_plot_svg("NMSE vs SNR", "SNR (dB)", "NMSE (dB)", &nmse_series, false),
    )?;
    Ok(())
}

/// Run the full sweep: for every point x trial draw a fresh scenario,
/// synthesize, recover, estimate and record; aggregate per point.
///
/// Config errors abort the run; individual trial failures are recorded
/// in `failed_trials` and excluded from the means.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentOutput> {
    spec.validate()?;
    let dict = build_dictionaries(&spec.base);

    let file_schedule = match &spec.schedule {
        ScheduleSource::File(path) => {
            let text = fs::read_to_string(path).map_err(|e| {
                Error::Config(format!("cannot read schedule {}: {e}", path.display()))
            })?;
            Some(read_schedule(std::io::BufReader::new(text.as_bytes()))?)
        }
        _ => None,
    };

    let mut summaries = Vec::new();
    let mut all_records = Vec::new();
    for cfg in spec.points() {
        // Shared schedule for optimized/file sources; the optimized
        // design depends only on the block count, so points sharing J
        // reuse the same schedule.
        let fixed_schedule: Option<PhaseSchedule> = match &spec.schedule {
            ScheduleSource::Random => None,
            ScheduleSource::Optimized => {
                let mut rng = derive_rng(spec.master_seed, &[TAG_OPT_INIT, cfg.n_blocks as u64]);
                let init = random_schedule(cfg.n_ris_elements, cfg.n_blocks, &mut rng);
                let (opt, _) = optimize_schedule(
                    &dict.f_ris,
                    cfg.n_ris_elements,
                    cfg.n_blocks,
                    &init,
                    &OptimizeOptions::default(),
                )?;
                Some(opt)
            }
            ScheduleSource::File(_) => {
                let s = file_schedule.as_ref().unwrap();
                if s.psi.dim() != (cfg.n_ris_elements, cfg.n_blocks) {
                    return Err(Error::Config(format!(
                        "schedule file is {:?}, sweep point needs ({}, {})",
                        s.psi.dim(),
                        cfg.n_ris_elements,
                        cfg.n_blocks
                    )));
                }
                Some(s.clone())
            }
        };
        let fixed_sensing = fixed_schedule
            .as_ref()
            .map(|s| build_sensing_matrix(&dict, s));

        let frozen_book = if spec.freeze_codebook {
            let mut rng = derive_rng(
                spec.master_seed,
                &[
                    TAG_CODEBOOK,
                    cfg.codeword_len as u64,
                    cfg.n_users as u64,
                    u64::MAX,
                ],
            );
            Some(gen_codebook(
                cfg.codeword_len,
                cfg.bits_per_block,
                cfg.n_users,
                &mut rng,
            )?)
        } else {
            None
        };

        let ctx = PointContext {
            cfg: &cfg,
            dict: &dict,
            master_seed: spec.master_seed,
            fixed: fixed_schedule.as_ref().zip(fixed_sensing.as_ref()),
            frozen_book: frozen_book.as_ref(),
        };

        let results: Vec<Result<TrialRecord>> = (0..spec.trials)
            .into_par_iter()
            .map(|t| run_point_trial(&ctx, t))
            .collect();

        let mut records = Vec::with_capacity(spec.trials);
        for r in results {
            match r {
                Ok(rec) => records.push(rec),
                Err(e) if e.is_config() => return Err(e),
                Err(_) => {} // numerical trial failure: recorded via failed_trials
            }
        }
        summaries.push(aggregate(&cfg, spec.schedule.tag(), spec.trials, &records));
        all_records.push(records);
    }

    let csv = render_csv(spec, &summaries);
    if let Some(path) = &spec.output.csv {
        if let Some(parent) = path.parent() {
            if !parent.as_os_str().is_empty() {
                fs::create_dir_all(parent)?;
            }
        }
        let mut f = fs::File::create(path)?;
        f.write_all(csv.as_bytes())?;
    }
    if let Some(path) = &spec.output.trials_csv {
        let paired: Vec<(PointSummary, &[TrialRecord])> = summaries
            .iter()
            .cloned()
            .zip(all_records.iter().map(|v| v.as_slice()))
            .collect();
        fs::write(path, render_trials_csv(&paired))?;
    }
    if let Some(dir) = &spec.output.svg_dir {
        write_plots(dir, &summaries)?;
    }

    Ok(ExperimentOutput {
        summaries,
        records: all_records,
        csv,
    })
}

// --- demo -------------------------------------------------------------------

/// Everything a verbose single-trial inspection needs.
#[derive(Debug)]
pub struct DemoReport {
    pub cfg: SystemConfig,
    pub schedule_tag: String,
    pub noise_var: f64,
    pub messages: Vec<Vec<BlockMessage>>,
    pub recovery: RecoveryOutput,
    pub per_user_nmse_db: Vec<f64>,
    pub failed_users: Vec<bool>,
    pub ber: BerBreakdown,
    pub data_rate: f64,
}

/// Run one fully instrumented trial at the base config.
pub fn demo_trial(
    cfg: &SystemConfig,
    schedule: &ScheduleSource,
    master_seed: u64,
) -> Result<DemoReport> {
    cfg.validate()?;
    let dict = build_dictionaries(cfg);
    let sched = match schedule {
        ScheduleSource::Random => {
            let mut rng = derive_rng(master_seed, &point_fields(TAG_SCHEDULE, cfg, 0));
            random_schedule(cfg.n_ris_elements, cfg.n_blocks, &mut rng)
        }
        ScheduleSource::Optimized => {
            let mut rng = derive_rng(master_seed, &[TAG_OPT_INIT, cfg.n_blocks as u64]);
            let init = random_schedule(cfg.n_ris_elements, cfg.n_blocks, &mut rng);
            optimize_schedule(
                &dict.f_ris,
                cfg.n_ris_elements,
                cfg.n_blocks,
                &init,
                &OptimizeOptions::default(),
            )?
            .0
        }
        ScheduleSource::File(path) => {
            let text = fs::read_to_string(path).map_err(|e| {
                Error::Config(format!("cannot read schedule {}: {e}", path.display()))
            })?;
            let s = read_schedule(std::io::BufReader::new(text.as_bytes()))?;
            if s.psi.dim() != (cfg.n_ris_elements, cfg.n_blocks) {
                return Err(Error::Config(format!(
                    "schedule file is {:?}, config needs ({}, {})",
                    s.psi.dim(),
                    cfg.n_ris_elements,
                    cfg.n_blocks
                )));
            }
            s
        }
    };
    let sensing = build_sensing_matrix(&dict, &sched);

    let mut rng_channel = derive_rng(master_seed, &point_fields(TAG_CHANNEL, cfg, 0));
    let channels = sample_channel(cfg, &dict, &mut rng_channel);
    let mut rng_book = derive_rng(master_seed, &point_fields(TAG_CODEBOOK, cfg, 0));
    let book = gen_codebook(
        cfg.codeword_len,
        cfg.bits_per_block,
        cfg.n_users,
        &mut rng_book,
    )?;
    let mut rng_msg = derive_rng(master_seed, &point_fields(TAG_MESSAGES, cfg, 0));
    let messages = draw_messages(&book, cfg, &mut rng_msg)?;
    let scenario = TransmissionScenario {
        cfg: cfg.clone(),
        book: book.clone(),
        channels,
        schedule: sched,
        messages: messages.clone(),
    };
    let mut rng_noise = derive_rng(master_seed, &point_fields(TAG_NOISE, cfg, 0));
    let received = synthesize(&scenario, cfg.snr_db, &mut rng_noise)?;
    let recovery = recover_all_blocks(&received, &book, cfg)?;
    let estimates = estimate_cascades(&recovery, &sensing, &dict, cfg);

    let mut per_user_nmse_db = Vec::new();
    let mut failed_users = Vec::new();
    for (k, est) in estimates.iter().enumerate() {
        match est {
            Ok(e) => {
                per_user_nmse_db.push(nmse(&scenario.channels.cascades[k], &e.h_hat)?.1);
                failed_users.push(false);
            }
            Err(_) => {
                per_user_nmse_db.push(0.0);
                failed_users.push(true);
            }
        }
    }
    let ber = weighted_ber(&messages, &recovery, &book)?;

    Ok(DemoReport {
        cfg: cfg.clone(),
        schedule_tag: schedule.tag().to_string(),
        noise_var: received.noise_var,
        messages,
        recovery,
        per_user_nmse_db,
        failed_users,
        ber,
        data_rate: data_rate(cfg),
    })
}
