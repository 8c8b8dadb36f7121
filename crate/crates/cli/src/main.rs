//! Command-line driver: sweeps, RIS schedule design, single-trial demo,
//! and a quick self-test of the numerical core.
//!
//! Exit codes: 0 success, 1 configuration error, 2 runtime/numerical
//! failure.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use risblind::channel::{build_dictionaries, SystemConfig};
use risblind::config::{parse_experiment_spec, schedule_source};
use risblind::error::Error;
use risblind::experiment::{demo_trial, run_experiment, ExperimentSpec, ScheduleSource};
use risblind::ris::{
    mutual_coherence, optimize_schedule, random_schedule, write_schedule, OptimizeOptions,
};

mod selftest;

#[derive(Parser)]
#[command(
    name = "risblind",
    about = "Blind channel estimation simulator for RIS-assisted mmWave uplinks",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a Monte-Carlo sweep and write the aggregated CSV (and plots).
    Sweep(SweepArgs),
    /// Design a coherence-minimizing RIS schedule and write it to a file.
    OptimizeRis(OptimizeArgs),
    /// Run one verbose trial and print the recovery details.
    Demo(DemoArgs),
    /// Run the built-in oracle checks.
    Selftest,
}

#[derive(Args, Clone)]
struct SystemOverrides {
    #[arg(long)]
    n_bs_antennas: Option<usize>,
    #[arg(long)]
    n_ris_elements: Option<usize>,
    #[arg(long)]
    n_users: Option<usize>,
    #[arg(long)]
    grid_bs: Option<usize>,
    #[arg(long)]
    grid_ris: Option<usize>,
    #[arg(long)]
    paths_rb: Option<usize>,
    #[arg(long)]
    paths_ru: Option<usize>,
    #[arg(long)]
    codeword_len: Option<usize>,
    #[arg(long)]
    bits_per_block: Option<usize>,
    #[arg(long)]
    n_blocks: Option<usize>,
    /// Base per-entry receive SNR in dB ("inf" disables noise).
    #[arg(long)]
    snr_db: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
}

impl SystemOverrides {
    fn apply(&self, cfg: &mut SystemConfig) {
        macro_rules! take {
            ($field:ident) => {
                if let Some(v) = self.$field {
                    cfg.$field = v;
                }
            };
        }
        take!(n_bs_antennas);
        take!(n_ris_elements);
        take!(n_users);
        take!(grid_bs);
        take!(grid_ris);
        take!(paths_rb);
        take!(paths_ru);
        take!(codeword_len);
        take!(bits_per_block);
        take!(n_blocks);
        take!(snr_db);
        take!(seed);
    }
}

#[derive(Args)]
struct SweepArgs {
    /// TOML experiment description; flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,

    #[command(flatten)]
    system: SystemOverrides,

    /// Sweep list over SNR points in dB.
    #[arg(long, value_delimiter = ',')]
    sweep_snr_db: Option<Vec<f64>>,
    /// Sweep list over codeword lengths M.
    #[arg(long, value_delimiter = ',')]
    sweep_m: Option<Vec<usize>>,
    /// Sweep list over block counts J.
    #[arg(long, value_delimiter = ',')]
    sweep_j: Option<Vec<usize>>,
    /// Sweep list over user counts K.
    #[arg(long, value_delimiter = ',')]
    sweep_k: Option<Vec<usize>>,

    /// Schedule source: random | optimized | file.
    #[arg(long)]
    schedule: Option<String>,
    #[arg(long)]
    schedule_file: Option<PathBuf>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    master_seed: Option<u64>,
    /// Reuse one codebook across the trials of each sweep point.
    #[arg(long)]
    freeze_codebook: bool,

    /// Aggregated CSV output path.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Directory for SVG plots.
    #[arg(long)]
    svg_dir: Option<PathBuf>,
    /// Optional per-trial CSV output path.
    #[arg(long)]
    trials_csv: Option<PathBuf>,
}

#[derive(Args)]
struct OptimizeArgs {
    /// Output schedule file (J lines of N_R phases in radians).
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 32)]
    n_ris: usize,
    #[arg(long, default_value_t = 30)]
    j_blocks: usize,
    #[arg(long, default_value_t = 64)]
    grid_ris: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 500)]
    max_iters: usize,
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
}

#[derive(Args)]
struct DemoArgs {
    #[arg(long)]
    config: Option<PathBuf>,

    #[command(flatten)]
    system: SystemOverrides,

    /// Schedule source: random | optimized | file.
    #[arg(long)]
    schedule: Option<String>,
    #[arg(long)]
    schedule_file: Option<PathBuf>,
    #[arg(long)]
    master_seed: Option<u64>,
    /// Print per-block recovery tables for the first N blocks.
    #[arg(long, default_value_t = 6)]
    show_blocks: usize,
}

fn load_spec(config: &Option<PathBuf>) -> Result<ExperimentSpec, Error> {
    match config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| {
                Error::Config(format!("cannot read config {}: {e}", path.display()))
            })?;
            parse_experiment_spec(&text)
        }
        None => Ok(ExperimentSpec::default()),
    }
}

fn cmd_sweep(args: &SweepArgs) -> Result<(), Error> {
    let mut spec = load_spec(&args.config)?;
    args.system.apply(&mut spec.base);
    if let Some(v) = &args.sweep_snr_db {
        spec.sweep.snr_db = v.clone();
    }
    if let Some(v) = &args.sweep_m {
        spec.sweep.m = v.clone();
    }
    if let Some(v) = &args.sweep_j {
        spec.sweep.j = v.clone();
    }
    if let Some(v) = &args.sweep_k {
        spec.sweep.k = v.clone();
    }
    if let Some(t) = args.trials {
        spec.trials = t;
    }
    if let Some(s) = args.master_seed {
        spec.master_seed = s;
    }
    if args.freeze_codebook {
        spec.freeze_codebook = true;
    }
    if let Some(tag) = &args.schedule {
        spec.schedule = schedule_source(
            tag,
            args.schedule_file.clone().or(match &spec.schedule {
                ScheduleSource::File(p) => Some(p.clone()),
                _ => None,
            }),
        )?;
    } else if let Some(file) = &args.schedule_file {
        spec.schedule = ScheduleSource::File(file.clone());
    }
    if let Some(p) = &args.csv {
        spec.output.csv = Some(p.clone());
    }
    if let Some(p) = &args.svg_dir {
        spec.output.svg_dir = Some(p.clone());
    }
    if let Some(p) = &args.trials_csv {
        spec.output.trials_csv = Some(p.clone());
    }

    let out = run_experiment(&spec)?;
    for s in &out.summaries {
        eprintln!(
            "point snr={} dB M={} J={} K={} ({}): weighted BER {:.3e}, NMSE {:.2} dB, erasures {:.3e}{}",
            s.snr_db,
            s.m,
            s.j,
            s.k,
            s.schedule,
            s.ber_weighted,
            s.nmse_db,
            s.erasure_rate,
            if s.failed_trials > 0 {
                format!(", {} failed trials", s.failed_trials)
            } else {
                String::new()
            }
        );
    }
    match &spec.output.csv {
        Some(path) => eprintln!("wrote {}", path.display()),
        None => print!("{}", out.csv),
    }
    Ok(())
}

fn cmd_optimize(args: &OptimizeArgs) -> Result<(), Error> {
    if args.grid_ris < args.n_ris {
        return Err(Error::Config(format!(
            "grid_ris {} must be >= n_ris {}",
            args.grid_ris, args.n_ris
        )));
    }
    let cfg = SystemConfig {
        n_bs_antennas: 1,
        n_ris_elements: args.n_ris,
        grid_bs: 1,
        grid_ris: args.grid_ris,
        ..SystemConfig::default()
    };
    let dict = build_dictionaries(&cfg);
    use rand_chacha::{rand_core::SeedableRng, ChaCha20Rng};
    let mut rng = ChaCha20Rng::seed_from_u64(args.seed);
    let init = random_schedule(args.n_ris, args.j_blocks, &mut rng);
    let opts = OptimizeOptions {
        max_iters: args.max_iters,
        tol: args.tol,
        ..OptimizeOptions::default()
    };
    let mu_init = mutual_coherence(&risblind::linalg::matmul(init.psi.t(), &dict.f_ris))?;
    let (opt, trace) = optimize_schedule(&dict.f_ris, args.n_ris, args.j_blocks, &init, &opts)?;
    let mu_opt = mutual_coherence(&risblind::linalg::matmul(opt.psi.t(), &dict.f_ris))?;
    let mut f = fs::File::create(&args.out)?;
    write_schedule(&opt, &mut f)?;
    eprintln!(
        "objective {:.6e} -> {:.6e} in {} iterations; coherence {:.4} -> {:.4}",
        trace.first().unwrap(),
        trace.last().unwrap(),
        trace.len() - 1,
        mu_init,
        mu_opt
    );
    eprintln!("wrote {}", args.out.display());
    Ok(())
}

fn cmd_demo(args: &DemoArgs) -> Result<(), Error> {
    let mut spec = load_spec(&args.config)?;
    args.system.apply(&mut spec.base);
    if let Some(s) = args.master_seed {
        spec.master_seed = s;
    }
    if let Some(tag) = &args.schedule {
        spec.schedule = schedule_source(tag, args.schedule_file.clone())?;
    } else if let Some(file) = &args.schedule_file {
        spec.schedule = ScheduleSource::File(file.clone());
    }

    let cfg = &spec.base;
    let report = demo_trial(cfg, &spec.schedule, spec.master_seed)?;
    println!(
        "scenario: N_B={} N_R={} K={} G_B={} G_R={} L_RB={} L_RU={} M={} M_b={} J={} SNR={} dB",
        cfg.n_bs_antennas,
        cfg.n_ris_elements,
        cfg.n_users,
        cfg.grid_bs,
        cfg.grid_ris,
        cfg.paths_rb,
        cfg.paths_ru,
        cfg.codeword_len,
        cfg.bits_per_block,
        cfg.n_blocks,
        cfg.snr_db
    );
    println!(
        "schedule: {}; noise variance {:.3e}; data rate {:.4} bit/use",
        report.schedule_tag, report.noise_var, report.data_rate
    );
    let shown = args.show_blocks.min(cfg.n_blocks);
    for j in 0..shown {
        let truth: Vec<usize> = (0..cfg.n_users)
            .map(|u| report.messages[u][j].codeword_index)
            .collect();
        let got: Vec<String> = report.recovery.blocks[j]
            .per_user
            .iter()
            .map(|r| match r {
                Some(r) => r.codeword_index.to_string(),
                None => "erased".to_string(),
            })
            .collect();
        println!(
            "block {:>3}: sent {:?}  recovered [{}]",
            j,
            truth,
            got.join(", ")
        );
    }
    if shown < cfg.n_blocks {
        println!("... ({} more blocks)", cfg.n_blocks - shown);
    }
    println!(
        "weighted BER {:.4e} ({} erasures of {} user-blocks)",
        report.ber.weighted,
        report.ber.erasures,
        cfg.n_users * cfg.n_blocks
    );
    for (k, db) in report.per_user_nmse_db.iter().enumerate() {
        if report.failed_users[k] {
            println!(
                "user {}: cascade estimate failed (insufficient measurements)",
                k
            );
        } else {
            println!("user {}: cascade NMSE {:.2} dB", k, db);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match &cli.command {
        Command::Sweep(args) => cmd_sweep(args),
        Command::OptimizeRis(args) => cmd_optimize(args),
        Command::Demo(args) => cmd_demo(args),
        Command::Selftest => selftest::run(),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config() { 1 } else { 2 })
        }
    }
}
