//! Experiment configuration: a TOML document mirroring [`ExperimentSpec`].
//!
//! Every field is optional and falls back to the default scenario (the
//! 32-element RIS / 4-antenna BS / 4-user setup); the CLI exposes a flag
//! of the same name for each field.

use std::path::PathBuf;

use serde::Deserialize;

use crate::channel::SystemConfig;
use crate::error::{Error, Result};
use crate::experiment::{ExperimentSpec, OutputSpec, ScheduleSource, SweepAxes};

impl Default for SystemConfig {
    fn default() -> Self {
        SystemConfig {
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
        }
    }
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        ExperimentSpec {
            base: SystemConfig::default(),
            sweep: SweepAxes::default(),
            schedule: ScheduleSource::Random,
            trials: 100,
            master_seed: 1,
            freeze_codebook: false,
            output: OutputSpec::default(),
        }
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileSpec {
    system: Option<SystemTable>,
    sweep: Option<SweepTable>,
    run: Option<RunTable>,
    output: Option<OutputTable>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct SystemTable {
    n_bs_antennas: Option<usize>,
    n_ris_elements: Option<usize>,
    n_users: Option<usize>,
    grid_bs: Option<usize>,
    grid_ris: Option<usize>,
    paths_rb: Option<usize>,
    paths_ru: Option<usize>,
    codeword_len: Option<usize>,
    bits_per_block: Option<usize>,
    n_blocks: Option<usize>,
    snr_db: Option<f64>,
    seed: Option<u64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct SweepTable {
    snr_db: Option<Vec<f64>>,
    m: Option<Vec<usize>>,
    j: Option<Vec<usize>>,
    k: Option<Vec<usize>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RunTable {
    schedule: Option<String>,
    schedule_file: Option<PathBuf>,
    trials: Option<usize>,
    master_seed: Option<u64>,
    freeze_codebook: Option<bool>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct OutputTable {
    csv: Option<PathBuf>,
    svg_dir: Option<PathBuf>,
    trials_csv: Option<PathBuf>,
}

/// Build a schedule source from its tag and optional file path.
pub fn schedule_source(tag: &str, file: Option<PathBuf>) -> Result<ScheduleSource> {
    match tag {
        "random" => Ok(ScheduleSource::Random),
        "optimized" => Ok(ScheduleSource::Optimized),
        "file" => file
            .map(ScheduleSource::File)
            .ok_or_else(|| Error::Config("schedule = \"file\" requires schedule_file".into())),
        other => Err(Error::Config(format!(
            "unknown schedule source {:?} (expected random|optimized|file)",
            other
        ))),
    }
}

/// Parse a TOML experiment description, defaulting absent fields.
pub fn parse_experiment_spec(text: &str) -> Result<ExperimentSpec> {
    let file: FileSpec =
        toml::from_str(text).map_err(|e| Error::Config(format!("config parse: {e}")))?;
    let mut spec = ExperimentSpec::default();

    if let Some(sys) = file.system {
        let b = &mut spec.base;
        macro_rules! take {
            ($field:ident) => {
                if let Some(v) = sys.$field {
                    b.$field = v;
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
    if let Some(sweep) = file.sweep {
        spec.sweep.snr_db = sweep.snr_db.unwrap_or_default();
        spec.sweep.m = sweep.m.unwrap_or_default();
        spec.sweep.j = sweep.j.unwrap_or_default();
        spec.sweep.k = sweep.k.unwrap_or_default();
    }
    if let Some(run) = file.run {
        if let Some(trials) = run.trials {
            spec.trials = trials;
        }
        if let Some(seed) = run.master_seed {
            spec.master_seed = seed;
        }
        if let Some(fc) = run.freeze_codebook {
            spec.freeze_codebook = fc;
        }
        let tag = run.schedule.unwrap_or_else(|| "random".into());
        spec.schedule = schedule_source(&tag, run.schedule_file)?;
    }
    if let Some(out) = file.output {
        spec.output.csv = out.csv;
        spec.output.svg_dir = out.svg_dir;
        spec.output.trials_csv = out.trials_csv;
    }
    Ok(spec)
}
