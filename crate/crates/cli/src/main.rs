//! `bdt`: runs seeded scenarios and compares configurations.

mod report;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use bdt_core::bolt::FastlaneKind;
use bdt_core::config::{ConfigError, ScenarioConfig};
use bdt_core::scenario::{run_scenario, RunOptions};
use bdt_core::sim::write_jsonl;

use report::{compare_rows, compare_table, summarize_run, summarize_sweep, RunEntry, RunFile};

#[derive(Parser)]
#[command(name = "bdt", version, about = "Seeded simulations of an optimistic asynchronous atomic broadcast")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario, or a sweep of seeds.
    Run {
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
        /// Write the event trace as JSON lines; sweeps add `-<seed>` to the name.
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Directory for `metrics.json` and `summary.txt`.
        #[arg(long, default_value = "bdt-out")]
        out: PathBuf,
    },
    /// Run several configs and print per-path costs side by side.
    Compare {
        #[arg(required = true, num_args = 2..)]
        configs: Vec<PathBuf>,
        #[command(flatten)]
        overrides: Overrides,
        /// Directory for `compare.json`.
        #[arg(long, default_value = "bdt-out")]
        out: PathBuf,
    },
}

#[derive(Args, Clone)]
struct Overrides {
    #[arg(long)]
    seed: Option<u64>,
    /// Run K consecutive seeds starting at the config seed.
    #[arg(long)]
    sweep: Option<u64>,
    #[arg(long)]
    fastlane: Option<FastlaneKind>,
    /// Fault spec, e.g. `crash:3@0;garbage:2`.
    #[arg(long)]
    faults: Option<String>,
}

impl Overrides {
    fn apply(&self, mut cfg: ScenarioConfig) -> Result<(ScenarioConfig, Vec<u64>), ConfigError> {
        if let Some(seed) = self.seed {
            cfg.seed = seed;
            cfg.sweep.clear();
        }
        if let Some(k) = self.fastlane {
            cfg.fastlane = k;
        }
        if let Some(faults) = &self.faults {
            cfg.faults = faults.clone();
        }
        cfg.validate()?;
        let seeds = match self.sweep {
            Some(k) => (cfg.seed..cfg.seed + k).collect(),
            None => cfg.seeds(),
        };
        Ok((cfg, seeds))
    }
}

#[derive(Debug)]
enum Failure {
    Config(PathBuf, ConfigError),
    Io(PathBuf, std::io::Error),
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Config(p, e) => write!(f, "{}: {e}", p.display()),
            Failure::Io(p, e) => write!(f, "{}: {e}", p.display()),
        }
    }
}

fn write(path: &Path, bytes: &[u8]) -> Result<(), Failure> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Failure::Io(dir.to_path_buf(), e))?;
    }
    fs::write(path, bytes).map_err(|e| Failure::Io(path.to_path_buf(), e))
}

fn trace_path(base: &Path, seed: u64, sweep: bool) -> PathBuf {
    if !sweep {
        return base.to_path_buf();
    }
    let stem = base.file_stem().and_then(|s| s.to_str()).unwrap_or("trace");
    let name = match base.extension().and_then(|s| s.to_str()) {
        Some(ext) => format!("{stem}-{seed}.{ext}"),
        None => format!("{stem}-{seed}"),
    };
    base.with_file_name(name)
}

/// Runs every seed, in parallel, and returns the entries sorted by seed.
fn run_seeds(cfg: &ScenarioConfig, seeds: &[u64], trace: Option<&Path>) -> Result<Vec<RunEntry>, Failure> {
    let sweep = seeds.len() > 1;
    let mut entries = seeds
        .par_iter()
        .map(|&seed| {
            let cfg = ScenarioConfig { seed, ..cfg.clone() };
            let report = run_scenario(&cfg, RunOptions { trace: trace.is_some() }).map_err(|e| Failure::Config(PathBuf::new(), e))?;
            if let (Some(base), Some(events)) = (trace, report.trace.as_ref()) {
                let mut buf = Vec::new();
                write_jsonl(events, &mut buf).expect("writing to memory");
                write(&trace_path(base, seed, sweep), &buf)?;
            }
            Ok(RunEntry::from_report(&report))
        })
        .collect::<Result<Vec<_>, Failure>>()?;
    entries.sort_by_key(|e| e.seed);
    Ok(entries)
}

fn load(path: &Path, overrides: &Overrides) -> Result<(ScenarioConfig, Vec<u64>), Failure> {
    let cfg = ScenarioConfig::load(path).map_err(|e| Failure::Config(path.to_path_buf(), e))?;
    overrides.apply(cfg).map_err(|e| Failure::Config(path.to_path_buf(), e))
}

fn cmd_run(config: &Path, overrides: &Overrides, trace: Option<&Path>, out: &Path) -> Result<bool, Failure> {
    let (cfg, seeds) = load(config, overrides)?;
    let entries = run_seeds(&cfg, &seeds, trace).map_err(|e| match e {
        Failure::Config(_, err) => Failure::Config(config.to_path_buf(), err),
        other => other,
    })?;
    let mut summary: String = entries.iter().map(|e| summarize_run(&cfg, e)).collect();
    if entries.len() > 1 {
        summary.push_str(&summarize_sweep(&entries));
    }
    print!("{summary}");
    let ok = entries.iter().all(RunEntry::ok);
    let file = RunFile { config: cfg, runs: entries };
    write(&out.join("metrics.json"), &serde_json::to_vec_pretty(&file).expect("serializable"))?;
    write(&out.join("summary.txt"), summary.as_bytes())?;
    Ok(ok)
}

fn cmd_compare(configs: &[PathBuf], overrides: &Overrides, out: &Path) -> Result<bool, Failure> {
    let mut rows = Vec::new();
    let mut ok = true;
    for path in configs {
        let (cfg, seeds) = load(path, overrides)?;
        let entries = run_seeds(&cfg, &seeds, None).map_err(|e| match e {
            Failure::Config(_, err) => Failure::Config(path.clone(), err),
            other => other,
        })?;
        ok &= entries.iter().all(RunEntry::ok);
        let records: Vec<_> = entries.into_iter().map(|e| e.metrics).collect();
        let label = path.file_stem().map_or_else(|| path.display().to_string(), |s| s.to_string_lossy().into_owned());
        rows.extend(compare_rows(&label, &cfg, &records));
    }
    print!("{}", compare_table(&rows));
    write(&out.join("compare.json"), &serde_json::to_vec_pretty(&rows).expect("serializable"))?;
    Ok(ok)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().filter_or("BDT_LOG_LEVEL", "warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run { config, overrides, trace, out } => cmd_run(config, overrides, trace.as_deref(), out),
        Command::Compare { configs, overrides, out } => cmd_compare(configs, overrides, out),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("bdt: a safety monitor fired or a run did not finish");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
