//! `airfc`: runs emulation, training and rank-check sweeps from a JSON
//! config. Exit status 0 on success, 2 on a configuration error, 3 when a
//! run fails.

use std::io::ErrorKind;
use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;

use airfc::experiment::{self, ExperimentConfig, Mode};
use airfc::Error;
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "airfc", version, about = "Over-the-air fully-connected layer experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Emulation error of Algorithm 1 over a sweep grid (CSV).
    Emulate(Common),
    /// Test accuracy of the training schemes over a sweep grid (CSV plus
    /// per-run metric traces).
    Train(Common),
    /// Numerical rank of sampled cascades against the rank bound (JSON).
    RankCheck(Common),
    /// Channel, transmission parameters and emulation report for the first
    /// seed, in binary and JSON form. `--out` names a directory.
    DumpChannel(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config's output path.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed list: `3`, `1,2,5` or a half-open range `0..20`.
    #[arg(long)]
    seeds: Option<Seeds>,
    /// Worker threads; defaults to one per core.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Clone, Debug)]
struct Seeds(Vec<u64>);

impl FromStr for Seeds {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let bad = |_| format!("bad seed list {s:?}");
        if let Some((a, b)) = s.split_once("..") {
            let (a, b): (u64, u64) = (a.trim().parse().map_err(bad)?, b.trim().parse().map_err(bad)?);
            if a >= b {
                return Err(format!("empty seed range {s:?}"));
            }
            return Ok(Seeds((a..b).collect()));
        }
        s.split(',')
            .map(|t| t.trim().parse::<u64>().map_err(bad))
            .collect::<Result<Vec<_>, _>>()
            .map(Seeds)
    }
}

enum Failure {
    Config(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidConfig(_) => Failure::Config(e.to_string()),
            other => Failure::Runtime(other.to_string()),
        }
    }
}

fn prepare(common: &Common, needs_output: bool) -> Result<ExperimentConfig, Failure> {
    if let Some(n) = common.threads {
        if n == 0 {
            return Err(Failure::Config("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Runtime(e.to_string()))?;
    }
    let mut cfg = ExperimentConfig::load(&common.config)?;
    if let Some(out) = &common.out {
        cfg.output = Some(out.clone());
    }
    if let Some(Seeds(s)) = &common.seeds {
        cfg.seeds = s.clone();
    }
    if needs_output && cfg.output.is_none() {
        return Err(Failure::Config("no output path: pass --out or set \"output\"".into()));
    }
    Ok(cfg)
}

fn report_warnings(warnings: &[String]) {
    for w in warnings {
        eprintln!("warning: {w}");
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Emulate(c) => {
            let cfg = prepare(&c, true)?;
            let out = experiment::run_emulate_sweep(&cfg)?;
            report_warnings(&out.warnings);
            eprintln!(
                "{} runs, config {} -> {}",
                out.rows.len(),
                &out.config_hash[..12],
                cfg.output.unwrap().display()
            );
        }
        Command::Train(c) => {
            let cfg = prepare(&c, true)?.resolved(Mode::Train)?;
            let data = cfg.dataset.load().map_err(|e| match e {
                Error::Io(io) if io.kind() == ErrorKind::NotFound => {
                    Failure::Config(format!("dataset under {}: {io}", cfg.dataset.dir.display()))
                }
                other => other.into(),
            })?;
            let out = experiment::run_train_sweep_on(&cfg, &data)?;
            report_warnings(&out.warnings);
            eprintln!(
                "{} runs, config {} -> {}",
                out.rows.len(),
                &out.config_hash[..12],
                cfg.output.unwrap().display()
            );
        }
        Command::RankCheck(c) => {
            let cfg = prepare(&c, true)?;
            let report = experiment::run_rank_check(&cfg)?;
            eprintln!(
                "bound satisfied in {:.1}% of draws -> {}",
                100.0 * report.satisfaction_rate,
                cfg.output.unwrap().display()
            );
            if report.satisfaction_rate < 1.0 {
                return Err(Failure::Runtime("rank bound violated".into()));
            }
        }
        Command::DumpChannel(c) => {
            let cfg = prepare(&c, false)?;
            let dir = cfg.output.clone().unwrap_or_else(|| PathBuf::from("dump"));
            let m = experiment::dump_channel(&cfg, &dir)?;
            println!(
                "{}",
                serde_json::to_string_pretty(&m).map_err(|e| Failure::Runtime(e.to_string()))?
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("configuration error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
    }
}
