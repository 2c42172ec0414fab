use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use zsosr::pipeline::{run_experiment, run_openness_sweep, run_suite, DatasetSource, Mode, RunConfig, Runner, Stage};
use zsosr::Result;

#[derive(Parser)]
#[command(name = "zsosr", version, about = "Zero-shot open-set recognition pipeline")]
struct Cli {
    /// JSON run configuration. Missing fields take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Start from the desk-scale preset instead of the full-size defaults.
    #[arg(long, global = true)]
    desk: bool,
    /// Dotted override such as `ase.beta=0.1`; repeatable, applied in order.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[arg(long, global = true)]
    outdir: Option<PathBuf>,
    /// Dataset manifest; replaces the synthetic world.
    #[arg(long, global = true)]
    manifest: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    mode: Option<ModeArg>,
    #[arg(long, global = true)]
    k_unseen: Option<usize>,
    #[arg(long, global = true)]
    k_unknown: Option<usize>,
    /// Manifest of the out-of-distribution dataset (ood mode).
    #[arg(long, global = true)]
    ood_manifest: Option<PathBuf>,
    /// Comma-separated master seeds.
    #[arg(long, global = true, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    /// Master seed of single-seed commands; defaults to the first of `seeds`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    ZsOsr,
    Generalized,
    Openness,
    Ood,
}

#[derive(Subcommand)]
enum Command {
    /// Write the synthetic world(s) as dataset bundles.
    SynthData,
    Split,
    TrainGen,
    TrainClosed,
    LearnAse,
    TrainOpen,
    Score,
    Baseline,
    Ablation,
    Eval,
    /// Every stage for every seed, then per-method aggregates.
    Suite,
    /// One suite per unknown-class count.
    OpennessSweep {
        #[arg(long, default_value_t = 10)]
        k_unseen: usize,
        #[arg(long, value_delimiter = ',', default_values_t = [10, 20, 30, 40])]
        k_unknown: Vec<usize>,
    },
    /// In-memory run of one seed; prints the outcome as JSON.
    Run,
    /// Print the effective configuration.
    Config,
}

fn build_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match (&cli.config, cli.desk) {
        (Some(p), _) => RunConfig::from_json_file(p)?,
        (None, true) => RunConfig::desk_scale(),
        (None, false) => RunConfig::default(),
    };
    cfg.apply_env();
    if let Some(p) = &cli.manifest {
        cfg.dataset = DatasetSource::Manifest { path: p.clone() };
    }
    if let Some(m) = cli.mode {
        cfg.mode = match m {
            ModeArg::ZsOsr => Mode::ZsOsr,
            ModeArg::Generalized => Mode::Generalized,
            ModeArg::Openness => Mode::Openness {
                k_unseen: cli.k_unseen.unwrap_or(10),
                k_unknown: cli.k_unknown.unwrap_or(10),
            },
            ModeArg::Ood => Mode::Ood {
                other: match &cli.ood_manifest {
                    Some(p) => DatasetSource::Manifest { path: p.clone() },
                    None => DatasetSource::default(),
                },
                n_unknown: cli.k_unknown.unwrap_or(5),
            },
        };
    }
    if let Some(s) = &cli.seeds {
        cfg.seeds = s.clone();
    }
    if let Some(o) = &cli.outdir {
        cfg.outdir = o.clone();
    }
    for o in &cli.overrides {
        cfg.set(o)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn stage_of(c: &Command) -> Option<Stage> {
    Some(match c {
        Command::SynthData => Stage::SynthData,
        Command::Split => Stage::Split,
        Command::TrainGen => Stage::TrainGen,
        Command::TrainClosed => Stage::TrainClosed,
        Command::LearnAse => Stage::LearnAse,
        Command::TrainOpen => Stage::TrainOpen,
        Command::Score => Stage::Score,
        Command::Baseline => Stage::Baseline,
        Command::Ablation => Stage::Ablation,
        Command::Eval => Stage::Eval,
        _ => return None,
    })
}

fn run(cli: &Cli) -> Result<serde_json::Value> {
    let cfg = build_config(cli)?;
    let seed = cli.seed.unwrap_or(cfg.seeds[0]);
    if let Some(stage) = stage_of(&cli.command) {
        let dir = Runner::new(&cfg, seed, &cfg.outdir)?.run(stage)?;
        return Ok(json!({ "stage": stage.as_str(), "seed": seed, "dir": dir }));
    }
    Ok(match &cli.command {
        Command::Suite => {
            let out = run_suite(&cfg)?;
            json!({ "suite": cfg.outdir.join("suite"), "aggregate": out.aggregate })
        }
        Command::OpennessSweep { k_unseen, k_unknown } => {
            let k_unseen = cli.k_unseen.unwrap_or(*k_unseen);
            let rows = run_openness_sweep(&cfg, k_unseen, k_unknown)?;
            json!({ "rows": rows })
        }
        Command::Run => serde_json::to_value(run_experiment(&cfg, seed)?)?,
        Command::Config => serde_json::to_value(&cfg)?,
        _ => unreachable!("stage commands return above"),
    })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(v) => {
            println!("{}", serde_json::to_string_pretty(&v).unwrap_or_default());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", json!({ "error": e.kind(), "message": e.to_string() }));
            ExitCode::FAILURE
        }
    }
}
