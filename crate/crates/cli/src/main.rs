use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use semfi_core::data::Stage;
use semfi_core::harness::{
    cmd_ablate, cmd_bench, cmd_data, cmd_report, cmd_sample, cmd_train, BenchSource, ExperimentConfig, SampleArgs,
};
use semfi_core::SemfiError;

#[derive(Parser)]
#[command(name = "semfi", version, about = "Text-guided in-betweening for arbitrary frame counts")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum StageArg {
    Synth,
    Filter,
    Score,
    Cut,
    Annotate,
}

impl From<StageArg> for Stage {
    fn from(s: StageArg) -> Self {
        match s {
            StageArg::Synth => Stage::Synth,
            StageArg::Filter => Stage::Filter,
            StageArg::Score => Stage::Score,
            StageArg::Cut => Stage::Cut,
            StageArg::Annotate => Stage::Annotate,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Write a default experiment config.
    Config {
        #[arg(long)]
        out: PathBuf,
        /// Small dimensions and short schedules for smoke runs.
        #[arg(long)]
        tiny: bool,
    },
    /// Build the synthetic clip dataset.
    Data {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Run a single stage; earlier stages' outputs must exist.
        #[arg(long, value_enum)]
        stage: Option<StageArg>,
    },
    /// Train a model on a curated manifest.
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate frames between two images.
    Sample {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        first: PathBuf,
        #[arg(long)]
        last: PathBuf,
        #[arg(long, default_value = "")]
        text: String,
        #[arg(long)]
        frames: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 20)]
        steps: usize,
        /// Leave the endpoints to the model instead of imposing them.
        #[arg(long)]
        no_clamp: bool,
        #[arg(long, default_value_t = 24)]
        fps: u32,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a checkpoint, or a directory of generated clips, on the test split.
    Bench {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, conflicts_with = "clips")]
        ckpt: Option<PathBuf>,
        /// Directory of `{clip_id}.clip` files.
        #[arg(long)]
        clips: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train and score the single-scale, single-adapter, and full variants.
    Ablate {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Existing dataset; built under `<out>/data` when omitted.
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Re-render a saved `report.json`.
    Report {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        charts: bool,
    },
}

fn load_config(path: Option<&Path>) -> Result<ExperimentConfig> {
    match path {
        Some(p) => Ok(ExperimentConfig::load(p)?),
        None => Ok(ExperimentConfig::default()),
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Config { out, tiny } => {
            let cfg = if tiny { ExperimentConfig::tiny() } else { ExperimentConfig::default() };
            cfg.save(&out)?;
            println!("wrote {}", out.display());
        }
        Command::Data { config, out, stage } => {
            let cfg = load_config(config.as_deref())?;
            for s in cmd_data(&cfg, stage.map(Stage::from), &out)? {
                println!("{:?}: {} in, {} out", s.stage, s.inputs, s.outputs);
            }
        }
        Command::Train { config, data, out } => {
            let cfg = load_config(config.as_deref())?;
            let done = cmd_train(&cfg, &data, &out)?;
            let last = done.losses.last().map_or(f64::NAN, |l| l.loss);
            println!("{} steps, last loss {last:.4}, checkpoint {}", done.losses.len(), done.checkpoint.display());
        }
        Command::Sample {
            ckpt,
            first,
            last,
            text,
            frames,
            seed,
            steps,
            no_clamp,
            fps,
            out,
        } => {
            let expert = cmd_sample(&SampleArgs {
                checkpoint: ckpt,
                first,
                last,
                text,
                frames,
                steps,
                seed,
                clamp_endpoints: !no_clamp,
                fps,
                out: out.clone(),
            })?;
            match expert {
                Some(s) => println!("wrote {} ({frames} frames, expert {s})", out.display()),
                None => println!("wrote {} ({frames} frames)", out.display()),
            }
        }
        Command::Bench {
            config,
            data,
            ckpt,
            clips,
            out,
        } => {
            let cfg = load_config(config.as_deref())?;
            let source = match (ckpt, clips) {
                (Some(c), None) => BenchSource::Checkpoint(c),
                (None, Some(d)) => BenchSource::ClipDir(d),
                _ => bail!("pass exactly one of --ckpt or --clips"),
            };
            let report = cmd_bench(&cfg, &source, &data, &out)?;
            print!("{}", report.to_markdown());
        }
        Command::Ablate { config, data, out } => {
            let cfg = load_config(config.as_deref())?;
            let rows = cmd_ablate(&cfg, data.as_deref(), &out)?;
            print!("{}", semfi_core::harness::ablate::ablation_markdown(&rows));
        }
        Command::Report { input, out, charts } => {
            let report = cmd_report(&input, &out, charts).with_context(|| format!("rendering {}", input.display()))?;
            print!("{}", report.to_markdown());
        }
    }
    Ok(())
}

/// 2 for configuration problems, 3 for data problems, 1 otherwise.
fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<SemfiError>() {
        Some(e) if e.is_config() => 2,
        Some(e) if e.is_data() => 3,
        _ => 1,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
