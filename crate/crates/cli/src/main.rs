use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use gameclr::data::DataMode;
use gameclr::Error;
use gameclr_cli::commands::{self, ProbeArgs};
use gameclr_cli::config::ExperimentConfig;
use gameclr_cli::{exit_code, EXIT_USAGE};

/// Help text carrying the built-in default of a config key.
fn dflt(key: &str, text: &str) -> String {
    let cfg = ExperimentConfig::default().to_text();
    let value = cfg
        .lines()
        .find_map(|l| l.strip_prefix(key).and_then(|r| r.strip_prefix(" = ")))
        .unwrap_or("?");
    format!("{text} [default: {value}]")
}

#[derive(Parser)]
#[command(name = "gameclr", version, about = "Contrastive learning on procedural driving scenes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a dataset directory.
    Gen {
        #[arg(long)]
        out: PathBuf,
        /// simclr, gameclr or probe
        #[arg(long)]
        mode: DataMode,
        #[arg(long, default_value_t = 2000)]
        anchors: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Synthetic positives per anchor (gameclr mode).
        #[arg(long, default_value_t = 2)]
        kp: usize,
        /// Synthetic negatives per anchor (gameclr mode).
        #[arg(long, default_value_t = 2)]
        kn: usize,
    },
    /// Train an encoder and write a checkpoint plus per-epoch log.
    Train {
        #[arg(long)]
        data: PathBuf,
        /// Checkpoint output path.
        #[arg(long)]
        out: PathBuf,
        /// Training-log CSV output path.
        #[arg(long)]
        log: PathBuf,
        #[command(flatten)]
        config: ConfigFlags,
    },
    /// Write an untrained checkpoint drawn from a seed.
    Init {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Linear-probe checkpoints on a probe dataset.
    Probe {
        /// `untrained simclr gameclr`, or `simclr gameclr` to draw a fresh
        /// untrained model per run from --untrained-seed.
        #[arg(long, num_args = 2..=3, required = true)]
        models: Vec<PathBuf>,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 5)]
        runs: usize,
        /// Long-form CSV path; summary CSV and text table are written beside it.
        #[arg(long)]
        out: PathBuf,
        /// Ridge penalty.
        #[arg(long, default_value_t = 1.0)]
        lambda: f64,
        /// Seed of the per-run train/test splits.
        #[arg(long, default_value_t = 7)]
        split_seed: u64,
        #[arg(long, default_value_t = 1)]
        untrained_seed: u64,
        /// Probe the projector output instead of the representation.
        #[arg(long)]
        embedding: bool,
    },
    /// Plot cosine-similarity curves from one or more training logs.
    Plot {
        #[arg(long, required = true)]
        log: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run gen → train → probe → plot and write a hashed manifest.
    Experiment {
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        config: ConfigFlags,
    },
}

/// Config keys as flags; each overrides the `--config` file.
#[derive(Args)]
struct ConfigFlags {
    /// key = value file; flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, help = dflt("seed", "Master seed"))]
    seed: Option<String>,
    #[arg(long, help = dflt("method", "Method for `train`: simclr or gameclr"))]
    method: Option<String>,
    #[arg(long, help = dflt("epochs", "Training epochs"))]
    epochs: Option<String>,
    #[arg(long, help = dflt("anchors_per_epoch", "Anchors per epoch"))]
    anchors_per_epoch: Option<String>,
    #[arg(long, help = dflt("lr", "Adam learning rate"))]
    lr: Option<String>,
    #[arg(long, help = dflt("batch_size", "Anchors per batch"))]
    batch_size: Option<String>,
    #[arg(long, help = dflt("temperature", "Softmax temperature"))]
    temperature: Option<String>,
    #[arg(long, help = dflt("kp", "Synthetic positives per anchor"))]
    kp: Option<String>,
    #[arg(long, help = dflt("kn", "Synthetic negatives per anchor"))]
    kn: Option<String>,
    #[arg(long, help = dflt("p_flip", "Horizontal flip probability"))]
    p_flip: Option<String>,
    #[arg(long, help = dflt("brightness_delta_max", "Max brightness shift"))]
    brightness_delta_max: Option<String>,
    #[arg(long, help = dflt("noise_sigma", "Gaussian noise std"))]
    noise_sigma: Option<String>,
    #[arg(long, help = dflt("max_rotate", "Max rotation in radians"))]
    max_rotate: Option<String>,
    #[arg(long, help = dflt("crop_scale_min", "Min crop scale"))]
    crop_scale_min: Option<String>,
    #[arg(long, help = dflt("frozen_data", "Reuse the stored dataset every epoch"))]
    frozen_data: bool,
    #[arg(long, help = dflt("record_timing", "Write wall-clock seconds into logs"))]
    record_timing: bool,
    #[arg(long, help = dflt("train_anchors", "Anchors per generated training dataset"))]
    train_anchors: Option<String>,
    #[arg(long, help = dflt("probe_anchors", "Anchors in the probe dataset"))]
    probe_anchors: Option<String>,
    #[arg(long, help = dflt("probe_runs", "Probe runs"))]
    probe_runs: Option<String>,
    #[arg(long, help = dflt("probe_lambda", "Ridge penalty"))]
    probe_lambda: Option<String>,
    #[arg(long, help = dflt("probe_seed", "Seed of the probe splits"))]
    probe_seed: Option<String>,
    #[arg(long, help = dflt("probe_embedding", "Probe the projector output"))]
    probe_embedding: bool,
    #[arg(long, help = dflt("untrained_seed", "Seed of the untrained baseline"))]
    untrained_seed: Option<String>,
    #[arg(long, help = dflt("retrain_runs", "Retrain encoders for every probe run"))]
    retrain_runs: bool,
}

impl ConfigFlags {
    fn resolve(&self) -> gameclr::Result<ExperimentConfig> {
        let values = [
            ("seed", &self.seed),
            ("method", &self.method),
            ("epochs", &self.epochs),
            ("anchors_per_epoch", &self.anchors_per_epoch),
            ("lr", &self.lr),
            ("batch_size", &self.batch_size),
            ("temperature", &self.temperature),
            ("kp", &self.kp),
            ("kn", &self.kn),
            ("p_flip", &self.p_flip),
            ("brightness_delta_max", &self.brightness_delta_max),
            ("noise_sigma", &self.noise_sigma),
            ("max_rotate", &self.max_rotate),
            ("crop_scale_min", &self.crop_scale_min),
            ("train_anchors", &self.train_anchors),
            ("probe_anchors", &self.probe_anchors),
            ("probe_runs", &self.probe_runs),
            ("probe_lambda", &self.probe_lambda),
            ("probe_seed", &self.probe_seed),
            ("untrained_seed", &self.untrained_seed),
        ];
        let mut overrides: Vec<(&str, String)> =
            values.iter().filter_map(|(k, v)| v.as_ref().map(|v| (*k, v.clone()))).collect();
        for (k, on) in [
            ("frozen_data", self.frozen_data),
            ("record_timing", self.record_timing),
            ("probe_embedding", self.probe_embedding),
            ("retrain_runs", self.retrain_runs),
        ] {
            if on {
                overrides.push((k, "true".into()));
            }
        }
        commands::resolve_config(self.config.as_deref(), &overrides)
    }
}

fn fail(e: &Error, code: i32) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(code as u8)
}

fn run(cli: Cli) -> Result<(), (Error, i32)> {
    let code = |e: Error| {
        let c = exit_code(&e);
        (e, c)
    };
    match cli.command {
        Command::Gen {
            out,
            mode,
            anchors,
            seed,
            kp,
            kn,
        } => commands::gen(&out, mode, anchors, seed, kp, kn).map_err(code),
        Command::Train { data, out, log, config } => {
            let cfg = config.resolve().map_err(|e| (e, EXIT_USAGE))?;
            commands::train(&data, &cfg, &out, &log, &mut |r| {
                eprintln!(
                    "epoch {} loss {:.4} cos_pos {:.4} cos_neg_reg {:.4}{}",
                    r.epoch,
                    r.loss,
                    r.cos_pos,
                    r.cos_neg_reg,
                    r.cos_neg_syn.map(|c| format!(" cos_neg_syn {c:.4}")).unwrap_or_default()
                )
            })
            .map_err(code)
        }
        Command::Init { out, seed } => commands::init(&out, seed).map_err(code),
        Command::Probe {
            models,
            data,
            runs,
            out,
            lambda,
            split_seed,
            untrained_seed,
            embedding,
        } => {
            let mut cfg = ExperimentConfig::default();
            cfg.probe_runs = runs;
            cfg.probe_lambda = lambda;
            cfg.probe_seed = split_seed;
            cfg.probe_embedding = embedding;
            if runs == 1 {
                eprintln!("warning: --runs 1 gives no confidence interval; ci95 is written as 0");
            }
            let args = ProbeArgs {
                models: &models,
                data: &data,
                out: &out,
                untrained_seed,
            };
            let report = commands::probe(&args, &cfg).map_err(code)?;
            print!("{}", gameclr::probe::format_table(&report));
            Ok(())
        }
        Command::Plot { log, out } => commands::plot(&log, &out).map_err(|e| {
            let c = if matches!(e, Error::Io { .. }) { exit_code(&e) } else { EXIT_USAGE };
            (e, c)
        }),
        Command::Experiment { out, config } => {
            let cfg = config.resolve().map_err(|e| (e, EXIT_USAGE))?;
            cfg.validate().map_err(|e| (e, EXIT_USAGE))?;
            let outcome = commands::experiment(&cfg, &out, &mut |m| eprintln!("{m}")).map_err(code)?;
            print!("{}", gameclr::probe::format_table(&outcome.report));
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    if let Ok(v) = std::env::var("GCLR_THREADS") {
        match v.parse::<usize>() {
            Ok(n) if n > 0 => {
                // only fails if a pool already exists
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
            _ => {
                eprintln!("error: GCLR_THREADS must be a positive integer, got `{v}`");
                return ExitCode::from(EXIT_USAGE as u8);
            }
        }
    }
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err((e, c)) => fail(&e, c),
    }
}
