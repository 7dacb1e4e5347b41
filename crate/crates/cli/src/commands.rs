//! Implementations behind each subcommand.

use std::fs;
use std::path::{Path, PathBuf};

use gameclr::data::{DataMode, GenSpec};
use gameclr::dataio::{generate_dataset, read_dataset, write_dataset};
use gameclr::nn::{init_params, load_checkpoint, save_checkpoint, Architecture, ModelParams};
use gameclr::probe::{render_report, run_probe, ProbeDataset, ProbeModel, ProbeReport};
use gameclr::rng::derive_seed;
use gameclr::training::{read_train_log, train_with_progress, write_train_log, TrainLogRecord, TrainingData};
use gameclr::{Error, Result};

use crate::config::ExperimentConfig;
use crate::experiment::{run_experiment, ExperimentOutcome};
use crate::plot::render_svg;

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    }
}

/// Start from defaults, apply an optional config file, then flag overrides.
pub fn resolve_config(file: Option<&Path>, overrides: &[(&str, String)]) -> Result<ExperimentConfig> {
    let mut cfg = match file {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    for (k, v) in overrides {
        cfg.set(k, v)?;
    }
    Ok(cfg)
}

pub fn gen(out: &Path, mode: DataMode, anchors: usize, seed: u64, kp: usize, kn: usize) -> Result<()> {
    let bundle = generate_dataset(&GenSpec { mode, seed, kp, kn }, anchors)?;
    write_dataset(&bundle, out)
}

pub fn train(
    data: &Path,
    cfg: &ExperimentConfig,
    out: &Path,
    log: &Path,
    progress: &mut dyn FnMut(&TrainLogRecord),
) -> Result<()> {
    let tc = cfg.train_config(&cfg.method);
    tc.validate()?;
    let bundle = read_dataset(data)?;
    let training = TrainingData::from_bundle(&bundle, cfg.frozen_data)?;
    let outcome = train_with_progress(&tc, &training, |r| progress(r))?;
    save_checkpoint(&outcome.params, out)?;
    write_train_log(&outcome.log, log)
}

/// Untrained baseline written from a seed, identical to what `probe` and
/// `experiment` draw for run 0.
pub fn init(out: &Path, seed: u64) -> Result<()> {
    let p: ModelParams<f32> = init_params(Architecture::default(), derive_seed(seed, &[0]));
    save_checkpoint(&p, out)
}

pub struct ProbeArgs<'a> {
    /// Either `[untrained, simclr, gameclr]` or `[simclr, gameclr]`.
    pub models: &'a [PathBuf],
    pub data: &'a Path,
    pub out: &'a Path,
    pub untrained_seed: u64,
}

pub fn probe(args: &ProbeArgs<'_>, cfg: &ExperimentConfig) -> Result<ProbeReport> {
    let (untrained_path, trained) = match args.models {
        [u, s, g] => (Some(u), [s, g]),
        [s, g] => (None, [s, g]),
        _ => {
            return Err(Error::Config(format!(
                "--models takes 2 or 3 checkpoints, got {}",
                args.models.len()
            )))
        }
    };
    let untrained_params = untrained_path.map(|p| load_checkpoint(p)).transpose()?;
    let simclr = load_checkpoint(trained[0])?;
    let gameclr = load_checkpoint(trained[1])?;
    let bundle = read_dataset(args.data)?;
    let mode = bundle.mode()?;
    if mode != DataMode::Probe {
        return Err(Error::DatasetMethodMismatch {
            dataset: mode.as_str().into(),
            method: "probe".into(),
            expected: DataMode::Probe.as_str().into(),
        });
    }
    let data = ProbeDataset::new(bundle.images, bundle.labels)?;
    let untrained = match &untrained_params {
        Some(p) => ProbeModel::Fixed(p),
        None => ProbeModel::Seeded(args.untrained_seed),
    };
    let models = [
        ("untrained", untrained),
        ("simclr", ProbeModel::Fixed(&simclr)),
        ("gameclr", ProbeModel::Fixed(&gameclr)),
    ];
    let report = run_probe(&models, &data, &cfg.probe_config())?;
    render_report(&report, args.out)?;
    Ok(report)
}

pub fn plot(logs: &[PathBuf], out: &Path) -> Result<()> {
    let mut loaded: Vec<(String, Vec<TrainLogRecord>)> = Vec::new();
    for p in logs {
        let label = p.file_stem().and_then(|s| s.to_str()).unwrap_or("log").to_string();
        loaded.push((label, read_train_log(p)?));
    }
    let refs: Vec<(&str, &[TrainLogRecord])> = loaded.iter().map(|(l, r)| (l.as_str(), r.as_slice())).collect();
    fs::write(out, render_svg(&refs)).map_err(io(out))
}

pub fn experiment(cfg: &ExperimentConfig, out: &Path, progress: &mut dyn FnMut(&str)) -> Result<ExperimentOutcome> {
    run_experiment(cfg, out, progress)
}
