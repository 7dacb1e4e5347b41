//! End-to-end driver: generate → train both methods → probe → plot, with a
//! content-hash manifest of everything written.

use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use gameclr::data::{DataMode, GenSpec};
use gameclr::dataio::{generate_dataset, write_dataset, DatasetBundle};
use gameclr::nn::{init_params, save_checkpoint, Architecture, ModelParams};
use gameclr::probe::{probe_run, render_report, run_probe, summarize, ProbeDataset, ProbeModel, ProbeReport};
use gameclr::rng::derive_seed;
use gameclr::training::{train_with_progress, write_train_log, TrainLogRecord, TrainingData};
use gameclr::{Error, Result};

use crate::config::ExperimentConfig;
use crate::plot::render_svg;

pub const MANIFEST: &str = "manifest.txt";
const TAG_PROBE_DATA: u64 = 0x50;
const TAG_RETRAIN: u64 = 0x51;

pub struct ExperimentOutcome {
    pub report: ProbeReport,
    pub simclr_log: Vec<TrainLogRecord>,
    pub gameclr_log: Vec<TrainLogRecord>,
    /// `(relative path, sha256 hex)` sorted by path.
    pub manifest: Vec<(String, String)>,
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    }
}

fn create_dir(p: &Path) -> Result<()> {
    fs::create_dir_all(p).map_err(io(p))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn collect_files(root: &Path, dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    let mut entries: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(io(dir))?
        .map(|e| e.map(|e| e.path()).map_err(io(dir)))
        .collect::<Result<_>>()?;
    entries.sort();
    for p in entries {
        if p.is_dir() {
            collect_files(root, &p, out)?;
        } else if p.strip_prefix(root).map_or(true, |r| r != Path::new(MANIFEST)) {
            out.push(p);
        }
    }
    Ok(())
}

/// Hash every file under `root` except the manifest itself.
pub fn build_manifest(root: &Path) -> Result<Vec<(String, String)>> {
    let mut files = Vec::new();
    collect_files(root, root, &mut files)?;
    let mut rows = files
        .iter()
        .map(|p| {
            let bytes = fs::read(p).map_err(io(p))?;
            let rel = p.strip_prefix(root).expect("under root");
            let rel = rel.components().map(|c| c.as_os_str().to_string_lossy()).collect::<Vec<_>>().join("/");
            Ok((rel, sha256_hex(&bytes)))
        })
        .collect::<Result<Vec<_>>>()?;
    rows.sort();
    Ok(rows)
}

pub fn format_manifest(rows: &[(String, String)]) -> String {
    rows.iter().map(|(p, h)| format!("{h}  {p}\n")).collect()
}

fn train_method(
    cfg: &ExperimentConfig,
    bundle: &DatasetBundle,
    method: &str,
    seed: u64,
    progress: &mut dyn FnMut(&str),
) -> Result<(ModelParams<f32>, Vec<TrainLogRecord>)> {
    let mut tc = cfg.train_config(method);
    tc.seed = seed;
    let data = TrainingData::from_bundle(bundle, cfg.frozen_data)?;
    let out = train_with_progress(&tc, &data, |r| {
        progress(&format!(
            "train {method} seed {seed}: epoch {} loss {:.4} cos_pos {:.3} cos_neg_reg {:.3}{}",
            r.epoch,
            r.loss,
            r.cos_pos,
            r.cos_neg_reg,
            r.cos_neg_syn.map(|c| format!(" cos_neg_syn {c:.3}")).unwrap_or_default()
        ))
    })?;
    Ok((out.params, out.log))
}

/// Run the whole pipeline into `out`.
pub fn run_experiment(cfg: &ExperimentConfig, out: &Path, progress: &mut dyn FnMut(&str)) -> Result<ExperimentOutcome> {
    cfg.validate()?;
    let (data_dir, model_dir, log_dir, report_dir) =
        (out.join("data"), out.join("models"), out.join("logs"), out.join("report"));
    for d in [out, &data_dir, &model_dir, &log_dir, &report_dir] {
        create_dir(d)?;
    }
    let config_path = out.join("config.txt");
    fs::write(&config_path, cfg.to_text()).map_err(io(&config_path))?;

    let spec = |mode, seed| GenSpec {
        mode,
        seed,
        kp: cfg.kp,
        kn: cfg.kn,
    };
    let mut bundles = Vec::new();
    for (mode, seed, anchors) in [
        (DataMode::SimClr, cfg.seed, cfg.train_anchors),
        (DataMode::GameClr, cfg.seed, cfg.train_anchors),
        (DataMode::Probe, derive_seed(cfg.seed, &[TAG_PROBE_DATA]), cfg.probe_anchors),
    ] {
        progress(&format!("gen {mode}: {anchors} anchors"));
        let bundle = generate_dataset(&spec(mode, seed), anchors)?;
        write_dataset(&bundle, &data_dir.join(mode.as_str()))?;
        bundles.push(bundle);
    }
    let probe_bundle = bundles.pop().expect("three bundles");
    let gameclr_bundle = bundles.pop().expect("three bundles");
    let simclr_bundle = bundles.pop().expect("three bundles");

    let (simclr, simclr_log) = train_method(cfg, &simclr_bundle, "simclr", cfg.seed, progress)?;
    let (gameclr, gameclr_log) = train_method(cfg, &gameclr_bundle, "gameclr", cfg.seed, progress)?;
    save_checkpoint(&simclr, &model_dir.join("simclr.bin"))?;
    save_checkpoint(&gameclr, &model_dir.join("gameclr.bin"))?;
    write_train_log(&simclr_log, &log_dir.join("simclr.csv"))?;
    write_train_log(&gameclr_log, &log_dir.join("gameclr.csv"))?;
    let untrained: ModelParams<f32> = init_params(Architecture::default(), derive_seed(cfg.untrained_seed, &[0]));
    save_checkpoint(&untrained, &model_dir.join("untrained.bin"))?;

    progress("probe");
    let probe_data = ProbeDataset::new(probe_bundle.images, probe_bundle.labels)?;
    let pc = cfg.probe_config();
    let report = if cfg.retrain_runs {
        let mut runs = Vec::new();
        for run in 0..cfg.probe_runs {
            let (s, g) = if run == 0 {
                (simclr.clone(), gameclr.clone())
            } else {
                let seed = derive_seed(cfg.seed, &[TAG_RETRAIN, run as u64]);
                let (s, _) = train_method(cfg, &simclr_bundle, "simclr", seed, progress)?;
                let (g, _) = train_method(cfg, &gameclr_bundle, "gameclr", seed, progress)?;
                save_checkpoint(&s, &model_dir.join(format!("simclr_run{run}.bin")))?;
                save_checkpoint(&g, &model_dir.join(format!("gameclr_run{run}.bin")))?;
                (s, g)
            };
            let models = [
                ("untrained", ProbeModel::Seeded(cfg.untrained_seed)),
                ("simclr", ProbeModel::Fixed(&s)),
                ("gameclr", ProbeModel::Fixed(&g)),
            ];
            runs.extend(probe_run(&models, &probe_data, &pc, run)?);
        }
        ProbeReport {
            summary: summarize(&runs),
            runs,
        }
    } else {
        let models = [
            ("untrained", ProbeModel::Seeded(cfg.untrained_seed)),
            ("simclr", ProbeModel::Fixed(&simclr)),
            ("gameclr", ProbeModel::Fixed(&gameclr)),
        ];
        run_probe(&models, &probe_data, &pc)?
    };
    render_report(&report, &report_dir.join("report.csv"))?;

    progress("plot");
    let svg_path = out.join("curves.svg");
    let svg = render_svg(&[("gameclr", &gameclr_log), ("simclr", &simclr_log)]);
    fs::write(&svg_path, svg).map_err(io(&svg_path))?;

    let manifest = build_manifest(out)?;
    let manifest_path = out.join(MANIFEST);
    fs::write(&manifest_path, format_manifest(&manifest)).map_err(io(&manifest_path))?;
    Ok(ExperimentOutcome {
        report,
        simclr_log,
        gameclr_log,
        manifest,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sha256_known_value() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn manifest_skips_itself_and_sorts() {
        let dir = tempfile::tempdir().unwrap();
        fs::create_dir(dir.path().join("b")).unwrap();
        fs::write(dir.path().join("b/x.txt"), "x").unwrap();
        fs::write(dir.path().join("a.txt"), "a").unwrap();
        fs::write(dir.path().join(MANIFEST), "old").unwrap();
        let m = build_manifest(dir.path()).unwrap();
        let paths: Vec<&str> = m.iter().map(|(p, _)| p.as_str()).collect();
        assert_eq!(paths, ["a.txt", "b/x.txt"]);
    }
}
