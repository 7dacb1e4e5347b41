//! Epoch loop shared by every contrastive method, with per-epoch cosine
//! diagnostics of anchors against positives, regular negatives and
//! synthetic negatives.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;

use crate::augment::AugmentPolicy;
use crate::contrastive::{method, ContrastiveBatch, LossConfig};
use crate::data::{scene_group, AnchorGroup, DataMode, GenSpec, SceneGroup};
use crate::dataio::DatasetBundle;
use crate::error::{Error, Result};
use crate::nn::{adam_step, backward, forward, init_params, AdamConfig, AdamState, Architecture, ModelParams};
use crate::rng::{derive_seed, Xoshiro256};

const TAG_INIT: u64 = 0x1;
const TAG_AUG: u64 = 0x2;
const TAG_SHUFFLE: u64 = 0x3;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    /// Registered method name.
    pub method: String,
    pub epochs: usize,
    pub anchors_per_epoch: usize,
    pub lr: f64,
    pub loss: LossConfig,
    pub policy: AugmentPolicy,
    pub seed: u64,
    /// Train on the stored dataset every epoch instead of fresh scenes.
    pub frozen_data: bool,
    /// Write wall-clock seconds into the log. Off keeps logs byte-identical
    /// across runs.
    pub record_timing: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            method: "gameclr".into(),
            epochs: 20,
            anchors_per_epoch: 2000,
            lr: 1e-3,
            loss: LossConfig::default(),
            policy: AugmentPolicy::default(),
            seed: 42,
            frozen_data: false,
            record_timing: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        method(&self.method)?.validate(&self.loss)?;
        self.policy.validate()?;
        if self.anchors_per_epoch < self.loss.batch_size {
            return Err(Error::Config(format!(
                "anchors_per_epoch ({}) must be >= batch_size ({})",
                self.anchors_per_epoch, self.loss.batch_size
            )));
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("lr must be finite and >= 0, got {}", self.lr)));
        }
        Ok(())
    }
}

/// Where anchor groups come from.
#[derive(Debug, Clone)]
pub struct TrainingData {
    pub spec: GenSpec,
    /// Stored groups used every epoch when training on frozen data.
    pub frozen: Option<Vec<AnchorGroup>>,
}

impl TrainingData {
    pub fn procedural(spec: GenSpec) -> Self {
        Self { spec, frozen: None }
    }

    pub fn from_bundle(bundle: &DatasetBundle, frozen: bool) -> Result<Self> {
        Ok(Self {
            spec: bundle.gen_spec()?,
            frozen: if frozen { Some(bundle.anchor_groups()?) } else { None },
        })
    }

    pub fn mode(&self) -> DataMode {
        self.spec.mode
    }
}

/// One row of the training log.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainLogRecord {
    /// 1-based.
    pub epoch: usize,
    pub loss: f32,
    pub cos_pos: f32,
    pub cos_neg_reg: f32,
    pub cos_neg_syn: Option<f32>,
    pub seconds: f32,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: ModelParams<f32>,
    pub log: Vec<TrainLogRecord>,
    /// Embeddings that took the degenerate-norm fallback.
    pub degenerate_embeddings: usize,
}

/// `uᵀv / (‖u‖‖v‖)`.
pub fn cosine_similarity(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::ShapeMismatch(format!("lengths {} and {}", u.len(), v.len())));
    }
    let nu = u.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nv = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if nu == 0.0 || nv == 0.0 {
        return Err(Error::ZeroVector);
    }
    let d: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    Ok((d / (nu * nv)).clamp(-1.0, 1.0))
}

pub fn initial_params(cfg: &TrainConfig) -> ModelParams<f32> {
    init_params(Architecture::default(), derive_seed(cfg.seed, &[TAG_INIT]))
}

pub fn train(cfg: &TrainConfig, data: &TrainingData) -> Result<TrainOutcome> {
    train_with_progress(cfg, data, |_| {})
}

/// Run the epoch loop, calling `progress` after each epoch.
pub fn train_with_progress(
    cfg: &TrainConfig,
    data: &TrainingData,
    mut progress: impl FnMut(&TrainLogRecord),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let m = method(&cfg.method)?;
    if data.mode() != m.data_mode() {
        return Err(Error::DatasetMethodMismatch {
            dataset: data.mode().as_str().into(),
            method: m.name().into(),
            expected: m.data_mode().as_str().into(),
        });
    }
    let b = cfg.loss.batch_size;
    let mut spec = data.spec.clone();
    spec.kp = spec.kp.max(cfg.loss.kp);
    spec.kn = spec.kn.max(cfg.loss.kn);
    let steps = match &data.frozen {
        Some(groups) => groups.len() / b,
        None => cfg.anchors_per_epoch / b,
    };
    if cfg.epochs > 0 && steps == 0 {
        return Err(Error::Config(format!(
            "not enough anchors for one batch of {b}"
        )));
    }

    let mut params = initial_params(cfg);
    let mut adam = AdamState::new(params.len());
    let adam_cfg = AdamConfig::with_lr(cfg.lr);
    let embed_dim = params.arch().embed_dim;
    let mut log = Vec::with_capacity(cfg.epochs);
    let mut degenerate = 0;
    let started = Instant::now();

    for epoch in 0..cfg.epochs {
        let order: Vec<usize> = match &data.frozen {
            Some(groups) => {
                let mut idx: Vec<usize> = (0..groups.len()).collect();
                Xoshiro256::for_item(cfg.seed, &[TAG_SHUFFLE, epoch as u64]).shuffle(&mut idx);
                idx
            }
            None => (0..steps * b).collect(),
        };
        let (mut loss_sum, mut pos_sum, mut neg_sum, mut syn_sum, mut syn_n) = (0.0, 0.0, 0.0, 0.0, 0usize);
        for step in 0..steps {
            let global_step = epoch * steps + step;
            let idx = &order[step * b..(step + 1) * b];
            let groups: Vec<AnchorGroup> = match &data.frozen {
                Some(all) => idx.iter().map(|&i| all[i].clone()).collect(),
                None => idx
                    .par_iter()
                    .map(|&i| scene_group(&spec, epoch as u64, i as u64).map(|g: SceneGroup| g.render()))
                    .collect::<Result<Vec<_>>>()?,
            };
            let aug_seed = derive_seed(cfg.seed, &[TAG_AUG, epoch as u64, step as u64]);
            let views = m.build_views(&groups, &cfg.loss, &cfg.policy, aug_seed)?;
            let fwd = forward(&params, &views.images)?;
            degenerate += fwd.degenerate;
            let batch = ContrastiveBatch::new(views.layout, fwd.embeddings(embed_dim).cast::<f64>())?;
            let (loss, dz) = batch.loss_and_grad(cfg.loss.temperature)?;
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss { step: global_step });
            }
            let stats = batch.cosine_stats();
            loss_sum += loss;
            pos_sum += stats.pos;
            neg_sum += stats.neg_regular;
            if let Some(s) = stats.neg_synthetic {
                syn_sum += s;
                syn_n += 1;
            }
            let grads = backward(&params, &fwd, &dz.cast::<f32>())?;
            if !grads.is_finite() {
                return Err(Error::NonFiniteLoss { step: global_step });
            }
            adam_step(&mut params, &grads, &mut adam, &adam_cfg)?;
        }
        let n = steps as f64;
        let rec = TrainLogRecord {
            epoch: epoch + 1,
            loss: (loss_sum / n) as f32,
            cos_pos: (pos_sum / n) as f32,
            cos_neg_reg: (neg_sum / n) as f32,
            cos_neg_syn: (syn_n > 0).then(|| (syn_sum / syn_n as f64) as f32),
            seconds: if cfg.record_timing {
                started.elapsed().as_secs_f32()
            } else {
                0.0
            },
        };
        progress(&rec);
        log.push(rec);
    }
    Ok(TrainOutcome {
        params,
        log,
        degenerate_embeddings: degenerate,
    })
}

pub const LOG_HEADER: &str = "epoch,loss,cos_pos,cos_neg_reg,cos_neg_syn,seconds";

/// Format with 9 significant digits (exact for f32).
fn sig9(v: f32) -> String {
    if v == 0.0 || !v.is_finite() {
        return format!("{v}");
    }
    let mag = (v.abs() as f64).log10().floor() as i32;
    let decimals = (8 - mag).max(0) as usize;
    format!("{:.*}", decimals, v)
}

pub fn format_train_log(records: &[TrainLogRecord]) -> String {
    let mut s = String::from(LOG_HEADER);
    s.push('\n');
    for r in records {
        writeln!(
            s,
            "{},{},{},{},{},{}",
            r.epoch,
            sig9(r.loss),
            sig9(r.cos_pos),
            sig9(r.cos_neg_reg),
            r.cos_neg_syn.map(sig9).unwrap_or_default(),
            sig9(r.seconds)
        )
        .unwrap();
    }
    s
}

pub fn write_train_log(records: &[TrainLogRecord], path: &Path) -> Result<()> {
    fs::write(path, format_train_log(records)).map_err(|e| Error::io(path, e))
}

pub fn parse_train_log(text: &str, path: &Path) -> Result<Vec<TrainLogRecord>> {
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some(LOG_HEADER) {
        return Err(Error::parse(path, format!("expected header `{LOG_HEADER}`")));
    }
    let num = |s: &str| -> Result<f32> { s.parse().map_err(|_| Error::parse(path, format!("bad number `{s}`"))) };
    lines
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            let c: Vec<&str> = l.split(',').map(str::trim).collect();
            if c.len() != 6 {
                return Err(Error::parse(path, format!("expected 6 columns in `{l}`")));
            }
            Ok(TrainLogRecord {
                epoch: c[0].parse().map_err(|_| Error::parse(path, format!("bad epoch `{}`", c[0])))?,
                loss: num(c[1])?,
                cos_pos: num(c[2])?,
                cos_neg_reg: num(c[3])?,
                cos_neg_syn: if c[4].is_empty() { None } else { Some(num(c[4])?) },
                seconds: num(c[5])?,
            })
        })
        .collect()
}

pub fn read_train_log(path: &Path) -> Result<Vec<TrainLogRecord>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_train_log(&text, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(method: &str) -> (TrainConfig, TrainingData) {
        let cfg = TrainConfig {
            method: method.into(),
            epochs: 2,
            anchors_per_epoch: 8,
            loss: LossConfig {
                batch_size: 4,
                ..LossConfig::default()
            },
            ..TrainConfig::default()
        };
        let mode = method.parse::<DataMode>().unwrap();
        (cfg, TrainingData::procedural(GenSpec::new(mode, 7)))
    }

    #[test]
    fn cosine_examples() {
        assert!((cosine_similarity(&[1.0, 2.0], &[1.0, 2.0]).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(cosine_similarity(&[1.0, 0.0], &[0.0, 3.0]).unwrap(), 0.0);
        let c = cosine_similarity(&[1.0, 1.0], &[1.0, 0.0]).unwrap();
        assert!((c - 0.70711).abs() < 1e-5);
        assert!(matches!(cosine_similarity(&[0.0, 0.0], &[1.0, 0.0]), Err(Error::ZeroVector)));
    }

    #[test]
    fn zero_epochs_returns_initial_params() {
        let (mut cfg, data) = tiny("gameclr");
        cfg.epochs = 0;
        let out = train(&cfg, &data).unwrap();
        assert!(out.log.is_empty());
        assert_eq!(out.params, initial_params(&cfg));
    }

    #[test]
    fn zero_lr_keeps_params() {
        let (mut cfg, data) = tiny("simclr");
        cfg.lr = 0.0;
        let out = train(&cfg, &data).unwrap();
        assert_eq!(out.params, initial_params(&cfg));
        let d = (out.log[0].cos_pos - out.log[1].cos_pos).abs();
        assert!(d < 0.05, "{:?}", out.log);
    }

    #[test]
    fn training_is_deterministic() {
        let (cfg, data) = tiny("gameclr");
        let a = train(&cfg, &data).unwrap();
        let b = train(&cfg, &data).unwrap();
        assert_eq!(a.params, b.params);
        assert_eq!(format_train_log(&a.log), format_train_log(&b.log));
        assert!(a.log.iter().all(|r| r.cos_neg_syn.is_some()));
    }

    #[test]
    fn mismatched_data_is_rejected() {
        let (cfg, _) = tiny("gameclr");
        let data = TrainingData::procedural(GenSpec::new(DataMode::SimClr, 1));
        match train(&cfg, &data) {
            Err(Error::DatasetMethodMismatch { dataset, method, .. }) => {
                assert_eq!(dataset, "simclr");
                assert_eq!(method, "gameclr");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn log_round_trip() {
        let recs = vec![
            TrainLogRecord {
                epoch: 1,
                loss: 3.14159274,
                cos_pos: 0.912345678,
                cos_neg_reg: -0.00012345,
                cos_neg_syn: None,
                seconds: 0.0,
            },
            TrainLogRecord {
                epoch: 2,
                loss: 1234.5678,
                cos_pos: 1.0,
                cos_neg_reg: 0.5,
                cos_neg_syn: Some(0.25),
                seconds: 12.5,
            },
        ];
        let text = format_train_log(&recs);
        assert_eq!(parse_train_log(&text, Path::new("x")).unwrap(), recs);
        assert_eq!(format_train_log(&[]), format!("{LOG_HEADER}\n"));
    }

    #[test]
    fn simclr_log_has_no_synthetic_column() {
        let (cfg, data) = tiny("simclr");
        let out = train(&cfg, &data).unwrap();
        let text = format_train_log(&out.log);
        for line in text.lines().skip(1) {
            assert_eq!(line.split(',').nth(4), Some(""));
        }
    }
}
