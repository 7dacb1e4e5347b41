//! Flat `key = value` experiment configuration.

use std::fmt::Write as _;
use std::path::Path;

use gameclr::augment::AugmentPolicy;
use gameclr::contrastive::LossConfig;
use gameclr::probe::ProbeConfig;
use gameclr::training::TrainConfig;
use gameclr::{Error, Result};

/// Every tunable of the pipeline. Field names double as config keys.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub method: String,
    pub epochs: usize,
    pub anchors_per_epoch: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub temperature: f64,
    pub kp: usize,
    pub kn: usize,
    pub p_flip: f64,
    pub brightness_delta_max: f64,
    pub noise_sigma: f64,
    pub max_rotate: f64,
    pub crop_scale_min: f64,
    pub frozen_data: bool,
    pub record_timing: bool,
    /// Anchors stored in each generated training dataset.
    pub train_anchors: usize,
    pub probe_anchors: usize,
    pub probe_runs: usize,
    pub probe_lambda: f64,
    pub probe_seed: u64,
    pub probe_embedding: bool,
    pub untrained_seed: u64,
    /// Retrain both encoders for every probe run instead of probing one pair.
    pub retrain_runs: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let t = TrainConfig::default();
        let p = ProbeConfig::default();
        Self {
            seed: t.seed,
            method: t.method,
            epochs: t.epochs,
            anchors_per_epoch: t.anchors_per_epoch,
            lr: t.lr,
            batch_size: t.loss.batch_size,
            temperature: t.loss.temperature,
            kp: t.loss.kp,
            kn: t.loss.kn,
            p_flip: t.policy.p_flip,
            brightness_delta_max: t.policy.brightness_delta_max,
            noise_sigma: t.policy.noise_sigma,
            max_rotate: t.policy.max_rotate,
            crop_scale_min: t.policy.crop_scale_min,
            frozen_data: t.frozen_data,
            record_timing: t.record_timing,
            train_anchors: 2000,
            probe_anchors: 4000,
            probe_runs: p.runs,
            probe_lambda: p.lambda,
            probe_seed: p.seed,
            probe_embedding: p.use_embedding,
            untrained_seed: 1,
            retrain_runs: false,
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("invalid value `{value}` for `{key}`")))
}

macro_rules! config_keys {
    ($($field:ident),* $(,)?) => {
        impl ExperimentConfig {
            pub const KEYS: &'static [&'static str] = &[$(stringify!($field)),*];

            /// Set one key from its textual value.
            pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
                match key {
                    $(stringify!($field) => self.$field = parse(key, value)?,)*
                    _ => return Err(Error::Config(format!("unknown config key `{key}`"))),
                }
                Ok(())
            }

            /// Canonical text form; parses back to an equal config.
            pub fn to_text(&self) -> String {
                let mut s = String::new();
                $(writeln!(s, "{} = {}", stringify!($field), self.$field).unwrap();)*
                s
            }
        }
    };
}

config_keys!(
    seed,
    method,
    epochs,
    anchors_per_epoch,
    lr,
    batch_size,
    temperature,
    kp,
    kn,
    p_flip,
    brightness_delta_max,
    noise_sigma,
    max_rotate,
    crop_scale_min,
    frozen_data,
    record_timing,
    train_anchors,
    probe_anchors,
    probe_runs,
    probe_lambda,
    probe_seed,
    probe_embedding,
    untrained_seed,
    retrain_runs,
);

impl ExperimentConfig {
    /// Apply `key = value` lines over `self`. Blank lines and `#` comments
    /// are ignored.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`, got `{raw}`", n + 1)))?;
            self.set(k.trim(), v.trim())?;
        }
        Ok(())
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut c = Self::default();
        c.apply_text(text)?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        Self::from_text(&text)
    }

    pub fn loss(&self) -> LossConfig {
        LossConfig {
            temperature: self.temperature,
            kp: self.kp,
            kn: self.kn,
            batch_size: self.batch_size,
        }
    }

    pub fn policy(&self) -> AugmentPolicy {
        AugmentPolicy {
            p_flip: self.p_flip,
            brightness_delta_max: self.brightness_delta_max,
            noise_sigma: self.noise_sigma,
            max_rotate: self.max_rotate,
            crop_scale_min: self.crop_scale_min,
        }
    }

    pub fn train_config(&self, method: &str) -> TrainConfig {
        TrainConfig {
            method: method.to_string(),
            epochs: self.epochs,
            anchors_per_epoch: self.anchors_per_epoch,
            lr: self.lr,
            loss: self.loss(),
            policy: self.policy(),
            seed: self.seed,
            frozen_data: self.frozen_data,
            record_timing: self.record_timing,
        }
    }

    pub fn probe_config(&self) -> ProbeConfig {
        ProbeConfig {
            runs: self.probe_runs,
            lambda: self.probe_lambda,
            seed: self.probe_seed,
            use_embedding: self.probe_embedding,
        }
    }

    /// Check every downstream invariant before any work starts.
    pub fn validate(&self) -> Result<()> {
        self.train_config(&self.method).validate()?;
        for m in gameclr::contrastive::method_names() {
            self.train_config(m).validate()?;
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be >= 1".into()));
        }
        if self.probe_runs == 0 {
            return Err(Error::Config("probe_runs must be >= 1".into()));
        }
        if self.probe_anchors < gameclr::probe::MIN_PROBE_ROWS {
            return Err(Error::Config(format!(
                "probe_anchors must be >= {}",
                gameclr::probe::MIN_PROBE_ROWS
            )));
        }
        if !(self.probe_lambda >= 0.0 && self.probe_lambda.is_finite()) {
            return Err(Error::Config("probe_lambda must be finite and >= 0".into()));
        }
        Ok(())
    }
}
