//! Contrastive methods behind a common trait, looked up by name.
//!
//! A method decides which data it trains on and how a list of anchor groups
//! becomes augmented views with anchor/positive/negative roles. Encoding and
//! the loss itself are shared.

use rayon::prelude::*;

use super::loss::{AnchorRole, BatchLayout, ContrastiveBatch, Provenance};
use crate::augment::{augment_image, AugmentPolicy};
use crate::data::{synthesize_group, AnchorGroup, DataMode};
use crate::error::{Error, Result};
use crate::image::Image;
use crate::nn::{forward, ModelParams, Real};
use crate::rng::derive_seed;
use crate::scene::SceneState;

#[derive(Debug, Clone, PartialEq)]
pub struct LossConfig {
    pub temperature: f64,
    /// Synthetic positives per anchor.
    pub kp: usize,
    /// Synthetic negatives per anchor.
    pub kn: usize,
    pub batch_size: usize,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            temperature: 0.2,
            kp: 2,
            kn: 2,
            batch_size: 64,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(Error::NonPositiveTemperature(self.temperature));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        Ok(())
    }
}

/// Augmented views ready for encoding, with their roles.
#[derive(Debug, Clone)]
pub struct Views {
    pub images: Vec<Image>,
    pub layout: BatchLayout,
}

pub trait ContrastiveMethod: Send + Sync {
    fn name(&self) -> &'static str;

    /// Dataset mode this method trains on.
    fn data_mode(&self) -> DataMode;

    /// Method-specific configuration checks.
    fn validate(&self, cfg: &LossConfig) -> Result<()>;

    fn build_views(
        &self,
        groups: &[AnchorGroup],
        cfg: &LossConfig,
        policy: &AugmentPolicy,
        seed: u64,
    ) -> Result<Views>;
}

fn augment_all(sources: &[(&Image, u64)], policy: &AugmentPolicy) -> Result<Vec<Image>> {
    sources
        .par_iter()
        .map(|(img, s)| augment_image(img, policy, *s))
        .collect()
}

/// Two augmented views per anchor; each view's positive is its counterpart
/// and its negatives are all other views in the batch.
#[derive(Debug, Clone, Copy, Default)]
pub struct SimClr;

impl ContrastiveMethod for SimClr {
    fn name(&self) -> &'static str {
        "simclr"
    }

    fn data_mode(&self) -> DataMode {
        DataMode::SimClr
    }

    fn validate(&self, cfg: &LossConfig) -> Result<()> {
        cfg.validate()?;
        if cfg.batch_size < 2 {
            return Err(Error::BatchTooSmall(cfg.batch_size));
        }
        Ok(())
    }

    fn build_views(
        &self,
        groups: &[AnchorGroup],
        _cfg: &LossConfig,
        policy: &AugmentPolicy,
        seed: u64,
    ) -> Result<Views> {
        let b = groups.len();
        if b < 2 {
            return Err(Error::BatchTooSmall(b));
        }
        let mut sources = Vec::with_capacity(2 * b);
        let mut provenance = Vec::with_capacity(2 * b);
        let mut group = Vec::with_capacity(2 * b);
        for (i, g) in groups.iter().enumerate() {
            for (v, tag) in [Provenance::Anchor, Provenance::View].into_iter().enumerate() {
                sources.push((&g.anchor, derive_seed(seed, &[i as u64, v as u64])));
                provenance.push(tag);
                group.push(i);
            }
        }
        let n = 2 * b;
        let roles = (0..n)
            .map(|j| AnchorRole {
                anchor: j,
                positives: vec![j ^ 1],
                negatives: (0..n).filter(|&k| k != j && k != (j ^ 1)).collect(),
                synthetic_negatives: Vec::new(),
            })
            .collect();
        Ok(Views {
            images: augment_all(&sources, policy)?,
            layout: BatchLayout {
                provenance,
                group,
                roles,
            },
        })
    }
}

/// Engine-synthesized positives and negatives. Each anchor's positives are
/// its synthetic positives; its negatives are its own synthetic negatives
/// plus every view of every other anchor group.
#[derive(Debug, Clone, Copy, Default)]
pub struct GameClr;

impl ContrastiveMethod for GameClr {
    fn name(&self) -> &'static str {
        "gameclr"
    }

    fn data_mode(&self) -> DataMode {
        DataMode::GameClr
    }

    fn validate(&self, cfg: &LossConfig) -> Result<()> {
        cfg.validate()?;
        if cfg.kp == 0 || cfg.kn == 0 {
            return Err(Error::Config("gameclr needs kp >= 1 and kn >= 1".into()));
        }
        Ok(())
    }

    fn build_views(
        &self,
        groups: &[AnchorGroup],
        cfg: &LossConfig,
        policy: &AugmentPolicy,
        seed: u64,
    ) -> Result<Views> {
        self.validate(cfg)?;
        let per = 1 + cfg.kp + cfg.kn;
        let mut sources = Vec::with_capacity(groups.len() * per);
        let mut provenance = Vec::with_capacity(groups.len() * per);
        let mut group = Vec::with_capacity(groups.len() * per);
        for (i, g) in groups.iter().enumerate() {
            if g.syn_pos.len() < cfg.kp || g.syn_neg.len() < cfg.kn {
                return Err(Error::ShapeMismatch(format!(
                    "anchor group {i} has {}/{} synthetic images, need {}/{}",
                    g.syn_pos.len(),
                    g.syn_neg.len(),
                    cfg.kp,
                    cfg.kn
                )));
            }
            let members = std::iter::once((&g.anchor, Provenance::Anchor))
                .chain(g.syn_pos[..cfg.kp].iter().map(|x| (x, Provenance::SynPos)))
                .chain(g.syn_neg[..cfg.kn].iter().map(|x| (x, Provenance::SynNeg)));
            for (slot, (img, tag)) in members.enumerate() {
                sources.push((img, derive_seed(seed, &[i as u64, slot as u64])));
                provenance.push(tag);
                group.push(i);
            }
        }
        let n = sources.len();
        let roles = (0..groups.len())
            .map(|i| {
                let base = i * per;
                let own_neg: Vec<usize> = (base + 1 + cfg.kp..base + per).collect();
                let mut negatives = own_neg.clone();
                negatives.extend((0..n).filter(|&k| k / per != i));
                AnchorRole {
                    anchor: base,
                    positives: (base + 1..base + 1 + cfg.kp).collect(),
                    negatives,
                    synthetic_negatives: own_neg,
                }
            })
            .collect();
        Ok(Views {
            images: augment_all(&sources, policy)?,
            layout: BatchLayout {
                provenance,
                group,
                roles,
            },
        })
    }
}

static METHODS: [&dyn ContrastiveMethod; 2] = [&SimClr, &GameClr];

/// Every registered method.
pub fn methods() -> &'static [&'static dyn ContrastiveMethod] {
    &METHODS
}

pub fn method(name: &str) -> Result<&'static dyn ContrastiveMethod> {
    METHODS
        .iter()
        .copied()
        .find(|m| m.name() == name)
        .ok_or_else(|| Error::UnknownMethod(name.to_string()))
}

pub fn method_names() -> Vec<&'static str> {
    METHODS.iter().map(|m| m.name()).collect()
}

/// Encode and project views into a [`ContrastiveBatch`].
pub fn embed_views<T: Real>(views: Views, params: &ModelParams<T>) -> Result<ContrastiveBatch> {
    let fwd = forward(params, &views.images)?;
    let emb = fwd.embeddings(params.arch().embed_dim).cast::<f64>();
    ContrastiveBatch::new(views.layout, emb)
}

pub fn build_simclr_batch<T: Real>(
    images: &[Image],
    policy: &AugmentPolicy,
    seed: u64,
    params: &ModelParams<T>,
) -> Result<ContrastiveBatch> {
    let groups: Vec<AnchorGroup> = images
        .iter()
        .map(|img| AnchorGroup {
            anchor: img.clone(),
            syn_pos: Vec::new(),
            syn_neg: Vec::new(),
        })
        .collect();
    let views = SimClr.build_views(&groups, &LossConfig::default(), policy, seed)?;
    embed_views(views, params)
}

pub fn build_gameclr_batch<T: Real>(
    anchor_scenes: &[SceneState],
    cfg: &LossConfig,
    policy: &AugmentPolicy,
    seed: u64,
    params: &ModelParams<T>,
) -> Result<ContrastiveBatch> {
    let groups = anchor_scenes
        .par_iter()
        .enumerate()
        .map(|(i, s)| {
            synthesize_group(s.clone(), cfg.kp, cfg.kn, derive_seed(seed, &[0, i as u64]))
                .map(|g| g.render())
        })
        .collect::<Result<Vec<_>>>()?;
    let views = GameClr.build_views(&groups, cfg, policy, derive_seed(seed, &[1]))?;
    embed_views(views, params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{init_params, Architecture};
    use crate::render::render;
    use crate::scene::{sample_scene, traffic_variables, TrafficVehicle};

    fn small_params() -> ModelParams<f64> {
        init_params(Architecture::default(), 1)
    }

    #[test]
    fn registry_lookup() {
        assert_eq!(method("simclr").unwrap().name(), "simclr");
        assert_eq!(method("gameclr").unwrap().data_mode(), DataMode::GameClr);
        assert!(matches!(method("byol"), Err(Error::UnknownMethod(_))));
        assert_eq!(method_names(), vec!["simclr", "gameclr"]);
    }

    #[test]
    fn simclr_counts() {
        let imgs: Vec<Image> = (0..2).map(|i| render(&sample_scene(i, 3))).collect();
        let batch = build_simclr_batch(&imgs, &AugmentPolicy::default(), 1, &small_params()).unwrap();
        assert_eq!(batch.layout.len(), 4);
        assert_eq!(batch.layout.roles.len(), 4);
        for r in &batch.layout.roles {
            assert_eq!(r.positives.len(), 1);
            assert_eq!(r.negatives.len(), 2);
            assert!(!r.negatives.contains(&r.positives[0]));
        }
    }

    #[test]
    fn simclr_needs_two_anchors() {
        let imgs = vec![render(&sample_scene(0, 3))];
        assert!(matches!(
            build_simclr_batch(&imgs, &AugmentPolicy::default(), 1, &small_params()),
            Err(Error::BatchTooSmall(1))
        ));
    }

    #[test]
    fn gameclr_counts_and_provenance() {
        let scenes: Vec<SceneState> = (0..8).map(|i| sample_scene(i, 2)).collect();
        let cfg = LossConfig::default();
        let batch = build_gameclr_batch(&scenes, &cfg, &AugmentPolicy::default(), 3, &small_params()).unwrap();
        assert_eq!(batch.layout.len(), 8 * 5);
        assert_eq!(batch.layout.roles.len(), 8);
        for r in &batch.layout.roles {
            assert_eq!(r.positives.len(), 2);
            assert_eq!(r.negatives.len(), 2 + 7 * 5);
            assert_eq!(r.synthetic_negatives.len(), 2);
            for &p in &r.positives {
                assert_eq!(batch.layout.provenance[p], Provenance::SynPos);
                assert_eq!(batch.layout.group[p], batch.layout.group[r.anchor]);
            }
        }
    }

    #[test]
    fn gameclr_rejects_full_scenes() {
        let mut s = sample_scene(0, 0);
        s.lanes = [Some(TrafficVehicle {
            distance: 9.0,
            direction: 0.0,
            color: 0,
        }); 3];
        let err = build_gameclr_batch(&[s], &LossConfig::default(), &AugmentPolicy::default(), 0, &small_params());
        assert!(matches!(err, Err(Error::AllLanesOccupied)));
    }

    #[test]
    fn synthetic_sets_follow_engine_contracts() {
        let s = sample_scene(4, 2);
        let g = synthesize_group(s.clone(), 3, 3, 9).unwrap();
        let tv = traffic_variables(&s);
        assert!(g.syn_pos.iter().all(|p| traffic_variables(p) == tv));
        assert!(g.syn_neg.iter().all(|n| traffic_variables(n) != tv));
    }
}
