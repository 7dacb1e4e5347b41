//! Anchor groups: the unit of training data. Groups are generated
//! procedurally from a seed stream or read from a stored dataset.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::image::Image;
use crate::render::render;
use crate::rng::derive_seed;
use crate::scene::{
    sample_scene, scene_altering_augment, scene_preserving_augment, SceneState, LANES,
};

/// What a dataset was generated for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DataMode {
    SimClr,
    GameClr,
    Probe,
}

impl DataMode {
    pub fn as_str(self) -> &'static str {
        match self {
            DataMode::SimClr => "simclr",
            DataMode::GameClr => "gameclr",
            DataMode::Probe => "probe",
        }
    }

    /// Traffic ceiling for anchor scenes. GameCLR anchors keep one lane free
    /// so the scene-altering augmentation always applies.
    pub fn anchor_max_vehicles(self) -> usize {
        match self {
            DataMode::GameClr => LANES - 1,
            DataMode::SimClr | DataMode::Probe => LANES,
        }
    }
}

impl fmt::Display for DataMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DataMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "simclr" => Ok(DataMode::SimClr),
            "gameclr" => Ok(DataMode::GameClr),
            "probe" => Ok(DataMode::Probe),
            other => Err(Error::Config(format!(
                "unknown mode `{other}` (expected simclr, gameclr or probe)"
            ))),
        }
    }
}

/// Parameters of a procedural data stream.
#[derive(Debug, Clone, PartialEq)]
pub struct GenSpec {
    pub mode: DataMode,
    pub seed: u64,
    pub kp: usize,
    pub kn: usize,
}

impl GenSpec {
    pub fn new(mode: DataMode, seed: u64) -> Self {
        Self {
            mode,
            seed,
            kp: 2,
            kn: 2,
        }
    }
}

/// An anchor and, in GameCLR mode, its synthetic positives and negatives.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneGroup {
    pub anchor: SceneState,
    pub syn_pos: Vec<SceneState>,
    pub syn_neg: Vec<SceneState>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnchorGroup {
    pub anchor: Image,
    pub syn_pos: Vec<Image>,
    pub syn_neg: Vec<Image>,
}

impl SceneGroup {
    pub fn render(&self) -> AnchorGroup {
        AnchorGroup {
            anchor: render(&self.anchor),
            syn_pos: self.syn_pos.iter().map(render).collect(),
            syn_neg: self.syn_neg.iter().map(render).collect(),
        }
    }
}

const TAG_SCENE: u64 = 0;
const TAG_POS: u64 = 1;
const TAG_NEG: u64 = 2;

/// Build `kp` scene-preserving and `kn` scene-altering variants of `anchor`.
pub fn synthesize_group(anchor: SceneState, kp: usize, kn: usize, seed: u64) -> Result<SceneGroup> {
    let syn_pos = (0..kp)
        .map(|j| scene_preserving_augment(&anchor, derive_seed(seed, &[TAG_POS, j as u64])))
        .collect();
    let syn_neg = (0..kn)
        .map(|j| scene_altering_augment(&anchor, derive_seed(seed, &[TAG_NEG, j as u64])))
        .collect::<Result<Vec<_>>>()?;
    Ok(SceneGroup {
        anchor,
        syn_pos,
        syn_neg,
    })
}

/// Scene group number `index` of epoch `epoch` in the stream `spec`.
/// Epoch 0 is what a generated dataset stores.
pub fn scene_group(spec: &GenSpec, epoch: u64, index: u64) -> Result<SceneGroup> {
    let seed = derive_seed(spec.seed, &[epoch, index]);
    let anchor = sample_scene(derive_seed(seed, &[TAG_SCENE]), spec.mode.anchor_max_vehicles());
    match spec.mode {
        DataMode::GameClr => synthesize_group(anchor, spec.kp, spec.kn, seed),
        DataMode::SimClr | DataMode::Probe => Ok(SceneGroup {
            anchor,
            syn_pos: Vec::new(),
            syn_neg: Vec::new(),
        }),
    }
}

pub fn scene_groups(spec: &GenSpec, epoch: u64, indices: &[u64]) -> Result<Vec<SceneGroup>> {
    indices
        .par_iter()
        .map(|&i| scene_group(spec, epoch, i))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::traffic_variables;

    #[test]
    fn gameclr_groups_respect_engine_contracts() {
        let spec = GenSpec::new(DataMode::GameClr, 3);
        for i in 0..200 {
            let g = scene_group(&spec, 0, i).unwrap();
            assert!(g.anchor.vehicle_count() <= 2);
            assert_eq!(g.syn_pos.len(), 2);
            assert_eq!(g.syn_neg.len(), 2);
            let tv = traffic_variables(&g.anchor);
            assert!(g.syn_pos.iter().all(|s| traffic_variables(s) == tv));
            assert!(g.syn_neg.iter().all(|s| traffic_variables(s) != tv));
        }
    }

    #[test]
    fn stream_is_addressable() {
        let spec = GenSpec::new(DataMode::SimClr, 3);
        let a = scene_groups(&spec, 1, &[5, 6, 7]).unwrap();
        assert_eq!(a[1], scene_group(&spec, 1, 6).unwrap());
        assert_ne!(a[1], scene_group(&spec, 2, 6).unwrap());
        assert!(a[0].syn_pos.is_empty());
    }

    #[test]
    fn mode_names_round_trip() {
        for m in [DataMode::SimClr, DataMode::GameClr, DataMode::Probe] {
            assert_eq!(m.as_str().parse::<DataMode>().unwrap(), m);
        }
        assert!("bogus".parse::<DataMode>().is_err());
    }
}
