//! Contrastive representation learning on procedurally rendered driving
//! scenes: SimCLR with pixel augmentations against GameCLR with
//! engine-synthesized positives and hard negatives, evaluated by linear
//! probing of traffic variables.

pub mod augment;
pub mod contrastive;
pub mod data;
pub mod dataio;
pub mod error;
pub mod image;
pub mod nn;
pub mod probe;
pub mod render;
pub mod rng;
pub mod scene;
pub mod training;

pub use error::{Error, Result};
