pub mod loss;
pub mod methods;

pub use loss::{
    contrastive_loss, contrastive_probability, AnchorRole, BatchLayout, ContrastiveBatch,
    CosineStats, Provenance,
};
pub use methods::{
    build_gameclr_batch, build_simclr_batch, embed_views, method, method_names, methods,
    ContrastiveMethod, GameClr, LossConfig, SimClr, Views,
};
