//! Tensor math, encoder/projector, backpropagation, optimizer and gradient
//! verification.

pub mod adam;
pub mod checkpoint;
pub mod gradcheck;
pub mod model;
pub mod tensor;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use checkpoint::{decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint};
pub use gradcheck::{gradient_check, gradient_check_with_perturbation, GradCheckReport, GradCheckSpec};
pub use model::{
    backward, encode, forward, init_params, project, Architecture, BatchForward, ForwardCache,
    Gradients, ModelParams, ParamSpec, Projection,
};
pub use tensor::{Real, Tensor};
