//! Minimal differentiable computation: dense networks with recorded forward
//! passes, attention primitives, optimizers and gradient checking.

pub mod attention;
pub mod gradcheck;
pub mod mlp;
pub mod optim;
pub mod params;

pub use attention::{dot_score, softmax, softmax_backward};
pub use gradcheck::{finite_difference_check, grad_check, relative_error, GradCheckReport};
pub use mlp::{mlp_forward, HiddenActivation, Mlp, MlpSpec, MlpTape, OutputActivation};
pub use optim::{adam_step, soft_update, Adam, AdamConfig, AdamMoments};
pub use params::{Param, ParameterStore};
