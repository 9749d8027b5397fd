//! A small reverse-mode differentiation tape over dense `f64` matrices, with
//! the layers the actor and critics are built from.
//!
//! Values flowing through a [`Graph`] are row-major batches: one row per
//! sample. Parameters live in a [`ParamStore`] and are referenced from the
//! graph by id, so a backward pass can accumulate into the owning store.

mod checkpoint;
mod gradcheck;
mod graph;
mod layers;
mod optim;
mod params;

pub use checkpoint::{Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use gradcheck::{check_gradients, grad_check, GradCheckReport};
pub use graph::{Gradients, Graph, NodeId};
pub(crate) use graph::log_one_minus_tanh_sq;
pub use layers::{Activation, Dense, GruCell, Mlp, RecurrentCore};
pub(crate) use layers::LayoutBuilder;
pub use optim::{Optimizer, OptimizerConfig, OptimizerKind};
pub use params::{init_params, InitScheme, ParamId, ParamSpec, ParamStore};
