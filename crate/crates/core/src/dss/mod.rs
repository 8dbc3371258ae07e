//! The message-passing local solver.
//!
//! Each iteration `k` updates a latent state `H ∈ R^{n×d}` with
//!
//! ```text
//! φ→_j = Σ_{l∈N(j)} Φ→(h_j, h_l, d_jl, ‖d_jl‖)
//! φ←_j = Σ_{l∈N(j)} Φ←(h_j, h_l, d_lj, ‖d_lj‖)
//! h_j  ← h_j + α Ψ(h_j, c_j, φ→_j, φ←_j)
//! r̂^k_j = D(h_j)
//! ```
//!
//! and training minimizes `Σ_k (1/n) ‖A r̂^k - c‖²`. Gradients are written by hand.

mod backward;
mod forward;
mod graph;
mod model;
mod train;

pub use backward::{backward, batch_gradient};
pub use forward::{forward, infer_batch, residual_loss, training_loss, ForwardTrace};
pub use graph::{GraphTopology, LocalGraph};
pub use model::{
    block_param_count, block_shapes, init_model, load_model, param_count, save_model, DssModel, MlpShape,
    FORMAT_TAG,
};
pub use train::{
    clip_global_norm, mean_loss, train, Adam, EpochLog, PlateauScheduler, SchedulerConfig, TrainConfig, TrainingLog,
};
