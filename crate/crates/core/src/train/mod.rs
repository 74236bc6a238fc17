//! Two-stage optimization of the deformation field and shaders against multi-view images.

mod config;
mod eval;
mod losses;
mod trainer;
mod view;

pub use config::{Ablation, Precision, Schedule, TrainConfig};
pub use eval::{evaluate, evaluate_mesh, mesh_chamfer, EvalReport, CHAMFER_SAMPLES};
pub use losses::{
    loss_icr, loss_icr_graph, loss_normal, loss_normal_graph, loss_photometric, mean_abs_error, normal_pairs,
    sample_pixels, LossComponents, LossWeights,
};
pub use trainer::{
    checkpoint_config, load_model, train, LoadedModel, RunPaths, StepGraph, StepRecord, TrainOutcome, Trainer,
    CHECKPOINT_FORMAT,
};
pub use view::{render_view, RenderedView};
