//! Conditional VAE with a self-planning attention decoder.

mod config;
mod decode;
mod gru;
mod latent;
mod loss;
mod model;
mod pipeline;

pub use config::ModelConfig;
pub use decode::{Hypothesis, Session, StepValues};
pub use gru::GruParams;
pub use latent::{kl_divergence, kl_on_tape, standard_normal, GaussianVars, LatentGaussian};
pub use loss::{batch_loss, example_loss, kl_weight, BatchStats, ExampleLoss, LossSettings, Reduction, TrainExample};
pub use model::{DecoderContext, Encoded, GraphMemory, ModelInput, MwpModel, Plan, StepOutput};
pub use pipeline::{
    generate, graph_symbols, model_input, prepare_example, prior_seed, target_ids, DecodeConfig, Generated,
    PipelineError,
};
