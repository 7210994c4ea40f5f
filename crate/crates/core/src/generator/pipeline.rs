//! Glue between text-level inputs and the model: graph construction,
//! example preparation and end-to-end generation.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{generation_slot_map, relexicalize_lenient, CorpusError, MwpSample, Vocab};
use crate::cskg::{topic_instance, CskgError, CskgInstance, KnowledgeGraph, VariableBinding};
use crate::encoder::{EncoderError, GraphInput};
use crate::eqlang::{build_symbolic_graph, parse_system, solve_system, EqError, Shape, RELATIONS};
use crate::graph::{levi_transform, REVERSE_SUFFIX};
use crate::numerics::{derive_seed, NumericsError, Rng};

use super::decode::Session;
use super::loss::TrainExample;
use super::model::{ModelInput, MwpModel};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Equation(#[from] EqError),
    #[error(transparent)]
    Cskg(#[from] CskgError),
    #[error(transparent)]
    Encoder(#[from] EncoderError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

/// Every graph-only token: symbolic relations, knowledge-graph entities and
/// relations, each relation also in its reverse form.
pub fn graph_symbols(kg: &KnowledgeGraph) -> Vec<String> {
    let mut relations: Vec<String> = RELATIONS.iter().map(|r| r.to_string()).collect();
    relations.extend(kg.relations().into_iter().map(str::to_string));
    let mut out: Vec<String> = Vec::new();
    for r in relations {
        out.push(format!("{r}{REVERSE_SUFFIX}"));
        out.push(r);
    }
    out.extend(kg.entities().map(str::to_string));
    out.sort();
    out.dedup();
    out
}

/// Encoder inputs for an equation shape and a knowledge-graph instance.
pub fn model_input(vocab: &Vocab, shape: &Shape, instance: &CskgInstance) -> Result<ModelInput, EncoderError> {
    let equation = GraphInput::new(&levi_transform(&build_symbolic_graph(shape)), vocab)?;
    let knowledge = GraphInput::new(&instance.levi, vocab)?;
    Ok(ModelInput { equation, knowledge })
}

/// Tokenizes a delexicalized target, truncating to `max_len` with a warning.
pub fn target_ids(vocab: &Vocab, delexicalized: &str, max_len: usize) -> Vec<usize> {
    let mut ids = vocab.encode(delexicalized);
    if ids.len() > max_len {
        log::warn!(
            "target of {} tokens truncated to {max_len}: {delexicalized:?}",
            ids.len()
        );
        ids.truncate(max_len);
    }
    ids
}

pub fn prepare_example(
    sample: &MwpSample,
    kg: &KnowledgeGraph,
    vocab: &Vocab,
    depth: usize,
    max_len: usize,
) -> Result<TrainExample, PipelineError> {
    let instance = topic_instance(kg, &sample.raw.topic, &sample.binding, depth)?;
    Ok(TrainExample {
        input: model_input(vocab, &sample.shape, &instance)?,
        target: target_ids(vocab, &sample.delexed.text(), max_len),
    })
}

/// Decoding knobs for [`generate`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecodeConfig {
    pub beam_width: usize,
    pub max_len: usize,
    pub samples: usize,
    pub depth: usize,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        Self {
            beam_width: 5,
            max_len: 80,
            samples: 1,
            depth: crate::cskg::DEFAULT_DEPTH,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Generated {
    pub text: String,
    pub delexicalized: String,
    pub score: f64,
    /// Slot tokens the model emitted that the input cannot fill.
    pub unfilled: Vec<String>,
}

/// Latent draw `index` of a generation request.
pub fn prior_seed(seed: u64, index: usize) -> u64 {
    derive_seed(seed, 0x9e7, index as u64)
}

/// Generates `decode.samples` problems, one prior draw each.
pub fn generate(
    model: &MwpModel,
    vocab: &Vocab,
    kg: &KnowledgeGraph,
    equations: &str,
    topic: &str,
    binding: &VariableBinding,
    decode: &DecodeConfig,
    seed: u64,
) -> Result<Vec<Generated>, PipelineError> {
    let system = parse_system(equations)?;
    solve_system(&system)?;
    let instance = topic_instance(kg, topic, binding, decode.depth)?;
    let input = model_input(vocab, &system.shape(), &instance)?;
    let session = Session::new(model, &input)?;
    let slots = generation_slot_map(&system, binding);
    (0..decode.samples)
        .map(|i| {
            let z = session.prior().sample(&mut Rng::new(prior_seed(seed, i)));
            let best = session
                .beam_search(&z, decode.beam_width, decode.max_len)?
                .into_iter()
                .next()
                .expect("beam search returns at least one hypothesis");
            let delexicalized = vocab.decode(&best.tokens);
            let (text, unfilled) = relexicalize_lenient(&delexicalized, &slots);
            Ok(Generated {
                text,
                delexicalized,
                score: best.score(),
                unfilled,
            })
        })
        .collect()
}
