//! Gated graph neural network over Levi graphs.
//!
//! Node states are row vectors, so every gate reads `x · W` rather than
//! `W · x`. The hidden size equals the embedding size.

use thiserror::Error;

use crate::corpus::Vocab;
use crate::graph::LeviGraph;
use crate::numerics::{init_normal, NumericsError, ParamId, ParamStore, Rng, Tape, Tensor, Var};

#[derive(Debug, Error)]
pub enum EncoderError {
    #[error("graph token `{0}` is not in the vocabulary")]
    UnknownToken(String),
    #[error("adjacency is {adjacency:?} but the graph has {nodes} nodes")]
    AdjacencyMismatch { nodes: usize, adjacency: [usize; 2] },
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

/// Gate and augmentation weights of one encoder. No biases.
#[derive(Clone, Copy, Debug)]
pub struct GgnnParams {
    pub w_z: ParamId,
    pub u_z: ParamId,
    pub w_r: ParamId,
    pub u_r: ParamId,
    pub w_h: ParamId,
    pub u_h: ParamId,
    /// `[2·dim, dim]`, applied to the column concatenation `[G_0 | G_n]`.
    pub w_star: ParamId,
    pub hops: usize,
}

const GATE_NAMES: [&str; 6] = ["W_z", "U_z", "W_r", "U_r", "W_h", "U_h"];

impl GgnnParams {
    /// Registers freshly initialized weights under `prefix.`.
    pub fn register(
        store: &mut ParamStore,
        prefix: &str,
        dim: usize,
        hops: usize,
        std: f64,
        rng: &mut Rng,
    ) -> Self {
        let mut gate = |name: &str| store.add(format!("{prefix}.{name}"), init_normal(dim, dim, std, rng));
        let [w_z, u_z, w_r, u_r, w_h, u_h] = GATE_NAMES.map(&mut gate);
        let w_star = store.add(format!("{prefix}.W_star"), init_normal(2 * dim, dim, std, rng));
        Self {
            w_z,
            u_z,
            w_r,
            u_r,
            w_h,
            u_h,
            w_star,
            hops,
        }
    }

    /// Looks up previously registered weights by name.
    pub fn resolve(store: &ParamStore, prefix: &str, hops: usize) -> Result<Self, NumericsError> {
        let id = |name: &str| {
            let full = format!("{prefix}.{name}");
            store.id(&full).ok_or(NumericsError::UnknownParam(full))
        };
        Ok(Self {
            w_z: id("W_z")?,
            u_z: id("U_z")?,
            w_r: id("W_r")?,
            u_r: id("U_r")?,
            w_h: id("W_h")?,
            u_h: id("U_h")?,
            w_star: id("W_star")?,
            hops,
        })
    }

    pub fn ids(&self) -> [ParamId; 7] {
        [self.w_z, self.u_z, self.w_r, self.u_r, self.w_h, self.u_h, self.w_star]
    }
}

/// Token ids and normalized adjacency of one Levi graph.
#[derive(Clone, Debug, PartialEq)]
pub struct GraphInput {
    pub tokens: Vec<String>,
    pub ids: Vec<usize>,
    pub adjacency: Tensor,
}

impl GraphInput {
    pub fn new(levi: &LeviGraph, vocab: &Vocab) -> Result<Self, EncoderError> {
        let ids = levi
            .tokens
            .iter()
            .map(|t| vocab.id(t).ok_or_else(|| EncoderError::UnknownToken(t.clone())))
            .collect::<Result<Vec<_>, _>>()?;
        Self::from_parts(levi.tokens.clone(), ids, levi.adjacency())
    }

    pub fn from_parts(tokens: Vec<String>, ids: Vec<usize>, adjacency: Tensor) -> Result<Self, EncoderError> {
        let n = ids.len();
        if adjacency.shape() != [n, n] {
            return Err(EncoderError::AdjacencyMismatch {
                nodes: n,
                adjacency: adjacency.shape(),
            });
        }
        Ok(Self { tokens, ids, adjacency })
    }

    pub fn node_count(&self) -> usize {
        self.ids.len()
    }
}

/// Intermediate and final encoder outputs, all on the tape.
#[derive(Clone, Copy, Debug)]
pub struct GraphEncoding {
    pub g0: Var,
    pub gn: Var,
    /// Augmented per-node states, `[nodes, dim]`.
    pub g_star: Var,
    /// Mean of the rows of `g_star`, `[1, dim]`.
    pub pooled: Var,
}

/// Runs the encoder from explicit initial node states.
pub fn ggnn_encode(tape: &mut Tape, params: &GgnnParams, g0: Var, adjacency: Var) -> Result<GraphEncoding, NumericsError> {
    let [w_z, u_z, w_r, u_r, w_h, u_h, w_star] = params.ids().map(|id| tape.param(id));
    let mut g = g0;
    for _ in 0..params.hops {
        let gamma = tape.matmul(adjacency, g)?;
        let z = gate(tape, gamma, w_z, g, u_z)?;
        let z = tape.sigmoid(z)?;
        let r = gate(tape, gamma, w_r, g, u_r)?;
        let r = tape.sigmoid(r)?;
        let rg = tape.mul(r, g)?;
        let cand = gate(tape, gamma, w_h, rg, u_h)?;
        let cand = tape.tanh(cand)?;
        // (1 - z) ⊙ g + z ⊙ cand
        let keep = tape.one_minus(z)?;
        let keep = tape.mul(keep, g)?;
        let update = tape.mul(z, cand)?;
        g = tape.add(keep, update)?;
    }
    let both = tape.concat(&[g0, g])?;
    let g_star = tape.matmul(both, w_star)?;
    let pooled = tape.mean_rows(g_star)?;
    Ok(GraphEncoding {
        g0,
        gn: g,
        g_star,
        pooled,
    })
}

fn gate(tape: &mut Tape, gamma: Var, w: Var, state: Var, u: Var) -> Result<Var, NumericsError> {
    let a = tape.matmul(gamma, w)?;
    let b = tape.matmul(state, u)?;
    tape.add(a, b)
}

/// Looks up node embeddings in `table` and encodes the graph.
pub fn encode_graph(
    tape: &mut Tape,
    params: &GgnnParams,
    table: Var,
    input: &GraphInput,
) -> Result<GraphEncoding, NumericsError> {
    let g0 = tape.embed(table, &input.ids)?;
    let adjacency = tape.constant(input.adjacency.clone());
    ggnn_encode(tape, params, g0, adjacency)
}
