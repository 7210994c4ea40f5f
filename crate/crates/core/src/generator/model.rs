//! The complete parameter set and the differentiable forward pieces.

use crate::encoder::{encode_graph, GgnnParams, GraphEncoding, GraphInput};
use crate::numerics::{init_normal, NumericsError, ParamId, ParamStore, Rng, Tape, Tensor, Var};

use super::gru::GruParams;
use super::latent::GaussianVars;
use super::ModelConfig;

type Result<T> = std::result::Result<T, NumericsError>;

/// Encoded equation and knowledge graphs for one sample.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelInput {
    pub equation: GraphInput,
    pub knowledge: GraphInput,
}

#[derive(Clone, Copy, Debug)]
struct Linear {
    w: ParamId,
    b: Option<ParamId>,
}

impl Linear {
    fn register(store: &mut ParamStore, name: &str, shape: [usize; 2], bias: bool, std: f64, rng: &mut Rng) -> Self {
        let w = store.add(format!("{name}.W"), init_normal(shape[0], shape[1], std, rng));
        let b = bias.then(|| store.add(format!("{name}.b"), Tensor::zeros(1, shape[1])));
        Self { w, b }
    }

    fn resolve(store: &ParamStore, name: &str, bias: bool) -> Result<Self> {
        let id = |suffix: &str| {
            let full = format!("{name}.{suffix}");
            store.id(&full).ok_or(NumericsError::UnknownParam(full))
        };
        Ok(Self {
            w: id("W")?,
            b: if bias { Some(id("b")?) } else { None },
        })
    }

    fn apply(&self, tape: &mut Tape, x: Var) -> Result<Var> {
        let w = tape.param(self.w);
        let b = self.b.map(|b| tape.param(b));
        tape.linear(x, w, b)
    }
}

/// Attention parameters for one graph: `o_v = tanh(h W + g_v U) v`.
#[derive(Clone, Copy, Debug)]
struct Attention {
    w: ParamId,
    u: ParamId,
    v: ParamId,
}

impl Attention {
    fn register(store: &mut ParamStore, name: &str, cfg: &ModelConfig, rng: &mut Rng) -> Self {
        let (h, e, s) = (cfg.hidden_dim, cfg.embed_dim, cfg.init_std);
        Self {
            w: store.add(format!("{name}.W"), init_normal(h, h, s, rng)),
            u: store.add(format!("{name}.U"), init_normal(e, h, s, rng)),
            v: store.add(format!("{name}.v"), init_normal(h, 1, s, rng)),
        }
    }

    fn resolve(store: &ParamStore, name: &str) -> Result<Self> {
        let id = |suffix: &str| {
            let full = format!("{name}.{suffix}");
            store.id(&full).ok_or(NumericsError::UnknownParam(full))
        };
        Ok(Self {
            w: id("W")?,
            u: id("U")?,
            v: id("v")?,
        })
    }
}

/// Per-graph tensors reused at every decoding step.
#[derive(Clone, Copy, Debug)]
pub struct GraphMemory {
    /// `[nodes, embed]`
    pub nodes: Var,
    /// `nodes · U`, `[nodes, hidden]`
    pub keys: Var,
}

/// Both graph memories.
#[derive(Clone, Copy, Debug)]
pub struct DecoderContext {
    pub equation: GraphMemory,
    pub knowledge: GraphMemory,
}

/// Outputs of the planner for one step.
#[derive(Clone, Copy, Debug)]
pub struct Plan {
    /// `[1, 1]`
    pub beta: Var,
    pub alpha_e: Var,
    pub alpha_k: Var,
    pub c_e: Var,
    pub c_k: Var,
    pub c: Var,
}

/// One decoder step's results.
#[derive(Clone, Copy, Debug)]
pub struct StepOutput {
    pub plan: Plan,
    pub hidden: Var,
    /// `[1, vocab]` log-probabilities.
    pub log_probs: Var,
}

/// Graph encodings plus the concatenated condition `[g_e; g_k]`.
#[derive(Clone, Copy, Debug)]
pub struct Encoded {
    pub equation: GraphEncoding,
    pub knowledge: GraphEncoding,
    pub condition: Var,
}

#[derive(Clone, Debug)]
struct Ids {
    embedding: ParamId,
    enc_eq: GgnnParams,
    enc_kg: GgnnParams,
    prior_hidden: Linear,
    prior_out: Linear,
    target_gru: GruParams,
    posterior: Linear,
    init_hidden: Linear,
    w_beta: ParamId,
    att_e: Attention,
    att_k: Attention,
    input_fusion: Linear,
    decoder_gru: GruParams,
    output: Linear,
}

/// All trainable parameters plus the configuration that shaped them.
#[derive(Clone, Debug)]
pub struct MwpModel {
    pub config: ModelConfig,
    pub store: ParamStore,
    ids: Ids,
}

impl MwpModel {
    /// Registers every parameter, drawing weights from `N(0, init_std²)`.
    /// Biases start at zero.
    pub fn new(config: ModelConfig, vocab_size: usize, seed: u64) -> Self {
        let mut rng = Rng::new(seed);
        let mut store = ParamStore::new();
        let (e, h, l, s) = (config.embed_dim, config.hidden_dim, config.latent_dim, config.init_std);
        let embedding = store.add("embedding", init_normal(vocab_size, e, s, &mut rng));
        let enc_eq = GgnnParams::register(&mut store, "ggnn_eq", e, config.hops, s, &mut rng);
        let enc_kg = if config.share_encoders {
            enc_eq
        } else {
            GgnnParams::register(&mut store, "ggnn_kg", e, config.hops, s, &mut rng)
        };
        let cond = config.condition_dim();
        let prior_hidden = Linear::register(&mut store, "prior.hidden", [cond, cond], true, s, &mut rng);
        let prior_out = Linear::register(&mut store, "prior.out", [cond, 2 * l], true, s, &mut rng);
        let target_gru = GruParams::register(&mut store, "posterior.gru", e, h, s, &mut rng);
        let posterior = Linear::register(&mut store, "posterior.q", [cond + h, 2 * l], true, s, &mut rng);
        let init_hidden = Linear::register(&mut store, "decoder.h0", [l + cond, h], true, s, &mut rng);
        let w_beta = store.add("planner.W_beta", init_normal(h, 2, s, &mut rng));
        let att_e = Attention::register(&mut store, "planner.att_eq", &config, &mut rng);
        let att_k = Attention::register(&mut store, "planner.att_kg", &config, &mut rng);
        let input_fusion = Linear::register(&mut store, "decoder.input", [2 * e, e], true, s, &mut rng);
        let decoder_gru = GruParams::register(&mut store, "decoder.gru", e, h, s, &mut rng);
        let output = Linear::register(&mut store, "decoder.out", [h, vocab_size], true, s, &mut rng);
        let ids = Ids {
            embedding,
            enc_eq,
            enc_kg,
            prior_hidden,
            prior_out,
            target_gru,
            posterior,
            init_hidden,
            w_beta,
            att_e,
            att_k,
            input_fusion,
            decoder_gru,
            output,
        };
        Self { config, store, ids }
    }

    /// Rebinds a loaded parameter store, checking every shape against a
    /// freshly built model of the same configuration.
    pub fn from_store(config: ModelConfig, store: ParamStore) -> Result<Self> {
        let vocab_size = store.by_name("embedding")?.rows();
        let reference = Self::new(config.clone(), vocab_size, 0);
        if reference.store.len() != store.len() {
            return Err(NumericsError::Checkpoint(format!(
                "expected {} parameters, found {}",
                reference.store.len(),
                store.len()
            )));
        }
        for (_, name, value) in reference.store.iter() {
            let found = store.by_name(name)?;
            if found.shape() != value.shape() {
                return Err(NumericsError::Checkpoint(format!(
                    "parameter `{name}` has shape {:?}, expected {:?}",
                    found.shape(),
                    value.shape()
                )));
            }
        }
        let enc_eq = GgnnParams::resolve(&store, "ggnn_eq", config.hops)?;
        let enc_kg = if config.share_encoders {
            enc_eq
        } else {
            GgnnParams::resolve(&store, "ggnn_kg", config.hops)?
        };
        let ids = Ids {
            embedding: store.id("embedding").expect("checked above"),
            enc_eq,
            enc_kg,
            prior_hidden: Linear::resolve(&store, "prior.hidden", true)?,
            prior_out: Linear::resolve(&store, "prior.out", true)?,
            target_gru: GruParams::resolve(&store, "posterior.gru")?,
            posterior: Linear::resolve(&store, "posterior.q", true)?,
            init_hidden: Linear::resolve(&store, "decoder.h0", true)?,
            w_beta: store.id("planner.W_beta").expect("checked above"),
            att_e: Attention::resolve(&store, "planner.att_eq")?,
            att_k: Attention::resolve(&store, "planner.att_kg")?,
            input_fusion: Linear::resolve(&store, "decoder.input", true)?,
            decoder_gru: GruParams::resolve(&store, "decoder.gru")?,
            output: Linear::resolve(&store, "decoder.out", true)?,
        };
        Ok(Self { config, store, ids })
    }

    pub fn vocab_size(&self) -> usize {
        self.store.get(self.ids.embedding).rows()
    }

    pub fn equation_encoder(&self) -> &GgnnParams {
        &self.ids.enc_eq
    }

    pub fn knowledge_encoder(&self) -> &GgnnParams {
        &self.ids.enc_kg
    }

    pub fn embedding_id(&self) -> ParamId {
        self.ids.embedding
    }

    pub fn w_beta_id(&self) -> ParamId {
        self.ids.w_beta
    }

    /// Runs both graph encoders.
    pub fn encode(&self, tape: &mut Tape, input: &ModelInput) -> Result<Encoded> {
        let table = tape.param(self.ids.embedding);
        let equation = encode_graph(tape, &self.ids.enc_eq, table, &input.equation)?;
        let knowledge = encode_graph(tape, &self.ids.enc_kg, table, &input.knowledge)?;
        let condition = tape.concat(&[equation.pooled, knowledge.pooled])?;
        Ok(Encoded {
            equation,
            knowledge,
            condition,
        })
    }

    fn split_gaussian(&self, tape: &mut Tape, out: Var) -> Result<GaussianVars> {
        let l = self.config.latent_dim;
        Ok(GaussianVars {
            mu: tape.slice_cols(out, 0, l)?,
            log_sigma: tape.slice_cols(out, l, l)?,
        })
    }

    /// Two-layer MLP on the condition only.
    pub fn prior(&self, tape: &mut Tape, condition: Var) -> Result<GaussianVars> {
        let hidden = self.ids.prior_hidden.apply(tape, condition)?;
        let hidden = tape.tanh(hidden)?;
        let out = self.ids.prior_out.apply(tape, hidden)?;
        self.split_gaussian(tape, out)
    }

    /// Final state of the target encoder over `tokens` (shared embeddings).
    pub fn encode_target(&self, tape: &mut Tape, tokens: &[usize]) -> Result<Var> {
        if tokens.is_empty() {
            return Err(NumericsError::Invalid("posterior needs a non-empty target".into()));
        }
        let table = tape.param(self.ids.embedding);
        let embedded = tape.embed(table, tokens)?;
        let mut h = tape.constant(Tensor::zeros(1, self.config.hidden_dim));
        for t in 0..tokens.len() {
            let x = tape.slice_rows(embedded, t, 1)?;
            h = self.ids.target_gru.step(tape, x, h)?;
        }
        Ok(h)
    }

    /// `W^q [g_e; g_k; GRU(target)] + b^q`.
    pub fn posterior(&self, tape: &mut Tape, condition: Var, tokens: &[usize]) -> Result<GaussianVars> {
        let state = self.encode_target(tape, tokens)?;
        let joined = tape.concat(&[condition, state])?;
        let out = self.ids.posterior.apply(tape, joined)?;
        self.split_gaussian(tape, out)
    }

    /// `h_0 = tanh(W^{h0} [z; g_e; g_k] + b)`.
    pub fn initial_hidden(&self, tape: &mut Tape, z: Var, condition: Var) -> Result<Var> {
        let joined = tape.concat(&[z, condition])?;
        let h = self.ids.init_hidden.apply(tape, joined)?;
        tape.tanh(h)
    }

    /// Precomputes the node-side attention terms.
    pub fn decoder_context(&self, tape: &mut Tape, equation: Var, knowledge: Var) -> Result<DecoderContext> {
        let u_e = tape.param(self.ids.att_e.u);
        let u_k = tape.param(self.ids.att_k.u);
        Ok(DecoderContext {
            equation: GraphMemory {
                nodes: equation,
                keys: tape.matmul(equation, u_e)?,
            },
            knowledge: GraphMemory {
                nodes: knowledge,
                keys: tape.matmul(knowledge, u_k)?,
            },
        })
    }

    fn attend(&self, tape: &mut Tape, att: &Attention, memory: &GraphMemory, h: Var) -> Result<(Var, Var)> {
        let w = tape.param(att.w);
        let v = tape.param(att.v);
        let query = tape.matmul(h, w)?;
        let scores = tape.add(memory.keys, query)?;
        let scores = tape.tanh(scores)?;
        let scores = tape.matmul(scores, v)?;
        let scores = tape.transpose(scores)?;
        let alpha = tape.softmax(scores)?;
        let context = tape.matmul(alpha, memory.nodes)?;
        Ok((alpha, context))
    }

    /// Attention over both graphs and the planning weight β from `h`.
    pub fn plan(&self, tape: &mut Tape, ctx: &DecoderContext, h: Var) -> Result<Plan> {
        let (alpha_e, c_e) = self.attend(tape, &self.ids.att_e, &ctx.equation, h)?;
        let (alpha_k, c_k) = self.attend(tape, &self.ids.att_k, &ctx.knowledge, h)?;
        let w_beta = tape.param(self.ids.w_beta);
        let logits = tape.matmul(h, w_beta)?;
        let probs = tape.softmax(logits)?;
        let beta = tape.slice_cols(probs, 0, 1)?;
        let gamma = tape.one_minus(beta)?;
        let from_e = tape.mul(beta, c_e)?;
        let from_k = tape.mul(gamma, c_k)?;
        let c = tape.add(from_e, from_k)?;
        Ok(Plan {
            beta,
            alpha_e,
            alpha_k,
            c_e,
            c_k,
            c,
        })
    }

    /// Plans from `h`, consumes `prev_token`, and scores the next token.
    pub fn step(&self, tape: &mut Tape, ctx: &DecoderContext, h: Var, prev_token: usize) -> Result<StepOutput> {
        let plan = self.plan(tape, ctx, h)?;
        let table = tape.param(self.ids.embedding);
        let w = tape.embed(table, &[prev_token])?;
        let joined = tape.concat(&[plan.c, w])?;
        let x = self.ids.input_fusion.apply(tape, joined)?;
        let hidden = self.ids.decoder_gru.step(tape, x, h)?;
        let logits = self.ids.output.apply(tape, hidden)?;
        let log_probs = tape.log_softmax(logits)?;
        Ok(StepOutput {
            plan,
            hidden,
            log_probs,
        })
    }
}
