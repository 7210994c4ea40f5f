//! Inference: greedy decoding and beam search against frozen parameters.

use std::cmp::Ordering;

use crate::corpus::{BOS_ID, EOS_ID};
use crate::numerics::{NumericsError, Tape, Tensor};

use super::latent::LatentGaussian;
use super::model::{DecoderContext, GraphMemory, ModelInput, MwpModel};

type Result<T> = std::result::Result<T, NumericsError>;

/// A decoded sequence. `tokens` excludes the end token.
#[derive(Clone, Debug, PartialEq)]
pub struct Hypothesis {
    pub tokens: Vec<usize>,
    pub finished: bool,
    pub log_prob: f64,
}

impl Hypothesis {
    /// Predicted positions, counting the end token when present.
    pub fn length(&self) -> usize {
        self.tokens.len() + usize::from(self.finished)
    }

    /// Cumulative log-probability divided by the token count.
    pub fn score(&self) -> f64 {
        self.log_prob / self.length().max(1) as f64
    }
}

/// Values of one inference step.
#[derive(Clone, Debug)]
pub struct StepValues {
    pub hidden: Tensor,
    pub log_probs: Tensor,
    pub beta: f64,
    pub alpha_e: Tensor,
    pub alpha_k: Tensor,
}

/// Per-input state shared by every decode of that input. Owns only plain
/// tensors, so sessions for different requests are independent.
#[derive(Clone, Debug)]
pub struct Session<'m> {
    model: &'m MwpModel,
    eq_nodes: Tensor,
    eq_keys: Tensor,
    kg_nodes: Tensor,
    kg_keys: Tensor,
    condition: Tensor,
    prior: LatentGaussian,
}

impl<'m> Session<'m> {
    pub fn new(model: &'m MwpModel, input: &ModelInput) -> Result<Self> {
        let mut tape = Tape::inference(&model.store);
        let enc = model.encode(&mut tape, input)?;
        let prior = model.prior(&mut tape, enc.condition)?.value(&tape);
        let ctx = model.decoder_context(&mut tape, enc.equation.g_star, enc.knowledge.g_star)?;
        Ok(Self {
            model,
            eq_nodes: tape.value(ctx.equation.nodes).clone(),
            eq_keys: tape.value(ctx.equation.keys).clone(),
            kg_nodes: tape.value(ctx.knowledge.nodes).clone(),
            kg_keys: tape.value(ctx.knowledge.keys).clone(),
            condition: tape.value(enc.condition).clone(),
            prior,
        })
    }

    pub fn prior(&self) -> &LatentGaussian {
        &self.prior
    }

    /// `[g_e; g_k]`
    pub fn condition(&self) -> &Tensor {
        &self.condition
    }

    pub fn posterior(&self, target: &[usize]) -> Result<LatentGaussian> {
        let mut tape = Tape::inference(&self.model.store);
        let cond = tape.constant(self.condition.clone());
        Ok(self.model.posterior(&mut tape, cond, target)?.value(&tape))
    }

    pub fn initial_hidden(&self, z: &Tensor) -> Result<Tensor> {
        let mut tape = Tape::inference(&self.model.store);
        let z = tape.constant(z.clone());
        let cond = tape.constant(self.condition.clone());
        let h = self.model.initial_hidden(&mut tape, z, cond)?;
        Ok(tape.value(h).clone())
    }

    pub fn step(&self, hidden: &Tensor, prev_token: usize) -> Result<StepValues> {
        let mut tape = Tape::inference(&self.model.store);
        let ctx = DecoderContext {
            equation: GraphMemory {
                nodes: tape.constant(self.eq_nodes.clone()),
                keys: tape.constant(self.eq_keys.clone()),
            },
            knowledge: GraphMemory {
                nodes: tape.constant(self.kg_nodes.clone()),
                keys: tape.constant(self.kg_keys.clone()),
            },
        };
        let h = tape.constant(hidden.clone());
        let out = self.model.step(&mut tape, &ctx, h, prev_token)?;
        Ok(StepValues {
            hidden: tape.value(out.hidden).clone(),
            log_probs: tape.value(out.log_probs).clone(),
            beta: tape.value(out.plan.beta).item(),
            alpha_e: tape.value(out.plan.alpha_e).clone(),
            alpha_k: tape.value(out.plan.alpha_k).clone(),
        })
    }

    /// Argmax decoding; ties go to the lowest token id.
    pub fn greedy(&self, z: &Tensor, max_len: usize) -> Result<Hypothesis> {
        let mut h = self.initial_hidden(z)?;
        let mut hyp = Hypothesis {
            tokens: Vec::new(),
            finished: false,
            log_prob: 0.0,
        };
        let mut prev = BOS_ID;
        for _ in 0..max_len {
            let step = self.step(&h, prev)?;
            let tok = step.log_probs.argmax_row(0);
            hyp.log_prob += step.log_probs.get(0, tok);
            if tok == EOS_ID {
                hyp.finished = true;
                break;
            }
            hyp.tokens.push(tok);
            h = step.hidden;
            prev = tok;
        }
        Ok(hyp)
    }

    /// Beam search. Expansion keeps the `width` best continuations by
    /// cumulative log-probability (ties: earlier beam, then lower token id);
    /// the returned list is ranked by length-normalized score.
    pub fn beam_search(&self, z: &Tensor, width: usize, max_len: usize) -> Result<Vec<Hypothesis>> {
        if width == 0 {
            return Err(NumericsError::Invalid("beam width must be at least 1".into()));
        }
        let mut active = vec![(
            Hypothesis {
                tokens: Vec::new(),
                finished: false,
                log_prob: 0.0,
            },
            self.initial_hidden(z)?,
        )];
        let mut done: Vec<Hypothesis> = Vec::new();
        for _ in 0..max_len {
            let mut candidates: Vec<(f64, usize, usize)> = Vec::new();
            let mut hiddens = Vec::with_capacity(active.len());
            for (bi, (hyp, h)) in active.iter().enumerate() {
                let prev = hyp.tokens.last().copied().unwrap_or(BOS_ID);
                let step = self.step(h, prev)?;
                for (tok, lp) in step.log_probs.row(0).iter().enumerate() {
                    candidates.push((hyp.log_prob + lp, bi, tok));
                }
                hiddens.push(step.hidden);
            }
            candidates.sort_by(|a, b| {
                b.0.total_cmp(&a.0)
                    .then(a.1.cmp(&b.1))
                    .then(a.2.cmp(&b.2))
            });
            let mut next = Vec::with_capacity(width);
            for &(log_prob, bi, tok) in candidates.iter().take(width) {
                let mut tokens = active[bi].0.tokens.clone();
                if tok == EOS_ID {
                    done.push(Hypothesis {
                        tokens,
                        finished: true,
                        log_prob,
                    });
                } else {
                    tokens.push(tok);
                    next.push((
                        Hypothesis {
                            tokens,
                            finished: false,
                            log_prob,
                        },
                        hiddens[bi].clone(),
                    ));
                }
            }
            active = next;
            if active.is_empty() || done.len() >= width {
                break;
            }
        }
        done.extend(active.into_iter().map(|(h, _)| h));
        done.sort_by(|a, b| match b.score().total_cmp(&a.score()) {
            Ordering::Equal => a.tokens.cmp(&b.tokens),
            other => other,
        });
        done.truncate(width);
        Ok(done)
    }
}
