//! Training objective: token NLL plus annealed KL.

use serde::{Deserialize, Serialize};

use crate::corpus::{BOS_ID, EOS_ID};
use crate::numerics::{NumericsError, Rng, Tape, Var};

use super::latent::standard_normal;
use super::model::{ModelInput, MwpModel};

/// One training pair: graphs in, delexicalized target ids out (no BOS/EOS).
#[derive(Clone, Debug, PartialEq)]
pub struct TrainExample {
    pub input: ModelInput,
    pub target: Vec<usize>,
}

/// How token log-likelihoods are combined per example.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Reduction {
    /// Mean over the example's tokens.
    #[default]
    Mean,
    /// Sum over tokens: the sentence-level ELBO scale, which keeps the
    /// latent worth using when the KL weight approaches 1.
    Sum,
}

/// Per-call knobs of the objective.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossSettings {
    /// Probability of feeding the gold token rather than the argmax.
    pub teacher_forcing: f64,
    pub kl_weight: f64,
    /// Use the posterior mean instead of a reparameterized draw.
    pub posterior_mean: bool,
    pub reduction: Reduction,
}

impl LossSettings {
    /// Deterministic scoring: always teacher-forced, posterior mean.
    pub fn evaluation(kl_weight: f64) -> Self {
        Self {
            teacher_forcing: 1.0,
            kl_weight,
            posterior_mean: true,
            reduction: Reduction::Mean,
        }
    }
}

/// Linear ramp from 0 to 1 over `ramp_steps`.
pub fn kl_weight(step: u64, ramp_steps: u64) -> f64 {
    if ramp_steps == 0 {
        1.0
    } else {
        (step as f64 / ramp_steps as f64).min(1.0)
    }
}

/// Forward results of one example.
#[derive(Clone, Copy, Debug)]
pub struct ExampleLoss {
    /// `nll / tokens + kl_weight · kl` (or `nll + ...` for sum reduction)
    pub loss: Var,
    pub nll: Var,
    pub kl: Var,
    /// Predicted positions, including the end token.
    pub tokens: usize,
    /// Positions where the argmax equals the gold token.
    pub correct: usize,
}

/// Builds the loss of one example on `tape`. `rng` supplies the latent noise
/// and the teacher-forcing coin flips.
pub fn example_loss(
    tape: &mut Tape,
    model: &MwpModel,
    example: &TrainExample,
    settings: &LossSettings,
    rng: &mut Rng,
) -> Result<ExampleLoss, NumericsError> {
    let encoded = model.encode(tape, &example.input)?;
    let prior = model.prior(tape, encoded.condition)?;
    let posterior = model.posterior(tape, encoded.condition, &example.target)?;
    let z = if settings.posterior_mean {
        posterior.mu
    } else {
        let eps = standard_normal(model.config.latent_dim, rng);
        posterior.reparameterize(tape, eps)?
    };
    let kl = super::latent::kl_on_tape(tape, posterior, prior)?;
    let mut h = model.initial_hidden(tape, z, encoded.condition)?;
    let ctx = model.decoder_context(tape, encoded.equation.g_star, encoded.knowledge.g_star)?;

    let gold: Vec<usize> = example.target.iter().copied().chain([EOS_ID]).collect();
    let mut prev = BOS_ID;
    let mut total: Option<Var> = None;
    let mut correct = 0;
    for &g in &gold {
        let out = model.step(tape, &ctx, h, prev)?;
        h = out.hidden;
        let predicted = tape.value(out.log_probs).argmax_row(0);
        if predicted == g {
            correct += 1;
        }
        let lp = tape.gather(out.log_probs, &[g])?;
        total = Some(match total {
            Some(t) => tape.add(t, lp)?,
            None => lp,
        });
        let use_gold = settings.teacher_forcing >= 1.0 || rng.uniform() < settings.teacher_forcing;
        prev = if use_gold { g } else { predicted };
    }
    let total = total.expect("gold always holds the end token");
    let nll = tape.scale(total, -1.0)?;
    let reduced = match settings.reduction {
        Reduction::Mean => tape.scale(nll, 1.0 / gold.len() as f64)?,
        Reduction::Sum => nll,
    };
    let weighted_kl = tape.scale(kl, settings.kl_weight)?;
    let loss = tape.add(reduced, weighted_kl)?;
    Ok(ExampleLoss {
        loss,
        nll,
        kl,
        tokens: gold.len(),
        correct,
    })
}

/// Aggregate statistics of a batch.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BatchStats {
    pub loss: f64,
    /// Mean per-token NLL over all predicted positions.
    pub nll_per_token: f64,
    /// Mean KL per example.
    pub kl: f64,
    pub tokens: usize,
    pub correct: usize,
}

impl BatchStats {
    pub fn accuracy(&self) -> f64 {
        if self.tokens == 0 {
            0.0
        } else {
            self.correct as f64 / self.tokens as f64
        }
    }
}

/// Mean of the per-example losses as one node, plus statistics.
pub fn batch_loss(
    tape: &mut Tape,
    model: &MwpModel,
    batch: &[&TrainExample],
    settings: &LossSettings,
    rng: &mut Rng,
) -> Result<(Var, BatchStats), NumericsError> {
    if batch.is_empty() {
        return Err(NumericsError::Invalid("empty batch".into()));
    }
    let mut sum: Option<Var> = None;
    let mut stats = BatchStats::default();
    let mut nll_total = 0.0;
    for ex in batch {
        let l = example_loss(tape, model, ex, settings, rng)?;
        nll_total += tape.value(l.nll).item();
        stats.kl += tape.value(l.kl).item();
        stats.tokens += l.tokens;
        stats.correct += l.correct;
        sum = Some(match sum {
            Some(s) => tape.add(s, l.loss)?,
            None => l.loss,
        });
    }
    let loss = tape.scale(sum.expect("non-empty batch"), 1.0 / batch.len() as f64)?;
    stats.loss = tape.value(loss).item();
    stats.kl /= batch.len() as f64;
    stats.nll_per_token = nll_total / stats.tokens as f64;
    Ok((loss, stats))
}
