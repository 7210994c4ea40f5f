//! Mini-batch training with Adam, KL annealing, plateau learning-rate
//! halving and checkpointing.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{CorpusError, Vocab};
use crate::generator::{
    batch_loss, kl_weight, BatchStats, LossSettings, ModelConfig, MwpModel, Reduction, TrainExample,
};
use crate::numerics::{
    clip_global_norm, derive_seed, load_checkpoint, save_checkpoint, Adam, AdamConfig, NumericsError, Rng, Tape,
};

pub const CONFIG_FILE: &str = "config.json";
pub const VOCAB_FILE: &str = "vocab.txt";
pub const BEST_DIR: &str = "best";
pub const LOG_FILE: &str = "train_log.jsonl";

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        source: serde_json::Error,
    },
    #[error("training set is empty")]
    EmptyTrainingSet,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> TrainError + '_ {
    move |source| TrainError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub teacher_forcing: f64,
    /// Fraction of `max_steps` over which the KL weight ramps from 0 to
    /// `kl_max_weight`.
    pub kl_ramp_fraction: f64,
    /// Final KL weight; 1 gives the plain evidence lower bound.
    pub kl_max_weight: f64,
    pub lr: f64,
    pub max_steps: u64,
    pub seed: u64,
    pub eval_every: u64,
    /// Evaluations without dev improvement before the learning rate halves.
    pub patience: usize,
    /// Global gradient-norm cap; `None` disables clipping.
    pub clip_norm: Option<f64>,
    pub reduction: Reduction,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 32,
            teacher_forcing: 0.5,
            kl_ramp_fraction: 0.5,
            kl_max_weight: 1.0,
            lr: 1e-3,
            max_steps: 10_000,
            seed: 7,
            eval_every: 200,
            patience: 3,
            clip_norm: Some(5.0),
            reduction: Reduction::Mean,
        }
    }
}

impl TrainConfig {
    pub fn ramp_steps(&self) -> u64 {
        (self.kl_ramp_fraction * self.max_steps as f64).round() as u64
    }
}

/// One line of the training log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub step: u64,
    pub loss: f64,
    pub nll: f64,
    pub kl: f64,
    pub kl_weight: f64,
    pub lr: f64,
    pub grad_norm: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dev: Option<BatchStats>,
}

/// Stateful trainer; each call to [`Trainer::train_step`] consumes one batch.
pub struct Trainer {
    pub model: MwpModel,
    pub config: TrainConfig,
    adam: Adam,
    step: u64,
    epoch: u64,
    order: Vec<usize>,
    cursor: usize,
    best_dev: f64,
    stale_evals: usize,
}

impl Trainer {
    pub fn new(model: MwpModel, config: TrainConfig) -> Self {
        let adam = Adam::new(AdamConfig {
            lr: config.lr,
            ..AdamConfig::default()
        });
        Self {
            model,
            config,
            adam,
            step: 0,
            epoch: 0,
            order: Vec::new(),
            cursor: 0,
            best_dev: f64::INFINITY,
            stale_evals: 0,
        }
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn lr(&self) -> f64 {
        self.adam.config.lr
    }

    pub fn current_kl_weight(&self) -> f64 {
        self.config.kl_max_weight * kl_weight(self.step, self.config.ramp_steps())
    }

    fn next_batch(&mut self, len: usize) -> Vec<usize> {
        let size = self.config.batch_size.clamp(1, len);
        if self.order.len() != len || self.cursor >= len {
            self.order = (0..len).collect();
            Rng::new(derive_seed(self.config.seed, 3, self.epoch)).shuffle(&mut self.order);
            self.epoch += 1;
            self.cursor = 0;
        }
        let end = (self.cursor + size).min(len);
        let batch = self.order[self.cursor..end].to_vec();
        self.cursor = end;
        batch
    }

    /// Forward, backward and one Adam update on the next batch.
    pub fn train_step(&mut self, data: &[TrainExample]) -> Result<LogRecord, TrainError> {
        if data.is_empty() {
            return Err(TrainError::EmptyTrainingSet);
        }
        let batch: Vec<&TrainExample> = self.next_batch(data.len()).into_iter().map(|i| &data[i]).collect();
        let settings = LossSettings {
            teacher_forcing: self.config.teacher_forcing,
            kl_weight: self.current_kl_weight(),
            posterior_mean: false,
            reduction: self.config.reduction,
        };
        let mut rng = Rng::new(derive_seed(self.config.seed, 2, self.step));
        let mut tape = Tape::with_params(&self.model.store);
        let (loss, stats) = batch_loss(&mut tape, &self.model, &batch, &settings, &mut rng)?;
        let mut grads = tape.backward(loss)?.into_params();
        let grad_norm = match self.config.clip_norm {
            Some(max) => clip_global_norm(&mut grads, max),
            None => grads.values().map(|g| g.sq_norm()).sum::<f64>().sqrt(),
        };
        self.adam.step(&mut self.model.store, &grads)?;
        self.step += 1;
        Ok(LogRecord {
            step: self.step,
            loss: stats.loss,
            nll: stats.nll_per_token,
            kl: stats.kl,
            kl_weight: settings.kl_weight,
            lr: self.lr(),
            grad_norm,
            dev: None,
        })
    }

    /// Records a dev loss; returns true when it is a new best. Halves the
    /// learning rate after `patience` evaluations without improvement.
    pub fn observe_dev_loss(&mut self, loss: f64) -> bool {
        if loss < self.best_dev {
            self.best_dev = loss;
            self.stale_evals = 0;
            return true;
        }
        self.stale_evals += 1;
        if self.stale_evals >= self.config.patience {
            self.adam.config.lr *= 0.5;
            self.stale_evals = 0;
            log::info!("dev loss plateaued; learning rate now {}", self.adam.config.lr);
        }
        false
    }

    /// Full training run with periodic evaluation and checkpoints under
    /// `out_dir`. `on_record` sees every log record.
    pub fn fit(
        &mut self,
        train: &[TrainExample],
        dev: &[TrainExample],
        vocab: &Vocab,
        out_dir: &Path,
        mut on_record: impl FnMut(&LogRecord),
    ) -> Result<(), TrainError> {
        fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
        let log_path = out_dir.join(LOG_FILE);
        let mut log_lines = String::new();
        while self.step < self.config.max_steps {
            let mut record = self.train_step(train)?;
            let at_eval = self.step % self.config.eval_every.max(1) == 0 || self.step == self.config.max_steps;
            if at_eval {
                let eval_set = if dev.is_empty() { train } else { dev };
                let stats = evaluate(&self.model, eval_set, self.config.batch_size)?;
                let improved = self.observe_dev_loss(stats.loss);
                record.dev = Some(stats);
                let dir = out_dir.join(format!("step_{:06}", self.step));
                save_model(&self.model, vocab, &dir)?;
                if improved {
                    save_model(&self.model, vocab, &out_dir.join(BEST_DIR))?;
                }
            }
            on_record(&record);
            log_lines.push_str(&serde_json::to_string(&record).expect("log record serializes"));
            log_lines.push('\n');
            if at_eval {
                fs::write(&log_path, &log_lines).map_err(io_err(&log_path))?;
            }
        }
        fs::write(&log_path, &log_lines).map_err(io_err(&log_path))?;
        Ok(())
    }
}

/// Deterministic scoring: teacher forcing, posterior mean, KL weight 1.
pub fn evaluate(model: &MwpModel, data: &[TrainExample], chunk: usize) -> Result<BatchStats, NumericsError> {
    let settings = LossSettings::evaluation(1.0);
    let mut rng = Rng::new(0);
    let mut total = BatchStats::default();
    let mut nll_sum = 0.0;
    let mut loss_sum = 0.0;
    for part in data.chunks(chunk.max(1)) {
        let batch: Vec<&TrainExample> = part.iter().collect();
        let mut tape = Tape::inference(&model.store);
        let (_, stats) = batch_loss(&mut tape, model, &batch, &settings, &mut rng)?;
        loss_sum += stats.loss * part.len() as f64;
        nll_sum += stats.nll_per_token * stats.tokens as f64;
        total.kl += stats.kl * part.len() as f64;
        total.tokens += stats.tokens;
        total.correct += stats.correct;
    }
    let n = data.len().max(1) as f64;
    total.loss = loss_sum / n;
    total.kl /= n;
    total.nll_per_token = nll_sum / total.tokens.max(1) as f64;
    Ok(total)
}

/// Writes parameters, model configuration and vocabulary to `dir`.
pub fn save_model(model: &MwpModel, vocab: &Vocab, dir: &Path) -> Result<(), TrainError> {
    save_checkpoint(&model.store, dir)?;
    let config_path = dir.join(CONFIG_FILE);
    let json = serde_json::to_string_pretty(&model.config).expect("config serializes");
    fs::write(&config_path, json).map_err(io_err(&config_path))?;
    vocab.save(&dir.join(VOCAB_FILE))?;
    Ok(())
}

/// Reads a directory written by [`save_model`].
pub fn load_model(dir: &Path) -> Result<(MwpModel, Vocab), TrainError> {
    let config_path = dir.join(CONFIG_FILE);
    let text = fs::read_to_string(&config_path).map_err(io_err(&config_path))?;
    let config: ModelConfig = serde_json::from_str(&text).map_err(|source| TrainError::Json {
        path: config_path.clone(),
        source,
    })?;
    let store = load_checkpoint(dir)?;
    let model = MwpModel::from_store(config, store)?;
    let vocab = Vocab::load(&dir.join(VOCAB_FILE))?;
    if vocab.len() != model.vocab_size() {
        return Err(NumericsError::Checkpoint(format!(
            "vocabulary has {} tokens but the embedding has {} rows",
            vocab.len(),
            model.vocab_size()
        ))
        .into());
    }
    Ok((model, vocab))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn learning_rate_halves_after_patience() {
        let model = MwpModel::new(ModelConfig::tiny(), 10, 1);
        let mut t = Trainer::new(model, TrainConfig::default());
        assert!(t.observe_dev_loss(1.0));
        assert!(!t.observe_dev_loss(1.0));
        assert!(!t.observe_dev_loss(1.5));
        assert_eq!(t.lr(), 1e-3);
        assert!(!t.observe_dev_loss(1.2));
        assert_eq!(t.lr(), 5e-4);
        assert!(t.observe_dev_loss(0.5));
    }

    #[test]
    fn epochs_cover_every_example_once() {
        let model = MwpModel::new(ModelConfig::tiny(), 10, 1);
        let mut t = Trainer::new(
            model,
            TrainConfig {
                batch_size: 4,
                ..TrainConfig::default()
            },
        );
        let mut seen: Vec<usize> = (0..3).flat_map(|_| t.next_batch(10)).collect();
        assert_eq!(seen.len(), 10);
        seen.sort_unstable();
        assert_eq!(seen, (0..10).collect::<Vec<_>>());
    }
}
