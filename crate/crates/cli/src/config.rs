use std::path::{Path, PathBuf};

use anyhow::{ensure, Context, Result};
use mwpgen_core::generator::{DecodeConfig, ModelConfig};
use mwpgen_core::train::TrainConfig;
use serde::{Deserialize, Serialize};

pub const SEED_ENV: &str = "MWPGEN_SEED";
pub const DEFAULT_SEED: u64 = 7;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    /// Directory holding `train.jsonl`, `dev.jsonl` and `test.jsonl`.
    pub dataset: PathBuf,
    pub cskg: PathBuf,
    pub templates: PathBuf,
    /// Training output directory; `generate` reads its `best` subdirectory.
    pub checkpoint: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Self {
            dataset: "runs/data".into(),
            cskg: "data/cskg.tsv".into(),
            templates: "data/templates.jsonl".into(),
            checkpoint: "runs/model".into(),
        }
    }
}

/// Synthetic corpus and tokenizer settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusSettings {
    pub count: usize,
    pub dev_fraction: f64,
    pub test_fraction: f64,
    pub coef_range: (i64, i64),
    pub solution_range: (i64, i64),
    pub bpe_merges: usize,
    /// Training targets longer than this many tokens are truncated.
    pub max_target_len: usize,
}

impl Default for CorpusSettings {
    fn default() -> Self {
        Self {
            count: 5447,
            dev_fraction: 0.1,
            test_fraction: 0.1,
            coef_range: (2, 9),
            solution_range: (1, 20),
            bpe_merges: 1000,
            max_target_len: 120,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub paths: Paths,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub decode: DecodeConfig,
    pub corpus: CorpusSettings,
    /// Global seed; overrides `train.seed` when set.
    pub seed: Option<u64>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    /// File contents when a path is given, defaults otherwise.
    pub fn from_optional(path: Option<&Path>) -> Result<Self> {
        path.map_or_else(|| Ok(Self::default()), Self::load)
    }

    /// Seed precedence: flag, then config file, then `MWPGEN_SEED`, then the
    /// built-in default.
    pub fn resolve_seed(&mut self, flag: Option<u64>, env: Option<&str>) -> Result<u64> {
        let from_env = env
            .map(|v| v.trim().parse::<u64>().with_context(|| format!("{SEED_ENV}={v:?} is not a u64")))
            .transpose()?;
        let seed = flag.or(self.seed).or(from_env).unwrap_or(DEFAULT_SEED);
        self.seed = Some(seed);
        self.train.seed = seed;
        Ok(seed)
    }

    pub fn validate(&self) -> Result<()> {
        let m = &self.model;
        ensure!(
            m.embed_dim > 0 && m.hidden_dim > 0 && m.latent_dim > 0,
            "model dimensions must be positive"
        );
        let t = &self.train;
        ensure!(t.batch_size > 0, "batch size must be positive");
        for (name, v) in [
            ("teacher_forcing", t.teacher_forcing),
            ("kl_ramp_fraction", t.kl_ramp_fraction),
            ("dev_fraction", self.corpus.dev_fraction),
            ("test_fraction", self.corpus.test_fraction),
        ] {
            ensure!((0.0..=1.0).contains(&v), "{name} must lie in [0, 1], got {v}");
        }
        ensure!(t.lr > 0.0, "learning rate must be positive");
        ensure!(self.decode.beam_width > 0, "beam width must be positive");
        ensure!(self.decode.max_len > 0, "max_len must be positive");
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_the_reference_settings() {
        let c = RunConfig::default();
        assert_eq!((c.model.embed_dim, c.model.hidden_dim, c.model.latent_dim, c.model.hops), (128, 512, 128, 3));
        assert_eq!(c.train.batch_size, 32);
        assert_eq!(c.train.teacher_forcing, 0.5);
        assert_eq!(c.decode.beam_width, 5);
        c.validate().unwrap();
    }

    #[test]
    fn seed_precedence() {
        let mut c = RunConfig::default();
        assert_eq!(c.resolve_seed(None, None).unwrap(), DEFAULT_SEED);
        let mut c = RunConfig::default();
        assert_eq!(c.resolve_seed(None, Some("11")).unwrap(), 11);
        let mut c = RunConfig {
            seed: Some(5),
            ..RunConfig::default()
        };
        assert_eq!(c.resolve_seed(None, Some("11")).unwrap(), 5);
        assert_eq!(c.resolve_seed(Some(3), Some("11")).unwrap(), 3);
        assert_eq!(c.train.seed, 3);
        assert!(RunConfig::default().resolve_seed(None, Some("x")).is_err());
    }

    #[test]
    fn partial_files_fill_in_defaults() {
        let c: RunConfig = serde_json::from_str(r#"{"train": {"batch_size": 4}, "seed": 9}"#).unwrap();
        assert_eq!(c.train.batch_size, 4);
        assert_eq!(c.train.teacher_forcing, 0.5);
        assert_eq!(c.seed, Some(9));
        assert!(serde_json::from_str::<RunConfig>(r#"{"bogus": 1}"#).is_err());
    }

    #[test]
    fn invalid_fractions_are_rejected() {
        let mut c = RunConfig::default();
        c.train.teacher_forcing = 1.5;
        assert!(c.validate().is_err());
    }
}
