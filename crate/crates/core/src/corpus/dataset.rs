//! Dataset records, JSON-lines I/O and splitting.

use std::collections::BTreeMap;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::cskg::VariableBinding;
use crate::eqlang::{parse_system, solve_system, LinearSystem, Shape, Solution};
use crate::numerics::Rng;

use super::delex::{delexicalize, Delexed};
use super::CorpusError;

/// One dataset line.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sample {
    pub equations: String,
    pub topic: String,
    pub bind_x: String,
    pub bind_y: String,
    pub text: String,
}

/// A parsed, solved and delexicalized sample.
#[derive(Clone, Debug)]
pub struct MwpSample {
    pub raw: Sample,
    pub system: LinearSystem,
    pub shape: Shape,
    pub solution: Solution,
    pub binding: VariableBinding,
    pub delexed: Delexed,
}

impl MwpSample {
    pub fn prepare(raw: Sample) -> Result<Self, CorpusError> {
        let system = parse_system(&raw.equations)?;
        let solution = solve_system(&system)?;
        let binding = VariableBinding {
            x: raw.bind_x.clone(),
            y: raw.bind_y.clone(),
        };
        let delexed = delexicalize(&raw.text, &system, &binding);
        Ok(Self {
            shape: system.shape(),
            raw,
            system,
            solution,
            binding,
            delexed,
        })
    }

    pub fn slot_map(&self) -> &BTreeMap<String, String> {
        &self.delexed.slot_map
    }
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, CorpusError> {
    let text = std::fs::read_to_string(path).map_err(|e| CorpusError::io(path, e))?;
    parse_jsonl(&text).map_err(|e| match e {
        CorpusError::Format(m) => CorpusError::Format(format!("{}: {m}", path.display())),
        other => other,
    })
}

pub fn parse_jsonl<T: DeserializeOwned>(text: &str) -> Result<Vec<T>, CorpusError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| CorpusError::Format(format!("line {}: {e}", i + 1)))
        })
        .collect()
}

pub fn to_jsonl<T: Serialize>(items: &[T]) -> String {
    let mut out = String::new();
    for item in items {
        out.push_str(&serde_json::to_string(item).expect("serializable"));
        out.push('\n');
    }
    out
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<(), CorpusError> {
    std::fs::write(path, to_jsonl(items)).map_err(|e| CorpusError::io(path, e))
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Split<T> {
    pub train: Vec<T>,
    pub dev: Vec<T>,
    pub test: Vec<T>,
}

/// Seeded shuffle into train/dev/test. Split sizes are the rounded
/// fractions of the input size; each split keeps input order.
pub fn split<T>(items: Vec<T>, dev_fraction: f64, test_fraction: f64, seed: u64) -> Result<Split<T>, CorpusError> {
    let valid = |f: f64| (0.0..1.0).contains(&f);
    if !valid(dev_fraction) || !valid(test_fraction) || dev_fraction + test_fraction >= 1.0 {
        return Err(CorpusError::EmptySplit(format!(
            "fractions ({dev_fraction}, {test_fraction}) must be in [0, 1) and sum below 1"
        )));
    }
    let n = items.len();
    let n_dev = (n as f64 * dev_fraction).round() as usize;
    let n_test = (n as f64 * test_fraction).round() as usize;
    if (dev_fraction > 0.0 && n_dev == 0) || (test_fraction > 0.0 && n_test == 0) || n_dev + n_test >= n {
        return Err(CorpusError::EmptySplit(format!(
            "{n} items cannot fill dev {n_dev} / test {n_test} and leave training data"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    Rng::new(seed).shuffle(&mut order);
    let mut which = vec![0u8; n];
    for &i in &order[..n_dev] {
        which[i] = 1;
    }
    for &i in &order[n_dev..n_dev + n_test] {
        which[i] = 2;
    }
    let mut out = Split {
        train: Vec::new(),
        dev: Vec::new(),
        test: Vec::new(),
    };
    for (item, w) in items.into_iter().zip(which) {
        match w {
            1 => out.dev.push(item),
            2 => out.test.push(item),
            _ => out.train.push(item),
        }
    }
    Ok(out)
}
