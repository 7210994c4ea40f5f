//! BLEU-4, ROUGE-L and Self-BLEU on whitespace/punctuation tokens.
//!
//! Every score is reported on a 0-100 scale. Zero n-gram precisions are
//! smoothed by adding one to their numerator and denominator.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("self-BLEU needs exactly 4 samples, got {0}")]
    SelfBleuArity(usize),
    #[error("no references given")]
    NoReferences,
    #[error("{predictions} predictions but {references} references")]
    LengthMismatch { predictions: usize, references: usize },
}

pub const MAX_ORDER: usize = 4;

/// Lowercases and splits on whitespace, with each punctuation character as
/// its own token.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for word in text.split_whitespace() {
        let mut cur = String::new();
        for ch in word.chars() {
            if ch.is_ascii_punctuation() {
                if !cur.is_empty() {
                    out.push(std::mem::take(&mut cur));
                }
                out.push(ch.to_string());
            } else {
                cur.extend(ch.to_lowercase());
            }
        }
        if !cur.is_empty() {
            out.push(cur);
        }
    }
    out
}

fn ngram_counts<T: AsRef<str>>(tokens: &[T], n: usize) -> HashMap<Vec<&str>, usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *counts.entry(w.iter().map(AsRef::as_ref).collect()).or_insert(0) += 1;
        }
    }
    counts
}

/// Clipped matches and candidate n-gram totals for orders 1..=4, plus the
/// candidate length and the closest reference length.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct BleuStats {
    pub matches: [usize; MAX_ORDER],
    pub totals: [usize; MAX_ORDER],
    pub cand_len: usize,
    pub ref_len: usize,
}

impl BleuStats {
    pub fn collect<T: AsRef<str>>(candidate: &[T], references: &[Vec<T>]) -> Self {
        let mut s = BleuStats {
            cand_len: candidate.len(),
            ref_len: closest_ref_len(candidate.len(), references),
            ..Default::default()
        };
        for n in 1..=MAX_ORDER {
            let cand = ngram_counts(candidate, n);
            let mut max_ref: HashMap<Vec<&str>, usize> = HashMap::new();
            for r in references {
                for (g, c) in ngram_counts(r, n) {
                    let e = max_ref.entry(g).or_insert(0);
                    *e = (*e).max(c);
                }
            }
            s.totals[n - 1] = cand.values().sum();
            s.matches[n - 1] = cand
                .iter()
                .map(|(g, c)| (*c).min(max_ref.get(g).copied().unwrap_or(0)))
                .sum();
        }
        s
    }

    fn add(&mut self, other: &BleuStats) {
        for n in 0..MAX_ORDER {
            self.matches[n] += other.matches[n];
            self.totals[n] += other.totals[n];
        }
        self.cand_len += other.cand_len;
        self.ref_len += other.ref_len;
    }

    /// BLEU-4 from the counts, smoothing zero precisions with add-one.
    pub fn score(&self) -> f64 {
        if self.cand_len == 0 {
            return 0.0;
        }
        let mut log_sum = 0.0;
        for n in 0..MAX_ORDER {
            let (m, t) = (self.matches[n] as f64, self.totals[n] as f64);
            let p = if self.matches[n] == 0 { (m + 1.0) / (t + 1.0) } else { m / t };
            log_sum += p.ln();
        }
        let (c, r) = (self.cand_len as f64, self.ref_len as f64);
        let bp = if c > r { 1.0 } else { (1.0 - r / c).exp() };
        100.0 * bp * (log_sum / MAX_ORDER as f64).exp()
    }
}

/// Reference length closest to `cand_len`; ties go to the shorter one.
fn closest_ref_len<T>(cand_len: usize, references: &[Vec<T>]) -> usize {
    references
        .iter()
        .map(Vec::len)
        .min_by_key(|&r| (r.abs_diff(cand_len), r))
        .unwrap_or(0)
}

/// Sentence BLEU-4. An empty candidate scores 0 (with a warning).
pub fn bleu4<T: AsRef<str>>(candidate: &[T], references: &[Vec<T>]) -> Result<f64, MetricsError> {
    if references.is_empty() {
        return Err(MetricsError::NoReferences);
    }
    if candidate.is_empty() {
        log::warn!("empty candidate scores BLEU 0");
        return Ok(0.0);
    }
    Ok(BleuStats::collect(candidate, references).score())
}

/// Corpus BLEU-4: counts are summed over sentences before the precisions
/// and brevity penalty are formed.
pub fn corpus_bleu4<T: AsRef<str>>(pairs: &[(Vec<T>, Vec<Vec<T>>)]) -> Result<f64, MetricsError> {
    let mut total = BleuStats::default();
    for (cand, refs) in pairs {
        if refs.is_empty() {
            return Err(MetricsError::NoReferences);
        }
        total.add(&BleuStats::collect(cand, refs));
    }
    Ok(total.score())
}

/// Length of the longest common subsequence.
pub fn lcs_len<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut prev = vec![0; b.len() + 1];
    let mut cur = vec![0; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y { prev[j] + 1 } else { prev[j + 1].max(cur[j]) };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// ROUGE-L F1 against one reference.
pub fn rouge_l<T: PartialEq>(candidate: &[T], reference: &[T]) -> f64 {
    if candidate.is_empty() || reference.is_empty() {
        return 0.0;
    }
    let l = lcs_len(candidate, reference) as f64;
    if l == 0.0 {
        return 0.0;
    }
    let p = l / candidate.len() as f64;
    let r = l / reference.len() as f64;
    100.0 * 2.0 * p * r / (p + r)
}

/// Best ROUGE-L F1 over several references.
pub fn rouge_l_multi<T: PartialEq>(candidate: &[T], references: &[Vec<T>]) -> f64 {
    references
        .iter()
        .map(|r| rouge_l(candidate, r))
        .fold(0.0, f64::max)
}

/// Mean BLEU-4 of each of four samples against the other three.
pub fn self_bleu<T: AsRef<str> + Clone>(samples: &[Vec<T>]) -> Result<f64, MetricsError> {
    if samples.len() != 4 {
        return Err(MetricsError::SelfBleuArity(samples.len()));
    }
    let mut total = 0.0;
    for i in 0..samples.len() {
        let rest: Vec<Vec<T>> = samples
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != i)
            .map(|(_, s)| s.clone())
            .collect();
        total += bleu4(&samples[i], &rest)?;
    }
    Ok(total / samples.len() as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleScores {
    pub bleu4: f64,
    pub rouge_l: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub self_bleu: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Corpus-level BLEU-4.
    pub bleu4: f64,
    /// Mean sentence ROUGE-L F1.
    pub rouge_l: f64,
    /// Mean Self-BLEU over inputs that supplied four samples.
    pub self_bleu: Option<f64>,
    pub count: usize,
    pub samples: Vec<SampleScores>,
}

/// One prediction: the primary text and optionally four samples for
/// Self-BLEU.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub text: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub samples: Vec<String>,
}

/// One gold record: `text` plus optional extra references.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Reference {
    pub text: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub references: Vec<String>,
}

impl Reference {
    fn all(&self) -> Vec<Vec<String>> {
        std::iter::once(&self.text)
            .chain(&self.references)
            .map(|t| tokenize(t))
            .collect()
    }
}

pub fn evaluate(predictions: &[Prediction], references: &[Reference]) -> Result<EvalReport, MetricsError> {
    if predictions.len() != references.len() {
        return Err(MetricsError::LengthMismatch {
            predictions: predictions.len(),
            references: references.len(),
        });
    }
    let mut pairs = Vec::with_capacity(predictions.len());
    let mut samples = Vec::with_capacity(predictions.len());
    for (p, r) in predictions.iter().zip(references) {
        let cand = tokenize(&p.text);
        let refs = r.all();
        let self_bleu = if p.samples.is_empty() {
            None
        } else {
            let toks: Vec<Vec<String>> = p.samples.iter().map(|s| tokenize(s)).collect();
            Some(self_bleu(&toks)?)
        };
        samples.push(SampleScores {
            bleu4: bleu4(&cand, &refs)?,
            rouge_l: rouge_l_multi(&cand, &refs),
            self_bleu,
        });
        pairs.push((cand, refs));
    }
    let n = samples.len();
    let self_scores: Vec<f64> = samples.iter().filter_map(|s| s.self_bleu).collect();
    Ok(EvalReport {
        bleu4: if n == 0 { 0.0 } else { corpus_bleu4(&pairs)? },
        rouge_l: if n == 0 { 0.0 } else { samples.iter().map(|s| s.rouge_l).sum::<f64>() / n as f64 },
        self_bleu: (!self_scores.is_empty()).then(|| self_scores.iter().sum::<f64>() / self_scores.len() as f64),
        count: n,
        samples,
    })
}

impl EvalReport {
    /// Plain-text summary table.
    pub fn table(&self) -> String {
        let self_bleu = self.self_bleu.map_or_else(|| "-".to_string(), |v| format!("{v:.2}"));
        format!(
            "metric     score\nBLEU-4     {:.2}\nROUGE-L    {:.2}\nSelf-BLEU  {}\nsamples    {}\n",
            self.bleu4, self.rouge_l, self_bleu, self.count
        )
    }
}
