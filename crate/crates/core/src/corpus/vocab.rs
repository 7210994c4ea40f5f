//! Token vocabulary with byte-pair-encoded text.
//!
//! Text is split sentencepiece-style: spaces become `▁` and every word
//! after the first starts with `▁`. Special tokens (`<m>`, `<x_entity>`, ...)
//! are recognised in text and kept atomic; they never take part in merges.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::path::Path;

use crate::eqlang::{Slot, DUMMY_NODE, RES_NODE, X_NODE, Y_NODE};

use super::CorpusError;

pub const PAD: &str = "<pad>";
pub const BOS: &str = "<bos>";
pub const EOS: &str = "<eos>";
pub const UNK: &str = "<unk>";
pub const PAD_ID: usize = 0;
pub const BOS_ID: usize = 1;
pub const EOS_ID: usize = 2;
pub const UNK_ID: usize = 3;

/// Word-boundary marker replacing spaces.
pub const SPACE: char = '\u{2581}';

/// Atomic tokens in id order: control tokens, slots, structural nodes.
pub fn special_tokens() -> Vec<String> {
    let mut out: Vec<String> = [PAD, BOS, EOS, UNK].iter().map(|s| s.to_string()).collect();
    out.extend(Slot::ALL.iter().map(|s| s.token()));
    out.extend([X_NODE, Y_NODE, DUMMY_NODE, RES_NODE].iter().map(|s| s.to_string()));
    out
}

/// A piece of text: either plain characters or a special token.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Piece<'a> {
    Text(&'a str),
    Special(&'a str),
}

/// Splits text at special tokens.
pub fn split_specials<'a>(text: &'a str, specials: &[String]) -> Vec<Piece<'a>> {
    let mut out = Vec::new();
    let mut start = 0;
    let bytes = text.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'<' {
            if let Some(tok) = specials.iter().find(|s| text[i..].starts_with(s.as_str())) {
                if start < i {
                    out.push(Piece::Text(&text[start..i]));
                }
                out.push(Piece::Special(&text[i..i + tok.len()]));
                i += tok.len();
                start = i;
                continue;
            }
        }
        i += 1;
    }
    if start < text.len() {
        out.push(Piece::Text(&text[start..]));
    }
    out
}

/// Splits plain text into words of characters, each word after a space
/// starting with the boundary marker.
fn words(text: &str) -> Vec<Vec<String>> {
    let mut out: Vec<Vec<String>> = Vec::new();
    for c in text.chars() {
        let c = if c == ' ' { SPACE } else { c };
        if c == SPACE || out.is_empty() {
            out.push(Vec::new());
        }
        out.last_mut().expect("non-empty").push(c.to_string());
    }
    out
}

fn apply_merge(word: &mut Vec<String>, a: &str, b: &str) {
    let mut i = 0;
    while i + 1 < word.len() {
        if word[i] == a && word[i + 1] == b {
            let merged = format!("{a}{b}");
            word[i] = merged;
            word.remove(i + 1);
        }
        i += 1;
    }
}

/// Learns `num_merges` merges: repeatedly the most frequent adjacent pair,
/// ties going to the lexicographically smallest pair.
pub fn train_bpe(texts: &[String], specials: &[String], num_merges: usize) -> Vec<(String, String)> {
    let mut counts: BTreeMap<Vec<String>, usize> = BTreeMap::new();
    for t in texts {
        for piece in split_specials(t, specials) {
            if let Piece::Text(s) = piece {
                for w in words(s) {
                    *counts.entry(w).or_default() += 1;
                }
            }
        }
    }
    let mut vocab: Vec<(Vec<String>, usize)> = counts.into_iter().collect();
    let mut merges = Vec::new();
    for _ in 0..num_merges {
        let mut pairs: HashMap<(&str, &str), usize> = HashMap::new();
        for (w, n) in &vocab {
            for p in w.windows(2) {
                *pairs.entry((&p[0], &p[1])).or_default() += n;
            }
        }
        let best = pairs
            .into_iter()
            .max_by(|(pa, ca), (pb, cb)| ca.cmp(cb).then_with(|| pb.cmp(pa)));
        let Some(((a, b), _)) = best else { break };
        let (a, b) = (a.to_string(), b.to_string());
        for (w, _) in vocab.iter_mut() {
            apply_merge(w, &a, &b);
        }
        merges.push((a, b));
    }
    merges
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
    specials: Vec<String>,
    symbols: Vec<String>,
    alphabet: Vec<String>,
    merges: Vec<(String, String)>,
    merge_rank: HashMap<(String, String), usize>,
}

impl Vocab {
    /// Assembles a vocabulary. `symbols` are graph-only tokens (relation and
    /// entity names); the alphabet is every character of `texts`.
    pub fn build(symbols: &[String], texts: &[String], num_merges: usize) -> Self {
        let specials = special_tokens();
        let mut chars: Vec<char> = texts
            .iter()
            .flat_map(|t| {
                split_specials(t, &specials)
                    .into_iter()
                    .filter_map(|p| match p {
                        Piece::Text(s) => Some(s.chars().collect::<Vec<_>>()),
                        Piece::Special(_) => None,
                    })
                    .flatten()
                    .collect::<Vec<_>>()
            })
            .map(|c| if c == ' ' { SPACE } else { c })
            .filter(|c| !c.is_control())
            .collect();
        chars.push(SPACE);
        chars.sort_unstable();
        chars.dedup();
        let alphabet = chars.into_iter().map(String::from).collect();
        let merges = train_bpe(texts, &specials, num_merges);
        Self::from_parts(specials, symbols.to_vec(), alphabet, merges)
    }

    fn from_parts(
        specials: Vec<String>,
        symbols: Vec<String>,
        alphabet: Vec<String>,
        merges: Vec<(String, String)>,
    ) -> Self {
        let mut v = Vocab {
            tokens: Vec::new(),
            index: HashMap::new(),
            specials: specials.clone(),
            symbols: symbols.clone(),
            alphabet: alphabet.clone(),
            merge_rank: merges
                .iter()
                .enumerate()
                .map(|(i, m)| (m.clone(), i))
                .collect(),
            merges: merges.clone(),
        };
        let merged = merges.iter().map(|(a, b)| format!("{a}{b}"));
        for t in specials
            .into_iter()
            .chain(symbols)
            .chain(alphabet)
            .chain(merged)
        {
            if !v.index.contains_key(&t) {
                v.index.insert(t.clone(), v.tokens.len());
                v.tokens.push(t);
            }
        }
        v
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: usize) -> &str {
        &self.tokens[id]
    }

    pub fn specials(&self) -> &[String] {
        &self.specials
    }

    pub fn merges(&self) -> &[(String, String)] {
        &self.merges
    }

    /// Ids for text; characters outside the alphabet map to `<unk>`.
    pub fn encode(&self, text: &str) -> Vec<usize> {
        let mut out = Vec::new();
        let mut unknown = 0;
        for piece in split_specials(text, &self.specials) {
            match piece {
                Piece::Special(s) => out.push(self.index[s]),
                Piece::Text(s) => {
                    for mut w in words(s) {
                        self.merge_word(&mut w);
                        for sym in w {
                            match self.index.get(&sym) {
                                Some(&id) if !sym.chars().any(char::is_control) => out.push(id),
                                _ => {
                                    unknown += 1;
                                    out.push(UNK_ID);
                                }
                            }
                        }
                    }
                }
            }
        }
        if unknown > 0 {
            log::warn!("{unknown} unknown symbols in {text:?}");
        }
        out
    }

    fn merge_word(&self, w: &mut Vec<String>) {
        loop {
            let best = w
                .windows(2)
                .enumerate()
                .filter_map(|(i, p)| {
                    self.merge_rank
                        .get(&(p[0].clone(), p[1].clone()))
                        .map(|r| (*r, i))
                })
                .min();
            let Some((rank, _)) = best else { return };
            let (a, b) = self.merges[rank].clone();
            apply_merge(w, &a, &b);
        }
    }

    /// Text for ids; `<pad>`, `<bos>` and `<eos>` are dropped.
    pub fn decode(&self, ids: &[usize]) -> String {
        ids.iter()
            .filter(|&&i| i != PAD_ID && i != BOS_ID && i != EOS_ID)
            .map(|&i| self.tokens[i].as_str())
            .collect::<String>()
            .replace(SPACE, " ")
    }

    pub fn to_text(&self) -> String {
        let mut out = String::from("#special\n");
        for s in &self.specials {
            let _ = writeln!(out, "{s}");
        }
        out.push_str("#symbols\n");
        for s in &self.symbols {
            let _ = writeln!(out, "{s}");
        }
        out.push_str("#alphabet\n");
        for s in &self.alphabet {
            let _ = writeln!(out, "{s}");
        }
        out.push_str("#merges\n");
        for (a, b) in &self.merges {
            let _ = writeln!(out, "{a} {b}");
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, CorpusError> {
        let mut section = "";
        let (mut specials, mut symbols, mut alphabet, mut merges) =
            (Vec::new(), Vec::new(), Vec::new(), Vec::new());
        for (i, line) in text.lines().enumerate() {
            match line {
                "#special" | "#symbols" | "#alphabet" | "#merges" => {
                    section = line;
                    continue;
                }
                _ => {}
            }
            match section {
                "#special" => specials.push(line.to_string()),
                "#symbols" => symbols.push(line.to_string()),
                "#alphabet" => alphabet.push(line.to_string()),
                "#merges" => {
                    let (a, b) = line.split_once(' ').ok_or_else(|| {
                        CorpusError::Format(format!("vocab line {}: bad merge {line:?}", i + 1))
                    })?;
                    merges.push((a.to_string(), b.to_string()));
                }
                _ => {
                    return Err(CorpusError::Format(format!(
                        "vocab line {}: content before a section header",
                        i + 1
                    )))
                }
            }
        }
        if specials != special_tokens() {
            return Err(CorpusError::Format(
                "vocab special-token block does not match this build".into(),
            ));
        }
        Ok(Self::from_parts(specials, symbols, alphabet, merges))
    }

    pub fn save(&self, path: &Path) -> Result<(), CorpusError> {
        std::fs::write(path, self.to_text()).map_err(|e| CorpusError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self, CorpusError> {
        let text = std::fs::read_to_string(path).map_err(|e| CorpusError::io(path, e))?;
        Self::from_text(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn low_lower_first_merge() {
        let merges = train_bpe(&["low low lower".to_string()], &special_tokens(), 1);
        assert_eq!(merges, [("l".to_string(), "o".to_string())]);
    }

    #[test]
    fn zero_merges_is_character_level() {
        let v = Vocab::build(&[], &["ab ba".into()], 0);
        let ids = v.encode("ab ba");
        assert_eq!(ids.len(), 5);
        assert_eq!(v.decode(&ids), "ab ba");
    }

    #[test]
    fn specials_stay_atomic() {
        let texts = vec!["there are <m> heads and <m> legs <m>".to_string(); 3];
        let v = Vocab::build(&[], &texts, 50);
        assert!(v.merges().iter().all(|(a, b)| !a.contains('<') && !b.contains('<')));
        let ids = v.encode("there are <m> heads");
        assert!(ids.contains(&v.id("<m>").unwrap()));
    }

    #[test]
    fn unknown_glyph() {
        let v = Vocab::build(&[], &["abc".into()], 2);
        assert!(v.encode("a\u{1F40D}").contains(&UNK_ID));
        assert!(v.encode("").is_empty());
    }

    #[test]
    fn text_round_trip() {
        let v = Vocab::build(&["Add to res".into()], &["one two three".into()], 5);
        let back = Vocab::from_text(&v.to_text()).unwrap();
        assert_eq!(back, v);
    }
}
