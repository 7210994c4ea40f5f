//! Replacing numbers and bound entities with slot tokens, and back.

use std::collections::BTreeMap;
use std::sync::OnceLock;

use num_bigint::BigInt;
use num_rational::BigRational;
use regex::Regex;

use crate::cskg::VariableBinding;
use crate::eqlang::{format_rational, LinearSystem, Slot, X_NODE, Y_NODE};

use super::vocab::{split_specials, Piece};
use super::CorpusError;

/// Delexicalized text as a sequence of plain-text chunks and slot tokens.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Delexed {
    pub segments: Vec<String>,
    /// Slot token to the surface it replaced.
    pub slot_map: BTreeMap<String, String>,
    pub diagnostics: Vec<String>,
}

impl Delexed {
    pub fn text(&self) -> String {
        self.segments.concat()
    }
}

fn number_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\d+(?:\.\d+)?").expect("valid regex"))
}

fn parse_decimal(s: &str) -> BigRational {
    let (int, frac) = s.split_once('.').unwrap_or((s, ""));
    let numer: BigInt = format!("{int}{frac}").parse().expect("regex digits");
    BigRational::new(numer, BigInt::from(10).pow(frac.len() as u32))
}

/// Every token a slot map may need to fill.
pub fn slot_tokens() -> Vec<String> {
    let mut out: Vec<String> = Slot::ALL.iter().map(|s| s.token()).collect();
    out.push(X_NODE.to_string());
    out.push(Y_NODE.to_string());
    out
}

struct Span {
    start: usize,
    end: usize,
    kind: SpanKind,
}

enum SpanKind {
    Number(BigRational),
    /// Entity token and the byte length of its lemma part.
    Entity(&'static str, usize),
}

fn is_word_char(c: Option<char>) -> bool {
    c.is_some_and(|c| c.is_alphanumeric() || c == '_' || c == '-')
}

fn entity_spans(text: &str, lemma: &str, token: &'static str, out: &mut Vec<Span>) {
    if lemma.is_empty() {
        return;
    }
    let lower = text.to_lowercase();
    // Lowercasing can change byte lengths outside ASCII; fall back to no
    // matches rather than misalign spans.
    if lower.len() != text.len() {
        return;
    }
    let lemma_l = lemma.to_lowercase();
    let mut from = 0;
    while let Some(pos) = lower[from..].find(&lemma_l) {
        let start = from + pos;
        let lemma_end = start + lemma_l.len();
        from = start + 1;
        if is_word_char(text[..start].chars().next_back()) {
            continue;
        }
        for suffix in ["es", "s", ""] {
            if lower[lemma_end..].starts_with(suffix) {
                let end = lemma_end + suffix.len();
                if !is_word_char(text[end..].chars().next()) {
                    out.push(Span {
                        start,
                        end,
                        kind: SpanKind::Entity(token, lemma_l.len()),
                    });
                    break;
                }
            }
        }
    }
}

/// Replaces quantities equal to a slot value and mentions of the bound
/// entities. Plural suffixes (`s`, `es`) stay as text after the entity
/// token, so relexicalization is exact.
pub fn delexicalize(text: &str, system: &LinearSystem, binding: &VariableBinding) -> Delexed {
    let slot_values = system.slot_values();
    let mut spans = Vec::new();
    for m in number_re().find_iter(text) {
        spans.push(Span {
            start: m.start(),
            end: m.end(),
            kind: SpanKind::Number(parse_decimal(m.as_str())),
        });
    }
    entity_spans(text, &binding.x, X_NODE, &mut spans);
    entity_spans(text, &binding.y, Y_NODE, &mut spans);
    spans.sort_by(|a, b| a.start.cmp(&b.start).then(b.end.cmp(&a.end)));

    let mut out = Delexed::default();
    let mut used: Vec<Slot> = Vec::new();
    let mut cursor = 0;
    let push_text = |out: &mut Delexed, s: &str| {
        if s.is_empty() {
            return;
        }
        match out.segments.last_mut() {
            Some(last) if !last.starts_with('<') || !last.ends_with('>') => last.push_str(s),
            _ => out.segments.push(s.to_string()),
        }
    };
    for span in spans {
        if span.start < cursor {
            continue;
        }
        let surface = &text[span.start..span.end];
        let (token, replaced, suffix) = match &span.kind {
            SpanKind::Number(v) => {
                let candidates: Vec<Slot> = slot_values
                    .iter()
                    .filter(|(_, sv)| sv == v)
                    .map(|(s, _)| *s)
                    .collect();
                let chosen = candidates
                    .iter()
                    .find(|s| !used.contains(s))
                    .or(candidates.first())
                    .copied();
                match chosen {
                    Some(s) => {
                        if !used.contains(&s) {
                            used.push(s);
                        }
                        (s.token(), surface, "")
                    }
                    None => {
                        out.diagnostics
                            .push(format!("number {surface} matches no equation slot"));
                        continue;
                    }
                }
            }
            SpanKind::Entity(tok, lemma_len) => (
                tok.to_string(),
                &surface[..*lemma_len],
                &surface[*lemma_len..],
            ),
        };
        match out.slot_map.get(&token) {
            Some(prev) if prev != replaced => {
                out.diagnostics.push(format!(
                    "{surface} would fill {token}, which already stands for {prev}"
                ));
                continue;
            }
            Some(_) => {}
            None => {
                out.slot_map.insert(token.clone(), replaced.to_string());
            }
        }
        push_text(&mut out, &text[cursor..span.start]);
        out.segments.push(token);
        push_text(&mut out, suffix);
        cursor = span.end;
    }
    push_text(&mut out, &text[cursor..]);
    out
}

/// Fills every slot token; a slot without a map entry is an error.
pub fn relexicalize(text: &str, slot_map: &BTreeMap<String, String>) -> Result<String, CorpusError> {
    let specials = slot_tokens();
    let mut out = String::new();
    for piece in split_specials(text, &specials) {
        match piece {
            Piece::Text(s) => out.push_str(s),
            Piece::Special(tok) => match slot_map.get(tok) {
                Some(v) => out.push_str(v),
                None => return Err(CorpusError::MissingSlot(tok.to_string())),
            },
        }
    }
    Ok(out)
}

/// Like [`relexicalize`] but leaves unfilled slots verbatim, returning them.
pub fn relexicalize_lenient(text: &str, slot_map: &BTreeMap<String, String>) -> (String, Vec<String>) {
    let specials = slot_tokens();
    let mut out = String::new();
    let mut missing = Vec::new();
    for piece in split_specials(text, &specials) {
        match piece {
            Piece::Text(s) => out.push_str(s),
            Piece::Special(tok) => match slot_map.get(tok) {
                Some(v) => out.push_str(v),
                None => {
                    missing.push(tok.to_string());
                    out.push_str(tok);
                }
            },
        }
    }
    (out, missing)
}

/// Slot map for generation: every slot value of the system (implicit unit
/// coefficients included) and the binding lemmas.
pub fn generation_slot_map(system: &LinearSystem, binding: &VariableBinding) -> BTreeMap<String, String> {
    let mut map: BTreeMap<String, String> = system
        .slot_values_with_implicit()
        .into_iter()
        .map(|(s, v)| (s.token(), format_rational(&v)))
        .collect();
    map.insert(X_NODE.to_string(), binding.x.clone());
    map.insert(Y_NODE.to_string(), binding.y.clone());
    map
}
