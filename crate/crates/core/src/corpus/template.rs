//! Template bank and synthetic corpus generation.

use std::collections::BTreeMap;
use std::sync::OnceLock;

use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::cskg::KnowledgeGraph;
use crate::eqlang::{
    check_solution, format_rational, instantiate, parse_shape, solve_system, Equation, LinearSystem,
    Op, Rhs, Shape, Slot, Variable,
};
use crate::numerics::{derive_seed, Rng};

use super::dataset::Sample;
use super::CorpusError;

/// One line of a template file.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TemplateRecord {
    pub template: String,
    pub shape: String,
    pub topic: String,
}

/// A validated template. Placeholders are `{a}`..`{q}` for slots and
/// `{x_entity}`, `{y_entity}`, `{x_entities}`, `{y_entities}` for the bound
/// entities (lemma and plural).
#[derive(Clone, Debug)]
pub struct Template {
    pub record: TemplateRecord,
    pub shape: Shape,
}

fn placeholder_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\{([a-z_]+)\}").expect("valid regex"))
}

const ENTITY_PLACEHOLDERS: [&str; 4] = ["x_entity", "y_entity", "x_entities", "y_entities"];

/// Slots with an explicit quantity in the shape.
pub fn explicit_slots(shape: &Shape) -> Vec<Slot> {
    let mut out = Vec::new();
    shape
        .map::<_, std::convert::Infallible>(|_, _, s| {
            out.push(*s);
            Ok(())
        })
        .expect("infallible");
    out.sort();
    out
}

/// Naive English plural.
pub fn plural(lemma: &str) -> String {
    let lower = lemma.to_lowercase();
    if ["s", "x", "z", "ch", "sh"].iter().any(|s| lower.ends_with(s)) {
        format!("{lemma}es")
    } else if lower.ends_with('y')
        && !lower[..lower.len() - 1].ends_with(['a', 'e', 'i', 'o', 'u'])
    {
        format!("{}ies", &lemma[..lemma.len() - 1])
    } else {
        format!("{lemma}s")
    }
}

impl Template {
    pub fn new(record: TemplateRecord) -> Result<Self, CorpusError> {
        let shape = parse_shape(&record.shape)?;
        let slots = explicit_slots(&shape);
        for cap in placeholder_re().captures_iter(&record.template) {
            let name = &cap[1];
            if ENTITY_PLACEHOLDERS.contains(&name) {
                continue;
            }
            let mut chars = name.chars();
            let slot = match (chars.next().and_then(Slot::from_letter), chars.next()) {
                (Some(s), None) => s,
                _ => {
                    return Err(CorpusError::Template(format!(
                        "unknown placeholder {{{name}}} in {:?}",
                        record.template
                    )))
                }
            };
            if !slots.contains(&slot) {
                return Err(CorpusError::Template(format!(
                    "placeholder {{{name}}} has no slot in shape {}",
                    record.shape
                )));
            }
        }
        Ok(Self { record, shape })
    }

    pub fn fill(&self, system: &LinearSystem, x: &str, y: &str) -> String {
        let values: BTreeMap<char, String> = system
            .slot_values()
            .into_iter()
            .map(|(s, v)| (s.letter(), format_rational(&v)))
            .collect();
        placeholder_re()
            .replace_all(&self.record.template, |cap: &regex::Captures| match &cap[1] {
                "x_entity" => x.to_string(),
                "y_entity" => y.to_string(),
                "x_entities" => plural(x),
                "y_entities" => plural(y),
                name => {
                    let c = name.chars().next().expect("non-empty");
                    values.get(&c).cloned().unwrap_or_default()
                }
            })
            .into_owned()
    }
}

pub fn parse_templates(text: &str) -> Result<Vec<Template>, CorpusError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: TemplateRecord = serde_json::from_str(line).map_err(|e| {
            CorpusError::Format(format!("template line {}: {e}", i + 1))
        })?;
        out.push(Template::new(rec)?);
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub count: usize,
    pub seed: u64,
    /// Inclusive range of explicit coefficients.
    pub coef_range: (i64, i64),
    /// Inclusive range of the solution values.
    pub solution_range: (i64, i64),
    pub max_tries: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            count: 1000,
            seed: 0,
            coef_range: (2, 9),
            solution_range: (1, 20),
            max_tries: 10_000,
        }
    }
}

fn int(v: i64) -> BigRational {
    BigRational::from_integer(v.into())
}

fn coef_value(
    coefs: &BTreeMap<Slot, BigRational>,
    slot: Option<Slot>,
) -> BigRational {
    slot.map_or_else(BigRational::one, |s| coefs[&s].clone())
}

fn lhs_value(
    eq: &Equation<Slot>,
    coefs: &BTreeMap<Slot, BigRational>,
    x: &BigRational,
    y: &BigRational,
) -> Option<BigRational> {
    let val = |t: &crate::eqlang::Term<Slot>| {
        coef_value(coefs, t.coef)
            * match t.var {
                Variable::X => x.clone(),
                Variable::Y => y.clone(),
            }
    };
    let mut v = val(&eq.first);
    if eq.negated {
        v = -v;
    }
    let (op, t) = eq.rest.as_ref()?;
    let w = val(t);
    Some(match op {
        Op::Add => v + w,
        Op::Sub => v - w,
        Op::Mul => v * w,
        Op::Div => v / w,
    })
}

/// Draws integer slot values for `shape` whose system has the positive
/// integer solution the draw started from.
pub fn sample_system(
    shape: &Shape,
    cfg: &SynthConfig,
    rng: &mut Rng,
) -> Result<LinearSystem, CorpusError> {
    let (clo, chi) = cfg.coef_range;
    let (slo, shi) = cfg.solution_range;
    'tries: for _ in 0..cfg.max_tries {
        let mut x = int(rng.range_inclusive(slo, shi));
        let mut y = int(rng.range_inclusive(slo, shi));
        let mut values: BTreeMap<Slot, BigRational> = BTreeMap::new();
        for eq in &shape.equations {
            for t in eq.terms() {
                if let Some(s) = t.coef {
                    values.insert(s, int(rng.range_inclusive(clo, chi)));
                }
            }
        }
        // `u = k v` fixes u from v.
        for eq in &shape.equations {
            if let Rhs::Term(t) = &eq.rhs {
                let rhs = coef_value(&values, t.coef)
                    * match t.var {
                        Variable::X => &x,
                        Variable::Y => &y,
                    };
                let lhs = rhs / coef_value(&values, eq.first.coef);
                if !lhs.is_integer() || !lhs.is_positive() {
                    continue 'tries;
                }
                match eq.first.var {
                    Variable::X => x = lhs,
                    Variable::Y => y = lhs,
                }
            }
        }
        for eq in &shape.equations {
            let Rhs::Value { first, rest } = &eq.rhs else {
                continue;
            };
            let Some(gamma) = lhs_value(eq, &values, &x, &y) else {
                continue 'tries;
            };
            if !gamma.is_integer() || !gamma.is_positive() {
                continue 'tries;
            }
            let g = gamma.to_integer().to_i64().unwrap_or(i64::MAX);
            let (a, b) = match rest {
                None => (g, None),
                Some((Op::Add, _)) => {
                    if g < 2 {
                        continue 'tries;
                    }
                    let a = rng.range_inclusive(1, g - 1);
                    (a, Some(g - a))
                }
                Some((Op::Sub, _)) => {
                    let b = rng.range_inclusive(1, shi.max(2));
                    (g + b, Some(b))
                }
                Some((Op::Mul, _)) => {
                    let divisors: Vec<i64> = (2..=g).filter(|d| g % d == 0).collect();
                    let Some(&d) = rng.choose(&divisors) else {
                        continue 'tries;
                    };
                    (g / d, Some(d))
                }
                Some((Op::Div, _)) => {
                    let b = rng.range_inclusive(2, chi.max(2));
                    (g * b, Some(b))
                }
            };
            values.insert(*first, int(a));
            if let (Some((_, s)), Some(b)) = (rest, b) {
                values.insert(*s, int(b));
            }
        }
        let system = instantiate(shape, |s| values.get(&s).cloned())?;
        match solve_system(&system) {
            Ok(sol) if sol.x == x && sol.y == y && check_solution(&system, &sol) => {
                if sol.is_positive_integer() && !system.slot_values().iter().any(|(_, v)| v.is_zero()) {
                    return Ok(system);
                }
            }
            _ => continue,
        }
    }
    Err(CorpusError::Sampling(format!(
        "no solvable system for shape {shape} after {} tries",
        cfg.max_tries
    )))
}

/// Generates `cfg.count` samples. Shapes are drawn uniformly from `shapes`
/// (default: every shape in the bank), then a template of that shape, then
/// two distinct members of the template's topic.
pub fn synth_corpus(
    templates: &[Template],
    kg: &KnowledgeGraph,
    shapes: Option<&[Shape]>,
    cfg: &SynthConfig,
) -> Result<Vec<Sample>, CorpusError> {
    let mut bank: Vec<Shape> = Vec::new();
    for t in templates {
        if !bank.contains(&t.shape) {
            bank.push(t.shape.clone());
        }
    }
    let shapes: Vec<Shape> = shapes.map_or(bank, <[Shape]>::to_vec);
    if shapes.is_empty() {
        return Err(CorpusError::Template("template bank is empty".into()));
    }
    let mut by_shape: Vec<Vec<&Template>> = Vec::new();
    for shape in &shapes {
        let compatible: Vec<&Template> = templates
            .iter()
            .filter(|t| &t.shape == shape && kg.members(&t.record.topic).len() >= 2)
            .collect();
        if compatible.is_empty() {
            return Err(CorpusError::TemplateGap(shape.to_string()));
        }
        by_shape.push(compatible);
    }

    let mut out = Vec::with_capacity(cfg.count);
    for i in 0..cfg.count {
        let mut rng = Rng::new(derive_seed(cfg.seed, 0x5e7, i as u64));
        let si = rng.below(shapes.len());
        let template = by_shape[si][rng.below(by_shape[si].len())];
        let members = kg.members(&template.record.topic);
        let xi = rng.below(members.len());
        let mut yi = rng.below(members.len() - 1);
        if yi >= xi {
            yi += 1;
        }
        let system = sample_system(&shapes[si], cfg, &mut rng)?;
        let (x, y) = (members[xi], members[yi]);
        out.push(Sample {
            equations: system.to_string(),
            topic: template.record.topic.clone(),
            bind_x: x.to_string(),
            bind_y: y.to_string(),
            text: template.fill(&system, x, y),
        });
    }
    Ok(out)
}

/// Multi-variant corpus: `cfg.count` problems, each rendered through
/// `variants` different templates of one (shape, topic) group, so every
/// equation and binding appears with several surface forms. Groups with at
/// least `variants` templates are visited round-robin.
pub fn synth_variants(
    templates: &[Template],
    kg: &KnowledgeGraph,
    shapes: Option<&[Shape]>,
    variants: usize,
    cfg: &SynthConfig,
) -> Result<Vec<Sample>, CorpusError> {
    let mut groups: Vec<(&Shape, &str, Vec<&Template>)> = Vec::new();
    for t in templates {
        if shapes.is_some_and(|s| !s.contains(&t.shape)) || kg.members(&t.record.topic).len() < 2 {
            continue;
        }
        match groups
            .iter_mut()
            .find(|(s, topic, _)| **s == t.shape && *topic == t.record.topic)
        {
            Some(g) => g.2.push(t),
            None => groups.push((&t.shape, &t.record.topic, vec![t])),
        }
    }
    groups.retain(|g| g.2.len() >= variants.max(1));
    if groups.is_empty() {
        return Err(CorpusError::Template(format!(
            "no shape and topic pair has {variants} templates"
        )));
    }
    let mut out = Vec::with_capacity(cfg.count * variants);
    for i in 0..cfg.count {
        let (shape, topic, group) = &groups[i % groups.len()];
        let mut rng = Rng::new(derive_seed(cfg.seed, 0x5e8, i as u64));
        let members = kg.members(topic);
        let xi = rng.below(members.len());
        let mut yi = rng.below(members.len() - 1);
        if yi >= xi {
            yi += 1;
        }
        let system = sample_system(shape, cfg, &mut rng)?;
        let (x, y) = (members[xi], members[yi]);
        for template in group.iter().take(variants.max(1)) {
            out.push(Sample {
                equations: system.to_string(),
                topic: topic.to_string(),
                bind_x: x.to_string(),
                bind_y: y.to_string(),
                text: template.fill(&system, x, y),
            });
        }
    }
    Ok(out)
}
