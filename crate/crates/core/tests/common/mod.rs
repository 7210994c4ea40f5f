#![allow(dead_code)]

use mwpgen_core::numerics::{ParamId, ParamStore, Tape, Var};

/// Largest relative error between backward-pass gradients and central
/// differences over the listed parameter entries.
pub fn param_gradcheck(
    store: &ParamStore,
    entries: &[(ParamId, usize)],
    h: f64,
    floor: f64,
    loss: impl Fn(&mut Tape) -> Var,
) -> f64 {
    let mut tape = Tape::with_params(store);
    let l = loss(&mut tape);
    let grads = tape.backward(l).unwrap();
    let eval = |s: &ParamStore| {
        let mut tape = Tape::inference(s);
        let l = loss(&mut tape);
        tape.value(l).item()
    };
    let mut worst = 0.0f64;
    for &(id, i) in entries {
        let analytic = grads.param(id).map_or(0.0, |g| g.data()[i]);
        let mut plus = store.clone();
        plus.get_mut(id).data_mut()[i] += h;
        let mut minus = store.clone();
        minus.get_mut(id).data_mut()[i] -= h;
        let numeric = (eval(&plus) - eval(&minus)) / (2.0 * h);
        let err = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor);
        if err > worst {
            worst = err;
        }
        assert!(
            err.is_finite(),
            "{} entry {i}: analytic {analytic} numeric {numeric}",
            store.name(id)
        );
    }
    worst
}

/// Every entry of every listed parameter.
pub fn all_entries(store: &ParamStore, ids: &[ParamId]) -> Vec<(ParamId, usize)> {
    ids.iter()
        .flat_map(|&id| (0..store.get(id).len()).map(move |i| (id, i)))
        .collect()
}

use std::path::PathBuf;

use mwpgen_core::corpus::{parse_templates, synth_variants, MwpSample, SynthConfig, Vocab};
use mwpgen_core::cskg::KnowledgeGraph;
use mwpgen_core::eqlang::parse_shape;
use mwpgen_core::generator::{graph_symbols, prepare_example, TrainExample};

pub fn data(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data").join(name)
}

pub struct Fixture {
    pub kg: KnowledgeGraph,
    pub vocab: Vocab,
    pub samples: Vec<MwpSample>,
    pub examples: Vec<TrainExample>,
}

/// `inputs` two-variable problems, each in `variants` surface forms.
pub fn fixture(inputs: usize, variants: usize, merges: usize) -> Fixture {
    let kg = KnowledgeGraph::load(&data("cskg.tsv")).unwrap();
    let templates = parse_templates(&std::fs::read_to_string(data("templates.jsonl")).unwrap()).unwrap();
    let shape = parse_shape("x+y=m; cx+dy=n").unwrap();
    let cfg = SynthConfig {
        count: inputs,
        seed: 17,
        ..SynthConfig::default()
    };
    let raw = synth_variants(&templates, &kg, Some(&[shape]), variants, &cfg).unwrap();
    let samples: Vec<MwpSample> = raw.into_iter().map(|s| MwpSample::prepare(s).unwrap()).collect();
    let texts: Vec<String> = samples.iter().map(|s| s.delexed.text()).collect();
    let vocab = Vocab::build(&graph_symbols(&kg), &texts, merges);
    let examples = samples
        .iter()
        .map(|s| prepare_example(s, &kg, &vocab, 2, 120).unwrap())
        .collect();
    Fixture {
        kg,
        vocab,
        samples,
        examples,
    }
}
