use std::collections::BTreeSet;
use std::fs;
use std::io::Write;
use std::path::Path;

use anyhow::{bail, Context, Result};
use mwpgen_core::corpus::{
    parse_templates, read_jsonl, split, synth_corpus, write_jsonl, MwpSample, Sample, SynthConfig, Vocab,
};
use mwpgen_core::cskg::{KnowledgeGraph, VariableBinding};
use mwpgen_core::eqlang::{parse_system, solve_system};
use mwpgen_core::generator::{generate, graph_symbols, prepare_example, Generated, MwpModel, TrainExample};
use mwpgen_core::metrics::{evaluate, Prediction, Reference};
use mwpgen_core::train::{load_model, save_model, LogRecord, Trainer, BEST_DIR};
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::config::{RunConfig, SEED_ENV};
use crate::{Cli, Command, Common, EvalArgs, GenerateArgs, SynthArgs, TrainArgs};

pub const TRAIN_FILE: &str = "train.jsonl";
pub const DEV_FILE: &str = "dev.jsonl";
pub const TEST_FILE: &str = "test.jsonl";
/// Resolved configuration written next to the checkpoints.
pub const RUN_CONFIG_FILE: &str = "run_config.json";

pub fn run(cli: Cli, out: &mut dyn Write) -> Result<()> {
    match cli.command {
        Command::Synth(a) => cmd_synth(&a, out),
        Command::Train(a) => cmd_train(&a, out),
        Command::Generate(a) => cmd_generate(&a, out),
        Command::Eval(a) => cmd_eval(&a, out),
    }
}

fn set<T>(slot: &mut T, flag: &Option<T>)
where
    T: Clone,
{
    if let Some(v) = flag {
        *slot = v.clone();
    }
}

/// Config file, then flags via `apply`, then the seed chain.
fn resolve(common: &Common, apply: impl FnOnce(&mut RunConfig)) -> Result<RunConfig> {
    let mut cfg = RunConfig::from_optional(common.config.as_deref())?;
    apply(&mut cfg);
    let env = std::env::var(SEED_ENV).ok();
    cfg.resolve_seed(common.seed, env.as_deref())?;
    cfg.validate()?;
    Ok(cfg)
}

fn load_kg(path: &Path) -> Result<KnowledgeGraph> {
    let kg = KnowledgeGraph::load(path).with_context(|| format!("loading knowledge graph {}", path.display()))?;
    if kg.duplicates() > 0 {
        log::warn!("{}: {} duplicate triples collapsed", path.display(), kg.duplicates());
    }
    Ok(kg)
}

fn json_line<T: Serialize>(out: &mut dyn Write, value: &T) -> Result<()> {
    writeln!(out, "{}", serde_json::to_string(value)?)?;
    Ok(())
}

#[derive(Serialize)]
struct SynthSummary {
    count: usize,
    topics: usize,
    shapes: usize,
    train: usize,
    dev: usize,
    test: usize,
}

pub fn cmd_synth(args: &SynthArgs, out: &mut dyn Write) -> Result<()> {
    let cfg = resolve(&args.common, |c| {
        set(&mut c.paths.templates, &args.templates);
        set(&mut c.paths.cskg, &args.cskg);
        set(&mut c.paths.dataset, &args.out);
        set(&mut c.corpus.count, &args.count);
        set(&mut c.corpus.dev_fraction, &args.dev_fraction);
        set(&mut c.corpus.test_fraction, &args.test_fraction);
    })?;
    let seed = cfg.train.seed;
    let path = &cfg.paths.templates;
    let text = fs::read_to_string(path).with_context(|| format!("reading templates {}", path.display()))?;
    let templates = parse_templates(&text).with_context(|| format!("parsing templates {}", path.display()))?;
    let kg = load_kg(&cfg.paths.cskg)?;
    let synth = SynthConfig {
        count: cfg.corpus.count,
        seed,
        coef_range: cfg.corpus.coef_range,
        solution_range: cfg.corpus.solution_range,
        ..SynthConfig::default()
    };
    let samples = synth_corpus(&templates, &kg, None, &synth)?;
    let topics = samples.iter().map(|s| s.topic.as_str()).collect::<BTreeSet<_>>().len();
    let mut shapes = BTreeSet::new();
    for s in &samples {
        shapes.insert(parse_system(&s.equations)?.shape().to_string());
    }
    let count = samples.len();
    let parts = split(samples, cfg.corpus.dev_fraction, cfg.corpus.test_fraction, seed)?;
    let dir = &cfg.paths.dataset;
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    for (name, part) in [(TRAIN_FILE, &parts.train), (DEV_FILE, &parts.dev), (TEST_FILE, &parts.test)] {
        write_jsonl(&dir.join(name), part)?;
    }
    let summary = SynthSummary {
        count,
        topics,
        shapes: shapes.len(),
        train: parts.train.len(),
        dev: parts.dev.len(),
        test: parts.test.len(),
    };
    eprintln!(
        "synth  count {}  topics {}  shapes {}  train {}  dev {}  test {}  -> {}",
        summary.count,
        summary.topics,
        summary.shapes,
        summary.train,
        summary.dev,
        summary.test,
        dir.display()
    );
    json_line(out, &summary)
}

fn read_samples(path: &Path) -> Result<Vec<MwpSample>> {
    let raw: Vec<Sample> = read_jsonl(path).with_context(|| format!("reading dataset {}", path.display()))?;
    raw.into_iter()
        .enumerate()
        .map(|(i, s)| MwpSample::prepare(s).with_context(|| format!("{} line {}", path.display(), i + 1)))
        .collect()
}

fn examples(samples: &[MwpSample], kg: &KnowledgeGraph, vocab: &Vocab, cfg: &RunConfig) -> Result<Vec<TrainExample>> {
    samples
        .iter()
        .map(|s| Ok(prepare_example(s, kg, vocab, cfg.decode.depth, cfg.corpus.max_target_len)?))
        .collect()
}

fn human_record(r: &LogRecord) -> String {
    let mut line = format!(
        "step {:>6}  loss {:>10.4}  nll {:>8.4}  kl {:>8.4}  w {:.3}  lr {:.2e}  |g| {:>8.3}",
        r.step, r.loss, r.nll, r.kl, r.kl_weight, r.lr, r.grad_norm
    );
    if let Some(d) = &r.dev {
        line.push_str(&format!(
            "  dev loss {:.4} nll {:.4} acc {:.4}",
            d.loss,
            d.nll_per_token,
            d.accuracy()
        ));
    }
    line
}

pub fn cmd_train(args: &TrainArgs, out: &mut dyn Write) -> Result<()> {
    let cfg = resolve(&args.common, |c| {
        set(&mut c.paths.dataset, &args.data);
        set(&mut c.paths.cskg, &args.cskg);
        set(&mut c.paths.checkpoint, &args.out);
        set(&mut c.model.embed_dim, &args.embed_dim);
        set(&mut c.model.hidden_dim, &args.hidden_dim);
        set(&mut c.model.latent_dim, &args.latent_dim);
        set(&mut c.model.hops, &args.hops);
        set(&mut c.train.batch_size, &args.batch_size);
        set(&mut c.train.teacher_forcing, &args.teacher_forcing);
        set(&mut c.train.kl_ramp_fraction, &args.kl_ramp_fraction);
        set(&mut c.train.lr, &args.lr);
        set(&mut c.train.max_steps, &args.max_steps);
        set(&mut c.train.eval_every, &args.eval_every);
        set(&mut c.corpus.bpe_merges, &args.bpe_merges);
    })?;
    let kg = load_kg(&cfg.paths.cskg)?;
    let train_samples = read_samples(&cfg.paths.dataset.join(TRAIN_FILE))?;
    if train_samples.is_empty() {
        bail!("{} is empty", cfg.paths.dataset.join(TRAIN_FILE).display());
    }
    let dev_path = cfg.paths.dataset.join(DEV_FILE);
    let dev_samples = if dev_path.exists() {
        read_samples(&dev_path)?
    } else {
        log::warn!("{} not found; evaluating on the training set", dev_path.display());
        Vec::new()
    };
    let texts: Vec<String> = train_samples.iter().map(|s| s.delexed.text()).collect();
    let vocab = Vocab::build(&graph_symbols(&kg), &texts, cfg.corpus.bpe_merges);
    let train = examples(&train_samples, &kg, &vocab, &cfg)?;
    let dev = examples(&dev_samples, &kg, &vocab, &cfg)?;
    let model = MwpModel::new(cfg.model.clone(), vocab.len(), cfg.train.seed);
    log::info!(
        "{} train / {} dev examples, vocabulary {}, {} parameters",
        train.len(),
        dev.len(),
        vocab.len(),
        model.store.num_scalars()
    );

    let dir = &cfg.paths.checkpoint;
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let config_path = dir.join(RUN_CONFIG_FILE);
    fs::write(&config_path, serde_json::to_string_pretty(&cfg)?)
        .with_context(|| format!("writing {}", config_path.display()))?;
    save_model(&model, &vocab, &dir.join("step_000000"))?;
    save_model(&model, &vocab, &dir.join(BEST_DIR))?;

    let mut trainer = Trainer::new(model, cfg.train.clone());
    let mut write_err = None;
    trainer.fit(&train, &dev, &vocab, dir, |record| {
        eprintln!("{}", human_record(record));
        if let Err(e) = json_line(out, record) {
            write_err.get_or_insert(e);
        }
    })?;
    write_err.map_or(Ok(()), Err)
}

#[derive(Serialize)]
struct Sidecar<'a> {
    equations: &'a str,
    topic: &'a str,
    bind_x: &'a str,
    bind_y: &'a str,
    x: String,
    y: String,
    seed: u64,
    samples: &'a [Generated],
}

pub fn cmd_generate(args: &GenerateArgs, out: &mut dyn Write) -> Result<()> {
    let cfg = resolve(&args.common, |c| {
        set(&mut c.paths.cskg, &args.cskg);
        set(&mut c.decode.samples, &args.n);
        set(&mut c.decode.beam_width, &args.beam_width);
        set(&mut c.decode.max_len, &args.max_len);
    })?;
    let system = parse_system(&args.equations)?;
    let solution = solve_system(&system)?;
    let kg = load_kg(&cfg.paths.cskg)?;
    let model_dir = args.model.clone().unwrap_or_else(|| cfg.paths.checkpoint.join(BEST_DIR));
    let (model, vocab) = load_model(&model_dir).with_context(|| format!("loading model {}", model_dir.display()))?;
    let binding = VariableBinding {
        x: args.x.clone(),
        y: args.y.clone(),
    };
    let seed = cfg.train.seed;
    let generated = generate(&model, &vocab, &kg, &args.equations, &args.topic, &binding, &cfg.decode, seed)?;
    for g in &generated {
        if !g.unfilled.is_empty() {
            log::warn!("unfilled slots {:?} in {:?}", g.unfilled, g.text);
        }
        writeln!(out, "{}", g.text)?;
    }
    if let Some(path) = &args.sidecar {
        let sidecar = Sidecar {
            equations: &args.equations,
            topic: &args.topic,
            bind_x: &args.x,
            bind_y: &args.y,
            x: solution.x.to_string(),
            y: solution.y.to_string(),
            seed,
            samples: &generated,
        };
        fs::write(path, serde_json::to_string_pretty(&sidecar)?)
            .with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

/// Reads one record per line: a JSON object, or plain text wrapped by
/// `from_text`.
fn read_records<T: DeserializeOwned>(path: &Path, from_text: impl Fn(String) -> T) -> Result<Vec<T>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    text.lines()
        .enumerate()
        .map(|(i, line)| {
            if line.trim_start().starts_with('{') {
                serde_json::from_str(line).with_context(|| format!("{} line {}", path.display(), i + 1))
            } else {
                Ok(from_text(line.to_string()))
            }
        })
        .collect()
}

pub fn cmd_eval(args: &EvalArgs, out: &mut dyn Write) -> Result<()> {
    let predictions = read_records(&args.predictions, |text| Prediction {
        text,
        samples: Vec::new(),
    })?;
    let references = read_records(&args.references, |text| Reference {
        text,
        references: Vec::new(),
    })?;
    let report = evaluate(&predictions, &references)
        .with_context(|| format!("{} vs {}", args.predictions.display(), args.references.display()))?;
    write!(out, "{}", report.table())?;
    if let Some(path) = &args.report {
        fs::write(path, serde_json::to_string_pretty(&report)?)
            .with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}
