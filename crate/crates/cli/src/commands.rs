use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use scriptworld::corpora::*;
use scriptworld::heldout::{Family, FilterStats, HeldoutMatcher, Match};
use scriptworld::oracle::{icl_error_curve, write_curve_csv, CorpusIndex, GeneratorSampler};
use scriptworld::rng::derive_seed;
use scriptworld::tasks::*;
use scriptworld::{Token, WorldModel};

use crate::config::{self, CellSelection, FieldError, RunConfig};

#[derive(Debug)]
pub enum Failure {
    Config(Vec<FieldError>),
    Input { path: PathBuf, message: String },
    Core(scriptworld::Error),
}

impl From<scriptworld::Error> for Failure {
    fn from(e: scriptworld::Error) -> Self {
        Failure::Core(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Core(e.into())
    }
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Config(_) => 2,
            _ => 1,
        }
    }

    /// The JSON error record written to stderr.
    pub fn record(&self) -> serde_json::Value {
        match self {
            Failure::Config(fields) => json!({"error": {
                "kind": "config",
                "message": format!("{} invalid config field(s)", fields.len()),
                "fields": fields,
            }}),
            Failure::Input { path, message } => json!({"error": {
                "kind": "input",
                "message": message,
                "path": path.display().to_string(),
            }}),
            Failure::Core(e) => {
                let kind = match e {
                    scriptworld::Error::Validation(_) => "validation",
                    scriptworld::Error::Parse { .. } => "parse",
                    scriptworld::Error::Syntax { .. } => "syntax",
                    scriptworld::Error::Scope { .. } => "scope",
                    scriptworld::Error::Generation(_) => "generation",
                    scriptworld::Error::Capacity(_) => "capacity",
                    scriptworld::Error::Io(_) => "io",
                    scriptworld::Error::Json(_) => "json",
                };
                json!({"error": {"kind": kind, "message": e.to_string()}})
            }
        }
    }
}

type Result<T> = std::result::Result<T, Failure>;

fn input_error(path: &Path, e: impl std::fmt::Display) -> Failure {
    Failure::Input {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|e| input_error(path, e))
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<()> {
    let mut f = create(dir, name)?;
    serde_json::to_writer_pretty(&mut f, value).map_err(scriptworld::Error::from)?;
    f.write_all(b"\n")?;
    f.flush()?;
    Ok(())
}

pub fn load_world(cfg: &RunConfig) -> Result<WorldModel> {
    match &cfg.world.file {
        Some(path) => WorldModel::load(open(path)?).map_err(|e| input_error(path, e)),
        None => Ok(WorldModel::sample(cfg.world.omega_size, cfg.world.num_functions, cfg.world_seed())?),
    }
}

/// Creates the output directory and records the resolved config and the
/// world hash in it.
fn prepare(cfg: &RunConfig, world: &WorldModel) -> Result<PathBuf> {
    let dir = cfg.out_dir().to_path_buf();
    std::fs::create_dir_all(&dir)?;
    let mut f = create(&dir, "config.json")?;
    f.write_all(config::to_json(cfg).as_bytes())?;
    f.write_all(b"\n")?;
    f.flush()?;
    std::fs::write(dir.join("world.sha256"), format!("{}\n", world.content_hash()))?;
    Ok(dir)
}

pub fn gen_world(cfg: &RunConfig) -> Result<serde_json::Value> {
    let world = load_world(cfg)?;
    let dir = prepare(cfg, &world)?;
    let mut f = create(&dir, "world.json")?;
    world.save(&mut f)?;
    f.flush()?;
    Ok(json!({"world": dir.join("world.json"), "hash": world.content_hash()}))
}

fn build_generator(cfg: &RunConfig, world: &Arc<WorldModel>) -> Result<Box<dyn DocumentGenerator>> {
    let seed = cfg.seed;
    let c = &cfg.corpus;
    Ok(match c.generator {
        GeneratorKind::Compositional => Box::new(
            CompositionalGenerator::new(world.clone(), c.sampler.clone(), c.ablation, seed).without_scripts(),
        ),
        GeneratorKind::FvPrompt => Box::new(FvPromptGenerator::new(world.clone(), seed)),
        GeneratorKind::Hmm5 => {
            let spec = build_hmm_spec(world, c.hmm.n_mixtures, c.hmm.n_perm, derive_seed(seed, "hmm-spec", 0))?;
            Box::new(Hmm5Generator::new(world.clone(), Arc::new(spec), seed)?)
        }
        GeneratorKind::HmmPerDoc => Box::new(HmmPerDocGenerator::new(world.clone(), seed)?),
    })
}

fn empty_stats() -> FilterStats {
    FilterStats {
        n_documents: 0,
        n_removed: 0,
        fraction_removed: 0.0,
        breakdown: Family::ALL.iter().map(|f| (f.name().to_string(), 0)).collect(),
    }
}

fn count_removal(stats: &mut FilterStats, m: Option<&Match>) {
    stats.n_documents += 1;
    if let Some(m) = m {
        stats.n_removed += 1;
        *stats.breakdown.entry(m.family.name().to_string()).or_default() += 1;
    }
    stats.fraction_removed = stats.n_removed as f64 / stats.n_documents as f64;
}

/// Streams documents into the packed file (and optionally a text file),
/// dropping heldout matches. Memory stays bounded by one batch.
pub fn gen_corpus(cfg: &RunConfig) -> Result<serde_json::Value> {
    let world = Arc::new(load_world(cfg)?);
    let dir = prepare(cfg, &world)?;
    let generator = build_generator(cfg, &world)?;
    let matcher = if cfg.heldout.enabled {
        Some(HeldoutMatcher::new(&world, cfg.heldout.options())?)
    } else {
        None
    };
    let sos = world.omega_size() as Token;
    let mut packer = StreamPacker::new(create(&dir, "stream.bin")?, cfg.corpus.window_length, sos)?;
    let mut text = if cfg.corpus.write_text {
        Some(create(&dir, "corpus.txt")?)
    } else {
        None
    };
    let mut stats = empty_stats();
    let target = cfg.corpus.token_target;
    let mut tokens = 0u64;
    let mut next = 0u64;
    while tokens < target {
        let batch: Vec<Option<(Document, Option<Match>)>> = (next..next + GENERATION_CHUNK)
            .into_par_iter()
            .map(|i| {
                Ok(generator.generate(i)?.map(|d| {
                    let m = matcher.as_ref().and_then(|m| m.find_match(&d.tokens));
                    (d, m)
                }))
            })
            .collect::<scriptworld::Result<_>>()?;
        next += GENERATION_CHUNK;
        for (doc, m) in batch.into_iter().flatten() {
            if tokens >= target {
                break;
            }
            count_removal(&mut stats, m.as_ref());
            if m.is_some() {
                continue;
            }
            tokens += doc.tokens.len() as u64;
            packer.push(&doc.tokens)?;
            if let Some(t) = text.as_mut() {
                write_corpus_text(&mut *t, [doc.tokens.as_slice()])?;
            }
        }
    }
    let (mut sink, n_windows, n_documents, n_tokens) = packer.finish()?;
    sink.flush()?;
    let manifest = PackManifest {
        generator: cfg.corpus.generator,
        world_file_hash: world.content_hash(),
        seeds: json!({"run": cfg.seed, "world": cfg.world_seed()}),
        window_length: cfg.corpus.window_length,
        n_windows,
        vocab_size: world.omega_size() + 1,
        n_documents,
        n_tokens,
        config: serde_json::to_value(&cfg.corpus).map_err(scriptworld::Error::from)?,
    };
    write_json(&dir, "manifest.json", &manifest)?;
    if matcher.is_some() {
        write_json(&dir, "heldout_stats.json", &stats)?;
    }
    Ok(json!({"n_documents": n_documents, "n_tokens": n_tokens, "n_windows": n_windows, "n_removed": stats.n_removed}))
}

/// Filters a text corpus in batches; writes the kept documents, the stats
/// and one JSON line per removed document.
pub fn filter_heldout(cfg: &RunConfig, input: &Path) -> Result<serde_json::Value> {
    let world = load_world(cfg)?;
    let dir = prepare(cfg, &world)?;
    let matcher = HeldoutMatcher::new(&world, cfg.heldout.options())?;
    let mut kept = create(&dir, "corpus.txt")?;
    let mut removed = create(&dir, "removed.jsonl")?;
    let mut stats = empty_stats();
    let mut lines = open(input)?.lines();
    let mut index = 0usize;
    loop {
        let mut batch = Vec::with_capacity(GENERATION_CHUNK as usize);
        for line in lines.by_ref().take(GENERATION_CHUNK as usize) {
            batch.push(line.map_err(|e| input_error(input, e))?);
        }
        if batch.is_empty() {
            break;
        }
        let text = batch.join("\n");
        let docs = read_corpus_text(text.as_bytes()).map_err(|e| input_error(input, e))?;
        let found: Vec<Option<Match>> = docs.par_iter().map(|d| matcher.find_match(d)).collect();
        for (d, m) in docs.iter().zip(found) {
            count_removal(&mut stats, m.as_ref());
            match m {
                Some(m) => {
                    serde_json::to_writer(&mut removed, &json!({"document": index, "match": m}))
                        .map_err(scriptworld::Error::from)?;
                    removed.write_all(b"\n")?;
                }
                None => write_corpus_text(&mut kept, [d.as_slice()])?,
            }
            index += 1;
        }
    }
    kept.flush()?;
    removed.flush()?;
    write_json(&dir, "heldout_stats.json", &stats)?;
    Ok(serde_json::to_value(&stats).map_err(scriptworld::Error::from)?)
}

/// One prompt cell: a task (possibly recombined) or a composition chain.
#[derive(Debug, Clone)]
enum Cell {
    Task { spec: TaskSpec, policy: BindingPolicy },
    Chain(ChainOptions),
}

impl Cell {
    fn name(&self) -> String {
        match self {
            Cell::Task { spec, policy } if policy.recombine => format!("{}-recombined", spec.task_id),
            Cell::Task { spec, .. } => spec.task_id.to_string(),
            Cell::Chain(o) => {
                let r = if o.policy.recombine { "-recombined" } else { "" };
                format!("composition-{}-{}{r}", o.variant.name(), o.chain_len)
            }
        }
    }

    fn build(&self, world: &WorldModel, num_examples: usize, seed: u64) -> scriptworld::Result<PromptInstance> {
        match self {
            Cell::Task { spec, policy } => sample_prompt(spec, world, policy, num_examples, seed),
            Cell::Chain(o) => build_composition_prompt(world, o, num_examples, seed),
        }
    }
}

fn cells(sel: &CellSelection) -> Vec<Cell> {
    let base = sel.policy.policy();
    let mut out: Vec<Cell> = sel
        .tasks
        .iter()
        .map(|&t| Cell::Task {
            spec: builtin_task(t).expect("validated task id"),
            policy: base,
        })
        .collect();
    out.extend(sel.recombined_tasks.iter().map(|&t| Cell::Task {
        spec: builtin_task(t).expect("validated task id"),
        policy: BindingPolicy { recombine: true, ..base },
    }));
    out.extend(sel.composition.iter().map(|c| {
        Cell::Chain(ChainOptions {
            policy: BindingPolicy { recombine: c.recombined, ..base },
            ..ChainOptions::new(c.variant, c.chain_len)
        })
    }));
    out
}

fn cell_seed(run_seed: u64, cell: &str, len: usize, i: u64) -> u64 {
    derive_seed(run_seed, &format!("prompts/{cell}/{len}"), i)
}

#[derive(Debug, Serialize)]
struct PromptSummary {
    n_cells: usize,
    n_lengths: usize,
    per_cell: usize,
    n_requested: usize,
    n_written: usize,
    n_infeasible: usize,
    /// `cell/length` → number of infeasible requests.
    infeasible: BTreeMap<String, usize>,
}

pub fn gen_prompts(cfg: &RunConfig) -> Result<serde_json::Value> {
    let world = load_world(cfg)?;
    let dir = prepare(cfg, &world)?;
    let p = &cfg.prompts;
    let cells = cells(&p.cells());
    let jobs: Vec<(usize, usize, u64)> = (0..cells.len())
        .flat_map(|c| p.lengths.iter().flat_map(move |&len| (0..p.per_cell as u64).map(move |i| (c, len, i))))
        .collect();
    let built: Vec<Option<PromptRecord>> = jobs
        .par_iter()
        .map(|&(c, len, i)| {
            let cell = &cells[c];
            match cell.build(&world, len, cell_seed(cfg.seed, &cell.name(), len, i)) {
                Ok(prompt) => Ok(Some(PromptRecord::from(&prompt))),
                Err(scriptworld::Error::Capacity(_)) => Ok(None),
                Err(e) => Err(e),
            }
        })
        .collect::<scriptworld::Result<_>>()?;
    let mut infeasible = BTreeMap::new();
    for (&(c, len, _), b) in jobs.iter().zip(&built) {
        if b.is_none() {
            *infeasible.entry(format!("{}/{len}", cells[c].name())).or_insert(0) += 1;
        }
    }
    let records: Vec<PromptRecord> = built.into_iter().flatten().collect();
    write_prompts(create(&dir, "prompts.jsonl")?, &records)?;
    let summary = PromptSummary {
        n_cells: cells.len(),
        n_lengths: p.lengths.len(),
        per_cell: p.per_cell,
        n_requested: jobs.len(),
        n_written: records.len(),
        n_infeasible: jobs.len() - records.len(),
        infeasible,
    };
    write_json(&dir, "prompts_summary.json", &summary)?;
    Ok(serde_json::to_value(&summary).map_err(scriptworld::Error::from)?)
}

pub fn score(cfg: &RunConfig, prompts: &Path, completions: &Path) -> Result<serde_json::Value> {
    let world = load_world(cfg)?;
    let dir = prepare(cfg, &world)?;
    let ps = read_prompts(open(prompts)?).map_err(|e| input_error(prompts, e))?;
    let cs = read_completions(open(completions)?).map_err(|e| input_error(completions, e))?;
    let report = score_batch(&ps, &cs)?;
    write_score_csv(create(&dir, "score.csv")?, &report)?;
    let summary = json!({
        "n_prompts": ps.len(),
        "n_cells": report.rows.len(),
        "empty_completions": report.empty_completions,
        "missing": report.missing,
    });
    write_json(&dir, "score_summary.json", &summary)?;
    if !report.empty_completions.is_empty() {
        eprintln!(
            "{}",
            json!({"warning": {"kind": "empty_completion", "count": report.empty_completions.len()}})
        );
    }
    Ok(summary)
}

pub fn oracle_eval(cfg: &RunConfig) -> Result<serde_json::Value> {
    let world = Arc::new(load_world(cfg)?);
    let dir = prepare(cfg, &world)?;
    let generator = build_generator(cfg, &world)?;
    let o = &cfg.oracle;
    let index = CorpusIndex::build(&GeneratorSampler { generator: generator.as_ref() }, o.n_docs)?;
    let mut rows = Vec::new();
    for cell in cells(&o.cells()) {
        let name = cell.name();
        let variant = match &cell {
            Cell::Task { .. } => "raw".to_string(),
            Cell::Chain(c) => format!("{}-{}", c.variant.name(), c.chain_len),
        };
        let seed = derive_seed(cfg.seed, &format!("oracle/{name}"), 0);
        rows.extend(icl_error_curve(&index, &name, &variant, &o.lengths, o.n_prompt_seeds, seed, |len, s| {
            cell.build(&world, len, s)
        })?);
    }
    write_curve_csv(create(&dir, "curve.csv")?, &rows)?;
    Ok(json!({"n_rows": rows.len(), "n_docs": o.n_docs}))
}
