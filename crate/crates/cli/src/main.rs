//! `scriptworld` command-line front end.
//!
//! Every command reads the run configuration (`--config`, then typed flags,
//! then `--set key=value` overrides, later ones winning), writes the
//! resolved config as `config.json` and the world hash as `world.sha256`
//! into its output directory, and prints a JSON summary. Failures print a
//! JSON error record on stderr and exit nonzero.

mod commands;
mod config;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use commands::Failure;
use config::{apply_override, parse_override, FieldError, RunConfig};

#[derive(Parser, Debug)]
#[command(name = "scriptworld", version, about = "Synthetic script corpora, ICL prompts and a count-based oracle")]
struct Cli {
    /// TOML config file, or a `config.json` written by an earlier run.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (0 = all cores). Outputs do not depend on it.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Output directory (default: $SCRIPTWORLD_OUT_ROOT/<command>, or runs/<command>).
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Override any config field, e.g. `--set corpus.ablation.no_loop=true`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Default)]
struct WorldArgs {
    #[arg(long)]
    omega_size: Option<usize>,
    #[arg(long)]
    num_functions: Option<usize>,
    #[arg(long)]
    world_seed: Option<u64>,
    /// Use this world file instead of sampling.
    #[arg(long, value_name = "PATH")]
    world_file: Option<PathBuf>,
}

#[derive(Args, Debug, Default)]
struct CellArgs {
    /// Comma-separated task ids.
    #[arg(long, value_delimiter = ',')]
    tasks: Option<Vec<usize>>,
    /// Comma-separated numbers of examples.
    #[arg(long, value_delimiter = ',')]
    lengths: Option<Vec<usize>>,
    /// `default` or `permissive`.
    #[arg(long)]
    policy: Option<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Sample a world and write world.json.
    GenWorld {
        #[command(flatten)]
        world: WorldArgs,
    },
    /// Generate a corpus: stream.bin, manifest.json, corpus.txt.
    GenCorpus {
        #[command(flatten)]
        world: WorldArgs,
        /// compositional, fvprompt, hmm5 or hmmperdoc.
        #[arg(long)]
        generator: Option<String>,
        /// Token target.
        #[arg(long)]
        tokens: Option<u64>,
        /// Keep documents that contain test prompts.
        #[arg(long)]
        no_heldout: bool,
    },
    /// Remove documents containing test prompts from a text corpus.
    FilterHeldout {
        #[command(flatten)]
        world: WorldArgs,
        /// Corpus text file, one document per line.
        #[arg(long, value_name = "PATH")]
        input: PathBuf,
    },
    /// Write prompts.jsonl for every configured cell and length.
    GenPrompts {
        #[command(flatten)]
        world: WorldArgs,
        #[command(flatten)]
        cells: CellArgs,
        #[arg(long)]
        per_cell: Option<usize>,
    },
    /// Score completions against prompts; writes score.csv.
    Score {
        #[arg(long, value_name = "PATH")]
        prompts: PathBuf,
        #[arg(long, value_name = "PATH")]
        completions: PathBuf,
    },
    /// Error curves of the count-based oracle; writes curve.csv.
    OracleEval {
        #[command(flatten)]
        world: WorldArgs,
        #[command(flatten)]
        cells: CellArgs,
        #[arg(long)]
        n_docs: Option<u64>,
        #[arg(long)]
        prompt_seeds: Option<u64>,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::GenWorld { .. } => "gen-world",
            Command::GenCorpus { .. } => "gen-corpus",
            Command::FilterHeldout { .. } => "filter-heldout",
            Command::GenPrompts { .. } => "gen-prompts",
            Command::Score { .. } => "score",
            Command::OracleEval { .. } => "oracle-eval",
        }
    }
}

type Overrides = Vec<(String, toml::Value)>;

fn int(v: impl TryInto<i64>) -> toml::Value {
    toml::Value::Integer(v.try_into().unwrap_or(i64::MAX))
}

fn list(v: &[usize]) -> toml::Value {
    toml::Value::Array(v.iter().map(|&x| int(x as u64)).collect())
}

fn world_overrides(w: &WorldArgs, o: &mut Overrides) {
    if let Some(v) = w.omega_size {
        o.push(("world.omega_size".into(), int(v as u64)));
    }
    if let Some(v) = w.num_functions {
        o.push(("world.num_functions".into(), int(v as u64)));
    }
    if let Some(v) = w.world_seed {
        o.push(("world.seed".into(), int(v)));
    }
    if let Some(v) = &w.world_file {
        o.push(("world.file".into(), toml::Value::String(v.display().to_string())));
    }
}

fn cell_overrides(section: &str, c: &CellArgs, o: &mut Overrides) {
    if let Some(v) = &c.tasks {
        o.push((format!("{section}.tasks"), list(v)));
    }
    if let Some(v) = &c.lengths {
        o.push((format!("{section}.lengths"), list(v)));
    }
    if let Some(v) = &c.policy {
        o.push((format!("{section}.policy"), toml::Value::String(v.clone())));
    }
}

/// Typed flags as dotted-path overrides.
fn flag_overrides(cli: &Cli) -> Overrides {
    let mut o = Overrides::new();
    if let Some(v) = cli.seed {
        o.push(("seed".into(), int(v)));
    }
    if let Some(v) = cli.workers {
        o.push(("workers".into(), int(v as u64)));
    }
    if let Some(v) = &cli.out {
        o.push(("out".into(), toml::Value::String(v.display().to_string())));
    }
    match &cli.command {
        Command::GenWorld { world } | Command::FilterHeldout { world, .. } => world_overrides(world, &mut o),
        Command::GenCorpus { world, generator, tokens, no_heldout } => {
            world_overrides(world, &mut o);
            if let Some(g) = generator {
                o.push(("corpus.generator".into(), toml::Value::String(g.to_ascii_lowercase())));
            }
            if let Some(t) = tokens {
                o.push(("corpus.token_target".into(), int(*t)));
            }
            if *no_heldout {
                o.push(("heldout.enabled".into(), toml::Value::Boolean(false)));
            }
        }
        Command::GenPrompts { world, cells, per_cell } => {
            world_overrides(world, &mut o);
            cell_overrides("prompts", cells, &mut o);
            if let Some(n) = per_cell {
                o.push(("prompts.per_cell".into(), int(*n as u64)));
            }
        }
        Command::Score { .. } => {}
        Command::OracleEval { world, cells, n_docs, prompt_seeds } => {
            world_overrides(world, &mut o);
            cell_overrides("oracle", cells, &mut o);
            if let Some(n) = n_docs {
                o.push(("oracle.n_docs".into(), int(*n)));
            }
            if let Some(n) = prompt_seeds {
                o.push(("oracle.n_prompt_seeds".into(), int(*n)));
            }
        }
    }
    o
}

fn load_config(cli: &Cli) -> Result<RunConfig, Vec<FieldError>> {
    let mut tree = match &cli.config {
        Some(path) => config::read_tree(path).map_err(|e| vec![e])?,
        None => toml::Table::new(),
    };
    let mut errs = Vec::new();
    let mut overrides = flag_overrides(cli);
    for s in &cli.set {
        match parse_override(s) {
            Ok(kv) => overrides.push(kv),
            Err(e) => errs.push(e),
        }
    }
    for (k, v) in overrides {
        if let Err(e) = apply_override(&mut tree, &k, v) {
            errs.push(e);
        }
    }
    match config::from_tree(&tree) {
        Ok(cfg) if errs.is_empty() => Ok(cfg),
        Ok(_) => Err(errs),
        Err(more) => {
            errs.extend(more);
            Err(errs)
        }
    }
}

fn run(cli: &Cli) -> Result<serde_json::Value, Failure> {
    let mut cfg = load_config(cli).map_err(Failure::Config)?;
    cfg.resolve(cli.command.name());
    if cfg.workers > 0 {
        // Fails only if a pool already exists, which cannot happen here.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(cfg.workers).build_global();
    }
    match &cli.command {
        Command::GenWorld { .. } => commands::gen_world(&cfg),
        Command::GenCorpus { .. } => commands::gen_corpus(&cfg),
        Command::FilterHeldout { input, .. } => commands::filter_heldout(&cfg, input),
        Command::GenPrompts { .. } => commands::gen_prompts(&cfg),
        Command::Score { prompts, completions } => commands::score(&cfg, prompts, completions),
        Command::OracleEval { .. } => commands::oracle_eval(&cfg),
    }
}

fn main() {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(summary) => println!("{summary}"),
        Err(f) => {
            eprintln!("{}", f.record());
            std::process::exit(f.exit_code());
        }
    }
}
