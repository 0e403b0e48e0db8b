//! Run configuration: a TOML (or JSON) tree, dotted-path overrides, and
//! validation that reports every bad field together.

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use scriptworld::corpora::{GeneratorKind, DEFAULT_WINDOW_LENGTH};
use scriptworld::grammar::{AblationFlags, SamplerConfig};
use scriptworld::heldout::{HeldoutOptions, DEFAULT_MIN_EXAMPLES};
use scriptworld::tasks::{BindingPolicy, Variant, MAX_CHAIN_LEN, MIN_CHAIN_LEN};

/// Environment variable naming the default output root.
pub const OUT_ROOT_ENV: &str = "SCRIPTWORLD_OUT_ROOT";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FieldError {
    pub field: String,
    pub message: String,
}

impl FieldError {
    fn new(field: impl Into<String>, message: impl Into<String>) -> Self {
        FieldError {
            field: field.into(),
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorldConfig {
    pub omega_size: usize,
    pub num_functions: usize,
    /// Defaults to the run seed.
    pub seed: Option<u64>,
    /// Load this world file instead of sampling one.
    pub file: Option<PathBuf>,
}

impl Default for WorldConfig {
    fn default() -> Self {
        WorldConfig {
            omega_size: 30,
            num_functions: 10,
            seed: None,
            file: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HmmConfig {
    pub n_mixtures: usize,
    pub n_perm: usize,
}

impl Default for HmmConfig {
    fn default() -> Self {
        HmmConfig { n_mixtures: 5, n_perm: 100 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusConfig {
    pub generator: GeneratorKind,
    pub token_target: u64,
    pub window_length: usize,
    /// Also write the documents as text (needed by `filter-heldout`).
    pub write_text: bool,
    pub ablation: AblationFlags,
    pub sampler: SamplerConfig,
    pub hmm: HmmConfig,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        CorpusConfig {
            generator: GeneratorKind::Compositional,
            token_target: 1_000_000,
            window_length: DEFAULT_WINDOW_LENGTH,
            write_text: true,
            ablation: AblationFlags::default(),
            sampler: SamplerConfig::default(),
            hmm: HmmConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HeldoutConfig {
    /// Drop matching documents during `gen-corpus`.
    pub enabled: bool,
    pub min_examples: usize,
    pub allow_identity: bool,
    pub long_raw_chains: bool,
}

impl Default for HeldoutConfig {
    fn default() -> Self {
        HeldoutConfig {
            enabled: true,
            min_examples: DEFAULT_MIN_EXAMPLES,
            allow_identity: false,
            long_raw_chains: false,
        }
    }
}

impl HeldoutConfig {
    pub fn options(&self) -> HeldoutOptions {
        HeldoutOptions {
            min_examples: self.min_examples,
            allow_identity: self.allow_identity,
            long_raw_chains: self.long_raw_chains,
            ..HeldoutOptions::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolicyName {
    /// No identity, no designated pair.
    Default,
    /// Any function.
    Permissive,
}

impl PolicyName {
    pub fn policy(self) -> BindingPolicy {
        match self {
            PolicyName::Default => BindingPolicy::default(),
            PolicyName::Permissive => BindingPolicy::permissive(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompositionCell {
    pub variant: Variant,
    pub chain_len: usize,
    #[serde(default)]
    pub recombined: bool,
}

/// Which prompt cells to build.
#[derive(Debug, Clone, PartialEq)]
pub struct CellSelection {
    pub tasks: Vec<usize>,
    /// Tasks also built with the designated pair in their first two slots.
    pub recombined_tasks: Vec<usize>,
    pub composition: Vec<CompositionCell>,
    pub lengths: Vec<usize>,
    pub policy: PolicyName,
}

fn composition_defaults() -> Vec<CompositionCell> {
    [Variant::Raw, Variant::Cot, Variant::Explanation]
        .into_iter()
        .map(|variant| CompositionCell { variant, chain_len: 2, recombined: false })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PromptsConfig {
    pub tasks: Vec<usize>,
    pub recombined_tasks: Vec<usize>,
    pub composition: Vec<CompositionCell>,
    /// Numbers of examples per prompt.
    pub lengths: Vec<usize>,
    pub policy: PolicyName,
    pub per_cell: usize,
}

impl Default for PromptsConfig {
    fn default() -> Self {
        PromptsConfig {
            tasks: (0..=15).collect(),
            recombined_tasks: Vec::new(),
            composition: composition_defaults(),
            lengths: (1..=7).map(|i| 2 * i).collect(),
            policy: PolicyName::Default,
            per_cell: 100,
        }
    }
}

impl PromptsConfig {
    pub fn cells(&self) -> CellSelection {
        CellSelection {
            tasks: self.tasks.clone(),
            recombined_tasks: self.recombined_tasks.clone(),
            composition: self.composition.clone(),
            lengths: self.lengths.clone(),
            policy: self.policy,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleConfig {
    pub tasks: Vec<usize>,
    pub recombined_tasks: Vec<usize>,
    pub composition: Vec<CompositionCell>,
    pub lengths: Vec<usize>,
    pub policy: PolicyName,
    /// Documents sampled into the count index.
    pub n_docs: u64,
    pub n_prompt_seeds: u64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig {
            tasks: vec![0],
            recombined_tasks: Vec::new(),
            composition: Vec::new(),
            lengths: (1..=5).collect(),
            policy: PolicyName::Default,
            n_docs: 100_000,
            n_prompt_seeds: 200,
        }
    }
}

impl OracleConfig {
    pub fn cells(&self) -> CellSelection {
        CellSelection {
            tasks: self.tasks.clone(),
            recombined_tasks: self.recombined_tasks.clone(),
            composition: self.composition.clone(),
            lengths: self.lengths.clone(),
            policy: self.policy,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct RunConfig {
    pub seed: u64,
    /// Worker threads; 0 uses every core.
    pub workers: usize,
    pub out: Option<PathBuf>,
    pub world: WorldConfig,
    pub corpus: CorpusConfig,
    pub heldout: HeldoutConfig,
    pub prompts: PromptsConfig,
    pub oracle: OracleConfig,
}

impl RunConfig {
    pub fn world_seed(&self) -> u64 {
        self.world.seed.unwrap_or(self.seed)
    }

    /// Fills defaults that depend on other fields or on the environment.
    pub fn resolve(&mut self, command: &str) {
        self.world.seed = Some(self.world_seed());
        if self.out.is_none() {
            let root = std::env::var_os(OUT_ROOT_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("runs"));
            self.out = Some(root.join(command));
        }
    }

    pub fn out_dir(&self) -> &Path {
        self.out.as_deref().unwrap_or(Path::new("."))
    }

    pub fn validate(&self) -> Vec<FieldError> {
        let mut errs = Vec::new();
        let mut check = |ok: bool, field: &str, message: &str| {
            if !ok {
                errs.push(FieldError::new(field, message));
            }
        };
        if self.world.file.is_none() {
            check(self.world.omega_size >= 2, "world.omega_size", "must be at least 2");
            check(self.world.omega_size < u16::MAX as usize, "world.omega_size", "must fit in 16 bits with the start token");
            check(self.world.num_functions >= 1, "world.num_functions", "must be at least 1");
            check(self.world.num_functions <= 64, "world.num_functions", "must be at most 64");
        }
        check(self.corpus.token_target >= 1, "corpus.token_target", "must be positive");
        check(self.corpus.window_length >= 1, "corpus.window_length", "must be positive");
        check(self.corpus.hmm.n_mixtures >= 1, "corpus.hmm.n_mixtures", "must be positive");
        check(self.corpus.hmm.n_perm >= 1, "corpus.hmm.n_perm", "must be positive");
        check(self.corpus.sampler.length_limit > 0.0, "corpus.sampler.length_limit", "must be positive");
        check(
            (0.0..=1.0).contains(&self.corpus.sampler.uniform_mix),
            "corpus.sampler.uniform_mix",
            "must lie in [0, 1]",
        );
        check(self.corpus.sampler.loop_arity >= 1, "corpus.sampler.loop_arity", "must be positive");
        check(self.heldout.min_examples >= 2, "heldout.min_examples", "must be at least 2");
        check(self.prompts.per_cell >= 1, "prompts.per_cell", "must be positive");
        check(self.oracle.n_docs >= 1, "oracle.n_docs", "must be positive");
        check(self.oracle.n_prompt_seeds >= 1, "oracle.n_prompt_seeds", "must be positive");
        cell_errors("prompts", &self.prompts.cells(), &mut errs);
        cell_errors("oracle", &self.oracle.cells(), &mut errs);
        errs
    }
}

fn cell_errors(section: &str, cells: &CellSelection, errs: &mut Vec<FieldError>) {
    for (name, ids) in [("tasks", &cells.tasks), ("recombined_tasks", &cells.recombined_tasks)] {
        for &t in ids {
            if t > 15 {
                errs.push(FieldError::new(format!("{section}.{name}"), format!("unknown task {t} (tasks are 0..=15)")));
            }
        }
    }
    for &t in &cells.recombined_tasks {
        if t <= 1 {
            errs.push(FieldError::new(
                format!("{section}.recombined_tasks"),
                format!("task {t} has a single function slot and cannot be recombined"),
            ));
        }
    }
    for (i, c) in cells.composition.iter().enumerate() {
        if !(MIN_CHAIN_LEN..=MAX_CHAIN_LEN).contains(&c.chain_len) {
            errs.push(FieldError::new(
                format!("{section}.composition[{i}].chain_len"),
                format!("must lie in {MIN_CHAIN_LEN}..={MAX_CHAIN_LEN}"),
            ));
        }
    }
    if cells.lengths.is_empty() || cells.lengths.contains(&0) {
        errs.push(FieldError::new(format!("{section}.lengths"), "must be a nonempty list of positive integers"));
    }
    if cells.tasks.is_empty() && cells.recombined_tasks.is_empty() && cells.composition.is_empty() {
        errs.push(FieldError::new(format!("{section}.tasks"), "no cells selected"));
    }
}

/// Reads a config file: `.json` as JSON (a persisted resolved config),
/// anything else as TOML.
pub fn read_tree(path: &Path) -> Result<toml::Table, FieldError> {
    let text = std::fs::read_to_string(path).map_err(|e| FieldError::new("--config", format!("{}: {e}", path.display())))?;
    if path.extension().is_some_and(|e| e == "json") {
        let v: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| FieldError::new("--config", format!("{}: {e}", path.display())))?;
        let v = strip_nulls(v);
        toml::Table::try_from(v).map_err(|e| FieldError::new("--config", format!("{}: {e}", path.display())))
    } else {
        text.parse::<toml::Table>()
            .map_err(|e| FieldError::new("--config", format!("{}: {e}", path.display())))
    }
}

/// TOML has no null; absent and null mean the same here.
fn strip_nulls(v: serde_json::Value) -> serde_json::Value {
    match v {
        serde_json::Value::Object(m) => {
            serde_json::Value::Object(m.into_iter().filter(|(_, v)| !v.is_null()).map(|(k, v)| (k, strip_nulls(v))).collect())
        }
        serde_json::Value::Array(a) => serde_json::Value::Array(a.into_iter().map(strip_nulls).collect()),
        v => v,
    }
}

/// Parses the right-hand side of `key=value` as a TOML value, falling back
/// to a bare string.
pub fn parse_override(spec: &str) -> Result<(String, toml::Value), FieldError> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| FieldError::new("--set", format!("`{spec}` is not of the form key=value")))?;
    let key = key.trim();
    if key.is_empty() || key.split('.').any(str::is_empty) {
        return Err(FieldError::new("--set", format!("bad key in `{spec}`")));
    }
    let raw = raw.trim();
    let value = format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    Ok((key.to_string(), value))
}

pub fn apply_override(tree: &mut toml::Table, key: &str, value: toml::Value) -> Result<(), FieldError> {
    let mut parts: Vec<&str> = key.split('.').collect();
    let last = parts.pop().expect("keys are nonempty");
    let mut table = tree;
    for (depth, p) in parts.iter().enumerate() {
        let entry = table
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry.as_table_mut().ok_or_else(|| {
            FieldError::new(key, format!("`{}` is not a table", parts[..=depth].join(".")))
        })?;
    }
    table.insert(last.to_string(), value);
    Ok(())
}

fn section<T: DeserializeOwned + Default>(tree: &toml::Table, key: &str, errs: &mut Vec<FieldError>) -> T {
    match tree.get(key) {
        None => T::default(),
        Some(v) => v.clone().try_into().unwrap_or_else(|e: toml::de::Error| {
            errs.push(FieldError::new(key, e.message().trim().to_string()));
            T::default()
        }),
    }
}

/// Builds the config from a value tree. Sections are read separately so
/// that every malformed section is reported, then semantic checks run.
pub fn from_tree(tree: &toml::Table) -> Result<RunConfig, Vec<FieldError>> {
    let mut errs = Vec::new();
    const KEYS: [&str; 8] = ["seed", "workers", "out", "world", "corpus", "heldout", "prompts", "oracle"];
    for k in tree.keys() {
        if !KEYS.contains(&k.as_str()) {
            errs.push(FieldError::new(k.clone(), format!("unknown field; expected one of {}", KEYS.join(", "))));
        }
    }
    let int = |k: &str, errs: &mut Vec<FieldError>| -> u64 {
        match tree.get(k) {
            None => 0,
            Some(toml::Value::Integer(i)) if *i >= 0 => *i as u64,
            Some(v) => {
                errs.push(FieldError::new(k, format!("expected a nonnegative integer, found {v}")));
                0
            }
        }
    };
    let seed = int("seed", &mut errs);
    let workers = int("workers", &mut errs) as usize;
    let out = match tree.get("out") {
        None => None,
        Some(toml::Value::String(s)) => Some(PathBuf::from(s)),
        Some(v) => {
            errs.push(FieldError::new("out", format!("expected a path, found {v}")));
            None
        }
    };
    let cfg = RunConfig {
        seed,
        workers,
        out,
        world: section(tree, "world", &mut errs),
        corpus: section(tree, "corpus", &mut errs),
        heldout: section(tree, "heldout", &mut errs),
        prompts: section(tree, "prompts", &mut errs),
        oracle: section(tree, "oracle", &mut errs),
    };
    errs.extend(cfg.validate());
    if errs.is_empty() {
        Ok(cfg)
    } else {
        Err(errs)
    }
}

/// Serializes the resolved config as pretty JSON.
pub fn to_json(cfg: &RunConfig) -> String {
    serde_json::to_string_pretty(cfg).expect("config serialization cannot fail")
}
