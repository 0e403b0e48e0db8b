use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;
use crate::world::WorldModel;
use crate::Token;

use super::bind::{BindingPolicy, BoundTask, Candidate};
use super::formula::TaskSpec;

/// Task id under which composition-chain prompts are reported.
pub const COMPOSITION_TASK_ID: usize = 11;
pub const MIN_CHAIN_LEN: usize = 2;
pub const MAX_CHAIN_LEN: usize = 4;
/// Attempts at drawing a binding with enough unambiguous inputs.
pub const MAX_BINDING_ATTEMPTS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// The answer only.
    Raw,
    /// Intermediate values before the answer.
    Cot,
    /// Intermediate values after the answer.
    Explanation,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::Raw => "raw",
            Variant::Cot => "cot",
            Variant::Explanation => "explanation",
        }
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "raw" => Ok(Variant::Raw),
            "cot" | "chainofthought" | "chain-of-thought" => Ok(Variant::Cot),
            "explanation" => Ok(Variant::Explanation),
            other => Err(Error::Validation(format!("unknown variant `{other}`"))),
        }
    }
}

/// One demonstration.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Example {
    pub inputs: Vec<Token>,
    /// Tokens following the inputs (the answer, plus intermediates for
    /// chain variants).
    pub outputs: Vec<Token>,
    /// Disjunct (or class) this example was drawn for.
    pub target: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptInstance {
    pub task_id: usize,
    pub variant: Variant,
    /// Composition chains only.
    pub chain_len: Option<usize>,
    pub num_examples: usize,
    pub seed: u64,
    pub tokens: Vec<Token>,
    pub reference: Vec<Token>,
    pub separator: Token,
    /// Slot functions, or the chain in application order.
    pub functions: Vec<usize>,
    pub labels: Option<[Token; 2]>,
    pub recombined: bool,
    pub examples: Vec<Example>,
    pub query: Example,
}

impl PromptInstance {
    fn assemble(
        head: PromptHead,
        examples: Vec<Example>,
        query: Example,
    ) -> Self {
        let mut tokens = Vec::new();
        for e in &examples {
            tokens.extend_from_slice(&e.inputs);
            tokens.extend_from_slice(&e.outputs);
            tokens.push(head.separator);
        }
        tokens.extend_from_slice(&query.inputs);
        PromptInstance {
            task_id: head.task_id,
            variant: head.variant,
            chain_len: head.chain_len,
            num_examples: examples.len(),
            seed: head.seed,
            tokens,
            reference: query.outputs.clone(),
            separator: head.separator,
            functions: head.functions,
            labels: head.labels,
            recombined: head.recombined,
            examples,
            query,
        }
    }

    /// Short name of the task cell, e.g. `7`, `2-recombined` or
    /// `composition-cot-3`.
    pub fn cell_name(&self) -> String {
        let base = match self.chain_len {
            Some(c) => format!("composition-{}-{c}", self.variant.name()),
            None => self.task_id.to_string(),
        };
        if self.recombined {
            format!("{base}-recombined")
        } else {
            base
        }
    }
}

struct PromptHead {
    task_id: usize,
    variant: Variant,
    chain_len: Option<usize>,
    seed: u64,
    separator: Token,
    functions: Vec<usize>,
    labels: Option<[Token; 2]>,
    recombined: bool,
}

fn check_num_examples(num_examples: usize) -> Result<()> {
    if num_examples == 0 {
        return Err(Error::Validation("a prompt needs at least one example".into()));
    }
    Ok(())
}

/// Builds a prompt for a bound task. Examples are assigned to disjuncts
/// (classes, for binary tasks) in balanced proportions and each is drawn
/// from the inputs whose unique answer satisfies its disjunct.
pub fn build_prompt(bound: &BoundTask, world: &WorldModel, num_examples: usize, seed: u64) -> Result<PromptInstance> {
    check_num_examples(num_examples)?;
    build_from_candidates(bound, &bound.candidates(world), num_examples, seed, false)
}

fn build_from_candidates(
    bound: &BoundTask,
    candidates: &[Candidate],
    num_examples: usize,
    seed: u64,
    recombined: bool,
) -> Result<PromptInstance> {
    let mut r = rng::stream(seed, "prompt", 0);
    let n_disj = bound.spec.disjuncts.len();
    let mut targets: Vec<usize> = (0..num_examples).map(|i| i % n_disj).collect();
    // Rotate so that the leftover examples do not always favour disjunct 0.
    let shift = r.random_range(0..n_disj);
    targets.iter_mut().for_each(|t| *t = (*t + shift) % n_disj);
    targets.shuffle(&mut r);
    targets.push(r.random_range(0..n_disj));

    let mut used = vec![false; candidates.len()];
    let mut chosen = Vec::with_capacity(targets.len());
    for &t in &targets {
        let pool: Vec<usize> = (0..candidates.len())
            .filter(|&i| !used[i] && candidates[i].disjuncts & (1 << t) != 0)
            .collect();
        if pool.is_empty() {
            let total = candidates.iter().filter(|c| c.disjuncts & (1 << t) != 0).count();
            return Err(Error::Capacity(format!(
                "task {}: disjunct {t} has {total} unambiguous inputs, {} requested",
                bound.spec.task_id,
                targets.iter().filter(|&&u| u == t).count()
            )));
        }
        let i = pool[r.random_range(0..pool.len())];
        used[i] = true;
        chosen.push((candidates[i], t));
    }

    let mut examples: Vec<Example> = chosen
        .iter()
        .map(|&(c, t)| Example {
            inputs: c.y.map_or(vec![c.x], |y| vec![c.x, y]),
            outputs: vec![c.z],
            target: t,
        })
        .collect();
    let query = examples.pop().expect("query present");
    let head = PromptHead {
        task_id: bound.spec.task_id,
        variant: Variant::Raw,
        chain_len: None,
        seed,
        separator: bound.separator,
        functions: bound.functions.clone(),
        labels: bound.labels,
        recombined,
    };
    Ok(PromptInstance::assemble(head, examples, query))
}

/// Draws a binding under `policy` and builds a prompt, redrawing the
/// binding when it leaves too few unambiguous inputs.
pub fn sample_prompt(
    spec: &TaskSpec,
    world: &WorldModel,
    policy: &BindingPolicy,
    num_examples: usize,
    seed: u64,
) -> Result<PromptInstance> {
    check_num_examples(num_examples)?;
    let mut last = None;
    for attempt in 0..MAX_BINDING_ATTEMPTS as u64 {
        let mut r = rng::stream(seed, "binding", attempt);
        let bound = BoundTask::sample(spec, world, policy, &mut r)?;
        let cands = bound.candidates(world);
        match build_from_candidates(&bound, &cands, num_examples, seed, policy.recombine) {
            Ok(p) => return Ok(p),
            Err(e @ Error::Capacity(_)) => last = Some(e),
            Err(e) => return Err(e),
        }
    }
    Err(last.unwrap_or_else(|| Error::Capacity("no binding attempts".into())))
}

/// Options for composition-chain prompts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainOptions {
    pub variant: Variant,
    pub chain_len: usize,
    pub policy: BindingPolicy,
    /// Require pairwise-distinct functions along the chain.
    pub distinct: bool,
}

impl ChainOptions {
    pub fn new(variant: Variant, chain_len: usize) -> Self {
        ChainOptions {
            variant,
            chain_len,
            policy: BindingPolicy::default(),
            distinct: true,
        }
    }
}

/// `x → f1(x) → f2(f1(x)) → …`, intermediates included.
pub fn chain_values(world: &WorldModel, functions: &[usize], x: Token) -> Vec<Token> {
    let mut v = x;
    functions
        .iter()
        .map(|&f| {
            v = world.eval(f, v);
            v
        })
        .collect()
}

/// A composition prompt with `chain_len` functions applied to `x`. Raw
/// examples are `x z`, chain-of-thought `x a1 … z`, explanation `x z a1 …`.
pub fn build_composition_prompt(
    world: &WorldModel,
    options: &ChainOptions,
    num_examples: usize,
    seed: u64,
) -> Result<PromptInstance> {
    check_num_examples(num_examples)?;
    let c = options.chain_len;
    if !(MIN_CHAIN_LEN..=MAX_CHAIN_LEN).contains(&c) {
        return Err(Error::Validation(format!(
            "chain length {c} outside {MIN_CHAIN_LEN}..={MAX_CHAIN_LEN}"
        )));
    }
    let n = world.omega_size();
    if num_examples + 1 > n {
        return Err(Error::Capacity(format!(
            "{} distinct inputs needed, |Ω| = {n}",
            num_examples + 1
        )));
    }
    let mut r = rng::stream(seed, "composition", 0);
    let functions = if options.distinct {
        options.policy.draw(world, c, &mut r)?
    } else {
        let mut fs = Vec::with_capacity(c);
        if options.policy.recombine {
            fs = options.policy.draw(world, 2, &mut r)?;
        }
        let pool = BindingPolicy {
            recombine: false,
            ..options.policy
        }
        .pool(world);
        if pool.is_empty() {
            return Err(Error::Capacity("no functions available".into()));
        }
        while fs.len() < c {
            fs.push(pool[r.random_range(0..pool.len())]);
        }
        fs
    };
    let separator = r.random_range(0..n as Token);
    let mut xs: Vec<Token> = (0..n as Token).collect();
    xs.shuffle(&mut r);
    let mut examples: Vec<Example> = xs[..=num_examples]
        .iter()
        .map(|&x| {
            let vals = chain_values(world, &functions, x);
            let (inter, z) = vals.split_at(c - 1);
            let outputs = match options.variant {
                Variant::Raw => z.to_vec(),
                Variant::Cot => vals.clone(),
                Variant::Explanation => z.iter().chain(inter).copied().collect(),
            };
            Example {
                inputs: vec![x],
                outputs,
                target: 0,
            }
        })
        .collect();
    let query = examples.pop().expect("query present");
    let head = PromptHead {
        task_id: COMPOSITION_TASK_ID,
        variant: options.variant,
        chain_len: Some(c),
        seed,
        separator,
        functions,
        labels: None,
        recombined: options.policy.recombine,
    };
    Ok(PromptInstance::assemble(head, examples, query))
}
