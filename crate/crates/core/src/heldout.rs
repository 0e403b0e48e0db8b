//! Removal of pretraining documents that contain a valid test prompt.
//!
//! A document is removed when some contiguous substring reads as at least
//! `min_examples` consecutive examples of a test task, separated by one
//! constant separator, under some binding of the task's function slots
//! (and labels). The designated pair is allowed in bindings; the identity
//! function only when `allow_identity` is set.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpora::{Corpus, Document};
use crate::error::{Error, Result};
use crate::tasks::{builtin_tasks, chain_values, BoundTask, TaskGroup, TaskSpec, Variant, COMPOSITION_TASK_ID};
use crate::world::WorldModel;
use crate::Token;

pub const DEFAULT_MIN_EXAMPLES: usize = 4;
/// Longest example period considered (example width plus separator).
pub const MAX_PERIOD: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    /// Tasks 0 and 1.
    FunctionEvaluation,
    /// Tasks 2 to 10.
    Propositional,
    /// Task 11 and longer raw chains.
    Composition,
    /// Task 12.
    ComposedThree,
    /// Chains with intermediates, before or after the answer.
    CompositionCot,
    /// Tasks 13 to 15.
    Binary,
}

impl Family {
    pub const ALL: [Family; 6] = [
        Family::FunctionEvaluation,
        Family::Propositional,
        Family::Composition,
        Family::ComposedThree,
        Family::CompositionCot,
        Family::Binary,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Family::FunctionEvaluation => "function_evaluation",
            Family::Propositional => "propositional",
            Family::Composition => "composition",
            Family::ComposedThree => "composed_three",
            Family::CompositionCot => "composition_cot",
            Family::Binary => "binary",
        }
    }

    pub fn of_task(task: &TaskSpec) -> Family {
        match (task.group, task.task_id) {
            (TaskGroup::FunctionEvaluation, _) | (_, 1) => Family::FunctionEvaluation,
            (TaskGroup::Propositional, _) => Family::Propositional,
            (TaskGroup::Composed, 12) => Family::ComposedThree,
            (TaskGroup::Composed, _) => Family::Composition,
            (TaskGroup::Binary, _) => Family::Binary,
        }
    }
}

/// Attribution order: the first family (in this order) with a match in a
/// document is credited with the removal.
pub const DEFAULT_ORDER: [Family; 6] = [
    Family::Composition,
    Family::CompositionCot,
    Family::ComposedThree,
    Family::FunctionEvaluation,
    Family::Propositional,
    Family::Binary,
];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HeldoutOptions {
    pub min_examples: usize,
    pub order: Vec<Family>,
    pub min_chain_len: usize,
    pub max_chain_len: usize,
    /// Let the identity function fill task slots and chain steps.
    pub allow_identity: bool,
    /// Also scan raw (answer-only) chains longer than two functions.
    pub long_raw_chains: bool,
}

impl Default for HeldoutOptions {
    fn default() -> Self {
        HeldoutOptions {
            min_examples: DEFAULT_MIN_EXAMPLES,
            order: DEFAULT_ORDER.to_vec(),
            min_chain_len: 2,
            max_chain_len: 4,
            allow_identity: false,
            long_raw_chains: false,
        }
    }
}

/// A substring that reads as a valid prompt.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Match {
    pub family: Family,
    pub task_id: usize,
    /// Chain matches only.
    pub chain: Option<(Variant, usize)>,
    pub offset: usize,
    pub period: usize,
    pub separator: Token,
    /// Slot functions, or the chain in application order.
    pub functions: Vec<usize>,
    pub labels: Option<[Token; 2]>,
    /// Example tokens without separators.
    pub examples: Vec<Vec<Token>>,
}

impl Match {
    /// Re-checks every example under the recorded binding: task matches by
    /// solution enumeration, chain matches by direct function iteration.
    pub fn verify(&self, world: &WorldModel) -> bool {
        match self.chain {
            Some((variant, c)) => self.examples.iter().all(|e| {
                let vals = chain_values(world, &self.functions, e[0]);
                let (inter, z) = vals.split_at(c - 1);
                let expect: Vec<Token> = match variant {
                    Variant::Raw => z.to_vec(),
                    Variant::Cot => vals.clone(),
                    Variant::Explanation => z.iter().chain(inter).copied().collect(),
                };
                e[1..] == expect[..]
            }),
            None => {
                let Some(spec) = builtin_tasks().into_iter().find(|t| t.task_id == self.task_id) else {
                    return false;
                };
                let Ok(bound) = BoundTask::new(spec, self.functions.clone(), self.labels, self.separator)
                else {
                    return false;
                };
                let arity = bound.spec.arity;
                self.examples.iter().all(|e| {
                    let y = (arity == 2).then(|| e[1]);
                    bound.enumerate_solutions(world, e[0], y) == [e[arity]]
                })
            }
        }
    }
}

/// The shape of one example.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Format {
    Task(usize),
    Chain(Variant, usize),
}

impl Format {
    fn width(self, tasks: &[TaskSpec]) -> usize {
        match self {
            Format::Task(i) => tasks[i].arity + 1,
            Format::Chain(Variant::Raw, _) => 2,
            Format::Chain(_, c) => c + 1,
        }
    }
}

/// Scans documents for embedded prompts.
pub struct HeldoutMatcher<'w> {
    world: &'w WorldModel,
    tasks: Vec<TaskSpec>,
    options: HeldoutOptions,
    /// Formats grouped by family, in attribution order.
    formats: Vec<(Family, Vec<Format>)>,
    /// `maps[u * n + v]`: bitmask of functions f with f(u) = v.
    maps: Vec<u64>,
    /// Functions usable in bindings (bit `f - 1`).
    allowed: u64,
}

impl<'w> HeldoutMatcher<'w> {
    pub fn new(world: &'w WorldModel, options: HeldoutOptions) -> Result<Self> {
        if world.num_functions() > 64 {
            return Err(Error::Validation("heldout matching supports at most 64 functions".into()));
        }
        if options.min_examples < 2 {
            return Err(Error::Validation("min_examples must be at least 2".into()));
        }
        let mut seen = options.order.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != Family::ALL.len() || options.order.len() != Family::ALL.len() {
            return Err(Error::Validation("order must list every family exactly once".into()));
        }
        let tasks = builtin_tasks();
        let n = world.omega_size();
        let mut maps = vec![0u64; n * n];
        for f in 1..=world.num_functions() {
            for (u, &v) in world.table(f).iter().enumerate() {
                maps[u * n + v as usize] |= 1 << (f - 1);
            }
        }
        let mut formats = Vec::new();
        for &fam in &options.order {
            let mut fs: Vec<Format> = tasks
                .iter()
                .enumerate()
                .filter(|(_, t)| Family::of_task(t) == fam)
                .map(|(i, _)| Format::Task(i))
                .collect();
            let chains = options.min_chain_len.max(2)..=options.max_chain_len;
            match fam {
                // Task 11 covers the raw chain of length two.
                Family::Composition if options.long_raw_chains => {
                    fs.extend(chains.filter(|&c| c > 2).map(|c| Format::Chain(Variant::Raw, c)))
                }
                Family::CompositionCot => {
                    for c in chains {
                        fs.push(Format::Chain(Variant::Cot, c));
                        fs.push(Format::Chain(Variant::Explanation, c));
                    }
                }
                _ => {}
            }
            formats.push((fam, fs));
        }
        let mut allowed = low_bits(world.num_functions());
        if !options.allow_identity {
            allowed &= !1;
        }
        Ok(HeldoutMatcher {
            world,
            tasks,
            options,
            formats,
            maps,
            allowed,
        })
    }

    pub fn options(&self) -> &HeldoutOptions {
        &self.options
    }

    fn functions_mapping(&self, u: Token, v: Token) -> u64 {
        self.maps[u as usize * self.world.omega_size() + v as usize] & self.allowed
    }

    /// The first match in `doc`, trying families in attribution order.
    pub fn find_match(&self, doc: &[Token]) -> Option<Match> {
        self.formats.iter().find_map(|(fam, fs)| self.find_family(doc, *fam, fs))
    }

    /// The first match of one family.
    pub fn find_family_match(&self, doc: &[Token], family: Family) -> Option<Match> {
        let (_, fs) = self.formats.iter().find(|(f, _)| *f == family)?;
        self.find_family(doc, family, fs)
    }

    fn find_family(&self, doc: &[Token], family: Family, formats: &[Format]) -> Option<Match> {
        let m = self.options.min_examples;
        for &fmt in formats {
            let w = fmt.width(&self.tasks);
            let p = w + 1;
            if p > MAX_PERIOD || doc.len() < (m - 1) * p + w {
                continue;
            }
            for o in 0..=doc.len() - ((m - 1) * p + w) {
                if let Some(found) = self.try_window(doc, o, p, w, fmt, family) {
                    return Some(found);
                }
            }
        }
        None
    }

    /// Reads the longest run of examples starting at `o` that share one
    /// separator and have distinct inputs, then tries its prefixes from
    /// longest to shortest (balance is a property of the whole run, so a
    /// balanced prompt may have no balanced short window).
    fn try_window(&self, doc: &[Token], o: usize, p: usize, w: usize, fmt: Format, family: Family) -> Option<Match> {
        let m = self.options.min_examples;
        let sep = doc[o + w];
        if (1..m - 1).any(|k| doc[o + k * p + w] != sep) {
            return None;
        }
        let n_inputs = match fmt {
            Format::Task(i) => self.tasks[i].arity,
            Format::Chain(..) => 1,
        };
        let mut run: Vec<&[Token]> = vec![&doc[o..o + w]];
        loop {
            let start = o + run.len() * p;
            if start + w > doc.len() || doc[start - 1] != sep {
                break;
            }
            let e = &doc[start..start + w];
            if run.iter().any(|r| r[..n_inputs] == e[..n_inputs]) {
                break;
            }
            run.push(e);
        }
        if run.len() < m {
            return None;
        }
        (m..=run.len()).rev().find_map(|len| self.try_run(&run[..len], o, p, sep, fmt, family))
    }

    fn try_run(&self, examples: &[&[Token]], o: usize, p: usize, sep: Token, fmt: Format, family: Family) -> Option<Match> {
        let (task_id, chain, functions, labels) = match fmt {
            Format::Task(i) => {
                let (fs, labels) = self.search_task(&self.tasks[i], examples)?;
                (self.tasks[i].task_id, None, fs, labels)
            }
            Format::Chain(v, c) => (COMPOSITION_TASK_ID, Some((v, c)), self.search_chain(v, c, examples)?, None),
        };
        Some(Match {
            family,
            task_id,
            chain,
            offset: o,
            period: p,
            separator: sep,
            functions,
            labels,
            examples: examples.iter().map(|e| e.to_vec()).collect(),
        })
    }

    /// Distinct functions for each chain step consistent with all examples.
    fn search_chain(&self, variant: Variant, c: usize, examples: &[&[Token]]) -> Option<Vec<usize>> {
        // Value sequences x, a1, ..., z; raw chains leave the middle unknown.
        let steps: Vec<u64> = match variant {
            Variant::Raw => return self.search_raw_chain(c, examples),
            Variant::Cot => (0..c)
                .map(|t| {
                    examples
                        .iter()
                        .fold(u64::MAX, |acc, e| acc & self.functions_mapping(e[t], e[t + 1]))
                })
                .collect(),
            Variant::Explanation => (0..c)
                .map(|t| {
                    examples.iter().fold(u64::MAX, |acc, e| {
                        // e = x z a1 .. a_{c-1}
                        let from = if t == 0 { e[0] } else { e[1 + t] };
                        let to = if t == c - 1 { e[1] } else { e[2 + t] };
                        acc & self.functions_mapping(from, to)
                    })
                })
                .collect(),
        };
        let mut chosen = Vec::with_capacity(c);
        distinct_representatives(&steps, 0, &mut chosen).then(|| chosen.iter().map(|&b| b + 1).collect())
    }

    fn search_raw_chain(&self, c: usize, examples: &[&[Token]]) -> Option<Vec<usize>> {
        let nf = self.world.num_functions();
        let mut chain = Vec::with_capacity(c);
        let mut values: Vec<Token> = examples.iter().map(|e| e[0]).collect();
        self.raw_chain_dfs(c, nf, examples, &mut chain, &mut values)
            .then(|| chain.iter().map(|&f| f + 1).collect())
    }

    fn raw_chain_dfs(
        &self,
        c: usize,
        nf: usize,
        examples: &[&[Token]],
        chain: &mut Vec<usize>,
        values: &mut Vec<Token>,
    ) -> bool {
        if chain.len() == c - 1 {
            // Last step must map every current value to its answer.
            let mask = examples
                .iter()
                .zip(values.iter())
                .fold(u64::MAX, |acc, (e, &v)| acc & self.functions_mapping(v, e[1]));
            let used = chain.iter().fold(0u64, |m, &f| m | 1 << f);
            let free = mask & !used & low_bits(nf);
            if free != 0 {
                chain.push(free.trailing_zeros() as usize);
                return true;
            }
            return false;
        }
        for f in 0..nf {
            if chain.contains(&f) || self.allowed & (1 << f) == 0 {
                continue;
            }
            let saved = values.clone();
            for v in values.iter_mut() {
                *v = self.world.eval(f + 1, *v);
            }
            chain.push(f);
            if self.raw_chain_dfs(c, nf, examples, chain, values) {
                return true;
            }
            chain.pop();
            *values = saved;
        }
        false
    }

    /// A binding (distinct slot functions, plus labels for binary tasks)
    /// under which every example has the given answer as unique solution.
    fn search_task(&self, task: &TaskSpec, examples: &[&[Token]]) -> Option<(Vec<usize>, Option<[Token; 2]>)> {
        let ar = task.arity;
        let label_options: Vec<Option<[Token; 2]>> = if task.is_binary() {
            let mut zs: Vec<Token> = examples.iter().map(|e| e[ar]).collect();
            zs.sort();
            zs.dedup();
            if zs.len() != 2 {
                return None;
            }
            vec![Some([zs[0], zs[1]]), Some([zs[1], zs[0]])]
        } else {
            vec![None]
        };
        let slots = task.num_function_slots();
        let nf = self.world.num_functions();
        let mut fs = vec![0usize; slots];
        for labels in label_options {
            if self.assign_slots(task, examples, labels, nf, 0, &mut fs) {
                return Some((fs, labels));
            }
        }
        None
    }

    fn assign_slots(
        &self,
        task: &TaskSpec,
        examples: &[&[Token]],
        labels: Option<[Token; 2]>,
        nf: usize,
        slot: usize,
        fs: &mut Vec<usize>,
    ) -> bool {
        if slot == fs.len() {
            let bound = BoundTask {
                spec: task.clone(),
                functions: fs.clone(),
                labels,
                separator: 0,
            };
            let ar = task.arity;
            let holds = examples.iter().all(|e| {
                let y = if ar == 2 { e[1] } else { 0 };
                bound.satisfied_disjuncts(self.world, e[0], y, e[ar]) != 0
            });
            if !holds {
                return false;
            }
            let masks: Vec<u32> = examples
                .iter()
                .map(|e| {
                    let y = if ar == 2 { e[1] } else { 0 };
                    bound.satisfied_disjuncts(self.world, e[0], y, e[ar])
                })
                .collect();
            return balanced_assignment(&masks, task.disjuncts.len())
                && examples.iter().all(|e| {
                    let y = (ar == 2).then(|| e[1]);
                    bound.enumerate_solutions(self.world, e[0], y) == [e[ar]]
                });
        }
        for f in 1..=nf {
            if fs[..slot].contains(&f) || self.allowed & (1 << (f - 1)) == 0 {
                continue;
            }
            fs[slot] = f;
            if self.assign_slots(task, examples, labels, nf, slot + 1, fs) {
                return true;
            }
        }
        false
    }
}

/// Whether examples can be assigned to disjuncts they satisfy so that
/// disjunct counts differ by at most one (classes, for binary tasks).
pub fn balanced_assignment(masks: &[u32], n_disjuncts: usize) -> bool {
    fn go(masks: &[u32], counts: &mut [usize], lo: usize, hi: usize) -> bool {
        let Some((&m, rest)) = masks.split_first() else {
            return counts.iter().all(|&c| c >= lo);
        };
        for d in 0..counts.len() {
            if m & (1 << d) != 0 && counts[d] < hi {
                counts[d] += 1;
                if go(rest, counts, lo, hi) {
                    return true;
                }
                counts[d] -= 1;
            }
        }
        false
    }
    let n = masks.len();
    let lo = n / n_disjuncts;
    let hi = n.div_ceil(n_disjuncts);
    go(masks, &mut vec![0; n_disjuncts], lo, hi)
}

fn low_bits(n: usize) -> u64 {
    if n >= 64 {
        u64::MAX
    } else {
        (1u64 << n) - 1
    }
}

/// Picks one distinct bit from each mask (zero-based function ids).
fn distinct_representatives(masks: &[u64], t: usize, chosen: &mut Vec<usize>) -> bool {
    if t == masks.len() {
        return true;
    }
    let mut m = masks[t];
    while m != 0 {
        let b = m.trailing_zeros() as usize;
        m &= m - 1;
        if !chosen.contains(&b) {
            chosen.push(b);
            if distinct_representatives(masks, t + 1, chosen) {
                return true;
            }
            chosen.pop();
        }
    }
    false
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterStats {
    pub n_documents: usize,
    pub n_removed: usize,
    pub fraction_removed: f64,
    pub breakdown: BTreeMap<String, usize>,
}

impl FilterStats {
    fn from_matches(n_documents: usize, removed: &[(usize, Match)]) -> Self {
        let mut breakdown: BTreeMap<String, usize> =
            Family::ALL.iter().map(|f| (f.name().to_string(), 0)).collect();
        for (_, m) in removed {
            *breakdown.entry(m.family.name().to_string()).or_default() += 1;
        }
        FilterStats {
            n_documents,
            n_removed: removed.len(),
            fraction_removed: if n_documents == 0 {
                0.0
            } else {
                removed.len() as f64 / n_documents as f64
            },
            breakdown,
        }
    }

    /// The family credited with the most removals, if any.
    pub fn largest_family(&self) -> Option<&str> {
        self.breakdown
            .iter()
            .filter(|(_, &c)| c > 0)
            .max_by_key(|(_, &c)| c)
            .map(|(k, _)| k.as_str())
    }
}

/// First match (if any) per document, computed in parallel.
pub fn scan_documents(matcher: &HeldoutMatcher<'_>, docs: &[&[Token]]) -> Vec<Option<Match>> {
    docs.par_iter().map(|d| matcher.find_match(d)).collect()
}

pub struct FilterOutcome {
    pub kept: Corpus,
    pub stats: FilterStats,
    /// Index in the input corpus and the match that removed it.
    pub removed: Vec<(usize, Match)>,
}

pub fn filter_corpus(corpus: Corpus, matcher: &HeldoutMatcher<'_>) -> FilterOutcome {
    let docs: Vec<&[Token]> = corpus.documents.iter().map(|d| d.tokens.as_slice()).collect();
    let found = scan_documents(matcher, &docs);
    let n = corpus.documents.len();
    let mut kept: Vec<Document> = Vec::with_capacity(n);
    let mut removed = Vec::new();
    for (i, (doc, m)) in corpus.documents.into_iter().zip(found).enumerate() {
        match m {
            Some(m) => removed.push((i, m)),
            None => kept.push(doc),
        }
    }
    FilterOutcome {
        stats: FilterStats::from_matches(n, &removed),
        kept: Corpus { documents: kept },
        removed,
    }
}
