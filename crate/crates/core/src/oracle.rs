//! The idealized count-based predictor M, estimated by Monte Carlo.
//!
//! For a prefix `p`, M(t | p) is the ratio of the expected number of
//! occurrences of `p·t` to that of `p` in a document wrapped as `$d$`.
//! A leading `$` in `p` only matches the start of a document. The empty
//! prefix occurs `|d| + 2` times per document.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpora::DocumentGenerator;
use crate::error::{Error, Result};
use crate::rng;
use crate::tasks::{score_completion, PromptInstance};
use crate::Token;

/// The `$` boundary symbol.
pub const BOUNDARY: Token = Token::MAX;

/// Draws documents i.i.d., deterministically per index.
pub trait DocumentSampler: Sync {
    fn sample(&self, index: u64) -> Vec<Token>;
}

/// Adapts a corpus generator; indices whose document is discarded are
/// redrawn so that samples follow the corpus distribution.
pub struct GeneratorSampler<'g, G: DocumentGenerator + ?Sized> {
    pub generator: &'g G,
}

impl<G: DocumentGenerator + ?Sized> DocumentSampler for GeneratorSampler<'_, G> {
    fn sample(&self, index: u64) -> Vec<Token> {
        for j in 0.. {
            let i = if j == 0 { index } else { rng::derive_seed(index, "redraw", j) };
            match self.generator.generate(i) {
                Ok(Some(d)) => return d.tokens,
                Ok(None) => continue,
                Err(e) => panic!("document generation failed: {e}"),
            }
        }
        unreachable!()
    }
}

/// A finite distribution over documents, sampled by inverse CDF.
#[derive(Debug, Clone)]
pub struct EnumerableSampler {
    pub documents: Vec<Vec<Token>>,
    pub probabilities: Vec<f64>,
    seed: u64,
}

impl EnumerableSampler {
    pub fn new(documents: Vec<Vec<Token>>, probabilities: Vec<f64>, seed: u64) -> Result<Self> {
        let total: f64 = probabilities.iter().sum();
        if documents.len() != probabilities.len()
            || documents.is_empty()
            || probabilities.iter().any(|&p| p < 0.0)
            || (total - 1.0).abs() > 1e-12
        {
            return Err(Error::Validation("document probabilities must form a distribution".into()));
        }
        Ok(EnumerableSampler {
            documents,
            probabilities,
            seed,
        })
    }

    /// The exact value of M(t | prefix), or `None` if the prefix has zero
    /// expected count.
    pub fn exact(&self, prefix: &[Token], t: Token) -> Option<f64> {
        let mut num = 0.0;
        let mut den = 0.0;
        for (d, &p) in self.documents.iter().zip(&self.probabilities) {
            let mut counts = BTreeMap::new();
            let n = count_in_document(d, prefix, &mut counts);
            den += p * n as f64;
            num += p * counts.get(&t).copied().unwrap_or(0) as f64;
        }
        (den > 0.0).then(|| num / den)
    }
}

impl DocumentSampler for EnumerableSampler {
    fn sample(&self, index: u64) -> Vec<Token> {
        use rand::Rng;
        let u: f64 = rng::stream(self.seed, "enumerable", index).random();
        let mut acc = 0.0;
        for (d, &p) in self.documents.iter().zip(&self.probabilities) {
            acc += p;
            if u < acc {
                return d.clone();
            }
        }
        self.documents.last().cloned().unwrap_or_default()
    }
}

/// Occurrences of `prefix` in `$d$`; next-symbol counts are added to
/// `next`. Returns the prefix count.
fn count_in_document(d: &[Token], prefix: &[Token], next: &mut BTreeMap<Token, u64>) -> u64 {
    let mut bump = |t: Token| *next.entry(t).or_insert(0) += 1;
    if prefix.is_empty() {
        for &t in d {
            bump(t);
        }
        *next.entry(BOUNDARY).or_insert(0) += 2;
        return d.len() as u64 + 2;
    }
    if prefix[0] == BOUNDARY {
        let body = &prefix[1..];
        if d.len() >= body.len() && d[..body.len()] == *body {
            bump(d.get(body.len()).copied().unwrap_or(BOUNDARY));
            return 1;
        }
        return 0;
    }
    let k = prefix.len();
    if d.len() < k {
        return 0;
    }
    let mut n = 0;
    for i in 0..=d.len() - k {
        if d[i..i + k] == *prefix {
            n += 1;
            bump(d.get(i + k).copied().unwrap_or(BOUNDARY));
        }
    }
    n
}

/// Per-symbol sums used by the ratio standard error.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RatioSums {
    pub sum: u64,
    pub sum_sq: u128,
    pub cross: u128,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictiveEstimate {
    pub prefix: Vec<Token>,
    pub next_token_counts: BTreeMap<Token, u64>,
    pub denominator: u64,
    pub n_docs: u64,
    pub undefined: bool,
    /// Present for direct estimates; per-document moments.
    pub moments: Option<Moments>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub denominator_sq: u128,
    pub symbols: BTreeMap<Token, RatioSums>,
}

impl PredictiveEstimate {
    pub fn probability(&self, t: Token) -> Option<f64> {
        (!self.undefined)
            .then(|| self.next_token_counts.get(&t).copied().unwrap_or(0) as f64 / self.denominator as f64)
    }

    pub fn total_probability(&self) -> Option<f64> {
        (!self.undefined).then(|| {
            self.next_token_counts.values().map(|&c| c as f64).sum::<f64>() / self.denominator as f64
        })
    }

    /// Delta-method standard error of the ratio estimate for `t`.
    pub fn std_error(&self, t: Token) -> Option<f64> {
        let m = self.moments.as_ref()?;
        if self.undefined || self.n_docs < 2 {
            return None;
        }
        let n = self.n_docs as f64;
        let r = self.probability(t)?;
        let s = m.symbols.get(&t).copied().unwrap_or_default();
        let resid = s.sum_sq as f64 - 2.0 * r * s.cross as f64 + r * r * m.denominator_sq as f64;
        let var = resid.max(0.0) / (n - 1.0);
        let mean_den = self.denominator as f64 / n;
        Some((var / n).sqrt() / mean_den)
    }

    /// Most probable next symbol; ties go to the smallest id.
    pub fn argmax(&self) -> Option<Token> {
        if self.undefined {
            return None;
        }
        let mut best: Option<(Token, u64)> = None;
        for (&t, &c) in &self.next_token_counts {
            if best.is_none_or(|(_, b)| c > b) {
                best = Some((t, c));
            }
        }
        best.map(|(t, _)| t)
    }
}

fn check_prefix(prefix: &[Token]) -> Result<()> {
    if prefix.iter().skip(1).any(|&t| t == BOUNDARY) {
        return Err(Error::Validation("boundary symbol allowed only at the start of a prefix".into()));
    }
    Ok(())
}

/// Documents processed per parallel batch.
const ORACLE_CHUNK: u64 = 8192;

/// Samples `n_docs` documents and estimates M(· | prefix).
pub fn estimate_next<S: DocumentSampler + ?Sized>(
    sampler: &S,
    prefix: &[Token],
    n_docs: u64,
) -> Result<PredictiveEstimate> {
    check_prefix(prefix)?;
    let chunks: Vec<(u64, u64)> = (0..n_docs)
        .step_by(ORACLE_CHUNK as usize)
        .map(|s| (s, (s + ORACLE_CHUNK).min(n_docs)))
        .collect();
    let partials: Vec<(u64, u128, BTreeMap<Token, RatioSums>)> = chunks
        .par_iter()
        .map(|&(a, b)| {
            let mut den = 0u64;
            let mut den_sq = 0u128;
            let mut syms: BTreeMap<Token, RatioSums> = BTreeMap::new();
            let mut next = BTreeMap::new();
            for i in a..b {
                let d = sampler.sample(i);
                next.clear();
                let n = count_in_document(&d, prefix, &mut next);
                den += n;
                den_sq += (n as u128) * (n as u128);
                for (&t, &c) in &next {
                    let s = syms.entry(t).or_default();
                    s.sum += c;
                    s.sum_sq += (c as u128) * (c as u128);
                    s.cross += (c as u128) * (n as u128);
                }
            }
            (den, den_sq, syms)
        })
        .collect();
    let mut moments = Moments::default();
    let mut denominator = 0;
    for (den, den_sq, syms) in partials {
        denominator += den;
        moments.denominator_sq += den_sq;
        for (t, s) in syms {
            let e = moments.symbols.entry(t).or_default();
            e.sum += s.sum;
            e.sum_sq += s.sum_sq;
            e.cross += s.cross;
        }
    }
    Ok(PredictiveEstimate {
        prefix: prefix.to_vec(),
        next_token_counts: moments.symbols.iter().map(|(&t, s)| (t, s.sum)).collect(),
        denominator,
        n_docs,
        undefined: denominator == 0,
        moments: Some(moments),
    })
}

/// Anything that yields next-symbol estimates for prefixes.
pub trait NextTokenModel: Sync {
    fn estimate(&self, prefix: &[Token]) -> PredictiveEstimate;
}

/// Sorted index over all document suffixes for answering many prefix
/// queries against one fixed sample of documents.
pub struct CorpusIndex {
    /// `$ d $` per document, concatenated.
    symbols: Vec<Token>,
    /// Suffix starts: one at each document's leading `$`, one per token.
    suffixes: Vec<u32>,
    n_docs: u64,
    total_tokens: u64,
    token_counts: BTreeMap<Token, u64>,
}

impl CorpusIndex {
    pub fn build<S: DocumentSampler + ?Sized>(sampler: &S, n_docs: u64) -> Result<Self> {
        let docs: Vec<Vec<Token>> = (0..n_docs).into_par_iter().map(|i| sampler.sample(i)).collect();
        Self::from_documents(&docs)
    }

    pub fn from_documents(docs: &[Vec<Token>]) -> Result<Self> {
        let total: usize = docs.iter().map(|d| d.len() + 2).sum();
        if total > u32::MAX as usize {
            return Err(Error::Capacity("index limited to 2^32 symbols".into()));
        }
        let mut symbols = Vec::with_capacity(total);
        let mut suffixes = Vec::with_capacity(total - docs.len());
        let mut token_counts = BTreeMap::new();
        for d in docs {
            suffixes.push(symbols.len() as u32);
            symbols.push(BOUNDARY);
            for &t in d {
                if t == BOUNDARY {
                    return Err(Error::Validation("documents may not contain the boundary symbol".into()));
                }
                suffixes.push(symbols.len() as u32);
                symbols.push(t);
                *token_counts.entry(t).or_insert(0) += 1;
            }
            symbols.push(BOUNDARY);
        }
        let syms = &symbols;
        suffixes.par_sort_unstable_by(|&a, &b| compare_suffixes(syms, a as usize, b as usize));
        Ok(CorpusIndex {
            total_tokens: token_counts.values().sum(),
            symbols,
            suffixes,
            n_docs: docs.len() as u64,
            token_counts,
        })
    }

    pub fn n_docs(&self) -> u64 {
        self.n_docs
    }

    /// Suffix symbol at offset `k` from `start`; `None` past the
    /// terminating boundary.
    fn at(&self, start: usize, k: usize) -> Option<Token> {
        let s = self.symbols[start + k];
        (0..k).all(|j| j == 0 || self.symbols[start + j] != BOUNDARY).then_some(s)
    }

    /// Suffixes whose first symbols equal `pattern`.
    fn range(&self, pattern: &[Token]) -> std::ops::Range<usize> {
        // Pattern symbols past the first are never the boundary, so a
        // match cannot run past the end of a document.
        let cmp = |&start: &u32| -> std::cmp::Ordering {
            let start = start as usize;
            for (k, &p) in pattern.iter().enumerate() {
                match sym_order(self.symbols[start + k]).cmp(&sym_order(p)) {
                    std::cmp::Ordering::Equal => {}
                    o => return o,
                }
            }
            std::cmp::Ordering::Equal
        };
        let lo = self.suffixes.partition_point(|s| cmp(s) == std::cmp::Ordering::Less);
        let hi = self.suffixes.partition_point(|s| cmp(s) != std::cmp::Ordering::Greater);
        lo..hi
    }
}

/// Boundary sorts before every token.
fn sym_order(t: Token) -> u64 {
    if t == BOUNDARY {
        0
    } else {
        t as u64 + 1
    }
}

fn compare_suffixes(symbols: &[Token], a: usize, b: usize) -> std::cmp::Ordering {
    let mut k = 0;
    loop {
        let (x, y) = (symbols[a + k], symbols[b + k]);
        match sym_order(x).cmp(&sym_order(y)) {
            std::cmp::Ordering::Equal => {
                if x == BOUNDARY && k > 0 {
                    return std::cmp::Ordering::Equal;
                }
            }
            o => return o,
        }
        k += 1;
    }
}

impl NextTokenModel for CorpusIndex {
    fn estimate(&self, prefix: &[Token]) -> PredictiveEstimate {
        let mut next = BTreeMap::new();
        let denominator;
        if prefix.is_empty() {
            next = self.token_counts.clone();
            next.insert(BOUNDARY, 2 * self.n_docs);
            denominator = self.total_tokens + 2 * self.n_docs;
        } else if prefix.iter().skip(1).any(|&t| t == BOUNDARY) {
            denominator = 0;
        } else {
            let r = self.range(prefix);
            denominator = r.len() as u64;
            let k = prefix.len();
            for &s in &self.suffixes[r] {
                if let Some(t) = self.at(s as usize, k) {
                    *next.entry(t).or_insert(0) += 1;
                }
            }
        }
        PredictiveEstimate {
            prefix: prefix.to_vec(),
            next_token_counts: next,
            denominator,
            n_docs: self.n_docs,
            undefined: denominator == 0,
            moments: None,
        }
    }
}

/// Greedy decoding of `answer_len` symbols; `None` (abstain) as soon as
/// an estimate is undefined. Decoding stops after a boundary symbol.
pub fn predict_completion<M: NextTokenModel + ?Sized>(model: &M, prefix: &[Token], answer_len: usize) -> Option<Vec<Token>> {
    let mut ctx = prefix.to_vec();
    let mut out = Vec::with_capacity(answer_len);
    for _ in 0..answer_len {
        let t = model.estimate(&ctx).argmax()?;
        out.push(t);
        if t == BOUNDARY {
            break;
        }
        ctx.push(t);
    }
    Some(out)
}

/// Exact argmax of M(ω | prefix) over sequences of length 1 or 2; ties go
/// to the lexicographically smallest sequence.
pub fn joint_argmax<M: NextTokenModel + ?Sized>(model: &M, prefix: &[Token], answer_len: usize) -> Result<Option<Vec<Token>>> {
    match answer_len {
        1 => Ok(model.estimate(prefix).argmax().map(|t| vec![t])),
        2 => {
            let first = model.estimate(prefix);
            if first.undefined {
                return Ok(None);
            }
            let mut best: Option<(Vec<Token>, f64)> = None;
            for (&a, _) in &first.next_token_counts {
                let pa = first.probability(a).unwrap_or(0.0);
                let cands: Vec<(Token, f64)> = if a == BOUNDARY {
                    vec![(BOUNDARY, 1.0)]
                } else {
                    let mut ctx = prefix.to_vec();
                    ctx.push(a);
                    let e = model.estimate(&ctx);
                    e.next_token_counts
                        .keys()
                        .map(|&b| (b, e.probability(b).unwrap_or(0.0)))
                        .collect()
                };
                for (b, pb) in cands {
                    let p = pa * pb;
                    if best.as_ref().is_none_or(|(_, q)| p > *q) {
                        best = Some((vec![a, b], p));
                    }
                }
            }
            Ok(best.map(|(s, _)| s))
        }
        n => Err(Error::Validation(format!("joint argmax supports lengths 1 and 2, not {n}"))),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub task: String,
    pub variant: String,
    pub prompt_length: usize,
    pub n_docs: u64,
    /// Abstentions count as errors.
    pub error: f64,
    pub abstention_rate: f64,
    pub stderr: f64,
    pub n_prompts: usize,
    /// Prompt requests that were infeasible (capacity errors).
    pub n_infeasible: usize,
}

/// Zero-one error of greedy predictions on prompts from `build(length,
/// seed)`, averaged over `n_prompt_seeds` seeds per length.
pub fn icl_error_curve<M, F>(
    model: &M,
    task: &str,
    variant: &str,
    lengths: &[usize],
    n_prompt_seeds: u64,
    seed: u64,
    build: F,
) -> Result<Vec<CurveRow>>
where
    M: NextTokenModel + ?Sized,
    F: Fn(usize, u64) -> Result<PromptInstance> + Sync,
{
    let mut rows = Vec::with_capacity(lengths.len());
    for &len in lengths {
        let outcomes: Vec<Result<Option<(bool, bool)>>> = (0..n_prompt_seeds)
            .into_par_iter()
            .map(|i| match build(len, rng::derive_seed(seed, "curve-prompt", i)) {
                Ok(p) => {
                    let pred = predict_completion(model, &p.tokens, p.reference.len());
                    Ok(Some(match pred {
                        Some(c) => (score_completion(&p, &c).correct, false),
                        None => (false, true),
                    }))
                }
                Err(Error::Capacity(_)) => Ok(None),
                Err(e) => Err(e),
            })
            .collect();
        let mut n = 0usize;
        let mut wrong = 0usize;
        let mut abstain = 0usize;
        let mut infeasible = 0usize;
        for o in outcomes {
            match o? {
                Some((correct, abst)) => {
                    n += 1;
                    wrong += usize::from(!correct);
                    abstain += usize::from(abst);
                }
                None => infeasible += 1,
            }
        }
        let (error, abstention_rate, stderr) = if n == 0 {
            (f64::NAN, f64::NAN, f64::NAN)
        } else {
            let e = wrong as f64 / n as f64;
            (e, abstain as f64 / n as f64, (e * (1.0 - e) / n as f64).sqrt())
        };
        rows.push(CurveRow {
            task: task.to_string(),
            variant: variant.to_string(),
            prompt_length: len,
            n_docs: model_n_docs(model),
            error,
            abstention_rate,
            stderr,
            n_prompts: n,
            n_infeasible: infeasible,
        });
    }
    Ok(rows)
}

fn model_n_docs<M: NextTokenModel + ?Sized>(model: &M) -> u64 {
    model.estimate(&[]).n_docs
}

/// CSV with columns `task,variant,prompt_length,n_docs,error,abstention_rate,stderr`.
pub fn write_curve_csv<W: std::io::Write>(mut sink: W, rows: &[CurveRow]) -> Result<()> {
    writeln!(sink, "task,variant,prompt_length,n_docs,error,abstention_rate,stderr")?;
    for r in rows {
        writeln!(
            sink,
            "{},{},{},{},{},{},{}",
            r.task, r.variant, r.prompt_length, r.n_docs, r.error, r.abstention_rate, r.stderr
        )?;
    }
    sink.flush()?;
    Ok(())
}
