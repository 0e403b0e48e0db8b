//! Compound-PCFG sampling of document scripts.
//!
//! Each document draws its own command-production probabilities from a flat
//! hyperprior over the simplex, restricted to vectors whose expected
//! document length stays within the context length. Scripts are then
//! derived top-down with depth-scaled recursion, blocking of productions
//! that need unavailable variables, and a per-production preference over
//! open variables.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, StreamRng};
use crate::world::WorldModel;
use crate::Token;

use super::ast::{Block, Command, Condition, ScriptAst, MAX_BLOCK_LEN};
use super::exec::Executor;

/// Command productions, in the order used by [`GrammarParams::command_probs`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Production {
    Print = 0,
    If = 1,
    Loop = 2,
    ForSome = 3,
}

const PRODUCTIONS: [Production; 4] = [
    Production::Print,
    Production::If,
    Production::Loop,
    Production::ForSome,
];

/// One mixture component of the compound PCFG.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrammarParams {
    /// Probabilities of PRINT, IF, LOOP, FOR SOME.
    pub command_probs: [f64; 4],
    /// `block_len_probs[l - 1]` is the probability of a block of `l` commands.
    pub block_len_probs: [f64; MAX_BLOCK_LEN],
    pub depth_penalty_exponent: f64,
    pub seed: u64,
}

impl GrammarParams {
    /// `p(l) ∝ (1 + l)^-4` for `1 ≤ l ≤ 10`.
    pub fn power_law_block_lengths() -> [f64; MAX_BLOCK_LEN] {
        let mut p = [0.0; MAX_BLOCK_LEN];
        for (i, v) in p.iter_mut().enumerate() {
            *v = (2.0 + i as f64).powi(-4);
        }
        let z: f64 = p.iter().sum();
        p.iter_mut().for_each(|v| *v /= z);
        p
    }

    pub fn new(command_probs: [f64; 4], seed: u64) -> Result<Self> {
        let params = GrammarParams {
            command_probs,
            block_len_probs: Self::power_law_block_lengths(),
            depth_penalty_exponent: 2.0,
            seed,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        check_distribution("command_probs", &self.command_probs)?;
        check_distribution("block_len_probs", &self.block_len_probs)?;
        if !self.depth_penalty_exponent.is_finite() || self.depth_penalty_exponent < 0.0 {
            return Err(Error::Validation(
                "depth_penalty_exponent must be a nonnegative real".to_string(),
            ));
        }
        Ok(())
    }

    pub fn mean_block_len(&self) -> f64 {
        self.block_len_probs
            .iter()
            .enumerate()
            .map(|(i, p)| (i + 1) as f64 * p)
            .sum()
    }
}

fn check_distribution(name: &str, p: &[f64]) -> Result<()> {
    if p.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::Validation(format!("{name} has a negative or non-finite entry")));
    }
    let total: f64 = p.iter().sum();
    if (total - 1.0).abs() > 1e-12 {
        return Err(Error::Validation(format!("{name} sums to {total}, not 1")));
    }
    Ok(())
}

/// Removes productions from the grammar.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AblationFlags {
    #[serde(default)]
    pub no_loop: bool,
    #[serde(default)]
    pub no_forsome: bool,
    #[serde(default)]
    pub no_if: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerConfig {
    /// Productions that would open more variables than this are blocked.
    pub max_open_vars: usize,
    /// At this depth only PRINT remains available.
    pub depth_cap: usize,
    pub loop_arity: usize,
    /// Weight of the uniform component in variable choices.
    pub uniform_mix: f64,
    /// Budget for rejecting scripts that violate `forbid_pair`.
    pub max_resamples: usize,
    /// Consecutive hyperprior draws rejected before giving up.
    pub max_param_rejections: usize,
    /// Bound on the expected document length (the context length).
    pub length_limit: f64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            max_open_vars: 8,
            depth_cap: 16,
            loop_arity: super::exec::DEFAULT_LOOP_ARITY,
            uniform_mix: 0.5,
            max_resamples: 1000,
            max_param_rejections: 10_000,
            length_limit: 64.0,
        }
    }
}

impl SamplerConfig {
    fn loop_arity_for(&self, omega_size: usize) -> usize {
        self.loop_arity.clamp(1, omega_size)
    }
}

/// Per-script constraints.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptConstraints {
    pub ablation: AblationFlags,
    /// Reject scripts mentioning both functions of this pair.
    pub forbid_pair: Option<(usize, usize)>,
    /// Free variables at the root, bound to uniform random objects.
    pub free_vars: usize,
}

impl ScriptConstraints {
    /// Constraints for pretraining documents: the loop ablation injects one
    /// randomly bound free variable so that something can be printed.
    pub fn for_documents(ablation: AblationFlags, forbid_pair: Option<(usize, usize)>) -> Self {
        ScriptConstraints {
            ablation,
            forbid_pair,
            free_vars: usize::from(ablation.no_loop),
        }
    }
}

/// Normalized production distribution at `depth` (root = 1) with `open`
/// variables in scope, or `None` when no production is available.
pub fn production_weights(
    params: &GrammarParams,
    config: &SamplerConfig,
    ablation: AblationFlags,
    depth: usize,
    open: usize,
) -> Option<[f64; 4]> {
    let recursive_ok = depth < config.depth_cap;
    let allowed = [
        open >= 1,
        recursive_ok && !ablation.no_if && open >= 2,
        recursive_ok && !ablation.no_loop && open < config.max_open_vars,
        recursive_ok && !ablation.no_forsome && open >= 1 && open < config.max_open_vars,
    ];
    let n_allowed = allowed.iter().filter(|&&a| a).count();
    if n_allowed == 0 {
        return None;
    }
    let scale = (depth as f64).powf(-params.depth_penalty_exponent);
    let mut w = [0.0; 4];
    for (i, prod) in PRODUCTIONS.iter().enumerate() {
        if allowed[i] {
            w[i] = params.command_probs[i]
                * if *prod == Production::Print { 1.0 } else { scale };
        }
    }
    let total: f64 = w.iter().sum();
    if total > 0.0 {
        w.iter_mut().for_each(|v| *v /= total);
    } else {
        for i in 0..4 {
            w[i] = if allowed[i] { 1.0 / n_allowed as f64 } else { 0.0 };
        }
    }
    Some(w)
}

/// Expected document length with every FOR SOME assumed satisfiable.
///
/// Exact for the derivation process apart from FOR SOME skips, which only
/// shorten documents, so this is an upper bound on the expected length.
/// Returns `+inf` when the root state has no available production.
pub fn expected_length_bound(
    params: &GrammarParams,
    config: &SamplerConfig,
    omega_size: usize,
    constraints: &ScriptConstraints,
) -> f64 {
    let cap = config.depth_cap.max(1);
    let max_k = config.max_open_vars.max(constraints.free_vars);
    let arity = config.loop_arity_for(omega_size) as f64;
    let mean_len = params.mean_block_len();
    // cmd[d][k]: expected yield of a command at depth d with k open variables.
    let mut cmd = vec![vec![f64::INFINITY; max_k + 2]; cap + 2];
    for depth in (1..=cap).rev() {
        for k in 0..=max_k {
            let Some(w) = production_weights(params, config, constraints.ablation, depth, k) else {
                continue;
            };
            let child = |kk: usize| mean_len * cmd[depth + 1][kk.min(max_k + 1)];
            let terms = [
                1.0,
                child(k),
                arity * child(k + 1),
                child(k + 1),
            ];
            cmd[depth][k] = w
                .iter()
                .zip(terms)
                .filter(|(p, _)| **p > 0.0)
                .map(|(p, t)| p * t)
                .sum();
        }
    }
    cmd[1][constraints.free_vars]
}

/// Monte-Carlo estimate of an expected length.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LengthEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub n_samples: usize,
}

/// A sampled script together with its free-variable bindings and yield.
#[derive(Debug, Clone)]
pub struct SampledDocument {
    pub script: ScriptAst,
    pub bindings: Vec<Token>,
    pub tokens: Vec<Token>,
}

/// Samples a script from `params` and executes it. Free variables (the
/// loop ablation) are bound to uniform random objects.
pub fn sample_document(
    params: &GrammarParams,
    world: &WorldModel,
    seed: u64,
    config: &SamplerConfig,
    constraints: &ScriptConstraints,
) -> Result<SampledDocument> {
    let script = sample_script(params, world, seed, config, constraints)?;
    let mut bind_rng = rng::stream(seed, "bindings", 0);
    let bindings: Vec<Token> = (0..constraints.free_vars)
        .map(|_| bind_rng.random_range(0..world.omega_size() as Token))
        .collect();
    let mut tokens = Vec::new();
    Executor::new(world, rng::derive_seed(seed, "execute", 0), ())
        .with_loop_arity(config.loop_arity)
        .run(&script, &bindings, &mut tokens);
    Ok(SampledDocument {
        script,
        bindings,
        tokens,
    })
}

/// Mean and standard error of document length over `n_samples` scripts.
pub fn estimate_expected_length(
    params: &GrammarParams,
    world: &WorldModel,
    n_samples: usize,
    seed: u64,
    config: &SamplerConfig,
    constraints: &ScriptConstraints,
) -> Result<LengthEstimate> {
    if n_samples == 0 {
        return Err(Error::Validation("n_samples must be at least 1".to_string()));
    }
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for i in 0..n_samples {
        let doc = sample_document(
            params,
            world,
            rng::derive_seed(seed, "length-estimate", i as u64),
            config,
            constraints,
        )?;
        let len = doc.tokens.len() as f64;
        sum += len;
        sum_sq += len * len;
    }
    let n = n_samples as f64;
    let mean = sum / n;
    let std_error = if n_samples > 1 {
        let var = ((sum_sq - n * mean * mean) / (n - 1.0)).max(0.0);
        (var / n).sqrt()
    } else {
        0.0
    };
    Ok(LengthEstimate {
        mean,
        std_error,
        n_samples,
    })
}

/// Draws production probabilities from the flat simplex, keeping the first
/// vector whose expected document length is within the limit.
pub fn sample_grammar_params(
    world: &WorldModel,
    seed: u64,
    config: &SamplerConfig,
    constraints: &ScriptConstraints,
) -> Result<GrammarParams> {
    let mut rng = rng::stream(seed, "grammar-params", 0);
    let block_len_probs = GrammarParams::power_law_block_lengths();
    for _ in 0..config.max_param_rejections {
        let mut draw = [0.0f64; 4];
        for v in draw.iter_mut() {
            // Exp(1) variates normalize to a uniform point on the simplex.
            *v = -(1.0 - rng.random::<f64>()).ln();
        }
        let total: f64 = draw.iter().sum();
        draw.iter_mut().for_each(|v| *v /= total);
        // Exact renormalization so the probabilities sum to 1 within 1e-12.
        draw[0] = 1.0 - draw[1..].iter().sum::<f64>();
        let params = GrammarParams {
            command_probs: draw,
            block_len_probs,
            depth_penalty_exponent: 2.0,
            seed,
        };
        if expected_length_bound(&params, config, world.omega_size(), constraints)
            <= config.length_limit
        {
            return Ok(params);
        }
    }
    Err(Error::Generation(format!(
        "no production vector with expected length <= {} after {} draws",
        config.length_limit, config.max_param_rejections
    )))
}

/// Samples one script. Scripts mentioning both functions of
/// `constraints.forbid_pair` are rejected and redrawn from the same stream.
pub fn sample_script(
    params: &GrammarParams,
    world: &WorldModel,
    seed: u64,
    config: &SamplerConfig,
    constraints: &ScriptConstraints,
) -> Result<ScriptAst> {
    let mut sampler = ScriptSampler {
        params,
        config,
        ablation: constraints.ablation,
        num_functions: world.num_functions(),
        rng: rng::stream(seed, "script", 0),
    };
    let attempts = if constraints.forbid_pair.is_some() {
        config.max_resamples.max(1)
    } else {
        1
    };
    for _ in 0..attempts {
        let root = sampler.command(1, constraints.free_vars, &vec![
            1.0 / constraints.free_vars.max(1) as f64;
            constraints.free_vars
        ])?;
        let ast = ScriptAst {
            free_vars: constraints.free_vars,
            root,
        };
        match constraints.forbid_pair {
            Some(pair) if ast.uses_both(pair) => continue,
            _ => return Ok(ast),
        }
    }
    Err(Error::Generation(format!(
        "every one of {attempts} scripts used both functions of the forbidden pair"
    )))
}

struct ScriptSampler<'a> {
    params: &'a GrammarParams,
    config: &'a SamplerConfig,
    ablation: AblationFlags,
    num_functions: usize,
    rng: StreamRng,
}

fn sample_index(rng: &mut StreamRng, weights: &[f64]) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        if *w > 0.0 {
            if u < *w {
                return i;
            }
            u -= w;
        }
    }
    weights.iter().rposition(|w| *w > 0.0).unwrap_or(0)
}

impl ScriptSampler<'_> {
    /// `mix * uniform + (1 - mix) * pref` over `open` variables.
    fn mixed(&self, pref: &[f64], open: usize) -> Vec<f64> {
        let mix = self.config.uniform_mix;
        let uniform = 1.0 / open.max(1) as f64;
        (0..open)
            .map(|v| mix * uniform + (1.0 - mix) * pref.get(v).copied().unwrap_or(0.0))
            .collect()
    }

    fn dirac(open: usize, v: usize) -> Vec<f64> {
        let mut p = vec![0.0; open];
        p[v] = 1.0;
        p
    }

    fn function(&mut self) -> usize {
        self.rng.random_range(1..=self.num_functions)
    }

    fn block(&mut self, depth: usize, open: usize, pref: &[f64]) -> Result<Block> {
        let len = sample_index(&mut self.rng, &self.params.block_len_probs) + 1;
        let mut commands = Vec::with_capacity(len);
        for _ in 0..len {
            commands.push(self.command(depth, open, pref)?);
        }
        Ok(Block(commands))
    }

    fn command(&mut self, depth: usize, open: usize, pref: &[f64]) -> Result<Command> {
        let weights = production_weights(self.params, self.config, self.ablation, depth, open)
            .ok_or_else(|| {
                Error::Generation(format!(
                    "no production available at depth {depth} with {open} open variables"
                ))
            })?;
        let mixed = self.mixed(pref, open);
        Ok(match PRODUCTIONS[sample_index(&mut self.rng, &weights)] {
            Production::Print => Command::Print(sample_index(&mut self.rng, &mixed)),
            Production::If => {
                let arg = sample_index(&mut self.rng, &mixed);
                let mut rest = mixed.clone();
                rest[arg] = 0.0;
                let result = sample_index(&mut self.rng, &rest);
                let function = self.function();
                let then_block = self.block(depth + 1, open, &mixed)?;
                let else_block = self.block(depth + 1, open, &mixed)?;
                Command::If {
                    condition: Condition::new(function, arg, result),
                    then_block,
                    else_block,
                }
            }
            Production::Loop => Command::Loop {
                body: self.block(depth + 1, open + 1, &Self::dirac(open + 1, open))?,
            },
            Production::ForSome => {
                let function = self.function();
                let other = sample_index(&mut self.rng, &mixed);
                let condition = if self.rng.random::<bool>() {
                    Condition::new(function, open, other)
                } else {
                    Condition::new(function, other, open)
                };
                Command::ForSome {
                    condition,
                    body: self.block(depth + 1, open + 1, &Self::dirac(open + 1, open))?,
                }
            }
        })
    }
}
