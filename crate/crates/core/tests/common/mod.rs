#![allow(dead_code)]

pub mod script;

use std::collections::HashSet;

use scriptworld::tasks::{
    build_composition_prompt, builtin_task, sample_prompt, BindingPolicy, BoundTask, ChainOptions, PromptInstance, TaskSpec,
    Variant,
};
use scriptworld::{Token, WorldModel};

/// Hand transcription of the task formulas, written independently of the
/// library's literal tables. `f(i, x)` applies the function in slot `i`.
pub fn reference_holds(
    task: usize,
    world: &WorldModel,
    fs: &[usize],
    labels: Option<[Token; 2]>,
    x: Token,
    y: Token,
    z: Token,
) -> bool {
    let f = |slot: usize, v: Token| world.eval(fs[slot], v);
    let (i, j, k) = (0, 1, 2);
    let omega = 0..world.omega_size() as Token;
    let l = |c: usize| labels.map(|ls| ls[c]);
    match task {
        0 => f(i, x) == z,
        1 => f(i, z) == x,
        2 => (f(i, x) == z && f(j, z) == y) || (f(i, y) == z && f(j, z) == x),
        3 => (f(i, x) == z && f(i, z) == y) || (f(j, z) == x && f(j, z) == y),
        4 => (f(i, x) == z && f(j, z) == y) || (f(i, x) == y && f(j, x) == z),
        5 => (f(i, x) == z && f(i, z) == y) || (f(j, x) == y && f(j, z) == x),
        6 => (f(i, x) == z && f(j, z) == y) || (f(i, z) == x && f(j, y) == z),
        7 => (f(i, x) == z && f(j, z) == y) || (f(i, z) == x && f(k, z) == y),
        8 => {
            (f(i, x) == z && f(j, y) == x)
                || (f(i, z) == x && f(j, x) == y)
                || (f(j, y) == z && f(k, y) == x)
                || (f(j, z) == y && f(k, x) == y)
        }
        9 => {
            (f(k, x) == z && f(j, y) == x)
                || (f(i, x) == z && f(k, x) == y)
                || (f(i, z) == x && f(k, y) == x)
                || (f(j, z) == y && f(i, y) == x)
        }
        10 => {
            (f(i, x) == z && f(j, y) == x)
                || (f(i, z) == x && f(j, x) == y)
                || (f(i, y) == z && f(k, y) == x)
                || (f(i, z) == y && f(k, x) == y)
        }
        11 => f(j, f(i, x)) == z,
        12 => omega.clone().any(|a| {
            (f(i, x) == z && f(j, a) == y && f(k, z) == a) || (f(i, z) == x && f(j, a) == z && f(k, y) == a)
        }),
        13 => (y == f(i, x) && Some(z) == l(0)) || (y == f(j, x) && Some(z) == l(1)),
        14 => (y == f(i, x) && Some(z) == l(0)) || (x == f(i, y) && Some(z) == l(1)),
        15 => {
            (y == f(i, x) && Some(z) == l(0))
                || (omega.clone().any(|a| x == f(i, a) && a == f(i, y)) && Some(z) == l(1))
        }
        _ => panic!("unknown task {task}"),
    }
}

/// Checks every property a constructed prompt must have; returns a
/// description of the first violation.
pub fn check_prompt(world: &WorldModel, spec: &TaskSpec, p: &PromptInstance) -> Result<(), String> {
    let bound = BoundTask::new(spec.clone(), p.functions.clone(), p.labels, p.separator).map_err(|e| e.to_string())?;
    let arity = spec.arity;
    // Layout.
    let mut expected = Vec::new();
    for e in &p.examples {
        expected.extend_from_slice(&e.inputs);
        expected.extend_from_slice(&e.outputs);
        expected.push(p.separator);
    }
    expected.extend_from_slice(&p.query.inputs);
    if expected != p.tokens {
        return Err("token layout does not match examples".into());
    }
    if p.tokens.len() != (arity + 2) * p.num_examples + arity {
        return Err(format!("prompt has {} tokens", p.tokens.len()));
    }
    // Uniqueness and distinct inputs.
    let mut seen = HashSet::new();
    for e in p.examples.iter().chain([&p.query]) {
        if !seen.insert(e.inputs.clone()) {
            return Err(format!("repeated input {:?}", e.inputs));
        }
        let (x, y) = (e.inputs[0], e.inputs.get(1).copied());
        let sols = bound.enumerate_solutions(world, x, y);
        if sols.len() != 1 || sols[0] != e.outputs[0] {
            return Err(format!("input {:?} has solutions {sols:?}, prompt says {:?}", e.inputs, e.outputs));
        }
        let yy = y.unwrap_or(0);
        if !reference_holds(spec.task_id, world, &p.functions, p.labels, x, yy, sols[0]) {
            return Err(format!("independent evaluator rejects {:?}", e.inputs));
        }
        if bound.satisfied_disjuncts(world, x, yy, sols[0]) & (1 << e.target) == 0 {
            return Err(format!("example {:?} does not satisfy its target disjunct", e.inputs));
        }
    }
    if p.reference != p.query.outputs {
        return Err("reference differs from query answer".into());
    }
    // Balance over examples.
    let n_targets = spec.disjuncts.len();
    if n_targets > 1 {
        let mut counts = vec![0usize; n_targets];
        for e in &p.examples {
            counts[e.target] += 1;
        }
        let (lo, hi) = (counts.iter().min().unwrap(), counts.iter().max().unwrap());
        if hi - lo > 1 {
            return Err(format!("disjunct counts {counts:?}"));
        }
        if let Some(labels) = p.labels {
            let a = p.examples.iter().filter(|e| e.outputs[0] == labels[0]).count();
            let b = p.examples.iter().filter(|e| e.outputs[0] == labels[1]).count();
            if a + b != p.num_examples || a.abs_diff(b) > p.num_examples % 2 {
                return Err(format!("class counts {a} vs {b}"));
            }
        }
    }
    Ok(())
}

/// Test prompts of every kind, completed with their reference.
pub fn planted_prompts(w: &WorldModel, n: usize, seed: u64) -> Vec<Vec<Token>> {
    let mut out = Vec::new();
    let mut i = 0u64;
    while out.len() < n {
        let k = 4 + 2 * (i as usize % 6);
        let s = seed + i;
        let p = match i % 20 {
            t @ 0..=15 => sample_prompt(&builtin_task(t as usize).unwrap(), w, &BindingPolicy::default(), k, s),
            16 => build_composition_prompt(w, &ChainOptions::new(Variant::Cot, 2 + (i as usize / 20) % 3), k, s),
            17 => build_composition_prompt(w, &ChainOptions::new(Variant::Explanation, 2 + (i as usize / 20) % 3), k, s),
            18 => sample_prompt(&builtin_task(2).unwrap(), w, &BindingPolicy::recombined(), k, s),
            _ => build_composition_prompt(w, &ChainOptions::new(Variant::Raw, 2), k, s),
        };
        i += 1;
        let Ok(p) = p else { continue };
        let mut t = p.tokens.clone();
        t.extend_from_slice(&p.reference);
        out.push(t);
    }
    out
}

pub fn splice(doc: &[Token], insert: &[Token], at: usize) -> Vec<Token> {
    let at = at.min(doc.len());
    let mut v = doc[..at].to_vec();
    v.extend_from_slice(insert);
    v.extend_from_slice(&doc[at..]);
    v
}
