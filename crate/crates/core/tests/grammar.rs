use std::collections::{BTreeSet, HashMap, HashSet};

use proptest::prelude::*;
use regex::Regex;
use scriptworld::grammar::express::{express_two_dnf, loop_over};
use scriptworld::grammar::*;
use scriptworld::rng::derive_seed;
use scriptworld::{Token, WorldModel};
use statrs::distribution::{ChiSquared, ContinuousCDF};

mod common;

use common::script::{dnf_terms, replay_check, term_holds};

const EXAMPLE_1: &str = include_str!("data/example1.txt");
const EXAMPLE_2: &str = include_str!("data/example2.txt");

fn zero_based() -> ParseOptions {
    ParseOptions {
        naming: FunctionNaming::ZeroBased,
        free_vars: 0,
    }
}

/// The examples mention f0..f9 (zero-based), so they need ten functions.
fn example_world() -> WorldModel {
    WorldModel::sample(6, 10, 42).unwrap()
}

fn sampled_scripts(world: &WorldModel, n: u64, seed: u64) -> Vec<ScriptAst> {
    let cfg = SamplerConfig::default();
    let cons = ScriptConstraints::for_documents(AblationFlags::default(), Some((2, 3)));
    (0..n)
        .map(|i| {
            let s = derive_seed(seed, "test-script", i);
            let params = sample_grammar_params(world, s, &cfg, &cons).unwrap();
            sample_script(&params, world, s, &cfg, &cons).unwrap()
        })
        .collect()
}

#[test]
fn example_1_structure() {
    let ast = parse_script_with(EXAMPLE_1, zero_based()).unwrap();
    let Command::Loop { body } = &ast.root else {
        panic!("root is not a loop")
    };
    assert_eq!(body.0.len(), 2);
    assert!(body.0.iter().all(|c| matches!(c, Command::ForSome { .. })));
    let labels: BTreeSet<usize> = ast.uses_functions().into_iter().map(|f| f - 1).collect();
    assert_eq!(labels, BTreeSet::from([0, 1, 3, 5]));
}

#[test]
fn examples_round_trip_text() {
    for text in [EXAMPLE_1, EXAMPLE_2] {
        let ast = parse_script_with(text, zero_based()).unwrap();
        let rendered = render_script_with(&ast, FunctionNaming::ZeroBased);
        assert_eq!(normalize_whitespace(&rendered), normalize_whitespace(text));
        assert_eq!(parse_script_with(&rendered, zero_based()).unwrap(), ast);
    }
}

#[test]
fn loop_over_print_renders_canonically() {
    let ast = ScriptAst::document(Command::looped(vec![Command::print(0)]));
    assert_eq!(render_script(&ast), "LOOP OVER x0 DO\n PRINT x0\nENDFOR");
}

#[test]
fn sampled_scripts_round_trip_and_render_injectively() {
    let world = WorldModel::sample(30, 10, 1).unwrap();
    let scripts = sampled_scripts(&world, 10_000, 5);
    let fn_re = Regex::new(r"f(\d+)\(").unwrap();
    let mut seen: HashMap<String, &ScriptAst> = HashMap::new();
    for ast in &scripts {
        let text = render_script(ast);
        assert_eq!(&parse_script(&text).unwrap(), ast);
        let scanned: BTreeSet<usize> = fn_re
            .captures_iter(&text)
            .map(|c| c[1].parse().unwrap())
            .collect();
        assert_eq!(scanned, ast.uses_functions());
        if let Some(prev) = seen.insert(text, ast) {
            assert_eq!(prev, ast, "two ASTs render identically");
        }
    }
    let distinct: HashSet<&ScriptAst> = scripts.iter().collect();
    assert_eq!(distinct.len(), seen.len());
}

#[test]
fn print_only_script_uses_no_functions() {
    let ast = ScriptAst::document(Command::looped(vec![Command::print(0), Command::print(0)]));
    assert!(ast.uses_functions().is_empty());
}

#[test]
fn example_1_execution_obeys_its_relations() {
    let world = example_world();
    let ast = parse_script_with(EXAMPLE_1, zero_based()).unwrap();
    for seed in 0..200 {
        replay_check(&ast, &world, &[], seed);
    }
}

#[test]
fn sampled_executions_replay() {
    let world = WorldModel::sample(8, 5, 3).unwrap();
    for (i, ast) in sampled_scripts(&world, 1000, 9).iter().enumerate() {
        replay_check(ast, &world, &[], i as u64);
    }
}

#[test]
fn root_block_lengths_follow_power_law() {
    let world = WorldModel::sample(30, 10, 1).unwrap();
    let cfg = SamplerConfig::default();
    let cons = ScriptConstraints::for_documents(AblationFlags::default(), None);
    let params = GrammarParams::new([0.5, 0.2, 0.1, 0.2], 0).unwrap();
    let n = 100_000;
    let mut hist = [0u64; MAX_BLOCK_LEN];
    for i in 0..n {
        let ast = sample_script(&params, &world, i, &cfg, &cons).unwrap();
        let Command::Loop { body } = ast.root else {
            panic!("document root must be a loop")
        };
        hist[body.0.len() - 1] += 1;
    }
    let z: f64 = (1..=10).map(|l| (1.0 + l as f64).powi(-4)).sum();
    let stat: f64 = (1..=10)
        .map(|l| {
            let e = n as f64 * (1.0 + l as f64).powi(-4) / z;
            (hist[l - 1] as f64 - e).powi(2) / e
        })
        .sum();
    let p = ChiSquared::new(9.0).unwrap().sf(stat);
    assert!(p > 0.001, "chi-square {stat}, p = {p}, histogram {hist:?}");
}

#[test]
fn loop_over_print_has_mean_length_ten() {
    let world = WorldModel::sample(30, 10, 1).unwrap();
    let mut params = GrammarParams::new([1.0, 0.0, 0.0, 0.0], 0).unwrap();
    params.block_len_probs = [0.0; MAX_BLOCK_LEN];
    params.block_len_probs[0] = 1.0;
    let cfg = SamplerConfig::default();
    let cons = ScriptConstraints::for_documents(AblationFlags::default(), None);
    let est = estimate_expected_length(&params, &world, 500, 1, &cfg, &cons).unwrap();
    assert!((est.mean - 10.0).abs() <= 3.0 * est.std_error + 1e-9);
    // With the power-law block prior the loop body averages E[l] prints.
    let bound = expected_length_bound(&GrammarParams::new([1.0, 0.0, 0.0, 0.0], 0).unwrap(), &cfg, 30, &cons);
    let el: f64 = GrammarParams::power_law_block_lengths()
        .iter()
        .enumerate()
        .map(|(i, p)| (i + 1) as f64 * p)
        .sum();
    assert!((bound - 10.0 * el).abs() < 1e-9);
}

#[test]
fn standard_error_shrinks_by_root_two() {
    let world = WorldModel::sample(30, 10, 1).unwrap();
    // PRINT-only bodies: lengths are 10·l with bounded variance, so the
    // standard error estimate itself is stable.
    let params = GrammarParams::new([1.0, 0.0, 0.0, 0.0], 0).unwrap();
    let cfg = SamplerConfig::default();
    let cons = ScriptConstraints::for_documents(AblationFlags::default(), None);
    let mut ratios = Vec::new();
    for s in 0..16 {
        let a = estimate_expected_length(&params, &world, 3000, 2 * s, &cfg, &cons).unwrap();
        let b = estimate_expected_length(&params, &world, 6000, 2 * s + 1, &cfg, &cons).unwrap();
        ratios.push(a.std_error / b.std_error);
    }
    ratios.sort_by(f64::total_cmp);
    let median = (ratios[7] + ratios[8]) / 2.0;
    assert!((median - 2f64.sqrt()).abs() < 0.15, "ratios {ratios:?}");
}

#[test]
fn task_fragments_have_expected_node_counts() {
    let eval = ScriptAst::fragment(1, Command::for_some(Condition::new(2, 0, 1), vec![Command::print(1)]));
    assert_eq!(eval.description_length(), 3);
    let missing_link = ScriptAst::fragment(
        2,
        Command::for_some(
            Condition::new(2, 0, 2),
            vec![Command::if_else(
                Condition::new(3, 2, 1),
                vec![Command::print(2)],
                vec![Command::for_some(Condition::new(2, 1, 3), vec![Command::print(3)])],
            )],
        ),
    );
    missing_link.validate().unwrap();
    assert_eq!(missing_link.description_length(), 9);
}

#[test]
fn two_dnf_within_6d_minus_3_nodes() {
    let world = WorldModel::sample(6, 4, 11).unwrap();
    for d in 1..=4 {
        let terms = dnf_terms(d);
        let ast = express_two_dnf(2, &terms);
        ast.validate().unwrap();
        assert!(ast.description_length() <= 6 * d - 3);
        for x in 0..6 {
            for y in 0..6 {
                for seed in 0..4 {
                    let out = execute_script(&ast, &world, &[x, y], seed);
                    assert!(out.len() <= 1);
                    if let Some(&z) = out.first() {
                        // The last disjunct is unguarded, so only its
                        // introducing literal is checked for it.
                        let sound = terms[..d - 1].iter().any(|t| term_holds(&world, t, &[x, y], z));
                        let last = terms[d - 1];
                        let intro_last = if last.z_is_result {
                            world.eval(last.intro_function, [x, y][last.intro_input]) == z
                        } else {
                            world.eval(last.intro_function, z) == [x, y][last.intro_input]
                        };
                        assert!(sound || intro_last);
                    }
                }
            }
        }
    }
}

#[test]
fn loop_repeats_a_fragment_for_one_extra_node() {
    // x f(x) for the loop variable.
    let theta = Block(vec![
        Command::print(0),
        Command::for_some(Condition::new(2, 0, 1), vec![Command::print(1)]),
    ]);
    let world = WorldModel::sample(12, 3, 4).unwrap();
    let looped = ScriptAst::document(loop_over(theta.clone()));
    assert_eq!(looped.description_length(), theta.description_length() + 1);
    for n in 1..=10 {
        let mut out = Vec::new();
        Executor::new(&world, n as u64, ())
            .with_loop_arity(n)
            .run(&looped, &[], &mut out);
        assert_eq!(out.len(), 2 * n);
        let xs: HashSet<Token> = out.chunks(2).map(|c| c[0]).collect();
        assert_eq!(xs.len(), n);
        for c in out.chunks(2) {
            assert_eq!(c[1], world.eval(2, c[0]));
        }
    }
}

#[test]
fn forbidden_pair_never_co_occurs() {
    let world = WorldModel::sample(30, 10, 2).unwrap();
    for ast in sampled_scripts(&world, 20_000, 77) {
        assert!(!ast.uses_both((2, 3)));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn sampled_documents_are_valid(world_seed in 0u64..1000, seed in any::<u64>()) {
        let world = WorldModel::sample(7, 4, world_seed).unwrap();
        let cfg = SamplerConfig::default();
        let cons = ScriptConstraints::for_documents(AblationFlags::default(), Some((2, 3)));
        let params = sample_grammar_params(&world, seed, &cfg, &cons).unwrap();
        let doc = sample_document(&params, &world, seed, &cfg, &cons).unwrap();
        doc.script.validate_for(&world).unwrap();
        prop_assert!(doc.tokens.iter().all(|&t| (t as usize) < 7));
        prop_assert_eq!(parse_script(&render_script(&doc.script)).unwrap(), doc.script.clone());
        let again = sample_document(&params, &world, seed, &cfg, &cons).unwrap();
        prop_assert_eq!(again.tokens, doc.tokens);
    }

    #[test]
    fn parsing_ignores_indentation(seed in any::<u64>()) {
        let world = WorldModel::sample(7, 4, 1).unwrap();
        let ast = sampled_scripts(&world, 1, seed).pop().unwrap();
        let squashed: String = render_script(&ast)
            .lines()
            .map(|l| format!("   {}  \n\n", l.trim()))
            .collect();
        prop_assert_eq!(parse_script(&squashed).unwrap(), ast);
    }
}
