mod common;

use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;
use scriptworld::rng::{derive_seed, stream};
use scriptworld::tasks::*;
use scriptworld::{Error, Token, WorldModel};

use common::{check_prompt, reference_holds};

#[test]
fn literal_groups_match_appendix() {
    let groups: Vec<Option<usize>> = (0..16).map(literal_group).collect();
    let mut expected = vec![Some(1), Some(1)];
    expected.extend([Some(4); 6]);
    expected.extend([Some(8); 3]);
    expected.extend([None; 5]);
    assert_eq!(groups, expected);
    for t in builtin_tasks() {
        if let Some(g) = literal_group(t.task_id) {
            assert_eq!(t.num_literals(), g);
        }
    }
    let t13 = builtin_task(13).unwrap();
    assert!(t13
        .disjuncts
        .iter()
        .all(|d| d.iter().any(|l| matches!(l, Literal::LabelEq { .. }))));
}

#[test]
fn enumeration_agrees_with_hand_coded_formulas() {
    let mut rng = stream(1, "tasks-test", 0);
    for spec in builtin_tasks() {
        for trial in 0..1000u64 {
            let omega = rng.random_range(3..12usize);
            let nf = rng.random_range(4..8usize);
            let world = WorldModel::sample(omega, nf, derive_seed(spec.task_id as u64, "w", trial)).unwrap();
            let mut pool: Vec<usize> = (1..=nf).collect();
            pool.shuffle(&mut rng);
            let fs = pool[..spec.num_function_slots()].to_vec();
            let labels = spec.is_binary().then(|| {
                let a = rng.random_range(0..omega as Token);
                let b = (a + rng.random_range(1..omega as Token)) % omega as Token;
                [a, b]
            });
            let bound = BoundTask::new(spec.clone(), fs.clone(), labels, 0).unwrap();
            let x = rng.random_range(0..omega as Token);
            let y = rng.random_range(0..omega as Token);
            let yo = (spec.arity == 2).then_some(y);
            let expected: Vec<Token> = (0..omega as Token)
                .filter(|&z| reference_holds(spec.task_id, &world, &fs, labels, x, y, z))
                .collect();
            assert_eq!(bound.enumerate_solutions(&world, x, yo), expected, "task {} trial {trial}", spec.task_id);
        }
    }
}

#[test]
fn identity_and_inverse_solutions() {
    let w = WorldModel::sample(30, 10, 1).unwrap();
    let fe = BoundTask::new(builtin_task(0).unwrap(), vec![1], None, 0).unwrap();
    for x in 0..30 {
        assert_eq!(fe.enumerate_solutions(&w, x, None), vec![x]);
    }
    let inv = BoundTask::new(builtin_task(1).unwrap(), vec![4], None, 0).unwrap();
    for x in 0..30 {
        assert_eq!(inv.enumerate_solutions(&w, x, None), w.preimage(4, x).unwrap());
    }
}

#[test]
fn composition_matches_double_loop_on_golden_world() {
    let w = WorldModel::sample(6, 3, 42).unwrap();
    let spec = builtin_task(COMPOSITION_TASK_ID).unwrap();
    for (fi, fj) in [(2, 3), (3, 2), (1, 2), (2, 1), (1, 3)] {
        let bound = BoundTask::new(spec.clone(), vec![fi, fj], None, 0).unwrap();
        for x in 0..6 {
            let mut expected = Vec::new();
            for a in 0..6 {
                for z in 0..6 {
                    if w.eval(fi, x) == a && w.eval(fj, a) == z && !expected.contains(&z) {
                        expected.push(z);
                    }
                }
            }
            expected.sort();
            assert_eq!(bound.enumerate_solutions(&w, x, None), expected);
        }
    }
}

#[test]
fn arity_two_prompt_layout() {
    let w = WorldModel::sample(30, 10, 1).unwrap();
    let spec = builtin_task(2).unwrap();
    for k in [2, 6, 14] {
        let p = sample_prompt(&spec, &w, &BindingPolicy::default(), k, 9).unwrap();
        assert_eq!(p.tokens.len(), 4 * k + 2);
        check_prompt(&w, &spec, &p).unwrap();
    }
}

#[test]
fn binary_prompts_are_class_balanced() {
    let w = WorldModel::sample(30, 10, 2).unwrap();
    for id in 13..=15 {
        let spec = builtin_task(id).unwrap();
        for seed in 0..50 {
            let p = sample_prompt(&spec, &w, &BindingPolicy::default(), 14, seed).unwrap();
            let l = p.labels.unwrap();
            let a = p.examples.iter().filter(|e| e.outputs[0] == l[0]).count();
            assert_eq!(a, 7);
            check_prompt(&w, &spec, &p).unwrap();
        }
    }
}

#[test]
fn default_bindings_avoid_identity_and_designated_pair() {
    let w = WorldModel::sample(30, 10, 3).unwrap();
    for spec in builtin_tasks() {
        for seed in 0..30 {
            let p = sample_prompt(&spec, &w, &BindingPolicy::default(), 6, seed).unwrap();
            assert!(p.functions.iter().all(|&f| f != 1 && f != 2 && f != 3));
            let mut fs = p.functions.clone();
            fs.sort();
            fs.dedup();
            assert_eq!(fs.len(), p.functions.len());
        }
    }
}

#[test]
fn recombination_binds_designated_pair() {
    let w = WorldModel::sample(30, 10, 4).unwrap();
    let spec = builtin_task(2).unwrap();
    for seed in 0..50 {
        let p = sample_prompt(&spec, &w, &BindingPolicy::recombined(), 8, seed).unwrap();
        assert_eq!(&p.functions[..2], &[2, 3]);
        assert!(p.recombined);
        check_prompt(&w, &spec, &p).unwrap();
    }
    for id in [0, 1, 14, 15] {
        let spec = builtin_task(id).unwrap();
        assert!(sample_prompt(&spec, &w, &BindingPolicy::recombined(), 4, 0).is_err());
    }
}

#[test]
fn chain_prompts_follow_iterated_application() {
    let w = WorldModel::sample(30, 10, 5).unwrap();
    for variant in [Variant::Raw, Variant::Cot, Variant::Explanation] {
        for chain_len in MIN_CHAIN_LEN..=MAX_CHAIN_LEN {
            for seed in 0..20 {
                let opts = ChainOptions::new(variant, chain_len);
                let p = build_composition_prompt(&w, &opts, 6, seed).unwrap();
                assert_eq!(p.functions.len(), chain_len);
                for e in p.examples.iter().chain([&p.query]) {
                    let mut v = e.inputs[0];
                    let mut steps = Vec::new();
                    for &f in &p.functions {
                        v = w.eval(f, v);
                        steps.push(v);
                    }
                    let expected = match variant {
                        Variant::Raw => vec![v],
                        Variant::Cot => steps.clone(),
                        Variant::Explanation => {
                            let mut s = vec![v];
                            s.extend_from_slice(&steps[..chain_len - 1]);
                            s
                        }
                    };
                    assert_eq!(e.outputs, expected);
                }
                assert_eq!(p.reference.len(), if variant == Variant::Raw { 1 } else { chain_len });
            }
        }
    }
}

#[test]
fn cot_reference_is_intermediate_then_answer() {
    let w = WorldModel::sample(30, 10, 6).unwrap();
    let p = build_composition_prompt(&w, &ChainOptions::new(Variant::Cot, 2), 4, 1).unwrap();
    let x = p.query.inputs[0];
    let a = w.eval(p.functions[0], x);
    assert_eq!(p.reference, vec![a, w.eval(p.functions[1], a)]);
}

#[test]
fn identity_chain_returns_input() {
    let w = WorldModel::sample(6, 2, 1).unwrap();
    let mut opts = ChainOptions::new(Variant::Raw, 2);
    opts.policy = BindingPolicy::permissive();
    opts.distinct = false;
    for seed in 0..200 {
        let p = build_composition_prompt(&w, &opts, 2, seed).unwrap();
        if p.functions == [1, 1] {
            assert_eq!(p.reference, p.query.inputs);
        }
    }
}

#[test]
fn capacity_errors_are_reported() {
    let w = WorldModel::sample(6, 10, 1).unwrap();
    let spec = builtin_task(0).unwrap();
    match sample_prompt(&spec, &w, &BindingPolicy::default(), 8, 0) {
        Err(Error::Capacity(msg)) => assert!(!msg.is_empty()),
        other => panic!("expected a capacity error, got {other:?}"),
    }
}

#[test]
fn scoring_rules() {
    let w = WorldModel::sample(30, 10, 1).unwrap();
    let p = build_composition_prompt(&w, &ChainOptions::new(Variant::Cot, 2), 4, 3).unwrap();
    assert!(score_completion(&p, &p.reference).correct);
    let mut extra = p.reference.clone();
    extra.push(0);
    assert!(score_completion(&p, &extra).correct);
    let mut wrong = p.reference.clone();
    wrong[0] = (wrong[0] + 1) % 30;
    assert!(!score_completion(&p, &wrong).correct);
    let s = score_completion(&p, &[]);
    assert!(!s.correct && s.empty);
}

#[test]
fn batch_scores_equal_item_means() {
    let w = WorldModel::sample(30, 10, 1).unwrap();
    let mut prompts = Vec::new();
    let mut completions = Vec::new();
    let mut rng = stream(3, "batch", 0);
    for (i, id) in [0usize, 2, 13].iter().cycle().take(60).enumerate() {
        let spec = builtin_task(*id).unwrap();
        let p = sample_prompt(&spec, &w, &BindingPolicy::default(), 2 + 2 * (i % 3), i as u64).unwrap();
        let completion = if rng.random_bool(0.5) { p.reference.clone() } else { vec![rng.random_range(0..30)] };
        let completion = if i % 17 == 0 { vec![] } else { completion };
        completions.push(CompletionRecord { prompt_index: i, completion });
        prompts.push(PromptRecord::from(&p));
    }
    let report = score_batch(&prompts, &completions).unwrap();
    for row in &report.rows {
        let items: Vec<f64> = prompts
            .iter()
            .zip(&completions)
            .filter(|(p, _)| p.cell() == row.cell)
            .map(|(p, c)| p.score(&c.completion).value() as f64)
            .collect();
        assert_eq!(row.n, items.len());
        assert!((row.accuracy - items.iter().sum::<f64>() / items.len() as f64).abs() < 1e-12);
    }
    assert_eq!(report.rows.iter().map(|r| r.n).sum::<usize>(), 60);
    assert_eq!(report.empty_completions.len(), 4);
    let mut csv = Vec::new();
    write_score_csv(&mut csv, &report).unwrap();
    let text = String::from_utf8(csv).unwrap();
    assert!(text.starts_with("task_id,variant,num_examples,n,accuracy\n"));
    assert_eq!(text.lines().count(), report.rows.len() + 1);
}

#[test]
fn jsonl_round_trips() {
    let w = WorldModel::sample(30, 10, 1).unwrap();
    let prompts: Vec<PromptRecord> = (0..10)
        .map(|i| PromptRecord::from(&sample_prompt(&builtin_task(13).unwrap(), &w, &BindingPolicy::default(), 4, i).unwrap()))
        .collect();
    let mut buf = Vec::new();
    write_prompts(&mut buf, &prompts).unwrap();
    assert_eq!(read_prompts(buf.as_slice()).unwrap(), prompts);
    let completions = vec![CompletionRecord { prompt_index: 3, completion: vec![1, 2] }];
    let mut buf = Vec::new();
    write_completions(&mut buf, &completions).unwrap();
    assert_eq!(read_completions(buf.as_slice()).unwrap(), completions);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn constructed_prompts_are_valid(task in 0usize..16, half in 1usize..8, seed in any::<u64>(), world_seed in 0u64..20) {
        let w = WorldModel::sample(30, 10, world_seed).unwrap();
        let spec = builtin_task(task).unwrap();
        match sample_prompt(&spec, &w, &BindingPolicy::default(), 2 * half, seed) {
            Ok(p) => {
                prop_assert_eq!(p.num_examples, 2 * half);
                if let Err(e) = check_prompt(&w, &spec, &p) {
                    return Err(TestCaseError::fail(e));
                }
            }
            Err(Error::Capacity(_)) => prop_assert!(task <= 1, "capacity error for task {}", task),
            Err(e) => return Err(TestCaseError::fail(e.to_string())),
        }
    }

    #[test]
    fn prompts_are_seed_deterministic(task in 0usize..16, seed in any::<u64>()) {
        let w = WorldModel::sample(30, 10, 1).unwrap();
        let spec = builtin_task(task).unwrap();
        let a = sample_prompt(&spec, &w, &BindingPolicy::default(), 6, seed).unwrap();
        let b = sample_prompt(&spec, &w, &BindingPolicy::default(), 6, seed).unwrap();
        prop_assert_eq!(a, b);
    }
}
