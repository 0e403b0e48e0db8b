use std::collections::BTreeSet;
use std::sync::Arc;

use proptest::prelude::*;
use rand::Rng;
use scriptworld::corpora::*;
use scriptworld::grammar::{AblationFlags, SamplerConfig};
use scriptworld::heldout::*;
use scriptworld::rng::stream;
use scriptworld::tasks::*;
use scriptworld::{Token, WorldModel};

mod common;

use common::{planted_prompts, splice};

fn world() -> Arc<WorldModel> {
    Arc::new(WorldModel::sample(30, 10, 1).unwrap())
}

fn clean_corpus(w: &Arc<WorldModel>, n: usize, seed: u64) -> Corpus {
    let g = CompositionalGenerator::new(w.clone(), SamplerConfig::default(), AblationFlags::default(), seed);
    collect_documents(&g, n).unwrap()
}

#[test]
fn function_table_matches() {
    let w = world();
    let m = HeldoutMatcher::new(&w, HeldoutOptions::default()).unwrap();
    let xs = [4, 9, 17, 22];
    let mut doc = Vec::new();
    for (n, &x) in xs.iter().enumerate() {
        doc.extend([x, w.eval(5, x)]);
        if n + 1 < xs.len() {
            doc.push(11);
        }
    }
    let hit = m.find_match(&doc).unwrap();
    assert!(hit.verify(&w));
    assert_eq!(hit.offset, 0);
    assert_eq!(hit.separator, 11);
}

#[test]
fn repeated_token_does_not_match() {
    let w = world();
    let m = HeldoutMatcher::new(&w, HeldoutOptions::default()).unwrap();
    for t in 0..30 {
        assert!(m.find_match(&[t; 64]).is_none());
    }
}

#[test]
fn planted_prompts_are_all_removed() {
    let w = world();
    let m = HeldoutMatcher::new(&w, HeldoutOptions::default()).unwrap();
    let base = clean_corpus(&w, 400, 2);
    let prompts = planted_prompts(&w, 400, 100);
    let mut rng = stream(5, "splice", 0);
    for (d, p) in base.documents.iter().zip(&prompts) {
        let at = rng.random_range(0..=d.tokens.len());
        let spliced = splice(&d.tokens, p, at);
        let hit = m.find_match(&spliced).unwrap_or_else(|| panic!("missed planted prompt {p:?}"));
        assert!(hit.verify(&w));
    }
}

#[test]
fn long_raw_chains_found_when_enabled() {
    let w = world();
    let opts = HeldoutOptions { long_raw_chains: true, ..Default::default() };
    let m = HeldoutMatcher::new(&w, opts).unwrap();
    for chain_len in 3..=4 {
        for seed in 0..30 {
            let p = build_composition_prompt(&w, &ChainOptions::new(Variant::Raw, chain_len), 4, seed).unwrap();
            let mut t = p.tokens.clone();
            t.extend_from_slice(&p.reference);
            assert!(m.find_match(&t).is_some());
        }
    }
}

#[test]
fn removals_are_sound_and_order_independent() {
    let w = world();
    let m = HeldoutMatcher::new(&w, HeldoutOptions::default()).unwrap();
    let mut corpus = clean_corpus(&w, 3000, 3);
    let prompts = planted_prompts(&w, 100, 7);
    for (i, p) in prompts.iter().enumerate() {
        let d = &mut corpus.documents[i * 30];
        d.tokens = splice(&d.tokens, p, d.tokens.len() / 2);
    }
    let docs: Vec<Vec<Token>> = corpus.documents.iter().map(|d| d.tokens.clone()).collect();
    let out = filter_corpus(corpus.clone(), &m);
    assert!(out.stats.n_removed >= 100);
    assert_eq!(out.kept.len() + out.stats.n_removed, 3000);
    let mut removed = BTreeSet::new();
    for (i, hit) in &out.removed {
        assert!(hit.verify(&w));
        let d = &docs[*i];
        let span = &d[hit.offset..];
        assert!(span.len() >= hit.period * hit.examples.len() - 1);
        removed.insert(docs[*i].clone());
    }
    assert_eq!(out.stats.breakdown.values().sum::<usize>(), out.stats.n_removed);
    // Reversed order removes the same documents.
    let mut rev = corpus.clone();
    rev.documents.reverse();
    let out_rev = filter_corpus(rev, &m);
    let removed_rev: BTreeSet<Vec<Token>> = out_rev.removed.iter().map(|(i, _)| docs[2999 - i].clone()).collect();
    assert_eq!(removed, removed_rev);
    assert_eq!(out_rev.stats.breakdown, out.stats.breakdown);
}

#[test]
fn empty_corpus_gives_zero_stats() {
    let w = world();
    let m = HeldoutMatcher::new(&w, HeldoutOptions::default()).unwrap();
    let out = filter_corpus(Corpus::default(), &m);
    assert!(out.kept.is_empty());
    assert_eq!(out.stats.n_documents, 0);
    assert_eq!(out.stats.n_removed, 0);
    assert_eq!(out.stats.fraction_removed, 0.0);
    assert!(out.stats.breakdown.values().all(|&c| c == 0));
}

#[test]
fn random_windows_rarely_match() {
    let w = world();
    let m = HeldoutMatcher::new(&w, HeldoutOptions::default()).unwrap();
    let mut rng = stream(9, "random-windows", 0);
    let n = 20_000;
    let hits = (0..n)
        .filter(|_| {
            let win: Vec<Token> = (0..64).map(|_| rng.random_range(0..30)).collect();
            m.find_match(&win).is_some()
        })
        .count();
    assert!((hits as f64) < 0.001 * n as f64, "{hits} of {n} random windows matched");
}

fn brute_force_balanced(masks: &[u32], n: usize) -> bool {
    fn go(masks: &[u32], n: usize, counts: &mut Vec<usize>) -> bool {
        match masks.split_first() {
            None => counts.iter().max().unwrap() - counts.iter().min().unwrap() <= 1,
            Some((&m, rest)) => (0..n).filter(|d| m & (1 << d) != 0).any(|d| {
                counts[d] += 1;
                let ok = go(rest, n, counts);
                counts[d] -= 1;
                ok
            }),
        }
    }
    go(masks, n, &mut vec![0; n])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(400))]

    #[test]
    fn balanced_assignment_matches_brute_force(n in 2usize..5, raw in prop::collection::vec(1u32..16, 1..9)) {
        let masks: Vec<u32> = raw.iter().map(|m| m & ((1 << n) - 1)).filter(|&m| m != 0).collect();
        prop_assume!(!masks.is_empty());
        prop_assert_eq!(balanced_assignment(&masks, n), brute_force_balanced(&masks, n));
    }
}
