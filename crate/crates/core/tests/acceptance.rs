//! End-to-end acceptance checks, one test per shipped guarantee. Each test
//! prints a PASS line with its measured numbers (visible with --nocapture).

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use xlparse::alignment::{bidirectional_align, extract_lexicon};
use xlparse::alphabet::Alphabet;
use xlparse::clustering::{brown_cluster, generate_codeswitch, BrownMode};
use xlparse::evaluation::{mcnemar_exact, score, ScoreOptions};
use xlparse::learning::{decode_sentence, parse_treebank, train, Model, TrainOptions};
use xlparse::pipeline::{run_pipeline, Config, RunContext};
use xlparse::scoring::{extract, score_action, ClusterContext, FamilySet};
use xlparse::synth::{
    codeswitch_fixture, grammar_treebank, random_projective_trees, shuffled_dictionary_pairs,
    FIXTURE_WALS_CSV,
};
use xlparse::transfer::{assign_tier, partial_from_sentence, read_wals};
use xlparse::transition::{config_to_tree, oracle_sequence, Action, Configuration};
use xlparse::treebank::{write_tokenized_corpus, MonolingualCorpus, Sentence, Treebank};

fn fixtures_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn fixture_config(name: &str) -> Config {
    Config::from_file(&fixtures_dir().join("configs").join(name)).expect("fixture config")
}

#[test]
fn c01_oracle_round_trip_on_random_projective_trees() {
    let started = Instant::now();
    let trees = random_projective_trees(1000, 15, 7).unwrap();
    assert_eq!(trees.len(), 1000);
    for sentence in &trees {
        let mut labels = Alphabet::new();
        let actions = oracle_sequence(sentence, &mut labels, "dep").unwrap();
        let mut config = Configuration::new(sentence);
        for &action in &actions {
            config = config.apply(action).unwrap();
        }
        assert!(config.is_terminal());
        let rebuilt = config_to_tree(&config, &labels, "dep").unwrap();
        for (want, got) in sentence.tokens.iter().zip(&rebuilt.tokens) {
            assert_eq!(want.head, got.head, "head of token {}", want.index);
            assert_eq!(want.deprel, got.deprel, "label of token {}", want.index);
        }
    }
    let elapsed = started.elapsed();
    assert!(elapsed < Duration::from_secs(5), "took {:?}", elapsed);
    eprintln!("PASS oracle round-trip: 1000/1000 trees reconstructed in {:?}", elapsed);
}

fn overfit_grammar(epochs: u32) -> (Model, Treebank) {
    let bank = grammar_treebank(100, 11).unwrap();
    let options = TrainOptions { epochs, beam_width: 8, ..TrainOptions::default() };
    let (model, _) =
        train(&bank, FamilySet::delexicalized(), &ClusterContext::none(), &options).unwrap();
    (model, bank)
}

#[test]
fn c02_supervised_training_overfits_the_grammar_treebank() {
    let started = Instant::now();
    let (model, bank) = overfit_grammar(3);
    let parsed = parse_treebank(&model, &bank, &ClusterContext::none(), 1).unwrap();
    let eval = score(&bank, &parsed, &ScoreOptions { exclude_punct: false }).unwrap();
    let elapsed = started.elapsed();
    assert!(eval.uas() >= 99.0, "training UAS {:.2}", eval.uas());
    assert!(elapsed < Duration::from_secs(60), "took {:?}", elapsed);
    eprintln!(
        "PASS supervised overfit: training UAS {:.2} after 3 epochs in {:?}",
        eval.uas(),
        elapsed
    );
}

/// Stepwise argmax decode with the beam's tie rules (higher score first,
/// then lower action ordinal, then lower label id).
fn greedy_decode(model: &Model, sentence: &Sentence) -> (Vec<Action>, f64) {
    let mut config = Configuration::new(sentence);
    let mut actions = Vec::new();
    let mut total = 0.0;
    while !config.is_terminal() {
        let features = extract(&config, &model.labels, model.families, &ClusterContext::none());
        let mut best: Option<(f64, Action)> = None;
        for (kind, forced) in config.legal_actions(None).unwrap() {
            let label_ids: Vec<Option<u32>> = if kind.is_arc() && forced.is_none() {
                (0..model.labels.len() as u32).map(Some).collect()
            } else if kind.is_arc() {
                vec![forced]
            } else {
                vec![None]
            };
            for label in label_ids {
                let action = Action { kind, label };
                let score =
                    total + score_action(&model.weights, &features, &model.labels, action);
                let better = match &best {
                    None => true,
                    Some((s, a)) => {
                        score > *s
                            || (score == *s
                                && (action.kind.ordinal(), action.label.unwrap_or(0))
                                    < (a.kind.ordinal(), a.label.unwrap_or(0)))
                    }
                };
                if better {
                    best = Some((score, action));
                }
            }
        }
        let (score, action) = best.unwrap();
        total = score;
        actions.push(action);
        config = config.apply(action).unwrap();
    }
    (actions, total)
}

#[test]
fn c03_beam_one_equals_greedy_and_scores_grow_with_width() {
    let (model, bank) = overfit_grammar(3);
    assert_eq!(bank.len(), 100);
    for sentence in &bank.sentences {
        let beam_one =
            decode_sentence(&model, sentence, &ClusterContext::none(), None, Some(1)).unwrap();
        let (greedy_actions, greedy_score) = greedy_decode(&model, sentence);
        assert_eq!(beam_one.actions, greedy_actions);
        assert!((beam_one.score - greedy_score).abs() < 1e-9);

        let mut last = f64::NEG_INFINITY;
        for width in [1usize, 2, 4, 8] {
            let outcome =
                decode_sentence(&model, sentence, &ClusterContext::none(), None, Some(width))
                    .unwrap();
            assert!(
                outcome.score >= last - 1e-9,
                "score dropped from {} to {} at width {}",
                last,
                outcome.score,
                width
            );
            last = outcome.score;
        }
    }
    eprintln!("PASS beam decode: beam-1 = greedy on 100 sentences, scores non-decreasing over widths 1,2,4,8");
}

#[test]
fn c04_lexicon_extraction_recovers_the_generating_dictionary() {
    let (corpus, dictionary) = shuffled_dictionary_pairs(500, 5);
    let links = bidirectional_align(&corpus, 5).unwrap();
    let lexicon = extract_lexicon(&corpus, &links, 100).unwrap();

    let mut freq: BTreeMap<&str, u64> = BTreeMap::new();
    for (src, _) in &corpus.pairs {
        for word in src {
            *freq.entry(word).or_insert(0) += 1;
        }
    }
    let mut predicted = 0u64;
    let mut correct = 0u64;
    for (&word, &count) in &freq {
        if count < 3 {
            continue;
        }
        if let Some(translation) = lexicon.translate(word) {
            predicted += 1;
            if dictionary[word] == translation {
                correct += 1;
            }
        }
    }
    assert!(predicted > 0);
    let precision = correct as f64 / predicted as f64;
    assert!(precision >= 0.95, "precision {:.4} on {} predictions", precision, predicted);

    // Independent recount of link co-occurrences, same one-best tie rule
    // (ties keep the alphabetically first target).
    let mut counts: BTreeMap<(&str, &str), u64> = BTreeMap::new();
    let mut vocab: BTreeSet<&str> = BTreeSet::new();
    for (k, (src, tgt)) in corpus.pairs.iter().enumerate() {
        vocab.extend(src.iter().map(|w| w.as_str()));
        for &(i, j) in &links[k] {
            *counts.entry((&src[i], &tgt[j])).or_insert(0) += 1;
        }
    }
    for &word in &vocab {
        let recounted = counts
            .iter()
            .filter(|((s, _), _)| *s == word)
            .max_by(|a, b| a.1.cmp(b.1).then(b.0 .1.cmp(a.0 .1)))
            .map(|((_, t), _)| *t);
        assert_eq!(lexicon.translate(word), recounted, "entry for {}", word);
    }
    eprintln!(
        "PASS lexicon oracle: precision {:.4} on {} frequent words, recount identical",
        precision, predicted
    );
}

#[test]
fn c05_codeswitch_replacement_rate_matches_alpha() {
    let (corpora, lexicons) = codeswitch_fixture(700, 9);
    let total: usize = corpora.iter().map(|c| c.token_count()).sum();
    assert!(total >= 10_000, "fixture only has {} tokens", total);

    let switched = generate_codeswitch(&corpora, &lexicons, 0.3, 21).unwrap();
    let originals: Vec<&Vec<String>> =
        corpora.iter().flat_map(|c| c.sentences.iter()).collect();
    assert_eq!(switched.sentences.len(), originals.len());
    let mut replaced = 0usize;
    for (out, orig) in switched.sentences.iter().zip(&originals) {
        assert_eq!(out.len(), orig.len());
        replaced += out.iter().zip(orig.iter()).filter(|(a, b)| a != b).count();
    }
    let fraction = replaced as f64 / total as f64;
    assert!(
        (fraction - 0.3).abs() <= 0.014,
        "replacement fraction {:.4} outside 0.3 +/- 0.014",
        fraction
    );

    let untouched = generate_codeswitch(&corpora, &lexicons, 0.0, 21).unwrap();
    let concatenated = MonolingualCorpus {
        language: untouched.language.clone(),
        sentences: originals.into_iter().cloned().collect(),
    };
    let mut got = Vec::new();
    write_tokenized_corpus(&mut got, &untouched, None).unwrap();
    let mut want = Vec::new();
    write_tokenized_corpus(&mut want, &concatenated, None).unwrap();
    assert_eq!(got, want, "alpha 0 must leave the corpus byte-identical");
    eprintln!(
        "PASS code-switch statistics: {}/{} tokens replaced ({:.4}), alpha 0 byte-identical",
        replaced, total, fraction
    );
}

/// Independent partial-tree classifier: coverage thresholds plus a from-
/// scratch full-tree check (single root child, acyclic, no crossing arcs).
fn brute_force_tier(sentence: &Sentence, tiers: &[u32]) -> Option<u32> {
    let total = sentence.len();
    if total == 0 {
        return None;
    }
    let attached = sentence.tokens.iter().filter(|t| t.head.is_some()).count();
    let full_tree = attached == total && {
        let heads: Vec<usize> = sentence.tokens.iter().map(|t| t.head.unwrap()).collect();
        let single_root = heads.iter().filter(|&&h| h == 0).count() == 1;
        let acyclic = (1..=total).all(|start| {
            let mut node = start;
            let mut steps = 0;
            while node != 0 && steps <= total {
                node = heads[node - 1];
                steps += 1;
            }
            node == 0
        });
        let arcs: Vec<(usize, usize)> = (1..=total)
            .map(|d| (heads[d - 1].min(d), heads[d - 1].max(d)))
            .collect();
        let no_crossing = arcs.iter().all(|&(a1, b1)| {
            arcs.iter()
                .all(|&(a2, b2)| !(a1 < a2 && a2 < b1 && b1 < b2))
        });
        single_root && acyclic && no_crossing
    };
    for &tier in tiers {
        if tier == 100 {
            if full_tree {
                return Some(tier);
            }
        } else if 100 * attached as u64 >= tier as u64 * total as u64 {
            return Some(tier);
        }
    }
    None
}

#[test]
fn c06_tier_assignment_matches_brute_force_on_random_partial_trees() {
    let tiers = [100u32, 90, 80, 70];
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut cases = random_projective_trees(197, 15, 13).unwrap();
    // Keep a few full non-trees in the mix: crossing arcs, two roots, a cycle.
    cases.push(Sentence::from_rows(
        "zz",
        &[("a", "X", 3, "dep"), ("b", "X", 4, "dep"), ("c", "X", 0, "root"), ("d", "X", 3, "dep")],
    ));
    cases.push(Sentence::from_rows(
        "zz",
        &[("a", "X", 0, "root"), ("b", "X", 0, "root"), ("c", "X", 2, "dep")],
    ));
    cases.push(Sentence::from_rows(
        "zz",
        &[("a", "X", 2, "dep"), ("b", "X", 1, "dep"), ("c", "X", 0, "root")],
    ));
    assert_eq!(cases.len(), 200);

    let mask_rates = [0.0, 0.15, 0.4, 0.7];
    let mut seen: BTreeMap<Option<u32>, usize> = BTreeMap::new();
    for (i, mut sentence) in cases.into_iter().enumerate() {
        let rate = mask_rates[i % mask_rates.len()];
        for token in &mut sentence.tokens {
            if rng.random::<f64>() < rate {
                token.head = None;
                token.deprel = None;
            }
        }
        let expected = brute_force_tier(&sentence, &tiers);
        let tree = partial_from_sentence(sentence);
        let got = assign_tier(&tree, &tiers);
        assert_eq!(got, expected, "tree {} ({}/{} attached)", i, tree.attached, tree.total);
        *seen.entry(got).or_insert(0) += 1;
    }
    assert!(seen.len() >= 4, "mask rates only produced tiers {:?}", seen);
    eprintln!("PASS density tiers: 200/200 classifications match brute force, spread {:?}", seen);
}

#[test]
fn c07_staged_transfer_recipes_lift_target_uas() {
    let started = Instant::now();
    let stages = ["delex.cfg", "clusters.cfg", "lexicalized.cfg", "density.cfg"];
    let mut uas = Vec::new();
    for name in stages {
        let dir = tempfile::tempdir().unwrap();
        let config = fixture_config(name);
        let mut run = RunContext::create("pipeline", Some(dir.path())).unwrap();
        let outcome = run_pipeline(&config, &mut run).unwrap();
        uas.push(outcome.evaluation.uas());
    }
    let elapsed = started.elapsed();
    for (pair, window) in stages.windows(2).zip(uas.windows(2)) {
        assert!(
            window[1] >= window[0] - 1e-9,
            "{} scored {:.2}, below {} at {:.2}",
            pair[1],
            window[1],
            pair[0],
            window[0]
        );
    }
    let lift = uas[uas.len() - 1] - uas[0];
    assert!(lift >= 5.0, "full stack lift {:.2} below 5 UAS points", lift);
    assert!(elapsed < Duration::from_secs(300), "took {:?}", elapsed);
    eprintln!(
        "PASS transfer lift: UAS {:.2} -> {:.2} -> {:.2} -> {:.2} (+{:.2}) in {:?}",
        uas[0], uas[1], uas[2], uas[3], lift, elapsed
    );
}

#[test]
fn c08_exact_mcnemar_matches_binomial_enumeration() {
    // Exact binomial coefficients fit in f64 comfortably at n <= 20.
    let mut choose = [[0f64; 21]; 21];
    for n in 0..=20usize {
        choose[n][0] = 1.0;
        for k in 1..=n {
            choose[n][k] = choose[n - 1][k - 1] + if k <= n - 1 { choose[n - 1][k] } else { 0.0 };
        }
    }
    let mut checked = 0;
    for b in 0..=20u64 {
        for c in 0..=(20 - b) {
            let n = b + c;
            let expected = if n == 0 || b == c {
                1.0
            } else {
                let k = b.min(c);
                let tail: f64 =
                    (0..=k).map(|i| choose[n as usize][i as usize]).sum::<f64>()
                        / 2f64.powi(n as i32);
                (2.0 * tail).min(1.0)
            };
            let got = mcnemar_exact(b, c);
            assert!(
                (got - expected).abs() < 1e-9,
                "b={} c={}: got {} want {}",
                b,
                c,
                got,
                expected
            );
            checked += 1;
        }
    }
    let fixture = mcnemar_exact(1, 9);
    assert!((fixture - 0.021484375).abs() < 1e-9, "p(1,9) = {}", fixture);
    eprintln!(
        "PASS exact McNemar: {} (b, c) pairs match enumeration, p(1,9) = {:.9}",
        checked, fixture
    );
}

#[test]
fn c09_clustering_splits_a_two_class_corpus_at_the_first_bit() {
    let nouns: Vec<String> = (0..8).map(|i| format!("na{}", i)).collect();
    let verbs: Vec<String> = (0..8).map(|i| format!("vb{}", i)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let sentences: Vec<Vec<String>> = (0..400)
        .map(|_| {
            (0..8)
                .map(|j| {
                    let side = if j % 2 == 0 { &nouns } else { &verbs };
                    side[rng.random_range(0..side.len())].clone()
                })
                .collect()
        })
        .collect();
    let corpus = MonolingualCorpus { language: "two-class".to_string(), sentences };
    let clustering = brown_cluster(&corpus, 4, 1, BrownMode::Window).unwrap();
    assert_eq!(clustering.len(), 16);

    let zeros: BTreeSet<&str> = nouns
        .iter()
        .chain(&verbs)
        .map(|w| w.as_str())
        .filter(|w| clustering.prefix(w, 1) == Some("0"))
        .collect();
    let noun_set: BTreeSet<&str> = nouns.iter().map(|w| w.as_str()).collect();
    let verb_set: BTreeSet<&str> = verbs.iter().map(|w| w.as_str()).collect();
    assert!(
        zeros == noun_set || zeros == verb_set,
        "first bit does not separate the classes: 0-side = {:?}",
        zeros
    );
    eprintln!("PASS clustering separation: 16/16 words on the class side of the first bit");
}

#[test]
fn c10_typology_table_selects_the_expected_sources() {
    let table = read_wals(FIXTURE_WALS_CSV.as_bytes(), "builtin").unwrap();
    let for_es = table.select_sources("es", 4).unwrap();
    assert_eq!(for_es, vec!["fr", "it", "pt"]);
    let for_fr = table.select_sources("fr", 4).unwrap();
    assert_eq!(for_fr, vec!["de", "en", "es", "it", "pt", "sv"]);
    eprintln!("PASS source selection: es -> {:?}, fr -> {:?}", for_es, for_fr);
}

fn run_cli(args: &[&str]) {
    let output = Command::new(env!("CARGO_BIN_EXE_xlparse"))
        .args(args)
        .env_remove("XLPARSE_RUN_DIR")
        .output()
        .expect("spawn CLI");
    assert!(
        output.status.success(),
        "xlparse {:?} failed: {}",
        args,
        String::from_utf8_lossy(&output.stderr)
    );
}

fn dir_files(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap())
        .filter(|e| e.file_type().unwrap().is_file())
        .map(|e| (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap()))
        .collect()
}

#[test]
fn c11_pipeline_reruns_are_bit_identical() {
    for name in ["clusters.cfg", "density.cfg"] {
        let config = fixtures_dir().join("configs").join(name);
        let config = config.to_str().unwrap();
        let first = tempfile::tempdir().unwrap();
        let second = tempfile::tempdir().unwrap();
        for dir in [&first, &second] {
            run_cli(&["pipeline", "--config", config, "--run-dir", dir.path().to_str().unwrap()]);
        }
        let a = dir_files(first.path());
        let b = dir_files(second.path());
        let names: BTreeSet<&String> = a.keys().collect();
        assert_eq!(names, b.keys().collect(), "{}: runs produced different files", name);
        assert!(a.contains_key("model.bin") && a.contains_key("parsed.conllu"));
        for (file, bytes) in &a {
            if file == "manifest.json" {
                continue;
            }
            assert_eq!(bytes, &b[file], "{}: {} differs between reruns", name, file);
        }
        eprintln!("PASS determinism: {} rerun byte-identical across {} artifacts", name, a.len() - 1);
    }
}

#[test]
fn c12_subcommands_compose_to_the_pipeline_output() {
    let transfer = fixtures_dir().join("transfer");
    let path = |n: &str| transfer.join(n).to_str().unwrap().to_string();
    let pipe = tempfile::tempdir().unwrap();
    let chain = tempfile::tempdir().unwrap();
    let in_chain = |n: &str| chain.path().join(n).to_str().unwrap().to_string();
    let rd = chain.path().to_str().unwrap();

    run_cli(&[
        "pipeline",
        "--config",
        fixtures_dir().join("configs/clusters.cfg").to_str().unwrap(),
        "--run-dir",
        pipe.path().to_str().unwrap(),
    ]);

    let bitext_src = path("bitext-src.conllu");
    let bitext_tgt = path("bitext-tgt.conllu");
    run_cli(&[
        "lexicon", "--src", &bitext_tgt, "--tgt", &bitext_src, "--src-lang", "tgt",
        "--tgt-lang", "src", "--format", "conllu", "--iterations", "5",
        "--out", "lex-tgt-src.tsv", "--run-dir", rd,
    ]);
    run_cli(&[
        "lexicon", "--src", &bitext_src, "--tgt", &bitext_tgt, "--src-lang", "src",
        "--tgt-lang", "tgt", "--format", "conllu", "--iterations", "5",
        "--out", "lex-src-tgt.tsv", "--run-dir", rd,
    ]);
    run_cli(&[
        "codeswitch",
        "--corpus", &format!("tgt={}", path("mono-tgt.txt")),
        "--corpus", &format!("src={}", path("mono-src.txt")),
        "--lexicon", &in_chain("lex-tgt-src.tsv"),
        "--lexicon", &in_chain("lex-src-tgt.tsv"),
        "--alpha", "0.5", "--seed", "2", "--out", "cs.txt", "--run-dir", rd,
    ]);
    run_cli(&[
        "cluster", "--input", &in_chain("cs.txt"), "--lang", "mixed", "--k", "16",
        "--min-count", "1", "--out", "clusters-cross.tsv", "--run-dir", rd,
    ]);
    run_cli(&[
        "train", "--treebank", &path("src-treebank.conllu"), "--lang", "src",
        "--families", "clusters", "--cluster-cross", &in_chain("clusters-cross.tsv"),
        "--epochs", "5", "--beam", "8", "--seed", "1", "--out", "model.bin", "--run-dir", rd,
    ]);
    run_cli(&[
        "parse", "--model", &in_chain("model.bin"), "--input", &path("tgt-eval.conllu"),
        "--lang", "tgt", "--cluster-cross", &in_chain("clusters-cross.tsv"),
        "--out", "parsed.conllu", "--run-dir", rd,
    ]);
    run_cli(&[
        "eval", "--gold", &path("tgt-eval.conllu"), "--pred", &in_chain("parsed.conllu"),
        "--lang", "tgt", "--flavor", "google", "--run-dir", rd,
    ]);

    for artifact in ["clusters-cross.tsv", "parsed.conllu", "eval.txt", "eval.tsv"] {
        let from_pipeline = fs::read(pipe.path().join(artifact)).unwrap();
        let from_chain = fs::read(chain.path().join(artifact)).unwrap();
        assert_eq!(from_pipeline, from_chain, "{} differs from the pipeline's", artifact);
    }
    eprintln!("PASS composition: stepwise subcommands reproduce the pipeline artifacts");
}
