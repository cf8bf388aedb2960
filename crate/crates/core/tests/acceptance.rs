//! Release acceptance checks.
//!
//! Each test prints one `ACCEPTANCE PASS:` / `ACCEPTANCE FAIL:` line for
//! its criterion (run with `cargo test --test acceptance -- --nocapture`
//! to see them). The expensive synthetic end-to-end pipeline is built
//! once and shared by the tests that inspect it; the determinism test
//! builds a second, independent copy and compares the two.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tempfile::TempDir;

use ripple_core::classifier::{
    backward as clf_backward, cached_loss, conv_responses, forward as clf_forward,
    load_classifier, load_dataset, save_classifier, ClassifierGrads, ConvClassifier, ConvOptions,
    Label,
};
use ripple_core::encoding::{stroke_similarity, zhengma_similarity};
use ripple_core::graph::{load_graph, save_graph, EdgeType, VariationGraph};
use ripple_core::math::{finite_difference_gradient, max_relative_error};
use ripple_core::pipeline::{
    run_all, write_synthetic, BenchmarkReport, PipelineConfig, Stage, SynthOptions,
    CLASSIFIER_FILE, FAMILY_FILE, GRAPH_FILE, MODEL_FILE, MUTATED_FILE, PAIR_FILE,
    PRETRAINED_FILE, TEXT_EMB_FILE, WALKS_FILE,
};
use ripple_core::sslm::{load_model, save_model, SslmGrads, SslmModel, SslmOptions};
use ripple_core::sslm::{load_text_embeddings, save_text_embeddings};
use ripple_core::vfge::{
    generate_walks, gibbs_assign, pair_gradients, pair_loss, pair_softmax, PairEmbeddings,
};
use ripple_core::vfge::{
    load_embeddings, load_family_state, load_walks, save_embeddings, save_family_state,
    save_walks,
};

/// Prints the one-line verdict for a criterion, then enforces it.
fn check(criterion: &str, ok: bool, detail: String) {
    let verdict = if ok { "PASS" } else { "FAIL" };
    println!("ACCEPTANCE {verdict}: {criterion} — {detail}");
    assert!(ok, "{criterion}: {detail}");
}

// ---------------------------------------------------------------------
// Shared end-to-end world: default synthetic benchmark, full pipeline.
// ---------------------------------------------------------------------

struct World {
    dir: TempDir,
    elapsed: Duration,
    chars: usize,
    train_texts: usize,
    test_texts: usize,
    mutation_rate: f64,
    f1: BTreeMap<String, f64>,
    benchmark_report: Vec<(String, String)>,
    manifest: String,
}

impl World {
    fn build() -> World {
        let dir = TempDir::new().expect("tempdir");
        let start = Instant::now();
        let (data, files) =
            write_synthetic(dir.path(), &SynthOptions::default()).expect("synthetic world");
        let config = PipelineConfig::load(&files.config, &[]).expect("config");
        let outcomes = run_all(&config, false).expect("pipeline");
        let elapsed = start.elapsed();

        let bench = outcomes
            .iter()
            .find(|o| o.stage == Stage::Benchmark)
            .expect("benchmark outcome");
        let mut f1 = BTreeMap::new();
        for (k, v) in &bench.report {
            if let Some(name) = k.strip_suffix("_f1") {
                f1.insert(name.to_string(), v.parse::<f64>().expect("f1 value"));
            }
        }
        let manifest = std::fs::read_to_string(dir.path().join("artifacts/manifest.txt"))
            .expect("manifest");
        World {
            dir,
            elapsed,
            chars: data.records.len(),
            train_texts: data.train.len(),
            test_texts: data.test.len(),
            mutation_rate: config.mutation_rate,
            f1,
            benchmark_report: bench.report.clone(),
            manifest,
        }
    }

    fn artifacts(&self) -> std::path::PathBuf {
        self.dir.path().join("artifacts")
    }
}

static WORLD: OnceLock<World> = OnceLock::new();

fn world() -> &'static World {
    WORLD.get_or_init(World::build)
}

// ---------------------------------------------------------------------
// Criteria
// ---------------------------------------------------------------------

#[test]
fn published_full_scale_numbers_are_context_only() {
    // The full-scale results were measured on proprietary corpora with
    // dictionaries that are not distributed; nothing here re-derives
    // them. They are displayed alongside benchmark output as context,
    // and the repository's own gate is the synthetic relative benchmark
    // below.
    let block = BenchmarkReport::reference_block();
    print!("{block}");
    check(
        "published full-scale numbers are context only",
        block.contains("not reproducible") && block.contains("SMS corpus"),
        "displayed next to benchmark output, never asserted against".to_string(),
    );
}

#[test]
fn synthetic_benchmark_separates_graph_aware_models_from_the_text_baseline() {
    let w = world();
    let sso = w.f1["ss_original"];
    let ssg = w.f1["ss_graph"];
    let sk = w.f1["skipgram"];
    let scale_ok = w.chars >= 200
        && w.train_texts >= 2000
        && w.test_texts >= 2000
        && (w.mutation_rate - 0.5).abs() < 1e-12;
    let margin_ok = sso >= sk + 0.05;
    let order_ok = ssg >= sk;
    let time_ok = w.elapsed <= Duration::from_secs(600);
    check(
        "synthetic end-to-end benchmark",
        scale_ok && margin_ok && order_ok && time_ok,
        format!(
            "{} chars, {}+{} texts, mutation rate {}; F1 full={sso:.4} graph={ssg:.4} \
             text-baseline={sk:.4} (margin {:+.4}, needs ≥ +0.05); {:.1}s of ≤ 600s",
            w.chars,
            w.train_texts,
            w.test_texts,
            w.mutation_rate,
            sso - sk,
            w.elapsed.as_secs_f64(),
        ),
    );
}

#[test]
fn training_split_contains_no_mutation_introduced_characters() {
    let w = world();
    let chars_of = |examples: &[(String, Label)]| -> BTreeSet<char> {
        examples.iter().flat_map(|(t, _)| t.chars()).collect()
    };
    let train = chars_of(&load_dataset(&w.dir.path().join("train.tsv")).unwrap());
    let clean_test = chars_of(&load_dataset(&w.dir.path().join("test.tsv")).unwrap());
    let mutated = chars_of(&load_dataset(&w.artifacts().join(MUTATED_FILE)).unwrap());

    let introduced: BTreeSet<char> = mutated.difference(&clean_test).copied().collect();
    let leaked: Vec<char> = introduced.intersection(&train).copied().collect();
    check(
        "mutated characters never appear in the training split",
        !introduced.is_empty() && leaked.is_empty(),
        format!(
            "mutation introduced {} characters absent from the clean corpus; {} of them occur \
             in training data",
            introduced.len(),
            leaked.len()
        ),
    );
}

/// Minimum distance of any convolution response to a pooling-argmax tie
/// or rectifier boundary; finite differences are only meaningful for
/// draws comfortably away from these kinks.
fn kink_margin(model: &ConvClassifier, seq: &[Vec<f64>]) -> f64 {
    let mut margin = f64::INFINITY;
    for bank in conv_responses(model, seq).unwrap() {
        for responses in bank {
            let mut sorted = responses;
            sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
            margin = margin.min(sorted[0].abs());
            if sorted.len() > 1 {
                margin = margin.min(sorted[0] - sorted[1]);
            }
        }
    }
    margin
}

#[test]
fn gradients_match_central_finite_differences() {
    let start = Instant::now();
    let mut points = 0usize;
    let mut worst: f64 = 0.0;

    // Composed model: classifier cross-entropy through the full
    // embedder (gate, projection, both recurrent stacks, aggregation)
    // and every classifier parameter. d = 3, layers = 2, so every
    // tensor dimension stays ≤ 8.
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let mut composed_cases = 0;
    for case in 0..60u64 {
        if composed_cases == 2 {
            break;
        }
        let vocab: Vec<char> = vec!['a', 'b', 'c', 'd', 'e'];
        let graph_rows: Vec<Vec<f64>> = (0..5)
            .map(|_| (0..6).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let text_rows: Vec<Vec<f64>> = (0..5)
            .map(|_| (0..3).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let embedder = SslmModel::new(
            &SslmOptions { d: 3, layers: 2 },
            vocab,
            graph_rows,
            text_rows,
            500 + case,
        )
        .unwrap();
        let clf = ConvClassifier::init(
            embedder.ss_dim(),
            &ConvOptions { widths: vec![2, 3], filters: 2 },
            600 + case,
        )
        .unwrap();
        let text = "beadc";
        let label = Label::Spam;

        let ss = embedder.embed_sequence(text).unwrap();
        if kink_margin(&clf, &ss) < 1e-3 {
            continue;
        }
        composed_cases += 1;

        let emb_cache = embedder.forward_cached(text, None).unwrap();
        let clf_cache = clf_forward(&clf, &emb_cache.ss, None).unwrap();
        let mut clf_grads = ClassifierGrads::zeros(&clf);
        let d_ss = clf_backward(&clf, &clf_cache, label, &mut clf_grads);
        let mut emb_grads = SslmGrads::zeros(embedder.d(), embedder.layer_count());
        embedder.backward_ss(&emb_cache, &d_ss, &mut emb_grads);

        let loss = |emb: &SslmModel, c: &ConvClassifier| -> f64 {
            let ss = emb.embed_sequence(text).unwrap();
            let cache = clf_forward(c, &ss, None).unwrap();
            cached_loss(&cache, label)
        };

        // Embedder parameters under the composed loss.
        let mut flat = Vec::new();
        embedder.clone().visit_params(|p| flat.push(*p));
        let mut analytic = Vec::new();
        emb_grads.clone().visit_params(|p| analytic.push(*p));
        let numeric = finite_difference_gradient(
            &mut |params: &[f64]| {
                let mut m = embedder.clone();
                let mut it = params.iter();
                m.visit_params(|p| *p = *it.next().unwrap());
                loss(&m, &clf)
            },
            &flat,
            1e-5,
        );
        worst = worst.max(max_relative_error(&analytic, &numeric));
        points += flat.len();

        // Classifier parameters under the composed loss.
        let mut flat = Vec::new();
        clf.clone().visit_params(|p| flat.push(*p));
        let mut analytic = Vec::new();
        clf_grads.clone().visit_params(|p| analytic.push(*p));
        let numeric = finite_difference_gradient(
            &mut |params: &[f64]| {
                let mut c = clf.clone();
                let mut it = params.iter();
                c.visit_params(|p| *p = *it.next().unwrap());
                loss(&embedder, &c)
            },
            &flat,
            1e-5,
        );
        worst = worst.max(max_relative_error(&analytic, &numeric));
        points += flat.len();
    }
    assert_eq!(composed_cases, 2, "not enough kink-free composed draws");

    // Pair skip-gram negative-sampling loss at d = 6.
    for case in 0..8u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(700 + case);
        let draw = |rng: &mut ChaCha8Rng| -> Vec<f64> {
            (0..6).map(|_| rng.random_range(-1.0..1.0)).collect()
        };
        let v = draw(&mut rng);
        let u_pos = draw(&mut rng);
        let u_negs: Vec<Vec<f64>> = (0..3).map(|_| draw(&mut rng)).collect();

        let (dv, du_pos, du_negs) = pair_gradients(&v, &u_pos, &u_negs);
        let analytic: Vec<f64> = dv
            .iter()
            .chain(du_pos.iter())
            .chain(du_negs.iter().flatten())
            .copied()
            .collect();
        let flat: Vec<f64> = v
            .iter()
            .chain(u_pos.iter())
            .chain(u_negs.iter().flatten())
            .copied()
            .collect();
        let numeric = finite_difference_gradient(
            &mut |params: &[f64]| {
                let v = params[0..6].to_vec();
                let u_pos = params[6..12].to_vec();
                let u_negs: Vec<Vec<f64>> =
                    params[12..].chunks(6).map(|c| c.to_vec()).collect();
                pair_loss(&v, &u_pos, &u_negs)
            },
            &flat,
            1e-5,
        );
        worst = worst.max(max_relative_error(&analytic, &numeric));
        points += flat.len();
    }

    let elapsed = start.elapsed();
    check(
        "gradients match central finite differences",
        points >= 100 && worst < 1e-4 && elapsed <= Duration::from_secs(60),
        format!(
            "{points} parameters checked (≥ 100), worst relative error {worst:.2e} (< 1e-4), \
             {:.1}s of ≤ 60s",
            elapsed.as_secs_f64()
        ),
    );
}

/// Fraction of same-clique token pairs assigned the same family;
/// invariant under family relabeling, so "after optimal relabeling" is
/// implicit.
fn coassignment_purity(
    walks: &[Vec<u32>],
    assignments: &[Vec<u32>],
    clique_of: &[usize],
    k: usize,
) -> f64 {
    let n_cliques = clique_of.iter().max().unwrap() + 1;
    let mut counts = vec![vec![0u64; k]; n_cliques];
    for (walk, zs) in walks.iter().zip(assignments) {
        for (&w, &z) in walk.iter().zip(zs) {
            counts[clique_of[w as usize]][z as usize] += 1;
        }
    }
    let pairs = |n: u64| n * n.saturating_sub(1) / 2;
    let mut same = 0u64;
    let mut total = 0u64;
    for row in &counts {
        total += pairs(row.iter().sum());
        same += row.iter().map(|&c| pairs(c)).sum::<u64>();
    }
    same as f64 / total as f64
}

#[test]
fn collapsed_gibbs_recovers_planted_families() {
    // Two disjoint 4-cliques; walks never cross between them, so the
    // planted family of every token is its clique.
    let chars: Vec<char> = "abcdWXYZ".chars().collect();
    let mut edges = Vec::new();
    for clique in ["abcd", "WXYZ"] {
        let cs: Vec<char> = clique.chars().collect();
        for i in 0..cs.len() {
            for j in i + 1..cs.len() {
                edges.push((cs[i], cs[j], EdgeType::Pinyin, 0.9));
            }
        }
    }
    let graph = VariationGraph::from_edges(chars, &edges).unwrap();
    let corpus = generate_walks(&graph, 10, 20, 7).unwrap();
    let clique_of = [0, 0, 0, 0, 1, 1, 1, 1];

    // A symmetric prior of 1.0 per family keeps the per-walk counts
    // decisive at K = 2; 200 sweeps is far past mixing for this size.
    let state = gibbs_assign(&corpus, 2, 1.0, 0.01, 200, 13).unwrap();
    let purity = coassignment_purity(&corpus.walks, &state.z, &clique_of, 2);

    let degenerate = gibbs_assign(&corpus, 1, 1.0, 0.01, 200, 13).unwrap();
    let all_zero = degenerate.z.iter().flatten().all(|&z| z == 0);

    check(
        "collapsed Gibbs recovers planted families",
        purity >= 0.9 && all_zero,
        format!(
            "two planted cliques, K=2, 200 sweeps: co-assignment purity {purity:.3} (≥ 0.9); \
             K=1 assigns every token family 0 exactly: {all_zero}"
        ),
    );
}

#[test]
fn pair_softmax_is_normalized_under_full_enumeration() {
    let mut worst: f64 = 0.0;
    let mut centers = 0usize;
    for seed in [3u64, 19] {
        for scale in [1.0, 6.0] {
            let mut emb = PairEmbeddings::init(50, 5, 8, seed);
            if scale != 1.0 {
                for table in
                    [&mut emb.char_in, &mut emb.char_out, &mut emb.fam_in, &mut emb.fam_out]
                {
                    for row in table.iter_mut() {
                        for x in row.iter_mut() {
                            *x *= scale;
                        }
                    }
                }
            }
            let context_families: Vec<u32> = (0..50).map(|c| c % 5).collect();
            for center_char in 0..50u32 {
                for center_family in 0..5u32 {
                    let probs =
                        pair_softmax(&emb, &context_families, center_char, center_family)
                            .unwrap();
                    let sum: f64 = probs.iter().sum();
                    worst = worst.max((sum - 1.0).abs());
                    assert!(
                        probs.iter().all(|&p| p > 0.0 && p < 1.0 && p.is_finite()),
                        "probabilities must lie in (0, 1)"
                    );
                    centers += 1;
                }
            }
        }
    }
    check(
        "pair softmax normalizes over the full vocabulary-family enumeration",
        worst <= 1e-6,
        format!(
            "{centers} center pairs over |C|=50, K=5 (two seeds, two scales); \
             worst |sum − 1| = {worst:.2e} (≤ 1e-6)"
        ),
    );
}

/// Substring oracle by full enumeration (no dynamic programming).
fn oracle_substring(a: &[u8], b: &[u8]) -> usize {
    let mut best = 0;
    for i in 0..a.len() {
        for j in i + 1..=a.len() {
            if j - i > best && b.windows(j - i).any(|w| w == &a[i..j]) {
                best = j - i;
            }
        }
    }
    best
}

/// Subsequence oracle by plain recursion with memoization, written
/// independently of the library's iterative table.
fn oracle_subsequence(a: &[u8], b: &[u8]) -> usize {
    fn go(a: &[u8], b: &[u8], i: usize, j: usize, memo: &mut Vec<Vec<Option<usize>>>) -> usize {
        if i == a.len() || j == b.len() {
            return 0;
        }
        if let Some(v) = memo[i][j] {
            return v;
        }
        let v = if a[i] == b[j] {
            1 + go(a, b, i + 1, j + 1, memo)
        } else {
            go(a, b, i + 1, j, memo).max(go(a, b, i, j + 1, memo))
        };
        memo[i][j] = Some(v);
        v
    }
    let mut memo = vec![vec![None; b.len()]; a.len()];
    go(a, b, 0, 0, &mut memo)
}

#[test]
fn similarity_metrics_agree_with_independent_oracles() {
    // Worked pair: stroke codes share an 8-long substring and a 10-long
    // subsequence over a longer code of 13, giving (8+10)/(2·13) = 9/13;
    // the letter codes share {K, F} of {W, T, K, F, S}, giving 2/5.
    let stroke = stroke_similarity("4523425111234", "4525111234").unwrap();
    let zhengma = zhengma_similarity("WTKF", "SKF").unwrap();
    let worked_ok =
        (stroke - 9.0 / 13.0).abs() < 1e-9 && (zhengma - 0.4).abs() < 1e-9;

    // 1,000 random digit-string pairs: exact equality against oracles
    // assembled with the same final arithmetic.
    let mut rng = ChaCha8Rng::seed_from_u64(909);
    let mut stroke_exact = true;
    for _ in 0..1000 {
        let draw = |rng: &mut ChaCha8Rng| -> String {
            let len = rng.random_range(1..=12);
            (0..len).map(|_| char::from(b'1' + rng.random_range(0..5) as u8)).collect()
        };
        let a = draw(&mut rng);
        let b = draw(&mut rng);
        let got = stroke_similarity(&a, &b).unwrap();
        let (ab, bb) = (a.as_bytes(), b.as_bytes());
        let longest = ab.len().max(bb.len()) as f64;
        let expect = (oracle_substring(ab, bb) as f64 / longest
            + oracle_subsequence(ab, bb) as f64 / longest)
            / 2.0;
        if got != expect {
            stroke_exact = false;
            break;
        }
    }

    // Every pair of non-empty subsets of a 4-letter alphabet: exact
    // equality against a naive intersection-over-union.
    let letters = *b"ABCD";
    let subset = |mask: u32| -> String {
        letters
            .iter()
            .enumerate()
            .filter(|(i, _)| mask & (1 << i) != 0)
            .map(|(_, &ch)| char::from(ch))
            .collect()
    };
    let mut zhengma_exact = true;
    for ma in 1u32..16 {
        for mb in 1u32..16 {
            let inter = (ma & mb).count_ones() as f64;
            let union = (ma | mb).count_ones() as f64;
            if zhengma_similarity(&subset(ma), &subset(mb)).unwrap() != inter / union {
                zhengma_exact = false;
            }
        }
    }

    check(
        "similarity metrics agree with independent oracles",
        worked_ok && stroke_exact && zhengma_exact,
        format!(
            "worked pair: stroke {stroke:.10} (= 9/13), letter-set {zhengma:.1} (= 2/5); \
             1,000 random stroke pairs exact: {stroke_exact}; exhaustive 4-letter \
             intersection-over-union exact: {zhengma_exact}"
        ),
    );
}

#[test]
fn pipelines_are_deterministic_and_artifacts_round_trip() {
    let w = world();

    // An independent second run over the same inputs and seeds, in a
    // different directory, must reproduce the manifest (which hashes
    // every artifact, walks included) and the benchmark report.
    let dir2 = TempDir::new().unwrap();
    let (_, files) = write_synthetic(dir2.path(), &SynthOptions::default()).unwrap();
    let config = PipelineConfig::load(&files.config, &[]).unwrap();
    let outcomes = run_all(&config, false).unwrap();
    let manifest2 =
        std::fs::read_to_string(dir2.path().join("artifacts/manifest.txt")).unwrap();
    let bench2 = outcomes.iter().find(|o| o.stage == Stage::Benchmark).unwrap();
    let deterministic = manifest2 == w.manifest && bench2.report == w.benchmark_report;

    // Every persisted artifact reloads and re-saves to identical bytes.
    let dir = w.artifacts();
    let tmp = TempDir::new().unwrap();
    let bytes = |p: &Path| std::fs::read(p).unwrap();
    let mut round_trips = Vec::new();
    let mut ok = |file: &str, save: &dyn Fn(&Path)| {
        let copy = tmp.path().join(file);
        save(&copy);
        let same = bytes(&dir.join(file)) == bytes(&copy);
        round_trips.push((file.to_string(), same));
    };
    ok(GRAPH_FILE, &|p| {
        save_graph(&load_graph(dir.join(GRAPH_FILE)).unwrap(), p).unwrap()
    });
    ok(WALKS_FILE, &|p| {
        save_walks(&load_walks(dir.join(WALKS_FILE)).unwrap(), p).unwrap()
    });
    ok(FAMILY_FILE, &|p| {
        save_family_state(&load_family_state(dir.join(FAMILY_FILE)).unwrap(), p).unwrap()
    });
    ok(PAIR_FILE, &|p| {
        save_embeddings(&load_embeddings(dir.join(PAIR_FILE)).unwrap(), p).unwrap()
    });
    ok(TEXT_EMB_FILE, &|p| {
        save_text_embeddings(&load_text_embeddings(&dir.join(TEXT_EMB_FILE)).unwrap(), p)
            .unwrap()
    });
    ok(PRETRAINED_FILE, &|p| {
        save_model(&load_model(&dir.join(PRETRAINED_FILE)).unwrap(), p).unwrap()
    });
    ok(MODEL_FILE, &|p| save_model(&load_model(&dir.join(MODEL_FILE)).unwrap(), p).unwrap());
    ok(CLASSIFIER_FILE, &|p| {
        save_classifier(&load_classifier(&dir.join(CLASSIFIER_FILE)).unwrap(), p).unwrap()
    });
    let all_exact = round_trips.iter().all(|(_, same)| *same);
    let failed: Vec<&str> =
        round_trips.iter().filter(|(_, s)| !s).map(|(f, _)| f.as_str()).collect();

    check(
        "determinism and bit-exact persistence",
        deterministic && all_exact,
        format!(
            "independent rerun reproduces manifest and benchmark report: {deterministic}; \
             {} artifacts re-save to identical bytes{}",
            round_trips.len(),
            if failed.is_empty() {
                String::new()
            } else {
                format!(" (failed: {})", failed.join(", "))
            }
        ),
    );
}
