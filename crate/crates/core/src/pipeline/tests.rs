use super::*;

use crate::classifier::Label;
use std::path::Path;

fn tiny_options(seed: u64) -> SynthOptions {
    SynthOptions {
        groups: 6,
        group_size: 3,
        keywords: 2,
        train_texts: 40,
        test_texts: 40,
        spam_fraction: 0.5,
        min_len: 4,
        max_len: 8,
        seed,
    }
}

/// Overrides shrinking every stage far below the desk-scale defaults so
/// the whole pipeline runs in well under a second.
fn tiny_overrides() -> Vec<String> {
    [
        "d=6",
        "layers=1",
        "families=6",
        "gibbs_sweeps=8",
        "walks_per_vertex=2",
        "walk_length=10",
        "pair_epochs=2",
        "pair_negatives=2",
        "text_epochs=1",
        "lm_epochs=1",
        "lm_negatives=3",
        "train_epochs=2",
        "train_learning_rate=0.3",
        "conv_filters=4",
        "conv_widths=2,3",
        "batch=16",
        "mutation_targets=2",
    ]
    .into_iter()
    .map(String::from)
    .collect()
}

fn tiny_world(dir: &Path, seed: u64) -> (SynthData, PipelineConfig) {
    let (data, files) = write_synthetic(dir, &tiny_options(seed)).unwrap();
    let config = PipelineConfig::load(&files.config, &tiny_overrides()).unwrap();
    (data, config)
}

#[test]
fn full_pipeline_runs_and_is_then_up_to_date() {
    let dir = tempfile::tempdir().unwrap();
    let (data, config) = tiny_world(dir.path(), 3);

    for stage in Stage::ALL {
        let outcome = run_stage(stage, &config, false).unwrap();
        assert_eq!(outcome.status, StageStatus::Ran, "{stage} should execute");
        assert!(!outcome.aligned().is_empty());
    }
    for file in [
        GRAPH_FILE,
        WALKS_FILE,
        FAMILY_FILE,
        PAIR_FILE,
        TEXT_EMB_FILE,
        PRETRAINED_FILE,
        MODEL_FILE,
        CLASSIFIER_FILE,
        MUTATED_FILE,
        MANIFEST_FILE,
    ] {
        assert!(config.artifacts_dir.join(file).exists(), "missing {file}");
    }

    // all stages are now current
    for stage in Stage::ALL {
        let outcome = run_stage(stage, &config, false).unwrap();
        assert_eq!(outcome.status, StageStatus::UpToDate, "{stage} should skip");
        assert!(!outcome.report.is_empty(), "{stage} report should be replayed");
    }
    // --force re-runs
    let outcome = run_stage(Stage::Walk, &config, true).unwrap();
    assert_eq!(outcome.status, StageStatus::Ran);

    // eval report is complete and consistent
    let eval = read_report(&config, Stage::Eval);
    let get = |k: &str| {
        eval.iter().find(|(key, _)| key == k).map(|(_, v)| v.clone()).unwrap_or_default()
    };
    let total: usize = ["true_positives", "false_positives", "false_negatives", "true_negatives"]
        .iter()
        .map(|k| get(k).parse::<usize>().unwrap())
        .sum();
    assert_eq!(total, data.test.len());
    assert!(get("accuracy").parse::<f64>().unwrap() >= 0.0);

    // nearest query: k results, none the query itself
    let query = data.keywords[0];
    let ranked = nearest_query(&config, query, 3).unwrap();
    assert_eq!(ranked.len(), 3);
    assert!(ranked.iter().all(|&(c, _)| c != query));

    // mutated test split exists and spam texts differ from the originals
    let mutated = load_dataset(&config.artifacts_dir.join(MUTATED_FILE)).unwrap();
    assert_eq!(mutated.len(), data.test.len());
    let changed = mutated
        .iter()
        .zip(&data.test)
        .filter(|((m, _), (o, _))| m != o)
        .count();
    assert!(changed > 0, "rate-0.5 mutation must change some spam texts");
    for ((m, ml), (o, ol)) in mutated.iter().zip(&data.test) {
        assert_eq!(ml, ol, "labels never change");
        if *ol == Label::Normal {
            assert_eq!(m, o, "normal texts never change");
        }
    }
}

#[test]
fn config_change_invalidates_only_affected_stages() {
    let dir = tempfile::tempdir().unwrap();
    let (_, config) = tiny_world(dir.path(), 4);
    run_stage(Stage::BuildGraph, &config, false).unwrap();
    run_stage(Stage::Walk, &config, false).unwrap();

    // unrelated change: both stages stay current
    let mut overrides = tiny_overrides();
    overrides.push("train_epochs=3".into());
    let bumped =
        PipelineConfig::load(&dir.path().join("ripple.conf"), &overrides).unwrap();
    assert_eq!(run_stage(Stage::BuildGraph, &bumped, false).unwrap().status, StageStatus::UpToDate);
    assert_eq!(run_stage(Stage::Walk, &bumped, false).unwrap().status, StageStatus::UpToDate);

    // walk-affecting change: build-graph stays, walk re-runs
    let mut overrides = tiny_overrides();
    overrides.push("walk_length=12".into());
    let walk_changed =
        PipelineConfig::load(&dir.path().join("ripple.conf"), &overrides).unwrap();
    assert_eq!(
        run_stage(Stage::BuildGraph, &walk_changed, false).unwrap().status,
        StageStatus::UpToDate
    );
    assert_eq!(run_stage(Stage::Walk, &walk_changed, false).unwrap().status, StageStatus::Ran);
}

#[test]
fn missing_dependencies_name_the_stage_to_run() {
    let dir = tempfile::tempdir().unwrap();
    let (_, config) = tiny_world(dir.path(), 5);

    let err = run_stage(Stage::Eval, &config, false).unwrap_err();
    assert!(matches!(err, PipelineError::MissingDependency { stage: Stage::Train }), "{err}");
    assert_eq!(err.exit_code(), 2);
    assert!(err.to_string().contains("train"));

    let err = run_stage(Stage::Walk, &config, false).unwrap_err();
    assert!(matches!(err, PipelineError::MissingDependency { stage: Stage::BuildGraph }));

    let err = nearest_query(&config, 'x', 3).unwrap_err();
    assert!(matches!(err, PipelineError::MissingDependency { stage: Stage::BuildGraph }));
}

#[test]
fn identical_runs_produce_identical_manifests() {
    let dir_a = tempfile::tempdir().unwrap();
    let dir_b = tempfile::tempdir().unwrap();
    let (_, config_a) = tiny_world(dir_a.path(), 6);
    let (_, config_b) = tiny_world(dir_b.path(), 6);

    for stage in [Stage::BuildGraph, Stage::Walk, Stage::TrainVfge, Stage::Mutate] {
        run_stage(stage, &config_a, false).unwrap();
        run_stage(stage, &config_b, false).unwrap();
    }
    let manifest_a =
        std::fs::read_to_string(config_a.artifacts_dir.join(MANIFEST_FILE)).unwrap();
    let manifest_b =
        std::fs::read_to_string(config_b.artifacts_dir.join(MANIFEST_FILE)).unwrap();
    assert!(!manifest_a.is_empty());
    assert_eq!(manifest_a, manifest_b, "manifests must not depend on where files live");
}

#[test]
fn lock_file_excludes_concurrent_runs() {
    let dir = tempfile::tempdir().unwrap();
    let (_, config) = tiny_world(dir.path(), 7);
    std::fs::create_dir_all(&config.artifacts_dir).unwrap();
    std::fs::write(config.artifacts_dir.join(".lock"), "pid=0\n").unwrap();

    let err = run_stage(Stage::BuildGraph, &config, false).unwrap_err();
    assert!(matches!(err, PipelineError::Locked(_)), "{err}");
    assert_eq!(err.exit_code(), 1);

    std::fs::remove_file(config.artifacts_dir.join(".lock")).unwrap();
    run_stage(Stage::BuildGraph, &config, false).unwrap();
    // the lock is released afterwards
    assert!(!config.artifacts_dir.join(".lock").exists());
}

#[test]
fn stage_names_round_trip() {
    for stage in Stage::ALL {
        assert_eq!(stage.name().parse::<Stage>().unwrap(), stage);
    }
    assert!("no-such-stage".parse::<Stage>().is_err());
}

#[test]
fn benchmark_report_covers_four_variants_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    let (_, config) = tiny_world(dir.path(), 8);
    for stage in [
        Stage::BuildGraph,
        Stage::Walk,
        Stage::TrainVfge,
        Stage::PretrainLm,
        Stage::Mutate,
    ] {
        run_stage(stage, &config, false).unwrap();
    }
    let report = run_benchmark(&config).unwrap();
    let names: Vec<&str> = report.rows.iter().map(|r| r.name).collect();
    assert_eq!(names, ["SS_Original", "SS_Graph", "SS_Naive", "Skipgram"]);
    for row in &report.rows {
        assert!((0.0..=1.0).contains(&row.accuracy), "{row:?}");
        assert!((0.0..=1.0).contains(&row.f1), "{row:?}");
    }
    let again = run_benchmark(&config).unwrap();
    assert_eq!(report, again, "benchmark must be deterministic");
}
