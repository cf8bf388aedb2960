//! Stage orchestration over a shared artifacts directory.
//!
//! Each stage reads its inputs (config-named files and upstream
//! artifacts), writes versioned binary artifacts, and records a
//! manifest entry: a hash over the stage's relevant settings and input
//! contents, the seed it ran under, and the hash of every file it
//! produced. Re-running a stage whose manifest entry still matches is a
//! no-op unless forced. A lock file serializes runs per directory.
//!
//! Stage order: `build-graph` → `walk` → `train-vfge` → `pretrain-lm` →
//! `train` → `mutate` → `eval`; `benchmark` trains the comparison
//! variants from the shared artifacts, and `nearest` is a read-only
//! query.

pub mod benchmark;
pub mod config;
pub mod mutate;
pub mod synth;

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::classifier::{
    load_classifier, load_dataset, save_classifier, save_dataset, train_detector,
    ClassifierError, ConvClassifier, ConvOptions, EvalReport, TrainOptions,
};
use crate::encoding::{load_encoding_table, EncodingError};
use crate::graph::{build_graph, graph_stats, load_graph, save_graph, GraphError};
use crate::sslm::{
    load_model, save_model, save_text_embeddings, train_text_skipgram,
    PretrainOptions, SslmError, SslmModel, SslmOptions, TextSkipgramOptions,
};
use crate::vfge::{
    gibbs_assign, integrate_all, nearest_chars, train_pair_skipgram, SkipgramOptions, VfgeError,
};
use crate::vfge::{
    load_embeddings, load_family_state, load_walks, save_embeddings, save_family_state,
    save_walks,
};
use crate::vfge::generate_walks;
use crate::persist::PersistError;

pub use benchmark::{run_benchmark, BenchmarkReport, BenchmarkRow, PUBLISHED_REFERENCE};
pub use config::{ConfigPaths, PipelineConfig};
pub use mutate::{mutate_corpus, select_targets, MutationReport, MutationSpec};
pub use synth::{
    desk_scale_config, generate_synthetic, write_synthetic, SynthData, SynthFiles, SynthOptions,
};

pub const GRAPH_FILE: &str = "graph.bin";
pub const WALKS_FILE: &str = "walks.bin";
pub const FAMILY_FILE: &str = "family.bin";
pub const PAIR_FILE: &str = "pair_embeddings.bin";
pub const TEXT_EMB_FILE: &str = "text_embeddings.bin";
pub const PRETRAINED_FILE: &str = "model_pretrained.bin";
pub const MODEL_FILE: &str = "model.bin";
pub const CLASSIFIER_FILE: &str = "classifier.bin";
pub const MUTATED_FILE: &str = "test_mutated.tsv";
pub const MANIFEST_FILE: &str = "manifest.txt";
const LOCK_FILE: &str = ".lock";

/// Errors from configuration, orchestration, or any stage.
#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("missing dependency: run stage '{stage}' first")]
    MissingDependency { stage: Stage },
    #[error("artifacts directory is locked ('{0}' exists); is another run active? remove the file if not")]
    Locked(String),
    #[error("io error on '{path}': {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Encoding(#[from] EncodingError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Vfge(#[from] VfgeError),
    #[error(transparent)]
    Sslm(#[from] SslmError),
    #[error(transparent)]
    Classifier(#[from] ClassifierError),
    #[error(transparent)]
    Persist(#[from] PersistError),
}

impl PipelineError {
    /// CLI exit code: 2 for a missing upstream stage, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::MissingDependency { .. } => 2,
            _ => 1,
        }
    }
}

fn io_err(path: &Path, source: std::io::Error) -> PipelineError {
    PipelineError::Io { path: path.display().to_string(), source }
}

/// The runnable pipeline stages.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Stage {
    BuildGraph,
    Walk,
    TrainVfge,
    PretrainLm,
    Train,
    Mutate,
    Eval,
    Benchmark,
}

impl Stage {
    pub const ALL: [Stage; 8] = [
        Stage::BuildGraph,
        Stage::Walk,
        Stage::TrainVfge,
        Stage::PretrainLm,
        Stage::Train,
        Stage::Mutate,
        Stage::Eval,
        Stage::Benchmark,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::BuildGraph => "build-graph",
            Stage::Walk => "walk",
            Stage::TrainVfge => "train-vfge",
            Stage::PretrainLm => "pretrain-lm",
            Stage::Train => "train",
            Stage::Mutate => "mutate",
            Stage::Eval => "eval",
            Stage::Benchmark => "benchmark",
        }
    }

    /// Artifact files this stage writes (relative to the artifacts dir).
    fn outputs(self) -> &'static [&'static str] {
        match self {
            Stage::BuildGraph => &[GRAPH_FILE],
            Stage::Walk => &[WALKS_FILE],
            Stage::TrainVfge => &[FAMILY_FILE, PAIR_FILE],
            Stage::PretrainLm => &[TEXT_EMB_FILE, PRETRAINED_FILE],
            Stage::Train => &[MODEL_FILE, CLASSIFIER_FILE],
            Stage::Mutate => &[MUTATED_FILE],
            Stage::Eval | Stage::Benchmark => &[],
        }
    }

    /// Upstream artifacts this stage needs, with the stage that makes them.
    fn dependencies(self) -> &'static [(&'static str, Stage)] {
        match self {
            Stage::BuildGraph => &[],
            Stage::Walk => &[(GRAPH_FILE, Stage::BuildGraph)],
            Stage::TrainVfge => &[(WALKS_FILE, Stage::Walk)],
            Stage::PretrainLm => &[
                (GRAPH_FILE, Stage::BuildGraph),
                (FAMILY_FILE, Stage::TrainVfge),
                (PAIR_FILE, Stage::TrainVfge),
            ],
            Stage::Train => &[(PRETRAINED_FILE, Stage::PretrainLm)],
            Stage::Mutate => &[(GRAPH_FILE, Stage::BuildGraph)],
            Stage::Eval => &[
                (MODEL_FILE, Stage::Train),
                (CLASSIFIER_FILE, Stage::Train),
                (MUTATED_FILE, Stage::Mutate),
            ],
            Stage::Benchmark => &[
                (GRAPH_FILE, Stage::BuildGraph),
                (FAMILY_FILE, Stage::TrainVfge),
                (PAIR_FILE, Stage::TrainVfge),
                (TEXT_EMB_FILE, Stage::PretrainLm),
                (PRETRAINED_FILE, Stage::PretrainLm),
                (MUTATED_FILE, Stage::Mutate),
            ],
        }
    }

    /// Config keys whose values feed this stage's manifest hash.
    fn settings_keys(self) -> &'static [&'static str] {
        match self {
            Stage::BuildGraph => &[
                "pinyin_threshold",
                "stroke_threshold",
                "zhengma_threshold",
                "pinyin_initial_weight",
                "pinyin_rhyme_weight",
                "pinyin_tone_weight",
            ],
            Stage::Walk => &["walks_per_vertex", "walk_length"],
            Stage::TrainVfge => &[
                "families",
                "alpha",
                "eta",
                "gibbs_sweeps",
                "pair_window",
                "pair_negatives",
                "pair_learning_rate",
                "pair_epochs",
            ],
            Stage::PretrainLm => &[
                "text_window",
                "text_negatives",
                "text_learning_rate",
                "text_epochs",
                "layers",
                "lm_epochs",
                "lm_learning_rate",
                "lm_negatives",
                "dropout",
            ],
            Stage::Train | Stage::Benchmark => &[
                "conv_widths",
                "conv_filters",
                "batch",
                "train_epochs",
                "train_learning_rate",
                "freeze_embedder",
                "dropout",
            ],
            Stage::Mutate => &["mutation_rate", "mutation_targets", "mutation_edge_types"],
            Stage::Eval => &[],
        }
    }

    /// External input files this stage reads.
    fn inputs(self, config: &PipelineConfig) -> Vec<PathBuf> {
        match self {
            Stage::BuildGraph => vec![config.encoding_table.clone()],
            Stage::PretrainLm | Stage::Train => vec![config.train_corpus.clone()],
            Stage::Benchmark => vec![config.train_corpus.clone()],
            Stage::Mutate => vec![config.test_corpus.clone()],
            Stage::Walk | Stage::TrainVfge | Stage::Eval => vec![],
        }
    }

    /// The seed this stage derives from the config seed, recorded in
    /// the manifest. Stages without randomness reuse the base seed.
    fn seed(self, config: &PipelineConfig) -> u64 {
        let offset = match self {
            Stage::BuildGraph => 0,
            Stage::Walk => 1,
            Stage::TrainVfge => 2,
            Stage::PretrainLm => 4,
            Stage::Train => 6,
            Stage::Mutate => 8,
            Stage::Eval => 0,
            Stage::Benchmark => 10,
        };
        config.seed.wrapping_add(offset)
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Stage {
    type Err = String;

    fn from_str(s: &str) -> Result<Stage, String> {
        Stage::ALL
            .into_iter()
            .find(|stage| stage.name() == s)
            .ok_or_else(|| format!("unknown stage '{s}' (expected one of: {})", stage_names()))
    }
}

fn stage_names() -> String {
    Stage::ALL.map(|s| s.name()).join(", ")
}

/// Whether a stage executed or was already current.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StageStatus {
    Ran,
    UpToDate,
}

/// What a stage run produced: its status and `key=value` report pairs.
#[derive(Debug, Clone)]
pub struct StageOutcome {
    pub stage: Stage,
    pub status: StageStatus,
    pub report: Vec<(String, String)>,
}

impl StageOutcome {
    /// Aligned text for terminals.
    pub fn aligned(&self) -> String {
        let width = self.report.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
        let mut out = format!(
            "[{}] {}\n",
            self.stage,
            match self.status {
                StageStatus::Ran => "completed",
                StageStatus::UpToDate => "up to date (skipped; use --force to re-run)",
            }
        );
        for (k, v) in &self.report {
            out.push_str(&format!("  {k:<width$}  {v}\n"));
        }
        out
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

fn file_sha256(path: &Path) -> Result<String, PipelineError> {
    let bytes = std::fs::read(path).map_err(|e| io_err(path, e))?;
    Ok(sha256_hex(&bytes))
}

/// Sorted `key=value` manifest over stage hashes, seeds and artifact
/// hashes. Contains no absolute paths, so two runs over the same inputs
/// in different directories produce identical manifests.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Manifest {
    entries: BTreeMap<String, String>,
}

impl Manifest {
    pub fn load(dir: &Path) -> Result<Manifest, PipelineError> {
        let path = dir.join(MANIFEST_FILE);
        if !path.exists() {
            return Ok(Manifest::default());
        }
        let text = std::fs::read_to_string(&path).map_err(|e| io_err(&path, e))?;
        let mut entries = BTreeMap::new();
        for line in text.lines() {
            if let Some((k, v)) = line.split_once('=') {
                entries.insert(k.to_string(), v.to_string());
            }
        }
        Ok(Manifest { entries })
    }

    pub fn save(&self, dir: &Path) -> Result<(), PipelineError> {
        let path = dir.join(MANIFEST_FILE);
        let mut text = String::new();
        for (k, v) in &self.entries {
            text.push_str(k);
            text.push('=');
            text.push_str(v);
            text.push('\n');
        }
        std::fs::write(&path, text).map_err(|e| io_err(&path, e))
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    fn record_stage(
        &mut self,
        stage: Stage,
        hash: &str,
        seed: u64,
        artifacts: &[(String, String)],
    ) {
        let prefix = format!("{stage}.");
        self.entries.retain(|k, _| !k.starts_with(&prefix));
        self.entries.insert(format!("{stage}.config"), hash.to_string());
        self.entries.insert(format!("{stage}.seed"), seed.to_string());
        for (file, sha) in artifacts {
            self.entries.insert(format!("{stage}.artifact.{file}"), sha.clone());
        }
    }
}

/// Exclusive-creation lock file, removed when the guard drops.
struct Lock {
    path: PathBuf,
}

impl Lock {
    fn acquire(dir: &Path) -> Result<Lock, PipelineError> {
        let path = dir.join(LOCK_FILE);
        match std::fs::OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                let _ = writeln!(f, "pid={}", std::process::id());
                Ok(Lock { path })
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                Err(PipelineError::Locked(path.display().to_string()))
            }
            Err(e) => Err(io_err(&path, e)),
        }
    }
}

impl Drop for Lock {
    fn drop(&mut self) {
        let _ = std::fs::remove_file(&self.path);
    }
}

fn reports_dir(config: &PipelineConfig) -> PathBuf {
    config.artifacts_dir.join("reports")
}

fn report_path(config: &PipelineConfig, stage: Stage) -> PathBuf {
    reports_dir(config).join(format!("{stage}.txt"))
}

fn write_report(
    config: &PipelineConfig,
    stage: Stage,
    report: &[(String, String)],
) -> Result<(), PipelineError> {
    let path = report_path(config, stage);
    let mut text = String::new();
    for (k, v) in report {
        text.push_str(&format!("{k}={v}\n"));
    }
    std::fs::write(&path, text).map_err(|e| io_err(&path, e))
}

fn read_report(config: &PipelineConfig, stage: Stage) -> Vec<(String, String)> {
    let path = report_path(config, stage);
    match std::fs::read_to_string(path) {
        Ok(text) => text
            .lines()
            .filter_map(|l| l.split_once('='))
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect(),
        Err(_) => Vec::new(),
    }
}

/// Hash over everything that determines this stage's output: its
/// relevant settings, the contents of its external inputs, and the
/// hashes of the upstream artifacts it consumes.
fn stage_hash(stage: Stage, config: &PipelineConfig) -> Result<String, PipelineError> {
    let settings = config.canonical_settings();
    let mut hasher = Sha256::new();
    for key in ["seed", "d"].iter().chain(stage.settings_keys()) {
        let value = settings.get(key).expect("settings keys are canonical");
        hasher.update(format!("{key}={value}\n"));
    }
    for input in stage.inputs(config) {
        if !input.exists() {
            return Err(PipelineError::Config(format!(
                "input file '{}' does not exist",
                input.display()
            )));
        }
        hasher.update(format!("input={}\n", file_sha256(&input)?));
    }
    for (file, _) in stage.dependencies() {
        let path = config.artifacts_dir.join(file);
        if path.exists() {
            hasher.update(format!("dep:{file}={}\n", file_sha256(&path)?));
        }
    }
    let digest = hasher.finalize();
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}

fn check_dependencies(stage: Stage, config: &PipelineConfig) -> Result<(), PipelineError> {
    for &(file, producer) in stage.dependencies() {
        if !config.artifacts_dir.join(file).exists() {
            return Err(PipelineError::MissingDependency { stage: producer });
        }
    }
    Ok(())
}

fn stage_is_current(
    stage: Stage,
    config: &PipelineConfig,
    manifest: &Manifest,
    hash: &str,
) -> Result<bool, PipelineError> {
    if manifest.get(&format!("{stage}.config")) != Some(hash) {
        return Ok(false);
    }
    for file in stage.outputs() {
        let path = config.artifacts_dir.join(file);
        if !path.exists() {
            return Ok(false);
        }
        if manifest.get(&format!("{stage}.artifact.{file}")) != Some(file_sha256(&path)?.as_str())
        {
            return Ok(false);
        }
    }
    Ok(report_path(config, stage).exists())
}

/// Runs one stage: checks dependencies, skips if current (unless
/// `force`), executes, persists artifacts, updates the manifest, and
/// writes the stage's `key=value` report file.
pub fn run_stage(
    stage: Stage,
    config: &PipelineConfig,
    force: bool,
) -> Result<StageOutcome, PipelineError> {
    std::fs::create_dir_all(reports_dir(config))
        .map_err(|e| io_err(&reports_dir(config), e))?;
    let _lock = Lock::acquire(&config.artifacts_dir)?;

    check_dependencies(stage, config)?;
    let hash = stage_hash(stage, config)?;
    let mut manifest = Manifest::load(&config.artifacts_dir)?;
    if !force && stage_is_current(stage, config, &manifest, &hash)? {
        return Ok(StageOutcome {
            stage,
            status: StageStatus::UpToDate,
            report: read_report(config, stage),
        });
    }

    let report = execute(stage, config)?;

    let mut artifact_hashes = Vec::new();
    for file in stage.outputs() {
        let path = config.artifacts_dir.join(file);
        artifact_hashes.push((file.to_string(), file_sha256(&path)?));
    }
    manifest.record_stage(stage, &hash, stage.seed(config), &artifact_hashes);
    manifest.save(&config.artifacts_dir)?;
    write_report(config, stage, &report)?;
    Ok(StageOutcome { stage, status: StageStatus::Ran, report })
}

/// Runs every stage in order (`benchmark` last), returning each outcome.
pub fn run_all(
    config: &PipelineConfig,
    force: bool,
) -> Result<Vec<StageOutcome>, PipelineError> {
    Stage::ALL.into_iter().map(|stage| run_stage(stage, config, force)).collect()
}

fn execute(stage: Stage, config: &PipelineConfig) -> Result<Vec<(String, String)>, PipelineError> {
    match stage {
        Stage::BuildGraph => execute_build_graph(config),
        Stage::Walk => execute_walk(config),
        Stage::TrainVfge => execute_train_vfge(config),
        Stage::PretrainLm => execute_pretrain_lm(config),
        Stage::Train => execute_train(config),
        Stage::Mutate => execute_mutate(config),
        Stage::Eval => execute_eval(config),
        Stage::Benchmark => {
            let report = run_benchmark(config)?;
            Ok(report.key_values())
        }
    }
}

fn execute_build_graph(config: &PipelineConfig) -> Result<Vec<(String, String)>, PipelineError> {
    let records = load_encoding_table(&config.encoding_table)?;
    let graph = build_graph(&records, config.thresholds(), config.pinyin_weights()?)?;
    save_graph(&graph, config.artifacts_dir.join(GRAPH_FILE))?;
    Ok(graph_stats(&graph).key_values())
}

fn execute_walk(config: &PipelineConfig) -> Result<Vec<(String, String)>, PipelineError> {
    let graph = load_graph(config.artifacts_dir.join(GRAPH_FILE))?;
    let corpus = generate_walks(
        &graph,
        config.walks_per_vertex,
        config.walk_length,
        Stage::Walk.seed(config),
    )?;
    save_walks(&corpus, config.artifacts_dir.join(WALKS_FILE))?;
    Ok(vec![
        ("walks".into(), corpus.walks.len().to_string()),
        ("walk_length".into(), corpus.walk_length.to_string()),
        ("tokens".into(), corpus.token_count().to_string()),
        ("vertices".into(), corpus.vertex_count.to_string()),
    ])
}

fn execute_train_vfge(config: &PipelineConfig) -> Result<Vec<(String, String)>, PipelineError> {
    let corpus = load_walks(config.artifacts_dir.join(WALKS_FILE))?;
    let state = gibbs_assign(
        &corpus,
        config.families,
        config.effective_alpha(),
        config.eta,
        config.gibbs_sweeps,
        Stage::TrainVfge.seed(config),
    )?;
    save_family_state(&state, config.artifacts_dir.join(FAMILY_FILE))?;
    let embeddings = train_pair_skipgram(
        &corpus,
        &state,
        SkipgramOptions {
            d: config.d,
            window: config.pair_window,
            negatives: config.pair_negatives,
            lr: config.pair_learning_rate,
            epochs: config.pair_epochs,
        },
        Stage::TrainVfge.seed(config).wrapping_add(1),
    )?;
    save_embeddings(&embeddings, config.artifacts_dir.join(PAIR_FILE))?;
    let occupied = state.n_k.iter().filter(|&&n| n > 0).count();
    Ok(vec![
        ("families".into(), state.k.to_string()),
        ("occupied_families".into(), occupied.to_string()),
        ("sweeps".into(), config.gibbs_sweeps.to_string()),
        ("embedding_dim".into(), config.d.to_string()),
    ])
}

fn execute_pretrain_lm(config: &PipelineConfig) -> Result<Vec<(String, String)>, PipelineError> {
    let graph = load_graph(config.artifacts_dir.join(GRAPH_FILE))?;
    let state = load_family_state(config.artifacts_dir.join(FAMILY_FILE))?;
    let pair = load_embeddings(config.artifacts_dir.join(PAIR_FILE))?;
    let dataset = load_dataset(&config.train_corpus)?;
    let texts: Vec<String> = dataset.iter().map(|(t, _)| t.clone()).collect();

    let seed = Stage::PretrainLm.seed(config);
    let text_emb = train_text_skipgram(
        &texts,
        &TextSkipgramOptions {
            d: config.d,
            window: config.text_window,
            negatives: config.text_negatives,
            learning_rate: config.text_learning_rate,
            epochs: config.text_epochs,
        },
        seed,
    )?;
    save_text_embeddings(&text_emb, &config.artifacts_dir.join(TEXT_EMB_FILE))?;

    let integrated = integrate_all(&pair, &state)?;
    let mut vocab: Vec<char> = graph.chars().to_vec();
    vocab.sort_unstable();
    let graph_rows: Vec<Vec<f64>> = vocab
        .iter()
        .map(|&c| integrated[graph.index_of(c).expect("vocab comes from the graph") as usize].clone())
        .collect();
    let text_rows: Vec<Vec<f64>> = vocab
        .iter()
        .map(|&c| {
            let mut row = vec![0.0; config.d];
            text_emb.embed(c, &mut row);
            row
        })
        .collect();
    let mut model = SslmModel::new(
        &SslmOptions { d: config.d, layers: config.layers },
        vocab,
        graph_rows,
        text_rows,
        seed.wrapping_add(1),
    )?;
    let report = model.pretrain_bilm(
        &texts,
        &PretrainOptions {
            epochs: config.lm_epochs,
            learning_rate: config.lm_learning_rate,
            negatives: config.lm_negatives,
            dropout: config.dropout,
            seed: seed.wrapping_add(2),
        },
    )?;
    save_model(&model, &config.artifacts_dir.join(PRETRAINED_FILE))?;
    Ok(vec![
        ("vocab".into(), model.vocab().len().to_string()),
        ("initial_loss".into(), format!("{:.6}", report.initial_loss)),
        ("final_loss".into(), format!("{:.6}", report.final_loss)),
        ("held_out_sequences".into(), report.held_out_sequences.to_string()),
    ])
}

fn execute_train(config: &PipelineConfig) -> Result<Vec<(String, String)>, PipelineError> {
    let mut model = load_model(&config.artifacts_dir.join(PRETRAINED_FILE))?;
    let dataset = load_dataset(&config.train_corpus)?;
    let seed = Stage::Train.seed(config);
    let mut classifier = ConvClassifier::init(
        model.ss_dim(),
        &ConvOptions { widths: config.conv_widths.clone(), filters: config.conv_filters },
        seed,
    )?;
    let report = train_detector(
        &mut model,
        &mut classifier,
        &dataset,
        &TrainOptions {
            batch: config.batch,
            epochs: config.train_epochs,
            learning_rate: config.train_learning_rate,
            dropout: config.dropout,
            seed: seed.wrapping_add(1),
        },
        config.freeze_embedder,
    )?;
    save_model(&model, &config.artifacts_dir.join(MODEL_FILE))?;
    save_classifier(&classifier, &config.artifacts_dir.join(CLASSIFIER_FILE))?;
    let mut out = vec![
        ("examples".into(), dataset.len().to_string()),
        ("epochs".into(), config.train_epochs.to_string()),
        ("freeze_embedder".into(), config.freeze_embedder.to_string()),
        ("single_class".into(), report.single_class.to_string()),
    ];
    if let (Some(first), Some(last)) = (report.epoch_losses.first(), report.epoch_losses.last()) {
        out.push(("first_epoch_loss".into(), format!("{first:.6}")));
        out.push(("final_epoch_loss".into(), format!("{last:.6}")));
    }
    Ok(out)
}

fn execute_mutate(config: &PipelineConfig) -> Result<Vec<(String, String)>, PipelineError> {
    let graph = load_graph(config.artifacts_dir.join(GRAPH_FILE))?;
    let dataset = load_dataset(&config.test_corpus)?;
    let spec = MutationSpec {
        rate: config.mutation_rate,
        targets: config.mutation_targets,
        edge_types: config.mutation_edge_types.clone(),
        seed: Stage::Mutate.seed(config),
    };
    let (mutated, report) = mutate_corpus(&dataset, &graph, &spec)?;
    save_dataset(&mutated, &config.artifacts_dir.join(MUTATED_FILE))?;
    let mut out = vec![("rate".into(), config.mutation_rate.to_string())];
    out.extend(report.key_values());
    Ok(out)
}

fn eval_report_pairs(report: &EvalReport) -> Vec<(String, String)> {
    vec![
        ("accuracy".into(), format!("{:.6}", report.accuracy)),
        ("precision".into(), format!("{:.6}", report.precision)),
        ("recall".into(), format!("{:.6}", report.recall)),
        ("f1".into(), format!("{:.6}", report.f1)),
        ("true_positives".into(), report.true_positives.to_string()),
        ("false_positives".into(), report.false_positives.to_string()),
        ("false_negatives".into(), report.false_negatives.to_string()),
        ("true_negatives".into(), report.true_negatives.to_string()),
    ]
}

fn execute_eval(config: &PipelineConfig) -> Result<Vec<(String, String)>, PipelineError> {
    let model = load_model(&config.artifacts_dir.join(MODEL_FILE))?;
    let classifier = load_classifier(&config.artifacts_dir.join(CLASSIFIER_FILE))?;
    let dataset = load_dataset(&config.artifacts_dir.join(MUTATED_FILE))?;
    let report = crate::classifier::evaluate_detector(&model, &classifier, &dataset)?;
    Ok(eval_report_pairs(&report))
}

/// Read-only nearest-character query over the trained variation-family
/// embeddings (no lock, no manifest entry).
pub fn nearest_query(
    config: &PipelineConfig,
    c: char,
    k: usize,
) -> Result<Vec<(char, f64)>, PipelineError> {
    for (file, producer) in [(GRAPH_FILE, Stage::BuildGraph), (FAMILY_FILE, Stage::TrainVfge),
        (PAIR_FILE, Stage::TrainVfge)]
    {
        if !config.artifacts_dir.join(file).exists() {
            return Err(PipelineError::MissingDependency { stage: producer });
        }
    }
    let graph = load_graph(config.artifacts_dir.join(GRAPH_FILE))?;
    let state = load_family_state(config.artifacts_dir.join(FAMILY_FILE))?;
    let pair = load_embeddings(config.artifacts_dir.join(PAIR_FILE))?;
    Ok(nearest_chars(&pair, &state, &graph, c, k)?)
}

#[cfg(test)]
mod tests;
