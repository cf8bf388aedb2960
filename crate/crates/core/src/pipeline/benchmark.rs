//! Four-way comparison under the variations-only-in-test protocol.
//!
//! All variants share the same clean training corpus, the same mutated
//! test corpus, and seeds derived from the config seed:
//!
//! * `SS_Original` — the full detector: gated fusion of graph and text
//!   embeddings through the bidirectional language model, fine-tuned
//!   end-to-end with the convolutional classifier.
//! * `SS_Graph`   — family-enhanced graph embeddings only (no gate, no
//!   language model), classifier trained on the static sequences.
//! * `SS_Naive`   — plain concatenation of the graph embedding and the
//!   textual skip-gram embedding, classifier on top.
//! * `Skipgram`   — the textual skip-gram embeddings alone.

use std::fmt;

use crate::classifier::{
    evaluate, evaluate_detector, load_dataset, train_classifier, train_detector, ConvClassifier,
    ConvOptions, Label, TrainOptions,
};
use crate::graph::VariationGraph;
use crate::sslm::{load_model, load_text_embeddings, TextEmbeddings};
use crate::vfge::{integrate_all, load_embeddings, load_family_state};

use super::config::PipelineConfig;
use super::{
    load_graph, PipelineError, Stage, FAMILY_FILE, GRAPH_FILE, MUTATED_FILE, PAIR_FILE,
    PRETRAINED_FILE, TEXT_EMB_FILE, WALKS_FILE,
};

/// One variant's test-set metrics.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkRow {
    pub name: &'static str,
    pub accuracy: f64,
    pub f1: f64,
}

/// The four-variant report.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkReport {
    pub rows: Vec<BenchmarkRow>,
}

/// Published full-scale results for the complete model on the two
/// proprietary corpora it was reported on. Shown as context only: they
/// came from different (undisclosed) data and dictionaries and are not
/// reproducible from this repository.
pub const PUBLISHED_REFERENCE: [(&str, f64, f64); 2] =
    [("SMS corpus", 0.851, 0.832), ("Review corpus", 0.854, 0.822)];

impl BenchmarkReport {
    pub fn get(&self, name: &str) -> Option<&BenchmarkRow> {
        self.rows.iter().find(|r| r.name == name)
    }

    pub fn key_values(&self) -> Vec<(String, String)> {
        let mut out = Vec::new();
        for row in &self.rows {
            let key = row.name.to_lowercase();
            out.push((format!("{key}_accuracy"), format!("{:.6}", row.accuracy)));
            out.push((format!("{key}_f1"), format!("{:.6}", row.f1)));
        }
        out
    }

    /// The published full-scale numbers, formatted for display next to
    /// any desk-scale benchmark output.
    pub fn reference_block() -> String {
        let mut out = String::from(
            "published full-scale reference for the complete model (different, proprietary data; not reproducible here):\n",
        );
        for (corpus, acc, f1) in PUBLISHED_REFERENCE {
            out.push_str(&format!("  {corpus:<14} accuracy {acc:.3}  f1 {f1:.3}\n"));
        }
        out
    }
}

impl fmt::Display for BenchmarkReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<14} {:>9} {:>9}", "variant", "accuracy", "f1")?;
        for row in &self.rows {
            writeln!(f, "{:<14} {:>9.4} {:>9.4}", row.name, row.accuracy, row.f1)?;
        }
        writeln!(f)?;
        write!(f, "{}", BenchmarkReport::reference_block())
    }
}

fn embed_texts(
    dataset: &[(String, Label)],
    mut embed_char: impl FnMut(char) -> Vec<f64>,
) -> Vec<(Vec<Vec<f64>>, Label)> {
    dataset
        .iter()
        .map(|(text, label)| (text.chars().map(&mut embed_char).collect(), *label))
        .collect()
}

fn static_variant(
    name: &'static str,
    dim: usize,
    train: &[(Vec<Vec<f64>>, Label)],
    test: &[(Vec<Vec<f64>>, Label)],
    config: &PipelineConfig,
    seed: u64,
) -> Result<BenchmarkRow, PipelineError> {
    let mut clf = ConvClassifier::init(
        dim,
        &ConvOptions { widths: config.conv_widths.clone(), filters: config.conv_filters },
        seed,
    )?;
    train_classifier(
        &mut clf,
        train,
        &TrainOptions {
            batch: config.batch,
            epochs: config.train_epochs,
            learning_rate: config.train_learning_rate,
            dropout: config.dropout,
            seed: seed.wrapping_add(1),
        },
    )?;
    let eval = evaluate(&clf, test)?;
    Ok(BenchmarkRow { name, accuracy: eval.accuracy, f1: eval.f1 })
}

/// Per-character embedding tables shared by the static variants.
struct StaticTables {
    graph: VariationGraph,
    integrated: Vec<Vec<f64>>,
    text: TextEmbeddings,
    d: usize,
}

impl StaticTables {
    fn graph_vec(&self, c: char) -> Vec<f64> {
        match self.graph.index_of(c) {
            Some(v) => self.integrated[v as usize].clone(),
            None => vec![0.0; 2 * self.d],
        }
    }

    fn text_vec(&self, c: char) -> Vec<f64> {
        let mut row = vec![0.0; self.d];
        self.text.embed(c, &mut row);
        row
    }

    fn naive_vec(&self, c: char) -> Vec<f64> {
        let mut v = self.graph_vec(c);
        v.extend(self.text_vec(c));
        v
    }
}

/// Trains and evaluates the four variants on the shared artifacts:
/// clean training corpus, mutated test corpus, config-derived seeds.
pub fn run_benchmark(config: &PipelineConfig) -> Result<BenchmarkReport, PipelineError> {
    for (file, producer) in [
        (GRAPH_FILE, Stage::BuildGraph),
        (WALKS_FILE, Stage::Walk),
        (FAMILY_FILE, Stage::TrainVfge),
        (PAIR_FILE, Stage::TrainVfge),
        (TEXT_EMB_FILE, Stage::PretrainLm),
        (PRETRAINED_FILE, Stage::PretrainLm),
        (MUTATED_FILE, Stage::Mutate),
    ] {
        if !config.artifacts_dir.join(file).exists() {
            return Err(PipelineError::MissingDependency { stage: producer });
        }
    }
    let graph = load_graph(config.artifacts_dir.join(GRAPH_FILE))?;
    let state = load_family_state(config.artifacts_dir.join(FAMILY_FILE))?;
    let pair = load_embeddings(config.artifacts_dir.join(PAIR_FILE))?;
    let text_emb = load_text_embeddings(&config.artifacts_dir.join(TEXT_EMB_FILE))?;
    let train = load_dataset(&config.train_corpus)?;
    let test = load_dataset(&config.artifacts_dir.join(MUTATED_FILE))?;

    let tables = StaticTables {
        integrated: integrate_all(&pair, &state)?,
        graph,
        text: text_emb,
        d: config.d,
    };
    let seed = Stage::Benchmark.seed(config);

    // full model, fine-tuned end to end
    let mut model = load_model(&config.artifacts_dir.join(PRETRAINED_FILE))?;
    let mut clf = ConvClassifier::init(
        model.ss_dim(),
        &ConvOptions { widths: config.conv_widths.clone(), filters: config.conv_filters },
        seed,
    )?;
    train_detector(
        &mut model,
        &mut clf,
        &train,
        &TrainOptions {
            batch: config.batch,
            epochs: config.train_epochs,
            learning_rate: config.train_learning_rate,
            dropout: config.dropout,
            seed: seed.wrapping_add(1),
        },
        config.freeze_embedder,
    )?;
    let full = evaluate_detector(&model, &clf, &test)?;

    let mut rows = vec![BenchmarkRow {
        name: "SS_Original",
        accuracy: full.accuracy,
        f1: full.f1,
    }];

    let g_train = embed_texts(&train, |c| tables.graph_vec(c));
    let g_test = embed_texts(&test, |c| tables.graph_vec(c));
    rows.push(static_variant(
        "SS_Graph",
        2 * config.d,
        &g_train,
        &g_test,
        config,
        seed.wrapping_add(2),
    )?);

    let n_train = embed_texts(&train, |c| tables.naive_vec(c));
    let n_test = embed_texts(&test, |c| tables.naive_vec(c));
    rows.push(static_variant(
        "SS_Naive",
        3 * config.d,
        &n_train,
        &n_test,
        config,
        seed.wrapping_add(4),
    )?);

    let t_train = embed_texts(&train, |c| tables.text_vec(c));
    let t_test = embed_texts(&test, |c| tables.text_vec(c));
    rows.push(static_variant(
        "Skipgram",
        config.d,
        &t_train,
        &t_test,
        config,
        seed.wrapping_add(6),
    )?);

    Ok(BenchmarkReport { rows })
}
