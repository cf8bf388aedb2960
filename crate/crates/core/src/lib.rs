//! Variation-aware Chinese character embeddings and spam text detection.
//!
//! Spam filters that match on surface characters are easy to defeat by
//! swapping characters for near-homophones or near-homographs. This crate
//! counters that by modeling how characters vary: it builds a variation
//! graph from phonetic and glyph similarities, learns character and family
//! embeddings from hierarchical random walks over that graph, fuses them
//! with textual embeddings through a gated bidirectional language model,
//! and classifies the resulting sequence representations with a small
//! convolutional network.
//!
//! The [`pipeline`] module ties the stages together behind a flat key=value
//! configuration and versioned on-disk artifacts; the `ripple` binary is a
//! thin wrapper around it.

pub mod classifier;
pub mod encoding;
pub mod graph;
pub mod math;
pub(crate) mod persist;
pub mod pipeline;
pub mod sslm;
pub mod vfge;

pub use persist::PersistError;

pub use classifier::{
    classify, conv_responses, evaluate, evaluate_detector, load_classifier, load_dataset,
    parse_dataset, save_classifier, save_dataset, train_classifier, train_detector,
    ClassifierError, ClassifierGrads, ClfCache, ConvClassifier, ConvOptions, EvalReport, Label,
    TrainOptions, TrainReport,
};
pub use encoding::{
    load_encoding_table, parse_encoding_table, pinyin_similarity, record_pinyin_similarity,
    save_encoding_table, stroke_similarity, zhengma_similarity, CharacterRecord, EncodingError,
    PinyinWeights, Syllable,
};
pub use graph::{
    build_graph, graph_stats, load_graph, neighbors, save_graph, EdgeType, GraphError, GraphStats,
    Thresholds, VariationGraph,
};
pub use pipeline::{
    generate_synthetic, mutate_corpus, nearest_query, run_all, run_benchmark, run_stage,
    write_synthetic, BenchmarkReport, MutationSpec, PipelineConfig, PipelineError, Stage,
    StageOutcome, StageStatus, SynthOptions,
};
pub use sslm::{
    aggregate, load_model, load_text_embeddings, mix_weights, save_model, save_text_embeddings,
    train_text_skipgram, AggParams, GateParams, LmEval, PretrainOptions, PretrainReport,
    Projection, SslmError, SslmGrads, SslmModel, SslmOptions, TextEmbeddings, TextSkipgramOptions,
};
pub use vfge::{
    family_posterior, generate_walks, gibbs_assign, integrate, nearest, train_pair_skipgram,
    FamilyState, PairEmbeddings, SkipgramOptions, VfgeError, WalkCorpus,
};
