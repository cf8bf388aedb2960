//! Flat `key = value` pipeline configuration.
//!
//! Every hyperparameter of every stage lives here under the same name
//! the stage's module uses, with the published defaults filled in.
//! Files are plain text (`#` comments, blank lines allowed); overrides
//! are `key=value` strings applied after the file, and relative paths
//! are resolved against the config file's directory so a generated
//! data directory stays relocatable.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::encoding::PinyinWeights;
use crate::graph::{EdgeType, Thresholds};

use super::PipelineError;

/// All pipeline settings. Paths are absolute after loading.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    // paths
    pub encoding_table: PathBuf,
    pub train_corpus: PathBuf,
    pub test_corpus: PathBuf,
    pub artifacts_dir: PathBuf,
    // shared
    pub seed: u64,
    pub d: usize,
    // graph
    pub pinyin_threshold: f64,
    pub stroke_threshold: f64,
    pub zhengma_threshold: f64,
    pub pinyin_initial_weight: f64,
    pub pinyin_rhyme_weight: f64,
    pub pinyin_tone_weight: f64,
    // walks
    pub walks_per_vertex: usize,
    pub walk_length: usize,
    // variation families
    pub families: usize,
    /// `None` means automatic `50 / families`.
    pub alpha: Option<f64>,
    pub eta: f64,
    pub gibbs_sweeps: usize,
    // character-family pair skip-gram
    pub pair_window: usize,
    pub pair_negatives: usize,
    pub pair_learning_rate: f64,
    pub pair_epochs: usize,
    // textual skip-gram
    pub text_window: usize,
    pub text_negatives: usize,
    pub text_learning_rate: f64,
    pub text_epochs: usize,
    // bidirectional language model
    pub layers: usize,
    pub lm_epochs: usize,
    pub lm_learning_rate: f64,
    pub lm_negatives: usize,
    pub dropout: f64,
    // classifier training
    pub conv_widths: Vec<usize>,
    pub conv_filters: usize,
    pub batch: usize,
    pub train_epochs: usize,
    pub train_learning_rate: f64,
    pub freeze_embedder: bool,
    // mutation
    pub mutation_rate: f64,
    pub mutation_targets: usize,
    pub mutation_edge_types: Vec<EdgeType>,
}

impl Default for PipelineConfig {
    fn default() -> PipelineConfig {
        PipelineConfig {
            encoding_table: PathBuf::new(),
            train_corpus: PathBuf::new(),
            test_corpus: PathBuf::new(),
            artifacts_dir: PathBuf::new(),
            seed: 42,
            d: 128,
            pinyin_threshold: 0.8,
            stroke_threshold: 0.6,
            zhengma_threshold: 0.5,
            pinyin_initial_weight: 0.4,
            pinyin_rhyme_weight: 0.4,
            pinyin_tone_weight: 0.2,
            walks_per_vertex: 10,
            walk_length: 80,
            families: 500,
            alpha: None,
            eta: 0.01,
            gibbs_sweeps: 200,
            pair_window: 5,
            pair_negatives: 5,
            pair_learning_rate: 0.025,
            pair_epochs: 5,
            text_window: 5,
            text_negatives: 5,
            text_learning_rate: 0.025,
            text_epochs: 5,
            layers: 2,
            lm_epochs: 5,
            lm_learning_rate: 0.05,
            lm_negatives: 10,
            dropout: 0.1,
            conv_widths: vec![3, 4, 5],
            conv_filters: 128,
            batch: 64,
            train_epochs: 5,
            train_learning_rate: 0.05,
            freeze_embedder: false,
            mutation_rate: 0.5,
            mutation_targets: 20,
            mutation_edge_types: vec![EdgeType::Pinyin, EdgeType::Stroke, EdgeType::Zhengma],
        }
    }
}

fn err(msg: impl Into<String>) -> PipelineError {
    PipelineError::Config(msg.into())
}

impl PipelineConfig {
    /// Loads a config file, applies `overrides` (`key=value`), resolves
    /// relative paths against the file's directory, and validates.
    pub fn load(path: &Path, overrides: &[String]) -> Result<PipelineConfig, PipelineError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| err(format!("cannot read config '{}': {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        PipelineConfig::parse(&text, base, overrides)
    }

    /// Parses config text. Relative paths resolve against `base`.
    pub fn parse(
        text: &str,
        base: &Path,
        overrides: &[String],
    ) -> Result<PipelineConfig, PipelineError> {
        let mut config = PipelineConfig::default();
        let mut seen_paths = [false; 4];
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err(format!("config line {}: expected `key = value`", lineno + 1)))?;
            config
                .set(key.trim(), value.trim(), &mut seen_paths)
                .map_err(|e| err(format!("config line {}: {e}", lineno + 1)))?;
        }
        for (i, spec) in overrides.iter().enumerate() {
            let (key, value) = spec
                .split_once('=')
                .ok_or_else(|| err(format!("override {}: expected `key=value`", i + 1)))?;
            config
                .set(key.trim(), value.trim(), &mut seen_paths)
                .map_err(|e| err(format!("override '{spec}': {e}")))?;
        }
        let missing: Vec<&str> = ["encoding_table", "train_corpus", "test_corpus", "artifacts_dir"]
            .iter()
            .zip(seen_paths)
            .filter(|&(_, seen)| !seen)
            .map(|(&k, _)| k)
            .collect();
        if !missing.is_empty() {
            return Err(err(format!("missing required path keys: {}", missing.join(", "))));
        }
        for p in [
            &mut config.encoding_table,
            &mut config.train_corpus,
            &mut config.test_corpus,
            &mut config.artifacts_dir,
        ] {
            if p.is_relative() {
                *p = base.join(&p);
            }
        }
        config.validate()?;
        Ok(config)
    }

    fn set(&mut self, key: &str, value: &str, seen_paths: &mut [bool; 4]) -> Result<(), String> {
        fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, String>
        where
            T::Err: std::fmt::Display,
        {
            value.parse().map_err(|e| format!("bad value '{value}' for {key}: {e}"))
        }
        fn parse_list<T: std::str::FromStr>(key: &str, value: &str) -> Result<Vec<T>, String>
        where
            T::Err: std::fmt::Display,
        {
            value.split(',').map(|v| parse(key, v.trim())).collect()
        }
        match key {
            "encoding_table" => {
                self.encoding_table = PathBuf::from(value);
                seen_paths[0] = true;
            }
            "train_corpus" => {
                self.train_corpus = PathBuf::from(value);
                seen_paths[1] = true;
            }
            "test_corpus" => {
                self.test_corpus = PathBuf::from(value);
                seen_paths[2] = true;
            }
            "artifacts_dir" => {
                self.artifacts_dir = PathBuf::from(value);
                seen_paths[3] = true;
            }
            "seed" => self.seed = parse(key, value)?,
            "d" => self.d = parse(key, value)?,
            "pinyin_threshold" => self.pinyin_threshold = parse(key, value)?,
            "stroke_threshold" => self.stroke_threshold = parse(key, value)?,
            "zhengma_threshold" => self.zhengma_threshold = parse(key, value)?,
            "pinyin_initial_weight" => self.pinyin_initial_weight = parse(key, value)?,
            "pinyin_rhyme_weight" => self.pinyin_rhyme_weight = parse(key, value)?,
            "pinyin_tone_weight" => self.pinyin_tone_weight = parse(key, value)?,
            "walks_per_vertex" => self.walks_per_vertex = parse(key, value)?,
            "walk_length" => self.walk_length = parse(key, value)?,
            "families" => self.families = parse(key, value)?,
            "alpha" => {
                self.alpha = if value == "auto" { None } else { Some(parse(key, value)?) }
            }
            "eta" => self.eta = parse(key, value)?,
            "gibbs_sweeps" => self.gibbs_sweeps = parse(key, value)?,
            "pair_window" => self.pair_window = parse(key, value)?,
            "pair_negatives" => self.pair_negatives = parse(key, value)?,
            "pair_learning_rate" => self.pair_learning_rate = parse(key, value)?,
            "pair_epochs" => self.pair_epochs = parse(key, value)?,
            "text_window" => self.text_window = parse(key, value)?,
            "text_negatives" => self.text_negatives = parse(key, value)?,
            "text_learning_rate" => self.text_learning_rate = parse(key, value)?,
            "text_epochs" => self.text_epochs = parse(key, value)?,
            "layers" => self.layers = parse(key, value)?,
            "lm_epochs" => self.lm_epochs = parse(key, value)?,
            "lm_learning_rate" => self.lm_learning_rate = parse(key, value)?,
            "lm_negatives" => self.lm_negatives = parse(key, value)?,
            "dropout" => self.dropout = parse(key, value)?,
            "conv_widths" => self.conv_widths = parse_list(key, value)?,
            "conv_filters" => self.conv_filters = parse(key, value)?,
            "batch" => self.batch = parse(key, value)?,
            "train_epochs" => self.train_epochs = parse(key, value)?,
            "train_learning_rate" => self.train_learning_rate = parse(key, value)?,
            "freeze_embedder" => self.freeze_embedder = parse(key, value)?,
            "mutation_rate" => self.mutation_rate = parse(key, value)?,
            "mutation_targets" => self.mutation_targets = parse(key, value)?,
            "mutation_edge_types" => self.mutation_edge_types = parse_list(key, value)?,
            other => return Err(format!("unknown config key '{other}'")),
        }
        Ok(())
    }

    /// Effective Dirichlet document prior: explicit value or `50 / K`.
    pub fn effective_alpha(&self) -> f64 {
        self.alpha.unwrap_or(50.0 / self.families as f64)
    }

    pub fn thresholds(&self) -> Thresholds {
        Thresholds {
            pinyin: self.pinyin_threshold,
            stroke: self.stroke_threshold,
            zhengma: self.zhengma_threshold,
        }
    }

    pub fn pinyin_weights(&self) -> Result<PinyinWeights, PipelineError> {
        PinyinWeights::new(
            self.pinyin_initial_weight,
            self.pinyin_rhyme_weight,
            self.pinyin_tone_weight,
        )
        .map_err(|e| err(format!("pinyin weights: {e}")))
    }

    /// Checks every field against its stage's preconditions.
    pub fn validate(&self) -> Result<(), PipelineError> {
        self.thresholds().validate().map_err(|e| err(format!("thresholds: {e}")))?;
        self.pinyin_weights()?;
        let positive_counts = [
            ("d", self.d),
            ("walks_per_vertex", self.walks_per_vertex),
            ("walk_length", self.walk_length),
            ("families", self.families),
            ("pair_window", self.pair_window),
            ("pair_negatives", self.pair_negatives),
            ("text_window", self.text_window),
            ("text_negatives", self.text_negatives),
            ("layers", self.layers),
            ("lm_negatives", self.lm_negatives),
            ("conv_filters", self.conv_filters),
            ("batch", self.batch),
            ("mutation_targets", self.mutation_targets),
        ];
        for (name, v) in positive_counts {
            if v == 0 {
                return Err(err(format!("{name} must be at least 1")));
            }
        }
        let positive_rates = [
            ("pair_learning_rate", self.pair_learning_rate),
            ("text_learning_rate", self.text_learning_rate),
            ("lm_learning_rate", self.lm_learning_rate),
            ("train_learning_rate", self.train_learning_rate),
            ("eta", self.eta),
            ("alpha", self.effective_alpha()),
        ];
        for (name, v) in positive_rates {
            if !(v > 0.0 && v.is_finite()) {
                return Err(err(format!("{name} must be positive, got {v}")));
            }
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(err(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        if !(0.0..=1.0).contains(&self.mutation_rate) {
            return Err(err(format!("mutation_rate {} outside [0, 1]", self.mutation_rate)));
        }
        if self.conv_widths.is_empty() || self.conv_widths.contains(&0) {
            return Err(err("conv_widths must be a non-empty list of positive widths"));
        }
        if self.mutation_edge_types.is_empty() {
            return Err(err("mutation_edge_types must enable at least one edge type"));
        }
        Ok(())
    }

    /// All non-path keys with their current values, sorted by key. This
    /// is the canonical form hashed into stage manifests, so artifact
    /// identity does not depend on where the files live.
    pub fn canonical_settings(&self) -> BTreeMap<&'static str, String> {
        let mut m = BTreeMap::new();
        m.insert("seed", self.seed.to_string());
        m.insert("d", self.d.to_string());
        m.insert("pinyin_threshold", self.pinyin_threshold.to_string());
        m.insert("stroke_threshold", self.stroke_threshold.to_string());
        m.insert("zhengma_threshold", self.zhengma_threshold.to_string());
        m.insert("pinyin_initial_weight", self.pinyin_initial_weight.to_string());
        m.insert("pinyin_rhyme_weight", self.pinyin_rhyme_weight.to_string());
        m.insert("pinyin_tone_weight", self.pinyin_tone_weight.to_string());
        m.insert("walks_per_vertex", self.walks_per_vertex.to_string());
        m.insert("walk_length", self.walk_length.to_string());
        m.insert("families", self.families.to_string());
        m.insert(
            "alpha",
            self.alpha.map_or_else(|| "auto".to_string(), |a| a.to_string()),
        );
        m.insert("eta", self.eta.to_string());
        m.insert("gibbs_sweeps", self.gibbs_sweeps.to_string());
        m.insert("pair_window", self.pair_window.to_string());
        m.insert("pair_negatives", self.pair_negatives.to_string());
        m.insert("pair_learning_rate", self.pair_learning_rate.to_string());
        m.insert("pair_epochs", self.pair_epochs.to_string());
        m.insert("text_window", self.text_window.to_string());
        m.insert("text_negatives", self.text_negatives.to_string());
        m.insert("text_learning_rate", self.text_learning_rate.to_string());
        m.insert("text_epochs", self.text_epochs.to_string());
        m.insert("layers", self.layers.to_string());
        m.insert("lm_epochs", self.lm_epochs.to_string());
        m.insert("lm_learning_rate", self.lm_learning_rate.to_string());
        m.insert("lm_negatives", self.lm_negatives.to_string());
        m.insert("dropout", self.dropout.to_string());
        m.insert(
            "conv_widths",
            self.conv_widths.iter().map(usize::to_string).collect::<Vec<_>>().join(","),
        );
        m.insert("conv_filters", self.conv_filters.to_string());
        m.insert("batch", self.batch.to_string());
        m.insert("train_epochs", self.train_epochs.to_string());
        m.insert("train_learning_rate", self.train_learning_rate.to_string());
        m.insert("freeze_embedder", self.freeze_embedder.to_string());
        m.insert("mutation_rate", self.mutation_rate.to_string());
        m.insert("mutation_targets", self.mutation_targets.to_string());
        m.insert(
            "mutation_edge_types",
            self.mutation_edge_types.iter().map(|t| t.to_string()).collect::<Vec<_>>().join(","),
        );
        m
    }

    /// Renders a complete config file with the given path values and
    /// this config's settings, one key per line.
    pub fn to_file_text(&self, paths: &ConfigPaths) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# pipeline configuration");
        let _ = writeln!(out, "encoding_table = {}", paths.encoding_table);
        let _ = writeln!(out, "train_corpus = {}", paths.train_corpus);
        let _ = writeln!(out, "test_corpus = {}", paths.test_corpus);
        let _ = writeln!(out, "artifacts_dir = {}", paths.artifacts_dir);
        for (key, value) in self.canonical_settings() {
            let _ = writeln!(out, "{key} = {value}");
        }
        out
    }
}

/// Path values (possibly relative) for rendering a config file.
#[derive(Debug, Clone)]
pub struct ConfigPaths {
    pub encoding_table: String,
    pub train_corpus: String,
    pub test_corpus: String,
    pub artifacts_dir: String,
}
