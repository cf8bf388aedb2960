//! Convolutional spam classifier over per-character embedding sequences.
//!
//! A single convolutional layer with several filter widths slides over
//! the sequence of per-character vectors; each filter's responses are
//! ReLU-activated and max-pooled over the valid positions only, and a
//! dense layer maps the pooled features to two logits (normal, spam).
//! Sequences shorter than the widest filter are padded with zero
//! vectors up to that width; longer sequences are never padded, so a
//! suffix of explicit zeros is the only padding that can ever occur.
//!
//! Two training paths are provided: [`train_classifier`] over fixed
//! embedding sequences, and [`train_detector`], which embeds text with a
//! sequence model and by default fine-tunes that model end-to-end
//! through the classifier loss (a freeze flag restricts training to the
//! classifier for embedding-only probing).

use std::fmt;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::math::{add_scaled, dot, softmax_in_place};
use crate::persist::{PersistError, Reader, Writer};
use crate::sslm::{SslmError, SslmGrads, SslmModel};

const MAGIC: &str = "RPLC";
const VERSION: u32 = 1;

/// Errors from classification, training, and dataset handling.
#[derive(Debug, Error)]
pub enum ClassifierError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("cannot classify an empty sequence")]
    EmptySequence,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("dataset line {line}: {msg}")]
    InvalidDataset { line: usize, msg: String },
    #[error(transparent)]
    Embedder(#[from] SslmError),
    #[error(transparent)]
    Persist(#[from] PersistError),
}

/// Binary example label. `Normal` is index 0, `Spam` index 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Label {
    Normal,
    Spam,
}

impl Label {
    pub fn index(self) -> usize {
        match self {
            Label::Normal => 0,
            Label::Spam => 1,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Normal => "normal",
            Label::Spam => "spam",
        }
    }

    pub fn parse(s: &str) -> Option<Label> {
        match s {
            "normal" => Some(Label::Normal),
            "spam" => Some(Label::Spam),
            _ => None,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One group of equally wide convolution filters.
#[derive(Debug, Clone, PartialEq)]
pub struct WidthBank {
    pub width: usize,
    /// `[filter][offset][embed_dim]` weights.
    pub w: Vec<Vec<Vec<f64>>>,
    pub b: Vec<f64>,
}

/// Widths and filter count for a new classifier.
#[derive(Debug, Clone)]
pub struct ConvOptions {
    pub widths: Vec<usize>,
    pub filters: usize,
}

impl Default for ConvOptions {
    fn default() -> ConvOptions {
        ConvOptions { widths: vec![3, 4, 5], filters: 128 }
    }
}

/// The convolutional classifier.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvClassifier {
    embed_dim: usize,
    filters: usize,
    pub banks: Vec<WidthBank>,
    /// 2 × (banks × filters) dense weights.
    pub dense_w: Vec<Vec<f64>>,
    pub dense_b: Vec<f64>,
}

impl ConvClassifier {
    /// Uniform(-0.08, 0.08) weights, zero biases.
    pub fn init(
        embed_dim: usize,
        options: &ConvOptions,
        seed: u64,
    ) -> Result<ConvClassifier, ClassifierError> {
        if embed_dim == 0 || options.filters == 0 || options.widths.is_empty() {
            return Err(ClassifierError::InvalidParameter(
                "embedding dimension, filter count and widths must be non-empty".into(),
            ));
        }
        if options.widths.contains(&0) {
            return Err(ClassifierError::InvalidParameter("filter widths must be positive".into()));
        }
        let mut widths = options.widths.clone();
        widths.sort_unstable();
        widths.dedup();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut uniform = |n: usize| -> Vec<f64> {
            (0..n).map(|_| rng.random_range(-0.08..0.08)).collect()
        };
        let banks = widths
            .iter()
            .map(|&width| WidthBank {
                width,
                w: (0..options.filters)
                    .map(|_| (0..width).map(|_| uniform(embed_dim)).collect())
                    .collect(),
                b: vec![0.0; options.filters],
            })
            .collect::<Vec<_>>();
        let feature_len = widths.len() * options.filters;
        let dense_w = (0..2).map(|_| uniform(feature_len)).collect();
        Ok(ConvClassifier {
            embed_dim,
            filters: options.filters,
            banks,
            dense_w,
            dense_b: vec![0.0; 2],
        })
    }

    pub fn embed_dim(&self) -> usize {
        self.embed_dim
    }

    pub fn filters(&self) -> usize {
        self.filters
    }

    pub fn max_width(&self) -> usize {
        self.banks.iter().map(|b| b.width).max().unwrap_or(0)
    }

    /// Pooled feature length (banks × filters).
    pub fn feature_len(&self) -> usize {
        self.banks.len() * self.filters
    }

    /// Visits every parameter in a fixed order: per bank, per filter,
    /// weight rows then bias; then dense rows and dense bias.
    pub fn visit_params(&mut self, mut f: impl FnMut(&mut f64)) {
        for bank in &mut self.banks {
            for (filter, b) in bank.w.iter_mut().zip(bank.b.iter_mut()) {
                for row in filter {
                    row.iter_mut().for_each(&mut f);
                }
                f(b);
            }
        }
        for row in &mut self.dense_w {
            row.iter_mut().for_each(&mut f);
        }
        self.dense_b.iter_mut().for_each(&mut f);
    }
}

/// Gradients with the same shapes as the classifier parameters.
#[derive(Debug, Clone)]
pub struct ClassifierGrads {
    pub banks: Vec<WidthBank>,
    pub dense_w: Vec<Vec<f64>>,
    pub dense_b: Vec<f64>,
}

impl ClassifierGrads {
    pub fn zeros(model: &ConvClassifier) -> ClassifierGrads {
        ClassifierGrads {
            banks: model
                .banks
                .iter()
                .map(|bank| WidthBank {
                    width: bank.width,
                    w: vec![vec![vec![0.0; model.embed_dim]; bank.width]; model.filters],
                    b: vec![0.0; model.filters],
                })
                .collect(),
            dense_w: vec![vec![0.0; model.feature_len()]; 2],
            dense_b: vec![0.0; 2],
        }
    }

    pub fn clear(&mut self) {
        for bank in &mut self.banks {
            for filter in &mut bank.w {
                for row in filter {
                    row.fill(0.0);
                }
            }
            bank.b.fill(0.0);
        }
        for row in &mut self.dense_w {
            row.fill(0.0);
        }
        self.dense_b.fill(0.0);
    }

    /// Same order as [`ConvClassifier::visit_params`].
    pub fn visit_params(&mut self, mut f: impl FnMut(&mut f64)) {
        for bank in &mut self.banks {
            for (filter, b) in bank.w.iter_mut().zip(bank.b.iter_mut()) {
                for row in filter {
                    row.iter_mut().for_each(&mut f);
                }
                f(b);
            }
        }
        for row in &mut self.dense_w {
            row.iter_mut().for_each(&mut f);
        }
        self.dense_b.iter_mut().for_each(&mut f);
    }
}

impl ConvClassifier {
    /// SGD step: `param -= lr * grad`.
    pub fn apply_grads(&mut self, grads: &ClassifierGrads, lr: f64) {
        for (bank, gbank) in self.banks.iter_mut().zip(&grads.banks) {
            for (filter, gfilter) in bank.w.iter_mut().zip(&gbank.w) {
                for (row, grow) in filter.iter_mut().zip(gfilter) {
                    add_scaled(row, grow, -lr);
                }
            }
            add_scaled(&mut bank.b, &gbank.b, -lr);
        }
        for (row, grow) in self.dense_w.iter_mut().zip(&grads.dense_w) {
            add_scaled(row, grow, -lr);
        }
        add_scaled(&mut self.dense_b, &grads.dense_b, -lr);
    }
}

/// Forward records for one classified sequence.
#[derive(Debug, Clone)]
pub struct ClfCache {
    /// Input, padded with zero vectors up to the widest filter if the
    /// sequence was shorter.
    padded: Vec<Vec<f64>>,
    real_len: usize,
    /// Per bank, per filter: position of the maximal convolution
    /// response and its pre-activation value.
    arg: Vec<Vec<(usize, f64)>>,
    dropout: Option<Vec<f64>>,
    /// Post-ReLU, post-dropout features fed to the dense layer.
    features: Vec<f64>,
    pub probs: [f64; 2],
}

fn check_sequence(model: &ConvClassifier, seq: &[Vec<f64>]) -> Result<(), ClassifierError> {
    if seq.is_empty() {
        return Err(ClassifierError::EmptySequence);
    }
    if let Some(bad) = seq.iter().find(|v| v.len() != model.embed_dim) {
        return Err(ClassifierError::DimensionMismatch(format!(
            "expected {}-dim embeddings, got {}",
            model.embed_dim,
            bad.len()
        )));
    }
    Ok(())
}

/// Forward pass for one sequence, recording everything `backward`
/// needs. Pass `Some((rate, rng))` to apply inverted dropout to the
/// pooled features (training mode); `None` evaluates deterministically.
pub fn forward(
    model: &ConvClassifier,
    seq: &[Vec<f64>],
    dropout: Option<(f64, &mut ChaCha8Rng)>,
) -> Result<ClfCache, ClassifierError> {
    check_sequence(model, seq)?;
    let real_len = seq.len();
    let mut padded: Vec<Vec<f64>> = seq.to_vec();
    while padded.len() < model.max_width() {
        padded.push(vec![0.0; model.embed_dim]);
    }
    let n = padded.len();

    let mut arg = Vec::with_capacity(model.banks.len());
    let mut pooled = Vec::with_capacity(model.feature_len());
    for bank in &model.banks {
        let mut bank_arg = Vec::with_capacity(model.filters);
        for (filter, &bias) in bank.w.iter().zip(&bank.b) {
            let mut best = f64::NEG_INFINITY;
            let mut best_t = 0;
            for t in 0..=n - bank.width {
                let mut acc = bias;
                for (i, row) in filter.iter().enumerate() {
                    acc += dot(row, &padded[t + i]);
                }
                if acc > best {
                    best = acc;
                    best_t = t;
                }
            }
            bank_arg.push((best_t, best));
            pooled.push(best.max(0.0));
        }
        arg.push(bank_arg);
    }

    let mask = match dropout {
        Some((rate, rng)) if rate > 0.0 => {
            if !(0.0..1.0).contains(&rate) {
                return Err(ClassifierError::InvalidParameter(format!(
                    "dropout rate {rate} outside [0, 1)"
                )));
            }
            let keep = 1.0 - rate;
            Some(
                (0..pooled.len())
                    .map(|_| if rng.random::<f64>() < rate { 0.0 } else { 1.0 / keep })
                    .collect::<Vec<f64>>(),
            )
        }
        _ => None,
    };
    let features: Vec<f64> = match &mask {
        Some(m) => pooled.iter().zip(m).map(|(&p, &f)| p * f).collect(),
        None => pooled,
    };

    let mut logits = [
        dot(&model.dense_w[0], &features) + model.dense_b[0],
        dot(&model.dense_w[1], &features) + model.dense_b[1],
    ];
    softmax_in_place(&mut logits);
    Ok(ClfCache { padded, real_len, arg, dropout: mask, features, probs: logits })
}

/// Pre-activation convolution responses per bank, filter, and valid
/// position, computed over the zero-padded sequence exactly as the
/// forward pass sees it. Useful for inspecting which filter fired
/// where, and for checking how close a sequence sits to a pooling or
/// rectifier boundary.
pub fn conv_responses(
    model: &ConvClassifier,
    seq: &[Vec<f64>],
) -> Result<Vec<Vec<Vec<f64>>>, ClassifierError> {
    check_sequence(model, seq)?;
    let mut padded: Vec<Vec<f64>> = seq.to_vec();
    while padded.len() < model.max_width() {
        padded.push(vec![0.0; model.embed_dim]);
    }
    let n = padded.len();
    Ok(model
        .banks
        .iter()
        .map(|bank| {
            bank.w
                .iter()
                .zip(&bank.b)
                .map(|(filter, &bias)| {
                    (0..=n - bank.width)
                        .map(|t| {
                            let mut acc = bias;
                            for (i, row) in filter.iter().enumerate() {
                                acc += dot(row, &padded[t + i]);
                            }
                            acc
                        })
                        .collect()
                })
                .collect()
        })
        .collect())
}

/// Raw logits for a sequence (evaluation mode).
pub fn logits(model: &ConvClassifier, seq: &[Vec<f64>]) -> Result<[f64; 2], ClassifierError> {
    let cache = forward(model, seq, None)?;
    Ok([
        dot(&model.dense_w[0], &cache.features) + model.dense_b[0],
        dot(&model.dense_w[1], &cache.features) + model.dense_b[1],
    ])
}

/// Predicted label and spam probability. Ties go to `Normal`.
pub fn classify(
    model: &ConvClassifier,
    seq: &[Vec<f64>],
) -> Result<(Label, f64), ClassifierError> {
    let cache = forward(model, seq, None)?;
    let label = if cache.probs[1] > cache.probs[0] { Label::Spam } else { Label::Normal };
    Ok((label, cache.probs[1]))
}

/// Cross-entropy of the cached prediction against `label`.
pub fn cached_loss(cache: &ClfCache, label: Label) -> f64 {
    -cache.probs[label.index()].max(1e-300).ln()
}

/// Backward pass for one example: accumulates parameter gradients and
/// returns the gradient with respect to the (unpadded) input sequence.
pub fn backward(
    model: &ConvClassifier,
    cache: &ClfCache,
    label: Label,
    grads: &mut ClassifierGrads,
) -> Vec<Vec<f64>> {
    let mut dlogits = cache.probs;
    dlogits[label.index()] -= 1.0;

    let mut dfeatures = vec![0.0; model.feature_len()];
    for (r, &dl) in dlogits.iter().enumerate() {
        add_scaled(&mut grads.dense_w[r], &cache.features, dl);
        grads.dense_b[r] += dl;
        add_scaled(&mut dfeatures, &model.dense_w[r], dl);
    }
    if let Some(mask) = &cache.dropout {
        for (g, &f) in dfeatures.iter_mut().zip(mask) {
            *g *= f;
        }
    }

    let mut dinput = vec![vec![0.0; model.embed_dim]; cache.padded.len()];
    let mut feat = 0;
    for (bank_idx, bank) in model.banks.iter().enumerate() {
        for f in 0..model.filters {
            let (t, pre) = cache.arg[bank_idx][f];
            let g = dfeatures[feat];
            feat += 1;
            // ReLU: no gradient when the best response was non-positive
            if g != 0.0 && pre > 0.0 {
                let gbank = &mut grads.banks[bank_idx];
                for (i, row) in bank.w[f].iter().enumerate() {
                    add_scaled(&mut gbank.w[f][i], &cache.padded[t + i], g);
                    add_scaled(&mut dinput[t + i], row, g);
                }
                gbank.b[f] += g;
            }
        }
    }
    dinput.truncate(cache.real_len);
    dinput
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

/// Accuracy, spam-class precision/recall/F1, and the confusion counts
/// they were computed from.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
    pub true_negatives: usize,
}

impl EvalReport {
    /// Metrics from confusion counts, spam as the positive class.
    /// Undefined ratios (empty denominators) are 0.
    pub fn from_confusion(tp: usize, fp: usize, fn_: usize, tn: usize) -> EvalReport {
        let total = tp + fp + fn_ + tn;
        let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
        let accuracy = ratio(tp + tn, total);
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        EvalReport {
            accuracy,
            precision,
            recall,
            f1,
            true_positives: tp,
            false_positives: fp,
            false_negatives: fn_,
            true_negatives: tn,
        }
    }

    pub fn total(&self) -> usize {
        self.true_positives + self.false_positives + self.false_negatives + self.true_negatives
    }

    /// `key=value` lines, one metric per line.
    pub fn key_value_lines(&self) -> String {
        format!(
            "accuracy={}\nprecision={}\nrecall={}\nf1={}\ntrue_positives={}\nfalse_positives={}\nfalse_negatives={}\ntrue_negatives={}\n",
            self.accuracy,
            self.precision,
            self.recall,
            self.f1,
            self.true_positives,
            self.false_positives,
            self.false_negatives,
            self.true_negatives,
        )
    }
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "accuracy        {:>8.4}", self.accuracy)?;
        writeln!(f, "precision(spam) {:>8.4}", self.precision)?;
        writeln!(f, "recall(spam)    {:>8.4}", self.recall)?;
        writeln!(f, "f1(spam)        {:>8.4}", self.f1)?;
        writeln!(
            f,
            "confusion       tp={} fp={} fn={} tn={}",
            self.true_positives, self.false_positives, self.false_negatives, self.true_negatives
        )
    }
}

/// Evaluates over fixed embedding sequences.
pub fn evaluate(
    model: &ConvClassifier,
    examples: &[(Vec<Vec<f64>>, Label)],
) -> Result<EvalReport, ClassifierError> {
    if examples.is_empty() {
        return Err(ClassifierError::EmptyDataset);
    }
    let (mut tp, mut fp, mut fn_, mut tn) = (0, 0, 0, 0);
    for (seq, label) in examples {
        let (pred, _) = classify(model, seq)?;
        match (pred, label) {
            (Label::Spam, Label::Spam) => tp += 1,
            (Label::Spam, Label::Normal) => fp += 1,
            (Label::Normal, Label::Spam) => fn_ += 1,
            (Label::Normal, Label::Normal) => tn += 1,
        }
    }
    Ok(EvalReport::from_confusion(tp, fp, fn_, tn))
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

/// Hyperparameters shared by both training paths.
#[derive(Debug, Clone)]
pub struct TrainOptions {
    pub batch: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub dropout: f64,
    pub seed: u64,
}

impl Default for TrainOptions {
    fn default() -> TrainOptions {
        TrainOptions { batch: 64, epochs: 5, learning_rate: 0.05, dropout: 0.1, seed: 0 }
    }
}

/// Loss curve and dataset diagnostics from a training run.
#[derive(Debug, Clone)]
pub struct TrainReport {
    /// Mean cross-entropy per epoch, measured during the epoch's
    /// forward passes (before each batch update).
    pub epoch_losses: Vec<f64>,
    /// True when the dataset contained a single label; training
    /// proceeds, but the model can only learn a prior.
    pub single_class: bool,
}

fn validate_train_options(options: &TrainOptions) -> Result<(), ClassifierError> {
    if options.batch == 0 {
        return Err(ClassifierError::InvalidParameter("batch size must be at least 1".into()));
    }
    if options.learning_rate <= 0.0 || options.learning_rate.is_nan() {
        return Err(ClassifierError::InvalidParameter("learning rate must be positive".into()));
    }
    if !(0.0..1.0).contains(&options.dropout) {
        return Err(ClassifierError::InvalidParameter(format!(
            "dropout rate {} outside [0, 1)",
            options.dropout
        )));
    }
    Ok(())
}

fn is_single_class<L: Iterator<Item = Label>>(mut labels: L) -> bool {
    match labels.next() {
        None => true,
        Some(first) => labels.all(|l| l == first),
    }
}

/// Trains the classifier alone over fixed embedding sequences with
/// mini-batch SGD (shuffled each epoch under the seed).
pub fn train_classifier(
    model: &mut ConvClassifier,
    examples: &[(Vec<Vec<f64>>, Label)],
    options: &TrainOptions,
) -> Result<TrainReport, ClassifierError> {
    if examples.is_empty() {
        return Err(ClassifierError::EmptyDataset);
    }
    validate_train_options(options)?;
    let single_class = is_single_class(examples.iter().map(|(_, l)| *l));
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut grads = ClassifierGrads::zeros(model);
    let mut epoch_losses = Vec::with_capacity(options.epochs);
    for _ in 0..options.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(options.batch) {
            for &i in batch {
                let (seq, label) = &examples[i];
                let dropout = if options.dropout > 0.0 {
                    Some((options.dropout, &mut rng))
                } else {
                    None
                };
                let cache = forward(model, seq, dropout)?;
                epoch_loss += cached_loss(&cache, *label);
                backward(model, &cache, *label, &mut grads);
            }
            model.apply_grads(&grads, options.learning_rate / batch.len() as f64);
            grads.clear();
        }
        epoch_losses.push(epoch_loss / examples.len() as f64);
    }
    Ok(TrainReport { epoch_losses, single_class })
}

/// Trains the classifier over text by embedding each example with the
/// sequence model. Unless `freeze_embedder` is set, the classifier loss
/// is propagated into the sequence model's trainable parameters
/// (projection, gate, recurrent stacks, aggregation), fine-tuning it
/// end-to-end.
pub fn train_detector(
    embedder: &mut SslmModel,
    model: &mut ConvClassifier,
    dataset: &[(String, Label)],
    options: &TrainOptions,
    freeze_embedder: bool,
) -> Result<TrainReport, ClassifierError> {
    if dataset.is_empty() {
        return Err(ClassifierError::EmptyDataset);
    }
    validate_train_options(options)?;
    let single_class = is_single_class(dataset.iter().map(|(_, l)| *l));
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut grads = ClassifierGrads::zeros(model);
    let mut emb_grads = SslmGrads::zeros(embedder.d(), embedder.layer_count());
    let mut epoch_losses = Vec::with_capacity(options.epochs);
    for _ in 0..options.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(options.batch) {
            for &i in batch {
                let (text, label) = &dataset[i];
                let emb_dropout = if options.dropout > 0.0 {
                    Some((options.dropout, &mut rng))
                } else {
                    None
                };
                let emb_cache = embedder.forward_cached(text, emb_dropout)?;
                let clf_dropout = if options.dropout > 0.0 {
                    Some((options.dropout, &mut rng))
                } else {
                    None
                };
                let cache = forward(model, &emb_cache.ss, clf_dropout)?;
                epoch_loss += cached_loss(&cache, *label);
                let d_ss = backward(model, &cache, *label, &mut grads);
                if !freeze_embedder {
                    embedder.backward_ss(&emb_cache, &d_ss, &mut emb_grads);
                }
            }
            let lr = options.learning_rate / batch.len() as f64;
            model.apply_grads(&grads, lr);
            grads.clear();
            if !freeze_embedder {
                embedder.apply_grads(&emb_grads, lr);
                emb_grads.clear();
            }
        }
        epoch_losses.push(epoch_loss / dataset.len() as f64);
    }
    Ok(TrainReport { epoch_losses, single_class })
}

/// Evaluates classifier + sequence model over text examples.
pub fn evaluate_detector(
    embedder: &SslmModel,
    model: &ConvClassifier,
    dataset: &[(String, Label)],
) -> Result<EvalReport, ClassifierError> {
    if dataset.is_empty() {
        return Err(ClassifierError::EmptyDataset);
    }
    let (mut tp, mut fp, mut fn_, mut tn) = (0, 0, 0, 0);
    for (text, label) in dataset {
        let ss = embedder.embed_sequence(text)?;
        let (pred, _) = classify(model, &ss)?;
        match (pred, label) {
            (Label::Spam, Label::Spam) => tp += 1,
            (Label::Spam, Label::Normal) => fp += 1,
            (Label::Normal, Label::Spam) => fn_ += 1,
            (Label::Normal, Label::Normal) => tn += 1,
        }
    }
    Ok(EvalReport::from_confusion(tp, fp, fn_, tn))
}

// ---------------------------------------------------------------------------
// Dataset files: one `label TAB text` example per line
// ---------------------------------------------------------------------------

/// Parses dataset text. Blank lines are skipped; labels are `spam` or
/// `normal`; the text may contain further tabs.
pub fn parse_dataset(content: &str) -> Result<Vec<(String, Label)>, ClassifierError> {
    let mut out = Vec::new();
    for (i, raw) in content.lines().enumerate() {
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        if line.is_empty() {
            continue;
        }
        let (label_str, text) = line.split_once('\t').ok_or(ClassifierError::InvalidDataset {
            line: i + 1,
            msg: "expected `label<TAB>text`".into(),
        })?;
        let label = Label::parse(label_str).ok_or_else(|| ClassifierError::InvalidDataset {
            line: i + 1,
            msg: format!("unknown label {label_str:?} (expected `spam` or `normal`)"),
        })?;
        if text.is_empty() {
            return Err(ClassifierError::InvalidDataset { line: i + 1, msg: "empty text".into() });
        }
        out.push((text.to_string(), label));
    }
    if out.is_empty() {
        return Err(ClassifierError::EmptyDataset);
    }
    Ok(out)
}

pub fn load_dataset(path: &Path) -> Result<Vec<(String, Label)>, ClassifierError> {
    let content = std::fs::read_to_string(path)
        .map_err(|e| ClassifierError::Persist(crate::persist::io_error(path, e)))?;
    parse_dataset(&content)
}

pub fn save_dataset(examples: &[(String, Label)], path: &Path) -> Result<(), ClassifierError> {
    let mut content = String::new();
    for (text, label) in examples {
        content.push_str(label.as_str());
        content.push('\t');
        content.push_str(text);
        content.push('\n');
    }
    std::fs::write(path, content)
        .map_err(|e| ClassifierError::Persist(crate::persist::io_error(path, e)))
}

// ---------------------------------------------------------------------------
// Persistence
// ---------------------------------------------------------------------------

pub fn save_classifier(model: &ConvClassifier, path: &Path) -> Result<(), ClassifierError> {
    let mut w = Writer::new(
        MAGIC,
        VERSION,
        &[model.embed_dim as u64, model.filters as u64, model.banks.len() as u64],
    );
    for bank in &model.banks {
        w.u32(bank.width as u32);
    }
    for bank in &model.banks {
        for filter in &bank.w {
            for row in filter {
                w.f64_slice(row);
            }
        }
        w.f64_slice(&bank.b);
    }
    for row in &model.dense_w {
        w.f64_slice(row);
    }
    w.f64_slice(&model.dense_b);
    w.finish(path)?;
    Ok(())
}

pub fn load_classifier(path: &Path) -> Result<ConvClassifier, ClassifierError> {
    let (mut r, dims) = Reader::open(path, "classifier", MAGIC, VERSION)?;
    if dims.len() != 3 {
        return Err(ClassifierError::Persist(r.corrupted("expected 3 header dimensions")));
    }
    let (embed_dim, filters, n_banks) = (dims[0] as usize, dims[1] as usize, dims[2] as usize);
    if embed_dim == 0 || filters == 0 || n_banks == 0 {
        return Err(ClassifierError::Persist(r.corrupted("zero dimension in header")));
    }
    let mut widths = Vec::with_capacity(n_banks);
    for _ in 0..n_banks {
        widths.push(r.u32()? as usize);
    }
    let mut banks = Vec::with_capacity(n_banks);
    for &width in &widths {
        let mut w = Vec::with_capacity(filters);
        for _ in 0..filters {
            let mut filter = Vec::with_capacity(width);
            for _ in 0..width {
                filter.push(r.f64_vec(embed_dim)?);
            }
            w.push(filter);
        }
        let b = r.f64_vec(filters)?;
        banks.push(WidthBank { width, w, b });
    }
    let feature_len = n_banks * filters;
    let dense_w = vec![r.f64_vec(feature_len)?, r.f64_vec(feature_len)?];
    let dense_b = r.f64_vec(2)?;
    r.done()?;
    Ok(ConvClassifier { embed_dim, filters, banks, dense_w, dense_b })
}
