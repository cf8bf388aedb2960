//! Sequence model over gated character embeddings.
//!
//! For each character the model combines two frozen views — the graph
//! embedding (structural, 2d) and the textual skip-gram embedding (d) —
//! through a projection and a learned gate into one input vector `N` per
//! position. A stack of forward and backward LSTM layers reads the `N`
//! sequence in both directions; the published representation of layer
//! `l` at position `k` is the concatenation `H_l = [H←, H→]`, with
//! `H_0 = [N, N]`. A softmax-weighted, scaled sum over layers yields the
//! final per-position embedding:
//!
//! ```text
//! SS_k = ω · Σ_l softmax(s)_l · H_l_k
//! ```
//!
//! The stack is pretrained as a bidirectional language model (forward
//! states predict the next character, backward states the previous one,
//! via sampled-softmax cross-entropy) and later fine-tuned end-to-end by
//! whatever consumes the `SS` vectors.

pub mod gate;
pub mod lstm;
pub mod text;

use std::collections::HashMap;
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::math::{add_scaled, dot, softmax_in_place};
use crate::persist::{PersistError, Reader, Writer};

pub use gate::{
    gate_forward, gate_forward_cached, input_backward, input_forward, GateCache, GateParams,
    InputCache, LinearGrads, Projection,
};
pub use lstm::{LstmCell, LstmGrads, StepCache};
pub use text::{
    load_text_embeddings, save_text_embeddings, train_text_skipgram, TextEmbeddings,
    TextSkipgramOptions,
};

const MODEL_MAGIC: &str = "RPLM";
const MODEL_VERSION: u32 = 1;

/// Errors from the sequence-model layer.
#[derive(Debug, Error)]
pub enum SslmError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("training corpus is empty")]
    EmptyCorpus,
    #[error("cannot embed an empty sequence")]
    EmptySequence,
    #[error(transparent)]
    Persist(#[from] PersistError),
}

/// Layer-mixing parameters: raw weights `s` (softmax-normalized before
/// use) and the positive output scale `ω`.
#[derive(Debug, Clone, PartialEq)]
pub struct AggParams {
    pub s: Vec<f64>,
    pub omega: f64,
}

/// Softmax of the raw layer weights.
pub fn mix_weights(params: &AggParams) -> Vec<f64> {
    let mut w = params.s.clone();
    softmax_in_place(&mut w);
    w
}

/// Weighted, scaled sum of per-layer representations.
///
/// `layers[l][k]` is the layer-`l` vector at position `k`; all layers
/// must cover the same positions with the same width.
pub fn aggregate(
    layers: &[Vec<Vec<f64>>],
    params: &AggParams,
) -> Result<Vec<Vec<f64>>, SslmError> {
    if layers.is_empty() {
        return Err(SslmError::InvalidParameter("aggregation needs at least one layer".into()));
    }
    if params.s.len() != layers.len() {
        return Err(SslmError::DimensionMismatch(format!(
            "{} layer weights for {} layers",
            params.s.len(),
            layers.len()
        )));
    }
    if params.omega <= 0.0 || params.omega.is_nan() {
        return Err(SslmError::InvalidParameter("omega must be positive".into()));
    }
    let n = layers[0].len();
    let width = layers[0].first().map_or(0, Vec::len);
    for layer in layers {
        if layer.len() != n || layer.iter().any(|v| v.len() != width) {
            return Err(SslmError::DimensionMismatch(
                "all layers must share positions and width".into(),
            ));
        }
    }
    let w = mix_weights(params);
    let mut out = vec![vec![0.0; width]; n];
    for (l, layer) in layers.iter().enumerate() {
        for (k, vec) in layer.iter().enumerate() {
            add_scaled(&mut out[k], vec, params.omega * w[l]);
        }
    }
    Ok(out)
}

/// Shape parameters for a new model.
#[derive(Debug, Clone)]
pub struct SslmOptions {
    /// Hidden size d; the graph rows are 2d wide, text rows d wide.
    pub d: usize,
    /// Number of stacked recurrent layers per direction.
    pub layers: usize,
}

impl Default for SslmOptions {
    fn default() -> SslmOptions {
        SslmOptions { d: 128, layers: 2 }
    }
}

/// The full sequence model: frozen input tables, input path, recurrent
/// stacks, layer mixer, and the language-model head used in pretraining.
#[derive(Debug, Clone, PartialEq)]
pub struct SslmModel {
    d: usize,
    layers: usize,
    vocab: Vec<char>,
    index: HashMap<char, u32>,
    /// Frozen graph embeddings, one 2d row per vocabulary character.
    pub graph_rows: Vec<Vec<f64>>,
    /// Frozen textual embeddings, one d row per vocabulary character.
    pub text_rows: Vec<Vec<f64>>,
    pub proj: Projection,
    pub gate: GateParams,
    pub fwd_cells: Vec<LstmCell>,
    pub back_cells: Vec<LstmCell>,
    pub agg: AggParams,
    /// Softmax head for character prediction, |V|×d plus bias.
    pub lm_head: Vec<Vec<f64>>,
    pub lm_bias: Vec<f64>,
}

/// Gradients for every trainable tensor of the stack (the frozen input
/// tables and the language-model head are handled separately).
#[derive(Debug, Clone)]
pub struct SslmGrads {
    pub proj: LinearGrads,
    pub gate: LinearGrads,
    pub fwd: Vec<LstmGrads>,
    pub back: Vec<LstmGrads>,
    pub s: Vec<f64>,
    pub omega: f64,
}

impl SslmGrads {
    pub fn zeros(d: usize, layers: usize) -> SslmGrads {
        SslmGrads {
            proj: LinearGrads::zeros(d, 2 * d),
            gate: LinearGrads::zeros(d, 2 * d),
            fwd: (0..layers).map(|_| LstmGrads::zeros(d)).collect(),
            back: (0..layers).map(|_| LstmGrads::zeros(d)).collect(),
            s: vec![0.0; layers + 1],
            omega: 0.0,
        }
    }

    pub fn clear(&mut self) {
        let d = self.proj.b.len();
        let layers = self.fwd.len();
        *self = SslmGrads::zeros(d, layers);
    }

    /// Walks gradients in the same fixed order as
    /// [`SslmModel::visit_params`].
    pub fn visit_params(&mut self, mut f: impl FnMut(&mut f64)) {
        for row in self.proj.w.iter_mut() {
            row.iter_mut().for_each(&mut f);
        }
        self.proj.b.iter_mut().for_each(&mut f);
        for row in self.gate.w.iter_mut() {
            row.iter_mut().for_each(&mut f);
        }
        self.gate.b.iter_mut().for_each(&mut f);
        for l in 0..self.fwd.len() {
            visit_lstm_grads(&mut self.fwd[l], &mut f);
            visit_lstm_grads(&mut self.back[l], &mut f);
        }
        self.s.iter_mut().for_each(&mut f);
        f(&mut self.omega);
    }
}

/// Same order as [`LstmCell::for_each_param`]: per gate w, u, b.
fn visit_lstm_grads(g: &mut LstmGrads, f: &mut impl FnMut(&mut f64)) {
    for gi in 0..4 {
        for row in &mut g.w[gi] {
            row.iter_mut().for_each(&mut *f);
        }
        for row in &mut g.u[gi] {
            row.iter_mut().for_each(&mut *f);
        }
        g.b[gi].iter_mut().for_each(&mut *f);
    }
}

/// One per-direction, per-layer forward record: step caches in
/// processing order, the dropout mask (if training), and the masked
/// hidden states that downstream consumers saw.
#[derive(Debug, Clone)]
struct DirCache {
    steps: Vec<StepCache>,
    mask: Option<Vec<Vec<f64>>>,
    h: Vec<Vec<f64>>,
}

/// Everything recorded by a forward pass over one sequence.
#[derive(Debug, Clone)]
pub struct SequenceCache {
    /// Vocabulary index per position; `None` for characters outside the
    /// model vocabulary (their input vector is zero).
    pub tokens: Vec<Option<u32>>,
    input_caches: Vec<Option<InputCache>>,
    fwd: Vec<DirCache>,
    back: Vec<DirCache>,
    /// Published layer representations: `layers_h[l][k]` is the
    /// 2d-vector of layer `l` at position `k`, `l = 0..=L`.
    pub layers_h: Vec<Vec<Vec<f64>>>,
    /// Final aggregated embedding per position.
    pub ss: Vec<Vec<f64>>,
}

impl SslmModel {
    /// Builds a freshly initialized model over a sorted character
    /// vocabulary with per-character frozen graph (2d) and text (d)
    /// rows. Weights are uniform(-0.08, 0.08), biases zero, layer
    /// weights neutral (uniform softmax, ω = 1).
    pub fn new(
        options: &SslmOptions,
        vocab: Vec<char>,
        graph_rows: Vec<Vec<f64>>,
        text_rows: Vec<Vec<f64>>,
        seed: u64,
    ) -> Result<SslmModel, SslmError> {
        let (d, layers) = (options.d, options.layers);
        if d == 0 || layers == 0 {
            return Err(SslmError::InvalidParameter(
                "hidden size and layer count must be at least 1".into(),
            ));
        }
        if vocab.is_empty() {
            return Err(SslmError::InvalidParameter("vocabulary is empty".into()));
        }
        if !vocab.windows(2).all(|w| w[0] < w[1]) {
            return Err(SslmError::InvalidParameter(
                "vocabulary must be sorted and duplicate-free".into(),
            ));
        }
        if graph_rows.len() != vocab.len() || text_rows.len() != vocab.len() {
            return Err(SslmError::DimensionMismatch(format!(
                "vocabulary has {} characters but {} graph rows and {} text rows",
                vocab.len(),
                graph_rows.len(),
                text_rows.len()
            )));
        }
        if graph_rows.iter().any(|r| r.len() != 2 * d)
            || text_rows.iter().any(|r| r.len() != d)
        {
            return Err(SslmError::DimensionMismatch(format!(
                "graph rows must be {}-wide and text rows {}-wide",
                2 * d,
                d
            )));
        }
        if graph_rows
            .iter()
            .chain(text_rows.iter())
            .any(|r| r.iter().any(|x| !x.is_finite()))
        {
            return Err(SslmError::InvalidParameter("embedding rows must be finite".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let index = vocab.iter().enumerate().map(|(i, &c)| (c, i as u32)).collect();
        let proj = Projection::init(d, &mut rng);
        let gate = GateParams::init(d, &mut rng);
        let mut fwd_cells = Vec::with_capacity(layers);
        let mut back_cells = Vec::with_capacity(layers);
        for _ in 0..layers {
            fwd_cells.push(LstmCell::init(d, &mut rng));
            back_cells.push(LstmCell::init(d, &mut rng));
        }
        let lm_head = (0..vocab.len())
            .map(|_| (0..d).map(|_| rng.random_range(-0.08..0.08)).collect())
            .collect();
        let lm_bias = vec![0.0; vocab.len()];
        Ok(SslmModel {
            d,
            layers,
            index,
            graph_rows,
            text_rows,
            proj,
            gate,
            fwd_cells,
            back_cells,
            agg: AggParams { s: vec![0.0; layers + 1], omega: 1.0 },
            lm_head,
            lm_bias,
            vocab,
        })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn layer_count(&self) -> usize {
        self.layers
    }

    /// Width of the final per-position embedding.
    pub fn ss_dim(&self) -> usize {
        2 * self.d
    }

    pub fn vocab(&self) -> &[char] {
        &self.vocab
    }

    pub fn index_of(&self, c: char) -> Option<u32> {
        self.index.get(&c).copied()
    }

    /// Maps text to vocabulary indices; unknown characters become `None`.
    pub fn encode(&self, text: &str) -> Vec<Option<u32>> {
        text.chars().map(|c| self.index_of(c)).collect()
    }

    /// Full forward pass. Pass `Some((rate, rng))` to apply inverted
    /// dropout to every recurrent layer output (training); `None` runs
    /// deterministically (evaluation).
    pub fn forward_cached(
        &self,
        text: &str,
        mut dropout: Option<(f64, &mut ChaCha8Rng)>,
    ) -> Result<SequenceCache, SslmError> {
        if let Some((rate, _)) = &dropout {
            if !(0.0..1.0).contains(rate) {
                return Err(SslmError::InvalidParameter(format!(
                    "dropout rate {rate} outside [0, 1)"
                )));
            }
        }
        let tokens = self.encode(text);
        let n_pos = tokens.len();
        if n_pos == 0 {
            return Err(SslmError::EmptySequence);
        }

        let mut n = Vec::with_capacity(n_pos);
        let mut input_caches = Vec::with_capacity(n_pos);
        for &tok in &tokens {
            match tok {
                Some(i) => {
                    let (vec, cache) = input_forward(
                        &self.proj,
                        &self.gate,
                        &self.graph_rows[i as usize],
                        &self.text_rows[i as usize],
                    )?;
                    n.push(vec);
                    input_caches.push(Some(cache));
                }
                None => {
                    n.push(vec![0.0; self.d]);
                    input_caches.push(None);
                }
            }
        }

        let draw_mask = |dropout: &mut Option<(f64, &mut ChaCha8Rng)>| -> Option<Vec<Vec<f64>>> {
            match dropout {
                Some((rate, rng)) if *rate > 0.0 => {
                    let keep = 1.0 - *rate;
                    Some(
                        (0..n_pos)
                            .map(|_| {
                                (0..self.d)
                                    .map(|_| {
                                        if rng.random::<f64>() < *rate { 0.0 } else { 1.0 / keep }
                                    })
                                    .collect()
                            })
                            .collect(),
                    )
                }
                _ => None,
            }
        };
        let apply_mask = |hs: &mut Vec<Vec<f64>>, mask: &Option<Vec<Vec<f64>>>| {
            if let Some(mask) = mask {
                for (h, m) in hs.iter_mut().zip(mask) {
                    for (x, &f) in h.iter_mut().zip(m) {
                        *x *= f;
                    }
                }
            }
        };

        let mut fwd: Vec<DirCache> = Vec::with_capacity(self.layers);
        let mut back: Vec<DirCache> = Vec::with_capacity(self.layers);
        let mut fwd_in = n.clone();
        let mut back_in: Vec<Vec<f64>> = n.iter().rev().cloned().collect();
        for l in 0..self.layers {
            let (mut hs, steps) = self.fwd_cells[l].run(&fwd_in);
            let mask = draw_mask(&mut dropout);
            apply_mask(&mut hs, &mask);
            fwd_in = hs.clone();
            fwd.push(DirCache { steps, mask, h: hs });

            let (mut hs, steps) = self.back_cells[l].run(&back_in);
            let mask = draw_mask(&mut dropout);
            apply_mask(&mut hs, &mask);
            back_in = hs.clone();
            back.push(DirCache { steps, mask, h: hs });
        }

        let mut layers_h = Vec::with_capacity(self.layers + 1);
        let self_concat = |v: &Vec<f64>| -> Vec<f64> {
            let mut out = Vec::with_capacity(2 * self.d);
            out.extend_from_slice(v);
            out.extend_from_slice(v);
            out
        };
        layers_h.push(n.iter().map(self_concat).collect::<Vec<_>>());
        for l in 0..self.layers {
            let mut layer = Vec::with_capacity(n_pos);
            for k in 0..n_pos {
                let mut v = Vec::with_capacity(2 * self.d);
                v.extend_from_slice(&back[l].h[n_pos - 1 - k]);
                v.extend_from_slice(&fwd[l].h[k]);
                layer.push(v);
            }
            layers_h.push(layer);
        }
        let ss = aggregate(&layers_h, &self.agg)?;
        Ok(SequenceCache { tokens, input_caches, fwd, back, layers_h, ss })
    }

    /// Per-position embeddings for `text` in evaluation mode.
    pub fn embed_sequence(&self, text: &str) -> Result<Vec<Vec<f64>>, SslmError> {
        Ok(self.forward_cached(text, None)?.ss)
    }

    /// Backward pass from gradients on the published layer
    /// representations (`d_layers[l][k]` matches `cache.layers_h`).
    /// Accumulates into `grads`; the frozen input tables receive none.
    pub fn backward_layers(
        &self,
        cache: &SequenceCache,
        d_layers: &[Vec<Vec<f64>>],
        grads: &mut SslmGrads,
    ) {
        let d = self.d;
        let n_pos = cache.tokens.len();
        assert_eq!(d_layers.len(), self.layers + 1, "layer-gradient count");

        let unmask = |dh: &mut Vec<Vec<f64>>, mask: &Option<Vec<Vec<f64>>>| {
            if let Some(mask) = mask {
                for (g, m) in dh.iter_mut().zip(mask) {
                    for (x, &f) in g.iter_mut().zip(m) {
                        *x *= f;
                    }
                }
            }
        };

        let mut dx_fwd: Option<Vec<Vec<f64>>> = None;
        let mut dx_back: Option<Vec<Vec<f64>>> = None;
        for l in (0..self.layers).rev() {
            // Forward direction: processing order equals position order.
            let mut dh = vec![vec![0.0; d]; n_pos];
            for k in 0..n_pos {
                add_scaled(&mut dh[k], &d_layers[l + 1][k][d..], 1.0);
            }
            if let Some(dx) = &dx_fwd {
                for k in 0..n_pos {
                    add_scaled(&mut dh[k], &dx[k], 1.0);
                }
            }
            unmask(&mut dh, &cache.fwd[l].mask);
            dx_fwd = Some(self.fwd_cells[l].backward(&cache.fwd[l].steps, &dh, &mut grads.fwd[l]));

            // Backward direction: step j corresponds to position n-1-j.
            let mut dh = vec![vec![0.0; d]; n_pos];
            for j in 0..n_pos {
                add_scaled(&mut dh[j], &d_layers[l + 1][n_pos - 1 - j][..d], 1.0);
            }
            if let Some(dx) = &dx_back {
                for j in 0..n_pos {
                    add_scaled(&mut dh[j], &dx[j], 1.0);
                }
            }
            unmask(&mut dh, &cache.back[l].mask);
            dx_back =
                Some(self.back_cells[l].backward(&cache.back[l].steps, &dh, &mut grads.back[l]));
        }

        let dx_fwd = dx_fwd.expect("at least one layer");
        let dx_back = dx_back.expect("at least one layer");
        for k in 0..n_pos {
            let mut dn = vec![0.0; d];
            add_scaled(&mut dn, &dx_fwd[k], 1.0);
            add_scaled(&mut dn, &dx_back[n_pos - 1 - k], 1.0);
            add_scaled(&mut dn, &d_layers[0][k][..d], 1.0);
            add_scaled(&mut dn, &d_layers[0][k][d..], 1.0);
            if let Some(input_cache) = &cache.input_caches[k] {
                input_backward(&self.gate, input_cache, &dn, &mut grads.proj, &mut grads.gate);
            }
        }
    }

    /// Backward pass from gradients on the final aggregated embeddings;
    /// covers the mixer (`s`, ω) and everything below it.
    pub fn backward_ss(
        &self,
        cache: &SequenceCache,
        d_ss: &[Vec<f64>],
        grads: &mut SslmGrads,
    ) {
        let n_pos = cache.tokens.len();
        assert_eq!(d_ss.len(), n_pos, "one gradient per position");
        let w = mix_weights(&self.agg);
        let omega = self.agg.omega;

        for (k, g) in d_ss.iter().enumerate() {
            // SS = ω · Σ w_l H_l, so dω picks up SS/ω.
            grads.omega += dot(g, &cache.ss[k]) / omega;
        }
        let mut dw = vec![0.0; w.len()];
        for (l, layer) in cache.layers_h.iter().enumerate() {
            for (k, g) in d_ss.iter().enumerate() {
                dw[l] += omega * dot(g, &layer[k]);
            }
        }
        let pivot: f64 = w.iter().zip(&dw).map(|(a, b)| a * b).sum();
        for l in 0..w.len() {
            grads.s[l] += w[l] * (dw[l] - pivot);
        }

        let d_layers: Vec<Vec<Vec<f64>>> = (0..=self.layers)
            .map(|l| {
                (0..n_pos)
                    .map(|k| d_ss[k].iter().map(|&g| omega * w[l] * g).collect())
                    .collect()
            })
            .collect();
        self.backward_layers(cache, &d_layers, grads);
    }

    /// SGD step over the trainable stack. ω is clamped positive.
    pub fn apply_grads(&mut self, grads: &SslmGrads, lr: f64) {
        for (row, grow) in self.proj.w.iter_mut().zip(&grads.proj.w) {
            add_scaled(row, grow, -lr);
        }
        add_scaled(&mut self.proj.b, &grads.proj.b, -lr);
        for (row, grow) in self.gate.w.iter_mut().zip(&grads.gate.w) {
            add_scaled(row, grow, -lr);
        }
        add_scaled(&mut self.gate.b, &grads.gate.b, -lr);
        for (cell, g) in self.fwd_cells.iter_mut().zip(&grads.fwd) {
            cell.apply_grads(g, lr);
        }
        for (cell, g) in self.back_cells.iter_mut().zip(&grads.back) {
            cell.apply_grads(g, lr);
        }
        add_scaled(&mut self.agg.s, &grads.s, -lr);
        self.agg.omega = (self.agg.omega - lr * grads.omega).max(1e-6);
    }

    /// Visits every trainable stack parameter in a fixed order: proj w,
    /// proj b, gate w, gate b, per layer (forward cell, backward cell),
    /// raw layer weights `s`, ω. The frozen tables and the LM head are
    /// excluded.
    pub fn visit_params(&mut self, mut f: impl FnMut(&mut f64)) {
        for row in self.proj.w.iter_mut() {
            row.iter_mut().for_each(&mut f);
        }
        self.proj.b.iter_mut().for_each(&mut f);
        for row in self.gate.w.iter_mut() {
            row.iter_mut().for_each(&mut f);
        }
        self.gate.b.iter_mut().for_each(&mut f);
        for l in 0..self.layers {
            self.fwd_cells[l].for_each_param(&mut f);
            self.back_cells[l].for_each_param(&mut f);
        }
        self.agg.s.iter_mut().for_each(&mut f);
        f(&mut self.agg.omega);
    }
}

// ---------------------------------------------------------------------------
// Language-model pretraining
// ---------------------------------------------------------------------------

/// Hyperparameters for bidirectional language-model pretraining.
#[derive(Debug, Clone)]
pub struct PretrainOptions {
    pub epochs: usize,
    pub learning_rate: f64,
    /// Sampled-softmax negatives per prediction.
    pub negatives: usize,
    pub dropout: f64,
    pub seed: u64,
}

impl Default for PretrainOptions {
    fn default() -> PretrainOptions {
        PretrainOptions { epochs: 5, learning_rate: 0.05, negatives: 10, dropout: 0.1, seed: 0 }
    }
}

/// Held-out losses around a pretraining run.
#[derive(Debug, Clone)]
pub struct PretrainReport {
    pub initial_loss: f64,
    pub final_loss: f64,
    pub held_out_sequences: usize,
}

/// Full-softmax evaluation of the language model.
#[derive(Debug, Clone)]
pub struct LmEval {
    /// Mean cross-entropy over all next/previous-character predictions.
    pub loss: f64,
    /// Fraction of predictions whose argmax matches the actual character.
    pub accuracy: f64,
    pub predictions: usize,
}

/// Dense language-model-head gradient buffer reused across sequences.
struct HeadGrads {
    rows: Vec<Vec<f64>>,
    bias: Vec<f64>,
    touched: Vec<usize>,
    flag: Vec<bool>,
}

impl HeadGrads {
    fn zeros(vocab: usize, d: usize) -> HeadGrads {
        HeadGrads {
            rows: vec![vec![0.0; d]; vocab],
            bias: vec![0.0; vocab],
            touched: Vec::new(),
            flag: vec![false; vocab],
        }
    }

    fn touch(&mut self, i: usize) {
        if !self.flag[i] {
            self.flag[i] = true;
            self.touched.push(i);
        }
    }

    fn apply_and_clear(&mut self, head: &mut [Vec<f64>], bias: &mut [f64], lr: f64) {
        for &i in &self.touched {
            add_scaled(&mut head[i], &self.rows[i], -lr);
            bias[i] -= lr * self.bias[i];
            self.rows[i].fill(0.0);
            self.bias[i] = 0.0;
            self.flag[i] = false;
        }
        self.touched.clear();
    }
}

/// Cross-entropy of `target` under a softmax restricted to `candidates`
/// (`candidates[0]` must be the target). Accumulates head gradients and
/// adds the hidden-state gradient into `dh`.
fn lm_candidate_loss(
    head: &[Vec<f64>],
    bias: &[f64],
    h: &[f64],
    candidates: &[u32],
    dh: &mut [f64],
    head_grads: &mut HeadGrads,
) -> f64 {
    let mut logits: Vec<f64> = candidates
        .iter()
        .map(|&c| dot(&head[c as usize], h) + bias[c as usize])
        .collect();
    softmax_in_place(&mut logits);
    let loss = -logits[0].max(1e-300).ln();
    for (i, &c) in candidates.iter().enumerate() {
        let dlogit = logits[i] - if i == 0 { 1.0 } else { 0.0 };
        add_scaled(dh, &head[c as usize], dlogit);
        head_grads.touch(c as usize);
        add_scaled(&mut head_grads.rows[c as usize], h, dlogit);
        head_grads.bias[c as usize] += dlogit;
    }
    loss
}

impl SslmModel {
    /// Full-softmax bidirectional cross-entropy and accuracy on `texts`,
    /// evaluation mode.
    pub fn lm_eval(&self, texts: &[impl AsRef<str>]) -> Result<LmEval, SslmError> {
        let mut loss = 0.0;
        let mut correct = 0usize;
        let mut total = 0usize;
        let top = self.layers - 1;
        for text in texts {
            let text = text.as_ref();
            if text.chars().count() < 2 {
                continue;
            }
            let cache = self.forward_cached(text, None)?;
            let n_pos = cache.tokens.len();
            let mut score = |h: &[f64], target: u32| {
                let mut logits: Vec<f64> = (0..self.vocab.len())
                    .map(|v| dot(&self.lm_head[v], h) + self.lm_bias[v])
                    .collect();
                let argmax = logits
                    .iter()
                    .enumerate()
                    .max_by(|a, b| a.1.total_cmp(b.1))
                    .map(|(i, _)| i)
                    .unwrap();
                softmax_in_place(&mut logits);
                loss -= logits[target as usize].max(1e-300).ln();
                if argmax == target as usize {
                    correct += 1;
                }
                total += 1;
            };
            for k in 0..n_pos - 1 {
                if let Some(t) = cache.tokens[k + 1] {
                    score(&cache.fwd[top].h[k], t);
                }
            }
            for k in 1..n_pos {
                if let Some(t) = cache.tokens[k - 1] {
                    score(&cache.back[top].h[n_pos - 1 - k], t);
                }
            }
        }
        if total == 0 {
            return Err(SslmError::EmptyCorpus);
        }
        Ok(LmEval { loss: loss / total as f64, accuracy: correct as f64 / total as f64, predictions: total })
    }

    /// Pretrains the stack as a bidirectional language model: the top
    /// forward state at each position predicts the next character, the
    /// top backward state the previous one, with sampled-softmax
    /// cross-entropy. Roughly the last tenth of the corpus is held out
    /// for the before/after loss in the report (a single-sequence corpus
    /// is its own held-out set).
    pub fn pretrain_bilm(
        &mut self,
        corpus: &[impl AsRef<str>],
        options: &PretrainOptions,
    ) -> Result<PretrainReport, SslmError> {
        if options.negatives == 0 {
            return Err(SslmError::InvalidParameter("need at least one negative".into()));
        }
        if options.learning_rate <= 0.0 || options.learning_rate.is_nan() {
            return Err(SslmError::InvalidParameter("learning rate must be positive".into()));
        }
        let usable: Vec<&str> = corpus
            .iter()
            .map(AsRef::as_ref)
            .filter(|t| t.chars().count() >= 2)
            .collect();
        if usable.is_empty() {
            return Err(SslmError::EmptyCorpus);
        }
        let (train, held): (&[&str], &[&str]) = if usable.len() >= 2 {
            let n_held = (usable.len() / 10).max(1);
            let split = usable.len() - n_held;
            (&usable[..split], &usable[split..])
        } else {
            (&usable[..], &usable[..])
        };

        let initial = self.lm_eval(held)?;
        let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
        let vocab_len = self.vocab.len() as u32;
        let top = self.layers - 1;
        let mut grads = SslmGrads::zeros(self.d, self.layers);
        let mut head_grads = HeadGrads::zeros(self.vocab.len(), self.d);

        for _ in 0..options.epochs {
            for &text in train {
                let dropout = if options.dropout > 0.0 {
                    Some((options.dropout, &mut rng))
                } else {
                    None
                };
                let cache = self.forward_cached(text, dropout)?;
                let n_pos = cache.tokens.len();
                let mut d_layers =
                    vec![vec![vec![0.0; 2 * self.d]; n_pos]; self.layers + 1];
                let mut candidates = Vec::with_capacity(options.negatives + 1);
                let fill_candidates = |rng: &mut ChaCha8Rng, target: u32, out: &mut Vec<u32>| {
                    out.clear();
                    out.push(target);
                    for _ in 0..options.negatives {
                        let neg = rng.random_range(0..vocab_len);
                        if neg != target {
                            out.push(neg);
                        }
                    }
                };
                for (k, slot) in d_layers[self.layers].iter_mut().take(n_pos - 1).enumerate() {
                    if let Some(target) = cache.tokens[k + 1] {
                        fill_candidates(&mut rng, target, &mut candidates);
                        let (_, fwd_half) = slot.split_at_mut(self.d);
                        lm_candidate_loss(
                            &self.lm_head,
                            &self.lm_bias,
                            &cache.fwd[top].h[k],
                            &candidates,
                            fwd_half,
                            &mut head_grads,
                        );
                    }
                }
                for (k, slot) in d_layers[self.layers].iter_mut().enumerate().skip(1) {
                    if let Some(target) = cache.tokens[k - 1] {
                        fill_candidates(&mut rng, target, &mut candidates);
                        let (back_half, _) = slot.split_at_mut(self.d);
                        lm_candidate_loss(
                            &self.lm_head,
                            &self.lm_bias,
                            &cache.back[top].h[n_pos - 1 - k],
                            &candidates,
                            back_half,
                            &mut head_grads,
                        );
                    }
                }
                self.backward_layers(&cache, &d_layers, &mut grads);
                head_grads.apply_and_clear(
                    &mut self.lm_head,
                    &mut self.lm_bias,
                    options.learning_rate,
                );
                self.apply_grads(&grads, options.learning_rate);
                grads.clear();
            }
        }
        let final_eval = self.lm_eval(held)?;
        Ok(PretrainReport {
            initial_loss: initial.loss,
            final_loss: final_eval.loss,
            held_out_sequences: held.len(),
        })
    }
}

// ---------------------------------------------------------------------------
// Persistence
// ---------------------------------------------------------------------------

fn write_linear(w: &mut Writer, m: &[Vec<f64>], b: &[f64]) {
    for row in m {
        w.f64_slice(row);
    }
    w.f64_slice(b);
}

pub fn save_model(model: &SslmModel, path: &Path) -> Result<(), SslmError> {
    let mut w = Writer::new(
        MODEL_MAGIC,
        MODEL_VERSION,
        &[model.vocab.len() as u64, model.d as u64, model.layers as u64],
    );
    for &c in &model.vocab {
        w.u32(c as u32);
    }
    for row in model.graph_rows.iter().chain(model.text_rows.iter()) {
        w.f64_slice(row);
    }
    write_linear(&mut w, &model.proj.w, &model.proj.b);
    write_linear(&mut w, &model.gate.w, &model.gate.b);
    let mut cells = Vec::new();
    for l in 0..model.layers {
        cells.push(model.fwd_cells[l].clone());
        cells.push(model.back_cells[l].clone());
    }
    for mut cell in cells {
        cell.for_each_param(|p| w.f64(*p));
    }
    w.f64_slice(&model.agg.s);
    w.f64(model.agg.omega);
    for row in &model.lm_head {
        w.f64_slice(row);
    }
    w.f64_slice(&model.lm_bias);
    w.finish(path)?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<SslmModel, SslmError> {
    let (mut r, dims) = Reader::open(path, "sequence model", MODEL_MAGIC, MODEL_VERSION)?;
    if dims.len() != 3 {
        return Err(r.corrupted("expected 3 header dimensions").into());
    }
    let (vocab_len, d, layers) = (dims[0] as usize, dims[1] as usize, dims[2] as usize);
    if vocab_len == 0 || d == 0 || layers == 0 {
        return Err(r.corrupted("zero dimension in header").into());
    }
    let mut vocab = Vec::with_capacity(vocab_len);
    for _ in 0..vocab_len {
        let code = r.u32()?;
        vocab.push(
            char::from_u32(code)
                .ok_or_else(|| SslmError::from(r.corrupted("invalid character code")))?,
        );
    }
    let matrix = |r: &mut Reader, rows: usize, cols: usize| -> Result<Vec<Vec<f64>>, SslmError> {
        (0..rows).map(|_| Ok(r.f64_vec(cols)?)).collect()
    };
    let graph_rows = matrix(&mut r, vocab_len, 2 * d)?;
    let text_rows = matrix(&mut r, vocab_len, d)?;
    let proj = Projection { w: matrix(&mut r, d, 2 * d)?, b: r.f64_vec(d)? };
    let gate = GateParams { w: matrix(&mut r, d, 2 * d)?, b: r.f64_vec(d)? };
    let per_cell = 4 * (d * d + d * d + d);
    let mut fwd_cells = Vec::with_capacity(layers);
    let mut back_cells = Vec::with_capacity(layers);
    for _ in 0..layers {
        for list in [&mut fwd_cells, &mut back_cells] {
            let vals = r.f64_vec(per_cell)?;
            let mut cell = LstmCell::zeros(d);
            let mut it = vals.into_iter();
            cell.for_each_param(|p| *p = it.next().unwrap());
            list.push(cell);
        }
    }
    let s = r.f64_vec(layers + 1)?;
    let omega = r.f64()?;
    let lm_head = matrix(&mut r, vocab_len, d)?;
    let lm_bias = r.f64_vec(vocab_len)?;
    r.done()?;
    if !vocab.windows(2).all(|w| w[0] < w[1]) {
        return Err(SslmError::InvalidParameter("stored vocabulary is not sorted".into()));
    }
    let index = vocab.iter().enumerate().map(|(i, &c)| (c, i as u32)).collect();
    Ok(SslmModel {
        d,
        layers,
        index,
        graph_rows,
        text_rows,
        proj,
        gate,
        fwd_cells,
        back_cells,
        agg: AggParams { s, omega },
        lm_head,
        lm_bias,
        vocab,
    })
}
