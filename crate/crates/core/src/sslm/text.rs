//! Textual character embeddings.
//!
//! A standard skip-gram with negative sampling trained on raw text. The
//! resulting vectors provide the "what usually surrounds this character"
//! signal `T` that the gate mixes with the graph view. They are trained
//! once and then frozen; characters never seen in the training text map
//! to the zero vector.

use std::collections::HashMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::math::{sigmoid, CumulativeTable};
use crate::persist::{Reader, Writer};
use crate::sslm::SslmError;

const MAGIC: &str = "RPLT";
const VERSION: u32 = 1;

/// Frozen character vectors learned from text.
#[derive(Debug, Clone, PartialEq)]
pub struct TextEmbeddings {
    d: usize,
    chars: Vec<char>,
    index: HashMap<char, u32>,
    /// vocab × d input vectors; these are the published embeddings.
    pub vec_in: Vec<Vec<f64>>,
    /// vocab × d output (context) vectors, kept for inspection.
    pub vec_out: Vec<Vec<f64>>,
}

impl TextEmbeddings {
    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn vocab(&self) -> &[char] {
        &self.chars
    }

    pub fn get(&self, c: char) -> Option<&[f64]> {
        self.index.get(&c).map(|&i| self.vec_in[i as usize].as_slice())
    }

    /// Writes the vector for `c` into `out`, or zeros if `c` was never
    /// seen during training.
    pub fn embed(&self, c: char, out: &mut [f64]) {
        match self.get(c) {
            Some(v) => out.copy_from_slice(v),
            None => out.fill(0.0),
        }
    }
}

/// Hyperparameters for the textual skip-gram.
#[derive(Debug, Clone)]
pub struct TextSkipgramOptions {
    pub d: usize,
    pub window: usize,
    pub negatives: usize,
    pub learning_rate: f64,
    pub epochs: usize,
}

impl Default for TextSkipgramOptions {
    fn default() -> TextSkipgramOptions {
        TextSkipgramOptions { d: 128, window: 5, negatives: 5, learning_rate: 0.025, epochs: 5 }
    }
}

/// Trains character vectors on `texts` with skip-gram negative sampling.
///
/// The vocabulary is every distinct character of the corpus, sorted.
/// Negatives are drawn from the unigram distribution raised to 0.75.
pub fn train_text_skipgram(
    texts: &[impl AsRef<str>],
    options: &TextSkipgramOptions,
    seed: u64,
) -> Result<TextEmbeddings, SslmError> {
    if options.d == 0 || options.window == 0 || options.negatives == 0 {
        return Err(SslmError::InvalidParameter(
            "dimension, window and negatives must all be at least 1".into(),
        ));
    }
    if options.learning_rate <= 0.0 || options.learning_rate.is_nan() {
        return Err(SslmError::InvalidParameter("learning rate must be positive".into()));
    }

    let mut chars: Vec<char> = texts
        .iter()
        .flat_map(|t| t.as_ref().chars())
        .collect();
    chars.sort_unstable();
    chars.dedup();
    if chars.is_empty() {
        return Err(SslmError::EmptyCorpus);
    }
    let index: HashMap<char, u32> =
        chars.iter().enumerate().map(|(i, &c)| (c, i as u32)).collect();
    let sentences: Vec<Vec<u32>> = texts
        .iter()
        .map(|t| t.as_ref().chars().map(|c| index[&c]).collect())
        .filter(|s: &Vec<u32>| !s.is_empty())
        .collect();

    let vocab = chars.len();
    let d = options.d;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let span = 0.5 / d as f64;
    let mut vec_in: Vec<Vec<f64>> = (0..vocab)
        .map(|_| (0..d).map(|_| rng.random_range(-span..span)).collect())
        .collect();
    let mut vec_out: Vec<Vec<f64>> = vec![vec![0.0; d]; vocab];

    let mut counts = vec![0.0f64; vocab];
    for s in &sentences {
        for &t in s {
            counts[t as usize] += 1.0;
        }
    }
    let smoothed: Vec<f64> = counts.iter().map(|c| c.powf(0.75)).collect();
    let noise = CumulativeTable::new(&smoothed);

    let total_pairs: usize = sentences
        .iter()
        .map(|s| {
            (0..s.len())
                .map(|i| {
                    let lo = i.saturating_sub(options.window);
                    let hi = (i + options.window).min(s.len() - 1);
                    hi - lo
                })
                .sum::<usize>()
        })
        .sum();
    let total_steps = (total_pairs * options.epochs).max(1);
    let mut step = 0usize;

    for _ in 0..options.epochs {
        for s in &sentences {
            for i in 0..s.len() {
                let lo = i.saturating_sub(options.window);
                let hi = (i + options.window).min(s.len() - 1);
                for j in lo..=hi {
                    if j == i {
                        continue;
                    }
                    let lr = (options.learning_rate
                        * (1.0 - step as f64 / total_steps as f64))
                        .max(1e-4);
                    step += 1;
                    let center = s[i] as usize;
                    let context = s[j] as usize;
                    let mut dcenter = vec![0.0; d];
                    {
                        let v = &vec_in[center];
                        let u = &vec_out[context];
                        let g = sigmoid(crate::math::dot(v, u)) - 1.0;
                        for k in 0..d {
                            dcenter[k] += g * u[k];
                        }
                        let gv: Vec<f64> = v.iter().map(|x| g * x).collect();
                        let u = &mut vec_out[context];
                        for k in 0..d {
                            u[k] -= lr * gv[k];
                        }
                    }
                    for _ in 0..options.negatives {
                        let neg = noise.sample(&mut rng);
                        if neg == context {
                            continue;
                        }
                        let v = &vec_in[center];
                        let u = &vec_out[neg];
                        let g = sigmoid(crate::math::dot(v, u));
                        for k in 0..d {
                            dcenter[k] += g * u[k];
                        }
                        let gv: Vec<f64> = v.iter().map(|x| g * x).collect();
                        let u = &mut vec_out[neg];
                        for k in 0..d {
                            u[k] -= lr * gv[k];
                        }
                    }
                    let v = &mut vec_in[center];
                    for k in 0..d {
                        v[k] -= lr * dcenter[k];
                    }
                }
            }
        }
    }

    Ok(TextEmbeddings { d, chars, index, vec_in, vec_out })
}

pub fn save_text_embeddings(emb: &TextEmbeddings, path: &Path) -> Result<(), SslmError> {
    let mut w = Writer::new(MAGIC, VERSION, &[emb.chars.len() as u64, emb.d as u64]);
    for &c in &emb.chars {
        w.u32(c as u32);
    }
    for row in emb.vec_in.iter().chain(emb.vec_out.iter()) {
        w.f64_slice(row);
    }
    w.finish(path)?;
    Ok(())
}

pub fn load_text_embeddings(path: &Path) -> Result<TextEmbeddings, SslmError> {
    let (mut r, dims) = Reader::open(path, "text embeddings", MAGIC, VERSION)?;
    if dims.len() != 2 {
        return Err(r.corrupted("expected 2 header dimensions").into());
    }
    let (vocab, d) = (dims[0] as usize, dims[1] as usize);
    let mut chars = Vec::with_capacity(vocab);
    for _ in 0..vocab {
        let code = r.u32()?;
        let c = char::from_u32(code)
            .ok_or_else(|| SslmError::from(r.corrupted("invalid character code")))?;
        chars.push(c);
    }
    let mut read_matrix = |rows: usize| -> Result<Vec<Vec<f64>>, SslmError> {
        (0..rows).map(|_| Ok(r.f64_vec(d)?)).collect()
    };
    let vec_in = read_matrix(vocab)?;
    let vec_out = read_matrix(vocab)?;
    r.done()?;
    let index = chars.iter().enumerate().map(|(i, &c)| (c, i as u32)).collect();
    Ok(TextEmbeddings { d, chars, index, vec_in, vec_out })
}
