//! Collapsed Gibbs sampling of character families over walk corpora.
//!
//! Walks play the role of documents and characters the role of words in a
//! latent Dirichlet allocation: each walk mixes families, each family is a
//! distribution over characters, and every token carries a family
//! assignment resampled from the collapsed conditional
//!
//! ```text
//! P(z_i = k | rest) ∝ (n_dk + α) · (n_kw + η) / (n_k + V·η)
//! ```
//!
//! where `n_dk` counts tokens of walk `d` in family `k`, `n_kw` counts
//! character `w` in family `k`, `n_k` is the family total and `V` the
//! vocabulary size, all excluding token `i` itself.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::math::sample_weighted;
use crate::persist::{PersistError, Reader, Writer};
use crate::vfge::{VfgeError, WalkCorpus};

const MAGIC: &str = "RPLF";
const VERSION: u32 = 1;
const ARTIFACT: &str = "family state";

/// Family assignments plus the sufficient statistics of the collapsed
/// sampler. Fields are public so inference code and tests can inspect the
/// count tables directly.
#[derive(Debug, Clone, PartialEq)]
pub struct FamilyState {
    pub k: usize,
    pub alpha: f64,
    pub eta: f64,
    /// Vocabulary size (graph vertex count).
    pub vocab: usize,
    /// Per-walk, per-token family assignment, parallel to the corpus walks.
    pub z: Vec<Vec<u32>>,
    /// walk × family token counts.
    pub n_dk: Vec<Vec<u32>>,
    /// family × character token counts.
    pub n_kw: Vec<Vec<u32>>,
    /// Per-family totals; always the row sums of `n_kw`.
    pub n_k: Vec<u32>,
}

impl FamilyState {
    /// Verify the count tables against the assignments and corpus. Used by
    /// tests and after loading persisted state.
    pub fn check_consistency(&self, corpus: &WalkCorpus) -> Result<(), VfgeError> {
        let bad = |msg: String| Err(VfgeError::InvalidParameter(msg));
        if self.z.len() != corpus.walks.len() {
            return bad("assignment walk count differs from corpus".to_string());
        }
        let mut n_dk = vec![vec![0u32; self.k]; corpus.walks.len()];
        let mut n_kw = vec![vec![0u32; self.vocab]; self.k];
        let mut n_k = vec![0u32; self.k];
        for (d, (walk, zs)) in corpus.walks.iter().zip(&self.z).enumerate() {
            if walk.len() != zs.len() {
                return bad(format!("walk {d} has {} tokens but {} assignments", walk.len(), zs.len()));
            }
            for (&w, &z) in walk.iter().zip(zs) {
                if z as usize >= self.k || w as usize >= self.vocab {
                    return bad(format!("assignment ({w}, {z}) out of range in walk {d}"));
                }
                n_dk[d][z as usize] += 1;
                n_kw[z as usize][w as usize] += 1;
                n_k[z as usize] += 1;
            }
        }
        if n_dk != self.n_dk || n_kw != self.n_kw || n_k != self.n_k {
            return bad("count tables disagree with assignments".to_string());
        }
        Ok(())
    }
}

/// Unnormalized collapsed conditional for one token over all families.
/// `n_dk_row`, `n_kw_col` and `n_k` must already exclude the token.
fn conditional_weights(
    n_dk_row: &[u32],
    n_kw_col: impl Fn(usize) -> u32,
    n_k: &[u32],
    vocab: usize,
    alpha: f64,
    eta: f64,
    out: &mut Vec<f64>,
) {
    out.clear();
    let v_eta = vocab as f64 * eta;
    for k in 0..n_k.len() {
        let w = (n_dk_row[k] as f64 + alpha) * (n_kw_col(k) as f64 + eta)
            / (n_k[k] as f64 + v_eta);
        out.push(w);
    }
}

/// Run `sweeps` full collapsed Gibbs sweeps over the corpus, starting from
/// uniformly random assignments drawn with `seed`.
pub fn gibbs_assign(
    corpus: &WalkCorpus,
    k: usize,
    alpha: f64,
    eta: f64,
    sweeps: usize,
    seed: u64,
) -> Result<FamilyState, VfgeError> {
    if corpus.walks.is_empty() {
        return Err(VfgeError::EmptyCorpus);
    }
    if k < 1 {
        return Err(VfgeError::InvalidParameter("family count K must be ≥ 1".to_string()));
    }
    if alpha <= 0.0 || eta <= 0.0 {
        return Err(VfgeError::InvalidParameter(format!(
            "priors must be positive, got alpha={alpha} eta={eta}"
        )));
    }
    let vocab = corpus.vertex_count;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut state = FamilyState {
        k,
        alpha,
        eta,
        vocab,
        z: corpus
            .walks
            .iter()
            .map(|walk| walk.iter().map(|_| rng.random_range(0..k as u32)).collect())
            .collect(),
        n_dk: vec![vec![0; k]; corpus.walks.len()],
        n_kw: vec![vec![0; vocab]; k],
        n_k: vec![0; k],
    };
    for (d, (walk, zs)) in corpus.walks.iter().zip(&state.z).enumerate() {
        for (&w, &z) in walk.iter().zip(zs) {
            state.n_dk[d][z as usize] += 1;
            state.n_kw[z as usize][w as usize] += 1;
            state.n_k[z as usize] += 1;
        }
    }

    let mut weights = Vec::with_capacity(k);
    for _ in 0..sweeps {
        for d in 0..corpus.walks.len() {
            for i in 0..corpus.walks[d].len() {
                let w = corpus.walks[d][i] as usize;
                let old = state.z[d][i] as usize;
                state.n_dk[d][old] -= 1;
                state.n_kw[old][w] -= 1;
                state.n_k[old] -= 1;

                conditional_weights(
                    &state.n_dk[d],
                    |fam| state.n_kw[fam][w],
                    &state.n_k,
                    vocab,
                    alpha,
                    eta,
                    &mut weights,
                );
                let new = sample_weighted(&mut rng, &weights);

                state.z[d][i] = new as u32;
                state.n_dk[d][new] += 1;
                state.n_kw[new][w] += 1;
                state.n_k[new] += 1;
            }
        }
    }
    Ok(state)
}

/// Posterior family distribution of one character:
/// `Pr(F_k|c) ∝ (n_kw + η)/(n_k + V·η) · Pr(F_k)` with the family prior
/// `Pr(F_k) = (n_k + α)/Σ_j (n_j + α)`. Sums to 1 within 1e-9.
pub fn family_posterior(state: &FamilyState, c: u32) -> Result<Vec<f64>, VfgeError> {
    if c as usize >= state.vocab {
        return Err(VfgeError::UnknownVertex(c));
    }
    let v_eta = state.vocab as f64 * state.eta;
    let prior_total: f64 = state.n_k.iter().map(|&n| n as f64 + state.alpha).sum();
    let mut post: Vec<f64> = (0..state.k)
        .map(|k| {
            let likelihood =
                (state.n_kw[k][c as usize] as f64 + state.eta) / (state.n_k[k] as f64 + v_eta);
            let prior = (state.n_k[k] as f64 + state.alpha) / prior_total;
            likelihood * prior
        })
        .collect();
    let total: f64 = post.iter().sum();
    for p in &mut post {
        *p /= total;
    }
    Ok(post)
}

/// Family with the highest posterior for each character, ties to the lower
/// family index.
pub fn argmax_families(state: &FamilyState) -> Result<Vec<u32>, VfgeError> {
    (0..state.vocab as u32)
        .map(|c| {
            let post = family_posterior(state, c)?;
            let mut best = 0usize;
            for (k, &p) in post.iter().enumerate() {
                if p > post[best] {
                    best = k;
                }
            }
            Ok(best as u32)
        })
        .collect()
}

/// Persist the full sampler state (assignments and count tables).
pub fn save_family_state(state: &FamilyState, path: impl AsRef<Path>) -> Result<(), PersistError> {
    let mut w = Writer::new(
        MAGIC,
        VERSION,
        &[state.k as u64, state.vocab as u64, state.z.len() as u64],
    );
    w.f64(state.alpha);
    w.f64(state.eta);
    for zs in &state.z {
        w.u32(zs.len() as u32);
        for &z in zs {
            w.u32(z);
        }
    }
    for row in &state.n_dk {
        for &c in row {
            w.u32(c);
        }
    }
    for row in &state.n_kw {
        for &c in row {
            w.u32(c);
        }
    }
    for &c in &state.n_k {
        w.u32(c);
    }
    w.finish(path)
}

/// Load state written by [`save_family_state`].
pub fn load_family_state(path: impl AsRef<Path>) -> Result<FamilyState, PersistError> {
    let (mut r, dims) = Reader::open(path, ARTIFACT, MAGIC, VERSION)?;
    if dims.len() != 3 {
        return Err(r.corrupted("header must carry 3 dimensions"));
    }
    let (k, vocab, walks) = (dims[0] as usize, dims[1] as usize, dims[2] as usize);
    let alpha = r.f64()?;
    let eta = r.f64()?;
    let mut z = Vec::with_capacity(walks);
    for _ in 0..walks {
        let len = r.u32()? as usize;
        let mut zs = Vec::with_capacity(len);
        for _ in 0..len {
            let v = r.u32()?;
            if v as usize >= k {
                return Err(r.corrupted(format!("assignment {v} outside family range")));
            }
            zs.push(v);
        }
        z.push(zs);
    }
    let read_rows = |rows: usize, cols: usize, r: &mut Reader| -> Result<Vec<Vec<u32>>, PersistError> {
        (0..rows)
            .map(|_| (0..cols).map(|_| r.u32()).collect::<Result<Vec<u32>, _>>())
            .collect()
    };
    let n_dk = read_rows(walks, k, &mut r)?;
    let n_kw = read_rows(k, vocab, &mut r)?;
    let n_k = (0..k).map(|_| r.u32()).collect::<Result<Vec<u32>, _>>()?;
    r.done()?;
    Ok(FamilyState { k, alpha, eta, vocab, z, n_dk, n_kw, n_k })
}
