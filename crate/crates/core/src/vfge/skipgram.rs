//! Character-family pair skip-gram with negative sampling.
//!
//! Every walk token is a ⟨character, family⟩ pair. The center
//! representation is the concatenation of the character's and the family's
//! input embeddings; context pairs score against the output matrices.
//! Parameters are shared across pairs: the same character matrix serves
//! every family it appears with, and vice versa. Optimization is plain SGD
//! on the negative-sampling objective with a linearly decaying rate.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::math::{dot, log_sigmoid, sigmoid, CumulativeTable};
use crate::persist::{io_error, PersistError, Reader, Writer};
use crate::vfge::{argmax_families, FamilyState, VfgeError, WalkCorpus};

const MAGIC: &str = "RPLE";
const VERSION: u32 = 1;
const ARTIFACT: &str = "embeddings";

/// Input and output embedding matrices for characters and families.
#[derive(Debug, Clone, PartialEq)]
pub struct PairEmbeddings {
    pub d: usize,
    /// |C| × d character input embeddings (these are "the" embeddings).
    pub char_in: Vec<Vec<f64>>,
    /// |C| × d character output (context) embeddings.
    pub char_out: Vec<Vec<f64>>,
    /// K × d family input embeddings.
    pub fam_in: Vec<Vec<f64>>,
    /// K × d family output embeddings.
    pub fam_out: Vec<Vec<f64>>,
}

impl PairEmbeddings {
    /// Seeded initialization: inputs uniform in `(-0.5/d, 0.5/d)`, outputs
    /// zero, following the usual skip-gram recipe.
    pub fn init(vocab: usize, families: usize, d: usize, seed: u64) -> PairEmbeddings {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let half = 0.5 / d as f64;
        let mut random_matrix = |rows: usize| -> Vec<Vec<f64>> {
            (0..rows)
                .map(|_| (0..d).map(|_| rng.random_range(-half..half)).collect())
                .collect()
        };
        let char_in = random_matrix(vocab);
        let fam_in = random_matrix(families);
        PairEmbeddings {
            d,
            char_in,
            char_out: vec![vec![0.0; d]; vocab],
            fam_in,
            fam_out: vec![vec![0.0; d]; families],
        }
    }

    pub fn vocab(&self) -> usize {
        self.char_in.len()
    }

    pub fn families(&self) -> usize {
        self.fam_in.len()
    }
}

/// Hyperparameters for [`train_pair_skipgram`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SkipgramOptions {
    pub d: usize,
    pub window: usize,
    pub negatives: usize,
    pub lr: f64,
    pub epochs: usize,
}

impl Default for SkipgramOptions {
    fn default() -> Self {
        SkipgramOptions { d: 128, window: 5, negatives: 5, lr: 0.025, epochs: 5 }
    }
}

/// Per-pair negative-sampling loss: `-log σ(v·u⁺) - Σ log σ(-v·uⁿ)` for
/// center `v`, positive context `u_pos` and negative contexts `u_negs`,
/// all in the concatenated 2d pair space.
pub fn pair_loss(v: &[f64], u_pos: &[f64], u_negs: &[Vec<f64>]) -> f64 {
    let mut loss = -log_sigmoid(dot(v, u_pos));
    for u in u_negs {
        loss -= log_sigmoid(-dot(v, u));
    }
    loss
}

/// Analytic gradients of [`pair_loss`] with respect to the center, the
/// positive context, and each negative context.
pub fn pair_gradients(
    v: &[f64],
    u_pos: &[f64],
    u_negs: &[Vec<f64>],
) -> (Vec<f64>, Vec<f64>, Vec<Vec<f64>>) {
    let g_pos = sigmoid(dot(v, u_pos)) - 1.0;
    let mut grad_v: Vec<f64> = u_pos.iter().map(|&u| g_pos * u).collect();
    let grad_u_pos: Vec<f64> = v.iter().map(|&x| g_pos * x).collect();
    let mut grad_u_negs = Vec::with_capacity(u_negs.len());
    for u in u_negs {
        let g_neg = sigmoid(dot(v, u));
        for (gv, &ui) in grad_v.iter_mut().zip(u) {
            *gv += g_neg * ui;
        }
        grad_u_negs.push(v.iter().map(|&x| g_neg * x).collect());
    }
    (grad_v, grad_u_pos, grad_u_negs)
}

/// Train pair embeddings over the corpus under the family assignments in
/// `state`. Deterministic for a fixed seed; `epochs = 0` returns the
/// seeded initialization untouched.
pub fn train_pair_skipgram(
    corpus: &WalkCorpus,
    state: &FamilyState,
    opts: SkipgramOptions,
    seed: u64,
) -> Result<PairEmbeddings, VfgeError> {
    if opts.window < 1 || opts.negatives < 1 {
        return Err(VfgeError::InvalidParameter(
            "window and negatives must be ≥ 1".to_string(),
        ));
    }
    if opts.d < 1 || opts.lr <= 0.0 {
        return Err(VfgeError::InvalidParameter("d must be ≥ 1 and lr positive".to_string()));
    }
    if state.z.len() != corpus.walks.len() {
        return Err(VfgeError::InvalidParameter(
            "family state does not cover this corpus".to_string(),
        ));
    }
    let vocab = state.vocab;
    let mut emb = PairEmbeddings::init(vocab, state.k, opts.d, seed);
    if opts.epochs == 0 {
        return Ok(emb);
    }

    // negatives: corpus unigram distribution raised to 3/4, each negative
    // character paired with its argmax-posterior family
    let neg_family = argmax_families(state)?;
    let mut counts = vec![0.0f64; vocab];
    for walk in &corpus.walks {
        for &w in walk {
            counts[w as usize] += 1.0;
        }
    }
    for c in counts.iter_mut() {
        *c = c.powf(0.75);
    }
    let neg_table = CumulativeTable::new(&counts);

    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));
    let total_positions = (opts.epochs * corpus.token_count()) as f64;
    let mut processed = 0usize;
    let d = opts.d;

    for _ in 0..opts.epochs {
        for (walk, zs) in corpus.walks.iter().zip(&state.z) {
            for i in 0..walk.len() {
                let alpha = opts.lr * (1.0 - processed as f64 / total_positions).max(1e-4);
                processed += 1;
                let (ci, fi) = (walk[i] as usize, zs[i] as usize);
                let lo = i.saturating_sub(opts.window);
                let hi = (i + opts.window).min(walk.len() - 1);
                for j in lo..=hi {
                    if j == i {
                        continue;
                    }
                    let (cj, fj) = (walk[j] as usize, zs[j] as usize);
                    // gradient of the center accumulates over the positive
                    // and all negatives before it is applied
                    let mut v_grad = vec![0.0; 2 * d];

                    let score = dot(&emb.char_in[ci], &emb.char_out[cj])
                        + dot(&emb.fam_in[fi], &emb.fam_out[fj]);
                    let g = sigmoid(score) - 1.0;
                    accumulate(&mut v_grad, &emb.char_out[cj], &emb.fam_out[fj], g);
                    update_out(&mut emb, cj, fj, ci, fi, g * alpha);

                    for _ in 0..opts.negatives {
                        let cn = neg_table.sample(&mut rng);
                        if cn == cj {
                            continue;
                        }
                        let fn_ = neg_family[cn] as usize;
                        let score = dot(&emb.char_in[ci], &emb.char_out[cn])
                            + dot(&emb.fam_in[fi], &emb.fam_out[fn_]);
                        let g = sigmoid(score);
                        accumulate(&mut v_grad, &emb.char_out[cn], &emb.fam_out[fn_], g);
                        update_out(&mut emb, cn, fn_, ci, fi, g * alpha);
                    }

                    for (x, g) in emb.char_in[ci].iter_mut().zip(&v_grad[..d]) {
                        *x -= alpha * g;
                    }
                    for (x, g) in emb.fam_in[fi].iter_mut().zip(&v_grad[d..]) {
                        *x -= alpha * g;
                    }
                }
            }
        }
    }
    Ok(emb)
}

/// Add `g · [char_out_row ++ fam_out_row]` into the 2d center gradient.
fn accumulate(v_grad: &mut [f64], char_row: &[f64], fam_row: &[f64], g: f64) {
    let d = char_row.len();
    for (acc, &u) in v_grad[..d].iter_mut().zip(char_row) {
        *acc += g * u;
    }
    for (acc, &u) in v_grad[d..].iter_mut().zip(fam_row) {
        *acc += g * u;
    }
}

/// SGD step on one output pair against center `(ci, fi)`.
fn update_out(emb: &mut PairEmbeddings, c_out: usize, f_out: usize, ci: usize, fi: usize, step: f64) {
    for k in 0..emb.d {
        emb.char_out[c_out][k] -= step * emb.char_in[ci][k];
        emb.fam_out[f_out][k] -= step * emb.fam_in[fi][k];
    }
}

/// Softmax over all candidate context pairs for one center pair, where
/// candidate `k` is character `k` joined with `context_families[k]`.
/// Returns a distribution over the vocabulary.
pub fn pair_softmax(
    emb: &PairEmbeddings,
    context_families: &[u32],
    center_char: u32,
    center_family: u32,
) -> Result<Vec<f64>, VfgeError> {
    if center_char as usize >= emb.vocab() {
        return Err(VfgeError::UnknownVertex(center_char));
    }
    if context_families.len() != emb.vocab() {
        return Err(VfgeError::InvalidParameter(
            "context_families must cover the vocabulary".to_string(),
        ));
    }
    let ci = center_char as usize;
    let fi = center_family as usize;
    let mut scores: Vec<f64> = (0..emb.vocab())
        .map(|k| {
            dot(&emb.char_in[ci], &emb.char_out[k])
                + dot(&emb.fam_in[fi], &emb.fam_out[context_families[k] as usize])
        })
        .collect();
    crate::math::softmax_in_place(&mut scores);
    Ok(scores)
}

/// Persist all four matrices with their dimensions.
pub fn save_embeddings(emb: &PairEmbeddings, path: impl AsRef<Path>) -> Result<(), PersistError> {
    let mut w = Writer::new(
        MAGIC,
        VERSION,
        &[emb.vocab() as u64, emb.families() as u64, emb.d as u64],
    );
    for matrix in [&emb.char_in, &emb.char_out, &emb.fam_in, &emb.fam_out] {
        for row in matrix.iter() {
            w.f64_slice(row);
        }
    }
    w.finish(path)
}

/// Load embeddings written by [`save_embeddings`], bit-exactly.
pub fn load_embeddings(path: impl AsRef<Path>) -> Result<PairEmbeddings, PersistError> {
    let (mut r, dims) = Reader::open(path, ARTIFACT, MAGIC, VERSION)?;
    if dims.len() != 3 {
        return Err(r.corrupted("header must carry vocab, family and dim counts"));
    }
    let (vocab, families, d) = (dims[0] as usize, dims[1] as usize, dims[2] as usize);
    let matrix = |rows: usize, r: &mut Reader| -> Result<Vec<Vec<f64>>, PersistError> {
        (0..rows).map(|_| r.f64_vec(d)).collect()
    };
    let char_in = matrix(vocab, &mut r)?;
    let char_out = matrix(vocab, &mut r)?;
    let fam_in = matrix(families, &mut r)?;
    let fam_out = matrix(families, &mut r)?;
    r.done()?;
    Ok(PairEmbeddings { d, char_in, char_out, fam_in, fam_out })
}

/// Plain-text interop export: one `char dim1 … dimd` line per character,
/// using the character input embeddings.
pub fn export_embeddings_text(
    emb: &PairEmbeddings,
    chars: &[char],
    path: impl AsRef<Path>,
) -> Result<(), VfgeError> {
    if chars.len() != emb.vocab() {
        return Err(VfgeError::InvalidParameter(format!(
            "{} characters for {} embedding rows",
            chars.len(),
            emb.vocab()
        )));
    }
    let mut out = String::new();
    for (c, row) in chars.iter().zip(&emb.char_in) {
        write!(out, "{c}").unwrap();
        for x in row {
            write!(out, " {x}").unwrap();
        }
        out.push('\n');
    }
    let path = path.as_ref();
    fs::write(path, out).map_err(|e| VfgeError::Persist(io_error(path, e)))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::{cosine, finite_difference_gradient, max_relative_error};
    use crate::vfge::testutil::two_clique_graph;
    use crate::vfge::{generate_walks, gibbs_assign};

    fn trained_toy() -> (WalkCorpus, FamilyState, PairEmbeddings) {
        let g = two_clique_graph();
        let corpus = generate_walks(&g, 10, 20, 7).unwrap();
        let state = gibbs_assign(&corpus, 2, 1.0, 0.01, 60, 13).unwrap();
        let opts = SkipgramOptions { d: 16, window: 3, negatives: 3, lr: 0.05, epochs: 10 };
        let emb = train_pair_skipgram(&corpus, &state, opts, 3).unwrap();
        (corpus, state, emb)
    }

    #[test]
    fn zero_epochs_returns_seeded_initialization() {
        let (corpus, state, _) = trained_toy();
        let opts = SkipgramOptions { epochs: 0, d: 8, ..Default::default() };
        let emb = train_pair_skipgram(&corpus, &state, opts, 41).unwrap();
        assert_eq!(emb, PairEmbeddings::init(state.vocab, state.k, 8, 41));
        // inputs random in (-0.5/d, 0.5/d), outputs zero
        let half = 0.5 / 8.0;
        assert!(emb.char_in.iter().flatten().all(|&x| x.abs() < half && x != 0.0));
        assert!(emb.char_out.iter().flatten().all(|&x| x == 0.0));
    }

    #[test]
    fn rejects_bad_hyperparameters() {
        let (corpus, state, _) = trained_toy();
        let bad = [
            SkipgramOptions { window: 0, ..Default::default() },
            SkipgramOptions { negatives: 0, ..Default::default() },
            SkipgramOptions { d: 0, ..Default::default() },
            SkipgramOptions { lr: 0.0, ..Default::default() },
        ];
        for opts in bad {
            assert!(train_pair_skipgram(&corpus, &state, opts, 1).is_err(), "{opts:?}");
        }
    }

    #[test]
    fn training_is_deterministic_per_seed() {
        let (corpus, state, _) = trained_toy();
        let opts = SkipgramOptions { d: 8, window: 2, negatives: 2, lr: 0.05, epochs: 2 };
        let a = train_pair_skipgram(&corpus, &state, opts, 5).unwrap();
        let b = train_pair_skipgram(&corpus, &state, opts, 5).unwrap();
        assert_eq!(a, b);
        let c = train_pair_skipgram(&corpus, &state, opts, 6).unwrap();
        assert_ne!(a, c);
    }

    /// Mean within-clique cosine minus mean across-clique cosine over the
    /// 8 planted vertices (0-3 vs 4-7).
    fn clique_cosine_gap(vectors: &[Vec<f64>]) -> f64 {
        let (mut within, mut across) = (Vec::new(), Vec::new());
        for i in 0..8usize {
            for j in i + 1..8 {
                let c = cosine(&vectors[i], &vectors[j]);
                if (i < 4) == (j < 4) {
                    within.push(c);
                } else {
                    across.push(c);
                }
            }
        }
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        mean(&within) - mean(&across)
    }

    #[test]
    fn cliques_separate_in_learned_spaces() {
        let g = two_clique_graph();
        let corpus = generate_walks(&g, 10, 20, 7).unwrap();
        let opts = SkipgramOptions { d: 16, window: 3, negatives: 3, lr: 0.05, epochs: 10 };

        // one family: the family term is a shared bias, so the character
        // vectors alone must encode the clique structure
        let flat = gibbs_assign(&corpus, 1, 1.0, 0.01, 5, 13).unwrap();
        let emb = train_pair_skipgram(&corpus, &flat, opts, 3).unwrap();
        let gap = clique_cosine_gap(&emb.char_in);
        assert!(gap >= 0.2, "character-space cosine gap {gap}");

        // two converged families: the family mixture absorbs the clique
        // identity (character vectors specialize within the clique), and
        // the integrated character+family vectors carry the separation
        let split = gibbs_assign(&corpus, 2, 1.0, 0.01, 60, 13).unwrap();
        let emb = train_pair_skipgram(&corpus, &split, opts, 3).unwrap();
        let integrated = crate::vfge::integrate_all(&emb, &split).unwrap();
        let gap = clique_cosine_gap(&integrated);
        assert!(gap >= 0.2, "integrated-space cosine gap {gap}");
    }

    #[test]
    fn pair_softmax_is_a_distribution_for_every_center() {
        let (_, state, emb) = trained_toy();
        let fams = argmax_families(&state).unwrap();
        for c in 0..emb.vocab() as u32 {
            let p = pair_softmax(&emb, &fams, c, fams[c as usize]).unwrap();
            let sum: f64 = p.iter().sum();
            assert!((sum - 1.0).abs() <= 1e-6, "center {c}: sum {sum}");
            assert!(p.iter().all(|&x| (0.0..=1.0).contains(&x)));
        }
        assert!(pair_softmax(&emb, &fams, 999, 0).is_err());
    }

    #[test]
    fn gradients_match_finite_differences() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2024);
        let dim = 8; // concatenated pair space for d = 4
        for _ in 0..100 {
            let rand_vec = |rng: &mut rand_chacha::ChaCha8Rng| -> Vec<f64> {
                (0..dim).map(|_| rng.random_range(-1.5..1.5)).collect()
            };
            let v = rand_vec(&mut rng);
            let u_pos = rand_vec(&mut rng);
            let u_negs = vec![rand_vec(&mut rng), rand_vec(&mut rng)];
            let (g_v, g_pos, g_negs) = pair_gradients(&v, &u_pos, &u_negs);

            let num_v = finite_difference_gradient(
                &mut |x: &[f64]| pair_loss(x, &u_pos, &u_negs),
                &v,
                1e-5,
            );
            assert!(max_relative_error(&g_v, &num_v) < 1e-4);

            let num_pos = finite_difference_gradient(
                &mut |x: &[f64]| pair_loss(&v, x, &u_negs),
                &u_pos,
                1e-5,
            );
            assert!(max_relative_error(&g_pos, &num_pos) < 1e-4);

            for (i, g_neg) in g_negs.iter().enumerate() {
                let num_neg = finite_difference_gradient(
                    &mut |x: &[f64]| {
                        let mut negs = u_negs.clone();
                        negs[i] = x.to_vec();
                        pair_loss(&v, &u_pos, &negs)
                    },
                    &u_negs[i],
                    1e-5,
                );
                assert!(max_relative_error(g_neg, &num_neg) < 1e-4);
            }
        }
    }

    #[test]
    fn embeddings_round_trip_and_export() {
        let (_, _, emb) = trained_toy();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("emb.bin");
        save_embeddings(&emb, &path).unwrap();
        assert_eq!(load_embeddings(&path).unwrap(), emb);

        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 5]).unwrap();
        assert!(matches!(load_embeddings(&path), Err(PersistError::Corrupted { .. })));

        let chars: Vec<char> = "abcdWXYZ".chars().collect();
        let text_path = dir.path().join("emb.txt");
        export_embeddings_text(&emb, &chars, &text_path).unwrap();
        let text = std::fs::read_to_string(&text_path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 8);
        let first: Vec<&str> = lines[0].split(' ').collect();
        assert_eq!(first[0], "a");
        assert_eq!(first.len(), 1 + emb.d);
        let back: f64 = first[1].parse().unwrap();
        assert_eq!(back, emb.char_in[0][0]);
    }
}
