//! Variation family-enhanced graph embedding.
//!
//! Four stages turn the variation graph into character vectors that know
//! about variation families:
//!
//! 1. [`generate_walks`] — hierarchical random walks over the graph;
//! 2. [`gibbs_assign`] — collapsed Gibbs sampling groups walk tokens into
//!    latent families;
//! 3. [`train_pair_skipgram`] — skip-gram over ⟨character, family⟩ pairs;
//! 4. [`integrate`] — the final embedding concatenates the character
//!    vector with its posterior-weighted family mixture.

mod family;
mod skipgram;
mod walks;

pub use family::{
    argmax_families, family_posterior, gibbs_assign, load_family_state, save_family_state,
    FamilyState,
};
pub use skipgram::{
    export_embeddings_text, load_embeddings, pair_gradients, pair_loss, pair_softmax,
    save_embeddings, train_pair_skipgram, PairEmbeddings, SkipgramOptions,
};
pub use walks::{generate_walks, load_walks, save_walks, WalkCorpus};

use thiserror::Error;

use crate::graph::VariationGraph;
use crate::math::cosine;
use crate::persist::PersistError;

/// Errors across walk generation, family assignment, and embedding.
#[derive(Debug, Error)]
pub enum VfgeError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("walk corpus is empty")]
    EmptyCorpus,
    #[error("unknown vertex index {0}")]
    UnknownVertex(u32),
    #[error("unknown character '{0}'")]
    UnknownCharacter(char),
    #[error(transparent)]
    Persist(#[from] PersistError),
}

/// Family-enhanced embedding of one character: the character input vector
/// concatenated with the posterior-weighted mixture of family vectors,
/// dimension 2d.
pub fn integrate(
    emb: &PairEmbeddings,
    state: &FamilyState,
    c: u32,
) -> Result<Vec<f64>, VfgeError> {
    if c as usize >= emb.vocab() {
        return Err(VfgeError::UnknownVertex(c));
    }
    if emb.families() != state.k || emb.vocab() != state.vocab {
        return Err(VfgeError::InvalidParameter(
            "embeddings and family state have mismatched shapes".to_string(),
        ));
    }
    let post = family_posterior(state, c)?;
    let mut out = Vec::with_capacity(2 * emb.d);
    out.extend_from_slice(&emb.char_in[c as usize]);
    for dim in 0..emb.d {
        let mixed: f64 = post
            .iter()
            .zip(&emb.fam_in)
            .map(|(&p, fam)| p * fam[dim])
            .sum();
        out.push(mixed);
    }
    Ok(out)
}

/// [`integrate`] for every character, row per vertex.
pub fn integrate_all(
    emb: &PairEmbeddings,
    state: &FamilyState,
) -> Result<Vec<Vec<f64>>, VfgeError> {
    (0..emb.vocab() as u32).map(|c| integrate(emb, state, c)).collect()
}

/// Top-`k` characters by cosine similarity of integrated embeddings,
/// excluding the query itself; ties break toward the lower vertex index.
/// Asking for more neighbors than exist clamps to the vocabulary size.
pub fn nearest(
    emb: &PairEmbeddings,
    state: &FamilyState,
    c: u32,
    k: usize,
) -> Result<Vec<(u32, f64)>, VfgeError> {
    if k < 1 {
        return Err(VfgeError::InvalidParameter("k must be ≥ 1".to_string()));
    }
    let query = integrate(emb, state, c)?;
    let mut scored: Vec<(u32, f64)> = (0..emb.vocab() as u32)
        .filter(|&other| other != c)
        .map(|other| {
            let v = integrate(emb, state, other)?;
            Ok((other, cosine(&query, &v)))
        })
        .collect::<Result<_, VfgeError>>()?;
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    scored.truncate(k);
    Ok(scored)
}

/// [`nearest`] keyed by characters via the graph's vertex order.
pub fn nearest_chars(
    emb: &PairEmbeddings,
    state: &FamilyState,
    g: &VariationGraph,
    c: char,
    k: usize,
) -> Result<Vec<(char, f64)>, VfgeError> {
    let idx = g.index_of(c).ok_or(VfgeError::UnknownCharacter(c))?;
    let ranked = nearest(emb, state, idx, k)?;
    Ok(ranked.into_iter().map(|(v, s)| (g.char_at(v), s)).collect())
}


#[cfg(test)]
mod tests {
    use super::testutil::two_clique_graph;
    use super::*;

    /// A state whose posterior for vertex 0 is exactly (0.5, 0.5): both
    /// families have identical counts everywhere.
    fn uniform_posterior_state() -> FamilyState {
        FamilyState {
            k: 2,
            alpha: 1.0,
            eta: 1.0,
            vocab: 1,
            z: vec![vec![0, 1]],
            n_dk: vec![vec![1, 1]],
            n_kw: vec![vec![1], vec![1]],
            n_k: vec![1, 1],
        }
    }

    #[test]
    fn integrate_matches_hand_arithmetic() {
        let state = uniform_posterior_state();
        let emb = PairEmbeddings {
            d: 2,
            char_in: vec![vec![1.0, 0.0]],
            char_out: vec![vec![0.0, 0.0]],
            fam_in: vec![vec![0.0, 1.0], vec![2.0, 3.0]],
            fam_out: vec![vec![0.0; 2]; 2],
        };
        let v = integrate(&emb, &state, 0).unwrap();
        assert_eq!(v, vec![1.0, 0.0, 1.0, 2.0]);
        assert_eq!(v.len(), 2 * emb.d);
    }

    #[test]
    fn point_mass_posterior_selects_single_family() {
        // character 0 appears only under family 0; as eta vanishes the
        // posterior concentrates there and the mixture collapses to F_0
        let state = FamilyState {
            k: 2,
            alpha: 1.0,
            eta: 1e-12,
            vocab: 2,
            z: vec![],
            n_dk: vec![],
            n_kw: vec![vec![4, 0], vec![0, 3]],
            n_k: vec![4, 3],
        };
        let emb = PairEmbeddings {
            d: 2,
            char_in: vec![vec![0.5, -0.5], vec![0.0, 0.0]],
            char_out: vec![vec![0.0; 2]; 2],
            fam_in: vec![vec![7.0, 8.0], vec![-100.0, -100.0]],
            fam_out: vec![vec![0.0; 2]; 2],
        };
        let v = integrate(&emb, &state, 0).unwrap();
        assert!((v[2] - 7.0).abs() < 1e-6 && (v[3] - 8.0).abs() < 1e-6, "got {v:?}");
    }

    #[test]
    fn integrate_rejects_unknown_and_mismatched() {
        let state = uniform_posterior_state();
        let emb = PairEmbeddings::init(1, 2, 4, 0);
        assert!(matches!(integrate(&emb, &state, 9), Err(VfgeError::UnknownVertex(9))));
        let wrong = PairEmbeddings::init(1, 3, 4, 0);
        assert!(integrate(&wrong, &state, 0).is_err());
    }

    fn trained_toy() -> (FamilyState, PairEmbeddings, VariationGraph) {
        let g = two_clique_graph();
        let corpus = generate_walks(&g, 10, 20, 7).unwrap();
        let state = gibbs_assign(&corpus, 2, 1.0, 0.01, 60, 13).unwrap();
        let opts = SkipgramOptions { d: 16, window: 3, negatives: 3, lr: 0.05, epochs: 10 };
        let emb = train_pair_skipgram(&corpus, &state, opts, 3).unwrap();
        (state, emb, g)
    }

    #[test]
    fn nearest_excludes_query_and_clamps() {
        let (state, emb, _) = trained_toy();
        for c in 0..8u32 {
            let ranked = nearest(&emb, &state, c, 3).unwrap();
            assert_eq!(ranked.len(), 3);
            assert!(ranked.iter().all(|&(v, _)| v != c));
        }
        let all = nearest(&emb, &state, 0, 100).unwrap();
        assert_eq!(all.len(), 7);
        assert!(nearest(&emb, &state, 0, 0).is_err());
    }

    #[test]
    fn nearest_neighbors_stay_within_clique() {
        let (state, emb, g) = trained_toy();
        for c in "abcdWXYZ".chars() {
            let ranked = nearest_chars(&emb, &state, &g, c, 3).unwrap();
            let same_clique = |x: char| "abcd".contains(x) == "abcd".contains(c);
            assert!(
                ranked.iter().all(|&(n, _)| same_clique(n)),
                "{c} -> {ranked:?}"
            );
        }
        assert!(matches!(
            nearest_chars(&emb, &state, &g, '外', 3),
            Err(VfgeError::UnknownCharacter('外'))
        ));
    }

    #[test]
    fn ranked_scores_descend() {
        let (state, emb, _) = trained_toy();
        let ranked = nearest(&emb, &state, 2, 7).unwrap();
        for pair in ranked.windows(2) {
            assert!(pair[0].1 >= pair[1].1);
        }
    }
}
