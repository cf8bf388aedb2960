//! Hierarchical random walks over the variation graph.
//!
//! Each step samples in two levels: first an edge type, proportionally to
//! the total incident weight of that type at the current vertex, then a
//! neighbor within the chosen type, proportionally to edge weight. This
//! respects the heterogeneous relation structure without hand-written
//! metapaths. Every walk runs on its own counter-mode RNG stream, so the
//! corpus is reproducible and walk generation could shard by start vertex.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::graph::{EdgeType, VariationGraph};
use crate::math::sample_weighted;
use crate::persist::{PersistError, Reader, Writer};
use crate::vfge::VfgeError;

const MAGIC: &str = "RPLW";
const VERSION: u32 = 1;
const ARTIFACT: &str = "walk corpus";

/// A bag of fixed-length vertex sequences plus the provenance needed to
/// regenerate or validate it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WalkCorpus {
    pub walks: Vec<Vec<u32>>,
    pub walks_per_vertex: usize,
    pub walk_length: usize,
    pub seed: u64,
    /// Vertex count of the source graph; walk tokens index into it.
    pub vertex_count: usize,
}

impl WalkCorpus {
    /// Total number of tokens across all walks.
    pub fn token_count(&self) -> usize {
        self.walks.iter().map(Vec::len).sum()
    }

    /// Check that every token is a graph vertex and every consecutive pair
    /// is a graph edge under some type.
    pub fn validate_against(&self, g: &VariationGraph) -> Result<(), VfgeError> {
        if self.vertex_count != g.len() {
            return Err(VfgeError::InvalidParameter(format!(
                "corpus was generated over {} vertices, graph has {}",
                self.vertex_count,
                g.len()
            )));
        }
        for walk in &self.walks {
            for pair in walk.windows(2) {
                let connected = EdgeType::ALL
                    .iter()
                    .any(|&t| g.edge_weight(pair[0], pair[1], t).is_some());
                if !connected {
                    return Err(VfgeError::InvalidParameter(format!(
                        "walk step {} -> {} is not a graph edge",
                        pair[0], pair[1]
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Generate `walks_per_vertex` hierarchical random walks of `walk_length`
/// vertices from every non-isolated vertex. Isolated vertices produce no
/// walks; a graph with no edges produces an empty corpus.
pub fn generate_walks(
    g: &VariationGraph,
    walks_per_vertex: usize,
    walk_length: usize,
    seed: u64,
) -> Result<WalkCorpus, VfgeError> {
    if walks_per_vertex == 0 || walk_length == 0 {
        return Err(VfgeError::InvalidParameter(
            "walks_per_vertex and walk_length must be positive".to_string(),
        ));
    }
    let mut walks = Vec::new();
    let mut stream = 0u64;
    for start in 0..g.len() as u32 {
        if g.degree(start) == 0 {
            continue;
        }
        for _ in 0..walks_per_vertex {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(stream);
            stream += 1;
            walks.push(single_walk(g, start, walk_length, &mut rng));
        }
    }
    Ok(WalkCorpus {
        walks,
        walks_per_vertex,
        walk_length,
        seed,
        vertex_count: g.len(),
    })
}

fn single_walk(g: &VariationGraph, start: u32, walk_length: usize, rng: &mut impl Rng) -> Vec<u32> {
    let mut walk = Vec::with_capacity(walk_length);
    walk.push(start);
    let mut current = start;
    for _ in 1..walk_length {
        // level 1: edge type by total incident weight of that type
        let type_weights: Vec<f64> = EdgeType::ALL
            .iter()
            .map(|&t| g.adjacency(current, t).iter().map(|&(_, w)| w).sum())
            .collect();
        let t = EdgeType::ALL[sample_weighted(rng, &type_weights)];
        // level 2: neighbor within the type by edge weight
        let within = g.adjacency(current, t);
        let weights: Vec<f64> = within.iter().map(|&(_, w)| w).collect();
        current = within[sample_weighted(rng, &weights)].0;
        walk.push(current);
    }
    walk
}

/// Persist a walk corpus with its provenance.
pub fn save_walks(corpus: &WalkCorpus, path: impl AsRef<Path>) -> Result<(), PersistError> {
    let mut w = Writer::new(
        MAGIC,
        VERSION,
        &[
            corpus.walks.len() as u64,
            corpus.walk_length as u64,
            corpus.walks_per_vertex as u64,
            corpus.vertex_count as u64,
            corpus.seed,
        ],
    );
    for walk in &corpus.walks {
        for &v in walk {
            w.u32(v);
        }
    }
    w.finish(path)
}

/// Load a corpus written by [`save_walks`], bit-exactly.
pub fn load_walks(path: impl AsRef<Path>) -> Result<WalkCorpus, PersistError> {
    let (mut r, dims) = Reader::open(path, ARTIFACT, MAGIC, VERSION)?;
    if dims.len() != 5 {
        return Err(r.corrupted("header must carry 5 dimensions"));
    }
    let n_walks = dims[0] as usize;
    let walk_length = dims[1] as usize;
    let vertex_count = dims[3] as usize;
    let mut walks = Vec::with_capacity(n_walks);
    for _ in 0..n_walks {
        let mut walk = Vec::with_capacity(walk_length);
        for _ in 0..walk_length {
            let v = r.u32()?;
            if v as usize >= vertex_count {
                return Err(r.corrupted(format!("token {v} outside vertex range")));
            }
            walk.push(v);
        }
        walks.push(walk);
    }
    r.done()?;
    Ok(WalkCorpus {
        walks,
        walks_per_vertex: dims[2] as usize,
        walk_length,
        seed: dims[4],
        vertex_count,
    })
}
