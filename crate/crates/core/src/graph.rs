//! The heterogeneous character variation graph.
//!
//! Vertices are characters; an edge of a given type connects two characters
//! whose similarity under that encoding meets the type's threshold, and the
//! edge weight is the similarity itself. The graph is undirected, immutable
//! after build, and persists to a versioned binary file.

use std::collections::HashMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use thiserror::Error;

use crate::encoding::{
    record_pinyin_similarity, stroke_similarity, zhengma_similarity, CharacterRecord,
    EncodingError, PinyinWeights,
};
use crate::persist::{PersistError, Reader, Writer};

const MAGIC: &str = "RPLG";
const VERSION: u32 = 1;
const ARTIFACT: &str = "graph";

/// Errors from graph construction, queries, and persistence.
#[derive(Debug, Error)]
pub enum GraphError {
    #[error("threshold for {kind} must be in (0, 1], got {value}")]
    InvalidThreshold { kind: EdgeType, value: f64 },
    #[error("unknown character '{0}'")]
    UnknownCharacter(char),
    #[error("duplicate character '{0}' in records")]
    DuplicateCharacter(char),
    #[error("invalid edge: {0}")]
    InvalidEdge(String),
    #[error(transparent)]
    Encoding(#[from] EncodingError),
    #[error(transparent)]
    Persist(#[from] PersistError),
}

/// The three variation relation types.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EdgeType {
    Pinyin,
    Stroke,
    Zhengma,
}

impl EdgeType {
    pub const ALL: [EdgeType; 3] = [EdgeType::Pinyin, EdgeType::Stroke, EdgeType::Zhengma];

    pub fn index(self) -> usize {
        match self {
            EdgeType::Pinyin => 0,
            EdgeType::Stroke => 1,
            EdgeType::Zhengma => 2,
        }
    }

    pub fn from_index(i: usize) -> Option<EdgeType> {
        EdgeType::ALL.get(i).copied()
    }
}

impl fmt::Display for EdgeType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            EdgeType::Pinyin => "pinyin",
            EdgeType::Stroke => "stroke",
            EdgeType::Zhengma => "zhengma",
        };
        f.write_str(name)
    }
}

impl FromStr for EdgeType {
    type Err = String;

    fn from_str(s: &str) -> Result<EdgeType, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "pinyin" => Ok(EdgeType::Pinyin),
            "stroke" => Ok(EdgeType::Stroke),
            "zhengma" => Ok(EdgeType::Zhengma),
            other => Err(format!("unknown edge type '{other}'")),
        }
    }
}

/// Per-type similarity thresholds; an edge is kept iff its similarity is at
/// least the threshold for its type.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Thresholds {
    pub pinyin: f64,
    pub stroke: f64,
    pub zhengma: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds { pinyin: 0.8, stroke: 0.6, zhengma: 0.5 }
    }
}

impl Thresholds {
    pub fn get(&self, t: EdgeType) -> f64 {
        match t {
            EdgeType::Pinyin => self.pinyin,
            EdgeType::Stroke => self.stroke,
            EdgeType::Zhengma => self.zhengma,
        }
    }

    pub fn validate(&self) -> Result<(), GraphError> {
        for t in EdgeType::ALL {
            let v = self.get(t);
            if !(v > 0.0 && v <= 1.0) {
                return Err(GraphError::InvalidThreshold { kind: t, value: v });
            }
        }
        Ok(())
    }
}

/// Aggregate counts over a graph.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphStats {
    pub vertices: usize,
    pub edges_by_type: [usize; 3],
    pub total_edges: usize,
    pub mean_degree: f64,
    pub max_degree: usize,
}

impl GraphStats {
    /// Line-oriented `key=value` form for report files.
    pub fn key_values(&self) -> Vec<(String, String)> {
        vec![
            ("vertices".into(), self.vertices.to_string()),
            ("edges_pinyin".into(), self.edges_by_type[0].to_string()),
            ("edges_stroke".into(), self.edges_by_type[1].to_string()),
            ("edges_zhengma".into(), self.edges_by_type[2].to_string()),
            ("edges_total".into(), self.total_edges.to_string()),
            ("degree_mean".into(), format!("{:.4}", self.mean_degree)),
            ("degree_max".into(), self.max_degree.to_string()),
        ]
    }
}

impl fmt::Display for GraphStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<14} {}", "vertices", self.vertices)?;
        for t in EdgeType::ALL {
            writeln!(f, "{:<14} {}", format!("edges.{t}"), self.edges_by_type[t.index()])?;
        }
        writeln!(f, "{:<14} {}", "edges.total", self.total_edges)?;
        writeln!(f, "{:<14} {:.4}", "degree.mean", self.mean_degree)?;
        write!(f, "{:<14} {}", "degree.max", self.max_degree)
    }
}

/// Undirected heterogeneous variation graph. Adjacency lists are kept per
/// vertex and per edge type, sorted by descending weight with ties broken by
/// neighbor index, so queries and walks are deterministic.
#[derive(Debug, Clone, PartialEq)]
pub struct VariationGraph {
    chars: Vec<char>,
    index: HashMap<char, u32>,
    adj: Vec<[Vec<(u32, f64)>; 3]>,
}

impl VariationGraph {
    /// Assemble a graph from an explicit edge list. Used by the builder and
    /// by loaders; also handy for constructing exact test topologies.
    pub fn from_edges(
        chars: Vec<char>,
        edges: &[(char, char, EdgeType, f64)],
    ) -> Result<VariationGraph, GraphError> {
        let mut index = HashMap::with_capacity(chars.len());
        for (i, &c) in chars.iter().enumerate() {
            if index.insert(c, i as u32).is_some() {
                return Err(GraphError::DuplicateCharacter(c));
            }
        }
        let mut g = VariationGraph {
            adj: vec![Default::default(); chars.len()],
            chars,
            index,
        };
        let mut seen = HashMap::new();
        for &(a, b, t, w) in edges {
            let u = g.index_of(a).ok_or(GraphError::UnknownCharacter(a))?;
            let v = g.index_of(b).ok_or(GraphError::UnknownCharacter(b))?;
            if u == v {
                return Err(GraphError::InvalidEdge(format!("self-loop on '{a}'")));
            }
            if !(w > 0.0 && w <= 1.0) || !w.is_finite() {
                return Err(GraphError::InvalidEdge(format!(
                    "weight {w} for ({a}, {b}, {t}) outside (0, 1]"
                )));
            }
            if seen.insert((u.min(v), u.max(v), t), w).is_some() {
                return Err(GraphError::InvalidEdge(format!("duplicate edge ({a}, {b}, {t})")));
            }
            g.adj[u as usize][t.index()].push((v, w));
            g.adj[v as usize][t.index()].push((u, w));
        }
        g.sort_adjacency();
        Ok(g)
    }

    fn sort_adjacency(&mut self) {
        for per_vertex in &mut self.adj {
            for list in per_vertex {
                list.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
            }
        }
    }

    pub fn len(&self) -> usize {
        self.chars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chars.is_empty()
    }

    pub fn chars(&self) -> &[char] {
        &self.chars
    }

    pub fn char_at(&self, v: u32) -> char {
        self.chars[v as usize]
    }

    pub fn index_of(&self, c: char) -> Option<u32> {
        self.index.get(&c).copied()
    }

    pub fn contains(&self, c: char) -> bool {
        self.index.contains_key(&c)
    }

    /// Neighbors of vertex `v` under one edge type, sorted by descending
    /// weight then neighbor index.
    pub fn adjacency(&self, v: u32, t: EdgeType) -> &[(u32, f64)] {
        &self.adj[v as usize][t.index()]
    }

    /// Number of incident edges across all types.
    pub fn degree(&self, v: u32) -> usize {
        self.adj[v as usize].iter().map(Vec::len).sum()
    }

    pub fn edge_weight(&self, u: u32, v: u32, t: EdgeType) -> Option<f64> {
        self.adjacency(u, t).iter().find(|&&(n, _)| n == v).map(|&(_, w)| w)
    }
}

/// Build the variation graph from encoded character records: for every
/// unordered character pair and every type, keep an edge iff the similarity
/// reaches that type's threshold.
pub fn build_graph(
    records: &[CharacterRecord],
    thresholds: Thresholds,
    pinyin_weights: PinyinWeights,
) -> Result<VariationGraph, GraphError> {
    thresholds.validate()?;
    pinyin_weights.validate()?;
    let chars: Vec<char> = records.iter().map(|r| r.ch).collect();
    let mut edges = Vec::new();
    for i in 0..records.len() {
        for j in i + 1..records.len() {
            let (a, b) = (&records[i], &records[j]);
            let sims = [
                record_pinyin_similarity(a, b, pinyin_weights)?,
                stroke_similarity(&a.stroke, &b.stroke)?,
                zhengma_similarity(&a.zhengma, &b.zhengma)?,
            ];
            for t in EdgeType::ALL {
                let s = sims[t.index()];
                if s >= thresholds.get(t) && s > 0.0 {
                    edges.push((a.ch, b.ch, t, s));
                }
            }
        }
    }
    VariationGraph::from_edges(chars, &edges)
}

/// All edges incident to `c`, optionally restricted to one type, sorted by
/// descending weight with ties broken by neighbor index then type order.
pub fn neighbors(
    g: &VariationGraph,
    c: char,
    t: Option<EdgeType>,
) -> Result<Vec<(char, EdgeType, f64)>, GraphError> {
    let v = g.index_of(c).ok_or(GraphError::UnknownCharacter(c))?;
    let types: &[EdgeType] = match t {
        Some(ref one) => std::slice::from_ref(one),
        None => &EdgeType::ALL,
    };
    let mut out: Vec<(u32, EdgeType, f64)> = Vec::new();
    for &ty in types {
        out.extend(g.adjacency(v, ty).iter().map(|&(n, w)| (n, ty, w)));
    }
    out.sort_by(|a, b| {
        b.2.total_cmp(&a.2)
            .then(a.0.cmp(&b.0))
            .then(a.1.index().cmp(&b.1.index()))
    });
    Ok(out.into_iter().map(|(n, ty, w)| (g.char_at(n), ty, w)).collect())
}

/// Exact counts over the graph.
pub fn graph_stats(g: &VariationGraph) -> GraphStats {
    let mut edges_by_type = [0usize; 3];
    let mut max_degree = 0usize;
    let mut degree_sum = 0usize;
    for v in 0..g.len() as u32 {
        for t in EdgeType::ALL {
            edges_by_type[t.index()] += g.adjacency(v, t).len();
        }
        let d = g.degree(v);
        degree_sum += d;
        max_degree = max_degree.max(d);
    }
    // adjacency stores both directions
    for e in &mut edges_by_type {
        *e /= 2;
    }
    let total_edges = edges_by_type.iter().sum();
    let mean_degree = if g.is_empty() { 0.0 } else { degree_sum as f64 / g.len() as f64 };
    GraphStats {
        vertices: g.len(),
        edges_by_type,
        total_edges,
        mean_degree,
        max_degree,
    }
}

/// Write the graph as a versioned binary: one ASCII header line
/// `RPLG <version> <vertices> <edges>`, then little-endian vertex code
/// points, then one record per undirected edge.
pub fn save_graph(g: &VariationGraph, path: impl AsRef<Path>) -> Result<(), GraphError> {
    let stats = graph_stats(g);
    let mut w = Writer::new(MAGIC, VERSION, &[g.len() as u64, stats.total_edges as u64]);
    for &c in g.chars() {
        w.u32(c as u32);
    }
    for u in 0..g.len() as u32 {
        for t in EdgeType::ALL {
            let mut out: Vec<(u32, f64)> = g
                .adjacency(u, t)
                .iter()
                .copied()
                .filter(|&(v, _)| v > u)
                .collect();
            out.sort_by_key(|&(v, _)| v);
            for (v, weight) in out {
                w.u32(u);
                w.u32(v);
                w.u8(t.index() as u8);
                w.f64(weight);
            }
        }
    }
    w.finish(path)?;
    Ok(())
}

/// Load a graph written by [`save_graph`]; the result is structurally
/// identical, with bit-equal weights.
pub fn load_graph(path: impl AsRef<Path>) -> Result<VariationGraph, GraphError> {
    let (mut r, dims) = Reader::open(path, ARTIFACT, MAGIC, VERSION)?;
    if dims.len() != 2 {
        return Err(r.corrupted("header must carry vertex and edge counts").into());
    }
    let (n, m) = (dims[0] as usize, dims[1] as usize);
    let mut chars = Vec::with_capacity(n);
    for _ in 0..n {
        let cp = r.u32()?;
        chars.push(char::from_u32(cp).ok_or_else(|| r.corrupted("invalid code point"))?);
    }
    let mut edges = Vec::with_capacity(m);
    for _ in 0..m {
        let u = r.u32()? as usize;
        let v = r.u32()? as usize;
        let t = EdgeType::from_index(r.u8()? as usize)
            .ok_or_else(|| r.corrupted("invalid edge type"))?;
        let w = r.f64()?;
        if u >= n || v >= n {
            return Err(r.corrupted("edge endpoint out of range").into());
        }
        edges.push((chars[u], chars[v], t, w));
    }
    r.done()?;
    VariationGraph::from_edges(chars, &edges)
}
