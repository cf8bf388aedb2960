//! Simulated variation attack: disguise the most spam-indicative
//! characters of spam texts by swapping them for variation-graph
//! neighbors, leaving normal texts and all labels untouched.

use std::collections::{HashMap, HashSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::classifier::Label;
use crate::graph::{EdgeType, VariationGraph};
use crate::math::sample_weighted;

use super::PipelineError;

/// How to mutate a dataset.
#[derive(Debug, Clone)]
pub struct MutationSpec {
    /// Per-occurrence replacement probability.
    pub rate: f64,
    /// How many top-ranked characters to target.
    pub targets: usize,
    /// Edge types eligible as disguise relations.
    pub edge_types: Vec<EdgeType>,
    pub seed: u64,
}

/// What a mutation run did.
#[derive(Debug, Clone, PartialEq)]
pub struct MutationReport {
    /// Targeted characters, best-ranked first.
    pub target_chars: Vec<char>,
    /// Occurrences of target characters in spam texts.
    pub eligible: usize,
    /// Occurrences actually replaced.
    pub replaced: usize,
}

impl MutationReport {
    pub fn key_values(&self) -> Vec<(String, String)> {
        vec![
            ("targets".into(), self.target_chars.iter().collect()),
            ("eligible_positions".into(), self.eligible.to_string()),
            ("replaced_positions".into(), self.replaced.to_string()),
            (
                "replaced_fraction".into(),
                if self.eligible == 0 {
                    "0".into()
                } else {
                    format!("{:.4}", self.replaced as f64 / self.eligible as f64)
                },
            ),
        ]
    }
}

/// Ranks characters by spam-class document frequency minus normal-class
/// document frequency (descending; ties toward the lower code point) and
/// keeps the top `targets` that have at least one neighbor under the
/// allowed edge types. Characters outside the graph are skipped.
pub fn select_targets(
    dataset: &[(String, Label)],
    graph: &VariationGraph,
    edge_types: &[EdgeType],
    targets: usize,
) -> Vec<char> {
    let mut df_diff: HashMap<char, i64> = HashMap::new();
    for (text, label) in dataset {
        let delta = match label {
            Label::Spam => 1,
            Label::Normal => -1,
        };
        let unique: HashSet<char> = text.chars().collect();
        for c in unique {
            *df_diff.entry(c).or_insert(0) += delta;
        }
    }
    let mut ranked: Vec<(char, i64)> = df_diff.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    ranked
        .into_iter()
        .map(|(c, _)| c)
        .filter(|&c| {
            graph.index_of(c).is_some_and(|v| {
                edge_types.iter().any(|&t| !graph.adjacency(v, t).is_empty())
            })
        })
        .take(targets)
        .collect()
}

/// Applies the variation attack. Deterministic under the spec's seed;
/// `rate = 0` returns the input unchanged, `rate = 1` replaces every
/// eligible occurrence.
pub fn mutate_corpus(
    dataset: &[(String, Label)],
    graph: &VariationGraph,
    spec: &MutationSpec,
) -> Result<(Vec<(String, Label)>, MutationReport), PipelineError> {
    if dataset.is_empty() {
        return Err(PipelineError::Config("cannot mutate an empty dataset".into()));
    }
    if !(0.0..=1.0).contains(&spec.rate) {
        return Err(PipelineError::Config(format!(
            "mutation rate {} outside [0, 1]",
            spec.rate
        )));
    }
    if spec.edge_types.is_empty() {
        return Err(PipelineError::Config("mutation needs at least one edge type".into()));
    }
    if spec.targets == 0 {
        return Err(PipelineError::Config("mutation needs at least one target".into()));
    }

    let target_chars = select_targets(dataset, graph, &spec.edge_types, spec.targets);
    let target_set: HashSet<char> = target_chars.iter().copied().collect();

    // per target: pooled neighbor list over allowed edge types
    let mut neighbor_table: HashMap<char, (Vec<char>, Vec<f64>)> = HashMap::new();
    for &c in &target_chars {
        let v = graph.index_of(c).expect("targets are filtered to graph members");
        let mut chars = Vec::new();
        let mut weights = Vec::new();
        for &t in &spec.edge_types {
            for &(n, w) in graph.adjacency(v, t) {
                chars.push(graph.char_at(n));
                weights.push(w);
            }
        }
        neighbor_table.insert(c, (chars, weights));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut eligible = 0;
    let mut replaced = 0;
    let mut out = Vec::with_capacity(dataset.len());
    for (text, label) in dataset {
        if *label == Label::Normal {
            out.push((text.clone(), *label));
            continue;
        }
        let mut mutated = String::with_capacity(text.len());
        for c in text.chars() {
            if target_set.contains(&c) {
                eligible += 1;
                if spec.rate > 0.0 && rng.random::<f64>() < spec.rate {
                    let (chars, weights) = &neighbor_table[&c];
                    mutated.push(chars[sample_weighted(&mut rng, weights)]);
                    replaced += 1;
                    continue;
                }
            }
            mutated.push(c);
        }
        out.push((mutated, *label));
    }
    Ok((out, MutationReport { target_chars, eligible, replaced }))
}
