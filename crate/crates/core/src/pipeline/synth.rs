//! Self-contained synthetic benchmark data: a vocabulary of variation
//! groups with consistent synthetic encodings, and labeled corpora in
//! which spam is marked by keyword characters.
//!
//! Characters are assigned in groups. Members of one group share a
//! pinyin syllable (tones differ), near-identical stroke codes and the
//! same radical-level code, so the variation graph connects them under
//! the default thresholds; different groups get distinct syllables and
//! disjoint radical letter pairs, so cross-group edges are rare.
//!
//! The first `keywords` groups are reserved: only their first member
//! (the keyword) ever appears in generated text, and only in spam.
//! Their remaining members exist solely in the vocabulary, which makes
//! them pure disguise characters — a later mutation step can swap
//! keywords for these unseen siblings, producing a test set whose
//! variation characters provably never occur in training data.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::classifier::{save_dataset, Label};
use crate::encoding::{save_encoding_table, CharacterRecord, Syllable};

use super::config::{ConfigPaths, PipelineConfig};
use super::PipelineError;

/// Initial consonants paired with vowel-initial rhymes; combinations are
/// unambiguous to re-parse, so each group keeps its intended syllable.
const SYNTH_INITIALS: [&str; 23] = [
    "zh", "ch", "sh", "b", "p", "m", "f", "d", "t", "n", "l", "g", "k", "h", "j", "q", "x", "r",
    "z", "c", "s", "y", "w",
];
const SYNTH_RHYMES: [&str; 13] =
    ["a", "o", "e", "i", "u", "ai", "ei", "ao", "ou", "an", "en", "ang", "ong"];

/// Shape of the generated vocabulary and corpora.
#[derive(Debug, Clone)]
pub struct SynthOptions {
    /// Number of variation groups.
    pub groups: usize,
    /// Characters per group (at least 2, so every character has a sibling).
    pub group_size: usize,
    /// Number of reserved keyword groups (spam markers).
    pub keywords: usize,
    pub train_texts: usize,
    pub test_texts: usize,
    pub spam_fraction: f64,
    pub min_len: usize,
    pub max_len: usize,
    pub seed: u64,
}

impl Default for SynthOptions {
    fn default() -> SynthOptions {
        SynthOptions {
            groups: 72,
            group_size: 3,
            keywords: 6,
            train_texts: 2000,
            test_texts: 2000,
            spam_fraction: 0.5,
            min_len: 8,
            max_len: 20,
            seed: 11,
        }
    }
}

/// A generated benchmark world.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthData {
    pub records: Vec<CharacterRecord>,
    pub train: Vec<(String, Label)>,
    pub test: Vec<(String, Label)>,
    /// The spam marker characters (first member of each reserved group).
    pub keywords: Vec<char>,
}

fn validate(options: &SynthOptions) -> Result<(), PipelineError> {
    let err = |msg: String| Err(PipelineError::Config(msg));
    let max_groups = SYNTH_INITIALS.len() * SYNTH_RHYMES.len();
    if options.groups == 0 || options.groups > max_groups {
        return err(format!("groups must be in 1..={max_groups}"));
    }
    if options.group_size < 2 || options.group_size > 5 {
        return err("group_size must be in 2..=5 (tones distinguish members)".into());
    }
    if options.keywords == 0 || options.keywords >= options.groups {
        return err("keywords must be at least 1 and leave non-keyword groups for filler".into());
    }
    if options.train_texts == 0 || options.test_texts == 0 {
        return err("train_texts and test_texts must be positive".into());
    }
    if !(options.spam_fraction > 0.0 && options.spam_fraction < 1.0) {
        return err(format!("spam_fraction {} outside (0, 1)", options.spam_fraction));
    }
    if options.min_len < 2 || options.max_len < options.min_len {
        return err("text lengths need min_len >= 2 and max_len >= min_len".into());
    }
    Ok(())
}

/// The `i`-th unordered pair of uppercase letters; groups get disjoint
/// or single-letter-overlapping radical codes, never identical ones.
fn letter_pair(i: usize) -> String {
    let mut n = i;
    for a in 0..26u8 {
        let remaining = 25 - a as usize;
        if n < remaining {
            let b = a + 1 + n as u8;
            return format!("{}{}", (b'A' + a) as char, (b'A' + b) as char);
        }
        n -= remaining;
    }
    unreachable!("letter_pair index out of range");
}

fn build_records(options: &SynthOptions, rng: &mut ChaCha8Rng) -> Vec<CharacterRecord> {
    let mut records = Vec::with_capacity(options.groups * options.group_size);
    for g in 0..options.groups {
        let initial = SYNTH_INITIALS[g % SYNTH_INITIALS.len()];
        let rhyme = SYNTH_RHYMES[g / SYNTH_INITIALS.len()];
        let zhengma = letter_pair(g);
        let base_stroke: String =
            (0..10).map(|_| char::from(b'1' + rng.random_range(0..5u8))).collect();
        for j in 0..options.group_size {
            let ch = char::from_u32(0x4E00 + (g * options.group_size + j) as u32)
                .expect("CJK code point");
            let tone = 1 + (j as u8 % 5);
            let syllable = Syllable::parse(&format!("{initial}{rhyme}{tone}"))
                .expect("synthetic syllables are valid");
            let stroke = format!("{base_stroke}{}", char::from(b'1' + j as u8 % 5));
            records.push(
                CharacterRecord::new(ch, vec![syllable], stroke, zhengma.clone())
                    .expect("synthetic records are valid"),
            );
        }
    }
    records
}

fn generate_split(
    count: usize,
    options: &SynthOptions,
    keywords: &[char],
    filler: &[char],
    rng: &mut ChaCha8Rng,
) -> Vec<(String, Label)> {
    let spam_count = ((count as f64) * options.spam_fraction).round() as usize;
    let mut texts = Vec::with_capacity(count);
    for i in 0..count {
        let label = if i < spam_count { Label::Spam } else { Label::Normal };
        let len = rng.random_range(options.min_len..=options.max_len);
        let mut chars: Vec<char> =
            (0..len).map(|_| filler[rng.random_range(0..filler.len())]).collect();
        if label == Label::Spam {
            let occurrences = rng.random_range(1..=3usize);
            for _ in 0..occurrences {
                let kw = keywords[rng.random_range(0..keywords.len())];
                let pos = rng.random_range(0..=chars.len());
                chars.insert(pos, kw);
            }
        }
        texts.push((chars.into_iter().collect(), label));
    }
    // deterministic shuffle so labels are not ordered by position
    for i in (1..texts.len()).rev() {
        texts.swap(i, rng.random_range(0..=i));
    }
    texts
}

/// Generates the full synthetic world deterministically from the seed.
pub fn generate_synthetic(options: &SynthOptions) -> Result<SynthData, PipelineError> {
    validate(options)?;
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let records = build_records(options, &mut rng);

    let keywords: Vec<char> =
        (0..options.keywords).map(|g| records[g * options.group_size].ch).collect();
    // Reserved groups contribute no filler at all: their non-keyword
    // members must stay unseen so mutation introduces genuinely novel
    // characters.
    let filler: Vec<char> = records[options.keywords * options.group_size..]
        .iter()
        .map(|r| r.ch)
        .collect();

    let train = generate_split(options.train_texts, options, &keywords, &filler, &mut rng);
    let test = generate_split(options.test_texts, options, &keywords, &filler, &mut rng);
    Ok(SynthData { records, train, test, keywords })
}

/// Desk-scale hyperparameters that run the full pipeline on the
/// synthetic world in minutes while preserving every mechanism.
pub fn desk_scale_config(options: &SynthOptions) -> PipelineConfig {
    PipelineConfig {
        seed: options.seed,
        d: 24,
        layers: 2,
        families: options.groups,
        gibbs_sweeps: 30,
        walks_per_vertex: 6,
        walk_length: 40,
        pair_epochs: 8,
        text_epochs: 3,
        lm_epochs: 2,
        lm_negatives: 5,
        // At this scale every variant underfits; a longer, slightly
        // cooler run without dropout trains all four to convergence.
        train_epochs: 16,
        train_learning_rate: 0.2,
        dropout: 0.0,
        conv_filters: 32,
        mutation_targets: options.keywords,
        ..PipelineConfig::default()
    }
}

/// Files written by [`write_synthetic`].
#[derive(Debug, Clone)]
pub struct SynthFiles {
    pub encoding_table: PathBuf,
    pub train_corpus: PathBuf,
    pub test_corpus: PathBuf,
    pub config: PathBuf,
}

/// Writes the encoding table, the two corpora and a ready-to-run config
/// (`ripple.conf`, relative paths, desk-scale settings) into `dir`.
pub fn write_synthetic(
    dir: &Path,
    options: &SynthOptions,
) -> Result<(SynthData, SynthFiles), PipelineError> {
    let data = generate_synthetic(options)?;
    std::fs::create_dir_all(dir).map_err(|e| PipelineError::Io {
        path: dir.display().to_string(),
        source: e,
    })?;
    let files = SynthFiles {
        encoding_table: dir.join("encoding.tsv"),
        train_corpus: dir.join("train.tsv"),
        test_corpus: dir.join("test.tsv"),
        config: dir.join("ripple.conf"),
    };
    save_encoding_table(&data.records, &files.encoding_table)?;
    save_dataset(&data.train, &files.train_corpus)?;
    save_dataset(&data.test, &files.test_corpus)?;
    let config_text = desk_scale_config(options).to_file_text(&ConfigPaths {
        encoding_table: "encoding.tsv".into(),
        train_corpus: "train.tsv".into(),
        test_corpus: "test.tsv".into(),
        artifacts_dir: "artifacts".into(),
    });
    std::fs::write(&files.config, config_text).map_err(|e| PipelineError::Io {
        path: files.config.display().to_string(),
        source: e,
    })?;
    Ok((data, files))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::build_graph;
    use std::collections::HashSet;

    fn small() -> SynthOptions {
        SynthOptions {
            groups: 8,
            group_size: 3,
            keywords: 2,
            train_texts: 60,
            test_texts: 40,
            spam_fraction: 0.5,
            min_len: 5,
            max_len: 9,
            seed: 5,
        }
    }

    #[test]
    fn vocabulary_and_corpus_have_the_requested_shape() {
        let data = generate_synthetic(&small()).unwrap();
        assert_eq!(data.records.len(), 24);
        assert_eq!(data.train.len(), 60);
        assert_eq!(data.test.len(), 40);
        assert_eq!(data.keywords.len(), 2);
        let spam = data.train.iter().filter(|(_, l)| *l == Label::Spam).count();
        assert_eq!(spam, 30);
        for (text, _) in data.train.iter().chain(&data.test) {
            let n = text.chars().count();
            // spam texts carry up to 3 extra keyword insertions
            assert!((5..=12).contains(&n), "length {n}");
        }
    }

    #[test]
    fn groups_form_cliques_under_default_thresholds() {
        let data = generate_synthetic(&small()).unwrap();
        let config = PipelineConfig::default();
        let graph = build_graph(
            &data.records,
            config.thresholds(),
            config.pinyin_weights().unwrap(),
        )
        .unwrap();
        let gs = small().group_size;
        for g in 0..small().groups {
            let members: Vec<char> =
                (0..gs).map(|j| data.records[g * gs + j].ch).collect();
            for a in 0..gs {
                for b in a + 1..gs {
                    let u = graph.index_of(members[a]).unwrap();
                    let v = graph.index_of(members[b]).unwrap();
                    assert!(
                        graph.edge_weight(u, v, crate::graph::EdgeType::Pinyin).is_some(),
                        "group {g}: members share a syllable family"
                    );
                    assert!(
                        graph.edge_weight(u, v, crate::graph::EdgeType::Zhengma).is_some(),
                        "group {g}: members share a radical code"
                    );
                    assert!(
                        graph.edge_weight(u, v, crate::graph::EdgeType::Stroke).is_some(),
                        "group {g}: members have near-identical stroke codes"
                    );
                }
            }
        }
        // cross-group pinyin and radical edges are impossible by design
        let u = graph.index_of(data.records[0].ch).unwrap();
        let v = graph.index_of(data.records[gs].ch).unwrap();
        assert!(graph.edge_weight(u, v, crate::graph::EdgeType::Pinyin).is_none());
        assert!(graph.edge_weight(u, v, crate::graph::EdgeType::Zhengma).is_none());
    }

    #[test]
    fn keywords_mark_spam_and_reserved_siblings_never_appear() {
        let options = small();
        let data = generate_synthetic(&options).unwrap();
        let keyword_set: HashSet<char> = data.keywords.iter().copied().collect();
        let reserved: HashSet<char> = (0..options.keywords)
            .flat_map(|g| {
                (1..options.group_size).map(move |j| (g, j))
            })
            .map(|(g, j)| data.records[g * options.group_size + j].ch)
            .collect();
        for (text, label) in data.train.iter().chain(&data.test) {
            let chars: HashSet<char> = text.chars().collect();
            let has_keyword = chars.iter().any(|c| keyword_set.contains(c));
            match label {
                Label::Spam => assert!(has_keyword, "spam must contain a keyword: {text}"),
                Label::Normal => assert!(!has_keyword, "normal must not: {text}"),
            }
            assert!(
                chars.is_disjoint(&reserved),
                "reserved disguise characters may never appear in generated text"
            );
        }
    }

    #[test]
    fn generation_is_deterministic_and_seed_sensitive() {
        let a = generate_synthetic(&small()).unwrap();
        let b = generate_synthetic(&small()).unwrap();
        assert_eq!(a, b);
        let c = generate_synthetic(&SynthOptions { seed: 6, ..small() }).unwrap();
        assert_ne!(a.train, c.train);
    }

    #[test]
    fn default_scale_meets_the_benchmark_floor() {
        let d = SynthOptions::default();
        assert!(d.groups * d.group_size >= 200);
        assert!(d.train_texts >= 2000 && d.test_texts >= 2000);
    }

    #[test]
    fn bad_options_are_rejected() {
        assert!(generate_synthetic(&SynthOptions { groups: 0, ..small() }).is_err());
        assert!(generate_synthetic(&SynthOptions { group_size: 1, ..small() }).is_err());
        assert!(generate_synthetic(&SynthOptions { keywords: 8, ..small() }).is_err());
        assert!(generate_synthetic(&SynthOptions { spam_fraction: 0.0, ..small() }).is_err());
        assert!(generate_synthetic(&SynthOptions { min_len: 9, max_len: 5, ..small() }).is_err());
    }

    #[test]
    fn written_files_are_consistent_and_config_loads() {
        let dir = tempfile::tempdir().unwrap();
        let (data, files) = write_synthetic(dir.path(), &small()).unwrap();
        let records = crate::encoding::load_encoding_table(&files.encoding_table).unwrap();
        assert_eq!(records, data.records);
        let train = crate::classifier::load_dataset(&files.train_corpus).unwrap();
        assert_eq!(train, data.train);
        let config = PipelineConfig::load(&files.config, &[]).unwrap();
        assert_eq!(config.encoding_table, files.encoding_table);
        assert_eq!(config.families, small().groups);
        // every generated character is in the encoding table
        let table: HashSet<char> = records.iter().map(|r| r.ch).collect();
        for (text, _) in train.iter().chain(&data.test) {
            assert!(text.chars().all(|c| table.contains(&c)));
        }
    }

    #[test]
    fn letter_pairs_are_distinct() {
        let mut seen = HashSet::new();
        for i in 0..325 {
            assert!(seen.insert(letter_pair(i)), "pair {i} repeated");
        }
    }
}
