//! Character encoding tables and pairwise variation similarities.
//!
//! Every character carries three codes: pinyin syllables (phonetic), a
//! stroke-order digit string and a Zhengma letter code (both glyph). Each
//! code family induces a symmetric similarity in `[0, 1]`; the variation
//! graph uses those similarities as edge weights.

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::path::Path;

use thiserror::Error;

/// Errors from table parsing and similarity computation.
#[derive(Debug, Error)]
pub enum EncodingError {
    #[error("line {line}: {msg}")]
    Line { line: usize, msg: String },
    #[error("line {line}: duplicate character '{ch}'")]
    DuplicateCharacter { line: usize, ch: char },
    #[error("invalid syllable '{syllable}': {msg}")]
    InvalidSyllable { syllable: String, msg: String },
    #[error("invalid character record: {0}")]
    InvalidRecord(String),
    #[error("similarity input must be non-empty")]
    EmptyCode,
    #[error("invalid pinyin weights: {0}")]
    InvalidWeights(String),
    #[error("failed to read '{path}': {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Mandarin initials, longest first so `zh`/`ch`/`sh` win over `z`/`c`/`s`.
const INITIALS: [&str; 23] = [
    "zh", "ch", "sh", "b", "p", "m", "f", "d", "t", "n", "l", "g", "k", "h", "j", "q", "x", "r",
    "z", "c", "s", "y", "w",
];

/// One pinyin syllable: initial (consonant, possibly empty), rhyme (the
/// final/vowel part) and tone 1-5, where 5 is the neutral tone.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Syllable {
    pub initial: String,
    pub rhyme: String,
    pub tone: u8,
}

impl Syllable {
    /// Parse numbered pinyin such as `luo3`. A missing tone digit means the
    /// neutral tone 5.
    pub fn parse(s: &str) -> Result<Syllable, EncodingError> {
        let invalid = |msg: &str| EncodingError::InvalidSyllable {
            syllable: s.to_string(),
            msg: msg.to_string(),
        };
        if s.is_empty() {
            return Err(invalid("empty syllable"));
        }
        let (body, tone) = match s.chars().last().unwrap().to_digit(10) {
            Some(d @ 1..=5) => (&s[..s.len() - 1], d as u8),
            Some(_) => return Err(invalid("tone digit must be 1-5")),
            None => (s, 5),
        };
        if body.is_empty() {
            return Err(invalid("missing syllable body"));
        }
        if !body.chars().all(|c| c.is_ascii_lowercase() || c == 'ü' || c == 'v') {
            return Err(invalid("syllable body must be lowercase letters"));
        }
        let initial = INITIALS
            .iter()
            .find(|i| body.starts_with(**i) && body.len() > i.len())
            .map(|i| i.to_string())
            .unwrap_or_default();
        let rhyme = body[initial.len()..].to_string();
        Ok(Syllable { initial, rhyme, tone })
    }
}

impl fmt::Display for Syllable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}{}", self.initial, self.rhyme, self.tone)
    }
}

/// One character's pinyin readings (polyphones allowed) plus its stroke and
/// Zhengma codes.
#[derive(Debug, Clone, PartialEq)]
pub struct CharacterRecord {
    pub ch: char,
    pub pinyins: Vec<Syllable>,
    pub stroke: String,
    pub zhengma: String,
}

impl CharacterRecord {
    pub fn new(
        ch: char,
        pinyins: Vec<Syllable>,
        stroke: impl Into<String>,
        zhengma: impl Into<String>,
    ) -> Result<CharacterRecord, EncodingError> {
        let stroke = stroke.into();
        let zhengma = zhengma.into();
        if pinyins.is_empty() {
            return Err(EncodingError::InvalidRecord(format!(
                "'{ch}' has no pinyin syllables"
            )));
        }
        if stroke.is_empty() || !stroke.chars().all(|c| ('1'..='5').contains(&c)) {
            return Err(EncodingError::InvalidRecord(format!(
                "'{ch}' stroke code must be non-empty digits 1-5"
            )));
        }
        if zhengma.is_empty() || !zhengma.chars().all(|c| c.is_ascii_uppercase()) {
            return Err(EncodingError::InvalidRecord(format!(
                "'{ch}' zhengma code must be non-empty uppercase A-Z"
            )));
        }
        Ok(CharacterRecord { ch, pinyins, stroke, zhengma })
    }
}

/// Load a 4-column TSV table: `char TAB pinyin1[,pinyin2...] TAB stroke TAB zhengma`.
/// Blank lines are skipped; duplicate characters are rejected.
pub fn load_encoding_table(path: impl AsRef<Path>) -> Result<Vec<CharacterRecord>, EncodingError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| EncodingError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_encoding_table(&text)
}

/// Parse the TSV table format from an in-memory string. Line numbers in
/// errors are 1-based.
pub fn parse_encoding_table(text: &str) -> Result<Vec<CharacterRecord>, EncodingError> {
    let mut records = Vec::new();
    let mut seen = HashSet::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = raw.split('\t').collect();
        if fields.len() != 4 {
            return Err(EncodingError::Line {
                line,
                msg: format!("expected 4 tab-separated fields, got {}", fields.len()),
            });
        }
        let mut chars = fields[0].chars();
        let ch = match (chars.next(), chars.next()) {
            (Some(c), None) => c,
            _ => {
                return Err(EncodingError::Line {
                    line,
                    msg: format!("character field '{}' must be a single character", fields[0]),
                })
            }
        };
        if !seen.insert(ch) {
            return Err(EncodingError::DuplicateCharacter { line, ch });
        }
        let pinyins = fields[1]
            .split(',')
            .map(Syllable::parse)
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| EncodingError::Line { line, msg: e.to_string() })?;
        let record = CharacterRecord::new(ch, pinyins, fields[2], fields[3])
            .map_err(|e| EncodingError::Line { line, msg: e.to_string() })?;
        records.push(record);
    }
    Ok(records)
}

/// Write records in the same TSV format `load_encoding_table` reads.
pub fn save_encoding_table(
    records: &[CharacterRecord],
    path: impl AsRef<Path>,
) -> Result<(), EncodingError> {
    let path = path.as_ref();
    let mut out = String::new();
    for r in records {
        let pinyins: Vec<String> = r.pinyins.iter().map(|s| s.to_string()).collect();
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\n",
            r.ch,
            pinyins.join(","),
            r.stroke,
            r.zhengma
        ));
    }
    fs::write(path, out).map_err(|source| EncodingError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Component weights for the pinyin similarity. They must be non-negative
/// and sum to 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PinyinWeights {
    pub initial: f64,
    pub rhyme: f64,
    pub tone: f64,
}

impl Default for PinyinWeights {
    fn default() -> Self {
        PinyinWeights { initial: 0.4, rhyme: 0.4, tone: 0.2 }
    }
}

impl PinyinWeights {
    pub fn new(initial: f64, rhyme: f64, tone: f64) -> Result<PinyinWeights, EncodingError> {
        let w = PinyinWeights { initial, rhyme, tone };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<(), EncodingError> {
        if self.initial < 0.0 || self.rhyme < 0.0 || self.tone < 0.0 {
            return Err(EncodingError::InvalidWeights(
                "components must be non-negative".to_string(),
            ));
        }
        let sum = self.initial + self.rhyme + self.tone;
        if (sum - 1.0).abs() > 1e-9 {
            return Err(EncodingError::InvalidWeights(format!(
                "components must sum to 1, got {sum}"
            )));
        }
        Ok(())
    }
}

/// Weighted component match between two syllables: each of initial, rhyme
/// and tone contributes its weight when equal.
pub fn pinyin_similarity(
    a: &Syllable,
    b: &Syllable,
    weights: PinyinWeights,
) -> Result<f64, EncodingError> {
    weights.validate()?;
    let mut score = 0.0;
    if a.initial == b.initial {
        score += weights.initial;
    }
    if a.rhyme == b.rhyme {
        score += weights.rhyme;
    }
    if a.tone == b.tone {
        score += weights.tone;
    }
    Ok(score)
}

/// Pinyin similarity of two characters: the maximum over their syllable
/// pairs, so one shared reading is enough for a phonetic match.
pub fn record_pinyin_similarity(
    a: &CharacterRecord,
    b: &CharacterRecord,
    weights: PinyinWeights,
) -> Result<f64, EncodingError> {
    weights.validate()?;
    let mut best = 0.0f64;
    for sa in &a.pinyins {
        for sb in &b.pinyins {
            best = best.max(pinyin_similarity(sa, sb, weights)?);
        }
    }
    Ok(best)
}

/// Stroke-code similarity: the mean of the longest-common-substring and
/// longest-common-subsequence lengths, each normalized by the longer code.
pub fn stroke_similarity(a: &str, b: &str) -> Result<f64, EncodingError> {
    if a.is_empty() || b.is_empty() {
        return Err(EncodingError::EmptyCode);
    }
    let (a, b) = (a.as_bytes(), b.as_bytes());
    let longest = a.len().max(b.len()) as f64;
    let substr = longest_common_substring(a, b) as f64;
    let subseq = longest_common_subsequence(a, b) as f64;
    Ok((substr / longest + subseq / longest) / 2.0)
}

/// Zhengma similarity: Jaccard index over the sets of code letters.
pub fn zhengma_similarity(a: &str, b: &str) -> Result<f64, EncodingError> {
    if a.is_empty() || b.is_empty() {
        return Err(EncodingError::EmptyCode);
    }
    let sa: HashSet<char> = a.chars().collect();
    let sb: HashSet<char> = b.chars().collect();
    let inter = sa.intersection(&sb).count() as f64;
    let union = sa.union(&sb).count() as f64;
    Ok(inter / union)
}

fn longest_common_substring(a: &[u8], b: &[u8]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    let mut best = 0;
    for &ca in a {
        for (j, &cb) in b.iter().enumerate() {
            cur[j + 1] = if ca == cb { prev[j] + 1 } else { 0 };
            best = best.max(cur[j + 1]);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    best
}

fn longest_common_subsequence(a: &[u8], b: &[u8]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for &ca in a {
        for (j, &cb) in b.iter().enumerate() {
            cur[j + 1] = if ca == cb { prev[j] + 1 } else { prev[j + 1].max(cur[j]) };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}
