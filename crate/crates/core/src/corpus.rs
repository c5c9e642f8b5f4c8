//! Annotated dialogue corpora: data model, JSON-lines I/O, the combined
//! `word|POS` vocabulary and inverse-frequency class weights.
//!
//! On disk a corpus is a directory holding `corpus.jsonl` (one dialogue per
//! line) and a `meta.json` sidecar.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tagset::{self, parse_tag, StructureError, Tag, TagError, NUM_TAGS};

pub const CORPUS_FILE: &str = "corpus.jsonl";
pub const META_FILE: &str = "meta.json";

/// Separator between word and POS in a combined token.
pub const COMBINED_SEP: char = '|';

pub const PAD_ID: u32 = 0;
pub const UNK_ID: u32 = 1;
pub const EOS_ID: u32 = 2;
const RESERVED: [&str; 3] = ["<pad>", "<unk>", "</s>"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    #[serde(rename = "w")]
    pub word: String,
    #[serde(rename = "p")]
    pub pos: String,
    #[serde(rename = "t", default, skip_serializing_if = "Option::is_none")]
    pub tag: Option<Tag>,
}

impl Token {
    pub fn new(word: impl Into<String>, pos: impl Into<String>, tag: Option<Tag>) -> Self {
        Token {
            word: word.into(),
            pos: pos.into(),
            tag,
        }
    }

    pub fn combined(&self) -> String {
        format!("{}{}{}", self.word, COMBINED_SEP, self.pos)
    }

    /// Splits a `word|POS` string. The split is on the last separator, so a
    /// word can never contain one.
    pub fn parse_combined(text: &str) -> Option<Token> {
        let (word, pos) = text.rsplit_once(COMBINED_SEP)?;
        if word.is_empty() || pos.is_empty() || word.contains(COMBINED_SEP) {
            return None;
        }
        Some(Token::new(word, pos, None))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Speaker {
    Usr,
    Sys,
}

/// Disfluency phenomena the generator can mix into a user turn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Phenomenon {
    Correction,
    PpRestart,
    ClRestart,
    Hesitation,
}

impl Phenomenon {
    pub fn is_restart(self) -> bool {
        matches!(self, Phenomenon::PpRestart | Phenomenon::ClRestart)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Utterance {
    pub speaker: Speaker,
    pub tokens: Vec<Token>,
    /// Fluent reference rendering, when the utterance was made disfluent by
    /// the generator.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fluent: Option<Vec<Token>>,
    /// Phenomena applied by the generator.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub applied: Vec<Phenomenon>,
}

impl Utterance {
    pub fn new(speaker: Speaker, tokens: Vec<Token>) -> Self {
        Utterance {
            speaker,
            tokens,
            fluent: None,
            applied: Vec::new(),
        }
    }

    pub fn words(&self) -> Vec<&str> {
        self.tokens.iter().map(|t| t.word.as_str()).collect()
    }

    pub fn is_tagged(&self) -> bool {
        !self.tokens.is_empty() && self.tokens.iter().all(|t| t.tag.is_some())
    }

    /// Gold tags, if every token has one.
    pub fn gold_tags(&self) -> Option<Vec<Tag>> {
        self.tokens.iter().map(|t| t.tag).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dialogue {
    pub id: String,
    pub utterances: Vec<Utterance>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CorpusMeta {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_hash: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Generator configuration that produced the corpus.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<serde_json::Value>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub stats: BTreeMap<String, u64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Corpus {
    pub meta: CorpusMeta,
    pub dialogues: Vec<Dialogue>,
}

impl Corpus {
    pub fn new(name: impl Into<String>, dialogues: Vec<Dialogue>) -> Self {
        Corpus {
            meta: CorpusMeta {
                name: name.into(),
                ..CorpusMeta::default()
            },
            dialogues,
        }
    }

    pub fn utterances(&self) -> impl Iterator<Item = &Utterance> {
        self.dialogues.iter().flat_map(|d| d.utterances.iter())
    }

    pub fn num_tokens(&self) -> usize {
        self.utterances().map(|u| u.tokens.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.utterances().all(|u| u.tokens.is_empty())
    }

    /// Splits by dialogue into consecutive parts with the given fractions.
    /// The last part takes the remainder.
    pub fn split(&self, fractions: &[f64]) -> Vec<Corpus> {
        let n = self.dialogues.len();
        let mut parts = Vec::with_capacity(fractions.len());
        let mut start = 0;
        let mut acc = 0.0;
        for (i, f) in fractions.iter().enumerate() {
            acc += f;
            let end = if i + 1 == fractions.len() {
                n
            } else {
                ((acc * n as f64).round() as usize).clamp(start, n)
            };
            let mut part = Corpus {
                meta: self.meta.clone(),
                dialogues: self.dialogues[start..end].to_vec(),
            };
            part.meta.name = format!("{}[{}]", self.meta.name, i);
            parts.push(part);
            start = end;
        }
        parts
    }
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: invalid JSON: {source}")]
    Json {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("line {line}: field {field}: {source}")]
    Tag {
        line: usize,
        field: String,
        #[source]
        source: TagError,
    },
    #[error("line {line}: field {field}: {source}")]
    Structure {
        line: usize,
        field: String,
        #[source]
        source: StructureError,
    },
    #[error("line {line}: field {field}: {message}")]
    Field {
        line: usize,
        field: String,
        message: String,
    },
    #[error("line {line}: duplicate dialogue id {id:?}")]
    DuplicateId { line: usize, id: String },
    #[error("{path}: invalid metadata: {source}")]
    Meta {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CorpusError + '_ {
    move |source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    }
}

// Wire form: tags stay strings so that bad ones can be reported with the
// line and field they came from.
#[derive(Deserialize)]
struct RawToken {
    w: String,
    p: String,
    #[serde(default)]
    t: Option<String>,
}

#[derive(Deserialize)]
struct RawUtterance {
    speaker: Speaker,
    tokens: Vec<RawToken>,
    #[serde(default)]
    fluent: Option<Vec<RawToken>>,
    #[serde(default)]
    applied: Vec<Phenomenon>,
}

#[derive(Deserialize)]
struct RawDialogue {
    id: String,
    utterances: Vec<RawUtterance>,
}

fn convert_token(raw: RawToken, line: usize, field: &str) -> Result<Token, CorpusError> {
    let bad = |message: &str| CorpusError::Field {
        line,
        field: field.to_string(),
        message: message.to_string(),
    };
    if raw.w.is_empty() {
        return Err(bad("empty word"));
    }
    if raw.w.contains(COMBINED_SEP) || raw.p.contains(COMBINED_SEP) {
        return Err(bad("word or POS contains the reserved '|' separator"));
    }
    if raw.p.is_empty() {
        return Err(bad("empty POS"));
    }
    let tag = match raw.t {
        Some(t) => Some(parse_tag(&t).map_err(|source| CorpusError::Tag {
            line,
            field: format!("{field}.t"),
            source,
        })?),
        None => None,
    };
    Ok(Token {
        word: raw.w,
        pos: raw.p,
        tag,
    })
}

/// Checks the invariants of one utterance: tags all-or-nothing and resolvable.
pub fn validate_utterance(utt: &Utterance) -> Result<(), (String, String)> {
    let tagged = utt.tokens.iter().filter(|t| t.tag.is_some()).count();
    if tagged != 0 && tagged != utt.tokens.len() {
        return Err(("tokens".into(), "some tokens are tagged and some are not".into()));
    }
    if let Some(tags) = utt.gold_tags() {
        if let Err(e) = tagset::resolve_structures(&tags) {
            return Err(("tokens".into(), e.to_string()));
        }
    }
    Ok(())
}

fn convert_dialogue(raw: RawDialogue, line: usize) -> Result<Dialogue, CorpusError> {
    let mut utterances = Vec::with_capacity(raw.utterances.len());
    for (ui, ru) in raw.utterances.into_iter().enumerate() {
        let base = format!("utterances[{ui}]");
        let tokens = ru
            .tokens
            .into_iter()
            .enumerate()
            .map(|(ti, t)| convert_token(t, line, &format!("{base}.tokens[{ti}]")))
            .collect::<Result<Vec<_>, _>>()?;
        let fluent = match ru.fluent {
            Some(f) => Some(
                f.into_iter()
                    .enumerate()
                    .map(|(ti, t)| convert_token(t, line, &format!("{base}.fluent[{ti}]")))
                    .collect::<Result<Vec<_>, _>>()?,
            ),
            None => None,
        };
        let utt = Utterance {
            speaker: ru.speaker,
            tokens,
            fluent,
            applied: ru.applied,
        };
        if let Some(tags) = utt.gold_tags() {
            tagset::resolve_structures(&tags).map_err(|source| CorpusError::Structure {
                line,
                field: format!("{base}.tokens"),
                source,
            })?;
        } else if utt.tokens.iter().any(|t| t.tag.is_some()) {
            return Err(CorpusError::Field {
                line,
                field: format!("{base}.tokens"),
                message: "some tokens are tagged and some are not".into(),
            });
        }
        utterances.push(utt);
    }
    Ok(Dialogue {
        id: raw.id,
        utterances,
    })
}

/// Parses dialogues from JSON-lines text. Blank lines are skipped.
pub fn parse_jsonl(reader: impl BufRead) -> Result<Vec<Dialogue>, CorpusError> {
    let mut dialogues = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(io_err(Path::new("<input>")))?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawDialogue = serde_json::from_str(&line).map_err(|source| CorpusError::Json {
            line: line_no,
            source,
        })?;
        let d = convert_dialogue(raw, line_no)?;
        if !seen.insert(d.id.clone()) {
            return Err(CorpusError::DuplicateId {
                line: line_no,
                id: d.id,
            });
        }
        dialogues.push(d);
    }
    Ok(dialogues)
}

/// Reads a corpus from a directory (`corpus.jsonl` + optional `meta.json`) or
/// from a `.jsonl` file, in which case a `meta.json` next to it is used if present.
pub fn read_corpus(path: impl AsRef<Path>) -> Result<Corpus, CorpusError> {
    let path = path.as_ref();
    let (data, meta_path) = if path.is_dir() {
        (path.join(CORPUS_FILE), path.join(META_FILE))
    } else {
        let dir = path.parent().unwrap_or(Path::new("."));
        (path.to_path_buf(), dir.join(META_FILE))
    };
    let file = fs::File::open(&data).map_err(io_err(&data))?;
    let dialogues = parse_jsonl(BufReader::new(file)).map_err(|e| match e {
        CorpusError::Io { source, .. } => CorpusError::Io { path: data.clone(), source },
        other => other,
    })?;
    let meta = if meta_path.is_file() {
        let text = fs::read_to_string(&meta_path).map_err(io_err(&meta_path))?;
        serde_json::from_str(&text).map_err(|source| CorpusError::Meta {
            path: meta_path.clone(),
            source,
        })?
    } else {
        CorpusMeta {
            name: data
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default(),
            ..CorpusMeta::default()
        }
    };
    Ok(Corpus { meta, dialogues })
}

pub fn write_jsonl(dialogues: &[Dialogue], mut w: impl Write) -> std::io::Result<()> {
    for d in dialogues {
        serde_json::to_writer(&mut w, d)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

/// Writes `corpus.jsonl` and `meta.json` into `dir`, creating it if needed.
pub fn write_corpus(corpus: &Corpus, dir: impl AsRef<Path>) -> Result<(), CorpusError> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let data = dir.join(CORPUS_FILE);
    let file = fs::File::create(&data).map_err(io_err(&data))?;
    let mut w = BufWriter::new(file);
    write_jsonl(&corpus.dialogues, &mut w).map_err(io_err(&data))?;
    w.flush().map_err(io_err(&data))?;
    let meta_path = dir.join(META_FILE);
    let mut meta = serde_json::to_string_pretty(&corpus.meta).expect("metadata serializes");
    meta.push('\n');
    fs::write(&meta_path, meta).map_err(io_err(&meta_path))?;
    Ok(())
}

/// Combined `word|POS` vocabulary with reserved PAD/UNK/EOS ids 0/1/2.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "VocabularyRepr", into = "VocabularyRepr")]
pub struct Vocabulary {
    entries: Vec<String>,
    counts: Vec<u64>,
    index: HashMap<String, u32>,
}

#[derive(Serialize, Deserialize)]
struct VocabularyRepr {
    entries: Vec<String>,
    counts: Vec<u64>,
}

impl From<VocabularyRepr> for Vocabulary {
    fn from(r: VocabularyRepr) -> Self {
        Vocabulary::from_parts(r.entries, r.counts)
    }
}

impl From<Vocabulary> for VocabularyRepr {
    fn from(v: Vocabulary) -> Self {
        VocabularyRepr {
            entries: v.entries,
            counts: v.counts,
        }
    }
}

impl Vocabulary {
    fn from_parts(entries: Vec<String>, counts: Vec<u64>) -> Self {
        let index = entries
            .iter()
            .enumerate()
            .map(|(i, e)| (e.clone(), i as u32))
            .collect();
        Vocabulary {
            entries,
            counts,
            index,
        }
    }

    /// Builds from `(combined token, count)` pairs, keeping those with
    /// `count >= min_count`, ordered by descending count then token.
    pub fn from_counts<I: IntoIterator<Item = (String, u64)>>(counts: I, min_count: u64) -> Self {
        let mut kept: Vec<(String, u64)> = counts
            .into_iter()
            .filter(|(tok, c)| *c >= min_count && !RESERVED.contains(&tok.as_str()))
            .collect();
        kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        let mut entries: Vec<String> = RESERVED.iter().map(|s| s.to_string()).collect();
        let mut cs = vec![0; RESERVED.len()];
        for (tok, c) in kept {
            entries.push(tok);
            cs.push(c);
        }
        Vocabulary::from_parts(entries, cs)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn id(&self, combined: &str) -> u32 {
        self.index.get(combined).copied().unwrap_or(UNK_ID)
    }

    pub fn lookup(&self, combined: &str) -> Option<u32> {
        self.index.get(combined).copied()
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.entries.get(id as usize).map(String::as_str)
    }

    pub fn count(&self, id: u32) -> Option<u64> {
        self.counts.get(id as usize).copied()
    }

    pub fn entries(&self) -> &[String] {
        &self.entries
    }

    pub fn token_id(&self, token: &Token) -> u32 {
        self.id(&token.combined())
    }

    pub fn encode_tokens(&self, tokens: &[Token]) -> Vec<u32> {
        tokens.iter().map(|t| self.token_id(t)).collect()
    }

    pub fn decode(&self, ids: &[u32]) -> Vec<String> {
        ids.iter()
            .map(|&i| self.token(i).unwrap_or(RESERVED[UNK_ID as usize]).to_string())
            .collect()
    }
}

/// Counts combined tokens of every utterance in the corpus.
pub fn count_tokens(corpus: &Corpus) -> BTreeMap<String, u64> {
    let mut counts = BTreeMap::new();
    for t in corpus.utterances().flat_map(|u| u.tokens.iter()) {
        *counts.entry(t.combined()).or_insert(0) += 1;
    }
    counts
}

pub fn build_vocabulary(corpus: &Corpus, min_count: u64) -> Vocabulary {
    Vocabulary::from_counts(count_tokens(corpus), min_count)
}

/// Token ids of the utterance followed by EOS, which is the language-model
/// target of the last word.
pub fn encode_utterance(vocab: &Vocabulary, utt: &Utterance) -> Vec<u32> {
    let mut ids = vocab.encode_tokens(&utt.tokens);
    ids.push(EOS_ID);
    ids
}

/// Constant rescaling applied to `C_k^-gamma`. Ratios between classes are
/// unchanged; only the size of the main loss relative to the L2 term and the
/// step size differ.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WeightScale {
    /// `C_k^-gamma` as is.
    Raw,
    /// Average weight per training token is 1.
    UnitMean,
    /// The most frequent class has weight 1.
    #[default]
    Majority,
}

/// Inverse-frequency class weights `W_k = C_k^-gamma` over the 27 tags.
/// Classes that never occur get weight 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassWeights {
    pub gamma: f64,
    pub counts: Vec<u64>,
    pub weights: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum WeightError {
    #[error("smoothing exponent gamma must be positive and finite, got {0}")]
    BadGamma(f64),
    #[error("expected {NUM_TAGS} class counts, got {0}")]
    WrongLength(usize),
}

impl ClassWeights {
    pub fn from_counts(counts: &[u64], gamma: f64) -> Result<Self, WeightError> {
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(WeightError::BadGamma(gamma));
        }
        if counts.len() != NUM_TAGS {
            return Err(WeightError::WrongLength(counts.len()));
        }
        let weights = counts
            .iter()
            .map(|&c| if c == 0 { 0.0 } else { (c as f64).powf(-gamma) })
            .collect();
        Ok(ClassWeights {
            gamma,
            counts: counts.to_vec(),
            weights,
        })
    }

    /// Unit weights for every class.
    pub fn uniform() -> Self {
        ClassWeights {
            gamma: 0.0,
            counts: vec![1; NUM_TAGS],
            weights: vec![1.0; NUM_TAGS],
        }
    }

    pub fn weight(&self, tag: Tag) -> f64 {
        self.weights[tag.index()]
    }

    /// Same relative weights, scaled by one constant so that the most
    /// frequent class has weight 1.
    pub fn majority_unit(&self) -> ClassWeights {
        let top = (0..NUM_TAGS).max_by_key(|&k| (self.counts[k], std::cmp::Reverse(k)));
        let scale = match top {
            Some(k) if self.weights[k] > 0.0 => 1.0 / self.weights[k],
            _ => 1.0,
        };
        self.scaled(scale)
    }

    pub fn scaled(&self, scale: f64) -> ClassWeights {
        ClassWeights {
            gamma: self.gamma,
            counts: self.counts.clone(),
            weights: self.weights.iter().map(|w| w * scale).collect(),
        }
    }

    pub fn normalized(&self, scale: WeightScale) -> ClassWeights {
        match scale {
            WeightScale::Raw => self.clone(),
            WeightScale::UnitMean => self.unit_mean(),
            WeightScale::Majority => self.majority_unit(),
        }
    }

    /// Same relative weights, scaled by one constant so that the average
    /// weight per training token is 1 (`sum_k C_k W_k = N`).
    pub fn unit_mean(&self) -> ClassWeights {
        let n: u64 = self.counts.iter().sum();
        let mass: f64 = self
            .counts
            .iter()
            .zip(&self.weights)
            .map(|(&c, &w)| c as f64 * w)
            .sum();
        self.scaled(if mass > 0.0 { n as f64 / mass } else { 1.0 })
    }
}

/// Gold tag frequencies over all tagged tokens.
pub fn tag_counts(corpus: &Corpus) -> Vec<u64> {
    let mut counts = vec![0u64; NUM_TAGS];
    for t in corpus.utterances().flat_map(|u| u.tokens.iter()) {
        if let Some(tag) = t.tag {
            counts[tag.index()] += 1;
        }
    }
    counts
}

/// Tag counts grouped into the six label types of the usual frequency table:
/// fluent, edit, single-token substitution, single-token deletion,
/// multi-token substitution start and multi-token substitution end.
pub fn label_frequencies(counts: &[u64]) -> Vec<(&'static str, &'static str, u64)> {
    let mut groups = [0u64; 6];
    for tag in Tag::all() {
        let g = match tag {
            Tag::Fluent => 0,
            Tag::Edit => 1,
            Tag::RepairOnset { end: tagset::EndMarker::Sub, .. } => 2,
            Tag::RepairOnset { end: tagset::EndMarker::Del, .. } => 3,
            Tag::RepairOnset { end: tagset::EndMarker::Mid, .. } => 4,
            Tag::RepairEnd => 5,
        };
        groups[g] += counts[tag.index()];
    }
    let rows = [
        ("fluent token", "<f/>"),
        ("edit token", "<e/>"),
        ("single-token substitution", "<rm-{1-8}/><rpEndSub/>"),
        ("single-token deletion", "<rm-{1-8}/><rpEndDel/>"),
        ("multi-token substitution start", "<rm-{1-8}/><rpMid/>"),
        ("multi-token substitution end", "<rpEndSub/>"),
    ];
    rows.iter().zip(groups).map(|(&(a, b), c)| (a, b, c)).collect()
}

pub fn class_weights(corpus: &Corpus, gamma: f64) -> Result<ClassWeights, WeightError> {
    ClassWeights::from_counts(&tag_counts(corpus), gamma)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tagset::EndMarker;

    fn utt(tokens: &[(&str, &str)]) -> Utterance {
        Utterance::new(
            Speaker::Usr,
            tokens
                .iter()
                .map(|(w, p)| Token::new(*w, *p, Some(Tag::Fluent)))
                .collect(),
        )
    }

    fn small_corpus() -> Corpus {
        let d = Dialogue {
            id: "d0".into(),
            utterances: vec![
                utt(&[("with", "IN"), ("Spanish", "JJ")]),
                utt(&[("with", "IN"), ("with", "IN")]),
            ],
        };
        Corpus::new("small", vec![d])
    }

    #[test]
    fn vocabulary_counts_and_min_count() {
        let c = small_corpus();
        let v = build_vocabulary(&c, 1);
        assert_eq!(v.len(), 5);
        assert_eq!(v.token(3), Some("with|IN"));
        assert_eq!(v.count(3), Some(3));
        assert_eq!(v.id("Spanish|JJ"), 4);

        let v2 = build_vocabulary(&c, 2);
        assert_eq!(v2.len(), 4);
        assert_eq!(v2.id("Spanish|JJ"), UNK_ID);
        for id in 0..v.len() as u32 {
            assert_eq!(v.id(v.token(id).unwrap()), id);
        }
    }

    #[test]
    fn encode_appends_eos_and_maps_unknowns() {
        let c = small_corpus();
        let v = build_vocabulary(&c, 1);
        let u = utt(&[("with", "IN"), ("Thai", "JJ")]);
        assert_eq!(encode_utterance(&v, &u), vec![3, UNK_ID, EOS_ID]);
        let known = &c.dialogues[0].utterances[0];
        let ids = encode_utterance(&v, known);
        let decoded = v.decode(&ids[..ids.len() - 1]);
        let expected: Vec<String> = known.tokens.iter().map(Token::combined).collect();
        assert_eq!(decoded, expected);
    }

    #[test]
    fn class_weight_formula() {
        let mut counts = vec![0u64; NUM_TAGS];
        counts[0] = 10;
        counts[1] = 10;
        let w = ClassWeights::from_counts(&counts, 1.0).unwrap();
        assert_eq!(w.weights[0], w.weights[1]);
        assert_eq!(w.weights[0], 0.1);
        assert_eq!(w.weights[5], 0.0);
        assert!(ClassWeights::from_counts(&counts, 0.0).is_err());
        assert!(ClassWeights::from_counts(&counts, -1.0).is_err());

        let mut single = vec![0u64; NUM_TAGS];
        single[0] = 7;
        let w = ClassWeights::from_counts(&single, 1.05).unwrap();
        assert_eq!(w.weights[0], 1.0 / 7f64.powf(1.05));

        let u = w.unit_mean();
        assert!((u.weights[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rescaling_keeps_ratios() {
        let mut counts = vec![0u64; NUM_TAGS];
        counts[0] = 900;
        counts[1] = 90;
        counts[4] = 9;
        let raw = ClassWeights::from_counts(&counts, 1.05).unwrap();
        let maj = raw.normalized(WeightScale::Majority);
        assert_eq!(maj.weights[0], 1.0);
        let unit = raw.normalized(WeightScale::UnitMean);
        let mass: f64 = counts.iter().zip(&unit.weights).map(|(&c, w)| c as f64 * w).sum();
        assert!((mass - 999.0).abs() < 1e-9);
        for w in [&maj, &unit] {
            assert!((w.weights[4] / w.weights[1] - raw.weights[4] / raw.weights[1]).abs() < 1e-9);
            assert_eq!(w.weights[2], 0.0);
        }
        assert_eq!(raw.normalized(WeightScale::Raw), raw);
    }

    #[test]
    fn bad_tag_reports_line_and_field() {
        let text = concat!(
            r#"{"id":"a","utterances":[{"speaker":"usr","tokens":[{"w":"x","p":"NN","t":"<f/>"}]}]}"#,
            "\n",
            r#"{"id":"b","utterances":[{"speaker":"usr","tokens":[{"w":"x","p":"NN","t":"<f/>"},{"w":"y","p":"NN","t":"<rm-0/><rpEndSub/>"}]}]}"#,
            "\n"
        );
        let err = parse_jsonl(text.as_bytes()).unwrap_err();
        match &err {
            CorpusError::Tag { line, field, .. } => {
                assert_eq!(*line, 2);
                assert_eq!(field, "utterances[0].tokens[1].t");
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(err.to_string().contains("<rm-0/>"));
    }

    #[test]
    fn rejects_pipe_duplicates_and_partial_tags() {
        let pipe = r#"{"id":"a","utterances":[{"speaker":"usr","tokens":[{"w":"a|b","p":"NN"}]}]}"#;
        assert!(matches!(
            parse_jsonl(pipe.as_bytes()),
            Err(CorpusError::Field { line: 1, .. })
        ));
        let dup = concat!(
            r#"{"id":"a","utterances":[]}"#,
            "\n",
            r#"{"id":"a","utterances":[]}"#
        );
        assert!(matches!(
            parse_jsonl(dup.as_bytes()),
            Err(CorpusError::DuplicateId { line: 2, .. })
        ));
        let partial = r#"{"id":"a","utterances":[{"speaker":"sys","tokens":[{"w":"a","p":"NN","t":"<f/>"},{"w":"b","p":"NN"}]}]}"#;
        assert!(matches!(
            parse_jsonl(partial.as_bytes()),
            Err(CorpusError::Field { .. })
        ));
        let unresolvable = r#"{"id":"a","utterances":[{"speaker":"usr","tokens":[{"w":"a","p":"NN","t":"<rm-1/><rpEndSub/>"}]}]}"#;
        assert!(matches!(
            parse_jsonl(unresolvable.as_bytes()),
            Err(CorpusError::Structure { line: 1, .. })
        ));
    }

    #[test]
    fn untagged_input_is_accepted() {
        let text = r#"{"id":"a","utterances":[{"speaker":"usr","tokens":[{"w":"hi","p":"UH"}]}]}"#;
        let d = parse_jsonl(text.as_bytes()).unwrap();
        assert!(!d[0].utterances[0].is_tagged());
    }

    #[test]
    fn write_read_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = small_corpus();
        c.dialogues[0].utterances[1].tokens[1].tag = Some(Tag::RepairOnset {
            retrace: 1,
            end: EndMarker::Sub,
        });
        c.dialogues[0].utterances[1].applied = vec![Phenomenon::PpRestart];
        c.meta.seed = Some(3);
        c.meta.stats.insert("skipped".into(), 2);
        write_corpus(&c, dir.path()).unwrap();
        let back = read_corpus(dir.path()).unwrap();
        assert_eq!(back, c);
        let via_file = read_corpus(dir.path().join(CORPUS_FILE)).unwrap();
        assert_eq!(via_file, c);
    }

    #[test]
    fn split_is_by_dialogue() {
        let mut c = small_corpus();
        c.dialogues = (0..10)
            .map(|i| Dialogue {
                id: format!("d{i}"),
                utterances: vec![],
            })
            .collect();
        let parts = c.split(&[0.8, 0.1, 0.1]);
        let sizes: Vec<usize> = parts.iter().map(|p| p.dialogues.len()).collect();
        assert_eq!(sizes, vec![8, 1, 1]);
    }
}
