//! Micro-averaged F1 over edit tokens, repair onsets and repair structures.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Corpus, Token};
use crate::nn::{Model, NnError};
use crate::tagset::{resolve_structures, sanitize_tags, RepairStructure, Tag};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct F1Counts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

fn ratio(a: u64, b: u64) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

impl F1Counts {
    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp)
    }

    pub fn recall(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }

    pub fn f1(&self) -> f64 {
        let (p, r) = (self.precision(), self.recall());
        if p + r == 0.0 {
            0.0
        } else {
            2.0 * p * r / (p + r)
        }
    }

    pub fn add(&mut self, other: F1Counts) {
        self.tp += other.tp;
        self.fp += other.fp;
        self.fn_ += other.fn_;
    }

    fn record(&mut self, gold: bool, pred: bool, hit: bool) {
        if hit {
            self.tp += 1;
        } else {
            self.fp += pred as u64;
            self.fn_ += gold as u64;
        }
    }
}

/// How a predicted repair onset is matched against gold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RmMatch {
    /// Same retrace distance; the end marker may differ.
    #[default]
    RmOnly,
    /// Identical onset tag.
    Strict,
}

impl RmMatch {
    pub fn name(self) -> &'static str {
        match self {
            RmMatch::RmOnly => "rm-only",
            RmMatch::Strict => "strict",
        }
    }

    pub fn parse(s: &str) -> Option<RmMatch> {
        match s {
            "rm-only" => Some(RmMatch::RmOnly),
            "strict" => Some(RmMatch::Strict),
            _ => None,
        }
    }

    fn matches(self, gold: Tag, pred: Tag) -> bool {
        match self {
            RmMatch::RmOnly => gold.retrace() == pred.retrace(),
            RmMatch::Strict => gold == pred,
        }
    }
}

impl fmt::Display for RmMatch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("{what}: {gold} gold vs {pred} predicted")]
    LengthMismatch { what: String, gold: usize, pred: usize },
    #[error("utterance {0} has no gold tags")]
    Untagged(usize),
    #[error("gold tags of utterance {utterance} do not resolve: {message}")]
    InvalidGold { utterance: usize, message: String },
    #[error(transparent)]
    Model(#[from] NnError),
}

fn check_lengths(gold: &[Vec<Tag>], pred: &[Vec<Tag>]) -> Result<(), MetricsError> {
    if gold.len() != pred.len() {
        return Err(MetricsError::LengthMismatch {
            what: "utterance count".into(),
            gold: gold.len(),
            pred: pred.len(),
        });
    }
    for (i, (g, p)) in gold.iter().zip(pred).enumerate() {
        if g.len() != p.len() {
            return Err(MetricsError::LengthMismatch {
                what: format!("utterance {i}"),
                gold: g.len(),
                pred: p.len(),
            });
        }
    }
    Ok(())
}

pub fn edit_counts(gold: &[Tag], pred: &[Tag]) -> F1Counts {
    let mut c = F1Counts::default();
    for (&g, &p) in gold.iter().zip(pred) {
        c.record(g.is_edit(), p.is_edit(), g.is_edit() && p.is_edit());
    }
    c
}

pub fn rm_counts(gold: &[Tag], pred: &[Tag], mode: RmMatch) -> F1Counts {
    let mut c = F1Counts::default();
    for (&g, &p) in gold.iter().zip(pred) {
        c.record(g.is_onset(), p.is_onset(), g.is_onset() && p.is_onset() && mode.matches(g, p));
    }
    c
}

/// Token-membership and span-exact counts for repair structures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct RpsCounts {
    pub tokens: F1Counts,
    pub spans: F1Counts,
    /// Predicted onset/end tags dropped to make predictions resolvable.
    pub dropped: u64,
}

impl RpsCounts {
    pub fn add(&mut self, other: RpsCounts) {
        self.tokens.add(other.tokens);
        self.spans.add(other.spans);
        self.dropped += other.dropped;
    }
}

fn covered(structures: &[RepairStructure]) -> BTreeSet<usize> {
    structures.iter().flat_map(|s| s.span()).collect()
}

fn boundaries(structures: &[RepairStructure]) -> BTreeSet<(usize, usize, usize, usize)> {
    structures
        .iter()
        .map(|s| (s.reparandum_start, s.reparandum_end, s.repair_start, s.repair_end))
        .collect()
}

/// Counts for one utterance; `gold` must resolve.
pub fn rps_counts(gold: &[Tag], pred: &[Tag]) -> Result<RpsCounts, String> {
    let g = resolve_structures(gold).map_err(|e| e.to_string())?;
    let (clean, dropped) = sanitize_tags(pred);
    let p = resolve_structures(&clean).expect("sanitized tags resolve");
    let (gt, pt) = (covered(&g), covered(&p));
    let (gs, ps) = (boundaries(&g), boundaries(&p));
    let count = |a: usize, b: usize, both: usize| F1Counts {
        tp: both as u64,
        fp: (b - both) as u64,
        fn_: (a - both) as u64,
    };
    Ok(RpsCounts {
        tokens: count(gt.len(), pt.len(), gt.intersection(&pt).count()),
        spans: count(gs.len(), ps.len(), gs.intersection(&ps).count()),
        dropped: dropped as u64,
    })
}

pub fn f1_edit(gold: &[Vec<Tag>], pred: &[Vec<Tag>]) -> Result<F1Counts, MetricsError> {
    check_lengths(gold, pred)?;
    let mut c = F1Counts::default();
    for (g, p) in gold.iter().zip(pred) {
        c.add(edit_counts(g, p));
    }
    Ok(c)
}

pub fn f1_rm(gold: &[Vec<Tag>], pred: &[Vec<Tag>], mode: RmMatch) -> Result<F1Counts, MetricsError> {
    check_lengths(gold, pred)?;
    let mut c = F1Counts::default();
    for (g, p) in gold.iter().zip(pred) {
        c.add(rm_counts(g, p, mode));
    }
    Ok(c)
}

pub fn f1_rps(gold: &[Vec<Tag>], pred: &[Vec<Tag>]) -> Result<RpsCounts, MetricsError> {
    check_lengths(gold, pred)?;
    let mut c = RpsCounts::default();
    for (i, (g, p)) in gold.iter().zip(pred).enumerate() {
        let u = rps_counts(g, p).map_err(|message| MetricsError::InvalidGold { utterance: i, message })?;
        c.add(u);
    }
    Ok(c)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub rm_match: RmMatch,
    pub f_e: f64,
    pub f_rm: f64,
    pub f_rps: f64,
    pub f_rps_span: f64,
    pub tag_accuracy: f64,
    pub edit: F1Counts,
    pub rm: F1Counts,
    pub rps: F1Counts,
    pub rps_span: F1Counts,
    pub dropped_tags: u64,
    pub utterances: usize,
    pub tokens: usize,
    /// Gold tag -> predicted tag -> count.
    pub confusion: BTreeMap<String, BTreeMap<String, u64>>,
}

impl EvalReport {
    pub fn from_tags(gold: &[Vec<Tag>], pred: &[Vec<Tag>], mode: RmMatch) -> Result<EvalReport, MetricsError> {
        let edit = f1_edit(gold, pred)?;
        let rm = f1_rm(gold, pred, mode)?;
        let rps = f1_rps(gold, pred)?;
        let mut confusion: BTreeMap<String, BTreeMap<String, u64>> = BTreeMap::new();
        let mut correct = 0usize;
        let mut tokens = 0usize;
        for (g, p) in gold.iter().zip(pred) {
            for (&a, &b) in g.iter().zip(p) {
                tokens += 1;
                correct += (a == b) as usize;
                *confusion.entry(a.render()).or_default().entry(b.render()).or_insert(0) += 1;
            }
        }
        Ok(EvalReport {
            rm_match: mode,
            f_e: edit.f1(),
            f_rm: rm.f1(),
            f_rps: rps.tokens.f1(),
            f_rps_span: rps.spans.f1(),
            tag_accuracy: ratio(correct as u64, tokens as u64),
            edit,
            rm,
            rps: rps.tokens,
            rps_span: rps.spans,
            dropped_tags: rps.dropped,
            utterances: gold.len(),
            tokens,
            confusion,
        })
    }

    /// Plain-text summary table.
    pub fn table(&self) -> String {
        let mut s = String::new();
        s += &format!("{:<10} {:>7} {:>7} {:>7}\n", "metric", "P", "R", "F1");
        for (name, c) in [
            ("F_e", self.edit),
            ("F_rm", self.rm),
            ("F_rps", self.rps),
            ("F_rps_span", self.rps_span),
        ] {
            s += &format!(
                "{:<10} {:>7.4} {:>7.4} {:>7.4}\n",
                name,
                c.precision(),
                c.recall(),
                c.f1()
            );
        }
        s += &format!("accuracy   {:>23.4}\n", self.tag_accuracy);
        s += &format!(
            "rm match: {}; {} utterances, {} tokens, {} dropped tags\n",
            self.rm_match, self.utterances, self.tokens, self.dropped_tags
        );
        s
    }
}

/// Anything that assigns one tag per token of an utterance.
pub trait SequenceTagger {
    fn tag_tokens(&self, tokens: &[Token]) -> Result<Vec<Tag>, MetricsError>;
}

impl SequenceTagger for Model {
    fn tag_tokens(&self, tokens: &[Token]) -> Result<Vec<Tag>, MetricsError> {
        Ok(Model::tag_tokens(self, tokens)?)
    }
}

/// Returns the gold tags carried by the tokens.
pub struct GoldTagger;

impl SequenceTagger for GoldTagger {
    fn tag_tokens(&self, tokens: &[Token]) -> Result<Vec<Tag>, MetricsError> {
        Ok(tokens.iter().map(|t| t.tag.unwrap_or(Tag::Fluent)).collect())
    }
}

/// Tags every token with the same tag.
pub struct ConstantTagger(pub Tag);

impl SequenceTagger for ConstantTagger {
    fn tag_tokens(&self, tokens: &[Token]) -> Result<Vec<Tag>, MetricsError> {
        Ok(vec![self.0; tokens.len()])
    }
}

pub fn gold_tags(corpus: &Corpus) -> Result<Vec<Vec<Tag>>, MetricsError> {
    corpus
        .utterances()
        .enumerate()
        .map(|(i, u)| u.gold_tags().ok_or(MetricsError::Untagged(i)))
        .collect()
}

/// Tags the corpus and scores the predictions against its gold tags.
pub fn evaluate<T: SequenceTagger + Sync>(tagger: &T, corpus: &Corpus, mode: RmMatch) -> Result<EvalReport, MetricsError> {
    let gold = gold_tags(corpus)?;
    let utts: Vec<_> = corpus.utterances().collect();
    let pred = utts
        .par_iter()
        .map(|u| tagger.tag_tokens(&u.tokens))
        .collect::<Result<Vec<_>, _>>()?;
    EvalReport::from_tags(&gold, &pred, mode)
}
