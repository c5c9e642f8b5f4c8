//! Seeded generator of goal-oriented restaurant dialogues with mixed-in
//! hesitations, restarts and self-corrections, plus exact gold tags.
//!
//! Each dialogue draws from its own random stream: a ChaCha8 generator seeded
//! with the master seed and switched to stream number `dialogue_index`. This
//! makes dialogues independent of each other and of the order in which they
//! are generated, so parallel generation produces identical bytes.

pub mod draft;
pub mod templates;

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::corpus::{Corpus, CorpusMeta, Dialogue, Phenomenon, Speaker, Token, Utterance};
use crate::corpus::COMBINED_SEP;
pub use draft::{apply_cl_restart, apply_correction, apply_hesitation, apply_pp_restart, Draft, Skip};
pub use templates::Slot;

pub const TEMPLATE_SET: &str = "babi-restaurant";

fn default_correction_interregna() -> Vec<String> {
    ["sorry", "no sorry", "oh no", "uhm sorry", "no", "i mean"]
        .map(String::from)
        .to_vec()
}

fn default_restart_interregna() -> Vec<String> {
    ["uhm yeah", "um", "uh", "uhm"].map(String::from).to_vec()
}

fn default_fillers() -> Vec<String> {
    ["uh", "uhm", "um"].map(String::from).to_vec()
}

fn default_half() -> f64 {
    0.5
}

fn default_template_set() -> String {
    TEMPLATE_SET.to_string()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub seed: u64,
    pub n_dialogues: usize,
    pub p_hesitation: f64,
    pub p_correction: f64,
    pub p_restart: f64,
    /// Fraction of restarts that are clausal; the rest restart a PP.
    #[serde(default = "default_half")]
    pub restart_split: f64,
    /// Single-word hesitation fillers.
    #[serde(default = "default_fillers")]
    pub filler_lexicon: Vec<String>,
    #[serde(default = "default_correction_interregna")]
    pub correction_interregna: Vec<String>,
    #[serde(default = "default_restart_interregna")]
    pub restart_interregna: Vec<String>,
    /// Probability that a restart carries an interregnum.
    #[serde(default = "default_half")]
    pub p_restart_interregnum: f64,
    /// Probability that a correction inside a PP repeats the whole PP.
    #[serde(default = "default_half")]
    pub p_long_correction: f64,
    #[serde(default = "default_template_set")]
    pub template_set: String,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            seed: 0,
            n_dialogues: 3998,
            p_hesitation: 0.40,
            p_correction: 0.21,
            p_restart: 0.05,
            restart_split: 0.5,
            filler_lexicon: default_fillers(),
            correction_interregna: default_correction_interregna(),
            restart_interregna: default_restart_interregna(),
            p_restart_interregnum: 0.5,
            p_long_correction: 0.5,
            template_set: default_template_set(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("{name} = {value} is not a probability")]
    Probability { name: &'static str, value: f64 },
    #[error("filler lexicon is empty")]
    EmptyFillers,
    #[error("{lexicon} entry {entry:?} is invalid: {reason}")]
    BadEntry {
        lexicon: &'static str,
        entry: String,
        reason: &'static str,
    },
    #[error("unknown template set {0:?}")]
    UnknownTemplates(String),
    #[error("unknown preset {0:?}")]
    UnknownPreset(String),
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        for (name, value) in [
            ("p_hesitation", self.p_hesitation),
            ("p_correction", self.p_correction),
            ("p_restart", self.p_restart),
            ("restart_split", self.restart_split),
            ("p_restart_interregnum", self.p_restart_interregnum),
            ("p_long_correction", self.p_long_correction),
        ] {
            if !(0.0..=1.0).contains(&value) {
                return Err(ConfigError::Probability { name, value });
            }
        }
        if self.filler_lexicon.is_empty() {
            return Err(ConfigError::EmptyFillers);
        }
        let lexicons: [(&'static str, &Vec<String>); 3] = [
            ("filler_lexicon", &self.filler_lexicon),
            ("correction_interregna", &self.correction_interregna),
            ("restart_interregna", &self.restart_interregna),
        ];
        for (lexicon, entries) in lexicons {
            for entry in entries {
                let bad = |reason| ConfigError::BadEntry {
                    lexicon,
                    entry: entry.clone(),
                    reason,
                };
                let words: Vec<&str> = entry.split_whitespace().collect();
                if words.is_empty() {
                    return Err(bad("empty phrase"));
                }
                if entry.contains(COMBINED_SEP) {
                    return Err(bad("contains '|'"));
                }
                if lexicon == "filler_lexicon" && words.len() != 1 {
                    return Err(bad("hesitation fillers are single words"));
                }
                if words.len() > 3 {
                    return Err(bad("interregna are at most three words"));
                }
            }
        }
        if self.template_set != TEMPLATE_SET {
            return Err(ConfigError::UnknownTemplates(self.template_set.clone()));
        }
        Ok(())
    }

    /// Hex SHA-256 of the configuration's JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        Sha256::digest(json.as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

/// Named configurations: one per phenomenon plus the mixed default.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    Hesitations,
    PpRestarts,
    ClRestarts,
    Corrections,
    Mixed,
}

impl Preset {
    pub const ALL: [Preset; 5] = [
        Preset::Hesitations,
        Preset::PpRestarts,
        Preset::ClRestarts,
        Preset::Corrections,
        Preset::Mixed,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Preset::Hesitations => "hesitations",
            Preset::PpRestarts => "pp-restarts",
            Preset::ClRestarts => "cl-restarts",
            Preset::Corrections => "corrections",
            Preset::Mixed => "mixed",
        }
    }

    pub fn parse(name: &str) -> Result<Preset, ConfigError> {
        Preset::ALL
            .into_iter()
            .find(|p| p.name() == name)
            .ok_or_else(|| ConfigError::UnknownPreset(name.to_string()))
    }

    /// Single-phenomenon presets apply their phenomenon to half the user turns.
    pub fn config(self, n_dialogues: usize, seed: u64) -> GeneratorConfig {
        let base = GeneratorConfig {
            seed,
            n_dialogues,
            ..GeneratorConfig::default()
        };
        let none = GeneratorConfig {
            p_hesitation: 0.0,
            p_correction: 0.0,
            p_restart: 0.0,
            ..base.clone()
        };
        match self {
            Preset::Mixed => base,
            Preset::Hesitations => GeneratorConfig {
                p_hesitation: 0.5,
                ..none
            },
            Preset::PpRestarts => GeneratorConfig {
                p_restart: 0.5,
                restart_split: 0.0,
                ..none
            },
            Preset::ClRestarts => GeneratorConfig {
                p_restart: 0.5,
                restart_split: 1.0,
                ..none
            },
            Preset::Corrections => GeneratorConfig {
                p_correction: 0.5,
                ..none
            },
        }
    }
}

/// Counters of sampled phenomena that could not be applied.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SkipCounts {
    pub correction: u64,
    pub restart: u64,
    pub hesitation: u64,
    pub pp_noop: u64,
    pub retrace: u64,
}

impl SkipCounts {
    fn record(&mut self, which: Phenomenon, skip: Skip) {
        if skip == Skip::RetraceBound {
            self.retrace += 1;
        }
        match which {
            Phenomenon::Correction => self.correction += 1,
            Phenomenon::PpRestart | Phenomenon::ClRestart => self.restart += 1,
            Phenomenon::Hesitation => self.hesitation += 1,
        }
    }

    fn add(&mut self, o: &SkipCounts) {
        self.correction += o.correction;
        self.restart += o.restart;
        self.hesitation += o.hesitation;
        self.pp_noop += o.pp_noop;
        self.retrace += o.retrace;
    }
}

/// Applies the sampled phenomena to one user turn in the fixed order
/// correction, restart, hesitation.
fn disfluent_turn(
    cfg: &GeneratorConfig,
    tpl: &templates::TurnTemplate,
    rng: &mut ChaCha8Rng,
    skips: &mut SkipCounts,
) -> Utterance {
    // All three draws happen unconditionally so per-turn rates do not depend
    // on which phenomena turned out to be applicable.
    let want_correction = rng.gen_bool(cfg.p_correction);
    let want_restart = rng.gen_bool(cfg.p_restart);
    let want_hesitation = rng.gen_bool(cfg.p_hesitation);
    let clausal = rng.gen_bool(cfg.restart_split);

    let mut d = Draft::from_template(tpl);
    if want_correction {
        if let Err(s) = apply_correction(&mut d, &cfg.correction_interregna, cfg.p_long_correction, rng) {
            skips.record(Phenomenon::Correction, s);
        }
    }
    if want_restart {
        let (first, second_share) = if clausal {
            (Phenomenon::ClRestart, 1.0 - cfg.restart_split)
        } else {
            (Phenomenon::PpRestart, cfg.restart_split)
        };
        let run = |kind, d: &mut Draft, rng: &mut ChaCha8Rng| match kind {
            Phenomenon::ClRestart => {
                apply_cl_restart(d, &cfg.restart_interregna, cfg.p_restart_interregnum, rng)
            }
            _ => apply_pp_restart(d, &cfg.restart_interregna, cfg.p_restart_interregnum, rng),
        };
        let mut result = run(first, &mut d, rng);
        if first == Phenomenon::PpRestart && result == Err(Skip::NotApplicable) {
            skips.pp_noop += 1;
        }
        // Fall back to the other restart type only when the mix allows it.
        if result.is_err() && second_share > 0.0 {
            let other = if clausal {
                Phenomenon::PpRestart
            } else {
                Phenomenon::ClRestart
            };
            result = run(other, &mut d, rng);
        }
        if let Err(s) = result {
            skips.record(first, s);
        }
    }
    if want_hesitation {
        if let Err(s) = apply_hesitation(&mut d, &cfg.filler_lexicon, rng) {
            skips.record(Phenomenon::Hesitation, s);
        }
    }
    let mut utt = Utterance::new(Speaker::Usr, d.tokens());
    if !d.applied().is_empty() {
        utt.fluent = Some(d.original_tokens());
        utt.applied = d.applied().to_vec();
    }
    utt
}

fn fluent_utterance(speaker: Speaker, tpl: &templates::TurnTemplate) -> Utterance {
    let tokens = tpl
        .words
        .iter()
        .map(|w| Token::new(w.word.clone(), w.pos.clone(), Some(crate::tagset::Tag::Fluent)))
        .collect();
    Utterance::new(speaker, tokens)
}

/// Generates dialogue number `index` of the corpus described by `cfg`.
pub fn generate_dialogue(cfg: &GeneratorConfig, index: usize) -> (Dialogue, SkipCounts) {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(index as u64);
    let mut skips = SkipCounts::default();
    let utterances = templates::dialogue_turns(&mut rng)
        .into_iter()
        .map(|(user, tpl)| {
            if user {
                disfluent_turn(cfg, &tpl, &mut rng, &mut skips)
            } else {
                fluent_utterance(Speaker::Sys, &tpl)
            }
        })
        .collect();
    (
        Dialogue {
            id: format!("d{index:05}"),
            utterances,
        },
        skips,
    )
}

pub fn generate_corpus(cfg: &GeneratorConfig) -> Result<Corpus, ConfigError> {
    cfg.validate()?;
    let generated: Vec<(Dialogue, SkipCounts)> = (0..cfg.n_dialogues)
        .into_par_iter()
        .map(|i| generate_dialogue(cfg, i))
        .collect();
    let mut skips = SkipCounts::default();
    let mut dialogues = Vec::with_capacity(generated.len());
    for (d, s) in generated {
        skips.add(&s);
        dialogues.push(d);
    }
    let user_turns = dialogues
        .iter()
        .flat_map(|d| &d.utterances)
        .filter(|u| u.speaker == Speaker::Usr)
        .count() as u64;
    let mut stats = BTreeMap::new();
    stats.insert("dialogues".to_string(), dialogues.len() as u64);
    stats.insert("user_turns".to_string(), user_turns);
    stats.insert("skipped_correction".to_string(), skips.correction);
    stats.insert("skipped_restart".to_string(), skips.restart);
    stats.insert("skipped_hesitation".to_string(), skips.hesitation);
    stats.insert("skipped_retrace_bound".to_string(), skips.retrace);
    stats.insert("pp_restart_noop".to_string(), skips.pp_noop);
    Ok(Corpus {
        meta: CorpusMeta {
            name: "synthetic-babi-plus".to_string(),
            config_hash: Some(cfg.hash()),
            seed: Some(cfg.seed),
            generator: Some(serde_json::to_value(cfg).expect("config serializes")),
            stats,
        },
        dialogues,
    })
}

/// Per-turn rates of each phenomenon among user turns, counted from the
/// `applied` annotations.
pub fn phenomenon_rates(corpus: &Corpus) -> BTreeMap<Phenomenon, f64> {
    let mut counts: BTreeMap<Phenomenon, u64> = BTreeMap::new();
    let mut turns = 0u64;
    for u in corpus.utterances().filter(|u| u.speaker == Speaker::Usr) {
        turns += 1;
        for p in &u.applied {
            *counts.entry(*p).or_insert(0) += 1;
        }
    }
    [
        Phenomenon::Correction,
        Phenomenon::PpRestart,
        Phenomenon::ClRestart,
        Phenomenon::Hesitation,
    ]
    .into_iter()
    .map(|p| {
        let c = counts.get(&p).copied().unwrap_or(0);
        (p, if turns == 0 { 0.0 } else { c as f64 / turns as f64 })
    })
    .collect()
}
