//! A user turn under modification, and the four disfluency transformations.
//!
//! Every insertion goes through [`Draft::insert`], which keeps edit positions,
//! repair structures, slot mentions and PP spans aligned with the token list.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::Rng;

use super::templates::{pos_of, PpSpan, Slot, TurnTemplate};
use crate::corpus::{Phenomenon, Token};
use crate::tagset::{self, RepairKind, RepairStructure, Tag, MAX_RETRACE};

/// Attempts made before a sampled phenomenon is given up.
pub const MAX_ATTEMPTS: usize = 10;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Word {
    pub word: String,
    pub pos: String,
}

impl Word {
    pub fn new(word: &str) -> Self {
        Word {
            word: word.to_string(),
            pos: pos_of(word).to_string(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Mention {
    at: usize,
    slot: Slot,
}

/// Why a sampled phenomenon was not applied.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Skip {
    /// The turn has nothing the phenomenon can attach to.
    NotApplicable,
    /// Every attempt needed a retrace beyond the label inventory.
    RetraceBound,
}

#[derive(Debug, Clone)]
pub struct Draft {
    words: Vec<Word>,
    edits: BTreeSet<usize>,
    structures: Vec<RepairStructure>,
    mentions: Vec<Mention>,
    pps: Vec<PpSpan>,
    original: Vec<Word>,
    applied: Vec<Phenomenon>,
}

impl Draft {
    pub fn from_template(t: &TurnTemplate) -> Self {
        let words: Vec<Word> = t
            .words
            .iter()
            .map(|w| Word {
                word: w.word.clone(),
                pos: w.pos.clone(),
            })
            .collect();
        let mentions = t
            .words
            .iter()
            .enumerate()
            .filter_map(|(at, w)| w.slot.map(|slot| Mention { at, slot }))
            .collect();
        Draft {
            original: words.clone(),
            words,
            edits: BTreeSet::new(),
            structures: Vec::new(),
            mentions,
            pps: t.pps.clone(),
            applied: Vec::new(),
        }
    }

    /// Builds a draft from bare words, with PP spans and slot mentions
    /// supplied by the caller.
    pub fn from_words(words: &[&str], pps: Vec<PpSpan>, slots: &[(usize, Slot)]) -> Self {
        let words: Vec<Word> = words.iter().map(|w| Word::new(w)).collect();
        Draft {
            original: words.clone(),
            words,
            edits: BTreeSet::new(),
            structures: Vec::new(),
            mentions: slots.iter().map(|&(at, slot)| Mention { at, slot }).collect(),
            pps,
            applied: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn words(&self) -> Vec<&str> {
        self.words.iter().map(|w| w.word.as_str()).collect()
    }

    pub fn structures(&self) -> &[RepairStructure] {
        &self.structures
    }

    pub fn edits(&self) -> &BTreeSet<usize> {
        &self.edits
    }

    pub fn applied(&self) -> &[Phenomenon] {
        &self.applied
    }

    pub fn original(&self) -> &[Word] {
        &self.original
    }

    /// Inserts `new` before position `pos`; `edit[i]` marks inserted edit tokens.
    fn insert(&mut self, pos: usize, new: Vec<Word>, edit: &[bool]) {
        let n = new.len();
        debug_assert_eq!(n, edit.len());
        self.words.splice(pos..pos, new);
        self.edits = self
            .edits
            .iter()
            .map(|&e| if e >= pos { e + n } else { e })
            .collect();
        for (i, &is_edit) in edit.iter().enumerate() {
            if is_edit {
                self.edits.insert(pos + i);
            }
        }
        for s in &mut self.structures {
            s.shift_for_insert(pos, n);
        }
        for m in &mut self.mentions {
            if m.at >= pos {
                m.at += n;
            }
        }
        for pp in &mut self.pps {
            if pos <= pp.start {
                pp.start += n;
                pp.end += n;
            } else if pos < pp.end {
                pp.end += n;
            }
        }
    }

    fn add_structure(&mut self, s: RepairStructure) {
        self.structures.push(s);
        self.structures.sort_by_key(|s| s.repair_start);
    }

    fn touches_structure(&self, range: std::ops::Range<usize>) -> bool {
        self.structures
            .iter()
            .any(|s| s.reparandum_start < range.end && range.start < s.repair_end)
    }

    /// Gold tags for the current state.
    pub fn tags(&self) -> Vec<Tag> {
        tagset::structures_to_tags(&self.structures, self.words.len(), &self.edits)
            .expect("draft structures are always representable")
    }

    pub fn tokens(&self) -> Vec<Token> {
        self.words
            .iter()
            .zip(self.tags())
            .map(|(w, t)| Token::new(w.word.clone(), w.pos.clone(), Some(t)))
            .collect()
    }

    pub fn original_tokens(&self) -> Vec<Token> {
        self.original
            .iter()
            .map(|w| Token::new(w.word.clone(), w.pos.clone(), None))
            .collect()
    }
}

fn phrase(text: &str) -> Vec<Word> {
    text.split_whitespace().map(Word::new).collect()
}

fn substitution(
    reparandum: std::ops::Range<usize>,
    interregnum_len: usize,
    repair_len: usize,
) -> RepairStructure {
    let interregnum_start = reparandum.end;
    let repair_start = interregnum_start + interregnum_len;
    RepairStructure {
        reparandum_start: reparandum.start,
        reparandum_end: reparandum.end,
        interregnum_start,
        interregnum_end: repair_start,
        repair_start,
        repair_end: repair_start + repair_len,
        kind: RepairKind::Substitution,
    }
}

/// Inserts one filler token at a uniformly chosen inter-word position.
/// Positions touching an interregnum, or that would push a repair's retrace
/// past the bound, are excluded.
pub fn apply_hesitation(
    draft: &mut Draft,
    fillers: &[String],
    rng: &mut impl Rng,
) -> Result<(), Skip> {
    if draft.len() < 2 || fillers.is_empty() {
        return Err(Skip::NotApplicable);
    }
    // A filler next to an interregnum would be read back as part of it.
    let free: Vec<usize> = (1..draft.len())
        .filter(|&pos| {
            !draft
                .structures
                .iter()
                .any(|s| s.reparandum_end <= pos && pos <= s.repair_start)
        })
        .collect();
    if free.is_empty() {
        return Err(Skip::NotApplicable);
    }
    let fits: Vec<usize> = free
        .into_iter()
        .filter(|&pos| {
            !draft.structures.iter().any(|s| {
                s.reparandum_start < pos && pos <= s.repair_start && s.retrace() + 1 > MAX_RETRACE as usize
            })
        })
        .collect();
    if let Some(&pos) = fits.choose(rng) {
        let filler = fillers.choose(rng).expect("nonempty");
        draft.insert(pos, vec![Word::new(filler)], &[true]);
        draft.applied.push(Phenomenon::Hesitation);
        return Ok(());
    }
    Err(Skip::RetraceBound)
}

/// Repeats the preposition (and determiner) of one PP once or twice, each
/// repeat optionally preceded by an interregnum:
/// `in a moderate` -> `in a in a um in a moderate`.
pub fn apply_pp_restart(
    draft: &mut Draft,
    interregna: &[String],
    p_interregnum: f64,
    rng: &mut impl Rng,
) -> Result<(), Skip> {
    let eligible: Vec<PpSpan> = draft
        .pps
        .iter()
        .copied()
        .filter(|pp| {
            !draft.touches_structure(pp.start..pp.end)
                && !draft.edits.range(pp.start..pp.end).any(|_| true)
        })
        .collect();
    let Some(&pp) = eligible.choose(rng) else {
        return Err(Skip::NotApplicable);
    };
    let prefix: Vec<Word> = draft.words[pp.start..pp.start + pp.prefix_len].to_vec();
    let m = prefix.len();
    let repeats = if rng.gen_bool(0.7) { 1 } else { 2 };
    for _ in 0..MAX_ATTEMPTS {
        let fills: Vec<Vec<Word>> = (0..repeats)
            .map(|_| {
                if !interregna.is_empty() && rng.gen_bool(p_interregnum) {
                    phrase(interregna.choose(rng).expect("nonempty"))
                } else {
                    Vec::new()
                }
            })
            .collect();
        if fills.iter().any(|f| m + f.len() > MAX_RETRACE as usize) {
            continue;
        }
        let insert_at = pp.start + m;
        let mut inserted = Vec::new();
        let mut edit = Vec::new();
        let mut new_structures = Vec::new();
        let mut reparandum = pp.start..insert_at;
        for fill in fills {
            let k = fill.len();
            let here = insert_at + inserted.len();
            edit.extend(std::iter::repeat(true).take(k));
            inserted.extend(fill);
            edit.extend(std::iter::repeat(false).take(m));
            inserted.extend(prefix.iter().cloned());
            let s = substitution(reparandum.start..here, k, m);
            debug_assert_eq!(reparandum.end, here);
            reparandum = s.repair_start..s.repair_end;
            new_structures.push(s);
        }
        draft.insert(insert_at, inserted, &edit);
        for s in new_structures {
            draft.add_structure(s);
        }
        draft.applied.push(Phenomenon::PpRestart);
        return Ok(());
    }
    Err(Skip::RetraceBound)
}

/// Abandons the utterance after its first `b` tokens and starts again from
/// the beginning, optionally after an interregnum:
/// `can you make a restaurant uhm yeah can you make a restaurant reservation`.
pub fn apply_cl_restart(
    draft: &mut Draft,
    interregna: &[String],
    p_interregnum: f64,
    rng: &mut impl Rng,
) -> Result<(), Skip> {
    let first_structure = draft
        .structures
        .iter()
        .map(|s| s.reparandum_start)
        .chain(draft.edits.iter().copied())
        .min()
        .unwrap_or(draft.len());
    let limit = first_structure.min(draft.len().saturating_sub(1));
    if limit == 0 {
        return Err(Skip::NotApplicable);
    }
    for _ in 0..MAX_ATTEMPTS {
        let fill = if !interregna.is_empty() && rng.gen_bool(p_interregnum) {
            phrase(interregna.choose(rng).expect("nonempty"))
        } else {
            Vec::new()
        };
        let k = fill.len();
        let max_break = limit.min((MAX_RETRACE as usize).saturating_sub(k));
        if max_break == 0 {
            continue;
        }
        let b = rng.gen_range(1..=max_break);
        let mut inserted = fill;
        let mut edit = vec![true; k];
        inserted.extend(draft.words[..b].iter().cloned());
        edit.extend(std::iter::repeat(false).take(b));
        draft.insert(b, inserted, &edit);
        draft.add_structure(substitution(0..b, k, b));
        draft.applied.push(Phenomenon::ClRestart);
        return Ok(());
    }
    Err(Skip::RetraceBound)
}

/// Replaces a slot value by a wrong one, followed by an interregnum and the
/// intended value. Short-distance corrections repair the value alone
/// (`with italian sorry spanish food`); long-distance ones repeat the whole PP
/// (`with italian food uhm sorry with spanish food`). The wrong value is the
/// reparandum, so cleaning yields the original turn.
pub fn apply_correction(
    draft: &mut Draft,
    interregna: &[String],
    p_long: f64,
    rng: &mut impl Rng,
) -> Result<(), Skip> {
    let candidates: Vec<Mention> = draft
        .mentions
        .iter()
        .copied()
        .filter(|m| m.slot.fillers().len() >= 2 && !draft.touches_structure(m.at..m.at + 1))
        .collect();
    if candidates.is_empty() || interregna.is_empty() {
        return Err(Skip::NotApplicable);
    }
    for _ in 0..MAX_ATTEMPTS {
        let m = *candidates.choose(rng).expect("nonempty");
        let original = draft.words[m.at].word.clone();
        let alternatives: Vec<&str> = m
            .slot
            .fillers()
            .iter()
            .copied()
            .filter(|f| *f != original)
            .collect();
        let Some(&wrong) = alternatives.choose(rng) else {
            continue;
        };
        let fill = phrase(interregna.choose(rng).expect("nonempty"));
        let k = fill.len();
        let wrong_word = Word {
            word: wrong.to_string(),
            pos: m.slot.pos().to_string(),
        };
        let pp = draft
            .pps
            .iter()
            .copied()
            .find(|pp| pp.start <= m.at && m.at < pp.end && !draft.touches_structure(pp.start..pp.end));
        let long = pp.is_some() && rng.gen_bool(p_long);
        if let (true, Some(pp)) = (long, pp) {
            let len = pp.end - pp.start;
            if len + k > MAX_RETRACE as usize {
                continue;
            }
            let mut inserted: Vec<Word> = draft.words[pp.start..pp.end].to_vec();
            inserted[m.at - pp.start] = wrong_word;
            let mut edit = vec![false; len];
            inserted.extend(fill);
            edit.extend(std::iter::repeat(true).take(k));
            draft.insert(pp.start, inserted, &edit);
            draft.add_structure(substitution(pp.start..pp.start + len, k, len));
        } else {
            if 1 + k > MAX_RETRACE as usize {
                continue;
            }
            let mut inserted = vec![wrong_word];
            inserted.extend(fill);
            let mut edit = vec![false];
            edit.extend(std::iter::repeat(true).take(k));
            draft.insert(m.at, inserted, &edit);
            draft.add_structure(substitution(m.at..m.at + 1, k, 1));
        }
        draft.applied.push(Phenomenon::Correction);
        return Ok(());
    }
    Err(Skip::RetraceBound)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tagset::{parse_tag, resolve_structures};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn t(s: &str) -> Vec<Tag> {
        s.split_whitespace().map(|x| parse_tag(x).unwrap()).collect()
    }

    fn strings(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    fn check(d: &Draft) {
        let tags = d.tags();
        assert_eq!(resolve_structures(&tags).unwrap(), d.structures());
        let cleaned = tagset::clean_utterance(&d.words, &d.structures, &d.edits);
        assert_eq!(cleaned, d.original);
    }

    #[test]
    fn hesitation_inserts_one_edit() {
        let mut d = Draft::from_words(&["we", "will", "be", "eight"], vec![], &[(3, Slot::PartySize)]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        loop {
            let mut trial = d.clone();
            apply_hesitation(&mut trial, &strings(&["uhm"]), &mut rng).unwrap();
            if trial.words() == ["we", "will", "be", "uhm", "eight"] {
                d = trial;
                break;
            }
        }
        assert_eq!(d.tags(), t("<f/> <f/> <f/> <e/> <f/>"));
        assert!(d.structures().is_empty());
        check(&d);
    }

    #[test]
    fn hesitation_stays_out_of_interregna() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let corr = strings(&["sorry", "oh no"]);
        let fillers = strings(&["uh"]);
        for _ in 0..500 {
            let turns = super::super::templates::dialogue_turns(&mut rng);
            for (_, tpl) in turns.into_iter().filter(|(u, _)| *u) {
                let mut d = Draft::from_template(&tpl);
                if apply_correction(&mut d, &corr, 0.5, &mut rng).is_err() {
                    continue;
                }
                let before = d.structures().iter().map(|s| s.interregnum_end - s.interregnum_start).sum::<usize>();
                if apply_hesitation(&mut d, &fillers, &mut rng).is_ok() {
                    let s = resolve_structures(&d.tags()).unwrap();
                    let after = s.iter().map(|s| s.interregnum_end - s.interregnum_start).sum::<usize>();
                    assert_eq!(before, after);
                    check(&d);
                }
            }
        }
    }

    #[test]
    fn hesitation_needs_two_words() {
        let mut d = Draft::from_words(&["hi"], vec![], &[]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(
            apply_hesitation(&mut d, &strings(&["uh"]), &mut rng),
            Err(Skip::NotApplicable)
        );
    }

    #[test]
    fn pp_restart_matches_worked_example() {
        let pp = PpSpan {
            start: 0,
            prefix_len: 2,
            end: 5,
            slot: Slot::Price,
        };
        let base = Draft::from_words(&["in", "a", "moderate", "price", "range"], vec![pp], &[(2, Slot::Price)]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut found = false;
        for _ in 0..500 {
            let mut d = base.clone();
            apply_pp_restart(&mut d, &strings(&["um"]), 0.5, &mut rng).unwrap();
            check(&d);
            if d.words().join(" ") == "in a in a um in a moderate price range" {
                let spans: Vec<_> = d
                    .structures()
                    .iter()
                    .map(|s| (s.reparandum_start, s.reparandum_end, s.repair_start, s.repair_end))
                    .collect();
                assert_eq!(spans, vec![(0, 2, 2, 4), (2, 4, 5, 7)]);
                assert_eq!(
                    d.tags(),
                    t("<f/> <f/> <rm-2/><rpMid/> <rpEndSub/> <e/> <rm-3/><rpMid/> <rpEndSub/> <f/> <f/> <f/>")
                );
                found = true;
            }
        }
        assert!(found);
    }

    #[test]
    fn one_word_pp_restart_is_retrace_one() {
        let pp = PpSpan {
            start: 0,
            prefix_len: 1,
            end: 3,
            slot: Slot::Cuisine,
        };
        let base = Draft::from_words(&["with", "thai", "food"], vec![pp], &[(1, Slot::Cuisine)]);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut d = base.clone();
        apply_pp_restart(&mut d, &strings(&["um"]), 0.0, &mut rng).unwrap();
        assert_eq!(&d.words()[..2], ["with", "with"]);
        assert_eq!(d.tags()[1], parse_tag("<rm-1/><rpEndSub/>").unwrap());
        check(&d);
    }

    #[test]
    fn pp_restart_without_pp_is_noop() {
        let mut d = Draft::from_words(&["rome", "please"], vec![], &[(0, Slot::Location)]);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        assert_eq!(
            apply_pp_restart(&mut d, &strings(&["um"]), 0.5, &mut rng),
            Err(Skip::NotApplicable)
        );
        assert_eq!(d.words(), ["rome", "please"]);
    }

    #[test]
    fn cl_restart_matches_worked_example() {
        let text = "can you make a restaurant reservation";
        let words: Vec<&str> = text.split(' ').collect();
        let base = Draft::from_words(&words, vec![], &[]);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut found = false;
        for _ in 0..2000 {
            let mut d = base.clone();
            apply_cl_restart(&mut d, &strings(&["uhm yeah", "um"]), 0.5, &mut rng).unwrap();
            check(&d);
            if d.words().join(" ")
                == "can you make a restaurant uhm yeah can you make a restaurant reservation"
            {
                assert_eq!(
                    d.tags(),
                    t("<f/> <f/> <f/> <f/> <f/> <e/> <e/> <rm-7/><rpMid/> <f/> <f/> <f/> <rpEndSub/> <f/>")
                );
                found = true;
            }
            let s = d.structures()[0];
            if s.repair_end - s.repair_start == 1 {
                assert_eq!(d.tags()[s.repair_start].retrace(), Some(s.retrace() as u8));
            }
        }
        assert!(found);
    }

    #[test]
    fn short_correction_tags() {
        let pp = PpSpan {
            start: 0,
            prefix_len: 1,
            end: 3,
            slot: Slot::Cuisine,
        };
        let base = Draft::from_words(&["with", "spanish", "cuisine"], vec![pp], &[(1, Slot::Cuisine)]);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut d = base.clone();
        apply_correction(&mut d, &strings(&["sorry"]), 0.0, &mut rng).unwrap();
        let w = d.words();
        assert_eq!((w[0], w[2], w[3], w[4]), ("with", "sorry", "spanish", "cuisine"));
        assert_ne!(w[1], "spanish");
        assert_eq!(d.tags(), t("<f/> <f/> <e/> <rm-2/><rpEndSub/> <f/>"));
        check(&d);
    }

    #[test]
    fn long_correction_repeats_the_pp() {
        let pp = PpSpan {
            start: 0,
            prefix_len: 1,
            end: 3,
            slot: Slot::Cuisine,
        };
        let base = Draft::from_words(&["with", "spanish", "food"], vec![pp], &[(1, Slot::Cuisine)]);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut d = base.clone();
        apply_correction(&mut d, &strings(&["uhm sorry"]), 1.0, &mut rng).unwrap();
        let w = d.words();
        assert_eq!(w.len(), 8);
        assert_eq!(&w[3..], ["uhm", "sorry", "with", "spanish", "food"]);
        let s = d.structures()[0];
        assert_eq!((s.reparandum_start, s.reparandum_end, s.repair_start, s.repair_end), (0, 3, 5, 8));
        assert_eq!(d.tags()[5], parse_tag("<rm-5/><rpMid/>").unwrap());
        assert_eq!(d.tags()[7], Tag::RepairEnd);
        check(&d);
    }

    #[test]
    fn composed_phenomena_stay_consistent() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let corr = strings(&["sorry", "no sorry", "oh no", "uhm sorry", "i mean"]);
        let rest = strings(&["uhm yeah", "um", "uh"]);
        let fillers = strings(&["uh", "uhm", "um"]);
        for _ in 0..3000 {
            let turns = super::super::templates::dialogue_turns(&mut rng);
            for (user, tpl) in turns.into_iter().filter(|(u, _)| *u) {
                let _ = user;
                let mut d = Draft::from_template(&tpl);
                let _ = apply_correction(&mut d, &corr, 0.5, &mut rng);
                if rng.gen_bool(0.5) {
                    let _ = apply_pp_restart(&mut d, &rest, 0.5, &mut rng);
                } else {
                    let _ = apply_cl_restart(&mut d, &rest, 0.5, &mut rng);
                }
                for _ in 0..rng.gen_range(0..3) {
                    let _ = apply_hesitation(&mut d, &fillers, &mut rng);
                }
                check(&d);
            }
        }
    }
}
