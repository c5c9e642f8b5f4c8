//! Test oracles shared by the integration tests. Everything here works from
//! first principles on tag strings so it does not share code paths with the
//! library under test.

#![allow(dead_code)]

use std::collections::BTreeSet;

use disfluency::tagset::{RepairKind, RepairStructure, Tag, MAX_RETRACE};
use rand::Rng;

/// A random utterance with a valid set of repair structures and edit tokens.
#[derive(Debug, Clone)]
pub struct RandomUtterance {
    pub len: usize,
    pub structures: Vec<RepairStructure>,
    pub edits: BTreeSet<usize>,
}

/// Builds an utterance left to right: fluent tokens, stray edits and repairs
/// whose reparandum may reach back over earlier repairs.
pub fn random_utterance(rng: &mut impl Rng, max_events: usize) -> RandomUtterance {
    let mut len = 0usize;
    let mut edits = BTreeSet::new();
    let mut structures = Vec::new();
    let events = rng.gen_range(1..=max_events);
    for _ in 0..events {
        match rng.gen_range(0..10) {
            0..=3 => len += 1,
            4 | 5 => {
                edits.insert(len);
                len += 1;
            }
            _ => {
                // the reparandum must end on a non-edit token
                if len == 0 || edits.contains(&(len - 1)) {
                    len += 1;
                }
                let k = rng.gen_range(0..=3usize);
                let max_r = len.min(MAX_RETRACE as usize - k);
                if max_r == 0 {
                    continue;
                }
                let r = rng.gen_range(1..=max_r);
                let reparandum_end = len;
                for p in len..len + k {
                    edits.insert(p);
                }
                len += k;
                let repair_start = len;
                let deletion = rng.gen_bool(0.2);
                let m = if deletion { 1 } else { rng.gen_range(1..=4usize) };
                for p in repair_start + 1..repair_start + m.saturating_sub(1) {
                    if rng.gen_bool(0.2) {
                        edits.insert(p);
                    }
                }
                len += m;
                structures.push(RepairStructure {
                    reparandum_start: reparandum_end - r,
                    reparandum_end,
                    interregnum_start: reparandum_end,
                    interregnum_end: repair_start,
                    repair_start,
                    repair_end: repair_start + m,
                    kind: if deletion {
                        RepairKind::Deletion
                    } else {
                        RepairKind::Substitution
                    },
                });
            }
        }
    }
    if len == 0 {
        len = 1;
    }
    RandomUtterance { len, structures, edits }
}

/// Any tag, valid or not.
pub fn random_tag(rng: &mut impl Rng) -> Tag {
    match rng.gen_range(0..10) {
        0..=4 => Tag::Fluent,
        5 | 6 => Tag::Edit,
        7 => Tag::RepairEnd,
        _ => Tag::from_index(rng.gen_range(2..26)).unwrap(),
    }
}

/// `(retrace, end)` of an onset string such as `<rm-3/><rpMid/>`.
fn onset(tag: &str) -> Option<(usize, &str)> {
    let rest = tag.strip_prefix("<rm-")?;
    let (n, end) = rest.split_once("/>")?;
    Some((n.parse().ok()?, end))
}

/// Token positions inside `[reparandum start, repair end)` of some structure,
/// after dropping onset and end tags that cannot be resolved.
pub fn oracle_repair_tokens(tags: &[String]) -> BTreeSet<usize> {
    let mut tags = tags.to_vec();
    let mut covered = BTreeSet::new();
    let mut open: Option<(usize, usize)> = None;
    for t in 0..tags.len() {
        if let Some((n, end)) = onset(&tags[t]) {
            let mut edits_before = 0;
            while edits_before < t && tags[t - 1 - edits_before] == "<e/>" {
                edits_before += 1;
            }
            if open.is_some() || n > t || n <= edits_before {
                tags[t] = "<f/>".into();
                continue;
            }
            if end == "<rpMid/>" {
                open = Some((t - n, t));
            } else {
                covered.extend(t - n..=t);
            }
        } else if tags[t] == "<rpEndSub/>" {
            match open.take() {
                Some((start, _)) => covered.extend(start..=t),
                None => tags[t] = "<f/>".into(),
            }
        }
    }
    covered
}

/// `(tp, fp, fn)` of one utterance pair, for edit tokens.
pub fn oracle_edit(gold: &[String], pred: &[String]) -> (u64, u64, u64) {
    let mut c = (0, 0, 0);
    for (g, p) in gold.iter().zip(pred) {
        match (g == "<e/>", p == "<e/>") {
            (true, true) => c.0 += 1,
            (false, true) => c.1 += 1,
            (true, false) => c.2 += 1,
            _ => {}
        }
    }
    c
}

/// `(tp, fp, fn)` for repair onsets; with `strict` the whole onset tag must
/// agree, otherwise only the retrace number.
pub fn oracle_rm(gold: &[String], pred: &[String], strict: bool) -> (u64, u64, u64) {
    let mut c = (0, 0, 0);
    for (g, p) in gold.iter().zip(pred) {
        match (onset(g), onset(p)) {
            (Some(a), Some(b)) => {
                let same = if strict { g == p } else { a.0 == b.0 };
                if same {
                    c.0 += 1;
                } else {
                    c.1 += 1;
                    c.2 += 1;
                }
            }
            (None, Some(_)) => c.1 += 1,
            (Some(_), None) => c.2 += 1,
            (None, None) => {}
        }
    }
    c
}

pub fn oracle_rps(gold: &[String], pred: &[String]) -> (u64, u64, u64) {
    let g = oracle_repair_tokens(gold);
    let p = oracle_repair_tokens(pred);
    let tp = g.intersection(&p).count() as u64;
    (tp, p.len() as u64 - tp, g.len() as u64 - tp)
}

pub fn strings(tags: &[Tag]) -> Vec<String> {
    tags.iter().map(|t| t.render()).collect()
}
