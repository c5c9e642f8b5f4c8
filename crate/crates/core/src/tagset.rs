//! The 27-label disfluency tag scheme and repair-structure resolution.
//!
//! Every token of an utterance carries exactly one [`Tag`]:
//!
//! * `<f/>` fluent token
//! * `<e/>` edit token (filler or interregnum material)
//! * `<rm-N/><rpEndSub/>`, `<rm-N/><rpEndDel/>`, `<rm-N/><rpMid/>` repair onset whose
//!   reparandum starts `N` tokens back (`N` in `1..=8`)
//! * `<rpEndSub/>` end of a multi-token repair opened by an `<rpMid/>` onset
//!
//! [`resolve_structures`] turns a tag sequence into [`RepairStructure`] spans and
//! [`structures_to_tags`] is its inverse.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Largest retrace distance representable in the label inventory.
pub const MAX_RETRACE: u8 = 8;

/// Number of distinct tags.
pub const NUM_TAGS: usize = 27;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EndMarker {
    /// Single-token substitution repair.
    Sub,
    /// Single-token deletion repair.
    Del,
    /// First token of a multi-token substitution repair.
    Mid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Tag {
    Fluent,
    Edit,
    RepairOnset { retrace: u8, end: EndMarker },
    RepairEnd,
}

impl Tag {
    /// Dense class index in `0..27`: fluent, edit, the 24 onsets ordered by
    /// retrace then end marker, and finally the repair end.
    pub fn index(self) -> usize {
        match self {
            Tag::Fluent => 0,
            Tag::Edit => 1,
            Tag::RepairOnset { retrace, end } => {
                let e = match end {
                    EndMarker::Sub => 0,
                    EndMarker::Del => 1,
                    EndMarker::Mid => 2,
                };
                2 + (retrace as usize - 1) * 3 + e
            }
            Tag::RepairEnd => 26,
        }
    }

    pub fn from_index(index: usize) -> Option<Tag> {
        match index {
            0 => Some(Tag::Fluent),
            1 => Some(Tag::Edit),
            2..=25 => {
                let k = index - 2;
                let end = match k % 3 {
                    0 => EndMarker::Sub,
                    1 => EndMarker::Del,
                    _ => EndMarker::Mid,
                };
                Some(Tag::RepairOnset { retrace: (k / 3 + 1) as u8, end })
            }
            26 => Some(Tag::RepairEnd),
            _ => None,
        }
    }

    /// All 27 tags in class-index order.
    pub fn all() -> impl Iterator<Item = Tag> {
        (0..NUM_TAGS).map(|i| Tag::from_index(i).expect("index in range"))
    }

    pub fn is_edit(self) -> bool {
        matches!(self, Tag::Edit)
    }

    pub fn is_onset(self) -> bool {
        matches!(self, Tag::RepairOnset { .. })
    }

    pub fn retrace(self) -> Option<u8> {
        match self {
            Tag::RepairOnset { retrace, .. } => Some(retrace),
            _ => None,
        }
    }

    /// Canonical string form, as in `<rm-2/><rpMid/>`.
    pub fn render(self) -> String {
        match self {
            Tag::Fluent => "<f/>".to_string(),
            Tag::Edit => "<e/>".to_string(),
            Tag::RepairOnset { retrace, end } => {
                let end = match end {
                    EndMarker::Sub => "rpEndSub",
                    EndMarker::Del => "rpEndDel",
                    EndMarker::Mid => "rpMid",
                };
                format!("<rm-{retrace}/><{end}/>")
            }
            Tag::RepairEnd => "<rpEndSub/>".to_string(),
        }
    }
}

impl fmt::Display for Tag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TagError {
    #[error("malformed tag {text:?}: unexpected fragment {fragment:?}")]
    Malformed { text: String, fragment: String },
    #[error("retrace {retrace} in fragment {fragment:?} is outside 1..={MAX_RETRACE}")]
    RetraceOutOfRange { fragment: String, retrace: i64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Element {
    Fluent,
    Edit,
    Rm(u8),
    EndSub,
    EndDel,
    Mid,
}

fn split_elements(text: &str) -> Result<Vec<(Element, &str)>, TagError> {
    let malformed = |fragment: &str| TagError::Malformed {
        text: text.to_string(),
        fragment: fragment.to_string(),
    };
    let mut out = Vec::new();
    let mut rest = text.trim();
    if rest.is_empty() {
        return Err(malformed(text));
    }
    while !rest.is_empty() {
        if !rest.starts_with('<') {
            return Err(malformed(rest));
        }
        let close = rest.find('>').ok_or_else(|| malformed(rest))?;
        let fragment = &rest[..=close];
        let inner = &fragment[1..fragment.len() - 1];
        let name = inner.strip_suffix('/').unwrap_or(inner);
        let element = match name {
            "f" => Element::Fluent,
            "e" => Element::Edit,
            "rpEndSub" | "rpSub" => Element::EndSub,
            "rpEndDel" | "rpDel" => Element::EndDel,
            "rpMid" => Element::Mid,
            _ => {
                let digits = name.strip_prefix("rm-").ok_or_else(|| malformed(fragment))?;
                let retrace: i64 = digits.parse().map_err(|_| malformed(fragment))?;
                if !(1..=MAX_RETRACE as i64).contains(&retrace) {
                    return Err(TagError::RetraceOutOfRange {
                        fragment: fragment.to_string(),
                        retrace,
                    });
                }
                Element::Rm(retrace as u8)
            }
        };
        out.push((element, fragment));
        rest = &rest[close + 1..];
    }
    Ok(out)
}

/// Parses a tag string. Accepts the self-closing form as well as the
/// bare `<rpSub>`/`<rpDel>`/`<rm-4>` spellings.
pub fn parse_tag(text: &str) -> Result<Tag, TagError> {
    let elements = split_elements(text)?;
    let tag = match elements.as_slice() {
        [(Element::Fluent, _)] => Tag::Fluent,
        [(Element::Edit, _)] => Tag::Edit,
        [(Element::EndSub, _)] => Tag::RepairEnd,
        [(Element::Rm(retrace), _), (end, fragment)] => {
            let end = match end {
                Element::EndSub => EndMarker::Sub,
                Element::EndDel => EndMarker::Del,
                Element::Mid => EndMarker::Mid,
                _ => {
                    return Err(TagError::Malformed {
                        text: text.to_string(),
                        fragment: fragment.to_string(),
                    })
                }
            };
            Tag::RepairOnset { retrace: *retrace, end }
        }
        [first, rest @ ..] => {
            // The first fragment that cannot start or complete a tag.
            let offending = match (first.0, rest) {
                (_, []) => first.1,
                (Element::Rm(_), [_, extra, ..]) => extra.1,
                (_, [second, ..]) => second.1,
            };
            return Err(TagError::Malformed {
                text: text.to_string(),
                fragment: offending.to_string(),
            });
        }
        [] => unreachable!("split_elements rejects empty input"),
    };
    Ok(tag)
}

pub fn render_tag(tag: Tag) -> String {
    tag.render()
}

impl FromStr for Tag {
    type Err = TagError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_tag(s)
    }
}

impl Serialize for Tag {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.render())
    }
}

impl<'de> Deserialize<'de> for Tag {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        parse_tag(&s).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RepairKind {
    Substitution,
    Deletion,
}

/// Resolved spans of one self-repair. All ends are exclusive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RepairStructure {
    pub reparandum_start: usize,
    pub reparandum_end: usize,
    pub interregnum_start: usize,
    pub interregnum_end: usize,
    pub repair_start: usize,
    pub repair_end: usize,
    pub kind: RepairKind,
}

impl RepairStructure {
    pub fn retrace(&self) -> usize {
        self.repair_start - self.reparandum_start
    }

    /// Token range covered from reparandum start to repair end.
    pub fn span(&self) -> std::ops::Range<usize> {
        self.reparandum_start..self.repair_end
    }

    /// Checks the span-ordering invariant against an utterance of `len` tokens.
    pub fn is_ordered(&self, len: usize) -> bool {
        self.reparandum_start < self.reparandum_end
            && self.reparandum_end == self.interregnum_start
            && self.interregnum_start <= self.interregnum_end
            && self.interregnum_end == self.repair_start
            && self.repair_start < self.repair_end
            && self.repair_end <= len
    }

    /// Shifts the structure for a token inserted at `pos` (before the token
    /// currently at `pos`). Insertions inside the reparandum or interregnum
    /// lengthen the retrace; insertions inside a multi-token repair lengthen
    /// the repair.
    pub fn shift_for_insert(&mut self, pos: usize, count: usize) {
        if pos <= self.reparandum_start {
            self.reparandum_start += count;
            self.reparandum_end += count;
            self.interregnum_start += count;
            self.interregnum_end += count;
            self.repair_start += count;
            self.repair_end += count;
        } else if pos < self.reparandum_end {
            self.reparandum_end += count;
            self.interregnum_start += count;
            self.interregnum_end += count;
            self.repair_start += count;
            self.repair_end += count;
        } else if pos <= self.repair_start {
            self.interregnum_end += count;
            self.repair_start += count;
            self.repair_end += count;
        } else if pos < self.repair_end {
            self.repair_end += count;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StructureError {
    #[error("token {index}: retrace {retrace} reaches before the utterance start")]
    RetraceBeforeStart { index: usize, retrace: u8 },
    #[error("token {index}: retrace {retrace} does not reach past the interregnum")]
    EmptyReparandum { index: usize, retrace: u8 },
    #[error("token {index}: repair onset inside an open multi-token repair")]
    NestedRepair { index: usize },
    #[error("token {index}: multi-token repair is never closed")]
    UnclosedRepair { index: usize },
    #[error("token {index}: repair end without an open multi-token repair")]
    UnmatchedRepairEnd { index: usize },
}

impl StructureError {
    pub fn index(&self) -> usize {
        match *self {
            StructureError::RetraceBeforeStart { index, .. }
            | StructureError::EmptyReparandum { index, .. }
            | StructureError::NestedRepair { index }
            | StructureError::UnclosedRepair { index }
            | StructureError::UnmatchedRepairEnd { index } => index,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EncodeError {
    #[error("structure {index} needs retrace {retrace}, more than {MAX_RETRACE}")]
    Unrepresentable { index: usize, retrace: usize },
    #[error("structure {index} is malformed: {reason}")]
    Malformed { index: usize, reason: &'static str },
    #[error("structures {index} and {next} overlap")]
    Overlap { index: usize, next: usize },
    #[error("edit position {position} is out of range or collides with a repair tag")]
    BadEditPosition { position: usize },
}

fn interregnum_start(tags: &[Tag], onset: usize) -> usize {
    let mut s = onset;
    while s > 0 && tags[s - 1].is_edit() {
        s -= 1;
    }
    s
}

/// Stateful single pass shared by [`resolve_structures`] and [`sanitize_tags`].
/// With `repair` set, offending onset/end tags are rewritten to fluent instead of
/// producing an error.
fn resolve_pass(
    tags: &mut [Tag],
    repair: bool,
) -> Result<(Vec<RepairStructure>, usize), StructureError> {
    let mut out = Vec::new();
    let mut open: Option<RepairStructure> = None;
    let mut open_at = 0;
    let mut dropped = 0;
    for t in 0..tags.len() {
        match tags[t] {
            Tag::RepairOnset { retrace, end } => {
                let problem = if open.is_some() {
                    Some(StructureError::NestedRepair { index: t })
                } else if retrace as usize > t {
                    Some(StructureError::RetraceBeforeStart { index: t, retrace })
                } else if t - retrace as usize >= interregnum_start(tags, t) {
                    Some(StructureError::EmptyReparandum { index: t, retrace })
                } else {
                    None
                };
                if let Some(err) = problem {
                    if repair {
                        tags[t] = Tag::Fluent;
                        dropped += 1;
                        continue;
                    }
                    return Err(err);
                }
                let interregnum = interregnum_start(tags, t);
                let s = RepairStructure {
                    reparandum_start: t - retrace as usize,
                    reparandum_end: interregnum,
                    interregnum_start: interregnum,
                    interregnum_end: t,
                    repair_start: t,
                    repair_end: t + 1,
                    kind: if end == EndMarker::Del {
                        RepairKind::Deletion
                    } else {
                        RepairKind::Substitution
                    },
                };
                if end == EndMarker::Mid {
                    open = Some(s);
                    open_at = t;
                } else {
                    out.push(s);
                }
            }
            Tag::RepairEnd => match open.take() {
                Some(mut s) => {
                    s.repair_end = t + 1;
                    out.push(s);
                }
                None if repair => {
                    tags[t] = Tag::Fluent;
                    dropped += 1;
                }
                None => return Err(StructureError::UnmatchedRepairEnd { index: t }),
            },
            Tag::Fluent | Tag::Edit => {}
        }
    }
    if open.is_some() {
        if !repair {
            return Err(StructureError::UnclosedRepair { index: open_at });
        }
        tags[open_at] = Tag::Fluent;
        dropped += 1;
    }
    Ok((out, dropped))
}

/// Resolves one utterance's tags into repair structures, in onset order.
pub fn resolve_structures(tags: &[Tag]) -> Result<Vec<RepairStructure>, StructureError> {
    let mut tags = tags.to_vec();
    resolve_pass(&mut tags, false).map(|(s, _)| s)
}

/// Rewrites structurally invalid onset/end tags to fluent so the sequence
/// resolves. Returns the repaired sequence and the number of rewritten tags.
pub fn sanitize_tags(tags: &[Tag]) -> (Vec<Tag>, usize) {
    let mut tags = tags.to_vec();
    let (_, dropped) = resolve_pass(&mut tags, true).expect("repair mode never fails");
    (tags, dropped)
}

/// Positions tagged `<e/>`.
pub fn edit_positions(tags: &[Tag]) -> BTreeSet<usize> {
    tags.iter()
        .enumerate()
        .filter(|(_, t)| t.is_edit())
        .map(|(i, _)| i)
        .collect()
}

/// Inverse of [`resolve_structures`]. Structures must be ordered by onset and
/// their `[interregnum_start, repair_end)` regions must not overlap; reparanda
/// may reach back over earlier repairs (chained restarts).
pub fn structures_to_tags(
    structures: &[RepairStructure],
    len: usize,
    edits: &BTreeSet<usize>,
) -> Result<Vec<Tag>, EncodeError> {
    let mut tags = vec![Tag::Fluent; len];
    for &p in edits {
        if p >= len {
            return Err(EncodeError::BadEditPosition { position: p });
        }
        tags[p] = Tag::Edit;
    }
    for (i, s) in structures.iter().enumerate() {
        if !s.is_ordered(len) {
            return Err(EncodeError::Malformed {
                index: i,
                reason: "span ordering violated",
            });
        }
        let retrace = s.retrace();
        if retrace > MAX_RETRACE as usize {
            return Err(EncodeError::Unrepresentable { index: i, retrace });
        }
        let repair_len = s.repair_end - s.repair_start;
        if s.kind == RepairKind::Deletion && repair_len != 1 {
            return Err(EncodeError::Malformed {
                index: i,
                reason: "deletion repairs span exactly one token",
            });
        }
        if (s.interregnum_start..s.interregnum_end).any(|p| !edits.contains(&p)) {
            return Err(EncodeError::Malformed {
                index: i,
                reason: "interregnum token not marked as edit",
            });
        }
        if edits.contains(&(s.interregnum_start - 1)) {
            return Err(EncodeError::Malformed {
                index: i,
                reason: "edit token directly before the interregnum",
            });
        }
        if let Some(next) = structures.get(i + 1) {
            if s.repair_end > next.interregnum_start {
                return Err(EncodeError::Overlap { index: i, next: i + 1 });
            }
        }
        if edits.contains(&s.repair_start) {
            return Err(EncodeError::BadEditPosition {
                position: s.repair_start,
            });
        }
        let end = match (s.kind, repair_len) {
            (RepairKind::Deletion, _) => EndMarker::Del,
            (RepairKind::Substitution, 1) => EndMarker::Sub,
            (RepairKind::Substitution, _) => {
                if edits.contains(&(s.repair_end - 1)) {
                    return Err(EncodeError::BadEditPosition {
                        position: s.repair_end - 1,
                    });
                }
                tags[s.repair_end - 1] = Tag::RepairEnd;
                EndMarker::Mid
            }
        };
        tags[s.repair_start] = Tag::RepairOnset {
            retrace: retrace as u8,
            end,
        };
    }
    Ok(tags)
}

/// Removes reparanda and edit tokens, leaving the fluent reading. The onset of
/// a deletion repair is the first continuation token and is kept.
pub fn clean_utterance<T: Clone>(
    tokens: &[T],
    structures: &[RepairStructure],
    edits: &BTreeSet<usize>,
) -> Vec<T> {
    let mut keep = vec![true; tokens.len()];
    for s in structures {
        for k in &mut keep[s.reparandum_start..s.reparandum_end.min(tokens.len())] {
            *k = false;
        }
    }
    for &p in edits {
        if p < keep.len() {
            keep[p] = false;
        }
    }
    tokens
        .iter()
        .zip(keep)
        .filter(|(_, k)| *k)
        .map(|(t, _)| t.clone())
        .collect()
}

/// Cleans a token sequence using its own tags.
pub fn clean_with_tags<T: Clone>(tokens: &[T], tags: &[Tag]) -> Result<Vec<T>, StructureError> {
    let structures = resolve_structures(tags)?;
    Ok(clean_utterance(tokens, &structures, &edit_positions(tags)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tags(s: &str) -> Vec<Tag> {
        s.split_whitespace().map(|t| parse_tag(t).unwrap()).collect()
    }

    fn onset(retrace: u8, end: EndMarker) -> Tag {
        Tag::RepairOnset { retrace, end }
    }

    #[test]
    fn inventory_has_27_distinct_tags() {
        let all: BTreeSet<Tag> = Tag::all().collect();
        assert_eq!(all.len(), NUM_TAGS);
        for (i, t) in Tag::all().enumerate() {
            assert_eq!(t.index(), i);
        }
        assert_eq!(Tag::from_index(27), None);
    }

    #[test]
    fn parses_bare_forms() {
        assert_eq!(parse_tag("<f/>").unwrap(), Tag::Fluent);
        assert_eq!(
            parse_tag("<rm-4/><rpEndSub/>").unwrap(),
            onset(4, EndMarker::Sub)
        );
        assert_eq!(parse_tag("<rm-4><rpSub>").unwrap(), onset(4, EndMarker::Sub));
        assert_eq!(parse_tag("<rm-1/><rpDel>").unwrap(), onset(1, EndMarker::Del));
        assert_eq!(parse_tag("<rpEndSub>").unwrap(), Tag::RepairEnd);
        assert_eq!(parse_tag("<rm-2/><rpMid/>").unwrap(), onset(2, EndMarker::Mid));
    }

    #[test]
    fn rejects_bad_retrace_and_garbage() {
        let err = parse_tag("<rm-9/><rpEndSub/>").unwrap_err();
        assert!(matches!(err, TagError::RetraceOutOfRange { retrace: 9, .. }));
        assert!(err.to_string().contains("<rm-9/>"));
        assert!(matches!(
            parse_tag("<rm-0/><rpEndSub/>"),
            Err(TagError::RetraceOutOfRange { retrace: 0, .. })
        ));
        for bad in ["", "f", "<x/>", "<rm-3/>", "<rpEndDel/>", "<f/><e/>", "<rm-a/><rpMid/>", "<f"] {
            assert!(parse_tag(bad).is_err(), "{bad:?} should not parse");
        }
        match parse_tag("<rm-2/><zz/>").unwrap_err() {
            TagError::Malformed { fragment, .. } => assert_eq!(fragment, "<zz/>"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn renders_canonical_names() {
        assert_eq!(render_tag(Tag::Fluent), "<f/>");
        assert_eq!(render_tag(onset(2, EndMarker::Mid)), "<rm-2/><rpMid/>");
        assert_eq!(render_tag(Tag::RepairEnd), "<rpEndSub/>");
        for t in Tag::all() {
            assert_eq!(parse_tag(&render_tag(t)).unwrap(), t);
        }
    }

    #[test]
    fn resolves_example_two() {
        // with Italian uh no uh Spanish cuisine
        let t = tags("<f/> <f/> <e/> <e/> <e/> <rm-4/><rpEndSub/> <f/>");
        let s = resolve_structures(&t).unwrap();
        assert_eq!(
            s,
            vec![RepairStructure {
                reparandum_start: 1,
                reparandum_end: 2,
                interregnum_start: 2,
                interregnum_end: 5,
                repair_start: 5,
                repair_end: 6,
                kind: RepairKind::Substitution,
            }]
        );
        let words: Vec<&str> = "with Italian uh no uh Spanish cuisine".split(' ').collect();
        assert_eq!(
            clean_with_tags(&words, &t).unwrap(),
            vec!["with", "Spanish", "cuisine"]
        );
        assert_eq!(structures_to_tags(&s, 7, &edit_positions(&t)).unwrap(), t);
    }

    #[test]
    fn all_fluent_resolves_to_nothing() {
        assert!(resolve_structures(&[Tag::Fluent; 5]).unwrap().is_empty());
        assert_eq!(
            structures_to_tags(&[], 4, &BTreeSet::new()).unwrap(),
            vec![Tag::Fluent; 4]
        );
        let words = ["a", "b"];
        assert_eq!(clean_utterance(&words, &[], &BTreeSet::new()), words.to_vec());
    }

    #[test]
    fn structural_errors_name_the_token() {
        let t = vec![Tag::Fluent, onset(3, EndMarker::Sub)];
        assert_eq!(
            resolve_structures(&t),
            Err(StructureError::RetraceBeforeStart { index: 1, retrace: 3 })
        );
        let t = vec![Tag::Fluent, onset(1, EndMarker::Mid), Tag::Fluent];
        assert_eq!(
            resolve_structures(&t),
            Err(StructureError::UnclosedRepair { index: 1 })
        );
        let t = vec![Tag::Fluent, Tag::RepairEnd];
        assert_eq!(
            resolve_structures(&t),
            Err(StructureError::UnmatchedRepairEnd { index: 1 })
        );
        let t = vec![Tag::Fluent, Tag::Edit, onset(1, EndMarker::Sub)];
        assert_eq!(
            resolve_structures(&t),
            Err(StructureError::EmptyReparandum { index: 2, retrace: 1 })
        );
        let t = vec![
            Tag::Fluent,
            onset(1, EndMarker::Mid),
            onset(1, EndMarker::Sub),
            Tag::RepairEnd,
        ];
        assert_eq!(
            resolve_structures(&t),
            Err(StructureError::NestedRepair { index: 2 })
        );
    }

    #[test]
    fn sanitize_drops_offending_tags_only() {
        let t = vec![
            Tag::RepairEnd,
            Tag::Fluent,
            onset(1, EndMarker::Sub),
            onset(1, EndMarker::Mid),
        ];
        let (fixed, dropped) = sanitize_tags(&t);
        assert_eq!(dropped, 2);
        assert_eq!(
            fixed,
            vec![Tag::Fluent, Tag::Fluent, onset(1, EndMarker::Sub), Tag::Fluent]
        );
        assert!(resolve_structures(&fixed).is_ok());
    }

    #[test]
    fn deletion_keeps_its_onset_when_cleaning() {
        // i went uh i like it : reparandum "i went", deletion onset "i"
        let words = ["i", "went", "uh", "i", "like", "it"];
        let t = vec![
            Tag::Fluent,
            Tag::Fluent,
            Tag::Edit,
            onset(3, EndMarker::Del),
            Tag::Fluent,
            Tag::Fluent,
        ];
        let s = resolve_structures(&t).unwrap();
        assert_eq!(s[0].kind, RepairKind::Deletion);
        assert_eq!(clean_with_tags(&words, &t).unwrap(), vec!["i", "like", "it"]);
    }

    #[test]
    fn encoder_rejects_long_retrace_and_overlap() {
        let s = RepairStructure {
            reparandum_start: 0,
            reparandum_end: 9,
            interregnum_start: 9,
            interregnum_end: 9,
            repair_start: 9,
            repair_end: 10,
            kind: RepairKind::Substitution,
        };
        assert!(matches!(
            structures_to_tags(&[s], 12, &BTreeSet::new()),
            Err(EncodeError::Unrepresentable { retrace: 9, .. })
        ));
        let a = RepairStructure {
            reparandum_start: 0,
            reparandum_end: 1,
            interregnum_start: 1,
            interregnum_end: 1,
            repair_start: 1,
            repair_end: 3,
            kind: RepairKind::Substitution,
        };
        let b = RepairStructure {
            reparandum_start: 1,
            reparandum_end: 2,
            interregnum_start: 2,
            interregnum_end: 2,
            repair_start: 2,
            repair_end: 3,
            kind: RepairKind::Substitution,
        };
        assert!(matches!(
            structures_to_tags(&[a, b], 4, &BTreeSet::new()),
            Err(EncodeError::Overlap { .. })
        ));
    }

    #[test]
    fn insert_shift_tracks_roles() {
        let base = RepairStructure {
            reparandum_start: 2,
            reparandum_end: 4,
            interregnum_start: 4,
            interregnum_end: 5,
            repair_start: 5,
            repair_end: 7,
            kind: RepairKind::Substitution,
        };
        let shifted = |pos| {
            let mut s = base;
            s.shift_for_insert(pos, 1);
            s
        };
        assert_eq!(shifted(2).reparandum_start, 3);
        assert_eq!(shifted(3).retrace(), 4);
        let s = shifted(4);
        assert_eq!((s.interregnum_start, s.interregnum_end, s.retrace()), (4, 6, 4));
        assert_eq!(shifted(5).retrace(), 4);
        let s = shifted(6);
        assert_eq!((s.retrace(), s.repair_end), (3, 8));
        assert_eq!(shifted(7), base);
    }
}
