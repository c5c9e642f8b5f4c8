//! Restaurant-booking dialogue templates with POS annotations.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Slot {
    Cuisine,
    Location,
    PartySize,
    Price,
}

impl Slot {
    /// Order in which the system asks for missing slots.
    pub const ALL: [Slot; 4] = [Slot::Cuisine, Slot::Location, Slot::PartySize, Slot::Price];

    pub fn fillers(self) -> &'static [&'static str] {
        match self {
            Slot::Cuisine => &[
                "italian", "french", "spanish", "indian", "british", "japanese", "thai", "korean",
            ],
            Slot::Location => &[
                "rome", "paris", "london", "madrid", "bombay", "tokyo", "seoul", "beijing",
            ],
            Slot::PartySize => &["two", "four", "six", "eight"],
            Slot::Price => &["cheap", "moderate", "expensive"],
        }
    }

    pub fn pos(self) -> &'static str {
        match self {
            Slot::Cuisine | Slot::Price => "JJ",
            Slot::Location => "NNP",
            Slot::PartySize => "CD",
        }
    }
}

/// Closed POS lexicon for every non-slot word the generator can emit.
pub fn pos_of(word: &str) -> &'static str {
    match word {
        "can" | "would" | "may" | "should" => "MD",
        "you" | "i" | "it" | "we" => "PRP",
        "make" | "book" | "have" | "help" | "like" | "look" | "be" | "love" => "VB",
        "a" | "any" | "some" | "which" => "DT",
        "restaurant" | "reservation" | "table" | "food" | "cuisine" | "price" | "range"
        | "preference" | "type" | "party" | "today" | "api_call" => "NN",
        "people" | "options" => "NNS",
        "to" => "TO",
        "with" | "in" | "for" | "on" | "of" | "into" => "IN",
        "please" | "ok" | "hello" | "uh" | "uhm" | "um" | "oh" | "no" | "yeah" | "sorry" => "UH",
        "what" => "WP",
        "where" | "how" => "WRB",
        "many" => "JJ",
        "am" | "are" | "mean" => "VBP",
        "will" => "MD",
        "let" => "VB",
        "me" => "PRP",
        "your" => "PRP$",
        "looking" => "VBG",
        _ => "UH",
    }
}

/// A word of a template turn together with its annotations.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TemplateWord {
    pub word: String,
    pub pos: String,
    pub slot: Option<Slot>,
}

/// A prepositional phrase `[start, end)` whose first `prefix_len` words
/// (preposition plus determiner) can be restarted.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PpSpan {
    pub start: usize,
    pub prefix_len: usize,
    pub end: usize,
    pub slot: Slot,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TurnTemplate {
    pub words: Vec<TemplateWord>,
    pub pps: Vec<PpSpan>,
}

impl TurnTemplate {
    fn push_words(&mut self, text: &str) {
        for w in text.split_whitespace() {
            self.words.push(TemplateWord {
                word: w.to_string(),
                pos: pos_of(w).to_string(),
                slot: None,
            });
        }
    }

    fn push_slot(&mut self, slot: Slot, value: &str) {
        self.words.push(TemplateWord {
            word: value.to_string(),
            pos: slot.pos().to_string(),
            slot: Some(slot),
        });
    }

    /// Appends a pattern where `{}` marks the slot value. `pp_prefix` gives the
    /// length of the restartable prefix when the whole pattern is a PP.
    fn push_pattern(&mut self, pattern: &str, slot: Slot, value: &str, pp_prefix: Option<usize>) {
        let start = self.words.len();
        for w in pattern.split_whitespace() {
            if w == "{}" {
                self.push_slot(slot, value);
            } else {
                self.push_words(w);
            }
        }
        if let Some(prefix_len) = pp_prefix {
            self.pps.push(PpSpan {
                start,
                prefix_len,
                end: self.words.len(),
                slot,
            });
        }
    }

    pub fn text(&self) -> String {
        self.words
            .iter()
            .map(|w| w.word.as_str())
            .collect::<Vec<_>>()
            .join(" ")
    }
}

/// PP realization of a slot inside a request.
fn slot_pp(slot: Slot, rng: &mut impl Rng) -> (&'static str, usize) {
    match slot {
        Slot::Cuisine => *[("with {} food", 1), ("with {} cuisine", 1)]
            .choose(rng)
            .expect("nonempty"),
        Slot::Location => ("in {}", 1),
        Slot::PartySize => ("for {} people", 1),
        Slot::Price => ("in a {} price range", 2),
    }
}

const REQUESTS: [&str; 4] = [
    "can you make a restaurant reservation",
    "can you book a table",
    "i would like to book a table",
    "may i have a table",
];

/// Opening request mentioning the given slots in order.
pub fn request_turn(slots: &[(Slot, &str)], rng: &mut impl Rng) -> TurnTemplate {
    let mut t = TurnTemplate::default();
    t.push_words(REQUESTS.choose(rng).expect("nonempty"));
    for &(slot, value) in slots {
        let (pattern, prefix) = slot_pp(slot, rng);
        t.push_pattern(pattern, slot, value, Some(prefix));
    }
    if rng.gen_bool(0.3) {
        t.push_words("please");
    }
    t
}

/// Answer to the system's question about one slot.
pub fn answer_turn(slot: Slot, value: &str, rng: &mut impl Rng) -> TurnTemplate {
    // (pattern, PP prefix length, trailing words)
    let options: &[(&str, Option<usize>, &str)] = match slot {
        Slot::Cuisine => &[
            ("with {} food", Some(1), ""),
            ("{} food", None, "please"),
            ("i love {} food", None, ""),
            ("{} cuisine", None, "please"),
        ],
        Slot::Location => &[
            ("in {}", Some(1), ""),
            ("{}", None, "please"),
            ("in {}", Some(1), "please"),
        ],
        Slot::PartySize => &[
            ("for {} people", Some(1), "please"),
            ("we will be {}", None, ""),
            ("{} people", None, ""),
        ],
        Slot::Price => &[
            ("in a {} price range", Some(2), "please"),
            ("{} price range", None, "please"),
        ],
    };
    let &(pattern, prefix, trailer) = options.choose(rng).expect("nonempty");
    let mut t = TurnTemplate::default();
    t.push_pattern(pattern, slot, value, prefix);
    t.push_words(trailer);
    t
}

pub fn system_question(slot: Slot) -> &'static str {
    match slot {
        Slot::Cuisine => "any preference on a type of cuisine",
        Slot::Location => "where should it be",
        Slot::PartySize => "how many people would be in your party",
        Slot::Price => "which price range are you looking for",
    }
}

pub const SYSTEM_GREETING: &str = "hello what can i help you with today";
pub const SYSTEM_ACK: &str = "i am on it";
pub const SYSTEM_SEARCH: &str = "ok let me look into some options for you";

/// Fluent turns of one dialogue, in order, with speaker flags (`true` = user).
pub fn dialogue_turns(rng: &mut impl Rng) -> Vec<(bool, TurnTemplate)> {
    let values: Vec<(Slot, &str)> = Slot::ALL
        .iter()
        .map(|&s| (s, *s.fillers().choose(rng).expect("nonempty")))
        .collect();
    let n_mentioned = rng.gen_range(1..=Slot::ALL.len());
    let mut mentioned: Vec<usize> = (0..Slot::ALL.len()).collect();
    mentioned.shuffle(rng);
    mentioned.truncate(n_mentioned);
    let in_request: Vec<(Slot, &str)> = mentioned.iter().map(|&i| values[i]).collect();

    let sys = |text: &str| {
        let mut t = TurnTemplate::default();
        t.push_words(text);
        (false, t)
    };
    let mut turns = vec![sys(SYSTEM_GREETING), (true, request_turn(&in_request, rng))];
    turns.push(sys(SYSTEM_ACK));
    for (i, &(slot, value)) in values.iter().enumerate() {
        if mentioned.contains(&i) {
            continue;
        }
        turns.push(sys(system_question(slot)));
        turns.push((true, answer_turn(slot, value, rng)));
    }
    turns.push(sys(SYSTEM_SEARCH));
    let mut call = TurnTemplate::default();
    call.push_words("api_call");
    for &(slot, value) in &values {
        call.push_slot(slot, value);
    }
    turns.push((false, call));
    turns
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn every_slot_has_alternatives() {
        for s in Slot::ALL {
            assert!(s.fillers().len() >= 2);
        }
    }

    #[test]
    fn user_turns_have_a_slot_and_two_words() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..500 {
            for (user, t) in dialogue_turns(&mut rng) {
                if user {
                    assert!(t.words.len() >= 2, "{}", t.text());
                    assert!(t.words.iter().any(|w| w.slot.is_some()));
                }
                for pp in &t.pps {
                    assert!(pp.start + pp.prefix_len < pp.end);
                    assert!(t.words[pp.start..pp.end].iter().any(|w| w.slot == Some(pp.slot)));
                }
            }
        }
    }

    #[test]
    fn price_pp_has_two_word_prefix() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let t = request_turn(&[(Slot::Price, "moderate")], &mut rng);
        let pp = t.pps[0];
        let words: Vec<&str> = t.words[pp.start..pp.end].iter().map(|w| w.word.as_str()).collect();
        assert_eq!(words, ["in", "a", "moderate", "price", "range"]);
        assert_eq!(pp.prefix_len, 2);
    }
}
