//! Rule-based answer normalization.
//!
//! Pipeline per token: lowercase, strip punctuation, map number words to
//! digits, lemmatize to a fixed point, drop articles and prepositions. Every
//! stage's output is a fixed point of the stages before it, which makes the
//! whole function idempotent.

use std::borrow::Cow;
use std::collections::{HashMap, HashSet};
use std::sync::OnceLock;

pub const ARTICLES: [&str; 3] = ["a", "an", "the"];
pub const PREPOSITIONS: [&str; 9] = ["of", "in", "on", "at", "to", "for", "with", "by", "from"];

const NUMBER_WORDS: [(&str, &str); 11] = [
    ("zero", "0"),
    ("one", "1"),
    ("two", "2"),
    ("three", "3"),
    ("four", "4"),
    ("five", "5"),
    ("six", "6"),
    ("seven", "7"),
    ("eight", "8"),
    ("nine", "9"),
    ("ten", "10"),
];

const IRREGULAR: &[(&str, &str)] = &[
    // plurals
    ("children", "child"),
    ("men", "man"),
    ("women", "woman"),
    ("people", "person"),
    ("mice", "mouse"),
    ("geese", "goose"),
    ("feet", "foot"),
    ("teeth", "tooth"),
    ("oxen", "ox"),
    ("knives", "knife"),
    ("wives", "wife"),
    ("leaves", "leaf"),
    ("lives", "life"),
    ("loaves", "loaf"),
    ("wolves", "wolf"),
    ("shelves", "shelf"),
    ("halves", "half"),
    ("calves", "calf"),
    ("scarves", "scarf"),
    ("thieves", "thief"),
    ("cacti", "cactus"),
    ("fungi", "fungus"),
    ("buses", "bus"),
    ("tomatoes", "tomato"),
    ("potatoes", "potato"),
    ("heroes", "hero"),
    ("echoes", "echo"),
    ("mangoes", "mango"),
    ("movies", "movie"),
    ("cookies", "cookie"),
    ("brownies", "brownie"),
    ("selfies", "selfie"),
    ("hoodies", "hoodie"),
    ("zombies", "zombie"),
    ("smoothies", "smoothie"),
    ("ties", "tie"),
    ("pies", "pie"),
    // verbs
    ("does", "do"),
    ("did", "do"),
    ("doing", "do"),
    ("done", "do"),
    ("has", "have"),
    ("had", "have"),
    ("having", "have"),
    ("goes", "go"),
    ("went", "go"),
    ("gone", "go"),
    ("going", "go"),
    ("made", "make"),
    ("making", "make"),
    ("running", "run"),
    ("ran", "run"),
    ("sitting", "sit"),
    ("sat", "sit"),
    ("standing", "stand"),
    ("stood", "stand"),
    ("eating", "eat"),
    ("ate", "eat"),
    ("eaten", "eat"),
    ("flying", "fly"),
    ("flew", "fly"),
    ("flown", "fly"),
    ("playing", "play"),
    ("played", "play"),
    ("riding", "ride"),
    ("rode", "ride"),
    ("ridden", "ride"),
    ("walking", "walk"),
    ("walked", "walk"),
    ("swimming", "swim"),
    ("swam", "swim"),
    ("sleeping", "sleep"),
    ("slept", "sleep"),
    ("drinking", "drink"),
    ("drank", "drink"),
    ("lying", "lie"),
    ("laying", "lay"),
    ("holding", "hold"),
    ("held", "hold"),
    ("looking", "look"),
    ("looked", "look"),
    ("wearing", "wear"),
    ("wore", "wear"),
    ("worn", "wear"),
    ("jumping", "jump"),
    ("jumped", "jump"),
    ("skiing", "ski"),
    ("surfing", "surf"),
    ("skateboarding", "skateboard"),
    ("snowboarding", "snowboard"),
    ("racing", "race"),
    ("raced", "race"),
    ("cooking", "cook"),
    ("cooked", "cook"),
    ("cutting", "cut"),
    ("reading", "read"),
    ("writing", "write"),
    ("wrote", "write"),
    ("written", "write"),
    ("talking", "talk"),
    ("waiting", "wait"),
    ("parked", "park"),
    ("parking", "park"),
    ("driving", "drive"),
    ("drove", "drive"),
    ("driven", "drive"),
    ("grazing", "graze"),
    ("working", "work"),
    ("worked", "work"),
    ("shopping", "shop"),
    ("smiling", "smile"),
    ("hugging", "hug"),
    ("hugs", "hug"),
    ("sleeps", "sleep"),
    ("throwing", "throw"),
    ("threw", "throw"),
    ("thrown", "throw"),
    ("catching", "catch"),
    ("caught", "catch"),
    ("hitting", "hit"),
    ("kicking", "kick"),
    ("taking", "take"),
    ("took", "take"),
    ("taken", "take"),
    ("giving", "give"),
    ("gave", "give"),
    ("given", "give"),
    ("sold", "sell"),
    ("selling", "sell"),
    ("bought", "buy"),
    ("buying", "buy"),
];

/// Words that look plural or inflected but are left alone.
const INVARIANT: &[&str] = &[
    "yes", "this", "his", "its", "hers", "ours", "yours", "theirs", "was", "is", "us", "as", "news",
    "series", "species", "lens", "gas", "plus", "always", "perhaps", "sometimes", "chaos", "christmas",
    "texas", "paris", "canvas", "atlas", "alias", "bias", "pancreas", "jeans", "pants", "shorts",
    "scissors", "clothes", "glasses", "sunglasses", "goggles", "headphones", "earphones", "tongs",
    "pajamas", "trousers", "leggings", "overalls", "binoculars", "physics", "mathematics", "politics",
    "athletics", "gymnastics", "electronics", "economics", "aerobics", "sports", "less", "unless",
];

struct Tables {
    numbers: HashMap<&'static str, &'static str>,
    irregular: HashMap<&'static str, &'static str>,
    invariant: HashSet<&'static str>,
    stopwords: HashSet<&'static str>,
}

fn tables() -> &'static Tables {
    static TABLES: OnceLock<Tables> = OnceLock::new();
    TABLES.get_or_init(|| Tables {
        numbers: NUMBER_WORDS.into_iter().collect(),
        irregular: IRREGULAR.iter().copied().collect(),
        invariant: INVARIANT.iter().copied().collect(),
        stopwords: ARTICLES.into_iter().chain(PREPOSITIONS).collect(),
    })
}

fn is_apostrophe(c: char) -> bool {
    matches!(c, '\'' | '\u{2019}' | '\u{2018}' | '`')
}

/// Lowercases and replaces punctuation. Apostrophes vanish, `.` survives
/// between digits, `,` between digits vanishes, everything else that is not
/// alphanumeric becomes a space.
fn strip_punctuation(text: &str) -> String {
    let lowered: Vec<char> = text.to_lowercase().chars().collect();
    let mut out = String::with_capacity(lowered.len());
    for (i, &c) in lowered.iter().enumerate() {
        if c.is_alphanumeric() {
            out.push(c);
            continue;
        }
        if c.is_whitespace() {
            out.push(' ');
            continue;
        }
        let between_digits = i > 0
            && lowered[i - 1].is_ascii_digit()
            && lowered.get(i + 1).is_some_and(|n| n.is_ascii_digit());
        match c {
            '.' if between_digits => out.push('.'),
            ',' if between_digits => {}
            c if is_apostrophe(c) => {}
            _ => out.push(' '),
        }
    }
    out
}

/// One lemmatization step.
fn lemma_step(word: &str) -> Cow<'_, str> {
    let t = tables();
    if let Some(base) = t.irregular.get(word) {
        return Cow::Borrowed(base);
    }
    if t.invariant.contains(word) || word.chars().count() <= 3 || !word.is_ascii() {
        return Cow::Borrowed(word);
    }
    if word.ends_with("ss") || word.ends_with("us") || word.ends_with("is") {
        return Cow::Borrowed(word);
    }
    if word.len() > 4 && word.ends_with("ies") {
        return Cow::Owned(format!("{}y", &word[..word.len() - 3]));
    }
    if ["sses", "ches", "shes", "xes", "zzes"].iter().any(|s| word.ends_with(s)) {
        return Cow::Borrowed(&word[..word.len() - 2]);
    }
    if let Some(stem) = word.strip_suffix('s') {
        return Cow::Borrowed(stem);
    }
    Cow::Borrowed(word)
}

/// Applies [`lemma_step`] until nothing changes.
pub fn lemmatize(word: &str) -> String {
    let mut current = word.to_string();
    loop {
        let next = lemma_step(&current);
        if next == current {
            return current;
        }
        current = next.into_owned();
    }
}

fn normalize_token(token: &str) -> Option<String> {
    let t = tables();
    let mapped = t.numbers.get(token).copied().unwrap_or(token);
    let lemma = lemmatize(mapped);
    let lemma = t.numbers.get(lemma.as_str()).map(|d| d.to_string()).unwrap_or(lemma);
    if t.stopwords.contains(lemma.as_str()) {
        None
    } else {
        Some(lemma)
    }
}

pub fn normalize(text: &str) -> String {
    let cleaned = strip_punctuation(text);
    cleaned
        .split_whitespace()
        .filter_map(normalize_token)
        .collect::<Vec<_>>()
        .join(" ")
}
