//! Answer grading: normalization, VQA accuracy, binary accuracy, Winoground
//! group scoring, ROUGE and LLM-guided short-answer parsing.

pub mod normalize;
pub mod parse;
pub mod rouge;

use serde::{Deserialize, Serialize};

use crate::exec::{self, ExecMode};

pub use normalize::normalize;
pub use parse::{build_parse_prompt, llm_parse, ParseOutcome};
pub use rouge::{rouge_l, rouge_l_score, rouge_n, rouge_n_score, RougeScore};

/// Human reference answers. The raw strings are kept verbatim; normalized
/// forms are computed once at construction for scoring.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReferenceAnswers {
    raw: Vec<String>,
    normalized: Vec<String>,
}

impl ReferenceAnswers {
    /// Returns `None` for an empty list.
    pub fn new<S: Into<String>>(answers: impl IntoIterator<Item = S>) -> Option<Self> {
        let raw: Vec<String> = answers.into_iter().map(Into::into).collect();
        if raw.is_empty() {
            return None;
        }
        let normalized = raw.iter().map(|a| normalize(a)).collect();
        Some(Self { raw, normalized })
    }

    pub fn raw(&self) -> &[String] {
        &self.raw
    }

    pub fn normalized(&self) -> &[String] {
        &self.normalized
    }

    pub fn len(&self) -> usize {
        self.raw.len()
    }

    pub fn is_empty(&self) -> bool {
        self.raw.is_empty()
    }

    /// Number of references whose normalized form equals `normalized`.
    pub fn matches(&self, normalized: &str) -> usize {
        self.normalized.iter().filter(|r| r.as_str() == normalized).count()
    }
}

impl Serialize for ReferenceAnswers {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.raw.serialize(s)
    }
}

impl<'de> Deserialize<'de> for ReferenceAnswers {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let raw = Vec::<String>::deserialize(d)?;
        ReferenceAnswers::new(raw).ok_or_else(|| serde::de::Error::custom("reference answers must be non-empty"))
    }
}

/// `min(m / 3, 1)` where `m` counts matching references.
pub fn vqa_accuracy(candidate: &str, refs: &ReferenceAnswers) -> f64 {
    let m = refs.matches(&normalize(candidate));
    (m as f64 / 3.0).min(1.0)
}

pub fn binary_accuracy(candidate: &str, reference: &str) -> f64 {
    if normalize(candidate) == normalize(reference) {
        1.0
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum YesNo {
    Yes,
    No,
    Unknown,
}

pub fn yes_no_of(text: &str) -> YesNo {
    let normalized = normalize(text);
    match normalized.split(' ').next() {
        Some("yes") => YesNo::Yes,
        Some("no") => YesNo::No,
        _ => YesNo::Unknown,
    }
}

/// One yes/no probe: does `question` hold for `image_ref`?
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuadItem {
    pub image_ref: String,
    pub question: String,
    pub expected: YesNo,
}

/// Four probes covering both images against both captions; exactly two
/// expect "yes".
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WinogroundQuad {
    pub id: String,
    pub items: [QuadItem; 4],
}

impl WinogroundQuad {
    pub fn is_balanced(&self) -> bool {
        let yes = self.items.iter().filter(|i| i.expected == YesNo::Yes).count();
        let no = self.items.iter().filter(|i| i.expected == YesNo::No).count();
        yes == 2 && no == 2
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupScore {
    pub score: u8,
    pub per_item: [bool; 4],
    /// Positions whose answer could not be read as yes or no.
    pub non_binary: Vec<usize>,
}

/// 1 only when all four answers match their expectation.
pub fn winoground_group_score<S: AsRef<str>>(quad: &WinogroundQuad, answers: &[S; 4]) -> GroupScore {
    let mut per_item = [false; 4];
    let mut non_binary = Vec::new();
    for (i, (item, answer)) in quad.items.iter().zip(answers).enumerate() {
        let got = yes_no_of(answer.as_ref());
        if got == YesNo::Unknown {
            non_binary.push(i);
        }
        per_item[i] = got != YesNo::Unknown && got == item.expected;
    }
    let score = per_item.iter().all(|ok| *ok) as u8;
    GroupScore {
        score,
        per_item,
        non_binary,
    }
}

/// How a sample is graded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "metric", rename_all = "snake_case")]
pub enum Grader {
    /// Multi-annotator VQA accuracy.
    Vqa { refs: ReferenceAnswers },
    /// Single reference, exact match after normalization.
    Binary { reference: String },
}

impl Grader {
    pub fn for_references(refs: ReferenceAnswers) -> Self {
        if refs.len() > 1 {
            Grader::Vqa { refs }
        } else {
            Grader::Binary {
                reference: refs.raw()[0].clone(),
            }
        }
    }

    pub fn score(&self, candidate: &str) -> f64 {
        match self {
            Grader::Vqa { refs } => vqa_accuracy(candidate, refs),
            Grader::Binary { reference } => binary_accuracy(candidate, reference),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradedAnswer {
    pub raw: String,
    pub parsed: String,
    pub normalized: String,
    pub score: f64,
}

pub fn grade(raw: &str, parsed: &str, grader: &Grader) -> GradedAnswer {
    GradedAnswer {
        raw: raw.to_string(),
        parsed: parsed.to_string(),
        normalized: normalize(parsed),
        score: grader.score(parsed),
    }
}

/// Scores many `(candidate, grader)` pairs.
pub fn score_batch(mode: ExecMode, items: &[(String, Grader)]) -> Vec<f64> {
    exec::map(mode, items, |(candidate, grader)| grader.score(candidate))
}
