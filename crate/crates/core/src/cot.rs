//! Chain-of-thought answering: single-pass CoT, the two-stage
//! rationale-then-answer chains, and self-consistency voting.

use std::collections::HashMap;
use std::ops::Range;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{
    complete_batch, preset, BackendError, BackendRequest, GenerationConfig, ModelBackend, Preset, Purpose,
};
use crate::templates::{render, wrap_with_caption, PromptContext, RenderedPrompt, TemplateError, TemplateFamily, TemplateSpec};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CotError {
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error("prompt was not rendered from a chain-of-thought template")]
    NotCotPrompt,
    #[error("cannot vote over an empty answer list")]
    EmptyVote,
    #[error("invalid consistency config: {0}")]
    InvalidConfig(String),
}

/// Answer markers, highest priority first (matched case-insensitively).
const ANSWER_MARKERS: [&str; 4] = ["the final answer is", "the final answer:", "answer is", "answer:"];
const LEADING_ARTICLES: [&str; 3] = ["a ", "an ", "the "];

/// Byte ranges of sentences; a sentence ends at `.`, `!` or `?` followed by
/// whitespace or the end of text, or at a newline.
fn sentence_spans(text: &str) -> Vec<Range<usize>> {
    let bytes = text.as_bytes();
    let mut spans = Vec::new();
    let mut start = 0;
    for (i, &b) in bytes.iter().enumerate() {
        let terminal = match b {
            b'\n' => true,
            b'.' | b'!' | b'?' => bytes.get(i + 1).is_none_or(|n| n.is_ascii_whitespace()),
            _ => false,
        };
        if terminal {
            spans.push(start..i + 1);
            start = i + 1;
        }
    }
    if start < text.len() {
        spans.push(start..text.len());
    }
    spans
}

fn clean_clause(clause: &str) -> String {
    let mut s = clause.trim();
    loop {
        let before = s;
        s = s
            .trim_start_matches(|c: char| c == ':' || c == '"' || c == '\'' || c.is_whitespace())
            .trim_end_matches(|c: char| ".!?,;:\"'".contains(c) || c.is_whitespace());
        for article in LEADING_ARTICLES {
            if s.len() > article.len() && s[..article.len()].eq_ignore_ascii_case(article) {
                s = &s[article.len()..];
            }
        }
        if s == before {
            return s.to_string();
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Extraction {
    answer: String,
    sentence: Option<Range<usize>>,
}

fn extract_once(raw: &str) -> Extraction {
    let lower = raw.to_ascii_lowercase();
    let spans = sentence_spans(raw);
    let sentence_of = |pos: usize| spans.iter().find(|s| s.contains(&pos)).cloned();
    for marker in ANSWER_MARKERS {
        for (pos, _) in lower.rmatch_indices(marker) {
            let clause_start = pos + marker.len();
            let clause_end = spans
                .iter()
                .find(|s| s.contains(&clause_start) || s.start >= clause_start)
                .map_or(raw.len(), |s| s.end);
            let answer = clean_clause(&raw[clause_start..clause_end.max(clause_start)]);
            if !answer.is_empty() {
                return Extraction {
                    answer,
                    sentence: sentence_of(pos),
                };
            }
        }
    }
    for span in spans.iter().rev() {
        let answer = clean_clause(&raw[span.clone()]);
        if !answer.is_empty() {
            return Extraction {
                answer,
                sentence: Some(span.clone()),
            };
        }
    }
    Extraction {
        answer: String::new(),
        sentence: None,
    }
}

fn extract(raw: &str) -> Extraction {
    let mut first = extract_once(raw);
    // Re-apply until the answer is its own extraction.
    for _ in 0..8 {
        let next = extract_once(&first.answer).answer;
        if next == first.answer {
            break;
        }
        first.answer = next;
    }
    first
}

/// Pulls the final answer out of a free-form generation. Never fails; with
/// no marker present the last sentence is returned.
pub fn extract_final_answer(raw: &str) -> String {
    extract(raw).answer
}

/// First sentence of `rationale`, trimmed.
pub fn trim_rationale(rationale: &str) -> String {
    let trimmed = rationale.trim();
    sentence_spans(trimmed)
        .into_iter()
        .map(|s| trimmed[s].trim())
        .find(|s| !s.is_empty())
        .unwrap_or("")
        .to_string()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RationaleAnswer {
    pub rationale: String,
    pub answer: String,
    pub raw: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl RationaleAnswer {
    /// Splits a generation into rationale and final answer.
    pub fn from_raw(raw: &str) -> Self {
        let raw = raw.trim();
        let ex = extract(raw);
        let rationale = match &ex.sentence {
            Some(span) => {
                let before = raw[..span.start].trim();
                let after = raw[span.end..].trim();
                [before, after].iter().filter(|s| !s.is_empty()).copied().collect::<Vec<_>>().join(" ")
            }
            None => String::new(),
        };
        let mut warnings = Vec::new();
        if ex.answer.is_empty() {
            warnings.push("ExtractionEmpty: no answer could be extracted".to_string());
        }
        Self {
            rationale,
            answer: ex.answer,
            raw: raw.to_string(),
            warnings,
        }
    }
}

fn one_line(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Single CoT call: the generation carries both rationale and answer.
pub fn cot_answer(
    prompt: &RenderedPrompt,
    image_ref: Option<&str>,
    backend: &dyn ModelBackend,
    gen: &GenerationConfig,
) -> Result<RationaleAnswer, CotError> {
    if prompt.family != TemplateFamily::Cot {
        return Err(CotError::NotCotPrompt);
    }
    let image = if prompt.attach_image { image_ref } else { None };
    let req = BackendRequest::new(prompt.text.clone(), image, gen.clone(), Purpose::Rationale);
    let resp = backend.complete(&req)?;
    Ok(RationaleAnswer::from_raw(resp.first()))
}

/// Templates and decoding settings shared by the chained strategies.
#[derive(Debug, Clone)]
pub struct CotSettings {
    pub cot_template: TemplateSpec,
    pub answer_template: TemplateSpec,
    pub rationale_gen: GenerationConfig,
    pub answer_gen: GenerationConfig,
}

impl CotSettings {
    pub fn new(cot_template: TemplateSpec, answer_template: TemplateSpec) -> Self {
        Self {
            cot_template,
            answer_template,
            rationale_gen: preset(Preset::Rationale),
            answer_gen: preset(Preset::Answer),
        }
    }

    pub fn omit_image(mut self, omit: bool) -> Self {
        self.rationale_gen.omit_image = omit;
        self.answer_gen.omit_image = omit;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainOutcome {
    pub rationale_prompt: String,
    pub rationale_stage: RationaleAnswer,
    pub answer_prompt: String,
    pub answer_stage: RationaleAnswer,
}

impl ChainOutcome {
    pub fn answer(&self) -> &str {
        &self.answer_stage.answer
    }
}

fn rationale_stage(
    ctx: &PromptContext,
    image_ref: Option<&str>,
    backend: &dyn ModelBackend,
    settings: &CotSettings,
) -> Result<(RenderedPrompt, RationaleAnswer), CotError> {
    let prompt = render(&settings.cot_template, ctx)?;
    let stage = cot_answer(&prompt, image_ref, backend, &settings.rationale_gen)?;
    Ok((prompt, stage))
}

fn answer_stage(
    prompt: RenderedPrompt,
    image_ref: Option<&str>,
    backend: &dyn ModelBackend,
    settings: &CotSettings,
) -> Result<(RenderedPrompt, RationaleAnswer), CotError> {
    let req = BackendRequest::new(prompt.text.clone(), image_ref, settings.answer_gen.clone(), Purpose::Answer);
    let resp = backend.complete(&req)?;
    Ok((prompt, RationaleAnswer::from_raw(resp.first())))
}

/// Question followed by the one-sentence rationale, then a standard answer
/// prompt.
pub fn cot_iterative(
    ctx: &PromptContext,
    image_ref: Option<&str>,
    backend: &dyn ModelBackend,
    settings: &CotSettings,
) -> Result<ChainOutcome, CotError> {
    let (first_prompt, first) = rationale_stage(ctx, image_ref, backend, settings)?;
    let trimmed = trim_rationale(&first.rationale);
    let mut second_ctx = ctx.clone();
    if !trimmed.is_empty() {
        second_ctx.question = format!("{} {}", ctx.question.trim(), one_line(&trimmed));
    }
    let prompt = render(&settings.answer_template, &second_ctx)?;
    let (second_prompt, second) = answer_stage(prompt, image_ref, backend, settings)?;
    Ok(ChainOutcome {
        rationale_prompt: first_prompt.text,
        rationale_stage: first,
        answer_prompt: second_prompt.text,
        answer_stage: second,
    })
}

/// Full rationale placed as a `Context:` prefix before the question.
pub fn cot_context(
    ctx: &PromptContext,
    image_ref: Option<&str>,
    backend: &dyn ModelBackend,
    settings: &CotSettings,
) -> Result<ChainOutcome, CotError> {
    let (first_prompt, first) = rationale_stage(ctx, image_ref, backend, settings)?;
    let rationale = one_line(&first.rationale);
    let mut prompt = render(&settings.answer_template, ctx)?;
    if !rationale.is_empty() {
        prompt = wrap_with_caption(&prompt, &rationale)?;
    }
    let (second_prompt, second) = answer_stage(prompt, image_ref, backend, settings)?;
    Ok(ChainOutcome {
        rationale_prompt: first_prompt.text,
        rationale_stage: first,
        answer_prompt: second_prompt.text,
        answer_stage: second,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VoteCount {
    /// First raw answer seen for this group.
    pub answer: String,
    pub normalized: String,
    pub count: usize,
}

/// Groups answers by normalized form in first-occurrence order.
pub fn tally_votes<S: AsRef<str>>(answers: &[S], normalizer: impl Fn(&str) -> String) -> Vec<VoteCount> {
    let mut groups: Vec<VoteCount> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    for answer in answers {
        let answer = answer.as_ref();
        let key = normalizer(answer);
        match index.get(&key) {
            Some(&i) => groups[i].count += 1,
            None => {
                index.insert(key.clone(), groups.len());
                groups.push(VoteCount {
                    answer: answer.to_string(),
                    normalized: key,
                    count: 1,
                });
            }
        }
    }
    groups
}

fn winner(tally: &[VoteCount]) -> Option<&VoteCount> {
    let mut best: Option<&VoteCount> = None;
    for group in tally {
        if best.is_none_or(|b| group.count > b.count) {
            best = Some(group);
        }
    }
    best
}

/// Plurality over normalized groups; ties go to the group seen first. The
/// returned string is that group's first raw answer.
pub fn majority_vote<S: AsRef<str>>(answers: &[S], normalizer: impl Fn(&str) -> String) -> Result<String, CotError> {
    let tally = tally_votes(answers, normalizer);
    winner(&tally).map(|w| w.answer.clone()).ok_or(CotError::EmptyVote)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyConfig {
    pub n_paths: usize,
    pub temperature: f64,
    /// Path `i` is sampled with seed `base_seed + i`.
    #[serde(default)]
    pub base_seed: u64,
}

impl Default for ConsistencyConfig {
    fn default() -> Self {
        Self {
            n_paths: 30,
            temperature: 0.7,
            base_seed: 0,
        }
    }
}

impl ConsistencyConfig {
    pub fn validate(&self) -> Result<(), CotError> {
        if self.n_paths < 1 {
            return Err(CotError::InvalidConfig("n_paths must be >= 1".into()));
        }
        if self.temperature.is_nan() || self.temperature <= 0.0 {
            return Err(CotError::InvalidConfig("temperature must be > 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathOutcome {
    pub index: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub result: Option<RationaleAnswer>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyOutcome {
    pub prompt: String,
    pub answer: String,
    pub tally: Vec<VoteCount>,
    pub paths: Vec<PathOutcome>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

/// Samples `n_paths` CoT generations and majority-votes their answers.
pub fn self_consistency(
    ctx: &PromptContext,
    image_ref: Option<&str>,
    backend: &dyn ModelBackend,
    settings: &CotSettings,
    cfg: &ConsistencyConfig,
    normalizer: impl Fn(&str) -> String,
    max_in_flight: usize,
) -> Result<ConsistencyOutcome, CotError> {
    cfg.validate()?;
    let prompt = render(&settings.cot_template, ctx)?;
    let mut gen = preset(Preset::ConsistencyPath);
    gen.temperature = cfg.temperature;
    gen.omit_image = settings.rationale_gen.omit_image;
    let reqs: Vec<BackendRequest> = (0..cfg.n_paths)
        .map(|i| {
            BackendRequest::new(
                prompt.text.clone(),
                image_ref,
                gen.clone().with_seed(cfg.base_seed.wrapping_add(i as u64)),
                Purpose::Rationale,
            )
        })
        .collect();
    let responses = complete_batch(backend, &reqs, max_in_flight);

    let mut paths = Vec::with_capacity(responses.len());
    let mut answers = Vec::new();
    let mut last_error = None;
    for (index, resp) in responses.into_iter().enumerate() {
        match resp {
            Ok(resp) => {
                let ra = RationaleAnswer::from_raw(resp.first());
                if ra.answer.is_empty() {
                    paths.push(PathOutcome {
                        index,
                        result: Some(ra),
                        error: Some("ExtractionEmpty".into()),
                    });
                } else {
                    answers.push(ra.answer.clone());
                    paths.push(PathOutcome {
                        index,
                        result: Some(ra),
                        error: None,
                    });
                }
            }
            Err(e) => {
                paths.push(PathOutcome {
                    index,
                    result: None,
                    error: Some(e.to_string()),
                });
                last_error = Some(e);
            }
        }
    }
    if answers.is_empty() {
        return Err(CotError::Backend(last_error.unwrap_or_else(|| {
            BackendError::other("no sampled path produced an answer")
        })));
    }
    let mut warnings = Vec::new();
    if answers.len() * 2 < cfg.n_paths {
        warnings.push(format!(
            "only {} of {} reasoning paths produced an answer",
            answers.len(),
            cfg.n_paths
        ));
    }
    let tally = tally_votes(&answers, &normalizer);
    let answer = winner(&tally).expect("non-empty tally").answer.clone();
    Ok(ConsistencyOutcome {
        prompt: prompt.text,
        answer,
        tally,
        paths,
        warnings,
    })
}
