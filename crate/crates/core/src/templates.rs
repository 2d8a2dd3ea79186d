//! Prompt template registry and rendering.
//!
//! Patterns use the literal placeholders `{q}` (question), `{o}` (formatted
//! options), `{s}` (statement or caption) and `{task instruction}`. There is
//! no escaping: substitution is a single left-to-right pass, so braces that
//! arrive inside a question are never re-expanded.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exemplars::Exemplar;

pub const PH_QUESTION: &str = "{q}";
pub const PH_OPTIONS: &str = "{o}";
pub const PH_STATEMENT: &str = "{s}";
pub const PH_INSTRUCTION: &str = "{task instruction}";

const CONTEXT_PREFIX: &str = "Context: ";

const FEW_SHOT_PREAMBLE: &str = "In this task, your goal is to write an answer to a given question about the image.\n\
To write the answer, here are some sample QA suggestions (not relevant to the image):";
const FEW_SHOT_HANDOFF: &str = "Now answer the following question about the image.";
const BLOCK_DELIMITER: &str = "---";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TemplateError {
    #[error("an options list needs at least 2 entries, got {0}")]
    OptionsTooFew(usize),
    #[error("template `{0}` requires a task instruction")]
    MissingInstruction(String),
    #[error("caption is empty")]
    EmptyCaption,
    #[error("prompt already carries a caption context")]
    AlreadyWrapped,
    #[error("unknown template `{0}`")]
    UnknownTemplate(String),
    #[error("duplicate template name `{0}`")]
    DuplicateName(String),
    #[error("template `{name}` is a {family:?} template and cannot be used here")]
    WrongFamily { name: String, family: TemplateFamily },
    #[error("template `{name}` violates its family's placeholder rules: {reason}")]
    InvalidPattern { name: String, reason: String },
    #[error("question is empty")]
    EmptyQuestion,
    #[error("at most 5 exemplars fit in a prompt, got {0}")]
    TooManyExemplars(usize),
    #[error("exemplar {index} is missing its {field} for this setting")]
    ExemplarFieldMissing { index: usize, field: &'static str },
    #[error("registry document is not valid JSON: {0}")]
    Json(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TemplateFamily {
    Standard,
    Cot,
    CaptionWrapper,
    Captioning,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TemplateSpec {
    #[serde(skip)]
    pub name: String,
    pub family: TemplateFamily,
    pub pattern: String,
    /// Appended to the rendered prompt when the question is a yes/no one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub binary_suffix: Option<String>,
}

impl TemplateSpec {
    pub fn new(name: &str, family: TemplateFamily, pattern: &str) -> Self {
        Self {
            name: name.to_string(),
            family,
            pattern: pattern.to_string(),
            binary_suffix: None,
        }
    }

    fn with_binary_suffix(mut self, suffix: &str) -> Self {
        self.binary_suffix = Some(suffix.to_string());
        self
    }

    pub fn validate(&self) -> Result<(), TemplateError> {
        let has_q = self.pattern.contains(PH_QUESTION);
        let has_s = self.pattern.contains(PH_STATEMENT);
        let invalid = |reason: &str| {
            Err(TemplateError::InvalidPattern {
                name: self.name.clone(),
                reason: reason.to_string(),
            })
        };
        match self.family {
            TemplateFamily::Standard | TemplateFamily::Cot => {
                if !has_q {
                    return invalid("question templates must contain {q}");
                }
                if has_s {
                    return invalid("only caption wrappers may contain {s}");
                }
            }
            TemplateFamily::CaptionWrapper => {
                if !has_s {
                    return invalid("caption wrappers must contain {s}");
                }
                if has_q {
                    return invalid("caption wrappers must not contain {q}");
                }
            }
            TemplateFamily::Captioning => {
                if has_s {
                    return invalid("only caption wrappers may contain {s}");
                }
            }
        }
        Ok(())
    }
}

/// Immutable name → template map.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TemplateRegistry {
    templates: BTreeMap<String, TemplateSpec>,
}

impl TemplateRegistry {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, spec: TemplateSpec) -> Result<(), TemplateError> {
        spec.validate()?;
        if self.templates.contains_key(&spec.name) {
            return Err(TemplateError::DuplicateName(spec.name));
        }
        self.templates.insert(spec.name.clone(), spec);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Result<&TemplateSpec, TemplateError> {
        self.templates
            .get(name)
            .ok_or_else(|| TemplateError::UnknownTemplate(name.to_string()))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.templates.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.templates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.templates.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &TemplateSpec> {
        self.templates.values()
    }

    /// Serializes as `{ name: { family, pattern } }`.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.templates).expect("registry serializes")
    }

    pub fn from_json(doc: &str) -> Result<Self, TemplateError> {
        let raw: BTreeMap<String, TemplateSpec> =
            serde_json::from_str(doc).map_err(|e| TemplateError::Json(e.to_string()))?;
        let mut registry = Self::empty();
        for (name, mut spec) in raw {
            spec.name = name;
            registry.insert(spec)?;
        }
        Ok(registry)
    }

    /// Adds every template from `other`, rejecting name clashes.
    pub fn extend(&mut self, other: TemplateRegistry) -> Result<(), TemplateError> {
        for spec in other.templates.into_values() {
            self.insert(spec)?;
        }
        Ok(())
    }
}

pub fn builtin_registry() -> TemplateRegistry {
    use TemplateFamily::*;
    let specs = [
        TemplateSpec::new("Null", Standard, "{q}"),
        TemplateSpec::new("qa", Standard, "Question: {q} {o} Answer:"),
        TemplateSpec::new("short-qa", Standard, "Question: {q} {o} Short Answer:")
            .with_binary_suffix("yes or no?"),
        TemplateSpec::new("follow-qa", Standard, "Answer the following question. {q} {o}"),
        TemplateSpec::new(
            "instruct-qa",
            Standard,
            "{task instruction} Question: {q} {o} Answer:",
        ),
        TemplateSpec::new(
            "reason-qa",
            Cot,
            "Answer the following question by reasoning step-by-step. Q: {q} A:",
        ),
        TemplateSpec::new("think-qa", Cot, "Q: {q} A: Let's think step-by-step"),
        TemplateSpec::new("caption-wrapper", CaptionWrapper, "Context: {s}"),
        TemplateSpec::new("a-photo-of", Captioning, "A photo of"),
        TemplateSpec::new(
            "q-guided-cap",
            Captioning,
            "Describe the image according to the following question {q}",
        ),
    ];
    let mut registry = TemplateRegistry::empty();
    for spec in specs {
        registry.insert(spec).expect("builtin templates are valid");
    }
    registry
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptContext {
    pub question: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub options: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub caption: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub task_instruction: Option<String>,
    #[serde(default)]
    pub is_binary_question: bool,
    /// Indices of options whose casing is kept as written.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub proper_noun_options: Vec<usize>,
}

impl PromptContext {
    pub fn new(question: impl Into<String>) -> Self {
        Self {
            question: question.into(),
            ..Self::default()
        }
    }

    pub fn with_options<S: Into<String>>(mut self, options: impl IntoIterator<Item = S>) -> Self {
        self.options = Some(options.into_iter().map(Into::into).collect());
        self
    }

    pub fn with_instruction(mut self, instruction: impl Into<String>) -> Self {
        self.task_instruction = Some(instruction.into());
        self
    }

    pub fn binary(mut self, is_binary: bool) -> Self {
        self.is_binary_question = is_binary;
        self
    }

    fn formatted_options(&self) -> Result<String, TemplateError> {
        match self.options.as_deref() {
            None | Some([]) => Ok(String::new()),
            Some(options) => {
                let proper: Vec<bool> = (0..options.len())
                    .map(|i| self.proper_noun_options.contains(&i))
                    .collect();
                format_options_with_proper_nouns(options, &proper)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RenderedPrompt {
    pub text: String,
    pub attach_image: bool,
    pub family: TemplateFamily,
    /// Set once a `Context:` prefix has been applied.
    #[serde(default)]
    pub has_context: bool,
}

pub fn format_options<S: AsRef<str>>(options: &[S]) -> Result<String, TemplateError> {
    format_options_with_proper_nouns(options, &[])
}

/// Joins options as `A, b or c?`. Entries flagged in `proper` keep their
/// casing exactly; everything else is lowercased and the first entry is
/// capitalized.
pub fn format_options_with_proper_nouns<S: AsRef<str>>(
    options: &[S],
    proper: &[bool],
) -> Result<String, TemplateError> {
    if options.len() < 2 {
        return Err(TemplateError::OptionsTooFew(options.len()));
    }
    let cased: Vec<String> = options
        .iter()
        .enumerate()
        .map(|(i, opt)| {
            let opt = opt.as_ref().trim();
            let keep = proper.get(i).copied().unwrap_or(false);
            let text = if keep { opt.to_string() } else { opt.to_lowercase() };
            if i == 0 && !keep {
                capitalize(&text)
            } else {
                text
            }
        })
        .collect();
    let (last, head) = cased.split_last().expect("at least two options");
    Ok(format!("{} or {}?", head.join(", "), last))
}

fn capitalize(text: &str) -> String {
    let mut chars = text.chars();
    match chars.next() {
        Some(first) => first.to_uppercase().chain(chars).collect(),
        None => String::new(),
    }
}

/// Single pass over `pattern`, replacing known placeholders via `lookup`.
fn substitute(
    pattern: &str,
    mut lookup: impl FnMut(&str) -> Option<Result<String, TemplateError>>,
) -> Result<String, TemplateError> {
    const PLACEHOLDERS: [&str; 4] = [PH_QUESTION, PH_OPTIONS, PH_STATEMENT, PH_INSTRUCTION];
    let mut out = String::with_capacity(pattern.len() + 64);
    let mut rest = pattern;
    while let Some(pos) = rest.find('{') {
        out.push_str(&rest[..pos]);
        let tail = &rest[pos..];
        match PLACEHOLDERS.iter().find(|ph| tail.starts_with(**ph)) {
            Some(ph) => {
                match lookup(ph) {
                    Some(value) => out.push_str(&value?),
                    None => out.push_str(ph),
                }
                rest = &tail[ph.len()..];
            }
            None => {
                out.push('{');
                rest = &tail[1..];
            }
        }
    }
    out.push_str(rest);
    Ok(out)
}

/// Collapses runs of spaces and trims the ends.
fn tidy(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut prev_space = false;
    for ch in text.trim().chars() {
        if ch == ' ' {
            if !prev_space {
                out.push(ch);
            }
            prev_space = true;
        } else {
            out.push(ch);
            prev_space = false;
        }
    }
    out
}

/// Renders a question-answering template (standard or CoT family).
pub fn render(template: &TemplateSpec, ctx: &PromptContext) -> Result<RenderedPrompt, TemplateError> {
    match template.family {
        TemplateFamily::Standard | TemplateFamily::Cot => {}
        family => {
            return Err(TemplateError::WrongFamily {
                name: template.name.clone(),
                family,
            })
        }
    }
    if ctx.question.trim().is_empty() {
        return Err(TemplateError::EmptyQuestion);
    }
    let options = ctx.formatted_options()?;
    let question = ctx.question.trim();
    let mut text = substitute(&template.pattern, |ph| match ph {
        PH_QUESTION => Some(Ok(question.to_string())),
        PH_OPTIONS => Some(Ok(options.clone())),
        PH_INSTRUCTION => Some(
            ctx.task_instruction
                .as_deref()
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(str::to_string)
                .ok_or_else(|| TemplateError::MissingInstruction(template.name.clone())),
        ),
        _ => None,
    })?;
    if ctx.is_binary_question {
        if let Some(suffix) = &template.binary_suffix {
            text.push(' ');
            text.push_str(suffix);
        }
    }
    Ok(RenderedPrompt {
        text: tidy(&text),
        attach_image: true,
        family: template.family,
        has_context: false,
    })
}

/// Renders an image-captioning template; `{q}` is filled when present.
pub fn render_captioning(
    template: &TemplateSpec,
    question: Option<&str>,
) -> Result<RenderedPrompt, TemplateError> {
    if template.family != TemplateFamily::Captioning {
        return Err(TemplateError::WrongFamily {
            name: template.name.clone(),
            family: template.family,
        });
    }
    let needs_question = template.pattern.contains(PH_QUESTION);
    let question = question.map(str::trim).unwrap_or("");
    if needs_question && question.is_empty() {
        return Err(TemplateError::EmptyQuestion);
    }
    let text = substitute(&template.pattern, |ph| match ph {
        PH_QUESTION => Some(Ok(question.to_string())),
        _ => None,
    })?;
    Ok(RenderedPrompt {
        text: tidy(&text),
        attach_image: true,
        family: TemplateFamily::Captioning,
        has_context: false,
    })
}

/// Prefixes `Context: <caption> ` to an already rendered prompt.
pub fn wrap_with_caption(inner: &RenderedPrompt, caption: &str) -> Result<RenderedPrompt, TemplateError> {
    let caption = caption.trim();
    if caption.is_empty() {
        return Err(TemplateError::EmptyCaption);
    }
    if inner.has_context {
        return Err(TemplateError::AlreadyWrapped);
    }
    Ok(RenderedPrompt {
        text: format!("{CONTEXT_PREFIX}{caption} {}", inner.text),
        attach_image: inner.attach_image,
        family: inner.family,
        has_context: true,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FewShotSetting {
    Standard,
    Caption,
    Cot,
}

pub const MAX_EXEMPLARS: usize = 5;

/// Builds a few-shot prompt: preamble, `---`-framed exemplars, then the test
/// question with an empty slot. With no exemplars this is the zero-shot
/// rendering of `template` (caption-wrapped in the caption setting).
pub fn render_exemplar_block(
    template: &TemplateSpec,
    exemplars: &[Exemplar],
    setting: FewShotSetting,
    ctx: &PromptContext,
) -> Result<String, TemplateError> {
    if exemplars.len() > MAX_EXEMPLARS {
        return Err(TemplateError::TooManyExemplars(exemplars.len()));
    }
    if exemplars.is_empty() {
        let prompt = render(template, ctx)?;
        return match (setting, ctx.caption.as_deref()) {
            (FewShotSetting::Caption, Some(caption)) => Ok(wrap_with_caption(&prompt, caption)?.text),
            (FewShotSetting::Caption, None) => Err(TemplateError::EmptyCaption),
            _ => Ok(prompt.text),
        };
    }
    if ctx.question.trim().is_empty() {
        return Err(TemplateError::EmptyQuestion);
    }

    let mut shots = Vec::with_capacity(exemplars.len());
    for (index, ex) in exemplars.iter().enumerate() {
        let mut lines = Vec::with_capacity(3);
        match setting {
            FewShotSetting::Standard => {
                lines.push(format!("Question: {}", ex.question.trim()));
            }
            FewShotSetting::Caption => {
                let caption = non_empty(ex.caption.as_deref())
                    .ok_or(TemplateError::ExemplarFieldMissing { index, field: "caption" })?;
                lines.push(format!("Context: {caption}"));
                lines.push(format!("Question: {}", ex.question.trim()));
            }
            FewShotSetting::Cot => {
                let rationale = non_empty(ex.rationale.as_deref())
                    .ok_or(TemplateError::ExemplarFieldMissing { index, field: "rationale" })?;
                lines.push(format!("Question: {}", ex.question.trim()));
                lines.push(format!("Rationale: {rationale}"));
            }
        }
        lines.push(format!("Answer: {}", ex.answer.trim()));
        shots.push(lines.join("\n"));
    }

    let mut handoff = FEW_SHOT_HANDOFF.to_string();
    if let Some(instruction) = non_empty(ctx.task_instruction.as_deref()) {
        handoff.push(' ');
        handoff.push_str(instruction);
    }

    let options = ctx.formatted_options()?;
    let mut question_line = format!("Question: {}", ctx.question.trim());
    if !options.is_empty() {
        question_line.push(' ');
        question_line.push_str(&options);
    }
    let mut test = Vec::with_capacity(3);
    if setting == FewShotSetting::Caption {
        let caption = non_empty(ctx.caption.as_deref()).ok_or(TemplateError::EmptyCaption)?;
        test.push(format!("Context: {caption}"));
    }
    test.push(question_line);
    test.push(match setting {
        FewShotSetting::Cot => "Rationale:".to_string(),
        _ => "Answer:".to_string(),
    });

    Ok(format!(
        "{FEW_SHOT_PREAMBLE}\n\n{BLOCK_DELIMITER}\n{}\n{BLOCK_DELIMITER}\n\n{handoff}\n\n{}",
        shots.join("\n\n"),
        test.join("\n")
    ))
}

fn non_empty(text: Option<&str>) -> Option<&str> {
    text.map(str::trim).filter(|s| !s.is_empty())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn registry() -> TemplateRegistry {
        builtin_registry()
    }

    #[test]
    fn builtin_registry_contents() {
        let reg = registry();
        let names: Vec<&str> = reg.names().collect();
        let mut expected = vec![
            "Null",
            "qa",
            "short-qa",
            "follow-qa",
            "instruct-qa",
            "reason-qa",
            "think-qa",
            "caption-wrapper",
            "a-photo-of",
            "q-guided-cap",
        ];
        expected.sort();
        assert_eq!(names, expected);
        assert_eq!(reg.get("qa").unwrap().pattern, "Question: {q} {o} Answer:");
        assert_eq!(reg.get("think-qa").unwrap().pattern, "Q: {q} A: Let's think step-by-step");
        assert_eq!(reg.get("a-photo-of").unwrap().pattern, "A photo of");
    }

    #[test]
    fn options_formatting() {
        let opts = ["red velvet", "cherry amaretto", "strawberry daiquiri", "bailey's chocolate"];
        assert_eq!(
            format_options(&opts).unwrap(),
            "Red velvet, cherry amaretto, strawberry daiquiri or bailey's chocolate?"
        );
        assert_eq!(format_options(&["a", "b"]).unwrap(), "A or b?");
        assert_eq!(format_options(&["x", "y", "z"]).unwrap(), "X, y or z?");
        assert_eq!(format_options(&["only"]), Err(TemplateError::OptionsTooFew(1)));
        assert_eq!(
            format_options_with_proper_nouns(&["Ceramic", "iPhone", "Paris"], &[false, true, true]).unwrap(),
            "Ceramic, iPhone or Paris?"
        );
    }

    #[test]
    fn render_examples() {
        let reg = registry();
        let qa = render(reg.get("qa").unwrap(), &PromptContext::new("What color is the floor?")).unwrap();
        assert_eq!(qa.text, "Question: What color is the floor? Answer:");
        assert!(qa.attach_image);

        let null = render(reg.get("Null").unwrap(), &PromptContext::new("What sport is this?")).unwrap();
        assert_eq!(null.text, "What sport is this?");

        let reason = render(reg.get("reason-qa").unwrap(), &PromptContext::new("Why?")).unwrap();
        assert_eq!(
            reason.text,
            "Answer the following question by reasoning step-by-step. Q: Why? A:"
        );
    }

    #[test]
    fn short_qa_binary_suffix() {
        let reg = registry();
        let ctx = PromptContext::new("Is the dog asleep?").binary(true);
        let short = render(reg.get("short-qa").unwrap(), &ctx).unwrap();
        assert_eq!(short.text, "Question: Is the dog asleep? Short Answer: yes or no?");
        let qa = render(reg.get("qa").unwrap(), &ctx).unwrap();
        assert_eq!(qa.text, "Question: Is the dog asleep? Answer:");
        let open = render(reg.get("short-qa").unwrap(), &PromptContext::new("Why?")).unwrap();
        assert_eq!(open.text, "Question: Why? Short Answer:");
    }

    #[test]
    fn instruct_qa_requires_instruction() {
        let reg = registry();
        let tpl = reg.get("instruct-qa").unwrap();
        assert_eq!(
            render(tpl, &PromptContext::new("Q?")),
            Err(TemplateError::MissingInstruction("instruct-qa".into()))
        );
        let ctx = PromptContext::new("Q?").with_instruction("Answer with one word.");
        assert_eq!(render(tpl, &ctx).unwrap().text, "Answer with one word. Question: Q? Answer:");
    }

    #[test]
    fn options_are_substituted() {
        let reg = registry();
        let ctx = PromptContext::new("Which one?").with_options(["Mayo", "ice cream", "butter", "icing"]);
        assert_eq!(
            render(reg.get("qa").unwrap(), &ctx).unwrap().text,
            "Question: Which one? Mayo, ice cream, butter or icing? Answer:"
        );
        let single = PromptContext::new("Which one?").with_options(["only"]);
        assert_eq!(render(reg.get("qa").unwrap(), &single), Err(TemplateError::OptionsTooFew(1)));
    }

    #[test]
    fn empty_and_absent_options_render_identically() {
        let reg = registry();
        for tpl in reg.iter().filter(|t| matches!(t.family, TemplateFamily::Standard | TemplateFamily::Cot)) {
            let mut absent = PromptContext::new("How many?").with_instruction("Count.");
            let mut empty = absent.clone();
            empty.options = Some(vec![]);
            absent.options = None;
            assert_eq!(render(tpl, &absent), render(tpl, &empty), "{}", tpl.name);
        }
    }

    #[test]
    fn braces_in_question_pass_through() {
        let reg = registry();
        let ctx = PromptContext::new("What does {o} mean in {q}?");
        assert_eq!(
            render(reg.get("qa").unwrap(), &ctx).unwrap().text,
            "Question: What does {o} mean in {q}? Answer:"
        );
    }

    #[test]
    fn caption_wrapping() {
        let reg = registry();
        let inner = RenderedPrompt {
            text: "Question: Q? Answer:".into(),
            attach_image: true,
            family: TemplateFamily::Standard,
            has_context: false,
        };
        let wrapped = wrap_with_caption(&inner, "A photo of a dog.  ").unwrap();
        assert_eq!(wrapped.text, "Context: A photo of a dog. Question: Q? Answer:");
        assert!(wrapped.attach_image);
        assert_eq!(wrap_with_caption(&wrapped, "again"), Err(TemplateError::AlreadyWrapped));
        assert_eq!(wrap_with_caption(&inner, "   "), Err(TemplateError::EmptyCaption));

        let cot = render(reg.get("think-qa").unwrap(), &PromptContext::new("Why?")).unwrap();
        let wrapped = wrap_with_caption(&cot, "A kitchen.").unwrap();
        assert_eq!(wrapped.text, "Context: A kitchen. Q: Why? A: Let's think step-by-step");
        assert_eq!(wrapped.family, TemplateFamily::Cot);
    }

    #[test]
    fn render_rejects_captioning_family() {
        let reg = registry();
        assert!(matches!(
            render(reg.get("a-photo-of").unwrap(), &PromptContext::new("Q?")),
            Err(TemplateError::WrongFamily { .. })
        ));
        let cap = render_captioning(reg.get("q-guided-cap").unwrap(), Some("What room is this?")).unwrap();
        assert_eq!(cap.text, "Describe the image according to the following question What room is this?");
        assert_eq!(
            render_captioning(reg.get("q-guided-cap").unwrap(), Some(" ")),
            Err(TemplateError::EmptyQuestion)
        );
        assert_eq!(render_captioning(reg.get("a-photo-of").unwrap(), None).unwrap().text, "A photo of");
    }

    #[test]
    fn registry_json_round_trip_and_validation() {
        let reg = registry();
        let back = TemplateRegistry::from_json(&reg.to_json()).unwrap();
        assert_eq!(back, reg);

        let bad = r#"{"broken": {"family": "standard", "pattern": "no placeholder"}}"#;
        assert!(matches!(TemplateRegistry::from_json(bad), Err(TemplateError::InvalidPattern { .. })));

        let custom = r#"{"brief-qa": {"family": "standard", "pattern": "Q: {q} {o} Brief answer:"}}"#;
        let mut merged = registry();
        merged.extend(TemplateRegistry::from_json(custom).unwrap()).unwrap();
        assert_eq!(merged.len(), 11);
        assert!(matches!(merged.extend(registry()), Err(TemplateError::DuplicateName(_))));
    }

    fn ex(q: &str, a: &str) -> Exemplar {
        Exemplar::new(q, a)
    }

    #[test]
    fn zero_exemplars_is_zero_shot() {
        let reg = registry();
        let ctx = PromptContext::new("What is this?");
        let block = render_exemplar_block(reg.get("qa").unwrap(), &[], FewShotSetting::Standard, &ctx).unwrap();
        assert_eq!(block, "Question: What is this? Answer:");
    }

    #[test]
    fn cot_block_layout() {
        let reg = registry();
        let mut a = ex("What color is the sky?", "blue");
        a.rationale = Some("The sky is clear.".into());
        let mut b = ex("How many legs does a cat have?", "4");
        b.rationale = Some("Cats are quadrupeds.".into());
        let ctx = PromptContext::new("What is on the plate?");
        let block = render_exemplar_block(reg.get("qa").unwrap(), &[a, b], FewShotSetting::Cot, &ctx).unwrap();
        let expected = "In this task, your goal is to write an answer to a given question about the image.\n\
To write the answer, here are some sample QA suggestions (not relevant to the image):\n\
\n\
---\n\
Question: What color is the sky?\n\
Rationale: The sky is clear.\n\
Answer: blue\n\
\n\
Question: How many legs does a cat have?\n\
Rationale: Cats are quadrupeds.\n\
Answer: 4\n\
---\n\
\n\
Now answer the following question about the image.\n\
\n\
Question: What is on the plate?\n\
Rationale:";
        assert_eq!(block, expected);
    }

    #[test]
    fn exemplar_missing_field() {
        let reg = registry();
        let ctx = PromptContext::new("Q?");
        let err = render_exemplar_block(reg.get("qa").unwrap(), &[ex("a?", "b")], FewShotSetting::Caption, &ctx);
        assert_eq!(err, Err(TemplateError::ExemplarFieldMissing { index: 0, field: "caption" }));
        let err = render_exemplar_block(reg.get("qa").unwrap(), &[ex("a?", "b")], FewShotSetting::Cot, &ctx);
        assert_eq!(err, Err(TemplateError::ExemplarFieldMissing { index: 0, field: "rationale" }));
        let six: Vec<Exemplar> = (0..6).map(|i| ex(&format!("q{i}?"), "a")).collect();
        assert_eq!(
            render_exemplar_block(reg.get("qa").unwrap(), &six, FewShotSetting::Standard, &ctx),
            Err(TemplateError::TooManyExemplars(6))
        );
    }
}
