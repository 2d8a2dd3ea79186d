//! Dataset loaders. Each native format is translated into [`QuestionRecord`]
//! (or [`WinogroundSample`]); the canonical on-disk form is JSONL.

pub mod winoground;

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::metrics::{Grader, ReferenceAnswers};

pub use winoground::{
    build_quad, convert_sample, convert_statement, statement_form, write_review_tsv, ConversionError,
    write_jsonl as write_winoground_jsonl, Framing, ReviewRow, WinogroundSample, CONVERSION_PROMPT, CONVERTED_PREFIX,
    STATEMENT_PREFIX,
};

#[derive(Debug, Error)]
pub enum LoadError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {location}: {message}")]
    Malformed {
        path: String,
        location: String,
        message: String,
    },
    #[error("{path}: duplicate id {id:?}")]
    DuplicateId { path: String, id: String },
    #[error("unknown dataset format {0:?}")]
    UnknownFormat(String),
    #[error("{path}: expected a {expected} dataset")]
    WrongKind { path: String, expected: &'static str },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetFormat {
    Vqav2,
    Okvqa,
    Aokvqa,
    Gqa,
    Visual7w,
    Winoground,
    /// JSONL of `QuestionRecord`.
    Canonical,
}

impl DatasetFormat {
    pub const ALL: [DatasetFormat; 7] = [
        DatasetFormat::Vqav2,
        DatasetFormat::Okvqa,
        DatasetFormat::Aokvqa,
        DatasetFormat::Gqa,
        DatasetFormat::Visual7w,
        DatasetFormat::Winoground,
        DatasetFormat::Canonical,
    ];

    pub fn name(self) -> &'static str {
        match self {
            DatasetFormat::Vqav2 => "vqav2",
            DatasetFormat::Okvqa => "okvqa",
            DatasetFormat::Aokvqa => "aokvqa",
            DatasetFormat::Gqa => "gqa",
            DatasetFormat::Visual7w => "visual7w",
            DatasetFormat::Winoground => "winoground",
            DatasetFormat::Canonical => "canonical",
        }
    }
}

impl fmt::Display for DatasetFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DatasetFormat {
    type Err = LoadError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        DatasetFormat::ALL
            .into_iter()
            .find(|f| f.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| LoadError::UnknownFormat(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionRecord {
    pub id: String,
    pub image_ref: String,
    pub question: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub options: Option<Vec<String>>,
    /// Index into `options` of the correct choice.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub correct_option: Option<usize>,
    pub refs: ReferenceAnswers,
    pub dataset: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub question_type: Option<String>,
    pub split: String,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub metadata: BTreeMap<String, Value>,
}

impl QuestionRecord {
    pub fn validate(&self) -> Result<(), String> {
        if self.id.trim().is_empty() {
            return Err("id is empty".into());
        }
        if self.question.trim().is_empty() {
            return Err("question is empty".into());
        }
        if let Some(options) = &self.options {
            if options.len() < 2 {
                return Err("fewer than 2 options".into());
            }
        }
        match (self.correct_option, &self.options) {
            (Some(_), None) => return Err("correct_option without options".into()),
            (Some(i), Some(options)) if i >= options.len() => {
                return Err(format!("correct_option {i} out of range"))
            }
            _ => {}
        }
        Ok(())
    }

    pub fn correct_answer(&self) -> Option<&str> {
        Some(self.options.as_ref()?.get(self.correct_option?)?.as_str())
    }

    pub fn is_multiple_choice(&self) -> bool {
        self.correct_answer().is_some()
    }

    /// Multiple-choice items are graded against the correct option's text;
    /// open items by reference multiset.
    pub fn grader(&self, multiple_choice: bool) -> Grader {
        match self.correct_answer() {
            Some(answer) if multiple_choice => Grader::Binary {
                reference: answer.to_string(),
            },
            _ => Grader::for_references(self.refs.clone()),
        }
    }

    pub fn is_binary_question(&self) -> bool {
        self.question_type.as_deref() == Some("yes/no")
    }
}

/// Keyword fallback when a dataset carries no type annotation.
pub fn heuristic_question_type(question: &str) -> Option<String> {
    let q = question.trim().to_ascii_lowercase();
    let first = q.split_whitespace().next().unwrap_or("");
    let tag = if q.starts_with("how many") {
        "number"
    } else if q.starts_with("what color") || q.starts_with("what colour") {
        "color"
    } else if matches!(first, "is" | "are" | "does" | "do" | "was" | "were" | "can" | "has" | "have") {
        "yes/no"
    } else {
        return None;
    };
    Some(tag.to_string())
}

#[derive(Debug, Clone, PartialEq)]
pub enum Dataset {
    Questions(Vec<QuestionRecord>),
    Winoground(Vec<WinogroundSample>),
}

impl Dataset {
    pub fn len(&self) -> usize {
        match self {
            Dataset::Questions(r) => r.len(),
            Dataset::Winoground(s) => s.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn ids(&self) -> Vec<String> {
        match self {
            Dataset::Questions(r) => r.iter().map(|r| r.id.clone()).collect(),
            Dataset::Winoground(s) => s.iter().map(|s| s.id.clone()).collect(),
        }
    }

    pub fn into_questions(self, path: &Path) -> Result<Vec<QuestionRecord>, LoadError> {
        match self {
            Dataset::Questions(r) => Ok(r),
            Dataset::Winoground(_) => Err(LoadError::WrongKind {
                path: path.display().to_string(),
                expected: "question",
            }),
        }
    }

    pub fn into_winoground(self, path: &Path) -> Result<Vec<WinogroundSample>, LoadError> {
        match self {
            Dataset::Winoground(s) => Ok(s),
            Dataset::Questions(_) => Err(LoadError::WrongKind {
                path: path.display().to_string(),
                expected: "winoground",
            }),
        }
    }
}

/// Error helper bound to one file.
struct Ctx<'a> {
    path: &'a str,
}

impl Ctx<'_> {
    fn bad(&self, location: impl Into<String>, message: impl Into<String>) -> LoadError {
        LoadError::Malformed {
            path: self.path.to_string(),
            location: location.into(),
            message: message.into(),
        }
    }

    fn str_field<'v>(&self, obj: &'v Value, loc: &str, field: &str) -> Result<&'v str, LoadError> {
        match obj.get(field) {
            Some(Value::String(s)) if !s.trim().is_empty() => Ok(s),
            Some(Value::String(_)) => Err(self.bad(format!("{loc}.{field}"), "empty string")),
            Some(_) => Err(self.bad(format!("{loc}.{field}"), "expected a string")),
            None => Err(self.bad(format!("{loc}.{field}"), "missing field")),
        }
    }

    fn id_field(&self, obj: &Value, loc: &str, field: &str) -> Result<String, LoadError> {
        match obj.get(field) {
            Some(Value::String(s)) if !s.is_empty() => Ok(s.clone()),
            Some(Value::Number(n)) => Ok(n.to_string()),
            Some(_) => Err(self.bad(format!("{loc}.{field}"), "expected a string or integer id")),
            None => Err(self.bad(format!("{loc}.{field}"), "missing field")),
        }
    }

    fn string_list(&self, obj: &Value, loc: &str, field: &str) -> Result<Vec<String>, LoadError> {
        let arr = obj
            .get(field)
            .ok_or_else(|| self.bad(format!("{loc}.{field}"), "missing field"))?
            .as_array()
            .ok_or_else(|| self.bad(format!("{loc}.{field}"), "expected an array"))?;
        arr.iter()
            .enumerate()
            .map(|(i, v)| match v {
                Value::String(s) => Ok(s.clone()),
                // VQA-style `{answer: ...}` entries.
                Value::Object(_) => self.str_field(v, &format!("{loc}.{field}[{i}]"), "answer").map(str::to_string),
                _ => Err(self.bad(format!("{loc}.{field}[{i}]"), "expected a string")),
            })
            .collect()
    }

    fn refs(&self, answers: Vec<String>, loc: &str) -> Result<ReferenceAnswers, LoadError> {
        ReferenceAnswers::new(answers).ok_or_else(|| self.bad(loc, "no reference answers"))
    }

    fn record(&self, record: QuestionRecord, loc: &str) -> Result<QuestionRecord, LoadError> {
        record.validate().map_err(|m| self.bad(loc, m))?;
        Ok(record)
    }
}

fn read_json(path: &Path, ctx: &Ctx) -> Result<Option<Value>, LoadError> {
    let text = fs::read_to_string(path).map_err(|source| LoadError::Io {
        path: ctx.path.to_string(),
        source,
    })?;
    if text.trim().is_empty() {
        return Ok(None);
    }
    serde_json::from_str(&text)
        .map(Some)
        .map_err(|e| ctx.bad(format!("line {}", e.line()), e.to_string()))
}

fn read_jsonl(path: &Path, ctx: &Ctx) -> Result<Vec<(usize, Value)>, LoadError> {
    let text = fs::read_to_string(path).map_err(|source| LoadError::Io {
        path: ctx.path.to_string(),
        source,
    })?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let value = serde_json::from_str(line).map_err(|e| ctx.bad(format!("line {}", i + 1), e.to_string()))?;
        out.push((i + 1, value));
    }
    Ok(out)
}

fn file_stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "unknown".into())
}

pub fn load_dataset(path: &Path, format: DatasetFormat) -> Result<Dataset, LoadError> {
    let display = path.display().to_string();
    let ctx = Ctx { path: &display };
    let dataset = match format {
        DatasetFormat::Vqav2 | DatasetFormat::Okvqa => Dataset::Questions(load_vqa(path, format, &ctx)?),
        DatasetFormat::Aokvqa => Dataset::Questions(load_aokvqa(path, &ctx)?),
        DatasetFormat::Gqa => Dataset::Questions(load_gqa(path, &ctx)?),
        DatasetFormat::Visual7w => Dataset::Questions(load_visual7w(path, &ctx)?),
        DatasetFormat::Winoground => Dataset::Winoground(winoground::load(path, &ctx)?),
        DatasetFormat::Canonical => Dataset::Questions(load_canonical(path, &ctx)?),
    };
    check_unique(&dataset, &display)?;
    Ok(dataset)
}

fn check_unique(dataset: &Dataset, path: &str) -> Result<(), LoadError> {
    let mut seen = HashSet::new();
    let keys: Vec<String> = match dataset {
        Dataset::Questions(r) => r.iter().map(|r| format!("{}\u{0}{}\u{0}{}", r.dataset, r.split, r.id)).collect(),
        Dataset::Winoground(s) => s.iter().map(|s| s.id.clone()).collect(),
    };
    for (key, id) in keys.iter().zip(dataset.ids()) {
        if !seen.insert(key) {
            return Err(LoadError::DuplicateId {
                path: path.to_string(),
                id,
            });
        }
    }
    Ok(())
}

/// VQAv2 / OK-VQA: `{data_subtype, questions: [...], annotations: [...]}`.
fn load_vqa(path: &Path, format: DatasetFormat, ctx: &Ctx) -> Result<Vec<QuestionRecord>, LoadError> {
    let Some(doc) = read_json(path, ctx)? else {
        return Ok(Vec::new());
    };
    let split = doc
        .get("data_subtype")
        .and_then(Value::as_str)
        .map(str::to_string)
        .unwrap_or_else(|| file_stem(path));
    let questions = doc
        .get("questions")
        .and_then(Value::as_array)
        .ok_or_else(|| ctx.bad("questions", "missing or not an array"))?;
    let annotations = doc
        .get("annotations")
        .and_then(Value::as_array)
        .ok_or_else(|| ctx.bad("annotations", "missing or not an array"))?;
    let mut by_qid = std::collections::HashMap::new();
    for (i, ann) in annotations.iter().enumerate() {
        let loc = format!("annotations[{i}]");
        by_qid.insert(ctx.id_field(ann, &loc, "question_id")?, (loc, ann));
    }
    let mut out = Vec::with_capacity(questions.len());
    for (i, q) in questions.iter().enumerate() {
        let loc = format!("questions[{i}]");
        let id = ctx.id_field(q, &loc, "question_id")?;
        let question = ctx.str_field(q, &loc, "question")?.to_string();
        let image_id = ctx.id_field(q, &loc, "image_id")?;
        let (ann_loc, ann) = by_qid
            .get(&id)
            .ok_or_else(|| ctx.bad(&loc, format!("no annotation for question_id {id}")))?;
        let refs = ctx.refs(ctx.string_list(ann, ann_loc, "answers")?, ann_loc)?;
        let image_ref = match image_id.parse::<u64>() {
            Ok(n) => format!("COCO_{split}_{n:012}.jpg"),
            Err(_) => image_id.clone(),
        };
        let question_type = ann
            .get("answer_type")
            .and_then(Value::as_str)
            .filter(|t| *t != "other")
            .map(str::to_string)
            .or_else(|| heuristic_question_type(&question));
        let mut metadata = BTreeMap::new();
        metadata.insert("image_id".into(), Value::String(image_id));
        out.push(ctx.record(
            QuestionRecord {
                id,
                image_ref,
                question,
                options: None,
                correct_option: None,
                refs,
                dataset: format.name().into(),
                question_type,
                split: split.clone(),
                metadata,
            },
            &loc,
        )?);
    }
    Ok(out)
}

/// A-OKVQA: array of `{question_id, image_id, question, choices,
/// correct_choice_idx, direct_answers}`.
fn load_aokvqa(path: &Path, ctx: &Ctx) -> Result<Vec<QuestionRecord>, LoadError> {
    let Some(doc) = read_json(path, ctx)? else {
        return Ok(Vec::new());
    };
    let items = doc.as_array().ok_or_else(|| ctx.bad("$", "expected an array"))?;
    let mut out = Vec::with_capacity(items.len());
    for (i, item) in items.iter().enumerate() {
        let loc = format!("[{i}]");
        let id = ctx.id_field(item, &loc, "question_id")?;
        let question = ctx.str_field(item, &loc, "question")?.to_string();
        let options = ctx.string_list(item, &loc, "choices")?;
        let correct = item
            .get("correct_choice_idx")
            .and_then(Value::as_u64)
            .ok_or_else(|| ctx.bad(format!("{loc}.correct_choice_idx"), "missing or not an integer"))?;
        let refs = ctx.refs(ctx.string_list(item, &loc, "direct_answers")?, &format!("{loc}.direct_answers"))?;
        let image_ref = match item.get("image_ref").and_then(Value::as_str) {
            Some(r) => r.to_string(),
            None => {
                let image_id = ctx.id_field(item, &loc, "image_id")?;
                match image_id.parse::<u64>() {
                    Ok(n) => format!("{n:012}.jpg"),
                    Err(_) => image_id,
                }
            }
        };
        let split = item
            .get("split")
            .and_then(Value::as_str)
            .map(str::to_string)
            .unwrap_or_else(|| file_stem(path));
        let mut metadata = BTreeMap::new();
        for key in ["rationales", "difficult_direct_answer"] {
            if let Some(v) = item.get(key) {
                metadata.insert(key.to_string(), v.clone());
            }
        }
        out.push(ctx.record(
            QuestionRecord {
                id,
                image_ref,
                question_type: heuristic_question_type(&question),
                question,
                options: Some(options),
                correct_option: Some(correct as usize),
                refs,
                dataset: "aokvqa".into(),
                split,
                metadata,
            },
            &loc,
        )?);
    }
    Ok(out)
}

/// GQA: object keyed by question id with `{imageId, question, answer,
/// types.structural}`.
fn load_gqa(path: &Path, ctx: &Ctx) -> Result<Vec<QuestionRecord>, LoadError> {
    let Some(doc) = read_json(path, ctx)? else {
        return Ok(Vec::new());
    };
    let items = doc.as_object().ok_or_else(|| ctx.bad("$", "expected an object keyed by question id"))?;
    let split = file_stem(path);
    let mut out = Vec::with_capacity(items.len());
    for (id, item) in items {
        let loc = format!("[{id:?}]");
        let question = ctx.str_field(item, &loc, "question")?.to_string();
        let answer = ctx.str_field(item, &loc, "answer")?.to_string();
        let image_id = ctx.id_field(item, &loc, "imageId")?;
        let question_type = item
            .get("types")
            .and_then(|t| t.get("structural"))
            .and_then(Value::as_str)
            .map(str::to_string)
            .or_else(|| heuristic_question_type(&question));
        let mut metadata = BTreeMap::new();
        if let Some(full) = item.get("fullAnswer") {
            metadata.insert("fullAnswer".into(), full.clone());
        }
        out.push(ctx.record(
            QuestionRecord {
                id: id.clone(),
                image_ref: format!("{image_id}.jpg"),
                question,
                options: None,
                correct_option: None,
                refs: ctx.refs(vec![answer], &loc)?,
                dataset: "gqa".into(),
                question_type,
                split: split.clone(),
                metadata,
            },
            &loc,
        )?);
    }
    Ok(out)
}

/// Visual7W telling: `{images: [{filename, split, qa_pairs: [{qa_id,
/// question, answer, multiple_choices, type}]}]}`.
fn load_visual7w(path: &Path, ctx: &Ctx) -> Result<Vec<QuestionRecord>, LoadError> {
    let Some(doc) = read_json(path, ctx)? else {
        return Ok(Vec::new());
    };
    let images = doc
        .get("images")
        .and_then(Value::as_array)
        .ok_or_else(|| ctx.bad("images", "missing or not an array"))?;
    let mut out = Vec::new();
    for (i, image) in images.iter().enumerate() {
        let iloc = format!("images[{i}]");
        let filename = ctx.str_field(image, &iloc, "filename")?.to_string();
        let split = image
            .get("split")
            .and_then(Value::as_str)
            .map(str::to_string)
            .unwrap_or_else(|| file_stem(path));
        let pairs = image
            .get("qa_pairs")
            .and_then(Value::as_array)
            .ok_or_else(|| ctx.bad(format!("{iloc}.qa_pairs"), "missing or not an array"))?;
        for (j, qa) in pairs.iter().enumerate() {
            let loc = format!("{iloc}.qa_pairs[{j}]");
            let answer = ctx.str_field(qa, &loc, "answer")?.to_string();
            let mut options = ctx.string_list(qa, &loc, "multiple_choices")?;
            options.push(answer.clone());
            options.sort();
            let correct = options.iter().position(|o| *o == answer).expect("answer was inserted");
            out.push(ctx.record(
                QuestionRecord {
                    id: ctx.id_field(qa, &loc, "qa_id")?,
                    image_ref: filename.clone(),
                    question: ctx.str_field(qa, &loc, "question")?.to_string(),
                    options: Some(options),
                    correct_option: Some(correct),
                    refs: ctx.refs(vec![answer], &loc)?,
                    dataset: "visual7w".into(),
                    question_type: qa.get("type").and_then(Value::as_str).map(str::to_string),
                    split: split.clone(),
                    metadata: BTreeMap::new(),
                },
                &loc,
            )?);
        }
    }
    Ok(out)
}

fn load_canonical(path: &Path, ctx: &Ctx) -> Result<Vec<QuestionRecord>, LoadError> {
    read_jsonl(path, ctx)?
        .into_iter()
        .map(|(line, value)| {
            let loc = format!("line {line}");
            let record: QuestionRecord = serde_json::from_value(value).map_err(|e| ctx.bad(&loc, e.to_string()))?;
            ctx.record(record, &loc)
        })
        .collect()
}

/// Writes records as canonical JSONL, replacing `path` atomically.
pub fn write_canonical(path: &Path, records: &[QuestionRecord]) -> std::io::Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    for record in records {
        serde_json::to_writer(&mut tmp, record)?;
        tmp.write_all(b"\n")?;
    }
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}
