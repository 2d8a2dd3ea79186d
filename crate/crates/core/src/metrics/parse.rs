//! LLM-guided reduction of verbose answers to short ones.

use serde::{Deserialize, Serialize};

use crate::backend::{preset, BackendRequest, ModelBackend, Preset, Purpose};
use crate::cot::extract_final_answer;

/// In-context demonstrations for answer parsing (version 1).
pub const PARSE_DEMONSTRATIONS: &str = include_str!("../../assets/prompts/answer_parsing_v1.txt");

/// Answers with at most this many words skip the backend call.
pub const BYPASS_MAX_WORDS: usize = 3;

fn one_line(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

pub fn build_parse_prompt(question: &str, verbose_answer: &str) -> String {
    format!(
        "{}Input: {} {} Short answer:",
        PARSE_DEMONSTRATIONS,
        one_line(question),
        one_line(verbose_answer)
    )
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParseOutcome {
    pub text: String,
    pub called_backend: bool,
    /// Set when the backend failed and the rule-based extractor answered.
    pub fallback: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
}

pub fn llm_parse(question: &str, verbose_answer: &str, backend: &dyn ModelBackend) -> ParseOutcome {
    let trimmed = verbose_answer.trim();
    if trimmed.split_whitespace().count() <= BYPASS_MAX_WORDS {
        return ParseOutcome {
            text: trimmed.to_string(),
            called_backend: false,
            fallback: false,
            warning: None,
        };
    }
    let req = BackendRequest::text(
        build_parse_prompt(question, trimmed),
        preset(Preset::Parse),
        Purpose::Parse,
    );
    let failure = match backend.complete(&req) {
        Ok(resp) => {
            let first = resp.first().lines().next().unwrap_or("").trim().to_string();
            if !first.is_empty() {
                return ParseOutcome {
                    text: first,
                    called_backend: true,
                    fallback: false,
                    warning: None,
                };
            }
            "parser returned an empty completion".to_string()
        }
        Err(e) => e.to_string(),
    };
    ParseOutcome {
        text: extract_final_answer(trimmed),
        called_backend: true,
        fallback: true,
        warning: Some(format!("ParseFallback: {failure}")),
    }
}
