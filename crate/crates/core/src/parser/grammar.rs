//! Line grammar for LLM completions: an optional index, then
//! `(<action phrase>, <landmark phrase>)`.

use std::sync::LazyLock;

use regex::Regex;

use super::{ParseError, RawSubTask};

static LINE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"^\s*(?:(?:\d+|[-*])\s*[.):]?\s*)?\(\s*([^,()]*?)\s*,\s*([^()]*?)\s*\)\s*[.;,]?\s*$").unwrap()
});

pub fn parse_llm_output(completion: &str) -> Result<Vec<RawSubTask>, ParseError> {
    completion
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|line| {
            let caps = LINE
                .captures(line)
                .filter(|c| !c[1].is_empty() && !c[2].is_empty())
                .ok_or_else(|| ParseError::Unparseable(line.to_string()))?;
            Ok(RawSubTask {
                action_phrase: caps[1].to_string(),
                landmark_phrase: caps[2].to_string(),
                source_line: line.to_string(),
            })
        })
        .collect()
}

/// Renders one numbered line per sub-task; the inverse of
/// [`parse_llm_output`] on well-formed input.
pub fn format_subtasks(raw: &[RawSubTask]) -> String {
    raw.iter()
        .enumerate()
        .map(|(i, r)| format!("{}. ({}, {})", i + 1, r.action_phrase, r.landmark_phrase))
        .collect::<Vec<_>>()
        .join("\n")
}
