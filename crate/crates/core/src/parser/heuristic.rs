//! Rule-based chunker used as the grammatical baseline parser.

use std::sync::LazyLock;

use regex::Regex;

use super::{ParseError, RawSubTask};

/// Words that attach to the leading verb to form the action phrase.
pub const PARTICLES: [&str; 10] = [
    "to", "into", "in", "past", "through", "out", "of", "from", "toward", "towards",
];
pub const CONNECTIVES: [&str; 4] = ["and then", "after that", "then", "next"];
const ARTICLES: [&str; 3] = ["the", "a", "an"];

static SENTENCE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"[.!?;]+").unwrap());
static CONNECTIVE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)\b(?:and\s+then|after\s+that|then|next)\b").unwrap());

fn clean_word(w: &str) -> String {
    w.trim_matches(|c: char| !c.is_alphanumeric() && c != '\'' && c != '-')
        .to_lowercase()
}

/// Splits on sentence punctuation and connectives; in each chunk the first
/// word plus any following particles is the action, the rest minus
/// articles is the landmark. Chunks without a landmark are dropped.
pub fn chunk_heuristic(instruction: &str) -> Result<Vec<RawSubTask>, ParseError> {
    if instruction.trim().is_empty() {
        return Err(ParseError::EmptyInstruction);
    }
    let mut out = Vec::new();
    for sentence in SENTENCE.split(instruction) {
        for chunk in CONNECTIVE.split(sentence) {
            let source = chunk.trim_matches(|c: char| c.is_whitespace() || c == ',');
            let words: Vec<String> = source
                .split_whitespace()
                .map(clean_word)
                .filter(|w| !w.is_empty())
                .collect();
            let Some((verb, rest)) = words.split_first() else { continue };
            let particles = rest.iter().take_while(|w| PARTICLES.contains(&w.as_str())).count();
            let action: Vec<&str> = std::iter::once(verb.as_str())
                .chain(rest[..particles].iter().map(String::as_str))
                .collect();
            let landmark: Vec<&str> = rest[particles..]
                .iter()
                .map(String::as_str)
                .filter(|w| !ARTICLES.contains(w))
                .collect();
            if landmark.is_empty() {
                continue;
            }
            out.push(RawSubTask {
                action_phrase: action.join(" "),
                landmark_phrase: landmark.join(" "),
                source_line: source.to_string(),
            });
        }
    }
    Ok(out)
}
