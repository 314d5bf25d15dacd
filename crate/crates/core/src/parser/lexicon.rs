//! Action phrase table and semantic translation to [`ActionKind`].

use std::collections::BTreeMap;

use thiserror::Error;

use crate::episode::ActionKind;
use crate::llm::{cosine, LlmError, TextEncoder};

const SHIPPED: &str = include_str!("../../data/lexicon.tsv");

pub fn canonical_phrase(kind: ActionKind) -> &'static str {
    match kind {
        ActionKind::GoTo => "go to",
        ActionKind::GoPast => "go past",
        ActionKind::GoInto => "go into",
        ActionKind::GoThrough => "go through",
        ActionKind::Exit => "exit",
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LexiconError {
    #[error("lexicon line {line}: {message}")]
    Malformed { line: usize, message: String },
}

/// Lowercase, drop punctuation, collapse whitespace.
pub fn normalize_phrase(phrase: &str) -> String {
    phrase
        .chars()
        .map(|c| if c.is_alphanumeric() || c == '\'' || c == '-' { c } else { ' ' })
        .collect::<String>()
        .split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join(" ")
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActionLexicon {
    entries: BTreeMap<String, ActionKind>,
}

impl Default for ActionLexicon {
    fn default() -> Self {
        Self::shipped()
    }
}

impl ActionLexicon {
    pub fn shipped() -> Self {
        Self::parse(SHIPPED).expect("shipped lexicon is well formed")
    }

    /// Reads `phrase<TAB>kind` lines; `#` starts a comment line. The five
    /// canonical phrases are always present and cannot be remapped.
    pub fn parse(text: &str) -> Result<Self, LexiconError> {
        let mut entries: BTreeMap<String, ActionKind> = ActionKind::ALL
            .iter()
            .map(|k| (canonical_phrase(*k).to_string(), *k))
            .collect();
        for (i, line) in text.lines().enumerate() {
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let bad = |message: String| LexiconError::Malformed { line: i + 1, message };
            let (phrase, kind) = line
                .split_once('\t')
                .ok_or_else(|| bad("expected phrase<TAB>kind".into()))?;
            let kind: ActionKind = kind.trim().parse().map_err(|e| bad(format!("{e}")))?;
            let phrase = normalize_phrase(phrase);
            if phrase.is_empty() {
                return Err(bad("empty phrase".into()));
            }
            match entries.get(&phrase) {
                Some(prev) if *prev != kind => {
                    return Err(bad(format!("{phrase:?} already maps to {prev}")));
                }
                _ => {
                    entries.insert(phrase, kind);
                }
            }
        }
        Ok(Self { entries })
    }

    pub fn lookup(&self, phrase: &str) -> Option<ActionKind> {
        self.entries.get(&normalize_phrase(phrase)).copied()
    }

    pub fn entries(&self) -> impl Iterator<Item = (&str, ActionKind)> {
        self.entries.iter().map(|(p, k)| (p.as_str(), *k))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Lexicon lookup first; otherwise the kind whose canonical phrase is most
/// cosine-similar to the phrase, earlier kinds winning ties. Errors only
/// come from the encoder.
pub fn canonicalize_action(
    phrase: &str,
    lexicon: &ActionLexicon,
    encoder: &dyn TextEncoder,
) -> Result<ActionKind, LlmError> {
    if let Some(kind) = lexicon.lookup(phrase) {
        return Ok(kind);
    }
    let query = encoder.embed(phrase)?;
    let mut best = (ActionKind::ALL[0], f64::NEG_INFINITY);
    for kind in ActionKind::ALL {
        let score = cosine(&query, &encoder.embed(canonical_phrase(kind))?);
        if score > best.1 {
            best = (kind, score);
        }
    }
    Ok(best.0)
}
