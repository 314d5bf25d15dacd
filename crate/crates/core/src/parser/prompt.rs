//! Prompt templates for LLM-based instruction decomposition.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PromptStyle {
    /// One-line definition of each sub-task.
    Definition,
    /// Few-shot parsing examples.
    Examples,
    /// Definitions followed by examples.
    Both,
}

impl PromptStyle {
    pub const ALL: [PromptStyle; 3] = [PromptStyle::Definition, PromptStyle::Examples, PromptStyle::Both];

    pub fn name(&self) -> &'static str {
        match self {
            PromptStyle::Definition => "definition",
            PromptStyle::Examples => "examples",
            PromptStyle::Both => "both",
        }
    }
}

impl fmt::Display for PromptStyle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PromptStyle {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PromptStyle::ALL
            .into_iter()
            .find(|p| p.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| format!("unknown prompt style {s:?} (definition, examples, both)"))
    }
}

pub const DEFINITIONS: [(&str, &str); 5] = [
    ("Go to", "walk to the landmark and stop next to it."),
    ("Go past", "walk by the landmark without stopping; it should be passed midway along the path."),
    ("Go into", "enter the room or area named by the landmark through one of its entrances."),
    ("Go through", "enter the room or area by one entrance and leave it by a different one."),
    ("Exit", "leave the room or area named by the landmark, which you start inside."),
];

/// Few-shot examples: (instruction, expected completion).
pub const FEW_SHOT: [(&str, &str); 4] = [
    (
        "Leave the bathroom and walk past the bed, then stop at the window.",
        "1. (Exit, bathroom)\n2. (Go past, bed)\n3. (Go to, window)",
    ),
    (
        "Go through the hallway and enter the kitchen.",
        "1. (Go through, hallway)\n2. (Go into, kitchen)",
    ),
    ("Walk to the armchair next to the fireplace.", "1. (Go to, armchair)"),
    (
        "Head out of the office. Pass the printer, then go into the lobby.",
        "1. (Exit, office)\n2. (Go past, printer)\n3. (Go into, lobby)",
    ),
];

const TASK: &str = "Break the navigation instruction into an ordered list of sub-tasks. \
Write each sub-task on its own numbered line as (action, landmark).";

pub fn definition_block() -> String {
    let mut out = format!("{TASK}\nThe available actions are:\n");
    for (name, meaning) in DEFINITIONS {
        out.push_str(&format!("- {name}: {meaning}\n"));
    }
    out
}

pub fn example_text(instruction: &str, completion: &str) -> String {
    format!("Instruction: {instruction}\nSub-tasks:\n{completion}\n")
}

pub fn examples_block() -> String {
    let mut out = format!("{TASK}\nExamples:\n\n");
    for (instruction, completion) in FEW_SHOT {
        out.push_str(&example_text(instruction, completion));
        out.push('\n');
    }
    out
}

/// The prompt always ends with the target instruction and the output cue.
pub fn build_prompt(instruction: &str, style: PromptStyle) -> String {
    let head = match style {
        PromptStyle::Definition => definition_block(),
        PromptStyle::Examples => examples_block(),
        PromptStyle::Both => format!("{}\n{}", definition_block(), examples_block()),
    };
    format!("{head}\nInstruction: {}\nSub-tasks:", instruction.trim())
}
