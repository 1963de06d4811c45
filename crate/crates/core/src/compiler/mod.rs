//! Instruction text to NavScript: a deterministic controlled-English rule
//! backend and a two-stage chat-completion backend.

mod pipeline;
mod rules;

pub use pipeline::{compile_with_llm, extract_fenced, PromptSet, NAVSCRIPT_API_SPEC};
pub use rules::{number_word, ordinal, parse_instruction_rules, split_sentences};

use crate::kinematics::TurnDirection;
use crate::llm::LlmError;
use crate::navscript::{NavProgram, Stmt};
use serde::{Deserialize, Serialize};
use std::fmt;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Step {
    GoStraight { distance: f64 },
    Turn { direction: TurnDirection },
    PassObjects { label: String, count: u32 },
    AtTurningPoint { ordinal: u32 },
}

impl fmt::Display for Step {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Step::GoStraight { distance } => write!(f, "go_straight distance={distance}"),
            Step::Turn { direction } => write!(f, "turn direction={direction}"),
            Step::PassObjects { label, count } => write!(f, "pass_objects label={label} count={count}"),
            Step::AtTurningPoint { ordinal } => write!(f, "at_turning_point ordinal={ordinal}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct StepList {
    pub steps: Vec<Step>,
}

impl StepList {
    pub fn new(steps: Vec<Step>) -> Self {
        Self { steps }
    }

    /// Numbered one-step-per-line form, as stored in compilation records.
    pub fn to_text(&self) -> String {
        self.steps.iter().enumerate().map(|(i, s)| format!("{}. {s}\n", i + 1)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CompileError {
    #[error("no rule matches sentence {sentence:?}")]
    NoMatch { sentence: String },
    #[error("invalid steps: {0}")]
    InvalidSteps(String),
    #[error(transparent)]
    Transport(#[from] LlmError),
    #[error("no fenced NavScript block after {attempts} attempt(s)")]
    Extraction { attempts: u32, last_reply: String },
    #[error("generated NavScript still invalid after {attempts} attempt(s): {error}")]
    Unparseable { attempts: u32, error: String, code: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CompileStatus {
    Success,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompilationRecord {
    pub source: String,
    pub backend: String,
    pub steps_text: String,
    pub navscript: String,
    pub status: CompileStatus,
    pub attempts: u32,
    /// Raw replies in request order (empty for the rule backend).
    pub replies: Vec<String>,
}

/// Maps steps to NavScript text (no trailing newline). A turn with no
/// motion step before it is preceded by `forward_until turning_point skip=1`.
pub fn steps_to_navscript(steps: &StepList) -> Result<String, CompileError> {
    if steps.steps.is_empty() {
        return Err(CompileError::InvalidSteps("step list is empty".into()));
    }
    let mut out = Vec::new();
    let mut moved = false;
    for (i, s) in steps.steps.iter().enumerate() {
        let bad = |why: &str| CompileError::InvalidSteps(format!("step {}: {why}", i + 1));
        match s {
            Step::GoStraight { distance } => {
                if !(distance.is_finite() && *distance > 0.0) {
                    return Err(bad("distance must be positive"));
                }
                out.push(Stmt::Forward(*distance));
                moved = true;
            }
            Step::AtTurningPoint { ordinal } => {
                if *ordinal == 0 {
                    return Err(bad("ordinal must be at least 1"));
                }
                out.push(Stmt::ForwardUntilTurningPoint { skip: *ordinal });
                moved = true;
            }
            Step::PassObjects { label, count } => {
                if *count == 0 {
                    return Err(bad("count must be at least 1"));
                }
                if label.trim().is_empty() {
                    return Err(bad("label is empty"));
                }
                out.push(Stmt::ForwardUntilObject { label: label.clone(), count: *count, overshoot: 1.0 });
                moved = true;
            }
            Step::Turn { direction } => {
                if !moved {
                    out.push(Stmt::ForwardUntilTurningPoint { skip: 1 });
                }
                out.push(Stmt::Turn(*direction));
                moved = false;
            }
        }
    }
    out.push(Stmt::Stop);
    Ok(NavProgram::new(out).to_string().trim_end().to_string())
}

/// Rule backend end to end.
pub fn compile_rules(text: &str) -> Result<CompilationRecord, CompileError> {
    let steps = parse_instruction_rules(text)?;
    let navscript = steps_to_navscript(&steps)?;
    Ok(CompilationRecord {
        source: text.to_string(),
        backend: "rules".into(),
        steps_text: steps.to_text(),
        navscript,
        status: CompileStatus::Success,
        attempts: 1,
        replies: Vec::new(),
    })
}
