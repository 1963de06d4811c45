//! NavScript: the closed navigation language that instruction compilation
//! targets, with its lexer, parser, checker and interpreter.
//!
//! ```text
//! program := (stmt NEWLINE)*
//! stmt    := "forward" NUM
//!          | "forward_until" "turning_point" ["skip" "=" INT]
//!          | "forward_until" "object" STRING "count" "=" INT ["overshoot" "=" NUM]
//!          | "turn" ("left" | "right" | "around")
//!          | "stop"
//! ```

mod ast;
mod lexer;
mod parser;
mod vm;

pub use ast::{NavProgram, Stmt};
pub use lexer::{tokenize, Keyword, Token, TokenKind};
pub use parser::{parse, parse_bytes, parse_source};
pub use vm::{execute, ExecConfig, ExecError, ExecStatus, ExecutionResult, StmtLog, ZONE_REENTRY_M};

use std::fmt;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{line}:{column}: expected {expected}, found {found}")]
pub struct ParseError {
    pub line: usize,
    pub column: usize,
    pub expected: String,
    pub found: String,
}

impl ParseError {
    pub fn new(line: usize, column: usize, expected: impl Into<String>, found: impl Into<String>) -> Self {
        Self { line, column, expected: expected.into(), found: found.into() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SemanticError {
    NegativeDistance(usize),
    ZeroSkip(usize),
    ZeroCount(usize),
    NegativeOvershoot(usize),
    EmptyLabel(usize),
    NonFinite(usize),
    UnreachableStatement(usize),
    MissingStop,
}

impl fmt::Display for SemanticError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SemanticError::NegativeDistance(i) => write!(f, "NegativeDistance@{i}"),
            SemanticError::ZeroSkip(i) => write!(f, "ZeroSkip@{i}"),
            SemanticError::ZeroCount(i) => write!(f, "ZeroCount@{i}"),
            SemanticError::NegativeOvershoot(i) => write!(f, "NegativeOvershoot@{i}"),
            SemanticError::EmptyLabel(i) => write!(f, "EmptyLabel@{i}"),
            SemanticError::NonFinite(i) => write!(f, "NonFinite@{i}"),
            SemanticError::UnreachableStatement(i) => write!(f, "UnreachableStatement@{i}"),
            SemanticError::MissingStop => f.write_str("MissingStop"),
        }
    }
}

pub fn validate(program: &NavProgram) -> Vec<SemanticError> {
    let mut errs = Vec::new();
    let mut stopped = false;
    for (i, s) in program.statements.iter().enumerate() {
        if stopped {
            errs.push(SemanticError::UnreachableStatement(i));
            continue;
        }
        match s {
            Stmt::Forward(d) if !d.is_finite() => errs.push(SemanticError::NonFinite(i)),
            Stmt::Forward(d) if *d < 0.0 => errs.push(SemanticError::NegativeDistance(i)),
            Stmt::ForwardUntilTurningPoint { skip: 0 } => errs.push(SemanticError::ZeroSkip(i)),
            Stmt::ForwardUntilObject { label, count, overshoot } => {
                if *count == 0 {
                    errs.push(SemanticError::ZeroCount(i));
                }
                if !overshoot.is_finite() {
                    errs.push(SemanticError::NonFinite(i));
                } else if *overshoot < 0.0 {
                    errs.push(SemanticError::NegativeOvershoot(i));
                }
                if label.trim().is_empty() {
                    errs.push(SemanticError::EmptyLabel(i));
                }
            }
            Stmt::Stop => stopped = true,
            _ => {}
        }
    }
    if !stopped {
        errs.push(SemanticError::MissingStop);
    }
    errs
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinematics::TurnDirection;

    #[test]
    fn well_formed_program_is_clean() {
        let p = parse_source("forward 3\nforward_until turning_point skip=2\nturn left\nstop\n").unwrap();
        assert!(validate(&p).is_empty());
    }

    #[test]
    fn programmatic_negative_distance() {
        let p = NavProgram::new(vec![Stmt::Forward(-3.0), Stmt::Stop]);
        assert_eq!(validate(&p), vec![SemanticError::NegativeDistance(0)]);
        assert_eq!(validate(&p)[0].to_string(), "NegativeDistance@0");
    }

    #[test]
    fn statements_after_stop() {
        let p = NavProgram::new(vec![Stmt::Stop, Stmt::Turn(TurnDirection::Left)]);
        assert_eq!(validate(&p), vec![SemanticError::UnreachableStatement(1)]);
    }

    #[test]
    fn zero_parameters_flagged() {
        let p = parse_source("forward_until turning_point skip=0\nforward_until object \"door\" count=0\n").unwrap();
        assert_eq!(validate(&p), vec![SemanticError::ZeroSkip(0), SemanticError::ZeroCount(1)]);
        let p = NavProgram::new(vec![Stmt::ForwardUntilObject { label: " ".into(), count: 1, overshoot: -1.0 }]);
        assert_eq!(
            validate(&p),
            vec![SemanticError::NegativeOvershoot(0), SemanticError::EmptyLabel(0), SemanticError::MissingStop]
        );
    }
}
