use crate::kinematics::TurnDirection;
use std::fmt;

#[derive(Debug, Clone, PartialEq)]
pub enum Stmt {
    Forward(f64),
    ForwardUntilTurningPoint { skip: u32 },
    ForwardUntilObject { label: String, count: u32, overshoot: f64 },
    Turn(TurnDirection),
    Stop,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct NavProgram {
    pub statements: Vec<Stmt>,
}

impl NavProgram {
    pub fn new(statements: Vec<Stmt>) -> Self {
        Self { statements }
    }
}

/// Decimal rendering without exponent; always carries a fractional part when `force_point`.
pub(crate) fn fmt_num(v: f64, force_point: bool) -> String {
    let s = format!("{v}");
    if force_point && !s.contains('.') && v.is_finite() {
        format!("{s}.0")
    } else {
        s
    }
}

impl fmt::Display for Stmt {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Stmt::Forward(d) => write!(f, "forward {}", fmt_num(*d, false)),
            Stmt::ForwardUntilTurningPoint { skip } => write!(f, "forward_until turning_point skip={skip}"),
            Stmt::ForwardUntilObject { label, count, overshoot } => write!(
                f,
                "forward_until object \"{}\" count={count} overshoot={}",
                label.replace('\\', "\\\\").replace('"', "\\\""),
                fmt_num(*overshoot, true)
            ),
            Stmt::Turn(d) => write!(f, "turn {d}"),
            Stmt::Stop => f.write_str("stop"),
        }
    }
}

/// Canonical source text, one statement per line.
impl fmt::Display for NavProgram {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for s in &self.statements {
            writeln!(f, "{s}")?;
        }
        Ok(())
    }
}

impl NavProgram {
    pub fn pretty_print(&self) -> String {
        self.to_string()
    }
}
