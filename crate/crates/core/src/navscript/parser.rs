use super::ast::{NavProgram, Stmt};
use super::lexer::{tokenize, Keyword, Token, TokenKind};
use super::ParseError;
use crate::kinematics::TurnDirection;

struct Parser<'a> {
    tokens: &'a [Token],
    pos: usize,
}

impl<'a> Parser<'a> {
    fn peek(&self) -> &'a Token {
        &self.tokens[self.pos.min(self.tokens.len() - 1)]
    }

    fn bump(&mut self) -> &'a Token {
        let t = self.peek();
        if self.pos < self.tokens.len() - 1 {
            self.pos += 1;
        }
        t
    }

    fn error(&self, expected: &str) -> ParseError {
        let t = self.peek();
        ParseError::new(t.line, t.column, expected, t.kind.to_string())
    }

    fn eat_kw(&mut self, kw: Keyword) -> bool {
        if self.peek().kind == TokenKind::Kw(kw) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn expect_kw(&mut self, kw: Keyword) -> Result<(), ParseError> {
        if self.eat_kw(kw) {
            Ok(())
        } else {
            Err(self.error(kw.as_str()))
        }
    }

    fn expect_eq(&mut self) -> Result<(), ParseError> {
        if self.peek().kind == TokenKind::Eq {
            self.bump();
            Ok(())
        } else {
            Err(self.error("'='"))
        }
    }

    fn number(&mut self) -> Result<f64, ParseError> {
        match &self.peek().kind {
            TokenKind::Num { value, .. } => {
                let v = *value;
                self.bump();
                Ok(v)
            }
            _ => Err(self.error("number")),
        }
    }

    fn integer(&mut self) -> Result<u32, ParseError> {
        match &self.peek().kind {
            TokenKind::Num { text, is_int: true, .. } => {
                let v = text.parse::<u32>().map_err(|_| self.error("integer that fits in 32 bits"))?;
                self.bump();
                Ok(v)
            }
            _ => Err(self.error("integer")),
        }
    }

    fn statement(&mut self) -> Result<Stmt, ParseError> {
        let t = self.peek();
        match t.kind {
            TokenKind::Kw(Keyword::Forward) => {
                self.bump();
                Ok(Stmt::Forward(self.number()?))
            }
            TokenKind::Kw(Keyword::ForwardUntil) => {
                self.bump();
                if self.eat_kw(Keyword::TurningPoint) {
                    let skip = if self.eat_kw(Keyword::Skip) {
                        self.expect_eq()?;
                        self.integer()?
                    } else {
                        1
                    };
                    Ok(Stmt::ForwardUntilTurningPoint { skip })
                } else if self.eat_kw(Keyword::Object) {
                    let label = match &self.peek().kind {
                        TokenKind::Str(s) => {
                            let s = s.clone();
                            self.bump();
                            s
                        }
                        _ => return Err(self.error("quoted object label")),
                    };
                    self.expect_kw(Keyword::Count)?;
                    self.expect_eq()?;
                    let count = self.integer()?;
                    let overshoot = if self.eat_kw(Keyword::Overshoot) {
                        self.expect_eq()?;
                        self.number()?
                    } else {
                        0.0
                    };
                    Ok(Stmt::ForwardUntilObject { label, count, overshoot })
                } else {
                    Err(self.error("one of turning_point, object"))
                }
            }
            TokenKind::Kw(Keyword::Turn) => {
                self.bump();
                let dir = match self.peek().kind {
                    TokenKind::Kw(Keyword::Left) => TurnDirection::Left,
                    TokenKind::Kw(Keyword::Right) => TurnDirection::Right,
                    TokenKind::Kw(Keyword::Around) => TurnDirection::Around,
                    _ => return Err(self.error("one of left, right, around")),
                };
                self.bump();
                Ok(Stmt::Turn(dir))
            }
            TokenKind::Kw(Keyword::Stop) => {
                self.bump();
                Ok(Stmt::Stop)
            }
            _ => Err(self.error("one of forward, forward_until, turn, stop")),
        }
    }
}

/// Parses a token stream. A trailing `stop` is appended when missing.
pub fn parse(tokens: &[Token]) -> Result<NavProgram, ParseError> {
    if tokens.last().map(|t| &t.kind) != Some(&TokenKind::Eof) {
        return Err(ParseError::new(1, 1, "token stream ending in end of input", "truncated stream"));
    }
    let mut p = Parser { tokens, pos: 0 };
    let mut statements = Vec::new();
    loop {
        while p.peek().kind == TokenKind::Newline {
            p.bump();
        }
        if p.peek().kind == TokenKind::Eof {
            break;
        }
        statements.push(p.statement()?);
        match p.peek().kind {
            TokenKind::Newline | TokenKind::Eof => {}
            _ => return Err(p.error("end of line")),
        }
    }
    if statements.last() != Some(&Stmt::Stop) {
        statements.push(Stmt::Stop);
    }
    Ok(NavProgram { statements })
}

pub fn parse_source(source: &str) -> Result<NavProgram, ParseError> {
    parse(&tokenize(source)?)
}

/// Entry point for untrusted bytes; invalid UTF-8 is a parse error.
pub fn parse_bytes(bytes: &[u8]) -> Result<NavProgram, ParseError> {
    match std::str::from_utf8(bytes) {
        Ok(s) => parse_source(s),
        Err(e) => {
            let prefix = &bytes[..e.valid_up_to()];
            let line = 1 + prefix.iter().filter(|&&b| b == b'\n').count();
            let col = 1 + String::from_utf8_lossy(prefix.rsplit(|&b| b == b'\n').next().unwrap_or(&[])).chars().count();
            Err(ParseError::new(line, col, "UTF-8 text", "invalid byte sequence"))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simple_program() {
        let p = parse_source("forward 100\nturn right\nstop").unwrap();
        assert_eq!(p.statements, vec![Stmt::Forward(100.0), Stmt::Turn(TurnDirection::Right), Stmt::Stop]);
    }

    #[test]
    fn object_statement_gets_implicit_stop() {
        let p = parse_source("forward_until object \"door\" count=4 overshoot=1.0").unwrap();
        assert_eq!(
            p.statements,
            vec![Stmt::ForwardUntilObject { label: "door".into(), count: 4, overshoot: 1.0 }, Stmt::Stop]
        );
    }

    #[test]
    fn bad_turn_direction() {
        let e = parse_source("turn upward").unwrap_err();
        assert!(e.expected.contains("left") && e.expected.contains("right") && e.expected.contains("around"));
        assert_eq!(e.found, "upward");
        assert_eq!((e.line, e.column), (1, 6));
    }

    #[test]
    fn defaults_for_optional_parameters() {
        let p = parse_source("forward_until turning_point\nforward_until object \"chair\" count=1\n").unwrap();
        assert_eq!(p.statements[0], Stmt::ForwardUntilTurningPoint { skip: 1 });
        assert_eq!(p.statements[1], Stmt::ForwardUntilObject { label: "chair".into(), count: 1, overshoot: 0.0 });
    }

    #[test]
    fn integer_parameters_reject_decimals() {
        assert!(parse_source("forward_until turning_point skip=1.5").is_err());
        assert!(parse_source("forward_until turning_point skip=99999999999").is_err());
    }

    #[test]
    fn two_statements_on_one_line_rejected() {
        let e = parse_source("turn left turn right").unwrap_err();
        assert_eq!(e.expected, "end of line");
    }

    #[test]
    fn invalid_utf8_is_an_error() {
        let e = parse_bytes(b"stop\n\xff").unwrap_err();
        assert_eq!(e.line, 2);
    }

    #[test]
    fn empty_source_is_a_lone_stop() {
        assert_eq!(parse_source("# nothing\n\n").unwrap().statements, vec![Stmt::Stop]);
    }
}
