use super::ParseError;
use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Keyword {
    Forward,
    ForwardUntil,
    TurningPoint,
    Object,
    Turn,
    Left,
    Right,
    Around,
    Stop,
    Skip,
    Count,
    Overshoot,
}

impl Keyword {
    fn lookup(word: &str) -> Option<Keyword> {
        Some(match word {
            "forward" => Keyword::Forward,
            "forward_until" => Keyword::ForwardUntil,
            "turning_point" => Keyword::TurningPoint,
            "object" => Keyword::Object,
            "turn" => Keyword::Turn,
            "left" => Keyword::Left,
            "right" => Keyword::Right,
            "around" => Keyword::Around,
            "stop" => Keyword::Stop,
            "skip" => Keyword::Skip,
            "count" => Keyword::Count,
            "overshoot" => Keyword::Overshoot,
            _ => return None,
        })
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Keyword::Forward => "forward",
            Keyword::ForwardUntil => "forward_until",
            Keyword::TurningPoint => "turning_point",
            Keyword::Object => "object",
            Keyword::Turn => "turn",
            Keyword::Left => "left",
            Keyword::Right => "right",
            Keyword::Around => "around",
            Keyword::Stop => "stop",
            Keyword::Skip => "skip",
            Keyword::Count => "count",
            Keyword::Overshoot => "overshoot",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TokenKind {
    Kw(Keyword),
    Ident(String),
    /// `is_int` is true for literals without a decimal point.
    Num {
        value: f64,
        text: String,
        is_int: bool,
    },
    Str(String),
    Eq,
    Newline,
    Eof,
}

impl fmt::Display for TokenKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TokenKind::Kw(k) => f.write_str(k.as_str()),
            TokenKind::Ident(s) => f.write_str(s),
            TokenKind::Num { text, .. } => f.write_str(text),
            TokenKind::Str(s) => write!(f, "{s:?}"),
            TokenKind::Eq => f.write_str("="),
            TokenKind::Newline => f.write_str("newline"),
            TokenKind::Eof => f.write_str("end of input"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Token {
    pub kind: TokenKind,
    pub line: usize,
    pub column: usize,
}

fn is_number(s: &str) -> bool {
    let mut parts = s.splitn(2, '.');
    let int = parts.next().unwrap_or("");
    let frac = parts.next();
    !int.is_empty()
        && int.bytes().all(|b| b.is_ascii_digit())
        && frac.is_none_or(|f| !f.is_empty() && f.bytes().all(|b| b.is_ascii_digit()))
}

/// Splits source into tokens. Comments and blank lines produce nothing;
/// the stream always ends with `Eof`.
pub fn tokenize(source: &str) -> Result<Vec<Token>, ParseError> {
    let chars: Vec<char> = source.chars().collect();
    let mut tokens = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1usize, 1usize);

    while i < chars.len() {
        let c = chars[i];
        let (tl, tc) = (line, col);
        match c {
            ' ' | '\t' | '\r' => {
                i += 1;
                col += 1;
            }
            '\n' => {
                if !matches!(tokens.last(), None | Some(Token { kind: TokenKind::Newline, .. })) {
                    tokens.push(Token { kind: TokenKind::Newline, line: tl, column: tc });
                }
                i += 1;
                line += 1;
                col = 1;
            }
            '#' => {
                while i < chars.len() && chars[i] != '\n' {
                    i += 1;
                    col += 1;
                }
            }
            '=' => {
                tokens.push(Token { kind: TokenKind::Eq, line: tl, column: tc });
                i += 1;
                col += 1;
            }
            '"' => {
                let mut s = String::new();
                i += 1;
                col += 1;
                loop {
                    match chars.get(i) {
                        None | Some('\n') => {
                            return Err(ParseError::new(tl, tc, "closing '\"'", "end of line"));
                        }
                        Some('"') => {
                            i += 1;
                            col += 1;
                            break;
                        }
                        Some('\\') => match chars.get(i + 1) {
                            Some(&e @ ('"' | '\\')) => {
                                s.push(e);
                                i += 2;
                                col += 2;
                            }
                            other => {
                                let found = other.map_or("end of input".to_string(), |c| format!("\\{c}"));
                                return Err(ParseError::new(line, col, "escape \\\" or \\\\", found));
                            }
                        },
                        Some(&ch) => {
                            s.push(ch);
                            i += 1;
                            col += 1;
                        }
                    }
                }
                tokens.push(Token { kind: TokenKind::Str(s), line: tl, column: tc });
            }
            c if c.is_ascii_digit() => {
                let start = i;
                while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '.' || chars[i] == '_') {
                    i += 1;
                }
                let text: String = chars[start..i].iter().collect();
                col += i - start;
                if !is_number(&text) {
                    return Err(ParseError::new(tl, tc, "number literal", text));
                }
                let value: f64 = text.parse().map_err(|_| ParseError::new(tl, tc, "number literal", text.clone()))?;
                if !value.is_finite() {
                    return Err(ParseError::new(tl, tc, "finite number", text));
                }
                let is_int = !text.contains('.');
                tokens.push(Token { kind: TokenKind::Num { value, text, is_int }, line: tl, column: tc });
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let start = i;
                while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                    i += 1;
                }
                let word: String = chars[start..i].iter().collect();
                col += i - start;
                let kind = Keyword::lookup(&word).map_or(TokenKind::Ident(word), TokenKind::Kw);
                tokens.push(Token { kind, line: tl, column: tc });
            }
            other => {
                return Err(ParseError::new(tl, tc, "statement", format!("illegal character {other:?}")));
            }
        }
    }
    tokens.push(Token { kind: TokenKind::Eof, line, column: col });
    Ok(tokens)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kinds(src: &str) -> Vec<TokenKind> {
        tokenize(src).unwrap().into_iter().map(|t| t.kind).collect()
    }

    #[test]
    fn forward_with_decimal() {
        assert_eq!(
            kinds("forward 10.5"),
            vec![
                TokenKind::Kw(Keyword::Forward),
                TokenKind::Num { value: 10.5, text: "10.5".into(), is_int: false },
                TokenKind::Eof
            ]
        );
    }

    #[test]
    fn comments_are_stripped() {
        assert_eq!(
            kinds("turn left # at statue"),
            vec![TokenKind::Kw(Keyword::Turn), TokenKind::Kw(Keyword::Left), TokenKind::Eof]
        );
    }

    #[test]
    fn malformed_literal_points_at_its_start() {
        let e = tokenize("forward 10..5").unwrap_err();
        assert_eq!((e.line, e.column), (1, 9));
        let e = tokenize("stop\nforward 3m").unwrap_err();
        assert_eq!((e.line, e.column), (2, 9));
    }

    #[test]
    fn blank_lines_collapse() {
        let k = kinds("\n\nstop\n\n\nstop\n");
        assert_eq!(
            k,
            vec![
                TokenKind::Kw(Keyword::Stop),
                TokenKind::Newline,
                TokenKind::Kw(Keyword::Stop),
                TokenKind::Newline,
                TokenKind::Eof
            ]
        );
    }

    #[test]
    fn strings_and_escapes() {
        assert_eq!(kinds(r#""a \"b\" \\""#)[0], TokenKind::Str(r#"a "b" \"#.into()));
        assert!(tokenize("\"open").is_err());
        assert!(tokenize("forward -3").is_err());
    }
}
