use super::{CompileError, Step, StepList};
use crate::kinematics::TurnDirection;
use crate::perception::normalize_label;
use regex::Regex;
use std::sync::OnceLock;

struct Rules {
    straight: Regex,
    at_turning_point: Regex,
    pass_objects: Regex,
    lone_turn: Regex,
    end: Regex,
    connector: Regex,
    then: Regex,
}

fn rules() -> &'static Rules {
    static R: OnceLock<Rules> = OnceLock::new();
    R.get_or_init(|| {
        let re = |s: &str| Regex::new(s).expect("valid rule regex");
        Rules {
            straight: re(r"^(?:go|walk|head)\s+straight\s+(?:for\s+)?(\d+(?:\.\d+)?)\s*(?:m|meters?|metres?)\b"),
            at_turning_point: re(
                r"^turn\s+(left|right)\s+(?:at|after)\s+the\s+(\w+)\s+(?:intersection|corner|turning\s+point|junction)\b",
            ),
            pass_objects: re(r"^turn\s+(left|right|around)\s+after\s+passing\s+(?:the\s+)?(\w+)\s+([a-z][a-z-]*)\b"),
            lone_turn: re(r"^turn\s+(left|right|around)\b"),
            end: re(r"^(?:stop|you\s+have\s+arrived|that'?s\s+the\s+destination)\b"),
            connector: re(r"^(?:\s|,|\band\b)+"),
            then: re(r"\bthen\b"),
        }
    })
}

const ORDINALS: [&str; 10] =
    ["first", "second", "third", "fourth", "fifth", "sixth", "seventh", "eighth", "ninth", "tenth"];
const NUMBER_WORDS: [&str; 12] =
    ["one", "two", "three", "four", "five", "six", "seven", "eight", "nine", "ten", "eleven", "twelve"];

/// `first`..`tenth`, `next`, or `1st`, `2nd`, `23rd`, ...
pub fn ordinal(word: &str) -> Option<u32> {
    if word == "next" {
        return Some(1);
    }
    if let Some(i) = ORDINALS.iter().position(|w| *w == word) {
        return Some(i as u32 + 1);
    }
    let digits = word
        .strip_suffix("st")
        .or_else(|| word.strip_suffix("nd"))
        .or_else(|| word.strip_suffix("rd"))
        .or_else(|| word.strip_suffix("th"))?;
    digits.parse().ok().filter(|&n| n > 0)
}

/// Digits or `one`..`twelve`.
pub fn number_word(word: &str) -> Option<u32> {
    if let Some(i) = NUMBER_WORDS.iter().position(|w| *w == word) {
        return Some(i as u32 + 1);
    }
    word.parse().ok().filter(|&n| n > 0)
}

fn direction(s: &str) -> TurnDirection {
    match s {
        "left" => TurnDirection::Left,
        "right" => TurnDirection::Right,
        _ => TurnDirection::Around,
    }
}

/// Lower-cased sentences split on `.`, `;` and the word `then`. A period
/// between two digits is kept as a decimal point.
pub fn split_sentences(text: &str) -> Vec<String> {
    let lower = text.to_lowercase().replace('\u{2019}', "'");
    let chars: Vec<char> = lower.chars().collect();
    let mut parts = Vec::new();
    let mut cur = String::new();
    for (i, &c) in chars.iter().enumerate() {
        let decimal =
            c == '.' && i > 0 && chars[i - 1].is_ascii_digit() && chars.get(i + 1).is_some_and(|n| n.is_ascii_digit());
        if (c == '.' || c == ';' || c == '!' || c == '?') && !decimal {
            parts.push(std::mem::take(&mut cur));
        } else {
            cur.push(c);
        }
    }
    parts.push(cur);
    let r = rules();
    parts
        .iter()
        .flat_map(|p| r.then.split(p).map(str::to_owned).collect::<Vec<_>>())
        .map(|s| {
            let mut s = s.split_whitespace().collect::<Vec<_>>().join(" ");
            loop {
                let t = s.trim_matches(|c: char| c == ',' || c.is_whitespace()).to_string();
                let t = t.strip_prefix("and ").map(str::to_owned).unwrap_or(t);
                let t = t.strip_suffix(" and").map(str::to_owned).unwrap_or(t);
                if t == s {
                    break;
                }
                s = t;
            }
            s
        })
        .filter(|s| !s.is_empty() && s != "and")
        .collect()
}

/// Applies the ordered rule table clause by clause. Text after an end
/// marker is ignored.
pub fn parse_instruction_rules(text: &str) -> Result<StepList, CompileError> {
    let r = rules();
    let mut steps = Vec::new();
    'sentences: for sentence in split_sentences(text) {
        let mut rest = sentence.as_str();
        while !rest.is_empty() {
            let no_match = || CompileError::NoMatch { sentence: sentence.clone() };
            let consumed = if let Some(c) = r.straight.captures(rest) {
                let d: f64 = c[1].parse().map_err(|_| no_match())?;
                steps.push(Step::GoStraight { distance: d });
                c[0].len()
            } else if let Some((c, k)) = r.at_turning_point.captures(rest).and_then(|c| ordinal(&c[2]).map(|k| (c, k)))
            {
                steps.push(Step::AtTurningPoint { ordinal: k });
                steps.push(Step::Turn { direction: direction(&c[1]) });
                c[0].len()
            } else if let Some((c, n)) = r.pass_objects.captures(rest).and_then(|c| number_word(&c[2]).map(|n| (c, n)))
            {
                steps.push(Step::PassObjects { label: normalize_label(&c[3]), count: n });
                steps.push(Step::Turn { direction: direction(&c[1]) });
                c[0].len()
            } else if let Some(c) = r.lone_turn.captures(rest) {
                steps.push(Step::Turn { direction: direction(&c[1]) });
                c[0].len()
            } else if r.end.is_match(rest) {
                break 'sentences;
            } else {
                return Err(no_match());
            };
            rest = &rest[consumed..];
            let skip = r.connector.find(rest).map_or(0, |m| m.end());
            rest = &rest[skip..];
        }
    }
    if steps.is_empty() {
        return Err(CompileError::NoMatch { sentence: text.trim().to_string() });
    }
    Ok(StepList::new(steps))
}
