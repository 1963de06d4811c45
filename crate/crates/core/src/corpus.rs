//! Instruction datasets (JSON lines) and their word-count statistics.

use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Study {
    Online,
    Onsite,
}

impl fmt::Display for Study {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Study::Online => "online",
            Study::Onsite => "onsite",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstructionRecord {
    pub id: String,
    pub route_id: String,
    pub study: Study,
    pub iteration: u8,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure_flag: Option<bool>,
}

#[derive(Debug, Error, PartialEq)]
#[error("line {line}: {reason}")]
pub struct SchemaError {
    pub line: usize,
    pub reason: String,
}

pub fn load_corpus(text: &str) -> Result<Vec<InstructionRecord>, SchemaError> {
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let err = |reason: String| SchemaError { line, reason };
        let rec: InstructionRecord = serde_json::from_str(raw).map_err(|e| err(e.to_string()))?;
        if !matches!(rec.route_id.as_str(), "route_1" | "route_2") {
            return Err(err(format!("unknown route_id {:?}", rec.route_id)));
        }
        if !(1..=2).contains(&rec.iteration) {
            return Err(err(format!("iteration must be 1 or 2, got {}", rec.iteration)));
        }
        if rec.text.trim().is_empty() {
            return Err(err("text is empty".into()));
        }
        if !seen.insert(rec.id.clone()) {
            return Err(err(format!("duplicate id {:?}", rec.id)));
        }
        out.push(rec);
    }
    Ok(out)
}

pub fn tokenize(text: &str) -> Vec<String> {
    text.chars()
        .filter(|c| !matches!(c, '.' | ',' | '!' | '?' | ';' | ':' | '"' | '(' | ')'))
        .collect::<String>()
        .to_lowercase()
        .split_whitespace()
        .map(str::to_owned)
        .collect()
}

pub fn word_count(text: &str) -> usize {
    tokenize(text).len()
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct GroupKey {
    pub study: Study,
    pub route_id: String,
    pub iteration: u8,
}

impl fmt::Display for GroupKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}/it{}", self.study, self.route_id, self.iteration)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupStats {
    pub key: GroupKey,
    pub n: usize,
    pub mean: f64,
    /// Lower median for even `n`.
    pub median: f64,
    /// Population standard deviation.
    pub sd: f64,
    pub failure_rate: Option<f64>,
}

/// Stats over one list of counts; `None` when empty.
pub fn summarize(counts: &[usize]) -> Option<(f64, f64, f64)> {
    if counts.is_empty() {
        return None;
    }
    let n = counts.len() as f64;
    let mean = counts.iter().sum::<usize>() as f64 / n;
    let mut sorted = counts.to_vec();
    sorted.sort_unstable();
    let median = sorted[(sorted.len() - 1) / 2] as f64;
    let var = counts.iter().map(|&c| (c as f64 - mean).powi(2)).sum::<f64>() / n;
    Some((mean, median, var.sqrt()))
}

pub fn word_count_stats(records: &[InstructionRecord]) -> Vec<GroupStats> {
    let mut groups: BTreeMap<GroupKey, Vec<&InstructionRecord>> = BTreeMap::new();
    for r in records {
        let key = GroupKey { study: r.study, route_id: r.route_id.clone(), iteration: r.iteration };
        groups.entry(key).or_default().push(r);
    }
    groups
        .into_iter()
        .filter_map(|(key, recs)| {
            let counts: Vec<usize> = recs.iter().map(|r| word_count(&r.text)).collect();
            let Some((mean, median, sd)) = summarize(&counts) else {
                log::info!("skipping empty group {key}");
                return None;
            };
            let flags: Vec<bool> = recs.iter().filter_map(|r| r.failure_flag).collect();
            let failure_rate =
                (!flags.is_empty()).then(|| flags.iter().filter(|&&f| f).count() as f64 / flags.len() as f64);
            Some(GroupStats { n: counts.len(), key, mean, median, sd, failure_rate })
        })
        .collect()
}

pub fn vocabulary_size(records: &[InstructionRecord]) -> usize {
    records.iter().flat_map(|r| tokenize(&r.text)).collect::<BTreeSet<_>>().len()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(id: &str, text: &str) -> InstructionRecord {
        InstructionRecord {
            id: id.into(),
            route_id: "route_1".into(),
            study: Study::Online,
            iteration: 1,
            text: text.into(),
            failure_flag: None,
        }
    }

    #[test]
    fn loads_two_lines() {
        let t = r#"{"id":"a","route_id":"route_1","study":"online","iteration":1,"text":"go"}
{"id":"b","route_id":"route_2","study":"onsite","iteration":2,"text":"stop","failure_flag":true}"#;
        let v = load_corpus(t).unwrap();
        assert_eq!(v.len(), 2);
        assert_eq!(v[1].failure_flag, Some(true));
    }

    #[test]
    fn schema_errors_carry_line() {
        let dup = r#"{"id":"a","route_id":"route_1","study":"online","iteration":1,"text":"go"}
{"id":"a","route_id":"route_1","study":"online","iteration":1,"text":"go"}"#;
        assert_eq!(load_corpus(dup).unwrap_err().line, 2);
        let it3 = r#"{"id":"a","route_id":"route_1","study":"online","iteration":3,"text":"go"}"#;
        let e = load_corpus(it3).unwrap_err();
        assert_eq!(e.line, 1);
        assert!(e.reason.contains("iteration"));
        assert!(load_corpus(r#"{"id":"a"}"#).is_err());
    }

    #[test]
    fn arithmetic() {
        let s = word_count_stats(&[rec("a", "go left"), rec("b", "go left now.")]);
        assert_eq!(s.len(), 1);
        assert_eq!((s[0].mean, s[0].median, s[0].sd), (2.5, 2.0, 0.5));
        assert_eq!(s[0].failure_rate, None);
        let words = vec!["w"; 47].join(" ");
        let s = word_count_stats(&[rec("a", &words)]);
        assert_eq!((s[0].mean, s[0].median, s[0].sd), (47.0, 47.0, 0.0));
    }

    #[test]
    fn vocabulary() {
        assert_eq!(vocabulary_size(&[rec("a", "go go left"), rec("b", "left right")]), 3);
        assert_eq!(vocabulary_size(&[]), 0);
        assert_eq!(tokenize("Turn (left), then STOP!"), vec!["turn", "left", "then", "stop"]);
    }
}
