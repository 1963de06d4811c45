use super::{CompilationRecord, CompileError, CompileStatus};
use crate::llm::{ChatBackend, ChatMessage};
use crate::navscript::{parse_source, validate};
use regex::Regex;
use std::path::Path;
use std::sync::OnceLock;

pub const NAVSCRIPT_API_SPEC: &str = include_str!("../../prompts/navscript_spec.txt");

const REFINE_MARKER: &str = "=== refine ===";

/// Prompt templates. Stage templates hold a thought prompt and a refine
/// prompt separated by a `=== refine ===` line.
#[derive(Debug, Clone, PartialEq)]
pub struct PromptSet {
    pub parse_stage: String,
    pub codegen_stage: String,
    pub repair: String,
}

impl Default for PromptSet {
    fn default() -> Self {
        Self {
            parse_stage: include_str!("../../prompts/parse_stage.txt").into(),
            codegen_stage: include_str!("../../prompts/codegen_stage.txt").into(),
            repair: include_str!("../../prompts/repair.txt").into(),
        }
    }
}

impl PromptSet {
    /// Built-in templates, replaced by any same-named file found in `dir`.
    pub fn from_dir(dir: &Path) -> std::io::Result<Self> {
        let mut p = Self::default();
        for (name, slot) in [
            ("parse_stage.txt", &mut p.parse_stage),
            ("codegen_stage.txt", &mut p.codegen_stage),
            ("repair.txt", &mut p.repair),
        ] {
            let path = dir.join(name);
            if path.exists() {
                *slot = std::fs::read_to_string(path)?;
            }
        }
        Ok(p)
    }
}

fn split_stage(template: &str) -> (&str, &str) {
    match template.split_once(REFINE_MARKER) {
        Some((a, b)) => (a.trim(), b.trim()),
        None => (template.trim(), "Now give only the final answer."),
    }
}

/// Contents of the preferred fenced block: one tagged `navscript`/`nav` if
/// present, else the first. An unterminated final fence yields the rest of
/// the reply, so truncated output reaches the parser.
pub fn extract_fenced(reply: &str) -> Option<String> {
    static RE: OnceLock<Regex> = OnceLock::new();
    let re = RE.get_or_init(|| Regex::new(r"(?s)```[ \t]*([A-Za-z_-]*)[^\n]*\n(.*?)(?:```|\z)").expect("valid regex"));
    let blocks: Vec<(String, String)> =
        re.captures_iter(reply).map(|c| (c[1].to_ascii_lowercase(), c[2].to_string())).collect();
    blocks
        .iter()
        .find(|(lang, _)| lang == "navscript" || lang == "nav")
        .or(blocks.first())
        .map(|(_, body)| body.trim_end().to_string())
}

fn check(code: &str) -> Result<(), String> {
    let program = parse_source(code).map_err(|e| e.to_string())?;
    let errs = validate(&program);
    if errs.is_empty() {
        Ok(())
    } else {
        Err(errs.iter().map(ToString::to_string).collect::<Vec<_>>().join(", "))
    }
}

/// Two-stage prompting (steps, then code; each as thought then refine)
/// with one repair round.
pub fn compile_with_llm(
    text: &str,
    api_spec: &str,
    backend: &dyn ChatBackend,
    prompts: &PromptSet,
) -> Result<CompilationRecord, CompileError> {
    let mut replies = Vec::new();
    let ask = |msgs: &[ChatMessage], replies: &mut Vec<String>| -> Result<String, CompileError> {
        let r = backend.chat(msgs)?;
        replies.push(r.clone());
        Ok(r)
    };

    let (thought, refine) = split_stage(&prompts.parse_stage);
    let mut msgs = vec![ChatMessage::user(thought.replace("{instruction}", text))];
    let t1 = ask(&msgs, &mut replies)?;
    msgs.push(ChatMessage::assistant(t1));
    msgs.push(ChatMessage::user(refine));
    let steps_text = ask(&msgs, &mut replies)?;

    let (thought, refine) = split_stage(&prompts.codegen_stage);
    let mut msgs =
        vec![ChatMessage::system(api_spec), ChatMessage::user(thought.replace("{steps}", steps_text.trim()))];
    let t2 = ask(&msgs, &mut replies)?;
    msgs.push(ChatMessage::assistant(t2));
    msgs.push(ChatMessage::user(refine));

    let mut attempts = 0;
    loop {
        let reply = ask(&msgs, &mut replies)?;
        attempts += 1;
        let (error, code) = match extract_fenced(&reply) {
            None => ("no fenced code block found in the reply".to_string(), None),
            Some(code) => match check(&code) {
                Ok(()) => {
                    return Ok(CompilationRecord {
                        source: text.to_string(),
                        backend: "llm".into(),
                        steps_text,
                        navscript: code,
                        status: CompileStatus::Success,
                        attempts,
                        replies,
                    })
                }
                Err(e) => (e, Some(code)),
            },
        };
        if attempts >= 2 {
            return Err(match code {
                None => CompileError::Extraction { attempts, last_reply: reply },
                Some(code) => CompileError::Unparseable { attempts, error, code },
            });
        }
        log::debug!("repairing generated program: {error}");
        let repair = prompts.repair.replace("{error}", &error).replace("{code}", code.as_deref().unwrap_or(&reply));
        msgs.push(ChatMessage::assistant(reply));
        msgs.push(ChatMessage::user(repair));
    }
}
