//! Harness configuration: one JSON document with per-module sections and
//! a scenario list. Relative paths resolve against the config file's
//! directory.

use crate::kinematics::{PidGains, SimConfig};
use crate::llm::LlmClientConfig;
use crate::metrics::MetricsConfig;
use crate::navscript::ExecConfig;
use crate::perception::PerceptionConfig;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("invalid config: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Backend {
    /// Execute a NavScript file as is.
    #[default]
    Program,
    /// Controlled-English rule compiler.
    Rules,
    /// Chat-completion compiler.
    Llm,
    /// Graph-walking baseline with the shortest-path oracle policy.
    AgentOracle,
    AgentRandom,
    AgentLlm,
}

impl Backend {
    pub fn as_str(self) -> &'static str {
        match self {
            Backend::Program => "program",
            Backend::Rules => "rules",
            Backend::Llm => "llm",
            Backend::AgentOracle => "agent_oracle",
            Backend::AgentRandom => "agent_random",
            Backend::AgentLlm => "agent_llm",
        }
    }

    pub fn is_agent(self) -> bool {
        matches!(self, Backend::AgentOracle | Backend::AgentRandom | Backend::AgentLlm)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub id: String,
    pub map: PathBuf,
    /// NavScript file (backend `program`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub program: Option<PathBuf>,
    /// Inline instruction text.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub instruction: Option<String>,
    /// Record id looked up in `corpus`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub instruction_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub corpus: Option<PathBuf>,
    #[serde(default)]
    pub backend: Backend,
    /// Group label; defaults to the backend name.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub method: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub route: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub study: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iteration: Option<u8>,
    /// Overrides the map's start heading.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub heading_deg: Option<f64>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_budget")]
    pub budget_s: f64,
}

fn default_budget() -> f64 {
    600.0
}

impl Scenario {
    pub fn new(id: impl Into<String>, map: impl Into<PathBuf>) -> Self {
        Self {
            id: id.into(),
            map: map.into(),
            program: None,
            instruction: None,
            instruction_id: None,
            corpus: None,
            backend: Backend::Program,
            method: None,
            route: None,
            study: None,
            iteration: None,
            heading_deg: None,
            seed: 0,
            budget_s: default_budget(),
        }
    }

    pub fn method(&self) -> String {
        self.method.clone().unwrap_or_else(|| self.backend.as_str().to_string())
    }

    pub fn check(&self) -> Result<(), ConfigError> {
        let bad = |why: &str| Err(ConfigError::Invalid(format!("scenario {:?}: {why}", self.id)));
        if self.id.is_empty() || self.id.contains(['/', '\\']) || self.id.starts_with('.') {
            return bad("id must be a plain, non-empty name");
        }
        if !(self.budget_s > 0.0) {
            return bad("budget_s must be positive");
        }
        if self.instruction_id.is_some() != self.corpus.is_some() {
            return bad("instruction_id and corpus go together");
        }
        let has_text = self.instruction.is_some() || self.instruction_id.is_some();
        if self.instruction.is_some() && self.instruction_id.is_some() {
            return bad("give instruction or instruction_id, not both");
        }
        match self.backend {
            Backend::Program if self.program.is_none() || has_text => {
                bad("backend program needs exactly a program file")
            }
            Backend::Rules | Backend::Llm if self.program.is_some() || !has_text => {
                bad("compiling backends need exactly an instruction")
            }
            Backend::AgentOracle | Backend::AgentRandom if self.program.is_some() => {
                bad("agent backends take no program")
            }
            Backend::AgentLlm if self.program.is_some() => bad("agent backends take no program"),
            _ => Ok(()),
        }
    }

    fn resolve(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.map);
        if let Some(p) = self.program.as_mut() {
            fix(p);
        }
        if let Some(p) = self.corpus.as_mut() {
            fix(p);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BatchConfig {
    pub id: String,
    pub workers: usize,
    pub output_dir: PathBuf,
    /// Directory with prompt template overrides.
    pub prompts_dir: Option<PathBuf>,
}

impl Default for BatchConfig {
    fn default() -> Self {
        Self { id: "batch".into(), workers: 4, output_dir: PathBuf::from("out"), prompts_dir: None }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HarnessConfig {
    pub sim: SimConfig,
    pub perception: PerceptionConfig,
    pub pid: PidGains,
    pub metrics: MetricsConfig,
    pub llm: LlmClientConfig,
    pub batch: BatchConfig,
    pub scenarios: Vec<Scenario>,
}

impl HarnessConfig {
    pub fn exec_config(&self) -> ExecConfig {
        ExecConfig { sim: self.sim.clone(), pid: self.pid.clone(), perception: self.perception.clone() }
    }

    pub fn from_json(text: &str, base: &Path) -> Result<Self, ConfigError> {
        let mut cfg: HarnessConfig = serde_json::from_str(text)?;
        for s in &mut cfg.scenarios {
            s.resolve(base);
        }
        if cfg.batch.output_dir.is_relative() {
            cfg.batch.output_dir = base.join(&cfg.batch.output_dir);
        }
        if let Some(p) = cfg.batch.prompts_dir.as_mut() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        cfg.check()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text =
            std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_json(&text, base)
    }

    /// Validation of everything except the scenario list length.
    pub fn check(&self) -> Result<(), ConfigError> {
        if self.batch.workers == 0 {
            return Err(ConfigError::Invalid("batch.workers must be at least 1".into()));
        }
        if self.batch.id.is_empty() || self.batch.id.contains(['/', '\\']) {
            return Err(ConfigError::Invalid("batch.id must be a plain, non-empty name".into()));
        }
        self.metrics.check().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        let mut ids = std::collections::BTreeSet::new();
        for s in &self.scenarios {
            s.check()?;
            if !ids.insert(&s.id) {
                return Err(ConfigError::Invalid(format!("duplicate scenario id {:?}", s.id)));
            }
        }
        Ok(())
    }
}
