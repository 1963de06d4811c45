//! Scenario execution (compile, execute, evaluate), batch aggregation and
//! report output.

use crate::agent::{
    iteration_cap, run_graph_agent, LlmPolicy, OraclePolicy, Policy, RandomPolicy, DEFAULT_AGENT_PROMPT,
};
use crate::compiler::{compile_rules, compile_with_llm, CompilationRecord, PromptSet, NAVSCRIPT_API_SPEC};
use crate::config::{Backend, ConfigError, HarnessConfig, Scenario};
use crate::geom::Point;
use crate::kinematics::{RobotState, Trajectory};
use crate::llm::{ChatBackend, HttpChatClient};
use crate::metrics::{aggregate, evaluate_episode, AggregateMetrics, Episode, MetricsReport};
use crate::navgraph::{build_grid_graph, build_nav_graph, snap, NavGraphParams};
use crate::navscript::{execute, parse_source};
use crate::render::render_trajectory_svg;
use crate::world::{load_map, Pose, WorldMap};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Stage {
    InputError,
    CompileError,
    ExecError,
    MetricError,
    OutputError,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("[{stage}] {message}")]
pub struct ScenarioError {
    pub stage: Stage,
    pub message: String,
}

fn tag<E: fmt::Display>(stage: Stage) -> impl Fn(E) -> ScenarioError {
    move |e| ScenarioError { stage, message: e.to_string() }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecSummary {
    pub status: String,
    pub final_pose: Pose,
    pub duration_s: f64,
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub scenario_id: String,
    pub method: String,
    pub route: String,
    pub study: Option<String>,
    pub iteration: Option<u8>,
    pub compilation: Option<CompilationRecord>,
    pub execution: ExecSummary,
    pub metrics: MetricsReport,
    /// Not serialized, so reports stay reproducible.
    #[serde(skip)]
    pub wall_clock_ms: u128,
}

struct Outcome {
    summary: ExecSummary,
    trajectory: Trajectory,
    compilation: Option<CompilationRecord>,
}

/// Instruction text with the study and iteration found next to it, if any.
type Instruction = (String, Option<String>, Option<u8>);

pub struct Harness {
    pub cfg: HarnessConfig,
    backend: Arc<dyn ChatBackend>,
    prompts: PromptSet,
    agent_prompt: String,
}

impl Harness {
    pub fn new(cfg: HarnessConfig) -> Result<Self, ConfigError> {
        let client = HttpChatClient::new(cfg.llm.clone()).map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Self::with_backend(cfg, Arc::new(client))
    }

    /// Uses `backend` for every chat request instead of the configured endpoint.
    pub fn with_backend(cfg: HarnessConfig, backend: Arc<dyn ChatBackend>) -> Result<Self, ConfigError> {
        let (prompts, agent_prompt) = match &cfg.batch.prompts_dir {
            Some(dir) => {
                let p = PromptSet::from_dir(dir).map_err(|source| ConfigError::Io { path: dir.clone(), source })?;
                let agent =
                    fs::read_to_string(dir.join("agent_step.txt")).unwrap_or_else(|_| DEFAULT_AGENT_PROMPT.to_string());
                (p, agent)
            }
            None => (PromptSet::default(), DEFAULT_AGENT_PROMPT.to_string()),
        };
        Ok(Self { cfg, backend, prompts, agent_prompt })
    }

    fn instruction(&self, s: &Scenario) -> Result<Option<Instruction>, ScenarioError> {
        if let Some(t) = &s.instruction {
            return Ok(Some((t.clone(), None, None)));
        }
        let (Some(id), Some(path)) = (&s.instruction_id, &s.corpus) else {
            return Ok(None);
        };
        let text = fs::read_to_string(path).map_err(|e| tag(Stage::InputError)(format!("{}: {e}", path.display())))?;
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let v: serde_json::Value = serde_json::from_str(line).map_err(tag(Stage::InputError))?;
            if v["id"].as_str() == Some(id) {
                let t =
                    v["text"].as_str().ok_or_else(|| tag(Stage::InputError)(format!("record {id:?} has no text")))?;
                let study = v["study"].as_str().map(str::to_owned);
                let iteration = v["iteration"].as_u64().and_then(|n| u8::try_from(n).ok());
                return Ok(Some((t.to_string(), study, iteration)));
            }
        }
        Err(tag(Stage::InputError)(format!("instruction {id:?} not found in {}", path.display())))
    }

    fn run_program(
        &self,
        s: &Scenario,
        map: &WorldMap,
        start: Pose,
        text: Option<&str>,
        dir: &Path,
    ) -> Result<Outcome, ScenarioError> {
        let (source, compilation) = match s.backend {
            Backend::Program => {
                let path = s.program.as_ref().expect("checked by config");
                let src =
                    fs::read_to_string(path).map_err(|e| tag(Stage::InputError)(format!("{}: {e}", path.display())))?;
                (src, None)
            }
            Backend::Rules => {
                let rec = compile_rules(text.expect("checked by config")).map_err(tag(Stage::CompileError))?;
                (rec.navscript.clone(), Some(rec))
            }
            _ => {
                let rec = compile_with_llm(
                    text.expect("checked by config"),
                    NAVSCRIPT_API_SPEC,
                    &*self.backend,
                    &self.prompts,
                )
                .map_err(tag(Stage::CompileError))?;
                (rec.navscript.clone(), Some(rec))
            }
        };
        let program = parse_source(&source).map_err(tag(Stage::CompileError))?;
        write(dir, "program.nav", program.pretty_print())?;
        if let Some(rec) = &compilation {
            write(dir, "compilation.json", to_json(rec))?;
        }
        let initial = RobotState::new(map, start, self.cfg.sim.robot_radius);
        let res = execute(&program, map, &initial, s.budget_s, s.seed, &self.cfg.exec_config())
            .map_err(tag(Stage::ExecError))?;
        let status = serde_json::to_value(res.status).expect("status serializes");
        Ok(Outcome {
            summary: ExecSummary {
                status: status.as_str().unwrap_or_default().to_string(),
                final_pose: res.final_state.pose,
                duration_s: res.trajectory.end_time(),
                samples: res.trajectory.samples.len(),
            },
            trajectory: res.trajectory,
            compilation,
        })
    }

    fn run_agent(
        &self,
        s: &Scenario,
        map: &WorldMap,
        start: Pose,
        text: Option<&str>,
        dir: &Path,
    ) -> Result<Outcome, ScenarioError> {
        let params = NavGraphParams { seed: s.seed, anchors: vec![start.point(), map.goal], ..Default::default() };
        let g = build_nav_graph(map, &params).map_err(tag(Stage::ExecError))?;
        let (a, b) = (snap(&g, start.point()), snap(&g, map.goal));
        let cap = iteration_cap(&g, a, b).map_err(tag(Stage::ExecError))?;
        let goal_text = text.map_or_else(|| format!("Reach the {}.", map.goal_label), str::to_owned);
        let mut policy: Box<dyn Policy + '_> = match s.backend {
            Backend::AgentOracle => {
                Box::new(OraclePolicy::new(&g, a, start.heading, b).map_err(tag(Stage::ExecError))?)
            }
            Backend::AgentRandom => Box::new(RandomPolicy::new(s.seed, 0.05)),
            _ => Box::new(LlmPolicy::new(&*self.backend, self.agent_prompt.clone())),
        };
        let run = run_graph_agent(&g, map, policy.as_mut(), a, start.heading, &goal_text, cap);
        write(dir, "agent_run.json", run.to_json())?;
        write(dir, "graph.json", g.to_json())?;
        let trajectory = run.to_trajectory(&g, self.cfg.sim.v_max, self.cfg.sim.dt);
        let status = serde_json::to_value(run.stop_reason).expect("reason serializes");
        Ok(Outcome {
            summary: ExecSummary {
                status: status.as_str().unwrap_or_default().to_string(),
                final_pose: trajectory.last_pose().unwrap_or(start),
                duration_s: trajectory.end_time(),
                samples: trajectory.samples.len(),
            },
            trajectory,
            compilation: None,
        })
    }

    /// Compile (if needed), execute and score one scenario; artifacts go to
    /// `out_dir/<scenario id>/`.
    pub fn run_scenario(&self, s: &Scenario, out_dir: &Path) -> Result<RunReport, ScenarioError> {
        let t0 = Instant::now();
        let dir = out_dir.join(&s.id);
        let result = self.run_scenario_in(s, &dir, t0);
        if let Err(e) = &result {
            let _ = fs::create_dir_all(&dir).and_then(|_| fs::write(dir.join("error.txt"), format!("{e}\n")));
        }
        result
    }

    fn run_scenario_in(&self, s: &Scenario, dir: &Path, t0: Instant) -> Result<RunReport, ScenarioError> {
        s.check().map_err(tag(Stage::InputError))?;
        let map_text =
            fs::read_to_string(&s.map).map_err(|e| tag(Stage::InputError)(format!("{}: {e}", s.map.display())))?;
        let map = load_map(&map_text).map_err(tag(Stage::InputError))?;
        let instr = self.instruction(s)?;
        fs::create_dir_all(dir).map_err(tag(Stage::OutputError))?;
        let mut start = map.start;
        if let Some(h) = s.heading_deg {
            start = Pose::new(start.x, start.y, h.to_radians());
        }
        let text = instr.as_ref().map(|i| i.0.as_str());
        let out = if s.backend.is_agent() {
            self.run_agent(s, &map, start, text, dir)?
        } else {
            self.run_program(s, &map, start, text, dir)?
        };

        let mut jsonl = Vec::new();
        out.trajectory.write_jsonl(&mut jsonl).map_err(tag(Stage::OutputError))?;
        write(dir, "trajectory.jsonl", jsonl)?;

        let grid = build_grid_graph(&map, self.cfg.metrics.grid_cell).map_err(tag(Stage::MetricError))?;
        let reference =
            if map.reference.is_empty() { vec![map.start.point(), map.goal] } else { map.reference.clone() };
        let points = out.trajectory.points();
        let ep = Episode { trajectory: points.clone(), reference: reference.clone(), goal: map.goal };
        let metrics = evaluate_episode(&ep, &grid, &self.cfg.metrics).map_err(tag(Stage::MetricError))?;
        write(dir, "metrics.json", to_json(&metrics))?;
        write(dir, "run.svg", render_trajectory_svg(&map, &[points], &reference))?;

        let route = s.route.clone().or_else(|| map.name.clone()).unwrap_or_else(|| {
            s.map.file_stem().map(|f| f.to_string_lossy().trim_end_matches(".map").to_string()).unwrap_or_default()
        });
        let (study, iteration) = match &instr {
            Some((_, st, it)) => (s.study.clone().or(st.clone()), s.iteration.or(*it)),
            None => (s.study.clone(), s.iteration),
        };
        let report = RunReport {
            scenario_id: s.id.clone(),
            method: s.method(),
            route,
            study,
            iteration,
            compilation: out.compilation,
            execution: out.summary,
            metrics,
            wall_clock_ms: t0.elapsed().as_millis(),
        };
        log::info!("scenario {} done in {} ms: {:?}", s.id, report.wall_clock_ms, report.metrics);
        Ok(report)
    }

    /// Runs every scenario on a bounded worker pool and writes
    /// `report.json` and `report.txt` under `<output_dir>/<batch id>/`.
    pub fn run_batch(&self) -> Result<BatchReport, ConfigError> {
        if self.cfg.scenarios.is_empty() {
            return Err(ConfigError::Invalid("scenario list is empty".into()));
        }
        self.cfg.check()?;
        let root = self.cfg.batch.output_dir.join(&self.cfg.batch.id);
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(self.cfg.batch.workers)
            .build()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        let results: Vec<Result<RunReport, ScenarioError>> =
            pool.install(|| self.cfg.scenarios.par_iter().map(|s| self.run_scenario(s, &root)).collect());
        let report = BatchReport::assemble(&self.cfg.batch.id, &self.cfg.scenarios, results);
        let io =
            |path: PathBuf, text: String| fs::write(&path, text).map_err(|source| ConfigError::Io { path, source });
        fs::create_dir_all(&root).map_err(|source| ConfigError::Io { path: root.clone(), source })?;
        io(root.join("report.json"), report.to_json())?;
        io(root.join("report.txt"), report.to_table())?;
        Ok(report)
    }
}

fn to_json<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("report serializes");
    s.push('\n');
    s
}

fn write(dir: &Path, name: &str, contents: impl AsRef<[u8]>) -> Result<(), ScenarioError> {
    fs::write(dir.join(name), contents).map_err(|e| tag(Stage::OutputError)(format!("{name}: {e}")))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunEntry {
    pub id: String,
    pub ok: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<ScenarioErrorDoc>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub report: Option<RunReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioErrorDoc {
    pub stage: Stage,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct GroupKey {
    pub method: String,
    pub route: String,
    pub study: Option<String>,
    pub iteration: Option<u8>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupRow {
    #[serde(flatten)]
    pub key: GroupKey,
    pub metrics: AggregateMetrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchReport {
    pub batch_id: String,
    pub runs: Vec<RunEntry>,
    pub groups: Vec<GroupRow>,
    pub failed: Vec<String>,
}

impl BatchReport {
    pub fn assemble(batch_id: &str, scenarios: &[Scenario], results: Vec<Result<RunReport, ScenarioError>>) -> Self {
        let mut runs = Vec::new();
        let mut failed = Vec::new();
        let mut groups: BTreeMap<GroupKey, Vec<(String, MetricsReport)>> = BTreeMap::new();
        for (s, r) in scenarios.iter().zip(results) {
            match r {
                Ok(rep) => {
                    let key = GroupKey {
                        method: rep.method.clone(),
                        route: rep.route.clone(),
                        study: rep.study.clone(),
                        iteration: rep.iteration,
                    };
                    groups.entry(key).or_default().push((rep.scenario_id.clone(), rep.metrics));
                    runs.push(RunEntry { id: s.id.clone(), ok: true, error: None, report: Some(rep) });
                }
                Err(e) => {
                    log::warn!("scenario {} failed: {e}", s.id);
                    failed.push(s.id.clone());
                    runs.push(RunEntry {
                        id: s.id.clone(),
                        ok: false,
                        error: Some(ScenarioErrorDoc { stage: e.stage, message: e.message }),
                        report: None,
                    });
                }
            }
        }
        let groups = groups
            .into_iter()
            .map(|(key, mut v)| {
                v.sort_by(|a, b| a.0.cmp(&b.0));
                let reps: Vec<MetricsReport> = v.into_iter().map(|(_, m)| m).collect();
                GroupRow { key, metrics: aggregate(&reps) }
            })
            .collect();
        runs.sort_by(|a, b| a.id.cmp(&b.id));
        failed.sort();
        Self { batch_id: batch_id.to_string(), runs, groups, failed }
    }

    pub fn exit_code(&self) -> i32 {
        if self.failed.is_empty() {
            0
        } else {
            1
        }
    }

    pub fn to_json(&self) -> String {
        to_json(self)
    }

    /// Aligned text table, one row per group.
    pub fn to_table(&self) -> String {
        let header = ["method", "route", "study", "iter", "n", "SR", "OSR", "SPD", "CLS", "unreach"];
        let mut rows: Vec<Vec<String>> = vec![header.iter().map(|s| s.to_string()).collect()];
        for g in &self.groups {
            let m = &g.metrics;
            rows.push(vec![
                g.key.method.clone(),
                g.key.route.clone(),
                g.key.study.clone().unwrap_or_else(|| "-".into()),
                g.key.iteration.map_or_else(|| "-".into(), |i| i.to_string()),
                m.n.to_string(),
                format!("{:.2}", m.sr),
                format!("{:.2}", m.osr),
                if m.spd.is_finite() { format!("{:.2}", m.spd) } else { "-".into() },
                format!("{:.3}", m.cls),
                m.spd_unreachable.to_string(),
            ]);
        }
        let widths: Vec<usize> =
            (0..header.len()).map(|c| rows.iter().map(|r| r[c].len()).max().unwrap_or(0)).collect();
        let mut out = String::new();
        for r in &rows {
            let line: Vec<String> = r.iter().zip(&widths).map(|(cell, w)| format!("{cell:<w$}")).collect();
            out.push_str(line.join("  ").trim_end());
            out.push('\n');
        }
        if !self.failed.is_empty() {
            out.push_str(&format!("failed: {}\n", self.failed.join(", ")));
        }
        out
    }
}

/// Points of a saved trajectory, for the standalone metrics and render commands.
pub fn trajectory_points(path: &Path) -> std::io::Result<Vec<Point>> {
    let f = std::io::BufReader::new(fs::File::open(path)?);
    Ok(Trajectory::read_jsonl(f)?.points())
}
