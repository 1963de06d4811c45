use clap::{Parser, Subcommand, ValueEnum};
use mmh_core::compiler::{compile_rules, compile_with_llm, CompilationRecord, PromptSet, NAVSCRIPT_API_SPEC};
use mmh_core::config::{Backend, HarnessConfig, Scenario};
use mmh_core::corpus::{load_corpus, vocabulary_size, word_count_stats};
use mmh_core::harness::{trajectory_points, Harness};
use mmh_core::kinematics::RobotState;
use mmh_core::llm::HttpChatClient;
use mmh_core::metrics::{evaluate_episode, Episode};
use mmh_core::navgraph::{build_grid_graph, build_nav_graph, graph_stats, NavGraphParams};
use mmh_core::navscript::{execute, parse_source};
use mmh_core::render::render_trajectory_svg;
use mmh_core::world::{load_map, WorldMap};
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "mmh", version, about = "Instruction-guided corridor navigation harness")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum CompileBackend {
    Rules,
    Llm,
}

#[derive(Subcommand)]
enum Cmd {
    /// Compile, execute and score one scenario.
    Run {
        #[arg(long)]
        map: PathBuf,
        #[arg(long, conflicts_with = "instruction")]
        program: Option<PathBuf>,
        #[arg(long)]
        instruction: Option<String>,
        /// program, rules, llm, agent_oracle, agent_random or agent_llm.
        #[arg(long)]
        backend: Option<String>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "out/single")]
        out: PathBuf,
        #[arg(long, default_value = "run")]
        id: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 600.0)]
        budget: f64,
        #[arg(long)]
        heading_deg: Option<f64>,
    },
    /// Run every scenario of a config file and aggregate.
    Batch {
        config: PathBuf,
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        id: Option<String>,
    },
    /// Compile an instruction to NavScript.
    Compile {
        #[arg(long, conflicts_with = "file")]
        text: Option<String>,
        #[arg(long)]
        file: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "rules")]
        backend: CompileBackend,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Print the full compilation record as JSON.
        #[arg(long)]
        record: bool,
    },
    /// Execute a NavScript program on a map.
    Exec {
        #[arg(long)]
        map: PathBuf,
        #[arg(long)]
        program: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 600.0)]
        budget: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write the trajectory as JSON lines.
        #[arg(long)]
        trajectory: Option<PathBuf>,
    },
    /// Build the navigation graph (or the metric grid) and print statistics.
    Graph {
        #[arg(long)]
        map: PathBuf,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, default_value_t = 1000)]
        n: usize,
        #[arg(long, default_value_t = 2.5)]
        min_dist: f64,
        /// Build the grid graph with this cell size instead.
        #[arg(long)]
        grid_cell: Option<f64>,
        /// Write the graph JSON here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score a saved trajectory against the map's reference route.
    Metrics {
        #[arg(long)]
        map: PathBuf,
        #[arg(long)]
        trajectory: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Word-count statistics of an instruction corpus.
    Stats { corpus: PathBuf },
    /// Render a map with trajectories to SVG.
    Render {
        #[arg(long)]
        map: PathBuf,
        #[arg(long)]
        trajectory: Vec<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

enum Fail {
    Usage(String),
    Run(String),
}

fn usage<E: Display>(e: E) -> Fail {
    Fail::Usage(e.to_string())
}

fn failed<E: Display>(e: E) -> Fail {
    Fail::Run(e.to_string())
}

fn read(path: &Path) -> Result<String, Fail> {
    std::fs::read_to_string(path).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn map_at(path: &Path) -> Result<WorldMap, Fail> {
    load_map(&read(path)?).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn config_at(path: Option<&Path>) -> Result<HarnessConfig, Fail> {
    match path {
        Some(p) => HarnessConfig::load(p).map_err(usage),
        None => Ok(HarnessConfig::default()),
    }
}

fn write_or_print(out: Option<&Path>, text: &str) -> Result<(), Fail> {
    match out {
        Some(p) => std::fs::write(p, text).map_err(|e| failed(format!("{}: {e}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn json<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("serializable") + "\n"
}

fn run(cli: Cli) -> Result<ExitCode, Fail> {
    match cli.cmd {
        Cmd::Run { map, program, instruction, backend, config, out, id, seed, budget, heading_deg } => {
            let cfg = config_at(config.as_deref())?;
            let backend = match backend.as_deref() {
                Some(b) => serde_json::from_value::<Backend>(serde_json::Value::String(b.into())).map_err(usage)?,
                None if program.is_some() => Backend::Program,
                None => Backend::Rules,
            };
            let mut s = Scenario::new(id, map);
            s.program = program;
            s.instruction = instruction;
            s.backend = backend;
            s.seed = seed;
            s.budget_s = budget;
            s.heading_deg = heading_deg;
            s.check().map_err(usage)?;
            let h = Harness::new(cfg).map_err(usage)?;
            let report = h.run_scenario(&s, &out).map_err(failed)?;
            print!("{}", json(&report));
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Batch { config, workers, out, id } => {
            let mut cfg = config_at(Some(&config))?;
            if let Some(w) = workers {
                cfg.batch.workers = w;
            }
            if let Some(o) = out {
                cfg.batch.output_dir = o;
            }
            if let Some(i) = id {
                cfg.batch.id = i;
            }
            let h = Harness::new(cfg).map_err(usage)?;
            let report = h.run_batch().map_err(usage)?;
            print!("{}", report.to_table());
            Ok(ExitCode::from(report.exit_code() as u8))
        }
        Cmd::Compile { text, file, backend, config, record } => {
            let text = match (text, file) {
                (Some(t), _) => t,
                (None, Some(f)) => read(&f)?,
                (None, None) => return Err(usage("give --text or --file")),
            };
            let rec: CompilationRecord = match backend {
                CompileBackend::Rules => compile_rules(&text).map_err(failed)?,
                CompileBackend::Llm => {
                    let cfg = config_at(config.as_deref())?;
                    let prompts = match &cfg.batch.prompts_dir {
                        Some(d) => PromptSet::from_dir(d).map_err(usage)?,
                        None => PromptSet::default(),
                    };
                    let client = HttpChatClient::new(cfg.llm).map_err(usage)?;
                    compile_with_llm(&text, NAVSCRIPT_API_SPEC, &client, &prompts).map_err(failed)?
                }
            };
            if record {
                print!("{}", json(&rec));
            } else {
                println!("{}", rec.navscript);
            }
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Exec { map, program, config, budget, seed, trajectory } => {
            let cfg = config_at(config.as_deref())?;
            let m = map_at(&map)?;
            let p = parse_source(&read(&program)?).map_err(failed)?;
            let initial = RobotState::at_start(&m, &cfg.sim);
            let res = execute(&p, &m, &initial, budget, seed, &cfg.exec_config()).map_err(failed)?;
            if let Some(path) = trajectory {
                let f = std::fs::File::create(&path).map_err(|e| failed(format!("{}: {e}", path.display())))?;
                res.trajectory.write_jsonl(std::io::BufWriter::new(f)).map_err(failed)?;
            }
            print!(
                "{}",
                json(&serde_json::json!({
                    "status": res.status,
                    "final_pose": res.final_state.pose,
                    "duration_s": res.trajectory.end_time(),
                    "statements": res.log,
                }))
            );
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Graph { map, seed, n, min_dist, grid_cell, out } => {
            let m = map_at(&map)?;
            if let Some(cell) = grid_cell {
                let g = build_grid_graph(&m, cell).map_err(usage)?;
                print!("{}", json(&serde_json::json!({"nodes": g.nodes.len(), "edges": g.edge_count(), "cell": cell})));
                return Ok(ExitCode::SUCCESS);
            }
            let params = NavGraphParams { n_candidates: n, min_dist, seed, ..Default::default() };
            let g = build_nav_graph(&m, &params).map_err(usage)?;
            if let Some(path) = out {
                std::fs::write(&path, g.to_json()).map_err(|e| failed(format!("{}: {e}", path.display())))?;
            }
            print!("{}", json(&graph_stats(&g)));
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Metrics { map, trajectory, config } => {
            let cfg = config_at(config.as_deref())?;
            let m = map_at(&map)?;
            let points = trajectory_points(&trajectory).map_err(|e| usage(format!("{}: {e}", trajectory.display())))?;
            let grid = build_grid_graph(&m, cfg.metrics.grid_cell).map_err(failed)?;
            let reference = if m.reference.is_empty() { vec![m.start.point(), m.goal] } else { m.reference.clone() };
            let ep = Episode { trajectory: points, reference, goal: m.goal };
            let rep = evaluate_episode(&ep, &grid, &cfg.metrics).map_err(failed)?;
            print!("{}", json(&rep));
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Stats { corpus } => {
            let recs = load_corpus(&read(&corpus)?).map_err(failed)?;
            println!("{:<28} {:>3} {:>7} {:>7} {:>7} {:>8}", "group", "n", "mean", "median", "sd", "failure");
            for g in word_count_stats(&recs) {
                let fr = g.failure_rate.map_or_else(|| "-".to_string(), |f| format!("{:.1}%", 100.0 * f));
                println!(
                    "{:<28} {:>3} {:>7.1} {:>7.1} {:>7.1} {:>8}",
                    g.key.to_string(),
                    g.n,
                    g.mean,
                    g.median,
                    g.sd,
                    fr
                );
            }
            println!("vocabulary size: {}", vocabulary_size(&recs));
            println!("(median: lower median; sd: population)");
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Render { map, trajectory, out } => {
            let m = map_at(&map)?;
            let trajs = trajectory
                .iter()
                .map(|p| trajectory_points(p).map_err(|e| usage(format!("{}: {e}", p.display()))))
                .collect::<Result<Vec<_>, _>>()?;
            let svg = render_trajectory_svg(&m, &trajs, &m.reference);
            write_or_print(out.as_deref(), &svg)?;
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(Fail::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Fail::Run(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
