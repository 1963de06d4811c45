//! Iterative graph-walking baseline: at each node the agent sees four
//! heading-relative views and a policy picks one to follow or stops.

use crate::geom::{normalize_angle, Point};
use crate::kinematics::Trajectory;
use crate::llm::{ChatBackend, ChatMessage};
use crate::navgraph::{shortest_path, Graph, GraphError, NavGraph};
use crate::perception::{visible, PerceptionConfig};
use crate::world::{Pose, WorldMap};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use regex::Regex;
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};
use std::f64::consts::FRAC_PI_2;
use std::fmt;
use std::sync::OnceLock;

pub const DEFAULT_AGENT_PROMPT: &str = include_str!("../prompts/agent_step.txt");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum View {
    Front,
    Left,
    Back,
    Right,
}

impl View {
    pub const ALL: [View; 4] = [View::Front, View::Left, View::Back, View::Right];

    pub fn offset(self) -> f64 {
        FRAC_PI_2 * self as usize as f64
    }

    /// View whose 90 degree wedge contains a heading-relative bearing.
    pub fn of_bearing(rel: f64) -> View {
        let shifted = (rel.to_degrees() + 45.0).rem_euclid(360.0);
        View::ALL[((shifted / 90.0).floor() as usize).min(3)]
    }

    pub fn as_str(self) -> &'static str {
        match self {
            View::Front => "front",
            View::Left => "left",
            View::Back => "back",
            View::Right => "right",
        }
    }
}

impl fmt::Display for View {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ViewInfo {
    pub neighbor: Option<usize>,
    pub edge_length: Option<f64>,
    pub objects: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub node: usize,
    pub heading: f64,
    /// Indexed by `View as usize`.
    pub views: [ViewInfo; 4],
    pub goal: String,
}

impl Observation {
    pub fn view(&self, v: View) -> &ViewInfo {
        &self.views[v as usize]
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("Goal: {}\n", self.goal);
        for v in View::ALL {
            let info = self.view(v);
            let path = match info.edge_length {
                Some(l) => format!("a path continues for {l:.1} m"),
                None => "no path".to_string(),
            };
            let objs = if info.objects.is_empty() { "nothing notable".to_string() } else { info.objects.join(", ") };
            s.push_str(&format!("{v}: {path}; visible: {objs}\n"));
        }
        s
    }
}

fn bearing(a: Point, b: Point) -> f64 {
    b.sub(a).angle()
}

/// Neighbours by view; when two share a view the nearer wins, then the smaller id.
pub fn view_neighbors(graph: &NavGraph, node: usize, heading: f64) -> [Option<(usize, f64)>; 4] {
    let mut out: [Option<(usize, f64)>; 4] = [None; 4];
    let here = graph.point(node);
    for &(nb, len) in graph.neighbors(node) {
        let v = View::of_bearing(normalize_angle(bearing(here, graph.point(nb)) - heading));
        let slot = &mut out[v as usize];
        match slot {
            Some((id, l)) if (*l, *id) <= (len, nb) => {}
            _ => *slot = Some((nb, len)),
        }
    }
    out
}

pub fn observe(graph: &NavGraph, map: &WorldMap, node: usize, heading: f64, goal: &str) -> Observation {
    let pc = PerceptionConfig::default();
    let here = graph.point(node);
    let nbs = view_neighbors(graph, node, heading);
    let views = View::ALL.map(|v| {
        let pose = Pose::new(here.x, here.y, heading + v.offset());
        let mut objects: Vec<String> = map
            .objects
            .iter()
            .filter(|o| visible(map, pose, o, pc.depth_threshold_m, pc.fov_deg.to_radians()).is_some())
            .map(|o| o.label.clone())
            .collect();
        objects.sort();
        objects.dedup();
        let nb = nbs[v as usize];
        ViewInfo { neighbor: nb.map(|n| n.0), edge_length: nb.map(|n| n.1), objects }
    });
    Observation { node, heading: normalize_angle(heading), views, goal: goal.to_string() }
}

/// Twice the node count of the shortest path.
pub fn iteration_cap(graph: &NavGraph, start: usize, goal: usize) -> Result<usize, GraphError> {
    let (path, _) = shortest_path(graph, start, goal)?;
    Ok(2 * path.len())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "view", rename_all = "snake_case")]
pub enum Action {
    Move(View),
    Stop,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub action: Action,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl Decision {
    pub fn go(v: View) -> Self {
        Self { action: Action::Move(v), note: None }
    }
    pub fn stop() -> Self {
        Self { action: Action::Stop, note: None }
    }
    pub fn stop_because(note: impl Into<String>) -> Self {
        Self { action: Action::Stop, note: Some(note.into()) }
    }
}

pub trait Policy {
    fn decide(&mut self, obs: &Observation) -> Decision;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    PolicyStop,
    IterationCap,
    NoMove,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentRun {
    pub visited: Vec<usize>,
    pub headings: Vec<f64>,
    pub decisions: Vec<Decision>,
    pub stop_reason: StopReason,
}

impl AgentRun {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("run log serializes")
    }

    pub fn final_node(&self) -> usize {
        *self.visited.last().expect("run has a start node")
    }

    pub fn points(&self, graph: &NavGraph) -> Vec<Point> {
        self.visited.iter().map(|&n| graph.point(n)).collect()
    }

    /// Constant-speed walk along the visited segments, sampled every `dt`.
    pub fn to_trajectory(&self, graph: &NavGraph, speed: f64, dt: f64) -> Trajectory {
        let mut traj = Trajectory::new();
        let start = graph.point(self.visited[0]);
        let mut t = 0.0;
        traj.push(t, Pose::new(start.x, start.y, self.headings[0]));
        for (i, w) in self.visited.windows(2).enumerate() {
            let (a, b) = (graph.point(w[0]), graph.point(w[1]));
            let h = self.headings[i + 1];
            let n = ((a.dist(b) / (speed * dt)).ceil() as usize).max(1);
            let seg_t = a.dist(b) / speed;
            for k in 1..=n {
                let p = a.lerp(b, k as f64 / n as f64);
                traj.push(t + seg_t * k as f64 / n as f64, Pose::new(p.x, p.y, h));
            }
            t += seg_t;
        }
        traj
    }
}

pub fn run_graph_agent(
    graph: &NavGraph,
    map: &WorldMap,
    policy: &mut dyn Policy,
    start: usize,
    heading: f64,
    goal_text: &str,
    cap: usize,
) -> AgentRun {
    let mut node = start;
    let mut heading = normalize_angle(heading);
    let mut run = AgentRun {
        visited: vec![start],
        headings: vec![heading],
        decisions: Vec::new(),
        stop_reason: StopReason::IterationCap,
    };
    for _ in 0..cap {
        let obs = observe(graph, map, node, heading, goal_text);
        let d = policy.decide(&obs);
        let action = d.action;
        run.decisions.push(d);
        match action {
            Action::Stop => {
                run.stop_reason = StopReason::PolicyStop;
                return run;
            }
            Action::Move(v) => {
                let Some(next) = obs.view(v).neighbor else {
                    run.stop_reason = StopReason::NoMove;
                    return run;
                };
                debug_assert!(graph.neighbors(node).iter().any(|&(n, _)| n == next));
                heading = bearing(graph.point(node), graph.point(next));
                node = next;
                run.visited.push(node);
                run.headings.push(heading);
            }
        }
    }
    run
}

#[derive(Clone, Copy, PartialEq)]
struct Entry(f64, usize);
impl Eq for Entry {}
impl Ord for Entry {
    fn cmp(&self, o: &Self) -> Ordering {
        o.0.total_cmp(&self.0).then_with(|| o.1.cmp(&self.1))
    }
}
impl PartialOrd for Entry {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}

/// Follows the shortest sequence of view moves that reaches the goal node,
/// then stops. Planned over (node, arrival edge) states so that only moves
/// the agent can actually observe are used.
pub struct OraclePolicy {
    plan: std::vec::IntoIter<View>,
}

impl OraclePolicy {
    pub fn new(graph: &NavGraph, start: usize, heading: f64, goal: usize) -> Result<Self, GraphError> {
        let n = graph.node_count();
        if start >= n {
            return Err(GraphError::UnknownNode(start));
        }
        if goal >= n {
            return Err(GraphError::UnknownNode(goal));
        }
        // state = (node, predecessor); the start has no predecessor
        let mut index: HashMap<(usize, Option<usize>), usize> = HashMap::new();
        let mut states: Vec<(usize, Option<usize>)> = vec![(start, None)];
        let mut dist = vec![0.0];
        let mut back: Vec<Option<(usize, View)>> = vec![None];
        index.insert((start, None), 0);
        let mut heap = BinaryHeap::from([Entry(0.0, 0)]);
        let mut found = None;
        while let Some(Entry(d, s)) = heap.pop() {
            if d > dist[s] {
                continue;
            }
            let (node, prev) = states[s];
            if node == goal {
                found = Some(s);
                break;
            }
            let h = prev.map_or(heading, |p| bearing(graph.point(p), graph.point(node)));
            for (vi, slot) in view_neighbors(graph, node, h).iter().enumerate() {
                let Some((nb, len)) = *slot else { continue };
                let key = (nb, Some(node));
                let nd = d + len;
                let id = *index.entry(key).or_insert_with(|| {
                    states.push(key);
                    dist.push(f64::INFINITY);
                    back.push(None);
                    states.len() - 1
                });
                if nd < dist[id] {
                    dist[id] = nd;
                    back[id] = Some((s, View::ALL[vi]));
                    heap.push(Entry(nd, id));
                }
            }
        }
        let mut s = found.ok_or(GraphError::Unreachable(start, goal))?;
        let mut plan = Vec::new();
        while let Some((p, v)) = back[s] {
            plan.push(v);
            s = p;
        }
        plan.reverse();
        Ok(Self { plan: plan.into_iter() })
    }
}

impl Policy for OraclePolicy {
    fn decide(&mut self, _obs: &Observation) -> Decision {
        self.plan.next().map_or_else(Decision::stop, Decision::go)
    }
}

/// Uniform choice among populated views, stopping with a fixed probability.
pub struct RandomPolicy {
    rng: ChaCha8Rng,
    stop_prob: f64,
}

impl RandomPolicy {
    pub fn new(seed: u64, stop_prob: f64) -> Self {
        Self { rng: ChaCha8Rng::seed_from_u64(seed), stop_prob: stop_prob.clamp(0.0, 1.0) }
    }
}

impl Policy for RandomPolicy {
    fn decide(&mut self, obs: &Observation) -> Decision {
        if self.rng.gen_bool(self.stop_prob) {
            return Decision::stop();
        }
        let open: Vec<View> = View::ALL.into_iter().filter(|v| obs.view(*v).neighbor.is_some()).collect();
        if open.is_empty() {
            return Decision::go(View::Front);
        }
        Decision::go(open[self.rng.gen_range(0..open.len())])
    }
}

fn decision_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\bMOVE\s+(?i:(front|left|right|back))\b|\bSTOP\b").expect("valid regex"))
}

/// First `MOVE <view>` or `STOP` token in a reply.
pub fn parse_decision(reply: &str) -> Decision {
    let Some(c) = decision_regex().captures(reply) else {
        let snippet: String = reply.chars().take(80).collect();
        return Decision::stop_because(format!("MalformedDecision: {snippet}"));
    };
    match c.get(1).map(|m| m.as_str().to_ascii_lowercase()) {
        None => Decision::stop(),
        Some(v) => Decision::go(match v.as_str() {
            "front" => View::Front,
            "left" => View::Left,
            "right" => View::Right,
            _ => View::Back,
        }),
    }
}

pub struct LlmPolicy<'a> {
    backend: &'a dyn ChatBackend,
    template: String,
}

impl<'a> LlmPolicy<'a> {
    /// `template` must contain `{observation}`.
    pub fn new(backend: &'a dyn ChatBackend, template: impl Into<String>) -> Self {
        Self { backend, template: template.into() }
    }
}

impl Policy for LlmPolicy<'_> {
    fn decide(&mut self, obs: &Observation) -> Decision {
        let prompt = self.template.replace("{observation}", &obs.to_text());
        match self.backend.chat(&[ChatMessage::user(prompt)]) {
            Ok(reply) => parse_decision(&reply),
            Err(e) => Decision::stop_because(format!("TransportError: {e}")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::{LlmError, ScriptedBackend};
    use crate::world::fixtures::straight;
    use crate::world::load_map;

    fn line_graph(n: usize) -> NavGraph {
        let nodes = (0..n).map(|i| Point::new(1.0 + 3.0 * i as f64, 1.0)).collect();
        NavGraph::from_parts(nodes, (1..n).map(|i| (i - 1, i)))
    }

    struct Always(View);
    impl Policy for Always {
        fn decide(&mut self, _: &Observation) -> Decision {
            Decision::go(self.0)
        }
    }

    #[test]
    fn single_east_neighbor_is_front() {
        let m = straight(10.0);
        let g = line_graph(2);
        let o = observe(&g, &m, 0, 0.0, "end");
        assert_eq!(o.view(View::Front).neighbor, Some(1));
        assert!((o.view(View::Front).edge_length.unwrap() - 3.0).abs() < 1e-12);
        for v in [View::Left, View::Right, View::Back] {
            assert_eq!(o.view(v).neighbor, None);
        }
        let o = observe(&g, &m, 1, 0.0, "end");
        assert_eq!(o.view(View::Back).neighbor, Some(0));
    }

    #[test]
    fn door_ahead_is_listed_in_front() {
        let m = load_map(
            r#"{"corridors":[{"id":"a","min":[0,0],"max":[20,2],"axis":"x"}],
                "objects":[{"id":"d1","label":"door","pos":[4,2]},{"id":"d2","label":"door","pos":[9,2]}],
                "start":{"pos":[1,1],"heading_deg":0},"goal":{"pos":[19,1]}}"#,
        )
        .unwrap();
        let g = line_graph(2);
        let o = observe(&g, &m, 0, 0.0, "end");
        assert_eq!(o.view(View::Front).objects, vec!["door".to_string()]);
        assert!(o.view(View::Back).objects.is_empty());
    }

    #[test]
    fn sector_boundaries() {
        assert_eq!(View::of_bearing(0.0), View::Front);
        assert_eq!(View::of_bearing(135f64.to_radians()), View::Back);
        assert_eq!(View::of_bearing(134f64.to_radians()), View::Left);
        assert_eq!(View::of_bearing(-90f64.to_radians()), View::Right);
        assert_eq!(View::of_bearing(-45f64.to_radians()), View::Front);
        assert_eq!(View::of_bearing(45f64.to_radians()), View::Left);
    }

    #[test]
    fn caps() {
        let g13 = line_graph(13);
        assert_eq!(iteration_cap(&g13, 0, 12).unwrap(), 26);
        let g43 = line_graph(43);
        assert_eq!(iteration_cap(&g43, 0, 42).unwrap(), 86);
        assert_eq!(iteration_cap(&g43, 5, 5).unwrap(), 2);
        let split = NavGraph::from_parts(vec![Point::new(0.0, 0.0), Point::new(5.0, 0.0)], []);
        assert_eq!(iteration_cap(&split, 0, 1), Err(GraphError::Unreachable(0, 1)));
    }

    #[test]
    fn oracle_follows_shortest_path() {
        let m = straight(40.0);
        let g = line_graph(8);
        let mut p = OraclePolicy::new(&g, 0, 0.0, 7).unwrap();
        let run = run_graph_agent(&g, &m, &mut p, 0, 0.0, "end", iteration_cap(&g, 0, 7).unwrap());
        assert_eq!(run.visited, (0..8).collect::<Vec<_>>());
        assert_eq!(run.stop_reason, StopReason::PolicyStop);
        // starting backwards: the oracle turns with a back move first
        let mut p = OraclePolicy::new(&g, 3, std::f64::consts::PI, 5).unwrap();
        let run = run_graph_agent(&g, &m, &mut p, 3, std::f64::consts::PI, "end", 10);
        assert_eq!(run.visited, vec![3, 4, 5]);
        assert_eq!(run.decisions[0].action, Action::Move(View::Back));
    }

    #[test]
    fn always_front_dead_end() {
        let m = straight(40.0);
        let g = line_graph(5);
        let run = run_graph_agent(&g, &m, &mut Always(View::Front), 0, 0.0, "end", 100);
        assert_eq!(run.visited, vec![0, 1, 2, 3, 4]);
        assert_eq!(run.stop_reason, StopReason::NoMove);
    }

    #[test]
    fn cap_bounds_random_runs() {
        let m = straight(40.0);
        let g = line_graph(10);
        for seed in 0..1000 {
            let mut p = RandomPolicy::new(seed, 0.02);
            let run = run_graph_agent(&g, &m, &mut p, 0, 0.0, "end", 26);
            assert!(run.visited.len() <= 27);
            assert!(run.decisions.len() <= 26);
            for w in run.visited.windows(2) {
                assert!(g.neighbors(w[0]).iter().any(|&(n, _)| n == w[1]));
            }
        }
    }

    #[test]
    fn llm_reply_parsing() {
        assert_eq!(parse_decision("MOVE front").action, Action::Move(View::Front));
        assert_eq!(parse_decision("I think MOVE Left is best").action, Action::Move(View::Left));
        let d = parse_decision("The goal is here, so I will STOP here.");
        assert_eq!(d, Decision::stop());
        let d = parse_decision("go north");
        assert_eq!(d.action, Action::Stop);
        assert!(d.note.unwrap().starts_with("MalformedDecision"));
    }

    #[test]
    fn llm_policy_drives_run() {
        let m = straight(40.0);
        let g = line_graph(4);
        let backend = ScriptedBackend::new(["MOVE front", "MOVE front", "STOP"]);
        let mut p = LlmPolicy::new(&backend, DEFAULT_AGENT_PROMPT);
        let run = run_graph_agent(&g, &m, &mut p, 0, 0.0, "the far end", 8);
        assert_eq!(run.visited, vec![0, 1, 2]);
        assert_eq!(run.stop_reason, StopReason::PolicyStop);
        let sent = &backend.requests()[0][0].content;
        assert!(sent.contains("front: a path continues for 3.0 m"));
        assert!(sent.contains("the far end"));

        let failing = ScriptedBackend::with_results([Err(LlmError::Transport("down".into()))]);
        let mut p = LlmPolicy::new(&failing, DEFAULT_AGENT_PROMPT);
        let run = run_graph_agent(&g, &m, &mut p, 0, 0.0, "x", 8);
        assert_eq!(run.visited, vec![0]);
        assert!(run.decisions[0].note.as_deref().unwrap().starts_with("TransportError"));
    }

    #[test]
    fn trajectory_and_log() {
        let m = straight(40.0);
        let g = line_graph(3);
        let run = run_graph_agent(&g, &m, &mut Always(View::Front), 0, 0.0, "end", 2);
        assert_eq!(run.stop_reason, StopReason::IterationCap);
        let tr = run.to_trajectory(&g, 1.0, 0.05);
        assert_eq!(tr.samples.len(), 1 + 2 * 60);
        assert!((tr.end_time() - 6.0).abs() < 1e-9);
        let last = tr.last_pose().unwrap();
        assert!((last.x - 7.0).abs() < 1e-12);
        let back: AgentRun = serde_json::from_str(&run.to_json()).unwrap();
        assert_eq!(back, run);
        assert!(run.to_json().contains("\"iteration_cap\""));
    }
}
