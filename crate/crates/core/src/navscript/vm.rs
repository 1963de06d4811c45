use super::{validate, NavProgram, SemanticError, Stmt};
use crate::geom::Cardinal;
use crate::kinematics::{
    move_forward, turn_limited, EventKind, Flow, Frame, MoveEnd, MoveOutcome, PidGains, RobotState, SimConfig,
    Trajectory,
};
use crate::perception::{detect_objects, detect_turning_point, ObjectTracker, PerceptionConfig};
use crate::world::{Pose, WorldMap};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use thiserror::Error;

/// Travel outside a zone required before the same zone counts again.
pub const ZONE_REENTRY_M: f64 = 2.0;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExecConfig {
    pub sim: SimConfig,
    pub pid: PidGains,
    pub perception: PerceptionConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExecStatus {
    Success,
    StoppedEarly,
    Stuck,
    BudgetExceeded,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StmtLog {
    pub index: usize,
    pub statement: String,
    pub t_start: f64,
    pub t_end: f64,
    pub pose_start: Pose,
    pub pose_end: Pose,
}

#[derive(Debug, Clone)]
pub struct ExecutionResult {
    pub status: ExecStatus,
    pub final_state: RobotState,
    pub trajectory: Trajectory,
    pub log: Vec<StmtLog>,
    pub tracker: ObjectTracker,
}

#[derive(Debug, Error, PartialEq)]
pub enum ExecError {
    #[error("program failed validation: {}", .0.iter().map(|e| e.to_string()).collect::<Vec<_>>().join(", "))]
    ValidationFailed(Vec<SemanticError>),
    #[error("budget must be positive, got {0}")]
    InvalidBudget(f64),
}

struct Vm<'a> {
    map: &'a WorldMap,
    cfg: &'a ExecConfig,
    state: RobotState,
    t: f64,
    traj: Trajectory,
    tracker: ObjectTracker,
    rng: ChaCha8Rng,
    budget: f64,
    zone: Option<String>,
    /// Odometer reading at the last exit from each zone.
    zone_exit: HashMap<String, f64>,
    /// Episode-wide odometer.
    odo: f64,
}

enum Halt {
    Stuck,
    Budget,
    SearchExhausted,
}

impl<'a> Vm<'a> {
    fn apply(&mut self, out: MoveOutcome) -> Option<Halt> {
        self.state = out.state;
        self.t = out.t;
        self.odo += out.odometer;
        self.traj.extend(out.trajectory);
        (out.end == MoveEnd::Stuck).then_some(Halt::Stuck)
    }

    fn over_budget(&self, t: f64) -> bool {
        t >= self.budget - 1e-9
    }

    /// Zone bookkeeping for one frame. Returns the id of a zone that was
    /// entered and counts as a fresh turning point.
    fn track_zone(
        zone: &mut Option<String>,
        zone_exit: &mut HashMap<String, f64>,
        map: &WorldMap,
        pose: Pose,
        odo: f64,
        t: f64,
        events: &mut Vec<crate::kinematics::Event>,
    ) -> Option<String> {
        let now = detect_turning_point(map, pose).map(|o| o.zone_id);
        if now == *zone {
            return None;
        }
        if let Some(prev) = zone.take() {
            zone_exit.insert(prev, odo);
        }
        *zone = now.clone();
        let entered = now?;
        events.push(crate::kinematics::Event { t, kind: EventKind::ZoneEntered(entered.clone()) });
        let fresh = zone_exit.get(&entered).is_none_or(|&exit| odo - exit >= ZONE_REENTRY_M);
        fresh.then_some(entered)
    }

    fn forward(&mut self, distance: f64) -> Option<Halt> {
        let map = self.map;
        let budget = self.budget;
        let base_odo = self.odo;
        let mut over = false;
        let (zone, zone_exit) = (&mut self.zone, &mut self.zone_exit);
        let out =
            move_forward(map, &self.cfg.sim, &self.cfg.pid, &self.state, distance, self.t, &mut |f: &Frame, ev| {
                Vm::track_zone(zone, zone_exit, map, f.state.pose, base_odo + f.odometer, f.t, ev);
                if f.t >= budget - 1e-9 {
                    over = true;
                    return Flow::Stop;
                }
                Flow::Continue
            });
        let halt = self.apply(out);
        if over {
            return Some(Halt::Budget);
        }
        halt
    }

    fn forward_until_turning_point(&mut self, skip: u32) -> Option<Halt> {
        let map = self.map;
        let budget = self.budget;
        let base_odo = self.odo;
        let mut over = false;
        let mut found = 0u32;
        let mut target: Option<String> = None;
        // a zone we start inside cannot count until left; track_zone marks the exit
        let (zone, zone_exit) = (&mut self.zone, &mut self.zone_exit);
        let out = move_forward(
            map,
            &self.cfg.sim,
            &self.cfg.pid,
            &self.state,
            self.cfg.sim.max_search_m,
            self.t,
            &mut |f: &Frame, ev| {
                if let Some(z) = Vm::track_zone(zone, zone_exit, map, f.state.pose, base_odo + f.odometer, f.t, ev) {
                    found += 1;
                    if found >= skip {
                        target = Some(z);
                        return Flow::Stop;
                    }
                }
                if f.t >= budget - 1e-9 {
                    over = true;
                    return Flow::Stop;
                }
                Flow::Continue
            },
        );
        let end = out.end;
        if let Some(h) = self.apply(out) {
            return Some(h);
        }
        if over {
            return Some(Halt::Budget);
        }
        let Some(zone_id) = target else {
            return (end == MoveEnd::Reached).then_some(Halt::SearchExhausted);
        };
        let center = map.zones.iter().find(|z| z.id == zone_id).map(|z| z.rect.center()).expect("detected zone exists");
        let u = Cardinal::nearest(self.state.pose.heading).unit();
        let ahead = center.sub(self.state.pose.point()).dot(u);
        if ahead > 0.0 {
            return self.forward(ahead);
        }
        None
    }

    fn forward_until_object(&mut self, label: &str, count: u32, overshoot: f64) -> Option<Halt> {
        let map = self.map;
        let budget = self.budget;
        let base_odo = self.odo;
        let mut over = false;
        let mut seen = 0u32;
        let mut last_object: Option<String> = None;
        let (zone, zone_exit, tracker, rng) = (&mut self.zone, &mut self.zone_exit, &mut self.tracker, &mut self.rng);
        let perception = &self.cfg.perception;
        let out = move_forward(
            map,
            &self.cfg.sim,
            &self.cfg.pid,
            &self.state,
            self.cfg.sim.max_search_m,
            self.t,
            &mut |f: &Frame, ev| {
                Vm::track_zone(zone, zone_exit, map, f.state.pose, base_odo + f.odometer, f.t, ev);
                let mut hits = detect_objects(map, f.state.pose, label, tracker, perception, rng);
                // nearest first so the count-th object is the one closest along the path
                hits.sort_by(|a, b| a.distance.total_cmp(&b.distance).then_with(|| a.object_id.cmp(&b.object_id)));
                for d in hits {
                    if seen < count {
                        seen += 1;
                        ev.push(crate::kinematics::Event {
                            t: f.t,
                            kind: EventKind::ObjectCounted(d.object_id.clone()),
                        });
                        last_object = Some(d.object_id);
                    }
                }
                if seen >= count {
                    return Flow::Stop;
                }
                if f.t >= budget - 1e-9 {
                    over = true;
                    return Flow::Stop;
                }
                Flow::Continue
            },
        );
        let end = out.end;
        if let Some(h) = self.apply(out) {
            return Some(h);
        }
        if over {
            return Some(Halt::Budget);
        }
        let Some(obj) = last_object.filter(|_| seen >= count) else {
            return (end == MoveEnd::Reached).then_some(Halt::SearchExhausted);
        };
        // pass the last counted object, then overshoot
        let pos = map.object(&obj).expect("detected object exists").position;
        let u = Cardinal::nearest(self.state.pose.heading).unit();
        let to_pass = pos.sub(self.state.pose.point()).dot(u).max(0.0);
        let extra = to_pass + overshoot;
        if extra > 0.0 {
            return self.forward(extra);
        }
        None
    }

    fn turn(&mut self, dir: crate::kinematics::TurnDirection) -> Option<Halt> {
        let (out, completed) = turn_limited(self.map, &self.cfg.sim, &self.state, dir, self.t, self.budget);
        self.apply(out);
        let z = detect_turning_point(self.map, self.state.pose).map(|o| o.zone_id);
        if z != self.zone {
            if let Some(prev) = self.zone.take() {
                self.zone_exit.insert(prev, self.odo);
            }
            self.zone = z;
        }
        (!completed).then_some(Halt::Budget)
    }
}

/// Runs a validated program from `initial`, capping simulated time at `budget` seconds.
pub fn execute(
    program: &NavProgram,
    map: &WorldMap,
    initial: &RobotState,
    budget: f64,
    seed: u64,
    cfg: &ExecConfig,
) -> Result<ExecutionResult, ExecError> {
    let errs = validate(program);
    if !errs.is_empty() {
        return Err(ExecError::ValidationFailed(errs));
    }
    if !(budget > 0.0) {
        return Err(ExecError::InvalidBudget(budget));
    }
    let mut traj = Trajectory::new();
    traj.push(0.0, initial.pose);
    let mut vm = Vm {
        map,
        cfg,
        state: initial.clone(),
        t: 0.0,
        traj,
        tracker: ObjectTracker::new(),
        rng: ChaCha8Rng::seed_from_u64(seed),
        budget,
        zone: detect_turning_point(map, initial.pose).map(|o| o.zone_id),
        zone_exit: HashMap::new(),
        odo: 0.0,
    };
    let mut log = Vec::new();
    let mut status = ExecStatus::Success;
    for (index, stmt) in program.statements.iter().enumerate() {
        if vm.over_budget(vm.t) && *stmt != Stmt::Stop {
            status = ExecStatus::BudgetExceeded;
            break;
        }
        let (t_start, pose_start) = (vm.t, vm.state.pose);
        let halt = match stmt {
            Stmt::Forward(d) => vm.forward(*d),
            Stmt::ForwardUntilTurningPoint { skip } => vm.forward_until_turning_point(*skip),
            Stmt::ForwardUntilObject { label, count, overshoot } => vm.forward_until_object(label, *count, *overshoot),
            Stmt::Turn(d) => vm.turn(*d),
            Stmt::Stop => None,
        };
        log.push(StmtLog {
            index,
            statement: stmt.to_string(),
            t_start,
            t_end: vm.t,
            pose_start,
            pose_end: vm.state.pose,
        });
        match halt {
            Some(Halt::Stuck) => {
                status = ExecStatus::Stuck;
                break;
            }
            Some(Halt::Budget) => {
                status = ExecStatus::BudgetExceeded;
                break;
            }
            Some(Halt::SearchExhausted) => {
                status = ExecStatus::StoppedEarly;
                break;
            }
            None => {}
        }
        if *stmt == Stmt::Stop {
            break;
        }
    }
    Ok(ExecutionResult { status, final_state: vm.state, trajectory: vm.traj, log, tracker: vm.tracker })
}
