//! Unicycle robot simulation with PID centre-line tracking.

use crate::geom::{normalize_angle, Cardinal, Point, Vec2};
use crate::world::{centerline_of, Corridor, Pose, WorldMap};
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;
use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt;
use std::io::{self, BufRead, Write};

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub dt: f64,
    pub v_max: f64,
    pub omega_max: f64,
    pub robot_radius: f64,
    /// Stuck when progress over `stuck_window_s` is below `stuck_min_progress_m`.
    pub stuck_window_s: f64,
    pub stuck_min_progress_m: f64,
    /// Travel limit for open-ended `forward_until` searches.
    pub max_search_m: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            dt: 0.05,
            v_max: 1.0,
            omega_max: 1.5,
            robot_radius: 0.3,
            stuck_window_s: 2.0,
            stuck_min_progress_m: 0.05,
            max_search_m: 500.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct PidGains {
    pub kp: f64,
    pub ki: f64,
    pub kd: f64,
    /// Weight of the heading error in the combined error signal.
    pub lambda: f64,
    /// Anti-windup clamp on the integral term.
    pub integral_limit: f64,
}

impl Default for PidGains {
    fn default() -> Self {
        Self { kp: 1.2, ki: 0.0, kd: 0.4, lambda: 1.0, integral_limit: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobotState {
    pub pose: Pose,
    pub speed: f64,
    pub radius: f64,
    pub current_corridor: Option<String>,
}

impl RobotState {
    pub fn new(map: &WorldMap, pose: Pose, radius: f64) -> Self {
        let current_corridor = resolve_corridor(map, pose).map(|c| c.id.clone());
        Self { pose, speed: 0.0, radius, current_corridor }
    }

    pub fn at_start(map: &WorldMap, cfg: &SimConfig) -> Self {
        Self::new(map, map.start, cfg.robot_radius)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlCommand {
    pub v: f64,
    pub omega: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub t: f64,
    pub pose: Pose,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "event", content = "detail", rename_all = "snake_case")]
pub enum EventKind {
    TurnDone,
    ObjectCounted(String),
    ZoneEntered(String),
    Collision,
    Stuck,
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EventKind::TurnDone => f.write_str("turn_done"),
            EventKind::ObjectCounted(id) => write!(f, "object_counted({id})"),
            EventKind::ZoneEntered(id) => write!(f, "zone_entered({id})"),
            EventKind::Collision => f.write_str("collision"),
            EventKind::Stuck => f.write_str("stuck"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub t: f64,
    pub kind: EventKind,
}

/// Timestamped poses plus discrete events.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trajectory {
    pub samples: Vec<Sample>,
    pub events: Vec<Event>,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum LogLine {
    Sample { t: f64, x: f64, y: f64, heading: f64 },
    Event { t: f64, event: String, detail: Option<String> },
}

impl Trajectory {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, t: f64, pose: Pose) {
        self.samples.push(Sample { t, pose });
    }

    pub fn event(&mut self, t: f64, kind: EventKind) {
        self.events.push(Event { t, kind });
    }

    /// Appends `other`, dropping a leading sample that duplicates our last timestamp.
    pub fn extend(&mut self, other: Trajectory) {
        let last_t = self.samples.last().map(|s| s.t);
        self.samples.extend(other.samples.into_iter().filter(|s| last_t.is_none_or(|lt| s.t > lt)));
        self.events.extend(other.events);
    }

    pub fn last_pose(&self) -> Option<Pose> {
        self.samples.last().map(|s| s.pose)
    }

    pub fn end_time(&self) -> f64 {
        self.samples.last().map_or(0.0, |s| s.t)
    }

    pub fn points(&self) -> Vec<Point> {
        self.samples.iter().map(|s| s.pose.point()).collect()
    }

    pub fn has_event(&self, pred: impl Fn(&EventKind) -> bool) -> bool {
        self.events.iter().any(|e| pred(&e.kind))
    }

    /// Samples and events interleaved by time, one JSON object per line.
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> io::Result<()> {
        let mut ev = self.events.iter().peekable();
        for s in &self.samples {
            while let Some(e) = ev.next_if(|e| e.t < s.t) {
                write_event(&mut w, e)?;
            }
            let line = LogLine::Sample { t: s.t, x: s.pose.x, y: s.pose.y, heading: s.pose.heading };
            serde_json::to_writer(&mut w, &line)?;
            w.write_all(b"\n")?;
            while let Some(e) = ev.next_if(|e| e.t <= s.t) {
                write_event(&mut w, e)?;
            }
        }
        for e in ev {
            write_event(&mut w, e)?;
        }
        Ok(())
    }

    pub fn read_jsonl<R: BufRead>(r: R) -> io::Result<Trajectory> {
        let mut traj = Trajectory::new();
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let parsed: LogLine = serde_json::from_str(&line)
                .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, format!("line {}: {e}", i + 1)))?;
            match parsed {
                LogLine::Sample { t, x, y, heading } => traj.push(t, Pose { x, y, heading }),
                LogLine::Event { t, event, detail } => {
                    let kind = match (event.as_str(), detail) {
                        ("turn_done", _) => EventKind::TurnDone,
                        ("object_counted", Some(d)) => EventKind::ObjectCounted(d),
                        ("zone_entered", Some(d)) => EventKind::ZoneEntered(d),
                        ("collision", _) => EventKind::Collision,
                        ("stuck", _) => EventKind::Stuck,
                        (other, _) => {
                            return Err(io::Error::new(
                                io::ErrorKind::InvalidData,
                                format!("line {}: unknown event {other:?}", i + 1),
                            ))
                        }
                    };
                    traj.event(t, kind);
                }
            }
        }
        Ok(traj)
    }
}

fn write_event<W: Write>(w: &mut W, e: &Event) -> io::Result<()> {
    let (name, detail) = match &e.kind {
        EventKind::TurnDone => ("turn_done", None),
        EventKind::ObjectCounted(id) => ("object_counted", Some(id.clone())),
        EventKind::ZoneEntered(id) => ("zone_entered", Some(id.clone())),
        EventKind::Collision => ("collision", None),
        EventKind::Stuck => ("stuck", None),
    };
    let line = LogLine::Event { t: e.t, event: name.to_string(), detail };
    serde_json::to_writer(&mut *w, &line)?;
    w.write_all(b"\n")
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub state: RobotState,
    pub collision: bool,
}

/// One unicycle integration step. A move that would put the body disc
/// outside passable space leaves the position unchanged.
pub fn step(map: &WorldMap, state: &RobotState, cmd: ControlCommand, dt: f64) -> StepOutcome {
    let p = &state.pose;
    let nx = p.x + cmd.v * p.heading.cos() * dt;
    let ny = p.y + cmd.v * p.heading.sin() * dt;
    let heading = normalize_angle(p.heading + cmd.omega * dt);
    let moved = nx != p.x || ny != p.y;
    let blocked = moved && !map.disc_passable(Point::new(nx, ny), state.radius);
    let (x, y) = if blocked { (p.x, p.y) } else { (nx, ny) };
    StepOutcome {
        state: RobotState {
            pose: Pose { x, y, heading },
            speed: if blocked { 0.0 } else { cmd.v.abs() },
            radius: state.radius,
            current_corridor: state.current_corridor.clone(),
        },
        collision: blocked,
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PidState {
    pub integral: f64,
    pub prev_error: Option<f64>,
}

/// Combined-error PID on cross-track and heading error.
///
/// `cross_track_error` is positive when the robot sits right of the line and
/// `heading_error` is `target - heading`, so a positive result turns left.
pub fn pid_heading(
    cross_track_error: f64,
    heading_error: f64,
    pid: &PidState,
    gains: &PidGains,
    omega_max: f64,
    dt: f64,
) -> (f64, PidState) {
    let e = cross_track_error + gains.lambda * heading_error;
    let integral = (pid.integral + e * dt).clamp(-gains.integral_limit, gains.integral_limit);
    let de = pid.prev_error.map_or(0.0, |prev| (e - prev) / dt);
    let omega = (gains.kp * e + gains.ki * integral + gains.kd * de).clamp(-omega_max, omega_max);
    (omega, PidState { integral, prev_error: Some(e) })
}

/// Corridor the robot is travelling along: one containing the pose whose axis
/// matches the heading, preferring the one reaching furthest ahead.
pub fn resolve_corridor(map: &WorldMap, pose: Pose) -> Option<&Corridor> {
    let dir = Cardinal::nearest(pose.heading);
    let p = pose.point();
    let u = dir.unit();
    map.corridors.iter().filter(|c| c.axis == dir.axis() && c.rect.contains(p)).max_by(|a, b| {
        let ahead = |c: &Corridor| {
            let far = if u.x + u.y > 0.0 { c.rect.max } else { c.rect.min };
            far.sub(p).dot(u)
        };
        ahead(a).total_cmp(&ahead(b)).then_with(|| b.id.cmp(&a.id))
    })
}

/// Signed offset right of the corridor centre line for travel along `dir`.
pub fn cross_track(corridor: &Corridor, dir: Cardinal, p: Point) -> f64 {
    let (a, _) = centerline_of(corridor);
    let u = dir.unit();
    let left = Vec2::new(-u.y, u.x);
    -p.sub(a).dot(left)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Flow {
    Continue,
    Stop,
}

#[derive(Debug)]
pub struct Frame<'a> {
    pub t: f64,
    pub state: &'a RobotState,
    /// Arc length travelled since the primitive began.
    pub odometer: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MoveEnd {
    Reached,
    Monitor,
    Stuck,
}

#[derive(Debug, Clone)]
pub struct MoveOutcome {
    pub state: RobotState,
    pub trajectory: Trajectory,
    pub end: MoveEnd,
    pub odometer: f64,
    pub t: f64,
}

/// Drives forward along the current corridor's centre line.
///
/// `monitor` sees every frame, including the starting one, and may push
/// events or stop the motion.
pub fn move_forward(
    map: &WorldMap,
    sim: &SimConfig,
    gains: &PidGains,
    state: &RobotState,
    distance: f64,
    t0: f64,
    monitor: &mut dyn FnMut(&Frame, &mut Vec<Event>) -> Flow,
) -> MoveOutcome {
    let dir = Cardinal::nearest(state.pose.heading);
    let target_heading = dir.heading();
    let mut state = state.clone();
    let mut traj = Trajectory::new();
    let mut pid = PidState::default();
    let mut t = t0;
    let mut odo = 0.0;
    let mut in_collision = false;
    // (time, odometer) history for stuck detection
    let mut history: VecDeque<(f64, f64)> = VecDeque::from([(t, 0.0)]);
    traj.push(t, state.pose);

    let check = |traj: &mut Trajectory,
                 state: &RobotState,
                 t: f64,
                 odo: f64,
                 monitor: &mut dyn FnMut(&Frame, &mut Vec<Event>) -> Flow| {
        let frame = Frame { t, state, odometer: odo };
        monitor(&frame, &mut traj.events)
    };

    if check(&mut traj, &state, t, odo, monitor) == Flow::Stop {
        return MoveOutcome { state, trajectory: traj, end: MoveEnd::Monitor, odometer: odo, t };
    }

    loop {
        let remaining = distance - odo;
        if remaining <= 1e-9 {
            state.speed = 0.0;
            return MoveOutcome { state, trajectory: traj, end: MoveEnd::Reached, odometer: odo, t };
        }
        let corridor = resolve_corridor(map, state.pose);
        state.current_corridor = corridor.map(|c| c.id.clone());
        let ct = corridor.map_or(0.0, |c| cross_track(c, dir, state.pose.point()));
        let he = normalize_angle(target_heading - state.pose.heading);
        let (omega, next_pid) = pid_heading(ct, he, &pid, gains, sim.omega_max, sim.dt);
        pid = next_pid;
        let v = sim.v_max.min(remaining / sim.dt);
        let out = step(map, &state, ControlCommand { v, omega }, sim.dt);
        let moved = out.state.pose.point().dist(state.pose.point());
        t += sim.dt;
        if out.collision && !in_collision {
            traj.event(t, EventKind::Collision);
        }
        in_collision = out.collision;
        state = out.state;
        odo += moved;
        traj.push(t, state.pose);

        history.push_back((t, odo));
        while history.len() > 1 && t - history[1].0 >= sim.stuck_window_s - 1e-9 {
            history.pop_front();
        }
        let (t_old, odo_old) = history[0];
        if t - t_old >= sim.stuck_window_s - 1e-9 && odo - odo_old < sim.stuck_min_progress_m {
            traj.event(t, EventKind::Stuck);
            state.speed = 0.0;
            return MoveOutcome { state, trajectory: traj, end: MoveEnd::Stuck, odometer: odo, t };
        }

        if check(&mut traj, &state, t, odo, monitor) == Flow::Stop {
            return MoveOutcome { state, trajectory: traj, end: MoveEnd::Monitor, odometer: odo, t };
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TurnDirection {
    Left,
    Right,
    Around,
}

impl TurnDirection {
    pub fn angle(self) -> f64 {
        match self {
            TurnDirection::Left => FRAC_PI_2,
            TurnDirection::Right => -FRAC_PI_2,
            TurnDirection::Around => PI,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            TurnDirection::Left => "left",
            TurnDirection::Right => "right",
            TurnDirection::Around => "around",
        }
    }
}

impl fmt::Display for TurnDirection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// In-place rotation at no more than `omega_max`, then a snap to the nearest cardinal.
pub fn turn(map: &WorldMap, sim: &SimConfig, state: &RobotState, direction: TurnDirection, t0: f64) -> MoveOutcome {
    turn_limited(map, sim, state, direction, t0, f64::INFINITY).0
}

/// Like [`turn`], but stops rotating once `deadline` is reached. The flag is
/// false when the turn was cut short; no heading snap happens in that case.
pub fn turn_limited(
    map: &WorldMap,
    sim: &SimConfig,
    state: &RobotState,
    direction: TurnDirection,
    t0: f64,
    deadline: f64,
) -> (MoveOutcome, bool) {
    let angle = direction.angle();
    let n = (angle.abs() / (sim.omega_max * sim.dt)).ceil().max(1.0) as usize;
    let omega = angle / (n as f64 * sim.dt);
    let mut state = state.clone();
    let mut traj = Trajectory::new();
    let mut t = t0;
    traj.push(t, state.pose);
    let start_heading = state.pose.heading;
    for _ in 0..n {
        if t >= deadline - 1e-9 {
            state.speed = 0.0;
            let out = MoveOutcome { state, trajectory: traj, end: MoveEnd::Monitor, odometer: 0.0, t };
            return (out, false);
        }
        state = step(map, &state, ControlCommand { v: 0.0, omega }, sim.dt).state;
        t += sim.dt;
        traj.push(t, state.pose);
    }
    state.pose.heading = Cardinal::nearest(start_heading + angle).heading();
    state.speed = 0.0;
    if let Some(last) = traj.samples.last_mut() {
        last.pose.heading = state.pose.heading;
    }
    state.current_corridor = resolve_corridor(map, state.pose).map(|c| c.id.clone());
    traj.event(t, EventKind::TurnDone);
    let out = MoveOutcome { state, trajectory: traj, end: MoveEnd::Reached, odometer: 0.0, t };
    (out, true)
}
