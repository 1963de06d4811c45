//! Episode scoring on the grid graph: SR, OSR, SPD and CLS.
//!
//! All distances are geodesics on the 4-connected grid, so walls count.
//! An unreachable goal yields an infinite SPD, which serializes as `null`
//! and is left out of means (counted separately).

use crate::geom::Point;
use crate::navgraph::{dijkstra, Graph, GridGraph};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsConfig {
    pub success_radius: f64,
    pub cls_sigma: f64,
    pub grid_cell: f64,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self { success_radius: 3.0, cls_sigma: 3.0, grid_cell: 0.5 }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("reference route needs at least two points, got {0}")]
    ShortReference(usize),
    #[error("trajectory is empty")]
    EmptyTrajectory,
    #[error("invalid metrics config: {0}")]
    Config(String),
}

impl MetricsConfig {
    pub fn check(&self) -> Result<(), MetricError> {
        if !(self.success_radius > 0.0) || !(self.cls_sigma > 0.0) || !(self.grid_cell > 0.0) {
            return Err(MetricError::Config("radius, sigma and cell must be positive".into()));
        }
        Ok(())
    }
}

pub(crate) fn ser_dist<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
    if v.is_finite() {
        s.serialize_f64(*v)
    } else {
        s.serialize_none()
    }
}

pub(crate) fn de_dist<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
    Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub sr: f64,
    pub osr: f64,
    #[serde(serialize_with = "ser_dist", deserialize_with = "de_dist")]
    pub spd: f64,
    pub cls: f64,
}

#[derive(Debug, Clone)]
pub struct Episode {
    pub trajectory: Vec<Point>,
    pub reference: Vec<Point>,
    pub goal: Point,
}

/// Geodesic distance between two points after snapping.
pub fn geodesic(grid: &GridGraph, a: Point, b: Point) -> f64 {
    let (sa, sb) = (grid.snap(a), grid.snap(b));
    grid.bfs_distances(&[sb])[sa]
}

pub fn spd(final_pos: Point, goal: Point, grid: &GridGraph) -> f64 {
    geodesic(grid, final_pos, goal)
}

/// Inclusive radius; unreachable counts as failure.
pub fn success(final_pos: Point, goal: Point, grid: &GridGraph, radius: f64) -> bool {
    spd(final_pos, goal, grid) <= radius
}

pub fn oracle_success(trajectory: &[Point], goal: Point, grid: &GridGraph, radius: f64) -> bool {
    let to_goal = grid.bfs_distances(&[grid.snap(goal)]);
    trajectory.iter().any(|p| to_goal[grid.snap(*p)] <= radius)
}

/// Snaps points to the grid and joins consecutive nodes with shortest paths.
/// Consecutive duplicates collapse; unreachable gaps are left as jumps.
pub fn densify(grid: &GridGraph, points: &[Point]) -> Vec<usize> {
    let mut out: Vec<usize> = Vec::new();
    for p in points {
        let n = grid.snap(*p);
        match out.last() {
            Some(&last) if last == n => {}
            Some(&last) if grid.neighbors(last).iter().any(|&(v, _)| v == n) => out.push(n),
            Some(&last) => match crate::navgraph::shortest_path(grid, last, n) {
                Ok((path, _)) => out.extend_from_slice(&path[1..]),
                Err(_) => out.push(n),
            },
            None => out.push(n),
        }
    }
    out
}

/// Summed edge weights along a node walk; non-adjacent steps count their
/// straight-line distance.
pub fn path_length(grid: &GridGraph, path: &[usize]) -> f64 {
    path.windows(2)
        .map(|w| {
            grid.neighbors(w[0])
                .iter()
                .find(|&&(v, _)| v == w[1])
                .map_or_else(|| grid.point(w[0]).dist(grid.point(w[1])), |&(_, wt)| wt)
        })
        .sum()
}

/// Coverage weighted by length score.
///
/// `PC = mean over r in R of exp(-d(r, P) / sigma)`, `EPL = PC * PL(R)`,
/// `LS = EPL / (EPL + |EPL - PL(P)|)`, result `PC * LS`.
pub fn cls(predicted: &[usize], reference: &[usize], grid: &GridGraph, sigma: f64) -> f64 {
    if predicted.is_empty() || reference.is_empty() {
        return 0.0;
    }
    let (to_pred, _) = dijkstra(grid, predicted);
    let pc = reference.iter().map(|&r| (-to_pred[r] / sigma).exp()).sum::<f64>() / reference.len() as f64;
    let epl = pc * path_length(grid, reference);
    let pl = path_length(grid, predicted);
    let denom = epl + (epl - pl).abs();
    let ls = if denom == 0.0 { 1.0 } else { epl / denom };
    (pc * ls).clamp(0.0, 1.0)
}

pub fn evaluate_episode(ep: &Episode, grid: &GridGraph, cfg: &MetricsConfig) -> Result<MetricsReport, MetricError> {
    cfg.check()?;
    if ep.reference.len() < 2 {
        return Err(MetricError::ShortReference(ep.reference.len()));
    }
    let Some(&final_pos) = ep.trajectory.last() else {
        return Err(MetricError::EmptyTrajectory);
    };
    let to_goal = grid.bfs_distances(&[grid.snap(ep.goal)]);
    let spd = to_goal[grid.snap(final_pos)];
    let sr = spd <= cfg.success_radius;
    let osr = sr || ep.trajectory.iter().any(|p| to_goal[grid.snap(*p)] <= cfg.success_radius);
    let pred = densify(grid, &ep.trajectory);
    let reference = densify(grid, &ep.reference);
    let cls = cls(&pred, &reference, grid, cfg.cls_sigma);
    Ok(MetricsReport { sr: if sr { 1.0 } else { 0.0 }, osr: if osr { 1.0 } else { 0.0 }, spd, cls })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AggregateMetrics {
    pub n: usize,
    pub sr: f64,
    pub osr: f64,
    /// Mean over reachable episodes only.
    #[serde(serialize_with = "ser_dist", deserialize_with = "de_dist")]
    pub spd: f64,
    pub spd_unreachable: usize,
    pub cls: f64,
}

pub fn aggregate(reports: &[MetricsReport]) -> AggregateMetrics {
    let n = reports.len();
    let mean = |f: &dyn Fn(&MetricsReport) -> f64| {
        if n == 0 {
            0.0
        } else {
            reports.iter().map(f).sum::<f64>() / n as f64
        }
    };
    let finite: Vec<f64> = reports.iter().map(|r| r.spd).filter(|d| d.is_finite()).collect();
    AggregateMetrics {
        n,
        sr: mean(&|r| r.sr),
        osr: mean(&|r| r.osr),
        spd: if finite.is_empty() { f64::INFINITY } else { finite.iter().sum::<f64>() / finite.len() as f64 },
        spd_unreachable: n - finite.len(),
        cls: mean(&|r| r.cls),
    }
}
