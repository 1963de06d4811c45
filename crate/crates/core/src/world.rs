//! Corridor world: loading, validation and geometric queries.
//!
//! Passable space is the closed union of axis-aligned corridor rectangles.
//! Walls are implicit at the union boundary.

use crate::geom::{normalize_angle, Axis, Cardinal, Point, Rect, Vec2};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeSet, HashSet};
use thiserror::Error;

pub const MIN_CORRIDOR_WIDTH: f64 = 1.0;
/// Wall-mounted objects may sit this far outside the passable union.
pub const OBJECT_WALL_TOLERANCE: f64 = 0.5;

const MERGE_EPS: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum MapError {
    #[error("schema error: {0}")]
    Schema(String),
    #[error("validation error at {element}: {reason}")]
    Validation { element: String, reason: String },
}

impl MapError {
    fn invalid(element: impl Into<String>, reason: impl Into<String>) -> Self {
        MapError::Validation { element: element.into(), reason: reason.into() }
    }

    /// Id of the offending map element, for validation failures.
    pub fn element(&self) -> Option<&str> {
        match self {
            MapError::Validation { element, .. } => Some(element),
            MapError::Schema(_) => None,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum WorldError {
    #[error("unknown corridor {0:?}")]
    UnknownCorridor(String),
    #[error("ray origin ({0:.3}, {1:.3}) is not passable")]
    InvalidOrigin(f64, f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    /// Radians in `[-pi, pi)`.
    pub heading: f64,
}

impl Pose {
    pub fn new(x: f64, y: f64, heading: f64) -> Self {
        Self { x, y, heading: normalize_angle(heading) }
    }

    pub fn point(&self) -> Point {
        Point::new(self.x, self.y)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corridor {
    pub id: String,
    pub rect: Rect,
    pub axis: Axis,
}

impl Corridor {
    /// Extent perpendicular to the travel axis.
    pub fn width(&self) -> f64 {
        match self.axis {
            Axis::X => self.rect.height(),
            Axis::Y => self.rect.width(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TurningPointZone {
    pub id: String,
    pub rect: Rect,
    pub navigable: BTreeSet<Cardinal>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlacedObject {
    pub id: String,
    pub label: String,
    pub synonyms: Vec<String>,
    pub position: Point,
    pub facing: Option<Cardinal>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorldMap {
    pub name: Option<String>,
    pub corridors: Vec<Corridor>,
    pub zones: Vec<TurningPointZone>,
    pub objects: Vec<PlacedObject>,
    pub start: Pose,
    pub goal: Point,
    pub goal_label: String,
    /// Ground-truth route waypoints, start to goal. Empty when the map does not carry one.
    pub reference: Vec<Point>,
}

// --- on-disk schema -------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MapDoc {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    name: Option<String>,
    corridors: Vec<CorridorDoc>,
    #[serde(default)]
    zones: Vec<ZoneDoc>,
    #[serde(default)]
    objects: Vec<ObjectDoc>,
    start: StartDoc,
    goal: GoalDoc,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    reference: Vec<[f64; 2]>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CorridorDoc {
    id: String,
    min: [f64; 2],
    max: [f64; 2],
    axis: Axis,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ZoneDoc {
    id: String,
    min: [f64; 2],
    max: [f64; 2],
    navigable: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ObjectDoc {
    id: String,
    label: String,
    #[serde(default)]
    synonyms: Vec<String>,
    pos: [f64; 2],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    facing: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StartDoc {
    pos: [f64; 2],
    heading_deg: f64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GoalDoc {
    pos: [f64; 2],
    #[serde(default)]
    label: String,
}

fn pt(a: [f64; 2]) -> Point {
    Point::new(a[0], a[1])
}

fn rect_of(id: &str, min: [f64; 2], max: [f64; 2]) -> Result<Rect, MapError> {
    if min.iter().chain(max.iter()).any(|v| !v.is_finite()) {
        return Err(MapError::invalid(id, "non-finite coordinate"));
    }
    if max[0] <= min[0] || max[1] <= min[1] {
        return Err(MapError::invalid(id, "rectangle must have max > min on both axes"));
    }
    Ok(Rect::new(pt(min), pt(max)))
}

/// Parses and validates a map document.
pub fn load_map(text: &str) -> Result<WorldMap, MapError> {
    let doc: MapDoc = serde_json::from_str(text).map_err(|e| MapError::Schema(e.to_string()))?;
    let mut ids = HashSet::new();

    let mut corridors = Vec::with_capacity(doc.corridors.len());
    for c in doc.corridors {
        if !ids.insert(c.id.clone()) {
            return Err(MapError::invalid(&c.id, "duplicate id"));
        }
        let rect = rect_of(&c.id, c.min, c.max)?;
        let corridor = Corridor { id: c.id, rect, axis: c.axis };
        if corridor.width() < MIN_CORRIDOR_WIDTH {
            return Err(MapError::invalid(
                &corridor.id,
                format!("width {:.3} m below {MIN_CORRIDOR_WIDTH} m", corridor.width()),
            ));
        }
        corridors.push(corridor);
    }
    if corridors.is_empty() {
        return Err(MapError::invalid("corridors", "map has no corridors"));
    }

    let mut zones = Vec::with_capacity(doc.zones.len());
    for z in doc.zones {
        if !ids.insert(z.id.clone()) {
            return Err(MapError::invalid(&z.id, "duplicate id"));
        }
        let rect = rect_of(&z.id, z.min, z.max)?;
        let navigable = z
            .navigable
            .iter()
            .map(|s| s.parse::<Cardinal>())
            .collect::<Result<BTreeSet<_>, _>>()
            .map_err(|e| MapError::invalid(&z.id, e))?;
        if navigable.is_empty() {
            return Err(MapError::invalid(&z.id, "navigable set is empty"));
        }
        zones.push(TurningPointZone { id: z.id, rect, navigable });
    }

    let mut objects = Vec::with_capacity(doc.objects.len());
    for o in doc.objects {
        if !ids.insert(o.id.clone()) {
            return Err(MapError::invalid(&o.id, "duplicate id"));
        }
        if o.label.trim().is_empty() {
            return Err(MapError::invalid(&o.id, "empty label"));
        }
        let facing =
            o.facing.as_deref().map(str::parse::<Cardinal>).transpose().map_err(|e| MapError::invalid(&o.id, e))?;
        objects.push(PlacedObject { id: o.id, label: o.label, synonyms: o.synonyms, position: pt(o.pos), facing });
    }

    let map = WorldMap {
        name: doc.name,
        corridors,
        zones,
        objects,
        start: Pose::new(doc.start.pos[0], doc.start.pos[1], doc.start.heading_deg.to_radians()),
        goal: pt(doc.goal.pos),
        goal_label: doc.goal.label,
        reference: doc.reference.into_iter().map(pt).collect(),
    };
    map.validate()?;
    Ok(map)
}

impl WorldMap {
    fn validate(&self) -> Result<(), MapError> {
        if !self.is_passable(self.start.point()) {
            return Err(MapError::invalid("start", "start lies outside the corridors"));
        }
        if !self.is_passable(self.goal) {
            return Err(MapError::invalid("goal", "goal lies outside the corridors"));
        }
        for z in &self.zones {
            let hits: Vec<&Corridor> = self.corridors.iter().filter(|c| c.rect.intersects(&z.rect)).collect();
            let touches_end = hits.iter().any(|c| {
                let (lo, hi) = match c.axis {
                    Axis::X => (c.rect.min.x, c.rect.max.x),
                    Axis::Y => (c.rect.min.y, c.rect.max.y),
                };
                let (zlo, zhi) = match c.axis {
                    Axis::X => (z.rect.min.x, z.rect.max.x),
                    Axis::Y => (z.rect.min.y, z.rect.max.y),
                };
                (zlo <= lo && lo <= zhi) || (zlo <= hi && hi <= zhi)
            });
            if hits.len() < 2 && !touches_end {
                return Err(MapError::invalid(&z.id, "zone must intersect two corridors or a corridor end"));
            }
        }
        for o in &self.objects {
            if self.distance_to_passable(o.position) > OBJECT_WALL_TOLERANCE {
                return Err(MapError::invalid(&o.id, "object is too far from the corridors"));
            }
        }
        for (i, p) in self.reference.iter().enumerate() {
            if !self.is_passable(*p) {
                return Err(MapError::invalid(format!("reference[{i}]"), "waypoint not passable"));
            }
        }
        if self.reference.len() == 1 {
            return Err(MapError::invalid("reference", "needs at least two waypoints"));
        }
        Ok(())
    }

    /// Serializes back to the map schema.
    pub fn to_json(&self) -> String {
        let doc = MapDoc {
            name: self.name.clone(),
            corridors: self
                .corridors
                .iter()
                .map(|c| CorridorDoc {
                    id: c.id.clone(),
                    min: [c.rect.min.x, c.rect.min.y],
                    max: [c.rect.max.x, c.rect.max.y],
                    axis: c.axis,
                })
                .collect(),
            zones: self
                .zones
                .iter()
                .map(|z| ZoneDoc {
                    id: z.id.clone(),
                    min: [z.rect.min.x, z.rect.min.y],
                    max: [z.rect.max.x, z.rect.max.y],
                    navigable: z.navigable.iter().map(|c| c.to_string()).collect(),
                })
                .collect(),
            objects: self
                .objects
                .iter()
                .map(|o| ObjectDoc {
                    id: o.id.clone(),
                    label: o.label.clone(),
                    synonyms: o.synonyms.clone(),
                    pos: [o.position.x, o.position.y],
                    facing: o.facing.map(|f| f.to_string()),
                })
                .collect(),
            start: StartDoc { pos: [self.start.x, self.start.y], heading_deg: self.start.heading.to_degrees() },
            goal: GoalDoc { pos: [self.goal.x, self.goal.y], label: self.goal_label.clone() },
            reference: self.reference.iter().map(|p| [p.x, p.y]).collect(),
        };
        serde_json::to_string_pretty(&doc).expect("map document serializes")
    }

    /// Boundary points count as passable.
    pub fn is_passable(&self, p: Point) -> bool {
        self.corridors.iter().any(|c| c.rect.contains(p))
    }

    pub fn bounds(&self) -> Rect {
        self.corridors.iter().map(|c| c.rect).reduce(|a, b| a.union_bounds(&b)).expect("validated maps have corridors")
    }

    pub fn corridor(&self, id: &str) -> Result<&Corridor, WorldError> {
        self.corridors.iter().find(|c| c.id == id).ok_or_else(|| WorldError::UnknownCorridor(id.to_string()))
    }

    pub fn nearest_passable(&self, p: Point) -> Point {
        self.corridors
            .iter()
            .map(|c| c.rect.clamp(p))
            .min_by(|a, b| a.dist(p).total_cmp(&b.dist(p)))
            .expect("validated maps have corridors")
    }

    pub fn distance_to_passable(&self, p: Point) -> f64 {
        self.nearest_passable(p).dist(p)
    }

    /// Distance along `direction` to the first exit from passable space, or
    /// `None` when the ray is still inside at `max_range`.
    pub fn raycast(&self, origin: Point, direction: Vec2, max_range: f64) -> Result<Option<f64>, WorldError> {
        if !self.is_passable(origin) {
            return Err(WorldError::InvalidOrigin(origin.x, origin.y));
        }
        let Some(dir) = direction.normalized() else {
            return Ok(None);
        };
        let mut intervals: Vec<(f64, f64)> = self
            .corridors
            .iter()
            .filter_map(|c| c.rect.ray_interval(origin, dir))
            .filter(|&(_, t1)| t1 >= 0.0)
            .collect();
        intervals.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut reach = 0.0_f64;
        for (t0, t1) in intervals {
            if t0 > reach + MERGE_EPS {
                break;
            }
            reach = reach.max(t1);
        }
        Ok((reach < max_range).then_some(reach))
    }

    /// True when the whole closed segment lies in passable space.
    pub fn segment_passable(&self, a: Point, b: Point) -> bool {
        if !self.is_passable(a) {
            return false;
        }
        let len = a.dist(b);
        if len == 0.0 {
            return true;
        }
        match self.raycast(a, b.sub(a), len) {
            Ok(None) => true,
            // exit exactly at the far endpoint still counts
            Ok(Some(d)) => d >= len - MERGE_EPS,
            Err(_) => false,
        }
    }

    /// True when the closed disc lies entirely inside passable space.
    ///
    /// Exact: the union's cross-section is constant between consecutive
    /// rectangle x-edges, so each slab is checked at its widest disc chord.
    pub fn disc_passable(&self, center: Point, radius: f64) -> bool {
        if !self.is_passable(center) {
            return false;
        }
        if radius <= 0.0 {
            return true;
        }
        let (xl, xr) = (center.x - radius, center.x + radius);
        let mut xs: Vec<f64> = vec![xl, xr];
        for c in &self.corridors {
            for x in [c.rect.min.x, c.rect.max.x] {
                if x > xl && x < xr {
                    xs.push(x);
                }
            }
        }
        xs.sort_by(f64::total_cmp);
        xs.dedup();
        for w in xs.windows(2) {
            let (x0, x1) = (w[0], w[1]);
            let xc = center.x.clamp(x0, x1);
            let h = (radius * radius - (xc - center.x).powi(2)).max(0.0).sqrt();
            let (need_lo, need_hi) = (center.y - h, center.y + h);
            let mut spans: Vec<(f64, f64)> = self
                .corridors
                .iter()
                .filter(|c| c.rect.min.x <= x0 && c.rect.max.x >= x1)
                .map(|c| (c.rect.min.y, c.rect.max.y))
                .collect();
            spans.sort_by(|a, b| a.0.total_cmp(&b.0));
            let mut covered = false;
            let mut cur: Option<(f64, f64)> = None;
            for (lo, hi) in spans {
                cur = match cur {
                    Some((a, b)) if lo <= b + MERGE_EPS => Some((a, b.max(hi))),
                    Some((a, b)) => {
                        if a <= need_lo && b >= need_hi {
                            covered = true;
                        }
                        Some((lo, hi))
                    }
                    None => Some((lo, hi)),
                };
            }
            if let Some((a, b)) = cur {
                if a <= need_lo && b >= need_hi {
                    covered = true;
                }
            }
            if !covered {
                return false;
            }
        }
        true
    }

    /// Midline of a corridor along its travel axis.
    pub fn centerline(&self, corridor_id: &str) -> Result<(Point, Point), WorldError> {
        Ok(centerline_of(self.corridor(corridor_id)?))
    }

    /// Reflex corners of the corridor union (inner corners of bends and junctions).
    pub fn interior_corners(&self) -> Vec<Point> {
        let mut xs: Vec<f64> = self.corridors.iter().flat_map(|c| [c.rect.min.x, c.rect.max.x]).collect();
        let mut ys: Vec<f64> = self.corridors.iter().flat_map(|c| [c.rect.min.y, c.rect.max.y]).collect();
        xs.sort_by(f64::total_cmp);
        xs.dedup();
        ys.sort_by(f64::total_cmp);
        ys.dedup();
        const E: f64 = 1e-6;
        let mut out = Vec::new();
        for &x in &xs {
            for &y in &ys {
                let p = Point::new(x, y);
                if !self.is_passable(p) {
                    continue;
                }
                let quadrants = [(E, E), (-E, E), (-E, -E), (E, -E)]
                    .iter()
                    .filter(|(dx, dy)| self.is_passable(Point::new(x + dx, y + dy)))
                    .count();
                if quadrants == 3 {
                    out.push(p);
                }
            }
        }
        out
    }

    pub fn object(&self, id: &str) -> Option<&PlacedObject> {
        self.objects.iter().find(|o| o.id == id)
    }
}

pub fn centerline_of(c: &Corridor) -> (Point, Point) {
    let r = &c.rect;
    match c.axis {
        Axis::X => {
            let y = (r.min.y + r.max.y) / 2.0;
            (Point::new(r.min.x, y), Point::new(r.max.x, y))
        }
        Axis::Y => {
            let x = (r.min.x + r.max.x) / 2.0;
            (Point::new(x, r.min.y), Point::new(x, r.max.y))
        }
    }
}
