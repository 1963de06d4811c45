//! Simulated sensing: annotated turning-point zones and range/FOV/occlusion
//! filtered object detection with cross-frame tracking.

use crate::geom::{normalize_angle, Cardinal, Point};
use crate::world::{PlacedObject, Pose, WorldMap};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct PerceptionConfig {
    pub depth_threshold_m: f64,
    pub fov_deg: f64,
    /// Probability that a visible object is missed in a given frame.
    pub miss_prob: f64,
}

impl Default for PerceptionConfig {
    fn default() -> Self {
        Self { depth_threshold_m: 4.0, fov_deg: 90.0, miss_prob: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TurningPointObservation {
    pub zone_id: String,
    pub navigable: BTreeSet<Cardinal>,
}

/// Zone containing the pose; overlapping zones resolve to the smallest id.
pub fn detect_turning_point(map: &WorldMap, pose: Pose) -> Option<TurningPointObservation> {
    let p = pose.point();
    map.zones
        .iter()
        .filter(|z| z.rect.contains(p))
        .min_by(|a, b| a.id.cmp(&b.id))
        .map(|z| TurningPointObservation { zone_id: z.id.clone(), navigable: z.navigable.clone() })
}

/// Case-folded, whitespace-collapsed, naively singularized form.
pub fn normalize_label(s: &str) -> String {
    s.split_whitespace().map(|w| singularize(&w.to_lowercase())).collect::<Vec<_>>().join(" ")
}

fn singularize(w: &str) -> String {
    if w.len() > 3 && w.ends_with("ies") {
        format!("{}y", &w[..w.len() - 3])
    } else if w.len() > 4 && (w.ends_with("ches") || w.ends_with("shes") || w.ends_with("sses") || w.ends_with("xes")) {
        w[..w.len() - 2].to_string()
    } else if w.len() > 2 && w.ends_with('s') && !w.ends_with("ss") && !w.ends_with("us") {
        w[..w.len() - 1].to_string()
    } else {
        w.to_string()
    }
}

pub fn match_label(query: &str, object: &PlacedObject) -> bool {
    let q = normalize_label(query);
    if q.is_empty() {
        return false;
    }
    std::iter::once(&object.label).chain(object.synonyms.iter()).any(|l| normalize_label(l) == q)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub object_id: String,
    pub label: String,
    pub distance: f64,
    /// Radians relative to heading, positive to the left.
    pub bearing: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ObjectTracker {
    pub counted_ids: BTreeSet<String>,
    pub counts: BTreeMap<String, usize>,
}

impl ObjectTracker {
    pub fn new() -> Self {
        Self::default()
    }

    fn record(&mut self, object: &PlacedObject) {
        if self.counted_ids.insert(object.id.clone()) {
            *self.counts.entry(object.label.clone()).or_default() += 1;
        }
    }

    pub fn count(&self, label: &str) -> usize {
        self.counts.get(label).copied().unwrap_or(0)
    }
}

/// Geometric visibility of an object from a pose: returns (distance, bearing)
/// when the object is in range, inside the field of view and not behind a wall.
pub fn visible(map: &WorldMap, pose: Pose, object: &PlacedObject, depth: f64, fov_rad: f64) -> Option<(f64, f64)> {
    let origin = pose.point();
    // wall-mounted objects are sighted at their nearest passable point
    let target: Point = map.nearest_passable(object.position);
    let offset = object.position.sub(origin);
    let distance = offset.norm();
    if distance > depth {
        return None;
    }
    let bearing = if distance == 0.0 { 0.0 } else { normalize_angle(offset.angle() - pose.heading) };
    if bearing.abs() > fov_rad / 2.0 + 1e-12 {
        return None;
    }
    if !map.segment_passable(origin, target) {
        return None;
    }
    Some((distance, bearing))
}

pub fn detect_objects<R: Rng + ?Sized>(
    map: &WorldMap,
    pose: Pose,
    query: &str,
    tracker: &mut ObjectTracker,
    cfg: &PerceptionConfig,
    rng: &mut R,
) -> Vec<Detection> {
    let fov = cfg.fov_deg.to_radians();
    let mut out = Vec::new();
    for object in &map.objects {
        if tracker.counted_ids.contains(&object.id) || !match_label(query, object) {
            continue;
        }
        let Some((distance, bearing)) = visible(map, pose, object, cfg.depth_threshold_m, fov) else {
            continue;
        };
        if cfg.miss_prob > 0.0 && rng.gen::<f64>() < cfg.miss_prob {
            continue;
        }
        tracker.record(object);
        out.push(Detection { object_id: object.id.clone(), label: object.label.clone(), distance, bearing });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::load_map;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn corridor_with(objects: &str, zones: &str) -> WorldMap {
        load_map(&format!(
            r#"{{"corridors":[{{"id":"c","min":[0,0],"max":[30,2],"axis":"x"}},
                             {{"id":"v","min":[20,0],"max":[22,10],"axis":"y"}}],
                "zones":[{zones}],
                "objects":[{objects}],
                "start":{{"pos":[1,1],"heading_deg":0}},"goal":{{"pos":[29,1]}}}}"#
        ))
        .unwrap()
    }

    fn door(id: &str, x: f64, y: f64) -> String {
        format!(r#"{{"id":"{id}","label":"door","synonyms":["doorway"],"pos":[{x},{y}]}}"#)
    }

    #[test]
    fn turning_point_lookup_and_tie_rule() {
        let m = corridor_with(
            "",
            r#"{"id":"z2","min":[20,0],"max":[22,2],"navigable":["N","E"]},
               {"id":"z10","min":[19,0],"max":[22,2],"navigable":["W"]}"#,
        );
        let obs = detect_turning_point(&m, Pose::new(19.5, 1.0, 0.0)).unwrap();
        assert_eq!(obs.zone_id, "z10");
        let both = detect_turning_point(&m, Pose::new(21.0, 1.0, 0.0)).unwrap();
        assert_eq!(both.zone_id, "z10", "\"z10\" < \"z2\" lexicographically");
        assert!(detect_turning_point(&m, Pose::new(5.0, 1.0, 0.0)).is_none());
    }

    #[test]
    fn zone_navigable_set_is_returned() {
        let m = corridor_with("", r#"{"id":"z1","min":[20,0],"max":[22,2],"navigable":["N","E"]}"#);
        let obs = detect_turning_point(&m, Pose::new(21.0, 1.0, 0.0)).unwrap();
        assert_eq!(obs.navigable, BTreeSet::from([Cardinal::N, Cardinal::E]));
    }

    #[test]
    fn label_matching() {
        let obj = PlacedObject {
            id: "o".into(),
            label: "door".into(),
            synonyms: vec![],
            position: Point::new(0.0, 0.0),
            facing: None,
        };
        assert!(match_label("Doors", &obj));
        assert!(match_label("  DOOR ", &obj));
        let bin = PlacedObject {
            label: "bin".into(),
            synonyms: vec!["garbage bin".into(), "trash can".into()],
            ..obj.clone()
        };
        assert!(match_label("trash can", &bin));
        assert!(match_label("Trash   Cans", &bin));
        let chair = PlacedObject { label: "chair".into(), ..obj };
        assert!(!match_label("statue", &chair));
        assert!(!match_label("", &chair));
    }

    #[test]
    fn range_fov_and_tracking() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let cfg = PerceptionConfig::default();
        let far = corridor_with(&door("d", 6.0, 1.0), "");
        let mut tr = ObjectTracker::new();
        assert!(detect_objects(&far, Pose::new(1.0, 1.0, 0.0), "door", &mut tr, &cfg, &mut rng).is_empty());

        let near = corridor_with(&door("d", 4.0, 1.0), "");
        let mut tr = ObjectTracker::new();
        let hits = detect_objects(&near, Pose::new(1.0, 1.0, 0.0), "door", &mut tr, &cfg, &mut rng);
        assert_eq!(hits.len(), 1);
        assert!((hits[0].distance - 3.0).abs() < 1e-12);
        assert!(detect_objects(&near, Pose::new(1.05, 1.0, 0.0), "door", &mut tr, &cfg, &mut rng).is_empty());
        assert_eq!(tr.count("door"), 1);

        let behind = corridor_with(&door("d", 1.0, 1.0), "");
        let mut tr = ObjectTracker::new();
        assert!(detect_objects(&behind, Pose::new(3.0, 1.0, 0.0), "door", &mut tr, &cfg, &mut rng).is_empty());
    }

    #[test]
    fn walls_occlude() {
        // object in the side branch, seen from the main corridor through the wall
        let m = corridor_with(&door("d", 21.0, 4.0), "");
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut tr = ObjectTracker::new();
        let pose = Pose::new(18.5, 1.0, 0.9);
        assert!(detect_objects(&m, pose, "door", &mut tr, &PerceptionConfig::default(), &mut rng).is_empty());
    }

    #[test]
    fn miss_probability_one_never_detects() {
        let m = corridor_with(&door("d", 3.0, 1.0), "");
        let cfg = PerceptionConfig { miss_prob: 1.0, ..PerceptionConfig::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut tr = ObjectTracker::new();
        assert!(detect_objects(&m, Pose::new(1.0, 1.0, 0.0), "door", &mut tr, &cfg, &mut rng).is_empty());
    }
}
