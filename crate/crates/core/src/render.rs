//! Standalone SVG of a map with a reference route and trajectories overlaid.

use crate::geom::Point;
use crate::world::WorldMap;
use std::fmt::Write;

/// SVG units per metre.
pub const SCALE: f64 = 10.0;
pub const DECIMATION_M: f64 = 0.2;
const MARGIN_M: f64 = 1.0;
const COLORS: [&str; 6] = ["#d62728", "#1f77b4", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

/// Keeps the first point, every point at least `step` from the last kept
/// one, and the final point.
pub fn decimate(points: &[Point], step: f64) -> Vec<Point> {
    let mut out: Vec<Point> = Vec::new();
    for (i, p) in points.iter().enumerate() {
        match out.last() {
            None => out.push(*p),
            Some(last) if last.dist(*p) >= step => out.push(*p),
            Some(last) if i + 1 == points.len() && last != p => out.push(*p),
            _ => {}
        }
    }
    out
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

pub fn render_trajectory_svg(map: &WorldMap, trajectories: &[Vec<Point>], reference: &[Point]) -> String {
    let b = map.bounds();
    let (x0, y1) = (b.min.x - MARGIN_M, b.max.y + MARGIN_M);
    let w = (b.width() + 2.0 * MARGIN_M) * SCALE;
    let h = (b.height() + 2.0 * MARGIN_M) * SCALE;
    let tx = |p: Point| ((p.x - x0) * SCALE, (y1 - p.y) * SCALE);
    let poly = |pts: &[Point]| {
        pts.iter()
            .map(|p| {
                let (x, y) = tx(*p);
                format!("{x:.1},{y:.1}")
            })
            .collect::<Vec<_>>()
            .join(" ")
    };

    let mut s = String::new();
    let _ = writeln!(s, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w:.1}" height="{h:.1}" viewBox="0 0 {w:.1} {h:.1}">"#
    );
    if let Some(name) = &map.name {
        let _ = writeln!(s, "  <title>{}</title>", escape(name));
    }
    let _ = writeln!(s, r##"  <rect x="0" y="0" width="{w:.1}" height="{h:.1}" fill="#ffffff"/>"##);
    let _ = writeln!(s, r##"  <g id="corridors" fill="#f4f4f4" stroke="#333333" stroke-width="1">"##);
    for c in &map.corridors {
        let (x, y) = tx(Point::new(c.rect.min.x, c.rect.max.y));
        let _ = writeln!(
            s,
            r#"    <rect id="{}" x="{x:.1}" y="{y:.1}" width="{:.1}" height="{:.1}"/>"#,
            escape(&c.id),
            c.rect.width() * SCALE,
            c.rect.height() * SCALE
        );
    }
    let _ = writeln!(s, "  </g>");
    let _ = writeln!(s, r##"  <g id="zones" fill="#ffd700" fill-opacity="0.3" stroke="none">"##);
    for z in &map.zones {
        let (x, y) = tx(Point::new(z.rect.min.x, z.rect.max.y));
        let _ = writeln!(
            s,
            r#"    <rect id="{}" x="{x:.1}" y="{y:.1}" width="{:.1}" height="{:.1}"/>"#,
            escape(&z.id),
            z.rect.width() * SCALE,
            z.rect.height() * SCALE
        );
    }
    let _ = writeln!(s, "  </g>");
    let _ = writeln!(s, r#"  <g id="objects" font-family="sans-serif" font-size="8">"#);
    for o in &map.objects {
        let (x, y) = tx(o.position);
        let _ = writeln!(s, r##"    <circle cx="{x:.1}" cy="{y:.1}" r="3" fill="#555555"/>"##);
        let _ = writeln!(s, r#"    <text x="{:.1}" y="{:.1}">{}</text>"#, x + 4.0, y - 4.0, escape(&o.label));
    }
    let _ = writeln!(s, "  </g>");
    if reference.len() >= 2 {
        let _ = writeln!(
            s,
            r##"  <polyline id="reference" points="{}" fill="none" stroke="#000000" stroke-width="2" stroke-dasharray="6 4"/>"##,
            poly(reference)
        );
    }
    for (i, t) in trajectories.iter().enumerate() {
        let pts = decimate(t, DECIMATION_M);
        let _ = writeln!(
            s,
            r#"  <polyline id="trajectory-{i}" points="{}" fill="none" stroke="{}" stroke-width="1.5"/>"#,
            poly(&pts),
            COLORS[i % COLORS.len()]
        );
    }
    let (sx, sy) = tx(map.start.point());
    let (gx, gy) = tx(map.goal);
    let _ = writeln!(s, r##"  <circle id="start" cx="{sx:.1}" cy="{sy:.1}" r="4" fill="#2ca02c"/>"##);
    let _ = writeln!(s, r##"  <circle id="goal" cx="{gx:.1}" cy="{gy:.1}" r="4" fill="#d62728"/>"##);
    s.push_str("</svg>\n");
    s
}
