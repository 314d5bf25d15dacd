//! Top-down SVG rendering of a trajectory over its scene.
//!
//! Each sub-task's poses form one `<polyline data-subtask="k">` holding
//! exactly one point per executed step, coloured from light to dark in
//! sub-task order.

use std::fmt::Write as _;

use thiserror::Error;

use crate::geometry::WorldPoint;
use crate::nav::Trajectory;
use crate::scene::Scene;

/// Pixels per meter.
const SCALE: f64 = 40.0;
const MARGIN: f64 = 10.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlotError {
    #[error("trace is for scene {trace:?} but scene {scene:?} was given")]
    SceneMismatch { trace: String, scene: String },
}

/// Light-to-dark blue ramp; `i` of `n` sub-tasks.
pub fn subtask_color(i: usize, n: usize) -> String {
    let t = if n <= 1 { 1.0 } else { i as f64 / (n - 1) as f64 };
    let lightness = 75.0 - 50.0 * t;
    format!("hsl(215,80%,{lightness:.1}%)")
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

struct Canvas {
    x0: f64,
    y1: f64,
}

impl Canvas {
    fn x(&self, x: f64) -> f64 {
        MARGIN + (x - self.x0) * SCALE
    }

    fn y(&self, y: f64) -> f64 {
        MARGIN + (self.y1 - y) * SCALE
    }

    fn point(&self, p: WorldPoint) -> String {
        format!("{:.2},{:.2}", self.x(p.x), self.y(p.y))
    }
}

pub fn render_svg(scene: &Scene, scene_id: &str, traj: &Trajectory) -> Result<String, PlotError> {
    if scene_id != scene.id() {
        return Err(PlotError::SceneMismatch {
            trace: scene_id.to_string(),
            scene: scene.id().to_string(),
        });
    }
    let grid = scene.grid();
    let res = grid.resolution();
    let origin = grid.origin();
    let width = grid.width() as f64 * res;
    let height = grid.height() as f64 * res;
    let canvas = Canvas {
        x0: origin.x,
        y1: origin.y + height,
    };
    let mut svg = String::new();
    let (w, h) = (width * SCALE + 2.0 * MARGIN, height * SCALE + 2.0 * MARGIN);
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w:.0}" height="{h:.0}" viewBox="0 0 {w:.0} {h:.0}">"#
    );
    let _ = writeln!(svg, r#"<title>{}</title>"#, escape(&traj.id));
    let _ = writeln!(svg, r##"<rect x="0" y="0" width="{w:.0}" height="{h:.0}" fill="#ffffff"/>"##);

    // Blocked cells, merged into horizontal runs.
    let _ = writeln!(svg, r##"<g class="obstacles" fill="#4a4a4a">"##);
    for row in 0..grid.height() {
        let mut col = 0;
        while col < grid.width() {
            if grid.is_free(crate::geometry::GridPoint::new(col, row)) {
                col += 1;
                continue;
            }
            let start = col;
            while col < grid.width() && !grid.is_free(crate::geometry::GridPoint::new(col, row)) {
                col += 1;
            }
            let x = canvas.x(origin.x + start as f64 * res);
            let y = canvas.y(origin.y + (row + 1) as f64 * res);
            let _ = writeln!(
                svg,
                r#"<rect x="{x:.2}" y="{y:.2}" width="{:.2}" height="{:.2}"/>"#,
                (col - start) as f64 * res * SCALE,
                res * SCALE
            );
        }
    }
    let _ = writeln!(svg, "</g>");

    let _ = writeln!(svg, r#"<g class="regions">"#);
    for region in scene.regions() {
        let b = region.bbox;
        let _ = writeln!(
            svg,
            r##"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="none" stroke="#d08c2c" stroke-dasharray="6 3"/>"##,
            canvas.x(b.xmin),
            canvas.y(b.ymax),
            (b.xmax - b.xmin) * SCALE,
            (b.ymax - b.ymin) * SCALE
        );
        let _ = writeln!(
            svg,
            r##"<text x="{:.2}" y="{:.2}" font-size="12" fill="#a0601a">{}</text>"##,
            canvas.x(b.xmin) + 4.0,
            canvas.y(b.ymax) + 14.0,
            escape(&region.label)
        );
        for e in &region.entrances {
            let _ = writeln!(
                svg,
                r##"<circle class="entrance" cx="{:.2}" cy="{:.2}" r="4" fill="#2ca02c"/>"##,
                canvas.x(e.midpoint.x),
                canvas.y(e.midpoint.y)
            );
        }
    }
    let _ = writeln!(svg, "</g>");

    let _ = writeln!(svg, r#"<g class="objects">"#);
    for o in scene.objects() {
        let _ = writeln!(
            svg,
            r##"<rect x="{:.2}" y="{:.2}" width="6" height="6" fill="#9467bd"><title>{}</title></rect>"##,
            canvas.x(o.position.x) - 3.0,
            canvas.y(o.position.y) - 3.0,
            escape(&o.label)
        );
    }
    let _ = writeln!(svg, "</g>");

    let n = traj.subtasks.len().max(traj.subtask_spans().last().map_or(0, |(k, _)| k + 1));
    let _ = writeln!(svg, r#"<g class="path" fill="none" stroke-width="3" stroke-linejoin="round">"#);
    for (k, range) in traj.subtask_spans() {
        let points: Vec<String> = traj.steps[range].iter().map(|s| canvas.point(s.pose_after.position)).collect();
        let _ = writeln!(
            svg,
            r#"<polyline data-subtask="{k}" stroke="{}" points="{}"/>"#,
            subtask_color(k, n),
            points.join(" ")
        );
    }
    let _ = writeln!(svg, "</g>");

    let start = traj.start.position;
    let _ = writeln!(
        svg,
        r##"<circle class="start" cx="{:.2}" cy="{:.2}" r="6" fill="#1f77b4" stroke="#000000"/>"##,
        canvas.x(start.x),
        canvas.y(start.y)
    );
    if !traj.steps.is_empty() {
        let end = traj.final_pose().position;
        let _ = writeln!(
            svg,
            r##"<rect class="stop" x="{:.2}" y="{:.2}" width="10" height="10" fill="#d62728" stroke="#000000"/>"##,
            canvas.x(end.x) - 5.0,
            canvas.y(end.y) - 5.0
        );
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}
