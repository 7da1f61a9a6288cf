//! Top-view SVG rendering.

use std::fmt::Write;

use ergoscene_core::{FurnObj, Layout, Taxonomy};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Style {
    /// Pixels per meter.
    pub scale: f64,
    pub margin: f64,
    pub labels: bool,
    pub font_size: f64,
}

impl Default for Style {
    fn default() -> Self {
        Style { scale: 100.0, margin: 20.0, labels: true, font_size: 11.0 }
    }
}

impl Style {
    /// Room coordinates to SVG coordinates; the SVG y axis points down.
    pub fn map(&self, room_depth: f64, (x, y): (f64, f64)) -> (f64, f64) {
        (self.margin + x * self.scale, self.margin + (room_depth - y) * self.scale)
    }
}

/// Fill color of a category; hues are spread by the golden angle.
pub fn category_color(index: usize) -> String {
    let hue = (index as f64 * 137.507_764) % 360.0;
    format!("hsl({hue:.1},55%,70%)")
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn boundary_marker(out: &mut String, style: &Style, layout: &Layout, o: &FurnObj, color: &str) {
    let (w, d) = layout.room_size();
    let (x0, y0, x1, y1) = o.aabb();
    let (cx, cy) = o.center();
    // Snap to the closest wall.
    let walls = [(cx, 0), (w - cx, 1), (cy, 2), (d - cy, 3)];
    let wall = walls.iter().min_by(|a, b| a.0.total_cmp(&b.0)).expect("four walls").1;
    let (a, b) = match wall {
        0 => ((0.0, y0), (0.0, y1)),
        1 => ((w, y0), (w, y1)),
        2 => ((x0, 0.0), (x1, 0.0)),
        _ => ((x0, d), (x1, d)),
    };
    let (ax, ay) = style.map(d, a);
    let (bx, by) = style.map(d, b);
    let _ = writeln!(
        out,
        r#"<line x1="{ax:.3}" y1="{ay:.3}" x2="{bx:.3}" y2="{by:.3}" stroke="{color}" stroke-width="6"/>"#
    );
}

/// Deterministic top view: room outline, furniture footprints with a tick
/// toward the front, category labels, and door and window markers on the
/// nearest wall.
pub fn render_svg(layout: &Layout, taxonomy: &Taxonomy, style: &Style) -> String {
    let (w, d) = layout.room_size();
    let width = w * style.scale + 2.0 * style.margin;
    let height = d * style.scale + 2.0 * style.margin;
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.3}" height="{height:.3}" viewBox="0 0 {width:.3} {height:.3}">"#
    );
    let (rx, ry) = style.map(d, (0.0, d));
    let _ = writeln!(
        out,
        r##"<rect class="room" x="{rx:.3}" y="{ry:.3}" width="{:.3}" height="{:.3}" fill="#fafafa" stroke="#222" stroke-width="2"/>"##,
        w * style.scale,
        d * style.scale
    );
    for o in layout.furniture() {
        let name = taxonomy.get(o.category).map_or("unknown", |c| c.name.as_str());
        let color = category_color(o.category.index());
        if taxonomy.is_boundary(o.category) {
            boundary_marker(&mut out, style, layout, o, &color);
            continue;
        }
        let pts: Vec<String> = o
            .corners()
            .iter()
            .map(|&p| {
                let (x, y) = style.map(d, p);
                format!("{x:.3},{y:.3}")
            })
            .collect();
        let _ = writeln!(
            out,
            r##"<polygon class="furniture" data-category="{}" points="{}" fill="{color}" stroke="#333" stroke-width="1"/>"##,
            escape(name),
            pts.join(" ")
        );
        let (cx, cy) = o.center();
        let (s, c) = o.orientation.sin_cos();
        let tip = (cx - s * o.depth / 2.0, cy + c * o.depth / 2.0);
        let (ax, ay) = style.map(d, (cx, cy));
        let (bx, by) = style.map(d, tip);
        let _ = writeln!(
            out,
            r##"<line class="front" x1="{ax:.3}" y1="{ay:.3}" x2="{bx:.3}" y2="{by:.3}" stroke="#333" stroke-width="2"/>"##
        );
        if style.labels {
            let _ = writeln!(
                out,
                r#"<text x="{ax:.3}" y="{ay:.3}" font-size="{:.1}" text-anchor="middle" font-family="sans-serif">{}</text>"#,
                style.font_size,
                escape(name)
            );
        }
    }
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_room_is_one_rectangle() {
        let t = Taxonomy::default();
        let svg = render_svg(&Layout::room(t.room(), 3.0, 2.0), &t, &Style::default());
        assert_eq!(svg.matches("<rect").count(), 1);
        assert!(!svg.contains("<polygon") && !svg.contains("<line"));
        assert!(svg.contains(r#"width="300.000" height="200.000""#));
    }

    #[test]
    fn boxes_follow_the_affine_map() {
        let t = Taxonomy::default();
        let mut l = Layout::room(t.room(), 4.0, 3.0);
        l.push(FurnObj::new(t.id("desk"), 0.0, 1.2, 0.6, 0.5, 1.0));
        let style = Style { scale: 50.0, margin: 10.0, ..Style::default() };
        let svg = render_svg(&l, &t, &style);
        let pts = svg.split("points=\"").nth(1).unwrap().split('"').next().unwrap();
        let parsed: Vec<(f64, f64)> = pts
            .split(' ')
            .map(|p| {
                let (x, y) = p.split_once(',').unwrap();
                (x.parse().unwrap(), y.parse().unwrap())
            })
            .collect();
        let want = [(0.5, 1.0), (1.7, 1.0), (1.7, 1.6), (0.5, 1.6)].map(|(x, y)| (10.0 + 50.0 * x, 10.0 + 50.0 * (3.0 - y)));
        for (p, q) in parsed.iter().zip(want) {
            assert!((p.0 - q.0).abs() < 1e-3 && (p.1 - q.1).abs() < 1e-3, "{p:?} vs {q:?}");
        }
        // Front tick points up the page for orientation 0.
        assert!(svg.contains(r#"x1="65.000" y1="95.000" x2="65.000" y2="80.000""#));
    }

    #[test]
    fn doors_become_wall_markers() {
        let t = Taxonomy::default();
        let mut l = Layout::room(t.room(), 4.0, 3.0);
        l.push(FurnObj::new(t.id("door"), 0.0, 0.9, 0.1, 1.0, 0.0));
        let svg = render_svg(&l, &t, &Style::default());
        assert!(!svg.contains("<polygon"));
        assert!(svg.contains(r#"x1="120.000" y1="320.000" x2="210.000" y2="320.000""#));
    }
}
