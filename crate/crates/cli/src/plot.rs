//! Static SVG renderings of command artifacts.

use std::fmt::Write;

use serde_json::Value;

const SIZE: f64 = 520.0;
const MARGIN: f64 = 60.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

enum Shape {
    Polygon { label: String, points: Vec<[f64; 2]> },
    Cloud { label: String, points: Vec<[f64; 2]> },
}

struct Curve {
    label: String,
    points: Vec<[f64; 2]>,
    bound: Option<f64>,
}

fn pair(v: &Value) -> Option<[f64; 2]> {
    Some([v.get(0)?.as_f64()?, v.get(1)?.as_f64()?])
}

fn float_vertices(v: &Value) -> Option<Vec<[f64; 2]>> {
    v.get("float_vertices")?.as_array()?.iter().map(pair).collect()
}

fn collect_shapes(doc: &Value, name: &str, out: &mut Vec<Shape>) {
    if let Some(points) = float_vertices(doc) {
        let label = match doc.get("mode").and_then(Value::as_str) {
            Some(m) => format!("{name} ({m})"),
            None => name.to_string(),
        };
        out.push(Shape::Polygon { label, points });
    }
    if let Some(samples) = doc.get("samples").and_then(Value::as_array) {
        let points: Vec<[f64; 2]> = samples.iter().filter_map(|s| s.get("vector").and_then(pair)).collect();
        if !points.is_empty() {
            out.push(Shape::Cloud { label: format!("{name} samples"), points });
        }
    }
    for key in ["outer", "inner", "polygon", "orbit_hull", "rotation_polygon"] {
        if let Some(child) = doc.get(key).filter(|c| c.is_object()) {
            collect_shapes(child, &format!("{name} {key}"), out);
        }
    }
}

fn collect_curve(doc: &Value, name: &str) -> Option<Curve> {
    let report = doc.get("worst").unwrap_or(doc);
    let trace = report.get("trace")?.as_array()?;
    let points = trace.iter().filter_map(|t| Some([t.get("n")?.as_f64()?, t.get("deviation")?.as_f64()?])).collect();
    let bound = doc.get("constant").or_else(|| report.get("constant")).and_then(Value::as_f64);
    Some(Curve { label: name.to_string(), points, bound })
}

struct Frame {
    lo: [f64; 2],
    hi: [f64; 2],
}

impl Frame {
    fn around(points: impl Iterator<Item = [f64; 2]>) -> Self {
        let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
        for p in points {
            for i in 0..2 {
                lo[i] = lo[i].min(p[i]);
                hi[i] = hi[i].max(p[i]);
            }
        }
        for i in 0..2 {
            if !lo[i].is_finite() {
                (lo[i], hi[i]) = (0.0, 1.0);
            }
            let pad = ((hi[i] - lo[i]) * 0.1).max(0.05);
            lo[i] -= pad;
            hi[i] += pad;
        }
        Frame { lo, hi }
    }

    fn map(&self, p: [f64; 2]) -> (f64, f64) {
        let w = SIZE - 2.0 * MARGIN;
        (
            MARGIN + (p[0] - self.lo[0]) / (self.hi[0] - self.lo[0]) * w,
            SIZE - MARGIN - (p[1] - self.lo[1]) / (self.hi[1] - self.lo[1]) * w,
        )
    }
}

fn axes(svg: &mut String, f: &Frame, xlabel: &str, ylabel: &str, xfmt: impl Fn(f64) -> String) {
    let (x0, y0) = (MARGIN, SIZE - MARGIN);
    let x1 = SIZE - MARGIN;
    let _ = writeln!(
        svg,
        r#"<rect x="{x0}" y="{MARGIN}" width="{w}" height="{w}" fill="none" stroke="gray"/>"#,
        w = x1 - x0
    );
    for k in 0..=4 {
        let t = k as f64 / 4.0;
        let vx = f.lo[0] + t * (f.hi[0] - f.lo[0]);
        let vy = f.lo[1] + t * (f.hi[1] - f.lo[1]);
        let (px, _) = f.map([vx, f.lo[1]]);
        let (_, py) = f.map([f.lo[0], vy]);
        let _ = writeln!(
            svg,
            r#"<line x1="{px:.2}" y1="{y0}" x2="{px:.2}" y2="{:.2}" stroke="gray"/><text x="{px:.2}" y="{:.2}" font-size="11" text-anchor="middle">{}</text>"#,
            y0 + 5.0,
            y0 + 18.0,
            xfmt(vx)
        );
        let _ = writeln!(
            svg,
            r#"<line x1="{:.2}" y1="{py:.2}" x2="{x0}" y2="{py:.2}" stroke="gray"/><text x="{:.2}" y="{:.2}" font-size="11" text-anchor="end">{vy:.3}</text>"#,
            x0 - 5.0,
            x0 - 8.0,
            py + 4.0
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="{:.2}" font-size="13" text-anchor="middle">{xlabel}</text>"#,
        SIZE / 2.0,
        SIZE - 15.0
    );
    let _ = writeln!(
        svg,
        r#"<text x="15" y="{:.2}" font-size="13" text-anchor="middle" transform="rotate(-90 15 {:.2})">{ylabel}</text>"#,
        SIZE / 2.0,
        SIZE / 2.0
    );
}

fn legend(svg: &mut String, labels: &[(String, &str)]) {
    for (i, (label, color)) in labels.iter().enumerate() {
        let y = MARGIN + 14.0 + 16.0 * i as f64;
        let _ = writeln!(
            svg,
            r#"<rect x="{:.2}" y="{:.2}" width="10" height="10" fill="{color}"/><text x="{:.2}" y="{:.2}" font-size="11">{}</text>"#,
            MARGIN + 8.0,
            y - 9.0,
            MARGIN + 22.0,
            y,
            escape(label)
        );
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn header() -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{SIZE}\" height=\"{SIZE}\" viewBox=\"0 0 {SIZE} {SIZE}\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
    )
}

fn render_shapes(shapes: &[Shape]) -> String {
    let frame = Frame::around(shapes.iter().flat_map(|s| match s {
        Shape::Polygon { points, .. } | Shape::Cloud { points, .. } => points.iter().copied(),
    }));
    let mut svg = header();
    axes(&mut svg, &frame, "rotation x", "rotation y", |v| format!("{v:.3}"));
    let mut labels = Vec::new();
    for (i, shape) in shapes.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        match shape {
            Shape::Polygon { label, points } => {
                let pts: Vec<String> = points
                    .iter()
                    .map(|&p| {
                        let (x, y) = frame.map(p);
                        format!("{x:.2},{y:.2}")
                    })
                    .collect();
                if points.len() == 1 {
                    let (x, y) = frame.map(points[0]);
                    let _ = writeln!(svg, r#"<circle cx="{x:.2}" cy="{y:.2}" r="4" fill="{color}"/>"#);
                } else {
                    let _ = writeln!(
                        svg,
                        r#"<polygon points="{}" fill="{color}" fill-opacity="0.15" stroke="{color}" stroke-width="2"/>"#,
                        pts.join(" ")
                    );
                }
                labels.push((label.clone(), color));
            }
            Shape::Cloud { label, points } => {
                for &p in points {
                    let (x, y) = frame.map(p);
                    let _ = writeln!(svg, r#"<circle cx="{x:.2}" cy="{y:.2}" r="1.5" fill="{color}"/>"#);
                }
                labels.push((label.clone(), color));
            }
        }
    }
    legend(&mut svg, &labels);
    svg.push_str("</svg>\n");
    svg
}

fn render_curves(curves: &[Curve]) -> String {
    let log = |n: f64| n.max(1.0).log10();
    let frame = Frame::around(
        curves.iter().flat_map(|c| c.points.iter().map(|p| [log(p[0]), p[1]]).chain(c.bound.map(|b| [0.0, b]))),
    );
    let mut svg = header();
    axes(&mut svg, &frame, "n", "deviation", |v| format!("{:.0}", 10f64.powf(v)));
    let mut labels = Vec::new();
    for (i, c) in curves.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let pts: Vec<String> = c
            .points
            .iter()
            .map(|p| {
                let (x, y) = frame.map([log(p[0]), p[1]]);
                format!("{x:.2},{y:.2}")
            })
            .collect();
        let _ =
            writeln!(svg, r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#, pts.join(" "));
        if let Some(b) = c.bound {
            let (x0, y) = frame.map([frame.lo[0], b]);
            let (x1, _) = frame.map([frame.hi[0], b]);
            let _ = writeln!(
                svg,
                r#"<line x1="{x0:.2}" y1="{y:.2}" x2="{x1:.2}" y2="{y:.2}" stroke="{color}" stroke-dasharray="6 4"/>"#
            );
        }
        labels.push((c.label.clone(), color));
    }
    legend(&mut svg, &labels);
    svg.push_str("</svg>\n");
    svg
}

/// Deviation summaries become curves against `n` (log scale); anything
/// else contributes its polygons and sample clouds.
pub fn render(docs: &[Value]) -> Result<String, String> {
    let curves: Vec<Curve> =
        docs.iter().enumerate().filter_map(|(i, d)| collect_curve(d, &format!("input {}", i + 1))).collect();
    if !curves.is_empty() {
        if curves.len() != docs.len() {
            return Err("deviation traces cannot be mixed with polygons in one plot".into());
        }
        return Ok(render_curves(&curves));
    }
    let mut shapes = Vec::new();
    for (i, d) in docs.iter().enumerate() {
        collect_shapes(d, &format!("input {}", i + 1), &mut shapes);
    }
    if shapes.is_empty() {
        return Err("no polygon, sample cloud or deviation trace found in the inputs".into());
    }
    Ok(render_shapes(&shapes))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn polygons_and_points() {
        let a = json!({"float_vertices": [[0.0, 0.0], [0.5, 0.0], [0.0, 0.5]], "mode": "outer"});
        let b = json!({"float_vertices": [[0.1, 0.1]]});
        let svg = render(&[a, b]).unwrap();
        assert_eq!(svg.matches("<polygon").count(), 1);
        assert!(svg.contains("<circle"));
        assert!(svg.contains("input 1 (outer)"));
    }

    #[test]
    fn traces_need_their_own_plot() {
        let t = json!({"trace": [{"n": 1, "deviation": 0.1}, {"n": 10, "deviation": 0.2}], "constant": 1.0});
        let svg = render(std::slice::from_ref(&t)).unwrap();
        assert!(svg.contains("<polyline") && svg.contains("stroke-dasharray"));
        assert!(render(&[t, json!({"float_vertices": [[0.0, 0.0]]})]).is_err());
        assert!(render(&[json!({})]).is_err());
    }
}
