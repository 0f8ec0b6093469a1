//! Minimal static SVG charts: scatter, grouped bars, heatmap.
//!
//! Output is plain text built in a fixed order, so identical inputs give
//! byte-identical files.

use std::fmt::Write as _;

const W: f64 = 640.0;
const H: f64 = 400.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 90.0;

const PALETTE: [&str; 8] = [
    "#4e79a7", "#f28e2b", "#e15759", "#76b7b2", "#59a14f", "#edc948", "#b07aa1", "#9c755f",
];

pub fn color(i: usize) -> &'static str {
    PALETTE[i % PALETTE.len()]
}

pub fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn header(out: &mut String, w: f64, h: f64, title: &str) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{}" y="22" text-anchor="middle" font-size="15">{}</text>"#,
        w / 2.0,
        escape(title)
    );
}

/// Rounds an axis extent to a readable value.
fn nice_ceiling(x: f64) -> f64 {
    if x <= 0.0 || !x.is_finite() {
        return 1.0;
    }
    let mag = 10f64.powf(x.log10().floor());
    for step in [1.0, 2.0, 2.5, 5.0, 10.0] {
        if step * mag >= x {
            return step * mag;
        }
    }
    10.0 * mag
}

fn axes(out: &mut String, x_label: &str, y_label: &str, y_min: f64, y_max: f64) {
    let (x0, x1, y0, y1) = (LEFT, W - RIGHT, H - BOTTOM, TOP);
    let _ = writeln!(out, r##"<line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}" stroke="#333"/>"##);
    let _ = writeln!(out, r##"<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}" stroke="#333"/>"##);
    for k in 0..=4 {
        let v = y_min + (y_max - y_min) * f64::from(k) / 4.0;
        let y = y0 - (y0 - y1) * f64::from(k) / 4.0;
        let _ = writeln!(
            out,
            r##"<line x1="{x0}" y1="{y:.1}" x2="{x1}" y2="{y:.1}" stroke="#ddd"/><text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"##,
            x0 - 6.0,
            y + 4.0,
            short_number(v)
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
        (x0 + x1) / 2.0,
        H - 12.0,
        escape(x_label)
    );
    let _ = writeln!(
        out,
        r#"<text x="16" y="{:.1}" text-anchor="middle" transform="rotate(-90 16 {:.1})">{}</text>"#,
        (y0 + y1) / 2.0,
        (y0 + y1) / 2.0,
        escape(y_label)
    );
}

fn short_number(v: f64) -> String {
    if v.abs() >= 1000.0 {
        format!("{:.1}k", v / 1000.0)
    } else if v.fract() == 0.0 {
        format!("{v:.0}")
    } else {
        format!("{v:.2}")
    }
}

/// Labelled points; x and y axes start at zero.
pub fn scatter(title: &str, x_label: &str, y_label: &str, points: &[(String, f64, f64)]) -> String {
    let mut out = String::new();
    header(&mut out, W, H, title);
    let x_max = nice_ceiling(points.iter().map(|p| p.1).fold(0.0, f64::max) * 1.1);
    let y_max = nice_ceiling(points.iter().map(|p| p.2).fold(0.0, f64::max) * 1.1);
    axes(&mut out, x_label, y_label, 0.0, y_max);
    for k in 0..=4 {
        let v = x_max * f64::from(k) / 4.0;
        let x = LEFT + (W - RIGHT - LEFT) * f64::from(k) / 4.0;
        let _ = writeln!(
            out,
            r#"<text x="{x:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            H - BOTTOM + 16.0,
            short_number(v)
        );
    }
    for (i, (label, x, y)) in points.iter().enumerate() {
        let px = LEFT + (W - RIGHT - LEFT) * x / x_max;
        let py = (H - BOTTOM) - (H - BOTTOM - TOP) * y / y_max;
        let _ = writeln!(
            out,
            r#"<circle cx="{px:.1}" cy="{py:.1}" r="6" fill="{}"/><text x="{:.1}" y="{:.1}">{}</text>"#,
            color(i),
            px + 9.0,
            py - 6.0,
            escape(label)
        );
    }
    out.push_str("</svg>\n");
    out
}

/// Bars grouped by category, one colour per series. Missing values leave gaps.
pub fn grouped_bars(title: &str, y_label: &str, categories: &[String], series: &[(String, Vec<Option<f64>>)]) -> String {
    let mut out = String::new();
    header(&mut out, W, H, title);
    let y_max = nice_ceiling(
        series
            .iter()
            .flat_map(|(_, v)| v.iter().flatten())
            .copied()
            .fold(0.0, f64::max)
            * 1.05,
    );
    axes(&mut out, "", y_label, 0.0, y_max);
    let n_cat = categories.len().max(1) as f64;
    let group_w = (W - RIGHT - LEFT) / n_cat;
    let bar_w = group_w * 0.8 / series.len().max(1) as f64;
    for (ci, cat) in categories.iter().enumerate() {
        let gx = LEFT + group_w * ci as f64 + group_w * 0.1;
        for (si, (_, values)) in series.iter().enumerate() {
            if let Some(Some(v)) = values.get(ci) {
                let h = (H - BOTTOM - TOP) * v / y_max;
                let _ = writeln!(
                    out,
                    r#"<rect x="{:.1}" y="{:.1}" width="{:.1}" height="{h:.1}" fill="{}"/>"#,
                    gx + bar_w * si as f64,
                    H - BOTTOM - h,
                    bar_w,
                    color(si)
                );
            }
        }
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            gx + group_w * 0.4,
            H - BOTTOM + 16.0,
            escape(cat)
        );
    }
    for (si, (name, _)) in series.iter().enumerate() {
        let lx = LEFT + 150.0 * (si % 4) as f64;
        let ly = H - BOTTOM + 36.0 + 16.0 * (si / 4) as f64;
        let _ = writeln!(
            out,
            r#"<rect x="{lx:.1}" y="{:.1}" width="10" height="10" fill="{}"/><text x="{:.1}" y="{ly:.1}">{}</text>"#,
            ly - 9.0,
            color(si),
            lx + 14.0,
            escape(name)
        );
    }
    out.push_str("</svg>\n");
    out
}

/// Row-normalised heatmap of a square count matrix. Rows with no support stay blank.
pub fn heatmap(title: &str, matrix: &[Vec<usize>], labels: &[String]) -> String {
    let n = matrix.len();
    let cell = 28.0;
    let margin = 60.0;
    let size = margin + cell * n as f64 + 20.0;
    let mut out = String::new();
    header(&mut out, size, size + 10.0, title);
    for (i, row) in matrix.iter().enumerate() {
        let support: usize = row.iter().sum();
        for (j, &count) in row.iter().enumerate() {
            let frac = if support == 0 { 0.0 } else { count as f64 / support as f64 };
            let shade = (255.0 * (1.0 - frac)).round() as u8;
            let _ = writeln!(
                out,
                r##"<rect x="{:.1}" y="{:.1}" width="{cell}" height="{cell}" fill="rgb({shade},{shade},255)" stroke="#eee"><title>{} → {}: {count}</title></rect>"##,
                margin + cell * j as f64,
                margin + cell * i as f64,
                escape(labels.get(i).map_or("", String::as_str)),
                escape(labels.get(j).map_or("", String::as_str)),
            );
        }
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{i}</text>"#,
            margin - 6.0,
            margin + cell * i as f64 + cell * 0.65
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{i}</text>"#,
            margin + cell * i as f64 + cell / 2.0,
            margin - 6.0
        );
    }
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nice_ceilings() {
        assert_eq!(nice_ceiling(0.0), 1.0);
        assert_eq!(nice_ceiling(73.0), 100.0);
        assert_eq!(nice_ceiling(0.42), 0.5);
        assert_eq!(nice_ceiling(2300.0), 2500.0);
    }

    #[test]
    fn heatmap_handles_empty_rows() {
        let svg = heatmap("t", &[vec![0, 0], vec![1, 3]], &["a".into(), "b".into()]);
        assert!(svg.contains("rgb(255,255,255)"));
        assert!(!svg.contains("NaN"));
    }
}
