//! Static line plots of a report metric against θ.

use std::fmt::Write;

use dirci::simulate::MetricsReport;

const W: f64 = 720.0;
const H: f64 = 440.0;
const LEFT: f64 = 60.0;
const RIGHT: f64 = 240.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 40.0;
const COLORS: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
];

struct Series {
    name: String,
    points: Vec<(f64, f64)>,
}

fn series(report: &MetricsReport, metric: &str) -> Vec<Series> {
    let mut out: Vec<Series> = Vec::new();
    for row in report.rows.iter().filter(|r| r.metric == metric) {
        let (Some(x), true) = (row.theta, row.value.is_finite()) else {
            continue;
        };
        let name = if row.scenario.is_empty() {
            row.method.clone()
        } else {
            format!("{} {}", row.scenario, row.method)
        };
        match out.iter_mut().find(|s| s.name == name) {
            Some(s) => s.points.push((x, row.value)),
            None => out.push(Series {
                name,
                points: vec![(x, row.value)],
            }),
        }
    }
    out
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

/// One polyline per (scenario, method) for rows of `metric` with a θ value.
pub fn plot_metric(report: &MetricsReport, metric: &str) -> String {
    let all = series(report, metric);
    let pts = all.iter().flat_map(|s| s.points.iter());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for &(x, y) in pts {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if x0 > x1 {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    if x1 == x0 {
        x1 = x0 + 1.0;
    }
    if y1 == y0 {
        y1 = y0 + 1.0;
    }
    let pw = W - LEFT - RIGHT;
    let ph = H - TOP - BOTTOM;
    let sx = |x: f64| LEFT + (x - x0) / (x1 - x0) * pw;
    let sy = |y: f64| TOP + (y1 - y) / (y1 - y0) * ph;

    let mut doc = String::new();
    let _ = writeln!(
        doc,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(doc, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        doc,
        r#"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
    );
    for i in 0..=4 {
        let f = i as f64 / 4.0;
        let (x, y) = (x0 + f * (x1 - x0), y0 + f * (y1 - y0));
        let _ = writeln!(
            doc,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{x:.3}</text>"#,
            sx(x),
            H - BOTTOM + 15.0
        );
        let _ = writeln!(
            doc,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{y:.3}</text>"#,
            LEFT - 5.0,
            sy(y) + 4.0
        );
    }
    let _ = writeln!(
        doc,
        r#"<text x="{:.1}" y="18" text-anchor="middle">{}</text>"#,
        LEFT + pw / 2.0,
        escape(metric)
    );
    let _ = writeln!(
        doc,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">theta</text>"#,
        LEFT + pw / 2.0,
        H - 8.0
    );
    for (i, s) in all.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let path: Vec<String> = s
            .points
            .iter()
            .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
            .collect();
        let _ = writeln!(
            doc,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
            path.join(" ")
        );
        let ly = TOP + 14.0 * i as f64 + 8.0;
        let _ = writeln!(
            doc,
            r#"<line x1="{:.1}" y1="{ly:.1}" x2="{:.1}" y2="{ly:.1}" stroke="{color}" stroke-width="2"/>"#,
            W - RIGHT + 10.0,
            W - RIGHT + 28.0
        );
        let _ = writeln!(
            doc,
            r#"<text x="{:.1}" y="{:.1}">{}</text>"#,
            W - RIGHT + 32.0,
            ly + 4.0,
            escape(&s.name)
        );
    }
    doc.push_str("</svg>\n");
    doc
}
