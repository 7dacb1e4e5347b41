//! Hand-written SVG line chart of per-epoch cosine similarities.

use std::fmt::Write as _;

use gameclr::training::TrainLogRecord;

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 420.0;
const LEFT: f64 = 64.0;
const RIGHT: f64 = 200.0;
const TOP: f64 = 36.0;
const BOTTOM: f64 = 52.0;
const DASHES: [&str; 4] = ["", "6 4", "2 3", "10 3 2 3"];

struct Series {
    label: String,
    color: &'static str,
    dash: &'static str,
    points: Vec<(f64, f64)>,
}

fn series(label: &str, log: &[TrainLogRecord], dash: &'static str) -> Vec<Series> {
    let mut out = vec![
        Series {
            label: format!("{label} cos_pos"),
            color: "#2a9d8f",
            dash,
            points: log.iter().map(|r| (r.epoch as f64, r.cos_pos as f64)).collect(),
        },
        Series {
            label: format!("{label} cos_neg_reg"),
            color: "#e76f51",
            dash,
            points: log.iter().map(|r| (r.epoch as f64, r.cos_neg_reg as f64)).collect(),
        },
    ];
    if log.iter().any(|r| r.cos_neg_syn.is_some()) {
        out.push(Series {
            label: format!("{label} cos_neg_syn"),
            color: "#6a4c93",
            dash,
            points: log
                .iter()
                .filter_map(|r| r.cos_neg_syn.map(|c| (r.epoch as f64, c as f64)))
                .collect(),
        });
    }
    out
}

/// Render one or more labelled training logs. Output depends only on the
/// inputs.
pub fn render_svg(logs: &[(&str, &[TrainLogRecord])]) -> String {
    let all: Vec<Series> = logs
        .iter()
        .enumerate()
        .filter(|(_, (_, log))| !log.is_empty())
        .flat_map(|(i, (label, log))| series(label, log, DASHES[i % DASHES.len()]))
        .collect();
    let values = all.iter().flat_map(|s| s.points.iter());
    let (mut x_max, mut y_min, mut y_max) = (1.0f64, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in values {
        x_max = x_max.max(x);
        y_min = y_min.min(y);
        y_max = y_max.max(y);
    }
    if !y_min.is_finite() {
        (y_min, y_max) = (0.0, 1.0);
    }
    y_min = ((y_min * 10.0).floor() / 10.0).max(-1.0);
    y_max = ((y_max * 10.0).ceil() / 10.0).min(1.0);
    if y_max - y_min < 0.1 {
        y_max = y_min + 0.1;
    }
    let x_min = 1.0;
    let x_span = (x_max - x_min).max(1.0);
    let (pw, ph) = (WIDTH - LEFT - RIGHT, HEIGHT - TOP - BOTTOM);
    let sx = |x: f64| LEFT + (x - x_min) / x_span * pw;
    let sy = |y: f64| TOP + (y_max - y) / (y_max - y_min) * ph;

    let mut s = String::new();
    writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    )
    .unwrap();
    writeln!(s, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#).unwrap();
    writeln!(
        s,
        r#"<text x="{:.1}" y="20" text-anchor="middle" font-size="14">Average cosine similarity per epoch</text>"#,
        LEFT + pw / 2.0
    )
    .unwrap();
    // axes
    writeln!(
        s,
        r#"<path d="M{LEFT:.1} {TOP:.1} V{:.1} H{:.1}" fill="none" stroke="black"/>"#,
        TOP + ph,
        LEFT + pw
    )
    .unwrap();
    let y_ticks = 5;
    for i in 0..=y_ticks {
        let v = y_min + (y_max - y_min) * i as f64 / y_ticks as f64;
        let y = sy(v);
        writeln!(
            s,
            r##"<line x1="{:.1}" y1="{y:.1}" x2="{LEFT:.1}" y2="{y:.1}" stroke="black"/><line x1="{LEFT:.1}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="#dddddd"/><text x="{:.1}" y="{:.1}" text-anchor="end">{v:.2}</text>"##,
            LEFT - 4.0,
            LEFT + pw,
            LEFT - 7.0,
            y + 4.0
        )
        .unwrap();
    }
    let x_step = ((x_span / 10.0).ceil() as usize).max(1);
    let mut e = 1;
    while e as f64 <= x_min + x_span {
        let x = sx(e as f64);
        writeln!(
            s,
            r#"<line x1="{x:.1}" y1="{:.1}" x2="{x:.1}" y2="{:.1}" stroke="black"/><text x="{x:.1}" y="{:.1}" text-anchor="middle">{e}</text>"#,
            TOP + ph,
            TOP + ph + 4.0,
            TOP + ph + 18.0
        )
        .unwrap();
        e += x_step;
    }
    writeln!(
        s,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">epoch</text>"#,
        LEFT + pw / 2.0,
        HEIGHT - 12.0
    )
    .unwrap();
    writeln!(
        s,
        r#"<text x="16" y="{:.1}" text-anchor="middle" transform="rotate(-90 16 {:.1})">cosine similarity</text>"#,
        TOP + ph / 2.0,
        TOP + ph / 2.0
    )
    .unwrap();

    if all.is_empty() {
        writeln!(
            s,
            r##"<text x="{:.1}" y="{:.1}" text-anchor="middle" fill="#888888">no data</text>"##,
            LEFT + pw / 2.0,
            TOP + ph / 2.0
        )
        .unwrap();
    }
    for (i, ser) in all.iter().enumerate() {
        let pts: Vec<String> = ser
            .points
            .iter()
            .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
            .collect();
        let dash = if ser.dash.is_empty() {
            String::new()
        } else {
            format!(r#" stroke-dasharray="{}""#, ser.dash)
        };
        writeln!(
            s,
            r#"<polyline points="{}" fill="none" stroke="{}" stroke-width="2"{dash}/>"#,
            pts.join(" "),
            ser.color
        )
        .unwrap();
        let ly = TOP + 10.0 + 18.0 * i as f64;
        let lx = WIDTH - RIGHT + 12.0;
        writeln!(
            s,
            r#"<line x1="{lx:.1}" y1="{ly:.1}" x2="{:.1}" y2="{ly:.1}" stroke="{}" stroke-width="2"{dash}/><text x="{:.1}" y="{:.1}">{}</text>"#,
            lx + 24.0,
            ser.color,
            lx + 30.0,
            ly + 4.0,
            ser.label
        )
        .unwrap();
    }
    s.push_str("</svg>\n");
    s
}
