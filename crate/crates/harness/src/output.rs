//! Trace CSV, summary JSON and SVG plots.
//!
//! Trace columns are fixed:
//!
//! ```text
//! t, s_norm, N_t, H_t, phi, grad_phi_norm, min_eig, mu_measure,
//! b1, b11, b12, b21, b22, kkt_residual, wall_ms
//! ```
//!
//! Missing values are empty fields. Floats are written with 17 significant
//! digits, enough to round-trip every `f64`.

use std::fmt::Write as _;

use cubic_gda::driver_det::RunResult;

pub const TRACE_COLUMNS: [&str; 15] = [
    "t",
    "s_norm",
    "N_t",
    "H_t",
    "phi",
    "grad_phi_norm",
    "min_eig",
    "mu_measure",
    "b1",
    "b11",
    "b12",
    "b21",
    "b22",
    "kkt_residual",
    "wall_ms",
];

pub fn format_f64(v: f64) -> String {
    if v.is_nan() {
        "NaN".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{v:.16e}")
    }
}

fn opt_f(v: Option<f64>) -> String {
    v.map(format_f64).unwrap_or_default()
}

fn opt_u(v: Option<usize>) -> String {
    v.map(|n| n.to_string()).unwrap_or_default()
}

pub fn trace_csv(result: &RunResult) -> String {
    let mut out = TRACE_COLUMNS.join(",");
    out.push('\n');
    for r in &result.records {
        let b = r.batches.map(|b| b.as_array());
        let cells = [
            r.t.to_string(),
            format_f64(r.s_norm),
            opt_u(r.n_t),
            opt_f(r.h_t),
            opt_f(r.phi),
            opt_f(r.grad_phi_norm),
            opt_f(r.min_eig),
            opt_f(r.mu_measure),
            opt_u(b.map(|b| b[0])),
            opt_u(b.map(|b| b[1])),
            opt_u(b.map(|b| b[2])),
            opt_u(b.map(|b| b[3])),
            opt_u(b.map(|b| b[4])),
            opt_f(r.kkt.map(|k| k.stationarity_residual)),
            opt_f(r.wall_ms),
        ];
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

/// One curve of a plot; `None` breaks the line.
pub struct Series {
    pub name: String,
    pub color: &'static str,
    pub points: Vec<(f64, Option<f64>)>,
}

const W: f64 = 720.0;
const H: f64 = 440.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 170.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;

fn usable(v: f64, log: bool) -> bool {
    v.is_finite() && (!log || v > 0.0)
}

/// Line plot with a log₁₀ y axis and an optional log₁₀ x axis.
pub fn line_plot(title: &str, x_label: &str, log_x: bool, series: &[Series]) -> String {
    let tx = |v: f64| if log_x { v.log10() } else { v };
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for s in series {
        for &(x, y) in &s.points {
            if let Some(y) = y.filter(|&y| usable(y, true)) {
                if usable(x, log_x) {
                    xs.push(tx(x));
                    ys.push(y.log10());
                }
            }
        }
    }
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(svg, r#"<text x="{}" y="22" text-anchor="middle" font-size="15">{}</text>"#, LEFT + (W - LEFT - RIGHT) / 2.0, escape(title));
    let pw = W - LEFT - RIGHT;
    let ph = H - TOP - BOTTOM;
    let _ = writeln!(svg, r#"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#);
    if xs.is_empty() {
        let _ = writeln!(svg, r#"<text x="{}" y="{}" text-anchor="middle">no positive data</text>"#, LEFT + pw / 2.0, TOP + ph / 2.0);
        svg.push_str("</svg>\n");
        return svg;
    }
    let (mut x_lo, mut x_hi) = bounds(&xs);
    let (mut y_lo, mut y_hi) = bounds(&ys);
    y_lo = y_lo.floor();
    y_hi = y_hi.ceil();
    if y_hi <= y_lo {
        y_hi = y_lo + 1.0;
    }
    if x_hi <= x_lo {
        x_lo -= 0.5;
        x_hi += 0.5;
    }
    let px = |x: f64| LEFT + (x - x_lo) / (x_hi - x_lo) * pw;
    let py = |y: f64| TOP + ph - (y - y_lo) / (y_hi - y_lo) * ph;

    let step = ((y_hi - y_lo) / 8.0).ceil().max(1.0);
    let mut e = y_lo;
    while e <= y_hi + 1e-9 {
        let y = py(e);
        let _ = writeln!(svg, r##"<line x1="{LEFT}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#ddd"/>"##, LEFT + pw);
        let _ = writeln!(svg, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">1e{}</text>"#, LEFT - 6.0, y + 4.0, e as i64);
        e += step;
    }
    for i in 0..=5 {
        let v = x_lo + (x_hi - x_lo) * i as f64 / 5.0;
        let x = px(v);
        let label = if log_x { format!("{:.3}", 10f64.powf(v)) } else { format!("{}", v.round() as i64) };
        let _ = writeln!(svg, r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle">{label}</text>"#, TOP + ph + 18.0);
    }
    let _ = writeln!(svg, r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#, LEFT + pw / 2.0, H - 10.0, escape(x_label));

    for (k, s) in series.iter().enumerate() {
        let mut run: Vec<String> = Vec::new();
        let flush = |run: &mut Vec<String>, svg: &mut String| {
            if run.len() > 1 {
                let _ = writeln!(svg, r#"<polyline fill="none" stroke="{}" stroke-width="1.5" points="{}"/>"#, s.color, run.join(" "));
            } else if run.len() == 1 {
                let (x, y) = run[0].split_once(',').unwrap();
                let _ = writeln!(svg, r#"<circle cx="{x}" cy="{y}" r="2" fill="{}"/>"#, s.color);
            }
            run.clear();
        };
        for &(x, y) in &s.points {
            match y.filter(|&y| usable(y, true) && usable(x, log_x)) {
                Some(y) => run.push(format!("{:.2},{:.2}", px(tx(x)), py(y.log10()))),
                None => flush(&mut run, &mut svg),
            }
        }
        flush(&mut run, &mut svg);
        let ly = TOP + 10.0 + 20.0 * k as f64;
        let lx = W - RIGHT + 12.0;
        let _ = writeln!(svg, r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{}" stroke-width="2"/>"#, lx + 20.0, s.color);
        let _ = writeln!(svg, r#"<text x="{}" y="{}">{}</text>"#, lx + 26.0, ly + 4.0, escape(&s.name));
    }
    svg.push_str("</svg>\n");
    svg
}

fn bounds(v: &[f64]) -> (f64, f64) {
    v.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)))
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// `H_t − H_final`, `‖s_t‖` and `μ(x_t)` against `t`.
pub fn convergence_svg(result: &RunResult, title: &str) -> String {
    let h_final = result.records.iter().rev().find_map(|r| r.h_t);
    let t = |r: &cubic_gda::driver_det::IterateRecord| r.t as f64;
    let series = [
        Series {
            name: "H_t - H_final".into(),
            color: "#1f77b4",
            points: result
                .records
                .iter()
                .map(|r| (t(r), r.h_t.zip(h_final).map(|(h, f)| h - f)))
                .collect(),
        },
        Series {
            name: "step norm".into(),
            color: "#d62728",
            points: result.records.iter().map(|r| (t(r), Some(r.s_norm))).collect(),
        },
        Series {
            name: "mu(x_t)".into(),
            color: "#2ca02c",
            points: result.records.iter().map(|r| (t(r), r.mu_measure)).collect(),
        },
    ];
    line_plot(title, "iteration t", false, &series)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip() {
        for v in [0.1, 1.0 / 3.0, -2.5e-300, 12345.678901234567, f64::MIN_POSITIVE] {
            assert_eq!(format_f64(v).parse::<f64>().unwrap(), v);
        }
    }

    #[test]
    fn plot_without_data_is_valid() {
        let svg = line_plot("empty", "t", false, &[]);
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
    }
}
