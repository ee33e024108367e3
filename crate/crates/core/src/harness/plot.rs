//! Static SVG charts: a loss curve and per-class F1 bars grouped by scenario.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::report::{read_metrics_csv, MetricRow, MEAN_ROW};
use crate::error::{Error, Result};

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 420.0;
const MARGIN_L: f64 = 64.0;
const MARGIN_R: f64 = 160.0;
const MARGIN_T: f64 = 36.0;
const MARGIN_B: f64 = 56.0;
const PALETTE: [&str; 8] = [
    "#4e79a7", "#f28e2b", "#e15759", "#76b7b2", "#59a14f", "#edc948", "#b07aa1", "#9c755f",
];

fn header(out: &mut String, title: &str) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{}" y="22" text-anchor="middle" font-size="15">{title}</text>"#,
        MARGIN_L + (WIDTH - MARGIN_L - MARGIN_R) / 2.0
    );
}

fn legend(out: &mut String, names: &[&str]) {
    for (i, name) in names.iter().enumerate() {
        let y = MARGIN_T + 10.0 + 18.0 * i as f64;
        let x = WIDTH - MARGIN_R + 16.0;
        let _ = writeln!(
            out,
            r#"<rect x="{x:.1}" y="{:.1}" width="12" height="12" fill="{}"/><text x="{:.1}" y="{:.1}">{name}</text>"#,
            y - 10.0,
            PALETTE[i % PALETTE.len()],
            x + 18.0,
            y
        );
    }
}

fn y_axis(out: &mut String, lo: f64, hi: f64, label: &str) {
    let plot_h = HEIGHT - MARGIN_T - MARGIN_B;
    let _ = writeln!(
        out,
        r#"<line x1="{MARGIN_L}" y1="{MARGIN_T}" x2="{MARGIN_L}" y2="{}" stroke="black"/>"#,
        HEIGHT - MARGIN_B
    );
    for k in 0..=4 {
        let v = lo + (hi - lo) * k as f64 / 4.0;
        let y = HEIGHT - MARGIN_B - plot_h * k as f64 / 4.0;
        let _ = writeln!(
            out,
            r##"<line x1="{MARGIN_L}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="#dddddd"/><text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"##,
            WIDTH - MARGIN_R,
            MARGIN_L - 6.0,
            y + 4.0,
            tick(v)
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="16" y="{:.1}" transform="rotate(-90 16 {:.1})" text-anchor="middle">{label}</text>"#,
        MARGIN_T + plot_h / 2.0,
        MARGIN_T + plot_h / 2.0
    );
}

fn tick(v: f64) -> String {
    if v.abs() >= 100.0 || v == v.round() {
        format!("{v:.0}")
    } else if v.abs() >= 1.0 {
        format!("{v:.1}")
    } else {
        format!("{v:.3}")
    }
}

const LOSS_SERIES: [(&str, usize); 4] = [("total", 7), ("seg_fused", 1), ("seg_unimodal", 3), ("rec", 4)];

/// Loss curve from `loss.csv` text. Errors when there are no data rows.
pub fn render_loss_curve(csv: &str) -> Result<String> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for line in csv.lines().skip(1).filter(|l| !l.trim().is_empty()) {
        let vals: Vec<f64> = line
            .split(',')
            .map(|f| f.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::Harness(format!("malformed loss row '{line}'")))?;
        if vals.len() != 8 {
            return Err(Error::Harness(format!("loss row has {} fields, expected 8", vals.len())));
        }
        rows.push(vals);
    }
    if rows.is_empty() {
        return Err(Error::Harness("loss CSV has no rows".into()));
    }
    let x_lo = rows[0][0];
    let x_hi = rows[rows.len() - 1][0].max(x_lo + 1.0);
    let y_hi = rows
        .iter()
        .flat_map(|r| LOSS_SERIES.iter().map(move |(_, c)| r[*c]))
        .filter(|v| v.is_finite())
        .fold(0.0f64, f64::max)
        .max(1e-9);
    let plot_w = WIDTH - MARGIN_L - MARGIN_R;
    let plot_h = HEIGHT - MARGIN_T - MARGIN_B;
    let px = |x: f64| MARGIN_L + plot_w * (x - x_lo) / (x_hi - x_lo);
    let py = |y: f64| HEIGHT - MARGIN_B - plot_h * (y / y_hi).clamp(0.0, 1.0);

    let mut out = String::new();
    header(&mut out, "Training loss");
    y_axis(&mut out, 0.0, y_hi, "loss");
    let _ = writeln!(
        out,
        r#"<line x1="{MARGIN_L}" y1="{0}" x2="{1}" y2="{0}" stroke="black"/>"#,
        HEIGHT - MARGIN_B,
        WIDTH - MARGIN_R
    );
    for k in 0..=4 {
        let x = x_lo + (x_hi - x_lo) * k as f64 / 4.0;
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{:.0}</text>"#,
            px(x),
            HEIGHT - MARGIN_B + 18.0,
            x
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">step</text>"#,
        MARGIN_L + plot_w / 2.0,
        HEIGHT - 14.0
    );
    for (i, (_, col)) in LOSS_SERIES.iter().enumerate() {
        let pts: Vec<String> = rows
            .iter()
            .filter(|r| r[*col].is_finite())
            .map(|r| format!("{:.1},{:.1}", px(r[0]), py(r[*col])))
            .collect();
        let _ = writeln!(
            out,
            r#"<polyline fill="none" stroke="{}" stroke-width="1.5" points="{}"/>"#,
            PALETTE[i],
            pts.join(" ")
        );
    }
    legend(&mut out, &LOSS_SERIES.map(|(n, _)| n));
    out.push_str("</svg>\n");
    Ok(out)
}

/// Per-class F1 bars (percent), one group per scenario.
pub fn render_f1_bars(rows: &[MetricRow]) -> Result<String> {
    let mut scenarios: Vec<&str> = Vec::new();
    let mut classes: Vec<&str> = Vec::new();
    for r in rows.iter().filter(|r| r.class != MEAN_ROW) {
        if !scenarios.contains(&r.scenario.as_str()) {
            scenarios.push(&r.scenario);
        }
        if !classes.contains(&r.class.as_str()) {
            classes.push(&r.class);
        }
    }
    if scenarios.is_empty() {
        return Err(Error::Harness("no per-class rows to plot".into()));
    }
    let plot_w = WIDTH - MARGIN_L - MARGIN_R;
    let plot_h = HEIGHT - MARGIN_T - MARGIN_B;
    let group_w = plot_w / scenarios.len() as f64;
    let bar_w = group_w * 0.8 / classes.len() as f64;

    let mut out = String::new();
    header(&mut out, "Per-class F1 by scenario");
    y_axis(&mut out, 0.0, 100.0, "F1 (%)");
    for (g, s) in scenarios.iter().enumerate() {
        let gx = MARGIN_L + group_w * g as f64;
        let _ = writeln!(out, r#"<g class="group" data-scenario="{s}">"#);
        for (c, class) in classes.iter().enumerate() {
            let f1 = rows
                .iter()
                .find(|r| r.scenario == *s && r.class == *class)
                .and_then(|r| r.f1)
                .unwrap_or(0.0);
            let h = plot_h * f1.clamp(0.0, 1.0);
            let _ = writeln!(
                out,
                r#"<rect x="{:.1}" y="{:.1}" width="{:.1}" height="{:.1}" fill="{}"><title>{class}: {:.2}</title></rect>"#,
                gx + group_w * 0.1 + bar_w * c as f64,
                HEIGHT - MARGIN_B - h,
                bar_w,
                h,
                PALETTE[c % PALETTE.len()],
                100.0 * f1
            );
        }
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{s}</text></g>"#,
            gx + group_w / 2.0,
            HEIGHT - MARGIN_B + 18.0
        );
    }
    let _ = writeln!(
        out,
        r#"<line x1="{MARGIN_L}" y1="{0}" x2="{1}" y2="{0}" stroke="black"/>"#,
        HEIGHT - MARGIN_B,
        WIDTH - MARGIN_R
    );
    legend(&mut out, &classes);
    out.push_str("</svg>\n");
    Ok(out)
}

/// Renders `loss_curve.svg` and `f1_bars.svg` into `out_dir` (default: the run directory).
///
/// Bars come from `metrics.csv` when present, else from the last step of `val_metrics.csv`.
pub fn cmd_plot(run_dir: &Path, out_dir: Option<&Path>) -> Result<Vec<PathBuf>> {
    let out_dir = out_dir.unwrap_or(run_dir);
    let loss_path = run_dir.join("loss.csv");
    let loss = fs::read_to_string(&loss_path)
        .map_err(|e| Error::Harness(format!("cannot read {}: {e}", loss_path.display())))?;
    let metrics_path = [run_dir.join("metrics.csv"), run_dir.join("val_metrics.csv")]
        .into_iter()
        .find(|p| p.is_file())
        .ok_or_else(|| Error::Harness(format!("no metrics.csv or val_metrics.csv in {}", run_dir.display())))?;
    let curve = render_loss_curve(&loss)?;
    let bars = render_f1_bars(&read_metrics_csv(&metrics_path)?)?;
    fs::create_dir_all(out_dir)?;
    let paths = vec![out_dir.join("loss_curve.svg"), out_dir.join("f1_bars.svg")];
    fs::write(&paths[0], curve)?;
    fs::write(&paths[1], bars)?;
    Ok(paths)
}
