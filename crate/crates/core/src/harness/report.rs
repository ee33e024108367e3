use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::metrics::{abs_delta_pp, format_pp, format_relative, relative_delta};

/// Row name holding mF1 (in `f1`) and mIoU (in `iou`).
pub const MEAN_ROW: &str = "mean";
pub const METRICS_HEADER: &str = "scenario,class,f1,iou";

/// One line of a metrics CSV. Scores are fractions in `[0, 1]`; `None` marks
/// a class absent from both labels and predictions.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub scenario: String,
    pub class: String,
    pub f1: Option<f64>,
    pub iou: Option<f64>,
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|v| format!("{v:.6}")).unwrap_or_default()
}

pub(crate) fn csv_line(row: &MetricRow) -> String {
    format!("{},{},{},{}", row.scenario, row.class, fmt_opt(row.f1), fmt_opt(row.iou))
}

pub fn write_metrics_csv(path: &Path, rows: &[MetricRow]) -> Result<()> {
    let mut text = String::from(METRICS_HEADER);
    text.push('\n');
    for row in rows {
        text.push_str(&csv_line(row));
        text.push('\n');
    }
    fs::write(path, text)?;
    Ok(())
}

fn parse_opt(field: &str, path: &Path) -> Result<Option<f64>> {
    if field.is_empty() {
        return Ok(None);
    }
    field
        .parse()
        .map(Some)
        .map_err(|_| Error::Harness(format!("{}: bad number '{field}'", path.display())))
}

/// Reads `metrics.csv`, or `val_metrics.csv` keeping only the last step.
pub fn read_metrics_csv(path: &Path) -> Result<Vec<MetricRow>> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Harness(format!("cannot read {}: {e}", path.display())))?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Harness(format!("{} is empty", path.display())))?;
    let with_step = match header.trim() {
        METRICS_HEADER => false,
        h if h == format!("step,{METRICS_HEADER}") => true,
        other => return Err(Error::Harness(format!("{}: unexpected header '{other}'", path.display()))),
    };
    let mut rows = Vec::new();
    let mut last_step = None;
    for line in lines.filter(|l| !l.trim().is_empty()) {
        let mut fields: Vec<&str> = line.split(',').collect();
        let step = if with_step {
            let s: u64 = fields
                .remove(0)
                .parse()
                .map_err(|_| Error::Harness(format!("{}: bad step in '{line}'", path.display())))?;
            Some(s)
        } else {
            None
        };
        if fields.len() != 4 {
            return Err(Error::Harness(format!("{}: malformed row '{line}'", path.display())));
        }
        if step != last_step {
            rows.clear();
            last_step = step;
        }
        rows.push(MetricRow {
            scenario: fields[0].to_string(),
            class: fields[1].to_string(),
            f1: parse_opt(fields[2], path)?,
            iou: parse_opt(fields[3], path)?,
        });
    }
    if rows.is_empty() {
        return Err(Error::Harness(format!("{} has no rows", path.display())));
    }
    Ok(rows)
}

fn pct(v: Option<f64>) -> String {
    v.map(|v| format!("{:.2}", 100.0 * v)).unwrap_or_else(|| "-".into())
}

/// Human-readable table: one line per scenario with per-class F1, mF1 and mIoU (percent).
pub fn metrics_table(rows: &[MetricRow]) -> String {
    let mut scenarios: Vec<&str> = Vec::new();
    let mut classes: Vec<&str> = Vec::new();
    for r in rows {
        if !scenarios.contains(&r.scenario.as_str()) {
            scenarios.push(&r.scenario);
        }
        if r.class != MEAN_ROW && !classes.contains(&r.class.as_str()) {
            classes.push(&r.class);
        }
    }
    let width = classes.iter().map(|c| c.len()).max().unwrap_or(0).max(8);
    let mut out = String::new();
    let _ = write!(out, "{:<14}", "scenario");
    for c in &classes {
        let _ = write!(out, " {c:>width$}");
    }
    let _ = writeln!(out, " {:>8} {:>8}", "mF1", "mIoU");
    for s in &scenarios {
        let _ = write!(out, "{s:<14}");
        let find = |class: &str| rows.iter().find(|r| r.scenario == *s && r.class == class);
        for c in &classes {
            let _ = write!(out, " {:>width$}", pct(find(c).and_then(|r| r.f1)));
        }
        let mean = find(MEAN_ROW);
        let _ = writeln!(
            out,
            " {:>8} {:>8}",
            pct(mean.and_then(|r| r.f1)),
            pct(mean.and_then(|r| r.iou))
        );
    }
    out
}

/// One compared score, in percent.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub scenario: String,
    /// Class name for per-class F1, or `mF1` / `mIoU`.
    pub metric: String,
    pub base: f64,
    pub new: f64,
    /// Relative change in percent; `None` when the base score is 0.
    pub relative: Option<f64>,
    pub pp: f64,
}

/// Matches rows by (scenario, class) and reports per-class F1, mF1 and mIoU deltas.
pub fn compare_reports(base: &[MetricRow], new: &[MetricRow]) -> Vec<ComparisonRow> {
    let mut out = Vec::new();
    for b in base {
        let Some(n) = new.iter().find(|n| n.scenario == b.scenario && n.class == b.class) else {
            continue;
        };
        let mut push = |metric: String, bv: Option<f64>, nv: Option<f64>| {
            if let (Some(bv), Some(nv)) = (bv, nv) {
                let (bv, nv) = (100.0 * bv, 100.0 * nv);
                out.push(ComparisonRow {
                    scenario: b.scenario.clone(),
                    metric,
                    base: bv,
                    new: nv,
                    relative: relative_delta(bv, nv).ok(),
                    pp: abs_delta_pp(bv, nv),
                });
            }
        };
        if b.class == MEAN_ROW {
            push("mF1".into(), b.f1, n.f1);
            push("mIoU".into(), b.iou, n.iou);
        } else {
            push(b.class.clone(), b.f1, n.f1);
        }
    }
    out
}

pub fn format_comparison(rows: &[ComparisonRow]) -> String {
    let width = rows.iter().map(|r| r.metric.len()).max().unwrap_or(0).max(6);
    let mut out = format!(
        "{:<14} {:<width$} {:>8} {:>8} {:>8} {:>10}\n",
        "scenario", "metric", "base", "new", "delta", "delta_pp"
    );
    for r in rows {
        let rel = r.relative.map(format_relative).unwrap_or_else(|| "n/a".into());
        let _ = writeln!(
            out,
            "{:<14} {:<width$} {:>8.2} {:>8.2} {:>8} {:>10}",
            r.scenario,
            r.metric,
            r.base,
            r.new,
            rel,
            format_pp(r.pp)
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(s: &str, c: &str, f1: f64, iou: f64) -> MetricRow {
        MetricRow {
            scenario: s.into(),
            class: c.into(),
            f1: Some(f1),
            iou: Some(iou),
        }
    }

    #[test]
    fn csv_roundtrip_and_last_step() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        let mut rows = vec![row("full", "car", 0.5467, 0.4), row("full", MEAN_ROW, 0.7, 0.6)];
        rows.push(MetricRow {
            f1: None,
            iou: None,
            ..row("full", "clutter", 0.0, 0.0)
        });
        write_metrics_csv(&path, &rows).unwrap();
        assert_eq!(read_metrics_csv(&path).unwrap(), rows);

        let val = dir.path().join("v.csv");
        fs::write(&val, "step,scenario,class,f1,iou\n1,full,car,0.1,0.1\n2,full,car,0.2,0.1\n").unwrap();
        let last = read_metrics_csv(&val).unwrap();
        assert_eq!(last, vec![row("full", "car", 0.2, 0.1)]);
        fs::write(&val, "step,scenario,class,f1,iou\n").unwrap();
        assert!(read_metrics_csv(&val).is_err());
    }

    #[test]
    fn comparison_formats_like_the_delta_columns() {
        let base = vec![row("full", "car", 0.5467, 0.4)];
        let new = vec![row("full", "car", 0.6107, 0.5)];
        let cmp = compare_reports(&base, &new);
        assert_eq!(cmp.len(), 1);
        assert_eq!(format_relative(cmp[0].relative.unwrap()), "+11.7%");
        assert!((cmp[0].pp - 6.4).abs() < 1e-9);
        let same = compare_reports(&base, &base);
        assert_eq!(same[0].relative, Some(0.0));
        assert_eq!(same[0].pp, 0.0);
        assert!(format_comparison(&cmp).contains("+11.7%"));
    }

    #[test]
    fn table_lists_every_scenario() {
        let rows = vec![
            row("full", "car", 0.5, 0.4),
            row("full", MEAN_ROW, 0.7, 0.6),
            row("missing_ndsm", "car", 0.3, 0.2),
            row("missing_ndsm", MEAN_ROW, 0.6, 0.5),
        ];
        let t = metrics_table(&rows);
        assert_eq!(t.lines().count(), 3);
        assert!(t.contains("missing_ndsm") && t.contains("70.00"));
    }
}
