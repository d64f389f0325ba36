//! Report files. Every writer is a pure function of its inputs, so equal
//! reports produce equal bytes.
//!
//! - `summary.csv`: `task_id,r_squared,r_squared_before,n_points,support_loss_before,support_loss_after,query_loss_before,query_loss_after`
//! - `scatter_task{id}.csv`: `true_flow,predicted_flow` in vehicles / hour
//! - `scatter_task{id}.svg`: scatter plot with the 45° reference line
//! - `meta_loss_history.csv`: `iteration,mean_query_loss,wall_time_s`
//! - `meta_loss.svg`: mean query loss per meta-iteration, log scale

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::MetaTestReport;
use crate::error::{Error, Result};
use crate::meta::{history_csv, HistoryEntry};

const SIZE: f64 = 480.0;
const MARGIN: f64 = 56.0;

pub fn summary_csv(report: &MetaTestReport) -> String {
    let mut out = String::from(
        "task_id,r_squared,r_squared_before,n_points,support_loss_before,support_loss_after,query_loss_before,query_loss_after\n",
    );
    for t in &report.per_task {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            t.task_id,
            t.r_squared,
            t.r_squared_before,
            t.n_points,
            t.support_loss_before,
            t.support_loss_after,
            t.query_loss_before,
            t.query_loss_after
        )
        .unwrap();
    }
    out
}

fn scatter_csv(points: &[(f64, f64)]) -> String {
    let mut out = String::from("true_flow,predicted_flow\n");
    for (t, p) in points {
        writeln!(out, "{t},{p}").unwrap();
    }
    out
}

fn svg_open(title: &str) -> String {
    let mut s = String::new();
    writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SIZE}" height="{SIZE}" viewBox="0 0 {SIZE} {SIZE}" font-family="sans-serif" font-size="12">"#
    )
    .unwrap();
    writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#).unwrap();
    writeln!(s, r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{title}</text>"#, SIZE / 2.0).unwrap();
    let lo = MARGIN;
    let hi = SIZE - MARGIN;
    writeln!(
        s,
        r#"<rect x="{lo}" y="{lo}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        hi - lo,
        hi - lo
    )
    .unwrap();
    s
}

fn axis_labels(s: &mut String, x_label: &str, y_label: &str, x_range: (String, String), y_range: (String, String)) {
    let lo = MARGIN;
    let hi = SIZE - MARGIN;
    let mid = SIZE / 2.0;
    writeln!(s, r#"<text x="{mid}" y="{}" text-anchor="middle">{x_label}</text>"#, SIZE - 12.0).unwrap();
    writeln!(
        s,
        r#"<text x="16" y="{mid}" text-anchor="middle" transform="rotate(-90 16 {mid})">{y_label}</text>"#
    )
    .unwrap();
    writeln!(s, r#"<text x="{lo}" y="{}" text-anchor="middle">{}</text>"#, hi + 16.0, x_range.0).unwrap();
    writeln!(s, r#"<text x="{hi}" y="{}" text-anchor="middle">{}</text>"#, hi + 16.0, x_range.1).unwrap();
    writeln!(s, r#"<text x="{}" y="{hi}" text-anchor="end">{}</text>"#, lo - 4.0, y_range.0).unwrap();
    writeln!(s, r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#, lo - 4.0, lo + 4.0, y_range.1).unwrap();
}

/// Predicted against true flow with the 45° line; both axes share one scale.
pub fn scatter_svg(task_id: usize, r_squared: f64, points: &[(f64, f64)]) -> String {
    let max = points
        .iter()
        .flat_map(|&(t, p)| [t, p])
        .filter(|v| v.is_finite())
        .fold(0.0_f64, f64::max)
        .max(1.0);
    let lo = MARGIN;
    let span = SIZE - 2.0 * MARGIN;
    let px = |v: f64| lo + v.clamp(0.0, max) / max * span;
    let py = |v: f64| SIZE - MARGIN - v.clamp(0.0, max) / max * span;

    let mut s = svg_open(&format!("task {task_id}, R² = {r_squared:.3}"));
    axis_labels(
        &mut s,
        "true flow (veh/h)",
        "predicted flow (veh/h)",
        ("0".into(), format!("{max:.0}")),
        ("0".into(), format!("{max:.0}")),
    );
    writeln!(
        s,
        r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="red" stroke-dasharray="4 3"/>"#,
        px(0.0),
        py(0.0),
        px(max),
        py(max)
    )
    .unwrap();
    s.push_str(r#"<g fill="steelblue" fill-opacity="0.5">"#);
    s.push('\n');
    for &(t, p) in points.iter().filter(|(t, p)| t.is_finite() && p.is_finite()) {
        writeln!(s, r#"<circle cx="{:.2}" cy="{:.2}" r="2"/>"#, px(t), py(p)).unwrap();
    }
    s.push_str("</g>\n</svg>\n");
    s
}

/// Mean query loss per meta-iteration on a log-scaled axis.
pub fn loss_svg(history: &[HistoryEntry]) -> String {
    let losses: Vec<(usize, f64)> = history
        .iter()
        .filter(|h| h.mean_query_loss.is_finite() && h.mean_query_loss > 0.0)
        .map(|h| (h.iteration, h.mean_query_loss))
        .collect();
    let mut s = svg_open("meta-training query loss");
    if losses.is_empty() {
        s.push_str("</svg>\n");
        return s;
    }
    let first = losses[0].0 as f64;
    let last = (losses[losses.len() - 1].0 as f64).max(first + 1.0);
    let (lmin, lmax) = losses
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &(_, l)| (a.min(l.log10()), b.max(l.log10())));
    let (lmin, lmax) = if lmax - lmin < 1e-12 { (lmin - 0.5, lmax + 0.5) } else { (lmin, lmax) };
    let span = SIZE - 2.0 * MARGIN;
    let px = |i: usize| MARGIN + (i as f64 - first) / (last - first) * span;
    let py = |l: f64| SIZE - MARGIN - (l.log10() - lmin) / (lmax - lmin) * span;
    axis_labels(
        &mut s,
        "meta-iteration",
        "mean query loss",
        (format!("{first:.0}"), format!("{last:.0}")),
        (format!("{:.1e}", 10f64.powf(lmin)), format!("{:.1e}", 10f64.powf(lmax))),
    );
    s.push_str(r#"<polyline fill="none" stroke="steelblue" points=""#);
    for (k, &(i, l)) in losses.iter().enumerate() {
        if k > 0 {
            s.push(' ');
        }
        write!(s, "{:.2},{:.2}", px(i), py(l)).unwrap();
    }
    s.push_str("\"/>\n</svg>\n");
    s
}

fn write(dir: &Path, name: &str, body: &str, written: &mut Vec<PathBuf>) -> Result<()> {
    let path = dir.join(name);
    std::fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
    written.push(path);
    Ok(())
}

/// Writes all report files into `out_dir`, creating it if needed, and
/// returns their paths in write order.
pub fn write_report(report: &MetaTestReport, history: &[HistoryEntry], out_dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = out_dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    write(dir, "summary.csv", &summary_csv(report), &mut written)?;
    for (task, points) in report.per_task.iter().zip(&report.scatter) {
        let id = task.task_id;
        write(dir, &format!("scatter_task{id}.csv"), &scatter_csv(points), &mut written)?;
        write(dir, &format!("scatter_task{id}.svg"), &scatter_svg(id, task.r_squared, points), &mut written)?;
    }
    write(dir, "meta_loss_history.csv", &history_csv(history), &mut written)?;
    write(dir, "meta_loss.svg", &loss_svg(history), &mut written)?;
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::TaskReport;

    fn task(id: usize) -> TaskReport {
        TaskReport {
            task_id: id,
            r_squared: 0.9,
            r_squared_before: 0.5,
            n_points: 2,
            support_loss_before: 0.2,
            support_loss_after: 0.1,
            query_loss_before: 0.3,
            query_loss_after: 0.15,
            support_ods: vec![1],
            query_ods: vec![2],
        }
    }

    fn history() -> Vec<HistoryEntry> {
        (0..5)
            .map(|i| HistoryEntry {
                iteration: i,
                mean_query_loss: 0.1 / (i + 1) as f64,
                wall_time_s: 0.0,
            })
            .collect()
    }

    #[test]
    fn empty_report_writes_header_only_summary() {
        let dir = tempfile::tempdir().unwrap();
        let files = write_report(&MetaTestReport::default(), &[], dir.path()).unwrap();
        assert_eq!(files.len(), 3);
        let summary = std::fs::read_to_string(dir.path().join("summary.csv")).unwrap();
        assert_eq!(summary.lines().count(), 1);
    }

    #[test]
    fn three_tasks_give_three_scatters_and_deterministic_bytes() {
        let report = MetaTestReport {
            per_task: vec![task(47), task(248), task(293)],
            scatter: vec![vec![(0.0, 0.0), (100.0, 90.0)]; 3],
        };
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let fa = write_report(&report, &history(), a.path()).unwrap();
        write_report(&report, &history(), b.path()).unwrap();
        let csvs = fa.iter().filter(|p| p.to_string_lossy().contains("scatter_task") && p.extension().unwrap() == "csv");
        assert_eq!(csvs.count(), 3);
        assert!(a.path().join("scatter_task248.svg").exists());
        for f in &fa {
            let name = f.file_name().unwrap();
            assert_eq!(std::fs::read(f).unwrap(), std::fs::read(b.path().join(name)).unwrap());
        }
        let summary = std::fs::read_to_string(a.path().join("summary.csv")).unwrap();
        assert_eq!(summary.lines().count(), 4);
        assert!(summary.lines().nth(1).unwrap().starts_with("47,0.9,0.5,2,"));
    }

    #[test]
    fn scatter_svg_has_reference_line_and_points() {
        let svg = scatter_svg(1, 0.8, &[(0.0, 0.0), (50.0, 40.0), (f64::NAN, 1.0)]);
        assert!(svg.contains("<line"));
        assert_eq!(svg.matches("<circle").count(), 2);
        assert!(svg.trim_end().ends_with("</svg>"));
    }

    #[test]
    fn unwritable_directory_is_an_io_error() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("occupied");
        std::fs::write(&file, "x").unwrap();
        assert!(matches!(write_report(&MetaTestReport::default(), &[], &file), Err(Error::Io { .. })));
    }
}
