use std::fmt::Write;

use fosep_core::{Suite, SuiteRow};

use crate::output::{ce_figure, num, Kinematics, Table};
use crate::plot::{Figure, Panel, Series};

pub fn slug(label: &str) -> String {
    let mut s = String::new();
    for c in label.chars() {
        if c.is_ascii_alphanumeric() {
            s.push(c.to_ascii_lowercase());
        } else if !s.ends_with('-') && !s.is_empty() {
            s.push('-');
        }
    }
    s.trim_end_matches('-').to_string()
}

fn opt(v: Option<f64>, digits: usize) -> String {
    v.map(|x| format!("{x:.digits$}")).unwrap_or_else(|| "-".into())
}

pub fn markdown(suite: Suite, rows: &[SuiteRow]) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# Comparison: {}\n", suite.name());
    let _ = writeln!(
        s,
        "| Case | Algorithm | Cycle time (s) | Reference (s) | Max est. CE (µm) | Max sim. CE (µm) | Reference CE (µm) | Compute (s) |"
    );
    let _ = writeln!(s, "|---|---|---:|---:|---:|---:|---:|---:|");
    for r in rows {
        let o = &r.outcome;
        let _ = writeln!(
            s,
            "| {} | {} | {:.3} | {} | {:.2} | {:.2} | {} | {:.3} |",
            o.label,
            o.algorithm.name(),
            o.cycle_time,
            opt(r.target_cycle_time, 2),
            o.max_ce_estimated_um(),
            o.max_ce_simulated_um(),
            opt(r.target_ce_um, 0),
            o.compute_seconds,
        );
    }
    let _ = writeln!(s, "\nCompute times are wall clock on this machine and not comparable across hosts.");
    s
}

pub fn table(rows: &[SuiteRow]) -> Table {
    let mut t = Table::new(&[
        "case",
        "algorithm",
        "cycle_time_s",
        "reference_cycle_time_s",
        "compute_time_s",
        "max_ce_estimated_um",
        "max_ce_simulated_um",
        "reference_ce_um",
    ]);
    let cell = |v: Option<f64>| v.map(num).unwrap_or_default();
    for r in rows {
        let o = &r.outcome;
        t.rows.push(vec![
            o.label.clone(),
            o.algorithm.name().into(),
            num(o.cycle_time),
            cell(r.target_cycle_time),
            num(o.compute_seconds),
            num(o.max_ce_estimated_um()),
            num(o.max_ce_simulated_um()),
            cell(r.target_ce_um),
        ]);
    }
    t
}

pub fn ce_overlay(suite: Suite, rows: &[SuiteRow]) -> Figure {
    let mut series = Vec::new();
    for r in rows {
        let ev = &r.outcome.evaluation;
        let f = ce_figure("", ev.sample_time, &ev.ce.estimated, &ev.ce.exact);
        let mut exact = f.panels.into_iter().next().unwrap().series.remove(1);
        exact.name = r.outcome.label.clone();
        series.push(exact);
    }
    Figure {
        title: format!("{}: simulated contour error", suite.name()),
        panels: vec![Panel {
            y_label: "contour error (µm)".into(),
            series,
        }],
    }
}

pub fn feedrate_overlay(suite: Suite, rows: &[SuiteRow]) -> Figure {
    let series = rows
        .iter()
        .map(|r| {
            let k = Kinematics::of(&r.outcome.evaluation);
            Series::new(&r.outcome.label, &k.t, k.feedrate)
        })
        .collect();
    Figure {
        title: format!("{}: feedrate", suite.name()),
        panels: vec![Panel {
            y_label: "feedrate (mm/s)".into(),
            series,
        }],
    }
}
