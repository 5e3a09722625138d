use std::path::Path;

use fosep_core::{ContourResult, Experiment, Point};

use crate::output::{ce_figure, ce_table, num, RunArtifacts, Summary};
use crate::{load_config, CliError, Overrides};

struct Columns {
    s: Vec<f64>,
    command: Option<[Vec<f64>; 2]>,
}

fn read(path: &Path) -> Result<Columns, CliError> {
    let bad = |msg: String| CliError::Config(format!("{}: {msg}", path.display()));
    let mut r = csv::Reader::from_path(path).map_err(|e| bad(e.to_string()))?;
    let header = r.headers().map_err(|e| bad(e.to_string()))?.clone();
    let col = |name: &str| header.iter().position(|h| h.trim() == name);
    let s_col = col("s").ok_or_else(|| bad("no `s` column".into()))?;
    let cmd_cols = match (col("x_dm"), col("y_dm")) {
        (Some(x), Some(y)) => Some([x, y]),
        (None, None) => None,
        _ => return Err(bad("x_dm and y_dm must appear together".into())),
    };
    let mut s = Vec::new();
    let mut cmd = [Vec::new(), Vec::new()];
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        let field = |i: usize| -> Result<f64, CliError> {
            rec.get(i)
                .and_then(|v| v.trim().parse::<f64>().ok())
                .filter(|v| v.is_finite())
                .ok_or_else(|| bad(format!("row {}: column {} is not a finite number", line + 2, header.get(i).unwrap_or("?"))))
        };
        s.push(field(s_col)?);
        if let Some([x, y]) = cmd_cols {
            cmd[0].push(field(x)?);
            cmd[1].push(field(y)?);
        }
    }
    if s.is_empty() {
        return Err(bad("no data rows".into()));
    }
    if let Some(v) = s.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(bad(format!("s = {v} lies outside [0, 1]")));
    }
    Ok(Columns {
        s,
        command: cmd_cols.map(|_| cmd),
    })
}

/// Simulates the commands of `input` (or the desired positions when the file
/// has no command columns) and scores the result against the path.
pub fn simulate(o: &Overrides, input: &Path) -> Result<(), CliError> {
    let cfg = load_config(o)?;
    let exp = Experiment::new(cfg.clone())?;
    let cols = read(input)?;
    let start = exp.path.eval(0.0)?;
    let desired: Vec<Point> = cols.s.iter().map(|v| exp.path.eval(*v)).collect::<Result<_, _>>()?;
    let command = cols.command.unwrap_or_else(|| {
        [
            desired.iter().map(|p| p[0]).collect(),
            desired.iter().map(|p| p[1]).collect(),
        ]
    });
    for g in &exp.models {
        if !g.is_stable() {
            return Err(fosep_core::Error::Numerical(format!(
                "model has a pole of magnitude {} outside the unit circle",
                num(g.max_pole_magnitude())
            ))
            .into());
        }
    }
    let ax = exp.models[0].simulate_about(&command[0], start[0]);
    let ay = exp.models[1].simulate_about(&command[1], start[1]);
    let actual: Vec<Point> = ax.iter().zip(&ay).map(|(x, y)| [*x, *y]).collect();
    let ce = ContourResult::evaluate(&exp.path, &cols.s, &desired, &actual)?;
    let ts = cfg.sample_time;
    let cycle = cols
        .s
        .iter()
        .position(|v| *v >= 1.0 - cfg.eps_done)
        .unwrap_or(cols.s.len() - 1) as f64
        * ts;
    let summary = Summary {
        algorithm: "simulate".into(),
        cycle_time_s: cycle,
        compute_time_s: 0.0,
        max_ce_estimated_um: ce.max_estimated * 1e3,
        max_ce_simulated_um: ce.max_exact * 1e3,
    };
    let mut art = RunArtifacts::new();
    art.csv(o.out.join("ce.csv"), ce_table(ts, &ce.estimated, &ce.exact));
    art.csv(o.out.join("summary.csv"), summary.table());
    art.text(
        o.out.join("ce.svg"),
        ce_figure(&input.display().to_string(), ts, &ce.estimated, &ce.exact).render(),
    );
    art.write()?;
    summary.print();
    Ok(())
}
