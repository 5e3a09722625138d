use std::fs;
use std::path::{Path, PathBuf};

use fosep_core::experiment::Evaluation;
use fosep_core::trajgen::backward_difference;
use fosep_core::RunOutcome;

use crate::plot::{Figure, Panel, Series};
use crate::CliError;

/// Twelve significant digits, plain notation for moderate magnitudes and
/// scientific otherwise. Output depends only on the value.
pub fn num(v: f64) -> String {
    if v == 0.0 || !v.is_finite() {
        return if v.is_nan() { "nan".into() } else if v == 0.0 { "0".into() } else { format!("{v}") };
    }
    let sci = format!("{:.11e}", v);
    let exp: i32 = sci[sci.find('e').unwrap() + 1..].parse().unwrap();
    if (-5..12).contains(&exp) {
        let fixed = format!("{:.*}", (11 - exp) as usize, v);
        trim_zeros(&fixed)
    } else {
        let (mant, e) = sci.split_at(sci.find('e').unwrap());
        format!("{}{}", trim_zeros(mant), e)
    }
}

fn trim_zeros(s: &str) -> String {
    if !s.contains('.') {
        return s.to_string();
    }
    let t = s.trim_end_matches('0');
    t.trim_end_matches('.').to_string()
}

/// Rows of a CSV file with a header, written in one go.
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Self {
            header: header.iter().map(|h| h.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push_numbers(&mut self, values: &[f64]) {
        self.rows.push(values.iter().map(|v| num(*v)).collect());
    }

    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_path(path)
            .map_err(|e| CliError::io(path, e))?;
        w.write_record(&self.header).map_err(|e| CliError::io(path, e))?;
        for r in &self.rows {
            w.write_record(r).map_err(|e| CliError::io(path, e))?;
        }
        w.flush().map_err(|e| CliError::io(path, e))
    }
}

pub struct Summary {
    pub algorithm: String,
    pub cycle_time_s: f64,
    pub compute_time_s: f64,
    pub max_ce_estimated_um: f64,
    pub max_ce_simulated_um: f64,
}

impl Summary {
    pub fn from_outcome(o: &RunOutcome) -> Self {
        Self {
            algorithm: o.algorithm.name().into(),
            cycle_time_s: o.cycle_time,
            compute_time_s: o.compute_seconds,
            max_ce_estimated_um: o.max_ce_estimated_um(),
            max_ce_simulated_um: o.max_ce_simulated_um(),
        }
    }

    pub fn table(&self) -> Table {
        let mut t = Table::new(&[
            "algorithm",
            "cycle_time_s",
            "compute_time_s",
            "max_ce_estimated_um",
            "max_ce_simulated_um",
        ]);
        t.rows.push(vec![
            self.algorithm.clone(),
            num(self.cycle_time_s),
            num(self.compute_time_s),
            num(self.max_ce_estimated_um),
            num(self.max_ce_simulated_um),
        ]);
        t
    }

    pub fn print(&self) {
        println!("algorithm            {}", self.algorithm);
        println!("cycle_time_s         {}", num(self.cycle_time_s));
        println!("compute_time_s       {} (machine dependent)", num(self.compute_time_s));
        println!("max_ce_estimated_um  {}", num(self.max_ce_estimated_um));
        println!("max_ce_simulated_um  {}", num(self.max_ce_simulated_um));
    }
}

/// Desired-trajectory kinematics of an evaluation, by backward differences.
pub struct Kinematics {
    pub t: Vec<f64>,
    pub feedrate: Vec<f64>,
    pub a: [Vec<f64>; 2],
    pub j: [Vec<f64>; 2],
}

impl Kinematics {
    pub fn of(ev: &Evaluation) -> Self {
        let dt = ev.sample_time;
        let [x, y] = &ev.desired;
        let vx = backward_difference(x, 1, dt);
        let vy = backward_difference(y, 1, dt);
        Self {
            t: (0..ev.len()).map(|k| k as f64 * dt).collect(),
            feedrate: vx.iter().zip(&vy).map(|(a, b)| a.hypot(*b)).collect(),
            a: [backward_difference(x, 2, dt), backward_difference(y, 2, dt)],
            j: [backward_difference(x, 3, dt), backward_difference(y, 3, dt)],
        }
    }
}

pub fn trajectory_table(ev: &Evaluation) -> Table {
    let k = Kinematics::of(ev);
    let mut t = Table::new(&[
        "t", "s", "x_d", "y_d", "x_dm", "y_dm", "feedrate", "ax", "ay", "jx", "jy",
    ]);
    for i in 0..ev.len() {
        t.push_numbers(&[
            k.t[i],
            ev.s[i],
            ev.desired[0][i],
            ev.desired[1][i],
            ev.command[0][i],
            ev.command[1][i],
            k.feedrate[i],
            k.a[0][i],
            k.a[1][i],
            k.j[0][i],
            k.j[1][i],
        ]);
    }
    t
}

/// Contour error in mm, as computed; the summary reports the same maxima in µm.
pub fn ce_table(sample_time: f64, estimated: &[f64], exact: &[f64]) -> Table {
    let mut t = Table::new(&["t", "ce_estimated", "ce_exact"]);
    for (i, (e, x)) in estimated.iter().zip(exact).enumerate() {
        t.push_numbers(&[i as f64 * sample_time, *e, *x]);
    }
    t
}

pub fn ce_figure(title: &str, sample_time: f64, estimated: &[f64], exact: &[f64]) -> Figure {
    let t: Vec<f64> = (0..estimated.len()).map(|k| k as f64 * sample_time).collect();
    let um = |v: &[f64]| v.iter().map(|x| x * 1e3).collect::<Vec<f64>>();
    Figure {
        title: title.into(),
        panels: vec![Panel {
            y_label: "contour error (µm)".into(),
            series: vec![
                Series::new("estimated", &t, um(estimated)),
                Series::new("exact", &t, um(exact)),
            ],
        }],
    }
}

pub fn kinematics_figure(title: &str, ev: &Evaluation) -> Figure {
    let k = Kinematics::of(ev);
    let si = |v: &[f64]| v.iter().map(|x| x * 1e-3).collect::<Vec<f64>>();
    Figure {
        title: title.into(),
        panels: vec![
            Panel {
                y_label: "feedrate (mm/s)".into(),
                series: vec![Series::new("feedrate", &k.t, k.feedrate.clone())],
            },
            Panel {
                y_label: "acceleration (m/s²)".into(),
                series: vec![
                    Series::new("x", &k.t, si(&k.a[0])),
                    Series::new("y", &k.t, si(&k.a[1])),
                ],
            },
            Panel {
                y_label: "jerk (m/s³)".into(),
                series: vec![
                    Series::new("x", &k.t, si(&k.j[0])),
                    Series::new("y", &k.t, si(&k.j[1])),
                ],
            },
        ],
    }
}

/// Everything `run` writes for one outcome, rendered in memory first so that
/// nothing reaches the disk when a later step fails.
pub struct RunArtifacts {
    files: Vec<(PathBuf, Artifact)>,
}

enum Artifact {
    Csv(Table),
    Text(String),
}

impl RunArtifacts {
    pub fn new() -> Self {
        Self { files: Vec::new() }
    }

    pub fn outcome(&mut self, dir: &Path, o: &RunOutcome) {
        let ev = &o.evaluation;
        self.csv(dir.join("trajectory.csv"), trajectory_table(ev));
        self.csv(
            dir.join("ce.csv"),
            ce_table(ev.sample_time, &ev.ce.estimated, &ev.ce.exact),
        );
        self.csv(dir.join("summary.csv"), Summary::from_outcome(o).table());
        self.text(dir.join("kinematics.svg"), kinematics_figure(&o.label, ev).render());
        self.text(
            dir.join("ce.svg"),
            ce_figure(&o.label, ev.sample_time, &ev.ce.estimated, &ev.ce.exact).render(),
        );
    }

    pub fn csv(&mut self, path: PathBuf, t: Table) {
        self.files.push((path, Artifact::Csv(t)));
    }

    pub fn text(&mut self, path: PathBuf, s: String) {
        self.files.push((path, Artifact::Text(s)));
    }

    pub fn write(self) -> Result<Vec<PathBuf>, CliError> {
        let mut written = Vec::with_capacity(self.files.len());
        for (path, a) in self.files {
            if let Some(parent) = path.parent() {
                fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
            }
            match a {
                Artifact::Csv(t) => t.write(&path)?,
                Artifact::Text(s) => fs::write(&path, s).map_err(|e| CliError::io(&path, e))?,
            }
            written.push(path);
        }
        Ok(written)
    }
}
