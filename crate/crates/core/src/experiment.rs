//! End-to-end runs: trajectory generation or optimization, then simulation of
//! the commands through the servo models and contour-error evaluation.

use std::time::Instant;

use crate::config::{Algorithm, ExperimentConfig};
use crate::contour::{estimate_ce, ContourResult};
use crate::dynamics::DiscreteTransferFunction;
use crate::error::{Error, Result};
use crate::fbs::{AxisCompensation, Compensator};
use crate::geometry::{Point, Toolpath};
use crate::opt_path::{solve_path_lp, PathLpSpec};
use crate::opt_time::{relinearize, ContourConstraint, TimeLpOutcome, TimeLpSpec};
use crate::trajgen::{tap_profile, KinematicLimits, TrajectoryProfile};

/// Commands and simulated response over the evaluated horizon.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub sample_time: f64,
    pub s: Vec<f64>,
    pub desired: [Vec<f64>; 2],
    pub command: [Vec<f64>; 2],
    pub actual: [Vec<f64>; 2],
    pub ce: ContourResult,
}

impl Evaluation {
    pub fn len(&self) -> usize {
        self.s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.s.is_empty()
    }
}

/// Outcome of one algorithm on one configuration.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub algorithm: Algorithm,
    pub label: String,
    /// Trajectory as planned, ending at the cycle time.
    pub profile: TrajectoryProfile,
    /// The trajectory followed by a dwell at the end point, as simulated.
    pub evaluation: Evaluation,
    pub cycle_time: f64,
    /// Wall clock of formulation and solve; machine dependent.
    pub compute_seconds: f64,
    /// Largest scaled LP row violation at the returned variables.
    pub lp_max_violation: Option<f64>,
    /// Largest estimated contour error of the linearized commands, mm.
    pub linearized_ce_max: Option<f64>,
    pub pass_cycle_times: Vec<f64>,
}

impl RunOutcome {
    pub fn max_ce_estimated_um(&self) -> f64 {
        self.evaluation.ce.max_estimated * 1e3
    }

    pub fn max_ce_simulated_um(&self) -> f64 {
        self.evaluation.ce.max_exact * 1e3
    }
}

/// Options for a time-based run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeRun {
    pub include_jerk: bool,
    pub ce_limit_mm: Option<f64>,
    pub sep: bool,
}

#[derive(Debug, Clone)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub path: Toolpath,
    pub models: [DiscreteTransferFunction; 2],
}

impl Experiment {
    pub fn new(config: ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let path = config.path.build()?;
        let models = config.servo_models()?;
        Ok(Self {
            config,
            path,
            models,
        })
    }

    fn start(&self) -> Point {
        self.path.point(0.0)
    }

    fn check_models(&self) -> Result<()> {
        for (axis, g) in ["x", "y"].iter().zip(&self.models) {
            if !g.is_stable() {
                return Err(Error::Numerical(format!(
                    "{axis}-axis model has a pole of magnitude {:.4} outside the unit circle; enable stabilize",
                    g.max_pole_magnitude()
                )));
            }
        }
        Ok(())
    }

    pub fn compensators(&self, rows: usize) -> Result<[Compensator; 2]> {
        let fx = &self.config.fbs.x;
        let fy = &self.config.fbs.y;
        Ok([
            Compensator::build(&self.models[0], rows, fx.n_control, fx.degree)?,
            Compensator::build(&self.models[1], rows, fy.n_control, fy.degree)?,
        ])
    }

    /// Simulates `s` through the models, shaping commands by `comp`.
    pub fn evaluate(&self, s: &[f64], comp: &[AxisCompensation; 2]) -> Result<Evaluation> {
        self.check_models()?;
        let start = self.start();
        let mut desired = [Vec::with_capacity(s.len()), Vec::with_capacity(s.len())];
        for &v in s {
            let p = self.path.eval(v.clamp(0.0, 1.0))?;
            desired[0].push(p[0]);
            desired[1].push(p[1]);
        }
        let command = [
            comp[0].command(&desired[0], start[0])?,
            comp[1].command(&desired[1], start[1])?,
        ];
        let actual = [
            self.models[0].simulate_about(&command[0], start[0]),
            self.models[1].simulate_about(&command[1], start[1]),
        ];
        let d: Vec<Point> = (0..s.len()).map(|k| [desired[0][k], desired[1][k]]).collect();
        let a: Vec<Point> = (0..s.len()).map(|k| [actual[0][k], actual[1][k]]).collect();
        let ce = ContourResult::evaluate(&self.path, s, &d, &a)?;
        Ok(Evaluation {
            sample_time: self.config.sample_time,
            s: s.to_vec(),
            desired,
            command,
            actual,
            ce,
        })
    }

    fn padded_s(&self, profile: &TrajectoryProfile) -> Vec<f64> {
        let mut s = profile.s.clone();
        s.resize(s.len() + (self.config.dwell * s.len() as f64).ceil() as usize, 1.0);
        s
    }

    pub fn run_tap(&self, limits: &KinematicLimits, label: &str) -> Result<RunOutcome> {
        let started = Instant::now();
        let mut profile = tap_profile(self.path.length(), limits, self.config.sample_time)?;
        profile.fill_positions(&self.path)?;
        let compute_seconds = started.elapsed().as_secs_f64();
        let s = self.padded_s(&profile);
        let evaluation = self.evaluate(&s, &identity())?;
        Ok(RunOutcome {
            algorithm: Algorithm::Tap,
            label: label.into(),
            cycle_time: profile.cycle_time,
            profile,
            evaluation,
            compute_seconds,
            lp_max_violation: None,
            linearized_ce_max: None,
            pass_cycle_times: Vec::new(),
        })
    }

    pub fn time_spec(&self, limits: &KinematicLimits, opts: TimeRun) -> Result<(TimeLpSpec, [AxisCompensation; 2])> {
        let cfg = &self.config;
        let init = cfg.limit_set(&cfg.init_limits)?;
        let mut spec = TimeLpSpec::from_tap(self.path.clone(), *limits, &init, cfg.sample_time, cfg.dwell)?;
        spec.degree = cfg.spline.degree;
        spec.n_control = cfg.spline.n_control;
        spec.knot_style = cfg.spline.knot_style;
        spec.include_jerk = opts.include_jerk;
        spec.eps_done = cfg.eps_done;
        if opts.sep || opts.ce_limit_mm.is_some() {
            self.check_models()?;
        }
        let comp = if opts.sep {
            let n = spec.horizon();
            if n > cfg.operator_cap {
                return Err(Error::MemoryCap {
                    size: n,
                    cap: cfg.operator_cap,
                });
            }
            let [cx, cy] = self.compensators(n)?;
            [AxisCompensation::Fbs(cx), AxisCompensation::Fbs(cy)]
        } else {
            identity()
        };
        if let Some(limit) = opts.ce_limit_mm {
            spec.contour = Some(ContourConstraint {
                limit,
                models: self.models.clone(),
                compensation: comp.clone(),
            });
        }
        Ok((spec, comp))
    }

    pub fn run_time(&self, limits: &KinematicLimits, opts: TimeRun, label: &str) -> Result<RunOutcome> {
        let started = Instant::now();
        let (spec, comp) = self.time_spec(limits, opts)?;
        let relin = relinearize(&spec, self.config.passes)?;
        let compute_seconds = started.elapsed().as_secs_f64();
        let out = relin.best;
        // The creep tail past the cycle index is executed as planned.
        let s = out.s_monotone.clone();
        let evaluation = self.evaluate(&s, &comp)?;
        let linearized_ce_max = match opts.ce_limit_mm {
            Some(_) => Some(self.linearized_ce(&out, &comp)?.iter().fold(0.0f64, |m, v| m.max(v.abs()))),
            None => None,
        };
        Ok(RunOutcome {
            algorithm: if opts.sep { Algorithm::FoSep } else { Algorithm::FoTime },
            label: label.into(),
            cycle_time: out.cycle_time(),
            lp_max_violation: Some(out.solution.max_violation),
            profile: out.profile,
            evaluation,
            compute_seconds,
            linearized_ce_max,
            pass_cycle_times: relin.cycle_times,
        })
    }

    /// Estimated contour error of the linearized commands `x̂`, `ŷ`, with the
    /// angle frozen at the linearization points; the quantity the LP bounds.
    pub fn linearized_ce(&self, out: &TimeLpOutcome, comp: &[AxisCompensation; 2]) -> Result<Vec<f64>> {
        let start = out.lp.start;
        let mut err = Vec::with_capacity(2);
        for axis in 0..2 {
            let x = &out.linearized[axis];
            let cmd = comp[axis].command(x, start[axis])?;
            let y = self.models[axis].simulate_about(&cmd, start[axis]);
            err.push(x.iter().zip(&y).map(|(a, b)| a - b).collect::<Vec<f64>>());
        }
        estimate_ce(&err[0], &err[1], &out.lp.theta)
    }

    pub fn run_path(&self, limits: &KinematicLimits, include_jerk: bool, label: &str) -> Result<RunOutcome> {
        let cfg = &self.config;
        let mut spec = PathLpSpec::new(self.path.clone(), *limits, cfg.sample_time);
        spec.grid_points = cfg.path_lp.grid_points;
        spec.degree = cfg.path_lp.degree;
        spec.n_control = cfg.path_lp.n_control;
        spec.include_jerk = include_jerk;
        let out = solve_path_lp(&spec)?;
        let s = self.padded_s(&out.profile);
        let evaluation = self.evaluate(&s, &identity())?;
        Ok(RunOutcome {
            algorithm: Algorithm::FoPath,
            label: label.into(),
            cycle_time: out.cycle_time(),
            lp_max_violation: Some(out.solution.max_violation),
            compute_seconds: out.compute_seconds,
            profile: out.profile,
            evaluation,
            linearized_ce_max: None,
            pass_cycle_times: Vec::new(),
        })
    }

    /// Runs the configured algorithm.
    pub fn run(&self) -> Result<RunOutcome> {
        let cfg = &self.config;
        let limits = cfg.limit_set(&cfg.limits)?;
        let alg = cfg.algorithm;
        match alg {
            Algorithm::Tap => self.run_tap(&limits, alg.name()),
            Algorithm::FoPath => self.run_path(&limits, cfg.include_jerk, alg.name()),
            Algorithm::FoTime | Algorithm::FoSep => self.run_time(
                &limits,
                TimeRun {
                    include_jerk: cfg.include_jerk,
                    ce_limit_mm: cfg.ce_limit_mm(),
                    sep: alg == Algorithm::FoSep,
                },
                alg.name(),
            ),
        }
    }
}

fn identity() -> [AxisCompensation; 2] {
    [AxisCompensation::Identity, AxisCompensation::Identity]
}

/// One row of a comparison table.
#[derive(Debug, Clone)]
pub struct SuiteRow {
    pub outcome: RunOutcome,
    /// Expected cycle time, s, when one is known.
    pub target_cycle_time: Option<f64>,
    /// Expected largest contour error, µm, when one is known.
    pub target_ce_um: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Table1,
    Table2,
    Fig9,
}

impl Suite {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "table1" => Ok(Suite::Table1),
            "table2" => Ok(Suite::Table2),
            "fig9" => Ok(Suite::Fig9),
            other => Err(Error::Config(format!(
                "unknown suite '{other}' (expected table1, table2 or fig9)"
            ))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Suite::Table1 => "table1",
            Suite::Table2 => "table2",
            Suite::Fig9 => "fig9",
        }
    }
}

fn row(outcome: RunOutcome, t: Option<f64>, ce: Option<f64>) -> SuiteRow {
    SuiteRow {
        outcome,
        target_cycle_time: t,
        target_ce_um: ce,
    }
}

impl Experiment {
    /// Time- and path-based LPs with and without jerk limits, conservative
    /// limits, no contour-error rows.
    pub fn table1(&self) -> Result<Vec<SuiteRow>> {
        let lim = self.config.limit_set("conservative")?;
        let t = |jerk| TimeRun {
            include_jerk: jerk,
            ce_limit_mm: None,
            sep: false,
        };
        Ok(vec![
            row(self.run_time(&lim, t(false), "time-based, no jerk")?, Some(1.13), None),
            row(self.run_path(&lim, false, "path-based, no jerk")?, Some(1.14), None),
            row(self.run_time(&lim, t(true), "time-based, jerk")?, Some(1.25), None),
            row(self.run_path(&lim, true, "path-based, jerk")?, Some(1.42), None),
        ])
    }

    /// Conservative and aggressive TAP against FO and FO+SEP under the
    /// configured contour-error limit, whether or not `enforce_ce` is set.
    pub fn table2(&self) -> Result<Vec<SuiteRow>> {
        let cons = self.config.limit_set("conservative")?;
        let aggr = self.config.limit_set("aggressive")?;
        let ce = self.config.ce_limit_um * 1e-3;
        let t = |sep| TimeRun {
            include_jerk: true,
            ce_limit_mm: Some(ce),
            sep,
        };
        Ok(vec![
            row(self.run_tap(&cons, "TAP conservative")?, None, Some(14.0)),
            row(self.run_tap(&aggr, "TAP aggressive")?, None, Some(30.0)),
            row(self.run_time(&aggr, t(false), "FO")?, Some(1.13), None),
            row(self.run_time(&aggr, t(true), "FO+SEP")?, Some(0.64), None),
        ])
    }

    /// Simulated contour error of the conservative and aggressive TAP.
    pub fn fig9(&self) -> Result<Vec<SuiteRow>> {
        let cons = self.config.limit_set("conservative")?;
        let aggr = self.config.limit_set("aggressive")?;
        Ok(vec![
            row(self.run_tap(&cons, "TAP conservative")?, None, Some(14.0)),
            row(self.run_tap(&aggr, "TAP aggressive")?, None, Some(30.0)),
        ])
    }

    pub fn suite(&self, suite: Suite) -> Result<Vec<SuiteRow>> {
        match suite {
            Suite::Table1 => self.table1(),
            Suite::Table2 => self.table2(),
            Suite::Fig9 => self.fig9(),
        }
    }
}
