//! Path-based feedrate optimization over `q(s) = ṡ²`.
//!
//! Feedrate and acceleration limits are linear in `q`; jerk is handled by the
//! pseudo-jerk relaxation, which replaces one factor `√q` by a precomputed
//! upper bound `√q*`.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};

use crate::error::{ConstraintFamily, Error, Result};
use crate::geometry::Toolpath;
use crate::lp::{LpProblem, LpSolution};
use crate::splines::{basis_matrix, derivative_basis_matrix, sample_grid, KnotStyle, KnotVector};
use crate::trajgen::{KinematicLimits, TrajectoryProfile};

#[derive(Debug, Clone)]
pub struct PathLpSpec {
    pub path: Toolpath,
    pub limits: KinematicLimits,
    pub grid_points: usize,
    pub degree: usize,
    pub n_control: usize,
    pub knot_style: KnotStyle,
    pub include_jerk: bool,
    /// Upper-bound profile for the pseudo-jerk rows, sampled on the grid.
    /// When absent, [`solve_path_lp`] computes it from a jerk-free solve.
    pub q_star: Option<Vec<f64>>,
    pub sample_time: f64,
}

impl PathLpSpec {
    pub fn new(path: Toolpath, limits: KinematicLimits, sample_time: f64) -> Self {
        Self {
            path,
            limits,
            grid_points: 1001,
            degree: 5,
            n_control: 40,
            knot_style: KnotStyle::Clamped,
            include_jerk: true,
            q_star: None,
            sample_time,
        }
    }
}

/// The LP together with the basis matrices mapping control points to
/// `q`, `q'` and `q''` on the grid.
#[derive(Debug, Clone)]
pub struct PathLp {
    pub problem: LpProblem,
    pub grid: Vec<f64>,
    pub basis: [DMatrix<f64>; 3],
}

pub fn build_path_lp(spec: &PathLpSpec, include_jerk: bool) -> Result<PathLp> {
    let m = spec.grid_points;
    if m < 2 {
        return Err(Error::arg("path grid needs at least two points"));
    }
    let q_star = if include_jerk {
        let q = spec
            .q_star
            .as_ref()
            .ok_or_else(|| Error::arg("pseudo-jerk rows need a precomputed q* profile"))?;
        if q.len() != m {
            return Err(Error::arg(format!("q* has {} samples, grid has {m}", q.len())));
        }
        Some(q)
    } else {
        None
    };
    let knots = KnotVector::with_style(spec.knot_style, spec.n_control, spec.degree)?;
    let grid = sample_grid(&knots, m);
    let (lo, hi) = knots.domain();
    let s: Vec<f64> = grid.iter().map(|z| (z - lo) / (hi - lo)).collect();
    let b0 = basis_matrix(&knots, m)?.into_matrix();
    let b1 = derivative_basis_matrix(&knots, 1, m)?.into_matrix();
    let b2 = derivative_basis_matrix(&knots, 2, m)?.into_matrix();
    let np = spec.n_control;
    let ds = 1.0 / (m - 1) as f64;
    let len = spec.path.length();
    let lim = &spec.limits;

    let mut lp = LpProblem::new(np);
    lp.set_cost((0..np).map(|j| -b0.column(j).sum() * ds).collect())?;
    let first: Vec<(usize, f64)> = b0.row(0).iter().copied().enumerate().collect();
    let last: Vec<(usize, f64)> = b0.row(m - 1).iter().copied().enumerate().collect();
    lp.add_eq(&first, 0.0, ConstraintFamily::Endpoints)?;
    lp.add_eq(&last, 0.0, ConstraintFamily::Endpoints)?;

    for i in 0..m {
        let si = s[i];
        let d1 = spec.path.derivs(si, 1)?;
        let d2 = spec.path.derivs(si, 2)?;
        let d3 = spec.path.derivs(si, 3)?;
        let r0 = b0.row(i);
        let r1 = b1.row(i);
        let r2 = b2.row(i);

        let feed: Vec<f64> = r0.iter().map(|v| v * len * len).collect();
        lp.add_le_dense(&feed, lim.feedrate * lim.feedrate, ConstraintFamily::Feedrate)?;
        for axis in 0..2 {
            let acc: Vec<f64> = (0..np)
                .map(|j| d2[axis] * r0[j] + 0.5 * d1[axis] * r1[j])
                .collect();
            add_pair(&mut lp, &acc, lim.accel, ConstraintFamily::Acceleration)?;
        }
        if let Some(q) = q_star {
            let root = q[i].max(0.0).sqrt();
            for axis in 0..2 {
                let jerk: Vec<f64> = (0..np)
                    .map(|j| (d3[axis] * r0[j] + 1.5 * d2[axis] * r1[j] + 0.5 * d1[axis] * r2[j]) * root)
                    .collect();
                add_pair(&mut lp, &jerk, lim.jerk, ConstraintFamily::Jerk)?;
            }
        }
        let neg: Vec<f64> = r0.iter().map(|v| -v).collect();
        lp.add_le_dense(&neg, 0.0, ConstraintFamily::Nonnegativity)?;
    }
    Ok(PathLp {
        problem: lp,
        grid: s,
        basis: [b0, b1, b2],
    })
}

fn add_pair(lp: &mut LpProblem, row: &[f64], limit: f64, family: ConstraintFamily) -> Result<()> {
    let neg: Vec<f64> = row.iter().map(|v| -v).collect();
    lp.add_le_dense(row, limit, family)?;
    lp.add_le_dense(&neg, limit, family)
}

#[derive(Debug, Clone)]
pub struct PathLpOutcome {
    pub profile: TrajectoryProfile,
    pub grid: Vec<f64>,
    /// `q(s)` on the grid, clipped at zero.
    pub q: Vec<f64>,
    /// Time at each grid point.
    pub time: Vec<f64>,
    /// Final LP and its solution; the jerk-free phase when jerk is off.
    pub lp: PathLp,
    pub solution: LpSolution,
    pub compute_seconds: f64,
}

impl PathLpOutcome {
    pub fn cycle_time(&self) -> f64 {
        self.profile.cycle_time
    }
}

fn solve_phase(spec: &PathLpSpec, include_jerk: bool) -> Result<(PathLp, LpSolution, Vec<f64>)> {
    let lp = build_path_lp(spec, include_jerk)?;
    let sol = lp.problem.solve()?.into_result()?;
    let q: Vec<f64> = (&lp.basis[0] * DVector::from_column_slice(&sol.x))
        .iter()
        .map(|v| v.max(0.0))
        .collect();
    Ok((lp, sol, q))
}

/// Solves the path-based LP. With jerk requested and no `q*` supplied, a
/// jerk-free phase provides `q*` first.
pub fn solve_path_lp(spec: &PathLpSpec) -> Result<PathLpOutcome> {
    let started = Instant::now();
    let (lp, solution, q) = if spec.include_jerk {
        let mut spec = spec.clone();
        if spec.q_star.is_none() {
            spec.q_star = Some(solve_phase(&spec, false)?.2);
        }
        solve_phase(&spec, true)?
    } else {
        solve_phase(spec, false)?
    };
    let compute_seconds = started.elapsed().as_secs_f64();
    let time = reconstruct_time(&lp.grid, &q)?;
    let s = resample(&lp.grid, &q, &time, spec.sample_time);
    let total = *time.last().unwrap();
    let profile = TrajectoryProfile::from_s(&spec.path, spec.sample_time, s, total)?;
    Ok(PathLpOutcome {
        profile,
        grid: lp.grid.clone(),
        q,
        time,
        lp,
        solution,
        compute_seconds,
    })
}

/// `t(s_i)` from `Δt = 2Δs / (√q_i + √q_{i+1})`, which stays finite at rest
/// endpoints.
pub fn reconstruct_time(grid: &[f64], q: &[f64]) -> Result<Vec<f64>> {
    let mut t = vec![0.0; grid.len()];
    for i in 1..grid.len() {
        let denom = q[i - 1].max(0.0).sqrt() + q[i].max(0.0).sqrt();
        if denom <= 0.0 {
            return Err(Error::DegenerateStop(format!(
                "feedrate vanishes on [{}, {}]",
                grid[i - 1],
                grid[i]
            )));
        }
        t[i] = t[i - 1] + 2.0 * (grid[i] - grid[i - 1]) / denom;
    }
    Ok(t)
}

/// Samples `s(t)` every `ts`, treating `s̈` as constant on each grid interval
/// (so `q` is linear in `s` there, consistent with [`reconstruct_time`]).
pub fn resample(grid: &[f64], q: &[f64], time: &[f64], ts: f64) -> Vec<f64> {
    let total = *time.last().unwrap();
    let count = (total / ts - 1e-9).ceil().max(0.0) as usize;
    let mut out = Vec::with_capacity(count + 1);
    let mut i = 0;
    for k in 0..=count {
        let t = k as f64 * ts;
        if t >= total {
            out.push(1.0);
            continue;
        }
        while i + 2 < time.len() && time[i + 1] <= t {
            i += 1;
        }
        let tau = t - time[i];
        let v0 = q[i].max(0.0).sqrt();
        let acc = (q[i + 1] - q[i]) / (2.0 * (grid[i + 1] - grid[i]));
        let s = grid[i] + v0 * tau + 0.5 * acc * tau * tau;
        out.push(s.clamp(grid[i], grid[i + 1]));
    }
    out
}
