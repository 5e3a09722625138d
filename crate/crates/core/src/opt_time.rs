//! Time-based feedrate optimization.
//!
//! The path parameter is a B-spline in normalized time, `s = N_s p_s`, and the
//! commanded positions are linearized about a reference `s^e(k)`, so feedrate,
//! acceleration, jerk and contour-error limits are all linear in `p_s`.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};

use crate::contour::tangent_angles;
use crate::dynamics::DiscreteTransferFunction;
use crate::error::{ConstraintFamily, Error, Result};
use crate::fbs::{filter_columns, AxisCompensation};
use crate::geometry::Toolpath;
use crate::lp::{LpProblem, LpSolution};
use crate::splines::{basis_matrix, KnotStyle, KnotVector};
use crate::trajgen::{tap_profile, KinematicLimits, TrajectoryProfile};

/// Threshold for "path finished": the first sample with `s ≥ 1 − EPS_DONE`.
pub const EPS_DONE: f64 = 1e-5;
/// Dwell appended to the initializing trajectory, as a fraction of its length.
pub const DEFAULT_DWELL: f64 = 0.1;

/// Servo models and command shaping for the contour-error rows.
#[derive(Debug, Clone)]
pub struct ContourConstraint {
    /// Limit on the estimated contour error, mm.
    pub limit: f64,
    pub models: [DiscreteTransferFunction; 2],
    pub compensation: [AxisCompensation; 2],
}

#[derive(Debug, Clone)]
pub struct TimeLpSpec {
    pub path: Toolpath,
    pub limits: KinematicLimits,
    pub sample_time: f64,
    pub degree: usize,
    pub n_control: usize,
    pub knot_style: KnotStyle,
    /// Linearization points `s^e(k)`; their count fixes the horizon `N`.
    pub linearization: Vec<f64>,
    pub include_jerk: bool,
    pub contour: Option<ContourConstraint>,
    pub eps_done: f64,
}

impl TimeLpSpec {
    /// Spec linearized about a TAP trajectory generated with `init` limits
    /// and extended by a dwell of `dwell` times its length.
    pub fn from_tap(
        path: Toolpath,
        limits: KinematicLimits,
        init: &KinematicLimits,
        sample_time: f64,
        dwell: f64,
    ) -> Result<Self> {
        let mut tap = tap_profile(path.length(), init, sample_time)?;
        tap.pad_dwell(dwell);
        Ok(Self {
            path,
            limits,
            sample_time,
            degree: 5,
            n_control: 40,
            knot_style: KnotStyle::Clamped,
            linearization: tap.s,
            include_jerk: true,
            contour: None,
            eps_done: EPS_DONE,
        })
    }

    pub fn horizon(&self) -> usize {
        self.linearization.len()
    }

    fn validate(&self) -> Result<()> {
        let se = &self.linearization;
        let n = se.len();
        if n < self.n_control {
            return Err(Error::RankDeficient(format!(
                "{n} samples cannot determine {} control points",
                self.n_control
            )));
        }
        if se[0].abs() > 1e-9 || (se[n - 1] - 1.0).abs() > 1e-9 {
            return Err(Error::arg("linearization must start at s = 0 and end at s = 1"));
        }
        if se.windows(2).any(|w| w[1] < w[0]) || se.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::arg("linearization must be monotone within [0, 1]"));
        }
        if !(self.sample_time > 0.0) {
            return Err(Error::arg("sample time must be positive"));
        }
        if let Some(c) = &self.contour {
            if !(c.limit > 0.0 && c.limit.is_finite()) {
                return Err(Error::arg(format!(
                    "contour error limit must be positive, got {}",
                    c.limit
                )));
            }
        }
        Ok(())
    }
}

/// Affine per-axis maps `x̂(k) = a_x(k) s(k) + b_x(k)`, exact at `s = s^e(k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linearization {
    pub slope: [Vec<f64>; 2],
    pub offset: [Vec<f64>; 2],
}

impl Linearization {
    pub fn eval(&self, axis: usize, s: &[f64]) -> Vec<f64> {
        s.iter()
            .zip(&self.slope[axis])
            .zip(&self.offset[axis])
            .map(|((s, a), b)| a * s + b)
            .collect()
    }
}

pub fn linearize_path(path: &Toolpath, se: &[f64]) -> Result<Linearization> {
    let mut slope = [Vec::with_capacity(se.len()), Vec::with_capacity(se.len())];
    let mut offset = [Vec::with_capacity(se.len()), Vec::with_capacity(se.len())];
    // slopes at rounding level (e.g. sin 2π) are zeroed so their rows vanish
    let floor = 1e-12 * path.length();
    for &s in se {
        let s = s.clamp(0.0, 1.0);
        let p = path.eval(s)?;
        let d = path.derivs(s, 1)?.map(|v| if v.abs() < floor { 0.0 } else { v });
        for axis in 0..2 {
            slope[axis].push(d[axis]);
            offset[axis].push(p[axis] - d[axis] * s);
        }
    }
    Ok(Linearization { slope, offset })
}

/// Backward-difference stencils of orders 1 to 3.
const STENCILS: [&[f64]; 3] = [&[1.0, -1.0], &[1.0, -2.0, 1.0], &[1.0, -3.0, 3.0, -1.0]];

/// Rows of `D^r M` and `D^r c` with samples before `k = 0` replaced by `k = 0`.
fn difference_rows(m: &DMatrix<f64>, c: &[f64], order: usize, k: usize) -> (Vec<f64>, f64) {
    let mut row = vec![0.0; m.ncols()];
    let mut constant = 0.0;
    for (i, w) in STENCILS[order - 1].iter().enumerate() {
        let idx = k.saturating_sub(i);
        for (j, r) in row.iter_mut().enumerate() {
            *r += w * m[(idx, j)];
        }
        constant += w * c[idx];
    }
    (row, constant)
}

/// Box implied for the control points by `0 ≤ s ≤ 1`: `p = N_s⁺ s` because
/// `N_s` has full column rank. The LP rows keep `s` in `[0, 1]`, so the box
/// never cuts the feasible set; it lets redundant rows be recognized.
pub fn implied_bounds(basis: &DMatrix<f64>) -> Result<Vec<(f64, f64)>> {
    let pinv = basis
        .clone()
        .pseudo_inverse(1e-12)
        .map_err(|e| Error::Numerical(format!("basis pseudo-inverse: {e}")))?;
    let slack = 1e-9;
    Ok(pinv
        .row_iter()
        .map(|r| {
            let lo: f64 = r.iter().filter(|v| **v < 0.0).sum();
            let hi: f64 = r.iter().filter(|v| **v > 0.0).sum();
            (lo - slack, hi + slack)
        })
        .collect())
}

/// Everything needed to solve and audit one time-based LP.
#[derive(Debug, Clone)]
pub struct TimeLp {
    pub problem: LpProblem,
    pub basis: DMatrix<f64>,
    pub linearization: Linearization,
    /// Tangent angle at the linearization points.
    pub theta: Vec<f64>,
    pub start: [f64; 2],
}

pub fn build_time_lp(spec: &TimeLpSpec) -> Result<TimeLp> {
    spec.validate()?;
    let n = spec.horizon();
    let np = spec.n_control;
    let ts = spec.sample_time;
    let len = spec.path.length();
    let knots = KnotVector::with_style(spec.knot_style, np, spec.degree)?;
    let basis = basis_matrix(&knots, n)?.into_matrix();
    let lin = linearize_path(&spec.path, &spec.linearization)?;
    let start = spec.path.eval(0.0)?;

    let mut lp = LpProblem::new(np);
    let cost: Vec<f64> = (0..np).map(|j| -basis.column(j).sum() / n as f64).collect();
    lp.set_cost(cost)?;
    for (j, (lo, hi)) in implied_bounds(&basis)?.into_iter().enumerate() {
        lp.set_bounds(j, lo, hi)?;
    }

    let first: Vec<(usize, f64)> = basis.row(0).iter().copied().enumerate().collect();
    let last: Vec<(usize, f64)> = basis.row(n - 1).iter().copied().enumerate().collect();
    lp.add_eq(&first, 0.0, ConstraintFamily::Endpoints)?;
    lp.add_eq(&last, 1.0, ConstraintFamily::Endpoints)?;

    for k in 1..n {
        let diff: Vec<f64> = (0..np).map(|j| basis[(k, j)] - basis[(k - 1, j)]).collect();
        let neg: Vec<f64> = diff.iter().map(|v| -v).collect();
        lp.add_le_dense(&neg, 0.0, ConstraintFamily::Monotonicity)?;
        let feed: Vec<f64> = diff.iter().map(|v| v * len / ts).collect();
        lp.add_le_dense(&feed, spec.limits.feedrate, ConstraintFamily::Feedrate)?;
    }

    let axis_maps: Vec<(DMatrix<f64>, &Vec<f64>)> = (0..2)
        .map(|axis| {
            let m = DMatrix::from_fn(n, np, |k, j| lin.slope[axis][k] * basis[(k, j)]);
            (m, &lin.offset[axis])
        })
        .collect();

    let mut kinematic = vec![(2, spec.limits.accel, ConstraintFamily::Acceleration)];
    if spec.include_jerk {
        kinematic.push((3, spec.limits.jerk, ConstraintFamily::Jerk));
    }
    for (order, limit, family) in kinematic {
        let scale = ts.powi(order as i32);
        for (m, c) in &axis_maps {
            for k in 0..n {
                let (row, constant) = difference_rows(m, c, order, k);
                // |D x̂| / Ts^r ≤ limit, multiplied through by Ts^r
                let neg: Vec<f64> = row.iter().map(|v| -v).collect();
                lp.add_le_dense(&row, limit * scale - constant, family)?;
                lp.add_le_dense(&neg, limit * scale + constant, family)?;
            }
        }
    }

    let theta = tangent_angles(&spec.path, &spec.linearization)?;
    if let Some(ce) = &spec.contour {
        let mut err_m = Vec::with_capacity(2);
        let mut err_c = Vec::with_capacity(2);
        for axis in 0..2 {
            let (m, c) = &axis_maps[axis];
            let dev = DVector::from_iterator(n, c.iter().map(|v| v - start[axis]));
            let dev = DMatrix::from_column_slice(n, 1, dev.as_slice());
            // (I - G C) applied to the linear part and to the offset
            let mc = filter_columns(&ce.models[axis], &ce.compensation[axis].apply_columns(m)?);
            let dc = filter_columns(&ce.models[axis], &ce.compensation[axis].apply_columns(&dev)?);
            err_m.push(m - mc);
            err_c.push(dev - dc);
        }
        for k in 0..n {
            let (sn, cs) = theta[k].sin_cos();
            let row: Vec<f64> = (0..np)
                .map(|j| -sn * err_m[0][(k, j)] + cs * err_m[1][(k, j)])
                .collect();
            let constant = -sn * err_c[0][(k, 0)] + cs * err_c[1][(k, 0)];
            let neg: Vec<f64> = row.iter().map(|v| -v).collect();
            lp.add_le_dense(&row, ce.limit - constant, ConstraintFamily::ContourError)?;
            lp.add_le_dense(&neg, ce.limit + constant, ConstraintFamily::ContourError)?;
        }
    }

    Ok(TimeLp {
        problem: lp,
        basis,
        linearization: lin,
        theta,
        start,
    })
}

#[derive(Debug, Clone)]
pub struct TimeLpOutcome {
    /// Commands regenerated through the exact path, trimmed at the cycle end.
    pub profile: TrajectoryProfile,
    /// `s = N_s p_s` over the whole horizon.
    pub s_full: Vec<f64>,
    /// `s_full` clamped to `[0, 1]` and made non-decreasing; what is executed.
    pub s_monotone: Vec<f64>,
    pub control: Vec<f64>,
    /// Linearized commands `x̂`, `ŷ` over the whole horizon.
    pub linearized: [Vec<f64>; 2],
    pub lp: TimeLp,
    pub solution: LpSolution,
    pub cycle_index: usize,
    pub compute_seconds: f64,
}

impl TimeLpOutcome {
    pub fn cycle_time(&self) -> f64 {
        self.profile.cycle_time
    }
}

/// First index with `s ≥ 1 − eps`.
pub fn completion_index(s: &[f64], eps: f64) -> Option<usize> {
    s.iter().position(|v| *v >= 1.0 - eps)
}

pub fn solve_time_lp(spec: &TimeLpSpec) -> Result<TimeLpOutcome> {
    let started = Instant::now();
    let lp = build_time_lp(spec)?;
    let solution = lp.problem.solve()?.into_result()?;
    let compute_seconds = started.elapsed().as_secs_f64();
    let control = solution.x.clone();
    let s_full: Vec<f64> = (&lp.basis * DVector::from_column_slice(&control))
        .iter()
        .copied()
        .collect();
    let linearized = [
        lp.linearization.eval(0, &s_full),
        lp.linearization.eval(1, &s_full),
    ];
    let cycle_index = completion_index(&s_full, spec.eps_done).ok_or_else(|| {
        Error::Numerical(format!(
            "optimized s never reaches 1 - {} within the horizon",
            spec.eps_done
        ))
    })?;
    // A running max removes solver-tolerance dips. The last kept sample is
    // left where the solver put it; forcing it to 1 would add a jerk spike.
    let mut hi = 0.0f64;
    let mut s_monotone: Vec<f64> = s_full
        .iter()
        .map(|v| {
            hi = hi.max(v.clamp(0.0, 1.0));
            hi
        })
        .collect();
    s_monotone[0] = 0.0;
    let profile = TrajectoryProfile::from_s(
        &spec.path,
        spec.sample_time,
        s_monotone[..=cycle_index].to_vec(),
        cycle_index as f64 * spec.sample_time,
    )?;
    Ok(TimeLpOutcome {
        profile,
        s_full,
        s_monotone,
        control,
        linearized,
        lp,
        solution,
        cycle_index,
        compute_seconds,
    })
}

#[derive(Debug, Clone)]
pub struct Relinearization {
    pub best: TimeLpOutcome,
    pub cycle_times: Vec<f64>,
}

/// Sequential linearization: each pass re-linearizes about the previous
/// solution. Stops early when the cycle time grows on two consecutive passes
/// and returns the fastest pass.
pub fn relinearize(spec: &TimeLpSpec, passes: usize) -> Result<Relinearization> {
    if passes < 1 {
        return Err(Error::arg("at least one pass is required"));
    }
    let mut spec = spec.clone();
    let mut best = solve_time_lp(&spec)?;
    let mut cycle_times = vec![best.cycle_time()];
    let mut last = best.clone();
    let mut increases = 0;
    for _ in 1..passes {
        let mut se = last.s_monotone.clone();
        let n = se.len();
        se[n - 1] = 1.0;
        spec.linearization = se;
        let next = solve_time_lp(&spec)?;
        let t = next.cycle_time();
        increases = if t > *cycle_times.last().unwrap() { increases + 1 } else { 0 };
        cycle_times.push(t);
        if t < best.cycle_time() {
            best = next.clone();
        }
        last = next;
        if increases >= 2 {
            break;
        }
    }
    Ok(Relinearization { best, cycle_times })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn line() -> Toolpath {
        let kv = KnotVector::clamped_uniform(2, 1).unwrap();
        Toolpath::spline(kv, vec![[0.0, 0.0], [30.0, 0.0]]).unwrap()
    }

    fn speed_only_spec(path: Toolpath) -> TimeLpSpec {
        let lim = KinematicLimits::new(30.0, 1e6, 1e9).unwrap();
        let init = KinematicLimits::new(15.0, 0.5, 5.0).unwrap();
        let mut spec = TimeLpSpec::from_tap(path, lim, &init, 1e-3, 0.1).unwrap();
        spec.include_jerk = false;
        spec.n_control = 60;
        spec
    }

    #[test]
    fn circle_start_linearization() {
        let c = Toolpath::full_circle([0.0, 0.0], 5.0).unwrap();
        let lin = linearize_path(&c, &[0.0]).unwrap();
        assert_abs_diff_eq!(lin.slope[0][0], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(lin.slope[1][0], c.length(), epsilon = 1e-12);
    }

    #[test]
    fn straight_line_linearization_is_exact() {
        let l = line();
        let lin = linearize_path(&l, &[0.2, 0.7]).unwrap();
        let x = lin.eval(0, &[0.9, 0.1]);
        assert_abs_diff_eq!(x[0], 27.0, epsilon = 1e-9);
        assert_abs_diff_eq!(x[1], 3.0, epsilon = 1e-9);
    }

    #[test]
    fn row_counts() {
        let c = Toolpath::full_circle([0.0, 0.0], 5.0).unwrap();
        let lim = KinematicLimits::printer_conservative();
        let spec = TimeLpSpec::from_tap(c, lim, &lim, 1e-3, 0.1).unwrap();
        let n = spec.horizon();
        let lp = build_time_lp(&spec).unwrap();
        let p = &lp.problem;
        assert_eq!(p.count(ConstraintFamily::Monotonicity), n - 1);
        assert_eq!(p.count(ConstraintFamily::Feedrate), n - 1);
        assert_eq!(p.count(ConstraintFamily::Acceleration), 4 * n);
        assert_eq!(p.count(ConstraintFamily::Jerk), 4 * n);
        assert_eq!(p.count(ConstraintFamily::Endpoints), 2);
    }

    #[test]
    fn speed_limit_only_rides_feedrate() {
        // 30 mm at 30 mm/s; the spline needs a few knot spans to settle onto
        // s = 1, so the excess shrinks as the knots get denser
        let mut spec = speed_only_spec(line());
        let mut times = Vec::new();
        for np in [60, 240] {
            spec.n_control = np;
            let out = solve_time_lp(&spec).unwrap();
            assert!(out.solution.max_violation < 1e-6);
            let near = completion_index(&out.s_full, 1e-2).unwrap() as f64 * 1e-3;
            assert!(near > 0.988 && near < 1.02, "{near}");
            times.push(out.cycle_time());
        }
        assert!(times[0] >= 1.0 - 2e-3 && times[1] >= 1.0 - 2e-3, "{times:?}");
        assert!(times[1] < times[0] && times[1] < 1.03, "{times:?}");
    }

    #[test]
    fn nonpositive_ce_limit_rejected() {
        let mut spec = speed_only_spec(line());
        let g = DiscreteTransferFunction::identity(1e-3).unwrap();
        spec.contour = Some(ContourConstraint {
            limit: 0.0,
            models: [g.clone(), g],
            compensation: [AxisCompensation::Identity, AxisCompensation::Identity],
        });
        assert!(matches!(build_time_lp(&spec), Err(Error::Argument(_))));
    }

    #[test]
    fn perfect_tracking_makes_ce_rows_vacuous() {
        let mut spec = speed_only_spec(line());
        let g = DiscreteTransferFunction::identity(1e-3).unwrap();
        spec.contour = Some(ContourConstraint {
            limit: 1e-3,
            models: [g.clone(), g],
            compensation: [AxisCompensation::Identity, AxisCompensation::Identity],
        });
        let lp = build_time_lp(&spec).unwrap();
        let x = vec![0.3; spec.n_control];
        let res = lp.problem.inequality_residuals(&x);
        // all-zero CE rows sit at -limit regardless of p
        let ce_rows = lp.problem.count(ConstraintFamily::ContourError);
        assert_eq!(ce_rows, 2 * spec.horizon());
        assert!(res[res.len() - ce_rows..].iter().all(|r| *r <= -1e-3 + 1e-12));
    }

    #[test]
    fn relinearizing_a_line_is_stationary() {
        let spec = speed_only_spec(line());
        let r = relinearize(&spec, 2).unwrap();
        assert_eq!(r.cycle_times.len(), 2);
        assert!((r.cycle_times[1] - r.cycle_times[0]).abs() <= 1e-3);
    }
}
