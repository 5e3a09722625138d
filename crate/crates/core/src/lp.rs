//! Linear programs `min cᵀx  s.t.  A x ≤ b, E x = f, lo ≤ x ≤ hi`, solved by
//! an interior-point method after infinity-norm row equilibration.

use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettingsBuilder, DefaultSolver, IPSolver, SolverStatus, SupportedConeT,
};

use crate::error::{ConstraintFamily, Error, Result};

/// Post-scaling feasibility tolerance requested from the solver.
pub const FEASIBILITY_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Default)]
struct SparseRows {
    ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
    rhs: Vec<f64>,
    family: Vec<ConstraintFamily>,
}

impl SparseRows {
    fn new() -> Self {
        Self {
            ptr: vec![0],
            ..Default::default()
        }
    }

    fn len(&self) -> usize {
        self.rhs.len()
    }

    fn push(&mut self, entries: impl IntoIterator<Item = (usize, f64)>, rhs: f64, family: ConstraintFamily) {
        for (j, v) in entries {
            if v != 0.0 {
                self.cols.push(j);
                self.vals.push(v);
            }
        }
        self.ptr.push(self.cols.len());
        self.rhs.push(rhs);
        self.family.push(family);
    }

    fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let (a, b) = (self.ptr[i], self.ptr[i + 1]);
        self.cols[a..b].iter().copied().zip(self.vals[a..b].iter().copied())
    }

    fn dot(&self, i: usize, x: &[f64]) -> f64 {
        self.row(i).map(|(j, v)| v * x[j]).sum()
    }

    fn norm_inf(&self, i: usize) -> f64 {
        self.row(i).fold(0.0f64, |m, (_, v)| m.max(v.abs()))
    }
}

#[derive(Debug, Clone)]
pub struct LpProblem {
    cost: Vec<f64>,
    ineq: SparseRows,
    eq: SparseRows,
    lower: Vec<f64>,
    upper: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    NumericalFailure,
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub status: LpStatus,
    pub x: Vec<f64>,
    pub objective: f64,
    /// Largest violation over all rows and bounds, each row divided by its
    /// infinity norm.
    pub max_violation: f64,
    pub iterations: u32,
    /// For infeasible problems, the constraint family carrying the largest
    /// share of the infeasibility certificate.
    pub binding_family: Option<ConstraintFamily>,
}

impl LpSolution {
    /// Converts non-optimal outcomes into errors.
    pub fn into_result(self) -> Result<Self> {
        match self.status {
            LpStatus::Optimal => Ok(self),
            LpStatus::Infeasible => Err(Error::Infeasible {
                family: self.binding_family.unwrap_or(ConstraintFamily::Unknown),
            }),
            LpStatus::Unbounded => Err(Error::Unbounded),
            LpStatus::NumericalFailure => Err(Error::Numerical(format!(
                "LP solver stopped after {} iterations without convergence",
                self.iterations
            ))),
        }
    }
}

impl LpProblem {
    /// Problem in `n` free variables with zero cost.
    pub fn new(n: usize) -> Self {
        Self {
            cost: vec![0.0; n],
            ineq: SparseRows::new(),
            eq: SparseRows::new(),
            lower: vec![f64::NEG_INFINITY; n],
            upper: vec![f64::INFINITY; n],
        }
    }

    pub fn n_vars(&self) -> usize {
        self.cost.len()
    }

    pub fn n_ineq(&self) -> usize {
        self.ineq.len()
    }

    pub fn n_eq(&self) -> usize {
        self.eq.len()
    }

    pub fn cost(&self) -> &[f64] {
        &self.cost
    }

    pub fn set_cost(&mut self, cost: Vec<f64>) -> Result<()> {
        if cost.len() != self.n_vars() {
            return Err(Error::arg("cost vector length differs from variable count"));
        }
        check_finite(&cost, "cost")?;
        self.cost = cost;
        Ok(())
    }

    pub fn set_bounds(&mut self, j: usize, lo: f64, hi: f64) -> Result<()> {
        if j >= self.n_vars() || lo.is_nan() || hi.is_nan() || lo > hi {
            return Err(Error::arg(format!("invalid bounds [{lo}, {hi}] for variable {j}")));
        }
        self.lower[j] = lo;
        self.upper[j] = hi;
        Ok(())
    }

    /// Adds `Σ a_j x_j ≤ rhs` from sparse `(j, a_j)` entries.
    pub fn add_le(&mut self, entries: &[(usize, f64)], rhs: f64, family: ConstraintFamily) -> Result<()> {
        self.check_row(entries.iter().copied(), rhs)?;
        self.ineq.push(entries.iter().copied(), rhs, family);
        Ok(())
    }

    /// Adds `a · x ≤ rhs` from a dense row.
    pub fn add_le_dense(&mut self, row: &[f64], rhs: f64, family: ConstraintFamily) -> Result<()> {
        self.check_dense(row)?;
        self.check_row(row.iter().copied().enumerate(), rhs)?;
        self.ineq.push(row.iter().copied().enumerate(), rhs, family);
        Ok(())
    }

    pub fn add_eq(&mut self, entries: &[(usize, f64)], rhs: f64, family: ConstraintFamily) -> Result<()> {
        self.check_row(entries.iter().copied(), rhs)?;
        self.eq.push(entries.iter().copied(), rhs, family);
        Ok(())
    }

    fn check_dense(&self, row: &[f64]) -> Result<()> {
        if row.len() != self.n_vars() {
            return Err(Error::arg("dense row length differs from variable count"));
        }
        Ok(())
    }

    fn check_row(&self, entries: impl Iterator<Item = (usize, f64)>, rhs: f64) -> Result<()> {
        let n = self.n_vars();
        for (j, v) in entries {
            if j >= n {
                return Err(Error::arg(format!("column {j} out of range for {n} variables")));
            }
            if !v.is_finite() {
                return Err(Error::Numerical(format!("non-finite coefficient in column {j}")));
            }
        }
        if !rhs.is_finite() {
            return Err(Error::Numerical("non-finite right-hand side".into()));
        }
        Ok(())
    }

    /// Number of inequality rows tagged with `family`.
    pub fn count(&self, family: ConstraintFamily) -> usize {
        self.ineq.family.iter().chain(&self.eq.family).filter(|f| **f == family).count()
    }

    /// Scaled violation of every inequality row at `x` (positive = violated).
    pub fn inequality_residuals(&self, x: &[f64]) -> Vec<f64> {
        (0..self.ineq.len())
            .map(|i| {
                let s = self.ineq.norm_inf(i).max(f64::MIN_POSITIVE);
                (self.ineq.dot(i, x) - self.ineq.rhs[i]) / s
            })
            .collect()
    }

    /// Largest scaled violation of all rows and bounds at `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut worst = 0.0f64;
        for r in self.inequality_residuals(x) {
            worst = worst.max(r);
        }
        for i in 0..self.eq.len() {
            let s = self.eq.norm_inf(i).max(f64::MIN_POSITIVE);
            worst = worst.max(((self.eq.dot(i, x) - self.eq.rhs[i]) / s).abs());
        }
        for (j, &v) in x.iter().enumerate() {
            worst = worst.max(self.lower[j] - v).max(v - self.upper[j]);
        }
        worst
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        self.cost.iter().zip(x).map(|(c, v)| c * v).sum()
    }

    pub fn solve(&self) -> Result<LpSolution> {
        let n = self.n_vars();
        // rows: equalities, inequalities, finite bounds; each scaled to unit inf-norm
        let mut trip_i = Vec::new();
        let mut trip_j = Vec::new();
        let mut trip_v = Vec::new();
        let mut rhs = Vec::new();
        let mut families = Vec::new();
        // rows that no point of the variable box can violate are dropped; rows
        // without coefficients are skipped, or decide infeasibility alone
        let mut m = 0;
        let mut contradiction = None;
        let (lower, upper) = (&self.lower, &self.upper);
        let mut push_rows = |rows: &SparseRows, equality: bool, m: &mut usize| {
            for i in 0..rows.len() {
                if !equality && max_activity(rows.row(i), lower, upper) <= rows.rhs[i] {
                    continue;
                }
                let s = rows.norm_inf(i);
                if s == 0.0 {
                    let b = rows.rhs[i];
                    if (equality && b != 0.0) || b < 0.0 {
                        contradiction.get_or_insert(rows.family[i]);
                    }
                    continue;
                }
                for (j, v) in rows.row(i) {
                    trip_i.push(*m);
                    trip_j.push(j);
                    trip_v.push(v / s);
                }
                rhs.push(rows.rhs[i] / s);
                families.push(rows.family[i]);
                *m += 1;
            }
        };
        push_rows(&self.eq, true, &mut m);
        let n_eq = m;
        push_rows(&self.ineq, false, &mut m);
        if let Some(family) = contradiction {
            return Ok(LpSolution {
                status: LpStatus::Infeasible,
                x: vec![f64::NAN; n],
                objective: f64::NAN,
                max_violation: f64::INFINITY,
                iterations: 0,
                binding_family: Some(family),
            });
        }
        for j in 0..n {
            if self.upper[j].is_finite() {
                trip_i.push(m);
                trip_j.push(j);
                trip_v.push(1.0);
                rhs.push(self.upper[j]);
                families.push(ConstraintFamily::Unknown);
                m += 1;
            }
            if self.lower[j].is_finite() {
                trip_i.push(m);
                trip_j.push(j);
                trip_v.push(-1.0);
                rhs.push(-self.lower[j]);
                families.push(ConstraintFamily::Unknown);
                m += 1;
            }
        }
        let a = CscMatrix::new_from_triplets(m, n, trip_i, trip_j, trip_v);
        let p = CscMatrix::<f64>::zeros((n, n));
        let mut cones = Vec::new();
        if n_eq > 0 {
            cones.push(SupportedConeT::ZeroConeT(n_eq));
        }
        if m > n_eq {
            cones.push(SupportedConeT::NonnegativeConeT(m - n_eq));
        }
        // tight tolerances first; on a stall, fall back to the solver defaults
        let mut attempt = None;
        for tol in [1e-10, 1e-8] {
            let settings = DefaultSettingsBuilder::default()
                .verbose(false)
                .max_iter(400)
                .tol_feas(tol)
                .tol_gap_abs(tol)
                .tol_gap_rel(tol)
                .max_threads(1)
                .presolve_enable(false)
                .build()
                .map_err(|e| Error::Numerical(format!("solver settings: {e}")))?;
            let mut solver = DefaultSolver::new(&p, &self.cost, &a, &rhs, &cones, settings)
                .map_err(|e| Error::Numerical(format!("solver setup: {e:?}")))?;
            solver.solve();
            let stalled = matches!(
                solver.solution.status,
                SolverStatus::InsufficientProgress | SolverStatus::NumericalError | SolverStatus::MaxIterations
            );
            attempt = Some(solver.solution);
            if !stalled {
                break;
            }
        }
        let sol = attempt.expect("at least one attempt");
        let status = match sol.status {
            SolverStatus::Solved | SolverStatus::AlmostSolved => LpStatus::Optimal,
            SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => LpStatus::Infeasible,
            SolverStatus::DualInfeasible | SolverStatus::AlmostDualInfeasible => LpStatus::Unbounded,
            _ => LpStatus::NumericalFailure,
        };
        let binding_family = (status == LpStatus::Infeasible).then(|| {
            let mut weight: Vec<(ConstraintFamily, f64)> = Vec::new();
            for (f, z) in families.iter().zip(&sol.z) {
                match weight.iter_mut().find(|(g, _)| g == f) {
                    Some(entry) => entry.1 += z.abs(),
                    None => weight.push((*f, z.abs())),
                }
            }
            weight
                .into_iter()
                .max_by(|a, b| a.1.total_cmp(&b.1))
                .map(|(f, _)| f)
                .unwrap_or(ConstraintFamily::Unknown)
        });
        let x = sol.x.clone();
        let finite = x.iter().all(|v| v.is_finite());
        let status = if status == LpStatus::Optimal && !finite {
            LpStatus::NumericalFailure
        } else {
            status
        };
        Ok(LpSolution {
            status,
            objective: if finite { self.objective(&x) } else { f64::NAN },
            max_violation: if finite { self.max_violation(&x) } else { f64::INFINITY },
            x,
            iterations: sol.iterations,
            binding_family,
        })
    }
}

/// Largest value of a row over the variable box; infinite when unbounded.
fn max_activity(row: impl Iterator<Item = (usize, f64)>, lower: &[f64], upper: &[f64]) -> f64 {
    row.map(|(j, v)| if v > 0.0 { v * upper[j] } else { v * lower[j] })
        .sum()
}

fn check_finite(v: &[f64], what: &str) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::Numerical(format!("non-finite entry in {what}")))
    }
}
