//! Filtered B-spline servo error pre-compensation.
//!
//! The command is a B-spline `x_dm = N p`; the control points solve the least
//! squares fit of the filtered basis `Ñ = Ĝ N` to the desired trajectory, which
//! gives the linear operator `C = N Ñ†`.

use nalgebra::{DMatrix, DVector};

use crate::dynamics::DiscreteTransferFunction;
use crate::error::{Error, Result};
use crate::splines::{basis_matrix, KnotVector};

/// Condition number of `Ñ` above which the build is refused.
pub const MAX_CONDITION: f64 = 1e12;
/// Default cap on the size of a materialized operator.
pub const DEFAULT_OPERATOR_CAP: usize = 20_000;

#[derive(Debug, Clone)]
pub struct Compensator {
    basis: DMatrix<f64>,
    filtered: DMatrix<f64>,
    q: DMatrix<f64>,
    r: DMatrix<f64>,
    condition: f64,
}

impl Compensator {
    /// Builds the compensator for `rows` samples using `n` clamped uniform
    /// basis functions of degree `degree`.
    pub fn build(model: &DiscreteTransferFunction, rows: usize, n: usize, degree: usize) -> Result<Self> {
        if degree < 1 {
            return Err(Error::arg("compensator spline degree must be at least 1"));
        }
        let knots = KnotVector::clamped_uniform(n, degree)?;
        let basis = basis_matrix(&knots, rows)?.into_matrix();
        Self::from_basis(model, basis)
    }

    /// Builds the compensator from an explicit basis matrix.
    pub fn from_basis(model: &DiscreteTransferFunction, basis: DMatrix<f64>) -> Result<Self> {
        let (rows, n) = basis.shape();
        if rows < n {
            return Err(Error::RankDeficient(format!(
                "{rows} samples cannot determine {n} control points"
            )));
        }
        let filtered = filter_columns(model, &basis);
        if filtered.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical(format!(
                "filtered basis overflows over {rows} samples; the model is unstable (pole radius {:.4})",
                model.max_pole_magnitude()
            )));
        }
        let qr = filtered.clone().qr();
        let q = qr.q();
        let r = qr.r();
        let sv = r.singular_values();
        let (smax, smin) = sv
            .iter()
            .fold((0.0f64, f64::INFINITY), |(hi, lo), &v| (hi.max(v), lo.min(v)));
        let condition = if smin > 0.0 { smax / smin } else { f64::INFINITY };
        if !(condition <= MAX_CONDITION) {
            return Err(Error::RankDeficient(format!(
                "filtered basis has condition number {condition:e}; use fewer control points"
            )));
        }
        Ok(Self {
            basis,
            filtered,
            q,
            r,
            condition,
        })
    }

    pub fn rows(&self) -> usize {
        self.basis.nrows()
    }

    pub fn n_control(&self) -> usize {
        self.basis.ncols()
    }

    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    pub fn filtered_basis(&self) -> &DMatrix<f64> {
        &self.filtered
    }

    pub fn condition_number(&self) -> f64 {
        self.condition
    }

    /// Least-squares control points `p* = Ñ† x_d`.
    pub fn control_points(&self, desired: &[f64]) -> Result<Vec<f64>> {
        if desired.len() != self.rows() {
            return Err(Error::arg(format!(
                "series has {} samples, compensator expects {}",
                desired.len(),
                self.rows()
            )));
        }
        let rhs = self.q.tr_mul(&DVector::from_column_slice(desired));
        let p = self
            .r
            .solve_upper_triangular(&rhs)
            .ok_or_else(|| Error::Numerical("triangular factor is singular".into()))?;
        Ok(p.as_slice().to_vec())
    }

    /// Modified command `x_dm = N p*`.
    pub fn compensate(&self, desired: &[f64]) -> Result<Vec<f64>> {
        let p = self.control_points(desired)?;
        Ok((&self.basis * DVector::from_vec(p)).as_slice().to_vec())
    }

    /// Applies `C` to every column of `m`.
    pub fn apply_columns(&self, m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if m.nrows() != self.rows() {
            return Err(Error::arg(format!(
                "matrix has {} rows, compensator expects {}",
                m.nrows(),
                self.rows()
            )));
        }
        let rhs = self.q.tr_mul(m);
        let p = self
            .r
            .solve_upper_triangular(&rhs)
            .ok_or_else(|| Error::Numerical("triangular factor is singular".into()))?;
        Ok(&self.basis * p)
    }

    /// Dense `C = N Ñ†` with the default size cap.
    pub fn operator_matrix(&self) -> Result<DMatrix<f64>> {
        self.operator_matrix_capped(DEFAULT_OPERATOR_CAP)
    }

    pub fn operator_matrix_capped(&self, cap: usize) -> Result<DMatrix<f64>> {
        let size = self.rows();
        if size > cap {
            return Err(Error::MemoryCap { size, cap });
        }
        let rinv_qt = self
            .r
            .solve_upper_triangular(&self.q.transpose())
            .ok_or_else(|| Error::Numerical("triangular factor is singular".into()))?;
        Ok(&self.basis * rinv_qt)
    }
}

/// `Ĝ` applied to each column of `m` (zero initial conditions).
pub fn filter_columns(model: &DiscreteTransferFunction, m: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(m.nrows(), m.ncols());
    for (j, col) in m.column_iter().enumerate() {
        let y = model.simulate(col.as_slice());
        out.column_mut(j).copy_from_slice(&y);
    }
    out
}

/// Per-axis command shaping: either the plain command (`C = I`) or FBS.
#[derive(Debug, Clone)]
pub enum AxisCompensation {
    Identity,
    Fbs(Compensator),
}

impl AxisCompensation {
    /// Applies `C` to deviations from `rest` so the command starts at rest.
    pub fn command(&self, desired: &[f64], rest: f64) -> Result<Vec<f64>> {
        match self {
            AxisCompensation::Identity => Ok(desired.to_vec()),
            AxisCompensation::Fbs(c) => {
                let dev: Vec<f64> = desired.iter().map(|v| v - rest).collect();
                Ok(c.compensate(&dev)?.into_iter().map(|v| v + rest).collect())
            }
        }
    }

    pub fn apply_columns(&self, m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        match self {
            AxisCompensation::Identity => Ok(m.clone()),
            AxisCompensation::Fbs(c) => c.apply_columns(m),
        }
    }
}
