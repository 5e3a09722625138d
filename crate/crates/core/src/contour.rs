//! Contour error: the linearized estimate and the exact orthogonal distance.

use crate::error::{Error, Result};
use crate::geometry::{Point, Toolpath};

/// `ε̂(k) = −sin θ(k) e_x(k) + cos θ(k) e_y(k)`, with `e = desired − actual`.
pub fn estimate_ce(ex: &[f64], ey: &[f64], theta: &[f64]) -> Result<Vec<f64>> {
    if ex.len() != ey.len() || ex.len() != theta.len() {
        return Err(Error::arg(format!(
            "series lengths differ: e_x {}, e_y {}, theta {}",
            ex.len(),
            ey.len(),
            theta.len()
        )));
    }
    Ok(ex
        .iter()
        .zip(ey)
        .zip(theta)
        .map(|((x, y), t)| {
            let (s, c) = t.sin_cos();
            -s * x + c * y
        })
        .collect())
}

/// Signed distance from each point to the path. Positive when the point lies
/// to the right of the direction of travel, which matches the sign of
/// [`estimate_ce`] for `e = desired − actual`.
pub fn exact_ce(actual: &[Point], path: &Toolpath) -> Vec<f64> {
    actual
        .iter()
        .map(|&p| {
            let near = path.nearest_point(p);
            let c = path.point(near.s);
            let t = path.derivative(near.s, 1);
            let cross = t[0] * (c[1] - p[1]) - t[1] * (c[0] - p[0]);
            if cross < 0.0 {
                -near.distance
            } else {
                near.distance
            }
        })
        .collect()
}

/// Tangent angle at each `s`.
pub fn tangent_angles(path: &Toolpath, s: &[f64]) -> Result<Vec<f64>> {
    s.iter().map(|&v| path.tangent_angle(v.clamp(0.0, 1.0))).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContourResult {
    pub estimated: Vec<f64>,
    pub exact: Vec<f64>,
    pub max_estimated: f64,
    pub max_exact: f64,
}

impl ContourResult {
    pub fn new(estimated: Vec<f64>, exact: Vec<f64>) -> Result<Self> {
        if estimated.len() != exact.len() {
            return Err(Error::arg("estimated and exact series differ in length"));
        }
        let max_abs = |v: &[f64]| v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        Ok(Self {
            max_estimated: max_abs(&estimated),
            max_exact: max_abs(&exact),
            estimated,
            exact,
        })
    }

    /// Estimate and exact error of `actual` tracking `desired` along `path`,
    /// with the estimate's angle taken at the path parameters `s`.
    pub fn evaluate(path: &Toolpath, s: &[f64], desired: &[Point], actual: &[Point]) -> Result<Self> {
        if desired.len() != actual.len() || s.len() != actual.len() {
            return Err(Error::arg("desired, actual and s series differ in length"));
        }
        let ex: Vec<f64> = desired.iter().zip(actual).map(|(d, a)| d[0] - a[0]).collect();
        let ey: Vec<f64> = desired.iter().zip(actual).map(|(d, a)| d[1] - a[1]).collect();
        let theta = tangent_angles(path, s)?;
        Self::new(estimate_ce(&ex, &ey, &theta)?, exact_ce(actual, path))
    }
}
