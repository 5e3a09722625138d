//! B-spline basis machinery.
//!
//! Knot vectors live on `[0, 1]`. Two layouts are supported: clamped-uniform
//! (end knots repeated `degree + 1` times, equally spaced interior knots) and
//! plain uniform (all knots equally spaced). Basis matrices sample the valid
//! parameter domain `[knots[degree], knots[n]]` on a uniform grid, which is
//! `[0, 1]` for clamped vectors.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KnotStyle {
    #[default]
    Clamped,
    Uniform,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KnotVector {
    degree: usize,
    knots: Vec<f64>,
}

impl KnotVector {
    pub fn new(degree: usize, knots: Vec<f64>) -> Result<Self> {
        if knots.len() < 2 * (degree + 1) {
            return Err(Error::arg(format!(
                "a degree-{degree} knot vector needs at least {} knots, got {}",
                2 * (degree + 1),
                knots.len()
            )));
        }
        if knots.iter().any(|k| !k.is_finite()) {
            return Err(Error::arg("knot vector contains non-finite values"));
        }
        if knots.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::arg("knot vector must be nondecreasing"));
        }
        if knots[0] != 0.0 || knots[knots.len() - 1] != 1.0 {
            return Err(Error::arg("knot vector must start at 0 and end at 1"));
        }
        let kv = Self { degree, knots };
        let (lo, hi) = kv.domain();
        if hi <= lo {
            return Err(Error::arg("knot vector has an empty parameter domain"));
        }
        Ok(kv)
    }

    /// End knots repeated `degree + 1` times, interior knots equally spaced.
    pub fn clamped_uniform(n_basis: usize, degree: usize) -> Result<Self> {
        if n_basis < degree + 1 {
            return Err(Error::arg(format!(
                "need at least {} control points for degree {degree}, got {n_basis}",
                degree + 1
            )));
        }
        let spans = n_basis - degree;
        let mut knots = Vec::with_capacity(n_basis + degree + 1);
        knots.extend(std::iter::repeat(0.0).take(degree));
        knots.extend((0..=spans).map(|i| i as f64 / spans as f64));
        knots.extend(std::iter::repeat(1.0).take(degree));
        Self::new(degree, knots)
    }

    /// Equally spaced knots over `[0, 1]` with no end multiplicity.
    pub fn uniform(n_basis: usize, degree: usize) -> Result<Self> {
        if n_basis < degree + 1 {
            return Err(Error::arg(format!(
                "need at least {} control points for degree {degree}, got {n_basis}",
                degree + 1
            )));
        }
        let count = n_basis + degree + 1;
        let last = (count - 1) as f64;
        Self::new(degree, (0..count).map(|i| i as f64 / last).collect())
    }

    pub fn with_style(style: KnotStyle, n_basis: usize, degree: usize) -> Result<Self> {
        match style {
            KnotStyle::Clamped => Self::clamped_uniform(n_basis, degree),
            KnotStyle::Uniform => Self::uniform(n_basis, degree),
        }
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    /// Number of basis functions (control points) of full degree.
    pub fn n_basis(&self) -> usize {
        self.knots.len() - self.degree - 1
    }

    /// Parameter range on which the full-degree basis is a partition of unity.
    pub fn domain(&self) -> (f64, f64) {
        (self.knots[self.degree], self.knots[self.n_basis()])
    }

    /// Index `i` of the knot span holding `zeta`, `knots[i] <= zeta < knots[i+1]`,
    /// with the right end of the domain folded into the last nonempty span.
    pub fn span(&self, zeta: f64) -> usize {
        let n = self.n_basis();
        let p = self.degree;
        if zeta >= self.knots[n] {
            let mut i = n - 1;
            while i > p && self.knots[i] == self.knots[i + 1] {
                i -= 1;
            }
            return i;
        }
        if zeta <= self.knots[p] {
            return p;
        }
        let (mut lo, mut hi) = (p, n);
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if zeta < self.knots[mid] {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        lo
    }

    /// The `degree + 1` basis functions that are nonzero on the span of `zeta`,
    /// i.e. `N_{span-degree..=span}`.
    pub fn nonzero_basis(&self, zeta: f64) -> (usize, Vec<f64>) {
        let p = self.degree;
        let i = self.span(zeta);
        let u = &self.knots;
        let mut n = vec![0.0; p + 1];
        let mut left = vec![0.0; p + 1];
        let mut right = vec![0.0; p + 1];
        n[0] = 1.0;
        for j in 1..=p {
            left[j] = zeta - u[i + 1 - j];
            right[j] = u[i + j] - zeta;
            let mut saved = 0.0;
            for r in 0..j {
                let temp = n[r] / (right[r + 1] + left[j - r]);
                n[r] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            n[j] = saved;
        }
        (i, n)
    }

    /// Derivatives `0..=order` of the nonzero basis functions at `zeta`;
    /// `ders[k][r]` is the k-th derivative of `N_{span-degree+r}`.
    pub fn nonzero_derivs(&self, zeta: f64, order: usize) -> (usize, Vec<Vec<f64>>) {
        let p = self.degree;
        let i = self.span(zeta);
        let u = &self.knots;
        let mut ndu = vec![vec![0.0; p + 1]; p + 1];
        let mut left = vec![0.0; p + 1];
        let mut right = vec![0.0; p + 1];
        ndu[0][0] = 1.0;
        for j in 1..=p {
            left[j] = zeta - u[i + 1 - j];
            right[j] = u[i + j] - zeta;
            let mut saved = 0.0;
            for r in 0..j {
                // lower triangle holds knot differences
                ndu[j][r] = right[r + 1] + left[j - r];
                let temp = ndu[r][j - 1] / ndu[j][r];
                ndu[r][j] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            ndu[j][j] = saved;
        }
        let mut ders = vec![vec![0.0; p + 1]; order + 1];
        for j in 0..=p {
            ders[0][j] = ndu[j][p];
        }
        let mut a = vec![vec![0.0; p + 1]; 2];
        for r in 0..=p {
            let (mut s1, mut s2) = (0usize, 1usize);
            a[0][0] = 1.0;
            for k in 1..=order.min(p) {
                let mut d = 0.0;
                let rk = r as isize - k as isize;
                let pk = p - k;
                if r >= k {
                    a[s2][0] = a[s1][0] / ndu[pk + 1][rk as usize];
                    d = a[s2][0] * ndu[rk as usize][pk];
                }
                let j1 = if rk >= -1 { 1 } else { (-rk) as usize };
                let j2 = if (r as isize - 1) <= pk as isize { k - 1 } else { p - r };
                for j in j1..=j2 {
                    let idx = (rk + j as isize) as usize;
                    a[s2][j] = (a[s1][j] - a[s1][j - 1]) / ndu[pk + 1][idx];
                    d += a[s2][j] * ndu[idx][pk];
                }
                if r <= pk {
                    a[s2][k] = -a[s1][k - 1] / ndu[pk + 1][r];
                    d += a[s2][k] * ndu[r][pk];
                }
                ders[k][r] = d;
                std::mem::swap(&mut s1, &mut s2);
            }
        }
        let mut factor = p as f64;
        for (k, row) in ders.iter_mut().enumerate().skip(1) {
            if k > p {
                row.iter_mut().for_each(|v| *v = 0.0);
                continue;
            }
            row.iter_mut().for_each(|v| *v *= factor);
            factor *= (p - k) as f64;
        }
        (i, ders)
    }
}

/// Value of `N_{j,degree}(zeta)` by the Cox–de Boor recursion.
///
/// Terms whose knot difference vanishes contribute zero. The degree-0
/// indicator uses half-open spans `[g_j, g_{j+1})`, except that the right end
/// of the knot vector belongs to the last nonempty span so the basis still sums
/// to one at `zeta = 1`.
pub fn basis_value(knots: &KnotVector, j: usize, degree: usize, zeta: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&zeta) {
        return Err(Error::Domain {
            what: "zeta",
            value: zeta,
            lo: 0.0,
            hi: 1.0,
        });
    }
    let g = knots.knots();
    if j + degree + 1 >= g.len() {
        return Err(Error::arg(format!(
            "basis index {j} out of range for degree {degree} and {} knots",
            g.len()
        )));
    }
    Ok(cox_de_boor(g, j, degree, zeta))
}

fn cox_de_boor(g: &[f64], j: usize, degree: usize, zeta: f64) -> f64 {
    if degree == 0 {
        let last = g[g.len() - 1];
        let inside = g[j] <= zeta && zeta < g[j + 1];
        let right_end = zeta == last && g[j + 1] == last && g[j] < g[j + 1];
        return if inside || right_end { 1.0 } else { 0.0 };
    }
    let mut value = 0.0;
    let d1 = g[j + degree] - g[j];
    if d1 > 0.0 {
        value += (zeta - g[j]) / d1 * cox_de_boor(g, j, degree - 1, zeta);
    }
    let d2 = g[j + degree + 1] - g[j + 1];
    if d2 > 0.0 {
        value += (g[j + degree + 1] - zeta) / d2 * cox_de_boor(g, j + 1, degree - 1, zeta);
    }
    value
}

/// Dense `rows x n_basis` matrix of basis values (or derivatives) on a uniform grid.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisMatrix {
    matrix: DMatrix<f64>,
    degree: usize,
    order: usize,
}

impl BasisMatrix {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.matrix
    }

    pub fn rows(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn cols(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    /// Derivative order the entries represent (0 for plain basis values).
    pub fn order(&self) -> usize {
        self.order
    }

    /// `N p` for a control-point vector `p`.
    pub fn apply(&self, control: &[f64]) -> Vec<f64> {
        assert_eq!(control.len(), self.cols(), "control point count mismatch");
        (0..self.rows())
            .map(|k| {
                self.matrix
                    .row(k)
                    .iter()
                    .zip(control)
                    .map(|(a, b)| a * b)
                    .sum()
            })
            .collect()
    }
}

/// Uniform sample grid over the knot vector's domain, `zeta_k = k / (rows - 1)`
/// for clamped vectors.
pub fn sample_grid(knots: &KnotVector, rows: usize) -> Vec<f64> {
    let (lo, hi) = knots.domain();
    if rows == 1 {
        return vec![lo];
    }
    let last = (rows - 1) as f64;
    (0..rows)
        .map(|k| {
            if k + 1 == rows {
                hi
            } else {
                lo + (hi - lo) * k as f64 / last
            }
        })
        .collect()
}

pub fn basis_matrix(knots: &KnotVector, rows: usize) -> Result<BasisMatrix> {
    derivative_basis_matrix(knots, 0, rows)
}

/// Derivatives of order `order` of every basis function on the sample grid,
/// taken with respect to the normalized grid parameter (`[0, 1]` across the
/// sampled domain).
pub fn derivative_basis_matrix(knots: &KnotVector, order: usize, rows: usize) -> Result<BasisMatrix> {
    let n = knots.n_basis();
    let p = knots.degree();
    if order > p {
        return Err(Error::arg(format!(
            "derivative order {order} exceeds spline degree {p}"
        )));
    }
    if rows < n {
        return Err(Error::RankDeficient(format!(
            "{rows} samples cannot determine {n} control points"
        )));
    }
    let (lo, hi) = knots.domain();
    let scale = (hi - lo).powi(order as i32);
    let mut matrix = DMatrix::zeros(rows, n);
    for (k, zeta) in sample_grid(knots, rows).into_iter().enumerate() {
        let (span, ders) = knots.nonzero_derivs(zeta, order);
        for (r, v) in ders[order].iter().enumerate() {
            matrix[(k, span - p + r)] = v * scale;
        }
    }
    Ok(BasisMatrix {
        matrix,
        degree: p,
        order,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn degree_zero_indicator() {
        let kv = KnotVector::new(0, vec![0.0, 0.25, 0.5, 0.75, 1.0]).unwrap();
        assert_eq!(basis_value(&kv, 1, 0, 0.3).unwrap(), 1.0);
        assert_eq!(basis_value(&kv, 0, 0, 0.3).unwrap(), 0.0);
        assert_eq!(basis_value(&kv, 3, 0, 1.0).unwrap(), 1.0);
    }

    #[test]
    fn linear_hat_by_hand() {
        // one recursion step: (0.25 - 0)/(0.5 - 0) * N_{0,0} + (0.5 - 0.25)/(0.5 - 0) * N_{1,0}
        let kv = KnotVector::new(1, vec![0.0, 0.0, 0.5, 1.0, 1.0]).unwrap();
        assert_abs_diff_eq!(basis_value(&kv, 0, 1, 0.25).unwrap(), 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(basis_value(&kv, 1, 1, 0.25).unwrap(), 0.5, epsilon = 1e-15);
    }

    #[test]
    fn basis_value_errors() {
        let kv = KnotVector::clamped_uniform(6, 3).unwrap();
        assert!(matches!(basis_value(&kv, 6, 3, 0.5), Err(Error::Argument(_))));
        assert!(matches!(basis_value(&kv, 0, 3, 1.5), Err(Error::Domain { .. })));
    }

    #[test]
    fn recursion_matches_span_algorithm() {
        let kv = KnotVector::clamped_uniform(12, 5).unwrap();
        for k in 0..=200 {
            let zeta = k as f64 / 200.0;
            let (span, vals) = kv.nonzero_basis(zeta);
            for j in 0..kv.n_basis() {
                let expect = if j + 5 >= span && j <= span {
                    vals[j + 5 - span]
                } else {
                    0.0
                };
                assert_abs_diff_eq!(basis_value(&kv, j, 5, zeta).unwrap(), expect, epsilon = 1e-13);
            }
        }
    }

    #[test]
    fn identity_pattern_for_degree_zero() {
        let kv = KnotVector::new(0, vec![0.0, 0.25, 0.5, 0.75, 1.0]).unwrap();
        let b = basis_matrix(&kv, 4).unwrap();
        // samples 0, 1/3, 2/3, 1 fall in spans 0, 1, 2, 3
        assert_eq!(b.matrix(), &DMatrix::identity(4, 4));
    }

    #[test]
    fn partition_of_unity_large() {
        let kv = KnotVector::clamped_uniform(40, 5).unwrap();
        let b = basis_matrix(&kv, 1130).unwrap();
        for k in 0..b.rows() {
            let row = b.matrix().row(k);
            assert!((row.sum() - 1.0).abs() <= 1e-12);
            assert!(row.iter().all(|v| *v >= 0.0));
            assert!(row.iter().filter(|v| **v != 0.0).count() <= 6);
        }
    }

    #[test]
    fn constants_reproduced() {
        let kv = KnotVector::clamped_uniform(15, 4).unwrap();
        let b = basis_matrix(&kv, 300).unwrap();
        for v in b.apply(&[2.5; 15]) {
            assert_abs_diff_eq!(v, 2.5, epsilon = 1e-12);
        }
        let d = derivative_basis_matrix(&kv, 2, 300).unwrap();
        for v in d.apply(&[2.5; 15]) {
            assert_abs_diff_eq!(v, 0.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn greville_ramp_has_unit_slope() {
        // control points at the Greville abscissae reproduce zeta exactly
        let (n, p) = (20, 5);
        let kv = KnotVector::clamped_uniform(n, p).unwrap();
        let g = kv.knots();
        let ctrl: Vec<f64> = (0..n).map(|j| g[j + 1..=j + p].iter().sum::<f64>() / p as f64).collect();
        let grid = sample_grid(&kv, 257);
        let vals = basis_matrix(&kv, 257).unwrap().apply(&ctrl);
        for (v, z) in vals.iter().zip(&grid) {
            assert_abs_diff_eq!(*v, *z, epsilon = 1e-12);
        }
        for v in derivative_basis_matrix(&kv, 1, 257).unwrap().apply(&ctrl) {
            assert_abs_diff_eq!(v, 1.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn order_above_degree_rejected() {
        let kv = KnotVector::clamped_uniform(8, 2).unwrap();
        assert!(matches!(derivative_basis_matrix(&kv, 3, 50), Err(Error::Argument(_))));
        assert!(matches!(basis_matrix(&kv, 7), Err(Error::RankDeficient(_))));
    }

    #[test]
    fn uniform_knots_cover_inner_domain() {
        let kv = KnotVector::uniform(10, 3).unwrap();
        let (lo, hi) = kv.domain();
        assert_abs_diff_eq!(lo, 3.0 / 13.0, epsilon = 1e-15);
        assert_abs_diff_eq!(hi, 10.0 / 13.0, epsilon = 1e-15);
        let b = basis_matrix(&kv, 100).unwrap();
        for k in 0..100 {
            assert_abs_diff_eq!(b.matrix().row(k).sum(), 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn local_support() {
        let kv = KnotVector::clamped_uniform(30, 5).unwrap();
        let b = basis_matrix(&kv, 500).unwrap();
        let grid = sample_grid(&kv, 500);
        let g = kv.knots();
        for (k, z) in grid.iter().enumerate() {
            for j in 0..30 {
                if *z < g[j] || *z > g[j + 6] {
                    assert_eq!(b.matrix()[(k, j)], 0.0);
                }
            }
        }
    }
}
