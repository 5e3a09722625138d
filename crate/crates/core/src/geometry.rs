//! Planar toolpaths parametrized by normalized arc length `s ∈ [0, 1]`.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::splines::KnotVector;

pub type Point = [f64; 2];

/// Samples used by the dense stage of [`Toolpath::nearest_point`].
pub const NEAREST_SAMPLES: usize = 4096;
/// Nodes of the arc-length inversion table of spline paths.
pub const ARC_TABLE_NODES: usize = 2048;
const ARC_REL_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct CirclePath {
    pub center: Point,
    pub radius: f64,
    pub start_angle: f64,
    /// Signed swept angle; positive is counterclockwise.
    pub sweep: f64,
}

/// Clamped or unclamped B-spline curve, reparametrized by arc length.
#[derive(Debug, Clone)]
pub struct SplinePath {
    knots: KnotVector,
    control: Vec<Point>,
    length: f64,
    // native parameter and cumulative arc length at the table nodes
    u_nodes: Vec<f64>,
    arc_nodes: Vec<f64>,
}

#[derive(Debug, Clone)]
pub enum Toolpath {
    Circle(CirclePath),
    Spline(SplinePath),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NearestPoint {
    pub s: f64,
    pub distance: f64,
}

fn check_s(s: f64) -> Result<()> {
    if (0.0..=1.0).contains(&s) {
        Ok(())
    } else {
        Err(Error::Domain {
            what: "s",
            value: s,
            lo: 0.0,
            hi: 1.0,
        })
    }
}

fn check_order(order: usize) -> Result<()> {
    if (1..=3).contains(&order) {
        Ok(())
    } else {
        Err(Error::arg(format!("derivative order must be 1, 2 or 3, got {order}")))
    }
}

impl Toolpath {
    pub fn circle(center: Point, radius: f64, start_angle: f64, sweep: f64) -> Result<Self> {
        if !(radius.is_finite() && radius > 0.0) {
            return Err(Error::arg(format!("circle radius must be positive, got {radius}")));
        }
        if !(sweep.is_finite() && sweep != 0.0) || !start_angle.is_finite() {
            return Err(Error::arg("circle sweep must be finite and nonzero"));
        }
        if !(center[0].is_finite() && center[1].is_finite()) {
            return Err(Error::arg("circle center must be finite"));
        }
        Ok(Toolpath::Circle(CirclePath {
            center,
            radius,
            start_angle,
            sweep,
        }))
    }

    /// Full counterclockwise circle starting at `(cx + r, cy)`.
    pub fn full_circle(center: Point, radius: f64) -> Result<Self> {
        Self::circle(center, radius, 0.0, 2.0 * PI)
    }

    pub fn spline(knots: KnotVector, control: Vec<Point>) -> Result<Self> {
        SplinePath::new(knots, control).map(Toolpath::Spline)
    }

    /// Total travel length `L` in mm.
    pub fn length(&self) -> f64 {
        match self {
            Toolpath::Circle(c) => c.sweep.abs() * c.radius,
            Toolpath::Spline(sp) => sp.length,
        }
    }

    pub fn eval(&self, s: f64) -> Result<Point> {
        check_s(s)?;
        Ok(self.point(s))
    }

    /// Geometric derivative `d^order (x_d, y_d) / ds^order`.
    pub fn derivs(&self, s: f64, order: usize) -> Result<Point> {
        check_s(s)?;
        check_order(order)?;
        Ok(self.derivative(s, order))
    }

    /// Tangent direction `atan2(y_d', x_d')` in `(-π, π]`.
    pub fn tangent_angle(&self, s: f64) -> Result<f64> {
        let d = self.derivs(s, 1)?;
        let norm = d[0].hypot(d[1]);
        if norm <= 1e-12 * self.length().max(1.0) {
            return Err(Error::Geometry(format!("zero tangent at s = {s}")));
        }
        let theta = d[1].atan2(d[0]);
        Ok(if theta == -PI { PI } else { theta })
    }

    /// Closest point on the path to `p`: dense sampling, then golden-section
    /// refinement inside the bracketing samples. Ties go to the smallest `s`.
    pub fn nearest_point(&self, p: Point) -> NearestPoint {
        let n = NEAREST_SAMPLES;
        let dist = |s: f64| {
            let q = self.point(s);
            (q[0] - p[0]).hypot(q[1] - p[1])
        };
        let samples: Vec<f64> = (0..=n).map(|i| dist(i as f64 / n as f64)).collect();
        let min = samples.iter().cloned().fold(f64::INFINITY, f64::min);
        let tie = 1e-12 * (1.0 + min);
        let best = samples.iter().position(|d| *d <= min + tie).unwrap_or(0);
        let s0 = best as f64 / n as f64;
        let lo = best.saturating_sub(1) as f64 / n as f64;
        let hi = (best + 1).min(n) as f64 / n as f64;
        let (s_ref, d_ref) = golden_min(&dist, lo, hi);
        if d_ref < samples[best] - tie {
            NearestPoint {
                s: s_ref,
                distance: d_ref,
            }
        } else {
            NearestPoint {
                s: s0,
                distance: samples[best],
            }
        }
    }

    pub(crate) fn point(&self, s: f64) -> Point {
        match self {
            Toolpath::Circle(c) => {
                let phi = c.start_angle + c.sweep * s;
                [
                    c.center[0] + c.radius * phi.cos(),
                    c.center[1] + c.radius * phi.sin(),
                ]
            }
            Toolpath::Spline(sp) => sp.point(s),
        }
    }

    pub(crate) fn derivative(&self, s: f64, order: usize) -> Point {
        match self {
            Toolpath::Circle(c) => {
                let phi = c.start_angle + c.sweep * s;
                let k = c.radius * c.sweep.powi(order as i32);
                let (sn, cs) = phi.sin_cos();
                match order {
                    1 => [-k * sn, k * cs],
                    2 => [-k * cs, -k * sn],
                    _ => [k * sn, -k * cs],
                }
            }
            Toolpath::Spline(sp) => sp.derivative(s, order),
        }
    }
}

fn golden_min(f: &impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> (f64, f64) {
    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - ratio * (b - a);
    let mut d = a + ratio * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > 1e-14 {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - ratio * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + ratio * (b - a);
            fd = f(d);
        }
    }
    let s = 0.5 * (a + b);
    (s, f(s))
}

impl SplinePath {
    pub fn new(knots: KnotVector, control: Vec<Point>) -> Result<Self> {
        if control.len() != knots.n_basis() {
            return Err(Error::arg(format!(
                "{} control points given, knot vector expects {}",
                control.len(),
                knots.n_basis()
            )));
        }
        if knots.degree() < 1 {
            return Err(Error::arg("spline paths need degree >= 1"));
        }
        if control.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::arg("control points must be finite"));
        }
        let mut path = SplinePath {
            knots,
            control,
            length: 0.0,
            u_nodes: Vec::new(),
            arc_nodes: Vec::new(),
        };
        let (lo, hi) = path.knots.domain();
        let nodes = ARC_TABLE_NODES;
        let u_nodes: Vec<f64> = (0..nodes)
            .map(|i| lo + (hi - lo) * i as f64 / (nodes - 1) as f64)
            .collect();
        for &u in &u_nodes {
            if path.native_speed(u) <= 1e-12 {
                return Err(Error::Geometry(format!(
                    "spline has a stationary point near u = {u}; arc-length parametrization undefined"
                )));
            }
        }
        let mut arc = vec![0.0; nodes];
        for i in 1..nodes {
            arc[i] = arc[i - 1] + path.arc_between(u_nodes[i - 1], u_nodes[i]);
        }
        path.length = arc[nodes - 1];
        if path.length <= 0.0 {
            return Err(Error::Geometry("spline path has zero length".into()));
        }
        path.u_nodes = u_nodes;
        path.arc_nodes = arc;
        Ok(path)
    }

    pub fn knots(&self) -> &KnotVector {
        &self.knots
    }

    pub fn control_points(&self) -> &[Point] {
        &self.control
    }

    /// Native-parameter derivatives `c, c', c'', c'''` at `u`.
    fn native(&self, u: f64, order: usize) -> [Point; 4] {
        let p = self.knots.degree();
        let (span, ders) = self.knots.nonzero_derivs(u, order);
        let mut out = [[0.0; 2]; 4];
        for (k, row) in ders.iter().enumerate() {
            for (r, b) in row.iter().enumerate() {
                let cp = self.control[span - p + r];
                out[k][0] += b * cp[0];
                out[k][1] += b * cp[1];
            }
        }
        out
    }

    fn native_speed(&self, u: f64) -> f64 {
        let d = self.native(u, 1)[1];
        d[0].hypot(d[1])
    }

    fn arc_between(&self, a: f64, b: f64) -> f64 {
        let whole = gauss7(|u| self.native_speed(u), a, b);
        adaptive_arc(&|u| self.native_speed(u), a, b, whole, 0)
    }

    /// Native parameter `u` whose arc length from the start is `s * L`.
    fn native_param(&self, s: f64) -> f64 {
        let target = s * self.length;
        let arc = &self.arc_nodes;
        let un = &self.u_nodes;
        let last = arc.len() - 1;
        if target <= 0.0 {
            return un[0];
        }
        if target >= arc[last] {
            return un[last];
        }
        let i = match arc.binary_search_by(|v| v.partial_cmp(&target).unwrap()) {
            Ok(i) => return un[i],
            Err(i) => i - 1,
        };
        // cubic Hermite on (arc, u) with exact slopes du/darc = 1/|c'(u)|
        let (a0, a1) = (arc[i], arc[i + 1]);
        let (u0, u1) = (un[i], un[i + 1]);
        let h = a1 - a0;
        let m0 = 1.0 / self.native_speed(u0);
        let m1 = 1.0 / self.native_speed(u1);
        let t = (target - a0) / h;
        let (t2, t3) = (t * t, t * t * t);
        let mut u = (2.0 * t3 - 3.0 * t2 + 1.0) * u0
            + (t3 - 2.0 * t2 + t) * h * m0
            + (-2.0 * t3 + 3.0 * t2) * u1
            + (t3 - t2) * h * m1;
        u = u.clamp(u0, u1);
        for _ in 0..3 {
            let residual = a0 + gauss7(|v| self.native_speed(v), u0, u) - target;
            u = (u - residual / self.native_speed(u)).clamp(u0, u1);
        }
        u
    }

    fn point(&self, s: f64) -> Point {
        self.native(self.native_param(s), 0)[0]
    }

    fn derivative(&self, s: f64, order: usize) -> Point {
        let u = self.native_param(s);
        let c = self.native(u, order.min(self.knots.degree()));
        let (c1, c2, c3) = (c[1], c[2], c[3]);
        let h = c1[0] * c1[0] + c1[1] * c1[1];
        let l = self.length;
        let w = l / h.sqrt();
        let g = c1[0] * c2[0] + c1[1] * c2[1];
        let dw = -l * g / h.powf(1.5);
        match order {
            1 => [c1[0] * w, c1[1] * w],
            2 => {
                let u2 = w * dw;
                [c2[0] * w * w + c1[0] * u2, c2[1] * w * w + c1[1] * u2]
            }
            _ => {
                let dg = c2[0] * c2[0] + c2[1] * c2[1] + c1[0] * c3[0] + c1[1] * c3[1];
                let ddw = -l * (dg / h.powf(1.5) - 3.0 * g * g / h.powf(2.5));
                let u2 = w * dw;
                let u3 = w * (ddw * w + dw * dw);
                [
                    c3[0] * w.powi(3) + 3.0 * c2[0] * w * u2 + c1[0] * u3,
                    c3[1] * w.powi(3) + 3.0 * c2[1] * w * u2 + c1[1] * u3,
                ]
            }
        }
    }
}

const GL7_X: [f64; 7] = [
    -0.949_107_912_342_758_5,
    -0.741_531_185_599_394_4,
    -0.405_845_151_377_397_2,
    0.0,
    0.405_845_151_377_397_2,
    0.741_531_185_599_394_4,
    0.949_107_912_342_758_5,
];
const GL7_W: [f64; 7] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
    0.381_830_050_505_118_9,
    0.279_705_391_489_276_7,
    0.129_484_966_168_869_7,
];

fn gauss7(f: impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    GL7_X
        .iter()
        .zip(GL7_W.iter())
        .map(|(x, w)| w * f(mid + half * x))
        .sum::<f64>()
        * half
}

fn adaptive_arc(f: &impl Fn(f64) -> f64, a: f64, b: f64, whole: f64, depth: u32) -> f64 {
    let m = 0.5 * (a + b);
    let left = gauss7(f, a, m);
    let right = gauss7(f, m, b);
    let split = left + right;
    if (split - whole).abs() <= ARC_REL_TOL * split.abs() || depth >= 24 {
        split
    } else {
        adaptive_arc(f, a, m, left, depth + 1) + adaptive_arc(f, m, b, right, depth + 1)
    }
}
