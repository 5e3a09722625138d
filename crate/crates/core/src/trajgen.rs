//! Jerk-limited trapezoidal-acceleration (seven-segment) motion along a path.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Toolpath;

/// Feedrate, acceleration and jerk limits. Stored in millimetre units
/// (mm/s, mm/s², mm/s³); [`KinematicLimits::new`] takes the customary
/// machine units mm/s, m/s² and m/s³.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KinematicLimits {
    pub feedrate: f64,
    pub accel: f64,
    pub jerk: f64,
}

impl KinematicLimits {
    pub fn new(feedrate_mm_s: f64, accel_m_s2: f64, jerk_m_s3: f64) -> Result<Self> {
        Self::from_mm(feedrate_mm_s, accel_m_s2 * 1e3, jerk_m_s3 * 1e3)
    }

    pub fn from_mm(feedrate: f64, accel: f64, jerk: f64) -> Result<Self> {
        for (name, v) in [("feedrate", feedrate), ("acceleration", accel), ("jerk", jerk)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::arg(format!("{name} limit must be positive, got {v}")));
            }
        }
        Ok(Self {
            feedrate,
            accel,
            jerk,
        })
    }

    /// 30 mm/s, 0.5 m/s², 5 m/s³.
    pub fn printer_conservative() -> Self {
        Self::new(30.0, 0.5, 5.0).unwrap()
    }

    /// 50 mm/s, 10 m/s², 5000 m/s³.
    pub fn printer_aggressive() -> Self {
        Self::new(50.0, 10.0, 5000.0).unwrap()
    }

    /// 40 mm/s, 0.4 m/s², 4 m/s³.
    pub fn stage_conservative() -> Self {
        Self::new(40.0, 0.4, 4.0).unwrap()
    }

    /// 80 mm/s, 8 m/s², 8000 m/s³.
    pub fn stage_aggressive() -> Self {
        Self::new(80.0, 8.0, 8000.0).unwrap()
    }
}

/// Sampled motion along a path: normalized arc length, commanded positions
/// and tangential kinematics, all on the grid `t_k = k T_s`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryProfile {
    pub sample_time: f64,
    pub s: Vec<f64>,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub feedrate: Vec<f64>,
    pub accel: Vec<f64>,
    pub jerk: Vec<f64>,
    pub cycle_time: f64,
}

/// Per-axis velocities, accelerations and jerks by backward differences of
/// the commanded positions (the position before `k = 0` is taken at rest).
#[derive(Debug, Clone, PartialEq)]
pub struct AxisKinematics {
    pub vx: Vec<f64>,
    pub vy: Vec<f64>,
    pub ax: Vec<f64>,
    pub ay: Vec<f64>,
    pub jx: Vec<f64>,
    pub jy: Vec<f64>,
}

/// Backward difference of order `order`, scaled by `1 / dt^order`, with the
/// series padded at the start by its first value.
pub fn backward_difference(v: &[f64], order: usize, dt: f64) -> Vec<f64> {
    let mut out = v.to_vec();
    for _ in 0..order {
        let first = out.first().copied().unwrap_or(0.0);
        let mut prev = first;
        for item in out.iter_mut() {
            let cur = *item;
            *item = (cur - prev) / dt;
            prev = cur;
        }
    }
    out
}

impl TrajectoryProfile {
    /// Profile from an `s` series; tangential kinematics come from backward
    /// differences of `L s`.
    pub fn from_s(path: &Toolpath, sample_time: f64, s: Vec<f64>, cycle_time: f64) -> Result<Self> {
        let len = path.length();
        let dist: Vec<f64> = s.iter().map(|v| v * len).collect();
        let feedrate = backward_difference(&dist, 1, sample_time);
        let accel = backward_difference(&dist, 2, sample_time);
        let jerk = backward_difference(&dist, 3, sample_time);
        let mut profile = Self {
            sample_time,
            s,
            x: Vec::new(),
            y: Vec::new(),
            feedrate,
            accel,
            jerk,
            cycle_time,
        };
        profile.fill_positions(path)?;
        Ok(profile)
    }

    pub fn len(&self) -> usize {
        self.s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.s.is_empty()
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.len()).map(|k| k as f64 * self.sample_time).collect()
    }

    /// Commanded positions `x_d = f(s)`, `y_d = g(s)`.
    pub fn fill_positions(&mut self, path: &Toolpath) -> Result<()> {
        let mut x = Vec::with_capacity(self.len());
        let mut y = Vec::with_capacity(self.len());
        for &s in &self.s {
            let p = path.eval(s.clamp(0.0, 1.0))?;
            x.push(p[0]);
            y.push(p[1]);
        }
        self.x = x;
        self.y = y;
        Ok(())
    }

    /// Appends a dwell at the end point: `ceil(fraction * len)` samples with
    /// `s = 1` and zero tangential kinematics.
    pub fn pad_dwell(&mut self, fraction: f64) {
        let extra = (fraction.max(0.0) * self.len() as f64).ceil() as usize;
        self.pad_samples(extra);
    }

    pub fn pad_samples(&mut self, extra: usize) {
        let last_x = self.x.last().copied();
        let last_y = self.y.last().copied();
        for _ in 0..extra {
            self.s.push(1.0);
            if let (Some(x), Some(y)) = (last_x, last_y) {
                self.x.push(x);
                self.y.push(y);
            }
            self.feedrate.push(0.0);
            self.accel.push(0.0);
            self.jerk.push(0.0);
        }
    }

    pub fn axis_kinematics(&self) -> AxisKinematics {
        let dt = self.sample_time;
        AxisKinematics {
            vx: backward_difference(&self.x, 1, dt),
            vy: backward_difference(&self.y, 1, dt),
            ax: backward_difference(&self.x, 2, dt),
            ay: backward_difference(&self.y, 2, dt),
            jx: backward_difference(&self.x, 3, dt),
            jy: backward_difference(&self.y, 3, dt),
        }
    }
}

/// Closed-form rest-to-rest seven-segment profile over a distance.
#[derive(Debug, Clone, PartialEq)]
pub struct SCurve {
    length: f64,
    peak_feedrate: f64,
    // (jerk, duration) of each of the seven segments
    segments: [(f64, f64); 7],
}

/// Kinematic state at one instant of an [`SCurve`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MotionState {
    pub position: f64,
    pub velocity: f64,
    pub accel: f64,
    pub jerk: f64,
}

impl SCurve {
    pub fn new(length: f64, limits: &KinematicLimits) -> Result<Self> {
        if !(length.is_finite() && length > 0.0) {
            return Err(Error::arg(format!("travel length must be positive, got {length}")));
        }
        let KinematicLimits {
            feedrate: f,
            accel: a,
            jerk: j,
        } = *limits;
        KinematicLimits::from_mm(f, a, j)?;
        let corner = a * a / j;
        // distance needed to reach velocity v from rest and stop again
        let ramp_distance = |v: f64| {
            if v <= corner {
                2.0 * v * (v / j).sqrt()
            } else {
                v * (v / a + a / j)
            }
        };
        let peak = if ramp_distance(f) <= length {
            f
        } else {
            let v = (0.5 * length * j.sqrt()).powf(2.0 / 3.0);
            if v <= corner {
                v
            } else {
                let b = a / j;
                0.5 * a * (-b + (b * b + 4.0 * length / a).sqrt())
            }
        };
        let (tj, ta) = if peak <= corner {
            ((peak / j).sqrt(), 0.0)
        } else {
            (a / j, peak / a - a / j)
        };
        let cruise = ((length - ramp_distance(peak)) / peak).max(0.0);
        Ok(Self {
            length,
            peak_feedrate: peak,
            segments: [
                (j, tj),
                (0.0, ta),
                (-j, tj),
                (0.0, cruise),
                (-j, tj),
                (0.0, ta),
                (j, tj),
            ],
        })
    }

    pub fn duration(&self) -> f64 {
        self.segments.iter().map(|(_, d)| d).sum()
    }

    pub fn peak_feedrate(&self) -> f64 {
        self.peak_feedrate
    }

    pub fn state(&self, t: f64) -> MotionState {
        let (mut p, mut v, mut a) = (0.0, 0.0, 0.0);
        let mut t0 = 0.0;
        if t <= 0.0 {
            return MotionState {
                position: 0.0,
                velocity: 0.0,
                accel: 0.0,
                jerk: 0.0,
            };
        }
        for &(j, d) in &self.segments {
            if t < t0 + d {
                let dt = t - t0;
                return MotionState {
                    position: p + v * dt + a * dt * dt / 2.0 + j * dt.powi(3) / 6.0,
                    velocity: v + a * dt + j * dt * dt / 2.0,
                    accel: a + j * dt,
                    jerk: j,
                };
            }
            p += v * d + a * d * d / 2.0 + j * d.powi(3) / 6.0;
            v += a * d + j * d * d / 2.0;
            a += j * d;
            t0 += d;
        }
        MotionState {
            position: self.length,
            velocity: 0.0,
            accel: 0.0,
            jerk: 0.0,
        }
    }
}

/// Seven-segment tangential profile sampled every `sample_time`, ending on the
/// first sample at or after the motion end. Positions are left empty; use
/// [`TrajectoryProfile::fill_positions`].
pub fn tap_profile(length: f64, limits: &KinematicLimits, sample_time: f64) -> Result<TrajectoryProfile> {
    if !(sample_time.is_finite() && sample_time > 0.0) {
        return Err(Error::arg(format!("sample time must be positive, got {sample_time}")));
    }
    let curve = SCurve::new(length, limits)?;
    let duration = curve.duration();
    let last = (duration / sample_time - 1e-9).ceil().max(0.0) as usize;
    let mut profile = TrajectoryProfile {
        sample_time,
        s: Vec::with_capacity(last + 1),
        x: Vec::new(),
        y: Vec::new(),
        feedrate: Vec::with_capacity(last + 1),
        accel: Vec::with_capacity(last + 1),
        jerk: Vec::with_capacity(last + 1),
        cycle_time: duration,
    };
    for k in 0..=last {
        let st = curve.state(k as f64 * sample_time);
        profile.s.push((st.position / length).clamp(0.0, 1.0));
        profile.feedrate.push(st.velocity);
        profile.accel.push(st.accel);
        profile.jerk.push(st.jerk);
    }
    if let Some(end) = profile.s.last_mut() {
        *end = 1.0;
    }
    Ok(profile)
}
