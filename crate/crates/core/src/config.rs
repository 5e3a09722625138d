//! Experiment configuration, read from TOML.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::dynamics::{printer, DiscreteTransferFunction};
use crate::error::{Error, Result};
use crate::geometry::Toolpath;
use crate::splines::{KnotStyle, KnotVector};
use crate::trajgen::KinematicLimits;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    Tap,
    FoTime,
    FoSep,
    FoPath,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Tap => "tap",
            Algorithm::FoTime => "fo-time",
            Algorithm::FoSep => "fo-sep",
            Algorithm::FoPath => "fo-path",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "tap" => Ok(Algorithm::Tap),
            "fo-time" => Ok(Algorithm::FoTime),
            "fo-sep" => Ok(Algorithm::FoSep),
            "fo-path" => Ok(Algorithm::FoPath),
            other => Err(Error::Config(format!(
                "unknown algorithm '{other}' (expected tap, fo-time, fo-sep or fo-path)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PathConfig {
    Circle {
        #[serde(default)]
        center: [f64; 2],
        radius: f64,
        #[serde(default)]
        start_angle: f64,
        #[serde(default = "full_turn")]
        sweep: f64,
    },
    Spline {
        degree: usize,
        control: Vec<[f64; 2]>,
        #[serde(default)]
        knot_style: KnotStyle,
        /// Explicit knots; overrides `knot_style` when present.
        #[serde(default)]
        knots: Option<Vec<f64>>,
    },
}

fn full_turn() -> f64 {
    2.0 * PI
}

impl PathConfig {
    pub fn build(&self) -> Result<Toolpath> {
        match self {
            PathConfig::Circle {
                center,
                radius,
                start_angle,
                sweep,
            } => Toolpath::circle(*center, *radius, *start_angle, *sweep),
            PathConfig::Spline {
                degree,
                control,
                knot_style,
                knots,
            } => {
                let kv = match knots {
                    Some(k) => KnotVector::new(*degree, k.clone())?,
                    None => KnotVector::with_style(*knot_style, control.len(), *degree)?,
                };
                Toolpath::spline(kv, control.clone())
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LimitSet {
    pub feedrate_mm_s: f64,
    pub accel_m_s2: f64,
    pub jerk_m_s3: f64,
}

impl LimitSet {
    pub fn limits(&self) -> Result<KinematicLimits> {
        KinematicLimits::new(self.feedrate_mm_s, self.accel_m_s2, self.jerk_m_s3)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub num: Vec<f64>,
    pub den: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelsConfig {
    pub x: ModelConfig,
    pub y: ModelConfig,
    /// Reflect unstable poles into the unit circle.
    #[serde(default = "yes")]
    pub stabilize: bool,
    /// Scale each numerator for unit DC gain.
    #[serde(default = "yes")]
    pub dc_normalize: bool,
}

fn yes() -> bool {
    true
}

impl Default for ModelsConfig {
    fn default() -> Self {
        Self {
            x: ModelConfig {
                num: printer::X_NUM.to_vec(),
                den: printer::X_DEN.to_vec(),
            },
            y: ModelConfig {
                num: printer::Y_NUM.to_vec(),
                den: printer::Y_DEN.to_vec(),
            },
            stabilize: true,
            dc_normalize: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplineConfig {
    pub degree: usize,
    pub n_control: usize,
    #[serde(default)]
    pub knot_style: KnotStyle,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FbsConfig {
    pub x: SplineConfig,
    pub y: SplineConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathLpConfig {
    pub grid_points: usize,
    pub degree: usize,
    pub n_control: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub algorithm: Algorithm,
    pub sample_time: f64,
    /// Name of the limit set the optimizers must respect.
    pub limits: String,
    /// Name of the limit set of the initializing TAP trajectory.
    pub init_limits: String,
    pub include_jerk: bool,
    /// Contour-error limit for the time-based optimizers, µm.
    pub ce_limit_um: f64,
    /// Whether `run` adds contour-error rows to the time-based LP. Suites
    /// that need the limit use it regardless.
    pub enforce_ce: bool,
    pub dwell: f64,
    pub eps_done: f64,
    pub passes: usize,
    pub operator_cap: usize,
    pub path: PathConfig,
    pub limit_sets: BTreeMap<String, LimitSet>,
    pub models: ModelsConfig,
    pub spline: SplineConfig,
    pub fbs: FbsConfig,
    pub path_lp: PathLpConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let mut limit_sets = BTreeMap::new();
        let set = |f, a, j| LimitSet {
            feedrate_mm_s: f,
            accel_m_s2: a,
            jerk_m_s3: j,
        };
        limit_sets.insert("conservative".into(), set(30.0, 0.5, 5.0));
        limit_sets.insert("aggressive".into(), set(50.0, 10.0, 5000.0));
        let s5 = SplineConfig {
            degree: 5,
            n_control: 40,
            knot_style: KnotStyle::Clamped,
        };
        Self {
            algorithm: Algorithm::FoSep,
            sample_time: printer::SAMPLE_TIME,
            limits: "aggressive".into(),
            init_limits: "conservative".into(),
            include_jerk: true,
            ce_limit_um: 14.0,
            enforce_ce: true,
            dwell: 0.1,
            eps_done: 1e-5,
            passes: 1,
            operator_cap: crate::fbs::DEFAULT_OPERATOR_CAP,
            path: PathConfig::Circle {
                center: [0.0, 0.0],
                radius: 5.0,
                start_angle: 0.0,
                sweep: full_turn(),
            },
            limit_sets,
            models: ModelsConfig::default(),
            spline: s5,
            fbs: FbsConfig { x: s5, y: s5 },
            path_lp: PathLpConfig {
                grid_points: 1001,
                degree: 5,
                n_control: 40,
            },
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn limit_set(&self, name: &str) -> Result<KinematicLimits> {
        let set = self
            .limit_sets
            .get(name)
            .ok_or_else(|| Error::Config(format!("no limit set named '{name}'")))?;
        set.limits()
            .map_err(|e| Error::Config(format!("limit set '{name}': {e}")))
    }

    pub fn ce_limit_mm(&self) -> Option<f64> {
        self.enforce_ce.then_some(self.ce_limit_um * 1e-3)
    }

    /// Servo models after the configured stabilization and DC normalization.
    pub fn servo_models(&self) -> Result<[DiscreteTransferFunction; 2]> {
        let build = |m: &ModelConfig| -> Result<DiscreteTransferFunction> {
            let mut g = DiscreteTransferFunction::new(m.num.clone(), m.den.clone(), self.sample_time)?;
            if self.models.stabilize {
                g = g.stabilize();
            }
            if self.models.dc_normalize {
                g = g.normalize_dc()?;
            }
            Ok(g)
        };
        Ok([build(&self.models.x)?, build(&self.models.y)?])
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if !(self.sample_time > 0.0 && self.sample_time.is_finite()) {
            return bad(format!("sample_time must be positive, got {}", self.sample_time));
        }
        for (name, set) in &self.limit_sets {
            set.limits()
                .map_err(|e| Error::Config(format!("limit set '{name}': {e}")))?;
        }
        self.limit_set(&self.limits)?;
        self.limit_set(&self.init_limits)?;
        if !(self.ce_limit_um > 0.0 && self.ce_limit_um.is_finite()) {
            return bad(format!("ce_limit_um must be positive, got {}", self.ce_limit_um));
        }
        if !(self.dwell >= 0.0 && self.dwell.is_finite()) {
            return bad(format!("dwell must be non-negative, got {}", self.dwell));
        }
        if !(self.eps_done > 0.0 && self.eps_done < 1.0) {
            return bad(format!("eps_done must lie in (0, 1), got {}", self.eps_done));
        }
        if self.passes < 1 {
            return bad("passes must be at least 1".into());
        }
        for (what, s) in [("spline", &self.spline), ("fbs.x", &self.fbs.x), ("fbs.y", &self.fbs.y)] {
            if s.degree < 1 || s.n_control <= s.degree {
                return bad(format!(
                    "{what}: need degree >= 1 and more control points than the degree"
                ));
            }
        }
        if self.path_lp.grid_points < self.path_lp.n_control || self.path_lp.n_control <= self.path_lp.degree {
            return bad("path_lp: need grid_points >= n_control > degree".into());
        }
        self.path
            .build()
            .map_err(|e| Error::Config(format!("path: {e}")))?;
        self.servo_models()
            .map_err(|e| Error::Config(format!("models: {e}")))?;
        Ok(())
    }
}
