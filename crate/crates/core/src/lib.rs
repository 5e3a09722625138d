//! Feedrate optimization with servo error pre-compensation.
//!
//! A time-based linear program schedules the path parameter `s(t)` under
//! feedrate, acceleration and jerk limits, and optionally bounds the contour
//! error predicted by linear servo models. With filtered B-spline command
//! shaping in the loop the bound is far less restrictive, which is where the
//! speedup comes from. Trapezoidal-acceleration profiles and a path-based LP
//! serve as baselines.

pub mod config;
pub mod contour;
pub mod dynamics;
pub mod error;
pub mod experiment;
pub mod fbs;
pub mod geometry;
pub mod lp;
pub mod opt_path;
pub mod opt_time;
pub mod splines;
pub mod trajgen;

pub use config::{Algorithm, ExperimentConfig};
pub use contour::ContourResult;
pub use dynamics::{DiscreteTransferFunction, LiftedOperator};
pub use error::{ConstraintFamily, Error, Result};
pub use experiment::{Experiment, RunOutcome, Suite, SuiteRow};
pub use fbs::{AxisCompensation, Compensator};
pub use geometry::{Point, Toolpath};
pub use lp::{LpProblem, LpSolution, LpStatus};
pub use opt_path::{solve_path_lp, PathLpSpec};
pub use opt_time::{solve_time_lp, TimeLpSpec};
pub use splines::{KnotStyle, KnotVector};
pub use trajgen::{tap_profile, KinematicLimits, TrajectoryProfile};
