//! Stereographic multiple-try Metropolis (SMTM) and companion kernels for
//! heavy-tailed targets.
//!
//! * [`geometry`]: stereographic charts, the sphere-lifted density and the
//!   tangent random-walk proposal.
//! * [`targets`]: product and isotropic target families.
//! * [`kernels`]: RWM, MTM, SRWM, SMTM and an approximate ideal scheme.
//! * [`scaling`]: high-dimensional limit functionals and step-size tuning.
//! * [`diagnostics`]: traces, ESJD, acceptance, burn-in and stationarity checks.
//! * [`rng`]: keyed substreams that make every run independent of threading.

// Range checks are written as negations so that NaN fails them.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod diagnostics;
pub mod geometry;
pub mod kernels;
pub mod math;
pub mod rng;
pub mod scaling;
pub mod targets;

pub use geometry::{GeometryError, SpherePoint, StereoChart};
pub use kernels::{
    Chain, ChainState, KernelConfig, KernelError, KernelKind, StepResult, WeightKind,
};
pub use rng::StreamKey;
pub use targets::{LogDensity, Target, TargetError, UnivariateComponent};
