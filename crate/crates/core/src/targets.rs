//! Unnormalized target densities and the location-score moment
//! `I = E_f[((log f)')^2]` of univariate components.

use std::fmt;
use std::str::FromStr;

use statrs::distribution::{ContinuousCDF, Normal, StudentsT};
use thiserror::Error;

use crate::geometry::StereoChart;
use crate::math::{integrate_real_line, squared_norm};

/// Absolute tolerance for the quadrature behind [`UnivariateComponent::fisher_moment`].
pub const FISHER_QUADRATURE_TOL: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TargetError {
    #[error("dimension mismatch: target has d={expected}, point has {got} coordinates")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("moment integral did not converge")]
    NonIntegrable,
    #[error("cannot parse target spec `{spec}`: {reason}")]
    Parse { spec: String, reason: String },
}

/// Anything that exposes an unnormalized log density on `R^d`.
pub trait LogDensity: Sync {
    fn dim(&self) -> usize;

    /// Unnormalized `ln pi(x)`. `x.len()` must equal [`LogDensity::dim`].
    fn log_density(&self, x: &[f64]) -> f64;
}

/// One-dimensional factor of a product target.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum UnivariateComponent {
    Gaussian { mean: f64, var: f64 },
    StudentT { dof: f64, loc: f64, scale: f64 },
}

impl UnivariateComponent {
    pub fn gaussian(mean: f64, var: f64) -> Result<Self, TargetError> {
        if !(mean.is_finite() && var.is_finite() && var > 0.0) {
            return Err(TargetError::InvalidParameter(format!(
                "gaussian needs finite mean and positive variance, got ({mean}, {var})"
            )));
        }
        Ok(Self::Gaussian { mean, var })
    }

    /// Gaussian `N(m, 1 - m^2)`, the unit-second-moment family used by the
    /// scaling experiments.
    pub fn unit_second_moment_gaussian(mean: f64) -> Result<Self, TargetError> {
        Self::gaussian(mean, 1.0 - mean * mean)
    }

    pub fn student_t(dof: f64, loc: f64, scale: f64) -> Result<Self, TargetError> {
        if !(dof.is_finite() && dof > 0.0 && loc.is_finite() && scale.is_finite() && scale > 0.0) {
            return Err(TargetError::InvalidParameter(format!(
                "student_t needs dof > 0 and scale > 0, got ({dof}, {loc}, {scale})"
            )));
        }
        Ok(Self::StudentT { dof, loc, scale })
    }

    /// Unnormalized `ln f(t)`; zero at the mode.
    #[inline]
    pub fn log_density(&self, t: f64) -> f64 {
        match *self {
            Self::Gaussian { mean, var } => -0.5 * (t - mean) * (t - mean) / var,
            Self::StudentT { dof, loc, scale } => {
                let u = (t - loc) / scale;
                -0.5 * (dof + 1.0) * (u * u / dof).ln_1p()
            }
        }
    }

    /// `(ln f)'(t)`.
    pub fn score(&self, t: f64) -> f64 {
        match *self {
            Self::Gaussian { mean, var } => -(t - mean) / var,
            Self::StudentT { dof, loc, scale } => {
                let u = (t - loc) / scale;
                -(dof + 1.0) * u / (scale * (dof + u * u))
            }
        }
    }

    /// Normalized density, used for quadrature.
    pub fn density(&self, t: f64) -> f64 {
        use statrs::distribution::Continuous;
        match *self {
            Self::Gaussian { mean, var } => Normal::new(mean, var.sqrt()).unwrap().pdf(t),
            Self::StudentT { dof, loc, scale } => StudentsT::new(loc, scale, dof).unwrap().pdf(t),
        }
    }

    /// Mean, where it exists (`dof > 1` for Student-t).
    pub fn mean(&self) -> Option<f64> {
        match *self {
            Self::Gaussian { mean, .. } => Some(mean),
            Self::StudentT { dof, loc, .. } => (dof > 1.0).then_some(loc),
        }
    }

    /// `I = E_f[((ln f)')^2]`.
    ///
    /// Closed form `1 / var` for Gaussians (so `1 / (1 - m^2)` for
    /// `N(m, 1 - m^2)`); adaptive quadrature for Student-t.
    pub fn fisher_moment(&self) -> Result<f64, TargetError> {
        match *self {
            Self::Gaussian { var, .. } => Ok(1.0 / var),
            Self::StudentT { loc, scale, .. } => integrate_real_line(
                |t| {
                    let s = self.score(t);
                    s * s * self.density(t)
                },
                loc,
                scale,
                FISHER_QUADRATURE_TOL,
            )
            .ok_or(TargetError::NonIntegrable),
        }
    }

    pub fn cdf(&self, t: f64) -> f64 {
        match *self {
            Self::Gaussian { mean, var } => Normal::new(mean, var.sqrt()).unwrap().cdf(t),
            Self::StudentT { dof, loc, scale } => StudentsT::new(loc, scale, dof).unwrap().cdf(t),
        }
    }
}

/// Exact CDF of a component.
pub fn component_cdf(component: &UnivariateComponent, t: f64) -> f64 {
    component.cdf(t)
}

/// Target families on `R^d`.
#[derive(Debug, Clone, PartialEq)]
pub enum Target {
    /// `pi(x) = prod_i f(x_i)`.
    ProductIid { component: UnivariateComponent, dim: usize },
    /// `pi(x) ∝ (1 + |x|^2)^{-alpha/2}`, tail `|x|^{-alpha}`, `alpha > 2d`.
    PolyTail { alpha: f64, dim: usize },
    /// `pi(x) ∝ exp(-|x|^beta)`, `0 < beta <= 1`.
    ExpTail { beta: f64, dim: usize },
}

impl Target {
    pub fn product(component: UnivariateComponent, dim: usize) -> Result<Self, TargetError> {
        check_dim(dim)?;
        Ok(Self::ProductIid { component, dim })
    }

    pub fn poly_tail(alpha: f64, dim: usize) -> Result<Self, TargetError> {
        check_dim(dim)?;
        if !(alpha.is_finite() && alpha > 2.0 * dim as f64) {
            return Err(TargetError::InvalidParameter(format!(
                "poly_tail needs alpha > 2d = {}, got {alpha}",
                2 * dim
            )));
        }
        Ok(Self::PolyTail { alpha, dim })
    }

    pub fn exp_tail(beta: f64, dim: usize) -> Result<Self, TargetError> {
        check_dim(dim)?;
        if !(beta > 0.0 && beta <= 1.0) {
            return Err(TargetError::InvalidParameter(format!(
                "exp_tail needs 0 < beta <= 1, got {beta}"
            )));
        }
        Ok(Self::ExpTail { beta, dim })
    }

    pub fn checked_log_density(&self, x: &[f64]) -> Result<f64, TargetError> {
        if x.len() != self.dim() {
            return Err(TargetError::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        Ok(LogDensity::log_density(self, x))
    }

    /// Mean of the target, where defined. Used as the burn-in reference.
    pub fn mean(&self) -> Option<Vec<f64>> {
        match self {
            Self::ProductIid { component, dim } => component.mean().map(|m| vec![m; *dim]),
            Self::PolyTail { alpha, dim } => (*alpha > *dim as f64 + 1.0).then(|| vec![0.0; *dim]),
            Self::ExpTail { dim, .. } => Some(vec![0.0; *dim]),
        }
    }
}

fn check_dim(dim: usize) -> Result<(), TargetError> {
    if dim == 0 {
        return Err(TargetError::InvalidParameter("dimension must be positive".into()));
    }
    Ok(())
}

impl LogDensity for Target {
    fn dim(&self) -> usize {
        match self {
            Self::ProductIid { dim, .. } | Self::PolyTail { dim, .. } | Self::ExpTail { dim, .. } => {
                *dim
            }
        }
    }

    #[inline]
    fn log_density(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), LogDensity::dim(self));
        match self {
            Self::ProductIid { component, .. } => x.iter().map(|&t| component.log_density(t)).sum(),
            Self::PolyTail { alpha, .. } => -0.5 * alpha * squared_norm(x).ln_1p(),
            Self::ExpTail { beta, .. } => -squared_norm(x).powf(0.5 * beta),
        }
    }
}

impl fmt::Display for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::ProductIid {
                component: UnivariateComponent::Gaussian { mean, var },
                dim,
            } => write!(f, "gaussian({mean},{var})^{dim}"),
            Self::ProductIid {
                component: UnivariateComponent::StudentT { dof, loc, scale },
                dim,
            } => write!(f, "student_t({dof},{loc},{scale})^{dim}"),
            Self::PolyTail { alpha, dim } => write!(f, "poly_tail({alpha},{dim})"),
            Self::ExpTail { beta, dim } => write!(f, "exp_tail({beta},{dim})"),
        }
    }
}

impl FromStr for Target {
    type Err = TargetError;

    /// Parses `gaussian(m,s2)^d`, `student_t(nu,m,s)^d`, `poly_tail(alpha,d)`
    /// or `exp_tail(beta,d)`. Whitespace is ignored.
    fn from_str(spec: &str) -> Result<Self, Self::Err> {
        let err = |reason: &str| TargetError::Parse {
            spec: spec.to_string(),
            reason: reason.to_string(),
        };
        let compact: String = spec.chars().filter(|c| !c.is_whitespace()).collect();
        let open = compact.find('(').ok_or_else(|| err("missing `(`"))?;
        let close = compact.rfind(')').ok_or_else(|| err("missing `)`"))?;
        if close < open {
            return Err(err("unbalanced parentheses"));
        }
        let name = &compact[..open];
        let args: Vec<f64> = compact[open + 1..close]
            .split(',')
            .map(|a| a.parse::<f64>().map_err(|_| err(&format!("bad number `{a}`"))))
            .collect::<Result<_, _>>()?;
        let rest = &compact[close + 1..];
        let power = match rest.strip_prefix('^') {
            Some(p) => Some(p.parse::<usize>().map_err(|_| err("bad dimension after `^`"))?),
            None if rest.is_empty() => None,
            None => return Err(err("trailing characters")),
        };
        let as_dim = |v: f64| -> Result<usize, TargetError> {
            if v >= 1.0 && v.fract() == 0.0 {
                Ok(v as usize)
            } else {
                Err(err("dimension must be a positive integer"))
            }
        };
        match (name, args.as_slice(), power) {
            ("gaussian", &[m, s2], Some(d)) => Self::product(UnivariateComponent::gaussian(m, s2)?, d),
            ("student_t", &[nu, m, s], Some(d)) => {
                Self::product(UnivariateComponent::student_t(nu, m, s)?, d)
            }
            ("poly_tail", &[alpha, d], None) => Self::poly_tail(alpha, as_dim(d)?),
            ("exp_tail", &[beta, d], None) => Self::exp_tail(beta, as_dim(d)?),
            ("gaussian" | "student_t", _, None) => Err(err("product targets need `^d`")),
            ("gaussian" | "student_t" | "poly_tail" | "exp_tail", _, _) => {
                Err(err("wrong number of arguments"))
            }
            _ => Err(err("unknown family")),
        }
    }
}

/// `pi(x) ∝ (R^2 + |x - c|^2)^{-d}`: the pullback of the uniform law on the
/// sphere through a chart. Its lift is constant, so stereographic kernels
/// accept every proposal.
#[derive(Debug, Clone)]
pub struct SphereUniformPullback {
    chart: StereoChart,
}

impl SphereUniformPullback {
    pub fn new(chart: &StereoChart) -> Self {
        Self {
            chart: chart.clone(),
        }
    }
}

impl LogDensity for SphereUniformPullback {
    fn dim(&self) -> usize {
        self.chart.dim()
    }

    fn log_density(&self, x: &[f64]) -> f64 {
        -self.chart.log_jacobian(x)
    }
}
