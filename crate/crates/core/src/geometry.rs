//! Stereographic projection between `R^d` and the unit sphere `S^d` in
//! `R^{d+1}`, the sphere-lifted log density, and the tangent-space random
//! walk proposal used by the stereographic kernels.
//!
//! The chart is parameterized by a radius `R` and a center `c`. With
//! `u = x - c`, a plane point maps to
//! `z = (2R u, |u|^2 - R^2) / (|u|^2 + R^2)` and a sphere point maps back
//! to `x = c + R (z_1, .., z_d) / (1 - z_{d+1})`. The north pole
//! `(0, .., 0, 1)` has no image.

use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::math::{dot, squared_norm};
use crate::targets::LogDensity;

/// Points with `1 - z_{d+1}` below this are treated as the north pole.
pub const NORTH_POLE_GAP: f64 = 1e-12;

const UNIT_NORM_TOL: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("point is within {gap:e} of the north pole")]
    NorthPoleSingularity { gap: f64 },
    #[error("tangent proposal collapsed to the origin twice")]
    DegenerateProposal,
    #[error("invalid chart: {0}")]
    InvalidChart(String),
    #[error("invalid sphere point: {0}")]
    InvalidSpherePoint(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
}

/// A point on the unit sphere `S^d`, stored as `d + 1` coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct SpherePoint(Vec<f64>);

impl SpherePoint {
    /// Checked constructor: unit norm within `1e-10` and not the north pole.
    pub fn new(coords: Vec<f64>) -> Result<Self, GeometryError> {
        if coords.len() < 2 {
            return Err(GeometryError::InvalidSpherePoint(
                "needs at least two coordinates".into(),
            ));
        }
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(GeometryError::InvalidSpherePoint("non-finite coordinate".into()));
        }
        let norm = squared_norm(&coords).sqrt();
        if (norm - 1.0).abs() > UNIT_NORM_TOL {
            return Err(GeometryError::InvalidSpherePoint(format!(
                "norm {norm} is not 1"
            )));
        }
        let p = Self(coords);
        let gap = p.pole_gap();
        if gap < NORTH_POLE_GAP {
            return Err(GeometryError::NorthPoleSingularity { gap });
        }
        Ok(p)
    }

    #[cfg(test)]
    pub(crate) fn from_unit(coords: Vec<f64>) -> Self {
        Self(coords)
    }

    /// The south pole `(0, .., 0, -1)` of `S^d`.
    pub fn south_pole(dim: usize) -> Self {
        let mut c = vec![0.0; dim + 1];
        c[dim] = -1.0;
        Self(c)
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn into_coords(self) -> Vec<f64> {
        self.0
    }

    /// Dimension `d` of the sphere (one less than the ambient dimension).
    pub fn dim(&self) -> usize {
        self.0.len() - 1
    }

    /// `1 - z_{d+1}`, computed without cancellation near the north pole.
    ///
    /// For `z_{d+1} > 0` this uses `|z_{1..d}|^2 / (1 + z_{d+1})`, which is
    /// exact on the unit sphere and keeps full relative precision when the
    /// point is close to the pole.
    pub fn pole_gap(&self) -> f64 {
        let (head, last) = self.0.split_at(self.0.len() - 1);
        let top = last[0];
        if top > 0.0 {
            squared_norm(head) / (1.0 + top)
        } else {
            1.0 - top
        }
    }

    /// Geodesic (great-circle) distance to another point.
    pub fn geodesic_distance(&self, other: &Self) -> f64 {
        dot(&self.0, &other.0).clamp(-1.0, 1.0).acos()
    }
}

/// Stereographic chart with radius `R` and center `c`.
#[derive(Debug, Clone, PartialEq)]
pub struct StereoChart {
    radius: f64,
    center: Vec<f64>,
}

impl StereoChart {
    /// Chart centered at the origin.
    pub fn new(dim: usize, radius: f64) -> Result<Self, GeometryError> {
        Self::with_center(radius, vec![0.0; dim])
    }

    pub fn with_center(radius: f64, center: Vec<f64>) -> Result<Self, GeometryError> {
        if center.is_empty() {
            return Err(GeometryError::InvalidChart("dimension must be positive".into()));
        }
        if !(radius.is_finite() && radius > 0.0) {
            return Err(GeometryError::InvalidChart(format!(
                "radius must be positive and finite, got {radius}"
            )));
        }
        if center.iter().any(|c| !c.is_finite()) {
            return Err(GeometryError::InvalidChart("center must be finite".into()));
        }
        Ok(Self { radius, center })
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn center(&self) -> &[f64] {
        &self.center
    }

    /// `|x - c|^2`.
    #[inline]
    pub fn offset_sq(&self, x: &[f64]) -> f64 {
        x.iter()
            .zip(&self.center)
            .map(|(a, c)| (a - c) * (a - c))
            .sum()
    }

    /// Sphere to plane.
    pub fn sp_forward(&self, z: &SpherePoint) -> Result<Vec<f64>, GeometryError> {
        if z.dim() != self.dim() {
            return Err(GeometryError::DimensionMismatch {
                expected: self.dim(),
                got: z.dim(),
            });
        }
        let gap = z.pole_gap();
        if gap < NORTH_POLE_GAP {
            return Err(GeometryError::NorthPoleSingularity { gap });
        }
        let scale = self.radius / gap;
        Ok(z.0[..self.dim()]
            .iter()
            .zip(&self.center)
            .map(|(zi, c)| c + scale * zi)
            .collect())
    }

    /// Plane to sphere. Total on finite inputs.
    pub fn sp_inverse(&self, x: &[f64]) -> SpherePoint {
        debug_assert_eq!(x.len(), self.dim());
        let r2 = self.radius * self.radius;
        let t = self.offset_sq(x);
        let denom = t + r2;
        let mut z: Vec<f64> = x
            .iter()
            .zip(&self.center)
            .map(|(a, c)| 2.0 * self.radius * (a - c) / denom)
            .collect();
        z.push((t - r2) / denom);
        SpherePoint(z)
    }

    /// `d * ln(R^2 + |x - c|^2)`, the log Jacobian factor lifting a plane
    /// density to the sphere.
    #[inline]
    pub fn log_jacobian(&self, x: &[f64]) -> f64 {
        self.dim() as f64 * (self.radius * self.radius + self.offset_sq(x)).ln()
    }

    /// Log of the sphere density `pi_S(z) ∝ pi(x) (R^2 + |x - c|^2)^d` at the
    /// plane point `x`, up to the target's additive constant.
    #[inline]
    pub fn log_sphere_density_at<T: LogDensity + ?Sized>(&self, target: &T, x: &[f64]) -> f64 {
        target.log_density(x) + self.log_jacobian(x)
    }

    pub fn log_sphere_density<T: LogDensity + ?Sized>(
        &self,
        target: &T,
        z: &SpherePoint,
    ) -> Result<f64, GeometryError> {
        let x = self.sp_forward(z)?;
        Ok(self.log_sphere_density_at(target, &x))
    }
}

/// Random-walk proposal in the tangent space at `z`, retracted onto the
/// sphere by normalization.
///
/// Draws `dz ~ N(0, h^2 I_{d+1})`, removes its component along `z` and
/// returns `(z + dz) / |z + dz|`. The north-pole guard is left to the
/// caller.
pub fn tangent_rw_propose<R: Rng + ?Sized>(
    z: &SpherePoint,
    h: f64,
    rng: &mut R,
) -> Result<SpherePoint, GeometryError> {
    debug_assert!(h > 0.0);
    let zc = z.coords();
    let zz = squared_norm(zc);
    for _ in 0..2 {
        let mut step: Vec<f64> = (0..zc.len())
            .map(|_| h * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let along = dot(zc, &step) / zz;
        for (s, zi) in step.iter_mut().zip(zc) {
            *s = zi + (*s - along * zi);
        }
        let norm = squared_norm(&step).sqrt();
        if norm >= 1e-12 {
            step.iter_mut().for_each(|s| *s /= norm);
            return Ok(SpherePoint(step));
        }
    }
    Err(GeometryError::DegenerateProposal)
}
