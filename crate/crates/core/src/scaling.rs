//! High-dimensional limit functionals of the multiple-try kernels.
//!
//! For product targets `pi(x) = prod f(x_i)` with `R = sqrt(lambda d)` the
//! log density ratios of candidates and references converge to i.i.d.
//! Gaussians `N(mu, sigma^2)` with
//!
//! `mu = (l^2 / 2) (c - I)`, `sigma^2 = -2 mu`, `c = 4 lambda / (1 + lambda)^2`,
//!
//! where `I = E_f[((ln f)')^2]`. Euclidean random-walk kernels have the same
//! structure with `c = 0`. Acceptance and ESJD limits are expectations of
//! [`phi1`]/[`phi2`] under this law and are estimated by Monte Carlo with
//! common random numbers across step scales and candidate counts.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use thiserror::Error;

use crate::kernels::{multi_try_acceptance, WeightKind};
use crate::math::RunningMoments;
use crate::rng::StreamKey;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScalingError {
    #[error("limit variance is negative: I = {fisher} is below c = {curvature}")]
    NegativeVariance { fisher: f64, curvature: f64 },
    #[error("out of range: {0}")]
    OutOfRange(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

/// `4 lambda / (1 + lambda)^2`, which is at most 1 with equality at `lambda = 1`.
pub fn sphere_curvature(lambda: f64) -> f64 {
    4.0 * lambda / ((1.0 + lambda) * (1.0 + lambda))
}

/// Which family of kernels the limit describes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LimitGeometry {
    /// Stereographic kernels with `R = sqrt(lambda d)`.
    Sphere { lambda: f64 },
    /// Euclidean random-walk kernels with proposal scale `l / sqrt(d)`.
    Euclidean,
}

impl LimitGeometry {
    pub fn curvature(self) -> f64 {
        match self {
            Self::Sphere { lambda } => sphere_curvature(lambda),
            Self::Euclidean => 0.0,
        }
    }
}

/// Inputs of the limit law.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalingParams {
    pub dim: usize,
    pub geometry: LimitGeometry,
    pub ell: f64,
    pub n_candidates: usize,
    /// `I = E_f[((ln f)')^2]`.
    pub fisher: f64,
    pub weight: WeightKind,
}

impl ScalingParams {
    pub fn sphere(dim: usize, lambda: f64, ell: f64, n: usize, fisher: f64, weight: WeightKind) -> Self {
        Self {
            dim,
            geometry: LimitGeometry::Sphere { lambda },
            ell,
            n_candidates: n,
            fisher,
            weight,
        }
    }

    pub fn model(&self) -> LimitModel {
        LimitModel {
            geometry: self.geometry,
            fisher: self.fisher,
            weight: self.weight,
        }
    }

    /// Step size of the kernel this limit describes: sphere `h` or
    /// Euclidean proposal scale.
    pub fn kernel_step(&self) -> Result<f64, ScalingError> {
        match self.geometry {
            LimitGeometry::Sphere { lambda } => ell_to_h(self.dim, lambda, self.ell),
            LimitGeometry::Euclidean => Ok(self.ell / (self.dim as f64).sqrt()),
        }
    }
}

/// `N(mu, sigma^2)` with `sigma^2 = -2 mu`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LimitGaussian {
    pub mu: f64,
    pub sigma2: f64,
}

impl LimitGaussian {
    pub fn sigma(&self) -> f64 {
        self.sigma2.sqrt()
    }
}

pub fn limit_gaussian(params: &ScalingParams) -> Result<LimitGaussian, ScalingError> {
    limit_gaussian_for(params.geometry, params.fisher, params.ell)
}

fn limit_gaussian_for(geometry: LimitGeometry, fisher: f64, ell: f64) -> Result<LimitGaussian, ScalingError> {
    let c = geometry.curvature();
    if !(fisher >= c) {
        return Err(ScalingError::NegativeVariance {
            fisher,
            curvature: c,
        });
    }
    let mu = 0.5 * ell * ell * (c - fisher);
    Ok(LimitGaussian { mu, sigma2: -2.0 * mu })
}

fn check_phi_args(j: usize, x: &[f64], y: &[f64]) {
    assert!(j >= 1 && j <= x.len(), "slot {j} outside 1..={}", x.len());
    assert_eq!(y.len() + 1, x.len(), "need N - 1 reference terms");
}

/// Acceptance of slot `j` (1-based) given it was selected.
pub fn phi1(j: usize, x: &[f64], y: &[f64], weight: WeightKind) -> f64 {
    check_phi_args(j, x, y);
    multi_try_acceptance(weight, x, j - 1, y).log_alpha.exp()
}

/// Probability of selecting slot `j` (1-based) and accepting it.
pub fn phi2(j: usize, x: &[f64], y: &[f64], weight: WeightKind) -> f64 {
    check_phi_args(j, x, y);
    multi_try_acceptance(weight, x, j - 1, y).log_alpha_joint.exp()
}

/// Sphere step `h` for a dimension-free scale `l`.
///
/// `h^2 = ((1 - a)^{-2} - 1) / (d - 1)` with `a = l^2 c / (2d)`, evaluated as
/// `a (2 - a) / ((1 - a)^2 (d - 1))`.
pub fn ell_to_h(dim: usize, lambda: f64, ell: f64) -> Result<f64, ScalingError> {
    if dim < 2 {
        return Err(ScalingError::OutOfRange(format!("needs d >= 2, got {dim}")));
    }
    if !(lambda > 0.0) || !(ell >= 0.0) || !ell.is_finite() {
        return Err(ScalingError::OutOfRange(format!("lambda = {lambda}, l = {ell}")));
    }
    let a = ell * ell * sphere_curvature(lambda) / (2.0 * dim as f64);
    if !(a < 1.0) {
        return Err(ScalingError::OutOfRange(format!(
            "l = {ell} too large for d = {dim}, lambda = {lambda}"
        )));
    }
    Ok((a * (2.0 - a) / ((1.0 - a) * (1.0 - a) * (dim as f64 - 1.0))).sqrt())
}

/// Inverse of [`ell_to_h`].
pub fn h_to_ell(dim: usize, lambda: f64, h: f64) -> Result<f64, ScalingError> {
    if dim < 2 {
        return Err(ScalingError::OutOfRange(format!("needs d >= 2, got {dim}")));
    }
    if !(lambda > 0.0) || !(h >= 0.0) || !h.is_finite() {
        return Err(ScalingError::OutOfRange(format!("lambda = {lambda}, h = {h}")));
    }
    let u = h * h * (dim as f64 - 1.0);
    let s = (1.0 + u).sqrt();
    // a = 1 - 1/sqrt(1 + u) without cancellation
    let a = u / (s * (1.0 + s));
    Ok((2.0 * dim as f64 * a / sphere_curvature(lambda)).sqrt())
}

/// Monte Carlo mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub samples: u64,
}

impl From<&RunningMoments> for McEstimate {
    fn from(m: &RunningMoments) -> Self {
        Self {
            mean: m.mean(),
            std_error: m.std_error(),
            samples: m.count,
        }
    }
}

/// Limit law without the step scale and candidate count, which a sweep varies.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LimitModel {
    pub geometry: LimitGeometry,
    pub fisher: f64,
    pub weight: WeightKind,
}

/// Estimates on an `ells x ns` grid.
#[derive(Debug, Clone, PartialEq)]
pub struct LimitSweep {
    pub ells: Vec<f64>,
    pub ns: Vec<usize>,
    /// Total acceptance `N E[phi2(1, W, V)]`, indexed `[ell][n]`.
    pub acceptance: Vec<Vec<McEstimate>>,
    /// `N l^2 E[phi1(1, W, V)]`, indexed `[ell][n]`.
    pub esjd: Vec<Vec<McEstimate>>,
}

impl LimitSweep {
    pub fn acceptance_at(&self, ell_index: usize, n: usize) -> Option<McEstimate> {
        let k = self.ns.iter().position(|&m| m == n)?;
        Some(self.acceptance[ell_index][k])
    }

    pub fn esjd_at(&self, ell_index: usize, n: usize) -> Option<McEstimate> {
        let k = self.ns.iter().position(|&m| m == n)?;
        Some(self.esjd[ell_index][k])
    }
}

const SWEEP_BLOCK: usize = 4096;

/// Monte Carlo estimates of the limit acceptance and ESJD over a grid.
///
/// Sample `k` draws standard normals `xi_1..xi_Nmax` and `eta_1..eta_{Nmax-1}`
/// from its own substream and maps them to `W_i = mu(l) + sigma(l) xi_i`,
/// `V_i = mu(l) + sigma(l) eta_i` for every `l`. Smaller `N` use prefixes.
/// Blocks of samples are reduced in a fixed order, so the result does not
/// depend on the number of threads.
pub fn limit_sweep(
    model: &LimitModel,
    ells: &[f64],
    ns: &[usize],
    n_samples: usize,
    seed: u64,
) -> Result<LimitSweep, ScalingError> {
    if ells.is_empty() || ns.is_empty() {
        return Err(ScalingError::InvalidArgument("empty grid".into()));
    }
    if ns.contains(&0) {
        return Err(ScalingError::InvalidArgument("N must be at least 1".into()));
    }
    if n_samples < 2 {
        return Err(ScalingError::InvalidArgument("need at least two samples".into()));
    }
    if ells.iter().any(|&l| !(l >= 0.0 && l.is_finite())) {
        return Err(ScalingError::InvalidArgument("step scales must be finite and non-negative".into()));
    }
    let laws: Vec<LimitGaussian> = ells
        .iter()
        .map(|&l| limit_gaussian_for(model.geometry, model.fisher, l))
        .collect::<Result<_, _>>()?;
    let n_max = *ns.iter().max().unwrap();
    let key = StreamKey::new(seed, 0);
    let cells = ells.len() * ns.len();
    let blocks = n_samples.div_ceil(SWEEP_BLOCK);

    let partial: Vec<(Vec<RunningMoments>, Vec<RunningMoments>)> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut acc = vec![RunningMoments::default(); cells];
            let mut jump = vec![RunningMoments::default(); cells];
            let mut xi = vec![0.0; n_max];
            let mut eta = vec![0.0; n_max.saturating_sub(1)];
            let mut w = vec![0.0; n_max];
            let mut v = vec![0.0; n_max.saturating_sub(1)];
            let end = ((b + 1) * SWEEP_BLOCK).min(n_samples);
            for k in b * SWEEP_BLOCK..end {
                let streams = key.step(k as u64);
                fill_normals(&mut xi, streams.candidate(0));
                fill_normals(&mut eta, streams.reference(0));
                for (li, (&ell, law)) in ells.iter().zip(&laws).enumerate() {
                    let sd = law.sigma();
                    for (o, &e) in w.iter_mut().zip(&xi) {
                        *o = law.mu + sd * e;
                    }
                    for (o, &e) in v.iter_mut().zip(&eta) {
                        *o = law.mu + sd * e;
                    }
                    for (ni, &n) in ns.iter().enumerate() {
                        let a = multi_try_acceptance(model.weight, &w[..n], 0, &v[..n - 1]);
                        let cell = li * ns.len() + ni;
                        acc[cell].push(n as f64 * a.log_alpha_joint.exp());
                        jump[cell].push(n as f64 * ell * ell * a.log_alpha.exp());
                    }
                }
            }
            (acc, jump)
        })
        .collect();

    let mut acc = vec![RunningMoments::default(); cells];
    let mut jump = vec![RunningMoments::default(); cells];
    for (pa, pj) in &partial {
        for c in 0..cells {
            acc[c].merge(&pa[c]);
            jump[c].merge(&pj[c]);
        }
    }
    let grid = |m: &[RunningMoments]| -> Vec<Vec<McEstimate>> {
        m.chunks(ns.len()).map(|row| row.iter().map(McEstimate::from).collect()).collect()
    };
    Ok(LimitSweep {
        ells: ells.to_vec(),
        ns: ns.to_vec(),
        acceptance: grid(&acc),
        esjd: grid(&jump),
    })
}

fn fill_normals(out: &mut [f64], mut rng: ChaCha8Rng) {
    for o in out {
        *o = rng.sample(StandardNormal);
    }
}

/// Total acceptance limit `sum_j E[phi2(j, W, V)] = N E[phi2(1, W, V)]`.
pub fn mc_limit_total_acceptance(
    params: &ScalingParams,
    n_samples: usize,
    seed: u64,
) -> Result<McEstimate, ScalingError> {
    check_mc_samples(n_samples)?;
    let s = limit_sweep(&params.model(), &[params.ell], &[params.n_candidates], n_samples, seed)?;
    Ok(s.acceptance[0][0])
}

/// ESJD limit `N l^2 E[phi1(1, W, V)]`.
pub fn mc_limit_esjd(params: &ScalingParams, n_samples: usize, seed: u64) -> Result<McEstimate, ScalingError> {
    check_mc_samples(n_samples)?;
    let s = limit_sweep(&params.model(), &[params.ell], &[params.n_candidates], n_samples, seed)?;
    Ok(s.esjd[0][0])
}

fn check_mc_samples(n: usize) -> Result<(), ScalingError> {
    if n < 1000 {
        return Err(ScalingError::InvalidArgument(format!("need at least 1000 samples, got {n}")));
    }
    Ok(())
}

/// Evenly spaced step scales `lo, .., hi`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EllGrid {
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
}

impl EllGrid {
    pub fn new(lo: f64, hi: f64, points: usize) -> Result<Self, ScalingError> {
        if points == 0 || !(lo >= 0.0) || !(hi >= lo) || !hi.is_finite() {
            return Err(ScalingError::InvalidArgument(format!(
                "bad grid [{lo}, {hi}] with {points} points"
            )));
        }
        Ok(Self { lo, hi, points })
    }

    pub fn values(&self) -> Vec<f64> {
        if self.points == 1 {
            return vec![self.lo];
        }
        let step = (self.hi - self.lo) / (self.points - 1) as f64;
        (0..self.points).map(|i| self.lo + step * i as f64).collect()
    }

    pub fn spacing(&self) -> f64 {
        if self.points == 1 {
            0.0
        } else {
            (self.hi - self.lo) / (self.points - 1) as f64
        }
    }

    /// Grid over the same range with half the spacing.
    pub fn refined(&self) -> Self {
        Self {
            points: 2 * self.points - 1,
            ..*self
        }
    }
}

/// Grid point maximizing the limit ESJD, with the acceptance there.
#[derive(Debug, Clone, PartialEq)]
pub struct EllOptimum {
    pub ell: f64,
    pub esjd: McEstimate,
    pub acceptance: McEstimate,
    /// `(l, esjd, acceptance)` over the whole grid.
    pub curve: Vec<(f64, f64, f64)>,
}

pub fn optimize_ell(
    model: &LimitModel,
    n_candidates: usize,
    grid: &EllGrid,
    n_samples: usize,
    seed: u64,
) -> Result<EllOptimum, ScalingError> {
    let ells = grid.values();
    let sweep = limit_sweep(model, &ells, &[n_candidates], n_samples, seed)?;
    let best = (0..ells.len())
        .max_by(|&a, &b| sweep.esjd[a][0].mean.total_cmp(&sweep.esjd[b][0].mean))
        .expect("non-empty grid");
    Ok(EllOptimum {
        ell: ells[best],
        esjd: sweep.esjd[best][0],
        acceptance: sweep.acceptance[best][0],
        curve: ells
            .iter()
            .enumerate()
            .map(|(i, &l)| (l, sweep.esjd[i][0].mean, sweep.acceptance[i][0].mean))
            .collect(),
    })
}
