//! One-step transition kernels.
//!
//! Every step draws its randomness from the [`StepStreams`] of its
//! iteration: candidate `i` from candidate lane `i`, reference `i` from
//! reference lane `i`, selection noise and the accept uniform from the
//! control lane. Candidate work may therefore run on any number of threads
//! without changing the result.

mod euclidean;
mod ideal;
mod sphere;
pub mod weights;

use std::fmt;

use rayon::prelude::*;
use thiserror::Error;

use crate::geometry::{GeometryError, StereoChart};
use crate::rng::{StepStreams, StreamKey};
use crate::targets::{LogDensity, TargetError};

pub use euclidean::{mtm_step, rwm_step};
pub use ideal::ideal_step;
pub use sphere::{smtm_probe, smtm_step, srwm_step, ProbeResult};
pub use weights::{multi_try_acceptance, select_candidate, MultiTryAcceptance, WeightKind};

/// Default candidate count at which candidate evaluation fans out to rayon.
pub const DEFAULT_PARALLEL_THRESHOLD: usize = 8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KernelError {
    #[error("invalid kernel configuration: {0}")]
    InvalidConfig(String),
    #[error("every candidate has zero weight")]
    AllWeightsDegenerate,
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Target(#[from] TargetError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum KernelKind {
    Rwm,
    Mtm,
    Srwm,
    Smtm,
    Ideal,
}

impl KernelKind {
    pub fn is_spherical(self) -> bool {
        matches!(self, Self::Srwm | Self::Smtm | Self::Ideal)
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Rwm => "rwm",
            Self::Mtm => "mtm",
            Self::Srwm => "srwm",
            Self::Smtm => "smtm",
            Self::Ideal => "ideal",
        }
    }
}

impl fmt::Display for KernelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KernelConfig {
    pub kind: KernelKind,
    pub n_candidates: usize,
    pub weight: WeightKind,
    /// Euclidean proposal scale for RWM/MTM, sphere step `h` otherwise.
    pub step: f64,
    pub chart: Option<StereoChart>,
    /// Inner sample size of the ideal scheme.
    pub ideal_inner_m: usize,
    pub parallel_threshold: usize,
}

impl KernelConfig {
    fn base(kind: KernelKind, n: usize, weight: WeightKind, step: f64, chart: Option<StereoChart>) -> Self {
        Self {
            kind,
            n_candidates: n,
            weight,
            step,
            chart,
            ideal_inner_m: 0,
            parallel_threshold: DEFAULT_PARALLEL_THRESHOLD,
        }
    }

    pub fn rwm(step: f64) -> Self {
        Self::base(KernelKind::Rwm, 1, WeightKind::GloballyBalanced, step, None)
    }

    pub fn mtm(n: usize, weight: WeightKind, step: f64) -> Self {
        Self::base(KernelKind::Mtm, n, weight, step, None)
    }

    pub fn srwm(chart: StereoChart, h: f64) -> Self {
        Self::base(KernelKind::Srwm, 1, WeightKind::GloballyBalanced, h, Some(chart))
    }

    pub fn smtm(chart: StereoChart, n: usize, weight: WeightKind, h: f64) -> Self {
        Self::base(KernelKind::Smtm, n, weight, h, Some(chart))
    }

    pub fn ideal(chart: StereoChart, inner_m: usize, weight: WeightKind, h: f64) -> Self {
        let mut c = Self::base(KernelKind::Ideal, 1, weight, h, Some(chart));
        c.ideal_inner_m = inner_m;
        c
    }

    pub fn with_parallel_threshold(mut self, threshold: usize) -> Self {
        self.parallel_threshold = threshold;
        self
    }

    pub fn validate(&self, dim: usize) -> Result<(), KernelError> {
        let bad = |m: String| Err(KernelError::InvalidConfig(m));
        if !(self.step.is_finite() && self.step > 0.0) {
            return bad(format!("step must be positive, got {}", self.step));
        }
        if self.n_candidates == 0 {
            return bad("n_candidates must be at least 1".into());
        }
        if self.n_candidates > crate::rng::MAX_INDEX + 1 {
            return bad(format!("n_candidates above {}", crate::rng::MAX_INDEX + 1));
        }
        if matches!(self.kind, KernelKind::Rwm | KernelKind::Srwm) && self.n_candidates != 1 {
            return bad(format!("{} uses a single candidate", self.kind));
        }
        if self.kind == KernelKind::Ideal
            && !(2..=crate::rng::MAX_INDEX + 1).contains(&self.ideal_inner_m)
        {
            return bad(format!("ideal scheme needs inner M >= 2, got {}", self.ideal_inner_m));
        }
        match (&self.chart, self.kind.is_spherical()) {
            (None, true) => bad(format!("{} needs a stereographic chart", self.kind)),
            (Some(c), true) if c.dim() != dim => bad(format!(
                "chart dimension {} does not match target dimension {dim}",
                c.dim()
            )),
            _ => Ok(()),
        }
    }

    pub(crate) fn chart(&self) -> &StereoChart {
        self.chart.as_ref().expect("validated spherical kernel has a chart")
    }

    pub(crate) fn parallel(&self, n: usize) -> bool {
        n >= self.parallel_threshold && n > 1
    }
}

/// Current position and its cached unnormalized log density.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainState {
    pub x: Vec<f64>,
    pub log_density: f64,
}

impl ChainState {
    pub fn new<T: LogDensity + ?Sized>(target: &T, x: Vec<f64>) -> Result<Self, KernelError> {
        if x.len() != target.dim() {
            return Err(TargetError::DimensionMismatch {
                expected: target.dim(),
                got: x.len(),
            }
            .into());
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(KernelError::InvalidConfig("initial state must be finite".into()));
        }
        let log_density = target.log_density(&x);
        Ok(Self { x, log_density })
    }
}

/// Outcome of one transition.
#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub next: ChainState,
    pub accepted: bool,
    /// Selected candidate (0-based), `None` when no candidate was usable.
    pub chosen_index: Option<usize>,
    /// Acceptance probability of the selected candidate.
    pub alpha: f64,
    /// Probability with which the selected candidate was chosen.
    pub selection_prob: f64,
    /// `selection_prob * alpha`.
    pub alpha_joint: f64,
    /// `|chosen candidate - current|^2` in the plane.
    pub candidate_sq_jump: f64,
}

impl StepResult {
    pub(crate) fn stay(state: &ChainState) -> Self {
        Self {
            next: state.clone(),
            accepted: false,
            chosen_index: None,
            alpha: 0.0,
            selection_prob: 0.0,
            alpha_joint: 0.0,
            candidate_sq_jump: 0.0,
        }
    }
}

/// One transition of the configured kernel.
pub fn step<T: LogDensity + ?Sized>(
    target: &T,
    state: &ChainState,
    config: &KernelConfig,
    streams: &StepStreams<'_>,
) -> Result<StepResult, KernelError> {
    match config.kind {
        KernelKind::Rwm => rwm_step(target, state, config.step, streams),
        KernelKind::Mtm => mtm_step(target, state, config, streams),
        KernelKind::Srwm => srwm_step(target, state, config, streams),
        KernelKind::Smtm => smtm_step(target, state, config, streams),
        KernelKind::Ideal => ideal_step(target, state, config, streams),
    }
}

/// Evaluates `f(i)` for `i in 0..n`, in parallel when asked to. Output
/// order is the index order either way.
pub(crate) fn map_indices<U, F>(n: usize, parallel: bool, f: F) -> Vec<U>
where
    U: Send,
    F: Fn(usize) -> U + Sync + Send,
{
    if parallel {
        (0..n).into_par_iter().map(f).collect()
    } else {
        (0..n).map(f).collect()
    }
}

/// A Markov chain driven by keyed substreams.
#[derive(Debug, Clone)]
pub struct Chain<'a, T: LogDensity + ?Sized> {
    target: &'a T,
    config: KernelConfig,
    key: StreamKey,
    state: ChainState,
    iteration: u64,
}

impl<'a, T: LogDensity + ?Sized> Chain<'a, T> {
    pub fn new(
        target: &'a T,
        config: KernelConfig,
        x0: Vec<f64>,
        seed: u64,
        chain_id: u64,
    ) -> Result<Self, KernelError> {
        config.validate(target.dim())?;
        let state = ChainState::new(target, x0)?;
        Ok(Self {
            target,
            config,
            key: StreamKey::new(seed, chain_id),
            state,
            iteration: 0,
        })
    }

    pub fn state(&self) -> &ChainState {
        &self.state
    }

    pub fn iteration(&self) -> u64 {
        self.iteration
    }

    pub fn config(&self) -> &KernelConfig {
        &self.config
    }

    /// Advances one iteration and returns its result.
    pub fn advance(&mut self) -> Result<StepResult, KernelError> {
        let streams = self.key.step(self.iteration);
        let result = step(self.target, &self.state, &self.config, &streams)?;
        self.iteration += 1;
        self.state = result.next.clone();
        Ok(result)
    }

    /// Streams of the next iteration without advancing.
    pub fn peek_streams(&self) -> StepStreams<'_> {
        self.key.step(self.iteration)
    }
}

#[cfg(test)]
mod tests;
