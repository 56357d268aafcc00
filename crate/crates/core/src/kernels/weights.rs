//! Weight functions, candidate selection and the multiple-try acceptance
//! probabilities, all in the log domain.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::Gumbel;

use super::KernelError;
use crate::math::log_sum_exp_iter;

/// Weight `omega(z, y)` as a function of the density ratio `pi(y) / pi(z)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum WeightKind {
    /// `omega = pi(y) / pi(z)`.
    GloballyBalanced,
    /// `omega = sqrt(pi(y) / pi(z))`.
    LocallyBalanced,
}

impl WeightKind {
    /// Log weight given the log density ratio.
    #[inline]
    pub fn log_weight(self, log_ratio: f64) -> f64 {
        match self {
            Self::GloballyBalanced => log_ratio,
            Self::LocallyBalanced => 0.5 * log_ratio,
        }
    }

    pub fn short_name(self) -> &'static str {
        match self {
            Self::GloballyBalanced => "gb",
            Self::LocallyBalanced => "lb",
        }
    }
}

impl fmt::Display for WeightKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short_name())
    }
}

impl FromStr for WeightKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "gb" | "global" | "globally-balanced" => Ok(Self::GloballyBalanced),
            "lb" | "local" | "locally-balanced" => Ok(Self::LocallyBalanced),
            other => Err(format!("unknown weight `{other}` (expected gb or lb)")),
        }
    }
}

/// Draws an index with probability proportional to `exp(log_weights[i])`
/// by the Gumbel-max trick. NaN weights count as `-inf`.
///
/// A single candidate is returned without consuming randomness.
pub fn select_candidate<R: Rng + ?Sized>(
    log_weights: &[f64],
    rng: &mut R,
) -> Result<usize, KernelError> {
    let usable = |w: f64| !w.is_nan() && w > f64::NEG_INFINITY;
    if log_weights.len() == 1 {
        return if usable(log_weights[0]) {
            Ok(0)
        } else {
            Err(KernelError::AllWeightsDegenerate)
        };
    }
    let gumbel = Gumbel::new(0.0, 1.0).expect("unit Gumbel");
    let mut best = None;
    let mut best_key = f64::NEG_INFINITY;
    for (i, &w) in log_weights.iter().enumerate() {
        // one draw per slot keeps the stream layout independent of the weights
        let g: f64 = rng.sample(gumbel);
        if !usable(w) {
            continue;
        }
        let key = w + g;
        if best.is_none() || key > best_key {
            best = Some(i);
            best_key = key;
        }
    }
    best.ok_or(KernelError::AllWeightsDegenerate)
}

/// Log acceptance probabilities of one multiple-try step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MultiTryAcceptance {
    /// `ln alpha_1`: acceptance given the selected candidate.
    pub log_alpha: f64,
    /// `ln alpha_2`: probability of selecting and accepting the candidate.
    pub log_alpha_joint: f64,
    /// Log selection probability of the candidate.
    pub log_selection: f64,
}

/// Acceptance of candidate `j`.
///
/// `x[i]` is the log density ratio of candidate `i` against the current
/// state and `y[i]` that of reference `i` against candidate `j`. With
/// `N = 1` (`y` empty) this is exactly `min(0, x[0])`.
pub fn multi_try_acceptance(weight: WeightKind, x: &[f64], j: usize, y: &[f64]) -> MultiTryAcceptance {
    debug_assert!(j < x.len());
    let xj = x[j];
    let (num, den) = match weight {
        WeightKind::GloballyBalanced => (
            log_sum_exp_iter(x.iter().copied()),
            log_sum_exp_iter(y.iter().map(|&yi| xj + yi).chain(std::iter::once(0.0))),
        ),
        WeightKind::LocallyBalanced => (
            log_sum_exp_iter(x.iter().map(|&xi| 0.5 * (xi + xj))),
            log_sum_exp_iter(y.iter().map(|&yi| 0.5 * (xj + yi)).chain(std::iter::once(0.0))),
        ),
    };
    let log_alpha = clamp_log_prob(num - den);
    // for both weights the selection probability of j is exp(x_j - num)
    let log_selection = xj - num;
    let log_alpha_joint = if xj == f64::NEG_INFINITY {
        f64::NEG_INFINITY
    } else {
        log_selection.min(xj - den)
    };
    MultiTryAcceptance {
        log_alpha,
        log_alpha_joint,
        log_selection,
    }
}

/// `min(0, v)` with NaN mapped to `-inf`.
#[inline]
pub(crate) fn clamp_log_prob(v: f64) -> f64 {
    if v.is_nan() {
        f64::NEG_INFINITY
    } else {
        v.min(0.0)
    }
}

/// Accept when `u < exp(log_alpha)`; an exact 1 always accepts.
#[inline]
pub(crate) fn accept_draw<R: Rng + ?Sized>(log_alpha: f64, rng: &mut R) -> bool {
    let u: f64 = rng.random();
    log_alpha >= 0.0 || u.ln() < log_alpha
}
