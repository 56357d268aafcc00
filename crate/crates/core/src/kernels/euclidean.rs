//! Random-walk Metropolis and multiple-try Metropolis with Gaussian
//! proposals in the plane.

use rand::Rng;
use rand_distr::StandardNormal;

use super::weights::{accept_draw, clamp_log_prob, multi_try_acceptance, select_candidate};
use super::{map_indices, ChainState, KernelConfig, KernelError, StepResult};
use crate::math::squared_distance;
use crate::rng::StepStreams;
use crate::targets::LogDensity;

fn gaussian_step<R: Rng>(x: &[f64], scale: f64, mut rng: R) -> Vec<f64> {
    x.iter()
        .map(|&v| v + scale * rng.sample::<f64, _>(StandardNormal))
        .collect()
}

fn finite_or_neg_inf(v: f64) -> f64 {
    if v.is_nan() {
        f64::NEG_INFINITY
    } else {
        v
    }
}

/// Metropolis step with proposal `N(x, step^2 I)`.
pub fn rwm_step<T: LogDensity + ?Sized>(
    target: &T,
    state: &ChainState,
    step: f64,
    streams: &StepStreams<'_>,
) -> Result<StepResult, KernelError> {
    let y = gaussian_step(&state.x, step, streams.candidate(0));
    let lp_y = finite_or_neg_inf(target.log_density(&y));
    let log_alpha = clamp_log_prob(lp_y - state.log_density);
    let accepted = accept_draw(log_alpha, &mut streams.control());
    let alpha = log_alpha.exp();
    let sq = squared_distance(&y, &state.x);
    Ok(StepResult {
        next: if accepted {
            ChainState { x: y, log_density: lp_y }
        } else {
            state.clone()
        },
        accepted,
        chosen_index: Some(0),
        alpha,
        selection_prob: 1.0,
        alpha_joint: alpha,
        candidate_sq_jump: sq,
    })
}

/// Multiple-try Metropolis with `N` Gaussian candidates and `N - 1`
/// references drawn around the selected one.
pub fn mtm_step<T: LogDensity + ?Sized>(
    target: &T,
    state: &ChainState,
    config: &KernelConfig,
    streams: &StepStreams<'_>,
) -> Result<StepResult, KernelError> {
    let n = config.n_candidates;
    let par = config.parallel(n);
    let step = config.step;
    let candidates: Vec<(Vec<f64>, f64)> = map_indices(n, par, |i| {
        let y = gaussian_step(&state.x, step, streams.candidate(i));
        let lp = finite_or_neg_inf(target.log_density(&y));
        (y, lp)
    });
    let x: Vec<f64> = candidates.iter().map(|c| c.1 - state.log_density).collect();
    let log_w: Vec<f64> = x.iter().map(|&v| config.weight.log_weight(v)).collect();
    let mut control = streams.control();
    let j = match select_candidate(&log_w, &mut control) {
        Ok(j) => j,
        Err(KernelError::AllWeightsDegenerate) => return Ok(StepResult::stay(state)),
        Err(e) => return Err(e),
    };
    let (yj, lp_j) = &candidates[j];
    let y: Vec<f64> = map_indices(n - 1, config.parallel(n - 1), |i| {
        let z = gaussian_step(yj, step, streams.reference(i));
        finite_or_neg_inf(target.log_density(&z)) - lp_j
    });
    let acc = multi_try_acceptance(config.weight, &x, j, &y);
    let accepted = accept_draw(acc.log_alpha, &mut control);
    let sq = squared_distance(yj, &state.x);
    let next = if accepted {
        let (y, lp) = candidates.into_iter().nth(j).expect("selected index in range");
        ChainState { x: y, log_density: lp }
    } else {
        state.clone()
    };
    Ok(StepResult {
        next,
        accepted,
        chosen_index: Some(j),
        alpha: acc.log_alpha.exp(),
        selection_prob: acc.log_selection.exp(),
        alpha_joint: acc.log_alpha_joint.exp(),
        candidate_sq_jump: sq,
    })
}
