//! Monte Carlo approximation of the ideal (infinitely many tries) scheme.
//!
//! The limit proposal `Q(z, .) ∝ omega(z, .) Q_S(z, .)` is approximated by
//! sampling-importance-resampling from `M` tangent proposals, and its
//! normalizer `C(z) = ∫ omega(z, y) Q_S(z, dy)` by the average of the same
//! `M` weights. `C` at the proposed point uses `M` fresh draws from there.
//! The estimated acceptance
//!
//! `pi_S(z') omega(z', z) C(z) / (pi_S(z) omega(z, z') C(z'))`
//!
//! carries an `O(1/M)` bias, so this kernel is a diagnostic rather than an
//! exactly invariant sampler.

use super::sphere::{current_log_pi_s, SphereCandidate};
use super::weights::{accept_draw, clamp_log_prob, select_candidate};
use super::{map_indices, ChainState, KernelConfig, KernelError, StepResult};
use crate::math::{log_sum_exp, squared_distance};
use crate::rng::StepStreams;
use crate::targets::LogDensity;

pub fn ideal_step<T: LogDensity + ?Sized>(
    target: &T,
    state: &ChainState,
    config: &KernelConfig,
    streams: &StepStreams<'_>,
) -> Result<StepResult, KernelError> {
    let m = config.ideal_inner_m;
    let chart = config.chart();
    let weight = config.weight;
    let z = chart.sp_inverse(&state.x);
    let lps = current_log_pi_s(chart, state);
    let par = config.parallel(m);

    let draws: Vec<SphereCandidate> = map_indices(m, par, |i| {
        SphereCandidate::draw(target, chart, &z, config.step, streams.candidate(i))
    })
    .into_iter()
    .collect::<Result<_, _>>()?;
    let log_w: Vec<f64> = draws.iter().map(|c| weight.log_weight(c.log_pi_s - lps)).collect();
    let mut control = streams.control();
    let j = match select_candidate(&log_w, &mut control) {
        Ok(j) => j,
        Err(KernelError::AllWeightsDegenerate) => return Ok(StepResult::stay(state)),
        Err(e) => return Err(e),
    };
    let ln_m = (m as f64).ln();
    let log_c_here = log_sum_exp(&log_w) - ln_m;
    let chosen = &draws[j];
    let log_c_there = if chosen.z == z {
        log_c_here
    } else {
        let back: Vec<f64> = map_indices(m, par, |i| {
            SphereCandidate::draw(target, chart, &chosen.z, config.step, streams.reference(i))
                .map(|r| weight.log_weight(r.log_pi_s - chosen.log_pi_s))
        })
        .into_iter()
        .collect::<Result<_, _>>()?;
        log_sum_exp(&back) - ln_m
    };
    let forward = lps + weight.log_weight(chosen.log_pi_s - lps) + log_c_there;
    let backward = chosen.log_pi_s + weight.log_weight(lps - chosen.log_pi_s) + log_c_here;
    let log_alpha = clamp_log_prob(backward - forward);
    let accepted = accept_draw(log_alpha, &mut control);
    let alpha = log_alpha.exp();
    let selection_prob = (log_w[j] - log_sum_exp(&log_w)).exp();
    let sq = chosen.x.as_ref().map_or(0.0, |x| squared_distance(x, &state.x));
    let next = if accepted {
        draws
            .into_iter()
            .nth(j)
            .and_then(SphereCandidate::into_state)
            .unwrap_or_else(|| state.clone())
    } else {
        state.clone()
    };
    Ok(StepResult {
        next,
        accepted,
        chosen_index: Some(j),
        alpha,
        selection_prob,
        alpha_joint: selection_prob * alpha,
        candidate_sq_jump: sq,
    })
}
