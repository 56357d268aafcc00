//! Stereographic random-walk Metropolis and its multiple-try version.

use rand::Rng;

use super::weights::{accept_draw, clamp_log_prob, multi_try_acceptance, select_candidate};
use super::{map_indices, ChainState, KernelConfig, KernelError, StepResult};
use crate::geometry::{tangent_rw_propose, SpherePoint, StereoChart};
use crate::math::squared_distance;
use crate::rng::StepStreams;
use crate::targets::LogDensity;

/// A proposed sphere point with its plane image and densities. Points at
/// the north pole have no image and log sphere density `-inf`.
#[derive(Debug, Clone)]
pub(crate) struct SphereCandidate {
    pub z: SpherePoint,
    pub x: Option<Vec<f64>>,
    pub log_pi: f64,
    pub log_pi_s: f64,
}

impl SphereCandidate {
    pub fn evaluate<T: LogDensity + ?Sized>(target: &T, chart: &StereoChart, z: SpherePoint) -> Self {
        match chart.sp_forward(&z) {
            Ok(x) => {
                let log_pi = target.log_density(&x);
                let log_pi_s = log_pi + chart.log_jacobian(&x);
                let log_pi_s = if log_pi_s.is_nan() { f64::NEG_INFINITY } else { log_pi_s };
                Self {
                    z,
                    x: Some(x),
                    log_pi,
                    log_pi_s,
                }
            }
            Err(_) => Self {
                z,
                x: None,
                log_pi: f64::NEG_INFINITY,
                log_pi_s: f64::NEG_INFINITY,
            },
        }
    }

    pub fn draw<T: LogDensity + ?Sized, R: Rng>(
        target: &T,
        chart: &StereoChart,
        from: &SpherePoint,
        h: f64,
        mut rng: R,
    ) -> Result<Self, KernelError> {
        let z = tangent_rw_propose(from, h, &mut rng)?;
        Ok(Self::evaluate(target, chart, z))
    }

    pub fn into_state(self) -> Option<ChainState> {
        self.x.map(|x| ChainState {
            x,
            log_density: self.log_pi,
        })
    }
}

/// Log sphere density of the current state, computed from its plane
/// coordinates.
pub(crate) fn current_log_pi_s(chart: &StereoChart, state: &ChainState) -> f64 {
    state.log_density + chart.log_jacobian(&state.x)
}

fn plane_sq_jump(c: &SphereCandidate, state: &ChainState) -> f64 {
    c.x.as_ref().map_or(0.0, |x| squared_distance(x, &state.x))
}

/// Stereographic random-walk Metropolis.
pub fn srwm_step<T: LogDensity + ?Sized>(
    target: &T,
    state: &ChainState,
    config: &KernelConfig,
    streams: &StepStreams<'_>,
) -> Result<StepResult, KernelError> {
    let chart = config.chart();
    let z = chart.sp_inverse(&state.x);
    let lps = current_log_pi_s(chart, state);
    let cand = SphereCandidate::draw(target, chart, &z, config.step, streams.candidate(0))?;
    let log_alpha = clamp_log_prob(cand.log_pi_s - lps);
    let accepted = accept_draw(log_alpha, &mut streams.control());
    let alpha = log_alpha.exp();
    let sq = plane_sq_jump(&cand, state);
    let next = match accepted.then(|| cand.into_state()).flatten() {
        Some(s) => s,
        None => state.clone(),
    };
    Ok(StepResult {
        next,
        accepted,
        chosen_index: Some(0),
        alpha,
        selection_prob: 1.0,
        alpha_joint: alpha,
        candidate_sq_jump: sq,
    })
}

fn draw_candidates<T: LogDensity + ?Sized>(
    target: &T,
    config: &KernelConfig,
    from: &SpherePoint,
    n: usize,
    rng_for: impl Fn(usize) -> rand_chacha::ChaCha8Rng + Sync + Send,
) -> Result<Vec<SphereCandidate>, KernelError> {
    let chart = config.chart();
    map_indices(n, config.parallel(n), |i| {
        SphereCandidate::draw(target, chart, from, config.step, rng_for(i))
    })
    .into_iter()
    .collect()
}

/// Stereographic multiple-try Metropolis.
pub fn smtm_step<T: LogDensity + ?Sized>(
    target: &T,
    state: &ChainState,
    config: &KernelConfig,
    streams: &StepStreams<'_>,
) -> Result<StepResult, KernelError> {
    let n = config.n_candidates;
    let chart = config.chart();
    let z = chart.sp_inverse(&state.x);
    let lps = current_log_pi_s(chart, state);
    let candidates = draw_candidates(target, config, &z, n, |i| streams.candidate(i))?;
    let x: Vec<f64> = candidates.iter().map(|c| c.log_pi_s - lps).collect();
    let log_w: Vec<f64> = x.iter().map(|&v| config.weight.log_weight(v)).collect();
    let mut control = streams.control();
    let j = match select_candidate(&log_w, &mut control) {
        Ok(j) => j,
        Err(KernelError::AllWeightsDegenerate) => return Ok(StepResult::stay(state)),
        Err(e) => return Err(e),
    };
    let chosen = &candidates[j];
    let references = draw_candidates(target, config, &chosen.z, n - 1, |i| streams.reference(i))?;
    let y: Vec<f64> = references.iter().map(|r| r.log_pi_s - chosen.log_pi_s).collect();
    let acc = multi_try_acceptance(config.weight, &x, j, &y);
    let accepted = accept_draw(acc.log_alpha, &mut control);
    let sq = plane_sq_jump(chosen, state);
    let next = if accepted {
        candidates
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
        alpha: acc.log_alpha.exp(),
        selection_prob: acc.log_selection.exp(),
        alpha_joint: acc.log_alpha_joint.exp(),
        candidate_sq_jump: sq,
    })
}

/// Acceptance of the first candidate as if it had been selected.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeResult {
    /// `alpha_1` of candidate 0 with references drawn around it.
    pub alpha_first: f64,
    /// `|candidate 0 - current|^2` in the plane.
    pub sq_jump_first: f64,
}

/// Draws one SMTM step's candidates and the references of candidate 0 and
/// reports candidate 0's acceptance probability without moving the chain.
/// Its mean over stationary states estimates `E[alpha_1]` for a fixed slot.
pub fn smtm_probe<T: LogDensity + ?Sized>(
    target: &T,
    state: &ChainState,
    config: &KernelConfig,
    streams: &StepStreams<'_>,
) -> Result<ProbeResult, KernelError> {
    let n = config.n_candidates;
    let chart = config.chart();
    let z = chart.sp_inverse(&state.x);
    let lps = current_log_pi_s(chart, state);
    let candidates = draw_candidates(target, config, &z, n, |i| streams.candidate(i))?;
    let x: Vec<f64> = candidates.iter().map(|c| c.log_pi_s - lps).collect();
    let first = &candidates[0];
    if first.x.is_none() {
        return Ok(ProbeResult {
            alpha_first: 0.0,
            sq_jump_first: 0.0,
        });
    }
    let references = draw_candidates(target, config, &first.z, n - 1, |i| streams.reference(i))?;
    let y: Vec<f64> = references.iter().map(|r| r.log_pi_s - first.log_pi_s).collect();
    let acc = multi_try_acceptance(config.weight, &x, 0, &y);
    Ok(ProbeResult {
        alpha_first: acc.log_alpha.exp(),
        sq_jump_first: plane_sq_jump(first, state),
    })
}
