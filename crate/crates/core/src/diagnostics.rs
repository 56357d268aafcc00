//! Chain traces and the estimators computed from them.

use std::io::{self, Write};

use thiserror::Error;

use crate::kernels::StepResult;
use crate::math::{batch_means_std_error, squared_distance, squared_norm};

/// Floor of the burn-in curve where the distance is zero.
pub const LOG_DISTANCE_FLOOR: f64 = -12.0;

/// Batches used for standard errors of correlated series.
pub const BATCHES: usize = 100;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiagnosticsError {
    #[error("no post-burn-in steps recorded")]
    EmptyTrace,
    #[error("trace keeps only summaries; full states are required")]
    RetentionTooCoarse,
    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("thinning must be at least 1")]
    InvalidThinning,
}

/// What a trace stores per retained iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Retention {
    /// The whole state vector.
    Full,
    /// First coordinate and norm only.
    Summary,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    /// Number of completed steps when the record was taken.
    pub iteration: u64,
    pub accepted: bool,
    pub alpha: f64,
    pub chosen: Option<usize>,
    pub x1: f64,
    pub norm: f64,
    pub state: Option<Vec<f64>>,
}

/// Running sum of squared jumps, rejections included.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct EsjdAccumulator {
    pub count: u64,
    pub sum: f64,
}

impl EsjdAccumulator {
    pub fn push(&mut self, sq_jump: f64) {
        self.count += 1;
        self.sum += sq_jump;
    }

    pub fn merge(&mut self, other: &Self) {
        self.count += other.count;
        self.sum += other.sum;
    }

    pub fn mean(&self) -> Option<f64> {
        (self.count > 0).then(|| self.sum / self.count as f64)
    }
}

/// Post-burn-in acceptance counts.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct AcceptanceCounter {
    pub steps: u64,
    pub accepted: u64,
    pub alpha_sum: f64,
}

impl AcceptanceCounter {
    pub fn push(&mut self, accepted: bool, alpha: f64) {
        self.steps += 1;
        self.accepted += u64::from(accepted);
        self.alpha_sum += alpha;
    }

    pub fn merge(&mut self, other: &Self) {
        self.steps += other.steps;
        self.accepted += other.accepted;
        self.alpha_sum += other.alpha_sum;
    }
}

/// Streaming record of one chain.
///
/// Every step updates the ESJD and acceptance accumulators (after
/// burn-in); every `thinning`-th step is also stored as a [`TraceRecord`].
#[derive(Debug, Clone)]
pub struct ChainTrace {
    retention: Retention,
    burn_in: u64,
    thinning: u64,
    initial: Vec<f64>,
    current: Vec<f64>,
    steps: u64,
    records: Vec<TraceRecord>,
    esjd: EsjdAccumulator,
    acceptance: AcceptanceCounter,
}

impl ChainTrace {
    pub fn new(x0: Vec<f64>, retention: Retention, burn_in: u64, thinning: u64) -> Result<Self, DiagnosticsError> {
        if thinning == 0 {
            return Err(DiagnosticsError::InvalidThinning);
        }
        Ok(Self {
            retention,
            burn_in,
            thinning,
            current: x0.clone(),
            initial: x0,
            steps: 0,
            records: Vec::new(),
            esjd: EsjdAccumulator::default(),
            acceptance: AcceptanceCounter::default(),
        })
    }

    pub fn push(&mut self, result: &StepResult) {
        self.steps += 1;
        let next = &result.next.x;
        if self.steps > self.burn_in {
            self.esjd.push(squared_distance(next, &self.current));
            self.acceptance.push(result.accepted, result.alpha);
        }
        if self.steps.is_multiple_of(self.thinning) {
            self.records.push(TraceRecord {
                iteration: self.steps,
                accepted: result.accepted,
                alpha: result.alpha,
                chosen: result.chosen_index,
                x1: next[0],
                norm: squared_norm(next).sqrt(),
                state: (self.retention == Retention::Full).then(|| next.clone()),
            });
        }
        self.current.clone_from(next);
    }

    pub fn retention(&self) -> Retention {
        self.retention
    }

    pub fn burn_in(&self) -> u64 {
        self.burn_in
    }

    pub fn thinning(&self) -> u64 {
        self.thinning
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn initial(&self) -> &[f64] {
        &self.initial
    }

    pub fn current(&self) -> &[f64] {
        &self.current
    }

    pub fn records(&self) -> &[TraceRecord] {
        &self.records
    }

    pub fn post_burn_in(&self) -> impl Iterator<Item = &TraceRecord> {
        let b = self.burn_in;
        self.records.iter().filter(move |r| r.iteration > b)
    }

    pub fn esjd_accumulator(&self) -> EsjdAccumulator {
        self.esjd
    }

    pub fn acceptance_counter(&self) -> AcceptanceCounter {
        self.acceptance
    }

    /// Mean recorded `alpha` after burn-in.
    pub fn mean_alpha(&self) -> Result<f64, DiagnosticsError> {
        if self.acceptance.steps == 0 {
            return Err(DiagnosticsError::EmptyTrace);
        }
        Ok(self.acceptance.alpha_sum / self.acceptance.steps as f64)
    }

    /// Writes `iter,accepted,alpha,chosen,x1,norm` and, with full retention,
    /// `x2..xd`. `chosen` is 1-based and empty when no candidate was usable.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        write!(out, "iter,accepted,alpha,chosen,x1,norm")?;
        let dim = self.initial.len();
        if self.retention == Retention::Full {
            for k in 2..=dim {
                write!(out, ",x{k}")?;
            }
        }
        writeln!(out)?;
        for r in &self.records {
            let chosen = r.chosen.map(|c| (c + 1).to_string()).unwrap_or_default();
            write!(
                out,
                "{},{},{},{},{},{}",
                r.iteration,
                u8::from(r.accepted),
                r.alpha,
                chosen,
                r.x1,
                r.norm
            )?;
            if let Some(s) = &r.state {
                for v in &s[1..] {
                    write!(out, ",{v}")?;
                }
            }
            writeln!(out)?;
        }
        Ok(())
    }
}

/// Mean squared jump per post-burn-in step, rejected steps counting zero.
pub fn esjd(trace: &ChainTrace) -> Result<f64, DiagnosticsError> {
    trace.esjd.mean().ok_or(DiagnosticsError::EmptyTrace)
}

/// ESJD recomputed from the stored states of an unthinned full trace.
pub fn esjd_from_states(trace: &ChainTrace) -> Result<f64, DiagnosticsError> {
    if trace.retention != Retention::Full || trace.thinning != 1 {
        return Err(DiagnosticsError::RetentionTooCoarse);
    }
    let mut acc = EsjdAccumulator::default();
    let mut prev: &[f64] = &trace.initial;
    for r in &trace.records {
        let s = r.state.as_deref().expect("full retention");
        if r.iteration > trace.burn_in {
            acc.push(squared_distance(s, prev));
        }
        prev = s;
    }
    acc.mean().ok_or(DiagnosticsError::EmptyTrace)
}

/// Fraction of accepted post-burn-in steps.
pub fn acceptance_rate(trace: &ChainTrace) -> Result<f64, DiagnosticsError> {
    let a = trace.acceptance;
    if a.steps == 0 {
        return Err(DiagnosticsError::EmptyTrace);
    }
    Ok(a.accepted as f64 / a.steps as f64)
}

/// `(iteration, log10 |x - reference|)` for the initial state and every
/// retained record, floored at [`LOG_DISTANCE_FLOOR`].
pub fn burnin_curve(trace: &ChainTrace, reference: &[f64]) -> Result<Vec<(u64, f64)>, DiagnosticsError> {
    if trace.retention != Retention::Full {
        return Err(DiagnosticsError::RetentionTooCoarse);
    }
    let log_dist = |x: &[f64]| squared_distance(x, reference).sqrt().log10().max(LOG_DISTANCE_FLOOR);
    let mut curve = Vec::with_capacity(trace.records.len() + 1);
    curve.push((0, log_dist(&trace.initial)));
    for r in &trace.records {
        curve.push((r.iteration, log_dist(r.state.as_deref().expect("full retention"))));
    }
    Ok(curve)
}

/// First iteration at which the curve is at or below `level`.
pub fn first_crossing(curve: &[(u64, f64)], level: f64) -> Option<u64> {
    curve.iter().find(|(_, v)| *v <= level).map(|(t, _)| *t)
}

/// Kolmogorov–Smirnov distance between the empirical CDF of `samples` and `cdf`.
pub fn ks_distance(samples: &[f64], cdf: impl Fn(f64) -> f64) -> Result<f64, DiagnosticsError> {
    if samples.len() < 100 {
        return Err(DiagnosticsError::TooFewSamples {
            needed: 100,
            got: samples.len(),
        });
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in sorted.iter().enumerate() {
        let f = cdf(x);
        d = d.max((i + 1) as f64 / n - f).max(f - i as f64 / n);
    }
    Ok(d)
}

/// Minimum number of transition pairs for [`reversibility_stat`].
pub const MIN_PAIRS: usize = 10_000;

/// Mean of `g(X_t, X_{t+1}) - g(X_{t+1}, X_t)` over consecutive retained
/// post-burn-in states, with its batch-means standard error.
pub fn reversibility_stat(
    trace: &ChainTrace,
    g: impl Fn(&[f64], &[f64]) -> f64,
) -> Result<(f64, f64), DiagnosticsError> {
    if trace.retention != Retention::Full {
        return Err(DiagnosticsError::RetentionTooCoarse);
    }
    let states: Vec<&[f64]> = trace
        .post_burn_in()
        .map(|r| r.state.as_deref().expect("full retention"))
        .collect();
    reversibility_stat_pairs(states.windows(2).map(|w| (w[0], w[1])), g)
}

/// [`reversibility_stat`] over explicit pairs.
pub fn reversibility_stat_pairs<'a>(
    pairs: impl Iterator<Item = (&'a [f64], &'a [f64])>,
    g: impl Fn(&[f64], &[f64]) -> f64,
) -> Result<(f64, f64), DiagnosticsError> {
    let diffs: Vec<f64> = pairs.map(|(a, b)| g(a, b) - g(b, a)).collect();
    if diffs.len() < MIN_PAIRS {
        return Err(DiagnosticsError::TooFewSamples {
            needed: MIN_PAIRS,
            got: diffs.len(),
        });
    }
    let mean = diffs.iter().sum::<f64>() / diffs.len() as f64;
    let se = batch_means_std_error(&diffs, BATCHES).expect("enough pairs for batching");
    Ok((mean, se))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::StereoChart;
    use crate::kernels::{Chain, ChainState, KernelConfig, WeightKind};
    use crate::scaling::ell_to_h;
    use crate::targets::{component_cdf, LogDensity, SphereUniformPullback, Target, UnivariateComponent};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn scripted(x: Vec<f64>, accepted: bool) -> StepResult {
        StepResult {
            next: ChainState { x, log_density: 0.0 },
            accepted,
            chosen_index: Some(0),
            alpha: if accepted { 1.0 } else { 0.0 },
            selection_prob: 1.0,
            alpha_joint: if accepted { 1.0 } else { 0.0 },
            candidate_sq_jump: 1.0,
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn run_trace<T: LogDensity>(
        target: &T,
        cfg: KernelConfig,
        x0: Vec<f64>,
        seed: u64,
        steps: u64,
        retention: Retention,
        burn_in: u64,
        thinning: u64,
    ) -> ChainTrace {
        let mut chain = Chain::new(target, cfg, x0.clone(), seed, 0).unwrap();
        let mut trace = ChainTrace::new(x0, retention, burn_in, thinning).unwrap();
        for _ in 0..steps {
            trace.push(&chain.advance().unwrap());
        }
        trace
    }

    #[test]
    fn frozen_chain_has_zero_esjd() {
        let mut t = ChainTrace::new(vec![1.0, 2.0], Retention::Full, 0, 1).unwrap();
        for _ in 0..10 {
            t.push(&scripted(vec![1.0, 2.0], false));
        }
        assert_eq!(esjd(&t).unwrap(), 0.0);
        assert_eq!(acceptance_rate(&t).unwrap(), 0.0);
    }

    #[test]
    fn alternating_chain_has_unit_esjd() {
        let mut t = ChainTrace::new(vec![0.0], Retention::Summary, 0, 1).unwrap();
        for k in 0..10 {
            t.push(&scripted(vec![((k + 1) % 2) as f64], true));
        }
        assert_eq!(esjd(&t).unwrap(), 1.0);
        assert_eq!(acceptance_rate(&t).unwrap(), 1.0);
    }

    #[test]
    fn empty_trace_errors() {
        let mut t = ChainTrace::new(vec![0.0], Retention::Full, 5, 1).unwrap();
        assert_eq!(esjd(&t), Err(DiagnosticsError::EmptyTrace));
        t.push(&scripted(vec![1.0], true));
        assert_eq!(acceptance_rate(&t), Err(DiagnosticsError::EmptyTrace));
        assert!(ChainTrace::new(vec![0.0], Retention::Full, 0, 0).is_err());
    }

    #[test]
    fn streaming_esjd_equals_recomputed() {
        let target = Target::product(UnivariateComponent::student_t(5.0, 0.0, 1.0).unwrap(), 4).unwrap();
        let chart = StereoChart::new(4, 2.0).unwrap();
        let cfg = KernelConfig::smtm(chart, 3, WeightKind::LocallyBalanced, 0.4);
        let t = run_trace(&target, cfg, vec![5.0; 4], 3, 3000, Retention::Full, 500, 1);
        assert_eq!(esjd(&t).unwrap().to_bits(), esjd_from_states(&t).unwrap().to_bits());
        let accepted = t.post_burn_in().filter(|r| r.accepted).count() as f64;
        assert_eq!(acceptance_rate(&t).unwrap(), accepted / 2500.0);
    }

    #[test]
    fn pullback_target_is_always_accepted() {
        let chart = StereoChart::new(3, 1.0).unwrap();
        let target = SphereUniformPullback::new(&chart);
        let t = run_trace(&target, KernelConfig::srwm(chart, 0.5), vec![1.0; 3], 1, 500, Retention::Summary, 0, 1);
        assert_eq!(acceptance_rate(&t).unwrap(), 1.0);
    }

    #[test]
    fn recorded_alpha_matches_acceptance_frequency() {
        let target = Target::product(UnivariateComponent::student_t(11.0, 0.0, 1.0).unwrap(), 6).unwrap();
        let chart = StereoChart::new(6, 6f64.sqrt()).unwrap();
        for cfg in [
            KernelConfig::srwm(chart.clone(), 0.5),
            KernelConfig::smtm(chart.clone(), 4, WeightKind::GloballyBalanced, 0.8),
        ] {
            let t = run_trace(&target, cfg, vec![0.0; 6], 12, 40_000, Retention::Full, 1000, 1);
            let diff: Vec<f64> = t
                .post_burn_in()
                .map(|r| f64::from(u8::from(r.accepted)) - r.alpha)
                .collect();
            let se = batch_means_std_error(&diff, BATCHES).unwrap();
            let gap = acceptance_rate(&t).unwrap() - t.mean_alpha().unwrap();
            assert!(gap.abs() <= 4.0 * se, "{gap} vs {se}");
        }
    }

    #[test]
    fn stereographic_rw_acceptance_at_tuned_scale() {
        // d = 200, f = N(0.5, 0.75), R = sqrt(d), l at the limit optimum
        let d = 200;
        let target = Target::product(UnivariateComponent::gaussian(0.5, 0.75).unwrap(), d).unwrap();
        let chart = StereoChart::new(d, (d as f64).sqrt()).unwrap();
        let h = ell_to_h(d, 1.0, 4.2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x0: Vec<f64> = (0..d).map(|_| 0.5 + 0.75f64.sqrt() * rng.sample::<f64, _>(StandardNormal)).collect();
        let t = run_trace(&target, KernelConfig::srwm(chart, h), x0, 5, 20_000, Retention::Summary, 2000, 10);
        let rate = acceptance_rate(&t).unwrap();
        assert!((0.19..=0.28).contains(&rate), "{rate}");
    }

    #[test]
    fn burnin_curve_floor_and_monotone_contraction() {
        let mut t = ChainTrace::new(vec![0.0, 0.0], Retention::Full, 0, 1).unwrap();
        t.push(&scripted(vec![0.0, 0.0], false));
        assert!(burnin_curve(&t, &[0.0, 0.0]).unwrap().iter().all(|p| p.1 == LOG_DISTANCE_FLOOR));

        let mut t = ChainTrace::new(vec![8.0, 8.0], Retention::Full, 0, 1).unwrap();
        for k in 1..50 {
            let s = 8.0 * 0.8f64.powi(k);
            t.push(&scripted(vec![s, s], true));
        }
        let c = burnin_curve(&t, &[0.0, 0.0]).unwrap();
        assert!(c.windows(2).all(|w| w[1].1 <= w[0].1));

        let t = ChainTrace::new(vec![0.0], Retention::Summary, 0, 1).unwrap();
        assert_eq!(burnin_curve(&t, &[0.0]), Err(DiagnosticsError::RetentionTooCoarse));
    }

    #[test]
    fn gaussian_burn_in_reaches_target_bulk() {
        // d = 10 from 10 * 1, chart radius sqrt(10)
        let d = 10;
        let target = Target::product(UnivariateComponent::gaussian(0.0, 1.0).unwrap(), d).unwrap();
        let chart = StereoChart::new(d, (d as f64).sqrt()).unwrap();
        let h = ell_to_h(d, 1.0, 2.38).unwrap();
        let hits = (0..10)
            .filter(|&seed| {
                let cfg = KernelConfig::smtm(chart.clone(), 5, WeightKind::GloballyBalanced, h);
                let t = run_trace(&target, cfg, vec![10.0; d], seed, 1000, Retention::Full, 0, 1);
                let curve = burnin_curve(&t, &[0.0; 10]).unwrap();
                first_crossing(&curve, 0.5).is_some()
            })
            .count();
        assert!(hits >= 9, "{hits}/10");
    }

    #[test]
    fn ks_reference_cases() {
        let g = UnivariateComponent::gaussian(0.0, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let exact: Vec<f64> = (0..100_000).map(|_| rng.sample(StandardNormal)).collect();
        assert!(ks_distance(&exact, |t| component_cdf(&g, t)).unwrap() < 0.006);
        let shifted: Vec<f64> = exact.iter().map(|v| v + 1.0).collect();
        assert!(ks_distance(&shifted, |t| component_cdf(&g, t)).unwrap() > 0.3);
        assert_eq!(ks_distance(&[0.0; 200], |t| component_cdf(&g, t)).unwrap(), 0.5);
        assert!(matches!(ks_distance(&[0.0; 99], |t| t), Err(DiagnosticsError::TooFewSamples { .. })));
    }

    #[test]
    fn symmetric_test_function_gives_zero() {
        let mut t = ChainTrace::new(vec![0.0, 0.0], Retention::Full, 0, 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..12_000 {
            t.push(&scripted(vec![rng.random(), rng.random()], true));
        }
        let (m, _) = reversibility_stat(&t, |a, b| a[0] * b[0] + (a[1] + b[1])).unwrap();
        assert_eq!(m, 0.0);
    }

    #[test]
    fn exchangeable_pairs_balance() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let pairs: Vec<(Vec<f64>, Vec<f64>)> = (0..20_000)
            .map(|_| {
                let a: f64 = rng.sample(StandardNormal);
                let b: f64 = rng.sample(StandardNormal);
                (vec![a], vec![b])
            })
            .collect();
        let (m, se) =
            reversibility_stat_pairs(pairs.iter().map(|(a, b)| (a.as_slice(), b.as_slice())), |a, b| a[0] * b[0] * b[0])
                .unwrap();
        assert!(m.abs() <= 4.0 * se);
        let few = reversibility_stat_pairs(pairs[..10].iter().map(|(a, b)| (a.as_slice(), b.as_slice())), |a, _| a[0]);
        assert!(matches!(few, Err(DiagnosticsError::TooFewSamples { .. })));
    }

    #[test]
    fn smtm_chain_is_reversible() {
        let target = Target::product(UnivariateComponent::student_t(11.0, 0.0, 1.0).unwrap(), 3).unwrap();
        let chart = StereoChart::new(3, 3f64.sqrt()).unwrap();
        let cfg = KernelConfig::smtm(chart, 3, WeightKind::GloballyBalanced, 0.8);
        let t = run_trace(&target, cfg, vec![0.0; 3], 4, 60_000, Retention::Full, 1000, 1);
        let (m, se) = reversibility_stat(&t, |a, b| a[0] * b[0] * b[0]).unwrap();
        assert!(m.abs() <= 4.0 * se, "{m} ± {se}");
    }

    #[test]
    fn csv_layout() {
        let mut t = ChainTrace::new(vec![0.0, 0.0, 0.0], Retention::Full, 0, 2).unwrap();
        t.push(&scripted(vec![1.0, 2.0, 2.0], true));
        t.push(&scripted(vec![3.0, 0.0, 4.0], false));
        let mut r = scripted(vec![3.0, 0.0, 4.0], false);
        r.chosen_index = None;
        t.push(&r);
        t.push(&r);
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text,
            "iter,accepted,alpha,chosen,x1,norm,x2,x3\n2,0,0,1,3,5,0,4\n4,0,0,,3,5,0,4\n"
        );
        let mut s = ChainTrace::new(vec![0.0, 0.0], Retention::Summary, 0, 1).unwrap();
        s.push(&scripted(vec![0.5, 0.0], true));
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "iter,accepted,alpha,chosen,x1,norm\n1,1,1,1,0.5,0.5\n");
    }

    #[test]
    fn accumulators_merge() {
        let mut a = EsjdAccumulator::default();
        let mut b = EsjdAccumulator::default();
        a.push(1.0);
        b.push(3.0);
        b.push(2.0);
        let mut ab = a;
        ab.merge(&b);
        let mut ba = b;
        ba.merge(&a);
        assert_eq!(ab, ba);
        assert_eq!(ab.mean(), Some(2.0));
    }
}
