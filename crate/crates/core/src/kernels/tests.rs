use super::sphere::{current_log_pi_s, SphereCandidate};
use super::*;
use crate::geometry::SpherePoint;
use crate::math::RunningMoments;
use crate::targets::{SphereUniformPullback, Target, UnivariateComponent};
use rand::{Rng, SeedableRng};
use rand_distr::StandardNormal;

fn std_gaussian(d: usize) -> Target {
    Target::product(UnivariateComponent::gaussian(0.0, 1.0).unwrap(), d).unwrap()
}

fn student(d: usize) -> Target {
    Target::product(UnivariateComponent::student_t(11.0, 0.0, 1.0).unwrap(), d).unwrap()
}

fn run<T: LogDensity>(target: &T, config: KernelConfig, x0: Vec<f64>, seed: u64, steps: usize) -> Vec<StepResult> {
    let mut chain = Chain::new(target, config, x0, seed, 0).unwrap();
    (0..steps).map(|_| chain.advance().unwrap()).collect()
}

fn both_weights() -> [WeightKind; 2] {
    [WeightKind::GloballyBalanced, WeightKind::LocallyBalanced]
}

#[test]
fn rwm_hand_value() {
    // d = 1 standard Gaussian, x = 0, y = 1
    let t = std_gaussian(1);
    let la = weights::clamp_log_prob(t.log_density(&[1.0]) - t.log_density(&[0.0]));
    assert_eq!(la.exp(), (-0.5f64).exp());
    // uphill moves always accept
    let la = weights::clamp_log_prob(t.log_density(&[0.0]) - t.log_density(&[1.0]));
    assert_eq!(la, 0.0);
}

#[test]
fn rwm_step_uses_candidate_stream() {
    let t = std_gaussian(3);
    let state = ChainState::new(&t, vec![0.3, -1.0, 2.0]).unwrap();
    let key = StreamKey::new(5, 0);
    let streams = key.step(17);
    let mut rng = streams.candidate(0);
    let y: Vec<f64> = state
        .x
        .iter()
        .map(|v| v + 0.7 * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let r = rwm_step(&t, &state, 0.7, &streams).unwrap();
    let expect = (t.log_density(&y) - state.log_density).min(0.0).exp();
    assert_eq!(r.alpha, expect);
    assert_eq!(r.candidate_sq_jump, crate::math::squared_distance(&y, &state.x));
    if r.accepted {
        assert_eq!(r.next.x, y);
    } else {
        assert_eq!(r.next, state);
    }
}

#[test]
fn small_steps_accept_almost_surely() {
    let t = student(5);
    let results = run(&t, KernelConfig::rwm(1e-7), vec![0.5; 5], 1, 200);
    assert!(results.iter().all(|r| r.alpha > 0.999_999));
}

#[test]
fn mtm_with_one_candidate_is_rwm() {
    let t = student(4);
    for w in both_weights() {
        let a = run(&t, KernelConfig::rwm(0.9), vec![3.0; 4], 8, 10_000);
        let b = run(&t, KernelConfig::mtm(1, w, 0.9), vec![3.0; 4], 8, 10_000);
        for (ra, rb) in a.iter().zip(&b) {
            assert_eq!(ra.next, rb.next);
            assert_eq!(ra.alpha.to_bits(), rb.alpha.to_bits());
        }
    }
}

#[test]
fn smtm_with_one_candidate_is_srwm() {
    let t = student(10);
    let chart = StereoChart::new(10, 10f64.sqrt()).unwrap();
    for w in both_weights() {
        let a = run(&t, KernelConfig::srwm(chart.clone(), 0.3), vec![10.0; 10], 21, 10_000);
        let b = run(&t, KernelConfig::smtm(chart.clone(), 1, w, 0.3), vec![10.0; 10], 21, 10_000);
        for (ra, rb) in a.iter().zip(&b) {
            assert_eq!(ra.next, rb.next);
            assert_eq!(ra.accepted, rb.accepted);
            assert_eq!(ra.alpha.to_bits(), rb.alpha.to_bits());
        }
    }
}

/// Multiple-try acceptance written directly from the selection/reference
/// construction with densities and weights in the linear domain.
fn linear_mtm_alpha(
    pi: impl Fn(&[f64]) -> f64,
    omega: impl Fn(&[f64], &[f64]) -> f64,
    x: &[f64],
    cands: &[Vec<f64>],
    j: usize,
    refs: &[Vec<f64>],
) -> f64 {
    let yj = &cands[j];
    let fwd: f64 = cands.iter().map(|y| omega(x, y)).sum();
    let bwd: f64 = refs.iter().map(|z| omega(yj, z)).sum::<f64>() + omega(yj, x);
    let num = pi(yj) * omega(yj, x) / bwd;
    let den = pi(x) * omega(x, yj) / fwd;
    (num / den).min(1.0)
}

#[test]
fn mtm_scripted_draws_match_linear_formula() {
    let t = std_gaussian(1);
    let pi = |p: &[f64]| t.log_density(p).exp();
    let gb = |a: &[f64], b: &[f64]| pi(b) / pi(a);
    let x = vec![0.0];
    let cands = vec![vec![0.5], vec![-0.3]];
    let refs = vec![vec![0.2]];
    let lx = t.log_density(&x);
    let xs: Vec<f64> = cands.iter().map(|c| t.log_density(c) - lx).collect();
    for j in 0..2 {
        let ys: Vec<f64> = refs.iter().map(|r| t.log_density(r) - t.log_density(&cands[j])).collect();
        let got = multi_try_acceptance(WeightKind::GloballyBalanced, &xs, j, &ys).log_alpha.exp();
        let expect = linear_mtm_alpha(pi, gb, &x, &cands, j, &refs);
        assert!((got - expect).abs() < 1e-14, "j={j}: {got} vs {expect}");
    }
    // frozen hand value for j = 0:
    // (e^{-1/8} + e^{-9/200}) / (e^{-1/50} + 1)
    let v = ((-0.125f64).exp() + (-0.045f64).exp()) / ((-0.02f64).exp() + 1.0);
    let ys = [t.log_density(&[0.2]) - t.log_density(&[0.5])];
    let got = multi_try_acceptance(WeightKind::GloballyBalanced, &xs, 0, &ys).log_alpha.exp();
    assert!((got - v.min(1.0)).abs() < 1e-14);
}

#[test]
fn mtm_step_matches_replayed_draws() {
    let t = student(2);
    let state = ChainState::new(&t, vec![1.5, -0.4]).unwrap();
    let key = StreamKey::new(77, 2);
    for w in both_weights() {
        let cfg = KernelConfig::mtm(4, w, 0.8);
        for it in 0..50 {
            let streams = key.step(it);
            let r = mtm_step(&t, &state, &cfg, &streams).unwrap();
            let draw = |mut rng: rand_chacha::ChaCha8Rng, from: &[f64]| -> Vec<f64> {
                from.iter().map(|v| v + 0.8 * rng.sample::<f64, _>(StandardNormal)).collect()
            };
            let cands: Vec<Vec<f64>> = (0..4).map(|i| draw(streams.candidate(i), &state.x)).collect();
            let j = r.chosen_index.unwrap();
            let refs: Vec<Vec<f64>> = (0..3).map(|i| draw(streams.reference(i), &cands[j])).collect();
            let pi = |p: &[f64]| t.log_density(p).exp();
            let omega = |a: &[f64], b: &[f64]| match w {
                WeightKind::GloballyBalanced => pi(b) / pi(a),
                WeightKind::LocallyBalanced => (pi(b) / pi(a)).sqrt(),
            };
            let expect = linear_mtm_alpha(pi, omega, &state.x, &cands, j, &refs);
            assert!((r.alpha - expect).abs() < 1e-12);
        }
    }
}

#[test]
fn smtm_scripted_draws_match_linear_formula() {
    // d = 2, N = 3, globally balanced, fixed sphere points
    let t = student(2);
    let chart = StereoChart::new(2, 1.5).unwrap();
    let unit = |v: [f64; 3]| {
        let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        SpherePoint::new(v.iter().map(|c| c / n).collect()).unwrap()
    };
    let x = vec![0.4, -0.9];
    let state = ChainState::new(&t, x.clone()).unwrap();
    let z = chart.sp_inverse(&x);
    let cands = [unit([0.3, -0.5, -0.6]), unit([0.1, 0.2, -0.9]), unit([-0.7, 0.2, 0.1])];
    let refs = [unit([0.5, -0.4, -0.2]), unit([0.2, -0.8, 0.3])];
    let lps_z = current_log_pi_s(&chart, &state);
    let pis = |p: &SpherePoint| chart.log_sphere_density(&t, p).unwrap().exp();
    let ev: Vec<SphereCandidate> = cands.iter().map(|c| SphereCandidate::evaluate(&t, &chart, c.clone())).collect();
    let xs: Vec<f64> = ev.iter().map(|c| c.log_pi_s - lps_z).collect();
    for j in 0..3 {
        let ys: Vec<f64> = refs
            .iter()
            .map(|r| SphereCandidate::evaluate(&t, &chart, r.clone()).log_pi_s - ev[j].log_pi_s)
            .collect();
        let got = multi_try_acceptance(WeightKind::GloballyBalanced, &xs, j, &ys).log_alpha.exp();
        let om = |a: &SpherePoint, b: &SpherePoint| pis(b) / pis(a);
        let fwd: f64 = cands.iter().map(|c| om(&z, c)).sum();
        let bwd: f64 = refs.iter().map(|r| om(&cands[j], r)).sum::<f64>() + om(&cands[j], &z);
        let expect = ((pis(&cands[j]) * om(&cands[j], &z) / bwd) / (pis(&z) * om(&z, &cands[j]) / fwd)).min(1.0);
        assert!((got - expect).abs() < 1e-12, "j={j}: {got} vs {expect}");
    }
}

#[test]
fn srwm_hand_value_on_the_line() {
    // d = 1, R = 1, standard Gaussian: lifted log densities at x = 0 and x = 1
    // are 0 and -1/2 + ln 2.
    let t = std_gaussian(1);
    let chart = StereoChart::new(1, 1.0).unwrap();
    let at0 = ChainState::new(&t, vec![0.0]).unwrap();
    let at1 = ChainState::new(&t, vec![1.0]).unwrap();
    let to1 = SphereCandidate::evaluate(&t, &chart, SpherePoint::new(vec![1.0, 0.0]).unwrap());
    let to0 = SphereCandidate::evaluate(&t, &chart, SpherePoint::new(vec![0.0, -1.0]).unwrap());
    let up = weights::clamp_log_prob(to1.log_pi_s - current_log_pi_s(&chart, &at0)).exp();
    let down = weights::clamp_log_prob(to0.log_pi_s - current_log_pi_s(&chart, &at1)).exp();
    assert_eq!(up, 1.0);
    assert!((down - 0.824_360_635).abs() < 1e-8, "{down}");
}

#[test]
fn north_pole_candidates_have_no_mass() {
    let t = std_gaussian(2);
    let chart = StereoChart::new(2, 1.0).unwrap();
    let c = SphereCandidate::evaluate(&t, &chart, SpherePoint::from_unit(vec![0.0, 0.0, 1.0]));
    assert!(c.x.is_none());
    assert_eq!(c.log_pi_s, f64::NEG_INFINITY);
}

#[test]
fn sphere_uniform_pullback_is_always_accepted() {
    let chart = StereoChart::with_center(2.0, vec![1.0, -1.0, 0.5]).unwrap();
    let target = SphereUniformPullback::new(&chart);
    for w in both_weights() {
        for cfg in [
            KernelConfig::srwm(chart.clone(), 0.4),
            KernelConfig::smtm(chart.clone(), 4, w, 0.4),
            KernelConfig::ideal(chart.clone(), 16, WeightKind::GloballyBalanced, 0.4),
        ] {
            for r in run(&target, cfg, vec![3.0, 0.0, -2.0], 3, 500) {
                assert!(r.accepted);
                assert_eq!(r.alpha, 1.0);
            }
        }
    }
}

#[test]
fn joint_acceptance_is_selection_times_conditional() {
    let t = student(3);
    let chart = StereoChart::new(3, 3f64.sqrt()).unwrap();
    for w in both_weights() {
        for cfg in [KernelConfig::smtm(chart.clone(), 5, w, 0.5), KernelConfig::mtm(5, w, 1.0)] {
            for r in run(&t, cfg, vec![2.0; 3], 4, 2000) {
                let expect = r.selection_prob * r.alpha;
                assert!((r.alpha_joint - expect).abs() <= 1e-12 * expect.max(1e-300) + 1e-300);
                assert!((0.0..=1.0).contains(&r.alpha));
                assert!((0.0..=1.0).contains(&r.selection_prob));
            }
        }
    }
}

#[test]
fn rejected_steps_keep_the_state() {
    let t = student(3);
    let chart = StereoChart::new(3, 1.0).unwrap();
    let mut chain = Chain::new(&t, KernelConfig::smtm(chart, 3, WeightKind::GloballyBalanced, 1.2), vec![1.0; 3], 6, 0).unwrap();
    for _ in 0..2000 {
        let before = chain.state().clone();
        let r = chain.advance().unwrap();
        if !r.accepted {
            assert_eq!(r.next, before);
        }
    }
}

#[test]
fn results_do_not_depend_on_thread_fan_out() {
    let t = student(6);
    let chart = StereoChart::new(6, 6f64.sqrt()).unwrap();
    for cfg in [
        KernelConfig::smtm(chart.clone(), 12, WeightKind::LocallyBalanced, 0.3),
        KernelConfig::mtm(12, WeightKind::GloballyBalanced, 0.6),
        KernelConfig::ideal(chart.clone(), 32, WeightKind::GloballyBalanced, 0.3),
    ] {
        let serial = run(&t, cfg.clone().with_parallel_threshold(usize::MAX), vec![4.0; 6], 9, 300);
        let parallel = run(&t, cfg.with_parallel_threshold(1), vec![4.0; 6], 9, 300);
        assert_eq!(serial, parallel);
    }
}

#[test]
fn config_validation() {
    let chart = StereoChart::new(3, 1.0).unwrap();
    assert!(KernelConfig::rwm(0.0).validate(3).is_err());
    assert!(KernelConfig::mtm(0, WeightKind::GloballyBalanced, 1.0).validate(3).is_err());
    assert!(KernelConfig::smtm(chart.clone(), 2, WeightKind::GloballyBalanced, 0.1).validate(4).is_err());
    assert!(KernelConfig::ideal(chart.clone(), 1, WeightKind::GloballyBalanced, 0.1).validate(3).is_err());
    let mut no_chart = KernelConfig::srwm(chart, 0.1);
    no_chart.chart = None;
    assert!(no_chart.validate(3).is_err());
}

#[test]
fn smtm_preserves_gaussian_moments() {
    let d = 2;
    let t = std_gaussian(d);
    let chart = StereoChart::new(d, (d as f64).sqrt()).unwrap();
    for w in both_weights() {
        let results = run(&t, KernelConfig::smtm(chart.clone(), 3, w, 0.8), vec![0.0; d], 31, 60_000);
        let xs: Vec<f64> = results[1000..].iter().map(|r| r.next.x[0]).collect();
        let sq: Vec<f64> = xs.iter().map(|v| v * v).collect();
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        let m2 = sq.iter().sum::<f64>() / sq.len() as f64;
        let se1 = crate::math::batch_means_std_error(&xs, 100).unwrap();
        let se2 = crate::math::batch_means_std_error(&sq, 100).unwrap();
        assert!(mean.abs() < 4.0 * se1, "{w}: mean {mean} ± {se1}");
        assert!((m2 - 1.0).abs() < 4.0 * se2, "{w}: second moment {m2} ± {se2}");
    }
}

#[test]
fn ideal_acceptance_settles_as_inner_sample_grows() {
    // stationary states, common across M; means for consecutive M agree
    // within Monte Carlo error once M is moderate
    let d = 5;
    let t = student(d);
    let chart = StereoChart::new(d, (d as f64).sqrt()).unwrap();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
    let tdist = rand_distr::StudentT::new(11.0).unwrap();
    let states: Vec<ChainState> = (0..1500)
        .map(|_| ChainState::new(&t, (0..d).map(|_| rng.sample(tdist)).collect()).unwrap())
        .collect();
    let h = 0.5;
    let means: Vec<RunningMoments> = (5..=10)
        .map(|k| {
            let cfg = KernelConfig::ideal(chart.clone(), 1 << k, WeightKind::GloballyBalanced, h);
            let key = StreamKey::new(100, k as u64);
            let mut m = RunningMoments::default();
            for (i, s) in states.iter().enumerate() {
                m.push(ideal_step(&t, s, &cfg, &key.step(i as u64)).unwrap().alpha);
            }
            m
        })
        .collect();
    let diffs: Vec<f64> = means.windows(2).map(|w| (w[1].mean() - w[0].mean()).abs()).collect();
    for (w, diff) in means.windows(2).zip(&diffs).skip(2) {
        let se = (w[0].std_error().powi(2) + w[1].std_error().powi(2)).sqrt();
        assert!(*diff <= 4.0 * se, "means {} {} differ by {diff} (se {se})", w[0].mean(), w[1].mean());
    }
}
