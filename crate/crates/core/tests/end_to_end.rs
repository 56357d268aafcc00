use smtm_core::diagnostics::{acceptance_rate, esjd, esjd_from_states, ChainTrace, Retention};
use smtm_core::scaling::{limit_sweep, optimize_ell, EllGrid, LimitGeometry, LimitModel};
use smtm_core::{Chain, KernelConfig, LogDensity, StereoChart, Target, WeightKind};

fn run_states(cfg: KernelConfig, target: &Target, steps: usize) -> Vec<Vec<f64>> {
    let mut chain = Chain::new(target, cfg, vec![4.0; target.dim()], 11, 2).unwrap();
    (0..steps).map(|_| chain.advance().unwrap().next.x).collect()
}

#[test]
fn smtm_chain_is_identical_across_pools_and_thresholds() {
    let target: Target = "student_t(5,0,1)^6".parse().unwrap();
    let chart = StereoChart::new(6, 6f64.sqrt()).unwrap();
    let base = KernelConfig::smtm(chart, 8, WeightKind::LocallyBalanced, 0.5);
    let serial = run_states(base.clone().with_parallel_threshold(usize::MAX), &target, 300);
    for threads in [1, 3] {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        let par = pool.install(|| run_states(base.clone().with_parallel_threshold(1), &target, 300));
        assert_eq!(serial, par, "{threads} threads");
    }
}

#[test]
fn trace_esjd_agrees_with_retained_states() {
    let target: Target = "gaussian(0,1)^5".parse().unwrap();
    let chart = StereoChart::new(5, 5f64.sqrt()).unwrap();
    let cfg = KernelConfig::smtm(chart, 4, WeightKind::GloballyBalanced, 0.6);
    let mut chain = Chain::new(&target, cfg, vec![0.0; 5], 3, 0).unwrap();
    let mut trace = ChainTrace::new(vec![0.0; 5], Retention::Full, 100, 1).unwrap();
    for _ in 0..2000 {
        trace.push(&chain.advance().unwrap());
    }
    let a = esjd(&trace).unwrap();
    let b = esjd_from_states(&trace).unwrap();
    assert!((a - b).abs() <= 1e-9 * a.max(1.0), "{a} vs {b}");
    let acc = acceptance_rate(&trace).unwrap();
    assert!(acc > 0.05 && acc < 1.0, "{acc}");
}

#[test]
fn chart_round_trip_through_public_api() {
    let chart = StereoChart::with_center(2.5, vec![1.0, -2.0, 0.5]).unwrap();
    for x in [[1.0, -2.0, 0.5], [30.0, 4.0, -7.0], [1e-4, 0.0, 1e3]] {
        let back = chart.sp_forward(&chart.sp_inverse(&x)).unwrap();
        for (u, v) in x.iter().zip(&back) {
            assert!((u - v).abs() <= 1e-9 * u.abs().max(1.0), "{x:?} -> {back:?}");
        }
    }
}

#[test]
fn single_try_weights_give_the_same_limit() {
    let model = |weight| LimitModel {
        geometry: LimitGeometry::Sphere { lambda: 1.0 },
        fisher: 1.0 / 0.75,
        weight,
    };
    let gb = limit_sweep(&model(WeightKind::GloballyBalanced), &[1.0, 3.0], &[1], 20_000, 9).unwrap();
    let lb = limit_sweep(&model(WeightKind::LocallyBalanced), &[1.0, 3.0], &[1], 20_000, 9).unwrap();
    for i in 0..2 {
        assert!((gb.acceptance[i][0].mean - lb.acceptance[i][0].mean).abs() < 1e-12);
        assert!((gb.esjd[i][0].mean - lb.esjd[i][0].mean).abs() < 1e-12);
    }
}

#[test]
fn euclidean_single_try_optimum_is_near_a_quarter() {
    let model = LimitModel {
        geometry: LimitGeometry::Euclidean,
        fisher: 1.0,
        weight: WeightKind::GloballyBalanced,
    };
    let grid = EllGrid::new(0.5, 5.0, 46).unwrap();
    let opt = optimize_ell(&model, 1, &grid, 50_000, 2).unwrap();
    assert!((opt.ell - 2.38).abs() < 0.3, "{}", opt.ell);
    assert!((opt.acceptance.mean - 0.234).abs() < 0.03, "{}", opt.acceptance.mean);
}
