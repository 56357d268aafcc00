//! The acceptance criteria, one function each. `smtm selftest` and the
//! `acceptance` test target both run them through [`evaluate`].

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, StudentT};
use rayon::prelude::*;
use smtm_core::diagnostics::{ks_distance, reversibility_stat, ChainTrace, Retention};
use smtm_core::kernels::{ideal_step, smtm_probe};
use smtm_core::math::{squared_distance, squared_norm};
use smtm_core::scaling::{
    ell_to_h, limit_sweep, mc_limit_esjd, optimize_ell, EllGrid, LimitGeometry, LimitModel, McEstimate, ScalingParams,
};
use smtm_core::{
    Chain, ChainState, KernelConfig, SpherePoint, StereoChart, StreamKey, Target, UnivariateComponent, WeightKind,
};

use crate::{config, presets, runner};

const GB: WeightKind = WeightKind::GloballyBalanced;
const LB: WeightKind = WeightKind::LocallyBalanced;

/// Result of one criterion's checks, before timing.
#[derive(Debug, Clone, PartialEq)]
pub struct Verdict {
    pub passed: bool,
    pub detail: String,
}

impl Verdict {
    fn new(passed: bool, detail: String) -> Self {
        Self { passed, detail }
    }

    fn fail(detail: impl std::fmt::Display) -> Self {
        Self::new(false, detail.to_string())
    }
}

pub struct Criterion {
    pub id: u8,
    pub name: &'static str,
    /// Wall-clock budget; exceeding it fails the criterion.
    pub budget: Duration,
    pub check: fn() -> Verdict,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub id: u8,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub elapsed: Duration,
    pub budget: Duration,
}

impl Outcome {
    /// One-line report.
    pub fn line(&self) -> String {
        format!(
            "{} criterion {:>2} ({}): {} [{:.1}s of {}s]",
            if self.passed { "PASS" } else { "FAIL" },
            self.id,
            self.name,
            self.detail,
            self.elapsed.as_secs_f64(),
            self.budget.as_secs()
        )
    }
}

pub fn evaluate(c: &Criterion) -> Outcome {
    let start = Instant::now();
    let v = (c.check)();
    let elapsed = start.elapsed();
    let in_budget = elapsed <= c.budget;
    Outcome {
        id: c.id,
        name: c.name,
        passed: v.passed && in_budget,
        detail: if in_budget { v.detail } else { format!("{}; over budget", v.detail) },
        elapsed,
        budget: c.budget,
    }
}

const fn secs(s: u64) -> Duration {
    Duration::from_secs(s)
}

pub const CRITERIA: &[Criterion] = &[
    Criterion { id: 1, name: "geometry round trip", budget: secs(1), check: geometry_round_trip },
    Criterion { id: 2, name: "single-try coupling", budget: secs(5), check: single_try_coupling },
    Criterion { id: 3, name: "phi identities", budget: secs(30), check: phi_identities },
    Criterion { id: 4, name: "single-try optimal acceptance", budget: secs(120), check: single_try_optimal_acceptance },
    Criterion { id: 5, name: "large-N monotone limits", budget: secs(180), check: large_n_monotone_limits },
    Criterion { id: 6, name: "finite-d against limit", budget: secs(300), check: finite_d_against_limit },
    Criterion { id: 7, name: "stationarity", budget: secs(180), check: stationarity },
    Criterion { id: 8, name: "pathology avoidance", budget: secs(180), check: pathology_avoidance },
    Criterion { id: 9, name: "far-tail acceptance floor", budget: secs(60), check: far_tail_acceptance },
    // each preset has its own 5 minute budget, checked inside
    Criterion { id: 10, name: "preset determinism and budget", budget: secs(2 * 8 * 300), check: preset_determinism },
];

fn half_gaussian_fisher() -> f64 {
    4.0 / 3.0
}

fn normal_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

/// Plane to sphere to plane and sphere to plane to sphere.
pub fn geometry_round_trip() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let dims = [1usize, 2, 10, 100];
    let (mut worst_x, mut worst_z, mut worst_zx) = (0.0f64, 0.0f64, 0.0f64);
    let mut failures = 0usize;
    for k in 0..10_000 {
        let d = dims[k % dims.len()];
        let radius = 10f64.powf(rng.random_range(0.0..1.0));
        let center: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let chart = StereoChart::with_center(radius, center.clone()).expect("valid chart");

        let dir = normal_vec(&mut rng, d);
        let r = 10f64.powf(rng.random_range(-6.0..6.0));
        let scale = r / squared_norm(&dir).sqrt();
        let x: Vec<f64> = center.iter().zip(&dir).map(|(m, v)| m + scale * v).collect();
        let z = chart.sp_inverse(&x);
        match chart.sp_forward(&z) {
            Ok(back) => {
                worst_x = worst_x.max(squared_distance(&back, &x).sqrt() / squared_norm(&x).sqrt());
                let again = chart.sp_inverse(&back);
                worst_zx = worst_zx.max(squared_distance(again.coords(), z.coords()).sqrt());
            }
            Err(_) => failures += 1,
        }

        let g = normal_vec(&mut rng, d + 1);
        let gn = squared_norm(&g).sqrt();
        let z = SpherePoint::new(g.iter().map(|v| v / gn).collect()).expect("unit vector");
        match chart.sp_forward(&z) {
            Ok(x) => worst_z = worst_z.max(squared_distance(chart.sp_inverse(&x).coords(), z.coords()).sqrt()),
            Err(_) => failures += 1,
        }
    }
    let passed = failures == 0 && worst_x <= 1e-10 && worst_zx <= 1e-10 && worst_z <= 1e-10;
    Verdict::new(
        passed,
        format!(
            "max rel err plane {worst_x:.2e}, sphere {:.2e}; {failures} pole failures",
            worst_z.max(worst_zx)
        ),
    )
}

/// SMTM with one candidate against SRWM on shared streams.
pub fn single_try_coupling() -> Verdict {
    let dim = 10;
    let target = Target::product(UnivariateComponent::student_t(11.0, 0.0, 1.0).expect("valid"), dim).expect("valid");
    let chart = StereoChart::new(dim, (dim as f64).sqrt()).expect("valid");
    let h = 0.4;
    let x0 = vec![3.0; dim];
    let mut details = Vec::new();
    let mut passed = true;
    for w in [GB, LB] {
        let mut a = Chain::new(&target, KernelConfig::srwm(chart.clone(), h), x0.clone(), 17, 3).expect("valid");
        let mut b = Chain::new(&target, KernelConfig::smtm(chart.clone(), 1, w, h), x0.clone(), 17, 3).expect("valid");
        let mut first_diff = None;
        let mut accepted = 0;
        for t in 0..10_000 {
            let (ra, rb) = (a.advance().expect("step"), b.advance().expect("step"));
            accepted += usize::from(ra.accepted);
            let same = ra.accepted == rb.accepted
                && ra.next.x.iter().zip(&rb.next.x).all(|(p, q)| p.to_bits() == q.to_bits());
            if !same {
                first_diff = Some(t);
                break;
            }
        }
        passed &= first_diff.is_none() && accepted > 0;
        details.push(match first_diff {
            None => format!("{w}: identical over 10^4 steps ({accepted} moves)"),
            Some(t) => format!("{w}: diverged at step {t}"),
        });
    }
    Verdict::new(passed, details.join("; "))
}

fn phi(which: u8, j: usize, x: &[f64], y: &[f64], w: WeightKind) -> f64 {
    if which == 1 {
        smtm_core::scaling::phi1(j, x, y, w)
    } else {
        smtm_core::scaling::phi2(j, x, y, w)
    }
}

/// Largest difference quotient of `phi` along random unit directions.
fn empirical_lipschitz(which: u8, n: usize, w: WeightKind, delta: f64, points: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..points {
        let p: Vec<f64> = normal_vec(&mut rng, 2 * n - 1).iter().map(|v| 2.0 * v).collect();
        let u = normal_vec(&mut rng, 2 * n - 1);
        let un = squared_norm(&u).sqrt();
        let q: Vec<f64> = p.iter().zip(&u).map(|(a, b)| a + delta * b / un).collect();
        let f = |v: &[f64]| phi(which, 1, &v[..n], &v[n..], w);
        worst = worst.max((f(&q) - f(&p)).abs() / delta);
    }
    worst
}

pub fn phi_identities() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let mut problems = Vec::new();
    for _ in 0..10_000 {
        let x: f64 = 3.0 * rng.sample::<f64, _>(StandardNormal);
        for w in [GB, LB] {
            let want = x.exp().min(1.0);
            if phi(1, 1, &[x], &[], w) != want || phi(2, 1, &[x], &[], w) != want {
                problems.push(format!("N=1 mismatch at {x}"));
            }
        }
    }
    for n in 1..=64 {
        for w in [GB, LB] {
            let (x, y) = (vec![0.0; n], vec![0.0; n - 1]);
            if (phi(1, 1, &x, &y, w) - 1.0).abs() > 1e-12 || (phi(2, 1, &x, &y, w) - 1.0 / n as f64).abs() > 1e-12 {
                problems.push(format!("zero inputs wrong at N={n}, {w}"));
            }
        }
    }
    let out_of_range = (0..100u64)
        .into_par_iter()
        .map(|block| {
            let mut rng = ChaCha8Rng::seed_from_u64(10_000 + block);
            let mut bad = 0usize;
            for _ in 0..10_000 {
                let n = rng.random_range(1..=8usize);
                let scale = 10f64.powf(rng.random_range(-2.0..1.5));
                let shift = rng.random_range(-20.0..5.0);
                let x: Vec<f64> = (0..n).map(|_| shift + scale * rng.sample::<f64, _>(StandardNormal)).collect();
                let y: Vec<f64> = (0..n - 1).map(|_| shift + scale * rng.sample::<f64, _>(StandardNormal)).collect();
                let j = rng.random_range(1..=n);
                let w = if rng.random_bool(0.5) { GB } else { LB };
                for which in [1, 2] {
                    let v = phi(which, j, &x, &y, w);
                    if !(0.0..=1.0).contains(&v) {
                        bad += 1;
                    }
                }
            }
            bad
        })
        .sum::<usize>();
    if out_of_range > 0 {
        problems.push(format!("{out_of_range} values outside [0, 1]"));
    }
    let mut worst_ratio: f64 = 0.0;
    for w in [GB, LB] {
        for n in [2, 4, 8] {
            for which in [1, 2] {
                let deltas = [1e-3, 5e-4, 2.5e-4, 1.25e-4];
                let ls: Vec<f64> =
                    deltas.iter().map(|&d| empirical_lipschitz(which, n, w, d, 20_000, 7 + n as u64)).collect();
                for pair in ls.windows(2) {
                    let ratio = pair[1] / pair[0];
                    worst_ratio = worst_ratio.max(ratio);
                    if !(pair[0].is_finite() && ratio <= 1.1) {
                        problems.push(format!("phi{which} {w} N={n}: Lipschitz {:.4} -> {:.4}", pair[0], pair[1]));
                    }
                }
            }
        }
    }
    let detail = if problems.is_empty() {
        format!("identities exact, 10^6 values in [0, 1], worst Lipschitz ratio under halving {worst_ratio:.4}")
    } else {
        problems.join("; ")
    };
    Verdict::new(problems.is_empty(), detail)
}

fn half_gaussian_model(weight: WeightKind) -> LimitModel {
    LimitModel {
        geometry: LimitGeometry::Sphere { lambda: 1.0 },
        fisher: half_gaussian_fisher(),
        weight,
    }
}

pub fn single_try_optimal_acceptance() -> Verdict {
    let grid = EllGrid::new(0.2, 10.0, 50).expect("valid grid");
    match optimize_ell(&half_gaussian_model(GB), 1, &grid, 1_000_000, 4) {
        Ok(o) => Verdict::new(
            (0.20..=0.27).contains(&o.acceptance.mean),
            format!("l* = {:.3}, acceptance {:.4} (target [0.20, 0.27])", o.ell, o.acceptance.mean),
        ),
        Err(e) => Verdict::fail(e),
    }
}

pub const MONOTONE_NS: [usize; 6] = [1, 2, 4, 8, 16, 64];
pub const MONOTONE_ELL: f64 = 2.0;

fn pooled(a: &McEstimate, b: &McEstimate) -> f64 {
    (a.std_error * a.std_error + b.std_error * b.std_error).sqrt()
}

/// Least-squares fit of `A - B N^-gamma`, `gamma` on a grid in `(0, 3]`.
pub fn fit_asymptote(ns: &[usize], values: &[f64]) -> (f64, f64, f64) {
    let mut best = (f64::INFINITY, 0.0, 0.0, 0.0);
    for k in 1..=300 {
        let gamma = k as f64 * 0.01;
        let u: Vec<f64> = ns.iter().map(|&n| (n as f64).powf(-gamma)).collect();
        let m = u.len() as f64;
        let (su, sv) = (u.iter().sum::<f64>(), values.iter().sum::<f64>());
        let suu = u.iter().map(|a| a * a).sum::<f64>();
        let suv = u.iter().zip(values).map(|(a, b)| a * b).sum::<f64>();
        let slope = (m * suv - su * sv) / (m * suu - su * su);
        let a = (sv - slope * su) / m;
        let sse: f64 = u.iter().zip(values).map(|(x, v)| (a + slope * x - v).powi(2)).sum();
        if sse < best.0 {
            best = (sse, a, -slope, gamma);
        }
    }
    (best.1, best.2, best.3)
}

pub fn large_n_monotone_limits() -> Verdict {
    let mut details = Vec::new();
    let mut passed = true;
    for w in [GB, LB] {
        let sweep = match limit_sweep(&half_gaussian_model(w), &[MONOTONE_ELL], &MONOTONE_NS, 1_000_000, 5) {
            Ok(s) => s,
            Err(e) => return Verdict::fail(e),
        };
        let est = &sweep.acceptance[0];
        let vals: Vec<f64> = est.iter().map(|e| e.mean).collect();
        let shown = vals.iter().map(|v| format!("{v:.4}")).collect::<Vec<_>>().join(", ");
        if w == GB {
            let violations: Vec<String> = est
                .windows(2)
                .zip(MONOTONE_NS.windows(2))
                .filter(|(e, _)| e[1].mean > e[0].mean + 3.0 * pooled(&e[0], &e[1]))
                .map(|(_, n)| format!("N={}->{}", n[0], n[1]))
                .collect();
            let gap = (vals[5] - vals[0]).abs();
            let ok = violations.is_empty() && gap <= 0.02;
            passed &= ok;
            details.push(format!(
                "GB [{shown}]: increases at {}; |a(64) - a(1)| = {gap:.4}",
                if violations.is_empty() { "none".into() } else { violations.join(" ") }
            ));
        } else {
            let monotone = est.windows(2).all(|e| e[1].mean >= e[0].mean - 3.0 * pooled(&e[0], &e[1]));
            let (a, b, gamma) = fit_asymptote(&MONOTONE_NS, &vals);
            let ok = monotone && vals[5] >= 0.9 * a && vals[5] > vals[0];
            passed &= ok;
            details.push(format!(
                "LB [{shown}]: monotone {monotone}; fit {a:.4} - {b:.4} N^-{gamma:.2}; a(64)/A = {:.4}",
                vals[5] / a
            ));
        }
    }
    Verdict::new(passed, format!("l = {MONOTONE_ELL}; {}", details.join("; ")))
}

fn exact_product_draw(component: &UnivariateComponent, dim: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..dim)
        .map(|_| match *component {
            UnivariateComponent::Gaussian { mean, var } => mean + var.sqrt() * rng.sample::<f64, _>(StandardNormal),
            UnivariateComponent::StudentT { dof, loc, scale } => {
                loc + scale * StudentT::new(dof).expect("positive dof").sample(rng)
            }
        })
        .collect()
}

pub const FINITE_D_STEPS: u64 = 40_000;

/// d = 200 SMTM probes against the limit functional.
pub fn finite_d_against_limit() -> Verdict {
    let (dim, n, ell) = (200usize, 3usize, 2.0);
    let component = UnivariateComponent::gaussian(0.5, 0.75).expect("valid");
    let target = Target::product(component, dim).expect("valid");
    let h = ell_to_h(dim, 1.0, ell).expect("in range");
    let chart = StereoChart::new(dim, (dim as f64).sqrt()).expect("valid");
    let cfg = KernelConfig::smtm(chart, n, GB, h);
    let mut rng = ChaCha8Rng::seed_from_u64(606);
    let x0 = exact_product_draw(&component, dim, &mut rng);
    let mut chain = Chain::new(&target, cfg, x0, 606, 0).expect("valid");
    for _ in 0..1_000 {
        chain.advance().expect("step");
    }
    let (mut alpha, mut sq, mut alpha_sq, mut jump) = (Vec::new(), 0.0, 0.0, 0.0);
    for _ in 0..FINITE_D_STEPS {
        let p_x = chain.state().x.clone();
        let p = smtm_probe(&target, chain.state(), chain.config(), &chain.peek_streams()).expect("probe");
        alpha.push(p.alpha_first);
        sq += p.sq_jump_first;
        alpha_sq += p.alpha_first * p.sq_jump_first;
        jump += squared_distance(&chain.advance().expect("step").next.x, &p_x);
    }
    let params = ScalingParams::sphere(dim, 1.0, ell, n, half_gaussian_fisher(), GB);
    let limit = match mc_limit_esjd(&params, 1_000_000, 6) {
        Ok(e) => e,
        Err(e) => return Verdict::fail(e),
    };
    let limit_phi1 = limit.mean / (n as f64 * ell * ell);
    let emp_alpha = alpha.iter().sum::<f64>() / alpha.len() as f64;
    // empirical ESJD with the mean squared proposal jump rescaled to l^2
    let emp_esjd = n as f64 * ell * ell * alpha_sq / sq;
    let rel = (emp_esjd - limit.mean).abs() / limit.mean;
    let diff = (emp_alpha - limit_phi1).abs();
    Verdict::new(
        diff <= 0.05 && rel <= 0.10,
        format!(
            "E[alpha_1] {emp_alpha:.4} vs E[phi1] {limit_phi1:.4} (|diff| {diff:.4}); normalized ESJD {emp_esjd:.4} vs limit {:.4} (rel {rel:.4}); raw chain ESJD {:.4}, mean proposal jump {:.4}",
            limit.mean,
            jump / FINITE_D_STEPS as f64,
            sq / FINITE_D_STEPS as f64
        ),
    )
}

pub const STATIONARY_SAMPLES: u64 = 200_000;
pub const STATIONARY_THINNING: u64 = 5;

/// SMTM on a heavy-tailed product: marginal KS and reversibility.
pub fn stationarity() -> Verdict {
    let dim = 10;
    let component = UnivariateComponent::student_t(11.0, 0.0, 1.0).expect("valid");
    let target = Target::product(component, dim).expect("valid");
    let chart = StereoChart::new(dim, (dim as f64).sqrt()).expect("valid");
    let h = ell_to_h(dim, 1.0, 2.38).expect("in range");
    let cfg = KernelConfig::smtm(chart, 5, GB, h);
    let mut rng = ChaCha8Rng::seed_from_u64(707);
    let x0 = exact_product_draw(&component, dim, &mut rng);
    let burn_in = 1_000;
    let mut chain = Chain::new(&target, cfg, x0.clone(), 707, 0).expect("valid");
    let mut trace = ChainTrace::new(x0, Retention::Full, burn_in, STATIONARY_THINNING).expect("valid");
    for _ in 0..burn_in + STATIONARY_SAMPLES * STATIONARY_THINNING {
        trace.push(&chain.advance().expect("step"));
    }
    let xs: Vec<f64> = trace.post_burn_in().map(|r| r.x1).collect();
    let ks = match ks_distance(&xs, |t| component.cdf(t)) {
        Ok(d) => d,
        Err(e) => return Verdict::fail(e),
    };
    let g1 = |a: &[f64], b: &[f64]| a[0] * b[0] * b[0];
    let g2 = |a: &[f64], b: &[f64]| f64::from(u8::from(a[0] < b[0]));
    let (r1, r2) = match (reversibility_stat(&trace, g1), reversibility_stat(&trace, g2)) {
        (Ok(a), Ok(b)) => (a, b),
        (Err(e), _) | (_, Err(e)) => return Verdict::fail(e),
    };
    let z1 = r1.0 / r1.1;
    let z2 = r2.0 / r2.1;
    Verdict::new(
        ks < 0.02 && z1.abs() <= 4.0 && z2.abs() <= 4.0,
        format!(
            "KS {ks:.4} on {} samples; reversibility z: x1*y1^2 {z1:.2}, 1{{x1<y1}} {z2:.2}",
            xs.len()
        ),
    )
}

pub const MTM_CAP: u64 = 20_000;
pub const SMTM_LIMIT: u64 = 1_000;

/// Steps until `|x| <= 5`, or `None` within `cap` steps.
fn norm_crossing(target: &Target, cfg: KernelConfig, seed: u64, cap: u64) -> Option<u64> {
    let mut chain = Chain::new(target, cfg, vec![10.0; 10], seed, 0).expect("valid");
    (1..=cap).find(|_| squared_norm(&chain.advance().expect("step").next.x) <= 25.0)
}

pub fn pathology_avoidance() -> Verdict {
    let dim = 10;
    let target = Target::product(UnivariateComponent::gaussian(0.0, 1.0).expect("valid"), dim).expect("valid");
    let chart = StereoChart::new(dim, (dim as f64).sqrt()).expect("valid");
    let h = ell_to_h(dim, 1.0, 2.38).expect("in range");
    let sigma = 2.38 / (dim as f64).sqrt();
    let seeds: Vec<u64> = (1..=10).collect();
    let smtm: Vec<Option<u64>> = seeds
        .par_iter()
        .map(|&s| norm_crossing(&target, KernelConfig::smtm(chart.clone(), 100, GB, h), s, SMTM_LIMIT))
        .collect();
    let mtm: Vec<Option<u64>> = seeds
        .par_iter()
        .map(|&s| norm_crossing(&target, KernelConfig::mtm(100, GB, sigma), s, MTM_CAP))
        .collect();
    // censored runs count as just past the cap
    let median = |v: &[Option<u64>], cap: u64| {
        let mut t: Vec<f64> = v.iter().map(|c| c.unwrap_or(cap + 1) as f64).collect();
        t.sort_by(f64::total_cmp);
        0.5 * (t[t.len() / 2 - 1] + t[t.len() / 2])
    };
    let smtm_hits = smtm.iter().filter(|c| c.is_some()).count();
    let (ms, mm) = (median(&smtm, SMTM_LIMIT), median(&mtm, MTM_CAP));
    let censored = mtm.iter().filter(|c| c.is_none()).count();
    Verdict::new(
        smtm_hits >= 9 && mm >= 10.0 * ms,
        format!(
            "GB-SMTM reached |x| <= 5 within {SMTM_LIMIT} on {smtm_hits}/10 seeds (median {ms}); GB-MTM median {mm} ({censored}/10 censored at {MTM_CAP})"
        ),
    )
}

pub fn far_tail_acceptance() -> Verdict {
    let dim = 10;
    let target = Target::poly_tail(2.0 * dim as f64 + 1.0, dim).expect("valid");
    let chart = StereoChart::new(dim, 1.0).expect("valid");
    let h = 0.5 / (dim as f64).sqrt();
    let cfg = KernelConfig::ideal(chart, 256, GB, h).with_parallel_threshold(usize::MAX);
    let x = vec![1e6 / (dim as f64).sqrt(); dim];
    let state = ChainState::new(&target, x).expect("finite density");
    let alphas: Result<Vec<f64>, _> = (0..1_000u64)
        .into_par_iter()
        .map(|t| {
            let key = StreamKey::new(909, t);
            ideal_step(&target, &state, &cfg, &key.step(0)).map(|r| r.alpha)
        })
        .collect();
    match alphas {
        Ok(a) => {
            let mean = a.iter().sum::<f64>() / a.len() as f64;
            Verdict::new(mean >= 0.05, format!("mean ideal-scheme acceptance at |x| = 1e6: {mean:.4} (floor 0.05)"))
        }
        Err(e) => Verdict::fail(e),
    }
}

pub const PRESET_BUDGET: Duration = Duration::from_secs(300);

/// Runs every preset twice, the second time on a two-thread pool, and
/// compares all output bytes.
pub fn preset_determinism() -> Verdict {
    let mut problems = Vec::new();
    let mut times = Vec::new();
    let pool = |n: Option<usize>| {
        let mut b = rayon::ThreadPoolBuilder::new();
        if let Some(n) = n {
            b = b.num_threads(n);
        }
        b.build().expect("thread pool")
    };
    let (default_pool, two) = (pool(None), pool(Some(2)));
    for name in presets::NAMES {
        let cfg = match config::load(name, &[]) {
            Ok(c) => c,
            Err(e) => {
                problems.push(format!("{name}: {e}"));
                continue;
            }
        };
        let (a, b) = (tempfile::tempdir().expect("tempdir"), tempfile::tempdir().expect("tempdir"));
        let start = Instant::now();
        let first = runner::run_on_pool(&cfg, a.path(), &default_pool);
        let elapsed = start.elapsed();
        times.push(format!("{name} {:.0}s", elapsed.as_secs_f64()));
        let second = runner::run_on_pool(&cfg, b.path(), &two);
        match (first, second) {
            (Ok(ma), Ok(mb)) => {
                let same_manifest = std::fs::read(a.path().join("manifest.json")).ok()
                    == std::fs::read(b.path().join("manifest.json")).ok();
                let same_files = ma.files.iter().all(|f| {
                    std::fs::read(a.path().join(&f.path)).ok() == std::fs::read(b.path().join(&f.path)).ok()
                });
                if !(same_manifest && same_files && ma == mb) {
                    problems.push(format!("{name}: outputs differ between runs"));
                }
            }
            (Err(e), _) | (_, Err(e)) => problems.push(format!("{name}: {e}")),
        }
        if elapsed > PRESET_BUDGET {
            problems.push(format!("{name}: {:.0}s over the 300s budget", elapsed.as_secs_f64()));
        }
    }
    let ok = problems.is_empty();
    Verdict::new(
        ok,
        if ok {
            format!("all {} presets byte-identical on rerun; {}", presets::NAMES.len(), times.join(", "))
        } else {
            problems.join("; ")
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn asymptote_fit_recovers_parameters() {
        let ns = MONOTONE_NS;
        let vals: Vec<f64> = ns.iter().map(|&n| 0.98 - 0.4 * (n as f64).powf(-0.7)).collect();
        let (a, b, g) = fit_asymptote(&ns, &vals);
        assert!((a - 0.98).abs() < 1e-9 && (b - 0.4).abs() < 1e-9 && (g - 0.7).abs() < 1e-9);
    }

    #[test]
    fn criteria_are_numbered_in_order() {
        let ids: Vec<u8> = CRITERIA.iter().map(|c| c.id).collect();
        assert_eq!(ids, (1..=10).collect::<Vec<_>>());
    }

    #[test]
    fn outcome_line_format() {
        let o = Outcome {
            id: 3,
            name: "x",
            passed: false,
            detail: "d".into(),
            elapsed: Duration::from_millis(1500),
            budget: secs(30),
        };
        assert_eq!(o.line(), "FAIL criterion  3 (x): d [1.5s of 30s]");
    }
}
