//! Runs a resolved config and writes its artifacts.
//!
//! Layout of an output directory:
//!
//! * `chains/kNN-<kernel>-sSEED.csv`: one trace per kernel and seed (chain mode)
//! * `summary.csv`: per-chain or per-grid-point statistics
//! * `figure.csv`, `figure.svg`: long-format series and their plot
//! * `dominance.csv` or `optimum.csv` when the config asks for a report
//! * `manifest.json`: resolved config, seeds, version and file hashes

use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use smtm_core::diagnostics::{acceptance_rate, burnin_curve, esjd, first_crossing, ChainTrace};
use smtm_core::scaling::{limit_sweep, McEstimate};
use smtm_core::{Chain, LogDensity};

use crate::config::{CurveSpec, ExperimentConfig, Mode, Report};
use crate::svg::{render_svg, series_csv, PlotSpec, Series};
use crate::ExperimentError;

pub const THREADS_ENV: &str = "SMTM_THREADS";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileEntry {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

/// A named pass/fail outcome computed from the run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub name: String,
    pub version: String,
    pub config: ExperimentConfig,
    pub seeds: Vec<u64>,
    pub notes: Vec<String>,
    pub checks: Vec<Check>,
    pub files: Vec<FileEntry>,
}

/// Worker pool sized by `SMTM_THREADS`, or by rayon's default when unset.
pub fn worker_pool() -> Result<rayon::ThreadPool, ExperimentError> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = v
            .trim()
            .parse()
            .ok()
            .filter(|&n| n >= 1)
            .ok_or_else(|| ExperimentError::Config(format!("{THREADS_ENV} must be a positive integer, got `{v}`")))?;
        b = b.num_threads(n);
    }
    b.build().map_err(|e| ExperimentError::Runtime(e.to_string()))
}

fn write(dir: &Path, rel: &str, bytes: &[u8]) -> Result<(), ExperimentError> {
    let path = dir.join(rel);
    if let Some(p) = path.parent() {
        fs::create_dir_all(p).map_err(|e| ExperimentError::io(p, e))?;
    }
    fs::write(&path, bytes).map_err(|e| ExperimentError::io(&path, e))
}

fn csv_text<R: AsRef<[u8]>>(header: &[&str], rows: impl IntoIterator<Item = Vec<R>>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for r in rows {
        w.write_record(r).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
}

fn slug(spec: &str) -> String {
    spec.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '.' { c } else { '-' })
        .collect()
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Runs `cfg` on the `SMTM_THREADS` pool and writes everything under `out_dir`.
pub fn run(cfg: &ExperimentConfig, out_dir: &Path) -> Result<Manifest, ExperimentError> {
    run_on_pool(cfg, out_dir, &worker_pool()?)
}

pub fn run_on_pool(cfg: &ExperimentConfig, out_dir: &Path, pool: &rayon::ThreadPool) -> Result<Manifest, ExperimentError> {
    cfg.validate()?;
    fs::create_dir_all(out_dir).map_err(|e| ExperimentError::io(out_dir, e))?;
    let mut manifest = Manifest {
        name: cfg.name.clone(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        config: cfg.clone(),
        seeds: Vec::new(),
        notes: Vec::new(),
        checks: Vec::new(),
        files: Vec::new(),
    };
    let written = pool.install(|| match cfg.mode {
        Mode::Chains => run_chains(cfg, out_dir, &mut manifest),
        Mode::Limit => run_limit(cfg, out_dir, &mut manifest),
    })?;
    for rel in written {
        let bytes = fs::read(out_dir.join(&rel)).map_err(|e| ExperimentError::io(&out_dir.join(&rel), e))?;
        manifest.files.push(FileEntry {
            path: rel,
            sha256: hex::encode(Sha256::digest(&bytes)),
            bytes: bytes.len() as u64,
        });
    }
    manifest.files.sort_by(|a, b| a.path.cmp(&b.path));
    let json = serde_json::to_string_pretty(&manifest).map_err(|e| ExperimentError::Runtime(e.to_string()))?;
    write(out_dir, "manifest.json", format!("{json}\n").as_bytes())?;
    Ok(manifest)
}

struct ChainOutcome {
    kernel: usize,
    seed: u64,
    trace: ChainTrace,
}

fn run_one_chain(
    cfg: &ExperimentConfig,
    target: &smtm_core::Target,
    kernel: usize,
    seed: u64,
) -> Result<ChainOutcome, ExperimentError> {
    let spec = &cfg.kernels[kernel];
    let kc = cfg.kernel_config(spec, target)?;
    let x0 = vec![cfg.x0; target.dim()];
    let runtime = |e: String| ExperimentError::Runtime(format!("{spec}, seed {seed}: {e}"));
    let mut chain = Chain::new(target, kc, x0.clone(), seed, kernel as u64).map_err(|e| runtime(e.to_string()))?;
    let mut trace =
        ChainTrace::new(x0, cfg.retention.into(), cfg.burn_in, cfg.thinning).map_err(|e| runtime(e.to_string()))?;
    for _ in 0..cfg.iterations {
        let r = chain.advance().map_err(|e| runtime(e.to_string()))?;
        trace.push(&r);
    }
    Ok(ChainOutcome { kernel, seed, trace })
}

fn run_chains(cfg: &ExperimentConfig, dir: &Path, manifest: &mut Manifest) -> Result<Vec<String>, ExperimentError> {
    let target = cfg.parse_target()?;
    let reference = target.mean().unwrap_or_else(|| vec![0.0; target.dim()]);
    let seeds = cfg.seeds();
    manifest.seeds.clone_from(&seeds);
    let jobs: Vec<(usize, u64)> = (0..cfg.kernels.len())
        .flat_map(|k| seeds.iter().map(move |&s| (k, s)))
        .collect();
    let outcomes: Vec<ChainOutcome> = jobs
        .par_iter()
        .map(|&(k, s)| run_one_chain(cfg, &target, k, s))
        .collect::<Result<_, _>>()?;

    let mut files = Vec::new();
    let mut summary = Vec::new();
    let mut curves: Vec<Vec<Vec<(u64, f64)>>> = vec![Vec::new(); cfg.kernels.len()];
    for o in &outcomes {
        let spec = &cfg.kernels[o.kernel];
        let rel = format!("chains/k{:02}-{}-s{}.csv", o.kernel, slug(spec), o.seed);
        let mut buf = Vec::new();
        o.trace.write_csv(&mut buf).expect("in-memory write");
        write(dir, &rel, &buf)?;
        files.push(rel);
        let curve = burnin_curve(&o.trace, &reference).ok();
        let crossing = curve.as_deref().and_then(|c| first_crossing(c, cfg.crossing_level));
        let final_dist = curve.as_ref().and_then(|c| c.last()).map(|p| p.1);
        summary.push(vec![
            spec.clone(),
            o.seed.to_string(),
            acceptance_rate(&o.trace).map(|v| v.to_string()).unwrap_or_default(),
            esjd(&o.trace).map(|v| v.to_string()).unwrap_or_default(),
            o.trace.mean_alpha().map(|v| v.to_string()).unwrap_or_default(),
            crossing.map(|v| v.to_string()).unwrap_or_default(),
            final_dist.map(|v| v.to_string()).unwrap_or_default(),
        ]);
        if let Some(c) = curve {
            curves[o.kernel].push(c);
        }
    }
    write(
        dir,
        "summary.csv",
        csv_text(
            &["kernel", "seed", "acceptance", "esjd", "mean_alpha", "crossing", "final_log_distance"],
            summary,
        )
        .as_bytes(),
    )?;
    files.push("summary.csv".into());

    let series: Vec<Series> = cfg
        .kernels
        .iter()
        .zip(&curves)
        .filter(|(_, cs)| !cs.is_empty())
        .map(|(spec, cs)| {
            let pts = (0..cs[0].len())
                .map(|i| {
                    let mut v: Vec<f64> = cs.iter().map(|c| c[i].1).collect();
                    (cs[0][i].0 as f64, median(&mut v))
                })
                .collect();
            (spec.clone(), pts)
        })
        .collect();
    manifest.notes.push(format!(
        "figure: median over seeds of log10 distance to {}; crossing: first retained iteration at or below {}",
        if target.mean().is_some() { "the target mean" } else { "the origin" },
        cfg.crossing_level
    ));
    let plot = PlotSpec {
        title: cfg.title.clone(),
        x_label: "iteration".into(),
        y_label: "log10 distance to target mean (median over seeds)".into(),
        series_order: cfg.kernels.clone(),
    };
    files.extend(write_figure(dir, &series, &plot)?);
    Ok(files)
}

fn write_figure(dir: &Path, series: &[Series], plot: &PlotSpec) -> Result<Vec<String>, ExperimentError> {
    let csv = series_csv(series);
    let svg = render_svg(&csv, plot).map_err(|e| ExperimentError::Runtime(e.to_string()))?;
    write(dir, "figure.csv", csv.as_bytes())?;
    write(dir, "figure.svg", svg.as_bytes())?;
    Ok(vec!["figure.csv".into(), "figure.svg".into()])
}

/// Limit curve of one spec: `(ell, acceptance, esjd)` per grid point.
pub struct LimitCurve {
    pub spec: String,
    pub parsed: CurveSpec,
    pub points: Vec<(f64, McEstimate, McEstimate)>,
}

impl LimitCurve {
    pub fn peak(&self) -> (f64, McEstimate, McEstimate) {
        *self
            .points
            .iter()
            .max_by(|a, b| a.2.mean.total_cmp(&b.2.mean))
            .expect("non-empty grid")
    }

    /// ESJD at acceptance `a`, interpolated linearly along the curve.
    fn esjd_at_acceptance(&self, a: f64) -> Option<f64> {
        let mut pts: Vec<(f64, f64)> = self.points.iter().map(|p| (p.1.mean, p.2.mean)).collect();
        pts.sort_by(|p, q| p.0.total_cmp(&q.0));
        let k = pts.partition_point(|p| p.0 < a);
        if k == 0 || k == pts.len() {
            return (pts.first().map(|p| p.0) == Some(a)).then(|| pts[0].1);
        }
        let ((a0, e0), (a1, e1)) = (pts[k - 1], pts[k]);
        Some(if a1 > a0 { e0 + (e1 - e0) * (a - a0) / (a1 - a0) } else { e1 })
    }

    fn acceptance_range(&self) -> (f64, f64) {
        self.points
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), p| (l.min(p.1.mean), h.max(p.1.mean)))
    }
}

pub fn limit_curves(cfg: &ExperimentConfig) -> Result<Vec<LimitCurve>, ExperimentError> {
    let ells: Vec<f64> = smtm_core::scaling::EllGrid::new(cfg.ell_lo, cfg.ell_hi, cfg.ell_points)
        .map_err(|e| ExperimentError::Config(e.to_string()))?
        .values();
    cfg.curves
        .par_iter()
        .map(|spec| {
            let parsed = CurveSpec::parse(spec)?;
            let sweep = limit_sweep(&parsed.model(), &ells, &[parsed.n], cfg.samples, cfg.seed)
                .map_err(|e| ExperimentError::Runtime(format!("{spec}: {e}")))?;
            let points = ells
                .iter()
                .enumerate()
                .map(|(i, &l)| (l, sweep.acceptance[i][0], sweep.esjd[i][0]))
                .collect();
            Ok(LimitCurve {
                spec: spec.clone(),
                parsed,
                points,
            })
        })
        .collect()
}

/// Row of the dominance report.
#[derive(Debug, Clone, PartialEq)]
pub struct Dominance {
    pub group: String,
    pub leader: String,
    pub other: String,
    pub leader_peak: f64,
    pub other_peak: f64,
    /// Leader ESJD at least the other's at every shared acceptance level.
    pub pointwise: bool,
}

impl Dominance {
    pub fn dominates(&self) -> bool {
        self.pointwise && self.leader_peak > self.other_peak
    }
}

const DOMINANCE_LEVELS: usize = 50;

/// The first curve of each `(m, lambda)` group against the rest of it.
pub fn dominance_report(curves: &[LimitCurve]) -> Vec<Dominance> {
    let mut groups: Vec<String> = Vec::new();
    for c in curves {
        if !groups.contains(&c.parsed.group()) {
            groups.push(c.parsed.group());
        }
    }
    let mut out = Vec::new();
    for g in groups {
        let members: Vec<&LimitCurve> = curves.iter().filter(|c| c.parsed.group() == g).collect();
        let leader = members[0];
        for other in &members[1..] {
            let (l0, l1) = leader.acceptance_range();
            let (o0, o1) = other.acceptance_range();
            let (lo, hi) = (l0.max(o0), l1.min(o1));
            let pointwise = (0..DOMINANCE_LEVELS).all(|k| {
                let a = lo + (hi - lo) * k as f64 / (DOMINANCE_LEVELS - 1) as f64;
                match (leader.esjd_at_acceptance(a), other.esjd_at_acceptance(a)) {
                    (Some(x), Some(y)) => x >= y,
                    _ => true,
                }
            });
            out.push(Dominance {
                group: g.clone(),
                leader: leader.spec.clone(),
                other: other.spec.clone(),
                leader_peak: leader.peak().2.mean,
                other_peak: other.peak().2.mean,
                pointwise,
            });
        }
    }
    out
}

fn run_limit(cfg: &ExperimentConfig, dir: &Path, manifest: &mut Manifest) -> Result<Vec<String>, ExperimentError> {
    manifest.seeds = vec![cfg.seed];
    let curves = limit_curves(cfg)?;
    let mut files = Vec::new();
    let rows = curves.iter().flat_map(|c| {
        c.points.iter().map(move |(l, a, e)| {
            vec![
                c.spec.clone(),
                l.to_string(),
                a.mean.to_string(),
                a.std_error.to_string(),
                e.mean.to_string(),
                e.std_error.to_string(),
            ]
        })
    });
    write(
        dir,
        "summary.csv",
        csv_text(&["curve", "ell", "acceptance", "acceptance_se", "esjd", "esjd_se"], rows).as_bytes(),
    )?;
    files.push("summary.csv".into());
    manifest.notes.push(format!(
        "limit curves: {} Monte Carlo samples per grid point, common random numbers across the grid",
        cfg.samples
    ));

    match cfg.report {
        Report::None => {}
        Report::Dominance => {
            let report = dominance_report(&curves);
            let rows = report.iter().map(|d| {
                vec![
                    d.group.clone(),
                    d.leader.clone(),
                    d.other.clone(),
                    d.leader_peak.to_string(),
                    d.other_peak.to_string(),
                    d.pointwise.to_string(),
                    d.dominates().to_string(),
                ]
            });
            write(
                dir,
                "dominance.csv",
                csv_text(
                    &["group", "leader", "other", "leader_peak_esjd", "other_peak_esjd", "pointwise", "dominates"],
                    rows,
                )
                .as_bytes(),
            )?;
            files.push("dominance.csv".into());
            for d in &report {
                manifest.checks.push(Check {
                    name: format!("{} dominates {} ({})", d.leader, d.other, d.group),
                    passed: d.dominates(),
                });
            }
        }
        Report::Optimum => {
            let rows = curves.iter().map(|c| {
                let (l, a, e) = c.peak();
                vec![c.spec.clone(), l.to_string(), a.mean.to_string(), e.mean.to_string()]
            });
            write(dir, "optimum.csv", csv_text(&["curve", "ell", "acceptance", "esjd"], rows).as_bytes())?;
            files.push("optimum.csv".into());
        }
    }

    let series: Vec<Series> = curves
        .iter()
        .map(|c| (c.spec.clone(), c.points.iter().map(|p| (p.1.mean, p.2.mean)).collect()))
        .collect();
    let plot = PlotSpec {
        title: cfg.title.clone(),
        x_label: "acceptance rate".into(),
        y_label: "limit ESJD".into(),
        series_order: cfg.curves.clone(),
    };
    files.extend(write_figure(dir, &series, &plot)?);
    Ok(files)
}
