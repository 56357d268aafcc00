//! Experiment configuration files.
//!
//! A config is one flat TOML table. `extends = "<preset or path>"` pulls in
//! a base table whose keys the child overrides; `--set key=value` overrides
//! are applied last, with the value parsed as a TOML value (bare words fall
//! back to strings).

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use smtm_core::diagnostics::Retention;
use smtm_core::kernels::DEFAULT_PARALLEL_THRESHOLD;
use smtm_core::scaling::{ell_to_h, LimitGeometry, LimitModel};
use smtm_core::{KernelConfig, KernelKind, LogDensity, StereoChart, Target, UnivariateComponent, WeightKind};
use toml::{Table, Value};

use crate::presets;
use crate::ExperimentError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Finite-dimensional chains, one per kernel and seed.
    Chains,
    /// Limit-functional curves over a grid of step scales.
    Limit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RetentionSetting {
    Full,
    Summary,
}

impl From<RetentionSetting> for Retention {
    fn from(r: RetentionSetting) -> Self {
        match r {
            RetentionSetting::Full => Retention::Full,
            RetentionSetting::Summary => Retention::Summary,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Report {
    None,
    /// Per group, whether the first curve dominates the others.
    Dominance,
    /// Per curve, the ESJD-optimal step scale.
    Optimum,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub mode: Mode,
    pub title: String,

    pub target: String,
    /// Every coordinate of the initial state.
    pub x0: f64,
    /// Kernel specs such as `gb-smtm:n=5,ell=2.38`, in legend order.
    pub kernels: Vec<String>,
    pub seed: u64,
    pub n_seeds: u64,
    pub iterations: u64,
    pub burn_in: u64,
    pub thinning: u64,
    pub retention: RetentionSetting,
    /// Chart radius; `sqrt(d)` when absent.
    pub radius: Option<f64>,
    /// Every coordinate of the chart center.
    pub center: f64,
    /// Level of the log10 distance used for crossing times.
    pub crossing_level: f64,
    /// Evaluate candidates of one step on the worker pool.
    pub candidate_parallelism: bool,

    /// Limit curve specs such as `lb-smtm:n=3,m=0.5,lambda=1`.
    pub curves: Vec<String>,
    pub ell_lo: f64,
    pub ell_hi: f64,
    pub ell_points: usize,
    pub samples: usize,
    pub report: Report,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            name: "custom".into(),
            mode: Mode::Chains,
            title: String::new(),
            target: String::new(),
            x0: 0.0,
            kernels: Vec::new(),
            seed: 1,
            n_seeds: 10,
            iterations: 20_000,
            burn_in: 2_000,
            thinning: 10,
            retention: RetentionSetting::Full,
            radius: None,
            center: 0.0,
            crossing_level: 0.5,
            candidate_parallelism: false,
            curves: Vec::new(),
            ell_lo: 0.2,
            ell_hi: 10.0,
            ell_points: 50,
            samples: 200_000,
            report: Report::None,
        }
    }
}

impl ExperimentConfig {
    pub fn seeds(&self) -> Vec<u64> {
        (0..self.n_seeds).map(|k| self.seed + k).collect()
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        let bad = |m: String| Err(ExperimentError::Config(m));
        if self.name.is_empty() || self.name.contains(['/', '\\']) {
            return bad(format!("bad experiment name `{}`", self.name));
        }
        match self.mode {
            Mode::Chains => {
                if self.n_seeds == 0 {
                    return bad("need at least one seed".into());
                }
                if self.iterations <= self.burn_in {
                    return bad(format!(
                        "iterations ({}) must exceed burn_in ({})",
                        self.iterations, self.burn_in
                    ));
                }
                if self.thinning == 0 {
                    return bad("thinning must be at least 1".into());
                }
                if self.kernels.is_empty() {
                    return bad("no kernels configured".into());
                }
                let target = self.parse_target()?;
                for k in &self.kernels {
                    self.kernel_config(k, &target)?;
                }
            }
            Mode::Limit => {
                if self.curves.is_empty() {
                    return bad("no curves configured".into());
                }
                if self.samples < 1000 {
                    return bad("samples must be at least 1000".into());
                }
                if !(self.ell_lo > 0.0 && self.ell_hi > self.ell_lo && self.ell_points >= 2) {
                    return bad("need 0 < ell_lo < ell_hi and ell_points >= 2".into());
                }
                for c in &self.curves {
                    CurveSpec::parse(c)?;
                }
            }
        }
        Ok(())
    }

    pub fn parse_target(&self) -> Result<Target, ExperimentError> {
        self.target
            .parse()
            .map_err(|e| ExperimentError::Config(format!("target: {e}")))
    }

    pub fn chart_radius(&self, dim: usize) -> f64 {
        self.radius.unwrap_or((dim as f64).sqrt())
    }

    /// Builds the kernel described by `spec` for `target`.
    pub fn kernel_config(&self, spec: &str, target: &Target) -> Result<KernelConfig, ExperimentError> {
        let s = KernelSpec::parse(spec)?;
        let dim = target.dim();
        let threshold = if self.candidate_parallelism {
            DEFAULT_PARALLEL_THRESHOLD
        } else {
            usize::MAX
        };
        let radius = s.radius.unwrap_or(self.chart_radius(dim));
        let cfg = if s.kind.is_spherical() {
            let chart = StereoChart::with_center(radius, vec![self.center; dim])
                .map_err(|e| ExperimentError::Config(format!("{spec}: {e}")))?;
            let h = match (s.step, s.ell) {
                (Some(h), _) => h,
                (None, Some(ell)) => {
                    let lambda = radius * radius / dim as f64;
                    ell_to_h(dim, lambda, ell).map_err(|e| ExperimentError::Config(format!("{spec}: {e}")))?
                }
                (None, None) => unreachable!("checked by KernelSpec::parse"),
            };
            match s.kind {
                KernelKind::Srwm => KernelConfig::srwm(chart, h),
                KernelKind::Smtm => KernelConfig::smtm(chart, s.n, s.weight, h),
                _ => KernelConfig::ideal(chart, s.n, s.weight, h),
            }
        } else {
            let step = s.step.unwrap_or_else(|| s.ell.unwrap_or(0.0) / (dim as f64).sqrt());
            match s.kind {
                KernelKind::Rwm => KernelConfig::rwm(step),
                _ => KernelConfig::mtm(s.n, s.weight, step),
            }
        }
        .with_parallel_threshold(threshold);
        cfg.validate(dim)
            .map_err(|e| ExperimentError::Config(format!("{spec}: {e}")))?;
        Ok(cfg)
    }
}

type SpecParts<'a> = (&'a str, Vec<(&'a str, f64)>);

/// Parses `family:key=value,...` into the family and its pairs.
fn split_spec(spec: &str) -> Result<SpecParts<'_>, ExperimentError> {
    let (family, rest) = spec.split_once(':').unwrap_or((spec, ""));
    let mut pairs = Vec::new();
    for part in rest.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let (k, v) = part
            .split_once('=')
            .ok_or_else(|| ExperimentError::Config(format!("`{spec}`: expected key=value, got `{part}`")))?;
        let v: f64 = v
            .trim()
            .parse()
            .map_err(|_| ExperimentError::Config(format!("`{spec}`: bad number `{v}`")))?;
        pairs.push((k.trim(), v));
    }
    Ok((family.trim(), pairs))
}

fn family_kind(family: &str) -> Option<(KernelKind, WeightKind)> {
    let gb = WeightKind::GloballyBalanced;
    let lb = WeightKind::LocallyBalanced;
    Some(match family {
        "rwm" => (KernelKind::Rwm, gb),
        "srwm" => (KernelKind::Srwm, gb),
        "gb-mtm" => (KernelKind::Mtm, gb),
        "lb-mtm" => (KernelKind::Mtm, lb),
        "gb-smtm" => (KernelKind::Smtm, gb),
        "lb-smtm" => (KernelKind::Smtm, lb),
        "gb-ideal" => (KernelKind::Ideal, gb),
        "lb-ideal" => (KernelKind::Ideal, lb),
        _ => return None,
    })
}

fn as_count(spec: &str, key: &str, v: f64) -> Result<usize, ExperimentError> {
    if v >= 1.0 && v.fract() == 0.0 && v <= u32::MAX as f64 {
        Ok(v as usize)
    } else {
        Err(ExperimentError::Config(format!("`{spec}`: {key} must be a positive integer")))
    }
}

/// A kernel spec string, e.g. `gb-smtm:n=5,ell=2.38` or `rwm:step=0.75`.
///
/// `step` is the sphere step `h` or the Euclidean proposal scale; `ell`
/// derives it from the dimension-free scale instead. `r` overrides the
/// chart radius. For the ideal scheme `n` is the inner sample size `M`.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelSpec {
    pub kind: KernelKind,
    pub weight: WeightKind,
    pub n: usize,
    pub step: Option<f64>,
    pub ell: Option<f64>,
    pub radius: Option<f64>,
}

impl KernelSpec {
    pub fn parse(spec: &str) -> Result<Self, ExperimentError> {
        let (family, pairs) = split_spec(spec)?;
        let (kind, weight) =
            family_kind(family).ok_or_else(|| ExperimentError::Config(format!("unknown kernel `{family}`")))?;
        let mut out = Self {
            kind,
            weight,
            n: 1,
            step: None,
            ell: None,
            radius: None,
        };
        for (k, v) in pairs {
            match k {
                "n" => out.n = as_count(spec, k, v)?,
                "step" | "h" => out.step = Some(v),
                "ell" => out.ell = Some(v),
                "r" if kind.is_spherical() => out.radius = Some(v),
                _ => return Err(ExperimentError::Config(format!("`{spec}`: unknown key `{k}`"))),
            }
        }
        if out.step.is_none() == out.ell.is_none() {
            return Err(ExperimentError::Config(format!("`{spec}`: give exactly one of step/h and ell")));
        }
        Ok(out)
    }
}

/// A limit curve spec, e.g. `lb-smtm:n=3,m=0.5,lambda=1`.
///
/// The component is `N(m, 1 - m^2)`, so `I = 1 / (1 - m^2)`. Curves that
/// share `(m, lambda)` form one group of the dominance report.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveSpec {
    pub kind: KernelKind,
    pub weight: WeightKind,
    pub n: usize,
    pub m: f64,
    pub lambda: f64,
}

impl CurveSpec {
    pub fn parse(spec: &str) -> Result<Self, ExperimentError> {
        let (family, pairs) = split_spec(spec)?;
        let (kind, weight) = family_kind(family)
            .filter(|(k, _)| *k != KernelKind::Ideal)
            .ok_or_else(|| ExperimentError::Config(format!("unknown limit family `{family}`")))?;
        let mut out = Self {
            kind,
            weight,
            n: 1,
            m: 0.0,
            lambda: 1.0,
        };
        for (k, v) in pairs {
            match k {
                "n" => out.n = as_count(spec, k, v)?,
                "m" => out.m = v,
                "lambda" => out.lambda = v,
                _ => return Err(ExperimentError::Config(format!("`{spec}`: unknown key `{k}`"))),
            }
        }
        if matches!(kind, KernelKind::Rwm | KernelKind::Srwm) && out.n != 1 {
            return Err(ExperimentError::Config(format!("`{spec}`: {family} has a single candidate")));
        }
        if !(out.m.abs() < 1.0) || !(out.lambda > 0.0) {
            return Err(ExperimentError::Config(format!("`{spec}`: need |m| < 1 and lambda > 0")));
        }
        UnivariateComponent::unit_second_moment_gaussian(out.m)
            .map_err(|e| ExperimentError::Config(format!("`{spec}`: {e}")))?;
        Ok(out)
    }

    pub fn model(&self) -> LimitModel {
        LimitModel {
            geometry: if self.kind.is_spherical() {
                LimitGeometry::Sphere { lambda: self.lambda }
            } else {
                LimitGeometry::Euclidean
            },
            fisher: 1.0 / (1.0 - self.m * self.m),
            weight: self.weight,
        }
    }

    pub fn group(&self) -> String {
        format!("m={},lambda={}", self.m, self.lambda)
    }
}

fn merge(base: &mut Table, child: Table) {
    for (k, v) in child {
        base.insert(k, v);
    }
}

fn parse_table(text: &str, origin: &str) -> Result<Table, ExperimentError> {
    text.parse::<Table>()
        .map_err(|e| ExperimentError::Config(format!("{origin}: {e}")))
}

/// Resolves `source` (preset name or file path) to a table, following
/// `extends` chains.
fn load_table(source: &str, base_dir: Option<&Path>, seen: &mut Vec<String>) -> Result<Table, ExperimentError> {
    if seen.iter().any(|s| s == source) {
        return Err(ExperimentError::Config(format!("`extends` cycle through `{source}`")));
    }
    seen.push(source.to_string());
    let (mut table, dir) = if let Some(text) = presets::source(source) {
        (parse_table(text, source)?, None)
    } else {
        let path: PathBuf = match base_dir {
            Some(d) if Path::new(source).is_relative() => d.join(source),
            _ => PathBuf::from(source),
        };
        if !path.is_file() {
            return Err(ExperimentError::UnknownPreset(source.to_string()));
        }
        let text = fs::read_to_string(&path).map_err(|e| ExperimentError::Config(format!("{}: {e}", path.display())))?;
        (parse_table(&text, &path.display().to_string())?, path.parent().map(Path::to_path_buf))
    };
    if let Some(parent) = table.remove("extends") {
        let Value::String(parent) = parent else {
            return Err(ExperimentError::Config(format!("{source}: `extends` must be a string")));
        };
        let mut base = load_table(&parent, dir.as_deref(), seen)?;
        merge(&mut base, table);
        table = base;
    }
    Ok(table)
}

/// Parses one `key=value` override.
pub fn parse_override(assignment: &str) -> Result<(String, Value), ExperimentError> {
    let (k, v) = assignment
        .split_once('=')
        .ok_or_else(|| ExperimentError::Config(format!("override `{assignment}` is not key=value")))?;
    let key = k.trim().to_string();
    if key.is_empty() || key == "extends" {
        return Err(ExperimentError::Config(format!("cannot override `{key}`")));
    }
    let value = match format!("v = {}", v.trim()).parse::<Table>() {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => Value::String(v.trim().to_string()),
    };
    Ok((key, value))
}

/// Loads a preset or config file and applies overrides.
pub fn load(source: &str, overrides: &[String]) -> Result<ExperimentConfig, ExperimentError> {
    let mut table = load_table(source, None, &mut Vec::new())?;
    for o in overrides {
        let (k, v) = parse_override(o)?;
        table.insert(k, v);
    }
    let cfg: ExperimentConfig = table
        .try_into()
        .map_err(|e: toml::de::Error| ExperimentError::Config(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kernel_specs() {
        let s = KernelSpec::parse("gb-smtm:n=5,ell=2.38").unwrap();
        assert_eq!(s.kind, KernelKind::Smtm);
        assert_eq!(s.weight, WeightKind::GloballyBalanced);
        assert_eq!((s.n, s.ell), (5, Some(2.38)));
        let s = KernelSpec::parse("lb-mtm: n = 3, step = 0.5").unwrap();
        assert_eq!((s.kind, s.weight, s.n, s.step), (KernelKind::Mtm, WeightKind::LocallyBalanced, 3, Some(0.5)));
        for bad in ["hmc:step=1", "rwm", "rwm:step=1,ell=1", "rwm:step=x", "gb-mtm:n=0,step=1", "rwm:r=2,step=1"] {
            assert!(KernelSpec::parse(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn ell_sets_the_step() {
        let cfg = ExperimentConfig {
            target: "gaussian(0,1)^10".into(),
            ..Default::default()
        };
        let t = cfg.parse_target().unwrap();
        let k = cfg.kernel_config("rwm:ell=2.38", &t).unwrap();
        assert!((k.step - 2.38 / 10f64.sqrt()).abs() < 1e-15);
        let k = cfg.kernel_config("srwm:ell=2.38", &t).unwrap();
        assert_eq!(k.step, ell_to_h(10, 1.0, 2.38).unwrap());
        assert_eq!(k.chart.as_ref().unwrap().radius(), 10f64.sqrt());
    }

    #[test]
    fn curve_specs() {
        let c = CurveSpec::parse("lb-smtm:n=3,m=0.5,lambda=10").unwrap();
        assert_eq!(c.model().geometry, LimitGeometry::Sphere { lambda: 10.0 });
        assert!((c.model().fisher - 4.0 / 3.0).abs() < 1e-15);
        assert_eq!(CurveSpec::parse("rwm:m=0.2").unwrap().model().geometry, LimitGeometry::Euclidean);
        for bad in ["srwm:n=3", "lb-smtm:m=1", "gb-ideal:n=4", "lb-mtm:lambda=0"] {
            assert!(CurveSpec::parse(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn overrides_parse_as_toml_values() {
        assert_eq!(parse_override("iterations=500").unwrap(), ("iterations".into(), Value::Integer(500)));
        assert_eq!(parse_override("x0 = 2.5").unwrap().1, Value::Float(2.5));
        assert_eq!(parse_override("target=gaussian(0,1)^3").unwrap().1, Value::String("gaussian(0,1)^3".into()));
        assert!(matches!(parse_override("kernels=[\"rwm:step=1\"]").unwrap().1, Value::Array(_)));
        assert!(parse_override("extends=x").is_err());
        assert!(parse_override("nokey").is_err());
    }

    #[test]
    fn extends_chains_and_overrides() {
        let dir = tempfile::tempdir().unwrap();
        let base = dir.path().join("base.toml");
        fs::write(&base, "extends = \"burnin-light\"\niterations = 3000\n").unwrap();
        let child = dir.path().join("child.toml");
        fs::write(&child, "extends = \"base.toml\"\nname = \"child\"\n").unwrap();
        let cfg = load(child.to_str().unwrap(), &["n_seeds=2".into()]).unwrap();
        assert_eq!(cfg.name, "child");
        assert_eq!(cfg.iterations, 3000);
        assert_eq!(cfg.n_seeds, 2);
        assert_eq!(cfg.kernels, load("burnin-light", &[]).unwrap().kernels);
    }

    #[test]
    fn config_errors() {
        let dir = tempfile::tempdir().unwrap();
        let cyc = dir.path().join("cyc.toml");
        fs::write(&cyc, "extends = \"cyc.toml\"\n").unwrap();
        assert!(matches!(load(cyc.to_str().unwrap(), &[]), Err(ExperimentError::Config(_))));
        assert!(matches!(load("no-such-preset", &[]), Err(ExperimentError::UnknownPreset(_))));
        assert!(load("burnin-light", &["burn_in=20000".into()]).is_err());
        assert!(load("burnin-light", &["n_seeds=0".into()]).is_err());
        assert!(load("burnin-light", &["colour=1".into()]).is_err());
        assert!(load("burnin-light", &["kernels=[\"rwm:ell=-1\"]".into()]).is_err());
    }

    #[test]
    fn every_preset_is_valid() {
        for name in presets::NAMES {
            let cfg = load(name, &[]).unwrap();
            assert_eq!(cfg.name, *name);
        }
    }
}
