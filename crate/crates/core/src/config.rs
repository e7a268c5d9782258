//! Experiment documents: parsing, presets, resolution and sweep expansion.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::decay::{fit_envelope, DecayProfile, Envelope, Family, FitOptions, FitReport};
use crate::diagnostics::LyapunovWeights;
use crate::discretization::Grid;
use crate::error::{Error, Result, Validator};
use crate::integrator::{RunConfig, SchemeKind, SimReport, TimeScheme, DEFAULT_CFL_GUARD};
use crate::model::{normalize_initial_data, stability_number, AlphaKind, DampingSpec, HKind, InitialData, PhysicalParams};
use crate::resolvent::ResolventOptions;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Simulate,
    DecayEnvelope,
    ResolventCheck,
    Sweep,
    Fit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    #[serde(rename = "N")]
    pub n: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeSection {
    #[serde(default)]
    pub kind: SchemeKind,
    /// `null` picks the largest stable explicit step.
    #[serde(default)]
    pub dt: Option<f64>,
    #[serde(rename = "T")]
    pub t_final: f64,
    #[serde(default = "one")]
    pub stride: usize,
    #[serde(default = "default_guard")]
    pub cfl_guard: f64,
}

fn one() -> usize {
    1
}

fn default_guard() -> f64 {
    DEFAULT_CFL_GUARD
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default = "default_dir")]
    pub dir: String,
    #[serde(default = "default_prefix")]
    pub prefix: String,
}

fn default_dir() -> String {
    "out".into()
}

fn default_prefix() -> String {
    "run".into()
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            dir: default_dir(),
            prefix: default_prefix(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitSection {
    pub t0: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t1: Option<f64>,
    pub margin: f64,
    pub calibration_fraction: f64,
    /// Overrides the family chosen from the sign of the stability number.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub family: Option<Family>,
    /// Argument scale of `H2`; defaults to `r^2 / 2`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eps0: Option<f64>,
}

impl Default for FitSection {
    fn default() -> Self {
        let o = FitOptions::default();
        Self {
            t0: o.t0,
            t1: o.t1,
            margin: o.margin,
            calibration_fraction: o.calibration_fraction,
            family: None,
            eps0: None,
        }
    }
}

impl FitSection {
    pub fn options(&self) -> FitOptions {
        FitOptions {
            t0: self.t0,
            t1: self.t1,
            margin: self.margin,
            calibration_fraction: self.calibration_fraction,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    /// Axis name to values; points are the Cartesian product in key order.
    pub axes: BTreeMap<String, Vec<f64>>,
    /// Worker count; `null` uses the available parallelism.
    #[serde(default)]
    pub workers: Option<usize>,
}

/// A complete experiment document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub params: PhysicalParams,
    pub damping: DampingSpec,
    pub ic: InitialData,
    pub grid: GridSection,
    pub time: TimeSection,
    #[serde(default)]
    pub weights: LyapunovWeights,
    #[serde(default)]
    pub outputs: OutputSection,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub fit: FitSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSection>,
    #[serde(default)]
    pub resolvent: ResolventOptions,
}

pub const PRESET_NAMES: [&str; 7] = [
    "mu_zero_linear",
    "mu_zero_power_p1",
    "mu_zero_power_p3",
    "mu_zero_expinv",
    "mu_nonzero_ones",
    "sweep_p",
    "resolvent_default",
];

fn preset_source(name: &str) -> Option<&'static str> {
    Some(match name {
        "mu_zero_linear" => include_str!("../presets/mu_zero_linear.json"),
        "mu_zero_power_p1" => include_str!("../presets/mu_zero_power_p1.json"),
        "mu_zero_power_p3" => include_str!("../presets/mu_zero_power_p3.json"),
        "mu_zero_expinv" => include_str!("../presets/mu_zero_expinv.json"),
        "mu_nonzero_ones" => include_str!("../presets/mu_nonzero_ones.json"),
        "sweep_p" => include_str!("../presets/sweep_p.json"),
        "resolvent_default" => include_str!("../presets/resolvent_default.json"),
        _ => return None,
    })
}

/// A shipped preset, unresolved.
pub fn preset(name: &str) -> Result<ExperimentConfig> {
    let src = preset_source(name).ok_or_else(|| {
        Error::invalid("preset", format!("unknown preset {name:?}; known: {}", PRESET_NAMES.join(", ")))
    })?;
    ExperimentConfig::from_json(src)
}

impl ExperimentConfig {
    /// Parses a document; unknown keys and type errors become validation
    /// errors at path `config`.
    pub fn from_json(src: &str) -> Result<Self> {
        serde_json::from_str(src).map_err(|e| Error::invalid("config", e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let mut v = Validator::new();
        v.absorb("params", self.params.validate());
        v.absorb("damping", self.damping.validate());
        v.absorb("ic", self.ic.validate());
        v.absorb("weights", self.weights.validate());
        v.check(self.grid.n >= Grid::MIN_CELLS, "grid.N", format!("must be >= {}", Grid::MIN_CELLS));
        let t = &self.time;
        v.check(t.t_final >= 0.0 && t.t_final.is_finite(), "time.T", "must be finite and >= 0");
        v.check(t.stride >= 1, "time.stride", "must be >= 1");
        v.positive("time.cfl_guard", t.cfl_guard);
        if let Some(dt) = t.dt {
            v.positive("time.dt", dt);
        }
        if let Some(e) = self.fit.eps0 {
            v.positive("fit.eps0", e);
        }
        v.absorb("fit", self.fit.options().validate());
        v.absorb("resolvent", self.resolvent.validate());
        if let Some(sw) = &self.sweep {
            v.check(!sw.axes.is_empty(), "sweep.axes", "needs at least one axis");
            for (name, values) in &sw.axes {
                let path = format!("sweep.axes.{name}");
                v.check(!values.is_empty(), &path, "axis has no values");
                v.check(values.iter().all(|x| x.is_finite()), &path, "values must be finite");
                v.check(AXES.contains(&name.as_str()), &path, format!("unknown axis; known: {}", AXES.join(", ")));
            }
            if let Some(w) = sw.workers {
                v.check(w >= 1, "sweep.workers", "must be >= 1");
            }
        }
        if v.is_clean() {
            v.absorb("", self.run_config_unchecked().validate());
        }
        v.finish()
    }

    /// Validates and fills every default: the step size, the seed of random
    /// initial data, and an optional seed override. Re-resolving the result
    /// is the identity.
    pub fn resolve(&self, seed: Option<u64>) -> Result<Self> {
        let mut c = self.clone();
        if let Some(s) = seed {
            c.seed = s;
        }
        c.validate()?;
        if c.time.dt.is_none() {
            let grid = Grid::new(c.grid.n)?;
            c.time.dt = Some(TimeScheme::max_dt(&grid, &c.params, c.time.cfl_guard));
        }
        c.ic = normalize_initial_data(&c.ic, c.seed);
        c.validate()?;
        Ok(c)
    }

    fn run_config_unchecked(&self) -> RunConfig {
        let grid = Grid { n: self.grid.n };
        let dt = self
            .time
            .dt
            .unwrap_or_else(|| TimeScheme::max_dt(&grid, &self.params, self.time.cfl_guard));
        RunConfig {
            params: self.params,
            damping: self.damping.clone(),
            ic: self.ic.clone(),
            grid,
            scheme: TimeScheme {
                kind: self.time.kind,
                dt,
                cfl_guard: self.time.cfl_guard,
            },
            t_final: self.time.t_final,
            stride: self.time.stride,
            weights: self.weights,
            seed: self.seed,
        }
    }

    pub fn run_config(&self) -> Result<RunConfig> {
        self.validate()?;
        Ok(self.run_config_unchecked())
    }

    pub fn mu(&self) -> f64 {
        stability_number(&self.params)
    }

    pub fn family(&self) -> Family {
        self.fit.family.unwrap_or_else(|| Family::from_mu(self.mu()))
    }

    pub fn profile(&self) -> Result<DecayProfile> {
        DecayProfile::from_damping(&self.damping, self.fit.eps0)
    }

    /// Fits the configured envelope family to an energy series.
    pub fn fit(&self, series: &[(f64, f64)]) -> Result<(FitReport, Envelope)> {
        fit_envelope(
            series,
            self.family(),
            &self.profile()?,
            self.damping.alpha,
            &self.fit.options(),
        )
    }

    /// Sweep points as `(label, coordinates, resolved config)`.
    pub fn sweep_points(&self) -> Result<Vec<SweepPoint>> {
        let sw = self
            .sweep
            .as_ref()
            .ok_or_else(|| Error::invalid("sweep", "config has no sweep section"))?;
        self.validate()?;
        let mut points: Vec<BTreeMap<String, f64>> = vec![BTreeMap::new()];
        for (name, values) in &sw.axes {
            points = points
                .into_iter()
                .flat_map(|p| {
                    values.iter().map(move |&x| {
                        let mut q = p.clone();
                        q.insert(name.clone(), x);
                        q
                    })
                })
                .collect();
        }
        points
            .into_iter()
            .map(|coords| {
                let label = coords
                    .iter()
                    .map(|(k, v)| format!("{k}={v}"))
                    .collect::<Vec<_>>()
                    .join(",");
                let config = self.at_point(&coords, &label);
                Ok(SweepPoint { label, coords, config })
            })
            .collect()
    }

    /// The config at one sweep point, unresolved; errors surface when the
    /// point is run so that one bad point does not stop the sweep.
    fn at_point(&self, coords: &BTreeMap<String, f64>, label: &str) -> Result<Self> {
        let mut c = self.clone();
        c.sweep = None;
        c.experiment = ExperimentKind::DecayEnvelope;
        c.outputs.prefix = format!("{}_{}", self.outputs.prefix, sanitize(label));
        for (name, &x) in coords {
            apply_axis(&mut c, self, name, x)?;
        }
        Ok(c)
    }
}

const AXES: [&str; 13] = [
    "p", "N", "T", "dt", "alpha", "rho1", "rho2", "rho3", "b", "k", "delta", "beta", "tau",
];

fn apply_axis(c: &mut ExperimentConfig, base: &ExperimentConfig, name: &str, x: f64) -> Result<()> {
    let path = format!("sweep.axes.{name}");
    let p = &mut c.params;
    match name {
        "p" => {
            let coef = match &base.damping.h {
                HKind::Linear { c } | HKind::Power { c, .. } => *c,
                _ => return Err(Error::invalid(path, "needs a linear or power damping")),
            };
            c.damping = DampingSpec::new(c.damping.alpha, HKind::Power { c: coef, p: x });
        }
        "N" => {
            if !(x.fract() == 0.0 && x >= Grid::MIN_CELLS as f64) {
                return Err(Error::invalid(path, format!("{x} is not an integer >= {}", Grid::MIN_CELLS)));
            }
            c.grid.n = x as usize;
            // keep dt/dx fixed when the step is given explicitly
            if let Some(dt) = base.time.dt {
                c.time.dt = Some(dt * base.grid.n as f64 / c.grid.n as f64);
            }
        }
        "T" => c.time.t_final = x,
        "dt" => c.time.dt = Some(x),
        "alpha" => {
            c.damping.alpha = match c.damping.alpha {
                AlphaKind::Constant { .. } => AlphaKind::Constant { a: x },
                AlphaKind::Reciprocal { .. } => AlphaKind::Reciprocal { a: x },
            }
        }
        "rho1" => p.rho1 = x,
        "rho2" => p.rho2 = x,
        "rho3" => p.rho3 = x,
        "b" => p.b = x,
        "k" => p.k = x,
        "delta" => p.delta = x,
        "beta" => p.beta = x,
        "tau" => p.tau = x,
        _ => return Err(Error::invalid(path, "unknown axis")),
    }
    Ok(())
}

fn sanitize(label: &str) -> String {
    label
        .chars()
        .map(|ch| if ch.is_ascii_alphanumeric() || ch == '.' || ch == '-' { ch } else { '_' })
        .collect()
}

#[derive(Debug)]
pub struct SweepPoint {
    pub label: String,
    pub coords: BTreeMap<String, f64>,
    pub config: Result<ExperimentConfig>,
}

/// Relative tolerance for the monotone-decay count.
pub const MONOTONE_TOL: f64 = 1e-12;

/// Summary written next to a simulation's CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimSummary {
    pub config: ExperimentConfig,
    pub mu: f64,
    pub dt: f64,
    pub steps: usize,
    pub initial_energy: f64,
    pub final_energy: f64,
    pub monotonicity_violations: usize,
    pub second_energy_violations: usize,
    pub max_dissipation_residual: f64,
    pub mean_drift_theta: f64,
    pub mean_drift_phit: f64,
    /// `[min, max]` of `K / E` over the samples.
    pub lyapunov_ratio: [f64; 2],
    #[serde(skip_serializing_if = "Option::is_none")]
    pub aborted_at: Option<f64>,
}

impl SimSummary {
    pub fn new(config: &ExperimentConfig, report: &SimReport) -> Self {
        let ratios = report.samples.iter().filter(|s| s.e > 0.0).map(|s| s.k / s.e);
        let lo = ratios.clone().fold(f64::INFINITY, f64::min);
        let hi = ratios.fold(f64::NEG_INFINITY, f64::max);
        Self {
            config: config.clone(),
            mu: report.mu,
            dt: report.dt,
            steps: report.steps,
            initial_energy: report.initial_energy(),
            final_energy: report.final_energy(),
            monotonicity_violations: report.monotonicity_violations(MONOTONE_TOL),
            second_energy_violations: report.second_energy_violations(MONOTONE_TOL),
            max_dissipation_residual: report.max_dissipation_residual(),
            mean_drift_theta: report.mean_drift_theta,
            mean_drift_phit: report.mean_drift_phit,
            lyapunov_ratio: [lo, hi],
            aborted_at: report.aborted_at,
        }
    }
}

/// One entry of a sweep's aggregate report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepEntry {
    pub coords: BTreeMap<String, f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mu: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_dissipation_residual: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fit: Option<FitReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}
