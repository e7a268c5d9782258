use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;
use timo_core::config::{ExperimentConfig, ExperimentKind, SimSummary, SweepEntry};
use timo_core::decay::{Envelope, Family, FitReport};
use timo_core::integrator::{run, SimReport};
use timo_core::resolvent::{resolvent_check, ResolventReport};

use crate::error::{CliError, CliResult};
use crate::series::{artifact, ensure_dir, read_samples, write_json, write_samples};

#[derive(Serialize)]
struct FitOutput<'a> {
    config: &'a ExperimentConfig,
    mu: f64,
    family: Family,
    report: &'a FitReport,
    /// `(t, envelope(t))` at the series times inside the fit window.
    envelope: Vec<[f64; 2]>,
}

#[derive(Serialize)]
struct SweepOutput<'a> {
    config: &'a ExperimentConfig,
    points: BTreeMap<String, SweepEntry>,
}

#[derive(Serialize)]
struct ResolventOutput<'a> {
    config: &'a ExperimentConfig,
    mu: f64,
    report: &'a ResolventReport,
}

fn envelope_curve(env: &Envelope, report: &FitReport, series: &[(f64, f64)]) -> CliResult<Vec<[f64; 2]>> {
    let [lo, hi] = report.window;
    series
        .iter()
        .filter(|(t, _)| *t >= lo && *t <= hi)
        .map(|&(t, _)| Ok([t, env.eval(t)?.value]))
        .collect()
}

fn write_fit(cfg: &ExperimentConfig, dir: &Path, series: &[(f64, f64)]) -> CliResult<FitReport> {
    let (report, env) = cfg.fit(series)?;
    let out = FitOutput {
        config: cfg,
        mu: cfg.mu(),
        family: report.family,
        report: &report,
        envelope: envelope_curve(&env, &report, series)?,
    };
    write_json(&artifact(dir, &cfg.outputs.prefix, "_fit.json"), &out)?;
    Ok(report)
}

fn aborted(rep: &SimReport) -> CliResult<()> {
    match rep.aborted_at {
        Some(t) => Err(timo_core::Error::Numeric(format!("non-finite state at t = {t}")).into()),
        None => Ok(()),
    }
}

/// Runs one simulation and writes `<prefix>.csv` and `<prefix>_summary.json`,
/// plus `<prefix>_fit.json` for decay-envelope experiments.
pub fn simulate(cfg: &ExperimentConfig, dir: &Path) -> CliResult<()> {
    ensure_dir(dir)?;
    let rep = run(&cfg.run_config()?)?;
    write_samples(&artifact(dir, &cfg.outputs.prefix, ".csv"), &rep.samples)?;
    let summary = SimSummary::new(cfg, &rep);
    write_json(&artifact(dir, &cfg.outputs.prefix, "_summary.json"), &summary)?;
    log::info!(
        "mu = {:.3e}, E: {:.6e} -> {:.6e}, {} monotonicity violations",
        summary.mu,
        summary.initial_energy,
        summary.final_energy,
        summary.monotonicity_violations
    );
    aborted(&rep)?;
    if cfg.experiment == ExperimentKind::DecayEnvelope {
        let report = write_fit(cfg, dir, &rep.energy_series())?;
        log::info!("{:?} envelope, domination ratio {:.6}", report.family, report.domination_ratio);
    }
    Ok(())
}

pub fn fit(cfg: &ExperimentConfig, dir: &Path, series: &Path) -> CliResult<()> {
    let samples = read_samples(series)?;
    ensure_dir(dir)?;
    let energy: Vec<(f64, f64)> = samples.iter().map(|s| (s.t, s.e)).collect();
    let report = write_fit(cfg, dir, &energy)?;
    log::info!("{:?} envelope, domination ratio {:.6}", report.family, report.domination_ratio);
    Ok(())
}

fn sweep_point(cfg: timo_core::Result<ExperimentConfig>, dir: &Path) -> CliResult<SweepEntry> {
    let cfg = cfg?.resolve(None)?;
    let rep = run(&cfg.run_config()?)?;
    write_samples(&artifact(dir, &cfg.outputs.prefix, ".csv"), &rep.samples)?;
    aborted(&rep)?;
    let (fit, _) = cfg.fit(&rep.energy_series())?;
    Ok(SweepEntry {
        coords: BTreeMap::new(),
        mu: Some(cfg.mu()),
        max_dissipation_residual: Some(rep.max_dissipation_residual()),
        fit: Some(fit),
        error: None,
    })
}

/// Runs the Cartesian product of the sweep axes on a worker pool; a failing
/// point is recorded in the aggregate and does not stop the others.
pub fn sweep(cfg: &ExperimentConfig, dir: &Path) -> CliResult<()> {
    let points = cfg.sweep_points()?;
    ensure_dir(dir)?;
    let workers = cfg.sweep.as_ref().and_then(|s| s.workers).unwrap_or(0);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| CliError::Usage(format!("cannot start worker pool: {e}")))?;
    let entries: Vec<(String, SweepEntry)> = pool.install(|| {
        points
            .into_par_iter()
            .map(|p| {
                let mut entry = sweep_point(p.config, dir).unwrap_or_else(|e| {
                    log::warn!("sweep point {}: {e}", p.label);
                    SweepEntry {
                        coords: BTreeMap::new(),
                        mu: None,
                        max_dissipation_residual: None,
                        fit: None,
                        error: Some(e.to_string()),
                    }
                });
                entry.coords = p.coords;
                (p.label, entry)
            })
            .collect()
    });
    let failed = entries.iter().filter(|(_, e)| e.error.is_some()).count();
    if failed > 0 {
        log::warn!("{failed} of {} sweep points failed", entries.len());
    }
    let out = SweepOutput {
        config: cfg,
        points: entries.into_iter().collect(),
    };
    write_json(&artifact(dir, &cfg.outputs.prefix, "_sweep.json"), &out)
}

pub fn resolvent(cfg: &ExperimentConfig, dir: &Path) -> CliResult<()> {
    let report = resolvent_check(&cfg.params, &cfg.resolvent, cfg.seed)?;
    ensure_dir(dir)?;
    log::info!(
        "order {:.3}, residual {:.2e}, coercivity {:.4}",
        report.convergence_order,
        report.residual,
        report.coercivity
    );
    let out = ResolventOutput {
        config: cfg,
        mu: cfg.mu(),
        report: &report,
    };
    write_json(&artifact(dir, &cfg.outputs.prefix, "_resolvent.json"), &out)
}
