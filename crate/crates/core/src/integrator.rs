//! Time stepping and the diagnostic run loop.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::diagnostics::{dissipation, energy, lyapunov_parts, second_energy, LyapunovWeights};
use crate::discretization::{damping_rhs, linear_rhs, mean, rhs, Grid, StaggeredState};
use crate::error::{Error, Result, Validator};
use crate::linalg::{BandLu, BandMatrix};
use crate::model::{stability_number, DampingSpec, FourierModes, InitialData, PhysicalParams};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemeKind {
    #[default]
    Rk4,
    ImexMidpoint,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeScheme {
    pub kind: SchemeKind,
    pub dt: f64,
    pub cfl_guard: f64,
}

pub const DEFAULT_CFL_GUARD: f64 = 0.5;

impl TimeScheme {
    /// Largest step the explicit scheme accepts on `grid`.
    pub fn max_dt(grid: &Grid, p: &PhysicalParams, cfl_guard: f64) -> f64 {
        cfl_guard * grid.dx() / p.max_wave_speed()
    }

    pub fn validate(&self, grid: &Grid, p: &PhysicalParams) -> Result<()> {
        let mut v = Validator::new();
        v.positive("dt", self.dt);
        v.positive("cfl_guard", self.cfl_guard);
        if self.kind == SchemeKind::Rk4 {
            let limit = Self::max_dt(grid, p, self.cfl_guard);
            v.check(
                self.dt <= limit * (1.0 + 1e-12),
                "dt",
                format!("violates the CFL bound dt <= {limit:.6e} for rk4"),
            );
        }
        v.finish()
    }
}

/// Everything a single run needs.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub params: PhysicalParams,
    pub damping: DampingSpec,
    pub ic: InitialData,
    pub grid: Grid,
    pub scheme: TimeScheme,
    pub t_final: f64,
    pub stride: usize,
    pub weights: LyapunovWeights,
    pub seed: u64,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        let mut v = Validator::new();
        v.absorb("params", self.params.validate());
        v.absorb("damping", self.damping.validate());
        v.absorb("ic", self.ic.validate());
        v.absorb("weights", self.weights.validate());
        v.check(self.grid.n >= Grid::MIN_CELLS, "grid.N", format!("must be >= {}", Grid::MIN_CELLS));
        v.check(self.t_final >= 0.0 && self.t_final.is_finite(), "time.T", "must be finite and >= 0");
        v.check(self.stride >= 1, "time.stride", "must be >= 1");
        if self.params.validate().is_ok() && self.grid.n >= Grid::MIN_CELLS {
            v.absorb("time", self.scheme.validate(&self.grid, &self.params));
        }
        v.finish()
    }

    /// Number of steps and the step actually taken, `t_final / steps <= dt`.
    pub fn steps(&self) -> (usize, f64) {
        if self.t_final == 0.0 {
            return (0, self.scheme.dt);
        }
        let n = (self.t_final / self.scheme.dt * (1.0 - 1e-12)).ceil().max(1.0) as usize;
        (n, self.t_final / n as f64)
    }

    pub fn initial_modes(&self) -> FourierModes {
        self.ic.realize(self.seed).normalized()
    }

    pub fn initial_state(&self) -> StaggeredState {
        StaggeredState::from_modes(&self.grid, &self.initial_modes())
    }
}

/// Advances states by one step.
pub enum Stepper<'a> {
    Rk4 {
        params: &'a PhysicalParams,
        damping: &'a DampingSpec,
    },
    Imex {
        params: &'a PhysicalParams,
        damping: &'a DampingSpec,
        lu: BandLu,
        grid: Grid,
    },
}

const BAND: usize = 11;

/// `I - (dt/2) L` for the linear part in the interleaved flat layout, with
/// pinned boundary and padding rows kept as identity.
fn midpoint_matrix(grid: &Grid, p: &PhysicalParams, dt: f64) -> BandMatrix {
    let n = grid.n;
    let dim = 6 * (n + 1);
    let pinned = |row: usize| {
        let (j, slot) = (row / 6, row % 6);
        (j == n && slot < 3) || ((j == 0 || j == n) && slot >= 3)
    };
    let mut m = BandMatrix::zeros(dim, BAND, BAND);
    let mut unit = vec![0.0; dim];
    for col in 0..dim {
        unit[col] = 1.0;
        let out = linear_rhs(&StaggeredState::from_flat(grid, &unit, 0.0), p).to_flat();
        unit[col] = 0.0;
        for (row, &v) in out.iter().enumerate() {
            if v != 0.0 && !pinned(row) {
                m.set(row, col, -0.5 * dt * v);
            }
        }
    }
    for i in 0..dim {
        m.set(i, i, 1.0 + m.get(i, i));
    }
    m
}

impl<'a> Stepper<'a> {
    pub fn new(
        kind: SchemeKind,
        grid: &Grid,
        params: &'a PhysicalParams,
        damping: &'a DampingSpec,
        dt: f64,
    ) -> Result<Self> {
        Ok(match kind {
            SchemeKind::Rk4 => Stepper::Rk4 { params, damping },
            SchemeKind::ImexMidpoint => {
                let lu = midpoint_matrix(grid, params, dt)
                    .factor()
                    .map_err(|e| Error::Numeric(format!("midpoint matrix: {e}")))?;
                Stepper::Imex {
                    params,
                    damping,
                    lu,
                    grid: *grid,
                }
            }
        })
    }

    pub fn step(&self, s: &StaggeredState, dt: f64) -> Result<StaggeredState> {
        let t = s.t;
        let mut next = match self {
            Stepper::Rk4 { params, damping } => {
                let k1 = rhs(s, t, params, damping)?;
                let mut y = s.clone();
                y.axpy(0.5 * dt, &k1);
                let k2 = rhs(&y, t + 0.5 * dt, params, damping)?;
                let mut y = s.clone();
                y.axpy(0.5 * dt, &k2);
                let k3 = rhs(&y, t + 0.5 * dt, params, damping)?;
                let mut y = s.clone();
                y.axpy(dt, &k3);
                let k4 = rhs(&y, t + dt, params, damping)?;
                let mut out = s.clone();
                out.axpy(dt / 6.0, &k1);
                out.axpy(dt / 3.0, &k2);
                out.axpy(dt / 3.0, &k3);
                out.axpy(dt / 6.0, &k4);
                out
            }
            Stepper::Imex {
                params,
                damping,
                lu,
                grid,
            } => {
                // midpoint U* from the implicit half step with explicit damping,
                // then the damping force re-evaluated at U*
                let g0 = damping_rhs(s, params, damping, t)?;
                let mut b = s.clone();
                b.psit.iter_mut().zip(&g0).for_each(|(x, g)| *x += 0.5 * dt * g);
                let mid = StaggeredState::from_flat(grid, &lu.solve(&b.to_flat()), t + 0.5 * dt);
                let g1 = damping_rhs(&mid, params, damping, t + 0.5 * dt)?;
                let mut out = mid.clone();
                out.scale(2.0);
                out.axpy(-1.0, s);
                for j in 0..out.psit.len() {
                    out.psit[j] += dt * (g1[j] - g0[j]);
                }
                out
            }
        };
        next.t = t + dt;
        next.pin_boundary();
        Ok(next)
    }
}

/// One sampled row of the diagnostic series.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub t: f64,
    pub e: f64,
    pub e2: f64,
    /// Centered difference of `E`; NaN at the first and last rows.
    pub diss_measured: f64,
    pub diss_predicted: f64,
    pub k: f64,
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
    pub k4: f64,
}

pub const CSV_HEADER: &str = "t,E,E2,diss_measured,diss_predicted,K,K1,K2,K3,K4";

impl Sample {
    pub fn values(&self) -> [f64; 10] {
        [
            self.t,
            self.e,
            self.e2,
            self.diss_measured,
            self.diss_predicted,
            self.k,
            self.k1,
            self.k2,
            self.k3,
            self.k4,
        ]
    }

    pub fn from_values(v: [f64; 10]) -> Self {
        Self {
            t: v[0],
            e: v[1],
            e2: v[2],
            diss_measured: v[3],
            diss_predicted: v[4],
            k: v[5],
            k1: v[6],
            k2: v[7],
            k3: v[8],
            k4: v[9],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimReport {
    pub samples: Vec<Sample>,
    pub mu: f64,
    pub dt: f64,
    pub steps: usize,
    /// Time at which a non-finite field stopped the run.
    pub aborted_at: Option<f64>,
    /// Largest `|mean - initial mean|` of `theta` and `phi_t`, relative to
    /// the initial max-norm of the state.
    pub mean_drift_theta: f64,
    pub mean_drift_phit: f64,
    pub final_state: StaggeredState,
}

impl SimReport {
    pub fn energy_series(&self) -> Vec<(f64, f64)> {
        self.samples.iter().map(|s| (s.t, s.e)).collect()
    }

    pub fn initial_energy(&self) -> f64 {
        self.samples.first().map_or(0.0, |s| s.e)
    }

    pub fn final_energy(&self) -> f64 {
        self.samples.last().map_or(0.0, |s| s.e)
    }

    /// Steps where `E` grew by more than `rel_tol E(0)`.
    pub fn monotonicity_violations(&self, rel_tol: f64) -> usize {
        count_increases(self.samples.iter().map(|s| s.e), rel_tol * self.initial_energy())
    }

    /// Same count for the second-order energy.
    pub fn second_energy_violations(&self, rel_tol: f64) -> usize {
        let e2_0 = self.samples.first().map_or(0.0, |s| s.e2);
        count_increases(self.samples.iter().map(|s| s.e2), rel_tol * e2_0)
    }

    /// `max |diss_measured - diss_predicted|` over interior rows.
    pub fn max_dissipation_residual(&self) -> f64 {
        self.samples
            .iter()
            .filter(|s| s.diss_measured.is_finite())
            .map(|s| (s.diss_measured - s.diss_predicted).abs())
            .fold(0.0, f64::max)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> std::io::Result<()> {
        write_csv(&self.samples, w)
    }
}

fn count_increases(values: impl Iterator<Item = f64>, tol: f64) -> usize {
    let v: Vec<f64> = values.collect();
    v.windows(2).filter(|w| w[1] > w[0] + tol).count()
}

fn format_value(x: f64) -> String {
    if x.is_nan() {
        "NaN".to_string()
    } else {
        format!("{x:.16e}")
    }
}

/// Writes the fixed-header CSV with 17 significant digits per value.
pub fn write_csv<W: Write>(samples: &[Sample], mut w: W) -> std::io::Result<()> {
    writeln!(w, "{CSV_HEADER}")?;
    for s in samples {
        let line: Vec<String> = s.values().iter().map(|&x| format_value(x)).collect();
        writeln!(w, "{}", line.join(","))?;
    }
    w.flush()
}

fn sample(cfg: &RunConfig, s: &StaggeredState) -> Result<Sample> {
    let parts = lyapunov_parts(s, &cfg.params, &cfg.weights);
    Ok(Sample {
        t: s.t,
        e: energy(s, &cfg.params),
        e2: second_energy(s, &cfg.params, &cfg.damping, s.t)?,
        diss_measured: f64::NAN,
        diss_predicted: dissipation(s, &cfg.params, &cfg.damping, s.t)?,
        k: parts.k,
        k1: parts.k1,
        k2: parts.k2,
        k3: parts.k3,
        k4: parts.k4,
    })
}

/// Integrates to `t_final`, sampling every `stride` steps (and at the end).
pub fn run(cfg: &RunConfig) -> Result<SimReport> {
    cfg.validate()?;
    let (steps, dt) = cfg.steps();
    let stepper = Stepper::new(cfg.scheme.kind, &cfg.grid, &cfg.params, &cfg.damping, dt)?;
    let mut state = cfg.initial_state();
    let scale = state.max_abs().max(f64::MIN_POSITIVE);
    let theta0 = mean(&state.theta);
    let phit0 = mean(&state.phit);
    let (mut drift_theta, mut drift_phit): (f64, f64) = (0.0, 0.0);
    let mut samples = vec![sample(cfg, &state)?];
    let mut aborted_at = None;
    for n in 1..=steps {
        let next = stepper.step(&state, dt)?;
        // fix the clock to the grid so repeated additions do not drift
        let t = if n == steps { cfg.t_final } else { n as f64 * dt };
        if !next.is_finite() {
            log::warn!("non-finite field at t = {t}; stopping");
            aborted_at = Some(t);
            break;
        }
        state = next;
        state.t = t;
        drift_theta = drift_theta.max((mean(&state.theta) - theta0).abs() / scale);
        drift_phit = drift_phit.max((mean(&state.phit) - phit0).abs() / scale);
        if n % cfg.stride == 0 || n == steps {
            samples.push(sample(cfg, &state)?);
        }
    }
    for i in 1..samples.len().saturating_sub(1) {
        let (a, b) = (samples[i - 1], samples[i + 1]);
        samples[i].diss_measured = (b.e - a.e) / (b.t - a.t);
    }
    Ok(SimReport {
        samples,
        mu: stability_number(&cfg.params),
        dt,
        steps,
        aborted_at,
        mean_drift_theta: drift_theta,
        mean_drift_phit: drift_phit,
        final_state: state,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{AlphaKind, HKind};

    fn mu0() -> PhysicalParams {
        PhysicalParams {
            rho2: 3.0,
            tau: 2.0,
            ..PhysicalParams::ones()
        }
    }

    fn base(kind: SchemeKind) -> RunConfig {
        let grid = Grid::new(32).unwrap();
        let params = mu0();
        RunConfig {
            params,
            damping: DampingSpec::linear(1.0, 1.0),
            ic: InitialData::Random {
                modes: 4,
                amplitude: 0.5,
                seed: None,
            },
            grid,
            scheme: TimeScheme {
                kind,
                dt: TimeScheme::max_dt(&grid, &params, 0.5),
                cfl_guard: 0.5,
            },
            t_final: 2.0,
            stride: 4,
            weights: LyapunovWeights::default(),
            seed: 3,
        }
    }

    #[test]
    fn cfl_violation_rejected() {
        let mut cfg = base(SchemeKind::Rk4);
        cfg.scheme.dt *= 2.0;
        let err = run(&cfg).unwrap_err();
        assert_eq!(err.paths(), vec!["time.dt"]);
        cfg.scheme.kind = SchemeKind::ImexMidpoint;
        run(&cfg).unwrap();
    }

    #[test]
    fn zero_state_fixed_point() {
        let cfg = base(SchemeKind::Rk4);
        let z = StaggeredState::zeros(&cfg.grid);
        for kind in [SchemeKind::Rk4, SchemeKind::ImexMidpoint] {
            let st = Stepper::new(kind, &cfg.grid, &cfg.params, &cfg.damping, 0.01).unwrap();
            assert_eq!(st.step(&z, 0.01).unwrap().max_abs(), 0.0);
        }
    }

    #[test]
    fn empty_run_has_one_sample() {
        let mut cfg = base(SchemeKind::Rk4);
        cfg.t_final = 0.0;
        let rep = run(&cfg).unwrap();
        assert_eq!(rep.samples.len(), 1);
        assert!(rep.samples[0].diss_measured.is_nan());
    }

    #[test]
    fn one_step_keeps_mean() {
        let cfg = base(SchemeKind::Rk4);
        let mut s = cfg.initial_state();
        s.theta.iter_mut().for_each(|x| *x += 0.7);
        for kind in [SchemeKind::Rk4, SchemeKind::ImexMidpoint] {
            let st = Stepper::new(kind, &cfg.grid, &cfg.params, &cfg.damping, cfg.scheme.dt).unwrap();
            let next = st.step(&s, cfg.scheme.dt).unwrap();
            assert!((mean(&next.theta) - mean(&s.theta)).abs() <= 1e-12 * 0.7);
        }
    }

    #[test]
    fn rk4_energy_defect_is_fifth_order() {
        // undamped mechanics only: energy is exactly conserved by the flow
        let params = PhysicalParams { delta: 1e-300, beta: 1e-300, ..mu0() };
        let grid = Grid::new(16).unwrap();
        let damping = DampingSpec::linear(1e-300, 1.0);
        let mut s = StaggeredState::zeros(&grid);
        for (j, x) in grid.nodes().enumerate() {
            s.psi[j] = (std::f64::consts::PI * x).sin();
        }
        s.pin_boundary();
        let st = Stepper::new(SchemeKind::Rk4, &grid, &params, &damping, 0.0).unwrap();
        let e0 = energy(&s, &params);
        let defect = |dt: f64| (energy(&st.step(&s, dt).unwrap(), &params) - e0).abs();
        let (d1, d2) = (defect(0.02), defect(0.01));
        // RK4 damps oscillations with a dt^6 energy error, at least order 5
        assert!(d1 / d2 > 2f64.powf(4.8), "{d1} {d2}");
    }

    #[test]
    fn rk4_fourth_order_convergence() {
        let mut cfg = base(SchemeKind::Rk4);
        cfg.damping = DampingSpec::new(AlphaKind::Constant { a: 1.0 }, HKind::Power { c: 1.0, p: 3.0 });
        let err = |f: f64| {
            let mut c = cfg.clone();
            c.scheme.dt = cfg.scheme.dt * f;
            let coarse = run(&c).unwrap().final_state;
            c.scheme.dt *= 0.5;
            let mut d = run(&c).unwrap().final_state;
            d.axpy(-1.0, &coarse);
            d.max_abs()
        };
        let ratio = err(1.0) / err(0.5);
        assert!(ratio > 12.0 && ratio < 20.0, "{ratio}");
    }

    #[test]
    fn imex_is_second_order() {
        let mut cfg = base(SchemeKind::ImexMidpoint);
        cfg.damping = DampingSpec::new(AlphaKind::Reciprocal { a: 1.0 }, HKind::Power { c: 1.0, p: 3.0 });
        let reference = {
            let mut c = cfg.clone();
            c.scheme.kind = SchemeKind::Rk4;
            c.scheme.dt /= 8.0;
            run(&c).unwrap().final_energy()
        };
        let err = |dt: f64| {
            let mut c = cfg.clone();
            c.scheme.dt = dt;
            (run(&c).unwrap().final_energy() - reference).abs()
        };
        let (a, b) = (err(cfg.scheme.dt), err(cfg.scheme.dt / 2.0));
        assert!(a / b > 3.5, "{a} {b}");
    }

    #[test]
    fn imex_energy_monotone_for_linear_part() {
        let mut cfg = base(SchemeKind::ImexMidpoint);
        cfg.scheme.dt *= 4.0;
        cfg.damping = DampingSpec::linear(1e-300, 1.0);
        cfg.stride = 1;
        let rep = run(&cfg).unwrap();
        assert_eq!(rep.monotonicity_violations(1e-14), 0);
    }

    #[test]
    fn deterministic() {
        let cfg = base(SchemeKind::Rk4);
        let (a, b) = (run(&cfg).unwrap(), run(&cfg).unwrap());
        let (mut x, mut y) = (Vec::new(), Vec::new());
        a.write_csv(&mut x).unwrap();
        b.write_csv(&mut y).unwrap();
        assert_eq!(x, y);
    }

    #[test]
    fn csv_layout() {
        let mut cfg = base(SchemeKind::Rk4);
        cfg.t_final = 0.0;
        let mut buf = Vec::new();
        run(&cfg).unwrap().write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), CSV_HEADER);
        let row: Vec<&str> = lines.next().unwrap().split(',').collect();
        assert_eq!(row.len(), 10);
        assert_eq!(row[3], "NaN");
        // 17 significant digits
        assert_eq!(row[1].split('e').next().unwrap().replace(['.', '-'], "").len(), 17);
    }

    #[test]
    fn nonfinite_aborts() {
        let mut cfg = base(SchemeKind::Rk4);
        // explicit treatment of a very stiff damping term blows up
        cfg.scheme.kind = SchemeKind::ImexMidpoint;
        cfg.damping = DampingSpec::linear(1e12, 1.0);
        cfg.scheme.dt = 0.05;
        let rep = run(&cfg).unwrap();
        assert!(rep.aborted_at.is_some());
    }
}
