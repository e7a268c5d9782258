//! Physical coefficients, damping laws and initial data for the
//! Timoshenko beam coupled to Cattaneo (second-sound) heat conduction:
//!
//! ```text
//! rho1 phi_tt - k (phi_x + psi)_x                                 = 0
//! rho2 psi_tt - b psi_xx + k (phi_x + psi) + delta theta_x + a(t) h(psi_t) = 0
//! rho3 theta_t + q_x + delta psi_xt                               = 0
//! tau q_t + beta q + theta_x                                      = 0
//! ```
//!
//! on (0, 1) with `phi_x = psi = q = 0` at both ends.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, Validator, Violation};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhysicalParams {
    pub rho1: f64,
    pub rho2: f64,
    pub rho3: f64,
    pub b: f64,
    pub k: f64,
    pub delta: f64,
    pub beta: f64,
    pub tau: f64,
}

impl PhysicalParams {
    pub fn ones() -> Self {
        Self {
            rho1: 1.0,
            rho2: 1.0,
            rho3: 1.0,
            b: 1.0,
            k: 1.0,
            delta: 1.0,
            beta: 1.0,
            tau: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut v = Validator::new();
        for (name, value) in self.named() {
            v.positive(name, value);
        }
        v.finish()
    }

    fn named(&self) -> [(&'static str, f64); 8] {
        [
            ("rho1", self.rho1),
            ("rho2", self.rho2),
            ("rho3", self.rho3),
            ("b", self.b),
            ("k", self.k),
            ("delta", self.delta),
            ("beta", self.beta),
            ("tau", self.tau),
        ]
    }

    /// Largest of the three uncoupled characteristic speeds.
    pub fn max_wave_speed(&self) -> f64 {
        (self.k / self.rho1)
            .sqrt()
            .max((self.b / self.rho2).sqrt())
            .max((1.0 / (self.tau * self.rho3)).sqrt())
    }
}

/// The stability number that separates the exponentially decaying regime
/// (`mu == 0`) from the weakly dissipative one.
pub fn stability_number(p: &PhysicalParams) -> f64 {
    (p.tau - p.rho1 / (p.k * p.rho3)) * (p.rho2 / p.b - p.rho1 / p.k)
        - p.tau * p.delta * p.delta * p.rho1 / (p.b * p.k * p.rho3)
}

/// Time weight in front of the frictional damping.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum AlphaKind {
    Constant { a: f64 },
    /// `a / (1 + t)`
    Reciprocal { a: f64 },
}

impl AlphaKind {
    pub fn value(&self, t: f64) -> f64 {
        debug_assert!(t >= 0.0);
        match *self {
            AlphaKind::Constant { a } => a,
            AlphaKind::Reciprocal { a } => a / (1.0 + t),
        }
    }

    /// `int_0^t alpha(s) ds`
    pub fn integral(&self, t: f64) -> f64 {
        match *self {
            AlphaKind::Constant { a } => a * t,
            AlphaKind::Reciprocal { a } => a * t.ln_1p(),
        }
    }

    fn validate(&self) -> Result<()> {
        let mut v = Validator::new();
        match *self {
            AlphaKind::Constant { a } | AlphaKind::Reciprocal { a } => v.positive("a", a),
        }
        v.finish()
    }
}

/// Piecewise-linear table of `h` on `[0, s_max]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub points: Vec<[f64; 2]>,
}

impl Table {
    pub fn s_max(&self) -> f64 {
        self.points.last().map_or(0.0, |p| p[0])
    }

    pub fn eval(&self, s: f64) -> Result<f64> {
        let pts = &self.points;
        if !(s >= 0.0 && s <= self.s_max()) {
            return Err(Error::Domain(format!(
                "tabulated damping evaluated at |s| = {s}, outside [0, {}]",
                self.s_max()
            )));
        }
        let i = pts.partition_point(|p| p[0] <= s).clamp(1, pts.len() - 1);
        let [s0, h0] = pts[i - 1];
        let [s1, h1] = pts[i];
        Ok(h0 + (h1 - h0) * (s - s0) / (s1 - s0))
    }

    /// Slope of the linear interpolant at `s` (right-sided at knots).
    pub fn slope(&self, s: f64) -> Result<f64> {
        self.eval(s)?;
        let pts = &self.points;
        let i = pts.partition_point(|p| p[0] <= s).clamp(1, pts.len() - 1);
        Ok((pts[i][1] - pts[i - 1][1]) / (pts[i][0] - pts[i - 1][0]))
    }

    fn validate(&self) -> Result<()> {
        let mut v = Validator::new();
        let pts = &self.points;
        v.check(pts.len() >= 2, "points", "need at least two points");
        if let Some(first) = pts.first() {
            v.check(
                first[0] == 0.0 && first[1] == 0.0,
                "points",
                "table must start at (0, 0)",
            );
        }
        for w in pts.windows(2) {
            if !(w[1][0] > w[0][0]) {
                v.push("points", "abscissae must be strictly increasing");
                break;
            }
            if !(w[1][1] > w[0][1]) {
                v.push("points", "values must be strictly increasing");
                break;
            }
        }
        if pts.iter().flatten().any(|x| !x.is_finite()) {
            v.push("points", "non-finite entry");
        }
        v.finish()
    }
}

/// Catalog of damping nonlinearities, given on `[0, inf)` and extended oddly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum HKind {
    Linear { c: f64 },
    Power { c: f64, p: f64 },
    /// `exp(-1/s)`
    ExpInv,
    /// `exp(-1/s^2) / s`
    ExpInvSq,
    /// `exp(-(ln s)^2 / 4) / s`
    LogSq,
    CustomTabulated { points: Vec<[f64; 2]> },
}

/// The comparison function `h0` sandwiching `h` near zero.
#[derive(Debug, Clone, PartialEq)]
pub enum Comparison {
    /// `c s^p`
    Power { c: f64, p: f64 },
    ExpInv,
    ExpInvSq,
    LogSq,
    Tabulated(Table),
}

impl Comparison {
    /// `h0(s)` for `s >= 0`.
    pub fn eval_nonneg(&self, s: f64) -> Result<f64> {
        debug_assert!(s >= 0.0);
        Ok(match self {
            Comparison::Power { c, p } => c * s.powf(*p),
            Comparison::ExpInv => {
                if s == 0.0 {
                    0.0
                } else {
                    (-1.0 / s).exp()
                }
            }
            Comparison::ExpInvSq => {
                if s == 0.0 {
                    0.0
                } else {
                    (-1.0 / (s * s)).exp() / s
                }
            }
            Comparison::LogSq => {
                if s == 0.0 {
                    0.0
                } else {
                    let l = s.ln();
                    (-0.25 * l * l - l).exp()
                }
            }
            Comparison::Tabulated(t) => t.eval(s)?,
        })
    }

    /// Odd extension of `h0` to the whole line.
    pub fn eval(&self, s: f64) -> Result<f64> {
        Ok(s.signum() * self.eval_nonneg(s.abs())?)
    }

    pub fn is_linear(&self) -> bool {
        matches!(self, Comparison::Power { p, .. } if *p == 1.0)
    }
}

/// `alpha(t) h(s)` with the constants of the growth hypotheses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "RawDamping")]
pub struct DampingSpec {
    pub alpha: AlphaKind,
    pub h: HKind,
    /// Lower linear growth bound for `|s| >= epsilon`.
    pub c1: f64,
    /// Upper linear growth bound for `|s| >= epsilon`.
    pub c2: f64,
    /// Crossover between the `h0` regime and the linear regime.
    pub epsilon: f64,
    /// Convexity radius: `H` is strictly convex on `(0, r^2]`.
    pub r: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDamping {
    alpha: AlphaKind,
    h: HKind,
    c1: Option<f64>,
    c2: Option<f64>,
    epsilon: Option<f64>,
    r: Option<f64>,
}

impl From<RawDamping> for DampingSpec {
    fn from(raw: RawDamping) -> Self {
        let mut spec = DampingSpec::new(raw.alpha, raw.h);
        if let Some(e) = raw.epsilon {
            spec.epsilon = e;
            let (c1, c2) = spec.catalog_growth_bounds();
            spec.c1 = c1;
            spec.c2 = c2;
        }
        if let Some(c1) = raw.c1 {
            spec.c1 = c1;
        }
        if let Some(c2) = raw.c2 {
            spec.c2 = c2;
        }
        if let Some(r) = raw.r {
            spec.r = r;
        }
        spec
    }
}

/// `h0(s) <= s` holds for `s <= e^{-8}` and is an equality there.
const LOG_SQ_EPSILON: f64 = 3.354_626_279_025_119e-4;

impl DampingSpec {
    /// Catalog member with its default constants.
    pub fn new(alpha: AlphaKind, h: HKind) -> Self {
        let (epsilon, r) = match &h {
            HKind::Linear { .. } | HKind::Power { .. } => (1.0, 1.0),
            HKind::ExpInv => (1.0, 0.6),
            HKind::ExpInvSq => (1.0, 0.7),
            HKind::LogSq => (LOG_SQ_EPSILON, 0.0115),
            HKind::CustomTabulated { points } => {
                let s_max = points.last().map_or(1.0, |p| p[0]);
                (s_max, s_max)
            }
        };
        let mut spec = Self {
            alpha,
            h,
            c1: 0.0,
            c2: 0.0,
            epsilon,
            r,
        };
        let (c1, c2) = spec.catalog_growth_bounds();
        spec.c1 = c1;
        spec.c2 = c2;
        spec
    }

    pub fn linear(a: f64, c: f64) -> Self {
        Self::new(AlphaKind::Constant { a }, HKind::Linear { c })
    }

    /// Growth constants implied by the linear continuation past `epsilon`.
    fn catalog_growth_bounds(&self) -> (f64, f64) {
        match &self.h {
            HKind::Linear { c } => (*c, *c),
            _ => match self.core(self.epsilon) {
                Ok(v) if self.epsilon > 0.0 => (v / self.epsilon, v / self.epsilon),
                _ => (0.0, 0.0),
            },
        }
    }

    /// The catalog formula on `[0, inf)` without continuation.
    fn core(&self, s: f64) -> Result<f64> {
        match &self.h {
            HKind::Linear { c } => Ok(c * s),
            HKind::Power { c, p } => Ok(c * s.powf(*p)),
            HKind::ExpInv => Comparison::ExpInv.eval_nonneg(s),
            HKind::ExpInvSq => Comparison::ExpInvSq.eval_nonneg(s),
            HKind::LogSq => Comparison::LogSq.eval_nonneg(s),
            HKind::CustomTabulated { points } => Table {
                points: points.clone(),
            }
            .eval(s),
        }
    }

    /// `h(s)`: the catalog law up to `epsilon`, continued linearly beyond it
    /// (tables are not continued), extended oddly to negative `s`.
    pub fn h_value(&self, s: f64) -> Result<f64> {
        let a = s.abs();
        let mag = match &self.h {
            HKind::Linear { c } => c * a,
            HKind::CustomTabulated { .. } => self.core(a)?,
            _ if a <= self.epsilon => self.core(a)?,
            _ => self.core(self.epsilon)? * a / self.epsilon,
        };
        Ok(s.signum() * mag)
    }

    /// `h'(s)`, used by the second-order energy balance.
    pub fn h_slope(&self, s: f64) -> Result<f64> {
        let a = s.abs();
        Ok(match &self.h {
            HKind::Linear { c } => *c,
            HKind::CustomTabulated { points } => Table {
                points: points.clone(),
            }
            .slope(a)?,
            _ if a > self.epsilon => self.core(self.epsilon)? / self.epsilon,
            HKind::Power { c, p } => c * p * a.powf(p - 1.0),
            _ => {
                let step = 1e-6 * a.max(1e-8);
                let lo = (a - step).max(0.0);
                (self.core(a + step)? - self.core(lo)?) / (a + step - lo)
            }
        })
    }

    pub fn alpha_value(&self, t: f64) -> f64 {
        self.alpha.value(t)
    }

    /// Comparison function `h0` paired with this damping law.
    pub fn comparison(&self) -> Comparison {
        match &self.h {
            HKind::Linear { c } => Comparison::Power {
                c: c.min(1.0 / c),
                p: 1.0,
            },
            HKind::Power { c, p } => Comparison::Power {
                c: c.min(c.powf(-p)),
                p: *p,
            },
            HKind::ExpInv => Comparison::ExpInv,
            HKind::ExpInvSq => Comparison::ExpInvSq,
            HKind::LogSq => Comparison::LogSq,
            HKind::CustomTabulated { points } => Comparison::Tabulated(Table {
                points: points.clone(),
            }),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut v = Validator::new();
        v.absorb("alpha", self.alpha.validate());
        match &self.h {
            HKind::Linear { c } => v.positive("h.c", *c),
            HKind::Power { c, p } => {
                v.positive("h.c", *c);
                v.check(p.is_finite() && *p >= 1.0, "h.p", "must be >= 1");
            }
            HKind::CustomTabulated { points } => v.absorb(
                "h",
                Table {
                    points: points.clone(),
                }
                .validate(),
            ),
            _ => {}
        }
        v.positive("c1", self.c1);
        v.positive("c2", self.c2);
        v.positive("epsilon", self.epsilon);
        v.positive("r", self.r);
        v.check(self.c1 <= self.c2, "c2", "must be >= c1");
        let shaped = v.finish();
        shaped?;
        let violations = self.check_hypotheses(400);
        if violations.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(violations))
        }
    }

    /// Samples the growth hypotheses on `h` and `h0`; returns the failures.
    pub fn check_hypotheses(&self, samples: usize) -> Vec<Violation> {
        let mut out = Vec::new();
        let h0 = self.comparison();
        let eps = self.epsilon;
        let s_hi = match &self.h {
            HKind::CustomTabulated { points } => points.last().map_or(eps, |p| p[0]),
            _ => 100.0 * eps.max(1.0),
        };
        let rel = 1e-12;
        let mut prev = f64::NEG_INFINITY;
        for i in 0..=samples {
            let frac = i as f64 / samples as f64;
            // near-zero region on a geometric grid, linear region beyond
            let small = eps * (1e-6f64).powf(1.0 - frac);
            let large = eps + (s_hi - eps) * frac;
            for s in [small, large, 0.0] {
                if s > s_hi {
                    continue;
                }
                let Ok(h) = self.h_value(s) else {
                    out.push(Violation::new("h", format!("evaluation failed at s = {s}")));
                    return out;
                };
                if s == 0.0 {
                    if h != 0.0 {
                        out.push(Violation::new("h", "h(0) must vanish"));
                    }
                    continue;
                }
                let h_neg = self.h_value(-s).unwrap_or(f64::NAN);
                if h_neg != -h {
                    out.push(Violation::new("h", format!("not odd at s = {s}")));
                }
                if s <= eps {
                    let lower = h0.eval_nonneg(s).unwrap_or(f64::NAN);
                    // |h| <= h0^{-1}(|s|)  <=>  h0(|h|) <= |s|
                    let upper_check = h0.eval_nonneg(h.abs()).unwrap_or(f64::NAN);
                    if !(lower <= h.abs() * (1.0 + rel)) || !(upper_check <= s * (1.0 + rel)) {
                        out.push(Violation::new(
                            "h",
                            format!("h0(|s|) <= |h(s)| <= h0^-1(|s|) fails at s = {s:e}"),
                        ));
                    }
                } else if !(self.c1 * s <= h.abs() * (1.0 + rel) && h.abs() <= self.c2 * s * (1.0 + rel)) {
                    out.push(Violation::new(
                        "h",
                        format!("c1|s| <= |h(s)| <= c2|s| fails at s = {s:e}"),
                    ));
                }
            }
            if out.len() > 4 {
                break;
            }
            let _ = prev;
            prev = frac;
        }
        // monotonicity along a joint sorted grid
        let mut grid: Vec<f64> = (0..=samples)
            .flat_map(|i| {
                let frac = i as f64 / samples as f64;
                [eps * (1e-6f64).powf(1.0 - frac), eps + (s_hi - eps) * frac]
            })
            .filter(|s| *s <= s_hi)
            .collect();
        grid.sort_by(f64::total_cmp);
        let mut last = 0.0;
        for s in grid {
            if let Ok(h) = self.h_value(s) {
                if h < last {
                    out.push(Violation::new("h", format!("decreasing near s = {s:e}")));
                    break;
                }
                last = h;
            }
        }
        let mut last0 = 0.0;
        for i in 1..=samples {
            let s = eps * i as f64 / samples as f64;
            if let Ok(v) = h0.eval_nonneg(s) {
                // closed forms like exp(-1/s^2) underflow to 0 near the origin
                let underflow = v == 0.0 && !matches!(h0, Comparison::Tabulated(_));
                if !(v > last0) && !underflow {
                    out.push(Violation::new(
                        "epsilon",
                        format!("h0 not strictly increasing on (0, epsilon] near s = {s:e}"),
                    ));
                    break;
                }
                last0 = v;
            }
        }
        out
    }
}

/// Truncated Fourier representation of the six initial fields.
///
/// Cosine series (`phi0`, `phi1`, `theta0`) satisfy the Neumann conditions of
/// `phi`; sine series (`psi0`, `psi1`, `q0`) vanish at both ends. Mode 0 is a
/// constant offset and is what normalization removes.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FourierModes {
    pub phi0: Vec<(u32, f64)>,
    pub phi1: Vec<(u32, f64)>,
    pub psi0: Vec<(u32, f64)>,
    pub psi1: Vec<(u32, f64)>,
    pub theta0: Vec<(u32, f64)>,
    pub q0: Vec<(u32, f64)>,
}

pub fn cos_series(modes: &[(u32, f64)], x: f64) -> f64 {
    modes
        .iter()
        .map(|&(m, a)| a * (m as f64 * PI * x).cos())
        .sum()
}

pub fn sin_series(modes: &[(u32, f64)], x: f64) -> f64 {
    modes
        .iter()
        .map(|&(m, a)| a * (m as f64 * PI * x).sin())
        .sum()
}

impl FourierModes {
    /// Removes the constant modes of `phi0`, `phi1` and `theta0`.
    pub fn normalized(&self) -> Self {
        let strip = |v: &[(u32, f64)]| v.iter().copied().filter(|&(m, _)| m != 0).collect();
        Self {
            phi0: strip(&self.phi0),
            phi1: strip(&self.phi1),
            theta0: strip(&self.theta0),
            ..self.clone()
        }
    }

    /// Spatial mean of each cosine field (`phi0`, `phi1`, `theta0`).
    pub fn means(&self) -> [f64; 3] {
        let mean = |v: &[(u32, f64)]| v.iter().filter(|(m, _)| *m == 0).map(|(_, a)| a).sum();
        [mean(&self.phi0), mean(&self.phi1), mean(&self.theta0)]
    }

    fn validate(&self) -> Result<()> {
        let mut v = Validator::new();
        let all = [
            ("phi0", &self.phi0),
            ("phi1", &self.phi1),
            ("psi0", &self.psi0),
            ("psi1", &self.psi1),
            ("theta0", &self.theta0),
            ("q0", &self.q0),
        ];
        for (name, modes) in all {
            for (m, a) in modes.iter() {
                v.check(a.is_finite(), name, "non-finite amplitude");
                if name.starts_with("psi") || name == "q0" {
                    v.check(*m >= 1, name, "sine modes start at m = 1");
                }
                v.check(*m <= 4096, name, format!("mode {m} too large"));
            }
        }
        v.finish()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialData {
    Fourier(FourierModes),
    /// Random smooth data: amplitudes decay like `1/m^2` over `modes` modes.
    Random {
        modes: u32,
        amplitude: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
    },
}

impl InitialData {
    /// Resolves random data into explicit modes; `fallback_seed` is used when
    /// the data carries no seed of its own.
    pub fn realize(&self, fallback_seed: u64) -> FourierModes {
        match self {
            InitialData::Fourier(f) => f.clone(),
            InitialData::Random {
                modes,
                amplitude,
                seed,
            } => random_modes(*modes, *amplitude, seed.unwrap_or(fallback_seed)),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            InitialData::Fourier(f) => f.validate(),
            InitialData::Random {
                modes, amplitude, ..
            } => {
                let mut v = Validator::new();
                v.check(*modes >= 1 && *modes <= 4096, "modes", "must be in 1..=4096");
                v.check(amplitude.is_finite() && *amplitude >= 0.0, "amplitude", "must be >= 0");
                v.finish()
            }
        }
    }
}

/// Projects arbitrary data onto the admissible set: drops the means of
/// `phi0`, `phi1`, `theta0`. Random data are realized with `seed` first.
pub fn normalize_initial_data(data: &InitialData, seed: u64) -> InitialData {
    InitialData::Fourier(data.realize(seed).normalized())
}

/// Random admissible modes. Cosine fields get a random constant too, so the
/// projection step is exercised; callers normalize afterwards.
pub fn random_modes(modes: u32, amplitude: f64, seed: u64) -> FourierModes {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cos_field = |rng: &mut ChaCha8Rng| -> Vec<(u32, f64)> {
        (0..=modes)
            .map(|m| {
                let scale = amplitude / (m.max(1) as f64).powi(2);
                (m, scale * rng.random_range(-1.0..1.0))
            })
            .collect()
    };
    let phi0 = cos_field(&mut rng);
    let phi1 = cos_field(&mut rng);
    let theta0 = cos_field(&mut rng);
    let sin_field = |rng: &mut ChaCha8Rng| -> Vec<(u32, f64)> {
        (1..=modes)
            .map(|m| {
                let scale = amplitude / (m as f64).powi(2);
                (m, scale * rng.random_range(-1.0..1.0))
            })
            .collect()
    };
    FourierModes {
        phi0,
        phi1,
        psi0: sin_field(&mut rng),
        psi1: sin_field(&mut rng),
        theta0,
        q0: sin_field(&mut rng),
    }
}
