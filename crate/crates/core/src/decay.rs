//! Decay-rate calculus built from the comparison function `h0`:
//!
//! ```text
//! H(x)   = sqrt(x) h0(sqrt(x))          on [0, r^2]
//! H2(t)  = t H'(eps0 t)                 on (0, 1]
//! H1(t)  = int_t^1 ds / H2(s)
//! H*(s)  = s (H')^{-1}(s) - H((H')^{-1}(s))
//! ```
//!
//! together with the two energy envelopes
//! `k3 H1^{-1}(k1 (A(t) - A(t0)) + k2)` and `scale H2^{-1}(c / t)`,
//! where `A` is the primitive of the damping weight, and their calibration
//! against simulated energy series.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{AlphaKind, Comparison, DampingSpec};
use crate::quad::integrate;

/// Smallest argument `H1^{-1}` resolves numerically.
pub const T_MIN: f64 = 1e-12;
const MAX_BISECTIONS: usize = 200;

/// Result of an inversion that may have been clamped to its search range.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Inverse {
    pub value: f64,
    pub saturated: bool,
}

impl Inverse {
    fn exact(value: f64) -> Self {
        Self {
            value,
            saturated: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecayProfile {
    pub h0: Comparison,
    pub eps0: f64,
    pub r: f64,
    /// Use hand-derived formulas where the catalog has them (power laws);
    /// otherwise quadrature and bisection.
    pub closed_form: bool,
}

impl DecayProfile {
    /// `eps0` defaults to `r^2 / 2`.
    pub fn new(h0: Comparison, r: f64, eps0: Option<f64>) -> Result<Self> {
        let eps0 = eps0.unwrap_or(0.5 * r * r);
        if !(r > 0.0 && r.is_finite()) {
            return Err(Error::invalid("r", "must be finite and > 0"));
        }
        if !(eps0 > 0.0 && eps0 < r * r) {
            return Err(Error::invalid("eps0", format!("must lie in (0, r^2) = (0, {})", r * r)));
        }
        let profile = Self {
            closed_form: matches!(h0, Comparison::Power { .. }),
            h0,
            eps0,
            r,
        };
        profile.check_shape(400)?;
        Ok(profile)
    }

    pub fn from_damping(spec: &DampingSpec, eps0: Option<f64>) -> Result<Self> {
        Self::new(spec.comparison(), spec.r, eps0)
    }

    /// Same profile with every quantity computed numerically.
    pub fn numeric(mut self) -> Self {
        self.closed_form = false;
        self
    }

    pub fn x_max(&self) -> f64 {
        self.r * self.r
    }

    /// `(kappa, q)` with `H2(t) = kappa t^q` for power comparisons.
    pub fn power_constants(&self) -> Option<(f64, f64)> {
        match self.h0 {
            Comparison::Power { c, p } => {
                let q = 0.5 * (p + 1.0);
                Some((c * q * self.eps0.powf(q - 1.0), q))
            }
            _ => None,
        }
    }

    fn check_domain(&self, x: f64) -> Result<()> {
        if x >= 0.0 && x <= self.x_max() * (1.0 + 1e-12) {
            Ok(())
        } else {
            Err(Error::Domain(format!("H evaluated at {x}, outside [0, {}]", self.x_max())))
        }
    }

    pub fn h(&self, x: f64) -> Result<f64> {
        self.check_domain(x)?;
        let u = x.sqrt();
        Ok(match &self.h0 {
            Comparison::Power { c, p } => c * x.powf(0.5 * (p + 1.0)),
            Comparison::ExpInvSq => {
                if x == 0.0 {
                    0.0
                } else {
                    (-1.0 / x).exp()
                }
            }
            Comparison::LogSq => {
                if x == 0.0 {
                    0.0
                } else {
                    let l = x.ln();
                    (-l * l / 16.0).exp()
                }
            }
            other => u * other.eval_nonneg(u)?,
        })
    }

    pub fn h_prime(&self, x: f64) -> Result<f64> {
        self.check_domain(x)?;
        if x == 0.0 {
            return Ok(match self.h0 {
                Comparison::Power { c, p } if p == 1.0 => c,
                Comparison::Power { .. } | Comparison::ExpInv | Comparison::ExpInvSq | Comparison::LogSq => 0.0,
                Comparison::Tabulated(ref t) => t.slope(0.0)?,
            });
        }
        Ok(match &self.h0 {
            Comparison::Power { c, p } => c * 0.5 * (p + 1.0) * x.powf(0.5 * (p - 1.0)),
            Comparison::ExpInv => {
                let u = x.sqrt();
                (-1.0 / u).exp() * (u + 1.0) / (2.0 * u * u)
            }
            Comparison::ExpInvSq => (-1.0 / x).exp() / (x * x),
            Comparison::LogSq => {
                let l = x.ln();
                -(l / 8.0) * (-l * l / 16.0).exp() / x
            }
            Comparison::Tabulated(_) => {
                let step = 1e-6 * x;
                let hi = (x + step).min(self.x_max());
                let lo = x - step;
                (self.h(hi)? - self.h(lo)?) / (hi - lo)
            }
        })
    }

    /// `H(0) = 0`, `H` increasing and convex on `(0, r^2]` (second
    /// differences on a geometric grid).
    pub fn check_shape(&self, samples: usize) -> Result<()> {
        if self.h(0.0)? != 0.0 {
            return Err(Error::invalid("h", "H(0) must vanish"));
        }
        let xm = self.x_max();
        let xs: Vec<f64> = (0..=samples)
            .map(|i| xm * (1e-8f64).powf(1.0 - i as f64 / samples as f64))
            .collect();
        let hs = xs.iter().map(|&x| self.h(x)).collect::<Result<Vec<_>>>()?;
        for w in hs.windows(2) {
            if !(w[1] > w[0]) && w[1] != 0.0 {
                return Err(Error::invalid("h", "H must be strictly increasing on (0, r^2]"));
            }
        }
        for i in 1..samples {
            let (x0, x1, x2) = (xs[i - 1], xs[i], xs[i + 1]);
            let slope_l = (hs[i] - hs[i - 1]) / (x1 - x0);
            let slope_r = (hs[i + 1] - hs[i]) / (x2 - x1);
            if slope_r < slope_l - 1e-9 * slope_l.abs().max(f64::MIN_POSITIVE) {
                return Err(Error::invalid(
                    "r",
                    format!("H is not convex near x = {x1:e}; reduce r"),
                ));
            }
        }
        Ok(())
    }

    fn check_unit(t: f64) -> Result<()> {
        if t > 0.0 && t <= 1.0 {
            Ok(())
        } else {
            Err(Error::Domain(format!("argument {t} outside (0, 1]")))
        }
    }

    pub fn h2(&self, t: f64) -> Result<f64> {
        Self::check_unit(t)?;
        Ok(t * self.h_prime(self.eps0 * t)?)
    }

    pub fn h1(&self, t: f64) -> Result<f64> {
        Self::check_unit(t)?;
        if t == 1.0 {
            return Ok(0.0);
        }
        if self.closed_form {
            if let Some((kappa, q)) = self.power_constants() {
                return Ok(if q == 1.0 {
                    -t.ln() / kappa
                } else {
                    ((1.0 - q) * t.ln()).exp_m1() / (kappa * (q - 1.0))
                });
            }
        }
        if self.h2(t)? == 0.0 {
            return Ok(f64::INFINITY);
        }
        // geometric pre-splitting keeps each piece well scaled
        let mut total = 0.0;
        let mut a = t;
        while a < 1.0 {
            let b = (4.0 * a).min(1.0);
            let r = integrate(
                |s| 1.0 / (s * self.h_prime(self.eps0 * s).unwrap_or(f64::NAN)),
                a,
                b,
                1e-12,
                0.0,
                2000,
            );
            if !r.value.is_finite() {
                return Ok(f64::INFINITY);
            }
            total += r.value;
            a = b;
        }
        Ok(total)
    }

    pub fn h1_inv(&self, y: f64) -> Result<Inverse> {
        if !(y >= 0.0) {
            return Err(Error::Domain(format!("H1 inverse needs y >= 0 (got {y})")));
        }
        if y == 0.0 {
            return Ok(Inverse::exact(1.0));
        }
        if self.closed_form {
            if let Some((kappa, q)) = self.power_constants() {
                return Ok(Inverse::exact(if q == 1.0 {
                    (-kappa * y).exp()
                } else {
                    (-(kappa * (q - 1.0) * y).ln_1p() / (q - 1.0)).exp()
                }));
            }
        }
        if self.h1(T_MIN)? <= y {
            return Ok(Inverse {
                value: T_MIN,
                saturated: true,
            });
        }
        let (mut lo, mut hi) = (T_MIN.ln(), 0.0f64);
        for _ in 0..MAX_BISECTIONS {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi || hi - lo < 1e-16 {
                break;
            }
            if self.h1(mid.exp())? > y {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(Inverse::exact((0.5 * (lo + hi)).exp()))
    }

    pub fn h2_inv(&self, y: f64) -> Result<Inverse> {
        if !(y > 0.0) {
            return Err(Error::Domain(format!("H2 inverse needs y > 0 (got {y})")));
        }
        let top = self.h2(1.0)?;
        if y >= top {
            return Ok(Inverse {
                value: 1.0,
                saturated: y > top,
            });
        }
        if self.closed_form {
            if let Some((kappa, q)) = self.power_constants() {
                return Ok(Inverse::exact((y / kappa).powf(1.0 / q)));
            }
        }
        let (mut lo, mut hi) = ((1e-300f64).ln(), 0.0f64);
        for _ in 0..MAX_BISECTIONS {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.h2(mid.exp())? < y {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(Inverse::exact((0.5 * (lo + hi)).exp()))
    }

    /// `(H')^{-1}(s)` on `[0, r^2]`; returns the left end when `H'` already
    /// exceeds `s` there (linear case).
    pub fn h_prime_inv(&self, s: f64) -> Result<f64> {
        let (mut lo, mut hi) = (0.0, self.x_max());
        for _ in 0..MAX_BISECTIONS {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.h_prime(mid)? < s {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(if self.h_prime(lo)? >= s { lo } else { hi })
    }

    /// Legendre transform of `H` restricted to `[0, r^2]`.
    pub fn conjugate(&self, s: f64) -> Result<f64> {
        let top = self.h_prime(self.x_max())?;
        if !(s > 0.0 && s < top) {
            return Err(Error::Domain(format!("H* evaluated at {s}, outside (0, {top})")));
        }
        let x = self.h_prime_inv(s)?;
        Ok(s * x - self.h(x)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    MuZero,
    MuNonzero,
}

impl Family {
    /// `|mu| < 1e-10` selects the exponential-regime family.
    pub fn from_mu(mu: f64) -> Self {
        if mu.abs() < 1e-10 {
            Family::MuZero
        } else {
            Family::MuNonzero
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EnvelopeKind {
    /// `k3 H1^{-1}(k1 (A(t) - A(t0)) + k2)`
    MuZero { k1: f64, k2: f64, k3: f64, t0: f64 },
    /// `scale H2^{-1}(c / t)`
    MuNonzero { c: f64, scale: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Envelope {
    pub kind: EnvelopeKind,
    pub alpha: AlphaKind,
    pub profile: DecayProfile,
}

impl Envelope {
    pub fn eval(&self, t: f64) -> Result<Inverse> {
        match self.kind {
            EnvelopeKind::MuZero { k1, k2, k3, t0 } => {
                if !(t >= 0.0) {
                    return Err(Error::Domain(format!("envelope needs t >= 0 (got {t})")));
                }
                let y = k1 * (self.alpha.integral(t) - self.alpha.integral(t0)) + k2;
                let inv = self.profile.h1_inv(y.max(0.0))?;
                Ok(Inverse {
                    value: k3 * inv.value,
                    ..inv
                })
            }
            EnvelopeKind::MuNonzero { c, scale } => {
                if !(t > 0.0) {
                    return Err(Error::Domain(format!("envelope needs t > 0 (got {t})")));
                }
                let inv = self.profile.h2_inv(c / t)?;
                Ok(Inverse {
                    value: scale * inv.value,
                    ..inv
                })
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitOptions {
    /// Start of the fit window, past the initial transient.
    pub t0: f64,
    /// End of the fit window; the last sample when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t1: Option<f64>,
    pub margin: f64,
    /// Leading share of the window used to calibrate `k1` or `c`; the rest
    /// of the window only tests domination.
    pub calibration_fraction: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            t0: 5.0,
            t1: None,
            margin: 0.05,
            calibration_fraction: 0.5,
        }
    }
}

impl FitOptions {
    pub fn validate(&self) -> Result<()> {
        let mut v = crate::error::Validator::new();
        v.check(self.t0 >= 0.0 && self.t0.is_finite(), "t0", "must be finite and >= 0");
        if let Some(t1) = self.t1 {
            v.check(t1 > self.t0, "t1", "must exceed t0");
        }
        v.check(self.margin >= 0.0 && self.margin.is_finite(), "margin", "must be >= 0");
        v.check(
            self.calibration_fraction > 0.0 && self.calibration_fraction <= 1.0,
            "calibration_fraction",
            "must lie in (0, 1]",
        );
        v.finish()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub family: Family,
    pub constants: BTreeMap<String, f64>,
    pub domination_ratio: f64,
    /// Slope of `ln E` against `t` over the window.
    pub tail_slope: f64,
    pub r_squared: f64,
    /// Slope of `ln E` against `ln t` over the window.
    pub loglog_slope: f64,
    pub window: [f64; 2],
    pub samples: usize,
    /// Asymptotic power-law exponents in `t` for power comparisons with a
    /// constant weight: the one implied by the definitions and, for the
    /// weakly dissipative family, the one printed with the worked example.
    pub exponents: BTreeMap<String, f64>,
    pub flags: Vec<String>,
}

impl FitReport {
    pub fn dominated(&self) -> bool {
        self.domination_ratio <= 1.0 + 1e-6
    }
}

/// Least-squares slope and coefficient of determination.
pub fn regression(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    (slope, r2)
}

/// Calibrates an envelope of the given family against `(t, E)` samples
/// (first sample at `t = 0`) and reports how well it dominates.
pub fn fit_envelope(
    series: &[(f64, f64)],
    family: Family,
    profile: &DecayProfile,
    alpha: AlphaKind,
    opts: &FitOptions,
) -> Result<(FitReport, Envelope)> {
    opts.validate()?;
    let &(_, e_init) = series
        .first()
        .ok_or_else(|| Error::InsufficientData("empty series".into()))?;
    if !(e_init > 0.0 && e_init.is_finite()) {
        return Err(Error::InsufficientData(format!("initial energy {e_init} is not positive")));
    }
    let t_end = opts.t1.unwrap_or(series.last().map_or(0.0, |s| s.0));
    let window: Vec<(f64, f64)> = series
        .iter()
        .copied()
        .filter(|&(t, _)| t >= opts.t0 && t <= t_end)
        .collect();
    if window.len() < 10 {
        return Err(Error::InsufficientData(format!(
            "{} samples in [{}, {}], need at least 10",
            window.len(),
            opts.t0,
            t_end
        )));
    }
    let (ta, ea) = window[0];
    let tb = window.last().unwrap().0;
    let t_cal = ta + opts.calibration_fraction * (tb - ta);
    let floor = if profile.closed_form { f64::MIN_POSITIVE } else { T_MIN };
    let rel = |e: f64| (e / e_init).clamp(floor, 1.0);
    let mut flags = Vec::new();
    let mut constants = BTreeMap::new();

    let kind = match family {
        Family::MuZero => {
            let k2 = profile.h1(rel(ea))?;
            let k3 = e_init * (1.0 + opts.margin);
            let a0 = alpha.integral(ta);
            let mut k1 = f64::INFINITY;
            for &(t, e) in window.iter().filter(|(t, _)| *t > ta && *t <= t_cal) {
                k1 = k1.min((profile.h1(rel(e))? - k2) / (alpha.integral(t) - a0));
            }
            if !(k1 > 0.0 && k1.is_finite()) {
                flags.push("non_decaying".to_string());
                k1 = 1.0;
            }
            constants.insert("k1".into(), k1);
            constants.insert("k2".into(), k2);
            constants.insert("k3".into(), k3);
            constants.insert("t0".into(), ta);
            EnvelopeKind::MuZero { k1, k2, k3, t0: ta }
        }
        Family::MuNonzero => {
            let mut c: f64 = 0.0;
            for &(t, e) in window.iter().filter(|(t, _)| *t <= t_cal) {
                c = c.max(t * profile.h2(rel(e))?);
            }
            c *= 1.0 + opts.margin;
            if !(c > 0.0) {
                flags.push("non_decaying".to_string());
                c = 1.0;
            }
            constants.insert("c".into(), c);
            constants.insert("scale".into(), e_init);
            EnvelopeKind::MuNonzero { c, scale: e_init }
        }
    };
    let envelope = Envelope {
        kind,
        alpha,
        profile: profile.clone(),
    };

    let mut ratio: f64 = 0.0;
    let mut saturated = false;
    for &(t, e) in &window {
        let env = envelope.eval(t)?;
        saturated |= env.saturated;
        ratio = ratio.max(e / env.value);
    }
    if saturated {
        flags.push("saturated".to_string());
    }
    if !(ratio <= 1.0 + 1e-6) {
        flags.push("not_dominated".to_string());
    }

    let positive: Vec<(f64, f64)> = window.iter().copied().filter(|&(_, e)| e > 0.0).collect();
    let ts: Vec<f64> = positive.iter().map(|p| p.0).collect();
    let lns: Vec<f64> = positive.iter().map(|p| p.1.ln()).collect();
    let (tail_slope, r_squared) = regression(&ts, &lns);
    let lnt: Vec<f64> = ts.iter().map(|t| t.max(f64::MIN_POSITIVE).ln()).collect();
    let (loglog_slope, _) = regression(&lnt, &lns);

    let mut exponents = BTreeMap::new();
    if let (Comparison::Power { p, .. }, AlphaKind::Constant { .. }) = (&profile.h0, alpha) {
        let p = *p;
        match family {
            Family::MuZero if p > 1.0 => {
                exponents.insert("definition".into(), -2.0 / (p - 1.0));
            }
            Family::MuNonzero => {
                exponents.insert("definition".into(), -2.0 / (p + 1.0));
                exponents.insert("printed".into(), if p > 1.0 { -2.0 / (p - 1.0) } else { -1.0 });
            }
            _ => {}
        }
    }

    Ok((
        FitReport {
            family,
            constants,
            domination_ratio: ratio,
            tail_slope,
            r_squared,
            loglog_slope,
            window: [ta, tb],
            samples: window.len(),
            exponents,
            flags,
        },
        envelope,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Table;

    fn power(c: f64, p: f64, eps0: f64) -> DecayProfile {
        DecayProfile::new(Comparison::Power { c, p }, 1.0, Some(eps0)).unwrap()
    }

    fn exp_profiles() -> Vec<DecayProfile> {
        vec![
            DecayProfile::new(Comparison::ExpInv, 0.6, None).unwrap(),
            DecayProfile::new(Comparison::ExpInvSq, 0.7, None).unwrap(),
            DecayProfile::new(Comparison::LogSq, 0.0115, None).unwrap(),
        ]
    }

    #[test]
    fn h_examples() {
        let p = power(1.0, 3.0, 0.5);
        assert_eq!(p.h(0.3).unwrap(), 0.09);
        assert_eq!(p.h(0.0).unwrap(), 0.0);
        let e = DecayProfile::new(Comparison::ExpInv, 1.0, Some(0.1));
        // convexity fails past x = 0.38
        assert!(e.is_err());
        let e = DecayProfile::new(Comparison::ExpInv, 0.6, None).unwrap();
        let x: f64 = 0.3;
        assert!((e.h(x).unwrap() - x.sqrt() * (-1.0 / x.sqrt()).exp()).abs() < 1e-16);
        assert!(matches!(e.h(0.5), Err(Error::Domain(_))));
        assert!(matches!(e.h(-0.1), Err(Error::Domain(_))));
    }

    #[test]
    fn exp_inv_at_one() {
        // r = 1 is not a convexity radius, so bypass the constructor
        let e = DecayProfile {
            h0: Comparison::ExpInv,
            eps0: 0.5,
            r: 1.0,
            closed_form: false,
        };
        assert!((e.h(1.0).unwrap() - 0.367_879_441_171_442_3).abs() < 1e-15);
    }

    #[test]
    fn h2_examples() {
        let lin = power(1.0, 1.0, 0.5);
        assert_eq!(lin.h2(0.25).unwrap(), 0.25);
        // eps0 = 1 sits on the boundary of (0, r^2): use r slightly above 1
        let cubic = DecayProfile::new(Comparison::Power { c: 1.0, p: 3.0 }, 1.0 + 1e-9, Some(1.0)).unwrap();
        assert!((cubic.h2(0.5).unwrap() - 0.5).abs() < 1e-15);
        assert!(matches!(cubic.h2(0.0), Err(Error::Domain(_))));
        assert!(matches!(cubic.h2(1.5), Err(Error::Domain(_))));
    }

    #[test]
    fn h1_examples() {
        let cubic = DecayProfile::new(Comparison::Power { c: 1.0, p: 3.0 }, 1.0 + 1e-9, Some(1.0)).unwrap();
        for prof in [cubic.clone(), cubic.clone().numeric()] {
            assert_eq!(prof.h1(1.0).unwrap(), 0.0);
            assert_eq!(prof.h1_inv(0.0).unwrap().value, 1.0);
            assert!((prof.h1(0.5).unwrap() - 0.5).abs() < 1e-9);
            assert!((prof.h1_inv(0.5).unwrap().value - 0.5).abs() < 1e-9);
            assert!((prof.h2_inv(0.5).unwrap().value - 0.5).abs() < 1e-9);
        }
        let lin = power(2.0, 1.0, 0.5).numeric();
        let t: f64 = 0.03;
        assert!((lin.h1(t).unwrap() + t.ln() / 2.0).abs() < 1e-10);
        assert!((lin.h1_inv(1.7).unwrap().value - (-3.4f64).exp()).abs() < 1e-10);
    }

    #[test]
    fn h1_inv_saturates() {
        let p = power(1.0, 3.0, 0.5).numeric();
        let big = p.h1(T_MIN).unwrap() * 2.0;
        let inv = p.h1_inv(big).unwrap();
        assert!(inv.saturated);
        assert_eq!(inv.value, T_MIN);
        let top = p.h2(1.0).unwrap();
        assert!(p.h2_inv(2.0 * top).unwrap().saturated);
        assert!(matches!(p.h2_inv(0.0), Err(Error::Domain(_))));
    }

    #[test]
    fn conjugate_of_square() {
        let sq = DecayProfile::new(Comparison::Power { c: 1.0, p: 3.0 }, 2.0, None).unwrap();
        assert!((sq.conjugate(1.0).unwrap() - 0.25).abs() < 1e-14);
        assert!(sq.conjugate(1e-8).unwrap() < 1e-15);
        assert!(matches!(sq.conjugate(9.0), Err(Error::Domain(_))));
    }

    #[test]
    fn envelope_examples() {
        let alpha = AlphaKind::Constant { a: 1.0 };
        let lin = Envelope {
            kind: EnvelopeKind::MuZero { k1: 1.0, k2: 0.0, k3: 1.0, t0: 0.0 },
            alpha,
            profile: power(1.0, 1.0, 0.5),
        };
        for t in [0.0, 0.5, 3.0, 10.0] {
            assert!((lin.eval(t).unwrap().value - (-t as f64).exp()).abs() < 1e-14);
        }
        let cubic = Envelope {
            kind: EnvelopeKind::MuZero { k1: 1.0, k2: 0.0, k3: 1.0, t0: 0.0 },
            alpha,
            profile: DecayProfile::new(Comparison::Power { c: 1.0, p: 3.0 }, 1.0 + 1e-9, Some(1.0)).unwrap(),
        };
        for t in [0.0, 0.5, 3.0, 10.0] {
            assert!((cubic.eval(t).unwrap().value - 1.0 / (2.0 * t + 1.0)).abs() < 1e-9);
        }
        let weak = Envelope {
            kind: EnvelopeKind::MuNonzero { c: 1.0, scale: 1.0 },
            alpha,
            profile: DecayProfile::new(Comparison::Power { c: 1.0, p: 1.0 }, 1.0, None).unwrap(),
        };
        for t in [2.0, 5.0, 50.0] {
            assert!((weak.eval(t).unwrap().value - 1.0 / t).abs() < 1e-14);
        }
        assert!(weak.eval(0.0).is_err());
    }

    #[test]
    fn reciprocal_weight_uses_log_primitive() {
        let env = Envelope {
            kind: EnvelopeKind::MuZero { k1: 1.0, k2: 0.0, k3: 1.0, t0: 0.0 },
            alpha: AlphaKind::Reciprocal { a: 1.0 },
            profile: power(1.0, 1.0, 0.5),
        };
        // exp(-ln(1 + t)) = 1 / (1 + t)
        assert!((env.eval(4.0).unwrap().value - 0.2).abs() < 1e-14);
    }

    fn series(f: impl Fn(f64) -> f64, t_end: f64, dt: f64) -> Vec<(f64, f64)> {
        let n = (t_end / dt).round() as usize;
        (0..=n).map(|i| i as f64 * dt).map(|t| (t, f(t))).collect()
    }

    #[test]
    fn fit_exponential_series() {
        let s = series(|t| (-t).exp(), 50.0, 0.1);
        let (rep, _) = fit_envelope(
            &s,
            Family::MuZero,
            &power(1.0, 1.0, 0.5),
            AlphaKind::Constant { a: 1.0 },
            &FitOptions::default(),
        )
        .unwrap();
        assert!(rep.dominated(), "{rep:?}");
        assert!((rep.tail_slope + 1.0).abs() < 0.01);
        assert!(rep.flags.is_empty());
    }

    #[test]
    fn fit_reciprocal_series() {
        let s = series(|t| 1.0 / (1.0 + t), 50.0, 0.1);
        let (rep, _) = fit_envelope(
            &s,
            Family::MuNonzero,
            &power(1.0, 1.0, 0.5),
            AlphaKind::Constant { a: 1.0 },
            &FitOptions::default(),
        )
        .unwrap();
        assert!(rep.dominated(), "{rep:?}");
        assert_eq!(rep.exponents["definition"], -1.0);
    }

    #[test]
    fn fit_constant_series_fails() {
        let s = series(|_| 2.0, 50.0, 0.1);
        let (rep, _) = fit_envelope(
            &s,
            Family::MuZero,
            &power(1.0, 1.0, 0.5),
            AlphaKind::Constant { a: 1.0 },
            &FitOptions::default(),
        )
        .unwrap();
        assert!(rep.domination_ratio > 1.0);
        assert!(rep.flags.contains(&"non_decaying".to_string()));
        assert!(rep.flags.contains(&"not_dominated".to_string()));
    }

    #[test]
    fn fit_short_series() {
        let s = series(|t| (-t).exp(), 5.5, 0.1);
        let err = fit_envelope(
            &s,
            Family::MuZero,
            &power(1.0, 1.0, 0.5),
            AlphaKind::Constant { a: 1.0 },
            &FitOptions::default(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::InsufficientData(_)));
    }

    #[test]
    fn family_dispatch() {
        assert_eq!(Family::from_mu(0.0), Family::MuZero);
        assert_eq!(Family::from_mu(-1.0), Family::MuNonzero);
    }

    #[test]
    fn tabulated_profile() {
        let table = Table {
            points: vec![[0.0, 0.0], [0.5, 0.1], [1.0, 0.5], [2.0, 1.5]],
        };
        let prof = DecayProfile::new(Comparison::Tabulated(table), 2.0, None).unwrap();
        assert!(!prof.closed_form);
        // first segment: h0 = 0.2 s, H = 0.2 x, H2 = 0.2 t
        assert!((prof.h2(0.1).unwrap() - 0.02).abs() < 1e-9);
        let t = prof.h1_inv(prof.h1(0.2).unwrap()).unwrap().value;
        assert!((t - 0.2).abs() < 1e-8);
    }

    #[test]
    fn exp_catalog_round_trips() {
        for prof in exp_profiles() {
            for t in [1e-3, 0.01, 0.1, 0.5, 0.9] {
                let y = prof.h1(t).unwrap();
                if !y.is_finite() {
                    // 1/H2 overflows this close to zero
                    continue;
                }
                let back = prof.h1_inv(y).unwrap();
                assert!(!back.saturated);
                assert!((back.value - t).abs() <= 1e-8, "{:?} {t} {}", prof.h0, back.value);
                let y2 = prof.h2(t).unwrap();
                if y2 > 0.0 {
                    assert!((prof.h2_inv(y2).unwrap().value - t).abs() <= 1e-8);
                }
            }
        }
    }

    #[test]
    fn h2_vanishes_at_zero() {
        for prof in exp_profiles().into_iter().chain([power(1.0, 3.0, 0.5), power(2.0, 5.0, 0.5)]) {
            let vals: Vec<f64> = (1..12).map(|k| prof.h2(10f64.powi(-k)).unwrap()).collect();
            assert!(vals.windows(2).all(|w| w[1] <= w[0]));
            assert!(*vals.last().unwrap() < 1e-10);
        }
    }

    proptest::proptest! {
        #[test]
        fn h1_strictly_decreasing(a in 1e-4f64..1.0, b in 1e-4f64..1.0, p in 1.0f64..6.0) {
            proptest::prop_assume!((a - b).abs() > 1e-9);
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            let prof = power(1.3, p, 0.4).numeric();
            proptest::prop_assert!(prof.h1(lo).unwrap() > prof.h1(hi).unwrap());
        }

        #[test]
        fn power_round_trips(t in 1e-4f64..1.0, p in 1.0f64..6.0) {
            let prof = power(0.8, p, 0.3).numeric();
            let back = prof.h1_inv(prof.h1(t).unwrap()).unwrap().value;
            proptest::prop_assert!((back - t).abs() <= 1e-8);
            let back2 = prof.h2_inv(prof.h2(t).unwrap()).unwrap().value;
            proptest::prop_assert!((back2 - t).abs() <= 1e-8);
        }

        #[test]
        fn young_inequality(a in 0.0f64..1.0, b in 0.0f64..1.0, p in 1.0f64..6.0) {
            let prof = power(1.0, p, 0.5);
            let top = prof.h_prime(prof.x_max()).unwrap();
            let s = a * top;
            proptest::prop_assume!(s > 0.0 && s < top);
            let x = b * prof.x_max();
            proptest::prop_assert!(s * x <= prof.conjugate(s).unwrap() + prof.h(x).unwrap() + 1e-12);
        }
    }
}
