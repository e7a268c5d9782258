//! Energies and Lyapunov functionals on the staggered grid.
//!
//! Center sums use weight `dx`; node sums use trapezoid weights, which on
//! this layout coincide with `dx` because every nodal field vanishes at the
//! endpoints.

use serde::{Deserialize, Serialize};

use crate::discretization::{d_center, rhs, shear, Grid, StaggeredState};
use crate::error::{Result, Validator};
use crate::linalg::thomas;
use crate::model::{DampingSpec, PhysicalParams};

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Trapezoid sum over nodes.
fn node_dot(a: &[f64], b: &[f64], dx: f64) -> f64 {
    let n = a.len() - 1;
    (dot(a, b) - 0.5 * (a[0] * b[0] + a[n] * b[n])) * dx
}

fn center_dot(a: &[f64], b: &[f64], dx: f64) -> f64 {
    dot(a, b) * dx
}

pub fn energy(s: &StaggeredState, p: &PhysicalParams) -> f64 {
    let dx = 1.0 / s.cells() as f64;
    let sh = shear(s);
    let psix = d_center(&s.psi);
    0.5 * (p.rho1 * center_dot(&s.phit, &s.phit, dx)
        + p.rho2 * node_dot(&s.psit, &s.psit, dx)
        + p.b * center_dot(&psix, &psix, dx)
        + p.k * node_dot(&sh, &sh, dx)
        + p.rho3 * center_dot(&s.theta, &s.theta, dx)
        + p.tau * node_dot(&s.q, &s.q, dx))
}

/// Predicted `dE/dt = -beta int q^2 - alpha(t) int psi_t h(psi_t)`.
pub fn dissipation(
    s: &StaggeredState,
    p: &PhysicalParams,
    damping: &DampingSpec,
    t: f64,
) -> Result<f64> {
    let dx = 1.0 / s.cells() as f64;
    let mut fr = 0.0;
    let n = s.cells();
    for j in 1..n {
        fr += s.psit[j] * damping.h_value(s.psit[j])?;
    }
    Ok(-p.beta * node_dot(&s.q, &s.q, dx) - damping.alpha_value(t) * fr * dx)
}

/// Energy of the time-differentiated fields, obtained from one evaluation of
/// the right-hand side.
pub fn second_energy(
    s: &StaggeredState,
    p: &PhysicalParams,
    damping: &DampingSpec,
    t: f64,
) -> Result<f64> {
    Ok(energy(&rhs(s, t, p, damping)?, p))
}

/// Solves `-w_xx = psi_x` with `w(0) = w(1) = 0`; `psi_x` at nodes is the
/// average of the two neighboring center differences.
pub fn solve_w(psi: &[f64], grid: &Grid) -> Vec<f64> {
    let n = grid.n;
    let dx = grid.dx();
    let m = n - 1;
    let rhs: Vec<f64> = (1..n)
        .map(|j| (psi[j + 1] - psi[j - 1]) / (2.0 * dx) * dx * dx)
        .collect();
    let interior = thomas(&vec![-1.0; m], &vec![2.0; m], &vec![-1.0; m], &rhs)
        .expect("the Dirichlet Laplacian is positive definite");
    let mut w = vec![0.0; n + 1];
    w[1..n].copy_from_slice(&interior);
    w
}

/// Which density multiplies the `phi_t w` term of `K2`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum K2Coeff {
    #[default]
    Rho2,
    Rho1,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LyapunovWeights {
    #[serde(rename = "N")]
    pub n: f64,
    #[serde(rename = "N2")]
    pub n2: f64,
    #[serde(rename = "N3")]
    pub n3: f64,
    #[serde(rename = "N4")]
    pub n4: f64,
    #[serde(default)]
    pub k2_phi_w_coeff: K2Coeff,
}

impl Default for LyapunovWeights {
    fn default() -> Self {
        Self {
            n: 40.0,
            n2: 4.0,
            n3: 2.0,
            n4: 1.0,
            k2_phi_w_coeff: K2Coeff::Rho2,
        }
    }
}

impl LyapunovWeights {
    pub fn validate(&self) -> Result<()> {
        let mut v = Validator::new();
        v.positive("N", self.n);
        v.positive("N2", self.n2);
        v.positive("N3", self.n3);
        v.positive("N4", self.n4);
        v.finish()
    }
}

pub fn k1(s: &StaggeredState, p: &PhysicalParams) -> f64 {
    let dx = 1.0 / s.cells() as f64;
    -(p.rho1 * center_dot(&s.phi, &s.phit, dx) + p.rho2 * node_dot(&s.psi, &s.psit, dx))
}

pub fn k2(s: &StaggeredState, p: &PhysicalParams, coeff: K2Coeff) -> f64 {
    let grid = s.grid();
    let dx = grid.dx();
    let w = solve_w(&s.psi, &grid);
    let w_c: Vec<f64> = (0..grid.n).map(|i| 0.5 * (w[i] + w[i + 1])).collect();
    let c = match coeff {
        K2Coeff::Rho2 => p.rho2,
        K2Coeff::Rho1 => p.rho1,
    };
    p.rho2 * node_dot(&s.psi, &s.psit, dx)
        - c * center_dot(&s.phit, &w_c, dx)
        - p.delta * p.tau * node_dot(&s.psi, &s.q, dx)
}

/// `int_0^x theta` at nodes, accumulated from the left end.
pub fn cumulative(theta: &[f64]) -> Vec<f64> {
    let dx = 1.0 / theta.len() as f64;
    let mut out = Vec::with_capacity(theta.len() + 1);
    let mut acc = 0.0;
    out.push(0.0);
    for v in theta {
        acc += v * dx;
        out.push(acc);
    }
    out
}

pub fn k3(s: &StaggeredState, p: &PhysicalParams) -> f64 {
    let dx = 1.0 / s.cells() as f64;
    -p.tau * p.rho3 * node_dot(&s.q, &cumulative(&s.theta), dx)
}

pub fn k4(s: &StaggeredState, p: &PhysicalParams) -> f64 {
    let dx = 1.0 / s.cells() as f64;
    let sh = shear(s);
    let psix = d_center(&s.psi);
    let gap = p.rho2 / p.b - p.rho1 / p.k;
    p.tau * p.rho2 / p.k * node_dot(&s.psit, &sh, dx)
        + p.b * p.tau * p.rho1 / (p.k * p.k) * center_dot(&s.phit, &psix, dx)
        - p.b * p.tau * p.rho3 / (p.delta * p.k) * gap * center_dot(&s.theta, &s.phit, dx)
        + p.b * p.tau / (p.delta * p.k) * gap * node_dot(&s.q, &sh, dx)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LyapunovParts {
    pub e: f64,
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
    pub k4: f64,
    pub k: f64,
}

pub fn lyapunov_parts(s: &StaggeredState, p: &PhysicalParams, w: &LyapunovWeights) -> LyapunovParts {
    let e = energy(s, p);
    let (a, b, c, d) = (k1(s, p), k2(s, p, w.k2_phi_w_coeff), k3(s, p), k4(s, p));
    LyapunovParts {
        e,
        k1: a,
        k2: b,
        k3: c,
        k4: d,
        k: w.n * e + a + w.n2 * b + w.n3 * c + w.n4 * d,
    }
}

/// `K = N E + K1 + N2 K2 + N3 K3 + N4 K4`.
pub fn lyapunov(s: &StaggeredState, p: &PhysicalParams, w: &LyapunovWeights) -> f64 {
    lyapunov_parts(s, p, w).k
}
