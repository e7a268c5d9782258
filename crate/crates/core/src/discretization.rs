//! Staggered finite differences: `phi`, `phi_t`, `theta` live at the `N` cell
//! centers, `psi`, `psi_t`, `q` at the `N + 1` nodes with pinned endpoints.
//!
//! All first derivatives are two-point differences landing on the partner
//! grid, so summation by parts holds exactly and the semidiscrete flow
//! reproduces the energy balance and both mean conservation laws.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{cos_series, sin_series, DampingSpec, FourierModes, PhysicalParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Grid {
    pub n: usize,
}

impl Grid {
    pub const MIN_CELLS: usize = 8;

    pub fn new(n: usize) -> Result<Self> {
        if n < Self::MIN_CELLS {
            return Err(Error::invalid(
                "grid.N",
                format!("must be >= {} (got {n})", Self::MIN_CELLS),
            ));
        }
        Ok(Self { n })
    }

    pub fn dx(&self) -> f64 {
        1.0 / self.n as f64
    }

    pub fn node(&self, j: usize) -> f64 {
        j as f64 / self.n as f64
    }

    pub fn center(&self, i: usize) -> f64 {
        (i as f64 + 0.5) / self.n as f64
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..=self.n).map(|j| self.node(j))
    }

    pub fn centers(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n).map(|i| self.center(i))
    }
}

/// Fields at one instant. The same layout doubles as a time derivative, in
/// which case `t` is meaningless and each slot holds `d/dt` of that field.
#[derive(Debug, Clone, PartialEq)]
pub struct StaggeredState {
    pub phi: Vec<f64>,
    pub phit: Vec<f64>,
    pub theta: Vec<f64>,
    pub psi: Vec<f64>,
    pub psit: Vec<f64>,
    pub q: Vec<f64>,
    pub t: f64,
}

impl StaggeredState {
    pub fn zeros(grid: &Grid) -> Self {
        let c = vec![0.0; grid.n];
        let n = vec![0.0; grid.n + 1];
        Self {
            phi: c.clone(),
            phit: c.clone(),
            theta: c,
            psi: n.clone(),
            psit: n.clone(),
            q: n,
            t: 0.0,
        }
    }

    pub fn cells(&self) -> usize {
        self.phi.len()
    }

    pub fn grid(&self) -> Grid {
        Grid { n: self.cells() }
    }

    /// Samples Fourier data; cosine fields at centers, sine fields at nodes.
    /// Endpoints are pinned and center means removed, so the result is
    /// admissible to rounding whatever the input modes.
    pub fn from_modes(grid: &Grid, modes: &FourierModes) -> Self {
        let mut s = Self::zeros(grid);
        for (i, x) in grid.centers().enumerate() {
            s.phi[i] = cos_series(&modes.phi0, x);
            s.phit[i] = cos_series(&modes.phi1, x);
            s.theta[i] = cos_series(&modes.theta0, x);
        }
        for (j, x) in grid.nodes().enumerate() {
            s.psi[j] = sin_series(&modes.psi0, x);
            s.psit[j] = sin_series(&modes.psi1, x);
            s.q[j] = sin_series(&modes.q0, x);
        }
        s.project();
        s
    }

    /// Pins nodal endpoints and removes the center means of `phi`, `phi_t`
    /// and `theta`.
    pub fn project(&mut self) {
        self.pin_boundary();
        for v in [&mut self.phi, &mut self.phit, &mut self.theta] {
            let m = mean(v);
            v.iter_mut().for_each(|x| *x -= m);
        }
    }

    pub fn pin_boundary(&mut self) {
        let n = self.cells();
        for v in [&mut self.psi, &mut self.psit, &mut self.q] {
            v[0] = 0.0;
            v[n] = 0.0;
        }
    }

    fn slots(&self) -> [&Vec<f64>; 6] {
        [&self.phi, &self.phit, &self.theta, &self.psi, &self.psit, &self.q]
    }

    fn slots_mut(&mut self) -> [&mut Vec<f64>; 6] {
        [
            &mut self.phi,
            &mut self.phit,
            &mut self.theta,
            &mut self.psi,
            &mut self.psit,
            &mut self.q,
        ]
    }

    /// `self += a * other` on the fields (time untouched).
    pub fn axpy(&mut self, a: f64, other: &Self) {
        for (dst, src) in self.slots_mut().into_iter().zip(other.slots()) {
            dst.iter_mut().zip(src).for_each(|(d, s)| *d += a * s);
        }
    }

    pub fn scale(&mut self, a: f64) {
        for v in self.slots_mut() {
            v.iter_mut().for_each(|x| *x *= a);
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.slots()
            .iter()
            .flat_map(|v| v.iter())
            .fold(0.0f64, |m, x| if x.is_nan() { f64::NAN } else { m.max(x.abs()) })
    }

    pub fn is_finite(&self) -> bool {
        self.slots().iter().all(|v| v.iter().all(|x| x.is_finite()))
    }

    pub fn len_flat(&self) -> usize {
        6 * (self.cells() + 1)
    }

    /// Interleaved layout used by the banded solver: per index `j` the
    /// entries `phi, phit, theta` (center `j`, zero padding at `j = N`)
    /// followed by `psi, psit, q` (node `j`).
    pub fn to_flat(&self) -> Vec<f64> {
        let n = self.cells();
        let mut out = vec![0.0; 6 * (n + 1)];
        for j in 0..=n {
            if j < n {
                out[6 * j] = self.phi[j];
                out[6 * j + 1] = self.phit[j];
                out[6 * j + 2] = self.theta[j];
            }
            out[6 * j + 3] = self.psi[j];
            out[6 * j + 4] = self.psit[j];
            out[6 * j + 5] = self.q[j];
        }
        out
    }

    pub fn from_flat(grid: &Grid, v: &[f64], t: f64) -> Self {
        let n = grid.n;
        let mut s = Self::zeros(grid);
        s.t = t;
        for j in 0..=n {
            if j < n {
                s.phi[j] = v[6 * j];
                s.phit[j] = v[6 * j + 1];
                s.theta[j] = v[6 * j + 2];
            }
            s.psi[j] = v[6 * j + 3];
            s.psit[j] = v[6 * j + 4];
            s.q[j] = v[6 * j + 5];
        }
        s
    }
}

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// `phi_x + psi` at nodes; zero at both ends.
pub fn shear(state: &StaggeredState) -> Vec<f64> {
    let n = state.cells();
    let inv_dx = n as f64;
    let mut s = vec![0.0; n + 1];
    for j in 1..n {
        s[j] = (state.phi[j] - state.phi[j - 1]) * inv_dx + state.psi[j];
    }
    s
}

/// Node-to-center difference `(v[i+1] - v[i]) / dx`.
pub fn d_center(v: &[f64]) -> Vec<f64> {
    let n = v.len() - 1;
    let inv_dx = n as f64;
    (0..n).map(|i| (v[i + 1] - v[i]) * inv_dx).collect()
}

/// Center-to-node difference `(c[j] - c[j-1]) / dx` at interior nodes,
/// zero at both ends.
pub fn d_node(c: &[f64]) -> Vec<f64> {
    let n = c.len();
    let inv_dx = n as f64;
    let mut out = vec![0.0; n + 1];
    for j in 1..n {
        out[j] = (c[j] - c[j - 1]) * inv_dx;
    }
    out
}

/// Time derivative of the undamped (`h = 0`) system.
pub fn linear_rhs(state: &StaggeredState, p: &PhysicalParams) -> StaggeredState {
    let n = state.cells();
    let inv_dx = n as f64;
    let s = shear(state);
    let mut d = StaggeredState::zeros(&state.grid());
    d.t = state.t;
    d.phi.copy_from_slice(&state.phit);
    d.psi.copy_from_slice(&state.psit);
    for i in 0..n {
        d.phit[i] = p.k * (s[i + 1] - s[i]) * inv_dx / p.rho1;
        d.theta[i] = -((state.q[i + 1] - state.q[i])
            + p.delta * (state.psit[i + 1] - state.psit[i]))
            * inv_dx
            / p.rho3;
    }
    let inv_dx2 = inv_dx * inv_dx;
    for j in 1..n {
        let theta_x = (state.theta[j] - state.theta[j - 1]) * inv_dx;
        let psi_xx = (state.psi[j + 1] - 2.0 * state.psi[j] + state.psi[j - 1]) * inv_dx2;
        d.psit[j] = (p.b * psi_xx - p.k * s[j] - p.delta * theta_x) / p.rho2;
        d.q[j] = -(p.beta * state.q[j] + theta_x) / p.tau;
    }
    d.psi[0] = 0.0;
    d.psi[n] = 0.0;
    d
}

/// `-alpha(t) h(psi_t) / rho2` at interior nodes (the only nonlinear term).
pub fn damping_rhs(
    state: &StaggeredState,
    p: &PhysicalParams,
    damping: &DampingSpec,
    t: f64,
) -> Result<Vec<f64>> {
    let n = state.cells();
    let a = damping.alpha_value(t);
    let mut out = vec![0.0; n + 1];
    for j in 1..n {
        out[j] = -a * damping.h_value(state.psit[j])? / p.rho2;
    }
    Ok(out)
}

/// Full semidiscrete right-hand side at time `t`.
pub fn rhs(
    state: &StaggeredState,
    t: f64,
    p: &PhysicalParams,
    damping: &DampingSpec,
) -> Result<StaggeredState> {
    let mut d = linear_rhs(state, p);
    let g = damping_rhs(state, p, damping, t)?;
    d.psit.iter_mut().zip(&g).for_each(|(x, y)| *x += y);
    Ok(d)
}
