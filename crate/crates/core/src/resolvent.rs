//! The stationary problem `(I + A) V = W` on the staggered grid.
//!
//! `V = (v1, ..., v6)` reuses the dynamic layout: `v1, v2, v5` at centers
//! (`phi`, `phi_t`, `theta` slots) and `v3, v4, v6` at nodes (`psi`,
//! `psi_t`, `q` slots). The solver eliminates `v2`, `v4`, `v6` and solves a
//! variational problem for `(v1, v3, v5)` whose third equation is tested
//! against primitives `int_0^x u5`, exactly as in the continuum existence
//! argument. With staggered differences the reduction is algebraically
//! exact, so the recovered `V` solves the discrete strong form to rounding.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::diagnostics::{cumulative, energy};
use crate::discretization::{d_center, d_node, mean, shear, Grid, StaggeredState};
use crate::error::{Error, Result, Validator};
use crate::model::{FourierModes, PhysicalParams};

/// Discrete `A V` with the same differences as the dynamic right-hand side.
pub fn apply_a(v: &StaggeredState, p: &PhysicalParams) -> StaggeredState {
    let n = v.cells();
    let mut out = StaggeredState::zeros(&v.grid());
    let s = shear(v);
    let ds = d_center(&s);
    let v3x = d_center(&v.psi);
    let v3xx = d_node(&v3x);
    let v5x = d_node(&v.theta);
    let v6x = d_center(&v.q);
    let v4x = d_center(&v.psit);
    for i in 0..n {
        out.phi[i] = -v.phit[i];
        out.phit[i] = -p.k / p.rho1 * ds[i];
        out.theta[i] = (v6x[i] + p.delta * v4x[i]) / p.rho3;
    }
    for j in 1..n {
        out.psi[j] = -v.psit[j];
        out.psit[j] = (-p.b * v3xx[j] + p.k * s[j] + p.delta * v5x[j]) / p.rho2;
        out.q[j] = (p.beta * v.q[j] + v5x[j]) / p.tau;
    }
    out
}

/// Discrete inner product of the state space; `<V, V>_H = 2 E(V)`.
pub fn inner_h(u: &StaggeredState, v: &StaggeredState, p: &PhysicalParams) -> f64 {
    let dx = 1.0 / u.cells() as f64;
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() * dx;
    let (su, sv) = (shear(u), shear(v));
    p.rho1 * dot(&u.phit, &v.phit)
        + p.rho2 * dot(&u.psit, &v.psit)
        + p.k * dot(&su, &sv)
        + p.b * dot(&d_center(&u.psi), &d_center(&v.psi))
        + p.rho3 * dot(&u.theta, &v.theta)
        + p.tau * dot(&u.q, &v.q)
}

pub fn norm_h(v: &StaggeredState, p: &PhysicalParams) -> f64 {
    (2.0 * energy(v, p)).sqrt()
}

/// Plain grid `L2` norm over all six components.
pub fn norm_l2(v: &StaggeredState) -> f64 {
    let dx = 1.0 / v.cells() as f64;
    let sq = |a: &[f64]| a.iter().map(|x| x * x).sum::<f64>();
    (dx * (sq(&v.phi) + sq(&v.phit) + sq(&v.psi) + sq(&v.psit) + sq(&v.theta) + sq(&v.q))).sqrt()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResolventProblem {
    pub params: PhysicalParams,
    pub grid: Grid,
    pub w: StaggeredState,
}

impl ResolventProblem {
    pub fn validate(&self) -> Result<()> {
        let mut v = Validator::new();
        v.absorb("params", self.params.validate());
        let w = &self.w;
        v.check(w.cells() == self.grid.n, "w", "layout does not match the grid");
        if w.cells() == self.grid.n {
            let n = self.grid.n;
            let scale = w.max_abs().max(1.0);
            for (name, c) in [("w1", &w.phi), ("w2", &w.phit), ("w5", &w.theta)] {
                v.check(mean(c).abs() <= 1e-12 * scale, name, "must have zero mean");
            }
            for (name, c) in [("w3", &w.psi), ("w4", &w.psit), ("w6", &w.q)] {
                v.check(c[0] == 0.0 && c[n] == 0.0, name, "must vanish at both ends");
            }
            v.check(w.is_finite(), "w", "non-finite entry");
        }
        v.finish()
    }
}

/// The assembled form on `(v1, v3 interior, v5)` and its zero-mean basis.
pub struct Assembly {
    n: usize,
    dx: f64,
    b: DMatrix<f64>,
    t: DMatrix<f64>,
    dn: DMatrix<f64>,
    dc: DMatrix<f64>,
    cm: DMatrix<f64>,
    reduced: DMatrix<f64>,
}

impl Assembly {
    pub fn new(params: &PhysicalParams, grid: &Grid) -> Self {
        let p = params;
        let n = grid.n;
        let dx = grid.dx();
        let m = n - 1;
        let bt = p.beta + p.tau;
        // centers -> interior nodes
        let mut dn = DMatrix::zeros(m, n);
        for j in 0..m {
            dn[(j, j + 1)] = 1.0 / dx;
            dn[(j, j)] = -1.0 / dx;
        }
        // interior nodes -> centers, zero end values
        let dc = -dn.transpose();
        // centers -> primitive at interior nodes
        let mut cm = DMatrix::zeros(m, n);
        for j in 0..m {
            for i in 0..=j {
                cm[(j, i)] = dx;
            }
        }
        let size = 2 * n + m;
        let (o3, o5) = (n, n + m);
        let mut b = DMatrix::zeros(size, size);
        let dtd = dn.transpose() * &dn;
        b.view_mut((0, 0), (n, n))
            .copy_from(&((dtd * p.k + DMatrix::identity(n, n) * p.rho1) * dx));
        b.view_mut((0, o3), (n, m)).copy_from(&(dn.transpose() * (p.k * dx)));
        b.view_mut((o3, 0), (m, n)).copy_from(&(&dn * (p.k * dx)));
        let c33 = DMatrix::identity(m, m) * (p.k + p.delta * p.delta * bt + p.rho2)
            + dc.transpose() * &dc * p.b;
        b.view_mut((o3, o3), (m, m)).copy_from(&(c33 * dx));
        let c35 = &cm * (p.rho3 * p.delta * bt * dx);
        b.view_mut((o5, o3), (n, m)).copy_from(&c35.transpose());
        b.view_mut((o3, o5), (m, n)).copy_from(&c35);
        let c55 = DMatrix::identity(n, n) * p.rho3 + cm.transpose() * &cm * (p.rho3 * p.rho3 * bt);
        b.view_mut((o5, o5), (n, n)).copy_from(&(c55 * dx));

        let mut t = DMatrix::zeros(size, 3 * m);
        for k in 0..m {
            t[(k, k)] = 1.0;
            t[(k + 1, k)] = -1.0;
            t[(o3 + k, m + k)] = 1.0;
            t[(o5 + k, 2 * m + k)] = 1.0;
            t[(o5 + k + 1, 2 * m + k)] = -1.0;
        }
        let reduced = t.transpose() * &b * &t;
        Self {
            n,
            dx,
            b,
            t,
            dn,
            dc,
            cm,
            reduced,
        }
    }

    /// `b(v, u) = u^T B v` in the full coordinates.
    pub fn form(&self) -> &DMatrix<f64> {
        &self.b
    }

    /// Splits `(v1, v3, v5)` packed as a full coordinate vector.
    fn unpack(&self, x: &DVector<f64>) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let (n, m) = (self.n, self.n - 1);
        let v1 = x.rows(0, n).iter().copied().collect();
        let mut v3 = vec![0.0; n + 1];
        v3[1..n].copy_from_slice(x.rows(n, m).as_slice());
        let v5 = x.rows(n + m, n).iter().copied().collect();
        (v1, v3, v5)
    }

    /// `||v||_Lambda^2` for a full coordinate vector.
    pub fn lambda_norm2(&self, x: &DVector<f64>) -> f64 {
        let (n, m) = (self.n, self.n - 1);
        let v1 = x.rows(0, n);
        let v3 = x.rows(n, m);
        let v5 = x.rows(n + m, n);
        let s = &self.dn * v1 + v3;
        let v3x = &self.dc * v3;
        self.dx * (s.norm_squared() + v1.norm_squared() + v3x.norm_squared() + v5.norm_squared())
    }

    /// `b(v, v) / ||v||_Lambda^2`.
    pub fn rayleigh(&self, x: &DVector<f64>) -> f64 {
        (x.transpose() * &self.b * x)[(0, 0)] / self.lambda_norm2(x)
    }

    /// Maps a reduced vector into full coordinates (zero-mean `v1`, `v5`).
    pub fn expand(&self, y: &DVector<f64>) -> DVector<f64> {
        &self.t * y
    }

    pub fn reduced_dim(&self) -> usize {
        self.reduced.nrows()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResolventSolution {
    pub v: StaggeredState,
    /// Largest gap between the primitive recovery of `v6` and the one from
    /// the last equation, relative to `max |v6|`.
    pub v6_crosscheck: f64,
    /// `|v6(1)|` before pinning, relative to `max |v6|`.
    pub v6_endpoint: f64,
}

pub fn solve_resolvent(problem: &ResolventProblem) -> Result<ResolventSolution> {
    problem.validate()?;
    let asm = Assembly::new(&problem.params, &problem.grid);
    solve_with(&asm, problem)
}

pub fn solve_with(asm: &Assembly, problem: &ResolventProblem) -> Result<ResolventSolution> {
    let p = &problem.params;
    let w = &problem.w;
    let (n, m, dx) = (asm.n, asm.n - 1, asm.dx);
    let bt = p.beta + p.tau;
    let cw5 = cumulative(&w.theta);
    let h1: Vec<f64> = (0..n).map(|i| p.rho1 * (w.phi[i] + w.phit[i])).collect();
    let h2: Vec<f64> = (1..n)
        .map(|j| {
            bt * p.delta * p.delta * w.psi[j] + bt * p.delta * p.rho3 * cw5[j] - p.delta * p.tau * w.q[j]
                + p.rho2 * (w.psi[j] + w.psit[j])
        })
        .collect();
    let h3 = DVector::from_iterator(
        m,
        (1..n).map(|j| p.rho3 * (bt * p.delta * w.psi[j] + bt * p.rho3 * cw5[j] - p.tau * w.q[j])),
    );
    let mut load = DVector::zeros(2 * n + m);
    for i in 0..n {
        load[i] = h1[i] * dx;
    }
    for j in 0..m {
        load[n + j] = h2[j] * dx;
    }
    let l5 = asm.cm.transpose() * h3 * dx;
    load.rows_mut(n + m, n).copy_from(&l5);

    let rhs = asm.t.transpose() * load;
    let y = asm
        .reduced
        .clone()
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Numeric("assembled resolvent matrix is singular".into()))?;
    let x = asm.expand(&y);
    let (v1, v3, v5) = asm.unpack(&x);

    let mut v = StaggeredState::zeros(&problem.grid);
    v.phi = v1;
    v.psi = v3;
    v.theta = v5;
    for i in 0..n {
        v.phit[i] = v.phi[i] - w.phi[i];
    }
    for j in 0..=n {
        v.psit[j] = v.psi[j] - w.psi[j];
    }
    let cv5 = cumulative(&v.theta);
    for j in 0..=n {
        v.q[j] = p.rho3 * cw5[j] + p.delta * w.psi[j] - p.delta * v.psi[j] - p.rho3 * cv5[j];
    }
    let v6_scale = v.q.iter().fold(0.0f64, |a, x| a.max(x.abs())).max(f64::MIN_POSITIVE);
    let v6_endpoint = v.q[n].abs() / v6_scale;
    v.q[0] = 0.0;
    v.q[n] = 0.0;
    let v5x = d_node(&v.theta);
    let v6_crosscheck = (1..n)
        .map(|j| ((p.tau * w.q[j] - v5x[j]) / bt - v.q[j]).abs())
        .fold(0.0, f64::max)
        / v6_scale;
    Ok(ResolventSolution {
        v,
        v6_crosscheck,
        v6_endpoint,
    })
}

/// `||(I + A) V - W||` in the grid `L2` norm.
pub fn strong_residual(v: &StaggeredState, w: &StaggeredState, p: &PhysicalParams) -> f64 {
    let mut r = apply_a(v, p);
    r.axpy(1.0, v);
    r.axpy(-1.0, w);
    norm_l2(&r)
}

/// Minimum of `b(v, v) / ||v||_Lambda^2` over random admissible `v`: half
/// white noise, half smooth random modes.
pub fn coercivity_estimate(asm: &Assembly, samples: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = asm.reduced_dim();
    let m = asm.n - 1;
    let mut best = f64::INFINITY;
    for s in 0..samples {
        let y = if s % 2 == 0 {
            DVector::from_fn(dim, |_, _| rng.random_range(-1.0..1.0))
        } else {
            // integrated noise in the difference basis is a smooth field
            let modes = 6;
            let coef: Vec<f64> = (0..3 * modes).map(|_| rng.random_range(-1.0..1.0)).collect();
            DVector::from_fn(dim, |k, _| {
                let (blk, idx) = (k / m, k % m);
                let x = (idx + 1) as f64 / asm.n as f64;
                (1..=modes)
                    .map(|q| coef[blk * modes + q - 1] * (q as f64 * std::f64::consts::PI * x).sin() / q as f64)
                    .sum()
            })
        };
        let x = asm.expand(&y);
        if x.norm() > 0.0 {
            best = best.min(asm.rayleigh(&x));
        }
    }
    best
}

/// Smooth admissible fields used as the manufactured solution.
pub fn manufactured_modes() -> FourierModes {
    FourierModes {
        phi0: vec![(1, 0.6), (2, 0.2)],
        phi1: vec![(1, 0.5), (3, -0.3)],
        psi0: vec![(1, 1.0), (2, 0.4)],
        psi1: vec![(1, 0.7), (3, -0.2)],
        theta0: vec![(1, 0.8), (2, 0.1)],
        q0: vec![(1, 0.5), (2, 0.3)],
    }
}

fn scaled(v: &[(u32, f64)], f: impl Fn(f64) -> f64) -> Vec<(u32, f64)> {
    v.iter().map(|&(m, a)| (m, a * f(m as f64 * std::f64::consts::PI))).collect()
}

/// Continuum `V + A V` for Fourier data, as Fourier data.
pub fn continuum_image(v: &FourierModes, p: &PhysicalParams) -> FourierModes {
    let cat = |parts: Vec<Vec<(u32, f64)>>| parts.concat();
    // derivatives: cos -> -w sin, sin -> w cos
    let v1xx = scaled(&v.phi0, |w| -w * w);
    let v3x = scaled(&v.psi0, |w| w);
    let v3xx = scaled(&v.psi0, |w| -w * w);
    let v1x = scaled(&v.phi0, |w| -w);
    let v5x = scaled(&v.theta0, |w| -w);
    let v6x = scaled(&v.q0, |w| w);
    let v4x = scaled(&v.psi1, |w| w);
    let mul = |v: &[(u32, f64)], c: f64| v.iter().map(|&(m, a)| (m, a * c)).collect::<Vec<_>>();
    FourierModes {
        phi0: cat(vec![v.phi0.clone(), mul(&v.phi1, -1.0)]),
        phi1: cat(vec![v.phi1.clone(), mul(&v1xx, -p.k / p.rho1), mul(&v3x, -p.k / p.rho1)]),
        psi0: cat(vec![v.psi0.clone(), mul(&v.psi1, -1.0)]),
        psi1: cat(vec![
            v.psi1.clone(),
            mul(&v3xx, -p.b / p.rho2),
            mul(&v1x, p.k / p.rho2),
            mul(&v.psi0, p.k / p.rho2),
            mul(&v5x, p.delta / p.rho2),
        ]),
        theta0: cat(vec![v.theta0.clone(), mul(&v6x, 1.0 / p.rho3), mul(&v4x, p.delta / p.rho3)]),
        q0: cat(vec![mul(&v.q0, 1.0 + p.beta / p.tau), mul(&v5x, 1.0 / p.tau)]),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ResolventOptions {
    #[serde(rename = "Ns")]
    pub ns: Vec<usize>,
    pub coercivity_samples: usize,
    pub monotonicity_samples: usize,
}

impl Default for ResolventOptions {
    fn default() -> Self {
        Self {
            ns: vec![32, 64, 128],
            coercivity_samples: 1000,
            monotonicity_samples: 100,
        }
    }
}

impl ResolventOptions {
    pub fn validate(&self) -> Result<()> {
        let mut v = Validator::new();
        v.check(self.ns.len() >= 2, "Ns", "need at least two grids");
        v.check(
            self.ns.iter().all(|&n| (Grid::MIN_CELLS..=1024).contains(&n)),
            "Ns",
            format!("each N must lie in {}..=1024", Grid::MIN_CELLS),
        );
        v.check(self.ns.windows(2).all(|w| w[1] > w[0]), "Ns", "must be increasing");
        v.check(self.coercivity_samples >= 1, "coercivity_samples", "must be >= 1");
        v.check(self.monotonicity_samples >= 1, "monotonicity_samples", "must be >= 1");
        v.finish()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    #[serde(rename = "N")]
    pub n: usize,
    /// Manufactured-solution error in the state-space norm.
    pub error: f64,
    /// `||(I + A) V - W|| / ||W||`.
    pub residual: f64,
    pub coercivity: f64,
    /// `|<A V, V>_H - beta int q^2|` against the exact integral.
    pub monotonicity_defect: f64,
    pub v6_crosscheck: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolventReport {
    pub residual: f64,
    pub coercivity: f64,
    pub convergence_order: f64,
    pub monotonicity_order: f64,
    /// Largest `|<A V, V>_H - beta sum q^2 dx|` over random states, relative
    /// to `||V||_H^2`; the identity is exact on the grid.
    pub discrete_identity_max: f64,
    pub grids: Vec<GridResult>,
}

/// Smooth state whose heat flux is `x^2 (1 - x)`, so that the nodal sum of
/// `q^2` differs from `int q^2 = 1/105` by a visible quadrature error.
fn monotonicity_state(grid: &Grid) -> StaggeredState {
    let mut v = StaggeredState::from_modes(grid, &manufactured_modes());
    for (j, x) in grid.nodes().enumerate() {
        v.q[j] = x * x * (1.0 - x);
    }
    v.pin_boundary();
    v
}

fn order(ns: &[usize], errs: &[f64]) -> f64 {
    let xs: Vec<f64> = ns.iter().map(|&n| (n as f64).ln()).collect();
    let ys: Vec<f64> = errs.iter().map(|e| e.ln()).collect();
    -crate::decay::regression(&xs, &ys).0
}

pub fn resolvent_check(p: &PhysicalParams, opts: &ResolventOptions, seed: u64) -> Result<ResolventReport> {
    p.validate()?;
    opts.validate()?;
    let modes = manufactured_modes();
    let image = continuum_image(&modes, p);
    let mut grids = Vec::new();
    for &n in &opts.ns {
        let grid = Grid::new(n)?;
        let asm = Assembly::new(p, &grid);
        let w = StaggeredState::from_modes(&grid, &image);
        let problem = ResolventProblem {
            params: *p,
            grid,
            w: w.clone(),
        };
        problem.validate()?;
        let sol = solve_with(&asm, &problem)?;
        let exact = StaggeredState::from_modes(&grid, &modes);
        let mut diff = sol.v.clone();
        diff.axpy(-1.0, &exact);
        let mv = monotonicity_state(&grid);
        let defect = (inner_h(&apply_a(&mv, p), &mv, p) - p.beta / 105.0).abs();
        grids.push(GridResult {
            n,
            error: norm_h(&diff, p),
            residual: strong_residual(&sol.v, &w, p) / norm_l2(&w),
            coercivity: coercivity_estimate(&asm, opts.coercivity_samples, seed ^ n as u64),
            monotonicity_defect: defect,
            v6_crosscheck: sol.v6_crosscheck,
        });
    }
    let ns: Vec<usize> = grids.iter().map(|g| g.n).collect();
    let errs: Vec<f64> = grids.iter().map(|g| g.error).collect();
    let defects: Vec<f64> = grids.iter().map(|g| g.monotonicity_defect).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let grid = Grid::new(opts.ns[0])?;
    let mut identity: f64 = 0.0;
    for _ in 0..opts.monotonicity_samples {
        let v = StaggeredState::from_modes(
            &grid,
            &crate::model::random_modes(12, 1.0, rng.random()).normalized(),
        );
        let lhs = inner_h(&apply_a(&v, p), &v, p);
        let dx = grid.dx();
        let rhs = p.beta * v.q.iter().map(|x| x * x).sum::<f64>() * dx;
        identity = identity.max((lhs - rhs).abs() / inner_h(&v, &v, p));
    }

    Ok(ResolventReport {
        residual: grids.iter().map(|g| g.residual).fold(0.0, f64::max),
        coercivity: grids.iter().map(|g| g.coercivity).fold(f64::INFINITY, f64::min),
        convergence_order: order(&ns, &errs),
        monotonicity_order: order(&ns, &defects),
        discrete_identity_max: identity,
        grids,
    })
}
