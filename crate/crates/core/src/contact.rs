use std::collections::HashSet;
use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use roots::{find_root_brent, SimpleConvergency};

use crate::carleman::{self, TauField, Tolerances};
use crate::error::{Error, Result};
use crate::indentor::IndentorShape;
use crate::profile::FrictionProfile;
use crate::quad::{push_graded, End, Grading, Rule};
use crate::sing_integral::{QuadGrid, SampledField};

/// Cells closer than this (in index) to a collocation node get a dedicated
/// rule for the log kernel.
const NEAR_CELLS: usize = 2;
const NEAR_GRADING: Grading = Grading {
    order: 10,
    ratio: 0.2,
    levels: 10,
};
const MAX_ACTIVE_SET_STEPS: usize = 200;
/// Size of the auxiliary grid used by the interval oracle.
const ORACLE_GRID: usize = 256;
const ORACLE_EPS: f64 = 1e-13;

#[derive(Clone, Debug, PartialEq)]
pub struct PhysicalParams {
    pub nu: f64,
    pub p: f64,
    pub fbar: FrictionProfile,
    pub gbar: IndentorShape,
}

/// `gamma = (1 - 2 nu) / (2 (1 - nu))`.
pub fn gamma(nu: f64) -> Result<f64> {
    if !(nu > -1.0 && nu < 0.5) {
        return Err(Error::Domain(format!("Poisson ratio {nu} outside (-1, 1/2)")));
    }
    Ok((1.0 - 2.0 * nu) / (2.0 * (1.0 - nu)))
}

/// Reduced data `(P, f, g)` with `f = gamma fbar` and `g = gbar / (2 (1 - nu^2))`.
pub fn reduce_physical(params: &PhysicalParams) -> Result<(f64, FrictionProfile, IndentorShape)> {
    let gm = gamma(params.nu)?;
    if !(params.p > 0.0 && params.p.is_finite()) {
        return Err(Error::InvalidInput(format!("normal force {} must be positive", params.p)));
    }
    let f = params.fbar.scaled(gm);
    let g = params.gbar.scaled(1.0 / (2.0 * (1.0 - params.nu * params.nu)));
    Ok((params.p, f, g))
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolverOptions {
    pub max_iter: usize,
    /// Step of the projected iteration; estimated from the operator norm when unset.
    pub step: Option<f64>,
    pub kkt_tol: f64,
    pub mass_tol: f64,
    pub interface_tol: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            max_iter: 50_000,
            step: None,
            kkt_tol: 1e-6,
            mass_tol: 1e-8,
            interface_tol: 1e-6,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Residuals {
    /// `|sum (mu_k - P M0_k)(u_k - g_k)|`.
    pub complementarity: f64,
    /// Equation residual on the contact set.
    pub carleman: f64,
    /// `|integral of t_tilde|`.
    pub mass: f64,
    /// Largest scaled KKT violation.
    pub kkt_max: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SolveMethod {
    Explicit,
    ActiveSet,
    Projected,
    IntervalSearch,
}

#[derive(Clone, Debug)]
pub struct ContactSolution {
    pub p: f64,
    pub t0: SampledField,
    /// Zero-mass part, `t = t_tilde - P t0`.
    pub t_tilde: SampledField,
    /// Normal displacement with `sup (u - g) = 0`.
    pub u: SampledField,
    pub contact_interval: (f64, f64),
    pub residuals: Residuals,
    pub iterations: usize,
    pub method: SolveMethod,
    /// `t_tilde / t0` averaged over each grid cell.
    pub cell_density: Vec<f64>,
}

impl ContactSolution {
    pub fn grid(&self) -> &Arc<QuadGrid> {
        self.t0.grid()
    }

    /// Nodal pressure `t = t_tilde - P t0`.
    pub fn pressure(&self) -> Vec<f64> {
        self.t_tilde
            .values()
            .iter()
            .zip(self.t0.values())
            .map(|(tt, t0)| tt - self.p * t0)
            .collect()
    }

    /// `integral phi t_tilde`, from the cell densities.
    pub fn integrate_tilde(&self, phi: impl Fn(f64) -> f64 + Sync) -> f64 {
        let e = self.grid().edges();
        self.cell_density
            .par_iter()
            .enumerate()
            .map(|(k, &r)| if r == 0.0 { 0.0 } else { r * self.t0.integrate_over(e[k], e[k + 1], &phi) })
            .collect::<Vec<f64>>()
            .iter()
            .sum()
    }

    /// `integral phi t`.
    pub fn integrate_pressure(&self, phi: impl Fn(f64) -> f64 + Sync) -> f64 {
        self.integrate_tilde(&phi) - self.p * self.t0.integrate_with(&phi)
    }

    /// Total tangential force `-integral f t`.
    pub fn tangential_force(&self, f: &FrictionProfile) -> f64 {
        -self.integrate_pressure(|x| f.eval(x))
    }
}

fn check_force(p: f64) -> Result<()> {
    if p > 0.0 && p.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("normal force {p} must be positive")))
    }
}

/// Flat punch: full contact, `u = 0`, `t = -P t0`.
pub fn solve_flat(p: f64, f: &FrictionProfile, grid: &Arc<QuadGrid>) -> Result<ContactSolution> {
    check_force(p)?;
    let t0 = if f.is_piecewise_constant() {
        let t = carleman::flat_punch_explicit(1.0, f, grid)?;
        t.map(|_, v| -v)?
    } else {
        carleman::t0(f, grid)?
    };
    let n = grid.size();
    let zero = SampledField::plain(grid.clone(), vec![0.0; n])?;
    let t = t0.map(|_, v| -p * v)?;
    let tol = Tolerances::for_grid(n);
    let res = carleman::carleman_residual(f, &t, &zero)? / p;
    if !(res <= tol.residual) {
        return Err(Error::Accuracy {
            what: "flat punch equation residual".into(),
            measured: res,
            tolerance: tol.residual,
        });
    }
    Ok(ContactSolution {
        p,
        t_tilde: t0.with_values(vec![0.0; n])?,
        t0,
        u: zero,
        contact_interval: (-1.0, 1.0),
        residuals: Residuals {
            carleman: res,
            ..Residuals::default()
        },
        iterations: 0,
        method: SolveMethod::Explicit,
        cell_density: vec![0.0; n],
    })
}

/// Discrete operators of the auxiliary problem on a grid.
struct Discretization {
    grid: Arc<QuadGrid>,
    t0: SampledField,
    /// `integral t0` over each cell.
    m0: Vec<f64>,
    /// `t0`-weighted centroid of each cell.
    centroid: Vec<f64>,
    /// `u_j = sum_k u_mat[j, k] mu_k` up to a constant.
    u_mat: DMatrix<f64>,
    /// Weight at the interior edges; `w[0]` is unused.
    w: Vec<f64>,
}

impl Discretization {
    fn new(f: &FrictionProfile, grid: &Arc<QuadGrid>) -> Result<Self> {
        let n = grid.size();
        let tau = carleman::tau(f, grid)?;
        let t0 = carleman::t0_from_tau(&tau, grid, Tolerances::for_grid(n).mass)?;
        let edges = grid.edges();
        let nodes = grid.nodes();
        let cells: Vec<Vec<(f64, f64)>> = (0..n)
            .into_par_iter()
            .map(|k| {
                t0.points_on(edges[k], edges[k + 1])
                    .into_iter()
                    .map(|(s, w, v)| (s, w * v))
                    .collect()
            })
            .collect();
        let m0: Vec<f64> = cells.iter().map(|c| c.iter().map(|p| p.1).sum()).collect();
        let centroid: Vec<f64> = cells
            .iter()
            .zip(&m0)
            .map(|(c, m)| c.iter().map(|p| p.0 * p.1).sum::<f64>() / m)
            .collect();
        let fm: Vec<f64> = cells
            .iter()
            .map(|c| c.iter().map(|&(s, wt)| wt * f.eval(s)).sum())
            .collect();
        let (b_lo, b_hi) = t0.singular_exponents().unwrap_or((0.5, 0.5));
        let t0v = t0.values();

        let rows: Vec<Vec<f64>> = (0..n)
            .into_par_iter()
            .map(|j| {
                let x = nodes[j];
                (0..n)
                    .map(|k| {
                        if k.abs_diff(j) <= NEAR_CELLS {
                            // in theta = arccos(-x), t0 dx is smooth away from the ends
                            let (a, b) = (edges[k], edges[k + 1]);
                            let (ta, tb, tx) = (theta(a), theta(b), theta(x));
                            let left = if k == 0 { End::Power(1.0 - 2.0 * b_lo) } else { End::Smooth };
                            let right = if k == n - 1 { End::Power(1.0 - 2.0 * b_hi) } else { End::Smooth };
                            let mut rule = Rule::new();
                            let inside = x > a && x < b;
                            if inside {
                                push_graded(&mut rule, ta, tx, left, End::Power(0.0), NEAR_GRADING);
                                push_graded(&mut rule, tx, tb, End::Power(0.0), right, NEAR_GRADING);
                            } else if x <= a {
                                push_graded(&mut rule, ta, tb, End::Power(0.0), right, NEAR_GRADING);
                            } else {
                                push_graded(&mut rule, ta, tb, left, End::Power(0.0), NEAR_GRADING);
                            }
                            let c = if inside { t0v[j] } else { 0.0 };
                            let mut log_int = if inside { c * log_integral(a, b, x) } else { 0.0 };
                            let mut sgn_int = 0.0;
                            for (&th, &w) in rule.nodes.iter().zip(&rule.weights) {
                                let s = -th.cos();
                                if s.abs() >= 1.0 {
                                    // the end itself, after rounding; negligible weight
                                    continue;
                                }
                                let w = w * th.sin();
                                let ts = carleman::t0_at(&tau, s);
                                log_int += w * (ts - c) * (x - s).abs().ln();
                                sgn_int += w * (x - s).signum() * f.eval(s) * ts;
                            }
                            (-log_int / PI + 0.5 * sgn_int) / m0[k]
                        } else {
                            let log_int: f64 = cells[k].iter().map(|&(s, wt)| wt * (x - s).abs().ln()).sum();
                            let sgn = if j > k { 1.0 } else { -1.0 };
                            (-log_int / PI + 0.5 * sgn * fm[k]) / m0[k]
                        }
                    })
                    .collect()
            })
            .collect();
        let u_mat = DMatrix::from_fn(n, n, |j, k| rows[j][k]);

        let ext = TauField::new(&f.compact_extension());
        let mut w = vec![0.0; n];
        for (i, wi) in w.iter_mut().enumerate().skip(1) {
            let e = edges[i];
            let fe = f.eval(e);
            *wi = (-ext.eval(e)).exp() / (1.0 + fe * fe).sqrt();
        }
        Ok(Self {
            grid: grid.clone(),
            t0,
            m0,
            centroid,
            u_mat,
            w,
        })
    }

    /// Weighted cumulative differences `(D_w v)_j = sum_{i<=j} w_i (v_i - v_{i-1})`.
    fn weighted_diff(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; v.len()];
        for j in 1..v.len() {
            out[j] = out[j - 1] + self.w[j] * (v[j] - v[j - 1]);
        }
        out
    }

    fn aux_operator(&self) -> DMatrix<f64> {
        let n = self.grid.size();
        let mut a = DMatrix::zeros(n, n);
        for j in 1..n {
            for k in 0..n {
                a[(j, k)] = a[(j - 1, k)] + self.w[j] * (self.u_mat[(j, k)] - self.u_mat[(j - 1, k)]);
            }
        }
        a
    }

    /// Nodal `t_tilde / t0`, interpolating the cell densities at the
    /// centroids linearly in `theta = arccos(-x)`, where the density is smooth
    /// up to the ends.
    fn nodal_density(&self, rho: &[f64]) -> Vec<f64> {
        let th: Vec<f64> = self.centroid.iter().map(|&c| (-c).clamp(-1.0, 1.0).acos()).collect();
        let last = th.len() - 1;
        self.grid
            .nodes()
            .iter()
            .map(|&x| {
                let t = (-x).acos();
                let i = th.partition_point(|&ti| ti < t).clamp(1, last);
                let w = (t - th[i - 1]) / (th[i] - th[i - 1]);
                rho[i - 1] + w * (rho[i] - rho[i - 1])
            })
            .collect()
    }
}

fn theta(x: f64) -> f64 {
    (-x).clamp(-1.0, 1.0).acos()
}

/// `integral_a^b log|x - s| ds`.
fn log_integral(a: f64, b: f64, x: f64) -> f64 {
    let xl = |d: f64| if d == 0.0 { 0.0 } else { d * d.abs().ln() };
    xl(b - x) - (b - x) - xl(a - x) + (a - x)
}

fn require_lipschitz(f: &FrictionProfile) -> Result<()> {
    if f.is_lipschitz() {
        Ok(())
    } else {
        Err(Error::Unsupported("convex contact needs a Lipschitz friction profile".into()))
    }
}

fn require_convex(g: &IndentorShape) -> Result<()> {
    if g.is_convex() {
        Ok(())
    } else {
        Err(Error::Domain("indentor shape is not convex".into()))
    }
}

/// Convex indentor with Lipschitz friction: the auxiliary variational
/// inequality discretized with cellwise `t_tilde = rho_k t0`, solved by a
/// primal-dual active set method with a projected-iteration fallback.
pub fn solve_convex(
    p: f64,
    f: &FrictionProfile,
    g: &IndentorShape,
    grid: &Arc<QuadGrid>,
    opts: &SolverOptions,
) -> Result<ContactSolution> {
    check_force(p)?;
    require_lipschitz(f)?;
    require_convex(g)?;
    if g.is_flat() {
        return solve_flat(p, f, grid);
    }
    let n = grid.size();
    let disc = Discretization::new(f, grid)?;
    let gv: Vec<f64> = grid.nodes().iter().map(|&x| g.g(x)).collect();
    let gh = disc.weighted_diff(&gv);
    let a = disc.aux_operator();
    let m: Vec<f64> = disc.m0.iter().map(|&m0| p * m0).collect();

    let (mu, iterations, method) = match active_set(&a, &gh, &m) {
        Some((mu, it)) => (mu, it, SolveMethod::ActiveSet),
        None => {
            let (mu, it) = projected(&a, &gh, &m, opts)?;
            (mu, it, SolveMethod::Projected)
        }
    };

    let mut u: Vec<f64> = (disc.u_mat.clone() * DVector::from_column_slice(&mu)).iter().copied().collect();
    let shift = u.iter().zip(&gv).map(|(u, g)| u - g).fold(f64::NEG_INFINITY, f64::max);
    u.iter_mut().for_each(|v| *v -= shift);

    let rho: Vec<f64> = mu.iter().zip(&disc.m0).map(|(mu, m0)| mu / m0).collect();
    let dens = disc.nodal_density(&rho);
    let tt: Vec<f64> = dens.iter().zip(disc.t0.values()).map(|(r, t)| r * t).collect();

    let av = &a * DVector::from_column_slice(&mu);
    let y: Vec<f64> = (0..n).map(|k| av[k] - gh[k]).collect();
    let residuals = kkt_residuals(p, &disc.m0, &mu, &u, &gv, &y);
    let interval = contact_interval(grid.nodes(), &u, &gv, opts.interface_tol);
    if !(residuals.mass <= opts.mass_tol) {
        return Err(Error::Accuracy {
            what: "mass of t_tilde".into(),
            measured: residuals.mass,
            tolerance: opts.mass_tol,
        });
    }
    if !(residuals.kkt_max <= opts.kkt_tol) {
        return Err(Error::Accuracy {
            what: "KKT conditions".into(),
            measured: residuals.kkt_max,
            tolerance: opts.kkt_tol,
        });
    }
    Ok(ContactSolution {
        p,
        t_tilde: disc.t0.with_values(tt)?,
        u: SampledField::structured(grid.clone(), u, None, Vec::new(), g.kinks())?,
        t0: disc.t0,
        contact_interval: interval,
        residuals,
        iterations,
        method,
        cell_density: rho,
    })
}

/// Residuals of the discrete KKT system. `y = A mu - g_hat`, which must equal
/// its contact-set level where `mu < m` and lie below it elsewhere.
fn kkt_residuals(p: f64, m0: &[f64], mu: &[f64], u: &[f64], g: &[f64], y: &[f64]) -> Residuals {
    let n = mu.len();
    let gnorm = g.iter().fold(0.0f64, |s, v| s.max(v.abs())).max(f64::MIN_POSITIVE);
    let t0max = m0.iter().fold(0.0f64, |s, v| s.max(*v)).max(f64::MIN_POSITIVE);
    let contact: Vec<usize> = (0..n).filter(|&k| mu[k] < p * m0[k]).collect();
    let level = if contact.is_empty() {
        0.0
    } else {
        contact.iter().map(|&k| y[k]).sum::<f64>() / contact.len() as f64
    };
    let carleman = contact.iter().fold(0.0f64, |s, &k| s.max((y[k] - level).abs()));
    let ymax = (0..n).fold(0.0f64, |s, k| s.max(y[k] - level));
    let comp: f64 = (0..n).map(|k| (mu[k] - p * m0[k]) * (u[k] - g[k])).sum();
    let over = (0..n).fold(0.0f64, |s, k| s.max((mu[k] - p * m0[k]) / (p * t0max)));
    let gap = (0..n).fold(0.0f64, |s, k| s.max(u[k] - g[k]));
    Residuals {
        complementarity: comp.abs(),
        carleman,
        mass: mu.iter().sum::<f64>().abs(),
        kkt_max: [
            over.max(0.0),
            gap / gnorm,
            comp.abs() / (p * gnorm),
            carleman / gnorm,
            ymax.max(0.0) / gnorm,
        ]
        .into_iter()
        .fold(0.0, f64::max),
    }
}

/// `[a, b]` spanning the nodes where `|u - g| <= tol`; an end node maps to `+-1`.
fn contact_interval(nodes: &[f64], u: &[f64], g: &[f64], tol: f64) -> (f64, f64) {
    let n = nodes.len();
    let hit = |k: &usize| (u[*k] - g[*k]).abs() <= tol;
    let first = (0..n).find(hit);
    let last = (0..n).rev().find(hit);
    match (first, last) {
        (Some(i), Some(j)) => (
            if i == 0 { -1.0 } else { nodes[i] },
            if j == n - 1 { 1.0 } else { nodes[j] },
        ),
        _ => (f64::NAN, f64::NAN),
    }
}

/// Primal-dual active set iteration. Returns `None` on cycling, a singular
/// step, or no convergence, leaving the fallback to the caller.
fn active_set(a: &DMatrix<f64>, gh: &[f64], m: &[f64]) -> Option<(Vec<f64>, usize)> {
    let n = m.len();
    let mut contact = vec![true; n];
    let mut seen = HashSet::new();
    for it in 1..=MAX_ACTIVE_SET_STEPS {
        if !seen.insert(contact.clone()) {
            return None;
        }
        let idx: Vec<usize> = (0..n).filter(|&k| contact[k]).collect();
        let ni = idx.len();
        let mut sys = DMatrix::zeros(ni + 1, ni + 1);
        let mut rhs = DVector::zeros(ni + 1);
        for (r, &j) in idx.iter().enumerate() {
            for (s, &k) in idx.iter().enumerate() {
                sys[(r, s)] = a[(j, k)];
            }
            sys[(r, ni)] = -1.0;
            rhs[r] = gh[j] - (0..n).filter(|&l| !contact[l]).map(|l| a[(j, l)] * m[l]).sum::<f64>();
        }
        for s in 0..ni {
            sys[(ni, s)] = 1.0;
        }
        rhs[ni] = -(0..n).filter(|&l| !contact[l]).map(|l| m[l]).sum::<f64>();
        let sol = sys.lu().solve(&rhs)?;
        if sol.iter().any(|v| !v.is_finite()) {
            return None;
        }
        let mut mu = m.to_vec();
        for (r, &j) in idx.iter().enumerate() {
            mu[j] = sol[r];
        }
        let c = sol[ni];
        let muv = DVector::from_column_slice(&mu);
        let av = a * &muv;
        let next: Vec<bool> = (0..n)
            .map(|k| {
                if contact[k] {
                    mu[k] <= m[k]
                } else {
                    av[k] - gh[k] - c >= 0.0
                }
            })
            .collect();
        if next == contact {
            return Some((mu, it));
        }
        contact = next;
    }
    None
}

/// Euclidean projection onto `{mu <= m, sum mu = 0}`.
fn project(z: &[f64], m: &[f64]) -> Vec<f64> {
    let total = |th: f64| z.iter().zip(m).map(|(z, m)| (z - th).min(*m)).sum::<f64>();
    let mut lo = z.iter().zip(m).map(|(z, m)| z - m).fold(f64::INFINITY, f64::min);
    let mut hi = z.iter().fold(f64::NEG_INFINITY, |s, v| s.max(*v)) + m.iter().map(|v| v.abs()).sum::<f64>() + 1.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if total(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * (1.0 + lo.abs()) {
            break;
        }
    }
    let th0 = 0.5 * (lo + hi);
    // exact threshold for the clamping pattern found by bisection
    let (mut sz, mut sm, mut nf) = (0.0, 0.0, 0usize);
    for (zk, mk) in z.iter().zip(m) {
        if zk - th0 < *mk {
            sz += zk;
            nf += 1;
        } else {
            sm += mk;
        }
    }
    let th = if nf > 0 { (sz + sm) / nf as f64 } else { th0 };
    z.iter().zip(m).map(|(z, m)| (z - th).min(*m)).collect()
}

/// Projected iteration `mu <- Pi_K(mu - s (A mu - g_hat))` with step halving.
fn projected(a: &DMatrix<f64>, gh: &[f64], m: &[f64], opts: &SolverOptions) -> Result<(Vec<f64>, usize)> {
    let n = m.len();
    let mut step = match opts.step {
        Some(s) => s,
        None => 1.0 / operator_norm(a),
    };
    let ghv = DVector::from_column_slice(gh);
    let scale = gh.iter().fold(0.0f64, |s, v| s.max(v.abs())).max(f64::MIN_POSITIVE);
    let mut mu = vec![0.0; n];
    let mut prev = f64::INFINITY;
    let mut res = f64::INFINITY;
    for it in 1..=opts.max_iter {
        let fv = a * DVector::from_column_slice(&mu) - &ghv;
        let z: Vec<f64> = (0..n).map(|k| mu[k] - step * fv[k]).collect();
        let next = project(&z, m);
        res = next.iter().zip(&mu).fold(0.0f64, |s, (a, b)| s.max((a - b).abs())) / step / scale;
        if !res.is_finite() {
            break;
        }
        if res > prev {
            step *= 0.5;
        }
        prev = res;
        mu = next;
        if res <= 0.1 * opts.kkt_tol {
            return Ok((mu, it));
        }
    }
    Err(Error::Iteration {
        iterations: opts.max_iter,
        residual: res,
    })
}

/// Power-iteration estimate of the spectral norm.
fn operator_norm(a: &DMatrix<f64>) -> f64 {
    let n = a.ncols();
    let mut v = DVector::from_element(n, 1.0 / (n as f64).sqrt());
    let mut s = 1.0;
    for _ in 0..50 {
        let w = a.transpose() * (a * &v);
        s = w.norm().sqrt();
        if s == 0.0 {
            return 1.0;
        }
        v = w / (s * s);
    }
    s
}

/// One trial interval `[a, b]` of the oracle: the inversion on `(a, b)`
/// mapped to `(-1, 1)`, with the end coefficients of `t0` it produces.
struct Trial {
    a: f64,
    b: f64,
    tau: TauField,
    t0: SampledField,
    h: SampledField,
    profile: FrictionProfile,
    slope: SampledField,
    /// Coefficients of the `t0` end singularity at `-1` and `1`.
    edge: (f64, f64),
}

impl Trial {
    fn new(p: f64, f: &FrictionProfile, g: &IndentorShape, a: f64, b: f64, aux: &Arc<QuadGrid>) -> Result<Self> {
        let (mid, ell) = (0.5 * (a + b), 0.5 * (b - a));
        let ff = f.remapped(a, b)?;
        let tau = carleman::tau(&ff, aux)?;
        let t0 = carleman::t0_from_tau(&tau, aux, 1e-6)?;
        let kinks: Vec<f64> = g
            .kinks()
            .into_iter()
            .map(|k| (k - mid) / ell)
            .filter(|y| y.abs() < 1.0)
            .collect();
        let gp = aux.nodes().iter().map(|&y| g.gprime(mid + ell * y)).collect();
        let slope = SampledField::structured(aux.clone(), gp, None, Vec::new(), kinks)?;
        let h = carleman::weighted_rhs(&tau, &slope)?;
        let (bl, bh) = h.singular_exponents().unwrap_or((-0.5, -0.5));
        let y = aux.nodes();
        let qh = h.values().iter().zip(y).map(|(v, y)| v / (1.0 - y)).collect();
        let ql = h.values().iter().zip(y).map(|(v, y)| v / (1.0 + y)).collect();
        let logs = h.kink_logs().to_vec();
        let psi_hi = SampledField::structured(aux.clone(), qh, Some((bl, bh + 1.0)), Vec::new(), h.breaks().to_vec())?
            .with_kink_logs(logs.clone())?
            .integrate();
        let psi_lo = -SampledField::structured(aux.clone(), ql, Some((bl + 1.0, bh)), Vec::new(), h.breaks().to_vec())?
            .with_kink_logs(logs)?
            .integrate();
        Ok(Self {
            a,
            b,
            tau,
            t0,
            h,
            profile: ff,
            slope,
            edge: (psi_lo - p / ell, psi_hi - p / ell),
        })
    }

    /// Mapped pressure `T(y) = t(mid + ell y)` on the auxiliary grid, with
    /// `integral T = -P / ell`.
    fn pressure(&self, p: f64) -> Result<(SampledField, f64)> {
        let ell = 0.5 * (self.b - self.a);
        let part = carleman::inversion(&self.tau, &self.t0, &self.slope)?;
        let c = -p / ell - part.integrate();
        let v = part.values().iter().zip(self.t0.values()).map(|(t, t0)| t + c * t0).collect();
        Ok((part.with_values(v)?, c))
    }
}

fn brent(lo: f64, hi: f64, mut f: impl FnMut(f64) -> f64) -> Result<f64> {
    let mut conv = SimpleConvergency {
        eps: ORACLE_EPS,
        max_iter: 200,
    };
    find_root_brent(lo, hi, &mut f, &mut conv).map_err(|e| Error::SearchFailure(format!("{e:?}")))
}

/// Runs `f`, stashing the first error and returning NaN so that a root
/// search stops early.
fn guarded<'a>(err: &'a std::cell::RefCell<Option<Error>>, f: impl Fn(f64) -> Result<f64> + 'a) -> impl FnMut(f64) -> f64 + 'a {
    move |x| match f(x) {
        Ok(v) => v,
        Err(e) => {
            err.borrow_mut().get_or_insert(e);
            f64::NAN
        }
    }
}

/// Right end for a given left end: the free-edge condition, or `1` when the
/// pressure stays compressive there.
fn right_end(p: f64, f: &FrictionProfile, g: &IndentorShape, a: f64, aux: &Arc<QuadGrid>) -> Result<f64> {
    let e_hi = |b: f64| Trial::new(p, f, g, a, b, aux).map(|t| t.edge.1);
    if e_hi(1.0)? <= 0.0 {
        return Ok(1.0);
    }
    let mut lo = a + 1e-3 * (1.0 - a);
    let mut tries = 0;
    while e_hi(lo)? >= 0.0 {
        lo = a + 0.5 * (lo - a);
        tries += 1;
        if tries > 40 {
            return Err(Error::SearchFailure(format!("no admissible right end for a = {a}")));
        }
    }
    let err = std::cell::RefCell::new(None);
    let b = brent(lo, 1.0, guarded(&err, e_hi));
    if let Some(e) = err.into_inner() {
        return Err(e);
    }
    b
}

/// Independent solver: searches the contact interval so that the explicit
/// inversion on it is admissible with free edges, then rebuilds `t` and `u`
/// on `grid`.
pub fn solve_convex_interval_oracle(
    p: f64,
    f: &FrictionProfile,
    g: &IndentorShape,
    grid: &Arc<QuadGrid>,
) -> Result<ContactSolution> {
    check_force(p)?;
    require_lipschitz(f)?;
    require_convex(g)?;
    if g.is_flat() {
        return solve_flat(p, f, grid);
    }
    let aux = QuadGrid::chebyshev(ORACLE_GRID);
    let e_lo = |a: f64| -> Result<f64> {
        let b = right_end(p, f, g, a, &aux)?;
        Trial::new(p, f, g, a, b, &aux).map(|t| t.edge.0)
    };
    let a = if e_lo(-1.0)? <= 0.0 {
        -1.0
    } else {
        // scan toward the right end for a sign change
        let mut prev = -1.0;
        let mut hi = None;
        for k in 1..=60 {
            let cand = 1.0 - 2.0 * 0.5f64.powf(k as f64 / 4.0);
            if cand <= prev {
                continue;
            }
            if e_lo(cand)? < 0.0 {
                hi = Some(cand);
                break;
            }
            prev = cand;
        }
        let hi = hi.ok_or_else(|| Error::SearchFailure("no sign change for the left edge".into()))?;
        let err = std::cell::RefCell::new(None);
        let a = brent(prev, hi, guarded(&err, e_lo));
        if let Some(e) = err.into_inner() {
            return Err(e);
        }
        a?
    };
    let b = right_end(p, f, g, a, &aux)?;
    let trial = Trial::new(p, f, g, a, b, &aux)?;
    build_oracle_solution(p, f, g, grid, &trial)
}

fn build_oracle_solution(
    p: f64,
    f: &FrictionProfile,
    g: &IndentorShape,
    grid: &Arc<QuadGrid>,
    trial: &Trial,
) -> Result<ContactSolution> {
    let n = grid.size();
    let (a, b) = (trial.a, trial.b);
    let (mid, ell) = (0.5 * (a + b), 0.5 * (b - a));
    let (tmap, c) = trial.pressure(p)?;
    let tau = carleman::tau(f, grid)?;
    let t0 = carleman::t0_from_tau(&tau, grid, Tolerances::for_grid(n).mass)?;
    let nodes = grid.nodes();

    let t: Vec<f64> = nodes
        .par_iter()
        .map(|&x| {
            if x <= a || x >= b {
                return Ok(0.0);
            }
            let y = ((x - mid) / ell).clamp(-1.0, 1.0);
            if y.abs() >= 1.0 {
                return Ok(0.0);
            }
            let fy = trial.profile.eval(y);
            let gy = g.gprime(x);
            let t0y = carleman::t0_at(&trial.tau, y);
            Ok(fy * gy / (1.0 + fy * fy) + (-PI * trial.h.hilbert_at(y)? + c) * t0y)
        })
        .collect::<Result<_>>()?;

    let edges = grid.edges();
    let rho: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|k| {
            let m0 = t0.integrate_over(edges[k], edges[k + 1], |_| 1.0);
            let (lo, hi) = (edges[k].max(a), edges[k + 1].min(b));
            let mt = if hi > lo {
                ell * tmap.integrate_over((lo - mid) / ell, (hi - mid) / ell, |_| 1.0)
            } else {
                0.0
            };
            (mt + p * m0) / m0
        })
        .collect();

    // u = g on [a, b]; outside, integrate u' = H[t] from the nearest edge
    let slope_at = |x: f64| tmap.hilbert_at((x - mid) / ell);
    let mut u: Vec<f64> = nodes.iter().map(|&x| g.g(x)).collect();
    let mut from = b;
    let mut acc = g.g(b);
    for k in 0..n {
        let x = nodes[k];
        if x <= b {
            continue;
        }
        acc += integrate_slope(&slope_at, from, x, from == b)?;
        u[k] = acc;
        from = x;
    }
    let mut from = a;
    let mut acc = g.g(a);
    for k in (0..n).rev() {
        let x = nodes[k];
        if x >= a {
            continue;
        }
        acc -= integrate_slope(&slope_at, x, from, from == a)?;
        u[k] = acc;
        from = x;
    }

    let gv: Vec<f64> = nodes.iter().map(|&x| g.g(x)).collect();
    let tmax = t0.values().iter().fold(0.0f64, |s, v| s.max(*v));
    let gnorm = gv.iter().fold(0.0f64, |s, v| s.max(v.abs())).max(f64::MIN_POSITIVE);
    let worst_t = t.iter().fold(f64::NEG_INFINITY, |s, v| s.max(*v)) / (p * tmax);
    let worst_u = (0..n).fold(f64::NEG_INFINITY, |s, k| s.max(u[k] - gv[k])) / gnorm;
    if worst_t > 1e-6 || worst_u > 1e-6 {
        return Err(Error::SearchFailure(format!(
            "interval [{a}, {b}] not admissible: max t {worst_t:e}, max u-g {worst_u:e}"
        )));
    }

    let m0: Vec<f64> = (0..n).map(|k| t0.integrate_over(edges[k], edges[k + 1], |_| 1.0)).collect();
    let mu: Vec<f64> = rho.iter().zip(&m0).map(|(r, m)| r * m).collect();
    let comp: f64 = (0..n).map(|k| (mu[k] - p * m0[k]) * (u[k] - gv[k])).sum();
    let eq_res = carleman::carleman_residual(&trial.profile, &tmap, &trial.slope)?
        / trial.slope.values().iter().fold(f64::MIN_POSITIVE, |s, v| s.max(v.abs()));
    let residuals = Residuals {
        complementarity: comp.abs(),
        carleman: eq_res,
        mass: mu.iter().sum::<f64>().abs(),
        kkt_max: [worst_t.max(0.0), worst_u.max(0.0), comp.abs() / (p * gnorm)]
            .into_iter()
            .fold(0.0, f64::max),
    };
    let tt: Vec<f64> = t.iter().zip(t0.values()).map(|(t, t0)| t + p * t0).collect();
    Ok(ContactSolution {
        p,
        t_tilde: t0.with_values(tt)?,
        u: SampledField::structured(grid.clone(), u, None, Vec::new(), g.kinks())?,
        t0,
        contact_interval: (a, b),
        residuals,
        iterations: 0,
        method: SolveMethod::IntervalSearch,
        cell_density: rho,
    })
}

/// `integral_lo^hi u'`, graded toward the contact edge when `graded`.
fn integrate_slope(slope: &impl Fn(f64) -> Result<f64>, lo: f64, hi: f64, graded: bool) -> Result<f64> {
    let mut rule = Rule::new();
    if graded {
        push_graded(&mut rule, lo, hi, End::Power(0.0), End::Power(0.0), NEAR_GRADING);
    } else {
        rule.push_legendre(lo, hi, 8);
    }
    let mut s = 0.0;
    for (&x, &w) in rule.nodes.iter().zip(&rule.weights) {
        s += w * slope(x)?;
    }
    Ok(s)
}

/// Largest nodal violation of `min(P t0, A^-1 g_hat) <= t_tilde <= P t0`,
/// weighted by `sqrt(1 - x^2)` so that the endpoint growth of `t0` does not
/// amplify discretization error.
pub fn lewy_stampacchia_check(sol: &ContactSolution, f: &FrictionProfile, g: &IndentorShape, p: f64) -> Result<f64> {
    let grid = sol.grid();
    let lower = if g.is_flat() {
        vec![0.0; grid.size()]
    } else {
        carleman::solve_nonhomogeneous(f, &g.gprime_field(grid)?)?.values().to_vec()
    };
    let mut worst = 0.0f64;
    for (k, &x) in grid.nodes().iter().enumerate() {
        let tt = sol.t_tilde.values()[k];
        let up = p * sol.t0.values()[k];
        let v = (up.min(lower[k]) - tt).max(tt - up);
        worst = worst.max(v * ((1.0 - x) * (1.0 + x)).sqrt());
    }
    Ok(worst)
}

/// Maps `u` to the auxiliary displacement and back, returning the largest
/// discrepancy against the original `u`.
pub fn po_pa_roundtrip(sol: &ContactSolution, f: &FrictionProfile, g: &IndentorShape) -> Result<f64> {
    let grid = sol.grid();
    let n = grid.size();
    let ext = TauField::new(&f.compact_extension());
    let w: Vec<f64> = (0..n)
        .map(|i| {
            if i == 0 {
                return 1.0;
            }
            let e = grid.edges()[i];
            let fe = f.eval(e);
            (-ext.eval(e)).exp() / (1.0 + fe * fe).sqrt()
        })
        .collect();
    let gv: Vec<f64> = grid.nodes().iter().map(|&x| g.g(x)).collect();
    let u = sol.u.values();
    let cum = |v: &[f64], scale: &dyn Fn(usize) -> f64| {
        let mut out = vec![0.0; n];
        for j in 1..n {
            out[j] = out[j - 1] + scale(j) * (v[j] - v[j - 1]);
        }
        out
    };
    let sup_norm = |v: &mut Vec<f64>, base: &[f64]| {
        let s = v.iter().zip(base).map(|(a, b)| a - b).fold(f64::NEG_INFINITY, f64::max);
        v.iter_mut().for_each(|x| *x -= s);
    };
    let gh = cum(&gv, &|j| w[j]);
    let mut v = cum(u, &|j| w[j]);
    sup_norm(&mut v, &gh);
    let mut back = cum(&v, &|j| 1.0 / w[j]);
    sup_norm(&mut back, &gv);
    Ok(back.iter().zip(u).fold(0.0f64, |s, (a, b)| s.max((a - b).abs())))
}

/// Worst violations of the coincidence-set structure.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct StructureReport {
    /// `max |u - g|` on nodes inside the contact interval.
    pub gap_on_contact: f64,
    /// Worst of `g' - u'` and `u'` left of the interval.
    pub left: f64,
    /// Worst of `u' - g'` and `-u'` right of the interval.
    pub right: f64,
    /// `max |u'| - sup |g'|`.
    pub gradient_excess: f64,
}

/// Checks the shape of `u` around the contact interval with difference quotients.
pub fn structure_check(sol: &ContactSolution, g: &IndentorShape) -> StructureReport {
    let x = sol.grid().nodes();
    let u = sol.u.values();
    let (a, b) = sol.contact_interval;
    let mut r = StructureReport {
        left: f64::NEG_INFINITY,
        right: f64::NEG_INFINITY,
        gradient_excess: f64::NEG_INFINITY,
        ..Default::default()
    };
    for k in 0..x.len() {
        if x[k] >= a && x[k] <= b {
            r.gap_on_contact = r.gap_on_contact.max((u[k] - g.g(x[k])).abs());
        }
    }
    for k in 1..x.len() {
        let dx = x[k] - x[k - 1];
        let du = (u[k] - u[k - 1]) / dx;
        let dg = (g.g(x[k]) - g.g(x[k - 1])) / dx;
        r.gradient_excess = r.gradient_excess.max(du.abs() - g.lipschitz_bound());
        if x[k] <= a {
            r.left = r.left.max(dg - du).max(du);
        } else if x[k - 1] >= b {
            r.right = r.right.max(du - dg).max(-du);
        }
    }
    r.left = r.left.max(0.0);
    r.right = r.right.max(0.0);
    r
}

/// Width of the grid cell containing `x`.
pub fn cell_width_at(grid: &QuadGrid, x: f64) -> f64 {
    let e = grid.edges();
    let k = grid.cell_of(x.clamp(e[0], e[e.len() - 1])).unwrap_or(0);
    e[k + 1] - e[k]
}

/// `sum dx sqrt(1 - x^2) |t1 - t2|` over the nodes.
pub fn weighted_l1_distance(grid: &QuadGrid, t1: &[f64], t2: &[f64]) -> f64 {
    grid.nodes()
        .iter()
        .zip(grid.dx_weights())
        .zip(t1.iter().zip(t2))
        .map(|((x, w), (a, b))| w * ((1.0 - x) * (1.0 + x)).sqrt() * (a - b).abs())
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gamma_values() {
        assert_eq!(gamma(0.0).unwrap(), 0.5);
        assert!((gamma(0.3).unwrap() - 2.0 / 7.0).abs() < 1e-15);
        assert!(gamma(0.5).is_err());
        assert!(gamma(-1.0).is_err());
        assert!(gamma(0.4999999).unwrap() < 1e-6);
    }

    #[test]
    fn reduction_scales_data() {
        let params = PhysicalParams {
            nu: 0.0,
            p: 1.5,
            fbar: FrictionProfile::constant(0.4),
            gbar: IndentorShape::parabola(1.0).unwrap(),
        };
        let (p, f, g) = reduce_physical(&params).unwrap();
        assert_eq!(p, 1.5);
        assert!((f.eval(0.3) - 0.2).abs() < 1e-15);
        assert!((g.g(0.5) - 0.125).abs() < 1e-15);
    }

    #[test]
    fn log_integral_matches_quadrature() {
        let (a, b, x) = (-0.3, 0.2, 0.45);
        let mut rule = Rule::new();
        rule.push_legendre(a, b, 40);
        let q = rule.integrate(|s| (x - s).abs().ln());
        assert!((q - log_integral(a, b, x)).abs() < 1e-13);
        assert!((log_integral(0.0, 1.0, 0.0) + 1.0).abs() < 1e-15);
        assert!((log_integral(-1.0, 0.0, 0.0) + 1.0).abs() < 1e-15);
        let split = log_integral(a, 0.05, 0.05) + log_integral(0.05, b, 0.05);
        assert!((split - log_integral(a, b, 0.05)).abs() < 1e-15);
    }

    #[test]
    fn projection_lands_in_the_set() {
        let z = [0.5, -0.2, 0.9, 0.1];
        let m = [0.3, 0.3, 0.3, 0.3];
        let p = project(&z, &m);
        assert!(p.iter().sum::<f64>().abs() < 1e-14);
        assert!(p.iter().zip(&m).all(|(a, b)| a <= b));
    }

    #[test]
    fn flat_punch_without_friction_is_arcsine() {
        let grid = QuadGrid::chebyshev(128);
        let sol = solve_flat(2.0, &FrictionProfile::constant(0.0), &grid).unwrap();
        for (x, t) in grid.nodes().iter().zip(sol.pressure()) {
            let exact = -2.0 / (PI * (1.0 - x * x).sqrt());
            assert!((t - exact).abs() <= 1e-12 * exact.abs());
        }
        assert_eq!(sol.contact_interval, (-1.0, 1.0));
    }

    #[test]
    fn flat_indentor_reduces_to_flat_punch() {
        let grid = QuadGrid::chebyshev(64);
        let f = FrictionProfile::constant(0.3);
        let sol = solve_convex(1.0, &f, &IndentorShape::flat(), &grid, &SolverOptions::default()).unwrap();
        assert_eq!(sol.contact_interval, (-1.0, 1.0));
        assert!(sol.u.values().iter().all(|&v| v == 0.0));
        assert_eq!(lewy_stampacchia_check(&sol, &f, &IndentorShape::flat(), 1.0).unwrap(), 0.0);
        assert_eq!(po_pa_roundtrip(&sol, &f, &IndentorShape::flat()).unwrap(), 0.0);
    }

    #[test]
    fn hertz_width_without_friction() {
        let grid = QuadGrid::chebyshev(256);
        let g = IndentorShape::parabola(4.0).unwrap();
        let f = FrictionProfile::constant(0.0);
        let p = 0.5;
        let ell = (4.0 * p / PI).sqrt();
        let sol = solve_convex_interval_oracle(p, &f, &g, &grid).unwrap();
        assert!((sol.contact_interval.0 + ell).abs() < 1e-8);
        assert!((sol.contact_interval.1 - ell).abs() < 1e-8);
    }

    #[test]
    fn rejects_nonconvex_indentor() {
        let grid = QuadGrid::chebyshev(32);
        let g = IndentorShape::parabola(1.0).unwrap().scaled(-1.0);
        let r = solve_convex(1.0, &FrictionProfile::constant(0.0), &g, &grid, &SolverOptions::default());
        assert!(matches!(r, Err(Error::Domain(_))));
    }
}
