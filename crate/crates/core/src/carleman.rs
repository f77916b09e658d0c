//! The Carleman equation `H[t] + f t = u'` on (-1, 1).
//!
//! `tau = H[arctan f]` is split into log singularities (at the ends of the
//! domain and at every jump of `f`) and a bounded remainder computed by
//! direct quadrature of the continuous part of `arctan f`. Everything else
//! (the positive solution `t0`, the kernel, the zero-mass inversion) is
//! assembled from `tau` at the grid nodes and handed to the product
//! integration engine with its singular structure declared.

use crate::error::{Error, Result};
use crate::profile::FrictionProfile;
use crate::quad::{legendre, push_near, subdivide, Rule};
use crate::sing_integral::{hilbert_at_nodes, cauchy_upper, QuadGrid, SampledField};
use num_complex::Complex64;
use rayon::prelude::*;
use std::f64::consts::PI;
use std::sync::Arc;

/// Jumps of `arctan f` smaller than this are treated as continuity.
const JUMP_EPS: f64 = 1e-14;
/// Widest panel used for the bounded part of `tau`.
const TAU_PANEL: f64 = 0.125;
/// Gauss points per panel for the bounded part of `tau`.
const TAU_ORDER: usize = 20;

/// Tolerances for the postcondition checks of this module.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Tolerances {
    /// Allowed deviation of `int t0` from 1 (and of kernel masses from 0).
    pub mass: f64,
    /// Allowed weighted residual of the inversion formula, relative to
    /// `max(1, |u'|_inf)`.
    pub residual: f64,
}

impl Tolerances {
    /// Mass tolerance `1e-6` at `N = 2048`, scaled like `N^-2`.
    pub fn for_grid(n: usize) -> Self {
        let s = 2048.0 / n as f64;
        Tolerances {
            mass: 1e-6 * s * s,
            residual: 1e-4,
        }
    }
}

/// `tau = H[arctan f]` written as `smooth + sum c_i log|x - x_i|`.
///
/// The log terms sit at the two ends of the domain (coefficients
/// `-arctan f(lo+) / pi` and `arctan f(hi-) / pi`) and at every jump
/// (`(arctan f(x_i-) - arctan f(x_i+)) / pi`).
#[derive(Clone, Debug)]
pub struct TauField {
    profile: FrictionProfile,
    /// Step part of `arctan f` on each piece; `arctan f - step` is continuous
    /// and vanishes at the left end.
    steps: Vec<f64>,
    lift_end: f64,
    jump_part: Vec<(f64, f64)>,
    panels: Vec<(f64, f64)>,
    flat: bool,
    smooth_part: Option<SampledField>,
}

impl TauField {
    /// Pointwise evaluator for a profile on any domain `[lo, hi]`.
    pub fn new(f: &FrictionProfile) -> Self {
        let (lo, hi) = f.domain();
        let mut steps = Vec::with_capacity(f.pieces().len());
        steps.push(f.right_limit(lo).atan());
        let mut jump_part = vec![(lo, -steps[0] / PI)];
        for (x, l, r) in f.jumps() {
            let (al, ar) = (l.atan(), r.atan());
            let prev = *steps.last().unwrap();
            steps.push(prev + (ar - al));
            let c = (al - ar) / PI;
            if c.abs() > JUMP_EPS {
                jump_part.push((x, c));
            }
        }
        jump_part.push((hi, f.left_limit(hi).atan() / PI));
        let panels = f
            .panels()
            .into_iter()
            .flat_map(|(a, b)| {
                let cuts = subdivide(a, b, TAU_PANEL);
                cuts.windows(2).map(|w| (w[0], w[1])).collect::<Vec<_>>()
            })
            .collect();
        let flat = f.is_piecewise_constant();
        let mut tau = TauField {
            profile: f.clone(),
            steps,
            lift_end: 0.0,
            jump_part,
            panels,
            flat,
            smooth_part: None,
        };
        tau.lift_end = tau.lift(hi);
        tau
    }

    /// The continuous part `L = arctan f - step` at `x`.
    fn lift(&self, x: f64) -> f64 {
        let i = self.profile.piece_index(x);
        self.profile.pieces()[i].eval(x).atan() - self.steps[i]
    }

    fn lift_on(&self, piece: usize, x: f64) -> f64 {
        self.profile.pieces()[piece].eval(x).atan() - self.steps[piece]
    }

    /// Bounded part of `tau` at an interior point of the domain.
    pub fn regular(&self, x: f64) -> f64 {
        if self.flat {
            return 0.0;
        }
        let (lo, hi) = self.profile.domain();
        let lx = self.lift(x);
        let gl = legendre(TAU_ORDER);
        let mut sum = 0.0;
        let mut rule = Rule::new();
        for &(a, b) in &self.panels {
            rule.nodes.clear();
            rule.weights.clear();
            if x > a && x < b {
                rule.push_legendre(a, x, TAU_ORDER);
                rule.push_legendre(x, b, TAU_ORDER);
            } else if x >= b && x - b < b - a || x <= a && a - x < b - a {
                push_near(&mut rule, a, b, x, TAU_ORDER);
            } else {
                let (h, c) = (0.5 * (b - a), 0.5 * (a + b));
                let piece = self.profile.piece_index(c);
                for &(t, w) in gl.iter() {
                    let s = c + h * t;
                    sum += h * w * (self.lift_on(piece, s) - lx) / (s - x);
                }
                continue;
            }
            let piece = self.profile.piece_index(0.5 * (a + b));
            for (&s, &w) in rule.nodes.iter().zip(&rule.weights) {
                // a point that rounds onto x carries a bounded term of negligible weight
                if s != x {
                    sum += w * (self.lift_on(piece, s) - lx) / (s - x);
                }
            }
        }
        sum += (lx - self.lift_end) * (hi - x).ln() - lx * (x - lo).ln();
        sum / PI
    }

    /// `tau(x)` at an interior point that is not a jump.
    pub fn eval(&self, x: f64) -> f64 {
        self.regular(x) + self.log_part(x)
    }

    /// `sum c_i log|x - x_i|`.
    pub fn log_part(&self, x: f64) -> f64 {
        self.jump_part.iter().map(|&(xi, c)| c * (x - xi).abs().ln()).sum()
    }

    /// `exp(tau(x))` with the log terms applied as powers.
    pub fn exp_at(&self, x: f64, sign: f64) -> f64 {
        let pw: f64 = self
            .jump_part
            .iter()
            .map(|&(xi, c)| (x - xi).abs().powf(sign * c))
            .product();
        pw * (sign * self.regular(x)).exp()
    }

    /// `(x_i, c_i)` of the log terms, ends included.
    pub fn jump_part(&self) -> &[(f64, f64)] {
        &self.jump_part
    }

    /// Coefficients of `log(x - lo)` and `log(hi - x)`.
    pub fn end_coefficients(&self) -> (f64, f64) {
        (self.jump_part[0].1, self.jump_part.last().unwrap().1)
    }

    /// Interior log terms only.
    pub fn interior_logs(&self) -> &[(f64, f64)] {
        &self.jump_part[1..self.jump_part.len() - 1]
    }

    /// Samples of the bounded part at the grid nodes, when built by [`tau`].
    pub fn smooth_part(&self) -> Option<&SampledField> {
        self.smooth_part.as_ref()
    }

    pub fn profile(&self) -> &FrictionProfile {
        &self.profile
    }
}

/// `tau` for `f`, with its bounded part sampled on `grid`.
pub fn tau(f: &FrictionProfile, grid: &Arc<QuadGrid>) -> Result<TauField> {
    let mut t = TauField::new(f);
    let (lo, hi) = f.domain();
    if grid.nodes()[0] <= lo || *grid.nodes().last().unwrap() >= hi {
        return Err(Error::InvalidInput("grid extends beyond the profile domain".into()));
    }
    let values: Vec<f64> = grid.nodes().par_iter().map(|&x| t.regular(x)).collect();
    t.smooth_part = Some(SampledField::plain(grid.clone(), values)?);
    Ok(t)
}

fn require_unit_domain(f: &FrictionProfile) -> Result<()> {
    if f.domain() != (-1.0, 1.0) {
        return Err(Error::InvalidInput(format!(
            "profile must live on [-1, 1] (got {:?})",
            f.domain()
        )));
    }
    Ok(())
}

/// Interior breakpoints and kinks of `f`.
pub(crate) fn profile_breaks(f: &FrictionProfile) -> Vec<f64> {
    let sb = f.smooth_breaks();
    sb[1..sb.len() - 1].to_vec()
}

/// Kink terms of `exp(sign tau)`: where the slope of `arctan f` jumps by `d`,
/// `tau` contains `-(d / pi) (x - x_k) log|x - x_k|`.
pub(crate) fn kink_logs(f: &FrictionProfile, sign: f64) -> Vec<(f64, f64)> {
    const SIDE: f64 = 1e-10;
    let slope = |x: f64| {
        let v = f.eval(x);
        f.deriv(x) / (1.0 + v * v)
    };
    profile_breaks(f)
        .into_iter()
        .map(|k| (k, -sign * (slope(k + SIDE) - slope(k - SIDE)) / PI))
        .filter(|&(_, c)| c.abs() > 1e-12)
        .collect()
}

/// Builds a field with the singular structure of `t0` for `tau`.
fn t0_structure(tau: &TauField, grid: &Arc<QuadGrid>, values: Vec<f64>) -> Result<SampledField> {
    let (c_lo, c_hi) = tau.end_coefficients();
    let powers = tau.interior_logs().to_vec();
    SampledField::structured(
        grid.clone(),
        values,
        Some((0.5 - c_lo, 0.5 - c_hi)),
        powers,
        profile_breaks(tau.profile()),
    )?
    .with_kink_logs(kink_logs(tau.profile(), 1.0))
}

fn t0_values(tau: &TauField, grid: &QuadGrid) -> Vec<f64> {
    let reg = tau.smooth_part().map(|s| s.values().to_vec());
    let f = tau.profile();
    grid.nodes()
        .par_iter()
        .enumerate()
        .map(|(k, &x)| {
            let r = reg.as_ref().map_or_else(|| tau.regular(x), |v| v[k]);
            let pw: f64 = tau
                .jump_part()
                .iter()
                .map(|&(xi, c)| (x - xi).abs().powf(c))
                .product();
            let fx = f.eval(x);
            pw * r.exp() / (PI * ((1.0 - x) * (1.0 + x)).sqrt() * (1.0 + fx * fx).sqrt())
        })
        .collect()
}

/// `t0(x)` at an arbitrary interior point (not a jump).
pub fn t0_at(tau: &TauField, x: f64) -> f64 {
    let fx = tau.profile().eval(x);
    tau.exp_at(x, 1.0) / (PI * ((1.0 - x) * (1.0 + x)).sqrt() * (1.0 + fx * fx).sqrt())
}

/// Positive unit-mass solution of the homogeneous equation, with the default
/// mass tolerance for the grid.
pub fn t0(f: &FrictionProfile, grid: &Arc<QuadGrid>) -> Result<SampledField> {
    t0_with_tolerance(f, grid, Tolerances::for_grid(grid.size()).mass)
}

/// As [`t0`] with an explicit mass tolerance.
pub fn t0_with_tolerance(f: &FrictionProfile, grid: &Arc<QuadGrid>, mass_tol: f64) -> Result<SampledField> {
    require_unit_domain(f)?;
    let tau = tau(f, grid)?;
    t0_from_tau(&tau, grid, mass_tol)
}

pub(crate) fn t0_from_tau(tau: &TauField, grid: &Arc<QuadGrid>, mass_tol: f64) -> Result<SampledField> {
    let t = t0_structure(tau, grid, t0_values(tau, grid))?;
    let mass = t.integrate();
    if !((mass - 1.0).abs() <= mass_tol) {
        return Err(Error::Accuracy {
            what: "mass of t0".into(),
            measured: mass,
            tolerance: mass_tol,
        });
    }
    Ok(t)
}

/// Guard band half-width around increasing jumps, for a grid of size `n`.
pub fn guard_band(n: usize) -> f64 {
    2.0 / n as f64
}

/// Weighted interior norm of `H[t] + f t - rhs`, weight `sqrt(1 - x^2)`.
///
/// Nodes within [`guard_band`] of an increasing jump of `f` are skipped.
pub fn carleman_residual(f: &FrictionProfile, t: &SampledField, rhs: &SampledField) -> Result<f64> {
    let grid = t.grid().clone();
    if rhs.grid().as_ref() != grid.as_ref() {
        return Err(Error::InvalidInput("t and rhs live on different grids".into()));
    }
    if t.values().iter().all(|&v| v == 0.0) {
        return Ok(weighted_norm(&grid, |k| rhs.values()[k], |_| true));
    }
    let h = hilbert_at_nodes(t)?;
    let band = guard_band(grid.size());
    let rising: Vec<f64> = f
        .discontinuities()
        .into_iter()
        .filter(|&(_, l, r)| l < r)
        .map(|(x, _, _)| x)
        .collect();
    let nodes = grid.nodes();
    Ok(weighted_norm(
        &grid,
        |k| h[k] + f.eval(nodes[k]) * t.values()[k] - rhs.values()[k],
        |k| rising.iter().all(|&x| (nodes[k] - x).abs() > band),
    ))
}

fn weighted_norm(grid: &QuadGrid, r: impl Fn(usize) -> f64, keep: impl Fn(usize) -> bool) -> f64 {
    let nodes = grid.nodes();
    let dx = grid.dx_weights();
    (0..grid.size())
        .filter(|&k| keep(k))
        .map(|k| {
            let x = nodes[k];
            let v = ((1.0 - x) * (1.0 + x)).sqrt() * r(k);
            dx[k] * v * v
        })
        .sum::<f64>()
        .sqrt()
}

/// Explicit flat-punch pressure for piecewise-constant friction:
/// `-P prod |x - x_i|^(a_i - a_{i+1}) / (pi sqrt(1 + f^2) (1 + x)^(1/2 + a_1) (1 - x)^(1/2 - a_n))`
/// with `a_i = arctan(f_i) / pi`.
pub fn flat_punch_explicit(p: f64, f: &FrictionProfile, grid: &Arc<QuadGrid>) -> Result<SampledField> {
    if !(p > 0.0) {
        return Err(Error::Domain(format!("total force must be positive (got {p})")));
    }
    require_unit_domain(f)?;
    if !f.is_piecewise_constant() {
        return Err(Error::Unsupported(
            "explicit solution needs piecewise-constant friction; use t0".into(),
        ));
    }
    let bps = f.breakpoints();
    let alpha: Vec<f64> = f.pieces().iter().map(|pc| pc.eval(0.0).atan() / PI).collect();
    let n = alpha.len();
    let powers: Vec<(f64, f64)> = (1..n)
        .map(|i| (bps[i], alpha[i - 1] - alpha[i]))
        .filter(|&(_, e)| e.abs() > JUMP_EPS)
        .collect();
    let values = grid
        .nodes()
        .iter()
        .map(|&x| {
            let fx = f.eval(x);
            let pw: f64 = powers.iter().map(|&(xi, e)| (x - xi).abs().powf(e)).product();
            -p * pw
                / (PI
                    * (1.0 + fx * fx).sqrt()
                    * (1.0 + x).powf(0.5 + alpha[0])
                    * (1.0 - x).powf(0.5 - alpha[n - 1]))
        })
        .collect();
    SampledField::structured(
        grid.clone(),
        values,
        Some((0.5 + alpha[0], 0.5 - alpha[n - 1])),
        powers,
        bps[1..n].to_vec(),
    )
}

/// `t0` together with the kernel elements `t0 / (x - x_i)`, one per
/// decreasing jump `x_i`.
#[derive(Clone, Debug)]
pub struct PressureBasis {
    pub t0: SampledField,
    pub kernel: Vec<SampledField>,
    /// The decreasing jumps generating `kernel`, in the same order.
    pub kernel_points: Vec<f64>,
}

/// Basis of the solutions of the homogeneous equation.
pub fn kernel_basis(f: &FrictionProfile, grid: &Arc<QuadGrid>) -> Result<PressureBasis> {
    require_unit_domain(f)?;
    let tol = Tolerances::for_grid(grid.size()).mass;
    let tau = tau(f, grid)?;
    let t0 = t0_from_tau(&tau, grid, tol)?;
    let (c_lo, c_hi) = tau.end_coefficients();
    let mut kernel = Vec::new();
    let mut kernel_points = Vec::new();
    for &(xi, l, r) in &f.discontinuities() {
        if !(l > r) {
            continue;
        }
        let values = grid
            .nodes()
            .iter()
            .zip(t0.values())
            .map(|(&x, &v)| v / (x - xi))
            .collect();
        let powers = tau
            .interior_logs()
            .iter()
            .map(|&(x, c)| if x == xi { (x, c - 1.0) } else { (x, c) })
            .collect();
        let k = SampledField::structured(
            grid.clone(),
            values,
            Some((0.5 - c_lo, 0.5 - c_hi)),
            powers,
            profile_breaks(f),
        )?
        .with_kink_logs(t0.kink_logs().to_vec())?;
        let mass = k.integrate();
        if !(mass.abs() <= tol) {
            return Err(Error::Accuracy {
                what: format!("mass of kernel element at {xi}"),
                measured: mass,
                tolerance: tol,
            });
        }
        kernel.push(k);
        kernel_points.push(xi);
    }
    Ok(PressureBasis {
        t0,
        kernel,
        kernel_points,
    })
}

/// Zero-mass solution of `H[t] + f t = u'` for Lipschitz `f`:
/// `t = f u' / (1 + f^2) + t0 * pv(1/x) * [sqrt(1 - x^2) e^-tau u' / sqrt(1 + f^2)]`.
pub fn solve_nonhomogeneous(f: &FrictionProfile, uprime: &SampledField) -> Result<SampledField> {
    let tol = Tolerances::for_grid(uprime.grid().size());
    solve_nonhomogeneous_with(f, uprime, tol)
}

/// As [`solve_nonhomogeneous`] with explicit tolerances.
pub fn solve_nonhomogeneous_with(
    f: &FrictionProfile,
    uprime: &SampledField,
    tol: Tolerances,
) -> Result<SampledField> {
    require_unit_domain(f)?;
    if !f.is_lipschitz() {
        return Err(Error::Unsupported(
            "friction with jumps has a nontrivial kernel; the zero-mass solution is not unique".into(),
        ));
    }
    let grid = uprime.grid().clone();
    let tau = tau(f, &grid)?;
    let t0 = t0_from_tau(&tau, &grid, tol.mass)?;
    let t = inversion(&tau, &t0, uprime)?;
    let scale = uprime.values().iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let mass = t.integrate();
    if !(mass.abs() <= tol.mass * scale) {
        return Err(Error::Accuracy {
            what: "mass of the inversion formula".into(),
            measured: mass,
            tolerance: tol.mass * scale,
        });
    }
    let res = carleman_residual(f, &t, uprime)?;
    if !(res <= tol.residual * scale) {
        return Err(Error::Accuracy {
            what: "Carleman residual of the inversion formula".into(),
            measured: res,
            tolerance: tol.residual * scale,
        });
    }
    Ok(t)
}

/// `sqrt(1 - x^2) e^-tau u' / sqrt(1 + f^2)` at the grid nodes, with its end
/// behaviour `(1 + x)^(1/2 - c_lo) (1 - x)^(1/2 - c_hi)` declared.
pub(crate) fn weighted_rhs(tau: &TauField, uprime: &SampledField) -> Result<SampledField> {
    let grid = uprime.grid().clone();
    let f = tau.profile();
    let nodes = grid.nodes();
    let reg = tau
        .smooth_part()
        .ok_or_else(|| Error::InvalidInput("tau has no samples on this grid".into()))?;
    if reg.grid().as_ref() != grid.as_ref() {
        return Err(Error::InvalidInput("tau sampled on a different grid".into()));
    }
    let (c_lo, c_hi) = tau.end_coefficients();
    let hv: Vec<f64> = (0..grid.size())
        .map(|k| {
            let x = nodes[k];
            let fx = f.eval(x);
            (1.0 + x).powf(0.5 - c_lo) * (1.0 - x).powf(0.5 - c_hi) * (-reg.values()[k]).exp()
                * uprime.values()[k]
                / (1.0 + fx * fx).sqrt()
        })
        .collect();
    let mut breaks = profile_breaks(f);
    breaks.extend_from_slice(uprime.breaks());
    SampledField::structured(grid, hv, Some((c_lo - 0.5, c_hi - 0.5)), Vec::new(), breaks)?
        .with_kink_logs(kink_logs(f, -1.0))
}

/// The inversion formula without postcondition checks.
pub(crate) fn inversion(tau: &TauField, t0: &SampledField, uprime: &SampledField) -> Result<SampledField> {
    let grid = uprime.grid().clone();
    if uprime.values().iter().all(|&v| v == 0.0) {
        return t0.with_values(vec![0.0; grid.size()]);
    }
    let f = tau.profile();
    let nodes = grid.nodes();
    let h = weighted_rhs(tau, uprime)?;
    let hh = hilbert_at_nodes(&h)?;
    let values = (0..grid.size())
        .map(|k| {
            let fx = f.eval(nodes[k]);
            let up = uprime.values()[k];
            fx * up / (1.0 + fx * fx) - PI * hh[k] * t0.values()[k]
        })
        .collect();
    let (bm, bp) = t0.singular_exponents().unwrap_or((0.5, 0.5));
    SampledField::structured(grid, values, Some((bm, bp)), Vec::new(), h.breaks().to_vec())
}

/// `phi_+-(z) = (1/pi) int (+-pi/2 + arctan f(s)) / (s - z) ds`.
pub fn phi_pm(f: &FrictionProfile, z: Complex64) -> (Complex64, Complex64) {
    let (lo, hi) = f.domain();
    let log_term = (Complex64::new(hi, 0.0) - z).ln() - (Complex64::new(lo, 0.0) - z).ln();
    let mut acc = Complex64::new(0.0, 0.0);
    let mut rule = Rule::new();
    for (a, b) in f.panels() {
        for w in subdivide(a, b, TAU_PANEL).windows(2) {
            push_toward(&mut rule, w[0], w[1], z.re, 0.25 * z.im, 16);
        }
    }
    for (&s, &w) in rule.nodes.iter().zip(&rule.weights) {
        acc += w * f.eval(s).atan() / (s - z);
    }
    let base = acc / PI;
    (base + 0.5 * log_term, base - 0.5 * log_term)
}

/// Gauss–Legendre panels on `[a, b]` graded geometrically toward `x0`
/// (clamped to the panel) down to width `min_w`.
fn push_toward(rule: &mut Rule, a: f64, b: f64, x0: f64, min_w: f64, n: usize) {
    let c = x0.clamp(a, b);
    let dist = if x0 < a { a - x0 } else if x0 > b { x0 - b } else { 0.0 };
    if dist >= b - a {
        rule.push_legendre(a, b, n);
        return;
    }
    let floor = min_w.max(dist).max(1e-14);
    for (lo, hi, toward_hi) in [(a, c, true), (c, b, false)] {
        let mut outer = hi - lo;
        while outer > 2.0 * floor {
            let inner = 0.5 * outer;
            if toward_hi {
                rule.push_legendre(hi - outer, hi - inner, n);
            } else {
                rule.push_legendre(lo + inner, lo + outer, n);
            }
            outer = inner;
        }
        if outer > 0.0 {
            if toward_hi {
                rule.push_legendre(hi - outer, hi, n);
            } else {
                rule.push_legendre(lo, lo + outer, n);
            }
        }
    }
}

/// Largest discrepancy between the Cauchy integral of `t0` and
/// `(e^phi+ - e^phi-) / (2 pi)` over `z_list`.
pub fn psi_pm_crosscheck(f: &FrictionProfile, grid: &Arc<QuadGrid>, z_list: &[Complex64]) -> Result<f64> {
    if let Some(z) = z_list.iter().find(|z| !(z.im >= 0.01)) {
        return Err(Error::Domain(format!("cross-check needs Im z >= 0.01 (got {z})")));
    }
    let t0 = t0(f, grid)?;
    z_list
        .par_iter()
        .map(|&z| {
            let lhs = cauchy_upper(&t0, z)?;
            let (pp, pm) = phi_pm(f, z);
            let rhs = (pp.exp() - pm.exp()) / (2.0 * PI);
            Ok((lhs - rhs).norm())
        })
        .try_reduce(|| 0.0, |a, b| Ok(a.max(b)))
}

/// Discrete `L^p` norm `(int |t|^p)^(1/p)` honouring the singular structure.
pub fn lp_norm(t: &SampledField, p: f64) -> Result<f64> {
    if !(p >= 1.0) {
        return Err(Error::InvalidInput(format!("L^p norm needs p >= 1 (got {p})")));
    }
    let values = t.values().iter().map(|v| v.abs().powf(p)).collect();
    let exps = t.singular_exponents().map(|(a, b)| (p * a, p * b));
    if let Some((a, b)) = exps {
        if a >= 1.0 || b >= 1.0 {
            return Err(Error::Domain(format!("|t|^{p} is not integrable at the ends")));
        }
    }
    let powers: Vec<(f64, f64)> = t.interior_powers().iter().map(|&(x, e)| (x, p * e)).collect();
    if powers.iter().any(|&(_, e)| e <= -1.0) {
        return Err(Error::Domain(format!("|t|^{p} is not integrable at a jump")));
    }
    let logs = t.kink_logs().iter().map(|&(x, c)| (x, p * c)).collect();
    let field =
        SampledField::structured(t.grid().clone(), values, exps, powers, t.breaks().to_vec())?.with_kink_logs(logs)?;
    Ok(field.integrate().powf(1.0 / p))
}

/// Integral of `t` over every grid cell.
pub fn cell_masses(t: &SampledField) -> Vec<f64> {
    let e = t.grid().edges().to_vec();
    (0..t.grid().size())
        .into_par_iter()
        .map(|k| t.integrate_over(e[k], e[k + 1], |_| 1.0))
        .collect()
}
