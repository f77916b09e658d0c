//! Principal-value Hilbert transforms, Poisson and Cauchy integrals of fields
//! sampled on (-1, 1).
//!
//! Conventions: `H[f](x) = (1/pi) pv int f(s) / (s - x) ds`, the Poisson
//! integral is `(1/pi) int y f(s) / ((x - s)^2 + y^2) ds` and the Cauchy
//! integral is `(1/pi) int f(s) / (s - z) ds`.
//!
//! Plain fields go through the grid rule with singularity subtraction.
//! Fields with declared singular structure go through product integration:
//! the field is written `v = Omega * r` with `Omega` the product of declared
//! powers, `r` is interpolated by local cubics between nodes, and the fine
//! rule is graded toward every declared power.

use crate::error::{Error, Result};
use crate::quad::{push_graded, End, Grading, Rule};
use num_complex::Complex64;
use rayon::prelude::*;
use std::f64::consts::PI;
use std::fmt;
use std::sync::{Arc, OnceLock};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum GridKind {
    /// Nodes `-cos((2k - 1) pi / 2N)`, weights `pi / N` for the weight
    /// `(1 - x^2)^(-1/2)`.
    ChebyshevGauss,
    /// Cell midpoints of a uniform partition, weights `2 / N`.
    UniformOpen,
}

/// Sample nodes on (-1, 1) with their cells and quadrature weights.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadGrid {
    kind: GridKind,
    nodes: Vec<f64>,
    weights: Vec<f64>,
    dx_weights: Vec<f64>,
    edges: Vec<f64>,
}

impl QuadGrid {
    pub fn new(kind: GridKind, n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidInput(format!("grid needs N >= 2 (got {n})")));
        }
        let nf = n as f64;
        let (nodes, weights, dx_weights, edges) = match kind {
            GridKind::ChebyshevGauss => {
                // sin form keeps the grid exactly antisymmetric
                let nodes: Vec<f64> = (0..n)
                    .map(|i| (PI * (2.0 * i as f64 + 1.0 - nf) / (2.0 * nf)).sin())
                    .collect();
                let edges: Vec<f64> = (0..=n)
                    .map(|k| (PI * (2.0 * k as f64 - nf) / (2.0 * nf)).sin())
                    .collect();
                let half = (PI / (2.0 * nf)).sin();
                let dx: Vec<f64> = (0..n)
                    .map(|i| 2.0 * half * (PI * (2.0 * i as f64 + 1.0) / (2.0 * nf)).sin())
                    .collect();
                (nodes, vec![PI / nf; n], dx, edges)
            }
            GridKind::UniformOpen => {
                let nodes = (0..n).map(|i| -1.0 + (2.0 * i as f64 + 1.0) / nf).collect();
                let edges = (0..=n).map(|k| -1.0 + 2.0 * k as f64 / nf).collect();
                (nodes, vec![2.0 / nf; n], vec![2.0 / nf; n], edges)
            }
        };
        Ok(QuadGrid {
            kind,
            nodes,
            weights,
            dx_weights,
            edges,
        })
    }

    /// Chebyshev–Gauss grid behind an `Arc`. Panics if `n < 2`.
    pub fn chebyshev(n: usize) -> Arc<Self> {
        Arc::new(Self::new(GridKind::ChebyshevGauss, n).expect("N >= 2"))
    }

    /// Uniform open grid behind an `Arc`. Panics if `n < 2`.
    pub fn uniform(n: usize) -> Arc<Self> {
        Arc::new(Self::new(GridKind::UniformOpen, n).expect("N >= 2"))
    }

    pub fn kind(&self) -> GridKind {
        self.kind
    }

    pub fn size(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// Weights of the native rule (for the Chebyshev grid these carry the
    /// `(1 - x^2)^(-1/2)` weight function).
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Cell widths: a plain `dx` rule whose weights sum to 2 exactly.
    pub fn dx_weights(&self) -> &[f64] {
        &self.dx_weights
    }

    /// Cell boundaries `-1 = e_0 < ... < e_N = 1`; node `k` lies in cell `k`.
    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    /// Index of the cell containing `x`, if `x` lies in [-1, 1].
    pub fn cell_of(&self, x: f64) -> Option<usize> {
        if !(-1.0..=1.0).contains(&x) {
            return None;
        }
        let n = self.size();
        Some(self.edges.partition_point(|&e| e <= x).clamp(1, n) - 1)
    }
}

/// Samples of a function at the nodes of a grid, with optional declared
/// singular structure.
#[derive(Clone)]
pub struct SampledField {
    grid: Arc<QuadGrid>,
    values: Vec<f64>,
    singular_exponents: Option<(f64, f64)>,
    interior_powers: Vec<(f64, f64)>,
    breaks: Vec<f64>,
    /// `(x_k, c_k)`: factors `exp(c_k (x - x_k) log|x - x_k|)`.
    kink_logs: Vec<(f64, f64)>,
    derivative: Option<Vec<f64>>,
    engine: OnceLock<Arc<Engine>>,
}

impl fmt::Debug for SampledField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SampledField")
            .field("kind", &self.grid.kind())
            .field("size", &self.grid.size())
            .field("singular_exponents", &self.singular_exponents)
            .field("interior_powers", &self.interior_powers)
            .field("breaks", &self.breaks)
            .field("kink_logs", &self.kink_logs)
            .finish_non_exhaustive()
    }
}

impl SampledField {
    /// Field with no declared singular structure.
    pub fn plain(grid: Arc<QuadGrid>, values: Vec<f64>) -> Result<Self> {
        Self::build(grid, values, None, Vec::new(), Vec::new())
    }

    /// Field behaving like `(1 + x)^(-beta_minus)` and `(1 - x)^(-beta_plus)`
    /// at the ends.
    pub fn singular(grid: Arc<QuadGrid>, values: Vec<f64>, exponents: (f64, f64)) -> Result<Self> {
        Self::build(grid, values, Some(exponents), Vec::new(), Vec::new())
    }

    /// Fully general constructor: `interior_powers` are `(x_i, e_i)` with the
    /// field behaving like `|x - x_i|^(e_i)`; `breaks` are points where the
    /// field may jump or kink.
    pub fn structured(
        grid: Arc<QuadGrid>,
        values: Vec<f64>,
        exponents: Option<(f64, f64)>,
        interior_powers: Vec<(f64, f64)>,
        breaks: Vec<f64>,
    ) -> Result<Self> {
        Self::build(grid, values, exponents, interior_powers, breaks)
    }

    /// Samples `f` at the grid nodes.
    pub fn from_fn(grid: Arc<QuadGrid>, f: impl Fn(f64) -> f64) -> Result<Self> {
        let values = grid.nodes().iter().map(|&x| f(x)).collect();
        Self::plain(grid, values)
    }

    fn build(
        grid: Arc<QuadGrid>,
        values: Vec<f64>,
        exponents: Option<(f64, f64)>,
        mut interior_powers: Vec<(f64, f64)>,
        mut breaks: Vec<f64>,
    ) -> Result<Self> {
        if values.len() != grid.size() {
            return Err(Error::InvalidInput(format!(
                "field has {} values for a grid of {}",
                values.len(),
                grid.size()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("field values must be finite".into()));
        }
        if let Some((bm, bp)) = exponents {
            if !(bm > -1.0 && bm < 1.0 && bp > -1.0 && bp < 1.0) {
                return Err(Error::InvalidInput(format!(
                    "singular exponents ({bm}, {bp}) must lie in (-1, 1)"
                )));
            }
        }
        for &(x, e) in &interior_powers {
            if !(x > -1.0 && x < 1.0) || !(e > -1.0) || !e.is_finite() {
                return Err(Error::InvalidInput(format!(
                    "interior power ({x}, {e}) must sit inside (-1, 1) with exponent > -1"
                )));
            }
        }
        if breaks.iter().any(|&b| !(b > -1.0 && b < 1.0)) {
            return Err(Error::InvalidInput("breaks must lie inside (-1, 1)".into()));
        }
        interior_powers.sort_by(|a, b| a.0.total_cmp(&b.0));
        breaks.sort_by(f64::total_cmp);
        breaks.dedup();
        let field = SampledField {
            grid,
            values,
            singular_exponents: exponents,
            interior_powers,
            breaks,
            kink_logs: Vec::new(),
            derivative: None,
            engine: OnceLock::new(),
        };
        field.check_layout()?;
        Ok(field)
    }

    /// Declares factors `exp(c_k (x - x_k) log|x - x_k|)`, the behaviour of
    /// `exp(tau)` at a kink of `f`. Each `x_k` must be one of the breaks.
    pub fn with_kink_logs(mut self, mut logs: Vec<(f64, f64)>) -> Result<Self> {
        logs.retain(|&(_, c)| c != 0.0);
        for &(x, c) in &logs {
            if !c.is_finite() || !self.breaks.contains(&x) {
                return Err(Error::InvalidInput(format!("kink log ({x}, {c}) must sit on a break")));
            }
        }
        logs.sort_by(|a, b| a.0.total_cmp(&b.0));
        self.kink_logs = logs;
        self.engine = OnceLock::new();
        Ok(self)
    }

    /// Attaches nodal derivative values (subtraction data for node-coincident
    /// evaluation of plain fields).
    pub fn with_derivative(mut self, derivative: Vec<f64>) -> Result<Self> {
        if derivative.len() != self.values.len() {
            return Err(Error::InvalidInput("derivative length mismatch".into()));
        }
        self.derivative = Some(derivative);
        Ok(self)
    }

    /// Attaches derivatives estimated by local quartic differentiation.
    pub fn with_estimated_derivative(self) -> Self {
        let d = self.estimate_derivative();
        SampledField {
            derivative: Some(d),
            ..self
        }
    }

    pub fn grid(&self) -> &Arc<QuadGrid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn singular_exponents(&self) -> Option<(f64, f64)> {
        self.singular_exponents
    }

    pub fn interior_powers(&self) -> &[(f64, f64)] {
        &self.interior_powers
    }

    pub fn breaks(&self) -> &[f64] {
        &self.breaks
    }

    pub fn kink_logs(&self) -> &[(f64, f64)] {
        &self.kink_logs
    }

    pub fn derivative(&self) -> Option<&[f64]> {
        self.derivative.as_deref()
    }

    /// True when no singular structure is declared.
    pub fn is_plain(&self) -> bool {
        self.singular_exponents.is_none() && self.interior_powers.is_empty() && self.breaks.is_empty()
    }

    /// Same structure, new values.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        let mut out = Self::build(
            self.grid.clone(),
            values,
            self.singular_exponents,
            self.interior_powers.clone(),
            self.breaks.clone(),
        )?;
        out.kink_logs = self.kink_logs.clone();
        Ok(out)
    }

    /// Pointwise map of the samples, keeping the declared structure.
    pub fn map(&self, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        let v = self
            .grid
            .nodes()
            .iter()
            .zip(&self.values)
            .map(|(&x, &v)| f(x, v))
            .collect();
        self.with_values(v)
    }

    fn engine(&self) -> &Engine {
        self.engine.get_or_init(|| Arc::new(Engine::build(self)))
    }

    /// Value at an arbitrary point of (-1, 1), interpolated from the samples.
    pub fn eval(&self, x: f64) -> f64 {
        self.engine().value(x)
    }

    /// Integral over (-1, 1).
    pub fn integrate(&self) -> f64 {
        self.integrate_with(|_| 1.0)
    }

    /// Integral of `field * phi` over (-1, 1).
    pub fn integrate_with(&self, phi: impl Fn(f64) -> f64) -> f64 {
        let e = self.engine();
        e.s.iter()
            .zip(&e.w)
            .zip(&e.fv)
            .map(|((&s, &w), &f)| w * f * phi(s))
            .sum()
    }

    /// Integral of `field * phi` over `[a, b]` inside [-1, 1].
    pub fn integrate_over(&self, a: f64, b: f64, phi: impl Fn(f64) -> f64) -> f64 {
        self.points_on(a, b).iter().map(|&(s, w, f)| w * f * phi(s)).sum()
    }

    /// Quadrature points `(s, w, field(s))` on `[a, b]`, graded toward the
    /// field's singular points.
    pub fn points_on(&self, a: f64, b: f64) -> Vec<(f64, f64, f64)> {
        self.engine().points_on(a.max(-1.0), b.min(1.0))
    }

    /// Discrete L2 norm `(sum dx_k v_k^2)^(1/2)`.
    pub fn l2_norm(&self) -> f64 {
        self.grid
            .dx_weights()
            .iter()
            .zip(&self.values)
            .map(|(w, v)| w * v * v)
            .sum::<f64>()
            .sqrt()
    }

    fn check_layout(&self) -> Result<()> {
        let (cuts, _) = self.cuts();
        let nodes = self.grid.nodes();
        for q in 0..cuts.len() - 1 {
            let (lo, hi) = (cuts[q], cuts[q + 1]);
            if nodes.iter().any(|&x| x == lo || x == hi) {
                return Err(Error::QuadratureDegeneracy(format!(
                    "grid node coincides with singular point {}",
                    if nodes.contains(&lo) { lo } else { hi }
                )));
            }
            if !nodes.iter().any(|&x| x > lo && x < hi) {
                return Err(Error::QuadratureDegeneracy(format!(
                    "no grid node inside ({lo}, {hi}); refine the grid"
                )));
            }
        }
        Ok(())
    }

    /// Singular points (ends, interior powers, breaks) with their exponents.
    fn cuts(&self) -> (Vec<f64>, Vec<f64>) {
        let (bm, bp) = self.singular_exponents.unwrap_or((0.0, 0.0));
        let mut pts: Vec<(f64, f64)> = self.interior_powers.clone();
        for &b in &self.breaks {
            if !pts.iter().any(|p| p.0 == b) {
                pts.push((b, 0.0));
            }
        }
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut cuts = vec![-1.0];
        let mut exps = vec![-bm];
        for (x, e) in pts {
            if x == *cuts.last().unwrap() {
                *exps.last_mut().unwrap() += e;
            } else {
                cuts.push(x);
                exps.push(e);
            }
        }
        cuts.push(1.0);
        exps.push(-bp);
        (cuts, exps)
    }

    fn estimate_derivative(&self) -> Vec<f64> {
        let nodes = self.grid.nodes();
        let n = nodes.len();
        let m = 5.min(n);
        (0..n)
            .map(|j| {
                let start = j.saturating_sub(2).min(n - m);
                lagrange_derivative(&nodes[start..start + m], &self.values[start..start + m], j - start)
            })
            .collect()
    }

    /// Grid-rule principal value with singularity subtraction (plain fields).
    fn grid_rule_hilbert(&self, x: f64) -> Result<f64> {
        let nodes = self.grid.nodes();
        let dx = self.grid.dx_weights();
        if x == -1.0 || x == 1.0 {
            return Err(Error::QuadratureDegeneracy(format!(
                "evaluation at the interval end {x}"
            )));
        }
        let inside = x > -1.0 && x < 1.0;
        let j = nearest(nodes, x);
        let coincident = inside && (nodes[j] - x).abs() <= 1e-13 * x.abs().max(1.0);
        let c = if coincident {
            self.values[j]
        } else {
            self.engine().value(x.clamp(-1.0, 1.0))
        };
        let mut sum = 0.0;
        for k in 0..nodes.len() {
            if coincident && k == j {
                let d = self.derivative.as_ref().ok_or_else(|| {
                    Error::QuadratureDegeneracy(format!(
                        "evaluation point {x} coincides with a grid node and the field has no derivative data"
                    ))
                })?;
                sum += dx[k] * d[k];
            } else {
                sum += dx[k] * (self.values[k] - c) / (nodes[k] - x);
            }
        }
        sum += c * ((1.0 - x) / (1.0 + x)).abs().ln();
        Ok(sum / PI)
    }

    /// `(1/pi) int v(s) / (s - z) ds`; for `z` real this is the principal value.
    fn cauchy_integral(&self, x0: f64, y: f64) -> Result<Complex64> {
        self.engine().cauchy(x0, y)
    }

    /// Hilbert transform at a single point.
    pub fn hilbert_at(&self, x: f64) -> Result<f64> {
        if !x.is_finite() {
            return Err(Error::Domain(format!("evaluation point {x} is not finite")));
        }
        if self.is_plain() {
            self.grid_rule_hilbert(x)
        } else {
            Ok(self.cauchy_integral(x, 0.0)?.re)
        }
    }
}

fn nearest(nodes: &[f64], x: f64) -> usize {
    let k = nodes.partition_point(|&t| t < x);
    if k == 0 {
        0
    } else if k == nodes.len() {
        k - 1
    } else if (nodes[k] - x).abs() < (x - nodes[k - 1]).abs() {
        k
    } else {
        k - 1
    }
}

fn lagrange(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    let m = xs.len();
    let mut sum = 0.0;
    for i in 0..m {
        let mut l = 1.0;
        for k in 0..m {
            if k != i {
                l *= (x - xs[k]) / (xs[i] - xs[k]);
            }
        }
        sum += l * ys[i];
    }
    sum
}

fn lagrange_derivative(xs: &[f64], ys: &[f64], j: usize) -> f64 {
    let m = xs.len();
    let xj = xs[j];
    let mut sum = 0.0;
    for i in 0..m {
        let d = if i == j {
            (0..m).filter(|&k| k != j).map(|k| 1.0 / (xj - xs[k])).sum::<f64>()
        } else {
            let mut num = 1.0;
            let mut den = 1.0;
            for k in 0..m {
                if k != i {
                    den *= xs[i] - xs[k];
                    if k != j {
                        num *= xj - xs[k];
                    }
                }
            }
            num / den
        };
        sum += d * ys[i];
    }
    sum
}

/// Gauss–Legendre points per regular cell of the fine rule.
const CELL_ORDER: usize = 6;
/// Points per refined panel around a near-real Cauchy pole.
const NEAR_ORDER: usize = 8;
/// Points per panel graded away from a nearby singular point.
const REFINED_ORDER: usize = 8;
/// Grading inside cells that touch a singular point.
const CELL_GRADING: Grading = Grading {
    order: 10,
    ratio: 0.5,
    levels: 6,
};

#[derive(Clone, Copy, Debug, PartialEq)]
enum CellKind {
    Smooth,
    /// Graded toward its left end (a singular point).
    GradedLeft,
    /// Graded toward its right end.
    GradedRight,
}

#[derive(Clone, Debug)]
struct Cell {
    a: f64,
    b: f64,
    piece: usize,
    kind: CellKind,
    start: usize,
    end: usize,
}

/// Product-integration data: the fine rule with field values at its points.
#[derive(Debug)]
struct Engine {
    nodes: Vec<f64>,
    cuts: Vec<f64>,
    cut_exp: Vec<f64>,
    kink_logs: Vec<(f64, f64)>,
    piece_range: Vec<(usize, usize)>,
    ratio: Vec<f64>,
    cells: Vec<Cell>,
    s: Vec<f64>,
    w: Vec<f64>,
    fv: Vec<f64>,
}

impl Engine {
    fn build(field: &SampledField) -> Engine {
        let (cuts, cut_exp) = field.cuts();
        let nodes = field.grid.nodes().to_vec();
        let piece_range = (0..cuts.len() - 1)
            .map(|q| {
                let i0 = nodes.partition_point(|&x| x <= cuts[q]);
                let i1 = nodes.partition_point(|&x| x < cuts[q + 1]) - 1;
                (i0, i1)
            })
            .collect();
        let mut e = Engine {
            nodes,
            cuts,
            cut_exp,
            kink_logs: field.kink_logs.clone(),
            piece_range,
            ratio: Vec::new(),
            cells: Vec::new(),
            s: Vec::new(),
            w: Vec::new(),
            fv: Vec::new(),
        };
        e.ratio = e
            .nodes
            .iter()
            .zip(&field.values)
            .map(|(&x, &v)| v / e.omega(x))
            .collect();
        for q in 0..e.cuts.len() - 1 {
            let (i0, i1) = e.piece_range[q];
            let (p0, p1) = (e.cuts[q], e.cuts[q + 1]);
            let m0 = 0.5 * (p0 + e.nodes[i0]);
            e.push_cell(p0, m0, q, CellKind::GradedLeft);
            e.push_cell(m0, e.nodes[i0], q, CellKind::Smooth);
            for k in i0..i1 {
                e.push_cell(e.nodes[k], e.nodes[k + 1], q, CellKind::Smooth);
            }
            let m1 = 0.5 * (e.nodes[i1] + p1);
            e.push_cell(e.nodes[i1], m1, q, CellKind::Smooth);
            e.push_cell(m1, p1, q, CellKind::GradedRight);
        }
        e
    }

    fn push_cell(&mut self, a: f64, b: f64, piece: usize, kind: CellKind) {
        let mut pts = Vec::new();
        self.cell_points(&mut pts, a, b, piece, kind);
        let start = self.s.len();
        for (s, w, f) in pts {
            self.s.push(s);
            self.w.push(w);
            self.fv.push(f);
        }
        self.cells.push(Cell {
            a,
            b,
            piece,
            kind,
            start,
            end: self.s.len(),
        });
    }

    /// Points `(s, w, v(s))` of the rule for one cell. Graded cells are built
    /// in distance-to-cut coordinates so the singular factor is evaluated
    /// from exact offsets rather than from rounded positions.
    fn cell_points(&self, out: &mut Vec<(f64, f64, f64)>, a: f64, b: f64, piece: usize, kind: CellKind) {
        match kind {
            CellKind::Smooth => {
                let mut rule = Rule::new();
                self.push_smooth(&mut rule, a, b, piece, CELL_ORDER);
                self.extend_points(out, &rule, piece);
            }
            CellKind::GradedLeft | CellKind::GradedRight => {
                let cut = if kind == CellKind::GradedLeft { piece } else { piece + 1 };
                let mut rule = Rule::new();
                push_graded(
                    &mut rule,
                    0.0,
                    b - a,
                    End::power(self.cut_exp[cut]),
                    End::Smooth,
                    CELL_GRADING,
                );
                for (&d, &w) in rule.nodes.iter().zip(&rule.weights) {
                    let s = if kind == CellKind::GradedLeft { a + d } else { b - d };
                    let f = self.omega_near(s, cut, d) * self.ratio_in(piece, s);
                    out.push((s, w, f));
                }
            }
        }
    }

    fn extend_points(&self, out: &mut Vec<(f64, f64, f64)>, rule: &Rule, piece: usize) {
        for (&s, &w) in rule.nodes.iter().zip(&rule.weights) {
            out.push((s, w, self.value_in(piece, s)));
        }
    }

    /// Gauss–Legendre panels on `[a, b]`, refined so that no panel is wider
    /// than its distance to a singular end of the piece.
    fn push_smooth(&self, rule: &mut Rule, a: f64, b: f64, piece: usize, n: usize) {
        let (p0, p1) = (self.cuts[piece], self.cuts[piece + 1]);
        let (e0, e1) = (self.cut_exp[piece], self.cut_exp[piece + 1]);
        let len = b - a;
        let d0 = if e0 != 0.0 { a - p0 } else { f64::INFINITY };
        let d1 = if e1 != 0.0 { p1 - b } else { f64::INFINITY };
        if d0.min(d1) >= 4.0 * len {
            rule.push_legendre(a, b, n);
            return;
        }
        // split at the middle when both ends are close, then grade each half
        if d0 < 4.0 * len && d1 < 4.0 * len {
            let m = 0.5 * (a + b);
            push_away(rule, a, m, p0, true, REFINED_ORDER);
            push_away(rule, m, b, p1, false, REFINED_ORDER);
        } else if d0 < 4.0 * len {
            push_away(rule, a, b, p0, true, REFINED_ORDER);
        } else {
            push_away(rule, a, b, p1, false, REFINED_ORDER);
        }
    }

    fn omega(&self, x: f64) -> f64 {
        self.cuts
            .iter()
            .zip(&self.cut_exp)
            .filter(|(_, &e)| e != 0.0)
            .map(|(&c, &e)| (x - c).abs().powf(e))
            .product::<f64>()
            * self.kink_factor(x)
    }

    fn kink_factor(&self, x: f64) -> f64 {
        if self.kink_logs.is_empty() {
            return 1.0;
        }
        let e: f64 = self
            .kink_logs
            .iter()
            .filter(|&&(k, _)| x != k)
            .map(|&(k, c)| c * (x - k) * (x - k).abs().ln())
            .sum();
        e.exp()
    }

    /// `omega` with the factor of cut `k` taken from the exact distance `d`.
    fn omega_near(&self, x: f64, k: usize, d: f64) -> f64 {
        self.cuts
            .iter()
            .zip(&self.cut_exp)
            .enumerate()
            .filter(|(_, (_, &e))| e != 0.0)
            .map(|(i, (&c, &e))| if i == k { d.powf(e) } else { (x - c).abs().powf(e) })
            .product::<f64>()
            * self.kink_factor(x)
    }

    fn piece_of(&self, x: f64) -> usize {
        let n = self.cuts.len() - 1;
        self.cuts.partition_point(|&c| c <= x).clamp(1, n) - 1
    }

    fn ratio_in(&self, piece: usize, x: f64) -> f64 {
        let (i0, i1) = self.piece_range[piece];
        let count = i1 + 1 - i0;
        let m = count.min(4);
        let k = i0 + self.nodes[i0..=i1].partition_point(|&t| t <= x);
        let start = k.saturating_sub(2).clamp(i0, i1 + 1 - m);
        lagrange(
            &self.nodes[start..start + m],
            &self.ratio[start..start + m],
            x,
        )
    }

    fn value_in(&self, piece: usize, x: f64) -> f64 {
        self.omega(x) * self.ratio_in(piece, x)
    }

    fn value(&self, x: f64) -> f64 {
        self.value_in(self.piece_of(x), x)
    }

    fn cell_index(&self, x: f64) -> usize {
        self.cells.partition_point(|c| c.a <= x).max(1) - 1
    }

    fn is_cut(&self, x: f64) -> bool {
        self.cuts.iter().any(|&c| (c - x).abs() <= 1e-15 * c.abs().max(1.0))
    }

    /// Points `(s, w, v(s))` of a rule on `[a, b]` honouring cells and
    /// singular points.
    fn points_on(&self, a: f64, b: f64) -> Vec<(f64, f64, f64)> {
        let mut out = Vec::new();
        if !(a < b) {
            return out;
        }
        let first = self.cells.partition_point(|c| c.b <= a);
        for c in &self.cells[first..] {
            if c.a >= b {
                break;
            }
            let (lo, hi) = (c.a.max(a), c.b.min(b));
            if lo >= hi {
                continue;
            }
            if lo == c.a && hi == c.b {
                out.extend((c.start..c.end).map(|i| (self.s[i], self.w[i], self.fv[i])));
                continue;
            }
            match c.kind {
                CellKind::GradedLeft if lo == c.a => {
                    self.cell_points(&mut out, lo, hi, c.piece, CellKind::GradedLeft)
                }
                CellKind::GradedRight if hi == c.b => {
                    self.cell_points(&mut out, lo, hi, c.piece, CellKind::GradedRight)
                }
                CellKind::GradedLeft => {
                    let mut rule = Rule::new();
                    push_away(&mut rule, lo, hi, c.a, true, REFINED_ORDER);
                    self.extend_points(&mut out, &rule, c.piece);
                }
                CellKind::GradedRight => {
                    let mut rule = Rule::new();
                    push_away(&mut rule, lo, hi, c.b, false, REFINED_ORDER);
                    self.extend_points(&mut out, &rule, c.piece);
                }
                CellKind::Smooth => {
                    let mut rule = Rule::new();
                    self.push_smooth(&mut rule, lo, hi, c.piece, CELL_ORDER);
                    self.extend_points(&mut out, &rule, c.piece);
                }
            }
        }
        out
    }

    fn direct(&self, cells: std::ops::Range<usize>, z: Complex64) -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for c in &self.cells[cells] {
            for i in c.start..c.end {
                acc += self.w[i] * self.fv[i] / (self.s[i] - z);
            }
        }
        acc
    }

    fn cauchy(&self, x0: f64, y: f64) -> Result<Complex64> {
        let z = Complex64::new(x0, y);
        let all = 0..self.cells.len();
        if !(x0 > -1.0 && x0 < 1.0) {
            if y == 0.0 && (x0 == -1.0 || x0 == 1.0) {
                return Err(Error::QuadratureDegeneracy(format!(
                    "evaluation at the interval end {x0}"
                )));
            }
            return Ok(self.direct(all, z) / PI);
        }
        if self.is_cut(x0) {
            return Err(Error::QuadratureDegeneracy(format!(
                "evaluation at singular point {x0}"
            )));
        }
        let c = self.cell_index(x0);
        let piece = self.cells[c].piece;
        let same = |k: usize| self.cells[k].piece == piece && self.cells[k].kind == CellKind::Smooth;
        let width = |k: usize| self.cells[k].b - self.cells[k].a;
        let mut h_loc = width(c);
        if c > 0 && self.cells[c - 1].piece == piece {
            h_loc = h_loc.max(width(c - 1));
        }
        if c + 1 < self.cells.len() && self.cells[c + 1].piece == piece {
            h_loc = h_loc.max(width(c + 1));
        }
        if y >= 3.0 * h_loc {
            return Ok(self.direct(all, z) / PI);
        }

        // window [wl, wr] around x0 where the local value is subtracted
        let mut direct_extra = Vec::new();
        let mut panels: Vec<(f64, f64)> = Vec::new();
        let cell = &self.cells[c];
        let (mut lo_cell, mut hi_cell) = (c, c);
        match cell.kind {
            CellKind::GradedLeft => {
                let split = cell.a + 0.5 * (x0 - cell.a);
                self.cell_points(&mut direct_extra, cell.a, split, piece, CellKind::GradedLeft);
                panels.push((split, x0));
                panels.push((x0, cell.b));
            }
            CellKind::GradedRight => {
                let split = x0 + 0.5 * (cell.b - x0);
                if x0 > cell.a {
                    panels.push((cell.a, x0));
                }
                panels.push((x0, split));
                self.cell_points(&mut direct_extra, split, cell.b, piece, CellKind::GradedRight);
            }
            CellKind::Smooth => {
                if x0 > cell.a {
                    panels.push((cell.a, x0));
                }
                panels.push((x0, cell.b));
            }
        }
        // extend by up to two smooth cells on each side within the piece
        for _ in 0..2 {
            if lo_cell > 0 && same(lo_cell - 1) && (cell.kind != CellKind::GradedLeft) {
                lo_cell -= 1;
                let k = &self.cells[lo_cell];
                panels.insert(0, (k.a, k.b));
            }
            if hi_cell + 1 < self.cells.len() && same(hi_cell + 1) && (cell.kind != CellKind::GradedRight)
            {
                hi_cell += 1;
                let k = &self.cells[hi_cell];
                panels.push((k.a, k.b));
            }
        }
        let wl = panels.first().unwrap().0;
        let wr = panels.last().unwrap().1;

        let mut sub = Rule::new();
        for &(a, b) in &panels {
            if y > 0.0 && (a == x0 || b == x0) {
                for (p, q) in toward(a, b, b == x0, 0.5 * y) {
                    self.push_smooth(&mut sub, p, q, piece, NEAR_ORDER);
                }
            } else {
                self.push_smooth(&mut sub, a, b, piece, CELL_ORDER);
            }
        }
        let v0 = self.value_in(piece, x0);
        let mut acc = self.direct(0..lo_cell, z) + self.direct(hi_cell + 1..self.cells.len(), z);
        for &(s, w, f) in &direct_extra {
            acc += w * f / (s - z);
        }
        for (&s, &w) in sub.nodes.iter().zip(&sub.weights) {
            acc += w * (self.value_in(piece, s) - v0) / (s - z);
        }
        let log_term = if y == 0.0 {
            Complex64::new(((wr - x0) / (x0 - wl)).ln(), 0.0)
        } else {
            (Complex64::new(wr, 0.0) - z).ln() - (Complex64::new(wl, 0.0) - z).ln()
        };
        acc += v0 * log_term;
        Ok(acc / PI)
    }
}

/// Panels on `[a, b]` whose widths never exceed half their distance to the
/// singular point `c` (lying left of `a` when `left` is set, else right of `b`).
fn push_away(rule: &mut Rule, a: f64, b: f64, c: f64, left: bool, n: usize) {
    if left {
        let mut p = a;
        while p < b {
            let d = p - c;
            let q = if d > 0.0 { (p + 0.5 * d).min(b) } else { b };
            let q = if b - q < 0.25 * (q - p) { b } else { q };
            rule.push_legendre(p, q, n);
            p = q;
        }
    } else {
        let mut q = b;
        while q > a {
            let d = c - q;
            let p = if d > 0.0 { (q - 0.5 * d).max(a) } else { a };
            let p = if p - a < 0.25 * (q - p) { a } else { p };
            rule.push_legendre(p, q, n);
            q = p;
        }
    }
}

/// Panels of `[a, b]` refined geometrically toward one end down to width
/// `min_w`.
fn toward(a: f64, b: f64, toward_right: bool, min_w: f64) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    let mut outer = b - a;
    while outer > 2.0 * min_w && outer > 1e-14 {
        let inner = 0.25 * outer;
        out.push(if toward_right {
            (b - outer, b - inner)
        } else {
            (a + inner, a + outer)
        });
        outer = inner;
    }
    out.push(if toward_right { (b - outer, b) } else { (a, a + outer) });
    out
}

/// `H[f](x) = -(1/pi) pv int f(s) / (x - s) ds` at each evaluation point,
/// with `f` extended by zero outside (-1, 1).
pub fn hilbert_line(f: &SampledField, eval_points: &[f64]) -> Result<Vec<f64>> {
    eval_points.par_iter().map(|&x| f.hilbert_at(x)).collect()
}

/// Hilbert transform at every grid node, as a plain field.
pub fn hilbert_at_nodes(f: &SampledField) -> Result<Vec<f64>> {
    let f = if f.is_plain() && f.derivative.is_none() {
        std::borrow::Cow::Owned(f.clone().with_estimated_derivative())
    } else {
        std::borrow::Cow::Borrowed(f)
    };
    hilbert_line(&f, f.grid.nodes())
}

/// Poisson integral of the field (extended by zero) at `(x, y)`, `y > 0`.
pub fn poisson_extend(u: &SampledField, x: f64, y: f64) -> Result<f64> {
    if !(y > 0.0) || !x.is_finite() || !y.is_finite() {
        return Err(Error::Domain(format!("Poisson integral needs y > 0 (got {y})")));
    }
    Ok(u.cauchy_integral(x, y)?.im)
}

/// Smallest imaginary part accepted by [`cauchy_upper`].
pub const CAUCHY_MIN_IM: f64 = 1e-3;

/// `(1/pi) int t(s) / (s - z) ds` for `z` in the upper half-plane.
pub fn cauchy_upper(t: &SampledField, z: Complex64) -> Result<Complex64> {
    if !(z.im >= CAUCHY_MIN_IM) || !z.re.is_finite() || !z.im.is_finite() {
        return Err(Error::Domain(format!(
            "Cauchy integral needs Im z >= {CAUCHY_MIN_IM} (got {})",
            z.im
        )));
    }
    t.cauchy_integral(z.re, z.im)
}

/// Nodes strictly inside the support hull of the field, away from its ends.
fn support_interior(f: &SampledField) -> Vec<usize> {
    let v = f.values();
    let first = v.iter().position(|&x| x != 0.0);
    let last = v.iter().rposition(|&x| x != 0.0);
    match (first, last) {
        (Some(a), Some(b)) if b >= a + 4 => (a + 2..=b - 2).collect(),
        _ => Vec::new(),
    }
}

fn weighted_norm(grid: &QuadGrid, idx: &[usize], r: impl Fn(usize) -> f64) -> f64 {
    let dx = grid.dx_weights();
    idx.iter().map(|&j| dx[j] * r(j).powi(2)).sum::<f64>().sqrt()
}

/// Discrete L2 norm of `H[H[f]] + f` on the interior of the support of `f`.
///
/// The outer transform runs over the whole line: on |s| > 1 the inner
/// transform is evaluated directly and integrated in `u = 1/s`.
pub fn hilbert_involution_residual(f: &SampledField) -> Result<f64> {
    let idx = support_interior(f);
    if idx.is_empty() {
        return Ok(0.0);
    }
    let grid = f.grid().clone();
    let g_in = hilbert_at_nodes(f)?;
    let g = SampledField::plain(grid.clone(), g_in)?.with_estimated_derivative();

    // tail rule in u on [0, 1], graded toward u = 1 (s = +-1)
    let mut tail = Rule::new();
    push_graded(&mut tail, 0.0, 1.0, End::Smooth, End::power(0.0), Grading::FINE);
    let right: Vec<f64> = tail
        .nodes
        .par_iter()
        .map(|&u| f.hilbert_at(1.0 / u))
        .collect::<Result<_>>()?;
    let left: Vec<f64> = tail
        .nodes
        .par_iter()
        .map(|&u| f.hilbert_at(-1.0 / u))
        .collect::<Result<_>>()?;

    let nodes = grid.nodes();
    let res: Vec<f64> = idx
        .par_iter()
        .map(|&j| {
            let x = nodes[j];
            let inner = g.hilbert_at(x)?;
            // int_1^inf g(s)/(s-x) ds = int_0^1 g(1/u) / (u (1 - x u)) du
            // int_-inf^-1 g(s)/(s-x) ds = -int_0^1 g(-1/u) / (u (1 + x u)) du
            let mut outer = 0.0;
            for (k, (&u, &w)) in tail.nodes.iter().zip(&tail.weights).enumerate() {
                outer += w * right[k] / (u * (1.0 - x * u));
                outer -= w * left[k] / (u * (1.0 + x * u));
            }
            Ok(inner + outer / PI + f.values()[j])
        })
        .collect::<Result<_>>()?;
    let pos: std::collections::HashMap<usize, usize> =
        idx.iter().enumerate().map(|(i, &j)| (j, i)).collect();
    Ok(weighted_norm(&grid, &idx, |j| res[pos[&j]]))
}

/// Interior band used by [`pbt_residual`].
pub const PBT_INTERIOR: f64 = 0.9;

/// Discrete norm on `|x| <= 0.9` of
/// `H[H[f1] f2 + f1 H[f2]] - (H[f1] H[f2] - f1 f2)`.
pub fn pbt_residual(f1: &SampledField, f2: &SampledField) -> Result<f64> {
    if !Arc::ptr_eq(f1.grid(), f2.grid()) && f1.grid() != f2.grid() {
        return Err(Error::InvalidInput("fields live on different grids".into()));
    }
    let grid = f1.grid().clone();
    let a = hilbert_at_nodes(f1)?;
    let b = hilbert_at_nodes(f2)?;
    let (v1, v2) = (f1.values(), f2.values());
    let c: Vec<f64> = (0..grid.size()).map(|k| a[k] * v2[k] + v1[k] * b[k]).collect();
    let e1 = f1.singular_exponents().unwrap_or((0.0, 0.0));
    let e2 = f2.singular_exponents().unwrap_or((0.0, 0.0));
    let (sm, sp) = (e1.0 + e2.0, e1.1 + e2.1);
    let cf = if sm > 0.0 || sp > 0.0 {
        SampledField::singular(grid.clone(), c, (sm.max(0.0).min(0.99), sp.max(0.0).min(0.99)))?
    } else {
        SampledField::plain(grid.clone(), c)?
    };
    let hc = hilbert_at_nodes(&cf)?;
    let idx: Vec<usize> = (0..grid.size())
        .filter(|&k| grid.nodes()[k].abs() <= PBT_INTERIOR)
        .collect();
    Ok(weighted_norm(&grid, &idx, |k| hc[k] - (a[k] * b[k] - v1[k] * v2[k])))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bump(x: f64) -> f64 {
        let r = x / 0.8;
        if r.abs() < 1.0 {
            (1.0 - r * r).powi(3)
        } else {
            0.0
        }
    }

    #[test]
    fn chebyshev_grid_cells_sum_to_two() {
        for n in [16, 17, 100, 2048] {
            let g = QuadGrid::chebyshev(n);
            let s: f64 = g.dx_weights().iter().sum();
            assert!((s - 2.0).abs() < 1e-12);
            assert!(g.nodes().windows(2).all(|w| w[0] < w[1]));
            assert!(g.nodes().iter().all(|&x| x > -1.0 && x < 1.0));
            for (k, &x) in g.nodes().iter().enumerate() {
                assert!(g.edges()[k] < x && x < g.edges()[k + 1]);
            }
        }
    }

    #[test]
    fn chebyshev_weights_integrate_polynomials() {
        let g = QuadGrid::chebyshev(32);
        // int x^4 / sqrt(1 - x^2) dx = 3 pi / 8
        let s: f64 = g
            .nodes()
            .iter()
            .zip(g.weights())
            .map(|(&x, &w)| w * x.powi(4))
            .sum();
        assert!((s - 3.0 * PI / 8.0).abs() < 1e-13);
    }

    #[test]
    fn hilbert_of_indicator() {
        let g = QuadGrid::chebyshev(256);
        let f = SampledField::from_fn(g, |_| 1.0).unwrap();
        let pts = [-0.7, -0.1, 0.33, 0.9];
        let h = hilbert_line(&f, &pts).unwrap();
        for (x, v) in pts.iter().zip(h) {
            let exact = ((1.0 - x) / (1.0 + x)).ln() / PI;
            assert!((v - exact).abs() < 1e-12, "{x}: {v} vs {exact}");
        }
    }

    #[test]
    fn node_coincidence_needs_subtraction_data() {
        let g = QuadGrid::chebyshev(64);
        let f = SampledField::from_fn(g.clone(), bump).unwrap();
        let x = g.nodes()[20];
        assert!(matches!(
            hilbert_line(&f, &[x]),
            Err(Error::QuadratureDegeneracy(_))
        ));
        let f = f.with_estimated_derivative();
        assert!(hilbert_line(&f, &[x]).is_ok());
    }

    #[test]
    fn hilbert_of_semicircle_product_rule() {
        let g = QuadGrid::chebyshev(512);
        let v = g.nodes().iter().map(|&x| (1.0 - x * x).sqrt()).collect();
        let f = SampledField::singular(g.clone(), v, (-0.5, -0.5)).unwrap();
        let mut pts: Vec<f64> = g.nodes().iter().step_by(37).copied().collect();
        pts.extend([-0.999, 0.123, 0.5]);
        let h = hilbert_line(&f, &pts).unwrap();
        for (x, v) in pts.iter().zip(h) {
            assert!((v + x).abs() < 1e-9, "{x}: {v}");
        }
        // outside: -x + sgn(x) sqrt(x^2 - 1)
        for x in [1.5, -3.0, 1.01] {
            let v = f.hilbert_at(x).unwrap();
            let exact = -x + x.signum() * (x * x - 1.0f64).sqrt();
            assert!((v - exact).abs() < 1e-9, "{x}: {v} vs {exact}");
        }
    }

    #[test]
    fn hilbert_of_arcsine_density_vanishes() {
        let g = QuadGrid::chebyshev(256);
        let v = g.nodes().iter().map(|&x| 1.0 / ((1.0 - x) * (1.0 + x)).sqrt()).collect();
        let f = SampledField::singular(g.clone(), v, (0.5, 0.5)).unwrap();
        let h = hilbert_line(&f, g.nodes()).unwrap();
        let worst = h.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(worst < 1e-9, "{worst}");
        assert!((f.integrate() - PI).abs() < 1e-10);
    }

    #[test]
    fn poisson_of_indicator_and_harmonicity() {
        let g = QuadGrid::chebyshev(512);
        let f = SampledField::from_fn(g, |_| 1.0).unwrap();
        for &(x, y) in &[(0.0, 0.5), (0.7, 0.01), (-0.95, 1e-3), (2.0, 0.3)] {
            let v = poisson_extend(&f, x, y).unwrap();
            let exact = (((1.0 - x) / y).atan() + ((1.0 + x) / y).atan()) / PI;
            assert!((v - exact).abs() < 1e-10, "({x},{y}): {v} vs {exact}");
        }
        assert!(matches!(poisson_extend(&f, 0.0, 0.0), Err(Error::Domain(_))));
    }

    #[test]
    fn cauchy_of_arcsine_density() {
        // (1/pi) int 1/(pi sqrt(1-s^2)) / (s - z) ds = -1/(pi sqrt(z^2 - 1)) (branch ~ z at infinity)
        let g = QuadGrid::chebyshev(512);
        let v = g.nodes().iter().map(|&x| 1.0 / (PI * ((1.0 - x) * (1.0 + x)).sqrt())).collect();
        let f = SampledField::singular(g, v, (0.5, 0.5)).unwrap();
        for z in [Complex64::new(0.0, 1.0), Complex64::new(0.4, 0.01), Complex64::new(-0.9, 2e-3)] {
            let c = cauchy_upper(&f, z).unwrap();
            let root = (z - 1.0).sqrt() * (z + 1.0).sqrt();
            let exact = -1.0 / (PI * root);
            assert!((c - exact).norm() < 1e-9, "{z}: {c} vs {exact}");
        }
        assert!(cauchy_upper(&f, Complex64::new(0.0, 1e-4)).is_err());
    }

    #[test]
    fn involution_of_bump() {
        let g = QuadGrid::chebyshev(1024);
        let f = SampledField::from_fn(g, bump).unwrap();
        let r = hilbert_involution_residual(&f).unwrap();
        assert!(r < 1e-5 * f.l2_norm(), "{r}");
    }
}
