//! Piecewise-Lipschitz friction coefficients.
//!
//! A profile is a list of breakpoints and one [`Piece`] per interval. Each
//! piece evaluates `gain * shape(scale * x + shift)`, so tiling, rescaling and
//! remapping never touch the underlying shape data.

use crate::error::{Error, Result};
use crate::quad::{subdivide, Rule};

/// Functional form of a piece, in its own argument `y`.
#[derive(Clone, Debug, PartialEq)]
pub enum Shape {
    Constant(f64),
    /// `sum_k c[k] y^k`
    Polynomial(Vec<f64>),
    /// `mean + amplitude * sin(wavenumber * y + phase)`
    Sine {
        mean: f64,
        amplitude: f64,
        wavenumber: f64,
        phase: f64,
    },
    /// Linear interpolation through `(nodes[i], values[i])`, constant beyond.
    Tabulated { nodes: Vec<f64>, values: Vec<f64> },
}

impl Shape {
    fn eval(&self, y: f64) -> f64 {
        match self {
            Shape::Constant(c) => *c,
            Shape::Polynomial(c) => c.iter().rev().fold(0.0, |acc, &ck| acc * y + ck),
            Shape::Sine {
                mean,
                amplitude,
                wavenumber,
                phase,
            } => mean + amplitude * (wavenumber * y + phase).sin(),
            Shape::Tabulated { nodes, values } => {
                let n = nodes.len();
                if y <= nodes[0] {
                    return values[0];
                }
                if y >= nodes[n - 1] {
                    return values[n - 1];
                }
                let i = nodes.partition_point(|&t| t <= y).clamp(1, n - 1);
                let (x0, x1) = (nodes[i - 1], nodes[i]);
                let s = (y - x0) / (x1 - x0);
                values[i - 1] * (1.0 - s) + values[i] * s
            }
        }
    }

    fn deriv(&self, y: f64) -> f64 {
        match self {
            Shape::Constant(_) => 0.0,
            Shape::Polynomial(c) => c
                .iter()
                .enumerate()
                .skip(1)
                .rev()
                .fold(0.0, |acc, (k, &ck)| acc * y + k as f64 * ck),
            Shape::Sine {
                amplitude,
                wavenumber,
                phase,
                ..
            } => amplitude * wavenumber * (wavenumber * y + phase).cos(),
            Shape::Tabulated { nodes, values } => {
                let n = nodes.len();
                if y < nodes[0] || y > nodes[n - 1] {
                    return 0.0;
                }
                let i = nodes.partition_point(|&t| t <= y).clamp(1, n - 1);
                (values[i] - values[i - 1]) / (nodes[i] - nodes[i - 1])
            }
        }
    }
}

/// One interval of a profile: `gain * shape(scale * x + shift)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Piece {
    pub shape: Shape,
    pub scale: f64,
    pub shift: f64,
    pub gain: f64,
}

impl Piece {
    pub fn new(shape: Shape) -> Self {
        Piece {
            shape,
            scale: 1.0,
            shift: 0.0,
            gain: 1.0,
        }
    }

    pub fn constant(c: f64) -> Self {
        Piece::new(Shape::Constant(c))
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.gain * self.shape.eval(self.scale * x + self.shift)
    }

    pub fn deriv(&self, x: f64) -> f64 {
        self.gain * self.scale * self.shape.deriv(self.scale * x + self.shift)
    }

    pub fn is_constant(&self) -> bool {
        match &self.shape {
            Shape::Constant(_) => true,
            Shape::Polynomial(c) => c.iter().skip(1).all(|&v| v == 0.0),
            Shape::Sine { amplitude, .. } => *amplitude == 0.0,
            Shape::Tabulated { values, .. } => values.iter().all(|&v| v == values[0]),
        }
    }

    /// Composes the argument map with `x -> a * x + b`.
    fn compose(&self, a: f64, b: f64) -> Piece {
        Piece {
            shape: self.shape.clone(),
            scale: self.scale * a,
            shift: self.scale * b + self.shift,
            gain: self.gain,
        }
    }

    /// Interior kinks of the piece on `[lo, hi]`, in `x`.
    fn kinks(&self, lo: f64, hi: f64) -> Vec<f64> {
        match &self.shape {
            Shape::Tabulated { nodes, .. } if self.scale != 0.0 => nodes
                .iter()
                .map(|&y| (y - self.shift) / self.scale)
                .filter(|&x| x > lo && x < hi)
                .collect(),
            _ => Vec::new(),
        }
    }

    /// Panel width resolving the oscillation of the piece.
    fn panel_width(&self) -> f64 {
        match &self.shape {
            Shape::Sine {
                wavenumber,
                amplitude,
                ..
            } if *amplitude != 0.0 => {
                let k = (wavenumber * self.scale).abs();
                if k > 0.0 {
                    std::f64::consts::PI / k
                } else {
                    f64::INFINITY
                }
            }
            _ => f64::INFINITY,
        }
    }
}

/// Tolerance under which one-sided limits count as equal.
pub const CONTINUITY_TOL: f64 = 1e-12;

/// Piecewise-Lipschitz coefficient on `[x_0, x_n]` (normally `[-1, 1]`).
#[derive(Clone, Debug, PartialEq)]
pub struct FrictionProfile {
    breakpoints: Vec<f64>,
    pieces: Vec<Piece>,
    lipschitz_bound: Vec<f64>,
    sup_norm: f64,
}

impl FrictionProfile {
    /// Builds a profile on `[-1, 1]`.
    pub fn new(breakpoints: Vec<f64>, pieces: Vec<Piece>) -> Result<Self> {
        let (lo, hi) = (breakpoints.first(), breakpoints.last());
        if lo != Some(&-1.0) || hi != Some(&1.0) {
            return Err(Error::InvalidInput(
                "breakpoints must start at -1 and end at 1".into(),
            ));
        }
        Self::on_domain(breakpoints, pieces)
    }

    /// Builds a profile on an arbitrary interval.
    pub fn on_domain(breakpoints: Vec<f64>, pieces: Vec<Piece>) -> Result<Self> {
        if breakpoints.len() < 2 || pieces.len() + 1 != breakpoints.len() {
            return Err(Error::InvalidInput(format!(
                "need n+1 breakpoints for n pieces (got {} and {})",
                breakpoints.len(),
                pieces.len()
            )));
        }
        if breakpoints.windows(2).any(|w| !(w[0] < w[1])) || breakpoints.iter().any(|b| !b.is_finite())
        {
            return Err(Error::InvalidInput(
                "breakpoints must be finite and strictly increasing".into(),
            ));
        }
        for p in &pieces {
            if let Shape::Tabulated { nodes, values } = &p.shape {
                if nodes.len() < 2
                    || nodes.len() != values.len()
                    || nodes.windows(2).any(|w| !(w[0] < w[1]))
                {
                    return Err(Error::InvalidInput(
                        "tabulated piece needs >= 2 increasing nodes".into(),
                    ));
                }
            }
        }
        let mut prof = FrictionProfile {
            breakpoints,
            pieces,
            lipschitz_bound: Vec::new(),
            sup_norm: 0.0,
        };
        prof.lipschitz_bound = (0..prof.pieces.len()).map(|i| prof.piece_lipschitz(i)).collect();
        prof.sup_norm = (0..prof.pieces.len())
            .map(|i| prof.piece_sup(i))
            .fold(0.0, f64::max);
        if !prof.sup_norm.is_finite() {
            return Err(Error::InvalidInput("profile is not bounded".into()));
        }
        Ok(prof)
    }

    pub fn constant(c: f64) -> Self {
        Self::new(vec![-1.0, 1.0], vec![Piece::constant(c)]).expect("valid constant profile")
    }

    /// Piecewise-constant profile; `breaks` includes both ends.
    pub fn piecewise_constant(breaks: &[f64], values: &[f64]) -> Result<Self> {
        Self::new(
            breaks.to_vec(),
            values.iter().map(|&v| Piece::constant(v)).collect(),
        )
    }

    pub fn polynomial(coeffs: &[f64]) -> Self {
        Self::new(
            vec![-1.0, 1.0],
            vec![Piece::new(Shape::Polynomial(coeffs.to_vec()))],
        )
        .expect("valid polynomial profile")
    }

    /// `mean + amplitude * sin(wavenumber * x + phase)` on `[-1, 1]`.
    pub fn sine(mean: f64, amplitude: f64, wavenumber: f64, phase: f64) -> Self {
        Self::new(
            vec![-1.0, 1.0],
            vec![Piece::new(Shape::Sine {
                mean,
                amplitude,
                wavenumber,
                phase,
            })],
        )
        .expect("valid sine profile")
    }

    /// Continuous piecewise-linear profile through `(xs, ys)`.
    pub fn tabulated(xs: &[f64], ys: &[f64]) -> Result<Self> {
        Self::new(
            vec![-1.0, 1.0],
            vec![Piece::new(Shape::Tabulated {
                nodes: xs.to_vec(),
                values: ys.to_vec(),
            })],
        )
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn pieces(&self) -> &[Piece] {
        &self.pieces
    }

    pub fn lipschitz_bound(&self) -> &[f64] {
        &self.lipschitz_bound
    }

    pub fn sup_norm(&self) -> f64 {
        self.sup_norm
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.breakpoints[0], *self.breakpoints.last().unwrap())
    }

    /// Index of the piece containing `x` (right-continuous at breakpoints).
    pub fn piece_index(&self, x: f64) -> usize {
        let n = self.pieces.len();
        self.breakpoints.partition_point(|&b| b <= x).clamp(1, n) - 1
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.pieces[self.piece_index(x)].eval(x)
    }

    pub fn deriv(&self, x: f64) -> f64 {
        self.pieces[self.piece_index(x)].deriv(x)
    }

    /// Left limit `f(x-)`; at the left end of the domain returns the right limit.
    pub fn left_limit(&self, x: f64) -> f64 {
        let n = self.pieces.len();
        let i = self.breakpoints.partition_point(|&b| b < x).clamp(1, n) - 1;
        self.pieces[i].eval(x)
    }

    /// Right limit `f(x+)`; at the right end of the domain returns the left limit.
    pub fn right_limit(&self, x: f64) -> f64 {
        self.eval(x)
    }

    /// Interior breakpoints with their one-sided limits `(x, f(x-), f(x+))`.
    pub fn jumps(&self) -> Vec<(f64, f64, f64)> {
        let n = self.breakpoints.len();
        (1..n - 1)
            .map(|i| {
                let x = self.breakpoints[i];
                (x, self.pieces[i - 1].eval(x), self.pieces[i].eval(x))
            })
            .collect()
    }

    /// Interior breakpoints where `f` actually jumps.
    pub fn discontinuities(&self) -> Vec<(f64, f64, f64)> {
        self.jumps()
            .into_iter()
            .filter(|&(_, l, r)| (l - r).abs() > CONTINUITY_TOL * (1.0 + l.abs().max(r.abs())))
            .collect()
    }

    /// True when `f` has no jumps (globally Lipschitz on the domain).
    pub fn is_lipschitz(&self) -> bool {
        self.discontinuities().is_empty()
    }

    pub fn is_piecewise_constant(&self) -> bool {
        self.pieces.iter().all(Piece::is_constant)
    }

    /// Breakpoints plus interior kinks of tabulated pieces, sorted.
    pub fn smooth_breaks(&self) -> Vec<f64> {
        let mut out = vec![self.breakpoints[0]];
        for (i, p) in self.pieces.iter().enumerate() {
            let (lo, hi) = (self.breakpoints[i], self.breakpoints[i + 1]);
            out.extend(p.kinks(lo, hi));
            out.push(hi);
        }
        out
    }

    /// Panels on which `f` is smooth and not oscillating across more than
    /// half a period.
    pub fn panels(&self) -> Vec<(f64, f64)> {
        let mut out = Vec::new();
        for (i, p) in self.pieces.iter().enumerate() {
            let (lo, hi) = (self.breakpoints[i], self.breakpoints[i + 1]);
            let mut cuts = vec![lo];
            cuts.extend(p.kinks(lo, hi));
            cuts.push(hi);
            let w = p.panel_width();
            for c in cuts.windows(2) {
                let sub = subdivide(c[0], c[1], w);
                out.extend(sub.windows(2).map(|s| (s[0], s[1])));
            }
        }
        out
    }

    /// Accurate integral of `g(x, f(x))` over the domain.
    pub fn integrate(&self, g: impl Fn(f64, f64) -> f64) -> f64 {
        let mut rule = Rule::new();
        for (a, b) in self.panels() {
            rule.push_legendre(a, b, 20);
        }
        rule.integrate(|x| {
            let i = self.piece_index(x);
            g(x, self.pieces[i].eval(x))
        })
    }

    /// Spatial average over the domain.
    pub fn mean(&self) -> f64 {
        let (lo, hi) = self.domain();
        self.integrate(|_, f| f) / (hi - lo)
    }

    /// Returns `gain * f`.
    pub fn scaled(&self, gain: f64) -> Self {
        let pieces = self
            .pieces
            .iter()
            .map(|p| Piece {
                gain: p.gain * gain,
                ..p.clone()
            })
            .collect();
        Self::on_domain(self.breakpoints.clone(), pieces).expect("scaling keeps validity")
    }

    /// `xi -> f(m + h xi)` on `[-1, 1]`, for the subinterval `[a, b]` of the domain.
    pub fn remapped(&self, a: f64, b: f64) -> Result<Self> {
        let (lo, hi) = self.domain();
        if !(a < b) || a < lo || b > hi {
            return Err(Error::InvalidInput(format!(
                "remap interval [{a}, {b}] outside domain"
            )));
        }
        let m = 0.5 * (a + b);
        let h = 0.5 * (b - a);
        let mut bps = vec![-1.0];
        let mut pieces = Vec::new();
        for (i, p) in self.pieces.iter().enumerate() {
            let (pl, ph) = (self.breakpoints[i], self.breakpoints[i + 1]);
            if ph <= a || pl >= b {
                continue;
            }
            pieces.push(p.compose(h, m));
            if ph < b {
                bps.push(((ph - m) / h).clamp(-1.0, 1.0));
            }
        }
        bps.push(1.0);
        // guard against breakpoints collapsing onto the ends through rounding
        let mut keep_b = vec![bps[0]];
        let mut keep_p = Vec::new();
        for (i, p) in pieces.into_iter().enumerate() {
            let nb = bps[i + 1];
            if nb > *keep_b.last().unwrap() {
                keep_b.push(nb);
                keep_p.push(p);
            } else if let Some(last) = keep_p.last_mut() {
                *last = p;
            }
        }
        if keep_p.is_empty() {
            return Err(Error::InvalidInput("degenerate remap interval".into()));
        }
        *keep_b.last_mut().unwrap() = 1.0;
        Self::on_domain(keep_b, keep_p)
    }

    /// Compactly supported Lipschitz extension to `[lo - 1, hi + 1]` decaying
    /// linearly to zero. Only meaningful for Lipschitz profiles.
    pub fn compact_extension(&self) -> Self {
        let (lo, hi) = self.domain();
        let fl = self.right_limit(lo);
        let fr = self.left_limit(hi);
        let mut bps = vec![lo - 1.0];
        bps.extend_from_slice(&self.breakpoints);
        bps.push(hi + 1.0);
        let mut pieces = vec![Piece::new(Shape::Polynomial(vec![fl * (1.0 - lo), fl]))];
        pieces.extend(self.pieces.iter().cloned());
        pieces.push(Piece::new(Shape::Polynomial(vec![fr * (1.0 + hi), -fr])));
        Self::on_domain(bps, pieces).expect("extension is valid")
    }

    /// `x -> f(x + s)` with the domain treated as one period.
    pub fn periodic_shift(&self, s: f64) -> Self {
        let (lo, hi) = self.domain();
        let per = hi - lo;
        let s = s.rem_euclid(per);
        if s == 0.0 {
            return self.clone();
        }
        // x in [lo, hi - s] reads f(x + s); x in [hi - s, hi] reads f(x + s - per)
        let split = hi - s;
        let mut bps = vec![lo];
        let mut pieces = Vec::new();
        for (i, p) in self.pieces.iter().enumerate() {
            let (pl, ph) = (self.breakpoints[i] - s, self.breakpoints[i + 1] - s);
            if ph <= lo {
                continue;
            }
            pieces.push(p.compose(1.0, s));
            bps.push(ph.min(split));
            if ph >= split {
                break;
            }
            let _ = pl;
        }
        for (i, p) in self.pieces.iter().enumerate() {
            let (pl, ph) = (self.breakpoints[i] - s + per, self.breakpoints[i + 1] - s + per);
            if ph <= split {
                continue;
            }
            let _ = pl;
            pieces.push(p.compose(1.0, s - per));
            bps.push(ph.min(hi));
            if ph >= hi {
                break;
            }
        }
        *bps.last_mut().unwrap() = hi;
        let mut keep_b = vec![bps[0]];
        let mut keep_p = Vec::new();
        for (i, p) in pieces.into_iter().enumerate() {
            if bps[i + 1] > *keep_b.last().unwrap() {
                keep_b.push(bps[i + 1]);
                keep_p.push(p);
            }
        }
        Self::on_domain(keep_b, keep_p).expect("shift keeps validity")
    }

    /// `x -> f(n x)` on `[-1, 1]` with `f` extended 2-periodically.
    pub fn tiled(&self, n: usize) -> Self {
        let (lo, hi) = self.domain();
        debug_assert!(lo == -1.0 && hi == 1.0);
        let n = n.max(1);
        let nf = n as f64;
        let mut bps = vec![-1.0];
        let mut pieces = Vec::new();
        // period m covers x in [(2m - 1 - n + 1)/n ...]; write x = (y + 2k)/n with y in [-1, 1)
        for k in 0..n {
            let offset = 2.0 * k as f64 - (nf - 1.0);
            for (i, p) in self.pieces.iter().enumerate() {
                let right = (self.breakpoints[i + 1] + offset) / nf;
                // y = n x - offset
                pieces.push(p.compose(nf, -offset));
                bps.push(right);
            }
        }
        *bps.last_mut().unwrap() = 1.0;
        Self::on_domain(bps, pieces).expect("tiling keeps validity")
    }

    fn piece_lipschitz(&self, i: usize) -> f64 {
        let p = &self.pieces[i];
        let (lo, hi) = (self.breakpoints[i], self.breakpoints[i + 1]);
        match &p.shape {
            Shape::Constant(_) => 0.0,
            Shape::Sine {
                amplitude,
                wavenumber,
                ..
            } => (p.gain * amplitude * wavenumber * p.scale).abs(),
            Shape::Tabulated { nodes, values } => nodes
                .windows(2)
                .zip(values.windows(2))
                .map(|(x, v)| ((v[1] - v[0]) / (x[1] - x[0])).abs())
                .fold(0.0, f64::max)
                * (p.gain * p.scale).abs(),
            Shape::Polynomial(_) => sample_points(lo, hi, 257)
                .map(|x| p.deriv(x).abs())
                .fold(0.0, f64::max),
        }
    }

    fn piece_sup(&self, i: usize) -> f64 {
        let p = &self.pieces[i];
        let (lo, hi) = (self.breakpoints[i], self.breakpoints[i + 1]);
        match &p.shape {
            Shape::Constant(c) => (p.gain * c).abs(),
            Shape::Tabulated { .. } => {
                let mut pts = vec![lo, hi];
                pts.extend(p.kinks(lo, hi));
                pts.into_iter().map(|x| p.eval(x).abs()).fold(0.0, f64::max)
            }
            _ => {
                let k = ((hi - lo) / p.panel_width().min(hi - lo) * 64.0).ceil() as usize;
                sample_points(lo, hi, k.clamp(257, 1 << 16))
                    .map(|x| p.eval(x).abs())
                    .fold(0.0, f64::max)
            }
        }
    }
}

fn sample_points(lo: f64, hi: f64, n: usize) -> impl Iterator<Item = f64> {
    (0..n).map(move |k| lo + (hi - lo) * k as f64 / (n - 1) as f64)
}
