//! Gauss rules and composite rules graded toward endpoint singularities.
//!
//! Reference rules come from `gauss-quad` and are cached per degree. Jacobi
//! rules are only requested with even degree (the crate pins the middle node
//! of odd-degree rules to zero, which is wrong for unequal exponents).

use gauss_quad::jacobi::GaussJacobi;
use gauss_quad::legendre::GaussLegendre;
use gauss_quad::FiniteAboveNegOneF64;
use std::collections::HashMap;
use std::num::NonZeroUsize;
use std::sync::{Arc, Mutex, OnceLock};

type NodeWeights = Arc<Vec<(f64, f64)>>;

fn legendre_cache() -> &'static Mutex<HashMap<usize, NodeWeights>> {
    static CACHE: OnceLock<Mutex<HashMap<usize, NodeWeights>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

fn jacobi_cache() -> &'static Mutex<HashMap<(usize, u64), NodeWeights>> {
    static CACHE: OnceLock<Mutex<HashMap<(usize, u64), NodeWeights>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

/// Gauss–Legendre nodes and weights on [-1, 1], ascending.
pub fn legendre(n: usize) -> NodeWeights {
    let n = n.max(1);
    let mut cache = legendre_cache().lock().expect("legendre cache poisoned");
    cache
        .entry(n)
        .or_insert_with(|| {
            let rule = GaussLegendre::new(NonZeroUsize::new(n).expect("n >= 1"));
            let mut pairs: Vec<(f64, f64)> = rule.as_node_weight_pairs().to_vec();
            pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
            Arc::new(pairs)
        })
        .clone()
}

/// Gauss–Jacobi rule on [0, 1] for the weight `y^e`, ascending.
///
/// The degree is rounded up to an even number.
pub fn jacobi_left(n: usize, e: f64) -> NodeWeights {
    let n = (n.max(2) + 1) & !1;
    let key = (n, e.to_bits());
    let mut cache = jacobi_cache().lock().expect("jacobi cache poisoned");
    cache
        .entry(key)
        .or_insert_with(|| {
            let beta = FiniteAboveNegOneF64::new(e).expect("exponent must exceed -1");
            let rule = GaussJacobi::new(
                NonZeroUsize::new(n).expect("n >= 2"),
                FiniteAboveNegOneF64::default(),
                beta,
            );
            // weight (1+x)^e on [-1,1]; map y = (1+x)/2, weight y^e dy = 2^{-e-1} (1+x)^e dx
            let scale = 0.5f64.powf(e + 1.0);
            let mut pairs: Vec<(f64, f64)> = rule
                .as_node_weight_pairs()
                .iter()
                .map(|&(x, w)| (0.5 * (1.0 + x), w * scale))
                .collect();
            pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
            Arc::new(pairs)
        })
        .clone()
}

/// A plain list of quadrature points and weights.
#[derive(Clone, Debug, Default)]
pub struct Rule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Rule {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn integrate(&self, mut f: impl FnMut(f64) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }

    pub fn append(&mut self, other: &Rule) {
        self.nodes.extend_from_slice(&other.nodes);
        self.weights.extend_from_slice(&other.weights);
    }

    /// Gauss–Legendre panel on [a, b].
    pub fn push_legendre(&mut self, a: f64, b: f64, n: usize) {
        if b <= a {
            return;
        }
        let h = 0.5 * (b - a);
        let c = 0.5 * (a + b);
        for &(x, w) in legendre(n).iter() {
            self.nodes.push(c + h * x);
            self.weights.push(h * w);
        }
    }

    /// Panel on [a, b] exact for `(s-a)^e * poly` (or `(b-s)^e * poly` when
    /// `at_left` is false). Weights are divided by the power so the rule
    /// applies to the full integrand.
    pub fn push_jacobi(&mut self, a: f64, b: f64, e: f64, at_left: bool, n: usize) {
        if b <= a {
            return;
        }
        if e == 0.0 {
            self.push_legendre(a, b, n);
            return;
        }
        let len = b - a;
        for &(y, w) in jacobi_left(n, e).iter() {
            // integral over [a,b] of (s-a)^e F = len^{e+1} * sum w F(a + len y)
            // so the plain weight for F_total = (s-a)^e F is len * w / y^e
            let s = if at_left { a + len * y } else { b - len * y };
            self.nodes.push(s);
            self.weights.push(len * w / y.powf(e));
        }
    }
}

/// Grading parameters for composite rules.
#[derive(Clone, Copy, Debug)]
pub struct Grading {
    /// Gauss–Legendre points per panel.
    pub order: usize,
    /// Geometric ratio between consecutive panels toward a singular end.
    pub ratio: f64,
    /// Number of geometric levels.
    pub levels: usize,
}

impl Grading {
    pub const FINE: Grading = Grading {
        order: 16,
        ratio: 0.15,
        levels: 14,
    };
    pub const MEDIUM: Grading = Grading {
        order: 10,
        ratio: 0.2,
        levels: 10,
    };
    pub const LIGHT: Grading = Grading {
        order: 6,
        ratio: 0.25,
        levels: 6,
    };
}

/// End behaviour of an integrand on a panel.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum End {
    /// Smooth up to this end.
    Smooth,
    /// Behaves like `dist^e` (times a function that may itself be only
    /// mildly smooth); the panel is graded toward this end and the innermost
    /// piece uses a Jacobi rule with exponent `e`.
    Power(f64),
}

impl End {
    pub fn power(e: f64) -> End {
        End::Power(e)
    }

    fn is_singular(&self) -> bool {
        matches!(self, End::Power(_))
    }
}

/// Smallest geometric panel produced by [`push_graded`], relative to the
/// magnitude of the panel end.
pub const MIN_PANEL: f64 = 1e-6;

/// Appends a rule for `[a, b]`, graded toward singular ends.
pub fn push_graded(rule: &mut Rule, a: f64, b: f64, left: End, right: End, g: Grading) {
    if b <= a {
        return;
    }
    match (left.is_singular(), right.is_singular()) {
        (false, false) => rule.push_legendre(a, b, g.order),
        (true, false) => push_one_sided(rule, a, b, left, true, g),
        (false, true) => push_one_sided(rule, a, b, right, false, g),
        (true, true) => {
            let m = 0.5 * (a + b);
            push_one_sided(rule, a, m, left, true, g);
            push_one_sided(rule, m, b, right, false, g);
        }
    }
}

fn push_one_sided(rule: &mut Rule, a: f64, b: f64, end: End, at_left: bool, g: Grading) {
    let e = match end {
        End::Power(e) => e,
        End::Smooth => 0.0,
    };
    let len = b - a;
    // Panel k spans distances [len r^{k+1}, len r^k] from the singular end.
    // Grading stops near MIN_PANEL: below that, f64 positions next to the end
    // no longer resolve the distance and the Jacobi panel takes over.
    let floor = MIN_PANEL * a.abs().max(b.abs()).max(1.0);
    let mut outer = len;
    for _ in 0..g.levels {
        let inner = outer * g.ratio;
        if inner < floor {
            break;
        }
        if at_left {
            rule.push_legendre(a + inner, a + outer, g.order);
        } else {
            rule.push_legendre(b - outer, b - inner, g.order);
        }
        outer = inner;
    }
    let n = g.order + (g.order & 1);
    if at_left {
        rule.push_jacobi(a, a + outer, e, true, n);
    } else {
        rule.push_jacobi(b - outer, b, e, false, n);
    }
}

/// Splits `[a, b]` into panels no wider than `max_width`.
pub fn subdivide(a: f64, b: f64, max_width: f64) -> Vec<f64> {
    let len = b - a;
    let k = if max_width.is_finite() && max_width > 0.0 {
        (len / max_width).ceil().max(1.0) as usize
    } else {
        1
    };
    (0..=k).map(|i| a + len * i as f64 / k as f64).collect()
}

/// Appends a Gauss–Legendre rule for `[a, b]` refined geometrically toward
/// the end nearest to `x` when `x` lies outside but close to the panel.
pub fn push_near(rule: &mut Rule, a: f64, b: f64, x: f64, n: usize) {
    let len = b - a;
    if len <= 0.0 {
        return;
    }
    let d = if x < a {
        a - x
    } else if x > b {
        x - b
    } else {
        // x inside: caller splits at x beforehand; treat as both ends near
        rule.push_legendre(a, b, n);
        return;
    };
    if d >= 0.5 * len {
        rule.push_legendre(a, b, n);
        return;
    }
    let toward_left = x < a;
    let mut outer = len;
    while outer > 2.0 * d && outer > 1e-15 * len.max(1.0) {
        let inner = outer * 0.25;
        if toward_left {
            rule.push_legendre(a + inner, a + outer, n);
        } else {
            rule.push_legendre(b - outer, b - inner, n);
        }
        outer = inner;
    }
    if toward_left {
        rule.push_legendre(a, a + outer, n);
    } else {
        rule.push_legendre(b - outer, b, n);
    }
}
