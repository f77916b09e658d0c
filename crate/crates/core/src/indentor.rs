use std::sync::Arc;

use crate::error::{Error, Result};
use crate::sing_integral::{QuadGrid, SampledField};

/// Number of uniform samples used for the convexity certificate.
const CERT_SAMPLES: usize = 4097;

#[derive(Clone, Debug, PartialEq)]
pub enum IndentorKind {
    Flat,
    /// `g = x^2 / r`
    Parabola { r: f64 },
    /// `g = sum_k c_k x^k`
    Polynomial { coeffs: Vec<f64> },
    /// `g = slope |x - apex|`
    Wedge { slope: f64, apex: f64 },
}

/// Rigid obstacle profile `g` on (-1, 1), times a constant scale.
#[derive(Clone, Debug, PartialEq)]
pub struct IndentorShape {
    kind: IndentorKind,
    scale: f64,
    convex: bool,
    lipschitz_bound: f64,
}

impl IndentorShape {
    pub fn new(kind: IndentorKind) -> Result<Self> {
        let ok = match &kind {
            IndentorKind::Flat => true,
            IndentorKind::Parabola { r } => r.is_finite() && *r > 0.0,
            IndentorKind::Polynomial { coeffs } => coeffs.iter().all(|c| c.is_finite()),
            IndentorKind::Wedge { slope, apex } => slope.is_finite() && apex.is_finite(),
        };
        if !ok {
            return Err(Error::InvalidInput(format!("bad indentor parameters {kind:?}")));
        }
        Ok(Self::certified(kind, 1.0))
    }

    pub fn flat() -> Self {
        Self::certified(IndentorKind::Flat, 1.0)
    }

    pub fn parabola(r: f64) -> Result<Self> {
        Self::new(IndentorKind::Parabola { r })
    }

    pub fn polynomial(coeffs: &[f64]) -> Result<Self> {
        Self::new(IndentorKind::Polynomial { coeffs: coeffs.to_vec() })
    }

    pub fn wedge(slope: f64, apex: f64) -> Result<Self> {
        Self::new(IndentorKind::Wedge { slope, apex })
    }

    fn certified(kind: IndentorKind, scale: f64) -> Self {
        let mut s = Self {
            kind,
            scale,
            convex: false,
            lipschitz_bound: 0.0,
        };
        let d: Vec<f64> = (0..CERT_SAMPLES)
            .map(|i| s.gprime(-1.0 + 2.0 * i as f64 / (CERT_SAMPLES - 1) as f64))
            .collect();
        let lip = d.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let slack = 1e-12 * (1.0 + lip);
        s.convex = d.windows(2).all(|w| w[1] >= w[0] - slack);
        s.lipschitz_bound = lip;
        s
    }

    pub fn kind(&self) -> &IndentorKind {
        &self.kind
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn is_convex(&self) -> bool {
        self.convex
    }

    /// Sampled `sup |g'|`.
    pub fn lipschitz_bound(&self) -> f64 {
        self.lipschitz_bound
    }

    /// True when `g` is identically zero.
    pub fn is_flat(&self) -> bool {
        self.scale == 0.0
            || match &self.kind {
                IndentorKind::Flat => true,
                IndentorKind::Polynomial { coeffs } => coeffs.iter().all(|&c| c == 0.0),
                IndentorKind::Wedge { slope, .. } => *slope == 0.0,
                IndentorKind::Parabola { .. } => false,
            }
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self::certified(self.kind.clone(), self.scale * s)
    }

    pub fn g(&self, x: f64) -> f64 {
        self.scale
            * match &self.kind {
                IndentorKind::Flat => 0.0,
                IndentorKind::Parabola { r } => x * x / r,
                IndentorKind::Polynomial { coeffs } => coeffs.iter().rev().fold(0.0, |acc, c| acc * x + c),
                IndentorKind::Wedge { slope, apex } => slope * (x - apex).abs(),
            }
    }

    /// `g'`; right derivative at a kink.
    pub fn gprime(&self, x: f64) -> f64 {
        self.scale
            * match &self.kind {
                IndentorKind::Flat => 0.0,
                IndentorKind::Parabola { r } => 2.0 * x / r,
                IndentorKind::Polynomial { coeffs } => coeffs
                    .iter()
                    .enumerate()
                    .skip(1)
                    .rev()
                    .fold(0.0, |acc, (k, c)| acc * x + k as f64 * c),
                IndentorKind::Wedge { slope, apex } => {
                    if x >= *apex {
                        *slope
                    } else {
                        -slope
                    }
                }
            }
    }

    /// Interior points where `g'` jumps.
    pub fn kinks(&self) -> Vec<f64> {
        match &self.kind {
            IndentorKind::Wedge { slope, apex } if *slope != 0.0 && apex.abs() < 1.0 => vec![*apex],
            _ => Vec::new(),
        }
    }

    pub fn g_field(&self, grid: &Arc<QuadGrid>) -> Result<SampledField> {
        let v = grid.nodes().iter().map(|&x| self.g(x)).collect();
        SampledField::structured(grid.clone(), v, None, Vec::new(), self.kinks())
    }

    pub fn gprime_field(&self, grid: &Arc<QuadGrid>) -> Result<SampledField> {
        let v = grid.nodes().iter().map(|&x| self.gprime(x)).collect();
        SampledField::structured(grid.clone(), v, None, Vec::new(), self.kinks())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parabola_values() {
        let g = IndentorShape::parabola(4.0).unwrap();
        assert_eq!(g.g(0.5), 0.0625);
        assert_eq!(g.gprime(-0.5), -0.25);
        assert!(g.is_convex());
        assert!((g.lipschitz_bound() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn polynomial_derivative() {
        let g = IndentorShape::polynomial(&[1.0, -2.0, 0.0, 3.0]).unwrap();
        let x = 0.3;
        assert!((g.g(x) - (1.0 - 2.0 * x + 3.0 * x * x * x)).abs() < 1e-15);
        assert!((g.gprime(x) - (-2.0 + 9.0 * x * x)).abs() < 1e-15);
        assert!(!g.is_convex());
    }

    #[test]
    fn wedge_is_convex_with_kink() {
        let g = IndentorShape::wedge(0.2, 0.1).unwrap();
        assert!(g.is_convex());
        assert_eq!(g.kinks(), vec![0.1]);
        assert!(!IndentorShape::wedge(-0.2, 0.1).unwrap().is_convex());
    }

    #[test]
    fn rejects_bad_radius() {
        assert!(IndentorShape::parabola(0.0).is_err());
        assert!(IndentorShape::parabola(f64::NAN).is_err());
    }

    #[test]
    fn scaling() {
        let g = IndentorShape::parabola(1.0).unwrap().scaled(0.5);
        assert_eq!(g.g(1.0), 0.5);
        assert!(IndentorShape::flat().is_flat());
    }
}
