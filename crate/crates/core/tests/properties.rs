use std::f64::consts::PI;

use carleman_core::carleman;
use carleman_core::contact;
use carleman_core::homogenize::{self, PeriodProfile};
use carleman_core::profile::FrictionProfile;
use carleman_core::sing_integral::{self, QuadGrid, SampledField};
use proptest::prelude::*;

fn poly(c: &[f64], s: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, &a| acc * s + a)
}

fn semicircle_field(grid: &std::sync::Arc<QuadGrid>, c: &[f64]) -> SampledField {
    let v = grid.nodes().iter().map(|&s| (1.0 - s * s).sqrt() * poly(c, s)).collect();
    SampledField::singular(grid.clone(), v, (-0.5, -0.5)).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn hilbert_is_odd_under_reflection(
        c in prop::collection::vec(-1.0f64..1.0, 1..5),
        x in -0.95f64..0.95,
    ) {
        let grid = QuadGrid::chebyshev(128);
        let mirrored: Vec<f64> = c.iter().enumerate().map(|(k, &a)| if k % 2 == 0 { a } else { -a }).collect();
        let h = semicircle_field(&grid, &c).hilbert_at(x).unwrap();
        let hm = semicircle_field(&grid, &mirrored).hilbert_at(-x).unwrap();
        prop_assert!((h + hm).abs() <= 1e-10, "{h} vs {hm}");
    }

    #[test]
    fn hilbert_is_linear(
        c1 in prop::collection::vec(-1.0f64..1.0, 3),
        c2 in prop::collection::vec(-1.0f64..1.0, 3),
        lam in -2.0f64..2.0,
        x in -0.9f64..0.9,
    ) {
        let grid = QuadGrid::chebyshev(128);
        let sum: Vec<f64> = c1.iter().zip(&c2).map(|(a, b)| a + lam * b).collect();
        let lhs = semicircle_field(&grid, &sum).hilbert_at(x).unwrap();
        let rhs = semicircle_field(&grid, &c1).hilbert_at(x).unwrap()
            + lam * semicircle_field(&grid, &c2).hilbert_at(x).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-10);
    }

    #[test]
    fn poisson_integral_of_indicator(x in -2.0f64..2.0, y in 0.05f64..3.0) {
        let grid = QuadGrid::chebyshev(256);
        let one = SampledField::plain(grid.clone(), vec![1.0; 256]).unwrap();
        let exact = (((1.0 - x) / y).atan() + ((1.0 + x) / y).atan()) / PI;
        let got = sing_integral::poisson_extend(&one, x, y).unwrap();
        prop_assert!((got - exact).abs() <= 1e-8, "{got} vs {exact}");
    }

    #[test]
    fn t0_is_positive_with_unit_mass(
        mean in 0.0f64..1.0,
        amp in 0.0f64..0.5,
        k in 1usize..4,
        phase in 0.0f64..(2.0 * PI),
    ) {
        let grid = QuadGrid::chebyshev(256);
        let f = FrictionProfile::sine(mean, amp, k as f64 * PI, phase);
        let t = carleman::t0(&f, &grid).unwrap();
        prop_assert!(t.values().iter().all(|&v| v > 0.0));
        prop_assert!((t.integrate() - 1.0).abs() <= 1e-6);
    }
}

proptest! {
    #[test]
    fn effective_coefficient_of_two_values(a in 0.0f64..3.0, b in 0.0f64..3.0) {
        let p = PeriodProfile::new(FrictionProfile::piecewise_constant(&[-1.0, 0.0, 1.0], &[a, b]).unwrap()).unwrap();
        let f_eff = homogenize::effective_coefficient(&p);
        let exact = (0.5 * (a.atan() + b.atan())).tan();
        prop_assert!((f_eff - exact).abs() <= 1e-12 * (1.0 + exact));
        // arctan is concave on [0, inf)
        prop_assert!(f_eff <= 0.5 * (a + b) + 1e-14);
        prop_assert!(f_eff >= a.min(b) - 1e-14 && f_eff <= a.max(b) + 1e-14);
    }

    #[test]
    fn effective_coefficient_ignores_phase(
        mean in 0.0f64..1.5,
        amp in 0.0f64..0.5,
        phase in 0.0f64..(2.0 * PI),
    ) {
        let base = PeriodProfile::new(FrictionProfile::sine(mean, amp, PI, 0.0)).unwrap();
        let shifted = PeriodProfile::new(FrictionProfile::sine(mean, amp, PI, phase)).unwrap();
        let (a, b) = (homogenize::effective_coefficient(&base), homogenize::effective_coefficient(&shifted));
        prop_assert!((a - b).abs() <= 1e-12, "{a} vs {b}");
    }

    #[test]
    fn physical_coefficient_matches_reduced(
        nu in 0.0f64..0.49,
        mean in 0.0f64..1.0,
        amp in 0.0f64..0.5,
    ) {
        let pbar = FrictionProfile::sine(mean, amp, PI, 0.3);
        let gm = contact::gamma(nu).unwrap();
        let phys = homogenize::effective_physical(nu, &PeriodProfile::new(pbar.clone()).unwrap()).unwrap();
        let reduced = homogenize::effective_coefficient(&PeriodProfile::new(pbar.scaled(gm)).unwrap());
        prop_assert!((phys * gm - reduced).abs() <= 1e-12);
    }
}

#[test]
fn hilbert_involution_converges() {
    let res: Vec<f64> = [64usize, 128]
        .iter()
        .map(|&n| {
            let grid = QuadGrid::chebyshev(n);
            let f = SampledField::from_fn(grid, |s| (-4.0 * s * s).exp() * (1.0 - s * s)).unwrap();
            sing_integral::hilbert_involution_residual(&f).unwrap()
        })
        .collect();
    assert!(res[0] / res[1] >= 3.0, "{res:?}");
}
