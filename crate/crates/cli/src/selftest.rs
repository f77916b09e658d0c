use std::f64::consts::PI;

use carleman_core::carleman::{self, Tolerances};
use carleman_core::contact::{self, SolverOptions};
use carleman_core::homogenize::{self, PeriodProfile};
use carleman_core::indentor::IndentorShape;
use carleman_core::profile::FrictionProfile;
use carleman_core::sing_integral::{QuadGrid, SampledField};
use carleman_core::Result;

#[derive(Clone, Debug)]
pub struct Check {
    pub module: &'static str,
    pub name: &'static str,
    pub measured: f64,
    pub tolerance: f64,
    /// Set when the check could not be evaluated.
    pub error: Option<String>,
}

impl Check {
    pub fn passed(&self) -> bool {
        self.error.is_none() && self.measured <= self.tolerance
    }
}

fn check(module: &'static str, name: &'static str, tolerance: f64, f: impl FnOnce() -> Result<f64>) -> Check {
    let (measured, error) = match f() {
        Ok(v) => (v, None),
        Err(e) => (f64::NAN, Some(e.to_string())),
    };
    Check {
        module,
        name,
        measured,
        tolerance,
        error,
    }
}

/// Fast invariant checks over every module.
pub fn run_checks() -> Vec<Check> {
    let grid = QuadGrid::chebyshev(256);
    let sine = FrictionProfile::sine(0.3, 0.2, PI, 0.0);
    let parab = IndentorShape::parabola(4.0).expect("valid radius");
    vec![
        check("sing_integral", "H[sqrt(1-s^2)](x) = -x", 1e-10, || {
            let v = grid.nodes().iter().map(|&s| (1.0 - s * s).sqrt()).collect();
            let f = SampledField::singular(grid.clone(), v, (-0.5, -0.5))?;
            let mut worst = 0.0f64;
            for x in [-0.7, -0.1, 0.2, 0.55] {
                worst = worst.max((f.hilbert_at(x)? + x).abs());
            }
            Ok(worst)
        }),
        check("carleman", "constant friction t0 closed form", 1e-10, || {
            let f0: f64 = 0.3;
            let a = f0.atan() / PI;
            let t = carleman::t0(&FrictionProfile::constant(f0), &grid)?;
            Ok(grid
                .nodes()
                .iter()
                .zip(t.values())
                .map(|(&x, &v)| {
                    let exact = 1.0 / (PI * (1.0 + f0 * f0).sqrt() * (1.0 + x).powf(0.5 + a) * (1.0 - x).powf(0.5 - a));
                    (v - exact).abs() / exact
                })
                .fold(0.0, f64::max))
        }),
        check("carleman", "unit mass of t0 (sine friction)", 1e-6, || {
            Ok((carleman::t0(&sine, &grid)?.integrate() - 1.0).abs())
        }),
        check("carleman", "homogeneous residual of t0 (sine friction)", Tolerances::for_grid(256).residual, || {
            let t = carleman::t0(&sine, &grid)?;
            let zero = SampledField::plain(grid.clone(), vec![0.0; grid.size()])?;
            carleman::carleman_residual(&sine, &t, &zero)
        }),
        check("contact", "Hertz half-width without friction", 1e-8, || {
            let p = 0.5;
            let ell = (4.0 * p / PI).sqrt();
            let s = contact::solve_convex_interval_oracle(p, &FrictionProfile::constant(0.0), &parab, &grid)?;
            Ok((s.contact_interval.0 + ell).abs().max((s.contact_interval.1 - ell).abs()))
        }),
        check("contact", "KKT residual, parabola with friction 0.3", 1e-6, || {
            let s = contact::solve_convex(1.0, &FrictionProfile::constant(0.3), &parab, &grid, &SolverOptions::default())?;
            Ok(s.residuals.kkt_max)
        }),
        check("contact", "Lewy-Stampacchia violation", 1e-4, || {
            let f = FrictionProfile::constant(0.3);
            let s = contact::solve_convex(1.0, &f, &parab, &grid, &SolverOptions::default())?;
            contact::lewy_stampacchia_check(&s, &f, &parab, 1.0)
        }),
        check("homogenize", "f_eff of two-valued period = tan(pi/8)", 1e-12, || {
            let p = PeriodProfile::new(FrictionProfile::piecewise_constant(&[-1.0, 0.0, 1.0], &[0.0, 1.0])?)?;
            Ok((homogenize::effective_coefficient(&p) - (PI / 8.0).tan()).abs())
        }),
        check("homogenize", "physical back-map consistency", 1e-12, || {
            let nu = 0.3;
            let gm = contact::gamma(nu)?;
            let pbar = PeriodProfile::new(sine.clone())?;
            let reduced = PeriodProfile::new(sine.scaled(gm))?;
            Ok((homogenize::effective_physical(nu, &pbar)? * gm - homogenize::effective_coefficient(&reduced)).abs())
        }),
    ]
}

/// Plain-text table, one row per check.
pub fn render(checks: &[Check]) -> String {
    let mut s = format!(
        "{:<14} {:<46} {:>12} {:>12}  {}\n",
        "module", "check", "measured", "tolerance", "status"
    );
    for c in checks {
        let status = match &c.error {
            Some(e) => format!("FAIL ({e})"),
            None if c.passed() => "pass".to_string(),
            None => "FAIL".to_string(),
        };
        s += &format!(
            "{:<14} {:<46} {:>12.3e} {:>12.1e}  {}\n",
            c.module, c.name, c.measured, c.tolerance, status
        );
    }
    let failed = checks.iter().filter(|c| !c.passed()).count();
    s += &format!("{} passed, {} failed\n", checks.len() - failed, failed);
    s
}
