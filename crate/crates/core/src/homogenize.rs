use std::f64::consts::PI;

use rayon::prelude::*;

use crate::carleman;
use crate::contact::{self, gamma, ContactSolution, SolverOptions};
use crate::error::{Error, Result};
use crate::indentor::IndentorShape;
use crate::profile::FrictionProfile;
use crate::sing_integral::QuadGrid;

/// Grid nodes per oscillation period.
pub const NODES_PER_PERIOD: usize = 64;
/// Tolerance on `p(-1) = p(1)` for convex-indentor runs.
pub const PERIODIC_TOL: f64 = 1e-12;

/// One period of an oscillating friction coefficient, given on (-1, 1).
#[derive(Clone, Debug, PartialEq)]
pub struct PeriodProfile {
    p: FrictionProfile,
    periodic_compatible: bool,
}

impl PeriodProfile {
    pub fn new(p: FrictionProfile) -> Result<Self> {
        if p.domain() != (-1.0, 1.0) {
            return Err(Error::InvalidInput("a period must be given on (-1, 1)".into()));
        }
        let periodic_compatible = (p.right_limit(-1.0) - p.left_limit(1.0)).abs() <= PERIODIC_TOL;
        Ok(Self { p, periodic_compatible })
    }

    pub fn profile(&self) -> &FrictionProfile {
        &self.p
    }

    pub fn is_periodic_compatible(&self) -> bool {
        self.periodic_compatible
    }

    /// `beta = arctan(sup |p|) / pi`.
    pub fn beta(&self) -> f64 {
        self.p.sup_norm().atan() / PI
    }
}

/// `f_n(x) = p(n x)` with `p` extended 2-periodically.
pub fn oscillate(p: &PeriodProfile, n: usize) -> FrictionProfile {
    let n = n.max(1);
    if n % 2 == 0 {
        // n x = -n sits mid-period when n is even
        p.p.periodic_shift(1.0).tiled(n)
    } else {
        p.p.tiled(n)
    }
}

/// `tan <arctan p>`.
pub fn effective_coefficient(p: &PeriodProfile) -> f64 {
    (0.5 * p.p.integrate(|_, v| v.atan())).tan()
}

/// Effective coefficient in physical units: `effective_coefficient(gamma pbar) / gamma`.
pub fn effective_physical(nu: f64, pbar: &PeriodProfile) -> Result<f64> {
    let gm = gamma(nu)?;
    Ok((0.5 * pbar.p.integrate(|_, v| (gm * v).atan())).tan() / gm)
}

/// `(1 - r^2)^3` on `|r| < 1`, with `r = (x - 0.3) / 0.2`.
pub fn bump(x: f64) -> f64 {
    let r = (x - 0.3) / 0.2;
    if r.abs() < 1.0 {
        (1.0 - r * r).powi(3)
    } else {
        0.0
    }
}

/// The weak-gap dictionary.
pub fn test_functions() -> [(&'static str, fn(f64) -> f64); 5] {
    [
        ("one", |_| 1.0),
        ("x", |x| x),
        ("x2", |x| x * x),
        ("cos_pi_x", |x| (PI * x).cos()),
        ("bump", bump),
    ]
}

#[derive(Clone, Debug, PartialEq)]
pub struct WeakGaps {
    pub name: String,
    /// Per `n`, aligned with `HomogReport::n_values`.
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct HomogReport {
    pub n_values: Vec<usize>,
    pub grid_sizes: Vec<usize>,
    pub f_eff: f64,
    /// `|integral f_n t_n + f_eff P|`.
    pub force_errors: Vec<f64>,
    /// `-integral f_n t_n`.
    pub tangential_forces: Vec<f64>,
    /// `|<t_n - t_eff, phi>|` (flat) or `|<t_tilde_n - t_tilde_eff, phi>|` (convex).
    pub weak_gaps: Vec<WeakGaps>,
    /// `|<f_n t_tilde_n - f_eff t_tilde_eff, phi>|`; convex runs only.
    pub friction_gaps: Vec<WeakGaps>,
    /// `|integral t_n + P|` (flat) or `|integral t_tilde_n|` (convex).
    pub mass_errors: Vec<f64>,
    /// Discrete `L^q` norm of `t0(f_n)` with `q = 0.9 / (1/2 + beta)`; flat runs only.
    pub lp_norms: Vec<f64>,
    /// Contact intervals per `n`; convex runs only.
    pub intervals: Vec<(f64, f64)>,
    pub effective_interval: Option<(f64, f64)>,
    /// Endpoint drift `max(|a_n - a_eff|, |b_n - b_eff|)` in grid cells of the effective solution.
    pub interval_drift_cells: Vec<f64>,
    pub notes: Vec<String>,
}

fn check_n_list(n_list: &[usize]) -> Result<()> {
    if n_list.is_empty() || n_list[0] == 0 || n_list.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidInput("n_list must be positive and increasing".into()));
    }
    Ok(())
}

/// Flat punch with `f_n = p(n x)` on grids of `64 n` nodes, against the
/// constant effective coefficient.
pub fn homogenize_flat(p_force: f64, p: &PeriodProfile, n_list: &[usize]) -> Result<HomogReport> {
    check_n_list(n_list)?;
    let f_eff = effective_coefficient(p);
    let q = 0.9 / (0.5 + p.beta());
    let tf = test_functions();
    let rows: Vec<Result<_>> = n_list
        .par_iter()
        .map(|&n| {
            let grid = QuadGrid::chebyshev(NODES_PER_PERIOD * n);
            let fnp = oscillate(p, n);
            let t0n = carleman::t0(&fnp, &grid)?;
            let t0e = carleman::t0(&FrictionProfile::constant(f_eff), &grid)?;
            let ft = t0n.integrate_with(|x| fnp.eval(x));
            let gaps: Vec<f64> = tf
                .iter()
                .map(|(_, phi)| p_force * (t0n.integrate_with(phi) - t0e.integrate_with(phi)).abs())
                .collect();
            Ok((
                grid.size(),
                p_force * (f_eff - ft).abs(),
                p_force * ft,
                gaps,
                p_force * (t0n.integrate() - 1.0).abs(),
                carleman::lp_norm(&t0n, q)?,
            ))
        })
        .collect();
    let mut r = HomogReport {
        n_values: n_list.to_vec(),
        f_eff,
        weak_gaps: tf
            .iter()
            .map(|(name, _)| WeakGaps {
                name: name.to_string(),
                values: Vec::new(),
            })
            .collect(),
        notes: vec![format!("flat punch, P = {p_force}, Lq exponent q = {q}")],
        ..Default::default()
    };
    for row in rows {
        let (size, err, force, gaps, mass, lp) = row?;
        r.grid_sizes.push(size);
        r.force_errors.push(err);
        r.tangential_forces.push(force);
        for (w, g) in r.weak_gaps.iter_mut().zip(gaps) {
            w.values.push(g);
        }
        r.mass_errors.push(mass);
        r.lp_norms.push(lp);
    }
    Ok(r)
}

/// Grid size used for the convex run with `n` oscillations.
pub fn convex_grid_size(n: usize, min_nodes: usize) -> usize {
    (NODES_PER_PERIOD * n).max(min_nodes)
}

/// Convex indentor with `f_n = p(n x)` against the effective problem with
/// constant `f_eff`, solved on the same grid.
pub fn homogenize_convex(
    p_force: f64,
    g: &IndentorShape,
    p: &PeriodProfile,
    n_list: &[usize],
    min_nodes: usize,
    opts: &SolverOptions,
) -> Result<HomogReport> {
    check_n_list(n_list)?;
    if !p.is_periodic_compatible() {
        return Err(Error::InvalidInput("convex homogenization needs p(-1) = p(1)".into()));
    }
    if !p.profile().is_lipschitz() {
        return Err(Error::Unsupported("convex homogenization needs a Lipschitz period".into()));
    }
    if g.is_flat() {
        return homogenize_flat(p_force, p, n_list);
    }
    let f_eff = effective_coefficient(p);
    let fe = FrictionProfile::constant(f_eff);
    let tf = test_functions();

    type Row = (usize, ContactSolution, ContactSolution, FrictionProfile);
    let rows: Vec<std::result::Result<Row, String>> = n_list
        .par_iter()
        .map(|&n| {
            let grid = QuadGrid::chebyshev(convex_grid_size(n, min_nodes));
            let fnp = oscillate(p, n);
            let sn = contact::solve_convex(p_force, &fnp, g, &grid, opts).map_err(|e| format!("n = {n}: {e}"))?;
            let se = contact::solve_convex(p_force, &fe, g, &grid, opts)
                .map_err(|e| format!("n = {n}, effective problem: {e}"))?;
            Ok((n, sn, se, fnp))
        })
        .collect();

    let mut r = HomogReport {
        f_eff,
        weak_gaps: tf
            .iter()
            .map(|(name, _)| WeakGaps {
                name: name.to_string(),
                values: Vec::new(),
            })
            .collect(),
        friction_gaps: tf
            .iter()
            .map(|(name, _)| WeakGaps {
                name: name.to_string(),
                values: Vec::new(),
            })
            .collect(),
        notes: vec![format!("convex indentor, P = {p_force}")],
        ..Default::default()
    };
    for row in rows {
        let (n, sn, se, fnp) = match row {
            Ok(v) => v,
            Err(msg) => {
                r.notes.push(msg);
                continue;
            }
        };
        r.n_values.push(n);
        r.grid_sizes.push(sn.grid().size());
        let force = sn.tangential_force(&fnp);
        r.tangential_forces.push(force);
        r.force_errors.push((force - f_eff * p_force).abs());
        for (k, (_, phi)) in tf.iter().enumerate() {
            let gap = sn.integrate_tilde(phi) - se.integrate_tilde(phi);
            r.weak_gaps[k].values.push(gap.abs());
            let fgap = sn.integrate_tilde(|x| fnp.eval(x) * phi(x)) - f_eff * se.integrate_tilde(phi);
            r.friction_gaps[k].values.push(fgap.abs());
        }
        r.mass_errors.push(sn.residuals.mass);
        let (a, b) = sn.contact_interval;
        let (ae, be) = se.contact_interval;
        let grid = se.grid();
        let drift = ((a - ae).abs() / contact::cell_width_at(grid, ae)).max((b - be).abs() / contact::cell_width_at(grid, be));
        r.intervals.push((a, b));
        r.interval_drift_cells.push(drift);
        r.effective_interval = Some((ae, be));
    }
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_valued() -> PeriodProfile {
        PeriodProfile::new(FrictionProfile::piecewise_constant(&[-1.0, 0.0, 1.0], &[0.0, 1.0]).unwrap()).unwrap()
    }

    #[test]
    fn effective_of_constant() {
        let p = PeriodProfile::new(FrictionProfile::constant(0.37)).unwrap();
        assert!((effective_coefficient(&p) - 0.37).abs() < 1e-15);
        assert!((effective_physical(0.2, &p).unwrap() - 0.37).abs() < 1e-14);
    }

    #[test]
    fn effective_of_two_valued() {
        let p = two_valued();
        assert!((effective_coefficient(&p) - (PI / 8.0).tan()).abs() < 1e-14);
        let expect = 2.0 * (0.5 * 0.5f64.atan()).tan();
        assert!((effective_physical(0.0, &p).unwrap() - expect).abs() < 1e-14);
        assert!(effective_physical(0.5, &p).is_err());
    }

    #[test]
    fn oscillate_tiles_the_period() {
        let p = two_valued();
        let f2 = oscillate(&p, 2);
        assert_eq!(f2.breakpoints(), &[-1.0, -0.5, 0.0, 0.5, 1.0]);
        for x in [-0.75, -0.25, 0.25, 0.75] {
            assert_eq!(f2.eval(x), p.profile().eval(2.0 * x - 2.0 * (x).round()));
        }
        assert_eq!(f2.eval(-0.75), 1.0);
        assert!((f2.mean() - p.profile().mean()).abs() < 1e-15);
        assert_eq!(oscillate(&p, 1), *p.profile());
    }

    #[test]
    fn bump_is_supported_on_its_window() {
        assert!(bump(0.1) < 1e-40);
        assert_eq!(bump(0.55), 0.0);
        assert_eq!(bump(0.05), 0.0);
        assert_eq!(bump(0.3), 1.0);
    }

    #[test]
    fn periodic_compatibility() {
        assert!(!two_valued().is_periodic_compatible());
        let s = PeriodProfile::new(FrictionProfile::sine(0.5, 0.3, PI, 0.0)).unwrap();
        assert!(s.is_periodic_compatible());
    }

    #[test]
    fn constant_period_has_no_force_error() {
        let p = PeriodProfile::new(FrictionProfile::constant(0.4)).unwrap();
        let r = homogenize_flat(1.0, &p, &[1, 2, 4]).unwrap();
        assert!(r.force_errors.iter().all(|&e| e < 1e-9));
        assert!(r.mass_errors.iter().all(|&e| e < 1e-9));
    }
}
