use std::path::PathBuf;
use std::sync::Arc;
use std::time::Instant;

use carleman_core::carleman;
use carleman_core::contact::{self, ContactSolution};
use carleman_core::homogenize::{self, HomogReport, PeriodProfile};
use carleman_core::indentor::IndentorShape;
use carleman_core::profile::FrictionProfile;
use carleman_core::sing_integral::{GridKind, QuadGrid};
use carleman_core::Error;
use serde_json::{json, Map};

use crate::config::{Command, HomogMode, Problem, RunConfig};
use crate::output::{GridInfo, ResultBundle, Table};
use crate::CliError;

/// Command-line overrides applied on top of the config file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub grid_n: Option<usize>,
    pub seed: Option<u64>,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut RunConfig) {
        if let Some(d) = &self.out {
            cfg.output.dir = d.clone();
        }
        if let Some(n) = self.grid_n {
            cfg.grid.n = n;
        }
    }
}

fn grid_info(grid: &QuadGrid) -> GridInfo {
    GridInfo {
        kind: match grid.kind() {
            GridKind::ChebyshevGauss => "chebyshev-gauss".into(),
            GridKind::UniformOpen => "uniform-open".into(),
        },
        n: grid.size(),
    }
}

/// Runs a solver command on a resolved config. `selftest` is handled separately.
pub fn run(cmd: Command, cfg: &RunConfig, seed: Option<u64>) -> Result<ResultBundle, CliError> {
    let problem = cfg.problem()?;
    let start = Instant::now();
    let mut bundle = match cmd {
        Command::FlatPunch => flat_punch(cfg, &problem)?,
        Command::Contact => contact_run(cfg, &problem)?,
        Command::Homogenize => homogenize_run(cfg, &problem)?,
        Command::Selftest => return Err(CliError::Config("selftest does not produce a result bundle".into())),
    };
    let elapsed = start.elapsed().as_secs_f64();

    let mut meta = Map::new();
    meta.insert("tool".into(), json!("carleman"));
    meta.insert("version".into(), json!(env!("CARGO_PKG_VERSION")));
    meta.insert("command".into(), json!(cmd.name()));
    meta.insert("config".into(), serde_json::to_value(cfg).map_err(|e| CliError::Config(e.to_string()))?);
    meta.insert("seed".into(), json!(seed));
    meta.insert(
        "reduction".into(),
        match (&cfg.physical, problem.gamma) {
            (Some(ph), Some(gm)) => json!({
                "applied": true,
                "nu": ph.nu,
                "gamma": gm,
                "friction_factor": gm,
                "indentor_factor": 1.0 / (2.0 * (1.0 - ph.nu * ph.nu)),
                "p": problem.p,
            }),
            _ => json!({ "applied": false, "p": problem.p }),
        },
    );
    meta.insert(
        "units".into(),
        json!({
            "x": "contact half-width",
            "force": "normal load P in reduced units",
            "pressure": "force per unit half-width",
        }),
    );
    meta.append(&mut bundle.metadata);
    meta.insert("timings".into(), json!({ "solve_seconds": elapsed }));
    bundle.metadata = meta;
    Ok(bundle)
}

fn residual_scalars(sol: &ContactSolution, out: &mut Vec<(String, f64)>) {
    let r = &sol.residuals;
    out.push(("residual_complementarity".into(), r.complementarity));
    out.push(("residual_carleman".into(), r.carleman));
    out.push(("residual_mass".into(), r.mass));
    out.push(("residual_kkt_max".into(), r.kkt_max));
    out.push(("iterations".into(), sol.iterations as f64));
}

/// `pressure.csv` plus force scalars; `total_normal` is the sum of the `cell_mass` column.
fn pressure_bundle(sol: &ContactSolution, f: &FrictionProfile, g: &IndentorShape) -> ResultBundle {
    let grid = sol.grid();
    let x = grid.nodes();
    let m0 = carleman::cell_masses(&sol.t0);
    let cell_mass: Vec<f64> = m0.iter().zip(&sol.cell_density).map(|(m, r)| (r - sol.p) * m).collect();
    let total_normal: f64 = cell_mass.iter().sum();

    let mut t = Table::new("pressure.csv", Some(grid_info(grid)));
    t.column("x", "half-width", x);
    t.column("t", "pressure", &sol.pressure());
    t.column("t_tilde", "pressure", sol.t_tilde.values());
    t.column("u", "half-width", sol.u.values());
    t.column("g", "half-width", &x.iter().map(|&v| g.g(v)).collect::<Vec<_>>());
    t.column("t0", "1 / half-width", sol.t0.values());
    t.column("f", "1", &x.iter().map(|&v| f.eval(v)).collect::<Vec<_>>());
    t.column("cell_mass", "force", &cell_mass);

    let mut scalars = vec![
        ("p".to_string(), sol.p),
        ("total_normal".to_string(), total_normal),
        ("total_tangential".to_string(), -sol.tangential_force(f)),
        ("contact_a".to_string(), sol.contact_interval.0),
        ("contact_b".to_string(), sol.contact_interval.1),
    ];
    residual_scalars(sol, &mut scalars);

    let mut meta = Map::new();
    meta.insert("grid".into(), json!(grid_info(grid)));
    meta.insert("solver".into(), json!({ "method": format!("{:?}", sol.method) }));
    ResultBundle {
        metadata: meta,
        tables: vec![t],
        scalars,
        plot: None,
    }
}

const PRESSURE_PLOT: &str = "\
set datafile separator ','
set key autotitle columnhead
set xlabel 'x'
set multiplot layout 2,1
plot 'pressure.csv' using 1:2 with lines
plot 'pressure.csv' using 1:4 with lines, '' using 1:5 with lines
unset multiplot
";

fn flat_punch(cfg: &RunConfig, pb: &Problem) -> Result<ResultBundle, CliError> {
    if !pb.g.is_flat() {
        return Err(CliError::Config("flat-punch needs a flat indentor; use the contact command".into()));
    }
    let grid = cfg.grid.build()?;
    let sol = contact::solve_flat(pb.p, &pb.f, &grid)?;
    let mut b = pressure_bundle(&sol, &pb.f, &pb.g);
    if cfg.output.plot {
        b.plot = Some(PRESSURE_PLOT.to_string());
    }
    Ok(b)
}

fn contact_run(cfg: &RunConfig, pb: &Problem) -> Result<ResultBundle, CliError> {
    let grid = cfg.grid.build()?;
    let sol = contact::solve_convex(pb.p, &pb.f, &pb.g, &grid, &cfg.solver.options())?;
    let mut b = pressure_bundle(&sol, &pb.f, &pb.g);
    b.scalars.push((
        "lewy_stampacchia_violation".into(),
        contact::lewy_stampacchia_check(&sol, &pb.f, &pb.g, pb.p)?,
    ));
    if cfg.solver.cross_check {
        let oracle = contact::solve_convex_interval_oracle(pb.p, &pb.f, &pb.g, &grid)?;
        b.scalars.extend(cross_check_scalars(&sol, &oracle, &grid));
    }
    if cfg.output.plot {
        b.plot = Some(PRESSURE_PLOT.to_string());
    }
    Ok(b)
}

fn cross_check_scalars(sol: &ContactSolution, oracle: &ContactSolution, grid: &Arc<QuadGrid>) -> Vec<(String, f64)> {
    let (a, b) = sol.contact_interval;
    let (ao, bo) = oracle.contact_interval;
    vec![
        ("crosscheck_a".into(), ao),
        ("crosscheck_b".into(), bo),
        (
            "crosscheck_a_cells".into(),
            (a - ao).abs() / contact::cell_width_at(grid, ao),
        ),
        (
            "crosscheck_b_cells".into(),
            (b - bo).abs() / contact::cell_width_at(grid, bo),
        ),
        (
            "crosscheck_weighted_l1".into(),
            contact::weighted_l1_distance(grid, &sol.pressure(), &oracle.pressure()) / sol.p,
        ),
    ]
}

fn homogenize_run(cfg: &RunConfig, pb: &Problem) -> Result<ResultBundle, CliError> {
    let period = PeriodProfile::new(pb.f.clone())?;
    let h = &cfg.homogenize;
    let mode = h.mode.unwrap_or(if pb.g.is_flat() { HomogMode::Flat } else { HomogMode::Convex });
    let report = match mode {
        HomogMode::Flat => homogenize::homogenize_flat(pb.p, &period, &h.n_list)?,
        HomogMode::Convex => {
            homogenize::homogenize_convex(pb.p, &pb.g, &period, &h.n_list, h.min_nodes, &cfg.solver.options())?
        }
    };
    if report.n_values.is_empty() {
        return Err(Error::SearchFailure(format!("every run failed: {}", report.notes.join("; "))).into());
    }

    let mut scalars = vec![
        ("p".to_string(), pb.p),
        ("f_eff".to_string(), report.f_eff),
        ("mean_friction".to_string(), pb.f.mean()),
    ];
    if let Some(ph) = &cfg.physical {
        let pbar = PeriodProfile::new(ph.friction.build()?)?;
        scalars.push(("f_eff_physical".into(), homogenize::effective_physical(ph.nu, &pbar)?));
    }
    let last = report.n_values.len() - 1;
    scalars.push(("n_max".into(), report.n_values[last] as f64));
    scalars.push(("force_error_at_n_max".into(), report.force_errors[last]));
    scalars.push((
        "residual_mass_max".into(),
        report.mass_errors.iter().fold(0.0f64, |m, &v| m.max(v)),
    ));
    if let Some((a, b)) = report.effective_interval {
        scalars.push(("effective_a".into(), a));
        scalars.push(("effective_b".into(), b));
    }

    let mut meta = Map::new();
    meta.insert(
        "homogenization".into(),
        json!({
            "mode": match mode { HomogMode::Flat => "flat", HomogMode::Convex => "convex" },
            "nodes_per_period": homogenize::NODES_PER_PERIOD,
            "notes": report.notes,
        }),
    );
    let plot = cfg.output.plot.then(|| {
        "\
set datafile separator ','
set key autotitle columnhead
set logscale xy
set xlabel 'n'
plot 'homogenization.csv' using 1:4 with linespoints
"
        .to_string()
    });
    Ok(ResultBundle {
        metadata: meta,
        tables: vec![homogenization_table(&report)],
        scalars,
        plot,
    })
}

fn homogenization_table(r: &HomogReport) -> Table {
    let rows = r.n_values.len();
    let as_f = |v: &[usize]| v.iter().map(|&k| k as f64).collect::<Vec<_>>();
    let mut t = Table::new("homogenization.csv", None);
    t.column("n", "1", &as_f(&r.n_values));
    t.column("grid_n", "nodes", &as_f(&r.grid_sizes));
    t.column("friction_force", "force", &r.tangential_forces);
    t.column("force_error", "force", &r.force_errors);
    t.column("mass_error", "force", &r.mass_errors);
    if r.lp_norms.len() == rows {
        t.column("lp_norm", "1", &r.lp_norms);
    }
    if r.intervals.len() == rows {
        t.column("a", "half-width", &r.intervals.iter().map(|p| p.0).collect::<Vec<_>>());
        t.column("b", "half-width", &r.intervals.iter().map(|p| p.1).collect::<Vec<_>>());
        t.column("drift_cells", "cells", &r.interval_drift_cells);
    }
    for w in &r.weak_gaps {
        t.column(&format!("gap_{}", w.name), "force", &w.values);
    }
    for w in r.friction_gaps.iter().filter(|w| w.values.len() == rows) {
        t.column(&format!("friction_gap_{}", w.name), "force", &w.values);
    }
    t
}
