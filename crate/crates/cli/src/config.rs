use std::path::{Path, PathBuf};
use std::sync::Arc;

use carleman_core::contact::{PhysicalParams, SolverOptions};
use carleman_core::indentor::IndentorShape;
use carleman_core::profile::FrictionProfile;
use carleman_core::sing_integral::{GridKind, QuadGrid};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    FlatPunch,
    Contact,
    Homogenize,
    Selftest,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::FlatPunch => "flat-punch",
            Command::Contact => "contact",
            Command::Homogenize => "homogenize",
            Command::Selftest => "selftest",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FrictionSpec {
    Constant {
        value: f64,
    },
    /// `breaks` includes both ends of [-1, 1].
    PiecewiseConstant {
        breaks: Vec<f64>,
        values: Vec<f64>,
    },
    /// Coefficients in increasing degree.
    Polynomial {
        coeffs: Vec<f64>,
    },
    /// `mean + amplitude sin(wavenumber x + phase)`.
    Sine {
        mean: f64,
        amplitude: f64,
        wavenumber: f64,
        #[serde(default)]
        phase: f64,
    },
    Tabulated {
        x: Vec<f64>,
        y: Vec<f64>,
    },
}

impl FrictionSpec {
    pub fn build(&self) -> Result<FrictionProfile, CliError> {
        Ok(match self {
            FrictionSpec::Constant { value } => FrictionProfile::constant(*value),
            FrictionSpec::PiecewiseConstant { breaks, values } => FrictionProfile::piecewise_constant(breaks, values)?,
            FrictionSpec::Polynomial { coeffs } => FrictionProfile::polynomial(coeffs),
            FrictionSpec::Sine {
                mean,
                amplitude,
                wavenumber,
                phase,
            } => FrictionProfile::sine(*mean, *amplitude, *wavenumber, *phase),
            FrictionSpec::Tabulated { x, y } => FrictionProfile::tabulated(x, y)?,
        })
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum IndentorSpec {
    #[default]
    Flat,
    /// `x^2 / r`
    Parabola { r: f64 },
    Polynomial { coeffs: Vec<f64> },
    /// `slope |x - apex|`
    Wedge {
        slope: f64,
        #[serde(default)]
        apex: f64,
    },
}

impl IndentorSpec {
    pub fn build(&self) -> Result<IndentorShape, CliError> {
        Ok(match self {
            IndentorSpec::Flat => IndentorShape::flat(),
            IndentorSpec::Parabola { r } => IndentorShape::parabola(*r)?,
            IndentorSpec::Polynomial { coeffs } => IndentorShape::polynomial(coeffs)?,
            IndentorSpec::Wedge { slope, apex } => IndentorShape::wedge(*slope, *apex)?,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhysicalBlock {
    pub nu: f64,
    pub p: f64,
    pub friction: FrictionSpec,
    #[serde(default)]
    pub indentor: IndentorSpec,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReducedBlock {
    pub p: f64,
    pub friction: FrictionSpec,
    #[serde(default)]
    pub indentor: IndentorSpec,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridKindSpec {
    Chebyshev,
    Uniform,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridBlock {
    pub n: usize,
    pub kind: GridKindSpec,
}

impl Default for GridBlock {
    fn default() -> Self {
        Self {
            n: 2048,
            kind: GridKindSpec::Chebyshev,
        }
    }
}

impl GridBlock {
    pub fn build(&self) -> Result<Arc<QuadGrid>, CliError> {
        let kind = match self.kind {
            GridKindSpec::Chebyshev => GridKind::ChebyshevGauss,
            GridKindSpec::Uniform => GridKind::UniformOpen,
        };
        Ok(Arc::new(QuadGrid::new(kind, self.n)?))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverBlock {
    pub max_iter: usize,
    pub step: Option<f64>,
    pub kkt_tol: f64,
    pub mass_tol: f64,
    pub interface_tol: f64,
    /// Also run the interval-search solver and report the disagreement.
    pub cross_check: bool,
}

impl Default for SolverBlock {
    fn default() -> Self {
        let o = SolverOptions::default();
        Self {
            max_iter: o.max_iter,
            step: o.step,
            kkt_tol: o.kkt_tol,
            mass_tol: o.mass_tol,
            interface_tol: o.interface_tol,
            cross_check: false,
        }
    }
}

impl SolverBlock {
    pub fn options(&self) -> SolverOptions {
        SolverOptions {
            max_iter: self.max_iter,
            step: self.step,
            kkt_tol: self.kkt_tol,
            mass_tol: self.mass_tol,
            interface_tol: self.interface_tol,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HomogMode {
    Flat,
    Convex,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HomogenizeBlock {
    pub n_list: Vec<usize>,
    /// Defaults to `convex` when the indentor is not flat.
    pub mode: Option<HomogMode>,
    /// Lower bound on the grid size of convex runs.
    pub min_nodes: usize,
}

impl Default for HomogenizeBlock {
    fn default() -> Self {
        Self {
            n_list: vec![1, 2, 4, 8, 16],
            mode: None,
            min_nodes: 512,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputBlock {
    pub dir: PathBuf,
    /// Write a gnuplot script next to the tables.
    pub plot: bool,
}

impl Default for OutputBlock {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
            plot: true,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub command: Option<Command>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub physical: Option<PhysicalBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reduced: Option<ReducedBlock>,
    #[serde(default)]
    pub grid: GridBlock,
    #[serde(default)]
    pub solver: SolverBlock,
    #[serde(default)]
    pub homogenize: HomogenizeBlock,
    #[serde(default)]
    pub output: OutputBlock,
}

/// Reduced problem data after the optional physical reduction.
pub struct Problem {
    pub p: f64,
    pub f: FrictionProfile,
    pub g: IndentorShape,
    /// `gamma` when the input was physical.
    pub gamma: Option<f64>,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| match e {
            CliError::Config(msg) => CliError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    /// Resolves the command from the command line and the file.
    pub fn resolve_command(&mut self, cli: Option<Command>) -> Result<Command, CliError> {
        let cmd = match (cli, self.command) {
            (Some(a), Some(b)) if a != b => {
                return Err(CliError::Config(format!(
                    "command line asks for {} but the config says {}",
                    a.name(),
                    b.name()
                )))
            }
            (Some(a), _) => a,
            (None, Some(b)) => b,
            (None, None) => return Err(CliError::Config("no command given".into())),
        };
        self.command = Some(cmd);
        Ok(cmd)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        match (&self.physical, &self.reduced) {
            (Some(_), Some(_)) => Err(CliError::Config("give either [physical] or [reduced], not both".into())),
            (None, None) => Err(CliError::Config("missing [physical] or [reduced] block".into())),
            _ => Ok(()),
        }?;
        if self.grid.n < 2 {
            return Err(CliError::Config(format!("grid.n = {} is too small", self.grid.n)));
        }
        Ok(())
    }

    /// Final `(P, f, g)`, with the physical reduction applied when needed.
    pub fn problem(&self) -> Result<Problem, CliError> {
        self.validate()?;
        if let Some(r) = &self.reduced {
            return Ok(Problem {
                p: r.p,
                f: r.friction.build()?,
                g: r.indentor.build()?,
                gamma: None,
            });
        }
        let ph = self.physical.as_ref().expect("validated");
        let params = PhysicalParams {
            nu: ph.nu,
            p: ph.p,
            fbar: ph.friction.build()?,
            gbar: ph.indentor.build()?,
        };
        let (p, f, g) = carleman_core::contact::reduce_physical(&params)?;
        Ok(Problem {
            p,
            f,
            g,
            gamma: Some(carleman_core::contact::gamma(ph.nu)?),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_fill_in() {
        let c = RunConfig::from_toml("[reduced]\np = 1.0\nfriction = { kind = \"constant\", value = 0.3 }\n").unwrap();
        assert_eq!(c.grid.n, 2048);
        assert_eq!(c.solver.kkt_tol, 1e-6);
        assert_eq!(c.reduced.as_ref().unwrap().indentor, IndentorSpec::Flat);
        c.validate().unwrap();
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let e = RunConfig::from_toml("[grid]\nn = 64\nsize = 3\n").unwrap_err();
        assert!(matches!(e, CliError::Config(_)));
    }

    #[test]
    fn both_blocks_rejected() {
        let c = RunConfig::from_toml(
            "[reduced]\np = 1.0\nfriction = { kind = \"constant\", value = 0.3 }\n\
             [physical]\nnu = 0.3\np = 1.0\nfriction = { kind = \"constant\", value = 0.3 }\n",
        )
        .unwrap();
        assert!(c.validate().is_err());
    }

    #[test]
    fn command_conflict() {
        let mut c = RunConfig {
            command: Some(Command::Contact),
            ..Default::default()
        };
        assert!(c.resolve_command(Some(Command::FlatPunch)).is_err());
        assert_eq!(c.resolve_command(Some(Command::Contact)).unwrap(), Command::Contact);
    }

    #[test]
    fn physical_reduction() {
        let c = RunConfig::from_toml(
            "[physical]\nnu = 0.25\np = 2.0\nfriction = { kind = \"constant\", value = 0.6 }\n\
             indentor = { kind = \"parabola\", r = 1.0 }\n",
        )
        .unwrap();
        let pb = c.problem().unwrap();
        let gm = 0.5 / 1.5;
        assert!((pb.gamma.unwrap() - gm).abs() < 1e-15);
        assert!((pb.f.eval(0.1) - 0.6 * gm).abs() < 1e-15);
        assert!((pb.g.g(1.0) - 1.0 / (2.0 * (1.0 - 0.0625))).abs() < 1e-15);
    }

    #[test]
    fn echo_round_trips() {
        let c = RunConfig::from_toml(
            "command = \"contact\"\n[reduced]\np = 0.5\nfriction = { kind = \"sine\", mean = 0.3, amplitude = 0.2, wavenumber = 3.14 }\n\
             indentor = { kind = \"wedge\", slope = 0.1 }\n",
        )
        .unwrap();
        let text = toml::to_string(&c).unwrap();
        assert_eq!(RunConfig::from_toml(&text).unwrap(), c);
    }
}
