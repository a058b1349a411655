//! Run configuration. A config file is one TOML table holding `command`,
//! the shared output keys and the command's own parameters; flags given on
//! the command line win over file values.

use std::path::PathBuf;

use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};
use sticky_bethe::density::RuleKind;
use sticky_bethe::rwre::Route;

use crate::CliError;

macro_rules! overlay {
    ($dst:expr, $src:expr; $($f:ident),+ $(,)?) => {
        $( if $dst.$f.is_none() { $dst.$f = $src.$f; } )+
    };
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Format {
    Json,
    Csv,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum RuleArg {
    Trapezoid,
    GaussHermite,
}

impl From<RuleArg> for RuleKind {
    fn from(r: RuleArg) -> Self {
        match r {
            RuleArg::Trapezoid => RuleKind::Trapezoid,
            RuleArg::GaussHermite => RuleKind::GaussHermite,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum RouteArg {
    Annealed,
    Quenched,
}

impl From<RouteArg> for Route {
    fn from(r: RouteArg) -> Self {
        match r {
            RouteArg::Annealed => Route::Annealed,
            RouteArg::Quenched => Route::Quenched,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum DensityMethod {
    /// Full permutation sum.
    Full,
    /// Single-product diagonal integrand; needs equal x and equal y coordinates.
    Reduced,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum MeshArg {
    /// Composite Gauss–Legendre graded toward 0.
    Graded,
    /// Plain Gauss–Legendre with --nodes points.
    Legendre,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum IdentityName {
    /// Cancellation of the boundary operator over the permutation sum (uses --n).
    Boundary,
    /// Constants in the Vandermonde factorization of both parts (uses --n).
    Constants,
    /// Alternating sum over the symmetric group (uses --m).
    Alternating,
    /// Summation formula over ordered set partitions (uses --m, --trials, --seed).
    Summation,
    /// Determinant form of the amplitude sum (uses --n, --trials, --seed).
    Determinant,
    /// Boundary-condition coefficients up to --m.
    Coefficients,
    /// Companion coefficient identity up to --m.
    Companion,
    /// Everything above at the default sizes (uses --trials, --seed).
    Suite,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum MethodArg {
    Expansion,
    Grid,
    Random,
}

#[derive(Clone, Debug, Default, PartialEq, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DensityArgs {
    /// Start point, weakly decreasing, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub x: Option<Vec<f64>>,
    /// End point, weakly decreasing, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub y: Option<Vec<f64>>,
    #[arg(long)]
    pub t: Option<f64>,
    #[arg(long)]
    pub theta: Option<f64>,
    #[arg(long, value_enum)]
    pub method: Option<DensityMethod>,
    #[arg(long, value_enum)]
    pub rule: Option<RuleArg>,
    #[arg(long)]
    pub nodes_per_dim: Option<usize>,
    /// Truncation and aliasing target e^{-accuracy}.
    #[arg(long)]
    pub accuracy: Option<f64>,
    #[arg(long)]
    pub jitter: Option<f64>,
}

impl DensityArgs {
    fn overlay(&mut self, f: Self) {
        overlay!(self, f; x, y, t, theta, method, rule, nodes_per_dim, accuracy, jitter);
    }
}

#[derive(Clone, Debug, Default, PartialEq, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyArgs {
    #[arg(long, value_enum)]
    pub identity: Option<IdentityName>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long, value_enum)]
    pub method: Option<MethodArg>,
    /// Exact θ as p/q, for the summation and determinant identities.
    #[arg(long)]
    pub theta: Option<String>,
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

impl VerifyArgs {
    fn overlay(&mut self, f: Self) {
        overlay!(self, f; identity, n, m, method, theta, trials, seed);
    }
}

#[derive(Clone, Debug, Default, PartialEq, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareArgs {
    /// Test function: unit, gauss, gap, cos or ramp.
    #[arg(long)]
    pub preset: Option<String>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub t: Option<f64>,
    #[arg(long)]
    pub theta: Option<f64>,
    /// Lattice spacing of the walks.
    #[arg(long)]
    pub eps: Option<f64>,
    #[arg(long)]
    pub paths: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum)]
    pub route: Option<RouteArg>,
}

impl CompareArgs {
    fn overlay(&mut self, f: Self) {
        overlay!(self, f; preset, n, t, theta, eps, paths, seed, route);
    }
}

#[derive(Clone, Debug, Default, PartialEq, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AtomsArgs {
    /// Largest moment order.
    #[arg(long)]
    pub n_max: Option<usize>,
    /// Atom locations, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub y: Option<Vec<f64>>,
    #[arg(long)]
    pub t: Option<f64>,
    #[arg(long)]
    pub theta: Option<f64>,
    #[arg(long)]
    pub accuracy: Option<f64>,
}

impl AtomsArgs {
    fn overlay(&mut self, f: Self) {
        overlay!(self, f; n_max, y, t, theta, accuracy);
    }
}

#[derive(Clone, Debug, Default, PartialEq, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FredholmArgs {
    /// λ values, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub lambda: Option<Vec<f64>>,
    /// Atom locations, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub y: Option<Vec<f64>>,
    #[arg(long)]
    pub t: Option<f64>,
    #[arg(long)]
    pub theta: Option<f64>,
    #[arg(long, value_enum)]
    pub mesh: Option<MeshArg>,
    /// Node count for --mesh legendre.
    #[arg(long)]
    pub nodes: Option<usize>,
    /// Series orders kept.
    #[arg(long)]
    pub max_terms: Option<usize>,
    /// Largest allowed change of the determinant between the two meshes.
    #[arg(long)]
    pub det_tol: Option<f64>,
}

impl FredholmArgs {
    fn overlay(&mut self, f: Self) {
        overlay!(self, f; lambda, y, t, theta, mesh, nodes, max_terms, det_tol);
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Params {
    Density(DensityArgs),
    Verify(VerifyArgs),
    Compare(CompareArgs),
    Atoms(AtomsArgs),
    Fredholm(FredholmArgs),
}

impl Params {
    pub fn command(&self) -> &'static str {
        match self {
            Params::Density(_) => "density",
            Params::Verify(_) => "verify",
            Params::Compare(_) => "compare",
            Params::Atoms(_) => "atoms",
            Params::Fredholm(_) => "fredholm",
        }
    }
}

/// Everything one run depends on.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub params: Params,
    pub threads: Option<usize>,
    pub out: Option<PathBuf>,
    pub format: Option<Format>,
}

#[derive(Deserialize)]
struct FileHeader {
    command: Option<String>,
    threads: Option<usize>,
    out: Option<PathBuf>,
    format: Option<Format>,
    #[serde(flatten)]
    rest: toml::Table,
}

fn usage(e: impl std::fmt::Display) -> CliError {
    CliError::Usage(e.to_string())
}

impl RunConfig {
    pub fn to_toml(&self) -> Result<String, CliError> {
        let mut table = match &self.params {
            Params::Density(a) => toml::Table::try_from(a),
            Params::Verify(a) => toml::Table::try_from(a),
            Params::Compare(a) => toml::Table::try_from(a),
            Params::Atoms(a) => toml::Table::try_from(a),
            Params::Fredholm(a) => toml::Table::try_from(a),
        }
        .map_err(usage)?;
        table.insert("command".into(), self.params.command().into());
        if let Some(t) = self.threads {
            table.insert("threads".into(), (t as i64).into());
        }
        if let Some(o) = &self.out {
            table.insert("out".into(), o.to_string_lossy().into_owned().into());
        }
        if let Some(f) = self.format {
            table.insert("format".into(), toml::Value::try_from(f).map_err(usage)?);
        }
        toml::to_string(&table).map_err(usage)
    }

    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let h: FileHeader = toml::from_str(text).map_err(usage)?;
        let command = h.command.ok_or_else(|| usage("config file has no `command` key"))?;
        let rest = toml::Value::Table(h.rest);
        let params = match command.as_str() {
            "density" => Params::Density(rest.try_into().map_err(usage)?),
            "verify" => Params::Verify(rest.try_into().map_err(usage)?),
            "compare" => Params::Compare(rest.try_into().map_err(usage)?),
            "atoms" => Params::Atoms(rest.try_into().map_err(usage)?),
            "fredholm" => Params::Fredholm(rest.try_into().map_err(usage)?),
            other => return Err(usage(format!("unknown command {other:?} in config file"))),
        };
        Ok(Self { params, threads: h.threads, out: h.out, format: h.format })
    }

    /// Fills every unset value of `self` from `file`. The commands must match.
    pub fn overlay(&mut self, file: RunConfig) -> Result<(), CliError> {
        overlay!(self, file; threads, out, format);
        match (&mut self.params, file.params) {
            (Params::Density(a), Params::Density(b)) => a.overlay(b),
            (Params::Verify(a), Params::Verify(b)) => a.overlay(b),
            (Params::Compare(a), Params::Compare(b)) => a.overlay(b),
            (Params::Atoms(a), Params::Atoms(b)) => a.overlay(b),
            (Params::Fredholm(a), Params::Fredholm(b)) => a.overlay(b),
            (a, b) => {
                return Err(usage(format!("config file is for `{}`, not `{}`", b.command(), a.command())));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trips_through_toml() {
        let cfgs = [
            RunConfig {
                params: Params::Density(DensityArgs {
                    x: Some(vec![1.0, 0.0, -1.0]),
                    y: Some(vec![0.5, 0.25, -0.125]),
                    t: Some(0.1 + 0.2),
                    theta: Some(std::f64::consts::PI),
                    method: Some(DensityMethod::Reduced),
                    rule: Some(RuleArg::GaussHermite),
                    nodes_per_dim: Some(30),
                    accuracy: Some(20.0),
                    jitter: Some(1e-3),
                }),
                threads: Some(3),
                out: Some("results/run1".into()),
                format: Some(Format::Csv),
            },
            RunConfig {
                params: Params::Verify(VerifyArgs {
                    identity: Some(IdentityName::Summation),
                    m: Some(4),
                    theta: Some("3/2".into()),
                    seed: Some(u64::MAX / 3),
                    ..Default::default()
                }),
                threads: None,
                out: None,
                format: None,
            },
            RunConfig {
                params: Params::Compare(CompareArgs { preset: Some("gap".into()), paths: Some(1000), route: Some(RouteArg::Quenched), ..Default::default() }),
                threads: None,
                out: None,
                format: Some(Format::Json),
            },
            RunConfig { params: Params::Atoms(AtomsArgs { n_max: Some(3), y: Some(vec![0.0, 1.0]), ..Default::default() }), threads: None, out: None, format: None },
            RunConfig {
                params: Params::Fredholm(FredholmArgs { lambda: Some(vec![0.0, 0.5]), mesh: Some(MeshArg::Legendre), nodes: Some(128), ..Default::default() }),
                threads: Some(1),
                out: None,
                format: None,
            },
        ];
        for c in cfgs {
            let text = c.to_toml().unwrap();
            assert_eq!(RunConfig::from_toml(&text).unwrap(), c, "{text}");
        }
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(RunConfig::from_toml("command = \"atoms\"\nnmax = 3\n").is_err());
        assert!(RunConfig::from_toml("t = 1.0\n").is_err());
    }

    #[test]
    fn flags_win_over_file() {
        let mut cli = RunConfig {
            params: Params::Atoms(AtomsArgs { t: Some(2.0), ..Default::default() }),
            threads: None,
            out: None,
            format: None,
        };
        let file = RunConfig::from_toml("command = \"atoms\"\nt = 0.5\ntheta = 3.0\nthreads = 2\n").unwrap();
        cli.overlay(file).unwrap();
        let Params::Atoms(a) = &cli.params else { panic!() };
        assert_eq!((a.t, a.theta, cli.threads), (Some(2.0), Some(3.0), Some(2)));
        let wrong = RunConfig::from_toml("command = \"density\"\n").unwrap();
        assert!(cli.overlay(wrong).is_err());
    }
}
