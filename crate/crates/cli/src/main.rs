mod config;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Value};
use sticky_bethe::atoms::{
    atom_moment, diagonal_density, fredholm_check, fredholm_check_on, write_fredholm_table, write_moment_table, MeshParams, NystromGrid,
    SeriesMoments, DEFAULT_SERIES_TERMS,
};
use sticky_bethe::density::{evaluate_density, QuadratureSpec};
use sticky_bethe::identity::{
    extract_vandermonde_constants, parse_theta, run_identity_suite, verify_alternating_identity, verify_b_boundary_identity,
    verify_bc_coefficients, verify_companion_identity, verify_determinant_identity, verify_summation_formula, Method, Part,
};
use sticky_bethe::measure::WeylPoint;
use sticky_bethe::par;
use sticky_bethe::rwre::{compare, Preset, RwreConfig};
use sticky_bethe::Error;

use config::{
    AtomsArgs, CompareArgs, DensityArgs, DensityMethod, FredholmArgs, Format, IdentityName, MeshArg, MethodArg, Params, RunConfig, VerifyArgs,
};

#[derive(Debug)]
pub enum CliError {
    /// Bad flags, config or domain: exit 2.
    Usage(String),
    /// Numerical failure or failed check: exit 1.
    Compute(String),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::Domain(_) | Error::Budget { .. } => CliError::Usage(e.to_string()),
            _ => CliError::Compute(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Compute(format!("i/o: {e}"))
    }
}

#[derive(Parser)]
#[command(
    name = "sticky",
    version,
    about = "Transition densities, identity certificates, random-walk comparisons and atom statistics for \
             sticky Brownian motions with uniform splitting measure",
    allow_negative_numbers = true
)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct Common {
    /// TOML file with `command` and parameter keys; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads. Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Directory for the report file. Nothing is written elsewhere.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Transition density u_t(x, y) of n ordered sticky Brownian particles,
    /// with respect to the reference measure m_θ on the Weyl chamber.
    Density(DensityArgs),
    /// Exact certificates for the algebraic identities behind the density.
    /// Exit status 0 iff every check passes.
    Verify(VerifyArgs),
    /// E f(Y_t) from the density against a Monte Carlo estimate from
    /// Beta random walks in random environment, with a z-score.
    Compare(CompareArgs),
    /// Moments ∫ wⁿ γ_t(y, dw) of the atom sizes of the Howitt–Warren flow
    /// at y, from diagonal density values.
    Atoms(AtomsArgs),
    /// Atom-moment series against the Fredholm determinant
    /// det(I + λ/(2πθ) K_y) of the Howitt–Warren flow.
    Fredholm(FredholmArgs),
}

/// Rounds every float to 12 significant digits so reruns print identical bytes.
fn fix_precision(v: Value) -> Value {
    match v {
        Value::Number(n) if n.is_f64() => {
            let x = n.as_f64().unwrap();
            let r: f64 = format!("{x:.11e}").parse().unwrap();
            json!(r)
        }
        Value::Array(a) => Value::Array(a.into_iter().map(fix_precision).collect()),
        Value::Object(o) => Value::Object(o.into_iter().map(|(k, v)| (k, fix_precision(v))).collect()),
        other => other,
    }
}

fn flatten_csv(prefix: &str, v: &Value, rows: &mut Vec<(String, String)>) {
    match v {
        Value::Object(o) => {
            for (k, v) in o {
                let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                flatten_csv(&key, v, rows);
            }
        }
        Value::Array(a) => {
            for (i, v) in a.iter().enumerate() {
                flatten_csv(&format!("{prefix}[{i}]"), v, rows);
            }
        }
        Value::String(s) => rows.push((prefix.into(), s.clone())),
        other => rows.push((prefix.into(), other.to_string())),
    }
}

struct Report {
    json: Value,
    /// Native table for commands that produce one.
    table: Option<String>,
    passed: bool,
}

impl Report {
    fn render(&self, format: Format) -> String {
        match (format, &self.table) {
            (Format::Csv, Some(t)) => t.clone(),
            (Format::Csv, None) => {
                let mut rows = Vec::new();
                flatten_csv("", &fix_precision(self.json.clone()), &mut rows);
                let mut s = String::from("key,value\n");
                for (k, v) in rows {
                    s.push_str(&format!("{k},{v}\n"));
                }
                s
            }
            (Format::Json, _) => serde_json::to_string_pretty(&fix_precision(self.json.clone())).unwrap() + "\n",
        }
    }
}

fn to_json<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("serializable report")
}

fn need<T>(v: Option<T>, what: &str) -> Result<T, CliError> {
    v.ok_or_else(|| CliError::Usage(format!("missing --{what}")))
}

fn density_spec(n: usize, a: &DensityArgs) -> QuadratureSpec {
    let mut spec = QuadratureSpec::for_dim(n);
    if let Some(r) = a.rule {
        spec.rule = r.into();
        if spec.rule == sticky_bethe::density::RuleKind::GaussHermite {
            spec.contour_shift = false;
        }
    }
    if let Some(v) = a.nodes_per_dim {
        spec.nodes_per_dim = v;
    }
    if let Some(v) = a.accuracy {
        spec.accuracy = v;
    }
    if a.jitter.is_some() {
        spec.jitter = a.jitter;
    }
    spec
}

fn cmd_density(a: &DensityArgs) -> Result<Report, CliError> {
    let x = need(a.x.clone(), "x")?;
    let y = need(a.y.clone(), "y")?;
    let t = need(a.t, "t")?;
    let theta = a.theta.unwrap_or(1.0);
    if x.len() != y.len() {
        return Err(CliError::Usage(format!("x has {} coordinates but y has {}", x.len(), y.len())));
    }
    let xp = WeylPoint::new(x.clone())?;
    let yp = WeylPoint::new(y.clone())?;
    let n = x.len();
    let spec = density_spec(n, a);
    let method = a.method.unwrap_or(DensityMethod::Full);
    let v = match method {
        DensityMethod::Full => evaluate_density(&xp, &yp, t, theta, &spec)?,
        DensityMethod::Reduced => {
            if x.iter().any(|&v| v != x[0]) || y.iter().any(|&v| v != y[0]) {
                return Err(CliError::Usage("--method reduced needs all x equal and all y equal".into()));
            }
            diagonal_density(n, y[0] - x[0], t, theta, &spec)?
        }
    };
    let json = json!({
        "command": "density", "n": n, "x": x, "y": y, "t": t, "theta": theta, "method": method,
        "value": v.value, "est_error": v.est_error, "imag": v.imag,
    });
    Ok(Report { json, table: None, passed: true })
}

fn identity_method(a: &VerifyArgs, n: usize, cap: usize) -> Result<Method, CliError> {
    Ok(match a.method {
        Some(MethodArg::Expansion) => Method::Expansion,
        Some(MethodArg::Grid) => Method::Grid,
        Some(MethodArg::Random) => Method::Random { trials: a.trials.unwrap_or(50), seed: need(a.seed, "seed")? },
        None if n <= cap => Method::Expansion,
        None => Method::Grid,
    })
}

fn cmd_verify(a: &VerifyArgs) -> Result<Report, CliError> {
    use sticky_bethe::identity::EXPANSION_CAP;
    let which = need(a.identity, "identity")?;
    let theta = parse_theta(a.theta.as_deref().unwrap_or("3/2"))?;
    let trials = a.trials.unwrap_or(50);
    let (json, passed) = match which {
        IdentityName::Boundary => {
            let n = need(a.n, "n")?;
            let c = verify_b_boundary_identity(n, identity_method(a, n, EXPANSION_CAP)?)?;
            (to_json(&c), c.passed)
        }
        IdentityName::Constants => {
            let n = need(a.n, "n")?;
            let method = identity_method(a, n, EXPANSION_CAP)?;
            let d = extract_vandermonde_constants(n, Part::Diffusion, method)?;
            let r = extract_vandermonde_constants(n, Part::Drift, method)?;
            let passed = d.passed && r.passed;
            (json!({ "diffusion": to_json(&d), "drift": to_json(&r), "passed": passed }), passed)
        }
        IdentityName::Alternating => {
            let m = need(a.m, "m")?;
            let c = verify_alternating_identity(m, identity_method(a, m, EXPANSION_CAP)?)?;
            (to_json(&c), c.passed)
        }
        IdentityName::Summation => {
            let c = verify_summation_formula(need(a.m, "m")?, &theta, trials, need(a.seed, "seed")?)?;
            (to_json(&c), c.passed)
        }
        IdentityName::Determinant => {
            let c = verify_determinant_identity(need(a.n, "n")?, &theta, trials, need(a.seed, "seed")?)?;
            (to_json(&c), c.passed)
        }
        IdentityName::Coefficients => {
            let c = verify_bc_coefficients(need(a.m, "m")?)?;
            (to_json(&c), c.passed)
        }
        IdentityName::Companion => {
            let c = verify_companion_identity(need(a.m, "m")?)?;
            (to_json(&c), c.passed)
        }
        IdentityName::Suite => {
            let r = run_identity_suite(trials, need(a.seed, "seed")?)?;
            (to_json(&r), r.passed)
        }
    };
    Ok(Report { json, table: None, passed })
}

fn cmd_compare(a: &CompareArgs) -> Result<Report, CliError> {
    let preset = Preset::parse(a.preset.as_deref().unwrap_or("gauss"))?;
    let n = a.n.unwrap_or(2);
    let t = a.t.unwrap_or(1.0);
    let theta = a.theta.unwrap_or(1.0);
    let mut cfg = RwreConfig::new(n, theta, a.eps.unwrap_or(0.02), t, need(a.paths, "paths")?, need(a.seed, "seed")?);
    if let Some(r) = a.route {
        cfg.route = r.into();
    }
    cfg.validate()?;
    let c = compare(|y: &[f64]| preset.eval(y), t, theta, &cfg, &QuadratureSpec::for_dim(n))?;
    let passed = c.z.abs() <= 3.0;
    let json = json!({
        "command": "compare", "preset": preset.name(), "config": to_json(&cfg), "steps": cfg.steps(),
        "mc": to_json(&c.mc), "quadrature": to_json(&c.quadrature), "z": c.z, "within_3_sigma": passed,
    });
    Ok(Report { json, table: None, passed })
}

fn cmd_atoms(a: &AtomsArgs) -> Result<Report, CliError> {
    let n_max = need(a.n_max, "n-max")?;
    let ys = a.y.clone().unwrap_or_else(|| vec![0.0]);
    let t = need(a.t, "t")?;
    let theta = a.theta.unwrap_or(1.0);
    let mut rows = Vec::new();
    for n in 1..=n_max {
        let mut spec = QuadratureSpec::for_dim(n);
        if let Some(acc) = a.accuracy {
            spec.accuracy = acc;
        }
        for &y in &ys {
            rows.push((t, n, y, atom_moment(n, y, t, theta, &spec)?));
        }
    }
    let mut table = Vec::new();
    write_moment_table(&rows, &mut table)?;
    let json = Value::Array(
        rows.iter().map(|(t, n, y, v)| json!({ "t": t, "n": n, "y": y, "theta": theta, "moment": v.value, "est_error": v.est_error })).collect(),
    );
    Ok(Report { json, table: Some(String::from_utf8(table).unwrap()), passed: true })
}

fn cmd_fredholm(a: &FredholmArgs) -> Result<Report, CliError> {
    let lambdas = need(a.lambda.clone(), "lambda")?;
    let ys = a.y.clone().unwrap_or_else(|| vec![0.0]);
    let t = need(a.t, "t")?;
    let theta = a.theta.unwrap_or(1.0);
    let det_tol = a.det_tol.unwrap_or(1e-6);
    let lmax = lambdas.iter().fold(0.0f64, |m, l| m.max(l.abs()));
    let mut rows = Vec::new();
    for &y in &ys {
        let moments = SeriesMoments::compute(y, t, theta, a.max_terms.unwrap_or(DEFAULT_SERIES_TERMS), lmax, 1e-8)?;
        for &lambda in &lambdas {
            let row = match a.mesh.unwrap_or(MeshArg::Graded) {
                MeshArg::Graded => fredholm_check(lambda, &moments, &MeshParams::default(), det_tol)?,
                MeshArg::Legendre => {
                    let m = a.nodes.unwrap_or(256);
                    let coarse = NystromGrid::legendre(t, m, MeshParams::default().envelope);
                    let fine = NystromGrid::legendre(t, m + m / 2, MeshParams::default().envelope);
                    fredholm_check_on(lambda, &moments, &coarse, &fine, det_tol)?
                }
            };
            rows.push(row);
        }
    }
    let mut table = Vec::new();
    write_fredholm_table(&rows, &mut table)?;
    Ok(Report { json: to_json(&rows), table: Some(String::from_utf8(table).unwrap()), passed: true })
}

fn run(cfg: &RunConfig) -> Result<Report, CliError> {
    if cfg.threads == Some(0) {
        return Err(CliError::Usage("--threads must be at least 1".into()));
    }
    par::with_threads(cfg.threads, || match &cfg.params {
        Params::Density(a) => cmd_density(a),
        Params::Verify(a) => cmd_verify(a),
        Params::Compare(a) => cmd_compare(a),
        Params::Atoms(a) => cmd_atoms(a),
        Params::Fredholm(a) => cmd_fredholm(a),
    })
}

fn main_inner() -> Result<bool, CliError> {
    let cli = Cli::parse();
    let params = match cli.cmd {
        Cmd::Density(a) => Params::Density(a),
        Cmd::Verify(a) => Params::Verify(a),
        Cmd::Compare(a) => Params::Compare(a),
        Cmd::Atoms(a) => Params::Atoms(a),
        Cmd::Fredholm(a) => Params::Fredholm(a),
    };
    let mut cfg = RunConfig { params, threads: cli.common.threads, out: cli.common.out, format: cli.common.format };
    if let Some(path) = &cli.common.config {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
        cfg.overlay(RunConfig::from_toml(&text)?)?;
    }
    let report = run(&cfg)?;
    let default_format = if matches!(cfg.params, Params::Atoms(_) | Params::Fredholm(_)) { Format::Csv } else { Format::Json };
    let format = cfg.format.unwrap_or(default_format);
    let text = report.render(format);
    std::io::stdout().write_all(text.as_bytes())?;
    if let Some(dir) = &cfg.out {
        std::fs::create_dir_all(dir)?;
        let ext = if format == Format::Csv { "csv" } else { "json" };
        std::fs::write(dir.join(format!("{}.{ext}", cfg.params.command())), &text)?;
        std::fs::write(dir.join(format!("{}.toml", cfg.params.command())), cfg.to_toml()?)?;
    }
    Ok(report.passed)
}

fn main() -> ExitCode {
    match main_inner() {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(CliError::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(CliError::Compute(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
    }
}
