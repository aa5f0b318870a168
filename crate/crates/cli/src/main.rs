//! `smero`: command-line front end for smero-core.
//!
//! Exit status is 0 on success, 1 when a computation or a property check
//! fails and 2 when the input is invalid. Errors are written to stderr as a
//! single JSON object.

mod functions;

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use num_complex::Complex64;
use serde_json::{json, Value};
use smero_core::contour::{ContourOptions, PropagateOptions, Side, Sides};
use smero_core::frobenius::{frobenius_solution, is_smeromorphic, log_obstruction, Branch, OBSTRUCTION_TOL};
use smero_core::innerprod::{gram_signature, inner_product, FunctionHandle, InnerOptions, SIGNATURE_TOL};
use smero_core::potential::{Potential, PotentialSpec};
use smero_core::suite;
use smero_core::transfer::{
    default_base_point, discriminant_csv, discriminant_sweep, monodromy, periodic_spectrum_gaps, transfer_matrix, GapOptions,
    TransferOptions, TRANSFER_RTOL,
};
use smero_core::Error;

use crate::functions::FunctionSpec;

#[derive(Parser, Debug)]
#[command(name = "smero", version, about = "Spectral analysis of Schrodinger operators with meromorphic eigenfunctions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Poles, singularity profiles and meromorphy certificates on an interval.
    Analyze(AnalyzeArgs),
    /// Frobenius series at a pole.
    Frobenius(FrobeniusArgs),
    /// Transfer matrix between two points, or the monodromy with --period.
    Transfer(TransferArgs),
    /// Floquet discriminant on a real lambda grid, as CSV.
    Discriminant(DiscriminantArgs),
    /// Band edges and gaps of a periodic potential, as JSON.
    Gaps(GapsArgs),
    /// A single regularized pairing <f, g>.
    InnerProduct(InnerProductArgs),
    /// Gram matrix and signature of a family of functions.
    Gram(GramArgs),
    /// Runs the built-in property suite.
    Verify(VerifyArgs),
    /// Prints a built-in potential descriptor.
    Family(FamilyArgs),
}

#[derive(Args, Debug)]
struct PotentialArg {
    /// Potential descriptor: inline JSON or a path to a JSON file.
    #[arg(short, long)]
    potential: String,
}

#[derive(Args, Debug)]
struct OutputArg {
    /// Write to this file instead of stdout.
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct PathArgs {
    /// Detour side: `upper`, `lower`, or a comma list with one side per pole.
    #[arg(long, default_value = "upper")]
    sides: String,
    /// Detour radius; defaults to a fraction of the pole spacing.
    #[arg(long)]
    radius: Option<f64>,
    /// Relative tolerance of the integrator.
    #[arg(long, default_value_t = TRANSFER_RTOL)]
    rtol: f64,
    /// Integrate across detour arcs instead of using local series.
    #[arg(long)]
    integrate_arcs: bool,
}

impl PathArgs {
    fn contour(&self) -> Result<ContourOptions, CliError> {
        let mut c = ContourOptions::with_sides(parse_sides(&self.sides)?);
        c.radius = self.radius;
        Ok(c)
    }

    fn transfer(&self) -> Result<TransferOptions, CliError> {
        Ok(TransferOptions {
            contour: self.contour()?,
            propagate: PropagateOptions::with_rtol(self.rtol),
            series_arcs: !self.integrate_arcs,
        })
    }

    fn inner(&self) -> Result<InnerOptions, CliError> {
        let mut o = InnerOptions::with_contour(self.contour()?);
        o.propagate = PropagateOptions::with_rtol(self.rtol);
        Ok(o)
    }
}

#[derive(Args, Debug)]
struct AnalyzeArgs {
    #[command(flatten)]
    potential: PotentialArg,
    /// Interval `a,b` to search for poles; defaults to one period starting
    /// at a pole-free point, else `-10,10`.
    #[arg(long)]
    interval: Option<String>,
    /// Expansion order of the reported profiles.
    #[arg(long, default_value_t = 6)]
    order: i32,
    #[arg(long, default_value_t = OBSTRUCTION_TOL)]
    tol: f64,
    #[command(flatten)]
    out: OutputArg,
}

#[derive(Args, Debug)]
struct FrobeniusArgs {
    #[command(flatten)]
    potential: PotentialArg,
    /// Pole location.
    #[arg(long)]
    at: f64,
    /// Spectral parameter `re` or `re,im`.
    #[arg(long, default_value = "0")]
    lambda: String,
    #[arg(long, value_enum, default_value_t = BranchArg::Lower)]
    branch: BranchArg,
    /// Number of terms.
    #[arg(long, default_value_t = 30)]
    order: usize,
    #[command(flatten)]
    out: OutputArg,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum BranchArg {
    Lower,
    Upper,
}

impl From<BranchArg> for Branch {
    fn from(b: BranchArg) -> Branch {
        match b {
            BranchArg::Lower => Branch::Lower,
            BranchArg::Upper => Branch::Upper,
        }
    }
}

#[derive(Args, Debug)]
struct TransferArgs {
    #[command(flatten)]
    potential: PotentialArg,
    #[arg(long, default_value = "0")]
    lambda: String,
    /// Start point; with --period defaults to the automatic base point.
    #[arg(long)]
    x0: Option<f64>,
    /// End point.
    #[arg(long, conflicts_with = "period")]
    x1: Option<f64>,
    /// Transfer over one period from x0.
    #[arg(long)]
    period: bool,
    #[command(flatten)]
    path: PathArgs,
    #[command(flatten)]
    out: OutputArg,
}

#[derive(Args, Debug)]
struct DiscriminantArgs {
    #[command(flatten)]
    potential: PotentialArg,
    #[arg(long, default_value_t = 0.0)]
    lambda_min: f64,
    #[arg(long, default_value_t = 100.0)]
    lambda_max: f64,
    #[arg(long, default_value_t = 0.5)]
    step: f64,
    /// Base point of the monodromy.
    #[arg(long)]
    x0: Option<f64>,
    #[command(flatten)]
    path: PathArgs,
    #[command(flatten)]
    out: OutputArg,
}

#[derive(Args, Debug)]
struct GapsArgs {
    #[command(flatten)]
    potential: PotentialArg,
    #[arg(long, default_value_t = 100.0)]
    lambda_max: f64,
    #[arg(long)]
    lambda_min: Option<f64>,
    #[arg(long)]
    x0: Option<f64>,
    /// Grid points per band spacing in `sqrt(lambda)`.
    #[arg(long, default_value_t = 16)]
    samples_per_band: usize,
    /// Gaps narrower than this are reported closed.
    #[arg(long, default_value_t = 1e-8)]
    closed_width: f64,
    #[command(flatten)]
    path: PathArgs,
    #[command(flatten)]
    out: OutputArg,
}

#[derive(Args, Debug)]
struct InnerProductArgs {
    /// Needed for `solution` and `frobenius` functions.
    #[arg(short, long)]
    potential: Option<String>,
    /// Function descriptor (inline JSON or file).
    #[arg(long)]
    f: String,
    #[arg(long)]
    g: String,
    /// Interval `a,b`.
    #[arg(long, allow_hyphen_values = true)]
    interval: String,
    #[arg(long, default_value_t = smero_core::innerprod::RESIDUE_TOL)]
    residue_tol: f64,
    #[command(flatten)]
    path: PathArgs,
    #[command(flatten)]
    out: OutputArg,
}

#[derive(Args, Debug)]
struct GramArgs {
    #[arg(short, long)]
    potential: Option<String>,
    /// JSON array of function descriptors (inline or file).
    #[arg(long)]
    family: String,
    #[arg(long, allow_hyphen_values = true)]
    interval: String,
    #[arg(long, default_value_t = SIGNATURE_TOL)]
    tol: f64,
    #[command(flatten)]
    path: PathArgs,
    #[command(flatten)]
    out: OutputArg,
}

#[derive(Args, Debug)]
struct VerifyArgs {
    /// Run only these checks (1 to 10); repeatable.
    #[arg(long)]
    check: Vec<u8>,
    /// Emit a JSON report instead of text lines.
    #[arg(long)]
    json: bool,
    #[command(flatten)]
    out: OutputArg,
}

#[derive(Args, Debug)]
struct FamilyArgs {
    #[arg(value_enum)]
    name: FamilyName,
    /// Index for inverse_square.
    #[arg(long, default_value_t = 1)]
    n: u32,
    /// Index for csc_squared.
    #[arg(long, default_value_t = 1)]
    m: u32,
    /// Frequency for csc_squared.
    #[arg(long, default_value_t = 1.0)]
    a: f64,
    /// Order for adler_moser.
    #[arg(long, default_value_t = 2)]
    k: u32,
    /// Free parameters `tau_2, ..., tau_k` for adler_moser, comma separated.
    #[arg(long, allow_hyphen_values = true)]
    tau: Option<String>,
    /// Poles for rational_poles, comma separated.
    #[arg(long, allow_hyphen_values = true)]
    poles: Option<String>,
    #[arg(long)]
    period: Option<f64>,
    #[command(flatten)]
    out: OutputArg,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
#[value(rename_all = "snake_case")]
enum FamilyName {
    Free,
    InverseSquare,
    CscSquared,
    RationalPoles,
    AdlerMoser,
}

#[derive(Debug)]
enum CliError {
    Input(String),
    Compute(Error),
    Failed(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Input(_) => 2,
            CliError::Compute(e) if is_input_error(e) => 2,
            CliError::Compute(_) | CliError::Failed(_) => 1,
        }
    }

    fn to_json(&self) -> Value {
        let (kind, message) = match self {
            CliError::Input(m) => ("input", m.clone()),
            CliError::Compute(e) if is_input_error(e) => ("input", e.to_string()),
            CliError::Compute(e) => ("computation", e.to_string()),
            CliError::Failed(m) => ("property", m.clone()),
        };
        json!({ "error": kind, "message": message, "exit_code": self.code() })
    }
}

fn is_input_error(e: &Error) -> bool {
    matches!(
        e,
        Error::InvalidParameters(_)
            | Error::Aperiodic(_)
            | Error::Domain(_)
            | Error::PoleAtEndpoint(_)
            | Error::RadiusTooLarge { .. }
            | Error::RepeatedPole { .. }
    )
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Compute(e)
    }
}

type CliResult<T> = Result<T, CliError>;

/// Reads `arg` as a file when such a file exists, else as inline text.
fn inline_or_file(arg: &str) -> CliResult<String> {
    let trimmed = arg.trim_start();
    if trimmed.starts_with('{') || trimmed.starts_with('[') {
        return Ok(arg.to_string());
    }
    fs::read_to_string(arg).map_err(|e| CliError::Input(format!("cannot read '{arg}': {e}")))
}

fn parse_json<T: serde::de::DeserializeOwned>(arg: &str, what: &str) -> CliResult<T> {
    let text = inline_or_file(arg)?;
    serde_json::from_str(&text).map_err(|e| CliError::Input(format!("invalid {what}: {e}")))
}

fn load_potential(arg: &str) -> CliResult<Potential> {
    let spec: PotentialSpec = parse_json(arg, "potential descriptor")?;
    Ok(Potential::from_spec(&spec)?)
}

fn parse_floats(s: &str, what: &str) -> CliResult<Vec<f64>> {
    s.split(',')
        .map(|p| {
            p.trim()
                .parse::<f64>()
                .map_err(|_| CliError::Input(format!("invalid number '{p}' in {what}")))
        })
        .collect()
}

fn parse_interval(s: &str) -> CliResult<(f64, f64)> {
    match parse_floats(s, "interval")?.as_slice() {
        &[a, b] if a < b => Ok((a, b)),
        _ => Err(CliError::Input(format!("interval must be 'a,b' with a < b, got '{s}'"))),
    }
}

fn parse_complex(s: &str) -> CliResult<Complex64> {
    match *parse_floats(s, "lambda")?.as_slice() {
        [re] => Ok(Complex64::new(re, 0.0)),
        [re, im] => Ok(Complex64::new(re, im)),
        _ => Err(CliError::Input(format!("expected 're' or 're,im', got '{s}'"))),
    }
}

fn parse_sides(s: &str) -> CliResult<Sides> {
    let sides: Vec<Side> = s
        .split(',')
        .map(|p| p.trim().parse::<Side>())
        .collect::<Result<_, _>>()?;
    Ok(if sides.len() == 1 { Sides::All(sides[0]) } else { Sides::PerPole(sides) })
}

fn c_json(z: Complex64) -> Value {
    json!([z.re, z.im])
}

fn emit(out: &OutputArg, text: &str) -> CliResult<()> {
    match &out.output {
        Some(p) => fs::write(p, text).map_err(|e| CliError::Input(format!("cannot write '{}': {e}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn emit_json(out: &OutputArg, v: &Value) -> CliResult<()> {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    emit(out, &s)
}

fn to_value<T: serde::Serialize>(t: &T) -> Value {
    serde_json::to_value(t).expect("serializable")
}

fn analyze(a: &AnalyzeArgs) -> CliResult<()> {
    let u = load_potential(&a.potential.potential)?;
    let (lo, hi) = match (&a.interval, u.period()) {
        (Some(s), _) => parse_interval(s)?,
        (None, Some(t)) => {
            let b = default_base_point(&u)?;
            (b, b + t)
        }
        (None, None) => (-10.0, 10.0),
    };
    let mut poles = Vec::new();
    for x in u.list_singularities(lo, hi)? {
        let profile = u.singularity_profile(x, a.order)?;
        let cert = is_smeromorphic(&u, x, a.tol)?;
        poles.push(json!({ "location": x, "profile": profile, "certificate": cert }));
    }
    let verdict = poles
        .iter()
        .all(|p| p["certificate"]["verdict"].as_bool() == Some(true));
    emit_json(
        &a.out,
        &json!({
            "potential": u.spec(),
            "interval": [lo, hi],
            "period": u.period(),
            "poles": poles,
            "verdict": verdict,
        }),
    )
}

fn frobenius(a: &FrobeniusArgs) -> CliResult<()> {
    let u = load_potential(&a.potential.potential)?;
    let lambda = parse_complex(&a.lambda)?;
    let series = frobenius_solution(&u, a.at, lambda, a.branch.into(), a.order)?;
    let obstruction = log_obstruction(&u, a.at, lambda, 2 * a.order.max(8))?;
    emit_json(
        &a.out,
        &json!({
            "at": a.at,
            "lambda": c_json(lambda),
            "branch": Branch::from(a.branch),
            "series": series,
            "obstruction": c_json(obstruction),
        }),
    )
}

fn transfer(a: &TransferArgs) -> CliResult<()> {
    let u = load_potential(&a.potential.potential)?;
    let lambda = parse_complex(&a.lambda)?;
    let opts = a.path.transfer()?;
    let m = if a.period {
        monodromy(&u, lambda, a.x0, &opts)?
    } else {
        let (x0, x1) = match (a.x0, a.x1) {
            (Some(x0), Some(x1)) => (x0, x1),
            _ => return Err(CliError::Input("need --x0 and --x1, or --period".into())),
        };
        transfer_matrix(&u, lambda, x0, x1, &opts)?
    };
    let mut v = to_value(&m);
    v["det"] = c_json(m.det());
    v["trace"] = c_json(m.trace());
    emit_json(&a.out, &v)
}

fn discriminant(a: &DiscriminantArgs) -> CliResult<()> {
    if !(a.step > 0.0 && a.lambda_max >= a.lambda_min) {
        return Err(CliError::Input("need step > 0 and lambda_max >= lambda_min".into()));
    }
    let u = load_potential(&a.potential.potential)?;
    let n = ((a.lambda_max - a.lambda_min) / a.step + 1e-9).floor() as usize;
    let grid: Vec<Complex64> = (0..=n)
        .map(|i| Complex64::new(a.lambda_min + i as f64 * a.step, 0.0))
        .collect();
    let rows = discriminant_sweep(&u, &grid, a.x0, &a.path.transfer()?)?;
    emit(&a.out, &discriminant_csv(&rows))?;
    match rows.iter().filter(|r| r.delta.is_none()).count() {
        0 => Ok(()),
        k => Err(CliError::Failed(format!("{k} grid points failed"))),
    }
}

fn gaps(a: &GapsArgs) -> CliResult<()> {
    let u = load_potential(&a.potential.potential)?;
    let opts = GapOptions {
        lambda_min: a.lambda_min,
        samples_per_band: a.samples_per_band,
        base_point: a.x0,
        closed_width: a.closed_width,
        transfer: a.path.transfer()?,
        ..Default::default()
    };
    let gaps = periodic_spectrum_gaps(&u, a.lambda_max, &opts)?;
    emit_json(
        &a.out,
        &json!({
            "potential": u.spec(),
            "lambda_max": a.lambda_max,
            "gaps": gaps,
        }),
    )
}

fn build_functions(specs: &[FunctionSpec], u: Option<&Potential>) -> CliResult<Vec<FunctionHandle>> {
    let mut out = Vec::new();
    for s in specs {
        out.extend(s.build(u)?);
    }
    Ok(out)
}

fn single(arg: &str, u: Option<&Potential>) -> CliResult<FunctionHandle> {
    let spec: FunctionSpec = parse_json(arg, "function descriptor")?;
    let mut hs = build_functions(&[spec], u)?;
    if hs.len() != 1 {
        return Err(CliError::Input("expected a single function, not a basis".into()));
    }
    Ok(hs.remove(0))
}

fn inner(a: &InnerProductArgs) -> CliResult<()> {
    let u = a.potential.as_deref().map(load_potential).transpose()?;
    let f = single(&a.f, u.as_ref())?;
    let g = single(&a.g, u.as_ref())?;
    let interval = parse_interval(&a.interval)?;
    let mut opts = a.path.inner()?;
    opts.residue_tol = a.residue_tol;
    let v = inner_product(&f, &g, interval, &opts)?;
    emit_json(&a.out, &json!({ "interval": [interval.0, interval.1], "value": c_json(v) }))
}

fn gram(a: &GramArgs) -> CliResult<()> {
    let u = a.potential.as_deref().map(load_potential).transpose()?;
    let specs: Vec<FunctionSpec> = parse_json(&a.family, "function family")?;
    let family = build_functions(&specs, u.as_ref())?;
    let interval = parse_interval(&a.interval)?;
    let r = gram_signature(&family, interval, a.tol, &a.path.inner()?)?;
    let mut v = to_value(&r);
    v["n_minus"] = json!(r.n_minus());
    emit_json(&a.out, &v)
}

fn verify(a: &VerifyArgs) -> CliResult<()> {
    let ids: Vec<u8> = if a.check.is_empty() {
        suite::CHECKS.iter().map(|c| c.0).collect()
    } else {
        a.check.clone()
    };
    let mut reports = Vec::new();
    for id in ids {
        let r = suite::run_check(id)?;
        log::info!("{}", r.line());
        reports.push(r);
    }
    let failed: Vec<u8> = reports.iter().filter(|r| !r.passed).map(|r| r.id).collect();
    if a.json {
        emit_json(&a.out, &json!({ "passed": failed.is_empty(), "checks": reports }))?;
    } else {
        let text: String = reports.iter().map(|r| r.line() + "\n").collect();
        emit(&a.out, &text)?;
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Failed(format!("checks failed: {failed:?}")))
    }
}

fn family(a: &FamilyArgs) -> CliResult<()> {
    let spec = match a.name {
        FamilyName::Free => PotentialSpec::free(),
        FamilyName::InverseSquare => PotentialSpec::inverse_square(a.n),
        FamilyName::CscSquared => PotentialSpec::csc_squared(a.m, a.a),
        FamilyName::AdlerMoser => {
            let tau = a.tau.as_deref().map(|t| parse_floats(t, "tau")).transpose()?;
            PotentialSpec::adler_moser(a.k, &tau.unwrap_or_default())
        }
        FamilyName::RationalPoles => {
            let poles = a
                .poles
                .as_deref()
                .ok_or_else(|| CliError::Input("rational_poles needs --poles".into()))?;
            let poles: Vec<Complex64> = parse_floats(poles, "poles")?
                .into_iter()
                .map(|p| Complex64::new(p, 0.0))
                .collect();
            PotentialSpec::rational_poles(&poles)
        }
    };
    let spec = match a.period {
        Some(t) => spec.with_period(t),
        None => spec,
    };
    Potential::from_spec(&spec)?;
    emit_json(&a.out, &to_value(&spec))
}

fn run(cli: &Cli) -> CliResult<()> {
    match &cli.command {
        Command::Analyze(a) => analyze(a),
        Command::Frobenius(a) => frobenius(a),
        Command::Transfer(a) => transfer(a),
        Command::Discriminant(a) => discriminant(a),
        Command::Gaps(a) => gaps(a),
        Command::InnerProduct(a) => inner(a),
        Command::Gram(a) => gram(a),
        Command::Verify(a) => verify(a),
        Command::Family(a) => family(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let err = CliError::Input(e.to_string().trim_end().to_string());
            eprintln!("{}", err.to_json());
            return ExitCode::from(err.code());
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.code())
        }
    }
}
