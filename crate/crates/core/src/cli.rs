//! The `berkson` command line.
//!
//! Exit codes: 0 success, 1 failed verification or non-convergence, 2 usage
//! error, 3 I/O or input-format error.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::error::Error;
use crate::identify::{
    classify_equation, verdict_functional, verdict_structural, CurveParams, EquationSpec, ScanOptions,
    Support,
};
use crate::kernel::{Kernel, KernelConfig, MAX_ORDER};
use crate::model::{fit_known_tau, fit_unknown_tau, simulate, Dataset, Design, FitOptions, ModelParams, Sampler, Theta};
use crate::report::{fmt_sig17, sig17, to_json};
use crate::verify::{certify, Grid, Lemma};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_IO: i32 = 3;

/// Environment variable overriding the Gauss–Hermite order.
pub const QUAD_ORDER_ENV: &str = "BERKSON_QUAD_ORDER";

#[derive(Debug, Parser)]
#[command(name = "berkson", version, about = "Logistic regression with Gaussian Berkson error")]
struct Cli {
    /// Write the result here instead of standard output.
    #[arg(short, long, global = true, value_name = "PATH")]
    output: Option<PathBuf>,
    /// Gauss–Hermite order for the kernel (also read from BERKSON_QUAD_ORDER).
    #[arg(long, global = true, value_name = "N")]
    quad_order: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Tabulate L_K(x, V) on a grid of x.
    Tabulate(TabulateArgs),
    /// Certify one of the kernel inequalities on a grid.
    Verify(VerifyArgs),
    /// Count crossings of two smoothed curves, or give an identifiability verdict.
    Identify(IdentifyArgs),
    /// Simulate a dataset.
    Simulate(SimulateArgs),
    /// Fit the model by maximum likelihood.
    Fit(FitArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Debug, Args)]
struct TabulateArgs {
    #[arg(long)]
    k: usize,
    #[arg(long, allow_negative_numbers = true)]
    v: f64,
    #[arg(long, allow_negative_numbers = true)]
    xmin: f64,
    #[arg(long, allow_negative_numbers = true)]
    xmax: f64,
    #[arg(long)]
    step: f64,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
}

#[derive(Debug, Args)]
struct VerifyArgs {
    /// key-inequality, third-deriv, curvature-sign or aux-f.
    #[arg(long)]
    lemma: String,
    /// Axes as `x=A:B:STEP;v=V1,V2;d=D1,...`; missing axes use the default grid.
    #[arg(long, allow_hyphen_values = true)]
    grid: Option<String>,
}

#[derive(Debug, Args)]
struct IdentifyArgs {
    /// Left curve as `b0,b1,s`.
    #[arg(long, allow_hyphen_values = true, requires = "right", conflicts_with_all = ["design", "support"])]
    left: Option<String>,
    /// Right curve as `b0,b1,s`.
    #[arg(long, allow_hyphen_values = true, requires = "left")]
    right: Option<String>,
    /// Search window `A,B`.
    #[arg(long, allow_hyphen_values = true, requires = "left")]
    window: Option<String>,
    /// CSV file with an `x0` column (functional design).
    #[arg(long, conflicts_with = "support")]
    design: Option<PathBuf>,
    /// Number of support points of a structural regressor, or `infinite`.
    #[arg(long)]
    support: Option<String>,
    #[arg(long)]
    tau_known: bool,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[arg(long, allow_negative_numbers = true)]
    b0: f64,
    #[arg(long, allow_negative_numbers = true)]
    b1: f64,
    #[arg(long)]
    tau2: f64,
    /// CSV file with an `x0` column (functional design).
    #[arg(long, required_unless_present = "dist", conflicts_with_all = ["dist", "n"])]
    design: Option<PathBuf>,
    /// `normal,MEAN,VAR`, `uniform,LO,HI` or `discrete,X:W,...` (structural design).
    #[arg(long, allow_hyphen_values = true, requires = "n")]
    dist: Option<String>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    seed: u64,
}

#[derive(Debug, Args)]
struct FitArgs {
    #[arg(long)]
    data: PathBuf,
    /// Known error variance.
    #[arg(long, required_unless_present = "unknown_tau", conflicts_with = "unknown_tau")]
    tau2: Option<f64>,
    /// Estimate (b0, b1, s = b1²τ²).
    #[arg(long)]
    unknown_tau: bool,
    /// Starting point `b0,b1` (known τ²) or `b0,b1,s` (unknown τ²).
    #[arg(long, allow_hyphen_values = true)]
    init: Option<String>,
    #[arg(long, default_value_t = FitOptions::default().grad_tol)]
    grad_tol: f64,
    #[arg(long, default_value_t = FitOptions::default().max_iter)]
    max_iter: usize,
}

/// Errors sorted into exit codes.
#[derive(Debug)]
enum Failure {
    Usage(String),
    Io(String),
    Failed(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Domain(m) => Failure::Usage(m),
            Error::Parse { .. } | Error::Io(_) => Failure::Io(e.to_string()),
            Error::Convergence(_) | Error::Consistency(_) => Failure::Failed(e.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Io(e.to_string())
    }
}

type Outcome = std::result::Result<i32, Failure>;

/// Runs the CLI on `argv` (program name first) and returns the exit code.
pub fn run<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match dispatch(cli) {
        Ok(code) => code,
        Err(f) => {
            let (code, msg) = match f {
                Failure::Usage(m) => (EXIT_USAGE, m),
                Failure::Io(m) => (EXIT_IO, m),
                Failure::Failed(m) => (EXIT_FAILED, m),
            };
            eprintln!("berkson: {msg}");
            code
        }
    }
}

fn kernel(flag: Option<usize>) -> Result<Kernel<f64>, Failure> {
    let order = match flag {
        Some(n) => Some(n),
        None => match std::env::var(QUAD_ORDER_ENV) {
            Ok(s) => Some(s.trim().parse().map_err(|_| {
                Failure::Usage(format!("{QUAD_ORDER_ENV} must be a positive integer, got `{s}`"))
            })?),
            Err(_) => None,
        },
    };
    let mut cfg = KernelConfig::default();
    if let Some(n) = order {
        cfg.quad_order = n;
    }
    Ok(Kernel::new(cfg)?)
}

fn dispatch(cli: Cli) -> Outcome {
    if let Some(path) = &cli.output {
        check_output_dir(path)?;
    }
    let kernel = kernel(cli.quad_order)?;
    let out = cli.output.as_deref();
    match cli.command {
        Command::Tabulate(a) => tabulate(&kernel, a, out),
        Command::Verify(a) => verify(&kernel, a, out),
        Command::Identify(a) => identify(&kernel, a, out),
        Command::Simulate(a) => simulate_cmd(&kernel, a, out),
        Command::Fit(a) => fit(&kernel, a, out),
    }
}

fn check_output_dir(path: &Path) -> Result<(), Failure> {
    let dir = parent_dir(path);
    if !dir.is_dir() {
        return Err(Failure::Io(format!("output directory {} does not exist", dir.display())));
    }
    Ok(())
}

fn parent_dir(path: &Path) -> &Path {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    }
}

/// Writes `bytes` to `path` through a temporary file and rename, or to stdout.
fn emit(out: Option<&Path>, bytes: &[u8]) -> Result<(), Failure> {
    match out {
        Some(path) => {
            let mut tmp = tempfile::NamedTempFile::new_in(parent_dir(path))?;
            tmp.write_all(bytes)?;
            tmp.as_file().sync_all()?;
            tmp.persist(path).map_err(|e| Failure::Io(e.to_string()))?;
        }
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(bytes)?;
            stdout.flush()?;
        }
    }
    Ok(())
}

fn reals(text: &str, what: &str, count: usize) -> Result<Vec<f64>, Failure> {
    let vals: Vec<f64> = text
        .split(',')
        .map(|t| t.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Failure::Usage(format!("{what} must be {count} comma-separated numbers, got `{text}`")))?;
    if vals.len() != count {
        return Err(Failure::Usage(format!(
            "{what} must be {count} comma-separated numbers, got `{text}`"
        )));
    }
    Ok(vals)
}

#[derive(Serialize)]
struct TabRow {
    #[serde(serialize_with = "sig17")]
    x: f64,
    #[serde(serialize_with = "sig17")]
    value: f64,
}

#[derive(Serialize)]
struct Table {
    k: usize,
    #[serde(serialize_with = "sig17")]
    v: f64,
    rows: Vec<TabRow>,
}

fn tabulate(kernel: &Kernel<f64>, a: TabulateArgs, out: Option<&Path>) -> Outcome {
    if a.k > MAX_ORDER {
        return Err(Failure::Usage(format!("--k must be in 0..={MAX_ORDER}")));
    }
    if !(a.step > 0.0 && a.step.is_finite()) || !(a.xmin <= a.xmax) || !a.xmin.is_finite() || !a.xmax.is_finite() {
        return Err(Failure::Usage("need finite --xmin <= --xmax and --step > 0".into()));
    }
    let n = ((a.xmax - a.xmin) / a.step + 1e-9).floor();
    if n > 1e7 {
        return Err(Failure::Usage("grid has too many points".into()));
    }
    let mut rows = Vec::with_capacity(n as usize + 1);
    for i in 0..=n as usize {
        let x = a.xmin + i as f64 * a.step;
        rows.push(TabRow {
            x,
            value: kernel.l(a.k, x, a.v)?,
        });
    }
    let bytes = match a.format {
        Format::Csv => {
            let mut s = format!("x,L_{}\n", a.k);
            for r in &rows {
                s.push_str(&format!("{},{}\n", fmt_sig17(r.x), fmt_sig17(r.value)));
            }
            s.into_bytes()
        }
        Format::Json => to_json(&Table { k: a.k, v: a.v, rows }).into_bytes(),
    };
    emit(out, &bytes)?;
    Ok(EXIT_OK)
}

fn verify(kernel: &Kernel<f64>, a: VerifyArgs, out: Option<&Path>) -> Outcome {
    let lemma: Lemma = a.lemma.parse()?;
    let grid = match &a.grid {
        Some(spec) => Grid::parse_with_defaults(spec, lemma.default_grid())?,
        None => lemma.default_grid(),
    };
    let report = certify(kernel, lemma, &grid)?;
    log::info!("{lemma}: {} points, max violation {:e}", report.points, report.max_violation);
    emit(out, to_json(&report).as_bytes())?;
    Ok(if report.passed { EXIT_OK } else { EXIT_FAILED })
}

/// Reads the `x0` column of a CSV file.
fn read_design(path: &Path) -> Result<Vec<f64>, Failure> {
    let source = path.display().to_string();
    let file = std::fs::File::open(path).map_err(|e| Failure::Io(format!("{source}: {e}")))?;
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let parse_err = |line: u64, msg: String| Failure::from(Error::Parse { path: source.clone(), line, msg });
    let headers = rdr.headers().map_err(|e| parse_err(1, e.to_string()))?.clone();
    let col = headers
        .iter()
        .position(|h| h == "x0")
        .ok_or_else(|| parse_err(1, "missing `x0` column".into()))?;
    let mut xs = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| parse_err(e.position().map(|p| p.line()).unwrap_or(0), e.to_string()))?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let field = rec.get(col).ok_or_else(|| parse_err(line, "missing x0".into()))?;
        let x: f64 = field
            .parse()
            .map_err(|_| parse_err(line, format!("bad x0 `{field}`")))?;
        if !x.is_finite() {
            return Err(parse_err(line, "x0 must be finite".into()));
        }
        xs.push(x);
    }
    if xs.is_empty() {
        return Err(Failure::Usage(format!("{source}: design is empty")));
    }
    Ok(xs)
}

fn identify(kernel: &Kernel<f64>, a: IdentifyArgs, out: Option<&Path>) -> Outcome {
    if let (Some(left), Some(right)) = (&a.left, &a.right) {
        let curve = |text: &str, what: &str| -> Result<CurveParams<f64>, Failure> {
            let v = reals(text, what, 3)?;
            Ok(CurveParams::new(v[0], v[1], v[2])?)
        };
        let (l, r) = (curve(left, "--left")?, curve(right, "--right")?);
        let spec = match &a.window {
            Some(w) => {
                let w = reals(w, "--window", 2)?;
                EquationSpec::new(l, r, (w[0], w[1]))?
            }
            None => EquationSpec::with_default_window(l, r)?,
        };
        let report = classify_equation(kernel, &spec, &ScanOptions::default())?;
        emit(out, to_json(&report).as_bytes())?;
        return Ok(EXIT_OK);
    }
    let verdict = if let Some(path) = &a.design {
        verdict_functional(&read_design(path)?, a.tau_known)?
    } else if let Some(s) = &a.support {
        let support = if s.eq_ignore_ascii_case("infinite") {
            Support::Infinite
        } else {
            Support::Finite(
                s.parse()
                    .map_err(|_| Failure::Usage(format!("--support must be a count or `infinite`, got `{s}`")))?,
            )
        };
        verdict_structural(support, a.tau_known)?
    } else {
        return Err(Failure::Usage(
            "identify needs --left/--right, --design or --support".into(),
        ));
    };
    emit(out, to_json(&verdict).as_bytes())?;
    Ok(EXIT_OK)
}

fn simulate_cmd(kernel: &Kernel<f64>, a: SimulateArgs, out: Option<&Path>) -> Outcome {
    let params = ModelParams::new(a.b0, a.b1, a.tau2)?;
    let design = match (&a.design, &a.dist, a.n) {
        (Some(path), _, _) => Design::Functional(read_design(path)?),
        (None, Some(dist), Some(n)) => Design::Structural {
            sampler: dist.parse::<Sampler>()?,
            n,
        },
        _ => return Err(Failure::Usage("simulate needs --design or --dist with --n".into())),
    };
    let data = simulate(kernel, &params, &design, a.seed)?;
    emit(out, data.to_csv_string().as_bytes())?;
    Ok(EXIT_OK)
}

fn fit(kernel: &Kernel<f64>, a: FitArgs, out: Option<&Path>) -> Outcome {
    let data = Dataset::<f64>::load(&a.data).map_err(|e| match e {
        Error::Io(io) => Failure::Io(format!("{}: {io}", a.data.display())),
        other => Failure::from(other),
    })?;
    let opts = FitOptions {
        grad_tol: a.grad_tol,
        max_iter: a.max_iter,
        ..FitOptions::default()
    };
    let result = if a.unknown_tau {
        let init = match &a.init {
            Some(t) => {
                let v = reals(t, "--init", 3)?;
                Some(Theta::new(v[0], v[1], v[2])?)
            }
            None => None,
        };
        fit_unknown_tau(kernel, &data, init, &opts)?
    } else {
        let tau2 = a.tau2.expect("clap enforces --tau2 or --unknown-tau");
        let init = match &a.init {
            Some(t) => {
                let v = reals(t, "--init", 2)?;
                Some((v[0], v[1]))
            }
            None => None,
        };
        fit_known_tau(kernel, &data, tau2, init, &opts)?
    };
    for w in &result.warnings {
        log::warn!("{w}");
    }
    emit(out, to_json(&result).as_bytes())?;
    Ok(if result.converged { EXIT_OK } else { EXIT_FAILED })
}
