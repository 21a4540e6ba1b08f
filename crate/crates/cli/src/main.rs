use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use reluapprox::activation::{pwl_to_relu, relu_to_pwl};
use reluapprox::adaptive::build_adaptive_relu;
use reluapprox::analysis::{
    exact_error_vs_quadratic, measure_sup_error, normalized_constant, piece_bound_check, scaling_experiment,
    sobolev_grid, write_csv,
};
use reluapprox::calculus::{build_multiplier, build_square, square_depth_for_error, square_error, MultiplierParams};
use reluapprox::sobolev::{build_sobolev_approximator, oracle};
use reluapprox::{
    ApproxReport, Construction, Error, GridSpec, Interval, LipschitzTarget, Network, Pwl, ScalingConfig, SobolevOptions,
};

#[derive(Parser)]
#[command(
    name = "reluapprox",
    version,
    about = "Build and measure constructive ReLU approximations"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Squaring network f_m on [0, 1]
    Square(SquareArgs),
    /// Approximate multiplication on [-M, M]^2
    Multiply(MultiplyArgs),
    /// Approximation of a unit-ball Sobolev function on [0, 1]^d
    Sobolev(SobolevArgs),
    /// Depth-6 approximation of a 1-Lipschitz function on [0, 1]
    Lipschitz(LipschitzArgs),
    /// Convert between piecewise-linear activations and ReLU
    Convert(ConvertArgs),
    /// Inspect a saved network
    Analyze(AnalyzeArgs),
    /// Sweep a builder over several tolerances and write a CSV table
    Scaling(ScalingArgs),
}

#[derive(Args)]
#[command(group(clap::ArgGroup::new("size").required(true).args(["m", "eps"])))]
struct SquareArgs {
    #[arg(long)]
    m: Option<u32>,
    #[arg(long)]
    eps: Option<f64>,
    /// Write the network as JSON
    #[arg(long)]
    emit: Option<PathBuf>,
    /// Write the report as a one-row CSV table
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct MultiplyArgs {
    #[arg(long)]
    bound: f64,
    #[arg(long)]
    eps: f64,
    /// Grid points per axis
    #[arg(long, default_value_t = 201)]
    grid: usize,
    #[arg(long)]
    emit: Option<PathBuf>,
}

#[derive(Args)]
struct SobolevArgs {
    #[arg(long)]
    d: usize,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    eps: f64,
    /// zero, linear, sine or poly
    #[arg(long)]
    target: String,
    /// Fail when a Taylor coefficient exceeds one in magnitude
    #[arg(long)]
    strict: bool,
}

#[derive(Args)]
struct LipschitzArgs {
    #[arg(long)]
    eps: f64,
    /// tent, sine, linear, zero or random
    #[arg(long)]
    target: String,
    #[arg(long)]
    delta: Option<f64>,
    /// Seed of the random target
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write the construction plan as JSON
    #[arg(long)]
    plan: Option<PathBuf>,
    #[arg(long)]
    emit: Option<PathBuf>,
}

#[derive(Args)]
#[command(group(clap::ArgGroup::new("direction").required(true).args(["to_relu", "to_pwl"])))]
struct ConvertArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    to_relu: bool,
    /// Piecewise-linear activation as JSON
    #[arg(long, requires = "input_box")]
    to_pwl: Option<PathBuf>,
    /// Input box as lo,hi pairs, one per coordinate
    #[arg(long = "box", value_delimiter = ',', allow_hyphen_values = true)]
    input_box: Option<Vec<f64>>,
    /// Output file; stdout when absent
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    pieces: bool,
    #[arg(long)]
    metrics: bool,
    /// square, product, lipschitz:<name> or sobolev:<name>
    #[arg(long, requires = "grid")]
    error_vs: Option<String>,
    /// Grid points per axis
    #[arg(long)]
    grid: Option<usize>,
    /// Interval per axis for pieces and error measurement
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, default_values_t = [0.0, 1.0])]
    domain: Vec<f64>,
    /// Smoothness order of a Sobolev target
    #[arg(long, default_value_t = 1)]
    n: usize,
    /// Seed of the random Lipschitz target
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Tolerance; a larger measured error exits with status 3
    #[arg(long)]
    eps: Option<f64>,
}

#[derive(Args)]
struct ScalingArgs {
    /// square, multiplier, sobolev or adaptive
    #[arg(long)]
    builder: Construction,
    #[arg(long, value_delimiter = ',', required = true)]
    eps_list: Vec<f64>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    target: Option<String>,
    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    bound: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

enum Failure {
    Precondition(String),
    Guarantee(String),
    Io(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Io(_) | Error::Json(_) | Error::Csv(_) => Failure::Io(e.to_string()),
            other => Failure::Precondition(other.to_string()),
        }
    }
}

type Outcome = Result<(), Failure>;

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))
}

fn write(path: &Path, contents: &str) -> Outcome {
    fs::write(path, contents).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))
}

fn load_network(path: &Path) -> Result<Network, Failure> {
    Network::from_json(&read(path)?).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))
}

fn print_report(rep: &ApproxReport) -> Outcome {
    println!("{}", rep.to_json()?);
    guarantee(rep)
}

fn guarantee(rep: &ApproxReport) -> Outcome {
    match rep.measured_error {
        Some(e) if e > rep.epsilon => Err(Failure::Guarantee(format!(
            "measured error {e} exceeds epsilon {}",
            rep.epsilon
        ))),
        _ => Ok(()),
    }
}

fn square(a: SquareArgs) -> Outcome {
    let start = Instant::now();
    let m = match (a.m, a.eps) {
        (Some(m), _) => m,
        (None, Some(eps)) => square_depth_for_error(eps)?,
        (None, None) => unreachable!("clap requires one of --m and --eps"),
    };
    let net = build_square(m)?;
    let eps = a.eps.unwrap_or_else(|| square_error(m));
    let mut rep = ApproxReport::new(Construction::Square, "square", eps).param("m", f64::from(m));
    rep.measured_error = Some(exact_error_vs_quadratic(&net, 0.0, 1.0, 1.0, 0.0, 0.0)?);
    rep.metrics = Some(net.metrics());
    rep.normalized = rep
        .metrics
        .map(|mt| normalized_constant(Construction::Square, eps, &mt, 1, 1));
    rep.notes.push("exact error over [0, 1]".into());
    rep.wall_ms = start.elapsed().as_secs_f64() * 1e3;
    if let Some(p) = &a.emit {
        write(p, &net.to_json()?)?;
    }
    if let Some(p) = &a.report {
        let mut buf = Vec::new();
        write_csv(std::slice::from_ref(&rep), &mut buf)?;
        write(p, &String::from_utf8_lossy(&buf))?;
    }
    print_report(&rep)
}

fn multiply(a: MultiplyArgs) -> Outcome {
    let start = Instant::now();
    let p = MultiplierParams::new(a.bound, a.eps)?;
    let net = build_multiplier(a.bound, a.eps)?;
    let grid = GridSpec::uniform(2, -a.bound, a.bound, a.grid)?;
    let mut rep = ApproxReport::new(Construction::Multiplier, "product", a.eps)
        .param("bound", a.bound)
        .param("m", f64::from(p.m))
        .param("delta", p.delta);
    rep.measured_error = Some(measure_sup_error(&net, &|x| x[0] * x[1], &grid)?);
    rep.grid = Some(grid);
    rep.metrics = Some(net.metrics());
    rep.normalized = rep
        .metrics
        .map(|mt| normalized_constant(Construction::Multiplier, a.eps, &mt, 2, 1));
    rep.wall_ms = start.elapsed().as_secs_f64() * 1e3;
    if let Some(path) = &a.emit {
        write(path, &net.to_json()?)?;
    }
    print_report(&rep)
}

fn sobolev(a: SobolevArgs) -> Outcome {
    let start = Instant::now();
    let f = oracle::builtin(&a.target, a.d, a.n)?;
    let opts = SobolevOptions {
        strict: a.strict,
        ..SobolevOptions::default()
    };
    let build = build_sobolev_approximator(f.as_ref(), a.n, a.eps, &opts)?;
    let arch = &build.network.arch;
    let grid = sobolev_grid(a.d, arch.n_grid)?;
    let mut rep = ApproxReport::new(Construction::Sobolev, f.name(), a.eps)
        .param("d", a.d as f64)
        .param("n", a.n as f64)
        .param("N", arch.n_grid as f64)
        .param("delta", arch.delta);
    rep.measured_error = Some(measure_sup_error(&build.network, &|x| f.value(x), &grid)?);
    rep.grid = Some(grid);
    rep.metrics = Some(build.network.metrics());
    rep.normalized = rep
        .metrics
        .map(|mt| normalized_constant(Construction::Sobolev, a.eps, &mt, a.d, a.n));
    for w in &build.warnings {
        eprintln!("warning: {w}");
    }
    rep.notes = build.warnings;
    rep.wall_ms = start.elapsed().as_secs_f64() * 1e3;
    print_report(&rep)
}

fn lipschitz(a: LipschitzArgs) -> Outcome {
    let target = LipschitzTarget::builtin(&a.target, a.seed)?;
    let build = build_adaptive_relu(&|x| target.eval(x), a.eps, a.delta)?;
    let mut rep = build.report;
    rep.target = a.target.clone();
    if let Some(p) = &a.plan {
        write(p, &build.plan.to_json()?)?;
    }
    if let Some(p) = &a.emit {
        write(p, &build.network.to_json()?)?;
    }
    print_report(&rep)
}

fn parse_box(values: &[f64]) -> Result<Vec<Interval>, Failure> {
    if values.is_empty() || !values.len().is_multiple_of(2) {
        return Err(Failure::Precondition("the box needs lo,hi pairs".into()));
    }
    Ok(values
        .chunks(2)
        .map(|c| Interval::new(c[0], c[1]))
        .collect::<Result<_, _>>()?)
}

fn convert(a: ConvertArgs) -> Outcome {
    let net = load_network(&a.input)?;
    let out = if a.to_relu {
        pwl_to_relu(&net)?
    } else {
        let path = a.to_pwl.as_deref().expect("clap requires a direction");
        let act: Pwl =
            serde_json::from_str(&read(path)?).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))?;
        let bx = parse_box(a.input_box.as_deref().unwrap_or_default())?;
        relu_to_pwl(&net, &act, &bx)?
    };
    let text = out.to_json()?;
    match &a.out {
        Some(p) => write(p, &text),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

type Target = Box<dyn Fn(&[f64]) -> f64>;

fn error_target(name: &str, d: usize, n: usize, seed: u64) -> Result<Target, Failure> {
    let need = |want: usize| {
        if d == want {
            Ok(())
        } else {
            Err(Failure::Precondition(format!(
                "target '{name}' needs {want} inputs, the network has {d}"
            )))
        }
    };
    Ok(match name.split_once(':') {
        None if name == "square" => {
            need(1)?;
            Box::new(|x: &[f64]| x[0] * x[0])
        }
        None if name == "product" => {
            need(2)?;
            Box::new(|x: &[f64]| x[0] * x[1])
        }
        Some(("lipschitz", t)) => {
            need(1)?;
            let t = LipschitzTarget::builtin(t, seed)?;
            Box::new(move |x: &[f64]| t.eval(x[0]))
        }
        Some(("sobolev", t)) => {
            let f = oracle::builtin(t, d, n)?;
            Box::new(move |x: &[f64]| f.value(x))
        }
        _ => {
            return Err(Failure::Precondition(format!(
                "unknown target '{name}', expected square, product, lipschitz:<name> or sobolev:<name>"
            )))
        }
    })
}

fn analyze(a: AnalyzeArgs) -> Outcome {
    let net = load_network(&a.input)?;
    let d = net.input_dim;
    let domain = match a.domain.len() {
        2 => a.domain.repeat(d),
        k if k == 2 * d => a.domain.clone(),
        k => {
            return Err(Failure::Precondition(format!(
                "--domain has {k} values, expected 2 or {}",
                2 * d
            )))
        }
    };
    let mut out = serde_json::Map::new();
    let violations = net.validate();
    out.insert("valid".into(), json!(violations.is_empty()));
    if !violations.is_empty() {
        let list: Vec<String> = violations.iter().map(|v| format!("{v:?}")).collect();
        out.insert("violations".into(), json!(list));
    }
    if a.metrics {
        out.insert(
            "metrics".into(),
            serde_json::to_value(net.metrics()).map_err(Error::from)?,
        );
    }
    if a.pieces {
        if d != 1 {
            return Err(Failure::Precondition("piece counting needs a one-input network".into()));
        }
        let pb = piece_bound_check(&net, domain[0], domain[1])?;
        out.insert("pieces".into(), serde_json::to_value(pb).map_err(Error::from)?);
    }
    let mut measured = None;
    if let Some(name) = &a.error_vs {
        let target = error_target(name, d, a.n, a.seed)?;
        let points = a.grid.expect("clap requires --grid");
        let (lo, hi): (Vec<f64>, Vec<f64>) = domain.chunks(2).map(|c| (c[0], c[1])).unzip();
        let grid = GridSpec::new(lo, hi, vec![points; d])?;
        let err = measure_sup_error(&net, target.as_ref(), &grid)?;
        out.insert(
            "error".into(),
            json!({ "target": name, "grid": grid.describe(), "measured_error": err }),
        );
        measured = Some(err);
    }
    println!("{}", Value::Object(out));
    match (measured, a.eps) {
        (Some(e), Some(eps)) if e > eps => Err(Failure::Guarantee(format!("measured error {e} exceeds epsilon {eps}"))),
        _ => Ok(()),
    }
}

fn scaling(a: ScalingArgs) -> Outcome {
    let mut cfg = ScalingConfig::new(a.builder);
    if let Some(t) = a.target {
        cfg.target = t;
    }
    if let Some(d) = a.d {
        cfg.d = d;
    }
    if let Some(n) = a.n {
        cfg.n = n;
    }
    if let Some(b) = a.bound {
        cfg.bound = b;
    }
    cfg.seed = a.seed;
    let rows = scaling_experiment(&cfg, &a.eps_list);
    let file = fs::File::create(&a.out).map_err(|e| Failure::Io(format!("{}: {e}", a.out.display())))?;
    write_csv(&rows, file)?;
    for r in &rows {
        match &r.failure {
            Some(f) => eprintln!("eps {}: failed: {f}", r.epsilon),
            None => eprintln!(
                "eps {}: error {} normalized {}",
                r.epsilon,
                r.measured_error.unwrap_or(f64::NAN),
                r.normalized.unwrap_or(f64::NAN)
            ),
        }
    }
    match rows.iter().find(|r| r.failure.is_none() && !r.within_epsilon()) {
        Some(r) => Err(Failure::Guarantee(format!(
            "eps {}: measured error {} exceeds it",
            r.epsilon,
            r.measured_error.unwrap_or(f64::NAN)
        ))),
        None => Ok(()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Square(a) => square(a),
        Command::Multiply(a) => multiply(a),
        Command::Sobolev(a) => sobolev(a),
        Command::Lipschitz(a) => lipschitz(a),
        Command::Convert(a) => convert(a),
        Command::Analyze(a) => analyze(a),
        Command::Scaling(a) => scaling(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Precondition(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Guarantee(m)) => {
            eprintln!("guarantee violated: {m}");
            ExitCode::from(3)
        }
        Err(Failure::Io(m)) => {
            eprintln!("i/o error: {m}");
            ExitCode::from(4)
        }
    }
}
