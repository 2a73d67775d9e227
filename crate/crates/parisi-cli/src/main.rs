//! `parisi` command-line front end.
//!
//! Exit codes: 0 success, 2 invalid input, 3 no phase found or a failed
//! verification, 4 ambiguous phase, 1 anything else (I/O).

use std::collections::BTreeMap;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use parisi::classifier::{scan_points, scan_row, Axis, ScanRow};
use parisi::oracle::{extract_phase, ExtractTolerances};
use parisi::{
    classify, condition_kappa, minimize_cs, two_component_boundaries, ClassifyOptions, Error, Mixture,
    MeasureJson, OracleOptions, Tolerances,
};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::Value;

#[derive(Parser)]
#[command(name = "parisi", version, about = "Zero-temperature Parisi measures of spherical mixed p-spin models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Classify the phase and build the measure.
    Classify(ClassifyArgs),
    /// Check a measure JSON against the optimality conditions.
    Verify(VerifyArgs),
    /// Classify every point of a weight grid and write CSV.
    Scan(ScanArgs),
    /// Minimize the Crisanti-Sommers functional directly.
    Oracle(OracleArgs),
    /// Report the membership margins of a chain.
    Hset(HsetArgs),
    /// Phase boundaries of the family lambda x^p + (1 - lambda) x^s.
    Boundaries(BoundaryArgs),
}

#[derive(Args, Clone)]
struct MixtureArgs {
    /// Comma separated exponents, strictly increasing.
    #[arg(long, value_delimiter = ',', required = true)]
    exponents: Vec<u32>,
    /// Comma separated weights.
    #[arg(long, value_delimiter = ',', required = true)]
    weights: Vec<f64>,
    /// Derive the last weight so that the weights sum to 1.
    #[arg(long)]
    derive_last: bool,
    /// Allow the exponent 2 (analytic test case only).
    #[arg(long)]
    diagnostic: bool,
}

impl MixtureArgs {
    fn build(&self) -> Result<Mixture, Failure> {
        let r = if self.diagnostic {
            Mixture::diagnostic(&self.exponents, &self.weights, self.derive_last)
        } else {
            Mixture::new(&self.exponents, &self.weights, self.derive_last)
        };
        r.map_err(Failure::from)
    }
}

#[derive(Args)]
struct ClassifyArgs {
    #[command(flatten)]
    mixture: MixtureArgs,
    /// Skip the oracle cross-check.
    #[arg(long)]
    no_oracle: bool,
    /// Grid cells of the oracle.
    #[arg(long, default_value_t = 2000)]
    oracle_cells: usize,
    /// Print JSON (the default output is a one-line summary).
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct VerifyArgs {
    /// Measure JSON file.
    #[arg(long)]
    measure: PathBuf,
    #[arg(long, default_value_t = 4096)]
    grid: usize,
}

#[derive(Args)]
struct ScanArgs {
    /// Job file with `key = value` lines; flags override it.
    #[arg(long)]
    job: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    exponents: Option<Vec<u32>>,
    /// One per weight: a value, or `lo:hi:step`.
    #[arg(long = "axis")]
    axes: Vec<String>,
    #[arg(long)]
    derive_last: bool,
    #[arg(long)]
    no_oracle: bool,
    #[arg(long)]
    oracle_cells: Option<usize>,
    /// CSV destination; standard output when absent.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct OracleArgs {
    #[command(flatten)]
    mixture: MixtureArgs,
    #[arg(long, default_value_t = 2000)]
    cells: usize,
    #[arg(long, default_value_t = 5000)]
    max_iter: usize,
    #[arg(long, default_value_t = 1e-9)]
    tol: f64,
    /// Write the tail function as `x,phi` rows.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct HsetArgs {
    #[command(flatten)]
    mixture: MixtureArgs,
    /// Chain `x_0,...,x_s`.
    #[arg(long, value_delimiter = ',', required = true)]
    chain: Vec<f64>,
    #[arg(long, default_value_t = parisi::hset::KAPPA_TOL)]
    tol: f64,
}

#[derive(Args)]
struct BoundaryArgs {
    #[arg(long)]
    p: u32,
    #[arg(long)]
    s: u32,
}

/// A failure with its exit code.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn input(message: impl Into<String>) -> Self {
        Self { code: 2, message: message.into() }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::NonIncreasingExponents { .. }
            | Error::WeightOutOfRange { .. }
            | Error::WeightSumMismatch { .. }
            | Error::DomainError { .. }
            | Error::ChainNotStrict { .. }
            | Error::ArgumentOrder { .. }
            | Error::InvalidMeasure { .. } => 2,
            Error::AmbiguousPhase { .. } => 4,
            _ => 3,
        };
        Self { code, message: e.to_string() }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Self { code: 1, message: e.to_string() }
    }
}

/// Rounds every number to 12 significant digits.
fn round_value(v: Value) -> Value {
    match v {
        Value::Number(n) => match n.as_f64() {
            Some(f) if n.is_f64() => round12(f).map_or(Value::Null, Value::from),
            _ => Value::Number(n),
        },
        Value::Array(a) => Value::Array(a.into_iter().map(round_value).collect()),
        Value::Object(o) => Value::Object(o.into_iter().map(|(k, v)| (k, round_value(v))).collect()),
        other => other,
    }
}

fn round12(f: f64) -> Option<f64> {
    f.is_finite().then(|| format!("{f:.11e}").parse().expect("formatted float parses"))
}

fn fmt12(f: f64) -> String {
    match round12(f) {
        Some(r) if r != 0.0 && !(1e-4..1e12).contains(&r.abs()) => format!("{r:e}"),
        Some(r) => r.to_string(),
        None => f.to_string(),
    }
}

fn print_json<T: Serialize>(value: &T) -> Result<(), Failure> {
    let v = serde_json::to_value(value).map_err(|e| Failure { code: 1, message: e.to_string() })?;
    let text = serde_json::to_string_pretty(&round_value(v)).expect("values serialize");
    emit(&text)
}

/// Writes a line to stdout. A closed pipe ends the process quietly.
fn emit(text: &str) -> Result<(), Failure> {
    match writeln!(io::stdout().lock(), "{text}") {
        Err(e) if e.kind() == io::ErrorKind::BrokenPipe => std::process::exit(0),
        r => Ok(r?),
    }
}

fn cmd_classify(args: &ClassifyArgs) -> Result<(), Failure> {
    let spec = args.mixture.build()?;
    let opts = ClassifyOptions { oracle: !args.no_oracle, oracle_cells: args.oracle_cells, ..ClassifyOptions::default() };
    let r = classify(&spec, &opts)?;
    if args.json {
        print_json(&r.to_json())
    } else {
        let gap = r.oracle_gap.map_or("-".to_string(), fmt12);
        emit(&format!("{}  energy {}  oracle gap {}", r.label, fmt12(r.energy), gap))
    }
}

fn cmd_verify(args: &VerifyArgs) -> Result<(), Failure> {
    let text = fs::read_to_string(&args.measure)?;
    let bad = |e: serde_json::Error| Failure::input(format!("measure JSON: {e}"));
    // a full classify result is accepted as well as a bare measure
    let mut value: Value = serde_json::from_str(&text).map_err(bad)?;
    if let Some(m) = value.get_mut("measure") {
        value = m.take();
    }
    let json: MeasureJson = serde_json::from_value(value).map_err(bad)?;
    let measure = json.into_measure()?;
    let report = measure.verify(args.grid, &Tolerances::default());
    print_json(&report)?;
    if report.passed {
        Ok(())
    } else {
        Err(Failure { code: 3, message: "verification failed".into() })
    }
}

/// Settings of a scan, read from a job file and flags.
#[derive(Debug, Default)]
struct ScanJob {
    exponents: Vec<u32>,
    axes: Vec<Axis>,
    derive_last: bool,
    oracle: bool,
    oracle_cells: usize,
    output: Option<PathBuf>,
}

fn parse_axis(s: &str) -> Result<Axis, Failure> {
    let parts: Vec<&str> = s.split(':').map(str::trim).collect();
    let num = |t: &str| t.parse::<f64>().map_err(|_| Failure::input(format!("bad number {t:?} in axis {s:?}")));
    match parts.as_slice() {
        [v] => Ok(Axis::Fixed(num(v)?)),
        [lo, hi, step] => {
            let (lo, hi, step) = (num(lo)?, num(hi)?, num(step)?);
            if !(step > 0.0 && hi >= lo) {
                return Err(Failure::input(format!("axis {s:?} needs lo <= hi and step > 0")));
            }
            Ok(Axis::Range { lo, hi, step })
        }
        _ => Err(Failure::input(format!("axis {s:?} is neither a value nor lo:hi:step"))),
    }
}

/// Job file grammar: one `key = value` per line, `#` starts a comment.
/// Keys: `exponents` (comma list), `lambda1`, `lambda2`, ... (value or
/// `lo:hi:step`), `derive_last`, `oracle` (true/false), `oracle_cells`,
/// `output`.
fn parse_job(text: &str) -> Result<ScanJob, Failure> {
    let mut job = ScanJob { oracle: true, oracle_cells: 2000, ..ScanJob::default() };
    let mut lambdas = BTreeMap::new();
    for (no, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .map(|(k, v)| (k.trim(), v.trim()))
            .ok_or_else(|| Failure::input(format!("line {}: expected key = value", no + 1)))?;
        let flag = |v: &str| match v {
            "true" => Ok(true),
            "false" => Ok(false),
            _ => Err(Failure::input(format!("line {}: expected true or false", no + 1))),
        };
        match key {
            "exponents" => {
                job.exponents = value
                    .split(',')
                    .map(|t| t.trim().parse().map_err(|_| Failure::input(format!("line {}: bad exponent", no + 1))))
                    .collect::<Result<_, _>>()?
            }
            "derive_last" => job.derive_last = flag(value)?,
            "oracle" => job.oracle = flag(value)?,
            "oracle_cells" => {
                job.oracle_cells =
                    value.parse().map_err(|_| Failure::input(format!("line {}: bad oracle_cells", no + 1)))?
            }
            "output" => job.output = Some(PathBuf::from(value)),
            k if k.starts_with("lambda") => {
                let idx: usize =
                    k[6..].parse().map_err(|_| Failure::input(format!("line {}: bad key {k}", no + 1)))?;
                lambdas.insert(idx, parse_axis(value)?);
            }
            k => return Err(Failure::input(format!("line {}: unknown key {k}", no + 1))),
        }
    }
    job.axes = lambdas.into_values().collect();
    Ok(job)
}

fn csv_row(row: &ScanRow) -> Vec<String> {
    let w = |i: usize| row.weights.get(i).map_or(String::new(), |&v| fmt12(v));
    let list = |v: &[usize]| v.iter().map(|s| s.to_string()).collect::<Vec<_>>().join(" ");
    match &row.outcome {
        Ok(s) => {
            let mut flags = Vec::new();
            if s.near_boundary {
                flags.push("near_boundary".to_string());
            }
            if s.criterion_agrees == Some(false) {
                flags.push("criterion_disagrees".to_string());
            }
            vec![
                w(0),
                w(1),
                s.label.kind.to_string(),
                s.label.k.to_string(),
                list(&s.label.composition),
                list(&s.label.f_set),
                fmt12(s.energy),
                s.oracle_gap.map_or(String::new(), fmt12),
                flags.join(" "),
            ]
        }
        Err(e) => vec![w(0), w(1), String::new(), String::new(), String::new(), String::new(), String::new(), String::new(), format!("error: {e}")],
    }
}

fn write_scan(rows: &[ScanRow], out: Option<&Path>) -> Result<(), Failure> {
    let csv_err = |e: csv::Error| Failure { code: 1, message: e.to_string() };
    let sink: Box<dyn std::io::Write> = match out {
        Some(p) => Box::new(fs::File::create(p)?),
        None => Box::new(std::io::stdout()),
    };
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(["lambda1", "lambda2", "phase_kind", "k", "composition", "f_set", "energy", "oracle_gap", "flags"])
        .map_err(csv_err)?;
    for row in rows {
        w.write_record(csv_row(row)).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

fn cmd_scan(args: &ScanArgs) -> Result<(), Failure> {
    let mut job = match &args.job {
        Some(p) => parse_job(&fs::read_to_string(p)?)?,
        None => ScanJob { oracle: true, oracle_cells: 2000, ..ScanJob::default() },
    };
    if let Some(e) = &args.exponents {
        job.exponents = e.clone();
    }
    if !args.axes.is_empty() {
        job.axes = args.axes.iter().map(|s| parse_axis(s)).collect::<Result<_, _>>()?;
    }
    job.derive_last |= args.derive_last;
    if args.no_oracle {
        job.oracle = false;
    }
    if let Some(c) = args.oracle_cells {
        job.oracle_cells = c;
    }
    if args.output.is_some() {
        job.output = args.output.clone();
    }
    if job.exponents.is_empty() || job.axes.is_empty() {
        return Err(Failure::input("a scan needs exponents and at least one weight axis"));
    }
    let ranges = job.axes.iter().filter(|a| matches!(a, Axis::Range { .. })).count();
    if ranges > 2 {
        return Err(Failure::input("at most two weight axes may be ranges"));
    }
    let opts = ClassifyOptions { oracle: job.oracle, oracle_cells: job.oracle_cells, ..ClassifyOptions::default() };
    let points = scan_points(&job.axes);
    // par_iter keeps the grid order in the collected rows
    let rows: Vec<ScanRow> =
        points.par_iter().map(|w| scan_row(&job.exponents, w, job.derive_last, &opts)).collect();
    write_scan(&rows, job.output.as_deref())
}

#[derive(Serialize)]
struct OracleReport {
    energy: f64,
    delta: f64,
    iterations: usize,
    kkt_residual: f64,
    converged: bool,
    heuristic_phase: Option<String>,
    breakpoints: Vec<f64>,
    segments: Vec<(f64, f64)>,
}

fn cmd_oracle(args: &OracleArgs) -> Result<(), Failure> {
    let spec = args.mixture.build()?;
    let opts = OracleOptions { cells: args.cells, max_iter: args.max_iter, tol: args.tol, ..OracleOptions::default() };
    let sol = minimize_cs(&spec, &opts)?;
    let heuristic = extract_phase(&spec, &sol, &ExtractTolerances::default()).ok();
    if let Some(path) = &args.csv {
        let mut w = csv::Writer::from_path(path).map_err(|e| Failure { code: 1, message: e.to_string() })?;
        w.write_record(["x", "phi"]).map_err(|e| Failure { code: 1, message: e.to_string() })?;
        for (x, p) in sol.to_csv_rows() {
            w.write_record([fmt12(x), fmt12(p)]).map_err(|e| Failure { code: 1, message: e.to_string() })?;
        }
        w.flush()?;
    }
    print_json(&OracleReport {
        energy: sol.energy,
        delta: sol.delta,
        iterations: sol.iterations,
        kkt_residual: sol.kkt_residual,
        converged: sol.converged,
        heuristic_phase: heuristic.as_ref().map(|h| h.label.to_string()),
        breakpoints: heuristic.as_ref().map_or(vec![], |h| h.breakpoints.clone()),
        segments: heuristic.map_or(vec![], |h| h.segments),
    })
}

fn cmd_hset(args: &HsetArgs) -> Result<(), Failure> {
    let spec = args.mixture.build()?;
    let report = condition_kappa(&spec, &args.chain, args.tol);
    print_json(&report)
}

fn cmd_boundaries(args: &BoundaryArgs) -> Result<(), Failure> {
    let table = two_component_boundaries(args.p, args.s)?;
    print_json(&table)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Classify(a) => cmd_classify(a),
        Command::Verify(a) => cmd_verify(a),
        Command::Scan(a) => cmd_scan(a),
        Command::Oracle(a) => cmd_oracle(a),
        Command::Hset(a) => cmd_hset(a),
        Command::Boundaries(a) => cmd_boundaries(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
