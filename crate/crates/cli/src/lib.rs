//! Command-line front end for `ivboot`.
//!
//! [`run`] parses arguments, executes one subcommand and returns the process
//! exit code: 0 on success, 1 on invalid input, 2 when a reproduced table
//! misses the reference tolerances.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use ivboot::benchmark_tests::{Centering, ProfileSearch};
use ivboot::diagnostics::{self as diag, DeviationParams, RademacherRankOne, SummandLaw};
use ivboot::harness::{self, fmt_num};
use ivboot::rng::{purpose, RngStream};
use ivboot::simgen::{self, ErrorKind, ErrorSpec, SimConfig};
use nalgebra::{DMatrix, DVector};
use serde::Serialize;

#[derive(Parser, Debug)]
#[command(name = "ivboot", version, about = "Bootstrap likelihood-ratio tests for IV regression")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Draw one sample and write its outcomes `y1,y2`.
    Simulate(Common),
    /// Rejection frequencies of LR, BLR, CLR, AR and LM over a grid of beta0.
    Power(Common),
    /// Run all five tests of `H0: beta = beta0` on one sample.
    Test(Common),
    /// Recompute a reference table and compare it cell by cell.
    ReproduceTable(Common),
    /// Concentration and Gaussian-approximation diagnostics as JSON.
    Diagnose(Common),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Search {
    Global,
    Window,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum CenterArg {
    Mle,
    Hypothesis,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// JSON file with `SimConfig` fields; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Reference table (1-4) whose data line and grid seed the configuration.
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=4))]
    table: Option<u8>,
    /// Replications per grid point [default: 120; 1000 for diagnose tails]
    #[arg(long)]
    reps: Option<usize>,
    /// Bootstrap draws per test [default: 1000]
    #[arg(long)]
    boot_reps: Option<usize>,
    /// Nominal level [default: 0.05]
    #[arg(long)]
    alpha: Option<f64>,
    /// Master seed [default: 42]
    #[arg(long)]
    seed: Option<u64>,
    /// Error law: gauss, laplace, hetero-linear, hetero-periodic [default: gauss]
    #[arg(long)]
    error: Option<String>,
    /// c in pi'ZZ'pi = c/n [default: 4]
    #[arg(long)]
    concentration: Option<f64>,
    /// Sample size [default: 200]
    #[arg(long)]
    n: Option<usize>,
    /// Number of instruments [default: 5]
    #[arg(long)]
    q: Option<usize>,
    /// Hypothesized coefficient for `test` [default: 1]
    #[arg(long)]
    beta0: Option<f64>,
    /// Grid of beta0 values as "start:step:end" [default: 1:1:1]
    #[arg(long)]
    grid: Option<String>,
    /// Range of the bootstrap supremum [default: global]
    #[arg(long, value_enum)]
    blr_search: Option<Search>,
    /// Point the bootstrap statistic is centred at [default: mle]
    #[arg(long, value_enum)]
    centering: Option<CenterArg>,
    /// CSV with columns y1,y2 used by `test` instead of a simulated sample
    #[arg(long)]
    data: Option<PathBuf>,
    /// Output file [default: standard output]
    #[arg(long)]
    out: Option<PathBuf>,
    /// Output format [default: csv; json for test and diagnose]
    #[arg(long, value_enum)]
    format: Option<Format>,
}

/// Failure classes mapped to exit codes.
#[derive(Debug)]
enum Failure {
    Invalid(anyhow::Error),
    Comparison(String),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Invalid(e)
    }
}

impl From<ivboot::IvError> for Failure {
    fn from(e: ivboot::IvError) -> Self {
        Failure::Invalid(e.into())
    }
}

/// Run the command line `argv` (including the program name).
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let pool = match thread_pool() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e:#}");
            return 1;
        }
    };
    match pool.install(|| dispatch(cli.command)) {
        Ok(()) => 0,
        Err(Failure::Invalid(e)) => {
            eprintln!("error: {e:#}");
            1
        }
        Err(Failure::Comparison(msg)) => {
            eprintln!("comparison failed: {msg}");
            2
        }
    }
}

fn thread_pool() -> anyhow::Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var("IVBOOT_THREADS") {
        let n: usize = v.trim().parse().with_context(|| format!("IVBOOT_THREADS={v:?}"))?;
        if n == 0 {
            bail!("IVBOOT_THREADS must be positive");
        }
        builder = builder.num_threads(n);
    }
    Ok(builder.build()?)
}

fn dispatch(command: Command) -> Result<(), Failure> {
    match command {
        Command::Simulate(a) => simulate(&a),
        Command::Power(a) => power(&a),
        Command::Test(a) => test(&a),
        Command::ReproduceTable(a) => reproduce(&a),
        Command::Diagnose(a) => diagnose(&a),
    }
}

/// Parse `start:step:end` into the inclusive arithmetic grid.
pub fn parse_grid(spec: &str) -> anyhow::Result<Vec<f64>> {
    let parts: Vec<f64> = spec
        .split(':')
        .map(|p| p.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .with_context(|| format!("grid {spec:?} is not start:step:end"))?;
    let [start, step, end] = parts[..] else {
        bail!("grid {spec:?} is not start:step:end");
    };
    if !(start.is_finite() && step.is_finite() && end.is_finite()) || step <= 0.0 || end < start {
        bail!("grid {spec:?} needs a positive step and end >= start");
    }
    let count = ((end - start) / step + 1e-9).floor() as usize + 1;
    if count > 100_000 {
        bail!("grid {spec:?} has too many points");
    }
    Ok((0..count).map(|k| ((start + k as f64 * step) * 1e12).round() / 1e12).collect())
}

fn load_config(a: &Common) -> anyhow::Result<SimConfig> {
    let mut cfg = match (&a.config, a.table) {
        (Some(path), _) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
        }
        (None, Some(id)) => harness::reference_table(id)?.config(120, 1000, 42),
        (None, None) => SimConfig::default(),
    };
    if a.config.is_some() {
        if let Some(id) = a.table {
            let t = harness::reference_table(id)?;
            cfg.beta_grid = t.grid();
        }
    }
    if let Some(v) = a.reps {
        cfg.reps = v;
    }
    if let Some(v) = a.boot_reps {
        cfg.boot_reps = v;
    }
    if let Some(v) = a.alpha {
        cfg.alpha = v;
    }
    if let Some(v) = a.seed {
        cfg.master_seed = v;
    }
    if let Some(e) = &a.error {
        let kind = ErrorKind::parse(e).ok_or_else(|| anyhow!("unknown error law {e:?}"))?;
        cfg.error = ErrorSpec { kind, ..cfg.error };
    }
    if let Some(v) = a.concentration {
        cfg.concentration = v;
    }
    if let Some(v) = a.n {
        cfg.n = v;
    }
    if let Some(v) = a.q {
        cfg.q = v;
    }
    if let Some(g) = &a.grid {
        cfg.beta_grid = parse_grid(g)?;
    }
    if let Some(s) = a.blr_search {
        cfg.blr_search = match s {
            Search::Global => ProfileSearch::Global,
            Search::Window => ProfileSearch::Window,
        };
    }
    if let Some(c) = a.centering {
        cfg.centering = match c {
            CenterArg::Mle => Centering::Mle,
            CenterArg::Hypothesis => Centering::Hypothesis,
        };
    }
    cfg.validate()?;
    Ok(cfg)
}

fn emit(a: &Common, text: &str) -> anyhow::Result<()> {
    match &a.out {
        Some(path) => write_file(path, text),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())?;
            Ok(out.flush()?)
        }
    }
}

fn write_file(path: &Path, text: &str) -> anyhow::Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn to_json<T: Serialize>(value: &T) -> anyhow::Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

fn samples_csv(y1: &DVector<f64>, y2: &DVector<f64>) -> String {
    let mut s = String::from("y1,y2\n");
    for (a, b) in y1.iter().zip(y2.iter()) {
        s.push_str(&format!("{},{}\n", fmt_num(*a), fmt_num(*b)));
    }
    s
}

fn read_samples(path: &Path) -> anyhow::Result<(DVector<f64>, DVector<f64>)> {
    let mut reader = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    let headers = reader.headers()?.clone();
    let col = |name: &str| {
        headers.iter().position(|h| h.trim() == name).ok_or_else(|| anyhow!("{} lacks column {name}", path.display()))
    };
    let (i1, i2) = (col("y1")?, col("y2")?);
    let (mut y1, mut y2) = (Vec::new(), Vec::new());
    for (line, record) in reader.records().enumerate() {
        let record = record?;
        let get = |i: usize| -> anyhow::Result<f64> {
            let v: f64 = record.get(i).unwrap_or("").trim().parse().with_context(|| format!("row {}", line + 1))?;
            if !v.is_finite() {
                bail!("row {}: non-finite value", line + 1);
            }
            Ok(v)
        };
        y1.push(get(i1)?);
        y2.push(get(i2)?);
    }
    Ok((DVector::from_vec(y1), DVector::from_vec(y2)))
}

#[derive(Serialize)]
struct SampleOut<'a> {
    config: &'a SimConfig,
    y1: Vec<f64>,
    y2: Vec<f64>,
}

fn simulate(a: &Common) -> Result<(), Failure> {
    let cfg = load_config(a)?;
    let mut rng = RngStream::derive(cfg.master_seed, &[purpose::SAMPLE]);
    let s = simgen::gen_sample(&cfg, cfg.beta_star, &mut rng)?;
    let text = match a.format.unwrap_or(Format::Csv) {
        Format::Csv => samples_csv(&s.y1, &s.y2),
        Format::Json => to_json(&SampleOut { config: &cfg, y1: s.y1.as_slice().to_vec(), y2: s.y2.as_slice().to_vec() })?,
    };
    Ok(emit(a, &text)?)
}

fn power(a: &Common) -> Result<(), Failure> {
    let cfg = load_config(a)?;
    let table = harness::power_curve(&cfg)?;
    let text = match a.format.unwrap_or(Format::Csv) {
        Format::Csv => table.to_csv(),
        Format::Json => to_json(&table)?,
    };
    Ok(emit(a, &text)?)
}

#[derive(Serialize)]
struct TestOut<'a> {
    config: &'a SimConfig,
    beta0: f64,
    outcomes: Vec<ivboot::outcome::TestOutcome>,
}

fn test(a: &Common) -> Result<(), Failure> {
    let mut cfg = load_config(a)?;
    let (y1, y2) = match &a.data {
        Some(path) => {
            let (y1, y2) = read_samples(path)?;
            cfg.n = y1.len();
            cfg.validate()?;
            (y1, y2)
        }
        None => {
            let mut rng = RngStream::derive(cfg.master_seed, &[purpose::SAMPLE]);
            let (z, pi) = simgen::design(&cfg)?;
            simgen::gen_outcomes(&cfg, &z, &pi, cfg.beta_star, &mut rng)?
        }
    };
    let beta0 = a.beta0.unwrap_or(cfg.beta_star);
    let outcomes = harness::test_sample(&cfg, &y1, &y2, beta0)?;
    let text = match a.format.unwrap_or(Format::Json) {
        Format::Json => to_json(&TestOut { config: &cfg, beta0, outcomes })?,
        Format::Csv => {
            let mut s = String::from("test,statistic,critical_value,reject\n");
            for o in &outcomes {
                s.push_str(&format!("{},{},{},{}\n", o.name, fmt_num(o.statistic), fmt_num(o.critical_value), o.reject));
            }
            s
        }
    };
    Ok(emit(a, &text)?)
}

#[derive(Serialize)]
struct ReproduceOut<'a> {
    table: &'a harness::PowerTable,
    comparison: &'a harness::ComparisonReport,
}

fn reproduce(a: &Common) -> Result<(), Failure> {
    let id = a.table.ok_or_else(|| anyhow!("reproduce-table needs --table"))?;
    let cfg = load_config(a)?;
    let table = harness::power_curve(&cfg)?;
    let report = harness::compare_to_paper(&table, id)?;
    let text = match a.format.unwrap_or(Format::Csv) {
        Format::Csv => table.to_csv(),
        Format::Json => to_json(&ReproduceOut { table: &table, comparison: &report })?,
    };
    emit(a, &text)?;
    let summary = format!(
        "table {id}: {:.1}% of cells within 0.08, {:.1}% within 0.15, max diff {:.4}",
        100.0 * report.within_008,
        100.0 * report.within_015,
        report.max_diff
    );
    if report.pass {
        eprintln!("{summary}");
        Ok(())
    } else {
        Err(Failure::Comparison(summary))
    }
}

#[derive(Serialize)]
struct ZPoint {
    x: f64,
    z2: f64,
}

#[derive(Serialize)]
struct DiagnoseOut {
    seed: u64,
    reps: usize,
    z_function: Vec<ZPoint>,
    z_breakpoints: diag::Breakpoints,
    opnorm_tail: Vec<diag::TailPoint>,
    gauss_compare: Vec<(f64, diag::GaussCompare)>,
    gar_rademacher: Vec<diag::GarPoint>,
    gar_slope: f64,
    fsc: diag::FscReport,
}

fn diagnose(a: &Common) -> Result<(), Failure> {
    let cfg = load_config(a)?;
    let reps = a.reps.unwrap_or(1000);
    if reps == 0 {
        return Err(anyhow!("reps must be positive").into());
    }
    let root = RngStream::derive(cfg.master_seed, &[purpose::DIAGNOSTIC]);
    let q = cfg.q;

    let p = DeviationParams::with_default_g(0.0, DMatrix::identity(q, q))?;
    let z_function = [0.0, 0.01, 0.1, 0.5, 1.0, 5.0, 10.0, 50.0, 100.0]
        .iter()
        .map(|&x| Ok(ZPoint { x, z2: diag::z_function(&p.with_x(x)?) }))
        .collect::<ivboot::Result<_>>()?;

    let sampler = RademacherRankOne { dim: q, n: cfg.n };
    let sd = (cfg.n as f64).sqrt();
    let t_grid: Vec<f64> = [1.0, 2.0, 3.0, 4.0].iter().map(|k| k * sd).collect();
    let opnorm_tail = diag::empirical_opnorm_tail(&sampler, &t_grid, reps, &root.child(0));

    let eye = DMatrix::<f64>::identity(q, q);
    let gauss_compare = [1.05, 1.1, 1.2]
        .iter()
        .map(|&s| Ok((s, diag::gauss_compare_distance(&eye, &(&eye * s), reps, &root.child(1))?)))
        .collect::<ivboot::Result<_>>()?;

    let gar_rademacher =
        diag::gar_scaling_check(SummandLaw::RademacherProduct, 3, &[50, 100, 200, 400], reps, &root.child(2))?;
    let gar_slope = diag::loglog_slope(&gar_rademacher);

    let mut rng = root.child(3);
    let sample = simgen::gen_sample(&cfg, cfg.beta_star, &mut rng)?;
    let basis = DMatrix::from_fn(1, cfg.n, |_, i| sample.y2[i]);
    let design = ivboot::basis_model::build_general_design(&sample.z, &basis, &sample.y1, &DVector::zeros(q), 1.0)?;
    let fsc = diag::fsc_design_check(&design)?;

    let out = DiagnoseOut {
        seed: cfg.master_seed,
        reps,
        z_breakpoints: diag::breakpoints(&p),
        z_function,
        opnorm_tail,
        gauss_compare,
        gar_rademacher,
        gar_slope,
        fsc,
    };
    Ok(emit(a, &to_json(&out)?)?)
}
