//! Data ingestion, classical diagnostics and the `relwn` command line.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::bootstrap;
use crate::error::{Error, Result};
use crate::estimator::{self, Mode, TimeSeries};
use crate::kernel::KernelSpec;
use crate::simulate::{self, PhiFunction, SimDesign};
use crate::tuning::{self, Setting, TuningConfig};

/// Minimum series length accepted by [`ingest`].
pub const MIN_INGEST_LEN: usize = 50;

/// Environment variable holding the default worker count.
pub const THREADS_ENV: &str = "RELWN_THREADS";

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Column {
    Index(usize),
    Name(String),
}

impl FromStr for Column {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.parse::<usize>() {
            Ok(i) => Column::Index(i),
            Err(_) => Column::Name(s.to_string()),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Transform {
    #[default]
    None,
    LogReturn,
}

impl FromStr for Transform {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "none" => Ok(Transform::None),
            "log-return" | "logret" => Ok(Transform::LogReturn),
            _ => Err(Error::Config(format!("unknown transform `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NaPolicy {
    #[default]
    Fail,
    Drop,
}

impl FromStr for NaPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "fail" => Ok(NaPolicy::Fail),
            "drop" => Ok(NaPolicy::Drop),
            _ => Err(Error::Config(format!("unknown NA policy `{s}`"))),
        }
    }
}

/// Where and how to read a series. With no column given, the last column
/// is used.
#[derive(Debug, Clone, PartialEq)]
pub struct IngestSpec {
    pub path: PathBuf,
    pub column: Option<Column>,
    pub transform: Transform,
    pub na: NaPolicy,
}

impl IngestSpec {
    pub fn new(path: impl Into<PathBuf>) -> Self {
        IngestSpec {
            path: path.into(),
            column: None,
            transform: Transform::None,
            na: NaPolicy::Fail,
        }
    }
}

fn is_na(field: &str) -> bool {
    matches!(
        field.trim().to_ascii_lowercase().as_str(),
        "" | "na" | "nan" | "null" | "." | "n/a"
    )
}

/// Reads one numeric column. A header row is assumed when the first row
/// has a non-numeric entry in the selected column.
pub fn ingest(spec: &IngestSpec) -> Result<TimeSeries> {
    let text = fs::read_to_string(&spec.path)
        .map_err(|e| Error::Data(format!("cannot read {}: {e}", spec.path.display())))?;
    ingest_str(&text, spec)
}

pub fn ingest_str(text: &str, spec: &IngestSpec) -> Result<TimeSeries> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let rows: Vec<csv::StringRecord> = rdr.records().collect::<std::result::Result<_, _>>()?;
    let first = rows.first().ok_or_else(|| Error::Data("empty file".into()))?;
    let width = first.len();

    let named = matches!(spec.column, Some(Column::Name(_)));
    let col = match &spec.column {
        None => width - 1,
        Some(Column::Index(i)) if *i < width => *i,
        Some(Column::Index(i)) => {
            return Err(Error::Config(format!("column {i} out of range ({width} columns)")))
        }
        Some(Column::Name(name)) => first
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Config(format!("no column named `{name}`")))?,
    };
    let header = named || first.get(col).is_some_and(|f| f.parse::<f64>().is_err() && !is_na(f));
    let stamp_col = (col != 0 && width > 1).then_some(0);

    let mut values = Vec::with_capacity(rows.len());
    let mut stamps = Vec::with_capacity(rows.len());
    for (i, row) in rows.iter().enumerate().skip(usize::from(header)) {
        let line = i + 1;
        let field = row.get(col).unwrap_or("");
        let parsed = field.parse::<f64>().ok().filter(|v| v.is_finite());
        match (parsed, spec.na) {
            (Some(v), _) => {
                values.push(v);
                if let Some(c) = stamp_col {
                    stamps.push(row.get(c).unwrap_or("").to_string());
                }
            }
            (None, NaPolicy::Drop) => {}
            (None, NaPolicy::Fail) if is_na(field) => {
                return Err(Error::Data(format!("missing value on line {line}")))
            }
            (None, NaPolicy::Fail) => {
                return Err(Error::Data(format!("unparseable value `{field}` on line {line}")))
            }
        }
    }

    if spec.transform == Transform::LogReturn {
        if let Some(i) = values.iter().position(|v| *v <= 0.0) {
            return Err(Error::Data(format!("non-positive price {} at observation {}", values[i], i + 1)));
        }
        values = values.windows(2).map(|w| (w[1] / w[0]).ln()).collect();
        if !stamps.is_empty() {
            stamps.remove(0);
        }
    }
    if values.len() < MIN_INGEST_LEN {
        return Err(Error::TooShort {
            n: values.len(),
            min: MIN_INGEST_LEN,
        });
    }
    let series = TimeSeries::new(values)?;
    if stamps.is_empty() {
        Ok(series)
    } else {
        series.with_timestamps(stamps)
    }
}

/// Sample autocorrelations `ρ̂_1..ρ̂_m` (mean removed, `1/n` normalization)
/// and the `±1.96/√n` band.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassicalAcf {
    pub n: usize,
    pub values: Vec<f64>,
    pub band: f64,
}

pub fn classical_acf(series: &TimeSeries, max_lag: usize) -> Result<ClassicalAcf> {
    let x = series.values();
    let n = x.len();
    if max_lag >= n {
        return Err(Error::InvalidLag { lag: max_lag, n });
    }
    let mean = x.iter().sum::<f64>() / n as f64;
    let c: Vec<f64> = x.iter().map(|v| v - mean).collect();
    let c0: f64 = c.iter().map(|v| v * v).sum();
    if !(c0 > f64::EPSILON * n as f64 * mean.abs().max(1.0).powi(2)) {
        return Err(Error::Data("zero-variance series".into()));
    }
    let values = (1..=max_lag)
        .map(|k| c[k..].iter().zip(&c).map(|(a, b)| a * b).sum::<f64>() / c0)
        .collect();
    Ok(ClassicalAcf {
        n,
        values,
        band: 1.96 / (n as f64).sqrt(),
    })
}

/// Ljung–Box `Q` and its chi-square(m) upper-tail p-value.
pub fn ljung_box(series: &TimeSeries, max_lag: usize) -> Result<(f64, f64)> {
    let n = series.len();
    if max_lag == 0 || 4 * max_lag >= n {
        return Err(Error::Config(format!("Ljung-Box lag {max_lag} must satisfy 1 <= m < n/4 = {}", n as f64 / 4.0)));
    }
    let acf = classical_acf(series, max_lag)?;
    Ok(ljung_box_from_acf(&acf.values, n))
}

/// Ljung–Box from given autocorrelations `ρ̂_1..ρ̂_m`.
pub fn ljung_box_from_acf(acf: &[f64], n: usize) -> (f64, f64) {
    let nf = n as f64;
    let q = nf * (nf + 2.0) * acf.iter().enumerate().map(|(i, r)| r * r / (nf - (i + 1) as f64)).sum::<f64>();
    let chi = ChiSquared::new(acf.len() as f64).expect("positive degrees of freedom");
    (q, chi.sf(q))
}

#[derive(Debug, Parser)]
#[command(name = "relwn", version, about = "Relevant white-noise tests for locally stationary series")]
pub struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true, env = THREADS_ENV)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Test H0: max |γ(h,t)| <= Δ.
    Test(TestArgs),
    /// Local autocorrelation surface or classical ACF as CSV.
    Acf(AcfArgs),
    /// tvAR(1) rejection curves as CSV.
    Simulate(SimulateArgs),
    /// Ljung-Box portmanteau test.
    Ljungbox(LjungboxArgs),
}

#[derive(Debug, Args)]
pub struct InputArgs {
    /// CSV file.
    pub file: PathBuf,
    /// Column index (0-based) or header name; default last column.
    #[arg(long)]
    pub column: Option<String>,
    /// none | log-return
    #[arg(long, default_value = "none")]
    pub transform: String,
    /// fail | drop
    #[arg(long, default_value = "fail")]
    pub na: String,
}

impl InputArgs {
    fn load(&self) -> Result<TimeSeries> {
        ingest(&IngestSpec {
            path: self.file.clone(),
            column: self.column.as_deref().map(str::parse).transpose()?,
            transform: self.transform.parse()?,
            na: self.na.parse()?,
        })
    }
}

/// Tuning flags; each overrides the config file when given.
#[derive(Debug, Args, Default)]
pub struct TuningArgs {
    /// TOML file with tuning keys.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub lags: Option<usize>,
    /// cov | corr
    #[arg(long)]
    pub mode: Option<String>,
    /// auto | value in (0, 1/2)
    #[arg(long)]
    pub bandwidth: Option<String>,
    /// auto | block length
    #[arg(long)]
    pub block: Option<String>,
    /// auto | extremal-set threshold
    #[arg(long)]
    pub rho: Option<String>,
    #[arg(long)]
    pub boot: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Remove a local mean first.
    #[arg(long)]
    pub center: bool,
}

impl TuningArgs {
    fn resolve(&self) -> Result<TuningConfig> {
        let mut cfg = match &self.config {
            Some(p) => load_config(p)?,
            None => TuningConfig::default(),
        };
        if let Some(v) = self.lags {
            cfg.lags = v;
        }
        if let Some(v) = &self.mode {
            cfg.mode = v.parse()?;
        }
        if let Some(v) = &self.bandwidth {
            cfg.bandwidth = v.parse()?;
        }
        if let Some(v) = &self.block {
            cfg.block_length = v.parse()?;
        }
        if let Some(v) = &self.rho {
            cfg.rho = v.parse()?;
        }
        if let Some(v) = self.boot {
            cfg.boot = v;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        cfg.center |= self.center;
        Ok(cfg)
    }
}

pub fn load_config(path: &Path) -> Result<TuningConfig> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

#[derive(Debug, Args)]
pub struct TestArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub tuning: TuningArgs,
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Write the JSON report here (`-` for stdout).
    #[arg(long)]
    pub json: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AcfArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub tuning: TuningArgs,
    /// Sample ACF with ±1.96/√n bands instead of the local surface.
    #[arg(long)]
    pub classical: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// sin02 | const02 | constant coefficient
    #[arg(long, default_value = "const02")]
    pub design: String,
    #[arg(long, default_value_t = 600)]
    pub n: usize,
    #[arg(long, default_value_t = 1000)]
    pub reps: usize,
    /// Comma-separated d_n values.
    #[arg(long, value_delimiter = ',', default_value = "3")]
    pub lags: Vec<usize>,
    #[arg(long, default_value_t = 0.1)]
    pub alpha: f64,
    /// Comma-separated Δ values.
    #[arg(long, value_delimiter = ',', default_value = "0,0.05,0.1,0.15,0.2,0.25,0.3")]
    pub delta_grid: Vec<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 200)]
    pub burn_in: usize,
    #[arg(long, default_value_t = 1000)]
    pub boot: usize,
    /// cov | corr
    #[arg(long, default_value = "corr")]
    pub mode: String,
    #[arg(long, default_value = "auto")]
    pub bandwidth: String,
    #[arg(long, default_value = "auto")]
    pub block: String,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct LjungboxArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long, default_value_t = 10)]
    pub lags: usize,
}

fn open_out<'a>(path: Option<&Path>, stdout: &'a mut dyn Write) -> Result<Box<dyn Write + 'a>> {
    Ok(match path {
        Some(p) if p != Path::new("-") => Box::new(fs::File::create(p)?),
        _ => Box::new(stdout),
    })
}

pub fn run_test_cmd(args: &TestArgs, stdout: &mut dyn Write) -> Result<()> {
    let series = args.input.load()?;
    let mut cfg = args.tuning.resolve()?;
    if let Some(d) = args.delta {
        cfg.delta = d;
    }
    if let Some(a) = args.alpha {
        cfg.alpha = a;
    }
    let report = bootstrap::run_test(&series, &cfg)?;
    let json = serde_json::to_string_pretty(&report)?;
    match args.json.as_deref() {
        Some(p) if p == Path::new("-") => writeln!(stdout, "{json}")?,
        other => {
            if let Some(p) = other {
                fs::write(p, format!("{json}\n"))?;
            }
            writeln!(stdout, "adaptive delta (Δ̂_α): {:.6}", report.adaptive_delta)?;
            writeln!(
                stdout,
                "n = {}  d_hat = {:.6}  T = {:.4}  q* = {:.4}  delta = {}  alpha = {}",
                report.n, report.d_hat_inf, report.t_stat, report.q_star, report.delta, report.alpha
            )?;
            writeln!(
                stdout,
                "decision: {}",
                if report.reject { "reject H0 (relevant deviation)" } else { "do not reject H0" }
            )?;
            let t = &report.tuning;
            writeln!(
                stdout,
                "bandwidth = {:.4}  block = {}  lags = {}  rho = {:.4e}  extremal = {}/{}",
                t.bandwidth, t.block_length, t.lags, t.rho, report.extremal_set_size, report.grid_size
            )?;
        }
    }
    Ok(())
}

pub fn run_acf_cmd(args: &AcfArgs, stdout: &mut dyn Write) -> Result<()> {
    let series = args.input.load()?;
    let cfg = args.tuning.resolve()?;
    let mut out = csv::Writer::from_writer(open_out(args.out.as_deref(), stdout)?);
    if args.classical {
        let acf = classical_acf(&series, cfg.lags)?;
        out.write_record(["lag", "acf", "lower", "upper"])?;
        for (k, r) in acf.values.iter().enumerate() {
            out.write_record([(k + 1).to_string(), r.to_string(), (-acf.band).to_string(), acf.band.to_string()])?;
        }
    } else {
        cfg.validate(series.len())?;
        let mut warnings = Vec::new();
        let series = if cfg.center {
            estimator::center_series(&series, &tuning::mean_bandwidth(&series, &cfg, &mut warnings)?)?
        } else {
            series
        };
        let block = tuning::resolve_block_length(&series, &cfg, &mut warnings)?;
        let bw = tuning::resolve_bandwidth(&series, &cfg, block, &mut warnings)?;
        for w in &warnings {
            log::warn!("{w}");
        }
        let surface = estimator::acf_surface(&series, cfg.lags, &KernelSpec::new(cfg.kernel, bw)?, cfg.mode)?;
        out.write_record(["lag", "j", "t", "value"])?;
        let n = surface.n as f64;
        for (lag, j, v) in surface.points() {
            out.write_record([lag.to_string(), j.to_string(), (j as f64 / n).to_string(), v.to_string()])?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn run_simulate_cmd(args: &SimulateArgs, stdout: &mut dyn Write) -> Result<()> {
    let design = SimDesign {
        phi: args.design.parse::<PhiFunction>()?,
        n: args.n,
        replications: args.reps,
        delta_grid: args.delta_grid.clone(),
        lags: args.lags.clone(),
        alpha: args.alpha,
        seed: args.seed,
        burn_in: args.burn_in,
    };
    let cfg = TuningConfig {
        boot: args.boot,
        mode: args.mode.parse::<Mode>()?,
        bandwidth: args.bandwidth.parse::<Setting<f64>>()?,
        block_length: args.block.parse::<Setting<usize>>()?,
        ..TuningConfig::default()
    };
    let curve = simulate::rejection_curve(&design, &cfg)?;
    curve.write_csv(open_out(args.out.as_deref(), stdout)?)
}

pub fn run_ljungbox_cmd(args: &LjungboxArgs, stdout: &mut dyn Write) -> Result<()> {
    let series = args.input.load()?;
    let (q, p) = ljung_box(&series, args.lags)?;
    writeln!(stdout, "Q = {q:.6}  df = {}  p-value = {p:.6e}", args.lags)?;
    Ok(())
}

pub fn dispatch(cli: &Cli, stdout: &mut dyn Write) -> Result<()> {
    let go = |out: &mut dyn Write| match &cli.command {
        Command::Test(a) => run_test_cmd(a, out),
        Command::Acf(a) => run_acf_cmd(a, out),
        Command::Simulate(a) => run_simulate_cmd(a, out),
        Command::Ljungbox(a) => run_ljungbox_cmd(a, out),
    };
    if let Some(t) = cli.threads {
        // A second call in the same process keeps the first pool.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t.max(1)).build_global();
    }
    go(stdout)
}
