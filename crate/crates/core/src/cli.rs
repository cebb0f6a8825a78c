//! Command-line front end.
//!
//! Every subcommand reads a single TOML run configuration (all sections
//! optional), applies command-line overrides, validates everything, and only
//! then touches data. Artifacts are written atomically into the output
//! directory.
//!
//! ```toml
//! [data]
//! prices = "prices.csv"      # default: <out>/prices.csv
//! basis = "basis.csv"        # default: <out>/basis.csv
//! weights = "report.json"    # backtest input; default: <out>/solve_report.json
//! out = "out"
//! leverage = 1.0
//!
//! [criterion]
//! kind = "pcro"              # pre | por | cro | pcro
//! eta = 0.5
//! lag_order = 3
//!
//! [design]
//! mu = 0.0
//! mu_grid = [0.0, 0.1, 1.0]  # sweep
//! tau = 0.05                 # omitted: scale-aware default
//! max_iters = 500
//!
//! [step]
//! kind = "armijo"            # constant | diminishing | armijo
//! alpha = 1e-4
//! beta = 0.5
//!
//! [admm]
//! rho = 1.0
//!
//! [backtest]
//! lookback = 60
//!
//! [synth]
//! seed = 7
//! ```
//!
//! Relative paths in the file resolve against the file's directory.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::admm::AdmmConfig;
use crate::backtest::{run_backtest, BacktestReport, TradeConfig};
use crate::error::{invalid, ErrorClass, MrpError, Result};
use crate::market_data::{build_spreads, load_basis, load_panel, write_basis, write_panel, AssetPanel, SpreadBasis};
use crate::moments::{build_criterion, estimate_moments, CriterionKind, CriterionSpec, LaggedMoments};
use crate::sca::{design_mrp, DesignOptions, SolveReport, StepRule};
use crate::synth::{generate, SynthConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_IO: i32 = 3;
pub const EXIT_NUMERICAL: i32 = 4;

pub fn exit_code(err: &MrpError) -> i32 {
    match err.class() {
        ErrorClass::Validation => EXIT_VALIDATION,
        ErrorClass::Io => EXIT_IO,
        ErrorClass::Numerical => EXIT_NUMERICAL,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    pub prices: Option<PathBuf>,
    pub basis: Option<PathBuf>,
    pub weights: Option<PathBuf>,
    pub out: PathBuf,
    pub leverage: f64,
}

impl Default for DataSection {
    fn default() -> Self {
        Self {
            prices: None,
            basis: None,
            weights: None,
            out: PathBuf::from("out"),
            leverage: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CriterionSection {
    pub kind: CriterionKind,
    pub eta: f64,
    pub lag_order: usize,
}

impl Default for CriterionSection {
    fn default() -> Self {
        Self {
            kind: CriterionKind::Predictability,
            eta: 0.5,
            lag_order: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DesignSection {
    pub mu: f64,
    pub mu_grid: Vec<f64>,
    pub tau: Option<f64>,
    pub max_iters: usize,
    pub objective_tol: f64,
    pub stall_iters: usize,
    pub stationarity_tol: f64,
    /// Concurrent sweep rows; `None` uses all cores.
    pub workers: Option<usize>,
}

impl Default for DesignSection {
    fn default() -> Self {
        let d = DesignOptions::default();
        Self {
            mu: d.mu,
            mu_grid: Vec::new(),
            tau: d.tau,
            max_iters: d.max_iters,
            objective_tol: d.objective_tol,
            stall_iters: d.stall_iters,
            stationarity_tol: d.stationarity_tol,
            workers: None,
        }
    }
}

/// ADMM overrides; unset fields take [`AdmmConfig::for_dim`] values.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdmmSection {
    pub rho: Option<f64>,
    pub max_iters: Option<usize>,
    pub primal_tol: Option<f64>,
    pub dual_tol: Option<f64>,
    pub adaptive_rho: Option<bool>,
}

impl AdmmSection {
    pub fn resolve(&self, n: usize) -> AdmmConfig {
        let d = AdmmConfig::for_dim(n);
        AdmmConfig {
            rho: self.rho.unwrap_or(d.rho),
            max_iters: self.max_iters.unwrap_or(d.max_iters),
            primal_tol: self.primal_tol.unwrap_or(d.primal_tol),
            dual_tol: self.dual_tol.unwrap_or(d.dual_tol),
            adaptive_rho: self.adaptive_rho.unwrap_or(d.adaptive_rho),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BacktestSection {
    pub open_threshold: f64,
    pub close_threshold: f64,
    pub lookback: usize,
    pub annualization: f64,
}

impl Default for BacktestSection {
    fn default() -> Self {
        let d = TradeConfig::default();
        Self {
            open_threshold: d.open_threshold,
            close_threshold: d.close_threshold,
            lookback: d.lookback,
            annualization: d.annualization,
        }
    }
}

impl BacktestSection {
    pub fn trade_config(&self) -> TradeConfig {
        TradeConfig {
            open_threshold: self.open_threshold,
            close_threshold: self.close_threshold,
            lookback: self.lookback,
            annualization: self.annualization,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub data: DataSection,
    pub criterion: CriterionSection,
    pub design: DesignSection,
    pub step: StepRule,
    pub admm: AdmmSection,
    pub backtest: BacktestSection,
    pub synth: SynthConfig,
}

fn resolve(base: &Path, p: &mut PathBuf) {
    if p.is_relative() {
        *p = base.join(&*p);
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| MrpError::Config(e.to_string()))
    }

    /// Reads a config file, resolving relative paths against its directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| MrpError::io(path, e))?;
        let mut cfg = Self::from_toml(&text).map_err(|e| match e {
            MrpError::Config(msg) => MrpError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        let d = &mut cfg.data;
        resolve(base, &mut d.out);
        for p in [&mut d.prices, &mut d.basis, &mut d.weights].into_iter().flatten() {
            resolve(base, p);
        }
        Ok(cfg)
    }

    pub fn prices_path(&self) -> PathBuf {
        self.data.prices.clone().unwrap_or_else(|| self.data.out.join("prices.csv"))
    }

    pub fn basis_path(&self) -> PathBuf {
        self.data.basis.clone().unwrap_or_else(|| self.data.out.join("basis.csv"))
    }

    pub fn weights_path(&self) -> PathBuf {
        self.data.weights.clone().unwrap_or_else(|| self.data.out.join("solve_report.json"))
    }

    /// Numeric checks shared by every subcommand.
    pub fn validate(&self) -> Result<()> {
        if !(self.data.leverage > 0.0) || !self.data.leverage.is_finite() {
            return Err(invalid(format!("leverage budget must be positive, got {}", self.data.leverage)));
        }
        if self.criterion.lag_order == 0 {
            return Err(invalid("lag_order must be at least 1"));
        }
        if !(self.criterion.eta >= 0.0) || !self.criterion.eta.is_finite() {
            return Err(invalid("eta must be non-negative"));
        }
        if self.criterion.kind == CriterionKind::PenalizedCrossing && self.criterion.eta == 0.0 {
            return Err(invalid("penalized crossing needs eta > 0"));
        }
        check_mu(self.design.mu)?;
        for &mu in &self.design.mu_grid {
            check_mu(mu)?;
        }
        if let Some(tau) = self.design.tau {
            if !(tau >= 0.0) || !tau.is_finite() {
                return Err(invalid(format!("tau must be >= 0, got {tau}")));
            }
        }
        if self.design.max_iters == 0 || self.design.stall_iters == 0 {
            return Err(invalid("max_iters and stall_iters must be positive"));
        }
        if !(self.design.objective_tol > 0.0) || !(self.design.stationarity_tol > 0.0) {
            return Err(invalid("design tolerances must be positive"));
        }
        if self.design.workers == Some(0) {
            return Err(invalid("workers must be positive"));
        }
        self.step.validate()?;
        self.admm.resolve(1).validate()?;
        self.backtest.trade_config().validate()?;
        self.synth.validate()?;
        Ok(())
    }

    pub fn design_options(&self, n: usize) -> DesignOptions {
        DesignOptions {
            mu: self.design.mu,
            tau: self.design.tau,
            step: self.step,
            inner: Some(self.admm.resolve(n)),
            w0: None,
            max_iters: self.design.max_iters,
            objective_tol: self.design.objective_tol,
            stall_iters: self.design.stall_iters,
            stationarity_tol: self.design.stationarity_tol,
        }
    }
}

fn check_mu(mu: f64) -> Result<()> {
    if !(mu >= 0.0) || !mu.is_finite() {
        return Err(invalid(format!("mu must be >= 0, got {mu}")));
    }
    Ok(())
}

fn require_file(path: &Path) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(MrpError::io(path, std::io::Error::new(std::io::ErrorKind::NotFound, "file not found")))
    }
}

/// Writes through a temp file in the destination directory, then renames.
pub fn write_atomic<F>(path: &Path, fill: F) -> Result<()>
where
    F: FnOnce(&mut dyn Write) -> Result<()>,
{
    let dir = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir).map_err(|e| MrpError::io(dir, e))?;
    let tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| MrpError::io(dir, e))?;
    {
        let mut w = BufWriter::new(tmp.as_file());
        fill(&mut w)?;
        w.flush().map_err(|e| MrpError::io(path, e))?;
    }
    tmp.persist(path).map_err(|e| MrpError::io(path, e.error))?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_atomic(path, |w| {
        serde_json::to_writer_pretty(&mut *w, value)?;
        writeln!(w).map_err(|e| MrpError::io(path, e))
    })
}

fn write_csv_rows(path: &Path, header: &[&str], rows: Vec<Vec<String>>) -> Result<()> {
    write_atomic(path, |w| {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(header)?;
        for row in rows {
            out.write_record(row)?;
        }
        out.flush().map_err(|e| MrpError::io(path, e))
    })
}

struct Inputs {
    panel: AssetPanel,
    basis: SpreadBasis,
}

fn load_inputs(cfg: &RunConfig) -> Result<Inputs> {
    let prices = cfg.prices_path();
    let basis_path = cfg.basis_path();
    require_file(&prices)?;
    require_file(&basis_path)?;
    let panel = load_panel(&prices)?;
    let basis = load_basis(&basis_path, panel.tickers(), cfg.data.leverage)?;
    Ok(Inputs { panel, basis })
}

fn moments_for(cfg: &RunConfig, inputs: &Inputs) -> Result<LaggedMoments> {
    let spreads = build_spreads(&inputs.panel, &inputs.basis)?;
    let moments = estimate_moments(&spreads, cfg.criterion.lag_order)?;
    for w in moments.warnings() {
        log::warn!("{w}");
    }
    Ok(moments)
}

fn criterion_for(cfg: &RunConfig, moments: &LaggedMoments) -> Result<CriterionSpec> {
    build_criterion(moments, cfg.criterion.kind, cfg.criterion.eta)
}

/// Writes `prices.csv` and `basis.csv` for a seeded synthetic market.
pub fn cmd_synth(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    cfg.validate()?;
    let data = generate(&cfg.synth)?;
    let out = &cfg.data.out;
    let prices = out.join("prices.csv");
    let basis = out.join("basis.csv");
    write_atomic(&prices, |w| write_panel(&data.panel, w))?;
    write_atomic(&basis, |w| write_basis(&data.basis, data.panel.tickers(), w))?;
    log::info!(
        "synthetic market: {} assets, {} spreads, {} periods, seed {}",
        cfg.synth.assets,
        cfg.synth.spreads,
        cfg.synth.periods,
        cfg.synth.seed
    );
    Ok(vec![prices, basis])
}

/// Writes `moments.json` with the lagged autocovariances of the spreads.
pub fn cmd_moments(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    cfg.validate()?;
    let inputs = load_inputs(cfg)?;
    let moments = moments_for(cfg, &inputs)?;
    let path = cfg.data.out.join("moments.json");
    write_json(&path, &moments.to_file())?;
    Ok(vec![path])
}

/// Runs one design and writes `solve_report.json`, `weights.csv` and
/// `objective_trace.csv`.
pub fn cmd_design(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    cfg.validate()?;
    let inputs = load_inputs(cfg)?;
    let moments = moments_for(cfg, &inputs)?;
    let spec = criterion_for(cfg, &moments)?;
    let report = design_mrp(&spec, &moments, &inputs.basis, &cfg.design_options(moments.dim()))?;
    log::info!(
        "{}: F = {:e} after {} iterations ({:?})",
        report.criterion,
        report.objective.f,
        report.iterations,
        report.reason
    );
    if !report.converged {
        log::warn!("design stopped without convergence: {:?}", report.reason);
    }

    let out = &cfg.data.out;
    let report_path = out.join("solve_report.json");
    let weights_path = out.join("weights.csv");
    let trace_path = out.join("objective_trace.csv");
    write_json(&report_path, &report)?;
    let rows = inputs
        .panel
        .tickers()
        .iter()
        .zip(&report.weights.w_p)
        .map(|(t, v)| vec![t.clone(), v.to_string()])
        .collect();
    write_csv_rows(&weights_path, &["ticker", "w_p"], rows)?;
    let rows = report
        .objective_trace
        .iter()
        .enumerate()
        .map(|(k, f)| {
            let gamma = if k == 0 { String::new() } else { report.gamma_trace[k - 1].to_string() };
            vec![k.to_string(), f.to_string(), gamma]
        })
        .collect();
    write_csv_rows(&trace_path, &["iteration", "objective", "gamma"], rows)?;
    Ok(vec![report_path, weights_path, trace_path])
}

/// One row of the trade-off table; `outcome` carries the per-row error.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub mu: f64,
    pub outcome: std::result::Result<SweepPoint, String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub u: f64,
    pub variance: f64,
    pub leverage: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Designs one portfolio per `mu` (rows run concurrently) and writes
/// `tradeoff.csv`. Failed rows are recorded and the sweep continues.
pub fn cmd_sweep(cfg: &RunConfig) -> Result<(Vec<PathBuf>, Vec<SweepRow>)> {
    cfg.validate()?;
    if cfg.design.mu_grid.is_empty() {
        return Err(invalid("sweep needs a non-empty mu grid"));
    }
    let inputs = load_inputs(cfg)?;
    let moments = moments_for(cfg, &inputs)?;
    let spec = criterion_for(cfg, &moments)?;
    let base = cfg.design_options(moments.dim());

    let solve_row = |&mu: &f64| {
        let opts = DesignOptions { mu, ..base.clone() };
        let outcome = design_mrp(&spec, &moments, &inputs.basis, &opts)
            .map(|r| SweepPoint {
                u: r.objective.u,
                variance: r.variance,
                leverage: r.weights.leverage(),
                iterations: r.iterations,
                converged: r.converged,
            })
            .map_err(|e| e.to_string());
        if let Err(msg) = &outcome {
            log::warn!("mu = {mu}: {msg}");
        }
        SweepRow { mu, outcome }
    };
    let rows: Vec<SweepRow> = match cfg.design.workers {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| MrpError::Config(e.to_string()))?
            .install(|| cfg.design.mu_grid.par_iter().map(solve_row).collect()),
        None => cfg.design.mu_grid.par_iter().map(solve_row).collect(),
    };

    let path = cfg.data.out.join("tradeoff.csv");
    let records = rows
        .iter()
        .map(|row| match &row.outcome {
            Ok(p) => vec![
                row.mu.to_string(),
                p.u.to_string(),
                p.variance.to_string(),
                p.leverage.to_string(),
                p.iterations.to_string(),
                if p.converged { "converged" } else { "not_converged" }.to_string(),
            ],
            Err(msg) => vec![
                row.mu.to_string(),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                format!("error: {msg}"),
            ],
        })
        .collect();
    write_csv_rows(&path, &["mu", "u", "variance", "leverage", "iterations", "status"], records)?;
    if rows.iter().all(|r| r.outcome.is_err()) {
        return Err(MrpError::SolverFailure {
            iteration: 0,
            reason: "every sweep row failed".into(),
            objective_trace: Vec::new(),
        });
    }
    Ok((vec![path], rows))
}

/// Backtests the weights of a saved solve report; writes
/// `backtest_report.json` and `cumulative_pnl.csv`.
pub fn cmd_backtest(cfg: &RunConfig) -> Result<(Vec<PathBuf>, BacktestReport)> {
    cfg.validate()?;
    let weights_path = cfg.weights_path();
    require_file(&weights_path)?;
    let inputs = load_inputs(cfg)?;
    let text = fs::read_to_string(&weights_path).map_err(|e| MrpError::io(&weights_path, e))?;
    let solved: SolveReport = serde_json::from_str(&text)?;
    let report = run_backtest(&solved.weights, &inputs.panel, &inputs.basis, &cfg.backtest.trade_config())?;
    log::info!(
        "{} trades, ROI {:.4}, Sharpe {:.3}",
        report.num_trades,
        report.roi,
        report.sharpe.value
    );

    let out = &cfg.data.out;
    let report_path = out.join("backtest_report.json");
    let pnl_path = out.join("cumulative_pnl.csv");
    write_json(&report_path, &report)?;
    let rows = inputs
        .panel
        .dates()
        .iter()
        .zip(&report.cumulative_pnl)
        .map(|(d, v)| vec![d.to_string(), v.to_string()])
        .collect();
    write_csv_rows(&pnl_path, &["date", "value"], rows)?;
    Ok((vec![report_path, pnl_path], report))
}

#[derive(Debug, Parser)]
#[command(name = "mrp", version, about = "Mean-reverting portfolio design and backtesting")]
pub struct Cli {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// TOML run configuration
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Seed for synthetic data
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Trade-off weight, or a comma-separated grid for `sweep`
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub mu: Option<String>,
    /// pre, por, cro or pcro
    #[arg(long, global = true)]
    pub criterion: Option<CriterionKind>,
    #[arg(long, short, global = true)]
    pub verbose: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Generate a seeded synthetic cointegrated market
    Synth,
    /// Estimate lagged autocovariances of the spreads
    Moments,
    /// Design one portfolio
    Design,
    /// Design over a grid of trade-off weights
    Sweep,
    /// Backtest a designed portfolio
    Backtest,
}

fn parse_grid(text: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<f64>().map_err(|_| invalid(format!("cannot parse mu value '{s}'"))))
        .collect()
}

/// Loads the config (or defaults) and applies command-line overrides.
pub fn build_config(args: &CommonArgs, command: Command) -> Result<RunConfig> {
    let mut cfg = match &args.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(out) = &args.out {
        cfg.data.out = out.clone();
    }
    if let Some(seed) = args.seed {
        cfg.synth.seed = seed;
    }
    if let Some(kind) = args.criterion {
        cfg.criterion.kind = kind;
    }
    if let Some(mu) = &args.mu {
        let grid = parse_grid(mu)?;
        if command == Command::Sweep {
            cfg.design.mu_grid = grid;
        } else {
            match grid.as_slice() {
                [single] => cfg.design.mu = *single,
                _ => return Err(invalid("--mu takes a single value outside sweep")),
            }
        }
    }
    Ok(cfg)
}

pub fn execute(command: Command, cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    match command {
        Command::Synth => cmd_synth(cfg),
        Command::Moments => cmd_moments(cfg),
        Command::Design => cmd_design(cfg),
        Command::Sweep => cmd_sweep(cfg).map(|(paths, _)| paths),
        Command::Backtest => cmd_backtest(cfg).map(|(paths, _)| paths),
    }
}

/// Runs a parsed command line and returns the process exit code.
pub fn run(cli: &Cli) -> i32 {
    let result = build_config(&cli.common, cli.command).and_then(|cfg| execute(cli.command, &cfg));
    match result {
        Ok(paths) => {
            for p in paths {
                println!("{}", p.display());
            }
            EXIT_OK
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
