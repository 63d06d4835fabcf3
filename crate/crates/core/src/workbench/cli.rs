//! Command-line front end.
//!
//! Exit codes: 0 success, 1 usage error, 2 data or estimation error.

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimators::{
    fit_fixed_effects, fit_pooled, fit_random_effects, CovarianceKind, Effects, FeMethod, ModelSpec,
};
use crate::inference::hausman_test;
use crate::panel::{load_csv, PanelDataset};
use crate::selection::{stepwise_select, StepwiseOptions};
use crate::workbench::compare::{compare_periods, DEFAULT_STABLE_BAND};
use crate::workbench::montecarlo::{run_monte_carlo, MonteCarloOptions};
use crate::workbench::report::{analyze_fit, render_fit_table, FitReport, RenderOptions};
use crate::workbench::synth::{generate_panel, SyntheticPanelConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "regpanel", version, about = "Panel-data regression toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit one model and print its table.
    Fit(FitArgs),
    /// Stepwise selection over a candidate pool.
    Stepwise(StepwiseArgs),
    /// Hausman test of fixed against random effects.
    Hausman(HausmanArgs),
    /// Compare one variable between two periods.
    Compare(CompareArgs),
    /// Write a synthetic panel generated from a JSON config.
    Simulate(SimulateArgs),
    /// Monte Carlo experiment over synthetic panels.
    Montecarlo(MonteCarloArgs),
}

#[derive(Debug, Args)]
struct DataArgs {
    /// Long-format CSV with one row per entity and period.
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "district")]
    entity: String,
    #[arg(long, default_value = "year")]
    period: String,
}

#[derive(Debug, Args)]
struct ModelArgs {
    #[arg(long)]
    dep: String,
    /// Comma-separated regressors.
    #[arg(long, value_delimiter = ',')]
    regressors: Vec<String>,
    #[arg(long, default_value = "twoway", value_parser = parse_effects)]
    effects: Effects,
    #[arg(long, default_value = "cluster", value_parser = parse_cov)]
    cov: CovarianceKind,
    /// Drop the intercept.
    #[arg(long)]
    no_intercept: bool,
}

impl ModelArgs {
    fn spec(&self) -> ModelSpec {
        ModelSpec {
            dependent: self.dep.clone(),
            regressors: self.regressors.clone(),
            effects: self.effects,
            covariance: self.cov,
            intercept: !self.no_intercept,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Estimator {
    Fe,
    Re,
    Pooled,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Method {
    Lsdv,
    Within,
}

#[derive(Debug, Args)]
struct FitArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, value_enum, default_value = "fe")]
    estimator: Estimator,
    #[arg(long, value_enum, default_value = "lsdv")]
    method: Method,
    /// Omit the within R-squared line.
    #[arg(long)]
    no_within_r2: bool,
    /// Write the fit as JSON.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct StepwiseArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    dep: String,
    /// Regressors kept in every model.
    #[arg(long, value_delimiter = ',')]
    regressors: Vec<String>,
    #[arg(long, value_delimiter = ',', required = true)]
    candidates: Vec<String>,
    #[arg(long, default_value = "twoway", value_parser = parse_effects)]
    effects: Effects,
    #[arg(long, default_value = "cluster", value_parser = parse_cov)]
    cov: CovarianceKind,
    #[arg(long, default_value_t = 0.10)]
    p_enter: f64,
    #[arg(long, default_value_t = 0.15)]
    p_remove: f64,
    #[arg(long, default_value_t = 100)]
    max_steps: usize,
    /// Write the trace as JSON.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct HausmanArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    dep: String,
    #[arg(long, value_delimiter = ',', required = true)]
    regressors: Vec<String>,
    #[arg(long, default_value = "entity", value_parser = parse_effects)]
    effects: Effects,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct CompareArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    variable: String,
    #[arg(long)]
    from: String,
    #[arg(long)]
    to: String,
    #[arg(long, default_value_t = DEFAULT_STABLE_BAND)]
    stable_band: f64,
    /// Write the per-entity comparison as CSV.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    /// JSON synthetic panel config.
    #[arg(long)]
    config: PathBuf,
    /// Overrides the seed in the config.
    #[arg(long)]
    seed: Option<u64>,
    /// CSV destination; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct MonteCarloArgs {
    #[arg(long)]
    config: PathBuf,
    /// JSON model spec.
    #[arg(long)]
    spec: PathBuf,
    #[arg(long, default_value_t = 1000)]
    reps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long, default_value_t = 0.95)]
    level: f64,
    #[arg(long)]
    hausman: bool,
    /// Write the summary as JSON.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_effects(s: &str) -> std::result::Result<Effects, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_cov(s: &str) -> std::result::Result<CovarianceKind, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn load(args: &DataArgs) -> Result<PanelDataset> {
    load_csv(&args.data, &args.entity, &args.period)
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let file = File::open(path)?;
    Ok(serde_json::from_reader(std::io::BufReader::new(file))?)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn cmd_fit(args: &FitArgs, out: &mut dyn Write) -> Result<()> {
    let data = load(&args.data)?;
    let spec = args.model.spec();
    let fit = match args.estimator {
        Estimator::Pooled => fit_pooled(&data, &spec)?,
        Estimator::Re => fit_random_effects(&data, &spec)?,
        Estimator::Fe => {
            let method = match args.method {
                Method::Lsdv => FeMethod::Lsdv,
                Method::Within => FeMethod::Within,
            };
            fit_fixed_effects(&data, &spec, method)?
        }
    };
    let tests = analyze_fit(&fit)?;
    let options = RenderOptions {
        show_within_r_squared: !args.no_within_r2,
    };
    out.write_all(render_fit_table(&fit, &tests, options)?.as_bytes())?;
    for w in &fit.warnings {
        writeln!(out, "warning: {w}")?;
    }
    if let Some(path) = &args.out {
        write_json(path, &FitReport::new(&fit, Some(&tests)))?;
    }
    Ok(())
}

fn cmd_stepwise(args: &StepwiseArgs, out: &mut dyn Write) -> Result<()> {
    let data = load(&args.data)?;
    let base = ModelSpec {
        dependent: args.dep.clone(),
        regressors: args.regressors.clone(),
        effects: args.effects,
        covariance: args.cov,
        intercept: true,
    };
    let options = StepwiseOptions {
        p_enter: args.p_enter,
        p_remove: args.p_remove,
        max_steps: args.max_steps,
    };
    let trace = stepwise_select(&data, &base, &args.candidates, options)?;
    writeln!(out, "Stepwise selection (p_enter = {}, p_remove = {})", trace.p_enter, trace.p_remove)?;
    for (i, s) in trace.steps.iter().enumerate() {
        let verb = match s.action {
            crate::selection::StepAction::Add => "add",
            crate::selection::StepAction::Remove => "remove",
        };
        writeln!(out, "{:>3}. {:<7}{:<24} p = {:.4}  size {}", i + 1, verb, s.variable, s.p_value, s.model_size)?;
    }
    for s in &trace.skipped {
        writeln!(out, "skipped {} in round {}: {}", s.variable, s.round, s.reason)?;
    }
    writeln!(out, "Selected: {}", trace.selected().join(", "))?;
    for (name, p) in &trace.final_p_values {
        writeln!(out, "  {name:<24} p = {p:.4}")?;
    }
    if let Some(path) = &args.out {
        write_json(path, &trace)?;
    }
    Ok(())
}

fn cmd_hausman(args: &HausmanArgs, out: &mut dyn Write) -> Result<()> {
    let data = load(&args.data)?;
    let spec = ModelSpec {
        dependent: args.dep.clone(),
        regressors: args.regressors.clone(),
        effects: args.effects,
        covariance: CovarianceKind::Classical,
        intercept: true,
    };
    let fe = fit_fixed_effects(&data, &spec, FeMethod::Within)?;
    let re = fit_random_effects(&data, &spec)?;
    let h = hausman_test(&fe, &re)?;
    writeln!(out, "{:<24}{:>14}{:>14}", "coefficient", "FE", "RE")?;
    for r in &spec.regressors {
        writeln!(out, "{:<24}{:>14.6}{:>14.6}", r, fe.coefficient(r)?, re.coefficient(r)?)?;
    }
    if let Some(vc) = re.variance_components {
        writeln!(
            out,
            "sigma2_e = {:.6}  sigma2_a = {:.6}  theta = {:.4}",
            vc.sigma2_idiosyncratic, vc.sigma2_entity, vc.theta
        )?;
    }
    writeln!(out, "Hausman chi-square({}) = {:.3} p-value = {:.4}", h.dof1, h.statistic, h.p_value)?;
    writeln!(
        out,
        "{}",
        if h.p_value < 0.05 {
            "Random effects rejected at 5%; fixed effects preferred."
        } else {
            "Random effects not rejected at 5%."
        }
    )?;
    for w in re.warnings.iter().chain(&h.warnings) {
        writeln!(out, "warning: {w}")?;
    }
    if let Some(path) = &args.out {
        write_json(path, &h)?;
    }
    Ok(())
}

fn cmd_compare(args: &CompareArgs, out: &mut dyn Write) -> Result<()> {
    let data = load(&args.data)?;
    let c = compare_periods(&data, &args.variable, &args.from, &args.to, args.stable_band)?;
    out.write_all(c.to_text().as_bytes())?;
    if let Some(path) = &args.out {
        c.write_csv(BufWriter::new(File::create(path)?))?;
    }
    Ok(())
}

fn cmd_simulate(args: &SimulateArgs, out: &mut dyn Write) -> Result<()> {
    let mut config: SyntheticPanelConfig = read_json(&args.config)?;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    let data = generate_panel(&config)?;
    match &args.out {
        Some(path) => data.write_csv(BufWriter::new(File::create(path)?), "entity", "period")?,
        None => data.write_csv(out, "entity", "period")?,
    }
    Ok(())
}

fn cmd_montecarlo(args: &MonteCarloArgs, out: &mut dyn Write) -> Result<()> {
    let config: SyntheticPanelConfig = read_json(&args.config)?;
    let spec: ModelSpec = read_json(&args.spec)?;
    let options = MonteCarloOptions {
        level: args.level,
        hausman: args.hausman,
        workers: args.workers,
    };
    let summary = run_monte_carlo(&config, &spec, args.reps, args.seed, options)?;
    out.write_all(summary.to_text().as_bytes())?;
    if let Some(path) = &args.out {
        write_json(path, &summary)?;
    }
    Ok(())
}

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() { err.write_all(text.as_bytes()) } else { out.write_all(text.as_bytes()) };
            return code;
        }
    };
    let result = match &cli.command {
        Command::Fit(a) => cmd_fit(a, out),
        Command::Stepwise(a) => cmd_stepwise(a, out),
        Command::Hausman(a) => cmd_hausman(a, out),
        Command::Compare(a) => cmd_compare(a, out),
        Command::Simulate(a) => cmd_simulate(a, out),
        Command::Montecarlo(a) => cmd_montecarlo(a, out),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            EXIT_DATA
        }
    }
}
