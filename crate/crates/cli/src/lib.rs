//! Command-line front end: `gsar fit`, `gsar simulate` and `gsar effects`.

pub mod data;
pub mod error;
pub mod report;

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use gsar::effects::{summarize_effects, Effect};
use gsar::simkit::{run_replicates_with, ParamSummary, RunOptions, SimReport, SimScenario, DEFAULT_REPLICATES};
use gsar::weights::{load_weights, WeightsFormat};
use gsar::{fit, FamilyId, FamilySpec, FitConfig, LinkId, SpatialWeights};
use serde::Serialize;

pub use data::{DataTable, ModelColumns};
pub use error::{CliError, CliResult};
pub use report::FitReport;

#[derive(Debug, Parser)]
#[command(name = "gsar", version, about = "Generalized spatial autoregressive models")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a model to a CSV file and a weights file.
    Fit(FitArgs),
    /// Run a seeded Monte Carlo study on a rook grid.
    Simulate(SimulateArgs),
    /// Recompute direct, indirect and total effects from a saved fit report.
    Effects(EffectsArgs),
}

#[derive(Debug, Args)]
pub struct WeightsArgs {
    /// Weights file (1-based indices).
    #[arg(long)]
    pub weights: PathBuf,
    #[arg(long, default_value = "edge-list", value_parser = parse_weights_format)]
    pub weights_format: WeightsFormat,
    /// Use the weights as given instead of row-standardizing them.
    #[arg(long)]
    pub no_standardize: bool,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[command(flatten)]
    pub weights: WeightsArgs,
    #[arg(long)]
    pub family: String,
    /// Must be the family's link if given.
    #[arg(long)]
    pub link: Option<String>,
    #[arg(long)]
    pub response: String,
    /// Comma-separated covariate columns.
    #[arg(long, value_delimiter = ',')]
    pub covariates: Vec<String>,
    /// Trials column (binomial only).
    #[arg(long)]
    pub trials: Option<String>,
    #[arg(long)]
    pub no_intercept: bool,
    /// Negative-binomial shape.
    #[arg(long)]
    pub nb_shape: Option<f64>,
    /// Hold rho at this value.
    #[arg(long, allow_hyphen_values = true)]
    pub rho_fixed: Option<f64>,
    #[arg(long)]
    pub eps_rho: Option<f64>,
    #[arg(long)]
    pub eps_beta: Option<f64>,
    #[arg(long)]
    pub max_outer: Option<usize>,
    /// Write the JSON report here instead of standard output.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Print a coefficient table.
    #[arg(long)]
    pub table: bool,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub family: String,
    #[arg(long)]
    pub nb_shape: Option<f64>,
    /// Grid size as ROWSxCOLS.
    #[arg(long, value_parser = parse_grid)]
    pub grid: (usize, usize),
    #[arg(long, allow_hyphen_values = true)]
    pub rho: f64,
    #[arg(long, default_value_t = DEFAULT_REPLICATES)]
    pub replicates: usize,
    /// Random seed; a fresh one is drawn and printed when absent.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Add the GLM-with-lag baseline columns.
    #[arg(long)]
    pub compare_glm: bool,
    /// Record per-replicate runtimes (output is then not reproducible).
    #[arg(long)]
    pub timings: bool,
    #[arg(long)]
    pub eps_rho: Option<f64>,
    #[arg(long)]
    pub eps_beta: Option<f64>,
    #[arg(long)]
    pub max_outer: Option<usize>,
    /// Summary JSON path; replicate rows go next to it with a `.csv`
    /// extension. Without it the summary goes to standard output.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EffectsArgs {
    /// JSON report written by `gsar fit`.
    #[arg(long)]
    pub report: PathBuf,
    #[command(flatten)]
    pub weights: WeightsArgs,
    /// Write the effects as JSON here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn parse_weights_format(s: &str) -> Result<WeightsFormat, String> {
    s.parse().map_err(|e: gsar::GsarError| e.to_string())
}

fn parse_grid(s: &str) -> Result<(usize, usize), String> {
    let (r, c) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("grid '{s}' is not of the form ROWSxCOLS"))?;
    let dim = |t: &str| t.trim().parse::<usize>().map_err(|_| format!("bad grid dimension '{t}'"));
    Ok((dim(r)?, dim(c)?))
}

/// Messages for the diagnostic stream plus what goes to standard output.
#[derive(Debug, Default, Clone, PartialEq)]
pub struct Outcome {
    pub stdout: String,
    pub warnings: Vec<String>,
}

pub fn run(cli: Cli) -> CliResult<Outcome> {
    match cli.command {
        Command::Fit(a) => cmd_fit(&a),
        Command::Simulate(a) => cmd_simulate(&a),
        Command::Effects(a) => cmd_effects(&a),
    }
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let text = e.render().to_string();
            let _ = if code == 0 { stdout.write_all(text.as_bytes()) } else { stderr.write_all(text.as_bytes()) };
            return code;
        }
    };
    match run(cli) {
        Ok(out) => {
            for w in &out.warnings {
                let _ = writeln!(stderr, "warning: {w}");
            }
            let _ = stdout.write_all(out.stdout.as_bytes());
            0
        }
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            e.exit_code()
        }
    }
}

fn family_spec(family: &str, link: Option<&str>, nb_shape: Option<f64>) -> CliResult<FamilySpec> {
    let id: FamilyId = family.parse()?;
    let link = match link {
        Some(l) => l.parse()?,
        None => id.default_link(),
    };
    if nb_shape.is_some() && id != FamilyId::NegativeBinomial {
        return Err(CliError::Usage("--nb-shape applies to negative_binomial only".into()));
    }
    if id == FamilyId::NegativeBinomial && nb_shape.is_none() {
        return Err(CliError::Usage("negative_binomial needs --nb-shape".into()));
    }
    Ok(FamilySpec::new(id, link, nb_shape)?)
}

fn fit_config(eps_rho: Option<f64>, eps_beta: Option<f64>, max_outer: Option<usize>) -> FitConfig {
    let mut cfg = FitConfig::default();
    if let Some(e) = eps_rho {
        cfg.eps_rho = e;
    }
    if let Some(e) = eps_beta {
        cfg.eps_beta = e;
    }
    if let Some(m) = max_outer {
        cfg.max_outer = m;
    }
    cfg
}

fn read_weights(args: &WeightsArgs) -> CliResult<SpatialWeights> {
    let w = load_weights(&args.weights, args.weights_format).map_err(|e| match e {
        gsar::GsarError::Io(io) => CliError::Io(format!("{}: {io}", args.weights.display())),
        other => CliError::Model(other),
    })?;
    Ok(if args.no_standardize { w } else { w.row_standardize() })
}

fn write_file(path: &Path, contents: &str) -> CliResult<()> {
    std::fs::write(path, contents).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report types serialize");
    s.push('\n');
    s
}

pub fn cmd_fit(a: &FitArgs) -> CliResult<Outcome> {
    let spec = family_spec(&a.family, a.link.as_deref(), a.nb_shape)?;
    let table = DataTable::read(&a.data)?;
    let cols = ModelColumns {
        response: a.response.clone(),
        covariates: a.covariates.clone(),
        trials: a.trials.clone(),
        intercept: !a.no_intercept,
    };
    let (data, names) = table.to_fit_data(&cols, spec)?;
    let w = read_weights(&a.weights)?;
    if w.n() != data.n() {
        return Err(CliError::Input(format!("weights describe {} units but the data has {} rows", w.n(), data.n())));
    }
    let mut cfg = fit_config(a.eps_rho, a.eps_beta, a.max_outer);
    cfg.rho_fixed = a.rho_fixed;

    let fitted = fit(&data, &w, spec, &cfg)?;
    let intercept = (!a.no_intercept).then_some(0);
    let effects = summarize_effects(&fitted.beta_hat, fitted.rho_hat, &w, &names, intercept)?;
    let report = FitReport::new(&fitted, &names, effects);

    let mut out = Outcome {
        warnings: fitted.warnings.clone(),
        ..Default::default()
    };
    let json = to_json(&report);
    match &a.out {
        Some(path) => write_file(path, &json)?,
        None => out.stdout.push_str(&json),
    }
    if a.table {
        out.stdout.push_str(&report.table());
    }
    Ok(out)
}

/// Aggregate block written next to the replicate CSV.
#[derive(Debug, Serialize)]
pub struct SimSummary<'a> {
    pub family: FamilyId,
    pub link: LinkId,
    pub grid: (usize, usize),
    pub n: usize,
    pub rho_true: f64,
    pub beta_true: &'a [f64],
    pub replicates: usize,
    pub seed: u64,
    pub n_usable: usize,
    pub failures: usize,
    pub all_failed: bool,
    pub mean_rho_hat: Option<f64>,
    pub parameters: &'a [ParamSummary],
}

impl<'a> SimSummary<'a> {
    pub fn new(report: &'a SimReport) -> Self {
        let scn = &report.scenario;
        Self {
            family: scn.family.family(),
            link: scn.family.link(),
            grid: (scn.rows, scn.cols),
            n: scn.n(),
            rho_true: scn.rho_true,
            beta_true: &scn.beta_true,
            replicates: scn.replicates,
            seed: scn.seed,
            n_usable: report.n_usable,
            failures: report.failures,
            all_failed: report.all_failed,
            mean_rho_hat: report.summary("rho").map(|s| s.mean),
            parameters: &report.aggregates,
        }
    }
}

pub fn cmd_simulate(a: &SimulateArgs) -> CliResult<Outcome> {
    let spec = family_spec(&a.family, None, a.nb_shape)?;
    let mut out = Outcome::default();
    let seed = match a.seed {
        Some(s) => s,
        None => {
            let s: u64 = rand::random();
            out.warnings.push(format!("no --seed given; using --seed {s}"));
            s
        }
    };
    let mut scn = SimScenario::new(spec, a.grid.0, a.grid.1, a.rho, seed);
    scn.replicates = a.replicates;
    scn.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let cfg = fit_config(a.eps_rho, a.eps_beta, a.max_outer);
    let opts = RunOptions {
        compare_glm: a.compare_glm,
        timings: a.timings,
        threads: None,
    };
    let report = run_replicates_with(&scn, &cfg, &opts)?;
    if report.all_failed {
        out.warnings.push("every replicate failed or did not converge".into());
    } else if report.failures > 0 {
        out.warnings.push(format!("{} of {} replicates failed or did not converge", report.failures, scn.replicates));
    }
    let json = to_json(&SimSummary::new(&report));
    match &a.out {
        Some(path) => {
            write_file(path, &json)?;
            write_file(&path.with_extension("csv"), &report.to_csv())?;
        }
        None => out.stdout.push_str(&json),
    }
    Ok(out)
}

pub fn cmd_effects(a: &EffectsArgs) -> CliResult<Outcome> {
    let text = std::fs::read_to_string(&a.report).map_err(|e| CliError::Io(format!("{}: {e}", a.report.display())))?;
    let report: FitReport =
        serde_json::from_str(&text).map_err(|e| CliError::Input(format!("{}: {e}", a.report.display())))?;
    let w = read_weights(&a.weights)?;
    if w.n() != report.n {
        return Err(CliError::Input(format!("weights describe {} units but the report was fitted on {}", w.n(), report.n)));
    }
    let names: Vec<String> = report.coefficients.iter().map(|c| c.name.clone()).collect();
    let beta = nalgebra::DVector::from_iterator(names.len(), report.coefficients.iter().map(|c| c.estimate));
    let effects: Vec<Effect> = summarize_effects(&beta, report.rho_hat, &w, &names, report.intercept())?;
    if let Some(path) = &a.out {
        write_file(path, &to_json(&effects))?;
    }
    Ok(Outcome {
        stdout: report::effects_table(&effects),
        ..Default::default()
    })
}
