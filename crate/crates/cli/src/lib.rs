//! Command-line front end: `estimate` on a dataset, `simulate` a Monte Carlo
//! experiment, or print `oracle` truths for a synthetic design.
//!
//! Exit codes: 0 on success, 2 for usage, configuration or input errors, 3
//! when estimation itself fails.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, ValueEnum};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use kmed::effects::decompose_with;
use kmed::harness::{EstimatorKind, ExperimentSpec};
use kmed::{
    io as data_io, run_experiment, CrossFit, DgpSpec, EffectDecomposition, EstimateResult, EstimatorConfig, Execution,
    Pattern, TreatmentPair,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Estimate,
    Simulate,
    Oracle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Parser)]
#[command(name = "kmed", version, about = "Kernel-smoothed triply robust mediation analysis")]
pub struct Args {
    #[arg(long, value_enum)]
    pub mode: Mode,
    /// TOML configuration file.
    #[arg(long)]
    pub config: PathBuf,
    /// Dataset CSV with header A1..Ad,M,X1..Xp,Y (estimate mode).
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Output file; standard output when omitted.
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "csv")]
    pub format: Format,
    /// Overrides the configured seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads; 1 runs sequentially.
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long, short)]
    pub verbose: bool,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Input(String),
    #[error("estimation failed: {0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Input(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }
}

/// Sorts library errors into input problems and estimation failures.
fn classify(err: kmed::Error) -> CliError {
    use kmed::Error as E;
    match err {
        E::Config(_) | E::Data { .. } | E::Io { .. } | E::Csv(_) | E::Json(_) => CliError::Input(err.to_string()),
        other => CliError::Runtime(other.to_string()),
    }
}

#[derive(Debug, Clone, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub dgp: Option<DgpSpec>,
    #[serde(default)]
    pub estimator: EstimatorConfig,
    pub experiment: Option<ExperimentSection>,
    pub estimate: Option<EstimateSection>,
    pub oracle: Option<OracleSection>,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    pub n_grid: Vec<usize>,
    pub pairs: Vec<TreatmentPair>,
    pub reps: usize,
    #[serde(default = "default_estimators")]
    pub estimators: Vec<EstimatorKind>,
    #[serde(default = "default_patterns")]
    pub patterns: Vec<Pattern>,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default)]
    pub record_timing: bool,
}

fn default_estimators() -> Vec<EstimatorKind> {
    vec![EstimatorKind::Tr]
}

fn default_patterns() -> Vec<Pattern> {
    vec![Pattern::NONE]
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct EstimateSection {
    pub pairs: Vec<TreatmentPair>,
    /// Also report natural direct, indirect and total effects.
    #[serde(default)]
    pub decompose: bool,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct OracleSection {
    pub pairs: Vec<TreatmentPair>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Config(format!("invalid config {}: {e}", path.display())))
    }

    fn dgp(&self) -> Result<&DgpSpec, CliError> {
        self.dgp
            .as_ref()
            .ok_or_else(|| CliError::Config("this mode needs a [dgp] section".into()))
    }

    pub fn experiment_spec(&self, seed: Option<u64>) -> Result<ExperimentSpec, CliError> {
        let e = self
            .experiment
            .as_ref()
            .ok_or_else(|| CliError::Config("simulate mode needs an [experiment] section".into()))?;
        let spec = ExperimentSpec {
            dgp: self.dgp()?.clone(),
            estimator: self.estimator,
            n_grid: e.n_grid.clone(),
            pairs: e.pairs.clone(),
            reps: e.reps,
            estimators: e.estimators.clone(),
            patterns: e.patterns.clone(),
            base_seed: seed.unwrap_or(e.base_seed),
            record_timing: e.record_timing,
        };
        spec.validate().map_err(|e| CliError::Config(e.to_string()))?;
        Ok(spec)
    }
}

/// Parses `argv` (including the program name), runs the requested mode and
/// returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let args = match Args::try_parse_from(argv) {
        Ok(args) => args,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let level = if args.verbose {
        log::LevelFilter::Debug
    } else {
        log::LevelFilter::Warn
    };
    let _ = env_logger::Builder::new().filter_level(level).try_init();
    match execute(&args) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("kmed: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(args: &Args) -> Result<(), CliError> {
    let config = RunConfig::load(&args.config)?;
    if let Some(out) = &args.output {
        let parent = out.parent().filter(|p| !p.as_os_str().is_empty());
        if let Some(dir) = parent.filter(|d| !d.is_dir()) {
            return Err(CliError::Config(format!("output directory {} does not exist", dir.display())));
        }
    }
    let exec = args.workers.map_or(Execution::Parallel, Execution::with_workers);
    let text = match args.mode {
        Mode::Oracle => oracle(&config, args.format)?,
        Mode::Simulate => simulate(&config, args, exec)?,
        Mode::Estimate => estimate(&config, args, exec)?,
    };
    write_output(args.output.as_deref(), &text)
}

fn write_output(path: Option<&Path>, text: &str) -> Result<(), CliError> {
    match path {
        Some(p) => fs::write(p, text).map_err(|e| CliError::Config(format!("cannot write {}: {e}", p.display()))),
        None => io::stdout()
            .lock()
            .write_all(text.as_bytes())
            .map_err(|e| CliError::Config(format!("cannot write to standard output: {e}"))),
    }
}

#[derive(Debug, Serialize)]
struct OracleRow {
    a: f64,
    a_prime: f64,
    psi0: f64,
    nde: f64,
    nie: f64,
    ace: f64,
}

fn oracle(config: &RunConfig, format: Format) -> Result<String, CliError> {
    let dgp = config.dgp()?;
    dgp.validate().map_err(|e| CliError::Config(e.to_string()))?;
    let pairs = &config
        .oracle
        .as_ref()
        .ok_or_else(|| CliError::Config("oracle mode needs an [oracle] section".into()))?
        .pairs;
    let mut rows = Vec::with_capacity(pairs.len());
    for p in pairs {
        if p.dim() != 1 {
            return Err(CliError::Config("oracle pairs must be scalar".into()));
        }
        let (a, ap) = (p.a[0], p.a_prime[0]);
        let e = dgp.oracle_effects(a, ap);
        rows.push(OracleRow {
            a,
            a_prime: ap,
            psi0: dgp.oracle_psi(a, ap),
            nde: e.nde,
            nie: e.nie,
            ace: e.ace,
        });
    }
    match format {
        Format::Json => json(&rows),
        Format::Csv => {
            let mut out = String::from("a,a_prime,psi0,nde,nie,ace\n");
            for r in &rows {
                out.push_str(&format!("{},{},{},{},{},{}\n", r.a, r.a_prime, r.psi0, r.nde, r.nie, r.ace));
            }
            Ok(out)
        }
    }
}

fn simulate(config: &RunConfig, args: &Args, exec: Execution) -> Result<String, CliError> {
    let spec = config.experiment_spec(args.seed)?;
    let report = run_experiment(&spec, exec).map_err(classify)?;
    match args.format {
        Format::Csv => report.to_csv_string(),
        Format::Json => report.to_json_pretty().map(|mut s| {
            s.push('\n');
            s
        }),
    }
    .map_err(classify)
}

#[derive(Debug, Serialize)]
struct EstimateOutput {
    estimates: Vec<EstimateResult>,
    decompositions: Vec<EffectDecomposition>,
}

fn estimate(config: &RunConfig, args: &Args, exec: Execution) -> Result<String, CliError> {
    let section = config
        .estimate
        .as_ref()
        .ok_or_else(|| CliError::Config("estimate mode needs an [estimate] section".into()))?;
    if section.pairs.is_empty() {
        return Err(CliError::Config("[estimate] pairs must be non-empty".into()));
    }
    let input = args
        .input
        .as_ref()
        .ok_or_else(|| CliError::Config("estimate mode needs --input".into()))?;
    let mut est = config.estimator;
    if let Some(seed) = args.seed {
        est.seed = seed;
    }
    est.validate().map_err(|e| CliError::Config(e.to_string()))?;
    let data = data_io::load_dataset(input).map_err(|e| CliError::Input(e.to_string()))?;
    for p in &section.pairs {
        TreatmentPair::new(p.a.clone(), p.a_prime.clone()).map_err(|e| CliError::Config(e.to_string()))?;
        if p.dim() != data.treatment_dim() {
            return Err(CliError::Config(format!(
                "pair dimension {} does not match the {} treatment columns of {}",
                p.dim(),
                data.treatment_dim(),
                input.display()
            )));
        }
    }
    if est.kernel.treatment_dim != data.treatment_dim() {
        log::info!("using treatment_dim = {} from the input header", data.treatment_dim());
        est.kernel.treatment_dim = data.treatment_dim();
    }
    let cross = CrossFit::fit_with(&data, &est, exec).map_err(classify)?;
    let mut out = EstimateOutput {
        estimates: Vec::new(),
        decompositions: Vec::new(),
    };
    for p in &section.pairs {
        out.estimates.push(cross.estimate(&data, p).map_err(classify)?);
        if section.decompose {
            out.decompositions.push(decompose_with(&cross, &data, p).map_err(classify)?);
        }
    }
    match args.format {
        Format::Json => json(&out),
        Format::Csv => {
            let mut s = String::from("kind,a,a_prime,estimate,se,ci_lower,ci_upper\n");
            for r in &out.estimates {
                s.push_str(&row("psi", &r.pair, r.psi_hat, r.se, r.ci_lower, r.ci_upper));
            }
            for d in &out.decompositions {
                for (kind, e) in [("nde", &d.nde), ("nie", &d.nie), ("ace", &d.ace)] {
                    s.push_str(&row(kind, &d.pair, e.estimate, e.se, e.ci_lower, e.ci_upper));
                }
            }
            Ok(s)
        }
    }
}

/// Multivariate treatments are written as `;`-separated components.
fn row(kind: &str, pair: &TreatmentPair, estimate: f64, se: f64, lo: f64, hi: f64) -> String {
    let join = |v: &[f64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(";");
    format!("{kind},{},{},{estimate},{se},{lo},{hi}\n", join(&pair.a), join(&pair.a_prime))
}

fn json<T: Serialize>(value: &T) -> Result<String, CliError> {
    serde_json::to_string_pretty(value)
        .map(|mut s| {
            s.push('\n');
            s
        })
        .map_err(|e| CliError::Runtime(e.to_string()))
}
