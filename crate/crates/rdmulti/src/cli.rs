//! Command-line front end.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rdmulti_core::estimator::estimate_design;
use rdmulti_core::{build_design, cell_table, relevance, DgpSpec, Error as CoreError, EstimationConfig, KernelKind};
use serde::{Deserialize, Serialize};

use crate::io::{load_table, InputError, Loaded, ModelKind, Schema, TreatmentColumns};
use crate::montecarlo::{run_study, StudyConfig, StudyError};
use crate::report::{DiagnoseReport, FitReport};

const EXIT_OK: i32 = 0;
const EXIT_INPUT: i32 = 1;
const EXIT_IDENTIFICATION: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "rdmulti",
    version,
    about = "Regression discontinuity estimation for ordered, many-level treatments",
    after_help = "Exit codes: 0 success, 1 input or configuration error, 2 identification failure (diagnostics are still written)."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Kernel-weighted 2SLS with cluster-robust errors and the J test.
    Estimate(Settings),
    /// Cell-wise jumps, relevance check, weights and ratio screens.
    Diagnose(Settings),
    /// Monte Carlo study of a synthetic design.
    Simulate(Settings),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Json,
    Text,
}

fn parse_kernel(s: &str) -> Result<KernelKind, String> {
    s.parse()
        .map_err(|_| format!("unknown kernel '{s}' (expected uniform, triangular or epanechnikov)"))
}

/// Every option, from flags or from a JSON file given with `--config`.
/// Flags take precedence.
#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct Settings {
    /// CSV input (estimate, diagnose) or design JSON (simulate).
    #[arg(long)]
    data: Option<PathBuf>,
    /// Outcome column.
    #[arg(long)]
    outcome: Option<String>,
    /// Running-variable column.
    #[arg(long)]
    running: Option<String>,
    /// Cutoff on the running variable's original scale [default: 0].
    #[arg(long, allow_hyphen_values = true)]
    cutoff: Option<f64>,
    /// One integer treatment column, or several comma-separated cumulative 0/1 indicator columns.
    #[arg(long, value_delimiter = ',')]
    treatment: Vec<String>,
    /// Ordered treatment levels for an integer column [default: observed values].
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    treatment_levels: Vec<i64>,
    /// Discrete covariates defining the cells.
    #[arg(long, value_delimiter = ',')]
    w: Vec<String>,
    /// Stratifier for the conditional model.
    #[arg(long)]
    r: Option<String>,
    /// Effect modifiers for the parametric model.
    #[arg(long, value_delimiter = ',')]
    wtilde: Vec<String>,
    /// Extra exogenous controls; non-numeric columns become dummies with the smallest level dropped.
    #[arg(long, value_delimiter = ',')]
    controls: Vec<String>,
    /// Cluster column, or "running" to cluster on running-variable values [default: each observation].
    #[arg(long)]
    cluster: Option<String>,
    /// Kernel: uniform, triangular or epanechnikov [default: uniform].
    #[arg(long, value_parser = parse_kernel)]
    #[serde(default, deserialize_with = "de_kernel")]
    kernel: Option<KernelKind>,
    /// Bandwidth in running-variable units.
    #[arg(long)]
    bandwidth: Option<f64>,
    /// Identification model [default: homogeneous].
    #[arg(long, value_enum)]
    model: Option<ModelKind>,
    /// Field delimiter of the CSV input [default: ,].
    #[arg(long)]
    delimiter: Option<char>,
    /// Reciprocal condition number floor [default: 1e-10].
    #[arg(long)]
    rcond_threshold: Option<f64>,
    /// Jump size below which a first stage counts as zero [default: 1e-6].
    #[arg(long)]
    jump_tol: Option<f64>,
    /// Output file [default: standard output].
    #[arg(long)]
    out: Option<PathBuf>,
    /// Output format [default: json].
    #[arg(long, value_enum)]
    format: Option<Format>,
    /// Simulation seed [default: the design's seed].
    #[arg(long)]
    seed: Option<u64>,
    /// Simulation replications [default: 100].
    #[arg(long)]
    reps: Option<usize>,
    /// Simulation sample size [default: 2000].
    #[arg(long)]
    n: Option<usize>,
    /// Worker threads for simulate [default: available cores].
    #[arg(long)]
    workers: Option<usize>,
    /// JSON file with any of the options above (snake_case keys).
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
}

fn de_kernel<'de, D: serde::Deserializer<'de>>(d: D) -> Result<Option<KernelKind>, D::Error> {
    let s: Option<String> = Option::deserialize(d)?;
    s.map(|s| parse_kernel(&s).map_err(serde::de::Error::custom))
        .transpose()
}

macro_rules! prefer {
    ($a:ident, $b:ident; $($f:ident),*) => {
        $( if $a.$f.is_none() { $a.$f = $b.$f.take(); } )*
    };
}

macro_rules! prefer_vec {
    ($a:ident, $b:ident; $($f:ident),*) => {
        $( if $a.$f.is_empty() { $a.$f = std::mem::take(&mut $b.$f); } )*
    };
}

impl Settings {
    fn merged(mut self) -> Result<Self, Failure> {
        let Some(path) = self.config.clone() else {
            return Ok(self);
        };
        let text = fs::read_to_string(&path)
            .map_err(|e| Failure::input(format!("cannot read config {}: {e}", path.display())))?;
        let mut file: Settings = serde_json::from_str(&text)
            .map_err(|e| Failure::input(format!("invalid config {}: {e}", path.display())))?;
        prefer!(self, file; data, outcome, running, cutoff, r, cluster, kernel, bandwidth, model,
            delimiter, rcond_threshold, jump_tol, out, format, seed, reps, n, workers);
        prefer_vec!(self, file; treatment, treatment_levels, w, wtilde, controls);
        Ok(self)
    }

    fn estimation(&self, loaded: Option<&Loaded>) -> Result<EstimationConfig, Failure> {
        let h = self
            .bandwidth
            .ok_or_else(|| Failure::input("--bandwidth is required".to_string()))?;
        let mut cfg = EstimationConfig::new(self.kernel.unwrap_or_default(), h);
        if let Some(l) = loaded {
            cfg.cluster_by = l.cluster_by;
        }
        if let Some(r) = self.rcond_threshold {
            cfg.rcond_threshold = r;
        }
        if let Some(t) = self.jump_tol {
            cfg.jump_tol = t;
        }
        cfg.validate().map_err(Failure::from)?;
        Ok(cfg)
    }

    fn schema(&self) -> Result<Schema, Failure> {
        let need =
            |v: &Option<String>, flag: &str| v.clone().ok_or_else(|| Failure::input(format!("--{flag} is required")));
        let treatment = match self.treatment.as_slice() {
            [] => return Err(Failure::input("--treatment is required".to_string())),
            [one] => TreatmentColumns::Levels {
                column: one.clone(),
                levels: (!self.treatment_levels.is_empty()).then(|| self.treatment_levels.clone()),
            },
            many => {
                if !self.treatment_levels.is_empty() {
                    return Err(Failure::input(
                        "--treatment-levels applies to a single integer treatment column".to_string(),
                    ));
                }
                TreatmentColumns::Indicators(many.to_vec())
            }
        };
        let mut s = Schema::new(
            &need(&self.outcome, "outcome")?,
            &need(&self.running, "running")?,
            treatment,
        );
        s.cutoff = self.cutoff.unwrap_or(0.0);
        s.w = self.w.clone();
        s.r = self.r.clone();
        s.wtilde = self.wtilde.clone();
        s.controls = self.controls.clone();
        s.cluster = self.cluster.clone();
        if let Some(c) = self.delimiter {
            s.delimiter = u8::try_from(c)
                .map_err(|_| Failure::input(format!("delimiter '{c}' is not a single-byte character")))?;
        }
        Ok(s)
    }

    fn load(&self) -> Result<Loaded, Failure> {
        let path = self
            .data
            .as_ref()
            .ok_or_else(|| Failure::input("--data is required".to_string()))?;
        load_table(path, &self.schema()?).map_err(Failure::from)
    }
}

/// Why a command stopped.
#[derive(Debug)]
struct Failure {
    code: i32,
    message: String,
    hint: Option<&'static str>,
}

impl Failure {
    fn input(message: String) -> Self {
        Failure {
            code: EXIT_INPUT,
            message,
            hint: None,
        }
    }
}

fn hint(e: &CoreError) -> Option<&'static str> {
    Some(match e {
        CoreError::UnderIdentified { .. } => "add covariates to --w, or use fewer treatment levels or --wtilde columns",
        CoreError::RelevanceFailed { .. } => {
            "the first-stage jumps are collinear across cells; use covariates whose cells differ in compliance"
        }
        CoreError::Singular { .. } => "look for constant or collinear columns, or widen --bandwidth",
        CoreError::NoUsableCells | CoreError::CellUnusable { .. } => {
            "widen --bandwidth or coarsen the --w covariates so every cell has observations on both sides"
        }
        CoreError::TooManyLevels { .. } => "coarsen the covariate into fewer categories",
        CoreError::InvalidBandwidth(_) => "--bandwidth must be a positive number",
        CoreError::TooFewClusters(_) => "cluster-robust inference needs at least two clusters",
        CoreError::NoPositiveWeights => "no observation lies within the bandwidth; widen --bandwidth",
        _ => return None,
    })
}

impl From<CoreError> for Failure {
    fn from(e: CoreError) -> Self {
        Failure {
            code: if e.is_identification_failure() {
                EXIT_IDENTIFICATION
            } else {
                EXIT_INPUT
            },
            hint: hint(&e),
            message: e.to_string(),
        }
    }
}

impl From<InputError> for Failure {
    fn from(e: InputError) -> Self {
        match e {
            InputError::Core(c) => c.into(),
            other => Failure::input(other.to_string()),
        }
    }
}

impl From<StudyError> for Failure {
    fn from(e: StudyError) -> Self {
        let code = match &e {
            StudyError::NotIdentified => EXIT_IDENTIFICATION,
            StudyError::AllFailed { first, .. } if first.is_identification_failure() => EXIT_IDENTIFICATION,
            _ => EXIT_INPUT,
        };
        Failure {
            code,
            message: e.to_string(),
            hint: None,
        }
    }
}

#[derive(Serialize)]
struct FailureReport<'a> {
    status: &'static str,
    error: &'a str,
    hint: Option<&'a str>,
    diagnostics: Option<&'a DiagnoseReport>,
}

fn emit(settings: &Settings, json: String, text: impl FnOnce() -> String) -> Result<(), Failure> {
    let body = match settings.format.unwrap_or_default() {
        Format::Json => json + "\n",
        Format::Text => text(),
    };
    write_output(settings.out.as_deref(), &body)
}

fn write_output(path: Option<&Path>, body: &str) -> Result<(), Failure> {
    match path {
        Some(p) => fs::write(p, body).map_err(|e| Failure::input(format!("cannot write {}: {e}", p.display()))),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(body.as_bytes())
                .and_then(|_| out.flush())
                .map_err(|e| Failure::input(format!("cannot write output: {e}")))
        }
    }
}

fn to_json<T: Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("reports serialize")
}

/// Writes the failure with whatever diagnostics could be computed.
fn identification_failure(settings: &Settings, f: Failure, diagnostics: Option<&DiagnoseReport>) -> Failure {
    let report = FailureReport {
        status: "identification_failure",
        error: &f.message,
        hint: f.hint,
        diagnostics,
    };
    let json = to_json(&report);
    let text = || {
        let mut s = format!("identification failure: {}\n", f.message);
        if let Some(d) = diagnostics {
            s.push_str(&d.render_text());
        }
        s
    };
    match emit(settings, json, text) {
        Ok(()) => f,
        Err(w) => w,
    }
}

fn estimate_cmd(settings: &Settings) -> Result<(), Failure> {
    let loaded = settings.load()?;
    let ds = &loaded.dataset;
    let cfg = settings.estimation(Some(&loaded))?;
    let kind = settings.model.unwrap_or_default();
    let spec = loaded.model(kind)?;

    let result = (|| {
        let dm = build_design(ds, &spec, &cfg)?;
        if kind == ModelKind::Homogeneous {
            let tw = relevance(&cell_table(ds, &cfg)?, cfg.rcond_threshold);
            if !tw.passed {
                return Err(CoreError::RelevanceFailed {
                    rcond: tw.rcond,
                    min_eigenvalue: tw.min_eigenvalue,
                });
            }
        }
        estimate_design(&dm, cfg.rcond_threshold)
    })();

    match result {
        Ok(fit) => {
            let report = FitReport::new(&fit, ds, spec.name(), &cfg);
            emit(settings, to_json(&report), || report.render_text())
        }
        Err(e) if e.is_identification_failure() => {
            let diag = DiagnoseReport::build(ds, &cfg).ok();
            Err(identification_failure(settings, e.into(), diag.as_ref()))
        }
        Err(e) => Err(e.into()),
    }
}

fn diagnose_cmd(settings: &Settings) -> Result<(), Failure> {
    let loaded = settings.load()?;
    let cfg = settings.estimation(Some(&loaded))?;
    let report = match DiagnoseReport::build(&loaded.dataset, &cfg) {
        Ok(r) => r,
        Err(e) if e.is_identification_failure() => {
            return Err(identification_failure(settings, e.into(), None));
        }
        Err(e) => return Err(e.into()),
    };
    emit(settings, to_json(&report), || report.render_text())?;
    if report.relevance.passed {
        Ok(())
    } else {
        Err(Failure {
            code: EXIT_IDENTIFICATION,
            message: format!(
                "relevance fails: rank {} of {}, rcond {:.3e}",
                report.relevance.rank, report.d, report.relevance.rcond
            ),
            hint: hint(&CoreError::RelevanceFailed {
                rcond: 0.0,
                min_eigenvalue: 0.0,
            }),
        })
    }
}

fn simulate_cmd(settings: &Settings) -> Result<(), Failure> {
    let path = settings
        .data
        .as_ref()
        .ok_or_else(|| Failure::input("--data (the design JSON) is required".to_string()))?;
    let text = fs::read_to_string(path).map_err(|e| Failure::input(format!("cannot read {}: {e}", path.display())))?;
    let dgp: DgpSpec =
        serde_json::from_str(&text).map_err(|e| Failure::input(format!("invalid design {}: {e}", path.display())))?;
    let mut cfg = StudyConfig::for_dgp(&dgp, settings.n.unwrap_or(2000), settings.reps.unwrap_or(100));
    if let Some(s) = settings.seed {
        cfg.seed = s;
    }
    if settings.bandwidth.is_some() || settings.kernel.is_some() {
        let h = settings.bandwidth.unwrap_or(cfg.estimation.bandwidth);
        cfg.estimation.bandwidth = h;
        cfg.estimation.kernel = settings.kernel.unwrap_or(cfg.estimation.kernel);
    }
    if let Some(r) = settings.rcond_threshold {
        cfg.estimation.rcond_threshold = r;
    }
    cfg.workers = settings
        .workers
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let result = run_study(&dgp, &cfg)?;
    emit(settings, to_json(&result), || result.render_text())
}

/// Runs the command line `args` (program name first) and returns the exit
/// code.
type CommandFn = fn(&Settings) -> Result<(), Failure>;

pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
        }
    };
    let (settings, cmd): (Settings, CommandFn) = match cli.command {
        Command::Estimate(s) => (s, estimate_cmd),
        Command::Diagnose(s) => (s, diagnose_cmd),
        Command::Simulate(s) => (s, simulate_cmd),
    };
    let outcome = settings.merged().and_then(|s| cmd(&s));
    match outcome {
        Ok(()) => EXIT_OK,
        Err(f) => {
            eprintln!("error: {}", f.message);
            if let Some(h) = f.hint {
                eprintln!("hint: {h}");
            }
            f.code
        }
    }
}
