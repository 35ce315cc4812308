//! Replication harness for synthetic designs.

use std::fmt::Write as _;

use rayon::prelude::*;
use rdmulti_core::{estimate, generate_stream, population_targets, DgpSpec, EstimationConfig, KernelKind, ModelSpec};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::inference::{chi2_p, Z_95};

#[derive(Debug, Error)]
pub enum StudyError {
    #[error("invalid design: {0}")]
    Dgp(rdmulti_core::Error),
    #[error("the design is not identified: the first-stage jumps do not span every treatment margin")]
    NotIdentified,
    #[error("reps must be at least 1")]
    NoReplications,
    #[error("sample size must be at least 1")]
    NoObservations,
    #[error("worker pool: {0}")]
    Pool(String),
    #[error("invalid estimation settings: {0}")]
    Config(rdmulti_core::Error),
    #[error("all {reps} replications failed; first failure (replication 0): {first}")]
    AllFailed { reps: usize, first: rdmulti_core::Error },
}

/// Study settings. `workers` only controls parallelism and is not part of
/// the result.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    pub n: usize,
    pub reps: usize,
    pub seed: u64,
    pub estimation: EstimationConfig,
    #[serde(skip)]
    pub workers: usize,
}

impl StudyConfig {
    /// Uniform kernel with a bandwidth covering a quarter of the running
    /// variable's support.
    pub fn for_dgp(dgp: &DgpSpec, n: usize, reps: usize) -> Self {
        let rdmulti_core::dgp::ZDist::Uniform { lo, hi } = dgp.z_dist;
        StudyConfig {
            n,
            reps,
            seed: dgp.seed,
            estimation: EstimationConfig::new(KernelKind::Uniform, 0.25 * (hi - lo)),
            workers: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSummary {
    pub name: String,
    pub target: f64,
    pub mean: f64,
    pub bias: f64,
    /// `None` with a single successful replication.
    pub sd: Option<f64>,
    pub mean_se: f64,
    pub coverage: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    pub config: StudyConfig,
    pub parameters: Vec<ParamSummary>,
    pub j_dof: usize,
    /// Share of replications with a J statistic whose p-value is below
    /// 0.05; `None` for just-identified designs.
    pub j_rejection_rate: Option<f64>,
    pub reps: usize,
    pub successes: usize,
    pub failures: usize,
    pub relevance_failures: usize,
    pub first_failure: Option<String>,
}

struct Draw {
    beta: Vec<f64>,
    se: Vec<f64>,
    j_stat: f64,
    j_dof: usize,
}

fn replicate(dgp: &DgpSpec, cfg: &StudyConfig, r: usize) -> Result<Draw, rdmulti_core::Error> {
    let ds = generate_stream(dgp, cfg.n, cfg.seed, r as u64)?;
    let fit = estimate(&ds, &ModelSpec::Homogeneous, &cfg.estimation)?;
    Ok(Draw {
        se: fit.se(),
        beta: fit.beta,
        j_stat: fit.j.stat,
        j_dof: fit.j.dof,
    })
}

/// Runs `cfg.reps` replications of generate-then-estimate under the
/// homogeneous-effects model. Replication `r` draws from substream `r` of
/// the generator seeded with `cfg.seed`, so the result does not depend on
/// the number of workers.
pub fn run_study(dgp: &DgpSpec, cfg: &StudyConfig) -> Result<SimResult, StudyError> {
    if cfg.reps == 0 {
        return Err(StudyError::NoReplications);
    }
    if cfg.n == 0 {
        return Err(StudyError::NoObservations);
    }
    cfg.estimation.validate().map_err(StudyError::Config)?;
    let targets = population_targets(dgp).map_err(StudyError::Dgp)?;
    let target = targets.beta_bar.ok_or(StudyError::NotIdentified)?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers.max(1))
        .build()
        .map_err(|e| StudyError::Pool(e.to_string()))?;
    let draws: Vec<Result<Draw, rdmulti_core::Error>> =
        pool.install(|| (0..cfg.reps).into_par_iter().map(|r| replicate(dgp, cfg, r)).collect());

    let d = target.len();
    let mut ok = Vec::new();
    let mut first = None;
    let mut relevance_failures = 0;
    for r in draws {
        match r {
            Ok(draw) => ok.push(draw),
            Err(e) => {
                if e.is_identification_failure() {
                    relevance_failures += 1;
                }
                first.get_or_insert(e);
            }
        }
    }
    if ok.is_empty() {
        return Err(StudyError::AllFailed {
            reps: cfg.reps,
            first: first.expect("a failure was recorded"),
        });
    }

    let s = ok.len() as f64;
    let parameters = (0..d)
        .map(|j| {
            let mean = ok.iter().map(|o| o.beta[j]).sum::<f64>() / s;
            let sd =
                (ok.len() > 1).then(|| (ok.iter().map(|o| (o.beta[j] - mean).powi(2)).sum::<f64>() / (s - 1.0)).sqrt());
            let covered = ok
                .iter()
                .filter(|o| (o.beta[j] - target[j]).abs() <= Z_95 * o.se[j])
                .count();
            ParamSummary {
                name: format!("X{}", j + 1),
                target: target[j],
                mean,
                bias: mean - target[j],
                sd,
                mean_se: ok.iter().map(|o| o.se[j]).sum::<f64>() / s,
                coverage: covered as f64 / s,
            }
        })
        .collect();
    let j_dof = ok[0].j_dof;
    let with_j: Vec<&Draw> = ok.iter().filter(|o| o.j_stat.is_finite()).collect();
    let j_rejection_rate = (j_dof > 0 && !with_j.is_empty()).then(|| {
        with_j
            .iter()
            .filter(|o| chi2_p(o.j_stat, o.j_dof).is_some_and(|p| p < 0.05))
            .count() as f64
            / with_j.len() as f64
    });

    Ok(SimResult {
        config: *cfg,
        parameters,
        j_dof,
        j_rejection_rate,
        reps: cfg.reps,
        successes: ok.len(),
        failures: cfg.reps - ok.len(),
        relevance_failures,
        first_failure: first.map(|e| e.to_string()),
    })
}

impl SimResult {
    pub fn render_text(&self) -> String {
        let mut s = String::new();
        let c = &self.config;
        let _ = writeln!(
            s,
            "n = {}   reps = {}   seed = {}   kernel: {}   bandwidth: {}",
            c.n, c.reps, c.seed, c.estimation.kernel, c.estimation.bandwidth
        );
        let _ = writeln!(
            s,
            "{:<6} {:>10} {:>10} {:>10} {:>10} {:>10} {:>9}",
            "param", "target", "mean", "bias", "sd", "mean se", "coverage"
        );
        for p in &self.parameters {
            let sd = p.sd.map_or_else(|| "n/a".to_string(), |v| format!("{v:.4}"));
            let _ = writeln!(
                s,
                "{:<6} {:>10.4} {:>10.4} {:>10.4} {:>10} {:>10.4} {:>9.3}",
                p.name, p.target, p.mean, p.bias, sd, p.mean_se, p.coverage
            );
        }
        match self.j_rejection_rate {
            Some(r) => {
                let _ = writeln!(s, "J rejection rate at 5%: {r:.3} (dof {})", self.j_dof);
            }
            None => {
                let _ = writeln!(s, "J test: just identified");
            }
        }
        let _ = writeln!(
            s,
            "successes {}   failures {}   (relevance failures {})",
            self.successes, self.failures, self.relevance_failures
        );
        s
    }
}
