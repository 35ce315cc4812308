//! JSON and text reports for fits and diagnostics.

use std::fmt::Write as _;

use rdmulti_core::discontinuities::{CellEstimate, DroppedCell, RatioLate};
use rdmulti_core::estimator::FirstStage;
use rdmulti_core::{
    cell_table, plugin_estimator, ratio_late, relevance, twlate_weights, validate_dataset, Dataset, EstimationConfig,
    FitResult, ValidationReport,
};
use serde::{Deserialize, Serialize};

use crate::inference::{chi2_p, normal_p};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coefficient {
    pub name: String,
    pub estimate: f64,
    pub se: f64,
    pub t: f64,
    pub p: f64,
}

impl Coefficient {
    fn new(name: &str, estimate: f64, var: f64) -> Self {
        let se = var.max(0.0).sqrt();
        let t = estimate / se;
        Coefficient {
            name: name.to_string(),
            estimate,
            se,
            t,
            p: normal_p(t),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub model: String,
    pub config: EstimationConfig,
    pub cutoff: f64,
    pub n: usize,
    pub n_effective: usize,
    pub n_clusters: usize,
    pub q: usize,
    pub beta: Vec<f64>,
    pub se: Vec<f64>,
    pub coefficients: Vec<Coefficient>,
    /// Covariance of the treatment coefficients.
    pub covariance: Vec<Vec<f64>>,
    pub j_stat: f64,
    pub j_dof: usize,
    pub j_pvalue: Option<f64>,
    pub just_identified: bool,
    /// Set when the J statistic could not be computed.
    pub j_note: Option<String>,
    pub first_stage: Vec<FirstStage>,
    pub controls: Vec<Coefficient>,
    pub warnings: Vec<String>,
}

impl FitReport {
    pub fn new(fit: &FitResult, ds: &Dataset, model: &str, cfg: &EstimationConfig) -> Self {
        let k = fit.k_endogenous();
        let coefficients: Vec<Coefficient> = (0..k)
            .map(|i| Coefficient::new(&fit.names[i], fit.beta[i], fit.cov[i][i]))
            .collect();
        let controls = fit
            .eta
            .iter()
            .enumerate()
            .map(|(i, &e)| Coefficient::new(&fit.names[k + i], e, fit.cov[k + i][k + i]))
            .collect();
        let warnings = validate_dataset(ds, cfg.bandwidth).warnings;
        FitReport {
            model: model.to_string(),
            config: *cfg,
            cutoff: ds.cutoff(),
            n: ds.n(),
            n_effective: fit.n_effective,
            n_clusters: fit.n_clusters,
            q: ds.q(),
            beta: fit.beta.clone(),
            se: coefficients.iter().map(|c| c.se).collect(),
            coefficients,
            covariance: fit.cov[..k].iter().map(|r| r[..k].to_vec()).collect(),
            j_stat: fit.j.stat,
            j_dof: fit.j.dof,
            j_pvalue: chi2_p(fit.j.stat, fit.j.dof),
            just_identified: fit.j.just_identified,
            j_note: fit.j_note.clone(),
            first_stage: fit.first_stage.clone(),
            controls,
            warnings,
        }
    }

    /// Estimates with standard errors in parentheses underneath, followed by
    /// the J-test p-value.
    pub fn render_text(&self) -> String {
        let width = self
            .coefficients
            .iter()
            .map(|c| c.name.len())
            .max()
            .unwrap_or(0)
            .max(24);
        let mut s = String::new();
        let _ = writeln!(
            s,
            "model: {}   kernel: {}   bandwidth: {}   clusters: {:?}",
            self.model, self.config.kernel, self.config.bandwidth, self.config.cluster_by
        );
        let _ = writeln!(s, "{:<width$}  {:>12}", "", "estimate");
        for c in &self.coefficients {
            let _ = writeln!(s, "{:<width$}  {:>12.4}", c.name, c.estimate);
            let _ = writeln!(s, "{:<width$}  {:>12}", "", format!("({:.4})", c.se));
        }
        let j = match self.j_pvalue {
            Some(p) => format!("{p:.3}"),
            None => "n/a".to_string(),
        };
        let _ = writeln!(
            s,
            "{:<width$}  {:>12}   J = {:.3}, dof = {}",
            "J p-value", j, self.j_stat, self.j_dof
        );
        if let Some(note) = &self.j_note {
            let _ = writeln!(s, "J unavailable: {note}");
        }
        let _ = writeln!(s, "{:<width$}  {:>12}", "observations in window", self.n_effective);
        let _ = writeln!(s, "{:<width$}  {:>12}", "clusters", self.n_clusters);
        let _ = writeln!(s, "{:<width$}  {:>12}", "covariate cells", self.q);
        for f in &self.first_stage {
            let _ = writeln!(s, "first stage {:<12} F = {:.2} ({:?})", f.name, f.f_stat, f.flag);
        }
        for w in &self.warnings {
            let _ = writeln!(s, "warning: {w}");
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Relevance {
    pub m_hat: Vec<Vec<f64>>,
    pub eigenvalues: Vec<f64>,
    pub min_eigenvalue: f64,
    pub rcond: f64,
    pub rcond_threshold: f64,
    pub rank: usize,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellWeights {
    pub cell: usize,
    pub label: String,
    pub omega: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioEntry {
    pub cell: usize,
    pub label: String,
    pub treatment: String,
    /// 1-based treatment index.
    pub j: usize,
    #[serde(flatten)]
    pub result: RatioLate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnoseReport {
    pub config: EstimationConfig,
    pub cutoff: f64,
    pub n: usize,
    pub d: usize,
    pub q: usize,
    pub treatment_names: Vec<String>,
    pub cells: Vec<CellEstimate>,
    pub dropped: Vec<DroppedCell>,
    pub dropped_share: f64,
    pub relevance: Relevance,
    pub omega: Vec<CellWeights>,
    pub ratio_late: Vec<RatioEntry>,
    pub plugin: Option<Vec<f64>>,
    pub validation: ValidationReport,
}

fn rows(m: &nalgebra::DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|r| m.row(r).iter().copied().collect()).collect()
}

impl DiagnoseReport {
    pub fn build(ds: &Dataset, cfg: &EstimationConfig) -> rdmulti_core::Result<Self> {
        cfg.validate()?;
        let ct = cell_table(ds, cfg)?;
        let tw = relevance(&ct, cfg.rcond_threshold);
        let (omega, plugin) = if tw.passed {
            let om = twlate_weights(&tw)?
                .iter()
                .zip(&ct.cells)
                .map(|(o, c)| CellWeights {
                    cell: c.cell,
                    label: c.label.clone(),
                    omega: rows(o),
                })
                .collect();
            (om, Some(plugin_estimator(&ct, &tw)?.iter().copied().collect()))
        } else {
            (Vec::new(), None)
        };
        let mut ratios = Vec::new();
        for c in &ct.cells {
            for j in 0..ct.d {
                ratios.push(RatioEntry {
                    cell: c.cell,
                    label: c.label.clone(),
                    treatment: ds.treatment_names()[j].clone(),
                    j: j + 1,
                    result: ratio_late(&ct, c.cell, j, cfg.jump_tol)?,
                });
            }
        }
        Ok(DiagnoseReport {
            config: *cfg,
            cutoff: ds.cutoff(),
            n: ds.n(),
            d: ds.d(),
            q: ds.q(),
            treatment_names: ds.treatment_names().to_vec(),
            dropped_share: ct.dropped_share(),
            relevance: Relevance {
                m_hat: rows(&tw.m_hat),
                eigenvalues: tw.eigenvalues.clone(),
                min_eigenvalue: tw.min_eigenvalue,
                rcond: tw.rcond,
                rcond_threshold: cfg.rcond_threshold,
                rank: tw.rank,
                passed: tw.passed,
            },
            cells: ct.cells,
            dropped: ct.dropped,
            omega,
            ratio_late: ratios,
            plugin,
            validation: validate_dataset(ds, cfg.bandwidth),
        })
    }

    pub fn render_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "cells: {} usable of {}   treatments: {}   kernel: {}   bandwidth: {}",
            self.cells.len(),
            self.q,
            self.d,
            self.config.kernel,
            self.config.bandwidth
        );
        let _ = write!(s, "{:<16} {:>8} {:>7} {:>7}", "cell", "p_hat", "n_left", "n_right");
        for t in &self.treatment_names {
            let _ = write!(s, " {:>12}", format!("dX[{t}]"));
        }
        let _ = writeln!(s, " {:>10}", "dY");
        for c in &self.cells {
            let _ = write!(s, "{:<16} {:>8.4} {:>7} {:>7}", c.label, c.p_hat, c.n_left, c.n_right);
            for v in &c.delta_x {
                let _ = write!(s, " {v:>12.4}");
            }
            let _ = writeln!(s, " {:>10.4}", c.delta_y);
        }
        for d in &self.dropped {
            let _ = writeln!(
                s,
                "dropped: {} (no support on the {} side, weight share {:.4})",
                d.label, d.side, d.weight_share
            );
        }
        let r = &self.relevance;
        let _ = writeln!(
            s,
            "relevance: {}   rank {}   min eigenvalue {:.3e}   rcond {:.3e}",
            if r.passed { "pass" } else { "FAIL" },
            r.rank,
            r.min_eigenvalue,
            r.rcond
        );
        if let Some(p) = &self.plugin {
            let _ = writeln!(s, "plug-in estimate: {p:.4?}");
        }
        for e in &self.ratio_late {
            if let Some(v) = e.result.value() {
                let _ = writeln!(s, "ratio LATE available: cell {} {} = {:.4}", e.label, e.treatment, v);
            }
        }
        for w in &self.validation.warnings {
            let _ = writeln!(s, "warning: {w}");
        }
        s
    }
}
