use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::DesignMatrices;
use crate::error::Result;
use crate::linalg::{scale_rows, Qr};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FirstStageFlag {
    Ok,
    /// Nothing left to explain once the controls are partialled out.
    NoVariation,
    /// The instruments explain the column without residual.
    ExactFit,
}

/// Partial F statistic of the excluded instruments in one first stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FirstStage {
    pub name: String,
    pub f_stat: f64,
    pub df_num: usize,
    pub df_den: usize,
    pub flag: FirstStageFlag,
}

/// Weighted restricted (controls only) versus unrestricted (controls and
/// instruments) sums of squares for every endogenous column.
pub fn first_stage_diagnostics(dm: &DesignMatrices, rcond_threshold: f64) -> Result<Vec<FirstStage>> {
    let s = dm.sqrt_weights();
    let full = Qr::new(
        scale_rows(&dm.exogenous(), &s),
        rcond_threshold,
        "first-stage normal equations",
    )?;
    let restricted = Qr::new(scale_rows(&dm.controls, &s), rcond_threshold, "control block")?;
    let endo = scale_rows(&dm.endogenous, &s);
    let res_u = &endo - full.project(&endo);
    let res_r = &endo - restricted.project(&endo);
    let df_num = dm.instruments.ncols();
    let df_den = dm.n().saturating_sub(full.r().ncols());

    Ok((0..endo.ncols())
        .map(|j| {
            let total = endo.column(j).norm_squared();
            let ssr_u = res_u.column(j).norm_squared();
            let ssr_r = res_r.column(j).norm_squared();
            let (f_stat, flag) = if ssr_r <= total * 1e-24 || total == 0.0 {
                (0.0, FirstStageFlag::NoVariation)
            } else {
                let denom = (ssr_u / df_den.max(1) as f64).max(f64::MIN_POSITIVE);
                let f = ((ssr_r - ssr_u).max(0.0) / df_num as f64) / denom;
                let flag = if ssr_u <= ssr_r * 1e-20 {
                    FirstStageFlag::ExactFit
                } else {
                    FirstStageFlag::Ok
                };
                (f.min(f64::MAX), flag)
            };
            FirstStage {
                name: dm.endogenous_names[j].clone(),
                f_stat,
                df_num,
                df_den,
                flag,
            }
        })
        .collect())
}
