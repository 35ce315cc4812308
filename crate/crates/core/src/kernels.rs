//! Compactly supported kernels on `[-1, 1]`, normalized to unit mass.

use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelKind {
    #[default]
    Uniform,
    Triangular,
    Epanechnikov,
}

impl KernelKind {
    pub const ALL: [KernelKind; 3] = [KernelKind::Uniform, KernelKind::Triangular, KernelKind::Epanechnikov];

    pub fn name(self) -> &'static str {
        match self {
            KernelKind::Uniform => "uniform",
            KernelKind::Triangular => "triangular",
            KernelKind::Epanechnikov => "epanechnikov",
        }
    }

    /// Kernel value at `u`. NaN propagates.
    pub fn evaluate(self, u: f64) -> f64 {
        if u.is_nan() {
            return f64::NAN;
        }
        let a = u.abs();
        if a > 1.0 {
            return 0.0;
        }
        match self {
            KernelKind::Uniform => 0.5,
            KernelKind::Triangular => 1.0 - a,
            KernelKind::Epanechnikov => 0.75 * (1.0 - u * u),
        }
    }

    /// One-sided moment `∫_0^1 u^l k(u) du`, or `∫_0^1 u^l k(u)^2 du` when
    /// `squared` is set.
    ///
    /// Closed forms; valid for `l <= 8`.
    pub fn one_sided_moment(self, l: u32, squared: bool) -> f64 {
        debug_assert!(l <= 8, "moment order above 8");
        let l = f64::from(l);
        match (self, squared) {
            (KernelKind::Uniform, false) => 0.5 / (l + 1.0),
            (KernelKind::Uniform, true) => 0.25 / (l + 1.0),
            (KernelKind::Triangular, false) => 1.0 / ((l + 1.0) * (l + 2.0)),
            (KernelKind::Triangular, true) => 2.0 / ((l + 1.0) * (l + 2.0) * (l + 3.0)),
            (KernelKind::Epanechnikov, false) => 1.5 / ((l + 1.0) * (l + 3.0)),
            (KernelKind::Epanechnikov, true) => 4.5 / ((l + 1.0) * (l + 3.0) * (l + 5.0)),
        }
    }
}

impl fmt::Display for KernelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for KernelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(KernelKind::Uniform),
            "triangular" => Ok(KernelKind::Triangular),
            "epanechnikov" => Ok(KernelKind::Epanechnikov),
            other => Err(Error::InvalidConfig(alloc::format!(
                "unknown kernel '{other}' (expected uniform, triangular or epanechnikov)"
            ))),
        }
    }
}

/// Free-function form of [`KernelKind::evaluate`].
pub fn evaluate(kind: KernelKind, u: f64) -> f64 {
    kind.evaluate(u)
}

/// Kernel weight `k(z_i / h)` for every observation.
pub fn weights_vector(kind: KernelKind, h: f64, z: &[f64]) -> Result<Vec<f64>> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::InvalidBandwidth(h));
    }
    z.iter()
        .enumerate()
        .map(|(row, &zi)| {
            if zi.is_nan() {
                Err(Error::NonFinite {
                    what: "running variable",
                    row,
                })
            } else {
                Ok(kind.evaluate(zi / h))
            }
        })
        .collect()
}

/// Free-function form of [`KernelKind::one_sided_moment`].
pub fn one_sided_moment(kind: KernelKind, l: u32, squared: bool) -> f64 {
    kind.one_sided_moment(l, squared)
}
