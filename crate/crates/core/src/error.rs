use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

/// Left or right of the cutoff.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
}

impl core::fmt::Display for Side {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            Side::Left => f.write_str("left"),
            Side::Right => f.write_str("right"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("length mismatch for {what}: expected {expected}, found {found}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("non-finite value in {what} at row {row}")]
    NonFinite { what: &'static str, row: usize },

    #[error("treatment value {value} at row {row} is not one of the declared levels")]
    UnknownTreatmentLevel { row: usize, value: i64 },

    #[error("treatment levels must be strictly increasing and number at least two")]
    InvalidLevels,

    #[error("covariate column {column} has {levels} levels (max {max}); coarsen it before use")]
    TooManyLevels { column: usize, levels: usize, max: usize },

    #[error("bandwidth must be positive and finite, got {0}")]
    InvalidBandwidth(f64),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("cell {cell} unusable: fewer than two distinct running-variable values on the {side} side")]
    CellUnusable { cell: usize, side: Side },

    #[error("no usable cells: every cell lacks support on one side of the cutoff")]
    NoUsableCells,

    #[error("relevance failed (rcond {rcond:e}, min eigenvalue {min_eigenvalue:e}); inspect the diagnostics report")]
    RelevanceFailed { rcond: f64, min_eigenvalue: f64 },

    #[error("under-identified: q=m+1={instruments} instruments < {endogenous} endogenous regressors")]
    UnderIdentified { instruments: usize, endogenous: usize },

    #[error("{what} is singular or ill-conditioned (rcond {rcond:e})")]
    Singular { what: &'static str, rcond: f64 },

    #[error("no observations with positive kernel weight")]
    NoPositiveWeights,

    #[error("need at least two clusters among weighted observations, found {0}")]
    TooFewClusters(usize),

    #[error("the J test needs more clusters ({clusters}) than moment conditions ({moments})")]
    TooFewClustersForJ { clusters: usize, moments: usize },

    #[error("too few observations ({n}) for {k} regressors")]
    TooFewObservations { n: usize, k: usize },

    #[error("invalid data-generating process: {0}")]
    InvalidDgp(String),
}

impl Error {
    /// True for failures caused by weak or absent identification rather than
    /// malformed input.
    pub fn is_identification_failure(&self) -> bool {
        matches!(
            self,
            Error::RelevanceFailed { .. }
                | Error::UnderIdentified { .. }
                | Error::Singular { .. }
                | Error::NoUsableCells
                | Error::CellUnusable { .. }
        )
    }
}
