use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("table does not cover [{lo}, {hi}] (table spans [{table_lo}, {table_hi}])")]
    TableCoverage {
        lo: f64,
        hi: f64,
        table_lo: f64,
        table_hi: f64,
    },

    #[error("table parse error: {0}")]
    Table(String),

    #[error("cut-off initial data blew up at x = {x:?} (n = {n:e}); cut-off width too large for the data")]
    CutoffBlowUp { x: f64, n: f64 },

    #[error("singular tridiagonal system at row {row}")]
    SingularSystem { row: usize },

    #[error("non-finite state at t = {t:e} (cell {cell})")]
    NonFinite {
        t: f64,
        cell: usize,
        last_good: Box<Vec<f64>>,
    },

    #[error("no equilibrium holds photon number {0} (maximum is 1/2)")]
    NoEquilibrium(f64),

    #[error("vacuum state: no cell exceeds the fit floor")]
    Vacuum,

    #[error("no condensate onset in trajectory")]
    NoOnset,

    #[error("trajectory mismatch: {0}")]
    TrajectoryMismatch(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
