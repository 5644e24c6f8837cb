use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },

    #[error("entry {index} of the reference distribution is zero; weighting is singular")]
    SingularWeight { index: usize },

    #[error("invalid distribution: entry {index} = {value} is outside [0, 1]")]
    OutOfRange { index: usize, value: f64 },

    #[error("invalid distribution: entries sum to {sum}, not 1")]
    NotNormalized { sum: f64 },

    #[error("invalid channel: column {column} sums to {sum}, not 1")]
    NotStochastic { column: usize, sum: f64 },

    #[error("output symbol {index} has zero probability; the output weighting is singular")]
    DegenerateOutput { index: usize },

    #[error("perturbation direction sums to {sum}, not 0")]
    NotZeroSum { sum: f64 },

    #[error("matrix of size {rows}x{cols} exceeds the capacity cap of {cap}x{cap}")]
    Capacity { rows: usize, cols: usize, cap: usize },

    #[error("invalid input: {0}")]
    Input(String),

    #[error("iteration budget of {iterations} exhausted; best duality gap {best_gap:e}")]
    Budget { iterations: usize, best_gap: f64 },

    #[error("constraint set is infeasible: {0}")]
    Infeasible(String),

    #[error("layer support has {size} symbols; at least 2 are needed")]
    DegenerateLayer { size: usize },

    #[error("search resolution {resolution} is below the minimum of {minimum}")]
    Resolution { resolution: usize, minimum: usize },

    #[error("configuration error: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }

    pub(crate) fn check_len(expected: usize, found: usize) -> Result<()> {
        if expected == found {
            Ok(())
        } else {
            Err(Error::Dimension { expected, found })
        }
    }
}
