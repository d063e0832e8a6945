use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch for {what}: expected {expected}, got {actual}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },

    /// A schedule component grew past the overflow guard.
    #[error("schedule overflow in `{component}` at t = {t}: value {value:e} exceeds guard")]
    Overflow {
        component: &'static str,
        t: f64,
        value: f64,
    },

    #[error("unsupported configuration: {0}")]
    Unsupported(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("integration diverged after t = {last_valid_t}")]
    Divergence { last_valid_t: f64 },

    #[error("step underflow at t = {t}: required step {required:e} is below dt_min {dt_min:e}")]
    StepUnderflow { t: f64, required: f64, dt_min: f64 },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("unknown cost fixture `{0}`")]
    UnknownFixture(String),
}

pub(crate) fn check_dim(what: &'static str, expected: usize, actual: usize) -> Result<()> {
    if expected != actual {
        return Err(Error::DimensionMismatch {
            what,
            expected,
            actual,
        });
    }
    Ok(())
}
