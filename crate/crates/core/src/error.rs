use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("size limit exceeded: {what} = {requested} > cap {cap}")]
    Size {
        what: &'static str,
        requested: u128,
        cap: u128,
    },

    #[error("dimension mismatch: expected {expected}, got {got} ({context})")]
    Dimension {
        expected: usize,
        got: usize,
        context: &'static str,
    },

    #[error("non-finite value in {stage} at iteration {iteration}")]
    NonFinite { stage: &'static str, iteration: usize },

    #[error("function evaluation failed at sample {index}: {reason}")]
    Evaluation { index: usize, reason: String },

    #[error("restricted isometry constant {delta} is not admissible for a = {a} (threshold {threshold})")]
    Inadmissible { a: f64, delta: f64, threshold: f64 },

    #[error("PDE solve blew up at step {step}")]
    Blowup { step: usize },

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub(crate) fn check_finite(values: &[f64], what: &str) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(i) => Err(Error::Domain(format!("{what}[{i}] is not finite"))),
        None => Ok(()),
    }
}
