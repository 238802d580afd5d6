use thiserror::Error;

/// Errors produced by the numerical and I/O layers of the crate.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument was outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A sliding window (or whole image) carried no usable spread.
    #[error("degenerate window: {0}")]
    DegenerateWindow(String),

    /// The closed-form estimator hit its singular locus `r^2 = omega`.
    #[error("singular pixel: r = {r}, omega = {omega}")]
    SingularPixel { r: f64, omega: f64 },

    /// Shapes, sizes or options that cannot work together.
    #[error("configuration error: {0}")]
    Config(String),

    /// Nothing left to evaluate after masking.
    #[error("evaluation error: {0}")]
    Evaluation(String),

    /// A file did not match its declared format.
    #[error("format error: {0}")]
    Format(String),

    /// Training produced a non-finite loss.
    #[error("training diverged at step {step}: loss = {loss}")]
    Divergence { step: usize, loss: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
