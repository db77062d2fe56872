use num_complex::Complex64;
use thiserror::Error;

/// Errors raised by the numerical routines of this crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum IrfError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A denominator vanished (relative to the size of its numerator).
    #[error("singular parameters: factor `{factor}` has magnitude {magnitude:.3e}")]
    Singular { factor: String, magnitude: f64 },

    /// Node doubling hit the per-variable cap or the evaluation budget.
    #[error("quadrature did not converge after {nodes} nodes per variable: last two estimates {previous} and {last}")]
    Convergence {
        previous: Complex64,
        last: Complex64,
        nodes: usize,
    },

    #[error("occupation cap {cap} exceeded in column {column}")]
    CapExceeded { cap: u32, column: usize },

    #[error("truncation did not stabilize: {0}")]
    Stabilization(String),

    #[error("series tail did not decay: {0}")]
    Divergence(String),

    /// A plaquette weight that should be a probability is not one.
    #[error("weight {value} at vertex ({x}, {y}) is not a probability")]
    NotStochastic { value: Complex64, x: usize, y: usize },

    #[error("resource limit exceeded: {0}")]
    ResourceLimit(String),

    #[error("configuration error: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, IrfError>;
