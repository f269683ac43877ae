//! Error type shared across the crate.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Argument outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Structurally invalid parameter (range, parity, size).
    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    /// Mismatched lengths, grids or bases between operands.
    #[error("mismatch: {0}")]
    Mismatch(String),

    /// The leading radial coefficient is not positive, so the dual state
    /// cannot be nonnegative outside any ball.
    #[error("tail unbounded: leading radial coefficient {coeff:.6e} is not positive")]
    TailUnbounded { coeff: f64 },

    /// Weighted Gram matrix fell below the degeneracy floor.
    #[error("degenerate weight{} (lambda_min {lambda_min:.3e} < floor {floor:.3e})", at(.step, .x_index))]
    DegenerateWeight {
        step: Option<usize>,
        x_index: Option<usize>,
        lambda_min: f64,
        floor: f64,
    },

    /// Projection solve left a residual above tolerance.
    #[error("projection solver failure{} (residual {residual:.3e} > tol {tol:.3e})", at(.step, .x_index))]
    SolverFailure {
        step: Option<usize>,
        x_index: Option<usize>,
        residual: f64,
        tol: f64,
    },

    /// A computed state lost the nondegeneracy property required to continue.
    #[error("hypothesis guard violated at step {step}, grid point {x_index}")]
    HypothesisViolation { step: usize, x_index: usize },

    /// Newton iteration for the moment inversion hit its iteration cap.
    #[error("moment inversion did not converge{} after {iters} iterations (residual {residual:.3e})",
            .cell.map(|c| format!(" at cell {c}")).unwrap_or_default())]
    NoConvergence {
        cell: Option<usize>,
        iters: usize,
        residual: f64,
    },

    /// Scenario file rejected, with source line context.
    #[error("config error at line {line}: {msg}")]
    Config { line: usize, msg: String },

    /// Time argument outside a trajectory's span.
    #[error("t = {t} outside trajectory range [0, {t_max}]")]
    TimeOutOfRange { t: f64, t_max: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn at(step: &Option<usize>, x_index: &Option<usize>) -> String {
    match (step, x_index) {
        (Some(n), Some(j)) => format!(" at step {n}, grid point {j}"),
        (Some(n), None) => format!(" at step {n}"),
        (None, Some(j)) => format!(" at grid point {j}"),
        (None, None) => String::new(),
    }
}

impl Error {
    /// Attach run-loop context to projection-level errors.
    pub fn with_step(mut self, n: usize) -> Self {
        match &mut self {
            Error::DegenerateWeight { step, .. } | Error::SolverFailure { step, .. } => {
                *step = Some(n);
            }
            _ => {}
        }
        self
    }

    pub fn with_x_index(mut self, j: usize) -> Self {
        match &mut self {
            Error::DegenerateWeight { x_index, .. } | Error::SolverFailure { x_index, .. } => {
                *x_index = Some(j);
            }
            _ => {}
        }
        self
    }
}
