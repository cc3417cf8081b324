use thiserror::Error;

/// Errors shared by all modules of the crate.
#[derive(Debug, Clone, Error)]
pub enum CoreError {
    #[error("matrix determinant {det} is not within 1e-6 of 1")]
    NonUnimodular { det: f64 },

    #[error("basis matrix is singular or numerically rank-deficient")]
    Singular,

    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: String, got: String },

    #[error("dimension {d} exceeds the supported maximum of 6")]
    DimensionTooLarge { d: usize },

    #[error("scaling exponent {exponent} would overflow f64")]
    OverflowScale { exponent: f64 },

    #[error("index {i} out of range [0, {max}]")]
    IndexOutOfRange { i: usize, max: usize },

    #[error("enumeration budget exhausted; partial lower bound {partial}")]
    EnumerationBudgetExceeded { partial: f64 },

    #[error("search budget exhausted; best value found {best}")]
    BudgetExceeded { best: f64 },

    #[error("region has empirical measure zero at the given sample budget")]
    EmptyRegion,

    #[error("hypothesis {name} violated: {detail}")]
    HypothesisViolated { name: String, detail: String },

    #[error("grid of {cells} cells exceeds the budget of {budget}")]
    GridBudgetExceeded { cells: u128, budget: u64 },

    #[error("theta {theta} outside the admissible window [{lo}, {hi}]")]
    InvalidTheta { theta: f64, lo: f64, hi: f64 },

    #[error("multivector is not decomposable")]
    NonDecomposable,

    #[error("integrand sampled a negative value {value}")]
    NonNegativityViolated { value: f64 },

    #[error("invalid parameter: {what}")]
    InvalidParameter { what: String },
}

pub type Result<T> = std::result::Result<T, CoreError>;

impl CoreError {
    /// Process exit code the CLI maps this error to.
    pub fn exit_code(&self) -> i32 {
        match self {
            CoreError::HypothesisViolated { .. } | CoreError::InvalidTheta { .. } => 2,
            CoreError::EnumerationBudgetExceeded { .. }
            | CoreError::BudgetExceeded { .. }
            | CoreError::GridBudgetExceeded { .. } => 3,
            _ => 1,
        }
    }

    pub(crate) fn hypothesis(name: &str, detail: impl Into<String>) -> Self {
        CoreError::HypothesisViolated {
            name: name.to_string(),
            detail: detail.into(),
        }
    }

    pub(crate) fn param(what: impl Into<String>) -> Self {
        CoreError::InvalidParameter { what: what.into() }
    }
}
