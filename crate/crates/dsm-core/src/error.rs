use nalgebra::DVector;
use thiserror::Error;

/// Errors surfaced by the solver library.
///
/// Mathematical failure modes of the flow itself (escape, horizon, singular
/// Jacobian during integration) are reported through
/// [`SolveStatus`](crate::flow::SolveStatus), not through this type.
#[derive(Debug, Error)]
pub enum DsmError {
    #[error("dimension mismatch: expected {expected}, got {got} in {context}")]
    DimensionMismatch {
        expected: usize,
        got: usize,
        context: &'static str,
    },

    #[error("non-finite value in component {component} of F({point:?})")]
    NonFiniteEvaluation {
        component: usize,
        point: DVector<f64>,
    },

    #[error("numerically singular Jacobian at {point:?} (pivot {pivot:e})")]
    SingularJacobian { point: DVector<f64>, pivot: f64 },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("contract violation: {0}")]
    ContractViolation(String),
}

pub(crate) fn check_dimension(
    expected: usize,
    got: usize,
    context: &'static str,
) -> Result<(), DsmError> {
    if expected == got {
        Ok(())
    } else {
        Err(DsmError::DimensionMismatch {
            expected,
            got,
            context,
        })
    }
}
