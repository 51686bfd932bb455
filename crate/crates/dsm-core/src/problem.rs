//! Nonlinear map abstraction: residual evaluation and the finite-difference
//! Jacobian fallback used when a problem supplies no analytic derivative.

use nalgebra::{DMatrix, DVector};

use crate::error::{check_dimension, DsmError};

/// A nonlinear map `F: R^n -> R^n`.
///
/// Implementations must be deterministic and side-effect free: the same input
/// always produces the same output, and `evaluate` preserves the dimension.
pub trait NonlinearProblem: Sync {
    /// Problem dimension `n`.
    fn dimension(&self) -> usize;

    /// Identifier used by the registry and in output documents.
    fn name(&self) -> &str;

    /// Evaluates `F(u)`.
    fn evaluate(&self, u: &DVector<f64>) -> DVector<f64>;

    /// Analytic Jacobian `F'(u)`, when the problem provides one.
    ///
    /// Returning `None` makes callers fall back to central differences.
    fn jacobian(&self, _u: &DVector<f64>) -> Option<DMatrix<f64>> {
        None
    }
}

/// Closed ball `B(center, radius)` in the Euclidean norm.
#[derive(Debug, Clone)]
pub struct Ball {
    pub center: DVector<f64>,
    pub radius: f64,
}

impl Ball {
    pub fn new(center: DVector<f64>, radius: f64) -> Self {
        assert!(radius >= 0.0, "ball radius must be nonnegative");
        Ball { center, radius }
    }

    pub fn contains(&self, u: &DVector<f64>) -> bool {
        (u - &self.center).norm() <= self.radius
    }
}

fn checked_evaluate(
    problem: &dyn NonlinearProblem,
    u: &DVector<f64>,
) -> Result<DVector<f64>, DsmError> {
    let out = problem.evaluate(u);
    check_dimension(problem.dimension(), out.len(), "evaluate output")?;
    for (i, v) in out.iter().enumerate() {
        if !v.is_finite() {
            return Err(DsmError::NonFiniteEvaluation {
                component: i,
                point: u.clone(),
            });
        }
    }
    Ok(out)
}

/// Computes the residual `F(u) - f` and its Euclidean norm `g`.
pub fn evaluate_residual(
    problem: &dyn NonlinearProblem,
    u: &DVector<f64>,
    f: &DVector<f64>,
) -> Result<(DVector<f64>, f64), DsmError> {
    check_dimension(problem.dimension(), u.len(), "state u")?;
    check_dimension(problem.dimension(), f.len(), "target f")?;
    let residual = checked_evaluate(problem, u)? - f;
    let g = residual.norm();
    Ok((residual, g))
}

/// Central-difference Jacobian: column `j` is `(F(u + h e_j) - F(u - h e_j)) / (2h)`.
pub fn finite_difference_jacobian(
    problem: &dyn NonlinearProblem,
    u: &DVector<f64>,
    h: f64,
) -> Result<DMatrix<f64>, DsmError> {
    assert!(h > 0.0, "finite-difference step must be positive");
    let n = problem.dimension();
    check_dimension(n, u.len(), "state u")?;
    let mut jac = DMatrix::zeros(n, n);
    let mut probe = u.clone();
    for j in 0..n {
        probe[j] = u[j] + h;
        let fp = checked_evaluate(problem, &probe)?;
        probe[j] = u[j] - h;
        let fm = checked_evaluate(problem, &probe)?;
        probe[j] = u[j];
        let inv_2h = 0.5 / h;
        for i in 0..n {
            jac[(i, j)] = (fp[i] - fm[i]) * inv_2h;
        }
    }
    Ok(jac)
}

/// Default finite-difference step, scaled with the state magnitude.
pub fn default_fd_step(u: &DVector<f64>) -> f64 {
    let u_inf = u.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    1e-6 * (1.0 + u_inf)
}

/// Jacobian at `u`: analytic when the problem supplies one, otherwise central
/// differences with the default scaled step.
pub fn jacobian_at(
    problem: &dyn NonlinearProblem,
    u: &DVector<f64>,
) -> Result<DMatrix<f64>, DsmError> {
    if let Some(jac) = problem.jacobian(u) {
        check_dimension(problem.dimension(), jac.nrows(), "jacobian rows")?;
        check_dimension(problem.dimension(), jac.ncols(), "jacobian cols")?;
        return Ok(jac);
    }
    finite_difference_jacobian(problem, u, default_fd_step(u))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::suite::registry_get;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn vec1(x: f64) -> DVector<f64> {
        DVector::from_vec(vec![x])
    }

    #[test]
    fn residual_of_identity_map() {
        let p = registry_get("identity", 1).unwrap();
        let (r, g) = evaluate_residual(p.as_ref(), &vec1(3.0), &vec1(1.0)).unwrap();
        assert_eq!(r[0], 2.0);
        assert_eq!(g, 2.0);
    }

    #[test]
    fn residual_of_scalar_exp_at_origin() {
        let p = registry_get("scalar_exp", 1).unwrap();
        let (r, g) = evaluate_residual(p.as_ref(), &vec1(0.0), &vec1(0.0)).unwrap();
        assert_eq!(r[0], 1.0);
        assert_eq!(g, 1.0);
    }

    #[test]
    fn residual_of_cubic_at_root() {
        let p = registry_get("monotone_cubic", 1).unwrap();
        let (r, g) = evaluate_residual(p.as_ref(), &vec1(1.0), &vec1(2.0)).unwrap();
        assert_eq!(r[0], 0.0);
        assert_eq!(g, 0.0);
    }

    #[test]
    fn residual_rejects_dimension_mismatch() {
        let p = registry_get("identity", 2).unwrap();
        let err = evaluate_residual(p.as_ref(), &vec1(0.0), &vec1(0.0)).unwrap_err();
        assert!(matches!(err, DsmError::DimensionMismatch { .. }));
    }

    #[test]
    fn fd_jacobian_of_identity_is_identity() {
        let p = registry_get("identity", 3).unwrap();
        let u = DVector::from_vec(vec![0.3, -1.2, 7.0]);
        let jac = finite_difference_jacobian(p.as_ref(), &u, 1e-6).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((jac[(i, j)] - expect).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn fd_jacobian_of_exp_at_zero() {
        let p = registry_get("scalar_exp", 1).unwrap();
        let jac = finite_difference_jacobian(p.as_ref(), &vec1(0.0), 1e-6).unwrap();
        assert!((jac[(0, 0)] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn fd_jacobian_of_cubic_at_two() {
        let p = registry_get("monotone_cubic", 1).unwrap();
        let jac = finite_difference_jacobian(p.as_ref(), &vec1(2.0), 1e-6).unwrap();
        assert!((jac[(0, 0)] - 13.0).abs() < 1e-6);
    }

    #[test]
    fn analytic_jacobian_preferred_over_fd() {
        let p = registry_get("scalar_exp", 1).unwrap();
        let jac = jacobian_at(p.as_ref(), &vec1(1.0)).unwrap();
        // analytic e^1, no finite-difference error at all
        assert_eq!(jac[(0, 0)], 1.0_f64.exp());
    }

    proptest! {
        // linear map: FD is exact up to round-off; below h ~ 1e-6 the
        // subtraction cancellation (eps * |F| / h) dominates the 1e-9 budget
        #[test]
        fn fd_exact_for_linear_map(
            x in -5.0_f64..5.0,
            y in -5.0_f64..5.0,
            h_exp in -6.0_f64..-4.0,
        ) {
            let p = registry_get("linear_spd", 2).unwrap();
            let u = DVector::from_vec(vec![x, y]);
            let jac = finite_difference_jacobian(p.as_ref(), &u, 10f64.powf(h_exp)).unwrap();
            let a = [[2.0, 1.0], [1.0, 2.0]];
            let norm_a = 3.0; // ||A||_inf
            for i in 0..2 {
                for j in 0..2 {
                    prop_assert!((jac[(i, j)] - a[i][j]).abs() <= 1e-9 * norm_a);
                }
            }
        }

        #[test]
        fn residual_zero_against_own_image(x in -3.0_f64..3.0) {
            let p = registry_get("monotone_cubic", 1).unwrap();
            let u = vec1(x);
            let f = p.evaluate(&u);
            let (_, g) = evaluate_residual(p.as_ref(), &u, &f).unwrap();
            prop_assert_eq!(g, 0.0);
        }

        #[test]
        fn fd_jacobian_is_deterministic(x in -2.0_f64..2.0) {
            let p = registry_get("trig_perturbed", 1).unwrap();
            let u = vec1(x);
            let j1 = finite_difference_jacobian(p.as_ref(), &u, 1e-6).unwrap();
            let j2 = finite_difference_jacobian(p.as_ref(), &u, 1e-6).unwrap();
            prop_assert_eq!(j1, j2);
        }
    }
}
