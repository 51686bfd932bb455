//! Built-in benchmark problems with known analytic structure.
//!
//! Each entry exercises one certificate regime: constant inverse-Jacobian
//! bound (`identity`, `monotone_cubic`), an affine growth bound
//! (`trig_perturbed`), and the classic `e^u` counterexample whose inverse
//! Jacobian grows like `e^R` so that `sup R/m(R)` stays bounded.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::certificates::HadamardBounds;
use crate::problem::NonlinearProblem;

/// Qualitative classification of a registry problem.
#[derive(Debug, Clone, Copy, Default, Serialize)]
pub struct ProblemTags {
    pub surjective: bool,
    pub homeomorphism: bool,
    pub counterexample: bool,
}

/// Registry metadata for one benchmark problem.
pub struct ProblemDescriptor {
    pub name: &'static str,
    /// Fixed dimension, or `None` when the problem scales componentwise.
    pub dimension: Option<usize>,
    /// A root together with the right-hand side it solves, when one is known.
    pub known_root: Option<(Vec<f64>, Vec<f64>)>,
    /// Closed-form `m(R)` at the documented center, when known.
    pub known_m_formula: Option<(&'static str, fn(f64) -> f64)>,
    /// Growth-bound constants `(a, b)` with `||[F'(u)]^-1|| <= a||u|| + b`.
    pub hadamard: Option<HadamardBounds>,
    pub tags: ProblemTags,
    pub summary: &'static str,
}

struct Identity {
    dim: usize,
}

impl NonlinearProblem for Identity {
    fn dimension(&self) -> usize {
        self.dim
    }
    fn name(&self) -> &str {
        "identity"
    }
    fn evaluate(&self, u: &DVector<f64>) -> DVector<f64> {
        u.clone()
    }
    fn jacobian(&self, _u: &DVector<f64>) -> Option<DMatrix<f64>> {
        Some(DMatrix::identity(self.dim, self.dim))
    }
}

struct LinearSpd;

impl LinearSpd {
    const A: [[f64; 2]; 2] = [[2.0, 1.0], [1.0, 2.0]];
}

impl NonlinearProblem for LinearSpd {
    fn dimension(&self) -> usize {
        2
    }
    fn name(&self) -> &str {
        "linear_spd"
    }
    fn evaluate(&self, u: &DVector<f64>) -> DVector<f64> {
        DVector::from_vec(vec![
            Self::A[0][0] * u[0] + Self::A[0][1] * u[1],
            Self::A[1][0] * u[0] + Self::A[1][1] * u[1],
        ])
    }
    fn jacobian(&self, _u: &DVector<f64>) -> Option<DMatrix<f64>> {
        Some(DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]))
    }
}

struct ScalarExp;

impl NonlinearProblem for ScalarExp {
    fn dimension(&self) -> usize {
        1
    }
    fn name(&self) -> &str {
        "scalar_exp"
    }
    fn evaluate(&self, u: &DVector<f64>) -> DVector<f64> {
        DVector::from_vec(vec![u[0].exp()])
    }
    fn jacobian(&self, u: &DVector<f64>) -> Option<DMatrix<f64>> {
        Some(DMatrix::from_row_slice(1, 1, &[u[0].exp()]))
    }
}

struct MonotoneCubic {
    dim: usize,
}

impl NonlinearProblem for MonotoneCubic {
    fn dimension(&self) -> usize {
        self.dim
    }
    fn name(&self) -> &str {
        "monotone_cubic"
    }
    fn evaluate(&self, u: &DVector<f64>) -> DVector<f64> {
        u.map(|x| x + x * x * x)
    }
    fn jacobian(&self, u: &DVector<f64>) -> Option<DMatrix<f64>> {
        let mut jac = DMatrix::zeros(self.dim, self.dim);
        for i in 0..self.dim {
            jac[(i, i)] = 1.0 + 3.0 * u[i] * u[i];
        }
        Some(jac)
    }
}

struct TrigPerturbed {
    dim: usize,
}

impl NonlinearProblem for TrigPerturbed {
    fn dimension(&self) -> usize {
        self.dim
    }
    fn name(&self) -> &str {
        "trig_perturbed"
    }
    fn evaluate(&self, u: &DVector<f64>) -> DVector<f64> {
        u.map(|x| x + 0.5 * x.sin())
    }
    fn jacobian(&self, u: &DVector<f64>) -> Option<DMatrix<f64>> {
        let mut jac = DMatrix::zeros(self.dim, self.dim);
        for i in 0..self.dim {
            jac[(i, i)] = 1.0 + 0.5 * u[i].cos();
        }
        Some(jac)
    }
}

/// `F(u1, u2) = (u1 + u2^3, u2 + u1^3)`; the Jacobian is nonsingular on the
/// sub-ball `|u1 u2| < 1/3`, in particular on `B(0, 0.7)`.
struct Coupled2d;

impl NonlinearProblem for Coupled2d {
    fn dimension(&self) -> usize {
        2
    }
    fn name(&self) -> &str {
        "coupled_2d"
    }
    fn evaluate(&self, u: &DVector<f64>) -> DVector<f64> {
        DVector::from_vec(vec![u[0] + u[1].powi(3), u[1] + u[0].powi(3)])
    }
    fn jacobian(&self, u: &DVector<f64>) -> Option<DMatrix<f64>> {
        Some(DMatrix::from_row_slice(
            2,
            2,
            &[1.0, 3.0 * u[1] * u[1], 3.0 * u[0] * u[0], 1.0],
        ))
    }
}

/// Instantiates a registry problem at the requested dimension.
///
/// Fixed-dimension problems (`linear_spd`, `scalar_exp`, `coupled_2d`) reject
/// any other dimension; componentwise problems accept any `dim >= 1`.
pub fn registry_get(name: &str, dim: usize) -> Option<Box<dyn NonlinearProblem>> {
    if dim == 0 {
        return None;
    }
    match name {
        "identity" => Some(Box::new(Identity { dim })),
        "linear_spd" if dim == 2 => Some(Box::new(LinearSpd)),
        "scalar_exp" if dim == 1 => Some(Box::new(ScalarExp)),
        "monotone_cubic" => Some(Box::new(MonotoneCubic { dim })),
        "trig_perturbed" => Some(Box::new(TrigPerturbed { dim })),
        "coupled_2d" if dim == 2 => Some(Box::new(Coupled2d)),
        _ => None,
    }
}

/// Descriptors for every built-in problem.
pub fn registry_list() -> Vec<ProblemDescriptor> {
    vec![
        ProblemDescriptor {
            name: "identity",
            dimension: None,
            known_root: Some((vec![7.0], vec![7.0])),
            known_m_formula: Some(("1", |_r| 1.0)),
            hadamard: Some(HadamardBounds::new(0.0, 1.0)),
            tags: ProblemTags {
                surjective: true,
                homeomorphism: true,
                counterexample: false,
            },
            summary: "F(u) = u; the Jacobian is the identity everywhere",
        },
        ProblemDescriptor {
            name: "linear_spd",
            dimension: Some(2),
            known_root: Some((vec![1.0 / 3.0, 1.0 / 3.0], vec![1.0, 1.0])),
            known_m_formula: Some(("1", |_r| 1.0)),
            hadamard: Some(HadamardBounds::new(0.0, 1.0)),
            tags: ProblemTags {
                surjective: true,
                homeomorphism: true,
                counterexample: false,
            },
            summary: "F(u) = A u with A = [[2,1],[1,2]]; eigenvalues 1 and 3",
        },
        ProblemDescriptor {
            name: "scalar_exp",
            dimension: Some(1),
            known_root: None,
            known_m_formula: Some(("e^R", |r| r.exp())),
            hadamard: None,
            tags: ProblemTags {
                surjective: false,
                homeomorphism: false,
                counterexample: true,
            },
            summary: "F(u) = e^u; m(R) = e^R at center 0, so e^u = 0 has no solution",
        },
        ProblemDescriptor {
            name: "monotone_cubic",
            dimension: None,
            known_root: Some((vec![1.0], vec![2.0])),
            known_m_formula: Some(("1", |_r| 1.0)),
            hadamard: Some(HadamardBounds::new(0.0, 1.0)),
            tags: ProblemTags {
                surjective: true,
                homeomorphism: true,
                counterexample: false,
            },
            summary: "F(u) = u + u^3 componentwise; F' >= I globally",
        },
        ProblemDescriptor {
            name: "trig_perturbed",
            dimension: None,
            known_root: Some((vec![0.0], vec![0.0])),
            known_m_formula: Some(("2 (bound)", |_r| 2.0)),
            hadamard: Some(HadamardBounds::new(0.0, 2.0)),
            tags: ProblemTags {
                surjective: true,
                homeomorphism: true,
                counterexample: false,
            },
            summary: "F(u) = u + 0.5 sin u componentwise; F' in [0.5, 1.5]",
        },
        ProblemDescriptor {
            name: "coupled_2d",
            dimension: Some(2),
            known_root: Some((vec![0.1, 0.2], {
                let u = DVector::from_vec(vec![0.1, 0.2]);
                Coupled2d.evaluate(&u).iter().copied().collect()
            })),
            known_m_formula: None,
            hadamard: None,
            tags: ProblemTags {
                surjective: false,
                homeomorphism: false,
                counterexample: false,
            },
            summary: "F(u1,u2) = (u1 + u2^3, u2 + u1^3); nonsingular on B(0, 0.7)",
        },
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::evaluate_residual;

    #[test]
    fn registry_has_all_required_problems() {
        let names: Vec<&str> = registry_list().iter().map(|d| d.name).collect();
        for required in [
            "identity",
            "linear_spd",
            "scalar_exp",
            "monotone_cubic",
            "trig_perturbed",
            "coupled_2d",
        ] {
            assert!(names.contains(&required), "missing {required}");
        }
    }

    #[test]
    fn known_roots_satisfy_their_equations() {
        for desc in registry_list() {
            if let Some((root, f)) = &desc.known_root {
                let p = registry_get(desc.name, root.len()).unwrap();
                let u = DVector::from_vec(root.clone());
                let rhs = DVector::from_vec(f.clone());
                let (_, g) = evaluate_residual(p.as_ref(), &u, &rhs).unwrap();
                assert!(g <= 1e-12, "{}: residual {g} at known root", desc.name);
            }
        }
    }

    #[test]
    fn scalar_exp_is_the_counterexample() {
        let desc = registry_list()
            .into_iter()
            .find(|d| d.name == "scalar_exp")
            .unwrap();
        assert!(desc.tags.counterexample);
        let (label, m) = desc.known_m_formula.unwrap();
        assert_eq!(label, "e^R");
        assert!((m(2.0) - 2.0_f64.exp()).abs() < 1e-15);
    }

    #[test]
    fn fixed_dimension_problems_reject_other_sizes() {
        assert!(registry_get("linear_spd", 3).is_none());
        assert!(registry_get("scalar_exp", 2).is_none());
        assert!(registry_get("coupled_2d", 1).is_none());
        assert!(registry_get("identity", 0).is_none());
        assert!(registry_get("no_such_problem", 1).is_none());
    }

    #[test]
    fn monotone_cubic_root_lookup() {
        let desc = registry_list()
            .into_iter()
            .find(|d| d.name == "monotone_cubic")
            .unwrap();
        let (root, f) = desc.known_root.unwrap();
        assert_eq!(root, vec![1.0]);
        assert_eq!(f, vec![2.0]);
    }
}
