//! Solver library for nonlinear operator equations `F(u) = f` via the
//! continuous Newton flow `u' = -[F'(u)]^(-1) (F(u) - f)`.
//!
//! The crate integrates the flow with an adaptive embedded Runge-Kutta 4(5)
//! pair, records full residual trajectories, estimates the derivative bounds
//! `m(R)`, `M1(R)`, `M2(R)` over balls by seeded sampling, evaluates trap-ball
//! and surjectivity certificates, and runs homotopy-path injectivity sweeps
//! along the segment `w(s) = (1-s) u0 + s v`.
//!
//! All state vectors are `nalgebra::DVector<f64>` and Jacobians are dense
//! `DMatrix<f64>`; the working space is R^n with the Euclidean norm.

pub mod certificates;
pub mod error;
pub mod flow;
pub mod homotopy;
pub mod linalg;
pub mod problem;
pub mod suite;

pub use certificates::{
    estimate_derivative_bounds, estimate_m, hadamard_constants, surjectivity_scan,
    trap_ball_check, verify_convergence_bound, Certificate, CertificateKind, ConditionEstimate,
    HadamardBounds, HadamardConstants, WitnessValue,
};
pub use error::DsmError;
pub use flow::{
    check_residual_law, newton_direction, solve_dsm, FlowConfig, ResidualLawFit, SolveResult,
    SolveStatus, Trajectory, TrajectoryPoint,
};
pub use homotopy::{
    injectivity_sweep, segment_path, stability_check, HomotopyResult, NodeLimit, PathSpec,
    StabilityOutcome, StabilityReport,
};
pub use problem::{evaluate_residual, finite_difference_jacobian, Ball, NonlinearProblem};
pub use suite::{registry_get, registry_list, ProblemDescriptor, ProblemTags};
