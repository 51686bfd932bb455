//! Integration of the continuous Newton flow
//! `u' = -[F'(u)]^(-1) (F(u) - f), u(0) = u0`
//! with an embedded Dormand-Prince 4(5) pair and PI step control.
//!
//! Along the exact flow the residual norm `g(t) = ||F(u(t)) - f||` obeys
//! `g g' = -g^2`, so `g(t) = g(0) e^(-t)` independent of the problem. The
//! integrator records every accepted step so that this decay law, the
//! velocity bound and the convergence envelope can be checked a posteriori.

use nalgebra::DVector;
use serde::Serialize;

use crate::error::{check_dimension, DsmError};
use crate::linalg::lu_solve;
use crate::problem::{evaluate_residual, jacobian_at, NonlinearProblem};

/// Integrator and stopping configuration for [`solve_dsm`].
#[derive(Debug, Clone)]
pub struct FlowConfig {
    /// Stop with `Converged` once `g <= residual_tol`.
    pub residual_tol: f64,
    /// Abort horizon in flow time.
    pub t_max: f64,
    /// Relative local error tolerance of the embedded pair.
    pub rk_rel_tol: f64,
    /// Absolute local error tolerance of the embedded pair.
    pub rk_abs_tol: f64,
    pub max_step: f64,
    pub min_step: f64,
    pub initial_step: f64,
    /// Abort with `EscapedBall` once `||u - u0||` exceeds this radius.
    pub escape_radius: Option<f64>,
}

impl Default for FlowConfig {
    fn default() -> Self {
        FlowConfig {
            residual_tol: 1e-10,
            // residual shrinks by e^-40 ~ 4e-18, past double precision
            t_max: 40.0,
            rk_rel_tol: 1e-10,
            rk_abs_tol: 1e-12,
            max_step: 1.0,
            min_step: 1e-10,
            initial_step: 1e-2,
            escape_radius: None,
        }
    }
}

impl FlowConfig {
    pub fn validate(&self) -> Result<(), DsmError> {
        let ok = self.residual_tol > 0.0
            && self.t_max > 0.0
            && self.rk_rel_tol > 0.0
            && self.rk_abs_tol > 0.0
            && self.max_step > 0.0
            && self.min_step > 0.0
            && self.min_step <= self.max_step
            && self.initial_step > 0.0
            && self.escape_radius.map_or(true, |r| r >= 0.0);
        if ok {
            Ok(())
        } else {
            Err(DsmError::ContractViolation(
                "invalid flow configuration".into(),
            ))
        }
    }
}

/// One accepted integration step.
#[derive(Debug, Clone)]
pub struct TrajectoryPoint {
    /// Flow time.
    pub t: f64,
    /// State `u(t)`.
    pub u: DVector<f64>,
    /// Residual norm `g(t)`.
    pub g: f64,
    /// Flow velocity `u'(t)` at this point.
    pub velocity: DVector<f64>,
    pub step_accepted: bool,
}

impl TrajectoryPoint {
    pub fn velocity_norm(&self) -> f64 {
        self.velocity.norm()
    }
}

/// Time-ordered accepted steps of one flow integration.
#[derive(Debug, Clone, Default)]
pub struct Trajectory {
    pub points: Vec<TrajectoryPoint>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn t_end(&self) -> f64 {
        self.points.last().map_or(0.0, |p| p.t)
    }

    pub fn g0(&self) -> f64 {
        self.points.first().map_or(0.0, |p| p.g)
    }

    /// Dense output: cubic Hermite interpolation between accepted steps,
    /// clamped to the endpoint states outside the recorded span.
    pub fn sample_at(&self, t: f64) -> DVector<f64> {
        let pts = &self.points;
        assert!(!pts.is_empty(), "cannot sample an empty trajectory");
        if t <= pts[0].t {
            return pts[0].u.clone();
        }
        if t >= pts[pts.len() - 1].t {
            return pts[pts.len() - 1].u.clone();
        }
        let idx = pts.partition_point(|p| p.t <= t) - 1;
        let (p0, p1) = (&pts[idx], &pts[idx + 1]);
        let h = p1.t - p0.t;
        if h <= 0.0 {
            return p0.u.clone();
        }
        let s = (t - p0.t) / h;
        let s2 = s * s;
        let s3 = s2 * s;
        let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
        let h10 = s3 - 2.0 * s2 + s;
        let h01 = -2.0 * s3 + 3.0 * s2;
        let h11 = s3 - s2;
        &p0.u * h00 + &p0.velocity * (h10 * h) + &p1.u * h01 + &p1.velocity * (h11 * h)
    }
}

/// Terminal state of a flow integration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SolveStatus {
    Converged,
    EscapedBall,
    HorizonReached,
    SingularJacobian,
}

/// Outcome of [`solve_dsm`].
#[derive(Debug, Clone)]
pub struct SolveResult {
    pub status: SolveStatus,
    pub trajectory: Trajectory,
    pub u_final: DVector<f64>,
    pub g_final: f64,
}

/// Solves `F'(u) v = F(u) - f` by dense LU with partial pivoting.
///
/// The flow's right-hand side is `-v`. A pivot below `1e-12 ||F'(u)||_inf`
/// surfaces as [`DsmError::SingularJacobian`] carrying the state and pivot.
pub fn newton_direction(
    problem: &dyn NonlinearProblem,
    u: &DVector<f64>,
    f: &DVector<f64>,
) -> Result<DVector<f64>, DsmError> {
    let (residual, _) = evaluate_residual(problem, u, f)?;
    let jac = jacobian_at(problem, u)?;
    lu_solve(&jac, &residual).map_err(|sp| DsmError::SingularJacobian {
        point: u.clone(),
        pivot: sp.pivot,
    })
}

// Dormand-Prince 4(5) tableau (FSAL).
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
// difference between the 5th- and 4th-order weights
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const SAFETY: f64 = 0.9;
const PI_ALPHA: f64 = 0.17;
const PI_BETA: f64 = 0.04;
const MAX_STEPS: usize = 2_000_000;

enum RhsOutcome {
    Ok { velocity: DVector<f64>, g: f64 },
    Singular,
}

fn flow_rhs(
    problem: &dyn NonlinearProblem,
    u: &DVector<f64>,
    f: &DVector<f64>,
) -> Result<RhsOutcome, DsmError> {
    let (residual, g) = evaluate_residual(problem, u, f)?;
    let jac = jacobian_at(problem, u)?;
    match lu_solve(&jac, &residual) {
        Ok(v) => Ok(RhsOutcome::Ok { velocity: -v, g }),
        Err(_) => Ok(RhsOutcome::Singular),
    }
}

/// Integrates the flow from `u0` until the residual tolerance, the escape
/// radius, the time horizon, or a singular Jacobian stops it.
///
/// Mathematical failure modes are reported through [`SolveStatus`]; `Err` is
/// reserved for contract violations and non-finite evaluations.
pub fn solve_dsm(
    problem: &dyn NonlinearProblem,
    u0: &DVector<f64>,
    f: &DVector<f64>,
    config: &FlowConfig,
) -> Result<SolveResult, DsmError> {
    config.validate()?;
    check_dimension(problem.dimension(), u0.len(), "initial state u0")?;
    check_dimension(problem.dimension(), f.len(), "target f")?;

    let n = u0.len();
    let mut trajectory = Trajectory::default();
    let mut t = 0.0_f64;
    let mut u = u0.clone();

    let (mut velocity, mut g) = match flow_rhs(problem, &u, f)? {
        RhsOutcome::Ok { velocity, g } => (velocity, g),
        RhsOutcome::Singular => {
            let (_, g) = evaluate_residual(problem, &u, f)?;
            trajectory.points.push(TrajectoryPoint {
                t,
                u: u.clone(),
                g,
                velocity: DVector::zeros(n),
                step_accepted: true,
            });
            return Ok(SolveResult {
                status: SolveStatus::SingularJacobian,
                trajectory,
                u_final: u,
                g_final: g,
            });
        }
    };

    trajectory.points.push(TrajectoryPoint {
        t,
        u: u.clone(),
        g,
        velocity: velocity.clone(),
        step_accepted: true,
    });

    let finish = |status, trajectory: Trajectory, u: DVector<f64>, g| {
        Ok(SolveResult {
            status,
            trajectory,
            u_final: u,
            g_final: g,
        })
    };

    if g <= config.residual_tol {
        return finish(SolveStatus::Converged, trajectory, u, g);
    }

    let mut h = config.initial_step.min(config.max_step).min(config.t_max);
    let mut err_old = 1e-4_f64;

    for _ in 0..MAX_STEPS {
        h = h.min(config.t_max - t).max(config.min_step.min(config.t_max - t));
        let forced = h <= config.min_step * (1.0 + 1e-12);

        let k1 = velocity.clone();
        macro_rules! stage {
            ($u:expr) => {
                match flow_rhs(problem, &$u, f)? {
                    RhsOutcome::Ok { velocity, .. } => velocity,
                    RhsOutcome::Singular => {
                        return finish(SolveStatus::SingularJacobian, trajectory, u, g);
                    }
                }
            };
        }
        let k2 = stage!(&u + &k1 * (h * A21));
        let k3 = stage!(&u + &k1 * (h * A31) + &k2 * (h * A32));
        let k4 = stage!(&u + &k1 * (h * A41) + &k2 * (h * A42) + &k3 * (h * A43));
        let k5 =
            stage!(&u + &k1 * (h * A51) + &k2 * (h * A52) + &k3 * (h * A53) + &k4 * (h * A54));
        let k6 = stage!(
            &u + &k1 * (h * A61)
                + &k2 * (h * A62)
                + &k3 * (h * A63)
                + &k4 * (h * A64)
                + &k5 * (h * A65)
        );
        let u_new =
            &u + &k1 * (h * B1) + &k3 * (h * B3) + &k4 * (h * B4) + &k5 * (h * B5) + &k6 * (h * B6);
        // FSAL stage doubles as the velocity at the candidate point
        let (k7, g_new) = match flow_rhs(problem, &u_new, f)? {
            RhsOutcome::Ok { velocity, g } => (velocity, g),
            RhsOutcome::Singular => {
                return finish(SolveStatus::SingularJacobian, trajectory, u, g);
            }
        };

        // The transient of the flow shrinks with the residual (g, u' and all
        // higher time derivatives decay like e^-t together), so the error
        // scale is damped by the residual magnitude once g < 1. A scale based
        // on |u| alone would let the step grow unbounded late in the run and
        // lose the decay rate of g.
        let rho = g.max(g_new).min(1.0);
        let mut err_sq = 0.0_f64;
        for i in 0..n {
            let e_i = h
                * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
            let scale =
                (config.rk_abs_tol + config.rk_rel_tol * u[i].abs().max(u_new[i].abs())) * rho;
            err_sq += (e_i / scale) * (e_i / scale);
        }
        let err = (err_sq / n as f64).sqrt();

        if err <= 1.0 || forced {
            t += h;
            u = u_new;
            velocity = k7;
            g = g_new;
            trajectory.points.push(TrajectoryPoint {
                t,
                u: u.clone(),
                g,
                velocity: velocity.clone(),
                step_accepted: true,
            });

            if g <= config.residual_tol {
                return finish(SolveStatus::Converged, trajectory, u, g);
            }
            if let Some(radius) = config.escape_radius {
                if (&u - u0).norm() > radius {
                    return finish(SolveStatus::EscapedBall, trajectory, u, g);
                }
            }
            if t >= config.t_max * (1.0 - 1e-14) {
                return finish(SolveStatus::HorizonReached, trajectory, u, g);
            }

            let err_clamped = err.max(1e-10);
            let fac = (err_clamped.powf(PI_ALPHA) / err_old.powf(PI_BETA) / SAFETY)
                .clamp(0.2, 10.0);
            h = (h / fac).clamp(config.min_step, config.max_step);
            err_old = err_clamped.max(1e-4);
        } else {
            let fac = (err.powf(0.2) / SAFETY).clamp(1.1, 10.0);
            h = (h / fac).max(config.min_step);
        }
    }

    finish(SolveStatus::HorizonReached, trajectory, u, g)
}

/// Fit of the exponential residual law over a trajectory.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ResidualLawFit {
    /// Least-squares slope of `ln g(t)` against `t`; the law forces -1.
    pub slope: f64,
    /// Max pointwise deviation `|ln g(t_i) - (ln g(0) - t_i)|`.
    pub max_deviation: f64,
    pub pass: bool,
}

/// Checks `g(t) = g(0) e^(-t)` on a recorded trajectory by regressing
/// `ln g(t)` on `t`. Passes iff `|slope + 1| <= slope_tol` and the max
/// pointwise deviation stays within `10 * slope_tol`.
pub fn check_residual_law(
    trajectory: &Trajectory,
    slope_tol: f64,
) -> Result<ResidualLawFit, DsmError> {
    assert!(slope_tol > 0.0, "slope tolerance must be positive");
    let pts: Vec<(f64, f64)> = trajectory
        .points
        .iter()
        .filter(|p| p.g > 0.0)
        .map(|p| (p.t, p.g.ln()))
        .collect();
    if pts.len() < 10 {
        return Err(DsmError::InsufficientData(format!(
            "residual-law fit needs >= 10 points with g > 0, got {}",
            pts.len()
        )));
    }

    let n = pts.len() as f64;
    let mean_t = pts.iter().map(|(t, _)| t).sum::<f64>() / n;
    let mean_lg = pts.iter().map(|(_, lg)| lg).sum::<f64>() / n;
    let mut cov = 0.0;
    let mut var = 0.0;
    for (t, lg) in &pts {
        cov += (t - mean_t) * (lg - mean_lg);
        var += (t - mean_t) * (t - mean_t);
    }
    let slope = cov / var;

    let (t0, lg0) = pts[0];
    let max_deviation = pts
        .iter()
        .map(|(t, lg)| (lg - (lg0 - (t - t0))).abs())
        .fold(0.0_f64, f64::max);

    let pass = (slope + 1.0).abs() <= slope_tol && max_deviation <= 10.0 * slope_tol;
    Ok(ResidualLawFit {
        slope,
        max_deviation,
        pass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::suite::registry_get;
    use approx::assert_relative_eq;

    fn vec1(x: f64) -> DVector<f64> {
        DVector::from_vec(vec![x])
    }

    #[test]
    fn direction_identity() {
        let p = registry_get("identity", 1).unwrap();
        let v = newton_direction(p.as_ref(), &vec1(2.0), &vec1(1.0)).unwrap();
        assert_relative_eq!(v[0], 1.0, max_relative = 1e-14);
    }

    #[test]
    fn direction_exp_cancels_state() {
        // e^-u * (e^u - 0) = 1 for every u
        let p = registry_get("scalar_exp", 1).unwrap();
        let v = newton_direction(p.as_ref(), &vec1(5.0), &vec1(0.0)).unwrap();
        assert_relative_eq!(v[0], 1.0, max_relative = 1e-12);
    }

    #[test]
    fn direction_cubic() {
        let p = registry_get("monotone_cubic", 1).unwrap();
        let v = newton_direction(p.as_ref(), &vec1(1.0), &vec1(0.0)).unwrap();
        assert_relative_eq!(v[0], 0.5, max_relative = 1e-12);
    }

    #[test]
    fn solve_identity_converges_to_target() {
        let p = registry_get("identity", 1).unwrap();
        let result = solve_dsm(p.as_ref(), &vec1(2.0), &vec1(1.0), &FlowConfig::default()).unwrap();
        assert_eq!(result.status, SolveStatus::Converged);
        assert!((result.u_final[0] - 1.0).abs() < 1e-8);
        // closed form u(t) = 1 + e^-t
        for pt in &result.trajectory.points {
            assert!((pt.u[0] - (1.0 + (-pt.t).exp())).abs() < 1e-9);
        }
    }

    #[test]
    fn solve_cubic_finds_root() {
        let p = registry_get("monotone_cubic", 1).unwrap();
        let result = solve_dsm(p.as_ref(), &vec1(0.0), &vec1(2.0), &FlowConfig::default()).unwrap();
        assert_eq!(result.status, SolveStatus::Converged);
        assert!((result.u_final[0] - 1.0).abs() < 1e-8);
        assert!(result.g_final <= 1e-10);
    }

    #[test]
    fn solve_exp_escapes_ball() {
        // flow collapses to u' = -1, the iterate runs away while g decays
        let p = registry_get("scalar_exp", 1).unwrap();
        let config = FlowConfig {
            escape_radius: Some(10.0),
            ..FlowConfig::default()
        };
        let result = solve_dsm(p.as_ref(), &vec1(0.0), &vec1(0.0), &config).unwrap();
        assert_eq!(result.status, SolveStatus::EscapedBall);
        for pt in &result.trajectory.points {
            assert!((pt.u[0] + pt.t).abs() < 1e-7, "u(t) should track -t");
        }
    }

    #[test]
    fn solve_reports_horizon() {
        let p = registry_get("scalar_exp", 1).unwrap();
        let config = FlowConfig {
            t_max: 2.0,
            ..FlowConfig::default()
        };
        let result = solve_dsm(p.as_ref(), &vec1(0.0), &vec1(0.0), &config).unwrap();
        assert_eq!(result.status, SolveStatus::HorizonReached);
    }

    #[test]
    fn residual_monotone_on_accepted_steps() {
        let p = registry_get("monotone_cubic", 3).unwrap();
        let u0 = DVector::from_vec(vec![0.5, -1.0, 2.0]);
        let f = DVector::from_vec(vec![1.0, 0.0, 3.0]);
        let result = solve_dsm(p.as_ref(), &u0, &f, &FlowConfig::default()).unwrap();
        assert_eq!(result.status, SolveStatus::Converged);
        for w in result.trajectory.points.windows(2) {
            assert!(w[1].g < w[0].g);
        }
    }

    #[test]
    fn residual_law_on_identity_flow() {
        let p = registry_get("identity", 1).unwrap();
        // stop at 1e-8: below that the computed g hits the cancellation
        // floor eps * |u| and ln g turns into round-off noise
        let config = FlowConfig {
            residual_tol: 1e-8,
            ..FlowConfig::default()
        };
        let result = solve_dsm(p.as_ref(), &vec1(2.0), &vec1(1.0), &config).unwrap();
        let fit = check_residual_law(&result.trajectory, 1e-6).unwrap();
        assert!(fit.pass, "slope {} dev {}", fit.slope, fit.max_deviation);
        assert!((fit.slope + 1.0).abs() < 1e-6);
    }

    #[test]
    fn residual_law_on_divergent_exp_flow() {
        let p = registry_get("scalar_exp", 1).unwrap();
        let config = FlowConfig {
            escape_radius: Some(10.0),
            ..FlowConfig::default()
        };
        let result = solve_dsm(p.as_ref(), &vec1(0.0), &vec1(0.0), &config).unwrap();
        let fit = check_residual_law(&result.trajectory, 1e-6).unwrap();
        assert!(fit.pass, "slope {} dev {}", fit.slope, fit.max_deviation);
    }

    #[test]
    fn residual_law_on_synthetic_exact_decay() {
        let mut trajectory = Trajectory::default();
        for i in 0..50 {
            let t = 0.1 * i as f64;
            trajectory.points.push(TrajectoryPoint {
                t,
                u: vec1(0.0),
                g: 3.0 * (-t).exp(),
                velocity: vec1(0.0),
                step_accepted: true,
            });
        }
        let fit = check_residual_law(&trajectory, 1e-12).unwrap();
        assert!(fit.pass);
        assert_relative_eq!(fit.slope, -1.0, max_relative = 1e-12);
        assert!(fit.max_deviation < 1e-12);
    }

    #[test]
    fn residual_law_rejects_short_trajectory() {
        let mut trajectory = Trajectory::default();
        for i in 0..5 {
            trajectory.points.push(TrajectoryPoint {
                t: i as f64,
                u: vec1(0.0),
                g: (-(i as f64)).exp(),
                velocity: vec1(0.0),
                step_accepted: true,
            });
        }
        assert!(matches!(
            check_residual_law(&trajectory, 1e-6),
            Err(DsmError::InsufficientData(_))
        ));
    }

    #[test]
    fn hermite_sampling_matches_nodes_and_interior() {
        let p = registry_get("identity", 1).unwrap();
        let result = solve_dsm(p.as_ref(), &vec1(2.0), &vec1(1.0), &FlowConfig::default()).unwrap();
        let traj = &result.trajectory;
        let mid = traj.points[3].t;
        assert_relative_eq!(traj.sample_at(mid)[0], traj.points[3].u[0]);
        // interior sample against the closed form 1 + e^-t
        let t = 0.5 * (traj.points[3].t + traj.points[4].t);
        assert!((traj.sample_at(t)[0] - (1.0 + (-t).exp())).abs() < 1e-8);
    }

    #[test]
    fn converged_status_implies_residual_tolerance() {
        let p = registry_get("trig_perturbed", 2).unwrap();
        let u0 = DVector::from_vec(vec![1.0, -0.5]);
        let f = DVector::from_vec(vec![0.3, 0.2]);
        let config = FlowConfig::default();
        let result = solve_dsm(p.as_ref(), &u0, &f, &config).unwrap();
        assert_eq!(result.status, SolveStatus::Converged);
        let (_, g) = evaluate_residual(p.as_ref(), &result.u_final, &f).unwrap();
        assert!(g <= config.residual_tol);
    }
}
