//! Empirical estimates of the derivative bounds `m(R)`, `M1(R)`, `M2(R)`
//! over a ball, and machine-checkable certificates for the trap-ball,
//! surjectivity-scan and growth-bound conditions.
//!
//! `m(R)` is a supremum over an uncountable ball; sampling yields a certified
//! lower bound only, so every certificate carries an explicit `empirical`
//! witness. For one-dimensional problems a dense grid sweep makes the
//! estimate tight to grid resolution.

use std::collections::BTreeMap;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::error::DsmError;
use crate::flow::{SolveResult, SolveStatus};
use crate::linalg::{singular_extremes, spectral_norm};
use crate::problem::{jacobian_at, Ball, NonlinearProblem};

/// Relative singular-value floor below which a Jacobian sample counts as
/// singular and `m_hat` becomes `+inf`.
const SINGULAR_RATIO: f64 = 1e-14;

/// Grid resolution of the extra 1-D interval sweep.
const GRID_POINTS_1D: usize = 1001;

/// Sampled bounds over a ball: `m_hat ~ sup ||[F'(u)]^-1||`,
/// `m1_hat ~ sup ||F'(u)||`, `m2_hat ~ sup ||F''(u)||`.
#[derive(Debug, Clone)]
pub struct ConditionEstimate {
    pub ball: Ball,
    /// Max of `1/sigma_min(F'(u))` over the samples; `+inf` on a singular hit.
    pub m_hat: f64,
    /// Max of `sigma_max(F'(u))` over the samples.
    pub m1_hat: f64,
    /// Max sampled directional-difference norm of `F'`; set by
    /// [`estimate_derivative_bounds`] only.
    pub m2_hat: Option<f64>,
    /// Number of Jacobian evaluation points actually examined.
    pub sample_count: usize,
    /// Sample attaining `m_hat`.
    pub witness_m: DVector<f64>,
}

/// Growth-bound constants: `||[F'(u)]^-1|| <= a ||u|| + b`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct HadamardBounds {
    pub a: f64,
    pub b: f64,
}

impl HadamardBounds {
    pub fn try_new(a: f64, b: f64) -> Result<Self, DsmError> {
        if a >= 0.0 && b > 0.0 {
            Ok(HadamardBounds { a, b })
        } else {
            Err(DsmError::ContractViolation(format!(
                "growth bound requires a >= 0 and b > 0, got a={a}, b={b}"
            )))
        }
    }

    pub fn new(a: f64, b: f64) -> Self {
        Self::try_new(a, b).expect("invalid growth-bound constants")
    }
}

/// Constants of the a-priori trajectory ball derived from a growth bound:
/// `sup_t ||u(t)|| <= c1` and `||u'(t)|| <= c2 e^(-t)`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct HadamardConstants {
    pub a: f64,
    pub b: f64,
    /// `b / a` (`+inf` in the degenerate `a = 0` branch).
    pub p: f64,
    pub c1: f64,
    pub c2: f64,
    pub u0_norm: f64,
    pub g0: f64,
}

/// Computes `p = b/a`, `c1 = (||u0|| + p) e^(a g0) - p`, `c2 = (a c1 + b) g0`.
///
/// For `a = 0` the bound is already constant and the degenerate constants
/// `c1 = ||u0||`, `c2 = b g0` apply.
pub fn hadamard_constants(
    bounds: HadamardBounds,
    u0_norm: f64,
    g0: f64,
) -> Result<HadamardConstants, DsmError> {
    if !(u0_norm >= 0.0 && g0 >= 0.0) {
        return Err(DsmError::ContractViolation(
            "hadamard_constants requires u0_norm >= 0 and g0 >= 0".into(),
        ));
    }
    let HadamardBounds { a, b } = bounds;
    let (p, c1, c2) = if a == 0.0 {
        (f64::INFINITY, u0_norm, b * g0)
    } else {
        let p = b / a;
        let c1 = (u0_norm + p) * (a * g0).exp() - p;
        let c2 = (a * c1 + b) * g0;
        (p, c1, c2)
    };
    Ok(HadamardConstants {
        a,
        b,
        p,
        c1,
        c2,
        u0_norm,
        g0,
    })
}

/// A named value recorded as certificate evidence.
#[derive(Debug, Clone, Serialize, PartialEq)]
#[serde(untagged)]
pub enum WitnessValue {
    Flag(bool),
    Real(f64),
    Int(u64),
    Vector(Vec<f64>),
    Text(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum CertificateKind {
    TrapBall,
    Surjectivity,
    Hadamard,
}

/// Outcome of one paper-condition check, with enough evidence to re-derive
/// the verdict from the stored witnesses and inputs alone.
#[derive(Debug, Clone, Serialize)]
pub struct Certificate {
    pub kind: CertificateKind,
    pub holds: bool,
    pub witnesses: BTreeMap<String, WitnessValue>,
    pub inputs_digest: BTreeMap<String, WitnessValue>,
}

fn unit_gaussian_direction(rng: &mut ChaCha8Rng, dim: usize) -> DVector<f64> {
    loop {
        let d = DVector::from_fn(dim, |_, _| rng.sample::<f64, _>(StandardNormal));
        let norm = d.norm();
        if norm > 1e-12 {
            return d / norm;
        }
    }
}

/// Uniform sample in the closed ball: Gaussian direction scaled by
/// `radius * U^(1/n)`.
fn sample_in_ball(rng: &mut ChaCha8Rng, ball: &Ball) -> DVector<f64> {
    let dim = ball.center.len();
    let dir = unit_gaussian_direction(rng, dim);
    let r = ball.radius * rng.random::<f64>().powf(1.0 / dim as f64);
    &ball.center + dir * r
}

/// Evaluation points for a ball estimate: the center first, then seeded
/// uniform samples, then (in one dimension) a dense interval grid.
fn estimate_points(ball: &Ball, sample_count: usize, seed: u64) -> Vec<DVector<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = Vec::with_capacity(sample_count + GRID_POINTS_1D);
    points.push(ball.center.clone());
    for _ in 1..sample_count {
        points.push(sample_in_ball(&mut rng, ball));
    }
    if ball.center.len() == 1 && ball.radius > 0.0 {
        let c = ball.center[0];
        for i in 0..GRID_POINTS_1D {
            let s = -1.0 + 2.0 * i as f64 / (GRID_POINTS_1D - 1) as f64;
            points.push(DVector::from_vec(vec![c + s * ball.radius]));
        }
    }
    points
}

fn estimate_over_points(
    problem: &dyn NonlinearProblem,
    ball: &Ball,
    points: Vec<DVector<f64>>,
    m2: Option<(&mut ChaCha8Rng, &mut f64)>,
) -> Result<ConditionEstimate, DsmError> {
    let mut m_hat = 0.0_f64;
    let mut m1_hat = 0.0_f64;
    let mut witness_m = ball.center.clone();
    let mut m2_state = m2;
    let sample_count = points.len();

    for u in points {
        let jac = jacobian_at(problem, &u)?;
        let (sigma_min, sigma_max) = singular_extremes(&jac);
        m1_hat = m1_hat.max(sigma_max);
        let inv_norm = if sigma_min < SINGULAR_RATIO * sigma_max || sigma_min == 0.0 {
            f64::INFINITY
        } else {
            1.0 / sigma_min
        };
        if inv_norm > m_hat {
            m_hat = inv_norm;
            witness_m = u.clone();
        }
        if let Some((dir_rng, m2_hat)) = m2_state.as_mut() {
            let dim = u.len();
            let dir = if dim == 1 {
                DVector::from_vec(vec![1.0])
            } else {
                unit_gaussian_direction(dir_rng, dim)
            };
            let h = 1e-4 * (1.0 + u.norm());
            let jac_plus = jacobian_at(problem, &(&u + &dir * h))?;
            let jac_minus = jacobian_at(problem, &(&u - &dir * h))?;
            let diff = (jac_plus - jac_minus) / (2.0 * h);
            **m2_hat = m2_hat.max(spectral_norm(&diff));
        }
    }

    Ok(ConditionEstimate {
        ball: ball.clone(),
        m_hat,
        m1_hat,
        m2_hat: None,
        sample_count,
        witness_m,
    })
}

/// Estimates `m(R) = sup ||[F'(u)]^-1||` and `M1(R) = sup ||F'(u)||` over the
/// ball by seeded sampling (center always included; dense grid sweep in 1-D).
pub fn estimate_m(
    problem: &dyn NonlinearProblem,
    ball: &Ball,
    sample_count: usize,
    seed: u64,
) -> Result<ConditionEstimate, DsmError> {
    assert!(sample_count >= 1, "sample_count must be >= 1");
    let points = estimate_points(ball, sample_count, seed);
    estimate_over_points(problem, ball, points, None)
}

/// Like [`estimate_m`] but additionally estimates
/// `M2(R) = sup ||F''(u)||` from central differences of `F'` along sampled
/// unit directions, `h = 1e-4 (1 + ||u||)`.
pub fn estimate_derivative_bounds(
    problem: &dyn NonlinearProblem,
    ball: &Ball,
    sample_count: usize,
    seed: u64,
) -> Result<ConditionEstimate, DsmError> {
    assert!(sample_count >= 1, "sample_count must be >= 1");
    let points = estimate_points(ball, sample_count, seed);
    // separate stream so the point sequence matches estimate_m exactly
    let mut dir_rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut m2_hat = 0.0_f64;
    let mut est = estimate_over_points(problem, ball, points, Some((&mut dir_rng, &mut m2_hat)))?;
    est.m2_hat = Some(m2_hat);
    Ok(est)
}

/// Checks the trap-ball condition `m_hat * g0 <= R` (boundary inclusive).
///
/// Total function: an infinite `m_hat` simply yields `holds = false`.
pub fn trap_ball_check(m_hat: f64, g0: f64, radius: f64) -> Certificate {
    let product = if m_hat.is_finite() { m_hat * g0 } else { f64::INFINITY };
    let holds = product <= radius;
    let slack = radius - product;
    let mut witnesses = BTreeMap::new();
    witnesses.insert("m_hat".into(), WitnessValue::Real(m_hat));
    witnesses.insert("g0".into(), WitnessValue::Real(g0));
    witnesses.insert("R".into(), WitnessValue::Real(radius));
    witnesses.insert("slack".into(), WitnessValue::Real(slack));
    witnesses.insert("empirical".into(), WitnessValue::Flag(true));
    let mut inputs = BTreeMap::new();
    inputs.insert("m_hat".into(), WitnessValue::Real(m_hat));
    inputs.insert("g0".into(), WitnessValue::Real(g0));
    inputs.insert("R".into(), WitnessValue::Real(radius));
    Certificate {
        kind: CertificateKind::TrapBall,
        holds,
        witnesses,
        inputs_digest: inputs,
    }
}

/// Tabulates `R / m_hat(R)` over the grid and applies a labeled heuristic
/// unboundedness verdict: holds iff the ratio grows from the smallest to the
/// largest `R` by at least the square root of the grid span ratio.
pub fn surjectivity_scan(
    problem: &dyn NonlinearProblem,
    u0: &DVector<f64>,
    r_grid: &[f64],
    sample_count: usize,
    seed: u64,
) -> Result<Certificate, DsmError> {
    if r_grid.is_empty() {
        return Err(DsmError::ContractViolation("empty R grid".into()));
    }
    if !r_grid.windows(2).all(|w| w[0] < w[1]) || r_grid[0] <= 0.0 {
        return Err(DsmError::ContractViolation(
            "R grid must be positive and strictly increasing".into(),
        ));
    }

    let mut m_hats = Vec::with_capacity(r_grid.len());
    let mut ratios = Vec::with_capacity(r_grid.len());
    for &radius in r_grid {
        let est = estimate_m(problem, &Ball::new(u0.clone(), radius), sample_count, seed)?;
        let ratio = if est.m_hat.is_finite() && est.m_hat > 0.0 {
            radius / est.m_hat
        } else {
            0.0
        };
        m_hats.push(est.m_hat);
        ratios.push(ratio);
    }

    let (argmax, &max_ratio) = ratios
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .expect("nonempty grid");
    let first = ratios[0];
    let last = *ratios.last().expect("nonempty grid");
    let required = (r_grid[r_grid.len() - 1] / r_grid[0]).sqrt();
    let holds = if first > 0.0 {
        last / first >= required
    } else {
        last > 0.0
    };

    let mut witnesses = BTreeMap::new();
    witnesses.insert("r_grid".into(), WitnessValue::Vector(r_grid.to_vec()));
    witnesses.insert("m_hat".into(), WitnessValue::Vector(m_hats));
    witnesses.insert("ratio".into(), WitnessValue::Vector(ratios));
    witnesses.insert("max_ratio".into(), WitnessValue::Real(max_ratio));
    witnesses.insert("argmax_r".into(), WitnessValue::Real(r_grid[argmax]));
    witnesses.insert(
        "growth_factor".into(),
        WitnessValue::Real(if first > 0.0 { last / first } else { f64::INFINITY }),
    );
    witnesses.insert("required_factor".into(), WitnessValue::Real(required));
    witnesses.insert("heuristic".into(), WitnessValue::Flag(true));
    witnesses.insert("empirical".into(), WitnessValue::Flag(true));

    let mut inputs = BTreeMap::new();
    inputs.insert("problem".into(), WitnessValue::Text(problem.name().into()));
    inputs.insert(
        "u0".into(),
        WitnessValue::Vector(u0.iter().copied().collect()),
    );
    inputs.insert("sample_count".into(), WitnessValue::Int(sample_count as u64));
    inputs.insert("seed".into(), WitnessValue::Int(seed));

    Ok(Certificate {
        kind: CertificateKind::Surjectivity,
        holds,
        witnesses,
        inputs_digest: inputs,
    })
}

/// Checks the convergence envelope
/// `||u(t) - u_final|| <= m_hat g(0) e^(-t) (1 + slack)` pointwise along a
/// converged trajectory. Returns the worst relative overshoot and the verdict.
pub fn verify_convergence_bound(
    result: &SolveResult,
    m_hat: f64,
    slack: f64,
) -> Result<(f64, bool), DsmError> {
    if result.status != SolveStatus::Converged {
        return Err(DsmError::ContractViolation(
            "convergence envelope requires a Converged trajectory".into(),
        ));
    }
    let g0 = result.trajectory.g0();
    let mut max_violation = f64::NEG_INFINITY;
    for pt in &result.trajectory.points {
        let bound = m_hat * g0 * (-pt.t).exp();
        let dist = (&pt.u - &result.u_final).norm();
        let violation = if bound > 0.0 {
            dist / bound - 1.0
        } else if dist <= bound {
            0.0
        } else {
            f64::INFINITY
        };
        max_violation = max_violation.max(violation);
    }
    Ok((max_violation, max_violation <= slack))
}
