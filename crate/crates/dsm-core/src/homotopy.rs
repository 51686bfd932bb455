//! Executable form of the segment-homotopy injectivity argument: flow the
//! continuous Newton dynamics from every node of `w(s) = (1-s) u0 + s v` and
//! test whether all limits coincide, plus an empirical check of the
//! perturbation stability `eta(t) <= c3 e^(-t) delta`.

use nalgebra::DVector;

use crate::error::{check_dimension, DsmError};
use crate::flow::{solve_dsm, FlowConfig, SolveStatus, Trajectory};
use crate::problem::NonlinearProblem;

/// Number of shared comparison times used by [`stability_check`].
const STABILITY_GRID: usize = 101;

/// Uniform node grid on the segment from `u_start` to `v_end`.
#[derive(Debug, Clone)]
pub struct PathSpec {
    pub u_start: DVector<f64>,
    pub v_end: DVector<f64>,
    /// Number of s-grid nodes on [0, 1]; the implied step is
    /// `1 / (node_count - 1)`.
    pub node_count: usize,
}

impl PathSpec {
    pub fn new(u_start: DVector<f64>, v_end: DVector<f64>, node_count: usize) -> Self {
        PathSpec {
            u_start,
            v_end,
            node_count,
        }
    }

    pub fn validate(&self) -> Result<(), DsmError> {
        check_dimension(self.u_start.len(), self.v_end.len(), "path endpoints")?;
        if self.node_count < 2 {
            return Err(DsmError::ContractViolation(
                "path needs at least 2 nodes".into(),
            ));
        }
        Ok(())
    }
}

/// Evaluates `w(s) = (1-s) u_start + s v_end`, with exact endpoints.
pub fn segment_path(spec: &PathSpec, s: f64) -> Result<DVector<f64>, DsmError> {
    if !(0.0..=1.0).contains(&s) {
        return Err(DsmError::ContractViolation(format!(
            "path parameter s = {s} outside [0, 1]"
        )));
    }
    if s == 0.0 {
        return Ok(spec.u_start.clone());
    }
    if s == 1.0 {
        return Ok(spec.v_end.clone());
    }
    Ok(&spec.u_start * (1.0 - s) + &spec.v_end * s)
}

/// Flow limit reached from one path node.
#[derive(Debug, Clone)]
pub struct NodeLimit {
    pub s: f64,
    pub status: SolveStatus,
    pub u_limit: DVector<f64>,
    pub g_final: f64,
}

/// Per-node limits and the injectivity verdict of a sweep.
#[derive(Debug, Clone)]
pub struct HomotopyResult {
    pub limits: Vec<NodeLimit>,
    /// True iff every node converged and the limits coincide within the
    /// coincidence tolerance.
    pub injective_verdict: bool,
    /// Max pairwise distance among converged limits.
    pub max_limit_spread: f64,
    /// Index of the first non-converged node, if any.
    pub first_failure: Option<usize>,
    pub per_node_traces: Option<Vec<Trajectory>>,
}

/// Runs [`solve_dsm`] from every node of the path and checks that all limits
/// coincide. A failed node (escape, horizon, singular Jacobian) makes the
/// verdict false; the per-node statuses stay available in `limits`.
pub fn injectivity_sweep(
    problem: &dyn NonlinearProblem,
    spec: &PathSpec,
    f: &DVector<f64>,
    config: &FlowConfig,
    coincidence_tol: f64,
    keep_traces: bool,
) -> Result<HomotopyResult, DsmError> {
    spec.validate()?;
    check_dimension(problem.dimension(), spec.u_start.len(), "path dimension")?;
    assert!(coincidence_tol > 0.0, "coincidence tolerance must be positive");

    let mut limits = Vec::with_capacity(spec.node_count);
    let mut traces = keep_traces.then(Vec::new);
    let mut first_failure = None;

    for j in 0..spec.node_count {
        let s = j as f64 / (spec.node_count - 1) as f64;
        let start = segment_path(spec, s)?;
        let result = solve_dsm(problem, &start, f, config)?;
        if result.status != SolveStatus::Converged && first_failure.is_none() {
            first_failure = Some(j);
        }
        limits.push(NodeLimit {
            s,
            status: result.status,
            u_limit: result.u_final.clone(),
            g_final: result.g_final,
        });
        if let Some(traces) = traces.as_mut() {
            traces.push(result.trajectory);
        }
    }

    let converged: Vec<&NodeLimit> = limits
        .iter()
        .filter(|l| l.status == SolveStatus::Converged)
        .collect();
    let mut max_limit_spread = 0.0_f64;
    for (i, a) in converged.iter().enumerate() {
        for b in &converged[i + 1..] {
            max_limit_spread = max_limit_spread.max((&a.u_limit - &b.u_limit).norm());
        }
    }
    let injective_verdict =
        first_failure.is_none() && converged.len() == limits.len() && max_limit_spread <= coincidence_tol;

    Ok(HomotopyResult {
        limits,
        injective_verdict,
        max_limit_spread,
        first_failure,
        per_node_traces: traces,
    })
}

/// Empirical constants of the stability estimate for one perturbed pair of
/// flows: `sup_ratio = sup_t eta(t)/delta` and
/// `decay_c3 = sup_t eta(t) e^t / delta`.
#[derive(Debug, Clone, Copy)]
pub struct StabilityReport {
    pub sup_ratio: f64,
    pub decay_c3: f64,
    pub pass: bool,
}

/// Outcome of [`stability_check`]; the comparison is meaningful only when
/// both flows converge.
#[derive(Debug, Clone)]
pub enum StabilityOutcome {
    Checked(StabilityReport),
    Inapplicable {
        base_status: SolveStatus,
        perturbed_status: SolveStatus,
    },
}

/// Integrates the flow from `u_init` and from `u_init + delta * delta_dir`,
/// compares the two states on a shared uniform time grid (cubic Hermite dense
/// output), and reports the stability constants. Passes iff both constants
/// are finite and `sup_ratio <= c_max`.
pub fn stability_check(
    problem: &dyn NonlinearProblem,
    u_init: &DVector<f64>,
    delta_dir: &DVector<f64>,
    delta: f64,
    f: &DVector<f64>,
    config: &FlowConfig,
    c_max: f64,
) -> Result<StabilityOutcome, DsmError> {
    check_dimension(problem.dimension(), u_init.len(), "stability start")?;
    check_dimension(problem.dimension(), delta_dir.len(), "perturbation direction")?;
    if delta < 0.0 {
        return Err(DsmError::ContractViolation(
            "perturbation size must be nonnegative".into(),
        ));
    }
    if delta == 0.0 {
        // identical initial data: eta is identically zero by convention
        return Ok(StabilityOutcome::Checked(StabilityReport {
            sup_ratio: 0.0,
            decay_c3: 0.0,
            pass: true,
        }));
    }

    let perturbed_start = u_init + delta_dir * delta;
    let base = solve_dsm(problem, u_init, f, config)?;
    let perturbed = solve_dsm(problem, &perturbed_start, f, config)?;
    if base.status != SolveStatus::Converged || perturbed.status != SolveStatus::Converged {
        return Ok(StabilityOutcome::Inapplicable {
            base_status: base.status,
            perturbed_status: perturbed.status,
        });
    }

    // the shared grid ends where the shorter of the two records ends; past
    // its own end each trajectory is clamped to the converged limit anyway
    let t_end = base.trajectory.t_end().min(perturbed.trajectory.t_end());
    let mut sup_ratio = 0.0_f64;
    let mut decay_c3 = 0.0_f64;
    for i in 0..STABILITY_GRID {
        let t = t_end * i as f64 / (STABILITY_GRID - 1) as f64;
        let eta = (base.trajectory.sample_at(t) - perturbed.trajectory.sample_at(t)).norm();
        sup_ratio = sup_ratio.max(eta / delta);
        decay_c3 = decay_c3.max(eta * t.exp() / delta);
    }
    let pass = sup_ratio.is_finite() && decay_c3.is_finite() && sup_ratio <= c_max;
    Ok(StabilityOutcome::Checked(StabilityReport {
        sup_ratio,
        decay_c3,
        pass,
    }))
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
    fn path_midpoint_and_endpoints() {
        let spec = PathSpec::new(vec1(0.0), vec1(4.0), 11);
        assert_eq!(segment_path(&spec, 0.5).unwrap()[0], 2.0);
        assert_eq!(segment_path(&spec, 0.0).unwrap(), spec.u_start);
        assert_eq!(segment_path(&spec, 1.0).unwrap(), spec.v_end);

        let spec2 = PathSpec::new(
            DVector::from_vec(vec![1.0, 0.0]),
            DVector::from_vec(vec![0.0, 1.0]),
            5,
        );
        let w = segment_path(&spec2, 0.25).unwrap();
        assert_eq!(w[0], 0.75);
        assert_eq!(w[1], 0.25);

        assert!(segment_path(&spec, 1.5).is_err());
        assert!(segment_path(&spec, -0.1).is_err());
    }

    #[test]
    fn cubic_sweep_is_injective() {
        let p = registry_get("monotone_cubic", 1).unwrap();
        let spec = PathSpec::new(vec1(0.0), vec1(5.0), 11);
        let result = injectivity_sweep(
            p.as_ref(),
            &spec,
            &vec1(2.0),
            &FlowConfig::default(),
            1e-7,
            false,
        )
        .unwrap();
        assert!(result.injective_verdict);
        assert!(result.max_limit_spread <= 1e-7);
        for limit in &result.limits {
            assert!((limit.u_limit[0] - 1.0).abs() < 1e-7);
        }
    }

    #[test]
    fn linear_sweep_limits_hit_the_solution() {
        let p = registry_get("linear_spd", 2).unwrap();
        let spec = PathSpec::new(
            DVector::from_vec(vec![3.0, -2.0]),
            DVector::from_vec(vec![-1.0, 4.0]),
            7,
        );
        let f = DVector::from_vec(vec![1.0, 1.0]);
        let result =
            injectivity_sweep(p.as_ref(), &spec, &f, &FlowConfig::default(), 1e-7, false).unwrap();
        assert!(result.injective_verdict);
        for limit in &result.limits {
            assert!((limit.u_limit[0] - 1.0 / 3.0).abs() < 1e-7);
            assert!((limit.u_limit[1] - 1.0 / 3.0).abs() < 1e-7);
        }
    }

    #[test]
    fn exp_sweep_fails_every_node() {
        let p = registry_get("scalar_exp", 1).unwrap();
        let spec = PathSpec::new(vec1(0.0), vec1(1.0), 5);
        let config = FlowConfig {
            escape_radius: Some(10.0),
            ..FlowConfig::default()
        };
        let result =
            injectivity_sweep(p.as_ref(), &spec, &vec1(0.0), &config, 1e-7, true).unwrap();
        assert!(!result.injective_verdict);
        assert_eq!(result.first_failure, Some(0));
        for limit in &result.limits {
            assert_ne!(limit.status, SolveStatus::Converged);
        }
        assert_eq!(result.per_node_traces.as_ref().unwrap().len(), 5);
    }

    #[test]
    fn stability_of_linear_flow_is_exact() {
        let p = registry_get("identity", 1).unwrap();
        // eta(t) = delta e^-t is only resolvable while it sits above the
        // representation noise eps * |u| e^t; a 1e-6 stopping tolerance keeps
        // the whole comparison horizon inside that regime
        let config = FlowConfig {
            residual_tol: 1e-6,
            ..FlowConfig::default()
        };
        let outcome = stability_check(
            p.as_ref(),
            &vec1(2.0),
            &vec1(1.0),
            1e-3,
            &vec1(1.0),
            &config,
            100.0,
        )
        .unwrap();
        let StabilityOutcome::Checked(report) = outcome else {
            panic!("check should apply");
        };
        assert!(report.pass);
        assert_relative_eq!(report.sup_ratio, 1.0, max_relative = 1e-6);
        assert_relative_eq!(report.decay_c3, 1.0, max_relative = 1e-6);
    }

    #[test]
    fn stability_of_cubic_flow_is_contractive() {
        let p = registry_get("monotone_cubic", 1).unwrap();
        let outcome = stability_check(
            p.as_ref(),
            &vec1(0.5),
            &vec1(1.0),
            1e-4,
            &vec1(2.0),
            &FlowConfig::default(),
            10.0,
        )
        .unwrap();
        let StabilityOutcome::Checked(report) = outcome else {
            panic!("check should apply");
        };
        assert!(report.pass);
        assert!(report.sup_ratio <= 10.0);
        assert!(report.decay_c3.is_finite());
    }

    #[test]
    fn stability_zero_delta_convention() {
        let p = registry_get("identity", 1).unwrap();
        let outcome = stability_check(
            p.as_ref(),
            &vec1(2.0),
            &vec1(1.0),
            0.0,
            &vec1(1.0),
            &FlowConfig::default(),
            100.0,
        )
        .unwrap();
        let StabilityOutcome::Checked(report) = outcome else {
            panic!("check should apply");
        };
        assert_eq!(report.sup_ratio, 0.0);
        assert_eq!(report.decay_c3, 0.0);
        assert!(report.pass);
    }

    #[test]
    fn stability_inapplicable_on_divergent_flow() {
        let p = registry_get("scalar_exp", 1).unwrap();
        let config = FlowConfig {
            escape_radius: Some(5.0),
            ..FlowConfig::default()
        };
        let outcome = stability_check(
            p.as_ref(),
            &vec1(0.0),
            &vec1(1.0),
            1e-3,
            &vec1(0.0),
            &config,
            100.0,
        )
        .unwrap();
        assert!(matches!(outcome, StabilityOutcome::Inapplicable { .. }));
    }

    proptest! {
        #[test]
        fn path_is_affine_in_s(s in 0.0_f64..1.0) {
            let spec = PathSpec::new(
                DVector::from_vec(vec![1.0, -2.0]),
                DVector::from_vec(vec![3.0, 5.0]),
                11,
            );
            let w = segment_path(&spec, s).unwrap();
            let step = &spec.v_end - &spec.u_start;
            let expect = &spec.u_start + &step * s;
            prop_assert!((w - expect).norm() <= 1e-12);
        }
    }
}
