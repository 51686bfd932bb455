//! `dsm` — command-line front end for the continuous Newton flow solver.
//!
//! Subcommands: `solve`, `certify`, `scan`, `homotopy`, `problems`. Every
//! command emits a JSON document on stdout that echoes its full run manifest
//! (problem, parameters, seed, tool version), so identical invocations
//! reproduce identical output.

mod output;

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nalgebra::DVector;
use serde_json::json;

use dsm_core::{
    estimate_derivative_bounds, evaluate_residual, hadamard_constants, injectivity_sweep,
    registry_get, registry_list, solve_dsm, surjectivity_scan, trap_ball_check, Ball, FlowConfig,
    HadamardBounds, NonlinearProblem, PathSpec,
};

use output::{
    print_document, status_exit_code, status_name, vector_values, write_trace, RunManifest,
    TraceFormat,
};

#[derive(Parser)]
#[command(name = "dsm", version, about = "Continuous Newton flow solver and certificate checker")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct FlowArgs {
    /// Residual tolerance: stop once ||F(u) - f|| <= tol.
    #[arg(long, default_value_t = 1e-10)]
    tol: f64,
    /// Flow-time horizon.
    #[arg(long = "t-max", default_value_t = 40.0)]
    t_max: f64,
    /// Abort once ||u - u0|| exceeds this radius.
    #[arg(long = "escape-radius")]
    escape_radius: Option<f64>,
    /// Relative local error tolerance of the integrator.
    #[arg(long = "rk-rel-tol", default_value_t = 1e-10)]
    rk_rel_tol: f64,
    /// Absolute local error tolerance of the integrator.
    #[arg(long = "rk-abs-tol", default_value_t = 1e-12)]
    rk_abs_tol: f64,
}

impl FlowArgs {
    fn config(&self) -> FlowConfig {
        FlowConfig {
            residual_tol: self.tol,
            t_max: self.t_max,
            rk_rel_tol: self.rk_rel_tol,
            rk_abs_tol: self.rk_abs_tol,
            escape_radius: self.escape_radius,
            ..FlowConfig::default()
        }
    }

    fn record(&self, manifest: &mut RunManifest) {
        manifest.param("tol", self.tol);
        manifest.param("t_max", self.t_max);
        manifest.param("escape_radius", self.escape_radius);
        manifest.param("rk_rel_tol", self.rk_rel_tol);
        manifest.param("rk_abs_tol", self.rk_abs_tol);
    }
}

#[derive(Subcommand)]
enum Command {
    /// Integrate the flow from u0 and report the limit.
    Solve {
        #[arg(long)]
        problem: String,
        /// Initial state, comma-separated decimals.
        #[arg(long)]
        u0: String,
        /// Right-hand side f, comma-separated decimals.
        #[arg(long)]
        f: String,
        #[command(flatten)]
        flow: FlowArgs,
        /// Write the trajectory trace to this path.
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Trace format: csv or json.
        #[arg(long, default_value = "csv")]
        format: TraceFormat,
    },
    /// Estimate m(R), M1(R), M2(R) and check the trap-ball condition.
    Certify {
        #[arg(long)]
        problem: String,
        #[arg(long)]
        u0: String,
        #[arg(long)]
        f: String,
        /// Ball radius R around u0.
        #[arg(long = "R")]
        radius: f64,
        #[arg(long, default_value_t = 2000)]
        samples: usize,
        #[arg(long, env = "DSM_SEED", default_value_t = 7)]
        seed: u64,
        /// Growth-bound constant a (with --b enables the Hadamard constants).
        #[arg(long, requires = "b")]
        a: Option<f64>,
        /// Growth-bound constant b.
        #[arg(long, requires = "a")]
        b: Option<f64>,
    },
    /// Tabulate R / m(R) over a radius grid.
    Scan {
        #[arg(long)]
        problem: String,
        #[arg(long)]
        u0: String,
        /// Radii, comma-separated, strictly increasing.
        #[arg(long = "R-grid")]
        r_grid: String,
        #[arg(long, default_value_t = 2000)]
        samples: usize,
        #[arg(long, env = "DSM_SEED", default_value_t = 7)]
        seed: u64,
    },
    /// Flow from every node of the segment path u0 -> v and compare limits.
    Homotopy {
        #[arg(long)]
        problem: String,
        #[arg(long)]
        u0: String,
        /// Path endpoint v, comma-separated decimals.
        #[arg(long)]
        v: String,
        #[arg(long)]
        f: String,
        #[arg(long, default_value_t = 11)]
        nodes: usize,
        /// Max pairwise distance among limits still counted as coincident.
        #[arg(long = "coincidence-tol", default_value_t = 1e-7)]
        coincidence_tol: f64,
        #[command(flatten)]
        flow: FlowArgs,
    },
    /// List the built-in problem registry.
    Problems,
}

fn parse_vector(text: &str, what: &str) -> Result<DVector<f64>, String> {
    let values: Result<Vec<f64>, _> = text
        .split(',')
        .map(|part| part.trim().parse::<f64>())
        .collect();
    match values {
        Ok(v) if !v.is_empty() => Ok(DVector::from_vec(v)),
        _ => Err(format!("could not parse {what} '{text}' as comma-separated decimals")),
    }
}

fn lookup_problem(name: &str, dim: usize) -> Result<Box<dyn NonlinearProblem>, String> {
    registry_get(name, dim).ok_or_else(|| {
        let known: Vec<&str> = registry_list().iter().map(|d| d.name).collect();
        format!(
            "unknown problem '{name}' at dimension {dim}; registered problems: {}",
            known.join(", ")
        )
    })
}

fn usage_error(message: &str) -> ExitCode {
    eprintln!("error: {message}");
    ExitCode::from(1)
}

fn run() -> Result<ExitCode, anyhow::Error> {
    match Cli::parse().command {
        Command::Solve {
            problem,
            u0,
            f,
            flow,
            trace,
            format,
        } => {
            let u0 = match parse_vector(&u0, "--u0") {
                Ok(v) => v,
                Err(e) => return Ok(usage_error(&e)),
            };
            let f = match parse_vector(&f, "--f") {
                Ok(v) => v,
                Err(e) => return Ok(usage_error(&e)),
            };
            let p = match lookup_problem(&problem, u0.len()) {
                Ok(p) => p,
                Err(e) => return Ok(usage_error(&e)),
            };
            if f.len() != u0.len() {
                return Ok(usage_error("--u0 and --f must have the same dimension"));
            }

            let mut manifest = RunManifest::new("solve", Some(&problem), 0);
            manifest.param("u0", vector_values(&u0));
            manifest.param("f", vector_values(&f));
            flow.record(&mut manifest);

            let result = solve_dsm(p.as_ref(), &u0, &f, &flow.config())?;
            if let Some(path) = trace {
                write_trace(&path, &result.trajectory, format)?;
            }
            let doc = json!({
                "manifest": manifest,
                "status": status_name(result.status),
                "u_final": vector_values(&result.u_final),
                "g_final": result.g_final,
                "steps": result.trajectory.len() - 1,
                "t_end": result.trajectory.t_end(),
            });
            print_document(&doc)?;
            Ok(ExitCode::from(status_exit_code(result.status) as u8))
        }

        Command::Certify {
            problem,
            u0,
            f,
            radius,
            samples,
            seed,
            a,
            b,
        } => {
            let u0 = match parse_vector(&u0, "--u0") {
                Ok(v) => v,
                Err(e) => return Ok(usage_error(&e)),
            };
            let f = match parse_vector(&f, "--f") {
                Ok(v) => v,
                Err(e) => return Ok(usage_error(&e)),
            };
            let p = match lookup_problem(&problem, u0.len()) {
                Ok(p) => p,
                Err(e) => return Ok(usage_error(&e)),
            };
            if f.len() != u0.len() {
                return Ok(usage_error("--u0 and --f must have the same dimension"));
            }
            if radius <= 0.0 {
                return Ok(usage_error("--R must be positive"));
            }

            let mut manifest = RunManifest::new("certify", Some(&problem), seed);
            manifest.param("u0", vector_values(&u0));
            manifest.param("f", vector_values(&f));
            manifest.param("R", radius);
            manifest.param("samples", samples);
            manifest.param("a", a);
            manifest.param("b", b);

            let (_, g0) = evaluate_residual(p.as_ref(), &u0, &f)?;
            let ball = Ball::new(u0.clone(), radius);
            let estimate = estimate_derivative_bounds(p.as_ref(), &ball, samples, seed)?;
            let trap = trap_ball_check(estimate.m_hat, g0, radius);

            let constants = match (a, b) {
                (Some(a), Some(b)) => {
                    let bounds = match HadamardBounds::try_new(a, b) {
                        Ok(bounds) => bounds,
                        Err(e) => return Ok(usage_error(&e.to_string())),
                    };
                    Some(hadamard_constants(bounds, u0.norm(), g0)?)
                }
                _ => None,
            };

            let doc = json!({
                "manifest": manifest,
                "g0": g0,
                "estimate": {
                    "m_hat": estimate.m_hat,
                    "M1_hat": estimate.m1_hat,
                    "M2_hat": estimate.m2_hat,
                    "sample_count": estimate.sample_count,
                    "witness_m": vector_values(&estimate.witness_m),
                    "ball": { "center": vector_values(&ball.center), "radius": ball.radius },
                },
                "trap_ball": trap,
                "hadamard_constants": constants,
            });
            print_document(&doc)?;
            Ok(ExitCode::from(if trap.holds { 0 } else { 2 }))
        }

        Command::Scan {
            problem,
            u0,
            r_grid,
            samples,
            seed,
        } => {
            let u0 = match parse_vector(&u0, "--u0") {
                Ok(v) => v,
                Err(e) => return Ok(usage_error(&e)),
            };
            let grid = match parse_vector(&r_grid, "--R-grid") {
                Ok(v) => v.iter().copied().collect::<Vec<f64>>(),
                Err(e) => return Ok(usage_error(&e)),
            };
            let p = match lookup_problem(&problem, u0.len()) {
                Ok(p) => p,
                Err(e) => return Ok(usage_error(&e)),
            };

            let mut manifest = RunManifest::new("scan", Some(&problem), seed);
            manifest.param("u0", vector_values(&u0));
            manifest.param("R_grid", &grid);
            manifest.param("samples", samples);

            let cert = match surjectivity_scan(p.as_ref(), &u0, &grid, samples, seed) {
                Ok(cert) => cert,
                Err(e) => return Ok(usage_error(&e.to_string())),
            };
            let doc = json!({ "manifest": manifest, "certificate": cert });
            print_document(&doc)?;
            Ok(ExitCode::SUCCESS)
        }

        Command::Homotopy {
            problem,
            u0,
            v,
            f,
            nodes,
            coincidence_tol,
            flow,
        } => {
            let u0 = match parse_vector(&u0, "--u0") {
                Ok(v) => v,
                Err(e) => return Ok(usage_error(&e)),
            };
            let v = match parse_vector(&v, "--v") {
                Ok(v) => v,
                Err(e) => return Ok(usage_error(&e)),
            };
            let f = match parse_vector(&f, "--f") {
                Ok(v) => v,
                Err(e) => return Ok(usage_error(&e)),
            };
            let p = match lookup_problem(&problem, u0.len()) {
                Ok(p) => p,
                Err(e) => return Ok(usage_error(&e)),
            };
            if v.len() != u0.len() || f.len() != u0.len() {
                return Ok(usage_error("--u0, --v and --f must share one dimension"));
            }
            if nodes < 2 {
                return Ok(usage_error("--nodes must be at least 2"));
            }

            let mut manifest = RunManifest::new("homotopy", Some(&problem), 0);
            manifest.param("u0", vector_values(&u0));
            manifest.param("v", vector_values(&v));
            manifest.param("f", vector_values(&f));
            manifest.param("nodes", nodes);
            manifest.param("coincidence_tol", coincidence_tol);
            flow.record(&mut manifest);

            let spec = PathSpec::new(u0, v, nodes);
            let result =
                injectivity_sweep(p.as_ref(), &spec, &f, &flow.config(), coincidence_tol, false)?;
            let node_docs: Vec<serde_json::Value> = result
                .limits
                .iter()
                .map(|l| {
                    json!({
                        "s": l.s,
                        "status": status_name(l.status),
                        "u_limit": vector_values(&l.u_limit),
                        "g_final": l.g_final,
                    })
                })
                .collect();
            let doc = json!({
                "manifest": manifest,
                "nodes": node_docs,
                "verdict": result.injective_verdict,
                "max_limit_spread": result.max_limit_spread,
                "first_failure": result.first_failure,
            });
            print_document(&doc)?;
            Ok(ExitCode::from(if result.injective_verdict { 0 } else { 2 }))
        }

        Command::Problems => {
            let mut problems = Vec::new();
            for desc in registry_list() {
                let known_root = desc.known_root.as_ref().map(|(root, f)| {
                    let mut m = BTreeMap::new();
                    m.insert("root", root.clone());
                    m.insert("f", f.clone());
                    m
                });
                problems.push(json!({
                    "name": desc.name,
                    "dimension": desc.dimension,
                    "known_root": known_root,
                    "m_formula": desc.known_m_formula.map(|(label, _)| label),
                    "hadamard": desc.hadamard,
                    "tags": desc.tags,
                    "summary": desc.summary,
                }));
            }
            let doc = json!({
                "manifest": RunManifest::new("problems", None, 0),
                "problems": problems,
            });
            print_document(&doc)?;
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(1)
        }
    }
}
