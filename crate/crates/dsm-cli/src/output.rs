//! JSON output documents and trajectory trace files.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::Context;
use nalgebra::DVector;
use serde::Serialize;
use serde_json::Value;

use dsm_core::{SolveStatus, Trajectory};

/// Echo of everything that determines a run; re-running with an identical
/// manifest reproduces byte-identical JSON output within one build.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub subcommand: &'static str,
    pub problem: Option<String>,
    pub params: BTreeMap<&'static str, Value>,
    pub seed: u64,
    pub tool_version: &'static str,
}

impl RunManifest {
    pub fn new(subcommand: &'static str, problem: Option<&str>, seed: u64) -> Self {
        RunManifest {
            subcommand,
            problem: problem.map(str::to_owned),
            params: BTreeMap::new(),
            seed,
            tool_version: env!("CARGO_PKG_VERSION"),
        }
    }

    pub fn param(&mut self, key: &'static str, value: impl Serialize) {
        self.params
            .insert(key, serde_json::to_value(value).expect("serializable param"));
    }
}

pub fn vector_values(v: &DVector<f64>) -> Vec<f64> {
    v.iter().copied().collect()
}

pub fn status_name(status: SolveStatus) -> &'static str {
    match status {
        SolveStatus::Converged => "Converged",
        SolveStatus::EscapedBall => "EscapedBall",
        SolveStatus::HorizonReached => "HorizonReached",
        SolveStatus::SingularJacobian => "SingularJacobian",
    }
}

pub fn status_exit_code(status: SolveStatus) -> i32 {
    match status {
        SolveStatus::Converged => 0,
        SolveStatus::EscapedBall => 2,
        SolveStatus::HorizonReached => 3,
        SolveStatus::SingularJacobian => 4,
    }
}

pub fn print_document(doc: &impl Serialize) -> anyhow::Result<()> {
    let mut stdout = std::io::stdout().lock();
    serde_json::to_writer_pretty(&mut stdout, doc).context("writing JSON document")?;
    writeln!(stdout)?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TraceFormat {
    Csv,
    Json,
}

impl std::str::FromStr for TraceFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv" => Ok(TraceFormat::Csv),
            "json" => Ok(TraceFormat::Json),
            other => Err(format!("unknown trace format '{other}' (expected csv or json)")),
        }
    }
}

/// Writes a trajectory trace; CSV columns are
/// `t,g,velocity_norm,u_0,...,u_{n-1}` and the JSON variant carries the same
/// fields per point. Floats are printed with 17 significant digits so both
/// formats parse back to identical values.
pub fn write_trace(path: &Path, trajectory: &Trajectory, format: TraceFormat) -> anyhow::Result<()> {
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut out = BufWriter::new(file);
    match format {
        TraceFormat::Csv => {
            let dim = trajectory.points.first().map_or(0, |p| p.u.len());
            write!(out, "t,g,velocity_norm")?;
            for i in 0..dim {
                write!(out, ",u_{i}")?;
            }
            writeln!(out)?;
            for p in &trajectory.points {
                write!(out, "{:.16e},{:.16e},{:.16e}", p.t, p.g, p.velocity_norm())?;
                for x in p.u.iter() {
                    write!(out, ",{x:.16e}")?;
                }
                writeln!(out)?;
            }
        }
        TraceFormat::Json => {
            #[derive(Serialize)]
            struct Point {
                t: f64,
                g: f64,
                velocity_norm: f64,
                u: Vec<f64>,
            }
            let points: Vec<Point> = trajectory
                .points
                .iter()
                .map(|p| Point {
                    t: p.t,
                    g: p.g,
                    velocity_norm: p.velocity_norm(),
                    u: vector_values(&p.u),
                })
                .collect();
            serde_json::to_writer_pretty(&mut out, &points)?;
            writeln!(out)?;
        }
    }
    Ok(())
}
