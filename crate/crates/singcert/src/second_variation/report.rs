use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::second_variation::problem::InitialSpace;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoercivityMethod {
    Galerkin,
    ConjugatePoint,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Coercive,
    NotCoercive,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Refinement {
    pub k: usize,
    pub margin: f64,
    pub kernel_dim: usize,
    pub constraint_rank: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetSample {
    pub t: f64,
    /// `det X(t) / det X(0)`.
    pub det: f64,
    pub min_singular_value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RhoResult {
    pub rho: f64,
    pub min_det: f64,
    pub coercive: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoercivityReport {
    pub method: CoercivityMethod,
    pub verdict: Verdict,
    /// Minimum restricted eigenvalue (Galerkin) or minimum normalized
    /// determinant over the arc for the reported `rho` (conjugate point).
    pub margin: f64,
    pub floor: f64,
    pub rho: f64,
    pub initial: InitialSpace,
    pub refinements: Vec<Refinement>,
    pub rho_sweep: Vec<RhoResult>,
    pub det_trace: Vec<DetSample>,
}

impl CoercivityReport {
    pub fn is_coercive(&self) -> bool {
        self.verdict == Verdict::Coercive
    }
}

/// Writes `t,det,min_singular_value` rows.
pub fn write_det_trace_csv<W: Write>(report: &CoercivityReport, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t", "det", "min_singular_value"])?;
    for s in &report.det_trace {
        w.serialize((s.t, s.det, s.min_singular_value))?;
    }
    w.flush()?;
    Ok(())
}
