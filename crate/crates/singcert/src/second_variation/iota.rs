//! Cross-check of `H''_t = -G''_t o iota` with `G''_t = 1/2 D^2(chi o F_t)`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::extremal::{coadjoint_transport, ExtremalPoint, ExtremalTrajectory};
use crate::linalg::{Mat, Vector};
use crate::model_core::AdaptedChart;
use crate::second_variation::problem::SecondVariationProblem;
use crate::singular_geometry::Geometry;

/// A tangent vector `(omega, dx)` at time `t`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IotaSample {
    pub t: f64,
    pub omega: Vec<f64>,
    pub dx: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IotaEntry {
    pub t: f64,
    pub g_second: f64,
    pub minus_h_second: f64,
    pub rel_error: f64,
    pub order: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IotaReport {
    pub step: f64,
    pub entries: Vec<IotaEntry>,
    pub max_rel_error: f64,
    pub min_order: f64,
}

/// `H''_t(omega, dx) = 1/2 L^{-1}[(<omega, gdot^i> + a_i dx)_i]^2`.
pub fn h_second(problem: &SecondVariationProblem, sample: &IotaSample) -> Result<f64> {
    let s = problem.eval(sample.t)?;
    let omega = Vector::from_column_slice(&sample.omega);
    let dx = Vector::from_column_slice(&sample.dx);
    let v = s.z.transpose() * omega + s.a * dx;
    let linv = (-s.c).try_inverse().ok_or(Error::SglcFailure(f64::INFINITY))?;
    Ok(0.5 * v.dot(&(linv * &v)))
}

/// Evaluates `G''_t` by second differences of step `h` of `chi` along the
/// reference flow of the curve through `lambda(0)` with chart velocity
/// `iota(omega, dx) = (dx, -omega)` and compares with `-H''_t`. The reported
/// order comes from the steps `100h, 50h, 25h` (capped at 0.05).
pub fn iota_equivalence_check(
    problem: &SecondVariationProblem,
    geometry: &Geometry<'_>,
    extremal: &ExtremalTrajectory,
    chart: &AdaptedChart,
    samples: &[IotaSample],
    h: f64,
) -> Result<IotaReport> {
    let model = geometry.model;
    let sys = model
        .as_group()
        .ok_or_else(|| Error::Unsupported("the iota check runs on the group backend".into()))?;
    let n = chart.n();
    let entries = samples
        .par_iter()
        .map(|smp| -> Result<IotaEntry> {
            if smp.omega.len() != n || smp.dx.len() != n {
                return Err(Error::DimensionMismatch("iota sample size".into()));
            }
            let m_t: Mat = extremal.flow_cache.at(model, &extremal.control, smp.t)?;
            let omega = Vector::from_column_slice(&smp.omega);
            let dx = Vector::from_column_slice(&smp.dx);
            let chi = |s: f64| -> Result<f64> {
                let (q, p) = chart.lift(&(&dx * s), &(&chart.p_hat - &omega * s));
                let pt = ExtremalPoint { q: &q * &m_t, p: coadjoint_transport(sys, &p, &m_t)?, t: smp.t };
                geometry.chi_eval(&pt)
            };
            let chi0 = chi(0.0)?;
            let second = |s: f64| -> Result<f64> { Ok(0.5 * (chi(s)? - 2.0 * chi0 + chi(-s)?) / (s * s)) };
            let g = second(h)?;
            // order from a coarser ladder where truncation dominates roundoff
            let top = (100.0 * h).min(0.05);
            let ladder = [second(top)?, second(0.5 * top)?, second(0.25 * top)?];
            let d01 = (ladder[0] - ladder[1]).abs();
            let d12 = (ladder[1] - ladder[2]).abs();
            let order = if d12 > 0.0 { (d01 / d12).log2() } else { f64::INFINITY };
            let minus_h = -h_second(problem, smp)?;
            let scale = minus_h.abs().max(omega.norm_squared() + dx.norm_squared());
            let rel_error = (g - minus_h).abs() / scale.max(f64::MIN_POSITIVE);
            Ok(IotaEntry { t: smp.t, g_second: g, minus_h_second: minus_h, rel_error, order })
        })
        .collect::<Result<Vec<_>>>()?;
    let max_rel_error = entries.iter().map(|e| e.rel_error).fold(0.0, f64::max);
    let min_order = entries.iter().map(|e| e.order).fold(f64::INFINITY, f64::min);
    Ok(IotaReport { step: h, entries, max_rel_error, min_order })
}
