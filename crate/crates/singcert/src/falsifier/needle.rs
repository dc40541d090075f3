//! Bracket-word control variations and their scaling.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::extremal::{advance_state, ControlSignal, ExtremalTrajectory};
use crate::linalg::{self, Mat, Vector};
use crate::model_core::{adapted_chart, MatrixGroupSystem, Model};

/// The word `exp(t_R f_{i_R}) o ... o exp(t_1 f_{i_1})` together with the
/// base point `t_bar` of its reversal.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NeedleWord {
    pub channels: Vec<usize>,
    pub t_vec: Vec<f64>,
    pub t_bar: Vec<f64>,
}

impl NeedleWord {
    pub fn new(channels: Vec<usize>, t_vec: Vec<f64>, t_bar: Vec<f64>) -> Result<Self> {
        if channels.is_empty() || channels.len() != t_vec.len() || channels.len() != t_bar.len() {
            return Err(Error::InvalidArgument("word channels, t_vec and t_bar need one common length".into()));
        }
        Ok(NeedleWord { channels, t_vec, t_bar })
    }

    pub fn len(&self) -> usize {
        self.channels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.channels.is_empty()
    }

    /// `(channel, amplitude)` of the `2R` unit-length pieces of `nu_t` on
    /// `[0, 2]`: `u^t` then the reversal `u_0`.
    fn pieces(&self) -> Vec<(usize, f64)> {
        let r = self.len() as f64;
        let mut out: Vec<(usize, f64)> = self.channels.iter().zip(&self.t_vec).map(|(&c, &t)| (c, r * t)).collect();
        for k in (0..self.len()).rev() {
            out.push((self.channels[k], -r * self.t_bar[k]));
        }
        out
    }

    /// `||nu_t||_{L^1}`.
    pub fn l1_norm(&self) -> f64 {
        self.t_vec.iter().chain(&self.t_bar).map(|v| v.abs()).sum()
    }

    /// Frame coordinates of the first-order displacement `sum (t_k - tbar_k) F_{i_k}`.
    pub fn linear_displacement(&self, sys: &MatrixGroupSystem) -> Vector {
        let mut a = Mat::zeros(sys.d, sys.d);
        for k in 0..self.len() {
            a += &sys.controlled[self.channels[k]] * (self.t_vec[k] - self.t_bar[k]);
        }
        sys.frame().coords(&a)
    }

    /// `nu_{t,eps}` placed at `start` as a piecewise-constant signal with `m` channels.
    pub fn overlay(&self, m: usize, start: f64, eps: f64) -> ControlSignal {
        let pieces = self.pieces();
        let r = self.len() as f64;
        let width = eps * eps / r;
        let breaks = (0..=pieces.len()).map(|k| start + width * k as f64).collect();
        let values = pieces
            .iter()
            .map(|&(c, amp)| {
                let mut v = vec![0.0; m];
                v[c] = amp / eps;
                v
            })
            .collect();
        ControlSignal::PiecewiseConstant { breaks, values }
    }

    /// Product of exponentials of the scaled word at the identity.
    pub fn unrolled(&self, sys: &MatrixGroupSystem, eps: f64) -> Mat {
        let r = self.len() as f64;
        let mut g = Mat::identity(sys.d, sys.d);
        for (c, amp) in self.pieces() {
            g *= linalg::expm(&(&sys.controlled[c] * (eps * amp / r)));
        }
        g
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NeedleVariation {
    pub s_bar: f64,
    pub word: NeedleWord,
    pub epsilon: f64,
    /// `nu_{t,eps}` on `[s_bar, s_bar + 2 eps^2]`, zero elsewhere.
    pub overlay: ControlSignal,
    /// `u_hat + overlay`.
    pub control: ControlSignal,
}

impl NeedleVariation {
    pub fn window(&self) -> (f64, f64) {
        (self.s_bar, self.s_bar + 2.0 * self.epsilon * self.epsilon)
    }

    /// `eps ||nu_t||_{L^1}`.
    pub fn overlay_l1(&self) -> f64 {
        self.epsilon * self.word.l1_norm()
    }
}

pub fn needle_variation(
    u_hat: &ControlSignal,
    horizon: f64,
    s_bar: f64,
    word: &NeedleWord,
    eps: f64,
) -> Result<NeedleVariation> {
    if !(eps > 0.0) {
        return Err(Error::InvalidArgument(format!("needle scale {eps} must be positive")));
    }
    if s_bar < 0.0 || s_bar + 2.0 * eps * eps > horizon {
        return Err(Error::InvalidArgument(format!(
            "needle window [{s_bar}, {}] leaves [0, {horizon}]",
            s_bar + 2.0 * eps * eps
        )));
    }
    let m = u_hat.m();
    if word.channels.iter().any(|&c| c >= m) {
        return Err(Error::InvalidArgument("needle channel out of range".into()));
    }
    let overlay = word.overlay(m, s_bar, eps);
    let control = ControlSignal::Sum { terms: vec![u_hat.clone(), overlay.clone()] };
    Ok(NeedleVariation { s_bar, word: word.clone(), epsilon: eps, overlay, control })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingReport {
    pub epsilons: Vec<f64>,
    /// `|x(S(2 eps^2)) - eps Z|` in the chart at the initial point.
    pub discrepancies: Vec<f64>,
    pub fitted_order: f64,
    /// Integrated flow against the unrolled product at the largest `eps`.
    pub composition_residual: f64,
    pub passed: bool,
}

/// RK4 on `g' = g sum nu_i A_i`, `substeps` steps per constant piece.
fn integrate_driftless(sys: &MatrixGroupSystem, nu: &ControlSignal, substeps: usize) -> Result<Mat> {
    let ControlSignal::PiecewiseConstant { breaks, values } = nu else {
        return Err(Error::InvalidArgument("driftless flow expects a piecewise-constant control".into()));
    };
    let mut g = Mat::identity(sys.d, sys.d);
    for (w, v) in breaks.windows(2).zip(values) {
        let mut a = Mat::zeros(sys.d, sys.d);
        for (i, vi) in v.iter().enumerate() {
            a += &sys.controlled[i] * *vi;
        }
        let h = (w[1] - w[0]) / substeps as f64;
        for _ in 0..substeps {
            let k1 = &g * &a;
            let k2 = (&g + &k1 * (0.5 * h)) * &a;
            let k3 = (&g + &k2 * (0.5 * h)) * &a;
            let k4 = (&g + &k3 * h) * &a;
            g += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        }
    }
    if g.iter().any(|v| !v.is_finite()) {
        return Err(Error::Integration("driftless flow blew up".into()));
    }
    Ok(g)
}

/// Compares `S(2 eps^2, 0, a, nu_{t,eps})` with `eps Z`, `Z` the eps-linear
/// term `sum (t_k - tbar_k) f_{i_k}`, and fits the order of the remainder.
pub fn driftless_scaling_check(sys: &MatrixGroupSystem, word: &NeedleWord, eps_grid: &[f64]) -> Result<ScalingReport> {
    if eps_grid.len() < 2 || eps_grid.windows(2).any(|w| w[1] >= w[0]) || eps_grid.last().is_some_and(|&e| e < 1e-3) {
        return Err(Error::InvalidArgument("eps grid must decrease with at least two values >= 1e-3".into()));
    }
    if word.channels.iter().any(|&c| c >= sys.m()) {
        return Err(Error::InvalidArgument("needle channel out of range".into()));
    }
    let eye = Mat::identity(sys.d, sys.d);
    let chart = adapted_chart(sys, &eye, &[])?;
    let z = word.linear_displacement(sys);
    let mut discrepancies = Vec::with_capacity(eps_grid.len());
    let mut composition_residual = 0.0;
    for (k, &eps) in eps_grid.iter().enumerate() {
        let nu = word.overlay(sys.m(), 0.0, eps);
        let g = integrate_driftless(sys, &nu, 64)?;
        if k == 0 {
            composition_residual = linalg::max_abs(&(&g - word.unrolled(sys, eps)));
        }
        let x = chart.inverse(&g)?;
        discrepancies.push((x - &z * eps).norm());
    }
    let exact = discrepancies.iter().all(|&d| d <= 1e-13);
    let fitted_order = if exact { f64::INFINITY } else { linalg::loglog_slope(eps_grid, &discrepancies) };
    Ok(ScalingReport {
        epsilons: eps_grid.to_vec(),
        discrepancies,
        fitted_order,
        composition_residual,
        passed: fitted_order >= 1.8 && composition_residual <= 1e-9,
    })
}

/// Chart coordinates, centered at `xi_hat(s_bar)`, of the terminal point
/// pulled back by the reference flow to `s_bar`.
pub fn needle_pullback_displacement(model: &Model, extremal: &ExtremalTrajectory, needle: &NeedleVariation) -> Result<Vector> {
    let sys = model
        .as_group()
        .ok_or_else(|| Error::Unsupported("needle pull-backs run on the group backend".into()))?;
    let (s0, s1) = needle.window();
    let m_s = extremal.flow_cache.at(model, &extremal.control, s0)?;
    let m_e = extremal.flow_cache.at(model, &extremal.control, s1)?;
    let m_c = advance_state(model, &m_s, &needle.control, s0, s1)?;
    let m_e_inv = m_e.try_inverse().ok_or_else(|| Error::Integration("singular flow matrix".into()))?;
    let m_s_inv = m_s.clone().try_inverse().ok_or_else(|| Error::Integration("singular flow matrix".into()))?;
    let rel = m_s_inv * m_c * m_e_inv * m_s;
    let chart = adapted_chart(sys, &Mat::identity(sys.d, sys.d), &[])?;
    chart.inverse(&rel)
}
