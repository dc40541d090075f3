//! Control signals on a time interval.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Vector;

/// Which one-sided limit to take at a breakpoint.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

/// Control signal `t -> u(t) in R^m`.
///
/// Piecewise-constant signals vanish outside `[breaks[0], breaks[last])` so
/// they can be overlaid on other signals; piecewise-cubic signals are clamped
/// to their end values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ControlSignal {
    Zero {
        m: usize,
    },
    Constant {
        value: Vec<f64>,
    },
    PiecewiseConstant {
        breaks: Vec<f64>,
        values: Vec<Vec<f64>>,
    },
    /// Cubic Hermite interpolation of values and slopes at the knots.
    PiecewiseCubic {
        knots: Vec<f64>,
        values: Vec<Vec<f64>>,
        slopes: Vec<Vec<f64>>,
    },
    /// `u_i(t) = sum_k cos[k][i] cos(2 pi k t / period) + sin[k][i] sin(2 pi k t / period)`.
    Fourier {
        period: f64,
        cos: Vec<Vec<f64>>,
        sin: Vec<Vec<f64>>,
    },
    Sum {
        terms: Vec<ControlSignal>,
    },
    /// `amplitude * inner((t - offset) * time_factor)`.
    Scaled {
        inner: Box<ControlSignal>,
        offset: f64,
        time_factor: f64,
        amplitude: f64,
    },
}

fn locate(breaks: &[f64], t: f64, side: Side) -> Option<usize> {
    let n = breaks.len();
    if n < 2 {
        return None;
    }
    let inside = match side {
        Side::Right => t >= breaks[0] && t < breaks[n - 1],
        Side::Left => t > breaks[0] && t <= breaks[n - 1],
    };
    if !inside {
        return None;
    }
    let k = match side {
        Side::Right => breaks.partition_point(|&b| b <= t) - 1,
        Side::Left => breaks.partition_point(|&b| b < t) - 1,
    };
    Some(k.min(n - 2))
}

impl ControlSignal {
    pub fn zero(m: usize) -> Self {
        ControlSignal::Zero { m }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            ControlSignal::Zero { .. } => true,
            ControlSignal::Constant { value } => value.iter().all(|v| *v == 0.0),
            ControlSignal::Sum { terms } => terms.iter().all(|t| t.is_zero()),
            ControlSignal::Scaled { inner, amplitude, .. } => *amplitude == 0.0 || inner.is_zero(),
            _ => false,
        }
    }

    /// Number of channels.
    pub fn m(&self) -> usize {
        match self {
            ControlSignal::Zero { m } => *m,
            ControlSignal::Constant { value } => value.len(),
            ControlSignal::PiecewiseConstant { values, .. } => values.first().map_or(0, |v| v.len()),
            ControlSignal::PiecewiseCubic { values, .. } => values.first().map_or(0, |v| v.len()),
            ControlSignal::Fourier { cos, sin, .. } => {
                cos.first().or(sin.first()).map_or(0, |v| v.len())
            }
            ControlSignal::Sum { terms } => terms.first().map_or(0, |t| t.m()),
            ControlSignal::Scaled { inner, .. } => inner.m(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.m();
        let bad = |msg: &str| Err(Error::Config(format!("control signal: {msg}")));
        match self {
            ControlSignal::PiecewiseConstant { breaks, values } => {
                if breaks.len() != values.len() + 1 || values.iter().any(|v| v.len() != m) {
                    return bad("need len(breaks) = len(values) + 1 and equal channel counts");
                }
                if breaks.windows(2).any(|w| w[1] <= w[0]) {
                    return bad("breaks must increase strictly");
                }
            }
            ControlSignal::PiecewiseCubic { knots, values, slopes } => {
                if knots.len() < 2 || knots.len() != values.len() || knots.len() != slopes.len() {
                    return bad("knots, values and slopes must have the same length >= 2");
                }
                if values.iter().chain(slopes).any(|v| v.len() != m) {
                    return bad("channel counts differ");
                }
                if knots.windows(2).any(|w| w[1] <= w[0]) {
                    return bad("knots must increase strictly");
                }
            }
            ControlSignal::Fourier { period, cos, sin } => {
                if *period <= 0.0 || cos.iter().chain(sin).any(|v| v.len() != m) {
                    return bad("invalid Fourier data");
                }
            }
            ControlSignal::Sum { terms } => {
                for t in terms {
                    if t.m() != m {
                        return bad("summands have different channel counts");
                    }
                    t.validate()?;
                }
            }
            ControlSignal::Scaled { inner, time_factor, .. } => {
                if *time_factor <= 0.0 {
                    return bad("time_factor must be positive");
                }
                inner.validate()?;
            }
            _ => {}
        }
        Ok(())
    }

    /// Right-continuous value.
    pub fn value(&self, t: f64) -> Vector {
        self.value_side(t, Side::Right)
    }

    pub fn value_side(&self, t: f64, side: Side) -> Vector {
        let m = self.m();
        match self {
            ControlSignal::Zero { m } => Vector::zeros(*m),
            ControlSignal::Constant { value } => Vector::from_column_slice(value),
            ControlSignal::PiecewiseConstant { breaks, values } => match locate(breaks, t, side) {
                Some(k) => Vector::from_column_slice(&values[k]),
                None => Vector::zeros(m),
            },
            ControlSignal::PiecewiseCubic { knots, values, slopes } => {
                let n = knots.len();
                let tc = t.clamp(knots[0], knots[n - 1]);
                let k = locate(knots, tc, Side::Right).unwrap_or(n - 2);
                let h = knots[k + 1] - knots[k];
                let s = (tc - knots[k]) / h;
                let h00 = 2.0 * s.powi(3) - 3.0 * s * s + 1.0;
                let h10 = s.powi(3) - 2.0 * s * s + s;
                let h01 = -2.0 * s.powi(3) + 3.0 * s * s;
                let h11 = s.powi(3) - s * s;
                Vector::from_iterator(
                    m,
                    (0..m).map(|i| {
                        h00 * values[k][i]
                            + h10 * h * slopes[k][i]
                            + h01 * values[k + 1][i]
                            + h11 * h * slopes[k + 1][i]
                    }),
                )
            }
            ControlSignal::Fourier { period, cos, sin } => {
                let mut out = Vector::zeros(m);
                let w = 2.0 * PI / period;
                for (k, c) in cos.iter().enumerate() {
                    let ck = (w * k as f64 * t).cos();
                    for i in 0..m {
                        out[i] += c[i] * ck;
                    }
                }
                for (k, s) in sin.iter().enumerate() {
                    let sk = (w * k as f64 * t).sin();
                    for i in 0..m {
                        out[i] += s[i] * sk;
                    }
                }
                out
            }
            ControlSignal::Sum { terms } => {
                let mut out = Vector::zeros(m);
                for term in terms {
                    out += term.value_side(t, side);
                }
                out
            }
            ControlSignal::Scaled { inner, offset, time_factor, amplitude } => {
                inner.value_side((t - offset) * time_factor, side) * *amplitude
            }
        }
    }

    /// Times where the signal may be discontinuous or lose smoothness.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut out = match self {
            ControlSignal::PiecewiseConstant { breaks, .. } => breaks.clone(),
            ControlSignal::PiecewiseCubic { knots, .. } => knots.clone(),
            ControlSignal::Sum { terms } => terms.iter().flat_map(|t| t.breakpoints()).collect(),
            ControlSignal::Scaled { inner, offset, time_factor, .. } => {
                inner.breakpoints().into_iter().map(|s| offset + s / time_factor).collect()
            }
            _ => Vec::new(),
        };
        out.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
        out.dedup();
        out
    }

    /// `int_a^b |u(t)|_1 dt`, by Gauss quadrature between breakpoints.
    pub fn l1_norm(&self, a: f64, b: f64, pieces: usize) -> f64 {
        let mut total = 0.0;
        for (s0, s1) in segments(a, b, &self.breakpoints()) {
            let h = (s1 - s0) / pieces as f64;
            for k in 0..pieces {
                for (node, w) in crate::linalg::gauss3_unit() {
                    let t = s0 + h * (k as f64 + node);
                    total += w * h * self.value(t).iter().map(|v| v.abs()).sum::<f64>();
                }
            }
        }
        total
    }
}

/// Splits `[a, b]` at the breakpoints lying strictly inside.
pub fn segments(a: f64, b: f64, breaks: &[f64]) -> Vec<(f64, f64)> {
    let tol = 1e-14 * (1.0 + a.abs().max(b.abs()));
    let mut cuts = vec![a];
    for &s in breaks {
        if s > a + tol && s < b - tol {
            cuts.push(s);
        }
    }
    cuts.push(b);
    cuts.windows(2).map(|w| (w[0], w[1])).collect()
}
