//! The linear-quadratic problem in the state `zeta` with control `w`.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::extremal::{coadjoint_transport, legendre_form, ControlSignal, ExtremalPoint, ExtremalTrajectory, FlowCache, Side};
use crate::linalg::{self, Mat, Vector};
use crate::model_core::{AdaptedChart, MatrixGroupSystem, Model};
use crate::second_variation::pullback::{group_of, pullback_at};

/// Coefficients of the problem at one time.
#[derive(Clone, Debug, PartialEq)]
pub struct LqSample {
    pub t: f64,
    /// `n x m`, columns `gdot_t^i(q0)`.
    pub z: Mat,
    /// `m x n`, row `i` is `dx -> L_dx L_{gdot_t^i} beta(q0)`.
    pub a: Mat,
    /// `m x m`, `C_ij = L_{[gdot_t^i, g_t^j]} beta(q0)`.
    pub c: Mat,
}

/// Time-dependent coefficients `Z(t)`, `a(t)`, `C(t)`.
pub trait LqCoefficients: Send + Sync + std::fmt::Debug {
    fn eval(&self, t: f64) -> Result<LqSample>;
}

/// Coefficients of a reference extremal on the group backend.
#[derive(Clone, Debug)]
pub struct GroupCoefficients {
    model: Model,
    chart: AdaptedChart,
    q0: Mat,
    p0: Mat,
    control: ControlSignal,
    flow: FlowCache,
}

impl GroupCoefficients {
    fn sys(&self) -> &MatrixGroupSystem {
        self.model.as_group().unwrap()
    }

    fn point(&self, t: f64, m_t: &Mat) -> Result<ExtremalPoint> {
        Ok(ExtremalPoint { q: &self.q0 * m_t, p: coadjoint_transport(self.sys(), &self.p0, m_t)?, t })
    }
}

impl LqCoefficients for GroupCoefficients {
    fn eval(&self, t: f64) -> Result<LqSample> {
        let sys = self.sys();
        let m_t = self.flow.at(&self.model, &self.control, t)?;
        let u = self.control.value_side(t, Side::Left);
        let pb = pullback_at(sys, &self.chart, t, &m_t, &u)?;
        let n = self.chart.n();
        let r = self.chart.r;
        let m = sys.m();
        let mut a = Mat::zeros(m, n);
        for (i, jac) in pb.g_dot_jacobians.iter().enumerate() {
            for l in r..n {
                let w = self.chart.p_hat[l];
                if w != 0.0 {
                    for j in 0..n {
                        a[(i, j)] -= w * jac[(l, j)];
                    }
                }
            }
        }
        let c = -legendre_form(&self.model, &self.point(t, &m_t)?)?.entries;
        Ok(LqSample { t, z: pb.g_dot, a, c })
    }
}

/// Initial condition of `zeta`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialSpace {
    /// `zeta(0) = 0`.
    Fixed,
    /// `zeta(0) = E eps`, `eps` in `R^R`.
    Extended,
    /// `zeta(0) = dx` free, penalized by `rho Omega`.
    Free,
}

/// A coupling `zeta_k' += cos(pi t / T) w_i`, `cost += kappa w_i zeta_k`
/// added to a problem. With `k` a Lie(f) coordinate the zero-mean profile
/// lets `w` reach `zeta_k(0)` without moving the other constraints.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LieCoupling {
    pub coordinate: usize,
    pub channel: usize,
    pub kappa: f64,
}

#[derive(Debug)]
struct Modified {
    inner: Arc<dyn LqCoefficients>,
    horizon: f64,
    legendre: Option<Mat>,
    couplings: Vec<LieCoupling>,
}

impl LqCoefficients for Modified {
    fn eval(&self, t: f64) -> Result<LqSample> {
        let mut s = self.inner.eval(t)?;
        if let Some(c) = &self.legendre {
            s.c = c.clone();
        }
        for cp in &self.couplings {
            s.z[(cp.coordinate, cp.channel)] += (std::f64::consts::PI * t / self.horizon).cos();
            s.a[(cp.channel, cp.coordinate)] += cp.kappa;
        }
        Ok(s)
    }
}

/// Goh-transformed second variation with its boundary data.
#[derive(Clone, Debug)]
pub struct SecondVariationProblem {
    pub horizon: f64,
    pub r: usize,
    pub m: usize,
    pub n: usize,
    /// `n x R`, columns `f_1(q0) .. f_R(q0)` in the chart.
    pub e: Mat,
    /// Chart coefficients of the initial covector; `beta = -sum_{i>R} p_i x_i`.
    pub p_hat: Vector,
    pub rho: f64,
    pub initial: InitialSpace,
    /// Basis of the admissible terminal subspace; `None` means `zeta(T) = 0`.
    pub terminal: Option<Mat>,
    coefficients: Arc<dyn LqCoefficients>,
}

impl SecondVariationProblem {
    pub fn from_coefficients(
        horizon: f64,
        r: usize,
        e: Mat,
        p_hat: Vector,
        rho: f64,
        coefficients: Arc<dyn LqCoefficients>,
    ) -> Result<Self> {
        let s = coefficients.eval(0.0)?;
        let (n, m) = s.z.shape();
        if e.shape() != (n, r) || p_hat.len() != n || s.a.shape() != (m, n) || s.c.shape() != (m, m) {
            return Err(Error::DimensionMismatch("inconsistent second-variation data".into()));
        }
        if !(horizon > 0.0) {
            return Err(Error::InvalidArgument("horizon must be positive".into()));
        }
        let cond = linalg::condition_number(&e);
        if r > 0 && !(cond <= 1e8) {
            return Err(Error::Structure(format!("Lie(f) basis at the initial point is degenerate: condition {cond:.3e}")));
        }
        Ok(SecondVariationProblem {
            horizon,
            r,
            m,
            n,
            e,
            p_hat,
            rho,
            initial: InitialSpace::Extended,
            terminal: None,
            coefficients,
        })
    }

    pub fn eval(&self, t: f64) -> Result<LqSample> {
        self.coefficients.eval(t)
    }

    pub fn with_rho(&self, rho: f64) -> Self {
        Self { rho, ..self.clone() }
    }

    pub fn with_initial(&self, initial: InitialSpace) -> Self {
        Self { initial, ..self.clone() }
    }

    /// Relaxes `zeta(T) = 0` to `zeta(T)` in the span of `basis` columns.
    pub fn with_terminal_subspace(&self, basis: Mat) -> Result<Self> {
        if basis.nrows() != self.n {
            return Err(Error::DimensionMismatch("terminal basis rows".into()));
        }
        Ok(Self { terminal: Some(basis), ..self.clone() })
    }

    /// Replaces `C(t)` by a constant matrix.
    pub fn with_legendre(&self, c: Mat) -> Result<Self> {
        if c.shape() != (self.m, self.m) {
            return Err(Error::DimensionMismatch("Legendre override".into()));
        }
        Ok(self.modified(Some(c), Vec::new()))
    }

    /// Adds couplings between controls and Lie(f) coordinates.
    pub fn with_lie_couplings(&self, couplings: &[LieCoupling]) -> Result<Self> {
        for cp in couplings {
            if cp.coordinate >= self.r || cp.channel >= self.m {
                return Err(Error::InvalidArgument(format!("coupling {cp:?} out of range")));
            }
        }
        Ok(self.modified(None, couplings.to_vec()))
    }

    fn modified(&self, legendre: Option<Mat>, couplings: Vec<LieCoupling>) -> Self {
        let inner = Arc::new(Modified { inner: self.coefficients.clone(), horizon: self.horizon, legendre, couplings });
        Self { coefficients: inner, ..self.clone() }
    }

    /// Weights of `Omega = 1/2 sum_{i>R} dx_i^2` as a diagonal projector.
    pub fn omega_projector(&self) -> Mat {
        let mut p = Mat::zeros(self.n, self.n);
        for i in self.r..self.n {
            p[(i, i)] = 1.0;
        }
        p
    }

    /// Map from the initial variables to `zeta(0)`.
    pub fn initial_map(&self) -> Mat {
        match self.initial {
            InitialSpace::Fixed => Mat::zeros(self.n, 0),
            InitialSpace::Extended => self.e.clone(),
            InitialSpace::Free => Mat::identity(self.n, self.n),
        }
    }

    /// `max_t |C(t)|` over `samples + 1` uniform times.
    pub fn scale(&self, samples: usize) -> Result<f64> {
        let mut s = 0.0_f64;
        for k in 0..=samples {
            let c = self.eval(self.horizon * k as f64 / samples as f64)?.c;
            s = s.max(c.norm());
        }
        Ok(s)
    }
}

/// Assembles the problem for a reference extremal. The chart must be the
/// adapted chart at the initial point carrying the initial covector.
pub fn assemble_lq(model: &Model, extremal: &ExtremalTrajectory, chart: &AdaptedChart, rho: f64) -> Result<SecondVariationProblem> {
    let sys = group_of(model)?;
    if chart.n() != sys.n() {
        return Err(Error::DimensionMismatch("chart and system dimensions differ".into()));
    }
    let start = extremal.initial();
    let r = chart.r;
    let n = chart.n();
    let coefficients = GroupCoefficients {
        model: model.clone(),
        chart: chart.clone(),
        q0: start.q.clone(),
        p0: start.p.clone(),
        control: extremal.control.clone(),
        flow: extremal.flow_cache.clone(),
    };
    let mut e = Mat::zeros(n, r);
    for k in 0..r {
        e.set_column(k, &chart.frame().coords(&sys.lie_closure_basis[k]));
    }
    SecondVariationProblem::from_coefficients(extremal.horizon(), r, e, chart.p_hat.clone(), rho, Arc::new(coefficients))
}

/// `w(t) = int_t^T du`, sampled on a grid.
#[derive(Clone, Debug, PartialEq)]
pub struct GohTransform {
    pub grid: Vec<f64>,
    pub w: Vec<Vector>,
    pub epsilon: Vector,
}

/// Backward trapezoid quadrature of the control variation; one-sided values
/// are used at interior breakpoints.
pub fn goh_transform(du: &ControlSignal, grid: &[f64]) -> Result<GohTransform> {
    if grid.len() < 2 || grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidArgument("grid must be increasing with at least two points".into()));
    }
    let m = du.m();
    let k = grid.len();
    let mut w = vec![Vector::zeros(m); k];
    for i in (0..k - 1).rev() {
        let (a, b) = (grid[i], grid[i + 1]);
        let mut acc = Vector::zeros(m);
        for (s0, s1) in crate::extremal::segments(a, b, &du.breakpoints()) {
            acc += (du.value_side(s0, Side::Right) + du.value_side(s1, Side::Left)) * (0.5 * (s1 - s0));
        }
        w[i] = &w[i + 1] + acc;
    }
    let epsilon = w[0].clone();
    Ok(GohTransform { grid: grid.to_vec(), w, epsilon })
}
