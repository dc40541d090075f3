//! Adapted coordinates `x -> exp(x_1 f_1) o ... o exp(x_n f_n)(q0)` on the group.
//!
//! For left-invariant fields the composition reads `q0 * E_n * ... * E_1`
//! with `E_k = exp(x_k F_k)`, so the first `R` coordinates move along the
//! integral manifold of the controlled Lie algebra.

use crate::error::{Error, Result};
use crate::linalg::{self, Mat, Vector};
use crate::model_core::algebra::{br, FrameCoords};
use crate::model_core::dubins::MatrixGroupSystem;

#[derive(Clone, Debug)]
pub struct AdaptedChart {
    pub basepoint: Mat,
    frame: FrameCoords,
    /// Number of leading frame elements spanning Lie(f).
    pub r: usize,
    /// Covector coefficients in the frame; zero on the first `r` entries for
    /// points satisfying the high-order Goh condition.
    pub p_hat: Vector,
    /// Newton inversion is refused beyond this coordinate radius.
    pub radius: f64,
}

/// Builds the chart at `basepoint`. The frame is the system's Lie(f) basis
/// followed by `completion`; an empty completion selects the standard
/// `[A_0, A_i]`, `A_0` completion.
pub fn adapted_chart(sys: &MatrixGroupSystem, basepoint: &Mat, completion: &[Mat]) -> Result<AdaptedChart> {
    if basepoint.shape() != (sys.d, sys.d) {
        return Err(Error::DimensionMismatch("basepoint size".into()));
    }
    let frame = if completion.is_empty() {
        sys.frame().clone()
    } else {
        let mut f = sys.lie_closure_basis.clone();
        f.extend(completion.iter().cloned());
        FrameCoords::new(f)?
    };
    if frame.dim() != sys.n() {
        return Err(Error::Structure(format!(
            "completion gives {} fields, state dimension is {}",
            frame.dim(),
            sys.n()
        )));
    }
    let n = frame.dim();
    Ok(AdaptedChart {
        basepoint: basepoint.clone(),
        frame,
        r: sys.r(),
        p_hat: Vector::zeros(n),
        radius: 0.5,
    })
}

impl AdaptedChart {
    pub fn n(&self) -> usize {
        self.frame.dim()
    }

    pub fn frame(&self) -> &FrameCoords {
        &self.frame
    }

    /// Records the covector (left-trivialized at the basepoint).
    pub fn with_covector(mut self, p: &Mat) -> Self {
        self.p_hat = self.frame.covector_values(p);
        self
    }

    /// `E_n * ... * E_1` without the basepoint factor.
    fn product(&self, x: &Vector) -> Mat {
        let f = self.frame.frame();
        let d = f[0].nrows();
        let mut g = Mat::identity(d, d);
        for k in (0..self.n()).rev() {
            if x[k] != 0.0 {
                g *= linalg::expm(&(&f[k] * x[k]));
            }
        }
        g
    }

    pub fn forward(&self, x: &Vector) -> Mat {
        &self.basepoint * self.product(x)
    }

    /// Left-trivialized differential: column `k` holds the frame coordinates
    /// of `Upsilon(x)^{-1} dUpsilon/dx_k`.
    pub fn left_jacobian(&self, x: &Vector) -> Mat {
        let f = self.frame.frame();
        let n = self.n();
        let d = f[0].nrows();
        let mut jac = Mat::zeros(n, n);
        let mut p = Mat::identity(d, d);
        let mut p_inv = Mat::identity(d, d);
        for k in 0..n {
            let ad = &p_inv * &f[k] * &p;
            jac.set_column(k, &self.frame.coords(&ad));
            if x[k] != 0.0 {
                let e = linalg::expm(&(&f[k] * x[k]));
                let e_inv = linalg::expm(&(&f[k] * (-x[k])));
                p = e * p;
                p_inv = p_inv * e_inv;
            }
        }
        jac
    }

    /// Chart expression of the left-invariant field with frame coordinates `b`.
    pub fn field(&self, b: &Vector, x: &Vector) -> Vector {
        self.left_jacobian(x)
            .lu()
            .solve(b)
            .unwrap_or_else(|| Vector::from_element(b.len(), f64::NAN))
    }

    /// Jacobian at the origin of the chart field with frame coordinates `b`:
    /// column `j` is `sum_{k>j} b_k coords([F_j, F_k])`.
    pub fn field_jacobian_at_origin(&self, b: &Vector) -> Mat {
        let f = self.frame.frame();
        let n = self.n();
        let mut out = Mat::zeros(n, n);
        for j in 0..n {
            let mut acc = Mat::zeros(f[0].nrows(), f[0].ncols());
            for k in (j + 1)..n {
                if b[k] != 0.0 {
                    acc += br(&f[j], &f[k]) * b[k];
                }
            }
            out.set_column(j, &self.frame.coords(&acc));
        }
        out
    }

    /// Damped Newton inversion of the chart map.
    pub fn inverse(&self, q: &Mat) -> Result<Vector> {
        let n = self.n();
        let d = q.nrows();
        let eye = Mat::identity(d, d);
        let target = self
            .basepoint
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::OutOfChart("singular basepoint".into()))?
            * q;
        let resid = |x: &Vector| -> (Mat, f64) {
            let g = self.product(x);
            let ginv = g.try_inverse().unwrap_or_else(|| Mat::from_element(d, d, f64::NAN));
            let e = ginv * &target - &eye;
            let r = linalg::max_abs(&e);
            (e, r)
        };
        let mut x = Vector::zeros(n);
        let (mut e, mut r) = resid(&x);
        for _ in 0..60 {
            if r < 1e-15 {
                return Ok(x);
            }
            let rhs = self.frame.coords(&e);
            let step = self
                .left_jacobian(&x)
                .lu()
                .solve(&rhs)
                .ok_or_else(|| Error::OutOfChart("singular chart differential".into()))?;
            let mut lambda = 1.0;
            let mut accepted = false;
            for _ in 0..30 {
                let cand = &x + &step * lambda;
                let (ce, cr) = resid(&cand);
                if cr < r {
                    x = cand;
                    e = ce;
                    r = cr;
                    accepted = true;
                    break;
                }
                lambda *= 0.5;
            }
            if x.norm() > self.radius {
                return Err(Error::OutOfChart(format!("|x| = {:.3e} exceeds radius {}", x.norm(), self.radius)));
            }
            if !accepted {
                if r < 1e-13 {
                    return Ok(x);
                }
                return Err(Error::OutOfChart(format!("Newton stalled at residual {r:.3e}")));
            }
        }
        if r < 1e-13 {
            Ok(x)
        } else {
            Err(Error::NonConvergence { iterations: 60, residual: r })
        }
    }

    /// Cotangent lift of chart data: the point `Upsilon(x)` with the
    /// left-trivialized covector whose chart components are `c`.
    pub fn lift(&self, x: &Vector, c: &Vector) -> (Mat, Mat) {
        let g = self.forward(x);
        let vals = self
            .left_jacobian(x)
            .transpose()
            .lu()
            .solve(c)
            .unwrap_or_else(|| Vector::from_element(c.len(), f64::NAN));
        (g, self.frame.covector_from_values(&vals))
    }
}
