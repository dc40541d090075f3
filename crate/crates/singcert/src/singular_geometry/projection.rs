//! The maps `psi` and `phi`, the super-Hamiltonian `H_0` and the gap `chi`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::extremal::{chart_lifted_field, coadjoint_transport, legendre_form, lie_words, ExtremalPoint};
use crate::linalg::{self, Mat, Vector};
use crate::model_core::algebra::br;
use crate::model_core::{BracketWord, MatrixGroupSystem, Model};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeometryOptions {
    /// Half-width of the box of admissible `psi` times.
    pub psi_box: f64,
    pub newton_tol: f64,
    pub max_newton: usize,
    /// Largest tolerated distance from `Sigma` along super-Hamiltonian flows.
    pub sigma_tol: f64,
    /// Central-difference step for chart-backend derivatives.
    pub fd_step: f64,
    /// Sub-steps of the RK4 integration of `psi` on the chart backend.
    pub psi_steps: usize,
}

impl Default for GeometryOptions {
    fn default() -> Self {
        GeometryOptions { psi_box: 0.5, newton_tol: 1e-12, max_newton: 50, sigma_tol: 1e-8, fd_step: 1e-5, psi_steps: 64 }
    }
}

/// A cotangent point with its distances to `Sigma` and `S`.
#[derive(Clone, Debug, PartialEq)]
pub struct GeometryPoint {
    pub point: ExtremalPoint,
    /// `<p, B>` over the Lie(f) basis.
    pub sigma_residuals: Vector,
    /// `F_{0i}`.
    pub s_residuals: Vector,
}

impl GeometryPoint {
    pub fn in_sigma(&self, tol: f64) -> bool {
        linalg::max_abs_vec(&self.sigma_residuals) <= tol
    }

    pub fn in_s(&self, tol: f64) -> bool {
        self.in_sigma(tol) && linalg::max_abs_vec(&self.s_residuals) <= tol
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProjectionResult {
    pub theta: Vector,
    pub projected: GeometryPoint,
    pub newton_iterations: usize,
    pub residual: f64,
}

/// Tangent vector at a cotangent point. On the group backend `dq` holds
/// frame coordinates of the left-trivialized base displacement and `dp` the
/// variation of the frame values of the covector; on the chart backend both
/// are plain coordinate vectors.
#[derive(Clone, Debug, PartialEq)]
pub struct TangentVector {
    pub dq: Vector,
    pub dp: Vector,
}

impl TangentVector {
    pub fn scaled(&self, s: f64) -> Self {
        TangentVector { dq: &self.dq * s, dp: &self.dp * s }
    }
}

/// Geometry of `Sigma` and `S` for one system.
#[derive(Clone, Debug)]
pub struct Geometry<'a> {
    pub model: &'a Model,
    pub words: Vec<BracketWord>,
    pub options: GeometryOptions,
}

fn column(v: &Vector) -> Mat {
    Mat::from_column_slice(v.len(), 1, v.as_slice())
}

/// `d/dt_j (E C E^{-1})` with `E = exp(B)`, `dB/dt_j = a_j`.
fn d_ad(b: &Mat, e: &Mat, einv: &Mat, aj: &Mat, c: &Mat) -> Mat {
    let de = linalg::dexpm(b, aj);
    let ad = e * c * einv;
    &de * c * einv - &ad * &de * einv
}

impl<'a> Geometry<'a> {
    pub fn new(model: &'a Model, q0: &Mat, options: GeometryOptions) -> Result<Self> {
        Ok(Geometry { model, words: lie_words(model, q0)?, options })
    }

    fn m(&self) -> usize {
        self.model.m()
    }

    fn group(&self) -> Option<&MatrixGroupSystem> {
        self.model.as_group()
    }

    fn value(&self, pt: &ExtremalPoint, word: &BracketWord) -> Result<f64> {
        crate::extremal::hamiltonian_bracket(self.model, pt, word)
    }

    pub fn geometry_point(&self, pt: &ExtremalPoint) -> Result<GeometryPoint> {
        let sigma = self.words.iter().map(|w| self.value(pt, w)).collect::<Result<Vec<_>>>()?;
        let s = (1..=self.m())
            .map(|i| self.value(pt, &BracketWord::pair(0, i)))
            .collect::<Result<Vec<_>>>()?;
        Ok(GeometryPoint {
            point: pt.clone(),
            sigma_residuals: Vector::from_vec(sigma),
            s_residuals: Vector::from_vec(s),
        })
    }

    pub fn sigma_residual(&self, pt: &ExtremalPoint) -> Result<f64> {
        let mut r = 0.0_f64;
        for w in &self.words {
            r = r.max(self.value(pt, w)?.abs());
        }
        Ok(r)
    }

    fn controlled_sum(sys: &MatrixGroupSystem, t: &Vector) -> Mat {
        let mut b = Mat::zeros(sys.d, sys.d);
        for (i, a) in sys.controlled.iter().enumerate() {
            b += a * t[i];
        }
        b
    }

    /// Time-one flow of `sum t_i F_i` starting at `pt`.
    pub fn psi_map(&self, pt: &ExtremalPoint, t: &Vector) -> Result<ExtremalPoint> {
        if t.len() != self.m() {
            return Err(Error::DimensionMismatch("psi times".into()));
        }
        if linalg::max_abs_vec(t) > self.options.psi_box {
            return Err(Error::OutOfChart(format!(
                "|t| = {:.3e} outside the psi box {}",
                linalg::max_abs_vec(t),
                self.options.psi_box
            )));
        }
        match self.model {
            Model::Group(sys) => {
                let e = linalg::expm(&Self::controlled_sum(sys, t));
                Ok(ExtremalPoint { q: &pt.q * &e, p: coadjoint_transport(sys, &pt.p, &e)?, t: pt.t })
            }
            Model::Chart(sys) => {
                let mut w = Vector::zeros(self.m() + 1);
                w.rows_mut(1, self.m()).copy_from(t);
                let n = self.options.psi_steps;
                let h = 1.0 / n as f64;
                let mut cur = pt.clone();
                for _ in 0..n {
                    let shift = |d: &(Mat, Mat), s: f64| ExtremalPoint {
                        q: &cur.q + &d.0 * s,
                        p: &cur.p + &d.1 * s,
                        t: cur.t,
                    };
                    let k1 = chart_lifted_field(sys, &cur, &w);
                    let k2 = chart_lifted_field(sys, &shift(&k1, 0.5 * h), &w);
                    let k3 = chart_lifted_field(sys, &shift(&k2, 0.5 * h), &w);
                    let k4 = chart_lifted_field(sys, &shift(&k3, h), &w);
                    cur = ExtremalPoint {
                        q: &cur.q + (k1.0 + k2.0 * 2.0 + k3.0 * 2.0 + k4.0) * (h / 6.0),
                        p: &cur.p + (k1.1 + k2.1 * 2.0 + k3.1 * 2.0 + k4.1) * (h / 6.0),
                        t: cur.t,
                    };
                }
                Ok(cur)
            }
        }
    }

    /// `(F_{0i}(psi(pt, t)))_i`.
    fn phi_residual(&self, pt: &ExtremalPoint, t: &Vector) -> Result<Vector> {
        match self.model {
            Model::Group(sys) => {
                let e = linalg::expm(&Self::controlled_sum(sys, t));
                let einv = linalg::expm(&-Self::controlled_sum(sys, t));
                Ok(Vector::from_iterator(
                    self.m(),
                    sys.controlled.iter().map(|a| linalg::pair(&pt.p, &(&e * br(&sys.drift, a) * &einv))),
                ))
            }
            Model::Chart(_) => {
                let moved = self.psi_map(pt, t)?;
                let gp = self.geometry_point(&moved)?;
                Ok(gp.s_residuals)
            }
        }
    }

    /// Jacobian of the residual in `t`: exact on the group backend, central
    /// differences on the chart backend.
    fn phi_jacobian(&self, pt: &ExtremalPoint, t: &Vector) -> Result<Mat> {
        let m = self.m();
        let mut jac = Mat::zeros(m, m);
        match self.model {
            Model::Group(sys) => {
                let b = Self::controlled_sum(sys, t);
                let e = linalg::expm(&b);
                let einv = linalg::expm(&-&b);
                for (i, ai) in sys.controlled.iter().enumerate() {
                    let a0i = br(&sys.drift, ai);
                    for (j, aj) in sys.controlled.iter().enumerate() {
                        jac[(i, j)] = linalg::pair(&pt.p, &d_ad(&b, &e, &einv, aj, &a0i));
                    }
                }
            }
            Model::Chart(_) => {
                let h = self.options.fd_step;
                for j in 0..m {
                    let mut tp = t.clone();
                    let mut tm = t.clone();
                    tp[j] += h;
                    tm[j] -= h;
                    let col = (self.phi_residual(pt, &tp)? - self.phi_residual(pt, &tm)?) / (2.0 * h);
                    jac.set_column(j, &col);
                }
            }
        }
        Ok(jac)
    }

    /// Newton solve of `F_{0i}(psi(pt, theta)) = 0`.
    pub fn phi_projection(&self, pt: &ExtremalPoint) -> Result<ProjectionResult> {
        let m = self.m();
        let tol = self.options.newton_tol;
        let mut theta = Vector::zeros(m);
        let mut r = self.phi_residual(pt, &theta)?;
        let mut rn = linalg::max_abs_vec(&r);
        let mut iterations = 0;
        while rn > tol {
            if iterations >= self.options.max_newton {
                return Err(Error::NonConvergence { iterations, residual: rn });
            }
            let jac = if iterations == 0 && matches!(self.model, Model::Chart(_)) {
                -legendre_form(self.model, pt)?.symmetric()
            } else {
                self.phi_jacobian(pt, &theta)?
            };
            if linalg::condition_number(&jac) > 1e12 {
                return Err(Error::SglcFailure(linalg::condition_number(&jac)));
            }
            let step = jac.lu().solve(&r).ok_or(Error::SglcFailure(f64::INFINITY))?;
            let mut lambda = 1.0;
            let mut accepted = false;
            while lambda > 1e-4 {
                let cand = &theta - &step * lambda;
                if linalg::max_abs_vec(&cand) > self.options.psi_box {
                    lambda *= 0.5;
                    continue;
                }
                let rc = self.phi_residual(pt, &cand)?;
                let rcn = linalg::max_abs_vec(&rc);
                if rcn < rn {
                    theta = cand;
                    r = rc;
                    rn = rcn;
                    accepted = true;
                    break;
                }
                lambda *= 0.5;
            }
            iterations += 1;
            if !accepted {
                if rn <= 10.0 * tol {
                    break;
                }
                return Err(Error::NonConvergence { iterations, residual: rn });
            }
        }
        let projected = self.geometry_point(&self.psi_map(pt, &theta)?)?;
        Ok(ProjectionResult { theta, projected, newton_iterations: iterations, residual: rn })
    }

    /// `H_0 = F_0 o phi`.
    pub fn h0_eval(&self, pt: &ExtremalPoint) -> Result<f64> {
        let pr = self.phi_projection(pt)?;
        self.value(&pr.projected.point, &BracketWord::field(0))
    }

    /// `chi = H_0 - F_0`.
    pub fn chi_eval(&self, pt: &ExtremalPoint) -> Result<f64> {
        Ok(self.h0_eval(pt)? - self.value(pt, &BracketWord::field(0))?)
    }

    /// Differential of `H_0` on the group backend as an algebra element `xi`
    /// with `dH_0[dp] = <dp, xi>`.
    pub fn h0_differential(&self, pt: &ExtremalPoint) -> Result<Mat> {
        let sys = self
            .group()
            .ok_or_else(|| Error::Unsupported("exact H_0 differential needs the group backend".into()))?;
        let theta = self.phi_projection(pt)?.theta;
        let b = Self::controlled_sum(sys, &theta);
        let e = linalg::expm(&b);
        let einv = linalg::expm(&-&b);
        let m = self.m();
        let a0i: Vec<Mat> = sys.controlled.iter().map(|a| br(&sys.drift, a)).collect();
        let mut k = Mat::zeros(m, m);
        let mut c = Vector::zeros(m);
        for (j, aj) in sys.controlled.iter().enumerate() {
            c[j] = linalg::pair(&pt.p, &d_ad(&b, &e, &einv, aj, &sys.drift));
            for i in 0..m {
                k[(i, j)] = linalg::pair(&pt.p, &d_ad(&b, &e, &einv, aj, &a0i[i]));
            }
        }
        let y = k
            .transpose()
            .lu()
            .solve(&c)
            .ok_or(Error::SglcFailure(f64::INFINITY))?;
        let mut xi = &e * &sys.drift * &einv;
        for i in 0..m {
            xi -= &e * &a0i[i] * &einv * y[i];
        }
        Ok(xi)
    }

    /// Moves `pt` by `s * v`: `q exp(s sum dq_k f_k)` with shifted frame values
    /// on the group, straight lines on the chart backend.
    pub fn displace(&self, pt: &ExtremalPoint, v: &TangentVector, s: f64) -> ExtremalPoint {
        match self.model {
            Model::Group(sys) => {
                let frame = sys.frame();
                let q = &pt.q * linalg::expm(&(frame.compose(&v.dq) * s));
                let vals = frame.covector_values(&pt.p) + &v.dp * s;
                ExtremalPoint { q, p: frame.covector_from_values(&vals), t: pt.t }
            }
            Model::Chart(_) => ExtremalPoint {
                q: &pt.q + column(&v.dq) * s,
                p: &pt.p + column(&v.dp) * s,
                t: pt.t,
            },
        }
    }

    /// Hamiltonian vector field of `F_j` (`j >= 1`) at `pt`.
    pub fn hamiltonian_direction(&self, pt: &ExtremalPoint, j: usize) -> Result<TangentVector> {
        match self.model {
            Model::Group(sys) => {
                let a = sys
                    .generator(j)
                    .ok_or_else(|| Error::InvalidArgument(format!("no field {j}")))?;
                let frame = sys.frame();
                let dp = Vector::from_iterator(frame.dim(), frame.frame().iter().map(|f| linalg::pair(&pt.p, &br(a, f))));
                Ok(TangentVector { dq: frame.coords(a), dp })
            }
            Model::Chart(sys) => {
                let mut w = Vector::zeros(sys.m() + 1);
                w[j] = 1.0;
                let (dq, dp) = chart_lifted_field(sys, pt, &w);
                Ok(TangentVector {
                    dq: Vector::from_column_slice(dq.as_slice()),
                    dp: Vector::from_column_slice(dp.as_slice()),
                })
            }
        }
    }

    /// `<dF_{0r}, v>` by central first differences.
    pub fn drift_bracket_differentials(&self, pt: &ExtremalPoint, v: &TangentVector, h: f64) -> Result<Vector> {
        let plus = self.geometry_point(&self.displace(pt, v, h))?.s_residuals;
        let minus = self.geometry_point(&self.displace(pt, v, -h))?.s_residuals;
        Ok((plus - minus) / (2.0 * h))
    }

    /// Second differences of `chi` along the given directions at a point of
    /// `S`, compared with `-sum (L^{-1})_{rs} <dF_{0r}, v> <dF_{0s}, v>`.
    pub fn chi_hessian_check(&self, pt: &ExtremalPoint, directions: &[TangentVector], h: f64) -> Result<ChiHessianReport> {
        let gp = self.geometry_point(pt)?;
        let linv = legendre_form(self.model, pt)?
            .symmetric()
            .try_inverse()
            .ok_or(Error::SglcFailure(f64::INFINITY))?;
        let chi0 = self.chi_eval(pt)?;
        let mut entries = Vec::new();
        for v in directions {
            let a = self.drift_bracket_differentials(pt, v, 1e-6)?;
            let closed = -(a.transpose() * &linv * &a)[(0, 0)];
            let mut fd = Vec::new();
            for level in 0..3 {
                let s = h / f64::powi(2.0, level);
                let cp = self.chi_eval(&self.displace(pt, v, s))?;
                let cm = self.chi_eval(&self.displace(pt, v, -s))?;
                fd.push((cp - 2.0 * chi0 + cm) / (s * s));
            }
            let d01 = (fd[0] - fd[1]).abs();
            let d12 = (fd[1] - fd[2]).abs();
            let order = if d12 > 0.0 { (d01 / d12).log2() } else { f64::INFINITY };
            let rel_error = (fd[2] - closed).abs() / closed.abs().max(1.0);
            entries.push(ChiHessianEntry { finite_difference: fd[2], closed_form: closed, rel_error, order });
        }
        let max_rel_error = entries.iter().map(|e| e.rel_error).fold(0.0, f64::max);
        let min_order = entries.iter().map(|e| e.order).fold(f64::INFINITY, f64::min);
        Ok(ChiHessianReport {
            s_residual: linalg::max_abs_vec(&gp.s_residuals).max(linalg::max_abs_vec(&gp.sigma_residuals)),
            step: h,
            entries,
            max_rel_error,
            min_order,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChiHessianEntry {
    pub finite_difference: f64,
    pub closed_form: f64,
    pub rel_error: f64,
    /// Observed order from three nested steps.
    pub order: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChiHessianReport {
    pub s_residual: f64,
    pub step: f64,
    pub entries: Vec<ChiHessianEntry>,
    pub max_rel_error: f64,
    pub min_order: f64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::extremal::dubins_initial_covector;
    use crate::model_core::{build_dubins_system, SpaceForm};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn setup(sf: SpaceForm) -> (Model, ExtremalPoint) {
        let sys = build_dubins_system(sf, 3).unwrap();
        let p = dubins_initial_covector(&sys).unwrap();
        (Model::Group(sys), ExtremalPoint { q: Mat::identity(4, 4), p, t: 0.0 })
    }

    fn geo(model: &Model) -> Geometry<'_> {
        Geometry::new(model, &Mat::identity(4, 4), GeometryOptions::default()).unwrap()
    }

    /// A point of Sigma near the extremal: random values on the non-Lie frame slots.
    fn sigma_point(model: &Model, base: &ExtremalPoint, rng: &mut ChaCha8Rng, r: f64) -> ExtremalPoint {
        let sys = model.as_group().unwrap();
        let mut vals = sys.frame().covector_values(&base.p);
        for k in sys.r()..sys.n() {
            vals[k] += r * rng.random_range(-1.0..1.0);
        }
        ExtremalPoint { p: sys.frame().covector_from_values(&vals), ..base.clone() }
    }

    #[test]
    fn psi_identity_and_sigma_invariance() {
        let (model, pt) = setup(SpaceForm::Sphere);
        let g = geo(&model);
        assert_eq!(g.psi_map(&pt, &Vector::zeros(2)).unwrap(), pt);
        let moved = g.psi_map(&pt, &Vector::from_vec(vec![0.1, -0.07])).unwrap();
        assert!(g.sigma_residual(&moved).unwrap() < 1e-10);
    }

    #[test]
    fn psi_derivative_is_hamiltonian_field() {
        let (model, pt) = setup(SpaceForm::Hyperbolic);
        let g = geo(&model);
        let sys = model.as_group().unwrap();
        let dir = g.hamiltonian_direction(&pt, 2).unwrap();
        let h = 1e-5;
        let plus = g.psi_map(&pt, &Vector::from_vec(vec![0.0, h])).unwrap();
        let minus = g.psi_map(&pt, &Vector::from_vec(vec![0.0, -h])).unwrap();
        let dp = (sys.frame().covector_values(&plus.p) - sys.frame().covector_values(&minus.p)) / (2.0 * h);
        let dq = sys.frame().coords(&((&plus.q - &minus.q) / (2.0 * h)));
        assert!((dp - dir.dp).amax() < 1e-9);
        assert!((dq - dir.dq).amax() < 1e-9);
    }

    #[test]
    fn projection_fixes_s_and_inverts_psi() {
        for sf in SpaceForm::all() {
            let (model, pt) = setup(sf);
            let g = geo(&model);
            let fixed = g.phi_projection(&pt).unwrap();
            assert!(fixed.theta.amax() <= 1e-12);
            let t = Vector::from_vec(vec![0.08, -0.05]);
            let moved = g.psi_map(&pt, &t).unwrap();
            let pr = g.phi_projection(&moved).unwrap();
            assert!((&pr.theta + &t).amax() < 1e-9, "{sf}");
            assert!(linalg::max_abs(&(&pr.projected.point.p - &pt.p)) < 1e-9);
            assert!(pr.projected.in_s(1e-12));
            // idempotence
            let again = g.phi_projection(&pr.projected.point).unwrap();
            assert!(again.theta.amax() < 1e-10);
        }
    }

    #[test]
    fn chi_is_zero_on_s_and_nonnegative_on_sigma() {
        let (model, pt) = setup(SpaceForm::Euclidean);
        let g = geo(&model);
        assert!(g.chi_eval(&pt).unwrap().abs() < 1e-12);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let s = sigma_point(&model, &pt, &mut rng, 0.05);
            let t = Vector::from_vec(vec![rng.random_range(-0.1..0.1), rng.random_range(-0.1..0.1)]);
            let s = g.psi_map(&s, &t).unwrap();
            assert!(g.chi_eval(&s).unwrap() >= -1e-10);
        }
    }

    #[test]
    fn chi_expands_quadratically_along_psi() {
        let (model, pt) = setup(SpaceForm::Sphere);
        let g = geo(&model);
        let l = legendre_form(&model, &pt).unwrap().symmetric();
        let dir = Vector::from_vec(vec![0.6, -0.8]);
        let mut errs = Vec::new();
        for s in [0.04, 0.02, 0.01] {
            let t = &dir * s;
            let chi = g.chi_eval(&g.psi_map(&pt, &t).unwrap()).unwrap();
            let quad = -0.5 * (t.transpose() * &l * &t)[(0, 0)];
            errs.push((chi - quad).abs());
        }
        let slope = linalg::loglog_slope(&[0.04, 0.02, 0.01], &errs);
        assert!(slope > 2.8 || errs[2] < 1e-13, "{errs:?}");
    }

    #[test]
    fn theta_differential_on_s() {
        let (model, pt) = setup(SpaceForm::Hyperbolic);
        let g = geo(&model);
        let h = 1e-5;
        for j in 1..=2 {
            let v = g.hamiltonian_direction(&pt, j).unwrap();
            let tp = g.phi_projection(&g.displace(&pt, &v, h)).unwrap().theta;
            let tm = g.phi_projection(&g.displace(&pt, &v, -h)).unwrap().theta;
            let d = (tp - tm) / (2.0 * h);
            for i in 0..2 {
                let expect = if i + 1 == j { -1.0 } else { 0.0 };
                assert!((d[i] - expect).abs() < 1e-8, "{d}");
            }
        }
    }

    #[test]
    fn exact_h0_differential_matches_differences() {
        let (model, pt) = setup(SpaceForm::Sphere);
        let g = geo(&model);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let s = sigma_point(&model, &pt, &mut rng, 0.05);
        let s = g.psi_map(&s, &Vector::from_vec(vec![0.05, 0.03])).unwrap();
        let xi = g.h0_differential(&s).unwrap();
        let sys = model.as_group().unwrap();
        let h = 1e-6;
        for k in 0..6 {
            let mut dp = Vector::zeros(6);
            dp[k] = 1.0;
            let v = TangentVector { dq: Vector::zeros(6), dp };
            let fd = (g.h0_eval(&g.displace(&s, &v, h)).unwrap() - g.h0_eval(&g.displace(&s, &v, -h)).unwrap()) / (2.0 * h);
            let dir = sys.frame().covector_from_values(&v.dp);
            assert!((fd - linalg::pair(&dir, &xi)).abs() < 1e-8);
        }
    }

    #[test]
    fn hessian_of_chi_along_hamiltonian_fields() {
        let (model, pt) = setup(SpaceForm::Euclidean);
        let g = geo(&model);
        let dirs: Vec<_> = (1..=2).map(|j| g.hamiltonian_direction(&pt, j).unwrap()).collect();
        let rep = g.chi_hessian_check(&pt, &dirs, 0.02).unwrap();
        for e in &rep.entries {
            assert!((e.closed_form - 1.0).abs() < 1e-9);
            assert!(e.rel_error < 1e-3, "{rep:?}");
        }
        // tangent to S: moving along A_0's flow keeps F_0i = 0
        let sys = model.as_group().unwrap();
        let tangent = TangentVector { dq: sys.frame().coords(&sys.drift), dp: Vector::zeros(6) };
        let rep = g.chi_hessian_check(&pt, &[tangent], 0.02).unwrap();
        assert!(rep.entries[0].closed_form.abs() < 1e-12 && rep.entries[0].finite_difference.abs() < 1e-8);
    }
}
