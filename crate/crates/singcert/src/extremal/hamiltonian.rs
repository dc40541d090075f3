//! Hamiltonians of bracket words, the Legendre form and the singular feedback.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::extremal::ExtremalPoint;
use crate::linalg::{self, Mat, Vector};
use crate::model_core::algebra::br;
use crate::model_core::{BracketWord, ChartSystem, MatrixGroupSystem, Model};

/// Largest admissible condition number of the Legendre form.
pub const DEFAULT_MAX_CONDITION: f64 = 1e8;

/// `<p, B_word(q)>`, i.e. the Poisson bracket `{F_.., {.., F_..}}` of the word.
pub fn hamiltonian_bracket(model: &Model, point: &ExtremalPoint, word: &BracketWord) -> Result<f64> {
    let (v, _) = model.bracket_value(&point.q, word)?;
    Ok(linalg::pair(&point.p, &v))
}

fn h(model: &Model, point: &ExtremalPoint, word: BracketWord) -> Result<f64> {
    hamiltonian_bracket(model, point, &word)
}

/// Switching functions `F_1..F_m`.
pub fn switching_functions(model: &Model, point: &ExtremalPoint) -> Result<Vector> {
    let m = model.m();
    let mut out = Vector::zeros(m);
    for i in 0..m {
        out[i] = h(model, point, BracketWord::field(i + 1))?;
    }
    Ok(out)
}

/// `F_{0i}` for `i = 1..m`.
pub fn drift_brackets(model: &Model, point: &ExtremalPoint) -> Result<Vector> {
    let m = model.m();
    let mut out = Vector::zeros(m);
    for i in 0..m {
        out[i] = h(model, point, BracketWord::pair(0, i + 1))?;
    }
    Ok(out)
}

/// The matrix `(F_{ij0})`, assembled entry by entry so that the symmetry
/// residual is meaningful.
#[derive(Clone, Debug, PartialEq)]
pub struct LegendreForm {
    pub entries: Mat,
    pub symmetry_residual: f64,
    /// `sum_k u_k F_{ijk}`, present when the form was assembled with
    /// controls at a point where high-order Goh fails.
    pub control_terms: Option<Mat>,
}

impl LegendreForm {
    fn from_entries(entries: Mat, control_terms: Option<Mat>) -> Self {
        let symmetry_residual = linalg::max_abs(&(&entries - entries.transpose()));
        LegendreForm { entries, symmetry_residual, control_terms }
    }

    /// Symmetric part, including any control terms.
    pub fn symmetric(&self) -> Mat {
        let mut full = self.entries.clone();
        if let Some(c) = &self.control_terms {
            full += c;
        }
        linalg::symmetrize(&full)
    }

    /// Smallest and largest eigenvalues of the symmetric part.
    pub fn eigen_extremes(&self) -> (f64, f64) {
        let ev = linalg::sym_eigenvalues(&self.symmetric());
        (ev[0], ev[ev.len() - 1])
    }

    pub fn condition_number(&self) -> f64 {
        linalg::condition_number(&self.symmetric())
    }
}

pub fn legendre_form(model: &Model, point: &ExtremalPoint) -> Result<LegendreForm> {
    let m = model.m();
    let mut l = Mat::zeros(m, m);
    for i in 0..m {
        for j in 0..m {
            l[(i, j)] = h(model, point, BracketWord::triple(i + 1, j + 1, 0))?;
        }
    }
    Ok(LegendreForm::from_entries(l, None))
}

/// Legendre form with the `sum_k u_k F_{ijk}` terms, which vanish under the
/// high-order Goh condition. The extra terms are attached only when some of
/// them exceed `tol`.
pub fn legendre_form_with_controls(model: &Model, point: &ExtremalPoint, u: &Vector, tol: f64) -> Result<LegendreForm> {
    let base = legendre_form(model, point)?;
    let m = model.m();
    let mut extra = Mat::zeros(m, m);
    for i in 0..m {
        for j in 0..m {
            for k in 0..m {
                if u[k] != 0.0 {
                    extra[(i, j)] += u[k] * h(model, point, BracketWord::triple(i + 1, j + 1, k + 1))?;
                }
            }
        }
    }
    let control_terms = (linalg::max_abs(&extra) > tol).then_some(extra);
    Ok(LegendreForm::from_entries(base.entries, control_terms))
}

/// Right-hand side `(F_{001}, ..., F_{00m})` of the feedback equation.
pub fn feedback_rhs(model: &Model, point: &ExtremalPoint) -> Result<Vector> {
    let m = model.m();
    let mut out = Vector::zeros(m);
    for i in 0..m {
        out[i] = h(model, point, BracketWord::triple(0, 0, i + 1))?;
    }
    Ok(out)
}

/// Singular feedback `nu = L^{-1} (F_{00i})_i`.
pub fn singular_feedback(model: &Model, point: &ExtremalPoint, max_condition: f64) -> Result<Vector> {
    let l = legendre_form(model, point)?.symmetric();
    let cond = linalg::condition_number(&l);
    if !(cond <= max_condition) {
        return Err(Error::SglcFailure(cond));
    }
    let rhs = feedback_rhs(model, point)?;
    l.lu().solve(&rhs).ok_or(Error::SglcFailure(f64::INFINITY))
}

/// `A_0 + sum u_i A_i`.
pub fn velocity_element(sys: &MatrixGroupSystem, u: &Vector) -> Mat {
    let mut xi = sys.drift.clone();
    for (i, a) in sys.controlled.iter().enumerate() {
        if u[i] != 0.0 {
            xi += a * u[i];
        }
    }
    xi
}

/// Hamiltonian vector field of a function of the left-trivialized covector
/// with differential `xi`: `g' = g xi`, `<p', C> = <p, [xi, C]>`.
pub fn left_invariant_field(sys: &MatrixGroupSystem, point: &ExtremalPoint, xi: &Mat) -> (Mat, Mat) {
    let frame = sys.frame();
    let vals = Vector::from_iterator(
        frame.dim(),
        frame.frame().iter().map(|f| linalg::pair(&point.p, &br(xi, f))),
    );
    (&point.q * xi, frame.covector_from_values(&vals))
}

/// Hamiltonian vector field of `F_0 + sum u_i F_i` at `point`, returned as
/// `(dq, dp)` in the storage convention of the backend.
pub fn hamiltonian_vector_field(model: &Model, point: &ExtremalPoint, u: &Vector) -> (Mat, Mat) {
    match model {
        Model::Group(sys) => left_invariant_field(sys, point, &velocity_element(sys, u)),
        Model::Chart(sys) => {
            let mut w = Vector::zeros(sys.m() + 1);
            w[0] = 1.0;
            w.rows_mut(1, sys.m()).copy_from(u);
            chart_lifted_field(sys, point, &w)
        }
    }
}

/// Cotangent lift of `sum_k w_k f_k` (index 0 is the drift) on the chart
/// backend: `x' = sum w_k f_k`, `lambda' = -(sum w_k Df_k)^T lambda`.
pub fn chart_lifted_field(sys: &ChartSystem, point: &ExtremalPoint, weights: &Vector) -> (Mat, Mat) {
    let x = Vector::from_column_slice(point.q.as_slice());
    let lam = Vector::from_column_slice(point.p.as_slice());
    let mut dx = Vector::zeros(sys.n);
    let mut jac = Mat::zeros(sys.n, sys.n);
    for (k, f) in sys.fields.iter().enumerate() {
        if weights[k] != 0.0 {
            dx += f.eval(&x) * weights[k];
            jac += f.jacobian(&x) * weights[k];
        }
    }
    let dl = -(jac.transpose() * lam);
    (
        Mat::from_column_slice(dx.len(), 1, dx.as_slice()),
        Mat::from_column_slice(dl.len(), 1, dl.as_slice()),
    )
}

/// Residuals of a single point against the singular-arc identities.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PointResiduals {
    pub t: f64,
    pub switching: f64,
    pub normality: f64,
    pub goh: f64,
    pub hogc: f64,
    pub legendre_max_eig: f64,
    pub f0i_feedback: f64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::extremal::dubins_initial_covector;
    use crate::model_core::{build_dubins_system, SpaceForm};

    fn dubins_point(sf: SpaceForm) -> (Model, ExtremalPoint) {
        let sys = build_dubins_system(sf, 3).unwrap();
        let p = dubins_initial_covector(&sys).unwrap();
        let q = Mat::identity(sys.d, sys.d);
        (Model::Group(sys), ExtremalPoint { q, p, t: 0.0 })
    }

    #[test]
    fn self_bracket_vanishes() {
        let (model, pt) = dubins_point(SpaceForm::Sphere);
        assert_eq!(hamiltonian_bracket(&model, &pt, &BracketWord::pair(1, 1)).unwrap(), 0.0);
    }

    #[test]
    fn goh_brackets_vanish_on_dubins_covector() {
        let (model, pt) = dubins_point(SpaceForm::Euclidean);
        for i in 1..=2 {
            for j in 1..=2 {
                assert!(hamiltonian_bracket(&model, &pt, &BracketWord::pair(i, j)).unwrap().abs() < 1e-14);
            }
        }
    }

    #[test]
    fn legendre_is_minus_identity() {
        for sf in SpaceForm::all() {
            let (model, pt) = dubins_point(sf);
            let l = legendre_form(&model, &pt).unwrap();
            assert!(linalg::max_abs(&(l.entries + Mat::identity(2, 2))) < 1e-12, "{sf}");
            assert_eq!(l.symmetry_residual, 0.0);
        }
    }

    #[test]
    fn zero_covector_gives_zero_form() {
        let (model, mut pt) = dubins_point(SpaceForm::Euclidean);
        pt.p = Mat::zeros(4, 4);
        assert_eq!(linalg::max_abs(&legendre_form(&model, &pt).unwrap().entries), 0.0);
    }

    #[test]
    fn feedback_vanishes_and_is_scale_invariant() {
        let (model, pt) = dubins_point(SpaceForm::Sphere);
        let nu = singular_feedback(&model, &pt, DEFAULT_MAX_CONDITION).unwrap();
        assert!(linalg::max_abs_vec(&nu) < 1e-14);
        let sys = model.as_group().unwrap();
        // keep HOGC, move the values on [A_0, A_i] and A_0
        let mut vals = sys.frame().covector_values(&pt.p);
        vals[3] = 0.3;
        vals[4] = -0.2;
        vals[5] = 1.7;
        let p = sys.frame().covector_from_values(&vals);
        let pt1 = ExtremalPoint { p: p.clone(), ..pt.clone() };
        let pt2 = ExtremalPoint { p: p * 2.0, ..pt };
        let nu1 = singular_feedback(&model, &pt1, DEFAULT_MAX_CONDITION).unwrap();
        let nu2 = singular_feedback(&model, &pt2, DEFAULT_MAX_CONDITION).unwrap();
        assert!(linalg::max_abs_vec(&(&nu1 - &nu2)) < 1e-12);
        // independent least-squares solve of L u = F00
        let l = legendre_form(&model, &pt1).unwrap().entries;
        let rhs = feedback_rhs(&model, &pt1).unwrap();
        let ls = linalg::lstsq(&l, &rhs);
        assert!(linalg::max_abs_vec(&(ls - &nu1)) < 1e-12);
    }

    #[test]
    fn nested_bracket_matches_poisson_finite_difference() {
        // d/ds F_{10}(flow of F_1) = {F_1, F_{10}} = F_{110}
        let (model, pt) = dubins_point(SpaceForm::Hyperbolic);
        let sys = model.as_group().unwrap().clone();
        let mut vals = sys.frame().covector_values(&pt.p);
        for (k, v) in vals.iter_mut().enumerate() {
            *v += 0.1 * (k as f64 + 1.0);
        }
        let p = sys.frame().covector_from_values(&vals);
        let a1 = sys.controlled[0].clone();
        let f10 = |s: f64| {
            let e = linalg::expm(&(&a1 * s));
            let einv = linalg::expm(&(&a1 * -s));
            linalg::pair(&p, &(e * br(&a1, &sys.drift) * einv))
        };
        let exact = linalg::pair(&p, &br(&a1, &br(&a1, &sys.drift)));
        let mut errs = Vec::new();
        for hh in [1e-2, 5e-3] {
            errs.push(((f10(hh) - f10(-hh)) / (2.0 * hh) - exact).abs());
        }
        assert!(errs[1] < 1e-4);
        assert!(errs[0] / errs[1] > 3.5);
    }
}
