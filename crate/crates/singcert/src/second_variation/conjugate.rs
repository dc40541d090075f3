//! Conjugate-point test for the `rho`-extended problem with free initial point.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, Mat};
use crate::second_variation::problem::{InitialSpace, LqSample, SecondVariationProblem};
use crate::second_variation::report::{CoercivityMethod, CoercivityReport, DetSample, RhoResult, Verdict};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConjugateOptions {
    pub rho_grid: Vec<f64>,
    /// RK4 steps over the horizon.
    pub steps: usize,
    /// Required lower bound on `det X(t) / det X(0)`.
    pub floor: f64,
}

impl Default for ConjugateOptions {
    fn default() -> Self {
        ConjugateOptions { rho_grid: default_rho_grid(), steps: 1000, floor: 0.1 }
    }
}

/// `2^-6, 2^-5, ..., 2^6`.
pub fn default_rho_grid() -> Vec<f64> {
    (-6..=6).map(|k| f64::powi(2.0, k)).collect()
}

/// Coefficients with `L^{-1} = (-C)^{-1}` precomputed.
struct Coeff {
    z: Mat,
    a: Mat,
    linv: Mat,
}

fn prepare(s: LqSample) -> Result<Coeff> {
    let l = -&s.c;
    let cond = linalg::condition_number(&l);
    if !(cond <= 1e8) {
        return Err(Error::SglcFailure(cond));
    }
    let linv = l.try_inverse().ok_or(Error::SglcFailure(f64::INFINITY))?;
    Ok(Coeff { z: s.z, a: s.a, linv })
}

/// Linear Hamiltonian field of `H'' = 1/2 L^{-1}[Z^T omega + a dx]^2` on the
/// columns of `(X, W)`.
fn rhs(c: &Coeff, x: &Mat, w: &Mat) -> (Mat, Mat) {
    let v = c.z.transpose() * w + &c.a * x;
    let lv = &c.linv * v;
    (&c.z * &lv, -(c.a.transpose() * lv))
}

/// Flows the Lagrangian plane `{(-rho P dx, dx)}` and records the base block.
fn flow_plane(problem: &SecondVariationProblem, coeffs: &[Coeff], steps: usize, rho: f64) -> Vec<DetSample> {
    let n = problem.n;
    let h = problem.horizon / steps as f64;
    let mut x = Mat::identity(n, n);
    let mut w = -problem.omega_projector() * rho;
    let mut out = Vec::with_capacity(steps + 1);
    let record = |x: &Mat, t: f64, out: &mut Vec<DetSample>| {
        let sv = linalg::singular_values(x);
        out.push(DetSample { t, det: x.determinant(), min_singular_value: *sv.last().unwrap() });
    };
    record(&x, 0.0, &mut out);
    for k in 0..steps {
        let (c0, c1, c2) = (&coeffs[2 * k], &coeffs[2 * k + 1], &coeffs[2 * k + 2]);
        let k1 = rhs(c0, &x, &w);
        let k2 = rhs(c1, &(&x + &k1.0 * (0.5 * h)), &(&w + &k1.1 * (0.5 * h)));
        let k3 = rhs(c1, &(&x + &k2.0 * (0.5 * h)), &(&w + &k2.1 * (0.5 * h)));
        let k4 = rhs(c2, &(&x + &k3.0 * h), &(&w + &k3.1 * h));
        x += (k1.0 + k2.0 * 2.0 + k3.0 * 2.0 + k4.0) * (h / 6.0);
        w += (k1.1 + k2.1 * 2.0 + k3.1 * 2.0 + k4.1) * (h / 6.0);
        record(&x, (k + 1) as f64 * h, &mut out);
    }
    out
}

/// Sweeps `rho`; the first value whose normalized determinant stays above
/// the floor on the whole arc certifies coercivity.
pub fn conjugate_point_test(problem: &SecondVariationProblem, options: &ConjugateOptions) -> Result<CoercivityReport> {
    if options.steps == 0 || options.rho_grid.is_empty() {
        return Err(Error::InvalidArgument("conjugate-point test needs steps and a rho grid".into()));
    }
    let steps = options.steps;
    let h = problem.horizon / steps as f64;
    let coeffs = (0..=2 * steps)
        .into_par_iter()
        .map(|k| problem.eval(0.5 * h * k as f64).and_then(prepare))
        .collect::<Result<Vec<_>>>()?;
    let traces: Vec<Vec<DetSample>> = options
        .rho_grid
        .par_iter()
        .map(|&rho| flow_plane(problem, &coeffs, steps, rho))
        .collect();
    let rho_sweep: Vec<RhoResult> = options
        .rho_grid
        .iter()
        .zip(&traces)
        .map(|(&rho, tr)| {
            let min_det = tr.iter().map(|s| s.det).fold(f64::INFINITY, f64::min);
            RhoResult { rho, min_det, coercive: min_det >= options.floor }
        })
        .collect();
    let winner = rho_sweep.iter().position(|r| r.coercive);
    let best = winner.unwrap_or_else(|| {
        (0..rho_sweep.len())
            .max_by(|&i, &j| rho_sweep[i].min_det.total_cmp(&rho_sweep[j].min_det))
            .unwrap()
    });
    Ok(CoercivityReport {
        method: CoercivityMethod::ConjugatePoint,
        verdict: if winner.is_some() { Verdict::Coercive } else { Verdict::NotCoercive },
        margin: rho_sweep[best].min_det,
        floor: options.floor,
        rho: rho_sweep[best].rho,
        initial: InitialSpace::Free,
        refinements: Vec::new(),
        det_trace: traces[best].clone(),
        rho_sweep,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model_core::SpaceForm;
    use crate::second_variation::galerkin::{assemble_galerkin, galerkin_coercivity, restricted_spectrum};
    use crate::second_variation::problem::tests::dubins_problem;
    use crate::second_variation::problem::LieCoupling;

    fn single(rho: f64, steps: usize) -> ConjugateOptions {
        ConjugateOptions { rho_grid: vec![rho], steps, floor: 0.1 }
    }

    #[test]
    fn dubins_has_no_conjugate_point() {
        let (_, _, _, pr) = dubins_problem(SpaceForm::Euclidean, 1.0, 1.0);
        let rep = conjugate_point_test(&pr, &single(1.0, 200)).unwrap();
        assert_eq!(rep.verdict, Verdict::Coercive);
        assert!((rep.det_trace[0].det - 1.0).abs() < 1e-15);
        let gal = galerkin_coercivity(&pr, 16).unwrap();
        assert_eq!(gal.verdict, rep.verdict);
    }

    #[test]
    fn default_sweep_on_all_space_forms() {
        for sf in SpaceForm::all() {
            let (_, _, _, pr) = dubins_problem(sf, 1.0, 0.0);
            let rep = conjugate_point_test(&pr, &ConjugateOptions { steps: 200, ..Default::default() }).unwrap();
            assert_eq!(rep.verdict, Verdict::Coercive, "{sf:?}");
            assert_eq!(rep.rho_sweep.len(), 13);
        }
    }

    #[test]
    fn verdicts_agree_with_free_initial_galerkin() {
        let (_, _, _, pr) = dubins_problem(SpaceForm::Sphere, 1.0, 0.0);
        for rho in [-2.0, 0.25, 1.0, 4.0] {
            let cp = conjugate_point_test(&pr, &single(rho, 400)).unwrap();
            let form = assemble_galerkin(&pr.with_initial(InitialSpace::Free).with_rho(rho), 32).unwrap();
            let margin = restricted_spectrum(&form).unwrap().min_eigenvalue;
            assert_eq!(cp.rho_sweep[0].coercive, margin > 0.0, "rho {rho}: det {} margin {margin}", cp.rho_sweep[0].min_det);
        }
    }

    #[test]
    fn lie_coupling_breaks_every_rho() {
        let (_, _, _, pr) = dubins_problem(SpaceForm::Euclidean, 1.0, 0.0);
        let bad = pr.with_lie_couplings(&[LieCoupling { coordinate: 2, channel: 0, kappa: 8.0 }]).unwrap();
        let fixed = galerkin_coercivity(&bad.with_initial(InitialSpace::Fixed), 16).unwrap();
        assert_eq!(fixed.verdict, Verdict::Coercive);
        let ext = galerkin_coercivity(&bad, 16).unwrap();
        assert_eq!(ext.verdict, Verdict::NotCoercive);
        let cp = conjugate_point_test(&bad, &ConjugateOptions { steps: 400, ..Default::default() }).unwrap();
        assert_eq!(cp.verdict, Verdict::NotCoercive);
        assert!(cp.rho_sweep.iter().all(|r| r.min_det < 0.1));
    }

    #[test]
    fn determinant_trace_converges_at_fourth_order() {
        let (_, _, _, pr) = dubins_problem(SpaceForm::Hyperbolic, 1.0, 0.0);
        let end = |steps| {
            let rep = conjugate_point_test(&pr, &single(0.5, steps)).unwrap();
            rep.det_trace.last().unwrap().det
        };
        let (a, b, c) = (end(25), end(50), end(100));
        let ratio = ((a - b) / (b - c)).abs();
        if (b - c).abs() > 1e-13 {
            assert!(ratio.log2() > 3.5, "ratio {ratio}");
        }
    }
}
