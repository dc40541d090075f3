//! Pull-back fields `g_t^i = S_t*^{-1} f_i o S_t` at the initial point.

use crate::error::{Error, Result};
use crate::extremal::{velocity_element, ExtremalTrajectory};
use crate::linalg::{Mat, Vector};
use crate::model_core::algebra::br;
use crate::model_core::{AdaptedChart, MatrixGroupSystem, Model};

/// Pull-back data at one time.
#[derive(Clone, Debug)]
pub struct PullbackSample {
    pub t: f64,
    /// Chart columns of `g_t^i(q0)`, `n x m`.
    pub g: Mat,
    /// Chart columns of the time derivative `gdot_t^i(q0)`, `n x m`.
    pub g_dot: Mat,
    /// Jacobians at the origin of the chart-expressed `gdot_t^i`.
    pub g_dot_jacobians: Vec<Mat>,
    /// `Ad_M A_i`.
    pub elements: Vec<Mat>,
    /// `Ad_M [A_u, A_i]`.
    pub dot_elements: Vec<Mat>,
}

#[derive(Clone, Debug)]
pub struct PullbackData {
    pub samples: Vec<PullbackSample>,
}

impl PullbackData {
    pub fn times(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.t).collect()
    }
}

pub(crate) fn group_of(model: &Model) -> Result<&MatrixGroupSystem> {
    model
        .as_group()
        .ok_or_else(|| Error::Unsupported("the second variation is assembled on the group backend".into()))
}

/// Pull-back sample at an arbitrary time from the flow matrix `m_t` and the
/// reference control value `u`.
pub(crate) fn pullback_at(sys: &MatrixGroupSystem, chart: &AdaptedChart, t: f64, m_t: &Mat, u: &Vector) -> Result<PullbackSample> {
    let minv = m_t
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Integration("singular flow matrix".into()))?;
    let frame = chart.frame();
    let n = chart.n();
    let m = sys.m();
    let xi = velocity_element(sys, u);
    let mut g = Mat::zeros(n, m);
    let mut g_dot = Mat::zeros(n, m);
    let mut elements = Vec::with_capacity(m);
    let mut dot_elements = Vec::with_capacity(m);
    let mut jacs = Vec::with_capacity(m);
    for (i, a) in sys.controlled.iter().enumerate() {
        let e = m_t * a * &minv;
        let de = m_t * br(&xi, a) * &minv;
        g.set_column(i, &frame.coords(&e));
        let b = frame.coords(&de);
        g_dot.set_column(i, &b);
        jacs.push(chart.field_jacobian_at_origin(&b));
        elements.push(e);
        dot_elements.push(de);
    }
    Ok(PullbackSample { t, g, g_dot, g_dot_jacobians: jacs, elements, dot_elements })
}

/// Pull-back fields on the extremal's grid. The chart must sit at the
/// extremal's initial point; its frame values are those of the identity, so
/// chart columns at the origin are frame coordinates.
pub fn pullback_fields(model: &Model, extremal: &ExtremalTrajectory, chart: &AdaptedChart) -> Result<PullbackData> {
    let sys = group_of(model)?;
    if chart.n() != sys.n() {
        return Err(Error::DimensionMismatch("chart and system dimensions differ".into()));
    }
    let samples = extremal
        .grid
        .iter()
        .zip(&extremal.flow_cache.states)
        .zip(&extremal.controls)
        .map(|((&t, m_t), u)| pullback_at(sys, chart, t, m_t, u))
        .collect::<Result<Vec<_>>>()?;
    Ok(PullbackData { samples })
}

/// Jacobian at the origin of the chart field with frame coordinates `b` by
/// Richardson-extrapolated central differences of radius `h`.
pub fn field_jacobian_fd(chart: &AdaptedChart, b: &Vector, h: f64) -> Result<Mat> {
    if h <= 0.0 || h > chart.radius {
        return Err(Error::OutOfChart(format!("stencil radius {h} outside (0, {}]", chart.radius)));
    }
    let n = chart.n();
    let central = |s: f64| {
        let mut out = Mat::zeros(n, n);
        for j in 0..n {
            let mut e = Vector::zeros(n);
            e[j] = s;
            let d = (chart.field(b, &e) - chart.field(b, &-&e)) / (2.0 * s);
            out.set_column(j, &d);
        }
        out
    };
    let coarse = central(h);
    let fine = central(0.5 * h);
    let jac = (fine * 4.0 - coarse) / 3.0;
    if jac.iter().any(|v| !v.is_finite()) {
        return Err(Error::OutOfChart("chart Jacobian is singular on the stencil".into()));
    }
    Ok(jac)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::extremal::{adjoint_trajectory, dubins_initial_covector, uniform_grid, ControlSignal};
    use crate::linalg;
    use crate::model_core::{adapted_chart, build_dubins_system, SpaceForm};

    fn setup(sf: SpaceForm) -> (Model, ExtremalTrajectory, AdaptedChart) {
        let sys = build_dubins_system(sf, 3).unwrap();
        let q0 = Mat::identity(4, 4);
        let p0 = dubins_initial_covector(&sys).unwrap();
        let grid = uniform_grid(1.0, 0.01).unwrap();
        let model = Model::Group(sys.clone());
        let traj = adjoint_trajectory(&model, &q0, &p0, &ControlSignal::zero(2), &grid).unwrap();
        let chart = adapted_chart(&sys, &q0, &[]).unwrap().with_covector(&p0);
        (model, traj, chart)
    }

    #[test]
    fn initial_pullback_is_the_control_field() {
        let (model, traj, chart) = setup(SpaceForm::Sphere);
        let pb = pullback_fields(&model, &traj, &chart).unwrap();
        let sys = model.as_group().unwrap();
        for i in 0..2 {
            let want = chart.frame().coords(&sys.controlled[i]);
            assert!(linalg::max_abs_vec(&(pb.samples[0].g.column(i) - want)) < 1e-14);
        }
    }

    #[test]
    fn dubins_pullback_is_affine_in_time() {
        let (model, traj, chart) = setup(SpaceForm::Euclidean);
        let pb = pullback_fields(&model, &traj, &chart).unwrap();
        let sys = model.as_group().unwrap();
        for s in &pb.samples {
            for i in 0..2 {
                let f0i = chart.frame().coords(&br(&sys.drift, &sys.controlled[i]));
                let fi = chart.frame().coords(&sys.controlled[i]);
                assert!(linalg::max_abs_vec(&(s.g_dot.column(i) - &f0i)) < 1e-12);
                assert!(linalg::max_abs_vec(&(s.g.column(i) - (fi + f0i * s.t))) < 1e-12);
                let second = br(&sys.drift, &br(&sys.drift, &sys.controlled[i]));
                assert!(linalg::max_abs(&second) < 1e-14);
            }
        }
    }

    #[test]
    fn derivative_matches_time_differences() {
        for sf in SpaceForm::all() {
            let (model, traj, chart) = setup(sf);
            let pb = pullback_fields(&model, &traj, &chart).unwrap();
            let mut errs = Vec::new();
            for dt in [0.02, 0.01] {
                let step = (dt / 0.01_f64).round() as usize;
                let k = 50;
                let d = (&pb.samples[k + step].g - &pb.samples[k - step].g) / (2.0 * dt);
                errs.push(linalg::max_abs(&(d - &pb.samples[k].g_dot)));
            }
            assert!(errs[1] < 1e-3, "{sf:?}: {errs:?}");
            if errs[0] > 1e-12 {
                assert!((errs[0] / errs[1]).log2() > 1.8, "{sf:?}: {errs:?}");
            }
        }
    }

    #[test]
    fn exact_jacobian_matches_stencil() {
        let (model, traj, chart) = setup(SpaceForm::Hyperbolic);
        let pb = pullback_fields(&model, &traj, &chart).unwrap();
        let s = &pb.samples[37];
        for i in 0..2 {
            let b: Vector = s.g_dot.column(i).into();
            let fd = field_jacobian_fd(&chart, &b, 1e-3).unwrap();
            assert!(linalg::max_abs(&(fd - &s.g_dot_jacobians[i])) < 1e-9);
        }
        assert!(field_jacobian_fd(&chart, &Vector::zeros(6), 2.0).is_err());
    }
}
