//! Reference flows, coadjoint transport and extremal trajectories.

use crate::error::{Error, Result};
use crate::extremal::control::{segments, ControlSignal, Side};
use crate::extremal::hamiltonian::{hamiltonian_vector_field, singular_feedback, velocity_element};
use crate::linalg::{self, Mat, Vector};
use crate::model_core::{MatrixGroupSystem, Model};

/// A point of the cotangent bundle with its time stamp. On the group backend
/// `q` is the group element and `p` the left-trivialized covector (a matrix
/// in the algebra); on the chart backend both are `n x 1` columns.
#[derive(Clone, Debug, PartialEq)]
pub struct ExtremalPoint {
    pub q: Mat,
    pub p: Mat,
    pub t: f64,
}

/// `n + 1` uniform samples with step at most `dt`.
pub fn uniform_grid(horizon: f64, dt: f64) -> Result<Vec<f64>> {
    if !(horizon > 0.0) || !(dt > 0.0) {
        return Err(Error::InvalidArgument(format!("horizon {horizon} and dt {dt} must be positive")));
    }
    let n = (horizon / dt - 1e-9).ceil().max(1.0) as usize;
    Ok((0..=n).map(|k| horizon * k as f64 / n as f64).collect())
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.len() < 2 || grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument("grid must have at least two strictly increasing samples".into()));
    }
    Ok(())
}

fn column(v: &Vector) -> Mat {
    Mat::from_column_slice(v.len(), 1, v.as_slice())
}

fn chart_velocity(model: &Model, x: &Mat, u: &Vector) -> Mat {
    let Model::Chart(sys) = model else { unreachable!() };
    let xv = Vector::from_column_slice(x.as_slice());
    let mut dx = sys.fields[0].eval(&xv);
    for i in 0..sys.m() {
        if u[i] != 0.0 {
            dx += sys.fields[i + 1].eval(&xv) * u[i];
        }
    }
    column(&dx)
}

/// One classical RK4 step of the state equation over `[a, b]`, on which the
/// control is smooth.
fn state_step(model: &Model, x: &Mat, u: &ControlSignal, a: f64, b: f64) -> Mat {
    let h = b - a;
    let ua = u.value_side(a, Side::Right);
    let um = u.value(0.5 * (a + b));
    let ub = u.value_side(b, Side::Left);
    match model {
        Model::Group(sys) => {
            let (xa, xm, xb) = (velocity_element(sys, &ua), velocity_element(sys, &um), velocity_element(sys, &ub));
            let k1 = x * &xa;
            let k2 = (x + &k1 * (0.5 * h)) * &xm;
            let k3 = (x + &k2 * (0.5 * h)) * &xm;
            let k4 = (x + &k3 * h) * &xb;
            let next = x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
            sys.project(&next)
        }
        Model::Chart(_) => {
            let k1 = chart_velocity(model, x, &ua);
            let k2 = chart_velocity(model, &(x + &k1 * (0.5 * h)), &um);
            let k3 = chart_velocity(model, &(x + &k2 * (0.5 * h)), &um);
            let k4 = chart_velocity(model, &(x + &k3 * h), &ub);
            x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0)
        }
    }
}

/// Advances the state from `a` to `b`, splitting at control breakpoints.
pub fn advance_state(model: &Model, x: &Mat, u: &ControlSignal, a: f64, b: f64) -> Result<Mat> {
    let mut x = x.clone();
    for (s0, s1) in segments(a, b, &u.breakpoints()) {
        x = state_step(model, &x, u, s0, s1);
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Integration(format!("non-finite state on [{a}, {b}]")));
    }
    Ok(x)
}

/// Samples of the reference flow: `M(t_k)` with `M(0) = I` on the group
/// backend, the state `x(t_k)` on the chart backend.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowCache {
    pub grid: Vec<f64>,
    pub states: Vec<Mat>,
}

impl FlowCache {
    /// Flow at an arbitrary time, integrated from the nearest grid sample
    /// at or before `t`.
    pub fn at(&self, model: &Model, u: &ControlSignal, t: f64) -> Result<Mat> {
        let k = self.grid.partition_point(|&s| s <= t).saturating_sub(1);
        if self.grid[k] == t {
            return Ok(self.states[k].clone());
        }
        if let (Model::Group(sys), true) = (model, u.is_zero()) {
            return Ok(linalg::expm(&(&sys.drift * t)));
        }
        advance_state(model, &self.states[k], u, self.grid[k], t)
    }
}

/// Integrates `M' = M (A_0 + sum u_i A_i)`, `M(0) = I` (group backend) or
/// `x' = f_0 + sum u_i f_i`, `x(0) = x0` (chart backend) on the grid.
pub fn reference_flow(model: &Model, x0: Option<&Mat>, u: &ControlSignal, grid: &[f64]) -> Result<FlowCache> {
    check_grid(grid)?;
    if u.m() != model.m() {
        return Err(Error::DimensionMismatch(format!("control has {} channels, system {}", u.m(), model.m())));
    }
    let start = match (model, x0) {
        (Model::Group(sys), _) => Mat::identity(sys.d, sys.d),
        (Model::Chart(_), Some(x)) => x.clone(),
        (Model::Chart(_), None) => return Err(Error::InvalidArgument("chart flow needs an initial point".into())),
    };
    if let (Model::Group(sys), true) = (model, u.is_zero()) {
        let states = grid.iter().map(|&t| linalg::expm(&(&sys.drift * (t - grid[0])))).collect();
        return Ok(FlowCache { grid: grid.to_vec(), states });
    }
    let mut states = Vec::with_capacity(grid.len());
    states.push(start);
    for w in grid.windows(2) {
        let next = advance_state(model, states.last().unwrap(), u, w[0], w[1])?;
        states.push(next);
    }
    Ok(FlowCache { grid: grid.to_vec(), states })
}

/// Left-trivialized covector transported by the flow:
/// `<p(t), B> = <p0, M B M^{-1}>`.
pub fn coadjoint_transport(sys: &MatrixGroupSystem, p0: &Mat, m: &Mat) -> Result<Mat> {
    let minv = m
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Integration("singular flow matrix".into()))?;
    let frame = sys.frame();
    let vals = Vector::from_iterator(
        frame.dim(),
        frame.frame().iter().map(|f| linalg::pair(p0, &(m * f * &minv))),
    );
    Ok(frame.covector_from_values(&vals))
}

/// A sampled extremal together with its control and reference flow.
#[derive(Clone, Debug)]
pub struct ExtremalTrajectory {
    pub grid: Vec<f64>,
    pub points: Vec<ExtremalPoint>,
    pub controls: Vec<Vector>,
    pub flow_cache: FlowCache,
    pub control: ControlSignal,
}

impl ExtremalTrajectory {
    pub fn horizon(&self) -> f64 {
        *self.grid.last().unwrap()
    }

    pub fn initial(&self) -> &ExtremalPoint {
        &self.points[0]
    }

    pub fn terminal(&self) -> &ExtremalPoint {
        self.points.last().unwrap()
    }

    /// Same trajectory with every covector multiplied by `s`.
    pub fn with_scaled_covector(&self, s: f64) -> Self {
        let mut out = self.clone();
        for pt in &mut out.points {
            pt.p *= s;
        }
        out
    }

    /// Max over the grid of `|q_k - q_0 M(t_k)|` (group backend).
    pub fn pi_consistency(&self, model: &Model) -> f64 {
        match model {
            Model::Group(_) => {
                let q0 = &self.points[0].q;
                self.points
                    .iter()
                    .zip(&self.flow_cache.states)
                    .map(|(pt, m)| linalg::max_abs(&(&pt.q - q0 * m)))
                    .fold(0.0, f64::max)
            }
            Model::Chart(_) => self
                .points
                .iter()
                .zip(&self.flow_cache.states)
                .map(|(pt, x)| linalg::max_abs(&(&pt.q - x)))
                .fold(0.0, f64::max),
        }
    }
}

fn control_samples(u: &ControlSignal, grid: &[f64]) -> Vec<Vector> {
    let last = grid.len() - 1;
    grid.iter()
        .enumerate()
        .map(|(k, &t)| u.value_side(t, if k == last { Side::Left } else { Side::Right }))
        .collect()
}

fn is_zero_covector(p: &Mat) -> bool {
    linalg::max_abs(p) == 0.0
}

fn cotangent_step(model: &Model, pt: &ExtremalPoint, ua: &Vector, um: &Vector, ub: &Vector, h: f64) -> ExtremalPoint {
    let shift = |base: &ExtremalPoint, d: &(Mat, Mat), s: f64| ExtremalPoint {
        q: &base.q + &d.0 * s,
        p: &base.p + &d.1 * s,
        t: base.t,
    };
    let k1 = hamiltonian_vector_field(model, pt, ua);
    let k2 = hamiltonian_vector_field(model, &shift(pt, &k1, 0.5 * h), um);
    let k3 = hamiltonian_vector_field(model, &shift(pt, &k2, 0.5 * h), um);
    let k4 = hamiltonian_vector_field(model, &shift(pt, &k3, h), ub);
    let q = &pt.q + (k1.0 + k2.0 * 2.0 + k3.0 * 2.0 + k4.0) * (h / 6.0);
    let p = &pt.p + (k1.1 + k2.1 * 2.0 + k3.1 * 2.0 + k4.1) * (h / 6.0);
    let q = match model {
        Model::Group(sys) => sys.project(&q),
        Model::Chart(_) => q,
    };
    ExtremalPoint { q, p, t: pt.t + h }
}

/// Lifts the reference flow to the cotangent bundle. The group backend uses
/// exact coadjoint transport through the cached flow; the chart backend
/// integrates the canonical equations of the reference Hamiltonian.
pub fn adjoint_trajectory(
    model: &Model,
    q0: &Mat,
    p0: &Mat,
    u: &ControlSignal,
    grid: &[f64],
) -> Result<ExtremalTrajectory> {
    if is_zero_covector(p0) {
        return Err(Error::InvalidArgument("initial covector is zero".into()));
    }
    let flow = reference_flow(model, Some(q0), u, grid)?;
    adjoint_from_flow(model, q0, p0, u, flow)
}

/// Same as [`adjoint_trajectory`] with a precomputed flow.
pub fn adjoint_from_flow(
    model: &Model,
    q0: &Mat,
    p0: &Mat,
    u: &ControlSignal,
    flow: FlowCache,
) -> Result<ExtremalTrajectory> {
    let grid = flow.grid.clone();
    if flow.states.len() != grid.len() {
        return Err(Error::InvalidArgument("flow cache does not match the grid".into()));
    }
    let points = match model {
        Model::Group(sys) => grid
            .iter()
            .zip(&flow.states)
            .map(|(&t, m)| Ok(ExtremalPoint { q: q0 * m, p: coadjoint_transport(sys, p0, m)?, t }))
            .collect::<Result<Vec<_>>>()?,
        Model::Chart(_) => {
            let mut pts = vec![ExtremalPoint { q: q0.clone(), p: p0.clone(), t: grid[0] }];
            for w in grid.windows(2) {
                let mut pt = pts.last().unwrap().clone();
                for (a, b) in segments(w[0], w[1], &u.breakpoints()) {
                    let ua = u.value_side(a, Side::Right);
                    let um = u.value(0.5 * (a + b));
                    let ub = u.value_side(b, Side::Left);
                    pt = cotangent_step(model, &pt, &ua, &um, &ub, b - a);
                }
                pt.t = w[1];
                pts.push(pt);
            }
            pts
        }
    };
    Ok(ExtremalTrajectory { controls: control_samples(u, &grid), grid, points, flow_cache: flow, control: u.clone() })
}

/// Integrates the closed-loop field `F_0 + sum nu_i F_i` with the singular
/// feedback `nu`, then records `nu` along the arc as a piecewise-cubic
/// control whose slopes come from the feedback's time derivative.
pub fn singular_extremal(
    model: &Model,
    q0: &Mat,
    p0: &Mat,
    grid: &[f64],
    max_condition: f64,
) -> Result<ExtremalTrajectory> {
    check_grid(grid)?;
    if is_zero_covector(p0) {
        return Err(Error::InvalidArgument("initial covector is zero".into()));
    }
    let nu = |pt: &ExtremalPoint| singular_feedback(model, pt, max_condition);
    let mut pts = vec![ExtremalPoint { q: q0.clone(), p: p0.clone(), t: grid[0] }];
    let mut controls = vec![nu(&pts[0])?];
    for w in grid.windows(2) {
        let h = w[1] - w[0];
        let pt = pts.last().unwrap();
        let shift = |d: &(Mat, Mat), s: f64| ExtremalPoint { q: &pt.q + &d.0 * s, p: &pt.p + &d.1 * s, t: pt.t };
        let k1 = hamiltonian_vector_field(model, pt, controls.last().unwrap());
        let s2 = shift(&k1, 0.5 * h);
        let k2 = hamiltonian_vector_field(model, &s2, &nu(&s2)?);
        let s3 = shift(&k2, 0.5 * h);
        let k3 = hamiltonian_vector_field(model, &s3, &nu(&s3)?);
        let s4 = shift(&k3, h);
        let k4 = hamiltonian_vector_field(model, &s4, &nu(&s4)?);
        let mut q = &pt.q + (k1.0 + k2.0 * 2.0 + k3.0 * 2.0 + k4.0) * (h / 6.0);
        let p = &pt.p + (k1.1 + k2.1 * 2.0 + k3.1 * 2.0 + k4.1) * (h / 6.0);
        if let Model::Group(sys) = model {
            q = sys.project(&q);
        }
        let next = ExtremalPoint { q, p, t: w[1] };
        controls.push(nu(&next)?);
        pts.push(next);
    }
    let m = model.m();
    let n = grid.len();
    let slopes: Vec<Vec<f64>> = (0..n)
        .map(|k| {
            let (a, b) = if k == 0 { (0, 1) } else if k == n - 1 { (n - 2, n - 1) } else { (k - 1, k + 1) };
            ((&controls[b] - &controls[a]) / (grid[b] - grid[a])).iter().copied().collect()
        })
        .collect();
    let control = if controls.iter().all(|c| linalg::max_abs_vec(c) == 0.0) {
        ControlSignal::zero(m)
    } else {
        ControlSignal::PiecewiseCubic {
            knots: grid.to_vec(),
            values: controls.iter().map(|c| c.iter().copied().collect()).collect(),
            slopes,
        }
    };
    let states = match model {
        Model::Group(_) => {
            let q0inv = q0
                .clone()
                .try_inverse()
                .ok_or_else(|| Error::InvalidArgument("singular initial point".into()))?;
            pts.iter().map(|pt| &q0inv * &pt.q).collect()
        }
        Model::Chart(_) => pts.iter().map(|pt| pt.q.clone()).collect(),
    };
    Ok(ExtremalTrajectory {
        grid: grid.to_vec(),
        points: pts,
        controls,
        flow_cache: FlowCache { grid: grid.to_vec(), states },
        control,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::extremal::dubins_initial_covector;
    use crate::model_core::{build_dubins_system, SpaceForm};

    fn fourier_control() -> ControlSignal {
        ControlSignal::Fourier {
            period: 1.0,
            cos: vec![vec![0.3, -0.2], vec![0.5, 0.1]],
            sin: vec![vec![0.0, 0.0], vec![-0.4, 0.7]],
        }
    }

    #[test]
    fn zero_control_gives_exponential() {
        let sys = build_dubins_system(SpaceForm::Euclidean, 3).unwrap();
        let model = Model::Group(sys.clone());
        let grid = uniform_grid(1.0, 0.25).unwrap();
        let fc = reference_flow(&model, None, &ControlSignal::zero(2), &grid).unwrap();
        assert!(linalg::max_abs(&(fc.states.last().unwrap() - linalg::expm(&sys.drift))) < 1e-14);
    }

    #[test]
    fn sphere_flow_stays_orthogonal() {
        let sys = build_dubins_system(SpaceForm::Sphere, 3).unwrap();
        let model = Model::Group(sys.clone());
        let grid = uniform_grid(1.0, 0.01).unwrap();
        for u in [ControlSignal::zero(2), fourier_control()] {
            let fc = reference_flow(&model, None, &u, &grid).unwrap();
            for m in &fc.states {
                assert!(linalg::max_abs(&(m.transpose() * m - Mat::identity(4, 4))) < 1e-10);
            }
        }
    }

    #[test]
    fn step_halving_shows_fourth_order() {
        let model = Model::Group(build_dubins_system(SpaceForm::Hyperbolic, 3).unwrap());
        let u = fourier_control();
        let end = |dt: f64| {
            let fc = reference_flow(&model, None, &u, &uniform_grid(1.0, dt).unwrap()).unwrap();
            fc.states.last().unwrap().clone()
        };
        let reference = end(1.0 / 640.0);
        let dts = [1.0 / 20.0, 1.0 / 40.0, 1.0 / 80.0];
        let errs: Vec<f64> = dts.iter().map(|&dt| linalg::max_abs(&(end(dt) - &reference))).collect();
        assert!(linalg::loglog_slope(&dts, &errs) > 3.7, "{errs:?}");
    }

    #[test]
    fn adjoint_transport_and_conservation() {
        let sys = build_dubins_system(SpaceForm::Sphere, 3).unwrap();
        let model = Model::Group(sys.clone());
        let p0 = dubins_initial_covector(&sys).unwrap();
        let grid = uniform_grid(1.0, 0.05).unwrap();
        let tr = adjoint_trajectory(&model, &Mat::identity(4, 4), &p0, &ControlSignal::zero(2), &grid).unwrap();
        assert!(linalg::max_abs(&(&tr.points[0].p - &p0)) < 1e-14);
        for pt in &tr.points {
            assert!((linalg::pair(&pt.p, &sys.drift) - 1.0).abs() < 1e-12);
        }
        assert!(tr.pi_consistency(&model) < 1e-12);
    }

    #[test]
    fn chart_and_group_adjoints_agree_on_values() {
        // the closed-loop integrator reproduces exact coadjoint transport
        let sys = build_dubins_system(SpaceForm::Euclidean, 3).unwrap();
        let model = Model::Group(sys.clone());
        let p0 = dubins_initial_covector(&sys).unwrap();
        let grid = uniform_grid(1.0, 0.01).unwrap();
        let cl = singular_extremal(&model, &Mat::identity(4, 4), &p0, &grid, 1e8).unwrap();
        let ex = adjoint_trajectory(&model, &Mat::identity(4, 4), &p0, &ControlSignal::zero(2), &grid).unwrap();
        assert!(cl.control.is_zero());
        for (a, b) in cl.points.iter().zip(&ex.points) {
            assert!(linalg::max_abs(&(&a.p - &b.p)) < 1e-12);
            assert!(linalg::max_abs(&(&a.q - &b.q)) < 1e-12);
        }
    }

    #[test]
    fn grid_has_bounded_step() {
        let g = uniform_grid(1.0, 0.003).unwrap();
        assert!(g.windows(2).all(|w| w[1] - w[0] <= 0.003 + 1e-15));
        assert_eq!(*g.last().unwrap(), 1.0);
        assert!(uniform_grid(0.0, 0.1).is_err());
    }
}
