//! Super-Hamiltonian flow and the field-of-extremals certificate.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::extremal::{
    chart_lifted_field, left_invariant_field, segments, ControlSignal, ExtremalPoint, ExtremalTrajectory, Side,
};
use crate::linalg::{self, Mat, Vector};
use crate::model_core::{adapted_chart, AdaptedChart, Model};
use crate::singular_geometry::projection::Geometry;

/// Samples of one super-Hamiltonian trajectory with its distances to
/// `Sigma` and `S`.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowedSample {
    pub points: Vec<ExtremalPoint>,
    pub sigma_residuals: Vec<f64>,
    pub s_residuals: Vec<f64>,
}

impl Geometry<'_> {
    /// Vector field of `H_t = H_0 + sum u_i F_i`.
    pub fn super_hamiltonian_field(&self, pt: &ExtremalPoint, u: &Vector) -> Result<(Mat, Mat)> {
        match self.model {
            Model::Group(sys) => {
                let mut xi = self.h0_differential(pt)?;
                for (i, a) in sys.controlled.iter().enumerate() {
                    if u[i] != 0.0 {
                        xi += a * u[i];
                    }
                }
                Ok(left_invariant_field(sys, pt, &xi))
            }
            Model::Chart(sys) => {
                // Richardson-extrapolated central differences of H_0 in (x, lambda)
                let n = sys.n;
                let h = self.options.fd_step;
                let grad = |step: f64| -> Result<(Vector, Vector)> {
                    let mut gx = Vector::zeros(n);
                    let mut gl = Vector::zeros(n);
                    for k in 0..n {
                        for (which, out) in [(0, &mut gx), (1, &mut gl)] {
                            let mut plus = pt.clone();
                            let mut minus = pt.clone();
                            if which == 0 {
                                plus.q[k] += step;
                                minus.q[k] -= step;
                            } else {
                                plus.p[k] += step;
                                minus.p[k] -= step;
                            }
                            out[k] = (self.h0_eval(&plus)? - self.h0_eval(&minus)?) / (2.0 * step);
                        }
                    }
                    Ok((gx, gl))
                };
                let (gx1, gl1) = grad(h)?;
                let (gx2, gl2) = grad(0.5 * h)?;
                let gx = (gx2 * 4.0 - gx1) / 3.0;
                let gl = (gl2 * 4.0 - gl1) / 3.0;
                let mut w = Vector::zeros(sys.m() + 1);
                w.rows_mut(1, sys.m()).copy_from(u);
                let (dx, dl) = chart_lifted_field(sys, pt, &w);
                Ok((
                    dx + Mat::from_column_slice(n, 1, gl.as_slice()),
                    dl - Mat::from_column_slice(n, 1, gx.as_slice()),
                ))
            }
        }
    }

    fn super_step(&self, pt: &ExtremalPoint, u: &ControlSignal, a: f64, b: f64) -> Result<ExtremalPoint> {
        let h = b - a;
        let ua = u.value_side(a, Side::Right);
        let um = u.value(0.5 * (a + b));
        let ub = u.value_side(b, Side::Left);
        let shift = |d: &(Mat, Mat), s: f64| ExtremalPoint { q: &pt.q + &d.0 * s, p: &pt.p + &d.1 * s, t: pt.t };
        let k1 = self.super_hamiltonian_field(pt, &ua)?;
        let k2 = self.super_hamiltonian_field(&shift(&k1, 0.5 * h), &um)?;
        let k3 = self.super_hamiltonian_field(&shift(&k2, 0.5 * h), &um)?;
        let k4 = self.super_hamiltonian_field(&shift(&k3, h), &ub)?;
        let mut q = &pt.q + (k1.0 + k2.0 * 2.0 + k3.0 * 2.0 + k4.0) * (h / 6.0);
        let p = &pt.p + (k1.1 + k2.1 * 2.0 + k3.1 * 2.0 + k4.1) * (h / 6.0);
        if let Model::Group(sys) = self.model {
            q = sys.project(&q);
        }
        Ok(ExtremalPoint { q, p, t: b })
    }

    fn flow_one(&self, start: &ExtremalPoint, u: &ControlSignal, grid: &[f64]) -> Result<FlowedSample> {
        let mut cur = ExtremalPoint { t: grid[0], ..start.clone() };
        let mut out = FlowedSample { points: Vec::new(), sigma_residuals: Vec::new(), s_residuals: Vec::new() };
        for (k, &t) in grid.iter().enumerate() {
            if k > 0 {
                for (a, b) in segments(grid[k - 1], t, &u.breakpoints()) {
                    cur = self.super_step(&cur, u, a, b)?;
                }
                cur.t = t;
            }
            let gp = self.geometry_point(&cur)?;
            let sr = linalg::max_abs_vec(&gp.sigma_residuals);
            if sr > self.options.sigma_tol {
                return Err(Error::Integration(format!(
                    "super-Hamiltonian flow left Sigma at t = {t}: residual {sr:.3e}"
                )));
            }
            out.sigma_residuals.push(sr);
            out.s_residuals.push(linalg::max_abs_vec(&gp.s_residuals));
            out.points.push(cur.clone());
        }
        Ok(out)
    }

    /// Integrates `H_t` from each initial point over the grid, monitoring the
    /// distance to `Sigma`.
    pub fn super_hamiltonian_flow(
        &self,
        initial: &[ExtremalPoint],
        u: &ControlSignal,
        grid: &[f64],
    ) -> Result<Vec<FlowedSample>> {
        initial.par_iter().map(|pt| self.flow_one(pt, u, grid)).collect()
    }

    /// Lagrangian manifold `Lambda = {d alpha_rho}` in the adapted chart at
    /// the initial point of the extremal.
    pub fn lagrangian_graph(&self, extremal: &ExtremalTrajectory, rho: f64) -> Result<LagrangianGraph> {
        let sys = self
            .model
            .as_group()
            .ok_or_else(|| Error::Unsupported("the adapted chart needs the group backend".into()))?;
        let start = extremal.initial();
        let chart = adapted_chart(sys, &start.q, &[])?.with_covector(&start.p);
        Ok(LagrangianGraph { chart, rho })
    }

    /// Checks the projection hypothesis of the field-of-extremals theorem:
    /// the base projection of the transported tangent space of `Lambda`
    /// stays invertible along the arc.
    pub fn certificate_check(&self, extremal: &ExtremalTrajectory, settings: &CertificateSettings) -> Result<CertificateReport> {
        let graph = self.lagrangian_graph(extremal, settings.rho)?;
        let chart = &graph.chart;
        let n = chart.n();
        let r = chart.r;
        let hogc = (0..r).map(|k| chart.p_hat[k].abs()).fold(0.0, f64::max);

        // Lambda inside Sigma, spot-checked on seeded samples in the chart ball
        let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);
        let samples: Vec<Vector> = (0..settings.lambda_samples)
            .map(|_| {
                let dir = Vector::from_iterator(n, (0..n).map(|_| rng.random_range(-1.0..1.0)));
                let radius = settings.lambda_radius * rng.random_range(0.0_f64..1.0).powf(1.0 / n as f64);
                let norm = dir.norm().max(1e-300);
                dir * (radius / norm)
            })
            .collect();
        let lambda_sigma_residual = samples
            .par_iter()
            .map(|x| self.sigma_residual(&graph.point(x)))
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .fold(hogc, f64::max);
        let origin = graph.point(&Vector::zeros(n));
        let lambda_base_residual = linalg::max_abs(&(&origin.p - &extremal.initial().p))
            .max(linalg::max_abs(&(&origin.q - &extremal.initial().q)));
        if lambda_sigma_residual > self.options.sigma_tol {
            return Err(Error::Structure(format!("Lambda leaves Sigma: residual {lambda_sigma_residual:.3e}")));
        }

        // transported basis of T Lambda by central differences of the flow
        let s = settings.fd_step;
        let mut starts = Vec::with_capacity(2 * n);
        for k in 0..n {
            for sign in [1.0, -1.0] {
                let mut x = Vector::zeros(n);
                x[k] = sign * s;
                starts.push(graph.point(&x));
            }
        }
        let flows = self.super_hamiltonian_flow(&starts, &extremal.control, &extremal.grid)?;
        let sys = self.model.as_group().unwrap();
        let frame = sys.frame();
        let mut min_sv = Vec::with_capacity(extremal.grid.len());
        let mut sigma_drift = 0.0_f64;
        for f in &flows {
            sigma_drift = sigma_drift.max(f.sigma_residuals.iter().copied().fold(0.0, f64::max));
        }
        for (idx, reference) in extremal.points.iter().enumerate() {
            let ginv = reference
                .q
                .clone()
                .try_inverse()
                .ok_or_else(|| Error::Integration("singular reference point".into()))?;
            let mut d = Mat::zeros(n, n);
            for k in 0..n {
                let diff = (&flows[2 * k].points[idx].q - &flows[2 * k + 1].points[idx].q) / (2.0 * s);
                d.set_column(k, &frame.coords(&(&ginv * diff)));
            }
            let sv = linalg::singular_values(&d);
            min_sv.push(*sv.last().unwrap());
        }
        let min_singular_value = min_sv.iter().copied().fold(f64::INFINITY, f64::min);
        let verdict = if min_singular_value >= settings.margin {
            CertificateVerdict::Certified
        } else {
            CertificateVerdict::NotCertified
        };
        Ok(CertificateReport {
            rho: settings.rho,
            lambda_radius: settings.lambda_radius,
            lambda_samples: settings.lambda_samples,
            seed: settings.seed,
            lambda_sigma_residual,
            lambda_base_residual,
            sigma_drift,
            fd_step: s,
            times: extremal.grid.clone(),
            min_singular_values: min_sv,
            min_singular_value,
            margin: settings.margin,
            verdict,
        })
    }
}

/// `x -> d alpha_rho(x)` with `alpha_rho = sum_{i>R} p_i x_i + rho/2 sum_{i>R} x_i^2`.
#[derive(Clone, Debug)]
pub struct LagrangianGraph {
    pub chart: AdaptedChart,
    pub rho: f64,
}

impl LagrangianGraph {
    pub fn differential(&self, x: &Vector) -> Vector {
        let n = self.chart.n();
        Vector::from_iterator(
            n,
            (0..n).map(|i| if i < self.chart.r { 0.0 } else { self.chart.p_hat[i] + self.rho * x[i] }),
        )
    }

    pub fn point(&self, x: &Vector) -> ExtremalPoint {
        let (q, p) = self.chart.lift(x, &self.differential(x));
        ExtremalPoint { q, p, t: 0.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CertificateSettings {
    pub rho: f64,
    pub lambda_radius: f64,
    pub lambda_samples: usize,
    pub seed: u64,
    pub fd_step: f64,
    pub margin: f64,
}

impl Default for CertificateSettings {
    fn default() -> Self {
        CertificateSettings { rho: 1.0, lambda_radius: 0.05, lambda_samples: 128, seed: 0, fd_step: 1e-5, margin: 1e-3 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CertificateVerdict {
    Certified,
    NotCertified,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CertificateReport {
    pub rho: f64,
    pub lambda_radius: f64,
    pub lambda_samples: usize,
    pub seed: u64,
    pub lambda_sigma_residual: f64,
    /// Distance between `d alpha_rho(0)` and the initial point of the extremal.
    pub lambda_base_residual: f64,
    /// Largest distance to `Sigma` along the transported samples.
    pub sigma_drift: f64,
    pub fd_step: f64,
    pub times: Vec<f64>,
    pub min_singular_values: Vec<f64>,
    pub min_singular_value: f64,
    pub margin: f64,
    pub verdict: CertificateVerdict,
}

/// CSV of flowed samples: sample index, `t`, flattened `q` and `p`, and the
/// `Sigma`/`S` residuals.
pub fn write_flow_csv<W: Write>(samples: &[FlowedSample], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let Some(first) = samples.first().and_then(|s| s.points.first()) else {
        w.flush()?;
        return Ok(());
    };
    let mut header = vec!["sample".to_string(), "t".to_string()];
    for (name, mat) in [("q", &first.q), ("p", &first.p)] {
        for i in 0..mat.nrows() {
            for j in 0..mat.ncols() {
                header.push(format!("{name}_{i}_{j}"));
            }
        }
    }
    header.push("sigma_residual".into());
    header.push("s_residual".into());
    w.write_record(&header)?;
    for (k, s) in samples.iter().enumerate() {
        for (idx, pt) in s.points.iter().enumerate() {
            let mut rec = vec![k.to_string(), format!("{:e}", pt.t)];
            for mat in [&pt.q, &pt.p] {
                for i in 0..mat.nrows() {
                    for j in 0..mat.ncols() {
                        rec.push(format!("{:e}", mat[(i, j)]));
                    }
                }
            }
            rec.push(format!("{:e}", s.sigma_residuals[idx]));
            rec.push(format!("{:e}", s.s_residuals[idx]));
            w.write_record(&rec)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// CSV of the certificate trace: `t`, smallest singular value.
pub fn write_certificate_csv<W: Write>(report: &CertificateReport, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t", "min_singular_value"])?;
    for (t, s) in report.times.iter().zip(&report.min_singular_values) {
        w.write_record([format!("{t:e}"), format!("{s:e}")])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::extremal::{adjoint_trajectory, dubins_initial_covector, feedback_rhs, legendre_form, uniform_grid};
    use crate::model_core::{build_dubins_system, SpaceForm};
    use crate::singular_geometry::GeometryOptions;

    fn extremal(sf: SpaceForm, dt: f64) -> (Model, ExtremalTrajectory) {
        let sys = build_dubins_system(sf, 3).unwrap();
        let p0 = dubins_initial_covector(&sys).unwrap();
        let model = Model::Group(sys);
        let grid = uniform_grid(1.0, dt).unwrap();
        let tr = adjoint_trajectory(&model, &Mat::identity(4, 4), &p0, &ControlSignal::zero(2), &grid).unwrap();
        (model, tr)
    }

    #[test]
    fn super_flow_reproduces_the_extremal() {
        for sf in SpaceForm::all() {
            let (model, tr) = extremal(sf, 0.02);
            let g = Geometry::new(&model, &tr.initial().q, GeometryOptions::default()).unwrap();
            let out = g.super_hamiltonian_flow(&[tr.initial().clone()], &tr.control, &tr.grid).unwrap();
            for (a, b) in out[0].points.iter().zip(&tr.points) {
                assert!(linalg::max_abs(&(&a.q - &b.q)) < 1e-8, "{sf}");
                assert!(linalg::max_abs(&(&a.p - &b.p)) < 1e-8, "{sf}");
            }
        }
    }

    #[test]
    fn s_points_follow_the_singular_field() {
        // on S the super-Hamiltonian field equals F_0 + sum nu_i F_i
        let (model, tr) = extremal(SpaceForm::Sphere, 0.05);
        let g = Geometry::new(&model, &tr.initial().q, GeometryOptions::default()).unwrap();
        let sys = model.as_group().unwrap();
        let mut vals = sys.frame().covector_values(&tr.initial().p);
        vals[5] = 1.3;
        let pt = ExtremalPoint { p: sys.frame().covector_from_values(&vals), ..tr.initial().clone() };
        let (dq, dp) = g.super_hamiltonian_field(&pt, &Vector::zeros(2)).unwrap();
        let l = legendre_form(&model, &pt).unwrap().symmetric();
        let nu = l.lu().solve(&feedback_rhs(&model, &pt).unwrap()).unwrap();
        let (eq, ep) = crate::extremal::hamiltonian_vector_field(&model, &pt, &nu);
        assert!(linalg::max_abs(&(dq - eq)) < 1e-12);
        assert!(linalg::max_abs(&(dp - ep)) < 1e-12);
        let flowed = g.super_hamiltonian_flow(&[pt], &tr.control, &tr.grid).unwrap();
        assert!(flowed[0].s_residuals.iter().all(|&r| r < 1e-9));
    }

    #[test]
    fn certificate_on_dubins() {
        let (model, tr) = extremal(SpaceForm::Euclidean, 0.05);
        let g = Geometry::new(&model, &tr.initial().q, GeometryOptions::default()).unwrap();
        let rep = g
            .certificate_check(&tr, &CertificateSettings { lambda_samples: 16, ..Default::default() })
            .unwrap();
        assert_eq!(rep.verdict, CertificateVerdict::Certified);
        assert!((rep.min_singular_values[0] - 1.0).abs() < 1e-8);
        assert!(rep.lambda_sigma_residual < 1e-12);
    }

    #[test]
    fn focal_weight_degenerates_at_the_horizon() {
        // rho = -1/T gives det = 1 + rho t on the Euclidean arc
        let (model, tr) = extremal(SpaceForm::Euclidean, 0.05);
        let g = Geometry::new(&model, &tr.initial().q, GeometryOptions::default()).unwrap();
        let rep = g
            .certificate_check(&tr, &CertificateSettings { rho: -1.0, lambda_samples: 16, ..Default::default() })
            .unwrap();
        assert_eq!(rep.verdict, CertificateVerdict::NotCertified);
        assert!(*rep.min_singular_values.last().unwrap() < 1e-6);
        assert!(rep.min_singular_values[rep.min_singular_values.len() / 2] > 0.4);
    }

    #[test]
    fn flow_csv_has_constant_width() {
        let (model, tr) = extremal(SpaceForm::Euclidean, 0.25);
        let g = Geometry::new(&model, &tr.initial().q, GeometryOptions::default()).unwrap();
        let out = g.super_hamiltonian_flow(&[tr.initial().clone()], &tr.control, &tr.grid).unwrap();
        let mut buf = Vec::new();
        write_flow_csv(&out, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let widths: Vec<usize> = text.lines().map(|l| l.split(',').count()).collect();
        assert!(widths.iter().all(|&w| w == 2 + 32 + 2));
    }
}
