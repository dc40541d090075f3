//! Random competitors in a graph neighborhood of the reference trajectory.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::extremal::{advance_state, reference_flow, ControlSignal, ExtremalTrajectory, FlowCache};
use crate::falsifier::needle::{needle_variation, NeedleWord};
use crate::linalg::{self, Mat, Vector};
use crate::model_core::{adapted_chart, AdaptedChart, MatrixGroupSystem, Model};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetSpec {
    /// The terminal point itself.
    Point,
    /// The integral manifold of Lie(f) through the terminal point.
    IntegralManifold,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FalsifierSettings {
    pub n_samples: usize,
    /// Graph-distance radius of the neighborhood.
    pub radius: f64,
    pub seed: u64,
    pub target: TargetSpec,
    /// Allowed early arrival before a competitor counts as a counterexample.
    pub time_tolerance: f64,
    /// Band `|x_i| <= tol` around the target in the chart at the endpoint.
    pub target_tolerance: f64,
    /// Half-width of the re-timing scan.
    pub horizon_slack: f64,
    /// Nominal integration step.
    pub dt: f64,
    /// Step-doubling bound on the integrated competitor.
    pub integrator_tolerance: f64,
    /// Harmonics of the band-limited family.
    pub harmonics: usize,
}

impl Default for FalsifierSettings {
    fn default() -> Self {
        FalsifierSettings {
            n_samples: 200,
            radius: 0.05,
            seed: 0,
            target: TargetSpec::IntegralManifold,
            time_tolerance: 1e-6,
            target_tolerance: 1e-6,
            horizon_slack: 0.1,
            dt: 0.01,
            integrator_tolerance: 1e-8,
            harmonics: 3,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CompetitorFamily {
    Needle,
    BandLimited,
    Retimed,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleStatus {
    Reached,
    OutsideRadius,
    Unreached,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompetitorRecord {
    pub index: usize,
    /// ChaCha stream of the sample under the sweep seed.
    pub stream: u64,
    pub family: CompetitorFamily,
    pub status: SampleStatus,
    pub arrival_time: Option<f64>,
    pub graph_distance: Option<f64>,
    pub target_residual: Option<f64>,
    pub dynamics_residual: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Competitor {
    pub index: usize,
    pub family: CompetitorFamily,
    pub arrival_time: f64,
    pub control: ControlSignal,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FalsifierVerdict {
    NoCounterexample,
    Counterexample,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FalsificationReport {
    pub n_samples: usize,
    pub radius: f64,
    pub seed: u64,
    pub target: TargetSpec,
    pub reference_time: f64,
    pub time_tolerance: f64,
    /// Samples that reached the target inside the neighborhood.
    pub competing: usize,
    pub min_arrival_time: Option<f64>,
    pub verdict: FalsifierVerdict,
    /// Earliest-arriving competitor; the witness when refuted.
    pub best: Option<Competitor>,
    pub records: Vec<CompetitorRecord>,
}

impl FalsificationReport {
    pub fn refuted(&self) -> bool {
        self.verdict == FalsifierVerdict::Counterexample
    }
}

struct Ctx<'a> {
    model: &'a Model,
    sys: &'a MatrixGroupSystem,
    extremal: &'a ExtremalTrajectory,
    settings: &'a FalsifierSettings,
    chart: AdaptedChart,
    q0: Mat,
    horizon: f64,
    steps: usize,
    span: f64,
}

impl Ctx<'_> {
    fn correction(&self, c: &[f64]) -> ControlSignal {
        let m = self.sys.m();
        match self.settings.target {
            TargetSpec::IntegralManifold => ControlSignal::Constant { value: c.to_vec() },
            TargetSpec::Point => ControlSignal::PiecewiseCubic {
                knots: vec![0.0, self.span],
                values: vec![c[..m].to_vec(), c[m..2 * m].to_vec()],
                slopes: vec![c[2 * m..3 * m].to_vec(), c[3 * m..].to_vec()],
            },
        }
    }

    fn correction_dim(&self) -> usize {
        match self.settings.target {
            TargetSpec::IntegralManifold => self.sys.m(),
            TargetSpec::Point => 4 * self.sys.m(),
        }
    }

    fn grid(&self, tau: f64, steps: usize) -> Vec<f64> {
        (0..=steps).map(|k| tau * k as f64 / steps as f64).collect()
    }

    fn final_flow(&self, u: &ControlSignal, tau: f64, steps: usize) -> Result<Mat> {
        let mut m = Mat::identity(self.sys.d, self.sys.d);
        for w in self.grid(tau, steps).windows(2) {
            m = advance_state(self.model, &m, u, w[0], w[1])?;
        }
        Ok(m)
    }

    fn target_residual(&self, flow: &Mat) -> Result<Vector> {
        let x = self.chart.inverse(&(&self.q0 * flow))?;
        Ok(match self.settings.target {
            TargetSpec::Point => x,
            TargetSpec::IntegralManifold => x.rows(self.chart.r, x.len() - self.chart.r).into_owned(),
        })
    }

    fn shoot_residual(&self, base: &ControlSignal, theta: &[f64]) -> Result<Vector> {
        if !(theta[0] > 0.0 && theta[0] <= self.span) {
            return Err(Error::OutOfChart(format!("arrival time {} outside (0, {}]", theta[0], self.span)));
        }
        let u = self.with_correction(base, &theta[1..]);
        self.target_residual(&self.final_flow(&u, theta[0], self.steps)?)
    }

    fn with_correction(&self, base: &ControlSignal, c: &[f64]) -> ControlSignal {
        if c.iter().all(|v| *v == 0.0) {
            return base.clone();
        }
        ControlSignal::Sum { terms: vec![base.clone(), self.correction(c)] }
    }

    /// Gauss-Newton on `(tau, c)` from `(T, 0)` so the corrected competitor
    /// hits the target.
    fn shoot(&self, base: &ControlSignal) -> Result<(f64, ControlSignal, f64)> {
        let p = 1 + self.correction_dim();
        let mut theta = vec![0.0; p];
        theta[0] = self.horizon;
        let mut r = self.shoot_residual(base, &theta)?;
        let mut rn = linalg::max_abs_vec(&r);
        for _ in 0..25 {
            if rn <= 1e-10 {
                break;
            }
            let mut jac = Mat::zeros(r.len(), p);
            for j in 0..p {
                let h = 1e-6;
                let mut plus = theta.clone();
                let mut minus = theta.clone();
                plus[j] += h;
                minus[j] -= h;
                let d = (self.shoot_residual(base, &plus)? - self.shoot_residual(base, &minus)?) / (2.0 * h);
                jac.set_column(j, &d);
            }
            let step = -(linalg::pinv(&jac) * &r);
            let mut lambda = 1.0;
            let mut improved = false;
            for _ in 0..20 {
                let cand: Vec<f64> = theta.iter().zip(step.iter()).map(|(t, s)| t + lambda * s).collect();
                if let Ok(cr) = self.shoot_residual(base, &cand) {
                    let cn = linalg::max_abs_vec(&cr);
                    if cn < rn {
                        theta = cand;
                        r = cr;
                        rn = cn;
                        improved = true;
                        break;
                    }
                }
                lambda *= 0.5;
            }
            if !improved {
                break;
            }
        }
        Ok((theta[0], self.with_correction(base, &theta[1..]), rn))
    }

    fn draw(&self, rng: &mut ChaCha8Rng, family: CompetitorFamily) -> Result<ControlSignal> {
        let u_hat = &self.extremal.control;
        let radius = self.settings.radius;
        let m = self.sys.m();
        let t_hat = self.horizon;
        match family {
            CompetitorFamily::Needle => {
                let r = self.sys.r();
                let channels: Vec<usize> = if m > 1 && rng.random_bool(0.75) {
                    // alternating pair: a commutator word
                    let i = rng.random_range(0..m);
                    let j = (i + rng.random_range(1..m)) % m;
                    (0..r).map(|k| if k % 2 == 0 { i } else { j }).collect()
                } else {
                    (0..r).map(|_| rng.random_range(0..m)).collect()
                };
                let t_bar: Vec<f64> = (0..r).map(|_| rng.random_range(-0.5..0.5)).collect();
                let t_vec: Vec<f64> = t_bar.iter().map(|t| t + rng.random_range(-0.25..0.25)).collect();
                let word = NeedleWord::new(channels, t_vec, t_bar)?;
                let eps = (radius * rng.random_range(0.2..1.0) / word.l1_norm().max(1e-12)).min((0.25 * t_hat).sqrt());
                let s_bar = rng.random_range(0.0..(t_hat - 2.0 * eps * eps));
                Ok(needle_variation(u_hat, t_hat, s_bar, &word, eps)?.control)
            }
            CompetitorFamily::BandLimited => {
                let k = self.settings.harmonics.max(1);
                let amp = radius * rng.random_range(0.1..0.9) / (t_hat * (2 * k + 1) as f64);
                let mut coeffs = || (0..m).map(|_| amp * rng.random_range(-1.0..1.0)).collect::<Vec<f64>>();
                let cos: Vec<Vec<f64>> = (0..=k).map(|_| coeffs()).collect();
                let sin: Vec<Vec<f64>> = (0..=k).map(|_| coeffs()).collect();
                let bump = ControlSignal::Fourier { period: t_hat, cos, sin };
                Ok(ControlSignal::Sum { terms: vec![u_hat.clone(), bump] })
            }
            CompetitorFamily::Retimed => {
                let tau = t_hat + self.settings.horizon_slack * rng.random_range(-1.0..1.0);
                Ok(ControlSignal::Scaled { inner: Box::new(u_hat.clone()), offset: 0.0, time_factor: t_hat / tau, amplitude: 1.0 })
            }
        }
    }

    /// Max over a merged grid of the first-order chart distance
    /// `|M_ref^{-1} M - I|`, with both trajectories held at their endpoints.
    fn graph_distance(&self, u: &ControlSignal, flow: &FlowCache, tau: f64) -> Result<f64> {
        let end = tau.max(self.horizon);
        let mut times: Vec<f64> = flow.grid.clone();
        times.extend(self.extremal.grid.iter().copied());
        times.extend(u.breakpoints().into_iter().filter(|&s| s > 0.0 && s < end));
        times.sort_by(f64::total_cmp);
        times.dedup();
        let eye = Mat::identity(self.sys.d, self.sys.d);
        let mut worst: f64 = 0.0;
        for t in times {
            let mc = flow.at(self.model, u, t.min(tau))?;
            let mr = self.extremal.flow_cache.at(self.model, &self.extremal.control, t.min(self.horizon))?;
            let rel = mr.try_inverse().ok_or_else(|| Error::Integration("singular flow matrix".into()))? * mc - &eye;
            worst = worst.max(self.sys.frame().coords(&rel).norm());
        }
        Ok(worst)
    }

    fn run(&self, index: usize) -> (CompetitorRecord, Option<Competitor>) {
        let stream = index as u64;
        let family = [CompetitorFamily::Needle, CompetitorFamily::BandLimited, CompetitorFamily::Retimed][index % 3];
        let mut rec = CompetitorRecord {
            index,
            stream,
            family,
            status: SampleStatus::Unreached,
            arrival_time: None,
            graph_distance: None,
            target_residual: None,
            dynamics_residual: None,
            note: None,
        };
        match self.evaluate(stream, family, &mut rec) {
            Ok(Some(c)) => (rec, Some(c)),
            Ok(None) => (rec, None),
            Err(e) => {
                rec.status = SampleStatus::Unreached;
                rec.note = Some(e.to_string());
                (rec, None)
            }
        }
    }

    fn evaluate(&self, stream: u64, family: CompetitorFamily, rec: &mut CompetitorRecord) -> Result<Option<Competitor>> {
        let base = if self.settings.radius == 0.0 {
            self.extremal.control.clone()
        } else {
            let mut rng = ChaCha8Rng::seed_from_u64(self.settings.seed);
            rng.set_stream(stream);
            self.draw(&mut rng, family)?
        };
        let (tau, u, resid) = self.shoot(&base)?;
        rec.target_residual = Some(resid);
        if resid > self.settings.target_tolerance {
            rec.note = Some("shooting did not reach the target band".into());
            return Ok(None);
        }
        let flow = reference_flow(self.model, None, &u, &self.grid(tau, self.steps))?;
        let fine = self.final_flow(&u, tau, 2 * self.steps)?;
        let dyn_resid = linalg::max_abs(&(flow.states.last().unwrap() - fine));
        rec.dynamics_residual = Some(dyn_resid);
        if dyn_resid > self.settings.integrator_tolerance {
            rec.note = Some("integration error above tolerance".into());
            return Ok(None);
        }
        // an earlier pass through the target band counts as arrival
        let tol = self.settings.target_tolerance;
        let arrival = flow
            .grid
            .iter()
            .zip(&flow.states)
            .find(|(_, m)| self.target_residual(m).is_ok_and(|r| linalg::max_abs_vec(&r) <= tol))
            .map_or(tau, |(&t, _)| t.min(tau));
        let dist = self.graph_distance(&u, &flow, tau)?;
        rec.graph_distance = Some(dist);
        if dist > self.settings.radius + 1e-12 {
            rec.status = SampleStatus::OutsideRadius;
            return Ok(None);
        }
        rec.status = SampleStatus::Reached;
        rec.arrival_time = Some(arrival);
        Ok(Some(Competitor { index: rec.index, family, arrival_time: arrival, control: u }))
    }
}

/// Samples competitors from needle variations, band-limited perturbations and
/// re-timings of the reference control, corrects each onto the target by
/// shooting in the arrival time and a low-dimensional control correction,
/// and compares arrival times with the reference horizon.
pub fn competitor_sweep(model: &Model, extremal: &ExtremalTrajectory, settings: &FalsifierSettings) -> Result<FalsificationReport> {
    let sys = model
        .as_group()
        .ok_or_else(|| Error::Unsupported("the competitor sweep runs on the group backend".into()))?;
    if !(settings.radius >= 0.0) || !(settings.dt > 0.0) || !(settings.horizon_slack >= 0.0) {
        return Err(Error::InvalidArgument("falsifier radius, dt and slack must be non-negative".into()));
    }
    let horizon = extremal.horizon();
    let span = horizon + 2.0 * settings.horizon_slack.max(settings.dt);
    let q_f = &extremal.terminal().q;
    let mut chart = adapted_chart(sys, q_f, &[])?;
    chart.radius = 1.0;
    let ctx = Ctx {
        model,
        sys,
        extremal,
        settings,
        chart,
        q0: extremal.initial().q.clone(),
        horizon,
        steps: (horizon / settings.dt).ceil().max(4.0) as usize,
        span,
    };
    let results: Vec<(CompetitorRecord, Option<Competitor>)> =
        (0..settings.n_samples).into_par_iter().map(|i| ctx.run(i)).collect();
    let mut records = Vec::with_capacity(results.len());
    let mut best: Option<Competitor> = None;
    for (rec, comp) in results {
        if let Some(c) = comp {
            if best.as_ref().is_none_or(|b| c.arrival_time < b.arrival_time) {
                best = Some(c);
            }
        }
        records.push(rec);
    }
    let competing = records.iter().filter(|r| r.status == SampleStatus::Reached).count();
    let min_arrival_time = best.as_ref().map(|b| b.arrival_time);
    let verdict = if min_arrival_time.is_some_and(|t| t < horizon - settings.time_tolerance) {
        FalsifierVerdict::Counterexample
    } else {
        FalsifierVerdict::NoCounterexample
    };
    Ok(FalsificationReport {
        n_samples: settings.n_samples,
        radius: settings.radius,
        seed: settings.seed,
        target: settings.target,
        reference_time: horizon,
        time_tolerance: settings.time_tolerance,
        competing,
        min_arrival_time,
        verdict,
        best,
        records,
    })
}

/// Trajectory of a competitor: time, the state matrix row by row and the control.
pub fn write_competitor_csv<W: Write>(model: &Model, q0: &Mat, competitor: &Competitor, dt: f64, out: W) -> Result<()> {
    let grid = crate::extremal::uniform_grid(competitor.arrival_time, dt)?;
    let flow = reference_flow(model, None, &competitor.control, &grid)?;
    let d = q0.nrows();
    let m = competitor.control.m();
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["t".to_string()];
    for i in 0..d {
        for j in 0..d {
            header.push(format!("q{i}{j}"));
        }
    }
    header.extend((0..m).map(|i| format!("u{i}")));
    w.write_record(&header)?;
    for (&t, mt) in grid.iter().zip(&flow.states) {
        let q = q0 * mt;
        let mut row = vec![format!("{t}")];
        for i in 0..d {
            for j in 0..d {
                row.push(format!("{}", q[(i, j)]));
            }
        }
        row.extend(competitor.control.value(t).iter().map(|v| format!("{v}")));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::extremal::{adjoint_trajectory, dubins_initial_covector, uniform_grid};
    use crate::model_core::{build_dubins_system, SpaceForm};

    fn reference(sf: SpaceForm, u: &ControlSignal) -> (Model, ExtremalTrajectory) {
        let sys = build_dubins_system(sf, 3).unwrap();
        let p0 = dubins_initial_covector(&sys).unwrap();
        let model = Model::Group(sys);
        let grid = uniform_grid(1.0, 0.01).unwrap();
        let traj = adjoint_trajectory(&model, &Mat::identity(4, 4), &p0, u, &grid).unwrap();
        (model, traj)
    }

    fn s_curve(a: f64) -> ControlSignal {
        ControlSignal::PiecewiseConstant { breaks: vec![0.0, 0.5, 1.0], values: vec![vec![a, 0.0], vec![-a, 0.0]] }
    }

    fn small(n: usize) -> FalsifierSettings {
        FalsifierSettings { n_samples: n, seed: 11, ..Default::default() }
    }

    #[test]
    fn zero_radius_returns_the_reference() {
        let (model, traj) = reference(SpaceForm::Euclidean, &ControlSignal::zero(2));
        let rep = competitor_sweep(&model, &traj, &FalsifierSettings { radius: 0.0, ..small(3) }).unwrap();
        assert_eq!(rep.competing, 3);
        for r in &rep.records {
            assert_eq!(r.arrival_time, Some(1.0));
            assert_eq!(r.graph_distance, Some(0.0));
        }
        assert_eq!(rep.verdict, FalsifierVerdict::NoCounterexample);
    }

    #[test]
    fn straight_segment_is_not_beaten() {
        let (model, traj) = reference(SpaceForm::Euclidean, &ControlSignal::zero(2));
        let rep = competitor_sweep(&model, &traj, &small(24)).unwrap();
        assert!(rep.competing >= 12, "{rep:?}");
        assert!(rep.min_arrival_time.unwrap() >= 1.0 - 1e-6);
        assert_eq!(rep.verdict, FalsifierVerdict::NoCounterexample);
        for r in rep.records.iter().filter(|r| r.status == SampleStatus::Reached) {
            assert!(r.graph_distance.unwrap() <= 0.05 + 1e-12);
            assert!(r.dynamics_residual.unwrap() <= 1e-8);
        }
    }

    #[test]
    fn manufactured_s_curve_is_refuted() {
        let (model, traj) = reference(SpaceForm::Euclidean, &s_curve(2.0));
        let rep = competitor_sweep(&model, &traj, &small(24)).unwrap();
        assert_eq!(rep.verdict, FalsifierVerdict::Counterexample);
        let w = rep.best.as_ref().unwrap();
        assert!(w.arrival_time < 1.0 - 1e-6);
        // the witness really reaches the target earlier
        let sys = model.as_group().unwrap();
        let grid = uniform_grid(w.arrival_time, 0.001).unwrap();
        let flow = reference_flow(&model, None, &w.control, &grid).unwrap();
        let chart = adapted_chart(sys, &traj.terminal().q, &[]).unwrap();
        let x = chart.inverse(flow.states.last().unwrap()).unwrap();
        assert!(linalg::max_abs_vec(&x.rows(3, 3).into_owned()) < 1e-6, "{x}");
    }

    #[test]
    fn point_target_on_the_sphere() {
        let (model, traj) = reference(SpaceForm::Sphere, &ControlSignal::zero(2));
        let s = FalsifierSettings { target: TargetSpec::Point, ..small(6) };
        let rep = competitor_sweep(&model, &traj, &s).unwrap();
        assert!(rep.competing >= 1, "{rep:?}");
        assert_eq!(rep.verdict, FalsifierVerdict::NoCounterexample);
    }

    #[test]
    fn same_seed_same_bytes() {
        let (model, traj) = reference(SpaceForm::Hyperbolic, &ControlSignal::zero(2));
        let a = serde_json::to_string(&competitor_sweep(&model, &traj, &small(9)).unwrap()).unwrap();
        let b = serde_json::to_string(&competitor_sweep(&model, &traj, &small(9)).unwrap()).unwrap();
        assert_eq!(a, b);
        let c = serde_json::to_string(&competitor_sweep(&model, &traj, &FalsifierSettings { seed: 12, ..small(9) }).unwrap()).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn witness_csv_has_consistent_rows() {
        let (model, traj) = reference(SpaceForm::Euclidean, &s_curve(2.0));
        let rep = competitor_sweep(&model, &traj, &small(6)).unwrap();
        let mut buf = Vec::new();
        write_competitor_csv(&model, &traj.initial().q, rep.best.as_ref().unwrap(), 0.05, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let widths: Vec<usize> = text.lines().map(|l| l.split(',').count()).collect();
        assert!(widths.iter().all(|&w| w == 1 + 16 + 2));
    }
}
