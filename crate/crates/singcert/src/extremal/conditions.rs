//! Necessary-condition battery along a sampled extremal.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::extremal::hamiltonian::{
    drift_brackets, hamiltonian_bracket, legendre_form, singular_feedback, switching_functions, PointResiduals,
};
use crate::extremal::{ExtremalPoint, ExtremalTrajectory};
use crate::linalg::{self, Mat, Vector};
use crate::model_core::algebra::span_residual;
use crate::model_core::{BracketWord, MatrixGroupSystem, Model, Resolution};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    /// Equality residuals.
    pub equality: f64,
    /// Relative singular-value margin for rank decisions.
    pub rank: f64,
    /// Smallest accepted SGLC margin.
    pub sglc_margin: f64,
    /// Largest accepted condition number of the Legendre form.
    pub max_condition: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances { equality: 1e-9, rank: 1e-8, sglc_margin: 1e-6, max_condition: 1e8 }
    }
}

/// Tangent bases of the boundary manifolds at the endpoints, in the
/// storage convention of the backend (left-trivialized on the group).
#[derive(Clone, Debug, Default)]
pub struct BoundaryData {
    pub initial: Vec<Mat>,
    pub terminal: Vec<Mat>,
}

impl BoundaryData {
    /// `N_0` and `N_f` of the Dubins problem: both tangent to `span{[A_i, A_j]}`.
    pub fn dubins(sys: &MatrixGroupSystem) -> Self {
        let b = sys.boundary_tangent_basis();
        BoundaryData { initial: b.clone(), terminal: b }
    }
}

/// Covector of the Dubins singular extremal: annihilates `A_i`, `[A_i, A_j]`
/// and `[A_0, A_i]`, normalized by `<p, A_0> = 1`.
pub fn dubins_initial_covector(sys: &MatrixGroupSystem) -> Result<Mat> {
    let mut constraints: Vec<Mat> = sys.controlled.clone();
    constraints.extend(sys.boundary_tangent_basis());
    for a in &sys.controlled {
        constraints.push(&sys.drift * a - a * &sys.drift);
    }
    let frame = sys.frame().frame();
    let mut c = Mat::zeros(constraints.len(), frame.len());
    for (r, b) in constraints.iter().enumerate() {
        for (k, f) in frame.iter().enumerate() {
            c[(r, k)] = linalg::pair(b, f);
        }
    }
    let ns = linalg::null_space(&c, linalg::RANK_RTOL);
    if ns.ncols() != 1 {
        return Err(Error::Structure(format!("annihilator has dimension {}, expected 1", ns.ncols())));
    }
    let p = sys.frame().compose(&ns.column(0).into_owned());
    let scale = linalg::pair(&p, &sys.drift);
    if scale.abs() < 1e-12 {
        return Err(Error::Abnormal(scale));
    }
    let p = p / scale;
    let resid = constraints.iter().map(|b| linalg::pair(&p, b).abs()).fold(0.0, f64::max);
    if resid > 1e-12 {
        return Err(Error::Structure(format!("annihilation residual {resid:e}")));
    }
    Ok(p)
}

/// Words spanning the controlled Lie algebra: the closure words on the
/// group, the closure computed at `q0` on the chart backend.
pub fn lie_words(model: &Model, q0: &Mat) -> Result<Vec<BracketWord>> {
    match model {
        Model::Group(sys) => Ok(sys.lie_closure_words.clone()),
        Model::Chart(sys) => {
            let x = Vector::from_column_slice(q0.as_slice());
            Ok(sys.closure_at(&x, 4)?.0)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionCheck {
    pub name: String,
    pub passed: bool,
    pub residual: f64,
    pub tolerance: f64,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WordResidual {
    pub word: String,
    pub residual: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WordResolution {
    pub word: String,
    pub resolution: Resolution,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub checks: Vec<ConditionCheck>,
    /// `min_t (-lambda_max(L))`.
    pub sglc_margin: f64,
    pub legendre_eig_min: f64,
    pub legendre_eig_max: f64,
    pub regularity_rank: usize,
    pub regularity_rank_margin: f64,
    pub hogc_violations: Vec<WordResidual>,
    /// Bracket words evaluated by finite differences (chart backend).
    pub approximate_words: Vec<WordResolution>,
}

impl ConditionReport {
    pub fn get(&self, name: &str) -> Option<&ConditionCheck> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failed(&self) -> Vec<&str> {
        self.checks.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect()
    }
}

struct Regularity {
    rank: usize,
    margin: f64,
    residual: f64,
}

fn regularity_at(model: &Model, q: &Mat, words: &[BracketWord]) -> Result<Regularity> {
    let mut span = Vec::new();
    for w in words {
        span.push(model.bracket_value(q, w)?.0);
    }
    for i in 1..=model.m() {
        span.push(model.bracket_value(q, &BracketWord::pair(0, i))?.0);
    }
    let s = linalg::singular_values(&linalg::stack_columns(&span));
    let smax = s.first().copied().unwrap_or(0.0);
    let rank = linalg::rank(&linalg::stack_columns(&span), linalg::RANK_RTOL);
    let margin = if smax > 0.0 { s[s.len() - 1] / smax } else { 0.0 };
    let mut residual = 0.0_f64;
    for w in words {
        let v = model.bracket_value(q, &BracketWord::bracket(BracketWord::field(0), w.clone()))?.0;
        residual = residual.max(span_residual(&span, &v));
    }
    Ok(Regularity { rank, margin, residual })
}

struct PointScan {
    row: PointResiduals,
    hogc_words: Vec<f64>,
    eig_min: f64,
    feedback_gap: f64,
    feedback_ok: bool,
    regularity: Option<Regularity>,
}

fn scan_point(
    model: &Model,
    pt: &ExtremalPoint,
    u: &Vector,
    words: &[BracketWord],
    tol: &Tolerances,
    with_regularity: bool,
) -> Result<PointScan> {
    let m = model.m();
    let fi = switching_functions(model, pt)?;
    let f0 = hamiltonian_bracket(model, pt, &BracketWord::field(0))?;
    let mut goh = 0.0_f64;
    for i in 1..=m {
        for j in 1..=m {
            goh = goh.max(hamiltonian_bracket(model, pt, &BracketWord::pair(i, j))?.abs());
        }
    }
    let hogc_words = words
        .iter()
        .map(|w| hamiltonian_bracket(model, pt, w).map(f64::abs))
        .collect::<Result<Vec<_>>>()?;
    let lf = legendre_form(model, pt)?;
    let (eig_min, eig_max) = lf.eigen_extremes();
    let f0i = drift_brackets(model, pt)?;
    let (f0i_resid, gap, ok) = match singular_feedback(model, pt, tol.max_condition) {
        Ok(nu) => {
            let mut r = 0.0_f64;
            for i in 0..m {
                let mut v = f0i[i];
                for j in 0..m {
                    v += nu[j] * hamiltonian_bracket(model, pt, &BracketWord::pair(j + 1, i + 1))?;
                }
                r = r.max(v.abs());
            }
            (r, linalg::max_abs_vec(&(u - nu)), true)
        }
        Err(_) => (f64::INFINITY, f64::INFINITY, false),
    };
    Ok(PointScan {
        row: PointResiduals {
            t: pt.t,
            switching: linalg::max_abs_vec(&fi),
            normality: (f0 - 1.0).abs(),
            goh,
            hogc: hogc_words.iter().copied().fold(0.0, f64::max),
            legendre_max_eig: eig_max,
            f0i_feedback: f0i_resid,
        },
        hogc_words,
        eig_min,
        feedback_gap: gap,
        feedback_ok: ok,
        regularity: if with_regularity { Some(regularity_at(model, &pt.q, words)?) } else { None },
    })
}

/// Per-point residual rows (suitable for CSV emission).
pub fn scan_residuals(model: &Model, traj: &ExtremalTrajectory, tol: &Tolerances) -> Result<Vec<PointResiduals>> {
    let words = lie_words(model, &traj.initial().q)?;
    traj.points
        .par_iter()
        .zip(traj.controls.par_iter())
        .map(|(pt, u)| scan_point(model, pt, u, &words, tol, false).map(|s| s.row))
        .collect()
}

fn boundary_residual(p: &Mat, basis: &[Mat]) -> f64 {
    basis.iter().map(|b| linalg::pair(p, b).abs()).fold(0.0, f64::max)
}

/// Evaluates the necessary conditions at every grid point. Failures are
/// report entries; errors are reserved for unresolvable brackets.
pub fn condition_battery(
    model: &Model,
    traj: &ExtremalTrajectory,
    boundary: &BoundaryData,
    tol: &Tolerances,
) -> Result<ConditionReport> {
    let q0 = &traj.initial().q;
    let words = lie_words(model, q0)?;
    // group brackets do not depend on q, so regularity is evaluated once there
    let per_point_reg = matches!(model, Model::Chart(_));
    let scans = traj
        .points
        .par_iter()
        .zip(traj.controls.par_iter())
        .enumerate()
        .map(|(k, (pt, u))| scan_point(model, pt, u, &words, tol, per_point_reg || k == 0))
        .collect::<Result<Vec<_>>>()?;

    let max_of = |f: &dyn Fn(&PointScan) -> f64| scans.iter().map(f).fold(0.0_f64, f64::max);
    let mut checks = Vec::new();
    let mut push = |name: &str, residual: f64, tolerance: f64, passed: bool, detail: String| {
        checks.push(ConditionCheck { name: name.into(), passed, residual, tolerance, detail });
    };
    let eq = tol.equality;

    let sw = max_of(&|s| s.row.switching);
    push("pmp_Fi", sw, eq, sw <= eq, "max |F_i| over the grid".into());
    let nm = max_of(&|s| s.row.normality);
    push("normality", nm, eq, nm <= eq, "max |F_0 - 1| over the grid".into());
    let goh = max_of(&|s| s.row.goh);
    push("goh", goh, eq, goh <= eq, "max |F_ij| over the grid".into());

    let mut hogc_violations = Vec::new();
    let mut hogc = 0.0_f64;
    for (j, w) in words.iter().enumerate() {
        let r = scans.iter().map(|s| s.hogc_words[j]).fold(0.0, f64::max);
        hogc = hogc.max(r);
        if r > eq {
            hogc_violations.push(WordResidual { word: w.to_string(), residual: r });
        }
    }
    push("hogc", hogc, eq, hogc <= eq, format!("{} words spanning Lie(f)", words.len()));

    let eig_max = scans.iter().map(|s| s.row.legendre_max_eig).fold(f64::NEG_INFINITY, f64::max);
    let eig_min = scans.iter().map(|s| s.eig_min).fold(f64::INFINITY, f64::min);
    let margin = -eig_max;
    push(
        "sglc",
        margin,
        tol.sglc_margin,
        margin >= tol.sglc_margin,
        format!("Legendre eigenvalues in [{eig_min:.6e}, {eig_max:.6e}]"),
    );

    let r_expected = words.len() + model.m();
    let regs: Vec<&Regularity> = scans.iter().filter_map(|s| s.regularity.as_ref()).collect();
    let reg_rank = regs.iter().map(|r| r.rank).min().unwrap_or(0);
    let reg_margin = regs.iter().map(|r| r.margin).fold(f64::INFINITY, f64::min);
    let reg_resid = regs.iter().map(|r| r.residual).fold(0.0, f64::max);
    push(
        "regularity_of_S",
        reg_resid,
        eq,
        reg_rank == r_expected && reg_margin >= tol.rank && reg_resid <= eq,
        format!("rank {reg_rank} of {r_expected}, relative margin {reg_margin:.3e}"),
    );

    let ti = boundary_residual(&traj.initial().p, &boundary.initial);
    push("transversality_initial", ti, eq, ti <= eq, format!("{} tangent directions", boundary.initial.len()));
    let tf = boundary_residual(&traj.terminal().p, &boundary.terminal);
    push("transversality_final", tf, eq, tf <= eq, format!("{} tangent directions", boundary.terminal.len()));

    let fb_ok = scans.iter().all(|s| s.feedback_ok);
    let f0i = max_of(&|s| s.row.f0i_feedback);
    push("F0i_feedback", f0i, eq, fb_ok && f0i <= eq, "max |F_0i + sum nu_j F_ji|".into());
    let gap = max_of(&|s| s.feedback_gap);
    push("control_is_feedback", gap, eq, fb_ok && gap <= eq, "max |u - nu| over the grid".into());

    let mut approximate_words = Vec::new();
    if let Model::Chart(_) = model {
        let mut all = words.clone();
        for i in 0..=model.m() {
            for j in 0..=model.m() {
                all.push(BracketWord::triple(i, j, 0));
                all.push(BracketWord::triple(0, 0, j));
            }
        }
        all.sort();
        all.dedup();
        for w in all {
            let (_, r) = model.bracket_value(q0, &w)?;
            if matches!(r, Resolution::FiniteDifference { .. }) {
                approximate_words.push(WordResolution { word: w.to_string(), resolution: r });
            }
        }
    }

    Ok(ConditionReport {
        checks,
        sglc_margin: margin,
        legendre_eig_min: eig_min,
        legendre_eig_max: eig_max,
        regularity_rank: reg_rank,
        regularity_rank_margin: reg_margin,
        hogc_violations,
        approximate_words,
    })
}

/// CSV of the trajectory: `t`, flattened `q` and `p` (row-major), controls
/// and per-row residuals.
pub fn write_trajectory_csv<W: Write>(traj: &ExtremalTrajectory, rows: &[PointResiduals], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let q0 = &traj.points[0].q;
    let p0 = &traj.points[0].p;
    let mut header = vec!["t".to_string()];
    for (name, mat) in [("q", q0), ("p", p0)] {
        for i in 0..mat.nrows() {
            for j in 0..mat.ncols() {
                header.push(format!("{name}_{i}_{j}"));
            }
        }
    }
    for i in 0..traj.controls[0].len() {
        header.push(format!("u_{}", i + 1));
    }
    header.extend(
        ["switching", "normality", "goh", "hogc", "legendre_max_eig", "f0i_feedback"].map(String::from),
    );
    w.write_record(&header)?;
    for ((pt, u), r) in traj.points.iter().zip(&traj.controls).zip(rows) {
        let mut rec = vec![format!("{:e}", pt.t)];
        for mat in [&pt.q, &pt.p] {
            for i in 0..mat.nrows() {
                for j in 0..mat.ncols() {
                    rec.push(format!("{:e}", mat[(i, j)]));
                }
            }
        }
        rec.extend(u.iter().map(|v| format!("{v:e}")));
        rec.extend(
            [r.switching, r.normality, r.goh, r.hogc, r.legendre_max_eig, r.f0i_feedback].map(|v| format!("{v:e}")),
        );
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
