//! Stage orchestration: conditions, coercivity, certificate, falsifier.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::extremal::{
    condition_battery, scan_residuals, singular_extremal, uniform_grid, write_trajectory_csv,
    BoundaryData, ConditionReport, ExtremalTrajectory,
};
use crate::falsifier::{competitor_sweep, write_competitor_csv, FalsificationReport};
use crate::model_core::{adapted_chart, Model};
use crate::reporting::config::{RunConfig, Stage, SystemSpec};
use crate::second_variation::{
    assemble_lq, conjugate_point_test, galerkin_coercivity, write_det_trace_csv, CoercivityReport, ConjugateOptions,
};
use crate::singular_geometry::{write_certificate_csv, CertificateReport, CertificateVerdict, Geometry};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OverallVerdict {
    OptimalityCertified,
    NotCertified,
    Refuted,
    Failed,
    /// No stage was requested.
    NotRun,
}

impl OverallVerdict {
    /// 0 certified or nothing run, 2 otherwise.
    pub fn exit_code(self) -> i32 {
        match self {
            OverallVerdict::OptimalityCertified | OverallVerdict::NotRun => 0,
            _ => 2,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageStatus {
    Passed,
    Failed,
    Error,
    Skipped,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: String,
    pub status: StageStatus,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: String,
    pub seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Versions {
    pub schema: u32,
    pub singcert: String,
}

impl Default for Versions {
    fn default() -> Self {
        Versions { schema: SCHEMA_VERSION, singcert: env!("CARGO_PKG_VERSION").to_string() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub versions: Versions,
    pub config: RunConfig,
    pub verdict: OverallVerdict,
    pub stages: Vec<StageRecord>,
    pub conditions: Option<ConditionReport>,
    pub galerkin: Vec<CoercivityReport>,
    pub conjugate_point: Option<CoercivityReport>,
    pub certificate: Option<CertificateReport>,
    pub falsifier: Option<FalsificationReport>,
}

impl RunReport {
    pub fn stage(&self, name: &str) -> Option<&StageRecord> {
        self.stages.iter().find(|s| s.stage == name)
    }

    pub fn coercive(&self) -> bool {
        self.galerkin.iter().any(|r| r.is_coercive()) || self.conjugate_point.as_ref().is_some_and(|r| r.is_coercive())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// A report with the CSV artifacts and stage timings that accompany it.
#[derive(Clone, Debug)]
pub struct RunOutput {
    pub report: RunReport,
    pub timings: Vec<StageTiming>,
    /// Artifact name (`trajectory`, `det_trace`, `certificate`, `competitor`) to CSV text.
    pub csv: BTreeMap<String, String>,
}

fn csv_text(f: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<String> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    String::from_utf8(buf).map_err(|e| Error::Integration(e.to_string()))
}

struct Runner {
    stages: Vec<StageRecord>,
    timings: Vec<StageTiming>,
    halted: bool,
}

impl Runner {
    fn record(&mut self, stage: &str, status: StageStatus, detail: String, started: Instant) {
        self.timings.push(StageTiming { stage: stage.into(), seconds: started.elapsed().as_secs_f64() });
        if status == StageStatus::Error {
            self.halted = true;
        }
        self.stages.push(StageRecord { stage: stage.into(), status, detail });
    }

    fn skip(&mut self, stage: &str, why: &str) {
        self.stages.push(StageRecord { stage: stage.into(), status: StageStatus::Skipped, detail: why.into() });
    }

    /// `None` when the stage must not run.
    fn gate(&mut self, cfg: &RunConfig, stage: Stage) -> Option<Instant> {
        let name = stage_name(stage);
        if !cfg.checks.contains(&stage) {
            self.skip(name, "not requested");
            None
        } else if self.halted {
            self.skip(name, "skipped after an earlier failure");
            None
        } else {
            Some(Instant::now())
        }
    }
}

fn stage_name(stage: Stage) -> &'static str {
    match stage {
        Stage::Conditions => "conditions",
        Stage::Coercivity => "coercivity",
        Stage::Certificate => "certificate",
        Stage::Falsifier => "falsifier",
    }
}

fn build_extremal(cfg: &RunConfig) -> Result<(Model, ExtremalTrajectory, BoundaryData)> {
    let built = cfg.system.build(cfg.drift_sign)?;
    let boundary = match &built.model {
        Model::Group(sys) => BoundaryData::dubins(sys),
        Model::Chart(_) => BoundaryData::default(),
    };
    let grid = uniform_grid(cfg.horizon, cfg.dt)?;
    let traj = singular_extremal(&built.model, &built.q0, &built.p0, &grid, cfg.tolerances.max_condition)?;
    Ok((built.model, traj, boundary))
}

/// Runs the requested stages in order. A stage error, or failed necessary
/// conditions, skips everything after it.
pub fn run_check(cfg: &RunConfig) -> Result<RunOutput> {
    cfg.validate()?;
    let mut run = Runner { stages: Vec::new(), timings: Vec::new(), halted: false };
    let mut report = RunReport {
        versions: Versions::default(),
        config: cfg.clone(),
        verdict: OverallVerdict::NotRun,
        stages: Vec::new(),
        conditions: None,
        galerkin: Vec::new(),
        conjugate_point: None,
        certificate: None,
        falsifier: None,
    };
    let mut csv = BTreeMap::new();
    if cfg.checks.is_empty() {
        return Ok(RunOutput { report, timings: Vec::new(), csv });
    }

    let started = Instant::now();
    let (model, traj, boundary) = match build_extremal(cfg) {
        Ok(v) => {
            run.record("extremal", StageStatus::Passed, format!("{} grid points", v.1.grid.len()), started);
            v
        }
        Err(e) => {
            run.record("extremal", StageStatus::Error, e.to_string(), started);
            for s in Stage::all() {
                run.gate(cfg, s);
            }
            report.stages = run.stages;
            report.verdict = OverallVerdict::Failed;
            return Ok(RunOutput { report, timings: run.timings, csv });
        }
    };

    if let Some(t0) = run.gate(cfg, Stage::Conditions) {
        match condition_battery(&model, &traj, &boundary, &cfg.tolerances) {
            Ok(rep) => {
                let failed = rep.failed();
                if cfg.outputs.trajectory_csv.is_some() {
                    let rows = scan_residuals(&model, &traj, &cfg.tolerances)?;
                    csv.insert("trajectory".into(), csv_text(|b| write_trajectory_csv(&traj, &rows, b))?);
                }
                if failed.is_empty() {
                    run.record("conditions", StageStatus::Passed, "all necessary conditions hold".into(), t0);
                } else {
                    run.record("conditions", StageStatus::Failed, format!("failed: {}", failed.join(", ")), t0);
                    run.halted = true;
                }
                report.conditions = Some(rep);
            }
            Err(e) => run.record("conditions", StageStatus::Error, e.to_string(), t0),
        }
    }

    if let Some(t0) = run.gate(cfg, Stage::Coercivity) {
        match coercivity_stage(cfg, &model, &traj) {
            Ok((gal, cp)) => {
                let passed = gal.iter().any(|r| r.is_coercive()) || cp.is_coercive();
                let detail = format!(
                    "galerkin {} / conjugate point {}",
                    if gal.iter().any(|r| r.is_coercive()) { "coercive" } else { "not coercive" },
                    if cp.is_coercive() { "coercive" } else { "not coercive" }
                );
                csv.insert("det_trace".into(), csv_text(|b| write_det_trace_csv(&cp, b))?);
                report.galerkin = gal;
                report.conjugate_point = Some(cp);
                run.record("coercivity", if passed { StageStatus::Passed } else { StageStatus::Failed }, detail, t0);
            }
            Err(e) => run.record("coercivity", StageStatus::Error, e.to_string(), t0),
        }
    }

    if let Some(t0) = run.gate(cfg, Stage::Certificate) {
        let res = Geometry::new(&model, &traj.initial().q, cfg.geometry.clone())
            .and_then(|g| g.certificate_check(&traj, &cfg.certificate));
        match res {
            Ok(rep) => {
                csv.insert("certificate".into(), csv_text(|b| write_certificate_csv(&rep, b))?);
                let ok = rep.verdict == CertificateVerdict::Certified;
                let detail = format!("min projected singular value {:.6e}", rep.min_singular_value);
                report.certificate = Some(rep);
                run.record("certificate", if ok { StageStatus::Passed } else { StageStatus::Failed }, detail, t0);
            }
            Err(e) => run.record("certificate", StageStatus::Error, e.to_string(), t0),
        }
    }

    if let Some(t0) = run.gate(cfg, Stage::Falsifier) {
        match competitor_sweep(&model, &traj, &cfg.falsifier) {
            Ok(rep) => {
                if let Some(best) = &rep.best {
                    csv.insert(
                        "competitor".into(),
                        csv_text(|b| write_competitor_csv(&model, &traj.initial().q, best, cfg.dt, b))?,
                    );
                }
                let detail = format!(
                    "{} of {} samples reached the target; earliest arrival {}",
                    rep.competing,
                    rep.n_samples,
                    rep.min_arrival_time.map_or("none".into(), |t| format!("{t:.9}"))
                );
                let status = if rep.refuted() { StageStatus::Failed } else { StageStatus::Passed };
                report.falsifier = Some(rep);
                run.record("falsifier", status, detail, t0);
            }
            Err(e) => run.record("falsifier", StageStatus::Error, e.to_string(), t0),
        }
    }

    report.stages = run.stages;
    report.verdict = overall_verdict(&report);
    Ok(RunOutput { report, timings: run.timings, csv })
}

fn coercivity_stage(
    cfg: &RunConfig,
    model: &Model,
    traj: &ExtremalTrajectory,
) -> Result<(Vec<CoercivityReport>, CoercivityReport)> {
    let sys = model
        .as_group()
        .ok_or_else(|| Error::Unsupported("the second variation is assembled on the group backend".into()))?;
    let start = traj.initial();
    let chart = adapted_chart(sys, &start.q, &[])?.with_covector(&start.p);
    let problem = assemble_lq(model, traj, &chart, 0.0)?;
    let gal = cfg
        .coercivity
        .galerkin_k
        .iter()
        .map(|&k| galerkin_coercivity(&problem, k))
        .collect::<Result<Vec<_>>>()?;
    let opts = ConjugateOptions {
        rho_grid: cfg.coercivity.rho_grid.clone(),
        steps: cfg.coercivity.conjugate_steps,
        floor: cfg.coercivity.det_floor,
    };
    let cp = conjugate_point_test(&problem, &opts)?;
    Ok((gal, cp))
}

fn overall_verdict(report: &RunReport) -> OverallVerdict {
    if report.falsifier.as_ref().is_some_and(|f| f.refuted()) {
        return OverallVerdict::Refuted;
    }
    let status = |name: &str| report.stage(name).map(|s| s.status);
    if report.stages.iter().any(|s| s.status == StageStatus::Error) || status("conditions") == Some(StageStatus::Failed) {
        return OverallVerdict::Failed;
    }
    let conditions = status("conditions") == Some(StageStatus::Passed);
    let certificate = report.certificate.as_ref().is_some_and(|c| c.verdict == CertificateVerdict::Certified);
    if conditions && report.coercive() && certificate {
        OverallVerdict::OptimalityCertified
    } else {
        OverallVerdict::NotCertified
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    #[serde(rename = "N")]
    N,
    Horizon,
    Rho,
    K,
}

impl std::str::FromStr for SweepParam {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "N" | "n" => Ok(SweepParam::N),
            "T" | "horizon" => Ok(SweepParam::Horizon),
            "rho" => Ok(SweepParam::Rho),
            "K" | "k" => Ok(SweepParam::K),
            other => Err(Error::Config(format!("unknown sweep parameter {other:?} (N, horizon, rho, K)"))),
        }
    }
}

fn as_count(v: f64, what: &str) -> Result<usize> {
    if v >= 0.0 && v.fract() == 0.0 {
        Ok(v as usize)
    } else {
        Err(Error::Config(format!("{what} must be a non-negative integer, got {v}")))
    }
}

/// `cfg` with one parameter replaced.
pub fn with_param(cfg: &RunConfig, param: SweepParam, value: f64) -> Result<RunConfig> {
    let mut out = cfg.clone();
    match param {
        SweepParam::N => match &mut out.system {
            SystemSpec::Dubins { n, .. } => *n = as_count(value, "N")?,
            SystemSpec::Chart { .. } => return Err(Error::Config("N sweeps need a Dubins system".into())),
        },
        SweepParam::Horizon => {
            // keep the relative grid density
            out.dt = cfg.dt * value / cfg.horizon;
            out.horizon = value;
        }
        SweepParam::Rho => {
            out.certificate.rho = value;
            out.coercivity.rho_grid = vec![value];
        }
        SweepParam::K => out.coercivity.galerkin_k = vec![as_count(value, "K")?],
    }
    out.validate()?;
    Ok(out)
}

/// One report per value.
pub fn run_sweep(cfg: &RunConfig, param: SweepParam, values: &[f64]) -> Result<Vec<RunOutput>> {
    values.iter().map(|&v| run_check(&with_param(cfg, param, v)?)).collect()
}

/// Writes the JSON report, the timings and the requested CSV artifacts.
pub fn emit(output: &RunOutput) -> Result<Vec<String>> {
    let paths = &output.report.config.outputs;
    let mut written = Vec::new();
    let mut put = |path: &Option<String>, text: Option<&String>| -> Result<()> {
        if let (Some(p), Some(t)) = (path, text) {
            if let Some(dir) = Path::new(p).parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir)?;
            }
            std::fs::write(p, t)?;
            written.push(p.clone());
        }
        Ok(())
    };
    let json = output.report.to_json()?;
    put(&paths.report, Some(&json))?;
    let timings = serde_json::to_string_pretty(&output.timings)?;
    put(&paths.timings, Some(&timings))?;
    put(&paths.trajectory_csv, output.csv.get("trajectory"))?;
    put(&paths.det_trace_csv, output.csv.get("det_trace"))?;
    put(&paths.certificate_csv, output.csv.get("certificate"))?;
    put(&paths.competitor_csv, output.csv.get("competitor"))?;
    Ok(written)
}

/// Sizes the global rayon pool from `SINGCERT_THREADS` when set.
pub fn init_thread_pool() -> Result<()> {
    if let Ok(v) = std::env::var("SINGCERT_THREADS") {
        let n: usize = v.parse().map_err(|_| Error::Config(format!("SINGCERT_THREADS={v:?} is not a count")))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(e.to_string()))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model_core::SpaceForm;

    fn quick(space: SpaceForm, n: usize) -> RunConfig {
        let mut cfg = RunConfig::dubins(space, n);
        cfg.falsifier.n_samples = 6;
        cfg.coercivity.conjugate_steps = 200;
        cfg.certificate.lambda_samples = 16;
        cfg
    }

    #[test]
    fn default_dubins_is_certified() {
        let out = run_check(&quick(SpaceForm::Euclidean, 3)).unwrap();
        assert_eq!(out.report.verdict, OverallVerdict::OptimalityCertified, "{:?}", out.report.stages);
        assert_eq!(out.report.stages.len(), 5);
        assert_eq!(out.timings.len(), 5);
        assert!(out.csv.contains_key("det_trace"));
    }

    #[test]
    fn flipped_drift_fails_the_legendre_condition() {
        let cfg = RunConfig { drift_sign: -1.0, ..quick(SpaceForm::Euclidean, 3) };
        let out = run_check(&cfg).unwrap();
        let r = &out.report;
        assert_eq!(r.verdict, OverallVerdict::Failed, "{:?}", r.stages);
        let cond = r.conditions.as_ref().unwrap();
        assert!(!cond.get("sglc").unwrap().passed);
        for s in ["coercivity", "certificate", "falsifier"] {
            assert_eq!(r.stage(s).unwrap().status, StageStatus::Skipped);
        }
    }

    #[test]
    fn empty_checks_echo_the_config() {
        let cfg = RunConfig { checks: Vec::new(), ..Default::default() };
        let out = run_check(&cfg).unwrap();
        assert_eq!(out.report.verdict, OverallVerdict::NotRun);
        assert!(out.report.stages.is_empty());
        assert_eq!(out.report.config, cfg);
    }

    #[test]
    fn report_round_trips() {
        let cfg = RunConfig { checks: vec![Stage::Conditions, Stage::Certificate], ..quick(SpaceForm::Sphere, 3) };
        let out = run_check(&cfg).unwrap();
        let back = RunReport::from_json(&out.report.to_json().unwrap()).unwrap();
        assert_eq!(back.config, out.report.config);
        assert_eq!(back.verdict, out.report.verdict);
        assert_eq!(back.stages, out.report.stages);
        assert_eq!(back.to_json().unwrap(), out.report.to_json().unwrap());
    }

    #[test]
    fn sweep_over_nothing_is_empty() {
        assert!(run_sweep(&RunConfig::default(), SweepParam::N, &[]).unwrap().is_empty());
        assert!(with_param(&RunConfig::default(), SweepParam::N, 3.5).is_err());
        assert_eq!("T".parse::<SweepParam>().unwrap(), SweepParam::Horizon);
    }
}
