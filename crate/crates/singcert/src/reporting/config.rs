//! The JSON run configuration.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::extremal::{dubins_initial_covector, Tolerances};
use crate::falsifier::FalsifierSettings;
use crate::linalg::Mat;
use crate::model_core::{build_dubins_system, BracketWord, ChartSystem, Model, PolynomialField, SpaceForm, VectorField};
use crate::second_variation::default_rho_grid;
use crate::singular_geometry::{CertificateSettings, GeometryOptions};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SystemSpec {
    Dubins {
        space: SpaceForm,
        #[serde(rename = "N")]
        n: usize,
    },
    /// Polynomial fields `f_0, ..., f_m` in coordinates, with optional exact
    /// brackets keyed by word (`"[1,2]"`, `"[0,[0,1]]"`).
    Chart {
        n: usize,
        fields: Vec<PolynomialField>,
        #[serde(default)]
        brackets: BTreeMap<String, PolynomialField>,
        x0: Vec<f64>,
        p0: Vec<f64>,
    },
}

/// A built system with its initial point and covector.
pub struct BuiltSystem {
    pub model: Model,
    pub q0: Mat,
    pub p0: Mat,
}

impl SystemSpec {
    pub fn dubins(space: SpaceForm, n: usize) -> Self {
        SystemSpec::Dubins { space, n }
    }

    /// The covector always belongs to the unflipped system, so a negative
    /// `drift_sign` keeps `p0` and reverses the drift under it.
    pub fn build(&self, drift_sign: f64) -> Result<BuiltSystem> {
        match self {
            SystemSpec::Dubins { space, n } => {
                let mut sys = build_dubins_system(*space, *n)?;
                let p0 = dubins_initial_covector(&sys)?;
                if drift_sign != 1.0 {
                    sys = sys.with_drift_scaled(drift_sign)?;
                }
                let q0 = Mat::identity(sys.d, sys.d);
                Ok(BuiltSystem { model: Model::Group(sys), q0, p0 })
            }
            SystemSpec::Chart { n, fields, brackets, x0, p0 } => {
                if x0.len() != *n || p0.len() != *n {
                    return Err(Error::Config("x0 and p0 need n entries".into()));
                }
                let mut fs: Vec<Arc<dyn VectorField>> = Vec::with_capacity(fields.len());
                for (k, f) in fields.iter().enumerate() {
                    f.validate(*n)?;
                    if k == 0 && drift_sign != 1.0 {
                        let mut g = f.clone();
                        for comp in &mut g.components {
                            for mono in comp {
                                mono.coef *= drift_sign;
                            }
                        }
                        fs.push(Arc::new(g));
                    } else {
                        fs.push(Arc::new(f.clone()));
                    }
                }
                let mut bs: BTreeMap<BracketWord, Arc<dyn VectorField>> = BTreeMap::new();
                for (w, f) in brackets {
                    f.validate(*n)?;
                    let word: BracketWord = w.parse().map_err(|e| Error::Config(format!("bracket key {w:?}: {e}")))?;
                    bs.insert(word, Arc::new(f.clone()));
                }
                let sys = ChartSystem::new(*n, fs, bs)?;
                Ok(BuiltSystem {
                    model: Model::Chart(sys),
                    q0: Mat::from_column_slice(*n, 1, x0),
                    p0: Mat::from_column_slice(*n, 1, p0),
                })
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Conditions,
    Coercivity,
    Certificate,
    Falsifier,
}

impl Stage {
    pub fn all() -> Vec<Stage> {
        vec![Stage::Conditions, Stage::Coercivity, Stage::Certificate, Stage::Falsifier]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CoercivitySettings {
    /// Base sizes of the Galerkin ladders `K, 2K, 4K`.
    pub galerkin_k: Vec<usize>,
    pub rho_grid: Vec<f64>,
    pub conjugate_steps: usize,
    pub det_floor: f64,
}

impl Default for CoercivitySettings {
    fn default() -> Self {
        CoercivitySettings { galerkin_k: vec![16], rho_grid: default_rho_grid(), conjugate_steps: 1000, det_floor: 0.1 }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputPaths {
    pub report: Option<String>,
    pub trajectory_csv: Option<String>,
    pub det_trace_csv: Option<String>,
    pub certificate_csv: Option<String>,
    pub competitor_csv: Option<String>,
    /// Wall-clock per stage; kept out of the report so it stays reproducible.
    pub timings: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub system: SystemSpec,
    /// Multiplies the drift while keeping the covector of the unflipped system.
    pub drift_sign: f64,
    pub horizon: f64,
    /// Step of the extremal grid on which the conditions are scanned.
    pub dt: f64,
    pub checks: Vec<Stage>,
    pub tolerances: Tolerances,
    pub coercivity: CoercivitySettings,
    pub geometry: GeometryOptions,
    pub certificate: CertificateSettings,
    pub falsifier: FalsifierSettings,
    pub outputs: OutputPaths,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            system: SystemSpec::dubins(SpaceForm::Euclidean, 3),
            drift_sign: 1.0,
            horizon: 1.0,
            dt: 1e-3,
            checks: Stage::all(),
            tolerances: Tolerances::default(),
            coercivity: CoercivitySettings::default(),
            geometry: GeometryOptions::default(),
            certificate: CertificateSettings::default(),
            falsifier: FalsifierSettings::default(),
            outputs: OutputPaths::default(),
        }
    }
}

impl RunConfig {
    pub fn dubins(space: SpaceForm, n: usize) -> Self {
        RunConfig { system: SystemSpec::dubins(space, n), ..Default::default() }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// Pretty JSON with every default written out.
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if !(self.horizon > 0.0) || !(self.dt > 0.0) || self.dt > self.horizon {
            return bad(format!("need 0 < dt <= horizon, got dt {} horizon {}", self.dt, self.horizon));
        }
        if self.drift_sign.abs() != 1.0 {
            return bad(format!("drift_sign must be 1 or -1, got {}", self.drift_sign));
        }
        if self.coercivity.galerkin_k.iter().any(|&k| k < 4) {
            return bad("Galerkin sizes must be at least 4".into());
        }
        if self.coercivity.rho_grid.is_empty() || self.coercivity.conjugate_steps == 0 {
            return bad("conjugate-point test needs a rho grid and steps".into());
        }
        let mut seen = self.checks.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.checks.len() {
            return bad("checks list repeats a stage".into());
        }
        if let SystemSpec::Dubins { n, .. } = self.system {
            if n < 3 {
                return bad(format!("Dubins needs N >= 3, got {n}"));
            }
        }
        Ok(())
    }
}
