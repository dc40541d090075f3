//! Certification of singular extremals for control-affine systems with
//! an integrable controlled Lie algebra.

pub mod error;
pub mod extremal;
pub mod falsifier;
pub mod linalg;
pub mod model_core;
pub mod reporting;
pub mod second_variation;
pub mod singular_geometry;

pub use error::{Error, Result};
pub use linalg::{Mat, Vector};
pub use model_core::{
    adapted_chart, build_dubins_system, verify_structure_properties, AdaptedChart, BracketWord, ChartSystem,
    MatrixGroupSystem, Model, PolynomialField, PropertyReport, Resolution, SpaceForm,
};
pub use extremal::{ControlSignal, ExtremalPoint, ExtremalTrajectory, Tolerances};
pub use falsifier::{competitor_sweep, driftless_scaling_check, needle_variation, FalsificationReport, FalsifierSettings};
pub use reporting::{run_check, run_sweep, OverallVerdict, RunConfig, RunReport, Stage, SweepParam, SystemSpec};
pub use second_variation::{conjugate_point_test, galerkin_coercivity, CoercivityReport, SecondVariationProblem};
pub use singular_geometry::{CertificateReport, CertificateSettings, Geometry, GeometryOptions};
