//! Empirical probes of local optimality: bracket-word control variations and
//! competitor sampling in a graph neighborhood of the reference.

pub mod needle;
pub mod sweep;

pub use needle::{
    driftless_scaling_check, needle_pullback_displacement, needle_variation, NeedleVariation, NeedleWord, ScalingReport,
};
pub use sweep::{
    competitor_sweep, write_competitor_csv, Competitor, CompetitorFamily, CompetitorRecord, FalsificationReport,
    FalsifierSettings, FalsifierVerdict, SampleStatus, TargetSpec,
};
