//! System representations: the matrix-group backend (exact brackets) and the
//! chart backend (polynomial fields with finite-difference fallback).

pub mod algebra;
pub mod chart;
pub mod chart_system;
pub mod dubins;
pub mod words;

use crate::error::Result;
use crate::linalg::{Mat, Vector};

pub use algebra::{commutator, lie_closure, Closure, FrameCoords, LieAlgebraElement};
pub use chart::{adapted_chart, AdaptedChart};
pub use chart_system::{ChartSystem, PolynomialField, Resolution, VectorField};
pub use dubins::{
    build_dubins_system, verify_structure_properties, MatrixGroupSystem, PropertyCheck, PropertyReport, SpaceForm,
};
pub use words::BracketWord;

/// A control-affine system on either backend.
///
/// States and covectors are stored as matrices: `d x d` group elements and
/// left-trivialized covectors on the group backend, `n x 1` columns on the
/// chart backend. The pairing is always `trace(p^T v)`.
#[derive(Clone, Debug)]
pub enum Model {
    Group(MatrixGroupSystem),
    Chart(ChartSystem),
}

impl Model {
    pub fn m(&self) -> usize {
        match self {
            Model::Group(s) => s.m(),
            Model::Chart(s) => s.m(),
        }
    }

    pub fn n(&self) -> usize {
        match self {
            Model::Group(s) => s.n(),
            Model::Chart(s) => s.n,
        }
    }

    pub fn as_group(&self) -> Option<&MatrixGroupSystem> {
        match self {
            Model::Group(s) => Some(s),
            Model::Chart(_) => None,
        }
    }

    /// Bracket value at `q`: the (left-trivialized) algebra element on the
    /// group backend, the field value as a column on the chart backend.
    pub fn bracket_value(&self, q: &Mat, word: &BracketWord) -> Result<(Mat, Resolution)> {
        match self {
            Model::Group(s) => Ok((s.element(word)?, Resolution::Exact)),
            Model::Chart(s) => {
                let x = Vector::from_column_slice(q.as_slice());
                let (v, r) = s.bracket_value(&x, word)?;
                Ok((Mat::from_column_slice(v.len(), 1, v.as_slice()), r))
            }
        }
    }

    /// Values spanning the controlled Lie algebra at `q`.
    pub fn lie_basis_at(&self, q: &Mat) -> Result<Vec<Mat>> {
        match self {
            Model::Group(s) => Ok(s.lie_closure_basis.clone()),
            Model::Chart(s) => {
                let x = Vector::from_column_slice(q.as_slice());
                let (_, vals) = s.closure_at(&x, 4)?;
                Ok(vals.into_iter().map(|v| Mat::from_column_slice(v.len(), 1, v.as_slice())).collect())
            }
        }
    }
}
