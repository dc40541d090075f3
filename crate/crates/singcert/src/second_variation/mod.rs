//! Goh-transformed second variation, its coercivity oracles and the
//! correspondence with the super-Hamiltonian geometry.

pub mod conjugate;
pub mod galerkin;
pub mod iota;
pub mod problem;
pub mod pullback;
pub mod report;

use crate::error::Result;
use crate::extremal::ExtremalTrajectory;
use crate::linalg::Mat;
use crate::model_core::Model;

pub use conjugate::{conjugate_point_test, default_rho_grid, ConjugateOptions};
pub use galerkin::{assemble_galerkin, galerkin_coercivity, restricted_spectrum, GalerkinForm, RestrictedSpectrum};
pub use iota::{h_second, iota_equivalence_check, IotaEntry, IotaReport, IotaSample};
pub use problem::{
    assemble_lq, goh_transform, GohTransform, InitialSpace, LieCoupling, LqCoefficients, LqSample,
    SecondVariationProblem,
};
pub use pullback::{field_jacobian_fd, pullback_fields, PullbackData, PullbackSample};
pub use report::{write_det_trace_csv, CoercivityMethod, CoercivityReport, DetSample, Refinement, RhoResult, Verdict};

/// Chart columns of the final boundary manifold's tangent space pulled back
/// to the initial point: frame coordinates of `Ad_{M(T)} [A_i, A_j]`.
pub fn terminal_tangent_basis(model: &Model, extremal: &ExtremalTrajectory) -> Result<Mat> {
    let sys = pullback::group_of(model)?;
    let m_t = extremal.flow_cache.states.last().unwrap();
    let minv = m_t
        .clone()
        .try_inverse()
        .ok_or_else(|| crate::error::Error::Integration("singular flow matrix".into()))?;
    let basis = sys.boundary_tangent_basis();
    let mut out = Mat::zeros(sys.n(), basis.len());
    for (k, b) in basis.iter().enumerate() {
        out.set_column(k, &sys.frame().coords(&(m_t * b * &minv)));
    }
    Ok(out)
}
