//! The submanifolds `Sigma` and `S`, the projection `phi`, the
//! super-Hamiltonian `H_0` and the field-of-extremals certificate.

pub mod certificate;
pub mod projection;

pub use certificate::{
    write_certificate_csv, write_flow_csv, CertificateReport, CertificateSettings, CertificateVerdict, FlowedSample,
    LagrangianGraph,
};
pub use projection::{
    ChiHessianEntry, ChiHessianReport, Geometry, GeometryOptions, GeometryPoint, ProjectionResult, TangentVector,
};
