//! Reference flows, adjoint lifts, Hamiltonian brackets along extremals and
//! the necessary-condition battery.

pub mod conditions;
pub mod control;
pub mod flow;
pub mod hamiltonian;

pub use conditions::{
    condition_battery, dubins_initial_covector, lie_words, scan_residuals, write_trajectory_csv, BoundaryData,
    ConditionCheck, ConditionReport, Tolerances,
};
pub use control::{segments, ControlSignal, Side};
pub use flow::{
    adjoint_from_flow, adjoint_trajectory, advance_state, coadjoint_transport, reference_flow, singular_extremal,
    uniform_grid, ExtremalPoint, ExtremalTrajectory, FlowCache,
};
pub use hamiltonian::{
    chart_lifted_field,
    feedback_rhs, hamiltonian_bracket, hamiltonian_vector_field, legendre_form, legendre_form_with_controls, left_invariant_field, velocity_element,
    singular_feedback, switching_functions, LegendreForm, PointResiduals, DEFAULT_MAX_CONDITION,
};
