//! True error computation against reference solutions, the error
//! decomposition into modeling and discretization parts, recovery-based
//! error estimation and efficiency indices.

mod breakdown;
mod macro_error;
mod projection;
mod true_error;
mod zz;

pub use breakdown::{
    decompose_from_solutions, decompose_micro_error, elasticity_error, ErrorBreakdown, MicroCase,
};
pub use macro_error::{macro_error, MacroErrorNorms};
pub use projection::{check_nested, FieldSampler};
pub use true_error::{aggregate_to_mesh, diff_norms, diff_norms_per_leaf, field_norms, NormPair};
pub use zz::{
    efficiency_index, recover_nodal_stress, zz_estimate, EstimateReport, NodalStressRecovery,
    RecoveryScheme,
};
