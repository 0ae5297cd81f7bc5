//! Approximate linear programs: model container, backends and builders.

pub mod backend;
pub mod builder;
pub mod model;

pub use backend::{
    FeasibilityReport, LpSolution, LpStatus, SimplexBackend, SolverBackend, SolverError,
};
pub use builder::{
    build_falp, build_falp_with, build_fglp, build_fglp_with, guide_shift, solve, vfa_value,
    ConstraintSamplePlan, SolvedVfa, VfaWeights,
};
pub use model::{LpModel, RowTag};
