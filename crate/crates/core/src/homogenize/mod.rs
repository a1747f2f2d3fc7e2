//! Homogenized elasticity tensors and the two-scale macro problem:
//! micro unit-cell solves drive macro quadrature-point stiffness.

mod macro_problem;
mod micro;

pub use macro_problem::{
    energy_norm, fehmm_solve, macro_tensor_element, timoshenko_tip_deflection, MacroProblem,
    MacroSolution,
};
pub use micro::{
    fehmm_element_stiffness, macro_element_stiffness, transformation_matrix, unit_strain_states,
    MicroField, MicroSolver, TransformationMatrix,
};
