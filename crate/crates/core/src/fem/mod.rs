//! Q1 plane-strain elements, sparse assembly and the constrained
//! saddle-point solver.

mod assemble;
mod cholesky;
mod element;
mod solve;
mod sparse;

pub use assemble::{assemble, assemble_macro, assemble_macro_tensor};
pub use cholesky::{nested_dissection, LdlFactor};
pub use element::{
    b_matrix, displacement_at, element_stiffness, gauss_points, gradient_at, q1_dshape, q1_shape,
    strain_at, GAUSS_1D,
};
pub use solve::{energy_norm_sq, solve_saddle, SaddleSolution, SaddleSolver};
pub use sparse::{CsrMatrix, SparseSymmetric};
