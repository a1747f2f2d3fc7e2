//! Output emitters: legacy VTK unstructured grids, Matrix Market dumps.

mod mm;
mod vtk;

pub use mm::write_matrix_market;
pub use vtk::{write_vtk_macro, write_vtk_quadtree, CellField, PointField};
