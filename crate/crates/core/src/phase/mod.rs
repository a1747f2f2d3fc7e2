//! Pixel microstructure images and their material models.

mod grid;
mod io;
mod material;
mod synth;

pub use grid::{CellMaterial, PhaseGrid};
pub use io::{load_grid, load_material_table, save_csv, save_pgm, GridFormat};
pub use material::{plane_strain_tensor, Elasticity2D, MaterialTable, PhaseProperties};
pub use synth::{synth_microstructure, Axis, SynthSpec};

/// Identifier of a material phase.
pub type PhaseId = u16;
