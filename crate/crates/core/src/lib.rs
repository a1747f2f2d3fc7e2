//! Image-based microstructure finite elements.
//!
//! pixelfem turns pixel images of 2D multiphase microstructures into
//! plane-strain finite element models, computes homogenized elastic
//! properties and two-scale solutions on periodic unit cells, and
//! quantifies the modeling error introduced by resolution coarsening
//! separately from the mesh discretization error.
//!
//! The crate is organized along the pipeline:
//!
//! * [`phase`] — pixel grids, material tables and plane-strain stiffness,
//! * [`coarsen`] — uniform pixel coarsening (blending / phase-preserving)
//!   and quadtree mesh coarsening,
//! * [`mesh`] — quadtree meshes, hanging nodes and periodic constraints,
//! * [`fem`] — Q1 element stiffness, sparse assembly and the constrained
//!   saddle-point solver,
//! * [`homogenize`] — effective elasticity tensors and the two-scale
//!   macro problem (cantilever),
//! * [`error_analysis`] — true error decomposition, recovery-based error
//!   estimation and efficiency indices,
//! * [`study`] — coarsening study pipelines producing report tables,
//! * [`export`] — legacy VTK, Matrix Market and CSV emitters.

pub mod coarsen;
pub mod error;
pub mod error_analysis;
pub mod export;
pub mod fem;
pub mod homogenize;
pub mod mesh;
pub mod phase;
pub mod study;

pub use crate::coarsen::CoarseningReport;
pub use crate::error::{Error, Result};
pub use crate::error_analysis::{ErrorBreakdown, EstimateReport, RecoveryScheme};
pub use crate::fem::{SaddleSolution, SparseSymmetric};
pub use crate::homogenize::{MacroProblem, MicroSolver, TransformationMatrix};
pub use crate::mesh::{ConstraintSet, MacroMesh, QuadtreeMesh};
pub use crate::phase::{CellMaterial, Elasticity2D, MaterialTable, PhaseGrid, PhaseId};
