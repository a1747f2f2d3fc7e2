//! Finite element meshes built from pixel grids, with hanging-node and
//! periodic constraint extraction.

mod constraints;
mod macro_mesh;
mod quadtree;

pub use constraints::{
    extract_constraints, AffineField, ConstraintRow, ConstraintSet, Coupling, RowRhs,
};
pub use macro_mesh::MacroMesh;
pub use quadtree::{
    build_quadtree_mesh, build_uniform_mesh, BoundaryClass, HangingNode, Leaf, LeafBox,
    PairMaster, PeriodicPair, QuadtreeMesh,
};

/// Node index into a mesh.
pub type NodeId = usize;
