use crate::error::{Error, Result};
use crate::fem::CsrMatrix;
use crate::mesh::{PairMaster, QuadtreeMesh};

/// Linearized macro displacement field
/// `u(x) = value + grad (x - origin)` used to drive micro problems. The
/// full (unsymmetrized) gradient is kept so affine macro states are
/// reproduced exactly on homogeneous cells.
#[derive(Debug, Clone, Copy)]
pub struct AffineField {
    pub origin: [f64; 2],
    pub value: [f64; 2],
    pub grad: [[f64; 2]; 2],
}

impl AffineField {
    /// Pure strain state from Voigt components (eps11, eps22, gamma12),
    /// engineering shear convention.
    pub fn from_strain(eps: [f64; 3]) -> Self {
        Self {
            origin: [0.0, 0.0],
            value: [0.0, 0.0],
            grad: [[eps[0], 0.5 * eps[2]], [0.5 * eps[2], eps[1]]],
        }
    }

    pub fn zero() -> Self {
        Self::from_strain([0.0; 3])
    }

    pub fn eval(&self, x: [f64; 2]) -> [f64; 2] {
        let d = [x[0] - self.origin[0], x[1] - self.origin[1]];
        [
            self.value[0] + self.grad[0][0] * d[0] + self.grad[0][1] * d[1],
            self.value[1] + self.grad[1][0] * d[0] + self.grad[1][1] * d[1],
        ]
    }

    /// Displacement jump over a periodic offset.
    pub fn gap(&self, offset: [f64; 2]) -> [f64; 2] {
        [
            self.grad[0][0] * offset[0] + self.grad[0][1] * offset[1],
            self.grad[1][0] * offset[0] + self.grad[1][1] * offset[1],
        ]
    }

    /// Symmetric strain in Voigt form (engineering shear).
    pub fn strain(&self) -> [f64; 3] {
        [self.grad[0][0], self.grad[1][1], self.grad[0][1] + self.grad[1][0]]
    }
}

/// How the right-hand side of a scalar constraint row is generated from a
/// macro field.
#[derive(Debug, Clone, Copy)]
pub enum RowRhs {
    /// Homogeneous (hanging-node interpolation).
    Zero,
    /// Periodic gap: component `comp` of `grad * offset`.
    Gap { offset: [f64; 2], comp: usize },
    /// Prescribed value: component `comp` of the field at `pos`.
    Anchor { pos: [f64; 2], comp: usize },
}

/// One scalar linear constraint `sum coeff * d_dof = rhs`. The
/// `eliminated` dof carries the unit coefficient and is removed when the
/// saddle system is reduced.
#[derive(Debug, Clone)]
pub struct ConstraintRow {
    pub terms: Vec<(usize, f64)>,
    pub rhs: RowRhs,
    pub eliminated: usize,
}

/// Sparse linear constraint rows over displacement dofs: hanging-node
/// interpolation, periodicity and the translation anchor, plus the
/// right-hand-side generator for a linearized macro field.
#[derive(Debug, Clone)]
pub struct ConstraintSet {
    n_dofs: usize,
    rows: Vec<ConstraintRow>,
    n_hanging: usize,
    n_pairs: usize,
}

/// Micro-macro coupling condition on the unit cell boundary.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Coupling {
    Periodic,
}

impl ConstraintSet {
    pub fn new(n_dofs: usize, rows: Vec<ConstraintRow>) -> Self {
        Self { n_dofs, rows, n_hanging: 0, n_pairs: 0 }
    }

    pub fn n_dofs(&self) -> usize {
        self.n_dofs
    }

    pub fn rows(&self) -> &[ConstraintRow] {
        &self.rows
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    /// Number of hanging-node records (per node, not per scalar row).
    pub fn n_hanging(&self) -> usize {
        self.n_hanging
    }

    /// Number of periodic pairs L after hanging-node exclusion.
    pub fn n_periodic_pairs(&self) -> usize {
        self.n_pairs
    }

    /// Right-hand-side vector for a linearized macro field.
    pub fn gaps(&self, field: &AffineField) -> Vec<f64> {
        self.rows
            .iter()
            .map(|row| match row.rhs {
                RowRhs::Zero => 0.0,
                RowRhs::Gap { offset, comp } => field.gap(offset)[comp],
                RowRhs::Anchor { pos, comp } => field.eval(pos)[comp],
            })
            .collect()
    }

    /// The constraint matrix G as sparse rows over all dofs.
    pub fn matrix(&self) -> CsrMatrix {
        let mut triplets = Vec::new();
        for (r, row) in self.rows.iter().enumerate() {
            for &(dof, coeff) in &row.terms {
                triplets.push((r as u32, dof as u32, coeff));
            }
        }
        CsrMatrix::from_triplets(self.rows.len(), self.n_dofs, triplets)
    }
}

fn dof_x(node: usize) -> usize {
    2 * node
}

fn dof_y(node: usize) -> usize {
    2 * node + 1
}

/// Extract all linear constraints of a periodic unit cell: homogeneous
/// hanging-node rows, periodic gap rows for each slave boundary node and
/// two anchor rows pinning the lower-left corner to the macro field.
pub fn extract_constraints(mesh: &QuadtreeMesh, coupling: Coupling) -> Result<ConstraintSet> {
    let Coupling::Periodic = coupling;
    let n_dofs = 2 * mesh.n_nodes();
    let mut rows = Vec::new();

    for h in mesh.hanging() {
        let (a, b) = h.masters;
        let (wa, wb) = (1.0 - h.t, h.t);
        for comp in 0..2 {
            let dof = |n: usize| if comp == 0 { dof_x(n) } else { dof_y(n) };
            rows.push(ConstraintRow {
                terms: vec![(dof(h.node), 1.0), (dof(a), -wa), (dof(b), -wb)],
                rhs: RowRhs::Zero,
                eliminated: dof(h.node),
            });
        }
    }

    for pair in mesh.periodic_pairs() {
        for comp in 0..2 {
            let dof = |n: usize| if comp == 0 { dof_x(n) } else { dof_y(n) };
            let mut terms = vec![(dof(pair.slave), 1.0)];
            match pair.master {
                PairMaster::Node(m) => terms.push((dof(m), -1.0)),
                PairMaster::Edge(a, b, t) => {
                    terms.push((dof(a), -(1.0 - t)));
                    terms.push((dof(b), -t));
                }
            }
            rows.push(ConstraintRow {
                terms,
                rhs: RowRhs::Gap { offset: pair.offset, comp },
                eliminated: dof(pair.slave),
            });
        }
    }

    let anchor = mesh.anchor_node();
    let anchor_pos = mesh.nodes()[anchor];
    for comp in 0..2 {
        let dof = if comp == 0 { dof_x(anchor) } else { dof_y(anchor) };
        rows.push(ConstraintRow {
            terms: vec![(dof, 1.0)],
            rhs: RowRhs::Anchor { pos: anchor_pos, comp },
            eliminated: dof,
        });
    }

    // Each row eliminates a distinct dof, so G has full row rank by
    // construction; duplicates indicate a mesh inconsistency.
    let mut seen = std::collections::HashSet::new();
    for row in &rows {
        if !seen.insert(row.eliminated) {
            return Err(Error::PeriodicMismatch(format!(
                "dof {} constrained twice",
                row.eliminated
            )));
        }
    }

    Ok(ConstraintSet {
        n_dofs,
        rows,
        n_hanging: mesh.hanging().len(),
        n_pairs: mesh.periodic_pairs().len(),
    })
}
