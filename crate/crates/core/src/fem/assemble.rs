use rayon::prelude::*;

use crate::error::Result;
use crate::fem::element::element_stiffness;
use crate::fem::sparse::{CsrMatrix, SparseSymmetric};
use crate::mesh::{MacroMesh, QuadtreeMesh};
use crate::phase::{Elasticity2D, MaterialTable};

/// Assemble the global stiffness over all node dofs (2 per node, node n
/// owning dofs 2n and 2n+1). Element matrices are computed in parallel;
/// the summation order is fixed by leaf index, so results are
/// run-to-run identical.
pub fn assemble(mesh: &QuadtreeMesh, table: &MaterialTable) -> Result<SparseSymmetric> {
    let leaves = mesh.leaves();
    let element_matrices: Vec<[[f64; 8]; 8]> = leaves
        .par_iter()
        .map(|leaf| {
            let c = table.cell_tensor(&leaf.material)?;
            element_stiffness(&mesh.leaf_corner_coords(leaf), &c)
        })
        .collect::<Result<_>>()?;

    let mut triplets = Vec::with_capacity(leaves.len() * 64);
    for (leaf, ke) in leaves.iter().zip(&element_matrices) {
        push_element(&mut triplets, &leaf.corners, ke);
    }
    let n = 2 * mesh.n_nodes();
    SparseSymmetric::new(CsrMatrix::from_triplets(n, n, triplets))
}

/// Assemble a macro mesh with one constant stiffness matrix per element
/// (all elements congruent on a uniform mesh).
pub fn assemble_macro(
    mesh: &MacroMesh,
    elem_matrix: impl Fn(usize) -> [[f64; 8]; 8],
) -> Result<SparseSymmetric> {
    let mut triplets = Vec::with_capacity(mesh.n_elems() * 64);
    for e in 0..mesh.n_elems() {
        let ke = elem_matrix(e);
        push_element(&mut triplets, &mesh.elem_nodes(e), &ke);
    }
    let n = mesh.n_dofs();
    SparseSymmetric::new(CsrMatrix::from_triplets(n, n, triplets))
}

/// Convenience: macro assembly from a constant homogenized tensor.
pub fn assemble_macro_tensor(mesh: &MacroMesh, c: &Elasticity2D) -> Result<SparseSymmetric> {
    let ke = element_stiffness(&mesh.elem_corner_coords(0), c)?;
    assemble_macro(mesh, |_| ke)
}

fn push_element(triplets: &mut Vec<(u32, u32, f64)>, nodes: &[usize; 4], ke: &[[f64; 8]; 8]) {
    let mut dofs = [0u32; 8];
    for (a, n) in nodes.iter().enumerate() {
        dofs[2 * a] = (2 * n) as u32;
        dofs[2 * a + 1] = (2 * n + 1) as u32;
    }
    for r in 0..8 {
        for c in 0..8 {
            let v = ke[r][c];
            if v != 0.0 {
                triplets.push((dofs[r], dofs[c], v));
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::build_uniform_mesh;
    use crate::phase::{plane_strain_tensor, PhaseGrid};

    #[test]
    fn one_element_matches_element_stiffness() {
        let grid = PhaseGrid::uniform(1, 1, 1.0, 0).unwrap();
        let mesh = build_uniform_mesh(&grid).unwrap();
        let table = MaterialTable::two_phase(100.0, 0.2, 192.1, 0.2).unwrap();
        let k = assemble(&mesh, &table).unwrap();
        let c = plane_strain_tensor(100.0, 0.2).unwrap();
        let ke = element_stiffness(&mesh.leaf_corner_coords(&mesh.leaves()[0]), &c).unwrap();
        let dofs: Vec<usize> = mesh.leaves()[0]
            .corners
            .iter()
            .flat_map(|n| [2 * n, 2 * n + 1])
            .collect();
        for r in 0..8 {
            for col in 0..8 {
                assert!((k.matrix().get(dofs[r], dofs[col]) - ke[r][col]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn energy_of_linear_field_is_analytic() {
        // 2x2 single-phase mesh: d^T K d = eps : C : eps * area for a
        // global linear displacement field.
        let grid = PhaseGrid::uniform(2, 2, 0.5, 0).unwrap();
        let mesh = build_uniform_mesh(&grid).unwrap();
        let table = MaterialTable::two_phase(100.0, 0.2, 192.1, 0.2).unwrap();
        let k = assemble(&mesh, &table).unwrap();
        let eps = [1.3e-3, -0.4e-3, 0.9e-3];
        let mut d = vec![0.0; 2 * mesh.n_nodes()];
        for (n, p) in mesh.nodes().iter().enumerate() {
            d[2 * n] = eps[0] * p[0] + 0.5 * eps[2] * p[1];
            d[2 * n + 1] = eps[1] * p[1] + 0.5 * eps[2] * p[0];
        }
        let c = plane_strain_tensor(100.0, 0.2).unwrap();
        let sig = c.stress(eps);
        let analytic: f64 = (0..3).map(|i| sig[i] * eps[i]).sum::<f64>() * 1.0;
        let energy = k.bilinear(&d, &d);
        assert!((energy - analytic).abs() < 1e-12 * analytic.abs().max(1.0));
    }

    #[test]
    fn mixed_phase_matches_dense_oracle() {
        use nalgebra::DMatrix;
        let cells = (0..16)
            .map(|k| crate::phase::CellMaterial::Discrete((k % 2) as u16))
            .collect();
        let grid = PhaseGrid::from_cells(4, 4, 0.25, cells).unwrap();
        let mesh = build_uniform_mesh(&grid).unwrap();
        let table = MaterialTable::two_phase(100.0, 0.2, 192.1, 0.3).unwrap();
        let k = assemble(&mesh, &table).unwrap();

        // Dense brute-force assembly.
        let n = 2 * mesh.n_nodes();
        let mut dense = DMatrix::<f64>::zeros(n, n);
        for leaf in mesh.leaves() {
            let c = table.cell_tensor(&leaf.material).unwrap();
            let ke = element_stiffness(&mesh.leaf_corner_coords(leaf), &c).unwrap();
            let dofs: Vec<usize> =
                leaf.corners.iter().flat_map(|m| [2 * m, 2 * m + 1]).collect();
            for r in 0..8 {
                for cc in 0..8 {
                    dense[(dofs[r], dofs[cc])] += ke[r][cc];
                }
            }
        }
        for r in 0..n {
            for c in 0..n {
                assert!(
                    (k.matrix().get(r, c) - dense[(r, c)]).abs() < 1e-12,
                    "entry ({r},{c})"
                );
            }
        }
    }
}
