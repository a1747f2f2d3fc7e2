use crate::error::{Error, Result};
use crate::fem::{displacement_at, strain_at};
use crate::mesh::QuadtreeMesh;

/// Evaluates a finite element displacement field at arbitrary physical
/// points through the owning leaf's bilinear shape functions. Used to
/// project coarse solutions onto the Gauss points of a reference mesh.
pub struct FieldSampler<'a> {
    mesh: &'a QuadtreeMesh,
    u: &'a [f64],
    owner: Vec<u32>,
}

impl<'a> FieldSampler<'a> {
    pub fn new(mesh: &'a QuadtreeMesh, u: &'a [f64]) -> Self {
        assert_eq!(u.len(), 2 * mesh.n_nodes());
        Self { mesh, u, owner: mesh.leaf_owner_map() }
    }

    pub fn mesh(&self) -> &QuadtreeMesh {
        self.mesh
    }

    /// Leaf containing the physical point (boundary points resolve to the
    /// lower-left neighbor).
    pub fn locate(&self, x: f64, y: f64) -> usize {
        let (fw, fh) = self.mesh.fine_dims();
        let h = self.mesh.cell_size();
        let i = ((x / h).floor() as isize).clamp(0, fw as isize - 1) as usize;
        let j = ((y / h).floor() as isize).clamp(0, fh as isize - 1) as usize;
        self.owner[j * fw + i] as usize
    }

    fn leaf_dofs(&self, leaf_idx: usize) -> ([[f64; 2]; 4], [f64; 8]) {
        let leaf = &self.mesh.leaves()[leaf_idx];
        let coords = self.mesh.leaf_corner_coords(leaf);
        let mut dofs = [0.0; 8];
        for (a, n) in leaf.corners.iter().enumerate() {
            dofs[2 * a] = self.u[2 * n];
            dofs[2 * a + 1] = self.u[2 * n + 1];
        }
        (coords, dofs)
    }

    fn ref_coords(&self, leaf_idx: usize, x: f64, y: f64) -> (f64, f64) {
        let leaf = &self.mesh.leaves()[leaf_idx];
        let h = self.mesh.cell_size();
        let s = leaf.side() as f64 * h;
        let x0 = leaf.i0 as f64 * h;
        let y0 = leaf.j0 as f64 * h;
        (2.0 * (x - x0) / s - 1.0, 2.0 * (y - y0) / s - 1.0)
    }

    /// Displacement of the FE field at a physical point.
    pub fn displacement(&self, x: f64, y: f64) -> [f64; 2] {
        let leaf = self.locate(x, y);
        let (_, dofs) = self.leaf_dofs(leaf);
        let (xi, eta) = self.ref_coords(leaf, x, y);
        displacement_at(&dofs, xi, eta)
    }

    /// Strain (Voigt, engineering shear) at a physical point.
    pub fn strain(&self, x: f64, y: f64) -> Result<[f64; 3]> {
        let leaf = self.locate(x, y);
        let (coords, dofs) = self.leaf_dofs(leaf);
        let (xi, eta) = self.ref_coords(leaf, x, y);
        strain_at(&coords, &dofs, xi, eta)
    }

    /// Both displacement and strain in one lookup.
    pub fn sample(&self, x: f64, y: f64) -> Result<([f64; 2], [f64; 3])> {
        let leaf = self.locate(x, y);
        let (coords, dofs) = self.leaf_dofs(leaf);
        let (xi, eta) = self.ref_coords(leaf, x, y);
        Ok((displacement_at(&dofs, xi, eta), strain_at(&coords, &dofs, xi, eta)?))
    }
}

/// Verify that `coarse` leaves are exact unions of `reference` pixels:
/// equal extents and an integer cell-size ratio.
pub fn check_nested(coarse: &QuadtreeMesh, reference: &QuadtreeMesh) -> Result<()> {
    let (cex, cey) = coarse.extent();
    let (rex, rey) = reference.extent();
    if (cex - rex).abs() > 1e-12 * rex || (cey - rey).abs() > 1e-12 * rey {
        return Err(Error::NotNested(format!(
            "extents differ: ({cex}, {cey}) vs ({rex}, {rey})"
        )));
    }
    let ratio = coarse.cell_size() / reference.cell_size();
    if ratio < 1.0 - 1e-12 || (ratio - ratio.round()).abs() > 1e-9 {
        return Err(Error::NotNested(format!(
            "cell size ratio {ratio} is not a positive integer"
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_quadtree_mesh, build_uniform_mesh};
    use crate::phase::PhaseGrid;

    #[test]
    fn identity_sampling_on_same_mesh() {
        let grid = PhaseGrid::uniform(4, 4, 0.25, 0).unwrap();
        let mesh = build_uniform_mesh(&grid).unwrap();
        let mut u = vec![0.0; 2 * mesh.n_nodes()];
        for (n, p) in mesh.nodes().iter().enumerate() {
            u[2 * n] = p[0] * p[1];
            u[2 * n + 1] = p[0] - p[1];
        }
        let s = FieldSampler::new(&mesh, &u);
        // Sample at the nodes themselves (interior).
        for (n, p) in mesh.nodes().iter().enumerate() {
            if p[0] > 0.0 && p[0] < 1.0 && p[1] > 0.0 && p[1] < 1.0 {
                let d = s.displacement(p[0], p[1]);
                assert!((d[0] - u[2 * n]).abs() < 1e-13);
                assert!((d[1] - u[2 * n + 1]).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn affine_field_is_exact_everywhere() {
        let grid = PhaseGrid::uniform(2, 2, 0.5, 0).unwrap();
        let mesh = build_quadtree_mesh(&grid, 1).unwrap();
        let mut u = vec![0.0; 2 * mesh.n_nodes()];
        for (n, p) in mesh.nodes().iter().enumerate() {
            u[2 * n] = 0.3 * p[0] - 0.1 * p[1] + 0.5;
            u[2 * n + 1] = 0.2 * p[0] + 0.7 * p[1] - 0.4;
        }
        let s = FieldSampler::new(&mesh, &u);
        for (x, y) in [(0.12, 0.77), (0.5, 0.5), (0.93, 0.08)] {
            let d = s.displacement(x, y);
            assert!((d[0] - (0.3 * x - 0.1 * y + 0.5)).abs() < 1e-13);
            assert!((d[1] - (0.2 * x + 0.7 * y - 0.4)).abs() < 1e-13);
            let e = s.strain(x, y).unwrap();
            assert!((e[0] - 0.3).abs() < 1e-13);
            assert!((e[1] - 0.7).abs() < 1e-13);
            assert!((e[2] - 0.1).abs() < 1e-13);
        }
    }

    #[test]
    fn one_coarse_element_over_fine_reference() {
        // A single bilinear element sampled at points of a 2x2 reference:
        // matches hand-evaluated bilinear interpolation.
        let grid = PhaseGrid::uniform(2, 2, 0.5, 0).unwrap();
        let coarse = build_quadtree_mesh(&grid, 1).unwrap();
        assert_eq!(coarse.leaves().len(), 1);
        // Corner values: u_x = [0, 1, 3, 2] at ll, lr, ur, ul.
        let mut u = vec![0.0; 2 * coarse.n_nodes()];
        let vals = [0.0, 1.0, 3.0, 2.0];
        for (a, n) in coarse.leaves()[0].corners.iter().enumerate() {
            u[2 * n] = vals[a];
        }
        let s = FieldSampler::new(&coarse, &u);
        // Bilinear: u(x, y) = 0*(1-x)(1-y) + 1*x(1-y) + 3*x*y + 2*(1-x)y.
        for (x, y) in [(0.25, 0.25), (0.75, 0.25), (0.4, 0.9)] {
            let expect = x * (1.0 - y) + 3.0 * x * y + 2.0 * (1.0 - x) * y;
            assert!((s.displacement(x, y)[0] - expect).abs() < 1e-13, "at ({x},{y})");
        }
    }

    #[test]
    fn nesting_checks() {
        let coarse = build_uniform_mesh(&PhaseGrid::uniform(4, 4, 0.25, 0).unwrap()).unwrap();
        let reference = build_uniform_mesh(&PhaseGrid::uniform(8, 8, 0.125, 0).unwrap()).unwrap();
        assert!(check_nested(&coarse, &reference).is_ok());
        assert!(check_nested(&reference, &coarse).is_err());
        let odd = build_uniform_mesh(&PhaseGrid::uniform(3, 3, 1.0 / 3.0, 0).unwrap()).unwrap();
        assert!(check_nested(&odd, &reference).is_err());
    }
}
