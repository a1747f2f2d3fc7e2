use crate::error::Result;
use crate::fem::{
    assemble_macro, assemble_macro_tensor, element_stiffness, gauss_points, gradient_at,
    SaddleSolver, SparseSymmetric,
};
use crate::homogenize::micro::{fehmm_element_stiffness, MicroSolver};
use crate::mesh::{AffineField, ConstraintRow, ConstraintSet, MacroMesh, RowRhs};
use crate::phase::Elasticity2D;

/// Plane-strain cantilever: clamped at x = 0, a vertical line load q0
/// (N/mm, per unit thickness) along the free edge x = L. Thickness is
/// bookkeeping only; all quantities are per unit thickness.
#[derive(Debug, Clone)]
pub struct MacroProblem {
    pub mesh: MacroMesh,
    pub thickness: f64,
    pub q0: f64,
}

impl MacroProblem {
    pub fn cantilever(
        length: f64,
        height: f64,
        thickness: f64,
        q0: f64,
        nx: usize,
        ny: usize,
    ) -> Result<Self> {
        Ok(Self { mesh: MacroMesh::new(length, height, nx, ny)?, thickness, q0 })
    }

    /// Homogeneous Dirichlet rows clamping the edge x = 0.
    pub fn dirichlet_constraints(&self) -> ConstraintSet {
        let mut rows = Vec::new();
        for n in self.mesh.left_edge_nodes() {
            for comp in 0..2 {
                let dof = 2 * n + comp;
                rows.push(ConstraintRow {
                    terms: vec![(dof, 1.0)],
                    rhs: RowRhs::Zero,
                    eliminated: dof,
                });
            }
        }
        ConstraintSet::new(self.mesh.n_dofs(), rows)
    }

    /// Consistent nodal forces of the line load on x = L (downward).
    pub fn load_vector(&self) -> Vec<f64> {
        let mut f = vec![0.0; self.mesh.n_dofs()];
        let (_, dy) = self.mesh.spacing();
        let edge = self.mesh.right_edge_nodes();
        for pair in edge.windows(2) {
            let fe = self.q0 * dy / 2.0;
            f[2 * pair[0] + 1] -= fe;
            f[2 * pair[1] + 1] -= fe;
        }
        f
    }

    /// Solve with a caller-supplied element stiffness provider.
    pub fn solve_with_elements(
        &self,
        elem_matrix: impl Fn(usize) -> [[f64; 8]; 8],
    ) -> Result<MacroSolution> {
        let k = assemble_macro(&self.mesh, elem_matrix)?;
        self.solve_assembled(k)
    }

    /// Standard single-scale solution with a constant elasticity tensor.
    pub fn solve_single_scale(&self, a0: &Elasticity2D) -> Result<MacroSolution> {
        let k = assemble_macro_tensor(&self.mesh, a0)?;
        self.solve_assembled(k)
    }

    fn solve_assembled(&self, k: SparseSymmetric) -> Result<MacroSolution> {
        let cs = self.dirichlet_constraints();
        let solver = SaddleSolver::new(k, &cs, &self.mesh.dof_coords())?;
        let gaps = vec![0.0; cs.n_rows()];
        let forces = self.load_vector();
        let sol = solver.solve(&[gaps], Some(std::slice::from_ref(&forces)))?;
        let u = sol.displacements.into_iter().next().unwrap();
        let u_max = u.chunks(2).map(|c| c[1].abs()).fold(0.0, f64::max);
        Ok(MacroSolution { mesh: self.mesh.clone(), displacements: u, u_max })
    }

    /// Snap a physical point to the nearest macro quadrature point;
    /// returns (element, local qp index, physical coordinates).
    pub fn nearest_quadrature_point(&self, x: f64, y: f64) -> (usize, usize, [f64; 2]) {
        let mut best = (0usize, 0usize, [0.0; 2]);
        let mut best_d = f64::INFINITY;
        for e in 0..self.mesh.n_elems() {
            for (l, gp) in self.mesh.elem_gauss_points(e).iter().enumerate() {
                let d = (gp[0] - x).powi(2) + (gp[1] - y).powi(2);
                if d < best_d {
                    best_d = d;
                    best = (e, l, *gp);
                }
            }
        }
        best
    }
}

/// Macro displacement field on its mesh.
#[derive(Debug, Clone)]
pub struct MacroSolution {
    pub mesh: MacroMesh,
    pub displacements: Vec<f64>,
    /// Maximum deflection magnitude max |u_y|.
    pub u_max: f64,
}

impl MacroSolution {
    pub fn element_dofs(&self, e: usize) -> [f64; 8] {
        let nodes = self.mesh.elem_nodes(e);
        let mut dofs = [0.0; 8];
        for (a, n) in nodes.iter().enumerate() {
            dofs[2 * a] = self.displacements[2 * n];
            dofs[2 * a + 1] = self.displacements[2 * n + 1];
        }
        dofs
    }

    /// Displacement gradient at local quadrature point `l` of element `e`.
    pub fn gradient_at_qp(&self, e: usize, l: usize) -> Result<[[f64; 2]; 2]> {
        let coords = self.mesh.elem_corner_coords(e);
        let dofs = self.element_dofs(e);
        let gp = gauss_points()[l];
        gradient_at(&coords, &dofs, gp[0], gp[1])
    }

    /// Displacement value at local quadrature point `l` of element `e`.
    pub fn value_at_qp(&self, e: usize, l: usize) -> [f64; 2] {
        let dofs = self.element_dofs(e);
        let gp = gauss_points()[l];
        crate::fem::displacement_at(&dofs, gp[0], gp[1])
    }

    /// Linearized field driving the micro problem at a quadrature point.
    /// The micro cell center maps to the quadrature point.
    pub fn linearized_field(
        &self,
        e: usize,
        l: usize,
        micro_extent: (f64, f64),
    ) -> Result<AffineField> {
        Ok(AffineField {
            origin: [micro_extent.0 / 2.0, micro_extent.1 / 2.0],
            value: self.value_at_qp(e, l),
            grad: self.gradient_at_qp(e, l)?,
        })
    }
}

/// FE-HMM macro solve with the same unit cell at every quadrature point.
/// On the uniform macro mesh all elements are congruent, so the
/// quadrature-point micro problems are solved once per element shape.
pub fn fehmm_solve(problem: &MacroProblem, micro: &MicroSolver) -> Result<MacroSolution> {
    let coords = problem.mesh.elem_corner_coords(0);
    let ke = fehmm_element_stiffness(micro, &coords, problem.mesh.gauss_weight())?;
    problem.solve_with_elements(|_| ke)
}

/// Timoshenko cantilever tip deflection for a plane-strain section built
/// from the homogenized tensor: bending with the sigma_yy-condensed
/// modulus plus shear deflection (kappa = 5/6).
pub fn timoshenko_tip_deflection(a0: &Elasticity2D, length: f64, height: f64, q0: f64) -> f64 {
    let e_eff = a0.m[0][0] - a0.m[0][1] * a0.m[0][1] / a0.m[1][1];
    let g_eff = a0.m[2][2];
    let p = q0 * height; // resultant per unit thickness
    let inertia = height.powi(3) / 12.0;
    let kappa = 5.0 / 6.0;
    p * length.powi(3) / (3.0 * e_eff * inertia) + p * length / (kappa * g_eff * height)
}

/// Energy-norm magnitude of a displacement field under a stiffness.
pub fn energy_norm(k: &SparseSymmetric, u: &[f64]) -> f64 {
    k.bilinear(u, u).max(0.0).sqrt()
}

/// Q1 macro element stiffness for a constant tensor (convenience used in
/// consistency checks).
pub fn macro_tensor_element(mesh: &MacroMesh, a0: &Elasticity2D) -> Result<[[f64; 8]; 8]> {
    element_stiffness(&mesh.elem_corner_coords(0), a0)
}
