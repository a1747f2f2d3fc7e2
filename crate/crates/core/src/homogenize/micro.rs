use crate::error::{Error, Result};
use crate::fem::{
    assemble, gauss_points, q1_dshape, strain_at, SaddleSolution, SaddleSolver,
    SparseSymmetric,
};
use crate::mesh::{extract_constraints, AffineField, ConstraintSet, Coupling, QuadtreeMesh};
use crate::phase::{Elasticity2D, MaterialTable};

/// The three macro unit strain states in Voigt engineering convention:
/// eps11 = 1, eps22 = 1 and gamma12 = 1.
pub fn unit_strain_states() -> [AffineField; 3] {
    [
        AffineField::from_strain([1.0, 0.0, 0.0]),
        AffineField::from_strain([0.0, 1.0, 0.0]),
        AffineField::from_strain([0.0, 0.0, 1.0]),
    ]
}

/// Periodic unit-cell solver: assembles the micro stiffness, extracts the
/// periodic constraint set and keeps the factorization for reuse across
/// right-hand sides.
pub struct MicroSolver {
    mesh: QuadtreeMesh,
    table: MaterialTable,
    constraints: ConstraintSet,
    solver: SaddleSolver,
    volume: f64,
}

impl MicroSolver {
    pub fn new(mesh: QuadtreeMesh, table: &MaterialTable) -> Result<Self> {
        let k = assemble(&mesh, table)?;
        let constraints = extract_constraints(&mesh, Coupling::Periodic)?;
        let solver = SaddleSolver::new(k, &constraints, &mesh.dof_coords())?;
        let volume = mesh.domain_area();
        Ok(Self { mesh, table: table.clone(), constraints, solver, volume })
    }

    pub fn mesh(&self) -> &QuadtreeMesh {
        &self.mesh
    }

    /// Consume the solver, keeping the mesh.
    pub fn into_mesh(self) -> QuadtreeMesh {
        self.mesh
    }

    pub fn table(&self) -> &MaterialTable {
        &self.table
    }

    pub fn constraints(&self) -> &ConstraintSet {
        &self.constraints
    }

    pub fn stiffness(&self) -> &SparseSymmetric {
        self.solver.stiffness()
    }

    pub fn volume(&self) -> f64 {
        self.volume
    }

    /// Solve the constrained micro problem for several linearized macro
    /// fields at once (one factorization, many right-hand sides).
    pub fn solve_fields(&self, fields: &[AffineField]) -> Result<SaddleSolution> {
        let gaps: Vec<Vec<f64>> = fields.iter().map(|f| self.constraints.gaps(f)).collect();
        self.solver.solve(&gaps, None)
    }

    /// Homogenized elasticity tensor
    /// `A0_ab = (1/|K|) d^(a)T K d^(b)` over the three unit strain states.
    pub fn homogenized_tensor(&self) -> Result<Elasticity2D> {
        let sol = self.solve_fields(&unit_strain_states())?;
        self.tensor_from_states(&sol.displacements)
    }

    /// Homogenized tensor from already computed unit-state solutions
    /// (order eps11, eps22, gamma12).
    pub fn tensor_from_states(&self, d: &[Vec<f64>]) -> Result<Elasticity2D> {
        let mut m = [[0.0; 3]; 3];
        for a in 0..3 {
            for b in a..3 {
                let v = self.stiffness().bilinear(&d[a], &d[b]) / self.volume;
                m[a][b] = v;
                m[b][a] = v;
            }
        }
        let tensor = Elasticity2D::new(m)?;
        if !tensor.is_positive_definite() {
            return Err(Error::SingularSystem {
                message: "homogenized tensor not positive definite".into(),
            });
        }
        Ok(tensor)
    }

    /// Recover the true micro fields for an actual macro state: nodal
    /// displacements plus strains and stresses at every element Gauss
    /// point, with plane-strain von Mises values.
    pub fn recover(&self, field: &AffineField) -> Result<MicroField> {
        let sol = self.solve_fields(std::slice::from_ref(field))?;
        let d = &sol.displacements[0];
        let leaves = self.mesh.leaves();
        let mut gp_strain = Vec::with_capacity(leaves.len());
        let mut gp_stress = Vec::with_capacity(leaves.len());
        let mut von_mises = Vec::with_capacity(leaves.len());
        let mut avg_strain = [0.0; 3];
        let mut avg_stress = [0.0; 3];
        let mut max_vm = 0.0f64;
        for leaf in leaves {
            let coords = self.mesh.leaf_corner_coords(leaf);
            let c = self.table.cell_tensor(&leaf.material)?;
            let nu = self.table.cell_poisson(&leaf.material)?;
            let mut dofs = [0.0; 8];
            for (a, n) in leaf.corners.iter().enumerate() {
                dofs[2 * a] = d[2 * n];
                dofs[2 * a + 1] = d[2 * n + 1];
            }
            let side = self.mesh.leaf_side_mm(leaf);
            let det = side * side / 4.0;
            let mut strains = [[0.0; 3]; 4];
            let mut stresses = [[0.0; 3]; 4];
            let mut vm_leaf = 0.0f64;
            for (g, gp) in gauss_points().iter().enumerate() {
                let eps = strain_at(&coords, &dofs, gp[0], gp[1])?;
                let sig = c.stress(eps);
                strains[g] = eps;
                stresses[g] = sig;
                for r in 0..3 {
                    avg_strain[r] += eps[r] * det;
                    avg_stress[r] += sig[r] * det;
                }
                vm_leaf = vm_leaf.max(von_mises_plane_strain(sig, nu));
            }
            max_vm = max_vm.max(vm_leaf);
            von_mises.push(vm_leaf);
            gp_strain.push(strains);
            gp_stress.push(stresses);
        }
        for r in 0..3 {
            avg_strain[r] /= self.volume;
            avg_stress[r] /= self.volume;
        }
        Ok(MicroField {
            displacements: sol.displacements.into_iter().next().unwrap(),
            gp_strain,
            gp_stress,
            von_mises,
            avg_strain,
            avg_stress,
            max_von_mises: max_vm,
        })
    }
}

/// Recovered micro fields on a unit cell.
pub struct MicroField {
    pub displacements: Vec<f64>,
    /// Per leaf: strains at the four Gauss points (Voigt, engineering).
    pub gp_strain: Vec<[[f64; 3]; 4]>,
    pub gp_stress: Vec<[[f64; 3]; 4]>,
    /// Per leaf: max von Mises stress over the Gauss points.
    pub von_mises: Vec<f64>,
    pub avg_strain: [f64; 3],
    pub avg_stress: [f64; 3],
    pub max_von_mises: f64,
}

/// Von Mises stress under plane strain, with
/// `sigma_zz = nu (sigma_xx + sigma_yy)`.
pub fn von_mises_plane_strain(sig: [f64; 3], nu: f64) -> f64 {
    let (sx, sy, sxy) = (sig[0], sig[1], sig[2]);
    let sz = nu * (sx + sy);
    (sx * sx + sy * sy + sz * sz - sx * sy - sy * sz - sz * sx + 3.0 * sxy * sxy)
        .max(0.0)
        .sqrt()
}

/// Micro responses to the eight macro unit displacement states of a Q1
/// macro element, evaluated at one quadrature point: columns ordered
/// node-major ((I, x), (I, y)).
pub struct TransformationMatrix {
    pub columns: Vec<Vec<f64>>,
}

/// The eight linearized macro fields (unit displacement per macro node
/// and direction) at quadrature point `qp` (reference coordinates) of a
/// macro element with corners `macro_coords`. The micro origin maps to
/// the center of the unit cell.
fn unit_displacement_fields(
    macro_coords: &[[f64; 2]; 4],
    qp: [f64; 2],
    micro_extent: (f64, f64),
) -> Result<Vec<AffineField>> {
    // Physical shape function gradients at the quadrature point.
    let d = q1_dshape(qp[0], qp[1]);
    let mut j = [[0.0; 2]; 2];
    for a in 0..4 {
        j[0][0] += d[a][0] * macro_coords[a][0];
        j[0][1] += d[a][0] * macro_coords[a][1];
        j[1][0] += d[a][1] * macro_coords[a][0];
        j[1][1] += d[a][1] * macro_coords[a][1];
    }
    let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
    if det <= 1e-14 {
        return Err(Error::DegenerateElement("macro element Jacobian".into()));
    }
    let inv = [[j[1][1] / det, -j[0][1] / det], [-j[1][0] / det, j[0][0] / det]];
    let n = crate::fem::q1_shape(qp[0], qp[1]);
    let origin = [micro_extent.0 / 2.0, micro_extent.1 / 2.0];
    let mut fields = Vec::with_capacity(8);
    for a in 0..4 {
        let grad_n = [
            inv[0][0] * d[a][0] + inv[0][1] * d[a][1],
            inv[1][0] * d[a][0] + inv[1][1] * d[a][1],
        ];
        for dir in 0..2 {
            let mut grad = [[0.0; 2]; 2];
            grad[dir][0] = grad_n[0];
            grad[dir][1] = grad_n[1];
            let mut value = [0.0; 2];
            value[dir] = n[a];
            fields.push(AffineField { origin, value, grad });
        }
    }
    Ok(fields)
}

/// Transformation matrix T at one macro quadrature point: eight micro
/// solutions driven by the macro unit displacement states.
pub fn transformation_matrix(
    micro: &MicroSolver,
    macro_coords: &[[f64; 2]; 4],
    qp: [f64; 2],
) -> Result<TransformationMatrix> {
    let fields = unit_displacement_fields(macro_coords, qp, micro.mesh().extent())?;
    let sol = micro.solve_fields(&fields)?;
    Ok(TransformationMatrix { columns: sol.displacements })
}

/// Macro element stiffness from per-quadrature-point transformation
/// matrices: `k = sum_l (w_l / |K_l|) T_l^T K_mic T_l`.
pub fn macro_element_stiffness(
    ts: &[TransformationMatrix],
    k_mic: &SparseSymmetric,
    weights: &[f64],
    micro_volume: f64,
) -> [[f64; 8]; 8] {
    let mut k = [[0.0; 8]; 8];
    for (t, w) in ts.iter().zip(weights) {
        if *w == 0.0 {
            continue;
        }
        let kt: Vec<Vec<f64>> = t.columns.iter().map(|c| k_mic.matvec(c)).collect();
        for r in 0..8 {
            for c in r..8 {
                let v: f64 =
                    t.columns[r].iter().zip(&kt[c]).map(|(a, b)| a * b).sum::<f64>() * w
                        / micro_volume;
                k[r][c] += v;
                if c != r {
                    k[c][r] += v;
                }
            }
        }
    }
    k
}

/// FE-HMM stiffness of one macro element: all four quadrature points
/// solved in a single batched micro solve.
pub fn fehmm_element_stiffness(
    micro: &MicroSolver,
    macro_coords: &[[f64; 2]; 4],
    gauss_weight_det: f64,
) -> Result<[[f64; 8]; 8]> {
    let mut fields = Vec::with_capacity(32);
    for qp in gauss_points() {
        fields.extend(unit_displacement_fields(macro_coords, qp, micro.mesh().extent())?);
    }
    let sol = micro.solve_fields(&fields)?;
    let mut k = [[0.0; 8]; 8];
    let k_mic = micro.stiffness();
    for l in 0..4 {
        let cols = &sol.displacements[8 * l..8 * (l + 1)];
        let kt: Vec<Vec<f64>> = cols.iter().map(|c| k_mic.matvec(c)).collect();
        for r in 0..8 {
            for c in r..8 {
                let v: f64 = cols[r].iter().zip(&kt[c]).map(|(a, b)| a * b).sum::<f64>()
                    * gauss_weight_det
                    / micro.volume();
                k[r][c] += v;
                if c != r {
                    k[c][r] += v;
                }
            }
        }
    }
    Ok(k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::element_stiffness;
    use crate::mesh::build_uniform_mesh;
    use crate::phase::{plane_strain_tensor, CellMaterial, PhaseGrid};
    use approx::assert_abs_diff_eq;

    fn table() -> MaterialTable {
        MaterialTable::two_phase(100.0, 0.2, 192.1, 0.2).unwrap()
    }

    fn micro_uniform(n: usize) -> MicroSolver {
        let grid = PhaseGrid::uniform(n, n, 1.0 / n as f64, 0).unwrap();
        let mesh = build_uniform_mesh(&grid).unwrap();
        MicroSolver::new(mesh, &table()).unwrap()
    }

    #[test]
    fn single_phase_recovers_phase_tensor() {
        let micro = micro_uniform(4);
        let a0 = micro.homogenized_tensor().unwrap();
        let expect = plane_strain_tensor(100.0, 0.2).unwrap();
        for r in 0..3 {
            for c in 0..3 {
                let tol = 1e-8 * expect.m[r][r].max(expect.m[c][c]);
                assert!(
                    (a0.m[r][c] - expect.m[r][c]).abs() <= tol,
                    "entry ({r},{c}): {} vs {}",
                    a0.m[r][c],
                    expect.m[r][c]
                );
            }
        }
    }

    #[test]
    fn laminate_matches_analytic_tensor() {
        // Two-column laminate along x, fractions 0.5 / 0.5.
        let cells = (0..16)
            .map(|k| CellMaterial::Discrete(u16::from(k % 4 < 2)))
            .collect();
        let grid = PhaseGrid::from_cells(4, 4, 0.25, cells).unwrap();
        let mesh = build_uniform_mesh(&grid).unwrap();
        let micro = MicroSolver::new(mesh, &table()).unwrap();
        let a0 = micro.homogenized_tensor().unwrap();
        let expect = analytic_laminate(
            &plane_strain_tensor(192.1, 0.2).unwrap(),
            &plane_strain_tensor(100.0, 0.2).unwrap(),
            0.5,
        );
        for r in 0..3 {
            for c in 0..3 {
                assert!(
                    (a0.m[r][c] - expect.m[r][c]).abs() <= 1e-6 * expect.m[0][0],
                    "entry ({r},{c}): {} vs {}",
                    a0.m[r][c],
                    expect.m[r][c]
                );
            }
        }
    }

    /// Closed-form plane-strain laminate (layers normal to x): uniform
    /// sigma_xx / sigma_xy across layers, common eps_yy.
    pub(crate) fn analytic_laminate(c1: &Elasticity2D, c2: &Elasticity2D, f1: f64) -> Elasticity2D {
        let f2 = 1.0 - f1;
        let avg = |pick: &dyn Fn(&Elasticity2D) -> f64| f1 * pick(c1) + f2 * pick(c2);
        let a = 1.0 / avg(&|c| 1.0 / c.m[0][0]);
        let b = avg(&|c| c.m[0][1] / c.m[0][0]);
        let a11 = a;
        let a12 = a * b;
        let a22 = avg(&|c| c.m[1][1]) - avg(&|c| c.m[0][1] * c.m[0][1] / c.m[0][0]) + a * b * b;
        let a33 = 1.0 / avg(&|c| 1.0 / c.m[2][2]);
        Elasticity2D::new([[a11, a12, 0.0], [a12, a22, 0.0], [0.0, 0.0, a33]]).unwrap()
    }

    #[test]
    fn laminate_analytic_matches_dense_fem_oracle() {
        // Independent dense-FEM check of the analytic laminate formula on
        // a coarse cell (exact for piecewise-linear-in-x fields).
        use nalgebra::{DMatrix, DVector};
        let cells = (0..4).map(|k| CellMaterial::Discrete(u16::from(k % 2 == 0))).collect();
        let grid = PhaseGrid::from_cells(2, 2, 0.5, cells).unwrap();
        let mesh = build_uniform_mesh(&grid).unwrap();
        let k = assemble(&mesh, &table()).unwrap();
        let cs = extract_constraints(&mesh, Coupling::Periodic).unwrap();
        let n = k.dim();
        let m = cs.n_rows();
        let mut big = DMatrix::<f64>::zeros(n + m, n + m);
        for (r, c, v) in k.matrix().iter_entries() {
            big[(r, c)] = v;
        }
        for (r, row) in cs.rows().iter().enumerate() {
            for &(dof, coeff) in &row.terms {
                big[(n + r, dof)] = coeff;
                big[(dof, n + r)] = coeff;
            }
        }
        let lu = big.lu();
        let states = unit_strain_states();
        let mut d = Vec::new();
        for s in &states {
            let gaps = cs.gaps(s);
            let mut rhs = DVector::<f64>::zeros(n + m);
            for (r, g) in gaps.iter().enumerate() {
                rhs[n + r] = *g;
            }
            d.push(lu.solve(&rhs).unwrap());
        }
        let vol = mesh.domain_area();
        let mut dense_a0 = [[0.0; 3]; 3];
        for a in 0..3 {
            for b in 0..3 {
                let da: Vec<f64> = d[a].iter().take(n).copied().collect();
                let db: Vec<f64> = d[b].iter().take(n).copied().collect();
                dense_a0[a][b] = k.bilinear(&da, &db) / vol;
            }
        }
        let analytic = analytic_laminate(
            &plane_strain_tensor(192.1, 0.2).unwrap(),
            &plane_strain_tensor(100.0, 0.2).unwrap(),
            0.5,
        );
        for r in 0..3 {
            for c in 0..3 {
                assert!(
                    (dense_a0[r][c] - analytic.m[r][c]).abs() < 1e-8 * analytic.m[0][0],
                    "entry ({r},{c}): {} vs {}",
                    dense_a0[r][c],
                    analytic.m[r][c]
                );
            }
        }
    }

    #[test]
    fn two_phase_tensor_between_reuss_and_voigt() {
        let cells = (0..64)
            .map(|k| {
                let (i, j) = (k % 8, k / 8);
                CellMaterial::Discrete(u16::from((3..6).contains(&i) && (2..5).contains(&j)))
            })
            .collect();
        let grid = PhaseGrid::from_cells(8, 8, 0.125, cells).unwrap();
        let f = grid.volume_fractions();
        let mesh = build_uniform_mesh(&grid).unwrap();
        let micro = MicroSolver::new(mesh, &table()).unwrap();
        let a0 = micro.homogenized_tensor().unwrap();
        let c0 = plane_strain_tensor(100.0, 0.2).unwrap();
        let c1 = plane_strain_tensor(192.1, 0.2).unwrap();
        let voigt = c0.scale(f[&0]).add(&c1.scale(f[&1]));
        // Reuss: inverse of the averaged compliance.
        let s0 = c0.inverse();
        let s1 = c1.inverse();
        let mut s = [[0.0; 3]; 3];
        for r in 0..3 {
            for c in 0..3 {
                s[r][c] = f[&0] * s0[r][c] + f[&1] * s1[r][c];
            }
        }
        let reuss_inv = Elasticity2D::new(s).unwrap();
        let reuss = Elasticity2D::new(reuss_inv.inverse()).unwrap();
        // Loewner order via smallest eigenvalue of the differences.
        assert!(voigt.sub(&a0).min_eigenvalue() > -1e-8 * voigt.m[0][0]);
        assert!(a0.sub(&reuss).min_eigenvalue() > -1e-8 * voigt.m[0][0]);
    }

    #[test]
    fn transformation_columns_affine_on_homogeneous_cell() {
        let micro = micro_uniform(4);
        let coords = [[0.0, 0.0], [10.0, 0.0], [10.0, 10.0], [0.0, 10.0]];
        let qp = [0.3, -0.5];
        let t = transformation_matrix(&micro, &coords, qp).unwrap();
        let fields = unit_displacement_fields(&coords, qp, micro.mesh().extent()).unwrap();
        for (col, field) in t.columns.iter().zip(&fields) {
            for (nidx, p) in micro.mesh().nodes().iter().enumerate() {
                let u = field.eval(*p);
                assert!(
                    (col[2 * nidx] - u[0]).abs() < 1e-9 && (col[2 * nidx + 1] - u[1]).abs() < 1e-9,
                    "node {nidx}"
                );
            }
        }
    }

    #[test]
    fn partition_of_unity_gives_rigid_translation() {
        // Summing the x-direction columns over all macro nodes yields a
        // unit rigid x-translation of the micro cell.
        let micro = micro_uniform(2);
        let coords = [[0.0, 0.0], [4.0, 0.0], [4.0, 3.0], [0.0, 3.0]];
        let t = transformation_matrix(&micro, &coords, [0.21, 0.47]).unwrap();
        let n = micro.mesh().n_nodes();
        for node in 0..n {
            let ux: f64 = (0..4).map(|a| t.columns[2 * a][2 * node]).sum();
            let uy: f64 = (0..4).map(|a| t.columns[2 * a][2 * node + 1]).sum();
            assert_abs_diff_eq!(ux, 1.0, epsilon = 1e-9);
            assert_abs_diff_eq!(uy, 0.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn macro_stiffness_consistent_with_homogenized_tensor() {
        // Heterogeneous RVE: FE-HMM macro element stiffness equals the Q1
        // stiffness built from the homogenized tensor.
        let cells = (0..16)
            .map(|k| CellMaterial::Discrete(u16::from(k == 5 || k == 6)))
            .collect();
        let grid = PhaseGrid::from_cells(4, 4, 0.25, cells).unwrap();
        let mesh = build_uniform_mesh(&grid).unwrap();
        let micro = MicroSolver::new(mesh, &table()).unwrap();
        let a0 = micro.homogenized_tensor().unwrap();

        let coords = [[0.0, 0.0], [250.0, 0.0], [250.0, 250.0], [0.0, 250.0]];
        let w = 250.0 * 250.0 / 4.0;
        let k_hmm = fehmm_element_stiffness(&micro, &coords, w).unwrap();
        let k_a0 = element_stiffness(&coords, &a0).unwrap();
        let scale = k_a0.iter().flatten().map(|v| v.abs()).fold(0.0, f64::max);
        for r in 0..8 {
            for c in 0..8 {
                assert!(
                    (k_hmm[r][c] - k_a0[r][c]).abs() <= 1e-8 * scale,
                    "entry ({r},{c}): {} vs {}",
                    k_hmm[r][c],
                    k_a0[r][c]
                );
            }
        }
    }

    #[test]
    fn zero_weight_contributes_nothing() {
        let micro = micro_uniform(2);
        let coords = [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]];
        let t = transformation_matrix(&micro, &coords, [0.0, 0.0]).unwrap();
        let k = macro_element_stiffness(
            std::slice::from_ref(&t),
            micro.stiffness(),
            &[0.0],
            micro.volume(),
        );
        assert!(k.iter().flatten().all(|v| *v == 0.0));
    }

    #[test]
    fn recover_zero_strain_is_zero() {
        let micro = micro_uniform(4);
        let f = micro.recover(&AffineField::zero()).unwrap();
        assert!(f.displacements.iter().all(|v| v.abs() < 1e-12));
        assert!(f.max_von_mises < 1e-10);
    }

    #[test]
    fn recover_affine_on_homogeneous_cell() {
        let micro = micro_uniform(4);
        let field = AffineField::from_strain([1e-3, -4e-4, 6e-4]);
        let f = micro.recover(&field).unwrap();
        for (nidx, p) in micro.mesh().nodes().iter().enumerate() {
            let u = field.eval(*p);
            assert!((f.displacements[2 * nidx] - u[0]).abs() < 1e-12);
            assert!((f.displacements[2 * nidx + 1] - u[1]).abs() < 1e-12);
        }
    }

    #[test]
    fn hill_consistency_of_recovered_average_stress() {
        let cells = (0..16)
            .map(|k| CellMaterial::Discrete(u16::from(k == 5 || k == 9 || k == 10)))
            .collect();
        let grid = PhaseGrid::from_cells(4, 4, 0.25, cells).unwrap();
        let mesh = build_uniform_mesh(&grid).unwrap();
        let micro = MicroSolver::new(mesh, &table()).unwrap();
        let a0 = micro.homogenized_tensor().unwrap();
        let eps = [1.2e-3, 0.4e-3, -0.7e-3];
        let f = micro.recover(&AffineField::from_strain(eps)).unwrap();
        let expect = a0.stress(eps);
        for r in 0..3 {
            assert!(
                (f.avg_stress[r] - expect[r]).abs() <= 1e-8 * expect.iter().map(|v| v.abs()).fold(0.0, f64::max),
                "component {r}: {} vs {}",
                f.avg_stress[r],
                expect[r]
            );
        }
        // Average strain reproduces the applied macro strain.
        for r in 0..3 {
            assert!((f.avg_strain[r] - eps[r]).abs() < 1e-10);
        }
        // Hill-Mandel: <sigma : eps> = <sigma> : <eps>.
        let mut power = 0.0;
        for (leaf, (ss, es)) in
            micro.mesh().leaves().iter().zip(f.gp_stress.iter().zip(&f.gp_strain))
        {
            let det = micro.mesh().leaf_side_mm(leaf).powi(2) / 4.0;
            for g in 0..4 {
                power += det * (0..3).map(|r| ss[g][r] * es[g][r]).sum::<f64>();
            }
        }
        power /= micro.volume();
        let macro_power: f64 = (0..3).map(|r| f.avg_stress[r] * f.avg_strain[r]).sum();
        assert!((power - macro_power).abs() <= 1e-8 * macro_power.abs());
    }

    #[test]
    fn anchor_choice_does_not_change_tensor() {
        // Moving the anchor value (constant shift of the linear field)
        // must leave the homogenized tensor untouched.
        let cells = (0..16).map(|k| CellMaterial::Discrete(u16::from(k % 5 == 0))).collect();
        let grid = PhaseGrid::from_cells(4, 4, 0.25, cells).unwrap();
        let mesh = build_uniform_mesh(&grid).unwrap();
        let micro = MicroSolver::new(mesh, &table()).unwrap();
        let a0 = micro.homogenized_tensor().unwrap();

        let shifted: Vec<AffineField> = unit_strain_states()
            .iter()
            .map(|f| AffineField { origin: [0.7, 0.3], value: [2.0, -1.0], ..*f })
            .collect();
        let sol = micro.solve_fields(&shifted).unwrap();
        let mut m = [[0.0; 3]; 3];
        for a in 0..3 {
            for b in 0..3 {
                m[a][b] = micro
                    .stiffness()
                    .bilinear(&sol.displacements[a], &sol.displacements[b])
                    / micro.volume();
            }
        }
        for r in 0..3 {
            for c in 0..3 {
                assert!((m[r][c] - a0.m[r][c]).abs() <= 1e-10 * a0.m[0][0].abs());
            }
        }
    }
}
