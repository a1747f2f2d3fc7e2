use crate::error::{Error, Result};
use crate::fem::cholesky::LdlFactor;
use crate::fem::sparse::{CsrMatrix, SparseSymmetric};
use crate::mesh::ConstraintSet;

/// Constrained solution with Lagrange multipliers and solver diagnostics,
/// one column per right-hand side.
#[derive(Debug, Clone)]
pub struct SaddleSolution {
    pub displacements: Vec<Vec<f64>>,
    pub multipliers: Vec<Vec<f64>>,
    /// ||G d - g||_2 per column.
    pub constraint_residual: Vec<f64>,
    /// Relative equilibrium residual ||K d + G^T lambda - f|| per column.
    pub equilibrium_residual: Vec<f64>,
}

/// Substitution of constrained dofs: `d = P d_free + Q g` where `g` is
/// the constraint right-hand side.
struct Eliminator {
    free: Vec<usize>,
    p: CsrMatrix,
    q: CsrMatrix,
}

#[derive(Clone, Default)]
struct Expr {
    terms: Vec<(usize, f64)>,
    gaps: Vec<(usize, f64)>,
}

fn build_eliminator(cs: &ConstraintSet) -> Result<Eliminator> {
    let n = cs.n_dofs();
    let rows = cs.rows();
    let mut row_of_dof = vec![usize::MAX; n];
    for (r, row) in rows.iter().enumerate() {
        if row_of_dof[row.eliminated] != usize::MAX {
            return Err(Error::SingularSystem {
                message: format!("dof {} eliminated by two constraint rows", row.eliminated),
            });
        }
        row_of_dof[row.eliminated] = r;
    }

    let free: Vec<usize> = (0..n).filter(|d| row_of_dof[*d] == usize::MAX).collect();
    let mut free_col = vec![usize::MAX; n];
    for (c, &d) in free.iter().enumerate() {
        free_col[d] = c;
    }

    // Resolve every eliminated dof to free dofs and gap sources,
    // substituting chains (hanging on hanging masters, periodic slaves of
    // anchored corners) with cycle detection.
    let mut cache: Vec<Option<Expr>> = vec![None; n];
    let mut state = vec![0u8; n]; // 0 untouched, 1 in progress, 2 done

    fn resolve(
        dof: usize,
        rows: &[crate::mesh::ConstraintRow],
        row_of_dof: &[usize],
        free_col: &[usize],
        cache: &mut Vec<Option<Expr>>,
        state: &mut Vec<u8>,
    ) -> Result<Expr> {
        if free_col[dof] != usize::MAX {
            return Ok(Expr { terms: vec![(dof, 1.0)], gaps: vec![] });
        }
        if let Some(e) = &cache[dof] {
            return Ok(e.clone());
        }
        if state[dof] == 1 {
            return Err(Error::SingularSystem {
                message: format!("cyclic constraint dependency through dof {dof}"),
            });
        }
        state[dof] = 1;
        let r = row_of_dof[dof];
        let row = &rows[r];
        let ce = row
            .terms
            .iter()
            .find(|(d, _)| *d == dof)
            .map(|(_, c)| *c)
            .ok_or_else(|| Error::SingularSystem {
                message: format!("row {r} does not reference its eliminated dof"),
            })?;
        if ce.abs() < 1e-14 {
            return Err(Error::SingularSystem {
                message: format!("vanishing coefficient on eliminated dof {dof}"),
            });
        }
        let mut terms: std::collections::BTreeMap<usize, f64> = Default::default();
        let mut gaps: std::collections::BTreeMap<usize, f64> = Default::default();
        gaps.insert(r, 1.0 / ce);
        for &(d, c) in &row.terms {
            if d == dof {
                continue;
            }
            let sub = resolve(d, rows, row_of_dof, free_col, cache, state)?;
            for (fd, fc) in sub.terms {
                *terms.entry(fd).or_insert(0.0) += -c / ce * fc;
            }
            for (g, gc) in sub.gaps {
                *gaps.entry(g).or_insert(0.0) += -c / ce * gc;
            }
        }
        let expr = Expr {
            terms: terms.into_iter().filter(|(_, c)| c.abs() > 0.0).collect(),
            gaps: gaps.into_iter().filter(|(_, c)| c.abs() > 0.0).collect(),
        };
        state[dof] = 2;
        cache[dof] = Some(expr.clone());
        Ok(expr)
    }

    let mut p_triplets = Vec::new();
    let mut q_triplets = Vec::new();
    for dof in 0..n {
        if free_col[dof] != usize::MAX {
            p_triplets.push((dof as u32, free_col[dof] as u32, 1.0));
        } else {
            let expr = resolve(dof, rows, &row_of_dof, &free_col, &mut cache, &mut state)?;
            for (fd, c) in expr.terms {
                p_triplets.push((dof as u32, free_col[fd] as u32, c));
            }
            for (g, c) in expr.gaps {
                q_triplets.push((dof as u32, g as u32, c));
            }
        }
    }
    Ok(Eliminator {
        free,
        p: CsrMatrix::from_triplets(n, free_col.iter().filter(|c| **c != usize::MAX).count(), p_triplets),
        q: CsrMatrix::from_triplets(n, rows.len(), q_triplets),
    })
}

/// Direct solver for the saddle system `[[K, G^T], [G, 0]] [d; lambda] =
/// [f; g]`: constraints are eliminated, the reduced SPD operator is
/// factored once (LDL^T with nested dissection) and reused across
/// right-hand sides; multipliers are recovered from the force residual
/// through a G G^T solve.
pub struct SaddleSolver {
    k: SparseSymmetric,
    g: CsrMatrix,
    gt: CsrMatrix,
    elim: Eliminator,
    k_red: CsrMatrix,
    factor: LdlFactor,
    ggt_factor: LdlFactor,
    p_t: CsrMatrix,
}

impl SaddleSolver {
    /// `dof_coords` (one point per dof) feeds the fill-reducing ordering.
    pub fn new(
        k: SparseSymmetric,
        constraints: &ConstraintSet,
        dof_coords: &[[f64; 2]],
    ) -> Result<Self> {
        if k.dim() != constraints.n_dofs() {
            return Err(Error::InvalidInput("stiffness/constraint dimension mismatch".into()));
        }
        let elim = build_eliminator(constraints)?;
        let p_t = elim.p.transpose();
        let kp = k.matrix().matmul(&elim.p);
        let k_red = p_t.matmul(&kp);
        let red_coords: Vec<[f64; 2]> = elim.free.iter().map(|&d| dof_coords[d]).collect();
        let factor = LdlFactor::factor_spd(&k_red, Some(&red_coords))?;

        let g = constraints.matrix();
        let gt = g.transpose();
        let ggt = g.matmul(&gt);
        let row_coords: Vec<[f64; 2]> =
            constraints.rows().iter().map(|r| dof_coords[r.eliminated]).collect();
        let ggt_factor = LdlFactor::factor_spd(&ggt, Some(&row_coords)).map_err(|_| {
            Error::SingularSystem {
                message: "constraint matrix G is rank deficient (G G^T not positive definite)"
                    .into(),
            }
        })?;

        Ok(Self { k, g, gt, elim, k_red, factor, ggt_factor, p_t })
    }

    pub fn stiffness(&self) -> &SparseSymmetric {
        &self.k
    }

    pub fn n_dofs(&self) -> usize {
        self.k.dim()
    }

    /// Solve for several right-hand sides. `gaps[j]` is the constraint
    /// right-hand side of column j; `forces`, when given, supplies
    /// external nodal forces per column.
    pub fn solve(&self, gaps: &[Vec<f64>], forces: Option<&[Vec<f64>]>) -> Result<SaddleSolution> {
        let n = self.k.dim();
        let m = self.g.nrows();
        let knorm = self.k.norm_inf();
        let mut out = SaddleSolution {
            displacements: Vec::with_capacity(gaps.len()),
            multipliers: Vec::with_capacity(gaps.len()),
            constraint_residual: Vec::with_capacity(gaps.len()),
            equilibrium_residual: Vec::with_capacity(gaps.len()),
        };
        for (j, gap) in gaps.iter().enumerate() {
            if gap.len() != m {
                return Err(Error::InvalidInput(format!(
                    "gap column {j} has length {}, expected {m}",
                    gap.len()
                )));
            }
            let zero;
            let f: &[f64] = match forces {
                Some(cols) => &cols[j],
                None => {
                    zero = vec![0.0; n];
                    &zero
                }
            };
            let q = self.elim.q.matvec(gap);
            let kq = self.k.matvec(&q);
            let rhs_full: Vec<f64> = f.iter().zip(&kq).map(|(a, b)| a - b).collect();
            let rhs_red = self.p_t.matvec(&rhs_full);
            let mut d_f = self.factor.solve(&rhs_red);
            // One round of iterative refinement on the reduced system.
            let mut r_red = self.k_red.matvec(&d_f);
            for (ri, bi) in r_red.iter_mut().zip(&rhs_red) {
                *ri = bi - *ri;
            }
            let dd = self.factor.solve(&r_red);
            for (x, e) in d_f.iter_mut().zip(&dd) {
                *x += e;
            }

            let mut d = self.elim.p.matvec(&d_f);
            for (x, qv) in d.iter_mut().zip(&q) {
                *x += qv;
            }

            // lambda from K d + G^T lambda = f.
            let kd = self.k.matvec(&d);
            let resid: Vec<f64> = f.iter().zip(&kd).map(|(a, b)| a - b).collect();
            let lam = self.ggt_factor.solve(&self.g.matvec(&resid));

            let gd = self.g.matvec(&d);
            let c_res =
                gd.iter().zip(gap).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            let gtl = self.gt.matvec(&lam);
            let eq_num = kd
                .iter()
                .zip(&gtl)
                .zip(f)
                .map(|((a, b), c)| {
                    let r = a + b - c;
                    r * r
                })
                .sum::<f64>()
                .sqrt();
            let dnorm = d.iter().map(|v| v * v).sum::<f64>().sqrt();
            let fnorm = f.iter().map(|v| v * v).sum::<f64>().sqrt();
            let scale = (knorm * dnorm).max(fnorm).max(1e-300);

            out.displacements.push(d);
            out.multipliers.push(lam);
            out.constraint_residual.push(c_res);
            out.equilibrium_residual.push(eq_num / scale);
        }
        Ok(out)
    }
}

/// One-shot constrained solve (factorization not reused).
pub fn solve_saddle(
    k: SparseSymmetric,
    constraints: &ConstraintSet,
    gaps: &[Vec<f64>],
    dof_coords: &[[f64; 2]],
) -> Result<SaddleSolution> {
    SaddleSolver::new(k, constraints, dof_coords)?.solve(gaps, None)
}

/// Squared energy norm `(d_a - d_b)^T K (d_a - d_b)`.
pub fn energy_norm_sq(d_a: &[f64], d_b: &[f64], k: &SparseSymmetric) -> f64 {
    let diff: Vec<f64> = d_a.iter().zip(d_b).map(|(a, b)| a - b).collect();
    k.bilinear(&diff, &diff)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::assemble;
    use crate::mesh::{build_uniform_mesh, extract_constraints, AffineField, Coupling};
    use crate::phase::{CellMaterial, MaterialTable, PhaseGrid};

    fn checkerboard_4x4() -> PhaseGrid {
        let cells =
            (0..16).map(|k| CellMaterial::Discrete(((k % 4 + k / 4) % 2) as u16)).collect();
        PhaseGrid::from_cells(4, 4, 0.25, cells).unwrap()
    }

    #[test]
    fn zero_gaps_give_zero_solution() {
        let grid = checkerboard_4x4();
        let mesh = build_uniform_mesh(&grid).unwrap();
        let table = MaterialTable::two_phase(100.0, 0.2, 192.1, 0.2).unwrap();
        let k = assemble(&mesh, &table).unwrap();
        let cs = extract_constraints(&mesh, Coupling::Periodic).unwrap();
        let gaps = cs.gaps(&AffineField::zero());
        let sol = solve_saddle(k, &cs, &[gaps], &mesh.dof_coords()).unwrap();
        for v in &sol.displacements[0] {
            assert!(v.abs() < 1e-12);
        }
        for v in &sol.multipliers[0] {
            assert!(v.abs() < 1e-9);
        }
    }

    #[test]
    fn homogeneous_cell_yields_affine_solution() {
        let grid = PhaseGrid::uniform(4, 4, 0.25, 0).unwrap();
        let mesh = build_uniform_mesh(&grid).unwrap();
        let table = MaterialTable::two_phase(100.0, 0.2, 192.1, 0.2).unwrap();
        let k = assemble(&mesh, &table).unwrap();
        let cs = extract_constraints(&mesh, Coupling::Periodic).unwrap();
        let field = AffineField::from_strain([1.0, 0.0, 0.0]);
        let gaps = cs.gaps(&field);
        let sol = solve_saddle(k, &cs, &[gaps], &mesh.dof_coords()).unwrap();
        let d = &sol.displacements[0];
        for (n, p) in mesh.nodes().iter().enumerate() {
            let u = field.eval(*p);
            assert!((d[2 * n] - u[0]).abs() < 1e-10, "node {n}");
            assert!((d[2 * n + 1] - u[1]).abs() < 1e-10, "node {n}");
        }
    }

    #[test]
    fn checkerboard_matches_dense_lu_oracle() {
        use nalgebra::{DMatrix, DVector};
        let grid = checkerboard_4x4();
        let mesh = build_uniform_mesh(&grid).unwrap();
        let table = MaterialTable::two_phase(100.0, 0.2, 192.1, 0.2).unwrap();
        let k = assemble(&mesh, &table).unwrap();
        let cs = extract_constraints(&mesh, Coupling::Periodic).unwrap();
        let field = AffineField::from_strain([0.0, 0.0, 1.0]);
        let gaps = cs.gaps(&field);

        // Dense saddle oracle: [[K, G^T], [G, 0]].
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
        let mut rhs = DVector::<f64>::zeros(n + m);
        for (r, g) in gaps.iter().enumerate() {
            rhs[n + r] = *g;
        }
        let dense = big.lu().solve(&rhs).expect("dense saddle solvable");

        let sol = solve_saddle(k, &cs, &[gaps], &mesh.dof_coords()).unwrap();
        let d = &sol.displacements[0];
        let dmax = dense.iter().take(n).map(|v| v.abs()).fold(0.0, f64::max);
        for i in 0..n {
            assert!(
                (d[i] - dense[i]).abs() <= 1e-10 * dmax.max(1.0),
                "dof {i}: {} vs {}",
                d[i],
                dense[i]
            );
        }
        // Multipliers agree too (same constraint functional basis).
        for r in 0..m {
            assert!(
                (sol.multipliers[0][r] - dense[n + r]).abs() <= 1e-8 * dmax.max(1.0),
                "lambda {r}"
            );
        }
        assert!(sol.constraint_residual[0] < 1e-10);
        assert!(sol.equilibrium_residual[0] < 1e-9);
    }

    #[test]
    fn multi_rhs_equals_column_by_column() {
        let grid = checkerboard_4x4();
        let mesh = build_uniform_mesh(&grid).unwrap();
        let table = MaterialTable::two_phase(100.0, 0.2, 192.1, 0.2).unwrap();
        let k = assemble(&mesh, &table).unwrap();
        let cs = extract_constraints(&mesh, Coupling::Periodic).unwrap();
        let solver = SaddleSolver::new(k, &cs, &mesh.dof_coords()).unwrap();
        let cols: Vec<Vec<f64>> = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]
            .iter()
            .map(|e| cs.gaps(&AffineField::from_strain(*e)))
            .collect();
        let batch = solver.solve(&cols, None).unwrap();
        for (j, col) in cols.iter().enumerate() {
            let single = solver.solve(std::slice::from_ref(col), None).unwrap();
            let scale = single.displacements[0]
                .iter()
                .map(|v| v.abs())
                .fold(0.0, f64::max)
                .max(1e-30);
            for i in 0..single.displacements[0].len() {
                assert!(
                    (batch.displacements[j][i] - single.displacements[0][i]).abs()
                        <= 1e-12 * scale
                );
            }
        }
    }

    #[test]
    fn solution_energy_nonnegative() {
        let grid = checkerboard_4x4();
        let mesh = build_uniform_mesh(&grid).unwrap();
        let table = MaterialTable::two_phase(100.0, 0.2, 192.1, 0.2).unwrap();
        let k = assemble(&mesh, &table).unwrap();
        let cs = extract_constraints(&mesh, Coupling::Periodic).unwrap();
        let solver = SaddleSolver::new(k, &cs, &mesh.dof_coords()).unwrap();
        for eps in [[1.0, 0.0, 0.0], [0.3, -0.2, 0.7]] {
            let gaps = cs.gaps(&AffineField::from_strain(eps));
            let sol = solver.solve(&[gaps], None).unwrap();
            let e = solver.stiffness().bilinear(&sol.displacements[0], &sol.displacements[0]);
            assert!(e >= 0.0);
        }
    }

    #[test]
    fn energy_norm_identities() {
        let grid = PhaseGrid::uniform(2, 2, 0.5, 0).unwrap();
        let mesh = build_uniform_mesh(&grid).unwrap();
        let table = MaterialTable::two_phase(100.0, 0.2, 192.1, 0.2).unwrap();
        let k = assemble(&mesh, &table).unwrap();
        let n = k.dim();
        let d: Vec<f64> = (0..n).map(|i| (i as f64 * 0.37).sin()).collect();
        assert_eq!(energy_norm_sq(&d, &d, &k), 0.0);
        // Rigid translation difference has zero energy under the
        // unconstrained (pure Neumann) stiffness.
        let mut shifted = d.clone();
        for i in (0..n).step_by(2) {
            shifted[i] += 3.5;
        }
        let e = energy_norm_sq(&d, &shifted, &k);
        assert!(e.abs() <= 1e-12 * k.norm_inf() * 3.5 * 3.5 * n as f64);
    }

    #[test]
    fn energy_norm_matches_dense_triple_product() {
        use nalgebra::{DMatrix, DVector};
        let grid = checkerboard_4x4();
        let mesh = build_uniform_mesh(&grid).unwrap();
        let table = MaterialTable::two_phase(100.0, 0.2, 192.1, 0.2).unwrap();
        let k = assemble(&mesh, &table).unwrap();
        let n = k.dim();
        let a: Vec<f64> = (0..n).map(|i| ((i * 13 % 7) as f64) / 7.0).collect();
        let b: Vec<f64> = (0..n).map(|i| ((i * 5 % 11) as f64) / 11.0).collect();
        let mut dense = DMatrix::<f64>::zeros(n, n);
        for (r, c, v) in k.matrix().iter_entries() {
            dense[(r, c)] = v;
        }
        let diff = DVector::from_iterator(n, a.iter().zip(&b).map(|(x, y)| x - y));
        let expected = (diff.transpose() * &dense * &diff)[(0, 0)];
        let got = energy_norm_sq(&a, &b, &k);
        assert!((got - expected).abs() < 1e-9 * expected.abs().max(1.0));
    }

    #[test]
    fn duplicate_constraint_row_is_singular() {
        let grid = PhaseGrid::uniform(2, 2, 0.5, 0).unwrap();
        let mesh = build_uniform_mesh(&grid).unwrap();
        let table = MaterialTable::two_phase(100.0, 0.2, 192.1, 0.2).unwrap();
        let k = assemble(&mesh, &table).unwrap();
        let cs = extract_constraints(&mesh, Coupling::Periodic).unwrap();
        let mut rows = cs.rows().to_vec();
        rows.push(rows[0].clone());
        let broken = ConstraintSet::new(cs.n_dofs(), rows);
        match SaddleSolver::new(k, &broken, &mesh.dof_coords()) {
            Err(Error::SingularSystem { .. }) => {}
            other => panic!("expected SingularSystem, got {:?}", other.map(|_| ())),
        }
    }
}
