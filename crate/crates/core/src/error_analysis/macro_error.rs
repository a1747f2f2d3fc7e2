use crate::error::{Error, Result};
use crate::fem::{displacement_at, gauss_points, strain_at};
use crate::homogenize::MacroSolution;
use crate::phase::Elasticity2D;

/// Energy- and L2-norm of a macro field difference with the reference
/// solution energy for relative measures.
#[derive(Debug, Clone, Copy)]
pub struct MacroErrorNorms {
    pub energy: f64,
    pub l2: f64,
    pub reference_energy: f64,
}

fn eval_macro(sol: &MacroSolution, x: f64, y: f64) -> Result<([f64; 2], [f64; 3])> {
    let e = sol
        .mesh
        .locate(x, y)
        .ok_or_else(|| Error::NotNested(format!("point ({x}, {y}) outside macro domain")))?;
    let coords = sol.mesh.elem_corner_coords(e);
    let dofs = sol.element_dofs(e);
    let (dx, dy) = sol.mesh.spacing();
    let i = (e % sol.mesh.dims().0) as f64;
    let j = (e / sol.mesh.dims().0) as f64;
    let xi = 2.0 * (x - i * dx) / dx - 1.0;
    let eta = 2.0 * (y - j * dy) / dy - 1.0;
    Ok((displacement_at(&dofs, xi, eta), strain_at(&coords, &dofs, xi, eta)?))
}

/// Energy-norm difference between a coarse and a reference macro
/// solution, integrated over the reference mesh with the constant
/// homogenized tensor. The coarse mesh must be nested in the reference.
pub fn macro_error(
    coarse: &MacroSolution,
    reference: &MacroSolution,
    a0: &Elasticity2D,
) -> Result<MacroErrorNorms> {
    let (cnx, cny) = coarse.mesh.dims();
    let (rnx, rny) = reference.mesh.dims();
    if rnx % cnx != 0 || rny % cny != 0 {
        return Err(Error::NotNested(format!(
            "macro meshes {cnx}x{cny} and {rnx}x{rny} are not nested"
        )));
    }
    if (coarse.mesh.length() - reference.mesh.length()).abs() > 1e-9
        || (coarse.mesh.height() - reference.mesh.height()).abs() > 1e-9
    {
        return Err(Error::NotNested("macro domains differ".into()));
    }
    let w = reference.mesh.gauss_weight();
    let mut e2 = 0.0;
    let mut l2 = 0.0;
    let mut ref2 = 0.0;
    for e in 0..reference.mesh.n_elems() {
        for (l, gp) in reference.mesh.elem_gauss_points(e).iter().enumerate() {
            let (ur, er) = {
                let coords = reference.mesh.elem_corner_coords(e);
                let dofs = reference.element_dofs(e);
                let g = gauss_points()[l];
                (displacement_at(&dofs, g[0], g[1]), strain_at(&coords, &dofs, g[0], g[1])?)
            };
            let (uc, ec) = eval_macro(coarse, gp[0], gp[1])?;
            let de = [ec[0] - er[0], ec[1] - er[1], ec[2] - er[2]];
            let du = [uc[0] - ur[0], uc[1] - ur[1]];
            let s = a0.stress(de);
            e2 += w * (s[0] * de[0] + s[1] * de[1] + s[2] * de[2]);
            l2 += w * (du[0] * du[0] + du[1] * du[1]);
            let sr = a0.stress(er);
            ref2 += w * (sr[0] * er[0] + sr[1] * er[1] + sr[2] * er[2]);
        }
    }
    Ok(MacroErrorNorms {
        energy: e2.max(0.0).sqrt(),
        l2: l2.max(0.0).sqrt(),
        reference_energy: ref2.max(0.0).sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::homogenize::MacroProblem;
    use crate::phase::plane_strain_tensor;

    #[test]
    fn identical_solutions_have_zero_error() {
        let a0 = plane_strain_tensor(120.0, 0.25).unwrap();
        let p = MacroProblem::cantilever(100.0, 20.0, 1.0, 0.1, 10, 2).unwrap();
        let s = p.solve_single_scale(&a0).unwrap();
        let norms = macro_error(&s, &s, &a0).unwrap();
        assert!(norms.energy < 1e-12 * norms.reference_energy);
    }

    #[test]
    fn energy_convergence_rate_near_one() {
        // Homogeneous cantilever, dyadic macro refinement: energy-norm
        // slope about O(H) over 3 refinements against a fine reference.
        let a0 = plane_strain_tensor(120.0, 0.2).unwrap();
        let refp = MacroProblem::cantilever(100.0, 20.0, 1.0, 0.1, 40, 8).unwrap();
        let refsol = refp.solve_single_scale(&a0).unwrap();
        let mut errors = Vec::new();
        for (nx, ny) in [(5, 1), (10, 2), (20, 4)] {
            let p = MacroProblem::cantilever(100.0, 20.0, 1.0, 0.1, nx, ny).unwrap();
            let s = p.solve_single_scale(&a0).unwrap();
            errors.push(macro_error(&s, &refsol, &a0).unwrap().energy);
        }
        let s1 = (errors[0] / errors[1]).log2();
        let s2 = (errors[1] / errors[2]).log2();
        let slope = 0.5 * (s1 + s2);
        assert!(
            (slope - 1.0).abs() <= 0.2,
            "energy slope {slope} (ratios {s1:.3}, {s2:.3})"
        );
    }

    #[test]
    fn non_nested_meshes_rejected() {
        let a0 = plane_strain_tensor(120.0, 0.25).unwrap();
        let p1 = MacroProblem::cantilever(100.0, 20.0, 1.0, 0.1, 3, 2).unwrap();
        let p2 = MacroProblem::cantilever(100.0, 20.0, 1.0, 0.1, 4, 2).unwrap();
        let s1 = p1.solve_single_scale(&a0).unwrap();
        let s2 = p2.solve_single_scale(&a0).unwrap();
        assert!(macro_error(&s1, &s2, &a0).is_err());
    }
}
