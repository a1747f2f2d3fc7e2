use rayon::prelude::*;

use crate::error::Result;
use crate::error_analysis::projection::{check_nested, FieldSampler};
use crate::fem::gauss_points;
use crate::mesh::QuadtreeMesh;
use crate::phase::MaterialTable;

/// Energy-norm and L2-norm magnitudes of a field difference.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormPair {
    pub energy: f64,
    pub l2: f64,
}

/// Per-reference-leaf squared contributions (energy, l2).
type LeafContribs = Vec<(f64, f64)>;

fn quadrature(
    a: &FieldSampler,
    b: Option<&FieldSampler>,
    reference: &QuadtreeMesh,
    table: &MaterialTable,
) -> Result<LeafContribs> {
    check_nested(a.mesh(), reference)?;
    if let Some(b) = b {
        check_nested(b.mesh(), reference)?;
    }
    reference
        .leaves()
        .par_iter()
        .map(|leaf| {
            let c = table.cell_tensor(&leaf.material)?;
            let side = reference.leaf_side_mm(leaf);
            let det = side * side / 4.0;
            let h = reference.cell_size();
            let x0 = leaf.i0 as f64 * h;
            let y0 = leaf.j0 as f64 * h;
            let mut e2 = 0.0;
            let mut l2 = 0.0;
            for gp in gauss_points() {
                let x = x0 + 0.5 * (1.0 + gp[0]) * side;
                let y = y0 + 0.5 * (1.0 + gp[1]) * side;
                let (ua, ea) = a.sample(x, y)?;
                let (mut du, mut de) = (ua, ea);
                if let Some(b) = b {
                    let (ub, eb) = b.sample(x, y)?;
                    du = [ua[0] - ub[0], ua[1] - ub[1]];
                    de = [ea[0] - eb[0], ea[1] - eb[1], ea[2] - eb[2]];
                }
                let s = c.stress(de);
                e2 += det * (s[0] * de[0] + s[1] * de[1] + s[2] * de[2]);
                l2 += det * (du[0] * du[0] + du[1] * du[1]);
            }
            Ok((e2, l2))
        })
        .collect()
}

/// Energy- and L2-norm of `u_a - u_b` evaluated by quadrature over the
/// reference mesh with the reference-resolution elasticity field.
pub fn diff_norms(
    a: &FieldSampler,
    b: Option<&FieldSampler>,
    reference: &QuadtreeMesh,
    table: &MaterialTable,
) -> Result<NormPair> {
    let contribs = quadrature(a, b, reference, table)?;
    let e2: f64 = contribs.iter().map(|c| c.0).sum();
    let l2: f64 = contribs.iter().map(|c| c.1).sum();
    Ok(NormPair { energy: e2.max(0.0).sqrt(), l2: l2.max(0.0).sqrt() })
}

/// Like [`diff_norms`] but also returns the squared energy contribution
/// per reference leaf.
pub fn diff_norms_per_leaf(
    a: &FieldSampler,
    b: Option<&FieldSampler>,
    reference: &QuadtreeMesh,
    table: &MaterialTable,
) -> Result<(NormPair, Vec<f64>)> {
    let contribs = quadrature(a, b, reference, table)?;
    let e2: f64 = contribs.iter().map(|c| c.0).sum();
    let l2: f64 = contribs.iter().map(|c| c.1).sum();
    Ok((
        NormPair { energy: e2.max(0.0).sqrt(), l2: l2.max(0.0).sqrt() },
        contribs.into_iter().map(|c| c.0).collect(),
    ))
}

/// Norms of a single field (b = 0).
pub fn field_norms(
    a: &FieldSampler,
    reference: &QuadtreeMesh,
    table: &MaterialTable,
) -> Result<NormPair> {
    diff_norms(a, None, reference, table)
}

/// Aggregate per-reference-leaf quantities onto the containing leaves of
/// a coarser target mesh (sums the contributions).
pub fn aggregate_to_mesh(
    reference: &QuadtreeMesh,
    contributions: &[f64],
    target: &QuadtreeMesh,
) -> Result<Vec<f64>> {
    check_nested(target, reference)?;
    let owner = target.leaf_owner_map();
    let (tw, _) = target.fine_dims();
    let ratio = target.cell_size() / reference.cell_size();
    let mut out = vec![0.0; target.leaves().len()];
    let h_ref = reference.cell_size();
    let h_tgt = target.cell_size();
    for (leaf, v) in reference.leaves().iter().zip(contributions) {
        // Center of the reference leaf in target fine-pixel coordinates.
        let cx = (leaf.i0 as f64 + 0.5 * leaf.side() as f64) * h_ref / h_tgt;
        let cy = (leaf.j0 as f64 + 0.5 * leaf.side() as f64) * h_ref / h_tgt;
        let i = (cx.floor() as usize).min(tw - 1);
        let j = (cy.floor() as usize).min(target.fine_dims().1 - 1);
        let _ = ratio;
        out[owner[j * tw + i] as usize] += v;
    }
    Ok(out)
}
