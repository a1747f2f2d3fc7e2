//! Uniform pixel coarsening (blending and phase-preserving variants) and
//! microstructure-informed quadtree mesh coarsening.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::mesh::{LeafBox, QuadtreeMesh};
use crate::phase::{CellMaterial, PhaseGrid, PhaseId};

/// Which uniform pixel coarsening rule to apply.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CoarsenVariant {
    /// Volume averaging: merged pixels blend into interphases (variant A).
    Averaging,
    /// Majority wins, ties steered toward the reference phase ratio
    /// (variant B).
    Majority,
}

/// Outcome summary of a coarsening run.
#[derive(Debug, Clone, Serialize)]
pub struct CoarseningReport {
    pub steps_requested: usize,
    pub steps_applied: usize,
    pub resolution_before: (usize, usize),
    pub resolution_after: (usize, usize),
    pub ndof_before: usize,
    pub ndof_after: usize,
    /// `ndof_after / ndof_before`, in (0, 1].
    pub factor: f64,
    pub fractions_before: BTreeMap<PhaseId, f64>,
    pub fractions_after: BTreeMap<PhaseId, f64>,
}

fn block_cells(grid: &PhaseGrid, i: usize, j: usize) -> [&CellMaterial; 4] {
    [
        grid.cell(2 * i, 2 * j),
        grid.cell(2 * i + 1, 2 * j),
        grid.cell(2 * i, 2 * j + 1),
        grid.cell(2 * i + 1, 2 * j + 1),
    ]
}

/// Halve the resolution by averaging each 2x2 pixel block into a blend
/// cell. Global volume fractions are preserved exactly.
pub fn coarsen_variant_a(grid: &PhaseGrid) -> Result<PhaseGrid> {
    let (w, h) = (grid.width(), grid.height());
    if w % 2 != 0 || h % 2 != 0 {
        return Err(Error::OddDimension(w, h));
    }
    let (cw, ch) = (w / 2, h / 2);
    let mut cells = Vec::with_capacity(cw * ch);
    for j in 0..ch {
        for i in 0..cw {
            cells.push(CellMaterial::mean(&block_cells(grid, i, j)));
        }
    }
    PhaseGrid::from_cells(cw, ch, grid.cell_size() * 2.0, cells)
}

/// Halve the resolution keeping discrete phases: each 2x2 block takes its
/// majority phase; 2-2 ties pick the phase that moves the running global
/// fraction toward `reference_fractions`. Cells are processed row-major
/// from the lower-left, which makes the tie rule deterministic.
pub fn coarsen_variant_b(
    grid: &PhaseGrid,
    reference_fractions: &BTreeMap<PhaseId, f64>,
) -> Result<PhaseGrid> {
    let (w, h) = (grid.width(), grid.height());
    if w % 2 != 0 || h % 2 != 0 {
        return Err(Error::OddDimension(w, h));
    }
    if let Some(idx) = grid.cells().iter().position(|c| !c.is_discrete()) {
        return Err(Error::DiscreteOnly(idx));
    }
    let (cw, ch) = (w / 2, h / 2);
    let mut cells = Vec::with_capacity(cw * ch);
    let mut counts: BTreeMap<PhaseId, usize> = BTreeMap::new();
    let mut assigned = 0usize;
    for j in 0..ch {
        for i in 0..cw {
            let mut tally: BTreeMap<PhaseId, usize> = BTreeMap::new();
            for cell in block_cells(grid, i, j) {
                if let CellMaterial::Discrete(p) = cell {
                    *tally.entry(*p).or_insert(0) += 1;
                }
            }
            let max_count = *tally.values().max().unwrap();
            let winners: Vec<PhaseId> =
                tally.iter().filter(|(_, c)| **c == max_count).map(|(p, _)| *p).collect();
            let chosen = if winners.len() == 1 {
                winners[0]
            } else {
                // Assign the tied phase that is most under-represented in
                // the running output, moving the ratio toward the
                // reference; ties on the deficit fall to the smaller id.
                let mut best = winners[0];
                let mut best_deficit = f64::NEG_INFINITY;
                for &cand in &winners {
                    let current = if assigned == 0 {
                        0.0
                    } else {
                        counts.get(&cand).copied().unwrap_or(0) as f64 / assigned as f64
                    };
                    let deficit =
                        reference_fractions.get(&cand).copied().unwrap_or(0.0) - current;
                    if deficit > best_deficit + 1e-15 {
                        best_deficit = deficit;
                        best = cand;
                    }
                }
                best
            };
            *counts.entry(chosen).or_insert(0) += 1;
            assigned += 1;
            cells.push(CellMaterial::Discrete(chosen));
        }
    }
    PhaseGrid::from_cells(cw, ch, grid.cell_size() * 2.0, cells)
}

/// Apply `steps` uniform coarsening rounds of the chosen variant and
/// report resolutions, dof counts and fraction drift.
pub fn coarsen_uniform(
    grid: &PhaseGrid,
    variant: CoarsenVariant,
    steps: usize,
) -> Result<(PhaseGrid, CoarseningReport)> {
    let reference = grid.volume_fractions();
    let mut current = grid.clone();
    let mut applied = 0;
    for _ in 0..steps {
        current = match variant {
            CoarsenVariant::Averaging => coarsen_variant_a(&current)?,
            CoarsenVariant::Majority => coarsen_variant_b(&current, &reference)?,
        };
        applied += 1;
    }
    let ndof_before = 2 * grid.width() * grid.height();
    let ndof_after = 2 * current.width() * current.height();
    let report = CoarseningReport {
        steps_requested: steps,
        steps_applied: applied,
        resolution_before: (grid.width(), grid.height()),
        resolution_after: (current.width(), current.height()),
        ndof_before,
        ndof_after,
        factor: ndof_after as f64 / ndof_before as f64,
        fractions_before: reference,
        fractions_after: current.volume_fractions(),
    };
    Ok((current, report))
}

/// One quadtree merging pass over the leaf boxes: every 2x2 group of
/// same-size sibling leaves with identical material merges, unless any
/// member touches (shares an edge segment with) a leaf of different
/// material. Returns whether anything changed.
pub fn merge_boxes_step(fine_w: usize, fine_h: usize, boxes: &mut Vec<LeafBox>) -> bool {
    // Pixel -> leaf owner map for edge-adjacency queries.
    let mut owner = vec![u32::MAX; fine_w * fine_h];
    for (k, b) in boxes.iter().enumerate() {
        let s = b.side();
        for dj in 0..s {
            for di in 0..s {
                owner[(b.j0 + dj) as usize * fine_w + (b.i0 + di) as usize] = k as u32;
            }
        }
    }

    // A leaf is an interface leaf when an edge-adjacent leaf has a
    // different material; such leaves never merge.
    let touches_other_phase = |b: &LeafBox| -> bool {
        let s = b.side() as i64;
        let (i0, j0) = (b.i0 as i64, b.j0 as i64);
        let check = |pi: i64, pj: i64| -> bool {
            if pi < 0 || pj < 0 || pi >= fine_w as i64 || pj >= fine_h as i64 {
                return false;
            }
            let other = owner[pj as usize * fine_w + pi as usize] as usize;
            boxes[other].material != b.material
        };
        for d in 0..s {
            if check(i0 - 1, j0 + d)
                || check(i0 + s, j0 + d)
                || check(i0 + d, j0 - 1)
                || check(i0 + d, j0 + s)
            {
                return true;
            }
        }
        false
    };

    // Group same-level siblings by their parent block.
    let mut groups: std::collections::HashMap<(u32, u32, u8), Vec<usize>> =
        std::collections::HashMap::new();
    for (k, b) in boxes.iter().enumerate() {
        let parent = (b.i0 >> (b.level + 1), b.j0 >> (b.level + 1), b.level);
        groups.entry(parent).or_default().push(k);
    }

    let mut merge_into: Vec<(u32, u32, u8, usize)> = Vec::new(); // (i0, j0, new level, sample idx)
    let mut consumed = vec![false; boxes.len()];
    let mut keys: Vec<_> = groups.keys().copied().collect();
    keys.sort();
    for key in keys {
        let members = &groups[&key];
        if members.len() != 4 {
            continue;
        }
        let first = &boxes[members[0]];
        if members.iter().any(|&k| boxes[k].material != first.material) {
            continue;
        }
        if members.iter().any(|&k| touches_other_phase(&boxes[k])) {
            continue;
        }
        let (pi, pj, level) = key;
        let s2 = 1u32 << (level + 1);
        if (pi * s2 + s2) as usize > fine_w || (pj * s2 + s2) as usize > fine_h {
            continue;
        }
        merge_into.push((pi * s2, pj * s2, level + 1, members[0]));
        for &k in members {
            consumed[k] = true;
        }
    }

    if merge_into.is_empty() {
        return false;
    }
    let mut next: Vec<LeafBox> = Vec::with_capacity(boxes.len());
    for (k, b) in boxes.iter().enumerate() {
        if !consumed[k] {
            next.push(b.clone());
        }
    }
    for (i0, j0, level, sample) in merge_into {
        next.push(LeafBox { i0, j0, level, material: boxes[sample].material.clone() });
    }
    *boxes = next;
    true
}

/// Quadtree-type adaptive mesh coarsening. Per step, every eligible 2x2
/// group of same-size same-material leaves merges; interface leaves are
/// preserved identically. Stops silently at the fixpoint.
pub fn quadtree_coarsen(
    mesh: &QuadtreeMesh,
    steps: usize,
) -> Result<(QuadtreeMesh, CoarseningReport)> {
    if steps == 0 {
        return Err(Error::InvalidInput("quadtree coarsening needs steps >= 1".into()));
    }
    let (fw, fh) = mesh.fine_dims();
    let mut boxes = mesh.leaf_boxes();
    let mut applied = 0;
    for _ in 0..steps {
        if !merge_boxes_step(fw, fh, &mut boxes) {
            break;
        }
        applied += 1;
    }
    let coarse = QuadtreeMesh::from_leaf_boxes(fw, fh, mesh.cell_size(), &boxes)?;
    let fractions = mesh_fractions(mesh);
    let report = CoarseningReport {
        steps_requested: steps,
        steps_applied: applied,
        resolution_before: (fw, fh),
        resolution_after: (fw, fh),
        ndof_before: mesh.ndof(),
        ndof_after: coarse.ndof(),
        factor: coarse.ndof() as f64 / mesh.ndof() as f64,
        fractions_before: fractions.clone(),
        fractions_after: fractions,
    };
    Ok((coarse, report))
}

/// Area-weighted phase fractions of a mesh.
pub fn mesh_fractions(mesh: &QuadtreeMesh) -> BTreeMap<PhaseId, f64> {
    let mut acc: BTreeMap<PhaseId, f64> = BTreeMap::new();
    let mut total = 0.0;
    for leaf in mesh.leaves() {
        let a = (leaf.side() as f64).powi(2);
        total += a;
        for (p, w) in leaf.material.weights() {
            *acc.entry(p).or_insert(0.0) += w * a;
        }
    }
    for v in acc.values_mut() {
        *v /= total;
    }
    acc
}

/// Leaves that touch a leaf of different material (set of `(i0, j0,
/// level)` triples). Used to check interface preservation.
pub fn interface_leaf_set(mesh: &QuadtreeMesh) -> std::collections::BTreeSet<(u32, u32, u8)> {
    let (fw, fh) = mesh.fine_dims();
    let owner = mesh.leaf_owner_map();
    let leaves = mesh.leaves();
    let mut out = std::collections::BTreeSet::new();
    for leaf in leaves {
        let s = leaf.side() as i64;
        let (i0, j0) = (leaf.i0 as i64, leaf.j0 as i64);
        let check = |pi: i64, pj: i64| -> bool {
            if pi < 0 || pj < 0 || pi >= fw as i64 || pj >= fh as i64 {
                return false;
            }
            leaves[owner[pj as usize * fw + pi as usize] as usize].material != leaf.material
        };
        let mut touches = false;
        for d in 0..s {
            if check(i0 - 1, j0 + d)
                || check(i0 + s, j0 + d)
                || check(i0 + d, j0 - 1)
                || check(i0 + d, j0 + s)
            {
                touches = true;
                break;
            }
        }
        if touches {
            out.insert((leaf.i0, leaf.j0, leaf.level));
        }
    }
    out
}
