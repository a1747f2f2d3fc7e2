use std::io::Write;
use std::path::Path;

use crate::error::Result;
use crate::mesh::{MacroMesh, QuadtreeMesh};
use crate::phase::CellMaterial;

/// Scalar cell data array for VTK export.
pub struct CellField<'a> {
    pub name: &'a str,
    pub values: &'a [f64],
}

/// Vector (2D, padded to 3D) point data array.
pub struct PointField<'a> {
    pub name: &'a str,
    /// Interleaved (x, y) per node.
    pub values: &'a [f64],
}

fn write_header(out: &mut impl Write, title: &str) -> std::io::Result<()> {
    writeln!(out, "# vtk DataFile Version 3.0")?;
    writeln!(out, "{title}")?;
    writeln!(out, "ASCII")?;
    writeln!(out, "DATASET UNSTRUCTURED_GRID")
}

fn write_quads(
    out: &mut impl Write,
    points: &[[f64; 2]],
    quads: &[[usize; 4]],
) -> std::io::Result<()> {
    writeln!(out, "POINTS {} double", points.len())?;
    for p in points {
        writeln!(out, "{:.9e} {:.9e} 0.0", p[0], p[1])?;
    }
    writeln!(out, "CELLS {} {}", quads.len(), quads.len() * 5)?;
    for q in quads {
        writeln!(out, "4 {} {} {} {}", q[0], q[1], q[2], q[3])?;
    }
    writeln!(out, "CELL_TYPES {}", quads.len())?;
    for _ in quads {
        writeln!(out, "9")?; // VTK_QUAD
    }
    Ok(())
}

fn write_cell_data(
    out: &mut impl Write,
    n_cells: usize,
    fields: &[CellField],
) -> std::io::Result<()> {
    if fields.is_empty() {
        return Ok(());
    }
    writeln!(out, "CELL_DATA {n_cells}")?;
    for f in fields {
        assert_eq!(f.values.len(), n_cells, "cell field {}", f.name);
        writeln!(out, "SCALARS {} double 1", f.name)?;
        writeln!(out, "LOOKUP_TABLE default")?;
        for v in f.values {
            writeln!(out, "{v:.9e}")?;
        }
    }
    Ok(())
}

fn write_point_data(
    out: &mut impl Write,
    n_points: usize,
    fields: &[PointField],
) -> std::io::Result<()> {
    if fields.is_empty() {
        return Ok(());
    }
    writeln!(out, "POINT_DATA {n_points}")?;
    for f in fields {
        assert_eq!(f.values.len(), 2 * n_points, "point field {}", f.name);
        writeln!(out, "VECTORS {} double", f.name)?;
        for c in f.values.chunks(2) {
            writeln!(out, "{:.9e} {:.9e} 0.0", c[0], c[1])?;
        }
    }
    Ok(())
}

/// Export a quadtree mesh as a legacy VTK unstructured grid of quads.
/// A `phase` cell array (discrete id, or the inclusion weight for blend
/// cells offset by 1000) is always written; extra cell/point fields are
/// appended.
pub fn write_vtk_quadtree(
    path: impl AsRef<Path>,
    mesh: &QuadtreeMesh,
    cell_fields: &[CellField],
    point_fields: &[PointField],
) -> Result<()> {
    let mut out = Vec::new();
    write_header(&mut out, "pixelfem microstructure mesh")?;
    let quads: Vec<[usize; 4]> = mesh.leaves().iter().map(|l| l.corners).collect();
    write_quads(&mut out, mesh.nodes(), &quads)?;

    let phase: Vec<f64> = mesh
        .leaves()
        .iter()
        .map(|l| match &l.material {
            CellMaterial::Discrete(id) => *id as f64,
            CellMaterial::Blend(w) => {
                // Encode blends by their non-matrix weight, offset to
                // stay distinguishable from discrete ids.
                1000.0 + w.iter().skip(1).map(|(_, v)| v).sum::<f64>()
            }
        })
        .collect();
    writeln!(&mut out, "CELL_DATA {}", quads.len())?;
    writeln!(&mut out, "SCALARS phase double 1")?;
    writeln!(&mut out, "LOOKUP_TABLE default")?;
    for v in &phase {
        writeln!(&mut out, "{v:.9e}")?;
    }
    for f in cell_fields {
        assert_eq!(f.values.len(), quads.len(), "cell field {}", f.name);
        writeln!(&mut out, "SCALARS {} double 1", f.name)?;
        writeln!(&mut out, "LOOKUP_TABLE default")?;
        for v in f.values {
            writeln!(&mut out, "{v:.9e}")?;
        }
    }
    write_point_data(&mut out, mesh.n_nodes(), point_fields)?;
    std::fs::write(path.as_ref(), out)?;
    Ok(())
}

/// Export a macro mesh with displacement and optional cell data.
pub fn write_vtk_macro(
    path: impl AsRef<Path>,
    mesh: &MacroMesh,
    cell_fields: &[CellField],
    point_fields: &[PointField],
) -> Result<()> {
    let mut out = Vec::new();
    write_header(&mut out, "pixelfem macro mesh")?;
    let points: Vec<[f64; 2]> = (0..mesh.n_nodes()).map(|n| mesh.node_coords(n)).collect();
    let quads: Vec<[usize; 4]> = (0..mesh.n_elems()).map(|e| mesh.elem_nodes(e)).collect();
    write_quads(&mut out, &points, &quads)?;
    write_cell_data(&mut out, quads.len(), cell_fields)?;
    write_point_data(&mut out, points.len(), point_fields)?;
    std::fs::write(path.as_ref(), out)?;
    Ok(())
}
