use std::io::Write;
use std::path::Path;

use crate::error::Result;
use crate::fem::SparseSymmetric;

/// Dump a symmetric stiffness matrix in Matrix Market coordinate format
/// (lower triangle, 1-based indices).
pub fn write_matrix_market(path: impl AsRef<Path>, k: &SparseSymmetric) -> Result<()> {
    let mut out = Vec::new();
    writeln!(&mut out, "%%MatrixMarket matrix coordinate real symmetric")?;
    let entries: Vec<(usize, usize, f64)> =
        k.matrix().iter_entries().filter(|(r, c, _)| r >= c).collect();
    writeln!(&mut out, "{} {} {}", k.dim(), k.dim(), entries.len())?;
    for (r, c, v) in entries {
        writeln!(&mut out, "{} {} {v:.16e}", r + 1, c + 1)?;
    }
    std::fs::write(path.as_ref(), out)?;
    Ok(())
}
