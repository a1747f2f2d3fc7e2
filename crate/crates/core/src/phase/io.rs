use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::phase::{CellMaterial, MaterialTable, PhaseGrid, PhaseProperties};

/// Supported phase image formats.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridFormat {
    /// Portable graymap, P2 (ASCII) or P5 (binary), gray level per phase.
    Pgm,
    /// Comma-separated integer phase ids, one image row per line.
    Csv,
}

fn parse_err(path: &Path, message: impl Into<String>) -> Error {
    Error::ParseError { path: path.display().to_string(), message: message.into() }
}

/// Load a discrete phase grid. Files store rows top-down as an image;
/// internally the grid origin is the lower-left corner, so rows are
/// flipped on load. `cell_size` is the pixel edge length in mm.
///
/// For PGM, gray levels are mapped to phase ids through `table`; CSV
/// files carry phase ids directly (validated against the table).
pub fn load_grid(
    path: impl AsRef<Path>,
    format: GridFormat,
    table: &MaterialTable,
    cell_size: f64,
) -> Result<PhaseGrid> {
    let path = path.as_ref();
    match format {
        GridFormat::Pgm => load_pgm(path, table, cell_size),
        GridFormat::Csv => load_csv(path, table, cell_size),
    }
}

fn load_pgm(path: &Path, table: &MaterialTable, cell_size: f64) -> Result<PhaseGrid> {
    let mut raw = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut raw)?;
    if raw.len() < 2 {
        return Err(parse_err(path, "file too short for a PGM header"));
    }
    let magic = &raw[0..2];
    let binary = match magic {
        b"P2" => false,
        b"P5" => true,
        _ => return Err(parse_err(path, "expected P2 or P5 magic")),
    };

    // Header: magic, width, height, maxval as whitespace-separated tokens,
    // '#' comments allowed through the end of the line.
    let mut pos = 2usize;
    let mut header = [0usize; 3];
    let mut got = 0usize;
    while got < 3 {
        while pos < raw.len() && (raw[pos].is_ascii_whitespace() || raw[pos] == b'#') {
            if raw[pos] == b'#' {
                while pos < raw.len() && raw[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                pos += 1;
            }
        }
        let start = pos;
        while pos < raw.len() && raw[pos].is_ascii_digit() {
            pos += 1;
        }
        if start == pos {
            return Err(parse_err(path, "malformed PGM header"));
        }
        let tok = std::str::from_utf8(&raw[start..pos]).unwrap();
        header[got] = tok.parse().map_err(|_| parse_err(path, "bad header integer"))?;
        got += 1;
    }
    let (width, height, maxval) = (header[0], header[1], header[2]);
    if width == 0 || height == 0 {
        return Err(parse_err(path, "zero image dimension"));
    }
    if maxval == 0 || maxval > 65535 {
        return Err(parse_err(path, format!("unsupported maxval {maxval}")));
    }

    let mut values: Vec<u16> = Vec::with_capacity(width * height);
    if binary {
        pos += 1; // single whitespace after maxval
        let wide = maxval > 255;
        let need = width * height * if wide { 2 } else { 1 };
        if raw.len() < pos + need {
            return Err(parse_err(path, "truncated P5 raster"));
        }
        for k in 0..width * height {
            let v = if wide {
                u16::from_be_bytes([raw[pos + 2 * k], raw[pos + 2 * k + 1]])
            } else {
                raw[pos + k] as u16
            };
            values.push(v);
        }
    } else {
        let text = std::str::from_utf8(&raw[pos..])
            .map_err(|_| parse_err(path, "non-UTF8 P2 raster"))?;
        for tok in text.split_whitespace() {
            if tok.starts_with('#') {
                continue;
            }
            let v: u16 = tok.parse().map_err(|_| parse_err(path, format!("bad pixel {tok}")))?;
            values.push(v);
        }
        if values.len() != width * height {
            return Err(parse_err(
                path,
                format!("expected {} pixels, found {}", width * height, values.len()),
            ));
        }
    }

    let mut cells = vec![CellMaterial::Discrete(0); width * height];
    for (k, gray) in values.iter().enumerate() {
        let phase = table.phase_by_gray(*gray)?;
        let img_row = k / width;
        let col = k % width;
        let j = height - 1 - img_row; // flip: file rows are top-down
        cells[j * width + col] = CellMaterial::Discrete(phase.id);
    }
    PhaseGrid::from_cells(width, height, cell_size, cells)
}

fn load_csv(path: &Path, table: &MaterialTable, cell_size: f64) -> Result<PhaseGrid> {
    let reader = BufReader::new(std::fs::File::open(path)?);
    let mut rows: Vec<Vec<u16>> = Vec::new();
    for (ln, line) in reader.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let mut row = Vec::new();
        for tok in trimmed.split(',') {
            let id: u16 = tok
                .trim()
                .parse()
                .map_err(|_| parse_err(path, format!("line {}: bad id {tok:?}", ln + 1)))?;
            row.push(id);
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(parse_err(path, "no data rows"));
    }
    let width = rows[0].len();
    if rows.iter().any(|r| r.len() != width) {
        return Err(parse_err(path, "ragged rows"));
    }
    let height = rows.len();
    let mut cells = vec![CellMaterial::Discrete(0); width * height];
    for (img_row, row) in rows.iter().enumerate() {
        for (col, id) in row.iter().enumerate() {
            table.phase(*id)?; // must be mapped
            let j = height - 1 - img_row;
            cells[j * width + col] = CellMaterial::Discrete(*id);
        }
    }
    PhaseGrid::from_cells(width, height, cell_size, cells)
}

/// Write a discrete grid as binary PGM (P5) using the table's gray levels.
pub fn save_pgm(path: impl AsRef<Path>, grid: &PhaseGrid, table: &MaterialTable) -> Result<()> {
    let path = path.as_ref();
    let maxval: u16 = table.phases.iter().map(|p| p.gray).max().unwrap_or(255).max(1);
    let mut out = Vec::new();
    write!(out, "P5\n{} {}\n{}\n", grid.width(), grid.height(), maxval)?;
    for img_row in 0..grid.height() {
        let j = grid.height() - 1 - img_row;
        for i in 0..grid.width() {
            let gray = match grid.cell(i, j) {
                CellMaterial::Discrete(id) => table.phase(*id)?.gray,
                CellMaterial::Blend(_) => {
                    return Err(Error::InvalidInput(
                        "PGM export supports discrete grids only".into(),
                    ))
                }
            };
            if maxval > 255 {
                out.extend_from_slice(&gray.to_be_bytes());
            } else {
                out.push(gray as u8);
            }
        }
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Write a discrete grid as CSV of phase ids (image row order).
pub fn save_csv(path: impl AsRef<Path>, grid: &PhaseGrid) -> Result<()> {
    let mut out = String::new();
    for img_row in 0..grid.height() {
        let j = grid.height() - 1 - img_row;
        let row: Vec<String> = (0..grid.width())
            .map(|i| match grid.cell(i, j) {
                CellMaterial::Discrete(id) => Ok(id.to_string()),
                CellMaterial::Blend(_) => {
                    Err(Error::InvalidInput("CSV export supports discrete grids only".into()))
                }
            })
            .collect::<Result<_>>()?;
        out.push_str(&row.join(","));
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
struct MaterialFile {
    phases: Vec<PhaseProperties>,
    domain: DomainSpec,
}

#[derive(Debug, Serialize, Deserialize)]
struct DomainSpec {
    eps_x_mm: f64,
    eps_y_mm: f64,
}

/// Load a material table plus domain extents from JSON:
/// `{"phases": [{"id", "E", "nu", "gray"}...], "domain": {"eps_x_mm", "eps_y_mm"}}`.
pub fn load_material_table(path: impl AsRef<Path>) -> Result<(MaterialTable, (f64, f64))> {
    let text = std::fs::read_to_string(path.as_ref())?;
    let parsed: MaterialFile = serde_json::from_str(&text)?;
    let table = MaterialTable::new(parsed.phases)?;
    Ok((table, (parsed.domain.eps_x_mm, parsed.domain.eps_y_mm)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table() -> MaterialTable {
        MaterialTable::new(vec![
            PhaseProperties { id: 0, young: 100.0, poisson: 0.2, gray: 0 },
            PhaseProperties { id: 1, young: 192.1, poisson: 0.2, gray: 255 },
        ])
        .unwrap()
    }

    #[test]
    fn csv_checkerboard_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("grid.csv");
        std::fs::write(&path, "0,1\n1,0\n").unwrap();
        let g = load_grid(&path, GridFormat::Csv, &table(), 0.5).unwrap();
        assert_eq!(g.width(), 2);
        let f = g.volume_fractions();
        assert!((f[&0] - 0.5).abs() < 1e-12);
        assert!((f[&1] - 0.5).abs() < 1e-12);

        let out = dir.path().join("back.csv");
        save_csv(&out, &g).unwrap();
        let g2 = load_grid(&out, GridFormat::Csv, &table(), 0.5).unwrap();
        assert_eq!(g, g2);
    }

    #[test]
    fn csv_all_zero() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("grid.csv");
        std::fs::write(&path, "0,0,0,0\n0,0,0,0\n0,0,0,0\n0,0,0,0\n").unwrap();
        let g = load_grid(&path, GridFormat::Csv, &table(), 1.0).unwrap();
        let f = g.volume_fractions();
        assert_eq!(f.len(), 1);
        assert!((f[&0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn csv_row_order_is_image_order() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("grid.csv");
        // First file row is the top of the image.
        std::fs::write(&path, "1,1\n0,0\n").unwrap();
        let g = load_grid(&path, GridFormat::Csv, &table(), 1.0).unwrap();
        assert_eq!(g.cell(0, 0), &CellMaterial::Discrete(0)); // bottom
        assert_eq!(g.cell(0, 1), &CellMaterial::Discrete(1)); // top
    }

    #[test]
    fn pgm_binary_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("grid.pgm");
        let g = PhaseGrid::from_cells(
            2,
            2,
            0.5,
            vec![
                CellMaterial::Discrete(0),
                CellMaterial::Discrete(1),
                CellMaterial::Discrete(1),
                CellMaterial::Discrete(0),
            ],
        )
        .unwrap();
        save_pgm(&path, &g, &table()).unwrap();
        let g2 = load_grid(&path, GridFormat::Pgm, &table(), 0.5).unwrap();
        assert_eq!(g, g2);
    }

    #[test]
    fn pgm_ascii_parse() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("grid.pgm");
        std::fs::write(&path, "P2\n# comment\n2 2\n255\n0 255\n255 0\n").unwrap();
        let g = load_grid(&path, GridFormat::Pgm, &table(), 1.0).unwrap();
        let f = g.volume_fractions();
        assert!((f[&0] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn unknown_gray_level_is_unmapped_phase() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("grid.pgm");
        std::fs::write(&path, "P2\n2 2\n255\n0 255\n17 0\n").unwrap();
        let err = load_grid(&path, GridFormat::Pgm, &table(), 1.0).unwrap_err();
        assert!(matches!(err, Error::UnmappedPhase(_)), "got {err:?}");
    }

    #[test]
    fn malformed_header_is_parse_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("grid.pgm");
        std::fs::write(&path, "P7\n2 2\n255\n").unwrap();
        assert!(matches!(
            load_grid(&path, GridFormat::Pgm, &table(), 1.0),
            Err(Error::ParseError { .. })
        ));
    }

    #[test]
    fn material_json_parses() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("materials.json");
        std::fs::write(
            &path,
            r#"{"phases":[{"id":0,"E":100.0,"nu":0.2,"gray":0},
                          {"id":1,"E":192.1,"nu":0.2,"gray":255}],
                "domain":{"eps_x_mm":1.0,"eps_y_mm":1.0}}"#,
        )
        .unwrap();
        let (table, (ex, ey)) = load_material_table(&path).unwrap();
        assert_eq!(table.phases.len(), 2);
        assert_eq!(ex, 1.0);
        assert_eq!(ey, 1.0);
        assert_eq!(table.phase(1).unwrap().young, 192.1);
    }
}
