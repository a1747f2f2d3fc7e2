use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::phase::PhaseId;

/// Material content of one pixel: a discrete phase or a convex blend of
/// phases produced by averaging coarsening.
///
/// Blend weights are kept as a full vector (sorted by phase id, strictly
/// positive, summing to 1) so that volume fractions stay exactly
/// recoverable after any number of coarsening steps.
#[derive(Debug, Clone, PartialEq)]
pub enum CellMaterial {
    Discrete(PhaseId),
    Blend(Vec<(PhaseId, f64)>),
}

impl CellMaterial {
    /// Weight of `phase` in this cell (1.0 or 0.0 for discrete cells).
    pub fn weight(&self, phase: PhaseId) -> f64 {
        match self {
            CellMaterial::Discrete(p) => {
                if *p == phase {
                    1.0
                } else {
                    0.0
                }
            }
            CellMaterial::Blend(w) => w
                .iter()
                .find(|(p, _)| *p == phase)
                .map(|(_, v)| *v)
                .unwrap_or(0.0),
        }
    }

    /// Iterate `(phase, weight)` pairs with positive weight.
    pub fn weights(&self) -> Vec<(PhaseId, f64)> {
        match self {
            CellMaterial::Discrete(p) => vec![(*p, 1.0)],
            CellMaterial::Blend(w) => w.clone(),
        }
    }

    pub fn is_discrete(&self) -> bool {
        matches!(self, CellMaterial::Discrete(_))
    }

    /// Mean of several cells, collapsing to `Discrete` when a single phase
    /// carries all weight. Weights are renormalized to sum to exactly 1.
    pub fn mean(cells: &[&CellMaterial]) -> CellMaterial {
        let mut acc: BTreeMap<PhaseId, f64> = BTreeMap::new();
        for cell in cells {
            for (p, w) in cell.weights() {
                *acc.entry(p).or_insert(0.0) += w;
            }
        }
        let total: f64 = acc.values().sum();
        let mut weights: Vec<(PhaseId, f64)> = acc
            .into_iter()
            .filter(|(_, w)| *w > 0.0)
            .map(|(p, w)| (p, w / total))
            .collect();
        if weights.len() == 1 {
            CellMaterial::Discrete(weights[0].0)
        } else {
            // Renormalize exactly so the weights sum to 1 bitwise.
            let sum: f64 = weights.iter().map(|(_, w)| w).sum();
            for (_, w) in weights.iter_mut() {
                *w /= sum;
            }
            CellMaterial::Blend(weights)
        }
    }
}

/// Uniform pixel raster of phase assignments (or blend weights) with a
/// physical cell size `h_cell` in mm. Cells are stored row-major with the
/// origin at the lower-left corner.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseGrid {
    width: usize,
    height: usize,
    cell_size: f64,
    cells: Vec<CellMaterial>,
}

impl PhaseGrid {
    /// Build a grid from row-major cells (index `j * width + i`, `j = 0`
    /// at the bottom).
    pub fn from_cells(
        width: usize,
        height: usize,
        cell_size: f64,
        cells: Vec<CellMaterial>,
    ) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidInput("grid dimensions must be positive".into()));
        }
        if cell_size <= 0.0 {
            return Err(Error::InvalidInput("cell size must be positive".into()));
        }
        if cells.len() != width * height {
            return Err(Error::InvalidInput(format!(
                "expected {} cells, got {}",
                width * height,
                cells.len()
            )));
        }
        for (idx, c) in cells.iter().enumerate() {
            if let CellMaterial::Blend(w) = c {
                let sum: f64 = w.iter().map(|(_, v)| v).sum();
                if (sum - 1.0).abs() > 1e-12 || w.iter().any(|(_, v)| *v < 0.0) {
                    return Err(Error::InvalidInput(format!(
                        "blend weights at cell {idx} do not form a convex combination"
                    )));
                }
            }
        }
        Ok(Self { width, height, cell_size, cells })
    }

    /// Grid of a single discrete phase.
    pub fn uniform(width: usize, height: usize, cell_size: f64, phase: PhaseId) -> Result<Self> {
        Self::from_cells(
            width,
            height,
            cell_size,
            vec![CellMaterial::Discrete(phase); width * height],
        )
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Pixel edge length h in mm.
    pub fn cell_size(&self) -> f64 {
        self.cell_size
    }

    /// Physical domain extents (eps_x, eps_y) in mm.
    pub fn extent(&self) -> (f64, f64) {
        (self.width as f64 * self.cell_size, self.height as f64 * self.cell_size)
    }

    pub fn cell(&self, i: usize, j: usize) -> &CellMaterial {
        &self.cells[j * self.width + i]
    }

    pub fn cells(&self) -> &[CellMaterial] {
        &self.cells
    }

    /// Volume fraction of every phase, including blend-cell weight
    /// contributions. The fractions sum to 1 within 1e-12.
    pub fn volume_fractions(&self) -> BTreeMap<PhaseId, f64> {
        let mut acc: BTreeMap<PhaseId, f64> = BTreeMap::new();
        for cell in &self.cells {
            for (p, w) in cell.weights() {
                *acc.entry(p).or_insert(0.0) += w;
            }
        }
        let n = self.cells.len() as f64;
        for v in acc.values_mut() {
            *v /= n;
        }
        acc
    }

    /// True if every cell is a discrete phase.
    pub fn is_discrete(&self) -> bool {
        self.cells.iter().all(CellMaterial::is_discrete)
    }

    /// Set of phase ids present with positive weight.
    pub fn phases_present(&self) -> Vec<PhaseId> {
        let mut seen = std::collections::BTreeSet::new();
        for cell in &self.cells {
            for (p, _) in cell.weights() {
                seen.insert(p);
            }
        }
        seen.into_iter().collect()
    }

    /// Refine every pixel into `factor x factor` pixels of the same
    /// material. The physical extent is unchanged.
    pub fn upsample(&self, factor: usize) -> Result<Self> {
        if factor == 0 {
            return Err(Error::InvalidInput("upsample factor must be >= 1".into()));
        }
        let (w, h) = (self.width * factor, self.height * factor);
        let mut cells = Vec::with_capacity(w * h);
        for j in 0..h {
            for i in 0..w {
                cells.push(self.cell(i / factor, j / factor).clone());
            }
        }
        Self::from_cells(w, h, self.cell_size / factor as f64, cells)
    }
}
