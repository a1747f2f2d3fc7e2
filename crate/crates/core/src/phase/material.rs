use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::phase::{CellMaterial, PhaseId};

/// Isotropic properties of one phase. `gray` is the PGM gray level the
/// phase maps to on image load/save.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PhaseProperties {
    pub id: PhaseId,
    /// Young's modulus in MPa.
    #[serde(rename = "E")]
    pub young: f64,
    /// Poisson ratio.
    #[serde(rename = "nu")]
    pub poisson: f64,
    /// Associated gray level in phase images.
    #[serde(default)]
    pub gray: u16,
}

/// Per-phase isotropic constants with the gray-level mapping used by the
/// image formats.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MaterialTable {
    pub phases: Vec<PhaseProperties>,
}

impl MaterialTable {
    pub fn new(phases: Vec<PhaseProperties>) -> Result<Self> {
        let mut ids = std::collections::BTreeSet::new();
        for p in &phases {
            if p.young <= 0.0 {
                return Err(Error::InvalidInput(format!(
                    "phase {}: Young's modulus must be positive",
                    p.id
                )));
            }
            if !(0.0..0.5).contains(&p.poisson) {
                return Err(Error::InvalidInput(format!(
                    "phase {}: Poisson ratio must lie in [0, 0.5)",
                    p.id
                )));
            }
            if !ids.insert(p.id) {
                return Err(Error::InvalidInput(format!("duplicate phase id {}", p.id)));
            }
        }
        Ok(Self { phases })
    }

    /// Two-phase convenience constructor (ids 0 and 1).
    pub fn two_phase(e0: f64, nu0: f64, e1: f64, nu1: f64) -> Result<Self> {
        Self::new(vec![
            PhaseProperties { id: 0, young: e0, poisson: nu0, gray: 0 },
            PhaseProperties { id: 1, young: e1, poisson: nu1, gray: 255 },
        ])
    }

    pub fn phase(&self, id: PhaseId) -> Result<&PhaseProperties> {
        self.phases
            .iter()
            .find(|p| p.id == id)
            .ok_or_else(|| Error::UnmappedPhase(format!("phase id {id} not in material table")))
    }

    pub fn phase_by_gray(&self, gray: u16) -> Result<&PhaseProperties> {
        self.phases
            .iter()
            .find(|p| p.gray == gray)
            .ok_or_else(|| Error::UnmappedPhase(format!("gray level {gray} not in material table")))
    }

    /// Plane-strain stiffness of a discrete phase.
    pub fn tensor(&self, id: PhaseId) -> Result<Elasticity2D> {
        let p = self.phase(id)?;
        plane_strain_tensor(p.young, p.poisson)
    }

    /// Stiffness of a cell: the phase tensor for discrete cells, the
    /// fraction-weighted tensor average for blend cells.
    pub fn cell_tensor(&self, cell: &CellMaterial) -> Result<Elasticity2D> {
        match cell {
            CellMaterial::Discrete(id) => self.tensor(*id),
            CellMaterial::Blend(w) => self.blend_tensor(w),
        }
    }

    /// Arithmetic (Voigt-type) average of phase stiffness tensors weighted
    /// by `weights`. Weights must sum to 1.
    pub fn blend_tensor(&self, weights: &[(PhaseId, f64)]) -> Result<Elasticity2D> {
        let sum: f64 = weights.iter().map(|(_, w)| w).sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidInput(format!("blend weights sum to {sum}, expected 1")));
        }
        let mut m = [[0.0; 3]; 3];
        for (id, w) in weights {
            let t = self.tensor(*id)?;
            for r in 0..3 {
                for c in 0..3 {
                    m[r][c] += w * t.m[r][c];
                }
            }
        }
        Elasticity2D::new(m)
    }

    /// Fraction-weighted Poisson ratio of a cell; exact for discrete cells.
    pub fn cell_poisson(&self, cell: &CellMaterial) -> Result<f64> {
        let mut nu = 0.0;
        for (id, w) in cell.weights() {
            nu += w * self.phase(id)?.poisson;
        }
        Ok(nu)
    }
}

/// 3x3 plane-strain stiffness in Voigt order (11, 22, 12) with engineering
/// shear, entries in MPa. Symmetric positive definite by construction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Elasticity2D {
    pub m: [[f64; 3]; 3],
}

impl Elasticity2D {
    pub fn new(m: [[f64; 3]; 3]) -> Result<Self> {
        for r in 0..3 {
            for c in (r + 1)..3 {
                let scale = m[r][c].abs().max(m[c][r].abs()).max(1.0);
                if (m[r][c] - m[c][r]).abs() > 1e-12 * scale {
                    return Err(Error::InvalidInput(format!(
                        "elasticity matrix not symmetric at ({r},{c})"
                    )));
                }
            }
        }
        Ok(Self { m })
    }

    pub fn zero() -> Self {
        Self { m: [[0.0; 3]; 3] }
    }

    /// sigma = C : eps (Voigt, engineering shear).
    pub fn stress(&self, eps: [f64; 3]) -> [f64; 3] {
        let mut s = [0.0; 3];
        for r in 0..3 {
            for c in 0..3 {
                s[r] += self.m[r][c] * eps[c];
            }
        }
        s
    }

    /// eps = C^{-1} : sigma.
    pub fn compliance_apply(&self, sigma: [f64; 3]) -> [f64; 3] {
        let inv = self.inverse();
        let mut e = [0.0; 3];
        for r in 0..3 {
            for c in 0..3 {
                e[r] += inv[r][c] * sigma[c];
            }
        }
        e
    }

    pub fn inverse(&self) -> [[f64; 3]; 3] {
        let m = &self.m;
        let det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
        let mut inv = [[0.0; 3]; 3];
        inv[0][0] = (m[1][1] * m[2][2] - m[1][2] * m[2][1]) / det;
        inv[0][1] = (m[0][2] * m[2][1] - m[0][1] * m[2][2]) / det;
        inv[0][2] = (m[0][1] * m[1][2] - m[0][2] * m[1][1]) / det;
        inv[1][0] = (m[1][2] * m[2][0] - m[1][0] * m[2][2]) / det;
        inv[1][1] = (m[0][0] * m[2][2] - m[0][2] * m[2][0]) / det;
        inv[1][2] = (m[0][2] * m[1][0] - m[0][0] * m[1][2]) / det;
        inv[2][0] = (m[1][0] * m[2][1] - m[1][1] * m[2][0]) / det;
        inv[2][1] = (m[0][1] * m[2][0] - m[0][0] * m[2][1]) / det;
        inv[2][2] = (m[0][0] * m[1][1] - m[0][1] * m[1][0]) / det;
        inv
    }

    /// Positive definiteness via leading principal minors.
    pub fn is_positive_definite(&self) -> bool {
        let m = &self.m;
        let d1 = m[0][0];
        let d2 = m[0][0] * m[1][1] - m[0][1] * m[1][0];
        let d3 = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
        d1 > 0.0 && d2 > 0.0 && d3 > 0.0
    }

    /// Smallest eigenvalue of the symmetric 3x3 matrix (analytic).
    pub fn min_eigenvalue(&self) -> f64 {
        sym3_eigenvalues(&self.m)[0]
    }

    /// Frobenius norm.
    pub fn frobenius(&self) -> f64 {
        self.m
            .iter()
            .flat_map(|r| r.iter())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }

    pub fn sub(&self, other: &Elasticity2D) -> Elasticity2D {
        let mut m = [[0.0; 3]; 3];
        for r in 0..3 {
            for c in 0..3 {
                m[r][c] = self.m[r][c] - other.m[r][c];
            }
        }
        Elasticity2D { m }
    }

    pub fn scale(&self, s: f64) -> Elasticity2D {
        let mut m = self.m;
        for row in m.iter_mut() {
            for v in row.iter_mut() {
                *v *= s;
            }
        }
        Elasticity2D { m }
    }

    pub fn add(&self, other: &Elasticity2D) -> Elasticity2D {
        let mut m = [[0.0; 3]; 3];
        for r in 0..3 {
            for c in 0..3 {
                m[r][c] = self.m[r][c] + other.m[r][c];
            }
        }
        Elasticity2D { m }
    }

    /// (A11, A22, A33, A12) as usually tabulated.
    pub fn coefficients(&self) -> (f64, f64, f64, f64) {
        (self.m[0][0], self.m[1][1], self.m[2][2], self.m[0][1])
    }
}

/// Eigenvalues of a symmetric 3x3 matrix, ascending. Analytic
/// (trigonometric) solution of the characteristic polynomial.
pub fn sym3_eigenvalues(m: &[[f64; 3]; 3]) -> [f64; 3] {
    let p1 = m[0][1] * m[0][1] + m[0][2] * m[0][2] + m[1][2] * m[1][2];
    if p1 == 0.0 {
        let mut d = [m[0][0], m[1][1], m[2][2]];
        d.sort_by(|a, b| a.partial_cmp(b).unwrap());
        return d;
    }
    let q = (m[0][0] + m[1][1] + m[2][2]) / 3.0;
    let p2 = (m[0][0] - q).powi(2) + (m[1][1] - q).powi(2) + (m[2][2] - q).powi(2) + 2.0 * p1;
    let p = (p2 / 6.0).sqrt();
    let mut b = [[0.0; 3]; 3];
    for r in 0..3 {
        for c in 0..3 {
            b[r][c] = (m[r][c] - if r == c { q } else { 0.0 }) / p;
        }
    }
    let detb = b[0][0] * (b[1][1] * b[2][2] - b[1][2] * b[2][1])
        - b[0][1] * (b[1][0] * b[2][2] - b[1][2] * b[2][0])
        + b[0][2] * (b[1][0] * b[2][1] - b[1][1] * b[2][0]);
    let r = (detb / 2.0).clamp(-1.0, 1.0);
    let phi = r.acos() / 3.0;
    let e1 = q + 2.0 * p * phi.cos();
    let e3 = q + 2.0 * p * (phi + 2.0 * std::f64::consts::PI / 3.0).cos();
    let e2 = 3.0 * q - e1 - e3;
    let mut out = [e1, e2, e3];
    out.sort_by(|a, b| a.partial_cmp(b).unwrap());
    out
}

/// Isotropic plane-strain stiffness in Voigt form:
/// A11 = A22 = E(1-nu)/((1+nu)(1-2nu)), A12 = E nu/((1+nu)(1-2nu)),
/// A33 = E/(2(1+nu)).
pub fn plane_strain_tensor(young: f64, poisson: f64) -> Result<Elasticity2D> {
    if young <= 0.0 {
        return Err(Error::InvalidInput("Young's modulus must be positive".into()));
    }
    if poisson < 0.0 || poisson >= 0.5 {
        return Err(Error::InvalidInput(format!("Poisson ratio {poisson} outside [0, 0.5)")));
    }
    if (0.5 - poisson).abs() < 1e-9 {
        return Err(Error::IncompressibleLimit(poisson));
    }
    let f = young / ((1.0 + poisson) * (1.0 - 2.0 * poisson));
    let a11 = f * (1.0 - poisson);
    let a12 = f * poisson;
    let a33 = young / (2.0 * (1.0 + poisson));
    Elasticity2D::new([[a11, a12, 0.0], [a12, a11, 0.0], [0.0, 0.0, a33]])
}
