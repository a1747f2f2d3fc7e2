use crate::error::{Error, Result};
use crate::phase::Elasticity2D;

/// Gauss abscissa of the 2-point rule, +-1/sqrt(3) with unit weights.
pub const GAUSS_1D: f64 = 0.577_350_269_189_625_8;

/// Reference-coordinate signs of the counterclockwise Q1 corners.
pub const XI_SIGN: [f64; 4] = [-1.0, 1.0, 1.0, -1.0];
pub const ETA_SIGN: [f64; 4] = [-1.0, -1.0, 1.0, 1.0];

/// The four 2x2 Gauss points in reference coordinates, corner-aligned
/// order (ll, lr, ur, ul).
pub fn gauss_points() -> [[f64; 2]; 4] {
    let g = GAUSS_1D;
    [[-g, -g], [g, -g], [g, g], [-g, g]]
}

/// Q1 shape functions at (xi, eta).
pub fn q1_shape(xi: f64, eta: f64) -> [f64; 4] {
    let mut n = [0.0; 4];
    for a in 0..4 {
        n[a] = 0.25 * (1.0 + XI_SIGN[a] * xi) * (1.0 + ETA_SIGN[a] * eta);
    }
    n
}

/// Q1 shape function derivatives with respect to (xi, eta).
pub fn q1_dshape(xi: f64, eta: f64) -> [[f64; 2]; 4] {
    let mut d = [[0.0; 2]; 4];
    for a in 0..4 {
        d[a][0] = 0.25 * XI_SIGN[a] * (1.0 + ETA_SIGN[a] * eta);
        d[a][1] = 0.25 * ETA_SIGN[a] * (1.0 + XI_SIGN[a] * xi);
    }
    d
}

/// Strain-displacement matrix (3x8, Voigt rows eps_xx, eps_yy, gamma_xy)
/// and Jacobian determinant at a reference point of a quadrilateral.
pub fn b_matrix(coords: &[[f64; 2]; 4], xi: f64, eta: f64) -> Result<([[f64; 8]; 3], f64)> {
    let d = q1_dshape(xi, eta);
    let mut j = [[0.0; 2]; 2];
    for a in 0..4 {
        j[0][0] += d[a][0] * coords[a][0];
        j[0][1] += d[a][0] * coords[a][1];
        j[1][0] += d[a][1] * coords[a][0];
        j[1][1] += d[a][1] * coords[a][1];
    }
    let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
    if det <= 1e-14 {
        return Err(Error::DegenerateElement(format!("Jacobian determinant {det:.3e}")));
    }
    let inv = [[j[1][1] / det, -j[0][1] / det], [-j[1][0] / det, j[0][0] / det]];
    let mut b = [[0.0; 8]; 3];
    for a in 0..4 {
        let dx = inv[0][0] * d[a][0] + inv[0][1] * d[a][1];
        let dy = inv[1][0] * d[a][0] + inv[1][1] * d[a][1];
        b[0][2 * a] = dx;
        b[1][2 * a + 1] = dy;
        b[2][2 * a] = dy;
        b[2][2 * a + 1] = dx;
    }
    Ok((b, det))
}

/// Q1 plane-strain element stiffness by 2x2 Gauss quadrature (exact for
/// a constant tensor on affine-mapped quadrilaterals).
pub fn element_stiffness(coords: &[[f64; 2]; 4], c: &Elasticity2D) -> Result<[[f64; 8]; 8]> {
    let mut k = [[0.0; 8]; 8];
    for gp in gauss_points() {
        let (b, det) = b_matrix(coords, gp[0], gp[1])?;
        // cb = C * B
        let mut cb = [[0.0; 8]; 3];
        for r in 0..3 {
            for col in 0..8 {
                let mut acc = 0.0;
                for m in 0..3 {
                    acc += c.m[r][m] * b[m][col];
                }
                cb[r][col] = acc;
            }
        }
        for r in 0..8 {
            for col in 0..8 {
                let mut acc = 0.0;
                for m in 0..3 {
                    acc += b[m][r] * cb[m][col];
                }
                k[r][col] += acc * det;
            }
        }
    }
    Ok(k)
}

/// Strain at a reference point from element displacement dofs
/// (u1, v1, ..., u4, v4), Voigt engineering convention.
pub fn strain_at(coords: &[[f64; 2]; 4], dofs: &[f64; 8], xi: f64, eta: f64) -> Result<[f64; 3]> {
    let (b, _) = b_matrix(coords, xi, eta)?;
    let mut e = [0.0; 3];
    for r in 0..3 {
        for c in 0..8 {
            e[r] += b[r][c] * dofs[c];
        }
    }
    Ok(e)
}

/// Displacement gradient (du_i/dx_j) at a reference point.
pub fn gradient_at(
    coords: &[[f64; 2]; 4],
    dofs: &[f64; 8],
    xi: f64,
    eta: f64,
) -> Result<[[f64; 2]; 2]> {
    let d = q1_dshape(xi, eta);
    let mut j = [[0.0; 2]; 2];
    for a in 0..4 {
        j[0][0] += d[a][0] * coords[a][0];
        j[0][1] += d[a][0] * coords[a][1];
        j[1][0] += d[a][1] * coords[a][0];
        j[1][1] += d[a][1] * coords[a][1];
    }
    let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
    if det <= 1e-14 {
        return Err(Error::DegenerateElement(format!("Jacobian determinant {det:.3e}")));
    }
    let inv = [[j[1][1] / det, -j[0][1] / det], [-j[1][0] / det, j[0][0] / det]];
    let mut g = [[0.0; 2]; 2];
    for a in 0..4 {
        let dx = inv[0][0] * d[a][0] + inv[0][1] * d[a][1];
        let dy = inv[1][0] * d[a][0] + inv[1][1] * d[a][1];
        g[0][0] += dofs[2 * a] * dx;
        g[0][1] += dofs[2 * a] * dy;
        g[1][0] += dofs[2 * a + 1] * dx;
        g[1][1] += dofs[2 * a + 1] * dy;
    }
    Ok(g)
}

/// Interpolated displacement at a reference point.
pub fn displacement_at(dofs: &[f64; 8], xi: f64, eta: f64) -> [f64; 2] {
    let n = q1_shape(xi, eta);
    let mut u = [0.0; 2];
    for a in 0..4 {
        u[0] += n[a] * dofs[2 * a];
        u[1] += n[a] * dofs[2 * a + 1];
    }
    u
}
