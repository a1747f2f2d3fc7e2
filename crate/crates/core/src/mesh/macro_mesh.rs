use crate::error::{Error, Result};

/// Uniform rectangular Q1 macro mesh over `[0, length] x [0, height]`.
/// Nodes are ordered lexicographically by (y, x).
#[derive(Debug, Clone)]
pub struct MacroMesh {
    nx: usize,
    ny: usize,
    dx: f64,
    dy: f64,
}

impl MacroMesh {
    pub fn new(length: f64, height: f64, nx: usize, ny: usize) -> Result<Self> {
        if nx == 0 || ny == 0 || length <= 0.0 || height <= 0.0 {
            return Err(Error::InvalidInput("macro mesh needs positive dimensions".into()));
        }
        Ok(Self { nx, ny, dx: length / nx as f64, dy: height / ny as f64 })
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.nx, self.ny)
    }

    pub fn spacing(&self) -> (f64, f64) {
        (self.dx, self.dy)
    }

    pub fn length(&self) -> f64 {
        self.dx * self.nx as f64
    }

    pub fn height(&self) -> f64 {
        self.dy * self.ny as f64
    }

    pub fn n_nodes(&self) -> usize {
        (self.nx + 1) * (self.ny + 1)
    }

    pub fn n_elems(&self) -> usize {
        self.nx * self.ny
    }

    pub fn n_dofs(&self) -> usize {
        2 * self.n_nodes()
    }

    pub fn node_id(&self, i: usize, j: usize) -> usize {
        j * (self.nx + 1) + i
    }

    pub fn node_coords(&self, node: usize) -> [f64; 2] {
        let i = node % (self.nx + 1);
        let j = node / (self.nx + 1);
        [i as f64 * self.dx, j as f64 * self.dy]
    }

    /// Counterclockwise corner nodes of element `e` (row-major elements).
    pub fn elem_nodes(&self, e: usize) -> [usize; 4] {
        let i = e % self.nx;
        let j = e / self.nx;
        [
            self.node_id(i, j),
            self.node_id(i + 1, j),
            self.node_id(i + 1, j + 1),
            self.node_id(i, j + 1),
        ]
    }

    pub fn elem_corner_coords(&self, e: usize) -> [[f64; 2]; 4] {
        self.elem_nodes(e).map(|n| self.node_coords(n))
    }

    /// Physical coordinates of the 2x2 Gauss points of element `e`.
    pub fn elem_gauss_points(&self, e: usize) -> [[f64; 2]; 4] {
        let i = (e % self.nx) as f64;
        let j = (e / self.nx) as f64;
        let g = 1.0 / 3.0_f64.sqrt();
        let mut out = [[0.0; 2]; 4];
        for (k, (xi, eta)) in
            [(-g, -g), (g, -g), (g, g), (-g, g)].into_iter().enumerate()
        {
            out[k] = [
                (i + 0.5 * (1.0 + xi)) * self.dx,
                (j + 0.5 * (1.0 + eta)) * self.dy,
            ];
        }
        out
    }

    /// Quadrature weight times Jacobian determinant per Gauss point.
    pub fn gauss_weight(&self) -> f64 {
        self.dx * self.dy / 4.0
    }

    /// Nodes on the clamped edge x = 0.
    pub fn left_edge_nodes(&self) -> Vec<usize> {
        (0..=self.ny).map(|j| self.node_id(0, j)).collect()
    }

    /// Nodes on the loaded edge x = length.
    pub fn right_edge_nodes(&self) -> Vec<usize> {
        (0..=self.ny).map(|j| self.node_id(self.nx, j)).collect()
    }

    pub fn dof_coords(&self) -> Vec<[f64; 2]> {
        let mut out = Vec::with_capacity(self.n_dofs());
        for n in 0..self.n_nodes() {
            let p = self.node_coords(n);
            out.push(p);
            out.push(p);
        }
        out
    }

    /// Index of the element containing physical point (x, y); points on
    /// element boundaries resolve to the lower-left neighbor.
    pub fn locate(&self, x: f64, y: f64) -> Option<usize> {
        if x < 0.0 || y < 0.0 || x > self.length() + 1e-12 || y > self.height() + 1e-12 {
            return None;
        }
        let i = ((x / self.dx).floor() as usize).min(self.nx - 1);
        let j = ((y / self.dy).floor() as usize).min(self.ny - 1);
        Some(j * self.nx + i)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cantilever_mesh_counts() {
        let m = MacroMesh::new(5000.0, 1000.0, 20, 4).unwrap();
        assert_eq!(m.n_nodes(), 21 * 5);
        assert_eq!(m.n_elems(), 80);
        assert_eq!(m.spacing(), (250.0, 250.0));
    }

    #[test]
    fn gauss_points_inside_element() {
        let m = MacroMesh::new(10.0, 4.0, 5, 2).unwrap();
        let gps = m.elem_gauss_points(7);
        let e = 7usize;
        let (i, j) = (e % 5, e / 5);
        for gp in gps {
            assert!(gp[0] > i as f64 * 2.0 && gp[0] < (i + 1) as f64 * 2.0);
            assert!(gp[1] > j as f64 * 2.0 && gp[1] < (j + 1) as f64 * 2.0);
        }
        // Weights sum to the element area.
        assert!((m.gauss_weight() * 4.0 - 2.0 * 2.0).abs() < 1e-12);
    }

    #[test]
    fn locate_snaps_to_elements() {
        let m = MacroMesh::new(10.0, 4.0, 5, 2).unwrap();
        assert_eq!(m.locate(0.1, 0.1), Some(0));
        assert_eq!(m.locate(9.9, 3.9), Some(9));
        assert_eq!(m.locate(11.0, 0.0), None);
    }
}
