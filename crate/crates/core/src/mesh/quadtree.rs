use crate::error::{Error, Result};
use crate::mesh::NodeId;
use crate::phase::{CellMaterial, PhaseGrid};

/// Axis-aligned square leaf before node numbering: lower-left pixel
/// coordinates on the fine lattice, side length `2^level` fine pixels.
#[derive(Debug, Clone)]
pub struct LeafBox {
    pub i0: u32,
    pub j0: u32,
    pub level: u8,
    pub material: CellMaterial,
}

impl LeafBox {
    pub fn side(&self) -> u32 {
        1u32 << self.level
    }
}

/// Quadrilateral leaf element with counterclockwise corner nodes
/// `[lower-left, lower-right, upper-right, upper-left]`.
#[derive(Debug, Clone)]
pub struct Leaf {
    pub i0: u32,
    pub j0: u32,
    pub level: u8,
    pub corners: [NodeId; 4],
    pub material: CellMaterial,
}

impl Leaf {
    pub fn side(&self) -> u32 {
        1u32 << self.level
    }
}

/// A node lying strictly inside the edge of a coarser leaf. Its
/// displacement interpolates the edge endpoints:
/// `u = (1-t) u_a + t u_b`.
#[derive(Debug, Clone, Copy)]
pub struct HangingNode {
    pub node: NodeId,
    pub masters: (NodeId, NodeId),
    pub t: f64,
}

/// Master side of a periodic pair: a matching node on the opposite
/// boundary, or an interpolation point on a master-side edge when the
/// opposite discretizations do not match.
#[derive(Debug, Clone, Copy)]
pub enum PairMaster {
    Node(NodeId),
    Edge(NodeId, NodeId, f64),
}

/// Periodic coupling of a slave boundary node to the opposite boundary.
/// `offset` is the coordinate shift from master to slave.
#[derive(Debug, Clone, Copy)]
pub struct PeriodicPair {
    pub slave: NodeId,
    pub master: PairMaster,
    pub offset: [f64; 2],
}

/// Boundary classification of a node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryClass {
    Interior,
    Left,
    Right,
    Bottom,
    Top,
    Corner,
}

/// Leaf-cell mesh over a rectangular pixel domain. Nodes are lattice
/// points of the finest pixel grid, ordered lexicographically by (y, x).
#[derive(Debug, Clone)]
pub struct QuadtreeMesh {
    fine_w: usize,
    fine_h: usize,
    cell_size: f64,
    nodes: Vec<[f64; 2]>,
    lattice: Vec<(u32, u32)>,
    leaves: Vec<Leaf>,
    hanging: Vec<HangingNode>,
    hanging_mark: Vec<bool>,
    periodic: Vec<PeriodicPair>,
    anchor: NodeId,
}

impl QuadtreeMesh {
    /// Assemble a mesh from leaf boxes that tile the `fine_w x fine_h`
    /// pixel domain. Detects hanging nodes and periodic boundary pairs.
    pub fn from_leaf_boxes(
        fine_w: usize,
        fine_h: usize,
        cell_size: f64,
        boxes: &[LeafBox],
    ) -> Result<Self> {
        let lw = fine_w + 1;
        let lh = fine_h + 1;
        let key = |i: u32, j: u32| -> usize { j as usize * lw + i as usize };

        // Exact tiling check via pixel areas.
        let area: u64 = boxes.iter().map(|b| (b.side() as u64).pow(2)).sum();
        if area != (fine_w as u64) * (fine_h as u64) {
            return Err(Error::InvalidInput(format!(
                "leaves cover {area} pixels, domain has {}",
                fine_w * fine_h
            )));
        }

        // Collect corner lattice points; ids follow (j, i) sort order.
        let mut present = vec![false; lw * lh];
        for b in boxes {
            let s = b.side();
            if b.i0 % s != 0 || b.j0 % s != 0 {
                return Err(Error::InvalidInput(format!(
                    "leaf at ({}, {}) level {} not aligned to the block structure",
                    b.i0, b.j0, b.level
                )));
            }
            if b.i0 + s > fine_w as u32 || b.j0 + s > fine_h as u32 {
                return Err(Error::InvalidInput("leaf outside the domain".into()));
            }
            for (di, dj) in [(0, 0), (s, 0), (s, s), (0, s)] {
                present[key(b.i0 + di, b.j0 + dj)] = true;
            }
        }
        let mut id_of = vec![usize::MAX; lw * lh];
        let mut nodes = Vec::new();
        let mut lattice = Vec::new();
        for j in 0..lh as u32 {
            for i in 0..lw as u32 {
                if present[key(i, j)] {
                    id_of[key(i, j)] = nodes.len();
                    nodes.push([i as f64 * cell_size, j as f64 * cell_size]);
                    lattice.push((i, j));
                }
            }
        }

        // Sort leaves by (j0, i0, level) for reproducible element order.
        let mut order: Vec<usize> = (0..boxes.len()).collect();
        order.sort_by_key(|&k| (boxes[k].j0, boxes[k].i0, boxes[k].level));
        let mut leaves = Vec::with_capacity(boxes.len());
        for k in order {
            let b = &boxes[k];
            let s = b.side();
            let corners = [
                id_of[key(b.i0, b.j0)],
                id_of[key(b.i0 + s, b.j0)],
                id_of[key(b.i0 + s, b.j0 + s)],
                id_of[key(b.i0, b.j0 + s)],
            ];
            leaves.push(Leaf {
                i0: b.i0,
                j0: b.j0,
                level: b.level,
                corners,
                material: b.material.clone(),
            });
        }

        // Hanging nodes: existing lattice points strictly inside leaf edges.
        let mut hanging = Vec::new();
        let mut hanging_mark = vec![false; nodes.len()];
        for leaf in &leaves {
            let s = leaf.side();
            if s == 1 {
                continue;
            }
            // (start, step, end-corner) per edge, endpoints are leaf corners.
            let edges = [
                ((leaf.i0, leaf.j0), (1u32, 0u32), leaf.corners[0], leaf.corners[1]),
                ((leaf.i0 + s, leaf.j0), (0, 1), leaf.corners[1], leaf.corners[2]),
                ((leaf.i0, leaf.j0 + s), (1, 0), leaf.corners[3], leaf.corners[2]),
                ((leaf.i0, leaf.j0), (0, 1), leaf.corners[0], leaf.corners[3]),
            ];
            for ((si, sj), (di, dj), a, b) in edges {
                for k in 1..s {
                    let (pi, pj) = (si + di * k, sj + dj * k);
                    let id = id_of[key(pi, pj)];
                    if id == usize::MAX {
                        continue;
                    }
                    if hanging_mark[id] {
                        return Err(Error::InvalidInput(format!(
                            "node {id} hangs on more than one edge"
                        )));
                    }
                    hanging_mark[id] = true;
                    hanging.push(HangingNode { node: id, masters: (a, b), t: k as f64 / s as f64 });
                }
            }
        }
        hanging.sort_by_key(|h| h.node);

        let anchor = id_of[key(0, 0)];
        if anchor == usize::MAX {
            return Err(Error::InvalidInput("missing lower-left corner node".into()));
        }

        let mut mesh = Self {
            fine_w,
            fine_h,
            cell_size,
            nodes,
            lattice,
            leaves,
            hanging,
            hanging_mark,
            periodic: Vec::new(),
            anchor,
        };
        mesh.periodic = mesh.build_periodic_pairs(&id_of, lw)?;
        Ok(mesh)
    }

    /// Periodic pairs: conforming right-boundary nodes pair with the left
    /// boundary, top with bottom; the three non-anchor corners collapse to
    /// the lower-left master. Non-matching layouts fall back to
    /// interpolation on the master side.
    fn build_periodic_pairs(&self, id_of: &[usize], lw: usize) -> Result<Vec<PeriodicPair>> {
        let (w, h) = (self.fine_w as u32, self.fine_h as u32);
        let (ex, ey) = self.extent();
        let key = |i: u32, j: u32| -> usize { j as usize * lw + i as usize };
        let conforming = |id: usize| id != usize::MAX && !self.hanging_mark[id];

        // Conforming interior master nodes per side, sorted by coordinate.
        let left: Vec<(u32, NodeId)> = (0..=h)
            .filter_map(|j| {
                let id = id_of[key(0, j)];
                conforming(id).then_some((j, id))
            })
            .collect();
        let bottom: Vec<(u32, NodeId)> = (0..=w)
            .filter_map(|i| {
                let id = id_of[key(i, 0)];
                conforming(id).then_some((i, id))
            })
            .collect();

        let master_on = |line: &[(u32, NodeId)], pos: u32, span: f64| -> Result<PairMaster> {
            match line.binary_search_by_key(&pos, |(p, _)| *p) {
                Ok(k) => Ok(PairMaster::Node(line[k].1)),
                Err(k) => {
                    if k == 0 || k == line.len() {
                        return Err(Error::PeriodicMismatch(format!(
                            "no master bracket at lattice position {pos}"
                        )));
                    }
                    let (pa, a) = line[k - 1];
                    let (pb, b) = line[k];
                    let t = (pos - pa) as f64 / (pb - pa) as f64;
                    let _ = span;
                    Ok(PairMaster::Edge(a, b, t))
                }
            }
        };

        let mut pairs = Vec::new();
        // Right boundary (excluding corners).
        for j in 1..h {
            let id = id_of[key(w, j)];
            if !conforming(id) {
                continue;
            }
            pairs.push(PeriodicPair {
                slave: id,
                master: master_on(&left, j, ey)?,
                offset: [ex, 0.0],
            });
        }
        // Top boundary (excluding corners).
        for i in 1..w {
            let id = id_of[key(i, h)];
            if !conforming(id) {
                continue;
            }
            pairs.push(PeriodicPair {
                slave: id,
                master: master_on(&bottom, i, ex)?,
                offset: [0.0, ey],
            });
        }
        // Corners: lower-right, upper-left, upper-right against the anchor.
        for (i, j, offset) in [(w, 0, [ex, 0.0]), (0, h, [0.0, ey]), (w, h, [ex, ey])] {
            let id = id_of[key(i, j)];
            if id == usize::MAX {
                return Err(Error::PeriodicMismatch(format!("missing corner node at ({i},{j})")));
            }
            pairs.push(PeriodicPair { slave: id, master: PairMaster::Node(self.anchor), offset });
        }
        Ok(pairs)
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[[f64; 2]] {
        &self.nodes
    }

    pub fn node_lattice(&self) -> &[(u32, u32)] {
        &self.lattice
    }

    pub fn leaves(&self) -> &[Leaf] {
        &self.leaves
    }

    pub fn hanging(&self) -> &[HangingNode] {
        &self.hanging
    }

    pub fn is_hanging(&self, node: NodeId) -> bool {
        self.hanging_mark[node]
    }

    pub fn periodic_pairs(&self) -> &[PeriodicPair] {
        &self.periodic
    }

    /// Lower-left corner node used to pin translations.
    pub fn anchor_node(&self) -> NodeId {
        self.anchor
    }

    /// Pixel edge length of the finest lattice in mm.
    pub fn cell_size(&self) -> f64 {
        self.cell_size
    }

    /// Fine pixel dimensions of the underlying lattice.
    pub fn fine_dims(&self) -> (usize, usize) {
        (self.fine_w, self.fine_h)
    }

    /// Physical extents (eps_x, eps_y) in mm.
    pub fn extent(&self) -> (f64, f64) {
        (self.fine_w as f64 * self.cell_size, self.fine_h as f64 * self.cell_size)
    }

    pub fn domain_area(&self) -> f64 {
        let (ex, ey) = self.extent();
        ex * ey
    }

    /// Side length of a leaf in mm.
    pub fn leaf_side_mm(&self, leaf: &Leaf) -> f64 {
        leaf.side() as f64 * self.cell_size
    }

    /// Counterclockwise physical corner coordinates of a leaf.
    pub fn leaf_corner_coords(&self, leaf: &Leaf) -> [[f64; 2]; 4] {
        [
            self.nodes[leaf.corners[0]],
            self.nodes[leaf.corners[1]],
            self.nodes[leaf.corners[2]],
            self.nodes[leaf.corners[3]],
        ]
    }

    /// Effective degrees of freedom after eliminating hanging and periodic
    /// constraints (translation pinning not subtracted): for a uniform
    /// w x h grid this equals `2 w h`.
    pub fn ndof(&self) -> usize {
        2 * (self.nodes.len() - self.hanging.len() - self.periodic.len())
    }

    pub fn boundary_class(&self, node: NodeId) -> BoundaryClass {
        let (i, j) = self.lattice[node];
        let (w, h) = (self.fine_w as u32, self.fine_h as u32);
        let lx = i == 0;
        let rx = i == w;
        let by = j == 0;
        let ty = j == h;
        match (lx || rx, by || ty) {
            (true, true) => BoundaryClass::Corner,
            (true, false) => {
                if lx {
                    BoundaryClass::Left
                } else {
                    BoundaryClass::Right
                }
            }
            (false, true) => {
                if by {
                    BoundaryClass::Bottom
                } else {
                    BoundaryClass::Top
                }
            }
            (false, false) => BoundaryClass::Interior,
        }
    }

    /// Coordinates per displacement dof (two per node).
    pub fn dof_coords(&self) -> Vec<[f64; 2]> {
        let mut out = Vec::with_capacity(2 * self.nodes.len());
        for p in &self.nodes {
            out.push(*p);
            out.push(*p);
        }
        out
    }

    /// Map from fine pixel to containing leaf index.
    pub fn leaf_owner_map(&self) -> Vec<u32> {
        let mut owner = vec![u32::MAX; self.fine_w * self.fine_h];
        for (k, leaf) in self.leaves.iter().enumerate() {
            let s = leaf.side();
            for dj in 0..s {
                for di in 0..s {
                    let i = (leaf.i0 + di) as usize;
                    let j = (leaf.j0 + dj) as usize;
                    owner[j * self.fine_w + i] = k as u32;
                }
            }
        }
        owner
    }

    /// Extract leaf boxes (used by quadtree coarsening).
    pub fn leaf_boxes(&self) -> Vec<LeafBox> {
        self.leaves
            .iter()
            .map(|l| LeafBox { i0: l.i0, j0: l.j0, level: l.level, material: l.material.clone() })
            .collect()
    }
}

/// One Q1 quadrilateral per pixel; node count `(w+1)(h+1)`, no hanging
/// nodes.
pub fn build_uniform_mesh(grid: &PhaseGrid) -> Result<QuadtreeMesh> {
    let (w, h) = (grid.width(), grid.height());
    let mut boxes = Vec::with_capacity(w * h);
    for j in 0..h {
        for i in 0..w {
            boxes.push(LeafBox {
                i0: i as u32,
                j0: j as u32,
                level: 0,
                material: grid.cell(i, j).clone(),
            });
        }
    }
    QuadtreeMesh::from_leaf_boxes(w, h, grid.cell_size(), &boxes)
}

/// Uniform mesh followed by `adaptive_steps` rounds of quadtree
/// coarsening that keeps phase boundaries at the fine resolution.
pub fn build_quadtree_mesh(grid: &PhaseGrid, adaptive_steps: usize) -> Result<QuadtreeMesh> {
    let mesh = build_uniform_mesh(grid)?;
    if adaptive_steps == 0 {
        return Ok(mesh);
    }
    let (coarse, _) = crate::coarsen::quadtree_coarsen(&mesh, adaptive_steps)?;
    Ok(coarse)
}
