/// Compressed sparse row matrix with sorted, deduplicated columns.
#[derive(Debug, Clone)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl CsrMatrix {
    /// Build from (row, col, value) triplets, summing duplicates. The
    /// triplets are stable-sorted, so the accumulation order (and hence
    /// the result, bit for bit) is independent of generation order only
    /// up to the caller's ordering; callers that require run-to-run
    /// identical results must pass triplets in a fixed order.
    pub fn from_triplets(nrows: usize, ncols: usize, mut triplets: Vec<(u32, u32, f64)>) -> Self {
        triplets.sort_by_key(|t| (t.0, t.1));
        let mut row_ptr = vec![0usize; nrows + 1];
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        let mut it = triplets.into_iter().peekable();
        for r in 0..nrows as u32 {
            while let Some(&(tr, tc, _)) = it.peek() {
                if tr != r {
                    break;
                }
                let mut acc = 0.0;
                while let Some(&(ur, uc, uv)) = it.peek() {
                    if ur == r && uc == tc {
                        acc += uv;
                        it.next();
                    } else {
                        break;
                    }
                }
                cols.push(tc as usize);
                vals.push(acc);
            }
            row_ptr[r as usize + 1] = cols.len();
        }
        Self { nrows, ncols, row_ptr, cols, vals }
    }

    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Self { nrows, ncols, row_ptr: vec![0; nrows + 1], cols: Vec::new(), vals: Vec::new() }
    }

    /// Identity-like selector: column `j` of the result has a single 1 at
    /// `rows[j]`.
    pub fn selector(nrows: usize, rows: &[usize]) -> Self {
        let triplets =
            rows.iter().enumerate().map(|(j, &r)| (r as u32, j as u32, 1.0)).collect();
        Self::from_triplets(nrows, rows.len(), triplets)
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn row(&self, r: usize) -> (&[usize], &[f64]) {
        let (a, b) = (self.row_ptr[r], self.row_ptr[r + 1]);
        (&self.cols[a..b], &self.vals[a..b])
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let (cols, vals) = self.row(r);
        match cols.binary_search(&c) {
            Ok(k) => vals[k],
            Err(_) => 0.0,
        }
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.ncols);
        let mut y = vec![0.0; self.nrows];
        self.matvec_into(x, &mut y);
        y
    }

    pub fn matvec_into(&self, x: &[f64], y: &mut [f64]) {
        for r in 0..self.nrows {
            let (cols, vals) = self.row(r);
            let mut acc = 0.0;
            for (c, v) in cols.iter().zip(vals) {
                acc += v * x[*c];
            }
            y[r] = acc;
        }
    }

    pub fn transpose(&self) -> CsrMatrix {
        let mut triplets = Vec::with_capacity(self.nnz());
        for r in 0..self.nrows {
            let (cols, vals) = self.row(r);
            for (c, v) in cols.iter().zip(vals) {
                triplets.push((*c as u32, r as u32, *v));
            }
        }
        CsrMatrix::from_triplets(self.ncols, self.nrows, triplets)
    }

    /// Sparse matrix product `self * other`.
    pub fn matmul(&self, other: &CsrMatrix) -> CsrMatrix {
        assert_eq!(self.ncols, other.nrows);
        let n = other.ncols;
        let mut row_ptr = vec![0usize; self.nrows + 1];
        let mut cols: Vec<usize> = Vec::new();
        let mut vals: Vec<f64> = Vec::new();
        let mut acc = vec![0.0f64; n];
        let mut marker = vec![usize::MAX; n];
        let mut touched: Vec<usize> = Vec::new();
        for r in 0..self.nrows {
            touched.clear();
            let (rc, rv) = self.row(r);
            for (k, v) in rc.iter().zip(rv) {
                let (oc, ov) = other.row(*k);
                for (c, w) in oc.iter().zip(ov) {
                    if marker[*c] != r {
                        marker[*c] = r;
                        acc[*c] = 0.0;
                        touched.push(*c);
                    }
                    acc[*c] += v * w;
                }
            }
            touched.sort_unstable();
            for &c in &touched {
                cols.push(c);
                vals.push(acc[c]);
            }
            row_ptr[r + 1] = cols.len();
        }
        CsrMatrix { nrows: self.nrows, ncols: n, row_ptr, cols, vals }
    }

    /// Max absolute row sum.
    pub fn norm_inf(&self) -> f64 {
        (0..self.nrows)
            .map(|r| self.row(r).1.iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn iter_entries(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.nrows).flat_map(move |r| {
            let (cols, vals) = self.row(r);
            cols.iter().zip(vals).map(move |(c, v)| (r, *c, *v))
        })
    }

    pub fn max_symmetry_defect(&self) -> f64 {
        let mut worst = 0.0f64;
        for (r, c, v) in self.iter_entries() {
            worst = worst.max((v - self.get(c, r)).abs());
        }
        worst
    }
}

/// Symmetric sparse stiffness matrix (full pattern stored).
#[derive(Debug, Clone)]
pub struct SparseSymmetric {
    mat: CsrMatrix,
}

impl SparseSymmetric {
    /// Wrap a CSR matrix, checking symmetry up to roundoff.
    pub fn new(mat: CsrMatrix) -> crate::error::Result<Self> {
        if mat.nrows() != mat.ncols() {
            return Err(crate::error::Error::InvalidInput("stiffness must be square".into()));
        }
        let defect = mat.max_symmetry_defect();
        let scale = mat.norm_inf().max(1.0);
        if defect > 1e-10 * scale {
            return Err(crate::error::Error::InvalidInput(format!(
                "stiffness not symmetric: defect {defect:.3e}"
            )));
        }
        Ok(Self { mat })
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn matrix(&self) -> &CsrMatrix {
        &self.mat
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        self.mat.matvec(x)
    }

    pub fn norm_inf(&self) -> f64 {
        self.mat.norm_inf()
    }

    /// d_a^T K d_b.
    pub fn bilinear(&self, a: &[f64], b: &[f64]) -> f64 {
        let kb = self.mat.matvec(b);
        a.iter().zip(&kb).map(|(x, y)| x * y).sum()
    }
}
