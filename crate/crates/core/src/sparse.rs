//! Minimal CSR matrix for the collocation and smoothness systems.
//!
//! The least-squares stack [sqrt(mu) K; B; H] only needs row iteration,
//! matrix-vector products, and transpose products; a hand-rolled CSR keeps
//! those operations transparent and the row order deterministic. The normal
//! equations built from it are handed to a sparse Cholesky backend inside the
//! solver.

/// Compressed sparse row matrix. Column indices within a row are strictly
/// increasing.
#[derive(Clone, Debug)]
pub struct Csr {
    nrows: usize,
    ncols: usize,
    indptr: Vec<usize>,
    indices: Vec<u32>,
    data: Vec<f64>,
}

impl Csr {
    pub fn builder(ncols: usize) -> CsrBuilder {
        CsrBuilder {
            ncols,
            indptr: vec![0],
            indices: Vec::new(),
            data: Vec::new(),
        }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.data.len()
    }

    /// Column indices and values of row `i`.
    pub fn row(&self, i: usize) -> (&[u32], &[f64]) {
        let span = self.indptr[i]..self.indptr[i + 1];
        (&self.indices[span.clone()], &self.data[span])
    }

    /// y = A x.
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.ncols);
        let mut y = vec![0.0; self.nrows];
        for i in 0..self.nrows {
            let (cols, vals) = self.row(i);
            let mut s = 0.0;
            for (c, v) in cols.iter().zip(vals) {
                s += v * x[*c as usize];
            }
            y[i] = s;
        }
        y
    }

    /// y += scale * A^T x.
    pub fn matvec_t_acc(&self, x: &[f64], scale: f64, y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.nrows);
        debug_assert_eq!(y.len(), self.ncols);
        for i in 0..self.nrows {
            let (cols, vals) = self.row(i);
            let xi = scale * x[i];
            if xi == 0.0 {
                continue;
            }
            for (c, v) in cols.iter().zip(vals) {
                y[*c as usize] += v * xi;
            }
        }
    }

    /// Dot product of row `i` with `x`.
    pub fn row_dot(&self, i: usize, x: &[f64]) -> f64 {
        let (cols, vals) = self.row(i);
        cols.iter().zip(vals).map(|(c, v)| v * x[*c as usize]).sum()
    }
}

/// Incremental row-by-row builder.
pub struct CsrBuilder {
    ncols: usize,
    indptr: Vec<usize>,
    indices: Vec<u32>,
    data: Vec<f64>,
}

impl CsrBuilder {
    /// Appends a row. Entries must be sorted by column and unique.
    pub fn push_row(&mut self, entries: &[(u32, f64)]) {
        debug_assert!(entries.windows(2).all(|w| w[0].0 < w[1].0));
        debug_assert!(entries.iter().all(|e| (e.0 as usize) < self.ncols));
        for &(c, v) in entries {
            self.indices.push(c);
            self.data.push(v);
        }
        self.indptr.push(self.indices.len());
    }

    pub fn finish(self) -> Csr {
        Csr {
            nrows: self.indptr.len() - 1,
            ncols: self.ncols,
            indptr: self.indptr,
            indices: self.indices,
            data: self.data,
        }
    }
}
