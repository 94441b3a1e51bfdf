//! Block-sparse matrices over the element graph.
//!
//! Rows and columns are grouped into `n_loc`-sized blocks, one per element.
//! The mass matrix and the nonlinear Jacobian carry only diagonal blocks;
//! the SIPG stiffness additionally couples face neighbors.

use std::io::Write;

use nalgebra::{DMatrix, DVector};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Sparse matrix stored as dense `n_loc x n_loc` blocks in block-CSR layout.
#[derive(Debug, Clone)]
pub struct BlockSparseMatrix {
    n_loc: usize,
    n_block_rows: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    blocks: Vec<DMatrix<f64>>,
}

impl BlockSparseMatrix {
    /// Assemble from (block_row, block_col, block) triples; duplicates are
    /// summed.
    pub fn from_blocks(
        n_block_rows: usize,
        n_loc: usize,
        mut entries: Vec<(usize, usize, DMatrix<f64>)>,
    ) -> Self {
        entries.sort_by_key(|&(r, c, _)| (r, c));
        let mut row_ptr = vec![0usize; n_block_rows + 1];
        let mut col_idx = Vec::with_capacity(entries.len());
        let mut blocks: Vec<DMatrix<f64>> = Vec::with_capacity(entries.len());
        let mut last_key = None;
        for (r, c, block) in entries {
            debug_assert!(r < n_block_rows && c < n_block_rows);
            debug_assert_eq!(block.nrows(), n_loc);
            debug_assert_eq!(block.ncols(), n_loc);
            if last_key == Some((r, c)) {
                *blocks.last_mut().unwrap() += block;
                continue;
            }
            last_key = Some((r, c));
            col_idx.push(c);
            blocks.push(block);
            row_ptr[r + 1] += 1;
        }
        // prefix-sum: row_ptr[r+1] currently holds the count for row r
        for r in 0..n_block_rows {
            row_ptr[r + 1] += row_ptr[r];
        }
        Self {
            n_loc,
            n_block_rows,
            row_ptr,
            col_idx,
            blocks,
        }
    }

    pub fn n_loc(&self) -> usize {
        self.n_loc
    }

    pub fn n_block_rows(&self) -> usize {
        self.n_block_rows
    }

    /// Scalar dimension N = n_loc * n_block_rows.
    pub fn dim(&self) -> usize {
        self.n_loc * self.n_block_rows
    }

    pub fn n_blocks(&self) -> usize {
        self.blocks.len()
    }

    pub fn block(&self, row: usize, col: usize) -> Option<&DMatrix<f64>> {
        let lo = self.row_ptr[row];
        let hi = self.row_ptr[row + 1];
        self.col_idx[lo..hi]
            .iter()
            .position(|&c| c == col)
            .map(|k| &self.blocks[lo + k])
    }

    /// Blocks of one block-row as (block_col, block) pairs.
    pub fn block_row(&self, row: usize) -> impl Iterator<Item = (usize, &DMatrix<f64>)> {
        let lo = self.row_ptr[row];
        let hi = self.row_ptr[row + 1];
        self.col_idx[lo..hi]
            .iter()
            .copied()
            .zip(self.blocks[lo..hi].iter())
    }

    /// True if the only stored blocks sit on the block diagonal.
    pub fn is_block_diagonal(&self) -> bool {
        (0..self.n_block_rows).all(|r| {
            let lo = self.row_ptr[r];
            let hi = self.row_ptr[r + 1];
            self.col_idx[lo..hi].iter().all(|&c| c == r)
        })
    }

    /// Iterate over scalar entries (row, col, value).
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n_block_rows).flat_map(move |r| {
            self.block_row(r).flat_map(move |(c, block)| {
                (0..self.n_loc).flat_map(move |i| {
                    (0..self.n_loc).map(move |j| {
                        (
                            r * self.n_loc + i,
                            c * self.n_loc + j,
                            block[(i, j)],
                        )
                    })
                })
            })
        })
    }

    /// y = A x.
    pub fn mul_vec(&self, x: &DVector<f64>) -> DVector<f64> {
        assert_eq!(x.len(), self.dim(), "matvec dimension mismatch");
        let mut y = DVector::zeros(self.dim());
        self.mul_vec_into(x, &mut y);
        y
    }

    /// y = A x without allocating.
    pub fn mul_vec_into(&self, x: &DVector<f64>, y: &mut DVector<f64>) {
        let n_loc = self.n_loc;
        let xs = x.as_slice();
        let compute_row = |r: usize, out: &mut [f64]| {
            out.fill(0.0);
            let lo = self.row_ptr[r];
            let hi = self.row_ptr[r + 1];
            for k in lo..hi {
                let c = self.col_idx[k];
                let block = &self.blocks[k];
                let xc = &xs[c * n_loc..(c + 1) * n_loc];
                for i in 0..n_loc {
                    let mut acc = 0.0;
                    for j in 0..n_loc {
                        acc += block[(i, j)] * xc[j];
                    }
                    out[i] += acc;
                }
            }
        };
        #[cfg(feature = "parallel")]
        {
            y.as_mut_slice()
                .par_chunks_mut(n_loc)
                .enumerate()
                .for_each(|(r, out)| compute_row(r, out));
        }
        #[cfg(not(feature = "parallel"))]
        {
            for (r, out) in y.as_mut_slice().chunks_mut(n_loc).enumerate() {
                compute_row(r, out);
            }
        }
    }

    /// A X for a dense multi-column X (column by column).
    pub fn mul_mat(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        assert_eq!(x.nrows(), self.dim());
        let mut result = DMatrix::zeros(self.dim(), x.ncols());
        let cols: Vec<DVector<f64>> = x.column_iter().map(|c| c.into_owned()).collect();
        #[cfg(feature = "parallel")]
        let products: Vec<DVector<f64>> = cols.par_iter().map(|c| self.mul_vec(c)).collect();
        #[cfg(not(feature = "parallel"))]
        let products: Vec<DVector<f64>> = cols.iter().map(|c| self.mul_vec(c)).collect();
        for (j, p) in products.into_iter().enumerate() {
            result.set_column(j, &p);
        }
        result
    }

    /// Largest |A_ij - A_ji| over the stored pattern.
    pub fn max_asymmetry(&self) -> f64 {
        let mut worst = 0.0f64;
        for r in 0..self.n_block_rows {
            for (c, block) in self.block_row(r) {
                match self.block(c, r) {
                    Some(other) => {
                        for i in 0..self.n_loc {
                            for j in 0..self.n_loc {
                                worst = worst.max((block[(i, j)] - other[(j, i)]).abs());
                            }
                        }
                    }
                    None => {
                        worst = worst.max(
                            block.iter().fold(0.0f64, |acc, &v| acc.max(v.abs())),
                        );
                    }
                }
            }
        }
        worst
    }

    /// Dense copy, for small meshes and tests.
    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut dense = DMatrix::zeros(self.dim(), self.dim());
        for (i, j, v) in self.entries() {
            dense[(i, j)] += v;
        }
        dense
    }

    /// Dump in coordinate text format: one `row col value` line per entry.
    pub fn write_coo<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for (i, j, v) in self.entries() {
            if v != 0.0 {
                writeln!(out, "{i} {j} {v:.17e}")?;
            }
        }
        Ok(())
    }
}
