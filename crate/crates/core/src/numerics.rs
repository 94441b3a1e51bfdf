//! Dense and sparse linear-algebra kernels: block Cholesky, thin SVD,
//! spectral norm, sparse and dense direct solves.
//!
//! Dense work is delegated to nalgebra. The sparse direct solve wraps a
//! supernodal LU (faer) and can reuse its symbolic factorization across
//! solves with an unchanged sparsity pattern, which is what the implicit
//! time stepper needs.

use faer::linalg::solvers::Solve;
use faer::prelude::Reborrow;
use faer::sparse::linalg::solvers::{Lu, SymbolicLu};
use faer::sparse::{SparseColMat, Triplet};
use nalgebra::{Cholesky, DMatrix, DVector};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

use crate::block::BlockSparseMatrix;
use crate::error::{Error, Result};

/// Upper-triangular Cholesky factor R (M = Rᵀ R) of a block-diagonal SPD
/// matrix. The factor only ever touches diagonal blocks, so construction and
/// application are O(N).
#[derive(Debug, Clone)]
pub struct BlockCholesky {
    n_loc: usize,
    /// Per-element upper-triangular factors.
    factors: Vec<DMatrix<f64>>,
}

/// Factor a block-diagonal SPD matrix as M = Rᵀ R.
pub fn cholesky(m: &BlockSparseMatrix) -> Result<BlockCholesky> {
    if !m.is_block_diagonal() {
        return Err(Error::InvalidInput(
            "cholesky expects a block-diagonal matrix".into(),
        ));
    }
    let n_loc = m.n_loc();
    let mut factors = Vec::with_capacity(m.n_block_rows());
    for e in 0..m.n_block_rows() {
        let block = m
            .block(e, e)
            .ok_or_else(|| Error::NotPositiveDefinite(format!("missing diagonal block {e}")))?;
        let chol = Cholesky::new(block.clone()).ok_or_else(|| {
            Error::NotPositiveDefinite(format!("diagonal block {e} is not SPD"))
        })?;
        factors.push(chol.l().transpose());
    }
    Ok(BlockCholesky { n_loc, factors })
}

impl BlockCholesky {
    pub fn dim(&self) -> usize {
        self.n_loc * self.factors.len()
    }

    pub fn n_blocks(&self) -> usize {
        self.factors.len()
    }

    /// y = R x.
    pub fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        assert_eq!(x.len(), self.dim());
        let mut y = DVector::zeros(self.dim());
        for (e, r) in self.factors.iter().enumerate() {
            let xe = x.rows(e * self.n_loc, self.n_loc);
            y.rows_mut(e * self.n_loc, self.n_loc).copy_from(&(r * xe));
        }
        y
    }

    /// Y = R X, applied block-row-wise.
    pub fn apply_mat(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        assert_eq!(x.nrows(), self.dim());
        let mut y = DMatrix::zeros(x.nrows(), x.ncols());
        for (e, r) in self.factors.iter().enumerate() {
            let xe = x.rows(e * self.n_loc, self.n_loc);
            y.rows_mut(e * self.n_loc, self.n_loc).copy_from(&(r * xe));
        }
        y
    }

    /// Solve R x = b.
    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        assert_eq!(b.len(), self.dim());
        let mut x = DVector::zeros(self.dim());
        for (e, r) in self.factors.iter().enumerate() {
            let be = b.rows(e * self.n_loc, self.n_loc).into_owned();
            let xe = r
                .solve_upper_triangular(&be)
                .expect("triangular factor is nonsingular");
            x.rows_mut(e * self.n_loc, self.n_loc).copy_from(&xe);
        }
        x
    }

    /// Solve R X = B column-block-wise.
    pub fn solve_mat(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        assert_eq!(b.nrows(), self.dim());
        let mut x = DMatrix::zeros(b.nrows(), b.ncols());
        for (e, r) in self.factors.iter().enumerate() {
            let be = b.rows(e * self.n_loc, self.n_loc).into_owned();
            let xe = r
                .solve_upper_triangular(&be)
                .expect("triangular factor is nonsingular");
            x.rows_mut(e * self.n_loc, self.n_loc).copy_from(&xe);
        }
        x
    }

    /// Rᵀ R as a block matrix, for verification.
    pub fn reconstruct(&self) -> BlockSparseMatrix {
        let entries = self
            .factors
            .iter()
            .enumerate()
            .map(|(e, r)| (e, e, r.transpose() * r))
            .collect();
        BlockSparseMatrix::from_blocks(self.factors.len(), self.n_loc, entries)
    }
}

/// Thin singular value decomposition A = U Σ Vᵀ.
#[derive(Debug, Clone)]
pub struct ThinSvd {
    pub left: DMatrix<f64>,
    /// Nonincreasing, nonnegative.
    pub singular_values: DVector<f64>,
    pub right_t: DMatrix<f64>,
}

/// Thin SVD with both singular vector sets.
///
/// Tall (or square) matrices go through the direct bidiagonalization; wide
/// matrices go through the Gram matrix A Aᵀ, whose eigenvectors are the left
/// singular vectors. In the Gram route the right vectors are recovered as
/// Aᵀ U Σ⁻¹ and are only meaningful up to the numerical rank.
pub fn thin_svd(a: &DMatrix<f64>) -> ThinSvd {
    if a.ncols() <= a.nrows() {
        let svd = a.clone().svd(true, true);
        ThinSvd {
            left: svd.u.unwrap(),
            singular_values: svd.singular_values,
            right_t: svd.v_t.unwrap(),
        }
    } else {
        let (left, singular_values) = gram_left_svd(a);
        let rank_floor = singular_values[0] * 1e-14;
        let mut right_t = DMatrix::zeros(singular_values.len(), a.ncols());
        for (i, &s) in singular_values.iter().enumerate() {
            if s > rank_floor {
                let vi = (a.transpose() * left.column(i)) / s;
                right_t.row_mut(i).copy_from(&vi.transpose());
            }
        }
        ThinSvd {
            left,
            singular_values,
            right_t,
        }
    }
}

/// Left singular vectors and singular values only; avoids forming the right
/// factor for very wide matrices.
pub fn thin_svd_left(a: &DMatrix<f64>) -> (DMatrix<f64>, DVector<f64>) {
    if a.ncols() <= a.nrows() {
        let svd = a.clone().svd(true, false);
        (svd.u.unwrap(), svd.singular_values)
    } else {
        gram_left_svd(a)
    }
}

fn gram_left_svd(a: &DMatrix<f64>) -> (DMatrix<f64>, DVector<f64>) {
    let gram = gram_aat(a);
    let eigen = gram.symmetric_eigen();
    let n = eigen.eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        eigen.eigenvalues[j]
            .partial_cmp(&eigen.eigenvalues[i])
            .unwrap()
    });
    let mut left = DMatrix::zeros(a.nrows(), n);
    let mut sigma = DVector::zeros(n);
    for (k, &i) in order.iter().enumerate() {
        sigma[k] = eigen.eigenvalues[i].max(0.0).sqrt();
        left.set_column(k, &eigen.eigenvectors.column(i));
    }
    (left, sigma)
}

/// G = A Aᵀ, computed in parallel column chunks when the feature is enabled.
pub fn gram_aat(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    #[cfg(feature = "parallel")]
    {
        let at = a.transpose();
        let mut g = DMatrix::<f64>::zeros(n, n);
        let chunk_cols = n.div_ceil(4 * rayon::current_num_threads().max(1)).max(32);
        g.as_mut_slice()
            .par_chunks_mut(n * chunk_cols)
            .enumerate()
            .for_each(|(ci, slice)| {
                let c0 = ci * chunk_cols;
                let w = slice.len() / n;
                let mut view = nalgebra::DMatrixViewMut::from_slice(slice, n, w);
                view.gemm(1.0, a, &at.columns(c0, w), 0.0);
            });
        g
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = n;
        a * a.transpose()
    }
}

/// Largest singular value.
pub fn spectral_norm(a: &DMatrix<f64>) -> f64 {
    a.clone()
        .svd(false, false)
        .singular_values
        .iter()
        .fold(0.0f64, |acc, &s| acc.max(s))
}

/// One-shot sparse direct solve of A x = b.
pub fn solve_sparse(a: &BlockSparseMatrix, b: &DVector<f64>) -> Result<DVector<f64>> {
    if a.dim() != b.len() {
        return Err(Error::DimensionMismatch {
            context: "solve_sparse",
            expected: a.dim(),
            found: b.len(),
        });
    }
    let triplets: Vec<(usize, usize, f64)> = a.entries().collect();
    let mut solver = SparseDirectSolver::new(a.dim());
    solver.solve(&triplets, b)
}

/// Sparse LU solver that caches the symbolic factorization across calls with
/// an identical sparsity pattern.
pub struct SparseDirectSolver {
    dim: usize,
    symbolic: Option<(Vec<usize>, Vec<usize>, SymbolicLu<usize>)>,
}

impl SparseDirectSolver {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            symbolic: None,
        }
    }

    /// Factor the matrix given as (row, col, value) triplets and solve.
    pub fn solve(
        &mut self,
        triplets: &[(usize, usize, f64)],
        rhs: &DVector<f64>,
    ) -> Result<DVector<f64>> {
        assert_eq!(rhs.len(), self.dim);
        let entries: Vec<Triplet<usize, usize, f64>> = triplets
            .iter()
            .map(|&(r, c, v)| Triplet::new(r, c, v))
            .collect();
        let mat = SparseColMat::<usize, f64>::try_new_from_triplets(self.dim, self.dim, &entries)
            .map_err(|e| Error::InvalidInput(format!("sparse matrix build failed: {e:?}")))?;

        let pattern_matches = self.symbolic.as_ref().is_some_and(|(cp, ri, _)| {
            cp.as_slice() == mat.symbolic().col_ptr()
                && ri.as_slice() == mat.symbolic().row_idx()
        });
        if !pattern_matches {
            let symbolic = SymbolicLu::try_new(mat.symbolic())
                .map_err(|e| Error::Singular(format!("symbolic LU failed: {e:?}")))?;
            self.symbolic = Some((
                mat.symbolic().col_ptr().to_vec(),
                mat.symbolic().row_idx().to_vec(),
                symbolic,
            ));
        }
        let symbolic = &self.symbolic.as_ref().unwrap().2;
        let lu = Lu::try_new_with_symbolic(symbolic.clone(), mat.rb())
            .map_err(|e| Error::Singular(format!("numeric LU failed: {e:?}")))?;

        let b = faer::Mat::<f64>::from_fn(self.dim, 1, |i, _| rhs[i]);
        let x = lu.solve(&b);
        let solution = DVector::from_fn(self.dim, |i, _| x[(i, 0)]);
        if !solution.iter().all(|v| v.is_finite()) {
            return Err(Error::Singular("solution is not finite".into()));
        }
        Ok(solution)
    }
}

/// Dense direct solve via LU with partial pivoting.
pub fn solve_dense(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    a.clone()
        .lu()
        .solve(b)
        .ok_or_else(|| Error::Singular("dense LU solve failed".into()))
}
