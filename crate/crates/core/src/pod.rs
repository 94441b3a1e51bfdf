//! Proper orthogonal decomposition in the mass-matrix inner product, and the
//! Galerkin-reduced operators.
//!
//! With R the Cholesky factor of M (M = Rᵀ R), a basis that is orthonormal
//! in the M inner product is obtained from the plain SVD of R times the
//! snapshot matrix; the left singular vectors are mapped back through R.

use nalgebra::{DMatrix, DVector};

use crate::block::BlockSparseMatrix;
use crate::error::{Error, Result};
use crate::numerics::{thin_svd_left, BlockCholesky};

/// How many modes to keep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ModeSelection {
    /// Exactly this many modes.
    Count(usize),
    /// Smallest k with (sum of the first k squared singular values) /
    /// (total squared sum) at least this fraction.
    EnergyFraction(f64),
}

/// An M-orthonormal basis with the full singular-value spectrum it was cut
/// from.
#[derive(Debug, Clone)]
pub struct PodBasis {
    /// N x k coefficient matrix.
    pub modes: DMatrix<f64>,
    /// Full spectrum (not truncated to k), nonincreasing.
    pub singular_values: DVector<f64>,
}

impl PodBasis {
    pub fn k(&self) -> usize {
        self.modes.ncols()
    }

    pub fn n(&self) -> usize {
        self.modes.nrows()
    }
}

/// Number of singular values that count as nonzero.
pub fn numerical_rank(singular_values: &DVector<f64>) -> usize {
    if singular_values.len() == 0 || singular_values[0] <= 0.0 {
        return 0;
    }
    let floor = singular_values[0] * 1e-14;
    singular_values.iter().filter(|&&s| s > floor).count()
}

/// Resolve a `ModeSelection` against a computed spectrum.
pub fn select_mode_count(
    singular_values: &DVector<f64>,
    selection: ModeSelection,
) -> Result<usize> {
    let rank = numerical_rank(singular_values);
    match selection {
        ModeSelection::Count(k) => {
            if k == 0 {
                return Err(Error::InvalidInput("mode count must be positive".into()));
            }
            if k > rank {
                return Err(Error::RankExceeded {
                    requested: k,
                    available: rank,
                });
            }
            Ok(k)
        }
        ModeSelection::EnergyFraction(fraction) => {
            if !(fraction > 0.0 && fraction <= 1.0) {
                return Err(Error::InvalidInput(format!(
                    "energy fraction must lie in (0, 1], got {fraction}"
                )));
            }
            if rank == 0 {
                return Err(Error::InvalidInput(
                    "cannot select modes from an all-zero spectrum".into(),
                ));
            }
            if fraction == 1.0 {
                return Ok(rank);
            }
            let total: f64 = singular_values.iter().map(|s| s * s).sum();
            let mut cumulative = 0.0;
            for (i, s) in singular_values.iter().enumerate() {
                cumulative += s * s;
                if cumulative >= fraction * total {
                    return Ok(i + 1);
                }
            }
            Ok(rank)
        }
    }
}

/// Left singular vectors and spectrum of the mass-weighted snapshot matrix.
/// The basis is cut from these by [`basis_from_spectrum`].
pub fn weighted_spectrum(
    snapshots: &DMatrix<f64>,
    mass_factor: &BlockCholesky,
) -> Result<(DMatrix<f64>, DVector<f64>)> {
    if snapshots.ncols() == 0 {
        return Err(Error::InvalidInput("snapshot matrix has no columns".into()));
    }
    if snapshots.nrows() != mass_factor.dim() {
        return Err(Error::DimensionMismatch {
            context: "compute_pod_basis",
            expected: mass_factor.dim(),
            found: snapshots.nrows(),
        });
    }
    let weighted = mass_factor.apply_mat(snapshots);
    Ok(thin_svd_left(&weighted))
}

/// Map the first k left singular vectors back through the mass factor.
pub fn basis_from_spectrum(
    left: &DMatrix<f64>,
    singular_values: &DVector<f64>,
    mass_factor: &BlockCholesky,
    k: usize,
) -> Result<PodBasis> {
    let rank = numerical_rank(singular_values);
    if k == 0 || k > rank {
        return Err(Error::RankExceeded {
            requested: k,
            available: rank,
        });
    }
    let modes = mass_factor.solve_mat(&left.columns(0, k).into_owned());
    Ok(PodBasis {
        modes,
        singular_values: singular_values.clone(),
    })
}

/// Compute the M-orthonormal basis of one field from its snapshot matrix.
pub fn compute_pod_basis(
    snapshots: &DMatrix<f64>,
    mass_factor: &BlockCholesky,
    selection: ModeSelection,
) -> Result<PodBasis> {
    let (left, singular_values) = weighted_spectrum(snapshots, mass_factor)?;
    let k = select_mode_count(&singular_values, selection)?;
    basis_from_spectrum(&left, &singular_values, mass_factor, k)
}

/// Galerkin projections of the full operators onto a pair of bases.
#[derive(Debug, Clone)]
pub struct RomOperators {
    /// Psi_u' S_u Psi_u.
    pub stiffness_u: DMatrix<f64>,
    /// Psi_v' S_v Psi_v.
    pub stiffness_v: DMatrix<f64>,
    /// Psi_u' M Psi_v.
    pub mass_uv: DMatrix<f64>,
    /// Psi_v' M Psi_u.
    pub mass_vu: DMatrix<f64>,
    pub alpha: f64,
    pub beta: f64,
    pub mu: f64,
}

impl RomOperators {
    pub fn k(&self) -> usize {
        self.stiffness_u.nrows()
    }

    pub fn with_mu(&self, mu: f64) -> Self {
        let mut ops = self.clone();
        ops.mu = mu;
        ops
    }
}

/// Largest deviation of Psi' M Psi from the identity.
pub fn orthonormality_defect(modes: &DMatrix<f64>, mass: &BlockSparseMatrix) -> f64 {
    let gram = modes.tr_mul(&mass.mul_mat(modes));
    let k = gram.nrows();
    (gram - DMatrix::identity(k, k)).amax()
}

/// Project the full operators; both bases must be M-orthonormal (the alpha
/// coupling reduces to the identity only then).
pub fn reduce_operators(
    basis_u: &PodBasis,
    basis_v: &PodBasis,
    mass: &BlockSparseMatrix,
    stiffness_u: &BlockSparseMatrix,
    stiffness_v: &BlockSparseMatrix,
    alpha: f64,
    beta: f64,
    mu: f64,
) -> Result<RomOperators> {
    if basis_u.n() != mass.dim() || basis_v.n() != mass.dim() {
        return Err(Error::DimensionMismatch {
            context: "reduce_operators",
            expected: mass.dim(),
            found: basis_u.n(),
        });
    }
    if basis_u.k() != basis_v.k() {
        return Err(Error::DimensionMismatch {
            context: "reduce_operators (the reduced system uses one k for both fields)",
            expected: basis_u.k(),
            found: basis_v.k(),
        });
    }
    for (name, basis) in [("u", basis_u), ("v", basis_v)] {
        let defect = orthonormality_defect(&basis.modes, mass);
        if defect > 1e-8 {
            return Err(Error::InvalidInput(format!(
                "{name}-basis is not M-orthonormal (defect {defect:.3e})"
            )));
        }
    }
    let su = basis_u.modes.tr_mul(&stiffness_u.mul_mat(&basis_u.modes));
    let sv = basis_v.modes.tr_mul(&stiffness_v.mul_mat(&basis_v.modes));
    let m_psi_v = mass.mul_mat(&basis_v.modes);
    let mass_uv = basis_u.modes.tr_mul(&m_psi_v);
    let mass_vu = mass_uv.transpose();
    Ok(RomOperators {
        stiffness_u: su,
        stiffness_v: sv,
        mass_uv,
        mass_vu,
        alpha,
        beta,
        mu,
    })
}
