//! SIPG operator assembly: mass, diffusion stiffness, cubic nonlinearity and
//! its block-diagonal Jacobian.
//!
//! Everything is assembled element by element (and face by face for the
//! interior penalty terms); each basis function lives on a single element,
//! so the mass matrix and the nonlinear Jacobian are block diagonal and the
//! stiffness couples only face neighbors. Volume integrals use a rule exact
//! for the cubic term at the given degree; faces use 3-point Gauss.

use nalgebra::{DMatrix, DVector, Matrix2, Vector2};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

use crate::block::BlockSparseMatrix;
use crate::error::{Error, Result};
use crate::space::DGSpace;

/// Bistable reaction term f(u; mu) = (u - mu)(u^2 - 1).
#[inline]
pub fn bistable(u: f64, mu: f64) -> f64 {
    (u - mu) * (u * u - 1.0)
}

/// df/du = 3u^2 - 2 mu u - 1.
#[inline]
pub fn bistable_prime(u: f64, mu: f64) -> f64 {
    3.0 * u * u - 2.0 * mu * u - 1.0
}

/// Mass matrix; block-diagonal with blocks `det J * I` for the orthonormal
/// modal basis (assembled by quadrature rather than by that closed form).
pub fn assemble_mass(space: &DGSpace) -> BlockSparseMatrix {
    let n_loc = space.n_loc();
    let quad = space.volume_quadrature();
    let element_block = |e: usize| -> (usize, usize, DMatrix<f64>) {
        let det = space.mesh().affine_map(e).det;
        let mut block = DMatrix::zeros(n_loc, n_loc);
        for (q, &w) in quad.weights.iter().enumerate() {
            let phi = space.phi_at(q);
            for i in 0..n_loc {
                let wi = w * det * phi[i];
                for j in 0..n_loc {
                    block[(i, j)] += wi * phi[j];
                }
            }
        }
        (e, e, block)
    };
    let entries = map_elements(space.n_elements(), element_block);
    BlockSparseMatrix::from_blocks(space.n_elements(), n_loc, entries)
}

/// SIPG stiffness for diffusion coefficient `diffusion` and penalty
/// parameter `penalty` (face-scaled as `penalty * diffusion * (q+1)^2 / h`).
/// Homogeneous Neumann boundary: boundary faces contribute nothing.
pub fn assemble_stiffness_sipg(
    space: &DGSpace,
    diffusion: f64,
    penalty: f64,
) -> Result<BlockSparseMatrix> {
    if diffusion <= 0.0 {
        return Err(Error::InvalidInput(format!(
            "diffusion coefficient must be positive, got {diffusion}"
        )));
    }
    let n_loc = space.n_loc();

    // Volume terms: D * grad phi_j . grad phi_i on each element.
    let volume_block = |e: usize| -> (usize, usize, DMatrix<f64>) {
        let map = space.mesh().affine_map(e);
        let det = map.det;
        let inv_t = map.inverse.transpose();
        let quad = space.volume_quadrature();
        let mut block = DMatrix::zeros(n_loc, n_loc);
        for (q, &w) in quad.weights.iter().enumerate() {
            let grads = space.grad_phi_at(q);
            let phys: Vec<Vector2<f64>> = grads
                .iter()
                .map(|&(gx, gy)| inv_t * Vector2::new(gx, gy))
                .collect();
            for i in 0..n_loc {
                for j in 0..n_loc {
                    block[(i, j)] += w * det * diffusion * phys[i].dot(&phys[j]);
                }
            }
        }
        (e, e, block)
    };
    let mut entries = map_elements(space.n_elements(), volume_block);

    // Interior face terms: consistency, symmetry and penalty.
    let degree = space.degree() as f64;
    let face_terms = |f: usize| -> Vec<(usize, usize, DMatrix<f64>)> {
        let face = &space.mesh().interior_faces[f];
        let (nodes, weights) = space.face_quadrature();
        let a = space.mesh().vertices[face.vertices[0]];
        let b = space.mesh().vertices[face.vertices[1]];
        let sigma = penalty * diffusion * (degree + 1.0) * (degree + 1.0) / face.length;
        let sides = [face.left, face.right];
        let signs = [1.0, -1.0];
        let mut blocks = vec![DMatrix::zeros(n_loc, n_loc); 4];

        for (&t, &w) in nodes.iter().zip(weights) {
            let x = a + t * (b - a);
            let wq = w * face.length;
            // traces and physical gradients from both sides
            let mut phi = [[0.0; 8]; 2];
            let mut gn = [[0.0; 8]; 2]; // grad phi . n
            for s in 0..2 {
                let map = space.mesh().affine_map(sides[s]);
                let xi = map.to_reference(&x);
                let inv_t: Matrix2<f64> = map.inverse.transpose();
                for i in 0..n_loc {
                    phi[s][i] = space.basis().eval(i, xi.x, xi.y);
                    let (gx, gy) = space.basis().eval_grad(i, xi.x, xi.y);
                    gn[s][i] = (inv_t * Vector2::new(gx, gy)).dot(&face.normal);
                }
            }
            for sw in 0..2 {
                for su in 0..2 {
                    let block = &mut blocks[2 * sw + su];
                    for i in 0..n_loc {
                        for j in 0..n_loc {
                            let consistency =
                                -0.5 * diffusion * gn[su][j] * signs[sw] * phi[sw][i];
                            let symmetry =
                                -0.5 * diffusion * gn[sw][i] * signs[su] * phi[su][j];
                            let pen = sigma * signs[su] * signs[sw] * phi[su][j] * phi[sw][i];
                            block[(i, j)] += wq * (consistency + symmetry + pen);
                        }
                    }
                }
            }
        }
        vec![
            (sides[0], sides[0], blocks.remove(0)),
            (sides[0], sides[1], blocks.remove(0)),
            (sides[1], sides[0], blocks.remove(0)),
            (sides[1], sides[1], blocks.remove(0)),
        ]
    };
    let n_faces = space.mesh().interior_faces.len();
    #[cfg(feature = "parallel")]
    let face_entries: Vec<_> = (0..n_faces).into_par_iter().flat_map_iter(face_terms).collect();
    #[cfg(not(feature = "parallel"))]
    let face_entries: Vec<_> = (0..n_faces).flat_map(face_terms).collect();
    entries.extend(face_entries);

    Ok(BlockSparseMatrix::from_blocks(
        space.n_elements(),
        n_loc,
        entries,
    ))
}

/// Nonlinear vector F with F_i = integral over the owning element of
/// f(u_h; mu) phi_i.
pub fn assemble_nonlinear(space: &DGSpace, u: &DVector<f64>, mu: f64) -> DVector<f64> {
    #[cfg(feature = "parallel")]
    {
        let n_loc = space.n_loc();
        let mut out = DVector::zeros(space.n_dofs());
        out.as_mut_slice()
            .par_chunks_mut(n_loc)
            .enumerate()
            .for_each(|(e, chunk)| nonlinear_element(space, u, mu, e, chunk));
        out
    }
    #[cfg(not(feature = "parallel"))]
    {
        assemble_nonlinear_serial(space, u, mu)
    }
}

/// Sequential reference path for `assemble_nonlinear`.
pub fn assemble_nonlinear_serial(space: &DGSpace, u: &DVector<f64>, mu: f64) -> DVector<f64> {
    let n_loc = space.n_loc();
    let mut out = DVector::zeros(space.n_dofs());
    for (e, chunk) in out.as_mut_slice().chunks_mut(n_loc).enumerate() {
        nonlinear_element(space, u, mu, e, chunk);
    }
    out
}

#[inline]
fn nonlinear_element(space: &DGSpace, u: &DVector<f64>, mu: f64, e: usize, out: &mut [f64]) {
    let n_loc = space.n_loc();
    let det = space.mesh().affine_map(e).det;
    let local = &u.as_slice()[e * n_loc..(e + 1) * n_loc];
    let quad = space.volume_quadrature();
    out.fill(0.0);
    for (q, &w) in quad.weights.iter().enumerate() {
        let uh = space.value_at_quad(local, q);
        let fw = w * det * bistable(uh, mu);
        let phi = space.phi_at(q);
        for i in 0..n_loc {
            out[i] += fw * phi[i];
        }
    }
}

/// Jacobian of the nonlinear vector: block diagonal with element blocks
/// holding the integrals of f'(u_h; mu) phi_i phi_j.
pub fn assemble_nonlinear_jacobian(
    space: &DGSpace,
    u: &DVector<f64>,
    mu: f64,
) -> BlockSparseMatrix {
    let n_loc = space.n_loc();
    let element_block = |e: usize| -> (usize, usize, DMatrix<f64>) {
        let det = space.mesh().affine_map(e).det;
        let local = &u.as_slice()[e * n_loc..(e + 1) * n_loc];
        let quad = space.volume_quadrature();
        let mut block = DMatrix::zeros(n_loc, n_loc);
        for (q, &w) in quad.weights.iter().enumerate() {
            let uh = space.value_at_quad(local, q);
            let fw = w * det * bistable_prime(uh, mu);
            let phi = space.phi_at(q);
            for i in 0..n_loc {
                let fi = fw * phi[i];
                for j in 0..n_loc {
                    block[(i, j)] += fi * phi[j];
                }
            }
        }
        (e, e, block)
    };
    let entries = map_elements(space.n_elements(), element_block);
    BlockSparseMatrix::from_blocks(space.n_elements(), n_loc, entries)
}

/// Sequential reference path for `assemble_nonlinear_jacobian`.
pub fn assemble_nonlinear_jacobian_serial(
    space: &DGSpace,
    u: &DVector<f64>,
    mu: f64,
) -> BlockSparseMatrix {
    let n_loc = space.n_loc();
    let mut entries = Vec::with_capacity(space.n_elements());
    for e in 0..space.n_elements() {
        let det = space.mesh().affine_map(e).det;
        let local = &u.as_slice()[e * n_loc..(e + 1) * n_loc];
        let quad = space.volume_quadrature();
        let mut block = DMatrix::zeros(n_loc, n_loc);
        for (q, &w) in quad.weights.iter().enumerate() {
            let uh = space.value_at_quad(local, q);
            let fw = w * det * bistable_prime(uh, mu);
            let phi = space.phi_at(q);
            for i in 0..n_loc {
                let fi = fw * phi[i];
                for j in 0..n_loc {
                    block[(i, j)] += fi * phi[j];
                }
            }
        }
        entries.push((e, e, block));
    }
    BlockSparseMatrix::from_blocks(space.n_elements(), n_loc, entries)
}

/// Elementwise L2 projection of a pointwise function onto the space.
pub fn project_function<G>(space: &DGSpace, g: G) -> DVector<f64>
where
    G: Fn(f64, f64) -> f64 + Sync,
{
    let n_loc = space.n_loc();
    let project_element = |e: usize, out: &mut [f64]| {
        let map = space.mesh().affine_map(e);
        let det = map.det;
        let quad = space.volume_quadrature();
        let mut mass = DMatrix::zeros(n_loc, n_loc);
        let mut rhs = DVector::zeros(n_loc);
        for (q, &w) in quad.weights.iter().enumerate() {
            let phi = space.phi_at(q);
            let (xi, eta) = quad.points[q];
            let x = map.to_physical(xi, eta);
            let gv = g(x.x, x.y);
            for i in 0..n_loc {
                rhs[i] += w * det * gv * phi[i];
                for j in 0..n_loc {
                    mass[(i, j)] += w * det * phi[i] * phi[j];
                }
            }
        }
        let coeffs = mass.lu().solve(&rhs).expect("element mass block is SPD");
        out.copy_from_slice(coeffs.as_slice());
    };
    let mut out = DVector::zeros(space.n_dofs());
    #[cfg(feature = "parallel")]
    out.as_mut_slice()
        .par_chunks_mut(n_loc)
        .enumerate()
        .for_each(|(e, chunk)| project_element(e, chunk));
    #[cfg(not(feature = "parallel"))]
    for (e, chunk) in out.as_mut_slice().chunks_mut(n_loc).enumerate() {
        project_element(e, chunk);
    }
    out
}

fn map_elements<F>(n_elements: usize, f: F) -> Vec<(usize, usize, DMatrix<f64>)>
where
    F: Fn(usize) -> (usize, usize, DMatrix<f64>) + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        (0..n_elements).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n_elements).map(f).collect()
    }
}
