//! Piecewise-polynomial discontinuous space over a mesh.
//!
//! Degrees of freedom are modal coefficients stored element-major:
//! global index = element * n_loc + local. Basis functions vanish outside
//! their element.

use nalgebra::{DMatrix, DVector};

use crate::basis::{face_quadrature, ModalBasis, TriangleQuadrature};
use crate::error::Result;
use crate::mesh::Mesh;

/// Discontinuous Galerkin space: mesh, modal basis and quadrature tables.
#[derive(Debug, Clone)]
pub struct DGSpace {
    mesh: Mesh,
    basis: ModalBasis,
    volume_quad: TriangleQuadrature,
    /// Basis values at volume quadrature points: `phi[q][i]`.
    phi: Vec<Vec<f64>>,
    /// Reference gradients at volume quadrature points: `grad_phi[q][i]`.
    grad_phi: Vec<Vec<(f64, f64)>>,
    /// Face quadrature nodes/weights on [0, 1].
    face_nodes: Vec<f64>,
    face_weights: Vec<f64>,
    /// Inverse Vandermonde for nodal-to-modal conversion.
    nodal_to_modal: DMatrix<f64>,
}

impl DGSpace {
    /// Build the space of local polynomial degree `degree` over `mesh`.
    ///
    /// The volume rule is exact for the cubic nonlinearity at the given
    /// degree (total degree 4q).
    pub fn new(mesh: Mesh, degree: usize) -> Result<Self> {
        let basis = ModalBasis::new(degree)?;
        let volume_quad = TriangleQuadrature::for_degree((4 * degree).max(2 * degree));
        let n_loc = basis.n_loc();

        let phi: Vec<Vec<f64>> = volume_quad
            .points
            .iter()
            .map(|&(x, y)| (0..n_loc).map(|i| basis.eval(i, x, y)).collect())
            .collect();
        let grad_phi: Vec<Vec<(f64, f64)>> = volume_quad
            .points
            .iter()
            .map(|&(x, y)| (0..n_loc).map(|i| basis.eval_grad(i, x, y)).collect())
            .collect();

        let (face_nodes, face_weights) = face_quadrature();

        let v = basis.vandermonde_at_nodes();
        let nodal_to_modal = v
            .lu()
            .try_inverse()
            .expect("nodal Vandermonde is invertible for q <= 2");

        Ok(Self {
            mesh,
            basis,
            volume_quad,
            phi,
            grad_phi,
            face_nodes,
            face_weights,
            nodal_to_modal,
        })
    }

    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    pub fn basis(&self) -> &ModalBasis {
        &self.basis
    }

    pub fn degree(&self) -> usize {
        self.basis.degree()
    }

    /// Local dimension per element.
    pub fn n_loc(&self) -> usize {
        self.basis.n_loc()
    }

    pub fn n_elements(&self) -> usize {
        self.mesh.n_elements()
    }

    /// Total degrees of freedom N = n_loc * n_elements.
    pub fn n_dofs(&self) -> usize {
        self.n_loc() * self.n_elements()
    }

    #[inline]
    pub fn global_index(&self, element: usize, local: usize) -> usize {
        element * self.n_loc() + local
    }

    pub fn volume_quadrature(&self) -> &TriangleQuadrature {
        &self.volume_quad
    }

    /// Basis values at volume quadrature point `q`.
    #[inline]
    pub fn phi_at(&self, q: usize) -> &[f64] {
        &self.phi[q]
    }

    /// Reference basis gradients at volume quadrature point `q`.
    #[inline]
    pub fn grad_phi_at(&self, q: usize) -> &[(f64, f64)] {
        &self.grad_phi[q]
    }

    pub fn face_quadrature(&self) -> (&[f64], &[f64]) {
        (&self.face_nodes, &self.face_weights)
    }

    /// Matrix turning nodal values at the lattice nodes into modal coefficients.
    pub fn nodal_to_modal(&self) -> &DMatrix<f64> {
        &self.nodal_to_modal
    }

    /// Evaluate a coefficient vector inside an element at reference coords.
    pub fn value_in_element(&self, coeffs: &DVector<f64>, element: usize, xi: f64, eta: f64) -> f64 {
        let n_loc = self.n_loc();
        let mut value = 0.0;
        for i in 0..n_loc {
            value += coeffs[element * n_loc + i] * self.basis.eval(i, xi, eta);
        }
        value
    }

    /// Value of the represented function at a volume quadrature point,
    /// using the precomputed tables.
    #[inline]
    pub fn value_at_quad(&self, local_coeffs: &[f64], q: usize) -> f64 {
        let phi = &self.phi[q];
        let mut value = 0.0;
        for (c, p) in local_coeffs.iter().zip(phi) {
            value += c * p;
        }
        value
    }
}
