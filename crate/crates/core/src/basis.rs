//! Modal basis and quadrature on the reference triangle.
//!
//! The reference element is the triangle with vertices (0,0), (1,0), (0,1).
//! The basis is L²-orthonormal on the reference element, obtained by a
//! Cholesky-based Gram-Schmidt of the monomials; with an affine element map
//! of Jacobian determinant `det J` the physical mass block is `det J · I`.

use nalgebra::{Cholesky, DMatrix};

use crate::error::{Error, Result};

/// Exact integral of x^a y^b over the reference triangle: a! b! / (a+b+2)!.
fn monomial_integral(a: u32, b: u32) -> f64 {
    let mut value = 1.0;
    // a! b! / (a+b+2)! computed as a product of ratios to stay in range
    let mut denom = 1.0f64;
    for k in 1..=(a + b + 2) {
        denom *= k as f64;
    }
    for k in 1..=a {
        value *= k as f64;
    }
    for k in 1..=b {
        value *= k as f64;
    }
    value / denom
}

/// L²-orthonormal modal basis of total degree `q` on the reference triangle.
#[derive(Debug, Clone)]
pub struct ModalBasis {
    degree: usize,
    n_loc: usize,
    /// Monomial exponents (a, b) for x^a y^b, graded ordering.
    exponents: Vec<(u32, u32)>,
    /// `coeffs[i][m]` is the coefficient of monomial m in basis function i.
    coeffs: DMatrix<f64>,
}

impl ModalBasis {
    /// Build the orthonormal basis for polynomial degree `degree` (1 or 2).
    pub fn new(degree: usize) -> Result<Self> {
        if degree < 1 || degree > 2 {
            return Err(Error::InvalidInput(format!(
                "polynomial degree {degree} unsupported (expected 1 or 2)"
            )));
        }
        let mut exponents = Vec::new();
        for total in 0..=degree as u32 {
            for a in (0..=total).rev() {
                exponents.push((a, total - a));
            }
        }
        let n_loc = exponents.len();

        // Gram matrix of the monomials, then orthonormalize: with G = L Lᵀ the
        // rows of L⁻¹ give coefficients of an orthonormal basis.
        let mut gram = DMatrix::zeros(n_loc, n_loc);
        for i in 0..n_loc {
            for j in 0..n_loc {
                let (a1, b1) = exponents[i];
                let (a2, b2) = exponents[j];
                gram[(i, j)] = monomial_integral(a1 + a2, b1 + b2);
            }
        }
        let chol = Cholesky::new(gram)
            .ok_or_else(|| Error::NotPositiveDefinite("monomial Gram matrix".into()))?;
        let coeffs = chol
            .l()
            .solve_lower_triangular(&DMatrix::identity(n_loc, n_loc))
            .ok_or_else(|| Error::Singular("monomial Gram factor".into()))?;

        Ok(Self {
            degree,
            n_loc,
            exponents,
            coeffs,
        })
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    /// Local dimension (q+1)(q+2)/2.
    pub fn n_loc(&self) -> usize {
        self.n_loc
    }

    /// Value of basis function `i` at reference coordinates.
    pub fn eval(&self, i: usize, xi: f64, eta: f64) -> f64 {
        let mut value = 0.0;
        for (m, &(a, b)) in self.exponents.iter().enumerate() {
            value += self.coeffs[(i, m)] * xi.powi(a as i32) * eta.powi(b as i32);
        }
        value
    }

    /// Reference gradient (d/dxi, d/deta) of basis function `i`.
    pub fn eval_grad(&self, i: usize, xi: f64, eta: f64) -> (f64, f64) {
        let mut gx = 0.0;
        let mut gy = 0.0;
        for (m, &(a, b)) in self.exponents.iter().enumerate() {
            let c = self.coeffs[(i, m)];
            if a > 0 {
                gx += c * a as f64 * xi.powi(a as i32 - 1) * eta.powi(b as i32);
            }
            if b > 0 {
                gy += c * b as f64 * xi.powi(a as i32) * eta.powi(b as i32 - 1);
            }
        }
        (gx, gy)
    }

    /// Lattice interpolation nodes on the reference element (vertices for
    /// q = 1, vertices plus edge midpoints for q = 2).
    pub fn nodes(&self) -> Vec<(f64, f64)> {
        match self.degree {
            1 => vec![(0.0, 0.0), (1.0, 0.0), (0.0, 1.0)],
            2 => vec![
                (0.0, 0.0),
                (1.0, 0.0),
                (0.0, 1.0),
                (0.5, 0.0),
                (0.5, 0.5),
                (0.0, 0.5),
            ],
            _ => unreachable!(),
        }
    }

    /// Vandermonde matrix V with V[j][i] = phi_i(node_j).
    pub fn vandermonde_at_nodes(&self) -> DMatrix<f64> {
        let nodes = self.nodes();
        DMatrix::from_fn(nodes.len(), self.n_loc, |j, i| {
            let (x, y) = nodes[j];
            self.eval(i, x, y)
        })
    }
}

/// Quadrature rule on the reference triangle; weights sum to the area 1/2.
#[derive(Debug, Clone)]
pub struct TriangleQuadrature {
    pub points: Vec<(f64, f64)>,
    pub weights: Vec<f64>,
}

impl TriangleQuadrature {
    /// Rule exact for polynomials of total degree at least `degree`.
    ///
    /// Up to degree 5 this is the symmetric 7-point rule; beyond that a
    /// conical-product (collapsed tensor Gauss) rule is used.
    pub fn for_degree(degree: usize) -> Self {
        if degree <= 5 {
            Self::seven_point()
        } else {
            Self::conical(degree)
        }
    }

    /// Symmetric 7-point rule, exact for total degree 5.
    pub fn seven_point() -> Self {
        const A1: f64 = 0.059_715_871_789_770;
        const B1: f64 = 0.470_142_064_105_115;
        const W1: f64 = 0.132_394_152_788_506;
        const A2: f64 = 0.797_426_985_353_087;
        const B2: f64 = 0.101_286_507_323_456;
        const W2: f64 = 0.125_939_180_544_827;
        let points = vec![
            (1.0 / 3.0, 1.0 / 3.0),
            (A1, B1),
            (B1, A1),
            (B1, B1),
            (A2, B2),
            (B2, A2),
            (B2, B2),
        ];
        let weights = vec![0.225, W1, W1, W1, W2, W2, W2]
            .into_iter()
            .map(|w| 0.5 * w)
            .collect();
        Self { points, weights }
    }

    /// Collapsed tensor-product Gauss rule exact for total degree `degree`.
    fn conical(degree: usize) -> Self {
        let m = (degree + 3) / 2; // 2m-1 >= degree+1
        let (nodes, weights) = gauss_legendre_unit(m);
        let mut points = Vec::with_capacity(m * m);
        let mut w = Vec::with_capacity(m * m);
        for (&u, &wu) in nodes.iter().zip(&weights) {
            for (&v, &wv) in nodes.iter().zip(&weights) {
                // Duffy map (u,v) in [0,1]^2 -> (u(1-v), v), Jacobian (1-v)
                points.push((u * (1.0 - v), v));
                w.push(wu * wv * (1.0 - v));
            }
        }
        Self { points, weights: w }
    }
}

/// Gauss-Legendre rule on [0, 1] with `m` points (exact to degree 2m-1).
pub fn gauss_legendre_unit(m: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(m >= 1);
    let mut nodes = Vec::with_capacity(m);
    let mut weights = Vec::with_capacity(m);
    for k in 0..m {
        // Newton iteration on P_m from the Chebyshev initial guess.
        let mut x = (std::f64::consts::PI * (k as f64 + 0.75) / (m as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre_with_derivative(m, x);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let (_, dp) = legendre_with_derivative(m, x);
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        // map [-1,1] -> [0,1]
        nodes.push(0.5 * (x + 1.0));
        weights.push(0.5 * w);
    }
    nodes.reverse();
    weights.reverse();
    (nodes, weights)
}

fn legendre_with_derivative(m: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if m == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=m {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let dp = m as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

/// Gauss rule on [0, 1] used for face integrals (3 points, degree 5).
pub fn face_quadrature() -> (Vec<f64>, Vec<f64>) {
    gauss_legendre_unit(3)
}
