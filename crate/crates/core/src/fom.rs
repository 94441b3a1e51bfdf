//! Full-order model: backward Euler time stepping of the coupled
//! activator/inhibitor system with a Newton solve of the 2N system per step.
//!
//! The step residual is
//!   M (u+ - u)/dt + S_u u+ + alpha M (v+ - u+) + F(u+; mu) = 0,
//!   M (v+ - v)/dt + S_v v+ + beta  M (v+ - u+)             = 0,
//! and the Newton matrix has the block form
//!   [ M/dt + S_u - alpha M + J_F,  alpha M          ]
//!   [ -beta M,                     M/dt + S_v + beta M ].
//! Only the nonlinear Jacobian changes between iterations, so the sparse LU
//! reuses its symbolic factorization for the whole run.

use std::sync::Arc;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::assembly::{
    assemble_mass, assemble_nonlinear, assemble_nonlinear_jacobian, assemble_stiffness_sipg,
};
use crate::block::BlockSparseMatrix;
use crate::error::{Error, Result};
use crate::numerics::SparseDirectSolver;
use crate::space::DGSpace;

pub const DEFAULT_NEWTON_TOL: f64 = 1e-9;
pub const DEFAULT_NEWTON_MAX_ITERS: usize = 25;

/// Assembled operators and physical parameters of the full-order system.
#[derive(Clone)]
pub struct FomOperators {
    space: Arc<DGSpace>,
    mass: Arc<BlockSparseMatrix>,
    stiffness_u: Arc<BlockSparseMatrix>,
    stiffness_v: Arc<BlockSparseMatrix>,
    pub alpha: f64,
    pub beta: f64,
    pub d_u: f64,
    pub d_v: f64,
    pub mu: f64,
}

impl FomOperators {
    /// Assemble mass and stiffness operators for the given parameters.
    pub fn new(
        space: Arc<DGSpace>,
        alpha: f64,
        beta: f64,
        d_u: f64,
        d_v: f64,
        mu: f64,
        penalty: f64,
    ) -> Result<Self> {
        if alpha <= 0.0 || beta <= 0.0 {
            return Err(Error::InvalidInput(format!(
                "coupling coefficients must be positive (alpha = {alpha}, beta = {beta})"
            )));
        }
        if d_v <= d_u {
            return Err(Error::InvalidInput(format!(
                "inhibitor must diffuse faster than the activator (d_u = {d_u}, d_v = {d_v})"
            )));
        }
        let mass = assemble_mass(&space);
        let stiffness_u = assemble_stiffness_sipg(&space, d_u, penalty)?;
        let stiffness_v = assemble_stiffness_sipg(&space, d_v, penalty)?;
        Ok(Self {
            space,
            mass: Arc::new(mass),
            stiffness_u: Arc::new(stiffness_u),
            stiffness_v: Arc::new(stiffness_v),
            alpha,
            beta,
            d_u,
            d_v,
            mu,
        })
    }

    /// Same operators, different nonlinearity parameter. Cheap: shares the
    /// assembled matrices.
    pub fn with_mu(&self, mu: f64) -> Self {
        let mut ops = self.clone();
        ops.mu = mu;
        ops
    }

    pub fn space(&self) -> &DGSpace {
        &self.space
    }

    pub fn shared_space(&self) -> Arc<DGSpace> {
        Arc::clone(&self.space)
    }

    pub fn mass(&self) -> &BlockSparseMatrix {
        &self.mass
    }

    pub fn stiffness_u(&self) -> &BlockSparseMatrix {
        &self.stiffness_u
    }

    pub fn stiffness_v(&self) -> &BlockSparseMatrix {
        &self.stiffness_v
    }

    pub fn n_dofs(&self) -> usize {
        self.space.n_dofs()
    }

    /// Residual of the backward-Euler step equations at (u, v).
    fn step_residual(
        &self,
        u: &DVector<f64>,
        v: &DVector<f64>,
        u_prev: &DVector<f64>,
        v_prev: &DVector<f64>,
        dt: f64,
    ) -> (DVector<f64>, DVector<f64>) {
        let du = (u - u_prev) / dt;
        let dv = (v - v_prev) / dt;
        let coupling = v - u;
        let m_coupling = self.mass.mul_vec(&coupling);
        let f = assemble_nonlinear(&self.space, u, self.mu);
        let r_u =
            self.mass.mul_vec(&du) + self.stiffness_u.mul_vec(u) + self.alpha * &m_coupling + f;
        let r_v = self.mass.mul_vec(&dv) + self.stiffness_v.mul_vec(v) + self.beta * m_coupling;
        (r_u, r_v)
    }

    /// Newton matrix triplets for the coupled 2N system.
    fn newton_triplets(
        &self,
        jacobian_f: &BlockSparseMatrix,
        dt: f64,
        out: &mut Vec<(usize, usize, f64)>,
    ) {
        let n = self.n_dofs();
        let n_loc = self.space.n_loc();
        out.clear();
        for e in 0..self.space.n_elements() {
            let mass_block = self.mass.block(e, e).expect("mass is block diagonal");
            let jf_block = jacobian_f.block(e, e).expect("J_F is block diagonal");
            for (c, s_block) in self.stiffness_u.block_row(e) {
                let diag = c == e;
                for i in 0..n_loc {
                    for j in 0..n_loc {
                        let mut value = s_block[(i, j)];
                        if diag {
                            value += mass_block[(i, j)] * (1.0 / dt - self.alpha)
                                + jf_block[(i, j)];
                        }
                        out.push((e * n_loc + i, c * n_loc + j, value));
                    }
                }
            }
            for (c, s_block) in self.stiffness_v.block_row(e) {
                let diag = c == e;
                for i in 0..n_loc {
                    for j in 0..n_loc {
                        let mut value = s_block[(i, j)];
                        if diag {
                            value += mass_block[(i, j)] * (1.0 / dt + self.beta);
                        }
                        out.push((n + e * n_loc + i, n + c * n_loc + j, value));
                    }
                }
            }
            // off-diagonal couplings: alpha M and -beta M
            for i in 0..n_loc {
                for j in 0..n_loc {
                    let m = mass_block[(i, j)];
                    out.push((e * n_loc + i, n + e * n_loc + j, self.alpha * m));
                    out.push((n + e * n_loc + i, e * n_loc + j, -self.beta * m));
                }
            }
        }
    }
}

/// Reusable Newton stepper; keeps the sparse solver (and thus the symbolic
/// factorization) alive across time steps.
pub struct FomStepper<'a> {
    ops: &'a FomOperators,
    solver: SparseDirectSolver,
    triplets: Vec<(usize, usize, f64)>,
    residual_history: Vec<f64>,
    /// Up to two states preceding the last accepted step, newest first, for
    /// the extrapolated initial guess.
    history: Vec<(DVector<f64>, DVector<f64>)>,
    pub newton_tol: f64,
    pub max_newton_iters: usize,
}

impl<'a> FomStepper<'a> {
    pub fn new(ops: &'a FomOperators) -> Self {
        Self {
            ops,
            solver: SparseDirectSolver::new(2 * ops.n_dofs()),
            triplets: Vec::new(),
            residual_history: Vec::new(),
            history: Vec::new(),
            newton_tol: DEFAULT_NEWTON_TOL,
            max_newton_iters: DEFAULT_NEWTON_MAX_ITERS,
        }
    }

    /// Residual norms of the last Newton solve, one entry per evaluation.
    pub fn residual_history(&self) -> &[f64] {
        &self.residual_history
    }

    /// Advance one backward-Euler step; returns the new state and the number
    /// of Newton updates performed.
    pub fn step(
        &mut self,
        u_prev: &DVector<f64>,
        v_prev: &DVector<f64>,
        dt: f64,
        time: f64,
    ) -> Result<(DVector<f64>, DVector<f64>, usize)> {
        assert!(dt > 0.0, "time step must be positive");
        let n = self.ops.n_dofs();
        let tol = self.newton_tol * (n as f64).sqrt();
        // polynomial extrapolation through the preceding states; the previous
        // state alone costs about one extra Newton iteration per step
        let (mut u, mut v) = match self.history.as_slice() {
            [(u1, v1), (u2, v2), ..] => (
                3.0 * u_prev - 3.0 * u1 + u2,
                3.0 * v_prev - 3.0 * v1 + v2,
            ),
            [(u1, v1)] => (2.0 * u_prev - u1, 2.0 * v_prev - v1),
            [] => (u_prev.clone(), v_prev.clone()),
        };
        self.residual_history.clear();

        for iter in 0..=self.max_newton_iters {
            let (r_u, r_v) = self.ops.step_residual(&u, &v, u_prev, v_prev, dt);
            let norm = (r_u.norm_squared() + r_v.norm_squared()).sqrt();
            self.residual_history.push(norm);
            if norm <= tol {
                self.history.insert(0, (u_prev.clone(), v_prev.clone()));
                self.history.truncate(2);
                return Ok((u, v, iter));
            }
            if iter == self.max_newton_iters {
                break;
            }
            let jacobian_f = assemble_nonlinear_jacobian(&self.ops.space, &u, self.ops.mu);
            let mut triplets = std::mem::take(&mut self.triplets);
            self.ops.newton_triplets(&jacobian_f, dt, &mut triplets);
            let mut rhs = DVector::zeros(2 * n);
            rhs.rows_mut(0, n).copy_from(&(-&r_u));
            rhs.rows_mut(n, n).copy_from(&(-&r_v));
            let update = self.solver.solve(&triplets, &rhs)?;
            self.triplets = triplets;
            u += update.rows(0, n);
            v += update.rows(n, n);
        }
        Err(Error::NewtonDiverged {
            time,
            residual: *self.residual_history.last().unwrap(),
            iterations: self.max_newton_iters,
        })
    }
}

/// One-shot backward-Euler step.
pub fn fom_step(
    ops: &FomOperators,
    u: &DVector<f64>,
    v: &DVector<f64>,
    dt: f64,
) -> Result<(DVector<f64>, DVector<f64>, usize)> {
    FomStepper::new(ops).step(u, v, dt, dt)
}

/// Stored states of a run: one column per stored step, plus the nonlinear
/// vector evaluated at those states.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub u: DMatrix<f64>,
    pub v: DMatrix<f64>,
    pub nonlinear: DMatrix<f64>,
    /// Wall-clock seconds spent inside the Newton stepping only.
    pub wall_seconds: f64,
    pub mean_newton_iters: f64,
}

impl Trajectory {
    pub fn n_stored(&self) -> usize {
        self.times.len()
    }

    pub fn final_u(&self) -> DVector<f64> {
        self.u.column(self.u.ncols() - 1).into_owned()
    }

    pub fn final_v(&self) -> DVector<f64> {
        self.v.column(self.v.ncols() - 1).into_owned()
    }
}

/// Integrate from (u0, v0) to `t_final`, storing the state and the
/// nonlinear vector at t = 0 and after every `stride`-th step.
pub fn fom_solve(
    ops: &FomOperators,
    u0: &DVector<f64>,
    v0: &DVector<f64>,
    dt: f64,
    t_final: f64,
    stride: usize,
) -> Result<Trajectory> {
    assert!(t_final > 0.0 && dt > 0.0, "dt and t_final must be positive");
    assert!(stride >= 1, "stride must be at least 1");
    let n_steps = (t_final / dt).ceil() as usize;

    let mut stepper = FomStepper::new(ops);
    let mut u = u0.clone();
    let mut v = v0.clone();

    let mut times = vec![0.0];
    let mut u_cols = vec![u.clone()];
    let mut v_cols = vec![v.clone()];
    let mut f_cols = vec![assemble_nonlinear(ops.space(), &u, ops.mu)];

    let mut wall = 0.0;
    let mut total_iters = 0usize;
    for step in 1..=n_steps {
        let time = step as f64 * dt;
        let clock = Instant::now();
        let (u_next, v_next, iters) = stepper.step(&u, &v, dt, time)?;
        wall += clock.elapsed().as_secs_f64();
        total_iters += iters;
        u = u_next;
        v = v_next;
        if step % stride == 0 || step == n_steps {
            times.push(time);
            u_cols.push(u.clone());
            v_cols.push(v.clone());
            f_cols.push(assemble_nonlinear(ops.space(), &u, ops.mu));
        }
    }

    Ok(Trajectory {
        times,
        u: DMatrix::from_columns(&u_cols),
        v: DMatrix::from_columns(&v_cols),
        nonlinear: DMatrix::from_columns(&f_cols),
        wall_seconds: wall,
        mean_newton_iters: total_iters as f64 / n_steps as f64,
    })
}

/// Deterministic random initial state: i.i.d. uniform(-1, 1) values at the
/// element lattice nodes, converted to modal coefficients per element.
pub fn random_initial_condition(space: &DGSpace, seed: u64) -> DVector<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_loc = space.n_loc();
    let to_modal = space.nodal_to_modal();
    let mut out = DVector::zeros(space.n_dofs());
    let mut nodal = DVector::zeros(n_loc);
    for e in 0..space.n_elements() {
        for i in 0..n_loc {
            nodal[i] = rng.random::<f64>() * 2.0 - 1.0;
        }
        let modal = to_modal * &nodal;
        out.rows_mut(e * n_loc, n_loc).copy_from(&modal);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::project_function;
    use crate::mesh::build_square_mesh;

    fn operators(refinements: u32, mu: f64) -> FomOperators {
        let space = Arc::new(DGSpace::new(build_square_mesh(10.0, refinements), 1).unwrap());
        FomOperators::new(space, 0.3, 1.0, 0.04, 1.0, mu, 10.0).unwrap()
    }

    #[test]
    fn rejects_wrong_diffusion_ordering() {
        let space = Arc::new(DGSpace::new(build_square_mesh(10.0, 0), 1).unwrap());
        assert!(FomOperators::new(space, 0.3, 1.0, 1.0, 0.04, 0.0, 10.0).is_err());
    }

    #[test]
    fn constant_one_state_is_a_fixed_point() {
        let ops = operators(1, 0.02);
        let one = project_function(ops.space(), |_, _| 1.0);
        let (u, v, iters) = fom_step(&ops, &one, &one, 0.5).unwrap();
        assert!(iters <= 1, "fixed point should need no Newton update");
        assert!((&u - &one).amax() < 1e-9);
        assert!((&v - &one).amax() < 1e-9);
    }

    #[test]
    fn zero_state_with_zero_mu_stays_zero() {
        let ops = operators(1, 0.0);
        let zero = DVector::zeros(ops.n_dofs());
        let traj = fom_solve(&ops, &zero, &zero, 0.5, 2.0, 1).unwrap();
        assert!(traj.u.amax() < 1e-10);
        assert!(traj.v.amax() < 1e-10);
    }

    #[test]
    fn small_steps_move_the_state_little() {
        let ops = operators(1, 0.03);
        let u0 = random_initial_condition(ops.space(), 11);
        let v0 = random_initial_condition(ops.space(), 12);
        let dt = 1e-6;
        // the 1/dt factor in the residual puts the default absolute
        // tolerance below the floating-point floor at this step size
        let mut stepper = FomStepper::new(&ops);
        stepper.newton_tol = 1e-6;
        let (u1, v1, _) = stepper.step(&u0, &v0, dt, dt).unwrap();
        assert!((u1 - &u0).norm() < 1e-3);
        assert!((v1 - &v0).norm() < 1e-3);
    }

    #[test]
    fn trajectory_stores_expected_columns() {
        let ops = operators(0, 0.0);
        let zero = DVector::zeros(ops.n_dofs());
        let traj = fom_solve(&ops, &zero, &zero, 0.5, 1.0, 1).unwrap();
        assert_eq!(traj.n_stored(), 3);
        assert_eq!(traj.times, vec![0.0, 0.5, 1.0]);
        assert_eq!(traj.u.ncols(), 3);
        assert_eq!(traj.nonlinear.ncols(), 3);
    }

    #[test]
    fn initial_condition_is_deterministic() {
        let space = DGSpace::new(build_square_mesh(10.0, 2), 1).unwrap();
        let a = random_initial_condition(&space, 99);
        let b = random_initial_condition(&space, 99);
        assert_eq!(a, b);
        let c = random_initial_condition(&space, 100);
        assert!(a != c);
    }

    #[test]
    fn initial_condition_nodal_values_in_range() {
        let space = DGSpace::new(build_square_mesh(10.0, 1), 1).unwrap();
        let ic = random_initial_condition(&space, 5);
        let vandermonde = space.basis().vandermonde_at_nodes();
        for e in 0..space.n_elements() {
            let local = ic.rows(e * space.n_loc(), space.n_loc()).into_owned();
            let nodal = &vandermonde * local;
            for value in nodal.iter() {
                assert!(value.abs() <= 1.0 + 1e-12, "nodal value {value} out of range");
            }
        }
    }

    #[test]
    fn initial_condition_mean_within_three_sigma() {
        // mean of 3 N_el uniform(-1,1) draws: std = (1/sqrt 3)/sqrt(3 N_el)
        let space = DGSpace::new(build_square_mesh(10.0, 3), 1).unwrap();
        let vandermonde = space.basis().vandermonde_at_nodes();
        for seed in [1, 2, 3] {
            let ic = random_initial_condition(&space, seed);
            let mut sum = 0.0;
            let mut count = 0usize;
            for e in 0..space.n_elements() {
                let local = ic.rows(e * space.n_loc(), space.n_loc()).into_owned();
                let nodal = &vandermonde * local;
                sum += nodal.sum();
                count += nodal.len();
            }
            let mean = sum / count as f64;
            let bound = 3.0 * (1.0 / 3.0f64.sqrt()) / (count as f64).sqrt();
            assert!(
                mean.abs() <= bound,
                "seed {seed}: mean {mean} exceeds 3-sigma bound {bound}"
            );
        }
    }

    #[test]
    fn newton_converges_quadratically() {
        // the first step from a rough random state needs several iterations,
        // and the tail of the history shows the quadratic decay
        let ops = operators(1, 0.02);
        let u0 = random_initial_condition(ops.space(), 21);
        let v0 = random_initial_condition(ops.space(), 22);
        let mut stepper = FomStepper::new(&ops);
        stepper.newton_tol = 1e-12;
        stepper.step(&u0, &v0, 0.5, 0.5).unwrap();
        let history = stepper.residual_history();
        assert!(history.len() >= 3, "expected several iterations: {history:?}");
        // once the residual is small, r_{k+1} / r_k^2 stays bounded
        let mut checked = 0;
        for w in history.windows(2) {
            if w[0] < 1e-1 && w[0] > 1e-11 && w[1] > 0.0 {
                let ratio = w[1] / (w[0] * w[0]);
                assert!(ratio < 1e4, "quadratic ratio {ratio} too large: {history:?}");
                checked += 1;
            }
        }
        assert!(checked >= 1, "no window probed the quadratic regime: {history:?}");
    }
}
