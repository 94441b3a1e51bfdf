//! Reduced-order time integration: backward Euler + Newton on the
//! 2k-dimensional Galerkin system, with either full nonlinear assembly
//! followed by projection, or the interpolated (DEIM) nonlinearity.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

use crate::assembly::{assemble_nonlinear, assemble_nonlinear_jacobian};
use crate::block::BlockSparseMatrix;
use crate::deim::DeimOperator;
use crate::error::{Error, Result};
use crate::pod::RomOperators;
use crate::space::DGSpace;

/// Variant of the reduced nonlinearity.
pub enum RomNonlinearity<'a> {
    /// Full-order assembly of F at the lifted state, projected back; cost
    /// scales with the mesh.
    PodGalerkin {
        space: &'a DGSpace,
        modes: &'a DMatrix<f64>,
    },
    /// Interpolated nonlinearity; cost scales with the interpolation points.
    Deim(&'a DeimOperator),
}

impl RomNonlinearity<'_> {
    /// N(u) in reduced coordinates.
    pub fn eval(&self, u_reduced: &DVector<f64>, mu: f64) -> DVector<f64> {
        match self {
            Self::PodGalerkin { space, modes } => {
                let lifted = *modes * u_reduced;
                let f = assemble_nonlinear(space, &lifted, mu);
                modes.tr_mul(&f)
            }
            Self::Deim(op) => op.eval(u_reduced, mu),
        }
    }

    /// dN/du in reduced coordinates.
    pub fn jacobian(&self, u_reduced: &DVector<f64>, mu: f64) -> DMatrix<f64> {
        match self {
            Self::PodGalerkin { space, modes } => {
                let lifted = *modes * u_reduced;
                let jf = assemble_nonlinear_jacobian(space, &lifted, mu);
                project_block_diagonal(&jf, modes)
            }
            Self::Deim(op) => op.jacobian(u_reduced, mu),
        }
    }
}

/// Psi' B Psi for a block-diagonal B, accumulated element by element.
fn project_block_diagonal(b: &BlockSparseMatrix, modes: &DMatrix<f64>) -> DMatrix<f64> {
    let k = modes.ncols();
    let n_loc = b.n_loc();
    let element_term = |e: usize| -> DMatrix<f64> {
        let block = b.block(e, e).expect("block-diagonal matrix");
        let rows = modes.rows(e * n_loc, n_loc);
        rows.tr_mul(&(block * rows))
    };
    #[cfg(feature = "parallel")]
    {
        (0..b.n_block_rows())
            .into_par_iter()
            .map(element_term)
            .reduce(|| DMatrix::zeros(k, k), |a, b| a + b)
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..b.n_block_rows())
            .map(element_term)
            .fold(DMatrix::zeros(k, k), |a, b| a + b)
    }
}

/// Reduced state at one time.
#[derive(Debug, Clone)]
pub struct RomState {
    pub u: DVector<f64>,
    pub v: DVector<f64>,
    pub time: f64,
}

/// M-orthogonal projection of a full state onto the basis: Psi' M x.
pub fn project_initial(
    modes: &DMatrix<f64>,
    mass: &BlockSparseMatrix,
    full: &DVector<f64>,
) -> DVector<f64> {
    modes.tr_mul(&mass.mul_vec(full))
}

/// Lift reduced coordinates back to the full space.
pub fn lift(modes: &DMatrix<f64>, reduced: &DVector<f64>) -> DVector<f64> {
    modes * reduced
}

pub struct RomStepper<'a> {
    ops: &'a RomOperators,
    nonlinearity: &'a RomNonlinearity<'a>,
    residual_history: Vec<f64>,
    /// Up to two states preceding the last accepted step, newest first.
    history: Vec<(DVector<f64>, DVector<f64>)>,
    pub newton_tol: f64,
    pub max_newton_iters: usize,
}

impl<'a> RomStepper<'a> {
    pub fn new(ops: &'a RomOperators, nonlinearity: &'a RomNonlinearity<'a>) -> Self {
        Self {
            ops,
            nonlinearity,
            residual_history: Vec::new(),
            history: Vec::new(),
            newton_tol: crate::fom::DEFAULT_NEWTON_TOL,
            max_newton_iters: crate::fom::DEFAULT_NEWTON_MAX_ITERS,
        }
    }

    pub fn residual_history(&self) -> &[f64] {
        &self.residual_history
    }

    fn residual(
        &self,
        u: &DVector<f64>,
        v: &DVector<f64>,
        state: &RomState,
        dt: f64,
    ) -> (DVector<f64>, DVector<f64>) {
        let ops = self.ops;
        let r_u = (u - &state.u) / dt + &ops.stiffness_u * u + ops.alpha * (&ops.mass_uv * v)
            - ops.alpha * u
            + self.nonlinearity.eval(u, ops.mu);
        let r_v = (v - &state.v) / dt + &ops.stiffness_v * v + ops.beta * v
            - ops.beta * (&ops.mass_vu * u);
        (r_u, r_v)
    }

    /// One backward-Euler step of the reduced system. Newton with the same
    /// extrapolated initial guess as the full model, plus a backtracking
    /// line search: the interpolated nonlinearity can overshoot on full
    /// steps when the state drifts off the training manifold.
    pub fn step(&mut self, state: &RomState, dt: f64) -> Result<(RomState, usize)> {
        assert!(dt > 0.0);
        let k = state.u.len();
        let tol = self.newton_tol * (2.0 * k as f64).sqrt();
        let (mut u, mut v) = match self.history.as_slice() {
            [(u1, v1), (u2, v2), ..] => {
                (3.0 * &state.u - 3.0 * u1 + u2, 3.0 * &state.v - 3.0 * v1 + v2)
            }
            [(u1, v1)] => (2.0 * &state.u - u1, 2.0 * &state.v - v1),
            [] => (state.u.clone(), state.v.clone()),
        };
        self.residual_history.clear();

        let (r_u, r_v) = self.residual(&u, &v, state, dt);
        let mut norm = (r_u.norm_squared() + r_v.norm_squared()).sqrt();
        let mut residual = (r_u, r_v);
        self.residual_history.push(norm);

        for iter in 0..=self.max_newton_iters {
            if norm <= tol {
                self.history.insert(0, (state.u.clone(), state.v.clone()));
                self.history.truncate(2);
                return Ok((
                    RomState {
                        u,
                        v,
                        time: state.time + dt,
                    },
                    iter,
                ));
            }
            if iter == self.max_newton_iters {
                break;
            }
            let ops = self.ops;
            let eye = DMatrix::identity(k, k);
            let j_n = self.nonlinearity.jacobian(&u, ops.mu);
            let block_uu = &eye / dt + &ops.stiffness_u - ops.alpha * &eye + j_n;
            let block_uv = ops.alpha * &ops.mass_uv;
            let block_vu = -ops.beta * &ops.mass_vu;
            let block_vv = &eye / dt + &ops.stiffness_v + ops.beta * &eye;

            let mut system = DMatrix::zeros(2 * k, 2 * k);
            system.view_mut((0, 0), (k, k)).copy_from(&block_uu);
            system.view_mut((0, k), (k, k)).copy_from(&block_uv);
            system.view_mut((k, 0), (k, k)).copy_from(&block_vu);
            system.view_mut((k, k), (k, k)).copy_from(&block_vv);
            let mut rhs = DVector::zeros(2 * k);
            rhs.rows_mut(0, k).copy_from(&(-&residual.0));
            rhs.rows_mut(k, k).copy_from(&(-&residual.1));
            let update = system
                .lu()
                .solve(&rhs)
                .ok_or_else(|| Error::Singular("reduced Newton matrix".into()))?;
            let du = update.rows(0, k).into_owned();
            let dv = update.rows(k, k).into_owned();

            // backtracking on the residual norm
            let mut accepted = false;
            let mut damping = 1.0;
            for _ in 0..12 {
                let u_try = &u + damping * &du;
                let v_try = &v + damping * &dv;
                let (ru_try, rv_try) = self.residual(&u_try, &v_try, state, dt);
                let norm_try = (ru_try.norm_squared() + rv_try.norm_squared()).sqrt();
                if norm_try <= (1.0 - 1e-4 * damping) * norm {
                    u = u_try;
                    v = v_try;
                    norm = norm_try;
                    residual = (ru_try, rv_try);
                    accepted = true;
                    break;
                }
                damping *= 0.5;
            }
            self.residual_history.push(norm);
            if !accepted {
                break;
            }
        }
        Err(Error::NewtonDiverged {
            time: state.time + dt,
            residual: *self.residual_history.last().unwrap(),
            iterations: self.residual_history.len() - 1,
        })
    }
}

/// Reduced trajectory, one column per step (including t = 0).
#[derive(Debug, Clone)]
pub struct RomTrajectory {
    pub times: Vec<f64>,
    pub u: DMatrix<f64>,
    pub v: DMatrix<f64>,
    /// Wall-clock seconds inside the stepping loop only.
    pub wall_seconds: f64,
    pub mean_newton_iters: f64,
}

impl RomTrajectory {
    pub fn final_u(&self) -> DVector<f64> {
        self.u.column(self.u.ncols() - 1).into_owned()
    }

    pub fn final_v(&self) -> DVector<f64> {
        self.v.column(self.v.ncols() - 1).into_owned()
    }
}

/// Integrate the reduced system on the same grid as the full model.
pub fn rom_solve(
    ops: &RomOperators,
    nonlinearity: &RomNonlinearity,
    u0: DVector<f64>,
    v0: DVector<f64>,
    dt: f64,
    t_final: f64,
) -> Result<RomTrajectory> {
    assert!(t_final > 0.0 && dt > 0.0);
    let n_steps = (t_final / dt).ceil() as usize;
    let mut stepper = RomStepper::new(ops, nonlinearity);
    let mut state = RomState {
        u: u0,
        v: v0,
        time: 0.0,
    };
    let mut times = vec![0.0];
    let mut u_cols = vec![state.u.clone()];
    let mut v_cols = vec![state.v.clone()];
    let mut wall = 0.0;
    let mut total_iters = 0usize;
    for _ in 0..n_steps {
        let clock = Instant::now();
        let (next, iters) = stepper.step(&state, dt)?;
        wall += clock.elapsed().as_secs_f64();
        total_iters += iters;
        state = next;
        times.push(state.time);
        u_cols.push(state.u.clone());
        v_cols.push(state.v.clone());
    }
    Ok(RomTrajectory {
        times,
        u: DMatrix::from_columns(&u_cols),
        v: DMatrix::from_columns(&v_cols),
        wall_seconds: wall,
        mean_newton_iters: total_iters as f64 / n_steps as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::{assemble_mass, assemble_stiffness_sipg, project_function};
    use crate::mesh::build_square_mesh;
    use crate::numerics::cholesky;
    use crate::pod::{compute_pod_basis, reduce_operators, ModeSelection, PodBasis};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn full_rank_setup(
        refinements: u32,
        mu: f64,
    ) -> (DGSpace, BlockSparseMatrix, PodBasis, RomOperators) {
        let space = DGSpace::new(build_square_mesh(10.0, refinements), 1).unwrap();
        let mass = assemble_mass(&space);
        let s_u = assemble_stiffness_sipg(&space, 0.04, 10.0).unwrap();
        let s_v = assemble_stiffness_sipg(&space, 1.0, 10.0).unwrap();
        let factor = cholesky(&mass).unwrap();
        let n = space.n_dofs();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        // full-rank snapshot set -> the basis spans the whole space
        let snapshots = DMatrix::from_fn(n, 2 * n, |_, _| rng.random::<f64>() * 2.0 - 1.0);
        let basis = compute_pod_basis(&snapshots, &factor, ModeSelection::Count(n)).unwrap();
        let ops = reduce_operators(&basis, &basis, &mass, &s_u, &s_v, 0.3, 1.0, mu).unwrap();
        (space, mass, basis, ops)
    }

    #[test]
    fn projection_identity_at_initialization() {
        let (space, mass, basis, _) = full_rank_setup(0, 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let u0 = DVector::from_fn(space.n_dofs(), |_, _| rng.random::<f64>() - 0.5);
        let reduced = project_initial(&basis.modes, &mass, &u0);
        let relifted = project_initial(&basis.modes, &mass, &lift(&basis.modes, &reduced));
        assert!((relifted - &reduced).amax() <= 1e-10);
    }

    #[test]
    fn equilibrium_state_needs_no_update() {
        let (space, mass, basis, ops) = full_rank_setup(0, 0.02);
        let ones = project_function(&space, |_, _| 1.0);
        let u0 = project_initial(&basis.modes, &mass, &ones);
        let state = RomState {
            u: u0.clone(),
            v: u0.clone(),
            time: 0.0,
        };
        let nonlin = RomNonlinearity::PodGalerkin {
            space: &space,
            modes: &basis.modes,
        };
        let mut stepper = RomStepper::new(&ops, &nonlin);
        let (next, iters) = stepper.step(&state, 0.5).unwrap();
        assert!(iters <= 1);
        assert!((next.u - u0).amax() < 1e-8);
    }

    /// With the complete basis the reduced step reproduces the full-order
    /// step: Galerkin with k = N is an exact change of coordinates.
    #[test]
    fn full_basis_rom_step_reproduces_fom_step() {
        use crate::fom::{fom_step, FomOperators};
        use std::sync::Arc;
        let (space, mass, basis, ops) = full_rank_setup(0, 0.03);
        let space_arc = Arc::new(space);
        let fom_ops =
            FomOperators::new(Arc::clone(&space_arc), 0.3, 1.0, 0.04, 1.0, 0.03, 10.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let u0 = DVector::from_fn(fom_ops.n_dofs(), |_, _| 0.5 * (rng.random::<f64>() - 0.5));
        let v0 = DVector::from_fn(fom_ops.n_dofs(), |_, _| 0.5 * (rng.random::<f64>() - 0.5));
        let dt = 0.5;
        let (u_full, v_full, _) = fom_step(&fom_ops, &u0, &v0, dt).unwrap();

        let state = RomState {
            u: project_initial(&basis.modes, &mass, &u0),
            v: project_initial(&basis.modes, &mass, &v0),
            time: 0.0,
        };
        let nonlin = RomNonlinearity::PodGalerkin {
            space: &space_arc,
            modes: &basis.modes,
        };
        let mut stepper = RomStepper::new(&ops, &nonlin);
        stepper.newton_tol = 1e-12;
        let (next, _) = stepper.step(&state, dt).unwrap();
        let u_lifted = lift(&basis.modes, &next.u);
        let v_lifted = lift(&basis.modes, &next.v);
        assert!((u_lifted - u_full).amax() <= 1e-8);
        assert!((v_lifted - v_full).amax() <= 1e-8);
    }

    /// The reduced residual of the lifted state equals the projected
    /// full-order residual (Galerkin consistency).
    #[test]
    fn galerkin_residual_consistency() {
        let (space, mass, basis, ops) = full_rank_setup(0, 0.01);
        let n = space.n_dofs();
        let s_u = assemble_stiffness_sipg(&space, 0.04, 10.0).unwrap();
        let s_v = assemble_stiffness_sipg(&space, 1.0, 10.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let u_prev = DVector::from_fn(n, |_, _| rng.random::<f64>() - 0.5);
        let v_prev = DVector::from_fn(n, |_, _| rng.random::<f64>() - 0.5);
        let u = DVector::from_fn(n, |_, _| rng.random::<f64>() - 0.5);
        let v = DVector::from_fn(n, |_, _| rng.random::<f64>() - 0.5);
        let dt = 0.5;
        let mu = 0.01;

        // full-order residual, premultiplied by M^{-1}-free Galerkin form:
        // Psi' [ M du + S u + alpha M (v-u) + F ] with du = (u - u_prev)/dt
        let f = crate::assembly::assemble_nonlinear(&space, &u, mu);
        let r_full_u = mass.mul_vec(&((&u - &u_prev) / dt))
            + s_u.mul_vec(&u)
            + 0.3 * mass.mul_vec(&(&v - &u))
            + f;
        let r_full_v = mass.mul_vec(&((&v - &v_prev) / dt))
            + s_v.mul_vec(&v)
            + 1.0 * mass.mul_vec(&(&v - &u));
        let projected_u = basis.modes.tr_mul(&r_full_u);
        let projected_v = basis.modes.tr_mul(&r_full_v);

        let state = RomState {
            u: project_initial(&basis.modes, &mass, &u_prev),
            v: project_initial(&basis.modes, &mass, &v_prev),
            time: 0.0,
        };
        let nonlin = RomNonlinearity::PodGalerkin {
            space: &space,
            modes: &basis.modes,
        };
        let stepper = RomStepper::new(&ops, &nonlin);
        let (r_u, r_v) = stepper.residual(
            &project_initial(&basis.modes, &mass, &u),
            &project_initial(&basis.modes, &mass, &v),
            &state,
            dt,
        );
        assert!((r_u - projected_u).amax() <= 1e-10);
        assert!((r_v - projected_v).amax() <= 1e-10);
    }

    #[test]
    fn trajectory_shape() {
        let (space, mass, basis, ops) = full_rank_setup(0, 0.0);
        let ones = project_function(&space, |_, _| 1.0);
        let u0 = project_initial(&basis.modes, &mass, &ones);
        let nonlin = RomNonlinearity::PodGalerkin {
            space: &space,
            modes: &basis.modes,
        };
        let traj = rom_solve(&ops, &nonlin, u0.clone(), u0, 0.5, 1.0).unwrap();
        assert_eq!(traj.times, vec![0.0, 0.5, 1.0]);
        assert_eq!(traj.u.ncols(), 3);
    }
}
