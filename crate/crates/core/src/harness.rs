//! Experiment orchestration: offline snapshot generation and basis
//! construction, online benchmark runs, report and figure emission, and a
//! fast invariant check suite.
//!
//! Artifacts live in one output directory together with a JSON manifest that
//! records the configuration hash and the validity of every file, so the
//! online phase can refuse stale or half-written inputs.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

use crate::assembly::{
    assemble_mass, assemble_nonlinear, assemble_nonlinear_jacobian, assemble_stiffness_sipg,
    project_function,
};
use crate::block::BlockSparseMatrix;
use crate::deim::{build_deim_operator, deim_select, DeimOperator};
use crate::error::{Error, Result};
use crate::fom::{fom_solve, random_initial_condition, FomOperators, Trajectory};
use crate::io;
use crate::mesh::{build_square_mesh, check_face_connectivity};
use crate::numerics::{cholesky, thin_svd_left};
use crate::pod::{
    basis_from_spectrum, compute_pod_basis, numerical_rank, orthonormality_defect,
    reduce_operators, select_mode_count, weighted_spectrum, ModeSelection, PodBasis, RomOperators,
};
use crate::rom::{lift, project_initial, rom_solve, RomNonlinearity};
use crate::space::DGSpace;

/// Full experiment description. Defaults reproduce the benchmark setup:
/// the square of half-width 10 refined 5 times, linear elements, snapshots
/// on [0, 1000] with dt = 0.5, five training and four test parameters.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub half_width: f64,
    pub refinements: u32,
    pub degree: usize,
    pub d_u: f64,
    pub d_v: f64,
    pub alpha: f64,
    pub beta: f64,
    pub dt: f64,
    pub t_final: f64,
    pub train_mu: Vec<f64>,
    pub test_mu: Vec<f64>,
    pub seed: u64,
    /// Energy fraction used when no explicit mode count is given.
    pub energy_fraction: f64,
    /// Explicit solution-basis size; overrides the energy criterion.
    pub modes: Option<usize>,
    /// Explicit interpolation-basis size; overrides the energy criterion.
    pub deim_modes: Option<usize>,
    pub snapshot_stride: usize,
    pub penalty: f64,
    pub newton_tol: f64,
    pub newton_max_iters: usize,
    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            half_width: 10.0,
            refinements: 5,
            degree: 1,
            d_u: 0.04,
            d_v: 1.0,
            alpha: 0.3,
            beta: 1.0,
            dt: 0.5,
            t_final: 1000.0,
            train_mu: vec![-0.04, -0.02, 0.0, 0.02, 0.04],
            test_mu: vec![-0.03, -0.01, 0.01, 0.03],
            seed: 2016,
            energy_fraction: 0.9999,
            modes: None,
            deim_modes: None,
            snapshot_stride: 1,
            penalty: 10.0,
            newton_tol: 1e-9,
            newton_max_iters: 25,
            output_dir: PathBuf::from("out"),
        }
    }
}

impl ExperimentConfig {
    /// Scaled-down variant for quick runs and tests.
    pub fn desk_scale(refinements: u32, t_final: f64, output_dir: PathBuf) -> Self {
        Self {
            refinements,
            t_final,
            output_dir,
            ..Self::default()
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let config: Self = serde_json::from_str(&text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::InvalidInput(msg));
        if self.half_width <= 0.0 {
            return fail(format!("half_width must be positive, got {}", self.half_width));
        }
        if !(1..=2).contains(&self.degree) {
            return fail(format!("degree must be 1 or 2, got {}", self.degree));
        }
        if self.dt <= 0.0 || self.t_final <= 0.0 {
            return fail("dt and t_final must be positive".into());
        }
        if self.train_mu.is_empty() || self.test_mu.is_empty() {
            return fail("training and test parameter sets must be non-empty".into());
        }
        if self.d_u <= 0.0 || self.d_v <= self.d_u {
            return fail(format!(
                "diffusion must satisfy 0 < d_u < d_v, got d_u = {}, d_v = {}",
                self.d_u, self.d_v
            ));
        }
        if self.alpha <= 0.0 || self.beta <= 0.0 {
            return fail("alpha and beta must be positive".into());
        }
        if !(self.energy_fraction > 0.0 && self.energy_fraction <= 1.0) {
            return fail(format!(
                "energy_fraction must lie in (0, 1], got {}",
                self.energy_fraction
            ));
        }
        if self.snapshot_stride == 0 {
            return fail("snapshot_stride must be at least 1".into());
        }
        if let Some(k) = self.modes {
            if k == 0 {
                return fail("modes must be positive when given".into());
            }
        }
        if let Some(n) = self.deim_modes {
            if n == 0 {
                return fail("deim_modes must be positive when given".into());
            }
        }
        Ok(())
    }

    /// Hash of the configuration, ignoring the output location.
    pub fn hash(&self) -> String {
        let mut normalized = self.clone();
        normalized.output_dir = PathBuf::new();
        let json = serde_json::to_string(&normalized).expect("config serializes");
        let digest = Sha256::digest(json.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn solution_mode_selection(&self) -> ModeSelection {
        match self.modes {
            Some(k) => ModeSelection::Count(k),
            None => ModeSelection::EnergyFraction(self.energy_fraction),
        }
    }

    /// Interpolation-basis selection. By default the tail energy left out of
    /// the interpolation space is the square of the solution-basis tail:
    /// the interpolation error is amplified by ||(P'W)^{-1}||_2 (order 10 to
    /// 10^2), so the interpolation tail must sit roughly two orders below
    /// the solution tail before both contribute comparably. At the plain
    /// solution fraction the reduced dynamics were observed to destabilize.
    pub fn deim_mode_selection(&self) -> ModeSelection {
        match self.deim_modes {
            Some(n) => ModeSelection::Count(n),
            None => {
                let tail = 1.0 - self.energy_fraction;
                ModeSelection::EnergyFraction(1.0 - tail * tail)
            }
        }
    }

    fn n_steps(&self) -> usize {
        (self.t_final / self.dt).ceil() as usize
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ArtifactEntry {
    pub name: String,
    pub file: String,
    pub rows: u64,
    pub cols: u64,
    pub valid: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainRunStat {
    pub mu: f64,
    pub wall_seconds: f64,
    pub mean_newton_iters: f64,
    pub stored_columns: usize,
}

/// Inventory of the offline phase.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub config: ExperimentConfig,
    pub config_hash: String,
    pub artifacts: Vec<ArtifactEntry>,
    pub modes: usize,
    pub deim_modes: usize,
    pub offline_seconds: f64,
    pub train_stats: Vec<TrainRunStat>,
}

impl Manifest {
    fn path_in(dir: &Path) -> PathBuf {
        dir.join("manifest.json")
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = Self::path_in(dir);
        if !path.exists() {
            return Err(Error::Artifact(format!(
                "no manifest at {}; run the offline phase first",
                path.display()
            )));
        }
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::write(Self::path_in(dir), serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    /// Path of a valid artifact; refuses missing or invalid entries.
    pub fn artifact(&self, dir: &Path, name: &str) -> Result<PathBuf> {
        let entry = self
            .artifacts
            .iter()
            .find(|a| a.name == name)
            .ok_or_else(|| Error::Artifact(format!("artifact '{name}' not in manifest")))?;
        if !entry.valid {
            return Err(Error::Artifact(format!(
                "artifact '{name}' is marked invalid (incomplete write)"
            )));
        }
        Ok(dir.join(&entry.file))
    }

    fn begin_artifact(&mut self, dir: &Path, name: &str, file: &str, rows: u64, cols: u64) -> Result<()> {
        self.artifacts.retain(|a| a.name != name);
        self.artifacts.push(ArtifactEntry {
            name: name.into(),
            file: file.into(),
            rows,
            cols,
            valid: false,
        });
        self.save(dir)
    }

    fn finish_artifact(&mut self, dir: &Path, name: &str) -> Result<()> {
        if let Some(entry) = self.artifacts.iter_mut().find(|a| a.name == name) {
            entry.valid = true;
        }
        self.save(dir)
    }
}

fn write_matrix_artifact(
    manifest: &mut Manifest,
    dir: &Path,
    name: &str,
    file: &str,
    matrix: &DMatrix<f64>,
) -> Result<()> {
    manifest.begin_artifact(dir, name, file, matrix.nrows() as u64, matrix.ncols() as u64)?;
    io::write_matrix(&dir.join(file), matrix)?;
    manifest.finish_artifact(dir, name)
}

fn write_vector_artifact(
    manifest: &mut Manifest,
    dir: &Path,
    name: &str,
    file: &str,
    vector: &DVector<f64>,
) -> Result<()> {
    manifest.begin_artifact(dir, name, file, vector.len() as u64, 1)?;
    io::write_vector(&dir.join(file), vector)?;
    manifest.finish_artifact(dir, name)
}

/// Summary returned by the offline phase.
#[derive(Debug, Clone)]
pub struct OfflineSummary {
    pub modes: usize,
    pub deim_modes: usize,
    pub offline_seconds: f64,
    pub snapshot_columns: usize,
    pub output_dir: PathBuf,
}

fn build_space(config: &ExperimentConfig) -> Result<Arc<DGSpace>> {
    let mesh = build_square_mesh(config.half_width, config.refinements);
    Ok(Arc::new(DGSpace::new(mesh, config.degree)?))
}

fn build_operators(config: &ExperimentConfig, space: Arc<DGSpace>) -> Result<FomOperators> {
    FomOperators::new(
        space,
        config.alpha,
        config.beta,
        config.d_u,
        config.d_v,
        0.0,
        config.penalty,
    )
}

fn initial_conditions(config: &ExperimentConfig, space: &DGSpace) -> (DVector<f64>, DVector<f64>) {
    // one seed governs both fields so only mu varies between runs
    let u0 = random_initial_condition(space, config.seed);
    let v0 = random_initial_condition(space, config.seed.wrapping_add(1));
    (u0, v0)
}

fn run_training_sweep(
    config: &ExperimentConfig,
    ops: &FomOperators,
    u0: &DVector<f64>,
    v0: &DVector<f64>,
) -> Result<Vec<(f64, Trajectory)>> {
    let solve = |&mu: &f64| -> Result<(f64, Trajectory)> {
        let ops_mu = ops.with_mu(mu);
        let traj = fom_solve(&ops_mu, u0, v0, config.dt, config.t_final, config.snapshot_stride)?;
        Ok((mu, traj))
    };
    #[cfg(feature = "parallel")]
    let runs: Result<Vec<_>> = config.train_mu.par_iter().map(solve).collect();
    #[cfg(not(feature = "parallel"))]
    let runs: Result<Vec<_>> = config.train_mu.iter().map(solve).collect();
    runs
}

/// Concatenate stored snapshot files of one field, dropping each run's t = 0
/// column (the random initial state is not a solution feature).
fn concat_snapshots(dir: &Path, manifest: &Manifest, field: &str, n_runs: usize) -> Result<DMatrix<f64>> {
    let mut blocks = Vec::new();
    let mut total_cols = 0;
    for i in 0..n_runs {
        let path = manifest.artifact(dir, &format!("snapshots_{field}_{i}"))?;
        let m = io::read_matrix(&path)?;
        if m.ncols() < 2 {
            return Err(Error::Artifact(format!(
                "snapshot file {} has fewer than 2 columns",
                path.display()
            )));
        }
        let cols = m.columns(1, m.ncols() - 1).into_owned();
        total_cols += cols.ncols();
        blocks.push(cols);
    }
    let rows = blocks[0].nrows();
    let mut out = DMatrix::zeros(rows, total_cols);
    let mut at = 0;
    for block in blocks {
        out.columns_mut(at, block.ncols()).copy_from(&block);
        at += block.ncols();
    }
    Ok(out)
}

/// Offline phase: training sweeps, snapshot persistence, basis and
/// interpolation construction.
pub fn run_offline(config: &ExperimentConfig) -> Result<OfflineSummary> {
    config.validate()?;
    let clock = Instant::now();
    let dir = config.output_dir.clone();
    fs::create_dir_all(&dir)?;

    let space = build_space(config)?;
    let ops = build_operators(config, Arc::clone(&space))?;
    let (u0, v0) = initial_conditions(config, &space);

    let mut manifest = Manifest {
        config: config.clone(),
        config_hash: config.hash(),
        artifacts: Vec::new(),
        modes: 0,
        deim_modes: 0,
        offline_seconds: 0.0,
        train_stats: Vec::new(),
    };
    manifest.save(&dir)?;

    // training sweeps
    let runs = run_training_sweep(config, &ops, &u0, &v0)?;
    for (i, (mu, traj)) in runs.iter().enumerate() {
        manifest.train_stats.push(TrainRunStat {
            mu: *mu,
            wall_seconds: traj.wall_seconds,
            mean_newton_iters: traj.mean_newton_iters,
            stored_columns: traj.n_stored(),
        });
        for (field, data) in [("u", &traj.u), ("v", &traj.v), ("f", &traj.nonlinear)] {
            write_matrix_artifact(
                &mut manifest,
                &dir,
                &format!("snapshots_{field}_{i}"),
                &format!("snapshots_{field}_{i}.bin"),
                data,
            )?;
        }
    }
    let n_runs = runs.len();
    let snapshot_columns = runs.iter().map(|(_, t)| t.n_stored() - 1).sum();
    drop(runs);

    // solution bases, one field at a time to bound memory; the reduced
    // system uses one k for both fields, so the mode count is the larger of
    // the two per-field selections (capped by the achievable ranks)
    let mass_factor = cholesky(ops.mass())?;
    let selection = config.solution_mode_selection();

    let snapshots_u = concat_snapshots(&dir, &manifest, "u", n_runs)?;
    let (left_u, sigma_u) = weighted_spectrum(&snapshots_u, &mass_factor)?;
    drop(snapshots_u);
    let snapshots_v = concat_snapshots(&dir, &manifest, "v", n_runs)?;
    let (left_v, sigma_v) = weighted_spectrum(&snapshots_v, &mass_factor)?;
    drop(snapshots_v);

    let k_u = select_mode_count(&sigma_u, selection)?;
    let k_v = select_mode_count(&sigma_v, selection)?;
    let k = k_u
        .max(k_v)
        .min(numerical_rank(&sigma_u))
        .min(numerical_rank(&sigma_v));
    let basis_u = basis_from_spectrum(&left_u, &sigma_u, &mass_factor, k)?;
    drop(left_u);
    let basis_v = basis_from_spectrum(&left_v, &sigma_v, &mass_factor, k)?;
    drop(left_v);
    write_matrix_artifact(&mut manifest, &dir, "basis_u", "basis_u.bin", &basis_u.modes)?;
    write_vector_artifact(&mut manifest, &dir, "sigma_u", "sigma_u.bin", &basis_u.singular_values)?;
    write_matrix_artifact(&mut manifest, &dir, "basis_v", "basis_v.bin", &basis_v.modes)?;
    write_vector_artifact(&mut manifest, &dir, "sigma_v", "sigma_v.bin", &basis_v.singular_values)?;

    // interpolation basis from the nonlinear snapshots (Euclidean SVD)
    let snapshots_f = concat_snapshots(&dir, &manifest, "f", n_runs)?;
    let (w_full, sigma_f) = thin_svd_left(&snapshots_f);
    drop(snapshots_f);
    let n_deim = select_mode_count(&sigma_f, config.deim_mode_selection())?;
    let w = w_full.columns(0, n_deim).into_owned();
    drop(w_full);
    let indices = deim_select(&w)?;
    let deim_op = build_deim_operator(&basis_u.modes, &w, &indices, &space)?;

    write_matrix_artifact(&mut manifest, &dir, "deim_w", "deim_w.bin", &w)?;
    write_vector_artifact(&mut manifest, &dir, "sigma_f", "sigma_f.bin", &sigma_f)?;
    write_matrix_artifact(&mut manifest, &dir, "deim_q", "deim_q.bin", deim_op.projector())?;
    manifest.begin_artifact(&dir, "deim_p", "deim_p.csv", indices.len() as u64, 1)?;
    io::write_indices_csv(&dir.join("deim_p.csv"), &indices)?;
    manifest.finish_artifact(&dir, "deim_p")?;

    manifest.modes = basis_u.k();
    manifest.deim_modes = n_deim;
    manifest.offline_seconds = clock.elapsed().as_secs_f64();
    manifest.save(&dir)?;

    Ok(OfflineSummary {
        modes: manifest.modes,
        deim_modes: manifest.deim_modes,
        offline_seconds: manifest.offline_seconds,
        snapshot_columns,
        output_dir: dir,
    })
}

/// Timings, speed-ups and errors of one test parameter.
#[derive(Debug, Clone)]
pub struct CaseMetrics {
    pub fom_seconds: f64,
    pub pod_seconds: f64,
    pub deim_seconds: f64,
    pub s_pod: f64,
    pub s_deim: f64,
    pub pod_error: f64,
    pub deim_error: f64,
    pub fom_mean_newton_iters: f64,
    pub final_u_fom: DVector<f64>,
    pub final_u_pod: DVector<f64>,
    pub final_u_deim: DVector<f64>,
}

#[derive(Debug, Clone)]
pub enum CaseOutcome {
    Success(Box<CaseMetrics>),
    Failed(String),
}

#[derive(Debug, Clone)]
pub struct CaseReport {
    pub mu: f64,
    pub outcome: CaseOutcome,
}

/// Everything the online phase measured, plus the offline spectra needed for
/// the figures.
#[derive(Debug, Clone)]
pub struct BenchmarkReport {
    pub cases: Vec<CaseReport>,
    pub sigma_u: DVector<f64>,
    pub sigma_v: DVector<f64>,
    pub sigma_f: DVector<f64>,
    pub deim_bound: f64,
    pub modes: usize,
    pub deim_modes: usize,
}

fn relative_m_error(mass: &BlockSparseMatrix, approx: &DVector<f64>, reference: &DVector<f64>) -> f64 {
    let diff = approx - reference;
    let num = diff.dot(&mass.mul_vec(&diff)).sqrt();
    let den = reference.dot(&mass.mul_vec(reference)).sqrt();
    num / den
}

struct LoadedArtifacts {
    basis_u: PodBasis,
    basis_v: PodBasis,
    sigma_f: DVector<f64>,
    deim: DeimOperator,
}

fn load_artifacts(
    config: &ExperimentConfig,
    manifest: &Manifest,
    space: &DGSpace,
) -> Result<LoadedArtifacts> {
    let dir = &config.output_dir;
    let modes_u = io::read_matrix(&manifest.artifact(dir, "basis_u")?)?;
    let sigma_u = io::read_vector(&manifest.artifact(dir, "sigma_u")?)?;
    let modes_v = io::read_matrix(&manifest.artifact(dir, "basis_v")?)?;
    let sigma_v = io::read_vector(&manifest.artifact(dir, "sigma_v")?)?;
    let w = io::read_matrix(&manifest.artifact(dir, "deim_w")?)?;
    let sigma_f = io::read_vector(&manifest.artifact(dir, "sigma_f")?)?;
    let q = io::read_matrix(&manifest.artifact(dir, "deim_q")?)?;
    let indices = io::read_indices_csv(&manifest.artifact(dir, "deim_p")?)?;
    let deim = DeimOperator::from_parts(&modes_u, w, indices, q, space)?;
    Ok(LoadedArtifacts {
        basis_u: PodBasis {
            modes: modes_u,
            singular_values: sigma_u,
        },
        basis_v: PodBasis {
            modes: modes_v,
            singular_values: sigma_v,
        },
        sigma_f,
        deim,
    })
}

fn run_case(
    config: &ExperimentConfig,
    ops: &FomOperators,
    rom_ops: &RomOperators,
    artifacts: &LoadedArtifacts,
    space: &DGSpace,
    u0: &DVector<f64>,
    v0: &DVector<f64>,
    mu: f64,
) -> Result<CaseMetrics> {
    let mass = ops.mass();
    let n_steps = config.n_steps();

    // reference full-order run (stores only t = 0 and the final state)
    let ops_mu = ops.with_mu(mu);
    let fom = fom_solve(&ops_mu, u0, v0, config.dt, config.t_final, n_steps)?;
    let u_ref = fom.final_u();

    let u_red0 = project_initial(&artifacts.basis_u.modes, mass, u0);
    let v_red0 = project_initial(&artifacts.basis_v.modes, mass, v0);
    let rom_ops_mu = rom_ops.with_mu(mu);

    let pod_nonlin = RomNonlinearity::PodGalerkin {
        space,
        modes: &artifacts.basis_u.modes,
    };
    let pod = rom_solve(
        &rom_ops_mu,
        &pod_nonlin,
        u_red0.clone(),
        v_red0.clone(),
        config.dt,
        config.t_final,
    )?;

    let deim_nonlin = RomNonlinearity::Deim(&artifacts.deim);
    let deim = rom_solve(
        &rom_ops_mu,
        &deim_nonlin,
        u_red0,
        v_red0,
        config.dt,
        config.t_final,
    )?;

    let final_u_pod = lift(&artifacts.basis_u.modes, &pod.final_u());
    let final_u_deim = lift(&artifacts.basis_u.modes, &deim.final_u());
    Ok(CaseMetrics {
        fom_seconds: fom.wall_seconds,
        pod_seconds: pod.wall_seconds,
        deim_seconds: deim.wall_seconds,
        s_pod: fom.wall_seconds / pod.wall_seconds,
        s_deim: fom.wall_seconds / deim.wall_seconds,
        pod_error: relative_m_error(mass, &final_u_pod, &u_ref),
        deim_error: relative_m_error(mass, &final_u_deim, &u_ref),
        fom_mean_newton_iters: fom.mean_newton_iters,
        final_u_fom: u_ref,
        final_u_pod,
        final_u_deim,
    })
}

/// Online phase: for every test parameter, run the full model for reference
/// and timing, then both reduced variants; collect errors and speed-ups.
pub fn run_online(config: &ExperimentConfig) -> Result<BenchmarkReport> {
    config.validate()?;
    let dir = &config.output_dir;
    let manifest = Manifest::load(dir)?;
    if manifest.config_hash != config.hash() {
        return Err(Error::Artifact(
            "offline artifacts were produced with a different configuration; rerun offline".into(),
        ));
    }

    let space = build_space(config)?;
    let ops = build_operators(config, Arc::clone(&space))?;
    let artifacts = load_artifacts(config, &manifest, &space)?;
    let rom_ops = reduce_operators(
        &artifacts.basis_u,
        &artifacts.basis_v,
        ops.mass(),
        ops.stiffness_u(),
        ops.stiffness_v(),
        config.alpha,
        config.beta,
        0.0,
    )?;
    let deim_bound = artifacts.deim.error_bound_factor()?;
    let (u0, v0) = initial_conditions(config, &space);

    let case = |&mu: &f64| -> CaseReport {
        let outcome = match run_case(config, &ops, &rom_ops, &artifacts, &space, &u0, &v0, mu) {
            Ok(metrics) => CaseOutcome::Success(Box::new(metrics)),
            Err(e) => CaseOutcome::Failed(e.to_string()),
        };
        CaseReport { mu, outcome }
    };
    #[cfg(feature = "parallel")]
    let cases: Vec<CaseReport> = config.test_mu.par_iter().map(case).collect();
    #[cfg(not(feature = "parallel"))]
    let cases: Vec<CaseReport> = config.test_mu.iter().map(case).collect();

    let report = BenchmarkReport {
        cases,
        sigma_u: artifacts.basis_u.singular_values.clone(),
        sigma_v: artifacts.basis_v.singular_values.clone(),
        sigma_f: artifacts.sigma_f.clone(),
        deim_bound,
        modes: manifest.modes,
        deim_modes: manifest.deim_modes,
    };
    emit_figures(&report, &space, dir)?;
    Ok(report)
}

/// Mean of the represented function over each element.
pub fn cell_averages(space: &DGSpace, coefficients: &DVector<f64>) -> Vec<f64> {
    let n_loc = space.n_loc();
    let quad = space.volume_quadrature();
    (0..space.n_elements())
        .map(|e| {
            let det = space.mesh().affine_map(e).det;
            let area = space.mesh().element_area(e);
            let local = &coefficients.as_slice()[e * n_loc..(e + 1) * n_loc];
            let integral: f64 = quad
                .weights
                .iter()
                .enumerate()
                .map(|(q, &w)| w * det * space.value_at_quad(local, q))
                .sum();
            integral / area
        })
        .collect()
}

/// Write the spectra CSV, the timing table and the final-time pattern files.
pub fn emit_figures(report: &BenchmarkReport, space: &DGSpace, dir: &Path) -> Result<Vec<PathBuf>> {
    use std::fmt::Write as _;
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();

    let mut csv = String::from("field,index,sigma\n");
    for (field, sigma) in [
        ("u", &report.sigma_u),
        ("v", &report.sigma_v),
        ("f", &report.sigma_f),
    ] {
        for (i, s) in sigma.iter().enumerate() {
            writeln!(csv, "{field},{i},{s:e}").unwrap();
        }
    }
    let spectra_path = dir.join("singular_values.csv");
    fs::write(&spectra_path, csv).map_err(|e| {
        Error::Artifact(format!("writing {}: {e}", spectra_path.display()))
    })?;
    written.push(spectra_path);

    let mut csv = String::from(
        "mu,fom_seconds,pod_seconds,deim_seconds,s_pod,s_deim,deim_bound,pod_error,deim_error,error\n",
    );
    for case in &report.cases {
        match &case.outcome {
            CaseOutcome::Success(m) => {
                writeln!(
                    csv,
                    "{},{:.6},{:.6},{:.6},{:.4},{:.4},{:.6e},{:.6e},{:.6e},",
                    case.mu,
                    m.fom_seconds,
                    m.pod_seconds,
                    m.deim_seconds,
                    m.s_pod,
                    m.s_deim,
                    report.deim_bound,
                    m.pod_error,
                    m.deim_error
                )
                .unwrap();
            }
            CaseOutcome::Failed(msg) => {
                writeln!(csv, "{},,,,,,,,,{}", case.mu, msg.replace(',', ";")).unwrap();
            }
        }
    }
    let timings_path = dir.join("timings.csv");
    fs::write(&timings_path, csv)
        .map_err(|e| Error::Artifact(format!("writing {}: {e}", timings_path.display())))?;
    written.push(timings_path);

    for case in &report.cases {
        if let CaseOutcome::Success(m) = &case.outcome {
            for (variant, state) in [
                ("fom", &m.final_u_fom),
                ("pod", &m.final_u_pod),
                ("deim", &m.final_u_deim),
            ] {
                let path = dir.join(format!("pattern_{variant}_{:+.3}.vtk", case.mu));
                let averages = cell_averages(space, state);
                io::write_vtk_cell_scalars(
                    &path,
                    space.mesh(),
                    &format!("activator pattern, mu = {}", case.mu),
                    &[("u", &averages)],
                )
                .map_err(|e| Error::Artifact(format!("writing {}: {e}", path.display())))?;
                written.push(path);
            }
        }
    }
    Ok(written)
}

/// Offline phase followed by the online benchmark.
pub fn run_full(config: &ExperimentConfig) -> Result<(OfflineSummary, BenchmarkReport)> {
    let offline = run_offline(config)?;
    let report = run_online(config)?;
    Ok((offline, report))
}

/// One entry of the invariant check suite.
#[derive(Debug, Clone)]
pub struct CheckItem {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone)]
pub struct CheckReport {
    pub items: Vec<CheckItem>,
}

impl CheckReport {
    pub fn all_passed(&self) -> bool {
        self.items.iter().all(|i| i.passed)
    }
}

/// Fast battery of structural invariants on a small problem.
pub fn run_check(refinements: u32) -> Result<CheckReport> {
    let mut items = Vec::new();
    let mut check = |name: &str, passed: bool, detail: String| {
        items.push(CheckItem {
            name: name.into(),
            passed,
            detail,
        });
    };

    let mesh = build_square_mesh(10.0, refinements);
    let report = check_face_connectivity(&mesh);
    check(
        "mesh connectivity",
        report.is_ok(),
        format!(
            "{} interior, {} boundary faces",
            report.interior_faces, report.boundary_faces
        ),
    );
    let area = mesh.total_area();
    check(
        "mesh area",
        (area - 400.0).abs() / 400.0 <= 1e-12,
        format!("total area {area}"),
    );

    let space = Arc::new(DGSpace::new(mesh, 1)?);
    let mass = assemble_mass(&space);
    let factor = cholesky(&mass);
    check(
        "mass matrix SPD",
        factor.is_ok(),
        "block Cholesky succeeded".into(),
    );
    let factor = factor?;

    let s = assemble_stiffness_sipg(&space, 1.0, 10.0)?;
    let asym = s.max_asymmetry();
    check("stiffness symmetry", asym <= 1e-12, format!("max asymmetry {asym:.2e}"));
    let ones = project_function(&space, |_, _| 1.0);
    let kernel = s.mul_vec(&ones).amax();
    check(
        "constants in stiffness kernel",
        kernel <= 1e-11,
        format!("max |S 1| = {kernel:.2e}"),
    );

    // short run for basis and interpolation invariants
    let ops = FomOperators::new(Arc::clone(&space), 0.3, 1.0, 0.04, 1.0, 0.0, 10.0)?;
    let u0 = random_initial_condition(&space, 1);
    let v0 = random_initial_condition(&space, 2);
    let traj = fom_solve(&ops, &u0, &v0, 0.5, 5.0, 1)?;
    let snapshots = traj.u.columns(1, traj.u.ncols() - 1).into_owned();
    let basis = compute_pod_basis(&snapshots, &factor, ModeSelection::EnergyFraction(0.9999))?;
    let defect = orthonormality_defect(&basis.modes, &mass);
    check(
        "basis M-orthonormality",
        defect <= 1e-8,
        format!("k = {}, defect {defect:.2e}", basis.k()),
    );

    let f_snapshots = traj.nonlinear.columns(1, traj.nonlinear.ncols() - 1).into_owned();
    let (w_full, sigma_f) = thin_svd_left(&f_snapshots);
    let n_deim = numerical_rank(&sigma_f).min(8).max(1);
    let w = w_full.columns(0, n_deim).into_owned();
    let indices = deim_select(&w)?;
    let sampled_lu = {
        let mut sampled = DMatrix::zeros(indices.len(), w.ncols());
        for (r, &p) in indices.iter().enumerate() {
            sampled.row_mut(r).copy_from(&w.row(p));
        }
        sampled.lu()
    };
    let mut interp_ok = true;
    let mut worst: f64 = 0.0;
    for trial in 0..20 {
        let f = DVector::from_fn(space.n_dofs(), |i, _| {
            ((i * 31 + trial * 17) as f64).sin()
        });
        let f = &f / f.norm();
        let pf = DVector::from_fn(indices.len(), |i, _| f[indices[i]]);
        let recon = &w * sampled_lu.solve(&pf).unwrap();
        for &p in &indices {
            let dev = (recon[p] - f[p]).abs();
            worst = worst.max(dev);
            interp_ok &= dev <= 1e-12;
        }
    }
    check(
        "DEIM interpolation property",
        interp_ok,
        format!("n = {n_deim}, worst index residual {worst:.2e}"),
    );

    // directional finite-difference consistency of the nonlinear Jacobian
    let mut fd_ok = true;
    let mut worst_fd: f64 = 0.0;
    for trial in 0..5 {
        let u = DVector::from_fn(space.n_dofs(), |i, _| ((i + trial * 7) as f64 * 0.37).sin());
        let d = DVector::from_fn(space.n_dofs(), |i, _| ((i * 3 + trial) as f64 * 0.61).cos());
        let j = assemble_nonlinear_jacobian(&space, &u, 0.01);
        let jd = j.mul_vec(&d);
        let eps = 1e-6;
        let fp = assemble_nonlinear(&space, &(&u + eps * &d), 0.01);
        let fm = assemble_nonlinear(&space, &(&u - eps * &d), 0.01);
        let fd = (fp - fm) / (2.0 * eps);
        let err = (&jd - &fd).amax() / jd.amax();
        worst_fd = worst_fd.max(err);
        fd_ok &= err <= 1e-6;
    }
    check(
        "nonlinear Jacobian consistency",
        fd_ok,
        format!("worst directional FD error {worst_fd:.2e}"),
    );

    let (u1, v1, iters) = crate::fom::fom_step(&ops.with_mu(0.02), &ones, &ones, 0.5)?;
    let moved = (&u1 - &ones).amax().max((&v1 - &ones).amax());
    check(
        "equilibrium preserved",
        moved <= 1e-9 && iters <= 1,
        format!("drift {moved:.2e} after {iters} Newton iterations"),
    );

    Ok(CheckReport { items })
}
