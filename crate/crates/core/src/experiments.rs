//! Experiment drivers: configuration, the standard flux ramp, and the runs
//! behind the simulation plots, both tables and the reconstruction plots.
//!
//! Every driver writes its files into `out_dir` together with a
//! `config.json` echo of the resolved configuration.

use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::discretization::{
    discrete_energy, forward_step, pressure_mass, BoundarySchedule, DiscreteOperators, ForwardProblem, Mesh1D,
};
use crate::error::{Error, Result};
use crate::inversion::{add_noise, irgn_solve, ReconstructionResult, TikhonovConfig};
use crate::io::{fmt_f64, write_csv, write_json, write_parameter, write_trajectory};
use crate::measurement::{MeasurementSeries, TimeGrid};
use crate::parameter::{
    reference_friction, true_parameter, FrictionLaw, GramOperator, KnotGrid, SplineParameter,
};
use crate::sensitivity::JacobianHandle;
use crate::stationary::{apply_k, proximity_metrics, stationary_reconstruct, StationaryReconstruction};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub n_elements: usize,
    /// Time step as a fraction of the element width.
    pub tau_factor: f64,
    /// Number of spline intervals on `[u_min, u_max]`.
    pub m_knots: usize,
    pub u_min: f64,
    pub u_max: f64,
    pub initial_pressure: f64,
    /// Slope of the linear prior `a*(u) = prior_slope·u`, also the IRGN start.
    pub prior_slope: f64,
    pub t_list: Vec<f64>,
    pub delta_list: Vec<f64>,
    /// Horizon used by `simulate`, `reconstruct` and `selftest`.
    pub time_horizon: f64,
    /// Noise level used by `reconstruct`.
    pub noise_level: f64,
    /// Seed of `reconstruct`; table cell `(δ_i, T)` uses `seed + i`.
    pub seed: u64,
    pub irgn: TikhonovConfig,
    /// Number of points of the u-grid in reconstruction output.
    pub dense_samples: usize,
    pub write_trajectory: bool,
    pub out_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            n_elements: 500,
            tau_factor: 0.5,
            m_knots: 20,
            u_min: 0.0,
            u_max: 2.0,
            initial_pressure: 1.0,
            prior_slope: 1.0,
            t_list: vec![1.0, 2.0, 5.0, 10.0, 20.0, 50.0],
            delta_list: vec![0.1, 0.05, 0.025, 0.0125, 0.00625],
            time_horizon: 2.0,
            noise_level: 0.001,
            seed: 1000,
            irgn: TikhonovConfig::default(),
            dense_samples: 401,
            write_trajectory: false,
            out_dir: PathBuf::from("out"),
        }
    }
}

impl ExperimentConfig {
    pub fn from_json_file<P: AsRef<Path>>(path: P) -> Result<Self> {
        let config: Self = crate::io::read_json(path)?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_elements < 2 {
            return Err(Error::config("n_elements must be at least 2"));
        }
        if !(self.tau_factor > 0.0 && self.tau_factor.is_finite()) {
            return Err(Error::config("tau_factor must be positive"));
        }
        if self.t_list.is_empty() || self.delta_list.is_empty() {
            return Err(Error::config("t_list and delta_list must be nonempty"));
        }
        if let Some(t) = self.t_list.iter().chain([&self.time_horizon]).find(|t| !(**t > 0.0 && t.is_finite())) {
            return Err(Error::config(format!("time horizons must be positive, got {t}")));
        }
        if let Some(d) = self.delta_list.iter().chain([&self.noise_level]).find(|d| !(**d >= 0.0 && d.is_finite())) {
            return Err(Error::config(format!("noise levels must be non-negative, got {d}")));
        }
        if self.dense_samples < 2 {
            return Err(Error::config("dense_samples must be at least 2"));
        }
        if !(self.initial_pressure.is_finite() && self.prior_slope.is_finite()) {
            return Err(Error::config("initial pressure and prior slope must be finite"));
        }
        KnotGrid::new(self.u_min, self.u_max, self.m_knots)?;
        self.irgn.validate()
    }

    pub fn knot_grid(&self) -> Result<Arc<KnotGrid>> {
        KnotGrid::new(self.u_min, self.u_max, self.m_knots)
    }

    pub fn time_grid(&self, horizon: f64) -> Result<TimeGrid> {
        TimeGrid::covering(horizon, self.tau_factor / self.n_elements as f64)
    }

    /// Forward problem on `[0, horizon]` driven by [`flux_schedule`].
    pub fn forward_problem(&self, horizon: f64) -> Result<ForwardProblem> {
        ForwardProblem::new(
            Mesh1D::new(self.n_elements)?,
            self.time_grid(horizon)?,
            &flux_schedule(horizon)?,
            self.initial_pressure,
        )
    }

    pub fn prior(&self, grid: Arc<KnotGrid>) -> SplineParameter {
        let c = self.prior_slope;
        SplineParameter::sample(grid, move |u| c * u)
    }

    pub fn cell_seed(&self, delta_index: usize) -> u64 {
        self.seed.wrapping_add(delta_index as u64)
    }

    fn prepare_out_dir(&self) -> Result<()> {
        fs::create_dir_all(&self.out_dir).map_err(|e| Error::io(&self.out_dir, e))?;
        write_json(self.out_dir.join("config.json"), self)
    }
}

/// Boundary flux `g0 = g1 = 2 sin²(πt/(2T))`.
pub fn flux_schedule(horizon: f64) -> Result<BoundarySchedule> {
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::config(format!("time horizon must be positive, got {horizon}")));
    }
    Ok(BoundarySchedule::symmetric(
        move |t| 2.0 * (PI * t / (2.0 * horizon)).sin().powi(2),
        horizon,
    ))
}

fn boundary_series(problem: &ForwardProblem) -> Result<MeasurementSeries> {
    MeasurementSeries::new(problem.grid, problem.boundary.iter().map(|(g0, _)| *g0).collect())
}

fn horizon_tag(t: f64) -> String {
    format!("T{t}")
}

fn delta_tag(d: f64) -> String {
    format!("delta{d}")
}

#[derive(Debug, Clone)]
pub struct SimulateOutput {
    pub path: PathBuf,
    pub flux: MeasurementSeries,
    pub dp_instationary: MeasurementSeries,
    pub dp_linearized: MeasurementSeries,
}

impl SimulateOutput {
    pub fn max_gap(&self) -> f64 {
        self.dp_instationary.max_abs_diff(&self.dp_linearized)
    }
}

/// Pressure drop of the instationary model next to `a†(g(t))`, one row per
/// time step.
pub fn run_simulate(config: &ExperimentConfig, horizon: f64) -> Result<SimulateOutput> {
    config.validate()?;
    config.prepare_out_dir()?;
    let truth = true_parameter(config.knot_grid()?);
    let problem = config.forward_problem(horizon)?;
    let flux = boundary_series(&problem)?;
    let traj = problem.solve(&truth)?;
    let dp_instationary = crate::discretization::observe_pressure_drop(&traj);
    let dp_linearized = apply_k(&truth, &flux);
    let path = config.out_dir.join(format!("simulate_{}.csv", horizon_tag(horizon)));
    let times = problem.grid.times();
    write_csv(
        &path,
        &["t", "g", "dp_instationary", "dp_linearized"],
        (0..times.len()).map(|k| {
            vec![
                fmt_f64(times[k]),
                fmt_f64(flux.values[k]),
                fmt_f64(dp_instationary.values[k]),
                fmt_f64(dp_linearized.values[k]),
            ]
        }),
    )?;
    if config.write_trajectory {
        write_trajectory(config.out_dir.join(format!("trajectory_{}.csv", horizon_tag(horizon))), &traj)?;
    }
    Ok(SimulateOutput {
        path,
        flux,
        dp_instationary,
        dp_linearized,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Table1Row {
    #[serde(rename = "T")]
    pub horizon: f64,
    pub e: f64,
    pub d: f64,
}

/// Distances `e(T)` and `d(T)` between instationary and stationary solutions.
pub fn run_table1(config: &ExperimentConfig) -> Result<Vec<Table1Row>> {
    config.validate()?;
    config.prepare_out_dir()?;
    let truth = true_parameter(config.knot_grid()?);
    let mut rows = Vec::with_capacity(config.t_list.len());
    for &t in &config.t_list {
        let m = proximity_metrics(&config.forward_problem(t)?, &truth)?;
        log::info!("table1 T={t}: e={:.4} d={:.4}", m.e, m.d);
        rows.push(Table1Row { horizon: t, e: m.e, d: m.d });
    }
    write_csv(
        config.out_dir.join("table1.csv"),
        &["T", "e", "d"],
        rows.iter().map(|r| vec![fmt_f64(r.horizon), fmt_f64(r.e), fmt_f64(r.d)]),
    )?;
    Ok(rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Table2Cell {
    pub delta: f64,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub error: f64,
    pub iterations: usize,
    pub alpha_final: f64,
    pub misfit: f64,
    pub seed: u64,
    pub converged: bool,
    /// Whether the projection altered any iterate.
    pub projected: bool,
}

/// Tikhonov reconstruction errors over the `delta_list × t_list` grid.
/// Cells are returned and written in order of `T`, then `δ`.
pub fn run_table2(config: &ExperimentConfig) -> Result<Vec<Table2Cell>> {
    config.validate()?;
    config.prepare_out_dir()?;
    let kg = config.knot_grid()?;
    let truth = true_parameter(kg.clone());
    let a_star = config.prior(kg.clone());
    let gram = GramOperator::new(&kg);
    let mut cells = Vec::with_capacity(config.t_list.len() * config.delta_list.len());
    for &t in &config.t_list {
        let problem = config.forward_problem(t)?;
        let h = problem.pressure_drop(&truth)?;
        for (i, &delta) in config.delta_list.iter().enumerate() {
            let seed = config.cell_seed(i);
            let data = add_noise(&h, delta, seed)?;
            let r = irgn_solve(&problem, &data, &config.irgn, &gram, &a_star, &a_star, Some(&truth))?;
            let cell = Table2Cell {
                delta,
                horizon: t,
                error: r.error_l2.unwrap_or(f64::NAN),
                iterations: r.iterations,
                alpha_final: r.alpha_final,
                misfit: r.final_misfit,
                seed,
                converged: r.converged,
                projected: r.log.iter().any(|rec| rec.projection_active),
            };
            log::info!(
                "table2 T={t} delta={delta}: error={:.4} after {} iterations{}",
                cell.error,
                cell.iterations,
                if cell.converged { "" } else { " (not converged)" }
            );
            cells.push(cell);
        }
    }
    write_csv(
        config.out_dir.join("table2.csv"),
        &["delta", "T", "error", "iterations", "alpha_final", "misfit", "seed", "converged", "projected"],
        cells.iter().map(|c| {
            vec![
                fmt_f64(c.delta),
                fmt_f64(c.horizon),
                fmt_f64(c.error),
                c.iterations.to_string(),
                fmt_f64(c.alpha_final),
                fmt_f64(c.misfit),
                c.seed.to_string(),
                c.converged.to_string(),
                c.projected.to_string(),
            ]
        }),
    )?;
    Ok(cells)
}

/// Metadata written next to a reconstruction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconstructionMeta {
    #[serde(rename = "T")]
    pub horizon: f64,
    pub delta: f64,
    pub seed: u64,
    pub alpha_final: f64,
    pub iterations: usize,
    pub misfit: f64,
    pub converged: bool,
    #[serde(rename = "error_L2")]
    pub error_l2: f64,
    /// Largest distance to `a†` on the dense grid.
    pub sup_error_rec: f64,
    pub sup_error_stationary: f64,
    pub stationary_missing_knots: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct ReconstructOutput {
    pub result: ReconstructionResult,
    pub stationary: StationaryReconstruction,
    pub meta: ReconstructionMeta,
    pub path: PathBuf,
}

/// Tikhonov reconstruction from noisy data, the stationary formula applied
/// to the same data, the truth and the prior, sampled on a dense u-grid.
pub fn run_reconstruct(config: &ExperimentConfig, horizon: f64, delta: f64, seed: u64) -> Result<ReconstructOutput> {
    config.validate()?;
    config.prepare_out_dir()?;
    let kg = config.knot_grid()?;
    let truth = true_parameter(kg.clone());
    let a_star = config.prior(kg.clone());
    let gram = GramOperator::new(&kg);
    let problem = config.forward_problem(horizon)?;
    let h = problem.pressure_drop(&truth)?;
    let data = add_noise(&h, delta, seed)?;
    let result = irgn_solve(&problem, &data, &config.irgn, &gram, &a_star, &a_star, Some(&truth))?;
    let stationary = stationary_reconstruct(kg.clone(), &boundary_series(&problem)?, &data.h_delta)?;

    let n = config.dense_samples;
    let us: Vec<f64> = (0..n)
        .map(|i| config.u_min + (config.u_max - config.u_min) * i as f64 / (n - 1) as f64)
        .collect();
    let sup = |f: &SplineParameter| us.iter().map(|&u| (f.eval(u) - reference_friction(u)).abs()).fold(0.0, f64::max);
    let meta = ReconstructionMeta {
        horizon,
        delta,
        seed,
        alpha_final: result.alpha_final,
        iterations: result.iterations,
        misfit: result.final_misfit,
        converged: result.converged,
        error_l2: result.error_l2.unwrap_or(f64::NAN),
        sup_error_rec: sup(&result.a_rec),
        sup_error_stationary: sup(&stationary.parameter),
        stationary_missing_knots: stationary.missing.clone(),
    };

    let stem = format!("reconstruct_{}_{}", horizon_tag(horizon), delta_tag(delta));
    let path = config.out_dir.join(format!("{stem}.csv"));
    write_csv(
        &path,
        &["u", "a_true", "a_rec", "a_bar", "a_star"],
        us.iter().map(|&u| {
            vec![
                fmt_f64(u),
                fmt_f64(reference_friction(u)),
                fmt_f64(result.a_rec.eval(u)),
                fmt_f64(stationary.parameter.eval(u)),
                fmt_f64(a_star.eval(u)),
            ]
        }),
    )?;
    write_parameter(config.out_dir.join(format!("{stem}_param.csv")), &result.a_rec, &config.irgn.bounds)?;
    write_json(config.out_dir.join(format!("{stem}_meta.json")), &meta)?;
    Ok(ReconstructOutput {
        result,
        stationary,
        meta,
        path,
    })
}

/// Outcome of the built-in consistency checks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelfTestReport {
    /// Largest `|⟨Jb,ψ⟩_W − ⟨b,Jᵀψ⟩| / (‖Jb‖‖ψ‖)` over the random pairs.
    pub adjoint_defect: f64,
    /// Smallest fitted Taylor-remainder slope over the random directions.
    pub taylor_slope: f64,
    /// Largest `(E^{n+1} − E^n) / (τ² ‖a(uⁿ)‖²)` over a free decay run.
    pub energy_constant: f64,
    /// Largest change of `∫p` over the same run.
    pub mass_drift: f64,
    pub passed: bool,
}

pub const ADJOINT_TOL: f64 = 1e-12;
pub const TAYLOR_MIN_SLOPE: f64 = 1.9;
/// The explicit friction step adds at most `½τ²‖a(u)‖²` to the energy.
pub const ENERGY_CONSTANT_BOUND: f64 = 0.5;
pub const MASS_TOL: f64 = 1e-12;

/// Random knot values in `[-1, 1]`, zero at `u = 0` so that `a + sb`
/// keeps `a(0) = 0`.
pub fn random_direction(grid: Arc<KnotGrid>, rng: &mut impl Rng) -> Result<SplineParameter> {
    let zero = grid.zero_knot();
    let values = (0..grid.n_knots())
        .map(|i| if Some(i) == zero { 0.0 } else { rng.gen_range(-1.0..1.0) })
        .collect();
    SplineParameter::fit(grid, values)
}

/// Largest relative adjoint defect over `pairs` random `(b, ψ)`.
pub fn adjoint_defect(handle: &JacobianHandle, pairs: usize, rng: &mut impl Rng) -> Result<f64> {
    let kg = handle.parameter().grid().clone();
    let grid = handle.problem().grid;
    let mut worst = 0.0_f64;
    for _ in 0..pairs {
        let b = random_direction(kg.clone(), rng)?;
        let psi = MeasurementSeries::new(grid, (0..grid.len()).map(|_| rng.gen_range(-1.0..1.0)).collect())?;
        let jb = handle.apply(&b)?;
        let jt = handle.apply_transpose(&psi)?;
        let lhs = jb.inner(&psi);
        let rhs: f64 = b.values().iter().zip(&jt).map(|(x, y)| x * y).sum();
        let scale = jb.norm() * psi.norm();
        if scale > 0.0 {
            worst = worst.max((lhs - rhs).abs() / scale);
        }
    }
    Ok(worst)
}

/// Least-squares slope of `log ‖F(a+sb) − F(a) − sJb‖` against `log s` for
/// `s` from `1e-1` down to `1e-4`.
pub fn taylor_slope(handle: &JacobianHandle, b: &SplineParameter) -> Result<f64> {
    let problem = handle.problem();
    let f0 = handle.output();
    let jb = handle.apply(b)?;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for i in 0..=6 {
        let s = 10f64.powf(-1.0 - 0.5 * i as f64);
        let fs = problem.pressure_drop(&handle.parameter().add_scaled(s, b))?;
        let rem: Vec<f64> = (0..fs.len()).map(|k| fs.values[k] - f0.values[k] - s * jb.values[k]).collect();
        let r = MeasurementSeries::new(fs.grid, rem)?.norm();
        xs.push(s.ln());
        ys.push(r.max(f64::MIN_POSITIVE).ln());
    }
    Ok(fit_slope(&xs, &ys))
}

/// Least-squares slope of `ys` against `xs`.
pub fn fit_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

/// Energy and mass bookkeeping of a free decay with homogeneous boundary
/// data, started from a non-trivial state. Returns `(C, mass drift)`.
pub fn free_decay_check<A: FrictionLaw + ?Sized>(ops: &DiscreteOperators, a: &A, steps: usize) -> Result<(f64, f64)> {
    let mesh = ops.mesh();
    let tau = ops.tau();
    let mut p: Vec<f64> = (0..mesh.n_nodes()).map(|j| 1.0 + 0.5 * (PI * mesh.node(j)).cos()).collect();
    let mut u: Vec<f64> = (0..mesh.n_elements())
        .map(|e| (PI * (e as f64 + 0.5) * mesh.h()).sin())
        .collect();
    let mass0 = pressure_mass(&p, ops);
    let mut energy = discrete_energy(&p, &u, ops);
    let mut c_fit = f64::NEG_INFINITY;
    let mut drift = 0.0_f64;
    for _ in 0..steps {
        let friction: f64 = u.iter().map(|&x| a.value(x).powi(2)).sum::<f64>() * mesh.h();
        let (pn, un) = forward_step(ops, &p, &u, (0.0, 0.0), a)?;
        let next = discrete_energy(&pn, &un, ops);
        // Increases at rounding level carry no information about C.
        let increase = next - energy - 1e-13 * energy;
        if friction > 0.0 {
            c_fit = c_fit.max(increase / (tau * tau * friction));
        }
        drift = drift.max((pressure_mass(&pn, ops) - mass0).abs());
        energy = next;
        p = pn;
        u = un;
    }
    Ok((c_fit, drift))
}

/// Adjoint, Taylor and energy checks at `a†` on the configured mesh.
pub fn run_selftest(config: &ExperimentConfig) -> Result<SelfTestReport> {
    config.validate()?;
    let kg = config.knot_grid()?;
    let truth = true_parameter(kg.clone());
    let problem = Arc::new(config.forward_problem(config.time_horizon)?);
    let handle = JacobianHandle::new(problem.clone(), truth.clone())?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let adjoint = adjoint_defect(&handle, 20, &mut rng)?;
    let mut slope = f64::INFINITY;
    for _ in 0..5 {
        let b = random_direction(kg.clone(), &mut rng)?;
        slope = slope.min(taylor_slope(&handle, &b)?);
    }
    let (energy_constant, mass_drift) = free_decay_check(&problem.ops, &truth, 10_000)?;
    let passed = adjoint <= ADJOINT_TOL
        && slope >= TAYLOR_MIN_SLOPE
        && energy_constant <= ENERGY_CONSTANT_BOUND
        && mass_drift <= MASS_TOL;
    Ok(SelfTestReport {
        adjoint_defect: adjoint,
        taylor_slope: slope,
        energy_constant,
        mass_drift,
        passed,
    })
}
