//! Tikhonov regularization of `F(a) = h^δ`, minimized by a projected
//! iteratively regularized Gauss-Newton method with a discrepancy-principle
//! stop.
//!
//! Each outer step solves
//!
//! ```text
//! (Jᵀ W J + α_n G) δs = Jᵀ W (h^δ − F(sⁿ)) + α_n G (s* − sⁿ),   α_n = α0·qⁿ
//! ```
//!
//! by preconditioned conjugate gradients (preconditioner `G`) over the free
//! knot values, then projects `sⁿ + δs` onto the slope constraints.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::discretization::ForwardProblem;
use crate::error::{Error, Result};
use crate::linalg::{axpy, dot, norm2};
use crate::measurement::MeasurementSeries;
use crate::parameter::{project_admissible, projection_active, GramOperator, ParameterBounds, SplineParameter};
use crate::sensitivity::dense_jacobian;

/// Constants of the regularization schedule and the inner solver.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TikhonovConfig {
    pub alpha0: f64,
    pub q: f64,
    pub discrepancy_factor: f64,
    pub max_iters: usize,
    pub pcg_tol: f64,
    pub pcg_max_iters: usize,
    pub bounds: ParameterBounds,
}

impl Default for TikhonovConfig {
    fn default() -> Self {
        Self {
            alpha0: 1.0,
            q: 0.5,
            discrepancy_factor: 1.5,
            max_iters: 40,
            pcg_tol: 1e-8,
            pcg_max_iters: 200,
            bounds: ParameterBounds::default(),
        }
    }
}

impl TikhonovConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha0 > 0.0) {
            return Err(Error::config(format!("alpha0 must be positive, got {}", self.alpha0)));
        }
        if !(self.q > 0.0 && self.q < 1.0) {
            return Err(Error::config(format!("alpha decay must lie in (0,1), got {}", self.q)));
        }
        if !(self.discrepancy_factor > 1.0) {
            return Err(Error::config(format!(
                "discrepancy factor must exceed 1, got {}",
                self.discrepancy_factor
            )));
        }
        if !(self.pcg_tol > 0.0) || self.pcg_max_iters == 0 {
            return Err(Error::config("pcg tolerance and iteration cap must be positive"));
        }
        self.bounds.validate()
    }

    pub fn alpha(&self, iteration: usize) -> f64 {
        self.alpha0 * self.q.powi(iteration as i32)
    }
}

/// Perturbed measurements with `‖h^δ − h‖_{L²(0,T)} = δ`.
#[derive(Debug, Clone)]
pub struct NoisyData {
    pub h_delta: MeasurementSeries,
    pub delta: f64,
    pub seed: u64,
    /// The added perturbation `h^δ − h` as constructed.
    pub perturbation: Vec<f64>,
}

/// Adds i.i.d. Gaussian noise rescaled to discrete `L²(0,T)` norm exactly `delta`.
pub fn add_noise(h: &MeasurementSeries, delta: f64, seed: u64) -> Result<NoisyData> {
    if !(delta >= 0.0) || !delta.is_finite() {
        return Err(Error::config(format!("noise level must be non-negative, got {delta}")));
    }
    if delta == 0.0 {
        return Ok(NoisyData {
            h_delta: h.clone(),
            delta,
            seed,
            perturbation: vec![0.0; h.len()],
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let raw: Vec<f64> = (0..h.len()).map(|_| StandardNormal.sample(&mut rng)).collect();
    let raw = MeasurementSeries::new(h.grid, raw)?;
    let scale = delta / raw.norm();
    let perturbation: Vec<f64> = raw.values.iter().map(|e| scale * e).collect();
    let values = h.values.iter().zip(&perturbation).map(|(x, e)| x + e).collect();
    Ok(NoisyData {
        h_delta: MeasurementSeries::new(h.grid, values)?,
        delta,
        seed,
        perturbation,
    })
}

/// `‖F(a) − h^δ‖²_W + α ‖a − a*‖²_G`.
pub fn tikhonov_value(
    problem: &ForwardProblem,
    a: &SplineParameter,
    data: &NoisyData,
    alpha: f64,
    a_star: &SplineParameter,
    gram: &GramOperator,
) -> Result<f64> {
    let fa = problem.pressure_drop(a)?;
    tikhonov_from_output(&fa, a, data, alpha, a_star, gram)
}

/// Same as [`tikhonov_value`] with `F(a)` already computed.
pub fn tikhonov_from_output(
    fa: &MeasurementSeries,
    a: &SplineParameter,
    data: &NoisyData,
    alpha: f64,
    a_star: &SplineParameter,
    gram: &GramOperator,
) -> Result<f64> {
    let r = fa.sub(&data.h_delta);
    let diff: Vec<f64> = a.values().iter().zip(a_star.values()).map(|(x, y)| x - y).collect();
    Ok(r.inner(&r) + alpha * gram.inner(&diff, &diff)?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PcgOutcome {
    pub x: Vec<f64>,
    pub iterations: usize,
    pub rel_residual: f64,
    pub converged: bool,
}

/// Preconditioned conjugate gradients for a symmetric positive definite
/// operator. Stops when `‖r‖ ≤ tol·‖rhs‖`.
pub fn pcg_solve<A, P>(apply: A, rhs: &[f64], precond: P, tol: f64, max_iters: usize) -> Result<PcgOutcome>
where
    A: Fn(&[f64], &mut [f64]),
    P: Fn(&[f64], &mut [f64]),
{
    let n = rhs.len();
    let bnorm = norm2(rhs);
    if !bnorm.is_finite() {
        return Err(Error::Breakdown {
            context: "pcg",
            iteration: 0,
        });
    }
    let mut x = vec![0.0; n];
    if bnorm == 0.0 {
        return Ok(PcgOutcome {
            x,
            iterations: 0,
            rel_residual: 0.0,
            converged: true,
        });
    }
    let mut r = rhs.to_vec();
    let mut z = vec![0.0; n];
    precond(&r, &mut z);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    let mut rel = 1.0;
    for it in 1..=max_iters {
        apply(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) || !pap.is_finite() {
            return Err(Error::Breakdown {
                context: "pcg",
                iteration: it,
            });
        }
        let step = rz / pap;
        axpy(step, &p, &mut x);
        axpy(-step, &ap, &mut r);
        rel = norm2(&r) / bnorm;
        if !rel.is_finite() {
            return Err(Error::Breakdown {
                context: "pcg",
                iteration: it,
            });
        }
        if rel <= tol {
            return Ok(PcgOutcome {
                x,
                iterations: it,
                rel_residual: rel,
                converged: true,
            });
        }
        precond(&r, &mut z);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for (pi, zi) in p.iter_mut().zip(&z) {
            *pi = zi + beta * *pi;
        }
    }
    Ok(PcgOutcome {
        x,
        iterations: max_iters,
        rel_residual: rel,
        converged: false,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub misfit: f64,
    /// Regularization weight of the step taken from this iterate, if any.
    pub alpha: Option<f64>,
    pub pcg_iterations: usize,
    pub projection_active: bool,
}

#[derive(Debug, Clone)]
pub struct ReconstructionResult {
    pub a_rec: SplineParameter,
    /// Weight of the last Gauss-Newton step (`alpha0` if none was taken).
    pub alpha_final: f64,
    pub iterations: usize,
    pub final_misfit: f64,
    pub converged: bool,
    /// `‖a_rec − a†‖` in the `L²` part of the Gram operator, when the truth is known.
    pub error_l2: Option<f64>,
    pub log: Vec<IterationRecord>,
}

/// Projected IRGN iteration started from `a0`, stopped by the discrepancy
/// principle `‖F(aⁿ) − h^δ‖ ≤ factor·δ` checked before each step.
pub fn irgn_solve(
    problem: &ForwardProblem,
    data: &NoisyData,
    config: &TikhonovConfig,
    gram: &GramOperator,
    a_star: &SplineParameter,
    a0: &SplineParameter,
    truth: Option<&SplineParameter>,
) -> Result<ReconstructionResult> {
    config.validate()?;
    if data.h_delta.grid != problem.grid {
        return Err(Error::Contract("data and forward problem use different time grids".into()));
    }
    let grid = a0.grid().clone();
    let nk = grid.n_knots();
    if gram.dim() != nk || **a_star.grid() != *grid {
        return Err(Error::Contract("parameter, prior and Gram operator disagree in size".into()));
    }
    let pinned = grid.zero_knot();
    let free: Vec<usize> = (0..nk).filter(|i| Some(*i) != pinned).collect();
    let nf = free.len();
    let g_ff = nalgebra::DMatrix::from_fn(nf, nf, |i, j| gram.g[(free[i], free[j])]);
    let g_ff_chol = nalgebra::Cholesky::new(g_ff.clone())
        .ok_or_else(|| Error::Contract("restricted Gram matrix is not positive definite".into()))?;
    let weights = problem.grid.trapezoid_weights();
    let threshold = config.discrepancy_factor * data.delta;

    let mut s = a0.clone();
    let mut log_records = Vec::new();
    let mut alpha_final = config.alpha0;
    for n in 0..=config.max_iters {
        let fa = problem.pressure_drop(&s)?;
        let residual = data.h_delta.sub(&fa);
        let misfit = residual.norm();
        log::debug!("irgn iteration {n}: misfit {misfit:.6e} (target {threshold:.6e})");
        if misfit <= threshold || n == config.max_iters {
            let converged = misfit <= threshold;
            if !converged {
                log::warn!("irgn stopped after {n} iterations with misfit {misfit:.3e} > {threshold:.3e}");
            }
            log_records.push(IterationRecord {
                iteration: n,
                misfit,
                alpha: None,
                pcg_iterations: 0,
                projection_active: false,
            });
            let error_l2 = truth
                .map(|t| {
                    let d: Vec<f64> = s.values().iter().zip(t.values()).map(|(x, y)| x - y).collect();
                    gram.l2_norm(&d)
                })
                .transpose()?;
            return Ok(ReconstructionResult {
                a_rec: s,
                alpha_final,
                iterations: n,
                final_misfit: misfit,
                converged,
                error_l2,
                log: log_records,
            });
        }

        let alpha = config.alpha(n);
        let jac = dense_jacobian(problem, &s, &free)?;
        let mut rhs = vec![0.0; nf];
        jac.mul_transpose_weighted(&residual.values, &mut rhs);
        let prior: Vec<f64> = a_star.values().iter().zip(s.values()).map(|(x, y)| x - y).collect();
        let g_prior = gram.apply(&prior);
        for (i, &j) in free.iter().enumerate() {
            rhs[i] += alpha * g_prior[j];
        }
        let apply = |x: &[f64], y: &mut [f64]| {
            let mut jx = vec![0.0; weights.len()];
            jac.mul(x, &mut jx);
            jac.mul_transpose_weighted(&jx, y);
            for i in 0..nf {
                let mut gx = 0.0;
                for k in 0..nf {
                    gx += g_ff[(i, k)] * x[k];
                }
                y[i] += alpha * gx;
            }
        };
        let precond = |r: &[f64], z: &mut [f64]| {
            let sol = g_ff_chol.solve(&nalgebra::DVector::from_row_slice(r));
            z.copy_from_slice(sol.as_slice());
        };
        let out = pcg_solve(apply, &rhs, precond, config.pcg_tol, config.pcg_max_iters).map_err(|e| match e {
            Error::Breakdown { .. } => Error::Breakdown {
                context: "pcg inside irgn",
                iteration: n,
            },
            other => other,
        })?;
        if !out.converged {
            log::warn!("pcg hit its cap at irgn iteration {n} (relative residual {:.2e})", out.rel_residual);
        }
        let mut next = s.values().to_vec();
        for (i, &j) in free.iter().enumerate() {
            next[j] += out.x[i];
        }
        let candidate = s.with_values(next)?;
        let active = projection_active(&candidate, &config.bounds);
        if active {
            log::info!("projection altered iterate {}", n + 1);
        }
        s = project_admissible(&candidate, &config.bounds);
        alpha_final = alpha;
        log_records.push(IterationRecord {
            iteration: n,
            misfit,
            alpha: Some(alpha),
            pcg_iterations: out.iterations,
            projection_active: active,
        });
    }
    unreachable!("loop returns at max_iters")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discretization::{BoundarySchedule, Mesh1D};
    use crate::measurement::TimeGrid;
    use crate::parameter::{true_parameter, KnotGrid};
    use approx::assert_relative_eq;
    use nalgebra::{DMatrix, DVector};
    use rand::Rng;

    fn series(n: usize) -> MeasurementSeries {
        let grid = TimeGrid::covering(2.0, 2.0 / n as f64).unwrap();
        MeasurementSeries::new(grid, grid.times().iter().map(|t| t.sin() + 1.0).collect()).unwrap()
    }

    #[test]
    fn zero_noise_is_identity() {
        let h = series(100);
        let d = add_noise(&h, 0.0, 1).unwrap();
        assert_eq!(d.h_delta, h);
        assert!(add_noise(&h, -0.1, 1).is_err());
    }

    #[test]
    fn noise_norm_and_determinism() {
        let h = series(500);
        for (delta, seed) in [(0.1, 1u64), (1e-3, 42), (0.00625, 7)] {
            let d = add_noise(&h, delta, seed).unwrap();
            let p = MeasurementSeries::new(h.grid, d.perturbation.clone()).unwrap();
            assert_relative_eq!(p.norm(), delta, max_relative = 1e-14);
            assert_relative_eq!(d.h_delta.sub(&h).norm(), delta, max_relative = 1e-10);
            let again = add_noise(&h, delta, seed).unwrap();
            assert_eq!(again.h_delta, d.h_delta);
        }
        assert_ne!(add_noise(&h, 0.1, 1).unwrap().h_delta, add_noise(&h, 0.1, 2).unwrap().h_delta);
    }

    #[test]
    fn pcg_identity() {
        let rhs = [1.0, -2.0, 3.0];
        let out = pcg_solve(|x, y| y.copy_from_slice(x), &rhs, |x, y| y.copy_from_slice(x), 1e-12, 10).unwrap();
        assert_eq!(out.iterations, 1);
        assert_eq!(out.x, rhs.to_vec());
    }

    #[test]
    fn pcg_against_dense_solve() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let m = DMatrix::from_fn(8, 8, |_, _| rng.gen_range(-1.0..1.0));
        let a = &m * m.transpose() + DMatrix::identity(8, 8) * 0.5;
        let b = DVector::from_fn(8, |_, _| rng.gen_range(-1.0..1.0));
        let exact = a.clone().lu().solve(&b).unwrap();
        let apply = |x: &[f64], y: &mut [f64]| y.copy_from_slice((&a * DVector::from_row_slice(x)).as_slice());
        let out = pcg_solve(apply, b.as_slice(), |x, y| y.copy_from_slice(x), 1e-14, 100).unwrap();
        assert!(out.converged);
        assert!(out.iterations <= 10, "{} iterations", out.iterations);
        let err = (DVector::from_row_slice(&out.x) - &exact).norm() / exact.norm();
        assert!(err <= 1e-10, "{err}");
    }

    #[test]
    fn pcg_reports_breakdown() {
        let err = pcg_solve(|x, y| y.iter_mut().zip(x).for_each(|(a, b)| *a = -b), &[1.0, 1.0], |x, y| y.copy_from_slice(x), 1e-10, 5)
            .unwrap_err();
        assert!(matches!(err, Error::Breakdown { iteration: 1, .. }));
    }

    #[test]
    fn pcg_zero_rhs() {
        let out = pcg_solve(|x, y| y.copy_from_slice(x), &[0.0; 4], |x, y| y.copy_from_slice(x), 1e-10, 5).unwrap();
        assert_eq!(out.iterations, 0);
        assert_eq!(out.x, vec![0.0; 4]);
    }

    #[test]
    fn tikhonov_hand_arithmetic() {
        // Three samples with τ = 0.5: weights 0.25, 0.5, 0.25.
        let grid = TimeGrid { tau: 0.5, n_steps: 2 };
        let fa = MeasurementSeries::new(grid, vec![0.0, 1.0, 2.0]).unwrap();
        let data = NoisyData {
            h_delta: MeasurementSeries::new(grid, vec![0.5, 1.0, 1.0]).unwrap(),
            delta: 0.0,
            seed: 0,
            perturbation: vec![0.0; 3],
        };
        let kg = KnotGrid::new(0.0, 2.0, 4).unwrap();
        let gram = GramOperator::new(&kg);
        let a = SplineParameter::fit(kg.clone(), vec![0.0, 1.0, 1.0, 1.0, 1.0]).unwrap();
        let a_star = SplineParameter::zeros(kg);
        // misfit: 0.25·0.25 + 0 + 0.25·1 = 0.3125
        // D0: Δu = 0.5 → 0.5·(0+1+1+1) + 0.25·1 = 1.75
        // D1: only the first increment, (1/0.5)²·0.5 = 2
        // D2: second differences (-4, 0, 0) with weights (0.75, 0.5, 0.75) → 12
        let v = tikhonov_from_output(&fa, &a, &data, 0.1, &a_star, &gram).unwrap();
        assert_relative_eq!(v, 0.3125 + 0.1 * (1.75 + 2.0 + 12.0), max_relative = 1e-14);
        let v0 = tikhonov_from_output(&fa, &a, &data, 0.0, &a_star, &gram).unwrap();
        assert_relative_eq!(v0, 0.3125, max_relative = 1e-15);
    }

    fn small_problem() -> (ForwardProblem, SplineParameter, GramOperator) {
        let horizon = 5.0;
        let sched = BoundarySchedule::symmetric(
            move |t| 2.0 * (std::f64::consts::PI * t / (2.0 * horizon)).sin().powi(2),
            horizon,
        );
        let grid = TimeGrid::covering(horizon, 0.025).unwrap();
        let problem = ForwardProblem::new(Mesh1D::new(20).unwrap(), grid, &sched, 1.0).unwrap();
        let kg = KnotGrid::new(0.0, 2.0, 8).unwrap();
        let gram = GramOperator::new(&kg);
        (problem, true_parameter(kg), gram)
    }

    #[test]
    fn exact_start_stops_immediately() {
        let (problem, truth, gram) = small_problem();
        let h = problem.pressure_drop(&truth).unwrap();
        let data = add_noise(&h, 0.0, 0).unwrap();
        let v = tikhonov_value(&problem, &truth, &data, 1.0, &truth, &gram).unwrap();
        assert!(v <= 1e-20);
        let cfg = TikhonovConfig::default();
        let res = irgn_solve(&problem, &data, &cfg, &gram, &truth, &truth, Some(&truth)).unwrap();
        assert_eq!(res.iterations, 0);
        assert!(res.converged);
        assert_eq!(res.a_rec.values(), truth.values());
        assert_eq!(res.error_l2, Some(0.0));
    }

    #[test]
    fn recovers_truth_from_linear_prior() {
        let (problem, truth, gram) = small_problem();
        let h = problem.pressure_drop(&truth).unwrap();
        let data = add_noise(&h, 0.01, 5).unwrap();
        let a_star = SplineParameter::sample(truth.grid().clone(), |u| u);
        let cfg = TikhonovConfig::default();
        let res = irgn_solve(&problem, &data, &cfg, &gram, &a_star, &a_star, Some(&truth)).unwrap();
        assert!(res.converged);
        assert!(res.iterations > 0);
        assert!(res.final_misfit <= 1.5 * 0.01);
        let start_err = {
            let d: Vec<f64> = a_star.values().iter().zip(truth.values()).map(|(x, y)| x - y).collect();
            gram.l2_norm(&d).unwrap()
        };
        assert!(res.error_l2.unwrap() < 0.2 * start_err, "{:?} vs {start_err}", res.error_l2);
        assert_eq!(res.a_rec.values()[0], 0.0);
        assert!(res.log.iter().all(|r| !r.projection_active));
    }

    #[test]
    fn iteration_cap_is_flagged() {
        let (problem, truth, gram) = small_problem();
        let h = problem.pressure_drop(&truth).unwrap();
        let data = add_noise(&h, 1e-6, 5).unwrap();
        let a_star = SplineParameter::sample(truth.grid().clone(), |u| u);
        let cfg = TikhonovConfig {
            max_iters: 2,
            ..TikhonovConfig::default()
        };
        let res = irgn_solve(&problem, &data, &cfg, &gram, &a_star, &a_star, None).unwrap();
        assert!(!res.converged);
        assert_eq!(res.iterations, 2);
        assert_eq!(res.alpha_final, 0.5);
    }

    #[test]
    fn config_validation() {
        let bad = TikhonovConfig {
            q: 1.5,
            ..TikhonovConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = TikhonovConfig {
            discrepancy_factor: 1.0,
            ..TikhonovConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}
