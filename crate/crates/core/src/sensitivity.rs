//! Derivative of the discrete parameter-to-measurement map and its exact
//! transpose.
//!
//! The scheme is differentiated step by step. With `c = τ/h` the forward
//! sensitivity recursion for a direction `b` reads
//!
//! ```text
//! z     = w − τ (a'(uⁿ) w + b(uⁿ))
//! r⁺    = S⁻¹ (Mp r + τ Bᵀ z)
//! w⁺    = z − c B r⁺
//! yⁿ⁺¹  = r⁺_0 − r⁺_N
//! ```
//!
//! and the adjoint runs the transposed recursion backwards from zero
//! terminal data, so `⟨J b, ψ⟩_W = ⟨b, Jᵀψ⟩` holds to rounding.

use std::sync::Arc;

use crate::discretization::ForwardProblem;
use crate::error::{Error, Result};
use crate::measurement::MeasurementSeries;
use crate::parameter::SplineParameter;

/// Linearization point: a friction law together with the flux history it
/// produced.
#[derive(Debug, Clone)]
pub struct JacobianHandle {
    problem: Arc<ForwardProblem>,
    a: SplineParameter,
    flux: Vec<Vec<f64>>,
    output: MeasurementSeries,
}

impl JacobianHandle {
    pub fn new(problem: Arc<ForwardProblem>, a: SplineParameter) -> Result<Self> {
        let mut flux = Vec::with_capacity(problem.grid.len());
        let mut values = Vec::with_capacity(problem.grid.len());
        problem.march(&a, |_, p, u| {
            flux.push(u.to_vec());
            values.push(p[0] - p[p.len() - 1]);
        })?;
        let output = MeasurementSeries::new(problem.grid, values)?;
        Ok(Self {
            problem,
            a,
            flux,
            output,
        })
    }

    pub fn parameter(&self) -> &SplineParameter {
        &self.a
    }

    pub fn problem(&self) -> &Arc<ForwardProblem> {
        &self.problem
    }

    /// `F(a)` at the linearization point.
    pub fn output(&self) -> &MeasurementSeries {
        &self.output
    }

    /// Whether the handle still describes `a` on `problem`.
    pub fn is_valid_for(&self, problem: &Arc<ForwardProblem>, a: &SplineParameter) -> bool {
        Arc::ptr_eq(&self.problem, problem) && self.a == *a
    }

    fn check_direction(&self, b: &SplineParameter) -> Result<()> {
        if **b.grid() != **self.a.grid() {
            return Err(Error::Contract("direction lives on a different knot grid".into()));
        }
        Ok(())
    }

    /// `F'(a) b`.
    pub fn apply(&self, b: &SplineParameter) -> Result<MeasurementSeries> {
        self.check_direction(b)?;
        let ops = &self.problem.ops;
        let mesh = ops.mesh();
        let n = mesh.n_elements();
        let tau = ops.tau();
        let c = tau / mesh.h();
        let mut r = vec![0.0; n + 1];
        let mut w = vec![0.0; n];
        let mut z = vec![0.0; n];
        let mut tmp = vec![0.0; n + 1];
        let mut out = vec![0.0; self.problem.grid.len()];
        for k in 1..out.len() {
            let u = &self.flux[k - 1];
            for e in 0..n {
                z[e] = w[e] - tau * (self.a.eval_deriv(u[e]) * w[e] + b.eval(u[e]));
            }
            let mut rhs = vec![0.0; n + 1];
            ops.mass_p().mul_vec(&r, &mut rhs);
            ops.coupling_t(&z, &mut tmp);
            for (x, t) in rhs.iter_mut().zip(&tmp) {
                *x += tau * t;
            }
            ops.solve_schur(&mut rhs);
            r = rhs;
            for e in 0..n {
                w[e] = z[e] - c * (r[e + 1] - r[e]);
            }
            out[k] = r[0] - r[n];
        }
        MeasurementSeries::new(self.problem.grid, out)
    }

    /// `F'(a)ᵀ W ψ` as a vector over knot values, where `W` holds the
    /// trapezoid weights of the time grid.
    pub fn apply_transpose(&self, psi: &MeasurementSeries) -> Result<Vec<f64>> {
        if psi.grid != self.problem.grid {
            return Err(Error::Contract("residual lives on a different time grid".into()));
        }
        let ops = &self.problem.ops;
        let mesh = ops.mesh();
        let n = mesh.n_elements();
        let tau = ops.tau();
        let c = tau / mesh.h();
        let grid = self.a.grid();
        let nk = grid.n_knots();
        let weights = psi.weights();
        let phi: Vec<f64> = psi.values.iter().zip(&weights).map(|(v, w)| v * w).collect();
        let nt = self.problem.grid.n_steps;

        let mut grad = vec![0.0; nk];
        let mut basis = vec![0.0; nk];
        let mut lam_r = vec![0.0; n + 1];
        lam_r[0] = phi[nt];
        lam_r[n] = -phi[nt];
        let mut lam_w = vec![0.0; n];
        let mut lam_z = vec![0.0; n];
        let mut tmp = vec![0.0; n + 1];
        let mut bmu = vec![0.0; n];
        for k in (1..=nt).rev() {
            // Contribution of rᵏ through wᵏ = z − c B rᵏ.
            ops.coupling_t(&lam_w, &mut tmp);
            for (x, t) in lam_r.iter_mut().zip(&tmp) {
                *x -= c * t;
            }
            ops.solve_schur(&mut lam_r);
            let mu = &lam_r;
            ops.coupling(mu, &mut bmu);
            for e in 0..n {
                lam_z[e] = lam_w[e] + tau * bmu[e];
            }
            let u = &self.flux[k - 1];
            for e in 0..n {
                grid.basis_weights(u[e], &mut basis);
                let s = -tau * lam_z[e];
                for (g, bj) in grad.iter_mut().zip(&basis) {
                    *g += s * bj;
                }
                lam_w[e] = lam_z[e] * (1.0 - tau * self.a.eval_deriv(u[e]));
            }
            ops.mass_p().mul_vec(mu, &mut tmp);
            lam_r.copy_from_slice(&tmp);
            lam_r[0] += phi[k - 1];
            lam_r[n] -= phi[k - 1];
        }
        Ok(grad)
    }
}

pub fn apply_jacobian(handle: &JacobianHandle, b: &SplineParameter) -> Result<MeasurementSeries> {
    handle.apply(b)
}

pub fn apply_jacobian_transpose(handle: &JacobianHandle, psi: &MeasurementSeries) -> Result<Vec<f64>> {
    handle.apply_transpose(psi)
}

/// `F(a)` together with the dense Jacobian columns `∂F/∂s_j` for the
/// requested knot indices, computed in one forward sweep without storing
/// the trajectory.
#[derive(Debug, Clone)]
pub struct DenseJacobian {
    pub output: MeasurementSeries,
    pub columns: Vec<usize>,
    /// `data[c][k]` = derivative of sample `k` with respect to knot `columns[c]`.
    pub data: Vec<Vec<f64>>,
}

impl DenseJacobian {
    /// `J x` for `x` indexed like `columns`.
    pub fn mul(&self, x: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        for (col, xi) in self.data.iter().zip(x) {
            for (o, v) in out.iter_mut().zip(col) {
                *o += xi * v;
            }
        }
    }

    /// `Jᵀ W y`.
    pub fn mul_transpose_weighted(&self, y: &[f64], out: &mut [f64]) {
        let grid = self.output.grid;
        for (o, col) in out.iter_mut().zip(&self.data) {
            *o = crate::measurement::weighted_inner(grid, col, y);
        }
    }
}

pub fn dense_jacobian(problem: &ForwardProblem, a: &SplineParameter, columns: &[usize]) -> Result<DenseJacobian> {
    let ops = &problem.ops;
    let mesh = ops.mesh();
    let n = mesh.n_elements();
    let tau = ops.tau();
    let c = tau / mesh.h();
    let grid = a.grid();
    let nk = grid.n_knots();
    if columns.iter().any(|&j| j >= nk) {
        return Err(Error::Contract("column index outside the knot range".into()));
    }
    let nd = columns.len();
    let len = problem.grid.len();
    let mp = ops.mass_p();

    // All directions advance together; vectors are node-major,
    // `r[j * nd + d]` holding node `j` of direction `d`.
    let mut r = vec![0.0; (n + 1) * nd];
    let mut w = vec![0.0; n * nd];
    let mut z = vec![0.0; n * nd];
    let mut rhs = vec![0.0; (n + 1) * nd];
    let mut basis = vec![0.0; nk];
    let mut data = vec![vec![0.0; len]; nd];

    let (mut p, mut u) = problem.initial_state();
    let mut work = crate::discretization::StepWork::new(mesh);
    let mut output = vec![0.0; len];
    output[0] = p[0] - p[n];
    for k in 1..len {
        for e in 0..n {
            grid.basis_weights(u[e], &mut basis);
            let damp = 1.0 - tau * a.eval_deriv(u[e]);
            let ze = &mut z[e * nd..(e + 1) * nd];
            let we = &w[e * nd..(e + 1) * nd];
            for (d, &j) in columns.iter().enumerate() {
                ze[d] = damp * we[d] - tau * basis[j];
            }
        }
        // rhs = Mp r + τ Bᵀ z
        for j in 0..=n {
            let (lo, hi) = (j.saturating_sub(1), (j + 1).min(n));
            let row = &mut rhs[j * nd..(j + 1) * nd];
            let diag = mp.diag[j];
            let rj = &r[j * nd..(j + 1) * nd];
            for d in 0..nd {
                row[d] = diag * rj[d];
            }
            if j > 0 {
                let off = mp.off[j - 1];
                let rl = &r[lo * nd..(lo + 1) * nd];
                let zl = &z[(j - 1) * nd..j * nd];
                for d in 0..nd {
                    row[d] += off * rl[d] + tau * zl[d];
                }
            }
            if j < n {
                let off = mp.off[j];
                let rh = &r[hi * nd..(hi + 1) * nd];
                let zr = &z[j * nd..(j + 1) * nd];
                for d in 0..nd {
                    row[d] += off * rh[d] - tau * zr[d];
                }
            }
        }
        ops.solve_schur_many(&mut rhs, nd);
        std::mem::swap(&mut r, &mut rhs);
        for e in 0..n {
            let (re, rn) = (&r[e * nd..(e + 1) * nd], &r[(e + 1) * nd..(e + 2) * nd]);
            let ze = &z[e * nd..(e + 1) * nd];
            let we = &mut w[e * nd..(e + 1) * nd];
            for d in 0..nd {
                we[d] = ze[d] - c * (rn[d] - re[d]);
            }
        }
        for (d, col) in data.iter_mut().enumerate() {
            col[k] = r[d] - r[n * nd + d];
        }
        crate::discretization::step_in_place(ops, &mut p, &mut u, problem.boundary[k], a, &mut work);
        if let Some(&bad) = u.iter().find(|v| !v.is_finite()) {
            return Err(Error::DomainExcursion { value: bad, step: k });
        }
        output[k] = p[0] - p[n];
    }
    Ok(DenseJacobian {
        output: MeasurementSeries::new(problem.grid, output)?,
        columns: columns.to_vec(),
        data,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discretization::{BoundarySchedule, Mesh1D};
    use crate::measurement::TimeGrid;
    use crate::parameter::{true_parameter, KnotGrid};
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn coarse() -> (Arc<ForwardProblem>, SplineParameter) {
        let horizon = 2.0;
        let sched = BoundarySchedule::symmetric(
            move |t| 2.0 * (std::f64::consts::PI * t / (2.0 * horizon)).sin().powi(2),
            horizon,
        );
        let grid = TimeGrid {
            tau: horizon / 32.0,
            n_steps: 32,
        };
        let problem = ForwardProblem::new(Mesh1D::new(16).unwrap(), grid, &sched, 1.0).unwrap();
        let a = true_parameter(KnotGrid::new(0.0, 2.0, 6).unwrap());
        (Arc::new(problem), a)
    }

    fn random_spline(a: &SplineParameter, rng: &mut ChaCha8Rng) -> SplineParameter {
        let v = (0..a.grid().n_knots()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        a.with_values(v).unwrap()
    }

    #[test]
    fn zero_direction_and_zero_residual() {
        let (problem, a) = coarse();
        let h = JacobianHandle::new(problem.clone(), a.clone()).unwrap();
        let y = h.apply(&SplineParameter::zeros(a.grid().clone())).unwrap();
        assert!(y.values.iter().all(|v| *v == 0.0));
        let g = h.apply_transpose(&MeasurementSeries::zeros(problem.grid)).unwrap();
        assert!(g.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn dense_transpose_oracle() {
        let (problem, a) = coarse();
        let h = JacobianHandle::new(problem.clone(), a.clone()).unwrap();
        let nk = a.grid().n_knots();
        let cols: Vec<MeasurementSeries> = (0..nk)
            .map(|j| {
                let mut e = vec![0.0; nk];
                e[j] = 1.0;
                h.apply(&a.with_values(e).unwrap()).unwrap()
            })
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let psi = MeasurementSeries::new(problem.grid, (0..problem.grid.len()).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
        let adj = h.apply_transpose(&psi).unwrap();
        for j in 0..nk {
            let expected = cols[j].inner(&psi);
            assert_relative_eq!(adj[j], expected, max_relative = 1e-12, epsilon = 1e-15);
        }
        // The fused dense sweep agrees with the stored-trajectory columns.
        let all: Vec<usize> = (0..nk).collect();
        let dj = dense_jacobian(&problem, &a, &all).unwrap();
        assert_eq!(dj.output, *h.output());
        for j in 0..nk {
            for (x, y) in dj.data[j].iter().zip(&cols[j].values) {
                assert_relative_eq!(x, y, max_relative = 1e-12, epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn linear_in_direction() {
        let (problem, a) = coarse();
        let h = JacobianHandle::new(problem, a.clone()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let b1 = random_spline(&a, &mut rng);
        let b2 = random_spline(&a, &mut rng);
        let y1 = h.apply(&b1).unwrap();
        let y2 = h.apply(&b2).unwrap();
        let y12 = h.apply(&b1.add_scaled(1.0, &b2)).unwrap();
        for k in 0..y1.len() {
            assert!((y12.values[k] - y1.values[k] - y2.values[k]).abs() < 1e-14);
        }
    }

    #[test]
    fn central_difference_agrees() {
        let (problem, a) = coarse();
        let h = JacobianHandle::new(problem.clone(), a.clone()).unwrap();
        let b = SplineParameter::sample(a.grid().clone(), |u| (-(u - 1.0) * (u - 1.0) / 0.1).exp());
        let jb = h.apply(&b).unwrap();
        for s in [1e-3, 1e-4, 1e-5] {
            let fp = problem.pressure_drop(&a.add_scaled(s, &b)).unwrap();
            let fm = problem.pressure_drop(&a.add_scaled(-s, &b)).unwrap();
            let fd: Vec<f64> = fp.values.iter().zip(&fm.values).map(|(x, y)| (x - y) / (2.0 * s)).collect();
            let fd = MeasurementSeries::new(problem.grid, fd).unwrap();
            let rel = fd.sub(&jb).norm() / jb.norm();
            assert!(rel < 1e-5, "s={s}: rel {rel}");
        }
    }

    #[test]
    fn foreign_direction_is_rejected() {
        let (problem, a) = coarse();
        let h = JacobianHandle::new(problem.clone(), a.clone()).unwrap();
        let other = true_parameter(KnotGrid::new(0.0, 2.0, 8).unwrap());
        assert!(matches!(h.apply(&other), Err(Error::Contract(_))));
        assert!(h.is_valid_for(&problem, &a));
        assert!(!h.is_valid_for(&problem, &a.add_scaled(0.1, &a)));
    }
}
