//! Steady states, the stationary forward operator `(K a)(t) = a(g(t))`, the
//! closed-form reconstruction from quasi-stationary data, and the distance
//! between instationary and stationary solutions.

use std::sync::Arc;

use crate::discretization::{pressure_mass, ForwardProblem};
use crate::error::{Error, Result};
use crate::measurement::MeasurementSeries;
use crate::parameter::{FrictionLaw, KnotGrid, SplineParameter};

/// Constant flux `ū = ḡ` with affine pressure `p̄(x) = p_anchor − Δp̄·x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SteadyState {
    pub g_bar: f64,
    pub u_bar: f64,
    pub p_anchor: f64,
    pub delta_p: f64,
}

impl SteadyState {
    pub fn pressure(&self, x: f64) -> f64 {
        self.p_anchor - self.delta_p * x
    }

    pub fn mean_pressure(&self) -> f64 {
        self.p_anchor - 0.5 * self.delta_p
    }
}

/// Steady state for boundary flux `g_bar`, anchored so that `∫p̄ = mass`.
pub fn solve_steady<A: FrictionLaw + ?Sized>(a: &A, g_bar: f64, mass: f64) -> SteadyState {
    let delta_p = a.value(g_bar);
    SteadyState {
        g_bar,
        u_bar: g_bar,
        p_anchor: mass + 0.5 * delta_p,
        delta_p,
    }
}

/// `(K a)(t_k) = a(g(t_k))`.
pub fn apply_k<A: FrictionLaw + ?Sized>(a: &A, g: &MeasurementSeries) -> MeasurementSeries {
    MeasurementSeries {
        grid: g.grid,
        values: g.values.iter().map(|&x| a.value(x)).collect(),
    }
}

/// Result of inverting `K` on sampled data.
#[derive(Debug, Clone)]
pub struct StationaryReconstruction {
    pub parameter: SplineParameter,
    /// Knots without enough nearby samples; their values were interpolated.
    pub missing: Vec<usize>,
}

/// Recovers knot values from pairs `(g(t_k), Δp(t_k))` by reading the
/// relation `a(g) = Δp` off the data around each knot.
///
/// Samples are binned by flux value: for knot `u_i`, all samples with
/// `|g − u_i| ≤ Δu` enter a least-squares quadratic in `g − u_i`, whose
/// constant term is the knot value. With fewer than three distinct flux
/// values in the window the knot is marked missing and filled by linear
/// interpolation (or constant extrapolation) from its neighbours.
pub fn stationary_reconstruct(
    grid: Arc<KnotGrid>,
    g: &MeasurementSeries,
    dp: &MeasurementSeries,
) -> Result<StationaryReconstruction> {
    if g.len() != dp.len() {
        return Err(Error::Contract("flux and pressure-drop series differ in length".into()));
    }
    let du = grid.spacing();
    let knots = grid.knots();
    let mut values: Vec<Option<f64>> = Vec::with_capacity(knots.len());
    for &ui in &knots {
        values.push(local_quadratic_fit(ui, du, &g.values, &dp.values));
    }
    let missing: Vec<usize> = values
        .iter()
        .enumerate()
        .filter_map(|(i, v)| v.is_none().then_some(i))
        .collect();
    if missing.len() == knots.len() {
        return Err(Error::config("flux samples do not reach any knot"));
    }
    if !missing.is_empty() {
        log::warn!("stationary reconstruction: no data near knots {missing:?}, interpolating");
    }
    let present: Vec<usize> = (0..knots.len()).filter(|i| values[*i].is_some()).collect();
    let filled: Vec<f64> = (0..knots.len())
        .map(|i| match values[i] {
            Some(v) => v,
            None => {
                let left = present.iter().rev().find(|&&j| j < i).copied();
                let right = present.iter().find(|&&j| j > i).copied();
                match (left, right) {
                    (Some(l), Some(r)) => {
                        let (vl, vr) = (values[l].unwrap(), values[r].unwrap());
                        let t = (i - l) as f64 / (r - l) as f64;
                        (1.0 - t) * vl + t * vr
                    }
                    (Some(l), None) => values[l].unwrap(),
                    (None, Some(r)) => values[r].unwrap(),
                    (None, None) => unreachable!("at least one knot has data"),
                }
            }
        })
        .collect();
    Ok(StationaryReconstruction {
        parameter: SplineParameter::fit(grid, filled)?,
        missing,
    })
}

fn local_quadratic_fit(center: f64, radius: f64, g: &[f64], dp: &[f64]) -> Option<f64> {
    // Normal equations of the weighted fit in the scaled variable
    // x = (g − center)/radius ∈ [−1, 1].
    let mut ata = nalgebra::Matrix3::<f64>::zeros();
    let mut atb = nalgebra::Vector3::<f64>::zeros();
    let mut count = 0usize;
    let mut xmin = f64::INFINITY;
    let mut xmax = f64::NEG_INFINITY;
    for (&gk, &yk) in g.iter().zip(dp) {
        let x = (gk - center) / radius;
        if x.abs() > 1.0 + 1e-12 {
            continue;
        }
        let row = nalgebra::Vector3::new(1.0, x, x * x);
        ata += row * row.transpose();
        atb += row * yk;
        count += 1;
        xmin = xmin.min(x);
        xmax = xmax.max(x);
    }
    // Three samples spread over some fraction of the window.
    if count < 3 || xmax - xmin < 1e-3 {
        return None;
    }
    let sol = ata.cholesky()?.solve(&atb);
    sol[0].is_finite().then_some(sol[0])
}

/// Distances between the instationary trajectory and the family of steady
/// states driven by the same boundary flux.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProximityMetrics {
    /// `max_t ‖p − p̄‖_{L²} + ‖u − ū‖_{L²}`.
    pub e: f64,
    /// `max_t |Δp − Δp̄|`.
    pub d: f64,
}

/// Runs the instationary model and measures its distance to the
/// quasi-stationary states at every time level. Requires `g0 = g1`; the
/// steady pressure is anchored to the conserved mean of `p`.
pub fn proximity_metrics<A: FrictionLaw + ?Sized>(problem: &ForwardProblem, a: &A) -> Result<ProximityMetrics> {
    if problem.boundary.iter().any(|(g0, g1)| g0 != g1) {
        return Err(Error::config("proximity metrics need equal boundary fluxes"));
    }
    let ops = problem.ops.clone();
    let mesh = ops.mesh();
    let h = mesh.h();
    let mut diff = vec![0.0; mesh.n_nodes()];
    let mut mdiff = vec![0.0; mesh.n_nodes()];
    let mut e = 0.0_f64;
    let mut d = 0.0_f64;
    problem.march(a, |k, p, u| {
        let g = problem.boundary[k].0;
        let steady = solve_steady(a, g, pressure_mass(p, &ops));
        for (j, dj) in diff.iter_mut().enumerate() {
            *dj = p[j] - steady.pressure(mesh.node(j));
        }
        ops.mass_p().mul_vec(&diff, &mut mdiff);
        let ep: f64 = diff.iter().zip(&mdiff).map(|(x, y)| x * y).sum::<f64>().max(0.0).sqrt();
        let eu = (h * u.iter().map(|ue| (ue - g) * (ue - g)).sum::<f64>()).sqrt();
        e = e.max(ep + eu);
        d = d.max((p[0] - p[p.len() - 1] - steady.delta_p).abs());
    })?;
    Ok(ProximityMetrics { e, d })
}
