//! Mixed finite elements for the damped wave system: continuous P1
//! pressure, discontinuous P0 flux, implicit wave terms and explicit
//! friction in time.
//!
//! One step solves
//!
//! ```text
//! (p', q)/τ − (u', ∂x q) = (p, q)/τ + g0' q(0) − g1' q(1)
//! (u', v)/τ + (∂x p', v) = (u, v)/τ − (a(u), v)
//! ```
//!
//! by eliminating `u'` through the diagonal P0 mass matrix and solving the
//! tridiagonal Schur complement `Mp + τ² Bᵀ Mu⁻¹ B` for `p'`.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::linalg::{SymTridiagonal, TridiagonalLdl};
use crate::measurement::{MeasurementSeries, TimeGrid};
use crate::parameter::FrictionLaw;

/// Uniform mesh of the unit interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Mesh1D {
    n_elements: usize,
}

impl Mesh1D {
    pub fn new(n_elements: usize) -> Result<Self> {
        if n_elements < 2 {
            return Err(Error::config(format!(
                "mesh needs at least 2 elements, got {n_elements}"
            )));
        }
        Ok(Self { n_elements })
    }

    pub fn n_elements(&self) -> usize {
        self.n_elements
    }

    pub fn n_nodes(&self) -> usize {
        self.n_elements + 1
    }

    pub fn h(&self) -> f64 {
        1.0 / self.n_elements as f64
    }

    pub fn node(&self, j: usize) -> f64 {
        j as f64 * self.h()
    }
}

/// Assembled matrices for one `(mesh, τ)` pair.
///
/// The coupling matrix `B` has entries `(v_e, ∂x q_j)`, i.e. `-1` and `+1`
/// on the two nodes of each element, and is applied matrix-free.
#[derive(Debug, Clone)]
pub struct DiscreteOperators {
    mesh: Mesh1D,
    tau: f64,
    mass_p: SymTridiagonal,
    mass_u: Vec<f64>,
    schur: SymTridiagonal,
    schur_ldl: TridiagonalLdl,
}

pub fn assemble_operators(mesh: Mesh1D, tau: f64) -> Result<DiscreteOperators> {
    DiscreteOperators::assemble(mesh, tau)
}

impl DiscreteOperators {
    pub fn assemble(mesh: Mesh1D, tau: f64) -> Result<Self> {
        if !(tau > 0.0) || !tau.is_finite() {
            return Err(Error::config(format!("time step must be positive, got {tau}")));
        }
        let n = mesh.n_elements();
        let h = mesh.h();
        let mut diag = vec![2.0 * h / 3.0; n + 1];
        diag[0] = h / 3.0;
        diag[n] = h / 3.0;
        let mass_p = SymTridiagonal::new(diag, vec![h / 6.0; n]);
        let mass_u = vec![h; n];

        let k = tau * tau / h;
        let mut sd = mass_p.diag.clone();
        for (j, d) in sd.iter_mut().enumerate() {
            let adjacent = if j == 0 || j == n { 1.0 } else { 2.0 };
            *d += k * adjacent;
        }
        let so = mass_p.off.iter().map(|o| o - k).collect();
        let schur = SymTridiagonal::new(sd, so);
        let schur_ldl = schur.factorize()?;
        Ok(Self {
            mesh,
            tau,
            mass_p,
            mass_u,
            schur,
            schur_ldl,
        })
    }

    pub fn mesh(&self) -> Mesh1D {
        self.mesh
    }
    pub fn tau(&self) -> f64 {
        self.tau
    }
    pub fn mass_p(&self) -> &SymTridiagonal {
        &self.mass_p
    }
    pub fn mass_u(&self) -> &[f64] {
        &self.mass_u
    }
    pub fn schur(&self) -> &SymTridiagonal {
        &self.schur
    }

    /// `y = B p` (element-wise pressure increments).
    pub fn coupling(&self, p: &[f64], y: &mut [f64]) {
        for (e, ye) in y.iter_mut().enumerate() {
            *ye = p[e + 1] - p[e];
        }
    }

    /// `y = Bᵀ u`.
    pub fn coupling_t(&self, u: &[f64], y: &mut [f64]) {
        let n = u.len();
        y[0] = -u[0];
        for j in 1..n {
            y[j] = u[j - 1] - u[j];
        }
        y[n] = u[n - 1];
    }

    pub fn coupling_dense(&self) -> nalgebra::DMatrix<f64> {
        let n = self.mesh.n_elements();
        nalgebra::DMatrix::from_fn(n, n + 1, |e, j| {
            if j == e {
                -1.0
            } else if j == e + 1 {
                1.0
            } else {
                0.0
            }
        })
    }

    pub(crate) fn solve_schur(&self, rhs: &mut [f64]) {
        self.schur_ldl.solve_in_place(rhs);
    }

    pub(crate) fn solve_schur_many(&self, rhs: &mut [f64], k: usize) {
        self.schur_ldl.solve_many_in_place(rhs, k);
    }
}

/// `½ (pᵀ Mp p + uᵀ Mu u)`.
pub fn discrete_energy(p: &[f64], u: &[f64], ops: &DiscreteOperators) -> f64 {
    let mut mp = vec![0.0; p.len()];
    ops.mass_p.mul_vec(p, &mut mp);
    let ep: f64 = p.iter().zip(&mp).map(|(a, b)| a * b).sum();
    let eu: f64 = u.iter().zip(&ops.mass_u).map(|(a, m)| a * a * m).sum();
    0.5 * (ep + eu)
}

/// `∫ p dx` for a P1 field.
pub fn pressure_mass(p: &[f64], ops: &DiscreteOperators) -> f64 {
    let h = ops.mesh.h();
    let n = p.len() - 1;
    h * (0.5 * (p[0] + p[n]) + p[1..n].iter().sum::<f64>())
}

/// Scratch buffers reused across steps.
#[derive(Debug, Clone)]
pub(crate) struct StepWork {
    pub z: Vec<f64>,
    pub rhs: Vec<f64>,
    pub tmp: Vec<f64>,
}

impl StepWork {
    pub fn new(mesh: Mesh1D) -> Self {
        Self {
            z: vec![0.0; mesh.n_elements()],
            rhs: vec![0.0; mesh.n_nodes()],
            tmp: vec![0.0; mesh.n_nodes()],
        }
    }
}

/// Advances `(p, u)` by one step in place, with boundary fluxes taken at
/// the new time level.
pub(crate) fn step_in_place<A: FrictionLaw + ?Sized>(
    ops: &DiscreteOperators,
    p: &mut [f64],
    u: &mut [f64],
    g_next: (f64, f64),
    a: &A,
    work: &mut StepWork,
) {
    let tau = ops.tau;
    let n = u.len();
    for (z, &ue) in work.z.iter_mut().zip(u.iter()) {
        *z = ue - tau * a.value(ue);
    }
    ops.mass_p.mul_vec(p, &mut work.rhs);
    ops.coupling_t(&work.z, &mut work.tmp);
    for (r, t) in work.rhs.iter_mut().zip(&work.tmp) {
        *r += tau * t;
    }
    work.rhs[0] += tau * g_next.0;
    work.rhs[n] -= tau * g_next.1;
    ops.solve_schur(&mut work.rhs);
    p.copy_from_slice(&work.rhs);
    let c = tau / ops.mesh.h();
    for e in 0..n {
        u[e] = work.z[e] - c * (p[e + 1] - p[e]);
    }
}

/// One time step of the scheme.
pub fn forward_step<A: FrictionLaw + ?Sized>(
    ops: &DiscreteOperators,
    p_n: &[f64],
    u_n: &[f64],
    g_next: (f64, f64),
    a: &A,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let mesh = ops.mesh;
    if p_n.len() != mesh.n_nodes() || u_n.len() != mesh.n_elements() {
        return Err(Error::Contract("state vectors do not match the mesh".into()));
    }
    let mut p = p_n.to_vec();
    let mut u = u_n.to_vec();
    let mut work = StepWork::new(mesh);
    step_in_place(ops, &mut p, &mut u, g_next, a, &mut work);
    if let Some(&bad) = u.iter().find(|v| !v.is_finite()) {
        return Err(Error::DomainExcursion { value: bad, step: 1 });
    }
    Ok((p, u))
}

type Flux = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Boundary fluxes `u(0,t) = g0(t)`, `u(1,t) = g1(t)` on `[0, T]`.
#[derive(Clone)]
pub struct BoundarySchedule {
    pub g0: Flux,
    pub g1: Flux,
    pub horizon: f64,
}

impl fmt::Debug for BoundarySchedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BoundarySchedule")
            .field("horizon", &self.horizon)
            .finish_non_exhaustive()
    }
}

impl BoundarySchedule {
    pub fn new(
        g0: impl Fn(f64) -> f64 + Send + Sync + 'static,
        g1: impl Fn(f64) -> f64 + Send + Sync + 'static,
        horizon: f64,
    ) -> Self {
        Self {
            g0: Arc::new(g0),
            g1: Arc::new(g1),
            horizon,
        }
    }

    /// The same flux at both ends.
    pub fn symmetric(g: impl Fn(f64) -> f64 + Send + Sync + 'static, horizon: f64) -> Self {
        let g: Flux = Arc::new(g);
        Self {
            g0: g.clone(),
            g1: g,
            horizon,
        }
    }

    pub fn homogeneous(horizon: f64) -> Self {
        Self::symmetric(|_| 0.0, horizon)
    }

    /// Compatibility of the data with a resting initial state.
    pub fn starts_at_rest(&self) -> bool {
        (self.g0)(0.0) == 0.0 && (self.g1)(0.0) == 0.0
    }

    pub fn sample(&self, grid: &TimeGrid) -> Vec<(f64, f64)> {
        (0..grid.len())
            .map(|k| {
                let t = grid.time(k);
                ((self.g0)(t), (self.g1)(t))
            })
            .collect()
    }
}

/// Pressure and flux coefficients at every time level.
#[derive(Debug, Clone, PartialEq)]
pub struct StateTrajectory {
    pub grid: TimeGrid,
    pub p: Vec<Vec<f64>>,
    pub u: Vec<Vec<f64>>,
}

impl StateTrajectory {
    pub fn len(&self) -> usize {
        self.p.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p.is_empty()
    }

    pub fn times(&self) -> Vec<f64> {
        self.grid.times()
    }
}

/// Everything needed to map a friction law to pressure-drop data: the
/// operators, the time grid, boundary data and the constant initial
/// pressure (initial flux is zero).
#[derive(Debug, Clone)]
pub struct ForwardProblem {
    pub ops: Arc<DiscreteOperators>,
    pub grid: TimeGrid,
    pub boundary: Vec<(f64, f64)>,
    pub p_init: f64,
}

impl ForwardProblem {
    pub fn new(mesh: Mesh1D, grid: TimeGrid, schedule: &BoundarySchedule, p_init: f64) -> Result<Self> {
        if (grid.horizon() - schedule.horizon).abs() > 1e-9 * schedule.horizon.max(1.0) {
            return Err(Error::config(format!(
                "time grid covers [0, {}] but the schedule horizon is {}",
                grid.horizon(),
                schedule.horizon
            )));
        }
        let ops = Arc::new(DiscreteOperators::assemble(mesh, grid.tau)?);
        Ok(Self {
            ops,
            grid,
            boundary: schedule.sample(&grid),
            p_init,
        })
    }

    pub fn mesh(&self) -> Mesh1D {
        self.ops.mesh
    }

    pub fn initial_state(&self) -> (Vec<f64>, Vec<f64>) {
        let mesh = self.ops.mesh;
        (vec![self.p_init; mesh.n_nodes()], vec![0.0; mesh.n_elements()])
    }

    /// Runs the scheme, handing every time level `k = 0..=Nt` to `visit`.
    pub fn march<A, V>(&self, a: &A, mut visit: V) -> Result<()>
    where
        A: FrictionLaw + ?Sized,
        V: FnMut(usize, &[f64], &[f64]),
    {
        let (mut p, mut u) = self.initial_state();
        let mut work = StepWork::new(self.ops.mesh);
        visit(0, &p, &u);
        let mut excursion = 0.0_f64;
        for k in 1..self.grid.len() {
            step_in_place(&self.ops, &mut p, &mut u, self.boundary[k], a, &mut work);
            for &ue in &u {
                if !ue.is_finite() {
                    return Err(Error::DomainExcursion { value: ue, step: k });
                }
                excursion = excursion.max(-ue).max(ue - 2.0);
            }
            visit(k, &p, &u);
        }
        if excursion > 0.0 {
            log::debug!("flux left [0, 2] by up to {excursion:.3e}");
        }
        Ok(())
    }

    pub fn solve<A: FrictionLaw + ?Sized>(&self, a: &A) -> Result<StateTrajectory> {
        let mut p_all = Vec::with_capacity(self.grid.len());
        let mut u_all = Vec::with_capacity(self.grid.len());
        self.march(a, |_, p, u| {
            p_all.push(p.to_vec());
            u_all.push(u.to_vec());
        })?;
        Ok(StateTrajectory {
            grid: self.grid,
            p: p_all,
            u: u_all,
        })
    }

    /// `F(a)`: the pressure drop `p(0,t) − p(1,t)` without storing states.
    pub fn pressure_drop<A: FrictionLaw + ?Sized>(&self, a: &A) -> Result<MeasurementSeries> {
        let mut values = Vec::with_capacity(self.grid.len());
        self.march(a, |_, p, _| values.push(p[0] - p[p.len() - 1]))?;
        MeasurementSeries::new(self.grid, values)
    }
}

/// Full trajectory for the given friction law and boundary data, starting
/// from `p ≡ p_init`, `u ≡ 0`.
pub fn solve_forward<A: FrictionLaw + ?Sized>(
    mesh: Mesh1D,
    grid: TimeGrid,
    a: &A,
    schedule: &BoundarySchedule,
    p_init: f64,
) -> Result<StateTrajectory> {
    ForwardProblem::new(mesh, grid, schedule, p_init)?.solve(a)
}

pub fn observe_pressure_drop(traj: &StateTrajectory) -> MeasurementSeries {
    let values = traj.p.iter().map(|p| p[0] - p[p.len() - 1]).collect();
    MeasurementSeries {
        grid: traj.grid,
        values,
    }
}
