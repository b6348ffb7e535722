//! Friction-law candidates as cubic not-a-knot interpolating splines on a
//! uniform knot grid, the discrete `H²` Gram operator acting on knot
//! values, and the slope-constraint projection.

use std::sync::Arc;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Anything that can serve as the damping term `a(u)` of the forward model.
pub trait FrictionLaw {
    fn value(&self, xi: f64) -> f64;
    fn slope(&self, xi: f64) -> f64;
}

/// The reference law `a(u) = u·sqrt(1 + u²)`.
#[derive(Debug, Clone, Copy, Default)]
pub struct ReferenceFriction;

pub fn reference_friction(u: f64) -> f64 {
    u * (1.0 + u * u).sqrt()
}

pub fn reference_friction_slope(u: f64) -> f64 {
    (1.0 + 2.0 * u * u) / (1.0 + u * u).sqrt()
}

impl FrictionLaw for ReferenceFriction {
    fn value(&self, xi: f64) -> f64 {
        reference_friction(xi)
    }
    fn slope(&self, xi: f64) -> f64 {
        reference_friction_slope(xi)
    }
}

/// Uniform knots `u_0 < … < u_m` on `[lo, hi]` together with the linear map
/// from knot values to spline second derivatives (moments).
#[derive(Debug, Clone)]
pub struct KnotGrid {
    lo: f64,
    hi: f64,
    m: usize,
    du: f64,
    /// `moments = moment_map · values`, row-major `(m+1)×(m+1)`.
    moment_map: Vec<f64>,
}

impl PartialEq for KnotGrid {
    fn eq(&self, other: &Self) -> bool {
        self.lo == other.lo && self.hi == other.hi && self.m == other.m
    }
}

impl KnotGrid {
    /// `m` is the number of intervals; at least four are required.
    pub fn new(lo: f64, hi: f64, m: usize) -> Result<Arc<Self>> {
        if m < 4 {
            return Err(Error::config(format!(
                "not-a-knot spline needs at least 5 knots, got {}",
                m + 1
            )));
        }
        if !(hi > lo) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::config(format!("invalid knot interval [{lo}, {hi}]")));
        }
        let du = (hi - lo) / m as f64;
        let n = m + 1;
        // Moment equations: not-a-knot rows at both ends, standard
        // continuity rows in the interior.
        let mut a = DMatrix::<f64>::zeros(n, n);
        let mut c = DMatrix::<f64>::zeros(n, n);
        a[(0, 0)] = 1.0;
        a[(0, 1)] = -2.0;
        a[(0, 2)] = 1.0;
        a[(m, m - 2)] = 1.0;
        a[(m, m - 1)] = -2.0;
        a[(m, m)] = 1.0;
        let scale = 6.0 / (du * du);
        for i in 1..m {
            a[(i, i - 1)] = 1.0;
            a[(i, i)] = 4.0;
            a[(i, i + 1)] = 1.0;
            c[(i, i - 1)] = scale;
            c[(i, i)] = -2.0 * scale;
            c[(i, i + 1)] = scale;
        }
        let lu = a.lu();
        let r = lu
            .solve(&c)
            .ok_or_else(|| Error::config("singular not-a-knot moment system"))?;
        let mut moment_map = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                moment_map[i * n + j] = r[(i, j)];
            }
        }
        Ok(Arc::new(Self {
            lo,
            hi,
            m,
            du,
            moment_map,
        }))
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }
    pub fn hi(&self) -> f64 {
        self.hi
    }
    /// Number of intervals.
    pub fn intervals(&self) -> usize {
        self.m
    }
    pub fn n_knots(&self) -> usize {
        self.m + 1
    }
    pub fn spacing(&self) -> f64 {
        self.du
    }
    pub fn knot(&self, i: usize) -> f64 {
        if i == self.m {
            self.hi
        } else {
            self.lo + i as f64 * self.du
        }
    }
    pub fn knots(&self) -> Vec<f64> {
        (0..=self.m).map(|i| self.knot(i)).collect()
    }

    /// Index of the knot sitting at `u = 0`, if any.
    pub fn zero_knot(&self) -> Option<usize> {
        if self.lo > 0.0 || self.hi < 0.0 {
            return None;
        }
        let i = (-self.lo / self.du).round() as usize;
        (self.knot(i).abs() <= 1e-12 * self.du).then_some(i)
    }

    fn moments(&self, values: &[f64]) -> Vec<f64> {
        let n = self.n_knots();
        (0..n)
            .map(|i| {
                let row = &self.moment_map[i * n..(i + 1) * n];
                row.iter().zip(values).map(|(r, v)| r * v).sum()
            })
            .collect()
    }

    fn locate(&self, xi: f64) -> (usize, f64) {
        let x = (xi - self.lo) / self.du;
        let i = (x.floor().max(0.0) as usize).min(self.m - 1);
        (i, x - i as f64)
    }

    fn odd_extension(&self) -> bool {
        self.lo == 0.0
    }

    /// Writes `∂s(xi)/∂s_j` for all knots `j` into `out`, following the
    /// same extension rule as [`SplineParameter::eval`].
    pub fn basis_weights(&self, xi: f64, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.n_knots());
        out.iter_mut().for_each(|o| *o = 0.0);
        self.add_basis_weights(xi, 1.0, out);
    }

    fn add_basis_weights(&self, xi: f64, scale: f64, out: &mut [f64]) {
        if xi > self.hi {
            self.add_interior_weights(self.hi, scale, false, out);
            self.add_interior_weights(self.hi, scale * (xi - self.hi), true, out);
        } else if xi < self.lo {
            if self.odd_extension() {
                self.add_basis_weights(-xi, -scale, out);
            } else {
                self.add_interior_weights(self.lo, scale, false, out);
                self.add_interior_weights(self.lo, scale * (xi - self.lo), true, out);
            }
        } else {
            self.add_interior_weights(xi, scale, false, out);
        }
    }

    fn add_interior_weights(&self, xi: f64, scale: f64, derivative: bool, out: &mut [f64]) {
        let n = self.n_knots();
        let (i, t) = self.locate(xi);
        let h = self.du;
        let s = 1.0 - t;
        let (wl, wr, cl, cr) = if derivative {
            (
                -1.0 / h,
                1.0 / h,
                -h / 6.0 * (3.0 * s * s - 1.0),
                h / 6.0 * (3.0 * t * t - 1.0),
            )
        } else {
            (s, t, h * h / 6.0 * (s * s * s - s), h * h / 6.0 * (t * t * t - t))
        };
        out[i] += scale * wl;
        out[i + 1] += scale * wr;
        let (cl, cr) = (scale * cl, scale * cr);
        let ri = &self.moment_map[i * n..(i + 1) * n];
        let rj = &self.moment_map[(i + 1) * n..(i + 2) * n];
        for j in 0..n {
            out[j] += cl * ri[j] + cr * rj[j];
        }
    }
}

/// A cubic not-a-knot spline through `(u_i, s_i)`, extended to the whole
/// real line: odd reflection below zero (when the grid starts at 0, linear
/// continuation otherwise) and linear continuation with the end slope above
/// the last knot.
#[derive(Debug, Clone, PartialEq)]
pub struct SplineParameter {
    grid: Arc<KnotGrid>,
    values: Vec<f64>,
    moments: Vec<f64>,
}

impl SplineParameter {
    pub fn fit(grid: Arc<KnotGrid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n_knots() {
            return Err(Error::Contract(format!(
                "{} values for {} knots",
                values.len(),
                grid.n_knots()
            )));
        }
        let moments = grid.moments(&values);
        Ok(Self {
            grid,
            values,
            moments,
        })
    }

    pub fn sample(grid: Arc<KnotGrid>, f: impl Fn(f64) -> f64) -> Self {
        let values = grid.knots().into_iter().map(f).collect();
        Self::fit(grid, values).expect("sampled values match knot count")
    }

    pub fn zeros(grid: Arc<KnotGrid>) -> Self {
        let n = grid.n_knots();
        Self::fit(grid, vec![0.0; n]).expect("knot count")
    }

    pub fn grid(&self) -> &Arc<KnotGrid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        Self::fit(self.grid.clone(), values)
    }

    /// `self + scale·other`, knot-wise.
    pub fn add_scaled(&self, scale: f64, other: &SplineParameter) -> SplineParameter {
        debug_assert!(self.grid == other.grid);
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a + scale * b)
            .collect();
        Self::fit(self.grid.clone(), values).expect("same grid")
    }

    pub fn eval(&self, xi: f64) -> f64 {
        let g = &*self.grid;
        if xi > g.hi {
            self.eval_interior(g.hi) + (xi - g.hi) * self.deriv_interior(g.hi)
        } else if xi < g.lo {
            if g.odd_extension() {
                -self.eval(-xi)
            } else {
                self.eval_interior(g.lo) + (xi - g.lo) * self.deriv_interior(g.lo)
            }
        } else {
            self.eval_interior(xi)
        }
    }

    pub fn eval_deriv(&self, xi: f64) -> f64 {
        let g = &*self.grid;
        if xi > g.hi {
            self.deriv_interior(g.hi)
        } else if xi < g.lo {
            if g.odd_extension() {
                self.eval_deriv(-xi)
            } else {
                self.deriv_interior(g.lo)
            }
        } else {
            self.deriv_interior(xi)
        }
    }

    /// Second derivative inside the knot interval.
    pub fn eval_second(&self, xi: f64) -> f64 {
        let (i, t) = self.grid.locate(xi.clamp(self.grid.lo, self.grid.hi));
        (1.0 - t) * self.moments[i] + t * self.moments[i + 1]
    }

    fn eval_interior(&self, xi: f64) -> f64 {
        let (i, t) = self.grid.locate(xi);
        let h = self.grid.du;
        let s = 1.0 - t;
        s * self.values[i]
            + t * self.values[i + 1]
            + h * h / 6.0 * ((s * s * s - s) * self.moments[i] + (t * t * t - t) * self.moments[i + 1])
    }

    fn deriv_interior(&self, xi: f64) -> f64 {
        let (i, t) = self.grid.locate(xi);
        let h = self.grid.du;
        let s = 1.0 - t;
        (self.values[i + 1] - self.values[i]) / h
            + h / 6.0 * (-(3.0 * s * s - 1.0) * self.moments[i] + (3.0 * t * t - 1.0) * self.moments[i + 1])
    }

    /// Largest `|s''|` and `|s'''|` over the knot interval.
    pub fn curvature_bounds(&self) -> (f64, f64) {
        let second = self.moments.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        let third = self
            .moments
            .windows(2)
            .map(|w| ((w[1] - w[0]) / self.grid.du).abs())
            .fold(0.0, f64::max);
        (second, third)
    }
}

impl FrictionLaw for SplineParameter {
    fn value(&self, xi: f64) -> f64 {
        self.eval(xi)
    }
    fn slope(&self, xi: f64) -> f64 {
        self.eval_deriv(xi)
    }
}

/// Samples the reference friction law at the knots.
pub fn true_parameter(grid: Arc<KnotGrid>) -> SplineParameter {
    SplineParameter::sample(grid, reference_friction)
}

/// Slope bounds `a0_lower ≤ a' ≤ a1_upper`; the curvature bounds are only
/// recorded for reporting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParameterBounds {
    pub a0_lower: f64,
    pub a1_upper: f64,
    #[serde(default)]
    pub a2: Option<f64>,
    #[serde(default)]
    pub a3: Option<f64>,
}

impl Default for ParameterBounds {
    fn default() -> Self {
        Self {
            a0_lower: 0.1,
            a1_upper: 20.0,
            a2: None,
            a3: None,
        }
    }
}

impl ParameterBounds {
    pub fn new(a0_lower: f64, a1_upper: f64) -> Result<Self> {
        let b = Self {
            a0_lower,
            a1_upper,
            ..Self::default()
        };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.a0_lower > 0.0 && self.a0_lower < self.a1_upper) {
            return Err(Error::config(format!(
                "slope bounds need 0 < a0 < a1, got a0={} a1={}",
                self.a0_lower, self.a1_upper
            )));
        }
        Ok(())
    }
}

// Relative slack on the slope test, so that a freshly projected vector is
// recognised as feasible despite rounding in the cumulative sum.
const SLOPE_SLACK: f64 = 1e-12;

fn is_admissible(s: &SplineParameter, b: &ParameterBounds) -> bool {
    let du = s.grid.du;
    let lo = b.a0_lower * (1.0 - SLOPE_SLACK);
    let hi = b.a1_upper * (1.0 + SLOPE_SLACK);
    let slopes_ok = s.values.windows(2).all(|w| {
        let d = (w[1] - w[0]) / du;
        d >= lo && d <= hi
    });
    let zero_ok = s.grid.zero_knot().is_none_or(|i| s.values[i] == 0.0);
    slopes_ok && zero_ok
}

/// Clips every knot increment into `[a0_lower·Δu, a1_upper·Δu]` and pins
/// `s(0) = 0` when the grid has a knot at zero. Feasible input is returned
/// unchanged.
pub fn project_admissible(s: &SplineParameter, b: &ParameterBounds) -> SplineParameter {
    if is_admissible(s, b) {
        return s.clone();
    }
    let du = s.grid.du;
    let n = s.values.len();
    let inc: Vec<f64> = s
        .values
        .windows(2)
        .map(|w| (w[1] - w[0]).clamp(b.a0_lower * du, b.a1_upper * du))
        .collect();
    let anchor = s.grid.zero_knot().unwrap_or(0);
    let mut out = vec![0.0; n];
    out[anchor] = if s.grid.zero_knot().is_some() {
        0.0
    } else {
        s.values[anchor]
    };
    for i in anchor + 1..n {
        out[i] = out[i - 1] + inc[i - 1];
    }
    for i in (0..anchor).rev() {
        out[i] = out[i + 1] - inc[i];
    }
    SplineParameter::fit(s.grid.clone(), out).expect("same grid")
}

/// Whether projection would alter `s`.
pub fn projection_active(s: &SplineParameter, b: &ParameterBounds) -> bool {
    !is_admissible(s, b)
}

/// Discrete `H²(lo, hi)` inner product on knot-value vectors,
/// `G = D0 + D1 + D2`.
///
/// `D0` uses trapezoid weights on the values, `D1` the squared forward
/// differences with weight `Δu` (midpoint rule), and `D2` the squared central
/// second differences with trapezoid weights where the end knots reuse the
/// neighbouring second difference.
#[derive(Debug, Clone)]
pub struct GramOperator {
    pub d0: DMatrix<f64>,
    pub d1: DMatrix<f64>,
    pub d2: DMatrix<f64>,
    pub g: DMatrix<f64>,
    chol: Cholesky<f64, Dyn>,
}

impl GramOperator {
    pub fn new(grid: &KnotGrid) -> Self {
        let n = grid.n_knots();
        let m = grid.m;
        let h = grid.du;
        let mut d0 = DMatrix::zeros(n, n);
        for i in 0..n {
            d0[(i, i)] = if i == 0 || i == m { 0.5 * h } else { h };
        }
        let mut diff1 = DMatrix::zeros(m, n);
        for i in 0..m {
            diff1[(i, i)] = -1.0 / h;
            diff1[(i, i + 1)] = 1.0 / h;
        }
        let d1 = diff1.transpose() * &diff1 * h;
        let mut diff2 = DMatrix::zeros(m - 1, n);
        let mut w2 = DVector::from_element(m - 1, h);
        for i in 1..m {
            diff2[(i - 1, i - 1)] = 1.0 / (h * h);
            diff2[(i - 1, i)] = -2.0 / (h * h);
            diff2[(i - 1, i + 1)] = 1.0 / (h * h);
        }
        w2[0] += 0.5 * h;
        w2[m - 2] += 0.5 * h;
        let d2 = diff2.transpose() * DMatrix::from_diagonal(&w2) * &diff2;
        let g = &d0 + &d1 + &d2;
        let chol = Cholesky::new(g.clone()).expect("Gram matrix is positive definite");
        Self { d0, d1, d2, g, chol }
    }

    pub fn dim(&self) -> usize {
        self.g.nrows()
    }

    pub fn inner(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        self.check_len(x)?;
        self.check_len(y)?;
        Ok(quad_form(&self.g, x, y))
    }

    pub fn norm(&self, x: &[f64]) -> Result<f64> {
        Ok(self.inner(x, x)?.max(0.0).sqrt())
    }

    /// Norm induced by the `L²` part `D0` alone.
    pub fn l2_norm(&self, x: &[f64]) -> Result<f64> {
        self.check_len(x)?;
        Ok(quad_form(&self.d0, x, x).max(0.0).sqrt())
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        (&self.g * DVector::from_row_slice(x)).as_slice().to_vec()
    }

    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        self.chol.solve(&DVector::from_row_slice(rhs)).as_slice().to_vec()
    }

    fn check_len(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::Contract(format!(
                "vector of length {} paired with Gram operator of size {}",
                x.len(),
                self.dim()
            )));
        }
        Ok(())
    }
}

fn quad_form(a: &DMatrix<f64>, x: &[f64], y: &[f64]) -> f64 {
    let n = x.len();
    let mut acc = 0.0;
    for i in 0..n {
        let mut row = 0.0;
        for j in 0..n {
            row += a[(i, j)] * y[j];
        }
        acc += x[i] * row;
    }
    acc
}

/// `h2_inner(G, x, y) = xᵀ G y`.
pub fn h2_inner(g: &GramOperator, x: &[f64], y: &[f64]) -> Result<f64> {
    g.inner(x, y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn grid(m: usize) -> Arc<KnotGrid> {
        KnotGrid::new(0.0, 2.0, m).unwrap()
    }

    #[test]
    fn too_few_knots() {
        assert!(matches!(KnotGrid::new(0.0, 2.0, 3), Err(Error::Config(_))));
        assert!(KnotGrid::new(0.0, 2.0, 4).is_ok());
    }

    #[test]
    fn reproduces_cubics() {
        let g = KnotGrid::new(-1.0, 3.0, 7).unwrap();
        let f = |u: f64| 0.3 * u * u * u - 1.2 * u * u + 0.5 * u - 2.0;
        let df = |u: f64| 0.9 * u * u - 2.4 * u + 0.5;
        let s = SplineParameter::sample(g, f);
        for k in 0..=400 {
            let u = -1.0 + 4.0 * k as f64 / 400.0;
            assert_abs_diff_eq!(s.eval(u), f(u), epsilon = 1e-12);
            assert_abs_diff_eq!(s.eval_deriv(u), df(u), epsilon = 1e-11);
        }
    }

    #[test]
    fn reproduces_identity() {
        let s = SplineParameter::sample(grid(20), |u| u);
        for k in 0..=100 {
            let u = 2.0 * k as f64 / 100.0;
            assert_abs_diff_eq!(s.eval(u), u, epsilon = 1e-14);
        }
    }

    #[test]
    fn interpolation_error_is_fourth_order() {
        // Dense-evaluation oracle against the closed form.
        let err = |m: usize| {
            let s = true_parameter(grid(m));
            (0..=4000)
                .map(|k| {
                    let u = 2.0 * k as f64 / 4000.0;
                    (s.eval(u) - reference_friction(u)).abs()
                })
                .fold(0.0, f64::max)
        };
        let (e20, e40) = (err(20), err(40));
        let ratio = e20 / e40;
        assert!(ratio > 12.0, "ratio {ratio}, e20 {e20}, e40 {e40}");
    }

    #[test]
    fn reference_values() {
        let s = true_parameter(grid(20));
        assert_abs_diff_eq!(s.eval(1.0), 2f64.sqrt(), epsilon = 1e-4);
        assert_eq!(s.eval(0.0), 0.0);
        assert_abs_diff_eq!(reference_friction(2.0), 2.0 * 5f64.sqrt(), epsilon = 1e-15);
        assert_abs_diff_eq!(reference_friction(2.0), 4.472136, epsilon = 1e-6);
        // Symbolic derivative against a central difference.
        let h = 1e-6;
        let fd = (reference_friction(2.0 + h) - reference_friction(2.0 - h)) / (2.0 * h);
        assert_abs_diff_eq!(reference_friction_slope(2.0), fd, epsilon = 1e-8);
        assert_abs_diff_eq!(reference_friction_slope(2.0), 9.0 / 5f64.sqrt(), epsilon = 1e-15);
        assert_abs_diff_eq!(reference_friction_slope(2.0), 4.024922, epsilon = 1e-6);
        let b = ParameterBounds::default();
        for k in 0..=200 {
            let d = reference_friction_slope(2.0 * k as f64 / 200.0);
            assert!(b.a0_lower <= d && d <= b.a1_upper);
        }
    }

    #[test]
    fn extension_rules() {
        let s = true_parameter(grid(20));
        let x0 = 0.73;
        assert_eq!(s.eval(-x0), -s.eval(x0));
        assert_eq!(s.eval_deriv(-x0), s.eval_deriv(x0));
        assert_abs_diff_eq!(s.eval(3.0), s.eval(2.0) + s.eval_deriv(2.0), epsilon = 1e-13);
        assert_abs_diff_eq!(s.eval(-3.0), -(s.eval(2.0) + s.eval_deriv(2.0)), epsilon = 1e-13);
    }

    #[test]
    fn basis_weights_match_evaluation() {
        let g = grid(8);
        let s = SplineParameter::fit(g.clone(), (0..9).map(|i| (i as f64).sin()).collect()).unwrap();
        let mut w = vec![0.0; 9];
        for &xi in &[-2.7, -0.4, 0.0, 0.31, 1.0, 1.99, 2.0, 2.5] {
            g.basis_weights(xi, &mut w);
            let v: f64 = w.iter().zip(s.values()).map(|(a, b)| a * b).sum();
            assert_abs_diff_eq!(v, s.eval(xi), epsilon = 1e-13);
        }
    }

    #[test]
    fn gram_kernels() {
        let g = grid(20);
        let gram = GramOperator::new(&g);
        let ones = vec![1.0; 21];
        let affine: Vec<f64> = g.knots().iter().map(|u| 3.0 * u - 1.0).collect();
        let d1c = &gram.d1 * DVector::from_row_slice(&ones);
        let d2a = &gram.d2 * DVector::from_row_slice(&affine);
        assert!(d1c.amax() < 1e-12);
        assert!(d2a.amax() < 1e-9);
        assert_abs_diff_eq!(gram.inner(&ones, &ones).unwrap(), 2.0, epsilon = 1e-10);
        assert_eq!(gram.inner(&[0.0; 21], &ones).unwrap(), 0.0);
        assert!(gram.inner(&ones, &ones[..20]).is_err());
    }

    #[test]
    fn gram_norm_of_square_against_quadrature() {
        // ∫_0^2 (u⁴ + 4u² + 4) du = 32/5 + 32/3 + 8.
        let exact = 32.0 / 5.0 + 32.0 / 3.0 + 8.0;
        let err = |m: usize| {
            let g = grid(m);
            let gram = GramOperator::new(&g);
            let x: Vec<f64> = g.knots().iter().map(|u| u * u).collect();
            (gram.inner(&x, &x).unwrap() - exact).abs()
        };
        let (e1, e2) = (err(20), err(40));
        assert!(e1 < 0.05, "{e1}");
        assert!(e1 / e2 > 3.5, "{e1} {e2}");
    }

    #[test]
    fn projection_hand_example() {
        let g = grid(4);
        let b = ParameterBounds::default();
        // Δu = 0.5; increment 2→3 has slope 0 < 0.1.
        let s = SplineParameter::fit(g.clone(), vec![0.0, 0.5, 1.0, 1.0, 1.5]).unwrap();
        let p = project_admissible(&s, &b);
        for (x, y) in p.values().iter().zip([0.0, 0.5, 1.0, 1.05, 1.55]) {
            assert_abs_diff_eq!(*x, y, epsilon = 1e-14);
        }
    }

    #[test]
    fn projection_of_zero_and_feasible() {
        let g = grid(20);
        let b = ParameterBounds::default();
        let p = project_admissible(&SplineParameter::zeros(g.clone()), &b);
        for (i, w) in p.values().windows(2).enumerate() {
            assert_abs_diff_eq!((w[1] - w[0]) / g.spacing(), 0.1, epsilon = 1e-12);
            assert!(w[1] > w[0], "knot {i}");
        }
        let t = true_parameter(g);
        let q = project_admissible(&t, &b);
        assert_eq!(q.values(), t.values());
        assert!(!projection_active(&t, &b));
    }

    proptest! {
        #[test]
        fn interpolates_knot_values(vals in proptest::collection::vec(-5.0f64..5.0, 11)) {
            let g = KnotGrid::new(0.0, 2.0, 10).unwrap();
            let s = SplineParameter::fit(g.clone(), vals.clone()).unwrap();
            for (i, v) in vals.iter().enumerate() {
                prop_assert!((s.eval(g.knot(i)) - v).abs() < 1e-12);
            }
        }

        #[test]
        fn projection_idempotent_and_feasible(vals in proptest::collection::vec(-5.0f64..30.0, 11)) {
            let g = KnotGrid::new(0.0, 2.0, 10).unwrap();
            let b = ParameterBounds::default();
            let s = SplineParameter::fit(g.clone(), vals).unwrap();
            let p = project_admissible(&s, &b);
            prop_assert!(!projection_active(&p, &b));
            let pp = project_admissible(&p, &b);
            prop_assert_eq!(pp.values(), p.values());
            prop_assert_eq!(p.values()[0], 0.0);
        }

        #[test]
        fn odd_symmetry(x in 0.0f64..2.0, vals in proptest::collection::vec(-5.0f64..5.0, 9)) {
            let g = KnotGrid::new(0.0, 2.0, 9).unwrap();
            let mut v = vec![0.0];
            v.extend(vals);
            let s = SplineParameter::fit(g, v).unwrap();
            prop_assert_eq!(s.eval(-x), -s.eval(x));
        }

        #[test]
        fn gram_positive_definite(vals in proptest::collection::vec(-5.0f64..5.0, 11)) {
            let g = KnotGrid::new(0.0, 2.0, 10).unwrap();
            let gram = GramOperator::new(&g);
            let n2 = gram.inner(&vals, &vals).unwrap();
            let e2: f64 = vals.iter().map(|v| v * v).sum();
            prop_assert!(n2 >= 0.05 * e2 * g.spacing());
        }
    }
}
