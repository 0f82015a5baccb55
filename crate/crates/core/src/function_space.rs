//! Uniform grids on (0,1), trapezoid quadrature and sampled time profiles.
//!
//! Boundary values are never stored. A `SampledFunction` holds the `m`
//! interior values and is understood to vanish at `x = 0` and `x = 1`, so the
//! composite trapezoid rule reduces to `h * sum(values)`.

use std::fmt::Debug;
use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Field of sample values: `f64` or `Complex64`.
pub trait Scalar:
    Copy
    + Debug
    + PartialEq
    + Send
    + Sync
    + Add<Output = Self>
    + Sub<Output = Self>
    + Neg<Output = Self>
    + Mul<Output = Self>
    + Mul<f64, Output = Self>
    + AddAssign
    + 'static
{
    fn zero() -> Self;
    fn from_real(x: f64) -> Self;
    fn conj(self) -> Self;
    fn norm_sqr(self) -> f64;
    fn to_complex(self) -> Complex64;
}

impl Scalar for f64 {
    fn zero() -> Self {
        0.0
    }
    fn from_real(x: f64) -> Self {
        x
    }
    fn conj(self) -> Self {
        self
    }
    fn norm_sqr(self) -> f64 {
        self * self
    }
    fn to_complex(self) -> Complex64 {
        Complex64::new(self, 0.0)
    }
}

impl Scalar for Complex64 {
    fn zero() -> Self {
        Complex64::new(0.0, 0.0)
    }
    fn from_real(x: f64) -> Self {
        Complex64::new(x, 0.0)
    }
    fn conj(self) -> Self {
        Complex64::conj(&self)
    }
    fn norm_sqr(self) -> f64 {
        Complex64::norm_sqr(&self)
    }
    fn to_complex(self) -> Complex64 {
        self
    }
}

/// Uniform grid of `m` interior nodes `x_i = i h`, `h = 1/(m+1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    m: usize,
    h: f64,
}

impl Grid {
    pub fn new(m: usize) -> Result<Self> {
        if m == 0 {
            return Err(Error::invalid("grid needs at least one interior node"));
        }
        Ok(Grid {
            m,
            h: 1.0 / (m as f64 + 1.0),
        })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    /// Interior node `i`, 1-based as in `x_i = i h`.
    pub fn node(&self, i: usize) -> f64 {
        i as f64 * self.h
    }

    /// Interior nodes in increasing order.
    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (1..=self.m).map(move |i| self.node(i))
    }

    /// Cell midpoints `x_{k+1/2}` for `k = 0..=m` (there are `m + 1` cells).
    pub fn midpoints(&self) -> impl Iterator<Item = f64> + '_ {
        (0..=self.m).map(move |k| (k as f64 + 0.5) * self.h)
    }

    pub fn sample<T: Scalar>(&self, f: impl Fn(f64) -> T) -> SampledFunction<T> {
        SampledFunction {
            grid: *self,
            values: self.nodes().map(f).collect(),
        }
    }
}

/// Values at the interior nodes of a grid; zero at both ends by convention.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledFunction<T = f64> {
    grid: Grid,
    values: Vec<T>,
}

impl<T: Scalar> SampledFunction<T> {
    pub fn new(grid: Grid, values: Vec<T>) -> Result<Self> {
        if values.len() != grid.m() {
            return Err(Error::invalid(format!(
                "{} samples for a grid with {} interior nodes",
                values.len(),
                grid.m()
            )));
        }
        Ok(SampledFunction { grid, values })
    }

    pub fn zeros(grid: Grid) -> Self {
        SampledFunction {
            grid,
            values: vec![T::zero(); grid.m()],
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    pub fn map<U: Scalar>(&self, f: impl Fn(T) -> U) -> SampledFunction<U> {
        SampledFunction {
            grid: self.grid,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn to_complex(&self) -> SampledFunction<Complex64> {
        self.map(Scalar::to_complex)
    }

    pub fn scale(&self, c: f64) -> Self {
        self.map(|v| v * c)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        check_same_grid(&self.grid, &other.grid)?;
        Ok(SampledFunction {
            grid: self.grid,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| a - b)
                .collect(),
        })
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        check_same_grid(&self.grid, &other.grid)?;
        Ok(SampledFunction {
            grid: self.grid,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| a + b)
                .collect(),
        })
    }

    pub fn max_abs(&self) -> f64 {
        self.values
            .iter()
            .map(|v| v.norm_sqr().sqrt())
            .fold(0.0, f64::max)
    }

    pub fn l2_norm(&self) -> f64 {
        l2_norm(self)
    }

    /// Values at `x_0 = 0, x_1, ..., x_m, x_{m+1} = 1` including the zero ends.
    pub fn padded(&self) -> Vec<T> {
        let mut out = Vec::with_capacity(self.values.len() + 2);
        out.push(T::zero());
        out.extend_from_slice(&self.values);
        out.push(T::zero());
        out
    }

    /// Forward differences `(u_{k+1} - u_k)/h` on all `m + 1` cells.
    pub fn cell_derivative(&self) -> Vec<T> {
        let p = self.padded();
        let inv_h = 1.0 / self.grid.h();
        p.windows(2).map(|w| (w[1] - w[0]) * inv_h).collect()
    }

    /// Centered second difference at the interior nodes.
    pub fn second_derivative(&self) -> SampledFunction<T> {
        let p = self.padded();
        let inv_h2 = 1.0 / (self.grid.h() * self.grid.h());
        SampledFunction {
            grid: self.grid,
            values: p
                .windows(3)
                .map(|w| (w[2] - w[1] - w[1] + w[0]) * inv_h2)
                .collect(),
        }
    }

    /// L2 norm of the cellwise derivative, `(sum_k h |u'_k|^2)^{1/2}`.
    pub fn derivative_l2_norm(&self) -> f64 {
        let h = self.grid.h();
        self.cell_derivative()
            .iter()
            .map(|d| d.norm_sqr() * h)
            .sum::<f64>()
            .sqrt()
    }
}

pub(crate) fn check_same_grid(a: &Grid, b: &Grid) -> Result<()> {
    if a.m() != b.m() {
        return Err(Error::invalid(format!(
            "grid mismatch: {} vs {} interior nodes",
            a.m(),
            b.m()
        )));
    }
    Ok(())
}

/// Composite trapezoid rule with zero endpoint values.
pub fn trapezoid_integrate<T: Scalar>(f: &SampledFunction<T>) -> Result<T> {
    if f.values.is_empty() {
        return Err(Error::invalid("cannot integrate over an empty grid"));
    }
    let mut acc = T::zero();
    for &v in &f.values {
        acc += v;
    }
    Ok(acc * f.grid.h())
}

/// `int_0^1 f conj(g) dx` by the trapezoid rule.
pub fn inner_product<T: Scalar>(f: &SampledFunction<T>, g: &SampledFunction<T>) -> Result<T> {
    check_same_grid(&f.grid, &g.grid)?;
    let mut acc = T::zero();
    for (&a, &b) in f.values.iter().zip(&g.values) {
        acc += a * b.conj();
    }
    Ok(acc * f.grid.h())
}

pub fn l2_norm<T: Scalar>(f: &SampledFunction<T>) -> f64 {
    let s: f64 = f.values.iter().map(|v| v.norm_sqr()).sum();
    (s * f.grid.h()).sqrt()
}

/// Uniform time nodes `t_j = j T / steps`, `j = 0..=steps`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    t_end: f64,
    steps: usize,
}

impl TimeGrid {
    pub fn new(t_end: f64, steps: usize) -> Result<Self> {
        if !(t_end > 0.0 && t_end.is_finite()) {
            return Err(Error::invalid(format!("final time must be positive, got {t_end}")));
        }
        if steps == 0 {
            return Err(Error::invalid("time grid needs at least one step"));
        }
        Ok(TimeGrid { t_end, steps })
    }

    pub fn t_end(&self) -> f64 {
        self.t_end
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn len(&self) -> usize {
        self.steps + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dt(&self) -> f64 {
        self.t_end / self.steps as f64
    }

    pub fn time(&self, j: usize) -> f64 {
        if j == self.steps {
            self.t_end
        } else {
            j as f64 * self.t_end / self.steps as f64
        }
    }

    pub fn times(&self) -> Vec<f64> {
        (0..=self.steps).map(|j| self.time(j)).collect()
    }

    /// The same interval split `factor` times finer.
    pub fn refined(&self, factor: usize) -> Self {
        TimeGrid {
            t_end: self.t_end,
            steps: self.steps * factor.max(1),
        }
    }
}

/// Sampled coefficient `a(t) >= a0 > 0` with its cumulative integral.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeProfile {
    timegrid: TimeGrid,
    a_values: Vec<f64>,
    a_floor: f64,
    phase: Vec<f64>,
}

impl TimeProfile {
    pub fn new(timegrid: TimeGrid, a_values: Vec<f64>, a_floor: f64) -> Result<Self> {
        if a_values.len() != timegrid.len() {
            return Err(Error::invalid(format!(
                "{} samples of a(t) for {} time nodes",
                a_values.len(),
                timegrid.len()
            )));
        }
        if !(a_floor > 0.0) {
            return Err(Error::invalid(format!("a0 must be positive, got {a_floor}")));
        }
        cumulative_phase(TimeProfile {
            timegrid,
            a_values,
            a_floor,
            phase: Vec::new(),
        })
    }

    pub fn from_fn(timegrid: TimeGrid, a_floor: f64, a: impl Fn(f64) -> f64) -> Result<Self> {
        let values = timegrid.times().into_iter().map(a).collect();
        Self::new(timegrid, values, a_floor)
    }

    pub fn constant(timegrid: TimeGrid, value: f64) -> Result<Self> {
        Self::new(timegrid, vec![value; timegrid.len()], value)
    }

    pub fn timegrid(&self) -> &TimeGrid {
        &self.timegrid
    }

    pub fn a_values(&self) -> &[f64] {
        &self.a_values
    }

    pub fn a_floor(&self) -> f64 {
        self.a_floor
    }

    /// `A(t_j) = int_0^{t_j} a`.
    pub fn phase(&self) -> &[f64] {
        &self.phase
    }

    pub fn sup_norm(&self) -> f64 {
        self.a_values.iter().map(|a| a.abs()).fold(0.0, f64::max)
    }

    /// Piecewise-linear interpolant of `a` on a grid `factor` times finer.
    /// Its trapezoid phase agrees with `phase()` at the coarse nodes.
    pub fn refined(&self, factor: usize) -> Result<Self> {
        if factor <= 1 {
            return Ok(self.clone());
        }
        let fine = self.timegrid.refined(factor);
        let mut values = Vec::with_capacity(fine.len());
        for w in self.a_values.windows(2) {
            for k in 0..factor {
                let s = k as f64 / factor as f64;
                values.push(w[0] + (w[1] - w[0]) * s);
            }
        }
        values.push(*self.a_values.last().expect("time grid is never empty"));
        TimeProfile::new(fine, values, self.a_floor)
    }
}

/// Recomputes the cumulative trapezoid phase; idempotent.
pub fn cumulative_phase(mut a: TimeProfile) -> Result<TimeProfile> {
    for (j, &v) in a.a_values.iter().enumerate() {
        if !(v >= a.a_floor) {
            return Err(Error::PositivityViolation {
                time: a.timegrid.time(j),
                value: v,
                floor: a.a_floor,
            });
        }
    }
    // sum first, scale last: a constant profile then gives A(t_j) = a t_j exactly
    let scale = a.timegrid.t_end() / (2.0 * a.timegrid.steps() as f64);
    let mut phase = Vec::with_capacity(a.a_values.len());
    let mut acc = 0.0;
    phase.push(0.0);
    for w in a.a_values.windows(2) {
        acc += w[0] + w[1];
        phase.push(acc * scale);
    }
    a.phase = phase;
    Ok(a)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn grid_spacing_and_nodes() {
        let g = Grid::new(999).unwrap();
        assert!((g.h() * (g.m() as f64 + 1.0) - 1.0).abs() < 1e-15);
        let nodes: Vec<f64> = g.nodes().collect();
        assert!(nodes.windows(2).all(|w| w[0] < w[1]));
        assert!(nodes[0] > 0.0 && *nodes.last().unwrap() < 1.0);
        assert!(Grid::new(0).is_err());
    }

    #[test]
    fn trapezoid_of_constant_drops_the_end_cells() {
        let g = Grid::new(999).unwrap();
        let one = g.sample(|_| 1.0);
        let v = trapezoid_integrate(&one).unwrap();
        assert!((v - (1.0 - g.h())).abs() < 1e-12);
    }

    #[test]
    fn trapezoid_analytic_integrals() {
        let g = Grid::new(999).unwrap();
        let v = trapezoid_integrate(&g.sample(|x| (PI * x).sin())).unwrap();
        assert!((v - 2.0 / PI).abs() < 1e-5);
        let g = Grid::new(1999).unwrap();
        let v = trapezoid_integrate(&g.sample(|x| x * (1.0 - x))).unwrap();
        assert!((v - 1.0 / 6.0).abs() < 1e-6);
    }

    #[test]
    fn trapezoid_exact_for_hat_affine_pieces() {
        // affine on each side of a node and zero at both ends
        let g = Grid::new(9).unwrap();
        let f = g.sample(|x| if x <= 0.5 { x } else { 1.0 - x });
        let v = trapezoid_integrate(&f).unwrap();
        assert!((v - 0.25).abs() < 1e-15);
    }

    #[test]
    fn inner_products() {
        let g = Grid::new(999).unwrap();
        let s1 = g.sample(|x| 2f64.sqrt() * (PI * x).sin());
        let s2 = g.sample(|x| 2f64.sqrt() * (2.0 * PI * x).sin());
        assert!((inner_product(&s1, &s1).unwrap() - 1.0).abs() < 1e-5);
        assert!(inner_product(&s1, &s2).unwrap().abs() < 1e-8);

        let f = g.sample(|x| Complex64::new(0.0, (PI * x).sin()));
        let gg = g.sample(|x| Complex64::new((PI * x).sin(), 0.0));
        let ip = inner_product(&f, &gg).unwrap();
        assert!((ip - Complex64::new(0.0, 0.5)).norm() < 1e-6);

        let other = Grid::new(10).unwrap().sample(|_| 1.0);
        assert!(inner_product(&s1, &other).is_err());
    }

    #[test]
    fn empty_values_rejected() {
        let g = Grid::new(3).unwrap();
        assert!(SampledFunction::<f64>::new(g, vec![]).is_err());
    }

    #[test]
    fn phase_examples() {
        let tg = TimeGrid::new(1.0, 1000).unwrap();
        let a = TimeProfile::constant(tg, 1.0).unwrap();
        assert_eq!(*a.phase().last().unwrap(), 1.0);

        let a = TimeProfile::from_fn(tg, 1.0, |t| 1.0 + t).unwrap();
        assert!((a.phase().last().unwrap() - 1.5).abs() < 1e-10);

        let a = TimeProfile::from_fn(tg, 1.0, |t| 2.0 + (2.0 * PI * t).cos()).unwrap();
        assert!((a.phase().last().unwrap() - 2.0).abs() < 1e-5);
        assert!(a.phase().windows(2).all(|w| w[1] >= w[0]));
        assert_eq!(a.phase()[0], 0.0);

        let again = cumulative_phase(a.clone()).unwrap();
        assert_eq!(again, a);
    }

    #[test]
    fn positivity_is_enforced() {
        let tg = TimeGrid::new(1.0, 10).unwrap();
        let err = TimeProfile::from_fn(tg, 0.5, |t| 1.0 - t).unwrap_err();
        assert!(matches!(err, Error::PositivityViolation { .. }));
    }

    #[test]
    fn time_grid_endpoints() {
        let tg = TimeGrid::new(0.7, 3).unwrap();
        let t = tg.times();
        assert_eq!(t[0], 0.0);
        assert_eq!(*t.last().unwrap(), 0.7);
    }

    #[test]
    fn refined_profile_keeps_coarse_phase() {
        let tg = TimeGrid::new(1.0, 50).unwrap();
        let a = TimeProfile::from_fn(tg, 0.5, |t| 1.0 + 0.5 * (3.0 * t).sin()).unwrap();
        let r = a.refined(7).unwrap();
        for j in 0..=50 {
            assert!((r.phase()[7 * j] - a.phase()[j]).abs() < 1e-13);
        }
    }

    #[test]
    fn second_order_convergence() {
        let exact = 2.0 / PI;
        let err = |m: usize| {
            let g = Grid::new(m).unwrap();
            (trapezoid_integrate(&g.sample(|x| (PI * x).sin())).unwrap() - exact).abs()
        };
        let mut prev = err(15);
        for k in [31, 63, 127, 255] {
            let e = err(k);
            assert!(e <= prev);
            let rate = (prev / e).log2();
            assert!((1.8..=2.2).contains(&rate), "rate {rate}");
            prev = e;
        }
    }
}
