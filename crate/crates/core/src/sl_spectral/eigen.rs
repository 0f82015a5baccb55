//! Bisection eigenvalues and inverse-iteration eigenvectors.

use rayon::prelude::*;

use super::{sturm_count, OperatorMatrix};
use crate::error::{Error, Result};
use crate::function_space::SampledFunction;

/// Relative bracket width at which bisection stops.
pub const BISECTION_RTOL: f64 = 1e-12;
/// Residual target, relative to `||A||_inf ||v||`.
pub const RESIDUAL_TOL: f64 = 1e-10;
pub const MAX_INVERSE_ITERATIONS: usize = 5;
/// Polishing steps taken after the residual test first passes.
const EXTRA_ITERATIONS: usize = 2;
/// Eigenvalues closer than this (relative) are re-orthogonalized.
pub const CLUSTER_RGAP: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct EigenPair {
    /// 1-based mode number.
    pub index: usize,
    pub lambda: f64,
    /// Unit L2 norm, first extremum positive.
    pub phi: SampledFunction<f64>,
}

pub fn solve_eigen(matrix: &OperatorMatrix, n_modes: usize) -> Result<Vec<EigenPair>> {
    let n = matrix.dim();
    if n_modes == 0 || n_modes > n {
        return Err(Error::invalid(format!(
            "requested {n_modes} modes from a {n}x{n} matrix"
        )));
    }
    let lambdas: Vec<f64> = (1..=n_modes)
        .into_par_iter()
        .map(|k| bisect(matrix, k))
        .collect();

    let anorm = matrix.inf_norm();
    let mut vectors: Vec<Vec<f64>> = lambdas
        .par_iter()
        .enumerate()
        .map(|(k, &lam)| inverse_iteration(matrix, lam, k + 1, anorm, &[]))
        .collect::<Result<_>>()?;

    // clustered eigenvalues: redo the vector orthogonally to its cluster
    for k in 1..n_modes {
        let mut start = k;
        while start > 0 && lambdas[k] - lambdas[start - 1] < CLUSTER_RGAP * lambdas[k].abs() {
            start -= 1;
        }
        if start < k {
            let earlier: Vec<&[f64]> = vectors[start..k].iter().map(|v| v.as_slice()).collect();
            vectors[k] = inverse_iteration(matrix, lambdas[k], k + 1, anorm, &earlier)?;
        }
    }

    let grid = *matrix.grid();
    vectors
        .into_iter()
        .zip(lambdas)
        .enumerate()
        .map(|(k, (mut v, _))| {
            let lambda = rayleigh_quotient(matrix, &v);
            let norm = (v.iter().map(|x| x * x).sum::<f64>() * grid.h()).sqrt();
            let sign = first_extremum_sign(&v);
            let scale = sign / norm;
            v.iter_mut().for_each(|x| *x *= scale);
            Ok(EigenPair {
                index: k + 1,
                lambda,
                phi: SampledFunction::new(grid, v)?,
            })
        })
        .collect()
}

/// `v^T A v / v^T v` written as a sum of squares,
/// `sum_i -e_i (v_i - v_{i+1})^2 + sum_i (d_i + e_{i-1} + e_i) v_i^2`,
/// which avoids the cancellation of the plain product when `||A|| >> lambda`.
fn rayleigh_quotient(matrix: &OperatorMatrix, v: &[f64]) -> f64 {
    let (d, e) = (matrix.diag(), matrix.offdiag());
    let n = v.len();
    let mut num = 0.0;
    for i in 0..n {
        let left = if i > 0 { e[i - 1] } else { 0.0 };
        let right = if i + 1 < n { e[i] } else { 0.0 };
        num += (d[i] + left + right) * v[i] * v[i];
        if i + 1 < n {
            num -= e[i] * (v[i] - v[i + 1]).powi(2);
        }
    }
    num / v.iter().map(|x| x * x).sum::<f64>()
}

/// `k`-th smallest eigenvalue (1-based) by Sturm bisection.
fn bisect(matrix: &OperatorMatrix, k: usize) -> f64 {
    let (mut lo, mut hi) = matrix.gershgorin();
    let pad = 1e-12 * (lo.abs().max(hi.abs())).max(1.0);
    lo -= pad;
    hi += pad;
    loop {
        let mid = 0.5 * (lo + hi);
        if hi - lo <= BISECTION_RTOL * lo.abs().max(hi.abs()) || mid <= lo || mid >= hi {
            return mid;
        }
        if sturm_count(matrix, mid) >= k {
            hi = mid;
        } else {
            lo = mid;
        }
    }
}

fn inverse_iteration(
    matrix: &OperatorMatrix,
    lambda: f64,
    mode: usize,
    anorm: f64,
    orthogonal_to: &[&[f64]],
) -> Result<Vec<f64>> {
    let n = matrix.dim();
    let lu = ShiftedLu::factor(matrix, lambda, anorm);
    // deterministic start vector with components along every eigenvector
    let mut x: Vec<f64> = (0..n)
        .map(|i| 1.0 + 0.5 * ((i as f64 + 1.0) * 0.754_877_666).sin())
        .collect();
    let mut residual = f64::INFINITY;
    let mut extra = EXTRA_ITERATIONS;
    for _ in 0..MAX_INVERSE_ITERATIONS + EXTRA_ITERATIONS {
        project_out(&mut x, orthogonal_to);
        normalize(&mut x);
        let mut y = lu.solve(&x);
        project_out(&mut y, orthogonal_to);
        normalize(&mut y);
        let ay = matrix.apply(&y);
        residual = ay
            .iter()
            .zip(&y)
            .map(|(a, v)| (a - lambda * v).powi(2))
            .sum::<f64>()
            .sqrt()
            / anorm;
        x = y;
        if residual <= RESIDUAL_TOL {
            if extra == 0 {
                return Ok(x);
            }
            extra -= 1;
        }
    }
    if residual <= RESIDUAL_TOL {
        return Ok(x);
    }
    Err(Error::NumericFailure { mode, residual })
}

fn normalize(x: &mut [f64]) {
    let n = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    if n > 0.0 {
        x.iter_mut().for_each(|v| *v /= n);
    }
}

fn project_out(x: &mut [f64], basis: &[&[f64]]) {
    for b in basis {
        let bb: f64 = b.iter().map(|v| v * v).sum();
        let c: f64 = x.iter().zip(b.iter()).map(|(p, q)| p * q).sum::<f64>() / bb;
        x.iter_mut().zip(b.iter()).for_each(|(p, q)| *p -= c * q);
    }
}

/// Sign of the first local extremum of `|v|` that rises above noise level.
fn first_extremum_sign(v: &[f64]) -> f64 {
    let peak = v.iter().map(|x| x.abs()).fold(0.0, f64::max);
    let floor = 1e-3 * peak;
    let n = v.len();
    for i in 0..n {
        let here = v[i].abs();
        let next = if i + 1 < n { v[i + 1].abs() } else { 0.0 };
        if here > floor && next < here {
            return if v[i] < 0.0 { -1.0 } else { 1.0 };
        }
    }
    1.0
}

/// LU factorization of `A - sigma I` with partial pivoting (tridiagonal,
/// fill-in confined to a second superdiagonal).
struct ShiftedLu {
    /// Upper factor: `u0[i]` diagonal, `u1[i]`, `u2[i]` first and second superdiagonals.
    u0: Vec<f64>,
    u1: Vec<f64>,
    u2: Vec<f64>,
    /// Multipliers and whether rows `i`, `i+1` were swapped at step `i`.
    mult: Vec<f64>,
    swapped: Vec<bool>,
}

impl ShiftedLu {
    fn factor(a: &OperatorMatrix, sigma: f64, anorm: f64) -> Self {
        let n = a.dim();
        let tiny = f64::EPSILON * anorm.max(f64::MIN_POSITIVE);
        let mut d: Vec<f64> = a.diag().iter().map(|x| x - sigma).collect();
        let mut du: Vec<f64> = a.offdiag().to_vec();
        du.push(0.0);
        let dl: Vec<f64> = a.offdiag().to_vec();
        let mut u2 = vec![0.0; n];
        let mut mult = vec![0.0; n.saturating_sub(1)];
        let mut swapped = vec![false; n.saturating_sub(1)];
        for i in 0..n.saturating_sub(1) {
            let sub = dl[i];
            if d[i].abs() >= sub.abs() {
                if d[i] == 0.0 {
                    d[i] = tiny;
                }
                let l = sub / d[i];
                mult[i] = l;
                d[i + 1] -= l * du[i];
            } else {
                // swap rows i and i+1
                swapped[i] = true;
                let l = d[i] / sub;
                mult[i] = l;
                let row_i_du = du[i];
                d[i] = sub;
                du[i] = d[i + 1];
                u2[i] = du[i + 1];
                d[i + 1] = row_i_du - l * du[i];
                du[i + 1] = -l * u2[i];
            }
        }
        if n > 0 && d[n - 1] == 0.0 {
            d[n - 1] = tiny;
        }
        for x in d.iter_mut() {
            if x.abs() < tiny {
                *x = if *x < 0.0 { -tiny } else { tiny };
            }
        }
        ShiftedLu {
            u0: d,
            u1: du,
            u2,
            mult,
            swapped,
        }
    }

    fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.u0.len();
        let mut y = b.to_vec();
        for i in 0..n.saturating_sub(1) {
            if self.swapped[i] {
                y.swap(i, i + 1);
            }
            y[i + 1] -= self.mult[i] * y[i];
        }
        let mut x = vec![0.0; n];
        for i in (0..n).rev() {
            let mut s = y[i];
            if i + 1 < n {
                s -= self.u1[i] * x[i + 1];
            }
            if i + 2 < n {
                s -= self.u2[i] * x[i + 2];
            }
            x[i] = s / self.u0[i];
        }
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::function_space::Grid;
    use crate::sl_spectral::{assemble, PotentialSpec};
    use std::f64::consts::PI;

    #[test]
    fn lu_solves_indefinite_systems() {
        let g = Grid::new(6).unwrap();
        let a = OperatorMatrix::new(
            g,
            vec![1.0, -3.0, 0.5, 2.0, 0.0, 4.0],
            vec![2.0, 1.0, -1.5, 3.0, 0.7],
        )
        .unwrap();
        let lu = ShiftedLu::factor(&a, 0.3, a.inf_norm());
        let x_true = vec![1.0, -2.0, 0.5, 3.0, -1.0, 0.25];
        let shifted: Vec<f64> = a
            .apply(&x_true)
            .iter()
            .zip(&x_true)
            .map(|(ax, x)| ax - 0.3 * x)
            .collect();
        let x = lu.solve(&shifted);
        for (p, q) in x.iter().zip(&x_true) {
            assert!((p - q).abs() < 1e-12, "{p} vs {q}");
        }
    }

    #[test]
    fn laplacian_spectrum() {
        let g = Grid::new(1999).unwrap();
        let a = assemble(&PotentialSpec::zero(g), &g).unwrap();
        let pairs = solve_eigen(&a, 5).unwrap();
        for p in &pairs {
            let exact = (PI * p.index as f64).powi(2);
            assert!((p.lambda / exact - 1.0).abs() < 1e-3);
            let discrete = 4.0 / (g.h() * g.h()) * (0.5 * PI * p.index as f64 * g.h()).sin().powi(2);
            assert!((p.lambda / discrete - 1.0).abs() < 1e-11);
        }
    }

    #[test]
    fn constant_shift_spectrum() {
        let g = Grid::new(1999).unwrap();
        let a0 = assemble(&PotentialSpec::zero(g), &g).unwrap();
        let a10 = assemble(&PotentialSpec::constant(g, 10.0), &g).unwrap();
        let p0 = solve_eigen(&a0, 5).unwrap();
        let p10 = solve_eigen(&a10, 5).unwrap();
        for (x, y) in p0.iter().zip(&p10) {
            assert!((y.lambda - x.lambda - 10.0).abs() < 1e-6);
            let exact = (PI * x.index as f64).powi(2) + 10.0;
            assert!((y.lambda / exact - 1.0).abs() < 1e-3);
        }
    }

    #[test]
    fn vectors_are_normalized_with_positive_first_lobe() {
        let g = Grid::new(255).unwrap();
        let a = assemble(&PotentialSpec::zero(g), &g).unwrap();
        for p in solve_eigen(&a, 6).unwrap() {
            let n2: f64 = p.phi.values().iter().map(|v| v * v).sum::<f64>() * g.h();
            assert!((n2.sqrt() - 1.0).abs() < 1e-10);
            // sqrt(2) sin(n pi x) starts positive
            assert!(p.phi.values()[0] > 0.0);
        }
    }

    #[test]
    fn too_many_modes() {
        let g = Grid::new(4).unwrap();
        let a = assemble(&PotentialSpec::zero(g), &g).unwrap();
        assert!(solve_eigen(&a, 5).is_err());
        assert!(solve_eigen(&a, 0).is_err());
    }
}
