//! Independent reference computations shared by the integration tests.
//! None of these call into the solver they check.
#![allow(dead_code)]

use std::path::PathBuf;

use num_complex::Complex64;

/// Eigenvalues of a dense symmetric matrix by cyclic Jacobi rotations,
/// sorted ascending.
pub fn jacobi_eigenvalues(dense: Vec<Vec<f64>>) -> Vec<f64> {
    let n = dense.len();
    // row-major copy; both triangles are kept in sync
    let mut a: Vec<f64> = dense.into_iter().flatten().collect();
    for _sweep in 0..100 {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p * n + q];
                let (app, aqq) = (a[p * n + p], a[q * n + q]);
                // negligible against both diagonal entries: annihilate
                if apq.abs() <= 1e-18 * (app.abs() + aqq.abs()) {
                    a[p * n + q] = 0.0;
                    a[q * n + p] = 0.0;
                    continue;
                }
                rotated = true;
                let theta = (aqq - app) / (2.0 * apq);
                let t = if theta == 0.0 {
                    1.0
                } else {
                    theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
                };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    if k == p || k == q {
                        continue;
                    }
                    let (akp, akq) = (a[p * n + k], a[q * n + k]);
                    let np = c * akp - s * akq;
                    let nq = s * akp + c * akq;
                    a[p * n + k] = np;
                    a[k * n + p] = np;
                    a[q * n + k] = nq;
                    a[k * n + q] = nq;
                }
                a[p * n + p] = app - t * apq;
                a[q * n + q] = aqq + t * apq;
                a[p * n + q] = 0.0;
                a[q * n + p] = 0.0;
            }
        }
        if !rotated {
            break;
        }
    }
    let mut ev: Vec<f64> = (0..n).map(|i| a[i * n + i]).collect();
    ev.sort_by(|x, y| x.partial_cmp(y).unwrap());
    ev
}

/// Hat function centered at interior node `i` (0-based) of the grid with
/// spacing `h`.
fn hat(i: usize, h: f64, x: f64) -> f64 {
    let c = (i + 1) as f64 * h;
    (1.0 - (x - c).abs() / h).max(0.0)
}

/// Lumped-mass Galerkin matrix of `-d^2/dx^2 + nu'` on piecewise-linear hats,
/// with `nu` constant on each cell and the potential form
/// `-int nu (phi_i phi_j)' dx` integrated exactly cell by cell.
pub fn hat_weak_matrix(nu_mid: &[f64]) -> Vec<Vec<f64>> {
    let m = nu_mid.len() - 1;
    let h = 1.0 / (m as f64 + 1.0);
    let mut a = vec![vec![0.0; m]; m];
    for i in 0..m {
        for j in 0..m {
            let mut stiff = 0.0;
            let mut pot = 0.0;
            for (c, nu) in nu_mid.iter().enumerate() {
                let (xl, xr) = (c as f64 * h, (c + 1) as f64 * h);
                // slopes of both hats on this cell, from a centered difference
                let xm = 0.5 * (xl + xr);
                let di = (hat(i, h, xm + 0.25 * h) - hat(i, h, xm - 0.25 * h)) / (0.5 * h);
                let dj = (hat(j, h, xm + 0.25 * h) - hat(j, h, xm - 0.25 * h)) / (0.5 * h);
                stiff += di * dj * h;
                let prod = |x: f64| hat(i, h, x) * hat(j, h, x);
                pot -= nu * (prod(xr) - prod(xl));
            }
            a[i][j] = (stiff + pot) / h;
        }
    }
    a
}

/// Classical RK4 for `u' = i mu a(t) u - i f(t)`.
pub fn rk4_mode(
    mu: f64,
    a: impl Fn(f64) -> f64,
    f: impl Fn(f64) -> Complex64,
    u0: Complex64,
    t_end: f64,
    steps: usize,
) -> Vec<Complex64> {
    let i = Complex64::new(0.0, 1.0);
    let rhs = |t: f64, u: Complex64| i * mu * a(t) * u - i * f(t);
    let dt = t_end / steps as f64;
    let mut out = Vec::with_capacity(steps + 1);
    let mut u = u0;
    out.push(u);
    for k in 0..steps {
        let t = k as f64 * dt;
        let k1 = rhs(t, u);
        let k2 = rhs(t + 0.5 * dt, u + k1 * (0.5 * dt));
        let k3 = rhs(t + 0.5 * dt, u + k2 * (0.5 * dt));
        let k4 = rhs(t + dt, u + k3 * dt);
        u += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
        out.push(u);
    }
    out
}

/// `int_{-1}^{1} exp(-1/(1-x^2)) dx` by composite Gauss-Legendre (5 points)
/// on many panels.
pub fn bump_mass(panels: usize) -> f64 {
    const X: [f64; 5] = [
        0.0,
        0.538_469_310_105_683_1,
        -0.538_469_310_105_683_1,
        0.906_179_845_938_664,
        -0.906_179_845_938_664,
    ];
    const W: [f64; 5] = [
        0.568_888_888_888_888_9,
        0.478_628_670_499_366_5,
        0.478_628_670_499_366_5,
        0.236_926_885_056_189_1,
        0.236_926_885_056_189_1,
    ];
    let g = |x: f64| if x.abs() >= 1.0 { 0.0 } else { (-1.0 / (1.0 - x * x)).exp() };
    let w = 2.0 / panels as f64;
    (0..panels)
        .map(|p| {
            let c = -1.0 + (p as f64 + 0.5) * w;
            X.iter().zip(W).map(|(x, wt)| wt * g(c + 0.5 * w * x)).sum::<f64>() * 0.5 * w
        })
        .sum()
}

/// Directory of the configurations shipped with the crate.
pub fn configs_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("configs")
}

pub fn shipped_configs() -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> = std::fs::read_dir(configs_dir())
        .expect("configs directory")
        .map(|e| e.expect("entry").path())
        .filter(|p| p.extension().is_some_and(|e| e == "json"))
        .collect();
    v.sort();
    v
}

pub fn command_of(path: &std::path::Path) -> String {
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    v["command"].as_str().unwrap().to_string()
}
