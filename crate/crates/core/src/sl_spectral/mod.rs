//! Discrete Sturm-Liouville operator `-d^2/dx^2 + q` with Dirichlet ends.
//!
//! Both potential forms produce a symmetric tridiagonal matrix:
//!
//! * `DirectQ`: finite differences, `diag_i = 2/h^2 + q(x_i)`, `off = -1/h^2`.
//! * `WeakNu`: `q = nu'` enters only through the form `-int nu (y z)'`. With
//!   hat functions and `nu` constant on each cell (midpoint samples) the
//!   form is diagonal with entries `nu_{i+1/2} - nu_{i-1/2}`; dividing by the
//!   lumped mass `h` gives the same stencil shape as the direct path.

mod basis;
mod eigen;

pub use basis::{
    asymptotics_report, build_basis, AsymptoticsReport, BasisManifest, ModeAsymptotics,
    SpectralBasis, MODES_PER_NODE,
};
pub use eigen::{solve_eigen, EigenPair};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::function_space::{Grid, SampledFunction};

#[derive(Debug, Clone, PartialEq)]
pub enum PotentialKind {
    /// Pointwise samples of `q >= 0` at the interior nodes.
    DirectQ(SampledFunction<f64>),
    /// Samples of `nu` at the `m + 1` cell midpoints; `q = nu'` weakly.
    WeakNu { nu_mid: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct PotentialSpec {
    pub kind: PotentialKind,
    pub label: Option<String>,
}

impl PotentialSpec {
    pub fn direct_q(q: SampledFunction<f64>) -> Self {
        PotentialSpec {
            kind: PotentialKind::DirectQ(q),
            label: None,
        }
    }

    pub fn zero(grid: Grid) -> Self {
        Self::direct_q(SampledFunction::zeros(grid)).with_label("zero")
    }

    pub fn constant(grid: Grid, c: f64) -> Self {
        Self::direct_q(grid.sample(|_| c)).with_label(format!("constant {c}"))
    }

    pub fn weak_nu(grid: Grid, nu_mid: Vec<f64>) -> Result<Self> {
        if nu_mid.len() != grid.m() + 1 {
            return Err(Error::invalid(format!(
                "weak potential needs {} midpoint samples of nu, got {}",
                grid.m() + 1,
                nu_mid.len()
            )));
        }
        if let Some(bad) = nu_mid.iter().find(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("non-finite nu sample {bad}")));
        }
        Ok(PotentialSpec {
            kind: PotentialKind::WeakNu { nu_mid },
            label: None,
        })
    }

    /// `nu = H(x - x0)`, i.e. `q = delta_{x0}`.
    pub fn heaviside(grid: Grid, x0: f64) -> Result<Self> {
        let nu = grid.midpoints().map(|x| if x >= x0 { 1.0 } else { 0.0 }).collect();
        Ok(Self::weak_nu(grid, nu)?.with_label(format!("delta at {x0}")))
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = Some(label.into());
        self
    }

    pub fn grid_m(&self) -> usize {
        match &self.kind {
            PotentialKind::DirectQ(q) => q.grid().m(),
            PotentialKind::WeakNu { nu_mid } => nu_mid.len() - 1,
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self.kind {
            PotentialKind::DirectQ(_) => "direct_q",
            PotentialKind::WeakNu { .. } => "weak_nu",
        }
    }

    /// Pointwise potential seen by the discrete operator: `q` itself for
    /// `DirectQ`, the cell jumps of `nu` over `h` for `WeakNu`.
    pub fn effective_q(&self, grid: &Grid) -> Vec<f64> {
        match &self.kind {
            PotentialKind::DirectQ(q) => q.values().to_vec(),
            PotentialKind::WeakNu { nu_mid } => weak_potential_form(nu_mid)
                .into_iter()
                .map(|p| p / grid.h())
                .collect(),
        }
    }

    /// `nu` on the cell midpoints. For `DirectQ` this is the antiderivative
    /// of `q` normalized by `nu(0) = 0`.
    pub fn nu_midpoints(&self, grid: &Grid) -> Vec<f64> {
        match &self.kind {
            PotentialKind::WeakNu { nu_mid } => nu_mid.clone(),
            PotentialKind::DirectQ(q) => {
                // nu at x_{k+1/2}: integrate the piecewise-linear q (zero-padded
                // ends replaced by the nearest interior value) from 0.
                let h = grid.h();
                let v = q.values();
                let m = v.len();
                let at = |i: usize| -> f64 {
                    // i in 0..=m+1
                    if i == 0 {
                        v[0]
                    } else if i == m + 1 {
                        v[m - 1]
                    } else {
                        v[i - 1]
                    }
                };
                let mut out = Vec::with_capacity(m + 1);
                let mut node_acc = 0.0;
                for k in 0..=m {
                    let (a, b) = (at(k), at(k + 1));
                    let mid = 0.5 * (a + b);
                    out.push(node_acc + 0.25 * h * (a + mid));
                    node_acc += 0.5 * h * (a + b);
                }
                out
            }
        }
    }

    /// `max |q|` when the potential is a pointwise function.
    pub fn q_sup(&self) -> Option<f64> {
        match &self.kind {
            PotentialKind::DirectQ(q) => Some(q.max_abs()),
            PotentialKind::WeakNu { .. } => None,
        }
    }

    pub fn descriptor(&self) -> PotentialDescriptor {
        let (min, max, samples) = match &self.kind {
            PotentialKind::DirectQ(q) => (
                q.values().iter().copied().fold(f64::INFINITY, f64::min),
                q.values().iter().copied().fold(f64::NEG_INFINITY, f64::max),
                q.values().len(),
            ),
            PotentialKind::WeakNu { nu_mid } => (
                nu_mid.iter().copied().fold(f64::INFINITY, f64::min),
                nu_mid.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                nu_mid.len(),
            ),
        };
        PotentialDescriptor {
            kind: self.kind_name().to_string(),
            label: self.label.clone(),
            samples,
            min,
            max,
        }
    }

    pub(crate) fn fingerprint_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        let values: &[f64] = match &self.kind {
            PotentialKind::DirectQ(q) => {
                out.extend_from_slice(b"direct_q");
                q.values()
            }
            PotentialKind::WeakNu { nu_mid } => {
                out.extend_from_slice(b"weak_nu");
                nu_mid
            }
        };
        out.extend_from_slice(&(values.len() as u64).to_le_bytes());
        for v in values {
            out.extend_from_slice(&v.to_bits().to_le_bytes());
        }
        out
    }
}

/// Summary of a potential for manifests.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct PotentialDescriptor {
    pub kind: String,
    pub label: Option<String>,
    pub samples: usize,
    pub min: f64,
    pub max: f64,
}

/// Diagonal entries `-int nu (phi_i^2)' dx` of the weak potential form for
/// `nu` constant on each cell. Off-diagonal entries vanish identically.
pub fn weak_potential_form(nu_mid: &[f64]) -> Vec<f64> {
    nu_mid.windows(2).map(|w| w[1] - w[0]).collect()
}

/// Symmetric tridiagonal operator matrix on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorMatrix {
    grid: Grid,
    diag: Vec<f64>,
    offdiag: Vec<f64>,
}

impl OperatorMatrix {
    pub fn new(grid: Grid, diag: Vec<f64>, offdiag: Vec<f64>) -> Result<Self> {
        if diag.len() != grid.m() || offdiag.len() + 1 != diag.len() {
            return Err(Error::invalid(format!(
                "tridiagonal shape mismatch: {} diagonal, {} off-diagonal entries for m = {}",
                diag.len(),
                offdiag.len(),
                grid.m()
            )));
        }
        Ok(OperatorMatrix {
            grid,
            diag,
            offdiag,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn diag(&self) -> &[f64] {
        &self.diag
    }

    pub fn offdiag(&self) -> &[f64] {
        &self.offdiag
    }

    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        let n = self.dim();
        (0..n)
            .map(|i| {
                let mut s = self.diag[i] * v[i];
                if i > 0 {
                    s += self.offdiag[i - 1] * v[i - 1];
                }
                if i + 1 < n {
                    s += self.offdiag[i] * v[i + 1];
                }
                s
            })
            .collect()
    }

    /// Row-sum norm.
    pub fn inf_norm(&self) -> f64 {
        let n = self.dim();
        (0..n)
            .map(|i| {
                let mut s = self.diag[i].abs();
                if i > 0 {
                    s += self.offdiag[i - 1].abs();
                }
                if i + 1 < n {
                    s += self.offdiag[i].abs();
                }
                s
            })
            .fold(0.0, f64::max)
    }

    /// Gershgorin enclosure of the spectrum.
    pub fn gershgorin(&self) -> (f64, f64) {
        let n = self.dim();
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..n {
            let mut r = 0.0;
            if i > 0 {
                r += self.offdiag[i - 1].abs();
            }
            if i + 1 < n {
                r += self.offdiag[i].abs();
            }
            lo = lo.min(self.diag[i] - r);
            hi = hi.max(self.diag[i] + r);
        }
        (lo, hi)
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let n = self.dim();
        let mut a = vec![vec![0.0; n]; n];
        for i in 0..n {
            a[i][i] = self.diag[i];
            if i + 1 < n {
                a[i][i + 1] = self.offdiag[i];
                a[i + 1][i] = self.offdiag[i];
            }
        }
        a
    }
}

pub fn assemble(potential: &PotentialSpec, grid: &Grid) -> Result<OperatorMatrix> {
    if potential.grid_m() != grid.m() {
        return Err(Error::invalid(format!(
            "potential sampled for m = {}, grid has m = {}",
            potential.grid_m(),
            grid.m()
        )));
    }
    let h = grid.h();
    let inv_h2 = 1.0 / (h * h);
    let diag = match &potential.kind {
        PotentialKind::DirectQ(q) => {
            if let Some((i, v)) = q
                .values()
                .iter()
                .enumerate()
                .find(|(_, v)| !(**v >= 0.0))
            {
                return Err(Error::HypothesisViolation(format!(
                    "q({:.6}) = {v} is negative",
                    grid.node(i + 1)
                )));
            }
            q.values().iter().map(|q| 2.0 * inv_h2 + q).collect()
        }
        PotentialKind::WeakNu { nu_mid } => weak_potential_form(nu_mid)
            .into_iter()
            .map(|p| 2.0 * inv_h2 + p / h)
            .collect(),
    };
    OperatorMatrix::new(*grid, diag, vec![-inv_h2; grid.m() - 1])
}

/// Number of eigenvalues strictly below `lam` (Sturm sequence / LDL^T
/// inertia). Exactly vanishing pivots are replaced by a tiny positive value.
pub fn sturm_count(matrix: &OperatorMatrix, lam: f64) -> usize {
    let d = &matrix.diag;
    let e = &matrix.offdiag;
    if d.is_empty() {
        return 0;
    }
    let max_e2 = e.iter().map(|x| x * x).fold(1.0, f64::max);
    let pivmin = f64::MIN_POSITIVE * max_e2;
    let guard = |q: f64| {
        if q.abs() < pivmin {
            if q < 0.0 {
                -pivmin
            } else {
                pivmin
            }
        } else {
            q
        }
    };
    let mut count = 0;
    let mut q = guard(d[0] - lam);
    if q < 0.0 {
        count += 1;
    }
    for i in 1..d.len() {
        q = guard((d[i] - lam) - e[i - 1] * e[i - 1] / q);
        if q < 0.0 {
            count += 1;
        }
    }
    count
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn pure_laplacian_stencil() {
        let g = Grid::new(3).unwrap();
        let a = assemble(&PotentialSpec::zero(g), &g).unwrap();
        assert_eq!(a.diag(), &[32.0, 32.0, 32.0]);
        assert_eq!(a.offdiag(), &[-16.0, -16.0]);
    }

    #[test]
    fn constant_potential_shifts_diagonal() {
        let g = Grid::new(11).unwrap();
        let a0 = assemble(&PotentialSpec::zero(g), &g).unwrap();
        let ac = assemble(&PotentialSpec::constant(g, 3.5), &g).unwrap();
        for (x, y) in a0.diag().iter().zip(ac.diag()) {
            assert!((y - x - 3.5).abs() < 1e-12);
        }
        assert_eq!(a0.offdiag(), ac.offdiag());
    }

    #[test]
    fn negative_q_is_rejected() {
        let g = Grid::new(5).unwrap();
        let p = PotentialSpec::direct_q(g.sample(|x| x - 0.5));
        assert!(matches!(
            assemble(&p, &g),
            Err(Error::HypothesisViolation(_))
        ));
    }

    #[test]
    fn heaviside_nu_puts_mass_one_at_the_node() {
        let g = Grid::new(399).unwrap();
        let p = PotentialSpec::heaviside(g, 0.5).unwrap();
        let q = p.effective_q(&g);
        let total: f64 = q.iter().sum::<f64>() * g.h();
        assert!((total - 1.0).abs() < 1e-12);
        assert!((q[199] - 1.0 / g.h()).abs() < 1e-9);
        let a = assemble(&p, &g).unwrap();
        assert_eq!(a.offdiag().len(), 398);
    }

    #[test]
    fn sturm_counts_closed_form() {
        let g = Grid::new(3).unwrap();
        let a = OperatorMatrix::new(g, vec![2.0; 3], vec![-1.0; 2]).unwrap();
        assert_eq!(sturm_count(&a, 2.5), 2);
        assert_eq!(sturm_count(&a, 0.0), 0);
        // exactly at an eigenvalue: strictly-below count
        assert_eq!(sturm_count(&a, 2.0), 1);
        assert_eq!(sturm_count(&a, 4.0), 3);

        let g = Grid::new(1999).unwrap();
        let a = assemble(&PotentialSpec::zero(g), &g).unwrap();
        assert_eq!(sturm_count(&a, 15.0), 1);
        let lam2 = 4.0 / (g.h() * g.h()) * (PI * g.h()).sin().powi(2);
        assert_eq!(sturm_count(&a, lam2 - 1e-6), 1);
        assert_eq!(sturm_count(&a, lam2 + 1e-6), 2);
    }

    #[test]
    fn direct_q_nu_is_antiderivative() {
        let g = Grid::new(99).unwrap();
        let p = PotentialSpec::constant(g, 2.0);
        let nu = p.nu_midpoints(&g);
        for (k, x) in g.midpoints().enumerate() {
            assert!((nu[k] - 2.0 * x).abs() < 1e-12);
        }
    }
}
