use std::f64::consts::{PI, SQRT_2};
use std::fmt::Write as _;
use std::sync::Arc;

use serde::Serialize;
use sha2::{Digest, Sha256};

use super::{assemble, solve_eigen, EigenPair, PotentialDescriptor, PotentialSpec};
use crate::error::{Error, Result};
use crate::function_space::{inner_product, Grid};
use crate::regularization::fit_power_law;

/// Ratio of grid size to the largest number of modes a basis may carry.
pub const MODES_PER_NODE: usize = 16;

/// Orthonormal Dirichlet eigenbasis of the discrete operator.
#[derive(Debug, Clone)]
pub struct SpectralBasis {
    grid: Grid,
    potential: PotentialSpec,
    pairs: Vec<EigenPair>,
    fingerprint: String,
}

impl SpectralBasis {
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn potential(&self) -> &PotentialSpec {
        &self.potential
    }

    pub fn pairs(&self) -> &[EigenPair] {
        &self.pairs
    }

    pub fn n_modes(&self) -> usize {
        self.pairs.len()
    }

    pub fn lambdas(&self) -> Vec<f64> {
        self.pairs.iter().map(|p| p.lambda).collect()
    }

    pub fn fingerprint(&self) -> &str {
        &self.fingerprint
    }

    /// Largest off-diagonal entry of the Gram matrix.
    pub fn gram_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for (i, a) in self.pairs.iter().enumerate() {
            for b in &self.pairs[i + 1..] {
                let ip = inner_product(&a.phi, &b.phi).expect("same grid");
                worst = worst.max(ip.abs());
            }
        }
        worst
    }

    pub fn manifest(&self) -> BasisManifest {
        BasisManifest {
            m: self.grid.m(),
            h: self.grid.h(),
            n_modes: self.n_modes(),
            fingerprint: self.fingerprint.clone(),
            potential: self.potential.descriptor(),
            lambdas: self.lambdas(),
        }
    }

    /// CSV with columns `x, phi_1, ..., phi_N`.
    pub fn eigenvector_csv(&self) -> String {
        let mut out = String::from("x");
        for p in &self.pairs {
            let _ = write!(out, ",phi_{}", p.index);
        }
        out.push('\n');
        for (i, x) in self.grid.nodes().enumerate() {
            let _ = write!(out, "{}", crate::output::fmt_f64(x));
            for p in &self.pairs {
                let _ = write!(out, ",{}", crate::output::fmt_f64(p.phi.values()[i]));
            }
            out.push('\n');
        }
        out
    }
}

/// JSON summary of a basis.
#[derive(Debug, Clone, Serialize)]
pub struct BasisManifest {
    pub m: usize,
    pub h: f64,
    pub n_modes: usize,
    pub fingerprint: String,
    pub potential: PotentialDescriptor,
    pub lambdas: Vec<f64>,
}

pub fn build_basis(
    potential: &PotentialSpec,
    grid: &Grid,
    n_modes: usize,
) -> Result<Arc<SpectralBasis>> {
    let cap = grid.m() / MODES_PER_NODE;
    if n_modes == 0 || n_modes > cap {
        return Err(Error::Resolution(format!(
            "n_modes = {n_modes} exceeds the cap n_modes <= m/{MODES_PER_NODE} = {cap} for m = {}",
            grid.m()
        )));
    }
    let matrix = assemble(potential, grid)?;
    let pairs = solve_eigen(&matrix, n_modes)?;

    let mut hasher = Sha256::new();
    hasher.update(b"sturm-vws basis v1");
    hasher.update((grid.m() as u64).to_le_bytes());
    hasher.update((n_modes as u64).to_le_bytes());
    hasher.update(potential.fingerprint_bytes());
    let fingerprint = hex::encode(&hasher.finalize()[..8]);

    Ok(Arc::new(SpectralBasis {
        grid: *grid,
        potential: potential.clone(),
        pairs,
        fingerprint,
    }))
}

#[derive(Debug, Clone, Serialize)]
pub struct ModeAsymptotics {
    pub n: usize,
    pub lambda: f64,
    /// `lambda_n / (pi n)^2`.
    pub ratio: f64,
    /// `|| phi_n - sqrt(2) sin(pi n x) ||_{L2}`.
    pub sine_distance: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct AsymptoticsReport {
    pub modes: Vec<ModeAsymptotics>,
    /// Modes `1..=reliable_modes` enter the envelope fit.
    pub reliable_modes: usize,
    /// `max n |ratio_n - 1|` over the reliable range.
    pub envelope_constant: f64,
    /// Slope of `log |ratio - 1|` against `log n` (negative means decay).
    pub decay_exponent: Option<f64>,
    pub min_eigenfunction_norm: f64,
}

impl AsymptoticsReport {
    /// `|ratio - 1| <= C / n` on the reliable range.
    pub fn within_envelope(&self, c: f64) -> bool {
        self.modes[..self.reliable_modes]
            .iter()
            .all(|m| (m.ratio - 1.0).abs() <= c / m.n as f64)
    }
}

pub fn asymptotics_report(basis: &SpectralBasis) -> Result<AsymptoticsReport> {
    if basis.n_modes() < 4 {
        return Err(Error::invalid("asymptotics need at least 4 modes"));
    }
    let grid = basis.grid();
    let modes: Vec<ModeAsymptotics> = basis
        .pairs()
        .iter()
        .map(|p| {
            let n = p.index as f64;
            let sine = grid.sample(|x| SQRT_2 * (PI * n * x).sin());
            let diff = p.phi.sub(&sine).expect("same grid");
            ModeAsymptotics {
                n: p.index,
                lambda: p.lambda,
                ratio: p.lambda / (PI * n).powi(2),
                sine_distance: diff.l2_norm(),
            }
        })
        .collect();
    let reliable = (basis.n_modes() / 2).max(2);
    let envelope_constant = modes[..reliable]
        .iter()
        .map(|m| m.n as f64 * (m.ratio - 1.0).abs())
        .fold(0.0, f64::max);
    // fit |ratio - 1| ~ C n^slope; log(1/n) is the fit's abscissa
    let inv_n: Vec<f64> = modes[..reliable].iter().map(|m| 1.0 / m.n as f64).collect();
    let dev: Vec<f64> = modes[..reliable].iter().map(|m| (m.ratio - 1.0).abs()).collect();
    let decay_exponent = fit_power_law(&inv_n, &dev)
        .ok()
        .filter(|f| f.exponent.is_finite())
        .map(|f| f.exponent);
    let min_eigenfunction_norm = basis
        .pairs()
        .iter()
        .map(|p| p.phi.l2_norm())
        .fold(f64::INFINITY, f64::min);
    Ok(AsymptoticsReport {
        modes,
        reliable_modes: reliable,
        envelope_constant,
        decay_exponent,
        min_eigenfunction_norm,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn laplacian_basis_matches_sines() {
        let g = Grid::new(1999).unwrap();
        let b = build_basis(&PotentialSpec::zero(g), &g, 8).unwrap();
        for p in b.pairs() {
            let n = p.index as f64;
            let worst = g
                .nodes()
                .zip(p.phi.values())
                .map(|(x, v)| (v - SQRT_2 * (PI * n * x).sin()).abs())
                .fold(0.0, f64::max);
            assert!(worst <= 5e-3, "mode {} off by {worst}", p.index);
        }
        assert!(b.gram_defect() <= 1e-8);
    }

    #[test]
    fn mode_cap_is_enforced() {
        let g = Grid::new(159).unwrap();
        let err = build_basis(&PotentialSpec::zero(g), &g, 10).unwrap_err();
        assert!(err.to_string().contains("n_modes <= m/16 = 9"), "{err}");
    }

    #[test]
    fn fingerprint_is_deterministic_and_input_sensitive() {
        let g = Grid::new(255).unwrap();
        let a = build_basis(&PotentialSpec::zero(g), &g, 4).unwrap();
        let b = build_basis(&PotentialSpec::zero(g), &g, 4).unwrap();
        let c = build_basis(&PotentialSpec::constant(g, 1.0), &g, 4).unwrap();
        assert_eq!(a.fingerprint(), b.fingerprint());
        assert_ne!(a.fingerprint(), c.fingerprint());
        assert_eq!(a.lambdas(), b.lambdas());
    }

    #[test]
    fn asymptotic_ratios() {
        let g = Grid::new(1999).unwrap();
        let b = build_basis(&PotentialSpec::zero(g), &g, 8).unwrap();
        let r = asymptotics_report(&b).unwrap();
        assert!(r.modes.iter().all(|m| (m.ratio - 1.0).abs() < 1e-3));

        let c = 25.0;
        let b = build_basis(&PotentialSpec::constant(g, c), &g, 8).unwrap();
        let r = asymptotics_report(&b).unwrap();
        for m in &r.modes {
            let expected = 1.0 + c / (PI * m.n as f64).powi(2);
            assert!((m.ratio - expected).abs() < 1e-3);
        }
        // shift-dominated deviation decays like n^-2
        let slope = r.decay_exponent.unwrap();
        assert!((slope + 2.0).abs() < 0.1, "{slope}");
    }
}
