//! Physical <-> spectral coefficients, `W^k_L` norms and powers `L^s`.

use std::fmt::Write as _;
use std::sync::Arc;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::function_space::{check_same_grid, SampledFunction, Scalar};
use crate::sl_spectral::SpectralBasis;

/// Coefficients `D_n` of a function in a specific basis.
#[derive(Debug, Clone)]
pub struct SpectralCoeffs {
    basis: Arc<SpectralBasis>,
    coeffs: Vec<Complex64>,
}

impl SpectralCoeffs {
    pub fn new(basis: Arc<SpectralBasis>, coeffs: Vec<Complex64>) -> Result<Self> {
        if coeffs.len() != basis.n_modes() {
            return Err(Error::invalid(format!(
                "{} coefficients for a basis of {} modes",
                coeffs.len(),
                basis.n_modes()
            )));
        }
        Ok(SpectralCoeffs { basis, coeffs })
    }

    pub fn zeros(basis: Arc<SpectralBasis>) -> Self {
        let n = basis.n_modes();
        SpectralCoeffs {
            basis,
            coeffs: vec![Complex64::new(0.0, 0.0); n],
        }
    }

    /// Unit coefficient on mode `n` (1-based).
    pub fn unit(basis: Arc<SpectralBasis>, n: usize) -> Result<Self> {
        let mut c = Self::zeros(basis);
        let slot = n
            .checked_sub(1)
            .and_then(|i| c.coeffs.get_mut(i))
            .ok_or_else(|| Error::invalid(format!("mode {n} is outside the basis")))?;
        *slot = Complex64::new(1.0, 0.0);
        Ok(c)
    }

    pub fn basis(&self) -> &Arc<SpectralBasis> {
        &self.basis
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn fingerprint(&self) -> &str {
        self.basis.fingerprint()
    }

    pub fn check_basis(&self, other: &SpectralBasis) -> Result<()> {
        if self.basis.fingerprint() != other.fingerprint() {
            return Err(Error::BasisMismatch {
                expected: other.fingerprint().to_string(),
                found: self.basis.fingerprint().to_string(),
            });
        }
        Ok(())
    }

    fn zip_with(&self, other: &Self, f: impl Fn(Complex64, Complex64) -> Complex64) -> Result<Self> {
        other.check_basis(&self.basis)?;
        Ok(SpectralCoeffs {
            basis: Arc::clone(&self.basis),
            coeffs: self
                .coeffs
                .iter()
                .zip(&other.coeffs)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn scale(&self, c: Complex64) -> Self {
        SpectralCoeffs {
            basis: Arc::clone(&self.basis),
            coeffs: self.coeffs.iter().map(|&a| a * c).collect(),
        }
    }

    /// Plain l2 norm of the coefficient vector.
    pub fn l2(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Partial sums `sum_{n<=N} |D_n|^2` for `N = 1..`.
    pub fn bessel_partial_sums(&self) -> Vec<f64> {
        self.coeffs
            .iter()
            .scan(0.0, |acc, c| {
                *acc += c.norm_sqr();
                Some(*acc)
            })
            .collect()
    }

    /// CSV with columns `n, lambda, re, im`.
    pub fn to_csv(&self) -> String {
        use crate::output::fmt_f64;
        let mut out = String::from("n,lambda,re,im\n");
        for (p, c) in self.basis.pairs().iter().zip(&self.coeffs) {
            let _ = writeln!(
                out,
                "{},{},{},{}",
                p.index,
                fmt_f64(p.lambda),
                fmt_f64(c.re),
                fmt_f64(c.im)
            );
        }
        out
    }
}

/// `D_n = <f, phi_n>`.
pub fn analyze<T: Scalar>(f: &SampledFunction<T>, basis: &Arc<SpectralBasis>) -> Result<SpectralCoeffs> {
    check_same_grid(f.grid(), basis.grid())?;
    let h = basis.grid().h();
    let coeffs = basis
        .pairs()
        .iter()
        .map(|p| {
            let mut acc = Complex64::new(0.0, 0.0);
            for (v, phi) in f.values().iter().zip(p.phi.values()) {
                acc += v.to_complex() * *phi;
            }
            acc * h
        })
        .collect();
    Ok(SpectralCoeffs {
        basis: Arc::clone(basis),
        coeffs,
    })
}

/// `sum_n D_n phi_n(x_i)`.
pub fn synthesize(c: &SpectralCoeffs) -> SampledFunction<Complex64> {
    let grid = *c.basis.grid();
    let mut values = vec![Complex64::new(0.0, 0.0); grid.m()];
    for (p, &d) in c.basis.pairs().iter().zip(&c.coeffs) {
        if d == Complex64::new(0.0, 0.0) {
            continue;
        }
        for (v, phi) in values.iter_mut().zip(p.phi.values()) {
            *v += d * *phi;
        }
    }
    SampledFunction::new(grid, values).expect("basis vectors live on the basis grid")
}

fn check_power(basis: &SpectralBasis, k: f64) -> Result<()> {
    let lambda1 = basis.pairs()[0].lambda;
    if k < 0.0 && lambda1 <= 0.0 {
        return Err(Error::Spectrum(format!(
            "negative power {k} needs lambda_1 > 0, found {lambda1}"
        )));
    }
    if k.fract() != 0.0 && lambda1 < 0.0 {
        return Err(Error::Spectrum(format!(
            "fractional power {k} needs a nonnegative spectrum, found lambda_1 = {lambda1}"
        )));
    }
    Ok(())
}

/// `(sum lambda_n^k |D_n|^2)^{1/2}`.
pub fn sobolev_norm(c: &SpectralCoeffs, k: f64) -> Result<f64> {
    check_power(&c.basis, k)?;
    Ok(c.basis
        .pairs()
        .iter()
        .zip(&c.coeffs)
        .map(|(p, d)| p.lambda.powf(k) * d.norm_sqr())
        .sum::<f64>()
        .sqrt())
}

/// `D_n -> lambda_n^s D_n`.
pub fn apply_operator_power(c: &SpectralCoeffs, s: f64) -> Result<SpectralCoeffs> {
    check_power(&c.basis, s)?;
    Ok(SpectralCoeffs {
        basis: Arc::clone(&c.basis),
        coeffs: c
            .basis
            .pairs()
            .iter()
            .zip(&c.coeffs)
            .map(|(p, &d)| d * p.lambda.powf(s))
            .collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::function_space::Grid;
    use crate::sl_spectral::{build_basis, PotentialSpec};
    use std::f64::consts::{PI, SQRT_2};

    fn laplace(m: usize, n: usize) -> Arc<SpectralBasis> {
        let g = Grid::new(m).unwrap();
        build_basis(&PotentialSpec::zero(g), &g, n).unwrap()
    }

    #[test]
    fn analyze_basis_vector() {
        let b = laplace(1999, 8);
        let f = b.grid().sample(|x| SQRT_2 * (PI * x).sin());
        let c = analyze(&f, &b).unwrap();
        assert!((c.coeffs()[0] - 1.0).norm() < 1e-4);
        assert!(c.coeffs()[1..].iter().all(|d| d.norm() < 1e-4));
    }

    #[test]
    fn parabola_sine_series() {
        let b = laplace(1999, 9);
        let f = b.grid().sample(|x| x * (1.0 - x));
        let c = analyze(&f, &b).unwrap();
        for (i, d) in c.coeffs().iter().enumerate() {
            let n = (i + 1) as f64;
            let exact = if (i + 1) % 2 == 1 {
                4.0 * SQRT_2 / (n * PI).powi(3)
            } else {
                0.0
            };
            assert!((d.re - exact).abs() < 1e-5 && d.im.abs() < 1e-15, "n={n}");
        }
    }

    #[test]
    fn round_trips() {
        let b = laplace(1999, 9);
        let f = b.grid().sample(|x| SQRT_2 * (PI * x).sin());
        let back = synthesize(&analyze(&f, &b).unwrap());
        assert!(back.sub(&f.to_complex()).unwrap().l2_norm() < 1e-4);

        let zero = synthesize(&SpectralCoeffs::zeros(Arc::clone(&b)));
        assert_eq!(zero.max_abs(), 0.0);

        let f = b.grid().sample(|x| x * (1.0 - x));
        let back = synthesize(&analyze(&f, &b).unwrap());
        let err = back.sub(&f.to_complex()).unwrap().l2_norm();
        let tail: f64 = (10..200_000)
            .step_by(1)
            .filter(|n| n % 2 == 1)
            .map(|n| (4.0 * SQRT_2 / (n as f64 * PI).powi(3)).powi(2))
            .sum::<f64>()
            .sqrt();
        assert!(err <= tail + 1e-5, "{err} vs tail {tail}");
    }

    #[test]
    fn sobolev_norms_of_a_single_mode() {
        let b = laplace(1999, 5);
        let c = SpectralCoeffs::unit(Arc::clone(&b), 1).unwrap();
        let pi2 = PI * PI;
        assert!((sobolev_norm(&c, 2.0).unwrap() / pi2 - 1.0).abs() < 1e-3);
        assert_eq!(sobolev_norm(&c, 0.0).unwrap(), 1.0);
        assert!((sobolev_norm(&c, -2.0).unwrap() * pi2 - 1.0).abs() < 1e-3);
    }

    #[test]
    fn operator_powers() {
        let b = laplace(1999, 5);
        let f = b.grid().sample(|x| x * (1.0 - x) * (3.0 * x).cos());
        let c = analyze(&f, &b).unwrap();
        let id = apply_operator_power(&c, 0.0).unwrap();
        assert_eq!(id.coeffs(), c.coeffs());

        let u = SpectralCoeffs::unit(Arc::clone(&b), 1).unwrap();
        let l = apply_operator_power(&u, 1.0).unwrap();
        assert!((l.coeffs()[0].re - PI * PI).abs() / (PI * PI) < 1e-3);

        let half_twice = apply_operator_power(&apply_operator_power(&c, 0.5).unwrap(), 0.5).unwrap();
        let once = apply_operator_power(&c, 1.0).unwrap();
        for (a, b) in half_twice.coeffs().iter().zip(once.coeffs()) {
            assert!((a - b).norm() <= 1e-12 * b.norm().max(1.0));
        }
    }

    #[test]
    fn mixing_bases_is_an_error() {
        let a = laplace(255, 4);
        let g = Grid::new(255).unwrap();
        let b = build_basis(&PotentialSpec::constant(g, 1.0), &g, 4).unwrap();
        let ca = SpectralCoeffs::zeros(a);
        let cb = SpectralCoeffs::zeros(b);
        assert!(matches!(ca.add(&cb), Err(Error::BasisMismatch { .. })));
    }

    #[test]
    fn negative_power_needs_positive_spectrum() {
        let g = Grid::new(63).unwrap();
        // a strongly negative weak potential pushes lambda_1 below zero
        let nu: Vec<f64> = g.midpoints().map(|x| -200.0 * x).collect();
        let p = PotentialSpec::weak_nu(g, nu).unwrap();
        let b = build_basis(&p, &g, 3).unwrap();
        assert!(b.pairs()[0].lambda < 0.0);
        let c = SpectralCoeffs::unit(b, 1).unwrap();
        assert!(matches!(sobolev_norm(&c, -1.0), Err(Error::Spectrum(_))));
        assert!(sobolev_norm(&c, 2.0).is_ok());
    }
}
