//! Symbolic data that can be sampled on any grid.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::function_space::{Grid, SampledFunction};
use crate::regularization::{mollify, Mollifier, NetKind, NetRole, NetSpec, SpaceMember};
use crate::sl_spectral::PotentialSpec;

/// Closed-form real functions on `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SpaceFn {
    Constant {
        value: f64,
    },
    /// `amplitude * sin(mode pi x)`.
    Sine {
        #[serde(default = "one_usize")]
        mode: usize,
        #[serde(default = "one")]
        amplitude: f64,
    },
    /// `sum_k c_k sin(k pi x)`, `k` from 1.
    SineSeries { coefficients: Vec<f64> },
    /// `amplitude * x (1 - x)`.
    Parabola {
        #[serde(default = "one")]
        amplitude: f64,
    },
    /// `offset + amplitude * sin^2(mode pi x)`.
    SineSquared {
        #[serde(default)]
        offset: f64,
        #[serde(default = "one")]
        amplitude: f64,
        #[serde(default = "one_usize")]
        mode: usize,
    },
    Sum { terms: Vec<SpaceFn> },
}

fn one() -> f64 {
    1.0
}

fn one_usize() -> usize {
    1
}

impl SpaceFn {
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            SpaceFn::Constant { value } => *value,
            SpaceFn::Sine { mode, amplitude } => amplitude * (PI * *mode as f64 * x).sin(),
            SpaceFn::SineSeries { coefficients } => coefficients
                .iter()
                .enumerate()
                .map(|(k, c)| c * (PI * (k + 1) as f64 * x).sin())
                .sum(),
            SpaceFn::Parabola { amplitude } => amplitude * x * (1.0 - x),
            SpaceFn::SineSquared { offset, amplitude, mode } => {
                offset + amplitude * (PI * *mode as f64 * x).sin().powi(2)
            }
            SpaceFn::Sum { terms } => terms.iter().map(|t| t.eval(x)).sum(),
        }
    }

    pub fn sample(&self, grid: &Grid) -> SampledFunction<f64> {
        grid.sample(|x| self.eval(x))
    }

    /// Antiderivative from 0, in closed form where available.
    pub fn antiderivative(&self, x: f64) -> f64 {
        match self {
            SpaceFn::Constant { value } => value * x,
            SpaceFn::Sine { mode, amplitude } => {
                let w = PI * *mode as f64;
                amplitude * (1.0 - (w * x).cos()) / w
            }
            SpaceFn::SineSeries { coefficients } => coefficients
                .iter()
                .enumerate()
                .map(|(k, c)| {
                    let w = PI * (k + 1) as f64;
                    c * (1.0 - (w * x).cos()) / w
                })
                .sum(),
            SpaceFn::Parabola { amplitude } => amplitude * (x * x / 2.0 - x * x * x / 3.0),
            SpaceFn::SineSquared { offset, amplitude, mode } => {
                let w = 2.0 * PI * *mode as f64;
                offset * x + amplitude * (x / 2.0 - (w * x).sin() / (2.0 * w))
            }
            SpaceFn::Sum { terms } => terms.iter().map(|t| t.antiderivative(x)).sum(),
        }
    }

    /// A cheap lower bound by dense sampling, used for sign checks.
    pub fn sampled_min(&self) -> f64 {
        (0..=4096).map(|k| self.eval(k as f64 / 4096.0)).fold(f64::INFINITY, f64::min)
    }

    fn validate(&self) -> Result<()> {
        match self {
            SpaceFn::Sine { mode, .. } | SpaceFn::SineSquared { mode, .. } if *mode == 0 => {
                Err(Error::invalid("sine mode must be at least 1"))
            }
            SpaceFn::Sum { terms } => terms.iter().try_for_each(|t| t.validate()),
            _ => Ok(()),
        }
    }
}

/// Spatial data: singular catalogue entries or closed-form functions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SpaceData {
    Delta { x0: f64 },
    /// `q = delta_{x0}` given through `nu = H(x - x0)`.
    HeavisideNu { x0: f64 },
    /// `nu = |x - x0|^{-alpha}`.
    PowerNu { x0: f64, alpha: f64 },
    /// Pointwise potential.
    DirectQ { q: SpaceFn },
    /// Potential `q = nu'` with a closed-form `nu`.
    WeakNu { nu: SpaceFn },
    /// Initial datum.
    Function { f: SpaceFn },
}

/// Which slot of the problem a piece of data fills.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Slot {
    Potential,
    Datum,
}

impl SpaceData {
    pub fn validate(&self, slot: Slot, regularize: bool) -> Result<()> {
        let ok = match (self, slot) {
            (SpaceData::Delta { .. }, _) => true,
            (SpaceData::HeavisideNu { .. } | SpaceData::PowerNu { .. }, Slot::Potential) => true,
            (SpaceData::PowerNu { .. }, Slot::Datum) => true,
            (SpaceData::DirectQ { .. } | SpaceData::WeakNu { .. }, Slot::Potential) => true,
            (SpaceData::Function { .. }, Slot::Datum) => true,
            _ => false,
        };
        if !ok {
            return Err(Error::invalid(format!("{} cannot be used for the {slot:?}", self.name())));
        }
        if !regularize {
            match self {
                SpaceData::Delta { .. } => {
                    return Err(Error::invalid("a delta must be regularized"));
                }
                SpaceData::PowerNu { .. } if slot == Slot::Datum => {
                    return Err(Error::invalid("a singular datum must be regularized"));
                }
                _ => {}
            }
        } else if let SpaceData::WeakNu { .. } = self {
            return Err(Error::invalid("a closed-form nu is used as given; set regularize to false"));
        }
        match self {
            SpaceData::Delta { x0 } | SpaceData::HeavisideNu { x0 } | SpaceData::PowerNu { x0, .. }
                if !(*x0 > 0.0 && *x0 < 1.0) => {
                    return Err(Error::invalid(format!("x0 = {x0} outside (0, 1)")));
                }
            _ => {}
        }
        if let SpaceData::PowerNu { alpha, .. } = self {
            if !(*alpha > 0.0 && *alpha < 0.5) {
                return Err(Error::invalid(format!("alpha = {alpha} outside (0, 1/2)")));
            }
        }
        match self {
            SpaceData::DirectQ { q } => {
                q.validate()?;
                if q.sampled_min() < 0.0 {
                    return Err(Error::HypothesisViolation("q must be nonnegative".into()));
                }
                Ok(())
            }
            SpaceData::WeakNu { nu: f } | SpaceData::Function { f } => f.validate(),
            _ => Ok(()),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            SpaceData::Delta { .. } => "delta",
            SpaceData::HeavisideNu { .. } => "heaviside_nu",
            SpaceData::PowerNu { .. } => "power_nu",
            SpaceData::DirectQ { .. } => "direct_q",
            SpaceData::WeakNu { .. } => "weak_nu",
            SpaceData::Function { .. } => "function",
        }
    }

    /// Bounded pointwise potential (needed for the classical problem).
    pub fn is_bounded_potential(&self) -> bool {
        matches!(self, SpaceData::DirectQ { .. })
    }

    pub fn net_spec(&self, slot: Slot, grid: &Grid) -> Result<NetSpec> {
        let (kind, role) = match (self, slot) {
            (SpaceData::Delta { x0 }, Slot::Potential) => (NetKind::Delta { x0: *x0 }, NetRole::PotentialQ),
            (SpaceData::Delta { x0 }, Slot::Datum) => (NetKind::Delta { x0: *x0 }, NetRole::InitialDatum),
            (SpaceData::HeavisideNu { x0 }, _) => (NetKind::HeavisideNu { x0: *x0 }, NetRole::PotentialNu),
            (SpaceData::PowerNu { x0, alpha }, Slot::Potential) => {
                (NetKind::PowerNu { x0: *x0, alpha: *alpha }, NetRole::PotentialNu)
            }
            (SpaceData::PowerNu { x0, alpha }, Slot::Datum) => {
                (NetKind::PowerNu { x0: *x0, alpha: *alpha }, NetRole::InitialDatum)
            }
            (SpaceData::DirectQ { q }, _) => (NetKind::SmoothSample(q.sample(grid)), NetRole::PotentialQ),
            (SpaceData::Function { f }, _) => (NetKind::SmoothSample(f.sample(grid)), NetRole::InitialDatum),
            (SpaceData::WeakNu { .. }, _) => {
                return Err(Error::invalid("a closed-form nu has no regularized net"));
            }
        };
        NetSpec::new(kind, role)
    }

    /// Potential at regularization `eps`, or unregularized for `None`.
    /// The returned clipped mass is zero when nothing is cut off.
    pub fn potential(&self, grid: &Grid, eps: Option<f64>, psi: &Mollifier) -> Result<(PotentialSpec, f64)> {
        match eps {
            Some(e) => {
                let m = mollify(&self.net_spec(Slot::Potential, grid)?, e, grid, psi)?;
                Ok((m.as_potential(*grid)?, m.clipped_mass))
            }
            None => {
                let spec = match self {
                    SpaceData::HeavisideNu { x0 } => PotentialSpec::heaviside(*grid, *x0)?,
                    SpaceData::PowerNu { x0, alpha } => {
                        let nu = grid.midpoints().map(|x| (x - x0).abs().powf(-alpha)).collect();
                        PotentialSpec::weak_nu(*grid, nu)?
                    }
                    SpaceData::DirectQ { q } => PotentialSpec::direct_q(q.sample(grid)),
                    SpaceData::WeakNu { nu } => {
                        PotentialSpec::weak_nu(*grid, grid.midpoints().map(|x| nu.eval(x)).collect())?
                    }
                    other => {
                        return Err(Error::invalid(format!("{} must be regularized", other.name())));
                    }
                };
                Ok((spec, 0.0))
            }
        }
    }

    /// Initial datum at regularization `eps`, or unregularized for `None`.
    pub fn datum(&self, grid: &Grid, eps: Option<f64>, psi: &Mollifier) -> Result<SampledFunction<f64>> {
        match eps {
            Some(e) => {
                let m = mollify(&self.net_spec(Slot::Datum, grid)?, e, grid, psi)?;
                match m.member {
                    SpaceMember::Function(f) => Ok(f),
                    SpaceMember::Nu(_) => Err(Error::invalid("datum produced a potential")),
                }
            }
            None => match self {
                SpaceData::Function { f } => Ok(f.sample(grid)),
                other => Err(Error::invalid(format!("{} must be regularized", other.name()))),
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::regularization::{make_mollifier, DEFAULT_RESOLUTION};

    #[test]
    fn evaluation_and_antiderivatives() {
        let fs = [
            SpaceFn::Constant { value: 2.0 },
            SpaceFn::Sine { mode: 3, amplitude: 0.5 },
            SpaceFn::SineSeries { coefficients: vec![1.0, -0.5, 0.25] },
            SpaceFn::Parabola { amplitude: 1.0 },
            SpaceFn::SineSquared { offset: 1.0, amplitude: 1.0, mode: 1 },
        ];
        for f in &fs {
            // midpoint rule on a fine mesh against the closed form
            let n = 20000;
            let h = 0.7 / n as f64;
            let num: f64 = (0..n).map(|k| f.eval((k as f64 + 0.5) * h)).sum::<f64>() * h;
            assert!((num - f.antiderivative(0.7)).abs() < 1e-8, "{f:?}");
        }
        let sum = SpaceFn::Sum { terms: fs.to_vec() };
        let direct: f64 = fs.iter().map(|f| f.eval(0.3)).sum();
        assert_eq!(sum.eval(0.3), direct);
    }

    #[test]
    fn json_round_trip() {
        let d = SpaceData::DirectQ {
            q: SpaceFn::SineSquared { offset: 1.0, amplitude: 1.0, mode: 1 },
        };
        let s = serde_json::to_string(&d).unwrap();
        let back: SpaceData = serde_json::from_str(&s).unwrap();
        assert_eq!(d, back);
        let parsed: SpaceFn = serde_json::from_str(r#"{"kind":"sine"}"#).unwrap();
        assert_eq!(parsed, SpaceFn::Sine { mode: 1, amplitude: 1.0 });
        assert!(serde_json::from_str::<SpaceFn>(r#"{"kind":"sine","typo":1}"#).is_err());
    }

    #[test]
    fn slots_and_flags() {
        let delta = SpaceData::Delta { x0: 0.5 };
        assert!(delta.validate(Slot::Datum, true).is_ok());
        assert!(delta.validate(Slot::Datum, false).is_err());
        let h = SpaceData::HeavisideNu { x0: 0.5 };
        assert!(h.validate(Slot::Datum, true).is_err());
        assert!(h.validate(Slot::Potential, false).is_ok());
        let neg = SpaceData::DirectQ { q: SpaceFn::Constant { value: -1.0 } };
        assert!(neg.validate(Slot::Potential, false).is_err());
    }

    #[test]
    fn unregularized_heaviside_matches_the_weak_delta() {
        let g = Grid::new(255).unwrap();
        let psi = make_mollifier(DEFAULT_RESOLUTION).unwrap();
        let (p, _) = SpaceData::HeavisideNu { x0: 0.5 }.potential(&g, None, &psi).unwrap();
        assert_eq!(p, PotentialSpec::heaviside(g, 0.5).unwrap());
        let (p, clip) = SpaceData::HeavisideNu { x0: 0.5 }.potential(&g, Some(0.125), &psi).unwrap();
        assert_eq!(p.kind_name(), "weak_nu");
        assert_eq!(clip, 0.0);
    }
}
