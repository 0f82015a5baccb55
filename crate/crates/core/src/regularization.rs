//! Friedrichs mollification of a small catalogue of singular data, and
//! power-law fits of norm growth along an `eps` ladder.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::function_space::{Grid, SampledFunction, TimeGrid, TimeProfile};
use crate::sl_spectral::{sturm_count, weak_potential_form, OperatorMatrix, PotentialSpec};

pub const MIN_RESOLUTION: usize = 64;
/// Resolution used when a caller has no preference.
pub const DEFAULT_RESOLUTION: usize = 256;
const CDF_INTERVALS: usize = 4096;
/// `fit_quality` below this marks a net as not following a power law.
pub const POWER_LAW_QUALITY: f64 = 0.98;

fn bump(x: f64) -> f64 {
    if x.abs() >= 1.0 {
        0.0
    } else {
        (-1.0 / (1.0 - x * x)).exp()
    }
}

/// Normalized bump `psi(x) = exp(-1/(1-x^2)) / Z` on `(-1, 1)`.
#[derive(Debug, Clone)]
pub struct Mollifier {
    resolution: usize,
    /// Trapezoid nodes on `[-1, 1]`.
    nodes: Vec<f64>,
    /// `w_k psi(z_k)`; these sum to one exactly.
    weights: Vec<f64>,
    normalization: f64,
    psi0: f64,
    /// `Psi` at `CDF_INTERVALS + 1` equispaced nodes.
    cdf: Vec<f64>,
    cdf_scale: f64,
}

pub fn make_mollifier(resolution: usize) -> Result<Mollifier> {
    if resolution < MIN_RESOLUTION {
        return Err(Error::invalid(format!(
            "mollifier resolution {resolution} is below {MIN_RESOLUTION}"
        )));
    }
    let dz = 2.0 / resolution as f64;
    let nodes: Vec<f64> = (0..=resolution).map(|k| -1.0 + k as f64 * dz).collect();
    // endpoint samples vanish, so the trapezoid rule is a plain sum
    let z: f64 = nodes.iter().map(|&x| bump(x)).sum::<f64>() * dz;
    let weights = nodes.iter().map(|&x| bump(x) * dz / z).collect();

    // cumulative Simpson on a fine table, then normalized to end at one
    let dc = 2.0 / CDF_INTERVALS as f64;
    let mut cdf = Vec::with_capacity(CDF_INTERVALS + 1);
    let mut acc = 0.0;
    cdf.push(0.0);
    for k in 0..CDF_INTERVALS {
        let a = -1.0 + k as f64 * dc;
        acc += dc / 6.0 * (bump(a) + 4.0 * bump(a + 0.5 * dc) + bump(a + dc));
        cdf.push(acc);
    }
    let total = acc;
    cdf.iter_mut().for_each(|c| *c /= total);

    Ok(Mollifier {
        resolution,
        nodes,
        weights,
        normalization: z,
        psi0: (-1.0f64).exp() / z,
        cdf,
        cdf_scale: total,
    })
}

impl Mollifier {
    pub fn resolution(&self) -> usize {
        self.resolution
    }

    /// `Z = int exp(-1/(1-x^2)) dx` as computed at this resolution.
    pub fn normalization(&self) -> f64 {
        self.normalization
    }

    pub fn psi0(&self) -> f64 {
        self.psi0
    }

    pub fn psi(&self, x: f64) -> f64 {
        bump(x) / self.normalization
    }

    /// `psi_eps(x) = psi(x/eps)/eps`.
    pub fn scaled(&self, x: f64, eps: f64) -> f64 {
        self.psi(x / eps) / eps
    }

    /// Trapezoid mass of the stored samples.
    pub fn mass(&self) -> f64 {
        let dz = 2.0 / self.resolution as f64;
        self.nodes.iter().map(|&x| self.psi(x)).sum::<f64>() * dz
    }

    /// Antiderivative `Psi(x) = int_{-1}^x psi`.
    pub fn cdf(&self, x: f64) -> f64 {
        if x <= -1.0 {
            return 0.0;
        }
        if x >= 1.0 {
            return 1.0;
        }
        let dc = 2.0 / CDF_INTERVALS as f64;
        let pos = (x + 1.0) / dc;
        let k = (pos.floor() as usize).min(CDF_INTERVALS - 1);
        let t = pos - k as f64;
        let a = -1.0 + k as f64 * dc;
        // cubic Hermite with the exact derivative psi
        let (y0, y1) = (self.cdf[k], self.cdf[k + 1]);
        let (d0, d1) = (
            bump(a) / self.cdf_scale * dc,
            bump(a + dc) / self.cdf_scale * dc,
        );
        let t2 = t * t;
        let t3 = t2 * t;
        let v = (2.0 * t3 - 3.0 * t2 + 1.0) * y0
            + (t3 - 2.0 * t2 + t) * d0
            + (-2.0 * t3 + 3.0 * t2) * y1
            + (t3 - t2) * d1;
        // the flat tails make the cubic undershoot by roundoff-sized amounts
        v.clamp(y0, y1)
    }

    /// `int g(x - eps z) psi(z) dz` by the stored trapezoid rule.
    pub fn convolve_at(&self, x: f64, eps: f64, g: impl Fn(f64) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .filter(|(_, w)| **w > 0.0)
            .map(|(&z, &w)| w * g(x - eps * z))
            .sum()
    }
}

/// Time coefficient shapes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TimeKind {
    Constant { value: f64 },
    /// Continuous piecewise-linear through `(knots[i], values[i])`.
    Piecewise { knots: Vec<f64>, values: Vec<f64> },
    Jump { t0: f64, before: f64, after: f64 },
}

impl TimeKind {
    pub fn eval(&self, t: f64) -> f64 {
        match self {
            TimeKind::Constant { value } => *value,
            TimeKind::Jump { t0, before, after } => {
                if t < *t0 {
                    *before
                } else {
                    *after
                }
            }
            TimeKind::Piecewise { knots, values } => {
                if t <= knots[0] {
                    return values[0];
                }
                for (k, w) in knots.windows(2).enumerate() {
                    if t <= w[1] {
                        let s = (t - w[0]) / (w[1] - w[0]);
                        return values[k] + s * (values[k + 1] - values[k]);
                    }
                }
                *values.last().expect("validated nonempty")
            }
        }
    }

    pub fn min_value(&self) -> f64 {
        match self {
            TimeKind::Constant { value } => *value,
            TimeKind::Jump { before, after, .. } => before.min(*after),
            TimeKind::Piecewise { values, .. } => values.iter().copied().fold(f64::INFINITY, f64::min),
        }
    }

    pub fn validate(&self, t_end: f64) -> Result<()> {
        match self {
            TimeKind::Constant { .. } => Ok(()),
            TimeKind::Jump { t0, .. } => {
                if *t0 > 0.0 && *t0 < t_end {
                    Ok(())
                } else {
                    Err(Error::invalid(format!("jump time {t0} outside (0, {t_end})")))
                }
            }
            TimeKind::Piecewise { knots, values } => {
                if knots.len() < 2 || knots.len() != values.len() {
                    return Err(Error::invalid(
                        "piecewise coefficient needs matching knots and values, at least two",
                    ));
                }
                if knots.windows(2).any(|w| w[1] <= w[0]) {
                    return Err(Error::invalid("piecewise knots must increase"));
                }
                Ok(())
            }
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, TimeKind::Constant { .. })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum NetKind {
    Delta { x0: f64 },
    /// `nu = H(x - x0)`, i.e. `q = delta_{x0}` through the weak form.
    HeavisideNu { x0: f64 },
    /// `nu = |x - x0|^{-alpha}` with `0 < alpha < 1/2`.
    PowerNu { x0: f64, alpha: f64 },
    SmoothSample(SampledFunction<f64>),
    Time(TimeKind),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum NetRole {
    PotentialQ,
    PotentialNu,
    InitialDatum,
    TimeCoefficient,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetSpec {
    pub kind: NetKind,
    pub role: NetRole,
    pub label: String,
}

impl NetSpec {
    pub fn new(kind: NetKind, role: NetRole) -> Result<Self> {
        let allowed = match (&kind, role) {
            (NetKind::Delta { .. }, NetRole::PotentialQ | NetRole::InitialDatum) => true,
            (NetKind::HeavisideNu { .. }, NetRole::PotentialNu | NetRole::PotentialQ) => true,
            (NetKind::PowerNu { .. }, NetRole::PotentialNu | NetRole::InitialDatum) => true,
            (NetKind::SmoothSample(_), NetRole::PotentialQ | NetRole::InitialDatum) => true,
            (NetKind::Time(_), NetRole::TimeCoefficient) => true,
            _ => false,
        };
        if !allowed {
            return Err(Error::invalid(format!(
                "{} cannot be used as {:?}",
                kind_name(&kind),
                role
            )));
        }
        match &kind {
            NetKind::Delta { x0 } | NetKind::HeavisideNu { x0 } => check_x0(*x0)?,
            NetKind::PowerNu { x0, alpha } => {
                check_x0(*x0)?;
                if !(*alpha > 0.0 && *alpha < 0.5) {
                    return Err(Error::invalid(format!("power exponent {alpha} outside (0, 1/2)")));
                }
            }
            _ => {}
        }
        let label = match &kind {
            NetKind::Delta { x0 } => format!("delta({x0})"),
            NetKind::HeavisideNu { x0 } => format!("heaviside_nu({x0})"),
            NetKind::PowerNu { x0, alpha } => format!("power_nu({x0},{alpha})"),
            NetKind::SmoothSample(_) => "smooth_sample".to_string(),
            NetKind::Time(t) => format!("time:{}", serde_json::to_string(t).unwrap_or_default()),
        };
        Ok(NetSpec { kind, role, label })
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn kind_name(&self) -> &'static str {
        kind_name(&self.kind)
    }
}

fn kind_name(kind: &NetKind) -> &'static str {
    match kind {
        NetKind::Delta { .. } => "delta",
        NetKind::HeavisideNu { .. } => "heaviside_nu",
        NetKind::PowerNu { .. } => "power_nu",
        NetKind::SmoothSample(_) => "smooth_sample",
        NetKind::Time(_) => "time",
    }
}

fn check_x0(x0: f64) -> Result<()> {
    if x0 > 0.0 && x0 < 1.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!("x0 = {x0} outside (0, 1)")))
    }
}

/// A mollified spatial member.
#[derive(Debug, Clone, PartialEq)]
pub enum SpaceMember {
    Function(SampledFunction<f64>),
    /// `nu_eps` on the cell midpoints.
    Nu(Vec<f64>),
}

#[derive(Debug, Clone)]
pub struct Mollified {
    pub member: SpaceMember,
    /// Mass of the kernel cut off by the interval ends (0 when interior).
    pub clipped_mass: f64,
}

impl Mollified {
    pub fn as_potential(&self, grid: Grid) -> Result<PotentialSpec> {
        match &self.member {
            SpaceMember::Function(q) => {
                if let Some(v) = q.values().iter().find(|v| **v < 0.0) {
                    return Err(Error::HypothesisViolation(format!(
                        "mollified potential takes the negative value {v}"
                    )));
                }
                Ok(PotentialSpec::direct_q(q.clone()))
            }
            SpaceMember::Nu(nu) => PotentialSpec::weak_nu(grid, nu.clone()),
        }
    }

    /// The function itself, or the induced pointwise `q = nu'` for `Nu`.
    pub fn pointwise(&self, grid: &Grid) -> SampledFunction<f64> {
        match &self.member {
            SpaceMember::Function(f) => f.clone(),
            SpaceMember::Nu(nu) => {
                let h = grid.h();
                let q = weak_potential_form(nu).into_iter().map(|p| p / h).collect();
                SampledFunction::new(*grid, q).expect("m jumps from m+1 midpoints")
            }
        }
    }
}

fn clipped(psi: &Mollifier, x0: f64, eps: f64) -> f64 {
    psi.cdf(-x0 / eps) + (1.0 - psi.cdf((1.0 - x0) / eps))
}

/// `int (x - y)^{-alpha} psi_eps(x0 + s y) dy` type integrals: mollified
/// `|y - x0|^{-alpha}` at `x`, zero-extended outside (0,1).
fn mollified_power(psi: &Mollifier, x: f64, x0: f64, alpha: f64, eps: f64) -> f64 {
    let lo = (x - eps).max(0.0);
    let hi = (x + eps).min(1.0);
    if hi <= lo {
        return 0.0;
    }
    let beta = 1.0 - alpha;
    let kernel = |y: f64| psi.scaled(x - y, eps);
    // int_{ra}^{rb} r^{-alpha} g(r) dr with r = s^{1/beta}
    let piece = |ra: f64, rb: f64, g: &dyn Fn(f64) -> f64| -> f64 {
        if rb <= ra {
            return 0.0;
        }
        let (sa, sb) = (ra.powf(beta), rb.powf(beta));
        let n = 256;
        let ds = (sb - sa) / n as f64;
        let f = |s: f64| g(s.powf(1.0 / beta));
        let mut acc = f(sa) + f(sb);
        for k in 1..n {
            let w = if k % 2 == 1 { 4.0 } else { 2.0 };
            acc += w * f(sa + k as f64 * ds);
        }
        acc * ds / 3.0 / beta
    };
    let mut total = 0.0;
    if hi > x0 {
        total += piece((lo - x0).max(0.0), hi - x0, &|r| kernel(x0 + r));
    }
    if lo < x0 {
        total += piece((x0 - hi).max(0.0), x0 - lo, &|r| kernel(x0 - r));
    }
    total
}

/// Mollifies a spatial net member at one `eps`.
pub fn mollify(spec: &NetSpec, eps: f64, grid: &Grid, psi: &Mollifier) -> Result<Mollified> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::invalid(format!("eps must be positive, got {eps}")));
    }
    match (&spec.kind, spec.role) {
        (NetKind::Delta { x0 }, _) | (NetKind::HeavisideNu { x0 }, NetRole::PotentialQ) => Ok(Mollified {
            member: SpaceMember::Function(grid.sample(|x| psi.scaled(x - x0, eps))),
            clipped_mass: clipped(psi, *x0, eps),
        }),
        (NetKind::HeavisideNu { x0 }, _) => {
            // antiderivative of the mollified delta: nu_eps' = psi_eps(. - x0)
            let nu = grid.midpoints().map(|x| psi.cdf((x - x0) / eps)).collect();
            Ok(Mollified {
                member: SpaceMember::Nu(nu),
                clipped_mass: clipped(psi, *x0, eps),
            })
        }
        (NetKind::PowerNu { x0, alpha }, role) => {
            let at = |x: f64| mollified_power(psi, x, *x0, *alpha, eps);
            let member = if role == NetRole::PotentialNu {
                SpaceMember::Nu(grid.midpoints().collect::<Vec<_>>().into_par_iter().map(at).collect())
            } else {
                let values = grid.nodes().collect::<Vec<_>>().into_par_iter().map(at).collect();
                SpaceMember::Function(SampledFunction::new(*grid, values)?)
            };
            Ok(Mollified {
                member,
                clipped_mass: 0.0,
            })
        }
        (NetKind::SmoothSample(f), _) => {
            crate::function_space::check_same_grid(f.grid(), grid)?;
            let padded = f.padded();
            let h = grid.h();
            let m = grid.m();
            // piecewise-linear interpolant through the zero ends, zero outside
            let interp = |y: f64| -> f64 {
                if y <= 0.0 || y >= 1.0 {
                    return 0.0;
                }
                let pos = y / h;
                let k = (pos.floor() as usize).min(m);
                let t = pos - k as f64;
                padded[k] * (1.0 - t) + padded[k + 1] * t
            };
            let values = grid.nodes().map(|x| psi.convolve_at(x, eps, interp)).collect();
            Ok(Mollified {
                member: SpaceMember::Function(SampledFunction::new(*grid, values)?),
                clipped_mass: 0.0,
            })
        }
        (NetKind::Time(_), _) => Err(Error::invalid("time coefficients are mollified with mollify_time")),
    }
}

/// Samples a time coefficient without regularization.
pub fn sample_time(kind: &TimeKind, timegrid: TimeGrid, a_floor: f64) -> Result<TimeProfile> {
    kind.validate(timegrid.t_end())?;
    TimeProfile::from_fn(timegrid, a_floor, |t| kind.eval(t))
}

/// Mollified time coefficient; `a` is extended by its end values outside
/// `[0, T]`, so `a_eps` stays between the extreme values of `a`.
pub fn mollify_time(
    kind: &TimeKind,
    eps: f64,
    timegrid: TimeGrid,
    a_floor: f64,
    psi: &Mollifier,
) -> Result<TimeProfile> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::invalid(format!("eps must be positive, got {eps}")));
    }
    kind.validate(timegrid.t_end())?;
    let t_end = timegrid.t_end();
    match kind {
        TimeKind::Constant { value } => TimeProfile::new(timegrid, vec![*value; timegrid.len()], a_floor),
        TimeKind::Jump { t0, before, after } => TimeProfile::from_fn(timegrid, a_floor, |t| {
            before + (after - before) * psi.cdf((t - t0) / eps)
        }),
        TimeKind::Piecewise { .. } => TimeProfile::from_fn(timegrid, a_floor, |t| {
            psi.convolve_at(t, eps, |s| kind.eval(s.clamp(0.0, t_end)))
        }),
    }
}

/// Positivity checks for a weak potential given by `nu` at the midpoints.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct FormCheck {
    /// The potential part alone is positive semidefinite.
    pub potential_psd: bool,
    pub min_potential_entry: f64,
    /// The full discrete operator is positive definite.
    pub operator_positive: bool,
}

pub fn check_weak_form(matrix: &OperatorMatrix, nu_mid: &[f64]) -> FormCheck {
    let p = weak_potential_form(nu_mid);
    let min = p.iter().copied().fold(f64::INFINITY, f64::min);
    FormCheck {
        potential_psd: min >= 0.0,
        min_potential_entry: min,
        operator_positive: sturm_count(matrix, 0.0) == 0,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum NormKind {
    Linf,
    L2,
    /// `L2` norm of the centered second difference.
    D2L2,
}

impl NormKind {
    pub fn name(self) -> &'static str {
        match self {
            NormKind::Linf => "linf",
            NormKind::L2 => "l2",
            NormKind::D2L2 => "d2_l2",
        }
    }

    pub fn of(self, f: &SampledFunction<f64>) -> f64 {
        match self {
            NormKind::Linf => f.max_abs(),
            NormKind::L2 => f.l2_norm(),
            NormKind::D2L2 => f.second_derivative().l2_norm(),
        }
    }
}

/// Norm kinds accepted by `fit_scaling_exponent`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FitNorm {
    Linf,
    L2,
    /// Both `||f||_{L2}` and `||f''||_{L2}`; the larger slope is reported.
    H2Pair,
}

#[derive(Debug, Clone)]
pub struct RegularizedNet {
    pub spec: NetSpec,
    pub epsilons: Vec<f64>,
    pub members: Vec<Mollified>,
    /// Norms of the pointwise member (induced `q` for `nu` members).
    pub norms: BTreeMap<NormKind, Vec<f64>>,
}

pub fn default_ladder() -> Vec<f64> {
    ladder(3, 10)
}

/// `2^{-j}` for `j = from..=to`.
pub fn ladder(from: i32, to: i32) -> Vec<f64> {
    (from..=to).map(|j| 2f64.powi(-j)).collect()
}

pub(crate) fn check_ladder(epsilons: &[f64]) -> Result<()> {
    if epsilons.is_empty() {
        return Err(Error::invalid("empty eps ladder"));
    }
    if let Some(e) = epsilons.iter().find(|e| !(**e > 0.0 && e.is_finite())) {
        return Err(Error::invalid(format!("eps must be positive, got {e}")));
    }
    if epsilons.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::invalid("eps ladder must be strictly decreasing"));
    }
    Ok(())
}

pub fn build_net(spec: &NetSpec, epsilons: &[f64], grid: &Grid, psi: &Mollifier) -> Result<RegularizedNet> {
    check_ladder(epsilons)?;
    let members: Vec<Mollified> = epsilons
        .par_iter()
        .map(|&e| mollify(spec, e, grid, psi).map_err(|err| err.at_epsilon(e)))
        .collect::<Result<_>>()?;
    let mut norms = BTreeMap::new();
    for kind in [NormKind::Linf, NormKind::L2, NormKind::D2L2] {
        norms.insert(kind, members.iter().map(|m| kind.of(&m.pointwise(grid))).collect());
    }
    Ok(RegularizedNet {
        spec: spec.clone(),
        epsilons: epsilons.to_vec(),
        members,
        norms,
    })
}

/// `norm ~ C eps^{-N}` fitted by least squares in log-log coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScalingFit {
    pub constant: f64,
    /// `N`; `-inf` when some norm is exactly zero.
    #[serde(serialize_with = "crate::output::serialize_extended_f64")]
    pub exponent: f64,
    pub fit_quality: f64,
    pub negligible: bool,
}

impl ScalingFit {
    pub fn power_law(&self) -> bool {
        self.negligible || self.fit_quality >= POWER_LAW_QUALITY
    }
}

pub fn fit_power_law(epsilons: &[f64], values: &[f64]) -> Result<ScalingFit> {
    if epsilons.len() != values.len() {
        return Err(Error::invalid("eps and norm tables differ in length"));
    }
    if epsilons.len() < 4 {
        return Err(Error::invalid(format!(
            "a scaling fit needs at least 4 points, got {}",
            epsilons.len()
        )));
    }
    if let Some(e) = epsilons.iter().find(|e| !(**e > 0.0)) {
        return Err(Error::invalid(format!("eps must be positive, got {e}")));
    }
    if let Some(v) = values.iter().find(|v| !v.is_finite() || **v < 0.0) {
        return Err(Error::invalid(format!("norms must be finite and nonnegative, got {v}")));
    }
    if values.contains(&0.0) {
        return Ok(ScalingFit {
            constant: 0.0,
            exponent: f64::NEG_INFINITY,
            fit_quality: 1.0,
            negligible: true,
        });
    }
    let xs: Vec<f64> = epsilons.iter().map(|e| (1.0 / e).ln()).collect();
    let ys: Vec<f64> = values.iter().map(|v| v.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::invalid("all eps values coincide"));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    // a flat line through flat data is a perfect fit
    let quality = if syy <= 1e-24 * (my * my).max(1.0) {
        1.0
    } else {
        1.0 - ss_res / syy
    };
    Ok(ScalingFit {
        constant: intercept.exp(),
        exponent: slope,
        fit_quality: quality,
        negligible: false,
    })
}

pub fn fit_scaling_exponent(net: &RegularizedNet, norm: FitNorm) -> Result<ScalingFit> {
    let table = |k: NormKind| net.norms.get(&k).expect("all norm kinds are tabulated");
    match norm {
        FitNorm::Linf => fit_power_law(&net.epsilons, table(NormKind::Linf)),
        FitNorm::L2 => fit_power_law(&net.epsilons, table(NormKind::L2)),
        FitNorm::H2Pair => {
            let a = fit_power_law(&net.epsilons, table(NormKind::L2))?;
            let b = fit_power_law(&net.epsilons, table(NormKind::D2L2))?;
            Ok(if b.exponent > a.exponent { b } else { a })
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct NetManifest {
    pub label: String,
    pub kind: String,
    pub role: NetRole,
    pub epsilons: Vec<f64>,
    pub clipped_mass: Vec<f64>,
    pub norms: BTreeMap<String, Vec<f64>>,
}

impl RegularizedNet {
    pub fn manifest(&self) -> NetManifest {
        NetManifest {
            label: self.spec.label.clone(),
            kind: self.spec.kind_name().to_string(),
            role: self.spec.role,
            epsilons: self.epsilons.clone(),
            clipped_mass: self.members.iter().map(|m| m.clipped_mass).collect(),
            norms: self
                .norms
                .iter()
                .map(|(k, v)| (k.name().to_string(), v.clone()))
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::function_space::trapezoid_integrate;
    use crate::sl_spectral::assemble;
    use std::f64::consts::PI;

    fn psi() -> Mollifier {
        make_mollifier(DEFAULT_RESOLUTION).unwrap()
    }

    #[test]
    fn mollifier_basics() {
        assert!(make_mollifier(63).is_err());
        let p = psi();
        assert!((p.mass() - 1.0).abs() < 1e-10);
        assert_eq!(p.psi(1.0), 0.0);
        assert_eq!(p.psi(-1.0), 0.0);
        assert_eq!(p.psi(0.3), p.psi(-0.3));
        assert_eq!(p.cdf(-1.0), 0.0);
        assert_eq!(p.cdf(1.0), 1.0);
        assert!((p.cdf(0.0) - 0.5).abs() < 1e-12);
        let lo = make_mollifier(64).unwrap();
        let hi = make_mollifier(4096).unwrap();
        assert!((lo.psi0() - hi.psi0()).abs() < 1e-6);
    }

    #[test]
    fn cdf_is_monotone_and_differentiates_to_psi() {
        let p = psi();
        let xs: Vec<f64> = (0..=2000).map(|k| -1.0 + k as f64 * 1e-3).collect();
        assert!(xs.windows(2).all(|w| p.cdf(w[1]) >= p.cdf(w[0])));
        for &x in &[-0.7, -0.2, 0.0, 0.45, 0.9] {
            let d = 1e-5;
            let fd = (p.cdf(x + d) - p.cdf(x - d)) / (2.0 * d);
            assert!((fd - p.psi(x)).abs() < 1e-6, "x={x}");
        }
    }

    #[test]
    fn delta_member() {
        let g = Grid::new(1999).unwrap();
        let p = psi();
        let spec = NetSpec::new(NetKind::Delta { x0: 0.5 }, NetRole::PotentialQ).unwrap();
        let m = mollify(&spec, 0.05, &g, &p).unwrap();
        let f = m.pointwise(&g);
        assert!((trapezoid_integrate(&f).unwrap() - 1.0).abs() < 1e-8);
        assert!((f.max_abs() - p.psi0() / 0.05).abs() / (p.psi0() / 0.05) < 1e-4);
        assert_eq!(m.clipped_mass, 0.0);

        let edge = NetSpec::new(NetKind::Delta { x0: 0.02 }, NetRole::InitialDatum).unwrap();
        let m = mollify(&edge, 0.05, &g, &p).unwrap();
        assert!(m.clipped_mass > 0.1);
    }

    #[test]
    fn heaviside_nu_member() {
        let g = Grid::new(1999).unwrap();
        let p = psi();
        let spec = NetSpec::new(NetKind::HeavisideNu { x0: 0.5 }, NetRole::PotentialNu).unwrap();
        let m = mollify(&spec, 0.05, &g, &p).unwrap();
        let SpaceMember::Nu(nu) = &m.member else { panic!("expected nu") };
        assert!(nu.windows(2).all(|w| w[1] >= w[0]));
        // assembled weak q against the constant test vector
        let q = m.pointwise(&g);
        assert!((trapezoid_integrate(&q).unwrap() - 1.0).abs() < 1e-6);
        let pot = m.as_potential(g).unwrap();
        assert!(assemble(&pot, &g).is_ok());
    }

    #[test]
    fn power_nu_member() {
        let g = Grid::new(1023).unwrap();
        let p = psi();
        let spec = NetSpec::new(NetKind::PowerNu { x0: 0.5, alpha: 0.3 }, NetRole::PotentialNu).unwrap();
        assert!(NetSpec::new(NetKind::PowerNu { x0: 0.5, alpha: 0.6 }, NetRole::PotentialNu).is_err());
        let m = mollify(&spec, 0.0625, &g, &p).unwrap();
        let SpaceMember::Nu(nu) = &m.member else { panic!("expected nu") };
        // far from x0 and the ends the mollified value is close to nu itself
        let k = g.midpoints().position(|x| (x - 0.25).abs() < 0.6 * g.h()).unwrap();
        let x = g.midpoints().nth(k).unwrap();
        let exact = (0.5 - x).powf(-0.3);
        assert!((nu[k] - exact).abs() / exact < 2e-2, "{} vs {exact}", nu[k]);
        // peak stays bounded, roughly eps^{-alpha}
        let peak = nu.iter().copied().fold(0.0, f64::max);
        assert!(peak < 3.0 * 0.0625f64.powf(-0.3));

        let pot = m.as_potential(g).unwrap();
        let a = assemble(&pot, &g).unwrap();
        let check = check_weak_form(&a, nu);
        assert!(!check.potential_psd);
        assert!(check.operator_positive);
    }

    #[test]
    fn smooth_sample_converges() {
        let g = Grid::new(2047).unwrap();
        let p = psi();
        let f = g.sample(|x| (PI * x).sin().powi(3));
        let spec = NetSpec::new(NetKind::SmoothSample(f.clone()), NetRole::InitialDatum).unwrap();
        let errs: Vec<f64> = default_ladder()
            .iter()
            .map(|&e| mollify(&spec, e, &g, &p).unwrap().pointwise(&g).sub(&f).unwrap().l2_norm())
            .collect();
        assert!(errs.windows(2).all(|w| w[1] < w[0]), "{errs:?}");
        // constants are reproduced exactly away from the ends
        let c = g.sample(|_| 2.0);
        let spec = NetSpec::new(NetKind::SmoothSample(c), NetRole::PotentialQ).unwrap();
        let m = mollify(&spec, 0.125, &g, &p).unwrap().pointwise(&g);
        let mid = m.values()[g.m() / 2];
        assert!((mid - 2.0).abs() < 1e-12);
    }

    #[test]
    fn time_mollification() {
        let tg = TimeGrid::new(1.0, 400).unwrap();
        let p = psi();
        let jump = TimeKind::Jump { t0: 0.5, before: 1.0, after: 2.0 };
        let a = mollify_time(&jump, 0.05, tg, 0.5, &p).unwrap();
        assert!(a.a_values().windows(2).all(|w| w[1] >= w[0]));
        assert!(a.a_values().iter().all(|&v| (1.0..=2.0).contains(&v)));
        assert_eq!(a.a_values()[0], 1.0);
        assert_eq!(*a.a_values().last().unwrap(), 2.0);

        let ramp = TimeKind::Piecewise { knots: vec![0.0, 1.0], values: vec![1.0, 3.0] };
        let a = mollify_time(&ramp, 0.05, tg, 0.5, &p).unwrap();
        // linear data is reproduced where the kernel stays inside [0, T]
        let j = 200;
        assert!((a.a_values()[j] - 2.0).abs() < 1e-12);
        assert!(a.a_values()[0] >= 1.0);

        let bad = TimeKind::Jump { t0: 1.5, before: 1.0, after: 2.0 };
        assert!(sample_time(&bad, tg, 0.5).is_err());
    }

    #[test]
    fn roles_are_checked() {
        assert!(NetSpec::new(NetKind::Delta { x0: 0.5 }, NetRole::PotentialNu).is_err());
        assert!(NetSpec::new(NetKind::Delta { x0: 1.5 }, NetRole::PotentialQ).is_err());
        let t = TimeKind::Constant { value: 1.0 };
        assert!(NetSpec::new(NetKind::Time(t.clone()), NetRole::InitialDatum).is_err());
        assert!(NetSpec::new(NetKind::Time(t), NetRole::TimeCoefficient).is_ok());
    }

    #[test]
    fn power_law_fits() {
        let eps = default_ladder();
        let v: Vec<f64> = eps.iter().map(|e| 3.0 * e.powi(3)).collect();
        let f = fit_power_law(&eps, &v).unwrap();
        assert!((f.exponent + 3.0).abs() < 1e-12);
        assert!((f.constant - 3.0).abs() < 1e-10);
        assert!((f.fit_quality - 1.0).abs() < 1e-12);

        let flat = vec![2.0; eps.len()];
        let f = fit_power_law(&eps, &flat).unwrap();
        assert_eq!(f.exponent, 0.0);
        assert_eq!(f.fit_quality, 1.0);

        let mut z = v.clone();
        z[3] = 0.0;
        let f = fit_power_law(&eps, &z).unwrap();
        assert!(f.negligible && f.exponent == f64::NEG_INFINITY);

        assert!(fit_power_law(&eps[..3], &v[..3]).is_err());
        assert!(fit_power_law(&[1.0, 0.5, 0.0, -1.0], &[1.0; 4]).is_err());
    }

    #[test]
    fn delta_net_scaling() {
        let g = Grid::new(8191).unwrap();
        let p = psi();
        let spec = NetSpec::new(NetKind::Delta { x0: 0.5 }, NetRole::PotentialQ).unwrap();
        let net = build_net(&spec, &default_ladder(), &g, &p).unwrap();
        let f = fit_scaling_exponent(&net, FitNorm::Linf).unwrap();
        assert!((f.exponent - 1.0).abs() < 0.05, "{f:?}");
        let f = fit_scaling_exponent(&net, FitNorm::L2).unwrap();
        assert!((f.exponent - 0.5).abs() < 0.05, "{f:?}");
        let f = fit_scaling_exponent(&net, FitNorm::H2Pair).unwrap();
        assert!((f.exponent - 2.5).abs() < 0.1, "{f:?}");
        assert_eq!(net.manifest().norms.len(), 3);
    }
}
