//! Epsilon-ladder experiments: moderateness of solution nets, transfer of
//! negligible perturbations, and convergence to the classical solution.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::catalog::{Slot, SpaceData};
use crate::error::{Error, Result};
use crate::evolution::{evolve_homogeneous, EvolutionProblem, EvolutionResult};
use crate::function_space::{Grid, SampledFunction, TimeGrid, TimeProfile};
use crate::output::{fmt_f64, serialize_extended_f64, svg_plot, CsvTable, Series};
use crate::regularization::{
    check_ladder, check_weak_form, fit_power_law, make_mollifier, mollify_time, sample_time, FormCheck, Mollifier,
    ScalingFit, TimeKind,
};
use crate::sl_spectral::{assemble, build_basis, PotentialKind, PotentialSpec, SpectralBasis, MODES_PER_NODE};
use crate::spectral_transform::{analyze, sobolev_norm, synthesize, SpectralCoeffs};

/// Grid spacing must resolve the smallest mollifier support this many times.
pub const EPS_PER_CELL: f64 = 8.0;
/// Allowed gap between solution and data exponents.
pub const EXPONENT_MATCH: f64 = 0.1;
/// Allowed loss of order in the uniqueness experiment.
pub const ORDER_MARGIN: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PerturbTarget {
    Potential,
    Coefficient,
    Datum,
    Joint,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PerturbShape {
    /// `sin(pi x)` in space, `sin(pi t / T)` in time.
    Sine,
    Constant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Perturbation {
    /// Negligibility order `p`: the perturbation is `amplitude eps^p shape`.
    pub order: f64,
    pub targets: Vec<PerturbTarget>,
    pub shape: PerturbShape,
    #[serde(default = "one")]
    pub amplitude: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VwsConfig {
    pub potential: SpaceData,
    pub regularize_potential: bool,
    pub a: TimeKind,
    pub a_floor: f64,
    pub regularize_a: bool,
    pub u0: SpaceData,
    pub regularize_u0: bool,
    pub s: f64,
    pub m: usize,
    pub n_modes: usize,
    pub t_end: f64,
    pub steps: usize,
    pub epsilons: Vec<f64>,
    pub perturbation: Option<Perturbation>,
    /// Grid and mode multiplier of the consistency reference.
    pub reference_factor: usize,
    /// Absolute bound on `E(eps_min)`; defaults to `1e-3 ||u0||`.
    pub tol_consistency: Option<f64>,
    pub mollifier_resolution: usize,
    pub seed: u64,
}

impl Default for VwsConfig {
    fn default() -> Self {
        use crate::catalog::SpaceFn;
        VwsConfig {
            potential: SpaceData::DirectQ {
                q: SpaceFn::SineSquared {
                    offset: 1.0,
                    amplitude: 1.0,
                    mode: 1,
                },
            },
            regularize_potential: true,
            a: TimeKind::Constant { value: 1.0 },
            a_floor: 0.5,
            regularize_a: false,
            u0: SpaceData::Function {
                f: SpaceFn::Parabola { amplitude: 1.0 },
            },
            regularize_u0: true,
            s: 1.0,
            m: 1023,
            n_modes: 32,
            t_end: 1.0,
            steps: 400,
            epsilons: crate::regularization::ladder(3, 7),
            perturbation: None,
            reference_factor: 2,
            tol_consistency: None,
            mollifier_resolution: crate::regularization::DEFAULT_RESOLUTION,
            seed: 0,
        }
    }
}

fn cfg_err(path: &str, msg: impl Into<String>) -> Error {
    Error::config(path, msg)
}

impl VwsConfig {
    /// Every guard that can be checked without computing anything.
    pub fn validate(&self) -> Result<()> {
        check_ladder(&self.epsilons).map_err(|e| cfg_err("epsilons", e.to_string()))?;
        if self.epsilons.len() < 4 {
            return Err(cfg_err("epsilons", "a scaling fit needs at least 4 values of eps"));
        }
        if self.m < 3 {
            return Err(cfg_err("m", "the grid needs at least 3 interior nodes"));
        }
        let cap = self.m / MODES_PER_NODE;
        if self.n_modes == 0 || self.n_modes > cap {
            return Err(cfg_err(
                "n_modes",
                format!("n_modes = {} violates n_modes <= m/{MODES_PER_NODE} = {cap}", self.n_modes),
            ));
        }
        if !(self.s > 0.0 && self.s.is_finite()) {
            return Err(cfg_err("s", "s must be positive"));
        }
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            return Err(cfg_err("t_end", "final time must be positive"));
        }
        if self.steps < 2 {
            return Err(cfg_err("steps", "need at least 2 time steps"));
        }
        if !(self.a_floor > 0.0) {
            return Err(cfg_err("a_floor", "a0 must be positive"));
        }
        self.a.validate(self.t_end).map_err(|e| cfg_err("a", e.to_string()))?;
        if self.a.min_value() < self.a_floor {
            return Err(cfg_err(
                "a",
                format!("min a = {} is below a0 = {}", self.a.min_value(), self.a_floor),
            ));
        }
        self.potential
            .validate(Slot::Potential, self.regularize_potential)
            .map_err(|e| cfg_err("potential", e.to_string()))?;
        self.u0
            .validate(Slot::Datum, self.regularize_u0)
            .map_err(|e| cfg_err("u0", e.to_string()))?;
        let eps_min = *self.epsilons.last().expect("nonempty");
        let h = 1.0 / (self.m as f64 + 1.0);
        if (self.regularize_potential || self.regularize_u0) && h > eps_min / EPS_PER_CELL {
            return Err(cfg_err(
                "m",
                format!(
                    "h = {h:e} exceeds eps_min/{EPS_PER_CELL} = {:e}; need m >= {}",
                    eps_min / EPS_PER_CELL,
                    (EPS_PER_CELL / eps_min).ceil() as usize - 1
                ),
            ));
        }
        let dt = self.t_end / self.steps as f64;
        if self.regularize_a && !self.a.is_constant() && dt > eps_min / EPS_PER_CELL {
            return Err(cfg_err(
                "steps",
                format!("dt = {dt:e} exceeds eps_min/{EPS_PER_CELL} = {:e}", eps_min / EPS_PER_CELL),
            ));
        }
        if let Some(p) = &self.perturbation {
            if !(p.order > 0.0) {
                return Err(cfg_err("perturbation.order", "order must be positive"));
            }
            if p.targets.is_empty() {
                return Err(cfg_err("perturbation.targets", "no perturbation target"));
            }
            if !p.amplitude.is_finite() {
                return Err(cfg_err("perturbation.amplitude", "amplitude must be finite"));
            }
        }
        if self.reference_factor < 1 {
            return Err(cfg_err("reference_factor", "must be at least 1"));
        }
        if self.mollifier_resolution < crate::regularization::MIN_RESOLUTION {
            return Err(cfg_err(
                "mollifier_resolution",
                format!("must be at least {}", crate::regularization::MIN_RESOLUTION),
            ));
        }
        Ok(())
    }

    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&bytes))
    }

    fn grid(&self) -> Result<Grid> {
        Grid::new(self.m)
    }

    fn timegrid(&self) -> Result<TimeGrid> {
        TimeGrid::new(self.t_end, self.steps)
    }
}

/// Perturbation applied to one member.
#[derive(Debug, Clone, Copy)]
struct Tilde {
    target: PerturbTarget,
    amount: f64,
    shape: PerturbShape,
}

impl Tilde {
    fn hits(&self, t: PerturbTarget) -> bool {
        self.target == t || self.target == PerturbTarget::Joint
    }

    fn space(&self, x: f64) -> f64 {
        match self.shape {
            PerturbShape::Sine => (PI * x).sin(),
            PerturbShape::Constant => 1.0,
        }
    }

    fn space_antiderivative(&self, x: f64) -> f64 {
        match self.shape {
            PerturbShape::Sine => (1.0 - (PI * x).cos()) / PI,
            PerturbShape::Constant => x,
        }
    }

    fn time(&self, t: f64, t_end: f64) -> f64 {
        match self.shape {
            PerturbShape::Sine => (PI * t / t_end).sin(),
            PerturbShape::Constant => 1.0,
        }
    }
}

/// One solved member of a net.
struct Member {
    basis: Arc<SpectralBasis>,
    problem: EvolutionProblem,
    result: EvolutionResult,
    datum_l2: f64,
    clipped_mass: f64,
    form: Option<FormCheck>,
}

struct Setup<'a> {
    cfg: &'a VwsConfig,
    psi: Mollifier,
}

impl Setup<'_> {
    fn potential(&self, grid: &Grid, eps: Option<f64>, tilde: Option<Tilde>) -> Result<(PotentialSpec, f64)> {
        let reg = if self.cfg.regularize_potential { eps } else { None };
        let (mut spec, clipped) = self.cfg.potential.potential(grid, reg, &self.psi)?;
        if let Some(t) = tilde.filter(|t| t.hits(PerturbTarget::Potential)) {
            spec = match spec.kind {
                PotentialKind::DirectQ(q) => {
                    let shifted = q
                        .values()
                        .iter()
                        .zip(grid.nodes())
                        .map(|(v, x)| v + t.amount * t.space(x))
                        .collect();
                    PotentialSpec::direct_q(SampledFunction::new(*grid, shifted)?)
                }
                PotentialKind::WeakNu { nu_mid } => {
                    let shifted = nu_mid
                        .iter()
                        .zip(grid.midpoints())
                        .map(|(v, x)| v + t.amount * t.space_antiderivative(x))
                        .collect();
                    PotentialSpec::weak_nu(*grid, shifted)?
                }
            };
        }
        Ok((spec, clipped))
    }

    fn coefficient(&self, tg: TimeGrid, eps: Option<f64>, tilde: Option<Tilde>) -> Result<TimeProfile> {
        let cfg = self.cfg;
        let base = match eps.filter(|_| cfg.regularize_a) {
            Some(e) => mollify_time(&cfg.a, e, tg, cfg.a_floor, &self.psi)?,
            None => sample_time(&cfg.a, tg, cfg.a_floor)?,
        };
        match tilde.filter(|t| t.hits(PerturbTarget::Coefficient)) {
            Some(t) => {
                let values = base
                    .a_values()
                    .iter()
                    .zip(tg.times())
                    .map(|(a, s)| a + t.amount * t.time(s, tg.t_end()))
                    .collect();
                TimeProfile::new(tg, values, cfg.a_floor)
            }
            None => Ok(base),
        }
    }

    fn datum(&self, grid: &Grid, eps: Option<f64>, tilde: Option<Tilde>) -> Result<SampledFunction<f64>> {
        let reg = if self.cfg.regularize_u0 { eps } else { None };
        let f = self.cfg.u0.datum(grid, reg, &self.psi)?;
        match tilde.filter(|t| t.hits(PerturbTarget::Datum)) {
            Some(t) => f.add(&grid.sample(|x| t.amount * t.space(x))),
            None => Ok(f),
        }
    }

    fn solve(&self, m: usize, n_modes: usize, eps: Option<f64>, tilde: Option<Tilde>) -> Result<Member> {
        let grid = Grid::new(m)?;
        let tg = self.cfg.timegrid()?;
        let (pot, clipped_mass) = self.potential(&grid, eps, tilde)?;
        let form = match &pot.kind {
            PotentialKind::WeakNu { nu_mid } => Some(check_weak_form(&assemble(&pot, &grid)?, nu_mid)),
            PotentialKind::DirectQ(_) => None,
        };
        let basis = build_basis(&pot, &grid, n_modes)?;
        let u0 = self.datum(&grid, eps, tilde)?;
        let u0c = analyze(&u0, &basis)?;
        let a = self.coefficient(tg, eps, tilde)?;
        let problem = EvolutionProblem::new(Arc::clone(&basis), self.cfg.s, a, u0c)?;
        let result = evolve_homogeneous(&problem)?;
        Ok(Member {
            basis,
            problem,
            result,
            datum_l2: u0.l2_norm(),
            clipped_mass,
            form,
        })
    }
}

fn setup(cfg: &VwsConfig) -> Result<Setup<'_>> {
    cfg.validate()?;
    Ok(Setup {
        cfg,
        psi: make_mollifier(cfg.mollifier_resolution)?,
    })
}

/// Runs `f` for every eps in parallel, keeping ladder order.
fn per_eps<T: Send>(epsilons: &[f64], f: impl Fn(f64) -> Result<T> + Sync) -> Result<Vec<T>> {
    epsilons
        .par_iter()
        .map(|&e| f(e).map_err(|err| err.at_epsilon(e)))
        .collect()
}

/// `sup_j ||U(t_j) - V(t_j)||_{L2}` in physical space, with `V` restricted
/// to the grid of `U` when it lives on a nested finer grid; also returns
/// the same distance for the cell derivative.
fn physical_distance(u: &EvolutionResult, v: &EvolutionResult) -> Result<(f64, f64)> {
    let gu = *u.basis().grid();
    let gv = *v.basis().grid();
    if !(gv.m() + 1).is_multiple_of(gu.m() + 1) {
        return Err(Error::invalid("grids are not nested"));
    }
    let stride = (gv.m() + 1) / (gu.m() + 1);
    let same_basis = u.basis().fingerprint() == v.basis().fingerprint();
    let n = u.timegrid().len();
    if v.timegrid().len() != n {
        return Err(Error::invalid("time grids differ"));
    }
    let per_node: Vec<(f64, f64)> = (0..n)
        .into_par_iter()
        .map(|j| {
            let diff = if same_basis {
                synthesize(&u.coeffs_at(j).sub(&v.coeffs_at(j)).expect("same basis"))
            } else {
                let a = u.snapshot(j);
                let b = v.snapshot(j);
                let restricted: Vec<Complex64> = (1..=gu.m()).map(|i| b.values()[i * stride - 1]).collect();
                let b = SampledFunction::new(gu, restricted).expect("m values");
                a.sub(&b).expect("same grid")
            };
            (diff.l2_norm(), diff.derivative_l2_norm())
        })
        .collect();
    Ok(per_node
        .into_iter()
        .fold((0.0, 0.0), |(a, b), (x, y)| (a.max(x), b.max(y))))
}

/// Least-squares fit of a table column together with its data.
#[derive(Debug, Clone, Serialize)]
pub struct ColumnFit {
    pub column: String,
    #[serde(flatten)]
    pub fit: ScalingFit,
}

fn fit_column(name: &str, eps: &[f64], values: &[f64]) -> Result<ColumnFit> {
    Ok(ColumnFit {
        column: name.to_string(),
        fit: fit_power_law(eps, values)?,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct Provenance {
    pub config_hash: String,
    pub seed: u64,
    /// Quadrature refinement factor per eps (1 for exact-phase runs).
    pub refinements: Vec<usize>,
}

fn provenance(cfg: &VwsConfig, members: usize) -> Provenance {
    Provenance {
        config_hash: cfg.hash(),
        seed: cfg.seed,
        refinements: vec![1; members],
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ExistenceRow {
    pub epsilon: f64,
    /// `sup_t ||u_eps||_{L2}`.
    pub u_sup: f64,
    /// `sup_t ||d_t u_eps||_{L2}`.
    pub dt_u_sup: f64,
    /// `||u_{0,eps}||` in the truncated eigenbasis.
    pub u0_l2: f64,
    /// `sup_t |a_eps(t)| ||u_{0,eps}||_{W^{2s}}`.
    pub dt_data: f64,
    pub u0_w2s: f64,
    pub a_sup: f64,
    /// `max |q_eps|` of the pointwise (or induced) potential.
    pub q_linf: f64,
    pub lambda_max: f64,
    /// `1 - ||P_N u_0||^2 / ||u_0||^2`.
    pub truncation_deficit: f64,
    pub clipped_mass: f64,
    pub operator_positive: Option<bool>,
    pub potential_psd: Option<bool>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExistenceReport {
    pub rows: Vec<ExistenceRow>,
    pub u_fit: ColumnFit,
    pub dt_u_fit: ColumnFit,
    pub data_fit: ColumnFit,
    pub dt_data_fit: ColumnFit,
    pub q_fit: ColumnFit,
    pub lambda_fit: ColumnFit,
    /// Solution exponents are finite and match the data exponents.
    pub moderate: bool,
    pub exponents_match: bool,
    pub passed: bool,
    pub provenance: Provenance,
}

pub fn run_existence(cfg: &VwsConfig) -> Result<ExistenceReport> {
    let st = setup(cfg)?;
    let rows = per_eps(&cfg.epsilons, |e| {
        let mem = st.solve(cfg.m, cfg.n_modes, Some(e), None)?;
        let u0 = &mem.problem.u0;
        let w2s = sobolev_norm(u0, 2.0 * cfg.s)?;
        let a_sup = mem.problem.a.sup_norm();
        let pot = mem.basis.potential();
        let q_linf = pot
            .effective_q(mem.basis.grid())
            .iter()
            .map(|v| v.abs())
            .fold(0.0, f64::max);
        let deficit = if mem.datum_l2 > 0.0 {
            1.0 - (u0.l2() / mem.datum_l2).powi(2)
        } else {
            0.0
        };
        Ok(ExistenceRow {
            epsilon: e,
            u_sup: mem.result.sup_l2(),
            dt_u_sup: mem.result.sup_dt_l2(),
            u0_l2: u0.l2(),
            dt_data: a_sup * w2s,
            u0_w2s: w2s,
            a_sup,
            q_linf,
            lambda_max: mem.basis.pairs().last().expect("nonempty").lambda,
            truncation_deficit: deficit,
            clipped_mass: mem.clipped_mass,
            operator_positive: mem.form.as_ref().map(|f| f.operator_positive),
            potential_psd: mem.form.as_ref().map(|f| f.potential_psd),
        })
    })?;
    let eps = &cfg.epsilons;
    let col = |f: fn(&ExistenceRow) -> f64| rows.iter().map(f).collect::<Vec<_>>();
    let u_fit = fit_column("u_sup", eps, &col(|r| r.u_sup))?;
    let dt_u_fit = fit_column("dt_u_sup", eps, &col(|r| r.dt_u_sup))?;
    let data_fit = fit_column("u0_l2", eps, &col(|r| r.u0_l2))?;
    let dt_data_fit = fit_column("dt_data", eps, &col(|r| r.dt_data))?;
    let q_fit = fit_column("q_linf", eps, &col(|r| r.q_linf))?;
    let lambda_fit = fit_column("lambda_max", eps, &col(|r| r.lambda_max))?;

    let finite = |f: &ScalingFit| f.exponent.is_finite() || f.negligible;
    let moderate = finite(&u_fit.fit) && finite(&dt_u_fit.fit);
    let close = |a: &ScalingFit, b: &ScalingFit| {
        (a.negligible && b.negligible) || (a.exponent - b.exponent).abs() <= EXPONENT_MATCH
    };
    let exponents_match = close(&u_fit.fit, &data_fit.fit) && close(&dt_u_fit.fit, &dt_data_fit.fit);
    Ok(ExistenceReport {
        provenance: provenance(cfg, rows.len()),
        rows,
        u_fit,
        dt_u_fit,
        data_fit,
        dt_data_fit,
        q_fit,
        lambda_fit,
        moderate,
        exponents_match,
        passed: moderate && exponents_match,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct UniquenessRow {
    pub epsilon: f64,
    /// `sup_t ||u_eps - u~_eps||_{L2}`.
    pub difference: f64,
    /// Size of the perturbation, `amplitude eps^p`.
    pub perturbation: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct UniquenessTarget {
    pub target: PerturbTarget,
    pub rows: Vec<UniquenessRow>,
    pub fit: ScalingFit,
    /// `-N`: the order in `eps` of the difference.
    #[serde(serialize_with = "serialize_extended_f64")]
    pub order: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct UniquenessReport {
    pub order: f64,
    pub shape: PerturbShape,
    pub amplitude: f64,
    pub targets: Vec<UniquenessTarget>,
    pub required_order: f64,
    pub passed: bool,
    pub provenance: Provenance,
}

pub fn run_uniqueness(cfg: &VwsConfig) -> Result<UniquenessReport> {
    let pert = cfg
        .perturbation
        .clone()
        .ok_or_else(|| cfg_err("perturbation", "uniqueness runs need a perturbation block"))?;
    if pert.order < 1.0 {
        return Err(cfg_err("perturbation.order", "uniqueness runs need order p >= 1"));
    }
    let st = setup(cfg)?;
    let required = pert.order - ORDER_MARGIN;
    let mut targets = Vec::new();
    for &target in &pert.targets {
        let rows = per_eps(&cfg.epsilons, |e| {
            let amount = pert.amplitude * e.powf(pert.order);
            let base = st.solve(cfg.m, cfg.n_modes, Some(e), None)?;
            let tilde = Tilde {
                target,
                amount,
                shape: pert.shape,
            };
            let pert_member = st.solve(cfg.m, cfg.n_modes, Some(e), Some(tilde))?;
            let (difference, _) = physical_distance(&base.result, &pert_member.result)?;
            Ok(UniquenessRow {
                epsilon: e,
                difference,
                perturbation: amount,
            })
        })?;
        let diffs: Vec<f64> = rows.iter().map(|r| r.difference).collect();
        let fit = fit_power_law(&cfg.epsilons, &diffs)?;
        let order = -fit.exponent;
        targets.push(UniquenessTarget {
            target,
            rows,
            fit,
            order,
            passed: fit.negligible || order >= required,
        });
    }
    let passed = targets.iter().all(|t| t.passed);
    Ok(UniquenessReport {
        order: pert.order,
        shape: pert.shape,
        amplitude: pert.amplitude,
        provenance: provenance(cfg, cfg.epsilons.len()),
        targets,
        required_order: required,
        passed,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct ConsistencyRow {
    pub epsilon: f64,
    /// `sup_t ||u - u_eps||_{L2}` against the reference.
    pub error: f64,
    /// The same in the cell-derivative norm; reported only.
    pub error_h1: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConsistencyReport {
    pub rows: Vec<ConsistencyRow>,
    pub fit: ScalingFit,
    pub fit_h1: ScalingFit,
    pub reference_m: usize,
    pub reference_modes: usize,
    pub u0_l2: f64,
    pub tolerance: f64,
    pub strictly_decreasing: bool,
    pub within_tolerance: bool,
    pub passed: bool,
    pub provenance: Provenance,
}

pub fn run_consistency(cfg: &VwsConfig) -> Result<ConsistencyReport> {
    if !cfg.potential.is_bounded_potential() {
        return Err(cfg_err(
            "potential",
            format!("the classical problem needs a bounded pointwise q, got {}", cfg.potential.name()),
        ));
    }
    if !matches!(cfg.u0, SpaceData::Function { .. }) {
        return Err(cfg_err("u0", "the classical problem needs a function datum"));
    }
    let st = setup(cfg)?;
    let ref_m = (cfg.m + 1) * cfg.reference_factor - 1;
    let ref_modes = cfg.n_modes * cfg.reference_factor;
    let reference = st.solve(ref_m, ref_modes, None, None)?;
    let rows = per_eps(&cfg.epsilons, |e| {
        let mem = st.solve(cfg.m, cfg.n_modes, Some(e), None)?;
        let (error, error_h1) = physical_distance(&mem.result, &reference.result)?;
        Ok(ConsistencyRow {
            epsilon: e,
            error,
            error_h1,
        })
    })?;
    let errs: Vec<f64> = rows.iter().map(|r| r.error).collect();
    let errs_h1: Vec<f64> = rows.iter().map(|r| r.error_h1).collect();
    let fit = fit_power_law(&cfg.epsilons, &errs)?;
    let fit_h1 = fit_power_law(&cfg.epsilons, &errs_h1)?;
    let u0_l2 = cfg.u0.datum(&Grid::new(ref_m)?, None, &st.psi)?.l2_norm();
    let tolerance = cfg.tol_consistency.unwrap_or(1e-3 * u0_l2);
    let strictly_decreasing = errs.windows(2).all(|w| w[1] < w[0]);
    let within_tolerance = *errs.last().expect("nonempty") <= tolerance;
    Ok(ConsistencyReport {
        provenance: provenance(cfg, rows.len()),
        rows,
        fit,
        fit_h1,
        reference_m: ref_m,
        reference_modes: ref_modes,
        u0_l2,
        tolerance,
        strictly_decreasing,
        within_tolerance,
        passed: strictly_decreasing && within_tolerance,
    })
}

fn fitted_series(label: &str, eps: &[f64], fit: &ScalingFit) -> Option<Series> {
    if fit.negligible || !fit.exponent.is_finite() {
        return None;
    }
    Some(Series {
        label: format!("{label} fit N={:.3}", fit.exponent),
        xs: eps.to_vec(),
        ys: eps.iter().map(|e| fit.constant * e.powf(-fit.exponent)).collect(),
        dashed: true,
    })
}

fn table(header: &[&str], rows: impl Iterator<Item = Vec<f64>>) -> String {
    let mut t = CsvTable::new(header.iter().copied());
    for r in rows {
        t.push_numbers(&r);
    }
    t.render()
}

fn opt_flag(b: Option<bool>) -> f64 {
    match b {
        Some(true) => 1.0,
        Some(false) => 0.0,
        None => f64::NAN,
    }
}

impl ExistenceReport {
    pub fn csv(&self) -> String {
        table(
            &[
                "epsilon",
                "u_sup",
                "dt_u_sup",
                "u0_l2",
                "dt_data",
                "u0_w2s",
                "a_sup",
                "q_linf",
                "lambda_max",
                "truncation_deficit",
                "clipped_mass",
                "operator_positive",
            ],
            self.rows.iter().map(|r| {
                vec![
                    r.epsilon,
                    r.u_sup,
                    r.dt_u_sup,
                    r.u0_l2,
                    r.dt_data,
                    r.u0_w2s,
                    r.a_sup,
                    r.q_linf,
                    r.lambda_max,
                    r.truncation_deficit,
                    r.clipped_mass,
                    opt_flag(r.operator_positive),
                ]
            }),
        )
    }

    pub fn svg(&self) -> String {
        let eps: Vec<f64> = self.rows.iter().map(|r| r.epsilon).collect();
        let mut series = vec![
            Series {
                label: "sup ||u||".into(),
                xs: eps.clone(),
                ys: self.rows.iter().map(|r| r.u_sup).collect(),
                dashed: false,
            },
            Series {
                label: "sup ||d_t u||".into(),
                xs: eps.clone(),
                ys: self.rows.iter().map(|r| r.dt_u_sup).collect(),
                dashed: false,
            },
        ];
        series.extend(fitted_series("u", &eps, &self.u_fit.fit));
        series.extend(fitted_series("d_t u", &eps, &self.dt_u_fit.fit));
        svg_plot("existence: solution norms", "eps", "norm", &series, true)
    }
}

impl UniquenessReport {
    pub fn csv(&self) -> String {
        let mut header = vec!["epsilon".to_string()];
        for t in &self.targets {
            header.push(format!("difference_{}", target_name(t.target)));
        }
        let mut csv = CsvTable::new(header);
        if let Some(first) = self.targets.first() {
            for (i, row) in first.rows.iter().enumerate() {
                let mut r = vec![fmt_f64(row.epsilon)];
                for t in &self.targets {
                    r.push(fmt_f64(t.rows[i].difference));
                }
                csv.push_row(r);
            }
        }
        csv.render()
    }

    pub fn svg(&self) -> String {
        let mut series = Vec::new();
        for t in &self.targets {
            let eps: Vec<f64> = t.rows.iter().map(|r| r.epsilon).collect();
            series.push(Series {
                label: target_name(t.target).to_string(),
                xs: eps.clone(),
                ys: t.rows.iter().map(|r| r.difference).collect(),
                dashed: false,
            });
            series.extend(fitted_series(target_name(t.target), &eps, &t.fit));
        }
        svg_plot("uniqueness: solution differences", "eps", "sup ||u - u~||", &series, true)
    }
}

fn target_name(t: PerturbTarget) -> &'static str {
    match t {
        PerturbTarget::Potential => "potential",
        PerturbTarget::Coefficient => "coefficient",
        PerturbTarget::Datum => "datum",
        PerturbTarget::Joint => "joint",
    }
}

impl ConsistencyReport {
    pub fn csv(&self) -> String {
        table(
            &["epsilon", "error_l2", "error_h1"],
            self.rows.iter().map(|r| vec![r.epsilon, r.error, r.error_h1]),
        )
    }

    pub fn svg(&self) -> String {
        let eps: Vec<f64> = self.rows.iter().map(|r| r.epsilon).collect();
        let mut series = vec![Series {
            label: "E(eps)".into(),
            xs: eps.clone(),
            ys: self.rows.iter().map(|r| r.error).collect(),
            dashed: false,
        }];
        series.extend(fitted_series("E", &eps, &self.fit));
        svg_plot("consistency: distance to the reference", "eps", "E", &series, true)
    }
}

/// Convenience for callers that want the basis of one member.
pub fn member_basis(cfg: &VwsConfig, eps: Option<f64>) -> Result<Arc<SpectralBasis>> {
    let st = setup(cfg)?;
    let grid = cfg.grid()?;
    let (pot, _) = st.potential(&grid, eps, None)?;
    build_basis(&pot, &grid, cfg.n_modes)
}

/// Coefficients of the datum of one member.
pub fn member_datum(cfg: &VwsConfig, eps: Option<f64>) -> Result<SpectralCoeffs> {
    let st = setup(cfg)?;
    let grid = cfg.grid()?;
    let basis = member_basis(cfg, eps)?;
    analyze(&st.datum(&grid, eps, None)?, &basis)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::SpaceFn;
    use crate::regularization::ladder;

    fn smooth() -> VwsConfig {
        VwsConfig {
            m: 511,
            n_modes: 16,
            t_end: 0.2,
            steps: 100,
            epsilons: ladder(3, 6),
            ..VwsConfig::default()
        }
    }

    #[test]
    fn guards() {
        let mut c = VwsConfig {
            m: 100,
            epsilons: ladder(3, 10),
            n_modes: 4,
            ..VwsConfig::default()
        };
        let err = c.validate().unwrap_err();
        assert!(matches!(&err, Error::Config { path, .. } if path == "m"), "{err}");
        c.m = 8191;
        c.n_modes = 8191;
        let err = c.validate().unwrap_err();
        assert!(err.to_string().contains("n_modes <= m/16"), "{err}");
        c.n_modes = 16;
        assert!(c.validate().is_ok());
        c.epsilons = vec![0.1, 0.2, 0.05, 0.01];
        assert!(c.validate().is_err());
    }

    #[test]
    fn smooth_existence_has_zero_exponents() {
        let mut c = smooth();
        c.regularize_potential = false;
        c.regularize_u0 = false;
        let r = run_existence(&c).unwrap();
        assert!(r.passed);
        assert_eq!(r.u_fit.fit.exponent, 0.0);
        assert_eq!(r.dt_u_fit.fit.exponent, 0.0);
    }

    #[test]
    fn zero_perturbation_gives_zero_difference() {
        let mut c = smooth();
        c.perturbation = Some(Perturbation {
            order: 2.0,
            targets: vec![PerturbTarget::Joint],
            shape: PerturbShape::Sine,
            amplitude: 0.0,
        });
        let r = run_uniqueness(&c).unwrap();
        assert!(r.targets[0].rows.iter().all(|row| row.difference <= 1e-12));
        assert!(r.passed);
    }

    #[test]
    fn datum_perturbation_transfers_its_order() {
        let mut c = smooth();
        c.perturbation = Some(Perturbation {
            order: 3.0,
            targets: vec![PerturbTarget::Datum, PerturbTarget::Coefficient],
            shape: PerturbShape::Sine,
            amplitude: 1.0,
        });
        let r = run_uniqueness(&c).unwrap();
        for t in &r.targets {
            assert!((t.order - 3.0).abs() < 0.3, "{:?} {}", t.target, t.order);
        }
        assert!(r.passed);
    }

    #[test]
    fn potential_perturbation_on_short_ladder() {
        let mut c = smooth();
        c.epsilons = ladder(2, 5);
        c.perturbation = Some(Perturbation {
            order: 2.0,
            targets: vec![PerturbTarget::Potential],
            shape: PerturbShape::Constant,
            amplitude: 1.0,
        });
        let r = run_uniqueness(&c).unwrap();
        assert!(r.passed, "{:?}", r.targets[0].order);
    }

    #[test]
    fn unregularized_data_is_consistent_to_roundoff() {
        let c = VwsConfig {
            potential: SpaceData::DirectQ { q: SpaceFn::Constant { value: 0.0 } },
            u0: SpaceData::Function { f: SpaceFn::Sine { mode: 1, amplitude: 1.0 } },
            regularize_u0: false,
            reference_factor: 1,
            ..smooth()
        };
        let r = run_consistency(&c).unwrap();
        assert!(r.rows.iter().all(|row| row.error <= 1e-10), "{:?}", r.rows);
    }

    #[test]
    fn consistency_rejects_singular_potentials() {
        let c = VwsConfig {
            potential: SpaceData::HeavisideNu { x0: 0.5 },
            ..smooth()
        };
        assert!(matches!(run_consistency(&c), Err(Error::Config { .. })));
    }

    #[test]
    fn hash_is_stable() {
        assert_eq!(smooth().hash(), smooth().hash());
        let mut c = smooth();
        c.seed = 1;
        assert_ne!(c.hash(), smooth().hash());
    }
}
