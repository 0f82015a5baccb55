//! Run configuration: a flat JSON object, parsed field by field so every
//! error names the offending field.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

use crate::catalog::{Slot, SpaceData, SpaceFn};
use crate::error::{Error, Result};
use crate::output::Formats;
use crate::regularization::{check_ladder, default_ladder, FitNorm, TimeKind, DEFAULT_RESOLUTION, MIN_RESOLUTION};
use crate::sl_spectral::MODES_PER_NODE;
use crate::vws::{Perturbation, VwsConfig, EPS_PER_CELL};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Eig,
    Evolve,
    VwsExistence,
    VwsUniqueness,
    VwsConsistency,
    Moderateness,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Eig => "eig",
            Command::Evolve => "evolve",
            Command::VwsExistence => "vws-existence",
            Command::VwsUniqueness => "vws-uniqueness",
            Command::VwsConsistency => "vws-consistency",
            Command::Moderateness => "moderateness",
        }
    }

    fn is_vws(self) -> bool {
        matches!(
            self,
            Command::VwsExistence | Command::VwsUniqueness | Command::VwsConsistency
        )
    }
}

/// Source `f(t, x) = h(x) e^{i omega t}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Forcing {
    pub space: SpaceFn,
    #[serde(default)]
    pub omega: f64,
}

/// Expected exponent of a net, asserted when present.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Expectation {
    pub exponent: f64,
    pub tolerance: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NetSlot {
    Potential,
    Datum,
}

impl From<NetSlot> for Slot {
    fn from(s: NetSlot) -> Slot {
        match s {
            NetSlot::Potential => Slot::Potential,
            NetSlot::Datum => Slot::Datum,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetConfig {
    pub label: String,
    pub data: SpaceData,
    pub slot: NetSlot,
    pub norm: FitNormName,
    #[serde(default)]
    pub expect: Option<Expectation>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitNormName {
    Linf,
    L2,
    H2Pair,
}

impl From<FitNormName> for FitNorm {
    fn from(n: FitNormName) -> FitNorm {
        match n {
            FitNormName::Linf => FitNorm::Linf,
            FitNormName::L2 => FitNorm::L2,
            FitNormName::H2Pair => FitNorm::H2Pair,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FormatName {
    Csv,
    Json,
    Svg,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputBlock {
    #[serde(default = "default_dir")]
    pub dir: String,
    #[serde(default = "all_formats")]
    pub formats: Vec<FormatName>,
}

fn default_dir() -> String {
    "out".into()
}

fn all_formats() -> Vec<FormatName> {
    vec![FormatName::Csv, FormatName::Json, FormatName::Svg]
}

impl Default for OutputBlock {
    fn default() -> Self {
        OutputBlock {
            dir: default_dir(),
            formats: all_formats(),
        }
    }
}

impl OutputBlock {
    pub fn formats(&self) -> Formats {
        Formats {
            csv: self.formats.contains(&FormatName::Csv),
            json: self.formats.contains(&FormatName::Json),
            svg: self.formats.contains(&FormatName::Svg),
        }
    }
}

/// Fully resolved configuration; serialized as the manifest's echo.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub command: Command,
    pub potential: SpaceData,
    pub regularize_potential: bool,
    pub a: TimeKind,
    pub a_floor: f64,
    pub regularize_a: bool,
    pub u0: SpaceData,
    pub regularize_u0: bool,
    pub f: Option<Forcing>,
    pub s: f64,
    pub t_end: f64,
    pub m: usize,
    pub n_modes: usize,
    pub steps: usize,
    /// Single regularization parameter for `eig` and `evolve`.
    pub epsilon: Option<f64>,
    pub epsilons: Vec<f64>,
    pub perturbation: Option<Perturbation>,
    pub reference_factor: usize,
    pub tol_consistency: Option<f64>,
    pub mollifier_resolution: usize,
    pub nets: Vec<NetConfig>,
    /// Also run the randomized estimate battery (`evolve`).
    pub battery: bool,
    pub output: OutputBlock,
    pub seed: u64,
}

const FIELDS: &[&str] = &[
    "command",
    "potential",
    "regularize_potential",
    "a",
    "a_floor",
    "regularize_a",
    "u0",
    "regularize_u0",
    "f",
    "s",
    "t_end",
    "m",
    "n_modes",
    "steps",
    "epsilon",
    "epsilons",
    "perturbation",
    "reference_factor",
    "tol_consistency",
    "mollifier_resolution",
    "nets",
    "battery",
    "output",
    "seed",
];

fn field<T: DeserializeOwned>(obj: &Map<String, Value>, key: &str) -> Result<Option<T>> {
    match obj.get(key) {
        None | Some(Value::Null) => Ok(None),
        Some(v) => serde_json::from_value(v.clone())
            .map(Some)
            .map_err(|e| Error::config(key, e.to_string())),
    }
}

/// `{"kind": "direct_q", "constant": c}` is accepted for `q = c`.
fn expand_potential_shorthand(v: &mut Value) {
    let Some(obj) = v.as_object_mut() else { return };
    if obj.get("kind").and_then(Value::as_str) != Some("direct_q") || obj.contains_key("q") {
        return;
    }
    if let Some(c) = obj.remove("constant") {
        obj.insert("q".into(), serde_json::json!({"kind": "constant", "value": c}));
    }
}

pub fn parse_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::config("<file>", format!("{}: {e}", path.display())))?;
    parse_str(&text)
}

pub fn parse_str(text: &str) -> Result<RunConfig> {
    let value: Value = serde_json::from_str(text).map_err(|e| Error::config("<root>", e.to_string()))?;
    let Value::Object(mut obj) = value else {
        return Err(Error::config("<root>", "expected a JSON object"));
    };
    if let Some(unknown) = obj.keys().find(|k| !FIELDS.contains(&k.as_str())) {
        return Err(Error::config(unknown.as_str(), "unknown field"));
    }
    if let Some(p) = obj.get_mut("potential") {
        expand_potential_shorthand(p);
    }
    let command: Command = field(&obj, "command")?.ok_or_else(|| Error::config("command", "missing"))?;
    let potential: SpaceData = field(&obj, "potential")?.unwrap_or(SpaceData::DirectQ {
        q: SpaceFn::Constant { value: 0.0 },
    });
    let u0: SpaceData = field(&obj, "u0")?.unwrap_or(SpaceData::Function {
        f: SpaceFn::Sine { mode: 1, amplitude: 1.0 },
    });
    let epsilon: Option<f64> = field(&obj, "epsilon")?;
    let regularizing = command.is_vws() || epsilon.is_some();
    let regularize_potential =
        field(&obj, "regularize_potential")?.unwrap_or(regularizing && !matches!(potential, SpaceData::WeakNu { .. }));
    let regularize_u0 = field(&obj, "regularize_u0")?.unwrap_or(regularizing);
    let a: TimeKind = field(&obj, "a")?.unwrap_or(TimeKind::Constant { value: 1.0 });
    let a_floor = field(&obj, "a_floor")?.unwrap_or_else(|| a.min_value());
    let m: usize = field(&obj, "m")?.unwrap_or(511);
    let cfg = RunConfig {
        command,
        regularize_potential,
        regularize_a: field(&obj, "regularize_a")?.unwrap_or(false),
        a_floor,
        a,
        regularize_u0,
        f: field(&obj, "f")?,
        s: field(&obj, "s")?.unwrap_or(1.0),
        t_end: field(&obj, "t_end")?.unwrap_or(1.0),
        n_modes: field(&obj, "n_modes")?.unwrap_or((m / MODES_PER_NODE).min(16)),
        m,
        steps: field(&obj, "steps")?.unwrap_or(400),
        epsilon,
        epsilons: field(&obj, "epsilons")?.unwrap_or_else(default_ladder),
        perturbation: field(&obj, "perturbation")?,
        reference_factor: field(&obj, "reference_factor")?.unwrap_or(2),
        tol_consistency: field(&obj, "tol_consistency")?,
        mollifier_resolution: field(&obj, "mollifier_resolution")?.unwrap_or(DEFAULT_RESOLUTION),
        nets: field(&obj, "nets")?.unwrap_or_default(),
        battery: field(&obj, "battery")?.unwrap_or(false),
        output: field(&obj, "output")?.unwrap_or_default(),
        seed: field(&obj, "seed")?.unwrap_or(0),
        potential,
        u0,
    };
    cfg.validate()?;
    Ok(cfg)
}

impl RunConfig {
    /// Hash of the echoed configuration, without the output directory.
    pub fn hash(&self) -> String {
        let mut echo = serde_json::to_value(self).expect("config serializes");
        if let Some(out) = echo.get_mut("output").and_then(Value::as_object_mut) {
            out.remove("dir");
        }
        hex::encode(Sha256::digest(serde_json::to_vec(&echo).expect("value serializes")))
    }

    pub fn vws(&self) -> VwsConfig {
        VwsConfig {
            potential: self.potential.clone(),
            regularize_potential: self.regularize_potential,
            a: self.a.clone(),
            a_floor: self.a_floor,
            regularize_a: self.regularize_a,
            u0: self.u0.clone(),
            regularize_u0: self.regularize_u0,
            s: self.s,
            m: self.m,
            n_modes: self.n_modes,
            t_end: self.t_end,
            steps: self.steps,
            epsilons: self.epsilons.clone(),
            perturbation: self.perturbation.clone(),
            reference_factor: self.reference_factor,
            tol_consistency: self.tol_consistency,
            mollifier_resolution: self.mollifier_resolution,
            seed: self.seed,
        }
    }

    /// Cross-field guards, checked before any compute.
    pub fn validate(&self) -> Result<()> {
        if self.output.formats.is_empty() {
            return Err(Error::config("output.formats", "select at least one format"));
        }
        match self.command {
            Command::VwsExistence | Command::VwsConsistency => self.vws().validate(),
            Command::VwsUniqueness => {
                if self.perturbation.is_none() {
                    return Err(Error::config("perturbation", "uniqueness runs need a perturbation block"));
                }
                self.vws().validate()
            }
            Command::Moderateness => self.validate_moderateness(),
            Command::Eig | Command::Evolve => self.validate_single(),
        }
    }

    fn validate_grid(&self) -> Result<()> {
        if self.m < 3 {
            return Err(Error::config("m", "the grid needs at least 3 interior nodes"));
        }
        let cap = self.m / MODES_PER_NODE;
        if self.n_modes == 0 || self.n_modes > cap {
            return Err(Error::config(
                "n_modes",
                format!("n_modes = {} violates n_modes <= m/{MODES_PER_NODE} = {cap}", self.n_modes),
            ));
        }
        if self.mollifier_resolution < MIN_RESOLUTION {
            return Err(Error::config(
                "mollifier_resolution",
                format!("must be at least {MIN_RESOLUTION}"),
            ));
        }
        Ok(())
    }

    fn check_resolved(&self, field: &str, eps_min: f64) -> Result<()> {
        let h = 1.0 / (self.m as f64 + 1.0);
        if h > eps_min / EPS_PER_CELL {
            return Err(Error::config(
                field,
                format!(
                    "h = {h:e} exceeds eps_min/{EPS_PER_CELL} = {:e}; need m >= {}",
                    eps_min / EPS_PER_CELL,
                    (EPS_PER_CELL / eps_min).ceil() as usize - 1
                ),
            ));
        }
        Ok(())
    }

    fn validate_single(&self) -> Result<()> {
        self.validate_grid()?;
        if let Some(e) = self.epsilon {
            if !(e > 0.0 && e.is_finite()) {
                return Err(Error::config("epsilon", "must be positive"));
            }
        }
        let reg = |flag: bool| if flag { self.epsilon } else { None };
        let slot_check = |path: &str, data: &SpaceData, slot: Slot, flag: bool| -> Result<()> {
            if flag && self.epsilon.is_none() {
                return Err(Error::config(path, "regularization requested without an epsilon"));
            }
            data.validate(slot, reg(flag).is_some())
                .map_err(|e| Error::config(path, e.to_string()))?;
            if let Some(e) = reg(flag) {
                self.check_resolved("m", e)?;
            }
            Ok(())
        };
        slot_check("potential", &self.potential, Slot::Potential, self.regularize_potential)?;
        if self.command == Command::Eig {
            return Ok(());
        }
        slot_check("u0", &self.u0, Slot::Datum, self.regularize_u0)?;
        if !(self.s > 0.0 && self.s.is_finite()) {
            return Err(Error::config("s", "s must be positive"));
        }
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            return Err(Error::config("t_end", "final time must be positive"));
        }
        if self.steps < 2 {
            return Err(Error::config("steps", "need at least 2 time steps"));
        }
        if !(self.a_floor > 0.0) {
            return Err(Error::config("a_floor", "a0 must be positive"));
        }
        self.a
            .validate(self.t_end)
            .map_err(|e| Error::config("a", e.to_string()))?;
        if self.a.min_value() < self.a_floor {
            return Err(Error::config(
                "a",
                format!("min a = {} is below a0 = {}", self.a.min_value(), self.a_floor),
            ));
        }
        if self.regularize_a {
            let e = self
                .epsilon
                .ok_or_else(|| Error::config("regularize_a", "regularization requested without an epsilon"))?;
            let dt = self.t_end / self.steps as f64;
            if !self.a.is_constant() && dt > e / EPS_PER_CELL {
                return Err(Error::config(
                    "steps",
                    format!("dt = {dt:e} exceeds eps/{EPS_PER_CELL} = {:e}", e / EPS_PER_CELL),
                ));
            }
        }
        if let Some(f) = &self.f {
            if !f.omega.is_finite() {
                return Err(Error::config("f.omega", "must be finite"));
            }
        }
        Ok(())
    }

    fn validate_moderateness(&self) -> Result<()> {
        self.validate_grid()?;
        if self.nets.is_empty() {
            return Err(Error::config("nets", "moderateness runs need at least one net"));
        }
        check_ladder(&self.epsilons).map_err(|e| Error::config("epsilons", e.to_string()))?;
        if self.epsilons.len() < 4 {
            return Err(Error::config("epsilons", "a scaling fit needs at least 4 values of eps"));
        }
        self.check_resolved("m", *self.epsilons.last().expect("nonempty"))?;
        for (i, net) in self.nets.iter().enumerate() {
            net.data
                .validate(net.slot.into(), true)
                .map_err(|e| Error::config(format!("nets[{i}].data"), e.to_string()))?;
            if let Some(x) = &net.expect {
                if !(x.tolerance >= 0.0) {
                    return Err(Error::config(format!("nets[{i}].expect.tolerance"), "must be nonnegative"));
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path_of(err: Error) -> String {
        match err {
            Error::Config { path, .. } => path,
            other => panic!("not a config error: {other}"),
        }
    }

    #[test]
    fn minimal_eig_config_fills_defaults() {
        let c = parse_str(r#"{"command":"eig","potential":{"kind":"direct_q","constant":0},"m":1999,"n_modes":5}"#)
            .unwrap();
        assert_eq!(c.command, Command::Eig);
        assert_eq!(
            c.potential,
            SpaceData::DirectQ {
                q: SpaceFn::Constant { value: 0.0 }
            }
        );
        assert_eq!(c.steps, 400);
        assert_eq!(c.output.formats(), Formats::default());
        let echo = serde_json::to_value(&c).unwrap();
        for f in FIELDS {
            assert!(echo.get(*f).is_some(), "{f} missing from echo");
        }
    }

    #[test]
    fn mode_cap_is_reported() {
        let err = parse_str(r#"{"command":"eig","m":1999,"n_modes":1999}"#).unwrap_err();
        assert!(err.to_string().contains("n_modes <= m/16"), "{err}");
        assert_eq!(path_of(err), "n_modes");
    }

    #[test]
    fn unresolved_ladder_is_rejected_with_the_bound() {
        let eps = serde_json::to_string(&crate::regularization::ladder(3, 10)).unwrap();
        let text = format!(r#"{{"command":"vws-existence","m":100,"n_modes":4,"epsilons":{eps}}}"#);
        let err = parse_str(&text).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("need m >= 8191"), "{msg}");
        assert_eq!(path_of(err), "m");
    }

    #[test]
    fn schema_errors_name_the_field() {
        assert_eq!(path_of(parse_str(r#"{"command":"eig","mm":3}"#).unwrap_err()), "mm");
        assert_eq!(path_of(parse_str(r#"{"command":"eig","m":"x"}"#).unwrap_err()), "m");
        assert_eq!(
            path_of(parse_str(r#"{"command":"eig","potential":{"kind":"direct_q","q":{"kind":"nope"}}}"#).unwrap_err()),
            "potential"
        );
        assert_eq!(path_of(parse_str(r#"{"m":3}"#).unwrap_err()), "command");
        assert_eq!(path_of(parse_str("[1]").unwrap_err()), "<root>");
    }

    #[test]
    fn hash_ignores_the_output_directory() {
        let a = parse_str(r#"{"command":"eig","output":{"dir":"x"}}"#).unwrap();
        let b = parse_str(r#"{"command":"eig","output":{"dir":"y"}}"#).unwrap();
        let c = parse_str(r#"{"command":"eig","seed":3}"#).unwrap();
        assert_eq!(a.hash(), b.hash());
        assert_ne!(a.hash(), c.hash());
    }
}
