//! Dispatches a configuration to its pipeline and stages every output file.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use serde::Serialize;
use serde_json::{json, Value};

use crate::catalog::Slot;
use crate::config::{Command, RunConfig};
use crate::error::{Error, Result};
use crate::evolution::{
    estimate_battery, estimate_report, evolve, pde_residual, separable_source, BatterySettings, EvolutionProblem,
    Verdict,
};
use crate::function_space::{Grid, TimeGrid};
use crate::output::{fmt_f64, to_json, CsvTable, FileKind, Series, Staged, svg_plot};
use crate::regularization::{build_net, fit_scaling_exponent, make_mollifier, mollify_time, sample_time, NormKind};
use crate::sl_spectral::{asymptotics_report, build_basis};
use crate::spectral_transform::analyze;
use crate::vws::{run_consistency, run_existence, run_uniqueness};

/// Largest Gram defect accepted for a built basis.
pub const GRAM_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Serialize)]
pub struct VerdictLine {
    pub name: String,
    pub verdict: Verdict,
    pub detail: Option<String>,
}

impl VerdictLine {
    fn new(name: impl Into<String>, pass: bool, detail: impl Into<String>) -> Self {
        VerdictLine {
            name: name.into(),
            verdict: if pass { Verdict::Pass } else { Verdict::Fail },
            detail: Some(detail.into()),
        }
    }
}

/// Everything a run reports about itself; written as `manifest.json`.
#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub command: &'static str,
    pub config_hash: String,
    pub seed: u64,
    pub passed: bool,
    pub verdicts: Vec<VerdictLine>,
    pub summary: Value,
    pub files: Vec<String>,
    pub config: RunConfig,
}

pub struct Outcome {
    pub manifest: Manifest,
    pub files: Staged,
}

pub fn run(cfg: &RunConfig) -> Result<Outcome> {
    cfg.validate()?;
    let mut files = Staged::new();
    let (verdicts, summary) = match cfg.command {
        Command::Eig => run_eig(cfg, &mut files)?,
        Command::Evolve => run_evolve(cfg, &mut files)?,
        Command::VwsExistence => {
            let r = run_existence(&cfg.vws())?;
            stage_report(&mut files, "existence", &r, r.csv(), r.svg())?;
            let v = vec![
                VerdictLine::new(
                    "moderate",
                    r.moderate,
                    format!(
                        "N(u) = {}, N(d_t u) = {}",
                        fmt_f64(r.u_fit.fit.exponent),
                        fmt_f64(r.dt_u_fit.fit.exponent)
                    ),
                ),
                VerdictLine::new(
                    "exponents_match_data",
                    r.exponents_match,
                    format!(
                        "N(u0) = {}, N(a ||u0||_W2s) = {}",
                        fmt_f64(r.data_fit.fit.exponent),
                        fmt_f64(r.dt_data_fit.fit.exponent)
                    ),
                ),
            ];
            let summary = json!({
                "u_exponent": r.u_fit.fit.exponent,
                "u_fit_quality": r.u_fit.fit.fit_quality,
                "dt_u_exponent": r.dt_u_fit.fit.exponent,
                "dt_u_fit_quality": r.dt_u_fit.fit.fit_quality,
                "lambda_max_exponent": r.lambda_fit.fit.exponent,
            });
            (v, summary)
        }
        Command::VwsUniqueness => {
            let r = run_uniqueness(&cfg.vws())?;
            stage_report(&mut files, "uniqueness", &r, r.csv(), r.svg())?;
            let v = r
                .targets
                .iter()
                .map(|t| {
                    VerdictLine::new(
                        format!("order_transfer_{}", serde_json::to_value(t.target).expect("enum").as_str().unwrap_or("")),
                        t.passed,
                        format!(
                            "order {} >= {} (fit quality {})",
                            fmt_f64(t.order),
                            r.required_order,
                            fmt_f64(t.fit.fit_quality)
                        ),
                    )
                })
                .collect();
            let summary = json!({
                "required_order": r.required_order,
                "orders": r.targets.iter().map(|t| json!({
                    "target": t.target,
                    "order": fmt_f64(t.order),
                    "fit_quality": t.fit.fit_quality,
                })).collect::<Vec<_>>(),
            });
            (v, summary)
        }
        Command::VwsConsistency => {
            let r = run_consistency(&cfg.vws())?;
            stage_report(&mut files, "consistency", &r, r.csv(), r.svg())?;
            let last = r.rows.last().expect("nonempty").error;
            let v = vec![
                VerdictLine::new("strictly_decreasing", r.strictly_decreasing, "E(eps) across the ladder"),
                VerdictLine::new(
                    "within_tolerance",
                    r.within_tolerance,
                    format!("E(eps_min) = {} <= {}", fmt_f64(last), fmt_f64(r.tolerance)),
                ),
            ];
            let summary = json!({
                "errors": r.rows.iter().map(|row| row.error).collect::<Vec<_>>(),
                "slope": r.fit.exponent,
                "tolerance": r.tolerance,
                "reference_m": r.reference_m,
            });
            (v, summary)
        }
        Command::Moderateness => run_moderateness(cfg, &mut files)?,
    };
    let passed = verdicts.iter().all(|v| v.verdict != Verdict::Fail);
    let mut names: Vec<String> = files.names_for(cfg.output.formats()).into_iter().map(String::from).collect();
    names.push("manifest.json".into());
    Ok(Outcome {
        manifest: Manifest {
            command: cfg.command.name(),
            config_hash: cfg.hash(),
            seed: cfg.seed,
            passed,
            verdicts,
            summary,
            files: names,
            config: cfg.clone(),
        },
        files,
    })
}

fn stage_report<T: Serialize>(files: &mut Staged, name: &str, report: &T, csv: String, svg: String) -> Result<()> {
    files.add(format!("{name}.json"), FileKind::Json, to_json(report)?);
    files.add(format!("{name}.csv"), FileKind::Csv, csv);
    files.add(format!("{name}.svg"), FileKind::Svg, svg);
    Ok(())
}

fn run_eig(cfg: &RunConfig, files: &mut Staged) -> Result<(Vec<VerdictLine>, Value)> {
    let grid = Grid::new(cfg.m)?;
    let psi = make_mollifier(cfg.mollifier_resolution)?;
    let eps = cfg.epsilon.filter(|_| cfg.regularize_potential);
    let (pot, clipped) = cfg.potential.potential(&grid, eps, &psi)?;
    let basis = build_basis(&pot, &grid, cfg.n_modes)?;
    let asym = if basis.n_modes() >= 4 {
        Some(asymptotics_report(&basis)?)
    } else {
        None
    };
    let mut table = CsvTable::new(["n", "lambda", "lambda_over_pi2n2"]);
    for p in basis.pairs() {
        table.push_numbers(&[p.index as f64, p.lambda, p.lambda / (PI * p.index as f64).powi(2)]);
    }
    files.add("eigenvalues.csv", FileKind::Csv, table.render());
    files.add("eigenvectors.csv", FileKind::Csv, basis.eigenvector_csv());
    files.add(
        "eig.json",
        FileKind::Json,
        to_json(&json!({
            "basis": basis.manifest(),
            "gram_defect": basis.gram_defect(),
            "clipped_mass": clipped,
            "asymptotics": asym,
        }))?,
    );
    let ns: Vec<f64> = basis.pairs().iter().map(|p| p.index as f64).collect();
    let svg = svg_plot(
        "eigenvalues",
        "n",
        "lambda_n",
        &[
            Series {
                label: "lambda_n".into(),
                xs: ns.clone(),
                ys: basis.lambdas(),
                dashed: false,
            },
            Series {
                label: "(pi n)^2".into(),
                xs: ns.clone(),
                ys: ns.iter().map(|n| (PI * n).powi(2)).collect(),
                dashed: true,
            },
        ],
        true,
    );
    files.add("eigenvalues.svg", FileKind::Svg, svg);
    let gram = basis.gram_defect();
    let verdicts = vec![VerdictLine::new(
        "orthonormal",
        gram <= GRAM_TOL,
        format!("gram defect {} <= {GRAM_TOL:e}", fmt_f64(gram)),
    )];
    let summary = json!({
        "lambdas": basis.lambdas(),
        "fingerprint": basis.fingerprint(),
        "gram_defect": gram,
    });
    Ok((verdicts, summary))
}

fn run_evolve(cfg: &RunConfig, files: &mut Staged) -> Result<(Vec<VerdictLine>, Value)> {
    let grid = Grid::new(cfg.m)?;
    let tg = TimeGrid::new(cfg.t_end, cfg.steps)?;
    let psi = make_mollifier(cfg.mollifier_resolution)?;
    let pick = |flag: bool| cfg.epsilon.filter(|_| flag);
    let (pot, _) = cfg.potential.potential(&grid, pick(cfg.regularize_potential), &psi)?;
    let basis = build_basis(&pot, &grid, cfg.n_modes)?;
    let u0 = cfg.u0.datum(&grid, pick(cfg.regularize_u0), &psi)?;
    let u0c = analyze(&u0, &basis)?;
    let a = match pick(cfg.regularize_a) {
        Some(e) => mollify_time(&cfg.a, e, tg, cfg.a_floor, &psi)?,
        None => sample_time(&cfg.a, tg, cfg.a_floor)?,
    };
    let mut problem = EvolutionProblem::new(Arc::clone(&basis), cfg.s, a, u0c.clone())?;
    if let Some(f) = &cfg.f {
        let h = f.space.sample(&grid).to_complex();
        let omega = f.omega;
        problem = problem.with_source(separable_source(&basis, &tg, &h, |t| Complex64::cis(omega * t))?)?;
    }
    let result = evolve(&problem)?;
    let report = estimate_report(&problem, &result)?;
    let residual = pde_residual(&problem, &result)?;
    let battery = if cfg.battery {
        Some(estimate_battery(BatterySettings {
            seed: cfg.seed,
            ..BatterySettings::default()
        })?)
    } else {
        None
    };

    let modes: Vec<usize> = (1..=basis.n_modes().min(4)).collect();
    files.add("trajectory.csv", FileKind::Csv, result.trajectory_csv(&modes));
    let last = tg.len() - 1;
    files.add("snapshots.csv", FileKind::Csv, result.snapshot_csv(&[0, last / 2, last]));
    files.add("coefficients.csv", FileKind::Csv, u0c.to_csv());
    files.add(
        "estimates.json",
        FileKind::Json,
        to_json(&json!({
            "basis": basis.manifest(),
            "refinement": result.refinement(),
            "effective_dt": result.effective_dt(),
            "residual": residual,
            "estimates": report,
            "battery": battery,
        }))?,
    );
    let times = tg.times();
    let norms = |dt: bool| -> Vec<f64> {
        (0..tg.len())
            .map(|j| if dt { result.dt_coeffs_at(j).l2() } else { result.coeffs_at(j).l2() })
            .collect()
    };
    let svg = svg_plot(
        "solution norms",
        "t",
        "L2 norm",
        &[
            Series {
                label: "||u(t)||".into(),
                xs: times.clone(),
                ys: norms(false),
                dashed: false,
            },
            Series {
                label: "||d_t u(t)||".into(),
                xs: times,
                ys: norms(true),
                dashed: false,
            },
        ],
        false,
    );
    files.add("norms.svg", FileKind::Svg, svg);

    let mut verdicts: Vec<VerdictLine> = report
        .lines
        .iter()
        .map(|l| VerdictLine {
            name: l.name.clone(),
            verdict: l.verdict,
            detail: l.note.clone(),
        })
        .collect();
    if let Some(b) = &battery {
        verdicts.extend(b.lines.iter().map(|l| VerdictLine {
            name: format!("battery/{}", l.name),
            verdict: l.verdict,
            detail: Some(format!("C = {}", fmt_f64(l.c_observed))),
        }));
    }
    let summary = json!({
        "sup_l2": result.sup_l2(),
        "sup_dt_l2": result.sup_dt_l2(),
        "residual": residual,
        "refinement": result.refinement(),
    });
    Ok((verdicts, summary))
}

fn run_moderateness(cfg: &RunConfig, files: &mut Staged) -> Result<(Vec<VerdictLine>, Value)> {
    let grid = Grid::new(cfg.m)?;
    let psi = make_mollifier(cfg.mollifier_resolution)?;
    let mut table = CsvTable::new(["label", "epsilon", "linf", "l2", "d2l2", "clipped_mass"]);
    let mut verdicts = Vec::new();
    let mut reports = Vec::new();
    let mut series = Vec::new();
    for net_cfg in &cfg.nets {
        let slot: Slot = net_cfg.slot.into();
        let spec = net_cfg.data.net_spec(slot, &grid)?.with_label(net_cfg.label.clone());
        let net = build_net(&spec, &cfg.epsilons, &grid, &psi)?;
        let fit = fit_scaling_exponent(&net, net_cfg.norm.into())?;
        let col = |k: NormKind| &net.norms[&k];
        for (i, e) in net.epsilons.iter().enumerate() {
            table.push_row(vec![
                net_cfg.label.clone(),
                fmt_f64(*e),
                fmt_f64(col(NormKind::Linf)[i]),
                fmt_f64(col(NormKind::L2)[i]),
                fmt_f64(col(NormKind::D2L2)[i]),
                fmt_f64(net.members[i].clipped_mass),
            ]);
        }
        let (pass, detail) = match net_cfg.expect {
            Some(x) => (
                (fit.exponent - x.exponent).abs() <= x.tolerance,
                format!(
                    "N = {} vs expected {} +- {} (fit quality {})",
                    fmt_f64(fit.exponent),
                    x.exponent,
                    x.tolerance,
                    fmt_f64(fit.fit_quality)
                ),
            ),
            None => (
                fit.negligible || fit.exponent.is_finite(),
                format!("N = {} (fit quality {})", fmt_f64(fit.exponent), fmt_f64(fit.fit_quality)),
            ),
        };
        verdicts.push(VerdictLine::new(net_cfg.label.clone(), pass, detail));
        let fitted_norm = match net_cfg.norm {
            crate::config::FitNormName::Linf => NormKind::Linf,
            crate::config::FitNormName::L2 => NormKind::L2,
            crate::config::FitNormName::H2Pair => NormKind::D2L2,
        };
        series.push(Series {
            label: format!("{} {}", net_cfg.label, fitted_norm.name()),
            xs: net.epsilons.clone(),
            ys: col(fitted_norm).clone(),
            dashed: false,
        });
        reports.push(json!({
            "label": net_cfg.label,
            "norm": net_cfg.norm,
            "fit": fit,
            "expect": net_cfg.expect,
            "net": net.manifest(),
        }));
    }
    files.add("moderateness.json", FileKind::Json, to_json(&reports)?);
    files.add("moderateness.csv", FileKind::Csv, table.render());
    files.add(
        "moderateness.svg",
        FileKind::Svg,
        svg_plot("net norms", "eps", "norm", &series, true),
    );
    let summary = json!({
        "exponents": reports.iter().map(|r| json!({"label": r["label"], "exponent": r["fit"]["exponent"]})).collect::<Vec<_>>(),
    });
    Ok((verdicts, summary))
}

/// Process exit status for an error: 2 for anything wrong with the input,
/// 3 for failures inside the numerics or the file system.
pub fn exit_code(err: &Error) -> i32 {
    match err.root() {
        Error::Config { .. }
        | Error::InvalidInput(_)
        | Error::HypothesisViolation(_)
        | Error::PositivityViolation { .. }
        | Error::Json(_) => 2,
        _ => 3,
    }
}

/// Manifest printed for a failed run.
pub fn error_manifest(err: &Error, config_hash: Option<String>) -> Value {
    let path = match err.root() {
        Error::Config { path, .. } => Some(path.clone()),
        _ => None,
    };
    json!({
        "passed": false,
        "config_hash": config_hash,
        "error": {
            "message": err.to_string(),
            "field": path,
            "exit_code": exit_code(err),
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::parse_str;

    #[test]
    fn eig_on_zero_potential_gives_the_sine_spectrum() {
        let cfg = parse_str(r#"{"command":"eig","m":1999,"n_modes":5}"#).unwrap();
        let out = run(&cfg).unwrap();
        assert!(out.manifest.passed);
        let lambdas = out.manifest.summary["lambdas"].as_array().unwrap();
        for (n, l) in lambdas.iter().enumerate() {
            let exact = (PI * (n + 1) as f64).powi(2);
            assert!((l.as_f64().unwrap() / exact - 1.0).abs() < 1e-3);
        }
        assert!(out.files.names().contains(&"eigenvalues.csv"));
    }

    #[test]
    fn evolve_keeps_skipped_lines() {
        let cfg = parse_str(r#"{"command":"evolve","m":255,"n_modes":8,"t_end":0.1,"steps":50}"#).unwrap();
        let out = run(&cfg).unwrap();
        assert!(out.manifest.passed);
        assert!(out.manifest.verdicts.iter().any(|v| v.verdict == Verdict::Skipped));
        let est: Value = serde_json::from_str(out.files.content("estimates.json").unwrap()).unwrap();
        let skipped = est["estimates"]["lines"]
            .as_array()
            .unwrap()
            .iter()
            .filter(|l| l["verdict"] == "skipped")
            .count();
        assert!(skipped > 0);
    }

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&Error::config("m", "x")), 2);
        assert_eq!(exit_code(&Error::Resolution("x".into()).at_epsilon(0.1)), 3);
        assert_eq!(exit_code(&Error::NumericFailure { mode: 1, residual: 1.0 }), 3);
    }
}
