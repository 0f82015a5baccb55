use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::Parser;
use serde_json::Value;

use sturm_vws::config::{parse_config, Command};
use sturm_vws::output::{to_json, write_atomic};
use sturm_vws::runner::{error_manifest, exit_code, run};

/// Spectral Sturm-Liouville solver and epsilon-regularization experiments.
#[derive(Parser, Debug)]
#[command(name = "sturm-vws", version)]
struct Cli {
    /// eig | evolve | vws-existence | vws-uniqueness | vws-consistency | moderateness
    command: String,
    /// JSON configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `output.dir` of the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Do not print the manifest to stdout.
    #[arg(long)]
    quiet: bool,
}

fn fail(err: &sturm_vws::Error, hash: Option<String>) -> ExitCode {
    let manifest = error_manifest(err, hash);
    println!("{}", to_json(&manifest).unwrap_or_default().trim_end());
    eprintln!("error: {err}");
    ExitCode::from(exit_code(err) as u8)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let start = Instant::now();
    let cfg = match parse_config(&cli.config) {
        Ok(c) => c,
        Err(e) => return fail(&e, None),
    };
    if cfg.command.name() != cli.command {
        let known = [
            Command::Eig,
            Command::Evolve,
            Command::VwsExistence,
            Command::VwsUniqueness,
            Command::VwsConsistency,
            Command::Moderateness,
        ];
        let msg = if known.iter().any(|c| c.name() == cli.command) {
            format!("config is for `{}`, not `{}`", cfg.command.name(), cli.command)
        } else {
            format!("unknown command `{}`", cli.command)
        };
        return fail(&sturm_vws::Error::Config { path: "command".into(), message: msg }, Some(cfg.hash()));
    }
    let outcome = match run(&cfg) {
        Ok(o) => o,
        Err(e) => return fail(&e, Some(cfg.hash())),
    };
    let dir = cli.out.unwrap_or_else(|| PathBuf::from(&cfg.output.dir));
    let written = outcome
        .files
        .commit(&dir, cfg.output.formats())
        .and_then(|paths| {
            let manifest = to_json(&outcome.manifest)?;
            write_atomic(&dir.join("manifest.json"), manifest.as_bytes())?;
            Ok(paths)
        });
    if let Err(e) = written {
        return fail(&e, Some(cfg.hash()));
    }
    if !cli.quiet {
        let mut shown = serde_json::to_value(&outcome.manifest).expect("manifest serializes");
        if let Value::Object(obj) = &mut shown {
            obj.insert("wall_time_s".into(), start.elapsed().as_secs_f64().into());
            obj.insert("out_dir".into(), dir.display().to_string().into());
        }
        println!("{}", to_json(&shown).unwrap_or_default().trim_end());
    }
    if outcome.manifest.passed {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}
