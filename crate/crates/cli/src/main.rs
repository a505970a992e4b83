//! `twig`: run time-widening FIM analyses from a JSON configuration.

use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use twig_core::model::{build_model, registry};

use twig_cli::config::RunConfig;
use twig_cli::{analyze, validate};

#[derive(Parser)]
#[command(
    name = "twig",
    version,
    about = "Which parameter combinations control a bifurcation?"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sweep the horizon, classify directions and write CSV/JSON/SVG outputs.
    Analyze {
        #[arg(long)]
        config: PathBuf,
        /// Also write trajectory.csv over the final horizon.
        #[arg(long)]
        dump_trajectories: bool,
    },
    /// Cross-check sensitivities against closed forms and finite differences.
    Validate {
        #[arg(long)]
        model: String,
        #[arg(long)]
        tmax: f64,
        /// Number of correction terms (capped at the model's maximum).
        #[arg(long)]
        order: Option<usize>,
    },
    /// List the built-in models with their parameters and defaults.
    ListModels,
}

/// Sizes rayon's global pool from `TWIG_THREADS` when set.
fn configure_threads() -> Result<()> {
    let Ok(v) = std::env::var("TWIG_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .with_context(|| format!("TWIG_THREADS must be a positive integer, got '{v}'"))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()?;
    Ok(())
}

fn origin(name: &str) -> &'static str {
    match name {
        "toy_exponential" => {
            "analytic toy with one relevant, one irrelevant and one hyperrelevant mode"
        }
        "saddle_node" | "transcritical" | "pitchfork_super" | "pitchfork_sub" => {
            "one-dimensional normal form with correction terms"
        }
        "hopf_polar" => "Hopf normal form, radius and phase",
        "nonnormal_transcritical" | "modified_transcritical" => {
            "transcritical bifurcation away from normal form"
        }
        "selkov" => "Sel'kov glycolysis model with nuisance couplings",
        _ => "",
    }
}

fn list_models(out: &mut impl Write) -> io::Result<()> {
    for info in registry() {
        let model = build_model(info.name, 0).map_err(io::Error::other)?;
        writeln!(out, "{}", info.name)?;
        writeln!(out, "  {}", info.summary)?;
        writeln!(out, "  origin: {}", origin(info.name))?;
        let params: Vec<String> = model
            .parameters
            .iter()
            .map(|p| format!("{}={}", p.name, p.value))
            .collect();
        writeln!(out, "  params: {}", params.join(", "))?;
        if info.max_order > 0 {
            writeln!(
                out,
                "  corrections: order 0..={} (\"order\" in the config)",
                info.max_order
            )?;
        }
    }
    Ok(())
}

fn run(cli: Cli) -> Result<u8> {
    configure_threads()?;
    match cli.command {
        Command::Analyze {
            config,
            dump_trajectories,
        } => {
            let prepared = RunConfig::load(&config)?.prepare()?;
            analyze::analyze(prepared, dump_trajectories)
        }
        Command::Validate { model, tmax, order } => {
            let Some(info) = registry().iter().find(|m| m.name == model) else {
                let names: Vec<_> = registry().iter().map(|m| m.name).collect();
                bail!("unknown model '{model}'; available: {}", names.join(", "));
            };
            if !(tmax > 0.0 && tmax.is_finite()) {
                bail!("--tmax must be positive and finite");
            }
            let order = order.unwrap_or(0).min(info.max_order);
            let system = build_model(info.name, order)?;
            let checks = validate::validate(&system, tmax)?;
            if validate::report(&system, tmax, &checks) {
                Ok(0)
            } else {
                let worst = checks
                    .iter()
                    .max_by(|a, b| a.worst.total_cmp(&b.worst))
                    .unwrap();
                if let Some((p, t)) = &worst.at {
                    eprintln!(
                        "tolerance breach: {} error {:.3e} at parameter {p}, t = {t}",
                        worst.name, worst.worst
                    );
                }
                Ok(3)
            }
        }
        Command::ListModels => match list_models(&mut io::stdout().lock()) {
            Err(e) if e.kind() != io::ErrorKind::BrokenPipe => Err(e.into()),
            _ => Ok(0),
        },
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
