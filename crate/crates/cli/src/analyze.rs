//! `twig analyze`: sweep, classify and write the artifact files.

use std::fs;
use std::io::Write;
use std::path::Path;

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

use twig_core::equilibria::FixedPoint;
use twig_core::integrate::{integrate_states, SampleGrid};
use twig_core::twig::{classify, near_bifurcation_profile, run_sweep, SweepFailure, TwigReport};

use crate::config::{Prepared, RunConfig};
use crate::output::{eigenvalues_csv, participation_csv, trajectory_csv};
use crate::svg::rainbow_svg;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Complete,
    Partial,
    Failed,
}

/// Contents of `report.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportFile {
    pub model: String,
    pub param_names: Vec<String>,
    pub params: Vec<f64>,
    pub status: RunStatus,
    pub report: Option<TwigReport>,
    pub failure: Option<SweepFailure>,
    pub fixed_point: Option<FixedPoint>,
    pub config: RunConfig,
    pub errors: Vec<String>,
}

/// Exit status: 0 for a complete sweep, 2 for a partial one, 1 when the run
/// could not be analysed.
pub fn analyze(prepared: Prepared, dump_trajectories: bool) -> Result<u8> {
    let Prepared {
        config,
        model,
        params,
        sweep: sweep_config,
    } = prepared;
    let out = config.outputs.clone();
    fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;

    let mut file = ReportFile {
        model: model.name.clone(),
        param_names: model.param_names(),
        params: params.clone(),
        status: RunStatus::Failed,
        report: None,
        failure: None,
        fixed_point: None,
        config: config.clone(),
        errors: Vec::new(),
    };

    let sweep = match run_sweep(&model, &params, &sweep_config) {
        Ok(s) => s,
        Err(e) => {
            file.errors.push(format!("sweep: {e}"));
            write_json(&out.join("report.json"), &file)?;
            eprintln!("error: sweep failed: {e}");
            return Ok(1);
        }
    };
    file.failure = sweep.failure.clone();
    file.fixed_point = sweep.fixed_point.clone();
    if let Some(f) = &sweep.failure {
        file.errors.push(format!(
            "integration stopped at t_max = {}: {}",
            f.t_max, f.error
        ));
    }
    let cls = &config.classification;
    match classify(&sweep, cls.tail_fraction, cls.slope_tol) {
        Ok(r) => file.report = Some(r),
        Err(e) => file.errors.push(format!("classification: {e}")),
    }
    file.status = match (&sweep.failure, &file.report) {
        (None, Some(_)) => RunStatus::Complete,
        (Some(_), _) => RunStatus::Partial,
        (None, None) => RunStatus::Failed,
    };

    write(&out.join("eigenvalues.csv"), &eigenvalues_csv(&sweep))?;
    write(&out.join("participation.csv"), &participation_csv(&sweep))?;
    write(&out.join("rainbow.svg"), &rainbow_svg(&sweep, &model.name))?;

    if let Some(nb) = &config.near_bifurcation {
        match near_bifurcation_profile(
            &model,
            &params,
            &nb.offsets,
            &sweep_config,
            cls.tail_fraction,
            cls.slope_tol,
        ) {
            Ok(entries) => {
                for e in &entries {
                    if let Some(err) = &e.error {
                        file.errors
                            .push(format!("near_bifurcation offset {}: {err}", e.offset));
                    }
                }
                write_json(&out.join("near_bifurcation.json"), &entries)?;
            }
            Err(e) => file.errors.push(format!("near_bifurcation: {e}")),
        }
    }

    if dump_trajectories {
        let t_end = sweep
            .completed_horizons()
            .last()
            .copied()
            .unwrap_or(sweep_config.t_min);
        let grid = SampleGrid::new(t_end, sweep_config.n_samples)?;
        match integrate_states(&model, &params, &grid.times, &sweep_config.integrator) {
            Ok((states, _)) => write(
                &out.join("trajectory.csv"),
                &trajectory_csv(&grid.times, &states),
            )?,
            Err(e) => file.errors.push(format!("trajectory dump: {e}")),
        }
    }

    write_json(&out.join("report.json"), &file)?;
    summarize(&file);
    Ok(match file.status {
        RunStatus::Complete => 0,
        RunStatus::Partial => 2,
        RunStatus::Failed => 1,
    })
}

fn summarize(file: &ReportFile) {
    // a closed stdout (e.g. piped into `head`) must not abort the run
    let _ = print_summary(&mut std::io::stdout().lock(), file);
    for e in &file.errors {
        eprintln!("warning: {e}");
    }
}

fn print_summary(out: &mut impl Write, file: &ReportFile) -> std::io::Result<()> {
    writeln!(out, "model {}: {:?}", file.model, file.status)?;
    if let Some(r) = &file.report {
        writeln!(
            out,
            "codimension {} (raw {}), converged {}, oscillatory {}",
            r.codimension, r.raw_codimension, r.converged, r.oscillatory
        )?;
        for d in &r.directions {
            writeln!(
                out,
                "  direction {:>2}  {:<13} slope {:>7.3}  dominant {} ({:.3}){}",
                d.index,
                format!("{:?}", d.relevance),
                d.slope,
                d.dominant_param,
                d.dominant_participation,
                if d.frequency_flag {
                    "  [frequency]"
                } else {
                    ""
                }
            )?;
        }
    }
    Ok(())
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write(path, &text)
}
