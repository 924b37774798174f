#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;

use impulse_core::bounds;
use impulse_core::experiments::{self as ex, Fig3Config};
use impulse_core::io::{fmt_f64, write_events, write_table, write_trajectory};
use impulse_core::scenario::Scenario;
use impulse_core::sim::{simulate, HybridTrajectory, SimError};
use impulse_core::sweep::Execution;

/// Event-based impulsive control with leaky integrate-and-fire units.
///
/// Worker count for sweeps comes from IMPULSE_WORKERS (1 = sequential).
#[derive(Debug, Parser)]
#[command(name = "impulse", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one scenario file; writes trajectory.csv, events.csv, summary.json.
    Simulate {
        file: PathBuf,
        /// Overrides the scenario's `outputs` directory.
        #[arg(long)]
        outdir: Option<PathBuf>,
    },
    /// Print every bound report for a scenario as JSON.
    Bounds { file: PathBuf },
    /// Scalar pair runs at leaks 3, 1.5 and 0 with their envelopes.
    Fig2 {
        #[arg(long, default_value = "out/fig2")]
        outdir: PathBuf,
    },
    /// Stability measure over the (a, b) grid.
    Fig3 {
        #[arg(long, default_value_t = 21)]
        grid: usize,
        #[arg(long, default_value_t = 0.0)]
        lambda: f64,
        #[arg(long, default_value = "out/fig3")]
        outdir: PathBuf,
    },
    /// Rotating plant at ω = 0.5 and 3 with the rotation-term bound.
    Fig4 {
        #[arg(long, default_value = "out/fig4")]
        outdir: PathBuf,
    },
    /// Rotating plant under connected units, with invariant monitors.
    ConnectedDemo {
        #[arg(long, default_value = "out/connected")]
        outdir: PathBuf,
    },
}

enum Failure {
    Input(String),
    Diverged(String),
    Other(String),
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Other(e.to_string())
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::Other(e.to_string())
    }
}

fn other(e: impl std::fmt::Display) -> Failure {
    Failure::Other(e.to_string())
}

fn create(dir: &Path, name: &str) -> io::Result<BufWriter<File>> {
    fs::create_dir_all(dir)?;
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

fn write_run(dir: &Path, stem: &str, traj: &HybridTrajectory) -> io::Result<()> {
    let mut f = create(dir, &format!("{stem}trajectory.csv"))?;
    write_trajectory(traj, &mut f)?;
    f.flush()?;
    let mut f = create(dir, &format!("{stem}events.csv"))?;
    write_events(traj, &mut f)?;
    f.flush()
}

fn write_json(dir: &Path, name: &str, value: &serde_json::Value) -> Result<(), Failure> {
    let mut f = create(dir, name)?;
    serde_json::to_writer_pretty(&mut f, value)?;
    writeln!(f)?;
    f.flush()?;
    Ok(())
}

fn load(file: &Path) -> Result<Scenario, Failure> {
    Scenario::load(file).map_err(|e| Failure::Input(format!("{}: {e}", file.display())))
}

fn cmd_simulate(file: &Path, outdir: Option<PathBuf>) -> Result<(), Failure> {
    let sc = load(file)?;
    let dir = outdir.or(sc.outputs.clone()).unwrap_or_else(|| PathBuf::from("out"));
    let (traj, diverged) = match simulate(&sc.plant, &sc.controller, &sc.x0, &sc.config) {
        Ok(t) => (t, None),
        Err(SimError::Diverged { t, trajectory }) => (*trajectory, Some(t)),
        Err(e @ (SimError::Invalid(_) | SimError::BadConfig(_))) => return Err(Failure::Input(e.to_string())),
        Err(e) => return Err(other(e)),
    };
    write_run(&dir, "", &traj)?;
    let summary = ex::summarize(&sc.name, &sc.plant, &sc.controller, &traj, sc.config.t_end).map_err(other)?;
    let mut value = serde_json::to_value(&summary)?;
    value["diverged_at"] = json!(diverged);
    write_json(&dir, "summary.json", &value)?;
    println!("{}", serde_json::to_string_pretty(&value)?);
    match diverged {
        Some(t) => Err(Failure::Diverged(format!("state exceeded the overflow guard at t = {t}"))),
        None => Ok(()),
    }
}

fn cmd_bounds(file: &Path) -> Result<(), Failure> {
    let sc = load(file)?;
    let reports = bounds::all_reports(&sc.plant, &sc.controller).map_err(other)?;
    let x0 = impulse_core::linalg::norm(&sc.x0);
    let gap = bounds::min_inter_event_for(&sc.plant, &sc.controller, &sc.x0).map_err(other)?;
    let value = json!({
        "name": sc.name,
        "reports": reports,
        "certified_radius": bounds::certified_radius(&reports, x0),
        "min_inter_event": gap,
    });
    println!("{}", serde_json::to_string_pretty(&value)?);
    Ok(())
}

fn cmd_fig2(dir: &Path, exec: Execution) -> Result<(), Failure> {
    let runs = ex::fig2(&ex::FIG2_LAMBDAS, exec).map_err(other)?;
    let mut records = Vec::new();
    for run in &runs {
        write_run(dir, &format!("lambda_{}_", run.lambda), &run.trajectory)?;
        let (plant, ctrl) = ex::fig2_system(run.lambda);
        let summary = ex::summarize(&format!("lambda_{}", run.lambda), &plant, &ctrl, &run.trajectory, 10.0)
            .map_err(other)?;
        let min_x = (0..run.trajectory.len()).map(|i| run.trajectory.x(i)[0]).fold(f64::INFINITY, f64::min);
        let dominated = summary.bounds.iter().filter(|b| b.report.applicable).all(|b| b.max_violation <= 1e-6);
        records.push(json!({
            "lambda": run.lambda,
            "min_x": min_x,
            "sign_changes": ex::sign_changes(&run.trajectory),
            "envelopes_dominate": dominated,
            "summary": summary,
        }));
    }
    let (columns, rows) = ex::fig2_bounds_table(&runs);
    let cols: Vec<&str> = columns.iter().map(String::as_str).collect();
    let rows: Vec<Vec<String>> = rows.iter().map(|r| r.iter().map(|&v| fmt_f64(v)).collect()).collect();
    let mut f = create(dir, "bounds.csv")?;
    write_table(&cols, &rows, &mut f)?;
    f.flush()?;
    let value = json!({ "x0": ex::FIG2_X0, "runs": records });
    write_json(dir, "summary.json", &value)?;
    println!("{}", serde_json::to_string_pretty(&value)?);
    Ok(())
}

fn cmd_fig3(grid: usize, lambda: f64, dir: &Path, exec: Execution) -> Result<(), Failure> {
    if grid < 2 {
        return Err(Failure::Input(format!("--grid must be at least 2, got {grid}")));
    }
    if !(lambda >= 0.0) {
        return Err(Failure::Input(format!("--lambda must be nonnegative, got {lambda}")));
    }
    let cfg = Fig3Config::new(grid, lambda);
    let cells = ex::fig3(&cfg, exec).map_err(other)?;
    let rows: Vec<Vec<String>> = cells
        .iter()
        .map(|c| {
            vec![
                c.i.to_string(),
                c.j.to_string(),
                fmt_f64(c.a),
                fmt_f64(c.b),
                fmt_f64(c.lambda),
                fmt_f64(c.c),
                c.diverged.to_string(),
                c.band.to_string(),
                c.events.to_string(),
            ]
        })
        .collect();
    let mut f = create(dir, &format!("heatmap_lambda_{lambda}.csv"))?;
    write_table(&["i", "j", "a", "b", "lambda", "C", "diverged", "band", "events"], &rows, &mut f)?;
    f.flush()?;
    let wrong = ex::fig3_misclassified(&cells);
    let value = json!({
        "grid": grid,
        "lambda": lambda,
        "x0": cfg.x0,
        "T": cfg.sim.t_end,
        "dt": cfg.sim.dt,
        "overflow_guard": cfg.overflow_guard,
        "cells": cells.len(),
        "band_cells": cells.iter().filter(|c| c.band).count(),
        "diverged_cells": cells.iter().filter(|c| c.diverged).count(),
        "misclassified": wrong,
    });
    write_json(dir, &format!("summary_lambda_{lambda}.json"), &value)?;
    println!("{}", serde_json::to_string_pretty(&value)?);
    Ok(())
}

fn cmd_fig4(dir: &Path, exec: Execution) -> Result<(), Failure> {
    let runs = ex::fig4(&ex::FIG4_OMEGAS, exec).map_err(other)?;
    let mut records = Vec::new();
    for run in &runs {
        write_run(dir, &format!("omega_{}_", run.omega), &run.trajectory)?;
        records.push(json!({
            "omega": run.omega,
            "x0": ex::FIG4_X0,
            "rotation_bound": run.rotation,
            "lyapunov_bound": run.lyapunov,
            "observed_limsup": run.limsup,
            "conservatism": run.conservatism(),
            "events": run.trajectory.events().len(),
        }));
    }
    let value = json!({ "runs": records });
    write_json(dir, "summary.json", &value)?;
    println!("{}", serde_json::to_string_pretty(&value)?);
    Ok(())
}

fn cmd_connected(dir: &Path) -> Result<(), Failure> {
    let run = ex::connected_demo().map_err(other)?;
    write_run(dir, "", &run.trajectory)?;
    let value = json!({
        "x0": ex::FIG4_X0,
        "events": run.trajectory.events().len(),
        "null_weight": run.weight,
        "z_bounds": run.zbounds,
        "monitor": run.monitor,
        "bound": run.bound,
        "observed_limsup": run.limsup,
    });
    write_json(dir, "summary.json", &value)?;
    println!("{}", serde_json::to_string_pretty(&value)?);
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let exec = Execution::from_env();
    let result = match cli.command {
        Command::Simulate { file, outdir } => cmd_simulate(&file, outdir),
        Command::Bounds { file } => cmd_bounds(&file),
        Command::Fig2 { outdir } => cmd_fig2(&outdir, exec),
        Command::Fig3 { grid, lambda, outdir } => cmd_fig3(grid, lambda, &outdir, exec),
        Command::Fig4 { outdir } => cmd_fig4(&outdir, exec),
        Command::ConnectedDemo { outdir } => cmd_connected(&outdir),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Input(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Diverged(msg)) => {
            eprintln!("diverged: {msg}");
            ExitCode::from(3)
        }
        Err(Failure::Other(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
