//! Batch front-end: run a configured simulation or a convergence study and
//! write result tables, logs, and optional field snapshots.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};

use dgns::config::{parse_config_with_overrides, RunConfig};
use dgns::mms::{run_convergence_study, StudyAxis};
use dgns::run;

#[derive(Parser)]
#[command(
    name = "dgns",
    about = "Discontinuous Galerkin pressure-correction solver for incompressible Navier-Stokes",
    after_help = "Configuration format: one `key = value` per line, `#` comments.\n\
                  Numeric values accept fractions and powers: 1/8, 1/2^13, 2^-10.\n\
                  Keys: dim, cells, k1, k2, mu, epsilon, sigma_int, sigma_bnd, sigma_tilde,\n\
                  delta, tau, T, mms (beltrami|taylor-green|zero), quad_points, rtol, atol,\n\
                  max_iters, restart, diagnostics, vtk, out_dir."
)]
struct Cli {
    /// Path to the run configuration file.
    config: PathBuf,

    /// Override a configuration entry (repeatable), e.g. --set tau=1/2^10.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,

    /// Output directory (overrides the config's out_dir).
    #[arg(short, long, value_name = "DIR")]
    output: Option<PathBuf>,

    /// Record per-step diagnostics and end-of-run identity residuals.
    #[arg(long)]
    diagnostics: bool,

    /// Run a convergence study along the given axis instead of a single run.
    #[arg(long, value_enum, value_name = "AXIS")]
    study: Option<AxisArg>,

    /// Number of refinement levels in a study.
    #[arg(long, default_value_t = 3)]
    levels: usize,

    /// Print per-step progress lines.
    #[arg(short, long)]
    verbose: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum AxisArg {
    Space,
    Time,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(cli: &Cli) -> dgns::Result<()> {
    let text = fs::read_to_string(&cli.config)?;
    let mut overrides: Vec<(String, String)> = Vec::new();
    for item in &cli.set {
        let (k, v) = item.split_once('=').ok_or_else(|| {
            dgns::Error::invalid(format!("--set expects KEY=VALUE, got `{item}`"))
        })?;
        overrides.push((k.trim().to_string(), v.trim().to_string()));
    }
    let mut config = parse_config_with_overrides(&text, &overrides)?;
    if let Some(dir) = &cli.output {
        config.out_dir = dir.display().to_string();
    }
    if cli.diagnostics {
        config.diagnostics = true;
    }
    config.validate()?;

    match cli.study {
        Some(axis) => study(cli, &config, axis),
        None => single_run(cli, &config),
    }
}

fn single_run(cli: &Cli, config: &RunConfig) -> dgns::Result<()> {
    let outcome = run::execute(config)?;
    if cli.verbose {
        for d in &outcome.steps {
            println!(
                "step {:5}  t = {:.6e}  |u| = {:.6e}  energy = {:.6e}  iters = {}/{}",
                d.step, d.time, d.u_l2, d.energy, d.momentum_iterations, d.pressure_iterations
            );
        }
    }
    let dir = PathBuf::from(&config.out_dir);
    fs::create_dir_all(&dir)?;
    fs::write(dir.join("results.csv"), run::results_csv(&outcome.report))?;
    fs::write(dir.join("run.log"), run::run_log(&outcome.report))?;
    let json = serde_json::to_string_pretty(&outcome.report).expect("report serialization");
    fs::write(dir.join("report.json"), json + "\n")?;
    if config.diagnostics {
        fs::write(dir.join("diagnostics.csv"), run::diagnostics_csv(&outcome.steps))?;
    }
    if config.vtk {
        let st = &outcome.stepper.state;
        dgns::vtk::export_fields(
            &outcome.stepper.space,
            &st.u,
            &st.p,
            &st.phi,
            &dir.join("fields.vtk"),
        )?;
    }
    let r = &outcome.report;
    println!(
        "{}: {} steps to T = {}  err_v = {:.6e}  err_u = {:.6e}  err_p = {:.6e}",
        config.mms, r.n_steps, r.final_time, r.err_v, r.err_u, r.err_p
    );
    println!("results in {}", dir.display());
    Ok(())
}

fn study(cli: &Cli, config: &RunConfig, axis: AxisArg) -> dgns::Result<()> {
    let axis = match axis {
        AxisArg::Space => StudyAxis::Space,
        AxisArg::Time => StudyAxis::Time,
    };
    let table = run_convergence_study(config, axis, cli.levels)?;
    let csv = table.to_csv();
    let dir = PathBuf::from(&config.out_dir);
    fs::create_dir_all(&dir)?;
    fs::write(dir.join("results.csv"), &csv)?;
    let mut log = String::from("# study configuration\n");
    log.push_str(&config.echo());
    log.push_str(&format!("# {} study, {} levels\n", table.axis.label(), cli.levels));
    log.push_str(&csv);
    fs::write(dir.join("run.log"), log)?;
    print!("{csv}");
    println!("results in {}", dir.display());
    Ok(())
}
