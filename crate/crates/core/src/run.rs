//! Single-run orchestration: build the discretization described by a
//! configuration, march to the final time, measure errors against the
//! configured exact solution, and emit result files.
//!
//! All emitted CSV and log files are deterministic functions of the
//! configuration; wall-clock time appears only in `report.json`.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::time::Instant;

use serde::Serialize;

use crate::config::RunConfig;
use crate::error::Error;
use crate::mesh::build_mesh;
use crate::space::Space;
use crate::stepping::{IdentityReport, Problem, StepDiagnostics, Stepper};
use crate::vtk;
use crate::Result;

#[derive(Debug, Clone, Copy, Serialize)]
pub struct IterationStats {
    pub total: usize,
    pub max: usize,
}

impl IterationStats {
    fn collect(counts: impl Iterator<Item = usize>) -> IterationStats {
        let mut stats = IterationStats { total: 0, max: 0 };
        for c in counts {
            stats.total += c;
            stats.max = stats.max.max(c);
        }
        stats
    }
}

/// Summary of one completed run; embeds the configuration so the run can be
/// reproduced from the report alone.
#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub config: RunConfig,
    pub n_steps: usize,
    pub final_time: f64,
    /// L2 error of the intermediate velocity v against u(T).
    pub err_v: f64,
    /// L2 error of the end-of-step velocity u against u(T).
    pub err_u: f64,
    /// L2 error of the pressure against p(T).
    pub err_p: f64,
    /// Energy-norm error of the end-of-step velocity.
    pub err_u_dg: f64,
    pub u_l2: f64,
    pub energy: f64,
    pub pressure_mean_max: f64,
    pub momentum_iterations: IterationStats,
    pub pressure_iterations: IterationStats,
    /// End-of-run identity residuals (diagnostics runs only).
    pub identities: Option<IdentityReport>,
    /// The only nondeterministic field.
    pub wall_clock_seconds: f64,
}

/// A completed run with its full diagnostic trail and final state.
pub struct RunOutcome {
    pub report: RunReport,
    pub steps: Vec<StepDiagnostics>,
    pub stepper: Stepper,
}

/// Build the stepper a configuration describes, with initial data applied.
pub fn build_stepper(config: &RunConfig) -> Result<Stepper> {
    let solution = config.solution()?;
    let (lo, hi) = solution.domain();
    let mesh = build_mesh(config.dim, lo, hi, [config.cells; 3])?;
    let space = Space::new(mesh, config.k1, config.k2, config.quad_points)?;
    let problem = if solution.is_zero() {
        Problem::homogeneous()
    } else {
        // Every built-in solution balances the momentum equation exactly,
        // so only boundary data is prescribed.
        Problem {
            forcing: None,
            boundary: Some(Box::new(move |t, x| solution.velocity(t, x))),
        }
    };
    let mut stepper = Stepper::new(space, config.form_params(), config.step_config(), problem)?;
    stepper.set_initial_velocity(&|x| solution.velocity(0.0, x));
    Ok(stepper)
}

/// Execute a run without touching the filesystem.
pub fn execute(config: &RunConfig) -> Result<RunOutcome> {
    config.validate()?;
    let start = Instant::now();
    let solution = config.solution()?;
    let mut stepper = build_stepper(config)?;

    let n_steps = (config.t_end / config.tau).round() as usize;
    if n_steps == 0 {
        return Err(Error::config("T", "final time shorter than half a time step"));
    }
    let mut steps = Vec::with_capacity(n_steps);
    for _ in 0..n_steps {
        steps.push(stepper.advance()?);
    }

    let t = stepper.state.time;
    let exact_u = move |x: [f64; 3]| solution.velocity(t, x);
    let exact_grad = move |x: [f64; 3]| solution.velocity_gradient(t, x);
    let exact_p = move |x: [f64; 3]| solution.pressure(t, x);
    let space = &stepper.space;
    let err_v = space.l2_error_vector(&stepper.state.v, &exact_u);
    let err_u = space.l2_error_vector(&stepper.state.u, &exact_u);
    let err_p = space.l2_error_scalar(&stepper.state.p, &exact_p);
    let err_u_dg = space.dg_error_velocity(
        &stepper.state.u,
        &exact_u,
        &exact_grad,
        config.sigma_int,
        config.sigma_bnd,
    );

    let last = steps.last().expect("at least one step");
    let report = RunReport {
        config: config.clone(),
        n_steps,
        final_time: t,
        err_v,
        err_u,
        err_p,
        err_u_dg,
        u_l2: last.u_l2,
        energy: last.energy,
        pressure_mean_max: steps.iter().map(|d| d.pressure_mean.abs()).fold(0.0, f64::max),
        momentum_iterations: IterationStats::collect(steps.iter().map(|d| d.momentum_iterations)),
        pressure_iterations: IterationStats::collect(steps.iter().map(|d| d.pressure_iterations)),
        identities: config.diagnostics.then(|| stepper.check_identities()),
        wall_clock_seconds: start.elapsed().as_secs_f64(),
    };
    Ok(RunOutcome { report, steps, stepper })
}

/// Execute a run and write `results.csv`, `run.log`, `report.json`, and the
/// optional `diagnostics.csv` and `fields.vtk` into the configured output
/// directory.
pub fn run(config: &RunConfig) -> Result<RunReport> {
    let outcome = execute(config)?;
    write_outputs(&outcome)?;
    Ok(outcome.report)
}

pub fn results_csv(report: &RunReport) -> String {
    format!(
        "err_v,err_u,err_p,err_u_dg,u_l2,energy,steps\n{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{}\n",
        report.err_v,
        report.err_u,
        report.err_p,
        report.err_u_dg,
        report.u_l2,
        report.energy,
        report.n_steps
    )
}

pub fn diagnostics_csv(steps: &[StepDiagnostics]) -> String {
    let mut out = String::from(
        "step,time,u_l2,v_dg,energy,v_minus_u_prev,pressure_mean,momentum_iterations,pressure_iterations\n",
    );
    for d in steps {
        let _ = writeln!(
            out,
            "{},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{},{}",
            d.step,
            d.time,
            d.u_l2,
            d.v_dg.total(),
            d.energy,
            d.v_minus_u_prev,
            d.pressure_mean,
            d.momentum_iterations,
            d.pressure_iterations
        );
    }
    out
}

pub fn run_log(report: &RunReport) -> String {
    let mut log = String::from("# run configuration\n");
    log.push_str(&report.config.echo());
    log.push_str("# results\n");
    let _ = writeln!(log, "steps = {}", report.n_steps);
    let _ = writeln!(log, "final_time = {:.12e}", report.final_time);
    let _ = writeln!(log, "err_v = {:.12e}", report.err_v);
    let _ = writeln!(log, "err_u = {:.12e}", report.err_u);
    let _ = writeln!(log, "err_p = {:.12e}", report.err_p);
    let _ = writeln!(log, "err_u_dg = {:.12e}", report.err_u_dg);
    let _ = writeln!(log, "u_l2 = {:.12e}", report.u_l2);
    let _ = writeln!(log, "energy = {:.12e}", report.energy);
    let _ = writeln!(log, "pressure_mean_max = {:.3e}", report.pressure_mean_max);
    let _ = writeln!(
        log,
        "momentum_iterations = total {} / max {}",
        report.momentum_iterations.total, report.momentum_iterations.max
    );
    let _ = writeln!(
        log,
        "pressure_iterations = total {} / max {}",
        report.pressure_iterations.total, report.pressure_iterations.max
    );
    if let Some(id) = &report.identities {
        let _ = writeln!(log, "splitting_residual = {:.3e}", id.splitting_residual);
        let _ = writeln!(log, "divergence_residual = {:.3e}", id.divergence_residual);
        let _ = writeln!(log, "coupling_div_residual = {:.3e}", id.coupling_div_residual);
        let _ = writeln!(log, "coupling_grad_residual = {:.3e}", id.coupling_grad_residual);
        let _ = writeln!(log, "final_pressure_mean = {:.3e}", id.pressure_mean);
    }
    log
}

fn write_outputs(outcome: &RunOutcome) -> Result<()> {
    let report = &outcome.report;
    let dir = Path::new(&report.config.out_dir);
    fs::create_dir_all(dir)?;
    fs::write(dir.join("results.csv"), results_csv(report))?;
    fs::write(dir.join("run.log"), run_log(report))?;
    let json = serde_json::to_string_pretty(report).expect("report serialization");
    fs::write(dir.join("report.json"), json + "\n")?;
    if report.config.diagnostics {
        fs::write(dir.join("diagnostics.csv"), diagnostics_csv(&outcome.steps))?;
    }
    if report.config.vtk {
        let st = &outcome.stepper.state;
        vtk::export_fields(
            &outcome.stepper.space,
            &st.u,
            &st.p,
            &st.phi,
            &dir.join("fields.vtk"),
        )?;
    }
    Ok(())
}
