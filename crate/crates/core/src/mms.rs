//! Manufactured solutions, final-time error norms, and convergence-rate
//! studies.
//!
//! Both built-in solutions satisfy the incompressible Navier-Stokes
//! equations with zero forcing: the diffusion term balances the time
//! derivative and the pressure gradient balances convection. Tests verify
//! these identities by finite differences rather than trusting the formulas.

use crate::config::RunConfig;
use crate::error::Error;
use crate::run;
use crate::Result;

/// Mean-shift constant making the transient pressure below have zero mean
/// over the unit cube.
const PRESSURE_SHIFT_3D: f64 = 7.639_581_727_154_14;

/// An exact-solution triplet (velocity, pressure, forcing) on a box domain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ManufacturedSolution {
    /// Transient 3d flow with velocity parallel to its curl on (0,1)^3;
    /// requires unit viscosity.
    Beltrami3d,
    /// Decaying 2d vortex array on (0,pi)^2; valid for any viscosity.
    TaylorGreen2d { mu: f64 },
    /// Identically zero data (u = 0, p = 0, f = 0) on the unit box.
    Zero { dim: usize },
}

/// Exact velocity and pressure of the 3d solution at time `t`.
pub fn beltrami_3d(t: f64, x: [f64; 3]) -> ([f64; 3], f64) {
    let [xx, yy, zz] = x;
    let et = (-t).exp();
    let ex = (xx - t).exp();
    let ey = (yy - t).exp();
    let ez = (zz - t).exp();
    let u = [
        -ex * (yy + zz).sin() - ez * (xx + yy).cos(),
        -ey * (xx + zz).sin() - ex * (yy + zz).cos(),
        -ez * (xx + yy).sin() - ey * (xx + zz).cos(),
    ];
    let p = -(et * et)
        * ((xx + zz).exp() * (yy + zz).sin() * (xx + yy).cos()
            + (xx + yy).exp() * (xx + zz).sin() * (yy + zz).cos()
            + (yy + zz).exp() * (xx + yy).sin() * (xx + zz).cos()
            + 0.5 * (2.0 * xx).exp()
            + 0.5 * (2.0 * yy).exp()
            + 0.5 * (2.0 * zz).exp()
            - PRESSURE_SHIFT_3D);
    (u, p)
}

/// Exact velocity and pressure of the 2d vortex solution at time `t` for
/// viscosity `mu`. The third velocity component is zero.
pub fn taylor_green_2d(mu: f64, t: f64, x: [f64; 3]) -> ([f64; 3], f64) {
    let decay = (-2.0 * mu * t).exp();
    let u = [
        -x[0].cos() * x[1].sin() * decay,
        x[0].sin() * x[1].cos() * decay,
        0.0,
    ];
    let p = -0.25 * ((2.0 * x[0]).cos() + (2.0 * x[1]).cos()) * decay * decay;
    (u, p)
}

impl ManufacturedSolution {
    /// Look up a solution by configuration name. `mu` is only used by
    /// solutions whose fields depend on viscosity.
    pub fn by_name(name: &str, dim: usize, mu: f64) -> Result<ManufacturedSolution> {
        match name {
            "beltrami" => Ok(ManufacturedSolution::Beltrami3d),
            "taylor-green" => Ok(ManufacturedSolution::TaylorGreen2d { mu }),
            "zero" => Ok(ManufacturedSolution::Zero { dim }),
            other => Err(Error::invalid(format!(
                "unknown solution `{other}` (expected beltrami, taylor-green, or zero)"
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ManufacturedSolution::Beltrami3d => "beltrami",
            ManufacturedSolution::TaylorGreen2d { .. } => "taylor-green",
            ManufacturedSolution::Zero { .. } => "zero",
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            ManufacturedSolution::Beltrami3d => 3,
            ManufacturedSolution::TaylorGreen2d { .. } => 2,
            ManufacturedSolution::Zero { dim } => *dim,
        }
    }

    /// Dimension the formulas require, if fixed.
    pub fn required_dim(&self) -> Option<usize> {
        match self {
            ManufacturedSolution::Beltrami3d => Some(3),
            ManufacturedSolution::TaylorGreen2d { .. } => Some(2),
            ManufacturedSolution::Zero { .. } => None,
        }
    }

    /// Viscosity the formulas require, if fixed.
    pub fn required_viscosity(&self) -> Option<f64> {
        match self {
            ManufacturedSolution::Beltrami3d => Some(1.0),
            _ => None,
        }
    }

    /// Domain box (lower, upper corners).
    pub fn domain(&self) -> ([f64; 3], [f64; 3]) {
        match self {
            ManufacturedSolution::TaylorGreen2d { .. } => {
                ([0.0; 3], [std::f64::consts::PI, std::f64::consts::PI, 0.0])
            }
            _ => ([0.0; 3], [1.0; 3]),
        }
    }

    pub fn velocity(&self, t: f64, x: [f64; 3]) -> [f64; 3] {
        match self {
            ManufacturedSolution::Beltrami3d => beltrami_3d(t, x).0,
            ManufacturedSolution::TaylorGreen2d { mu } => taylor_green_2d(*mu, t, x).0,
            ManufacturedSolution::Zero { .. } => [0.0; 3],
        }
    }

    pub fn pressure(&self, t: f64, x: [f64; 3]) -> f64 {
        match self {
            ManufacturedSolution::Beltrami3d => beltrami_3d(t, x).1,
            ManufacturedSolution::TaylorGreen2d { mu } => taylor_green_2d(*mu, t, x).1,
            ManufacturedSolution::Zero { .. } => 0.0,
        }
    }

    /// Momentum forcing; identically zero for every built-in solution.
    pub fn forcing(&self, _t: f64, _x: [f64; 3]) -> [f64; 3] {
        [0.0; 3]
    }

    /// Velocity gradient, rows indexed by component: out[c][a] = du_c/dx_a.
    pub fn velocity_gradient(&self, t: f64, x: [f64; 3]) -> [[f64; 3]; 3] {
        match self {
            ManufacturedSolution::Beltrami3d => {
                let [xx, yy, zz] = x;
                let ex = (xx - t).exp();
                let ey = (yy - t).exp();
                let ez = (zz - t).exp();
                let (sxy, cxy) = (xx + yy).sin_cos();
                let (sxz, cxz) = (xx + zz).sin_cos();
                let (syz, cyz) = (yy + zz).sin_cos();
                [
                    [-ex * syz + ez * sxy, -ex * cyz + ez * sxy, -ex * cyz - ez * cxy],
                    [-ey * cxz - ex * cyz, -ey * sxz + ex * syz, -ey * cxz + ex * syz],
                    [-ez * cxy + ey * sxz, -ez * cxy - ey * cxz, -ez * sxy + ey * sxz],
                ]
            }
            ManufacturedSolution::TaylorGreen2d { mu } => {
                let decay = (-2.0 * mu * t).exp();
                let (sx, cx) = x[0].sin_cos();
                let (sy, cy) = x[1].sin_cos();
                [
                    [sx * sy * decay, -cx * cy * decay, 0.0],
                    [cx * cy * decay, -sx * sy * decay, 0.0],
                    [0.0; 3],
                ]
            }
            ManufacturedSolution::Zero { .. } => [[0.0; 3]; 3],
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, ManufacturedSolution::Zero { .. })
    }
}

/// Which resolution parameter a convergence study refines.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StudyAxis {
    /// Halve the mesh size per level (fixed time step).
    Space,
    /// Halve the time step per level (fixed mesh).
    Time,
}

impl StudyAxis {
    pub fn label(&self) -> &'static str {
        match self {
            StudyAxis::Space => "space",
            StudyAxis::Time => "time",
        }
    }
}

/// Errors below this are treated as exact reproduction: successive rates
/// would be noise, so they are reported as absent.
const RATE_FLOOR: f64 = 1e-13;

#[derive(Debug, Clone)]
pub struct RateRow {
    pub level: usize,
    /// Mesh size h (space studies) or time step tau (time studies).
    pub resolution: f64,
    /// L2 error of the intermediate velocity against u(T).
    pub err_v: f64,
    /// L2 error of the end-of-step velocity against u(T).
    pub err_u: f64,
    /// L2 error of the pressure against p(T).
    pub err_p: f64,
    pub rate_v: Option<f64>,
    pub rate_u: Option<f64>,
    pub rate_p: Option<f64>,
}

/// Per-level errors with successive convergence rates
/// ln(err_coarse/err_fine)/ln(2).
#[derive(Debug, Clone)]
pub struct RateTable {
    pub axis: StudyAxis,
    pub rows: Vec<RateRow>,
}

/// Rate between successive halvings; absent when either error sits at
/// machine level.
pub fn rate_between(err_coarse: f64, err_fine: f64) -> Option<f64> {
    if err_coarse > RATE_FLOOR && err_fine > RATE_FLOOR {
        Some((err_coarse / err_fine).ln() / std::f64::consts::LN_2)
    } else {
        None
    }
}

impl RateTable {
    /// Build a table from per-level `(resolution, [err_v, err_u, err_p])`.
    pub fn from_errors(axis: StudyAxis, levels: &[(f64, [f64; 3])]) -> RateTable {
        let mut rows: Vec<RateRow> = Vec::with_capacity(levels.len());
        for (i, (resolution, errs)) in levels.iter().enumerate() {
            let prev = if i > 0 { Some(levels[i - 1].1) } else { None };
            let rate = |c: usize| prev.and_then(|p| rate_between(p[c], errs[c]));
            rows.push(RateRow {
                level: i,
                resolution: *resolution,
                err_v: errs[0],
                err_u: errs[1],
                err_p: errs[2],
                rate_v: rate(0),
                rate_u: rate(1),
                rate_p: rate(2),
            });
        }
        RateTable { axis, rows }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("level,h_or_tau,err_v,rate_v,err_u,rate_u,err_p,rate_p\n");
        let fmt_rate = |r: Option<f64>| r.map(|v| format!("{v:.6}")).unwrap_or_default();
        for row in &self.rows {
            out.push_str(&format!(
                "{},{:.12e},{:.12e},{},{:.12e},{},{:.12e},{}\n",
                row.level,
                row.resolution,
                row.err_v,
                fmt_rate(row.rate_v),
                row.err_u,
                fmt_rate(row.rate_u),
                row.err_p,
                fmt_rate(row.rate_p),
            ));
        }
        out
    }
}

/// Run the solver over `levels` successive halvings of the chosen resolution
/// parameter, starting from `base`, and tabulate final-time errors and
/// rates.
pub fn run_convergence_study(
    base: &RunConfig,
    axis: StudyAxis,
    levels: usize,
) -> Result<RateTable> {
    if levels < 2 {
        return Err(Error::invalid("a convergence study needs at least 2 levels"));
    }
    if base.k2 + 1 != base.k1 {
        return Err(Error::config(
            "k2",
            format!("rate studies require k2 = k1 - 1, got k1={}, k2={}", base.k1, base.k2),
        ));
    }
    let mut entries = Vec::with_capacity(levels);
    for level in 0..levels {
        let mut cfg = base.clone();
        match axis {
            StudyAxis::Space => {
                cfg.cells = base
                    .cells
                    .checked_shl(level as u32)
                    .ok_or_else(|| Error::invalid("cell count overflow in study"))?;
            }
            StudyAxis::Time => cfg.tau = base.tau / (1u64 << level) as f64,
        }
        let resolution = match axis {
            StudyAxis::Space => {
                let (lo, hi) = cfg.solution()?.domain();
                (hi[0] - lo[0]) / cfg.cells as f64
            }
            StudyAxis::Time => cfg.tau,
        };
        let outcome = run::execute(&cfg).map_err(|e| {
            Error::invalid(format!(
                "study level {level} ({} = {resolution:.6e}) failed: {e}",
                match axis {
                    StudyAxis::Space => "h",
                    StudyAxis::Time => "tau",
                }
            ))
        })?;
        let r = &outcome.report;
        entries.push((resolution, [r.err_v, r.err_u, r.err_p]));
    }
    Ok(RateTable::from_errors(axis, &entries))
}
