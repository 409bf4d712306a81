//! Time stepping for the pressure-correction splitting scheme.
//!
//! Each step solves a convection-diffusion momentum system for an
//! intermediate velocity v, then a discrete Poisson problem for a zero-mean
//! pressure increment phi, and finally applies coefficientwise corrections:
//!   p^n = p^{n-1} + phi - delta mu b(v, .),
//!   u^n = v + tau b(., phi),
//! both exact L2 updates because the mass matrix is the identity in the
//! orthonormal modal basis.

use crate::error::Error;
use crate::forms::{
    assemble_convection, convection_inflow_rhs, convection_pattern, convection_skew_rhs,
    coupling_data_rhs, diffusion_boundary_rhs, ConvectionPart, FormParams, Operators,
};
use crate::solver::{constant_kernel, gmres, projected_cg, BlockJacobi, SolverConfig};
use crate::space::{DgNormParts, DgScalarField, DgVectorField, Kind, Space};
use crate::sparse::{axpy, dot, norm2, BlockCsr};
use crate::Result;

/// Space-time data of the flow problem. `None` means identically zero.
pub type SpaceTimeFn = Box<dyn Fn(f64, [f64; 3]) -> [f64; 3] + Send + Sync>;

pub struct Problem {
    /// Body force f(t, x).
    pub forcing: Option<SpaceTimeFn>,
    /// Dirichlet velocity g(t, x), imposed weakly.
    pub boundary: Option<SpaceTimeFn>,
}

impl Problem {
    /// No forcing, homogeneous boundary velocity.
    pub fn homogeneous() -> Problem {
        Problem { forcing: None, boundary: None }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct StepConfig {
    /// Time step.
    pub tau: f64,
    /// Viscosity.
    pub mu: f64,
    /// Divergence-correction weight of the pressure update. Stability
    /// requires 0 < delta <= kappa / (2 dim).
    pub delta: f64,
    pub solver: SolverConfig,
}

impl StepConfig {
    /// Midpoint of the admissible range (0, kappa/(2 dim)] for the
    /// symmetric and incomplete variants; safe for every epsilon.
    pub fn default_delta(dim: usize) -> f64 {
        0.25 / dim as f64
    }

    pub fn validate(&self, dim: usize, params: &FormParams) -> Result<()> {
        if !(self.tau > 0.0) || !self.tau.is_finite() {
            return Err(Error::invalid(format!("tau must be positive, got {}", self.tau)));
        }
        if !(self.mu > 0.0) || !self.mu.is_finite() {
            return Err(Error::invalid(format!("mu must be positive, got {}", self.mu)));
        }
        let bound = params.kappa() / (2.0 * dim as f64);
        if !(self.delta > 0.0) || self.delta > bound {
            return Err(Error::invalid(format!(
                "delta must lie in (0, {bound}] = (0, kappa/(2 dim)], got {}",
                self.delta
            )));
        }
        Ok(())
    }
}

/// Discrete fields carried across steps.
#[derive(Debug, Clone)]
pub struct State {
    /// End-of-step velocity u^n.
    pub u: DgVectorField,
    /// Intermediate velocity v^n of the most recent step.
    pub v: DgVectorField,
    /// Pressure p^n (zero mean).
    pub p: DgScalarField,
    /// Pressure increment phi^n of the most recent step.
    pub phi: DgScalarField,
    /// Accumulated divergence correction S^n = delta mu sum_i b(v^i, .).
    pub s: DgScalarField,
    pub time: f64,
    pub step: usize,
}

/// Per-step scalar diagnostics.
#[derive(Debug, Clone, Copy)]
pub struct StepDiagnostics {
    pub step: usize,
    pub time: f64,
    pub u_l2: f64,
    /// Energy norm parts of the intermediate velocity.
    pub v_dg: DgNormParts,
    /// Lyapunov functional of the scheme:
    /// |u^n|^2 + kappa mu tau sum_i |v^i|_DG^2 + tau^2 a_ellip(xi, xi)
    /// + tau/(delta mu) |S^n|^2 with xi = p + S. Nonincreasing when the
    /// forcing and boundary data vanish.
    pub energy: f64,
    /// |v^n - u^{n-1}|, a lower bound for the energy decrement.
    pub v_minus_u_prev: f64,
    pub pressure_mean: f64,
    pub momentum_iterations: usize,
    pub pressure_iterations: usize,
}

/// Residuals of exact discrete identities; all stay at roundoff scale for a
/// correct implementation, independent of the mesh or the time step.
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct IdentityReport {
    /// Relative residual of
    /// b(u^n, q) = b(v^n, q) + tau a_ellip(phi, q)
    ///           - tau penalty(phi, q) + tau (G[phi], G[q]).
    pub splitting_residual: f64,
    /// Relative residual of
    /// b(u^n, q) + gb(q) = -tau penalty(phi, q) + tau (G[phi], G[q]),
    /// with gb the boundary-data correction of the coupling form; measures
    /// how far u^n is from weakly divergence-free against the data.
    pub divergence_residual: f64,
    /// Relative residual of b(v, q) = (div v - R[v], q).
    pub coupling_div_residual: f64,
    /// Relative residual of b(theta, phi) = (-grad phi + G[phi], theta).
    pub coupling_grad_residual: f64,
    /// Mean of the pressure, zero by construction of the scheme.
    pub pressure_mean: f64,
}

impl IdentityReport {
    pub fn max_residual(&self) -> f64 {
        self.splitting_residual
            .max(self.divergence_residual)
            .max(self.coupling_div_residual)
            .max(self.coupling_grad_residual)
    }
}

/// Driver owning the discretization and the evolving state.
pub struct Stepper {
    pub space: Space,
    pub ops: Operators,
    pub config: StepConfig,
    pub problem: Problem,
    pub state: State,
    momentum: BlockCsr,
    kernel: Vec<f64>,
    poisson_pc: BlockJacobi,
    /// Running sum of |v^i|_DG^2 entering the energy.
    dg_v_cum: f64,
}

impl Stepper {
    pub fn new(
        space: Space,
        params: FormParams,
        config: StepConfig,
        problem: Problem,
    ) -> Result<Stepper> {
        config.validate(space.dim(), &params)?;
        let ops = Operators::new(&space, params)?;
        let momentum = convection_pattern(&space);
        let kernel = constant_kernel(&space);
        let poisson_pc = BlockJacobi::new(&ops.pressure_poisson);
        let state = State {
            u: space.zero_vector(),
            v: space.zero_vector(),
            p: space.zero_scalar(Kind::Pressure),
            phi: space.zero_scalar(Kind::Pressure),
            s: space.zero_scalar(Kind::Pressure),
            time: 0.0,
            step: 0,
        };
        Ok(Stepper {
            space,
            ops,
            config,
            problem,
            state,
            momentum,
            kernel,
            poisson_pc,
            dg_v_cum: 0.0,
        })
    }

    /// Resets the state to time zero with u^0 the L2 projection of `u0` and
    /// zero initial pressure.
    pub fn set_initial_velocity(&mut self, u0: &dyn Fn([f64; 3]) -> [f64; 3]) {
        self.state.u = self.space.project_vector(u0);
        self.state.v = self.state.u.clone();
        self.state.p = self.space.zero_scalar(Kind::Pressure);
        self.state.phi = self.space.zero_scalar(Kind::Pressure);
        self.state.s = self.space.zero_scalar(Kind::Pressure);
        self.state.time = 0.0;
        self.state.step = 0;
        self.dg_v_cum = 0.0;
    }

    /// Sets raw initial velocity coefficients (same layout as
    /// `DgVectorField`), resetting the rest of the state.
    pub fn set_initial_coeffs(&mut self, coeffs: &[f64]) -> Result<()> {
        if coeffs.len() != self.state.u.coeffs.len() {
            return Err(Error::invalid(format!(
                "initial velocity has {} coefficients, expected {}",
                coeffs.len(),
                self.state.u.coeffs.len()
            )));
        }
        self.state.u.coeffs.copy_from_slice(coeffs);
        self.state.v = self.state.u.clone();
        self.state.p = self.space.zero_scalar(Kind::Pressure);
        self.state.phi = self.space.zero_scalar(Kind::Pressure);
        self.state.s = self.space.zero_scalar(Kind::Pressure);
        self.state.time = 0.0;
        self.state.step = 0;
        self.dg_v_cum = 0.0;
        Ok(())
    }

    /// Advances one time step and reports diagnostics.
    pub fn advance(&mut self) -> Result<StepDiagnostics> {
        let space = &self.space;
        let tau = self.config.tau;
        let mu = self.config.mu;
        let step_new = self.state.step + 1;
        let t_new = step_new as f64 * tau;

        // Momentum matrix: I + tau conv(u^{n-1}) + tau mu diffusion.
        assemble_convection(space, &self.state.u, ConvectionPart::Full, &mut self.momentum);
        for v in self.momentum.values.iter_mut() {
            *v *= tau;
        }
        self.momentum.add_scaled_values(&self.ops.diffusion, tau * mu);
        let nb = self.momentum.nb_row;
        for e in 0..self.momentum.n_block_rows {
            let slot = self.momentum.block_slot(e, e);
            let block = self.momentum.block_mut(slot);
            for i in 0..nb {
                block[i * nb + i] += 1.0;
            }
        }
        let momentum_pc = BlockJacobi::new(&self.momentum);

        // Right-hand side: previous velocity, pressure coupling, forcing,
        // and the weak Dirichlet data terms of diffusion and upwinding.
        let mut rhs = self.state.u.clone();
        self.ops.add_coupling_transpose(space, &self.state.p.coeffs, &mut rhs, tau);
        if let Some(f) = &self.problem.forcing {
            let fp = space.project_vector(&|x| f(t_new, x));
            axpy(tau, &fp.coeffs, &mut rhs.coeffs);
        }
        let mut gb: Option<DgScalarField> = None;
        if let Some(g) = &self.problem.boundary {
            let gt = |x: [f64; 3]| g(t_new, x);
            let mut bnd = space.zero_vector();
            diffusion_boundary_rhs(space, &self.ops.params, &gt, &mut bnd);
            axpy(tau * mu, &bnd.coeffs, &mut rhs.coeffs);
            let mut conv = space.zero_vector();
            convection_inflow_rhs(space, &self.state.u, &gt, &mut conv);
            convection_skew_rhs(space, &self.state.u, &gt, &mut conv);
            axpy(tau, &conv.coeffs, &mut rhs.coeffs);
            gb = Some(coupling_data(space, &self.kernel, &gt));
        }

        // Component solves, warm-started from the previous v.
        let n = space.n_dofs(Kind::Velocity);
        let mut v = self.state.v.clone();
        let mut momentum_iterations = 0;
        for c in 0..space.dim() {
            let report = gmres(
                &self.momentum,
                &rhs.coeffs[c * n..(c + 1) * n],
                &mut v.coeffs[c * n..(c + 1) * n],
                &momentum_pc,
                &self.config.solver,
            );
            momentum_iterations += report.iterations;
            if !report.converged {
                return Err(Error::SolveFailure {
                    step: step_new,
                    stage: "momentum",
                    iterations: report.iterations,
                    residual: report.residual,
                });
            }
        }

        // Pressure increment: a_ellip(phi, q) = -(1/tau) (b(v, q) + gb(q)),
        // where gb carries the boundary data of the coupling form.
        let mut bv = vec![0.0; space.n_dofs(Kind::Pressure)];
        self.ops.apply_coupling(space, &v, &mut bv);
        if let Some(data) = &gb {
            axpy(1.0, &data.coeffs, &mut bv);
        }
        let prhs: Vec<f64> = bv.iter().map(|x| -x / tau).collect();
        let mut phi = self.state.phi.clone();
        let report = projected_cg(
            &self.ops.pressure_poisson,
            &prhs,
            &mut phi.coeffs,
            &self.kernel,
            &self.poisson_pc,
            &self.config.solver,
        )?;
        if !report.converged {
            return Err(Error::SolveFailure {
                step: step_new,
                stage: "pressure",
                iterations: report.iterations,
                residual: report.residual,
            });
        }

        // Corrections. The pressure update subtracts the divergence defect
        // delta mu (b(v, .) + gb), whose pressure-space representer is
        // exactly the corrected bv vector; the velocity update adds
        // tau b(., phi).
        let mut v_minus_u_prev_sq = 0.0;
        for i in 0..v.coeffs.len() {
            let d = v.coeffs[i] - self.state.u.coeffs[i];
            v_minus_u_prev_sq += d * d;
        }
        let dm = self.config.delta * mu;
        for i in 0..bv.len() {
            let incr = dm * bv[i];
            self.state.p.coeffs[i] += phi.coeffs[i] - incr;
            self.state.s.coeffs[i] += incr;
        }
        self.state.u.coeffs.copy_from_slice(&v.coeffs);
        self.ops.add_coupling_transpose(space, &phi.coeffs, &mut self.state.u, tau);
        self.state.v = v;
        self.state.phi = phi;
        self.state.step = step_new;
        self.state.time = t_new;

        // Diagnostics.
        let v_dg = space.dg_norm_velocity(
            &self.state.v,
            self.ops.params.sigma_int,
            self.ops.params.sigma_bnd,
        );
        self.dg_v_cum += v_dg.grad_sq + v_dg.penalty_sq;
        let mut xi = self.state.p.clone();
        axpy(1.0, &self.state.s.coeffs, &mut xi.coeffs);
        let mut a_xi = vec![0.0; xi.coeffs.len()];
        self.ops.pressure_poisson.matvec(&xi.coeffs, &mut a_xi);
        let u_sq = dot(&self.state.u.coeffs, &self.state.u.coeffs);
        let s_sq = dot(&self.state.s.coeffs, &self.state.s.coeffs);
        let energy = u_sq
            + self.ops.params.kappa() * mu * tau * self.dg_v_cum
            + tau * tau * dot(&xi.coeffs, &a_xi)
            + tau / dm * s_sq;
        Ok(StepDiagnostics {
            step: step_new,
            time: t_new,
            u_l2: u_sq.sqrt(),
            v_dg,
            energy,
            v_minus_u_prev: v_minus_u_prev_sq.sqrt(),
            pressure_mean: space.mean(&self.state.p),
            momentum_iterations,
            pressure_iterations: report.iterations,
        })
    }

    /// Advances until `time >= t_end - tau/2` (whole steps only).
    pub fn advance_to(&mut self, t_end: f64) -> Result<StepDiagnostics> {
        let n_steps = ((t_end - self.state.time) / self.config.tau).round() as usize;
        let mut last = None;
        for _ in 0..n_steps {
            last = Some(self.advance()?);
        }
        last.ok_or_else(|| Error::invalid("advance_to performed no steps".to_string()))
    }

    /// Verifies the exact discrete identities on the current state. Only
    /// meaningful after at least one step.
    pub fn check_identities(&self) -> IdentityReport {
        let space = &self.space;
        let tau = self.config.tau;
        let np = space.n_dofs(Kind::Pressure);
        let nv = space.n_dofs(Kind::Velocity);
        let phi = &self.state.phi;

        let mut bu = vec![0.0; np];
        self.ops.apply_coupling(space, &self.state.u, &mut bu);
        let mut bv = vec![0.0; np];
        self.ops.apply_coupling(space, &self.state.v, &mut bv);
        let gb = match &self.problem.boundary {
            Some(g) => {
                let t = self.state.time;
                let gt = |x: [f64; 3]| g(t, x);
                coupling_data(space, &self.kernel, &gt).coeffs
            }
            None => vec![0.0; np],
        };
        let mut a_phi = vec![0.0; np];
        self.ops.pressure_poisson.matvec(&phi.coeffs, &mut a_phi);
        let mut pen_phi = vec![0.0; np];
        self.ops.poisson_penalty.matvec(&phi.coeffs, &mut pen_phi);
        // (G[phi], G[q]) for all q: lift phi then lift back transposed.
        let g_phi = self.ops.lift_jumps_to_velocity(space, phi);
        let mut gg_phi = vec![0.0; np];
        for c in 0..space.dim() {
            self.ops.lift_grad[c].matvec_transpose_add(
                &g_phi.coeffs[c * nv..(c + 1) * nv],
                &mut gg_phi,
                1.0,
            );
        }

        let scale = norm2(&bv)
            .max(tau * norm2(&a_phi))
            .max(tau * norm2(&pen_phi))
            .max(norm2(&bu))
            .max(norm2(&gb))
            .max(1e-300);
        let mut r_split = 0.0;
        let mut r_div = 0.0;
        for i in 0..np {
            let s = bu[i] - (bv[i] + tau * a_phi[i] - tau * pen_phi[i] + tau * gg_phi[i]);
            let d = bu[i] - (-gb[i] - tau * pen_phi[i] + tau * gg_phi[i]);
            r_split += s * s;
            r_div += d * d;
        }

        // Coupling identities on the current fields.
        let div_v = self.ops.divergence(space, &self.state.v);
        let lift_v = self.ops.lift_jumps_to_pressure(space, &self.state.v, false);
        let mut r_cdiv = 0.0;
        for i in 0..np {
            let d = bv[i] - (div_v.coeffs[i] - lift_v.coeffs[i]);
            r_cdiv += d * d;
        }
        let mut bt_phi = space.zero_vector();
        self.ops.add_coupling_transpose(space, &phi.coeffs, &mut bt_phi, 1.0);
        let grad_phi = self.ops.gradient(space, phi);
        let mut r_cgrad = 0.0;
        for i in 0..bt_phi.coeffs.len() {
            let d = bt_phi.coeffs[i] - (-grad_phi.coeffs[i] + g_phi.coeffs[i]);
            r_cgrad += d * d;
        }
        let scale_v = norm2(&bt_phi.coeffs).max(norm2(&grad_phi.coeffs)).max(1e-300);

        IdentityReport {
            splitting_residual: r_split.sqrt() / scale,
            divergence_residual: r_div.sqrt() / scale,
            coupling_div_residual: r_cdiv.sqrt() / scale,
            coupling_grad_residual: r_cgrad.sqrt() / scale_v,
            pressure_mean: space.mean(&self.state.p),
        }
    }
}

/// Boundary-data correction of the coupling form with its constant mode
/// deflated: the exact boundary flux of incompressible data integrates to
/// zero, but only up to quadrature error, which would otherwise make the
/// singular pressure system inconsistent.
fn coupling_data(
    space: &Space,
    kernel: &[f64],
    g: &dyn Fn([f64; 3]) -> [f64; 3],
) -> DgScalarField {
    let mut data = space.zero_scalar(Kind::Pressure);
    coupling_data_rhs(space, g, &mut data);
    let k = dot(kernel, &data.coeffs);
    axpy(-k, kernel, &mut data.coeffs);
    data
}
