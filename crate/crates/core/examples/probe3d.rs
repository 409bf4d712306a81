//! Scratch probe: linearized coupled stability of the 3D acceptance
//! configuration, and the first steps of the Beltrami run.

use dgns::forms::FormParams;
use dgns::mesh::build_mesh;
use dgns::mms::ManufacturedSolution;
use dgns::solver::SolverConfig;
use dgns::space::Space;
use dgns::stepping::{Problem, StepConfig, Stepper};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

fn params(sigma_tilde: f64) -> FormParams {
    FormParams {
        epsilon: -1.0,
        sigma_int: 64.0,
        sigma_bnd: 128.0,
        sigma_tilde,
    }
}

fn config(tau: f64) -> StepConfig {
    StepConfig {
        tau,
        mu: 1.0,
        delta: StepConfig::default_delta(3),
        solver: SolverConfig {
            rtol: 1e-12,
            atol: 1e-30,
            max_iters: 20000,
            restart: 60,
        },
    }
}

fn main() {
    let tau = 1.0 / 8192.0;

    // Tiny random initial data, no forcing, no boundary data: the growth of
    // |u| exposes the spectral radius of the linearized coupled step.
    for sigma_tilde in [2.0, 6.0, 12.0] {
        let mesh = build_mesh(3, [0.0; 3], [1.0; 3], [2, 2, 2]).unwrap();
        let space = Space::new(mesh, 2, 1, 4).unwrap();
        let mut stepper =
            Stepper::new(space, params(sigma_tilde), config(tau), Problem::homogeneous())
                .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let coeffs: Vec<f64> = (0..stepper.state.u.coeffs.len())
            .map(|_| 1e-8 * rng.random_range(-1.0..1.0))
            .collect();
        stepper.set_initial_coeffs(&coeffs).unwrap();
        let mut norms = Vec::new();
        for _ in 0..30 {
            match stepper.advance() {
                Ok(d) => norms.push(d.u_l2),
                Err(e) => {
                    println!("sigma_tilde = {sigma_tilde}: step failed: {e}");
                    break;
                }
            }
        }
        if norms.len() == 30 {
            println!(
                "3d linearized sigma_tilde = {sigma_tilde}: |u| at 1,10,20,30 = \
                 {:.3e} {:.3e} {:.3e} {:.3e}",
                norms[0], norms[9], norms[19], norms[29]
            );
        }
    }

    // Literal first steps of the P2-P1 Beltrami acceptance case at h = 1/2.
    let sol = ManufacturedSolution::Beltrami3d;
    let mesh = build_mesh(3, [0.0; 3], [1.0; 3], [2, 2, 2]).unwrap();
    let space = Space::new(mesh, 2, 1, 4).unwrap();
    let problem = Problem {
        forcing: None,
        boundary: Some(Box::new(move |t, x| sol.velocity(t, x))),
    };
    let mut stepper = Stepper::new(space, params(2.0), config(tau), problem).unwrap();
    stepper.set_initial_velocity(&|x| sol.velocity(0.0, x));
    for n in 1..=40 {
        match stepper.advance() {
            Ok(d) => {
                if n % 5 == 0 {
                    println!("beltrami step {n}: |u| = {:.6e}", d.u_l2);
                }
            }
            Err(e) => {
                println!("beltrami step {n} failed: {e}");
                break;
            }
        }
    }
}
