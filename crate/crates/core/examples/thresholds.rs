//! Scratch probe: smallest stable pressure penalty for each degree pair, by
//! watching the growth of tiny random data under the homogeneous scheme.

use dgns::forms::FormParams;
use dgns::mesh::build_mesh;
use dgns::solver::SolverConfig;
use dgns::space::Space;
use dgns::stepping::{Problem, StepConfig, Stepper};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

fn main() {
    let cases = [
        (1usize, 0usize, 8.0, 16.0, vec![0.5, 1.0, 1.5, 2.0, 3.0, 4.0]),
        (2, 1, 64.0, 128.0, vec![2.0, 3.0, 4.0, 5.0, 6.0, 8.0]),
        (3, 2, 128.0, 256.0, vec![4.0, 6.0, 8.0, 10.0, 12.0, 16.0]),
    ];
    for (k1, k2, si, sb, tildes) in cases {
        for st in tildes {
            let mesh = build_mesh(3, [0.0; 3], [1.0; 3], [2, 2, 2]).unwrap();
            let space = Space::new(mesh, k1, k2, k1 + 2).unwrap();
            let params = FormParams {
                epsilon: -1.0,
                sigma_int: si,
                sigma_bnd: sb,
                sigma_tilde: st,
            };
            let config = StepConfig {
                tau: 1.0 / 1024.0,
                mu: 1.0,
                delta: StepConfig::default_delta(3),
                solver: SolverConfig {
                    rtol: 1e-12,
                    atol: 1e-30,
                    max_iters: 20000,
                    restart: 60,
                },
            };
            let mut stepper =
                Stepper::new(space, params, config, Problem::homogeneous()).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(11);
            let coeffs: Vec<f64> = (0..stepper.state.u.coeffs.len())
                .map(|_| 1e-8 * rng.random_range(-1.0..1.0))
                .collect();
            stepper.set_initial_coeffs(&coeffs).unwrap();
            let mut first = 0.0;
            let mut last = 0.0;
            let mut failed = false;
            for n in 0..40 {
                match stepper.advance() {
                    Ok(d) => {
                        if n == 9 {
                            first = d.u_l2;
                        }
                        last = d.u_l2;
                    }
                    Err(e) => {
                        println!("P{k1}-P{k2} sigma_tilde {st}: failed: {e}");
                        failed = true;
                        break;
                    }
                }
            }
            if !failed {
                let rate = (last / first).powf(1.0 / 30.0);
                println!(
                    "P{k1}-P{k2} sigma_tilde {st}: |u| step10 {first:.3e} step40 {last:.3e} \
                     growth/step {rate:.4}"
                );
            }
        }
    }
}
