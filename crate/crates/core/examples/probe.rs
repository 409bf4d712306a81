//! Scratch probe: spectral radius of the projection map and boundary-data
//! consistency of the coupling correction.

use dgns::forms::{coupling_data_rhs, FormParams, Operators};
use dgns::mesh::build_mesh;
use dgns::mms::ManufacturedSolution;
use dgns::solver::{constant_kernel, projected_cg, BlockJacobi, SolverConfig};
use dgns::space::{Kind, Space};
use dgns::sparse::{axpy, dot, norm2};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

fn main() {
    let pi = std::f64::consts::PI;
    let mesh = build_mesh(2, [0.0; 3], [pi, pi, 0.0], [4, 4, 1]).unwrap();
    let space = Space::new(mesh, 2, 1, 4).unwrap();
    for sigma_tilde in [2.0, 5.25, 8.0, 32.0] {
        let params = FormParams {
            epsilon: -1.0,
            sigma_int: 64.0,
            sigma_bnd: 128.0,
            sigma_tilde,
        };
        let ops = Operators::new(&space, params).unwrap();
        let kernel = constant_kernel(&space);
        let pc = BlockJacobi::new(&ops.pressure_poisson);
        let cfg = SolverConfig {
            rtol: 1e-13,
            atol: 1e-30,
            max_iters: 20000,
            restart: 60,
        };

        // Power iteration on T v = v - B^T A^{-1} B v.
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut v = space.zero_vector();
        for c in v.coeffs.iter_mut() {
            *c = rng.random_range(-1.0..1.0);
        }
        let np = space.n_dofs(Kind::Pressure);
        let mut rho = 0.0;
        for _ in 0..60 {
            let nv = norm2(&v.coeffs);
            for c in v.coeffs.iter_mut() {
                *c /= nv;
            }
            let mut bv = vec![0.0; np];
            ops.apply_coupling(&space, &v, &mut bv);
            let mut phi = space.zero_scalar(Kind::Pressure);
            let _ = projected_cg(
                &ops.pressure_poisson,
                &bv,
                &mut phi.coeffs,
                &kernel,
                &pc,
                &cfg,
            )
            .unwrap();
            // v <- v - B^T phi.
            ops.add_coupling_transpose(&space, &phi.coeffs, &mut v, -1.0);
            rho = norm2(&v.coeffs);
        }
        println!("sigma_tilde = {sigma_tilde}: ||T v|| after normalize = {rho:.6}");
    }

    // Full coupled homogeneous step map at the Taylor-Green parameters:
    // random initial velocity, f = 0, g = 0, track the state norm.
    for sigma_tilde in [2.0, 32.0] {
        let mesh = build_mesh(2, [0.0; 3], [pi, pi, 0.0], [4, 4, 1]).unwrap();
        let space = Space::new(mesh, 2, 1, 4).unwrap();
        let params = FormParams {
            epsilon: -1.0,
            sigma_int: 64.0,
            sigma_bnd: 128.0,
            sigma_tilde,
        };
        let config = dgns::stepping::StepConfig {
            tau: 1.0 / 512.0,
            mu: 1.0,
            delta: dgns::stepping::StepConfig::default_delta(2),
            solver: SolverConfig {
                rtol: 1e-12,
                atol: 1e-30,
                max_iters: 20000,
                restart: 60,
            },
        };
        let mut stepper = dgns::stepping::Stepper::new(
            space,
            params,
            config,
            dgns::stepping::Problem::homogeneous(),
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let coeffs: Vec<f64> = (0..stepper.state.u.coeffs.len())
            .map(|_| rng.random_range(-1.0..1.0))
            .collect();
        stepper.set_initial_coeffs(&coeffs).unwrap();
        let mut norms = Vec::new();
        for _ in 0..40 {
            let d = stepper.advance().unwrap();
            norms.push(d.u_l2);
        }
        println!(
            "coupled map sigma_tilde = {sigma_tilde}: |u| at steps 1,5,10,20,40 = \
             {:.4e} {:.4e} {:.4e} {:.4e} {:.4e}",
            norms[0], norms[4], norms[9], norms[19], norms[39]
        );
    }

    // Consistency: B (Pi u_exact) + gb at t = 0 for Taylor-Green.
    let sol = ManufacturedSolution::TaylorGreen2d { mu: 1.0 };
    let params = FormParams {
        epsilon: -1.0,
        sigma_int: 64.0,
        sigma_bnd: 128.0,
        sigma_tilde: 2.0,
    };
    let mesh2 = build_mesh(2, [0.0; 3], [pi, pi, 0.0], [4, 4, 1]).unwrap();
    let space2 = Space::new(mesh2, 2, 1, 4).unwrap();
    let ops2 = Operators::new(&space2, params).unwrap();
    let kernel2 = constant_kernel(&space2);
    let u0 = space2.project_vector(&|x| sol.velocity(0.0, x));
    let np = space2.n_dofs(Kind::Pressure);
    let mut bu = vec![0.0; np];
    ops2.apply_coupling(&space2, &u0, &mut bu);
    let mut gb = space2.zero_scalar(Kind::Pressure);
    coupling_data_rhs(&space2, &|x| sol.velocity(0.0, x), &mut gb);
    let k = dot(&kernel2, &gb.coeffs);
    axpy(-k, &kernel2, &mut gb.coeffs);
    let mut defect = bu.clone();
    axpy(1.0, &gb.coeffs, &mut defect);
    println!(
        "||B u0|| = {:.6e}  ||gb|| = {:.6e}  ||B u0 + gb|| = {:.6e}",
        norm2(&bu),
        norm2(&gb.coeffs),
        norm2(&defect)
    );
}
