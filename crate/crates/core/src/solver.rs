//! Iterative linear solvers: restarted GMRES for the nonsymmetric momentum
//! systems and a projected conjugate gradient method for the pressure
//! system, whose matrix is singular with the global constant as kernel.
//!
//! Both use a block-Jacobi preconditioner built from dense LU factors of the
//! diagonal blocks. Tolerances default well below the identity checks run on
//! the scheme, so algebraic error never masks a discretization bug.

use nalgebra::{DMatrix, DVector, Dyn, LU};

use crate::error::Error;
use crate::space::{Kind, Space};
use crate::sparse::{axpy, dot, norm2, BlockCsr};
use crate::Result;

#[derive(Debug, Clone, Copy)]
pub struct SolverConfig {
    /// Stop when the residual is at or below rtol * |rhs|.
    pub rtol: f64,
    /// Absolute floor of the stopping threshold.
    pub atol: f64,
    pub max_iters: usize,
    /// GMRES restart length.
    pub restart: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            rtol: 1e-11,
            atol: 1e-14,
            max_iters: 5000,
            restart: 60,
        }
    }
}

/// Outcome of one linear solve.
#[derive(Debug, Clone, Copy)]
pub struct SolveReport {
    pub iterations: usize,
    pub residual: f64,
    pub converged: bool,
}

/// Block-Jacobi preconditioner: dense LU of each diagonal block. A singular
/// diagonal block (pressure system with piecewise constants on a mesh
/// without interior faces) falls back to the identity on that block.
pub struct BlockJacobi {
    nb: usize,
    factors: Vec<Option<LU<f64, Dyn, Dyn>>>,
}

impl BlockJacobi {
    pub fn new(m: &BlockCsr) -> BlockJacobi {
        assert_eq!(m.nb_row, m.nb_col);
        let nb = m.nb_row;
        let factors = (0..m.n_block_rows)
            .map(|e| {
                let block = m.block(m.block_slot(e, e));
                let lu = DMatrix::from_row_slice(nb, nb, block).lu();
                if lu.determinant().abs() > 1e-300 {
                    Some(lu)
                } else {
                    None
                }
            })
            .collect();
        BlockJacobi { nb, factors }
    }

    pub fn apply(&self, x: &[f64], y: &mut [f64]) {
        let nb = self.nb;
        for (e, factor) in self.factors.iter().enumerate() {
            let xs = &x[e * nb..(e + 1) * nb];
            let ys = &mut y[e * nb..(e + 1) * nb];
            match factor {
                Some(lu) => {
                    let sol = lu.solve(&DVector::from_column_slice(xs)).unwrap();
                    ys.copy_from_slice(sol.as_slice());
                }
                None => ys.copy_from_slice(xs),
            }
        }
    }
}

fn givens(a: f64, b: f64) -> (f64, f64) {
    if b == 0.0 {
        (1.0, 0.0)
    } else {
        let r = a.hypot(b);
        (a / r, b / r)
    }
}

/// Right-preconditioned restarted GMRES. `x` carries the initial guess in
/// and the solution out; the reported residual is the true residual of the
/// unpreconditioned system.
pub fn gmres(a: &BlockCsr, b: &[f64], x: &mut [f64], pc: &BlockJacobi, cfg: &SolverConfig) -> SolveReport {
    let n = b.len();
    let target = (cfg.rtol * norm2(b)).max(cfg.atol);
    let mut r = vec![0.0; n];
    a.matvec(x, &mut r);
    for i in 0..n {
        r[i] = b[i] - r[i];
    }
    let mut rnorm = norm2(&r);
    if rnorm <= target {
        return SolveReport { iterations: 0, residual: rnorm, converged: true };
    }

    let m = cfg.restart.clamp(1, n);
    let mut v = vec![vec![0.0; n]; m + 1];
    let mut z = vec![vec![0.0; n]; m];
    let mut h = vec![0.0; (m + 1) * m];
    let mut cs = vec![0.0; m];
    let mut sn = vec![0.0; m];
    let mut g = vec![0.0; m + 1];
    let mut iters = 0;

    while iters < cfg.max_iters {
        for i in 0..n {
            v[0][i] = r[i] / rnorm;
        }
        g.fill(0.0);
        g[0] = rnorm;
        let mut k_used = 0;
        let mut breakdown = false;
        for k in 0..m {
            if iters >= cfg.max_iters {
                break;
            }
            iters += 1;
            pc.apply(&v[k], &mut z[k]);
            {
                let (head, tail) = v.split_at_mut(k + 1);
                let w = &mut tail[0];
                a.matvec(&z[k], w);
                // Modified Gram-Schmidt.
                for (j, vj) in head.iter().enumerate() {
                    let hjk = dot(vj, w);
                    h[j * m + k] = hjk;
                    axpy(-hjk, vj, w);
                }
                let wnorm = norm2(w);
                h[(k + 1) * m + k] = wnorm;
                if wnorm > 1e-300 {
                    for wi in w.iter_mut() {
                        *wi /= wnorm;
                    }
                } else {
                    breakdown = true;
                }
            }
            for j in 0..k {
                let t = cs[j] * h[j * m + k] + sn[j] * h[(j + 1) * m + k];
                h[(j + 1) * m + k] = -sn[j] * h[j * m + k] + cs[j] * h[(j + 1) * m + k];
                h[j * m + k] = t;
            }
            let (c, s) = givens(h[k * m + k], h[(k + 1) * m + k]);
            cs[k] = c;
            sn[k] = s;
            h[k * m + k] = c * h[k * m + k] + s * h[(k + 1) * m + k];
            h[(k + 1) * m + k] = 0.0;
            g[k + 1] = -s * g[k];
            g[k] *= c;
            k_used = k + 1;
            if g[k + 1].abs() <= target || breakdown {
                break;
            }
        }

        // Solve the least-squares system and update x.
        let mut y = vec![0.0; k_used];
        for i in (0..k_used).rev() {
            let mut s = g[i];
            for (j, yj) in y.iter().enumerate().take(k_used).skip(i + 1) {
                s -= h[i * m + j] * yj;
            }
            y[i] = s / h[i * m + i];
        }
        for (j, yj) in y.iter().enumerate() {
            axpy(*yj, &z[j], x);
        }

        a.matvec(x, &mut r);
        for i in 0..n {
            r[i] = b[i] - r[i];
        }
        rnorm = norm2(&r);
        if rnorm <= target {
            return SolveReport { iterations: iters, residual: rnorm, converged: true };
        }
        if breakdown {
            break;
        }
    }
    SolveReport { iterations: iters, residual: rnorm, converged: rnorm <= target }
}

/// Unit kernel vector of the pressure matrix: the global constant, whose
/// coefficient on each element sits on the constant mode with weight
/// sqrt(|E|), normalized to unit length.
pub fn constant_kernel(space: &Space) -> Vec<f64> {
    let nbp = space.basis_p.len();
    let mut k = vec![0.0; space.n_dofs(Kind::Pressure)];
    for (e, el) in space.mesh.elements.iter().enumerate() {
        k[e * nbp] = el.volume.sqrt();
    }
    let norm = norm2(&k);
    for v in k.iter_mut() {
        *v /= norm;
    }
    k
}

fn project_out(k: &[f64], v: &mut [f64]) {
    let c = dot(k, v);
    axpy(-c, k, v);
}

/// Preconditioned conjugate gradients restricted to the orthogonal
/// complement of the kernel direction `k` (unit length). Fails with
/// `NonzeroMean` if the right-hand side has a kernel component beyond
/// roundoff, since the unprojected system would then be inconsistent.
pub fn projected_cg(
    a: &BlockCsr,
    b: &[f64],
    x: &mut [f64],
    k: &[f64],
    pc: &BlockJacobi,
    cfg: &SolverConfig,
) -> Result<SolveReport> {
    let n = b.len();
    let bnorm = norm2(b);
    let mean = dot(k, b);
    if mean.abs() > 1e-10 * bnorm.max(1.0) {
        return Err(Error::NonzeroMean { mean });
    }
    let mut bp = b.to_vec();
    project_out(k, &mut bp);
    let target = (cfg.rtol * norm2(&bp)).max(cfg.atol);

    project_out(k, x);
    let mut r = vec![0.0; n];
    a.matvec(x, &mut r);
    for i in 0..n {
        r[i] = bp[i] - r[i];
    }
    project_out(k, &mut r);
    let mut rnorm = norm2(&r);
    if rnorm <= target {
        return Ok(SolveReport { iterations: 0, residual: rnorm, converged: true });
    }

    let mut z = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut ap = vec![0.0; n];
    let mut rho_old = 0.0;
    let mut iters = 0;
    while iters < cfg.max_iters {
        iters += 1;
        pc.apply(&r, &mut z);
        project_out(k, &mut z);
        let rho = dot(&r, &z);
        if iters == 1 {
            p.copy_from_slice(&z);
        } else {
            let beta = rho / rho_old;
            for i in 0..n {
                p[i] = z[i] + beta * p[i];
            }
        }
        rho_old = rho;
        a.matvec(&p, &mut ap);
        project_out(k, &mut ap);
        let alpha = rho / dot(&p, &ap);
        axpy(alpha, &p, x);
        axpy(-alpha, &ap, &mut r);
        project_out(k, &mut r);
        rnorm = norm2(&r);
        if rnorm <= target {
            break;
        }
    }
    Ok(SolveReport { iterations: iters, residual: rnorm, converged: rnorm <= target })
}
