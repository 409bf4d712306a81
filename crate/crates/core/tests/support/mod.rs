//! Shared helpers for the integration tests: a self-contained dense
//! reference implementation of one scheme step, and a guarded run driver
//! that stops cleanly when a configuration diverges.
//!
//! The dense implementation is deliberately independent of the library
//! internals: closed-form Legendre polynomials instead of recurrences, a
//! hard-coded five-point Gauss rule, dense matrices assembled directly from
//! the weak-form definitions, LU factorizations instead of iterative
//! solvers, and a Lagrange multiplier instead of a projected Krylov method
//! for the zero-mean pressure constraint. Agreement with the library is
//! then evaluated pointwise, so no basis ordering or normalization is
//! shared either.

#![allow(dead_code)]

use dgns::config::parse_config;
use dgns::run::build_stepper;
use dgns::RunConfig;
use nalgebra::{DMatrix, DVector};

/// Five-point Gauss-Legendre nodes on [0, 1]; exact through degree nine.
pub const GAUSS_X: [f64; 5] = [
    0.046910077030668004,
    0.23076534494715845,
    0.5,
    0.7692346550528415,
    0.953089922969332,
];
pub const GAUSS_W: [f64; 5] = [
    0.11846344252809454,
    0.23931433524968324,
    0.28444444444444444,
    0.23931433524968324,
    0.11846344252809454,
];

/// L2-orthonormal Legendre polynomials on [0, 1] in closed form.
fn leg(a: usize, t: f64) -> f64 {
    match a {
        0 => 1.0,
        1 => 3f64.sqrt() * (2.0 * t - 1.0),
        2 => 5f64.sqrt() * (6.0 * t * t - 6.0 * t + 1.0),
        3 => 7f64.sqrt() * ((20.0 * t * t - 30.0 * t) * t + 12.0 * t - 1.0),
        _ => panic!("dense reference basis stops at degree three"),
    }
}

fn dleg(a: usize, t: f64) -> f64 {
    match a {
        0 => 0.0,
        1 => 2.0 * 3f64.sqrt(),
        2 => 5f64.sqrt() * (12.0 * t - 6.0),
        3 => 7f64.sqrt() * (60.0 * t * t - 60.0 * t + 12.0),
        _ => panic!("dense reference basis stops at degree three"),
    }
}

fn indices(dim: usize, k: usize) -> Vec<[usize; 3]> {
    let mut out = Vec::new();
    let kz = if dim > 2 { k } else { 0 };
    for az in 0..=kz {
        for ay in 0..=(k - az) {
            for ax in 0..=(k - az - ay) {
                out.push([ax, ay, az]);
            }
        }
    }
    out
}

/// One face of the reference grid. For interior faces the normal points
/// from `e1` (lower element) to `e2`; for boundary faces it is outward.
struct OFace {
    axis: usize,
    e1: usize,
    e2: Option<usize>,
    sign: f64,
}

/// Dense reference discretization on a uniform grid of the unit box.
pub struct Oracle {
    pub dim: usize,
    pub cells: usize,
    pub h: f64,
    idx_v: Vec<[usize; 3]>,
    idx_p: Vec<[usize; 3]>,
    faces: Vec<OFace>,
    nel: usize,
}

/// Result of one dense step.
pub struct OracleStep {
    pub v: Vec<Vec<f64>>,
    pub phi: Vec<f64>,
    pub p: Vec<f64>,
    pub u: Vec<Vec<f64>>,
}



impl Oracle {
    pub fn new(dim: usize, cells: usize, k1: usize, k2: usize) -> Oracle {
        assert!(dim == 2 || dim == 3);
        let mut faces = Vec::new();
        let nel_of = |ix: usize, iy: usize, iz: usize| ix + cells * (iy + cells * iz);
        let planes = |axis: usize, faces: &mut Vec<OFace>| {
            let ext = |a: usize| if a < dim { cells } else { 1 };
            for iz in 0..ext(2) {
                for iy in 0..ext(1) {
                    for ix in 0..ext(0) {
                        let cell = [ix, iy, iz];
                        // Lower boundary face of the first layer, interior
                        // face to the previous element otherwise; the last
                        // layer adds its upper boundary face.
                        if cell[axis] == 0 {
                            faces.push(OFace {
                                axis,
                                e1: nel_of(ix, iy, iz),
                                e2: None,
                                sign: -1.0,
                            });
                        } else {
                            let mut prev = cell;
                            prev[axis] -= 1;
                            faces.push(OFace {
                                axis,
                                e1: nel_of(prev[0], prev[1], prev[2]),
                                e2: Some(nel_of(ix, iy, iz)),
                                sign: 1.0,
                            });
                        }
                        if cell[axis] == cells - 1 {
                            faces.push(OFace {
                                axis,
                                e1: nel_of(ix, iy, iz),
                                e2: None,
                                sign: 1.0,
                            });
                        }
                    }
                }
            }
        };
        let mut all = Vec::new();
        for axis in 0..dim {
            planes(axis, &mut all);
        }
        faces.extend(all);
        Oracle {
            dim,
            cells,
            h: 1.0 / cells as f64,
            idx_v: indices(dim, k1),
            idx_p: indices(dim, k2),
            faces,
            nel: cells.pow(dim as u32),
        }
    }

    pub fn nbv(&self) -> usize {
        self.idx_v.len()
    }

    pub fn nbp(&self) -> usize {
        self.idx_p.len()
    }

    fn corner(&self, e: usize) -> [f64; 3] {
        let ix = e % self.cells;
        let iy = (e / self.cells) % self.cells;
        let iz = e / (self.cells * self.cells);
        [ix as f64 * self.h, iy as f64 * self.h, iz as f64 * self.h]
    }

    fn shape(&self, idx: &[[usize; 3]], j: usize, xh: [f64; 3]) -> f64 {
        let mut v = 1.0;
        for c in 0..self.dim {
            v *= leg(idx[j][c], xh[c]);
        }
        v
    }

    /// Value and physical gradient of a reference shape function.
    fn shape_grad(&self, idx: &[[usize; 3]], j: usize, xh: [f64; 3]) -> (f64, [f64; 3]) {
        let mut vals = [1.0; 3];
        let mut ders = [0.0; 3];
        for c in 0..self.dim {
            vals[c] = leg(idx[j][c], xh[c]);
            ders[c] = dleg(idx[j][c], xh[c]);
        }
        let mut v = 1.0;
        for c in 0..self.dim {
            v *= vals[c];
        }
        let mut g = [0.0; 3];
        for c in 0..self.dim {
            let mut d = ders[c] / self.h;
            for o in 0..self.dim {
                if o != c {
                    d *= vals[o];
                }
            }
            g[c] = d;
        }
        (v, g)
    }

    /// Iterates the tensor quadrature of the element volume.
    fn volume_quad(&self, mut body: impl FnMut([f64; 3], f64)) {
        let vol = self.h.powi(self.dim as i32);
        let nz = if self.dim > 2 { 5 } else { 1 };
        for qz in 0..nz {
            for qy in 0..5 {
                for qx in 0..5 {
                    let xh = [GAUSS_X[qx], GAUSS_X[qy], if self.dim > 2 { GAUSS_X[qz] } else { 0.5 }];
                    let mut w = GAUSS_W[qx] * GAUSS_W[qy] * vol;
                    if self.dim > 2 {
                        w *= GAUSS_W[qz];
                    }
                    body(xh, w);
                }
            }
        }
    }

    /// Iterates the tensor quadrature of one face; yields the in-face
    /// reference coordinates (the `axis` entry is left at zero).
    fn face_quad(&self, axis: usize, mut body: impl FnMut([f64; 3], f64)) {
        let area = self.h.powi(self.dim as i32 - 1);
        let tang: Vec<usize> = (0..self.dim).filter(|c| *c != axis).collect();
        let n2 = if tang.len() > 1 { 5 } else { 1 };
        for q2 in 0..n2 {
            for q1 in 0..5 {
                let mut xh = [0.0; 3];
                xh[tang[0]] = GAUSS_X[q1];
                let mut w = GAUSS_W[q1] * area;
                if tang.len() > 1 {
                    xh[tang[1]] = GAUSS_X[q2];
                    w *= GAUSS_W[q2];
                }
                body(xh, w);
            }
        }
    }

    /// Mass matrix of one scalar space, block diagonal over elements.
    pub fn mass(&self, idx: &[[usize; 3]]) -> DMatrix<f64> {
        let nb = idx.len();
        let n = self.nel * nb;
        let mut m = DMatrix::zeros(n, n);
        self.volume_quad(|xh, w| {
            for i in 0..nb {
                let vi = self.shape(idx, i, xh);
                for j in 0..nb {
                    let vj = self.shape(idx, j, xh);
                    for e in 0..self.nel {
                        m[(e * nb + i, e * nb + j)] += w * vi * vj;
                    }
                }
            }
        });
        m
    }

    /// L2 projection of a scalar function onto one of the spaces.
    pub fn project(&self, idx: &[[usize; 3]], f: &dyn Fn([f64; 3]) -> f64) -> Vec<f64> {
        let nb = idx.len();
        let mut rhs = DVector::zeros(self.nel * nb);
        for e in 0..self.nel {
            let x0 = self.corner(e);
            self.volume_quad(|xh, w| {
                let x = [x0[0] + self.h * xh[0], x0[1] + self.h * xh[1], x0[2] + self.h * xh[2]];
                let fx = f(x);
                for i in 0..nb {
                    rhs[e * nb + i] += w * fx * self.shape(idx, i, xh);
                }
            });
        }
        let m = self.mass(idx);
        m.lu().solve(&rhs).expect("mass matrix is invertible").as_slice().to_vec()
    }

    /// Evaluates a scalar coefficient vector at a physical point.
    pub fn eval(&self, idx: &[[usize; 3]], coeffs: &[f64], x: [f64; 3]) -> f64 {
        let nb = idx.len();
        let mut cell = [0usize; 3];
        let mut xh = [0.0; 3];
        for c in 0..self.dim {
            let i = ((x[c] / self.h).floor() as usize).min(self.cells - 1);
            cell[c] = i;
            xh[c] = x[c] / self.h - i as f64;
        }
        let e = cell[0] + self.cells * (cell[1] + self.cells * cell[2]);
        (0..nb).map(|i| coeffs[e * nb + i] * self.shape(idx, i, xh)).sum()
    }

    pub fn eval_velocity(&self, coeffs: &[Vec<f64>], x: [f64; 3], c: usize) -> f64 {
        self.eval(&self.idx_v, &coeffs[c], x)
    }

    pub fn eval_pressure(&self, coeffs: &[f64], x: [f64; 3]) -> f64 {
        self.eval(&self.idx_p, coeffs, x)
    }

    /// Velocity value and divergence at a reference point of an element.
    fn velocity_at(&self, w: &[Vec<f64>], e: usize, xh: [f64; 3]) -> ([f64; 3], f64) {
        let nb = self.nbv();
        let mut val = [0.0; 3];
        let mut div = 0.0;
        for j in 0..nb {
            let (v, g) = self.shape_grad(&self.idx_v, j, xh);
            for c in 0..self.dim {
                val[c] += w[c][e * nb + j] * v;
                div += w[c][e * nb + j] * g[c];
            }
        }
        (val, div)
    }

    /// Scalar interior-penalty diffusion matrix: volume gradients plus
    /// consistency, symmetrization, and penalty terms on all faces.
    pub fn diffusion(&self, eps: f64, sigma_int: f64, sigma_bnd: f64) -> DMatrix<f64> {
        let nb = self.nbv();
        let n = self.nel * nb;
        let mut a = DMatrix::zeros(n, n);
        self.volume_quad(|xh, w| {
            let grads: Vec<[f64; 3]> =
                (0..nb).map(|j| self.shape_grad(&self.idx_v, j, xh).1).collect();
            for i in 0..nb {
                for j in 0..nb {
                    let mut dot = 0.0;
                    for c in 0..self.dim {
                        dot += grads[i][c] * grads[j][c];
                    }
                    for e in 0..self.nel {
                        a[(e * nb + i, e * nb + j)] += w * dot;
                    }
                }
            }
        });
        for face in &self.faces {
            let axis = face.axis;
            self.face_quad(axis, |mut xh, w| {
                match face.e2 {
                    Some(e2) => {
                        // Traces from e1 at the upper side, from e2 at the
                        // lower side; normal is +axis.
                        let mut tr = |side: f64| {
                            xh[axis] = side;
                            (0..nb)
                                .map(|j| {
                                    let (v, g) = self.shape_grad(&self.idx_v, j, xh);
                                    (v, g[axis])
                                })
                                .collect::<Vec<_>>()
                        };
                        let t1 = tr(1.0);
                        let t2 = tr(0.0);
                        let pen = sigma_int / self.h;
                        let dofs = [(face.e1, 1.0, &t1), (e2, -1.0, &t2)];
                        for (er, sr, trr) in dofs {
                            for (ec, sc, trc) in dofs {
                                for i in 0..nb {
                                    for j in 0..nb {
                                        // -{dn v}[theta] + eps {dn theta}[v]
                                        // + sigma/h [v][theta]
                                        let val = -0.5 * trc[j].1 * sr * trr[i].0
                                            + eps * 0.5 * trr[i].1 * sc * trc[j].0
                                            + pen * sr * trr[i].0 * sc * trc[j].0;
                                        a[(er * nb + i, ec * nb + j)] += w * val;
                                    }
                                }
                            }
                        }
                    }
                    None => {
                        xh[axis] = if face.sign > 0.0 { 1.0 } else { 0.0 };
                        let tr: Vec<(f64, f64)> = (0..nb)
                            .map(|j| {
                                let (v, g) = self.shape_grad(&self.idx_v, j, xh);
                                (v, face.sign * g[axis])
                            })
                            .collect();
                        let pen = sigma_bnd / self.h;
                        let e = face.e1;
                        for i in 0..nb {
                            for j in 0..nb {
                                let val = -tr[j].1 * tr[i].0
                                    + eps * tr[i].1 * tr[j].0
                                    + pen * tr[i].0 * tr[j].0;
                                a[(e * nb + i, e * nb + j)] += w * val;
                            }
                        }
                    }
                }
            });
        }
        a
    }

    /// Boundary-data terms the diffusion discretization moves to the right
    /// side: eps (dn theta) g + sigma/h g theta, one velocity component.
    pub fn diffusion_rhs(&self, eps: f64, sigma_bnd: f64, g: &dyn Fn([f64; 3]) -> f64) -> Vec<f64> {
        let nb = self.nbv();
        let mut rhs = vec![0.0; self.nel * nb];
        for face in &self.faces {
            if face.e2.is_some() {
                continue;
            }
            let axis = face.axis;
            let e = face.e1;
            let x0 = self.corner(e);
            self.face_quad(axis, |mut xh, w| {
                xh[axis] = if face.sign > 0.0 { 1.0 } else { 0.0 };
                let x = [x0[0] + self.h * xh[0], x0[1] + self.h * xh[1], x0[2] + self.h * xh[2]];
                let gx = g(x);
                for i in 0..nb {
                    let (v, gr) = self.shape_grad(&self.idx_v, i, xh);
                    rhs[e * nb + i] +=
                        w * gx * (eps * face.sign * gr[axis] + sigma_bnd / self.h * v);
                }
            });
        }
        rhs
    }

    /// Scalar convection matrix for a given advecting field: volume
    /// transport and divergence terms, the face skew-symmetrizer, and
    /// upwinding with exterior traces taken as zero on the boundary.
    pub fn convection(&self, w: &[Vec<f64>]) -> DMatrix<f64> {
        let nb = self.nbv();
        let n = self.nel * nb;
        let mut a = DMatrix::zeros(n, n);
        for e in 0..self.nel {
            self.volume_quad(|xh, wq| {
                let (wv, wdiv) = self.velocity_at(w, e, xh);
                let vals: Vec<(f64, [f64; 3])> =
                    (0..nb).map(|j| self.shape_grad(&self.idx_v, j, xh)).collect();
                for i in 0..nb {
                    for j in 0..nb {
                        let mut adv = 0.0;
                        for c in 0..self.dim {
                            adv += wv[c] * vals[j].1[c];
                        }
                        a[(e * nb + i, e * nb + j)] +=
                            wq * (adv + 0.5 * wdiv * vals[j].0) * vals[i].0;
                    }
                }
            });
        }
        for face in &self.faces {
            let axis = face.axis;
            self.face_quad(axis, |mut xh, wq| match face.e2 {
                Some(e2) => {
                    xh[axis] = 1.0;
                    let (w1, _) = self.velocity_at(w, face.e1, xh);
                    let v1: Vec<f64> = (0..nb).map(|j| self.shape(&self.idx_v, j, xh)).collect();
                    xh[axis] = 0.0;
                    let (w2, _) = self.velocity_at(w, e2, xh);
                    let v2: Vec<f64> = (0..nb).map(|j| self.shape(&self.idx_v, j, xh)).collect();
                    let jump_wn = w1[axis] - w2[axis];
                    let avg_wn = 0.5 * (w1[axis] + w2[axis]);
                    for i in 0..nb {
                        for j in 0..nb {
                            // -1/2 [w].n {v theta} couples equal sides only.
                            a[(face.e1 * nb + i, face.e1 * nb + j)] +=
                                wq * (-0.25 * jump_wn) * v1[j] * v1[i];
                            a[(e2 * nb + i, e2 * nb + j)] += wq * (-0.25 * jump_wn) * v2[j] * v2[i];
                        }
                    }
                    // Upwind: the side whose outward normal sees inflow
                    // tests the interior minus exterior trace.
                    if avg_wn < 0.0 {
                        for i in 0..nb {
                            for j in 0..nb {
                                a[(face.e1 * nb + i, face.e1 * nb + j)] +=
                                    wq * avg_wn.abs() * v1[j] * v1[i];
                                a[(face.e1 * nb + i, e2 * nb + j)] -=
                                    wq * avg_wn.abs() * v2[j] * v1[i];
                            }
                        }
                    } else if avg_wn > 0.0 {
                        for i in 0..nb {
                            for j in 0..nb {
                                a[(e2 * nb + i, e2 * nb + j)] += wq * avg_wn * v2[j] * v2[i];
                                a[(e2 * nb + i, face.e1 * nb + j)] -= wq * avg_wn * v1[j] * v2[i];
                            }
                        }
                    }
                }
                None => {
                    xh[axis] = if face.sign > 0.0 { 1.0 } else { 0.0 };
                    let (wv, _) = self.velocity_at(w, face.e1, xh);
                    let wn = face.sign * wv[axis];
                    let tr: Vec<f64> = (0..nb).map(|j| self.shape(&self.idx_v, j, xh)).collect();
                    let coef = -0.5 * wn + if wn < 0.0 { -wn } else { 0.0 };
                    let e = face.e1;
                    for i in 0..nb {
                        for j in 0..nb {
                            a[(e * nb + i, e * nb + j)] += wq * coef * tr[j] * tr[i];
                        }
                    }
                }
            });
        }
        a
    }

    /// Boundary-data terms of the convection discretization, one velocity
    /// component: upwind inflow data plus the skew-symmetrizer data.
    pub fn convection_rhs(&self, w: &[Vec<f64>], g: &dyn Fn([f64; 3]) -> f64) -> Vec<f64> {
        let nb = self.nbv();
        let mut rhs = vec![0.0; self.nel * nb];
        for face in &self.faces {
            if face.e2.is_some() {
                continue;
            }
            let axis = face.axis;
            let e = face.e1;
            let x0 = self.corner(e);
            self.face_quad(axis, |mut xh, wq| {
                xh[axis] = if face.sign > 0.0 { 1.0 } else { 0.0 };
                let (wv, _) = self.velocity_at(w, e, xh);
                let wn = face.sign * wv[axis];
                let x = [x0[0] + self.h * xh[0], x0[1] + self.h * xh[1], x0[2] + self.h * xh[2]];
                let gx = g(x);
                let coef = -0.5 * wn + if wn < 0.0 { -wn } else { 0.0 };
                for i in 0..nb {
                    rhs[e * nb + i] += wq * coef * gx * self.shape(&self.idx_v, i, xh);
                }
            });
        }
        rhs
    }

    /// Velocity-pressure coupling, one matrix per velocity component:
    /// b(theta, q) = sum_E (div theta, q) - sum_faces ([theta].n, {q}).
    pub fn coupling(&self) -> Vec<DMatrix<f64>> {
        let nbv = self.nbv();
        let nbp = self.nbp();
        let mut bs: Vec<DMatrix<f64>> =
            (0..self.dim).map(|_| DMatrix::zeros(self.nel * nbp, self.nel * nbv)).collect();
        for e in 0..self.nel {
            self.volume_quad(|xh, w| {
                for c in 0..self.dim {
                    for i in 0..nbp {
                        let q = self.shape(&self.idx_p, i, xh);
                        for j in 0..nbv {
                            let g = self.shape_grad(&self.idx_v, j, xh).1;
                            bs[c][(e * nbp + i, e * nbv + j)] += w * g[c] * q;
                        }
                    }
                }
            });
        }
        for face in &self.faces {
            let axis = face.axis;
            self.face_quad(axis, |mut xh, w| match face.e2 {
                Some(e2) => {
                    xh[axis] = 1.0;
                    let v1: Vec<f64> = (0..nbv).map(|j| self.shape(&self.idx_v, j, xh)).collect();
                    let q1: Vec<f64> = (0..nbp).map(|i| self.shape(&self.idx_p, i, xh)).collect();
                    xh[axis] = 0.0;
                    let v2: Vec<f64> = (0..nbv).map(|j| self.shape(&self.idx_v, j, xh)).collect();
                    let q2: Vec<f64> = (0..nbp).map(|i| self.shape(&self.idx_p, i, xh)).collect();
                    // {q} picks one half of whichever side the test dof
                    // lives on; [theta].n couples both trial sides.
                    for i in 0..nbp {
                        let (r1, r2) = (face.e1 * nbp + i, e2 * nbp + i);
                        for j in 0..nbv {
                            bs[axis][(r1, face.e1 * nbv + j)] -= w * v1[j] * 0.5 * q1[i];
                            bs[axis][(r1, e2 * nbv + j)] += w * v2[j] * 0.5 * q1[i];
                            bs[axis][(r2, face.e1 * nbv + j)] -= w * v1[j] * 0.5 * q2[i];
                            bs[axis][(r2, e2 * nbv + j)] += w * v2[j] * 0.5 * q2[i];
                        }
                    }
                }
                None => {
                    xh[axis] = if face.sign > 0.0 { 1.0 } else { 0.0 };
                    let e = face.e1;
                    for i in 0..nbp {
                        let q = self.shape(&self.idx_p, i, xh);
                        for j in 0..nbv {
                            let v = self.shape(&self.idx_v, j, xh);
                            bs[axis][(e * nbp + i, e * nbv + j)] -= w * face.sign * v * q;
                        }
                    }
                }
            });
        }
        bs
    }

    /// Boundary-data correction of the coupling form: (g . n, q) over the
    /// boundary, so that b(v, .) + gb measures divergence against the data.
    pub fn coupling_rhs(&self, g: &dyn Fn([f64; 3]) -> [f64; 3]) -> Vec<f64> {
        let nbp = self.nbp();
        let mut rhs = vec![0.0; self.nel * nbp];
        for face in &self.faces {
            if face.e2.is_some() {
                continue;
            }
            let axis = face.axis;
            let e = face.e1;
            let x0 = self.corner(e);
            self.face_quad(axis, |mut xh, w| {
                xh[axis] = if face.sign > 0.0 { 1.0 } else { 0.0 };
                let x = [x0[0] + self.h * xh[0], x0[1] + self.h * xh[1], x0[2] + self.h * xh[2]];
                let gn = face.sign * g(x)[axis];
                for i in 0..nbp {
                    rhs[e * nbp + i] += w * gn * self.shape(&self.idx_p, i, xh);
                }
            });
        }
        rhs
    }

    /// Pressure Poisson operator: volume gradients plus symmetric interior
    /// penalty terms on interior faces only. Kernel is the global constant.
    pub fn pressure_poisson(&self, sigma_tilde: f64) -> DMatrix<f64> {
        let nb = self.nbp();
        let n = self.nel * nb;
        let mut a = DMatrix::zeros(n, n);
        self.volume_quad(|xh, w| {
            let grads: Vec<[f64; 3]> =
                (0..nb).map(|j| self.shape_grad(&self.idx_p, j, xh).1).collect();
            for i in 0..nb {
                for j in 0..nb {
                    let mut dot = 0.0;
                    for c in 0..self.dim {
                        dot += grads[i][c] * grads[j][c];
                    }
                    for e in 0..self.nel {
                        a[(e * nb + i, e * nb + j)] += w * dot;
                    }
                }
            }
        });
        for face in &self.faces {
            let Some(e2) = face.e2 else { continue };
            let axis = face.axis;
            self.face_quad(axis, |mut xh, w| {
                let mut tr = |side: f64| {
                    xh[axis] = side;
                    (0..nb)
                        .map(|j| {
                            let (v, g) = self.shape_grad(&self.idx_p, j, xh);
                            (v, g[axis])
                        })
                        .collect::<Vec<_>>()
                };
                let t1 = tr(1.0);
                let t2 = tr(0.0);
                let pen = sigma_tilde / self.h;
                let dofs = [(face.e1, 1.0, &t1), (e2, -1.0, &t2)];
                for (er, sr, trr) in dofs {
                    for (ec, sc, trc) in dofs {
                        for i in 0..nb {
                            for j in 0..nb {
                                let val = -0.5 * trc[j].1 * sr * trr[i].0
                                    - 0.5 * trr[i].1 * sc * trc[j].0
                                    + pen * sr * trr[i].0 * sc * trc[j].0;
                                a[(er * nb + i, ec * nb + j)] += w * val;
                            }
                        }
                    }
                }
            });
        }
        a
    }

    /// One full scheme step from (u0, p0) by dense direct solves.
    #[allow(clippy::too_many_arguments)]
    pub fn step(
        &self,
        u0: &dyn Fn([f64; 3]) -> [f64; 3],
        p0: &dyn Fn([f64; 3]) -> f64,
        forcing: &dyn Fn(f64, [f64; 3]) -> [f64; 3],
        boundary: &dyn Fn(f64, [f64; 3]) -> [f64; 3],
        eps: f64,
        sigma: [f64; 3],
        tau: f64,
        mu: f64,
        delta: f64,
    ) -> OracleStep {
        let nbv = self.nbv();
        let nv = self.nel * nbv;
        let t_new = tau;

        let u_prev: Vec<Vec<f64>> = (0..self.dim)
            .map(|c| self.project(&self.idx_v, &|x| u0(x)[c]))
            .collect();
        let p_prev = self.project(&self.idx_p, p0);

        let mass_v = self.mass(&self.idx_v);
        let mass_p = self.mass(&self.idx_p);
        let diff = self.diffusion(eps, sigma[0], sigma[1]);
        let conv = self.convection(&u_prev);
        let bs = self.coupling();

        // Momentum: (M + tau C + tau mu D) v_c = M u_c + tau B_c^T p
        //           + tau (f_c, theta) + tau mu diff_data + tau conv_data.
        let a = &mass_v + tau * &conv + (tau * mu) * &diff;
        let lu = a.lu();
        let mut v: Vec<Vec<f64>> = Vec::new();
        for c in 0..self.dim {
            let mut rhs = &mass_v * DVector::from_column_slice(&u_prev[c]);
            rhs += tau * bs[c].transpose() * DVector::from_column_slice(&p_prev);
            let fc = self.project(&self.idx_v, &|x| forcing(t_new, x)[c]);
            rhs += tau * (&mass_v * DVector::from_column_slice(&fc));
            let dd = self.diffusion_rhs(eps, sigma[1], &|x| boundary(t_new, x)[c]);
            rhs += (tau * mu) * DVector::from_column_slice(&dd);
            let cd = self.convection_rhs(&u_prev, &|x| boundary(t_new, x)[c]);
            rhs += tau * DVector::from_column_slice(&cd);
            v.push(lu.solve(&rhs).expect("momentum system is invertible").as_slice().to_vec());
        }

        // Divergence defect of v against the boundary data.
        let nbp = self.nbp();
        let np = self.nel * nbp;
        let mut bv = DVector::zeros(np);
        for c in 0..self.dim {
            bv += &bs[c] * DVector::from_column_slice(&v[c]);
        }
        bv += DVector::from_column_slice(&self.coupling_rhs(&|x| boundary(t_new, x)));

        // Zero-mean pressure increment via a Lagrange multiplier; the
        // constraint row holds the integrals of the basis functions.
        let ap = self.pressure_poisson(sigma[2]);
        let mut mean = DVector::zeros(np);
        self.volume_quad(|xh, w| {
            for i in 0..nbp {
                let v = w * self.shape(&self.idx_p, i, xh);
                for e in 0..self.nel {
                    mean[e * nbp + i] += v;
                }
            }
        });
        let mut aug = DMatrix::zeros(np + 1, np + 1);
        aug.view_mut((0, 0), (np, np)).copy_from(&ap);
        for i in 0..np {
            aug[(i, np)] = mean[i];
            aug[(np, i)] = mean[i];
        }
        let mut rhs = DVector::zeros(np + 1);
        for i in 0..np {
            rhs[i] = -bv[i] / tau;
        }
        let sol = aug.lu().solve(&rhs).expect("augmented Poisson system is invertible");
        let phi: Vec<f64> = sol.as_slice()[..np].to_vec();

        // Updates: p gains phi minus the weighted divergence defect; u gains
        // the discrete pressure gradient of phi.
        let mp_lu = mass_p.lu();
        let defect = mp_lu.solve(&bv).expect("mass matrix is invertible");
        let mut p = p_prev.clone();
        for i in 0..np {
            p[i] += phi[i] - delta * mu * defect[i];
        }
        let mv_lu = mass_v.lu();
        let phiv = DVector::from_column_slice(&phi);
        let mut u = v.clone();
        for c in 0..self.dim {
            let grad = mv_lu
                .solve(&(bs[c].transpose() * &phiv))
                .expect("mass matrix is invertible");
            for i in 0..nv {
                u[c][i] += tau * grad[i];
            }
        }
        OracleStep { v, phi, p, u }
    }
}

/// Worst pointwise disagreement between a library field and an oracle
/// field, sampled on an interior lattice of every element, normalized by
/// the largest sampled magnitude.
pub struct FieldDiff {
    pub max_diff: f64,
    pub max_val: f64,
}

impl FieldDiff {
    pub fn relative(&self) -> f64 {
        self.max_diff / self.max_val.max(1e-30)
    }
}

const LATTICE: [f64; 3] = [0.15, 0.5, 0.85];

pub fn compare_scalar(
    space: &dgns::Space,
    field: &dgns::DgScalarField,
    oracle: &Oracle,
    coeffs: &[f64],
) -> FieldDiff {
    let mut diff = FieldDiff { max_diff: 0.0, max_val: 0.0 };
    let nz = if space.dim() > 2 { 3 } else { 1 };
    for e in 0..space.mesh.n_elements() {
        for iz in 0..nz {
            for iy in 0..3 {
                for ix in 0..3 {
                    let xh = [
                        LATTICE[ix],
                        LATTICE[iy],
                        if space.dim() > 2 { LATTICE[iz] } else { 0.0 },
                    ];
                    let x = space.phys_point(e, xh);
                    let a = space.eval_scalar(field, e, xh);
                    let b = oracle.eval_pressure(coeffs, x);
                    diff.max_diff = diff.max_diff.max((a - b).abs());
                    diff.max_val = diff.max_val.max(b.abs());
                }
            }
        }
    }
    diff
}

pub fn compare_vector(
    space: &dgns::Space,
    field: &dgns::DgVectorField,
    oracle: &Oracle,
    coeffs: &[Vec<f64>],
) -> FieldDiff {
    let mut diff = FieldDiff { max_diff: 0.0, max_val: 0.0 };
    let nz = if space.dim() > 2 { 3 } else { 1 };
    for e in 0..space.mesh.n_elements() {
        for iz in 0..nz {
            for iy in 0..3 {
                for ix in 0..3 {
                    let xh = [
                        LATTICE[ix],
                        LATTICE[iy],
                        if space.dim() > 2 { LATTICE[iz] } else { 0.0 },
                    ];
                    let x = space.phys_point(e, xh);
                    let a = space.eval_vector(field, e, xh);
                    for c in 0..space.dim() {
                        let b = oracle.eval_velocity(coeffs, x, c);
                        diff.max_diff = diff.max_diff.max((a[c] - b).abs());
                        diff.max_val = diff.max_val.max(b.abs());
                    }
                }
            }
        }
    }
    diff
}

/// Outcome of a guarded run: either completed with final-time errors, or
/// stopped early because the solution grew past the guard or a solve broke.
pub enum Guarded {
    Completed { err_v: f64, err_u: f64, err_p: f64 },
    Diverged { step: usize, u_l2: f64 },
    Failed { step: usize, message: String },
}

impl Guarded {
    pub fn describe(&self) -> String {
        match self {
            Guarded::Completed { err_v, err_u, err_p } => {
                format!("err_v={err_v:.4e} err_u={err_u:.4e} err_p={err_p:.4e}")
            }
            Guarded::Diverged { step, u_l2 } => {
                format!("diverged: |u| = {u_l2:.3e} at step {step}")
            }
            Guarded::Failed { step, message } => format!("solve failed at step {step}: {message}"),
        }
    }
}

pub fn parse(text: &str) -> RunConfig {
    parse_config(text).expect("test configuration parses")
}

/// Runs a configuration to its final time, aborting once the velocity norm
/// exceeds `guard` times its initial value.
pub fn run_guarded(config: &RunConfig, guard: f64) -> Guarded {
    let mut stepper = build_stepper(config).expect("configuration builds");
    let limit = guard * stepper.state.u.l2_norm().max(1.0);
    let n_steps = (config.t_end / config.tau).round() as usize;
    for _ in 0..n_steps {
        match stepper.advance() {
            Ok(diag) => {
                if !diag.u_l2.is_finite() || diag.u_l2 > limit {
                    return Guarded::Diverged { step: diag.step, u_l2: diag.u_l2 };
                }
            }
            Err(err) => {
                return Guarded::Failed { step: stepper.state.step + 1, message: err.to_string() }
            }
        }
    }
    let solution = config.solution().expect("known manufactured solution");
    let t = stepper.state.time;
    let space = &stepper.space;
    Guarded::Completed {
        err_v: space.l2_error_vector(&stepper.state.v, &|x| solution.velocity(t, x)),
        err_u: space.l2_error_vector(&stepper.state.u, &|x| solution.velocity(t, x)),
        err_p: space.l2_error_scalar(&stepper.state.p, &|x| solution.pressure(t, x)),
    }
}

/// Velocity and pressure errors of a completed run, panicking on failure.
pub fn run_errors(config: &RunConfig) -> (f64, f64, f64) {
    match run_guarded(config, 1e6) {
        Guarded::Completed { err_v, err_u, err_p } => (err_v, err_u, err_p),
        other => panic!("run expected to complete, got: {}", other.describe()),
    }
}

/// Advances one full scheme step on a 2x2x2 mesh with k1 = 2, k2 = 1 and
/// compares every stage field against the dense direct-solve reference.
/// All data is polynomial of degree at most two, so both quadratures are
/// exact and agreement is limited only by the iterative solver tolerance.
/// The advecting field has strictly positive components, which keeps the
/// upwind inflow sets whole faces. The boundary data is divergence free,
/// so the compatibility integral of g . n vanishes exactly.
/// Returns the relative sup-norm difference per field on a sample lattice.
pub fn one_step_comparison(eps: f64) -> Vec<(&'static str, f64)> {
    use dgns::forms::FormParams;
    use dgns::mesh::build_mesh;
    use dgns::solver::SolverConfig;
    use dgns::space::{Kind, Space};
    use dgns::stepping::{Problem, StepConfig, Stepper};

    let u0 = |x: [f64; 3]| {
        [
            0.6 + 0.2 * x[0] + 0.1 * x[1] * x[2] + 0.05 * x[0] * x[0],
            0.7 + 0.1 * x[2] + 0.05 * x[0] * x[1],
            0.55 + 0.15 * x[1] + 0.1 * x[0] * x[2],
        ]
    };
    let p0 = |x: [f64; 3]| x[0] + 2.0 * x[1] - 1.5 * x[2] - 0.75;
    let forcing = |t: f64, x: [f64; 3]| {
        let s = 1.0 + t;
        [s * (0.3 + x[0] - x[1] * x[1]), s * (x[2] + 0.1 * x[0] * x[1] - 0.2), s * (0.1 + x[1])]
    };
    let boundary = |t: f64, x: [f64; 3]| {
        [
            0.3 + 0.1 * t + x[1] * x[1] - x[2],
            0.4 + x[2] * x[2] - x[0],
            0.5 + 0.2 * t + x[0] * x[0] - x[1],
        ]
    };

    let (cells, k1, k2) = (2usize, 2usize, 1usize);
    let (sigma_int, sigma_bnd, sigma_tilde) = (64.0, 128.0, 6.0);
    let (tau, mu, delta) = (1.0 / 320.0, 0.7, 0.08);

    let mesh = build_mesh(3, [0.0; 3], [1.0; 3], [cells; 3]).expect("mesh builds");
    let space = Space::new(mesh, k1, k2, k1 + 2).expect("space builds");
    let params = FormParams { epsilon: eps, sigma_int, sigma_bnd, sigma_tilde };
    let solver = SolverConfig { rtol: 1e-13, ..SolverConfig::default() };
    let config = StepConfig { tau, mu, delta, solver };
    let problem = Problem {
        forcing: Some(Box::new(forcing)),
        boundary: Some(Box::new(boundary)),
    };
    let mut stepper = Stepper::new(space, params, config, problem).expect("stepper builds");
    stepper.set_initial_velocity(&u0);
    stepper.state.p = stepper.space.project_scalar(Kind::Pressure, &p0);
    stepper.advance().expect("one step succeeds");

    let oracle = Oracle::new(3, cells, k1, k2);
    let dense = oracle.step(
        &u0,
        &p0,
        &forcing,
        &boundary,
        eps,
        [sigma_int, sigma_bnd, sigma_tilde],
        tau,
        mu,
        delta,
    );

    let space = &stepper.space;
    vec![
        ("v", compare_vector(space, &stepper.state.v, &oracle, &dense.v).relative()),
        ("phi", compare_scalar(space, &stepper.state.phi, &oracle, &dense.phi).relative()),
        ("p", compare_scalar(space, &stepper.state.p, &oracle, &dense.p).relative()),
        ("u", compare_vector(space, &stepper.state.u, &oracle, &dense.u).relative()),
    ]
}
