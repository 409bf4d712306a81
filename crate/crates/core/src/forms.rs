//! Assembly of the bilinear and trilinear forms of the splitting scheme.
//!
//! All operators act componentwise on velocity, so velocity-space matrices
//! are scalar: one matrix serves every component. On a uniform mesh the
//! element volume blocks and the face blocks for a given axis (and side, for
//! boundary faces) are identical, so each local block is integrated once and
//! scattered to every matching face.
//!
//! Conventions: on interior faces the normal points from element_1 into
//! element_2, jumps are (trace from element_1) - (trace from element_2), and
//! averages carry factor 1/2. On boundary faces jump and average are the
//! trace and the normal points outward.

use crate::error::Error;
use crate::mesh::Face;
use crate::space::{BasisTables, DgScalarField, DgVectorField, Kind, Space};
use crate::sparse::BlockCsr;
use crate::Result;

/// Penalty and symmetrization parameters of the spatial forms.
#[derive(Debug, Clone, Copy)]
pub struct FormParams {
    /// Symmetrization of the velocity diffusion form: -1 (symmetric),
    /// 0 (incomplete), or 1 (nonsymmetric).
    pub epsilon: f64,
    /// Velocity jump penalty on interior faces.
    pub sigma_int: f64,
    /// Velocity jump penalty on boundary faces.
    pub sigma_bnd: f64,
    /// Pressure jump penalty (interior faces only).
    pub sigma_tilde: f64,
}

impl FormParams {
    pub fn validate(&self) -> Result<()> {
        if ![-1.0, 0.0, 1.0].contains(&self.epsilon) {
            return Err(Error::invalid(format!(
                "epsilon must be -1, 0, or 1, got {}",
                self.epsilon
            )));
        }
        for (name, v) in [
            ("sigma_int", self.sigma_int),
            ("sigma_bnd", self.sigma_bnd),
            ("sigma_tilde", self.sigma_tilde),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::invalid(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }

    /// Coercivity constant of the diffusion form: 1 for epsilon = 1, 1/2 for
    /// epsilon in {-1, 0} (assuming the penalty is large enough).
    pub fn kappa(&self) -> f64 {
        if self.epsilon == 1.0 {
            1.0
        } else {
            0.5
        }
    }
}

/// Which terms of the convection form to assemble.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConvectionPart {
    /// Transport plus upwinding (the form used by the scheme).
    Full,
    /// Volume transport and the centered face flux only.
    Transport,
    /// The signed upwind correction alone; Full = Transport - Upwind.
    Upwind,
}

/// Time-independent operators of the scheme, assembled once per space.
#[derive(Debug, Clone)]
pub struct Operators {
    pub params: FormParams,
    /// Scalar interior-penalty diffusion matrix (velocity space, no
    /// viscosity factor).
    pub diffusion: BlockCsr,
    /// Pressure Poisson matrix: symmetric interior penalty over interior
    /// faces only; kernel is the global constant.
    pub pressure_poisson: BlockCsr,
    /// Jump-penalty part of `pressure_poisson`, kept separate for the
    /// discrete divergence identity checks.
    pub poisson_penalty: BlockCsr,
    /// Velocity-pressure coupling: coupling[c] maps component-c velocity
    /// coefficients to pressure test values of b.
    pub coupling: Vec<BlockCsr>,
    /// Jump lift into the pressure space over all faces (one matrix per
    /// velocity component; only faces perpendicular to c contribute).
    pub lift_full: Vec<BlockCsr>,
    /// Same lift restricted to interior faces.
    pub lift_int: Vec<BlockCsr>,
    /// Lift of pressure jumps into the velocity space (interior faces).
    /// Not the transpose of `lift_int`: the average and jump switch
    /// arguments, which flips the off-diagonal face blocks.
    pub lift_grad: Vec<BlockCsr>,
    /// Element-local divergence blocks, nbp x nbv per axis.
    pub div_local: Vec<Vec<f64>>,
    /// Element-local gradient blocks, nbv x nbp per axis.
    pub grad_local: Vec<Vec<f64>>,
}

/// Dense block quadruple for one interior face: (1,1), (1,2), (2,1), (2,2)
/// in the element_1/element_2 numbering of the face.
struct FaceBlocks {
    b11: Vec<f64>,
    b12: Vec<f64>,
    b21: Vec<f64>,
    b22: Vec<f64>,
}

fn scatter_interior(m: &mut BlockCsr, face: &Face, blocks: &FaceBlocks) {
    let e1 = face.element_1;
    let e2 = face.element_2.unwrap();
    for (br, bc, local) in [
        (e1, e1, &blocks.b11),
        (e1, e2, &blocks.b12),
        (e2, e1, &blocks.b21),
        (e2, e2, &blocks.b22),
    ] {
        let slot = m.block_slot(br, bc);
        let dst = m.block_mut(slot);
        for (d, s) in dst.iter_mut().zip(local) {
            *d += s;
        }
    }
}

fn scatter_diag(m: &mut BlockCsr, e: usize, local: &[f64]) {
    let slot = m.block_slot(e, e);
    let dst = m.block_mut(slot);
    for (d, s) in dst.iter_mut().zip(local) {
        *d += s;
    }
}

/// Interior-face blocks of an interior penalty form on one basis:
/// -int {grad u . n}[theta] + eps int {grad theta . n}[u]
/// + (penalty/h_e) int [u][theta], for a face perpendicular to `axis`.
fn penalty_face_blocks(
    space: &Space,
    t: &BasisTables,
    axis: usize,
    eps: f64,
    penalty_over_h: f64,
) -> FaceBlocks {
    let nb = t.nb;
    let nq = space.main.n_face;
    let w = &space.main.face_w[axis];
    let mut b = FaceBlocks {
        b11: vec![0.0; nb * nb],
        b12: vec![0.0; nb * nb],
        b21: vec![0.0; nb * nb],
        b22: vec![0.0; nb * nb],
    };
    for q in 0..nq {
        let wq = w[q];
        for i in 0..nb {
            // Trace of element_1 comes from its upper side (side 1),
            // element_2 from its lower side (side 0).
            let v1i = t.fv(axis, 1, q, i);
            let v2i = t.fv(axis, 0, q, i);
            let d1i = t.fg(axis, 1, q, i, axis);
            let d2i = t.fg(axis, 0, q, i, axis);
            for j in 0..nb {
                let v1j = t.fv(axis, 1, q, j);
                let v2j = t.fv(axis, 0, q, j);
                let d1j = t.fg(axis, 1, q, j, axis);
                let d2j = t.fg(axis, 0, q, j, axis);
                b.b11[i * nb + j] += wq
                    * (-0.5 * v1i * d1j + 0.5 * eps * d1i * v1j + penalty_over_h * v1i * v1j);
                b.b12[i * nb + j] += wq
                    * (-0.5 * v1i * d2j - 0.5 * eps * d1i * v2j - penalty_over_h * v1i * v2j);
                b.b21[i * nb + j] += wq
                    * (0.5 * v2i * d1j + 0.5 * eps * d2i * v1j - penalty_over_h * v2i * v1j);
                b.b22[i * nb + j] += wq
                    * (0.5 * v2i * d2j - 0.5 * eps * d2i * v2j + penalty_over_h * v2i * v2j);
            }
        }
    }
    b
}

/// Penalty-only interior-face blocks: (penalty/h_e) int [u][theta].
fn penalty_only_face_blocks(
    space: &Space,
    t: &BasisTables,
    axis: usize,
    penalty_over_h: f64,
) -> FaceBlocks {
    let nb = t.nb;
    let nq = space.main.n_face;
    let w = &space.main.face_w[axis];
    let mut b = FaceBlocks {
        b11: vec![0.0; nb * nb],
        b12: vec![0.0; nb * nb],
        b21: vec![0.0; nb * nb],
        b22: vec![0.0; nb * nb],
    };
    for q in 0..nq {
        let wq = w[q];
        for i in 0..nb {
            let v1i = t.fv(axis, 1, q, i);
            let v2i = t.fv(axis, 0, q, i);
            for j in 0..nb {
                let v1j = t.fv(axis, 1, q, j);
                let v2j = t.fv(axis, 0, q, j);
                b.b11[i * nb + j] += wq * penalty_over_h * v1i * v1j;
                b.b12[i * nb + j] -= wq * penalty_over_h * v1i * v2j;
                b.b21[i * nb + j] -= wq * penalty_over_h * v2i * v1j;
                b.b22[i * nb + j] += wq * penalty_over_h * v2i * v2j;
            }
        }
    }
    b
}

/// Boundary-face block of the velocity diffusion form for a face on `side`
/// of its element, perpendicular to `axis`:
/// -int (grad u . n) theta + eps int (grad theta . n) u
/// + (penalty/h_e) int u theta, with n the outward normal.
fn diffusion_boundary_block(
    space: &Space,
    t: &BasisTables,
    axis: usize,
    side: usize,
    eps: f64,
    penalty_over_h: f64,
) -> Vec<f64> {
    let nb = t.nb;
    let nq = space.main.n_face;
    let w = &space.main.face_w[axis];
    let n_out = if side == 0 { -1.0 } else { 1.0 };
    let mut b = vec![0.0; nb * nb];
    for q in 0..nq {
        let wq = w[q];
        for i in 0..nb {
            let vi = t.fv(axis, side, q, i);
            let di = n_out * t.fg(axis, side, q, i, axis);
            for j in 0..nb {
                let vj = t.fv(axis, side, q, j);
                let dj = n_out * t.fg(axis, side, q, j, axis);
                b[i * nb + j] += wq * (-vi * dj + eps * di * vj + penalty_over_h * vi * vj);
            }
        }
    }
    b
}

/// Volume stiffness on one element (identical for all congruent elements).
fn volume_stiffness(space: &Space, t: &BasisTables) -> Vec<f64> {
    let nb = t.nb;
    let dim = space.dim();
    let mut k = vec![0.0; nb * nb];
    for q in 0..space.main.n_vol {
        let wq = space.main.vol_w[q];
        for i in 0..nb {
            for j in 0..nb {
                let mut g = 0.0;
                for a in 0..dim {
                    g += t.g(q, i, a) * t.g(q, j, a);
                }
                k[i * nb + j] += wq * g;
            }
        }
    }
    k
}

impl Operators {
    pub fn new(space: &Space, params: FormParams) -> Result<Operators> {
        params.validate()?;
        let mesh = &space.mesh;
        let dim = space.dim();
        let nbv = space.basis_v.len();
        let nbp = space.basis_p.len();
        let tv = &space.main.v;
        let tp = &space.main.p;

        // Velocity diffusion.
        let mut diffusion = BlockCsr::from_mesh(mesh, nbv, nbv, true);
        let k_vol = volume_stiffness(space, tv);
        for e in 0..mesh.n_elements() {
            scatter_diag(&mut diffusion, e, &k_vol);
        }
        for axis in 0..dim {
            let h_e = mesh.interior_faces.iter().chain(&mesh.boundary_faces)
                .find(|f| f.axis == axis)
                .map(|f| f.h_e)
                .unwrap();
            let blocks =
                penalty_face_blocks(space, tv, axis, params.epsilon, params.sigma_int / h_e);
            for face in mesh.interior_faces.iter().filter(|f| f.axis == axis) {
                scatter_interior(&mut diffusion, face, &blocks);
            }
            for side in 0..2 {
                let block = diffusion_boundary_block(
                    space,
                    tv,
                    axis,
                    side,
                    params.epsilon,
                    params.sigma_bnd / h_e,
                );
                for face in mesh
                    .boundary_faces
                    .iter()
                    .filter(|f| f.axis == axis && f.side_of(true) == side)
                {
                    scatter_diag(&mut diffusion, face.element_1, &block);
                }
            }
        }

        // Pressure Poisson: symmetric interior penalty, interior faces only.
        let mut pressure_poisson = BlockCsr::from_mesh(mesh, nbp, nbp, true);
        let mut poisson_penalty = BlockCsr::from_mesh(mesh, nbp, nbp, true);
        let k_vol_p = volume_stiffness(space, tp);
        for e in 0..mesh.n_elements() {
            scatter_diag(&mut pressure_poisson, e, &k_vol_p);
        }
        for axis in 0..dim {
            let Some(face0) = mesh.interior_faces.iter().find(|f| f.axis == axis) else {
                continue;
            };
            let blocks =
                penalty_face_blocks(space, tp, axis, -1.0, params.sigma_tilde / face0.h_e);
            let pen_blocks =
                penalty_only_face_blocks(space, tp, axis, params.sigma_tilde / face0.h_e);
            for face in mesh.interior_faces.iter().filter(|f| f.axis == axis) {
                scatter_interior(&mut pressure_poisson, face, &blocks);
                scatter_interior(&mut poisson_penalty, face, &pen_blocks);
            }
        }

        // Coupling b and jump lifts, one matrix per velocity component; only
        // faces perpendicular to the component's axis contribute, since the
        // face normal is axis-aligned.
        let mut coupling = Vec::with_capacity(dim);
        let mut lift_full = Vec::with_capacity(dim);
        let mut lift_int = Vec::with_capacity(dim);
        let mut lift_grad = Vec::with_capacity(dim);
        let mut div_local = Vec::with_capacity(dim);
        let mut grad_local = Vec::with_capacity(dim);
        for c in 0..dim {
            // Element-local divergence and gradient blocks.
            let mut d_loc = vec![0.0; nbp * nbv];
            let mut g_loc = vec![0.0; nbv * nbp];
            for q in 0..space.main.n_vol {
                let wq = space.main.vol_w[q];
                for i in 0..nbp {
                    for j in 0..nbv {
                        d_loc[i * nbv + j] += wq * tp.v(q, i) * tv.g(q, j, c);
                        g_loc[j * nbp + i] += wq * tv.v(q, j) * tp.g(q, i, c);
                    }
                }
            }

            let mut b_c = BlockCsr::from_mesh(mesh, nbp, nbv, true);
            let mut r_full_c = BlockCsr::from_mesh(mesh, nbp, nbv, true);
            let mut r_int_c = BlockCsr::from_mesh(mesh, nbp, nbv, true);
            let mut g_int_c = BlockCsr::from_mesh(mesh, nbv, nbp, true);
            for e in 0..mesh.n_elements() {
                scatter_diag(&mut b_c, e, &d_loc);
            }

            // Interior faces of axis c: {q}[v] n_c with n_c = +1.
            let nqf = space.main.n_face;
            let w = &space.main.face_w[c];
            let mut blocks = FaceBlocks {
                b11: vec![0.0; nbp * nbv],
                b12: vec![0.0; nbp * nbv],
                b21: vec![0.0; nbp * nbv],
                b22: vec![0.0; nbp * nbv],
            };
            let mut g_blocks = FaceBlocks {
                b11: vec![0.0; nbv * nbp],
                b12: vec![0.0; nbv * nbp],
                b21: vec![0.0; nbv * nbp],
                b22: vec![0.0; nbv * nbp],
            };
            for q in 0..nqf {
                let wq = w[q];
                for i in 0..nbp {
                    let p1i = tp.fv(c, 1, q, i);
                    let p2i = tp.fv(c, 0, q, i);
                    for j in 0..nbv {
                        let v1j = tv.fv(c, 1, q, j);
                        let v2j = tv.fv(c, 0, q, j);
                        // {q}[v].n: the average is the pressure test side.
                        blocks.b11[i * nbv + j] += wq * 0.5 * p1i * v1j;
                        blocks.b12[i * nbv + j] -= wq * 0.5 * p1i * v2j;
                        blocks.b21[i * nbv + j] += wq * 0.5 * p2i * v1j;
                        blocks.b22[i * nbv + j] -= wq * 0.5 * p2i * v2j;
                        // {theta}.n [q]: the average switches to the
                        // velocity test side, flipping the off-diagonals.
                        g_blocks.b11[j * nbp + i] += wq * 0.5 * v1j * p1i;
                        g_blocks.b12[j * nbp + i] -= wq * 0.5 * v1j * p2i;
                        g_blocks.b21[j * nbp + i] += wq * 0.5 * v2j * p1i;
                        g_blocks.b22[j * nbp + i] -= wq * 0.5 * v2j * p2i;
                    }
                }
            }
            for face in mesh.interior_faces.iter().filter(|f| f.axis == c) {
                scatter_interior(&mut r_full_c, face, &blocks);
                scatter_interior(&mut r_int_c, face, &blocks);
                scatter_interior(&mut g_int_c, face, &g_blocks);
                // b subtracts the lift term.
                let neg = FaceBlocks {
                    b11: blocks.b11.iter().map(|v| -v).collect(),
                    b12: blocks.b12.iter().map(|v| -v).collect(),
                    b21: blocks.b21.iter().map(|v| -v).collect(),
                    b22: blocks.b22.iter().map(|v| -v).collect(),
                };
                scatter_interior(&mut b_c, face, &neg);
            }

            // Boundary faces of axis c: trace values, outward normal sign.
            for side in 0..2 {
                let n_out = if side == 0 { -1.0 } else { 1.0 };
                let mut block = vec![0.0; nbp * nbv];
                for q in 0..nqf {
                    let wq = w[q];
                    for i in 0..nbp {
                        let pi = tp.fv(c, side, q, i);
                        for j in 0..nbv {
                            block[i * nbv + j] += wq * n_out * pi * tv.fv(c, side, q, j);
                        }
                    }
                }
                let neg: Vec<f64> = block.iter().map(|v| -v).collect();
                for face in mesh
                    .boundary_faces
                    .iter()
                    .filter(|f| f.axis == c && f.side_of(true) == side)
                {
                    scatter_diag(&mut r_full_c, face.element_1, &block);
                    scatter_diag(&mut b_c, face.element_1, &neg);
                }
            }

            coupling.push(b_c);
            lift_full.push(r_full_c);
            lift_int.push(r_int_c);
            lift_grad.push(g_int_c);
            div_local.push(d_loc);
            grad_local.push(g_loc);
        }

        Ok(Operators {
            params,
            diffusion,
            pressure_poisson,
            poisson_penalty,
            coupling,
            lift_full,
            lift_int,
            lift_grad,
            div_local,
            grad_local,
        })
    }

    /// Broken divergence, exact in the pressure space since k2 >= k1 - 1.
    pub fn divergence(&self, space: &Space, u: &DgVectorField) -> DgScalarField {
        let nbv = space.basis_v.len();
        let nbp = space.basis_p.len();
        let n = space.n_dofs(Kind::Velocity);
        let mut out = space.zero_scalar(Kind::Pressure);
        for e in 0..space.mesh.n_elements() {
            for c in 0..space.dim() {
                let d = &self.div_local[c];
                let uc = &u.coeffs[c * n + e * nbv..c * n + (e + 1) * nbv];
                for i in 0..nbp {
                    let mut acc = 0.0;
                    for j in 0..nbv {
                        acc += d[i * nbv + j] * uc[j];
                    }
                    out.coeffs[e * nbp + i] += acc;
                }
            }
        }
        out
    }

    /// Broken gradient, exact in the velocity space since k2 <= k1 + 1.
    pub fn gradient(&self, space: &Space, p: &DgScalarField) -> DgVectorField {
        assert_eq!(p.kind, Kind::Pressure);
        let nbv = space.basis_v.len();
        let nbp = space.basis_p.len();
        let n = space.n_dofs(Kind::Velocity);
        let mut out = space.zero_vector();
        for e in 0..space.mesh.n_elements() {
            for c in 0..space.dim() {
                let g = &self.grad_local[c];
                let pe = &p.coeffs[e * nbp..(e + 1) * nbp];
                for j in 0..nbv {
                    let mut acc = 0.0;
                    for i in 0..nbp {
                        acc += g[j * nbp + i] * pe[i];
                    }
                    out.coeffs[c * n + e * nbv + j] += acc;
                }
            }
        }
        out
    }

    /// Lift of velocity jumps into the pressure space: the field whose inner
    /// product with any q equals sum_e int {q}[u].n. Over all faces, or
    /// interior faces only.
    pub fn lift_jumps_to_pressure(
        &self,
        space: &Space,
        u: &DgVectorField,
        interior_only: bool,
    ) -> DgScalarField {
        let n = space.n_dofs(Kind::Velocity);
        let mut out = space.zero_scalar(Kind::Pressure);
        let mats = if interior_only { &self.lift_int } else { &self.lift_full };
        for c in 0..space.dim() {
            mats[c].matvec_add(&u.coeffs[c * n..(c + 1) * n], &mut out.coeffs, 1.0);
        }
        out
    }

    /// Lift of pressure jumps into the velocity space: the field whose inner
    /// product with any theta equals sum_{interior e} int {theta}.n [q].
    pub fn lift_jumps_to_velocity(&self, space: &Space, q: &DgScalarField) -> DgVectorField {
        assert_eq!(q.kind, Kind::Pressure);
        let n = space.n_dofs(Kind::Velocity);
        let mut out = space.zero_vector();
        for c in 0..space.dim() {
            self.lift_grad[c].matvec_add(&q.coeffs, &mut out.coeffs[c * n..(c + 1) * n], 1.0);
        }
        out
    }

    /// out = b(u, .) as a pressure-space vector of test values.
    pub fn apply_coupling(&self, space: &Space, u: &DgVectorField, out: &mut [f64]) {
        out.fill(0.0);
        let n = space.n_dofs(Kind::Velocity);
        for c in 0..space.dim() {
            self.coupling[c].matvec_add(&u.coeffs[c * n..(c + 1) * n], out, 1.0);
        }
    }

    /// u_out += alpha * b(., p) as a velocity-space vector of test values.
    pub fn add_coupling_transpose(
        &self,
        space: &Space,
        p: &[f64],
        u_out: &mut DgVectorField,
        alpha: f64,
    ) {
        let n = space.n_dofs(Kind::Velocity);
        for c in 0..space.dim() {
            self.coupling[c].matvec_transpose_add(
                p,
                &mut u_out.coeffs[c * n..(c + 1) * n],
                alpha,
            );
        }
    }
}

/// Empty matrix with the convection (= diffusion) pattern.
pub fn convection_pattern(space: &Space) -> BlockCsr {
    BlockCsr::from_mesh(&space.mesh, space.basis_v.len(), space.basis_v.len(), true)
}

/// Assemble the convection matrix for convecting field `w` (which also
/// selects the upwind sides) into `conv`, overwriting its values. The matrix
/// acts identically on each velocity component:
///   full:      sum_E int (w.grad v) theta + 1/2 (div w) v theta
///              - 1/2 sum_e int ([w].n) {v theta}
///              + sum_E int over inflow of |{w}.n| (v_int - v_ext) theta_int
///   transport: the first two lines only
///   upwind:    sum_E int over inflow of ({w}.n) (v_int - v_ext) theta_int,
/// so full = transport - upwind. Inflow is decided pointwise at each face
/// quadrature node by {w}.n < 0 strictly.
pub fn assemble_convection(
    space: &Space,
    w: &DgVectorField,
    part: ConvectionPart,
    conv: &mut BlockCsr,
) {
    conv.zero_values();
    let tv = &space.main.v;
    let nb = tv.nb;
    let n = space.n_dofs(Kind::Velocity);
    let dim = space.dim();
    let mesh = &space.mesh;

    // Volume transport: (w . grad v) theta + 1/2 (div w) v theta.
    if part != ConvectionPart::Upwind {
        let mut local = vec![0.0; nb * nb];
        for e in 0..mesh.n_elements() {
            local.fill(0.0);
            for q in 0..space.main.n_vol {
                let mut wv = [0.0; 3];
                let mut divw = 0.0;
                for c in 0..dim {
                    for j in 0..nb {
                        let coef = w.coeffs[c * n + e * nb + j];
                        wv[c] += coef * tv.v(q, j);
                        divw += coef * tv.g(q, j, c);
                    }
                }
                let wq = space.main.vol_w[q];
                for i in 0..nb {
                    let phi_i = tv.v(q, i);
                    for j in 0..nb {
                        let mut conv_j = 0.0;
                        for a in 0..dim {
                            conv_j += wv[a] * tv.g(q, j, a);
                        }
                        local[i * nb + j] +=
                            wq * phi_i * (conv_j + 0.5 * divw * tv.v(q, j));
                    }
                }
            }
            scatter_diag(conv, e, &local);
        }
    }

    let mut b11 = vec![0.0; nb * nb];
    let mut b12 = vec![0.0; nb * nb];
    let mut b21 = vec![0.0; nb * nb];
    let mut b22 = vec![0.0; nb * nb];
    for face in &mesh.interior_faces {
        let axis = face.axis;
        let e1 = face.element_1;
        let e2 = face.element_2.unwrap();
        b11.fill(0.0);
        b12.fill(0.0);
        b21.fill(0.0);
        b22.fill(0.0);
        for q in 0..space.main.n_face {
            // Normal component of w from both sides; the normal is +axis.
            let mut w1 = 0.0;
            let mut w2 = 0.0;
            for j in 0..nb {
                w1 += w.coeffs[axis * n + e1 * nb + j] * tv.fv(axis, 1, q, j);
                w2 += w.coeffs[axis * n + e2 * nb + j] * tv.fv(axis, 0, q, j);
            }
            let avg = 0.5 * (w1 + w2);
            let jmp = w1 - w2;
            let wq = space.main.face_w[axis][q];

            match part {
                ConvectionPart::Full | ConvectionPart::Transport => {
                    // -1/2 int ([w].n) {v theta}: same-side products only.
                    let coef = -0.25 * wq * jmp;
                    for i in 0..nb {
                        let v1i = tv.fv(axis, 1, q, i);
                        let v2i = tv.fv(axis, 0, q, i);
                        for j in 0..nb {
                            b11[i * nb + j] += coef * v1i * tv.fv(axis, 1, q, j);
                            b22[i * nb + j] += coef * v2i * tv.fv(axis, 0, q, j);
                        }
                    }
                }
                ConvectionPart::Upwind => {}
            }

            match part {
                ConvectionPart::Full => {
                    // |{w}.n_E| (v_int - v_ext) theta_int on the inflow side.
                    if avg < 0.0 {
                        // Inflow for element_1 (outward normal +axis).
                        let coef = wq * (-avg);
                        for i in 0..nb {
                            let v1i = tv.fv(axis, 1, q, i);
                            for j in 0..nb {
                                b11[i * nb + j] += coef * v1i * tv.fv(axis, 1, q, j);
                                b12[i * nb + j] -= coef * v1i * tv.fv(axis, 0, q, j);
                            }
                        }
                    } else if avg > 0.0 {
                        // Inflow for element_2 (outward normal -axis).
                        let coef = wq * avg;
                        for i in 0..nb {
                            let v2i = tv.fv(axis, 0, q, i);
                            for j in 0..nb {
                                b22[i * nb + j] += coef * v2i * tv.fv(axis, 0, q, j);
                                b21[i * nb + j] -= coef * v2i * tv.fv(axis, 1, q, j);
                            }
                        }
                    }
                }
                ConvectionPart::Upwind => {
                    // Signed version: ({w}.n_E)(v_int - v_ext) theta_int.
                    if avg < 0.0 {
                        let coef = wq * avg;
                        for i in 0..nb {
                            let v1i = tv.fv(axis, 1, q, i);
                            for j in 0..nb {
                                b11[i * nb + j] += coef * v1i * tv.fv(axis, 1, q, j);
                                b12[i * nb + j] -= coef * v1i * tv.fv(axis, 0, q, j);
                            }
                        }
                    } else if avg > 0.0 {
                        let coef = wq * (-avg);
                        for i in 0..nb {
                            let v2i = tv.fv(axis, 0, q, i);
                            for j in 0..nb {
                                b22[i * nb + j] += coef * v2i * tv.fv(axis, 0, q, j);
                                b21[i * nb + j] -= coef * v2i * tv.fv(axis, 1, q, j);
                            }
                        }
                    }
                }
                ConvectionPart::Transport => {}
            }
        }
        let blocks = FaceBlocks {
            b11: b11.clone(),
            b12: b12.clone(),
            b21: b21.clone(),
            b22: b22.clone(),
        };
        scatter_interior(conv, face, &blocks);
    }

    let mut local = vec![0.0; nb * nb];
    for face in &mesh.boundary_faces {
        let axis = face.axis;
        let e = face.element_1;
        let side = face.side_of(true);
        let n_out = face.normal[axis];
        local.fill(0.0);
        for q in 0..space.main.n_face {
            let mut wt = 0.0;
            for j in 0..nb {
                wt += w.coeffs[axis * n + e * nb + j] * tv.fv(axis, side, q, j);
            }
            let wn = n_out * wt;
            let wq = space.main.face_w[axis][q];
            let mut coef = 0.0;
            match part {
                ConvectionPart::Full => {
                    coef = -0.5 * wq * wn;
                    if wn < 0.0 {
                        coef += wq * (-wn);
                    }
                }
                ConvectionPart::Transport => {
                    coef = -0.5 * wq * wn;
                }
                ConvectionPart::Upwind => {
                    if wn < 0.0 {
                        coef = wq * wn;
                    }
                }
            }
            if coef != 0.0 {
                for i in 0..nb {
                    let vi = tv.fv(axis, side, q, i);
                    for j in 0..nb {
                        local[i * nb + j] += coef * vi * tv.fv(axis, side, q, j);
                    }
                }
            }
        }
        scatter_diag(conv, e, &local);
    }
}

/// Add the boundary-data contribution of the upwind term to the momentum
/// right-hand side: int over boundary inflow of |w.n| g . theta, where
/// inflow is w.n < 0 pointwise. Unscaled; the caller applies tau.
pub fn convection_inflow_rhs(
    space: &Space,
    w: &DgVectorField,
    g: &dyn Fn([f64; 3]) -> [f64; 3],
    rhs: &mut DgVectorField,
) {
    let tv = &space.main.v;
    let nb = tv.nb;
    let n = space.n_dofs(Kind::Velocity);
    let dim = space.dim();
    for face in &space.mesh.boundary_faces {
        let axis = face.axis;
        let e = face.element_1;
        let side = face.side_of(true);
        let n_out = face.normal[axis];
        for q in 0..space.main.n_face {
            let mut wt = 0.0;
            for j in 0..nb {
                wt += w.coeffs[axis * n + e * nb + j] * tv.fv(axis, side, q, j);
            }
            let wn = n_out * wt;
            if wn < 0.0 {
                let x = space.face_phys_point(face, q, false);
                let gx = g(x);
                let coef = space.main.face_w[axis][q] * (-wn);
                for i in 0..nb {
                    let vi = coef * tv.fv(axis, side, q, i);
                    for c in 0..dim {
                        rhs.coeffs[c * n + e * nb + i] += vi * gx[c];
                    }
                }
            }
        }
    }
}

/// Add the boundary-data contribution of the diffusion form to the momentum
/// right-hand side: eps int (grad theta . n) g + (sigma_bnd/h_e) int g theta
/// over the boundary. Unscaled; the caller applies tau mu.
pub fn diffusion_boundary_rhs(
    space: &Space,
    params: &FormParams,
    g: &dyn Fn([f64; 3]) -> [f64; 3],
    rhs: &mut DgVectorField,
) {
    let tv = &space.main.v;
    let nb = tv.nb;
    let n = space.n_dofs(Kind::Velocity);
    let dim = space.dim();
    for face in &space.mesh.boundary_faces {
        let axis = face.axis;
        let e = face.element_1;
        let side = face.side_of(true);
        let n_out = face.normal[axis];
        let pen = params.sigma_bnd / face.h_e;
        for q in 0..space.main.n_face {
            let x = space.face_phys_point(face, q, false);
            let gx = g(x);
            let wq = space.main.face_w[axis][q];
            for i in 0..nb {
                let vi = tv.fv(axis, side, q, i);
                let di = n_out * tv.fg(axis, side, q, i, axis);
                let coef = wq * (params.epsilon * di + pen * vi);
                for c in 0..dim {
                    rhs.coeffs[c * n + e * nb + i] += coef * gx[c];
                }
            }
        }
    }
}

/// Add the boundary-data contribution of the skew-symmetrising term to the
/// momentum right-hand side: -1/2 int over the boundary of (w.n) g . theta.
/// It pairs with the -1/2 int (w.n) v theta boundary term of the transport
/// part, so that together only the mismatch v - g crosses the boundary.
/// Unscaled; the caller applies tau.
pub fn convection_skew_rhs(
    space: &Space,
    w: &DgVectorField,
    g: &dyn Fn([f64; 3]) -> [f64; 3],
    rhs: &mut DgVectorField,
) {
    let tv = &space.main.v;
    let nb = tv.nb;
    let n = space.n_dofs(Kind::Velocity);
    let dim = space.dim();
    for face in &space.mesh.boundary_faces {
        let axis = face.axis;
        let e = face.element_1;
        let side = face.side_of(true);
        let n_out = face.normal[axis];
        for q in 0..space.main.n_face {
            let mut wt = 0.0;
            for j in 0..nb {
                wt += w.coeffs[axis * n + e * nb + j] * tv.fv(axis, side, q, j);
            }
            let wn = n_out * wt;
            let x = space.face_phys_point(face, q, false);
            let gx = g(x);
            let coef = -0.5 * space.main.face_w[axis][q] * wn;
            for i in 0..nb {
                let vi = coef * tv.fv(axis, side, q, i);
                for c in 0..dim {
                    rhs.coeffs[c * n + e * nb + i] += vi * gx[c];
                }
            }
        }
    }
}

/// Add the boundary-data correction of the velocity-pressure coupling to a
/// pressure-space vector: gb(q) = int over the boundary of q (g . n). The
/// coupling form carries -int q (v . n) on the boundary, so b(v, .) + gb
/// measures the divergence defect of v against the data g instead of
/// against zero.
pub fn coupling_data_rhs(
    space: &Space,
    g: &dyn Fn([f64; 3]) -> [f64; 3],
    rhs: &mut DgScalarField,
) {
    let tp = &space.main.p;
    let nb = tp.nb;
    for face in &space.mesh.boundary_faces {
        let axis = face.axis;
        let e = face.element_1;
        let side = face.side_of(true);
        let n_out = face.normal[axis];
        for q in 0..space.main.n_face {
            let x = space.face_phys_point(face, q, false);
            let gx = g(x);
            let coef = space.main.face_w[axis][q] * n_out * gx[axis];
            for i in 0..nb {
                rhs.coeffs[e * nb + i] += coef * tp.fv(axis, side, q, i);
            }
        }
    }
}
