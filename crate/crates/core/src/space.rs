//! Broken polynomial spaces on a Cartesian mesh.
//!
//! Velocity components live in total degree k1, pressure in degree k2, both
//! discontinuous across elements. Every element carries the same orthonormal
//! modal basis (scaled by 1/sqrt(|E|)), so element mass matrices are the
//! identity: L2 norms are coefficient norms and L2 projections are direct
//! integrations. All elements are congruent, so basis values and physical
//! gradients at quadrature points are tabulated once on the reference box.

use crate::basis::{gauss_points_01, TensorBasis};
use crate::error::Error;
use crate::mesh::{Face, Mesh};
use crate::Result;

/// Which broken space a scalar field belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Velocity,
    Pressure,
}

/// Scalar field: `coeffs[e * nb + j]`, element-major.
#[derive(Debug, Clone)]
pub struct DgScalarField {
    pub kind: Kind,
    pub coeffs: Vec<f64>,
}

/// Vector field with every component in the velocity space:
/// `coeffs[c * (n_el * nb) + e * nb + j]`, component-major.
#[derive(Debug, Clone)]
pub struct DgVectorField {
    pub coeffs: Vec<f64>,
}

impl DgScalarField {
    pub fn l2_norm(&self) -> f64 {
        self.coeffs.iter().map(|c| c * c).sum::<f64>().sqrt()
    }
}

impl DgVectorField {
    pub fn l2_norm(&self) -> f64 {
        self.coeffs.iter().map(|c| c * c).sum::<f64>().sqrt()
    }
}

/// Basis values and physical gradients at a set of reference points.
#[derive(Debug, Clone)]
pub struct BasisTables {
    pub nb: usize,
    /// `val[q * nb + j]` at volume points.
    pub val: Vec<f64>,
    /// `grad[(q * nb + j) * 3 + a]` at volume points.
    pub grad: Vec<f64>,
    /// `face_val[axis][side]`, each `[q * nb + j]`.
    pub face_val: [[Vec<f64>; 2]; 3],
    pub face_grad: [[Vec<f64>; 2]; 3],
}

impl BasisTables {
    #[inline]
    pub fn v(&self, q: usize, j: usize) -> f64 {
        self.val[q * self.nb + j]
    }
    #[inline]
    pub fn g(&self, q: usize, j: usize, a: usize) -> f64 {
        self.grad[(q * self.nb + j) * 3 + a]
    }
    #[inline]
    pub fn fv(&self, axis: usize, side: usize, q: usize, j: usize) -> f64 {
        self.face_val[axis][side][q * self.nb + j]
    }
    #[inline]
    pub fn fg(&self, axis: usize, side: usize, q: usize, j: usize, a: usize) -> f64 {
        self.face_grad[axis][side][(q * self.nb + j) * 3 + a]
    }
}

/// Quadrature points, physical weights, and basis tables for one rule.
#[derive(Debug, Clone)]
pub struct QuadTables {
    /// Points per axis.
    pub nq: usize,
    pub n_vol: usize,
    pub n_face: usize,
    /// Reference coordinates of volume points.
    pub vol_pts: Vec<[f64; 3]>,
    /// Physical volume weights (reference weight times |E|).
    pub vol_w: Vec<f64>,
    /// Reference coordinates of face points, `face_pts[axis][side]`; the
    /// in-plane enumeration is identical on both sides, so point q on one
    /// side of an interior face coincides with point q on the other.
    pub face_pts: [[Vec<[f64; 3]>; 2]; 3],
    /// Physical face weights per axis (reference weight times |e|).
    pub face_w: [Vec<f64>; 3],
    pub v: BasisTables,
    pub p: BasisTables,
}

fn in_plane_axes(dim: usize, axis: usize) -> (usize, usize) {
    match dim {
        2 => (1 - axis, 2),
        _ => match axis {
            0 => (1, 2),
            1 => (0, 2),
            _ => (0, 1),
        },
    }
}

fn build_basis_tables(
    basis: &TensorBasis,
    vol_pts: &[[f64; 3]],
    face_pts: &[[Vec<[f64; 3]>; 2]; 3],
    dim: usize,
    size: [f64; 3],
    volume: f64,
) -> BasisTables {
    let nb = basis.len();
    let scale = 1.0 / volume.sqrt();
    let eval_all = |pts: &[[f64; 3]]| -> (Vec<f64>, Vec<f64>) {
        let mut val = vec![0.0; pts.len() * nb];
        let mut grad = vec![0.0; pts.len() * nb * 3];
        for (q, &pt) in pts.iter().enumerate() {
            for j in 0..nb {
                let (v, g) = basis.eval_with_grad(j, pt);
                val[q * nb + j] = v * scale;
                for a in 0..dim {
                    grad[(q * nb + j) * 3 + a] = g[a] * scale / size[a];
                }
            }
        }
        (val, grad)
    };

    let (val, grad) = eval_all(vol_pts);
    let mut face_val: [[Vec<f64>; 2]; 3] = Default::default();
    let mut face_grad: [[Vec<f64>; 2]; 3] = Default::default();
    for axis in 0..dim {
        for side in 0..2 {
            let (v, g) = eval_all(&face_pts[axis][side]);
            face_val[axis][side] = v;
            face_grad[axis][side] = g;
        }
    }
    BasisTables { nb, val, grad, face_val, face_grad }
}

impl QuadTables {
    fn build(
        dim: usize,
        size: [f64; 3],
        volume: f64,
        basis_v: &TensorBasis,
        basis_p: &TensorBasis,
        nq: usize,
    ) -> QuadTables {
        let (x, w) = gauss_points_01(nq);
        let n_vol = nq.pow(dim as u32);
        let n_face = nq.pow(dim as u32 - 1);

        let mut vol_pts = Vec::with_capacity(n_vol);
        let mut vol_w = Vec::with_capacity(n_vol);
        let layers = if dim == 3 { nq } else { 1 };
        for iz in 0..layers {
            for iy in 0..nq {
                for ix in 0..nq {
                    let pt = [x[ix], x[iy], if dim == 3 { x[iz] } else { 0.0 }];
                    let wt = w[ix] * w[iy] * if dim == 3 { w[iz] } else { 1.0 };
                    vol_pts.push(pt);
                    vol_w.push(wt * volume);
                }
            }
        }

        let mut face_pts: [[Vec<[f64; 3]>; 2]; 3] = Default::default();
        let mut face_w: [Vec<f64>; 3] = Default::default();
        for axis in 0..dim {
            let (b1, b2) = in_plane_axes(dim, axis);
            let measure: f64 = (0..dim).filter(|&b| b != axis).map(|b| size[b]).product();
            let layers2 = if dim == 3 { nq } else { 1 };
            let mut wts = Vec::with_capacity(n_face);
            for side in 0..2 {
                let mut pts = Vec::with_capacity(n_face);
                for j2 in 0..layers2 {
                    for j1 in 0..nq {
                        let mut pt = [0.0; 3];
                        pt[axis] = side as f64;
                        pt[b1] = x[j1];
                        if dim == 3 {
                            pt[b2] = x[j2];
                        }
                        pts.push(pt);
                        if side == 0 {
                            let wt = w[j1] * if dim == 3 { w[j2] } else { 1.0 };
                            wts.push(wt * measure);
                        }
                    }
                }
                face_pts[axis][side] = pts;
            }
            face_w[axis] = wts;
        }

        let v = build_basis_tables(basis_v, &vol_pts, &face_pts, dim, size, volume);
        let p = build_basis_tables(basis_p, &vol_pts, &face_pts, dim, size, volume);

        QuadTables { nq, n_vol, n_face, vol_pts, vol_w, face_pts, face_w, v, p }
    }
}

/// Squared-norm breakdown of a broken energy norm. The penalty part already
/// carries its sigma / h_e weights.
#[derive(Debug, Clone, Copy, Default)]
pub struct DgNormParts {
    pub grad_sq: f64,
    pub penalty_sq: f64,
}

impl DgNormParts {
    pub fn total(&self) -> f64 {
        (self.grad_sq + self.penalty_sq).sqrt()
    }
}

/// Discrete velocity/pressure space pair on a mesh.
#[derive(Debug, Clone)]
pub struct Space {
    pub mesh: Mesh,
    pub k1: usize,
    pub k2: usize,
    pub basis_v: TensorBasis,
    pub basis_p: TensorBasis,
    /// Assembly rule (default k1 + 2 points per axis: exact for the
    /// convection integrand of degree 3 k1 - 1).
    pub main: QuadTables,
    /// Finer rule for projections and error norms.
    pub fine: QuadTables,
}

impl Space {
    pub fn new(mesh: Mesh, k1: usize, k2: usize, nq: usize) -> Result<Space> {
        if k1 < 1 {
            return Err(Error::invalid("velocity degree k1 must be at least 1"));
        }
        if k2 + 1 < k1 || k2 > k1 + 1 {
            return Err(Error::invalid(format!(
                "pressure degree k2={k2} must satisfy k1-1 <= k2 <= k1+1 (k1={k1})"
            )));
        }
        if nq < k1 + 1 {
            return Err(Error::invalid(format!(
                "quadrature nq={nq} under-integrates degree-{k1} mass matrices; need nq >= k1+1"
            )));
        }
        let dim = mesh.dim;
        let basis_v = TensorBasis::new(dim, k1);
        let basis_p = TensorBasis::new(dim, k2);
        let size = mesh.element_size;
        let volume = mesh.elements[0].volume;
        let main = QuadTables::build(dim, size, volume, &basis_v, &basis_p, nq);
        let fine = QuadTables::build(dim, size, volume, &basis_v, &basis_p, nq + 1);
        Ok(Space { mesh, k1, k2, basis_v, basis_p, main, fine })
    }

    pub fn dim(&self) -> usize {
        self.mesh.dim
    }

    pub fn nb(&self, kind: Kind) -> usize {
        match kind {
            Kind::Velocity => self.basis_v.len(),
            Kind::Pressure => self.basis_p.len(),
        }
    }

    /// Scalar dof count for one field of the given kind.
    pub fn n_dofs(&self, kind: Kind) -> usize {
        self.mesh.n_elements() * self.nb(kind)
    }

    pub fn zero_scalar(&self, kind: Kind) -> DgScalarField {
        DgScalarField { kind, coeffs: vec![0.0; self.n_dofs(kind)] }
    }

    pub fn zero_vector(&self) -> DgVectorField {
        DgVectorField { coeffs: vec![0.0; self.dim() * self.n_dofs(Kind::Velocity)] }
    }

    pub fn component<'a>(&self, u: &'a DgVectorField, c: usize) -> &'a [f64] {
        let n = self.n_dofs(Kind::Velocity);
        &u.coeffs[c * n..(c + 1) * n]
    }

    pub fn component_mut<'a>(&self, u: &'a mut DgVectorField, c: usize) -> &'a mut [f64] {
        let n = self.n_dofs(Kind::Velocity);
        &mut u.coeffs[c * n..(c + 1) * n]
    }

    fn tables(&self, kind: Kind, fine: bool) -> &BasisTables {
        let t = if fine { &self.fine } else { &self.main };
        match kind {
            Kind::Velocity => &t.v,
            Kind::Pressure => &t.p,
        }
    }

    /// Physical coordinates of reference point `xhat` in element `e`.
    pub fn phys_point(&self, e: usize, xhat: [f64; 3]) -> [f64; 3] {
        let el = &self.mesh.elements[e];
        let mut x = [0.0; 3];
        for a in 0..self.dim() {
            x[a] = el.lower[a] + xhat[a] * self.mesh.element_size[a];
        }
        x
    }

    /// Physical coordinates of face quadrature point `q` (fine rule if
    /// `fine`), taken from the first adjacent element's parametrization.
    pub fn face_phys_point(&self, face: &Face, q: usize, fine: bool) -> [f64; 3] {
        let t = if fine { &self.fine } else { &self.main };
        let side = face.side_of(true);
        let xhat = t.face_pts[face.axis][side][q];
        self.phys_point(face.element_1, xhat)
    }

    /// L2 projection using the fine rule.
    pub fn project_scalar(&self, kind: Kind, f: &dyn Fn([f64; 3]) -> f64) -> DgScalarField {
        let t = self.tables(kind, true);
        let nb = t.nb;
        let mut field = self.zero_scalar(kind);
        for e in 0..self.mesh.n_elements() {
            for q in 0..self.fine.n_vol {
                let x = self.phys_point(e, self.fine.vol_pts[q]);
                let fw = f(x) * self.fine.vol_w[q];
                for j in 0..nb {
                    field.coeffs[e * nb + j] += fw * t.v(q, j);
                }
            }
        }
        field
    }

    pub fn project_vector(&self, f: &dyn Fn([f64; 3]) -> [f64; 3]) -> DgVectorField {
        let t = &self.fine.v;
        let nb = t.nb;
        let n = self.n_dofs(Kind::Velocity);
        let mut field = self.zero_vector();
        for e in 0..self.mesh.n_elements() {
            for q in 0..self.fine.n_vol {
                let x = self.phys_point(e, self.fine.vol_pts[q]);
                let fx = f(x);
                let w = self.fine.vol_w[q];
                for j in 0..nb {
                    let phi = t.v(q, j) * w;
                    for c in 0..self.dim() {
                        field.coeffs[c * n + e * nb + j] += fx[c] * phi;
                    }
                }
            }
        }
        field
    }

    /// Value of a scalar field at reference point `xhat` of element `e`.
    pub fn eval_scalar(&self, field: &DgScalarField, e: usize, xhat: [f64; 3]) -> f64 {
        let basis = match field.kind {
            Kind::Velocity => &self.basis_v,
            Kind::Pressure => &self.basis_p,
        };
        let nb = basis.len();
        let scale = 1.0 / self.mesh.elements[e].volume.sqrt();
        (0..nb)
            .map(|j| field.coeffs[e * nb + j] * basis.eval(j, xhat) * scale)
            .sum()
    }

    pub fn eval_vector(&self, field: &DgVectorField, e: usize, xhat: [f64; 3]) -> [f64; 3] {
        let nb = self.basis_v.len();
        let n = self.n_dofs(Kind::Velocity);
        let scale = 1.0 / self.mesh.elements[e].volume.sqrt();
        let mut out = [0.0; 3];
        for j in 0..nb {
            let phi = self.basis_v.eval(j, xhat) * scale;
            for c in 0..self.dim() {
                out[c] += field.coeffs[c * n + e * nb + j] * phi;
            }
        }
        out
    }

    /// Integral of a scalar field over the domain. The constant mode of
    /// element E integrates to sqrt(|E|); all others integrate to zero.
    pub fn integral(&self, field: &DgScalarField) -> f64 {
        let nb = self.nb(field.kind);
        let sqrt_vol = self.mesh.elements[0].volume.sqrt();
        (0..self.mesh.n_elements())
            .map(|e| field.coeffs[e * nb] * sqrt_vol)
            .sum()
    }

    pub fn mean(&self, field: &DgScalarField) -> f64 {
        self.integral(field) / self.mesh.domain_volume()
    }

    /// Shift a scalar field by a constant so its mean vanishes.
    pub fn remove_mean(&self, field: &mut DgScalarField) {
        let mean = self.mean(field);
        let nb = self.nb(field.kind);
        let sqrt_vol = self.mesh.elements[0].volume.sqrt();
        for e in 0..self.mesh.n_elements() {
            // Constant 1 on E has coefficient sqrt(|E|) on the constant mode.
            field.coeffs[e * nb] -= mean * sqrt_vol;
        }
    }

    /// L2 error of a scalar field against an exact function (fine rule).
    pub fn l2_error_scalar(&self, field: &DgScalarField, exact: &dyn Fn([f64; 3]) -> f64) -> f64 {
        let t = self.tables(field.kind, true);
        let nb = t.nb;
        let mut err = 0.0;
        for e in 0..self.mesh.n_elements() {
            for q in 0..self.fine.n_vol {
                let x = self.phys_point(e, self.fine.vol_pts[q]);
                let mut val = 0.0;
                for j in 0..nb {
                    val += field.coeffs[e * nb + j] * t.v(q, j);
                }
                let d = val - exact(x);
                err += self.fine.vol_w[q] * d * d;
            }
        }
        err.sqrt()
    }

    pub fn l2_error_vector(
        &self,
        field: &DgVectorField,
        exact: &dyn Fn([f64; 3]) -> [f64; 3],
    ) -> f64 {
        let t = &self.fine.v;
        let nb = t.nb;
        let n = self.n_dofs(Kind::Velocity);
        let mut err = 0.0;
        for e in 0..self.mesh.n_elements() {
            for q in 0..self.fine.n_vol {
                let x = self.phys_point(e, self.fine.vol_pts[q]);
                let ex = exact(x);
                let w = self.fine.vol_w[q];
                for c in 0..self.dim() {
                    let mut val = 0.0;
                    for j in 0..nb {
                        val += field.coeffs[c * n + e * nb + j] * t.v(q, j);
                    }
                    let d = val - ex[c];
                    err += w * d * d;
                }
            }
        }
        err.sqrt()
    }

    /// Broken-gradient and jump-penalty parts of the velocity energy norm
    /// ||v||_dg^2 = sum_E ||grad v||^2 + sum_e (sigma_e/h_e) ||[v]||^2, with
    /// jumps over interior and boundary faces and the penalty weight chosen
    /// per face class.
    pub fn dg_norm_velocity(&self, u: &DgVectorField, sigma_int: f64, sigma_bnd: f64) -> DgNormParts {
        let t = &self.main.v;
        let nb = t.nb;
        let n = self.n_dofs(Kind::Velocity);
        let dim = self.dim();
        let mut parts = DgNormParts::default();

        for e in 0..self.mesh.n_elements() {
            for q in 0..self.main.n_vol {
                let w = self.main.vol_w[q];
                for c in 0..dim {
                    for a in 0..dim {
                        let mut g = 0.0;
                        for j in 0..nb {
                            g += u.coeffs[c * n + e * nb + j] * t.g(q, j, a);
                        }
                        parts.grad_sq += w * g * g;
                    }
                }
            }
        }

        for face in self.mesh.faces() {
            let sigma = if face.is_boundary() { sigma_bnd } else { sigma_int };
            let coef = sigma / face.h_e;
            for q in 0..self.main.n_face {
                let w = self.main.face_w[face.axis][q];
                for c in 0..dim {
                    let jump = self.face_jump_scalar(
                        &u.coeffs[c * n..(c + 1) * n],
                        t,
                        face,
                        q,
                    );
                    parts.penalty_sq += coef * w * jump * jump;
                }
            }
        }
        parts
    }

    /// Pressure energy seminorm: broken gradient plus interior jumps only,
    /// |q|_dg^2 = sum_E ||grad q||^2 + sum_{interior e} (sigma/h_e) ||[q]||^2.
    pub fn dg_seminorm_pressure(&self, p: &DgScalarField, sigma: f64) -> DgNormParts {
        assert_eq!(p.kind, Kind::Pressure);
        let t = &self.main.p;
        let nb = t.nb;
        let dim = self.dim();
        let mut parts = DgNormParts::default();

        for e in 0..self.mesh.n_elements() {
            for q in 0..self.main.n_vol {
                let w = self.main.vol_w[q];
                for a in 0..dim {
                    let mut g = 0.0;
                    for j in 0..nb {
                        g += p.coeffs[e * nb + j] * t.g(q, j, a);
                    }
                    parts.grad_sq += w * g * g;
                }
            }
        }

        for face in &self.mesh.interior_faces {
            let coef = sigma / face.h_e;
            for q in 0..self.main.n_face {
                let w = self.main.face_w[face.axis][q];
                let jump = self.face_jump_scalar(&p.coeffs, t, face, q);
                parts.penalty_sq += coef * w * jump * jump;
            }
        }
        parts
    }

    /// Jump of a scalar dof slice at face point q: trace from element_1 minus
    /// trace from element_2; on boundary faces the trace itself.
    #[inline]
    pub fn face_jump_scalar(
        &self,
        coeffs: &[f64],
        t: &BasisTables,
        face: &Face,
        q: usize,
    ) -> f64 {
        let nb = t.nb;
        let e1 = face.element_1;
        let s1 = face.side_of(true);
        let mut jump = 0.0;
        for j in 0..nb {
            jump += coeffs[e1 * nb + j] * t.fv(face.axis, s1, q, j);
        }
        if let Some(e2) = face.element_2 {
            let s2 = face.side_of(false);
            for j in 0..nb {
                jump -= coeffs[e2 * nb + j] * t.fv(face.axis, s2, q, j);
            }
        }
        jump
    }

    /// Average of a scalar dof slice at face point q; on boundary faces the
    /// trace itself.
    #[inline]
    pub fn face_avg_scalar(
        &self,
        coeffs: &[f64],
        t: &BasisTables,
        face: &Face,
        q: usize,
    ) -> f64 {
        let nb = t.nb;
        let e1 = face.element_1;
        let s1 = face.side_of(true);
        let mut v1 = 0.0;
        for j in 0..nb {
            v1 += coeffs[e1 * nb + j] * t.fv(face.axis, s1, q, j);
        }
        match face.element_2 {
            Some(e2) => {
                let s2 = face.side_of(false);
                let mut v2 = 0.0;
                for j in 0..nb {
                    v2 += coeffs[e2 * nb + j] * t.fv(face.axis, s2, q, j);
                }
                0.5 * (v1 + v2)
            }
            None => v1,
        }
    }

    /// Energy error of a velocity field against an exact solution with known
    /// gradient: broken-gradient error plus jump penalties, where the exact
    /// solution is continuous (interior jumps cancel) and matches the
    /// boundary trace `exact`.
    pub fn dg_error_velocity(
        &self,
        u: &DgVectorField,
        exact: &dyn Fn([f64; 3]) -> [f64; 3],
        exact_grad: &dyn Fn([f64; 3]) -> [[f64; 3]; 3],
        sigma_int: f64,
        sigma_bnd: f64,
    ) -> f64 {
        let t = &self.fine.v;
        let nb = t.nb;
        let n = self.n_dofs(Kind::Velocity);
        let dim = self.dim();
        let mut err = 0.0;

        for e in 0..self.mesh.n_elements() {
            for q in 0..self.fine.n_vol {
                let x = self.phys_point(e, self.fine.vol_pts[q]);
                let ge = exact_grad(x);
                let w = self.fine.vol_w[q];
                for c in 0..dim {
                    for a in 0..dim {
                        let mut g = 0.0;
                        for j in 0..nb {
                            g += u.coeffs[c * n + e * nb + j] * t.g(q, j, a);
                        }
                        let d = g - ge[c][a];
                        err += w * d * d;
                    }
                }
            }
        }

        for face in self.mesh.faces() {
            let sigma = if face.is_boundary() { sigma_bnd } else { sigma_int };
            let coef = sigma / face.h_e;
            for q in 0..self.fine.n_face {
                let w = self.fine.face_w[face.axis][q];
                let boundary_exact = if face.is_boundary() {
                    exact(self.face_phys_point(face, q, true))
                } else {
                    [0.0; 3]
                };
                for c in 0..dim {
                    let mut jump =
                        self.face_jump_scalar(&u.coeffs[c * n..(c + 1) * n], t, face, q);
                    if face.is_boundary() {
                        jump -= boundary_exact[c];
                    }
                    err += coef * w * jump * jump;
                }
            }
        }
        err.sqrt()
    }
}
