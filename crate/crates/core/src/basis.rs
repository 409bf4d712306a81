//! Orthonormal modal bases on boxes and tensor Gauss quadrature.
//!
//! The reference element is the unit box [0,1]^d. One-dimensional factors are
//! shifted Legendre polynomials normalized to unit L2 norm on [0,1], so the
//! tensor-product basis filtered to total degree <= k is L2-orthonormal on the
//! reference element. Scaling a function on a physical box E by 1/sqrt(|E|)
//! then makes the physical mass matrix the identity.

use gauss_quad::GaussLegendre;

/// Gauss-Legendre nodes and weights on [0,1], nodes ascending.
/// Exact for polynomials of degree <= 2n - 1.
pub fn gauss_points_01(n: usize) -> (Vec<f64>, Vec<f64>) {
    let degree = std::num::NonZeroUsize::new(n).expect("quadrature needs at least one node");
    let rule = GaussLegendre::new(degree);
    let mut pairs: Vec<(f64, f64)> = rule
        .as_node_weight_pairs()
        .iter()
        .map(|&(x, w)| (0.5 * (x + 1.0), 0.5 * w))
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    pairs.into_iter().unzip()
}

/// Value and derivative of the orthonormal shifted Legendre polynomial of
/// degree m at x in [0,1].
pub fn legendre_01(m: usize, x: f64) -> (f64, f64) {
    // Standard Legendre recurrence on t in [-1,1], tracking the derivative.
    let t = 2.0 * x - 1.0;
    let (mut p_prev, mut p) = (1.0f64, t);
    let (mut d_prev, mut d) = (0.0f64, 1.0);
    if m == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=m {
        let kf = k as f64;
        let p_next = ((2.0 * kf - 1.0) * t * p - (kf - 1.0) * p_prev) / kf;
        let d_next = d_prev + (2.0 * kf - 1.0) * p;
        p_prev = p;
        p = p_next;
        d_prev = d;
        d = d_next;
    }
    let scale = (2.0 * m as f64 + 1.0).sqrt();
    // d/dx = 2 d/dt.
    (scale * p, 2.0 * scale * d)
}

/// Tensor-product multi-indices in `dim` variables with total degree <= k,
/// in graded lexicographic order. The constant mode is always first.
pub fn total_degree_indices(dim: usize, k: usize) -> Vec<[usize; 3]> {
    let mut out = Vec::new();
    for total in 0..=k {
        let mut push = |alpha: [usize; 3]| out.push(alpha);
        match dim {
            2 => {
                for a0 in (0..=total).rev() {
                    push([a0, total - a0, 0]);
                }
            }
            3 => {
                for a0 in (0..=total).rev() {
                    for a1 in (0..=(total - a0)).rev() {
                        push([a0, a1, total - a0 - a1]);
                    }
                }
            }
            _ => panic!("dimension must be 2 or 3"),
        }
    }
    out
}

/// Number of polynomials of total degree <= k in `dim` variables.
pub fn space_dimension(dim: usize, k: usize) -> usize {
    // C(k + dim, dim) for dim in {2, 3}.
    match dim {
        2 => (k + 1) * (k + 2) / 2,
        3 => (k + 1) * (k + 2) * (k + 3) / 6,
        _ => panic!("dimension must be 2 or 3"),
    }
}

/// Modal basis of total degree <= `degree` on the reference box [0,1]^dim.
#[derive(Debug, Clone)]
pub struct TensorBasis {
    pub dim: usize,
    pub degree: usize,
    pub indices: Vec<[usize; 3]>,
}

impl TensorBasis {
    pub fn new(dim: usize, degree: usize) -> Self {
        let indices = total_degree_indices(dim, degree);
        debug_assert_eq!(indices.len(), space_dimension(dim, degree));
        TensorBasis { dim, degree, indices }
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Value of basis function `j` at a reference point.
    pub fn eval(&self, j: usize, xhat: [f64; 3]) -> f64 {
        let alpha = self.indices[j];
        let mut v = 1.0;
        for a in 0..self.dim {
            v *= legendre_01(alpha[a], xhat[a]).0;
        }
        v
    }

    /// Value and reference gradient of basis function `j`.
    pub fn eval_with_grad(&self, j: usize, xhat: [f64; 3]) -> (f64, [f64; 3]) {
        let alpha = self.indices[j];
        let mut vals = [1.0f64; 3];
        let mut ders = [0.0f64; 3];
        for a in 0..self.dim {
            let (v, d) = legendre_01(alpha[a], xhat[a]);
            vals[a] = v;
            ders[a] = d;
        }
        let mut value = 1.0;
        for a in 0..self.dim {
            value *= vals[a];
        }
        let mut grad = [0.0; 3];
        for a in 0..self.dim {
            let mut g = ders[a];
            for b in 0..self.dim {
                if b != a {
                    g *= vals[b];
                }
            }
            grad[a] = g;
        }
        (value, grad)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadrature_is_exact_to_design_degree() {
        for n in 1..=8usize {
            let (x, w) = gauss_points_01(n);
            assert!(x.windows(2).all(|p| p[0] < p[1]));
            for p in 0..=(2 * n - 1) {
                let integral: f64 = x
                    .iter()
                    .zip(&w)
                    .map(|(&xi, &wi)| wi * xi.powi(p as i32))
                    .sum();
                let exact = 1.0 / (p as f64 + 1.0);
                assert!(
                    (integral - exact).abs() < 1e-14,
                    "n={n} p={p}: {integral} vs {exact}"
                );
            }
        }
    }

    #[test]
    fn legendre_values_match_known_polynomials() {
        // Orthonormal shifted Legendre: 1, sqrt(3)(2x-1), sqrt(5)(6x^2-6x+1).
        for &x in &[0.0, 0.3, 0.5, 0.77, 1.0] {
            assert!((legendre_01(0, x).0 - 1.0).abs() < 1e-15);
            let p1 = 3f64.sqrt() * (2.0 * x - 1.0);
            assert!((legendre_01(1, x).0 - p1).abs() < 1e-14);
            let p2 = 5f64.sqrt() * (6.0 * x * x - 6.0 * x + 1.0);
            assert!((legendre_01(2, x).0 - p2).abs() < 1e-13);
        }
    }

    #[test]
    fn legendre_derivative_matches_finite_difference() {
        let h = 1e-5;
        for m in 0..=6usize {
            for &x in &[0.1, 0.35, 0.5, 0.62, 0.9] {
                let (_, d) = legendre_01(m, x);
                let fd = (legendre_01(m, x + h).0 - legendre_01(m, x - h).0) / (2.0 * h);
                let scale = d.abs().max(1.0);
                assert!(((d - fd) / scale).abs() < 1e-7, "m={m} x={x}: {d} vs {fd}");
            }
        }
    }

    #[test]
    fn index_counts_match_binomial() {
        for dim in [2usize, 3] {
            for k in 0..=5usize {
                let idx = total_degree_indices(dim, k);
                assert_eq!(idx.len(), space_dimension(dim, k));
                assert_eq!(idx[0], [0, 0, 0]);
                for alpha in &idx {
                    assert!(alpha[0] + alpha[1] + alpha[2] <= k);
                    if dim == 2 {
                        assert_eq!(alpha[2], 0);
                    }
                }
            }
        }
    }

    #[test]
    fn basis_is_orthonormal_on_reference_box() {
        for dim in [2usize, 3] {
            for k in 0..=4usize {
                let basis = TensorBasis::new(dim, k);
                let (x, w) = gauss_points_01(k + 1);
                let nb = basis.len();
                let mut gram = vec![0.0f64; nb * nb];
                let nq = x.len();
                let layers = if dim == 3 { nq } else { 1 };
                for iz in 0..layers {
                    for iy in 0..nq {
                        for ix in 0..nq {
                            let pt = [x[ix], x[iy], if dim == 3 { x[iz] } else { 0.0 }];
                            let wt =
                                w[ix] * w[iy] * if dim == 3 { w[iz] } else { 1.0 };
                            let vals: Vec<f64> =
                                (0..nb).map(|j| basis.eval(j, pt)).collect();
                            for i in 0..nb {
                                for j in 0..nb {
                                    gram[i * nb + j] += wt * vals[i] * vals[j];
                                }
                            }
                        }
                    }
                }
                for i in 0..nb {
                    for j in 0..nb {
                        let expect = if i == j { 1.0 } else { 0.0 };
                        assert!(
                            (gram[i * nb + j] - expect).abs() < 1e-13,
                            "dim={dim} k={k} ({i},{j}): {}",
                            gram[i * nb + j]
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn gradient_components_multiply_correctly() {
        let basis = TensorBasis::new(3, 3);
        let pt = [0.31, 0.62, 0.48];
        let h = 1e-5;
        for j in 0..basis.len() {
            let (_, g) = basis.eval_with_grad(j, pt);
            for a in 0..3 {
                let mut pp = pt;
                pp[a] += h;
                let mut pm = pt;
                pm[a] -= h;
                let fd = (basis.eval(j, pp) - basis.eval(j, pm)) / (2.0 * h);
                assert!((g[a] - fd).abs() < 1e-7 * g[a].abs().max(1.0));
            }
        }
    }
}
