//! Block compressed-row matrices over the element adjacency graph.
//!
//! Every operator in the scheme couples only an element with itself and its
//! face neighbors, with dense nb_row x nb_col blocks (basis sizes of the row
//! and column spaces). Patterns are fixed once from the mesh; reassembly
//! writes values in a fixed order, so repeated assembly of the same data is
//! bit-identical.

use crate::mesh::Mesh;

/// Sparse matrix of dense blocks on a fixed block pattern. Block row/col
/// indices are element indices; scalar row r = block_row * nb_row + i.
#[derive(Debug, Clone)]
pub struct BlockCsr {
    pub n_block_rows: usize,
    pub n_block_cols: usize,
    pub nb_row: usize,
    pub nb_col: usize,
    /// Block column indices per block row, sorted ascending.
    pub cols: Vec<usize>,
    pub row_ptr: Vec<usize>,
    /// Dense blocks in `cols` order, each nb_row * nb_col, row-major.
    pub values: Vec<f64>,
}

impl BlockCsr {
    /// Pattern over the mesh adjacency: diagonal block per element plus, if
    /// `couple_neighbors`, one block per interior-face neighbor pair.
    pub fn from_mesh(mesh: &Mesh, nb_row: usize, nb_col: usize, couple_neighbors: bool) -> Self {
        let n = mesh.n_elements();
        let mut neighbors: Vec<Vec<usize>> = (0..n).map(|e| vec![e]).collect();
        if couple_neighbors {
            for f in &mesh.interior_faces {
                let e2 = f.element_2.unwrap();
                neighbors[f.element_1].push(e2);
                neighbors[e2].push(f.element_1);
            }
        }
        let mut cols = Vec::new();
        let mut row_ptr = Vec::with_capacity(n + 1);
        row_ptr.push(0);
        for list in &mut neighbors {
            list.sort_unstable();
            list.dedup();
            cols.extend_from_slice(list);
            row_ptr.push(cols.len());
        }
        let values = vec![0.0; cols.len() * nb_row * nb_col];
        BlockCsr {
            n_block_rows: n,
            n_block_cols: n,
            nb_row,
            nb_col,
            cols,
            row_ptr,
            values,
        }
    }

    pub fn n_rows(&self) -> usize {
        self.n_block_rows * self.nb_row
    }

    pub fn n_cols(&self) -> usize {
        self.n_block_cols * self.nb_col
    }

    pub fn zero_values(&mut self) {
        self.values.fill(0.0);
    }

    /// Slot of block (br, bc) in `values` units of one block; panics if the
    /// block is not in the pattern.
    pub fn block_slot(&self, br: usize, bc: usize) -> usize {
        let lo = self.row_ptr[br];
        let hi = self.row_ptr[br + 1];
        lo + self.cols[lo..hi]
            .binary_search(&bc)
            .expect("block outside pattern")
    }

    pub fn block_mut(&mut self, slot: usize) -> &mut [f64] {
        let sz = self.nb_row * self.nb_col;
        &mut self.values[slot * sz..(slot + 1) * sz]
    }

    pub fn block(&self, slot: usize) -> &[f64] {
        let sz = self.nb_row * self.nb_col;
        &self.values[slot * sz..(slot + 1) * sz]
    }

    /// y += alpha * A x.
    pub fn matvec_add(&self, x: &[f64], y: &mut [f64], alpha: f64) {
        assert_eq!(x.len(), self.n_cols());
        assert_eq!(y.len(), self.n_rows());
        let (nbr, nbc) = (self.nb_row, self.nb_col);
        let sz = nbr * nbc;
        for br in 0..self.n_block_rows {
            let yb = &mut y[br * nbr..(br + 1) * nbr];
            for slot in self.row_ptr[br]..self.row_ptr[br + 1] {
                let bc = self.cols[slot];
                let block = &self.values[slot * sz..(slot + 1) * sz];
                let xb = &x[bc * nbc..(bc + 1) * nbc];
                for i in 0..nbr {
                    let row = &block[i * nbc..(i + 1) * nbc];
                    let mut acc = 0.0;
                    for j in 0..nbc {
                        acc += row[j] * xb[j];
                    }
                    yb[i] += alpha * acc;
                }
            }
        }
    }

    /// y = A x.
    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        y.fill(0.0);
        self.matvec_add(x, y, 1.0);
    }

    /// y += alpha * A^T x.
    pub fn matvec_transpose_add(&self, x: &[f64], y: &mut [f64], alpha: f64) {
        assert_eq!(x.len(), self.n_rows());
        assert_eq!(y.len(), self.n_cols());
        let (nbr, nbc) = (self.nb_row, self.nb_col);
        let sz = nbr * nbc;
        for br in 0..self.n_block_rows {
            let xb = &x[br * nbr..(br + 1) * nbr];
            for slot in self.row_ptr[br]..self.row_ptr[br + 1] {
                let bc = self.cols[slot];
                let block = &self.values[slot * sz..(slot + 1) * sz];
                let yb = &mut y[bc * nbc..(bc + 1) * nbc];
                for i in 0..nbr {
                    let row = &block[i * nbc..(i + 1) * nbc];
                    let xi = alpha * xb[i];
                    for j in 0..nbc {
                        yb[j] += xi * row[j];
                    }
                }
            }
        }
    }

    /// values += alpha * other.values (same pattern required).
    pub fn add_scaled_values(&mut self, other: &BlockCsr, alpha: f64) {
        assert_eq!(self.cols, other.cols, "patterns differ");
        for (v, o) in self.values.iter_mut().zip(&other.values) {
            *v += alpha * o;
        }
    }

    /// Dense copy, for small oracle comparisons.
    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        let mut m = nalgebra::DMatrix::zeros(self.n_rows(), self.n_cols());
        let (nbr, nbc) = (self.nb_row, self.nb_col);
        let sz = nbr * nbc;
        for br in 0..self.n_block_rows {
            for slot in self.row_ptr[br]..self.row_ptr[br + 1] {
                let bc = self.cols[slot];
                let block = &self.values[slot * sz..(slot + 1) * sz];
                for i in 0..nbr {
                    for j in 0..nbc {
                        m[(br * nbr + i, bc * nbc + j)] = block[i * nbc + j];
                    }
                }
            }
        }
        m
    }
}

pub fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

pub fn norm2(x: &[f64]) -> f64 {
    dot(x, x).sqrt()
}

/// y += alpha * x.
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}
