//! Structured Cartesian meshes of axis-aligned boxes in 2 or 3 dimensions.
//!
//! Interior faces carry a normal pointing in the positive axis direction;
//! the first adjacent element is always the one on the negative side of the
//! face, so jumps and averages are deterministic. Boundary faces carry the
//! outward unit normal of the domain.

use crate::error::Error;
use crate::Result;

/// One axis-aligned box element.
#[derive(Debug, Clone)]
pub struct Element {
    pub index: usize,
    /// Lower corner (entries beyond `dim` are zero).
    pub lower: [f64; 3],
    /// Upper corner.
    pub upper: [f64; 3],
    /// Element diameter: the box diagonal.
    pub diameter: f64,
    pub volume: f64,
}

/// A face between two elements (interior) or between an element and the
/// domain boundary.
#[derive(Debug, Clone)]
pub struct Face {
    pub index: usize,
    /// Axis the face is perpendicular to.
    pub axis: usize,
    /// First adjacent element; for interior faces the one the normal points
    /// away from.
    pub element_1: usize,
    /// Second adjacent element (the one the normal points into), if interior.
    pub element_2: Option<usize>,
    /// Unit normal.
    pub normal: [f64; 3],
    /// Face measure |e|: length in 2D, area in 3D.
    pub measure: f64,
    /// Face length scale h_e = |e|^{1/(d-1)}.
    pub h_e: f64,
    /// Lower corner of the face rectangle (lower[axis] == upper[axis]).
    pub lower: [f64; 3],
    pub upper: [f64; 3],
}

impl Face {
    pub fn is_boundary(&self) -> bool {
        self.element_2.is_none()
    }

    /// Which side of the adjacent element the face lies on: 0 for the lower
    /// side (face coordinate equals the element's lower corner), 1 for the
    /// upper side. Follows from the orientation convention alone.
    pub fn side_of(&self, first: bool) -> usize {
        match self.element_2 {
            // Interior: normal points +axis, so it leaves element_1 through
            // its upper side and enters element_2 through its lower side.
            Some(_) => {
                if first {
                    1
                } else {
                    0
                }
            }
            None => {
                if self.normal[self.axis] > 0.0 {
                    1
                } else {
                    0
                }
            }
        }
    }
}

/// Structured Cartesian mesh of an axis-aligned box.
#[derive(Debug, Clone)]
pub struct Mesh {
    pub dim: usize,
    pub lower: [f64; 3],
    pub upper: [f64; 3],
    pub cells_per_axis: [usize; 3],
    pub elements: Vec<Element>,
    pub interior_faces: Vec<Face>,
    pub boundary_faces: Vec<Face>,
    /// Size of one element along each axis (all elements are congruent).
    pub element_size: [f64; 3],
}

impl Mesh {
    pub fn n_elements(&self) -> usize {
        self.elements.len()
    }

    pub fn domain_volume(&self) -> f64 {
        (0..self.dim).map(|a| self.upper[a] - self.lower[a]).product()
    }

    /// Linear index of the element at grid position `idx`.
    pub fn element_index(&self, idx: [usize; 3]) -> usize {
        let n = self.cells_per_axis;
        idx[0] + n[0] * (idx[1] + n[1] * idx[2])
    }

    /// Adjacent elements of a face, ordered consistently with the normal:
    /// for interior faces the normal points from the first element toward
    /// the second.
    pub fn face_neighbors(&self, face: &Face) -> (usize, Option<usize>) {
        (face.element_1, face.element_2)
    }

    /// All faces (interior first, then boundary).
    pub fn faces(&self) -> impl Iterator<Item = &Face> {
        self.interior_faces.iter().chain(self.boundary_faces.iter())
    }
}

/// Build a structured mesh of `box = (lower, upper)` with `cells_per_axis`
/// subdivisions along each of the `dim` axes.
pub fn build_mesh(
    dim: usize,
    lower: [f64; 3],
    upper: [f64; 3],
    cells_per_axis: [usize; 3],
) -> Result<Mesh> {
    if dim != 2 && dim != 3 {
        return Err(Error::Mesh(format!("dimension must be 2 or 3, got {dim}")));
    }
    for a in 0..dim {
        if cells_per_axis[a] == 0 {
            return Err(Error::Mesh(format!("zero cell count on axis {a}")));
        }
        if !(upper[a] - lower[a]).is_finite() || upper[a] <= lower[a] {
            return Err(Error::Mesh(format!(
                "degenerate box on axis {a}: [{}, {}]",
                lower[a], upper[a]
            )));
        }
    }

    let mut n = [1usize; 3];
    let mut size = [0.0f64; 3];
    for a in 0..dim {
        n[a] = cells_per_axis[a];
        size[a] = (upper[a] - lower[a]) / n[a] as f64;
    }

    let volume: f64 = (0..dim).map(|a| size[a]).product();
    let diameter = (0..dim).map(|a| size[a] * size[a]).sum::<f64>().sqrt();

    let mut elements = Vec::with_capacity(n[0] * n[1] * n[2]);
    for iz in 0..n[2] {
        for iy in 0..n[1] {
            for ix in 0..n[0] {
                let idx = [ix, iy, iz];
                let mut lo = [0.0; 3];
                let mut hi = [0.0; 3];
                for a in 0..dim {
                    lo[a] = lower[a] + idx[a] as f64 * size[a];
                    hi[a] = lower[a] + (idx[a] + 1) as f64 * size[a];
                }
                elements.push(Element {
                    index: elements.len(),
                    lower: lo,
                    upper: hi,
                    diameter,
                    volume,
                });
            }
        }
    }

    // Face measure and length scale are the same for every face of a given
    // axis on a uniform grid.
    let face_measure = |axis: usize| -> f64 {
        (0..dim).filter(|&b| b != axis).map(|b| size[b]).product()
    };

    let grid_index = |idx: [usize; 3]| idx[0] + n[0] * (idx[1] + n[1] * idx[2]);

    let mut interior_faces = Vec::new();
    let mut boundary_faces = Vec::new();

    for axis in 0..dim {
        let measure = face_measure(axis);
        let h_e = measure.powf(1.0 / (dim as f64 - 1.0));
        let (b1, b2) = other_axes(dim, axis);

        let face_box = |idx: [usize; 3], plane: usize| -> ([f64; 3], [f64; 3]) {
            let mut lo = [0.0; 3];
            let mut hi = [0.0; 3];
            for a in 0..dim {
                lo[a] = lower[a] + idx[a] as f64 * size[a];
                hi[a] = lower[a] + (idx[a] + 1) as f64 * size[a];
            }
            let coord = lower[axis] + plane as f64 * size[axis];
            lo[axis] = coord;
            hi[axis] = coord;
            (lo, hi)
        };

        // Interior faces: planes 1..n[axis], swept lexicographically over the
        // remaining axes in the same order as the element numbering.
        for plane in 1..n[axis] {
            for j2 in 0..n[b2] {
                for j1 in 0..n[b1] {
                    let mut idx = [0usize; 3];
                    idx[axis] = plane - 1;
                    idx[b1] = j1;
                    idx[b2] = j2;
                    let e1 = grid_index(idx);
                    idx[axis] = plane;
                    let e2 = grid_index(idx);
                    let mut normal = [0.0; 3];
                    normal[axis] = 1.0;
                    idx[axis] = plane; // face sits at the lower side of e2
                    let (lo, hi) = face_box(idx, plane);
                    interior_faces.push(Face {
                        index: interior_faces.len(),
                        axis,
                        element_1: e1,
                        element_2: Some(e2),
                        normal,
                        measure,
                        h_e,
                        lower: lo,
                        upper: hi,
                    });
                }
            }
        }

        // Boundary faces: lower side (outward normal -axis), then upper side.
        for (side, plane) in [(0usize, 0usize), (1, n[axis])] {
            for j2 in 0..n[b2] {
                for j1 in 0..n[b1] {
                    let mut idx = [0usize; 3];
                    idx[axis] = if side == 0 { 0 } else { n[axis] - 1 };
                    idx[b1] = j1;
                    idx[b2] = j2;
                    let e = grid_index(idx);
                    let mut normal = [0.0; 3];
                    normal[axis] = if side == 0 { -1.0 } else { 1.0 };
                    let (lo, hi) = face_box(idx, plane);
                    boundary_faces.push(Face {
                        index: boundary_faces.len(),
                        axis,
                        element_1: e,
                        element_2: None,
                        normal,
                        measure,
                        h_e,
                        lower: lo,
                        upper: hi,
                    });
                }
            }
        }
    }

    let mesh = Mesh {
        dim,
        lower,
        upper,
        cells_per_axis: n,
        elements,
        interior_faces,
        boundary_faces,
        element_size: size,
    };

    let total: f64 = mesh.elements.iter().map(|e| e.volume).sum();
    let domain = mesh.domain_volume();
    if ((total - domain) / domain).abs() > 1e-12 {
        return Err(Error::Mesh(format!(
            "element volumes sum to {total}, domain volume is {domain}"
        )));
    }

    Ok(mesh)
}

/// The two axes other than `axis` (one in 2D; the second is a dummy that
/// indexes a single layer).
fn other_axes(dim: usize, axis: usize) -> (usize, usize) {
    match dim {
        2 => (1 - axis, 2),
        _ => match axis {
            0 => (1, 2),
            1 => (0, 2),
            _ => (0, 1),
        },
    }
}
