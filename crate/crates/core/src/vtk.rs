//! Legacy-ASCII VTK export of field snapshots.
//!
//! Each mesh element becomes one hexahedron (quad in 2d) whose corner
//! points are sampled per element, so discontinuities across faces are
//! preserved exactly in the file. Point data carries the velocity vector
//! and the pressure and pressure-increment scalars.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::space::{DgScalarField, DgVectorField, Space};
use crate::Result;

/// Reference corners in VTK vertex order: quad for 2d, hexahedron for 3d.
fn corners(dim: usize) -> &'static [[f64; 3]] {
    const QUAD: [[f64; 3]; 4] =
        [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [1.0, 1.0, 0.0], [0.0, 1.0, 0.0]];
    const HEX: [[f64; 3]; 8] = [
        [0.0, 0.0, 0.0],
        [1.0, 0.0, 0.0],
        [1.0, 1.0, 0.0],
        [0.0, 1.0, 0.0],
        [0.0, 0.0, 1.0],
        [1.0, 0.0, 1.0],
        [1.0, 1.0, 1.0],
        [0.0, 1.0, 1.0],
    ];
    if dim == 2 {
        &QUAD
    } else {
        &HEX
    }
}

/// Render the snapshot as legacy-ASCII VTK text.
pub fn fields_to_vtk(
    space: &Space,
    u: &DgVectorField,
    p: &DgScalarField,
    phi: &DgScalarField,
) -> String {
    let dim = space.dim();
    let pts = corners(dim);
    let npts = pts.len();
    let ne = space.mesh.n_elements();
    let cell_type = if dim == 2 { 9 } else { 12 };

    let mut s = String::new();
    s.push_str("# vtk DataFile Version 3.0\n");
    s.push_str("velocity, pressure, and pressure increment\n");
    s.push_str("ASCII\nDATASET UNSTRUCTURED_GRID\n");

    let _ = writeln!(s, "POINTS {} double", ne * npts);
    for e in 0..ne {
        for xhat in pts {
            let x = space.phys_point(e, *xhat);
            let _ = writeln!(s, "{:.9e} {:.9e} {:.9e}", x[0], x[1], x[2]);
        }
    }

    let _ = writeln!(s, "CELLS {} {}", ne, ne * (npts + 1));
    for e in 0..ne {
        let _ = write!(s, "{npts}");
        for i in 0..npts {
            let _ = write!(s, " {}", e * npts + i);
        }
        s.push('\n');
    }
    let _ = writeln!(s, "CELL_TYPES {ne}");
    for _ in 0..ne {
        let _ = writeln!(s, "{cell_type}");
    }

    let _ = writeln!(s, "POINT_DATA {}", ne * npts);
    s.push_str("VECTORS velocity double\n");
    for e in 0..ne {
        for xhat in pts {
            let v = space.eval_vector(u, e, *xhat);
            let _ = writeln!(s, "{:.9e} {:.9e} {:.9e}", v[0], v[1], v[2]);
        }
    }
    for (name, field) in [("pressure", p), ("pressure_increment", phi)] {
        let _ = writeln!(s, "SCALARS {name} double 1");
        s.push_str("LOOKUP_TABLE default\n");
        for e in 0..ne {
            for xhat in pts {
                let _ = writeln!(s, "{:.9e}", space.eval_scalar(field, e, *xhat));
            }
        }
    }
    s
}

/// Write the snapshot to `path`.
pub fn export_fields(
    space: &Space,
    u: &DgVectorField,
    p: &DgScalarField,
    phi: &DgScalarField,
    path: &Path,
) -> Result<()> {
    fs::write(path, fields_to_vtk(space, u, p, phi))?;
    Ok(())
}
