//! Python bindings (placeholder while the core crate is under construction).

use pyo3::prelude::*;

#[pymodule]
fn dgns_py(_m: &Bound<'_, PyModule>) -> PyResult<()> {
    Ok(())
}
