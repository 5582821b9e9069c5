use pyo3::prelude::*;

#[pymodule]
fn binflow_py(_m: &Bound<'_, PyModule>) -> PyResult<()> {
    Ok(())
}
