//! Serde adapter storing a dense matrix as `{rows, cols, entries}` with
//! row-major entries, the layout used by all report files.

use nalgebra::DMatrix;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

#[derive(Serialize, Deserialize)]
struct MatrixJson {
    rows: usize,
    cols: usize,
    entries: Vec<f64>,
}

pub fn serialize<S: Serializer>(mat: &DMatrix<f64>, ser: S) -> Result<S::Ok, S::Error> {
    let entries: Vec<f64> = mat.transpose().as_slice().to_vec();
    MatrixJson { rows: mat.nrows(), cols: mat.ncols(), entries }.serialize(ser)
}

pub fn deserialize<'de, D: Deserializer<'de>>(de: D) -> Result<DMatrix<f64>, D::Error> {
    let raw = MatrixJson::deserialize(de)?;
    if raw.entries.len() != raw.rows * raw.cols {
        return Err(serde::de::Error::custom(format!(
            "matrix entry count {} does not match {}x{}",
            raw.entries.len(),
            raw.rows,
            raw.cols
        )));
    }
    Ok(DMatrix::from_row_slice(raw.rows, raw.cols, &raw.entries))
}
