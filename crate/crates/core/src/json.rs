//! JSON encoding of complex matrices.
//!
//! A complex number is a two-element array `[re, im]`; a matrix is a
//! row-major array of rows. Plain JSON numbers are accepted on input as
//! real entries.

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::linalg::{CMatrix, C64};

/// Matrix wrapper that (de)serialises in the nested-array encoding.
#[derive(Debug, Clone, PartialEq)]
pub struct JsonMatrix(pub CMatrix);

#[derive(Deserialize)]
#[serde(untagged)]
enum Entry {
    Complex([f64; 2]),
    Real(f64),
}

impl Serialize for JsonMatrix {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let m = &self.0;
        let rows: Vec<Vec<[f64; 2]>> =
            (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| [m[(i, j)].re, m[(i, j)].im]).collect()).collect();
        rows.serialize(s)
    }
}

impl<'de> Deserialize<'de> for JsonMatrix {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let rows: Vec<Vec<Entry>> = Vec::deserialize(d)?;
        let nrows = rows.len();
        if nrows == 0 {
            return Err(D::Error::custom("matrix must have at least one row"));
        }
        let ncols = rows[0].len();
        if ncols == 0 {
            return Err(D::Error::custom("matrix must have at least one column"));
        }
        if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != ncols) {
            return Err(D::Error::custom(format!("row {i} has {} entries, expected {ncols}", r.len())));
        }
        let entries = rows.into_iter().flatten().map(|e| match e {
            Entry::Complex([re, im]) => C64::new(re, im),
            Entry::Real(re) => C64::new(re, 0.0),
        });
        Ok(JsonMatrix(CMatrix::from_row_iterator(nrows, ncols, entries)))
    }
}

impl From<CMatrix> for JsonMatrix {
    fn from(m: CMatrix) -> Self {
        JsonMatrix(m)
    }
}
