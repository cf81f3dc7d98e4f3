//! Serde adapters that write matrices as JSON arrays of rows and vectors as
//! flat arrays. Use with `#[serde(with = "...")]`.

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::numlin::{Matrix, Vector};

pub mod matrix {
    use super::*;

    pub fn serialize<S: Serializer>(m: &Matrix, s: S) -> Result<S::Ok, S::Error> {
        // An all-empty row list cannot carry a column count, so zero-row
        // matrices are written as `[]` and read back as 0x0.
        crate::numlin::to_rows(m).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Matrix, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        crate::numlin::from_rows(&rows).map_err(serde::de::Error::custom)
    }
}

pub mod vector {
    use super::*;

    pub fn serialize<S: Serializer>(v: &Vector, s: S) -> Result<S::Ok, S::Error> {
        v.as_slice().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vector, D::Error> {
        let data = Vec::<f64>::deserialize(d)?;
        if data.iter().any(|v| !v.is_finite()) {
            return Err(serde::de::Error::custom("non-finite vector entry"));
        }
        Ok(Vector::from_vec(data))
    }
}

pub mod option_vector {
    use super::*;

    pub fn serialize<S: Serializer>(v: &Option<Vector>, s: S) -> Result<S::Ok, S::Error> {
        v.as_ref().map(|v| v.as_slice().to_vec()).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Vector>, D::Error> {
        let data = Option::<Vec<f64>>::deserialize(d)?;
        Ok(data.map(Vector::from_vec))
    }
}
