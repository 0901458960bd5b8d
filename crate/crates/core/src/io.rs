//! JSON model format.
//!
//! ```text
//! {"n_rho": 1, "bounds": [[-1, 1]],
//!  "A": {"const": [[..], ..], "coeffs": [[[..], ..]]}, "B": .., "C": .., "D": ..}
//! ```
//!
//! Matrices are row-major nested arrays. Numbers are written with the
//! shortest representation that parses back to the same `f64`.

use crate::error::{Error, Result};
use crate::model::{AffineMatrix, LpvModel, ParameterBox};
use crate::scalar::Scalar;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffineJson {
    #[serde(rename = "const")]
    pub constant: Vec<Vec<f64>>,
    #[serde(default)]
    pub coeffs: Vec<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelJson {
    pub n_rho: usize,
    pub bounds: Vec<[f64; 2]>,
    #[serde(rename = "A")]
    pub a: AffineJson,
    #[serde(rename = "B")]
    pub b: AffineJson,
    #[serde(rename = "C")]
    pub c: AffineJson,
    #[serde(rename = "D")]
    pub d: AffineJson,
}

pub fn matrix_to_rows<T: Scalar>(m: &DMatrix<T>) -> Vec<Vec<f64>> {
    m.row_iter()
        .map(|r| r.iter().map(|v| v.as_f64()).collect())
        .collect()
}

/// Builds a matrix from nested rows; `cols` is used when `rows` is empty.
pub fn rows_to_matrix<T: Scalar>(rows: &[Vec<f64>], cols: usize) -> Result<DMatrix<T>> {
    let c = rows.first().map_or(cols, Vec::len);
    if rows.iter().any(|r| r.len() != c) {
        return Err(Error::Serialization("ragged matrix rows".into()));
    }
    if rows.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::Serialization("non-finite matrix entry".into()));
    }
    Ok(DMatrix::from_fn(rows.len(), c, |i, j| T::lit(rows[i][j])))
}

fn affine_to_json<T: Scalar>(m: &AffineMatrix<T>) -> AffineJson {
    AffineJson {
        constant: matrix_to_rows(m.constant()),
        coeffs: m.coeffs().iter().map(matrix_to_rows).collect(),
    }
}

fn affine_from_json<T: Scalar>(j: &AffineJson, n_rho: usize, rows: usize, cols: usize) -> Result<AffineMatrix<T>> {
    if j.coeffs.len() != n_rho {
        return Err(Error::Serialization(format!(
            "expected {n_rho} coefficient matrices, found {}",
            j.coeffs.len()
        )));
    }
    let parse = |r: &[Vec<f64>]| -> Result<DMatrix<T>> {
        let m = rows_to_matrix(r, cols)?;
        if r.is_empty() && rows != 0 {
            return Ok(DMatrix::zeros(rows, cols));
        }
        Ok(m)
    };
    let constant = parse(&j.constant)?;
    let coeffs = j.coeffs.iter().map(|c| parse(c)).collect::<Result<Vec<_>>>()?;
    AffineMatrix::new(constant, coeffs)
}

impl ModelJson {
    pub fn from_model<T: Scalar>(m: &LpvModel<T>) -> Self {
        Self {
            n_rho: m.n_rho(),
            bounds: m
                .params
                .bounds()
                .iter()
                .map(|(lo, hi)| [lo.as_f64(), hi.as_f64()])
                .collect(),
            a: affine_to_json(&m.a),
            b: affine_to_json(&m.b),
            c: affine_to_json(&m.c),
            d: affine_to_json(&m.d),
        }
    }

    pub fn to_model<T: Scalar>(&self) -> Result<LpvModel<T>> {
        if self.bounds.len() != self.n_rho {
            return Err(Error::Serialization(format!(
                "n_rho = {} but {} bounds given",
                self.n_rho,
                self.bounds.len()
            )));
        }
        let params = ParameterBox::new(
            self.bounds
                .iter()
                .map(|[lo, hi]| (T::lit(*lo), T::lit(*hi)))
                .collect(),
        )?;
        let n_x = self.a.constant.len();
        let n_y = self
            .c
            .constant
            .len()
            .max(self.d.constant.len());
        let n_u = self
            .d
            .constant
            .first()
            .or(self.b.constant.first())
            .map_or(0, Vec::len);
        let r = self.n_rho;
        LpvModel::new(
            affine_from_json(&self.a, r, n_x, n_x)?,
            affine_from_json(&self.b, r, n_x, n_u)?,
            affine_from_json(&self.c, r, n_y, n_x)?,
            affine_from_json(&self.d, r, n_y, n_u)?,
            params,
        )
    }
}

pub fn model_to_json<T: Scalar>(m: &LpvModel<T>) -> String {
    serde_json::to_string_pretty(&ModelJson::from_model(m)).expect("model JSON is always serializable")
}

pub fn model_from_json<T: Scalar>(s: &str) -> Result<LpvModel<T>> {
    let j: ModelJson = serde_json::from_str(s).map_err(|e| Error::Serialization(e.to_string()))?;
    j.to_model()
}
