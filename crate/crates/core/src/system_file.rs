//! JSON system and gain files.
//!
//! Matrices are written row-major (a list of rows) and converted to the
//! internal column-major layout here, at the boundary.
//!
//! ```json
//! {
//!   "vertices": [{"A": [[0.9, 0.1], [0.2, 0.95]], "B": [[1], [0]]}],
//!   "W": [[1, 0], [0, 1]],
//!   "uncertainty": {"kind": "iid_normal_entries", "sigma2": 0.09},
//!   "theta_true": [1.0]
//! }
//! ```
//!
//! `uncertainty.kind` is one of `iid_normal_entries` (`sigma2`),
//! `entry_variances` (`V`, n×n) or `explicit_cpa` (`Cpa`, n²×n²). `W` defaults
//! to zero.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::moments::{MomentError, UncertaintyModel};
use crate::system::{SystemError, SystemSpec};
use crate::{Mat, SymMat};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SystemFileError {
    #[error("{path}: {msg}")]
    Io { path: String, msg: String },
    #[error("line {line}, column {column}: {msg}")]
    Json { line: usize, column: usize, msg: String },
    #[error("{field}: {msg}")]
    Field { field: String, msg: String },
    #[error(transparent)]
    System(#[from] SystemError),
}

type Rows = Vec<Vec<f64>>;

#[derive(Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct VertexDoc {
    #[serde(rename = "A")]
    a: Rows,
    #[serde(rename = "B")]
    b: Rows,
}

#[derive(Debug, Deserialize, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum UncertaintyDoc {
    IidNormalEntries {
        sigma2: f64,
    },
    EntryVariances {
        #[serde(rename = "V")]
        v: Rows,
    },
    ExplicitCpa {
        #[serde(rename = "Cpa")]
        cpa: Rows,
    },
}

#[derive(Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct SystemDoc {
    vertices: Vec<VertexDoc>,
    #[serde(rename = "W", default, skip_serializing_if = "Option::is_none")]
    w: Option<Rows>,
    uncertainty: UncertaintyDoc,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    theta_true: Option<Vec<f64>>,
}

#[derive(Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct GainDoc {
    #[serde(rename = "K")]
    k: Rows,
}

fn json_err(e: serde_json::Error) -> SystemFileError {
    SystemFileError::Json {
        line: e.line(),
        column: e.column(),
        msg: e.to_string(),
    }
}

fn field(field: impl Into<String>, msg: impl Into<String>) -> SystemFileError {
    SystemFileError::Field {
        field: field.into(),
        msg: msg.into(),
    }
}

fn matrix(rows: &Rows, path: &str) -> Result<Mat, SystemFileError> {
    let cols = rows.first().map_or(0, Vec::len);
    if rows.is_empty() || cols == 0 {
        return Err(field(path, "matrix is empty"));
    }
    if let Some(i) = rows.iter().position(|r| r.len() != cols) {
        return Err(field(format!("{path}[{i}]"), format!("row has {} entries, expected {cols}", rows[i].len())));
    }
    if rows.iter().flatten().any(|x| !x.is_finite()) {
        return Err(field(path, "non-finite entry"));
    }
    Mat::from_rows(rows).map_err(|e| field(path, e.to_string()))
}

fn rows_of(m: &Mat) -> Rows {
    m.to_rows()
}

fn model_err(path: &str, e: MomentError) -> SystemFileError {
    field(path, e.to_string())
}

/// Parses a system document.
pub fn parse_system_str(text: &str) -> Result<SystemSpec, SystemFileError> {
    let doc: SystemDoc = serde_json::from_str(text).map_err(json_err)?;
    if doc.vertices.is_empty() {
        return Err(field("vertices", "at least one vertex is required"));
    }
    let mut vertices = Vec::with_capacity(doc.vertices.len());
    for (i, v) in doc.vertices.iter().enumerate() {
        vertices.push((matrix(&v.a, &format!("vertices[{i}].A"))?, matrix(&v.b, &format!("vertices[{i}].B"))?));
    }
    let (n, m) = (vertices[0].0.rows(), vertices[0].1.cols());
    let w = match &doc.w {
        Some(rows) => {
            let w = matrix(rows, "W")?;
            if w.shape() != (n, n) {
                return Err(field("W", format!("expected {n}x{n}, got {}x{}", w.rows(), w.cols())));
            }
            SymMat::try_from_exact(w).map_err(|e| field("W", e.to_string()))?
        }
        None => SymMat::zeros(n),
    };
    let uncertainty = match &doc.uncertainty {
        UncertaintyDoc::IidNormalEntries { sigma2 } => {
            UncertaintyModel::iid(n, m, *sigma2).map_err(|e| model_err("uncertainty.sigma2", e))?
        }
        UncertaintyDoc::EntryVariances { v } => {
            UncertaintyModel::independent(n, m, matrix(v, "uncertainty.V")?).map_err(|e| model_err("uncertainty.V", e))?
        }
        UncertaintyDoc::ExplicitCpa { cpa } => UncertaintyModel::explicit_cpa(n, m, matrix(cpa, "uncertainty.Cpa")?)
            .map_err(|e| model_err("uncertainty.Cpa", e))?,
    };
    Ok(SystemSpec::new(vertices, w, uncertainty, doc.theta_true)?)
}

fn read(path: &Path) -> Result<String, SystemFileError> {
    std::fs::read_to_string(path).map_err(|e| SystemFileError::Io {
        path: path.display().to_string(),
        msg: e.to_string(),
    })
}

pub fn parse_system_file(path: impl AsRef<Path>) -> Result<SystemSpec, SystemFileError> {
    parse_system_str(&read(path.as_ref())?)
}

/// Serializes a system whose uncertainty is one of the file kinds. Sampled
/// models have no file form and are written as their explicit `C_p^A`.
pub fn system_to_json(system: &SystemSpec) -> String {
    use crate::moments::UncertaintyMode;
    let uncertainty = match system.uncertainty().mode() {
        UncertaintyMode::IndependentEntries { v } => {
            let s = v[(0, 0)];
            if v.as_slice().iter().all(|x| *x == s) {
                UncertaintyDoc::IidNormalEntries { sigma2: s }
            } else {
                UncertaintyDoc::EntryVariances { v: rows_of(v) }
            }
        }
        _ => UncertaintyDoc::ExplicitCpa {
            cpa: rows_of(&system.cpa()),
        },
    };
    let w = system.w().as_matrix();
    let doc = SystemDoc {
        vertices: system
            .vertices()
            .iter()
            .map(|(a, b)| VertexDoc {
                a: rows_of(a),
                b: rows_of(b),
            })
            .collect(),
        w: (w.max_abs() > 0.0).then(|| rows_of(w)),
        uncertainty,
        theta_true: system.theta_true().map(<[f64]>::to_vec),
    };
    serde_json::to_string_pretty(&doc).expect("plain data serializes")
}

/// Parses `{"K": [[...]]}`.
pub fn parse_gain_str(text: &str) -> Result<Mat, SystemFileError> {
    let doc: GainDoc = serde_json::from_str(text).map_err(json_err)?;
    matrix(&doc.k, "K")
}

pub fn parse_gain_file(path: impl AsRef<Path>) -> Result<Mat, SystemFileError> {
    parse_gain_str(&read(path.as_ref())?)
}

pub fn gain_to_json(k: &Mat) -> String {
    serde_json::to_string_pretty(&GainDoc { k: rows_of(k) }).expect("plain data serializes")
}

#[cfg(test)]
mod tests {
    use super::*;

    const GAMMA2: &str = r#"{
        "vertices": [{"A": [[0.9, 0.1], [0.2, 0.95]], "B": [[1], [0]]}],
        "uncertainty": {"kind": "iid_normal_entries", "sigma2": 0.09}
    }"#;

    #[test]
    fn row_major_boundary() {
        let s = parse_system_str(GAMMA2).unwrap();
        let (a, b) = s.nominal();
        assert_eq!(a[(0, 1)], 0.1);
        assert_eq!(a[(1, 0)], 0.2);
        assert_eq!(b.shape(), (2, 1));
        assert_eq!(s.w().as_matrix().max_abs(), 0.0);
    }

    #[test]
    fn round_trip() {
        let s = parse_system_str(GAMMA2).unwrap();
        assert_eq!(parse_system_str(&system_to_json(&s)).unwrap(), s);
        let k = Mat::from_rows(&[vec![-1.0372, -0.7751]]).unwrap();
        assert_eq!(parse_gain_str(&gain_to_json(&k)).unwrap(), k);
    }

    #[test]
    fn diagnostics() {
        let ragged = GAMMA2.replace("[0.2, 0.95]", "[0.2]");
        assert_eq!(
            parse_system_str(&ragged).unwrap_err().to_string(),
            "vertices[0].A[1]: row has 1 entries, expected 2"
        );
        let bad_kind = GAMMA2.replace("iid_normal_entries", "laplace");
        assert!(matches!(parse_system_str(&bad_kind), Err(SystemFileError::Json { line: 3, .. })));
        let w = GAMMA2.replace("\"uncertainty\"", "\"W\": [[1, 0], [0, -0.02]], \"uncertainty\"");
        assert_eq!(parse_system_str(&w).unwrap_err().to_string(), "W not PSD: lambda_min = -0.02");
        let neg = GAMMA2.replace("0.09", "-0.09");
        assert!(parse_system_str(&neg).unwrap_err().to_string().starts_with("uncertainty.sigma2"));
    }
}
