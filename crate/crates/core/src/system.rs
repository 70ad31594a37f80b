//! Polytopic stochastic system description.

use thiserror::Error;

use crate::matlib::{min_eigenvalue, MatError};
use crate::moments::{MomentError, UncertaintyModel};
use crate::{Mat, SymMat};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SystemError {
    #[error("system has no vertices")]
    NoVertices,
    #[error("{field}: {msg}")]
    Dimension { field: String, msg: String },
    #[error("W not PSD: lambda_min = {0}")]
    NotPsd(f64),
    #[error("theta_true is not a simplex point: {0}")]
    NotSimplex(String),
    #[error(transparent)]
    Moments(#[from] MomentError),
    #[error(transparent)]
    Mat(#[from] MatError),
}

/// `x⁺ = (A(θ) + Ā(ξ)) x + B(θ) u + w` with `(A(θ), B(θ))` in the convex hull
/// of the vertices.
#[derive(Clone, Debug, PartialEq)]
pub struct SystemSpec {
    vertices: Vec<(Mat, Mat)>,
    w: SymMat,
    uncertainty: UncertaintyModel,
    theta_true: Option<Vec<f64>>,
}

impl SystemSpec {
    pub fn new(
        vertices: Vec<(Mat, Mat)>,
        w: SymMat,
        uncertainty: UncertaintyModel,
        theta_true: Option<Vec<f64>>,
    ) -> Result<Self, SystemError> {
        let (a0, b0) = vertices.first().ok_or(SystemError::NoVertices)?;
        let n = a0.rows();
        let m = b0.cols();
        for (i, (a, b)) in vertices.iter().enumerate() {
            if a.shape() != (n, n) {
                return Err(SystemError::Dimension {
                    field: format!("vertices[{i}].A"),
                    msg: format!("expected {n}x{n}, got {}x{}", a.rows(), a.cols()),
                });
            }
            if b.shape() != (n, m) {
                return Err(SystemError::Dimension {
                    field: format!("vertices[{i}].B"),
                    msg: format!("expected {n}x{m}, got {}x{}", b.rows(), b.cols()),
                });
            }
        }
        if w.dim() != n {
            return Err(SystemError::Dimension {
                field: "W".into(),
                msg: format!("expected {n}x{n}, got {0}x{0}", w.dim()),
            });
        }
        let lmin = min_eigenvalue(&w)?;
        let scale = w.as_matrix().max_abs();
        if lmin < -1e-12 * scale.max(1.0) {
            return Err(SystemError::NotPsd(lmin));
        }
        if uncertainty.n() != n || uncertainty.m() != m {
            return Err(SystemError::Dimension {
                field: "uncertainty".into(),
                msg: format!("model is n={}, m={}; system is n={n}, m={m}", uncertainty.n(), uncertainty.m()),
            });
        }
        if let Some(th) = &theta_true {
            if th.len() != vertices.len() {
                return Err(SystemError::NotSimplex(format!("{} weights for {} vertices", th.len(), vertices.len())));
            }
            if th.iter().any(|t| *t < 0.0 || !t.is_finite()) || (th.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
                return Err(SystemError::NotSimplex(format!("{th:?}")));
            }
        }
        Ok(Self {
            vertices,
            w,
            uncertainty,
            theta_true,
        })
    }

    /// Single-vertex system with iid entry noise of variance `sigma2` and `W = 0`.
    pub fn nominal_iid(a: Mat, b: Mat, sigma2: f64) -> Result<Self, SystemError> {
        let n = a.rows();
        let m = b.cols();
        Self::new(vec![(a, b)], SymMat::zeros(n), UncertaintyModel::iid(n, m, sigma2)?, None)
    }

    pub fn n(&self) -> usize {
        self.vertices[0].0.rows()
    }

    pub fn m(&self) -> usize {
        self.vertices[0].1.cols()
    }

    pub fn vertices(&self) -> &[(Mat, Mat)] {
        &self.vertices
    }

    pub fn w(&self) -> &SymMat {
        &self.w
    }

    pub fn uncertainty(&self) -> &UncertaintyModel {
        &self.uncertainty
    }

    pub fn theta_true(&self) -> Option<&[f64]> {
        self.theta_true.as_deref()
    }

    pub fn cpa(&self) -> Mat {
        self.uncertainty.cpa()
    }

    /// `(A(θ), B(θ))` for a simplex point `θ`.
    pub fn at(&self, theta: &[f64]) -> (Mat, Mat) {
        let (n, m) = (self.n(), self.m());
        let mut a = Mat::zeros(n, n);
        let mut b = Mat::zeros(n, m);
        for (t, (va, vb)) in theta.iter().zip(&self.vertices) {
            a += &va.scale(*t);
            b += &vb.scale(*t);
        }
        (a, b)
    }

    /// The designated true parameters: `theta_true` if given, else vertex 1.
    pub fn nominal(&self) -> (Mat, Mat) {
        match &self.theta_true {
            Some(th) => self.at(th),
            None => self.vertices[0].clone(),
        }
    }

    /// Same system with the uncertainty replaced.
    pub fn with_uncertainty(&self, uncertainty: UncertaintyModel) -> Result<Self, SystemError> {
        Self::new(self.vertices.clone(), self.w.clone(), uncertainty, self.theta_true.clone())
    }

    /// Same system with iid entry noise of variance `sigma2`.
    pub fn with_sigma2(&self, sigma2: f64) -> Result<Self, SystemError> {
        self.with_uncertainty(UncertaintyModel::iid(self.n(), self.m(), sigma2)?)
    }

    pub fn with_w(&self, w: SymMat) -> Result<Self, SystemError> {
        Self::new(self.vertices.clone(), w, self.uncertainty.clone(), self.theta_true.clone())
    }
}
