//! LMI feasibility problems over named matrix variables.
//!
//! A problem is a list of symmetric blocks `F_b(x) = C_b + Σ_i x_i A_{b,i}`
//! that must be positive definite, realized as `F_b(x) ⪰ ε_b I`. The scalar
//! vector `x` is the concatenation of all matrix variables: symmetric
//! variables use the basis `{E_ii, E_ij + E_ji}` over their upper triangle
//! (column by column), full variables their column-major unit entries.

mod conditions;

use std::collections::BTreeMap;

use thiserror::Error;

use crate::matlib::MatError;
use crate::Mat;

pub use conditions::{
    build_baseline_theorem1, build_corollary_polytopic, build_theorem2, n0_from_guess, n0_zero, theorem2_block,
    N0Choice,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LmiError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("empty vertex list")]
    NoVertices,
    #[error("block {block}: affine form is not symmetric (max deviation {deviation:e})")]
    NotSymmetric { block: String, deviation: f64 },
    #[error("unknown variable {0}")]
    UnknownVariable(String),
    #[error("duplicate name {0}")]
    Duplicate(String),
    #[error(transparent)]
    Mat(#[from] MatError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VarKind {
    Symmetric(usize),
    Full(usize, usize),
}

impl VarKind {
    pub fn scalar_count(self) -> usize {
        match self {
            VarKind::Symmetric(d) => d * (d + 1) / 2,
            VarKind::Full(r, c) => r * c,
        }
    }

    pub fn shape(self) -> (usize, usize) {
        match self {
            VarKind::Symmetric(d) => (d, d),
            VarKind::Full(r, c) => (r, c),
        }
    }

    /// Matrix from this variable's scalar slice.
    pub fn to_matrix(self, x: &[f64]) -> Mat {
        match self {
            VarKind::Symmetric(d) => {
                let mut m = Mat::zeros(d, d);
                let mut k = 0;
                for j in 0..d {
                    for i in 0..=j {
                        m[(i, j)] = x[k];
                        m[(j, i)] = x[k];
                        k += 1;
                    }
                }
                m
            }
            VarKind::Full(r, c) => Mat::from_col_major(r, c, x.to_vec()).expect("finite scalars"),
        }
    }

    /// Inverse of [`VarKind::to_matrix`]; symmetric inputs read the upper triangle.
    pub fn to_scalars(self, m: &Mat) -> Vec<f64> {
        match self {
            VarKind::Symmetric(d) => (0..d).flat_map(|j| (0..=j).map(move |i| (i, j))).map(|(i, j)| m[(i, j)]).collect(),
            VarKind::Full(..) => m.as_slice().to_vec(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Variable {
    pub name: String,
    pub kind: VarKind,
    /// Index of the first scalar of this variable in `x`.
    pub offset: usize,
}

/// Symmetric matrix stored as its non-zero upper-triangle entries `(i, j, v)`,
/// `i ≤ j`.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct SparseSym {
    pub dim: usize,
    pub entries: Vec<(usize, usize, f64)>,
}

impl SparseSym {
    pub fn zeros(dim: usize) -> Self {
        Self { dim, entries: vec![] }
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            dim,
            entries: (0..dim).map(|i| (i, i, 1.0)).collect(),
        }
    }

    /// Upper triangle of a dense matrix, exact zeros dropped.
    pub fn from_dense_upper(m: &Mat) -> Self {
        let d = m.rows();
        let mut entries = vec![];
        for j in 0..d {
            for i in 0..=j {
                let v = m[(i, j)];
                if v != 0.0 {
                    entries.push((i, j, v));
                }
            }
        }
        Self { dim: d, entries }
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn to_dense(&self) -> Mat {
        let mut m = Mat::zeros(self.dim, self.dim);
        self.add_to(&mut m, 1.0);
        m
    }

    /// `m += s · self`.
    pub fn add_to(&self, m: &mut Mat, s: f64) {
        for &(i, j, v) in &self.entries {
            m[(i, j)] += s * v;
            if i != j {
                m[(j, i)] += s * v;
            }
        }
    }

    /// Trace inner product `⟨self, m⟩` with a symmetric dense `m`.
    pub fn dot(&self, m: &Mat) -> f64 {
        self.entries
            .iter()
            .map(|&(i, j, v)| if i == j { v * m[(i, j)] } else { 2.0 * v * m[(i, j)] })
            .sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.entries
            .iter()
            .map(|&(i, j, v)| if i == j { v * v } else { 2.0 * v * v })
            .sum::<f64>()
            .sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.entries.iter().fold(0.0, |m, e| m.max(e.2.abs()))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Block {
    pub name: String,
    pub dim: usize,
    pub constant: SparseSym,
    /// One coefficient per scalar decision variable (possibly empty).
    pub coeffs: Vec<SparseSym>,
    /// Strict blocks are enforced as `F ⪰ eps·I`, non-strict ones as `F ⪰ 0`.
    pub strict: bool,
    pub eps: f64,
}

impl Block {
    /// Shift actually applied: `eps` when strict, else zero.
    pub fn shift(&self) -> f64 {
        if self.strict {
            self.eps
        } else {
            0.0
        }
    }

    pub fn evaluate(&self, x: &[f64]) -> Mat {
        let mut m = self.constant.to_dense();
        for (c, xi) in self.coeffs.iter().zip(x) {
            if *xi != 0.0 {
                c.add_to(&mut m, *xi);
            }
        }
        m
    }
}

/// Default strictness shift `1e-7·(1 + ‖C‖_∞)` for a block with constant `C`.
pub fn default_eps(constant: &Mat) -> f64 {
    1e-7 * (1.0 + constant.norm_inf())
}

#[derive(Clone, Debug, PartialEq)]
pub struct LmiProblem {
    variables: Vec<Variable>,
    blocks: Vec<Block>,
    n_scalar: usize,
}

impl LmiProblem {
    /// Assembles a problem from parts, checking every structural invariant.
    pub fn from_parts(variables: Vec<Variable>, blocks: Vec<Block>) -> Result<Self, LmiError> {
        let mut off = 0;
        for v in &variables {
            if v.offset != off {
                return Err(LmiError::Dimension(format!("variable {} offset {} != {off}", v.name, v.offset)));
            }
            off += v.kind.scalar_count();
        }
        for (i, v) in variables.iter().enumerate() {
            if variables[..i].iter().any(|w| w.name == v.name) {
                return Err(LmiError::Duplicate(v.name.clone()));
            }
        }
        for b in &blocks {
            if b.coeffs.len() != off {
                return Err(LmiError::Dimension(format!(
                    "block {} has {} coefficients for {off} scalars",
                    b.name,
                    b.coeffs.len()
                )));
            }
            let bad = std::iter::once(&b.constant)
                .chain(&b.coeffs)
                .any(|c| c.dim != b.dim || c.entries.iter().any(|&(i, j, v)| i > j || j >= b.dim || !v.is_finite()));
            if bad {
                return Err(LmiError::Dimension(format!("block {} has malformed coefficient", b.name)));
            }
            if !(b.eps >= 0.0 && b.eps.is_finite()) {
                return Err(LmiError::Dimension(format!("block {} has invalid eps {}", b.name, b.eps)));
            }
        }
        Ok(Self {
            variables,
            blocks,
            n_scalar: off,
        })
    }

    pub fn variables(&self) -> &[Variable] {
        &self.variables
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn num_scalars(&self) -> usize {
        self.n_scalar
    }

    pub fn variable(&self, name: &str) -> Option<&Variable> {
        self.variables.iter().find(|v| v.name == name)
    }

    pub fn block(&self, name: &str) -> Option<&Block> {
        self.blocks.iter().find(|b| b.name == name)
    }

    /// Dense value of every block at `x`.
    pub fn evaluate(&self, x: &[f64]) -> Vec<Mat> {
        self.blocks.iter().map(|b| b.evaluate(x)).collect()
    }

    /// Matrix value of every variable at `x`.
    pub fn assignments(&self, x: &[f64]) -> BTreeMap<String, Mat> {
        self.variables
            .iter()
            .map(|v| (v.name.clone(), v.kind.to_matrix(&x[v.offset..v.offset + v.kind.scalar_count()])))
            .collect()
    }

    /// Scalar vector from named matrices; missing variables are zero.
    pub fn scalarize(&self, values: &BTreeMap<String, Mat>) -> Result<Vec<f64>, LmiError> {
        let mut x = vec![0.0; self.n_scalar];
        for (name, m) in values {
            let v = self.variable(name).ok_or_else(|| LmiError::UnknownVariable(name.clone()))?;
            if m.shape() != v.kind.shape() {
                return Err(LmiError::Dimension(format!(
                    "{name}: expected {:?}, got {}x{}",
                    v.kind.shape(),
                    m.rows(),
                    m.cols()
                )));
            }
            x[v.offset..v.offset + v.kind.scalar_count()].copy_from_slice(&v.kind.to_scalars(m));
        }
        Ok(x)
    }
}

/// Incremental construction of an [`LmiProblem`] from affine closures.
#[derive(Default)]
pub struct LmiBuilder {
    variables: Vec<Variable>,
    forms: Vec<PendingBlock>,
    n_scalar: usize,
}

type AffineForm<'a> = Box<dyn Fn(&[Mat]) -> Mat + 'a>;

struct PendingBlock {
    name: String,
    dim: usize,
    strict: bool,
    eps: Option<f64>,
    form: AffineForm<'static>,
}

impl LmiBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    fn push_var(&mut self, name: &str, kind: VarKind) -> usize {
        self.variables.push(Variable {
            name: name.to_string(),
            kind,
            offset: self.n_scalar,
        });
        self.n_scalar += kind.scalar_count();
        self.variables.len() - 1
    }

    /// Declares a symmetric `d×d` variable; returns its position in the
    /// slice handed to block closures.
    pub fn symmetric(&mut self, name: &str, d: usize) -> usize {
        self.push_var(name, VarKind::Symmetric(d))
    }

    pub fn full(&mut self, name: &str, rows: usize, cols: usize) -> usize {
        self.push_var(name, VarKind::Full(rows, cols))
    }

    /// Adds a block given as an affine function of the variable values. The
    /// closure receives one matrix per declared variable, in declaration order.
    pub fn block(
        &mut self,
        name: &str,
        dim: usize,
        strict: bool,
        eps: Option<f64>,
        form: impl Fn(&[Mat]) -> Mat + 'static,
    ) -> &mut Self {
        self.forms.push(PendingBlock {
            name: name.to_string(),
            dim,
            strict,
            eps,
            form: Box::new(form),
        });
        self
    }

    /// Samples every closure at zero and at each basis direction.
    pub fn build(self) -> Result<LmiProblem, LmiError> {
        let zero_vals: Vec<Mat> = self
            .variables
            .iter()
            .map(|v| {
                let (r, c) = v.kind.shape();
                Mat::zeros(r, c)
            })
            .collect();
        let mut blocks = Vec::with_capacity(self.forms.len());
        for pb in &self.forms {
            let eval = |vals: &[Mat]| -> Result<Mat, LmiError> {
                let m = (pb.form)(vals);
                if m.shape() != (pb.dim, pb.dim) {
                    return Err(LmiError::Dimension(format!(
                        "block {} is {}x{}, declared {}",
                        pb.name,
                        m.rows(),
                        m.cols(),
                        pb.dim
                    )));
                }
                let dev = (&m - &m.transpose()).max_abs();
                if dev > 1e-12 * (1.0 + m.max_abs()) {
                    return Err(LmiError::NotSymmetric {
                        block: pb.name.clone(),
                        deviation: dev,
                    });
                }
                Ok(m)
            };
            let c = eval(&zero_vals)?;
            let mut coeffs = Vec::with_capacity(self.n_scalar);
            let mut vals = zero_vals.clone();
            for (vi, v) in self.variables.iter().enumerate() {
                for s in 0..v.kind.scalar_count() {
                    let mut unit = vec![0.0; v.kind.scalar_count()];
                    unit[s] = 1.0;
                    vals[vi] = v.kind.to_matrix(&unit);
                    let d = &eval(&vals)? - &c;
                    coeffs.push(SparseSym::from_dense_upper(&d.symmetrize()));
                }
                vals[vi] = zero_vals[vi].clone();
            }
            blocks.push(Block {
                name: pb.name.clone(),
                dim: pb.dim,
                eps: pb.eps.unwrap_or_else(|| default_eps(&c)),
                constant: SparseSym::from_dense_upper(&c.symmetrize()),
                coeffs,
                strict: pb.strict,
            });
        }
        for (i, b) in blocks.iter().enumerate() {
            if blocks[..i].iter().any(|o| o.name == b.name) {
                return Err(LmiError::Duplicate(b.name.clone()));
            }
        }
        LmiProblem::from_parts(self.variables, blocks)
    }
}
