//! Affine matrix expressions over scalar decision variables.
//!
//! An [`AffineMatrix`] is `C + sum_k x_k * E_k` where every `E_k` is kept as a
//! sparse list of `(row, col, coeff)` entries. Products with constant
//! matrices, transposition and block assembly are closed over this form, so
//! LMIs can be written the way they are printed and handed to a conic backend
//! without ever forming dense per-variable coefficient matrices.

use std::ops::{Add, Neg, Sub};

use nalgebra::DMatrix;

use crate::error::{dim_err, Result};

/// Index of a scalar decision variable inside an [`super::LmiProblem`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VarId(pub usize);

#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) struct Term {
    pub var: usize,
    pub row: usize,
    pub col: usize,
    pub coeff: f64,
}

#[derive(Clone, Debug)]
pub struct AffineMatrix {
    constant: DMatrix<f64>,
    terms: Vec<Term>,
}

impl AffineMatrix {
    pub fn constant(m: DMatrix<f64>) -> Self {
        Self {
            constant: m,
            terms: Vec::new(),
        }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::constant(DMatrix::zeros(rows, cols))
    }

    pub fn identity(n: usize) -> Self {
        Self::constant(DMatrix::identity(n, n))
    }

    pub(crate) fn from_parts(constant: DMatrix<f64>, terms: Vec<Term>) -> Self {
        let mut out = Self { constant, terms };
        out.coalesce();
        out
    }

    /// `v * m` for a scalar variable `v`.
    pub fn var_times(v: VarId, m: &DMatrix<f64>) -> Self {
        let mut terms = Vec::new();
        for j in 0..m.ncols() {
            for i in 0..m.nrows() {
                if m[(i, j)] != 0.0 {
                    terms.push(Term {
                        var: v.0,
                        row: i,
                        col: j,
                        coeff: m[(i, j)],
                    });
                }
            }
        }
        Self::from_parts(DMatrix::zeros(m.nrows(), m.ncols()), terms)
    }

    pub fn nrows(&self) -> usize {
        self.constant.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.constant.ncols()
    }

    pub fn shape(&self) -> (usize, usize) {
        self.constant.shape()
    }

    pub fn constant_part(&self) -> &DMatrix<f64> {
        &self.constant
    }

    pub(crate) fn terms(&self) -> &[Term] {
        &self.terms
    }

    pub fn is_constant(&self) -> bool {
        self.terms.is_empty()
    }

    /// Distinct variables referenced by the expression, ascending.
    pub fn variables(&self) -> Vec<VarId> {
        let mut v: Vec<usize> = self.terms.iter().map(|t| t.var).collect();
        v.dedup();
        v.into_iter().map(VarId).collect()
    }

    fn coalesce(&mut self) {
        self.terms.sort_unstable_by_key(|t| (t.var, t.col, t.row));
        let mut out: Vec<Term> = Vec::with_capacity(self.terms.len());
        for t in self.terms.drain(..) {
            match out.last_mut() {
                Some(last) if last.var == t.var && last.row == t.row && last.col == t.col => {
                    last.coeff += t.coeff;
                }
                _ => out.push(t),
            }
        }
        out.retain(|t| t.coeff != 0.0);
        self.terms = out;
    }

    /// `m * self`.
    pub fn left_mul(&self, m: &DMatrix<f64>) -> Result<Self> {
        if m.ncols() != self.nrows() {
            return dim_err(format!(
                "left multiply {}x{} by expression {}x{}",
                m.nrows(),
                m.ncols(),
                self.nrows(),
                self.ncols()
            ));
        }
        let mut terms = Vec::with_capacity(self.terms.len() * m.nrows().min(8));
        for t in &self.terms {
            for k in 0..m.nrows() {
                let a = m[(k, t.row)];
                if a != 0.0 {
                    terms.push(Term {
                        var: t.var,
                        row: k,
                        col: t.col,
                        coeff: a * t.coeff,
                    });
                }
            }
        }
        Ok(Self::from_parts(m * &self.constant, terms))
    }

    /// `self * m`.
    pub fn right_mul(&self, m: &DMatrix<f64>) -> Result<Self> {
        if m.nrows() != self.ncols() {
            return dim_err(format!(
                "right multiply expression {}x{} by {}x{}",
                self.nrows(),
                self.ncols(),
                m.nrows(),
                m.ncols()
            ));
        }
        let mut terms = Vec::with_capacity(self.terms.len() * m.ncols().min(8));
        for t in &self.terms {
            for k in 0..m.ncols() {
                let a = m[(t.col, k)];
                if a != 0.0 {
                    terms.push(Term {
                        var: t.var,
                        row: t.row,
                        col: k,
                        coeff: t.coeff * a,
                    });
                }
            }
        }
        Ok(Self::from_parts(&self.constant * m, terms))
    }

    pub fn transpose(&self) -> Self {
        let terms = self
            .terms
            .iter()
            .map(|t| Term {
                var: t.var,
                row: t.col,
                col: t.row,
                coeff: t.coeff,
            })
            .collect();
        Self::from_parts(self.constant.transpose(), terms)
    }

    pub fn scale(&self, s: f64) -> Self {
        let terms = self
            .terms
            .iter()
            .map(|t| Term {
                coeff: t.coeff * s,
                ..*t
            })
            .collect();
        Self::from_parts(&self.constant * s, terms)
    }

    pub fn try_add(&self, other: &Self) -> Result<Self> {
        if self.shape() != other.shape() {
            return dim_err(format!(
                "add expressions {:?} and {:?}",
                self.shape(),
                other.shape()
            ));
        }
        let mut terms = self.terms.clone();
        terms.extend_from_slice(&other.terms);
        Ok(Self::from_parts(&self.constant + &other.constant, terms))
    }

    pub fn add_constant(&self, m: &DMatrix<f64>) -> Result<Self> {
        if self.shape() != m.shape() {
            return dim_err(format!(
                "add constant {:?} to expression {:?}",
                m.shape(),
                self.shape()
            ));
        }
        Ok(Self {
            constant: &self.constant + m,
            terms: self.terms.clone(),
        })
    }

    /// Assemble a block matrix. Every block in a block row must share its row
    /// count and every block in a block column its column count; zero-sized
    /// blocks are allowed.
    pub fn block(rows: &[Vec<AffineMatrix>]) -> Result<Self> {
        if rows.is_empty() {
            return Ok(Self::zeros(0, 0));
        }
        let ncb = rows[0].len();
        if rows.iter().any(|r| r.len() != ncb) {
            return dim_err("ragged block layout");
        }
        let row_h: Vec<usize> = rows.iter().map(|r| r[0].nrows()).collect();
        let col_w: Vec<usize> = (0..ncb).map(|j| rows[0][j].ncols()).collect();
        for (bi, r) in rows.iter().enumerate() {
            for (bj, blk) in r.iter().enumerate() {
                if blk.nrows() != row_h[bi] || blk.ncols() != col_w[bj] {
                    return dim_err(format!(
                        "block ({bi},{bj}) is {:?}, expected {}x{}",
                        blk.shape(),
                        row_h[bi],
                        col_w[bj]
                    ));
                }
            }
        }
        let nr: usize = row_h.iter().sum();
        let nc: usize = col_w.iter().sum();
        let mut constant = DMatrix::zeros(nr, nc);
        let mut terms = Vec::new();
        let mut r0 = 0;
        for (bi, r) in rows.iter().enumerate() {
            let mut c0 = 0;
            for (bj, blk) in r.iter().enumerate() {
                constant
                    .view_mut((r0, c0), (row_h[bi], col_w[bj]))
                    .copy_from(&blk.constant);
                terms.extend(blk.terms.iter().map(|t| Term {
                    var: t.var,
                    row: t.row + r0,
                    col: t.col + c0,
                    coeff: t.coeff,
                }));
                c0 += col_w[bj];
            }
            r0 += row_h[bi];
        }
        Ok(Self::from_parts(constant, terms))
    }

    /// Evaluate at a full variable assignment.
    pub fn eval(&self, x: &[f64]) -> DMatrix<f64> {
        let mut m = self.constant.clone();
        for t in &self.terms {
            m[(t.row, t.col)] += t.coeff * x[t.var];
        }
        m
    }

    /// Structural symmetry check: constant and every coefficient matrix must
    /// be symmetric within `tol` (relative to the largest magnitude present).
    pub fn is_symmetric(&self, tol: f64) -> bool {
        if self.nrows() != self.ncols() {
            return false;
        }
        let scale = 1.0 + self.constant.amax();
        if (&self.constant - self.constant.transpose()).amax() > tol * scale {
            return false;
        }
        let mut lower: Vec<Term> = self
            .terms
            .iter()
            .map(|t| Term {
                var: t.var,
                row: t.col,
                col: t.row,
                coeff: t.coeff,
            })
            .collect();
        lower.sort_unstable_by_key(|t| (t.var, t.col, t.row));
        if lower.len() != self.terms.len() {
            return false;
        }
        lower.iter().zip(&self.terms).all(|(a, b)| {
            a.var == b.var
                && a.row == b.row
                && a.col == b.col
                && (a.coeff - b.coeff).abs() <= tol * (1.0 + a.coeff.abs())
        })
    }
}

impl Add for &AffineMatrix {
    type Output = AffineMatrix;
    fn add(self, rhs: &AffineMatrix) -> AffineMatrix {
        self.try_add(rhs)
            .expect("shape mismatch in AffineMatrix addition")
    }
}

impl Sub for &AffineMatrix {
    type Output = AffineMatrix;
    fn sub(self, rhs: &AffineMatrix) -> AffineMatrix {
        self.try_add(&rhs.scale(-1.0))
            .expect("shape mismatch in AffineMatrix subtraction")
    }
}

impl Neg for &AffineMatrix {
    type Output = AffineMatrix;
    fn neg(self) -> AffineMatrix {
        self.scale(-1.0)
    }
}

/// A matrix of decision variables. Symmetric matrices share one variable per
/// unordered index pair.
#[derive(Clone, Debug)]
pub struct MatrixVar {
    rows: usize,
    cols: usize,
    ids: Vec<VarId>,
}

impl MatrixVar {
    pub(crate) fn new(rows: usize, cols: usize, ids: Vec<VarId>) -> Self {
        debug_assert_eq!(ids.len(), rows * cols);
        Self { rows, cols, ids }
    }

    pub fn nrows(&self) -> usize {
        self.rows
    }

    pub fn ncols(&self) -> usize {
        self.cols
    }

    pub fn id(&self, i: usize, j: usize) -> VarId {
        self.ids[i * self.cols + j]
    }

    /// Distinct variables in row-major first-appearance order.
    pub fn ids(&self) -> Vec<VarId> {
        let mut seen = std::collections::BTreeSet::new();
        self.ids
            .iter()
            .copied()
            .filter(|v| seen.insert(*v))
            .collect()
    }

    pub fn expr(&self) -> AffineMatrix {
        let terms = (0..self.rows)
            .flat_map(|i| (0..self.cols).map(move |j| (i, j)))
            .map(|(i, j)| Term {
                var: self.id(i, j).0,
                row: i,
                col: j,
                coeff: 1.0,
            })
            .collect();
        AffineMatrix::from_parts(DMatrix::zeros(self.rows, self.cols), terms)
    }

    pub fn value(&self, x: &[f64]) -> DMatrix<f64> {
        DMatrix::from_fn(self.rows, self.cols, |i, j| x[self.id(i, j).0])
    }
}
