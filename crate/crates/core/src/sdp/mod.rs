//! Backend-neutral semidefinite feasibility and optimization.
//!
//! Problems are stated as [`LmiProblem`]s: named scalar variables, affine
//! symmetric matrix constraints required to be positive (semi)definite, scalar
//! linear inequalities, entries pinned to zero, and an optional linear
//! objective. They are compiled to a standard sparse symmetric-cone form
//! ([`ConicProblem`]) which is the only thing a backend adapter sees.
//!
//! Strict inequalities `F(x) > 0` are imposed as `F(x) >= eps_pd * I` with
//! `eps_pd = 1e-7 * (1 + max|F_const|)`, see [`strictness_margin`].

mod clarabel_backend;
mod expr;

use std::collections::BTreeSet;

use nalgebra::DMatrix;

pub use clarabel_backend::ClarabelBackend;
pub use expr::{AffineMatrix, MatrixVar, VarId};

use crate::error::{Error, Result};

/// Environment variable selecting the conic backend adapter.
pub const BACKEND_ENV: &str = "SPARSE_HINF_BACKEND";

/// Relative shift used to turn a strict LMI into a non-strict one.
pub const EPS_PD_REL: f64 = 1e-7;

/// `eps_pd` for a constraint whose constant term is `constant`.
pub fn strictness_margin(constant: &DMatrix<f64>) -> f64 {
    EPS_PD_REL * (1.0 + constant.amax())
}

/// Tolerance used when checking a reassembled constraint against its shift.
fn reassembly_tolerance(constant: &DMatrix<f64>) -> f64 {
    1e-9 * (1.0 + constant.amax())
}

#[derive(Clone, Debug)]
pub struct PsdConstraint {
    pub label: String,
    pub expr: AffineMatrix,
    pub strict: bool,
}

impl PsdConstraint {
    pub fn shift(&self) -> f64 {
        if self.strict {
            strictness_margin(self.expr.constant_part())
        } else {
            0.0
        }
    }
}

/// `constant + sum coeff * x >= 0`.
#[derive(Clone, Debug, Default)]
pub struct LinearForm {
    pub constant: f64,
    pub coeffs: Vec<(VarId, f64)>,
}

impl LinearForm {
    pub fn eval(&self, x: &[f64]) -> f64 {
        self.constant + self.coeffs.iter().map(|(v, c)| c * x[v.0]).sum::<f64>()
    }
}

#[derive(Clone, Debug, Default)]
pub struct LmiProblem {
    names: Vec<String>,
    psd: Vec<PsdConstraint>,
    linear: Vec<LinearForm>,
    zeros: BTreeSet<usize>,
    objective: Vec<(VarId, f64)>,
    iter_cap: Option<u32>,
}

impl LmiProblem {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn num_vars(&self) -> usize {
        self.names.len()
    }

    pub fn name(&self, v: VarId) -> &str {
        &self.names[v.0]
    }

    pub fn add_scalar(&mut self, name: impl Into<String>) -> VarId {
        self.names.push(name.into());
        VarId(self.names.len() - 1)
    }

    pub fn add_matrix(&mut self, name: &str, rows: usize, cols: usize) -> MatrixVar {
        let ids = (0..rows * cols)
            .map(|k| self.add_scalar(format!("{name}[{},{}]", k / cols, k % cols)))
            .collect();
        MatrixVar::new(rows, cols, ids)
    }

    /// Symmetric `n x n` matrix variable, one scalar per upper-triangle entry.
    pub fn add_symmetric(&mut self, name: &str, n: usize) -> MatrixVar {
        let mut upper = vec![VarId(usize::MAX); n * n];
        for i in 0..n {
            for j in i..n {
                let v = self.add_scalar(format!("{name}[{i},{j}]"));
                upper[i * n + j] = v;
                upper[j * n + i] = v;
            }
        }
        MatrixVar::new(n, n, upper)
    }

    fn push_psd(&mut self, label: String, expr: AffineMatrix, strict: bool) -> Result<()> {
        if expr.nrows() != expr.ncols() {
            return Err(Error::Dimension(format!(
                "psd constraint '{label}' is {:?}",
                expr.shape()
            )));
        }
        if !expr.is_symmetric(1e-12) {
            return Err(Error::InvalidArgument(format!(
                "psd constraint '{label}' is not symmetric"
            )));
        }
        if let Some(v) = expr.variables().last() {
            if v.0 >= self.num_vars() {
                return Err(Error::InvalidArgument(format!(
                    "psd constraint '{label}' references unknown variable {}",
                    v.0
                )));
            }
        }
        self.psd.push(PsdConstraint {
            label,
            expr,
            strict,
        });
        Ok(())
    }

    /// `expr > 0`, imposed as `expr >= eps_pd * I`.
    pub fn add_psd(&mut self, label: impl Into<String>, expr: AffineMatrix) -> Result<()> {
        self.push_psd(label.into(), expr, true)
    }

    /// `expr >= 0` without strictness shift (used for auxiliary epigraphs).
    pub fn add_psd_nonstrict(
        &mut self,
        label: impl Into<String>,
        expr: AffineMatrix,
    ) -> Result<()> {
        self.push_psd(label.into(), expr, false)
    }

    pub fn add_linear_ge_zero(&mut self, form: LinearForm) -> Result<()> {
        if form.coeffs.iter().any(|(v, _)| v.0 >= self.num_vars()) {
            return Err(Error::InvalidArgument(
                "linear constraint references unknown variable".into(),
            ));
        }
        self.linear.push(form);
        Ok(())
    }

    pub fn pin_zero(&mut self, v: VarId) -> Result<()> {
        if v.0 >= self.num_vars() {
            return Err(Error::InvalidArgument(format!(
                "zero constraint on unknown variable {}",
                v.0
            )));
        }
        self.zeros.insert(v.0);
        Ok(())
    }

    pub fn is_pinned(&self, v: VarId) -> bool {
        self.zeros.contains(&v.0)
    }

    pub fn set_objective(&mut self, coeffs: Vec<(VarId, f64)>) {
        self.objective = coeffs;
    }

    pub fn objective(&self) -> &[(VarId, f64)] {
        &self.objective
    }

    pub fn set_iter_cap(&mut self, cap: Option<u32>) {
        self.iter_cap = cap;
    }

    pub fn iter_cap(&self) -> Option<u32> {
        self.iter_cap
    }

    pub fn psd_constraints(&self) -> &[PsdConstraint] {
        &self.psd
    }

    /// Minimum eigenvalue of every psd constraint at `x`, in insertion order.
    pub fn constraint_min_eigenvalues(&self, x: &[f64]) -> Vec<f64> {
        self.psd
            .iter()
            .map(|c| min_eigenvalue(&c.expr.eval(x)))
            .collect()
    }

    /// Reassembled margin: the smallest eigenvalue over the strict
    /// constraints (all constraints when none is strict).
    pub fn margin(&self, x: &[f64]) -> f64 {
        let eigs = self.constraint_min_eigenvalues(x);
        let any_strict = self.psd.iter().any(|c| c.strict);
        eigs.iter()
            .zip(&self.psd)
            .filter(|(_, c)| c.strict || !any_strict)
            .map(|(e, _)| *e)
            .fold(f64::INFINITY, f64::min)
    }

    /// Whether `x` satisfies every constraint. A strict constraint needs at
    /// least half its shift (the solver lands on the shifted boundary only
    /// to within its own accuracy); a non-strict one needs `>= 0` up to
    /// reassembly tolerance.
    pub fn satisfied_by(&self, x: &[f64]) -> bool {
        let psd_ok = self.psd.iter().all(|c| {
            let need = if c.strict {
                0.5 * c.shift()
            } else {
                -reassembly_tolerance(c.expr.constant_part())
            };
            min_eigenvalue(&c.expr.eval(x)) >= need
        });
        let lin_ok = self
            .linear
            .iter()
            .all(|f| f.eval(x) >= -1e-9 * (1.0 + f.constant.abs()));
        let zeros_ok = self.zeros.iter().all(|&v| x[v] == 0.0);
        psd_ok && lin_ok && zeros_ok
    }

    fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective.iter().map(|(v, c)| c * x[v.0]).sum()
    }
}

pub(crate) fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return f64::INFINITY;
    }
    m.clone()
        .symmetric_eigenvalues()
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum SolveStatus {
    FeasiblePoint,
    CapReached,
    Infeasible,
    NumericFailure,
}

/// Result of a semidefinite solve. `values` covers every problem variable
/// (pinned entries are exactly zero); it is absent for `Infeasible`.
#[derive(Clone, Debug)]
pub struct SolveOutcome {
    pub status: SolveStatus,
    pub values: Option<Vec<f64>>,
    pub margin: f64,
    pub objective: Option<f64>,
    pub iterations: u32,
}

impl SolveOutcome {
    pub fn has_values(&self) -> bool {
        self.values.is_some()
    }
}

// ---------------------------------------------------------------------------
// Standard conic form

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Cone {
    Nonneg(usize),
    /// Upper triangle, column-major, off-diagonals scaled by sqrt(2).
    PsdTriangle(usize),
}

/// `minimize q'x  s.t.  b - A x in K`.
#[derive(Clone, Debug)]
pub struct ConicProblem {
    pub n: usize,
    pub q: Vec<f64>,
    pub a_rows: Vec<usize>,
    pub a_cols: Vec<usize>,
    pub a_vals: Vec<f64>,
    pub b: Vec<f64>,
    pub cones: Vec<Cone>,
    pub max_iter: Option<u32>,
}

impl ConicProblem {
    pub fn m(&self) -> usize {
        self.b.len()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ConicStatus {
    Solved,
    AlmostSolved,
    PrimalInfeasible,
    DualInfeasible,
    MaxIterations,
    Failed,
}

#[derive(Clone, Debug)]
pub struct ConicSolution {
    pub status: ConicStatus,
    pub x: Vec<f64>,
    pub iterations: u32,
}

/// A conic solver adapter.
pub trait SdpBackend: Send + Sync {
    fn name(&self) -> &'static str;
    fn solve_conic(&self, problem: &ConicProblem) -> Result<ConicSolution>;
}

/// Backend named by `SPARSE_HINF_BACKEND` (default `clarabel`).
pub fn backend_from_env() -> Result<Box<dyn SdpBackend>> {
    match std::env::var(BACKEND_ENV) {
        Err(_) => Ok(Box::new(ClarabelBackend::default())),
        Ok(name) => backend_by_name(&name),
    }
}

pub fn backend_by_name(name: &str) -> Result<Box<dyn SdpBackend>> {
    match name.trim().to_ascii_lowercase().as_str() {
        "" | "clarabel" => Ok(Box::new(ClarabelBackend::default())),
        other => Err(Error::Backend(format!("unknown backend '{other}'"))),
    }
}

struct Compiled {
    conic: ConicProblem,
    column_of: Vec<Option<usize>>,
}

fn compile(problem: &LmiProblem, margin_cap: Option<f64>) -> Compiled {
    let mut column_of = vec![None; problem.num_vars()];
    let mut n = 0;
    for (v, col) in column_of.iter_mut().enumerate() {
        if !problem.zeros.contains(&v) {
            *col = Some(n);
            n += 1;
        }
    }
    let t_col = margin_cap.map(|_| {
        n += 1;
        n - 1
    });

    let mut q = vec![0.0; n];
    match t_col {
        Some(t) => q[t] = -1.0,
        None => {
            for (v, c) in &problem.objective {
                if let Some(col) = column_of[v.0] {
                    q[col] += c;
                }
            }
        }
    }

    let (mut rows, mut cols, mut vals, mut b) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    let mut cones = Vec::new();

    let n_lin = problem.linear.len() + usize::from(t_col.is_some());
    for form in &problem.linear {
        let r = b.len();
        b.push(form.constant);
        for (v, c) in &form.coeffs {
            if let Some(col) = column_of[v.0] {
                rows.push(r);
                cols.push(col);
                vals.push(-c);
            }
        }
    }
    if let (Some(t), Some(cap)) = (t_col, margin_cap) {
        rows.push(b.len());
        cols.push(t);
        vals.push(1.0);
        b.push(cap);
    }
    if n_lin > 0 {
        cones.push(Cone::Nonneg(n_lin));
    }

    let sqrt2 = std::f64::consts::SQRT_2;
    for c in &problem.psd {
        let d = c.expr.nrows();
        if d == 0 {
            continue;
        }
        let base = b.len();
        let idx = |i: usize, j: usize| base + j * (j + 1) / 2 + i;
        let konst = c.expr.constant_part();
        // the margin variable only enters strict constraints
        let shift = if t_col.is_some() { 0.0 } else { c.shift() };
        for j in 0..d {
            for i in 0..=j {
                let s = if i == j { 1.0 } else { sqrt2 };
                let diag = if i == j { shift } else { 0.0 };
                b.push(s * (konst[(i, j)] - diag));
            }
        }
        for t in c.expr.terms() {
            if t.row > t.col {
                continue;
            }
            if let Some(col) = column_of[t.var] {
                let s = if t.row == t.col { 1.0 } else { sqrt2 };
                rows.push(idx(t.row, t.col));
                cols.push(col);
                vals.push(-s * t.coeff);
            }
        }
        if let (Some(tc), true) = (t_col, c.strict) {
            for i in 0..d {
                rows.push(idx(i, i));
                cols.push(tc);
                vals.push(1.0);
            }
        }
        cones.push(Cone::PsdTriangle(d));
    }

    Compiled {
        conic: ConicProblem {
            n,
            q,
            a_rows: rows,
            a_cols: cols,
            a_vals: vals,
            b,
            cones,
            max_iter: problem.iter_cap,
        },
        column_of,
    }
}

fn expand(compiled: &Compiled, x: &[f64]) -> Vec<f64> {
    compiled
        .column_of
        .iter()
        .map(|c| c.map_or(0.0, |c| x[c]))
        .collect()
}

fn finish(
    problem: &LmiProblem,
    compiled: &Compiled,
    sol: ConicSolution,
    margin_mode: bool,
) -> SolveOutcome {
    let values = (sol.status != ConicStatus::PrimalInfeasible
        && sol.x.iter().all(|v| v.is_finite()))
    .then(|| expand(compiled, &sol.x));
    let margin = values.as_ref().map_or(f64::NAN, |x| problem.margin(x));
    let satisfied = values.as_ref().is_some_and(|x| problem.satisfied_by(x));
    let status = match sol.status {
        ConicStatus::Solved | ConicStatus::AlmostSolved => {
            if satisfied {
                SolveStatus::FeasiblePoint
            } else if margin_mode {
                SolveStatus::Infeasible
            } else {
                SolveStatus::NumericFailure
            }
        }
        ConicStatus::PrimalInfeasible => SolveStatus::Infeasible,
        ConicStatus::MaxIterations => SolveStatus::CapReached,
        ConicStatus::DualInfeasible | ConicStatus::Failed => SolveStatus::NumericFailure,
    };
    let objective = values.as_ref().map(|x| problem.objective_value(x));
    SolveOutcome {
        status,
        values,
        margin,
        objective,
        iterations: sol.iterations,
    }
}

/// Solve the problem as stated (objective defaults to 0).
pub fn solve(problem: &LmiProblem, backend: &dyn SdpBackend) -> Result<SolveOutcome> {
    let compiled = compile(problem, None);
    let sol = backend.solve_conic(&compiled.conic)?;
    Ok(finish(problem, &compiled, sol, false))
}

/// Maximize `t` subject to every strict constraint `F(x) >= t * I`,
/// non-strict and linear constraints as stated, and `t <= t_max`. The
/// problem's own objective is ignored. `FeasiblePoint` means the optimum
/// clears the strictness shift; a converged optimum below it is reported as
/// `Infeasible`, with the best point still attached.
pub fn solve_max_margin(
    problem: &LmiProblem,
    t_max: f64,
    backend: &dyn SdpBackend,
) -> Result<SolveOutcome> {
    if !(t_max > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "t_max must be > 0, got {t_max}"
        )));
    }
    let compiled = compile(problem, Some(t_max));
    let sol = backend.solve_conic(&compiled.conic)?;
    Ok(finish(problem, &compiled, sol, true))
}

/// Minimize `sum W(i,j) |target(i,j)|` (plus the problem's own objective)
/// through epigraph variables `s(i,j) >= +-target(i,j)`.
pub fn solve_min_weighted_l1(
    problem: &LmiProblem,
    weights: &DMatrix<f64>,
    target: &MatrixVar,
    backend: &dyn SdpBackend,
) -> Result<SolveOutcome> {
    if weights.shape() != (target.nrows(), target.ncols()) {
        return Err(Error::Dimension(format!(
            "weights {:?} vs target {}x{}",
            weights.shape(),
            target.nrows(),
            target.ncols()
        )));
    }
    if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
        return Err(Error::InvalidArgument(
            "weights must be finite and nonnegative".into(),
        ));
    }
    let n0 = problem.num_vars();
    let mut p = problem.clone();
    let mut objective = problem.objective.clone();
    for i in 0..target.nrows() {
        for j in 0..target.ncols() {
            let k = target.id(i, j);
            if p.is_pinned(k) {
                continue;
            }
            let s = p.add_scalar(format!("l1aux[{i},{j}]"));
            p.add_linear_ge_zero(LinearForm {
                constant: 0.0,
                coeffs: vec![(s, 1.0), (k, -1.0)],
            })?;
            p.add_linear_ge_zero(LinearForm {
                constant: 0.0,
                coeffs: vec![(s, 1.0), (k, 1.0)],
            })?;
            if weights[(i, j)] != 0.0 {
                objective.push((s, weights[(i, j)]));
            }
        }
    }
    p.set_objective(objective);
    let mut out = solve(&p, backend)?;
    if let Some(x) = out.values.as_mut() {
        x.truncate(n0);
        let l1: f64 = (0..target.nrows())
            .flat_map(|i| (0..target.ncols()).map(move |j| (i, j)))
            .map(|(i, j)| weights[(i, j)] * x[target.id(i, j).0].abs())
            .sum();
        out.objective = Some(l1 + problem.objective_value(x));
    }
    Ok(out)
}
