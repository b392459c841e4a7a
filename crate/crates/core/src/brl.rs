//! Discrete bounded real lemma: `||C (zI - A)^{-1} B + D||_inf^2 < mu` iff
//! some symmetric `P` makes
//!
//! ```text
//! [ P     A P   B   0    ]
//! [ P A'  P     0   P C' ]  > 0
//! [ B'    0     I   D'   ]
//! [ 0     C P   D   mu I ]
//! ```

use nalgebra::DMatrix;

use crate::error::{dim_err, Error, Result};
use crate::lti::{hinf_norm, is_stable, StateSpace};
use crate::sdp::{self, AffineMatrix, LmiProblem, MatrixVar, SdpBackend, SolveStatus};

/// Dense LMI from its upper blocks: `AP = A P`, `CP = C P`, `B`, `D`.
/// Only the upper triangle is computed; the lower one is mirrored.
pub fn brl_matrix(
    p: &DMatrix<f64>,
    ap: &DMatrix<f64>,
    b: &DMatrix<f64>,
    cp: &DMatrix<f64>,
    d: &DMatrix<f64>,
    mu: f64,
) -> Result<DMatrix<f64>> {
    let n = p.nrows();
    let (m, q) = (b.ncols(), cp.nrows());
    if p.ncols() != n
        || ap.shape() != (n, n)
        || b.nrows() != n
        || cp.ncols() != n
        || d.shape() != (q, m)
    {
        return dim_err("inconsistent bounded real blocks");
    }
    let dim = 2 * n + m + q;
    let mut f = DMatrix::zeros(dim, dim);
    let (o2, o3, o4) = (n, 2 * n, 2 * n + m);
    f.view_mut((0, 0), (n, n)).copy_from(p);
    f.view_mut((0, o2), (n, n)).copy_from(ap);
    f.view_mut((0, o3), (n, m)).copy_from(b);
    f.view_mut((o2, o2), (n, n)).copy_from(p);
    f.view_mut((o2, o4), (n, q)).copy_from(&cp.transpose());
    f.view_mut((o3, o3), (m, m)).fill_with_identity();
    f.view_mut((o3, o4), (m, q)).copy_from(&d.transpose());
    for i in 0..q {
        f[(o4 + i, o4 + i)] = mu;
    }
    mirror_upper(&mut f);
    Ok(f)
}

/// Copy the strict upper triangle onto the lower one.
pub(crate) fn mirror_upper(f: &mut DMatrix<f64>) {
    for j in 0..f.ncols() {
        for i in (j + 1)..f.nrows() {
            f[(i, j)] = f[(j, i)];
        }
    }
}

/// Symbolic LMI from blocks that may depend on decision variables.
pub fn brl_expr(
    p: &AffineMatrix,
    ap: &AffineMatrix,
    b: &AffineMatrix,
    cp: &AffineMatrix,
    d: &AffineMatrix,
    mu: f64,
) -> Result<AffineMatrix> {
    let n = p.nrows();
    let (m, q) = (b.ncols(), cp.nrows());
    let z = AffineMatrix::zeros;
    AffineMatrix::block(&[
        vec![p.clone(), ap.clone(), b.clone(), z(n, q)],
        vec![ap.transpose(), p.clone(), z(n, m), cp.transpose()],
        vec![
            b.transpose(),
            z(m, n),
            AffineMatrix::identity(m),
            d.transpose(),
        ],
        vec![
            z(q, n),
            cp.clone(),
            d.clone(),
            AffineMatrix::constant(DMatrix::identity(q, q) * mu),
        ],
    ])
}

/// LMI of a fixed system with `P` as the decision variable.
pub fn brl_lmi_in_p(sys: &StateSpace, p: &MatrixVar, mu: f64) -> Result<AffineMatrix> {
    let pe = p.expr();
    brl_expr(
        &pe,
        &pe.left_mul(&sys.a)?,
        &AffineMatrix::constant(sys.b.clone()),
        &pe.left_mul(&sys.c)?,
        &AffineMatrix::constant(sys.d.clone()),
        mu,
    )
}

/// Margin-form feasibility of the bounded real LMI at `mu`.
pub fn brl_feasible(sys: &StateSpace, mu: f64, backend: &dyn SdpBackend) -> Result<bool> {
    let mut prob = LmiProblem::new();
    let p = prob.add_symmetric("P", sys.n_states());
    prob.add_psd("brl", brl_lmi_in_p(sys, &p, mu)?)?;
    let out = sdp::solve_max_margin(&prob, 1.0, backend)?;
    match out.status {
        SolveStatus::FeasiblePoint => Ok(true),
        SolveStatus::Infeasible => Ok(false),
        SolveStatus::CapReached | SolveStatus::NumericFailure => {
            Ok(out.margin > 0.0 && out.values.as_ref().is_some_and(|x| prob.satisfied_by(x)))
        }
    }
}

/// H-infinity norm of a stable discrete system by bisection on the bounded
/// real LMI; the bracket `[0, 1.1 * grid + 1]` is halved until narrower than
/// `tol`.
pub fn hinf_norm_lmi_bisect(sys: &StateSpace, tol: f64, backend: &dyn SdpBackend) -> Result<f64> {
    if !sys.domain.is_discrete() {
        return Err(Error::Domain("LMI norm needs a discrete system".into()));
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "tol must be > 0, got {tol}"
        )));
    }
    if !is_stable(sys) {
        return Err(Error::Unstable(sys.stability_measure()));
    }
    let (mut lo, mut hi) = (0.0, 1.1 * hinf_norm(sys)? + 1.0);
    while hi - lo >= tol {
        let mid = 0.5 * (lo + hi);
        if brl_feasible(sys, mid * mid, backend)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}
