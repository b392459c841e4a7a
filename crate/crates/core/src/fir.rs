//! FIR controllers `Q(z) = sum_i Q_i z^{-i}`, their shift-register
//! realization and the packed static gain `Ko = [Q_{n-1} ... Q_1 Q_0]`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{dim_err, Error, Result};
use crate::lti::{Domain, StateSpace};

pub const DEFAULT_PATTERN_THRESHOLD: f64 = 1e-4;

#[derive(Clone, Debug, PartialEq)]
pub struct FirController {
    taps: Vec<DMatrix<f64>>,
    pub ts: f64,
}

impl FirController {
    pub fn new(taps: Vec<DMatrix<f64>>, ts: f64) -> Result<Self> {
        let first = taps.first().ok_or_else(|| {
            Error::InvalidArgument("an FIR controller needs at least one tap".into())
        })?;
        let shape = first.shape();
        if let Some(i) = taps.iter().position(|q| q.shape() != shape) {
            return dim_err(format!(
                "tap {i} is {:?}, tap 0 is {shape:?}",
                taps[i].shape()
            ));
        }
        if taps.iter().flat_map(|q| q.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("taps must be finite".into()));
        }
        if !(ts.is_finite() && ts > 0.0) {
            return Err(Error::InvalidArgument(format!("Ts must be > 0, got {ts}")));
        }
        Ok(Self { taps, ts })
    }

    pub fn static_gain(k: DMatrix<f64>, ts: f64) -> Result<Self> {
        Self::new(vec![k], ts)
    }

    pub fn n_taps(&self) -> usize {
        self.taps.len()
    }

    pub fn n_u(&self) -> usize {
        self.taps[0].nrows()
    }

    pub fn n_y(&self) -> usize {
        self.taps[0].ncols()
    }

    pub fn taps(&self) -> &[DMatrix<f64>] {
        &self.taps
    }

    pub fn tap(&self, i: usize) -> &DMatrix<f64> {
        &self.taps[i]
    }

    /// Number of controller states, `(n_f - 1) n_y`.
    pub fn n_states(&self) -> usize {
        (self.n_taps() - 1) * self.n_y()
    }
}

/// Binary `n_u x n_y` pattern; `S(j,k) = 0` forces entry `(j,k)` of every tap
/// to zero.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SparsityPattern {
    rows: usize,
    cols: usize,
    mask: Vec<bool>,
}

impl SparsityPattern {
    pub fn full(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            mask: vec![true; rows * cols],
        }
    }

    pub fn empty(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            mask: vec![false; rows * cols],
        }
    }

    /// Ones on the main diagonal.
    pub fn diagonal(rows: usize, cols: usize) -> Self {
        let mut s = Self::empty(rows, cols);
        for i in 0..rows.min(cols) {
            s.set(i, i, true);
        }
        s
    }

    pub fn from_fn(rows: usize, cols: usize, f: impl Fn(usize, usize) -> bool) -> Self {
        let mut s = Self::empty(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                s.set(i, j, f(i, j));
            }
        }
        s
    }

    /// From a 0/1 matrix; other values are rejected.
    pub fn from_matrix(m: &DMatrix<f64>) -> Result<Self> {
        if let Some(v) = m.iter().find(|v| **v != 0.0 && **v != 1.0) {
            return Err(Error::InvalidArgument(format!(
                "pattern entries must be 0 or 1, found {v}"
            )));
        }
        Ok(Self::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)] == 1.0))
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.rows, self.cols, |i, j| {
            f64::from(u8::from(self.get(i, j)))
        })
    }

    pub fn nrows(&self) -> usize {
        self.rows
    }

    pub fn ncols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> bool {
        self.mask[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: bool) {
        self.mask[i * self.cols + j] = v;
    }

    pub fn count_nonzero(&self) -> usize {
        self.mask.iter().filter(|b| **b).count()
    }

    pub fn count_zero(&self) -> usize {
        self.mask.len() - self.count_nonzero()
    }

    /// Entries as `0`/`1` rows, for display and serialization.
    pub fn to_rows(&self) -> Vec<Vec<u8>> {
        (0..self.rows)
            .map(|i| (0..self.cols).map(|j| u8::from(self.get(i, j))).collect())
            .collect()
    }
}

/// Shift-register realization: `A_q` shifts blocks of `n_y` states up,
/// the newest measurement enters the last block, `C_q = [Q_{n-1} ... Q_1]`.
pub fn fir_realize(k: &FirController) -> StateSpace {
    let (nu, ny, nf) = (k.n_u(), k.n_y(), k.n_taps());
    let na = k.n_states();
    let (aq, bq) = shift_register(nf, ny);
    let mut cq = DMatrix::zeros(nu, na);
    for i in 1..nf {
        // Q_i occupies block (nf - 1 - i)
        cq.view_mut((0, (nf - 1 - i) * ny), (nu, ny))
            .copy_from(k.tap(i));
    }
    StateSpace {
        a: aq,
        b: bq,
        c: cq,
        d: k.tap(0).clone(),
        domain: Domain::Discrete(k.ts),
    }
}

/// `(A_q, B_q)` for `n_f` taps on `n_y` channels.
pub fn shift_register(nf: usize, ny: usize) -> (DMatrix<f64>, DMatrix<f64>) {
    let na = nf.saturating_sub(1) * ny;
    let mut aq = DMatrix::zeros(na, na);
    for i in 0..na.saturating_sub(ny) {
        aq[(i, i + ny)] = 1.0;
    }
    let mut bq = DMatrix::zeros(na, ny);
    for i in 0..na.min(ny) {
        bq[(na - ny + i, i)] = 1.0;
    }
    (aq, bq)
}

pub fn pack_ko(k: &FirController) -> DMatrix<f64> {
    let (nu, ny, nf) = (k.n_u(), k.n_y(), k.n_taps());
    let mut ko = DMatrix::zeros(nu, nf * ny);
    for i in 0..nf {
        ko.view_mut((0, tap_column(i, nf, ny)), (nu, ny))
            .copy_from(k.tap(i));
    }
    ko
}

/// First column of tap `i` inside `Ko`.
pub fn tap_column(i: usize, nf: usize, ny: usize) -> usize {
    (nf - 1 - i) * ny
}

pub fn unpack_ko(ko: &DMatrix<f64>, nf: usize, ny: usize, ts: f64) -> Result<FirController> {
    if nf == 0 || ny == 0 {
        return Err(Error::InvalidArgument(
            "n_f and n_y must be positive".into(),
        ));
    }
    if ko.ncols() != nf * ny {
        return dim_err(format!(
            "Ko has {} columns, expected n_f * n_y = {}",
            ko.ncols(),
            nf * ny
        ));
    }
    let taps = (0..nf)
        .map(|i| ko.columns(tap_column(i, nf, ny), ny).into_owned())
        .collect();
    FirController::new(taps, ts)
}

/// `(row, col)` entries of `Ko` forced to zero by `S`, for every tap.
pub fn pattern_constraints(s: &SparsityPattern, nf: usize) -> Vec<(usize, usize)> {
    let ny = s.ncols();
    let mut out = Vec::with_capacity(nf * s.count_zero());
    for i in 0..nf {
        let base = tap_column(i, nf, ny);
        for j in 0..s.nrows() {
            for k in 0..ny {
                if !s.get(j, k) {
                    out.push((j, base + k));
                }
            }
        }
    }
    out
}

/// Pattern of entries whose largest tap magnitude reaches
/// `rel_threshold * max |Q_i|`.
pub fn pattern_of(k: &FirController, rel_threshold: f64) -> Result<SparsityPattern> {
    if !(rel_threshold > 0.0 && rel_threshold < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "rel_threshold must be in (0, 1), got {rel_threshold}"
        )));
    }
    let peak = entry_magnitudes(k);
    let scale = peak.amax();
    if scale == 0.0 {
        return Ok(SparsityPattern::empty(k.n_u(), k.n_y()));
    }
    Ok(SparsityPattern::from_fn(k.n_u(), k.n_y(), |i, j| {
        peak[(i, j)] >= rel_threshold * scale
    }))
}

/// `max_i |Q_i(j,k)|` per entry.
pub fn entry_magnitudes(k: &FirController) -> DMatrix<f64> {
    DMatrix::from_fn(k.n_u(), k.n_y(), |i, j| {
        k.taps().iter().map(|q| q[(i, j)].abs()).fold(0.0, f64::max)
    })
}

/// Whether every S-zero entry of every tap is exactly zero.
pub fn complies_with(k: &FirController, s: &SparsityPattern) -> bool {
    s.nrows() == k.n_u()
        && s.ncols() == k.n_y()
        && k.taps().iter().all(|q| {
            (0..s.nrows()).all(|i| (0..s.ncols()).all(|j| s.get(i, j) || q[(i, j)] == 0.0))
        })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lti::impulse_response;

    fn worked_example() -> FirController {
        let taps = (1..=3)
            .map(|v| DMatrix::from_element(1, 3, v as f64))
            .collect();
        FirController::new(taps, 1.0).unwrap()
    }

    #[test]
    fn worked_example_realization() {
        let k = worked_example();
        let r = fir_realize(&k);
        let mut aq = DMatrix::zeros(6, 6);
        for i in 0..3 {
            aq[(i, i + 3)] = 1.0;
        }
        let mut bq = DMatrix::zeros(6, 3);
        for i in 0..3 {
            bq[(3 + i, i)] = 1.0;
        }
        assert_eq!(r.a, aq);
        assert_eq!(r.b, bq);
        assert_eq!(
            r.c,
            DMatrix::from_row_slice(1, 6, &[3.0, 3.0, 3.0, 2.0, 2.0, 2.0])
        );
        assert_eq!(r.d, DMatrix::from_element(1, 3, 1.0));
        assert_eq!(
            pack_ko(&k),
            DMatrix::from_row_slice(1, 9, &[3., 3., 3., 2., 2., 2., 1., 1., 1.])
        );
        let h = impulse_response(&r, 4).unwrap();
        for (i, hk) in h.iter().enumerate().take(3) {
            assert_eq!(hk, k.tap(i));
        }
        assert_eq!(h[3], DMatrix::zeros(1, 3));
    }

    #[test]
    fn static_controller_has_no_states() {
        let k = FirController::static_gain(
            DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![-1.2775, -0.5685])),
            0.1,
        )
        .unwrap();
        let r = fir_realize(&k);
        assert_eq!(r.n_states(), 0);
        assert_eq!(r.b.shape(), (0, 2));
        assert_eq!(r.c.shape(), (2, 0));
        assert_eq!(pack_ko(&k), *k.tap(0));
    }

    #[test]
    fn pattern_constraint_counts() {
        assert!(pattern_constraints(&SparsityPattern::full(2, 3), 3).is_empty());
        let mut c = pattern_constraints(&SparsityPattern::diagonal(2, 2), 2);
        c.sort();
        assert_eq!(c, vec![(0, 1), (0, 3), (1, 0), (1, 2)]);
        let s = SparsityPattern::from_fn(8, 16, |i, j| j == 8 + i);
        assert_eq!(pattern_constraints(&s, 1).len(), 120);
    }

    #[test]
    fn threshold_semantics() {
        let q = DMatrix::from_row_slice(2, 2, &[1.0, 1e-9, 0.0, -2.0]);
        let k = FirController::static_gain(q, 1.0).unwrap();
        let s = pattern_of(&k, DEFAULT_PATTERN_THRESHOLD).unwrap();
        assert_eq!(s, SparsityPattern::diagonal(2, 2));
        let z = FirController::static_gain(DMatrix::zeros(2, 2), 1.0).unwrap();
        assert_eq!(pattern_of(&z, 1e-4).unwrap().count_nonzero(), 0);
        assert!(pattern_of(&k, 1.0).is_err());
    }

    #[test]
    fn unpack_rejects_bad_width() {
        assert!(unpack_ko(&DMatrix::zeros(1, 5), 2, 3, 1.0).is_err());
    }

    #[test]
    fn pattern_matrix_roundtrip() {
        let s = SparsityPattern::from_fn(3, 4, |i, j| (i + j) % 2 == 0);
        assert_eq!(SparsityPattern::from_matrix(&s.to_matrix()).unwrap(), s);
        assert!(SparsityPattern::from_matrix(&DMatrix::from_element(1, 1, 0.5)).is_err());
    }
}
