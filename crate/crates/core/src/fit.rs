//! Continuous-time transfer functions fitted to discrete controller entries
//! in the frequency domain (Levy linearization, then Sanathanan-Koerner
//! reweighting).

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fir::FirController;
use crate::lti::{eigenvalues, Domain, StateSpace, C64};

/// `num(s) / den(s)`, coefficients in descending powers, `den` monic.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RationalTf {
    pub num: Vec<f64>,
    pub den: Vec<f64>,
}

fn polyval(c: &[f64], s: C64) -> C64 {
    c.iter().fold(C64::new(0.0, 0.0), |acc, &v| acc * s + v)
}

/// Real polynomial (descending, monic) with the given roots.
fn poly_from_roots(roots: &[C64]) -> Vec<f64> {
    let mut c = vec![C64::new(1.0, 0.0)];
    for r in roots {
        let mut next = vec![C64::new(0.0, 0.0); c.len() + 1];
        for (i, v) in c.iter().enumerate() {
            next[i] += v;
            next[i + 1] -= v * r;
        }
        c = next;
    }
    c.into_iter().map(|v| v.re).collect()
}

fn poly_roots(c: &[f64]) -> Vec<C64> {
    let n = c.len() - 1;
    if n == 0 {
        return Vec::new();
    }
    let mut comp = DMatrix::zeros(n, n);
    for j in 0..n {
        comp[(0, j)] = -c[j + 1] / c[0];
    }
    for i in 1..n {
        comp[(i, i - 1)] = 1.0;
    }
    eigenvalues(&comp)
}

impl RationalTf {
    pub fn new(num: Vec<f64>, den: Vec<f64>) -> Result<Self> {
        if den.is_empty() || num.is_empty() {
            return Err(Error::InvalidArgument("empty coefficient list".into()));
        }
        if den[0] != 1.0 {
            return Err(Error::InvalidArgument(format!(
                "denominator must be monic, leading coefficient is {}",
                den[0]
            )));
        }
        if num.len() > den.len() {
            return Err(Error::InvalidArgument("improper transfer function".into()));
        }
        if num.iter().chain(&den).any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite coefficient".into()));
        }
        Ok(Self { num, den })
    }

    pub fn gain(g: f64) -> Self {
        Self {
            num: vec![g],
            den: vec![1.0],
        }
    }

    pub fn n_zeros(&self) -> usize {
        self.num.len() - 1
    }

    pub fn n_poles(&self) -> usize {
        self.den.len() - 1
    }

    pub fn eval(&self, s: C64) -> C64 {
        polyval(&self.num, s) / polyval(&self.den, s)
    }

    pub fn poles(&self) -> Vec<C64> {
        poly_roots(&self.den)
    }

    pub fn is_stable(&self) -> bool {
        self.poles().iter().all(|p| p.re < 0.0)
    }

    /// Controllable canonical realization.
    pub fn to_state_space(&self) -> StateSpace {
        let n = self.n_poles();
        let mut c = vec![0.0; n + 1 - self.num.len()];
        c.extend_from_slice(&self.num);
        let d = c[0];
        // coefficients of s^0 .. s^{n-1}
        let a_asc: Vec<f64> = self.den[1..].iter().rev().copied().collect();
        let r_asc: Vec<f64> = (0..n).map(|k| c[n - k] - d * a_asc[k]).collect();
        let mut a = DMatrix::zeros(n, n);
        for i in 0..n.saturating_sub(1) {
            a[(i, i + 1)] = 1.0;
        }
        if n > 0 {
            for k in 0..n {
                a[(n - 1, k)] = -a_asc[k];
            }
        }
        let mut b = DMatrix::zeros(n, 1);
        if n > 0 {
            b[(n - 1, 0)] = 1.0;
        }
        let cm = DMatrix::from_row_slice(1, n, &r_asc);
        StateSpace::new(a, b, cm, DMatrix::from_element(1, 1, d), Domain::Continuous)
            .expect("canonical realization is consistent")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Structure {
    pub n_zeros: usize,
    pub n_poles: usize,
}

impl Structure {
    pub fn new(n_zeros: usize, n_poles: usize) -> Self {
        Self { n_zeros, n_poles }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Spacing {
    Linear,
    Log,
}

#[derive(Clone, Debug)]
pub struct FitOptions {
    pub n_freq: usize,
    pub spacing: Spacing,
    /// Sanathanan-Koerner passes after the initial Levy solve.
    pub sk_passes: usize,
    /// Grid bounds as fractions of the Nyquist frequency.
    pub lo: f64,
    pub hi: f64,
    /// Multiply the discrete response by `e^{j w Ts / 2}` before fitting,
    /// undoing the half-sample lag of a zero-order hold. Meant for systems
    /// that are themselves sampled continuous dynamics.
    pub zoh_compensation: bool,
}

impl FitOptions {
    /// Options for inverting `zoh_discretize`.
    pub fn for_sampled_system() -> Self {
        Self {
            zoh_compensation: true,
            ..Self::default()
        }
    }

    fn target(&self, g: C64, w: f64, ts: f64) -> C64 {
        if self.zoh_compensation {
            g * C64::from_polar(1.0, 0.5 * w * ts)
        } else {
            g
        }
    }
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            n_freq: 500,
            spacing: Spacing::Linear,
            sk_passes: 5,
            lo: 0.01,
            hi: 0.95,
            zoh_compensation: false,
        }
    }
}

/// Fit frequencies in rad/s.
pub fn fit_grid(ts: f64, opts: &FitOptions) -> Vec<f64> {
    let (lo, hi) = (opts.lo * PI / ts, opts.hi * PI / ts);
    let n = opts.n_freq.max(2);
    let t = |i: usize| i as f64 / (n - 1) as f64;
    match opts.spacing {
        Spacing::Linear => (0..n).map(|i| lo + (hi - lo) * t(i)).collect(),
        Spacing::Log => (0..n).map(|i| lo * (hi / lo).powf(t(i))).collect(),
    }
}

/// `sum_i q_i e^{-j w Ts i}`.
pub fn fir_entry_response(taps: &[f64], ts: f64, w: f64) -> C64 {
    let z_inv = C64::from_polar(1.0, -w * ts);
    taps.iter()
        .rev()
        .fold(C64::new(0.0, 0.0), |acc, &q| acc * z_inv + q)
}

#[derive(Clone, Debug)]
pub struct EntryFit {
    pub tf: RationalTf,
    /// Some fitted pole was in the right half-plane and got mirrored.
    pub reflected: bool,
    /// Relative L2 error of the fit on the grid.
    pub residual: f64,
}

/// Fit `structure` to response samples `(w, G(jw))`.
pub fn fit_response(
    samples: &[(f64, C64)],
    structure: Structure,
    opts: &FitOptions,
) -> Result<EntryFit> {
    let Structure {
        n_zeros: nz,
        n_poles: np,
    } = structure;
    if np < nz {
        return Err(Error::InvalidArgument(format!(
            "need n_poles >= n_zeros, got {np} < {nz}"
        )));
    }
    let n_par = nz + 1 + np;
    if 2 * samples.len() < n_par {
        return Err(Error::Fit(format!(
            "{} samples cannot determine {n_par} parameters",
            samples.len()
        )));
    }
    let m = samples.len();
    let mut weights = vec![1.0; m];
    let mut den = vec![1.0];
    let mut num = vec![0.0];
    for _ in 0..=opts.sk_passes {
        // N(s) - G (D(s) - s^np) = G s^np, linear in the coefficients
        let mut a = DMatrix::zeros(2 * m, n_par);
        let mut rhs = DVector::zeros(2 * m);
        for (r, (&(w, g), &wt)) in samples.iter().zip(&weights).enumerate() {
            let s = C64::new(0.0, w);
            let mut col = 0;
            for k in (0..=nz).rev() {
                let v = s.powu(k as u32) * wt;
                a[(r, col)] = v.re;
                a[(m + r, col)] = v.im;
                col += 1;
            }
            for k in (0..np).rev() {
                let v = -g * s.powu(k as u32) * wt;
                a[(r, col)] = v.re;
                a[(m + r, col)] = v.im;
                col += 1;
            }
            let v = g * s.powu(np as u32) * wt;
            rhs[r] = v.re;
            rhs[m + r] = v.im;
        }
        let scale: Vec<f64> = (0..n_par)
            .map(|j| a.column(j).norm().max(f64::MIN_POSITIVE))
            .collect();
        for (j, s) in scale.iter().enumerate() {
            a.column_mut(j).scale_mut(1.0 / s);
        }
        let svd = a.svd(true, true);
        let smax = svd.singular_values.max();
        let smin = svd.singular_values.min();
        if !(smin > 1e-10 * smax) {
            return Err(Error::Fit(format!(
                "normal equations are rank deficient (condition {:.1e}); try fewer zeros or poles",
                smax / smin
            )));
        }
        let x = svd
            .solve(&rhs, 0.0)
            .map_err(|e| Error::Fit(e.to_string()))?;
        let x: Vec<f64> = x.iter().zip(&scale).map(|(v, s)| v / s).collect();
        num = x[..=nz].to_vec();
        den = std::iter::once(1.0)
            .chain(x[nz + 1..].iter().copied())
            .collect();
        for (wt, &(w, _)) in weights.iter_mut().zip(samples) {
            *wt = 1.0
                / polyval(&den, C64::new(0.0, w))
                    .norm()
                    .max(f64::MIN_POSITIVE);
        }
    }
    let roots = poly_roots(&den);
    let reflected = roots.iter().any(|p| p.re > 0.0);
    if reflected {
        let mirrored: Vec<C64> = roots
            .iter()
            .map(|p| {
                if p.re > 0.0 {
                    C64::new(-p.re, p.im)
                } else {
                    *p
                }
            })
            .collect();
        den = poly_from_roots(&mirrored);
    }
    let tf = RationalTf::new(num, den)?;
    let (mut err, mut tot) = (0.0, 0.0);
    for &(w, g) in samples {
        err += (tf.eval(C64::new(0.0, w)) - g).norm_sqr();
        tot += g.norm_sqr();
    }
    let residual = if tot > 0.0 {
        (err / tot).sqrt()
    } else {
        err.sqrt()
    };
    Ok(EntryFit {
        tf,
        reflected,
        residual,
    })
}

/// Fit a continuous transfer function to one FIR entry `sum q_i z^-i`.
pub fn fit_ct_entry(
    taps: &[f64],
    ts: f64,
    structure: Structure,
    opts: &FitOptions,
) -> Result<EntryFit> {
    if !(ts > 0.0 && ts.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "sample time must be > 0, got {ts}"
        )));
    }
    if taps.is_empty() {
        return Err(Error::InvalidArgument("no taps".into()));
    }
    let samples: Vec<_> = fit_grid(ts, opts)
        .into_iter()
        .map(|w| (w, opts.target(fir_entry_response(taps, ts, w), w, ts)))
        .collect();
    fit_response(&samples, structure, opts)
}

/// Fit a discrete stable SISO system.
pub fn fit_ct_system(h: &StateSpace, structure: Structure, opts: &FitOptions) -> Result<EntryFit> {
    let ts = h
        .domain
        .sample_time()
        .ok_or_else(|| Error::Domain("fit needs a discrete system".into()))?;
    if h.n_inputs() != 1 || h.n_outputs() != 1 {
        return Err(Error::Dimension("fit needs a SISO system".into()));
    }
    if !crate::lti::is_stable(h) {
        return Err(Error::Unstable(h.stability_measure()));
    }
    let samples = fit_grid(ts, opts)
        .into_iter()
        .map(|w| Ok((w, opts.target(h.freq_response(w)?[(0, 0)], w, ts))))
        .collect::<Result<Vec<_>>>()?;
    fit_response(&samples, structure, opts)
}

/// Matrix of fitted entries; `None` is an identically zero entry.
#[derive(Clone, Debug)]
pub struct TfMatrix {
    pub entries: Vec<Vec<Option<RationalTf>>>,
}

impl TfMatrix {
    pub fn from_diagonal(d: Vec<RationalTf>) -> Self {
        let n = d.len();
        let mut entries = vec![vec![None; n]; n];
        for (i, tf) in d.into_iter().enumerate() {
            entries[i][i] = Some(tf);
        }
        Self { entries }
    }

    pub fn nrows(&self) -> usize {
        self.entries.len()
    }

    pub fn ncols(&self) -> usize {
        self.entries.first().map_or(0, |r| r.len())
    }

    /// Continuous state-space realization, one canonical block per entry.
    pub fn to_state_space(&self) -> StateSpace {
        let (p, m) = (self.nrows(), self.ncols());
        let blocks: Vec<_> = self
            .entries
            .iter()
            .enumerate()
            .flat_map(|(i, row)| {
                row.iter()
                    .enumerate()
                    .filter_map(move |(j, e)| e.as_ref().map(|tf| (i, j, tf.to_state_space())))
            })
            .collect();
        let n: usize = blocks.iter().map(|b| b.2.n_states()).sum();
        let mut a = DMatrix::zeros(n, n);
        let mut b = DMatrix::zeros(n, m);
        let mut c = DMatrix::zeros(p, n);
        let mut d = DMatrix::zeros(p, m);
        let mut off = 0;
        for (i, j, ss) in &blocks {
            let k = ss.n_states();
            a.view_mut((off, off), (k, k)).copy_from(&ss.a);
            b.view_mut((off, *j), (k, 1)).copy_from(&ss.b);
            c.view_mut((*i, off), (1, k)).copy_from(&ss.c);
            d[(*i, *j)] += ss.d[(0, 0)];
            off += k;
        }
        StateSpace::new(a, b, c, d, Domain::Continuous).expect("block realization is consistent")
    }
}

#[derive(Clone, Debug)]
pub struct ControllerFit {
    pub tf: TfMatrix,
    /// Per-entry fits, `None` where the entry is identically zero.
    pub fits: Vec<Vec<Option<EntryFit>>>,
}

impl ControllerFit {
    pub fn any_reflected(&self) -> bool {
        self.fits.iter().flatten().flatten().any(|f| f.reflected)
    }

    pub fn worst_residual(&self) -> f64 {
        self.fits
            .iter()
            .flatten()
            .flatten()
            .map(|f| f.residual)
            .fold(0.0, f64::max)
    }
}

/// Fit every nonzero entry of an FIR controller; `structure(i, j)` picks the
/// order of entry `(i, j)`.
pub fn fit_ct_controller(
    k: &FirController,
    structure: impl Fn(usize, usize) -> Structure,
    opts: &FitOptions,
) -> Result<ControllerFit> {
    let (p, m) = (k.n_u(), k.n_y());
    let mut entries = vec![vec![None; m]; p];
    let mut fits = vec![vec![None; m]; p];
    for i in 0..p {
        for j in 0..m {
            let taps: Vec<f64> = k.taps().iter().map(|q| q[(i, j)]).collect();
            if taps.iter().all(|v| *v == 0.0) {
                continue;
            }
            let f = fit_ct_entry(&taps, k.ts, structure(i, j), opts)?;
            entries[i][j] = Some(f.tf.clone());
            fits[i][j] = Some(f);
        }
    }
    Ok(ControllerFit {
        tf: TfMatrix { entries },
        fits,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lti::zoh_discretize_ss;

    #[test]
    fn static_gain_fits_exactly() {
        let f = fit_ct_entry(&[-1.25], 0.1, Structure::new(0, 0), &FitOptions::default()).unwrap();
        assert_eq!(f.tf.den, vec![1.0]);
        assert!((f.tf.num[0] + 1.25).abs() < 1e-12);
        assert!(f.residual < 1e-12);
    }

    #[test]
    fn first_order_roundtrip() {
        let g = RationalTf::new(vec![1.0], vec![1.0, 2.0]).unwrap();
        let h = zoh_discretize_ss(&g.to_state_space(), 0.05).unwrap();
        let f = fit_ct_system(&h, Structure::new(0, 1), &FitOptions::for_sampled_system()).unwrap();
        let pole = f.tf.poles()[0].re;
        assert!((pole + 2.0).abs() < 0.04, "pole {pole}");
        let dc = f.tf.num[0] / f.tf.den[1];
        assert!((dc - 0.5).abs() < 0.01, "dc gain {dc}");
        assert!(!f.reflected);
    }

    #[test]
    fn realization_matches_evaluation() {
        let g = RationalTf::new(vec![2.0, -1.0, 3.0], vec![1.0, 0.5, 4.0]).unwrap();
        let ss = g.to_state_space();
        for w in [0.0, 0.3, 2.0, 11.0] {
            let s = C64::new(0.0, w);
            let r = ss.eval_at(s).unwrap()[(0, 0)];
            assert!((r - g.eval(s)).norm() < 1e-12);
        }
    }

    #[test]
    fn poly_roots_roundtrip() {
        let roots = [
            C64::new(-1.0, 2.0),
            C64::new(-1.0, -2.0),
            C64::new(-3.0, 0.0),
        ];
        let c = poly_from_roots(&roots);
        let mut back: Vec<_> = poly_roots(&c);
        back.sort_by(|a, b| {
            a.re.partial_cmp(&b.re)
                .unwrap()
                .then(a.im.partial_cmp(&b.im).unwrap())
        });
        assert!((back[0] - roots[2]).norm() < 1e-10);
    }

    #[test]
    fn zero_controller_stays_zero() {
        let k = FirController::new(vec![DMatrix::zeros(2, 3); 2], 0.1).unwrap();
        let f = fit_ct_controller(&k, |_, _| Structure::new(0, 1), &FitOptions::default()).unwrap();
        assert!(f.tf.entries.iter().flatten().all(|e| e.is_none()));
        let ss = f.tf.to_state_space();
        assert_eq!(ss.n_states(), 0);
        assert_eq!(ss.d, DMatrix::zeros(2, 3));
    }

    #[test]
    fn overparametrized_fit_is_rejected() {
        let r = fit_ct_entry(&[1.0], 0.1, Structure::new(2, 2), &FitOptions::default());
        assert!(matches!(r, Err(Error::Fit(_))));
    }

    #[test]
    fn improper_request_is_rejected() {
        let r = fit_ct_entry(
            &[1.0, 0.5],
            0.1,
            Structure::new(2, 1),
            &FitOptions::default(),
        );
        assert!(r.is_err());
    }
}
