//! State-space containers, ZOH discretization, interconnection, stability
//! and grid-based H-infinity norm evaluation.

use nalgebra::{Complex, DMatrix};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{dim_err, Error, Result};

pub type C64 = Complex<f64>;

/// Default margin used by [`is_stable`].
pub const STABILITY_MARGIN: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Domain {
    Continuous,
    /// Sample period in seconds.
    Discrete(f64),
}

impl Domain {
    pub fn is_discrete(&self) -> bool {
        matches!(self, Domain::Discrete(_))
    }

    pub fn sample_time(&self) -> Option<f64> {
        match self {
            Domain::Continuous => None,
            Domain::Discrete(ts) => Some(*ts),
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            Domain::Discrete(ts) if !(ts.is_finite() && *ts > 0.0) => Err(Error::InvalidArgument(
                format!("sample time must be positive and finite, got {ts}"),
            )),
            _ => Ok(()),
        }
    }

    fn same_as(&self, other: &Domain) -> bool {
        match (self, other) {
            (Domain::Continuous, Domain::Continuous) => true,
            (Domain::Discrete(a), Domain::Discrete(b)) => (a - b).abs() <= 1e-12 * a.abs().max(1.0),
            _ => false,
        }
    }
}

fn check_finite(name: &str, m: &DMatrix<f64>) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "{name} has non-finite entries"
        )))
    }
}

fn check_shape(name: &str, m: &DMatrix<f64>, rows: usize, cols: usize) -> Result<()> {
    if m.shape() != (rows, cols) {
        return dim_err(format!(
            "{name} is {}x{}, expected {rows}x{cols}",
            m.nrows(),
            m.ncols()
        ));
    }
    check_finite(name, m)
}

#[derive(Clone, Debug, PartialEq)]
pub struct StateSpace {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub d: DMatrix<f64>,
    pub domain: Domain,
}

impl StateSpace {
    pub fn new(
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        c: DMatrix<f64>,
        d: DMatrix<f64>,
        domain: Domain,
    ) -> Result<Self> {
        domain.validate()?;
        let n = a.nrows();
        check_shape("A", &a, n, n)?;
        check_shape("B", &b, n, b.ncols())?;
        check_shape("C", &c, c.nrows(), n)?;
        check_shape("D", &d, c.nrows(), b.ncols())?;
        Ok(Self { a, b, c, d, domain })
    }

    /// Zero-state system `y = D u`.
    pub fn static_gain(d: DMatrix<f64>, domain: Domain) -> Result<Self> {
        let (p, m) = d.shape();
        Self::new(
            DMatrix::zeros(0, 0),
            DMatrix::zeros(0, m),
            DMatrix::zeros(p, 0),
            d,
            domain,
        )
    }

    pub fn n_states(&self) -> usize {
        self.a.nrows()
    }

    pub fn n_inputs(&self) -> usize {
        self.b.ncols()
    }

    pub fn n_outputs(&self) -> usize {
        self.c.nrows()
    }

    pub fn eigenvalues(&self) -> Vec<C64> {
        eigenvalues(&self.a)
    }

    /// Spectral radius (discrete) or spectral abscissa (continuous).
    pub fn stability_measure(&self) -> f64 {
        let eig = self.eigenvalues();
        match self.domain {
            Domain::Discrete(_) => eig.iter().map(|z| z.norm()).fold(0.0, f64::max),
            Domain::Continuous => eig.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max),
        }
    }

    /// `C (zeta I - A)^{-1} B + D`.
    pub fn eval_at(&self, zeta: C64) -> Result<DMatrix<C64>> {
        let n = self.n_states();
        let d = self.d.map(|v| C64::new(v, 0.0));
        if n == 0 {
            return Ok(d);
        }
        let mut m = self.a.map(|v| C64::new(-v, 0.0));
        for i in 0..n {
            m[(i, i)] += zeta;
        }
        let b = self.b.map(|v| C64::new(v, 0.0));
        let x = m
            .lu()
            .solve(&b)
            .ok_or_else(|| Error::Numeric(format!("resolvent singular at {zeta}")))?;
        let c = self.c.map(|v| C64::new(v, 0.0));
        Ok(c * x + d)
    }

    /// Frequency response at angular frequency `w` (rad/sample for discrete
    /// systems expressed as `theta = w * Ts`, rad/s for continuous).
    pub fn freq_response(&self, w: f64) -> Result<DMatrix<C64>> {
        self.eval_at(self.point(w))
    }

    fn point(&self, w: f64) -> C64 {
        match self.domain {
            Domain::Continuous => C64::new(0.0, w),
            Domain::Discrete(ts) => C64::from_polar(1.0, w * ts),
        }
    }

    pub fn sigma_max_at(&self, w: f64) -> Result<f64> {
        Ok(sigma_max(&self.freq_response(w)?))
    }
}

/// Eigenvalues through LAPACK `dgeev` (balanced QR). Falls back to the
/// nalgebra Schur iteration with a bounded iteration count if LAPACK reports
/// non-convergence; returns NaNs if that also fails.
pub(crate) fn eigenvalues(a: &DMatrix<f64>) -> Vec<C64> {
    let n = a.nrows();
    if n == 0 {
        return Vec::new();
    }
    let n32 = n as i32;
    let mut m = a.clone();
    let (mut wr, mut wi) = (vec![0.0; n], vec![0.0; n]);
    let (mut vl, mut vr) = ([0.0], [0.0]);
    let lwork = 8 * n as i32;
    let mut work = vec![0.0; lwork as usize];
    let mut info = 0;
    unsafe {
        lapack::dgeev(
            b'N',
            b'N',
            n32,
            m.as_mut_slice(),
            n32,
            &mut wr,
            &mut wi,
            &mut vl,
            1,
            &mut vr,
            1,
            &mut work,
            lwork,
            &mut info,
        );
    }
    if info == 0 {
        return wr
            .into_iter()
            .zip(wi)
            .map(|(r, i)| C64::new(r, i))
            .collect();
    }
    match nalgebra::linalg::Schur::try_new(a.clone(), f64::EPSILON, 100 * n) {
        Some(s) => s.complex_eigenvalues().iter().copied().collect(),
        None => vec![C64::new(f64::NAN, f64::NAN); n],
    }
}

pub(crate) fn sigma_max(m: &DMatrix<C64>) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0.0;
    }
    m.clone()
        .singular_values()
        .iter()
        .copied()
        .fold(0.0, f64::max)
}

/// Nine-matrix plant with channels `w -> z`, `u -> y`.
#[derive(Clone, Debug, PartialEq)]
pub struct GeneralizedPlant {
    pub a: DMatrix<f64>,
    pub b1: DMatrix<f64>,
    pub b2: DMatrix<f64>,
    pub c1: DMatrix<f64>,
    pub c2: DMatrix<f64>,
    pub d11: DMatrix<f64>,
    pub d12: DMatrix<f64>,
    pub d21: DMatrix<f64>,
    pub d22: DMatrix<f64>,
    pub domain: Domain,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlantDims {
    pub nx: usize,
    pub nw: usize,
    pub nu: usize,
    pub nz: usize,
    pub ny: usize,
}

impl GeneralizedPlant {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        a: DMatrix<f64>,
        b1: DMatrix<f64>,
        b2: DMatrix<f64>,
        c1: DMatrix<f64>,
        c2: DMatrix<f64>,
        d11: DMatrix<f64>,
        d12: DMatrix<f64>,
        d21: DMatrix<f64>,
        d22: DMatrix<f64>,
        domain: Domain,
    ) -> Result<Self> {
        domain.validate()?;
        let nx = a.nrows();
        let (nw, nu, nz, ny) = (b1.ncols(), b2.ncols(), c1.nrows(), c2.nrows());
        check_shape("A", &a, nx, nx)?;
        check_shape("B1", &b1, nx, nw)?;
        check_shape("B2", &b2, nx, nu)?;
        check_shape("C1", &c1, nz, nx)?;
        check_shape("C2", &c2, ny, nx)?;
        check_shape("D11", &d11, nz, nw)?;
        check_shape("D12", &d12, nz, nu)?;
        check_shape("D21", &d21, ny, nw)?;
        check_shape("D22", &d22, ny, nu)?;
        Ok(Self {
            a,
            b1,
            b2,
            c1,
            c2,
            d11,
            d12,
            d21,
            d22,
            domain,
        })
    }

    pub fn dims(&self) -> PlantDims {
        PlantDims {
            nx: self.a.nrows(),
            nw: self.b1.ncols(),
            nu: self.b2.ncols(),
            nz: self.c1.nrows(),
            ny: self.c2.nrows(),
        }
    }

    pub fn has_zero_d22(&self) -> bool {
        self.d22.iter().all(|v| *v == 0.0)
    }

    pub(crate) fn require_zero_d22(&self) -> Result<()> {
        if self.has_zero_d22() {
            Ok(())
        } else {
            Err(Error::Precondition("D22 must be exactly zero".into()))
        }
    }

    pub(crate) fn require_discrete(&self) -> Result<f64> {
        self.domain
            .sample_time()
            .ok_or_else(|| Error::Domain("plant must be discrete-time".into()))
    }

    /// Open-loop `w -> z` map.
    pub fn performance_channel(&self) -> StateSpace {
        StateSpace {
            a: self.a.clone(),
            b: self.b1.clone(),
            c: self.c1.clone(),
            d: self.d11.clone(),
            domain: self.domain,
        }
    }
}

/// Exact sampled equivalent of `x' = A x + B u` under a zero-order hold:
/// returns `(exp(A Ts), int_0^Ts exp(A s) ds B)`.
pub fn zoh_matrices(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    ts: f64,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    if !(ts.is_finite() && ts > 0.0) {
        return Err(Error::InvalidArgument(format!("Ts must be > 0, got {ts}")));
    }
    let (n, m) = (a.nrows(), b.ncols());
    let mut big = DMatrix::zeros(n + m, n + m);
    big.view_mut((0, 0), (n, n)).copy_from(&(a * ts));
    big.view_mut((0, n), (n, m)).copy_from(&(b * ts));
    let e = if n + m == 0 { big } else { big.exp() };
    if e.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("matrix exponential overflowed".into()));
    }
    Ok((
        e.view((0, 0), (n, n)).into_owned(),
        e.view((0, n), (n, m)).into_owned(),
    ))
}

pub fn zoh_discretize(plant: &GeneralizedPlant, ts: f64) -> Result<GeneralizedPlant> {
    if plant.domain.is_discrete() {
        return Err(Error::Domain("plant is already discrete".into()));
    }
    let (nw, nu) = (plant.b1.ncols(), plant.b2.ncols());
    let mut b = DMatrix::zeros(plant.a.nrows(), nw + nu);
    b.view_mut((0, 0), (b.nrows(), nw)).copy_from(&plant.b1);
    b.view_mut((0, nw), (b.nrows(), nu)).copy_from(&plant.b2);
    let (ad, bd) = zoh_matrices(&plant.a, &b, ts)?;
    GeneralizedPlant::new(
        ad,
        bd.columns(0, nw).into_owned(),
        bd.columns(nw, nu).into_owned(),
        plant.c1.clone(),
        plant.c2.clone(),
        plant.d11.clone(),
        plant.d12.clone(),
        plant.d21.clone(),
        plant.d22.clone(),
        Domain::Discrete(ts),
    )
}

pub fn zoh_discretize_ss(sys: &StateSpace, ts: f64) -> Result<StateSpace> {
    if sys.domain.is_discrete() {
        return Err(Error::Domain("system is already discrete".into()));
    }
    let (ad, bd) = zoh_matrices(&sys.a, &sys.b, ts)?;
    StateSpace::new(ad, bd, sys.c.clone(), sys.d.clone(), Domain::Discrete(ts))
}

fn blocks2x2(
    a11: &DMatrix<f64>,
    a12: &DMatrix<f64>,
    a21: &DMatrix<f64>,
    a22: &DMatrix<f64>,
) -> DMatrix<f64> {
    let (r1, c1) = (a11.nrows(), a11.ncols());
    let (r2, c2) = (a22.nrows(), a22.ncols());
    let mut m = DMatrix::zeros(r1 + r2, c1 + c2);
    m.view_mut((0, 0), (r1, c1)).copy_from(a11);
    m.view_mut((0, c1), (r1, c2)).copy_from(a12);
    m.view_mut((r1, 0), (r2, c1)).copy_from(a21);
    m.view_mut((r1, c1), (r2, c2)).copy_from(a22);
    m
}

/// Lower LFT of the plant with `u = K y`; states are stacked
/// `[plant; controller]`.
pub fn close_loop(plant: &GeneralizedPlant, k: &StateSpace) -> Result<StateSpace> {
    plant.require_zero_d22()?;
    let dims = plant.dims();
    if k.n_inputs() != dims.ny || k.n_outputs() != dims.nu {
        return dim_err(format!(
            "controller is {}x{} (outputs x inputs), plant needs {}x{}",
            k.n_outputs(),
            k.n_inputs(),
            dims.nu,
            dims.ny
        ));
    }
    if !plant.domain.same_as(&k.domain) {
        return Err(Error::Domain(format!(
            "plant is {:?} but controller is {:?}",
            plant.domain, k.domain
        )));
    }
    let (ak, bk, ck, dk) = (&k.a, &k.b, &k.c, &k.d);
    let a = blocks2x2(
        &(&plant.a + &plant.b2 * dk * &plant.c2),
        &(&plant.b2 * ck),
        &(bk * &plant.c2),
        ak,
    );
    let b1 = &plant.b1 + &plant.b2 * dk * &plant.d21;
    let b2 = bk * &plant.d21;
    let mut b = DMatrix::zeros(a.nrows(), dims.nw);
    b.view_mut((0, 0), (dims.nx, dims.nw)).copy_from(&b1);
    b.view_mut((dims.nx, 0), (k.n_states(), dims.nw))
        .copy_from(&b2);
    let mut c = DMatrix::zeros(dims.nz, a.ncols());
    c.view_mut((0, 0), (dims.nz, dims.nx))
        .copy_from(&(&plant.c1 + &plant.d12 * dk * &plant.c2));
    c.view_mut((0, dims.nx), (dims.nz, k.n_states()))
        .copy_from(&(&plant.d12 * ck));
    let d = &plant.d11 + &plant.d12 * dk * &plant.d21;
    StateSpace::new(a, b, c, d, plant.domain)
}

pub fn is_stable(sys: &StateSpace) -> bool {
    is_stable_with_margin(sys, STABILITY_MARGIN)
}

pub fn is_stable_with_margin(sys: &StateSpace, margin: f64) -> bool {
    let eig = sys.eigenvalues();
    match sys.domain {
        Domain::Discrete(_) => eig.iter().all(|z| z.norm() < 1.0 - margin),
        Domain::Continuous => eig.iter().all(|z| z.re < -margin),
    }
}

/// Markov parameters `D, CB, CAB, ...` (N of them).
pub fn impulse_response(sys: &StateSpace, n: usize) -> Result<Vec<DMatrix<f64>>> {
    if !sys.domain.is_discrete() {
        return Err(Error::Domain(
            "impulse response needs a discrete system".into(),
        ));
    }
    if n == 0 {
        return Err(Error::InvalidArgument("N must be at least 1".into()));
    }
    let mut out = Vec::with_capacity(n);
    out.push(sys.d.clone());
    let mut ak_b = sys.b.clone();
    for _ in 1..n {
        out.push(&sys.c * &ak_b);
        ak_b = &sys.a * ak_b;
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug)]
pub struct NormGrid {
    pub n_grid: usize,
    pub refine_tol: f64,
    /// Number of local maxima refined (the best one always is).
    pub n_refine: usize,
}

impl Default for NormGrid {
    fn default() -> Self {
        Self {
            n_grid: 2048,
            refine_tol: 1e-6,
            n_refine: 8,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HinfNorm {
    pub value: f64,
    /// rad/s (continuous) or rad/s with `theta = w Ts` (discrete);
    /// `f64::INFINITY` when the peak is the feedthrough.
    pub peak_frequency: f64,
}

/// H-infinity norm from a frequency grid with golden-section refinement.
pub fn hinf_norm_grid(sys: &StateSpace, n_grid: usize, refine_tol: f64) -> Result<f64> {
    Ok(hinf_norm_grid_with(
        sys,
        &NormGrid {
            n_grid,
            refine_tol,
            ..NormGrid::default()
        },
    )?
    .value)
}

pub fn hinf_norm(sys: &StateSpace) -> Result<f64> {
    Ok(hinf_norm_grid_with(sys, &NormGrid::default())?.value)
}

pub fn hinf_norm_grid_with(sys: &StateSpace, cfg: &NormGrid) -> Result<HinfNorm> {
    if cfg.n_grid < 3 {
        return Err(Error::InvalidArgument("n_grid must be at least 3".into()));
    }
    if !(cfg.refine_tol > 0.0) {
        return Err(Error::InvalidArgument("refine_tol must be > 0".into()));
    }
    if !is_stable(sys) {
        return Err(Error::Unstable(sys.stability_measure()));
    }
    if sys.n_outputs() == 0 || sys.n_inputs() == 0 {
        return Ok(HinfNorm {
            value: 0.0,
            peak_frequency: 0.0,
        });
    }
    let eig = sys.eigenvalues();

    // Work in a 1-D coordinate u: u = theta in [0, pi] for discrete systems,
    // u = log10(w) for continuous ones.
    let (to_freq, mut us): (Box<dyn Fn(f64) -> f64 + Sync>, Vec<f64>) = match sys.domain {
        Domain::Discrete(ts) => {
            let mut us: Vec<f64> = (0..cfg.n_grid)
                .map(|i| std::f64::consts::PI * i as f64 / (cfg.n_grid - 1) as f64)
                .collect();
            us.extend(eig.iter().map(|z| z.arg().abs()));
            (Box::new(move |u| u / ts), us)
        }
        Domain::Continuous => {
            let mags: Vec<f64> = eig.iter().map(|z| z.norm()).filter(|m| *m > 0.0).collect();
            let lo = mags
                .iter()
                .copied()
                .fold(1e-4_f64, |a, m| a.min(0.01 * m))
                .log10();
            let hi = mags
                .iter()
                .copied()
                .fold(1e6_f64, |a, m| a.max(100.0 * m))
                .log10();
            let mut us: Vec<f64> = (0..cfg.n_grid)
                .map(|i| lo + (hi - lo) * i as f64 / (cfg.n_grid - 1) as f64)
                .collect();
            us.extend(
                eig.iter()
                    .filter(|z| z.im.abs() > 0.0)
                    .map(|z| z.im.abs().log10()),
            );
            (Box::new(|u: f64| 10f64.powf(u)), us)
        }
    };
    us.sort_by(f64::total_cmp);
    us.dedup();

    let gain = |u: f64| sys.sigma_max_at(to_freq(u));
    let vals: Vec<f64> = us.par_iter().map(|&u| gain(u)).collect::<Result<_>>()?;

    let mut best = HinfNorm {
        value: 0.0,
        peak_frequency: 0.0,
    };
    if sys.domain == Domain::Continuous {
        // omega = 0 and the feedthrough limit
        let dc = sys.sigma_max_at(0.0)?;
        if dc > best.value {
            best = HinfNorm {
                value: dc,
                peak_frequency: 0.0,
            };
        }
        let inf = sigma_max(&sys.d.map(|v| C64::new(v, 0.0)));
        if inf > best.value {
            best = HinfNorm {
                value: inf,
                peak_frequency: f64::INFINITY,
            };
        }
    }

    let mut peaks: Vec<usize> = (0..us.len())
        .filter(|&i| {
            let l = if i == 0 {
                f64::NEG_INFINITY
            } else {
                vals[i - 1]
            };
            let r = if i + 1 == us.len() {
                f64::NEG_INFINITY
            } else {
                vals[i + 1]
            };
            vals[i] >= l && vals[i] >= r
        })
        .collect();
    peaks.sort_by(|&i, &j| vals[j].total_cmp(&vals[i]).then(i.cmp(&j)));
    peaks.truncate(cfg.n_refine.max(1));

    let refined: Vec<(f64, f64)> = peaks
        .par_iter()
        .map(|&i| {
            let a = us[i.saturating_sub(1)];
            let b = us[(i + 1).min(us.len() - 1)];
            golden_max(&gain, a, b, us[i], vals[i], cfg.refine_tol)
        })
        .collect::<Result<_>>()?;
    for (u, v) in refined {
        if v > best.value {
            best = HinfNorm {
                value: v,
                peak_frequency: to_freq(u),
            };
        }
    }
    Ok(best)
}

/// Golden-section search for a maximum of `f` on `[a, b]`; returns the best
/// point seen, never worse than the seed `(u0, f0)`.
fn golden_max(
    f: &dyn Fn(f64) -> Result<f64>,
    mut a: f64,
    mut b: f64,
    u0: f64,
    f0: f64,
    tol: f64,
) -> Result<(f64, f64)> {
    const INV_PHI: f64 = 0.618_033_988_749_894_8;
    let mut best = (u0, f0);
    let scale = a.abs().max(b.abs()).max(1e-12);
    let mut x1 = b - INV_PHI * (b - a);
    let mut x2 = a + INV_PHI * (b - a);
    let (mut f1, mut f2) = (f(x1)?, f(x2)?);
    for _ in 0..200 {
        if (b - a) <= tol * scale {
            break;
        }
        if f1 > f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - INV_PHI * (b - a);
            f1 = f(x1)?;
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + INV_PHI * (b - a);
            f2 = f(x2)?;
        }
        for (x, v) in [(x1, f1), (x2, f2)] {
            if v > best.1 {
                best = (x, v);
            }
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn siso(a: f64, b: f64, c: f64, d: f64, domain: Domain) -> StateSpace {
        StateSpace::new(
            DMatrix::from_element(1, 1, a),
            DMatrix::from_element(1, 1, b),
            DMatrix::from_element(1, 1, c),
            DMatrix::from_element(1, 1, d),
            domain,
        )
        .unwrap()
    }

    #[test]
    fn zoh_of_zero_dynamics_is_identity_and_b() {
        let a = DMatrix::zeros(2, 2);
        let b = DMatrix::from_row_slice(2, 1, &[1.0, 2.0]);
        let (ad, bd) = zoh_matrices(&a, &b, 1.0).unwrap();
        assert_relative_eq!(ad, DMatrix::identity(2, 2), epsilon = 1e-14);
        assert_relative_eq!(bd, b, epsilon = 1e-14);
    }

    #[test]
    fn zoh_first_order_matches_closed_form() {
        // x' = -2x + u: ad = e^{-2T}, bd = (1 - e^{-2T}) / 2
        let (ad, bd) = zoh_matrices(
            &DMatrix::from_element(1, 1, -2.0),
            &DMatrix::from_element(1, 1, 1.0),
            0.3,
        )
        .unwrap();
        let e = (-0.6f64).exp();
        assert_relative_eq!(ad[(0, 0)], e, epsilon = 1e-14);
        assert_relative_eq!(bd[(0, 0)], (1.0 - e) / 2.0, epsilon = 1e-14);
    }

    #[test]
    fn constant_gain_norm() {
        let sys = StateSpace::static_gain(DMatrix::from_element(1, 1, 2.0), Domain::Discrete(1.0))
            .unwrap();
        assert_relative_eq!(hinf_norm(&sys).unwrap(), 2.0, epsilon = 1e-12);
        let sys =
            StateSpace::static_gain(DMatrix::from_element(1, 1, -2.0), Domain::Continuous).unwrap();
        assert_relative_eq!(hinf_norm(&sys).unwrap(), 2.0, epsilon = 1e-12);
    }

    #[test]
    fn first_order_discrete_peak_at_dc() {
        let sys = siso(0.5, 1.0, 1.0, 0.0, Domain::Discrete(1.0));
        let n = hinf_norm_grid_with(&sys, &NormGrid::default()).unwrap();
        assert_relative_eq!(n.value, 2.0, epsilon = 1e-12);
        assert_eq!(n.peak_frequency, 0.0);
    }

    #[test]
    fn lightly_damped_resonance_is_found() {
        // s^2 + 2 z w s + w^2 with z = 1e-3, w = 10; peak ~ 1/(2 z w^2)
        let (z, w) = (1e-3, 10.0);
        let sys = StateSpace::new(
            DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -w * w, -2.0 * z * w]),
            DMatrix::from_row_slice(2, 1, &[0.0, 1.0]),
            DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
            DMatrix::zeros(1, 1),
            Domain::Continuous,
        )
        .unwrap();
        let exact = 1.0 / (2.0 * z * w * w * (1.0 - z * z).sqrt());
        assert_relative_eq!(hinf_norm(&sys).unwrap(), exact, max_relative = 1e-6);
    }

    #[test]
    fn unstable_norm_is_an_error() {
        let sys = siso(1.5, 1.0, 1.0, 0.0, Domain::Discrete(1.0));
        assert!(matches!(hinf_norm(&sys), Err(Error::Unstable(_))));
    }

    #[test]
    fn stability_margins() {
        assert!(is_stable(&siso(0.5, 1.0, 1.0, 0.0, Domain::Discrete(1.0))));
        assert!(!is_stable(&siso(1.0, 1.0, 1.0, 0.0, Domain::Discrete(1.0))));
        assert!(!is_stable(&siso(0.0, 1.0, 1.0, 0.0, Domain::Continuous)));
        assert!(is_stable(&siso(-1e-3, 1.0, 1.0, 0.0, Domain::Continuous)));
    }

    #[test]
    fn impulse_response_of_first_order() {
        let sys = siso(0.5, 2.0, 3.0, 1.0, Domain::Discrete(0.1));
        let h = impulse_response(&sys, 4).unwrap();
        let vals: Vec<f64> = h.iter().map(|m| m[(0, 0)]).collect();
        assert_eq!(vals, vec![1.0, 6.0, 3.0, 1.5]);
    }

    #[test]
    fn invalid_dimensions_are_rejected() {
        let r = StateSpace::new(
            DMatrix::zeros(2, 2),
            DMatrix::zeros(3, 1),
            DMatrix::zeros(1, 2),
            DMatrix::zeros(1, 1),
            Domain::Continuous,
        );
        assert!(matches!(r, Err(Error::Dimension(_))));
        let r = StateSpace::static_gain(DMatrix::zeros(1, 1), Domain::Discrete(0.0));
        assert!(r.is_err());
        let r = StateSpace::static_gain(DMatrix::from_element(1, 1, f64::NAN), Domain::Continuous);
        assert!(r.is_err());
    }

    #[test]
    fn closed_loop_with_static_gain() {
        let plant = GeneralizedPlant::new(
            DMatrix::from_element(1, 1, 1.2),
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::zeros(1, 1),
            DMatrix::from_element(1, 1, 0.5),
            DMatrix::from_element(1, 1, 0.1),
            DMatrix::zeros(1, 1),
            Domain::Discrete(1.0),
        )
        .unwrap();
        let k = StateSpace::static_gain(DMatrix::from_element(1, 1, -1.0), Domain::Discrete(1.0))
            .unwrap();
        let cl = close_loop(&plant, &k).unwrap();
        assert_relative_eq!(cl.a[(0, 0)], 0.2, epsilon = 1e-15);
        assert_relative_eq!(cl.b[(0, 0)], 0.9, epsilon = 1e-15);
        assert_relative_eq!(cl.c[(0, 0)], 0.5, epsilon = 1e-15);
        assert_relative_eq!(cl.d[(0, 0)], -0.05, epsilon = 1e-15);
        let kc =
            StateSpace::static_gain(DMatrix::from_element(1, 1, -1.0), Domain::Continuous).unwrap();
        assert!(matches!(close_loop(&plant, &kc), Err(Error::Domain(_))));
    }
}
