//! Bundled plants and published controllers for the three worked examples.

use nalgebra::{DMatrix, DVector};

use crate::error::Result;
use crate::fir::{FirController, SparsityPattern};
use crate::lti::{zoh_discretize, Domain, GeneralizedPlant};

fn diag(v: &[f64]) -> DMatrix<f64> {
    DMatrix::from_diagonal(&DVector::from_row_slice(v))
}

/// Lower-triangular matrix of ones scaled by `s`, with `last` in the
/// bottom-right corner.
fn lower_ones(n: usize, s: f64, last: f64) -> DMatrix<f64> {
    let mut m = DMatrix::from_fn(n, n, |i, j| if j <= i { s } else { 0.0 });
    m[(n - 1, n - 1)] = last;
    m
}

/// Four-state, two-input, two-output plant (continuous time).
pub fn example1_continuous() -> GeneralizedPlant {
    let a = DMatrix::from_row_slice(
        4,
        4,
        &[
            -2.0, 1.0, 1.0, 1.0, //
            3.0, 0.0, 0.0, 2.0, //
            -1.0, 0.0, -2.0, -3.0, //
            -2.0, -1.0, 2.0, -1.0,
        ],
    );
    let mut b1 = DMatrix::zeros(4, 3);
    b1[(0, 0)] = 1.0;
    b1[(2, 0)] = 1.0;
    let b2 = DMatrix::from_row_slice(4, 2, &[0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0]);
    let mut c1 = DMatrix::zeros(3, 4);
    c1[(0, 0)] = 1.0;
    c1[(0, 2)] = -1.0;
    let c2 = DMatrix::from_row_slice(2, 4, &[1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
    let d12 = DMatrix::from_row_slice(3, 2, &[0.0, 0.0, 1.0, 0.0, 0.0, 1.0]);
    let d21 = DMatrix::from_row_slice(2, 3, &[0.0, 1.0, 0.0, 0.0, 0.0, 1.0]);
    GeneralizedPlant::new(
        a,
        b1,
        b2,
        c1,
        c2,
        DMatrix::zeros(3, 3),
        d12,
        d21,
        DMatrix::zeros(2, 2),
        Domain::Continuous,
    )
    .expect("example 1 data is consistent")
}

/// Five decoupled first-order channels, two of them unstable.
pub fn example2_continuous() -> GeneralizedPlant {
    GeneralizedPlant::new(
        diag(&[-1.0, 1.0, -1.0, -1.0, 1.0]),
        diag(&[0.2, 0.2, 0.2, 0.2, 0.1]),
        diag(&[2.0, 2.0, 2.0, 2.0, 1.0]),
        lower_ones(5, 0.05, 0.1),
        lower_ones(5, 0.5, 1.0),
        DMatrix::zeros(5, 5),
        DMatrix::zeros(5, 5),
        DMatrix::zeros(5, 5),
        DMatrix::zeros(5, 5),
        Domain::Continuous,
    )
    .expect("example 2 data is consistent")
}

pub const EXAMPLE3_MASSES: usize = 8;

/// Chain of `n` unit masses coupled by unit springs; states are positions
/// then velocities.
pub fn mass_spring_continuous(n: usize) -> GeneralizedPlant {
    let t = DMatrix::from_fn(n, n, |i, j| match i.abs_diff(j) {
        0 => -2.0,
        1 => 1.0,
        _ => 0.0,
    });
    let mut a = DMatrix::zeros(2 * n, 2 * n);
    a.view_mut((0, n), (n, n)).fill_with_identity();
    a.view_mut((n, 0), (n, n)).copy_from(&t);
    let mut b = DMatrix::zeros(2 * n, n);
    b.view_mut((n, 0), (n, n)).fill_with_identity();
    let mut d12 = DMatrix::zeros(2 * n, n);
    d12.view_mut((0, 0), (n, n))
        .copy_from(&(DMatrix::identity(n, n) * 10f64.sqrt()));
    GeneralizedPlant::new(
        a,
        b.clone(),
        b,
        DMatrix::identity(2 * n, 2 * n),
        DMatrix::identity(2 * n, 2 * n),
        DMatrix::zeros(2 * n, n),
        d12,
        DMatrix::zeros(2 * n, n),
        DMatrix::zeros(2 * n, n),
        Domain::Continuous,
    )
    .expect("mass-spring data is consistent")
}

pub fn example3_continuous() -> GeneralizedPlant {
    mass_spring_continuous(EXAMPLE3_MASSES)
}

/// Which bundled example.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExampleId {
    Ex1,
    Ex2,
    Ex3,
}

impl ExampleId {
    pub fn parse(name: &str) -> Option<Self> {
        match name.to_ascii_lowercase().as_str() {
            "ex1" | "1" => Some(Self::Ex1),
            "ex2" | "2" => Some(Self::Ex2),
            "ex3" | "3" => Some(Self::Ex3),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Ex1 => "ex1",
            Self::Ex2 => "ex2",
            Self::Ex3 => "ex3",
        }
    }

    pub fn continuous_plant(&self) -> GeneralizedPlant {
        match self {
            Self::Ex1 => example1_continuous(),
            Self::Ex2 => example2_continuous(),
            Self::Ex3 => example3_continuous(),
        }
    }

    pub fn sample_time(&self) -> f64 {
        match self {
            Self::Ex1 => 0.1,
            Self::Ex2 => 0.05,
            Self::Ex3 => 0.5,
        }
    }

    pub fn discrete_plant(&self) -> Result<GeneralizedPlant> {
        zoh_discretize(&self.continuous_plant(), self.sample_time())
    }

    /// The published sparsity pattern.
    pub fn pattern(&self) -> SparsityPattern {
        match self {
            Self::Ex1 => SparsityPattern::diagonal(2, 2),
            Self::Ex2 => SparsityPattern::from_fn(5, 5, |i, j| i == j && (i == 1 || i == 4)),
            Self::Ex3 => {
                let n = EXAMPLE3_MASSES;
                SparsityPattern::from_fn(n, 2 * n, |i, j| j == n + i)
            }
        }
    }
}

fn fir(taps: &[&[f64]], ts: f64, embed: impl Fn(&[f64]) -> DMatrix<f64>) -> FirController {
    FirController::new(taps.iter().map(|t| embed(t)).collect(), ts)
        .expect("published taps are consistent")
}

fn ex2_slots(v: &[f64]) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(5, 5);
    m[(1, 1)] = v[0];
    m[(4, 4)] = v[1];
    m
}

/// Published static controller of example 1.
pub fn ex1_k0() -> FirController {
    fir(&[&[-1.2775, -0.5685]], 0.1, diag)
}

/// Published two-tap controller of example 1.
pub fn ex1_k1() -> FirController {
    fir(&[&[-0.6543, -0.1993], &[-0.5344, -0.2237]], 0.1, diag)
}

/// Published three-tap controller of example 1.
pub fn ex1_k2() -> FirController {
    fir(
        &[&[-0.6377, -0.228], &[-0.2514, -0.1406], &[-0.3369, -0.2332]],
        0.1,
        diag,
    )
}

/// Published static controller of example 2 (only slots (2,2), (5,5)).
pub fn ex2_k0() -> FirController {
    fir(&[&[-9.1093, -12.372]], 0.05, ex2_slots)
}

/// Published two-tap controller of example 2.
pub fn ex2_k1() -> FirController {
    fir(&[&[-9.265, -12.68], &[-5.227, -15.84]], 0.05, ex2_slots)
}

/// Published velocity-feedback controller of example 3, `[0, Kv]`.
pub fn ex3_kv() -> FirController {
    let kv = [
        -0.7491, -0.706, -0.7255, -0.7316, -0.7316, -0.7255, -0.706, -0.7529,
    ];
    let n = EXAMPLE3_MASSES;
    let mut k = DMatrix::zeros(n, 2 * n);
    for (i, v) in kv.iter().enumerate() {
        k[(i, n + i)] = *v;
    }
    FirController::static_gain(k, 0.5).expect("published gain is consistent")
}

/// Published continuous-time equivalents as `(numerator, denominator)` per
/// diagonal slot, coefficients in descending powers of `s`.
pub type ContinuousDiag = Vec<(Vec<f64>, Vec<f64>)>;

pub fn ex1_k1_continuous() -> ContinuousDiag {
    vec![
        (vec![-8.469], vec![1.0, 7.382]),
        (vec![-4.167], vec![1.0, 10.24]),
    ]
}

pub fn ex1_k2_continuous() -> ContinuousDiag {
    vec![
        (vec![-189.7], vec![1.0, 40.21, 157.8]),
        (vec![-6.11e4], vec![1.0, 565.7, 1.254e5]),
    ]
}

pub fn ex2_k1_continuous() -> ContinuousDiag {
    vec![
        (vec![-120.0], vec![1.0, 8.501]),
        (vec![-616.7], vec![1.0, 22.48]),
    ]
}
