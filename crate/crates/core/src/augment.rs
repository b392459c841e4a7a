//! FIR synthesis as static output feedback on an augmented plant, and the
//! matrices `F(P, Ko)` (bilinear) and `F0(P, Ko)` (jointly affine).

use nalgebra::DMatrix;

use crate::brl::{brl_expr, brl_matrix};
use crate::error::{dim_err, Error, Result};
use crate::fir::shift_register;
use crate::lti::{GeneralizedPlant, PlantDims, StateSpace};
use crate::sdp::{AffineMatrix, MatrixVar};

#[derive(Clone, Debug)]
pub struct AugmentedSystem {
    pub a_o: DMatrix<f64>,
    pub b_o: DMatrix<f64>,
    pub c_o: DMatrix<f64>,
    pub d_o: DMatrix<f64>,
    pub b_t: DMatrix<f64>,
    pub c_t: DMatrix<f64>,
    pub d12_t: DMatrix<f64>,
    pub d21_t: DMatrix<f64>,
    pub n_taps: usize,
    pub dims: PlantDims,
    pub ts: f64,
}

impl AugmentedSystem {
    /// Controller state count `(n_f - 1) n_y`.
    pub fn na(&self) -> usize {
        (self.n_taps - 1) * self.dims.ny
    }

    pub fn n_states(&self) -> usize {
        self.a_o.nrows()
    }

    /// Shape of `Ko`: `n_u x (na + n_y)`.
    pub fn ko_shape(&self) -> (usize, usize) {
        (self.dims.nu, self.na() + self.dims.ny)
    }

    /// Dimension of `F`.
    pub fn f_dim(&self) -> usize {
        2 * self.n_states() + self.dims.nw + self.dims.nz
    }

    fn check_ko_shape(&self, ko: (usize, usize)) -> Result<()> {
        if ko != self.ko_shape() {
            return dim_err(format!(
                "Ko is {}x{}, expected {}x{}",
                ko.0,
                ko.1,
                self.ko_shape().0,
                self.ko_shape().1
            ));
        }
        Ok(())
    }

    fn check_p_shape(&self, p: (usize, usize)) -> Result<()> {
        let n = self.n_states();
        if p != (n, n) {
            return dim_err(format!("P is {}x{}, expected {n}x{n}", p.0, p.1));
        }
        Ok(())
    }
}

fn stack(top: &DMatrix<f64>, bottom: &DMatrix<f64>) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(top.nrows() + bottom.nrows(), top.ncols());
    m.view_mut((0, 0), top.shape()).copy_from(top);
    m.view_mut((top.nrows(), 0), bottom.shape())
        .copy_from(bottom);
    m
}

pub fn build_augmented(plant: &GeneralizedPlant, n_taps: usize) -> Result<AugmentedSystem> {
    let ts = plant.require_discrete()?;
    plant.require_zero_d22()?;
    if n_taps == 0 {
        return Err(Error::InvalidArgument("n_f must be at least 1".into()));
    }
    let dims = plant.dims();
    let (nx, ny) = (dims.nx, dims.ny);
    let na = (n_taps - 1) * ny;
    let (aq, bq) = shift_register(n_taps, ny);

    let mut a_o = DMatrix::zeros(nx + na, nx + na);
    a_o.view_mut((0, 0), (nx, nx)).copy_from(&plant.a);
    a_o.view_mut((nx, 0), (na, nx))
        .copy_from(&(&bq * &plant.c2));
    a_o.view_mut((nx, nx), (na, na)).copy_from(&aq);

    let b_o = stack(&plant.b1, &(&bq * &plant.d21));
    let mut c_o = DMatrix::zeros(dims.nz, nx + na);
    c_o.view_mut((0, 0), (dims.nz, nx)).copy_from(&plant.c1);
    let b_t = stack(&plant.b2, &DMatrix::zeros(na, dims.nu));

    let mut c_t = DMatrix::zeros(na + ny, nx + na);
    c_t.view_mut((0, nx), (na, na)).fill_with_identity();
    c_t.view_mut((na, 0), (ny, nx)).copy_from(&plant.c2);
    let d21_t = stack(&DMatrix::zeros(na, dims.nw), &plant.d21);

    Ok(AugmentedSystem {
        a_o,
        b_o,
        c_o,
        d_o: plant.d11.clone(),
        b_t,
        c_t,
        d12_t: plant.d12.clone(),
        d21_t,
        n_taps,
        dims,
        ts,
    })
}

/// `(A_o + B~ Ko C~, B_o + B~ Ko D~21, C_o + D~12 Ko C~, D_o + D~12 Ko D~21)`.
pub fn closed_loop_from_ko(aug: &AugmentedSystem, ko: &DMatrix<f64>) -> Result<StateSpace> {
    aug.check_ko_shape(ko.shape())?;
    let bk = &aug.b_t * ko;
    let dk = &aug.d12_t * ko;
    StateSpace::new(
        &aug.a_o + &bk * &aug.c_t,
        &aug.b_o + &bk * &aug.d21_t,
        &aug.c_o + &dk * &aug.c_t,
        &aug.d_o + &dk * &aug.d21_t,
        crate::lti::Domain::Discrete(aug.ts),
    )
}

/// `F(P, Ko)`, the bounded real LMI of the parametrized closed loop.
pub fn assemble_f(
    p: &DMatrix<f64>,
    ko: &DMatrix<f64>,
    aug: &AugmentedSystem,
    mu: f64,
) -> Result<DMatrix<f64>> {
    check_mu(mu)?;
    aug.check_p_shape(p.shape())?;
    let cl = closed_loop_from_ko(aug, ko)?;
    brl_matrix(p, &(&cl.a * p), &cl.b, &(&cl.c * p), &cl.d, mu)
}

/// `F0(P, Ko)`: `F` with `P` dropped from the products with `Ko`, i.e.
/// `(1,2) = A_o P + B~ Ko C~` and `(2,4) = P C_o' + (D~12 Ko C~)'`.
pub fn assemble_f0(
    p: &DMatrix<f64>,
    ko: &DMatrix<f64>,
    aug: &AugmentedSystem,
    mu: f64,
) -> Result<DMatrix<f64>> {
    check_mu(mu)?;
    aug.check_p_shape(p.shape())?;
    let cl = closed_loop_from_ko(aug, ko)?;
    let ap = &aug.a_o * p + &aug.b_t * ko * &aug.c_t;
    let cp = &aug.c_o * p + &aug.d12_t * ko * &aug.c_t;
    brl_matrix(p, &ap, &cl.b, &cp, &cl.d, mu)
}

fn check_mu(mu: f64) -> Result<()> {
    if mu > 0.0 && mu.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("mu must be > 0, got {mu}")))
    }
}

/// Affine parts of the closed loop in `Ko`: `(B_CL, D_CL)` as expressions.
fn input_blocks(aug: &AugmentedSystem, ko: &AffineMatrix) -> Result<(AffineMatrix, AffineMatrix)> {
    let b = ko
        .left_mul(&aug.b_t)?
        .right_mul(&aug.d21_t)?
        .add_constant(&aug.b_o)?;
    let d = ko
        .left_mul(&aug.d12_t)?
        .right_mul(&aug.d21_t)?
        .add_constant(&aug.d_o)?;
    Ok((b, d))
}

/// `F0` with both `P` and `Ko` as decision variables.
pub fn f0_expr(
    aug: &AugmentedSystem,
    p: &MatrixVar,
    ko: &MatrixVar,
    mu: f64,
) -> Result<AffineMatrix> {
    check_mu(mu)?;
    aug.check_p_shape((p.nrows(), p.ncols()))?;
    aug.check_ko_shape((ko.nrows(), ko.ncols()))?;
    let pe = p.expr();
    let ke = ko.expr();
    let ap = pe
        .left_mul(&aug.a_o)?
        .try_add(&ke.left_mul(&aug.b_t)?.right_mul(&aug.c_t)?)?;
    let cp = pe
        .left_mul(&aug.c_o)?
        .try_add(&ke.left_mul(&aug.d12_t)?.right_mul(&aug.c_t)?)?;
    let (b, d) = input_blocks(aug, &ke)?;
    brl_expr(&pe, &ap, &b, &cp, &d, mu)
}

/// `F` with `Ko` fixed and `P` as the decision variable.
pub fn f_expr_in_p(
    aug: &AugmentedSystem,
    ko: &DMatrix<f64>,
    p: &MatrixVar,
    mu: f64,
) -> Result<AffineMatrix> {
    check_mu(mu)?;
    aug.check_p_shape((p.nrows(), p.ncols()))?;
    let cl = closed_loop_from_ko(aug, ko)?;
    crate::brl::brl_lmi_in_p(&cl, p, mu)
}

/// `F` with `P` fixed and `Ko` as the decision variable.
pub fn f_expr_in_ko(
    aug: &AugmentedSystem,
    p: &DMatrix<f64>,
    ko: &MatrixVar,
    mu: f64,
) -> Result<AffineMatrix> {
    check_mu(mu)?;
    aug.check_p_shape(p.shape())?;
    aug.check_ko_shape((ko.nrows(), ko.ncols()))?;
    let ke = ko.expr();
    let ctp = &aug.c_t * p;
    let ap = ke
        .left_mul(&aug.b_t)?
        .right_mul(&ctp)?
        .add_constant(&(&aug.a_o * p))?;
    let cp = ke
        .left_mul(&aug.d12_t)?
        .right_mul(&ctp)?
        .add_constant(&(&aug.c_o * p))?;
    let (b, d) = input_blocks(aug, &ke)?;
    brl_expr(&AffineMatrix::constant(p.clone()), &ap, &b, &cp, &d, mu)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lti::Domain;
    use crate::sdp::LmiProblem;

    fn scalar_plant() -> GeneralizedPlant {
        let one = || DMatrix::from_element(1, 1, 1.0);
        GeneralizedPlant::new(
            DMatrix::from_element(1, 1, 0.5),
            one(),
            one(),
            one(),
            one(),
            DMatrix::zeros(1, 1),
            DMatrix::zeros(1, 1),
            DMatrix::zeros(1, 1),
            DMatrix::zeros(1, 1),
            Domain::Discrete(1.0),
        )
        .unwrap()
    }

    #[test]
    fn hand_assembled_scalar_f() {
        let aug = build_augmented(&scalar_plant(), 1).unwrap();
        let f = assemble_f(&DMatrix::identity(1, 1), &DMatrix::zeros(1, 1), &aug, 2.0).unwrap();
        let expected = DMatrix::from_row_slice(
            4,
            4,
            &[
                1.0, 0.5, 1.0, 0.0, //
                0.5, 1.0, 0.0, 1.0, //
                1.0, 0.0, 1.0, 0.0, //
                0.0, 1.0, 0.0, 2.0,
            ],
        );
        assert_eq!(f, expected);
    }

    #[test]
    fn symbolic_builders_match_numeric() {
        let plant = scalar_plant();
        let aug = build_augmented(&plant, 3).unwrap();
        let n = aug.n_states();
        let mut prob = LmiProblem::new();
        let p = prob.add_symmetric("P", n);
        let k = prob.add_matrix("Ko", aug.ko_shape().0, aug.ko_shape().1);
        let x: Vec<f64> = (0..prob.num_vars())
            .map(|i| ((i * 7 + 3) % 11) as f64 / 11.0 - 0.4)
            .collect();
        let (pv, kv) = (p.value(&x), k.value(&x));
        let f0 = f0_expr(&aug, &p, &k, 3.0).unwrap().eval(&x);
        assert!((f0 - assemble_f0(&pv, &kv, &aug, 3.0).unwrap()).amax() < 1e-14);
        let fp = f_expr_in_p(&aug, &kv, &p, 3.0).unwrap().eval(&x);
        let fk = f_expr_in_ko(&aug, &pv, &k, 3.0).unwrap().eval(&x);
        let f = assemble_f(&pv, &kv, &aug, 3.0).unwrap();
        assert!((fp - &f).amax() < 1e-14);
        assert!((fk - &f).amax() < 1e-14);
    }

    #[test]
    fn static_augmentation_is_identity() {
        let plant = scalar_plant();
        let aug = build_augmented(&plant, 1).unwrap();
        assert_eq!(aug.a_o, plant.a);
        assert_eq!(aug.b_o, plant.b1);
        assert_eq!(aug.c_t, plant.c2);
        assert_eq!(aug.d21_t, plant.d21);
    }

    #[test]
    fn nonzero_d22_is_rejected() {
        let mut plant = scalar_plant();
        plant.d22[(0, 0)] = 1e-3;
        assert!(matches!(
            build_augmented(&plant, 2),
            Err(Error::Precondition(_))
        ));
    }
}
