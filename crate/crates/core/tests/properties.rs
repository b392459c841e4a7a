use nalgebra::DMatrix;
use proptest::prelude::*;

use sparse_hinf::fir::{fir_realize, pack_ko, pattern_of, unpack_ko, FirController};
use sparse_hinf::io;
use sparse_hinf::lti::{hinf_norm, impulse_response, Domain, StateSpace};

fn taps_strategy() -> impl Strategy<Value = FirController> {
    (1usize..=5, 1usize..=3, 1usize..=3).prop_flat_map(|(n_f, nu, ny)| {
        prop::collection::vec(-10.0f64..10.0, n_f * nu * ny).prop_map(move |v| {
            let taps = v
                .chunks(nu * ny)
                .map(|c| DMatrix::from_row_slice(nu, ny, c))
                .collect();
            FirController::new(taps, 0.1).unwrap()
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn impulse_response_is_the_taps(k in taps_strategy()) {
        let h = impulse_response(&fir_realize(&k), k.n_taps() + 2).unwrap();
        for (i, hk) in h.iter().enumerate() {
            if i < k.n_taps() {
                prop_assert!((hk - k.tap(i)).amax() <= 1e-10);
            } else {
                prop_assert!(hk.amax() == 0.0);
            }
        }
    }

    #[test]
    fn pack_unpack_roundtrip(k in taps_strategy()) {
        let back = unpack_ko(&pack_ko(&k), k.n_taps(), k.n_y(), 0.1).unwrap();
        prop_assert_eq!(back.taps(), k.taps());
    }

    #[test]
    fn controller_file_roundtrip_is_lossless(k in taps_strategy()) {
        let s = pattern_of(&k, 1e-4).unwrap();
        let text = io::emit_controller(&io::ControllerFile::from_controller(&k, Some(&s), None));
        let f = io::parse_controller(&text).unwrap();
        let back = f.to_controller().unwrap();
        prop_assert_eq!(back.taps(), k.taps());
        prop_assert_eq!(f.pattern().unwrap(), Some(s));
    }

    #[test]
    fn norm_scales_linearly(a in -0.9f64..0.9, b in 0.1f64..3.0, c in 0.1f64..3.0, g in 0.1f64..5.0) {
        let m = |v: f64| DMatrix::from_element(1, 1, v);
        let sys = StateSpace::new(m(a), m(b), m(c), m(0.0), Domain::Discrete(1.0)).unwrap();
        let scaled = StateSpace::new(m(a), m(b * g), m(c), m(0.0), Domain::Discrete(1.0)).unwrap();
        let (n1, n2) = (hinf_norm(&sys).unwrap(), hinf_norm(&scaled).unwrap());
        // first-order peak is |bc| / (1 - |a|)
        prop_assert!((n1 - (b * c) / (1.0 - a.abs())).abs() <= 1e-6 * n1);
        prop_assert!((n2 - g * n1).abs() <= 1e-6 * n2);
    }
}
