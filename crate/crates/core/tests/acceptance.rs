//! Acceptance criteria, one test per criterion. Each test writes a
//! PASS/FAIL line with the measured values to stdout.

use std::io::Write;
use std::time::Instant;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sparse_hinf::augment::{assemble_f, assemble_f0, build_augmented};
use sparse_hinf::brl::{brl_feasible, hinf_norm_lmi_bisect};
use sparse_hinf::demo::{self, ExampleId, EXAMPLE3_MASSES};
use sparse_hinf::discovery::{discover, DiscoveryConfig};
use sparse_hinf::fir::{
    complies_with, entry_magnitudes, fir_realize, pack_ko, pattern_constraints, unpack_ko,
    FirController, SparsityPattern,
};
use sparse_hinf::fit::{
    fit_ct_controller, fit_ct_system, FitOptions, RationalTf, Structure, TfMatrix,
};
use sparse_hinf::lti::{
    close_loop, hinf_norm, hinf_norm_grid, impulse_response, zoh_discretize, zoh_discretize_ss,
    Domain, StateSpace,
};
use sparse_hinf::sdp::ClarabelBackend;
use sparse_hinf::synthesis::{synthesize, SynthesisConfig};
use sparse_hinf::Result;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Result<Outcome> {
    Ok(Outcome { pass, detail })
}

fn round_sig4(v: f64) -> f64 {
    if v == 0.0 {
        return 0.0;
    }
    let scale = 10f64.powi(3 - v.abs().log10().floor() as i32);
    (v * scale).round() / scale
}

/// Each printed entry equals the computed one rounded to 4 significant digits.
fn matches_printed(computed: &DMatrix<f64>, printed: &DMatrix<f64>) -> (usize, usize) {
    let mut bad = 0;
    for (c, p) in computed.iter().zip(printed.iter()) {
        let ok = if *p == 0.0 {
            c.abs() < 5e-5
        } else {
            (round_sig4(*c) - p).abs() <= 1e-9 * p.abs()
        };
        if !ok {
            bad += 1;
        }
    }
    (bad, computed.len())
}

fn c1_discretization() -> Result<Outcome> {
    let m = |r, c, v: &[f64]| DMatrix::from_row_slice(r, c, v);
    let ex1 = zoh_discretize(&demo::example1_continuous(), 0.1)?;
    let a1 = m(
        4,
        4,
        &[
            0.8189, 0.08627, 0.09004, 0.08133, 0.2524, 1.003, 0.03134, 0.2004, -0.05449, 0.01017,
            0.7901, -0.258, -0.1918, -0.1034, 0.1602, 0.8604,
        ],
    );
    let b11 = m(
        4,
        3,
        &[
            0.09531, 0.0, 0.0, 0.01447, 0.0, 0.0, 0.08618, 0.0, 0.0, -0.001083, 0.0, 0.0,
        ],
    );
    let b21 = m(
        4,
        2,
        &[
            0.004532, 0.004367, 0.1001, 0.01005, 0.0003383, -0.01361, -0.005126, 0.09363,
        ],
    );
    let ex2 = zoh_discretize(&demo::example2_continuous(), 0.05)?;
    let a2 = DMatrix::from_diagonal(&nalgebra::DVector::from_row_slice(&[
        0.9512, 1.051, 0.9512, 0.9512, 1.051,
    ]));
    let b12 = DMatrix::from_diagonal(&nalgebra::DVector::from_row_slice(&[
        0.009754, 0.01025, 0.009754, 0.009754, 0.005127,
    ]));
    // B2 is printed as 10 B1; compare against the scaled printed entries
    let b22 = (&b12 * 10.0).map(round_sig4);
    let checks = [
        ("ex1 A", &ex1.a, &a1),
        ("ex1 B1", &ex1.b1, &b11),
        ("ex1 B2", &ex1.b2, &b21),
        ("ex2 A", &ex2.a, &a2),
        ("ex2 B1", &ex2.b1, &b12),
        ("ex2 B2", &ex2.b2, &b22),
    ];
    let mut bad_total = 0;
    let mut total = 0;
    let mut bad_names = Vec::new();
    for (name, c, p) in checks {
        let (bad, n) = matches_printed(c, p);
        bad_total += bad;
        total += n;
        if bad > 0 {
            bad_names.push(format!("{name} ({bad})"));
        }
    }
    outcome(
        bad_total == 0,
        if bad_total == 0 {
            format!("{total}/{total} entries match to 4 significant digits")
        } else {
            format!("{bad_total}/{total} mismatches: {}", bad_names.join(", "))
        },
    )
}

fn diag_tf(d: &demo::ContinuousDiag) -> TfMatrix {
    TfMatrix::from_diagonal(
        d.iter()
            .map(|(n, den)| RationalTf::new(n.clone(), den.clone()).unwrap())
            .collect(),
    )
}

fn static_ct(k: &FirController) -> StateSpace {
    StateSpace::static_gain(k.tap(0).clone(), Domain::Continuous).unwrap()
}

fn c2_replay() -> Result<Outcome> {
    let ex1c = demo::example1_continuous();
    let ex1 = ExampleId::Ex1.discrete_plant()?;
    let ex2 = ExampleId::Ex2.discrete_plant()?;
    let ex3 = ExampleId::Ex3.discrete_plant()?;
    let dn = |p, k: &FirController| hinf_norm(&close_loop(p, &fir_realize(k))?);
    let cn = |k: &StateSpace| hinf_norm(&close_loop(&ex1c, k)?);
    let rows: Vec<(&str, f64, f64, f64, bool)> = vec![
        (
            "ex1 K0 ct",
            cn(&static_ct(&demo::ex1_k0()))?,
            1.85,
            0.01,
            true,
        ),
        ("ex1 K1", dn(&ex1, &demo::ex1_k1())?, 1.9043, 0.005, true),
        (
            "ex1 K1 ct",
            cn(&diag_tf(&demo::ex1_k1_continuous()).to_state_space())?,
            1.9517,
            0.005,
            true,
        ),
        ("ex1 K2", dn(&ex1, &demo::ex1_k2())?, 1.9795, 0.005, true),
        (
            "ex1 K2 ct",
            cn(&diag_tf(&demo::ex1_k2_continuous()).to_state_space())?,
            1.9711,
            0.005,
            true,
        ),
        ("ex2 K1", dn(&ex2, &demo::ex2_k1())?, 0.0163, 0.0005, false),
        ("ex2 K0", dn(&ex2, &demo::ex2_k0())?, 0.0165, 0.0005, false),
        ("ex3 Kv", dn(&ex3, &demo::ex3_kv())?, 8.2909, 0.01, false),
    ];
    let mut pass = true;
    let mut parts = Vec::new();
    for (name, got, want, tol, benchmark) in rows {
        let ok = (got - want).abs() <= tol && (!benchmark || got < 1.995);
        pass &= ok;
        parts.push(format!("{name} {got:.4}{}", if ok { "" } else { " (out)" }));
    }
    outcome(pass, parts.join(", "))
}

#[allow(dead_code)]
struct SynthCase {
    name: &'static str,
    ex: ExampleId,
    n_f: usize,
    mu: f64,
    k: [u32; 3],
    bound: f64,
    continuous: bool,
}

const CASES: [SynthCase; 4] = [
    SynthCase {
        name: "ex1 static",
        ex: ExampleId::Ex1,
        n_f: 1,
        mu: 24.0,
        k: [10, 5, 2],
        bound: 2.0,
        continuous: true,
    },
    SynthCase {
        name: "ex1 first-order",
        ex: ExampleId::Ex1,
        n_f: 2,
        mu: 9.0,
        k: [10, 5, 2],
        bound: 2.06,
        continuous: false,
    },
    SynthCase {
        name: "ex2 first-order",
        ex: ExampleId::Ex2,
        n_f: 2,
        mu: 0.1,
        k: [2, 5, 2],
        bound: 0.0176,
        continuous: false,
    },
    SynthCase {
        name: "ex3 velocity",
        ex: ExampleId::Ex3,
        n_f: 1,
        mu: 83.0,
        k: [10, 5, 2],
        bound: 8.96,
        continuous: false,
    },
];

fn c3_synthesis(c: &SynthCase) -> Result<Outcome> {
    let backend = ClarabelBackend::default();
    let plant = c.ex.discrete_plant()?;
    let pattern = c.ex.pattern();
    let mut cfg = SynthesisConfig::new(c.mu, c.n_f, pattern.clone());
    cfg.k = c.k;
    match synthesize(&plant, cfg, &backend) {
        Ok(s) => {
            let aug = build_augmented(&plant, c.n_f)?;
            let f = assemble_f(&s.certificate.p, &s.certificate.ko, &aug, c.mu)?;
            let eig = f.symmetric_eigen().eigenvalues.min();
            let norm = if c.continuous {
                hinf_norm(&close_loop(
                    &c.ex.continuous_plant(),
                    &static_ct(&s.controller),
                )?)?
            } else {
                hinf_norm(&close_loop(&plant, &fir_realize(&s.controller))?)?
            };
            let compliant = complies_with(&s.controller, &pattern);
            outcome(
                    norm <= c.bound && eig > 0.0 && compliant,
                    format!(
                        "{} norm {norm:.4} (<= {}), min eig F {eig:.1e}, pattern compliant: {compliant}, {} outer iterations",
                        c.name, c.bound, s.outer_iterations
                    ),
                )
        }
        Err(e) => outcome(false, format!("{}: {e}", c.name)),
    }
}

fn random_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.gen_range(-1.0..1.0))
}

fn random_stable(rng: &mut ChaCha8Rng) -> StateSpace {
    let nx = rng.gen_range(1..=6);
    let nu = rng.gen_range(1..=3);
    let ny = rng.gen_range(1..=3);
    let mut a = random_matrix(rng, nx, nx);
    let sys = StateSpace::new(
        a.clone(),
        DMatrix::zeros(nx, 1),
        DMatrix::zeros(1, nx),
        DMatrix::zeros(1, 1),
        Domain::Discrete(1.0),
    )
    .unwrap();
    let rho = sys
        .eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max);
    let target = rng.gen_range(0.3..0.95);
    if rho > 0.0 {
        a *= target / rho;
    }
    StateSpace::new(
        a,
        random_matrix(rng, nx, nu),
        random_matrix(rng, ny, nx),
        random_matrix(rng, ny, nu) * 0.5,
        Domain::Discrete(1.0),
    )
    .unwrap()
}

fn c4_norm_oracles() -> Result<Outcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(20240501);
    let backend = ClarabelBackend::default();
    let mut worst = 0.0f64;
    let mut bracket_fail = 0;
    for _ in 0..50 {
        let sys = random_stable(&mut rng);
        let grid = hinf_norm_grid(&sys, 2048, 1e-9)?;
        let lmi = hinf_norm_lmi_bisect(&sys, 1e-5 * grid.max(1e-3), &backend)?;
        worst = worst.max((grid - lmi).abs() / grid);
        let above = brl_feasible(&sys, (1.05 * grid).powi(2), &backend)?;
        let below = brl_feasible(&sys, (0.95 * grid).powi(2), &backend)?;
        if !above || below {
            bracket_fail += 1;
        }
    }
    outcome(
        worst <= 2e-3 && bracket_fail == 0,
        format!("50 systems: worst relative gap {worst:.2e} (<= 2e-3), bracketing failures {bracket_fail}"),
    )
}

fn random_fir(rng: &mut ChaCha8Rng, n_f: usize, nu: usize, ny: usize) -> FirController {
    let taps = (0..n_f).map(|_| random_matrix(rng, nu, ny)).collect();
    FirController::new(taps, 0.1).unwrap()
}

fn c5_fir() -> Result<Outcome> {
    // worked example: three 1x3 taps equal to 1, 2, 3
    let worked = FirController::new(
        (1..=3)
            .map(|v| DMatrix::from_element(1, 3, v as f64))
            .collect(),
        1.0,
    )?;
    let h = impulse_response(&fir_realize(&worked), 6)?;
    let exact = (0..6).all(|k| {
        let want = if k < 3 {
            worked.tap(k).clone()
        } else {
            DMatrix::zeros(1, 3)
        };
        h[k] == want
    });

    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst = 0.0f64;
    let mut pack_ok = true;
    let mut pattern_ok = true;
    for _ in 0..60 {
        let n_f = rng.gen_range(1..=6);
        let (nu, ny) = (rng.gen_range(1..=3), rng.gen_range(1..=3));
        let k = random_fir(&mut rng, n_f, nu, ny);
        let h = impulse_response(&fir_realize(&k), n_f + 3)?;
        for (i, hk) in h.iter().enumerate() {
            let want = if i < n_f {
                k.tap(i).clone()
            } else {
                DMatrix::zeros(nu, ny)
            };
            worst = worst.max((hk - want).amax());
        }
        let ko = pack_ko(&k);
        let back = unpack_ko(&ko, n_f, ny, 0.1)?;
        pack_ok &= back.taps() == k.taps();

        let keep: Vec<bool> = (0..nu * ny).map(|_| rng.gen_bool(0.5)).collect();
        let s = SparsityPattern::from_fn(nu, ny, |i, j| keep[i * ny + j]);
        let mut ko = random_matrix(&mut rng, ko.nrows(), ko.ncols());
        for (i, j) in pattern_constraints(&s, n_f) {
            ko[(i, j)] = 0.0;
        }
        let r = fir_realize(&unpack_ko(&ko, n_f, ny, 0.1)?);
        for w in [0.0, 0.3, 1.7, 7.0, 31.4] {
            let g = r.freq_response(w)?;
            for i in 0..nu {
                for j in 0..ny {
                    if !s.get(i, j) && g[(i, j)].norm() > 1e-13 {
                        pattern_ok = false;
                    }
                }
            }
        }
    }
    outcome(
        exact && worst <= 1e-10 && pack_ok && pattern_ok,
        format!(
            "worked example exact: {exact}, random impulse error {worst:.1e}, pack/unpack exact: {pack_ok}, pattern zeros on frequency grid: {pattern_ok}"
        ),
    )
}

fn c6_f0_identities() -> Result<Outcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst_affine = 0.0f64;
    let mut worst_identity = 0.0f64;
    for _ in 0..30 {
        let ex = [ExampleId::Ex1, ExampleId::Ex2][rng.gen_range(0..2)];
        let plant = ex.discrete_plant()?;
        let n_f = rng.gen_range(1..=3);
        let aug = build_augmented(&plant, n_f)?;
        let n = aug.n_states();
        let (r, c) = aug.ko_shape();
        let sym = |rng: &mut ChaCha8Rng| {
            let m = random_matrix(rng, n, n);
            (&m + m.transpose()) * 0.5
        };
        let (p1, p2) = (sym(&mut rng), sym(&mut rng));
        let (k1, k2) = (random_matrix(&mut rng, r, c), random_matrix(&mut rng, r, c));
        let a: f64 = rng.gen_range(-2.0..2.0);
        let mu = rng.gen_range(0.5..30.0);
        let mix = assemble_f0(
            &(&p1 * a + &p2 * (1.0 - a)),
            &(&k1 * a + &k2 * (1.0 - a)),
            &aug,
            mu,
        )?;
        let lin =
            assemble_f0(&p1, &k1, &aug, mu)? * a + assemble_f0(&p2, &k2, &aug, mu)? * (1.0 - a);
        worst_affine = worst_affine.max((mix - lin).amax());
        let eye = DMatrix::identity(n, n);
        let d = assemble_f0(&eye, &k1, &aug, mu)? - assemble_f(&eye, &k1, &aug, mu)?;
        worst_identity = worst_identity.max(d.amax());
    }
    outcome(
        worst_affine <= 1e-12 && worst_identity <= 1e-12,
        format!(
            "affinity error {worst_affine:.1e}, F0(I,K) - F(I,K) {worst_identity:.1e} (<= 1e-12)"
        ),
    )
}

fn c7_discovery() -> Result<Outcome> {
    let plant = ExampleId::Ex3.discrete_plant()?;
    let cfg = DiscoveryConfig::new(80.0, 2, 40);
    let t = Instant::now();
    let d = discover(&plant, &cfg, &ClarabelBackend::default())?;
    let n = EXAMPLE3_MASSES;
    let mags = entry_magnitudes(&d.controller);
    let kp: Vec<f64> = (0..n)
        .flat_map(|i| (0..n).map(move |j| (i, j)))
        .filter(|&(i, j)| d.pattern.get(i, j))
        .map(|(i, j)| mags[(i, j)])
        .collect();
    let kv: Vec<f64> = (0..n)
        .filter(|&i| d.pattern.get(i, n + i))
        .map(|i| mags[(i, n + i)])
        .collect();
    let off_diag_kv = (0..n)
        .flat_map(|i| (0..n).map(move |j| (i, j)))
        .filter(|&(i, j)| i != j && d.pattern.get(i, n + j))
        .count();
    let kp_max = kp.iter().cloned().fold(0.0, f64::max);
    let kv_min = kv.iter().cloned().fold(f64::INFINITY, f64::min);
    let pass = !kv.is_empty() && (kp.is_empty() || kp_max < kv_min);
    outcome(
        pass,
        format!(
            "Kp survivors {} (max {kp_max:.3}), Kv diagonal survivors {} (min {kv_min:.3}), Kv off-diagonal {off_diag_kv}, {:.0} s",
            kp.len(),
            kv.len(),
            t.elapsed().as_secs_f64()
        ),
    )
}

fn c8_fit() -> Result<Outcome> {
    let ts = 0.05;
    let g = StateSpace::new(
        DMatrix::from_element(1, 1, -2.0),
        DMatrix::from_element(1, 1, 1.0),
        DMatrix::from_element(1, 1, 2.0),
        DMatrix::zeros(1, 1),
        Domain::Continuous,
    )?;
    let h = zoh_discretize_ss(&g, ts)?;
    let f = fit_ct_system(&h, Structure::new(0, 1), &FitOptions::for_sampled_system())?;
    let pole = f.tf.poles()[0].re;
    let pole_err = (pole + 2.0).abs() / 2.0;
    let gain_err = (f.tf.eval(sparse_hinf::lti::C64::new(0.0, 0.0)).re - 1.0).abs();

    let ct_norm = |ex: ExampleId, k: &FirController| -> Result<f64> {
        let fit = fit_ct_controller(
            k,
            |_, _| Structure::new(0, k.n_taps() - 1),
            &FitOptions::default(),
        )?;
        hinf_norm(&close_loop(
            &ex.continuous_plant(),
            &fit.tf.to_state_space(),
        )?)
    };
    let n1 = ct_norm(ExampleId::Ex1, &demo::ex1_k1())?;
    let n2 = ct_norm(ExampleId::Ex2, &demo::ex2_k1())?;
    let pass = pole_err <= 0.02
        && gain_err <= 0.02
        && (n1 - 1.9517).abs() <= 0.02
        && (n2 - 0.0163).abs() <= 0.02;
    outcome(
        pass,
        format!(
            "roundtrip pole {pole:.4} ({:.2}%), dc gain error {:.2}%; ex1 K1 ct {n1:.4} (1.9517 +/- 0.02), ex2 K1 ct {n2:.5} (0.0163 +/- 0.02)",
            pole_err * 100.0,
            gain_err * 100.0
        ),
    )
}

fn report(n: &str, name: &str, r: Result<Outcome>, t: Instant) {
    let o = r.unwrap_or_else(|e| Outcome {
        pass: false,
        detail: format!("error: {e}"),
    });
    let line = format!(
        "{} {n}. {name}: {} [{:.1} s]\n",
        if o.pass { "PASS" } else { "FAIL" },
        o.detail,
        t.elapsed().as_secs_f64()
    );
    // bypass output capture so the line shows in a normal test run
    std::io::stdout().write_all(line.as_bytes()).unwrap();
    assert!(o.pass, "{}", line.trim_end());
}

macro_rules! criterion {
    ($test:ident, $n:literal, $name:literal, $body:expr) => {
        #[test]
        fn $test() {
            let t = Instant::now();
            report($n, $name, $body, t);
        }
    };
}

criterion!(
    criterion_1_discretization,
    "1",
    "discretization fidelity",
    c1_discretization()
);
criterion!(
    criterion_2_replay,
    "2",
    "replay of published controllers",
    c2_replay()
);
criterion!(
    criterion_3a_ex1_static,
    "3a",
    "synthesis, example 1 static",
    c3_synthesis(&CASES[0])
);
criterion!(
    criterion_3b_ex1_first_order,
    "3b",
    "synthesis, example 1 first order",
    c3_synthesis(&CASES[1])
);
criterion!(
    criterion_3c_ex2_first_order,
    "3c",
    "synthesis, example 2 first order",
    c3_synthesis(&CASES[2])
);
criterion!(
    criterion_3d_ex3_velocity,
    "3d",
    "synthesis, example 3 velocity feedback",
    c3_synthesis(&CASES[3])
);
criterion!(
    criterion_4_norm_oracles,
    "4",
    "norm oracle cross-validation",
    c4_norm_oracles()
);
criterion!(criterion_5_fir, "5", "FIR realization properties", c5_fir());
criterion!(
    criterion_6_f0_identities,
    "6",
    "F0 identities",
    c6_f0_identities()
);
criterion!(
    criterion_7_discovery,
    "7",
    "pattern discovery on example 3",
    c7_discovery()
);
criterion!(criterion_8_fit, "8", "continuous-time fitting", c8_fit());
