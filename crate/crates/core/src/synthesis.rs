//! Sparse FIR H-infinity synthesis: an initial guess from the jointly affine
//! relaxation `F0 > 0`, then alternating convex solves of `F(P, Ko) > 0` over
//! `P` and over `Ko` until the bilinear condition holds.

use log::{debug, info, warn};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::augment::{
    assemble_f, build_augmented, closed_loop_from_ko, f0_expr, f_expr_in_ko, f_expr_in_p,
    AugmentedSystem,
};
use crate::error::{Error, Result};
use crate::fir::{complies_with, pattern_constraints, unpack_ko, FirController, SparsityPattern};
use crate::lti::{eigenvalues, hinf_norm, is_stable, GeneralizedPlant, C64};
use crate::sdp::{
    self, min_eigenvalue, AffineMatrix, LmiProblem, MatrixVar, SdpBackend, SolveOutcome,
    SolveStatus,
};

/// How the iteration caps `k = (k0, k1, k2)` are realized.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum InnerMode {
    /// The backend stops after `k_i` iterations and its last iterate is used.
    SolverCap,
    /// Each step is solved to convergence as `max t s.t. F >= t I`,
    /// `t <= t_max`, with `t_max = 2^-k_i` (a larger cap asks for less
    /// margin, so the step stays closer to plain feasibility).
    StagedMargin,
    /// Plain feasibility solves to convergence (zero objective); a step
    /// whose point fails reassembly falls back to the staged margin program.
    Centered,
}

impl InnerMode {
    pub fn parse(name: &str) -> Option<Self> {
        match name {
            "solver-cap" | "cap" => Some(InnerMode::SolverCap),
            "staged-margin" | "staged" => Some(InnerMode::StagedMargin),
            "centered" => Some(InnerMode::Centered),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            InnerMode::SolverCap => "solver-cap",
            InnerMode::StagedMargin => "staged-margin",
            InnerMode::Centered => "centered",
        }
    }
}

pub fn staged_t_max(k: u32) -> f64 {
    0.5f64.powi(k as i32)
}

#[derive(Clone, Debug)]
pub struct SynthesisConfig {
    /// Bound on the squared closed-loop norm.
    pub mu: f64,
    pub n_taps: usize,
    pub pattern: SparsityPattern,
    pub k: [u32; 3],
    pub max_outer: usize,
    /// Minimize `||P||_2 + sum ||Q_i||_2` in the initial relaxation.
    pub regularize_p0: bool,
    pub inner: InnerMode,
}

impl SynthesisConfig {
    pub fn new(mu: f64, n_taps: usize, pattern: SparsityPattern) -> Self {
        Self {
            mu,
            n_taps,
            pattern,
            k: [10, 5, 2],
            max_outer: 200,
            regularize_p0: false,
            inner: InnerMode::Centered,
        }
    }

    fn validate(&self, plant: &GeneralizedPlant) -> Result<()> {
        if !(self.mu > 0.0 && self.mu.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "mu must be > 0, got {}",
                self.mu
            )));
        }
        if self.n_taps == 0 {
            return Err(Error::InvalidArgument("n_f must be at least 1".into()));
        }
        if self.k.contains(&0) {
            return Err(Error::InvalidArgument("iteration caps must be >= 1".into()));
        }
        let d = plant.dims();
        if (self.pattern.nrows(), self.pattern.ncols()) != (d.nu, d.ny) {
            return Err(Error::Dimension(format!(
                "pattern is {}x{}, plant needs {}x{}",
                self.pattern.nrows(),
                self.pattern.ncols(),
                d.nu,
                d.ny
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Stage {
    /// Initial relaxation.
    #[serde(rename = "P0")]
    Relaxed,
    /// `Ko` fixed, solve for `P`.
    P,
    /// `P` fixed, solve for `Ko`.
    K,
}

impl Stage {
    pub fn name(&self) -> &'static str {
        match self {
            Stage::Relaxed => "P0",
            Stage::P => "P",
            Stage::K => "K",
        }
    }
}

/// One inner solve. `margin` is the smallest eigenvalue of `F(P, Ko)` at
/// the iterate after the step.
#[derive(Clone, Debug, Serialize)]
pub struct TraceRow {
    pub iter: usize,
    pub stage: Stage,
    pub status: SolveStatus,
    pub margin: f64,
}

#[derive(Clone, Debug)]
pub struct Certificate {
    pub p: DMatrix<f64>,
    pub ko: DMatrix<f64>,
    pub mu: f64,
    pub min_eig_f: f64,
    pub closed_loop_norm: f64,
}

/// Smallest acceptable `min eig F` for a certificate at bound `mu`.
pub fn certificate_threshold(mu: f64) -> f64 {
    0.5 * sdp::EPS_PD_REL * (1.0 + mu.max(1.0))
}

/// Re-check a certificate independently of any solver.
pub fn verify_certificate(aug: &AugmentedSystem, cert: &Certificate) -> Result<()> {
    let f = assemble_f(&cert.p, &cert.ko, aug, cert.mu)?;
    let eig = min_eigenvalue(&f);
    if !(eig > 0.0) {
        return Err(Error::Numeric(format!(
            "min eig F = {eig:.3e} is not positive"
        )));
    }
    let cl = closed_loop_from_ko(aug, &cert.ko)?;
    if !is_stable(&cl) {
        return Err(Error::Unstable(cl.stability_measure()));
    }
    let norm = hinf_norm(&cl)?;
    if !(norm * norm < cert.mu) {
        return Err(Error::Numeric(format!(
            "closed-loop norm {norm} does not beat sqrt(mu) = {}",
            cert.mu.sqrt()
        )));
    }
    Ok(())
}

#[derive(Clone, Debug)]
pub struct Synthesis {
    pub controller: FirController,
    pub certificate: Certificate,
    pub outer_iterations: usize,
    pub trace: Vec<TraceRow>,
    pub warnings: Vec<String>,
}

/// State of one synthesis run; keeps the trace and the best iterate so a
/// failed run can still be inspected.
pub struct Synthesizer<'a> {
    plant: GeneralizedPlant,
    aug: AugmentedSystem,
    cfg: SynthesisConfig,
    backend: &'a dyn SdpBackend,
    zeros: Vec<(usize, usize)>,
    trace: Vec<TraceRow>,
    best: Option<(DMatrix<f64>, DMatrix<f64>, f64)>,
    warnings: Vec<String>,
}

impl<'a> Synthesizer<'a> {
    pub fn new(
        plant: &GeneralizedPlant,
        cfg: SynthesisConfig,
        backend: &'a dyn SdpBackend,
    ) -> Result<Self> {
        cfg.validate(plant)?;
        let aug = build_augmented(plant, cfg.n_taps)?;
        let zeros = pattern_constraints(&cfg.pattern, cfg.n_taps);
        let warnings = structural_warnings(plant);
        for w in &warnings {
            warn!("{w}");
        }
        Ok(Self {
            plant: plant.clone(),
            aug,
            cfg,
            backend,
            zeros,
            trace: Vec::new(),
            best: None,
            warnings,
        })
    }

    pub fn augmented(&self) -> &AugmentedSystem {
        &self.aug
    }

    pub fn trace(&self) -> &[TraceRow] {
        &self.trace
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    /// Best `(P, Ko, min eig F)` seen so far.
    pub fn best(&self) -> Option<&(DMatrix<f64>, DMatrix<f64>, f64)> {
        self.best.as_ref()
    }

    fn f_margin(&self, p: &DMatrix<f64>, ko: &DMatrix<f64>) -> Result<f64> {
        Ok(min_eigenvalue(&assemble_f(p, ko, &self.aug, self.cfg.mu)?))
    }

    fn record(
        &mut self,
        iter: usize,
        stage: Stage,
        status: SolveStatus,
        p: &DMatrix<f64>,
        ko: &DMatrix<f64>,
    ) -> Result<f64> {
        let margin = self.f_margin(p, ko)?;
        debug!(
            "iter {iter} {} {status:?} margin {margin:.4e}",
            stage.name()
        );
        self.trace.push(TraceRow {
            iter,
            stage,
            status,
            margin,
        });
        if self.best.as_ref().is_none_or(|b| margin > b.2) {
            self.best = Some((p.clone(), ko.clone(), margin));
        }
        Ok(margin)
    }

    fn add_ko(&self, prob: &mut LmiProblem) -> Result<MatrixVar> {
        let (r, c) = self.aug.ko_shape();
        let ko = prob.add_matrix("Ko", r, c);
        for &(i, j) in &self.zeros {
            prob.pin_zero(ko.id(i, j))?;
        }
        Ok(ko)
    }

    fn run_step(
        &self,
        prob: &mut LmiProblem,
        k: u32,
        allow_objective: bool,
    ) -> Result<SolveOutcome> {
        match self.cfg.inner {
            InnerMode::SolverCap => {
                prob.set_iter_cap(Some(k));
                sdp::solve(prob, self.backend)
            }
            InnerMode::StagedMargin if allow_objective && !prob.objective().is_empty() => {
                sdp::solve(prob, self.backend)
            }
            InnerMode::StagedMargin => sdp::solve_max_margin(prob, staged_t_max(k), self.backend),
            InnerMode::Centered => {
                let out = sdp::solve(prob, self.backend)?;
                if allow_objective || out.status != SolveStatus::Infeasible {
                    return Ok(out);
                }
                sdp::solve_max_margin(prob, staged_t_max(k), self.backend)
            }
        }
    }

    /// Solve the relaxation `F0(P, Ko) > 0` with the pattern zeros imposed.
    pub fn initial_guess(&mut self) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        let n = self.aug.n_states();
        let mut prob = LmiProblem::new();
        let p = prob.add_symmetric("P", n);
        let ko = self.add_ko(&mut prob)?;
        prob.add_psd("F0", f0_expr(&self.aug, &p, &ko, self.cfg.mu)?)?;
        if self.cfg.regularize_p0 {
            add_norm_regularizer(&mut prob, &p, &ko, self.cfg.n_taps, self.plant.dims().ny)?;
        }
        let out = self.run_step(&mut prob, self.cfg.k[0], true)?;
        let x = match (&out.values, out.status) {
            (Some(x), s) if s != SolveStatus::Infeasible => x,
            _ => {
                return Err(Error::InfeasibleRelaxation(format!(
                    "status {:?}, best margin {:.3e}, mu = {}",
                    out.status, out.margin, self.cfg.mu
                )))
            }
        };
        let (pv, kv) = (p.value(x), ko.value(x));
        self.record(0, Stage::Relaxed, out.status, &pv, &kv)?;
        Ok((pv, kv))
    }

    fn p_step(&self, ko: &DMatrix<f64>) -> Result<(SolveOutcome, Option<DMatrix<f64>>)> {
        let mut prob = LmiProblem::new();
        let p = prob.add_symmetric("P", self.aug.n_states());
        prob.add_psd("F(P)", f_expr_in_p(&self.aug, ko, &p, self.cfg.mu)?)?;
        let out = self.run_step(&mut prob, self.cfg.k[1], false)?;
        let pv = out.values.as_ref().map(|x| p.value(x));
        Ok((out, pv))
    }

    fn k_step(&self, p: &DMatrix<f64>) -> Result<(SolveOutcome, Option<DMatrix<f64>>)> {
        let mut prob = LmiProblem::new();
        let ko = self.add_ko(&mut prob)?;
        prob.add_psd("F(Ko)", f_expr_in_ko(&self.aug, p, &ko, self.cfg.mu)?)?;
        let out = self.run_step(&mut prob, self.cfg.k[2], false)?;
        let kv = out.values.as_ref().map(|x| ko.value(x));
        Ok((out, kv))
    }

    fn certified(&self, margin: f64) -> bool {
        margin >= certificate_threshold(self.cfg.mu)
    }

    fn stop_on(&self, iter: usize, stage: Stage, out: &SolveOutcome) -> Result<()> {
        let certified_infeasible =
            out.status == SolveStatus::Infeasible && self.cfg.inner == InnerMode::SolverCap;
        if certified_infeasible || out.values.is_none() {
            return Err(Error::InnerInfeasible {
                iteration: iter,
                stage: stage.name(),
                status: out.status,
            });
        }
        Ok(())
    }

    /// Alternate from `(P, Ko)` until `F(P, Ko) > 0`.
    pub fn alternate(
        &mut self,
        init: (DMatrix<f64>, DMatrix<f64>),
    ) -> Result<(Certificate, usize)> {
        let (mut p, mut ko) = init;
        let margin = self.f_margin(&p, &ko)?;
        if self.certified(margin) {
            return Ok((self.certificate(p, ko, margin)?, 0));
        }
        for iter in 1..=self.cfg.max_outer {
            let (out, pv) = self.p_step(&ko)?;
            self.stop_on(iter, Stage::P, &out)?;
            p = pv.expect("values checked");
            let margin = self.record(iter, Stage::P, out.status, &p, &ko)?;
            if self.certified(margin) {
                return Ok((self.certificate(p, ko, margin)?, iter));
            }

            let (out, kv) = self.k_step(&p)?;
            self.stop_on(iter, Stage::K, &out)?;
            ko = kv.expect("values checked");
            let margin = self.record(iter, Stage::K, out.status, &p, &ko)?;
            if self.certified(margin) {
                return Ok((self.certificate(p, ko, margin)?, iter));
            }
        }
        Err(Error::NoConvergence {
            iterations: self.cfg.max_outer,
            best_margin: self.best.as_ref().map_or(f64::NEG_INFINITY, |b| b.2),
        })
    }

    fn certificate(
        &self,
        p: DMatrix<f64>,
        ko: DMatrix<f64>,
        min_eig_f: f64,
    ) -> Result<Certificate> {
        let cl = closed_loop_from_ko(&self.aug, &ko)?;
        let closed_loop_norm = hinf_norm(&cl)?;
        let cert = Certificate {
            p,
            ko,
            mu: self.cfg.mu,
            min_eig_f,
            closed_loop_norm,
        };
        verify_certificate(&self.aug, &cert)?;
        Ok(cert)
    }

    pub fn run(&mut self) -> Result<Synthesis> {
        let init = self.initial_guess()?;
        let (certificate, outer_iterations) = self.alternate(init)?;
        let controller = unpack_ko(
            &certificate.ko,
            self.cfg.n_taps,
            self.plant.dims().ny,
            self.aug.ts,
        )?;
        if !complies_with(&controller, &self.cfg.pattern) {
            return Err(Error::Numeric(
                "controller violates the sparsity pattern".into(),
            ));
        }
        info!(
            "certified after {outer_iterations} outer iterations, norm {:.6}",
            certificate.closed_loop_norm
        );
        Ok(Synthesis {
            controller,
            certificate,
            outer_iterations,
            trace: self.trace.clone(),
            warnings: self.warnings.clone(),
        })
    }
}

/// Epigraph form of `||P||_2 + sum_i ||Q_i||_2` as the objective.
fn add_norm_regularizer(
    prob: &mut LmiProblem,
    p: &MatrixVar,
    ko: &MatrixVar,
    n_taps: usize,
    ny: usize,
) -> Result<()> {
    let n = p.nrows();
    let s = prob.add_scalar("normP");
    prob.add_psd_nonstrict(
        "normP",
        &AffineMatrix::var_times(s, &DMatrix::identity(n, n)) - &p.expr(),
    )?;
    let mut objective = vec![(s, 1.0)];
    let nu = ko.nrows();
    for i in 0..n_taps {
        let r = prob.add_scalar(format!("normQ{i}"));
        let col0 = crate::fir::tap_column(i, n_taps, ny);
        let sel = DMatrix::from_fn(ko.ncols(), ny, |a, b| if a == col0 + b { 1.0 } else { 0.0 });
        let q = ko.expr().right_mul(&sel)?;
        let block = AffineMatrix::block(&[
            vec![
                AffineMatrix::var_times(r, &DMatrix::identity(nu, nu)),
                q.clone(),
            ],
            vec![
                q.transpose(),
                AffineMatrix::var_times(r, &DMatrix::identity(ny, ny)),
            ],
        ])?;
        prob.add_psd_nonstrict(format!("normQ{i}"), block)?;
        objective.push((r, 1.0));
    }
    prob.set_objective(objective);
    Ok(())
}

pub fn synthesize(
    plant: &GeneralizedPlant,
    cfg: SynthesisConfig,
    backend: &dyn SdpBackend,
) -> Result<Synthesis> {
    Synthesizer::new(plant, cfg, backend)?.run()
}

/// Rank of `m` with relative tolerance.
fn numeric_rank(m: &DMatrix<C64>, tol: f64) -> usize {
    let sv = m.clone().singular_values();
    let top = sv.iter().copied().fold(0.0, f64::max);
    sv.iter().filter(|s| **s > tol * top.max(1.0)).count()
}

/// PBH tests at the eigenvalues on or outside the unit circle.
pub fn structural_warnings(plant: &GeneralizedPlant) -> Vec<String> {
    let n = plant.a.nrows();
    let mut out = Vec::new();
    let a = plant.a.map(|v| C64::new(v, 0.0));
    for lam in eigenvalues(&plant.a) {
        if lam.norm() < 1.0 {
            continue;
        }
        let shifted = DMatrix::<C64>::identity(n, n) * lam - &a;
        let c2 = plant.c2.map(|v| C64::new(v, 0.0));
        let b2 = plant.b2.map(|v| C64::new(v, 0.0));
        let mut obs = DMatrix::zeros(n + c2.nrows(), n);
        obs.view_mut((0, 0), (n, n)).copy_from(&shifted);
        obs.view_mut((n, 0), c2.shape()).copy_from(&c2);
        if numeric_rank(&obs, 1e-8) < n {
            out.push(format!(
                "(A, C2) may not be detectable at eigenvalue {lam:.4}"
            ));
        }
        let mut ctr = DMatrix::zeros(n, n + b2.ncols());
        ctr.view_mut((0, 0), (n, n)).copy_from(&shifted);
        ctr.view_mut((0, n), b2.shape()).copy_from(&b2);
        if numeric_rank(&ctr, 1e-8) < n {
            out.push(format!(
                "(A, B2) may not be stabilizable at eigenvalue {lam:.4}"
            ));
        }
    }
    out
}

/// `1.5 x` the squared closed-loop norm under the static full-pattern gain
/// that minimizes `mu` in the relaxation.
pub fn suggest_mu(plant: &GeneralizedPlant, backend: &dyn SdpBackend) -> Result<f64> {
    let aug = build_augmented(plant, 1)?;
    let mut prob = LmiProblem::new();
    let p = prob.add_symmetric("P", aug.n_states());
    let (r, c) = aug.ko_shape();
    let ko = prob.add_matrix("Ko", r, c);
    let m = prob.add_scalar("mu");
    // F0 at mu = 0 plus mu I in the last block
    let f0 = f0_expr(&aug, &p, &ko, 1.0)?;
    let dim = f0.nrows();
    let nz = aug.dims.nz;
    let mut sel = DMatrix::zeros(dim, dim);
    for i in dim - nz..dim {
        sel[(i, i)] = 1.0;
    }
    let f = f0
        .add_constant(&(-&sel))?
        .try_add(&AffineMatrix::var_times(m, &sel))?;
    prob.add_psd("F0(mu)", f)?;
    prob.set_objective(vec![(m, 1.0)]);
    let out = sdp::solve(&prob, backend)?;
    let x = out
        .values
        .filter(|_| out.status == SolveStatus::FeasiblePoint)
        .ok_or_else(|| Error::Numeric(format!("mu suggestion failed: {:?}", out.status)))?;
    let cl = closed_loop_from_ko(&aug, &ko.value(&x))?;
    if !is_stable(&cl) {
        return Err(Error::Numeric(
            "relaxed full-pattern gain does not stabilize; pass mu explicitly".into(),
        ));
    }
    let n = hinf_norm(&cl)?;
    Ok(1.5 * n * n)
}
