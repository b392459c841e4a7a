//! Sparsity pattern discovery by reweighted l1 minimization of the packed
//! gain over the relaxation `F0(P, Ko) > 0`.

use log::debug;
use nalgebra::DMatrix;
use serde::Serialize;

use crate::augment::{assemble_f0, build_augmented, f0_expr};
use crate::error::{Error, Result};
use crate::fir::{
    pattern_of, unpack_ko, FirController, SparsityPattern, DEFAULT_PATTERN_THRESHOLD,
};
use crate::lti::GeneralizedPlant;
use crate::sdp::{self, min_eigenvalue, LmiProblem, SdpBackend, SolveStatus};

/// Where the reweighting constant enters.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum WeightRule {
    /// `1 / (|K| + eps)`
    OutsideAbs,
    /// `1 / |K + eps|`
    InsideAbs,
}

impl WeightRule {
    pub fn weight(&self, k: f64, eps: f64) -> f64 {
        match self {
            WeightRule::OutsideAbs => 1.0 / (k.abs() + eps),
            // guard the removable singularity at K = -eps
            WeightRule::InsideAbs => 1.0 / (k + eps).abs().max(f64::MIN_POSITIVE.sqrt()),
        }
    }
}

#[derive(Clone, Debug)]
pub struct DiscoveryConfig {
    pub mu: f64,
    pub n_taps: usize,
    /// Number of weighted l1 solves.
    pub max_iter: usize,
    pub eps: f64,
    pub rel_threshold: f64,
    pub rule: WeightRule,
}

impl DiscoveryConfig {
    pub fn new(mu: f64, n_taps: usize, max_iter: usize) -> Self {
        Self {
            mu,
            n_taps,
            max_iter,
            eps: 1e-3,
            rel_threshold: DEFAULT_PATTERN_THRESHOLD,
            rule: WeightRule::OutsideAbs,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.mu > 0.0 && self.mu.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "mu must be > 0, got {}",
                self.mu
            )));
        }
        if self.n_taps == 0 || self.max_iter == 0 {
            return Err(Error::InvalidArgument(
                "tap count and iteration count must be at least 1".into(),
            ));
        }
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "eps must be > 0, got {}",
                self.eps
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct DiscoveryRow {
    pub iter: usize,
    /// Weighted l1 objective of this solve.
    pub objective: f64,
    /// Plain l1 norm of the packed gain.
    pub l1: f64,
    pub nonzeros: usize,
    pub status: SolveStatus,
    /// Smallest eigenvalue of the reassembled `F0`.
    pub min_eig_f0: f64,
}

#[derive(Clone, Debug)]
pub struct Discovery {
    pub pattern: SparsityPattern,
    pub controller: FirController,
    pub trace: Vec<DiscoveryRow>,
    /// Nonzero count rose somewhere in the tail of the run.
    pub non_monotone: bool,
}

/// Whether the nonzero count is non-increasing over the last
/// `max(3, N/4)` rows.
pub fn tail_monotone(trace: &[DiscoveryRow]) -> bool {
    let n = 3.max(trace.len() / 4).min(trace.len());
    let tail = &trace[trace.len() - n..];
    tail.windows(2).all(|w| w[1].nonzeros <= w[0].nonzeros)
}

pub fn discover(
    plant: &GeneralizedPlant,
    cfg: &DiscoveryConfig,
    backend: &dyn SdpBackend,
) -> Result<Discovery> {
    cfg.validate()?;
    plant.require_discrete()?;
    plant.require_zero_d22()?;
    let aug = build_augmented(plant, cfg.n_taps)?;
    let ny = plant.dims().ny;
    let ts = aug.ts;

    let mut prob = LmiProblem::new();
    let p = prob.add_symmetric("P", aug.n_states());
    let (r, c) = aug.ko_shape();
    let ko = prob.add_matrix("Ko", r, c);
    prob.add_psd("F0", f0_expr(&aug, &p, &ko, cfg.mu)?)?;

    let mut weights = DMatrix::from_element(r, c, 1.0);
    let mut trace = Vec::with_capacity(cfg.max_iter);
    let mut last = None;
    for iter in 1..=cfg.max_iter {
        let out = sdp::solve_min_weighted_l1(&prob, &weights, &ko, backend)?;
        let x = match (&out.values, out.status) {
            (Some(x), SolveStatus::FeasiblePoint) => x,
            (_, status) if iter == 1 => {
                return Err(Error::InfeasibleRelaxation(format!(
                    "first l1 solve returned {status:?} (best margin {:.3e}); mu = {} is likely too small",
                    out.margin, cfg.mu
                )))
            }
            (_, status) => {
                return Err(Error::InnerInfeasible {
                    iteration: iter,
                    stage: "l1",
                    status,
                })
            }
        };
        let (pv, kv) = (p.value(x), ko.value(x));
        let min_eig_f0 = min_eigenvalue(&assemble_f0(&pv, &kv, &aug, cfg.mu)?);
        let k = unpack_ko(&kv, cfg.n_taps, ny, ts)?;
        let nonzeros = pattern_of(&k, cfg.rel_threshold)?.count_nonzero();
        let row = DiscoveryRow {
            iter,
            objective: out.objective.unwrap_or(f64::NAN),
            l1: kv.iter().map(|v| v.abs()).sum(),
            nonzeros,
            status: out.status,
            min_eig_f0,
        };
        debug!("{row:?}");
        trace.push(row);
        weights = kv.map(|v| cfg.rule.weight(v, cfg.eps));
        last = Some(k);
    }
    let controller = last.expect("at least one iteration");
    let pattern = pattern_of(&controller, cfg.rel_threshold)?;
    let non_monotone = !tail_monotone(&trace);
    Ok(Discovery {
        pattern,
        controller,
        trace,
        non_monotone,
    })
}
