use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettingsBuilder, DefaultSolver, IPSolver, SolverStatus, SupportedConeT,
};

use super::{Cone, ConicProblem, ConicSolution, ConicStatus, SdpBackend};
use crate::error::{Error, Result};

/// Interior-point adapter over the `clarabel` crate.
#[derive(Clone, Debug)]
pub struct ClarabelBackend {
    pub default_max_iter: u32,
    pub verbose: bool,
}

impl Default for ClarabelBackend {
    fn default() -> Self {
        Self {
            default_max_iter: 200,
            verbose: false,
        }
    }
}

fn map_status(s: SolverStatus) -> ConicStatus {
    match s {
        SolverStatus::Solved => ConicStatus::Solved,
        SolverStatus::AlmostSolved => ConicStatus::AlmostSolved,
        SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => {
            ConicStatus::PrimalInfeasible
        }
        SolverStatus::DualInfeasible | SolverStatus::AlmostDualInfeasible => {
            ConicStatus::DualInfeasible
        }
        SolverStatus::MaxIterations | SolverStatus::MaxTime => ConicStatus::MaxIterations,
        _ => ConicStatus::Failed,
    }
}

impl SdpBackend for ClarabelBackend {
    fn name(&self) -> &'static str {
        "clarabel"
    }

    fn solve_conic(&self, p: &ConicProblem) -> Result<ConicSolution> {
        if p.n == 0 || p.m() == 0 {
            // no constraints: bounded only by a zero objective
            let bounded = p.q.iter().all(|&c| c == 0.0);
            return Ok(ConicSolution {
                status: if bounded {
                    ConicStatus::Solved
                } else {
                    ConicStatus::DualInfeasible
                },
                x: vec![0.0; p.n],
                iterations: 0,
            });
        }
        let big_p = CscMatrix::<f64>::zeros((p.n, p.n));
        let a = CscMatrix::new_from_triplets(
            p.m(),
            p.n,
            p.a_rows.clone(),
            p.a_cols.clone(),
            p.a_vals.clone(),
        );
        let cones: Vec<SupportedConeT<f64>> = p
            .cones
            .iter()
            .map(|c| match *c {
                Cone::Nonneg(d) => SupportedConeT::NonnegativeConeT(d),
                Cone::PsdTriangle(d) => SupportedConeT::PSDTriangleConeT(d),
            })
            .collect();
        let settings = DefaultSettingsBuilder::default()
            .verbose(self.verbose)
            .max_iter(p.max_iter.unwrap_or(self.default_max_iter))
            .build()
            .map_err(|e| Error::Backend(e.to_string()))?;
        let mut solver = DefaultSolver::new(&big_p, &p.q, &a, &p.b, &cones, settings)
            .map_err(|e| Error::Backend(e.to_string()))?;
        solver.solve();
        let sol = &solver.solution;
        Ok(ConicSolution {
            status: map_status(sol.status),
            x: sol.x.clone(),
            iterations: sol.iterations,
        })
    }
}
