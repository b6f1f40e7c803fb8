//! Exact AN-UE pairing.
//!
//! Every UE is assigned a single serving AN so as to minimize the summed
//! association cost, subject to at most `b_max` active ANs and at most
//! `u_max` UEs per AN. [`solve_pairing`] is a branch-and-bound over the AN
//! activation variables whose inner problem (fixed candidate AN set) is a
//! capacitated assignment solved exactly by min-cost flow.
//! [`solve_pairing_min_max`] instead minimizes the largest single cost.

mod bnb;
mod flow;
mod oracle;

use std::cmp::Ordering;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::topology::{link_distances, Topology};

pub use crate::topology::PairingObjective;

pub use bnb::SolveStats;
pub use flow::min_cost_assignment;
pub use oracle::{enumerate_pairing_oracle, DEFAULT_ENUMERATION_CAP};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PairingError {
    #[error("no assignment covers {k} UEs with b_max={b_max}, u_max={u_max}, M={m}")]
    Infeasible { k: usize, m: usize, b_max: usize, u_max: usize },
    #[error("enumeration needs {m}^{k} checks, above the cap of {cap}")]
    InstanceTooLarge { k: usize, m: usize, cap: u64 },
    #[error("invalid pairing problem: {0}")]
    Invalid(String),
}

/// Costs `c_km` (K x M) plus the cardinality and load limits.
#[derive(Debug, Clone, PartialEq)]
pub struct PairingProblem {
    pub costs: DMatrix<f64>,
    pub b_max: usize,
    pub u_max: usize,
}

impl PairingProblem {
    pub fn new(costs: DMatrix<f64>, b_max: usize, u_max: usize) -> Result<Self, PairingError> {
        if costs.nrows() == 0 || costs.ncols() == 0 {
            return Err(PairingError::Invalid("empty cost matrix".into()));
        }
        if costs.iter().any(|c| !c.is_finite() || *c < 0.0) {
            return Err(PairingError::Invalid("costs must be finite and nonnegative".into()));
        }
        if b_max == 0 || u_max == 0 {
            return Err(PairingError::Invalid("b_max and u_max must be positive".into()));
        }
        Ok(Self { costs, b_max, u_max })
    }

    pub fn num_ues(&self) -> usize {
        self.costs.nrows()
    }

    pub fn num_ans(&self) -> usize {
        self.costs.ncols()
    }

    fn infeasible(&self) -> PairingError {
        PairingError::Infeasible {
            k: self.num_ues(),
            m: self.num_ans(),
            b_max: self.b_max,
            u_max: self.u_max,
        }
    }

    /// Capacity check: `min(b_max, M) * u_max >= K`.
    pub fn check_capacity(&self) -> Result<(), PairingError> {
        if self.b_max.min(self.num_ans()) * self.u_max < self.num_ues() {
            Err(self.infeasible())
        } else {
            Ok(())
        }
    }

    /// Objective of an assignment, summed in UE order.
    pub fn objective(&self, serving: &[usize]) -> f64 {
        serving.iter().enumerate().map(|(k, &m)| self.costs[(k, m)]).sum()
    }

    /// Largest single association cost of an assignment.
    pub fn max_cost(&self, serving: &[usize]) -> f64 {
        serving.iter().enumerate().map(|(k, &m)| self.costs[(k, m)]).fold(0.0, f64::max)
    }
}

/// Optimal association: serving AN per UE and the derived activation pattern.
#[derive(Debug, Clone, PartialEq)]
pub struct PairingSolution {
    /// `S_k`, the serving AN of each UE.
    pub serving: Vec<usize>,
    /// `A`, active ANs in increasing order.
    pub active_set: Vec<usize>,
    /// `U_m`, UEs served by each AN (empty for inactive ANs).
    pub served: Vec<Vec<usize>>,
    pub objective: f64,
    pub num_ans: usize,
}

impl PairingSolution {
    pub fn from_serving(problem: &PairingProblem, serving: Vec<usize>) -> Self {
        let m = problem.num_ans();
        let mut served = vec![Vec::new(); m];
        for (k, &s) in serving.iter().enumerate() {
            served[s].push(k);
        }
        let active_set = (0..m).filter(|&a| !served[a].is_empty()).collect();
        let objective = problem.objective(&serving);
        Self { serving, active_set, served, objective, num_ans: m }
    }

    /// Binary association matrix `rho` (K x M).
    pub fn rho(&self) -> Vec<Vec<u8>> {
        self.serving
            .iter()
            .map(|&s| (0..self.num_ans).map(|m| u8::from(m == s)).collect())
            .collect()
    }

    /// Binary AN activation vector `alpha`.
    pub fn alpha(&self) -> Vec<u8> {
        (0..self.num_ans).map(|m| u8::from(!self.served[m].is_empty())).collect()
    }

    pub fn is_active(&self, m: usize) -> bool {
        !self.served[m].is_empty()
    }

    /// Deterministic preference among equal-cost optima: objective, then the
    /// sorted active set, then the serving vector, all lexicographic.
    pub fn tie_order(&self, other: &Self) -> Ordering {
        self.objective
            .total_cmp(&other.objective)
            .then_with(|| self.active_set.cmp(&other.active_set))
            .then_with(|| self.serving.cmp(&other.serving))
    }

    /// Check every structural invariant against `problem`.
    pub fn check(&self, problem: &PairingProblem) -> Result<(), String> {
        let (k, m) = (problem.num_ues(), problem.num_ans());
        if self.serving.len() != k {
            return Err("serving vector length".into());
        }
        if self.serving.iter().any(|&s| s >= m) {
            return Err("serving AN out of range".into());
        }
        let rho = self.rho();
        let alpha = self.alpha();
        for row in &rho {
            if row.iter().map(|&r| r as usize).sum::<usize>() != 1 {
                return Err("UE without exactly one serving AN".into());
            }
            if row.iter().zip(&alpha).any(|(&r, &a)| r > a) {
                return Err("association with inactive AN".into());
            }
        }
        if alpha.iter().map(|&a| a as usize).sum::<usize>() > problem.b_max {
            return Err(format!("{} active ANs exceed b_max={}", self.active_set.len(), problem.b_max));
        }
        if self.served.iter().any(|u| u.len() > problem.u_max) {
            return Err("AN load exceeds u_max".into());
        }
        if self.objective != problem.objective(&self.serving) {
            return Err("objective mismatch".into());
        }
        Ok(())
    }
}

/// Archive record for a solved instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairingArchive {
    pub costs: Vec<Vec<f64>>,
    pub b_max: usize,
    pub u_max: usize,
    pub rho: Vec<Vec<u8>>,
    pub alpha: Vec<u8>,
    pub objective: f64,
}

impl PairingArchive {
    pub fn new(problem: &PairingProblem, solution: &PairingSolution) -> Self {
        Self {
            costs: problem.costs.row_iter().map(|r| r.iter().copied().collect()).collect(),
            b_max: problem.b_max,
            u_max: problem.u_max,
            rho: solution.rho(),
            alpha: solution.alpha(),
            objective: solution.objective,
        }
    }

    pub fn problem(&self) -> Result<PairingProblem, PairingError> {
        let k = self.costs.len();
        let m = self.costs.first().map_or(0, Vec::len);
        if self.costs.iter().any(|r| r.len() != m) {
            return Err(PairingError::Invalid("ragged cost matrix".into()));
        }
        let flat: Vec<f64> = self.costs.iter().flatten().copied().collect();
        PairingProblem::new(DMatrix::from_row_slice(k, m, &flat), self.b_max, self.u_max)
    }

    pub fn solution(&self) -> Result<PairingSolution, PairingError> {
        let problem = self.problem()?;
        let serving = self
            .rho
            .iter()
            .map(|row| row.iter().position(|&r| r == 1))
            .collect::<Option<Vec<_>>>()
            .ok_or_else(|| PairingError::Invalid("rho row without an association".into()))?;
        Ok(PairingSolution::from_serving(&problem, serving))
    }
}

/// `c_km = 1 / g_km = (d_km / d_edge)^alpha`.
pub fn build_costs(topology: &Topology) -> DMatrix<f64> {
    link_distances(topology).map(|d| (d / topology.d_edge).powf(topology.alpha_pl))
}

/// Globally optimal pairing.
pub fn solve_pairing(problem: &PairingProblem) -> Result<PairingSolution, PairingError> {
    solve_pairing_with_stats(problem).map(|(s, _)| s)
}

pub fn solve_pairing_with_stats(
    problem: &PairingProblem,
) -> Result<(PairingSolution, SolveStats), PairingError> {
    problem.check_capacity()?;
    bnb::branch_and_bound(problem).ok_or_else(|| problem.infeasible())
}

/// Pairing minimizing `max_k c_{k,S_k}`; among those, the least summed cost.
///
/// Binary search over the distinct cost values: at threshold `tau` every
/// cost above `tau` is replaced by a penalty exceeding any assignment that
/// avoids them, so the sum solver's optimum stays below the penalty exactly
/// when `tau` is attainable.
pub fn solve_pairing_min_max(
    problem: &PairingProblem,
) -> Result<(PairingSolution, SolveStats), PairingError> {
    problem.check_capacity()?;
    let mut levels: Vec<f64> = problem.costs.iter().copied().collect();
    levels.sort_by(f64::total_cmp);
    levels.dedup();
    let penalty = 1.0 + problem.num_ues() as f64 * levels.last().copied().unwrap_or(0.0);
    let mut stats = SolveStats::default();
    let mut attempt = |tau: f64| -> Option<PairingSolution> {
        let masked = problem.costs.map(|c| if c <= tau { c } else { penalty });
        let sub = PairingProblem { costs: masked, ..problem.clone() };
        let (sol, s) = bnb::branch_and_bound(&sub)?;
        stats.nodes += s.nodes;
        stats.flow_solves += s.flow_solves;
        stats.seconds += s.seconds;
        (sol.objective < penalty).then(|| PairingSolution::from_serving(problem, sol.serving))
    };
    // The top level is always attainable once capacity allows it.
    let mut best = attempt(levels[levels.len() - 1]).ok_or_else(|| problem.infeasible())?;
    let (mut lo, mut hi) = (0, levels.len() - 1);
    while lo < hi {
        let mid = (lo + hi) / 2;
        match attempt(levels[mid]) {
            Some(sol) => {
                best = sol;
                hi = mid;
            }
            None => lo = mid + 1,
        }
    }
    Ok((best, stats))
}

/// Dispatch on `objective`.
pub fn solve_pairing_objective(
    problem: &PairingProblem,
    objective: PairingObjective,
) -> Result<(PairingSolution, SolveStats), PairingError> {
    match objective {
        PairingObjective::SumCost => solve_pairing_with_stats(problem),
        PairingObjective::MinMax => solve_pairing_min_max(problem),
    }
}
