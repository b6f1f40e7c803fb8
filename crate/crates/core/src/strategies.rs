//! The four coordination strategies, end to end for one snapshot.
//!
//! | strategy        | pairing `b_max` | precoder                                   |
//! |-----------------|-----------------|--------------------------------------------|
//! | `Local`         | `K`             | local ZF, equal power split per AN         |
//! | `CoordPr`       | `K`             | max-min SINR bisection, serving AN only    |
//! | `LocalPowCoord` | `K`             | local ZF beams, coordinated per-UE powers  |
//! | `JPcon`         | `ceil(K/L)`     | max-min SINR bisection, all active ANs     |
//!
//! The first three share one pairing per snapshot.

use std::time::Instant;

use serde::Serialize;
use thiserror::Error;

use crate::channel::{self, ChannelRealization, PrecodingMatrix, SupportCase};
use crate::conic::FeasibilitySettings;
use crate::pairing::{build_costs, solve_pairing_objective, PairingError, PairingProblem, PairingSolution};
use crate::precoding::{
    apply_powers, bisection_with_doubling, power_coordination, zf_directions, zf_local, BisectionConfig,
    PrecodingError,
};
use crate::topology::{Scenario, ScenarioError, Strategy, Topology, P_BUDGET};

#[derive(Debug, Error, PartialEq)]
pub enum StrategyError {
    #[error("invalid scenario: {0}")]
    Scenario(#[from] ScenarioError),
    #[error("{strategy}: pairing failed: {source}")]
    Pairing { strategy: Strategy, source: PairingError },
    #[error("{strategy}: precoding failed: {source}")]
    Precoding { strategy: Strategy, source: PrecodingError },
}

/// Solver effort for one strategy run. Timings are wall-clock seconds.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Diagnostics {
    pub pairing_seconds: f64,
    pub pairing_nodes: usize,
    pub precoding_seconds: f64,
    pub bisection_steps: usize,
    pub cone_solves: usize,
    pub ipm_iterations: usize,
    pub active_ans: usize,
    /// Common SINR certified by the bisection, when one ran.
    pub theta_star: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct StrategyOutcome {
    pub strategy: Strategy,
    pub pairing: PairingSolution,
    pub w: PrecodingMatrix,
    pub rates: Vec<f64>,
    pub worse_rate: f64,
    pub sum_rate: f64,
    pub diagnostics: Diagnostics,
}

/// A pairing plus what it took to find it.
#[derive(Debug, Clone)]
pub struct SolvedPairing {
    pub solution: PairingSolution,
    pub seconds: f64,
    pub nodes: usize,
}

/// Pairing used by `strategy`: `b_max = K`, or `ceil(K/L)` for `JPcon`.
pub fn strategy_pairing(
    topology: &Topology,
    scenario: &Scenario,
    strategy: Strategy,
) -> Result<SolvedPairing, StrategyError> {
    let b_max = strategy.b_max(topology.num_ues(), scenario.l);
    let wrap = |source| StrategyError::Pairing { strategy, source };
    let problem = PairingProblem::new(build_costs(topology), b_max, scenario.u_max).map_err(wrap)?;
    let (solution, stats) = solve_pairing_objective(&problem, scenario.pairing_objective).map_err(wrap)?;
    Ok(SolvedPairing { solution, seconds: stats.seconds, nodes: stats.nodes })
}

/// Precode for `strategy` over a given pairing and assemble the outcome.
pub fn precode(
    h: &ChannelRealization,
    pairing: &SolvedPairing,
    scenario: &Scenario,
    strategy: Strategy,
    settings: &FeasibilitySettings,
) -> Result<StrategyOutcome, StrategyError> {
    let wrap = |source| StrategyError::Precoding { strategy, source };
    let pr = &pairing.solution;
    let mut diag = Diagnostics {
        pairing_seconds: pairing.seconds,
        pairing_nodes: pairing.nodes,
        active_ans: pr.active_set.len(),
        ..Diagnostics::default()
    };
    let start = Instant::now();
    let w = match strategy {
        Strategy::Local => zf_local(h, pr, P_BUDGET).map_err(wrap)?,
        Strategy::LocalPowCoord => {
            let dirs = zf_directions(h, pr).map_err(wrap)?;
            let gains = channel::effective_gains(h, &dirs)
                .map_err(|e| wrap(PrecodingError::InvalidGains(e.to_string())))?;
            let pc = power_coordination(&gains, pr, P_BUDGET, scenario.epsilon).map_err(wrap)?;
            diag.bisection_steps = pc.steps;
            diag.theta_star = Some(pc.min_sinr);
            apply_powers(&dirs, &pc.powers)
        }
        Strategy::CoordPr | Strategy::JPcon => {
            let support = match strategy {
                Strategy::JPcon => SupportCase::JointActive,
                _ => SupportCase::SingleServing,
            };
            let cfg = BisectionConfig::interference_free(h, pr, support, P_BUDGET, scenario.epsilon);
            let out = bisection_with_doubling(h, pr, support, P_BUDGET, scenario.power_constraint, &cfg, settings)
                .map_err(wrap)?;
            diag.bisection_steps = out.steps;
            diag.cone_solves = out.solves;
            diag.ipm_iterations = out.ipm_iterations;
            diag.theta_star = Some(out.theta_star);
            out.precoder
        }
    };
    diag.precoding_seconds = start.elapsed().as_secs_f64();
    let rates = channel::rates(h, &w);
    Ok(StrategyOutcome {
        strategy,
        pairing: pr.clone(),
        worse_rate: channel::worse_rate(&rates),
        sum_rate: channel::sum_rate(&rates),
        rates,
        w,
        diagnostics: diag,
    })
}

/// Run `scenario.strategy` on one snapshot with default solver settings.
pub fn run_strategy(
    h: &ChannelRealization,
    topology: &Topology,
    scenario: &Scenario,
) -> Result<StrategyOutcome, StrategyError> {
    run_strategy_with(h, topology, scenario, &FeasibilitySettings::default())
}

pub fn run_strategy_with(
    h: &ChannelRealization,
    topology: &Topology,
    scenario: &Scenario,
    settings: &FeasibilitySettings,
) -> Result<StrategyOutcome, StrategyError> {
    scenario.validate()?;
    let pairing = strategy_pairing(topology, scenario, scenario.strategy)?;
    precode(h, &pairing, scenario, scenario.strategy, settings)
}

/// Run several strategies on one snapshot, solving each distinct pairing once.
pub fn run_strategies(
    h: &ChannelRealization,
    topology: &Topology,
    scenario: &Scenario,
    strategies: &[Strategy],
    settings: &FeasibilitySettings,
) -> Result<Vec<Result<StrategyOutcome, StrategyError>>, StrategyError> {
    scenario.validate()?;
    let mut cache: Vec<(usize, Result<SolvedPairing, StrategyError>)> = Vec::new();
    let mut out = Vec::with_capacity(strategies.len());
    for &strategy in strategies {
        let b_max = strategy.b_max(topology.num_ues(), scenario.l);
        let idx = match cache.iter().position(|(b, _)| *b == b_max) {
            Some(i) => i,
            None => {
                cache.push((b_max, strategy_pairing(topology, scenario, strategy)));
                cache.len() - 1
            }
        };
        out.push(match &cache[idx].1 {
            Ok(p) => precode(h, p, scenario, strategy, settings),
            Err(StrategyError::Pairing { source, .. }) => {
                Err(StrategyError::Pairing { strategy, source: source.clone() })
            }
            Err(e) => unreachable!("pairing only fails with pairing errors: {e}"),
        });
    }
    Ok(out)
}

/// Worse-rate slack implied by a bisection tolerance `epsilon` on SINR:
/// `log2(1 + x + eps) - log2(1 + x) <= eps / ln 2`.
pub fn rate_tolerance(epsilon: f64) -> f64 {
    epsilon / std::f64::consts::LN_2
}
