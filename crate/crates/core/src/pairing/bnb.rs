//! Depth-first branch-and-bound over AN activation.
//!
//! A node fixes some ANs active (`fixed_in`, each consuming a slot of the
//! `b_max` budget) and some inactive (`fixed_out`). Two lower bounds prune a
//! node:
//!
//! * the min-cost flow over every AN not fixed out, ignoring the budget;
//! * a Lagrangian bound that dualizes the one-serving-AN equalities, which
//!   leaves a per-AN "best `u_max` reduced costs" subproblem plus a choice of
//!   at most `b_max - |fixed_in|` free ANs. Its multipliers are refined by
//!   subgradient steps and inherited by child nodes.
//!
//! Whenever the flow relaxation uses few enough ANs it is optimal for the
//! whole subtree.

use std::time::Instant;

use super::flow::min_cost_assignment;
use super::{PairingProblem, PairingSolution};

/// Search diagnostics.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SolveStats {
    pub nodes: usize,
    pub flow_solves: usize,
    pub seconds: f64,
}

#[derive(Clone)]
struct Node {
    fixed_in: Vec<bool>,
    fixed_out: Vec<bool>,
    multipliers: Vec<f64>,
}

struct Search<'a> {
    problem: &'a PairingProblem,
    best: Option<PairingSolution>,
    stats: SolveStats,
}

fn prune_tolerance(value: f64) -> f64 {
    1e-12 * value.abs().max(1.0)
}

impl<'a> Search<'a> {
    fn flow(&mut self, allowed: &[usize]) -> Option<(Vec<usize>, f64)> {
        self.stats.flow_solves += 1;
        min_cost_assignment(&self.problem.costs, allowed, self.problem.u_max)
    }

    fn incumbent_value(&self) -> f64 {
        self.best.as_ref().map_or(f64::INFINITY, |b| b.objective)
    }

    fn offer(&mut self, serving: Vec<usize>) {
        let cand = PairingSolution::from_serving(self.problem, serving);
        if cand.active_set.len() > self.problem.b_max {
            return;
        }
        let better = match &self.best {
            None => true,
            Some(b) => cand.tie_order(b).is_lt(),
        };
        if better {
            self.best = Some(cand);
        }
    }

    fn dominated(&self, bound: f64) -> bool {
        let inc = self.incumbent_value();
        bound > inc + prune_tolerance(inc)
    }

    /// Top-loaded ANs of the unconstrained assignment, then 1-swap local search.
    fn warm_start(&mut self, relaxed: &[usize]) {
        let (k, m, b_max) = (self.problem.num_ues(), self.problem.num_ans(), self.problem.b_max);
        let mut load = vec![0usize; m];
        for &s in relaxed {
            load[s] += 1;
        }
        let mut order: Vec<usize> = (0..m).collect();
        let col_sum = |a: usize| self.problem.costs.column(a).sum();
        order.sort_by(|&a, &b| load[b].cmp(&load[a]).then(col_sum(a).total_cmp(&col_sum(b))).then(a.cmp(&b)));
        let mut chosen: Vec<usize> = order[..b_max.min(m)].to_vec();
        chosen.sort_unstable();
        let Some((mut serving, mut value)) = self.flow(&chosen) else {
            return;
        };
        // Bounded first-improvement swap search.
        let mut improved = true;
        let mut passes = 0;
        while improved && passes < 4 * k.max(1) {
            improved = false;
            passes += 1;
            'outer: for i in 0..chosen.len() {
                for cand in 0..m {
                    if chosen.contains(&cand) {
                        continue;
                    }
                    let mut trial = chosen.clone();
                    trial[i] = cand;
                    trial.sort_unstable();
                    if let Some((s, v)) = self.flow(&trial) {
                        if v < value - prune_tolerance(value) {
                            chosen = trial;
                            serving = s;
                            value = v;
                            improved = true;
                            break 'outer;
                        }
                    }
                }
            }
        }
        self.offer(serving);
    }

    /// Lagrangian lower bound for the node, refining `node.multipliers` in place.
    /// Also returns the AN set selected by the best subproblem.
    fn lagrangian_bound(&mut self, node: &mut Node, iterations: usize) -> (f64, Vec<usize>) {
        let p = self.problem;
        let (k, m) = (p.num_ues(), p.num_ans());
        let slots = p.b_max - node.fixed_in.iter().filter(|&&f| f).count();
        let mut best_bound = f64::NEG_INFINITY;
        let mut best_set = Vec::new();
        let mut step_scale = 2.0;
        let mut stall = 0;
        let mut reduced: Vec<(f64, usize)> = Vec::with_capacity(k);
        let mut contrib = vec![0.0; m];
        let mut picks: Vec<Vec<usize>> = vec![Vec::new(); m];
        for _ in 0..iterations.max(1) {
            let mu = &node.multipliers;
            for a in 0..m {
                contrib[a] = 0.0;
                picks[a].clear();
                if node.fixed_out[a] {
                    continue;
                }
                reduced.clear();
                reduced.extend((0..k).map(|ue| (p.costs[(ue, a)] - mu[ue], ue)).filter(|r| r.0 < 0.0));
                reduced.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));
                for &(v, ue) in reduced.iter().take(p.u_max) {
                    contrib[a] += v;
                    picks[a].push(ue);
                }
            }
            let mut open: Vec<usize> = (0..m).filter(|&a| node.fixed_in[a]).collect();
            let mut free: Vec<usize> =
                (0..m).filter(|&a| !node.fixed_in[a] && !node.fixed_out[a] && contrib[a] < 0.0).collect();
            free.sort_by(|&x, &y| contrib[x].total_cmp(&contrib[y]).then(x.cmp(&y)));
            open.extend(free.into_iter().take(slots));
            let value: f64 = mu.iter().sum::<f64>() + open.iter().map(|&a| contrib[a]).sum::<f64>();
            if value > best_bound {
                best_bound = value;
                best_set = open.clone();
                stall = 0;
            } else {
                stall += 1;
                if stall >= 5 {
                    step_scale *= 0.5;
                    stall = 0;
                }
            }
            let target = self.incumbent_value();
            if self.dominated(best_bound) || !target.is_finite() {
                break;
            }
            let mut cover = vec![0i32; k];
            for &a in &open {
                for &ue in &picks[a] {
                    cover[ue] += 1;
                }
            }
            let grad: Vec<f64> = cover.iter().map(|&c| 1.0 - c as f64).collect();
            let norm2: f64 = grad.iter().map(|g| g * g).sum();
            if norm2 == 0.0 || step_scale < 1e-6 {
                break;
            }
            let step = step_scale * (target - value).max(1e-12 * target.abs().max(1.0)) / norm2;
            for (mu_k, g) in node.multipliers.iter_mut().zip(&grad) {
                *mu_k += step * g;
            }
        }
        best_set.sort_unstable();
        (best_bound, best_set)
    }

    fn explore(&mut self, root: Node) {
        let p = self.problem;
        let m = p.num_ans();
        let cardinality_binds = p.b_max < p.num_ues().min(m);
        let mut stack = vec![root];
        while let Some(mut node) = stack.pop() {
            self.stats.nodes += 1;
            let n_in = node.fixed_in.iter().filter(|&&f| f).count();
            if n_in > p.b_max {
                continue;
            }
            let allowed: Vec<usize> = if n_in == p.b_max {
                (0..m).filter(|&a| node.fixed_in[a]).collect()
            } else {
                (0..m).filter(|&a| !node.fixed_out[a]).collect()
            };
            let Some((serving, value)) = self.flow(&allowed) else {
                continue;
            };
            if self.dominated(value) {
                continue;
            }
            let mut load = vec![0usize; m];
            for &s in &serving {
                load[s] += 1;
            }
            let used_outside = (0..m).filter(|&a| load[a] > 0 && !node.fixed_in[a]).count();
            let used_total = (0..m).filter(|&a| load[a] > 0).count();
            if used_total <= p.b_max {
                // Globally feasible; optimal for this subtree if it fits the budget left.
                self.offer(serving.clone());
                if n_in + used_outside <= p.b_max {
                    continue;
                }
            }
            if cardinality_binds {
                let iters = if self.stats.nodes == 1 { 150 } else { 25 };
                let (bound, set) = self.lagrangian_bound(&mut node, iters);
                if self.dominated(bound) {
                    continue;
                }
                if set.len() <= p.b_max && set.len() * p.u_max >= p.num_ues() {
                    if let Some((s, _)) = self.flow(&set) {
                        self.offer(s);
                        if self.dominated(value) {
                            continue;
                        }
                    }
                }
            }
            // Branch on the most loaded AN not yet fixed active.
            let Some(pivot) = (0..m)
                .filter(|&a| load[a] > 0 && !node.fixed_in[a])
                .max_by(|&a, &b| load[a].cmp(&load[b]).then(b.cmp(&a)))
            else {
                continue;
            };
            let mut exclude = node.clone();
            exclude.fixed_out[pivot] = true;
            let mut include = node;
            include.fixed_in[pivot] = true;
            stack.push(exclude);
            stack.push(include);
        }
    }
}

pub(super) fn branch_and_bound(problem: &PairingProblem) -> Option<(PairingSolution, SolveStats)> {
    let start = Instant::now();
    let (k, m) = (problem.num_ues(), problem.num_ans());
    let mut search = Search { problem, best: None, stats: SolveStats::default() };
    let all: Vec<usize> = (0..m).collect();
    let (relaxed, _) = search.flow(&all)?;
    if problem.b_max < k.min(m) {
        search.warm_start(&relaxed);
    }
    // Start multipliers at each UE's second-cheapest cost.
    let multipliers = (0..k)
        .map(|ue| {
            let mut row: Vec<f64> = problem.costs.row(ue).iter().copied().collect();
            row.sort_by(f64::total_cmp);
            row[1.min(row.len() - 1)]
        })
        .collect();
    search.explore(Node { fixed_in: vec![false; m], fixed_out: vec![false; m], multipliers });
    search.stats.seconds = start.elapsed().as_secs_f64();
    let stats = search.stats;
    search.best.map(|b| (b, stats))
}
