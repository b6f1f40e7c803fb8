//! Common-SINR feasibility as a second-order cone program.
//!
//! For a target `theta`, each UE needs
//! `Re(h_k' w_k) / sqrt(theta) >= ||(1, h_k' w_i for i != k)||` with
//! `Im(h_k' w_k) = 0`, plus per-AN power caps. Feasibility is decided by
//! minimizing a common slack `t` added to every SINR cone head: the target is
//! feasible iff the optimal slack is at most `feas_tol`. In practice the solve
//! stops early as soon as an iterate yields a precoder that passes a direct
//! SINR and power recheck, or a dual bound proves the slack positive.

pub mod cone;
pub mod ipm;
mod kkt;

use std::ops::ControlFlow;

use nalgebra::{Complex, DMatrix};
use serde::Serialize;
use thiserror::Error;

use crate::channel::{sinrs, ChannelRealization, PrecodingMatrix, SupportCase, C64};
use crate::pairing::PairingSolution;
use crate::topology::PowerConstraint;
use cone::Cone;
use ipm::{ConeProgram, IpmSettings, IpmStatus, SparseRow};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeasibilitySettings {
    /// Largest optimal slack still declared feasible.
    pub feas_tol: f64,
    /// Relative SINR shortfall tolerated when rechecking a witness.
    pub tol_sinr: f64,
    /// Relative per-AN power excess tolerated when rechecking a witness.
    pub tol_pow: f64,
    pub ipm: IpmSettings,
}

impl Default for FeasibilitySettings {
    fn default() -> Self {
        Self { feas_tol: 1e-7, tol_sinr: 1e-4, tol_pow: 1e-6, ipm: IpmSettings::default() }
    }
}

/// One probe: can every UE reach SINR `theta`?
#[derive(Debug, Clone, Copy)]
pub struct FeasibilityInstance<'a> {
    pub channel: &'a ChannelRealization,
    pub pairing: &'a PairingSolution,
    pub support: SupportCase,
    pub theta: f64,
    pub p_budget: f64,
    pub power: PowerConstraint,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Feasibility {
    Feasible(PrecodingMatrix),
    Infeasible,
}

impl Feasibility {
    pub fn is_feasible(&self) -> bool {
        matches!(self, Feasibility::Feasible(_))
    }
}

#[derive(Debug, Clone)]
pub struct FeasibilityReport {
    pub outcome: Feasibility,
    pub iterations: usize,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConicError {
    #[error("solver numerical failure at theta={theta}: {reason}")]
    SolverNumericalFailure { theta: f64, reason: String },
    #[error("invalid feasibility instance: {0}")]
    InvalidInstance(String),
}

/// Per-AN power cap `p_budget / |A|`.
pub fn per_an_cap(pairing: &PairingSolution, p_budget: f64) -> f64 {
    p_budget / pairing.active_set.len().max(1) as f64
}

/// ANs allowed to carry UE `k`'s data under the support case.
pub fn allowed_ans(pairing: &PairingSolution, support: SupportCase, k: usize) -> Vec<usize> {
    match support {
        SupportCase::SingleServing => vec![pairing.serving[k]],
        SupportCase::JointActive => pairing.active_set.clone(),
    }
}

/// Rotate each column so that `h_k' w_k` is real and nonnegative.
pub fn phase_normalize(channel: &ChannelRealization, w: &mut PrecodingMatrix) {
    for k in 0..w.num_ues() {
        let a = channel.h.column(k).dotc(&w.w.column(k));
        let mag = a.norm();
        if mag > 0.0 {
            let rot = a.conj() / mag;
            for v in w.w.column_mut(k).iter_mut() {
                *v *= rot;
            }
        }
    }
}

/// Scale each AN's rows down so its power (or norm sum) fits the cap exactly.
pub fn enforce_power_caps(w: &mut PrecodingMatrix, l: usize, cap: f64, power: PowerConstraint) {
    let m = w.w.nrows() / l;
    let usage = match power {
        PowerConstraint::SumOfSquares => w.an_powers(l),
        PowerConstraint::SumOfNorms => w.an_norm_sums(l),
    };
    let limit = match power {
        PowerConstraint::SumOfSquares => cap,
        PowerConstraint::SumOfNorms => cap.sqrt(),
    };
    for a in 0..m {
        if usage[a] > limit {
            let f = match power {
                PowerConstraint::SumOfSquares => (cap / usage[a]).sqrt(),
                PowerConstraint::SumOfNorms => limit / usage[a],
            };
            w.w.rows_mut(a * l, l).scale_mut(f);
        }
    }
}

/// Direct recheck of a candidate precoder against the instance: support
/// pattern, per-AN power and every UE's SINR.
pub fn witness_violation(
    inst: &FeasibilityInstance,
    w: &PrecodingMatrix,
    settings: &FeasibilitySettings,
) -> Option<String> {
    let ch = inst.channel;
    let cap = per_an_cap(inst.pairing, inst.p_budget);
    for k in 0..ch.k {
        let allowed = allowed_ans(inst.pairing, inst.support, k);
        for m in 0..ch.m {
            if !allowed.contains(&m) && !w.block_is_zero(ch.l, m, k) {
                return Some(format!("UE {k} has data on AN {m} outside its support"));
            }
        }
    }
    let (usage, limit) = match inst.power {
        PowerConstraint::SumOfSquares => (w.an_powers(ch.l), cap),
        PowerConstraint::SumOfNorms => (w.an_norm_sums(ch.l), cap.sqrt()),
    };
    for (m, u) in usage.iter().enumerate() {
        if *u > limit * (1.0 + inst_tol_pow(settings, inst.power)) {
            return Some(format!("AN {m} uses {u} over cap {limit}"));
        }
    }
    let g = sinrs(ch, w);
    let floor = inst.theta * (1.0 - settings.tol_sinr);
    if let Some((k, v)) = g.iter().enumerate().find(|(_, v)| **v < floor) {
        return Some(format!("UE {k} SINR {v} below {floor}"));
    }
    None
}

fn inst_tol_pow(settings: &FeasibilitySettings, power: PowerConstraint) -> f64 {
    match power {
        PowerConstraint::SumOfSquares => settings.tol_pow,
        // Norm sums scale like the square root of power.
        PowerConstraint::SumOfNorms => 0.5 * settings.tol_pow,
    }
}

#[derive(Serialize)]
struct InstanceDump<'a> {
    theta: f64,
    p_budget: f64,
    support: SupportCase,
    power: PowerConstraint,
    serving: &'a [usize],
    active_set: &'a [usize],
    channel: serde_json::Value,
}

impl FeasibilityInstance<'_> {
    /// JSON dump for failure triage.
    pub fn to_json(&self) -> String {
        let channel = serde_json::from_str(&self.channel.to_json()).expect("channel dump is JSON");
        serde_json::to_string(&InstanceDump {
            theta: self.theta,
            p_budget: self.p_budget,
            support: self.support,
            power: self.power,
            serving: &self.pairing.serving,
            active_set: &self.pairing.active_set,
            channel,
        })
        .expect("instance serializes")
    }

    fn validate(&self) -> Result<(), ConicError> {
        let ch = self.channel;
        let bad = |s: String| Err(ConicError::InvalidInstance(s));
        if !(self.theta > 0.0 && self.theta.is_finite()) {
            return bad(format!("theta must be positive and finite, got {}", self.theta));
        }
        if !(self.p_budget > 0.0 && self.p_budget.is_finite()) {
            return bad(format!("power budget must be positive, got {}", self.p_budget));
        }
        if self.pairing.serving.len() != ch.k || self.pairing.num_ans != ch.m {
            return bad("pairing dimensions disagree with the channel".into());
        }
        if ch.h.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return bad("channel has non-finite entries".into());
        }
        Ok(())
    }
}

/// Index map from real variables to precoder entries.
struct Layout {
    /// Per UE: allowed ANs and the offset of its first variable.
    allowed: Vec<Vec<usize>>,
    offset: Vec<usize>,
    n_w: usize,
    l: usize,
}

impl Layout {
    fn new(inst: &FeasibilityInstance) -> Self {
        let l = inst.channel.l;
        let mut allowed = Vec::new();
        let mut offset = Vec::new();
        let mut next = 0;
        for k in 0..inst.channel.k {
            let a = allowed_ans(inst.pairing, inst.support, k);
            offset.push(next);
            next += 2 * l * a.len();
            allowed.push(a);
        }
        Self { allowed, offset, n_w: next, l }
    }

    /// Index of `Re w_{m,k}[j]`; the imaginary part follows it.
    fn var(&self, k: usize, slot: usize, j: usize) -> usize {
        self.offset[k] + 2 * (slot * self.l + j)
    }

    /// Sparse coefficients of `Re(h' w_i)` and `Im(h' w_i)` over UE `i`'s
    /// variables, for a stacked channel column `h`, scaled by `scale`.
    fn inner_rows(&self, h: nalgebra::DVectorView<C64>, i: usize, scale: f64) -> (SparseRow, SparseRow) {
        let mut re = Vec::with_capacity(2 * self.l * self.allowed[i].len());
        let mut im = Vec::with_capacity(re.capacity());
        for (slot, &m) in self.allowed[i].iter().enumerate() {
            for j in 0..self.l {
                let c = h[m * self.l + j] * scale;
                let v = self.var(i, slot, j);
                // conj(c) (x + i y) = (c.re x + c.im y) + i (c.re y - c.im x)
                re.push((v, c.re));
                re.push((v + 1, c.im));
                im.push((v, -c.im));
                im.push((v + 1, c.re));
            }
        }
        (re, im)
    }

    fn precoder(&self, x: &[f64], inst: &FeasibilityInstance, amp: f64) -> PrecodingMatrix {
        let ch = inst.channel;
        let mut w = PrecodingMatrix::zeros(ch.l, ch.m, ch.k, inst.support);
        for k in 0..ch.k {
            for (slot, &m) in self.allowed[k].iter().enumerate() {
                for j in 0..self.l {
                    let v = self.var(k, slot, j);
                    w.w[(m * self.l + j, k)] = Complex::new(amp * x[v], amp * x[v + 1]);
                }
            }
        }
        w
    }
}

fn negate(row: SparseRow) -> SparseRow {
    row.into_iter().map(|(j, v)| (j, -v)).collect()
}

/// Build the slack-minimization cone program. Variables are
/// `x = w / sqrt(cap)`, then the slack `t`, then (for the norm-sum power
/// form) one auxiliary bound per (AN, UE) block.
fn build_program(inst: &FeasibilityInstance, layout: &Layout) -> ConeProgram {
    let ch = inst.channel;
    let (k_n, l) = (ch.k, ch.l);
    let cap = per_an_cap(inst.pairing, inst.p_budget);
    let amp = cap.sqrt();
    let t_var = layout.n_w;
    let mut n = layout.n_w + 1;
    let mut g: Vec<SparseRow> = Vec::new();
    let mut h: Vec<f64> = Vec::new();
    let mut cones = Vec::new();
    let inv_sqrt_theta = 1.0 / inst.theta.sqrt();

    // SINR cones, each normalized by r_k = sqrt(1 + cap ||h_k||^2).
    for k in 0..k_n {
        let col = ch.h.column(k);
        let r_k = (1.0 + cap * col.norm_squared()).sqrt();
        let s = amp / r_k;
        let offset = h.len();
        let (re, _) = layout.inner_rows(col, k, s * inv_sqrt_theta);
        let mut head = negate(re);
        head.push((t_var, -1.0));
        g.push(head);
        h.push(0.0);
        g.push(Vec::new());
        h.push(1.0 / r_k);
        for i in (0..k_n).filter(|&i| i != k) {
            let (re, im) = layout.inner_rows(col, i, s);
            g.push(negate(re));
            h.push(0.0);
            g.push(negate(im));
            h.push(0.0);
        }
        cones.push(Cone::Soc { offset, dim: h.len() - offset });
    }

    // Per-AN power.
    let mut blocks_of_an: Vec<Vec<(usize, usize)>> = vec![Vec::new(); ch.m];
    for k in 0..k_n {
        for (slot, &m) in layout.allowed[k].iter().enumerate() {
            blocks_of_an[m].push((k, slot));
        }
    }
    let mut norm_sum_rows = Vec::new();
    let mut aux_owner = Vec::new();
    for (m, blocks) in blocks_of_an.iter().enumerate() {
        if blocks.is_empty() || !inst.pairing.is_active(m) {
            continue;
        }
        match inst.power {
            PowerConstraint::SumOfSquares => {
                let offset = h.len();
                g.push(Vec::new());
                h.push(1.0);
                for &(k, slot) in blocks {
                    for j in 0..l {
                        let v = layout.var(k, slot, j);
                        g.push(vec![(v, -1.0)]);
                        h.push(0.0);
                        g.push(vec![(v + 1, -1.0)]);
                        h.push(0.0);
                    }
                }
                cones.push(Cone::Soc { offset, dim: h.len() - offset });
            }
            PowerConstraint::SumOfNorms => {
                let mut sum_row = Vec::new();
                for &(k, slot) in blocks {
                    let u = n;
                    n += 1;
                    aux_owner.push(k);
                    sum_row.push((u, 1.0));
                    let offset = h.len();
                    g.push(vec![(u, -1.0)]);
                    h.push(0.0);
                    for j in 0..l {
                        let v = layout.var(k, slot, j);
                        g.push(vec![(v, -1.0)]);
                        h.push(0.0);
                        g.push(vec![(v + 1, -1.0)]);
                        h.push(0.0);
                    }
                    cones.push(Cone::Soc { offset, dim: h.len() - offset });
                }
                norm_sum_rows.push(sum_row);
            }
        }
    }
    if !norm_sum_rows.is_empty() {
        let offset = h.len();
        for row in norm_sum_rows {
            g.push(row);
            h.push(1.0);
        }
        cones.push(Cone::NonNeg { offset, dim: h.len() - offset });
    }

    // Im(h_k' w_k) = 0, rows normalized.
    let mut a = DMatrix::zeros(k_n, n);
    for k in 0..k_n {
        let (_, im) = layout.inner_rows(ch.h.column(k), k, 1.0);
        let nrm = im.iter().map(|(_, v)| v * v).sum::<f64>().sqrt();
        if nrm > 0.0 {
            for (j, v) in im {
                a[(k, j)] = v / nrm;
            }
        }
    }
    // Drop all-zero rows (a UE with no channel to its support).
    let keep: Vec<usize> = (0..k_n).filter(|&k| a.row(k).iter().any(|v| *v != 0.0)).collect();
    let a = a.select_rows(keep.iter());
    let b = vec![0.0; keep.len()];
    let mut c = vec![0.0; n];
    c[t_var] = 1.0;
    for row in &mut g {
        row.sort_unstable_by_key(|e| e.0);
    }
    // One group per UE, the slack on its own.
    let mut groups = Vec::with_capacity(n);
    for k in 0..k_n {
        groups.resize(groups.len() + 2 * l * layout.allowed[k].len(), k);
    }
    groups.push(k_n);
    groups.extend(aux_owner);
    ConeProgram { c, g, h, cones, a, b, groups: Some(groups) }
}

/// Decide whether `theta` is achievable; returns a witness precoder if so.
pub fn check_sinr_feasibility(inst: &FeasibilityInstance) -> Result<Feasibility, ConicError> {
    solve_feasibility(inst, &FeasibilitySettings::default()).map(|r| r.outcome)
}

pub fn solve_feasibility(
    inst: &FeasibilityInstance,
    settings: &FeasibilitySettings,
) -> Result<FeasibilityReport, ConicError> {
    inst.validate()?;
    let ch = inst.channel;
    let cap = per_an_cap(inst.pairing, inst.p_budget);
    let layout = Layout::new(inst);
    let prog = build_program(inst, &layout);
    let amp = cap.sqrt();

    let try_witness = |x: &[f64]| {
        let mut w = layout.precoder(x, inst, amp);
        enforce_power_caps(&mut w, ch.l, cap, inst.power);
        phase_normalize(ch, &mut w);
        witness_violation(inst, &w, settings).is_none().then_some(w)
    };
    // Certified lower bound on the optimal slack from an approximately
    // dual-feasible iterate.
    let proves_infeasible = |it: &ipm::Iterate| {
        let xnorm = it.x.iter().map(|v| v * v).sum::<f64>().sqrt();
        it.dres < 1e-7 && it.dcost - it.dres * (1.0 + xnorm) > settings.feas_tol
    };

    let result = ipm::solve(&prog, &settings.ipm, |it| {
        if it.iter > 0 || it.pres < 1e-9 {
            if let Some(w) = try_witness(&it.x) {
                return ControlFlow::Break(Feasibility::Feasible(w));
            }
        }
        if proves_infeasible(it) {
            return ControlFlow::Break(Feasibility::Infeasible);
        }
        ControlFlow::Continue(())
    });
    let iterations = result.last.iter;
    let failure = |reason: String| ConicError::SolverNumericalFailure { theta: inst.theta, reason };
    let outcome = match result.status {
        IpmStatus::Stopped(f) => f,
        IpmStatus::Optimal => {
            let last = &result.last;
            if last.pcost > settings.feas_tol {
                Feasibility::Infeasible
            } else if let Some(w) = try_witness(&last.x) {
                Feasibility::Feasible(w)
            } else if last.pcost > 0.0 {
                // Slack within tolerance but the recheck fails: treat as out of reach.
                Feasibility::Infeasible
            } else {
                return Err(failure(format!("optimal slack {} but witness fails recheck", last.pcost)));
            }
        }
        IpmStatus::MaxIterations => {
            let last = &result.last;
            if last.dres < 1e-6 && last.dcost > settings.feas_tol && last.pcost > settings.feas_tol {
                Feasibility::Infeasible
            } else {
                return Err(failure(format!(
                    "iteration limit (pcost {}, dcost {}, pres {}, dres {})",
                    last.pcost, last.dcost, last.pres, last.dres
                )));
            }
        }
        IpmStatus::Numerical(reason) => {
            let last = &result.last;
            if last.iter > 0 && last.dres < 1e-6 && last.dcost > 10.0 * settings.feas_tol {
                Feasibility::Infeasible
            } else {
                return Err(failure(reason));
            }
        }
    };
    Ok(FeasibilityReport { outcome, iterations })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::draw_fading;
    use crate::pairing::{build_costs, solve_pairing, PairingProblem};
    use crate::topology::{generate_topology, Scenario};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn snapshot(k: usize, m: usize, l: usize, b_max: usize, seed: u64) -> (ChannelRealization, PairingSolution) {
        let s = Scenario::new(k, m).with_antennas(l).with_snr_db(10.0);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let topo = generate_topology(&s, &mut rng);
        let ch = draw_fading(&topo, &s, &mut rng);
        let p = PairingProblem::new(build_costs(&topo), b_max, l).unwrap();
        (ch, solve_pairing(&p).unwrap())
    }

    fn inst<'a>(ch: &'a ChannelRealization, pr: &'a PairingSolution, support: SupportCase, theta: f64) -> FeasibilityInstance<'a> {
        FeasibilityInstance { channel: ch, pairing: pr, support, theta, p_budget: 1.0, power: PowerConstraint::SumOfSquares }
    }

    #[test]
    fn single_link_threshold() {
        for seed in 0..10 {
            let (ch, pr) = snapshot(1, 1, 4, 1, seed);
            let best = ch.column_norm_sq(0);
            let lo = check_sinr_feasibility(&inst(&ch, &pr, SupportCase::SingleServing, 0.5 * best)).unwrap();
            assert!(lo.is_feasible());
            let hi = check_sinr_feasibility(&inst(&ch, &pr, SupportCase::SingleServing, 2.0 * best)).unwrap();
            assert_eq!(hi, Feasibility::Infeasible);
        }
    }

    #[test]
    fn witness_rechecks_and_respects_support() {
        for (seed, support, b_max) in [(3, SupportCase::SingleServing, 4), (4, SupportCase::JointActive, 3)] {
            let (ch, pr) = snapshot(6, 4, 2, b_max, seed);
            let i = inst(&ch, &pr, support, 0.05);
            match check_sinr_feasibility(&i).unwrap() {
                Feasibility::Feasible(w) => {
                    assert!(witness_violation(&i, &w, &FeasibilitySettings::default()).is_none());
                    assert_eq!(w.support, support);
                    for k in 0..6 {
                        let a = ch.h.column(k).dotc(&w.w.column(k));
                        assert!(a.im.abs() <= 1e-12 * a.re.abs().max(1.0) && a.re >= 0.0);
                    }
                }
                Feasibility::Infeasible => panic!("low target should be reachable"),
            }
        }
    }

    #[test]
    fn sum_of_norms_form_is_more_conservative() {
        let (ch, pr) = snapshot(4, 2, 4, 2, 11);
        let mut i = inst(&ch, &pr, SupportCase::JointActive, 1.0);
        i.power = PowerConstraint::SumOfNorms;
        if let Feasibility::Feasible(w) = check_sinr_feasibility(&i).unwrap() {
            let cap = per_an_cap(&pr, 1.0);
            for s in w.an_norm_sums(4) {
                assert!(s <= cap.sqrt() * (1.0 + 1e-6));
            }
            i.power = PowerConstraint::SumOfSquares;
            assert!(check_sinr_feasibility(&i).unwrap().is_feasible());
        }
    }

    #[test]
    fn rejects_bad_theta() {
        let (ch, pr) = snapshot(1, 1, 2, 1, 0);
        let e = check_sinr_feasibility(&inst(&ch, &pr, SupportCase::SingleServing, 0.0));
        assert!(matches!(e, Err(ConicError::InvalidInstance(_))));
        assert!(inst(&ch, &pr, SupportCase::SingleServing, 1.0).to_json().contains("\"theta\":1.0"));
    }
}
