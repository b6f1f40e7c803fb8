//! Precoder construction: per-AN zero-forcing, bisection on the common SINR
//! target, and power coordination over fixed beams.

use nalgebra::DMatrix;
use thiserror::Error;

use crate::channel::{sinrs, ChannelRealization, PrecodingMatrix, SupportCase};
use crate::conic::{
    allowed_ans, per_an_cap, solve_feasibility, ConicError, Feasibility, FeasibilityInstance,
    FeasibilitySettings,
};
use crate::pairing::PairingSolution;
use crate::topology::PowerConstraint;

/// Default bisection tolerance, in linear SINR.
pub const DEFAULT_EPSILON: f64 = 1e-3;

/// Bracket width at which a bisection stops: `epsilon` once the bracket sits
/// above one, `epsilon * ub` below that, so small SINRs keep their relative
/// accuracy. Never looser than `epsilon`.
pub fn bisection_width(epsilon: f64, ub: f64) -> f64 {
    epsilon * ub.clamp(1e-6, 1.0)
}

/// Singular values below this fraction of the largest count as zero.
const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PrecodingError {
    #[error("local channel at AN {an} is rank deficient (condition {condition:e})")]
    RankDeficientLocalChannel { an: usize, condition: f64 },
    #[error("AN {an} serves {served} UEs but has only {antennas} antennas")]
    TooManyUes { an: usize, served: usize, antennas: usize },
    #[error("initial upper bracket {theta_ub} is feasible")]
    BracketError { theta_ub: f64 },
    #[error("invalid bisection bracket [{lb}, {ub}] or epsilon {epsilon}")]
    InvalidBracket { lb: f64, ub: f64, epsilon: f64 },
    #[error("effective gains invalid: {0}")]
    InvalidGains(String),
    #[error(transparent)]
    Conic(#[from] ConicError),
}

/// Unit-norm zero-forcing beam per UE from its serving AN's local CSI.
pub fn zf_directions(
    channel: &ChannelRealization,
    pairing: &PairingSolution,
) -> Result<PrecodingMatrix, PrecodingError> {
    let l = channel.l;
    let mut w = PrecodingMatrix::zeros(l, channel.m, channel.k, SupportCase::SingleServing);
    for &m in &pairing.active_set {
        let users = &pairing.served[m];
        if users.len() > l {
            return Err(PrecodingError::TooManyUes { an: m, served: users.len(), antennas: l });
        }
        // Rows of `local` are h_mk^H, so local * f_i = e_i for the pseudo-inverse columns.
        let local = DMatrix::from_fn(users.len(), l, |r, j| channel.h[(m * l + j, users[r])].conj());
        let svd = local.clone().svd(true, true);
        let smax = svd.singular_values.max();
        let smin = svd.singular_values.min();
        if !(smax > 0.0) || smin <= RANK_TOL * smax {
            let condition = if smin > 0.0 { smax / smin } else { f64::INFINITY };
            return Err(PrecodingError::RankDeficientLocalChannel { an: m, condition });
        }
        let pinv = svd.pseudo_inverse(0.0).expect("SVD carries both factors");
        for (col, &k) in users.iter().enumerate() {
            let f = pinv.column(col);
            let nrm = f.norm();
            for j in 0..l {
                w.w[(m * l + j, k)] = f[j] / nrm;
            }
        }
    }
    Ok(w)
}

/// Scale unit-norm beams by per-UE powers: `w_k = sqrt(p_k) * d_k`.
pub fn apply_powers(directions: &PrecodingMatrix, powers: &[f64]) -> PrecodingMatrix {
    let mut w = directions.clone();
    for (k, &p) in powers.iter().enumerate() {
        w.w.column_mut(k).scale_mut(p.max(0.0).sqrt());
    }
    w
}

/// Equal split of each AN's cap `p_budget / |A|` over the UEs it serves.
pub fn equal_split_powers(pairing: &PairingSolution, p_budget: f64) -> Vec<f64> {
    let cap = per_an_cap(pairing, p_budget);
    pairing.serving.iter().map(|&m| cap / pairing.served[m].len() as f64).collect()
}

/// Local baseline: zero-forcing beams with equal per-UE power.
pub fn zf_local(
    channel: &ChannelRealization,
    pairing: &PairingSolution,
    p_budget: f64,
) -> Result<PrecodingMatrix, PrecodingError> {
    let dirs = zf_directions(channel, pairing)?;
    Ok(apply_powers(&dirs, &equal_split_powers(pairing, p_budget)))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BisectionConfig {
    pub theta_lb: f64,
    pub theta_ub: f64,
    pub epsilon: f64,
    pub max_iters: usize,
    /// Probe `theta_ub` first and fail with `BracketError` if it is feasible.
    /// Not needed when `theta_ub` is a proven upper bound.
    pub check_upper: bool,
}

impl BisectionConfig {
    /// Explicit bracket; the upper end is checked.
    pub fn new(theta_lb: f64, theta_ub: f64, epsilon: f64) -> Self {
        Self { theta_lb, theta_ub, epsilon, max_iters: 200, check_upper: true }
    }

    /// Bracket `[0, ub]` with `ub` the interference-free bound
    /// `min_k cap * (sum_{m allowed} ||h_mk||)^2`, which no precoder can exceed.
    pub fn interference_free(
        channel: &ChannelRealization,
        pairing: &PairingSolution,
        support: SupportCase,
        p_budget: f64,
        epsilon: f64,
    ) -> Self {
        let ub = interference_free_bound(channel, pairing, support, p_budget);
        Self { theta_lb: 0.0, theta_ub: ub, epsilon, max_iters: 200, check_upper: false }
    }
}

/// `min_k cap * (sum_{m allowed} ||h_mk||)^2`: with interference ignored and
/// every allowed AN at its cap, no UE can do better.
pub fn interference_free_bound(
    channel: &ChannelRealization,
    pairing: &PairingSolution,
    support: SupportCase,
    p_budget: f64,
) -> f64 {
    let cap = per_an_cap(pairing, p_budget);
    (0..channel.k)
        .map(|k| {
            let s: f64 = allowed_ans(pairing, support, k)
                .iter()
                .map(|&m| channel.h.view((m * channel.l, k), (channel.l, 1)).norm())
                .sum();
            cap * s * s
        })
        .fold(f64::INFINITY, f64::min)
}

#[derive(Debug, Clone)]
pub struct BisectionOutcome {
    pub theta_star: f64,
    pub precoder: PrecodingMatrix,
    pub theta_lb: f64,
    pub theta_ub: f64,
    /// Bisection steps, and how many of them needed a cone solve.
    pub steps: usize,
    pub solves: usize,
    pub ipm_iterations: usize,
}

fn min_sinr(channel: &ChannelRealization, w: &PrecodingMatrix) -> f64 {
    sinrs(channel, w).into_iter().fold(f64::INFINITY, f64::min)
}

/// Largest common SINR reachable under the support pattern and per-AN caps,
/// to within [`bisection_width`], with the precoder of the last feasible probe.
#[allow(clippy::too_many_arguments)]
pub fn bisection_max_min_sinr(
    channel: &ChannelRealization,
    pairing: &PairingSolution,
    support: SupportCase,
    p_budget: f64,
    power: PowerConstraint,
    cfg: &BisectionConfig,
    settings: &FeasibilitySettings,
) -> Result<BisectionOutcome, PrecodingError> {
    let (mut lb, mut ub) = (cfg.theta_lb, cfg.theta_ub);
    if !(lb >= 0.0 && ub > lb && cfg.epsilon > 0.0 && ub.is_finite()) {
        return Err(PrecodingError::InvalidBracket { lb, ub, epsilon: cfg.epsilon });
    }
    let probe = |theta: f64| {
        let inst = FeasibilityInstance { channel, pairing, support, theta, p_budget, power };
        solve_feasibility(&inst, settings)
    };
    let mut solves = 0;
    let mut ipm_iterations = 0;
    let mut best: Option<(PrecodingMatrix, f64)> = None;
    if cfg.check_upper {
        let r = probe(ub)?;
        solves += 1;
        ipm_iterations += r.iterations;
        if r.outcome.is_feasible() {
            return Err(PrecodingError::BracketError { theta_ub: ub });
        }
    }
    let mut steps = 0;
    while ub - lb > bisection_width(cfg.epsilon, ub) && steps < cfg.max_iters {
        steps += 1;
        let theta = 0.5 * (lb + ub);
        if let Some((_, achieved)) = &best {
            if *achieved >= theta {
                lb = achieved.min(ub);
                continue;
            }
        }
        let r = probe(theta)?;
        solves += 1;
        ipm_iterations += r.iterations;
        match r.outcome {
            Feasibility::Feasible(w) => {
                let achieved = min_sinr(channel, &w);
                lb = theta.max(achieved.min(ub));
                best = Some((w, achieved));
            }
            Feasibility::Infeasible => ub = theta,
        }
    }
    // The optimum sits below epsilon: still hand back a usable precoder.
    if best.is_none() {
        let mut theta = ub;
        for _ in 0..64 {
            theta *= 0.5;
            let r = probe(theta)?;
            solves += 1;
            ipm_iterations += r.iterations;
            if let Feasibility::Feasible(w) = r.outcome {
                let achieved = min_sinr(channel, &w);
                lb = lb.max(theta.min(achieved));
                best = Some((w, achieved));
                break;
            }
        }
    }
    let precoder = match best {
        Some((w, _)) => w,
        None => PrecodingMatrix::zeros(channel.l, channel.m, channel.k, support),
    };
    Ok(BisectionOutcome { theta_star: lb, precoder, theta_lb: lb, theta_ub: ub, steps, solves, ipm_iterations })
}

/// Run the bisection, doubling the upper bracket while it proves feasible.
#[allow(clippy::too_many_arguments)]
pub fn bisection_with_doubling(
    channel: &ChannelRealization,
    pairing: &PairingSolution,
    support: SupportCase,
    p_budget: f64,
    power: PowerConstraint,
    cfg: &BisectionConfig,
    settings: &FeasibilitySettings,
) -> Result<BisectionOutcome, PrecodingError> {
    let mut cfg = *cfg;
    for _ in 0..64 {
        match bisection_max_min_sinr(channel, pairing, support, p_budget, power, &cfg, settings) {
            Err(PrecodingError::BracketError { theta_ub }) => {
                cfg.theta_lb = theta_ub;
                cfg.theta_ub = 2.0 * theta_ub;
            }
            other => return other,
        }
    }
    Err(PrecodingError::BracketError { theta_ub: cfg.theta_ub })
}

/// Max-min SINR with the interference-free bracket and default settings.
pub fn max_min_sinr(
    channel: &ChannelRealization,
    pairing: &PairingSolution,
    support: SupportCase,
    p_budget: f64,
    power: PowerConstraint,
    epsilon: f64,
) -> Result<BisectionOutcome, PrecodingError> {
    let cfg = BisectionConfig::interference_free(channel, pairing, support, p_budget, epsilon);
    bisection_with_doubling(channel, pairing, support, p_budget, power, &cfg, &FeasibilitySettings::default())
}

#[derive(Debug, Clone, PartialEq)]
pub struct PowerCoordination {
    pub powers: Vec<f64>,
    pub min_sinr: f64,
    pub steps: usize,
}

fn sinr_from_gains(g: &DMatrix<f64>, p: &[f64], k: usize) -> f64 {
    let interference: f64 = (0..p.len()).filter(|&i| i != k).map(|i| g[(k, i)] * p[i]).sum();
    p[k] * g[(k, k)] / (1.0 + interference)
}

fn min_sinr_from_gains(g: &DMatrix<f64>, p: &[f64]) -> f64 {
    (0..p.len()).map(|k| sinr_from_gains(g, p, k)).fold(f64::INFINITY, f64::min)
}

/// Minimal powers reaching SINR `theta` for every UE, if they fit the caps.
///
/// Iterates the standard interference function `p <- theta (1 + F p) / G_kk`
/// from zero. The sequence increases monotonically to the minimal solution,
/// so any cap overshoot along the way proves infeasibility.
fn minimal_powers(g: &DMatrix<f64>, pairing: &PairingSolution, cap: f64, theta: f64) -> Option<Vec<f64>> {
    let k_n = g.nrows();
    let over_cap = |p: &[f64]| {
        pairing.active_set.iter().any(|&m| {
            let s: f64 = pairing.served[m].iter().map(|&k| p[k]).sum();
            s > cap * (1.0 + 1e-12)
        })
    };
    let mut p = vec![0.0; k_n];
    for _ in 0..20_000 {
        let next: Vec<f64> = (0..k_n)
            .map(|k| {
                let interference: f64 = (0..k_n).filter(|&i| i != k).map(|i| g[(k, i)] * p[i]).sum();
                theta * (1.0 + interference) / g[(k, k)]
            })
            .collect();
        if over_cap(&next) {
            return None;
        }
        let change = next.iter().zip(&p).map(|(a, b)| (a - b).abs() / a.max(f64::MIN_POSITIVE)).fold(0.0, f64::max);
        p = next;
        if change < 1e-13 {
            return Some(p);
        }
    }
    // Slow convergence: settle it with the linear system (I - theta F) p = theta / G_kk.
    let mut a = DMatrix::<f64>::identity(k_n, k_n);
    let mut b = nalgebra::DVector::<f64>::zeros(k_n);
    for k in 0..k_n {
        for i in 0..k_n {
            if i != k {
                a[(k, i)] = -theta * g[(k, i)] / g[(k, k)];
            }
        }
        b[k] = theta / g[(k, k)];
    }
    let sol = a.lu().solve(&b)?;
    let p: Vec<f64> = sol.iter().copied().collect();
    (p.iter().all(|&v| v > 0.0) && !over_cap(&p)).then_some(p)
}

/// Spend leftover cap: first a common up-scaling (raises every SINR), then
/// per AN the largest boost of its UEs that keeps the min-SINR in place.
fn fill_caps(g: &DMatrix<f64>, pairing: &PairingSolution, cap: f64, p: &mut [f64]) {
    let used = |p: &[f64], m: usize| pairing.served[m].iter().map(|&k| p[k]).sum::<f64>();
    let scale = pairing
        .active_set
        .iter()
        .map(|&m| cap / used(p, m))
        .filter(|f| f.is_finite())
        .fold(f64::INFINITY, f64::min);
    if scale.is_finite() && scale > 1.0 {
        p.iter_mut().for_each(|v| *v *= scale);
    }
    let floor = min_sinr_from_gains(g, p);
    for &m in &pairing.active_set {
        let room = cap / used(p, m);
        if !(room > 1.0 + 1e-12) || !room.is_finite() {
            continue;
        }
        let boosted = |f: f64| {
            let mut q = p.to_vec();
            pairing.served[m].iter().for_each(|&k| q[k] *= f);
            q
        };
        let ok = |f: f64| min_sinr_from_gains(g, &boosted(f)) >= floor;
        let f = if ok(room) {
            room
        } else {
            let (mut lo, mut hi) = (1.0, room);
            for _ in 0..60 {
                let mid = 0.5 * (lo + hi);
                if ok(mid) { lo = mid } else { hi = mid }
            }
            lo
        };
        pairing.served[m].iter().for_each(|&k| p[k] *= f);
    }
}

/// Max-min SINR power allocation over fixed unit-norm beams, with per-AN
/// sum-power caps `p_budget / |A|`. `eff_gains[(k, i)] = |h_k' d_i|^2`.
pub fn power_coordination(
    eff_gains: &DMatrix<f64>,
    pairing: &PairingSolution,
    p_budget: f64,
    epsilon: f64,
) -> Result<PowerCoordination, PrecodingError> {
    let k_n = eff_gains.nrows();
    if eff_gains.ncols() != k_n || pairing.serving.len() != k_n {
        return Err(PrecodingError::InvalidGains("dimension mismatch".into()));
    }
    if let Some(k) = (0..k_n).find(|&k| !(eff_gains[(k, k)] > 0.0)) {
        return Err(PrecodingError::InvalidGains(format!("direct gain of UE {k} is not positive")));
    }
    if eff_gains.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(PrecodingError::InvalidGains("gains must be finite and nonnegative".into()));
    }
    let cap = per_an_cap(pairing, p_budget);
    let equal = equal_split_powers(pairing, p_budget);
    let mut lb = min_sinr_from_gains(eff_gains, &equal);
    let mut best = equal.clone();
    let mut ub = (0..k_n).map(|k| cap * eff_gains[(k, k)]).fold(f64::INFINITY, f64::min);
    let mut steps = 0;
    while ub - lb > bisection_width(epsilon, ub) && steps < 200 {
        steps += 1;
        let theta = 0.5 * (lb + ub);
        match minimal_powers(eff_gains, pairing, cap, theta) {
            Some(p) => {
                lb = theta;
                best = p;
            }
            None => ub = theta,
        }
    }
    fill_caps(eff_gains, pairing, cap, &mut best);
    let mut min_sinr = min_sinr_from_gains(eff_gains, &best);
    let equal_sinr = min_sinr_from_gains(eff_gains, &equal);
    if min_sinr < equal_sinr {
        best = equal;
        min_sinr = equal_sinr;
    }
    Ok(PowerCoordination { powers: best, min_sinr, steps })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Complex;
    use crate::channel::{draw_fading, effective_gains, sinr};
    use crate::pairing::{build_costs, solve_pairing, PairingProblem};
    use crate::topology::{generate_topology, Scenario};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c64(re: f64, im: f64) -> Complex<f64> {
        Complex::new(re, im)
    }

    fn snapshot(k: usize, m: usize, l: usize, b_max: usize, seed: u64) -> (ChannelRealization, PairingSolution) {
        let s = Scenario::new(k, m).with_antennas(l).with_snr_db(10.0);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let topo = generate_topology(&s, &mut rng);
        let ch = draw_fading(&topo, &s, &mut rng);
        let p = PairingProblem::new(build_costs(&topo), b_max, l).unwrap();
        (ch, solve_pairing(&p).unwrap())
    }

    /// One AN serving every UE: pairing built by hand.
    fn single_an_pairing(k: usize) -> PairingSolution {
        PairingSolution {
            serving: vec![0; k],
            active_set: vec![0],
            served: vec![(0..k).collect()],
            objective: 0.0,
            num_ans: 1,
        }
    }

    fn channel_from(l: usize, m: usize, cols: &[Vec<Complex<f64>>]) -> ChannelRealization {
        let k = cols.len();
        ChannelRealization { h: DMatrix::from_fn(m * l, k, |r, c| cols[c][r]), l, m, k }
    }

    #[test]
    fn zf_single_user_is_matched_filter() {
        let h = vec![c64(1.0, 2.0), c64(-0.5, 0.3), c64(0.0, 1.0)];
        let ch = channel_from(3, 1, &[h.clone()]);
        let d = zf_directions(&ch, &single_an_pairing(1)).unwrap();
        let nrm = h.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        for j in 0..3 {
            assert!((d.w[(j, 0)] - h[j] / nrm).norm() < 1e-12);
        }
    }

    #[test]
    fn zf_orthogonal_channels_give_matched_filters() {
        let h1 = vec![c64(2.0, 0.0), c64(0.0, 0.0)];
        let h2 = vec![c64(0.0, 0.0), c64(0.0, -3.0)];
        let ch = channel_from(2, 1, &[h1, h2]);
        let d = zf_directions(&ch, &single_an_pairing(2)).unwrap();
        assert!((d.w[(0, 0)] - c64(1.0, 0.0)).norm() < 1e-12 && d.w[(1, 0)].norm() < 1e-12);
        assert!((d.w[(1, 1)] - c64(0.0, -1.0)).norm() < 1e-12 && d.w[(0, 1)].norm() < 1e-12);
    }

    #[test]
    fn zf_nulls_intra_an_interference() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let cols: Vec<Vec<_>> =
                (0..3).map(|_| (0..4).map(|_| c64(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)).collect()).collect();
            let ch = channel_from(4, 1, &cols);
            let d = zf_directions(&ch, &single_an_pairing(3)).unwrap();
            for k in 0..3 {
                assert!((d.w.column(k).norm() - 1.0).abs() < 1e-12);
                for i in (0..3).filter(|&i| i != k) {
                    assert!(ch.h.column(k).dotc(&d.w.column(i)).norm() <= 1e-9);
                }
            }
        }
    }

    #[test]
    fn zf_reports_rank_deficiency() {
        let h = vec![c64(1.0, 0.0), c64(1.0, 0.0)];
        let ch = channel_from(2, 1, &[h.clone(), h]);
        assert!(matches!(
            zf_directions(&ch, &single_an_pairing(2)),
            Err(PrecodingError::RankDeficientLocalChannel { an: 0, .. })
        ));
    }

    #[test]
    fn zf_local_equal_split() {
        let (ch, pr) = snapshot(8, 8, 4, 8, 2);
        let w = zf_local(&ch, &pr, 1.0).unwrap();
        let cap = per_an_cap(&pr, 1.0);
        for (m, pw) in w.an_powers(4).iter().enumerate() {
            let want = if pr.is_active(m) { cap } else { 0.0 };
            assert!((pw - want).abs() < 1e-12);
        }
    }

    #[test]
    fn single_ue_bisection_hits_closed_form() {
        for seed in 0..5 {
            let (ch, pr) = snapshot(1, 1, 4, 1, seed);
            let want = ch.column_norm_sq(0);
            let out = max_min_sinr(&ch, &pr, SupportCase::SingleServing, 1.0, PowerConstraint::SumOfSquares, 1e-3).unwrap();
            let rel = (out.theta_star - want).abs() / want;
            assert!(rel <= 1e-3 + 1e-3, "{} vs {want}", out.theta_star);
            assert!(sinr(&ch, &out.precoder, 0) >= out.theta_star * (1.0 - 1e-4));
        }
    }

    #[test]
    fn explicit_bracket_too_small_is_reported() {
        let (ch, pr) = snapshot(1, 1, 2, 1, 1);
        let best = ch.column_norm_sq(0);
        let cfg = BisectionConfig::new(0.0, 0.25 * best, 1e-3);
        let settings = FeasibilitySettings::default();
        let sup = SupportCase::SingleServing;
        let r = bisection_max_min_sinr(&ch, &pr, sup, 1.0, PowerConstraint::SumOfSquares, &cfg, &settings);
        assert!(matches!(r, Err(PrecodingError::BracketError { .. })));
        let r = bisection_with_doubling(&ch, &pr, sup, 1.0, PowerConstraint::SumOfSquares, &cfg, &settings).unwrap();
        assert!((r.theta_star - best).abs() <= 1e-3 + 1e-3 * best);
    }

    #[test]
    fn tighter_epsilon_moves_at_most_epsilon() {
        let (ch, pr) = snapshot(4, 4, 2, 4, 9);
        let sup = SupportCase::SingleServing;
        let pc = PowerConstraint::SumOfSquares;
        let a = max_min_sinr(&ch, &pr, sup, 1.0, pc, 1e-2).unwrap();
        let b = max_min_sinr(&ch, &pr, sup, 1.0, pc, 1e-3).unwrap();
        assert!((a.theta_star - b.theta_star).abs() <= 1e-2 + 1e-6, "{} {}", a.theta_star, b.theta_star);
        assert!(a.theta_ub - a.theta_lb <= 1e-2);
    }

    #[test]
    fn power_coordination_symmetric_pair() {
        let g = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 1.0]);
        let pr = PairingSolution {
            serving: vec![0, 1],
            active_set: vec![0, 1],
            served: vec![vec![0], vec![1]],
            objective: 0.0,
            num_ans: 2,
        };
        // p_budget 2 over two ANs gives cap 1 each.
        let out = power_coordination(&g, &pr, 2.0, 1e-6).unwrap();
        assert!((out.powers[0] - 1.0).abs() < 1e-6 && (out.powers[1] - 1.0).abs() < 1e-6, "{:?}", out.powers);
        assert!((out.min_sinr - 2.0 / 3.0).abs() < 1e-6);
        // Brute-force grid over (p1, p2).
        let mut best = 0.0f64;
        for i in 0..=1000 {
            for j in 0..=1000 {
                let p = [i as f64 / 1000.0, j as f64 / 1000.0];
                best = best.max(min_sinr_from_gains(&g, &p));
            }
        }
        assert!((best - out.min_sinr).abs() < 1e-9);
    }

    #[test]
    fn power_coordination_trivial_cases() {
        let one = DMatrix::from_element(1, 1, 3.0);
        let pr = single_an_pairing(1);
        let out = power_coordination(&one, &pr, 1.0, 1e-6).unwrap();
        assert!((out.powers[0] - 1.0).abs() < 1e-12);
        // Decoupled links: every UE at its share of its AN's cap.
        let g = DMatrix::from_row_slice(3, 3, &[2.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 4.0]);
        let pr = PairingSolution {
            serving: vec![0, 0, 1],
            active_set: vec![0, 1],
            served: vec![vec![0, 1], vec![2]],
            objective: 0.0,
            num_ans: 2,
        };
        let out = power_coordination(&g, &pr, 2.0, 1e-7).unwrap();
        assert!((out.powers[0] + out.powers[1] - 1.0).abs() < 1e-9);
        assert!((out.powers[2] - 1.0).abs() < 1e-9);
        // Max-min within AN 0: 2 p0 = p1, p0 + p1 = 1.
        assert!((out.powers[0] - 1.0 / 3.0).abs() < 1e-6);
    }

    #[test]
    fn power_coordination_beats_equal_split() {
        for seed in 0..10 {
            let (ch, pr) = snapshot(8, 8, 4, 8, seed);
            let dirs = zf_directions(&ch, &pr).unwrap();
            let g = effective_gains(&ch, &dirs).unwrap();
            let out = power_coordination(&g, &pr, 1.0, 1e-4).unwrap();
            let eq = min_sinr_from_gains(&g, &equal_split_powers(&pr, 1.0));
            assert!(out.min_sinr >= eq);
            let w = apply_powers(&dirs, &out.powers);
            let direct = min_sinr(&ch, &w);
            assert!((direct - out.min_sinr).abs() <= 1e-9 * direct.max(1.0));
            let cap = per_an_cap(&pr, 1.0);
            for pw in w.an_powers(4) {
                assert!(pw <= cap * (1.0 + 1e-9));
            }
        }
    }
}
