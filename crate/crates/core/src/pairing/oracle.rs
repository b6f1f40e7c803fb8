//! Exhaustive-search reference for the pairing problem. Independent of the
//! flow and branch-and-bound code; intended for tests and verification runs.

use super::{PairingError, PairingProblem, PairingSolution};

pub const DEFAULT_ENUMERATION_CAP: u64 = 10_000_000;

/// Enumerate all `M^K` serving vectors, keep the feasible ones, and return the
/// minimum under [`PairingSolution::tie_order`].
pub fn enumerate_pairing_oracle(
    problem: &PairingProblem,
    cap: u64,
) -> Result<PairingSolution, PairingError> {
    let (k, m) = (problem.num_ues(), problem.num_ans());
    let total = (m as u64).checked_pow(k as u32).filter(|&t| t <= cap);
    if total.is_none() {
        return Err(PairingError::InstanceTooLarge { k, m, cap });
    }
    let mut best: Option<PairingSolution> = None;
    let mut serving = vec![0usize; k];
    let mut load = vec![0usize; m];
    loop {
        load.fill(0);
        for &s in &serving {
            load[s] += 1;
        }
        let active = load.iter().filter(|&&l| l > 0).count();
        if active <= problem.b_max && load.iter().all(|&l| l <= problem.u_max) {
            let cand = PairingSolution::from_serving(problem, serving.clone());
            if best.as_ref().is_none_or(|b| cand.tie_order(b).is_lt()) {
                best = Some(cand);
            }
        }
        // Odometer increment, UE 0 fastest.
        let mut pos = 0;
        loop {
            if pos == k {
                return best.ok_or(PairingError::Infeasible { k, m, b_max: problem.b_max, u_max: problem.u_max });
            }
            serving[pos] += 1;
            if serving[pos] < m {
                break;
            }
            serving[pos] = 0;
            pos += 1;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    #[test]
    fn small_cases() {
        let p = PairingProblem::new(DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 1.0]), 2, 1).unwrap();
        let s = enumerate_pairing_oracle(&p, DEFAULT_ENUMERATION_CAP).unwrap();
        assert_eq!(s.objective, 2.0);
        assert_eq!(s.serving, vec![0, 1]);
        let tight = PairingProblem { b_max: 1, ..p.clone() };
        assert!(matches!(
            enumerate_pairing_oracle(&tight, DEFAULT_ENUMERATION_CAP),
            Err(PairingError::Infeasible { .. })
        ));
        assert!(matches!(enumerate_pairing_oracle(&p, 3), Err(PairingError::InstanceTooLarge { .. })));
    }
}
