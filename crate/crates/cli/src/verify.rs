//! Self-check suites run by `densecoord verify`.

use std::fmt::Write as _;

use densecoord::channel::{draw_fading, SupportCase};
use densecoord::conic::FeasibilitySettings;
use densecoord::pairing::{build_costs, enumerate_pairing_oracle, solve_pairing, PairingProblem, DEFAULT_ENUMERATION_CAP};
use densecoord::precoding::{bisection_with_doubling, BisectionConfig};
use densecoord::sim::snapshot_rng;
use densecoord::strategies::{rate_tolerance, run_strategies};
use densecoord::topology::{generate_topology, Scenario, Strategy, P_BUDGET};

/// Deliberate defects for exercising the failure path.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fault {
    /// Accept cone-solver witnesses that miss the SINR target by half.
    SolverTolerance,
}

impl std::str::FromStr for Fault {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "solver-tolerance" => Ok(Fault::SolverTolerance),
            _ => Err(format!("unknown fault '{s}'")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleRow {
    pub name: &'static str,
    pub cases: usize,
    pub failures: usize,
    pub detail: String,
}

impl OracleRow {
    pub fn passed(&self) -> bool {
        self.failures == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyReport {
    pub rows: Vec<OracleRow>,
}

impl VerifyReport {
    pub fn all_passed(&self) -> bool {
        self.rows.iter().all(OracleRow::passed)
    }

    pub fn render(&self) -> String {
        let mut out = format!("{:<28} {:>6} {:>6}  {}\n", "oracle", "cases", "result", "detail");
        for r in &self.rows {
            let status = if r.passed() { "PASS" } else { "FAIL" };
            let _ = writeln!(out, "{:<28} {:>6} {:>6}  {}", r.name, r.cases, status, r.detail);
        }
        out
    }
}

fn pairing_oracle() -> OracleRow {
    let mut cases = 0;
    let mut failures = 0;
    let mut worst = String::new();
    for seed in 0..60u64 {
        let k = 2 + (seed % 4) as usize;
        let m = 2 + ((seed / 4) % 4) as usize;
        let l = 1 + (seed % 3) as usize;
        let s = Scenario::new(k, m).with_antennas(l);
        let topo = generate_topology(&s, &mut snapshot_rng(seed, 0));
        let costs = build_costs(&topo);
        for b_max in 1..=m {
            let Ok(problem) = PairingProblem::new(costs.clone(), b_max, l) else { continue };
            let exact = solve_pairing(&problem);
            let oracle = enumerate_pairing_oracle(&problem, DEFAULT_ENUMERATION_CAP);
            cases += 1;
            let agree = match (&exact, &oracle) {
                (Ok(a), Ok(b)) => a.objective == b.objective,
                (Err(_), Err(_)) => true,
                _ => false,
            };
            if !agree {
                failures += 1;
                worst = format!("seed {seed} b_max {b_max}: {exact:?} vs {oracle:?}");
            }
        }
    }
    let detail = if failures == 0 { "objectives identical".into() } else { worst };
    OracleRow { name: "pairing vs enumeration", cases, failures, detail }
}

fn single_ue_oracle(settings: &FeasibilitySettings) -> OracleRow {
    let mut failures = 0;
    let mut worst: f64 = 0.0;
    let eps = 1e-3;
    let n = 20;
    for seed in 0..n as u64 {
        let s = Scenario::new(1, 3);
        let mut rng = snapshot_rng(1000 + seed, 0);
        let topo = generate_topology(&s, &mut rng);
        let h = draw_fading(&topo, &s, &mut rng);
        let pairing = match solve_pairing(&PairingProblem::new(build_costs(&topo), 1, 1).expect("valid")) {
            Ok(p) => p,
            Err(_) => {
                failures += 1;
                continue;
            }
        };
        let target = P_BUDGET * h.block(pairing.serving[0], 0).norm_squared();
        let cfg = BisectionConfig::interference_free(&h, &pairing, SupportCase::SingleServing, P_BUDGET, eps);
        let out = bisection_with_doubling(
            &h,
            &pairing,
            SupportCase::SingleServing,
            P_BUDGET,
            s.power_constraint,
            &cfg,
            settings,
        );
        match out {
            Ok(o) => {
                let rel = (o.theta_star - target).abs() / target;
                worst = worst.max(rel);
                if rel > 1e-3 + eps {
                    failures += 1;
                }
            }
            Err(_) => failures += 1,
        }
    }
    OracleRow {
        name: "bisection vs closed form",
        cases: n,
        failures,
        detail: format!("max relative error {worst:.2e}"),
    }
}

fn dominance_oracle(settings: &FeasibilitySettings) -> OracleRow {
    let s = Scenario::new(8, 8);
    let tol = 2.0 * rate_tolerance(s.epsilon);
    let n = 20;
    let strategies = [Strategy::Local, Strategy::LocalPowCoord, Strategy::CoordPr];
    let mut failures = 0;
    let mut first = String::from("Local <= LocalPowCoord <= CoordPr on every snapshot");
    for idx in 0..n as u64 {
        let mut rng = snapshot_rng(0, idx);
        let topo = generate_topology(&s, &mut rng);
        let h = draw_fading(&topo, &s, &mut rng);
        let ok = match run_strategies(&h, &topo, &s, &strategies, settings) {
            Ok(out) => match (&out[0], &out[1], &out[2]) {
                (Ok(local), Ok(lpc), Ok(coord)) => {
                    let ok = lpc.worse_rate >= local.worse_rate - tol && coord.worse_rate >= lpc.worse_rate - tol;
                    if !ok && failures == 0 {
                        first = format!(
                            "snapshot {idx}: Local {:.4}, LocalPowCoord {:.4}, CoordPr {:.4}",
                            local.worse_rate, lpc.worse_rate, coord.worse_rate
                        );
                    }
                    ok
                }
                _ => false,
            },
            Err(_) => false,
        };
        if !ok {
            failures += 1;
        }
    }
    OracleRow { name: "dominance ordering", cases: n, failures, detail: first }
}

pub fn run(fault: Option<Fault>) -> VerifyReport {
    let mut settings = FeasibilitySettings::default();
    if fault == Some(Fault::SolverTolerance) {
        settings.tol_sinr = 0.5;
    }
    VerifyReport { rows: vec![pairing_oracle(), single_ue_oracle(&settings), dominance_oracle(&settings)] }
}
