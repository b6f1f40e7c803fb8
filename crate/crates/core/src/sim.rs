//! Monte-Carlo campaigns: grids of `(K, M, SNR_ref)` cells, independent
//! snapshots per cell, and per-strategy aggregation.
//!
//! Snapshot `i` of every cell draws from a ChaCha stream keyed by
//! `(master_seed, i)`, so all SNR levels and strategies of a cell see the same
//! geometry and fading. Work items are evaluated in any order (in parallel
//! with the `parallel` feature) and collected into an index-ordered array
//! before any summation, which keeps results bitwise independent of the
//! thread count.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::channel::draw_fading;
use crate::conic::FeasibilitySettings;
use crate::strategies::{run_strategies, run_strategy_with, Diagnostics, StrategyError, StrategyOutcome};
use crate::topology::{generate_topology, Scenario, ScenarioError, Strategy};
use crate::VERSION;

/// One `(K, M)` pair of the sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridPoint {
    pub k: usize,
    pub m: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Campaign {
    /// Deployment and solver parameters shared by all cells. Its `k`, `m`,
    /// `snr_ref_db`, `strategy`, `n_snapshots` and `seed` are overridden
    /// per cell by the fields below.
    pub base: Scenario,
    pub grid: Vec<GridPoint>,
    pub snr_ref_db: Vec<f64>,
    pub strategies: Vec<Strategy>,
    pub n_snapshots: usize,
    pub master_seed: u64,
    /// Keep every snapshot's rates in the result.
    pub keep_samples: bool,
}

/// One evaluated point of the sweep, before splitting by strategy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Cell {
    pub k: usize,
    pub m: usize,
    pub snr_ref_db: f64,
}

impl Campaign {
    /// Single-cell campaign over all four strategies at the base scenario.
    pub fn new(base: Scenario) -> Self {
        Self {
            grid: vec![GridPoint { k: base.k, m: base.m }],
            snr_ref_db: vec![base.snr_ref_db],
            strategies: Strategy::ALL.to_vec(),
            n_snapshots: base.n_snapshots,
            master_seed: base.seed,
            keep_samples: false,
            base,
        }
    }

    pub fn cells(&self) -> Vec<Cell> {
        let mut cells = Vec::with_capacity(self.grid.len() * self.snr_ref_db.len());
        for p in &self.grid {
            for &snr in &self.snr_ref_db {
                cells.push(Cell { k: p.k, m: p.m, snr_ref_db: snr });
            }
        }
        cells
    }

    pub fn scenario(&self, cell: &Cell, strategy: Strategy) -> Scenario {
        Scenario {
            k: cell.k,
            m: cell.m,
            snr_ref_db: cell.snr_ref_db,
            strategy,
            n_snapshots: self.n_snapshots,
            seed: self.master_seed,
            ..self.base.clone()
        }
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        for (name, empty) in [
            ("grid", self.grid.is_empty()),
            ("snr_ref_db", self.snr_ref_db.is_empty()),
            ("strategies", self.strategies.is_empty()),
        ] {
            if empty {
                return Err(ScenarioError::EmptyAxis(name));
            }
        }
        for cell in self.cells() {
            self.scenario(&cell, Strategy::Local).validate()?;
        }
        Ok(())
    }
}

/// Random stream of snapshot `index`.
pub fn snapshot_rng(master_seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(index);
    rng
}

/// Draw snapshot `index` of `scenario` (seeded by `scenario.seed`) and run
/// `scenario.strategy` on it.
pub fn run_snapshot(scenario: &Scenario, index: u64) -> Result<StrategyOutcome, StrategyError> {
    let mut rng = snapshot_rng(scenario.seed, index);
    let topology = generate_topology(scenario, &mut rng);
    let h = draw_fading(&topology, scenario, &mut rng);
    run_strategy_with(&h, &topology, scenario, &FeasibilitySettings::default())
}

/// Per-snapshot result of one strategy.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum SnapshotRecord {
    Ok { worse_rate: f64, sum_rate: f64 },
    Failed { error: String },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Sample {
    pub snapshot: u64,
    #[serde(flatten)]
    pub record: SnapshotRecord,
}

/// Aggregate of one `(cell, strategy)`. Means and deviations are over
/// successful snapshots only; `NaN` when there are none.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellStats {
    pub k: usize,
    pub m: usize,
    pub l: usize,
    pub snr_ref_db: f64,
    pub densification_ratio: f64,
    pub strategy: Strategy,
    pub n_ok: usize,
    pub n_fail: usize,
    pub mean_worse_rate: f64,
    pub std_worse_rate: f64,
    pub se_worse_rate: f64,
    pub mean_sum_rate: f64,
    pub std_sum_rate: f64,
    pub se_sum_rate: f64,
    /// `(snapshot, message)` of every failure.
    pub failures: Vec<(u64, String)>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub samples: Option<Vec<Sample>>,
}

/// Solver effort summed over a campaign, per strategy.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct EffortTotals {
    pub strategy: Option<Strategy>,
    pub runs: usize,
    pub pairing_seconds: f64,
    pub pairing_nodes: usize,
    pub precoding_seconds: f64,
    pub bisection_steps: usize,
    pub cone_solves: usize,
    pub ipm_iterations: usize,
}

impl EffortTotals {
    fn add(&mut self, d: &Diagnostics) {
        self.runs += 1;
        self.pairing_seconds += d.pairing_seconds;
        self.pairing_nodes += d.pairing_nodes;
        self.precoding_seconds += d.precoding_seconds;
        self.bisection_steps += d.bisection_steps;
        self.cone_solves += d.cone_solves;
        self.ipm_iterations += d.ipm_iterations;
    }
}

/// Wall-clock and solver-call figures. Not part of the reproducible output.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct CampaignDiagnostics {
    pub version: String,
    pub wall_seconds: f64,
    pub threads: usize,
    pub work_items: usize,
    pub per_strategy: Vec<EffortTotals>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CampaignResult {
    pub campaign: Campaign,
    pub cells: Vec<CellStats>,
    pub diagnostics: CampaignDiagnostics,
}

#[derive(Serialize)]
struct CsvRow<'a> {
    k: usize,
    m: usize,
    l: usize,
    snr_ref_db: f64,
    strategy: &'a str,
    n_ok: usize,
    n_fail: usize,
    mean_worse_rate: f64,
    se_worse_rate: f64,
    mean_sum_rate: f64,
    se_sum_rate: f64,
}

#[derive(Serialize)]
struct ResultDocument<'a> {
    version: &'a str,
    config: &'a Campaign,
    records: &'a [CellStats],
}

impl CampaignResult {
    pub fn total_runs(&self) -> usize {
        self.cells.iter().map(|c| c.n_ok + c.n_fail).sum()
    }

    pub fn total_failures(&self) -> usize {
        self.cells.iter().map(|c| c.n_fail).sum()
    }

    pub fn failure_rate(&self) -> f64 {
        match self.total_runs() {
            0 => 0.0,
            n => self.total_failures() as f64 / n as f64,
        }
    }

    pub fn record(&self, k: usize, m: usize, snr_ref_db: f64, strategy: Strategy) -> Option<&CellStats> {
        self.cells.iter().find(|c| c.k == k && c.m == m && c.snr_ref_db == snr_ref_db && c.strategy == strategy)
    }

    /// One row per cell and strategy, preceded by `#` lines carrying the code
    /// version and the campaign config.
    pub fn to_csv(&self) -> String {
        let config = serde_json::to_string(&self.campaign).expect("campaign serializes");
        let mut out = format!("# densecoord {VERSION}\n# config: {config}\n");
        let mut w = csv::Writer::from_writer(Vec::new());
        for c in &self.cells {
            w.serialize(CsvRow {
                k: c.k,
                m: c.m,
                l: c.l,
                snr_ref_db: c.snr_ref_db,
                strategy: c.strategy.name(),
                n_ok: c.n_ok,
                n_fail: c.n_fail,
                mean_worse_rate: c.mean_worse_rate,
                se_worse_rate: c.se_worse_rate,
                mean_sum_rate: c.mean_sum_rate,
                se_sum_rate: c.se_sum_rate,
            })
            .expect("csv row serializes");
        }
        let body = w.into_inner().expect("in-memory writer");
        out.push_str(std::str::from_utf8(&body).expect("csv is utf-8"));
        out
    }

    /// Version, full config and all records. Deterministic for a given config.
    pub fn to_json(&self) -> String {
        let doc = ResultDocument { version: VERSION, config: &self.campaign, records: &self.cells };
        serde_json::to_string_pretty(&doc).expect("result serializes")
    }

    pub fn diagnostics_json(&self) -> String {
        serde_json::to_string_pretty(&self.diagnostics).expect("diagnostics serialize")
    }
}

/// How to execute a campaign.
#[derive(Clone, Copy)]
pub struct RunOptions<'a> {
    /// Evaluate work items on a rayon pool (only with the `parallel` feature).
    pub parallel: bool,
    /// Pool size; `None` uses rayon's global pool.
    pub threads: Option<usize>,
    pub settings: FeasibilitySettings,
    /// Called with `(done, total)` after each work item.
    pub progress: Option<&'a (dyn Fn(usize, usize) + Sync)>,
}

impl Default for RunOptions<'_> {
    fn default() -> Self {
        Self { parallel: cfg!(feature = "parallel"), threads: None, settings: FeasibilitySettings::default(), progress: None }
    }
}

type ItemResult = Vec<(SnapshotRecord, Option<Diagnostics>)>;

fn run_item(campaign: &Campaign, cell: &Cell, index: u64, settings: &FeasibilitySettings) -> ItemResult {
    let scenario = campaign.scenario(cell, campaign.strategies[0]);
    let mut rng = snapshot_rng(campaign.master_seed, index);
    let topology = generate_topology(&scenario, &mut rng);
    let h = draw_fading(&topology, &scenario, &mut rng);
    match run_strategies(&h, &topology, &scenario, &campaign.strategies, settings) {
        Ok(outcomes) => outcomes
            .into_iter()
            .map(|o| match o {
                Ok(o) => (SnapshotRecord::Ok { worse_rate: o.worse_rate, sum_rate: o.sum_rate }, Some(o.diagnostics)),
                Err(e) => (SnapshotRecord::Failed { error: e.to_string() }, None),
            })
            .collect(),
        Err(e) => campaign.strategies.iter().map(|_| (SnapshotRecord::Failed { error: e.to_string() }, None)).collect(),
    }
}

#[cfg(feature = "parallel")]
fn evaluate_parallel<F>(n: usize, threads: Option<usize>, f: F) -> (Vec<ItemResult>, usize)
where
    F: Fn(usize) -> ItemResult + Sync + Send,
{
    use rayon::prelude::*;
    let run = || (0..n).into_par_iter().map(&f).collect::<Vec<_>>();
    match threads {
        Some(t) => match rayon::ThreadPoolBuilder::new().num_threads(t).build() {
            Ok(pool) => (pool.install(run), t),
            Err(_) => (run(), rayon::current_num_threads()),
        },
        None => (run(), rayon::current_num_threads()),
    }
}

#[cfg(not(feature = "parallel"))]
fn evaluate_parallel<F>(n: usize, _threads: Option<usize>, f: F) -> (Vec<ItemResult>, usize)
where
    F: Fn(usize) -> ItemResult + Sync + Send,
{
    ((0..n).map(f).collect(), 1)
}

/// Mean, sample standard deviation and standard error.
pub fn mean_std_se(values: &[f64]) -> (f64, f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    let std = var.sqrt();
    (mean, std, std / (n as f64).sqrt())
}

pub fn run_campaign(campaign: &Campaign) -> CampaignResult {
    run_campaign_with(campaign, &RunOptions::default())
}

pub fn run_campaign_serial(campaign: &Campaign) -> CampaignResult {
    run_campaign_with(campaign, &RunOptions { parallel: false, ..RunOptions::default() })
}

/// Evaluate every `(cell, snapshot)` item. Invalid cells and solver failures
/// show up as failed records; the run itself never aborts.
pub fn run_campaign_with(campaign: &Campaign, opts: &RunOptions) -> CampaignResult {
    let start = Instant::now();
    let cells = campaign.cells();
    let n_snap = campaign.n_snapshots;
    let total = cells.len() * n_snap;
    let done = AtomicUsize::new(0);
    let item = |i: usize| {
        let r = if campaign.strategies.is_empty() {
            Vec::new()
        } else {
            run_item(campaign, &cells[i / n_snap], (i % n_snap) as u64, &opts.settings)
        };
        let d = done.fetch_add(1, Ordering::Relaxed) + 1;
        if let Some(p) = opts.progress {
            p(d, total);
        }
        r
    };
    let (items, threads) = if opts.parallel {
        evaluate_parallel(total, opts.threads, item)
    } else {
        ((0..total).map(item).collect(), 1)
    };

    let mut stats = Vec::with_capacity(cells.len() * campaign.strategies.len());
    let mut effort: Vec<EffortTotals> = campaign
        .strategies
        .iter()
        .map(|&s| EffortTotals { strategy: Some(s), ..EffortTotals::default() })
        .collect();
    for (ci, cell) in cells.iter().enumerate() {
        for (si, &strategy) in campaign.strategies.iter().enumerate() {
            let mut worse = Vec::new();
            let mut sum = Vec::new();
            let mut failures = Vec::new();
            let mut samples = Vec::new();
            for snap in 0..n_snap {
                let (record, diag) = &items[ci * n_snap + snap][si];
                match record {
                    SnapshotRecord::Ok { worse_rate, sum_rate } => {
                        worse.push(*worse_rate);
                        sum.push(*sum_rate);
                    }
                    SnapshotRecord::Failed { error } => failures.push((snap as u64, error.clone())),
                }
                if let Some(d) = diag {
                    effort[si].add(d);
                }
                if campaign.keep_samples {
                    samples.push(Sample { snapshot: snap as u64, record: record.clone() });
                }
            }
            let (mw, sw, ew) = mean_std_se(&worse);
            let (ms, ss, es) = mean_std_se(&sum);
            stats.push(CellStats {
                k: cell.k,
                m: cell.m,
                l: campaign.base.l,
                snr_ref_db: cell.snr_ref_db,
                densification_ratio: cell.m as f64 / cell.k as f64,
                strategy,
                n_ok: worse.len(),
                n_fail: failures.len(),
                mean_worse_rate: mw,
                std_worse_rate: sw,
                se_worse_rate: ew,
                mean_sum_rate: ms,
                std_sum_rate: ss,
                se_sum_rate: es,
                failures,
                samples: campaign.keep_samples.then_some(samples),
            });
        }
    }
    CampaignResult {
        campaign: campaign.clone(),
        cells: stats,
        diagnostics: CampaignDiagnostics {
            version: VERSION.to_string(),
            wall_seconds: start.elapsed().as_secs_f64(),
            threads,
            work_items: total,
            per_strategy: effort,
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(strategies: Vec<Strategy>, n: usize) -> Campaign {
        let mut c = Campaign::new(Scenario::new(4, 4).with_seed(7));
        c.strategies = strategies;
        c.n_snapshots = n;
        c.keep_samples = true;
        c
    }

    #[test]
    fn cells_are_the_product_of_axes() {
        let mut c = tiny(Strategy::ALL.to_vec(), 1);
        c.grid = vec![GridPoint { k: 4, m: 4 }, GridPoint { k: 8, m: 8 }];
        c.snr_ref_db = vec![10.0, 20.0, 30.0];
        assert_eq!(c.cells().len(), 6);
        c.validate().unwrap();
    }

    #[test]
    fn snapshot_is_deterministic_and_streams_differ() {
        let s = Scenario::new(4, 4).with_strategy(Strategy::CoordPr).with_seed(3);
        let a = run_snapshot(&s, 0).unwrap();
        let b = run_snapshot(&s, 0).unwrap();
        assert_eq!(a.w, b.w);
        assert_eq!(a.worse_rate, b.worse_rate);
        let mut r0 = snapshot_rng(3, 0);
        let mut r1 = snapshot_rng(3, 1);
        let t0 = generate_topology(&s, &mut r0);
        let t1 = generate_topology(&s, &mut r1);
        assert_ne!(t0.ue_positions, t1.ue_positions);
    }

    #[test]
    fn single_snapshot_mean_is_the_sample() {
        let c = tiny(vec![Strategy::Local], 1);
        let r = run_campaign_serial(&c);
        let cell = &r.cells[0];
        let samples = cell.samples.as_ref().unwrap();
        match &samples[0].record {
            SnapshotRecord::Ok { worse_rate, sum_rate } => {
                assert_eq!(cell.mean_worse_rate, *worse_rate);
                assert_eq!(cell.mean_sum_rate, *sum_rate);
            }
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(cell.se_worse_rate, 0.0);
    }

    #[test]
    fn parallel_matches_serial_bitwise() {
        let c = tiny(vec![Strategy::Local, Strategy::LocalPowCoord, Strategy::CoordPr], 6);
        let a = run_campaign_serial(&c);
        let b = run_campaign_with(&c, &RunOptions { parallel: true, threads: Some(3), ..RunOptions::default() });
        assert_eq!(a.cells, b.cells);
        assert_eq!(a.to_csv(), b.to_csv());
        assert_eq!(a.to_json(), b.to_json());
    }

    #[test]
    fn invalid_cells_fail_without_aborting() {
        let mut c = tiny(vec![Strategy::Local], 2);
        c.grid.push(GridPoint { k: 9, m: 2 });
        let r = run_campaign_serial(&c);
        assert_eq!(r.cells.len(), 2);
        assert_eq!(r.cells[0].n_fail, 0);
        assert_eq!(r.cells[1].n_fail, 2);
        assert!(r.cells[1].mean_worse_rate.is_nan());
        assert!((r.failure_rate() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn csv_has_fixed_columns() {
        let c = tiny(Strategy::ALL.to_vec(), 1);
        let csv = run_campaign_serial(&c).to_csv();
        let lines: Vec<_> = csv.lines().filter(|l| !l.starts_with('#')).collect();
        assert_eq!(
            lines[0],
            "k,m,l,snr_ref_db,strategy,n_ok,n_fail,mean_worse_rate,se_worse_rate,mean_sum_rate,se_sum_rate"
        );
        assert_eq!(lines.len(), 5);
        assert!(csv.starts_with(&format!("# densecoord {VERSION}\n# config: {{")));
    }

    #[test]
    fn stats_of_known_values() {
        let (m, s, e) = mean_std_se(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((s - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert!((e - s / 2.0).abs() < 1e-15);
        assert!(mean_std_se(&[]).0.is_nan());
    }
}
