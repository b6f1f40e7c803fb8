//! Command implementations behind the `densecoord` binary.

pub mod config;
pub mod studies;
pub mod verify;

use std::io::IsTerminal;
use std::path::Path;

use densecoord::sim::{run_campaign_with, CampaignResult, RunOptions};
use serde_json::Value;

use crate::config::{ConfigError, ConfigFile};
use crate::studies::Study;
use crate::verify::Fault;

pub const EXIT_OK: i32 = 0;
/// I/O failure or failed self-check.
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_INFEASIBLE: i32 = 3;
pub const EXIT_FAILURE_RATE: i32 = 4;

/// Largest tolerated fraction of failed strategy runs.
pub const MAX_FAILURE_RATE: f64 = 0.01;

/// Flags shared by `run` and `study`.
#[derive(Debug, Clone, Default)]
pub struct RunFlags {
    pub overrides: Vec<String>,
    pub snapshots: Option<usize>,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub quiet: bool,
}

impl RunFlags {
    /// User overrides followed by the dedicated flags, which win.
    fn all_overrides(&self) -> Vec<String> {
        let mut all = self.overrides.clone();
        if let Some(n) = self.snapshots {
            all.push(format!("n_snapshots={n}"));
        }
        if let Some(s) = self.seed {
            all.push(format!("seed={s}"));
        }
        all
    }
}

fn config_exit(e: &ConfigError) -> i32 {
    eprintln!("error: {e}");
    match e {
        ConfigError::Infeasible(_) => EXIT_INFEASIBLE,
        _ => EXIT_CONFIG,
    }
}

fn write(path: &Path, contents: &str) -> Result<(), i32> {
    std::fs::write(path, contents).map_err(|e| {
        eprintln!("error: cannot write {}: {e}", path.display());
        EXIT_FAILURE
    })
}

/// Run the campaign described by `config` and write `<stem>.csv`,
/// `<stem>.json`, `<stem>.diagnostics.json` and the resolved config.
fn execute(config: ConfigFile, out: &Path, stem: &str, config_name: &str, flags: &RunFlags) -> i32 {
    let campaign = match config.validated_campaign() {
        Ok(c) => c,
        Err(e) => return config_exit(&e),
    };
    if let Err(e) = std::fs::create_dir_all(out) {
        eprintln!("error: cannot create {}: {e}", out.display());
        return EXIT_FAILURE;
    }
    let show = !flags.quiet && std::io::stderr().is_terminal();
    let progress = move |done: usize, total: usize| {
        if show {
            eprint!("\r{done}/{total} snapshots");
            if done == total {
                eprintln!();
            }
        }
    };
    let opts = RunOptions {
        parallel: flags.threads != Some(1),
        threads: flags.threads,
        progress: Some(&progress),
        ..RunOptions::default()
    };
    let result = run_campaign_with(&campaign, &opts);
    let resolved = config.resolved();
    let files = [
        (format!("{stem}.csv"), result.to_csv()),
        (format!("{stem}.json"), result.to_json()),
        (format!("{stem}.diagnostics.json"), result.diagnostics_json()),
        (config_name.to_string(), resolved.to_json()),
    ];
    for (name, contents) in &files {
        if let Err(code) = write(&out.join(name), contents) {
            return code;
        }
    }
    if !flags.quiet {
        print_summary(&result);
    }
    let rate = result.failure_rate();
    if rate > MAX_FAILURE_RATE {
        eprintln!(
            "error: {} of {} strategy runs failed ({:.2}% > {:.0}%)",
            result.total_failures(),
            result.total_runs(),
            100.0 * rate,
            100.0 * MAX_FAILURE_RATE
        );
        return EXIT_FAILURE_RATE;
    }
    EXIT_OK
}

fn print_summary(result: &CampaignResult) {
    println!("{:>4} {:>4} {:>8} {:<14} {:>6} {:>12} {:>12}", "K", "M", "SNR[dB]", "strategy", "n_ok", "worse-rate", "sum-rate");
    for c in &result.cells {
        println!(
            "{:>4} {:>4} {:>8} {:<14} {:>6} {:>12.4} {:>12.4}",
            c.k,
            c.m,
            c.snr_ref_db,
            c.strategy.name(),
            c.n_ok,
            c.mean_worse_rate,
            c.mean_sum_rate
        );
    }
}

/// `densecoord run`: campaign from a config file (or defaults).
pub fn cmd_run(config_path: Option<&Path>, out: &Path, flags: &RunFlags) -> i32 {
    match config::load(config_path, &flags.all_overrides()) {
        Ok(c) => execute(c, out, "results", "resolved-config.json", flags),
        Err(e) => config_exit(&e),
    }
}

/// `densecoord study`: one of the pre-baked grids.
pub fn cmd_study(study: Study, out: &Path, full: bool, flags: &RunFlags) -> i32 {
    let base = serde_json::to_value(study.config(full)).expect("config serializes");
    let base = match base {
        Value::Object(mut obj) => {
            obj.retain(|_, v| !v.is_null());
            Value::Object(obj)
        }
        other => other,
    };
    match config::from_value(base, &flags.all_overrides(), study.name()) {
        Ok(c) => {
            let name = study.name();
            execute(c, out, name, &format!("{name}.resolved-config.json"), flags)
        }
        Err(e) => config_exit(&e),
    }
}

/// `densecoord verify`: oracle suites, report printed and written to
/// `<out>/verify.txt`.
pub fn cmd_verify(out: &Path, fault: Option<Fault>) -> i32 {
    let report = verify::run(fault);
    let text = report.render();
    print!("{text}");
    if let Err(e) = std::fs::create_dir_all(out) {
        eprintln!("error: cannot create {}: {e}", out.display());
        return EXIT_FAILURE;
    }
    if let Err(code) = write(&out.join("verify.txt"), &text) {
        return code;
    }
    if report.all_passed() {
        EXIT_OK
    } else {
        eprintln!("error: oracle failures");
        EXIT_FAILURE
    }
}
