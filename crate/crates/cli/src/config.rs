//! JSON experiment configs: defaults, `KEY=VALUE` overrides, validation and
//! conversion to a [`Campaign`].

use std::path::{Path, PathBuf};

use densecoord::sim::{Campaign, GridPoint};
use densecoord::topology::{EdgeReference, PairingObjective, PowerConstraint, Scenario, ScenarioError, Strategy};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("config {path}: {message}")]
    Parse { path: String, message: String },
    #[error("bad override '{0}': expected KEY=VALUE")]
    Override(String),
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error("infeasible scenario: {0}")]
    Infeasible(ScenarioError),
}

/// Scenario plus campaign fields. Missing keys take the defaults below;
/// unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConfigFile {
    pub k: usize,
    pub m: usize,
    pub l: usize,
    pub snr_ref_db: f64,
    pub alpha_pl: f64,
    pub area_side: f64,
    /// Defaults to `l`.
    pub u_max: Option<usize>,
    pub edge_reference: EdgeReference,
    pub power_constraint: PowerConstraint,
    pub pairing_objective: PairingObjective,
    pub epsilon: f64,
    pub n_snapshots: usize,
    pub seed: u64,
    pub strategies: Vec<Strategy>,
    /// `(K, M)` pairs; defaults to the single pair `(k, m)`.
    pub grid: Option<Vec<GridPoint>>,
    /// SNR levels in dB; defaults to `[snr_ref_db]`.
    pub snr_sweep_db: Option<Vec<f64>>,
    pub keep_samples: bool,
}

impl Default for ConfigFile {
    fn default() -> Self {
        let s = Scenario::new(8, 8);
        Self {
            k: s.k,
            m: s.m,
            l: s.l,
            snr_ref_db: s.snr_ref_db,
            alpha_pl: s.alpha_pl,
            area_side: s.area_side,
            u_max: None,
            edge_reference: s.edge_reference,
            power_constraint: s.power_constraint,
            pairing_objective: s.pairing_objective,
            epsilon: s.epsilon,
            n_snapshots: s.n_snapshots,
            seed: s.seed,
            strategies: Strategy::ALL.to_vec(),
            grid: None,
            snr_sweep_db: None,
            keep_samples: false,
        }
    }
}

impl ConfigFile {
    /// Fill every optional field so the file alone pins down the run.
    pub fn resolved(mut self) -> Self {
        self.u_max.get_or_insert(self.l);
        self.grid.get_or_insert_with(|| vec![GridPoint { k: self.k, m: self.m }]);
        self.snr_sweep_db.get_or_insert_with(|| vec![self.snr_ref_db]);
        self
    }

    pub fn base_scenario(&self) -> Scenario {
        Scenario {
            k: self.k,
            m: self.m,
            l: self.l,
            snr_ref_db: self.snr_ref_db,
            alpha_pl: self.alpha_pl,
            area_side: self.area_side,
            u_max: self.u_max.unwrap_or(self.l),
            strategy: self.strategies.first().copied().unwrap_or(Strategy::Local),
            n_snapshots: self.n_snapshots,
            seed: self.seed,
            edge_reference: self.edge_reference,
            power_constraint: self.power_constraint,
            pairing_objective: self.pairing_objective,
            epsilon: self.epsilon,
        }
    }

    pub fn campaign(&self) -> Campaign {
        let r = self.clone().resolved();
        Campaign {
            base: r.base_scenario(),
            grid: r.grid.unwrap_or_default(),
            snr_ref_db: r.snr_sweep_db.unwrap_or_default(),
            strategies: r.strategies,
            n_snapshots: r.n_snapshots,
            master_seed: r.seed,
            keep_samples: r.keep_samples,
        }
    }

    /// Campaign after all checks. Too few ANs for the UE count is reported
    /// as [`ConfigError::Infeasible`]; everything else as `Invalid`.
    pub fn validated_campaign(&self) -> Result<Campaign, ConfigError> {
        if self.n_snapshots == 0 {
            return Err(ConfigError::Invalid("n_snapshots must be at least 1".into()));
        }
        let mut seen = Vec::new();
        for s in &self.strategies {
            if seen.contains(s) {
                return Err(ConfigError::Invalid(format!("strategy {s} listed twice")));
            }
            seen.push(*s);
        }
        let campaign = self.campaign();
        campaign.validate().map_err(|e| match e {
            ScenarioError::TooFewAns { .. } => ConfigError::Infeasible(e),
            other => ConfigError::Invalid(other.to_string()),
        })?;
        Ok(campaign)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

/// Parse `KEY=VALUE`; the value is read as JSON when possible and as a
/// plain string otherwise.
pub fn parse_override(arg: &str) -> Result<(String, Value), ConfigError> {
    let (key, raw) = arg.split_once('=').ok_or_else(|| ConfigError::Override(arg.into()))?;
    let key = key.trim();
    if key.is_empty() {
        return Err(ConfigError::Override(arg.into()));
    }
    let value = serde_json::from_str(raw.trim()).unwrap_or_else(|_| Value::String(raw.to_string()));
    Ok((key.to_string(), value))
}

/// Apply overrides on top of `base` (a config document, possibly partial).
pub fn from_value(mut base: Value, overrides: &[String], origin: &str) -> Result<ConfigFile, ConfigError> {
    let obj = base.as_object_mut().ok_or_else(|| ConfigError::Parse {
        path: origin.into(),
        message: "top level must be a JSON object".into(),
    })?;
    for arg in overrides {
        let (key, value) = parse_override(arg)?;
        obj.insert(key, value);
    }
    serde_json::from_value(base).map_err(|e| ConfigError::Parse { path: origin.into(), message: e.to_string() })
}

/// Read a config file (or start from defaults) and apply overrides.
pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<ConfigFile, ConfigError> {
    match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|source| ConfigError::Read { path: p.into(), source })?;
            let value: Value = serde_json::from_str(&text)
                .map_err(|e| ConfigError::Parse { path: p.display().to_string(), message: e.to_string() })?;
            from_value(value, overrides, &p.display().to_string())
        }
        None => from_value(Value::Object(Default::default()), overrides, "<defaults>"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_the_deployment_model() {
        let c = load(None, &[]).unwrap().resolved();
        assert_eq!((c.l, c.alpha_pl, c.area_side, c.u_max, c.n_snapshots), (4, 4.0, 1000.0, Some(4), 250));
        assert_eq!(c.strategies.len(), 4);
    }

    #[test]
    fn overrides_take_precedence_and_parse_json() {
        let c = load(None, &["snr_ref_db=20".into(), "strategies=[\"JPcon\"]".into(), "grid=[{\"k\":4,\"m\":6}]".into()])
            .unwrap();
        assert_eq!(c.snr_ref_db, 20.0);
        assert_eq!(c.strategies, vec![Strategy::JPcon]);
        assert_eq!(c.campaign().grid, vec![GridPoint { k: 4, m: 6 }]);
        assert_eq!(c.campaign().snr_ref_db, vec![20.0]);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(matches!(load(None, &["snr=3".into()]), Err(ConfigError::Parse { .. })));
        assert!(matches!(load(None, &["noequals".into()]), Err(ConfigError::Override(_))));
    }

    #[test]
    fn too_few_ans_is_infeasible() {
        let c = load(None, &["k=12".into(), "m=2".into()]).unwrap();
        assert!(matches!(c.validated_campaign(), Err(ConfigError::Infeasible(_))));
        let c = load(None, &["u_max=5".into()]).unwrap();
        assert!(matches!(c.validated_campaign(), Err(ConfigError::Invalid(_))));
    }

    #[test]
    fn resolved_config_round_trips() {
        let c = load(None, &["k=4".into(), "m=5".into()]).unwrap().resolved();
        let back: ConfigFile = serde_json::from_str(&c.to_json()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.campaign(), c.campaign());
    }
}
