//! Deployment geometry: uniform AN/UE drops over a square area and the
//! normalized large-scale gain model.
//!
//! All gains are expressed relative to the reference edge distance `d_edge`,
//! so that with the total power budget normalized to one, the received SNR of
//! a unit-gain link equals `SNR_ref`. Absolute path-loss intercepts, carrier
//! frequency and noise density cancel and are deliberately not modeled.

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Lower clamp on any AN-UE distance, in meters.
pub const D_MIN: f64 = 1.0;

/// Normalized total transmit power of the network.
pub const P_BUDGET: f64 = 1.0;

#[derive(Debug, Error, PartialEq)]
pub enum ScenarioError {
    #[error("scenario needs at least one UE and one AN (K={k}, M={m})")]
    Empty { k: usize, m: usize },
    #[error("antennas per AN must be positive")]
    NoAntennas,
    #[error("u_max={u_max} outside [1, L={l}]")]
    UMax { u_max: usize, l: usize },
    #[error("M={m} ANs cannot provide ceil(K/L)={needed} serving ANs")]
    TooFewAns { m: usize, needed: usize },
    #[error("{0} must be positive and finite")]
    NonPositive(&'static str),
    #[error("snr_ref_db must be finite")]
    Snr,
    #[error("campaign sweep axis '{0}' is empty")]
    EmptyAxis(&'static str),
}

/// The four spatial resource management strategies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Strategy {
    Local,
    CoordPr,
    LocalPowCoord,
    JPcon,
}

impl Strategy {
    pub const ALL: [Strategy; 4] = [
        Strategy::Local,
        Strategy::CoordPr,
        Strategy::LocalPowCoord,
        Strategy::JPcon,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Local => "Local",
            Strategy::CoordPr => "CoordPr",
            Strategy::LocalPowCoord => "LocalPowCoord",
            Strategy::JPcon => "JPcon",
        }
    }

    /// Cap on the number of active ANs used by this strategy's pairing.
    pub fn b_max(self, k: usize, l: usize) -> usize {
        match self {
            Strategy::JPcon => k.div_ceil(l),
            _ => k,
        }
    }
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "local" => Ok(Strategy::Local),
            "coordpr" => Ok(Strategy::CoordPr),
            "localpowcoord" => Ok(Strategy::LocalPowCoord),
            "jpcon" => Ok(Strategy::JPcon),
            _ => Err(format!("unknown strategy '{s}'")),
        }
    }
}

/// Where the worst-case SNR reference user sits relative to a center macro site.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeReference {
    /// Area corner: `d_edge = side * sqrt(2) / 2`.
    #[default]
    Corner,
    /// Midpoint of a side: `d_edge = side / 2`.
    EdgeMidpoint,
}

/// Form of the per-active-AN power constraint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PowerConstraint {
    /// `sum_k ||w_km||^2 <= p_budget / |A|`.
    #[default]
    SumOfSquares,
    /// `sum_k ||w_km|| <= sqrt(p_budget / |A|)`.
    SumOfNorms,
}

/// What the pairing minimizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairingObjective {
    /// Summed association cost.
    #[default]
    SumCost,
    /// Largest single association cost, ties broken by summed cost.
    MinMax,
}

/// One simulated network configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub k: usize,
    pub m: usize,
    pub l: usize,
    pub snr_ref_db: f64,
    pub alpha_pl: f64,
    pub area_side: f64,
    pub u_max: usize,
    pub strategy: Strategy,
    pub n_snapshots: usize,
    pub seed: u64,
    pub edge_reference: EdgeReference,
    pub power_constraint: PowerConstraint,
    #[serde(default)]
    pub pairing_objective: PairingObjective,
    /// Bisection tolerance in linear SINR units.
    pub epsilon: f64,
}

impl Scenario {
    /// `K` UEs and `M` ANs with the default deployment parameters
    /// (L=4, alpha=4, 1 km side, u_max=L, 10 dB, 250 snapshots).
    pub fn new(k: usize, m: usize) -> Self {
        Self {
            k,
            m,
            l: 4,
            snr_ref_db: 10.0,
            alpha_pl: 4.0,
            area_side: 1000.0,
            u_max: 4,
            strategy: Strategy::Local,
            n_snapshots: 250,
            seed: 0,
            edge_reference: EdgeReference::Corner,
            power_constraint: PowerConstraint::SumOfSquares,
            pairing_objective: PairingObjective::SumCost,
            epsilon: 1e-3,
        }
    }

    pub fn with_strategy(mut self, strategy: Strategy) -> Self {
        self.strategy = strategy;
        self
    }

    pub fn with_snr_db(mut self, snr_ref_db: f64) -> Self {
        self.snr_ref_db = snr_ref_db;
        self
    }

    pub fn with_antennas(mut self, l: usize) -> Self {
        self.l = l;
        self.u_max = l;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.k == 0 || self.m == 0 {
            return Err(ScenarioError::Empty { k: self.k, m: self.m });
        }
        if self.l == 0 {
            return Err(ScenarioError::NoAntennas);
        }
        if self.u_max == 0 || self.u_max > self.l {
            return Err(ScenarioError::UMax { u_max: self.u_max, l: self.l });
        }
        let needed = self.k.div_ceil(self.l);
        if self.m < needed || self.m * self.u_max < self.k {
            return Err(ScenarioError::TooFewAns { m: self.m, needed: needed.max(self.k.div_ceil(self.u_max)) });
        }
        for (name, v) in [
            ("alpha_pl", self.alpha_pl),
            ("area_side", self.area_side),
            ("epsilon", self.epsilon),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(ScenarioError::NonPositive(name));
            }
        }
        if !self.snr_ref_db.is_finite() {
            return Err(ScenarioError::Snr);
        }
        Ok(())
    }

    pub fn snr_ref_linear(&self) -> f64 {
        10f64.powf(self.snr_ref_db / 10.0)
    }

    pub fn b_max(&self) -> usize {
        self.strategy.b_max(self.k, self.l)
    }

    pub fn d_edge(&self) -> f64 {
        match self.edge_reference {
            EdgeReference::Corner => self.area_side * std::f64::consts::SQRT_2 / 2.0,
            EdgeReference::EdgeMidpoint => self.area_side / 2.0,
        }
    }

    /// Densification ratio `lambda_AN / lambda_UE`.
    pub fn densification_ratio(&self) -> f64 {
        self.m as f64 / self.k as f64
    }
}

/// Planar snapshot of AN and UE positions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Topology {
    pub an_positions: Vec<[f64; 2]>,
    pub ue_positions: Vec<[f64; 2]>,
    pub area_side: f64,
    pub d_edge: f64,
    pub alpha_pl: f64,
}

impl Topology {
    pub fn num_ans(&self) -> usize {
        self.an_positions.len()
    }

    pub fn num_ues(&self) -> usize {
        self.ue_positions.len()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("topology serializes")
    }
}

/// Drop `K` UEs and `M` ANs independently and uniformly over the square.
pub fn generate_topology<R: Rng + ?Sized>(scenario: &Scenario, rng: &mut R) -> Topology {
    let side = scenario.area_side;
    let point = |rng: &mut R| [rng.random::<f64>() * side, rng.random::<f64>() * side];
    let ue_positions = (0..scenario.k).map(|_| point(rng)).collect();
    let an_positions = (0..scenario.m).map(|_| point(rng)).collect();
    Topology {
        an_positions,
        ue_positions,
        area_side: side,
        d_edge: scenario.d_edge(),
        alpha_pl: scenario.alpha_pl,
    }
}

/// Gain relative to a link of length `d_edge`: `(d / d_edge)^-alpha`.
pub fn normalized_gain(d: f64, topology: &Topology) -> f64 {
    (d.max(D_MIN) / topology.d_edge).powf(-topology.alpha_pl)
}

/// K x M matrix of AN-UE distances, clamped below by [`D_MIN`].
pub fn link_distances(topology: &Topology) -> DMatrix<f64> {
    DMatrix::from_fn(topology.num_ues(), topology.num_ans(), |k, m| {
        let [ux, uy] = topology.ue_positions[k];
        let [ax, ay] = topology.an_positions[m];
        (ux - ax).hypot(uy - ay).max(D_MIN)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn fixed(an: Vec<[f64; 2]>, ue: Vec<[f64; 2]>) -> Topology {
        Topology {
            an_positions: an,
            ue_positions: ue,
            area_side: 1000.0,
            d_edge: 1000.0 * std::f64::consts::SQRT_2 / 2.0,
            alpha_pl: 4.0,
        }
    }

    #[test]
    fn gain_anchors() {
        let t = fixed(vec![], vec![]);
        assert_eq!(normalized_gain(t.d_edge, &t), 1.0);
        assert!((normalized_gain(t.d_edge / 2.0, &t) - 16.0).abs() < 1e-12);
        assert!((normalized_gain(2.0 * t.d_edge, &t) - 0.0625).abs() < 1e-15);
        assert!(normalized_gain(0.0, &t).is_finite());
        assert_eq!(normalized_gain(0.0, &t), normalized_gain(D_MIN, &t));
    }

    #[test]
    fn gain_strictly_decreasing() {
        let t = fixed(vec![], vec![]);
        let mut prev = f64::INFINITY;
        for i in 0..2000 {
            let g = normalized_gain(D_MIN + i as f64 * 0.7, &t);
            assert!(g < prev);
            prev = g;
        }
    }

    #[test]
    fn distances() {
        let t = fixed(vec![[0.0, 0.0], [3.0, 4.0]], vec![[3.0, 4.0]]);
        let d = link_distances(&t);
        assert_eq!(d[(0, 0)], 5.0);
        assert_eq!(d[(0, 1)], D_MIN);
    }

    #[test]
    fn reproducible_and_in_range() {
        let s = Scenario::new(16, 32);
        let a = generate_topology(&s, &mut ChaCha8Rng::seed_from_u64(7));
        let b = generate_topology(&s, &mut ChaCha8Rng::seed_from_u64(7));
        assert_eq!(a, b);
        assert_eq!(link_distances(&a), link_distances(&b));
        for p in a.an_positions.iter().chain(&a.ue_positions) {
            assert!((0.0..=1000.0).contains(&p[0]) && (0.0..=1000.0).contains(&p[1]));
        }
        let single = Scenario::new(1, 1);
        let c = generate_topology(&single, &mut ChaCha8Rng::seed_from_u64(1));
        let d = generate_topology(&single, &mut ChaCha8Rng::seed_from_u64(1));
        assert_eq!(c, d);
    }

    #[test]
    fn uniform_drop_mean_near_center() {
        let s = Scenario::new(16, 32);
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let (mut sx, mut sy, mut n) = (0.0, 0.0, 0usize);
        for _ in 0..10_000 {
            let t = generate_topology(&s, &mut rng);
            for p in t.an_positions.iter().chain(&t.ue_positions) {
                sx += p[0];
                sy += p[1];
                n += 1;
            }
        }
        let (mx, my) = (sx / n as f64, sy / n as f64);
        assert!((mx - 500.0).abs() < 5.0, "{mx}");
        assert!((my - 500.0).abs() < 5.0, "{my}");
    }

    #[test]
    fn scenario_validation() {
        assert!(Scenario::new(8, 8).validate().is_ok());
        assert_eq!(
            Scenario::new(9, 2).validate(),
            Err(ScenarioError::TooFewAns { m: 2, needed: 3 })
        );
        let mut s = Scenario::new(4, 4);
        s.u_max = 5;
        assert!(matches!(s.validate(), Err(ScenarioError::UMax { .. })));
        assert_eq!(Strategy::JPcon.b_max(8, 4), 2);
        assert_eq!(Strategy::CoordPr.b_max(8, 4), 8);
        assert!((Scenario::new(1, 1).d_edge() - 707.106_781_186_547_5).abs() < 1e-9);
    }

    #[test]
    fn strategy_parse() {
        for s in Strategy::ALL {
            assert_eq!(s.name().parse::<Strategy>().unwrap(), s);
        }
        assert_eq!("local-pow-coord".parse::<Strategy>().unwrap(), Strategy::LocalPowCoord);
    }
}
