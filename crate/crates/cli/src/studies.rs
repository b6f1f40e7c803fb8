//! Pre-baked study grids.

use densecoord::sim::GridPoint;
use densecoord::topology::Strategy;

use crate::config::ConfigFile;

/// Snapshots per cell unless `--full` or `--snapshots` says otherwise.
pub const QUICK_SNAPSHOTS: usize = 25;
pub const FULL_SNAPSHOTS: usize = 250;

/// AN counts swept against 8 UEs.
pub const DENSIFICATION_M: [usize; 7] = [4, 6, 8, 12, 16, 24, 32];
/// `lambda_AN / lambda_UE` values swept per UE density.
pub const UE_DENSITY_RATIOS: [f64; 7] = [0.5, 0.75, 1.0, 1.5, 2.0, 3.0, 4.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Study {
    /// `K = M` grows together at 10 dB.
    Proportionate,
    /// Fixed 8 UEs, AN count swept, three SNR levels.
    Densification,
    /// 8 and 16 UEs, densification ratio swept, 10 dB.
    UeDensity,
}

impl Study {
    pub const ALL: [Study; 3] = [Study::Proportionate, Study::Densification, Study::UeDensity];

    pub fn name(self) -> &'static str {
        match self {
            Study::Proportionate => "proportionate",
            Study::Densification => "densification",
            Study::UeDensity => "ue-density",
        }
    }

    pub fn grid(self) -> (Vec<GridPoint>, Vec<f64>) {
        match self {
            Study::Proportionate => ([8, 16, 24, 32].iter().map(|&n| GridPoint { k: n, m: n }).collect(), vec![10.0]),
            Study::Densification => {
                (DENSIFICATION_M.iter().map(|&m| GridPoint { k: 8, m }).collect(), vec![10.0, 20.0, 30.0])
            }
            Study::UeDensity => {
                let mut grid = Vec::new();
                for k in [8usize, 16] {
                    for r in UE_DENSITY_RATIOS {
                        grid.push(GridPoint { k, m: (r * k as f64).round() as usize });
                    }
                }
                (grid, vec![10.0])
            }
        }
    }

    /// Config document for the study; `full` uses the larger snapshot count.
    pub fn config(self, full: bool) -> ConfigFile {
        let (grid, snr) = self.grid();
        ConfigFile {
            k: grid[0].k,
            m: grid[0].m,
            snr_ref_db: snr[0],
            n_snapshots: if full { FULL_SNAPSHOTS } else { QUICK_SNAPSHOTS },
            strategies: Strategy::ALL.to_vec(),
            grid: Some(grid),
            snr_sweep_db: Some(snr),
            ..ConfigFile::default()
        }
    }
}

impl std::str::FromStr for Study {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Study::ALL
            .into_iter()
            .find(|st| st.name() == s.to_ascii_lowercase().replace('_', "-"))
            .ok_or_else(|| format!("unknown study '{s}' (expected proportionate, densification or ue-density)"))
    }
}
