//! Normalized CSI, precoders, and the SINR / rate model.

use nalgebra::{Complex, DMatrix};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;
use thiserror::Error;

use crate::topology::{link_distances, Scenario, Topology};

pub type C64 = Complex<f64>;

/// Stacked CSI `H` of shape `(M*L) x K`; column `k` is `h_k`, rows
/// `m*L..(m+1)*L` hold the block `h_mk`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    pub h: DMatrix<C64>,
    pub l: usize,
    pub m: usize,
    pub k: usize,
}

/// Which AN blocks of each precoder may be nonzero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SupportCase {
    /// Only the serving AN's block of `w_k` is nonzero.
    SingleServing,
    /// Any block belonging to an active AN may be nonzero.
    JointActive,
}

/// Stacked precoders `W` of shape `(M*L) x K`; column `k` is `w_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct PrecodingMatrix {
    pub w: DMatrix<C64>,
    pub support: SupportCase,
}

#[derive(Debug, Error, PartialEq)]
pub enum ChannelError {
    #[error("beam direction for UE {ue} has norm {norm}, expected 1 or 0")]
    NotUnitNorm { ue: usize, norm: f64 },
}

#[derive(Serialize)]
struct ComplexDump<'a> {
    rows: usize,
    cols: usize,
    /// Column-major, interleaved `[re, im, re, im, ...]`.
    data: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    support: Option<&'a SupportCase>,
}

fn dump(m: &DMatrix<C64>, support: Option<&SupportCase>) -> String {
    let data = m.iter().flat_map(|c| [c.re, c.im]).collect();
    serde_json::to_string(&ComplexDump { rows: m.nrows(), cols: m.ncols(), data, support })
        .expect("matrix serializes")
}

impl ChannelRealization {
    /// `h_mk`, the length-L block between AN `m` and UE `k`.
    pub fn block(&self, m: usize, k: usize) -> nalgebra::DVector<C64> {
        self.h.view((m * self.l, k), (self.l, 1)).column(0).into_owned()
    }

    pub fn column_norm_sq(&self, k: usize) -> f64 {
        self.h.column(k).norm_squared()
    }

    pub fn to_json(&self) -> String {
        dump(&self.h, None)
    }
}

impl PrecodingMatrix {
    pub fn zeros(l: usize, m: usize, k: usize, support: SupportCase) -> Self {
        Self { w: DMatrix::zeros(m * l, k), support }
    }

    pub fn num_ues(&self) -> usize {
        self.w.ncols()
    }

    /// Total squared norm transmitted by each AN: `sum_k ||w_km||^2`.
    pub fn an_powers(&self, l: usize) -> Vec<f64> {
        let m = self.w.nrows() / l;
        (0..m)
            .map(|a| self.w.rows(a * l, l).iter().map(|c| c.norm_sqr()).sum())
            .collect()
    }

    /// Sum of block norms per AN: `sum_k ||w_km||`.
    pub fn an_norm_sums(&self, l: usize) -> Vec<f64> {
        let m = self.w.nrows() / l;
        (0..m)
            .map(|a| {
                (0..self.w.ncols())
                    .map(|k| self.w.view((a * l, k), (l, 1)).norm())
                    .sum()
            })
            .collect()
    }

    /// True when block `(m, k)` is identically zero.
    pub fn block_is_zero(&self, l: usize, m: usize, k: usize) -> bool {
        self.w.view((m * l, k), (l, 1)).iter().all(|c| c.re == 0.0 && c.im == 0.0)
    }

    pub fn to_json(&self) -> String {
        dump(&self.w, Some(&self.support))
    }
}

/// Draw i.i.d. CN(0,1) small-scale fading and apply the normalized large-scale
/// scaling `sqrt(SNR_ref) * (d/d_edge)^(-alpha/2)`.
///
/// The random stream is consumed identically for every `snr_ref_db`, so
/// snapshots drawn from the same seed share geometry and fading across SNRs.
pub fn draw_fading<R: Rng + ?Sized>(
    topology: &Topology,
    scenario: &Scenario,
    rng: &mut R,
) -> ChannelRealization {
    let (k, m, l) = (topology.num_ues(), topology.num_ans(), scenario.l);
    let dist = link_distances(topology);
    let snr_amp = scenario.snr_ref_linear().sqrt();
    let mut h = DMatrix::zeros(m * l, k);
    let half = std::f64::consts::FRAC_1_SQRT_2;
    for ue in 0..k {
        for an in 0..m {
            let amp = snr_amp * (dist[(ue, an)] / topology.d_edge).powf(-topology.alpha_pl / 2.0);
            for ant in 0..l {
                let re: f64 = rng.sample(StandardNormal);
                let im: f64 = rng.sample(StandardNormal);
                h[(an * l + ant, ue)] = C64::new(re * half, im * half) * amp;
            }
        }
    }
    ChannelRealization { h, l, m, k }
}

/// Cross-gain matrix `X[(k, i)] = h_k^H w_i`.
pub fn cross_terms(h: &ChannelRealization, w: &PrecodingMatrix) -> DMatrix<C64> {
    h.h.ad_mul(&w.w)
}

fn sinr_from_cross(x: &DMatrix<C64>, k: usize) -> f64 {
    let signal = x[(k, k)].norm_sqr();
    let interference: f64 = (0..x.ncols()).filter(|&i| i != k).map(|i| x[(k, i)].norm_sqr()).sum();
    signal / (1.0 + interference)
}

/// `gamma_k = |h_k^H w_k|^2 / (1 + sum_{i != k} |h_k^H w_i|^2)`.
pub fn sinr(h: &ChannelRealization, w: &PrecodingMatrix, k: usize) -> f64 {
    let hk = h.h.column(k);
    let x = DMatrix::from_fn(1, w.w.ncols(), |_, i| hk.dotc(&w.w.column(i)));
    let signal = x[(0, k)].norm_sqr();
    let interference: f64 = (0..x.ncols()).filter(|&i| i != k).map(|i| x[(0, i)].norm_sqr()).sum();
    signal / (1.0 + interference)
}

pub fn sinrs(h: &ChannelRealization, w: &PrecodingMatrix) -> Vec<f64> {
    let x = cross_terms(h, w);
    (0..x.nrows()).map(|k| sinr_from_cross(&x, k)).collect()
}

/// Shannon spectral efficiency `log2(1 + gamma)` in bit/s/Hz.
pub fn rate_from_sinr(gamma: f64) -> f64 {
    (1.0 + gamma).log2()
}

pub fn rates(h: &ChannelRealization, w: &PrecodingMatrix) -> Vec<f64> {
    sinrs(h, w).into_iter().map(rate_from_sinr).collect()
}

pub fn worse_rate(rates: &[f64]) -> f64 {
    rates.iter().copied().fold(f64::INFINITY, f64::min)
}

pub fn sum_rate(rates: &[f64]) -> f64 {
    rates.iter().sum()
}

/// `G[(k, i)] = |h_k^H w_i|^2` for unit-norm (or zero) beam directions.
pub fn effective_gains(
    h: &ChannelRealization,
    beams: &PrecodingMatrix,
) -> Result<DMatrix<f64>, ChannelError> {
    for (ue, col) in beams.w.column_iter().enumerate() {
        let norm = col.norm();
        if norm != 0.0 && (norm - 1.0).abs() > 1e-9 {
            return Err(ChannelError::NotUnitNorm { ue, norm });
        }
    }
    Ok(cross_terms(h, beams).map(|c| c.norm_sqr()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::generate_topology;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_channel(seed: u64, k: usize, m: usize) -> (ChannelRealization, Scenario) {
        let s = Scenario::new(k, m);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let t = generate_topology(&s, &mut rng);
        (draw_fading(&t, &s, &mut rng), s)
    }

    fn random_w(seed: u64, rows: usize, cols: usize) -> PrecodingMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w = DMatrix::from_fn(rows, cols, |_, _| {
            C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)
        });
        PrecodingMatrix { w, support: SupportCase::JointActive }
    }

    #[test]
    fn zero_snr_gives_zero_channel() {
        let mut s = Scenario::new(3, 2);
        s.snr_ref_db = f64::NEG_INFINITY;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let t = generate_topology(&s, &mut rng);
        let h = draw_fading(&t, &s, &mut rng);
        assert!(h.h.iter().all(|c| *c == C64::new(0.0, 0.0)));
    }

    #[test]
    fn fading_deterministic() {
        assert_eq!(random_channel(11, 4, 3).0, random_channel(11, 4, 3).0);
    }

    #[test]
    fn unit_variance_rayleigh() {
        // Single link exactly at d_edge with SNR_ref = 1.
        let s = Scenario::new(1, 1).with_snr_db(0.0).with_antennas(1);
        let d_edge = s.d_edge();
        let t = Topology {
            an_positions: vec![[0.0, 0.0]],
            ue_positions: vec![[d_edge, 0.0]],
            area_side: 1000.0,
            d_edge,
            alpha_pl: 4.0,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 100_000;
        let mean: f64 = (0..n).map(|_| draw_fading(&t, &s, &mut rng).h[(0, 0)].norm_sqr()).sum::<f64>()
            / n as f64;
        assert!((mean - 1.0).abs() < 0.02, "{mean}");
    }

    #[test]
    fn matched_filter_single_ue() {
        let (h, _) = random_channel(2, 1, 3);
        let p: f64 = 0.7;
        let w = PrecodingMatrix {
            w: h.h.clone() * C64::from(p.sqrt() / h.h.norm()),
            support: SupportCase::JointActive,
        };
        let expect = p * h.column_norm_sq(0);
        assert!((sinr(&h, &w, 0) - expect).abs() <= 1e-12 * expect);
    }

    #[test]
    fn zero_precoder_zero_sinr() {
        let (h, _) = random_channel(2, 3, 3);
        let w = PrecodingMatrix::zeros(4, 3, 3, SupportCase::SingleServing);
        assert!(sinrs(&h, &w).iter().all(|&g| g == 0.0));
    }

    #[test]
    fn scalar_two_user_formula() {
        // 1x1 blocks: h_1 = [1, 0.5], h_2 = [0.5, 1]; unit-power w_1 = e_1, w_2 = e_2.
        let h = ChannelRealization {
            h: DMatrix::<f64>::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 1.0]).map(C64::from),
            l: 1,
            m: 2,
            k: 2,
        };
        let w = PrecodingMatrix {
            w: DMatrix::<f64>::identity(2, 2).map(C64::from),
            support: SupportCase::SingleServing,
        };
        // gamma = 1 / (1 + 0.25) = 0.8 for both users.
        assert!((sinr(&h, &w, 0) - 0.8).abs() < 1e-15);
        assert!((sinr(&h, &w, 1) - 0.8).abs() < 1e-15);
        assert_eq!(sinrs(&h, &w), vec![sinr(&h, &w, 0), sinr(&h, &w, 1)]);
    }

    #[test]
    fn rate_values() {
        assert_eq!(rate_from_sinr(1.0), 1.0);
        assert_eq!(rate_from_sinr(0.0), 0.0);
        assert_eq!(rate_from_sinr(3.0), 2.0);
        assert_eq!(worse_rate(&[2.0, 1.0, 3.0]), 1.0);
        assert_eq!(sum_rate(&[2.0, 1.0, 3.0]), 6.0);
    }

    #[test]
    fn effective_gains_contract() {
        let (h, _) = random_channel(9, 3, 2);
        let mut beams = PrecodingMatrix::zeros(4, 2, 3, SupportCase::SingleServing);
        for k in 0..3 {
            let col = h.h.column(k).normalize();
            beams.w.set_column(k, &col);
        }
        let g = effective_gains(&h, &beams).unwrap();
        for k in 0..3 {
            assert!((g[(k, k)] - h.column_norm_sq(k)).abs() < 1e-9 * h.column_norm_sq(k));
            for i in 0..3 {
                let direct = h.h.column(k).dotc(&beams.w.column(i)).norm_sqr();
                assert!((g[(k, i)] - direct).abs() <= 1e-12 * direct.max(1.0));
            }
        }
        beams.w.column_mut(1).scale_mut(2.0);
        assert!(matches!(effective_gains(&h, &beams), Err(ChannelError::NotUnitNorm { ue: 1, .. })));
    }

    #[test]
    fn orthogonal_beam_zero_gain() {
        let h = ChannelRealization {
            h: DMatrix::from_column_slice(2, 1, &[C64::new(1.0, 0.0), C64::new(0.0, 0.0)]),
            l: 2,
            m: 1,
            k: 1,
        };
        let beams = PrecodingMatrix {
            w: DMatrix::from_column_slice(2, 1, &[C64::new(0.0, 0.0), C64::new(0.0, 1.0)]),
            support: SupportCase::SingleServing,
        };
        assert_eq!(effective_gains(&h, &beams).unwrap()[(0, 0)], 0.0);
    }

    #[test]
    fn json_dumps_interleave() {
        let h = ChannelRealization {
            h: DMatrix::from_column_slice(1, 1, &[C64::new(1.5, -2.0)]),
            l: 1,
            m: 1,
            k: 1,
        };
        let v: serde_json::Value = serde_json::from_str(&h.to_json()).unwrap();
        assert_eq!(v["data"], serde_json::json!([1.5, -2.0]));
    }

    /// Rates computed with explicit absolute quantities (arbitrary intercept,
    /// noise power, total power fixed through SNR_ref) equal the normalized model.
    #[test]
    fn absolute_constants_cancel() {
        let (h, s) = random_channel(21, 3, 4);
        let w = random_w(4, h.h.nrows(), 3);
        let base = rates(&h, &w);
        for (intercept, noise) in [(1e-7, 4e-15), (3.2e-11, 1e-13)] {
            // g(d) = intercept * d^-alpha and p_tot * g(d_edge) / noise = SNR_ref.
            let g_edge = intercept * s.d_edge().powf(-s.alpha_pl);
            let p_tot = s.snr_ref_linear() * noise / g_edge;
            // h_abs = sqrt(g / noise) * delta, w_abs = sqrt(p_tot) * w, so every
            // cross term picks up the same factor relative to the normalized one.
            let factor = (intercept * p_tot / noise).sqrt() * s.d_edge().powf(-s.alpha_pl / 2.0)
                / s.snr_ref_linear().sqrt();
            let x = h.h.ad_mul(&w.w).map(|c| c * factor);
            for k in 0..3 {
                let sig = x[(k, k)].norm_sqr();
                let intf: f64 = (0..3).filter(|&i| i != k).map(|i| x[(k, i)].norm_sqr()).sum();
                let r = (1.0 + sig / (1.0 + intf)).log2();
                assert!((r - base[k]).abs() < 1e-9 * base[k].max(1.0), "{r} vs {}", base[k]);
            }
        }
    }

    proptest! {
        #[test]
        fn sinr_phase_invariant(seed in 0u64..500, phases in proptest::collection::vec(0.0f64..6.3, 3)) {
            let (h, _) = random_channel(seed, 3, 2);
            let w = random_w(seed + 1, h.h.nrows(), 3);
            let mut rotated = w.clone();
            for (k, ph) in phases.iter().enumerate() {
                let rot = C64::from_polar(1.0, *ph);
                for v in rotated.w.column_mut(k).iter_mut() { *v *= rot; }
            }
            let a = sinrs(&h, &w);
            let b = sinrs(&h, &rotated);
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x - y).abs() <= 1e-9 * x.max(1.0));
            }
        }

        #[test]
        fn rate_monotone_in_signal(seed in 0u64..200, boost in 1.0f64..5.0) {
            let (h, _) = random_channel(seed, 2, 2);
            let mut w = random_w(seed, h.h.nrows(), 2);
            // gamma_0 depends on w_0 only through its own signal term.
            let before = sinr(&h, &w, 0);
            w.w.column_mut(0).scale_mut(boost);
            prop_assert!(sinr(&h, &w, 0) >= before * (1.0 - 1e-12));
        }
    }
}
