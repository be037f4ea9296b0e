//! STAR-RIS coefficient model and closed-form performance expressions.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{ChannelSet, CMatrix, CVector, C64};
use crate::config::{linear_to_db, SystemConfig};

/// Maximum per-element energy residual for a profile to count as strict-ES.
pub const STRICT_ES_TOLERANCE: f64 = 1e-6;

/// Transmission (`phi_t`) and reflection (`phi_r`) coefficient vectors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StarRisProfile {
    pub phi_t: CVector,
    pub phi_r: CVector,
}

impl StarRisProfile {
    /// Build from energy splits `beta_t`, `beta_r` and phases.
    pub fn from_polar(beta_t: &[f64], theta_t: &[f64], beta_r: &[f64], theta_r: &[f64]) -> Self {
        let phi_t = CVector::from_iterator(
            beta_t.len(),
            beta_t.iter().zip(theta_t).map(|(&b, &th)| C64::from_polar(b.sqrt(), th)),
        );
        let phi_r = CVector::from_iterator(
            beta_r.len(),
            beta_r.iter().zip(theta_r).map(|(&b, &th)| C64::from_polar(b.sqrt(), th)),
        );
        Self { phi_t, phi_r }
    }

    /// Equal energy split with independent uniform phases.
    pub fn random_half_split<R: Rng + ?Sized>(num_elements: usize, rng: &mut R) -> Self {
        let tau = std::f64::consts::TAU;
        let theta_t: Vec<f64> = (0..num_elements).map(|_| tau * rng.random::<f64>()).collect();
        let theta_r: Vec<f64> = (0..num_elements).map(|_| tau * rng.random::<f64>()).collect();
        let half = vec![0.5; num_elements];
        Self::from_polar(&half, &theta_t, &half, &theta_r)
    }

    pub fn num_elements(&self) -> usize {
        self.phi_t.len()
    }

    pub fn beta_t(&self) -> Vec<f64> {
        self.phi_t.iter().map(|z| z.norm_sqr()).collect()
    }

    pub fn beta_r(&self) -> Vec<f64> {
        self.phi_r.iter().map(|z| z.norm_sqr()).collect()
    }

    /// `|phi_t,n|^2 + |phi_r,n|^2 - 1` per element.
    pub fn energy_residuals(&self) -> Vec<f64> {
        self.phi_t
            .iter()
            .zip(self.phi_r.iter())
            .map(|(t, r)| t.norm_sqr() + r.norm_sqr() - 1.0)
            .collect()
    }

    pub fn max_abs_energy_residual(&self) -> f64 {
        self.energy_residuals().into_iter().fold(0.0, |a, r| a.max(r.abs()))
    }

    pub fn is_strict_es(&self) -> bool {
        self.max_abs_energy_residual() <= STRICT_ES_TOLERANCE
    }

    /// Radially rescale every `(|phi_t,n|, |phi_r,n|)` pair onto the unit
    /// circle, keeping phases. An all-zero element becomes pure reflection.
    pub fn project_strict_es(&self) -> Self {
        let mut out = self.clone();
        for n in 0..self.num_elements() {
            let e = (self.phi_t[n].norm_sqr() + self.phi_r[n].norm_sqr()).sqrt();
            if e > 0.0 {
                out.phi_t[n] /= e;
                out.phi_r[n] /= e;
            } else {
                out.phi_r[n] = C64::new(1.0, 0.0);
            }
        }
        out
    }
}

/// Beamforming matrix `W` (M x K), column k is `w_k`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Beamformer {
    pub w: CMatrix,
}

impl Beamformer {
    pub fn zeros(num_antennas: usize, num_users: usize) -> Self {
        Self {
            w: CMatrix::zeros(num_antennas, num_users),
        }
    }

    pub fn column(&self, k: usize) -> CVector {
        self.w.column(k).into_owned()
    }

    pub fn total_power(&self) -> f64 {
        self.w.norm_squared()
    }
}

/// Effective channels `z_t0 = h0^H + phi_t^T G0` and `z_rk = h_k^H + phi_r^T G_k`,
/// stored as the row entries so that `z w = sum_m z[m] w[m]`.
#[derive(Clone, Debug)]
pub struct EffectiveChannels {
    pub z_t0: CVector,
    pub z_r: Vec<CVector>,
}

impl EffectiveChannels {
    /// `z_rk w`.
    pub fn secondary_gain(&self, k: usize, w: &CVector) -> C64 {
        self.z_r[k].dot(w)
    }

    /// `z_t0 w`.
    pub fn primary_gain(&self, w: &CVector) -> C64 {
        self.z_t0.dot(w)
    }
}

fn row_combination(direct: &CVector, coeffs: &CVector, cascaded: &CMatrix) -> CVector {
    // h^H + phi^T G
    let mut z = direct.map(|v| v.conj());
    z += cascaded.transpose() * coeffs;
    z
}

pub fn effective_channels(channels: &ChannelSet, profile: &StarRisProfile) -> EffectiveChannels {
    let z_t0 = row_combination(&channels.h0, &profile.phi_t, &channels.cascaded_primary);
    let z_r = channels
        .h
        .iter()
        .zip(&channels.cascaded)
        .map(|(hk, gk)| row_combination(hk, &profile.phi_r, gk))
        .collect();
    EffectiveChannels { z_t0, z_r }
}

/// `h~_ki = h_k^H w_i`; `k = None` selects the primary receiver `h0`.
pub fn h_tilde(channels: &ChannelSet, k: Option<usize>, w: &CVector) -> C64 {
    let h = match k {
        Some(k) => &channels.h[k],
        None => &channels.h0,
    };
    h.dotc(w)
}

/// `g~_ki = (G_k w_i)^*`; `k = None` selects `G0`.
pub fn g_tilde(channels: &ChannelSet, k: Option<usize>, w: &CVector) -> CVector {
    let g = match k {
        Some(k) => &channels.cascaded[k],
        None => &channels.cascaded_primary,
    };
    (g * w).map(|v| v.conj())
}

/// Total interference power `sum_k |z_t0 w_k|^2` at the primary receiver.
pub fn interference_at_rx(w: &Beamformer, eff: &EffectiveChannels) -> f64 {
    (0..w.w.ncols())
        .map(|k| eff.primary_gain(&w.column(k)).norm_sqr())
        .sum()
}

pub fn primary_sinr(w: &Beamformer, profile: &StarRisProfile, channels: &ChannelSet, cfg: &SystemConfig) -> f64 {
    let eff = effective_channels(channels, profile);
    cfg.primary_rx_power() / (interference_at_rx(w, &eff) + cfg.noise_power())
}

fn sinr_from_effective(k: usize, w: &Beamformer, eff: &EffectiveChannels, noise: f64) -> f64 {
    let mut signal = 0.0;
    let mut interference = 0.0;
    for i in 0..w.w.ncols() {
        let p = eff.secondary_gain(k, &w.column(i)).norm_sqr();
        if i == k {
            signal = p;
        } else {
            interference += p;
        }
    }
    signal / (interference + noise)
}

pub fn secondary_sinr(
    k: usize,
    w: &Beamformer,
    profile: &StarRisProfile,
    channels: &ChannelSet,
    cfg: &SystemConfig,
) -> f64 {
    let eff = effective_channels(channels, profile);
    sinr_from_effective(k, w, &eff, cfg.noise_power())
}

/// Per-user SINRs for all users from one effective-channel evaluation.
pub fn secondary_sinrs(w: &Beamformer, profile: &StarRisProfile, channels: &ChannelSet, cfg: &SystemConfig) -> Vec<f64> {
    let eff = effective_channels(channels, profile);
    let noise = cfg.noise_power();
    (0..channels.num_users())
        .map(|k| sinr_from_effective(k, w, &eff, noise))
        .collect()
}

/// Sum-rate in bits/s.
pub fn sum_rate(w: &Beamformer, profile: &StarRisProfile, channels: &ChannelSet, cfg: &SystemConfig) -> f64 {
    cfg.bandwidth_hz * spectral_efficiency(w, profile, channels, cfg)
}

/// Sum spectral efficiency in bits/s/Hz.
pub fn spectral_efficiency(w: &Beamformer, profile: &StarRisProfile, channels: &ChannelSet, cfg: &SystemConfig) -> f64 {
    secondary_sinrs(w, profile, channels, cfg)
        .into_iter()
        .map(|s| (1.0 + s).log2())
        .sum()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerformanceMetrics {
    /// bits/s
    pub sum_rate: f64,
    /// bits/s/Hz
    pub spectral_efficiency: f64,
    pub primary_sinr: f64,
    pub per_user_sinr: Vec<f64>,
    /// watts
    pub interference_at_rx: f64,
}

/// Flat serialized form of [`PerformanceMetrics`] with logarithmic units.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub sum_rate_bps: f64,
    pub spectral_efficiency: f64,
    pub primary_sinr_db: f64,
    pub per_user_sinr_db: Vec<f64>,
    pub interference_at_rx_dbm: f64,
}

impl PerformanceMetrics {
    pub fn evaluate(w: &Beamformer, profile: &StarRisProfile, channels: &ChannelSet, cfg: &SystemConfig) -> Self {
        let eff = effective_channels(channels, profile);
        let noise = cfg.noise_power();
        let per_user_sinr: Vec<f64> = (0..channels.num_users())
            .map(|k| sinr_from_effective(k, w, &eff, noise))
            .collect();
        let se: f64 = per_user_sinr.iter().map(|s| (1.0 + s).log2()).sum();
        let interference = interference_at_rx(w, &eff);
        Self {
            sum_rate: se * cfg.bandwidth_hz,
            spectral_efficiency: se,
            primary_sinr: cfg.primary_rx_power() / (interference + noise),
            per_user_sinr,
            interference_at_rx: interference,
        }
    }

    pub fn to_record(&self) -> MetricsRecord {
        MetricsRecord {
            sum_rate_bps: self.sum_rate,
            spectral_efficiency: self.spectral_efficiency,
            primary_sinr_db: linear_to_db(self.primary_sinr),
            per_user_sinr_db: self.per_user_sinr.iter().map(|&s| linear_to_db(s)).collect(),
            interference_at_rx_dbm: linear_to_db(self.interference_at_rx) + 30.0,
        }
    }
}

/// Per-constraint residuals of the master problem.
///
/// SINR and power margins are relative (`(gamma - gamma_min)/gamma_min`,
/// `(P_max - P)/P_max`); energy and amplitude residuals are absolute.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityReport {
    pub primary_sinr_margin: f64,
    pub power_margin: f64,
    pub energy_residuals: Vec<f64>,
    pub max_abs_energy_residual: f64,
    /// Largest `max(|phi| - 1, 0)` over both coefficient vectors.
    pub amplitude_violation: f64,
    pub tolerance: f64,
    /// All constraints within tolerance, energy conservation with equality.
    pub feasible: bool,
    /// As `feasible`, with energy conservation relaxed to `<= 1`.
    pub relaxed_feasible: bool,
}

pub fn check_feasibility(
    w: &Beamformer,
    profile: &StarRisProfile,
    cfg: &SystemConfig,
    channels: &ChannelSet,
) -> FeasibilityReport {
    let tol = cfg.solver_tolerance;
    let gamma_min = cfg.min_primary_sinr();
    let sinr = primary_sinr(w, profile, channels, cfg);
    let p_max = cfg.max_power();
    let primary_sinr_margin = (sinr - gamma_min) / gamma_min;
    let power_margin = (p_max - w.total_power()) / p_max;
    let energy_residuals = profile.energy_residuals();
    let max_abs = energy_residuals.iter().fold(0.0f64, |a, r| a.max(r.abs()));
    let max_pos = energy_residuals.iter().fold(f64::NEG_INFINITY, |a, &r| a.max(r));
    let amplitude_violation = profile
        .phi_t
        .iter()
        .chain(profile.phi_r.iter())
        .fold(0.0f64, |a, z| a.max(z.norm() - 1.0));
    let base = primary_sinr_margin >= -tol && power_margin >= -tol && amplitude_violation <= tol;
    FeasibilityReport {
        primary_sinr_margin,
        power_margin,
        energy_residuals,
        max_abs_energy_residual: max_abs,
        amplitude_violation,
        tolerance: tol,
        feasible: base && max_abs <= tol,
        relaxed_feasible: base && max_pos <= tol,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{build_channel_set, complex_normal};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn setup(seed: u64) -> (SystemConfig, ChannelSet, StarRisProfile, Beamformer) {
        let cfg = SystemConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ch = build_channel_set(&cfg, &mut rng).unwrap();
        let prof = StarRisProfile::random_half_split(cfg.num_ris_elements, &mut rng);
        let w = Beamformer {
            w: CMatrix::from_fn(cfg.num_bs_antennas, cfg.num_users, |_, _| complex_normal(&mut rng) * 0.3),
        };
        (cfg, ch, prof, w)
    }

    #[test]
    fn silent_ris_gives_direct_channel() {
        let (_, ch, mut prof, _) = setup(1);
        prof.phi_r.fill(C64::new(0.0, 0.0));
        let eff = effective_channels(&ch, &prof);
        for k in 0..ch.num_users() {
            assert_eq!(eff.z_r[k], ch.h[k].map(|v| v.conj()));
        }
        let (_, mut ch, prof, _) = setup(2);
        for g in &mut ch.cascaded {
            g.fill(C64::new(0.0, 0.0));
        }
        let eff = effective_channels(&ch, &prof);
        for k in 0..ch.num_users() {
            assert_eq!(eff.z_r[k], ch.h[k].map(|v| v.conj()));
        }
    }

    #[test]
    fn tilde_identity() {
        let (_, ch, prof, w) = setup(3);
        let eff = effective_channels(&ch, &prof);
        for k in 0..ch.num_users() {
            for i in 0..ch.num_users() {
                let wi = w.column(i);
                let lhs = eff.secondary_gain(k, &wi);
                let rhs = h_tilde(&ch, Some(k), &wi) + g_tilde(&ch, Some(k), &wi).dotc(&prof.phi_r);
                assert!((lhs - rhs).norm() <= 1e-10 * lhs.norm().max(1e-300));
            }
            let wk = w.column(k);
            let lhs = eff.primary_gain(&wk);
            let rhs = h_tilde(&ch, None, &wk) + g_tilde(&ch, None, &wk).dotc(&prof.phi_t);
            assert!((lhs - rhs).norm() <= 1e-10 * lhs.norm());
        }
    }

    #[test]
    fn zero_beamformer() {
        let (cfg, ch, prof, _) = setup(4);
        let w = Beamformer::zeros(cfg.num_bs_antennas, cfg.num_users);
        let want = cfg.primary_rx_power() / cfg.noise_power();
        assert!((primary_sinr(&w, &prof, &ch, &cfg) - want).abs() / want < 1e-14);
        assert_eq!(sum_rate(&w, &prof, &ch, &cfg), 0.0);
        let rep = check_feasibility(&w, &prof, &cfg, &ch);
        assert_eq!(rep.feasible, want >= cfg.min_primary_sinr());
        assert!(rep.feasible);
        let mut strict = cfg.clone();
        strict.min_primary_sinr_db = 80.0;
        assert!(!check_feasibility(&w, &prof, &strict, &ch).feasible);
    }

    #[test]
    fn doubling_beamformer_quadruples_interference() {
        let (cfg, ch, prof, w) = setup(5);
        let eff = effective_channels(&ch, &prof);
        let i1 = interference_at_rx(&w, &eff);
        let w2 = Beamformer { w: &w.w * C64::new(2.0, 0.0) };
        let i2 = interference_at_rx(&w2, &eff);
        assert!((i2 / i1 - 4.0).abs() < 1e-12);
        assert!(primary_sinr(&w2, &prof, &ch, &cfg) < primary_sinr(&w, &prof, &ch, &cfg));
    }

    #[test]
    fn single_user_sinr_has_no_interference() {
        let mut cfg = SystemConfig::default();
        cfg.num_users = 1;
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let ch = build_channel_set(&cfg, &mut rng).unwrap();
        let prof = StarRisProfile::random_half_split(cfg.num_ris_elements, &mut rng);
        let w = Beamformer {
            w: CMatrix::from_fn(cfg.num_bs_antennas, 1, |_, _| complex_normal(&mut rng)),
        };
        let eff = effective_channels(&ch, &prof);
        let want = eff.secondary_gain(0, &w.column(0)).norm_sqr() / cfg.noise_power();
        let got = secondary_sinr(0, &w, &prof, &ch, &cfg);
        assert!((got - want).abs() / want < 1e-14);
    }

    #[test]
    fn unit_sinr_single_user_gives_bandwidth() {
        let mut cfg = SystemConfig::default();
        cfg.num_users = 1;
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let ch = build_channel_set(&cfg, &mut rng).unwrap();
        let prof = StarRisProfile::random_half_split(cfg.num_ris_elements, &mut rng);
        let eff = effective_channels(&ch, &prof);
        // w along z^H scaled so |z w|^2 = sigma^2
        let z = &eff.z_r[0];
        let dir = z.map(|v| v.conj()) / C64::new(z.norm(), 0.0);
        let w = Beamformer {
            w: CMatrix::from_column_slice(cfg.num_bs_antennas, 1, (dir * C64::new(cfg.noise_power().sqrt() / z.norm(), 0.0)).as_slice()),
        };
        let rate = sum_rate(&w, &prof, &ch, &cfg);
        assert!((rate - cfg.bandwidth_hz).abs() / cfg.bandwidth_hz < 1e-10);
    }

    #[test]
    fn zero_forcing_columns_are_interference_free() {
        let (cfg, ch, prof, _) = setup(8);
        let eff = effective_channels(&ch, &prof);
        let k = ch.num_users();
        let m = ch.num_antennas();
        // W = Z^+ (right pseudo-inverse), so z_k w_i = delta_ki.
        let z = CMatrix::from_fn(k, m, |r, c| eff.z_r[r][c]);
        let zh = z.adjoint();
        let w = &zh * (&z * &zh).try_inverse().unwrap();
        let w = Beamformer { w: w * C64::new(1e-6, 0.0) };
        for user in 0..k {
            let got = secondary_sinr(user, &w, &prof, &ch, &cfg);
            let want = 1e-12 / cfg.noise_power();
            assert!((got - want).abs() / want < 1e-6);
        }
    }

    #[test]
    fn energy_residual_flagged() {
        let prof = StarRisProfile::from_polar(&[0.7, 0.5], &[0.0, 1.0], &[0.7, 0.5], &[0.3, 2.0]);
        let res = prof.energy_residuals();
        assert!((res[0] - 0.4).abs() < 1e-12);
        assert!(res[1].abs() < 1e-12);
        assert!(!prof.is_strict_es());
        let cfg = SystemConfig::default();
        let mut small = cfg.clone();
        small.num_ris_elements = 2;
        let ch = build_channel_set(&small, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let w = Beamformer::zeros(small.num_bs_antennas, small.num_users);
        let rep = check_feasibility(&w, &prof, &small, &ch);
        assert!(!rep.feasible);
        assert!((rep.max_abs_energy_residual - 0.4).abs() < 1e-12);
        let projected = prof.project_strict_es();
        assert!(projected.is_strict_es());
        assert!(check_feasibility(&w, &projected, &small, &ch).feasible);
    }

    #[test]
    fn metrics_record_consistency() {
        let (cfg, ch, prof, w) = setup(9);
        let m = PerformanceMetrics::evaluate(&w, &prof, &ch, &cfg);
        assert!((m.sum_rate - m.spectral_efficiency * cfg.bandwidth_hz).abs() <= 1e-9 * m.sum_rate);
        assert!(m.per_user_sinr.iter().all(|&s| s >= 0.0));
        let rec = m.to_record();
        let json = serde_json::to_value(&rec).unwrap();
        assert!(json.as_object().unwrap().values().all(|v| !v.is_object()));
        assert!((rec.primary_sinr_db - 10.0 * m.primary_sinr.log10()).abs() < 1e-12);
    }
}
