//! Alternating SCA over the STAR-RIS coefficients and the BS beamformer.
//!
//! Each outer iteration runs the coefficient block and then the beamforming
//! block. A block repeats its convexified solve (re-linearizing at the new
//! point) until the exact spectral efficiency stops improving by more than
//! `inner_relative_tolerance`, or the inner cap is hit. A solve that would
//! lower the exact spectral efficiency is discarded, which makes the recorded
//! trace nondecreasing.

mod beamforming;
mod coefficient;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{ChannelSet, C64};
use crate::config::{InnerMode, SystemConfig};
use crate::convex::SolveStatus;
use crate::error::{Error, Result};
use crate::system_model::{
    check_feasibility, effective_channels, interference_at_rx, spectral_efficiency, Beamformer,
    FeasibilityReport, PerformanceMetrics, StarRisProfile,
};

pub use beamforming::{solve_beamforming_subproblem, BeamformingUpdate, DEGENERATE_SLACK};
pub use coefficient::{solve_coefficient_subproblem, CoefficientUpdate};

#[cfg(test)]
use beamforming::{build_beamforming_program, span_basis};
#[cfg(test)]
use coefficient::build_coefficient_program;

/// SINRs below this are treated as a dead user and pinned to zero.
pub const PINNED_SINR: f64 = 1e-10;

/// Largest energy residual at which the outer loop may stop.
pub const ENERGY_STOP_RESIDUAL: f64 = 1e-4;

/// Allowed drop of the exact spectral efficiency when accepting a step.
const ASCENT_SLACK: f64 = 1e-10;

/// Which coefficients each element may use.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ElementSupport {
    pub transmit: Vec<bool>,
    pub reflect: Vec<bool>,
}

impl ElementSupport {
    /// Every element transmits and reflects.
    pub fn full(n: usize) -> Self {
        Self {
            transmit: vec![true; n],
            reflect: vec![true; n],
        }
    }

    /// First half reflect-only, second half transmit-only.
    pub fn split(n: usize) -> Self {
        let half = n / 2;
        Self {
            transmit: (0..n).map(|i| i >= half).collect(),
            reflect: (0..n).map(|i| i < half).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.transmit.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transmit.is_empty()
    }

    /// Radially rescale each element onto its energy circle. A silent element
    /// becomes a unit coefficient on its first allowed side.
    pub fn project(&self, profile: &StarRisProfile) -> StarRisProfile {
        let mut out = self.mask(profile);
        for n in 0..self.len() {
            let e = (out.phi_t[n].norm_sqr() + out.phi_r[n].norm_sqr()).sqrt();
            if e > 0.0 {
                out.phi_t[n] /= e;
                out.phi_r[n] /= e;
            } else if self.reflect[n] {
                out.phi_r[n] = C64::new(1.0, 0.0);
            } else if self.transmit[n] {
                out.phi_t[n] = C64::new(1.0, 0.0);
            }
        }
        out
    }

    /// Zero every coefficient outside the support.
    pub fn mask(&self, profile: &StarRisProfile) -> StarRisProfile {
        let mut out = profile.clone();
        for n in 0..self.len() {
            if !self.transmit[n] {
                out.phi_t[n] = C64::new(0.0, 0.0);
            }
            if !self.reflect[n] {
                out.phi_r[n] = C64::new(0.0, 0.0);
            }
        }
        out
    }
}

/// SINR and interference slacks of both subproblems.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubproblemState {
    /// Coefficient-block SINR slacks.
    pub rho: Vec<f64>,
    /// Beamforming-block SINR slacks.
    pub eta: Vec<f64>,
    /// Interference-plus-noise slacks, watts.
    pub zeta: Vec<f64>,
    pub iterate_index: usize,
}

/// Slacks that make every SINR and interference constraint tight at `(w, profile)`.
pub fn reseed_slacks(
    w: &Beamformer,
    profile: &StarRisProfile,
    channels: &ChannelSet,
    cfg: &SystemConfig,
) -> SubproblemState {
    let eff = effective_channels(channels, profile);
    let noise = cfg.noise_power();
    let k_users = channels.num_users();
    let mut rho = Vec::with_capacity(k_users);
    let mut zeta = Vec::with_capacity(k_users);
    for k in 0..k_users {
        let mut signal = 0.0;
        let mut interference = 0.0;
        for i in 0..k_users {
            let g = eff.secondary_gain(k, &w.column(i)).norm_sqr();
            if i == k {
                signal = g;
            } else {
                interference += g;
            }
        }
        let z = interference + noise;
        let s = signal / z;
        rho.push(if s >= PINNED_SINR { s } else { 0.0 });
        zeta.push(z);
    }
    SubproblemState {
        eta: rho.clone(),
        rho,
        zeta,
        iterate_index: 0,
    }
}

/// Matched-filter beams at 90% of the power budget and an equal energy split
/// with random phases. Power is bisected down if the primary SINR floor fails.
pub fn initialize<R: Rng + ?Sized>(
    cfg: &SystemConfig,
    channels: &ChannelSet,
    rng: &mut R,
) -> Result<(Beamformer, StarRisProfile)> {
    initialize_with_support(cfg, channels, &ElementSupport::full(channels.num_elements()), rng)
}

pub(crate) fn initialize_with_support<R: Rng + ?Sized>(
    cfg: &SystemConfig,
    channels: &ChannelSet,
    support: &ElementSupport,
    rng: &mut R,
) -> Result<(Beamformer, StarRisProfile)> {
    let n = channels.num_elements();
    let tau = std::f64::consts::TAU;
    let theta_t: Vec<f64> = (0..n).map(|_| tau * rng.random::<f64>()).collect();
    let theta_r: Vec<f64> = (0..n).map(|_| tau * rng.random::<f64>()).collect();
    let (mut bt, mut br) = (vec![0.0; n], vec![0.0; n]);
    for i in 0..n {
        match (support.transmit[i], support.reflect[i]) {
            (true, true) => (bt[i], br[i]) = (0.5, 0.5),
            (true, false) => bt[i] = 1.0,
            (false, true) => br[i] = 1.0,
            (false, false) => {}
        }
    }
    let profile = StarRisProfile::from_polar(&bt, &theta_t, &br, &theta_r);

    let k_users = channels.num_users();
    let m = channels.num_antennas();
    let mut unit = Beamformer::zeros(m, k_users);
    for k in 0..k_users {
        let h = &channels.h[k];
        let nh = h.norm();
        if nh > 0.0 {
            unit.w.set_column(k, &(h / C64::from(nh * (k_users as f64).sqrt())));
        }
    }
    let eff = effective_channels(channels, &profile);
    let unit_interference = interference_at_rx(&unit, &eff);
    let allowed = cfg.interference_budget() - cfg.noise_power();
    let feasible = |p: f64| p * unit_interference <= allowed;
    let p_max = cfg.max_power();
    let mut power = 0.9 * p_max;
    if !feasible(power) {
        let floor = 1e-6 * p_max;
        if !feasible(floor) {
            return Err(Error::InitializationInfeasible(format!(
                "primary SINR floor violated even at {floor:e} W"
            )));
        }
        let (mut lo, mut hi) = (floor, power);
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if feasible(mid) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        power = lo;
    }
    unit.w *= C64::from(power.sqrt());
    Ok((unit, profile))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Converged,
    MaxIterations,
    /// Both blocks failed repeatedly; the result is the best point so far.
    SubproblemFailure,
}

/// Per-outer-iteration bookkeeping.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationStats {
    pub outer: usize,
    pub penalty: f64,
    /// Accepted coefficient solves.
    pub coefficient_inner: usize,
    pub beamforming_inner: usize,
    pub coefficient_status: Option<SolveStatus>,
    pub beamforming_status: Option<SolveStatus>,
    pub newton_steps: usize,
    pub spectral_efficiency: f64,
    pub primary_sinr_margin: f64,
    pub max_energy_residual: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OptimizationResult {
    /// Spectral efficiency after every outer iteration, bits/s/Hz.
    pub objective_trace: Vec<f64>,
    pub final_profile: StarRisProfile,
    pub final_beamformer: Beamformer,
    pub final_metrics: PerformanceMetrics,
    pub feasibility: FeasibilityReport,
    pub outer_iterations: usize,
    pub subproblem_stats: Vec<IterationStats>,
    pub status: RunStatus,
    /// Spectral efficiency right after initialization.
    pub initial_spectral_efficiency: f64,
}

/// Run the alternating optimization, drawing the initial phases from a
/// stream seeded by `cfg.rng_seed`.
pub fn alternate(channels: &ChannelSet, cfg: &SystemConfig) -> Result<OptimizationResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    alternate_with_rng(channels, cfg, &mut rng)
}

pub fn alternate_with_rng<R: Rng + ?Sized>(
    channels: &ChannelSet,
    cfg: &SystemConfig,
    rng: &mut R,
) -> Result<OptimizationResult> {
    let support = ElementSupport::full(channels.num_elements());
    run_alternating(channels, cfg, &support, rng)
}

struct Runner<'a> {
    channels: &'a ChannelSet,
    cfg: &'a SystemConfig,
    support: &'a ElementSupport,
    inner_cap: usize,
}

#[derive(Default)]
struct BlockOutcome {
    accepted: usize,
    status: Option<SolveStatus>,
    newton_steps: usize,
    failed: bool,
}

impl Runner<'_> {
    fn se(&self, w: &Beamformer, profile: &StarRisProfile) -> f64 {
        spectral_efficiency(w, profile, self.channels, self.cfg)
    }

    /// Exact constraint check with a relative slack for rounding.
    fn admissible(&self, w: &Beamformer, profile: &StarRisProfile) -> bool {
        let eff = effective_channels(self.channels, profile);
        let inr = interference_at_rx(w, &eff) + self.cfg.noise_power();
        let energy_ok = profile.energy_residuals().iter().all(|&r| r <= 1e-9);
        inr <= self.cfg.interference_budget() * (1.0 + 1e-9)
            && w.total_power() <= self.cfg.max_power() * (1.0 + 1e-9)
            && energy_ok
            && w.w.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    fn coefficient_block(
        &self,
        w: &Beamformer,
        profile: &mut StarRisProfile,
        se: &mut f64,
        penalty: f64,
    ) -> BlockOutcome {
        let mut out = BlockOutcome::default();
        for j in 0..self.inner_cap {
            let mut state = reseed_slacks(w, profile, self.channels, self.cfg);
            state.iterate_index = j;
            let up = match solve_coefficient_subproblem(
                w,
                profile,
                &state,
                penalty,
                self.channels,
                self.cfg,
                self.support,
            ) {
                Ok(up) => up,
                Err(_) => {
                    out.status = Some(SolveStatus::Infeasible);
                    out.failed = true;
                    break;
                }
            };
            out.status = Some(up.status);
            out.newton_steps += up.newton_steps;
            let cand = self.support.mask(&up.profile);
            if !self.admissible(w, &cand) {
                out.failed = true;
                break;
            }
            let next = self.se(w, &cand);
            if !(next >= *se - ASCENT_SLACK) {
                break;
            }
            let gain = (next - *se) / se.abs().max(1e-12);
            *profile = cand;
            *se = next.max(*se);
            out.accepted += 1;
            if gain <= self.cfg.inner_relative_tolerance {
                break;
            }
        }
        out
    }

    fn beamforming_block(&self, w: &mut Beamformer, profile: &StarRisProfile, se: &mut f64) -> BlockOutcome {
        let mut out = BlockOutcome::default();
        for j in 0..self.inner_cap {
            let mut state = reseed_slacks(w, profile, self.channels, self.cfg);
            state.iterate_index = j;
            let up = match solve_beamforming_subproblem(w, profile, &state, self.channels, self.cfg) {
                Ok(up) => up,
                Err(_) => {
                    out.status = Some(SolveStatus::Infeasible);
                    out.failed = true;
                    break;
                }
            };
            out.status = Some(up.status);
            out.newton_steps += up.newton_steps;
            if !self.admissible(&up.beamformer, profile) {
                out.failed = true;
                break;
            }
            let next = self.se(&up.beamformer, profile);
            if !(next >= *se - ASCENT_SLACK) {
                break;
            }
            let gain = (next - *se) / se.abs().max(1e-12);
            *w = up.beamformer;
            *se = next.max(*se);
            out.accepted += 1;
            if gain <= self.cfg.inner_relative_tolerance {
                break;
            }
        }
        out
    }

    fn stats(&self, outer: usize, penalty: f64, w: &Beamformer, profile: &StarRisProfile, se: f64) -> IterationStats {
        let eff = effective_channels(self.channels, profile);
        let sinr = self.cfg.primary_rx_power() / (interference_at_rx(w, &eff) + self.cfg.noise_power());
        let gmin = self.cfg.min_primary_sinr();
        IterationStats {
            outer,
            penalty,
            coefficient_inner: 0,
            beamforming_inner: 0,
            coefficient_status: None,
            beamforming_status: None,
            newton_steps: 0,
            spectral_efficiency: se,
            primary_sinr_margin: (sinr - gmin) / gmin,
            max_energy_residual: profile.max_abs_energy_residual(),
        }
    }
}

/// Shared alternating loop; `support` restricts which coefficients exist.
pub fn run_alternating<R: Rng + ?Sized>(
    channels: &ChannelSet,
    cfg: &SystemConfig,
    support: &ElementSupport,
    rng: &mut R,
) -> Result<OptimizationResult> {
    cfg.validate()?;
    if support.len() != channels.num_elements() || channels.num_users() == 0 {
        return Err(Error::Shape("element support does not match the channel set".into()));
    }
    let (mut w, mut profile) = initialize_with_support(cfg, channels, support, rng)?;
    let runner = Runner {
        channels,
        cfg,
        support,
        inner_cap: match cfg.inner_mode {
            InnerMode::Full => cfg.max_inner_iterations,
            InnerMode::Single => 1,
        },
    };
    let mut se = runner.se(&w, &profile);
    let initial_se = se;
    let c0 = cfg.initial_penalty();
    let mut penalty = c0;
    let mut trace = Vec::new();
    let mut stats = Vec::new();
    let mut status = RunStatus::MaxIterations;
    let mut failures = 0;

    for outer in 1..=cfg.max_outer_iterations {
        if outer > 1 && (outer - 1) % cfg.penalty_growth_period == 0 {
            penalty = (penalty * cfg.penalty_growth).min(c0 * cfg.penalty_cap_factor);
        }
        let before = se;
        let cb = runner.coefficient_block(&w, &mut profile, &mut se, penalty);
        let bb = runner.beamforming_block(&mut w, &profile, &mut se);
        trace.push(se);
        let mut st = runner.stats(outer, penalty, &w, &profile, se);
        st.coefficient_inner = cb.accepted;
        st.beamforming_inner = bb.accepted;
        st.coefficient_status = cb.status;
        st.beamforming_status = bb.status;
        st.newton_steps = cb.newton_steps + bb.newton_steps;
        stats.push(st);

        if cb.failed && bb.failed {
            failures += 1;
            if failures >= 2 {
                status = RunStatus::SubproblemFailure;
                break;
            }
        } else {
            failures = 0;
        }
        let rel = (se - before).abs() / before.abs().max(1e-12);
        if rel <= cfg.sca_tolerance && profile.max_abs_energy_residual() <= ENERGY_STOP_RESIDUAL {
            status = RunStatus::Converged;
            break;
        }
    }

    // Strict energy split, then one more beamforming pass on the projected surface.
    let projected = support.project(&profile);
    let eff = effective_channels(channels, &projected);
    let allowed = cfg.interference_budget() - cfg.noise_power();
    let interference = interference_at_rx(&w, &eff);
    if interference > allowed {
        w.w *= C64::from((allowed / interference).sqrt() * (1.0 - 1e-9));
    }
    let mut se_post = runner.se(&w, &projected);
    runner.beamforming_block(&mut w, &projected, &mut se_post);
    profile = projected;

    let final_metrics = PerformanceMetrics::evaluate(&w, &profile, channels, cfg);
    let feasibility = check_feasibility(&w, &profile, cfg, channels);
    Ok(OptimizationResult {
        outer_iterations: trace.len(),
        objective_trace: trace,
        final_profile: profile,
        final_beamformer: w,
        final_metrics,
        feasibility,
        subproblem_stats: stats,
        status,
        initial_spectral_efficiency: initial_se,
    })
}

/// Optimize only the beamformer for a fixed surface; one beamforming solve
/// per outer iteration.
pub fn optimize_beamformer_only(
    channels: &ChannelSet,
    cfg: &SystemConfig,
    profile: &StarRisProfile,
    w0: Beamformer,
) -> Result<OptimizationResult> {
    cfg.validate()?;
    let support = ElementSupport::full(channels.num_elements());
    let runner = Runner {
        channels,
        cfg,
        support: &support,
        inner_cap: 1,
    };
    let mut w = w0;
    let mut se = runner.se(&w, profile);
    let initial_se = se;
    let mut trace = Vec::new();
    let mut stats = Vec::new();
    let mut status = RunStatus::MaxIterations;
    for outer in 1..=cfg.max_outer_iterations {
        let before = se;
        let bb = runner.beamforming_block(&mut w, profile, &mut se);
        trace.push(se);
        let mut st = runner.stats(outer, 0.0, &w, profile, se);
        st.beamforming_inner = bb.accepted;
        st.beamforming_status = bb.status;
        st.newton_steps = bb.newton_steps;
        stats.push(st);
        if bb.failed {
            status = RunStatus::SubproblemFailure;
            break;
        }
        if (se - before).abs() / before.abs().max(1e-12) <= cfg.sca_tolerance {
            status = RunStatus::Converged;
            break;
        }
    }
    Ok(OptimizationResult {
        outer_iterations: trace.len(),
        objective_trace: trace,
        final_metrics: PerformanceMetrics::evaluate(&w, profile, channels, cfg),
        feasibility: check_feasibility(&w, profile, cfg, channels),
        final_profile: profile.clone(),
        final_beamformer: w,
        subproblem_stats: stats,
        status,
        initial_spectral_efficiency: initial_se,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::build_channel_set;
    use crate::system_model::{primary_sinr, secondary_sinrs};

    fn small(seed: u64, gamma_db: f64) -> (SystemConfig, ChannelSet) {
        let cfg = SystemConfig {
            num_bs_antennas: 4,
            num_ris_elements: 6,
            num_users: 2,
            min_primary_sinr_db: gamma_db,
            rng_seed: seed,
            ..SystemConfig::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ch = build_channel_set(&cfg, &mut rng).unwrap();
        (cfg, ch)
    }

    #[test]
    fn reseeded_slacks_are_tight() {
        let (cfg, ch) = small(3, 20.0);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let (w, p) = initialize(&cfg, &ch, &mut rng).unwrap();
        let st = reseed_slacks(&w, &p, &ch, &cfg);
        let sinr = secondary_sinrs(&w, &p, &ch, &cfg);
        for k in 0..2 {
            assert!((st.rho[k] - sinr[k]).abs() <= 1e-12 * sinr[k]);
            assert_eq!(st.rho[k], st.eta[k]);
            assert!(st.zeta[k] >= cfg.noise_power());
        }
    }

    #[test]
    fn initialization_is_admissible_and_seeded() {
        let (cfg, ch) = small(4, 20.0);
        let a = initialize(&cfg, &ch, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let b = initialize(&cfg, &ch, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(a.0.w, b.0.w);
        assert_eq!(a.1, b.1);
        assert!(a.0.total_power() <= 0.9 * cfg.max_power() * (1.0 + 1e-12));
        assert!(primary_sinr(&a.0, &a.1, &ch, &cfg) >= cfg.min_primary_sinr() * (1.0 - 1e-9));
        assert!(a.1.max_abs_energy_residual() < 1e-12);
    }

    #[test]
    fn split_support_halves() {
        let s = ElementSupport::split(6);
        assert_eq!(s.reflect, vec![true, true, true, false, false, false]);
        assert_eq!(s.transmit, vec![false, false, false, true, true, true]);
        let p = StarRisProfile::from_polar(&[0.3; 6], &[0.1; 6], &[0.2; 6], &[0.4; 6]);
        let q = s.project(&p);
        for n in 0..6 {
            let e = q.phi_t[n].norm_sqr() + q.phi_r[n].norm_sqr();
            assert!((e - 1.0).abs() < 1e-12);
            assert_eq!(q.phi_t[n].norm() == 0.0, n < 3);
        }
    }

    #[test]
    fn coefficient_surrogate_is_tight_and_conservative() {
        let (cfg, ch) = small(5, 20.0);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (w, p) = initialize(&cfg, &ch, &mut rng).unwrap();
        let st = reseed_slacks(&w, &p, &ch, &cfg);
        let support = ElementSupport::full(6);
        let (prog, layout) = build_coefficient_program(&w, &p, &st, 1.0, &ch, &cfg, &support).unwrap();
        let mut x0 = prog.warm_start.clone().unwrap();
        for ri in layout.rho_index.iter().flatten() {
            x0[*ri] = 1.0;
        }
        // rate constraints come first, each followed by its bound
        for k in 0..2 {
            assert!(prog.constraint_value(2 * k, &x0).abs() < 1e-9);
        }
        let sigma2 = cfg.noise_power();
        for _ in 0..50 {
            let mut x = x0.clone();
            for n in 0..6 {
                for o in [layout.t_offset[n], layout.r_offset[n]].into_iter().flatten() {
                    x[o] += 0.2 * (rng.random::<f64>() - 0.5);
                    x[o + 1] += 0.2 * (rng.random::<f64>() - 0.5);
                }
            }
            let read = |o: Option<usize>| o.map_or(C64::new(0.0, 0.0), |o| C64::new(x[o], x[o + 1]));
            let q = StarRisProfile {
                phi_t: (0..6).map(|n| read(layout.t_offset[n])).collect::<Vec<_>>().into(),
                phi_r: (0..6).map(|n| read(layout.r_offset[n])).collect::<Vec<_>>().into(),
            };
            let eff = effective_channels(&ch, &q);
            for k in 0..2 {
                let rho = st.rho[k] * x[layout.rho_index[k].unwrap()];
                let mut interf = sigma2;
                let mut signal = 0.0;
                for i in 0..2 {
                    let g = eff.secondary_gain(k, &w.column(i)).norm_sqr();
                    if i == k { signal = g } else { interf += g }
                }
                let exact = interf / sigma2 - signal / sigma2 / rho;
                assert!(prog.constraint_value(2 * k, &x) >= exact - 1e-9 * exact.abs().max(1.0));
            }
        }
    }

    #[test]
    fn beamforming_taylor_bound_is_tight_at_expansion() {
        let (cfg, ch) = small(6, 20.0);
        let (w, p) = initialize(&cfg, &ch, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let st = reseed_slacks(&w, &p, &ch, &cfg);
        let eff = effective_channels(&ch, &p);
        let (prog, layout) = build_beamforming_program(&w, &eff, &st, &cfg).unwrap();
        let mut x = prog.warm_start.clone().unwrap();
        for k in 0..2 {
            x[layout.eta_index[k].unwrap()] = 1.0;
            x[layout.zeta_index[k].unwrap()] = 1.0;
        }
        // initial beams lie in the span, so the projection is exact
        for k in 0..2 {
            assert!(prog.constraint_value(4 * k, &x).abs() < 1e-9);
            assert!(prog.constraint_value(4 * k + 1, &x).abs() < 1e-9);
        }
        assert_eq!(span_basis(&[&eff.z_r[0], &eff.z_r[1], &eff.z_t0]).ncols(), layout.rows[0].len());
    }

    #[test]
    fn trace_ascends_and_exit_is_feasible() {
        let (cfg, ch) = small(7, 20.0);
        let r = alternate(&ch, &cfg).unwrap();
        assert!(r.objective_trace[0] >= r.initial_spectral_efficiency - 1e-10);
        for pair in r.objective_trace.windows(2) {
            assert!(pair[1] >= pair[0] - 1e-10);
        }
        assert!(r.feasibility.feasible, "{:?}", r.feasibility);
        assert!(r.final_profile.max_abs_energy_residual() <= 1e-6);
        assert!(r.final_metrics.spectral_efficiency >= r.objective_trace.last().unwrap() - 1e-3);
    }

    #[test]
    fn some_resource_binds_at_exit() {
        for gamma in [0.0, 30.0] {
            let (cfg, ch) = small(8, gamma);
            let r = alternate(&ch, &cfg).unwrap();
            let power = r.final_beamformer.total_power() / cfg.max_power();
            let margin = r.final_metrics.primary_sinr / cfg.min_primary_sinr() - 1.0;
            assert!(power > 1.0 - 1e-3 || margin < 1e-3, "gamma {gamma}: power {power} margin {margin}");
        }
    }

    #[test]
    fn loose_primary_gives_full_power() {
        let mut cfg = small(9, 0.0).0;
        cfg.primary_rx_power_dbm = 20.0;
        let ch = build_channel_set(&cfg, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let r = alternate(&ch, &cfg).unwrap();
        let power = r.final_beamformer.total_power() / cfg.max_power();
        assert!((power - 1.0).abs() < 1e-4, "{power}");
    }

    #[test]
    fn single_user_without_surface_is_matched_filter() {
        let cfg = SystemConfig {
            num_bs_antennas: 3,
            num_ris_elements: 2,
            num_users: 1,
            primary_rx_power_dbm: 20.0,
            ..SystemConfig::default()
        };
        let ch = build_channel_set(&cfg, &mut ChaCha8Rng::seed_from_u64(11)).unwrap();
        let off = StarRisProfile::from_polar(&[0.0; 2], &[0.0; 2], &[0.0; 2], &[0.0; 2]);
        let mut w0 = Beamformer::zeros(3, 1);
        w0.w[(0, 0)] = C64::new((0.5 * cfg.max_power()).sqrt(), 0.0);
        let r = optimize_beamformer_only(&ch, &cfg, &off, w0).unwrap();
        let expect = (1.0 + cfg.max_power() * ch.h[0].norm_squared() / cfg.noise_power()).log2();
        let got = r.final_metrics.spectral_efficiency;
        assert!((got - expect).abs() <= 1e-4 * expect, "{got} vs {expect}");
    }

    #[test]
    fn fixed_point_stays_put() {
        let (cfg, ch) = small(10, 20.0);
        let r = alternate(&ch, &cfg).unwrap();
        let again = optimize_beamformer_only(&ch, &cfg, &r.final_profile, r.final_beamformer.clone()).unwrap();
        let a = r.final_metrics.spectral_efficiency;
        let b = again.final_metrics.spectral_efficiency;
        assert!(b >= a - 1e-10 && b <= a * (1.0 + 1e-3), "{a} -> {b}");
    }
}
