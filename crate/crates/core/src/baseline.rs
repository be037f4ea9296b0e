//! Comparison schemes: a reflect-only surface next to a transmit-only one,
//! each with half the elements, and a random-phase reference.
//!
//! The conventional scheme reuses the alternating SCA loop with
//! [`ElementSupport::split`]: element `n < N/2` may only reflect and the rest
//! may only transmit. Both halves share the position and the BS link of the
//! STAR-RIS, so a paired run sees the same channel rows.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{CVector, ChannelSet};
use crate::config::SystemConfig;
use crate::error::{Error, Result};
use crate::sca::{initialize, optimize_beamformer_only, run_alternating, ElementSupport, OptimizationResult};
use crate::system_model::StarRisProfile;

/// Unit-modulus phase shifts of the two half surfaces.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitRisProfile {
    /// Reflect-only half, serving the secondary users.
    pub psi_r: CVector,
    /// Transmit-only half, facing the primary receiver.
    pub psi_t: CVector,
}

impl SplitRisProfile {
    /// Read the halves out of a profile on the split support.
    pub fn from_profile(profile: &StarRisProfile) -> Result<Self> {
        let n = profile.num_elements();
        if n % 2 != 0 {
            return Err(Error::Shape(format!("split surface needs an even N, got {n}")));
        }
        let half = n / 2;
        Ok(Self {
            psi_r: profile.phi_r.rows(0, half).into_owned(),
            psi_t: profile.phi_t.rows(half, half).into_owned(),
        })
    }

    pub fn to_profile(&self) -> StarRisProfile {
        let half = self.psi_r.len();
        let mut phi_r = CVector::zeros(2 * half);
        let mut phi_t = CVector::zeros(2 * half);
        phi_r.rows_mut(0, half).copy_from(&self.psi_r);
        phi_t.rows_mut(half, half).copy_from(&self.psi_t);
        StarRisProfile { phi_t, phi_r }
    }

    /// Largest `| |psi| - 1 |` over both halves.
    pub fn max_amplitude_deviation(&self) -> f64 {
        self.psi_r
            .iter()
            .chain(self.psi_t.iter())
            .map(|z| (z.norm() - 1.0).abs())
            .fold(0.0, f64::max)
    }
}

/// Conventional scheme with initial phases from a stream seeded by `cfg.rng_seed`.
pub fn optimize_conventional(channels: &ChannelSet, cfg: &SystemConfig) -> Result<OptimizationResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    optimize_conventional_with_rng(channels, cfg, &mut rng)
}

pub fn optimize_conventional_with_rng<R: Rng + ?Sized>(
    channels: &ChannelSet,
    cfg: &SystemConfig,
    rng: &mut R,
) -> Result<OptimizationResult> {
    let n = channels.num_elements();
    if n % 2 != 0 {
        return Err(Error::Config(format!("conventional scheme needs an even N, got {n}")));
    }
    run_alternating(channels, cfg, &ElementSupport::split(n), rng)
}

/// Random phases with an equal energy split; only the beamformer is optimized.
pub fn random_phase_reference<R: Rng + ?Sized>(
    channels: &ChannelSet,
    cfg: &SystemConfig,
    rng: &mut R,
) -> Result<OptimizationResult> {
    let (w0, profile) = initialize(cfg, channels, rng)?;
    optimize_beamformer_only(channels, cfg, &profile, w0)
}
