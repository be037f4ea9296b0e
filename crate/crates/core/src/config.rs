//! Scenario configuration.
//!
//! A [`SystemConfig`] is read from a JSON tree. Every logarithmic quantity
//! carries its unit in the key (`_dbm`, `_db`), and is converted to linear
//! units only through the accessor methods.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};

/// Default initial energy penalty, bits/s/Hz per unit residual per element.
/// Larger values act as a proximal term on the coefficients and stall them.
pub const DEFAULT_PENALTY: f64 = 1e-3;

/// Propagation class of a link, selecting the pathloss exponent.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Propagation {
    Los,
    Nlos,
}

/// Propagation class of every physical link in the scenario.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LinkModel {
    pub bs_ris: Propagation,
    pub bs_ue: Propagation,
    pub bs_primary_rx: Propagation,
    pub ris_ue: Propagation,
    pub ris_primary_rx: Propagation,
}

impl Default for LinkModel {
    fn default() -> Self {
        Self {
            bs_ris: Propagation::Los,
            bs_ue: Propagation::Nlos,
            bs_primary_rx: Propagation::Los,
            ris_ue: Propagation::Los,
            ris_primary_rx: Propagation::Los,
        }
    }
}

/// Extra attenuation applied to `diag(g^H) H` when forming a cascaded channel.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CascadePathloss {
    /// `g` and `H` already carry their own link pathloss; no extra factor.
    LinkProduct,
    /// Apply `PL(BS->RIS) + PL(RIS->endpoint)` (dB) a second time.
    SumOfLinks,
    /// Fixed extra pathloss in dB.
    FixedDb(f64),
}

/// Inner-loop policy of each block of the alternating optimizer.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InnerMode {
    /// Iterate each block to SCA stationarity (or the inner cap).
    Full,
    /// One convexified solve per block per outer iteration.
    Single,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SystemConfig {
    /// M
    pub num_bs_antennas: usize,
    /// N
    pub num_ris_elements: usize,
    /// K
    pub num_users: usize,
    pub max_power_dbm: f64,
    pub min_primary_sinr_db: f64,
    pub bandwidth_hz: f64,
    pub carrier_freq_ghz: f64,
    /// dBm/Hz, shared by the primary receiver and every UE.
    pub noise_density_dbm: f64,
    pub primary_rx_power_dbm: f64,
    /// Initial penalty constant in bits/s/Hz per unit residual. `None` selects
    /// [`DEFAULT_PENALTY`].
    pub penalty_constant: Option<f64>,
    pub penalty_growth: f64,
    pub penalty_growth_period: usize,
    pub penalty_cap_factor: f64,
    pub bs_position: [f64; 3],
    pub ris_position: [f64; 3],
    pub primary_rx_position: [f64; 3],
    pub ue_sampling_radius_m: f64,
    pub pathloss_exponent_los: f64,
    pub pathloss_exponent_nlos: f64,
    pub links: LinkModel,
    pub cascade_pathloss: CascadePathloss,
    /// Complex cascade gain `alpha'` as `[re, im]`.
    pub cascade_gain: [f64; 2],
    pub element_spacing_wavelengths: f64,
    pub sca_tolerance: f64,
    pub solver_tolerance: f64,
    pub max_outer_iterations: usize,
    pub max_inner_iterations: usize,
    pub inner_relative_tolerance: f64,
    pub inner_mode: InnerMode,
    /// Redraw UE positions for every trial (otherwise only the gains change).
    pub redraw_positions: bool,
    pub rng_seed: u64,
}

impl Default for SystemConfig {
    fn default() -> Self {
        Self {
            num_bs_antennas: 16,
            num_ris_elements: 32,
            num_users: 4,
            max_power_dbm: 35.0,
            min_primary_sinr_db: 20.0,
            bandwidth_hz: 1e6,
            carrier_freq_ghz: 28.0,
            noise_density_dbm: -174.0,
            primary_rx_power_dbm: -50.0,
            penalty_constant: None,
            penalty_growth: 5.0,
            penalty_growth_period: 3,
            penalty_cap_factor: 1e6,
            bs_position: [0.0, 25.0, 0.0],
            ris_position: [50.0, 0.0, 0.0],
            primary_rx_position: [60.0, 5.0, 0.0],
            ue_sampling_radius_m: 5.0,
            pathloss_exponent_los: 2.0,
            pathloss_exponent_nlos: 5.0,
            links: LinkModel::default(),
            cascade_pathloss: CascadePathloss::LinkProduct,
            cascade_gain: [1.0, 0.0],
            element_spacing_wavelengths: 0.5,
            sca_tolerance: 1e-4,
            solver_tolerance: 1e-7,
            max_outer_iterations: 20,
            max_inner_iterations: 15,
            inner_relative_tolerance: 1e-4,
            inner_mode: InnerMode::Full,
            redraw_positions: true,
            rng_seed: 1,
        }
    }
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

impl SystemConfig {
    pub fn max_power(&self) -> f64 {
        dbm_to_watts(self.max_power_dbm)
    }

    pub fn min_primary_sinr(&self) -> f64 {
        db_to_linear(self.min_primary_sinr_db)
    }

    pub fn primary_rx_power(&self) -> f64 {
        dbm_to_watts(self.primary_rx_power_dbm)
    }

    /// Noise power in watts over the full bandwidth.
    pub fn noise_power(&self) -> f64 {
        dbm_to_watts(self.noise_power_dbm())
    }

    pub fn noise_power_dbm(&self) -> f64 {
        self.noise_density_dbm + 10.0 * self.bandwidth_hz.log10()
    }

    /// Interference-plus-noise budget `P_Rx / gamma_min` at the primary receiver.
    pub fn interference_budget(&self) -> f64 {
        self.primary_rx_power() / self.min_primary_sinr()
    }

    /// Initial penalty constant in spectral-efficiency units.
    pub fn initial_penalty(&self) -> f64 {
        self.penalty_constant.unwrap_or(DEFAULT_PENALTY)
    }

    pub fn exponent(&self, p: Propagation) -> f64 {
        match p {
            Propagation::Los => self.pathloss_exponent_los,
            Propagation::Nlos => self.pathloss_exponent_nlos,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (m, n, k) = (
            self.num_bs_antennas,
            self.num_ris_elements,
            self.num_users,
        );
        if k < 1 || m < k {
            return Err(Error::Config(format!(
                "need M >= K >= 1, got M={m}, K={k}"
            )));
        }
        if n < 2 || n % 2 != 0 {
            return Err(Error::Config(format!(
                "N must be even and >= 2, got {n}"
            )));
        }
        let finite = [
            ("max_power_dbm", self.max_power_dbm),
            ("min_primary_sinr_db", self.min_primary_sinr_db),
            ("noise_density_dbm", self.noise_density_dbm),
            ("primary_rx_power_dbm", self.primary_rx_power_dbm),
        ];
        for (name, v) in finite {
            if !v.is_finite() {
                return Err(Error::Config(format!("{name} must be finite")));
            }
        }
        let positive = [
            ("bandwidth_hz", self.bandwidth_hz),
            ("carrier_freq_ghz", self.carrier_freq_ghz),
            ("ue_sampling_radius_m", self.ue_sampling_radius_m),
            ("element_spacing_wavelengths", self.element_spacing_wavelengths),
            ("sca_tolerance", self.sca_tolerance),
            ("solver_tolerance", self.solver_tolerance),
            ("inner_relative_tolerance", self.inner_relative_tolerance),
            ("pathloss_exponent_los", self.pathloss_exponent_los),
            ("pathloss_exponent_nlos", self.pathloss_exponent_nlos),
            ("penalty_growth", self.penalty_growth),
            ("penalty_cap_factor", self.penalty_cap_factor),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be > 0, got {v}")));
            }
        }
        if let Some(c) = self.penalty_constant {
            if !(c > 0.0 && c.is_finite()) {
                return Err(Error::Config(format!("penalty_constant must be > 0, got {c}")));
            }
        }
        if self.max_outer_iterations < 1 || self.max_inner_iterations < 1 {
            return Err(Error::Config("iteration caps must be >= 1".into()));
        }
        if self.penalty_growth_period < 1 {
            return Err(Error::Config("penalty_growth_period must be >= 1".into()));
        }
        if self.cascade_gain.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("cascade_gain must be finite".into()));
        }
        if let CascadePathloss::FixedDb(db) = self.cascade_pathloss {
            if !db.is_finite() {
                return Err(Error::Config("cascade fixed_db must be finite".into()));
            }
        }
        for (name, p) in [
            ("bs_position", self.bs_position),
            ("ris_position", self.ris_position),
            ("primary_rx_position", self.primary_rx_position),
        ] {
            if p.iter().any(|v| !v.is_finite()) {
                return Err(Error::Config(format!("{name} must be finite")));
            }
        }
        if self.bs_position == self.ris_position {
            return Err(Error::Geometry("BS and RIS positions coincide".into()));
        }
        if self.bs_position == self.primary_rx_position
            || self.ris_position == self.primary_rx_position
        {
            return Err(Error::Geometry(
                "primary receiver coincides with BS or RIS".into(),
            ));
        }
        Ok(())
    }

    /// Parse and validate a configuration from JSON text.
    pub fn from_json_str(text: &str) -> Result<Self> {
        let cfg: SystemConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Load a configuration file, applying `key=value` overrides before
    /// validation.
    pub fn load(path: impl AsRef<Path>, overrides: &[String]) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut tree: Value = serde_json::from_str(&text)?;
        apply_overrides(&mut tree, overrides)?;
        Self::from_tree(tree)
    }

    /// Default configuration with `key=value` overrides applied.
    pub fn with_overrides(overrides: &[String]) -> Result<Self> {
        SystemConfig::default().overridden(overrides)
    }

    /// A copy with `key=value` overrides applied, validated.
    pub fn overridden(&self, overrides: &[String]) -> Result<Self> {
        let mut tree = serde_json::to_value(self)?;
        apply_overrides(&mut tree, overrides)?;
        Self::from_tree(tree)
    }

    fn from_tree(tree: Value) -> Result<Self> {
        let cfg: SystemConfig = serde_json::from_value(tree)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

/// Apply `a.b.c=value` overrides to a JSON tree. Values are parsed as JSON
/// and fall back to plain strings.
pub fn apply_overrides(tree: &mut Value, overrides: &[String]) -> Result<()> {
    for item in overrides {
        let (key, raw) = item
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override `{item}` is not key=value")))?;
        let value: Value =
            serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
        let mut node = &mut *tree;
        let parts: Vec<&str> = key.split('.').collect();
        for (i, part) in parts.iter().enumerate() {
            let obj = node
                .as_object_mut()
                .ok_or_else(|| Error::Config(format!("override path `{key}` is not an object")))?;
            if i + 1 == parts.len() {
                obj.insert(part.to_string(), value.clone());
                break;
            }
            node = obj
                .entry(part.to_string())
                .or_insert_with(|| Value::Object(Default::default()));
        }
    }
    Ok(())
}
