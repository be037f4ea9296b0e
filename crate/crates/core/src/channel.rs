//! Line-of-sight mmWave channel synthesis.
//!
//! Every link is a single LoS path: a complex gain, a distance-dependent
//! pathloss and uniform-linear-array responses at each multi-antenna end.
//! Both arrays lie along the y axis, so the array phase is driven by the
//! y direction cosine `sin(azimuth) cos(elevation)`.

use std::f64::consts::PI;

use nalgebra::{Complex, DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::config::{CascadePathloss, Propagation, SystemConfig};
use crate::error::{Error, Result};

pub type C64 = Complex<f64>;
pub type CVector = DVector<C64>;
pub type CMatrix = DMatrix<C64>;

/// Pathloss in dB: `32.4 + 10 c log10(d) + 20 log10(f)` with `d` in meters and
/// `f` in GHz.
pub fn pathloss_db(distance_m: f64, freq_ghz: f64, exponent: f64) -> Result<f64> {
    if !(distance_m > 0.0) || !(freq_ghz > 0.0) {
        return Err(Error::Domain(format!(
            "pathloss needs d > 0 and f > 0 (d={distance_m}, f={freq_ghz})"
        )));
    }
    Ok(32.4 + 10.0 * exponent * distance_m.log10() + 20.0 * freq_ghz.log10())
}

/// Linear amplitude attenuation `1/sqrt(PL)` for a pathloss in dB.
pub fn amplitude_from_db(pl_db: f64) -> f64 {
    10f64.powf(-pl_db / 20.0)
}

/// Uniform-linear-array response with unit-modulus entries, entry 0 equal to 1.
pub fn array_response(
    num_elements: usize,
    azimuth: f64,
    elevation: f64,
    spacing_over_wavelength: f64,
) -> CVector {
    let step = 2.0 * PI * spacing_over_wavelength * azimuth.sin() * elevation.cos();
    CVector::from_fn(num_elements, |n, _| C64::from_polar(1.0, step * n as f64))
}

/// Azimuth and elevation of the direction from `from` to `to`.
pub fn direction_angles(from: [f64; 3], to: [f64; 3]) -> Result<(f64, f64)> {
    let d = [to[0] - from[0], to[1] - from[1], to[2] - from[2]];
    let horiz = d[0].hypot(d[1]);
    if horiz == 0.0 && d[2] == 0.0 {
        return Err(Error::Geometry(format!(
            "coincident positions {from:?} and {to:?}"
        )));
    }
    Ok((d[1].atan2(d[0]), d[2].atan2(horiz)))
}

pub fn distance(a: [f64; 3], b: [f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

/// Circularly-symmetric complex normal sample with unit variance.
pub fn complex_normal<R: Rng + ?Sized>(rng: &mut R) -> C64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// The single-ended links of the scenario.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Link {
    /// BS -> primary receiver (`h0`).
    BsPrimary,
    /// BS -> UE (`h_k`).
    BsUe,
    /// STAR-RIS -> primary receiver (`g0`).
    RisPrimary,
    /// STAR-RIS -> UE (`g_k`).
    RisUe,
}

impl Link {
    fn origin(self, cfg: &SystemConfig) -> [f64; 3] {
        match self {
            Link::BsPrimary | Link::BsUe => cfg.bs_position,
            Link::RisPrimary | Link::RisUe => cfg.ris_position,
        }
    }

    fn elements(self, cfg: &SystemConfig) -> usize {
        match self {
            Link::BsPrimary | Link::BsUe => cfg.num_bs_antennas,
            Link::RisPrimary | Link::RisUe => cfg.num_ris_elements,
        }
    }

    fn propagation(self, cfg: &SystemConfig) -> Propagation {
        match self {
            Link::BsPrimary => cfg.links.bs_primary_rx,
            Link::BsUe => cfg.links.bs_ue,
            Link::RisPrimary => cfg.links.ris_primary_rx,
            Link::RisUe => cfg.links.ris_ue,
        }
    }
}

fn link_pathloss_db(cfg: &SystemConfig, from: [f64; 3], to: [f64; 3], p: Propagation) -> Result<f64> {
    let d = distance(from, to);
    if d == 0.0 {
        return Err(Error::Geometry(format!("coincident positions {from:?} and {to:?}")));
    }
    pathloss_db(d, cfg.carrier_freq_ghz, cfg.exponent(p))
}

/// Rank-one BS -> STAR-RIS channel `H = alpha / sqrt(PL) a_r a_t^H` (N x M).
pub fn synthesize_bs_ris_channel<R: Rng + ?Sized>(cfg: &SystemConfig, rng: &mut R) -> Result<CMatrix> {
    let alpha = complex_normal(rng);
    bs_ris_with_gain(cfg, alpha)
}

fn bs_ris_with_gain(cfg: &SystemConfig, alpha: C64) -> Result<CMatrix> {
    let (bs, ris) = (cfg.bs_position, cfg.ris_position);
    let pl = link_pathloss_db(cfg, bs, ris, cfg.links.bs_ris)?;
    let (az_t, el_t) = direction_angles(bs, ris)?;
    let (az_r, el_r) = direction_angles(ris, bs)?;
    let s = cfg.element_spacing_wavelengths;
    let a_r = array_response(cfg.num_ris_elements, az_r, el_r, s);
    let a_t = array_response(cfg.num_bs_antennas, az_t, el_t, s);
    Ok((a_r * a_t.adjoint()) * (alpha * amplitude_from_db(pl)))
}

/// Single-ended LoS channel `alpha / sqrt(PL) a(theta, psi)` from the link's
/// array (BS or STAR-RIS) to `endpoint`.
pub fn synthesize_direct_channel<R: Rng + ?Sized>(
    cfg: &SystemConfig,
    link: Link,
    endpoint: [f64; 3],
    rng: &mut R,
) -> Result<CVector> {
    let alpha = complex_normal(rng);
    direct_with_gain(cfg, link, endpoint, alpha)
}

fn direct_with_gain(cfg: &SystemConfig, link: Link, endpoint: [f64; 3], alpha: C64) -> Result<CVector> {
    let origin = link.origin(cfg);
    let pl = link_pathloss_db(cfg, origin, endpoint, link.propagation(cfg))?;
    let (az, el) = direction_angles(origin, endpoint)?;
    let a = array_response(link.elements(cfg), az, el, cfg.element_spacing_wavelengths);
    Ok(a * (alpha * amplitude_from_db(pl)))
}

/// Cascaded channel `(gain / sqrt(PL')) diag(g^H) H`.
pub fn synthesize_cascaded(g: &CVector, h: &CMatrix, cascade_gain: C64, cascade_pl_db: f64) -> Result<CMatrix> {
    if g.len() != h.nrows() {
        return Err(Error::Shape(format!(
            "g has {} entries but H has {} rows",
            g.len(),
            h.nrows()
        )));
    }
    let scale = cascade_gain * amplitude_from_db(cascade_pl_db);
    let mut out = h.clone();
    for (n, mut row) in out.row_iter_mut().enumerate() {
        row *= g[n].conj() * scale;
    }
    Ok(out)
}

/// `K` points uniform over the disk of radius `r` around the STAR-RIS, z = 0.
pub fn sample_ue_positions<R: Rng + ?Sized>(cfg: &SystemConfig, rng: &mut R) -> Vec<[f64; 3]> {
    let c = cfg.ris_position;
    (0..cfg.num_users)
        .map(|_| {
            let rad = cfg.ue_sampling_radius_m * rng.random::<f64>().sqrt();
            let ang = 2.0 * PI * rng.random::<f64>();
            [c[0] + rad * ang.cos(), c[1] + rad * ang.sin(), 0.0]
        })
        .collect()
}

/// One realization of every channel in the scenario.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelSet {
    /// BS -> primary Rx, M.
    pub h0: CVector,
    /// BS -> UE k, K x M.
    pub h: Vec<CVector>,
    /// BS -> STAR-RIS, N x M.
    pub bs_ris: CMatrix,
    /// STAR-RIS -> primary Rx, N.
    pub g0: CVector,
    /// STAR-RIS -> UE k, K x N.
    pub g: Vec<CVector>,
    /// Cascaded BS-RIS-Rx, N x M.
    pub cascaded_primary: CMatrix,
    /// Cascaded BS-RIS-UE k, K x (N x M).
    pub cascaded: Vec<CMatrix>,
    pub ue_positions: Vec<[f64; 3]>,
}

impl ChannelSet {
    pub fn num_users(&self) -> usize {
        self.h.len()
    }

    pub fn num_antennas(&self) -> usize {
        self.h0.len()
    }

    pub fn num_elements(&self) -> usize {
        self.g0.len()
    }

    /// Multiply every secondary-side channel (`h_k`, `g_k`, `G_k`) by a
    /// common unit phase.
    pub fn rotate_secondary(&mut self, phase: f64) {
        let r = C64::from_polar(1.0, phase);
        for v in &mut self.h {
            *v *= r;
        }
        for v in &mut self.g {
            *v *= r;
        }
        for m in &mut self.cascaded {
            *m *= r;
        }
    }
}

fn cascade_pl_db(cfg: &SystemConfig, endpoint: [f64; 3], ris_link: Propagation) -> Result<f64> {
    Ok(match cfg.cascade_pathloss {
        CascadePathloss::LinkProduct => 0.0,
        CascadePathloss::FixedDb(db) => db,
        CascadePathloss::SumOfLinks => {
            link_pathloss_db(cfg, cfg.bs_position, cfg.ris_position, cfg.links.bs_ris)?
                + link_pathloss_db(cfg, cfg.ris_position, endpoint, ris_link)?
        }
    })
}

/// Build a full [`ChannelSet`].
///
/// Draw order: UE positions (from `rng`, or from a stream fixed by
/// `rng_seed` when positions are not redrawn), then the gain of `H`, `h0`,
/// `g0`, and finally `h_k`, `g_k` per user.
pub fn build_channel_set<R: Rng + ?Sized>(cfg: &SystemConfig, rng: &mut R) -> Result<ChannelSet> {
    cfg.validate()?;
    let ue_positions = if cfg.redraw_positions {
        sample_ue_positions(cfg, rng)
    } else {
        let mut fixed = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
        sample_ue_positions(cfg, &mut fixed)
    };
    let bs_ris = synthesize_bs_ris_channel(cfg, rng)?;
    let h0 = synthesize_direct_channel(cfg, Link::BsPrimary, cfg.primary_rx_position, rng)?;
    let g0 = synthesize_direct_channel(cfg, Link::RisPrimary, cfg.primary_rx_position, rng)?;
    let mut h = Vec::with_capacity(cfg.num_users);
    let mut g = Vec::with_capacity(cfg.num_users);
    for &p in &ue_positions {
        h.push(synthesize_direct_channel(cfg, Link::BsUe, p, rng)?);
        g.push(synthesize_direct_channel(cfg, Link::RisUe, p, rng)?);
    }
    let gain = C64::new(cfg.cascade_gain[0], cfg.cascade_gain[1]);
    let cascaded_primary = synthesize_cascaded(
        &g0,
        &bs_ris,
        gain,
        cascade_pl_db(cfg, cfg.primary_rx_position, cfg.links.ris_primary_rx)?,
    )?;
    let cascaded = g
        .iter()
        .zip(&ue_positions)
        .map(|(gk, &p)| synthesize_cascaded(gk, &bs_ris, gain, cascade_pl_db(cfg, p, cfg.links.ris_ue)?))
        .collect::<Result<Vec<_>>>()?;
    Ok(ChannelSet {
        h0,
        h,
        bs_ris,
        g0,
        g,
        cascaded_primary,
        cascaded,
        ue_positions,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn pathloss_values() {
        assert_eq!(pathloss_db(1.0, 1.0, 2.0).unwrap(), 32.4);
        // 32.4 + 20 + 20 log10(28)
        assert!((pathloss_db(10.0, 28.0, 2.0).unwrap() - 81.3431).abs() < 0.01);
        assert!((pathloss_db(100.0, 28.0, 5.0).unwrap() - 161.3431).abs() < 0.01);
    }

    #[test]
    fn pathloss_domain_errors() {
        assert!(matches!(pathloss_db(0.0, 28.0, 2.0), Err(Error::Domain(_))));
        assert!(matches!(pathloss_db(-1.0, 28.0, 2.0), Err(Error::Domain(_))));
        assert!(matches!(pathloss_db(1.0, 0.0, 2.0), Err(Error::Domain(_))));
    }

    #[test]
    fn pathloss_monotone_beyond_one_meter() {
        let mut prev = pathloss_db(1.0001, 28.0, 2.0).unwrap();
        for i in 1..200 {
            let d = 1.0 + i as f64 * 0.5;
            let v = pathloss_db(d, 28.0, 2.0).unwrap();
            assert!(v > prev);
            assert!(pathloss_db(d, 28.0, 2.5).unwrap() > v);
            prev = v;
        }
    }

    #[test]
    fn array_response_examples() {
        let a = array_response(4, 0.0, 0.0, 0.5);
        assert!(a.iter().all(|z| (z - C64::new(1.0, 0.0)).norm() < 1e-15));
        let b = array_response(2, PI / 2.0, 0.0, 0.5);
        assert!((b[0] - C64::new(1.0, 0.0)).norm() < 1e-15);
        assert!((b[1] - C64::new(-1.0, 0.0)).norm() < 1e-12);
        let c = array_response(64, 0.3, -0.7, 0.5);
        assert!(c.iter().all(|z| (z.norm() - 1.0).abs() < 1e-12));
    }

    #[test]
    fn unit_bs_ris_matrix() {
        let alpha = C64::new(1.0, 0.0);
        let a = array_response(1, 0.2, 0.0, 0.5);
        let h = (a.clone() * a.adjoint()) * (alpha * amplitude_from_db(0.0));
        assert_eq!(h[(0, 0)], C64::new(1.0, 0.0));
    }

    #[test]
    fn bs_ris_is_rank_one_with_expected_norm() {
        let cfg = SystemConfig::default();
        let alpha = C64::new(0.3, -1.1);
        let h = bs_ris_with_gain(&cfg, alpha).unwrap();
        let pl = pathloss_db(distance(cfg.bs_position, cfg.ris_position), 28.0, 2.0).unwrap();
        let expected = alpha.norm() * ((cfg.num_ris_elements * cfg.num_bs_antennas) as f64).sqrt()
            * amplitude_from_db(pl);
        assert!((h.norm() - expected).abs() / expected < 1e-12);
        let sv = h.clone().svd(false, false).singular_values;
        assert!(sv[1] / sv[0] < 1e-10);
    }

    #[test]
    fn direct_channel_norm_and_distance_scaling() {
        let mut cfg = SystemConfig::default();
        cfg.links.bs_ue = Propagation::Los;
        let alpha = C64::new(0.8, 0.6);
        let p1 = [10.0, 25.0, 0.0];
        let p2 = [20.0, 25.0, 0.0];
        let h1 = direct_with_gain(&cfg, Link::BsUe, p1, alpha).unwrap();
        let h2 = direct_with_gain(&cfg, Link::BsUe, p2, alpha).unwrap();
        let pl1 = pathloss_db(10.0, 28.0, 2.0).unwrap();
        let expected = alpha.norm() * (cfg.num_bs_antennas as f64).sqrt() * amplitude_from_db(pl1);
        assert!((h1.norm() - expected).abs() / expected < 1e-12);
        assert!((h2.norm() / h1.norm() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn cascaded_structure() {
        let mut r = rng(3);
        let g = CVector::from_fn(5, |_, _| complex_normal(&mut r));
        let h = CMatrix::from_fn(5, 3, |_, _| complex_normal(&mut r));
        let exact = synthesize_cascaded(&g, &h, C64::new(1.0, 0.0), 0.0).unwrap();
        assert_eq!(exact, CMatrix::from_diagonal(&g.map(|z| z.conj())) * &h);
        let ones = CVector::from_element(5, C64::new(1.0, 0.0));
        assert_eq!(synthesize_cascaded(&ones, &h, C64::new(1.0, 0.0), 0.0).unwrap(), h);
        let gain = C64::new(0.0, 2.0);
        let scaled = synthesize_cascaded(&g, &h, gain, 20.0).unwrap();
        for n in 0..5 {
            for m in 0..3 {
                let want = g[n].conj() * h[(n, m)] * gain * 0.1;
                assert!((scaled[(n, m)] - want).norm() < 1e-14);
            }
        }
        assert!(synthesize_cascaded(&g, &CMatrix::zeros(4, 3), gain, 0.0).is_err());
    }

    #[test]
    fn ue_positions_inside_disk() {
        let cfg = SystemConfig::default();
        let pts = sample_ue_positions(&cfg, &mut rng(9));
        assert_eq!(pts.len(), cfg.num_users);
        for p in pts {
            assert!(distance(p, cfg.ris_position) <= cfg.ue_sampling_radius_m);
            assert_eq!(p[2], 0.0);
        }
        let mut tiny = cfg.clone();
        tiny.ue_sampling_radius_m = 1e-12;
        for p in sample_ue_positions(&tiny, &mut rng(1)) {
            assert!(distance(p, cfg.ris_position) < 1e-11);
        }
    }

    #[test]
    fn mean_ue_distance_is_two_thirds_radius() {
        let mut cfg = SystemConfig::default();
        cfg.num_users = 100_000;
        cfg.num_bs_antennas = 100_000;
        let pts = sample_ue_positions(&cfg, &mut rng(17));
        let mean = pts.iter().map(|&p| distance(p, cfg.ris_position)).sum::<f64>() / pts.len() as f64;
        let want = 2.0 / 3.0 * cfg.ue_sampling_radius_m;
        assert!((mean - want).abs() / want < 0.02, "{mean} vs {want}");
    }

    #[test]
    fn channel_set_shapes_and_determinism() {
        let cfg = SystemConfig::default();
        let a = build_channel_set(&cfg, &mut rng(42)).unwrap();
        let b = build_channel_set(&cfg, &mut rng(42)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.h0.len(), 16);
        assert_eq!(a.h.len(), 4);
        assert!(a.h.iter().all(|v| v.len() == 16));
        assert_eq!(a.bs_ris.shape(), (32, 16));
        assert_eq!(a.g0.len(), 32);
        assert_eq!(a.g.len(), 4);
        assert!(a.g.iter().all(|v| v.len() == 32));
        assert_eq!(a.cascaded_primary.shape(), (32, 16));
        assert_eq!(a.cascaded.len(), 4);
        assert!(a.cascaded.iter().all(|m| m.shape() == (32, 16)));
        for (k, gk) in a.g.iter().enumerate() {
            let want = CMatrix::from_diagonal(&gk.map(|z| z.conj())) * &a.bs_ris;
            assert!((&a.cascaded[k] - want).norm() <= 1e-12 * a.cascaded[k].norm());
        }
        let c = build_channel_set(&cfg, &mut rng(43)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn coincident_bs_and_ris_is_a_geometry_error() {
        let mut cfg = SystemConfig::default();
        cfg.ris_position = cfg.bs_position;
        assert!(matches!(synthesize_bs_ris_channel(&cfg, &mut rng(0)), Err(Error::Geometry(_))));
    }
}
