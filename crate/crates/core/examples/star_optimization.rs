//! Jointly optimize beamformer and STAR-RIS coefficients on one realization.
//!
//! `cargo run --release --example star_optimization -- [KEY=VALUE ...]`

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use star_ris::channel::build_channel_set;
use star_ris::config::{linear_to_db, SystemConfig};
use star_ris::sca::alternate_with_rng;

fn main() -> star_ris::Result<()> {
    let overrides: Vec<String> = std::env::args().skip(1).collect();
    let cfg = SystemConfig::with_overrides(&overrides)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let channels = build_channel_set(&cfg, &mut rng)?;
    let r = alternate_with_rng(&channels, &cfg, &mut rng)?;

    println!("initial SE {:.4} bits/s/Hz", r.initial_spectral_efficiency);
    println!(" iter   SE        penalty   energy res  SINR margin  inner (coef/bf)");
    for s in &r.subproblem_stats {
        println!(
            "{:>5}   {:.5}   {:.1e}   {:.2e}    {:+.2e}    {}/{}",
            s.outer,
            s.spectral_efficiency,
            s.penalty,
            s.max_energy_residual,
            s.primary_sinr_margin,
            s.coefficient_inner,
            s.beamforming_inner
        );
    }
    let m = &r.final_metrics;
    println!("status {:?} after {} iterations", r.status, r.outer_iterations);
    println!(
        "final SE {:.4}, per-user SINR {:?} dB",
        m.spectral_efficiency,
        m.per_user_sinr.iter().map(|s| (linear_to_db(*s) * 10.0).round() / 10.0).collect::<Vec<_>>()
    );
    println!(
        "primary SINR {:.2} dB (floor {} dB), power {:.3} W of {:.3} W",
        linear_to_db(m.primary_sinr),
        cfg.min_primary_sinr_db,
        r.final_beamformer.total_power(),
        cfg.max_power()
    );
    let beta_r = r.final_profile.beta_r();
    let mean_r = beta_r.iter().sum::<f64>() / beta_r.len() as f64;
    println!(
        "mean reflect share {mean_r:.3}, max energy residual {:.1e}, feasible {}",
        r.final_profile.max_abs_energy_residual(),
        r.feasibility.feasible
    );
    Ok(())
}
