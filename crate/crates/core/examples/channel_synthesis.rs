//! Draw one channel realization and print link strengths.
//!
//! `cargo run --example channel_synthesis -- [seed]`

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use star_ris::channel::{build_channel_set, distance, pathloss_db};
use star_ris::config::SystemConfig;

fn db(power: f64) -> f64 {
    10.0 * power.log10()
}

fn main() -> star_ris::Result<()> {
    let seed = std::env::args().nth(1).map_or(Ok(1), |s| s.parse()).unwrap_or(1);
    let cfg = SystemConfig { rng_seed: seed, ..SystemConfig::default() };
    let ch = build_channel_set(&cfg, &mut ChaCha8Rng::seed_from_u64(seed))?;

    let d = distance(cfg.bs_position, cfg.ris_position);
    println!(
        "BS-RIS: {d:.1} m, pathloss {:.1} dB, |H|_F^2 {:.1} dB",
        pathloss_db(d, cfg.carrier_freq_ghz, cfg.pathloss_exponent_los)?,
        db(ch.bs_ris.norm_squared())
    );
    println!(
        "primary Rx: direct {:.1} dB, via surface {:.1} dB",
        db(ch.h0.norm_squared()),
        db(ch.cascaded_primary.norm_squared())
    );
    for (k, p) in ch.ue_positions.iter().enumerate() {
        println!(
            "UE {k} at ({:5.2}, {:5.2}): direct {:6.1} dB, via surface {:6.1} dB",
            p[0],
            p[1],
            db(ch.h[k].norm_squared()),
            db(ch.cascaded[k].norm_squared())
        );
    }
    println!("noise {:.1} dBm", db(cfg.noise_power()) + 30.0);
    Ok(())
}
