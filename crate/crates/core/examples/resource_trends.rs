//! Mean STAR-RIS spectral efficiency over transmit power and surface size.
//!
//! `cargo run --release --example resource_trends -- [trials]`

use star_ris::config::SystemConfig;
use star_ris::harness::{run_single, Campaign, Scheme};

fn main() {
    let trials: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(4);
    let seeds = Campaign::default();
    let powers = [25.0, 30.0, 35.0];
    let sizes = [16, 32];
    print!("{:>10}", "P_max\\N");
    for n in sizes {
        print!("{n:>10}");
    }
    println!();
    for p in powers {
        print!("{:>7} dBm", p);
        for n in sizes {
            let cfg = SystemConfig { max_power_dbm: p, num_ris_elements: n, ..SystemConfig::default() };
            let mean = (0..trials)
                .map(|t| {
                    let c = SystemConfig { rng_seed: seeds.trial_seed(t), ..cfg.clone() };
                    run_single(&c, Scheme::Star).final_spectral_efficiency
                })
                .sum::<f64>()
                / trials as f64;
            print!("{mean:>10.3}");
        }
        println!();
    }
}
