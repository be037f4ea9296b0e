//! STAR-RIS against the split reflect/transmit surface and random phases,
//! paired on the same channels.
//!
//! `cargo run --release --example scheme_comparison -- [trials]`

use star_ris::config::SystemConfig;
use star_ris::harness::{run_single, Campaign, Scheme};

fn main() {
    let trials: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(5);
    let seeds = Campaign::default();
    let mut totals = [0.0; 3];
    println!("trial  {:>8} {:>13} {:>13}", "star", "conventional", "random_phase");
    for t in 0..trials {
        let cfg = SystemConfig { rng_seed: seeds.trial_seed(t), ..SystemConfig::default() };
        let se: Vec<f64> = Scheme::ALL.iter().map(|&s| run_single(&cfg, s).final_spectral_efficiency).collect();
        println!("{t:>5}  {:>8.4} {:>13.4} {:>13.4}", se[0], se[1], se[2]);
        for (acc, v) in totals.iter_mut().zip(&se) {
            *acc += v;
        }
    }
    let n = trials as f64;
    println!(
        "mean   {:>8.4} {:>13.4} {:>13.4}",
        totals[0] / n,
        totals[1] / n,
        totals[2] / n
    );
    println!("STAR-RIS gain over conventional: {:.1}%", 100.0 * (totals[0] / totals[1] - 1.0));
}
