//! Small primary-SINR sweep written to CSV, then read back.
//!
//! `cargo run --release --example gamma_sweep -- [output_dir] [trials]`
//! For the full sweep use `star-ris campaign scenarios/gamma_sweep.json`.

use star_ris::harness::{read_convergence_csv, run_campaign, Campaign, SweepAxis};

fn main() -> star_ris::Result<()> {
    let mut args = std::env::args().skip(1);
    let out = args.next().unwrap_or_else(|| "results/gamma_sweep_example".into());
    let trials = args.next().and_then(|s| s.parse().ok()).unwrap_or(3);
    let campaign = Campaign {
        sweep_axis: SweepAxis::GammaMinDb,
        sweep_values: vec![0.0, 10.0, 20.0, 30.0],
        trials_per_point: trials,
        output_dir: out.into(),
        ..Campaign::default()
    };
    let outcome = run_campaign(&campaign)?;
    println!("gamma_min  scheme        mean SE   std");
    for row in &outcome.summary {
        println!(
            "{:>6} dB  {:<12} {:>8.4} {:>6.3}",
            row.swept_value.unwrap_or(f64::NAN),
            row.scheme.as_str(),
            row.mean_spectral_efficiency,
            row.std_spectral_efficiency
        );
    }
    let traces = read_convergence_csv(outcome.output_dir.join("convergence.csv"))?;
    let longest = traces.iter().map(|t| t.trace.len()).max().unwrap_or(0);
    println!(
        "{} traces in convergence.csv, longest {longest} iterations; outputs in {}",
        traces.len(),
        outcome.output_dir.display()
    );
    Ok(())
}
