//! Loading scenarios, dotted overrides and validation errors.
//!
//! `cargo run --example config_overrides`

use star_ris::config::SystemConfig;
use star_ris::harness::Campaign;

fn main() -> star_ris::Result<()> {
    let root = concat!(env!("CARGO_MANIFEST_DIR"), "/../../scenarios");
    let cfg = SystemConfig::load(format!("{root}/default_config.json"), &[])?;
    println!("default: M={} N={} K={} P_max={} dBm", cfg.num_bs_antennas, cfg.num_ris_elements, cfg.num_users, cfg.max_power_dbm);

    let tuned = cfg.overridden(&["max_power_dbm=30".into(), "links.bs_ue=los".into(), "ris_position=[40,0,0]".into()])?;
    println!("tuned: P_max={} dBm, BS-UE {:?}, RIS at {:?}", tuned.max_power_dbm, tuned.links.bs_ue, tuned.ris_position);

    for bad in ["num_ris_elements=7", "num_users=20", "bandwidth_hz=-1", "typo_key=3"] {
        match cfg.overridden(&[bad.to_string()]) {
            Ok(_) => println!("{bad}: accepted"),
            Err(e) => println!("{bad}: {e}"),
        }
    }

    let sweep = Campaign::load(format!("{root}/elements_sweep.json"))?;
    for point in sweep.points() {
        let c = sweep.config_at(point)?;
        println!("sweep point N={} at P_max={} dBm", c.num_ris_elements, c.max_power_dbm);
    }
    println!("campaign hash {}", &sweep.config_hash()[..16]);
    Ok(())
}
