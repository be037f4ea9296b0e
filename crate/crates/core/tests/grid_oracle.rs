mod common;

use common::{single_user_gain, StarGrid};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use star_ris::channel::{build_channel_set, C64};
use star_ris::config::SystemConfig;
use star_ris::harness::{run_scheme, Scheme};

fn toy(seed: u64) -> SystemConfig {
    SystemConfig {
        num_bs_antennas: 2,
        num_ris_elements: 2,
        num_users: 1,
        rng_seed: seed,
        ..SystemConfig::default()
    }
}

#[test]
fn closed_form_gain_beats_sampled_beamformers() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    use rand::Rng;
    for _ in 0..200 {
        let v = |rng: &mut ChaCha8Rng| -> Vec<C64> {
            (0..3).map(|_| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect()
        };
        let (a, b) = (v(&mut rng), v(&mut rng));
        let (p, c) = (rng.random_range(0.1..2.0), rng.random_range(0.0..1.0));
        let best = single_user_gain(&a, &b, p, c);
        for _ in 0..200 {
            let mut w = v(&mut rng);
            let scale = (p / w.iter().map(|x| x.norm_sqr()).sum::<f64>()).sqrt();
            w.iter_mut().for_each(|x| *x *= scale * rng.random::<f64>());
            let ip = |u: &[C64]| u.iter().zip(&w).map(|(ui, wi)| ui.conj() * wi).sum::<C64>().norm_sqr();
            if ip(&b) <= c {
                assert!(ip(&a) <= best * (1.0 + 1e-9));
            }
        }
    }
}

#[test]
fn certified_bound_holds_on_sampled_points() {
    let cfg = toy(3);
    let ch = build_channel_set(&cfg, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
    let grid = StarGrid::new(&cfg, &ch);
    let full = grid.solve(0.0, 0.4, 3_000_000);
    assert!(full.complete);
    let (pr, pt) = grid.point(&full.best_point);
    for n in 0..2 {
        assert!((pr[n].norm_sqr() + pt[n].norm_sqr() - 1.0).abs() < 1e-12);
    }
    // no sampled grid point beats the certified bound
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    use rand::Rng;
    for _ in 0..2000 {
        let idx: Vec<usize> = (0..6)
            .map(|d| rng.random_range(0..if d % 3 == 2 { common::AMPLITUDES } else { common::PHASES }))
            .collect();
        assert!(grid.solve_box(&idx) <= full.upper_se + 1e-12);
    }
}

#[test]
fn pipeline_reaches_grid_optimum_on_toys() {
    for seed in 0..4 {
        let cfg = toy(seed);
        let ch = build_channel_set(&cfg, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let se = run_scheme(&cfg, Scheme::Star).unwrap().final_metrics.spectral_efficiency;
        let grid = StarGrid::new(&cfg, &ch).solve(0.0, se / 0.95, 2_000_000);
        assert!(grid.complete && grid.best_se <= se / 0.95, "seed {seed}: {se} vs {}", grid.best_se);
    }
}
