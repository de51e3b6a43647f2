use std::collections::HashSet;

use siplab::dynamics::{init_product_negbin, InitialProfile};
use siplab::seed::{derive_seed, par_replicas};
use siplab::stats::ReplicaStats;
use siplab::torus::Torus;

#[test]
fn no_collisions_over_a_million_pairs() {
    let mut seen = HashSet::with_capacity(2_000_000);
    for label in ["dyn", "init"] {
        for r in 0..1_000_000u64 {
            assert!(seen.insert(derive_seed(2024, r, label)), "collision at ({r}, {label})");
        }
    }
    assert_eq!(derive_seed(2024, 17, "dyn"), derive_seed(2024, 17, "dyn"));
}

#[test]
fn adjacent_masters_give_decorrelated_means() {
    let torus = Torus::new(1, 16).unwrap();
    let profile = InitialProfile::Constant { level: 1.0 };
    let mean_for = |master: u64| {
        let counts = par_replicas(50, master, "dyn", |rng| {
            Ok(init_product_negbin(&profile, 1.0, torus, rng)?.particle_count() as f64)
        })
        .unwrap();
        ReplicaStats::from_slice(&counts).mean()
    };
    let (mut a, mut b) = (Vec::new(), Vec::new());
    for p in 0..100u64 {
        let s = 10_000 + 2 * p;
        a.push(mean_for(s));
        b.push(mean_for(s + 1));
    }
    let diffs: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x - y).collect();
    let d = ReplicaStats::from_slice(&diffs);
    assert!(d.mean().abs() <= 3.0 * d.se(), "drift {} se {}", d.mean(), d.se());
    let (sa, sb) = (ReplicaStats::from_slice(&a), ReplicaStats::from_slice(&b));
    let cov: f64 = a.iter().zip(&b).map(|(x, y)| (x - sa.mean()) * (y - sb.mean())).sum::<f64>() / 99.0;
    let corr = cov / (sa.variance() * sb.variance()).sqrt();
    assert!(corr.abs() < 0.3, "correlation {corr}");
}
