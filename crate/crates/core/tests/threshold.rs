use netstab::lattice::{Geometry, RateEstimate};
use netstab::protocols::{expedient, monolithic};
use netstab::threshold::*;
use netstab::NoiseParams;
use proptest::prelude::*;

/// A point on the toy scaling law `rate = 0.1 (x / 0.01)^((d + 1) / 2)`,
/// which crosses exactly at `x = 0.01`.
fn toy(x: f64, d: usize, samples: usize) -> SweepPoint {
    let rate = (0.1 * (x / 0.01).powf((d + 1) as f64 / 2.0)).min(1.0);
    let failures = (rate * samples as f64).round() as usize;
    point(NoiseParams::local(x, 0.1).unwrap(), d, RateEstimate::from_counts(samples, failures))
}

fn point(noise: NoiseParams, d: usize, estimate: RateEstimate) -> SweepPoint {
    SweepPoint {
        protocol: "TOY".into(),
        noise,
        distance: d,
        rounds: d,
        geometry: Geometry::Toric,
        estimate,
        seed: 0,
        recipe: "marginal",
        favor: None,
        missing: 0.0,
        truncated_mass: 0.0,
        budget_exceeded: false,
    }
}

fn grid(xs: &[f64], ds: &[usize], samples: usize) -> Vec<SweepPoint> {
    xs.iter().flat_map(|&x| ds.iter().map(move |&d| toy(x, d, samples))).collect()
}

#[test]
fn brackets_a_known_crossing() {
    let pts = grid(&[0.006, 0.008, 0.012, 0.014], &[4, 6], 1_000_000);
    let c = find_crossing(&pts, SweepAxis::Local).unwrap();
    assert_eq!(c, CrossingResult::Interval(0.008, 0.012));
    assert!(c.within(0.008, 0.012));
    assert!(!c.within(0.009, 0.012));
    let three = grid(&[0.006, 0.008, 0.012, 0.014], &[4, 6, 8], 1_000_000);
    assert_eq!(find_crossing(&three, SweepAxis::Local).unwrap(), c);
}

#[test]
fn one_sided_sweeps_are_unresolved() {
    let below = grid(&[0.004, 0.006, 0.008], &[4, 6], 1_000_000);
    assert!(find_crossing(&below, SweepAxis::Local).unwrap().interval().is_none());
    let above = grid(&[0.012, 0.014], &[4, 6], 1_000_000);
    assert!(find_crossing(&above, SweepAxis::Local).unwrap().interval().is_none());
}

#[test]
fn noisy_points_do_not_resolve() {
    let pts = grid(&[0.006, 0.014], &[4, 6], 30);
    assert!(matches!(find_crossing(&pts, SweepAxis::Local).unwrap(), CrossingResult::Unresolved(_)));
    let single = grid(&[0.006, 0.014], &[4], 1_000_000);
    assert!(matches!(find_crossing(&single, SweepAxis::Local).unwrap(), CrossingResult::Unresolved(_)));
    assert!(matches!(find_crossing(&[], SweepAxis::Local).unwrap(), CrossingResult::Unresolved(_)));
}

#[test]
fn conflicting_duplicates_are_errors() {
    let mut pts = grid(&[0.006, 0.014], &[4, 6], 1_000_000);
    let mut dup = pts[0].clone();
    dup.estimate = RateEstimate::from_counts(1_000_000, 1);
    pts.push(dup);
    assert!(find_crossing(&pts, SweepAxis::Local).is_err());
}

#[test]
fn reversed_scaling_is_reported() {
    // larger code better at high noise: not a threshold
    let mut pts = grid(&[0.006, 0.014], &[4, 6], 1_000_000);
    for p in &mut pts {
        let x = if p.noise.p_g == 0.006 { 0.014 } else { 0.006 };
        p.noise = NoiseParams::local(x, 0.1).unwrap();
    }
    let c = find_crossing(&pts, SweepAxis::Local).unwrap();
    assert!(c.interval().is_none(), "{c}");
}

#[test]
fn network_axis_uses_p_n() {
    let pts: Vec<SweepPoint> = [0.05, 0.15]
        .iter()
        .flat_map(|&pn| {
            [4, 6].map(|d| {
                let mut p = toy(pn / 10.0, d, 1_000_000);
                p.noise = NoiseParams::local(0.006, pn).unwrap();
                p
            })
        })
        .collect();
    assert_eq!(find_crossing(&pts, SweepAxis::Network).unwrap(), CrossingResult::Interval(0.05, 0.15));
}

#[test]
fn csv_has_one_row_per_point() {
    let pts = grid(&[0.006, 0.014], &[4, 6], 1000);
    let csv = points_csv(&pts);
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some(CSV_HEADER));
    let columns = CSV_HEADER.split(',').count();
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), pts.len());
    assert!(rows.iter().all(|r| r.split(',').count() == columns));
    assert_eq!(sci(0.006), "6.00000000000e-3");
    let c = find_crossing(&pts, SweepAxis::Local).unwrap();
    assert!(summary(&pts, SweepAxis::Local, &c).ends_with(&format!("{c}\n")));
}

#[test]
fn point_seeds_are_distinct_and_stable() {
    let a = NoiseParams::local(0.006, 0.1).unwrap();
    let b = NoiseParams::local(0.006, 0.11).unwrap();
    let seeds = [point_seed(1, &a, 4, 4), point_seed(1, &a, 6, 6), point_seed(1, &b, 4, 4), point_seed(2, &a, 4, 4), point_seed(1, &a, 4, 5)];
    for i in 0..seeds.len() {
        for j in i + 1..seeds.len() {
            assert_ne!(seeds[i], seeds[j]);
        }
    }
    assert_eq!(point_seed(1, &a, 4, 4), seeds[0]);
}

#[test]
fn noiseless_sweep_never_fails() {
    let cfg = SweepConfig::new(expedient(), vec![3], 200, 1);
    let pts = sweep_local(&cfg, &[0.0], 0.0).unwrap();
    assert_eq!(pts.len(), 1);
    assert_eq!(pts[0].estimate.failures, 0);
}

#[test]
fn network_noise_hurts() {
    let cfg = SweepConfig::new(expedient(), vec![3], 3000, 4);
    let pts = sweep_network(&cfg, &[0.0, 0.15], 0.006).unwrap();
    let (clean, noisy) = (&pts[0], &pts[1]);
    assert_eq!(clean.noise.p_n, 0.0);
    assert!(noisy.rate() - clean.rate() > 3.0 * noisy.stderr().hypot(clean.stderr()));
}

#[test]
fn rates_grow_with_local_noise() {
    let cfg = SweepConfig::new(monolithic(), vec![3, 5], 2000, 7);
    let pts = sweep_local(&cfg, &[0.002, 0.02], 0.0).unwrap();
    assert_eq!(pts.len(), 4);
    for d in [3, 5] {
        let at = |x: f64| pts.iter().find(|p| p.distance == d && p.noise.p_g == x).unwrap();
        assert!(at(0.02).rate() > at(0.002).rate());
    }
}

#[test]
fn single_points_rerun_alone() {
    let cfg = SweepConfig::new(monolithic(), vec![3, 4], 300, 9);
    let both = sweep_local(&cfg, &[0.004, 0.01], 0.0).unwrap();
    let alone = sweep_local(&SweepConfig { distances: vec![4], ..cfg.clone() }, &[0.01], 0.0).unwrap();
    let same = both.iter().find(|p| p.distance == 4 && p.noise.p_g == 0.01).unwrap();
    assert_eq!(&alone[0], same);
    assert!(sweep_local(&cfg, &[], 0.0).is_err());
}

proptest! {
    #[test]
    fn crossing_ignores_order_and_duplicates(order in Just((0..10).collect::<Vec<usize>>()).prop_shuffle(), dups in prop::collection::vec(0usize..10, 0..5)) {
        let base = grid(&[0.004, 0.006, 0.008, 0.012, 0.014], &[4, 6], 1_000_000);
        let mut pts: Vec<SweepPoint> = order.iter().map(|&i| base[i].clone()).collect();
        pts.extend(dups.iter().map(|&i| base[i].clone()));
        prop_assert_eq!(find_crossing(&pts, SweepAxis::Local).unwrap(), find_crossing(&base, SweepAxis::Local).unwrap());
    }
}
