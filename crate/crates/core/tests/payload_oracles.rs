use kiln_core::hrmc::{
    cost, energy, metropolis_step, pair_histogram, run_chain, Configuration, CostParams, HrmcInstance, Point,
};
use kiln_core::model::PayloadParams;
use kiln_core::SplitMix64;
use proptest::prelude::*;

/// Brute-force pair loop: every ordered pair i < j, each bin tested by
/// its own half-open interval.
fn oracle_histogram(points: &[Point], bins: usize, r_max: f64) -> Vec<u64> {
    let width = r_max / bins as f64;
    let mut counts = vec![0u64; bins];
    for i in 0..points.len() {
        for j in 0..points.len() {
            if i >= j {
                continue;
            }
            let r = (points[i][0] - points[j][0]).hypot(points[i][1] - points[j][1]);
            for (b, count) in counts.iter_mut().enumerate() {
                let lo = b as f64 * width;
                let hi = if b + 1 == bins { r_max } else { (b + 1) as f64 * width };
                if r >= lo && r < hi {
                    *count += 1;
                }
            }
        }
    }
    counts
}

fn oracle_energy(points: &[Point], r0: f64, r_floor: f64) -> f64 {
    let mut twice = 0.0;
    for (i, a) in points.iter().enumerate() {
        for (j, b) in points.iter().enumerate() {
            if i != j {
                let r = (a[0] - b[0]).hypot(a[1] - b[1]).max(r_floor);
                twice += (r0 / r).powi(12);
            }
        }
    }
    twice / 2.0
}

fn params() -> CostParams {
    CostParams::from(&PayloadParams::default())
}

#[test]
fn histogram_matches_brute_force_on_random_configurations() {
    let mut rng = SplitMix64::new(2024);
    for trial in 0..100 {
        let config = Configuration::random(16, &mut rng);
        for (bins, r_max) in [(20, 1.5), (7, 0.4), (1, 2.0)] {
            let hist = pair_histogram(&config, bins, r_max);
            assert_eq!(hist.bins, oracle_histogram(config.points(), bins, r_max), "trial {trial}, {bins} bins");
        }
        assert_eq!(pair_histogram(&config, 20, 1.5).total(), 120);
        assert_eq!(pair_histogram(&config, 20, std::f64::consts::SQRT_2 + 1e-12).total(), 120);
    }
}

#[test]
fn cost_matches_oracle() {
    let p = params();
    let mut rng = SplitMix64::new(99);
    let target_cfg = Configuration::random(16, &mut rng);
    let target = pair_histogram(&target_cfg, p.bins, p.r_max);
    let t = oracle_histogram(target_cfg.points(), p.bins, p.r_max);
    for _ in 0..20 {
        let config = Configuration::random(16, &mut rng);
        let h = oracle_histogram(config.points(), p.bins, p.r_max);
        let chi2: f64 = h
            .iter()
            .zip(&t)
            .map(|(&h, &t)| (h as f64 - t as f64).powi(2) / (t.max(1) as f64))
            .sum();
        let e = oracle_energy(config.points(), p.r0, p.r_floor);
        let got = cost(&config, &target, &p).unwrap();
        assert!((got.chi2 - chi2).abs() <= 1e-12 * chi2.max(1.0));
        assert!((got.energy - e).abs() <= 1e-9 * e.max(1.0));
        assert!((got.total - (chi2 + p.weight * e)).abs() <= 1e-9 * got.total.max(1.0));
    }
}

#[test]
fn reference_configuration_fits_its_own_target() {
    let instance = HrmcInstance::generate(&PayloadParams::default());
    let c = cost(&instance.reference, &instance.target, &instance.params).unwrap();
    assert_eq!(c.chi2, 0.0);
    assert!(c.total >= 0.0);
}

#[test]
fn uphill_unit_ratio_accepted_at_e_inverse_rate() {
    let mut rng = SplitMix64::new(17);
    let config = Configuration::random(16, &mut rng);
    let trials = 100_000;
    let mut accepted = 0u32;
    for _ in 0..trials {
        if metropolis_step(&config, 0.0, |_| 1.0, 1.0, 0.05, &mut rng).accepted {
            accepted += 1;
        }
    }
    let freq = f64::from(accepted) / f64::from(trials);
    let expected = (-1.0f64).exp();
    assert!((freq - expected).abs() <= 0.02, "frequency {freq} vs {expected}");
}

#[test]
fn huge_temperature_accepts_nearly_everything() {
    let p = params();
    let mut rng = SplitMix64::new(5);
    let instance = HrmcInstance::generate(&PayloadParams::default());
    let mut config = Configuration::random(16, &mut rng);
    let mut current = cost(&config, &instance.target, &p).unwrap().total;
    let mut accepted = 0;
    for _ in 0..2000 {
        let step = metropolis_step(
            &config,
            current,
            |c| cost(c, &instance.target, &p).unwrap().total,
            1e9,
            0.05,
            &mut rng,
        );
        accepted += u32::from(step.accepted);
        config = step.config;
        current = step.cost;
    }
    assert!(accepted >= 1980, "{accepted} of 2000 accepted");
}

#[test]
fn chains_are_reproducible_and_monotone() {
    let instance = HrmcInstance::generate(&PayloadParams::default());
    let start = instance.initial_configuration(42);
    let run = |seed| run_chain(&start, 0.1, 0.05, 300, seed, &instance.target, &instance.params).unwrap();
    let a = run(11);
    assert_eq!(a, run(11));
    assert_eq!(a.trace[0].0, 0);
    for w in a.trace.windows(2) {
        assert!(w[1].0 > w[0].0);
        assert!(w[1].1 < w[0].1);
    }
    assert_eq!(a.trace.last().unwrap().1, a.best_cost.total);
    assert_eq!(cost(&a.best, &instance.target, &instance.params).unwrap(), a.best_cost);
    assert_ne!(a, run(12));
}

fn points(n: usize) -> impl Strategy<Value = Vec<Point>> {
    prop::collection::vec((0.0..=1.0f64, 0.0..=1.0f64).prop_map(|(x, y)| [x, y]), n)
}

proptest! {
    #[test]
    fn energy_ignores_point_order(pts in points(12), rot in 0usize..12) {
        let mut permuted = pts.clone();
        permuted.rotate_left(rot);
        permuted.swap(0, 11);
        let a = energy(&Configuration::new(pts), 0.1, 1e-3);
        let b = energy(&Configuration::new(permuted), 0.1, 1e-3);
        prop_assert!((a - b).abs() <= 1e-9 * a.max(1.0));
    }

    #[test]
    fn histogram_ignores_point_order(pts in points(10), rot in 0usize..10) {
        let mut permuted = pts.clone();
        permuted.rotate_left(rot);
        prop_assert_eq!(
            pair_histogram(&Configuration::new(pts), 9, 1.5),
            pair_histogram(&Configuration::new(permuted), 9, 1.5)
        );
    }

    #[test]
    fn cost_is_nonnegative_and_zero_on_self(pts in points(8)) {
        let p = CostParams { weight: 0.0, ..params() };
        let config = Configuration::new(pts);
        let target = pair_histogram(&config, p.bins, p.r_max);
        let c = cost(&config, &target, &p).unwrap();
        prop_assert_eq!(c.total, 0.0);
        let other = Configuration::new(vec![[0.5, 0.5]; 8]);
        prop_assert!(cost(&other, &target, &params()).unwrap().total >= 0.0);
    }
}
