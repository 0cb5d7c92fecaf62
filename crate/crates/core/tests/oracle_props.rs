mod common;

use flexagg::lp::{solve, LinearProgram};
use flexagg::oracle::{
    minkowski_contains, minkowski_gap, sum_support, support_function, vertex_rank_check,
};
use flexagg::storage::{check_feasible, StorageDevice};
use flexagg::{extreme_action, SignVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `max c·(x_1 + ... + x_n)` over the stacked device constraints.
fn joint_support(devices: &[StorageDevice<f64>], c: &[f64]) -> f64 {
    let d = c.len();
    let mut lp = LinearProgram::new(devices.len() * d);
    for (i, dev) in devices.iter().enumerate() {
        dev.add_to_program(&mut lp, i * d);
        for t in 0..d {
            lp.set_cost(i * d + t, -c[t]);
        }
    }
    let sol = solve(&lp);
    assert!(sol.is_optimal());
    -sol.objective_value
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn single_device_containment_matches_feasibility(seed in any::<u64>(), d in 1usize..7) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let alpha = if rng.random_bool(0.5) { 1.0 } else { 0.9 };
        let dev = common::feasible_general_device(&mut rng, d, alpha);
        let x: Vec<f64> = (0..d).map(|t| rng.random_range(dev.x_lo()[t] - 0.3..=dev.x_hi()[t] + 0.3)).collect();
        let worst = check_feasible(&dev, &x, 0.0).unwrap().worst_violation;
        prop_assume!(worst.abs() > 1e-6);
        prop_assert_eq!(minkowski_contains(&[dev], &x, 1e-7), worst < 0.0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn support_is_additive(seed in any::<u64>(), n in 1usize..=4, d in 1usize..=5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let alpha = if rng.random_bool(0.5) { 1.0 } else { 0.95 };
        let devices = common::fleet(&mut rng, n, d, alpha);
        let c = common::random_unit(&mut rng, d);
        let sum = sum_support(&devices, &c).unwrap();
        let joint = joint_support(&devices, &c);
        prop_assert!((sum - joint).abs() <= 1e-7 * joint.abs().max(1.0), "{} vs {}", sum, joint);
    }
}

#[test]
fn gap_is_zero_inside_and_positive_outside() {
    let dev = StorageDevice::battery(3, 1.0, -1.0, 1.0, 0.0, 2.0, 1.0, 1.0).unwrap();
    let devices = vec![dev.clone(), dev];
    assert!(minkowski_gap(&devices, &[1.5, -2.0, 0.0]).unwrap() <= 1e-9);
    // two units cannot charge 2 kW for two periods from half full
    let gap = minkowski_gap(&devices, &[2.0, 2.0, 0.0]).unwrap();
    assert!(gap > 0.1);
    assert!(!minkowski_contains(&devices, &[2.0, 2.0, 0.0], 1e-7));
}

#[test]
fn rank_check_separates_vertices_from_interior_points() {
    let dev = StorageDevice::battery(4, 1.0, -1.0, 1.0, 0.0, 3.0, 1.0, 1.0).unwrap();
    let y = extreme_action(&dev, &SignVector::new(vec![1, -1, 1, 1]).unwrap()).unwrap();
    assert!(vertex_rank_check(&dev, &y, 1e-9));
    assert!(!vertex_rank_check(&dev, &[0.1, 0.0, -0.2, 0.3], 1e-9));
}

#[test]
fn support_of_a_single_period_battery() {
    let dev = StorageDevice::battery(1, 1.0, -1.0, 1.0, 0.0, 1.0, 1.0, 0.5).unwrap();
    assert!((support_function(&dev, &[1.0]).unwrap() - 0.5f64).abs() <= 1e-12);
    assert!((support_function(&dev, &[-1.0]).unwrap() - 0.5f64).abs() <= 1e-12);
}
