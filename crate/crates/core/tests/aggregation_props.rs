mod common;

use std::collections::HashSet;

use flexagg::aggregation::{
    aggregate, disaggregate, find_weights, normalise_weights, sample_directions,
};
use flexagg::container::{read_flexibility, write_flexibility};
use flexagg::oracle::{minkowski_contains, sum_support};
use flexagg::storage::{check_feasible, StorageDevice};
use flexagg::{Error, VertexFlexibilityG};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_weights(rng: &mut ChaCha8Rng, g: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..g)
        .map(|_| {
            if rng.random_bool(0.3) {
                0.0
            } else {
                rng.random_range(0.0..1.0)
            }
        })
        .collect();
    if raw.iter().sum::<f64>() == 0.0 {
        let mut w = vec![0.0; g];
        w[rng.random_range(0..g)] = 1.0;
        return w;
    }
    normalise_weights(&raw)
}

#[test]
fn disaggregation_is_consistent_for_many_weights() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let devices = common::fleet(&mut rng, 5, 8, 0.95);
    let flex = aggregate(&devices, &sample_directions(8, 40, 3).unwrap()).unwrap();
    for _ in 0..100 {
        let w = random_weights(&mut rng, flex.num_vertices());
        let parts = disaggregate(&flex, &w).unwrap();
        let agg = flex.combine(&w).unwrap();
        for t in 0..8 {
            let s: f64 = parts.iter().map(|p| p[t]).sum();
            assert!((s - agg[t]).abs() <= 1e-9);
        }
        for (dev, p) in devices.iter().zip(&parts) {
            assert!(check_feasible(dev, p, 1e-7).unwrap().feasible);
        }
    }
}

#[test]
fn aggregation_is_independent_of_thread_count() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let devices = common::fleet(&mut rng, 12, 10, 1.0);
    let dirs = sample_directions(10, 64, 5).unwrap();
    let parallel = aggregate(&devices, &dirs).unwrap();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .unwrap();
    let serial = pool.install(|| aggregate(&devices, &dirs).unwrap());
    assert_eq!(parallel, serial);
}

#[test]
fn weights_recover_convex_combinations() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let devices = common::fleet(&mut rng, 3, 5, 1.0);
    let flex = aggregate(&devices, &sample_directions(5, 12, 1).unwrap()).unwrap();
    let w = random_weights(&mut rng, 12);
    let x = flex.combine(&w).unwrap();
    let back = find_weights(&flex, &x, 1e-9).unwrap();
    let again = flex.combine(&back).unwrap();
    assert!(x
        .iter()
        .zip(again.iter())
        .all(|(a, b)| (a - b).abs() <= 1e-8));

    let far: Vec<f64> = x.iter().map(|v| v + 1e3).collect();
    assert!(matches!(
        find_weights(&flex, &far, 1e-9),
        Err(Error::NotRepresentable { .. })
    ));
}

#[test]
fn container_round_trip_preserves_columns() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let devices = common::fleet(&mut rng, 4, 6, 0.95);
    let flex = aggregate(&devices, &sample_directions(6, 30, 9).unwrap()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("flex.bin");
    write_flexibility(&flex, &p).unwrap();
    let back: VertexFlexibilityG<f64> = read_flexibility(&p).unwrap();
    assert_eq!(back, flex);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn direction_sets_follow_the_count_rule(d in 1usize..14, g in 1usize..300, seed in any::<u64>()) {
        let set = sample_directions(d, g, seed).unwrap();
        let full = 1usize << d;
        prop_assert_eq!(set.len(), g.max(2).min(full));
        let distinct: HashSet<Vec<i8>> = set.vectors.iter().map(|u| u.as_slice().to_vec()).collect();
        prop_assert_eq!(distinct.len(), set.len());
        prop_assert!(distinct.contains(&vec![1; d]));
        prop_assert!(distinct.contains(&vec![-1; d]));
        prop_assert_eq!(sample_directions(d, g, seed).unwrap(), set);
        prop_assert!(sample_directions(d, 0, seed).is_err());
    }

    #[test]
    fn summed_columns_are_in_the_minkowski_sum(seed in any::<u64>(), n in 1usize..4, d in 1usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let devices = common::fleet(&mut rng, n, d, 1.0);
        let flex = aggregate(&devices, &sample_directions(d, 6, seed).unwrap()).unwrap();
        for col in flex.v_agg.columns() {
            prop_assert!(minkowski_contains(&devices, &col.to_vec(), 1e-7));
        }
    }

    #[test]
    fn support_bounds_every_column(seed in any::<u64>(), n in 1usize..4, d in 1usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let devices = common::fleet(&mut rng, n, d, 0.95);
        let flex = aggregate(&devices, &sample_directions(d, 8, seed).unwrap()).unwrap();
        let c = common::random_unit(&mut rng, d);
        let h = sum_support(&devices, &c).unwrap();
        for col in flex.v_agg.columns() {
            let v: f64 = col.iter().zip(&c).map(|(a, b)| a * b).sum();
            prop_assert!(v <= h + 1e-7);
        }
    }
}

#[test]
fn single_precision_pipeline() {
    let dev = StorageDevice::<f32>::battery(6, 1.0, -1.0, 1.0, 0.0, 2.0, 0.95, 1.0).unwrap();
    let flex = aggregate(
        &[dev.clone(), dev.clone()],
        &sample_directions(6, 16, 1).unwrap(),
    )
    .unwrap();
    let w = vec![1.0f32 / 16.0; 16];
    for p in disaggregate(&flex, &w).unwrap() {
        assert!(check_feasible(&dev, &p, 1e-5).unwrap().feasible);
    }
}
