use hsom::prelude::*;
use proptest::prelude::*;

fn mean_fraction(model: &HsomModel, level: usize) -> Option<f64> {
    let f: Vec<f64> = model
        .leaves()
        .into_iter()
        .filter(|(l, _)| *l == level)
        .map(|(_, leaf)| leaf.majority_fraction)
        .collect();
    (!f.is_empty()).then(|| f.iter().sum::<f64>() / f.len() as f64)
}

#[test]
fn deeper_leaves_are_at_least_as_pure_on_four_blobs() {
    let mut compared = 0;
    for seed in 0..5 {
        let data = normalize_l2(&SyntheticSpec::new(4, 5_000, 4, 10.0).unwrap().generate(seed).unwrap());
        let model = train_sequential(&data, &GrowthConfig::new(GridDim::square(3).unwrap(), seed)).unwrap();
        if let (Some(one), Some(two)) = (mean_fraction(&model, 1), mean_fraction(&model, 2)) {
            assert!(two >= one, "seed {seed}: depth-2 purity {two} < depth-1 purity {one}");
            compared += 1;
        }
    }
    assert!(compared > 0, "no model had leaves at both depths");
}

#[test]
fn a_thousand_test_samples_each_reach_one_leaf() {
    let data = normalize_l2(&SyntheticSpec::new(4, 6_000, 8, 4.0).unwrap().generate(1).unwrap());
    let split = split_train_test(&data, 0.8, 1).unwrap();
    let model = train_sequential(&split.train, &GrowthConfig::new(GridDim::square(3).unwrap(), 1)).unwrap();
    for x in split.test.features().rows().take(1000) {
        let (label, hops) = model.descend(x).unwrap();
        assert!(label <= 1);
        assert!((1..=model.depth).contains(&hops));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn trained_trees_keep_their_invariants(
        seed in 0u64..1_000,
        side in 1usize..=4,
        max_depth in 1usize..=4,
        tau in 0.2f64..2.0,
        blobs in 1usize..=4,
        sep in 1.0f64..10.0,
    ) {
        let data = SyntheticSpec::new(blobs, 1_200, 3, sep).unwrap().generate(seed).unwrap();
        let config = GrowthConfig {
            tau,
            max_depth,
            ..GrowthConfig::new(GridDim::square(side).unwrap(), seed)
        };
        let model = train_sequential(&data, &config).unwrap();
        prop_assert!(model.validate().is_ok());
        prop_assert!(model.depth <= max_depth);
        prop_assert_eq!(model.root.sample_count(), data.len());
        let held: usize = model.leaves().iter().map(|(_, l)| l.sample_count).sum();
        prop_assert_eq!(held, data.len());
        for x in data.features().rows() {
            let (label, hops) = model.descend(x).unwrap();
            prop_assert!(label <= 1);
            prop_assert!(hops <= max_depth);
        }
    }

    #[test]
    fn any_finite_vector_is_routed(xs in proptest::collection::vec(-1e6f64..1e6, 3)) {
        let data = SyntheticSpec::new(2, 600, 3, 5.0).unwrap().generate(4).unwrap();
        let model = train_sequential(&data, &GrowthConfig::new(GridDim::square(2).unwrap(), 4)).unwrap();
        prop_assert!(model.predict(&xs).unwrap() <= 1);
    }
}
