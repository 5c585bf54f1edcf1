use gansearch::tensor::gradcheck::run_suite;

#[test]
fn every_op_realization_matches_finite_differences() {
    for seed in 0..3 {
        let results = run_suite(seed);
        assert!(results.len() >= 46 * 3);
        let bad: Vec<_> = results.iter().filter(|(_, r)| r.max_rel_error > 1e-4).collect();
        assert!(bad.is_empty(), "seed {seed}: {bad:#?}");
    }
}
