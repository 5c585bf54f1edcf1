use gansearch::controller::{ControllerConfig, ControllerParams};
use gansearch::eval::metrics::{fid_from_moments, proxy_fid, proxy_inception_score};
use gansearch::search::{op_distribution_history, shape_reward, Baseline};
use gansearch::search_space::{random_genome, Genome};
use gansearch::tensor::hinge_losses;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn rows_to_probs(raw: &[f64], k: usize) -> Vec<f64> {
    raw.chunks(k)
        .flat_map(|r| {
            let s: f64 = r.iter().sum();
            r.iter().map(move |v| v / s).collect::<Vec<_>>()
        })
        .collect()
}

fn small_controller() -> ControllerConfig {
    ControllerConfig {
        hidden: 8,
        ..ControllerConfig::default()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn reward_is_monotone(a in -5.0f64..20.0, b in -5.0f64..20.0, lo in 0.0f64..3.0, span in 0.5f64..15.0) {
        let hi = lo + span;
        let (x, y) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(shape_reward(x, lo, hi) <= shape_reward(y, lo, hi));
        prop_assert!(shape_reward(x, lo, hi) >= 0.0);
    }

    #[test]
    fn baseline_stays_within_observed_range(values in prop::collection::vec(-10.0f64..10.0, 1..30)) {
        let mut b = Baseline::new(0.95);
        for &v in &values {
            b.update(v);
        }
        let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let v = b.value.unwrap();
        prop_assert!(v >= lo - 1e-12 && v <= hi + 1e-12);
    }

    #[test]
    fn inception_score_ignores_class_relabeling(
        raw in prop::collection::vec(0.01f64..1.0, 4 * 20),
        perm in Just((0..4usize).collect::<Vec<_>>()).prop_shuffle(),
    ) {
        let k = 4;
        let probs = rows_to_probs(&raw, k);
        let permuted: Vec<f64> = probs.chunks(k).flat_map(|r| perm.iter().map(|&j| r[j]).collect::<Vec<_>>()).collect();
        let (a, sa) = proxy_inception_score(&probs, k, 5).unwrap();
        let (b, sb) = proxy_inception_score(&permuted, k, 5).unwrap();
        prop_assert!((a - b).abs() < 1e-12);
        prop_assert!((sa - sb).abs() < 1e-12);
        prop_assert!((1.0 - 1e-12..=k as f64 + 1e-12).contains(&a));
    }

    #[test]
    fn fid_is_symmetric(x in prop::collection::vec(-2.0f64..2.0, 3 * 12), y in prop::collection::vec(-2.0f64..2.0, 3 * 12)) {
        let a = proxy_fid(&x, &y, 3).unwrap();
        let b = proxy_fid(&y, &x, 3).unwrap();
        prop_assert!((a - b).abs() <= 1e-6 * (1.0 + a.abs()), "{} vs {}", a, b);
        prop_assert!(a >= 0.0);
    }

    #[test]
    fn fid_vanishes_only_for_matching_moments(
        m in prop::collection::vec(-1.0f64..1.0, 3),
        l in prop::collection::vec(-1.0f64..1.0, 9),
        shift in 0.1f64..2.0,
    ) {
        let l = DMatrix::from_row_slice(3, 3, &l);
        let c = &l * l.transpose() + DMatrix::identity(3, 3) * 0.1;
        let mu = DVector::from_vec(m);
        prop_assert!(fid_from_moments(&mu, &c, &mu, &c).unwrap().abs() < 1e-6);
        let moved = mu.add_scalar(shift);
        prop_assert!(fid_from_moments(&mu, &c, &moved, &c).unwrap() > 1e-3);
        let scaled = &c * (1.0 + shift);
        prop_assert!(fid_from_moments(&mu, &c, &mu, &scaled).unwrap() > 1e-6);
    }

    #[test]
    fn diagonal_fid_matches_closed_form(
        dr in prop::collection::vec(0.05f64..4.0, 4),
        dg in prop::collection::vec(0.05f64..4.0, 4),
        mr in prop::collection::vec(-1.0f64..1.0, 4),
        mg in prop::collection::vec(-1.0f64..1.0, 4),
    ) {
        let expect: f64 = dr.iter().zip(&dg).map(|(a, b)| (a.sqrt() - b.sqrt()).powi(2)).sum::<f64>()
            + mr.iter().zip(&mg).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
        let got = fid_from_moments(
            &DVector::from_vec(mr.clone()),
            &DMatrix::from_diagonal(&DVector::from_vec(dr.clone())),
            &DVector::from_vec(mg.clone()),
            &DMatrix::from_diagonal(&DVector::from_vec(dg.clone())),
        )
        .unwrap();
        prop_assert!((got - expect).abs() < 1e-6);
    }

    #[test]
    fn genome_records_round_trip(seed in any::<u64>()) {
        let g = random_genome(seed);
        prop_assert_eq!(Genome::from_record(&g.to_record()).unwrap(), g);
    }

    #[test]
    fn op_frequency_rows_sum_to_one(seeds in prop::collection::vec(any::<u64>(), 1..12)) {
        let batch: Vec<Genome> = seeds.iter().map(|&s| random_genome(s)).collect();
        for row in op_distribution_history(&[batch]) {
            for seg in &row.segments {
                prop_assert!((seg.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn sampled_genomes_rescore_to_their_trace(seed in any::<u64>()) {
        let c = ControllerParams::init(small_controller(), seed);
        let trace = c.sample(&mut ChaCha8Rng::seed_from_u64(seed));
        prop_assert!(trace.genome.is_valid());
        let again = c.log_prob(&trace.genome).unwrap();
        prop_assert!((again.total_log_prob - trace.total_log_prob).abs() < 1e-12);
        prop_assert!(trace.total_log_prob <= 0.0);
    }

    #[test]
    fn hinge_discriminator_loss_is_nonnegative(
        real in prop::collection::vec(-5.0f64..5.0, 1..10),
        fake in prop::collection::vec(-5.0f64..5.0, 1..10),
    ) {
        let l = hinge_losses(&real, &fake, &fake);
        prop_assert!(l.d_loss >= 0.0);
        let mean_fake = fake.iter().sum::<f64>() / fake.len() as f64;
        prop_assert!((l.g_loss + mean_fake).abs() < 1e-12);
    }
}
