use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use proptest::prelude::*;

use tbma_core::airlink::ReceivedVector;
use tbma_core::detect::{brute_force_loglik_oracle, loglik_interval, oracle_n_max, EdgeDetector, TruncationPolicy};
use tbma_core::exponents::{alpha_chernoff_gaussian, chernoff_info, HypothesisMoments, MomentScope};
use tbma_core::fronthaul::solve_quantization_variance;
use tbma_core::learn::mlp::softmax;
use tbma_core::learn::MlpModel;
use tbma_core::montecarlo::{count_errors, wilson_interval, TraceDetector, Z95};
use tbma_core::rng::stream_rng;
use tbma_core::{Cell, Hypothesis, JointHypothesis, Model, SystemConfig};

fn gaussian(mean: Vec<f64>, a: &[f64]) -> HypothesisMoments {
    let d = mean.len();
    let a = DMatrix::from_row_slice(d, d, a);
    HypothesisMoments {
        mean: DVector::from_vec(mean),
        cov: &a * a.transpose() + DMatrix::identity(d, d) * 0.1,
        label: JointHypothesis::ALL[0],
        scope: MomentScope::Cloud,
        jitter: 0.0,
    }
}

prop_compose! {
    fn pair()(m0 in prop::collection::vec(-3.0f64..3.0, 3), m1 in prop::collection::vec(-3.0f64..3.0, 3),
              a0 in prop::collection::vec(-2.0f64..2.0, 9), a1 in prop::collection::vec(-2.0f64..2.0, 9))
              -> (HypothesisMoments, HypothesisMoments) {
        (gaussian(m0, &a0), gaussian(m1, &a1))
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn chernoff_nonnegative_and_symmetric((a, b) in pair(), alpha in 0.0f64..=1.0) {
        let ab = alpha_chernoff_gaussian(&a, &b, alpha).unwrap();
        let ba = alpha_chernoff_gaussian(&b, &a, 1.0 - alpha).unwrap();
        prop_assert!(ab >= -1e-12);
        prop_assert!((ab - ba).abs() <= 1e-9 * (1.0 + ab.abs()));
    }

    #[test]
    fn chernoff_info_dominates_grid((a, b) in pair()) {
        let c = chernoff_info(&a, &b).unwrap();
        prop_assert!(c.alpha > 0.0 && c.alpha < 1.0);
        for i in 1..20 {
            let v = alpha_chernoff_gaussian(&a, &b, i as f64 / 20.0).unwrap();
            prop_assert!(v <= c.value + 1e-9);
        }
    }

    #[test]
    fn quantization_noise_falls_with_capacity(c in 0.05f64..20.0, dc in 0.01f64..5.0, s2g in 0.0f64..100.0) {
        let at = |cap: f64| {
            let cfg = SystemConfig { fronthaul_capacity: cap, sigma2_g: s2g, ..SystemConfig::default() };
            solve_quantization_variance(&Model::new(cfg).unwrap()).unwrap()
        };
        let (lo, hi) = (at(c), at(c + dc));
        for i in 0..2 {
            prop_assert!(hi.sigma2_q[i] < lo.sigma2_q[i]);
            prop_assert!(lo.residual[i].abs() < 1e-8);
        }
    }

    #[test]
    fn wilson_brackets_the_estimate(n in 1u64..100_000, frac in 0.0f64..=1.0) {
        let k = ((n as f64) * frac).floor() as u64;
        let (lo, hi) = wilson_interval(k, n, Z95);
        let p = k as f64 / n as f64;
        prop_assert!(0.0 <= lo && lo <= p + 1e-15 && p <= hi + 1e-15 && hi <= 1.0);
    }

    #[test]
    fn cloud_network_outputs_a_distribution(seed in any::<u64>(), x in prop::collection::vec(-50.0f64..50.0, 6)) {
        let net = MlpModel::random(&[6, 4, 4], &mut stream_rng(seed, 0)).unwrap();
        let p = net.predict(&x);
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(p.iter().all(|&q| (0.0..=1.0).contains(&q)));
        prop_assert_eq!(net.decide(&x), (0..4).max_by(|&i, &j| p[i].total_cmp(&p[j])).unwrap());
    }

    #[test]
    fn softmax_shift_invariant(z in prop::collection::vec(-700.0f64..700.0, 1..6), shift in -300.0f64..300.0) {
        let a = softmax(&z);
        let b = softmax(&z.iter().map(|v| v + shift).collect::<Vec<_>>());
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn priors_are_a_distribution(rho in 0.0f64..=1.0) {
        let m = Model::new(SystemConfig { rho, ..SystemConfig::default() }).unwrap();
        let total: f64 = JointHypothesis::ALL.iter().map(|&h| m.joint_prior(h)).sum();
        prop_assert!((total - 1.0).abs() < 1e-15);
        for j in Hypothesis::BOTH {
            let c: f64 = Hypothesis::BOTH.iter().map(|&k| m.conditional_prior(j, k)).sum();
            prop_assert!((c - 1.0).abs() < 1e-15);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn likelihood_matches_brute_force(
        lambda in 0.3f64..8.0,
        snr_db in -5.0f64..15.0,
        mu_g in 0.0f64..2.0,
        s2g in 0.0f64..4.0,
        extra in 0.0f64..1.0,
        re in prop::collection::vec(-12.0f64..12.0, 4),
        im in prop::collection::vec(-12.0f64..12.0, 4),
    ) {
        let cfg = SystemConfig { lambda, snr_db, mu_g, sigma2_g: s2g, ..SystemConfig::default() };
        let m = Model::new(cfg).unwrap();
        let y = ReceivedVector { cell: Cell::Two, interval: 0, samples: re.iter().zip(&im).map(|(&a, &b)| Complex64::new(a, b)).collect() };
        let n_max = oracle_n_max(lambda);
        for own in Hypothesis::BOTH {
            for other in Hypothesis::BOTH {
                let got = loglik_interval(&y, own, other, extra, &m, &TruncationPolicy::default()).unwrap();
                let want = brute_force_loglik_oracle(&y, own, other, extra, &m, n_max);
                prop_assert!(((got - want) / want).abs() < 1e-9, "{got} vs {want}");
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn error_counts_ignore_worker_count(seed in any::<u64>(), workers in 2usize..5) {
        let m = Model::new(SystemConfig { l_intervals: 2, ..SystemConfig::default() }).unwrap();
        let edge = EdgeDetector::new(&m, &TruncationPolicy::default());
        let dets: [&dyn TraceDetector; 1] = [&edge];
        let one = count_errors(&m, None, &dets, 1100, seed, 1).unwrap();
        let many = count_errors(&m, None, &dets, 1100, seed, workers).unwrap();
        prop_assert_eq!(one, many);
    }
}
