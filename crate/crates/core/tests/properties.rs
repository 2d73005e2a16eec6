use koopman::dataset::{parse_trajectory, snapshot_pairs, Trajectory};
use koopman::dmd::{fit_companion, fit_svd_dmd};
use koopman::numerics::{format_float, spectral_distance, DEFAULT_RTOL};
use koopman::spectral::SpectralModel;
use koopman::systems::{random_stable_matrix, simulate, SystemKind, SystemSpec};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn formatted_floats_parse_back_exactly(v in any::<f64>().prop_filter("finite", |v| v.is_finite())) {
        prop_assert_eq!(format_float(v).parse::<f64>().unwrap().to_bits(), v.to_bits());
    }

    #[test]
    fn csv_round_trip_is_exact(rows in prop::collection::vec(prop::collection::vec(-1e6..1e6f64, 3), 2..12)) {
        let traj = Trajectory::from_states(rows).unwrap();
        let back = parse_trajectory(&traj.to_csv_string()).unwrap();
        prop_assert_eq!(back, traj);
    }

    #[test]
    fn dmd_replays_linear_trajectories(seed in 0u64..10_000, n in 2usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sys = random_stable_matrix(n, &mut rng);
        let x0: Vec<f64> = (0..n).map(|i| 1.0 - 0.3 * i as f64).collect();
        let traj = simulate(&SystemSpec::new(SystemKind::Linear { a: sys.a.clone() }, x0.clone(), 3 * n).unwrap()).unwrap();
        let pair = snapshot_pairs(&traj, false).unwrap();
        let model = fit_svd_dmd(&pair, DEFAULT_RTOL).unwrap();
        let comp = fit_companion(&pair).unwrap();
        prop_assert!(spectral_distance(&model.eigenvalues, &comp.eigenvalues) < 1e-6);
        let pred = model.predict(&x0, 3 * n).unwrap();
        for (k, g) in pred.values.iter().enumerate() {
            for (a, b) in g.iter().zip(&traj.states[k + 1]) {
                prop_assert!((a - b).abs() < 1e-8 * (1.0 + b.abs()));
            }
        }
    }
}
