use chronogem_core::baselines::{count_bonus_explore, random_walk_explore, CountBonusConfig};
use chronogem_core::c3po::{evaluate_curve, EvalStop, GoalSet, Policy, ThresholdMode};
use chronogem_core::density::normalize_scores;
use chronogem_core::explore::{chronogem_explore, inverse_density_weights, DiffusionConfig};
use chronogem_core::{rng, EnvSpec, StateSet};
use proptest::prelude::*;

fn env(name: &str) -> EnvSpec {
    EnvSpec::by_name(name).unwrap()
}

fn admissible(env: &EnvSpec, set: &StateSet) -> bool {
    set.states.iter().all(|s| match env {
        EnvSpec::Maze(m) => m.is_free([s[0], s[1]]),
        EnvSpec::Chain(c) => (0..c.links).all(|j| s[j] >= c.joint_limits[j][0] && s[j] <= c.joint_limits[j][1]),
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn explorers_spend_their_closed_form_budget(
        chain in any::<bool>(),
        n in 2usize..60,
        k in 1usize..5,
        t in 0usize..25,
        seed in 0u64..1000,
    ) {
        let e = env(if chain { "chain" } else { "maze" });
        let cfg = DiffusionConfig::for_env(&e, n, k, t, seed);
        let cg = chronogem_explore(&e, &cfg).unwrap();
        prop_assert_eq!(cg.len(), n);
        prop_assert_eq!(cg.meta.env_steps, (k * n * t) as u64);
        prop_assert!(admissible(&e, &cg));
        prop_assert_eq!(&chronogem_explore(&e, &cfg).unwrap(), &cg);

        let rw = random_walk_explore(&e, n, t, seed).unwrap();
        prop_assert_eq!(rw.meta.env_steps, (n * t) as u64);
        prop_assert!(admissible(&e, &rw));

        let cb = count_bonus_explore(&e, &CountBonusConfig::new(n, t, k, 16, seed)).unwrap();
        prop_assert_eq!(cb.len(), n);
        prop_assert_eq!(cb.meta.env_steps, (k * n * t) as u64);
        prop_assert!(admissible(&e, &cb));
    }

    #[test]
    fn inverse_density_weights_are_a_distribution(
        rows in proptest::collection::vec((-30.0f64..30.0, any::<bool>()), 1..200),
        shift in -100.0f64..100.0,
    ) {
        let ld: Vec<f64> = rows.iter().map(|r| r.0).collect();
        let mask: Vec<bool> = rows.iter().map(|r| r.1).collect();
        match inverse_density_weights(&ld, Some(&mask)) {
            Err(_) => prop_assert!(mask.iter().all(|&m| !m)),
            Ok(w) => {
                prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-9);
                for (wi, mi) in w.iter().zip(&mask) {
                    prop_assert!(*wi >= 0.0);
                    if !mi {
                        prop_assert_eq!(*wi, 0.0);
                    }
                }
                let shifted: Vec<f64> = ld.iter().map(|v| v + shift).collect();
                let w2 = inverse_density_weights(&shifted, Some(&mask)).unwrap();
                for (a, b) in w.iter().zip(&w2) {
                    prop_assert!((a - b).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn normalized_scores_span_the_unit_interval(
        scores in proptest::collection::vec(proptest::collection::vec(-50.0f64..50.0, 3), 1..6),
    ) {
        let (norm, summed) = normalize_scores(&scores);
        for (row, raw) in norm.iter().zip(&scores) {
            prop_assert!(row.iter().all(|v| (0.0..=1.0).contains(v)));
            let distinct = raw.iter().any(|v| *v != raw[0]);
            if distinct {
                prop_assert!(row.contains(&0.0));
                prop_assert!(row.contains(&1.0));
            }
        }
        for (j, s) in summed.iter().enumerate() {
            let col: f64 = norm.iter().map(|r| r[j]).sum();
            prop_assert!((s - col).abs() < 1e-12);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn success_curves_are_monotone(seed in 0u64..1000, lo in 0.5f64..20.0, n in 2usize..12) {
        let e = env("maze");
        let set = chronogem_explore(&e, &DiffusionConfig::for_env(&e, 200, 2, 40, seed)).unwrap();
        let goals = GoalSet::split(&e, &set, 100, 50, &mut rng::stream(seed, "split", &[])).unwrap();
        prop_assert_eq!(goals.train.len() + goals.eval.len(), 150);
        let policy = Policy::init(&e, &[16], 1.0, &mut rng::stream(seed, "init", &[]));
        let grid: Vec<f64> = (0..n).map(|i| lo * (1.6f64).powi(i as i32)).collect();
        let curve = evaluate_curve(&e, &policy, &goals.eval, &grid, ThresholdMode::Squared, 40, EvalStop::Horizon, seed)
            .unwrap();
        prop_assert!(curve.success.windows(2).all(|w| w[1] >= w[0]));
        prop_assert!((0.0..=1.0).contains(&curve.auc));
    }
}
