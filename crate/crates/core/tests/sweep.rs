use proptest::prelude::*;
use safepg::sweep::{evaluate, pareto_front, records_from_csv, records_to_csv, SweepRecord};
use safepg::trainer::Formulation;
use safepg::{NavEnvConfig, RbfGaussianPolicy, RngStream};

fn noisy_policy() -> RbfGaussianPolicy {
    let mut p = RbfGaussianPolicy::navigation_default();
    let mut rng = RngStream::new(99, 0);
    let theta = (0..p.theta().len()).map(|_| 3.0 * rng.normal()).collect();
    p.set_theta(theta).unwrap();
    p
}

#[test]
fn independent_evaluations_agree() {
    let env = NavEnvConfig::default();
    let policy = noisy_policy();
    let n = 200;
    let pairs = 100;
    let mut within = 0;
    for k in 0..pairs {
        let a = evaluate(&policy, &env, n, &mut RngStream::new(1000 + 2 * k, 1)).unwrap();
        let b = evaluate(&policy, &env, n, &mut RngStream::new(1001 + 2 * k, 1)).unwrap();
        let p = 0.5 * (a.safety_rate + b.safety_rate);
        // the difference of two independent means has variance 2p(1-p)/n
        let bound = 3.0 * (2.0 * p * (1.0 - p) / n as f64).sqrt();
        if (a.safety_rate - b.safety_rate).abs() < bound {
            within += 1;
        }
    }
    assert!(within >= 97, "{within} of {pairs}");
}

#[test]
fn evaluation_replays_exactly() {
    let env = NavEnvConfig::default();
    let policy = noisy_policy();
    let a = evaluate(&policy, &env, 50, &mut RngStream::new(4, 1)).unwrap();
    let b = evaluate(&policy, &env, 50, &mut RngStream::new(4, 1)).unwrap();
    assert_eq!(a, b);
}

fn arb_record() -> impl Strategy<Value = SweepRecord> {
    (
        any::<bool>(),
        0.01f64..100.0,
        0u64..5,
        0.0f64..=1.0,
        -5000.0f64..0.0,
        0.0f64..1e4,
    )
        .prop_map(|(prob, weight, seed, safety, ret, wall)| SweepRecord {
            formulation: if prob {
                Formulation::Probabilistic
            } else {
                Formulation::Cumulative
            },
            weight,
            seed,
            train_episodes: 10_000,
            eval_episodes: 500,
            safety_rate: (safety * 500.0).round() / 500.0,
            mean_return: ret,
            wall_seconds: wall,
        })
}

fn dominates(a: &SweepRecord, b: &SweepRecord) -> bool {
    a.safety_rate >= b.safety_rate
        && a.mean_return >= b.mean_return
        && (a.safety_rate > b.safety_rate || a.mean_return > b.mean_return)
}

proptest! {
    #[test]
    fn front_is_a_non_dominated_subset(records in prop::collection::vec(arb_record(), 0..40)) {
        let front = pareto_front(&records);
        for r in &front {
            prop_assert!(records.contains(r));
        }
        for f in [Formulation::Probabilistic, Formulation::Cumulative] {
            let mine: Vec<_> = front.iter().filter(|r| r.formulation == f).collect();
            for a in &mine {
                for b in &mine {
                    prop_assert!(!dominates(a, b));
                }
            }
            // every input record is matched or dominated by a front member
            for r in records.iter().filter(|r| r.formulation == f) {
                prop_assert!(mine.iter().any(|m| dominates(m, r)
                    || (m.safety_rate == r.safety_rate && m.mean_return == r.mean_return)));
            }
        }
    }

    #[test]
    fn csv_round_trip_is_exact(records in prop::collection::vec(arb_record(), 0..20)) {
        let back = records_from_csv(&records_to_csv(&records)).unwrap();
        prop_assert_eq!(back, records);
    }
}
