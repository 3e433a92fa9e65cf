use proptest::prelude::*;

use renewal::constants::tune_alpha;
use renewal::harness::{run_ensemble, run_replication, run_traces, Algorithm, Experiment, GreedyFilter};
use renewal::metrics::{cumulative_ratio, power_ratio};
use renewal::model::AlgoParams;
use renewal::scenarios::{ScenarioSpec, SystemKind, SYSTEM2_P_AV};

fn system2(dist: u32) -> ScenarioSpec {
    ScenarioSpec::stationary(SystemKind::System2 { p_av: SYSTEM2_P_AV }, dist).unwrap()
}

fn exp(scenario: ScenarioSpec, algorithm: Algorithm, horizon: u64, replications: u64, seed: u64) -> Experiment {
    Experiment {
        scenario,
        algorithm,
        horizon,
        replications,
        seed,
        window: 50,
    }
}

#[test]
fn system1_adaptive_long_run_keeps_invariants() {
    let s = ScenarioSpec::stationary(SystemKind::System1, 1).unwrap();
    let alpha = tune_alpha(&s.bounds()).unwrap();
    let trace = run_replication(&exp(s, Algorithm::Adaptive(AlgoParams::new(10.0, alpha, vec![])), 10_000, 1, 1), 0).unwrap();
    assert_eq!(trace.len(), 10_000);
    assert!(trace.records.iter().all(|r| r.t.is_finite() && r.r.is_finite()));
}

#[test]
fn greedy_never_exceeds_the_power_budget() {
    let e = exp(
        system2(1),
        Algorithm::Greedy {
            filter: GreedyFilter::NonpositivePenalties,
        },
        2000,
        3,
        4,
    );
    let s = run_ensemble(&e, Some(2)).unwrap();
    assert!(s.power_ratio.unwrap().iter().all(|&p| p <= SYSTEM2_P_AV + 1e-12));
    assert!(s.mean_j.is_none() && s.mean_norm_q.is_none());
}

#[test]
fn dpp_summary_reports_queue_norms() {
    let s = run_ensemble(&exp(system2(2), Algorithm::DppRatio { v: 50.0 }, 500, 2, 4), None).unwrap();
    assert!(s.mean_norm_q.is_some());
    assert!(s.mean_j.is_none());
    assert!(s.window_ratio[..50].iter().all(Option::is_none));
    assert!(s.window_ratio[50..].iter().all(Option::is_some));
}

#[test]
fn idle_only_policy_has_zero_power() {
    // a single idle row per task
    let spec = renewal::scenarios::FiniteSupportSpec::from_rows(&[(1.0, vec![vec![1.0, 0.0]])]).unwrap();
    let s = ScenarioSpec::stationary(SystemKind::FiniteSupport { distributions: vec![spec] }, 1).unwrap();
    let trace = run_replication(&exp(s, Algorithm::Greedy { filter: GreedyFilter::None }, 10, 1, 0), 0).unwrap();
    let energy = vec![0.0; 10];
    assert_eq!(power_ratio(&energy, &trace.durations(), 10).unwrap(), 0.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn ensemble_means_commute_with_cumulative_sums(seed in 0u64..1000, reps in 1u64..5, horizon in 1u64..200) {
        let e = exp(system2(1), Algorithm::DppRatio { v: 20.0 }, horizon, reps, seed);
        let traces = run_traces(&e, None).unwrap();
        let s = run_ensemble(&e, None).unwrap();
        let mut cum_of_means = 0.0;
        for k in 0..horizon as usize {
            cum_of_means += s.mean_r[k];
            let mean_of_cums = traces
                .iter()
                .map(|t| t.records[..=k].iter().map(|r| r.r).sum::<f64>())
                .sum::<f64>()
                / reps as f64;
            prop_assert!((cum_of_means - mean_of_cums).abs() <= 1e-12 * (1.0 + mean_of_cums.abs()));
        }
        let k = horizon as usize;
        prop_assert_eq!(s.cum_ratio[k - 1], cumulative_ratio(&s.mean_r, &s.mean_t, k).unwrap());
    }

    #[test]
    fn thread_count_never_changes_results(seed in 0u64..1000, threads in 1usize..6) {
        let e = exp(system2(2), Algorithm::DppRatio { v: 10.0 }, 100, 5, seed);
        prop_assert_eq!(run_ensemble(&e, Some(threads)).unwrap(), run_ensemble(&e, Some(1)).unwrap());
    }
}
