use seqtrial_core::estimation::TrialOutcome;
use seqtrial_core::simulation::{run_estimator_study, run_oc, SimConfig};
use seqtrial_core::sub_density::{expected_sample_size, stopping_probabilities, Design};

fn designs() -> Vec<Design> {
    vec![
        Design::new(vec![100, 100], vec![2.18, 2.18]).unwrap(),
        Design::new(vec![98, 98, 576], vec![2.12, 2.01, 2.02]).unwrap(),
        Design::new(vec![30, 30, 30, 30], vec![2.8, 2.5, 2.3, 2.1]).unwrap(),
    ]
}

#[test]
fn monte_carlo_matches_quadrature() {
    let reps = 40_000;
    for (i, d) in designs().iter().enumerate() {
        for (j, theta) in [0.0, 0.15].into_iter().enumerate() {
            let sim = run_oc(&SimConfig::new(d.clone(), theta, reps, 7_000 + (10 * i + j) as u64)).unwrap();
            let exact = stopping_probabilities(d, theta);
            for (p_mc, p_q) in sim.stop_probabilities().iter().zip(&exact.stop) {
                assert!((p_mc - p_q).abs() <= 3.0 * sim.binomial_se(*p_q).max(1e-12), "{d:?} {theta}: {p_mc} vs {p_q}");
            }
            for (p_mc, p_q) in sim.reject_probabilities().iter().zip(&exact.reject) {
                assert!((p_mc - p_q).abs() <= 3.0 * sim.binomial_se(*p_q).max(1e-12), "{d:?} {theta}: {p_mc} vs {p_q}");
            }
            let en = expected_sample_size(d, theta);
            assert!((sim.mean_n - en).abs() < 0.02 * en);
        }
    }
}

#[test]
fn results_do_not_depend_on_worker_count() {
    let d = Design::new(vec![100, 100], vec![2.18, 2.18]).unwrap();
    let base = SimConfig::new(d, 0.1, 3_000, 99).with_estimators().with_paths();
    let runs: Vec<_> = [1, 4, 8]
        .into_iter()
        .map(|t| run_estimator_study(&base.clone().with_threads(t)).unwrap().sim)
        .collect();
    assert_eq!(runs[0], runs[1]);
    assert_eq!(runs[0], runs[2]);
    let again = run_estimator_study(&base.clone().with_threads(4)).unwrap().sim;
    assert_eq!(runs[0], again);
}

#[test]
fn simulated_paths_are_valid_outcomes() {
    for d in designs() {
        let sim = run_oc(&SimConfig::new(d.clone(), 0.1, 2_000, 5).with_paths()).unwrap();
        let paths = sim.paths.expect("paths requested");
        assert_eq!(paths.len(), 2_000);
        for p in &paths {
            let rebuilt = TrialOutcome::new(d.clone(), p.stage_means().to_vec()).unwrap();
            assert_eq!(rebuilt.stop_stage(), p.stop_stage());
        }
        let counted: u64 = sim.stop_counts.iter().sum();
        assert_eq!(counted, 2_000);
    }
}
