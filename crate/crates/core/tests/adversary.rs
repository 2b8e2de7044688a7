use mininfo::adversary::{
    agent_bounds, cramer_rao_bounds, default_horizon, estimate, mse_report, simulate_paths, NoSample,
};
use mininfo::fixtures;
use mininfo::synthesis::{synthesize, Agent, Mode, SolverOptions};
use mininfo::StationaryPolicy;

fn example1_policy(p: f64) -> StationaryPolicy {
    StationaryPolicy::from_named(
        &fixtures::example1(),
        &[("s0", "alpha", p), ("s0", "beta", 1.0 - p), ("s1", "alpha", 0.5), ("s1", "beta", 0.5)],
    )
    .unwrap()
}

#[test]
fn same_seed_same_paths() {
    let m = fixtures::fig4a();
    let agent = Agent::Stationary(StationaryPolicy::uniform(&m));
    let a = simulate_paths(&m, &agent, 500, default_horizon(&m), 3).unwrap();
    let b = simulate_paths(&m, &agent, 500, default_horizon(&m), 3).unwrap();
    let c = simulate_paths(&m, &agent, 500, default_horizon(&m), 4).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn paths_follow_the_model() {
    let m = fixtures::fig4a();
    let agent = Agent::Stationary(StationaryPolicy::uniform(&m));
    for path in simulate_paths(&m, &agent, 200, 10_000, 1).unwrap() {
        assert_eq!(path.states[0], m.initial());
        for pair in path.states.windows(2) {
            let possible = m.actions(pair[0]).iter().any(|a| a.prob_to(pair[1]) > 0.0);
            assert!(possible, "{pair:?}");
        }
    }
}

#[test]
fn example1_bounds_match_closed_form() {
    // s0 is visited once: bound 1 / iota = 2p(1-p); s1 is reached with
    // probability p and visited p times: bound p^2 / (p * 2)
    let m = fixtures::example1();
    for p in [0.2, 0.38736, 0.7] {
        let b = cramer_rao_bounds(&m, &example1_policy(p)).unwrap();
        let s0 = b.states.iter().find(|s| s.state == "s0").unwrap();
        let s1 = b.states.iter().find(|s| s.state == "s1").unwrap();
        assert!((s0.bound - 2.0 * p * (1.0 - p)).abs() < 1e-12);
        assert!((s1.bound - p / 2.0).abs() < 1e-12);
        assert!(b.corollary <= b.sum);
    }
}

#[test]
fn empirical_mse_at_the_initial_state_matches_its_bound() {
    // s0 is visited exactly once per path, so the frequency estimator's
    // total MSE is bound / n
    let m = fixtures::example1();
    let p = 0.3;
    let agent = Agent::Stationary(example1_policy(p));
    let n = 400;
    let reps = 300;
    let mut sum = 0.0;
    for seed in 0..reps {
        let paths = simulate_paths(&m, &agent, n, default_horizon(&m), seed).unwrap();
        let report = mse_report(estimate(&paths, &m), &m, &agent, NoSample::Uniform).unwrap();
        let s0 = report.states.iter().find(|s| s.state == "s0").unwrap();
        sum += s0.mse.unwrap();
    }
    let scaled = sum / reps as f64 * n as f64;
    let bound = 2.0 * p * (1.0 - p);
    assert!((scaled - bound).abs() < 0.1 * bound, "{scaled} vs {bound}");
}

#[test]
fn switch_paths_stop_at_the_switch() {
    let m = fixtures::fig5a();
    let s = synthesize(&m, Mode::Switch, &SolverOptions::default()).unwrap();
    let file = mininfo::synthesis::PolicyFile::from_synthesis(&m, &s).unwrap().unwrap();
    let agent = mininfo::synthesis::load_policy_file(&m, &file).unwrap();
    let paths = simulate_paths(&m, &agent, 2_000, default_horizon(&m), 9).unwrap();
    assert!(paths.iter().all(|p| !p.truncated));
    let s3 = m.state_index("s3").unwrap();
    let visits = paths.iter().filter(|p| p.states.contains(&s3)).count() as f64 / paths.len() as f64;
    // the switch policy reaches the observed exit with probability 0.5
    assert!((visits - 0.5).abs() < 0.05, "{visits}");
    let b = agent_bounds(&m, &agent).unwrap();
    assert!(b.corollary <= b.sum);
}

#[test]
fn unsampled_states_can_be_excluded() {
    let m = fixtures::example1();
    let agent = Agent::Stationary(example1_policy(1e-9));
    let paths = simulate_paths(&m, &agent, 10, default_horizon(&m), 0).unwrap();
    let uniform = mse_report(estimate(&paths, &m), &m, &agent, NoSample::Uniform).unwrap();
    let excluded = mse_report(estimate(&paths, &m), &m, &agent, NoSample::Exclude).unwrap();
    let s1 = uniform.states.iter().find(|s| s.state == "s1").unwrap();
    assert!(s1.no_sample);
    assert!(excluded.total_mse <= uniform.total_mse);
}
