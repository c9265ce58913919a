use laco::config::{McsTable, SliceSpec, SystemConfig};
use laco::engine::{run_epoch, run_experiment, Allocation, EpochTrace, OracleTable, PolicyParams, Scenario, SimState};
use laco::policy::PolicyKind;

fn scenario(system: SystemConfig, slices: Vec<SliceSpec>) -> Scenario {
    Scenario::new(system, slices, McsTable::embedded(), PolicyParams::default()).unwrap()
}

fn scripted_trace(demand: Vec<Vec<u64>>, bits_per_prb: u32) -> EpochTrace {
    let ttis = demand[0].len();
    let n = demand.len();
    EpochTrace {
        epoch: 0,
        first_tti: 0,
        demand,
        snr_db: vec![vec![20.0; ttis]; n],
        level: vec![vec![0; ttis]; n],
        bits_per_prb: vec![vec![bits_per_prb; ttis]; n],
    }
}

fn small_system(capacity: u32, chunk: u32, epoch_ttis: u32) -> SystemConfig {
    SystemConfig {
        capacity_prbs: capacity,
        chunk,
        epoch_ttis,
        ..SystemConfig::default()
    }
}

#[test]
fn zero_demand_serves_nothing() {
    let sc = scenario(small_system(10, 10, 20), vec![SliceSpec::new(0, 5.0, 0.0, 0.0, 1.0)]);
    let mut state = SimState::new(&sc);
    let (rec, hist) = run_epoch(&sc, Allocation::Arm(&sc.arms()[0]), &mut state, &scripted_trace(vec![vec![0; 20]], 100));
    let s = &rec.slices[0];
    assert_eq!((s.offered_bits, s.served_bits, s.dropped_bits, s.backlog_bits), (0, 0, 0, 0));
    assert_eq!(hist[0].total(), 19);
    assert_eq!(hist[0].count(0, 0, 0), 19);
}

#[test]
fn starved_slice_drops_everything_past_deadline() {
    let sc = scenario(
        small_system(10, 10, 50),
        vec![SliceSpec::new(0, 5.0, 1.0, 0.0, 1.0), SliceSpec::new(1, 5.0, 1.0, 0.0, 1.0)],
    );
    // arm 0 is (0, 10): slice 0 gets no PRBs
    let arm = &sc.arms()[0];
    assert_eq!(arm.allocation, vec![0, 10]);
    let mut state = SimState::new(&sc);
    let (rec, hist) = run_epoch(&sc, Allocation::Arm(arm), &mut state, &scripted_trace(vec![vec![100; 50]; 2], 100));
    let s = &rec.slices[0];
    assert_eq!(s.served_bits, 0);
    // at TTI 49 the packets of TTIs 44..=49 are still within the 5-TTI tolerance
    assert_eq!(s.backlog_bits, 600);
    assert_eq!(s.dropped_bits, 4400);
    assert_eq!(s.offered_bits, s.dropped_bits + s.backlog_bits);
    // the first expiry happens at TTI 6
    assert_eq!(s.violation_ttis, 44);
    assert_eq!(hist[0].count(0, 1, 1), 43);
    assert_eq!(rec.slices[1].dropped_bits, 0);
}

/// Hand-stepped `(demand, served, expired, backlog)` per TTI with a
/// 1000-bit budget and a 2-TTI tolerance.
const SCRIPT: [(u64, u64, u64, u64); 5] = [
    (1500, 1000, 0, 500),
    (500, 1000, 0, 0),
    (1000, 1000, 0, 0),
    (0, 0, 0, 0),
    (2000, 1000, 0, 1000),
];

#[test]
fn five_tti_script_matches_hand_stepping() {
    let sc = scenario(small_system(10, 10, 5), vec![SliceSpec::new(0, 2.0, 1.0, 0.0, 1.0)]);
    for t in 0..SCRIPT.len() {
        let mut state = SimState::new(&sc);
        let demand: Vec<u64> = SCRIPT[..=t].iter().map(|s| s.0).collect();
        let (rec, _) = run_epoch(&sc, Allocation::Arm(&sc.arms()[0]), &mut state, &scripted_trace(vec![demand], 100));
        let s = &rec.slices[0];
        let served: u64 = SCRIPT[..=t].iter().map(|s| s.1).sum();
        let expired: u64 = SCRIPT[..=t].iter().map(|s| s.2).sum();
        assert_eq!((s.served_bits, s.dropped_bits, s.backlog_bits), (served, expired, SCRIPT[t].3), "TTI {t}");
    }
    let mut state = SimState::new(&sc);
    let demand = vec![SCRIPT.iter().map(|s| s.0).collect()];
    let (rec, _) = run_epoch(&sc, Allocation::Arm(&sc.arms()[0]), &mut state, &scripted_trace(demand, 100));
    let s = &rec.slices[0];
    assert_eq!(s.max_latency_ms, 1.0);
    // 500 bits waited one TTI out of 4000 served
    assert!((s.mean_latency_ms - 0.125).abs() < 1e-12);
}

#[test]
fn demand_equal_to_budget_never_queues() {
    let sc = scenario(small_system(10, 10, 5), vec![SliceSpec::new(0, 2.0, 1.0, 0.0, 1.0)]);
    let mut state = SimState::new(&sc);
    for _ in 0..5 {
        let (rec, _) = run_epoch(&sc, Allocation::Arm(&sc.arms()[0]), &mut state, &scripted_trace(vec![vec![1000; 5]], 100));
        let s = &rec.slices[0];
        assert_eq!((s.served_bits, s.dropped_bits, s.backlog_bits), (5000, 0, 0));
        assert_eq!(s.max_latency_ms, 0.0);
        assert!(state.queues[0].len() <= 1);
    }
}

fn two_slice_scenario(horizon: u32, chunk: u32) -> Scenario {
    let system = SystemConfig {
        capacity_prbs: 100,
        chunk,
        epoch_ttis: 100,
        horizon,
        snr_min_db: 20.0,
        snr_max_db: 50.0,
        ..SystemConfig::default()
    };
    scenario(
        system,
        vec![SliceSpec::new(0, 10.0, 20.0, 2.0, 0.5), SliceSpec::new(1, 20.0, 10.0, 1.0, 0.5)],
    )
}

#[test]
fn sweep_only_run_visits_arms_in_order() {
    let sc = two_slice_scenario(5, 25);
    assert_eq!(sc.arms().len(), 5);
    for policy in [PolicyKind::Laco, PolicyKind::Ucb, PolicyKind::Ts] {
        let trace = run_experiment(&sc, policy, 3, None).unwrap();
        assert_eq!(trace.arm_sequence(), (0..5).map(Some).collect::<Vec<_>>(), "{policy}");
    }
}

#[test]
fn single_arm_is_always_played() {
    let system = SystemConfig {
        epoch_ttis: 100,
        horizon: 30,
        ..SystemConfig::default()
    };
    let sc = scenario(system, vec![SliceSpec::new(0, 10.0, 5.0, 1.0, 1.0)]);
    assert_eq!(sc.arms().len(), 1);
    for policy in [PolicyKind::Laco, PolicyKind::Ucb, PolicyKind::Ts] {
        let trace = run_experiment(&sc, policy, 1, None).unwrap();
        assert!(trace.arm_sequence().iter().all(|a| *a == Some(0)));
    }
}

/// Slice 0 carries all the load; slice 1 is idle, so serving slice 0 is
/// clearly the better of the two arms.
fn static_two_arm_scenario() -> Scenario {
    let system = SystemConfig {
        capacity_prbs: 100,
        chunk: 100,
        epoch_ttis: 200,
        horizon: 200,
        snr_min_db: 20.0,
        snr_max_db: 50.0,
        ..SystemConfig::default()
    };
    scenario(
        system,
        vec![SliceSpec::new(0, 10.0, 20.0, 0.0, 0.02), SliceSpec::new(1, 10.0, 0.0, 0.0, 0.02)],
    )
}

#[test]
fn laco_finds_the_better_of_two_static_arms() {
    let sc = static_two_arm_scenario();
    let oracle = OracleTable::build(&sc, 5);
    let n = oracle.epochs();
    let mean = |arm: usize| (0..n).map(|e| oracle.arm_value(e, &sc.arms()[arm])).sum::<f64>() / n as f64;
    let (v0, v1) = (mean(0), mean(1));
    let best = usize::from(v1 > v0);
    assert!((v0 - v1).abs() > 0.2, "arm values {v0} {v1}");

    let trace = run_experiment(&sc, PolicyKind::Laco, 5, Some(&oracle)).unwrap();
    let post_sweep = &trace.arm_sequence()[2..];
    let hits = post_sweep.iter().filter(|a| **a == Some(best)).count();
    assert!(hits as f64 >= 0.95 * post_sweep.len() as f64, "{hits} of {}", post_sweep.len());

    // stationary sanity: a constant arm from some epoch on, flat regret
    assert!(trace.convergence_epoch().unwrap() < 200);
    let regret = trace.regret_curve().unwrap();
    assert_eq!(regret[150], regret[199]);
    let oracle_run = run_experiment(&sc, PolicyKind::Oracle, 5, Some(&oracle)).unwrap();
    assert!(oracle_run.arm_sequence().iter().all(|a| *a == Some(best)));
    assert!(oracle_run.regret_curve().unwrap().iter().all(|r| *r == 0.0));
}

#[test]
fn runs_are_deterministic_per_seed() {
    let sc = two_slice_scenario(40, 25);
    for policy in [PolicyKind::Laco, PolicyKind::Ucb, PolicyKind::Ts, PolicyKind::Rr] {
        let a = run_experiment(&sc, policy, 11, None).unwrap().to_csv();
        let b = run_experiment(&sc, policy, 11, None).unwrap().to_csv();
        let c = run_experiment(&sc, policy, 12, None).unwrap().to_csv();
        assert_eq!(a, b, "{policy}");
        assert_ne!(a, c, "{policy}");
    }
}

#[test]
fn runs_conserve_bits_and_respect_deadlines() {
    for serve_late in [false, true] {
        let mut sc = two_slice_scenario(40, 25);
        sc.system.serve_late = serve_late;
        for policy in [PolicyKind::Laco, PolicyKind::Ucb, PolicyKind::Ts, PolicyKind::Rr] {
            let trace = run_experiment(&sc, policy, 2, None).unwrap();
            assert_eq!(trace.records.len(), 40);
            assert!(trace.conserves_bits(), "{policy}");
            for pair in trace.cumulative_dropped().windows(2) {
                assert!(pair[0].iter().zip(&pair[1]).all(|(a, b)| a <= b));
            }
            if !serve_late {
                for r in &trace.records {
                    for (s, spec) in r.slices.iter().zip(&sc.slices) {
                        assert!(s.max_latency_ms <= spec.latency_ms);
                        assert_eq!(s.late_bits, 0);
                    }
                }
            } else {
                assert_eq!(trace.total_dropped(), 0);
            }
        }
    }
}
