//! A 2-bit receiver beats the memoryless upper bound in simulation.

use spii::capacity::{build_emw, upper_bound_epsmaj, SolverOptions};
use spii::sim::{run_and_classify, ExperimentConfig, Label};
use spii::{Channel, ScheduleSet};

#[test]
fn two_bit_receiver_stabilizes_above_memoryless_bound() {
    let pi = ScheduleSet::single_server(2);
    let c = Channel::symmetric(2, 0.5).unwrap();
    let bound = upper_bound_epsmaj(&pi, 0.5).unwrap().rho;
    assert!((bound - 0.75).abs() < 1e-9);
    let emw = build_emw(&pi, &c, 2, 0.05, 200.0, &SolverOptions::default()).unwrap();
    assert!(emw.rho > 0.85, "{}", emw.rho);
    let pair = emw.policy_pair();
    for (i, lam) in [[0.8, 0.0], [0.0, 0.8], [0.4, 0.4]].iter().enumerate() {
        let mut cfg = ExperimentConfig::new(pi.clone(), c.clone(), lam.to_vec(), pair.clone()).unwrap();
        cfg.seed = 500 + i as u64;
        let (_, v) = run_and_classify(&cfg).unwrap();
        assert_eq!(v.label, Label::Stable, "{lam:?}: {v:?}");
    }
    // and the same pair is not trivially stable everywhere
    let mut cfg = ExperimentConfig::new(pi, c, vec![0.97, 0.0], pair).unwrap();
    cfg.seed = 510;
    assert_eq!(run_and_classify(&cfg).unwrap().1.label, Label::Unstable);
}
