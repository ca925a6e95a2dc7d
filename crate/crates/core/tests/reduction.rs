use bgsim::analysis::verify_trace;
use bgsim::formations::FormationKind;
use bgsim::memory::{InterleavingAdversary, Strategy};
use bgsim::reduction::{run_consensus, run_formation_consensus, Reference};

#[test]
fn common_proposal_decides_it_under_every_adversary() {
    for p in [0u8, 1] {
        let mut points = Vec::new();
        for seed in 0..30 {
            let adv = match seed % 3 {
                0 => InterleavingAdversary::seeded(seed),
                1 => InterleavingAdversary {
                    strategy: Strategy::Bursty { seed, max_burst: 9 },
                    crash: None,
                },
                _ => InterleavingAdversary::explicit(vec![1; (seed % 7) as usize]),
            };
            let t = run_consensus([p, p], 4, "move-to-max", &adv, None).unwrap();
            assert_eq!(t.decision_values(), [Some(p), Some(p)], "seed {seed}");
            points.extend(t.decisions.iter().flatten().map(|o| o.reached.clone()));
        }
        points.dedup();
        assert_eq!(points.len(), 1);
        assert!(matches!(points[0], Reference::Point(_)));
    }
}

#[test]
fn seeded_runs_repeat_exactly() {
    let adv = InterleavingAdversary::seeded(77).with_crash(1, 20);
    let a = run_consensus([1, 0], 5, "move-to-max", &adv, None).unwrap();
    let b = run_consensus([1, 0], 5, "move-to-max", &adv, None).unwrap();
    assert_eq!(a, b);
    let json = serde_json::to_string(&a).unwrap();
    let back: bgsim::reduction::ReductionTrace = serde_json::from_str(&json).unwrap();
    assert_eq!(back, a);
}

#[test]
fn line_formation_reduction_verifies() {
    for seed in 0..10 {
        let adv = InterleavingAdversary::seeded(seed);
        let t = run_formation_consensus([0, 1], 4, "line-former", FormationKind::Line, &adv, None)
            .unwrap();
        let r = verify_trace(&t).unwrap();
        assert!(r.pass, "seed {seed}: {:?}", r.admissibility.checks);
        if let [Some(x), Some(y)] = t.decision_values() {
            assert_eq!(x, y);
        }
    }
    let same = run_formation_consensus(
        [1, 1],
        4,
        "line-former",
        FormationKind::Line,
        &InterleavingAdversary::seeded(0),
        None,
    )
    .unwrap();
    assert_eq!(same.decision_values(), [Some(1), Some(1)]);
}
