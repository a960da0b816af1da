mod common;

use std::collections::HashMap;

use cctg::schedule::{
    build_probe_suite, build_probe_suite_with, probe_pairs, AdvanceOrder, ScheduleError,
};
use common::{arb_spec, binary_model, Spec};
use proptest::prelude::*;

fn arb_order() -> impl Strategy<Value = AdvanceOrder> {
    prop_oneof![
        Just(AdvanceOrder::RoundRobin),
        Just(AdvanceOrder::Sequential)
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn consecutive_cases_differ_in_one_parameter(
        spec in arb_spec(6, 4, 2),
        depth in 1usize..4,
        seed in any::<u64>(),
        order in arb_order(),
    ) {
        let model = spec.model();
        let suite = match build_probe_suite_with(&model, depth, seed, order) {
            Ok(s) => s,
            Err(ScheduleError::InfeasibleStart { .. }) => return Ok(()),
            Err(e) => panic!("{e}"),
        };
        for w in suite.cases.windows(2) {
            prop_assert_eq!(w[0].hamming(&w[1]), 1);
        }
        for c in &suite.cases {
            prop_assert!(spec.admits(c.assignment()));
        }
        let lens = spec.lens();
        let steps: usize = lens.iter().map(|&l| l.min(depth) - 1).sum();
        prop_assert_eq!(suite.cases.len(), 1 + steps - suite.skipped_steps());
        prop_assert_eq!(suite.change_log.len(), steps);
        prop_assert_eq!(suite.replay(), suite.cases.clone());
    }

    #[test]
    fn size_without_constraints(sizes in prop::collection::vec(3..6usize, 1..7), depth in 1usize..4, seed in any::<u64>()) {
        let model = binary_model(&sizes);
        let suite = build_probe_suite(&model, depth, seed).unwrap();
        prop_assert_eq!(suite.skipped_steps(), 0);
        prop_assert_eq!(suite.cases.len(), 1 + sizes.len() * (depth - 1));
        // every parameter visits exactly the values of its RV, in order
        for (p, rv) in suite.rv_tables.iter().enumerate() {
            let mut visited = vec![suite.cases[0].get(p)];
            for c in &suite.cases {
                if *visited.last().unwrap() != c.get(p) {
                    visited.push(c.get(p));
                }
            }
            prop_assert_eq!(&visited, rv);
        }
    }

    #[test]
    fn deterministic(spec in arb_spec(5, 3, 2), depth in 1usize..4, seed in any::<u64>()) {
        let model = spec.model();
        let a = build_probe_suite(&model, depth, seed);
        let b = build_probe_suite(&model, depth, seed);
        prop_assert_eq!(format!("{a:?}"), format!("{b:?}"));
    }

    #[test]
    fn probe_pairs_match_grouping(spec in arb_spec(4, 3, 1), depth in 1usize..4, seed in any::<u64>()) {
        let model = spec.model();
        let Ok(suite) = build_probe_suite(&model, depth, seed) else { return Ok(()) };
        for param in 0..model.len() {
            // oracle: bucket by the assignment with `param` blanked
            let mut buckets: HashMap<Vec<Option<usize>>, Vec<usize>> = HashMap::new();
            for (i, c) in suite.cases.iter().enumerate() {
                let key = c.assignment().iter().enumerate().map(|(k, &v)| (k != param).then_some(v)).collect();
                buckets.entry(key).or_default().push(i);
            }
            let mut expected = Vec::new();
            for members in buckets.values() {
                for (x, &i) in members.iter().enumerate() {
                    for &j in &members[x + 1..] {
                        if suite.cases[i].get(param) != suite.cases[j].get(param) {
                            expected.push((i.min(j), i.max(j)));
                        }
                    }
                }
            }
            expected.sort_unstable();
            let mut got = probe_pairs(&suite.cases, param);
            got.sort_unstable();
            prop_assert_eq!(got, expected);
        }
    }
}

#[test]
fn three_parameter_depth_two() {
    let spec = Spec {
        shapes: vec![None, Some(3), Some(2)],
        defaults: vec![0; 3],
        constraints: vec![],
    };
    let suite = build_probe_suite(&spec.model(), 2, 11).unwrap();
    assert_eq!(suite.cases.len(), 4);
}

#[test]
fn zero_depth_is_rejected() {
    assert!(matches!(
        build_probe_suite(&binary_model(&[2]), 0, 1),
        Err(ScheduleError::ZeroDepth)
    ));
}
