mod common;

use std::collections::HashMap;

use etc_rtl::monitor::evaluate_signals;
use etc_rtl::{
    parse, robustify, to_nnf, Formula, Interval, IntervalSet, Proposition, PropositionTable, Region,
};
use proptest::prelude::*;

fn arb_formula(depth: u32) -> impl Strategy<Value = Formula> {
    let leaf = prop_oneof![
        Just(Formula::True),
        Just(Formula::False),
        prop::sample::select(common::ATOMS.to_vec()).prop_map(Formula::atom),
    ];
    leaf.prop_recursive(depth, 64, 2, |inner| {
        prop_oneof![
            inner.clone().prop_map(Formula::not),
            inner.clone().prop_map(Formula::eventually),
            inner.clone().prop_map(Formula::always),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Formula::and(a, b)),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Formula::or(a, b)),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Formula::until(a, b)),
            (inner.clone(), inner).prop_map(|(a, b)| Formula::release(a, b)),
        ]
    })
}

fn arb_trace() -> impl Strategy<Value = common::DiscreteTrace> {
    prop::collection::vec(prop::array::uniform3(any::<bool>()), 1..=8)
}

fn table() -> PropositionTable {
    let mut t = PropositionTable::new();
    t.insert("p", Proposition::new("p", Region::ball(vec![0.0, 0.0], 1.0).unwrap()));
    t.insert(
        "q",
        Proposition::new(
            "q",
            Region::polyhedron(
                vec![vec![1.0, 0.0], vec![-1.0, 0.0], vec![0.0, 1.0], vec![0.0, -1.0]],
                vec![3.0, -1.0, 1.0, 1.0],
            )
            .unwrap(),
        ),
    );
    t.insert("r", Proposition::new("r", Region::ball(vec![-2.0, 1.0], 0.5).unwrap()));
    t
}

const GRID: [f64; 7] = [0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0];

fn arb_set() -> impl Strategy<Value = IntervalSet> {
    let piece = (0usize..7, 0usize..4, any::<bool>(), any::<bool>()).prop_map(|(s, len, sc, ec)| Interval {
        start: GRID[s],
        start_closed: sc,
        end: (GRID[s] + len as f64).min(6.0),
        end_closed: ec,
    });
    prop::collection::vec(piece, 0..5).prop_map(|v| IntervalSet::from_intervals(0.0, 6.0, v))
}

fn probes() -> Vec<f64> {
    (0..=24).map(|k| k as f64 * 0.25).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(400))]

    #[test]
    fn nnf_preserves_discrete_semantics(f in arb_formula(5), trace in arb_trace()) {
        let g = to_nnf(&f);
        prop_assert!(g.is_nnf());
        for i in 0..trace.len() {
            prop_assert_eq!(common::discrete_holds(&f, &trace, i), common::discrete_holds(&g, &trace, i));
        }
    }

    #[test]
    fn print_then_parse_is_identity(f in arb_formula(5)) {
        prop_assert_eq!(parse(&f.to_string()).unwrap(), f);
    }

    #[test]
    fn dense_monitor_matches_discrete_oracle(f in arb_formula(4), trace in arb_trace()) {
        let (signals, t_end) = common::block_signals(&trace);
        let sat = evaluate_signals(&to_nnf(&f), &signals, 0.0, t_end).unwrap().sat_set;
        for i in 0..trace.len() {
            prop_assert_eq!(sat.contains(i as f64), common::discrete_holds(&f, &trace, i));
            prop_assert_eq!(sat.contains(i as f64 + 0.5), common::discrete_holds(&f, &trace, i));
        }
    }

    #[test]
    fn derived_operators_match_expansions(f in arb_formula(3), trace in arb_trace()) {
        let (signals, t_end) = common::block_signals(&trace);
        let eval = |g: &Formula| evaluate_signals(&to_nnf(g), &signals, 0.0, t_end).unwrap().sat_set;
        prop_assert_eq!(eval(&Formula::eventually(f.clone())), eval(&Formula::until(Formula::True, f.clone())));
        prop_assert_eq!(
            eval(&Formula::always(f.clone())),
            eval(&Formula::not(Formula::eventually(Formula::not(f))))
        );
    }

    #[test]
    fn robustify_keeps_skeleton_and_sandwiches_regions(f in arb_formula(4), eps in 0.01f64..0.45) {
        let nnf = to_nnf(&f);
        let src = table();
        let (g, out) = robustify(&nnf, eps, &src).unwrap();
        prop_assert_eq!(g.skeleton(), nnf.skeleton());
        let samples: Vec<[f64; 2]> = (0..15)
            .flat_map(|i| (0..9).map(move |j| [-3.0 + 0.45 * i as f64, -1.6 + 0.4 * j as f64]))
            .collect();
        for name in g.atoms() {
            let derived = out.get(name).unwrap();
            let base = name.trim_end_matches("_con").trim_end_matches("_exp");
            let original = &src.get(base).unwrap().region;
            for x in &samples {
                let inside = original.contains(x).unwrap();
                if name.ends_with("_con") && derived.region.contains(x).unwrap() {
                    prop_assert!(inside);
                }
                if name.ends_with("_exp") && inside {
                    prop_assert!(derived.region.contains(x).unwrap());
                }
            }
        }
    }

    #[test]
    fn complement_is_involution(a in arb_set()) {
        prop_assert_eq!(a.complement().complement(), a);
    }

    #[test]
    fn union_and_intersection_laws(a in arb_set(), b in arb_set(), c in arb_set()) {
        prop_assert_eq!(a.union(&a), a.clone());
        prop_assert_eq!(a.intersection(&a), a.clone());
        prop_assert_eq!(a.union(&b), b.union(&a));
        prop_assert_eq!(a.intersection(&b), b.intersection(&a));
        prop_assert_eq!(a.union(&b).union(&c), a.union(&b.union(&c)));
        prop_assert_eq!(a.intersection(&b).intersection(&c), a.intersection(&b.intersection(&c)));
        prop_assert_eq!(a.union(&b).complement(), a.complement().intersection(&b.complement()));
        prop_assert_eq!(a.intersection(&b).complement(), a.complement().union(&b.complement()));
    }

    #[test]
    fn set_operations_agree_pointwise(a in arb_set(), b in arb_set()) {
        for t in probes() {
            prop_assert_eq!(a.union(&b).contains(t), a.contains(t) || b.contains(t));
            prop_assert_eq!(a.intersection(&b).contains(t), a.contains(t) && b.contains(t));
            prop_assert_eq!(a.complement().contains(t), !a.contains(t));
        }
    }

    #[test]
    fn always_within_set_within_eventually(a in arb_set()) {
        for t in probes() {
            if a.always().contains(t) {
                prop_assert!(a.contains(t));
            }
            if a.contains(t) {
                prop_assert!(a.eventually().contains(t));
            }
        }
    }
}

#[test]
fn empty_signal_map_reports_unknown_atom() {
    let signals: HashMap<String, IntervalSet> = HashMap::new();
    assert!(evaluate_signals(&Formula::atom("p"), &signals, 0.0, 1.0).is_err());
}
