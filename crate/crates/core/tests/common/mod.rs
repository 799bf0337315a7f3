//! Helpers shared by the integration test targets.
#![allow(dead_code)]

use std::collections::HashMap;

use etc_rtl::{Formula, Interval, IntervalSet};
use rand::Rng;

pub const ATOMS: [&str; 3] = ["p", "q", "r"];

/// One valuation of `ATOMS` per discrete position.
pub type DiscreteTrace = Vec<[bool; 3]>;

fn atom_index(name: &str) -> usize {
    ATOMS.iter().position(|a| *a == name).expect("known atom")
}

/// Brute-force LTL semantics on a finite trace, positions `i..n`.
/// Accepts any formula, not only NNF.
pub fn discrete_holds(f: &Formula, trace: &DiscreteTrace, i: usize) -> bool {
    let n = trace.len();
    match f {
        Formula::True => true,
        Formula::False => false,
        Formula::Atom(name) => trace[i][atom_index(name)],
        Formula::Not(a) => !discrete_holds(a, trace, i),
        Formula::And(a, b) => discrete_holds(a, trace, i) && discrete_holds(b, trace, i),
        Formula::Or(a, b) => discrete_holds(a, trace, i) || discrete_holds(b, trace, i),
        Formula::Eventually(a) => (i..n).any(|j| discrete_holds(a, trace, j)),
        Formula::Always(a) => (i..n).all(|j| discrete_holds(a, trace, j)),
        Formula::Until(a, b) => {
            (i..n).any(|j| discrete_holds(b, trace, j) && (i..j).all(|k| discrete_holds(a, trace, k)))
        }
        Formula::Release(a, b) => {
            (i..n).all(|j| discrete_holds(b, trace, j) || (i..j).any(|k| discrete_holds(a, trace, k)))
        }
    }
}

/// Dense-time signals for a discrete trace: position `k` covers `[k, k+1)`,
/// the last one `[n-1, n]`.
pub fn block_signals(trace: &DiscreteTrace) -> (HashMap<String, IntervalSet>, f64) {
    let n = trace.len();
    let t_end = n as f64;
    let mut out = HashMap::new();
    for (a, name) in ATOMS.iter().enumerate() {
        let blocks = (0..n)
            .filter(|&k| trace[k][a])
            .map(|k| {
                if k + 1 == n {
                    Interval::closed(k as f64, t_end)
                } else {
                    Interval::right_open(k as f64, (k + 1) as f64)
                }
            })
            .collect();
        out.insert(name.to_string(), IntervalSet::from_intervals(0.0, t_end, blocks));
    }
    (out, t_end)
}

/// Random formula over `ATOMS` of depth at most `depth`, negations anywhere.
pub fn random_formula<R: Rng>(rng: &mut R, depth: usize) -> Formula {
    if depth == 0 || rng.random_bool(0.2) {
        return match rng.random_range(0..8) {
            0 => Formula::True,
            1 => Formula::False,
            k => Formula::atom(ATOMS[k % 3]),
        };
    }
    let d = depth - 1;
    match rng.random_range(0..8) {
        0 => Formula::not(random_formula(rng, d)),
        1 => Formula::and(random_formula(rng, d), random_formula(rng, d)),
        2 => Formula::or(random_formula(rng, d), random_formula(rng, d)),
        3 => Formula::until(random_formula(rng, d), random_formula(rng, d)),
        4 => Formula::release(random_formula(rng, d), random_formula(rng, d)),
        5 => Formula::eventually(random_formula(rng, d)),
        6 => Formula::always(random_formula(rng, d)),
        _ => Formula::not(random_formula(rng, d)),
    }
}

pub fn random_trace<R: Rng>(rng: &mut R, max_len: usize) -> DiscreteTrace {
    let n = rng.random_range(1..=max_len);
    (0..n).map(|_| [rng.random_bool(0.5), rng.random_bool(0.5), rng.random_bool(0.5)]).collect()
}
