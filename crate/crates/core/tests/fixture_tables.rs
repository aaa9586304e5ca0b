//! Exact checks of the shipped fixtures.

mod common;

use common::*;
use lexmarket::core_stability::{
    block_search, is_fpo, is_ir, is_stable, recheck_witness, reject_search, BlockMode, Replicas,
    Role, StabilityWitness,
};
use lexmarket::economy::{utility, validate_economy};
use lexmarket::lde_model::{
    budget_contains, check_aggregate_cbp, check_simple_prices, check_strong_cbp, check_weak_cbp,
    dividends_from, verify_lde, Witness,
};
use lexmarket::rational::{q, qf, Q};

fn all_checks(table: &str) -> (bool, bool, bool, bool) {
    let (e, x, s) = (economy(table), allocation(table), prices(table));
    (
        verify_lde(&e, &x, &s).unwrap().verdict,
        check_strong_cbp(&e, &x, &s).unwrap().verdict,
        check_weak_cbp(&e, &x, &s).unwrap().verdict,
        check_aggregate_cbp(&e, &x, &s).unwrap().verdict,
    )
}

#[test]
fn fixture_economies_are_valid() {
    for t in TABLE_ECONOMIES {
        assert!(validate_economy(&economy(t)).is_empty(), "{t}");
    }
    let bad = validate_economy(&economy("invalid-column-sum"));
    assert!(!bad.is_empty());
}

#[test]
fn published_equilibria_pass_every_check() {
    for t in ["table2", "table3", "table4", "table5-eps8"] {
        assert_eq!(all_checks(t), (true, true, true, true), "{t}");
    }
}

#[test]
fn table4_dividends_follow_from_prices() {
    let (e, x, s) = (economy("table4"), allocation("table4"), prices("table4"));
    assert_eq!(dividends_from(&e, &x, &s.p), s.alpha);
    let h = qf(1, 2);
    assert_eq!(s.alpha[1], vec![q(0), q(0), h.clone(), q(0), q(0), q(0)]);
    assert_eq!(s.alpha[2], vec![q(0), h.clone(), q(0), q(0), h, q(0)]);
}

#[test]
fn table2_single_currency() {
    let (e, x, s) = (economy("table2"), allocation("table2"), prices("table2"));
    assert_eq!(s.d, 1);
    assert_eq!(dividends_from(&e, &x, &s.p), s.alpha);
    // agent 3 only values B and receives a full unit of it
    assert_eq!(x.row(2), &[q(0), q(1)][..]);
}

/// With `p = (1, 4 eps, 0)` agent 1 can spend the whole income `1/2 + eps` on A and B:
/// `a + 4 eps (1 - a) = 1/2 + eps` gives `a = (1/2 - 3 eps) / (1 - 4 eps)` and utility
/// `1 + a`, which beats the listed `3/2 - 2 eps` exactly when `eps < 1/8`.
fn agent1_alternative(eps: &Q) -> (Vec<Q>, Q) {
    let a = (qf(1, 2) - q(3) * eps) / (q(1) - q(4) * eps);
    let y = vec![a.clone(), q(1) - &a, q(0)];
    (y, q(1) + a)
}

#[test]
fn perturbed_tuples_hold_only_from_one_eighth() {
    for (k, t) in [(8, "table5-eps8"), (16, "table5-eps16"), (32, "table5-eps32")] {
        let eps = qf(1, k);
        let (e, x, s) = (economy(t), allocation(t), prices(t));
        assert_eq!(s.p[0], vec![q(1), q(4) * &eps, q(0)]);
        let listed = utility(&e, 0, x.row(0)).unwrap();
        assert_eq!(listed, qf(3, 2) - q(2) * &eps);
        let (y, better) = agent1_alternative(&eps);
        assert!(budget_contains(&e, 0, &y, &s).unwrap(), "{t}");
        assert_eq!(utility(&e, 0, &y).unwrap(), better);
        let r = verify_lde(&e, &x, &s).unwrap();
        if k == 8 {
            assert_eq!(better, listed);
            assert!(r.verdict);
        } else {
            assert!(better > listed);
            assert!(!r.verdict);
            let f = r.failures().next().unwrap();
            assert_eq!(f.agent, Some(1));
        }
    }
}

#[test]
fn table6_prices_are_simple_and_clear() {
    let (e, x, s) = (economy("table6"), allocation("table6"), prices("table6"));
    assert!(check_simple_prices(&s));
    assert_eq!(dividends_from(&e, &x, &s.p), s.alpha);
    assert_eq!(all_checks("table6"), (true, false, true, true));
}

#[test]
fn table6_strong_cbp_witness() {
    // agent 3 (u = (2, 11/10, 1, 0)) is indifferent between its bundle and (4/9, 5/9, 0, 0),
    // which costs the same in the first currency and nothing in the second
    let (e, x, s) = (economy("table6"), allocation("table6"), prices("table6"));
    let y = vec![qf(4, 9), qf(5, 9), q(0), q(0)];
    assert_eq!(utility(&e, 2, &y).unwrap(), utility(&e, 2, x.row(2)).unwrap());
    assert_eq!(utility(&e, 2, &y).unwrap(), qf(3, 2));
    let cost = |k: usize, v: &[Q]| -> Q { dot(&s.p[k], v) };
    assert_eq!(cost(0, &y), cost(0, x.row(2)));
    assert!(cost(1, &y) < cost(1, x.row(2)));
    let r = check_strong_cbp(&e, &x, &s).unwrap();
    let f = r.failures().next().unwrap();
    assert_eq!(f.agent, Some(3));
    match &f.witness {
        Some(Witness::Bundle { agent, y: w }) => {
            assert_eq!(*agent, 3);
            assert_eq!(utility(&e, 2, w).unwrap(), qf(3, 2));
            assert!(cost(0, w) <= cost(0, x.row(2)));
        }
        other => panic!("unexpected witness {other:?}"),
    }
}

#[test]
fn table1_stable_but_rejected_by_mixed_coalition() {
    let (e, x) = (economy("table1"), allocation("table1"));
    assert!(is_fpo(&e, &x).unwrap().verdict);
    assert!(is_ir(&e, &x).unwrap().verdict);
    assert!(block_search(&e, &x, BlockMode::StrongBlocking).unwrap().verdict);
    assert!(is_stable(&e, &x).unwrap().verdict);
    let v = reject_search(&e, &x, Replicas::Finite(2)).unwrap();
    assert!(!v.verdict);
    let Some(StabilityWitness::Coalition(w)) = &v.witness else {
        panic!("coalition witness expected");
    };
    assert_eq!(w.agents_with(Role::Allocation), vec![1]);
    assert_eq!(w.agents_with(Role::Endowment), vec![3]);
    recheck_witness(&e, &x, w).unwrap();
    assert!(!reject_search(&e, &x, Replicas::Infinite).unwrap().verdict);
}

#[test]
fn table3_in_every_rejective_core() {
    let (e, x) = (economy("table3"), allocation("table3"));
    for r in [Replicas::Finite(1), Replicas::Finite(2), Replicas::Infinite] {
        assert!(reject_search(&e, &x, r).unwrap().verdict, "{r:?}");
    }
}
