//! Metric engine on injected outcomes with hand-computed expectations.

use std::collections::{BTreeMap, BTreeSet};

use evoforge::eval::{build_report, CutoffSplit};
use evoforge::model::{ChangeKind, Condition, CutoffGroup, EvalOutcome};

use ChangeKind::*;

fn id(n: u32) -> String {
    format!("t{n}")
}

fn outcome(n: u32, compiled: bool, static_ok: bool, passed: u32, total: u32) -> EvalOutcome {
    EvalOutcome {
        task_id: id(n),
        model_id: "m".into(),
        condition: Condition::NoInfo,
        sample_index: 0,
        compiled,
        static_check_passed: static_ok,
        cases_passed: passed,
        cases_total: total,
    }
}

fn fixture() -> (Vec<EvalOutcome>, BTreeMap<String, ChangeKind>) {
    let outcomes = vec![
        outcome(1, true, true, 4, 4),
        outcome(2, true, false, 4, 4),
        outcome(3, true, true, 2, 4),
        outcome(4, false, true, 0, 4),
        outcome(5, true, true, 3, 3),
        outcome(6, true, true, 5, 5),
        outcome(7, true, false, 1, 3),
        outcome(8, true, true, 2, 2),
    ];
    let kinds = [
        Stabilization,
        Stabilization,
        SignatureChange,
        SignatureChange,
        BehavioralChange,
        BehavioralChange,
        Deprecation,
        Deprecation,
    ];
    let kinds = (1..=8).zip(kinds).map(|(n, k)| (id(n), k)).collect();
    (outcomes, kinds)
}

#[test]
fn injected_outcomes_match_hand_computation() {
    let (outcomes, kinds) = fixture();
    let r = build_report(&outcomes, &kinds, &[1], None).unwrap();
    assert_eq!(r.pass_at_k[&1], 4.0 / 8.0);
    assert_eq!(r.aua, 6.0 / 8.0);
    assert_eq!(r.coverage, 21.0 / 29.0);
    assert!(r.by_cutoff.is_empty());

    // (pass@1, aua, coverage) per kind
    let expected = [
        (Stabilization, 1.0 / 2.0, 1.0 / 2.0, 8.0 / 8.0),
        (SignatureChange, 0.0, 2.0 / 2.0, 2.0 / 8.0),
        (BehavioralChange, 1.0, 1.0, 1.0),
        (Deprecation, 1.0 / 2.0, 1.0 / 2.0, 3.0 / 5.0),
    ];
    for (kind, p, a, c) in expected {
        let m = r.by_kind[&kind];
        assert_eq!((m.pass_at_1, m.aua, m.coverage), (p, a, c), "{kind:?}");
    }
}

#[test]
fn cutoff_groups_split_pass_at_1() {
    let (outcomes, kinds) = fixture();
    let split = CutoffSplit {
        before: (1..=4).map(id).collect::<BTreeSet<_>>(),
        after: (5..=8).map(id).collect::<BTreeSet<_>>(),
    };
    let r = build_report(&outcomes, &kinds, &[1], Some(&split)).unwrap();
    assert_eq!(r.by_cutoff[&CutoffGroup::Before], 1.0 / 4.0);
    assert_eq!(r.by_cutoff[&CutoffGroup::After], 3.0 / 4.0);
}

#[test]
fn empty_kinds_are_omitted() {
    let (outcomes, mut kinds) = fixture();
    kinds.retain(|_, k| *k != Deprecation);
    let r = build_report(&outcomes, &kinds, &[1], None).unwrap();
    assert!(!r.by_kind.contains_key(&Deprecation));
    // overall figures still cover every task
    assert_eq!(r.pass_at_k[&1], 0.5);
}

#[test]
fn pass_at_k_beyond_samples_is_an_error() {
    let (outcomes, kinds) = fixture();
    assert!(build_report(&outcomes, &kinds, &[2], None).is_err());
}
