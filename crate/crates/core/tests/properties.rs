mod common;

use std::collections::{BTreeMap, BTreeSet};

use ggv::fixtures::corpus;
use ggv::injection::{EvidenceStatus, StatePatchOp};
use ggv::judge::{evaluate, parse_assertion, Expr, ParseError};
use ggv::scoring::{confusion, metrics, propagate, Label, Mode, Provenance, ScoreError};
use ggv::spec_model::{lint_unit, Category, SpecElement, Specification};
use ggv::toy::{template_schema, Template};
use proptest::prelude::*;
use serde_json::{json, Value};

fn cases(n: u32) -> ProptestConfig {
    ProptestConfig {
        cases: n,
        failure_persistence: None,
        ..ProptestConfig::default()
    }
}

// ---- lint ----

fn corrupted_unit() -> impl Strategy<Value = (Template, ggv::spec_model::VerificationUnit)> {
    let units: Vec<(Template, ggv::spec_model::VerificationUnit)> = Template::ALL
        .iter()
        .flat_map(|t| corpus(*t).units.into_iter().map(move |u| (*t, u)))
        .filter(|(_, u)| !u.patch.is_empty())
        .collect();
    (prop::sample::select(units), any::<prop::sample::Index>(), "z[a-z]{0,5}", 0usize..3).prop_map(
        |((t, mut u), at, junk, how)| {
            let i = at.index(u.patch.len());
            match &mut u.patch[i] {
                StatePatchOp::Set { path, .. } => {
                    let mut segs: Vec<String> = path.split('.').map(String::from).collect();
                    match how {
                        0 => segs.push(junk),
                        1 => {
                            let k = at.index(segs.len());
                            segs[k] = junk;
                        }
                        _ => segs.insert(0, junk),
                    }
                    *path = segs.join(".");
                }
                StatePatchOp::Spawn { props, .. } => {
                    props.insert(junk, json!(1));
                }
                StatePatchOp::Remove { id } => {
                    u.patch[i] = StatePatchOp::set(format!("{junk}.{id}"), 1);
                }
            }
            (t, u)
        },
    )
}

proptest! {
    #![proptest_config(cases(256))]

    #[test]
    fn corrupted_patch_paths_never_lint_clean((t, u) in corrupted_unit()) {
        let schema = template_schema(t);
        // Entity ids are open-ended, so a corrupted id segment can still
        // resolve; only paths outside the schema count.
        let unresolvable = u.patch.iter().any(|op| match op {
            StatePatchOp::Set { path, .. } => schema.resolve(path).is_none(),
            StatePatchOp::Spawn { props, .. } => props.keys().any(|k| k.starts_with('z')),
            StatePatchOp::Remove { .. } => false,
        });
        prop_assume!(unresolvable);
        let errors = lint_unit(&u, &schema).into_iter().filter(|d| d.is_error()).count();
        prop_assert!(errors >= 1, "{:?}", u.patch);
    }
}

// ---- judge ----

use common::exprs::*;

proptest! {
    #![proptest_config(cases(500))]

    #[test]
    fn de_morgan_and_double_negation(a in expr(true), b in expr(true), pre in state(), post in state(), ev in events(), st in status()) {
        let e = evidence_of(&pre, &post, &ev, st);
        let not = |x: Expr| Expr::Not(Box::new(x));
        let lhs = evaluate(&not(Expr::All(vec![a.clone(), b.clone()])), &e).holds;
        let rhs = evaluate(&Expr::Any(vec![not(a.clone()), not(b.clone())]), &e).holds;
        prop_assert_eq!(lhs, rhs);
        let lhs = evaluate(&not(Expr::Any(vec![a.clone(), b.clone()])), &e).holds;
        let rhs = evaluate(&Expr::All(vec![not(a.clone()), not(b)]), &e).holds;
        prop_assert_eq!(lhs, rhs);
        if st == EvidenceStatus::Completed {
            prop_assert_eq!(evaluate(&not(not(a.clone())), &e).holds, evaluate(&a, &e).holds);
        }
    }

    #[test]
    fn removing_paths_never_makes_negation_free_exprs_true(
        x in expr(false),
        pre in state(),
        post in state(),
        ev in events(),
        drop_pre in prop::collection::btree_set(prop::sample::select(LEAVES.to_vec()), 0..3),
        drop_post in prop::collection::btree_set(prop::sample::select(LEAVES.to_vec()), 0..3),
    ) {
        let full = evidence_of(&pre, &post, &ev, EvidenceStatus::Completed);
        let keep = |m: &BTreeMap<&'static str, Value>, drop: &BTreeSet<&str>| -> BTreeMap<&'static str, Value> {
            m.iter().filter(|(k, _)| !drop.contains(*k)).map(|(k, v)| (*k, v.clone())).collect()
        };
        let partial = evidence_of(&keep(&pre, &drop_pre), &keep(&post, &drop_post), &ev, EvidenceStatus::Completed);
        if evaluate(&x, &partial).holds {
            prop_assert!(evaluate(&x, &full).holds, "{}", x);
        }
    }

    #[test]
    fn evaluation_is_total_and_printing_round_trips(x in expr(true), pre in state(), post in state(), ev in events(), st in status()) {
        let e = evidence_of(&pre, &post, &ev, st);
        let out = evaluate(&x, &e);
        prop_assert!(!out.trace.is_empty());
        // Literal-only comparisons of different types are rejected at parse
        // time; everything else must print back to the same tree.
        match parse_assertion(&x.to_string()) {
            Ok(reparsed) => {
                prop_assert_eq!(&reparsed, &x);
                prop_assert_eq!(evaluate(&reparsed, &e).holds, out.holds);
            }
            Err(err) => prop_assert!(matches!(err, ParseError::Type { .. }), "{}", err),
        }
    }
}

// ---- propagation ----

fn dag() -> impl Strategy<Value = (usize, Vec<Vec<usize>>, BTreeSet<usize>)> {
    (1usize..13).prop_flat_map(|n| {
        let deps = (0..n)
            .map(|i| prop::collection::btree_set(0..i.max(1), 0..=i.min(3)).prop_map(move |s| s.into_iter().filter(|d| *d < i).collect::<Vec<_>>()))
            .collect::<Vec<_>>();
        (Just(n), deps, prop::collection::btree_set(0..n, 0..=n.min(4)))
    })
}

proptest! {
    #![proptest_config(cases(500))]

    #[test]
    fn propagation_matches_reachability((n, deps, seeds) in dag(), rotate in 0usize..13) {
        let name = |i: usize| format!("N{i}");
        // File order is rotated so it differs from index order.
        let mut elements: Vec<SpecElement> = (0..n)
            .map(|i| SpecElement {
                id: name(i),
                text: String::new(),
                category: Category::Other,
                depends_on: deps[i].iter().map(|d| name(*d)).collect(),
            })
            .collect();
        elements.rotate_left(rotate % n);
        let spec = Specification::new("g", elements).unwrap();

        // Warshall closure over "i depends on j".
        let mut reach = vec![vec![false; n]; n];
        for i in 0..n {
            for &d in &deps[i] {
                reach[i][d] = true;
            }
        }
        for k in 0..n {
            for i in 0..n {
                for j in 0..n {
                    reach[i][j] |= reach[i][k] && reach[k][j];
                }
            }
        }
        let seed_map: BTreeMap<String, Label> = seeds.iter().map(|i| (name(*i), Label::Fail)).collect();
        let labels = propagate(&spec, &seed_map);
        prop_assert_eq!(labels.len(), n);
        for i in 0..n {
            let direct = seeds.contains(&i);
            let inherited = seeds.iter().any(|s| reach[i][*s]);
            let l = &labels[&name(i)];
            prop_assert_eq!(l.label == Label::Fail, direct || inherited);
            let expected = if direct {
                Provenance::DirectFalsification
            } else if inherited {
                Provenance::Propagated
            } else {
                Provenance::DefaultPass
            };
            prop_assert_eq!(l.provenance, expected);
        }
    }
}

// ---- metrics ----

fn labelings() -> impl Strategy<Value = (BTreeMap<String, Label>, BTreeMap<String, Label>)> {
    prop::collection::vec(
        (
            prop_oneof![Just(Label::Pass), Just(Label::Fail), Just(Label::Unverified)],
            prop_oneof![Just(Label::Pass), Just(Label::Fail)],
        ),
        0..30,
    )
    .prop_map(|pairs| {
        let pred = pairs.iter().enumerate().map(|(i, (p, _))| (format!("e{i}"), *p)).collect();
        let reference = pairs.iter().enumerate().map(|(i, (_, r))| (format!("e{i}"), *r)).collect();
        (pred, reference)
    })
}

fn close(a: Option<f64>, b: Option<f64>) -> bool {
    match (a, b) {
        (Some(x), Some(y)) => (x - y).abs() < 1e-12,
        (None, None) => true,
        _ => false,
    }
}

fn div(n: usize, d: usize) -> Option<f64> {
    (d > 0).then(|| n as f64 / d as f64)
}

proptest! {
    #![proptest_config(cases(500))]

    #[test]
    fn metrics_match_a_direct_tally((pred, reference) in labelings()) {
        let pairs: Vec<(Label, Label)> = pred.keys().map(|k| (pred[k], reference[k])).collect();
        let count = |p: Label, r: Label| pairs.iter().filter(|x| **x == (p, r)).count();
        let (tp, fp) = (count(Label::Pass, Label::Pass), count(Label::Pass, Label::Fail));
        let (fn_, tn) = (count(Label::Fail, Label::Pass), count(Label::Fail, Label::Fail));
        let (up, um) = (count(Label::Unverified, Label::Pass), count(Label::Unverified, Label::Fail));

        let c = confusion(&pred, &reference).unwrap();
        prop_assert_eq!(
            (c.tp, c.fp, c.fn_, c.tn, c.u_plus, c.u_minus),
            (tp as u64, fp as u64, fn_ as u64, tn as u64, up as u64, um as u64)
        );

        let ext = metrics(&c, Mode::Extended).unwrap();
        prop_assert!(close(ext.acc.value(), div(tp + tn, pairs.len())));
        prop_assert!(close(ext.prec.value(), div(tp, tp + fp)));
        prop_assert!(close(ext.rec.value(), div(tp, tp + fn_ + up)));
        let f1 = match (div(tp, tp + fp), div(tp, tp + fn_ + up)) {
            (Some(p), Some(r)) if p + r > 0.0 => Some(2.0 * p * r / (p + r)),
            _ => None,
        };
        prop_assert!(close(ext.f1.value(), f1));

        match metrics(&c, Mode::Binary) {
            Err(ScoreError::ModeViolation(u)) => prop_assert_eq!(u as usize, up + um),
            Ok(bin) => {
                prop_assert_eq!(up + um, 0);
                prop_assert!(close(bin.acc.value(), div(tp + tn, tp + tn + fp + fn_)));
                prop_assert!(close(bin.rec.value(), div(tp, tp + fn_)));
            }
            Err(e) => prop_assert!(false, "{e}"),
        }
    }
}

// ---- runtime vs oracle ----

proptest! {
    #![proptest_config(cases(300))]

    #[test]
    fn served_engine_agrees_with_oracle((build, patch, steps, seed) in common::gen::scenario()) {
        let served = common::served_observed(&build, &patch, &steps, seed);
        let oracle = common::oracle_observed(&build, &patch, &steps);
        prop_assert_eq!(served, oracle);
    }
}

#[test]
fn subprocess_runtime_agrees_with_oracle() {
    let factory = common::toy_factory("");
    let mut runner = proptest::test_runner::TestRunner::new(cases(25));
    runner
        .run(&common::gen::scenario(), |(build, patch, steps, seed)| {
            let got = common::session_observed(&factory, &build, &patch, &steps, seed);
            prop_assert_eq!(got, common::oracle_observed(&build, &patch, &steps));
            Ok(())
        })
        .unwrap();
}
