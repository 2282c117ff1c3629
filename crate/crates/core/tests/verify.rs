use std::sync::Arc;
use std::time::Instant;

use rug::Rational;
use znkz::verify::*;
use znkz::{enumerate_partitions, Error, OrderedPartition};

fn partitions(n: usize, m: usize) -> Vec<OrderedPartition> {
    let all = enumerate_partitions(n, m).unwrap();
    let mut out = vec![OrderedPartition::standard(n, m)];
    out.push(all[all.len() / 2].clone());
    out.push(all.last().unwrap().clone());
    out
}

#[test]
fn registry_passes_exhaustively_for_small_n_and_m() {
    let start = Instant::now();
    for (n, m) in [(2, 1), (2, 2), (3, 1), (3, 2)] {
        for pt in partitions(n, m) {
            for id in IdentityId::ALL {
                for r in run_all_indices(id, &pt, 100, 11).unwrap() {
                    let literal = r.reading.is_none_or(|x| x == Rel4Reading::Literal);
                    if literal {
                        assert!(r.pass, "{:?} {:?} {:?} {:?}", id, pt.one_based(), r.indices, r.witness);
                    }
                }
            }
        }
    }
    assert!(start.elapsed().as_secs() < 300);
}

#[test]
fn spot_checks_n4_m1_and_m3() {
    for (n, m) in [(4, 1), (2, 3)] {
        let pt = OrderedPartition::standard(n, m);
        for id in IdentityId::ALL {
            for r in run_all_indices(id, &pt, 20, 5).unwrap() {
                if r.reading != Some(Rel4Reading::Shifted) {
                    assert!(r.pass, "{id} ({n},{m}) {:?}", r.indices);
                }
            }
        }
    }
}

#[test]
fn rel4_reading_for_last_block() {
    // r = N - 1, l < m separates the two readings of B(r, l, k)
    for (n, m) in [(2, 2), (3, 2), (3, 3)] {
        let mut case = IdentityCase::new(IdentityId::Rel4, n, m, vec![n - 1, 1]).with_trials(30, 3);
        assert!(run_case(&case).unwrap().pass);
        case.reading = Rel4Reading::Shifted;
        assert!(!run_case(&case).unwrap().pass);
    }
    // away from the last block the readings agree
    let mut case = IdentityCase::new(IdentityId::Rel4, 3, 2, vec![1, 2]).with_trials(30, 3);
    case.reading = Rel4Reading::Shifted;
    assert!(run_case(&case).unwrap().pass);
}

#[test]
fn corrupted_rel4_fails_with_witness() {
    let mut case = IdentityCase::new(IdentityId::Rel4, 3, 2, vec![1, 1]).with_trials(100, 1);
    case.b_offset = 1;
    let res = run_case(&case).unwrap();
    assert!(!res.pass);
    let w = res.witness.unwrap();
    assert_eq!(w.lambdas.len(), 6);
    assert_ne!(w.value, "0");
}

#[test]
fn every_mutation_is_caught_within_five_trials() {
    for (n, m) in [(2, 2), (3, 2), (3, 1)] {
        let pt = OrderedPartition::standard(n, m);
        for id in IdentityId::ALL {
            for (s, ix) in admissible_indices(id, n, m).into_iter().enumerate() {
                let case = IdentityCase::new(id, n, m, ix.clone()).with_partition(pt.clone());
                let expr = build_identity(&case).unwrap();
                for seed in 0..3u64 {
                    let v = mutation_verdict(&expr, 5, seed * 1000 + s as u64).unwrap().unwrap();
                    assert!(!v.passed(), "{id} {ix:?} seed {seed}");
                }
            }
        }
    }
}

#[test]
fn prop5_and_resth_examples() {
    for p in 1..=6 {
        let case = IdentityCase::new(IdentityId::Prop5, 3, 2, vec![p]).with_trials(50, 9);
        assert!(run_case(&case).unwrap().pass);
    }
    for r in 1..=2 {
        let case = IdentityCase::new(IdentityId::Resth, 3, 2, vec![r]).with_trials(50, 9);
        assert!(run_case(&case).unwrap().pass);
    }
}

#[test]
fn index_errors() {
    let bad = |id, n, m, ix: Vec<usize>| {
        matches!(build_identity(&IdentityCase::new(id, n, m, ix)), Err(Error::BadIndices(_)))
    };
    // (r, l) = (N, m) is excluded
    assert!(bad(IdentityId::Rel2, 3, 2, vec![3, 2, 1]));
    assert!(bad(IdentityId::Rel5, 3, 2, vec![3, 2]));
    assert!(bad(IdentityId::Rel2, 3, 2, vec![1, 1, 1]));
    assert!(bad(IdentityId::Rel1, 3, 2, vec![1]));
    assert!(bad(IdentityId::Resth1, 3, 2, vec![]));
    assert!(bad(IdentityId::Resth2, 3, 2, vec![1, 4, 3]));
    let wrong = IdentityCase::new(IdentityId::Rel1, 3, 2, vec![1, 1]).with_partition(OrderedPartition::standard(2, 3));
    assert!(matches!(build_identity(&wrong), Err(Error::BadParameters(_))));
}

#[test]
fn q_sums() {
    for n in 2..=6 {
        for id in [IdentityId::QsumNeg, IdentityId::QsumPos] {
            assert!(run_case(&IdentityCase::new(id, n, 1, vec![]).with_trials(1, 0)).unwrap().pass);
        }
    }
}

#[test]
fn appendix_suites() {
    for (n, m) in [(2, 2), (3, 2), (4, 1)] {
        let rep = verify_appendix_suite(n, m, 50, 21).unwrap();
        assert!(rep.all_pass(), "{}", rep.table());
        assert!(rep.table().contains("f43"));
    }
    assert!(matches!(verify_appendix_suite(5, 1, 5, 0), Err(Error::BadParameters(_))));
}

#[test]
fn derivative_rule_is_consistent() {
    for p in 1..=4 {
        let case = IdentityCase::new(IdentityId::DsRule, 2, 2, vec![p]).with_trials(20, 4);
        assert!(run_case(&case).unwrap().pass);
    }
    // dropping the s-power correction breaks it
    let mut e = FormExpr::new(3, 1);
    e.push_term(Term {
        coef: Arc::new(|_| Some(Dual::int(1))),
        basis: Basis::DzOverS,
        d_lambda: Some(0),
    });
    assert!(!test_identity(&e, 3, 0).unwrap().passed());
}

#[test]
fn verdicts_are_deterministic_and_sampling_errors_surface() {
    let mut case = IdentityCase::new(IdentityId::Rel4, 2, 2, vec![1, 2]).with_trials(10, 77);
    case.b_offset = 1;
    let a = run_case(&case).unwrap().witness.unwrap();
    let b = run_case(&case).unwrap().witness.unwrap();
    assert_eq!((a.z, a.value), (b.z, b.value));

    let mut e = FormExpr::new(2, 1);
    e.push(Arc::new(|_| None), Basis::One);
    assert!(matches!(test_identity(&e, 4, 0), Err(Error::DegenerateSampling)));

    let mut ok = FormExpr::new(2, 1);
    ok.push(Arc::new(|_| Some(Dual::cst(Rational::new()))), Basis::One);
    assert!(test_identity(&ok, 4, 0).unwrap().passed());
}
