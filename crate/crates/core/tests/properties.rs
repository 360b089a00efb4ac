mod common;

use common::bfs_closure;
use memomut_core::analysis::{dependency_closure, CallGraph};
use memomut_core::lang::Datum;
use memomut_core::memo::{canonical_decode, canonical_encode};
use proptest::prelude::*;

fn datum() -> impl Strategy<Value = Datum> {
    let leaf = prop_oneof![
        any::<i64>().prop_map(Datum::Int),
        any::<bool>().prop_map(Datum::Bool),
        ".{0,12}".prop_map(Datum::Str),
        "[a-z_]{1,8}".prop_map(Datum::FnRef),
        Just(Datum::Unit),
    ];
    leaf.prop_recursive(4, 48, 6, |inner| prop::collection::vec(inner, 0..6).prop_map(Datum::Arr))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn encoding_round_trips(d in datum()) {
        let bytes = canonical_encode(&d.thaw());
        prop_assert_eq!(canonical_decode(&bytes).unwrap(), d);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn equal_values_encode_equally(d in datum()) {
        prop_assert_eq!(canonical_encode(&d.thaw()), canonical_encode(&d.thaw()));
    }

    #[test]
    fn closure_matches_bfs(n in 1usize..50, edges in prop::collection::vec((0usize..50, 0usize..50), 0..150)) {
        let names: Vec<String> = (0..n).map(|i| format!("f{i}")).collect();
        let edges: Vec<(&str, &str)> = edges
            .iter()
            .filter(|(a, b)| *a < n && *b < n)
            .map(|(a, b)| (names[*a].as_str(), names[*b].as_str()))
            .collect();
        let cg = CallGraph::from_edges(names.iter().map(String::as_str), edges);
        let closure = dependency_closure(&cg);
        prop_assert_eq!(&closure.reach, &bfs_closure(&cg));
        for f in &names {
            prop_assert!(closure.depends_on(f, f));
        }
    }

    #[test]
    fn distinct_values_encode_distinctly(a in datum(), b in datum()) {
        prop_assert_eq!(a == b, canonical_encode(&a.thaw()) == canonical_encode(&b.thaw()));
    }
}
