//! Property-based invariants for the index and its oracle.

use proptest::prelude::*;

use treble_index::{exact_search, HnswConfig, HnswIndex};

const DIM: usize = 4;

fn items_strategy() -> impl Strategy<Value = Vec<(u32, Vec<f32>)>> {
    // BTreeMap guarantees unique ids; values stay finite by construction.
    proptest::collection::btree_map(
        0u32..500,
        proptest::collection::vec(-1.0f32..1.0, DIM),
        1..40,
    )
    .prop_map(|m| m.into_iter().collect())
}

fn query_strategy() -> impl Strategy<Value = Vec<f32>> {
    proptest::collection::vec(-1.0f32..1.0, DIM)
}

/// Independent five-line reference for the oracle itself.
fn naive_topk(items: &[(u32, Vec<f32>)], query: &[f32], k: usize) -> Vec<(u32, f32)> {
    let mut scored: Vec<(u32, f32)> = items
        .iter()
        .map(|(id, v)| (*id, v.iter().zip(query).map(|(a, b)| a * b).sum()))
        .collect();
    scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    scored.truncate(k);
    scored
}

proptest! {
    #[test]
    fn exact_search_matches_naive_sort(items in items_strategy(), query in query_strategy(), k in 0usize..10) {
        let index = HnswIndex::build(DIM, HnswConfig::default(), items.clone()).unwrap();
        let got = exact_search(&index, &query, k).unwrap();
        let want = naive_topk(&items, &query, k);
        prop_assert_eq!(got.len(), want.len());
        for (hit, (id, score)) in got.iter().zip(want.iter()) {
            prop_assert_eq!(hit.id, *id);
            prop_assert_eq!(hit.score, *score);
        }
    }

    #[test]
    fn search_results_are_valid_sorted_and_deterministic(items in items_strategy(), query in query_strategy(), k in 1usize..10) {
        let index = HnswIndex::build(DIM, HnswConfig::default(), items.clone()).unwrap();
        let hits = index.search(&query, k).unwrap();
        prop_assert_eq!(hits.len(), k.min(items.len()));
        let known: std::collections::BTreeSet<u32> = items.iter().map(|(id, _)| *id).collect();
        for w in hits.windows(2) {
            prop_assert!(w[0].score > w[1].score || (w[0].score == w[1].score && w[0].id < w[1].id));
        }
        let mut seen = std::collections::BTreeSet::new();
        for h in &hits {
            prop_assert!(known.contains(&h.id));
            prop_assert!(seen.insert(h.id), "duplicate id {}", h.id);
        }
        prop_assert_eq!(index.search(&query, k).unwrap(), hits);
    }

    #[test]
    fn round_trip_preserves_bytes(items in items_strategy()) {
        let index = HnswIndex::build(DIM, HnswConfig::default(), items).unwrap();
        let bytes = index.to_bytes();
        let loaded = HnswIndex::from_bytes(&bytes).unwrap();
        prop_assert_eq!(loaded.to_bytes(), bytes);
    }
}
