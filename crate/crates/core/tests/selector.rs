use std::collections::BTreeSet;
use std::sync::Arc;

use gridflow_core::embed::{cosine_sim, Embedder, Embedding, HashedBagOfWords, HASHED_DIM};
use gridflow_core::exemplar::{ExemplarSet, ExpertPair};
use gridflow_core::selector::{rank_by_similarity, EmbeddingCache, Selector};
use gridflow_core::Workflow;
use gridflow_oracles::ranking;
use proptest::prelude::*;

fn corpus(queries: &[&str]) -> ExemplarSet {
    ExemplarSet {
        pairs: queries
            .iter()
            .map(|q| ExpertPair {
                query: q.to_string(),
                workflow: Workflow::default(),
            })
            .collect(),
    }
}

fn vector() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec((-3i32..4).prop_map(|v| v as f64), 4)
        .prop_filter("nonzero", |v| v.iter().any(|x| *x != 0.0))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn ranking_matches_brute_force(query in vector(), items in prop::collection::vec(vector(), 1..12)) {
        let q = Embedding(query.clone());
        let c: Vec<Embedding> = items.iter().cloned().map(Embedding).collect();
        let ours: Vec<usize> = rank_by_similarity(&q, &c).unwrap().iter().map(|r| r.index).collect();
        prop_assert_eq!(ours, ranking::rank(&query, &items));
    }

    #[test]
    fn positive_scaling_leaves_order_unchanged(
        query in vector(),
        items in prop::collection::vec(vector(), 1..12),
        factors in prop::collection::vec(prop_oneof![Just(0.5), Just(2.0), Just(4.0), Just(0.25)], 12),
    ) {
        let q = Embedding(query);
        let c: Vec<Embedding> = items.iter().cloned().map(Embedding).collect();
        let scaled: Vec<Embedding> = c.iter().zip(&factors).map(|(e, f)| e.scaled(*f)).collect();
        let base = rank_by_similarity(&q, &c).unwrap();
        let after = rank_by_similarity(&q.scaled(8.0), &scaled).unwrap();
        prop_assert_eq!(
            base.iter().map(|r| r.index).collect::<Vec<_>>(),
            after.iter().map(|r| r.index).collect::<Vec<_>>()
        );
        for (a, b) in base.iter().zip(&after) {
            prop_assert!((a.score - b.score).abs() <= 1e-12);
        }
    }

    #[test]
    fn scores_are_non_increasing(words in prop::collection::vec("[a-e]{1,3}( [a-e]{1,3}){0,4}", 2..8), k in 1usize..10) {
        let refs: Vec<&str> = words.iter().map(String::as_str).collect();
        let selector = Selector::new(corpus(&refs), Arc::new(HashedBagOfWords), None).unwrap();
        let ranked = selector.rank("a b c").unwrap();
        for w in ranked.windows(2) {
            prop_assert!(w[0].score >= w[1].score);
        }
        let top = selector.select_top_k("a b c", k).unwrap();
        prop_assert_eq!(top.len(), k.min(refs.len()));
        for p in &top {
            prop_assert!(refs.contains(&p.query.as_str()));
        }
    }
}

#[test]
fn disjoint_texts_are_orthogonal() {
    let e = HashedBagOfWords;
    let a = e.embed("alpha beta").unwrap();
    let b = e.embed("gamma delta").unwrap();
    let dot: f64 = a.0.iter().zip(&b.0).map(|(x, y)| x * y).sum();
    let shared = a.0.iter().zip(&b.0).any(|(x, y)| *x != 0.0 && *y != 0.0);
    assert!(!shared, "hash collision in the test vocabulary");
    assert_eq!(dot, 0.0);
    assert_eq!(cosine_sim(&a, &b).unwrap(), 0.0);
}

#[test]
fn hashed_vectors_match_hand_built_term_counts() {
    let e = HashedBagOfWords;
    let v = e.embed("grid grid power").unwrap();
    let mut expected = vec![0.0; HASHED_DIM];
    let bucket = |t: &str| (gridflow_core::embed::fnv1a(t.as_bytes()) % HASHED_DIM as u64) as usize;
    expected[bucket("grid")] += 2.0;
    expected[bucket("power")] += 1.0;
    let n = 5f64.sqrt();
    for (x, y) in v.0.iter().zip(&expected) {
        assert!((x - y / n).abs() < 1e-15);
    }
}

#[test]
fn exact_query_ranks_first_and_saturates() {
    let set = corpus(&[
        "count the capacitors",
        "run power flow and plot voltages",
        "sparse curtailment hosting capacity",
        "total load of the feeder",
        "infeasibility analysis with slack currents",
    ]);
    let selector = Selector::new(set.clone(), Arc::new(HashedBagOfWords), None).unwrap();
    let top = selector.select_top_k("total load of the feeder", 1).unwrap();
    assert_eq!(top[0].query, "total load of the feeder");
    let all = selector.select_top_k("total load of the feeder", 50).unwrap();
    assert_eq!(all.len(), 5);
    let got: BTreeSet<&str> = all.iter().map(|p| p.query.as_str()).collect();
    let want: BTreeSet<&str> = set.pairs.iter().map(|p| p.query.as_str()).collect();
    assert_eq!(got, want);
    assert!(selector.select_top_k("x", 0).is_err());
    assert!(Selector::new(ExemplarSet::default(), Arc::new(HashedBagOfWords), None).is_err());
}

#[test]
fn shipped_corpus_subset_equality_at_full_k() {
    let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/exemplars.json");
    let set = ExemplarSet::load(&path).unwrap();
    set.validate(&gridflow_core::grid_registry().export_descriptors(true)).unwrap();
    let selector = Selector::new(set.clone(), Arc::new(HashedBagOfWords), None).unwrap();
    let top = selector.select_top_k("plot the voltages after curtailment", set.len()).unwrap();
    let mut a: Vec<String> = top.iter().map(|p| p.query.clone()).collect();
    let mut b: Vec<String> = set.pairs.iter().map(|p| p.query.clone()).collect();
    a.sort();
    b.sort();
    assert_eq!(a, b);
}

struct Counting(std::sync::atomic::AtomicUsize);

impl Embedder for Counting {
    fn id(&self) -> String {
        "counting".into()
    }

    fn embed(&self, text: &str) -> Result<Embedding, gridflow_core::embed::EmbedError> {
        self.0.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
        HashedBagOfWords.embed(text)
    }
}

#[test]
fn cache_reuses_corpus_embeddings() {
    let dir = tempfile::tempdir().unwrap();
    let cache = EmbeddingCache::new(dir.path());
    let set = corpus(&["one two", "three four", "five"]);
    let counter = Arc::new(Counting(Default::default()));
    let first = Selector::new(set.clone(), counter.clone(), Some(&cache)).unwrap();
    assert_eq!(counter.0.load(std::sync::atomic::Ordering::SeqCst), 3);
    let second = Selector::new(set.clone(), counter.clone(), Some(&cache)).unwrap();
    assert_eq!(counter.0.load(std::sync::atomic::Ordering::SeqCst), 3);
    assert_eq!(
        first.rank("two three").unwrap().iter().map(|r| r.index).collect::<Vec<_>>(),
        second.rank("two three").unwrap().iter().map(|r| r.index).collect::<Vec<_>>()
    );
    assert!(cache.file_for("counting", &set.digest()).is_file());
    assert_eq!(counter.0.load(std::sync::atomic::Ordering::SeqCst), 5);
    let other = corpus(&["one two", "six"]);
    Selector::new(other, counter.clone(), Some(&cache)).unwrap();
    assert_eq!(counter.0.load(std::sync::atomic::Ordering::SeqCst), 7);
}
