use std::collections::{BTreeMap, HashMap};

use proptest::prelude::*;

use xdomain::ann::{ClusterIndex, IndexParams};
use xdomain::clustering::{kmeans, purity, DenseRows, KMeansConfig};
use xdomain::corpus::SentenceRef;
use xdomain::embedding::Vector;
use xdomain::eval::{KeywordStripper, BUILTIN_KEYWORDS};
use xdomain::service::{fold, query_id, Feedback};

/// Independent purity: majority label count per cluster over a sorted
/// contingency table.
fn purity_oracle(assign: &[u32], labels: &[u32]) -> usize {
    let mut table: BTreeMap<(u32, u32), usize> = BTreeMap::new();
    for (&c, &l) in assign.iter().zip(labels) {
        *table.entry((c, l)).or_default() += 1;
    }
    let mut best: BTreeMap<u32, usize> = BTreeMap::new();
    for ((c, _), n) in table {
        let e = best.entry(c).or_default();
        *e = (*e).max(n);
    }
    best.values().sum()
}

fn assignments_and_labels() -> impl Strategy<Value = (Vec<u32>, Vec<u32>)> {
    (1usize..200).prop_flat_map(|n| (prop::collection::vec(0u32..8, n), prop::collection::vec(0u32..6, n)))
}

fn text_with_keywords() -> impl Strategy<Value = String> {
    let piece = prop_oneof![
        prop::sample::select(BUILTIN_KEYWORDS.to_vec()).prop_map(str::to_string),
        prop::sample::select(BUILTIN_KEYWORDS.to_vec()).prop_map(|k| k.to_uppercase()),
        "[a-z]{1,8}",
        Just("alloysalloys".to_string()),
        Just(" \n\t ".to_string()),
        Just(",".to_string()),
        Just("-".to_string()),
        Just("thin".to_string()),
        Just("films".to_string()),
    ];
    prop::collection::vec(piece, 0..12).prop_map(|v| v.join(" "))
}

fn points(n: usize, dim: usize) -> impl Strategy<Value = Vec<f32>> {
    prop::collection::vec(-10.0f32..10.0, n * dim)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn purity_matches_oracle_and_bounds((assign, labels) in assignments_and_labels()) {
        let p = purity(&assign, &labels).unwrap();
        prop_assert_eq!(p.matched, purity_oracle(&assign, &labels));
        prop_assert_eq!(p.total, assign.len());
        prop_assert!(p.value() > 0.0 && p.value() <= 1.0);
    }

    #[test]
    fn purity_ignores_cluster_and_label_names(
        (assign, labels) in assignments_and_labels(),
        cperm in Just((0u32..8).collect::<Vec<_>>()).prop_shuffle(),
        lperm in Just((0u32..6).collect::<Vec<_>>()).prop_shuffle(),
    ) {
        let base = purity(&assign, &labels).unwrap();
        let a2: Vec<u32> = assign.iter().map(|&c| cperm[c as usize]).collect();
        let l2: Vec<u32> = labels.iter().map(|&l| lperm[l as usize]).collect();
        prop_assert_eq!(purity(&a2, &labels).unwrap(), base);
        prop_assert_eq!(purity(&assign, &l2).unwrap(), base);
        prop_assert_eq!(purity(&a2, &l2).unwrap(), base);
    }

    #[test]
    fn keyword_stripping_is_idempotent(text in text_with_keywords()) {
        let s = KeywordStripper::new(&BUILTIN_KEYWORDS).unwrap();
        let once = s.strip(&text);
        let twice = s.strip(&once.text);
        prop_assert_eq!(&twice.text, &once.text);
        prop_assert!(!once.text.starts_with(' ') && !once.text.ends_with(' '));
        prop_assert!(!once.text.contains("  "));
    }

    #[test]
    fn kmeans_inertia_never_increases(data in points(40, 3), k in 1usize..6, seed in any::<u64>()) {
        let rows = DenseRows::new(&data, 3).unwrap();
        let m = kmeans(&rows, &KMeansConfig::new(k, seed)).unwrap();
        prop_assert!(!m.history.is_empty());
        for w in m.history.windows(2) {
            prop_assert!(w[1] <= w[0] * (1.0 + 1e-9) + 1e-9, "history {:?}", m.history);
        }
        prop_assert!((m.history.last().unwrap() - m.inertia).abs() <= 1e-6 * m.inertia.max(1.0));
        prop_assert_eq!(m.sizes.iter().sum::<usize>(), 40);
        prop_assert!(m.sizes.iter().all(|&s| s > 0));
        // recompute the objective from the returned model
        let recomputed: f64 = (0..40)
            .map(|i| {
                let c = &m.centroids[m.assignments[i] as usize];
                (0..3).map(|d| (data[i * 3 + d] as f64 - c[d] as f64).powi(2)).sum::<f64>()
            })
            .sum();
        prop_assert!((recomputed - m.inertia).abs() <= 1e-3 * recomputed.max(1.0));
    }

    #[test]
    fn exact_index_agrees_with_brute_force(data in points(60, 6), q in points(1, 6), t in 1usize..20) {
        let entries: Vec<(SentenceRef, Vector)> = data
            .chunks(6)
            .enumerate()
            .filter_map(|(i, c)| Vector::normalized_f32(c).ok().map(|v| (SentenceRef::new(format!("p{i:03}"), 0), v)))
            .collect();
        prop_assume!(!entries.is_empty());
        let Ok(qv) = Vector::normalized_f32(&q) else { return Ok(()) };
        let index = ClusterIndex::build(0, entries.clone(), IndexParams::default()).unwrap();
        let got = index.query(qv.as_slice(), t).unwrap();
        let mut want: Vec<(f32, &SentenceRef)> = entries
            .iter()
            .map(|(r, v)| (qv.as_slice().iter().zip(v.as_slice()).map(|(a, b)| a * b).sum::<f32>(), r))
            .collect();
        want.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(b.1)));
        prop_assert_eq!(got.len(), t.min(entries.len()));
        for (h, w) in got.iter().zip(&want) {
            prop_assert!((h.score - w.0).abs() <= 1e-5);
        }
    }

    #[test]
    fn query_id_ignores_whitespace_layout(words in prop::collection::vec("[a-z]{1,6}", 1..10), idx in 0usize..5) {
        let a = words.join(" ");
        let b = format!("  {}\n", words.join(" \t\n "));
        prop_assert_eq!(query_id(&a, idx), query_id(&b, idx));
        prop_assert_ne!(query_id(&a, idx), query_id(&a, idx + 1));
    }

    #[test]
    fn feedback_fold_keeps_the_last_record(
        ops in prop::collection::vec((0usize..3, 0usize..4, 1i64..=3, any::<bool>(), any::<u64>()), 0..40)
    ) {
        let records: Vec<Feedback> = ops
            .iter()
            .map(|&(s, p, n, r, ts)| Feedback::new(&format!("s{s}"), &format!("p{p}"), n, r, ts).unwrap())
            .collect();
        let mut want: HashMap<(String, String), Feedback> = HashMap::new();
        for r in &records {
            want.insert((r.session_id.clone(), r.paper_id.clone()), r.clone());
        }
        let got = fold(records);
        prop_assert_eq!(got.len(), want.len());
        for (k, v) in got {
            prop_assert_eq!(&want[&k], &v);
        }
    }
}
