//! Property-based tests for the numeric and packing invariants.

mod common;

use std::collections::{BTreeMap, HashSet};

use proptest::prelude::*;

use maltopic::dedup::dedup_deterministic;
use maltopic::enrich::EnrichedResponse;
use maltopic::gateway::{estimate_tokens, TokenBudget};
use maltopic::ingest::{load_dataset, save_dataset, FieldSchema, SurveyDataset, SurveyRecord};
use maltopic::metrics::{cosine, coverage, normalize_and_tokenize, CoverageConfig, EmbeddingVector, MockEmbedder};
use maltopic::topics::{partition_into_batches, TopicBatchResult};
use maltopic::Topic;

fn response(id: usize, text: String) -> EnrichedResponse {
    EnrichedResponse {
        record_id: id.to_string(),
        original_text: text.clone(),
        enriched_text: text,
        context_snapshot: BTreeMap::new(),
        excluded: false,
    }
}

proptest! {
    #[test]
    fn estimate_tokens_is_subadditive(a in ".{0,200}", b in ".{0,200}") {
        let joined = format!("{a}{b}");
        let whole = estimate_tokens(&joined);
        let parts = estimate_tokens(&a) + estimate_tokens(&b);
        prop_assert!(whole <= parts);
        // Ceiling rounding loses at most one token per split point.
        prop_assert!(parts <= whole + 1);
    }

    #[test]
    fn partition_preserves_order_and_respects_capacity(
        lens in prop::collection::vec(1usize..3000, 0..30),
        max_input in 2000u64..10_000,
    ) {
        let responses: Vec<EnrichedResponse> = lens
            .iter()
            .enumerate()
            .map(|(i, len)| response(i, "x".repeat(*len)))
            .collect();
        let budget = TokenBudget { max_input_tokens: max_input, max_output_tokens: 16_000, safety_margin: 0.1 };
        let capacity = budget.effective_input_tokens();
        match partition_into_batches(&responses, &budget, 0) {
            Ok(batches) => {
                let flat: Vec<&str> = batches
                    .iter()
                    .flatten()
                    .map(|r| r.record_id.as_str())
                    .collect();
                let original: Vec<&str> = responses.iter().map(|r| r.record_id.as_str()).collect();
                prop_assert_eq!(flat, original);
                for batch in &batches {
                    prop_assert!(!batch.is_empty());
                    let total: u64 = batch.iter().map(|r| estimate_tokens(&r.enriched_text)).sum();
                    prop_assert!(total <= capacity);
                }
            }
            Err(_) => {
                // Only a single response over capacity justifies failure.
                prop_assert!(lens.iter().any(|l| estimate_tokens(&"x".repeat(*l)) > capacity));
            }
        }
    }

    #[test]
    fn cosine_symmetry_and_scale_invariance(
        xs in prop::collection::vec(-100.0f64..100.0, 2..10),
        ys in prop::collection::vec(-100.0f64..100.0, 2..10),
        scale in 0.01f64..100.0,
    ) {
        let dim = xs.len().min(ys.len());
        let u = EmbeddingVector::new(xs[..dim].to_vec());
        let v = EmbeddingVector::new(ys[..dim].to_vec());
        prop_assume!(u.norm() > 1e-9 && v.norm() > 1e-9);
        let uv = cosine(&u, &v).unwrap();
        let vu = cosine(&v, &u).unwrap();
        prop_assert!((uv - vu).abs() <= 1e-12);
        prop_assert!((-1.0 - 1e-9..=1.0 + 1e-9).contains(&uv));
        let scaled = EmbeddingVector::new(u.components.iter().map(|x| x * scale).collect());
        let su = cosine(&scaled, &v).unwrap();
        prop_assert!((uv - su).abs() <= 1e-6);
    }

    #[test]
    fn dedup_deterministic_idempotent_and_nonexpanding(
        names in prop::collection::vec("[a-d]{1,2}", 1..12),
    ) {
        let batches: Vec<TopicBatchResult> = names
            .chunks(3)
            .enumerate()
            .map(|(i, chunk)| TopicBatchResult {
                batch_index: i,
                record_ids: vec![format!("r{i}")],
                topics: chunk
                    .iter()
                    .map(|n| Topic {
                        name: n.clone(),
                        description: format!("about {n}"),
                        respondent_profile: "anyone".to_string(),
                        representative_words: vec![n.clone()],
                    })
                    .collect(),
                repair_retries: 0,
            })
            .collect();
        let total: usize = batches.iter().map(|b| b.topics.len()).sum();
        let once = dedup_deterministic(&batches);
        prop_assert!(once.topics.len() <= total);
        let distinct: HashSet<String> = names.iter().map(|n| n.to_lowercase()).collect();
        prop_assert_eq!(once.topics.len(), distinct.len());
        let again = dedup_deterministic(&[TopicBatchResult {
            batch_index: 0,
            record_ids: vec!["r".to_string()],
            topics: once.topics.clone(),
            repair_retries: 0,
        }]);
        prop_assert_eq!(again.topics, once.topics);
    }

    #[test]
    fn ingest_round_trips(
        rows in prop::collection::vec(("[a-z]{1,8}", "[a-z ]{0,20}"), 0..20),
    ) {
        let schema = vec![FieldSchema::structured("role"), FieldSchema::free_text("comment")];
        let records: Vec<SurveyRecord> = rows
            .iter()
            .enumerate()
            .map(|(i, (role, comment))| {
                let mut values = BTreeMap::new();
                values.insert("role".to_string(), role.clone());
                values.insert("comment".to_string(), comment.trim().to_string());
                SurveyRecord { record_id: i.to_string(), values }
            })
            .collect();
        let dataset = SurveyDataset { schema: schema.clone(), records };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("roundtrip.csv");
        save_dataset(&dataset, &path).unwrap();
        let loaded = load_dataset(&path, &schema).unwrap();
        prop_assert_eq!(loaded.records, dataset.records);
    }

    #[test]
    fn coverage_is_nonincreasing_in_theta(
        doc_words in prop::collection::vec(prop::collection::vec(0usize..6, 1..6), 1..8),
        thetas in prop::collection::vec(0.0f64..1.0, 2..5),
    ) {
        let pool = ["privacy", "security", "cost", "trust", "hiring", "ethics"];
        let docs: Vec<(String, String)> = doc_words
            .iter()
            .enumerate()
            .map(|(i, ws)| {
                let text: Vec<&str> = ws.iter().map(|w| pool[*w]).collect();
                (format!("d{i}"), text.join(" "))
            })
            .collect();
        let corpus = normalize_and_tokenize(&docs, &HashSet::new());
        let topics = vec![Topic {
            name: "privacy".to_string(),
            description: "security".to_string(),
            respondent_profile: "anyone".to_string(),
            representative_words: vec!["cost".to_string(), "trust".to_string()],
        }];
        let embedder = MockEmbedder::default();
        let mut sorted = thetas.clone();
        sorted.sort_by(f64::total_cmp);
        let mut last = f64::INFINITY;
        for theta in sorted {
            let (fraction, _) = coverage(&corpus, &topics, &embedder, &CoverageConfig { theta }).unwrap();
            prop_assert!(fraction <= last + 1e-12);
            last = fraction;
        }
    }
}
