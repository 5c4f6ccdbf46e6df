//! Human-readable Markdown rendering of a completed run.

use std::fmt::Write;

use crate::pipeline::RunArtifacts;

/// Renders topics, the metric table, and the cost summary. Output is a pure
/// function of the artifacts.
pub fn render_report(artifacts: &RunArtifacts) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# Topic Modeling Report\n");

    if artifacts.dedup.topics.is_empty() {
        let _ = writeln!(out, "No topics were produced; metrics omitted.\n");
    } else {
        let _ = writeln!(out, "## Topics ({})\n", artifacts.dedup.topics.len());
        for topic in &artifacts.dedup.topics {
            let _ = writeln!(out, "### {}\n", topic.name);
            let _ = writeln!(out, "- Description: {}", topic.description);
            let _ = writeln!(out, "- Respondent profile: {}", topic.respondent_profile);
            let _ = writeln!(
                out,
                "- Representative words: ({})\n",
                topic.representative_words.join(", ")
            );
        }

        if let Some(metrics) = &artifacts.metrics {
            let _ = writeln!(out, "## Metrics\n");
            let _ = writeln!(out, "| Metric | Value |");
            let _ = writeln!(out, "|---|---|");
            let _ = writeln!(out, "| Word coherence (avg PMI) | {:.4} |", metrics.coherence);
            let _ = writeln!(out, "| Word diversity | {:.4} |", metrics.diversity);
            match metrics.avg_similarity {
                Some(sim) => {
                    let _ = writeln!(out, "| Avg topic similarity | {sim:.4} |");
                }
                None => {
                    let _ = writeln!(out, "| Avg topic similarity | n/a (fewer than 2 topics) |");
                }
            }
            let _ = writeln!(out, "| Document coverage | {:.4} |", metrics.coverage);
            let _ = writeln!(out);
            if !metrics.flags.is_empty() {
                let _ = writeln!(out, "Flags:\n");
                for flag in &metrics.flags {
                    let _ = writeln!(out, "- {flag}");
                }
                let _ = writeln!(out);
            }
        }
    }

    let cost = &artifacts.cost_summary;
    let _ = writeln!(out, "## Cost\n");
    let _ = writeln!(out, "- Exchanges: {}", cost.exchanges);
    let _ = writeln!(out, "- Input tokens: {}", cost.total_input_tokens);
    let _ = writeln!(out, "- Output tokens: {}", cost.total_output_tokens);
    let _ = writeln!(out, "- Total USD: {:.6}", cost.total_usd);

    if !artifacts.warnings.is_empty() {
        let _ = writeln!(out, "\n## Warnings\n");
        for warning in &artifacts.warnings {
            let _ = writeln!(out, "- {warning}");
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dedup::{DedupMethod, DedupResult};
    use crate::pipeline::CostSummary;
    use crate::topics::Topic;
    use std::collections::BTreeMap;

    fn artifacts_with(topics: Vec<Topic>) -> RunArtifacts {
        RunArtifacts {
            enriched: vec![],
            batch_results: vec![],
            dedup: DedupResult {
                topics,
                provenance: BTreeMap::new(),
                method: DedupMethod::Skipped,
            },
            metrics: None,
            cost_summary: CostSummary::default(),
            warnings: vec![],
        }
    }

    #[test]
    fn report_lists_topic_fields() {
        let artifacts = artifacts_with(vec![Topic {
            name: "Job Displacement Concerns".into(),
            description: "Anxiety about job loss".into(),
            respondent_profile: "Experienced professionals".into(),
            representative_words: vec![
                "displacement".into(),
                "automation".into(),
                "job loss".into(),
                "security".into(),
                "anxiety".into(),
            ],
        }]);
        let report = render_report(&artifacts);
        assert!(report.contains("### Job Displacement Concerns"));
        assert!(report.contains("(displacement, automation, job loss, security, anxiety)"));
        assert!(report.contains("Respondent profile: Experienced professionals"));
    }

    #[test]
    fn zero_topics_report_states_it() {
        let report = render_report(&artifacts_with(vec![]));
        assert!(report.contains("No topics were produced"));
        assert!(!report.contains("## Metrics"));
    }

    #[test]
    fn rendering_is_deterministic() {
        let artifacts = artifacts_with(vec![]);
        assert_eq!(render_report(&artifacts), render_report(&artifacts));
    }
}
