//! Cluster descriptors: top TF-IDF unigrams with each cluster's text treated
//! as one pseudo-document.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::ClusterError;
use crate::embedding::tfidf::smoothed_idf;
use crate::text::tokenize;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DescriptorConfig {
    pub top_n: usize,
    /// Tokens present in more than this share of pseudo-documents are dropped.
    pub max_df_ratio: f64,
}

impl Default for DescriptorConfig {
    fn default() -> Self {
        Self {
            top_n: 5,
            max_df_ratio: 0.6,
        }
    }
}

fn term_counts<S: AsRef<str>>(texts: &[S]) -> HashMap<String, u32> {
    let mut counts = HashMap::new();
    for t in texts {
        for tok in tokenize(t.as_ref()) {
            *counts.entry(tok).or_default() += 1;
        }
    }
    counts
}

fn top_terms(scored: impl IntoIterator<Item = (String, f64)>, top_n: usize) -> Vec<String> {
    let mut scored: Vec<(String, f64)> = scored.into_iter().collect();
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    scored.into_iter().take(top_n).map(|(t, _)| t).collect()
}

/// Scored terms per cluster (`tf * idf`), before truncation. Exposed for
/// inspection and tests.
pub fn descriptor_scores<S: AsRef<str>>(
    cluster_texts: &[Vec<S>],
    cfg: &DescriptorConfig,
) -> Result<Vec<BTreeMap<String, f64>>, ClusterError> {
    let c = cluster_texts.len();
    if c < 2 {
        return Err(ClusterError::InvalidConfig(
            "descriptors need at least two clusters".into(),
        ));
    }
    let counts: Vec<HashMap<String, u32>> = cluster_texts.iter().map(|t| term_counts(t)).collect();
    let mut df: HashMap<&str, usize> = HashMap::new();
    for row in &counts {
        for term in row.keys() {
            *df.entry(term.as_str()).or_default() += 1;
        }
    }
    Ok(counts
        .iter()
        .map(|row| {
            row.iter()
                .filter(|(term, _)| df[term.as_str()] as f64 / c as f64 <= cfg.max_df_ratio)
                .map(|(term, &tf)| (term.clone(), tf as f64 * smoothed_idf(c, df[term.as_str()])))
                .collect()
        })
        .collect())
}

/// Top `cfg.top_n` unigrams per cluster; ties broken lexicographically.
/// A cluster without surviving tokens gets an empty list.
pub fn descriptors<S: AsRef<str>>(
    cluster_texts: &[Vec<S>],
    cfg: &DescriptorConfig,
) -> Result<Vec<Vec<String>>, ClusterError> {
    Ok(descriptor_scores(cluster_texts, cfg)?
        .into_iter()
        .map(|scores| top_terms(scores, cfg.top_n))
        .collect())
}

/// Most frequent terms of a single cluster, for views with no contrast set.
pub fn frequent_terms<S: AsRef<str>>(texts: &[S], top_n: usize) -> Vec<String> {
    top_terms(
        term_counts(texts).into_iter().map(|(t, c)| (t, c as f64)),
        top_n,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exclusive_frequent_token_is_a_descriptor() {
        let clusters = vec![
            vec!["steel alloys hardness"],
            vec!["polymer chains", "polymer films"],
            vec!["graphene sheets", "graphene graphene oxide"],
            vec!["perovskite cells"],
        ];
        let d = descriptors(&clusters, &DescriptorConfig::default()).unwrap();
        assert_eq!(d[2][0], "graphene");
        assert_eq!(d[1][0], "polymer");
    }

    #[test]
    fn uniform_token_is_outranked_by_exclusive_token() {
        let clusters = vec![vec!["common alpha"], vec!["common beta"], vec!["common gamma"]];
        let cfg = DescriptorConfig {
            top_n: 2,
            max_df_ratio: 1.0,
        };
        let d = descriptors(&clusters, &cfg).unwrap();
        assert_eq!(d[0], vec!["alpha", "common"]);
        assert_eq!(d[1], vec!["beta", "common"]);
        // default cap removes the ubiquitous token outright
        let d = descriptors(&clusters, &DescriptorConfig::default()).unwrap();
        assert_eq!(d[2], vec!["gamma"]);
    }

    #[test]
    fn ties_break_lexicographically_and_empty_cluster_is_ok() {
        let clusters = vec![vec!["zeta beta"], vec!["the of and"]];
        let d = descriptors(&clusters, &DescriptorConfig::default()).unwrap();
        assert_eq!(d[0], vec!["beta", "zeta"]);
        assert!(d[1].is_empty());
    }

    #[test]
    fn needs_two_clusters() {
        assert!(descriptors(&[vec!["only one"]], &DescriptorConfig::default()).is_err());
        assert_eq!(frequent_terms(&["cat cat dog"], 1), vec!["cat"]);
    }
}
