//! Cluster purity: `(1/N) * sum_k max_j |cluster_k ∩ class_j|`.

use std::collections::HashMap;
use std::hash::Hash;

use serde::{Deserialize, Serialize};

use super::ClusterError;

/// Exact purity as a rational `matched / total`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Purity {
    pub matched: usize,
    pub total: usize,
}

impl Purity {
    pub fn value(&self) -> f64 {
        self.matched as f64 / self.total as f64
    }

    pub fn percent(&self) -> f64 {
        100.0 * self.value()
    }
}

/// Purity of aligned slices: `assignments[i]` and `labels[i]` describe the
/// same point.
pub fn purity<C, L>(assignments: &[C], labels: &[L]) -> Result<Purity, ClusterError>
where
    C: Eq + Hash,
    L: Eq + Hash,
{
    if assignments.len() != labels.len() {
        return Err(ClusterError::LabelMismatch(format!(
            "{} assignments vs {} labels",
            assignments.len(),
            labels.len()
        )));
    }
    if assignments.is_empty() {
        return Err(ClusterError::NoPoints);
    }
    let mut table: HashMap<&C, HashMap<&L, usize>> = HashMap::new();
    for (c, l) in assignments.iter().zip(labels) {
        *table.entry(c).or_default().entry(l).or_default() += 1;
    }
    let matched = table
        .values()
        .map(|row| row.values().copied().max().unwrap_or(0))
        .sum();
    Ok(Purity {
        matched,
        total: assignments.len(),
    })
}

/// Purity over keyed maps; both maps must cover the same keys.
pub fn purity_by_key<K, C, L>(
    assignments: &HashMap<K, C>,
    labels: &HashMap<K, L>,
) -> Result<Purity, ClusterError>
where
    K: Eq + Hash + std::fmt::Debug,
    C: Eq + Hash,
    L: Eq + Hash,
{
    if let Some(k) = assignments.keys().find(|k| !labels.contains_key(*k)) {
        return Err(ClusterError::LabelMismatch(format!("no label for {k:?}")));
    }
    if assignments.len() != labels.len() {
        let k = labels.keys().find(|k| !assignments.contains_key(*k));
        return Err(ClusterError::LabelMismatch(format!("no assignment for {k:?}")));
    }
    let keys: Vec<&K> = assignments.keys().collect();
    let a: Vec<&C> = keys.iter().map(|k| &assignments[*k]).collect();
    let l: Vec<&L> = keys.iter().map(|k| &labels[*k]).collect();
    purity(&a, &l)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_counted_half() {
        let p = purity(&[0, 1, 0, 1], &["A", "A", "B", "B"]).unwrap();
        assert_eq!(p, Purity { matched: 2, total: 4 });
        assert_eq!(p.value(), 0.5);
    }

    #[test]
    fn identical_up_to_renaming_is_one() {
        let p = purity(&[7, 7, 3, 3, 9], &["x", "x", "y", "y", "z"]).unwrap();
        assert_eq!(p.value(), 1.0);
    }

    #[test]
    fn single_cluster_is_majority_share() {
        let p = purity(&[0; 5], &[1, 1, 1, 2, 3]).unwrap();
        assert_eq!(p, Purity { matched: 3, total: 5 });
    }

    #[test]
    fn mismatches_are_errors() {
        assert!(purity(&[0, 1], &[0]).is_err());
        assert!(purity::<u8, u8>(&[], &[]).is_err());
        let a: HashMap<_, _> = [("p1", 0), ("p2", 1)].into();
        let l: HashMap<_, _> = [("p1", "A"), ("p3", "B")].into();
        assert!(matches!(purity_by_key(&a, &l), Err(ClusterError::LabelMismatch(_))));
        let l: HashMap<_, _> = [("p1", "A"), ("p2", "A")].into();
        assert_eq!(purity_by_key(&a, &l).unwrap().value(), 1.0);
    }
}
