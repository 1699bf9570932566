//! Clusterers used to group tags level by level.

use kodama::{linkage, Method};

use crate::embedding::{cosine_unchecked, Embedding};
use crate::error::{Error, Result};

/// A partition of point indices. Each inner list is one cluster.
pub type Partition = Vec<Vec<usize>>;

pub trait Clusterer: Send + Sync {
    /// Partition `points`; every index must appear exactly once.
    fn cluster(&self, points: &[Embedding]) -> Result<Partition>;
}

/// `1 - cosine`, the same similarity the tree descent routes by. A zero
/// vector sits at distance 1 from everything.
pub(crate) fn cosine_distance(a: &[f64], b: &[f64]) -> f64 {
    1.0 - cosine_unchecked(a, b)
}

/// Sort members within clusters, then clusters by their first member.
pub fn canonicalize(mut partition: Partition) -> Partition {
    partition.iter_mut().for_each(|c| c.sort_unstable());
    partition.retain(|c| !c.is_empty());
    partition.sort_by_key(|c| c[0]);
    partition
}

/// Check that `partition` covers `0..n` exactly once with nonempty clusters.
pub fn validate_partition(partition: &Partition, n: usize) -> Result<()> {
    let mut seen = vec![false; n];
    for cluster in partition {
        if cluster.is_empty() {
            return Err(Error::Validation(
                "clusterer returned an empty cluster".into(),
            ));
        }
        for &i in cluster {
            if i >= n || std::mem::replace(&mut seen[i], true) {
                return Err(Error::Validation(format!(
                    "clusterer partition is not a cover of 0..{n} (index {i})"
                )));
            }
        }
    }
    if seen.iter().any(|s| !s) || partition.is_empty() {
        return Err(Error::Validation(
            "clusterer partition misses points".into(),
        ));
    }
    Ok(())
}

/// Average-linkage agglomerative clustering over cosine distance. Merges
/// proceed in order of linkage distance until at most `ceil(sqrt(n))`
/// clusters remain.
#[derive(Clone, Copy, Debug, Default)]
pub struct AverageLinkage;

impl AverageLinkage {
    pub fn target_clusters(n: usize) -> usize {
        (n as f64).sqrt().ceil() as usize
    }
}

impl Clusterer for AverageLinkage {
    fn cluster(&self, points: &[Embedding]) -> Result<Partition> {
        let n = points.len();
        if n <= 1 {
            return Ok((0..n).map(|i| vec![i]).collect());
        }
        let mut condensed = Vec::with_capacity(n * (n - 1) / 2);
        for i in 0..n {
            for j in i + 1..n {
                condensed.push(cosine_distance(points[i].values(), points[j].values()));
            }
        }
        let dendrogram = linkage(&mut condensed, n, Method::Average);

        let target = Self::target_clusters(n);
        let mut members: Vec<Option<Vec<usize>>> = (0..n).map(|i| Some(vec![i])).collect();
        for step in dendrogram.steps().iter().take(n - target) {
            let mut a = members[step.cluster1].take().expect("cluster merged twice");
            let b = members[step.cluster2].take().expect("cluster merged twice");
            a.extend(b);
            members.push(Some(a));
        }
        Ok(canonicalize(members.into_iter().flatten().collect()))
    }
}
