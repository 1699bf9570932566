//! Contextual tree: an immutable cluster hierarchy over tags.
//!
//! Leaves are tags; their centroids are the tag mean embeddings. Tags are
//! grouped bottom-up: the mean embeddings are reduced once, and each level is
//! a partition of the level below computed by a [`Clusterer`] over the
//! reduced points. Centroids of internal nodes live in the original
//! embedding space (mean of descendant leaf centroids) so queries can be
//! compared against them directly.

mod cluster;
mod reduce;

use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::embedding::{cosine_unchecked, Embedding};
use crate::error::{Error, Result};
use crate::memory::{ContextualMemory, TagSetFingerprint};

pub use cluster::{canonicalize, validate_partition, AverageLinkage, Clusterer, Partition};
pub use reduce::{principal_directions, IdentityReducer, PcaReducer, Reducer};

pub type NodeId = usize;

pub const DEFAULT_MAX_TARGET_DIM: usize = 16;

/// Default reduction width: `min(16, dim)`.
pub fn default_target_dim(dim: usize) -> usize {
    dim.min(DEFAULT_MAX_TARGET_DIM)
}

/// Levels this small are attached straight to the root instead of being
/// clustered further.
pub const ROOT_FANOUT_MAX: usize = 3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TreeNode {
    pub id: NodeId,
    pub parent: Option<NodeId>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub tag_name: Option<String>,
    #[serde(skip)]
    pub children: Vec<NodeId>,
    pub centroid: Embedding,
}

impl TreeNode {
    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }
}

#[derive(Clone, Debug)]
pub struct ContextualTree {
    nodes: Vec<TreeNode>,
    level_sizes: Vec<usize>,
    built_from: usize,
    fingerprint: TagSetFingerprint,
    leaves: BTreeMap<String, NodeId>,
}

struct Proto {
    children: Vec<usize>,
    leaves: Vec<usize>,
}

fn mean_of(points: &[&[f64]]) -> Vec<f64> {
    let mut sum = vec![0.0; points[0].len()];
    for p in points {
        for (s, v) in sum.iter_mut().zip(p.iter()) {
            *s += v;
        }
    }
    let n = points.len() as f64;
    sum.into_iter().map(|s| s / n).collect()
}

impl ContextualTree {
    /// Build with the default PCA reducer and average-linkage clusterer.
    pub fn build_default(memory: &ContextualMemory) -> Result<ContextualTree> {
        Self::build(
            memory,
            &PcaReducer,
            &AverageLinkage,
            default_target_dim(memory.dim()),
        )
    }

    pub fn build(
        memory: &ContextualMemory,
        reducer: &dyn Reducer,
        clusterer: &dyn Clusterer,
        target_dim: usize,
    ) -> Result<ContextualTree> {
        let names: Vec<&str> = memory.tag_names().collect();
        let means: Vec<Embedding> = memory.tags().map(|t| t.mean_embedding().clone()).collect();
        let n = names.len();
        if n == 0 {
            return Err(Error::EmptyInput(
                "cannot build a contextual tree without tags",
            ));
        }

        let mut protos: Vec<Proto> = (0..n)
            .map(|i| Proto {
                children: Vec::new(),
                leaves: vec![i],
            })
            .collect();
        let mut level: Vec<usize> = (0..n).collect();

        let reduced = if n > ROOT_FANOUT_MAX {
            let r = reducer.reduce(&means, target_dim)?;
            if r.len() != n {
                return Err(Error::Validation(format!(
                    "reducer returned {} points for {n} inputs",
                    r.len()
                )));
            }
            r
        } else {
            Vec::new()
        };

        let root = loop {
            if level.len() <= ROOT_FANOUT_MAX {
                break push_parent(&mut protos, level);
            }
            let points: Vec<Embedding> = level
                .iter()
                .map(|&p| {
                    let leaf_points: Vec<&[f64]> = protos[p]
                        .leaves
                        .iter()
                        .map(|&l| reduced[l].values())
                        .collect();
                    Embedding::new(mean_of(&leaf_points))
                })
                .collect::<Result<_>>()?;
            let partition = clusterer.cluster(&points)?;
            validate_partition(&partition, points.len())?;
            let mut partition = canonicalize(partition);
            if partition.len() == 1 {
                break push_parent(&mut protos, level);
            }
            if partition.len() >= level.len() {
                partition = force_merge(&points);
            }
            level = partition
                .into_iter()
                .map(|cluster| {
                    push_parent(&mut protos, cluster.into_iter().map(|i| level[i]).collect())
                })
                .collect();
        };

        // Canonical ids: breadth-first from the root, children in partition order.
        let mut ids = vec![usize::MAX; protos.len()];
        let mut order = Vec::with_capacity(protos.len());
        let mut queue = VecDeque::from([(root, None::<NodeId>, 0usize)]);
        let mut depth_of = Vec::new();
        while let Some((p, parent, depth)) = queue.pop_front() {
            ids[p] = order.len();
            order.push((p, parent));
            depth_of.push(depth);
            for &c in &protos[p].children {
                queue.push_back((c, Some(ids[p]), depth + 1));
            }
        }

        let mut nodes = Vec::with_capacity(order.len());
        let mut leaves = BTreeMap::new();
        for &(p, parent) in &order {
            let proto = &protos[p];
            let leaf_centroids: Vec<&[f64]> =
                proto.leaves.iter().map(|&l| means[l].values()).collect();
            let is_leaf = proto.children.is_empty();
            let tag_name = is_leaf.then(|| names[proto.leaves[0]].to_string());
            if let Some(name) = &tag_name {
                leaves.insert(name.clone(), ids[p]);
            }
            nodes.push(TreeNode {
                id: ids[p],
                parent,
                tag_name,
                children: proto.children.iter().map(|&c| ids[c]).collect(),
                centroid: if is_leaf {
                    means[proto.leaves[0]].clone()
                } else {
                    Embedding::new(mean_of(&leaf_centroids))?
                },
            });
        }

        let mut level_sizes = vec![0usize; depth_of.iter().max().unwrap() + 1];
        for d in depth_of {
            level_sizes[d] += 1;
        }
        if n == 1 {
            // Root and its single leaf collapse into one level.
            level_sizes = vec![1];
        }

        Ok(ContextualTree {
            nodes,
            level_sizes,
            built_from: n,
            fingerprint: memory.tag_set_fingerprint(),
            leaves,
        })
    }

    pub fn root(&self) -> NodeId {
        0
    }

    pub fn node(&self, id: NodeId) -> Result<&TreeNode> {
        self.nodes
            .get(id)
            .ok_or(Error::InvalidNode(id, "no such node"))
    }

    pub fn nodes(&self) -> &[TreeNode] {
        &self.nodes
    }

    pub fn built_from(&self) -> usize {
        self.built_from
    }

    /// Node counts per depth, root first.
    pub fn level_sizes(&self) -> &[usize] {
        &self.level_sizes
    }

    pub fn fingerprint(&self) -> TagSetFingerprint {
        self.fingerprint
    }

    pub fn dim(&self) -> usize {
        self.nodes[0].centroid.dim()
    }

    pub fn leaf_for_tag(&self, name: &str) -> Option<NodeId> {
        self.leaves.get(name).copied()
    }

    /// True iff every child is a leaf. A leaf has no children and is not a
    /// leaf-parent.
    pub fn is_leaf_parent(&self, id: NodeId) -> bool {
        self.nodes.get(id).is_some_and(|node| {
            !node.children.is_empty() && node.children.iter().all(|&c| self.nodes[c].is_leaf())
        })
    }

    /// Child with the highest cosine to `query`; ties go to the lower id.
    pub fn get_top_child(&self, id: NodeId, query: &Embedding) -> Result<NodeId> {
        let node = self.node(id)?;
        if node.is_leaf() {
            return Err(Error::InvalidNode(id, "leaf has no children"));
        }
        query.check_dim(self.dim())?;
        let mut best = (node.children[0], f64::NEG_INFINITY);
        for &c in &node.children {
            let score = cosine_unchecked(self.nodes[c].centroid.values(), query.values());
            if score > best.1 {
                best = (c, score);
            }
        }
        Ok(best.0)
    }

    /// The `min(topk, children)` leaf tags under a leaf-parent, scored by
    /// cosine to `query`, descending, ties by name.
    pub fn get_children_topk_scored(
        &self,
        id: NodeId,
        query: &Embedding,
        topk: usize,
    ) -> Result<Vec<(String, f64)>> {
        if !self.is_leaf_parent(id) {
            return Err(Error::InvalidNode(id, "not a leaf-parent"));
        }
        query.check_dim(self.dim())?;
        let mut scored: Vec<(String, f64)> = self.nodes[id]
            .children
            .iter()
            .map(|&c| {
                let leaf = &self.nodes[c];
                (
                    leaf.tag_name.clone().expect("leaf carries a tag"),
                    cosine_unchecked(leaf.centroid.values(), query.values()),
                )
            })
            .collect();
        sort_scored(&mut scored);
        scored.truncate(topk);
        Ok(scored)
    }

    pub fn get_children_topk(
        &self,
        id: NodeId,
        query: &Embedding,
        topk: usize,
    ) -> Result<Vec<String>> {
        Ok(self
            .get_children_topk_scored(id, query, topk)?
            .into_iter()
            .map(|(name, _)| name)
            .collect())
    }

    /// Leaf tag names under `id`, in traversal order.
    pub fn leaf_tags_under(&self, id: NodeId) -> Vec<&str> {
        let mut out = Vec::new();
        let mut stack = vec![id];
        while let Some(n) = stack.pop() {
            let node = &self.nodes[n];
            match &node.tag_name {
                Some(name) => out.push(name.as_str()),
                None => stack.extend(node.children.iter().rev()),
            }
        }
        out
    }

    pub fn dump(&self) -> TreeDump {
        TreeDump {
            built_from: self.built_from,
            level_sizes: self.level_sizes.clone(),
            nodes: self.nodes.clone(),
        }
    }
}

/// Sort `(name, score)` by score descending, then name ascending.
pub(crate) fn sort_scored(scored: &mut [(String, f64)]) {
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
}

fn push_parent(protos: &mut Vec<Proto>, children: Vec<usize>) -> usize {
    let leaves = children
        .iter()
        .flat_map(|&c| protos[c].leaves.iter().copied())
        .collect();
    protos.push(Proto { children, leaves });
    protos.len() - 1
}

/// Singletons except for the closest pair of points, which is merged.
fn force_merge(points: &[Embedding]) -> Partition {
    let mut best = (0, 1, f64::INFINITY);
    for i in 0..points.len() {
        for j in i + 1..points.len() {
            let d = cluster::cosine_distance(points[i].values(), points[j].values());
            if d < best.2 {
                best = (i, j, d);
            }
        }
    }
    let mut partition: Partition = (0..points.len())
        .filter(|&i| i != best.1)
        .map(|i| vec![i])
        .collect();
    partition[best.0].push(best.1);
    partition
}

/// Inspection form of a tree: node list with parent links.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TreeDump {
    pub built_from: usize,
    pub level_sizes: Vec<usize>,
    pub nodes: Vec<TreeNode>,
}
