//! Graph-structured contextual memory.
//!
//! Context nodes hold one conversation snapshot each. Tag nodes (concepts)
//! point at the contexts carrying them and keep a running embedding sum so
//! the tag mean is maintained in O(dim) per insert/remove. Two tags are
//! adjacent exactly when they share at least one context; the edge weight is
//! the number of shared contexts.

mod snapshot;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use chrono::{DateTime, SubsecRound, Utc};
use serde::{Deserialize, Serialize};

use crate::embedding::{Embedding, Modality};
use crate::error::{Error, Result};

pub use snapshot::{SNAPSHOT_MAGIC, SNAPSHOT_VERSION};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ContextId(pub u64);

impl fmt::Display for ContextId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ContextNode {
    pub id: ContextId,
    pub content: String,
    pub uri: Option<String>,
    pub tags: Vec<String>,
    pub modality: Modality,
    pub timestamp: DateTime<Utc>,
    pub embedding: Embedding,
}

/// Arguments of [`ContextualMemory::insert_context`].
#[derive(Clone, Debug)]
pub struct NewContext {
    pub content: String,
    pub tags: Vec<String>,
    pub modality: Modality,
    pub uri: Option<String>,
    pub timestamp: DateTime<Utc>,
    pub embedding: Embedding,
}

impl NewContext {
    pub fn text(
        content: impl Into<String>,
        tags: impl IntoIterator<Item = impl Into<String>>,
        timestamp: DateTime<Utc>,
        embedding: Embedding,
    ) -> Self {
        NewContext {
            content: content.into(),
            tags: tags.into_iter().map(Into::into).collect(),
            modality: Modality::Text,
            uri: None,
            timestamp,
            embedding,
        }
    }
}

#[derive(Clone, Debug)]
pub struct TagNode {
    name: String,
    context_ids: BTreeSet<ContextId>,
    sum: Vec<f64>,
    mean: Embedding,
    neighbors: BTreeMap<String, u32>,
}

impl TagNode {
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn context_ids(&self) -> &BTreeSet<ContextId> {
        &self.context_ids
    }

    pub fn mean_embedding(&self) -> &Embedding {
        &self.mean
    }

    /// Adjacent tags with their shared-context counts, keyed by name.
    pub fn adjacency(&self) -> &BTreeMap<String, u32> {
        &self.neighbors
    }

    fn refresh_mean(&mut self) {
        let n = self.context_ids.len() as f64;
        let values = self.sum.iter().map(|s| s / n).collect();
        self.mean = Embedding::new(values).expect("finite sums yield finite means");
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Edge {
    pub a: String,
    pub b: String,
    pub shared_count: u32,
}

/// Order-independent digest of a tag-name set, maintained incrementally so a
/// search can detect a stale tree in O(1).
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TagSetFingerprint {
    pub count: usize,
    pub digest: u64,
}

impl TagSetFingerprint {
    fn toggle(&mut self, name: &str, added: bool) {
        self.digest ^= name_digest(name);
        if added {
            self.count += 1;
        } else {
            self.count -= 1;
        }
    }

    pub fn of<'a>(names: impl IntoIterator<Item = &'a str>) -> Self {
        let mut fp = TagSetFingerprint::default();
        for n in names {
            fp.toggle(n, true);
        }
        fp
    }
}

fn name_digest(name: &str) -> u64 {
    // splitmix finalizer over FNV-1a spreads short names across the word.
    let mut z = crate::embedding::fnv1a64(name.as_bytes());
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[derive(Clone, Debug)]
pub struct ContextualMemory {
    dim: usize,
    next_id: u64,
    contexts: BTreeMap<ContextId, ContextNode>,
    tags: BTreeMap<String, TagNode>,
    edge_count: usize,
    fingerprint: TagSetFingerprint,
}

fn validate(new: &NewContext, dim: usize) -> Result<Vec<String>> {
    match (new.modality, &new.uri) {
        (Modality::Text, Some(uri)) => {
            return Err(Error::Modality(format!(
                "text modality must not carry a uri (got {uri:?})"
            )))
        }
        (m, None) if m != Modality::Text => {
            return Err(Error::Modality(format!("{m} modality requires a uri")))
        }
        _ => {}
    }
    let mut tags: Vec<String> = Vec::with_capacity(new.tags.len());
    for t in &new.tags {
        if t.is_empty() {
            return Err(Error::Validation("tag names must be nonempty".into()));
        }
        if !tags.contains(t) {
            tags.push(t.clone());
        }
    }
    if tags.is_empty() {
        return Err(Error::Validation("a context needs at least one tag".into()));
    }
    new.embedding.check_dim(dim)?;
    Ok(tags)
}

impl ContextualMemory {
    pub fn new(dim: usize) -> Self {
        assert!(dim >= 1, "memory dim must be positive");
        ContextualMemory {
            dim,
            next_id: 0,
            contexts: BTreeMap::new(),
            tags: BTreeMap::new(),
            edge_count: 0,
            fingerprint: TagSetFingerprint::default(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.contexts.is_empty()
    }

    pub fn context_count(&self) -> usize {
        self.contexts.len()
    }

    pub fn tag_count(&self) -> usize {
        self.tags.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edge_count
    }

    pub fn tag_set_fingerprint(&self) -> TagSetFingerprint {
        self.fingerprint
    }

    /// Store a context node, creating missing tags and linking every pair of
    /// its tags. Embeddings are kept at 32-bit precision, the precision of the
    /// snapshot format, and timestamps are truncated to whole seconds.
    pub fn insert_context(&mut self, new: NewContext) -> Result<ContextId> {
        let tags = validate(&new, self.dim)?;
        let id = ContextId(self.next_id);
        self.next_id += 1;
        let node = ContextNode {
            id,
            content: new.content,
            uri: new.uri,
            tags,
            modality: new.modality,
            timestamp: new.timestamp.trunc_subsecs(0),
            embedding: new.embedding.to_stored_precision(),
        };
        self.link(&node);
        self.contexts.insert(id, node);
        Ok(id)
    }

    fn link(&mut self, node: &ContextNode) {
        for name in &node.tags {
            let tag = self.tags.entry(name.clone()).or_insert_with(|| {
                self.fingerprint.toggle(name, true);
                TagNode {
                    name: name.clone(),
                    context_ids: BTreeSet::new(),
                    sum: vec![0.0; self.dim],
                    mean: node.embedding.clone(),
                    neighbors: BTreeMap::new(),
                }
            });
            tag.context_ids.insert(node.id);
            for (s, v) in tag.sum.iter_mut().zip(node.embedding.values()) {
                *s += v;
            }
            tag.refresh_mean();
        }
        for (i, a) in node.tags.iter().enumerate() {
            for b in &node.tags[i + 1..] {
                let ab = self
                    .tags
                    .get_mut(a)
                    .unwrap()
                    .neighbors
                    .entry(b.clone())
                    .or_insert(0);
                *ab += 1;
                if *ab == 1 {
                    self.edge_count += 1;
                }
                *self
                    .tags
                    .get_mut(b)
                    .unwrap()
                    .neighbors
                    .entry(a.clone())
                    .or_insert(0) += 1;
            }
        }
    }

    /// Remove a context node and cascade: tags losing their last context are
    /// deleted, edges whose shared count drops to zero disappear.
    pub fn remove_context(&mut self, id: ContextId) -> Result<ContextNode> {
        let node = self
            .contexts
            .remove(&id)
            .ok_or_else(|| Error::NotFound(format!("context {id}")))?;
        for (i, a) in node.tags.iter().enumerate() {
            for b in &node.tags[i + 1..] {
                if decrement(&mut self.tags.get_mut(a).unwrap().neighbors, b) {
                    self.edge_count -= 1;
                }
                decrement(&mut self.tags.get_mut(b).unwrap().neighbors, a);
            }
        }
        for name in &node.tags {
            let tag = self.tags.get_mut(name).unwrap();
            tag.context_ids.remove(&id);
            if tag.context_ids.is_empty() {
                debug_assert!(tag.neighbors.is_empty());
                self.tags.remove(name);
                self.fingerprint.toggle(name, false);
            } else {
                for (s, v) in tag.sum.iter_mut().zip(node.embedding.values()) {
                    *s -= v;
                }
                tag.refresh_mean();
            }
        }
        Ok(node)
    }

    /// Recompute every tag mean from the raw context embeddings, discarding
    /// accumulated rounding in the running sums.
    pub fn rebuild_means(&mut self) {
        for tag in self.tags.values_mut() {
            let mut sum = vec![0.0; self.dim];
            for id in &tag.context_ids {
                for (s, v) in sum.iter_mut().zip(self.contexts[id].embedding.values()) {
                    *s += v;
                }
            }
            tag.sum = sum;
            tag.refresh_mean();
        }
    }

    pub fn context(&self, id: ContextId) -> Result<&ContextNode> {
        self.contexts
            .get(&id)
            .ok_or_else(|| Error::NotFound(format!("context {id}")))
    }

    pub fn contexts(&self) -> impl Iterator<Item = &ContextNode> {
        self.contexts.values()
    }

    /// Tag names are matched by exact, case-sensitive byte equality.
    pub fn get_tag(&self, name: &str) -> Result<&TagNode> {
        self.tags
            .get(name)
            .ok_or_else(|| Error::NotFound(format!("tag {name:?}")))
    }

    /// All tags in ascending name order.
    pub fn tags(&self) -> impl Iterator<Item = &TagNode> {
        self.tags.values()
    }

    pub fn tag_names(&self) -> impl Iterator<Item = &str> {
        self.tags.keys().map(String::as_str)
    }

    /// Incident edges as `(neighbor, shared_count)`, by count descending then
    /// name ascending.
    pub fn neighbors(&self, name: &str) -> Result<Vec<(String, u32)>> {
        let tag = self.get_tag(name)?;
        let mut out: Vec<(String, u32)> =
            tag.neighbors.iter().map(|(n, &c)| (n.clone(), c)).collect();
        out.sort_by(|x, y| y.1.cmp(&x.1).then_with(|| x.0.cmp(&y.0)));
        Ok(out)
    }

    pub fn shared_count(&self, a: &str, b: &str) -> u32 {
        self.tags
            .get(a)
            .and_then(|t| t.neighbors.get(b))
            .copied()
            .unwrap_or(0)
    }

    /// Every edge once, with `a < b`, in lexicographic order.
    pub fn edges(&self) -> Vec<Edge> {
        self.tags
            .iter()
            .flat_map(|(a, tag)| {
                tag.neighbors
                    .range::<String, _>((
                        std::ops::Bound::Excluded(a.clone()),
                        std::ops::Bound::Unbounded,
                    ))
                    .map(move |(b, &c)| Edge {
                        a: a.clone(),
                        b: b.clone(),
                        shared_count: c,
                    })
            })
            .collect()
    }

    /// Structural equality: same contexts, tags, edges, counts and stored
    /// embeddings. Tag means are compared within `mean_tol`.
    pub fn same_graph(&self, other: &ContextualMemory, mean_tol: f64) -> bool {
        if self.dim != other.dim
            || self.contexts != other.contexts
            || self.tags.len() != other.tags.len()
            || self.edges() != other.edges()
        {
            return false;
        }
        self.tags.iter().zip(&other.tags).all(|((na, a), (nb, b))| {
            na == nb
                && a.context_ids == b.context_ids
                && a.mean
                    .values()
                    .iter()
                    .zip(b.mean.values())
                    .all(|(x, y)| (x - y).abs() <= mean_tol)
        })
    }
}

fn decrement(map: &mut BTreeMap<String, u32>, key: &str) -> bool {
    let c = map
        .get_mut(key)
        .expect("edge present for co-tagged context");
    *c -= 1;
    if *c == 0 {
        map.remove(key);
        true
    } else {
        false
    }
}
