//! Contextual-personalized (CoPe) search.
//!
//! Two stages: first find concepts (tags) relevant to the query, either by
//! greedy descent through the contextual tree or by an exhaustive scan over
//! all tag means, widen them with graph neighbors, then rank only the
//! contexts attached to those concepts.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::embedding::{cosine_unchecked, mean_embedding, Embedder, Embedding, Modality};
use crate::error::{Error, Result};
use crate::memory::{ContextId, ContextualMemory};
use crate::tree::{sort_scored, ContextualTree};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryPart {
    /// Text, or a resource locator for non-text modalities.
    pub content: String,
    pub modality: Modality,
}

impl QueryPart {
    pub fn new(content: impl Into<String>, modality: Modality) -> Result<Self> {
        let content = content.into();
        if content.is_empty() {
            return Err(Error::Validation(
                "query part content must be nonempty".into(),
            ));
        }
        Ok(QueryPart { content, modality })
    }

    pub fn text(content: impl Into<String>) -> Result<Self> {
        Self::new(content, Modality::Text)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoredContext {
    pub id: ContextId,
    pub score: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    /// Retrieved tags first, then personalized ones, without duplicates.
    pub tags: Vec<String>,
    /// Every context attached to one of `tags`, by score descending then id.
    pub contexts: Vec<ScoredContext>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SearchParams {
    pub topk: usize,
    pub personalization_limit: usize,
}

impl SearchParams {
    /// `personalization_limit` defaults to `topk`.
    pub fn new(topk: usize) -> Self {
        SearchParams {
            topk,
            personalization_limit: topk,
        }
    }

    pub fn with_personalization_limit(mut self, limit: usize) -> Self {
        self.personalization_limit = limit;
        self
    }

    fn check(&self) -> Result<()> {
        if self.topk == 0 {
            return Err(Error::Validation("topk must be positive".into()));
        }
        Ok(())
    }
}

/// Embed every part and average the embeddings.
pub fn fuse_query(parts: &[QueryPart], embedder: &dyn Embedder) -> Result<Embedding> {
    if parts.is_empty() {
        return Err(Error::EmptyInput("query has no parts"));
    }
    let embedded: Vec<Embedding> = parts
        .iter()
        .map(|p| {
            if p.content.is_empty() {
                return Err(Error::Validation(
                    "query part content must be nonempty".into(),
                ));
            }
            embedder.embed(&p.content, p.modality)
        })
        .collect::<Result<_>>()?;
    mean_embedding(&embedded)
}

/// Neighbors of the seed tags, excluding the seeds themselves, ranked by
/// summed shared count (descending) then name, truncated to `limit`.
pub fn personalized_tags(
    seeds: &[String],
    memory: &ContextualMemory,
    limit: usize,
) -> Result<Vec<String>> {
    let seed_set: BTreeSet<&str> = seeds.iter().map(String::as_str).collect();
    let mut totals: BTreeMap<&str, u64> = BTreeMap::new();
    for seed in seeds {
        for (name, count) in memory.get_tag(seed)?.adjacency() {
            if !seed_set.contains(name.as_str()) {
                *totals.entry(name.as_str()).or_insert(0) += u64::from(*count);
            }
        }
    }
    let mut ranked: Vec<(&str, u64)> = totals.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    Ok(ranked
        .into_iter()
        .take(limit)
        .map(|(n, _)| n.to_string())
        .collect())
}

/// Tree stage: greedy descent to a leaf-parent, then its top-k children.
pub fn descend(tree: &ContextualTree, query: &Embedding, topk: usize) -> Result<Vec<String>> {
    let mut node = tree.root();
    loop {
        if tree.is_leaf_parent(node) {
            return tree.get_children_topk(node, query, topk);
        }
        node = tree.get_top_child(node, query)?;
    }
}

/// Flat stage: top-k over every tag mean, score descending then name.
pub fn flat_tag_topk(memory: &ContextualMemory, query: &Embedding, topk: usize) -> Vec<String> {
    let mut scored: Vec<(String, f64)> = memory
        .tags()
        .map(|t| {
            (
                t.name().to_string(),
                cosine_unchecked(t.mean_embedding().values(), query.values()),
            )
        })
        .collect();
    sort_scored(&mut scored);
    scored.truncate(topk);
    scored.into_iter().map(|(n, _)| n).collect()
}

fn finish(
    retrieved: Vec<String>,
    memory: &ContextualMemory,
    query: &Embedding,
    params: SearchParams,
) -> Result<SearchResult> {
    let personalized = personalized_tags(&retrieved, memory, params.personalization_limit)?;
    let mut tags = retrieved;
    for p in personalized {
        if !tags.contains(&p) {
            tags.push(p);
        }
    }
    let mut ids: BTreeSet<ContextId> = BTreeSet::new();
    for t in &tags {
        ids.extend(memory.get_tag(t)?.context_ids());
    }
    let mut contexts: Vec<ScoredContext> = ids
        .into_iter()
        .map(|id| {
            let ctx = memory.context(id)?;
            Ok(ScoredContext {
                id,
                score: cosine_unchecked(ctx.embedding.values(), query.values()),
            })
        })
        .collect::<Result<_>>()?;
    contexts.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.id.cmp(&b.id)));
    Ok(SearchResult { tags, contexts })
}

/// Tree-guided search with an already-fused query embedding.
pub fn cope_search_embedding(
    query: &Embedding,
    memory: &ContextualMemory,
    tree: &ContextualTree,
    params: SearchParams,
) -> Result<SearchResult> {
    params.check()?;
    if memory.is_empty() {
        return Err(Error::EmptySearch);
    }
    if tree.fingerprint() != memory.tag_set_fingerprint() {
        return Err(Error::StaleIndex(format!(
            "tree built over {} tags, memory now has {}; rebuild the tree",
            tree.built_from(),
            memory.tag_count()
        )));
    }
    query.check_dim(memory.dim())?;
    let retrieved = descend(tree, query, params.topk)?;
    finish(retrieved, memory, query, params)
}

/// Exhaustive-scan variant with an already-fused query embedding.
pub fn flat_cope_search_embedding(
    query: &Embedding,
    memory: &ContextualMemory,
    params: SearchParams,
) -> Result<SearchResult> {
    params.check()?;
    if memory.is_empty() {
        return Err(Error::EmptySearch);
    }
    query.check_dim(memory.dim())?;
    let retrieved = flat_tag_topk(memory, query, params.topk);
    finish(retrieved, memory, query, params)
}

pub fn cope_search(
    query: &[QueryPart],
    memory: &ContextualMemory,
    tree: &ContextualTree,
    embedder: &dyn Embedder,
    params: SearchParams,
) -> Result<SearchResult> {
    if memory.is_empty() {
        return Err(Error::EmptySearch);
    }
    let fused = fuse_query(query, embedder)?;
    cope_search_embedding(&fused, memory, tree, params)
}

pub fn flat_cope_search(
    query: &[QueryPart],
    memory: &ContextualMemory,
    embedder: &dyn Embedder,
    params: SearchParams,
) -> Result<SearchResult> {
    if memory.is_empty() {
        return Err(Error::EmptySearch);
    }
    let fused = fuse_query(query, embedder)?;
    flat_cope_search_embedding(&fused, memory, params)
}
