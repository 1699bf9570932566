//! Brute-force oracles shared by the integration suites. Nothing here calls
//! into the scoring or graph-maintenance code under test.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use chrono::{DateTime, TimeZone, Utc};
use cope_core::tree::ContextualTree;
use cope_core::{ContextId, ContextualMemory, Embedding, NewContext};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Print one result line straight to stderr so it shows without
/// `--nocapture`.
pub fn report(criterion: u32, pass: bool, detail: &str) {
    let status = if pass { "PASS" } else { "FAIL" };
    let line = format!("[{status}] criterion {criterion}: {detail}\n");
    let _ = std::io::stderr().write_all(line.as_bytes());
}

pub fn t0() -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2024, 1, 1, 0, 0, 0).unwrap()
}

pub fn emb(v: Vec<f64>) -> Embedding {
    Embedding::new(v).unwrap()
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let (mut ab, mut aa, mut bb) = (0.0, 0.0, 0.0);
    for i in 0..a.len() {
        ab += a[i] * b[i];
        aa += a[i] * a[i];
        bb += b[i] * b[i];
    }
    if aa == 0.0 || bb == 0.0 {
        0.0
    } else {
        (ab / (aa.sqrt() * bb.sqrt())).clamp(-1.0, 1.0)
    }
}

/// Tag name to the ids of contexts carrying it, from the contexts alone.
pub fn tag_sets(mem: &ContextualMemory) -> BTreeMap<String, BTreeSet<ContextId>> {
    let mut out: BTreeMap<String, BTreeSet<ContextId>> = BTreeMap::new();
    for c in mem.contexts() {
        for t in &c.tags {
            out.entry(t.clone()).or_default().insert(c.id);
        }
    }
    out
}

pub fn oracle_mean(mem: &ContextualMemory, ids: &BTreeSet<ContextId>) -> Vec<f64> {
    let mut sum = vec![0.0; mem.dim()];
    for id in ids {
        for (s, v) in sum
            .iter_mut()
            .zip(mem.context(*id).unwrap().embedding.values())
        {
            *s += v;
        }
    }
    sum.into_iter().map(|s| s / ids.len() as f64).collect()
}

/// Edge biconditional, exact shared counts and tag means within `tol`.
pub fn check_graph(mem: &ContextualMemory, tol: f64) -> Result<(), String> {
    let sets = tag_sets(mem);
    let names: Vec<&String> = sets.keys().collect();
    let got_names: Vec<&str> = mem.tag_names().collect();
    if got_names != names.iter().map(|s| s.as_str()).collect::<Vec<_>>() {
        return Err(format!("tag set mismatch: {got_names:?} vs {names:?}"));
    }
    let mut expected_edges = Vec::new();
    for (i, a) in names.iter().enumerate() {
        let tag = mem.get_tag(a).map_err(|e| e.to_string())?;
        if tag.context_ids() != &sets[*a] {
            return Err(format!("context ids of {a} differ"));
        }
        let mean = oracle_mean(mem, &sets[*a]);
        for (x, y) in mean.iter().zip(tag.mean_embedding().values()) {
            if (x - y).abs() > tol {
                return Err(format!("mean of {a} off by {}", (x - y).abs()));
            }
        }
        for b in &names[i + 1..] {
            let shared = sets[*a].intersection(&sets[*b]).count() as u32;
            let has_edge = tag.adjacency().contains_key(b.as_str());
            if has_edge != (shared > 0) {
                return Err(format!("edge {a}-{b}: present={has_edge}, shared={shared}"));
            }
            if mem.shared_count(a, b) != shared || mem.shared_count(b, a) != shared {
                return Err(format!("shared_count {a}-{b} != {shared}"));
            }
            if shared > 0 {
                expected_edges.push(((*a).clone(), (*b).clone(), shared));
            }
        }
    }
    let edges: Vec<(String, String, u32)> = mem
        .edges()
        .into_iter()
        .map(|e| (e.a, e.b, e.shared_count))
        .collect();
    if edges != expected_edges {
        return Err("edge list differs from brute force".into());
    }
    if mem.edge_count() != expected_edges.len() {
        return Err(format!(
            "edge_count {} != {}",
            mem.edge_count(),
            expected_edges.len()
        ));
    }
    Ok(())
}

/// Flat concept search recomputed from raw contexts: tags ranked by cosine
/// to their mean (score desc, name asc), then neighbors by summed shared
/// count (desc, name asc), then every attached context (score desc, id asc).
pub fn oracle_flat_search(
    mem: &ContextualMemory,
    query: &[f64],
    topk: usize,
    personalization_limit: usize,
) -> (Vec<String>, Vec<ContextId>) {
    let sets = tag_sets(mem);
    let mut scored: Vec<(String, f64)> = sets
        .iter()
        .map(|(name, ids)| (name.clone(), cosine(&oracle_mean(mem, ids), query)))
        .collect();
    scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    let retrieved: Vec<String> = scored.into_iter().take(topk).map(|(n, _)| n).collect();

    let mut neighbor: BTreeMap<String, u64> = BTreeMap::new();
    for seed in &retrieved {
        for (other, ids) in &sets {
            if retrieved.contains(other) {
                continue;
            }
            let shared = sets[seed].intersection(ids).count() as u64;
            if shared > 0 {
                *neighbor.entry(other.clone()).or_default() += shared;
            }
        }
    }
    let mut ranked: Vec<(String, u64)> = neighbor.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    let mut tags = retrieved;
    tags.extend(
        ranked
            .into_iter()
            .take(personalization_limit)
            .map(|(n, _)| n),
    );

    let ids: BTreeSet<ContextId> = tags.iter().flat_map(|t| sets[t].iter().copied()).collect();
    let mut ctx: Vec<(ContextId, f64)> = ids
        .into_iter()
        .map(|id| {
            (
                id,
                cosine(mem.context(id).unwrap().embedding.values(), query),
            )
        })
        .collect();
    ctx.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    (tags, ctx.into_iter().map(|(id, _)| id).collect())
}

/// Structural checks of a built tree against the memory it came from.
pub fn check_tree(tree: &ContextualTree, mem: &ContextualMemory, tol: f64) -> Result<(), String> {
    let nodes = tree.nodes();
    let roots: Vec<_> = nodes.iter().filter(|n| n.parent.is_none()).collect();
    if roots.len() != 1 || roots[0].id != tree.root() {
        return Err(format!("expected exactly one root, got {}", roots.len()));
    }
    let mut leaf_names = BTreeSet::new();
    for (i, n) in nodes.iter().enumerate() {
        if n.id != i {
            return Err(format!("node {i} carries id {}", n.id));
        }
        let leaf = n.children.is_empty();
        if leaf != n.tag_name.is_some() {
            return Err(format!(
                "node {i}: leaf={leaf} but tag_name={:?}",
                n.tag_name
            ));
        }
        for &c in &n.children {
            if nodes[c].parent != Some(i) {
                return Err(format!("child {c} of {i} has parent {:?}", nodes[c].parent));
            }
        }
        if let Some(name) = &n.tag_name {
            if !leaf_names.insert(name.clone()) {
                return Err(format!("tag {name} appears as two leaves"));
            }
            let mean = mem
                .get_tag(name)
                .map_err(|e| e.to_string())?
                .mean_embedding();
            if n.centroid != *mean {
                return Err(format!("leaf {name} centroid differs from tag mean"));
            }
        }
    }
    let tags: BTreeSet<String> = mem.tag_names().map(str::to_string).collect();
    if leaf_names != tags {
        return Err("leaves do not biject with tags".into());
    }

    // Partition: children's leaf sets are disjoint and cover the parent's.
    fn leaves_under(nodes: &[cope_core::tree::TreeNode], id: usize, out: &mut Vec<usize>) {
        if nodes[id].children.is_empty() {
            out.push(id);
        }
        for &c in &nodes[id].children {
            leaves_under(nodes, c, out);
        }
    }
    for n in nodes.iter().filter(|n| !n.children.is_empty()) {
        let mut all = Vec::new();
        leaves_under(nodes, n.id, &mut all);
        let mut union = BTreeSet::new();
        for &c in &n.children {
            let mut sub = Vec::new();
            leaves_under(nodes, c, &mut sub);
            for l in sub {
                if !union.insert(l) {
                    return Err(format!("leaf {l} under two children of {}", n.id));
                }
            }
        }
        if union != all.iter().copied().collect() {
            return Err(format!("children of {} do not cover its leaves", n.id));
        }
        let d = n.centroid.dim();
        let mut mean = vec![0.0; d];
        for &l in &all {
            for (m, v) in mean.iter_mut().zip(nodes[l].centroid.values()) {
                *m += v / all.len() as f64;
            }
        }
        for (x, y) in mean.iter().zip(n.centroid.values()) {
            if (x - y).abs() > tol {
                return Err(format!("centroid of {} off by {}", n.id, (x - y).abs()));
            }
        }
    }

    let sizes = tree.level_sizes();
    if sizes.first() != Some(&1) || sizes.last() != Some(&tags.len()) {
        return Err(format!("level sizes {sizes:?} for {} tags", tags.len()));
    }
    if tags.len() > 1 && !sizes.windows(2).all(|w| w[0] < w[1]) {
        return Err(format!("level sizes {sizes:?} not strictly increasing"));
    }
    Ok(())
}

/// Random context with 1..=max_tags distinct tags drawn from `pool` names.
pub fn random_context(
    rng: &mut ChaCha8Rng,
    dim: usize,
    pool: usize,
    max_tags: usize,
) -> NewContext {
    let k = rng.random_range(1..=max_tags);
    let tags: Vec<String> = (0..k)
        .map(|_| format!("t{:02}", rng.random_range(0..pool)))
        .collect();
    let v: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
    NewContext::text("ctx", tags, t0(), emb(v))
}

/// Agent over a fresh engine with a deterministic clock, as used for trace
/// replay.
pub fn trace_agent() -> cope_core::agent::Agent {
    use cope_core::agent::{Agent, InContextMemory, ToolRegistry};
    use cope_core::{Engine, EngineConfig, HashEmbedder, StepClock};
    use std::sync::Arc;

    let engine = Engine::new(Arc::new(HashEmbedder::new(16, 7)))
        .with_clock(Arc::new(StepClock::new(
            Utc.with_ymd_and_hms(2024, 3, 1, 9, 0, 0).unwrap(),
            chrono::Duration::minutes(1),
        )))
        .with_config(EngineConfig {
            auto_rebuild_tree: true,
            ..EngineConfig::default()
        });
    Agent::new(
        Arc::new(engine),
        InContextMemory::new("I am a helpful multimodal assistant.", "", 120).unwrap(),
        ToolRegistry::with_stubs(),
    )
}

/// Everything a replay can change, serialized for comparison.
pub fn agent_state(agent: &cope_core::agent::Agent) -> Vec<u8> {
    let mut out = agent.engine().memory().to_snapshot_bytes().unwrap();
    out.extend(agent.engine().recall().to_ndjson().unwrap());
    let ctx = agent.context();
    out.extend(serde_json::to_vec(&(ctx.persona(), ctx.human(), ctx.messages())).unwrap());
    out
}
