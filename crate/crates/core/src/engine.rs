//! The engine ties the stores together behind their concurrency contracts:
//! contextual memory is single-writer/multi-reader, the contextual tree is
//! published atomically as an immutable `Arc`, and the recall log has one
//! writer.

use std::sync::{Arc, Mutex, MutexGuard, RwLock, RwLockReadGuard};

use chrono::{DateTime, Duration, Utc};

use crate::embedding::{Embedder, Embedding, Modality};
use crate::error::{Error, Result};
use crate::memory::{ContextId, ContextNode, ContextualMemory, NewContext};
use crate::recall::{RecallMemory, RecallPage, Role};
use crate::search::{self, QueryPart, SearchParams, SearchResult};
use crate::tree::{
    default_target_dim, AverageLinkage, Clusterer, ContextualTree, PcaReducer, Reducer,
};

pub trait Clock: Send + Sync {
    fn now(&self) -> DateTime<Utc>;
}

#[derive(Clone, Copy, Debug, Default)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now(&self) -> DateTime<Utc> {
        Utc::now()
    }
}

/// Deterministic clock: starts at `start` and advances by `step` per reading.
#[derive(Debug)]
pub struct StepClock {
    start: DateTime<Utc>,
    step: Duration,
    ticks: Mutex<i32>,
}

impl StepClock {
    pub fn new(start: DateTime<Utc>, step: Duration) -> Self {
        StepClock {
            start,
            step,
            ticks: Mutex::new(0),
        }
    }
}

impl Clock for StepClock {
    fn now(&self) -> DateTime<Utc> {
        let mut t = self.ticks.lock().unwrap();
        let now = self.start + self.step * *t;
        *t += 1;
        now
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EngineConfig {
    pub default_topk: usize,
    /// `None` means "same as topk".
    pub personalization_limit: Option<usize>,
    pub target_dim: Option<usize>,
    /// Rebuild the tree on demand when a search finds it stale.
    pub auto_rebuild_tree: bool,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            default_topk: 5,
            personalization_limit: None,
            target_dim: None,
            auto_rebuild_tree: false,
        }
    }
}

impl EngineConfig {
    pub fn params(&self, topk: Option<usize>) -> SearchParams {
        let topk = topk.unwrap_or(self.default_topk);
        SearchParams::new(topk)
            .with_personalization_limit(self.personalization_limit.unwrap_or(topk))
    }
}

pub struct Engine {
    memory: RwLock<ContextualMemory>,
    tree: RwLock<Option<Arc<ContextualTree>>>,
    recall: Mutex<RecallMemory>,
    embedder: Arc<dyn Embedder>,
    embed_lock: Mutex<()>,
    reducer: Box<dyn Reducer>,
    clusterer: Box<dyn Clusterer>,
    clock: Arc<dyn Clock>,
    config: EngineConfig,
}

impl std::fmt::Debug for Engine {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Engine")
            .field("config", &self.config)
            .finish_non_exhaustive()
    }
}

impl Engine {
    pub fn new(embedder: Arc<dyn Embedder>) -> Self {
        let dim = embedder.dim();
        Self::with_memory(ContextualMemory::new(dim), embedder)
            .expect("fresh memory matches embedder")
    }

    pub fn with_memory(memory: ContextualMemory, embedder: Arc<dyn Embedder>) -> Result<Self> {
        if memory.dim() != embedder.dim() {
            return Err(Error::Dimension {
                expected: memory.dim(),
                actual: embedder.dim(),
            });
        }
        Ok(Engine {
            memory: RwLock::new(memory),
            tree: RwLock::new(None),
            recall: Mutex::new(RecallMemory::in_memory()),
            embedder,
            embed_lock: Mutex::new(()),
            reducer: Box::new(PcaReducer),
            clusterer: Box::new(AverageLinkage),
            clock: Arc::new(SystemClock),
            config: EngineConfig::default(),
        })
    }

    pub fn with_config(mut self, config: EngineConfig) -> Self {
        self.config = config;
        self
    }

    pub fn with_clock(mut self, clock: Arc<dyn Clock>) -> Self {
        self.clock = clock;
        self
    }

    pub fn with_recall(mut self, recall: RecallMemory) -> Self {
        self.recall = Mutex::new(recall);
        self
    }

    pub fn with_tree_builders(
        mut self,
        reducer: Box<dyn Reducer>,
        clusterer: Box<dyn Clusterer>,
    ) -> Self {
        self.reducer = reducer;
        self.clusterer = clusterer;
        self
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    pub fn now(&self) -> DateTime<Utc> {
        self.clock.now()
    }

    pub fn embed(&self, content: &str, modality: Modality) -> Result<Embedding> {
        let _guard = self
            .embedder
            .single_threaded()
            .then(|| self.embed_lock.lock().unwrap());
        self.embedder.embed(content, modality)
    }

    pub fn embedder(&self) -> &dyn Embedder {
        self.embedder.as_ref()
    }

    /// Read access to a consistent memory snapshot.
    pub fn memory(&self) -> RwLockReadGuard<'_, ContextualMemory> {
        self.memory.read().unwrap()
    }

    pub fn insert_context(&self, new: NewContext) -> Result<ContextId> {
        self.memory.write().unwrap().insert_context(new)
    }

    pub fn remove_context(&self, id: ContextId) -> Result<ContextNode> {
        self.memory.write().unwrap().remove_context(id)
    }

    /// Build a tree from the current tag set and publish it.
    pub fn rebuild_tree(&self) -> Result<Arc<ContextualTree>> {
        let tree = {
            let mem = self.memory();
            let target = self
                .config
                .target_dim
                .unwrap_or_else(|| default_target_dim(mem.dim()));
            Arc::new(ContextualTree::build(
                &mem,
                self.reducer.as_ref(),
                self.clusterer.as_ref(),
                target,
            )?)
        };
        *self.tree.write().unwrap() = Some(tree.clone());
        Ok(tree)
    }

    pub fn tree(&self) -> Option<Arc<ContextualTree>> {
        self.tree.read().unwrap().clone()
    }

    fn fresh_tree(&self, mem: &ContextualMemory) -> Result<Arc<ContextualTree>> {
        match self.tree() {
            Some(t) if t.fingerprint() == mem.tag_set_fingerprint() => Ok(t),
            stale => {
                if !self.config.auto_rebuild_tree {
                    return Err(Error::StaleIndex(match stale {
                        Some(_) => "tag set changed since the tree was built".into(),
                        None => "no contextual tree has been built".into(),
                    }));
                }
                let target = self
                    .config
                    .target_dim
                    .unwrap_or_else(|| default_target_dim(mem.dim()));
                let tree = Arc::new(ContextualTree::build(
                    mem,
                    self.reducer.as_ref(),
                    self.clusterer.as_ref(),
                    target,
                )?);
                *self.tree.write().unwrap() = Some(tree.clone());
                Ok(tree)
            }
        }
    }

    pub fn cope_search(&self, query: &[QueryPart], topk: Option<usize>) -> Result<SearchResult> {
        let fused = self.fuse(query)?;
        self.cope_search_embedding(&fused, topk)
    }

    pub fn cope_search_embedding(
        &self,
        query: &Embedding,
        topk: Option<usize>,
    ) -> Result<SearchResult> {
        let mem = self.memory();
        if mem.is_empty() {
            return Err(Error::EmptySearch);
        }
        let tree = self.fresh_tree(&mem)?;
        search::cope_search_embedding(query, &mem, &tree, self.config.params(topk))
    }

    pub fn flat_cope_search(
        &self,
        query: &[QueryPart],
        topk: Option<usize>,
    ) -> Result<SearchResult> {
        let fused = self.fuse(query)?;
        search::flat_cope_search_embedding(&fused, &self.memory(), self.config.params(topk))
    }

    fn fuse(&self, parts: &[QueryPart]) -> Result<Embedding> {
        if self.memory().is_empty() {
            return Err(Error::EmptySearch);
        }
        let _guard = self
            .embedder
            .single_threaded()
            .then(|| self.embed_lock.lock().unwrap());
        search::fuse_query(parts, self.embedder.as_ref())
    }

    pub fn recall(&self) -> MutexGuard<'_, RecallMemory> {
        self.recall.lock().unwrap()
    }

    pub fn log_message(&self, role: Role, text: &str) -> Result<u64> {
        let now = self.now();
        self.recall().append_entry(role, text, now)
    }

    pub fn conversation_search(&self, query: &str, page: usize) -> RecallPage {
        self.recall().conversation_search(query, page)
    }

    pub fn conversation_search_date(
        &self,
        start: &str,
        end: &str,
        page: usize,
    ) -> Result<RecallPage> {
        self.recall().conversation_search_date(start, end, page)
    }
}
