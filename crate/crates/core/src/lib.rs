//! Multimodal contextual memory with concept-driven retrieval.
//!
//! Contexts (text, image, audio or video records with an embedding) are
//! attached to semantic tags. Tags that share a context are linked, and each
//! tag keeps the mean of its contexts' embeddings. A hierarchical tree over
//! the tag means lets a query descend to the few relevant concepts, widen
//! them with graph neighbors, and rank only the contexts attached to those
//! concepts.
//!
//! Also included: a flat exhaustive vector store for comparison, a
//! paginated conversation log, a function-call dispatch surface for agent
//! loops, scoring metrics, and a benchmark harness over seeded synthetic or
//! user-supplied embeddings.

pub mod agent;
pub mod bench;
pub mod embedding;
pub mod embfile;
pub mod engine;
pub mod error;
pub mod memory;
pub mod metrics;
pub mod rag;
pub mod recall;
pub mod search;
pub mod synthetic;
pub mod tree;

pub use embedding::{
    cosine_similarity, mean_embedding, Embedder, Embedding, HashEmbedder, Modality,
};
pub use engine::{Clock, Engine, EngineConfig, StepClock, SystemClock};
pub use error::{Error, Result};
pub use memory::{ContextId, ContextNode, ContextualMemory, Edge, NewContext, TagNode};
pub use recall::{RecallMemory, Role};
pub use search::{QueryPart, ScoredContext, SearchParams, SearchResult};
pub use tree::ContextualTree;
