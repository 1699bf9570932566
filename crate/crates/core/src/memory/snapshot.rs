//! Snapshot archive for [`ContextualMemory`].
//!
//! ```text
//! magic      b"CPMS"
//! version    u16 (= 1)
//! json_len   u64, then the graph document (UTF-8 JSON)
//! block_len  u64, then the context embeddings as a CPME block keyed by id
//! sha256     32 bytes over everything above
//! ```
//!
//! The JSON document carries its own `version` field as well. Tag means are
//! not stored; they are recomputed from the embeddings on load.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{validate, ContextId, ContextNode, ContextualMemory, Edge, NewContext};
use crate::embedding::Modality;
use crate::embfile;
use crate::error::{Error, Result};

pub const SNAPSHOT_MAGIC: &[u8; 4] = b"CPMS";
pub const SNAPSHOT_VERSION: u16 = 1;

#[derive(Serialize, Deserialize)]
struct GraphDoc {
    version: u16,
    dim: usize,
    next_id: u64,
    contexts: Vec<ContextDoc>,
    tags: Vec<TagDoc>,
    edges: Vec<Edge>,
}

#[derive(Serialize, Deserialize)]
struct ContextDoc {
    id: ContextId,
    content: String,
    uri: Option<String>,
    tags: Vec<String>,
    modality: Modality,
    timestamp: DateTime<Utc>,
}

#[derive(Serialize, Deserialize, PartialEq)]
struct TagDoc {
    name: String,
    context_ids: BTreeSet<ContextId>,
}

fn corrupt(message: impl Into<String>) -> Error {
    Error::format(None, message)
}

impl ContextualMemory {
    pub fn to_snapshot_bytes(&self) -> Result<Vec<u8>> {
        let doc = GraphDoc {
            version: SNAPSHOT_VERSION,
            dim: self.dim,
            next_id: self.next_id,
            contexts: self
                .contexts
                .values()
                .map(|c| ContextDoc {
                    id: c.id,
                    content: c.content.clone(),
                    uri: c.uri.clone(),
                    tags: c.tags.clone(),
                    modality: c.modality,
                    timestamp: c.timestamp,
                })
                .collect(),
            tags: self
                .tags
                .values()
                .map(|t| TagDoc {
                    name: t.name.clone(),
                    context_ids: t.context_ids.clone(),
                })
                .collect(),
            edges: self.edges(),
        };
        let json = serde_json::to_vec(&doc).map_err(|e| corrupt(e.to_string()))?;
        let ids: Vec<String> = self.contexts.keys().map(|id| id.to_string()).collect();
        let mut block = Vec::new();
        embfile::write_records(
            &mut block,
            self.dim,
            ids.iter()
                .map(String::as_str)
                .zip(self.contexts.values().map(|c| &c.embedding)),
        )?;

        let mut out = Vec::with_capacity(json.len() + block.len() + 64);
        out.extend_from_slice(SNAPSHOT_MAGIC);
        out.extend_from_slice(&SNAPSHOT_VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        out.extend_from_slice(&(block.len() as u64).to_le_bytes());
        out.extend_from_slice(&block);
        let digest = Sha256::digest(&out);
        out.extend_from_slice(&digest);
        Ok(out)
    }

    pub fn from_snapshot_bytes(bytes: &[u8]) -> Result<ContextualMemory> {
        if bytes.len() < 4 + 2 + 8 + 8 + 32 {
            return Err(corrupt("snapshot truncated"));
        }
        if &bytes[..4] != SNAPSHOT_MAGIC {
            return Err(corrupt("bad snapshot magic (expected CPMS)"));
        }
        let version = u16::from_le_bytes([bytes[4], bytes[5]]);
        if version != SNAPSHOT_VERSION {
            return Err(corrupt(format!("unsupported snapshot version {version}")));
        }
        let (body, digest) = bytes.split_at(bytes.len() - 32);
        if Sha256::digest(body).as_slice() != digest {
            return Err(corrupt(
                "snapshot checksum mismatch (truncated or corrupted)",
            ));
        }
        let mut cursor = 6usize;
        let json = take_section(body, &mut cursor, "graph document")?;
        let block = take_section(body, &mut cursor, "embedding block")?;
        if cursor != body.len() {
            return Err(corrupt("trailing bytes in snapshot"));
        }

        let doc: GraphDoc =
            serde_json::from_slice(json).map_err(|e| corrupt(format!("graph document: {e}")))?;
        if doc.version != SNAPSHOT_VERSION {
            return Err(corrupt(format!(
                "unsupported graph document version {}",
                doc.version
            )));
        }
        if doc.dim == 0 {
            return Err(corrupt("graph document dim must be positive"));
        }
        let mut embeddings = embfile::read_from(block)?;
        if embeddings.dim != doc.dim {
            return Err(corrupt(format!(
                "embedding block dim {} differs from graph dim {}",
                embeddings.dim, doc.dim
            )));
        }
        if embeddings.records.len() != doc.contexts.len() {
            return Err(corrupt("embedding block and context list differ in length"));
        }

        let mut mem = ContextualMemory::new(doc.dim);
        let mut last: Option<ContextId> = None;
        for (i, (ctx, (emb_id, embedding))) in doc
            .contexts
            .into_iter()
            .zip(embeddings.records.drain(..))
            .enumerate()
        {
            if emb_id != ctx.id.to_string() {
                return Err(Error::format(
                    Some(i as u64),
                    format!("embedding id {emb_id:?} does not match context {}", ctx.id),
                ));
            }
            if last.is_some_and(|l| l >= ctx.id) || ctx.id.0 >= doc.next_id {
                return Err(corrupt(format!("context id {} out of order", ctx.id)));
            }
            last = Some(ctx.id);
            let new = NewContext {
                content: ctx.content,
                tags: ctx.tags,
                modality: ctx.modality,
                uri: ctx.uri,
                timestamp: ctx.timestamp,
                embedding,
            };
            let tags = validate(&new, doc.dim)
                .map_err(|e| Error::format(Some(i as u64), e.to_string()))?;
            if tags != new.tags {
                return Err(Error::format(
                    Some(i as u64),
                    "context tag list not canonical",
                ));
            }
            let node = ContextNode {
                id: ctx.id,
                content: new.content,
                uri: new.uri,
                tags,
                modality: new.modality,
                timestamp: new.timestamp,
                embedding: new.embedding,
            };
            mem.link(&node);
            mem.contexts.insert(node.id, node);
        }
        mem.next_id = doc.next_id;

        let rebuilt: Vec<TagDoc> = mem
            .tags
            .values()
            .map(|t| TagDoc {
                name: t.name.clone(),
                context_ids: t.context_ids.clone(),
            })
            .collect();
        if rebuilt != doc.tags || mem.edges() != doc.edges {
            return Err(corrupt(
                "tag or edge tables disagree with the context nodes",
            ));
        }
        mem.rebuild_means();
        Ok(mem)
    }

    pub fn save_snapshot(&self, path: impl AsRef<Path>) -> Result<()> {
        let bytes = self.to_snapshot_bytes()?;
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(&bytes)?;
        w.flush()?;
        Ok(())
    }

    pub fn load_snapshot(path: impl AsRef<Path>) -> Result<ContextualMemory> {
        Self::from_snapshot_bytes(&std::fs::read(path)?)
    }
}

fn take_section<'a>(body: &'a [u8], cursor: &mut usize, what: &str) -> Result<&'a [u8]> {
    let len_bytes = body
        .get(*cursor..*cursor + 8)
        .ok_or_else(|| corrupt(format!("{what} length missing")))?;
    let len = u64::from_le_bytes(len_bytes.try_into().unwrap()) as usize;
    *cursor += 8;
    let end = cursor
        .checked_add(len)
        .filter(|&end| end <= body.len())
        .ok_or_else(|| corrupt(format!("{what} truncated")))?;
    let section = &body[*cursor..end];
    *cursor = end;
    Ok(section)
}
