//! Flat key-value vector store searched by exhaustive cosine scan. This is
//! the retrieval baseline: no index, one pass over every record.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::embedding::{cosine_unchecked, Embedding};
use crate::embfile::EmbeddingFile;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlatRecord {
    pub id: String,
    pub key_embedding: Embedding,
    pub value: String,
    pub payload: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlatHit {
    pub id: String,
    pub value: String,
    pub score: f64,
}

#[derive(Clone, Debug, Default)]
pub struct FlatStore {
    dim: usize,
    records: Vec<FlatRecord>,
    index: HashMap<String, usize>,
}

impl FlatStore {
    pub fn new(dim: usize) -> Self {
        FlatStore {
            dim,
            records: Vec::new(),
            index: HashMap::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&FlatRecord> {
        self.index.get(id).map(|&i| &self.records[i])
    }

    /// Keys are stored at 32-bit precision, like contextual memory.
    pub fn flat_insert(&mut self, record: FlatRecord) -> Result<String> {
        record.key_embedding.check_dim(self.dim)?;
        if self.index.contains_key(&record.id) {
            return Err(Error::Duplicate(record.id));
        }
        let id = record.id.clone();
        self.index.insert(id.clone(), self.records.len());
        self.records.push(FlatRecord {
            key_embedding: record.key_embedding.to_stored_precision(),
            ..record
        });
        Ok(id)
    }

    /// Bulk load: each record's value comes from `value_of(id)`.
    pub fn load_file<F>(&mut self, file: &EmbeddingFile, mut value_of: F) -> Result<usize>
    where
        F: FnMut(&str) -> Result<String>,
    {
        if file.dim != self.dim {
            return Err(Error::Dimension {
                expected: self.dim,
                actual: file.dim,
            });
        }
        for (id, emb) in &file.records {
            self.flat_insert(FlatRecord {
                id: id.clone(),
                key_embedding: emb.clone(),
                value: value_of(id)?,
                payload: None,
            })?;
        }
        Ok(file.records.len())
    }

    /// Exact top-k by cosine, score descending then id ascending.
    pub fn flat_search(&self, query: &Embedding, topk: usize) -> Result<Vec<FlatHit>> {
        if self.records.is_empty() {
            return Err(Error::EmptySearch);
        }
        query.check_dim(self.dim)?;
        let q = query.values();
        let mut scored: Vec<(f64, usize)> = self
            .records
            .iter()
            .enumerate()
            .map(|(i, r)| (cosine_unchecked(q, r.key_embedding.values()), i))
            .collect();
        let order = |a: &(f64, usize), b: &(f64, usize)| {
            b.0.total_cmp(&a.0)
                .then_with(|| self.records[a.1].id.cmp(&self.records[b.1].id))
        };
        let k = topk.min(scored.len());
        if k == 0 {
            return Ok(Vec::new());
        }
        if k < scored.len() {
            scored.select_nth_unstable_by(k - 1, order);
            scored.truncate(k);
        }
        scored.sort_by(order);
        Ok(scored
            .into_iter()
            .map(|(score, i)| FlatHit {
                id: self.records[i].id.clone(),
                value: self.records[i].value.clone(),
                score,
            })
            .collect())
    }
}
