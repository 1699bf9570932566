//! Datasets for retrieval benchmarks: seeded synthetic generation, on-disk
//! layout, and import of user-supplied embeddings.
//!
//! A dataset directory holds three files:
//!
//! * `contexts.cpme`: embeddings that populate the stores;
//! * `queries.cpme`: query embeddings, scored in file order;
//! * `labels.json`: a [`LabelMap`] assigning every record id in both files a
//!   label id, and every label id a class name.

mod run;

pub use run::{percentile, render_table, run_bench, BenchOptions, BenchReport, Method};

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use chrono::DateTime;
use serde::{Deserialize, Serialize};

use crate::embedding::{Embedding, Modality};
use crate::embfile::{read_embedding_file, EmbeddingFile};
use crate::error::{Error, Result};
use crate::memory::{ContextualMemory, NewContext};
use crate::synthetic::SyntheticEmbedder;

pub const CONTEXTS_FILE: &str = "contexts.cpme";
pub const QUERIES_FILE: &str = "queries.cpme";
pub const LABELS_FILE: &str = "labels.json";

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticDatasetSpec {
    pub classes: usize,
    pub train_per_class: usize,
    pub queries_per_class: usize,
    pub dim: usize,
    pub noise_scale: f64,
    pub seed: u64,
}

impl SyntheticDatasetSpec {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("classes", self.classes),
            ("train_per_class", self.train_per_class),
            ("queries_per_class", self.queries_per_class),
            ("dim", self.dim),
        ] {
            if v == 0 {
                return Err(Error::Validation(format!("{name} must be positive")));
            }
        }
        if !(self.noise_scale >= 0.0 && self.noise_scale.is_finite()) {
            return Err(Error::Validation(format!(
                "noise_scale must be finite and nonnegative, got {}",
                self.noise_scale
            )));
        }
        Ok(())
    }
}

/// Label ids to class names, and record ids to label ids.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelMap {
    pub labels: BTreeMap<String, String>,
    pub records: BTreeMap<String, String>,
}

impl LabelMap {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        serde_json::from_reader(BufReader::new(File::open(path)?))
            .map_err(|e| Error::format(None, format!("{}: {e}", path.display())))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        serde_json::to_writer_pretty(&mut w, self)
            .map_err(|e| Error::format(None, e.to_string()))?;
        w.write_all(b"\n")?;
        w.flush()?;
        Ok(())
    }

    /// Class name of `record_id`; the `index` is reported in errors.
    pub fn class_of(&self, record_id: &str, index: usize) -> Result<&str> {
        let label = self.records.get(record_id).ok_or_else(|| {
            Error::format(
                Some(index as u64),
                format!("record {record_id:?} has no label"),
            )
        })?;
        self.labels.get(label).map(String::as_str).ok_or_else(|| {
            Error::format(
                Some(index as u64),
                format!("record {record_id:?} references unknown label id {label:?}"),
            )
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub id: String,
    /// Class name (the tag).
    pub class: String,
    pub embedding: Embedding,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub dim: usize,
    pub contexts: Vec<Sample>,
    pub queries: Vec<Sample>,
    pub labels: LabelMap,
}

fn class_name(i: usize, classes: usize) -> String {
    let width = (classes.max(2) - 1).to_string().len();
    format!("class_{i:0width$}")
}

/// Expand `spec` into contexts and queries. Draws are taken class by class,
/// contexts first, then queries, so the dataset depends only on the spec.
pub fn gen_synthetic(spec: &SyntheticDatasetSpec) -> Result<Dataset> {
    spec.validate()?;
    let mut gen = SyntheticEmbedder::new(spec.seed, spec.dim)?;
    let mut labels = LabelMap::default();
    for c in 0..spec.classes {
        labels
            .labels
            .insert(c.to_string(), class_name(c, spec.classes));
    }
    let mut draw_set =
        |prefix: &str, per_class: usize, labels: &mut LabelMap| -> Result<Vec<Sample>> {
            let mut out = Vec::with_capacity(spec.classes * per_class);
            for c in 0..spec.classes {
                for j in 0..per_class {
                    let id = format!("{prefix}{c}_{j}");
                    let embedding = gen.draw(c as u64, spec.noise_scale)?.to_stored_precision();
                    labels.records.insert(id.clone(), c.to_string());
                    out.push(Sample {
                        id,
                        class: class_name(c, spec.classes),
                        embedding,
                    });
                }
            }
            Ok(out)
        };
    let contexts = draw_set("c", spec.train_per_class, &mut labels)?;
    let queries = draw_set("q", spec.queries_per_class, &mut labels)?;
    Ok(Dataset {
        dim: spec.dim,
        contexts,
        queries,
        labels,
    })
}

fn samples(file: &EmbeddingFile, labels: &LabelMap) -> Result<Vec<Sample>> {
    file.records
        .iter()
        .enumerate()
        .map(|(i, (id, emb))| {
            Ok(Sample {
                id: id.clone(),
                class: labels.class_of(id, i)?.to_string(),
                embedding: emb.clone(),
            })
        })
        .collect()
}

fn to_file(dim: usize, samples: &[Sample]) -> Result<EmbeddingFile> {
    let mut f = EmbeddingFile::new(dim);
    for s in samples {
        f.push(s.id.clone(), s.embedding.clone())?;
    }
    Ok(f)
}

impl Dataset {
    pub fn from_files(
        contexts: &EmbeddingFile,
        queries: &EmbeddingFile,
        labels: LabelMap,
    ) -> Result<Self> {
        if queries.dim != contexts.dim {
            return Err(Error::Dimension {
                expected: contexts.dim,
                actual: queries.dim,
            });
        }
        Ok(Dataset {
            dim: contexts.dim,
            contexts: samples(contexts, &labels)?,
            queries: samples(queries, &labels)?,
            labels,
        })
    }

    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        to_file(self.dim, &self.contexts)?.save(dir.join(CONTEXTS_FILE))?;
        to_file(self.dim, &self.queries)?.save(dir.join(QUERIES_FILE))?;
        self.labels.save(dir.join(LABELS_FILE))
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let contexts = read_embedding_file(dir.join(CONTEXTS_FILE))?;
        let queries = read_embedding_file(dir.join(QUERIES_FILE))?;
        Self::from_files(&contexts, &queries, LabelMap::load(dir.join(LABELS_FILE))?)
    }

    pub fn class_count(&self) -> usize {
        let mut names: Vec<&str> = self.contexts.iter().map(|s| s.class.as_str()).collect();
        names.sort_unstable();
        names.dedup();
        names.len()
    }

    /// Contextual memory holding one context per training sample, tagged
    /// with its class name.
    pub fn to_memory(&self, modality: Modality) -> Result<ContextualMemory> {
        let mut mem = ContextualMemory::new(self.dim);
        for s in &self.contexts {
            mem.insert_context(sample_context(s, modality))?;
        }
        Ok(mem)
    }
}

fn sample_context(s: &Sample, modality: Modality) -> NewContext {
    NewContext {
        content: s.id.clone(),
        tags: vec![s.class.clone()],
        modality,
        uri: (modality != Modality::Text).then(|| s.id.clone()),
        timestamp: DateTime::UNIX_EPOCH,
        embedding: s.embedding.clone(),
    }
}

/// Load user embeddings into a fresh contextual memory. Tags are keyed by
/// class name, so distinct label ids that share a name become one tag.
pub fn import_embeddings(
    contexts: &EmbeddingFile,
    labels: &LabelMap,
    modality: Modality,
) -> Result<ContextualMemory> {
    let samples = samples(contexts, labels)?;
    let mut mem = ContextualMemory::new(contexts.dim);
    for s in &samples {
        mem.insert_context(sample_context(s, modality))?;
    }
    Ok(mem)
}
