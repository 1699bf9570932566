//! Embedding vectors, similarity, and the pluggable embedder interface.

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A fixed-dimension real vector. Values are always finite and `dim >= 1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Embedding(Vec<f64>);

impl Embedding {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidEmbedding(
                "embedding must have dim >= 1".into(),
            ));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidEmbedding(format!(
                "non-finite value {} at component {i}",
                values[i]
            )));
        }
        Ok(Embedding(values))
    }

    pub fn from_f32(values: &[f32]) -> Result<Self> {
        Self::new(values.iter().map(|&v| f64::from(v)).collect())
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn into_values(self) -> Vec<f64> {
        self.0
    }

    pub fn norm(&self) -> f64 {
        dot(&self.0, &self.0).sqrt()
    }

    /// Round every component to the nearest 32-bit float, the precision used
    /// on disk.
    pub fn to_stored_precision(&self) -> Embedding {
        Embedding(self.0.iter().map(|&v| f64::from(v as f32)).collect())
    }

    pub fn to_f32(&self) -> Vec<f32> {
        self.0.iter().map(|&v| v as f32).collect()
    }

    pub fn scaled(&self, factor: f64) -> Result<Embedding> {
        Embedding::new(self.0.iter().map(|v| v * factor).collect())
    }

    pub fn check_dim(&self, expected: usize) -> Result<()> {
        if self.dim() != expected {
            return Err(Error::Dimension {
                expected,
                actual: self.dim(),
            });
        }
        Ok(())
    }
}

impl TryFrom<Vec<f64>> for Embedding {
    type Error = Error;

    fn try_from(values: Vec<f64>) -> Result<Self> {
        Embedding::new(values)
    }
}

impl From<Embedding> for Vec<f64> {
    fn from(e: Embedding) -> Self {
        e.0
    }
}

impl AsRef<[f64]> for Embedding {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Cosine over raw slices of equal length. Zero-norm input yields 0.
#[inline]
pub(crate) fn cosine_unchecked(a: &[f64], b: &[f64]) -> f64 {
    let (mut ab, mut aa, mut bb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        ab += x * y;
        aa += x * x;
        bb += y * y;
    }
    if aa == 0.0 || bb == 0.0 {
        return 0.0;
    }
    (ab / (aa.sqrt() * bb.sqrt())).clamp(-1.0, 1.0)
}

/// Cosine similarity in `[-1, 1]`. A zero vector on either side scores 0 so
/// degenerate entries rank last rather than aborting a search.
pub fn cosine_similarity(a: &Embedding, b: &Embedding) -> Result<f64> {
    b.check_dim(a.dim())?;
    Ok(cosine_unchecked(&a.0, &b.0))
}

/// Component-wise arithmetic mean.
pub fn mean_embedding<'a, I>(items: I) -> Result<Embedding>
where
    I: IntoIterator<Item = &'a Embedding>,
{
    let mut iter = items.into_iter();
    let first = iter
        .next()
        .ok_or(Error::EmptyInput("mean of zero embeddings"))?;
    let mut sum = first.0.clone();
    let mut count = 1usize;
    for item in iter {
        item.check_dim(sum.len())?;
        for (s, v) in sum.iter_mut().zip(&item.0) {
            *s += v;
        }
        count += 1;
    }
    let n = count as f64;
    sum.iter_mut().for_each(|s| *s /= n);
    Embedding::new(sum)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Text,
    Image,
    Audio,
    Video,
}

impl Modality {
    pub const ALL: [Modality; 4] = [
        Modality::Text,
        Modality::Image,
        Modality::Audio,
        Modality::Video,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Modality::Text => "text",
            Modality::Image => "image",
            Modality::Audio => "audio",
            Modality::Video => "video",
        }
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Modality {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "text" => Ok(Modality::Text),
            "image" => Ok(Modality::Image),
            "audio" => Ok(Modality::Audio),
            "video" => Ok(Modality::Video),
            other => Err(Error::Modality(format!(
                "unknown modality {other:?} (expected text, image, audio or video)"
            ))),
        }
    }
}

/// Maps content (text, or a media locator for non-text modalities) to an
/// embedding. Implementations must be deterministic for identical input.
pub trait Embedder: Send + Sync {
    fn dim(&self) -> usize;

    fn embed(&self, content: &str, modality: Modality) -> Result<Embedding>;

    /// Embedders that cannot be called concurrently return `true`; the engine
    /// then serializes calls through a lock.
    fn single_threaded(&self) -> bool {
        false
    }
}

/// Deterministic stand-in embedder: hashes `(modality, content)` into a seed
/// and draws a unit Gaussian direction from it.
#[derive(Clone, Debug)]
pub struct HashEmbedder {
    dim: usize,
    seed: u64,
}

impl HashEmbedder {
    pub fn new(dim: usize, seed: u64) -> Self {
        assert!(dim >= 1, "embedder dim must be positive");
        HashEmbedder { dim, seed }
    }
}

pub(crate) fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

impl Embedder for HashEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, content: &str, modality: Modality) -> Result<Embedding> {
        let mut key = Vec::with_capacity(content.len() + 8);
        key.extend_from_slice(modality.as_str().as_bytes());
        key.push(0);
        key.extend_from_slice(content.as_bytes());
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ fnv1a64(&key));
        let mut values: Vec<f64> = (0..self.dim)
            .map(|_| StandardNormal.sample(&mut rng))
            .collect();
        let norm = dot(&values, &values).sqrt();
        if norm > 0.0 {
            values.iter_mut().for_each(|v| *v /= norm);
        }
        Embedding::new(values)
    }
}
