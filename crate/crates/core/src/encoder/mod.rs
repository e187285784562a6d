//! Hashed character n-gram featurization and the tied linear projection.
//!
//! Text is lowercased, split on Unicode whitespace and truncated to
//! `max_seq_len` tokens. Each token is wrapped in `#` boundary markers and
//! decomposed into character n-grams, which are bucketed with 64-bit FNV-1a
//! (standard offset basis `0xcbf29ce484222325`, prime `0x100000001b3`) over
//! their UTF-8 bytes, modulo `hash_dim`. One projection matrix maps the
//! resulting count vector of both topics and contents to a unit embedding.

mod checkpoint;

use std::hash::Hasher;

use fnv::FnvHasher;
use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::corpus::Corpus;
use crate::error::{Error, Result};

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CHECKPOINT_MAGIC};

pub const BOUNDARY: char = '#';

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EncoderConfig {
    pub max_seq_len: usize,
    pub ngram_size: usize,
    pub hash_dim: usize,
    pub embed_dim: usize,
    pub seed: u64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self { max_seq_len: 96, ngram_size: 3, hash_dim: 32768, embed_dim: 64, seed: 0 }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_seq_len == 0 {
            return Err(Error::Config("max_seq_len must be at least 1".into()));
        }
        if self.ngram_size == 0 {
            return Err(Error::Config("ngram_size must be at least 1".into()));
        }
        if self.embed_dim < 2 || self.hash_dim < self.embed_dim {
            return Err(Error::Config(format!(
                "need hash_dim >= embed_dim >= 2, got hash_dim={} embed_dim={}",
                self.hash_dim, self.embed_dim
            )));
        }
        if u32::try_from(self.hash_dim).is_err() {
            return Err(Error::Config("hash_dim does not fit in 32 bits".into()));
        }
        Ok(())
    }
}

/// Sparse count vector over `dim` hash buckets, entries sorted by bucket.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseFeatures {
    dim: usize,
    entries: Vec<(u32, f64)>,
}

impl SparseFeatures {
    pub fn zeros(dim: usize) -> Self {
        Self { dim, entries: Vec::new() }
    }

    /// Builds from (bucket, value) pairs; duplicate buckets are summed and
    /// zero values dropped.
    pub fn from_pairs(dim: usize, pairs: impl IntoIterator<Item = (u32, f64)>) -> Result<Self> {
        let mut entries: Vec<(u32, f64)> = pairs.into_iter().collect();
        if let Some(&(b, _)) = entries.iter().find(|(b, _)| *b as usize >= dim) {
            return Err(Error::Contract(format!("bucket {b} out of range for dimension {dim}")));
        }
        entries.sort_by_key(|&(b, _)| b);
        let mut merged: Vec<(u32, f64)> = Vec::with_capacity(entries.len());
        for (b, v) in entries {
            match merged.last_mut() {
                Some((last, acc)) if *last == b => *acc += v,
                _ => merged.push((b, v)),
            }
        }
        merged.retain(|&(_, v)| v != 0.0);
        Ok(Self { dim, entries: merged })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entries(&self) -> &[(u32, f64)] {
        &self.entries
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn is_zero(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, bucket: u32) -> f64 {
        self.entries
            .binary_search_by_key(&bucket, |&(b, _)| b)
            .map_or(0.0, |i| self.entries[i].1)
    }

    pub fn scaled(&self, factor: f64) -> Self {
        let entries = self.entries.iter().map(|&(b, v)| (b, v * factor)).filter(|&(_, v)| v != 0.0).collect();
        Self { dim: self.dim, entries }
    }
}

/// Lowercases, splits on Unicode whitespace and keeps the first `max_seq_len` tokens.
pub fn tokenize_truncate(text: &str, max_seq_len: usize) -> Vec<String> {
    text.split_whitespace().take(max_seq_len).map(str::to_lowercase).collect()
}

pub fn ngram_bucket(ngram: &str, hash_dim: usize) -> u32 {
    let mut hasher = FnvHasher::default();
    hasher.write(ngram.as_bytes());
    (hasher.finish() % hash_dim as u64) as u32
}

/// Character n-grams of `#token#`. A padded token shorter than `n` yields
/// itself as its only gram.
pub fn char_ngrams(token: &str, n: usize) -> Vec<String> {
    let padded: Vec<char> = std::iter::once(BOUNDARY).chain(token.chars()).chain(std::iter::once(BOUNDARY)).collect();
    if padded.len() <= n {
        return vec![padded.into_iter().collect()];
    }
    padded.windows(n).map(|w| w.iter().collect()).collect()
}

pub fn hash_features<S: AsRef<str>>(tokens: &[S], config: &EncoderConfig) -> SparseFeatures {
    let mut buckets: Vec<u32> = tokens
        .iter()
        .flat_map(|t| char_ngrams(t.as_ref(), config.ngram_size))
        .map(|g| ngram_bucket(&g, config.hash_dim))
        .collect();
    buckets.sort_unstable();
    let mut entries: Vec<(u32, f64)> = Vec::new();
    for b in buckets {
        match entries.last_mut() {
            Some((last, count)) if *last == b => *count += 1.0,
            _ => entries.push((b, 1.0)),
        }
    }
    SparseFeatures { dim: config.hash_dim, entries }
}

/// Tokenize, truncate and hash in one step.
pub fn featurize(text: &str, config: &EncoderConfig) -> SparseFeatures {
    hash_features(&tokenize_truncate(text, config.max_seq_len), config)
}

/// Trainable `hash_dim x embed_dim` projection shared by both encoder sides.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    projection: Array2<f64>,
}

impl EncoderParams {
    pub fn from_projection(projection: Array2<f64>) -> Result<Self> {
        if projection.iter().any(|v| !v.is_finite()) {
            return Err(Error::Contract("projection contains non-finite entries".into()));
        }
        Ok(Self { projection })
    }

    pub fn projection(&self) -> &Array2<f64> {
        &self.projection
    }

    pub(crate) fn projection_mut(&mut self) -> &mut Array2<f64> {
        &mut self.projection
    }

    pub fn hash_dim(&self) -> usize {
        self.projection.nrows()
    }

    pub fn embed_dim(&self) -> usize {
        self.projection.ncols()
    }
}

/// Entries i.i.d. uniform in `[-1/sqrt(hash_dim), 1/sqrt(hash_dim)]`.
pub fn init_params(config: &EncoderConfig) -> EncoderParams {
    let bound = 1.0 / (config.hash_dim as f64).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let projection = Array2::from_shape_simple_fn((config.hash_dim, config.embed_dim), || rng.random_range(-bound..=bound));
    EncoderParams { projection }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    pub vector: Array1<f64>,
    /// Set when the input produced no features; `vector` is then all zeros.
    pub degenerate: bool,
}

/// Unnormalized projection `features . projection`.
pub fn project(params: &EncoderParams, features: &SparseFeatures) -> Result<Array1<f64>> {
    if features.dim() != params.hash_dim() {
        return Err(Error::Contract(format!(
            "feature dimension {} does not match projection rows {}",
            features.dim(),
            params.hash_dim()
        )));
    }
    let mut z = Array1::zeros(params.embed_dim());
    for &(b, v) in features.entries() {
        z.scaled_add(v, &params.projection.row(b as usize));
    }
    Ok(z)
}

pub fn embed(params: &EncoderParams, features: &SparseFeatures) -> Result<Embedding> {
    let z = project(params, features)?;
    let norm = z.dot(&z).sqrt();
    if features.is_zero() || norm == 0.0 {
        return Ok(Embedding { vector: Array1::zeros(params.embed_dim()), degenerate: true });
    }
    Ok(Embedding { vector: z / norm, degenerate: false })
}

pub fn embed_text(params: &EncoderParams, config: &EncoderConfig, text: &str) -> Result<Embedding> {
    embed(params, &featurize(text, config))
}

/// Row-aligned embeddings for a list of ids.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    pub ids: Vec<String>,
    pub values: Array2<f64>,
    pub degenerate: Vec<bool>,
}

impl EmbeddingMatrix {
    pub fn from_embeddings(ids: Vec<String>, embeddings: Vec<Embedding>, dim: usize) -> Result<Self> {
        if ids.len() != embeddings.len() {
            return Err(Error::Contract("ids and embeddings differ in length".into()));
        }
        let mut values = Array2::zeros((ids.len(), dim));
        let mut degenerate = Vec::with_capacity(ids.len());
        for (mut row, e) in values.rows_mut().into_iter().zip(&embeddings) {
            if e.vector.len() != dim {
                return Err(Error::Contract(format!("embedding of length {} in matrix of width {dim}", e.vector.len())));
            }
            row.assign(&e.vector);
            degenerate.push(e.degenerate);
        }
        Ok(Self { ids, values, degenerate })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn embedding(&self, row: usize) -> Embedding {
        Embedding { vector: self.values.row(row).to_owned(), degenerate: self.degenerate[row] }
    }
}

/// Embeds `texts` in parallel; output row order follows the input.
pub fn embed_texts(
    params: &EncoderParams,
    config: &EncoderConfig,
    ids: Vec<String>,
    texts: &[String],
) -> Result<EmbeddingMatrix> {
    let embeddings = texts
        .par_iter()
        .map(|t| embed_text(params, config, t))
        .collect::<Result<Vec<_>>>()?;
    EmbeddingMatrix::from_embeddings(ids, embeddings, params.embed_dim())
}

/// Topic (breadcrumb text) and content embeddings, rows in ascending id order.
pub fn embed_corpus(
    params: &EncoderParams,
    corpus: &Corpus,
    config: &EncoderConfig,
) -> Result<(EmbeddingMatrix, EmbeddingMatrix)> {
    let topic_ids: Vec<String> = corpus.topics().iter().map(|t| t.id.clone()).collect();
    let topic_texts = topic_ids
        .iter()
        .map(|id| corpus.topic_breadcrumb_text(id))
        .collect::<Result<Vec<_>>>()?;
    let content_ids: Vec<String> = corpus.contents().iter().map(|c| c.id.clone()).collect();
    let content_texts: Vec<String> = corpus.contents().iter().map(|c| c.encoder_text()).collect();
    Ok((
        embed_texts(params, config, topic_ids, &topic_texts)?,
        embed_texts(params, config, content_ids, &content_texts)?,
    ))
}
