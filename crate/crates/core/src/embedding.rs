//! Skip-gram word embeddings trained with negative sampling.
//!
//! Training is a pure function of the corpus's id stream: vocabulary ids are
//! assigned by descending frequency then token order, and every random draw
//! (row init, subsampling, window shrink, negatives) comes from a generator
//! seeded by the config. Two corpora that differ only by a relabeling of
//! tokens with distinct frequencies therefore train to the same matrix with
//! the same relabeling.
//!
//! Parameter storage is abstracted behind [`Rows`] so the same update loop
//! drives single-threaded strict training ([`DenseRows`]) and lock-free
//! concurrent training over shared atomics ([`AtomicRows`]).

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::sync::atomic::{AtomicU32, AtomicU64, Ordering};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::textnorm::TokenizedCorpus;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubwordConfig {
    pub min_n: usize,
    pub max_n: usize,
    pub buckets: usize,
}

impl Default for SubwordConfig {
    fn default() -> Self {
        SubwordConfig { min_n: 3, max_n: 6, buckets: 2_000_000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub dim: usize,
    pub window: usize,
    pub epochs: usize,
    pub min_count: u64,
    pub negative: usize,
    pub learning_rate: f32,
    /// Frequent-word subsampling threshold; 0 disables subsampling.
    pub sample: f64,
    pub seed: u64,
    /// Character n-gram vectors; `None` trains plain word vectors.
    pub subwords: Option<SubwordConfig>,
    /// Worker threads. Anything above 1 makes results nondeterministic.
    pub threads: usize,
    /// Corpora below this many tokens train with a warning.
    pub token_floor: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            dim: 100,
            window: 5,
            epochs: 5,
            min_count: 5,
            negative: 5,
            learning_rate: 0.05,
            sample: 1e-4,
            seed: 1,
            subwords: None,
            threads: 1,
            token_floor: 1_000_000,
        }
    }
}

impl TrainConfig {
    pub fn is_strict(&self) -> bool {
        self.threads <= 1
    }

    fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.window == 0 || self.epochs == 0 {
            return Err(Error::invalid("dim, window and epochs must be positive"));
        }
        if let Some(sw) = &self.subwords {
            if sw.min_n == 0 || sw.min_n > sw.max_n || sw.buckets == 0 {
                return Err(Error::invalid("subword n-gram range or bucket count is invalid"));
            }
        }
        Ok(())
    }
}

/// Trained word vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    vocab: Vec<String>,
    index: BTreeMap<String, usize>,
    counts: Vec<u64>,
    vectors: Vec<f32>,
    dim: usize,
    config: TrainConfig,
}

impl Embedding {
    /// Assembles an embedding from parts, e.g. when reading a vector file.
    /// `vectors` is row-major `vocab.len() x dim`.
    pub fn from_parts(
        vocab: Vec<String>,
        counts: Vec<u64>,
        vectors: Vec<f32>,
        dim: usize,
        config: TrainConfig,
    ) -> Result<Self> {
        if dim == 0 || vectors.len() != vocab.len() * dim || counts.len() != vocab.len() {
            return Err(Error::invalid(format!(
                "embedding shape mismatch: {} tokens, {} counts, {} floats, dim {dim}",
                vocab.len(),
                counts.len(),
                vectors.len()
            )));
        }
        if let Some(bad) = vectors.iter().position(|x| !x.is_finite()) {
            return Err(Error::invalid(format!("non-finite value in row {}", bad / dim)));
        }
        let mut index = BTreeMap::new();
        for (i, t) in vocab.iter().enumerate() {
            if index.insert(t.clone(), i).is_some() {
                return Err(Error::DuplicateKey { kind: "vocabulary token", key: t.clone() });
            }
        }
        Ok(Embedding { vocab, index, counts, vectors, dim, config })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vocab.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vocab.is_empty()
    }

    pub fn vocab(&self) -> &[String] {
        &self.vocab
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn vectors(&self) -> &[f32] {
        &self.vectors
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn index_of(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn count_of(&self, token: &str) -> Option<u64> {
        self.index_of(token).map(|i| self.counts[i])
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.vectors[i * self.dim..(i + 1) * self.dim]
    }

    pub fn vector(&self, token: &str) -> Option<&[f32]> {
        self.index_of(token).map(|i| self.row(i))
    }

    /// Cosine similarity of two vocabulary tokens.
    pub fn cosine(&self, a: &str, b: &str) -> Option<f32> {
        Some(cosine(self.vector(a)?, self.vector(b)?))
    }

    /// Copy with every row multiplied by `rotation` on the right
    /// (`row' = row * R`, `R` row-major `dim x dim`).
    pub fn rotated(&self, rotation: &[f64]) -> Result<Self> {
        let d = self.dim;
        if rotation.len() != d * d {
            return Err(Error::invalid("rotation has the wrong shape"));
        }
        let mut vectors = Vec::with_capacity(self.vectors.len());
        for r in 0..self.len() {
            let row = self.row(r);
            for j in 0..d {
                let v: f64 = (0..d).map(|k| row[k] as f64 * rotation[k * d + j]).sum();
                vectors.push(v as f32);
            }
        }
        Ok(Embedding { vectors, ..self.clone() })
    }
}

pub fn dot(a: &[f32], b: &[f32]) -> f32 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn cosine(a: &[f32], b: &[f32]) -> f32 {
    let na = libm::sqrtf(dot(a, a));
    let nb = libm::sqrtf(dot(b, b));
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot(a, b) / (na * nb)
    }
}

/// Row-addressed parameter matrix.
pub trait Rows {
    fn dim(&self) -> usize;
    fn dot_row(&mut self, row: usize, v: &[f32]) -> f32;
    /// `row += scale * v`
    fn add_to_row(&mut self, row: usize, v: &[f32], scale: f32);
    /// `out += scale * row`
    fn add_row_to(&mut self, row: usize, out: &mut [f32], scale: f32);
}

pub struct DenseRows<'a> {
    data: &'a mut [f32],
    dim: usize,
}

impl<'a> DenseRows<'a> {
    pub fn new(data: &'a mut [f32], dim: usize) -> Self {
        DenseRows { data, dim }
    }

    fn row_mut(&mut self, row: usize) -> &mut [f32] {
        &mut self.data[row * self.dim..(row + 1) * self.dim]
    }
}

impl Rows for DenseRows<'_> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn dot_row(&mut self, row: usize, v: &[f32]) -> f32 {
        dot(&self.data[row * self.dim..(row + 1) * self.dim], v)
    }

    fn add_to_row(&mut self, row: usize, v: &[f32], scale: f32) {
        for (x, y) in self.row_mut(row).iter_mut().zip(v) {
            *x += scale * y;
        }
    }

    fn add_row_to(&mut self, row: usize, out: &mut [f32], scale: f32) {
        for (o, x) in out.iter_mut().zip(&self.data[row * self.dim..(row + 1) * self.dim]) {
            *o += scale * x;
        }
    }
}

/// Shared `f32` matrix stored as relaxed atomics. Concurrent writers may
/// interleave, which is the usual trade for lock-free SGD.
pub struct AtomicRows<'a> {
    data: &'a [AtomicU32],
    dim: usize,
}

impl<'a> AtomicRows<'a> {
    pub fn new(data: &'a [AtomicU32], dim: usize) -> Self {
        AtomicRows { data, dim }
    }

    fn row(&self, row: usize) -> &[AtomicU32] {
        &self.data[row * self.dim..(row + 1) * self.dim]
    }
}

fn load(x: &AtomicU32) -> f32 {
    f32::from_bits(x.load(Ordering::Relaxed))
}

impl Rows for AtomicRows<'_> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn dot_row(&mut self, row: usize, v: &[f32]) -> f32 {
        self.row(row).iter().zip(v).map(|(x, y)| load(x) * y).sum()
    }

    fn add_to_row(&mut self, row: usize, v: &[f32], scale: f32) {
        for (x, y) in self.row(row).iter().zip(v) {
            x.store((load(x) + scale * y).to_bits(), Ordering::Relaxed);
        }
    }

    fn add_row_to(&mut self, row: usize, out: &mut [f32], scale: f32) {
        for (o, x) in out.iter_mut().zip(self.row(row)) {
            *o += scale * load(x);
        }
    }
}

pub fn to_atomic(data: &[f32]) -> Vec<AtomicU32> {
    data.iter().map(|x| AtomicU32::new(x.to_bits())).collect()
}

pub fn from_atomic(data: &[AtomicU32]) -> Vec<f32> {
    data.iter().map(load).collect()
}

/// FNV-1a over bytes, as used for subword bucket hashing.
fn fnv1a(bytes: &[u8]) -> u32 {
    let mut h: u32 = 2_166_136_261;
    for &b in bytes {
        h ^= b as u32;
        h = h.wrapping_mul(16_777_619);
    }
    h
}

/// Bucket rows (offset by `vocab_len`) of the character n-grams of `<word>`.
pub fn subword_rows(word: &str, cfg: &SubwordConfig, vocab_len: usize) -> Vec<u32> {
    let wrapped: Vec<u8> = [b"<", word.as_bytes(), b">"].concat();
    let mut rows = Vec::new();
    for n in cfg.min_n..=cfg.max_n {
        if n > wrapped.len() {
            break;
        }
        for gram in wrapped.windows(n) {
            // the whole wrapped word is the word row itself
            if gram.len() == wrapped.len() {
                continue;
            }
            rows.push((vocab_len + (fnv1a(gram) as usize % cfg.buckets)) as u32);
        }
    }
    rows
}

/// Vocabulary with ids by descending count, ties in token order.
pub fn build_vocab(corpus: &TokenizedCorpus, min_count: u64) -> (Vec<String>, Vec<u64>) {
    let mut counts: BTreeMap<&str, u64> = BTreeMap::new();
    for d in corpus.docs() {
        for t in &d.tokens {
            *counts.entry(t.as_str()).or_insert(0) += 1;
        }
    }
    let mut entries: Vec<(&str, u64)> = counts.into_iter().filter(|&(_, c)| c >= min_count).collect();
    // stable: BTreeMap order already breaks ties lexicographically
    entries.sort_by(|a, b| b.1.cmp(&a.1));
    entries.into_iter().map(|(t, c)| (String::from(t), c)).unzip()
}

fn sigmoid(x: f32) -> f32 {
    if x > 8.0 {
        1.0
    } else if x < -8.0 {
        0.0
    } else {
        1.0 / (1.0 + libm::expf(-x))
    }
}

/// Corpus prepared for training: id stream, negative-sampling distribution,
/// subsampling keep probabilities and initial parameters.
pub struct Trainer {
    config: TrainConfig,
    vocab: Vec<String>,
    counts: Vec<u64>,
    docs: Vec<Vec<u32>>,
    /// Input rows per word id (word row first, then subword buckets).
    inputs: Vec<Vec<u32>>,
    neg_cumulative: Vec<f64>,
    keep_prob: Vec<f32>,
    total_tokens: u64,
}

impl Trainer {
    pub fn new(corpus: &TokenizedCorpus, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        if corpus.is_empty() {
            return Err(Error::invalid("cannot train an embedding on an empty corpus"));
        }
        if corpus.token_count() < config.token_floor {
            log::warn!(
                "training on {} tokens, below the {} token floor; vectors will be noisy",
                corpus.token_count(),
                config.token_floor
            );
        }
        let (vocab, counts) = build_vocab(corpus, config.min_count);
        if vocab.is_empty() {
            return Err(Error::invalid(format!("no token reaches min_count {}", config.min_count)));
        }
        let index: BTreeMap<&str, u32> =
            vocab.iter().enumerate().map(|(i, t)| (t.as_str(), i as u32)).collect();
        let docs: Vec<Vec<u32>> = corpus
            .docs()
            .iter()
            .map(|d| d.tokens.iter().filter_map(|t| index.get(t.as_str()).copied()).collect())
            .collect();
        let total_tokens: u64 = counts.iter().sum();

        let inputs = vocab
            .iter()
            .enumerate()
            .map(|(i, w)| {
                let mut rows = alloc::vec![i as u32];
                if let Some(sw) = &config.subwords {
                    rows.extend(subword_rows(w, sw, vocab.len()));
                }
                rows
            })
            .collect();

        let mut acc = 0.0;
        let neg_cumulative = counts
            .iter()
            .map(|&c| {
                acc += libm::sqrt(c as f64);
                acc
            })
            .collect();

        let keep_prob = counts
            .iter()
            .map(|&c| {
                if config.sample <= 0.0 {
                    return 1.0;
                }
                let f = c as f64 / total_tokens as f64;
                let r = config.sample / f;
                (libm::sqrt(r) + r).min(1.0) as f32
            })
            .collect();

        Ok(Trainer { config, vocab, counts, docs, inputs, neg_cumulative, keep_prob, total_tokens })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn vocab(&self) -> &[String] {
        &self.vocab
    }

    pub fn input_rows(&self) -> usize {
        self.vocab.len() + self.config.subwords.as_ref().map_or(0, |s| s.buckets)
    }

    /// Input matrix drawn uniformly from `±1/dim`; the output matrix starts at zero.
    pub fn initial_params(&self) -> (Vec<f32>, Vec<f32>) {
        let dim = self.config.dim;
        let bound = 1.0 / dim as f32;
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed);
        let input = (0..self.input_rows() * dim).map(|_| rng.random_range(-bound..bound)).collect();
        let output = alloc::vec![0.0; self.vocab.len() * dim];
        (input, output)
    }

    fn sample_negative(&self, rng: &mut ChaCha8Rng) -> u32 {
        let total = *self.neg_cumulative.last().unwrap_or(&0.0);
        let x = rng.random::<f64>() * total;
        self.neg_cumulative.partition_point(|&c| c <= x).min(self.vocab.len() - 1) as u32
    }

    /// Trains on the documents `shard, shard + shards, ...` for every epoch.
    /// `progress` counts processed tokens across all shards and drives the
    /// linear learning-rate decay.
    pub fn train_shard<I: Rows, O: Rows>(
        &self,
        input: &mut I,
        output: &mut O,
        shard: usize,
        shards: usize,
        progress: &AtomicU64,
    ) {
        let cfg = &self.config;
        let dim = cfg.dim;
        let shards = shards.max(1);
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ ((shard as u64 + 1) << 32));
        let planned = (cfg.epochs as u64 * self.total_tokens).max(1);
        let mut hidden = alloc::vec![0.0f32; dim];
        let mut grad = alloc::vec![0.0f32; dim];
        let mut kept: Vec<u32> = Vec::new();

        for _ in 0..cfg.epochs {
            for doc in self.docs.iter().skip(shard).step_by(shards) {
                let done = progress.fetch_add(doc.len() as u64, Ordering::Relaxed);
                let lr = cfg.learning_rate * (1.0 - done as f32 / planned as f32).max(1e-4);

                kept.clear();
                kept.extend(
                    doc.iter().copied().filter(|&w| rng.random::<f32>() < self.keep_prob[w as usize]),
                );
                for pos in 0..kept.len() {
                    let center = kept[pos] as usize;
                    let rows = &self.inputs[center];
                    let reach = rng.random_range(1..=cfg.window);
                    let lo = pos.saturating_sub(reach);
                    let hi = (pos + reach).min(kept.len() - 1);
                    for ctx in lo..=hi {
                        if ctx == pos {
                            continue;
                        }
                        hidden.iter_mut().for_each(|h| *h = 0.0);
                        for &r in rows {
                            input.add_row_to(r as usize, &mut hidden, 1.0);
                        }
                        if rows.len() > 1 {
                            let inv = 1.0 / rows.len() as f32;
                            hidden.iter_mut().for_each(|h| *h *= inv);
                        }
                        grad.iter_mut().for_each(|g| *g = 0.0);

                        let target = kept[ctx];
                        self.update_pair(output, target, 1.0, lr, &hidden, &mut grad);
                        for _ in 0..cfg.negative {
                            let neg = self.sample_negative(&mut rng);
                            if neg == target {
                                continue;
                            }
                            self.update_pair(output, neg, 0.0, lr, &hidden, &mut grad);
                        }
                        for &r in rows {
                            input.add_to_row(r as usize, &grad, 1.0);
                        }
                    }
                }
            }
        }
    }

    fn update_pair<O: Rows>(
        &self,
        output: &mut O,
        target: u32,
        label: f32,
        lr: f32,
        hidden: &[f32],
        grad: &mut [f32],
    ) {
        let row = target as usize;
        let score = sigmoid(output.dot_row(row, hidden));
        let g = lr * (label - score);
        // grad picks up out[row] before out[row] moves
        output.add_row_to(row, grad, g);
        output.add_to_row(row, hidden, g);
    }

    /// Folds the trained input matrix into one vector per vocabulary word.
    pub fn finish(&self, input: &[f32]) -> Embedding {
        let dim = self.config.dim;
        let mut vectors = Vec::with_capacity(self.vocab.len() * dim);
        for rows in &self.inputs {
            let mut v = alloc::vec![0.0f32; dim];
            for &r in rows {
                let r = r as usize;
                for (o, x) in v.iter_mut().zip(&input[r * dim..(r + 1) * dim]) {
                    *o += x;
                }
            }
            let inv = 1.0 / rows.len() as f32;
            vectors.extend(v.into_iter().map(|x| x * inv));
        }
        let mut index = BTreeMap::new();
        for (i, t) in self.vocab.iter().enumerate() {
            index.insert(t.clone(), i);
        }
        Embedding {
            vocab: self.vocab.clone(),
            index,
            counts: self.counts.clone(),
            vectors,
            dim,
            config: self.config.clone(),
        }
    }

    /// Single-threaded, fully deterministic training.
    pub fn train_strict(&self) -> Embedding {
        let (mut input, mut output) = self.initial_params();
        let dim = self.config.dim;
        let progress = AtomicU64::new(0);
        {
            let mut i = DenseRows::new(&mut input, dim);
            let mut o = DenseRows::new(&mut output, dim);
            self.train_shard(&mut i, &mut o, 0, 1, &progress);
        }
        self.finish(&input)
    }
}

/// Strict-mode training entry point.
pub fn train_embedding(corpus: &TokenizedCorpus, config: TrainConfig) -> Result<Embedding> {
    Ok(Trainer::new(corpus, config)?.train_strict())
}
