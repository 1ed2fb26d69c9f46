//! Orthogonal alignment of two embeddings and single-word translation.
//!
//! Both embeddings are unit-normalized, mean-centered and normalized again.
//! The seed dictionary pairs each token with itself over the tokens that
//! are frequent in both vocabularies; the map is the orthogonal Procrustes
//! solution `W = U Vᵀ` from the SVD of the seed cross-covariance
//! `Σ t sᵀ`, so that `W s ≈ t` for seed pairs.
//!
//! A word "translates to itself" when the nearest target token to its
//! mapped vector is the same string. The fraction of an evaluation
//! vocabulary that does is the directional similarity of the two corpora.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::embedding::{dot, Embedding};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "rule")]
pub enum Retrieval {
    NearestNeighbor,
    /// Target scores are normalized over all source words:
    /// `β·cos(Ws, t) − log Σ_s' exp(β·cos(Ws', t))`.
    InvertedSoftmax { beta: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AlignConfig {
    /// Seed pairs come from the `seed_top_k` most frequent tokens of each side.
    pub seed_top_k: usize,
    pub min_seeds: usize,
    pub retrieval: Retrieval,
    /// Default evaluation vocabulary size.
    pub eval_top: usize,
    /// Minimum count on both sides for the default evaluation vocabulary.
    pub eval_min_count: u64,
}

impl Default for AlignConfig {
    fn default() -> Self {
        AlignConfig {
            seed_top_k: 4000,
            min_seeds: 50,
            retrieval: Retrieval::NearestNeighbor,
            eval_top: 5000,
            eval_min_count: 50,
        }
    }
}

/// Unit rows, mean-centered, unit again.
fn preprocess(emb: &Embedding) -> Vec<f32> {
    let d = emb.dim();
    let n = emb.len();
    let mut out: Vec<f32> = Vec::with_capacity(n * d);
    for i in 0..n {
        let row = emb.row(i);
        let norm = libm::sqrtf(dot(row, row));
        let inv = if norm > 0.0 { 1.0 / norm } else { 0.0 };
        out.extend(row.iter().map(|x| x * inv));
    }
    let mut mean = alloc::vec![0.0f64; d];
    for row in out.chunks_exact(d) {
        for (m, x) in mean.iter_mut().zip(row) {
            *m += *x as f64;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n.max(1) as f64);
    for row in out.chunks_exact_mut(d) {
        for (x, m) in row.iter_mut().zip(&mean) {
            *x = (*x as f64 - m) as f32;
        }
        let norm = libm::sqrtf(dot(row, row));
        if norm > 0.0 {
            row.iter_mut().for_each(|x| *x /= norm);
        }
    }
    out
}

/// Two embeddings, the orthogonal map from source to target space and the
/// state needed to translate source words.
#[derive(Debug, Clone)]
pub struct AlignedEmbeddingPair {
    source: Embedding,
    target: Embedding,
    /// Row-major `d x d`; `mapped = map · source`.
    map: Vec<f64>,
    seed_dictionary: Vec<(String, String)>,
    retrieval: Retrieval,
    config: AlignConfig,
    mapped_source: Vec<f32>,
    target_unit: Vec<f32>,
    /// `log Σ_s exp(β cos(Ws, t))` per target row, for inverted softmax.
    target_log_norm: Option<Vec<f64>>,
}

/// Identical tokens among the `k` most frequent of both vocabularies, in
/// source frequency order.
pub fn identical_seed_pairs(source: &Embedding, target: &Embedding, k: usize) -> Vec<(String, String)> {
    let target_top: BTreeSet<&str> = target.vocab().iter().take(k).map(String::as_str).collect();
    source
        .vocab()
        .iter()
        .take(k)
        .filter(|t| target_top.contains(t.as_str()))
        .map(|t| (t.clone(), t.clone()))
        .collect()
}

/// Orthogonal `W` (row-major) minimizing `Σ ‖W s_i − t_i‖²` over row pairs.
pub fn procrustes(source_rows: &[&[f32]], target_rows: &[&[f32]], dim: usize) -> Result<Vec<f64>> {
    let mut cross = DMatrix::<f64>::zeros(dim, dim);
    for (s, t) in source_rows.iter().zip(target_rows) {
        for i in 0..dim {
            let ti = t[i] as f64;
            for j in 0..dim {
                cross[(i, j)] += ti * s[j] as f64;
            }
        }
    }
    let svd = cross
        .try_svd(true, true, 1e-14, 10_000)
        .ok_or_else(|| Error::invalid("SVD of the seed cross-covariance did not converge"))?;
    let (u, v_t) = match (svd.u, svd.v_t) {
        (Some(u), Some(v_t)) => (u, v_t),
        _ => return Err(Error::invalid("SVD did not return singular vectors")),
    };
    let w = u * v_t;
    let mut out = Vec::with_capacity(dim * dim);
    for i in 0..dim {
        for j in 0..dim {
            out.push(w[(i, j)]);
        }
    }
    Ok(out)
}

/// Largest absolute entry of `WᵀW − I`.
pub fn orthogonality_error(map: &[f64], dim: usize) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..dim {
        for j in 0..dim {
            let v: f64 = (0..dim).map(|k| map[k * dim + i] * map[k * dim + j]).sum();
            let expected = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((v - expected).abs());
        }
    }
    worst
}

pub fn align_embeddings(
    source: Embedding,
    target: Embedding,
    config: &AlignConfig,
) -> Result<AlignedEmbeddingPair> {
    let d = source.dim();
    if target.dim() != d {
        return Err(Error::invalid(format!(
            "dimension mismatch: source {d}, target {}",
            target.dim()
        )));
    }
    let seeds = identical_seed_pairs(&source, &target, config.seed_top_k);
    if seeds.len() < config.min_seeds {
        return Err(Error::invalid(format!(
            "only {} shared seed tokens, need {}",
            seeds.len(),
            config.min_seeds
        )));
    }
    let source_unit = preprocess(&source);
    let target_unit = preprocess(&target);
    let mut s_rows = Vec::with_capacity(seeds.len());
    let mut t_rows = Vec::with_capacity(seeds.len());
    for (s, t) in &seeds {
        let (Some(si), Some(ti)) = (source.index_of(s), target.index_of(t)) else {
            return Err(Error::NotFound { kind: "seed token", key: s.clone() });
        };
        s_rows.push(&source_unit[si * d..(si + 1) * d]);
        t_rows.push(&target_unit[ti * d..(ti + 1) * d]);
    }
    let map = procrustes(&s_rows, &t_rows, d)?;

    let mut mapped_source = Vec::with_capacity(source_unit.len());
    for row in source_unit.chunks_exact(d) {
        for i in 0..d {
            let m = &map[i * d..(i + 1) * d];
            let v: f64 = m.iter().zip(row).map(|(a, b)| a * *b as f64).sum();
            mapped_source.push(v as f32);
        }
    }

    let target_log_norm = match config.retrieval {
        Retrieval::NearestNeighbor => None,
        Retrieval::InvertedSoftmax { beta } => Some(
            target_unit
                .chunks_exact(d)
                .map(|t| {
                    let scores: Vec<f64> =
                        mapped_source.chunks_exact(d).map(|s| beta * dot(s, t) as f64).collect();
                    log_sum_exp(&scores)
                })
                .collect(),
        ),
    };

    Ok(AlignedEmbeddingPair {
        source,
        target,
        map,
        seed_dictionary: seeds,
        retrieval: config.retrieval,
        config: config.clone(),
        mapped_source,
        target_unit,
        target_log_norm,
    })
}

fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + libm::log(xs.iter().map(|x| libm::exp(x - max)).sum::<f64>())
}

impl AlignedEmbeddingPair {
    pub fn source(&self) -> &Embedding {
        &self.source
    }

    pub fn target(&self) -> &Embedding {
        &self.target
    }

    pub fn map(&self) -> &[f64] {
        &self.map
    }

    pub fn seed_dictionary(&self) -> &[(String, String)] {
        &self.seed_dictionary
    }

    pub fn retrieval(&self) -> Retrieval {
        self.retrieval
    }

    pub fn orthogonality_error(&self) -> f64 {
        orthogonality_error(&self.map, self.source.dim())
    }

    fn translate_index(&self, si: usize) -> usize {
        let d = self.source.dim();
        let query = &self.mapped_source[si * d..(si + 1) * d];
        let mut best = (f64::NEG_INFINITY, 0usize);
        for (ti, t) in self.target_unit.chunks_exact(d).enumerate() {
            let cos = dot(query, t) as f64;
            let score = match (self.retrieval, &self.target_log_norm) {
                (Retrieval::InvertedSoftmax { beta }, Some(norm)) => beta * cos - norm[ti],
                _ => cos,
            };
            if score > best.0 {
                best = (score, ti);
            }
        }
        best.1
    }

    /// Target token nearest to the mapped source vector of `word`.
    pub fn translate(&self, word: &str) -> Result<&str> {
        let si = self
            .source
            .index_of(word)
            .ok_or_else(|| Error::NotFound { kind: "source token", key: word.to_string() })?;
        Ok(&self.target.vocab()[self.translate_index(si)])
    }

    /// Tokens present in both vocabularies with at least `eval_min_count`
    /// occurrences on each side, the `eval_top` most frequent in the source.
    pub fn default_eval_vocab(&self) -> Vec<String> {
        let min = self.config.eval_min_count;
        self.source
            .vocab()
            .iter()
            .zip(self.source.counts())
            .filter(|(t, &c)| c >= min && self.target.count_of(t).is_some_and(|tc| tc >= min))
            .map(|(t, _)| t.clone())
            .take(self.config.eval_top)
            .collect()
    }

    fn check_eval(&self, eval_vocab: &[String]) -> Result<()> {
        if eval_vocab.is_empty() {
            return Err(Error::invalid("evaluation vocabulary is empty"));
        }
        if let Some(missing) = eval_vocab.iter().find(|w| self.source.index_of(w).is_none()) {
            return Err(Error::NotFound { kind: "source token", key: missing.clone() });
        }
        Ok(())
    }

    /// `(word, translation)` for every evaluation word, in input order.
    pub fn translations(&self, eval_vocab: &[String]) -> Result<Vec<(String, String)>> {
        self.check_eval(eval_vocab)?;
        eval_vocab
            .iter()
            .map(|w| Ok((w.clone(), self.translate(w)?.to_string())))
            .collect()
    }

    /// Fraction of `eval_vocab` that translates to itself.
    pub fn similarity(&self, eval_vocab: &[String]) -> Result<f64> {
        let pairs = self.translations(eval_vocab)?;
        let same = pairs.iter().filter(|(w, t)| w == t).count();
        Ok(same as f64 / pairs.len() as f64)
    }

    /// Words that translate to a different token, most frequent source word
    /// first.
    pub fn misaligned_pairs(&self, eval_vocab: &[String]) -> Result<Vec<(String, String)>> {
        let mut pairs: Vec<(String, String)> =
            self.translations(eval_vocab)?.into_iter().filter(|(w, t)| w != t).collect();
        pairs.sort_by(|a, b| {
            let ca = self.source.count_of(&a.0).unwrap_or(0);
            let cb = self.source.count_of(&b.0).unwrap_or(0);
            cb.cmp(&ca).then_with(|| a.0.cmp(&b.0))
        });
        Ok(pairs)
    }
}

/// Directional similarities between every ordered pair of labelled
/// embeddings; the diagonal is `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityMatrix {
    pub labels: Vec<String>,
    /// `values[source][target]`
    pub values: Vec<Vec<Option<f64>>>,
}

pub fn similarity_matrix(
    embeddings: &[(String, Embedding)],
    config: &AlignConfig,
) -> Result<SimilarityMatrix> {
    let n = embeddings.len();
    let mut values = alloc::vec![alloc::vec![None; n]; n];
    for (i, (_, src)) in embeddings.iter().enumerate() {
        for (j, (_, tgt)) in embeddings.iter().enumerate() {
            if i == j {
                continue;
            }
            let pair = align_embeddings(src.clone(), tgt.clone(), config)?;
            let eval = pair.default_eval_vocab();
            values[i][j] = Some(pair.similarity(&eval)?);
        }
    }
    Ok(SimilarityMatrix { labels: embeddings.iter().map(|(l, _)| l.clone()).collect(), values })
}

/// Eleven characters from the video-id alphabet `[A-Za-z0-9_-]`.
pub fn looks_like_video_id(token: &str) -> bool {
    token.len() == 11 && token.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'-' || b == b'_')
}

/// The `k` tokens closest by cosine to the mean vector of `query`, skipping
/// the query tokens and anything `filter` rejects.
pub fn nearest_neighbors_filtered<F>(
    emb: &Embedding,
    query: &[&str],
    k: usize,
    filter: F,
) -> Result<Vec<(String, f32)>>
where
    F: Fn(&str) -> bool,
{
    if query.is_empty() {
        return Err(Error::invalid("empty neighbor query"));
    }
    let d = emb.dim();
    let mut center = alloc::vec![0.0f32; d];
    let mut query_rows = BTreeSet::new();
    for q in query {
        let i = emb
            .index_of(q)
            .ok_or_else(|| Error::NotFound { kind: "query token", key: (*q).to_string() })?;
        query_rows.insert(i);
        for (c, x) in center.iter_mut().zip(emb.row(i)) {
            *c += x / query.len() as f32;
        }
    }
    let mut scored: Vec<(usize, f32)> = (0..emb.len())
        .filter(|i| !query_rows.contains(i) && filter(&emb.vocab()[*i]))
        .map(|i| (i, crate::embedding::cosine(&center, emb.row(i))))
        .collect();
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    Ok(scored.into_iter().take(k).map(|(i, s)| (emb.vocab()[i].clone(), s)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::TrainConfig;
    use alloc::vec;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_embedding(n: usize, d: usize, seed: u64) -> Embedding {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let vocab: Vec<String> = (0..n).map(|i| format!("w{i:04}")).collect();
        let counts: Vec<u64> = (0..n).map(|i| (10_000 - i) as u64).collect();
        let vectors = (0..n * d).map(|_| rng.random_range(-1.0f32..1.0)).collect();
        Embedding::from_parts(vocab, counts, vectors, d, TrainConfig { dim: d, ..Default::default() }).unwrap()
    }

    fn random_rotation(d: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = DMatrix::<f64>::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
        let q = m.qr().q();
        (0..d * d).map(|k| q[(k / d, k % d)]).collect()
    }

    fn frobenius_to(map: &[f64], d: usize, f: impl Fn(usize, usize) -> f64) -> f64 {
        let mut s = 0.0;
        for i in 0..d {
            for j in 0..d {
                let e = map[i * d + j] - f(i, j);
                s += e * e;
            }
        }
        libm::sqrt(s)
    }

    #[test]
    fn copy_aligns_to_identity() {
        let e = random_embedding(300, 20, 1);
        let pair = align_embeddings(e.clone(), e, &AlignConfig::default()).unwrap();
        let err = frobenius_to(pair.map(), 20, |i, j| if i == j { 1.0 } else { 0.0 });
        assert!(err <= 1e-3, "{err}");
        assert!(pair.orthogonality_error() <= 1e-6);
        let eval: Vec<String> = pair.source().vocab().to_vec();
        assert_eq!(pair.similarity(&eval).unwrap(), 1.0);
        assert!(pair.misaligned_pairs(&eval).unwrap().is_empty());
    }

    #[test]
    fn planted_rotation_is_recovered_as_its_transpose() {
        let d = 30;
        let e = random_embedding(400, d, 2);
        let r = random_rotation(d, 3);
        let rotated = e.rotated(&r).unwrap();
        let pair = align_embeddings(e, rotated, &AlignConfig::default()).unwrap();
        let err = frobenius_to(pair.map(), d, |i, j| r[j * d + i]);
        assert!(err <= 1e-3, "{err}");
        let eval: Vec<String> = pair.source().vocab().to_vec();
        assert_eq!(pair.similarity(&eval).unwrap(), 1.0);
    }

    #[test]
    fn swapped_labels_translate_to_each_other() {
        let e = random_embedding(200, 16, 4);
        let mut vocab = e.vocab().to_vec();
        vocab.swap(10, 11);
        let swapped =
            Embedding::from_parts(vocab, e.counts().to_vec(), e.vectors().to_vec(), 16, e.config().clone())
                .unwrap();
        let a = e.vocab()[10].clone();
        let b = e.vocab()[11].clone();
        for retrieval in [Retrieval::NearestNeighbor, Retrieval::InvertedSoftmax { beta: 10.0 }] {
            let cfg = AlignConfig { retrieval, ..Default::default() };
            let pair = align_embeddings(e.clone(), swapped.clone(), &cfg).unwrap();
            assert_eq!(pair.translate(&a).unwrap(), b);
            assert_eq!(pair.translate(&b).unwrap(), a);
            let eval: Vec<String> = pair.source().vocab().to_vec();
            let mis = pair.misaligned_pairs(&eval).unwrap();
            assert_eq!(mis, vec![(a.clone(), b.clone()), (b.clone(), a.clone())]);
            let sim = pair.similarity(&eval).unwrap();
            assert!((sim - (1.0 - 2.0 / eval.len() as f64)).abs() < 1e-12);
        }
    }

    #[test]
    fn errors() {
        let e = random_embedding(30, 8, 5);
        assert!(align_embeddings(e.clone(), e.clone(), &AlignConfig::default()).is_err());
        let cfg = AlignConfig { min_seeds: 10, ..Default::default() };
        let pair = align_embeddings(e.clone(), e, &cfg).unwrap();
        assert!(pair.translate("nope").is_err());
        assert!(pair.similarity(&[]).is_err());
        assert_eq!(pair.translate("w0003").unwrap(), pair.translate("w0003").unwrap());
    }

    #[test]
    fn neighbor_filtering() {
        let vocab = ["query", "twin", "abcdefghijk", "far", "abc_efg-ijk"];
        let vectors = vec![
            1.0, 0.0, 0.0, //
            0.9, 0.1, 0.0, //
            0.8, 0.3, 0.0, //
            0.0, 0.0, 1.0, //
            0.5, 0.5, 0.1,
        ];
        let e = Embedding::from_parts(
            vocab.iter().map(|s| s.to_string()).collect(),
            vec![5; 5],
            vectors,
            3,
            TrainConfig { dim: 3, ..Default::default() },
        )
        .unwrap();
        let top = nearest_neighbors_filtered(&e, &["query"], 1, |_| true).unwrap();
        assert_eq!(top[0].0, "twin");
        let ids = nearest_neighbors_filtered(&e, &["query"], 10, looks_like_video_id).unwrap();
        let names: Vec<&str> = ids.iter().map(|(t, _)| t.as_str()).collect();
        assert_eq!(names, ["abcdefghijk", "abc_efg-ijk"]);
        assert!(nearest_neighbors_filtered(&e, &["missing"], 1, |_| true).is_err());
        let all = nearest_neighbors_filtered(&e, &["query", "twin"], 100, |_| true).unwrap();
        assert_eq!(all.len(), 3);
    }
}
