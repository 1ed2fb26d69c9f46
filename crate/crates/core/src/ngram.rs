//! Phrase matching, the transcript stance ratio and n-gram frequency ranks.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::archive::{ChannelArchive, TimeWindow};
use crate::error::{Error, Result};
use crate::textnorm::{normalize, sample_equal_tokens, TokenizedCorpus};

const DEFAULT_STANCE_VARIANTS: &str = include_str!("../data/stance_variants.txt");
const DEFAULT_STEAL_VARIANTS: &str = include_str!("../data/stop_the_steal_variants.txt");

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum PatternElem {
    Literal(String),
    /// Absorbs between zero and `max` tokens.
    Wildcard { max: usize },
}

/// A token pattern such as `president elect *2 biden`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhrasePattern {
    elems: Vec<PatternElem>,
}

impl PhrasePattern {
    pub fn new(elems: Vec<PatternElem>) -> Result<Self> {
        if !elems.iter().any(|e| matches!(e, PatternElem::Literal(_))) {
            return Err(Error::invalid("phrase pattern needs at least one literal token"));
        }
        Ok(PhrasePattern { elems })
    }

    pub fn literal<I, S>(tokens: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self::new(tokens.into_iter().map(|t| PatternElem::Literal(t.into())).collect())
    }

    /// Parses whitespace-separated elements; `*N` is a wildcard of width
    /// `N`, anything else is normalized into literal tokens.
    pub fn parse(text: &str) -> Result<Self> {
        let mut elems = Vec::new();
        for word in text.split_whitespace() {
            if let Some(width) = word.strip_prefix('*') {
                let max = width
                    .parse()
                    .map_err(|_| Error::invalid(format!("bad wildcard `{word}` in `{text}`")))?;
                elems.push(PatternElem::Wildcard { max });
            } else {
                elems.extend(normalize(word).into_iter().map(PatternElem::Literal));
            }
        }
        Self::new(elems)
    }

    /// One pattern per line; blank lines and `#` comments are skipped.
    pub fn parse_list(text: &str) -> Result<Vec<Self>> {
        let patterns: Vec<Self> = text
            .lines()
            .map(|l| l.split('#').next().unwrap_or("").trim())
            .filter(|l| !l.is_empty())
            .map(Self::parse)
            .collect::<Result<_>>()?;
        if patterns.is_empty() {
            return Err(Error::invalid("pattern list is empty"));
        }
        Ok(patterns)
    }

    pub fn elems(&self) -> &[PatternElem] {
        &self.elems
    }

    pub fn is_literal(&self) -> bool {
        self.elems.iter().all(|e| matches!(e, PatternElem::Literal(_)))
    }
}

impl fmt::Display for PhrasePattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, e) in self.elems.iter().enumerate() {
            if i > 0 {
                f.write_str(" ")?;
            }
            match e {
                PatternElem::Literal(t) => f.write_str(t)?,
                PatternElem::Wildcard { max } => write!(f, "*{max}")?,
            }
        }
        Ok(())
    }
}

/// `president elect *2 biden`
pub fn default_stance_variants() -> Vec<PhrasePattern> {
    PhrasePattern::parse_list(DEFAULT_STANCE_VARIANTS).expect("bundled stance variants parse")
}

/// `stop the steal` and `stop the *1 steal`
pub fn default_steal_variants() -> Vec<PhrasePattern> {
    PhrasePattern::parse_list(DEFAULT_STEAL_VARIANTS).expect("bundled variants parse")
}

fn matches_at(doc: &[String], pos: usize, elems: &[PatternElem]) -> bool {
    match elems.split_first() {
        None => true,
        Some((PatternElem::Literal(t), rest)) => {
            pos < doc.len() && doc[pos] == *t && matches_at(doc, pos + 1, rest)
        }
        Some((PatternElem::Wildcard { max }, rest)) => {
            let widest = (*max).min(doc.len() - pos);
            (0..=widest).any(|w| matches_at(doc, pos + w, rest))
        }
    }
}

/// True iff some contiguous slice of `doc` matches `pattern`.
pub fn contains_phrase(doc: &[String], pattern: &PhrasePattern) -> bool {
    (0..=doc.len()).any(|start| matches_at(doc, start, &pattern.elems))
}

pub fn contains_any(doc: &[String], patterns: &[PhrasePattern]) -> bool {
    patterns.iter().any(|p| contains_phrase(doc, p))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StanceReport {
    pub channel: String,
    pub window: String,
    /// Videos whose transcript matches a president-elect variant.
    pub numerator: usize,
    /// Videos whose transcript contains the token `biden`.
    pub denominator: usize,
    pub value: f64,
}

/// Share of a channel's Biden-mentioning videos (by transcript) that also
/// refer to him as president-elect. Each video counts at most once.
pub fn stance_measure(
    archive: &ChannelArchive,
    channel: &str,
    window: &TimeWindow,
    variants: &[PhrasePattern],
) -> Result<StanceReport> {
    let slice = archive.slice_window(channel, window)?;
    let (mut numerator, mut denominator) = (0usize, 0usize);
    for video in slice.videos {
        let Some(transcript) = &video.transcript else { continue };
        let tokens = normalize(&transcript.text);
        if !tokens.iter().any(|t| t == "biden") {
            continue;
        }
        denominator += 1;
        if contains_any(&tokens, variants) {
            numerator += 1;
        }
    }
    if denominator == 0 {
        return Err(Error::undefined(format!(
            "channel `{channel}` has no transcript mentioning biden in window `{}`",
            window.label
        )));
    }
    Ok(StanceReport {
        channel: channel.to_string(),
        window: window.label.clone(),
        numerator,
        denominator,
        value: numerator as f64 / denominator as f64,
    })
}

/// Number of documents matching any of `patterns`.
pub fn phrase_doc_frequency(corpus: &TokenizedCorpus, patterns: &[PhrasePattern]) -> usize {
    corpus.docs().iter().filter(|d| contains_any(&d.tokens, patterns)).count()
}

/// Every length-`n` n-gram of `corpus` with its frequency, in rank order:
/// descending frequency, ties in lexicographic token order. N-grams never
/// span two documents.
pub fn rank_table(corpus: &TokenizedCorpus, n: usize) -> Vec<(Vec<String>, u64)> {
    let counts = count_ngrams(corpus, n);
    let mut table: Vec<(Vec<String>, u64)> =
        counts.into_iter().map(|(k, v)| (k.to_vec(), v)).collect();
    // BTreeMap iteration is already lexicographic, so a stable sort on
    // frequency alone gives the tie order.
    table.sort_by(|a, b| b.1.cmp(&a.1));
    table
}

fn count_ngrams(corpus: &TokenizedCorpus, n: usize) -> BTreeMap<&[String], u64> {
    let mut counts: BTreeMap<&[String], u64> = BTreeMap::new();
    if n == 0 {
        return counts;
    }
    for doc in corpus.docs() {
        for gram in doc.tokens.windows(n) {
            *counts.entry(gram).or_insert(0) += 1;
        }
    }
    counts
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusRank {
    pub label: String,
    /// 1-based rank; `None` when the n-gram never occurs.
    pub rank: Option<usize>,
    pub frequency: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankReport {
    pub ngram: Vec<String>,
    pub per_corpus: Vec<CorpusRank>,
    pub budget: usize,
}

/// Rank of `ngram` in each corpus after cutting all corpora down to one
/// common token budget.
pub fn ngram_rank(ngram: &[String], corpora: &[TokenizedCorpus], seed: u64) -> Result<RankReport> {
    let n = ngram.len();
    if n == 0 {
        return Err(Error::invalid("n-gram is empty"));
    }
    if corpora.is_empty() {
        return Err(Error::invalid("no corpora to rank against"));
    }
    let longest = corpora
        .iter()
        .flat_map(|c| c.docs().iter().map(|d| d.tokens.len()))
        .max()
        .unwrap_or(0);
    if longest < n {
        return Err(Error::invalid(format!(
            "{n}-gram is longer than every document (longest has {longest} tokens)"
        )));
    }

    let sampled = if corpora.len() == 1 {
        corpora.to_vec()
    } else {
        sample_equal_tokens(corpora, seed)?
    };
    let budget = sampled[0].token_count();

    let per_corpus = sampled
        .iter()
        .map(|corpus| {
            let counts = count_ngrams(corpus, n);
            let frequency = counts.get(ngram).copied().unwrap_or(0);
            let rank = (frequency > 0).then(|| {
                1 + counts
                    .iter()
                    .filter(|(g, &f)| f > frequency || (f == frequency && **g < ngram))
                    .count()
            });
            CorpusRank { label: corpus.provenance().channel.clone(), rank, frequency }
        })
        .collect();

    Ok(RankReport { ngram: ngram.to_vec(), per_corpus, budget })
}
