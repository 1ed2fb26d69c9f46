//! Text preprocessing shared by every lexical analysis.
//!
//! Normalization runs in a fixed order: characters outside printable ASCII
//! are deleted (emoji, accented letters, curly quotes), every remaining
//! non-alphanumeric character becomes a space, the text is lowercased and
//! split on whitespace. One input document always yields one token sequence.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::archive::{ChannelArchive, TimeWindow};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct NormalizeOptions {
    /// Keep `-` and `_` inside tokens so 11-character video ids survive.
    pub keep_id_punct: bool,
}

pub fn normalize(text: &str) -> Vec<String> {
    normalize_with(text, NormalizeOptions::default())
}

pub fn normalize_with(text: &str, opts: NormalizeOptions) -> Vec<String> {
    let mut cleaned = String::with_capacity(text.len());
    for ch in text.chars() {
        if ch.is_ascii_whitespace() {
            cleaned.push(' ');
        } else if !(' '..='~').contains(&ch) {
            // non-ascii and control characters vanish without splitting
        } else if ch.is_ascii_alphanumeric() || (opts.keep_id_punct && (ch == '-' || ch == '_')) {
            cleaned.push(ch.to_ascii_lowercase());
        } else {
            cleaned.push(' ');
        }
    }
    cleaned.split_ascii_whitespace().map(ToString::to_string).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TextSource {
    Comments,
    Transcripts,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub channel: String,
    pub window: String,
    pub source: TextSource,
}

/// One comment or one transcript after normalization.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub tokens: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenizedCorpus {
    docs: Vec<Document>,
    provenance: Provenance,
    token_count: usize,
    rng_seed: u64,
}

impl TokenizedCorpus {
    pub fn new(docs: Vec<Document>, provenance: Provenance) -> Self {
        let token_count = docs.iter().map(|d| d.tokens.len()).sum();
        TokenizedCorpus { docs, provenance, token_count, rng_seed: 0 }
    }

    /// Normalizes `(id, raw text)` pairs into a corpus.
    pub fn from_texts<'a, I>(texts: I, provenance: Provenance, opts: NormalizeOptions) -> Self
    where
        I: IntoIterator<Item = (&'a str, &'a str)>,
    {
        let docs = texts
            .into_iter()
            .map(|(id, text)| Document { id: id.to_string(), tokens: normalize_with(text, opts) })
            .collect();
        Self::new(docs, provenance)
    }

    pub fn docs(&self) -> &[Document] {
        &self.docs
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn token_count(&self) -> usize {
        self.token_count
    }

    /// Seed of the sampling step that produced this corpus, 0 if unsampled.
    pub fn rng_seed(&self) -> u64 {
        self.rng_seed
    }

    pub fn is_empty(&self) -> bool {
        self.token_count == 0
    }

    /// One space-joined document per line, newline-terminated.
    pub fn to_lines(&self) -> String {
        let mut out = String::with_capacity(self.token_count * 6);
        for d in &self.docs {
            for (i, t) in d.tokens.iter().enumerate() {
                if i > 0 {
                    out.push(' ');
                }
                out.push_str(t);
            }
            out.push('\n');
        }
        out
    }
}

/// Negation and intensity words whose presence disqualifies a document.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ValenceShifterList {
    terms: BTreeSet<String>,
}

const DEFAULT_SHIFTERS: &str = include_str!("../data/valence_shifters.txt");

impl ValenceShifterList {
    /// Parses one token per line; blank lines and `#` comments are ignored.
    pub fn parse(text: &str) -> Result<Self> {
        let mut terms = BTreeSet::new();
        for (no, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let toks = normalize(line);
            if toks.len() != 1 {
                return Err(Error::invalid(format!(
                    "valence shifter on line {} is not a single token: `{line}`",
                    no + 1
                )));
            }
            terms.extend(toks);
        }
        Self::from_terms(terms)
    }

    pub fn from_terms<I, S>(terms: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let terms: BTreeSet<String> = terms.into_iter().map(Into::into).collect();
        if terms.is_empty() {
            return Err(Error::invalid("valence shifter list is empty"));
        }
        Ok(ValenceShifterList { terms })
    }

    pub fn contains(&self, token: &str) -> bool {
        self.terms.contains(token)
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.terms.iter().map(String::as_str)
    }
}

impl Default for ValenceShifterList {
    fn default() -> Self {
        Self::parse(DEFAULT_SHIFTERS).expect("bundled valence shifter list is valid")
    }
}

/// Drops every document that contains at least one shifter token.
pub fn drop_valence_shifted(
    corpus: &TokenizedCorpus,
    shifters: &ValenceShifterList,
) -> Result<TokenizedCorpus> {
    if shifters.is_empty() {
        return Err(Error::invalid("valence shifter list is empty"));
    }
    let docs = corpus
        .docs
        .iter()
        .filter(|d| !d.tokens.iter().any(|t| shifters.contains(t)))
        .cloned()
        .collect();
    let mut out = TokenizedCorpus::new(docs, corpus.provenance.clone());
    out.rng_seed = corpus.rng_seed;
    Ok(out)
}

fn corpus_seed(seed: u64, index: usize) -> u64 {
    // splitmix64 finalizer so neighbouring corpora get unrelated streams
    let mut z = seed ^ (index as u64).wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Reduces every corpus to the smallest input token count.
///
/// Documents are shuffled with a seeded generator and taken whole while they
/// fit the budget; the first document that would overflow it is truncated to
/// the remaining tokens and sampling stops.
pub fn sample_equal_tokens(corpora: &[TokenizedCorpus], seed: u64) -> Result<Vec<TokenizedCorpus>> {
    if corpora.len() < 2 {
        return Err(Error::invalid("equal-token sampling needs at least two corpora"));
    }
    if let Some(empty) = corpora.iter().find(|c| c.is_empty()) {
        return Err(Error::invalid(format!(
            "corpus {}/{} has no tokens",
            empty.provenance.channel, empty.provenance.window
        )));
    }
    let budget = corpora.iter().map(|c| c.token_count).min().unwrap_or(0);

    let mut out = Vec::with_capacity(corpora.len());
    for (i, corpus) in corpora.iter().enumerate() {
        let sub_seed = corpus_seed(seed, i);
        let mut order: Vec<usize> = (0..corpus.docs.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(sub_seed));

        let mut docs = Vec::new();
        let mut used = 0usize;
        for idx in order {
            if used == budget {
                break;
            }
            let doc = &corpus.docs[idx];
            if used + doc.tokens.len() <= budget {
                used += doc.tokens.len();
                docs.push(doc.clone());
            } else {
                let keep = budget - used;
                docs.push(Document { id: doc.id.clone(), tokens: doc.tokens[..keep].to_vec() });
                used = budget;
            }
        }
        let mut sampled = TokenizedCorpus::new(docs, corpus.provenance.clone());
        sampled.rng_seed = seed;
        debug_assert_eq!(sampled.token_count, budget);
        out.push(sampled);
    }
    Ok(out)
}

/// The comments on, or transcripts of, a channel's videos uploaded in
/// `window`, one document each, in archive order.
pub fn channel_corpus(
    archive: &ChannelArchive,
    channel: &str,
    window: &TimeWindow,
    source: TextSource,
    opts: NormalizeOptions,
) -> Result<TokenizedCorpus> {
    let slice = archive.slice_window(channel, window)?;
    let provenance = Provenance { channel: channel.to_string(), window: window.label.clone(), source };
    Ok(match source {
        TextSource::Comments => TokenizedCorpus::from_texts(
            slice.comments.iter().map(|c| (c.comment_id.as_str(), c.text.as_str())),
            provenance,
            opts,
        ),
        TextSource::Transcripts => TokenizedCorpus::from_texts(
            slice
                .videos
                .iter()
                .filter_map(|v| v.transcript.as_ref())
                .map(|t| (t.video_id.as_str(), t.text.as_str())),
            provenance,
            opts,
        ),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use proptest::prelude::*;

    fn prov(ch: &str) -> Provenance {
        Provenance { channel: ch.into(), window: "after".into(), source: TextSource::Comments }
    }

    fn corpus(ch: &str, docs: &[&[&str]]) -> TokenizedCorpus {
        let docs = docs
            .iter()
            .enumerate()
            .map(|(i, d)| Document {
                id: format!("{ch}{i}"),
                tokens: d.iter().map(|s| s.to_string()).collect(),
            })
            .collect();
        TokenizedCorpus::new(docs, prov(ch))
    }

    #[test]
    fn normalize_examples() {
        assert_eq!(normalize("Stop The STEAL!!"), ["stop", "the", "steal"]);
        assert_eq!(normalize("Biden2020 🇺🇸 wins"), ["biden2020", "wins"]);
        assert_eq!(normalize("stop-the-steal"), ["stop", "the", "steal"]);
        assert_eq!(normalize("don’t"), ["dont"]);
        assert_eq!(normalize("line one\nline\ttwo"), ["line", "one", "line", "two"]);
        assert!(normalize("").is_empty());
        assert!(normalize("🔥🔥 !!").is_empty());
    }

    #[test]
    fn id_punctuation_flag() {
        let opts = NormalizeOptions { keep_id_punct: true };
        assert_eq!(normalize_with("watch dQw4w9WgX-Q now", opts), ["watch", "dqw4w9wgx-q", "now"]);
        assert_eq!(normalize("watch dQw4w9WgX-Q"), ["watch", "dqw4w9wgx", "q"]);
    }

    #[test]
    fn shifter_filter() {
        let c = corpus("x", &[&["biden", "won"], &["trump", "never", "lost"]]);
        let s = ValenceShifterList::from_terms(["never"]).unwrap();
        let out = drop_valence_shifted(&c, &s).unwrap();
        assert_eq!(out.docs().len(), 1);
        assert_eq!(out.docs()[0].tokens, ["biden", "won"]);
        assert_eq!(out.provenance(), c.provenance());

        let clean = corpus("x", &[&["a", "b"], &["c"]]);
        assert_eq!(drop_valence_shifted(&clean, &s).unwrap(), clean);
    }

    #[test]
    fn shifter_list_parsing() {
        assert!(ValenceShifterList::parse("# only a comment\n\n").is_err());
        assert!(ValenceShifterList::parse("two words\n").is_err());
        let l = ValenceShifterList::parse("Never # trailing\nnot\n").unwrap();
        assert!(l.contains("never") && l.contains("not"));
        let bundled = ValenceShifterList::default();
        assert!(bundled.len() >= 40);
        assert!(!bundled.contains("won"));
    }

    #[test]
    fn equal_tokens_examples() {
        let a = corpus("a", &[&["x"; 10][..]; 100]);
        let b = corpus("b", &[&["y"; 10][..]; 100]);
        let out = sample_equal_tokens(&[a, b], 7).unwrap();
        assert!(out.iter().all(|c| c.token_count() == 1000));

        let small = corpus("a", &[&["x"; 10][..]; 10]);
        let big = corpus("b", &[&["y"; 25][..]; 10]);
        let out = sample_equal_tokens(&[small.clone(), big.clone()], 1).unwrap();
        assert_eq!(out[0].token_count(), 100);
        assert_eq!(out[1].token_count(), 100);
        // 4 whole docs of 25 fit exactly
        assert_eq!(out[1].docs().len(), 4);

        let again = sample_equal_tokens(&[small.clone(), big], 1).unwrap();
        assert_eq!(out, again);

        let empty = corpus("e", &[]);
        assert!(sample_equal_tokens(&[small.clone(), empty], 1).is_err());
        assert!(sample_equal_tokens(&[small], 1).is_err());
    }

    #[test]
    fn truncates_the_overflowing_doc() {
        let a = corpus("a", &[&["x"; 7]]);
        let b = corpus("b", &[&["y"; 5], &["z"; 5]]);
        let out = sample_equal_tokens(&[a, b], 3).unwrap();
        assert_eq!(out[1].token_count(), 7);
        let lens: Vec<usize> = out[1].docs().iter().map(|d| d.tokens.len()).collect();
        assert_eq!(lens, vec![5, 2]);
    }

    proptest! {
        #[test]
        fn normalize_is_idempotent(s in "\\PC{0,60}") {
            let once = normalize(&s);
            let twice = normalize(&once.join(" "));
            prop_assert_eq!(once, twice);
        }

        #[test]
        fn tokens_are_lowercase_alphanumeric(s in "\\PC{0,60}") {
            for t in normalize(&s) {
                prop_assert!(!t.is_empty());
                prop_assert!(t.chars().all(|c| c.is_ascii_digit() || c.is_ascii_lowercase()));
            }
        }

        #[test]
        fn shifter_filter_keeps_a_subset(docs in proptest::collection::vec(
            proptest::collection::vec("[a-e]", 0..6), 0..20)) {
            let docs: Vec<Document> = docs.into_iter().enumerate()
                .map(|(i, t)| Document { id: format!("{i}"), tokens: t }).collect();
            let c = TokenizedCorpus::new(docs, prov("p"));
            let s = ValenceShifterList::from_terms(["a"]).unwrap();
            let out = drop_valence_shifted(&c, &s).unwrap();
            for d in out.docs() {
                prop_assert!(c.docs().contains(d));
                prop_assert!(!d.tokens.iter().any(|t| t == "a"));
            }
        }
    }
}
