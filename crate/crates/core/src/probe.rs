//! Cloze and entailment probes against a masked-LM / NLI scorer.
//!
//! The core never loads model weights. Everything goes through [`Scorer`],
//! which the std crate implements over HTTP; [`StubScorer`] answers from a
//! fixed table for tests.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::archive::{ChannelArchive, Comment, TimeWindow};
use crate::error::{Error, Result};

pub const MASK: &str = "[MASK]";

/// Tolerance on probability sums returned by a scorer.
pub const PROB_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ScorerError {
    #[error("scorer transport: {0}")]
    Transport(String),
    #[error("scorer protocol: {0}")]
    Protocol(String),
    #[error("scorer has no model `{0}`")]
    UnknownModel(String),
    #[error("scorer has no answer for {0}")]
    NoAnswer(String),
}

/// A template with exactly one mask slot.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "ClozeProbeRepr", into = "ClozeProbeRepr")]
pub struct ClozeProbe {
    label: String,
    template: String,
}

#[derive(Serialize, Deserialize)]
struct ClozeProbeRepr {
    label: String,
    template: String,
}

impl TryFrom<ClozeProbeRepr> for ClozeProbe {
    type Error = Error;
    fn try_from(r: ClozeProbeRepr) -> Result<Self> {
        ClozeProbe::new(r.label, r.template)
    }
}

impl From<ClozeProbe> for ClozeProbeRepr {
    fn from(p: ClozeProbe) -> Self {
        ClozeProbeRepr { label: p.label, template: p.template }
    }
}

impl ClozeProbe {
    pub fn new(label: impl Into<String>, template: impl Into<String>) -> Result<Self> {
        let template = template.into();
        let n = template.matches(MASK).count();
        if n != 1 {
            return Err(Error::invalid(format!(
                "cloze template `{template}` has {n} mask slots, expected exactly one"
            )));
        }
        if template.replacen(MASK, "", 1).trim().is_empty() {
            return Err(Error::invalid("cloze template has no context around the mask"));
        }
        Ok(ClozeProbe { label: label.into(), template })
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn template(&self) -> &str {
        &self.template
    }

    pub fn biggest_problem() -> Self {
        ClozeProbe::new("biggest-problem", "The biggest problem of America is [MASK].").unwrap()
    }

    pub fn trump_election() -> Self {
        ClozeProbe::new("cloze-trump", "Trump has [MASK] the 2020 election.").unwrap()
    }

    pub fn biden_election() -> Self {
        ClozeProbe::new("cloze-biden", "Biden has [MASK] the 2020 election.").unwrap()
    }

    /// Built-in probes by label.
    pub fn named(label: &str) -> Option<Self> {
        match label {
            "biggest-problem" => Some(Self::biggest_problem()),
            "cloze-trump" => Some(Self::trump_election()),
            "cloze-biden" => Some(Self::biden_election()),
            _ => None,
        }
    }
}

/// The token scored by the election calibration.
pub const ELECTION_TARGET: &str = "won";
/// Reported next to the calibrated score, never scored.
pub const ELECTION_DIAGNOSTIC_TARGETS: [&str; 3] = ["won", "stolen", "lost"];

pub const HYPOTHESIS_TRUMP: &str = "I prefer Trump as my president.";
pub const HYPOTHESIS_BIDEN: &str = "I prefer Biden as my president.";

/// `h1` / `h2` or literal hypothesis text.
pub fn hypothesis(name: &str) -> &str {
    match name {
        "h1" => HYPOTHESIS_TRUMP,
        "h2" => HYPOTHESIS_BIDEN,
        other => other,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenProb {
    pub token: String,
    pub prob: f64,
}

/// Token probabilities at the mask, most probable first.
///
/// A scorer response lists the `top_k` tokens plus any requested targets;
/// because the list is sorted, its first `k` entries are the top `k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskDistribution {
    tokens: Vec<TokenProb>,
}

impl MaskDistribution {
    pub fn new(mut tokens: Vec<TokenProb>) -> Result<Self, ScorerError> {
        let mut seen = BTreeMap::new();
        for t in &tokens {
            if !(0.0..=1.0).contains(&t.prob) {
                return Err(ScorerError::Protocol(format!("probability {} for `{}`", t.prob, t.token)));
            }
            if seen.insert(t.token.as_str(), ()).is_some() {
                return Err(ScorerError::Protocol(format!("token `{}` listed twice", t.token)));
            }
        }
        let total: f64 = tokens.iter().map(|t| t.prob).sum();
        if total > 1.0 + PROB_TOLERANCE {
            return Err(ScorerError::Protocol(format!("mask probabilities sum to {total}")));
        }
        tokens.sort_by(|a, b| b.prob.total_cmp(&a.prob).then_with(|| a.token.cmp(&b.token)));
        Ok(MaskDistribution { tokens })
    }

    pub fn tokens(&self) -> &[TokenProb] {
        &self.tokens
    }

    pub fn top(&self, k: usize) -> &[TokenProb] {
        &self.tokens[..k.min(self.tokens.len())]
    }

    pub fn prob(&self, token: &str) -> Option<f64> {
        self.tokens.iter().find(|t| t.token == token).map(|t| t.prob)
    }

    pub fn truncated(&self, k: usize) -> Self {
        MaskDistribution { tokens: self.top(k).to_vec() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NliVerdict {
    pub entailment: f64,
    pub contradiction: f64,
    pub neutral: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NliLabel {
    Entailment,
    Contradiction,
    Neutral,
}

impl NliVerdict {
    pub fn new(entailment: f64, contradiction: f64, neutral: f64) -> Result<Self, ScorerError> {
        NliVerdict { entailment, contradiction, neutral }.checked()
    }

    pub fn checked(self) -> Result<Self, ScorerError> {
        let ps = [self.entailment, self.contradiction, self.neutral];
        if ps.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(ScorerError::Protocol(format!("NLI probability out of range: {ps:?}")));
        }
        let total: f64 = ps.iter().sum();
        if (total - 1.0).abs() > PROB_TOLERANCE {
            return Err(ScorerError::Protocol(format!("NLI probabilities sum to {total}")));
        }
        Ok(self)
    }

    /// Ties resolve in the order entailment, contradiction, neutral.
    pub fn argmax(&self) -> NliLabel {
        if self.entailment >= self.contradiction && self.entailment >= self.neutral {
            NliLabel::Entailment
        } else if self.contradiction >= self.neutral {
            NliLabel::Contradiction
        } else {
            NliLabel::Neutral
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FillMaskRequest {
    pub model_id: String,
    pub text: String,
    pub top_k: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_tokens: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FillMaskResponse {
    pub tokens: Vec<TokenProb>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NliRequest {
    pub model_id: String,
    pub premise: String,
    pub hypothesis: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelsResponse {
    pub models: Vec<String>,
}

/// Transport-level access to fine-tuned masked-LM and NLI models.
pub trait Scorer {
    fn models(&self) -> Result<Vec<String>, ScorerError>;
    fn fill_mask(&self, request: &FillMaskRequest) -> Result<FillMaskResponse, ScorerError>;
    fn nli(&self, request: &NliRequest) -> Result<NliVerdict, ScorerError>;
}

impl<S: Scorer + ?Sized> Scorer for &S {
    fn models(&self) -> Result<Vec<String>, ScorerError> {
        (**self).models()
    }
    fn fill_mask(&self, request: &FillMaskRequest) -> Result<FillMaskResponse, ScorerError> {
        (**self).fill_mask(request)
    }
    fn nli(&self, request: &NliRequest) -> Result<NliVerdict, ScorerError> {
        (**self).nli(request)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FillMaskEntry {
    /// `None` answers for every model.
    #[serde(default)]
    pub model_id: Option<String>,
    pub text: String,
    pub tokens: Vec<TokenProb>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NliEntry {
    #[serde(default)]
    pub model_id: Option<String>,
    pub premise: String,
    #[serde(default)]
    pub hypothesis: Option<String>,
    pub verdict: NliVerdict,
}

/// Verdict for any premise containing `keyword` (case-insensitive).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NliKeywordRule {
    #[serde(default)]
    pub model_id: Option<String>,
    #[serde(default)]
    pub hypothesis: Option<String>,
    pub keyword: String,
    pub verdict: NliVerdict,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StubTable {
    /// Known model ids; empty accepts any.
    pub models: Vec<String>,
    pub fill_mask: Vec<FillMaskEntry>,
    pub nli: Vec<NliEntry>,
    pub nli_rules: Vec<NliKeywordRule>,
    pub default_verdict: Option<NliVerdict>,
}

/// Deterministic table-backed scorer.
///
/// Fill-mask answers with the table row for `(model, text)`: its `top_k`
/// most probable tokens plus requested targets, a target missing from the
/// row scoring 0. NLI answers from exact entries, then keyword rules in
/// order, then the default verdict. Model-specific rows win over wildcard
/// rows.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StubScorer {
    table: StubTable,
}

fn model_matches(pattern: &Option<String>, model: &str) -> bool {
    pattern.as_deref().is_none_or(|m| m == model)
}

fn pick<'a, T>(rows: impl Iterator<Item = &'a T> + Clone, model: impl Fn(&T) -> &Option<String>) -> Option<&'a T>
where
    T: 'a,
{
    rows.clone()
        .find(|r| model(r).is_some())
        .or_else(|| rows.into_iter().find(|r| model(r).is_none()))
}

impl StubScorer {
    pub fn new(table: StubTable) -> Result<Self, ScorerError> {
        for e in &table.fill_mask {
            MaskDistribution::new(e.tokens.clone())?;
        }
        for v in table
            .nli
            .iter()
            .map(|e| e.verdict)
            .chain(table.nli_rules.iter().map(|r| r.verdict))
            .chain(table.default_verdict)
        {
            v.checked()?;
        }
        Ok(StubScorer { table })
    }

    pub fn table(&self) -> &StubTable {
        &self.table
    }

    fn check_model(&self, model: &str) -> Result<(), ScorerError> {
        if self.table.models.is_empty() || self.table.models.iter().any(|m| m == model) {
            Ok(())
        } else {
            Err(ScorerError::UnknownModel(model.to_string()))
        }
    }
}

impl Scorer for StubScorer {
    fn models(&self) -> Result<Vec<String>, ScorerError> {
        Ok(self.table.models.clone())
    }

    fn fill_mask(&self, req: &FillMaskRequest) -> Result<FillMaskResponse, ScorerError> {
        self.check_model(&req.model_id)?;
        if req.text.matches(MASK).count() != 1 {
            return Err(ScorerError::Protocol("text must contain exactly one mask".into()));
        }
        let rows = self
            .table
            .fill_mask
            .iter()
            .filter(|e| e.text.trim() == req.text.trim() && model_matches(&e.model_id, &req.model_id));
        let entry = pick(rows, |e| &e.model_id)
            .ok_or_else(|| ScorerError::NoAnswer(format!("fill-mask `{}` on `{}`", req.text, req.model_id)))?;
        let dist = MaskDistribution::new(entry.tokens.clone())?;
        let mut tokens = dist.top(req.top_k).to_vec();
        for target in req.target_tokens.iter().flatten() {
            if tokens.iter().all(|t| &t.token != target) {
                let prob = dist.prob(target).unwrap_or(0.0);
                tokens.push(TokenProb { token: target.clone(), prob });
            }
        }
        Ok(FillMaskResponse { tokens })
    }

    fn nli(&self, req: &NliRequest) -> Result<NliVerdict, ScorerError> {
        self.check_model(&req.model_id)?;
        let hyp_matches = |h: &Option<String>| h.as_deref().is_none_or(|h| h == req.hypothesis);
        let exact = self
            .table
            .nli
            .iter()
            .filter(|e| e.premise == req.premise && hyp_matches(&e.hypothesis) && model_matches(&e.model_id, &req.model_id));
        if let Some(e) = pick(exact, |e| &e.model_id) {
            return Ok(e.verdict);
        }
        let premise = req.premise.to_lowercase();
        let rules = self.table.nli_rules.iter().filter(|r| {
            hyp_matches(&r.hypothesis)
                && model_matches(&r.model_id, &req.model_id)
                && premise.contains(&r.keyword.to_lowercase())
        });
        if let Some(r) = pick(rules, |r| &r.model_id) {
            return Ok(r.verdict);
        }
        self.table
            .default_verdict
            .ok_or_else(|| ScorerError::NoAnswer(format!("NLI premise `{}`", req.premise)))
    }
}

/// Top `k` completions of `probe` under `model_id`.
pub fn run_cloze<S: Scorer + ?Sized>(
    scorer: &S,
    model_id: &str,
    probe: &ClozeProbe,
    k: usize,
) -> Result<MaskDistribution> {
    if k == 0 {
        return Err(Error::invalid("cloze needs k >= 1"));
    }
    let req = FillMaskRequest { model_id: model_id.to_string(), text: probe.template.clone(), top_k: k, target_tokens: None };
    let dist = MaskDistribution::new(scorer.fill_mask(&req)?.tokens)?;
    Ok(dist.truncated(k))
}

/// Probability of `target` at the mask of `probe`.
pub fn cloze_probability<S: Scorer + ?Sized>(
    scorer: &S,
    model_id: &str,
    probe: &ClozeProbe,
    target: &str,
) -> Result<f64> {
    let req = FillMaskRequest {
        model_id: model_id.to_string(),
        text: probe.template.clone(),
        top_k: 1,
        target_tokens: Some(alloc::vec![target.to_string()]),
    };
    let dist = MaskDistribution::new(scorer.fill_mask(&req)?.tokens)?;
    dist.prob(target).ok_or_else(|| {
        ScorerError::Protocol(format!("response to `{}` omits target `{target}`", probe.template)).into()
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ElectionScore {
    pub trump: f64,
    pub biden: f64,
}

/// Calibrated pair from the two raw `won` probabilities. The components
/// sum to exactly 1.
pub fn election_score_from(p_trump: f64, p_biden: f64) -> Result<ElectionScore> {
    if !(p_trump.is_finite() && p_biden.is_finite()) || p_trump < 0.0 || p_biden < 0.0 {
        return Err(Error::invalid(format!("raw probabilities ({p_trump}, {p_biden})")));
    }
    let total = p_trump + p_biden;
    if total <= 0.0 {
        return Err(Error::undefined("degenerate probe: both `won` probabilities are zero"));
    }
    // the smaller share is divided; the larger is its complement, so the sum is exact
    Ok(if p_trump <= p_biden {
        let trump = p_trump / total;
        ElectionScore { trump, biden: 1.0 - trump }
    } else {
        let biden = p_biden / total;
        ElectionScore { trump: 1.0 - biden, biden }
    })
}

pub fn election_score<S: Scorer + ?Sized>(scorer: &S, model_id: &str) -> Result<ElectionScore> {
    let p_t = cloze_probability(scorer, model_id, &ClozeProbe::trump_election(), ELECTION_TARGET)?;
    let p_b = cloze_probability(scorer, model_id, &ClozeProbe::biden_election(), ELECTION_TARGET)?;
    election_score_from(p_t, p_b)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElectionDiagnostic {
    pub target: String,
    pub p_trump: f64,
    pub p_biden: f64,
}

/// Raw probabilities of the diagnostic targets under both election probes.
pub fn election_diagnostics<S: Scorer + ?Sized>(scorer: &S, model_id: &str) -> Result<Vec<ElectionDiagnostic>> {
    ELECTION_DIAGNOSTIC_TARGETS
        .iter()
        .map(|&target| {
            Ok(ElectionDiagnostic {
                target: target.to_string(),
                p_trump: cloze_probability(scorer, model_id, &ClozeProbe::trump_election(), target)?,
                p_biden: cloze_probability(scorer, model_id, &ClozeProbe::biden_election(), target)?,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "rule")]
pub enum EntailmentRule {
    /// Entailment is the most probable label.
    #[default]
    Argmax,
    /// Entailment probability at least `tau`.
    Threshold { tau: f64 },
}

impl EntailmentRule {
    pub fn entails(&self, v: &NliVerdict) -> bool {
        match *self {
            EntailmentRule::Argmax => v.argmax() == NliLabel::Entailment,
            EntailmentRule::Threshold { tau } => v.entailment >= tau,
        }
    }
}

/// Up to `n` comments on the channel's videos uploaded in `window`, drawn
/// uniformly without replacement and returned in comment-id order.
pub fn sample_premises<'a>(
    archive: &'a ChannelArchive,
    channel: &str,
    window: &TimeWindow,
    n: usize,
    seed: u64,
) -> Result<Vec<&'a Comment>> {
    let mut pool = archive.slice_window(channel, window)?.comments;
    pool.sort_by(|a, b| a.comment_id.cmp(&b.comment_id));
    if pool.len() <= n {
        if pool.len() < n {
            log::warn!("channel `{channel}` has {} comments in `{}`, fewer than {n}; using all", pool.len(), window.label);
        }
        return Ok(pool);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = rand::seq::index::sample(&mut rng, pool.len(), n).into_vec();
    picked.sort_unstable();
    Ok(picked.into_iter().map(|i| pool[i]).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntailmentReport {
    pub model_id: String,
    pub hypothesis: String,
    pub n_premises: usize,
    pub n_entailed: usize,
    pub fraction: f64,
}

impl EntailmentReport {
    pub fn from_verdicts(
        model_id: &str,
        hypothesis: &str,
        verdicts: &[NliVerdict],
        rule: EntailmentRule,
    ) -> Result<Self> {
        if verdicts.is_empty() {
            return Err(Error::undefined("no premises to score"));
        }
        let n_entailed = verdicts.iter().filter(|v| rule.entails(v)).count();
        Ok(EntailmentReport {
            model_id: model_id.to_string(),
            hypothesis: hypothesis.to_string(),
            n_premises: verdicts.len(),
            n_entailed,
            fraction: n_entailed as f64 / verdicts.len() as f64,
        })
    }
}

/// Verdict for one premise, with scorer errors tagged by premise index.
pub fn score_premise<S: Scorer + ?Sized>(
    scorer: &S,
    model_id: &str,
    hypothesis: &str,
    index: usize,
    premise: &str,
) -> Result<NliVerdict> {
    let req = NliRequest { model_id: model_id.to_string(), premise: premise.to_string(), hypothesis: hypothesis.to_string() };
    scorer
        .nli(&req)
        .and_then(NliVerdict::checked)
        .map_err(|source| Error::ProbeSample { index, source })
}

/// Fraction of `premises` that entail `hypothesis`.
pub fn entailment_fraction<S: Scorer + ?Sized>(
    scorer: &S,
    model_id: &str,
    premises: &[&str],
    hypothesis: &str,
    rule: EntailmentRule,
) -> Result<EntailmentReport> {
    let verdicts = premises
        .iter()
        .enumerate()
        .map(|(i, p)| score_premise(scorer, model_id, hypothesis, i, p))
        .collect::<Result<Vec<_>>>()?;
    EntailmentReport::from_verdicts(model_id, hypothesis, &verdicts, rule)
}

/// Channels by ascending score, ties alphabetical.
pub fn rank_channels<'a, I>(scores: I) -> Vec<String>
where
    I: IntoIterator<Item = (&'a String, &'a f64)>,
{
    let mut v: Vec<(&String, f64)> = scores.into_iter().map(|(c, s)| (c, *s)).collect();
    v.sort_by(|a, b| a.1.total_cmp(&b.1).then_with(|| a.0.cmp(b.0)));
    v.into_iter().map(|(c, _)| c.clone()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use proptest::prelude::*;

    fn tp(token: &str, prob: f64) -> TokenProb {
        TokenProb { token: token.into(), prob }
    }

    fn verdict(e: f64, c: f64, n: f64) -> NliVerdict {
        NliVerdict::new(e, c, n).unwrap()
    }

    fn seasons() -> StubScorer {
        StubScorer::new(StubTable {
            fill_mask: vec![FillMaskEntry {
                model_id: None,
                text: "In the [MASK], it snows a lot.".into(),
                tokens: vec![tp("summer", 0.3), tp("winter", 0.4), tp("fall", 0.1), tp("spring", 0.05), tp("autumn", 0.01)],
            }],
            ..Default::default()
        })
        .unwrap()
    }

    fn election_stub(p_t: f64, p_b: f64) -> StubScorer {
        StubScorer::new(StubTable {
            fill_mask: vec![
                FillMaskEntry {
                    model_id: None,
                    text: ClozeProbe::trump_election().template().into(),
                    tokens: vec![tp("lost", 0.5), tp(ELECTION_TARGET, p_t)],
                },
                FillMaskEntry {
                    model_id: None,
                    text: ClozeProbe::biden_election().template().into(),
                    tokens: vec![tp(ELECTION_TARGET, p_b), tp("stolen", 0.2)],
                },
            ],
            ..Default::default()
        })
        .unwrap()
    }

    #[test]
    fn probe_templates() {
        assert!(ClozeProbe::new("x", "no slot").is_err());
        assert!(ClozeProbe::new("x", "[MASK] and [MASK]").is_err());
        assert!(ClozeProbe::new("x", "  [MASK] ").is_err());
        assert!(ClozeProbe::new("x", "[MASK] wins").is_ok());
        assert_eq!(ClozeProbe::named("biggest-problem").unwrap(), ClozeProbe::biggest_problem());
        assert!(ClozeProbe::try_from(ClozeProbeRepr { label: "bad".into(), template: "nothing".into() }).is_err());
    }

    #[test]
    fn stub_passthrough() {
        let s = seasons();
        let probe = ClozeProbe::new("season", "In the [MASK], it snows a lot.").unwrap();
        let top1 = run_cloze(&s, "m", &probe, 1).unwrap();
        assert_eq!(top1.tokens()[0].token, "winter");
        let top5 = run_cloze(&s, "m", &probe, 5).unwrap();
        assert_eq!(top5.top(1), top1.tokens());
        let names: Vec<&str> = top5.tokens().iter().map(|t| t.token.as_str()).collect();
        assert_eq!(names, ["winter", "summer", "fall", "spring", "autumn"]);
        assert!(run_cloze(&s, "m", &probe, 0).is_err());
        let other = ClozeProbe::new("x", "unknown [MASK]").unwrap();
        assert!(matches!(run_cloze(&s, "m", &other, 1), Err(Error::Scorer(ScorerError::NoAnswer(_)))));
    }

    #[test]
    fn calibration() {
        let s = election_stub(0.3, 0.1);
        let score = election_score(&s, "fox").unwrap();
        assert!((score.trump - 0.75).abs() < 1e-12);
        assert!((score.biden - 0.25).abs() < 1e-12);
        assert_eq!(election_score_from(0.2, 0.2).unwrap(), ElectionScore { trump: 0.5, biden: 0.5 });
        assert!(matches!(election_score_from(0.0, 0.0), Err(Error::UndefinedMeasure(_))));
        assert!(election_score_from(-0.1, 0.2).is_err());
        // "won" absent from the table scores zero
        let s = election_stub(0.0, 0.0);
        assert!(matches!(election_score(&s, "fox"), Err(Error::UndefinedMeasure(_))));
        let diag = election_diagnostics(&election_stub(0.3, 0.1), "fox").unwrap();
        assert_eq!(diag[1], ElectionDiagnostic { target: "stolen".into(), p_trump: 0.0, p_biden: 0.2 });
        assert_eq!(diag[2].p_trump, 0.5);
    }

    #[test]
    fn verdict_validation_and_argmax() {
        assert!(NliVerdict::new(0.5, 0.5, 0.1).is_err());
        assert!(NliVerdict::new(1.2, -0.2, 0.0).is_err());
        assert!(NliVerdict::new(0.3333333, 0.3333333, 0.3333334).is_ok());
        assert_eq!(verdict(0.4, 0.4, 0.2).argmax(), NliLabel::Entailment);
        assert_eq!(verdict(0.2, 0.4, 0.4).argmax(), NliLabel::Contradiction);
        assert_eq!(verdict(0.2, 0.3, 0.5).argmax(), NliLabel::Neutral);
        assert!(EntailmentRule::Threshold { tau: 0.3 }.entails(&verdict(0.3, 0.6, 0.1)));
        assert!(!EntailmentRule::Argmax.entails(&verdict(0.3, 0.6, 0.1)));
    }

    #[test]
    fn constant_verdict_entails_everything() {
        let s = StubScorer::new(StubTable { default_verdict: Some(verdict(1.0, 0.0, 0.0)), ..Default::default() }).unwrap();
        let r = entailment_fraction(&s, "m", &["a", "b", "c"], HYPOTHESIS_TRUMP, EntailmentRule::Argmax).unwrap();
        assert_eq!(r.fraction, 1.0);
        assert!(entailment_fraction(&s, "m", &[], HYPOTHESIS_TRUMP, EntailmentRule::Argmax).is_err());
    }

    #[test]
    fn hand_labelled_premises() {
        let yes = verdict(0.7, 0.2, 0.1);
        let no = verdict(0.1, 0.8, 0.1);
        let meh = verdict(0.3, 0.3, 0.4);
        let table = StubTable {
            nli: vec![NliEntry { model_id: None, premise: "four more years".into(), hypothesis: None, verdict: yes }],
            nli_rules: vec![
                NliKeywordRule { model_id: None, hypothesis: None, keyword: "MAGA".into(), verdict: yes },
                NliKeywordRule { model_id: None, hypothesis: None, keyword: "biden".into(), verdict: no },
            ],
            default_verdict: Some(meh),
            ..Default::default()
        };
        let s = StubScorer::new(table).unwrap();
        let premises = [
            "four more years",
            "maga forever",
            "go biden",
            "biden won fair",
            "weather is nice",
            "MAGA",
            "lunch",
            "nothing here",
            "joe biden",
            "maga maga",
        ];
        // hand count: 1, 2, 6, 10 entail
        let r = entailment_fraction(&s, "m", &premises, HYPOTHESIS_TRUMP, EntailmentRule::Argmax).unwrap();
        assert_eq!((r.n_entailed, r.n_premises), (4, 10));
        assert_eq!(r.fraction, 0.4);
        let again = entailment_fraction(&s, "m", &premises, HYPOTHESIS_TRUMP, EntailmentRule::Argmax).unwrap();
        assert_eq!(r, again);
    }

    #[test]
    fn errors_carry_the_premise_index() {
        let s = StubScorer::new(StubTable {
            nli_rules: vec![NliKeywordRule { model_id: None, hypothesis: None, keyword: "ok".into(), verdict: verdict(1.0, 0.0, 0.0) }],
            ..Default::default()
        })
        .unwrap();
        let err = entailment_fraction(&s, "m", &["ok", "ok", "bad"], "h", EntailmentRule::Argmax).unwrap_err();
        assert!(matches!(err, Error::ProbeSample { index: 2, .. }));
    }

    #[test]
    fn model_specific_rows_win() {
        let table = StubTable {
            models: vec!["a".into(), "b".into()],
            fill_mask: vec![
                FillMaskEntry { model_id: None, text: "x [MASK]".into(), tokens: vec![tp("any", 0.9)] },
                FillMaskEntry { model_id: Some("b".into()), text: "x [MASK]".into(), tokens: vec![tp("bee", 0.9)] },
            ],
            ..Default::default()
        };
        let s = StubScorer::new(table).unwrap();
        let p = ClozeProbe::new("x", "x [MASK]").unwrap();
        assert_eq!(run_cloze(&s, "a", &p, 1).unwrap().tokens()[0].token, "any");
        assert_eq!(run_cloze(&s, "b", &p, 1).unwrap().tokens()[0].token, "bee");
        assert!(matches!(run_cloze(&s, "c", &p, 1), Err(Error::Scorer(ScorerError::UnknownModel(_)))));
        assert_eq!(s.models().unwrap(), ["a", "b"]);
    }

    #[test]
    fn mask_distribution_validation() {
        assert!(MaskDistribution::new(vec![tp("a", 0.7), tp("b", 0.7)]).is_err());
        assert!(MaskDistribution::new(vec![tp("a", 0.1), tp("a", 0.1)]).is_err());
        assert!(MaskDistribution::new(vec![tp("a", 1.5)]).is_err());
        let d = MaskDistribution::new(vec![tp("a", 0.1), tp("b", 0.3)]).unwrap();
        assert_eq!(d.tokens()[0].token, "b");
        assert_eq!(d.prob("a"), Some(0.1));
        assert_eq!(d.prob("z"), None);
    }

    #[test]
    fn ranking() {
        let one: BTreeMap<String, f64> = [("solo".to_string(), 0.3)].into();
        assert_eq!(rank_channels(&one), ["solo"]);
        let two: BTreeMap<String, f64> = [("a".to_string(), 0.2), ("b".to_string(), 0.1)].into();
        assert_eq!(rank_channels(&two), ["b", "a"]);
        let tie: BTreeMap<String, f64> = [("z".to_string(), 0.5), ("m".to_string(), 0.5)].into();
        assert_eq!(rank_channels(&tie), ["m", "z"]);
    }

    proptest! {
        #[test]
        fn calibration_is_scale_invariant(p_t in 1e-6f64..1.0, p_b in 1e-6f64..1.0, lambda in prop_oneof![Just(1e-3), Just(1.0), Just(1e3)]) {
            let base = election_score_from(p_t, p_b).unwrap();
            let scaled = election_score_from(p_t * lambda, p_b * lambda).unwrap();
            prop_assert!((base.trump - scaled.trump).abs() <= 1e-12);
            prop_assert_eq!(base.trump + base.biden, 1.0);
            prop_assert!((0.0..=1.0).contains(&base.trump) && (0.0..=1.0).contains(&base.biden));
        }

        #[test]
        fn ranking_ignores_input_order(mut pairs in proptest::collection::vec(("[a-e]{1,3}", 0u8..4), 1..12), seed in any::<u64>()) {
            pairs.sort();
            pairs.dedup_by(|a, b| a.0 == b.0);
            let scores: Vec<(String, f64)> = pairs.iter().map(|(c, s)| (c.clone(), *s as f64 / 4.0)).collect();
            let mut shuffled = scores.clone();
            use rand::seq::SliceRandom;
            shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            let a = rank_channels(scores.iter().map(|(c, s)| (c, s)));
            let b = rank_channels(shuffled.iter().map(|(c, s)| (c, s)));
            prop_assert_eq!(a, b);
        }
    }
}
