//! Analyses rendered as tables; shared by the pipeline and the CLI.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use anyhow::{bail, Context};
use chrono::NaiveDate;
use polarlens_core::align::{align_embeddings, looks_like_video_id, nearest_neighbors_filtered, AlignConfig};
use polarlens_core::embedding::{Embedding, TrainConfig};
use polarlens_core::engagement::{disagreement_factor, engagement_summary, market_share_series};
use polarlens_core::migration::{
    activity_quantile_share, select_cohort, temporal_share, CohortSpec, ShareReport, ShareWeighting,
};
use polarlens_core::ngram::{ngram_rank, phrase_doc_frequency, stance_measure, PhrasePattern};
use polarlens_core::probe::{
    election_diagnostics, election_score, hypothesis, rank_channels, run_cloze, sample_premises, ClozeProbe,
    EntailmentRule, Scorer,
};
use polarlens_core::textnorm::{
    channel_corpus, drop_valence_shifted, normalize, normalize_with, NormalizeOptions, TextSource, ValenceShifterList,
};
use polarlens_core::{ChannelArchive, Error as CoreError, TimeWindow};
use sha2::{Digest, Sha256};

use crate::report::{fmt_f64, fmt_opt, Table, NA};
use crate::scorer::entailment_fraction_concurrent;

pub fn read_patterns(path: &Path) -> anyhow::Result<Vec<PhrasePattern>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    PhrasePattern::parse_list(&text).with_context(|| format!("parsing {}", path.display()))
}

pub fn read_shifters(path: &Path) -> anyhow::Result<ValenceShifterList> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    ValenceShifterList::parse(&text).with_context(|| format!("parsing {}", path.display()))
}

/// `channels`, or every archive channel when empty.
pub fn channel_universe(archive: &ChannelArchive, channels: &[String]) -> anyhow::Result<Vec<String>> {
    if channels.is_empty() {
        return Ok(archive.channels().iter().map(|c| c.channel_id.clone()).collect());
    }
    for c in channels {
        archive.channel(c)?;
    }
    Ok(channels.to_vec())
}

/// Undefined measures become `None`; anything else is an error.
fn defined<T>(r: polarlens_core::Result<T>) -> anyhow::Result<Option<T>> {
    match r {
        Ok(v) => Ok(Some(v)),
        Err(CoreError::UndefinedMeasure(msg)) => {
            log::info!("undefined: {msg}");
            Ok(None)
        }
        Err(e) => Err(e.into()),
    }
}

pub fn stance_table(
    archive: &ChannelArchive,
    channels: &[String],
    window: &TimeWindow,
    variants: &[PhrasePattern],
) -> anyhow::Result<Table> {
    let mut t = Table::new("stance", ["channel", "window", "president_elect_videos", "biden_videos", "stance"]);
    for c in channels {
        match defined(stance_measure(archive, c, window, variants))? {
            Some(r) => t.push([c.clone(), r.window, r.numerator.to_string(), r.denominator.to_string(), fmt_f64(r.value)]),
            None => t.push([c.clone(), window.label.clone(), "0".into(), "0".into(), NA.into()]),
        }
    }
    Ok(t)
}

#[allow(clippy::too_many_arguments)]
pub fn ngram_tables(
    archive: &ChannelArchive,
    channels: &[String],
    ngrams: &[String],
    source: TextSource,
    window: &TimeWindow,
    opts: NormalizeOptions,
    seed: u64,
    variants: &[PhrasePattern],
) -> anyhow::Result<Vec<Table>> {
    let mut corpora = Vec::new();
    let mut empty = Vec::new();
    for c in channels {
        let corpus = channel_corpus(archive, c, window, source, opts)?;
        if corpus.token_count() == 0 {
            empty.push(c.clone());
        } else {
            corpora.push(corpus);
        }
    }
    let mut ranks = Table::new("ngram_rank", ["ngram", "channel", "rank", "frequency", "token_budget"]);
    for text in ngrams {
        let ngram = normalize_with(text, opts);
        if corpora.is_empty() {
            bail!("no channel has text in window `{}`", window.label);
        }
        let report = ngram_rank(&ngram, &corpora, seed)?;
        for r in &report.per_corpus {
            let rank = r.rank.map_or_else(|| "inf".to_string(), |r| r.to_string());
            ranks.push([ngram.join(" "), r.label.clone(), rank, r.frequency.to_string(), report.budget.to_string()]);
        }
        for c in &empty {
            ranks.push([ngram.join(" "), c.clone(), NA.into(), NA.into(), report.budget.to_string()]);
        }
    }
    let mut tables = vec![ranks];
    if !variants.is_empty() {
        let mut freq = Table::new("phrase_variants", ["channel", "documents", "matching_documents", "fraction"]);
        for corpus in &corpora {
            let hits = phrase_doc_frequency(corpus, variants);
            let n = corpus.docs().len();
            freq.push([corpus.provenance().channel.clone(), n.to_string(), hits.to_string(), fmt_f64(hits as f64 / n as f64)]);
        }
        tables.push(freq);
    }
    Ok(tables)
}

pub fn engagement_tables(
    archive: &ChannelArchive,
    channels: &[String],
    before: &TimeWindow,
    after: &TimeWindow,
) -> anyhow::Result<Vec<Table>> {
    let mut dis = Table::new(
        "disagreement",
        ["channel", "disagreement_before", "disagreement_after", "delta", "videos_before", "videos_after"],
    );
    let mut eng = Table::new("engagement", ["channel", "window", "videos", "avg_comments"]);
    for c in channels {
        let b = defined(disagreement_factor(archive, c, before))?;
        let a = defined(disagreement_factor(archive, c, after))?;
        let delta = match (&b, &a) {
            (Some(b), Some(a)) => Some(b.value - a.value),
            _ => None,
        };
        dis.push([
            c.clone(),
            fmt_opt(b.as_ref().map(|r| r.value)),
            fmt_opt(a.as_ref().map(|r| r.value)),
            fmt_opt(delta),
            b.map_or(0, |r| r.n_videos).to_string(),
            a.map_or(0, |r| r.n_videos).to_string(),
        ]);
        for w in [before, after] {
            let s = engagement_summary(archive, c, w)?;
            eng.push([c.clone(), w.label.clone(), s.n_videos.to_string(), fmt_opt(s.avg_comments)]);
        }
    }
    Ok(vec![dis, eng])
}

/// Every `step_days`-th date from `start`, always ending on `end`.
pub fn stepped_dates(start: NaiveDate, end: NaiveDate, step_days: u32) -> Vec<NaiveDate> {
    let mut dates: Vec<NaiveDate> =
        start.iter_days().take_while(|d| *d <= end).step_by(step_days.max(1) as usize).collect();
    if dates.last().is_some_and(|d| *d < end) {
        dates.push(end);
    }
    dates
}

/// Summary table with one share column per report date (the first and last
/// series dates when none are given) and the full series for plotting.
pub fn market_share_tables(
    archive: &ChannelArchive,
    channels: &[String],
    series_dates: &[NaiveDate],
    report_dates: &[NaiveDate],
) -> anyhow::Result<(Table, Table)> {
    let rows = market_share_series(archive, channels, series_dates)?;
    let mut series = Table::new("market_share_series", ["date", "channel", "subscribers", "share"]);
    for r in &rows {
        for c in channels {
            series.push([r.date.to_string(), c.clone(), format!("{:.1}", r.subscribers[c]), fmt_f64(r.shares[c])]);
        }
    }
    let report_dates: Vec<NaiveDate> = match (report_dates, series_dates.first(), series_dates.last()) {
        ([], Some(&a), Some(&b)) if a != b => vec![a, b],
        ([], Some(&a), _) => vec![a],
        (given, _, _) => given.to_vec(),
    };
    let report = market_share_series(archive, channels, &report_dates)?;
    let mut header = vec!["channel".to_string()];
    header.extend(report_dates.iter().map(|d| format!("share_{d}")));
    header.push("change".into());
    let mut summary = Table::new("market_share", header);
    for c in channels {
        let mut row = vec![c.clone()];
        row.extend(report.iter().map(|r| fmt_f64(r.shares[c])));
        let change = match (report.first(), report.last()) {
            (Some(a), Some(b)) => fmt_f64(b.shares[c] - a.shares[c]),
            _ => NA.to_string(),
        };
        row.push(change);
        summary.push(row);
    }
    Ok((summary, series))
}

pub struct MigrationSetup<'a> {
    pub pairs: &'a [(String, String)],
    pub min_total: usize,
    pub require_both: bool,
    pub quantile: f64,
    pub weighting: ShareWeighting,
    pub cohort_window: &'a TimeWindow,
    pub before: &'a TimeWindow,
    pub after: &'a TimeWindow,
}

pub fn migration_table(archive: &ChannelArchive, m: &MigrationSetup<'_>) -> anyhow::Result<Table> {
    let mut t = Table::new(
        "migration",
        ["from", "to", "cohort_users", "slice", "share_from", "share_to", "users", "comments"],
    );
    for (a, b) in m.pairs {
        let spec = CohortSpec { min_total: m.min_total, require_both: m.require_both, ..CohortSpec::new(a, b)? };
        spec.validate()?;
        let cohort = select_cohort(archive, &spec, m.cohort_window)?;
        let push = |t: &mut Table, r: &ShareReport| {
            t.push([
                a.clone(),
                b.clone(),
                cohort.len().to_string(),
                r.slice.to_string(),
                fmt_opt(r.shares.map(|s| s.0)),
                fmt_opt(r.shares.map(|s| s.1)),
                r.n_users.to_string(),
                r.n_comments.to_string(),
            ])
        };
        if cohort.is_empty() {
            for slice in ["T_before", "T_after", "earliest", "latest"] {
                t.push([a.as_str(), b, "0", slice, NA, NA, "0", "0"].map(String::from));
            }
            continue;
        }
        let (before, after) = temporal_share(archive, &cohort, &spec, m.before, m.after, m.weighting)?;
        let (early, late) = activity_quantile_share(archive, &cohort, &spec, m.cohort_window, m.quantile, m.weighting)?;
        for r in [&before, &after, &early, &late] {
            push(&mut t, r);
        }
    }
    Ok(t)
}

/// One embedding per channel, trained on the channel's text in `window`.
pub fn train_channel_embeddings(
    archive: &ChannelArchive,
    channels: &[String],
    window: &TimeWindow,
    source: TextSource,
    opts: NormalizeOptions,
    config: &TrainConfig,
) -> anyhow::Result<Vec<(String, Embedding)>> {
    channels
        .iter()
        .map(|c| {
            let corpus = channel_corpus(archive, c, window, source, opts)?;
            let emb = crate::train::train(&corpus, config.clone()).with_context(|| format!("training `{c}`"))?;
            log::info!("{c}: {} tokens, vocabulary {}", corpus.token_count(), emb.len());
            Ok((c.clone(), emb))
        })
        .collect()
}

/// Similarity matrix (rows are sources) and the top misaligned pairs of
/// every ordered pair.
pub fn alignment_tables(
    embeddings: &[(String, Embedding)],
    config: &AlignConfig,
    misaligned_top: usize,
) -> anyhow::Result<(Table, Table)> {
    let labels: Vec<String> = embeddings.iter().map(|(l, _)| l.clone()).collect();
    let mut header = vec!["source".to_string()];
    header.extend(labels.iter().cloned());
    let mut matrix = Table::new("similarity_matrix", header);
    let mut mis = Table::new("misaligned_pairs", ["source", "target", "eval_vocab", "word", "translation"]);
    for (src_label, src) in embeddings {
        let mut row = vec![src_label.clone()];
        for (tgt_label, tgt) in embeddings {
            if src_label == tgt_label {
                row.push(NA.into());
                continue;
            }
            let pair = align_embeddings(src.clone(), tgt.clone(), config)
                .with_context(|| format!("aligning {src_label} -> {tgt_label}"))?;
            let eval = pair.default_eval_vocab();
            if eval.is_empty() {
                row.push(NA.into());
                continue;
            }
            row.push(fmt_f64(pair.similarity(&eval)?));
            for (w, tr) in pair.misaligned_pairs(&eval)?.into_iter().take(misaligned_top) {
                mis.push([src_label.clone(), tgt_label.clone(), eval.len().to_string(), w, tr]);
            }
        }
        matrix.push(row);
    }
    Ok((matrix, mis))
}

pub fn neighbor_rows(
    table: &mut Table,
    label: &str,
    emb: &Embedding,
    query: &str,
    k: usize,
    video_ids_only: bool,
    opts: NormalizeOptions,
) -> anyhow::Result<()> {
    let tokens = normalize_with(query, opts);
    let refs: Vec<&str> = tokens.iter().map(String::as_str).collect();
    let hits = if video_ids_only {
        nearest_neighbors_filtered(emb, &refs, k, looks_like_video_id)?
    } else {
        nearest_neighbors_filtered(emb, &refs, k, |_| true)?
    };
    for (i, (tok, cos)) in hits.into_iter().enumerate() {
        table.push([label.to_string(), tokens.join(" "), (i + 1).to_string(), tok, fmt_f64(cos as f64)]);
    }
    Ok(())
}

pub fn neighbors_table() -> Table {
    Table::new("neighbors", ["channel", "query", "rank", "token", "cosine"])
}

pub struct ProbeSetup<'a> {
    pub channels: &'a [String],
    pub models: &'a BTreeMap<String, String>,
    pub cloze_probes: &'a [String],
    pub top_k: usize,
    pub hypotheses: &'a [String],
    pub n_premises: usize,
    pub window: &'a TimeWindow,
    pub rule: EntailmentRule,
    pub in_flight: usize,
    pub seed: u64,
}

impl ProbeSetup<'_> {
    fn model<'a>(&'a self, channel: &'a str) -> &'a str {
        self.models.get(channel).map_or(channel, String::as_str)
    }
}

pub fn cloze_table<S: Scorer + ?Sized>(scorer: &S, p: &ProbeSetup<'_>) -> anyhow::Result<Table> {
    let mut t = Table::new("cloze", ["probe", "channel", "rank", "token", "prob"]);
    for name in p.cloze_probes {
        let probe = ClozeProbe::named(name).with_context(|| format!("unknown cloze probe `{name}`"))?;
        for c in p.channels {
            let dist = run_cloze(scorer, p.model(c), &probe, p.top_k)?;
            for (i, tp) in dist.tokens().iter().enumerate() {
                t.push([name.clone(), c.clone(), (i + 1).to_string(), tp.token.clone(), fmt_f64(tp.prob)]);
            }
        }
    }
    Ok(t)
}

/// Calibrated scores, the diagnostic raw probabilities and the ordering.
pub fn election_tables<S: Scorer + ?Sized>(scorer: &S, p: &ProbeSetup<'_>) -> anyhow::Result<(Table, Table, BTreeMap<String, f64>)> {
    let mut scores = Table::new("election_score", ["channel", "model", "trump_score", "biden_score"]);
    let mut diag = Table::new("election_diagnostics", ["channel", "target", "p_trump_probe", "p_biden_probe"]);
    let mut trump = BTreeMap::new();
    for c in p.channels {
        let model = p.model(c);
        let s = election_score(scorer, model)?;
        scores.push([c.clone(), model.to_string(), fmt_f64(s.trump), fmt_f64(s.biden)]);
        trump.insert(c.clone(), s.trump);
        for d in election_diagnostics(scorer, model)? {
            diag.push([c.clone(), d.target, fmt_f64(d.p_trump), fmt_f64(d.p_biden)]);
        }
    }
    Ok((scores, diag, trump))
}

pub fn entailment_table<S: Scorer + Sync + ?Sized>(
    archive: &ChannelArchive,
    scorer: &S,
    p: &ProbeSetup<'_>,
) -> anyhow::Result<(Table, BTreeMap<String, BTreeMap<String, f64>>)> {
    let mut t = Table::new("entailment", ["hypothesis", "channel", "premises", "entailed", "fraction"]);
    let mut by_hyp = BTreeMap::new();
    for h in p.hypotheses {
        let text = hypothesis(h);
        let mut fractions = BTreeMap::new();
        for c in p.channels {
            let premises = sample_premises(archive, c, p.window, p.n_premises, p.seed)?;
            if premises.is_empty() {
                t.push([h.clone(), c.clone(), "0".into(), "0".into(), NA.into()]);
                continue;
            }
            let texts: Vec<&str> = premises.iter().map(|c| c.text.as_str()).collect();
            let r = entailment_fraction_concurrent(scorer, p.model(c), &texts, text, p.rule, p.in_flight)
                .with_context(|| format!("NLI for `{c}`"))?;
            t.push([h.clone(), c.clone(), r.n_premises.to_string(), r.n_entailed.to_string(), fmt_f64(r.fraction)]);
            fractions.insert(c.clone(), r.fraction);
        }
        by_hyp.insert(h.clone(), fractions);
    }
    Ok((t, by_hyp))
}

pub fn ordering_table(measures: &[(String, BTreeMap<String, f64>)]) -> Table {
    let mut t = Table::new("probe_orderings", ["measure", "ascending_order"]);
    for (name, scores) in measures {
        t.push([name.clone(), rank_channels(scores).join(" < ")]);
    }
    t
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExportReport {
    pub channel: String,
    pub kept: usize,
    pub dropped: usize,
    pub sha256: String,
}

/// Writes one line per comment in `window` whose tokens include no valence
/// shifter, plus `<path>.sha256`.
pub fn export_finetune(
    archive: &ChannelArchive,
    channel: &str,
    window: &TimeWindow,
    shifters: &ValenceShifterList,
    path: &Path,
) -> anyhow::Result<ExportReport> {
    let corpus = channel_corpus(archive, channel, window, TextSource::Comments, NormalizeOptions::default())?;
    let kept: BTreeSet<String> = drop_valence_shifted(&corpus, shifters)?.docs().iter().map(|d| d.id.clone()).collect();
    let slice = archive.slice_window(channel, window)?;
    let mut body = String::new();
    for c in slice.comments.iter().filter(|c| kept.contains(&c.comment_id)) {
        let line: String = c.text.chars().map(|ch| if ch.is_control() { ' ' } else { ch }).collect();
        let line = line.trim();
        if line.is_empty() || normalize(line).is_empty() {
            continue;
        }
        body.push_str(line);
        body.push('\n');
    }
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, &body).with_context(|| format!("writing {}", path.display()))?;
    let sha256 = hex::encode(Sha256::digest(body.as_bytes()));
    let mut side = path.as_os_str().to_owned();
    side.push(".sha256");
    fs::write(&side, format!("{sha256}\n"))?;
    Ok(ExportReport {
        channel: channel.to_string(),
        kept: body.lines().count(),
        dropped: corpus.docs().len() - kept.len(),
        sha256,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stepped_dates_end_on_the_last_day() {
        let d = |m, day| NaiveDate::from_ymd_opt(2020, m, day).unwrap();
        assert_eq!(stepped_dates(d(1, 1), d(1, 10), 4), [d(1, 1), d(1, 5), d(1, 9), d(1, 10)]);
        assert_eq!(stepped_dates(d(1, 1), d(1, 9), 4), [d(1, 1), d(1, 5), d(1, 9)]);
        assert_eq!(stepped_dates(d(1, 1), d(1, 1), 7), [d(1, 1)]);
    }
}
