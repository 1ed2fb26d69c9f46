//! Runs the configured analyses in dependency order and records a manifest.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, Context};
use polarlens_core::probe::Scorer;
use polarlens_core::textnorm::ValenceShifterList;
use polarlens_core::{ngram, ChannelArchive};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analyses::{self as an, MigrationSetup, ProbeSetup};
use crate::config::{Analysis, NeighborFilter, RunConfig};
use crate::report::Table;
use crate::scorer::{load_stub, HttpScorer};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageStatus {
    Ok,
    Failed,
}

/// A file whose format has no room for the config hash.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Artifact {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub name: String,
    pub status: StageStatus,
    pub wall_clock_ms: u64,
    /// Tables and plot data, relative to the output directory; each begins
    /// with the config hash.
    pub outputs: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub artifacts: Vec<Artifact>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub config_hash: String,
    pub analyses: Vec<Analysis>,
    pub stages: Vec<StageRecord>,
    /// Set when a stage failed and later stages did not run.
    pub partial: bool,
}

impl RunManifest {
    pub fn outputs(&self) -> impl Iterator<Item = &str> {
        self.stages.iter().flat_map(|s| s.outputs.iter().map(String::as_str))
    }
}

#[derive(Debug, thiserror::Error)]
#[error("stage `{stage}` failed")]
pub struct StageError {
    pub stage: String,
    #[source]
    pub source: anyhow::Error,
}

#[derive(Default)]
struct StageOut {
    outputs: Vec<String>,
    artifacts: Vec<Artifact>,
}

struct Run<'a> {
    cfg: &'a RunConfig,
    hash: &'a str,
    out: &'a Path,
}

impl Run<'_> {
    fn rel(&self, p: &Path) -> String {
        p.strip_prefix(self.out).unwrap_or(p).to_string_lossy().replace('\\', "/")
    }

    fn table(&self, so: &mut StageOut, t: &Table) -> anyhow::Result<()> {
        let dir = self.out.join("tables");
        so.outputs.push(self.rel(&t.write_csv(&dir, self.hash)?));
        so.outputs.push(self.rel(&t.write_markdown(&dir, self.hash)?));
        Ok(())
    }

    fn plot(&self, so: &mut StageOut, t: &Table) -> anyhow::Result<()> {
        so.outputs.push(self.rel(&t.write_csv(&self.out.join("plots"), self.hash)?));
        Ok(())
    }

    fn artifact(&self, so: &mut StageOut, p: &Path) -> anyhow::Result<()> {
        let bytes = fs::read(p).with_context(|| format!("reading {}", p.display()))?;
        so.artifacts.push(Artifact { path: self.rel(p), sha256: hex::encode(Sha256::digest(&bytes)) });
        Ok(())
    }
}

fn scorer_for(cfg: &RunConfig) -> anyhow::Result<Box<dyn Scorer + Sync + Send>> {
    let ep = &cfg.probe.scorer;
    match (&ep.url, &ep.stub_table) {
        (Some(url), _) => Ok(Box::new(HttpScorer::new(url))),
        (None, Some(table)) => Ok(Box::new(load_stub(table)?)),
        (None, None) => Err(anyhow!("probe.scorer needs a url or a stub_table")),
    }
}

fn run_stage(run: &Run<'_>, archive: &ChannelArchive, channels: &[String], a: Analysis) -> anyhow::Result<StageOut> {
    let cfg = run.cfg;
    let mut so = StageOut::default();
    match a {
        Analysis::Stance => {
            let variants = match &cfg.stance.variants {
                Some(p) => an::read_patterns(p)?,
                None => ngram::default_stance_variants(),
            };
            let t = an::stance_table(archive, channels, &cfg.window(&cfg.stance.window)?, &variants)?;
            run.table(&mut so, &t)?;
        }
        Analysis::Ngram => {
            let variants = match &cfg.ngram.variants {
                Some(p) => an::read_patterns(p)?,
                None => ngram::default_steal_variants(),
            };
            let window = cfg.window(&cfg.ngram.window)?;
            let tables = an::ngram_tables(
                archive,
                channels,
                &cfg.ngram.ngrams,
                cfg.ngram.source,
                &window,
                cfg.normalize,
                cfg.seeds.sampling,
                &variants,
            )?;
            for t in &tables {
                run.table(&mut so, t)?;
            }
        }
        Analysis::Engagement => {
            let before = cfg.window(&cfg.engagement.before)?;
            let after = cfg.window(&cfg.engagement.after)?;
            for t in an::engagement_tables(archive, channels, &before, &after)? {
                run.table(&mut so, &t)?;
            }
        }
        Analysis::MarketShare => {
            let m = &cfg.market_share;
            let dates = an::stepped_dates(m.start, m.end, m.step_days);
            let (summary, series) = an::market_share_tables(archive, channels, &dates, &m.report_dates)?;
            run.table(&mut so, &summary)?;
            run.plot(&mut so, &series)?;
        }
        Analysis::Migration => {
            let m = &cfg.migration;
            let (cw, b, af) = (cfg.window(&m.cohort_window)?, cfg.window(&m.before)?, cfg.window(&m.after)?);
            let setup = MigrationSetup {
                pairs: &m.pairs,
                min_total: m.min_total,
                require_both: m.require_both,
                quantile: m.quantile,
                weighting: m.weighting,
                cohort_window: &cw,
                before: &b,
                after: &af,
            };
            let t = an::migration_table(archive, &setup)?;
            run.table(&mut so, &t)?;
            let mut plot = t.clone();
            plot.name = "migration_shares".into();
            run.plot(&mut so, &plot)?;
        }
        Analysis::Embedding => {
            let e = &cfg.embedding;
            let train = polarlens_core::embedding::TrainConfig { seed: cfg.seeds.embedding, ..e.train.clone() };
            let window = cfg.window(&e.window)?;
            let embs = an::train_channel_embeddings(archive, channels, &window, e.source, cfg.normalize, &train)?;
            if e.write_vectors {
                for (label, emb) in &embs {
                    let p = run.out.join("embeddings").join(format!("{label}.vec"));
                    crate::embfile::write_embedding(&p, emb)?;
                    run.artifact(&mut so, &p)?;
                }
            }
            let (matrix, mis) = an::alignment_tables(&embs, &e.align, e.misaligned_top)?;
            run.table(&mut so, &matrix)?;
            run.table(&mut so, &mis)?;
            if !e.neighbors.is_empty() {
                let mut t = an::neighbors_table();
                for q in &e.neighbors {
                    let emb = embs
                        .iter()
                        .find(|(l, _)| *l == q.channel)
                        .map(|(_, e)| e)
                        .with_context(|| format!("neighbor query names unknown channel `{}`", q.channel))?;
                    let ids = q.filter == NeighborFilter::VideoId;
                    an::neighbor_rows(&mut t, &q.channel, emb, &q.query, q.k, ids, cfg.normalize)?;
                }
                run.table(&mut so, &t)?;
            }
        }
        Analysis::Probe => {
            let p = &cfg.probe;
            let scorer = scorer_for(cfg)?;
            let window = cfg.window(&p.window)?;
            let setup = ProbeSetup {
                channels,
                models: &p.models,
                cloze_probes: &p.cloze_probes,
                top_k: p.top_k,
                hypotheses: &p.hypotheses,
                n_premises: p.n_premises,
                window: &window,
                rule: p.rule,
                in_flight: p.in_flight,
                seed: cfg.seeds.premises,
            };
            let scorer: &(dyn Scorer + Sync + Send) = scorer.as_ref();
            run.table(&mut so, &an::cloze_table(scorer, &setup)?)?;
            let (scores, diag, trump) = an::election_tables(scorer, &setup)?;
            run.table(&mut so, &scores)?;
            run.table(&mut so, &diag)?;
            let (ent, by_hyp) = an::entailment_table(archive, scorer, &setup)?;
            run.table(&mut so, &ent)?;
            let mut measures = vec![("trump_score".to_string(), trump)];
            measures.extend(by_hyp.into_iter().map(|(h, fr)| (format!("entailment_{h}"), fr)));
            run.table(&mut so, &an::ordering_table(&measures))?;
        }
        Analysis::Export => {
            let shifters = match &cfg.export.shifters {
                Some(p) => an::read_shifters(p)?,
                None => ValenceShifterList::default(),
            };
            let window = cfg.window(&cfg.export.window)?;
            let mut t = Table::new("finetune_export", ["channel", "window", "kept", "dropped", "sha256"]);
            for c in channels {
                let path = run.out.join("finetune").join(format!("{c}_{}.txt", window.label));
                let r = an::export_finetune(archive, c, &window, &shifters, &path)?;
                run.artifact(&mut so, &path)?;
                t.push([c.clone(), window.label.clone(), r.kept.to_string(), r.dropped.to_string(), r.sha256]);
            }
            run.table(&mut so, &t)?;
        }
    }
    Ok(so)
}

fn write_manifest(out: &Path, m: &RunManifest) -> anyhow::Result<PathBuf> {
    let path = out.join(MANIFEST_FILE);
    let json = serde_json::to_string_pretty(m)?;
    fs::write(&path, json + "\n").with_context(|| format!("writing {}", path.display()))?;
    Ok(path)
}

/// Runs `analyses` (in canonical order) and writes the manifest. On a stage
/// failure the manifest is still written, marked partial, and the error
/// names the stage.
pub fn run_pipeline(cfg: &RunConfig, hash: &str, analyses: &[Analysis]) -> Result<RunManifest, StageError> {
    let out = cfg.output_dir.as_path();
    let selected: Vec<Analysis> = Analysis::ALL.into_iter().filter(|a| analyses.contains(a)).collect();
    let mut manifest = RunManifest {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        config_hash: hash.to_string(),
        analyses: selected.clone(),
        stages: Vec::new(),
        partial: false,
    };
    let fail = |stage: &str, source: anyhow::Error| StageError { stage: stage.to_string(), source };
    fs::create_dir_all(out).map_err(|e| fail("setup", e.into()))?;
    if selected.is_empty() {
        write_manifest(out, &manifest).map_err(|e| fail("manifest", e))?;
        return Ok(manifest);
    }

    let started = Instant::now();
    let loaded = crate::io::load_archive(&cfg.archive)
        .map_err(anyhow::Error::from)
        .and_then(|a| an::channel_universe(&a, &cfg.channels).map(|c| (a, c)));
    let (archive, channels) = match loaded {
        Ok(v) => v,
        Err(e) => {
            manifest.stages.push(StageRecord {
                name: "load".into(),
                status: StageStatus::Failed,
                wall_clock_ms: started.elapsed().as_millis() as u64,
                outputs: Vec::new(),
                artifacts: Vec::new(),
                error: Some(format!("{e:#}")),
            });
            manifest.partial = true;
            let _ = write_manifest(out, &manifest);
            return Err(fail("load", e));
        }
    };
    manifest.stages.push(StageRecord {
        name: "load".into(),
        status: StageStatus::Ok,
        wall_clock_ms: started.elapsed().as_millis() as u64,
        outputs: Vec::new(),
        artifacts: Vec::new(),
        error: None,
    });

    let run = Run { cfg, hash, out };
    for a in selected {
        let t0 = Instant::now();
        log::info!("stage {a}");
        let result = run_stage(&run, &archive, &channels, a);
        let ms = t0.elapsed().as_millis() as u64;
        match result {
            Ok(so) => manifest.stages.push(StageRecord {
                name: a.name().into(),
                status: StageStatus::Ok,
                wall_clock_ms: ms,
                outputs: so.outputs,
                artifacts: so.artifacts,
                error: None,
            }),
            Err(e) => {
                manifest.stages.push(StageRecord {
                    name: a.name().into(),
                    status: StageStatus::Failed,
                    wall_clock_ms: ms,
                    outputs: Vec::new(),
                    artifacts: Vec::new(),
                    error: Some(format!("{e:#}")),
                });
                manifest.partial = true;
                let _ = write_manifest(out, &manifest);
                return Err(fail(a.name(), e));
            }
        }
    }
    write_manifest(out, &manifest).map_err(|e| fail("manifest", e))?;
    Ok(manifest)
}

/// Config outputs keyed by relative path, for comparing runs.
pub fn output_digests(out: &Path, manifest: &RunManifest) -> anyhow::Result<BTreeMap<String, String>> {
    manifest
        .outputs()
        .map(|rel| {
            let bytes = fs::read(out.join(rel)).with_context(|| format!("reading {rel}"))?;
            Ok((rel.to_string(), hex::encode(Sha256::digest(&bytes))))
        })
        .collect()
}
