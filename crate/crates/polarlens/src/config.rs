//! JSON run configuration.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{bail, Context};
use chrono::NaiveDate;
use polarlens_core::align::AlignConfig;
use polarlens_core::embedding::TrainConfig;
use polarlens_core::migration::ShareWeighting;
use polarlens_core::probe::EntailmentRule;
use polarlens_core::textnorm::{NormalizeOptions, TextSource};
use polarlens_core::TimeWindow;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Analysis {
    Stance,
    Ngram,
    Engagement,
    MarketShare,
    Migration,
    Embedding,
    Probe,
    Export,
}

impl Analysis {
    /// Execution order.
    pub const ALL: [Analysis; 8] = [
        Analysis::Stance,
        Analysis::Ngram,
        Analysis::Engagement,
        Analysis::MarketShare,
        Analysis::Migration,
        Analysis::Embedding,
        Analysis::Probe,
        Analysis::Export,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Analysis::Stance => "stance",
            Analysis::Ngram => "ngram",
            Analysis::Engagement => "engagement",
            Analysis::MarketShare => "market-share",
            Analysis::Migration => "migration",
            Analysis::Embedding => "embedding",
            Analysis::Probe => "probe",
            Analysis::Export => "export",
        }
    }
}

impl fmt::Display for Analysis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Analysis {
    type Err = anyhow::Error;
    fn from_str(s: &str) -> anyhow::Result<Self> {
        Analysis::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .with_context(|| format!("unknown analysis `{s}`; expected one of {}", names()))
    }
}

fn names() -> String {
    Analysis::ALL.map(Analysis::name).join(", ")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Seeds {
    pub sampling: u64,
    pub embedding: u64,
    pub premises: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindowDef {
    pub label: String,
    pub start: NaiveDate,
    pub end: NaiveDate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StanceConfig {
    pub window: String,
    /// Pattern file, one `*N`-wildcard phrase per line.
    pub variants: Option<PathBuf>,
}

impl Default for StanceConfig {
    fn default() -> Self {
        StanceConfig { window: "postcall".into(), variants: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NgramConfig {
    pub ngrams: Vec<String>,
    pub source: TextSource,
    pub window: String,
    /// Phrase variants counted per channel next to the ranks.
    pub variants: Option<PathBuf>,
}

impl Default for NgramConfig {
    fn default() -> Self {
        NgramConfig {
            ngrams: vec!["stop the steal".into()],
            source: TextSource::Comments,
            window: "after".into(),
            variants: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EngagementConfig {
    pub before: String,
    pub after: String,
}

impl Default for EngagementConfig {
    fn default() -> Self {
        EngagementConfig { before: "before".into(), after: "after".into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MarketShareConfig {
    pub start: NaiveDate,
    pub end: NaiveDate,
    pub step_days: u32,
    /// Columns of the summary table; empty means `start` and `end`.
    pub report_dates: Vec<NaiveDate>,
}

impl Default for MarketShareConfig {
    fn default() -> Self {
        let t = TimeWindow::t128();
        MarketShareConfig { start: t.start, end: t.end, step_days: 1, report_dates: Vec::new() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MigrationConfig {
    /// `(from, to)` channel pairs.
    pub pairs: Vec<(String, String)>,
    pub min_total: usize,
    pub require_both: bool,
    pub quantile: f64,
    pub weighting: ShareWeighting,
    pub cohort_window: String,
    pub before: String,
    pub after: String,
}

impl Default for MigrationConfig {
    fn default() -> Self {
        MigrationConfig {
            pairs: Vec::new(),
            min_total: 10,
            require_both: true,
            quantile: 0.2,
            weighting: ShareWeighting::Comments,
            cohort_window: "t128".into(),
            before: "before".into(),
            after: "after".into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NeighborFilter {
    #[default]
    All,
    VideoId,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NeighborQuery {
    pub channel: String,
    pub query: String,
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default)]
    pub filter: NeighborFilter,
}

fn default_k() -> usize {
    10
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbeddingConfig {
    pub train: TrainConfig,
    pub source: TextSource,
    pub window: String,
    pub align: AlignConfig,
    /// Misaligned pairs listed per ordered channel pair.
    pub misaligned_top: usize,
    pub neighbors: Vec<NeighborQuery>,
    /// Also write `embeddings/<channel>.vec`.
    pub write_vectors: bool,
}

impl Default for EmbeddingConfig {
    fn default() -> Self {
        EmbeddingConfig {
            train: TrainConfig::default(),
            source: TextSource::Comments,
            window: "t128".into(),
            align: AlignConfig::default(),
            misaligned_top: 20,
            neighbors: Vec::new(),
            write_vectors: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScorerEndpoint {
    pub url: Option<String>,
    /// In-process stub scorer table, used when `url` is absent.
    pub stub_table: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbeConfig {
    pub scorer: ScorerEndpoint,
    /// Channel → model id; unmapped channels use their channel id.
    pub models: BTreeMap<String, String>,
    pub cloze_probes: Vec<String>,
    pub top_k: usize,
    pub hypotheses: Vec<String>,
    pub n_premises: usize,
    pub window: String,
    pub rule: EntailmentRule,
    pub in_flight: usize,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        ProbeConfig {
            scorer: ScorerEndpoint::default(),
            models: BTreeMap::new(),
            cloze_probes: vec!["biggest-problem".into()],
            top_k: 3,
            hypotheses: vec!["h1".into(), "h2".into()],
            n_premises: 5000,
            window: "after".into(),
            rule: EntailmentRule::Argmax,
            in_flight: 4,
        }
    }
}

impl ProbeConfig {
    pub fn model_for<'a>(&'a self, channel: &'a str) -> &'a str {
        self.models.get(channel).map_or(channel, String::as_str)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExportConfig {
    pub window: String,
    /// Valence-shifter list; the bundled one when absent.
    pub shifters: Option<PathBuf>,
}

impl Default for ExportConfig {
    fn default() -> Self {
        ExportConfig { window: "after".into(), shifters: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub archive: PathBuf,
    pub output_dir: PathBuf,
    /// Channel universe; every archive channel when empty.
    #[serde(default)]
    pub channels: Vec<String>,
    /// Added to, or overriding, the built-in before/after/t128/postcall.
    #[serde(default)]
    pub windows: Vec<WindowDef>,
    pub seeds: Seeds,
    /// Every analysis when absent.
    #[serde(default)]
    pub analyses: Option<Vec<Analysis>>,
    #[serde(default)]
    pub normalize: NormalizeOptions,
    #[serde(default)]
    pub stance: StanceConfig,
    #[serde(default)]
    pub ngram: NgramConfig,
    #[serde(default)]
    pub engagement: EngagementConfig,
    #[serde(default)]
    pub market_share: MarketShareConfig,
    #[serde(default)]
    pub migration: MigrationConfig,
    #[serde(default)]
    pub embedding: EmbeddingConfig,
    #[serde(default)]
    pub probe: ProbeConfig,
    #[serde(default)]
    pub export: ExportConfig,
}

fn resolve(base: &Path, p: &mut PathBuf) {
    if p.is_relative() {
        *p = base.join(&*p);
    }
}

impl RunConfig {
    /// Parses `path`, fixes the hash, then resolves relative paths against
    /// the config file's directory.
    pub fn load(path: &Path) -> anyhow::Result<(Self, String)> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut cfg: RunConfig =
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        let hash = cfg.hash();
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        cfg.validate()?;
        Ok((cfg, hash))
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        resolve(base, &mut self.archive);
        resolve(base, &mut self.output_dir);
        for p in [
            &mut self.stance.variants,
            &mut self.ngram.variants,
            &mut self.probe.scorer.stub_table,
            &mut self.export.shifters,
        ]
        .into_iter()
        .flatten()
        {
            resolve(base, p);
        }
    }

    /// SHA-256 of the canonical JSON form, with `output_dir` blanked so the
    /// same analysis hashes the same wherever it is written.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output_dir = PathBuf::new();
        let json = serde_json::to_vec(&c).expect("config serializes");
        hex::encode(Sha256::digest(&json))
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        if !self.archive.is_dir() {
            bail!("archive directory {} does not exist", self.archive.display());
        }
        for p in [&self.stance.variants, &self.ngram.variants, &self.probe.scorer.stub_table, &self.export.shifters]
            .into_iter()
            .flatten()
        {
            if !p.is_file() {
                bail!("referenced file {} does not exist", p.display());
            }
        }
        for w in &self.windows {
            TimeWindow::new(w.label.clone(), w.start, w.end)?;
        }
        for label in [
            &self.stance.window,
            &self.ngram.window,
            &self.engagement.before,
            &self.engagement.after,
            &self.migration.cohort_window,
            &self.migration.before,
            &self.migration.after,
            &self.embedding.window,
            &self.probe.window,
            &self.export.window,
        ] {
            self.window(label)?;
        }
        if self.market_share.step_days == 0 {
            bail!("market_share.step_days must be positive");
        }
        Ok(())
    }

    pub fn window(&self, label: &str) -> anyhow::Result<TimeWindow> {
        if let Some(w) = self.windows.iter().find(|w| w.label == label) {
            return Ok(TimeWindow::new(w.label.clone(), w.start, w.end)?);
        }
        TimeWindow::named(label).with_context(|| format!("unknown window `{label}`"))
    }

    pub fn selected(&self) -> Vec<Analysis> {
        match &self.analyses {
            None => Analysis::ALL.to_vec(),
            Some(list) => Analysis::ALL.into_iter().filter(|a| list.contains(a)).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_parses_with_defaults() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::create_dir(dir.path().join("arch")).unwrap();
        let path = dir.path().join("run.json");
        std::fs::write(
            &path,
            r#"{"archive":"arch","output_dir":"out","seeds":{"sampling":1,"embedding":2,"premises":3},
                "analyses":["migration","stance"]}"#,
        )
        .unwrap();
        let (cfg, hash) = RunConfig::load(&path).unwrap();
        assert_eq!(cfg.archive, dir.path().join("arch"));
        assert_eq!(cfg.selected(), [Analysis::Stance, Analysis::Migration]);
        assert_eq!(hash.len(), 64);
        let mut moved = cfg.clone();
        moved.output_dir = "elsewhere".into();
        assert_eq!(moved.hash(), cfg.hash());
        moved.seeds.sampling = 9;
        assert_ne!(moved.hash(), cfg.hash());
        assert_eq!(cfg.window("postcall").unwrap(), TimeWindow::postcall());
    }

    #[test]
    fn seeds_are_required_and_unknown_fields_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.json");
        std::fs::write(&path, r#"{"archive":".","output_dir":"out"}"#).unwrap();
        assert!(RunConfig::load(&path).is_err());
        std::fs::write(&path, r#"{"archive":".","output_dir":"o","seeds":{"sampling":1,"embedding":2,"premises":3},"bogus":1}"#).unwrap();
        assert!(RunConfig::load(&path).is_err());
        std::fs::write(&path, r#"{"archive":".","output_dir":"o","seeds":{"sampling":1,"embedding":2,"premises":3},"stance":{"variants":"missing.txt"}}"#).unwrap();
        assert!(RunConfig::load(&path).unwrap_err().to_string().contains("missing.txt"));
    }

    #[test]
    fn analysis_names() {
        assert_eq!("market-share".parse::<Analysis>().unwrap(), Analysis::MarketShare);
        assert!("nope".parse::<Analysis>().is_err());
    }
}
