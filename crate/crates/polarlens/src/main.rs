use std::io::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand, ValueEnum};
use polarlens::analyses as an;
use polarlens::config::{Analysis, RunConfig, Seeds};
use polarlens::embfile::{read_embedding, write_embedding};
use polarlens::fetch::{serve_fixture, ApiClient};
use polarlens::io::load_archive;
use polarlens::pipeline::run_pipeline;
use polarlens::report::{fmt_f64, Table};
use polarlens::scorer::{load_stub, serve_stub, HttpScorer};
use polarlens_core::align::{align_embeddings, AlignConfig, Retrieval};
use polarlens_core::embedding::TrainConfig;
use polarlens_core::migration::ShareWeighting;
use polarlens_core::probe::{
    election_diagnostics, election_score, hypothesis, run_cloze, ClozeProbe, EntailmentRule, NliRequest, Scorer,
};
use polarlens_core::textnorm::{channel_corpus, NormalizeOptions, TextSource, ValenceShifterList};
use polarlens_core::TimeWindow;

#[derive(Parser)]
#[command(name = "polarlens", version, about = "Compare the audiences of media channels from their comment archives")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Download channel archives from the data API.
    Fetch {
        /// Base URL of the API; the key is read from POLARLENS_API_KEY.
        #[arg(long)]
        base_url: String,
        #[arg(long, value_delimiter = ',', required = true)]
        channels: Vec<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Serve an archive directory over the data API.
    ServeFixture {
        #[arg(long)]
        archive: PathBuf,
        #[arg(long, default_value = "127.0.0.1:8700")]
        addr: String,
        #[arg(long)]
        api_key: Option<String>,
    },
    /// Run the analyses selected by a config file.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Restrict to these analyses (comma separated).
        #[arg(long, value_delimiter = ',')]
        only: Option<Vec<Analysis>>,
    },
    /// Comment stance toward the president-elect.
    Stance {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        window: Option<String>,
    },
    /// Rank n-grams in equal-sized channel corpora.
    NgramRank {
        #[command(flatten)]
        common: Common,
        #[arg(long = "ngram")]
        ngrams: Vec<String>,
        #[arg(long)]
        window: Option<String>,
        #[arg(long, value_enum)]
        source: Option<Source>,
    },
    /// Disagreement and engagement before and after a date.
    Engagement {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        before: Option<String>,
        #[arg(long)]
        after: Option<String>,
    },
    /// Subscriber market share over a date range.
    MarketShare {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        start: Option<NaiveDate>,
        #[arg(long)]
        end: Option<NaiveDate>,
        #[arg(long)]
        step_days: Option<u32>,
        /// Summary columns (comma separated).
        #[arg(long, value_delimiter = ',')]
        dates: Option<Vec<NaiveDate>>,
    },
    /// Comment share drift of a commenter cohort between two channels.
    Migration {
        #[command(flatten)]
        common: Common,
        /// Channel pair as `from,to`; repeatable.
        #[arg(long = "pair", value_parser = parse_pair)]
        pairs: Vec<(String, String)>,
        /// Control pair, reported after the others.
        #[arg(long, value_parser = parse_pair)]
        control: Option<(String, String)>,
        #[arg(long)]
        min_total: Option<usize>,
        #[arg(long)]
        quantile: Option<f64>,
        #[arg(long, value_enum)]
        weighting: Option<Weighting>,
    },
    /// Word embedding commands.
    Embed {
        #[command(subcommand)]
        command: EmbedCommand,
    },
    /// Align two embeddings and report their similarity.
    Align {
        source: PathBuf,
        target: PathBuf,
        #[command(flatten)]
        align: AlignArgs,
        /// Print the translation of these source words.
        #[arg(long = "translate")]
        words: Vec<String>,
        #[arg(long, default_value_t = 20)]
        misaligned_top: usize,
    },
    /// Directional similarity between every pair of embeddings.
    SimilarityMatrix {
        #[arg(required = true, num_args = 2..)]
        embeddings: Vec<PathBuf>,
        #[command(flatten)]
        align: AlignArgs,
        #[arg(long, value_enum, default_value = "csv")]
        format: Format,
    },
    /// Nearest neighbours of a query phrase.
    Neighbors {
        embedding: PathBuf,
        query: String,
        #[arg(long, default_value_t = 10)]
        k: usize,
        /// Only return tokens shaped like video ids.
        #[arg(long)]
        video_ids: bool,
    },
    /// Top tokens a model predicts for a cloze probe.
    Cloze {
        #[command(flatten)]
        scorer: ScorerArgs,
        #[arg(long)]
        model: String,
        #[arg(long, default_value = "biggest-problem")]
        probe: String,
        #[arg(long, default_value_t = 3)]
        top_k: usize,
    },
    /// Calibrated election probe score.
    ElectionScore {
        #[command(flatten)]
        scorer: ScorerArgs,
        #[arg(long, required = true, value_delimiter = ',')]
        models: Vec<String>,
        /// Also print the raw probabilities of the diagnostic targets.
        #[arg(long)]
        diagnostics: bool,
    },
    /// Score one premise against a hypothesis.
    Nli {
        #[command(flatten)]
        scorer: ScorerArgs,
        #[arg(long)]
        model: String,
        #[arg(long)]
        premise: String,
        /// Hypothesis text, or `h1`/`h2`.
        #[arg(long)]
        hypothesis: String,
        #[arg(long)]
        threshold: Option<f64>,
    },
    /// Serve a stub scorer table over the scorer protocol.
    ServeStubScorer {
        #[arg(long)]
        table: PathBuf,
        #[arg(long, default_value = "127.0.0.1:8710")]
        addr: String,
    },
    /// Write a channel's comments as fine-tuning text.
    ExportFinetune {
        #[arg(long)]
        archive: PathBuf,
        #[arg(long)]
        channel: String,
        #[arg(long, default_value = "after")]
        window: String,
        #[arg(long)]
        shifters: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Subcommand)]
enum EmbedCommand {
    /// Train one channel's embedding.
    Train {
        #[arg(long)]
        archive: PathBuf,
        #[arg(long)]
        channel: String,
        #[arg(long, default_value = "t128")]
        window: String,
        #[arg(long, value_enum, default_value = "comments")]
        source: Source,
        /// `.vec` for text, `.bin` for binary.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        dim: Option<usize>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        min_count: Option<u64>,
        #[arg(long)]
        seed: Option<u64>,
        /// More than one thread is faster but not reproducible.
        #[arg(long)]
        threads: Option<usize>,
    },
}

#[derive(Args)]
struct Common {
    /// Base config; the flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, required_unless_present = "config")]
    archive: Option<PathBuf>,
    #[arg(long, alias = "channel", value_delimiter = ',')]
    channels: Option<Vec<String>>,
    /// Output directory; tables are also printed to stdout.
    #[arg(long, default_value = "polarlens-out")]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
}

#[derive(Args)]
struct AlignArgs {
    #[arg(long, default_value_t = AlignConfig::default().seed_top_k)]
    seed_top_k: usize,
    #[arg(long, default_value_t = AlignConfig::default().min_seeds)]
    min_seeds: usize,
    #[arg(long, default_value_t = AlignConfig::default().eval_top)]
    eval_top: usize,
    #[arg(long, default_value_t = AlignConfig::default().eval_min_count)]
    eval_min_count: u64,
    /// Use inverted-softmax retrieval with this inverse temperature.
    #[arg(long)]
    beta: Option<f64>,
}

impl AlignArgs {
    fn config(&self) -> AlignConfig {
        AlignConfig {
            seed_top_k: self.seed_top_k,
            min_seeds: self.min_seeds,
            retrieval: self.beta.map_or(Retrieval::NearestNeighbor, |beta| Retrieval::InvertedSoftmax { beta }),
            eval_top: self.eval_top,
            eval_min_count: self.eval_min_count,
        }
    }
}

#[derive(Args)]
#[group(required = true, multiple = false)]
struct ScorerArgs {
    /// Base URL of a running scorer.
    #[arg(long)]
    scorer_url: Option<String>,
    /// Stub table answered in process.
    #[arg(long)]
    stub_table: Option<PathBuf>,
}

impl ScorerArgs {
    fn open(&self) -> anyhow::Result<Box<dyn Scorer>> {
        match (&self.scorer_url, &self.stub_table) {
            (Some(url), _) => Ok(Box::new(HttpScorer::new(url))),
            (None, Some(path)) => Ok(Box::new(load_stub(path)?)),
            (None, None) => bail!("pass --scorer-url or --stub-table"),
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Md,
}

#[derive(Clone, Copy, ValueEnum)]
enum Source {
    Comments,
    Transcripts,
}

impl From<Source> for TextSource {
    fn from(s: Source) -> Self {
        match s {
            Source::Comments => TextSource::Comments,
            Source::Transcripts => TextSource::Transcripts,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Weighting {
    Comments,
    Users,
}

fn parse_pair(s: &str) -> Result<(String, String), String> {
    match s.split_once(',') {
        Some((a, b)) if !a.is_empty() && !b.is_empty() => Ok((a.to_string(), b.to_string())),
        _ => Err(format!("expected `from,to`, got `{s}`")),
    }
}

fn print_table(t: &Table, format: Format) -> anyhow::Result<()> {
    let text = match format {
        Format::Csv => t.to_csv(),
        Format::Md => t.to_markdown(),
    };
    let mut out = std::io::stdout().lock();
    let written = match format {
        Format::Md => write!(out, "### {}\n\n{text}", t.name),
        Format::Csv => out.write_all(text.as_bytes()),
    };
    match written {
        // closed early by `head` and the like
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
        other => Ok(other?),
    }
}

fn base_config(common: &Common) -> anyhow::Result<(RunConfig, Option<String>)> {
    let (mut cfg, hash) = match &common.config {
        Some(path) => {
            let (cfg, hash) = RunConfig::load(path)?;
            (cfg, Some(hash))
        }
        None => {
            let seeds = Seeds { sampling: 0, embedding: 0, premises: 0 };
            let v = serde_json::json!({ "archive": "", "output_dir": "", "seeds": seeds });
            (serde_json::from_value::<RunConfig>(v)?, None)
        }
    };
    if let Some(a) = &common.archive {
        cfg.archive = a.clone();
    }
    if let Some(c) = &common.channels {
        cfg.channels = c.clone();
    }
    if let Some(s) = common.seed {
        cfg.seeds = Seeds { sampling: s, embedding: s, premises: s };
    }
    cfg.output_dir = common.out.clone();
    Ok((cfg, hash))
}

/// Runs one analysis through the pipeline so the outputs carry the config
/// hash, then echoes its tables.
fn run_single(common: &Common, analysis: Analysis, edit: impl FnOnce(&mut RunConfig)) -> anyhow::Result<()> {
    let (mut cfg, loaded_hash) = base_config(common)?;
    let before = cfg.hash();
    edit(&mut cfg);
    cfg.validate()?;
    let hash = match loaded_hash {
        Some(h) if cfg.hash() == before && common.archive.is_none() && common.channels.is_none() && common.seed.is_none() => h,
        _ => cfg.hash(),
    };
    let manifest = run_pipeline(&cfg, &hash, &[analysis])?;
    for rel in manifest.outputs().filter(|p| p.starts_with("tables/") && p.ends_with(".csv")) {
        let text = std::fs::read_to_string(cfg.output_dir.join(rel))?;
        let body: String = text.lines().skip(1).map(|l| format!("{l}\n")).collect();
        let mut rdr = csv::ReaderBuilder::new().from_reader(body.as_bytes());
        let name = Path::new(rel).file_stem().and_then(|s| s.to_str()).unwrap_or(rel);
        let mut t = Table::new(name, rdr.headers()?.iter().map(str::to_string).collect::<Vec<_>>());
        for r in rdr.records() {
            t.push(r?.iter().map(str::to_string).collect::<Vec<_>>());
        }
        print_table(&t, common.format)?;
    }
    log::info!("outputs written under {}", cfg.output_dir.display());
    Ok(())
}

fn window(label: &str) -> anyhow::Result<TimeWindow> {
    TimeWindow::named(label).with_context(|| format!("unknown window `{label}`; use before, after, t128 or postcall"))
}

fn label_of(path: &Path) -> String {
    path.file_stem().and_then(|s| s.to_str()).unwrap_or("embedding").to_string()
}

fn main() -> anyhow::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match cli.command {
        Command::Fetch { base_url, channels, out } => {
            let archive = ApiClient::from_env(&base_url)?.fetch_to(&channels, &out)?;
            let (c, v, m) = (archive.channels().len(), archive.videos().len(), archive.comments().len());
            println!("channels={c} videos={v} comments={m}");
        }
        Command::ServeFixture { archive, addr, api_key } => {
            let server = serve_fixture(load_archive(&archive)?, api_key, &addr)?;
            println!("serving {} on {}", archive.display(), server.url());
            server.join();
        }
        Command::Run { config, only } => {
            let (cfg, hash) = RunConfig::load(&config)?;
            let selected = only.unwrap_or_else(|| cfg.selected());
            let manifest = run_pipeline(&cfg, &hash, &selected)?;
            for s in &manifest.stages {
                println!("{:<14} {:>8} ms  {} outputs", s.name, s.wall_clock_ms, s.outputs.len());
            }
            println!("config_sha256={hash}");
        }
        Command::Stance { common, window } => run_single(&common, Analysis::Stance, |c| {
            if let Some(w) = window {
                c.stance.window = w;
            }
        })?,
        Command::NgramRank { common, ngrams, window, source } => run_single(&common, Analysis::Ngram, |c| {
            if !ngrams.is_empty() {
                c.ngram.ngrams = ngrams;
            }
            if let Some(w) = window {
                c.ngram.window = w;
            }
            if let Some(s) = source {
                c.ngram.source = s.into();
            }
        })?,
        Command::Engagement { common, before, after } => run_single(&common, Analysis::Engagement, |c| {
            if let Some(b) = before {
                c.engagement.before = b;
            }
            if let Some(a) = after {
                c.engagement.after = a;
            }
        })?,
        Command::MarketShare { common, start, end, step_days, dates } => run_single(&common, Analysis::MarketShare, |c| {
            let m = &mut c.market_share;
            m.start = start.unwrap_or(m.start);
            m.end = end.unwrap_or(m.end);
            m.step_days = step_days.unwrap_or(m.step_days);
            if let Some(d) = dates {
                m.report_dates = d;
            }
        })?,
        Command::Migration { common, mut pairs, control, min_total, quantile, weighting } => {
            run_single(&common, Analysis::Migration, |c| {
                let m = &mut c.migration;
                pairs.extend(control);
                if !pairs.is_empty() {
                    m.pairs = pairs;
                }
                m.min_total = min_total.unwrap_or(m.min_total);
                m.quantile = quantile.unwrap_or(m.quantile);
                if let Some(w) = weighting {
                    m.weighting = match w {
                        Weighting::Comments => ShareWeighting::Comments,
                        Weighting::Users => ShareWeighting::Users,
                    };
                }
            })?
        }
        Command::Embed { command: EmbedCommand::Train { archive, channel, window: w, source, out, dim, epochs, min_count, seed, threads } } => {
            let archive = load_archive(&archive)?;
            let corpus = channel_corpus(&archive, &channel, &window(&w)?, source.into(), NormalizeOptions::default())?;
            let d = TrainConfig::default();
            let config = TrainConfig {
                dim: dim.unwrap_or(d.dim),
                epochs: epochs.unwrap_or(d.epochs),
                min_count: min_count.unwrap_or(d.min_count),
                seed: seed.unwrap_or(d.seed),
                threads: threads.unwrap_or(d.threads),
                ..d
            };
            let emb = polarlens::train::train(&corpus, config)?;
            write_embedding(&out, &emb)?;
            println!("{}: {} tokens, vocabulary {}, dim {}", out.display(), corpus.token_count(), emb.len(), emb.dim());
        }
        Command::Align { source, target, align, words, misaligned_top } => {
            let pair = align_embeddings(read_embedding(&source)?, read_embedding(&target)?, &align.config())?;
            println!("seeds={} orthogonality_error={:.3e}", pair.seed_dictionary().len(), pair.orthogonality_error());
            let eval = pair.default_eval_vocab();
            if eval.is_empty() {
                println!("similarity=NA (no shared words above the count floor)");
            } else {
                println!("eval_vocab={} similarity={}", eval.len(), fmt_f64(pair.similarity(&eval)?));
                for (w, tr) in pair.misaligned_pairs(&eval)?.into_iter().take(misaligned_top) {
                    println!("misaligned {w} -> {tr}");
                }
            }
            for w in &words {
                println!("translate {w} -> {}", pair.translate(w)?);
            }
        }
        Command::SimilarityMatrix { embeddings, align, format } => {
            let embs = embeddings
                .iter()
                .map(|p| Ok((label_of(p), read_embedding(p)?)))
                .collect::<anyhow::Result<Vec<_>>>()?;
            let (matrix, _) = an::alignment_tables(&embs, &align.config(), 0)?;
            print_table(&matrix, format)?;
        }
        Command::Neighbors { embedding, query, k, video_ids } => {
            let emb = read_embedding(&embedding)?;
            let mut t = an::neighbors_table();
            an::neighbor_rows(&mut t, &label_of(&embedding), &emb, &query, k, video_ids, NormalizeOptions::default())?;
            print_table(&t, Format::Csv)?;
        }
        Command::Cloze { scorer, model, probe, top_k } => {
            let probe = ClozeProbe::named(&probe).with_context(|| format!("unknown probe `{probe}`"))?;
            let dist = run_cloze(scorer.open()?.as_ref(), &model, &probe, top_k)?;
            for (i, tp) in dist.top(top_k).iter().enumerate() {
                println!("{}\t{}\t{}", i + 1, tp.token, fmt_f64(tp.prob));
            }
        }
        Command::ElectionScore { scorer, models, diagnostics } => {
            let scorer = scorer.open()?;
            for m in &models {
                let s = election_score(scorer.as_ref(), m)?;
                println!("{m}\ttrump={}\tbiden={}", fmt_f64(s.trump), fmt_f64(s.biden));
                if diagnostics {
                    for d in election_diagnostics(scorer.as_ref(), m)? {
                        println!("{m}\t{}\tp_trump={}\tp_biden={}", d.target, fmt_f64(d.p_trump), fmt_f64(d.p_biden));
                    }
                }
            }
        }
        Command::Nli { scorer, model, premise, hypothesis: h, threshold } => {
            let req = NliRequest { model_id: model, premise, hypothesis: hypothesis(&h).to_string() };
            let v = scorer.open()?.nli(&req)?;
            let rule = threshold.map_or(EntailmentRule::Argmax, |tau| EntailmentRule::Threshold { tau });
            println!(
                "entailment={} contradiction={} neutral={} entailed={}",
                fmt_f64(v.entailment),
                fmt_f64(v.contradiction),
                fmt_f64(v.neutral),
                rule.entails(&v)
            );
        }
        Command::ServeStubScorer { table, addr } => {
            let server = serve_stub(load_stub(&table)?, &addr)?;
            println!("stub scorer on {}", server.url());
            server.join();
        }
        Command::ExportFinetune { archive, channel, window: w, shifters, out } => {
            let shifters = match shifters {
                Some(p) => an::read_shifters(&p)?,
                None => ValenceShifterList::default(),
            };
            let r = an::export_finetune(&load_archive(&archive)?, &channel, &window(&w)?, &shifters, &out)?;
            println!("{}: kept={} dropped={} sha256={}", out.display(), r.kept, r.dropped, r.sha256);
        }
    }
    Ok(())
}
