//! One function per subcommand, each a thin wrapper over a library call.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::AtomicBool;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use anyhow::{bail, Context as _};
use clap::ValueEnum;
use cwemap::annotate::{AnnotatorId, Workflow};
use cwemap::corpus::{
    dataset_stats, load_dataset, load_dataset_jsonl, load_records, save_dataset, save_records,
    Catalog, CveId, CveRecord, DatasetRow,
};
use cwemap::eval::{
    evaluate, export_training_pairs, macro_f1, read_predictions, render_table, save_training_pairs,
    stratified_split, ChainPolicy, EvalReport, LabelClass, SplitSpec, DEFAULT_KS,
};
use cwemap::ingest::{
    filter_accepted, load_candidates, narrow_candidates, parse_feed, save_candidates,
    scrape_into_store, FixtureFetcher, HttpFetcher, NarrowLimit, PageFetcher, SnapshotStore,
    DEFAULT_YEARS,
};
use cwemap::preprocess::{cleanup, Gazetteer, Preprocessor, Stopwords};
use cwemap::rank::{
    external_rank_many, Aggregation, Bm25Params, Bm25Ranker, CosineRanker, EmbeddingStore,
    HttpScorer, RankError, RankedList, RecordedExchange, RecordedScorer, ScoreRequest,
    ScoreResponse, Scorer,
};
use cwemap::retry::RetryPolicy;

use crate::config::{check_inputs, pick, require_path, RunConfig};
use crate::{plot, server, Cli, Command, RankerArgs, RankerKind, ServiceError, UsageError};

/// Settings shared by every subcommand.
pub struct Context {
    pub config: RunConfig,
    pub jobs: usize,
    pub catalog: Catalog,
    gazetteer: Option<PathBuf>,
    stopwords: Option<PathBuf>,
    pub cancel: Arc<AtomicBool>,
}

impl Context {
    pub fn new(cli: &Cli, cancel: Arc<AtomicBool>) -> anyhow::Result<Self> {
        let config = match &cli.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        let jobs = pick(&cli.jobs, &config.jobs)
            .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
        if jobs == 0 {
            bail!(UsageError("--jobs must be at least 1".into()));
        }
        let catalog_path = pick(&cli.catalog, &config.paths.catalog);
        let gazetteer = pick(&cli.gazetteer, &config.paths.gazetteer);
        let stopwords = pick(&cli.stopwords, &config.paths.stopwords);
        check_inputs(
            catalog_path
                .iter()
                .chain(&gazetteer)
                .chain(&stopwords)
                .map(PathBuf::as_path),
        )?;
        let catalog = match catalog_path {
            Some(p) => Catalog::load("2022", &p)
                .with_context(|| format!("loading catalog {}", p.display()))?,
            None => Catalog::top25_2022(),
        };
        Ok(Self {
            config,
            jobs,
            catalog,
            gazetteer,
            stopwords,
            cancel,
        })
    }

    fn stopword_list(&self) -> anyhow::Result<Stopwords> {
        Ok(match &self.stopwords {
            Some(p) => Stopwords::load(p).with_context(|| format!("reading {}", p.display()))?,
            None => Stopwords::default(),
        })
    }

    fn preprocessor(&self, clean: bool) -> anyhow::Result<Preprocessor> {
        let gazetteer = match &self.gazetteer {
            Some(p) => Gazetteer::load(p).with_context(|| format!("reading {}", p.display()))?,
            None => Gazetteer::default(),
        };
        Ok(Preprocessor {
            gazetteer,
            stopwords: self.stopword_list()?,
            clean,
        })
    }

    fn split_spec(&self, seed: Option<u64>, fraction: Option<f64>) -> SplitSpec {
        let default = SplitSpec::default();
        SplitSpec {
            seed: pick(&seed, &self.config.split.seed).unwrap_or(default.seed),
            train_fraction: pick(&fraction, &self.config.split.train_fraction)
                .unwrap_or(default.train_fraction),
        }
    }
}

pub fn run(cli: Cli, cancel: Arc<AtomicBool>) -> anyhow::Result<()> {
    let ctx = Context::new(&cli, cancel)?;
    match cli.command {
        Command::Ingest(a) => ingest(&ctx, a),
        Command::Narrow(a) => narrow(&ctx, a),
        Command::Scrape(a) => scrape(&ctx, a),
        Command::Preprocess(a) => preprocess(&ctx, a),
        Command::Rank(a) => rank(&ctx, a),
        Command::Eval(a) => eval(&ctx, a),
        Command::Split(a) => split(&ctx, a),
        Command::ExportTrain(a) => export_train(&ctx, a),
        Command::Stats(a) => stats(&ctx, a),
        Command::Serve(a) => serve(&ctx, a),
        Command::ScoreGenerated(a) => score_generated(&ctx, a),
    }
}

fn output(path: Option<&Path>) -> anyhow::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(BufWriter::new(std::io::stdout().lock())),
    })
}

fn write_jsonl<T: serde::Serialize>(items: &[T], path: Option<&Path>) -> anyhow::Result<()> {
    let mut out = output(path)?;
    for item in items {
        serde_json::to_writer(&mut out, item)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

/// CSV or, by extension, JSONL.
pub fn read_rows(path: &Path) -> anyhow::Result<Vec<DatasetRow>> {
    let rows = if path.extension().is_some_and(|e| e == "jsonl") {
        load_dataset_jsonl(path)
    } else {
        load_dataset(path)
    }
    .with_context(|| format!("reading dataset {}", path.display()))?;
    Ok(rows)
}

fn read_records(path: &Path) -> anyhow::Result<Vec<CveRecord>> {
    load_records(path).with_context(|| format!("reading records {}", path.display()))
}

fn ingest(ctx: &Context, a: crate::IngestArgs) -> anyhow::Result<()> {
    let feed = require_path(&a.feed, &ctx.config.paths.feed_dir, "feed")?;
    check_inputs([feed.as_path()])?;
    let scrape = &ctx.config.scrape;
    let first = pick(&a.first_year, &scrape.first_year).unwrap_or(*DEFAULT_YEARS.start());
    let last = pick(&a.last_year, &scrape.last_year).unwrap_or(*DEFAULT_YEARS.end());
    if first > last {
        bail!(UsageError(format!("year window {first}..={last} is empty")));
    }
    let scan = parse_feed(&feed, first..=last)?;
    let parsed = scan.records.len();
    let accepted = filter_accepted(scan.records);
    let records: Vec<CveRecord> = accepted.iter().map(|r| r.to_cve_record()).collect();
    save_records(&records, &a.out)?;
    eprintln!(
        "parsed {parsed}, accepted {}, skipped files {}, outside {first}-{last} {}",
        records.len(),
        scan.skipped.len(),
        scan.out_of_range
    );
    Ok(())
}

fn narrow(ctx: &Context, a: crate::NarrowArgs) -> anyhow::Result<()> {
    let records_path = require_path(&a.records, &ctx.config.paths.records, "records")?;
    check_inputs([records_path.as_path()])?;
    let limit = match (a.top_n, a.min_score) {
        (Some(n), _) => NarrowLimit::TopN(n),
        (None, Some(s)) => NarrowLimit::MinScore(s),
        (None, None) => NarrowLimit::default(),
    };
    let records = read_records(&records_path)?;
    let narrowed = narrow_candidates(&records, &ctx.catalog, &ctx.stopword_list()?, limit);
    save_candidates(&narrowed.candidates, &a.out)?;
    eprintln!(
        "kept {} of {} records, dropped {}",
        narrowed.candidates.len(),
        records.len(),
        narrowed.dropped.len()
    );
    Ok(())
}

fn read_ids(path: &Path) -> anyhow::Result<Vec<CveId>> {
    let file = File::open(path).with_context(|| format!("reading {}", path.display()))?;
    let mut first = String::new();
    BufReader::new(file).read_line(&mut first)?;
    if first.starts_with("cve_id") {
        return Ok(load_candidates(path)?
            .into_iter()
            .map(|c| c.cve_id)
            .collect());
    }
    let text = std::fs::read_to_string(path)?;
    let mut ids = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if !line.is_empty() {
            ids.push(
                CveId::parse(line).with_context(|| format!("{} line {}", path.display(), i + 1))?,
            );
        }
    }
    Ok(ids)
}

fn scrape(ctx: &Context, a: crate::ScrapeArgs) -> anyhow::Result<()> {
    let store_dir = require_path(&a.store, &ctx.config.paths.snapshot_dir, "store")?;
    check_inputs(
        [a.ids.as_path()]
            .into_iter()
            .chain(a.fixtures.as_deref())
            .chain(a.records.as_deref()),
    )?;
    let ids = read_ids(&a.ids)?;
    let store = SnapshotStore::open(&store_dir)?;
    let fetcher: Box<dyn PageFetcher> = match &a.fixtures {
        Some(dir) => Box::new(FixtureFetcher::new(dir)),
        None => {
            let rate = pick(
                &a.requests_per_second,
                &ctx.config.scrape.requests_per_second,
            )
            .unwrap_or(1.0);
            if !(rate > 0.0 && rate.is_finite()) {
                bail!(UsageError(format!(
                    "requests per second must be positive, got {rate}"
                )));
            }
            Box::new(HttpFetcher::new(
                rate,
                Duration::from_secs(30),
                RetryPolicy::default(),
            )?)
        }
    };
    let report = scrape_into_store(
        &ids,
        fetcher.as_ref(),
        &store,
        ctx.jobs,
        a.refresh,
        &ctx.cancel,
    );
    eprintln!(
        "fetched {}, flagged {}, already stored {}, failed {}, cancelled {}",
        report.fetched.len(),
        report.flagged.len(),
        report.skipped_existing.len(),
        report.failed.len(),
        report.cancelled
    );
    for (id, why) in &report.failed {
        log::error!("{id}: {why}");
    }
    if let (Some(input), Some(out)) = (&a.records, &a.out) {
        let wanted: HashSet<&CveId> = ids.iter().collect();
        let mut records: Vec<CveRecord> = read_records(input)?
            .into_iter()
            .filter(|r| wanted.contains(&r.cve_id))
            .collect();
        attach_labels(&mut records, &store)?;
        save_records(&records, out)?;
    }
    if !report.failed.is_empty() || report.cancelled > 0 {
        bail!(ServiceError(format!(
            "{} fetches failed, {} cancelled",
            report.failed.len(),
            report.cancelled
        )));
    }
    Ok(())
}

/// Replaces each record's NVD labels with those of its latest snapshot.
fn attach_labels(records: &mut [CveRecord], store: &SnapshotStore) -> anyhow::Result<()> {
    for r in records.iter_mut() {
        if let Some(snap) = store.latest(&r.cve_id)? {
            r.nvd_labels = snap.parsed_labels;
        }
    }
    Ok(())
}

#[derive(serde::Serialize)]
struct CleanupLine<'a> {
    cve_id: &'a str,
    #[serde(flatten)]
    report: cwemap::preprocess::CleanupReport,
}

fn preprocess(ctx: &Context, a: crate::PreprocessArgs) -> anyhow::Result<()> {
    let pre = ctx.preprocessor(true)?;
    if let Some(text) = a.text {
        let report = cleanup(&text, &pre.gazetteer);
        let mut out = output(a.out.as_deref())?;
        serde_json::to_writer_pretty(&mut out, &report)?;
        out.write_all(b"\n")?;
        out.flush()?;
        return Ok(());
    }
    let path = require_path(&a.records, &ctx.config.paths.records, "records")?;
    check_inputs([path.as_path()])?;
    let records = read_records(&path)?;
    let lines: Vec<CleanupLine> = records
        .iter()
        .map(|r| CleanupLine {
            cve_id: r.cve_id.as_str(),
            report: cleanup(&r.query_text(), &pre.gazetteer),
        })
        .collect();
    write_jsonl(&lines, a.out.as_deref())
}

/// Wraps a live scorer and keeps every exchange.
struct Recording<'a> {
    live: &'a dyn Scorer,
    log: Mutex<Vec<RecordedExchange>>,
}

impl Scorer for Recording<'_> {
    fn score_batch(&self, request: &ScoreRequest) -> Result<ScoreResponse, RankError> {
        let response = self.live.score_batch(request)?;
        self.log
            .lock()
            .expect("exchange log")
            .push(RecordedExchange {
                request: request.clone(),
                response: response.clone(),
            });
        Ok(response)
    }
}

enum Engine {
    Bm25(Bm25Ranker),
    Cosine(CosineRanker, EmbeddingStore),
    External {
        scorer: Box<dyn Scorer>,
        preprocessor: Preprocessor,
        record_to: Option<PathBuf>,
    },
}

struct Ranker {
    engine: Engine,
    name: String,
}

impl Ranker {
    fn build(ctx: &Context, a: &RankerArgs) -> anyhow::Result<Self> {
        let rc = &ctx.config.rank;
        let kind = match (a.ranker, &rc.ranker) {
            (Some(k), _) => k,
            (None, Some(s)) => {
                RankerKind::from_str(s, true).map_err(|e| UsageError(format!("ranker: {e}")))?
            }
            (None, None) => RankerKind::Bm25,
        };
        let clean = if a.no_preproc {
            false
        } else if a.preproc {
            true
        } else {
            ctx.config.eval.preproc.unwrap_or(true)
        };
        let pre = ctx.preprocessor(clean)?;
        let tag = if clean { "+preproc" } else { "-preproc" };
        let (engine, name) = match kind {
            RankerKind::Bm25 => {
                let defaults = Bm25Params::default();
                let params = Bm25Params::new(
                    pick(&a.k1, &rc.k1).unwrap_or(defaults.k1),
                    pick(&a.b, &rc.b).unwrap_or(defaults.b),
                )
                .map_err(|e| UsageError(e.to_string()))?;
                (
                    Engine::Bm25(Bm25Ranker::new(&ctx.catalog, params, pre)?),
                    format!("BM25 {tag}"),
                )
            }
            RankerKind::Cosine => {
                let agg: Aggregation = match pick(&a.aggregation, &rc.aggregation) {
                    Some(s) => s.parse().map_err(|e: String| UsageError(e))?,
                    None => Aggregation::default(),
                };
                let path = require_path(
                    &a.embeddings,
                    &ctx.config.paths.embedding_store,
                    "embeddings",
                )?;
                check_inputs([path.as_path()])?;
                let store = EmbeddingStore::load(&path)
                    .with_context(|| format!("reading {}", path.display()))?;
                let agg_name = match agg {
                    Aggregation::Max => "max",
                    Aggregation::Mean => "mean",
                };
                (
                    Engine::Cosine(CosineRanker::new(&ctx.catalog, agg, pre), store),
                    format!("cosine-{agg_name} {tag}"),
                )
            }
            RankerKind::External => {
                let scorer: Box<dyn Scorer> = if let Some(replay) = &a.replay {
                    check_inputs([replay.as_path()])?;
                    Box::new(
                        RecordedScorer::load(replay)
                            .with_context(|| format!("reading {}", replay.display()))?,
                    )
                } else {
                    let url = pick(&a.scorer_url, &rc.scorer_url).ok_or_else(|| {
                        UsageError(
                            "--scorer-url or --replay is required for the external ranker".into(),
                        )
                    })?;
                    let timeout =
                        Duration::from_secs(pick(&a.timeout_secs, &rc.timeout_secs).unwrap_or(60));
                    Box::new(HttpScorer::new(&url, timeout, RetryPolicy::default())?)
                };
                (
                    Engine::External {
                        scorer,
                        preprocessor: pre,
                        record_to: a.record_exchanges.clone(),
                    },
                    format!("external {tag}"),
                )
            }
        };
        Ok(Self { engine, name })
    }

    fn rank_all(&self, records: &[CveRecord], ctx: &Context) -> anyhow::Result<Vec<RankedList>> {
        let rankings = match &self.engine {
            Engine::Bm25(r) => records
                .iter()
                .map(|c| r.rank(c))
                .collect::<Result<Vec<_>, _>>()?,
            Engine::Cosine(r, store) => records
                .iter()
                .map(|c| {
                    r.rank(c, store)
                        .with_context(|| format!("ranking {}", c.cve_id))
                })
                .collect::<anyhow::Result<Vec<_>>>()?,
            Engine::External {
                scorer,
                preprocessor,
                record_to,
            } => {
                let recording = Recording {
                    live: scorer.as_ref(),
                    log: Mutex::new(Vec::new()),
                };
                let active: &dyn Scorer = if record_to.is_some() {
                    &recording
                } else {
                    scorer.as_ref()
                };
                let results = external_rank_many(
                    records,
                    &ctx.catalog,
                    active,
                    preprocessor,
                    ctx.jobs,
                    &ctx.cancel,
                );
                if let Some(path) = record_to {
                    let mut exchanges = recording.log.into_inner().expect("exchange log");
                    exchanges.sort_by_cached_key(|e| {
                        serde_json::to_string(&e.request).unwrap_or_default()
                    });
                    RecordedScorer::new(exchanges).save(path)?;
                }
                records
                    .iter()
                    .zip(results)
                    .map(|(c, r)| r.with_context(|| format!("ranking {}", c.cve_id)))
                    .collect::<anyhow::Result<Vec<_>>>()?
            }
        };
        Ok(rankings)
    }
}

fn rank(ctx: &Context, a: crate::RankArgs) -> anyhow::Result<()> {
    let path = require_path(&a.records, &ctx.config.paths.records, "records")?;
    check_inputs([path.as_path()])?;
    let ranker = Ranker::build(ctx, &a.ranker)?;
    let mut records = read_records(&path)?;
    if let Some(id) = &a.cve {
        let id = CveId::parse(id).map_err(|e| UsageError(e.to_string()))?;
        records.retain(|r| r.cve_id == id);
        if records.is_empty() {
            bail!("{id} is not in {}", path.display());
        }
        let ranking = ranker.rank_all(&records, ctx)?.remove(0);
        let mut out = output(a.out.as_deref())?;
        if a.out.is_some() {
            serde_json::to_writer(&mut out, &ranking)?;
            out.write_all(b"\n")?;
        } else {
            writeln!(
                out,
                "{} ({}){}",
                ranking.cve_id,
                ranker.name,
                if ranking.is_fallback() {
                    " fallback order"
                } else {
                    ""
                }
            )?;
            for (i, e) in ranking.entries().iter().enumerate() {
                let entry = ctx.catalog.entry(e.rank);
                writeln!(
                    out,
                    "{:>2}  {:>2}  {:<8} {:>10.6}  {}",
                    i + 1,
                    e.rank,
                    entry.cwe_id,
                    e.score,
                    entry.name
                )?;
            }
        }
        out.flush()?;
        return Ok(());
    }
    let rankings = ranker.rank_all(&records, ctx)?;
    write_jsonl(&rankings, a.out.as_deref())
}

fn read_rankings(path: &Path) -> anyhow::Result<HashMap<String, RankedList>> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut out = HashMap::new();
    for (i, line) in text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
    {
        let ranking: RankedList = serde_json::from_str(line)
            .with_context(|| format!("{} line {}", path.display(), i + 1))?;
        ranking
            .validate()
            .with_context(|| format!("{} line {}", path.display(), i + 1))?;
        out.insert(ranking.cve_id.clone(), ranking);
    }
    Ok(out)
}

fn eval(ctx: &Context, a: crate::EvalArgs) -> anyhow::Result<()> {
    let dataset = require_path(&a.dataset, &ctx.config.paths.dataset, "dataset")?;
    check_inputs(
        [dataset.as_path()]
            .into_iter()
            .chain(a.rankings.as_deref())
            .chain(a.compare.iter().map(PathBuf::as_path)),
    )?;
    let ks = pick(&a.ks, &ctx.config.eval.ks).unwrap_or_else(|| DEFAULT_KS.to_vec());
    let chains = match pick(&a.chains, &ctx.config.eval.chains).as_deref() {
        None | Some("exclude") => ChainPolicy::Exclude,
        Some("first") => ChainPolicy::FirstElement,
        Some(other) => bail!(UsageError(format!(
            "--chains must be exclude or first, got {other:?}"
        ))),
    };
    let mut gold = read_rows(&dataset)?;
    if a.test_split {
        gold = stratified_split(&gold, ctx.split_spec(None, None))?.test;
    }
    let (rankings, default_name) = match &a.rankings {
        Some(p) => (
            read_rankings(p)?,
            p.file_stem()
                .map_or("rankings".into(), |s| s.to_string_lossy().into_owned()),
        ),
        None => {
            let records_path = require_path(&a.records, &ctx.config.paths.records, "records")?;
            check_inputs([records_path.as_path()])?;
            let ranker = Ranker::build(ctx, &a.ranker)?;
            let needed: HashSet<&CveId> = gold.iter().map(|r| &r.cve_id).collect();
            let records: Vec<CveRecord> = read_records(&records_path)?
                .into_iter()
                .filter(|r| needed.contains(&r.cve_id))
                .collect();
            let ranked = ranker.rank_all(&records, ctx)?;
            (
                ranked.into_iter().map(|r| (r.cve_id.clone(), r)).collect(),
                ranker.name,
            )
        }
    };
    let name = a.name.unwrap_or(default_name);
    let report = evaluate(&name, &rankings, &gold, &ks, chains)?;
    if let Some(out) = &a.out {
        std::fs::write(out, report.to_json() + "\n")
            .with_context(|| format!("writing {}", out.display()))?;
    }
    let mut reports = Vec::new();
    for p in &a.compare {
        let text = std::fs::read_to_string(p)?;
        reports.push(
            serde_json::from_str::<EvalReport>(&text)
                .with_context(|| format!("reading {}", p.display()))?,
        );
    }
    reports.push(report);
    print!("{}", render_table(&reports));
    if let Some(dir) = &a.plots {
        for p in plot::write_metric_charts(&reports, dir)? {
            eprintln!("wrote {}", p.display());
        }
    }
    Ok(())
}

fn split(ctx: &Context, a: crate::SplitArgs) -> anyhow::Result<()> {
    let dataset = require_path(&a.dataset, &ctx.config.paths.dataset, "dataset")?;
    check_inputs([dataset.as_path()])?;
    let spec = ctx.split_spec(a.seed, a.train_fraction);
    let split = stratified_split(&read_rows(&dataset)?, spec)?;
    std::fs::create_dir_all(&a.out_dir)
        .with_context(|| format!("creating {}", a.out_dir.display()))?;
    save_dataset(&split.train, &a.out_dir.join("train.csv"))?;
    save_dataset(&split.test, &a.out_dir.join("test.csv"))?;
    eprintln!(
        "train {}, test {}, causal rows left out {}, undersized labels {}",
        split.train.len(),
        split.test.len(),
        split.excluded_causal,
        split.undersized.len()
    );
    Ok(())
}

fn export_train(ctx: &Context, a: crate::ExportArgs) -> anyhow::Result<()> {
    let dataset = require_path(&a.dataset, &ctx.config.paths.dataset, "dataset")?;
    let records_path = require_path(&a.records, &ctx.config.paths.records, "records")?;
    check_inputs([dataset.as_path(), records_path.as_path()])?;
    let spec = ctx.split_spec(a.seed, None);
    let mut rows = read_rows(&dataset)?;
    if a.train_split {
        rows = stratified_split(&rows, spec)?.train;
    }
    let records: HashMap<String, CveRecord> = read_records(&records_path)?
        .into_iter()
        .map(|r| (r.cve_id.to_string(), r))
        .collect();
    let pre = ctx.preprocessor(!a.no_preproc)?;
    let pairs = export_training_pairs(&rows, &records, &ctx.catalog, &pre, a.negatives, spec.seed)?;
    save_training_pairs(&pairs, &a.out)?;
    eprintln!("wrote {} pairs", pairs.len());
    Ok(())
}

fn stats(ctx: &Context, a: crate::StatsArgs) -> anyhow::Result<()> {
    let dataset = require_path(&a.dataset, &ctx.config.paths.dataset, "dataset")?;
    check_inputs([dataset.as_path()])?;
    let stats = dataset_stats(&read_rows(&dataset)?);
    if a.json {
        println!("{}", serde_json::to_string_pretty(&stats)?);
    } else {
        print!("{}", stats.render(&ctx.catalog));
    }
    Ok(())
}

fn serve(ctx: &Context, a: crate::ServeArgs) -> anyhow::Result<()> {
    let paths = &ctx.config.paths;
    let sc = &ctx.config.serve;
    let records_path = require_path(&a.records, &paths.records, "records")?;
    let snapshots = pick(&a.snapshots, &paths.snapshot_dir);
    let static_dir = pick(&a.static_dir, &paths.static_dir);
    check_inputs(
        [records_path.as_path()]
            .into_iter()
            .chain(snapshots.as_deref())
            .chain(static_dir.as_deref()),
    )?;
    let annotators: Vec<AnnotatorId> = pick(&a.annotators, &sc.annotators)
        .ok_or_else(|| UsageError("--annotators is required".into()))?
        .into_iter()
        .map(AnnotatorId::new)
        .collect();
    if annotators.len() != 3 {
        bail!(UsageError(format!(
            "exactly three annotators are needed, got {}",
            annotators.len()
        )));
    }
    let mut records = read_records(&records_path)?;
    if let Some(dir) = &snapshots {
        attach_labels(&mut records, &SnapshotStore::open(dir)?)?;
    }
    let assist_ranker = match pick(&a.assist, &sc.assist).as_deref() {
        None | Some("bm25") => Some(Bm25Ranker::new(
            &ctx.catalog,
            Bm25Params::default(),
            ctx.preprocessor(true)?,
        )?),
        Some("none") => None,
        Some(other) => bail!(UsageError(format!(
            "--assist must be bm25 or none, got {other:?}"
        ))),
    };
    let assist = |r: &CveRecord| assist_ranker.as_ref().and_then(|k| k.rank(r).ok());
    let mut workflow = Workflow::new(
        ctx.catalog.clone(),
        &records,
        annotators,
        assist_ranker
            .as_ref()
            .map(|_| &assist as &dyn Fn(&CveRecord) -> Option<RankedList>),
    )?;
    if let Some(j) = pick(&a.journal, &paths.journal) {
        workflow = workflow.with_journal(&j)?;
    }
    if let Some(f) = pick(&a.feedback_log, &paths.feedback_log) {
        workflow = workflow.with_feedback_log(&f)?;
    }
    let bind = pick(&a.bind, &sc.bind).unwrap_or_else(|| "127.0.0.1:8080".into());
    let state = Arc::new(server::AppState { workflow });
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .worker_threads(ctx.jobs)
        .enable_all()
        .build()?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(&bind)
            .await
            .map_err(|e| ServiceError(format!("binding {bind}: {e}")))?;
        eprintln!("listening on http://{}", listener.local_addr()?);
        axum::serve(listener, server::router(state, static_dir))
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await?;
        Ok(())
    })
}

fn score_generated(ctx: &Context, a: crate::ScoreArgs) -> anyhow::Result<()> {
    let dataset = require_path(&a.dataset, &ctx.config.paths.dataset, "dataset")?;
    check_inputs([dataset.as_path(), a.predictions.as_path()])?;
    let predictions = read_predictions(File::open(&a.predictions)?)?;
    let report = macro_f1(&predictions, &read_rows(&dataset)?, &ctx.catalog);
    if a.json {
        println!("{}", serde_json::to_string_pretty(&report)?);
        return Ok(());
    }
    let labels: Vec<String> = report
        .classes
        .iter()
        .map(|c| match &c.class {
            LabelClass::Known(_) => c.label.clone(),
            LabelClass::Novel(_) => format!("{} *", c.label),
        })
        .collect();
    let width = labels.iter().map(String::len).max().unwrap_or(5).max(5);
    println!(
        "{:<width$}  {:>7}  {:>9}  {:>4}",
        "class", "support", "predicted", "F1"
    );
    for (c, label) in report.classes.iter().zip(&labels) {
        println!(
            "{label:<width$}  {:>7}  {:>9}  {:>4.2}",
            c.support, c.predicted, c.f1
        );
    }
    println!(
        "macro F1 {:.4} over {} classes",
        report.macro_f1,
        report.classes.len()
    );
    let novel: BTreeSet<&str> = report
        .classes
        .iter()
        .filter(|c| matches!(c.class, LabelClass::Novel(_)))
        .map(|c| c.label.as_str())
        .collect();
    if !novel.is_empty() {
        println!(
            "* generated text matching no catalog name ({})",
            novel.len()
        );
    }
    Ok(())
}
