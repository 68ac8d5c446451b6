//! `pepper` command line: corpus ingestion, model training and tagging,
//! ensembling, evaluation, corpus-scale analyses and the annotation server.

pub mod server;

use std::collections::{BTreeSet, HashMap};
use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use pepper::chunker::{self, ChunkConfig, ChunkModel};
use pepper::corpus::{
    corpus_stats, generate_synthetic_corpus, iob_to_spans, load_corpus, sample_test_set, split_train_dev, write_corpus,
    write_corpus_string, Format, LabeledReview, LoadOptions, Record, Review, Stratum, SyntheticConfig, TestSetRequest,
};
use pepper::docclf::{self, parse_groups, reference_subsets, DocConfig, DocModel, FeatureContext};
use pepper::ensemble::{
    bool_str, join_predictions, paired_confusion, parse_bool, read_labels_csv, read_predictions_csv,
    write_predictions_csv, Verdict,
};
use pepper::eval::{agreement_report, metrics_csv, metrics_table, score, MetricReport};
use pepper::stats::{
    chi_square_independence, fit_gee, gee_csv, gee_design, gee_report, professor_objectification_table,
    proportions_by_rating, proportions_csv, quarterly_logodds, trend_csv, DesignConfig, GeeData, GeeOptions,
    Predictions, WorkingCorrelation,
};
use pepper::textproc::{analyze, Lexicons, PosModel};

/// Exit status for a bad invocation.
pub const EXIT_USAGE: i32 = 2;
/// Exit status for invalid input or a failed run.
pub const EXIT_FAILURE: i32 = 1;

#[derive(Debug, Parser)]
#[command(
    name = "pepper",
    version,
    about = "Detect and analyze attractiveness commentary in professor reviews"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(tag = "subcommand", rename_all = "kebab-case")]
pub enum Command {
    /// Validate a corpus and print a summary; optionally write it back normalized.
    Ingest(IngestArgs),
    /// Write a seeded synthetic labeled corpus.
    Synth(SynthArgs),
    /// Train the chunk tagger on span-annotated reviews.
    TrainChunker(TrainChunkerArgs),
    /// Train the document classifier on document-labeled reviews.
    TrainDoc(TrainDocArgs),
    /// Tag reviews with the chunk tagger (IOB tags, spans and document label).
    Tag(TagArgs),
    /// Classify reviews with the document classifier.
    Classify(ClassifyArgs),
    /// Pair chunker and classifier labels into ensemble predictions.
    Ensemble(EnsembleArgs),
    /// Score predictions against gold labels, or compare two annotators.
    Eval(EvalArgs),
    /// Retrain the document classifier under feature-group masks.
    Ablate(AblateArgs),
    /// Draw the stratified test sample (agree-positive, agree-negative, disagree).
    SampleTest(SampleTestArgs),
    /// Quarterly log-odds of positive predictions.
    Trend(AnalysisArgs),
    /// Share of positive predictions by quality and difficulty rating.
    RatingProps(RatingPropsArgs),
    /// Professor gender by objectification chi-square test.
    GenderChisq(GenderChisqArgs),
    /// Logistic GEE of positive predictions on pepper, time, ratings and gender.
    Gee(GeeArgs),
    /// Serve the annotation HTTP API.
    Serve(ServeArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct CorpusInput {
    /// Corpus file (.jsonl or .csv).
    #[arg(long = "in", value_name = "PATH")]
    pub input: PathBuf,
    /// Skip malformed records instead of failing.
    #[arg(long)]
    pub lenient: bool,
}

#[derive(Debug, Args, Serialize)]
pub struct IngestArgs {
    #[command(flatten)]
    pub corpus: CorpusInput,
    /// Write the validated corpus here (format from extension).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 1000)]
    pub n: usize,
    #[arg(long, default_value_t = 0.1)]
    pub positive_rate: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct TrainChunkerArgs {
    #[command(flatten)]
    pub corpus: CorpusInput,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 20)]
    pub epochs: usize,
    #[arg(long, default_value_t = 1e-4)]
    pub l2: f64,
    #[arg(long, default_value_t = 0.1)]
    pub learning_rate: f64,
    #[arg(long, default_value_t = 16)]
    pub batch_size: usize,
    /// Feature values seen fewer times map to the unknown value.
    #[arg(long, default_value_t = 2)]
    pub min_count: usize,
}

#[derive(Debug, Args, Serialize)]
pub struct TrainDocArgs {
    #[command(flatten)]
    pub corpus: CorpusInput,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// SVM cost.
    #[arg(long, default_value_t = 1.0)]
    pub c: f64,
    #[arg(long, default_value_t = 50)]
    pub epochs: usize,
    /// Engineered feature groups: "all", "none" or names joined by "+".
    #[arg(long, default_value = "all")]
    pub features: String,
    /// Drop the tf-idf n-gram block.
    #[arg(long)]
    pub no_tfidf: bool,
    #[arg(long, default_value_t = 2)]
    pub min_df: usize,
}

#[derive(Debug, Args, Serialize)]
pub struct TagArgs {
    #[command(flatten)]
    pub corpus: CorpusInput,
    #[arg(long)]
    pub model: PathBuf,
    /// Output CSV `review_id,label,spans,iob`; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct ClassifyArgs {
    #[command(flatten)]
    pub corpus: CorpusInput,
    #[arg(long)]
    pub model: PathBuf,
    /// Output CSV `review_id,label,margin`; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct EnsembleArgs {
    /// Chunker labels (CSV with review_id,label).
    #[arg(long)]
    pub chunk: PathBuf,
    /// Classifier labels (CSV with review_id,label).
    #[arg(long)]
    pub doc: PathBuf,
    /// Paired predictions CSV.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Fail when an id appears in only one input.
    #[arg(long)]
    pub strict: bool,
}

#[derive(Debug, Args, Serialize)]
pub struct EvalArgs {
    /// Gold corpus with document labels.
    #[arg(long, required_unless_present = "annotators")]
    pub gold: Option<PathBuf>,
    /// Prediction CSV, optionally named: `NAME=PATH`. Repeatable.
    #[arg(long = "pred", value_name = "[NAME=]PATH")]
    pub preds: Vec<String>,
    /// Column holding the label in prediction files.
    #[arg(long, default_value = "label")]
    pub label_column: String,
    /// Compare two span-annotated corpora instead.
    #[arg(long, num_args = 2, value_names = ["A", "B"], conflicts_with_all = ["gold", "preds"])]
    pub annotators: Vec<PathBuf>,
    /// Metrics CSV, or agreement JSON with --annotators.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct AblateArgs {
    #[command(flatten)]
    pub corpus: CorpusInput,
    /// Seed for the train/dev split and training.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Comma-separated group subsets ("all", "none", "a+b"); defaults to the nine reference columns.
    #[arg(long)]
    pub subsets: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct SampleTestArgs {
    /// Paired predictions CSV from `ensemble`.
    #[arg(long)]
    pub records: PathBuf,
    /// Corpus supplying review dates for recency weighting.
    #[arg(long = "in", value_name = "PATH")]
    pub corpus: Option<PathBuf>,
    #[arg(long, default_value_t = 150)]
    pub agree_pos: usize,
    #[arg(long, default_value_t = 150)]
    pub agree_neg: usize,
    #[arg(long, default_value_t = 300)]
    pub disagree: usize,
    #[arg(long, default_value_t = 0.0)]
    pub recency_bias: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// CSV `review_id,stratum`; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct PredictionInput {
    #[command(flatten)]
    pub corpus: CorpusInput,
    /// Predictions CSV; `abstain` or empty values are excluded.
    #[arg(long)]
    pub pred: PathBuf,
    /// Label column; defaults to `ensemble2` when present, else `label`.
    #[arg(long)]
    pub label_column: Option<String>,
}

#[derive(Debug, Args, Serialize)]
pub struct AnalysisArgs {
    #[command(flatten)]
    pub input: PredictionInput,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct RatingPropsArgs {
    #[command(flatten)]
    pub input: PredictionInput,
    /// Comma-separated bin edges.
    #[arg(long, default_value = "1,2,3,4,5")]
    pub edges: String,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct GenderChisqArgs {
    #[command(flatten)]
    pub input: PredictionInput,
    /// Apply the Yates continuity correction.
    #[arg(long)]
    pub yates: bool,
    /// JSON result.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct GeeArgs {
    /// Corpus; requires --pred.
    #[arg(
        long = "in",
        value_name = "PATH",
        required_unless_present = "design",
        requires = "pred"
    )]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub pred: Option<PathBuf>,
    #[arg(long)]
    pub label_column: Option<String>,
    #[arg(long)]
    pub lenient: bool,
    /// Pre-built design rows (JSONL of {cluster, y, x: {term: value}}) instead of a corpus.
    #[arg(long, conflicts_with = "input")]
    pub design: Option<PathBuf>,
    #[arg(long, default_value = "exchangeable")]
    pub working_correlation: String,
    #[arg(long, default_value_t = 3.5)]
    pub quality_threshold: f64,
    #[arg(long, default_value_t = 3.5)]
    pub difficulty_threshold: f64,
    /// First day of the quarter counted as time 0.
    #[arg(long, default_value = "2010-01-01")]
    pub epoch: NaiveDate,
    #[arg(long, default_value_t = 100)]
    pub max_iter: usize,
    #[arg(long, default_value_t = 1e-8)]
    pub tol: f64,
    /// Coefficient CSV.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct ServeArgs {
    #[command(flatten)]
    pub corpus: CorpusInput,
    /// Paired predictions CSV from `ensemble`.
    #[arg(long)]
    pub pred: Option<PathBuf>,
    /// Append-only label journal.
    #[arg(long, default_value = "journal.jsonl")]
    pub journal: PathBuf,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
}

/// A bad invocation that clap could not catch.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

/// Parse and execute; returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { 0 };
        }
    };
    match execute(&cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                EXIT_USAGE
            } else {
                EXIT_FAILURE
            }
        }
    }
}

pub fn execute(cmd: &Command) -> Result<()> {
    match cmd {
        Command::Ingest(a) => ingest(a),
        Command::Synth(a) => synth(a),
        Command::TrainChunker(a) => train_chunker(a),
        Command::TrainDoc(a) => train_doc(a),
        Command::Tag(a) => tag(a),
        Command::Classify(a) => classify(a),
        Command::Ensemble(a) => ensemble(a),
        Command::Eval(a) => eval(a),
        Command::Ablate(a) => ablate(a),
        Command::SampleTest(a) => sample_test(a),
        Command::Trend(a) => trend(a),
        Command::RatingProps(a) => rating_props(a),
        Command::GenderChisq(a) => gender_chisq(a),
        Command::Gee(a) => gee(a),
        Command::Serve(a) => serve(a),
    }
    .and_then(|()| write_sidecar(cmd))
}

fn out_path(cmd: &Command) -> Option<&Path> {
    match cmd {
        Command::Ingest(a) => a.out.as_deref(),
        Command::Synth(a) => Some(&a.out),
        Command::TrainChunker(a) => Some(&a.out),
        Command::TrainDoc(a) => Some(&a.out),
        Command::Tag(a) => a.out.as_deref(),
        Command::Classify(a) => a.out.as_deref(),
        Command::Ensemble(a) => a.out.as_deref(),
        Command::Eval(a) => a.out.as_deref(),
        Command::Ablate(a) => a.out.as_deref(),
        Command::SampleTest(a) => a.out.as_deref(),
        Command::Trend(a) => a.out.as_deref(),
        Command::RatingProps(a) => a.out.as_deref(),
        Command::GenderChisq(a) => a.out.as_deref(),
        Command::Gee(a) => a.out.as_deref(),
        Command::Serve(_) => None,
    }
}

/// Sidecar path for an output file: `<out>.config.json`.
pub fn sidecar_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".config.json");
    PathBuf::from(s)
}

#[derive(Serialize)]
struct RunConfig<'a> {
    tool: &'static str,
    version: &'static str,
    #[serde(flatten)]
    command: &'a Command,
}

fn write_sidecar(cmd: &Command) -> Result<()> {
    let Some(out) = out_path(cmd) else {
        return Ok(());
    };
    let cfg = RunConfig {
        tool: "pepper",
        version: env!("CARGO_PKG_VERSION"),
        command: cmd,
    };
    let path = sidecar_path(out);
    fs::write(&path, serde_json::to_string_pretty(&cfg)? + "\n").with_context(|| format!("writing {}", path.display()))
}

fn load(input: &CorpusInput) -> Result<Vec<Record>> {
    load_path(&input.input, input.lenient)
}

fn load_path(path: &Path, lenient: bool) -> Result<Vec<Record>> {
    let opts = LoadOptions {
        format: Format::from_path(path),
        lenient,
        ..LoadOptions::default()
    };
    let report = load_corpus(path, &opts).with_context(|| format!("loading {}", path.display()))?;
    for e in &report.errors {
        eprintln!("warning: line {}: {}", e.line, e.message);
    }
    Ok(report.records)
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            std::io::stdout().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

fn labeled(records: &[Record]) -> Vec<&LabeledReview> {
    records.iter().filter_map(Record::labeled).collect()
}

fn doc_examples(records: &[Record]) -> Vec<(&Review, bool)> {
    records
        .iter()
        .filter_map(|r| r.doc_label().map(|l| (r.review(), l)))
        .collect()
}

#[derive(Serialize)]
struct IngestSummary {
    records: usize,
    unlabeled: usize,
    doc_labeled: usize,
    span_labeled: usize,
    positive: usize,
    reviews: usize,
    word_tokens: usize,
    word_types: usize,
}

fn ingest(a: &IngestArgs) -> Result<()> {
    let records = load(&a.corpus)?;
    let stats = corpus_stats(records.iter().map(Record::review));
    let count = |f: fn(&Record) -> bool| records.iter().filter(|r| f(r)).count();
    let summary = IngestSummary {
        records: records.len(),
        unlabeled: count(|r| matches!(r, Record::Unlabeled(_))),
        doc_labeled: count(|r| matches!(r, Record::DocLabeled(..))),
        span_labeled: count(|r| matches!(r, Record::Labeled(_))),
        positive: count(|r| r.doc_label() == Some(true)),
        reviews: stats.reviews,
        word_tokens: stats.word_tokens,
        word_types: stats.word_types,
    };
    println!("{}", serde_json::to_string_pretty(&summary)?);
    if let Some(out) = &a.out {
        write_corpus(out, &records, Format::from_path(out))?;
    }
    Ok(())
}

fn synth(a: &SynthArgs) -> Result<()> {
    let corpus = generate_synthetic_corpus(&SyntheticConfig {
        n_reviews: a.n,
        positive_rate: a.positive_rate,
        seed: a.seed,
        ..SyntheticConfig::default()
    })?;
    let records: Vec<Record> = corpus.into_iter().map(Record::Labeled).collect();
    write_corpus(&a.out, &records, Format::from_path(&a.out))?;
    eprintln!("wrote {} reviews to {}", records.len(), a.out.display());
    Ok(())
}

fn train_chunker(a: &TrainChunkerArgs) -> Result<()> {
    let records = load(&a.corpus)?;
    let corpus = labeled(&records);
    if corpus.is_empty() {
        bail!("{} has no span-annotated reviews", a.corpus.input.display());
    }
    let cfg = ChunkConfig {
        l2_lambda: a.l2,
        epochs: a.epochs,
        learning_rate: a.learning_rate,
        batch_size: a.batch_size,
        min_count: a.min_count,
        seed: a.seed,
    };
    let lexicons = Lexicons::default();
    let model = chunker::train(&corpus, &cfg, PosModel::bundled(), lexicons.hot())?;
    model.save(&a.out)?;
    eprintln!(
        "trained on {} reviews: {} features, final loss {:.5}",
        corpus.len(),
        model.n_features(),
        model.loss_history.last().copied().unwrap_or(f64::NAN)
    );
    Ok(())
}

fn train_doc(a: &TrainDocArgs) -> Result<()> {
    let records = load(&a.corpus)?;
    let examples = doc_examples(&records);
    let cfg = DocConfig {
        c: a.c,
        epochs: a.epochs,
        min_df: a.min_df,
        use_tfidf: !a.no_tfidf,
        groups: parse_groups(&a.features).map_err(usage)?,
        seed: a.seed,
        ..DocConfig::default()
    };
    let lexicons = Lexicons::default();
    let model = docclf::train(&examples, &cfg, &FeatureContext::new(&lexicons))?;
    model.save(&a.out)?;
    eprintln!(
        "trained on {} reviews ({} positive): {} n-gram terms",
        examples.len(),
        examples.iter().filter(|e| e.1).count(),
        model.vocab.len()
    );
    Ok(())
}

fn csv_string(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    Ok(String::from_utf8(w.into_inner()?)?)
}

fn tag(a: &TagArgs) -> Result<()> {
    let records = load(&a.corpus)?;
    let model = ChunkModel::load(&a.model).with_context(|| format!("loading {}", a.model.display()))?;
    let pos = PosModel::bundled();
    let mut rows = Vec::with_capacity(records.len());
    for r in &records {
        let review = r.review();
        let tokens = analyze(&review.text, pos);
        let iob = model.decode(&tokens)?;
        let spans = iob_to_spans(&tokens, &iob)
            .iter()
            .map(|(s, e)| format!("{s}-{e}"))
            .collect::<Vec<_>>()
            .join(";");
        rows.push(vec![
            review.review_id.clone(),
            bool_str(chunker::doc_label(&iob)).to_string(),
            spans,
            iob.iter().map(|t| t.as_str()).collect::<Vec<_>>().join(" "),
        ]);
    }
    emit(
        a.out.as_deref(),
        &csv_string(&["review_id", "label", "spans", "iob"], rows)?,
    )
}

fn classify(a: &ClassifyArgs) -> Result<()> {
    let records = load(&a.corpus)?;
    let model = DocModel::load(&a.model).with_context(|| format!("loading {}", a.model.display()))?;
    let ctx = FeatureContext::new(&model.lexicons);
    let rows = records.iter().map(|r| {
        let p = model.predict_with(r.review(), &ctx);
        vec![
            r.review().review_id.clone(),
            bool_str(p.label).to_string(),
            p.margin.to_string(),
        ]
    });
    emit(a.out.as_deref(), &csv_string(&["review_id", "label", "margin"], rows)?)
}

fn read_labels(path: &Path, column: &str) -> Result<Vec<(String, bool)>> {
    let f = fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    read_labels_csv(f, column).with_context(|| format!("reading {}", path.display()))
}

fn ensemble(a: &EnsembleArgs) -> Result<()> {
    let chunk = read_labels(&a.chunk, "label")?;
    let doc = read_labels(&a.doc, "label")?;
    let (records, missing) = join_predictions(&chunk, &doc);
    if !missing.is_empty() {
        let shown: Vec<&str> = missing.iter().take(5).map(String::as_str).collect();
        let msg = format!(
            "{} ids appear in only one input (e.g. {})",
            missing.len(),
            shown.join(", ")
        );
        if a.strict {
            bail!(msg);
        }
        eprintln!("warning: {msg}");
    }
    let s = paired_confusion(&records)?;
    let c = &s.counts;
    println!("reviews: {}", c.total());
    println!("both positive: {}", c.both_pos);
    println!("chunker positive, classifier negative: {}", c.chunk_pos_doc_neg);
    println!("chunker negative, classifier positive: {}", c.chunk_neg_doc_pos);
    println!("both negative: {}", c.both_neg);
    println!(
        "disagreement rate: {:.2}% ({}/{})",
        100.0 * s.disagreement_rate,
        c.disagreements(),
        c.total()
    );
    println!("ensemble-1 positive: {}", c.both_pos);
    println!("ensemble-2 retained: {}", s.ensemble2_retained);
    if let Some(out) = &a.out {
        let f = fs::File::create(out).with_context(|| format!("creating {}", out.display()))?;
        write_predictions_csv(&records, f)?;
    }
    Ok(())
}

fn eval(a: &EvalArgs) -> Result<()> {
    if let [pa, pb] = a.annotators.as_slice() {
        let ra = load_path(pa, false)?;
        let rb = load_path(pb, false)?;
        let la: Vec<LabeledReview> = labeled(&ra).into_iter().cloned().collect();
        let lb: Vec<LabeledReview> = labeled(&rb).into_iter().cloned().collect();
        let report = agreement_report(&la, &lb)?;
        print!("{}", report.to_text());
        if let Some(out) = &a.out {
            fs::write(out, serde_json::to_string_pretty(&report)? + "\n")?;
        }
        return Ok(());
    }
    let gold_path = a.gold.as_ref().ok_or_else(|| usage("--gold is required"))?;
    if a.preds.is_empty() {
        return Err(usage("at least one --pred is required"));
    }
    let gold: HashMap<String, bool> = load_path(gold_path, false)?
        .iter()
        .filter_map(|r| r.doc_label().map(|l| (r.review().review_id.clone(), l)))
        .collect();
    if gold.is_empty() {
        bail!("{} has no labeled reviews", gold_path.display());
    }
    let mut rows: Vec<(String, MetricReport)> = Vec::new();
    for spec in &a.preds {
        let (name, path) = match spec.split_once('=') {
            Some((n, p)) => (n.to_string(), PathBuf::from(p)),
            None => {
                let p = PathBuf::from(spec);
                let n = p
                    .file_stem()
                    .map_or_else(|| spec.clone(), |s| s.to_string_lossy().into_owned());
                (n, p)
            }
        };
        let preds: HashMap<String, bool> = read_labels(&path, &a.label_column)?.into_iter().collect();
        let mut ids: Vec<&String> = gold.keys().collect();
        ids.sort();
        let missing: Vec<&str> = ids
            .iter()
            .filter(|id| !preds.contains_key(**id))
            .map(|s| s.as_str())
            .collect();
        if !missing.is_empty() {
            bail!(
                "{}: no prediction for {} gold reviews (e.g. {})",
                path.display(),
                missing.len(),
                missing[0]
            );
        }
        let p: Vec<bool> = ids.iter().map(|id| preds[*id]).collect();
        let g: Vec<bool> = ids.iter().map(|id| gold[*id]).collect();
        rows.push((name, score(&p, &g)?));
    }
    print!("{}", metrics_table(&rows));
    if let Some(out) = &a.out {
        fs::write(out, metrics_csv(&rows))?;
    }
    Ok(())
}

fn ablate(a: &AblateArgs) -> Result<()> {
    let records = load(&a.corpus)?;
    let corpus: Vec<LabeledReview> = labeled(&records).into_iter().cloned().collect();
    let split = split_train_dev(&corpus, a.seed)?;
    let (train, dev) = split.partition(&corpus);
    let subsets = match &a.subsets {
        None => reference_subsets(),
        Some(s) => s
            .split(',')
            .map(|g| parse_groups(g.trim()))
            .collect::<Result<Vec<_>, _>>()
            .map_err(usage)?,
    };
    let lexicons = Lexicons::default();
    let tr: Vec<(&Review, bool)> = train.iter().map(|l| (&l.review, l.doc_label)).collect();
    let dv: Vec<(&Review, bool)> = dev.iter().map(|l| (&l.review, l.doc_label)).collect();
    let cfg = DocConfig {
        seed: a.seed,
        ..DocConfig::default()
    };
    let rows = docclf::ablate(&tr, &dv, &cfg, &subsets, &FeatureContext::new(&lexicons))?;
    emit(a.out.as_deref(), &docclf::ablation_csv(&rows))
}

fn sample_test(a: &SampleTestArgs) -> Result<()> {
    let f = fs::File::open(&a.records).with_context(|| format!("opening {}", a.records.display()))?;
    let preds = read_predictions_csv(f)?;
    let dates: HashMap<String, NaiveDate> = match &a.corpus {
        Some(p) => load_path(p, false)?
            .iter()
            .map(|r| (r.review().review_id.clone(), r.review().date))
            .collect(),
        None => HashMap::new(),
    };
    let req = TestSetRequest {
        n_agree_pos: a.agree_pos,
        n_agree_neg: a.agree_neg,
        n_disagree: a.disagree,
        recency_bias: a.recency_bias,
        seed: a.seed,
    };
    let ids = sample_test_set(&preds, &dates, &req)?;
    let by_id: HashMap<&str, Stratum> = preds.iter().map(|p| (p.review_id.as_str(), Stratum::of(p))).collect();
    let rows = ids.iter().map(|id| vec![id.clone(), by_id[id.as_str()].to_string()]);
    emit(a.out.as_deref(), &csv_string(&["review_id", "stratum"], rows)?)
}

/// Review-level labels from a CSV. Picks `column`, else `ensemble2`, else
/// `label`; values may be booleans or verdicts, and abstentions are dropped.
pub fn load_predictions(path: &Path, column: Option<&str>) -> Result<Predictions> {
    let mut rd = csv::Reader::from_path(path).with_context(|| format!("opening {}", path.display()))?;
    let headers = rd.headers()?.clone();
    let find = |n: &str| headers.iter().position(|h| h.trim() == n);
    let id_col = find("review_id").ok_or_else(|| anyhow!("{}: no review_id column", path.display()))?;
    let col = match column {
        Some(c) => find(c).ok_or_else(|| anyhow!("{}: no {c} column", path.display()))?,
        None => find("ensemble2")
            .or_else(|| find("label"))
            .ok_or_else(|| anyhow!("{}: no ensemble2 or label column", path.display()))?,
    };
    let mut out = Predictions::new();
    for (i, row) in rd.records().enumerate() {
        let row = row?;
        let v = row.get(col).unwrap_or("").trim();
        let label = if v.is_empty() {
            None
        } else if let Ok(b) = parse_bool(v) {
            Some(b)
        } else {
            v.parse::<Verdict>()
                .map_err(|e| anyhow!("{} line {}: {e}", path.display(), i + 2))?
                .as_bool()
        };
        if let Some(l) = label {
            out.insert(row.get(id_col).unwrap_or("").to_string(), l);
        }
    }
    Ok(out)
}

fn analysis_input(p: &PredictionInput) -> Result<(Vec<Review>, Predictions)> {
    let records = load(&p.corpus)?;
    let preds = load_predictions(&p.pred, p.label_column.as_deref())?;
    Ok((records.iter().map(|r| r.review().clone()).collect(), preds))
}

fn trend(a: &AnalysisArgs) -> Result<()> {
    let (reviews, preds) = analysis_input(&a.input)?;
    emit(a.out.as_deref(), &trend_csv(&quarterly_logodds(&reviews, &preds)))
}

fn rating_props(a: &RatingPropsArgs) -> Result<()> {
    let edges: Vec<f64> = a
        .edges
        .split(',')
        .map(|s| s.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|e| usage(format!("--edges: {e}")))?;
    if edges.len() < 2 || edges.windows(2).any(|w| w[0] >= w[1]) {
        return Err(usage("--edges needs at least two strictly increasing values"));
    }
    let (reviews, preds) = analysis_input(&a.input)?;
    emit(
        a.out.as_deref(),
        &proportions_csv(&proportions_by_rating(&reviews, &preds, &edges)),
    )
}

fn gender_chisq(a: &GenderChisqArgs) -> Result<()> {
    let (reviews, preds) = analysis_input(&a.input)?;
    let t = professor_objectification_table(&reviews, &preds, &Lexicons::default())?;
    let r = chi_square_independence(&t.table, a.yates)?;
    let rate = |x: Option<f64>| x.map_or_else(|| "-".into(), |v| format!("{:.1}%", 100.0 * v));
    println!("{:<8} {:>8} {:>8} {:>7}", "", "has", "has_not", "rate");
    for (i, label) in t.table.row_labels.iter().enumerate() {
        let rt = if i == 0 { t.female_rate } else { t.male_rate };
        println!(
            "{label:<8} {:>8} {:>8} {:>7}",
            t.table.counts[i][0],
            t.table.counts[i][1],
            rate(rt)
        );
    }
    println!("unknown gender excluded: {}", t.unknown_gender_excluded);
    println!(
        "chi2 = {:.2}, dof = {}, p = {:.3e}{}",
        r.chi2,
        r.dof,
        r.p_value,
        if a.yates { " (Yates)" } else { "" }
    );
    if let Some(out) = &a.out {
        let v = serde_json::json!({ "table": t, "test": r, "yates": a.yates });
        fs::write(out, serde_json::to_string_pretty(&v)? + "\n")?;
    }
    Ok(())
}

#[derive(serde::Deserialize)]
struct DesignRow {
    cluster: String,
    y: bool,
    x: serde_json::Map<String, serde_json::Value>,
}

/// Rows `{cluster, y, x: {term: value}}`; term order is taken from the first row.
pub fn read_design(path: &Path) -> Result<GeeData> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut data = GeeData {
        names: Vec::new(),
        x: Vec::new(),
        y: Vec::new(),
        cluster: Vec::new(),
    };
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let row: DesignRow = serde_json::from_str(line).with_context(|| format!("line {}", i + 1))?;
        if data.names.is_empty() {
            data.names = row.x.keys().cloned().collect();
        }
        let keys: BTreeSet<&String> = row.x.keys().collect();
        if keys != data.names.iter().collect() {
            bail!("line {}: terms differ from the first row", i + 1);
        }
        let x = data
            .names
            .iter()
            .map(|n| {
                row.x[n]
                    .as_f64()
                    .ok_or_else(|| anyhow!("line {}: {n} is not a number", i + 1))
            })
            .collect::<Result<Vec<f64>>>()?;
        data.x.push(x);
        data.y.push(row.y);
        data.cluster.push(row.cluster);
    }
    Ok(data)
}

fn gee(a: &GeeArgs) -> Result<()> {
    let working_correlation: WorkingCorrelation = a.working_correlation.parse().map_err(usage)?;
    let data = match (&a.design, &a.input, &a.pred) {
        (Some(d), _, _) => read_design(d)?,
        (None, Some(input), Some(pred)) => {
            let records = load_path(input, a.lenient)?;
            let reviews: Vec<Review> = records.iter().map(|r| r.review().clone()).collect();
            let preds = load_predictions(pred, a.label_column.as_deref())?;
            let cfg = DesignConfig {
                epoch: a.epoch,
                quality_threshold: a.quality_threshold,
                difficulty_threshold: a.difficulty_threshold,
            };
            let (data, s) = gee_design(&reviews, &preds, &cfg, &Lexicons::default());
            eprintln!(
                "rows used: {} (excluded: {} without prediction, {} missing ratings, {} unknown gender, {} before epoch)",
                s.used, s.no_prediction, s.missing_rating, s.unknown_gender, s.before_epoch
            );
            data
        }
        _ => return Err(usage("give --design, or --in with --pred")),
    };
    let fit = fit_gee(
        &data,
        &GeeOptions {
            working_correlation,
            max_iter: a.max_iter,
            tol: a.tol,
            ..GeeOptions::default()
        },
    )?;
    print!("{}", gee_report(&fit));
    if let Some(out) = &a.out {
        fs::write(out, gee_csv(&fit))?;
    }
    Ok(())
}

fn serve(a: &ServeArgs) -> Result<()> {
    let records = load(&a.corpus)?;
    let preds = match &a.pred {
        Some(p) => read_predictions_csv(fs::File::open(p).with_context(|| format!("opening {}", p.display()))?)?,
        None => Vec::new(),
    };
    let state = server::AppState::new(records, preds, a.journal.clone())?;
    let addr = format!("{}:{}", a.host, a.port);
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(&addr)
            .await
            .with_context(|| format!("binding {addr}"))?;
        eprintln!("serving on http://{addr}/api/v1");
        axum::serve(listener, server::router(state)).await?;
        Ok::<(), anyhow::Error>(())
    })
}

/// Corpus text of `records`, for tests and export.
pub fn corpus_jsonl(records: &[Record]) -> Result<String> {
    Ok(write_corpus_string(records, Format::Jsonl)?)
}
