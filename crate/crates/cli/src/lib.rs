//! Pipeline stages behind the `sidn` binary.
//!
//! Every stage reads and writes fixed file names inside one output
//! directory, so `gen-data`, `prep`, `embed`, `train`, `eval` and `explain`
//! compose without extra arguments.

pub mod config;
pub mod svg;

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use serde::{Deserialize, Serialize};
use sidn_core::corpus::{generate, read_corpus, write_corpus};
use sidn_core::dataset::{prepare, EncodedDataset};
use sidn_core::explain::{
    base_value, exact_shapley, force_data, kernel_shap, summary_aggregate, ForceData, ShapExplanation,
};
use sidn_core::metrics::{evaluate, MetricsReport, DEFAULT_THRESHOLD};
use sidn_core::model::{load_weights, save_weights, Model};
use sidn_core::textprep::{StopWords, Vocabulary};
use sidn_core::trainer::{fit_with, SplitValidator, TrainingHistory};
use sidn_core::word2vec::{build_embedding_matrix, train_cbow, WordVectors};

pub use config::RunConfig;

pub const CORPUS: &str = "corpus.csv";
pub const VOCAB: &str = "vocab.csv";
pub const ENCODED: &str = "encoded.bin";
pub const VECTORS: &str = "vectors.csv";
pub const WEIGHTS: &str = "weights.sidn";
pub const HISTORY: &str = "history.csv";
pub const METRICS: &str = "metrics.json";
pub const ROC: &str = "roc.csv";
pub const CONFUSION_SVG: &str = "confusion.svg";
pub const ROC_SVG: &str = "roc.svg";
pub const FORCE_JSON: &str = "explain_force.json";
pub const FORCE_SVG: &str = "force.svg";
pub const SUMMARY_CSV: &str = "shap_summary.csv";
pub const SUMMARY_SVG: &str = "shap_summary.svg";
pub const MANIFEST: &str = "manifest.json";

/// Resolved configuration plus the output directory.
#[derive(Debug, Clone)]
pub struct Ctx {
    pub cfg: RunConfig,
    pub seed: u64,
    pub out: PathBuf,
    pub hash: String,
}

impl Ctx {
    pub fn new(cfg: RunConfig, seed: u64, out: impl Into<PathBuf>) -> Result<Self> {
        let cfg = cfg.resolve(seed)?;
        let out = out.into();
        fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
        Ok(Self { hash: cfg.hash(), cfg, seed, out })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn create(&self, name: &str) -> Result<BufWriter<File>> {
        let p = self.path(name);
        Ok(BufWriter::new(File::create(&p).with_context(|| format!("creating {}", p.display()))?))
    }

    fn write_text(&self, name: &str, text: &str) -> Result<()> {
        let p = self.path(name);
        fs::write(&p, text).with_context(|| format!("writing {}", p.display()))
    }

    /// Records which command and configuration produced each file.
    fn record(&self, command: &str, files: &[&str]) -> Result<()> {
        let path = self.path(MANIFEST);
        let mut m: Manifest = match fs::read_to_string(&path) {
            Ok(text) => serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?,
            Err(_) => Manifest::default(),
        };
        for f in files {
            m.files.insert(
                f.to_string(),
                ManifestEntry { command: command.to_string(), config_hash: self.hash.clone(), seed: self.seed },
            );
        }
        self.write_text(MANIFEST, &(serde_json::to_string_pretty(&m)? + "\n"))
    }

    fn load_dataset(&self) -> Result<EncodedDataset> {
        let p = self.path(ENCODED);
        EncodedDataset::load(&p).with_context(|| format!("loading {} (run `prep` first)", p.display()))
    }

    fn load_vocab(&self) -> Result<Vocabulary> {
        let p = self.path(VOCAB);
        let f = File::open(&p).with_context(|| format!("opening {} (run `prep` first)", p.display()))?;
        Ok(Vocabulary::read_csv(f)?)
    }

    fn load_model(&self, data: &EncodedDataset) -> Result<Model> {
        let p = self.path(WEIGHTS);
        let model = load_weights(&p).with_context(|| format!("loading {} (run `train` first)", p.display()))?;
        let c = &model.config;
        ensure!(
            c.vocab_size == data.vocab_size && c.maxlen == data.maxlen,
            "weights expect vocabulary {} and length {}, dataset has {} and {}",
            c.vocab_size,
            c.maxlen,
            data.vocab_size,
            data.maxlen
        );
        Ok(model)
    }
}

#[derive(Debug, Default, Serialize, Deserialize)]
struct Manifest {
    files: BTreeMap<String, ManifestEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ManifestEntry {
    command: String,
    config_hash: String,
    seed: u64,
}

pub fn gen_data(ctx: &Ctx) -> Result<usize> {
    let docs = generate(&ctx.cfg.synthetic)?;
    write_corpus(&docs, ctx.create(CORPUS)?)?;
    ctx.record("gen-data", &[CORPUS])?;
    Ok(docs.len())
}

pub fn prep(ctx: &Ctx, input: &Path) -> Result<EncodedDataset> {
    let f = File::open(input).with_context(|| format!("opening corpus {}", input.display()))?;
    let read = read_corpus(f)?;
    if !read.errors.is_empty() {
        let lines: Vec<String> = read.errors.iter().map(|e| format!("  line {}: {}", e.line, e.message)).collect();
        bail!("{} malformed rows in {}:\n{}", read.errors.len(), input.display(), lines.join("\n"));
    }
    let p = prepare(&read.docs, &StopWords::shipped(), ctx.cfg.prep.vocab_size, ctx.cfg.prep.maxlen, ctx.seed)?;
    for &i in &p.empty_docs {
        eprintln!("warning: document {i} has no in-vocabulary tokens and is encoded as all padding");
    }
    p.vocab.write_csv(ctx.create(VOCAB)?)?;
    p.dataset.save(ctx.path(ENCODED))?;
    ctx.record("prep", &[VOCAB, ENCODED])?;
    Ok(p.dataset)
}

/// Trains embeddings on the in-vocabulary tokens of the training split.
pub fn embed(ctx: &Ctx) -> Result<WordVectors> {
    let data = ctx.load_dataset()?;
    let vocab = ctx.load_vocab()?;
    let sentences = data.sentences(&data.splits.train, &vocab)?;
    let vectors = train_cbow(&sentences, &ctx.cfg.word2vec)?;
    vectors.write_csv(ctx.create(VECTORS)?)?;
    ctx.record("embed", &[VECTORS])?;
    Ok(vectors)
}

pub fn train(ctx: &Ctx, on_epoch: &mut dyn FnMut(&sidn_core::trainer::EpochRecord)) -> Result<TrainingHistory> {
    let data = ctx.load_dataset()?;
    let vocab = ctx.load_vocab()?;
    let p = ctx.path(VECTORS);
    let vectors = WordVectors::read_csv(File::open(&p).with_context(|| format!("opening {} (run `embed` first)", p.display()))?)?;
    let emb = build_embedding_matrix(&vocab, &vectors);
    let mc = ctx.cfg.model.to_model_config(vocab.len(), data.maxlen, vectors.dim(), ctx.seed);
    let model = Model::build(mc, &emb)?;
    let examples = data.examples()?;
    ensure!(!data.splits.val.is_empty(), "validation split is empty");
    let mut validator = SplitValidator { data: &examples, indices: &data.splits.val };
    let (model, history) = fit_with(model, &examples, &data.splits.train, &ctx.cfg.train, &mut validator, on_epoch)?;
    save_weights(&model, ctx.path(WEIGHTS))?;
    history.write_csv(ctx.create(HISTORY)?)?;
    ctx.record("train", &[WEIGHTS, HISTORY])?;
    Ok(history)
}

/// Test-split probabilities and labels.
pub fn test_predictions(model: &Model, data: &EncodedDataset) -> Result<(Vec<f64>, Vec<u8>)> {
    let test = &data.splits.test;
    ensure!(!test.is_empty(), "test split is empty");
    let seqs: Vec<Vec<u32>> = data.sequences(test).into_iter().map(|s| s.indices).collect();
    let labels = test
        .iter()
        .map(|&i| data.labels[i].with_context(|| format!("document {i} has no label")))
        .collect::<Result<Vec<_>>>()?;
    Ok((model.predict_batch(&seqs)?, labels))
}

pub fn eval(ctx: &Ctx) -> Result<MetricsReport> {
    let data = ctx.load_dataset()?;
    let model = ctx.load_model(&data)?;
    let (probs, labels) = test_predictions(&model, &data)?;
    let (report, roc) = evaluate(&probs, &labels, DEFAULT_THRESHOLD)?;
    ctx.write_text(METRICS, &(serde_json::to_string_pretty(&report)? + "\n"))?;
    roc.write_csv(ctx.create(ROC)?)?;
    ctx.write_text(CONFUSION_SVG, &svg::confusion_svg(&report.confusion))?;
    ctx.write_text(ROC_SVG, &svg::roc_svg(&roc, report.auc.unwrap_or(f64::NAN)))?;
    ctx.record("eval", &[METRICS, ROC, CONFUSION_SVG, ROC_SVG])?;
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExplainMode {
    Force,
    Summary,
}

#[derive(Debug, Clone)]
pub struct ExplainOptions {
    pub mode: ExplainMode,
    /// Position within the test split (force mode).
    pub instance: usize,
    pub exact: bool,
    pub n_coalitions: Option<usize>,
}

#[derive(Debug, Serialize)]
pub struct ForceReport {
    /// Index of the explained document in the corpus.
    pub document: usize,
    pub method: &'static str,
    pub n_coalitions: Option<usize>,
    pub additivity_gap: f64,
    #[serde(flatten)]
    pub force: ForceData,
}

fn explain_one(ctx: &Ctx, model: &Model, data: &EncodedDataset, doc: usize, opts: &ExplainOptions, seed: u64) -> Result<ShapExplanation> {
    let seq = data.sequence(doc);
    let background = data.sequences(&data.splits.train[..ctx.cfg.explain.background.min(data.splits.train.len())]);
    if opts.exact {
        let mut e = exact_shapley(model, &seq, ctx.cfg.explain.max_exact)?;
        if !background.is_empty() {
            e.background_value = Some(base_value(model, &background)?);
        }
        Ok(e)
    } else {
        let n = opts.n_coalitions.unwrap_or(ctx.cfg.explain.n_coalitions);
        Ok(kernel_shap(model, &seq, &background, n, seed)?)
    }
}

pub enum ExplainOutput {
    Force(ForceReport),
    Summary(sidn_core::explain::GlobalSummary),
}

pub fn explain(ctx: &Ctx, opts: &ExplainOptions) -> Result<ExplainOutput> {
    let data = ctx.load_dataset()?;
    let vocab = ctx.load_vocab()?;
    let model = ctx.load_model(&data)?;
    let test = &data.splits.test;
    match opts.mode {
        ExplainMode::Force => {
            let doc = *test
                .get(opts.instance)
                .with_context(|| format!("test split has {} documents, asked for {}", test.len(), opts.instance))?;
            let e = explain_one(ctx, &model, &data, doc, opts, ctx.seed)?;
            let report = ForceReport {
                document: doc,
                method: if opts.exact { "exact" } else { "kernel" },
                n_coalitions: (!opts.exact).then(|| opts.n_coalitions.unwrap_or(ctx.cfg.explain.n_coalitions)),
                additivity_gap: e.additivity_gap(),
                force: force_data(&e, &vocab),
            };
            ctx.write_text(FORCE_JSON, &(serde_json::to_string_pretty(&report)? + "\n"))?;
            ctx.write_text(FORCE_SVG, &svg::force_svg(&report.force))?;
            ctx.record("explain", &[FORCE_JSON, FORCE_SVG])?;
            Ok(ExplainOutput::Force(report))
        }
        ExplainMode::Summary => {
            let docs = &test[..ctx.cfg.explain.instances.min(test.len())];
            ensure!(!docs.is_empty(), "no test documents to explain");
            let explanations = docs
                .iter()
                .enumerate()
                .map(|(k, &doc)| explain_one(ctx, &model, &data, doc, opts, ctx.seed.wrapping_add(k as u64)))
                .collect::<Result<Vec<_>>>()?;
            let summary = summary_aggregate(&explanations, &vocab)?;
            summary.write_csv(ctx.create(SUMMARY_CSV)?)?;
            ctx.write_text(SUMMARY_SVG, &svg::summary_svg(&summary, ctx.cfg.explain.top_k))?;
            ctx.record("explain", &[SUMMARY_CSV, SUMMARY_SVG])?;
            Ok(ExplainOutput::Summary(summary))
        }
    }
}
