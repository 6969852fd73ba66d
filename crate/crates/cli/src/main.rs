use std::fs;
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use opclass_core::bpso::BpsoConfig;
use opclass_core::dataset::{
    class_summary, read_csv, read_jsonl_records, write_csv, write_jsonl_records, LabeledDataset,
    RawRecord,
};
use opclass_core::disasm::{disassemble, listing, parse_hex};
use opclass_core::features::{extract_code_features, FeatureSchema, SchemaKind};
use opclass_core::ingest::{fetch_many, is_address, normalize_corpus, RpcEndpoint};
use opclass_core::metrics::{evaluate, EvalReport};
use opclass_core::pipeline::{cross_validate, train, Algorithm, Classifier, CrossvalConfig, TrainedModel};
use opclass_core::synth::{bytecode_corpus, tabular, BytecodeSpec, TabularSpec};
use opclass_core::tree::TrainControl;
use opclass_core::Error;

#[derive(Parser)]
#[command(name = "opclass", version, about = "Classify Ethereum contracts from their bytecode")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the instruction listing of hex bytecode.
    Disasm(DisasmArgs),
    /// Extract feature vectors from a raw corpus, or from one bytecode.
    Extract(ExtractArgs),
    /// Fit a model on a labeled corpus.
    Train(TrainArgs),
    /// Predict the category of contracts with a saved model.
    Classify(ClassifyArgs),
    /// Score a saved model on a labeled corpus.
    Evaluate(EvaluateArgs),
    /// Stratified k-fold cross-validation of one algorithm.
    Crossval(CrossvalArgs),
    /// Download deployed bytecode over JSON-RPC.
    Fetch(FetchArgs),
    /// Rewrite a hex directory or JSONL corpus as canonical JSONL.
    Normalize(NormalizeArgs),
    /// Write a seeded synthetic corpus.
    Synth(SynthArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum FeatureSet {
    /// Opcode families and code size only.
    Code,
    /// Code features plus account and transaction features.
    Full,
    /// Whatever columns a CSV corpus carries.
    Custom,
}

impl FeatureSet {
    fn kind(self) -> SchemaKind {
        match self {
            FeatureSet::Code => SchemaKind::Code0day,
            FeatureSet::Full => SchemaKind::Full,
            FeatureSet::Custom => SchemaKind::Custom,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum AlgorithmArg {
    C45,
    Adaboost,
    BpsoC45,
    BpsoAdaboost,
}

impl From<AlgorithmArg> for Algorithm {
    fn from(a: AlgorithmArg) -> Self {
        match a {
            AlgorithmArg::C45 => Algorithm::C45,
            AlgorithmArg::Adaboost => Algorithm::AdaBoost,
            AlgorithmArg::BpsoC45 => Algorithm::BpsoC45,
            AlgorithmArg::BpsoAdaboost => Algorithm::BpsoAdaBoost,
        }
    }
}

#[derive(Args)]
struct DisasmArgs {
    /// Hex bytecode, with or without 0x.
    #[arg(conflicts_with = "file")]
    hex: Option<String>,
    /// Read hex from a file ("-" for stdin).
    #[arg(long)]
    file: Option<PathBuf>,
}

#[derive(Args)]
struct ExtractArgs {
    /// Hex bytecode to extract code features from.
    #[arg(conflicts_with = "corpus")]
    hex: Option<String>,
    /// JSONL corpus of raw records.
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "code")]
    features: FeatureSet,
    /// CSV output; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Learner and optimizer settings shared by `train` and `crossval`.
#[derive(Args, Clone)]
struct LearnArgs {
    #[arg(long, value_enum, default_value = "bpso-adaboost")]
    algorithm: AlgorithmArg,
    #[arg(long)]
    seed: u64,
    /// Boosting rounds T.
    #[arg(long, default_value_t = 30)]
    rounds: usize,
    /// Swarm size N.
    #[arg(long, default_value_t = 30)]
    swarm_size: usize,
    /// Generation limit G_max.
    #[arg(long, default_value_t = 50)]
    generations: usize,
    #[arg(long, default_value_t = 0.73)]
    inertia: f64,
    #[arg(long, default_value_t = 1.5)]
    c1: f64,
    #[arg(long, default_value_t = 1.5)]
    c2: f64,
    #[arg(long, default_value_t = 6.0)]
    v_max: f64,
    /// Folds of the cross-validation inside each fitness evaluation.
    #[arg(long, default_value_t = 3)]
    inner_folds: usize,
    #[arg(long, default_value_t = 2.0)]
    min_leaf_weight: f64,
    #[arg(long, default_value_t = 25)]
    max_depth: usize,
    #[arg(long, default_value_t = 1.0)]
    laplace_alpha: f64,
}

impl LearnArgs {
    fn bpso(&self) -> BpsoConfig {
        BpsoConfig {
            swarm_size: self.swarm_size,
            generation_limit: self.generations,
            inertia: self.inertia,
            c1: self.c1,
            c2: self.c2,
            v_max: self.v_max,
            boosting_rounds: self.rounds,
            inner_folds: self.inner_folds,
            seed: self.seed,
            tree: TrainControl {
                min_leaf_weight: self.min_leaf_weight,
                max_depth: self.max_depth,
                laplace_alpha: self.laplace_alpha,
            },
        }
    }
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long, value_enum, default_value = "code")]
    features: FeatureSet,
    #[arg(long)]
    model_out: PathBuf,
    /// JSON training report (selected features, swarm history).
    #[arg(long)]
    report: Option<PathBuf>,
    #[command(flatten)]
    learn: LearnArgs,
}

#[derive(Args)]
struct ClassifyArgs {
    #[arg(long)]
    model: PathBuf,
    /// Hex bytecode to classify.
    #[arg(conflicts_with = "records")]
    hex: Option<String>,
    /// JSONL of raw records (needed for full-feature models).
    #[arg(long)]
    records: Option<PathBuf>,
    /// Print JSON lines instead of text.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct CrossvalArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long, value_enum, default_value = "code")]
    features: FeatureSet,
    #[arg(long, default_value_t = 10)]
    folds: usize,
    #[arg(long)]
    report: Option<PathBuf>,
    #[command(flatten)]
    learn: LearnArgs,
}

#[derive(Args)]
struct FetchArgs {
    /// JSON-RPC endpoint; OPCLASS_RPC_URL overrides it.
    #[arg(long, default_value = "http://127.0.0.1:8545")]
    rpc_url: String,
    #[arg(long = "address")]
    addresses: Vec<String>,
    /// File with one address per line.
    #[arg(long)]
    addresses_file: Option<PathBuf>,
    /// Category attached to every fetched record.
    #[arg(long)]
    category: Option<String>,
    #[arg(long, default_value_t = 4)]
    max_in_flight: usize,
    #[arg(long, default_value_t = 30)]
    timeout_secs: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct NormalizeArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args)]
struct SynthArgs {
    #[command(subcommand)]
    kind: SynthKind,
}

#[derive(Subcommand)]
enum SynthKind {
    /// Raw contract records (JSONL) with category-specific opcode mixes.
    Bytecode {
        #[arg(long, default_value_t = 20)]
        per_class: usize,
        #[arg(long, default_value_t = 6)]
        classes: usize,
        #[arg(long)]
        seed: u64,
        /// Include balance, nonce and transactions.
        #[arg(long)]
        with_account: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Six imbalanced Gaussian classes, 5 informative and 15 noise columns (CSV).
    Tabular {
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 1.6)]
        separation: f64,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Settings echoed into reports.
#[derive(Serialize)]
struct RunConfig<'a> {
    mode: &'a str,
    corpus: &'a Path,
    feature_set: FeatureSet,
}

#[derive(Serialize)]
struct CrossvalOutput<'a> {
    run: RunConfig<'a>,
    #[serde(flatten)]
    report: &'a opclass_core::CrossvalReport,
    selected_features: Vec<String>,
}

#[derive(Serialize)]
struct TrainOutput<'a> {
    run: RunConfig<'a>,
    algorithm: Algorithm,
    seed: u64,
    config: &'a BpsoConfig,
    class_counts: std::collections::BTreeMap<String, usize>,
    selected_features: Vec<String>,
    selection: Option<&'a opclass_core::pipeline::SelectionSummary>,
}

#[derive(Serialize)]
struct EvaluateOutput<'a> {
    model: &'a Path,
    corpus: &'a Path,
    class_names: &'a [String],
    report: &'a EvalReport,
}

#[derive(Serialize)]
struct Prediction<'a> {
    address: Option<&'a str>,
    class: &'a str,
    probabilities: Vec<(&'a str, f64)>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

/// 2 for malformed input or configuration, 3 for schema mismatches, 1 otherwise.
fn exit_code(e: &anyhow::Error) -> u8 {
    let Some(core) = e.chain().find_map(|c| c.downcast_ref::<Error>()) else {
        return 1;
    };
    match core {
        Error::SchemaMismatch(_) | Error::SchemaHeaderMismatch { .. } => 3,
        Error::OddLength { .. }
        | Error::NonHexCharacter { .. }
        | Error::UnknownLabel { .. }
        | Error::RaggedRow { .. }
        | Error::BadRecord { .. }
        | Error::EmptyClass(_)
        | Error::BadFoldCount(_)
        | Error::InvalidConfig(_)
        | Error::BadAddress(_)
        | Error::EmptyDataset
        | Error::MaskEmpty
        | Error::Json(_)
        | Error::Csv(_) => 2,
        _ => 1,
    }
}

fn run(command: Command) -> anyhow::Result<()> {
    match command {
        Command::Disasm(a) => cmd_disasm(a),
        Command::Extract(a) => cmd_extract(a),
        Command::Train(a) => cmd_train(a),
        Command::Classify(a) => cmd_classify(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Crossval(a) => cmd_crossval(a),
        Command::Fetch(a) => cmd_fetch(a),
        Command::Normalize(a) => cmd_normalize(a),
        Command::Synth(a) => cmd_synth(a),
    }
}

fn read_text(path: &Path) -> anyhow::Result<String> {
    if path == Path::new("-") {
        let mut s = String::new();
        io::stdin().read_to_string(&mut s)?;
        Ok(s)
    } else {
        fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
    }
}

fn cmd_disasm(a: DisasmArgs) -> anyhow::Result<()> {
    let text = match (a.hex, a.file) {
        (Some(h), _) => h,
        (None, Some(f)) => read_text(&f)?,
        (None, None) => String::new(),
    };
    let code = parse_hex(&text)?;
    print!("{}", listing(&disassemble(&code)));
    Ok(())
}

/// Loads a labeled corpus: JSONL raw records are featurized under `kind`, CSV
/// files must carry that schema's header (any header for `custom`).
fn load_corpus(path: &Path, kind: SchemaKind) -> anyhow::Result<LabeledDataset> {
    let jsonl = matches!(path.extension().and_then(|e| e.to_str()), Some("jsonl" | "json"));
    if jsonl && kind == SchemaKind::Custom {
        bail!(Error::InvalidConfig("JSONL corpora need --features code or full".into()));
    }
    let ds = opclass_core::dataset::read_corpus(path, kind)
        .with_context(|| format!("loading corpus {}", path.display()))?;
    if ds.is_empty() {
        bail!(Error::EmptyDataset);
    }
    Ok(ds)
}

fn write_output(path: Option<&Path>, text: &str) -> anyhow::Result<()> {
    match path {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            io::stdout().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

fn cmd_extract(a: ExtractArgs) -> anyhow::Result<()> {
    if let Some(hex) = a.hex {
        let code = parse_hex(&hex)?;
        let features = extract_code_features(&code);
        let schema = FeatureSchema::code_0day();
        let vector = opclass_core::features::assemble_vector(&features, None, &schema)?;
        let map: serde_json::Map<String, serde_json::Value> = schema
            .feature_names
            .iter()
            .zip(vector.as_slice())
            .map(|(n, &v)| (n.clone(), serde_json::json!(v as u64)))
            .collect();
        println!("{}", serde_json::to_string_pretty(&map)?);
        return Ok(());
    }
    let Some(corpus) = a.corpus else {
        bail!(Error::InvalidConfig("give a hex string or --corpus".into()));
    };
    let ds = load_corpus(&corpus, a.features.kind())?;
    match &a.out {
        Some(p) => write_csv(&ds, p)?,
        None => {
            let mut w = csv::Writer::from_writer(io::stdout());
            opclass_core::dataset::write_csv_to(&ds, &mut w)?;
        }
    }
    Ok(())
}

fn cmd_train(a: TrainArgs) -> anyhow::Result<()> {
    let ds = load_corpus(&a.corpus, a.features.kind())?;
    let cfg = a.learn.bpso();
    let algorithm = Algorithm::from(a.learn.algorithm);
    let model = train(&ds, algorithm, &cfg)?;
    model.save(&a.model_out)?;
    let selected = match &model.classifier {
        Classifier::Boosted(m) => m.selected_feature_names(),
        Classifier::Tree { schema, .. } => schema.feature_names.clone(),
    };
    log::info!("trained {algorithm} on {} samples", ds.len());
    if let Some(report) = &a.report {
        let out = TrainOutput {
            run: RunConfig {
                mode: "train",
                corpus: &a.corpus,
                feature_set: a.features,
            },
            algorithm,
            seed: cfg.seed,
            config: &cfg,
            class_counts: class_summary(&ds),
            selected_features: selected,
            selection: model.selection.as_ref(),
        };
        fs::write(report, serde_json::to_string_pretty(&out)? + "\n")?;
    }
    Ok(())
}

fn cmd_classify(a: ClassifyArgs) -> anyhow::Result<()> {
    let model = TrainedModel::load(&a.model)
        .with_context(|| format!("loading model {}", a.model.display()))?;
    let classifier = &model.classifier;
    let schema = classifier.schema();
    let records: Vec<RawRecord> = match (a.hex, &a.records) {
        (Some(hex), _) => vec![RawRecord {
            address: String::new(),
            bytecode: hex,
            category: None,
            balance: None,
            nonce: None,
            txs: None,
        }],
        (None, Some(path)) => read_jsonl_records(path)?,
        (None, None) => bail!(Error::InvalidConfig("give a hex string or --records".into())),
    };
    let names = classifier.class_names();
    let mut out = String::new();
    for rec in &records {
        if schema.requires_account() && !rec.has_account() {
            bail!(Error::SchemaMismatch(
                "full-feature model needs balance, nonce and transactions".into()
            ));
        }
        let x = rec.to_vector(schema)?;
        let proba = classifier.predict_proba(&x)?;
        let class = &names[classifier.predict(&x)?];
        let address = (!rec.address.is_empty()).then_some(rec.address.as_str());
        if a.json {
            let p = Prediction {
                address,
                class,
                probabilities: names.iter().map(String::as_str).zip(proba.iter().copied()).collect(),
            };
            out += &serde_json::to_string(&p)?;
        } else {
            if let Some(addr) = address {
                out += addr;
                out.push('\t');
            }
            out += class;
            for (n, p) in names.iter().zip(&proba) {
                out += &format!("\t{n}={p}");
            }
        }
        out.push('\n');
    }
    write_output(None, &out)
}

/// Re-indexes a corpus onto the model's class order.
fn align_classes(ds: &LabeledDataset, classes: &[String]) -> anyhow::Result<LabeledDataset> {
    let mut aligned = LabeledDataset::new(ds.schema().clone(), classes.to_vec());
    for i in 0..ds.len() {
        let name = &ds.class_names()[ds.label(i)];
        let Some(label) = classes.iter().position(|c| c == name) else {
            bail!(Error::UnknownLabel {
                line: i + 1,
                label: name.clone(),
            });
        };
        aligned.push(ds.vector(i), label)?;
    }
    Ok(aligned)
}

fn cmd_evaluate(a: EvaluateArgs) -> anyhow::Result<()> {
    let model = TrainedModel::load(&a.model)
        .with_context(|| format!("loading model {}", a.model.display()))?;
    let c = &model.classifier;
    let schema = c.schema();
    let ds = match schema.name {
        SchemaKind::Custom => read_csv(&a.corpus, Some(schema), Some(c.class_names()))?,
        kind => align_classes(&load_corpus(&a.corpus, kind)?, c.class_names())?,
    };
    if ds.schema() != schema {
        bail!(Error::SchemaMismatch("corpus schema differs from the model's".into()));
    }
    let scores: Vec<Vec<f64>> = (0..ds.len()).map(|i| c.predict_proba_row(ds.row(i))).collect();
    let predictions: Vec<usize> = (0..ds.len()).map(|i| c.predict_row(ds.row(i))).collect();
    let report = evaluate(&scores, &predictions, ds.labels(), c.class_names().len())?;
    println!("{}", EvalReport::csv_header(c.class_names()));
    println!("{}", report.csv_row(model.algorithm.as_str()));
    if let Some(path) = &a.report {
        let out = EvaluateOutput {
            model: &a.model,
            corpus: &a.corpus,
            class_names: c.class_names(),
            report: &report,
        };
        fs::write(path, serde_json::to_string_pretty(&out)? + "\n")?;
    }
    Ok(())
}

fn cmd_crossval(a: CrossvalArgs) -> anyhow::Result<()> {
    if a.folds < 2 {
        bail!(Error::BadFoldCount(a.folds));
    }
    let ds = load_corpus(&a.corpus, a.features.kind())?;
    let algorithm = Algorithm::from(a.learn.algorithm);
    let cfg = CrossvalConfig {
        algorithm,
        folds: a.folds,
        seed: a.learn.seed,
        bpso: a.learn.bpso(),
    };
    let report = cross_validate(&ds, &cfg)?;
    println!("{}", EvalReport::csv_header(&report.class_names));
    println!("{}", report.pooled.csv_row(algorithm.as_str()));
    if let Some(path) = &a.report {
        let out = CrossvalOutput {
            run: RunConfig {
                mode: "crossval",
                corpus: &a.corpus,
                feature_set: a.features,
            },
            report: &report,
            selected_features: report.selected_features(),
        };
        fs::write(path, serde_json::to_string_pretty(&out)? + "\n")?;
    }
    Ok(())
}

fn cmd_fetch(a: FetchArgs) -> anyhow::Result<()> {
    let mut addresses = a.addresses.clone();
    if let Some(f) = &a.addresses_file {
        addresses.extend(
            read_text(f)?
                .lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with('#'))
                .map(str::to_owned),
        );
    }
    if addresses.is_empty() {
        bail!(Error::InvalidConfig("no addresses given".into()));
    }
    if let Some(bad) = addresses.iter().find(|a| !is_address(a)) {
        bail!(Error::BadAddress(bad.clone()));
    }
    let mut ep = RpcEndpoint::from_env_or(a.rpc_url.clone());
    ep.timeout = std::time::Duration::from_secs(a.timeout_secs);
    let results = fetch_many(&ep, &addresses, a.max_in_flight);
    let mut records = Vec::new();
    let mut failures = 0;
    for (addr, r) in addresses.iter().zip(results) {
        match r {
            Ok(code) if code.is_contract() => records.push(RawRecord {
                address: addr.to_ascii_lowercase(),
                bytecode: code.to_hex(),
                category: a.category.clone(),
                balance: None,
                nonce: None,
                txs: None,
            }),
            Ok(_) => log::warn!("{addr} has no code; skipped"),
            Err(e) => {
                log::error!("{addr}: {e}");
                failures += 1;
            }
        }
    }
    write_jsonl_records(&a.out, &records)?;
    eprintln!("fetched {} contracts, {failures} failures", records.len());
    if failures > 0 && records.is_empty() {
        bail!("every request failed");
    }
    Ok(())
}

fn cmd_normalize(a: NormalizeArgs) -> anyhow::Result<()> {
    let n = normalize_corpus(&a.input, &a.output)?;
    eprintln!("wrote {n} records to {}", a.output.display());
    Ok(())
}

fn cmd_synth(a: SynthArgs) -> anyhow::Result<()> {
    match a.kind {
        SynthKind::Bytecode {
            per_class,
            classes,
            seed,
            with_account,
            out,
        } => {
            let records = bytecode_corpus(&BytecodeSpec {
                per_class,
                classes,
                seed,
                with_account,
            });
            write_jsonl_records(&out, &records)?;
        }
        SynthKind::Tabular {
            seed,
            separation,
            out,
        } => {
            let mut spec = TabularSpec::imbalanced_six_class(seed);
            spec.separation = separation;
            write_csv(&tabular(&spec)?, &out)?;
        }
    }
    Ok(())
}
