//! Argument parsing and dispatch for the `tempdistill` binary.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use tempdistill::algebra::{propagate, AlgebraError, RelationGraph};
use tempdistill::harness::{
    gen_corpus, run_experiment_matrix, CorpusSpec, HarnessError, MatrixConfig, RelationMix,
};
use tempdistill::losses::{
    check_gradient, crd_loss, nst_mmd2, pkt_loss, CrdBatch, GradCheckReport, KdError, KernelSpec,
    LossValue,
};
use tempdistill::matrix::RealMatrix;
use tempdistill::qa::{build_dataset, write_dataset, BuildOptions, QaError};
use tempdistill::repr::{cross_model_cka, layer_sweep, LayerTrace, ReprError};
use tempdistill::tensor_io::{read_tensor, write_atomic, TensorIoError};
use tempdistill::timeml::{
    load_corpus, to_markup, to_relation_table, validate_corpus, CorpusError, RELATION_FILE,
};

/// Environment variable capping the worker thread count.
pub const THREADS_ENV: &str = "TEMPDISTILL_THREADS";

#[derive(Debug, Parser)]
#[command(
    name = "tempdistill",
    version,
    about = "Temporal-relation QA datasets, distillation losses, CKA analysis and the toy distillation experiment"
)]
pub struct Cli {
    /// Seed for every random choice the command makes.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// One of error, warn, info, debug, trace.
    #[arg(long, global = true, default_value = "info")]
    pub log_level: log::LevelFilter,
    /// Output file or directory (meaning depends on the subcommand).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render a synthetic narrative corpus as markup files plus a relation table.
    GenCorpus(GenCorpusArgs),
    /// Turn an annotated corpus into the temporal QA dataset (JSON lines) and its manifest.
    BuildDataset(BuildDatasetArgs),
    /// Run path consistency over a relation file; exit 1 with a witness on contradiction.
    CheckConsistency(CheckConsistencyArgs),
    /// Evaluate the distillation losses on teacher/student tensors, with gradient checks.
    KdEval(KdEvalArgs),
    /// Cross-model and per-layer linear CKA between two layer traces.
    Cka(CkaArgs),
    /// Run the toy teacher/student experiment matrix.
    DistillToy(DistillToyArgs),
}

#[derive(Debug, Args)]
pub struct GenCorpusArgs {
    #[arg(long, default_value_t = 100)]
    pub n_docs: usize,
    /// Events per narrative, 2 to 7.
    #[arg(long, default_value_t = 5)]
    pub events_per_doc: usize,
    /// Distinct trigger verbs to draw from.
    #[arg(long, default_value_t = 24)]
    pub vocab_size: usize,
}

#[derive(Debug, Args)]
pub struct BuildDatasetArgs {
    /// Directory of `.txt`/`.tml` documents with an optional `relations.tsv`.
    #[arg(long)]
    pub corpus: PathBuf,
    /// Emit every pair the annotations entail, not only the annotated links.
    #[arg(long)]
    pub closure: bool,
    /// Also emit each pair reversed with the inverted relation.
    #[arg(long)]
    pub bidirectional: bool,
    /// Drop pairs whose triples have an empty subject or object.
    #[arg(long)]
    pub filter_empty_args: bool,
    /// Token window for triple extraction.
    #[arg(long, default_value_t = 8)]
    pub window: usize,
    /// Manifest path; defaults to `<out>.manifest.json`.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Also write the per-document corpus report (TSV) here.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CheckConsistencyArgs {
    /// Tab-separated `doc_id source relation target` file.
    #[arg(long)]
    pub relations: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum LossChoice {
    Pkt,
    Nst,
    Crd,
    All,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KernelChoice {
    Cosine,
    Gaussian,
}

#[derive(Debug, Args)]
pub struct KdEvalArgs {
    /// Teacher matrix (binary or text tensor file).
    #[arg(long)]
    pub teacher: PathBuf,
    /// Student matrix.
    #[arg(long)]
    pub student: PathBuf,
    #[arg(long, value_enum, default_value_t = LossChoice::All)]
    pub loss: LossChoice,
    /// PKT kernel.
    #[arg(long, value_enum, default_value_t = KernelChoice::Cosine)]
    pub kernel: KernelChoice,
    /// Bandwidth of the PKT Gaussian kernel.
    #[arg(long, default_value_t = 1.0)]
    pub pkt_sigma: f64,
    /// Bandwidth of the NST Gaussian kernel.
    #[arg(long, default_value_t = 1.0)]
    pub nst_sigma: f64,
    /// Use raw NST columns instead of unit-normalized ones.
    #[arg(long)]
    pub no_nst_normalize: bool,
    /// CRD negatives per positive; defaults to rows - 1.
    #[arg(long)]
    pub crd_negatives: Option<usize>,
    /// CRD dataset cardinality M; defaults to the row count.
    #[arg(long)]
    pub crd_cardinality: Option<usize>,
    /// Finite-difference step for the gradient check.
    #[arg(long, default_value_t = 1e-4)]
    pub fd_step: f64,
}

#[derive(Debug, Args)]
pub struct CkaArgs {
    /// Layer-trace directory of the first model.
    #[arg(long)]
    pub trace_a: PathBuf,
    /// Layer-trace directory of the second model.
    #[arg(long)]
    pub trace_b: PathBuf,
}

#[derive(Debug, Args)]
pub struct DistillToyArgs {
    /// Matrix configuration (TOML); omitted fields take their defaults.
    #[arg(long)]
    pub matrix: Option<PathBuf>,
    /// Number of seeds, starting at `--seed`; overrides the file's list.
    #[arg(long)]
    pub seeds: Option<usize>,
    /// Student training steps; overrides the file.
    #[arg(long)]
    pub steps: Option<usize>,
}

/// A failure the user can act on, rendered as one JSON object on stderr.
#[derive(Debug)]
pub struct CliError {
    pub kind: &'static str,
    pub message: String,
    pub details: serde_json::Value,
    /// 1 for domain errors, 2 for usage errors.
    pub code: u8,
}

impl CliError {
    fn domain(kind: &'static str, e: impl std::fmt::Display) -> Self {
        CliError {
            kind,
            message: e.to_string(),
            details: serde_json::Value::Null,
            code: 1,
        }
    }

    fn usage(message: impl Into<String>) -> Self {
        CliError {
            kind: "UsageError",
            message: message.into(),
            details: serde_json::Value::Null,
            code: 2,
        }
    }

    pub fn record(&self) -> serde_json::Value {
        let mut v = json!({ "error": self.kind, "message": self.message });
        if !self.details.is_null() {
            v["details"] = self.details.clone();
        }
        v
    }
}

macro_rules! domain_from {
    ($($t:ty => $kind:literal),* $(,)?) => {
        $(impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::domain($kind, e)
            }
        })*
    };
}

domain_from! {
    CorpusError => "CorpusError",
    QaError => "QaError",
    KdError => "KdError",
    ReprError => "ReprError",
    TensorIoError => "TensorIoError",
    std::io::Error => "IoError",
}

impl From<HarnessError> for CliError {
    fn from(e: HarnessError) -> Self {
        let kind = match &e {
            HarnessError::DidNotConverge { .. } => "DidNotConverge",
            HarnessError::ConfigMismatch(_) => "ConfigMismatch",
            HarnessError::InvalidConfig(_) => "InvalidConfig",
            HarnessError::Diverged { .. } => "Diverged",
            _ => "HarnessError",
        };
        CliError::domain(kind, e)
    }
}

type CliResult = Result<(), CliError>;

/// Parses `argv`, runs the command, and maps the outcome to an exit code.
pub fn main_with_args<I, T>(argv: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            // Help and version requests are successes.
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let _ = env_logger::Builder::new()
        .filter_level(cli.log_level)
        .format_timestamp(None)
        .try_init();
    if let Err(e) = configure_threads() {
        eprintln!("{}", e.record());
        return ExitCode::from(e.code);
    }
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.record());
            ExitCode::from(e.code)
        }
    }
}

fn configure_threads() -> CliResult {
    let Ok(v) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = v
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::usage(format!("{THREADS_ENV} must be a positive integer, got {v:?}")))?;
    // Fails only if a pool already exists, e.g. when called twice in one process.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

pub fn dispatch(cli: &Cli) -> CliResult {
    match &cli.command {
        Command::GenCorpus(a) => gen_corpus_cmd(cli, a),
        Command::BuildDataset(a) => build_dataset_cmd(cli, a),
        Command::CheckConsistency(a) => check_consistency_cmd(cli, a),
        Command::KdEval(a) => kd_eval_cmd(cli, a),
        Command::Cka(a) => cka_cmd(cli, a),
        Command::DistillToy(a) => distill_toy_cmd(cli, a),
    }
}

fn require_out(cli: &Cli) -> Result<&Path, CliError> {
    cli.out
        .as_deref()
        .ok_or_else(|| CliError::usage("this subcommand needs --out"))
}

fn print_json(v: &serde_json::Value) {
    println!("{}", serde_json::to_string_pretty(v).expect("json values serialize"));
}

fn gen_corpus_cmd(cli: &Cli, a: &GenCorpusArgs) -> CliResult {
    let out = require_out(cli)?;
    if !(2..=7).contains(&a.events_per_doc) {
        return Err(CliError::usage("--events-per-doc must be between 2 and 7"));
    }
    if a.vocab_size < a.events_per_doc {
        return Err(CliError::usage("--vocab-size must be at least --events-per-doc"));
    }
    let spec = CorpusSpec {
        n_docs: a.n_docs,
        events_per_doc: a.events_per_doc,
        vocab_size: a.vocab_size,
        mix: RelationMix::default(),
    };
    let corpus = gen_corpus(cli.seed, &spec);
    fs::create_dir_all(out)?;
    let mut relations = String::from("doc_id\tsource_eid\trelation\ttarget_eid\n");
    let mut gold = String::new();
    for n in &corpus {
        let doc = n.to_document();
        write_atomic(&out.join(format!("{}.txt", n.doc_id)), to_markup(&doc).as_bytes())?;
        relations.push_str(&to_relation_table(&doc));
        gold.push_str(&n.gold.to_tsv(&n.doc_id));
    }
    write_atomic(&out.join(RELATION_FILE), relations.as_bytes())?;
    write_atomic(&out.join("gold.tsv"), gold.as_bytes())?;
    print_json(&json!({ "docs": corpus.len(), "out": out }));
    Ok(())
}

fn build_dataset_cmd(cli: &Cli, a: &BuildDatasetArgs) -> CliResult {
    let out = require_out(cli)?;
    let corpus = load_corpus(&a.corpus)?;
    let opts = BuildOptions {
        closure: a.closure,
        bidirectional: a.bidirectional,
        filter_empty_args: a.filter_empty_args,
        seed: cli.seed,
        window: a.window,
    };
    let (pairs, manifest) = build_dataset(&corpus, &opts);
    let manifest_path = a.manifest.clone().unwrap_or_else(|| {
        let mut p = out.as_os_str().to_owned();
        p.push(".manifest.json");
        PathBuf::from(p)
    });
    write_dataset(&pairs, &manifest, out, &manifest_path)?;
    if let Some(report) = &a.report {
        write_atomic(report, validate_corpus(&corpus, a.window).to_tsv().as_bytes())?;
    }
    print_json(&json!({
        "docs": manifest.n_docs,
        "pairs": manifest.n_pairs,
        "skipped_documents": manifest.skipped_documents.len(),
        "dataset": out,
        "manifest": manifest_path,
    }));
    Ok(())
}

fn check_consistency_cmd(cli: &Cli, a: &CheckConsistencyArgs) -> CliResult {
    let text = fs::read_to_string(&a.relations)?;
    let graphs = RelationGraph::from_tsv(&text).map_err(|e| CliError::domain("BadRelationFile", e))?;
    let mut closed = String::new();
    for (doc_id, g) in &graphs {
        match propagate(g) {
            Ok(c) => closed.push_str(&c.to_tsv(doc_id)),
            Err(AlgebraError::Inconsistent { a: x, b: y, via }) => {
                let mut e = CliError::domain(
                    "Inconsistent",
                    format!("document {doc_id} has no consistent interval assignment"),
                );
                e.details = json!({ "doc_id": doc_id, "witness": { "a": x, "b": y, "via": via } });
                match &via {
                    Some(v) => println!("{doc_id}\tinconsistent\t{x}\t{v}\t{y}"),
                    None => println!("{doc_id}\tinconsistent\t{x}\t-\t{y}"),
                }
                return Err(e);
            }
            Err(e) => return Err(CliError::domain("AlgebraError", e)),
        }
    }
    if let Some(out) = &cli.out {
        write_atomic(out, closed.as_bytes())?;
    }
    println!("{} documents consistent", graphs.len());
    Ok(())
}

fn grad_report(name: &str, v: &LossValue, f: impl Fn(&RealMatrix) -> f64, x: &RealMatrix, step: f64) -> serde_json::Value {
    let r: GradCheckReport = check_gradient(f, x, &v.grad, step);
    json!({
        "loss": name,
        "value": v.value,
        "gradcheck": {
            "entries": r.entries,
            "max_rel_error": r.max_rel_error,
            "max_abs_error": r.max_abs_error,
            "passes_1e-4": r.passes(1e-4),
        }
    })
}

fn kd_eval_cmd(cli: &Cli, a: &KdEvalArgs) -> CliResult {
    let teacher = read_tensor(&a.teacher)?;
    let student = read_tensor(&a.student)?;
    let kernel = match a.kernel {
        KernelChoice::Cosine => KernelSpec::CosineAffinity,
        KernelChoice::Gaussian => KernelSpec::gaussian(a.pkt_sigma)?,
    };
    let want = |l: LossChoice| a.loss == l || a.loss == LossChoice::All;
    let mut results = Vec::new();
    if want(LossChoice::Pkt) {
        let v = pkt_loss(&teacher, &student, &kernel)?;
        let f = |s: &RealMatrix| pkt_loss(&teacher, s, &kernel).map_or(f64::NAN, |v| v.value);
        results.push(grad_report("pkt", &v, f, &student, a.fd_step));
    }
    if want(LossChoice::Nst) {
        let norm = !a.no_nst_normalize;
        let v = nst_mmd2(&teacher, &student, a.nst_sigma, norm)?;
        let f = |s: &RealMatrix| nst_mmd2(&teacher, s, a.nst_sigma, norm).map_or(f64::NAN, |v| v.value);
        results.push(grad_report("nst", &v, f, &student, a.fd_step));
    }
    if want(LossChoice::Crd) {
        let rows = student.rows();
        let negatives = a.crd_negatives.unwrap_or(rows.saturating_sub(1));
        let card = a.crd_cardinality.unwrap_or(rows);
        let positives: Vec<(usize, usize)> = (0..rows).map(|i| (i, i)).collect();
        let batch = |s: &RealMatrix| {
            CrdBatch::new(s.clone(), teacher.clone(), positives.clone(), negatives, card)
        };
        let v = crd_loss(&batch(&student)?)?;
        let f = |s: &RealMatrix| {
            batch(s)
                .and_then(|b| crd_loss(&b))
                .map_or(f64::NAN, |v| v.value)
        };
        results.push(grad_report("crd", &v, f, &student, a.fd_step));
    }
    let report = json!({ "teacher": a.teacher, "student": a.student, "results": results });
    if let Some(out) = &cli.out {
        let mut s = serde_json::to_string_pretty(&report).expect("json values serialize");
        s.push('\n');
        write_atomic(out, s.as_bytes())?;
    }
    print_json(&report);
    Ok(())
}

fn cka_cmd(cli: &Cli, a: &CkaArgs) -> CliResult {
    let ta = LayerTrace::read_dir(&a.trace_a)?;
    let tb = LayerTrace::read_dir(&a.trace_b)?;
    let m = cross_model_cka(&ta, &tb)?;
    let sweep_a = layer_sweep(&ta)?;
    let sweep_b = layer_sweep(&tb)?;
    let mut csv = String::from("layer_a,layer_b,cka\n");
    for i in 0..m.rows() {
        for j in 0..m.cols() {
            csv.push_str(&format!("{i},{j},{}\n", m.get(i, j)));
        }
    }
    if let Some(out) = &cli.out {
        write_atomic(out, csv.as_bytes())?;
    }
    let rows: Vec<Vec<f64>> = (0..m.rows()).map(|i| m.row(i).to_vec()).collect();
    print_json(&json!({
        "model_a": ta.model_id,
        "model_b": tb.model_id,
        "cross_model": rows,
        "sweep_a": sweep_a,
        "sweep_b": sweep_b,
    }));
    Ok(())
}

fn distill_toy_cmd(cli: &Cli, a: &DistillToyArgs) -> CliResult {
    let out = require_out(cli)?;
    let mut config = match &a.matrix {
        Some(p) => {
            let text = fs::read_to_string(p)?;
            toml::from_str::<MatrixConfig>(&text)
                .map_err(|e| CliError::domain("InvalidConfig", format!("{}: {e}", p.display())))?
        }
        None => MatrixConfig::default(),
    };
    if let Some(n) = a.seeds {
        if n == 0 {
            return Err(CliError::usage("--seeds must be at least 1"));
        }
        config.seeds = (cli.seed..cli.seed + n as u64).collect();
    }
    if let Some(s) = a.steps {
        config.steps = s;
    }
    let report = run_experiment_matrix(&config)?;
    report.write_dir(out)?;
    print!("{}", report.summary());
    Ok(())
}
