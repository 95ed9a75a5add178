//! The `divq` command line.
//!
//! Exit codes: 0 ok, 1 interrupted or I/O failure, 2 bad input or usage,
//! 3 scorer or metric failure, 4 model endpoint failure.

use std::collections::{BTreeMap, BTreeSet};
use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::corpus::{
    attach_candidates, load_external_questions, load_instances, read_jsonl_all, write_atomic, write_jsonl_atomic,
    write_pseudo_pairs, AttachError, CorpusError, Question,
};
use crate::metrics::{corpus_metric, pearson_by_key, CorpusMetricReport, MetricError, MetricSpec, DEFAULT_ALPHA};
use crate::orchestrator::{self, Orchestrator, OrchestratorError, OrchestratorState, RunReport};
use crate::relevance::{load_embedding_file, EmbedClient, Relevance, RelevanceError, RelevanceScorer};
use crate::selection::{
    select_backward, select_forward, ForwardGroup, ForwardOptions, Provenance, RoundTrip, SelectionError,
    SelectionOutcome, ThresholdRule,
};
use crate::textproc::{TokenizeConfig, DEFAULT_SEPARATOR};

pub const EXIT_OK: u8 = 0;
pub const EXIT_OTHER: u8 = 1;
pub const EXIT_INPUT: u8 = 2;
pub const EXIT_METRIC: u8 = 3;
pub const EXIT_ENDPOINT: u8 = 4;

#[derive(Debug, Parser)]
#[command(name = "divq", version, about = "Evaluate and mine diverse generated questions")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Score candidate questions and write one report per metric plus a table.
    Eval(EvalArgs),
    /// Keep the most diverse relevant generated question per instance.
    SelectForward(SelectForwardArgs),
    /// Keep round trips that stay close to the original external question.
    SelectBackward(SelectBackwardArgs),
    /// Start (or continue) a dual-model training run.
    Orchestrate(OrchestrateArgs),
    /// Continue the run recorded in a run directory.
    Resume(ResumeArgs),
    /// Pearson correlation between two {id: score} JSON files.
    Correlate(CorrelateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScorerFlag {
    Lexical,
    EmbedFile,
    EmbedHttp,
}

#[derive(Debug, Clone, Args)]
pub struct ScorerArgs {
    /// Relevance scorer
    #[arg(long, value_enum, default_value = "lexical")]
    pub scorer: ScorerFlag,
    /// JSONL of {"text", "vector"} rows (embed-file)
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    /// Base URL of an embedder serving /embed (embed-http)
    #[arg(long)]
    pub embed_url: Option<String>,
}

#[derive(Debug, Clone, Args)]
pub struct TokenArgs {
    /// Do not lowercase before tokenizing
    #[arg(long)]
    pub keep_case: bool,
    /// Keep punctuation as part of tokens
    #[arg(long)]
    pub keep_punct: bool,
}

impl TokenArgs {
    pub fn config(&self) -> TokenizeConfig {
        TokenizeConfig {
            lowercase: !self.keep_case,
            strip_punct: !self.keep_punct,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    /// JSONL of instances
    #[arg(long)]
    pub instances: PathBuf,
    /// JSONL of candidate sets keyed by instance_id (else read from instances)
    #[arg(long)]
    pub candidates: Option<PathBuf>,
    /// Top-k cutoffs
    #[arg(long, value_delimiter = ',', default_value = "3,5,10")]
    pub k: Vec<usize>,
    /// Metrics: relevance, bleu-N, diverse[@K], dist-N, self-bleu-N
    #[arg(long, value_delimiter = ',', default_value = "relevance,bleu-1,diverse,dist-1")]
    pub metrics: Vec<String>,
    #[command(flatten)]
    pub scorer: ScorerArgs,
    /// Relevance gate for diverse@k [default: 0.7 for embedding scorers; required for lexical]
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Disable the BLEU brevity penalty
    #[arg(long)]
    pub no_brevity_penalty: bool,
    /// Directory for report files
    #[arg(long, default_value = "eval_out")]
    pub out_dir: PathBuf,
    #[command(flatten)]
    pub tokens: TokenArgs,
}

#[derive(Debug, Clone, Args)]
pub struct SelectForwardArgs {
    /// JSONL of instances
    #[arg(long)]
    pub instances: PathBuf,
    /// JSONL of generated question sets keyed by instance_id (else read from instances)
    #[arg(long)]
    pub candidates: Option<PathBuf>,
    /// Generated questions considered per instance
    #[arg(long, default_value_t = 5)]
    pub k: usize,
    #[command(flatten)]
    pub scorer: ScorerArgs,
    /// Relevance gate, inclusive [default: 0.7 for embedding scorers; required for lexical]
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Separator between linearized triplets
    #[arg(long, default_value = DEFAULT_SEPARATOR)]
    pub separator: String,
    /// Directory for pairs, rejections and summary
    #[arg(long, default_value = "select_out")]
    pub out_dir: PathBuf,
    #[command(flatten)]
    pub tokens: TokenArgs,
}

#[derive(Debug, Clone, Args)]
pub struct SelectBackwardArgs {
    /// JSONL of external questions
    #[arg(long)]
    pub external_questions: PathBuf,
    /// JSONL of {"origin_id", "pseudo_source", "roundtrip"} rows
    #[arg(long)]
    pub roundtrips: PathBuf,
    #[command(flatten)]
    pub scorer: ScorerArgs,
    /// Round-trip similarity must exceed this
    #[arg(long, default_value_t = DEFAULT_ALPHA)]
    pub threshold: f64,
    /// Directory for pairs, rejections and summary
    #[arg(long, default_value = "select_out")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct OrchestrateArgs {
    /// TOML run config
    #[arg(long)]
    pub config: PathBuf,
    /// Run directory (overrides run_dir in the config)
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// Generation seed (overrides seed in the config)
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Args)]
pub struct ResumeArgs {
    /// Run directory holding state.json
    pub run_dir: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct CorrelateArgs {
    /// JSON object of system scores keyed by id
    #[arg(long)]
    pub system: PathBuf,
    /// JSON object of human scores keyed by id
    #[arg(long)]
    pub human: PathBuf,
}

/// A failed command: what to print and which exit code to use.
#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    fn new(code: u8, message: impl Into<String>) -> Self {
        CliError {
            code,
            message: message.into(),
        }
    }
}

impl From<CorpusError> for CliError {
    fn from(e: CorpusError) -> Self {
        CliError::new(EXIT_INPUT, e.to_string())
    }
}

impl From<AttachError> for CliError {
    fn from(e: AttachError) -> Self {
        CliError::new(EXIT_INPUT, e.to_string())
    }
}

impl From<MetricError> for CliError {
    fn from(e: MetricError) -> Self {
        let code = match e {
            MetricError::InvalidK { .. }
            | MetricError::Text(_)
            | MetricError::MissingCandidates(_)
            | MetricError::EmptyCorpus
            | MetricError::KeyMismatch { .. } => EXIT_INPUT,
            _ => EXIT_METRIC,
        };
        CliError::new(code, e.to_string())
    }
}

impl From<SelectionError> for CliError {
    fn from(e: SelectionError) -> Self {
        let code = match e {
            SelectionError::EmptyGroup(_) => EXIT_INPUT,
            _ => EXIT_METRIC,
        };
        CliError::new(code, e.to_string())
    }
}

/// Errors building a scorer are input problems, except an unreachable embedder.
fn scorer_build_error(e: RelevanceError) -> CliError {
    let code = match e {
        RelevanceError::EndpointFailure { .. } => EXIT_ENDPOINT,
        _ => EXIT_INPUT,
    };
    CliError::new(code, e.to_string())
}

pub fn orchestrator_exit_code(e: &OrchestratorError) -> u8 {
    match e.root() {
        OrchestratorError::Config(_)
        | OrchestratorError::Corpus(_)
        | OrchestratorError::ConfigDrift { .. }
        | OrchestratorError::CorruptState(_)
        | OrchestratorError::Selection(SelectionError::EmptyGroup(_)) => EXIT_INPUT,
        OrchestratorError::Selection(_) | OrchestratorError::Scorer(_) => EXIT_METRIC,
        OrchestratorError::Endpoint { .. } => EXIT_ENDPOINT,
        _ => EXIT_OTHER,
    }
}

impl From<OrchestratorError> for CliError {
    fn from(e: OrchestratorError) -> Self {
        CliError::new(orchestrator_exit_code(&e), e.to_string())
    }
}

/// Parses `args` (including the program name) and runs the subcommand.
pub fn run_from<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let rendered = e.render().to_string();
            if e.use_stderr() {
                let _ = write!(err, "{rendered}");
                return EXIT_INPUT;
            }
            let _ = write!(out, "{rendered}");
            return EXIT_OK;
        }
    };
    match run(cli, out, err) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "error: {}", e.message);
            e.code
        }
    }
}

pub fn run(cli: Cli, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), CliError> {
    match cli.command {
        Command::Eval(a) => cmd_eval(&a, out, err),
        Command::SelectForward(a) => cmd_select_forward(&a, out, err),
        Command::SelectBackward(a) => cmd_select_backward(&a, out, err),
        Command::Orchestrate(a) => cmd_orchestrate(&a, out, err),
        Command::Resume(a) => cmd_resume(&a, out, err),
        Command::Correlate(a) => cmd_correlate(&a, out, err),
    }
}

fn io_err(context: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |e| CliError::new(EXIT_OTHER, format!("{}: {e}", context.display()))
}

fn print_resolved(err: &mut dyn Write, resolved: &impl Serialize) {
    let json = serde_json::to_string(resolved).expect("serializes");
    let _ = writeln!(err, "resolved config: {json}");
}

fn build_scorer(args: &ScorerArgs) -> Result<RelevanceScorer, CliError> {
    let scorer = match args.scorer {
        ScorerFlag::Lexical => RelevanceScorer::lexical(TokenizeConfig::default()),
        ScorerFlag::EmbedFile => {
            let path = args
                .embeddings
                .as_ref()
                .ok_or_else(|| CliError::new(EXIT_INPUT, "--scorer embed-file needs --embeddings"))?;
            RelevanceScorer::embedding_file(load_embedding_file(path).map_err(scorer_build_error)?)
        }
        ScorerFlag::EmbedHttp => {
            let url = args
                .embed_url
                .as_ref()
                .ok_or_else(|| CliError::new(EXIT_INPUT, "--scorer embed-http needs --embed-url"))?;
            RelevanceScorer::embedding_endpoint(EmbedClient::new(url, Duration::from_secs(60), 3))
        }
    };
    Ok(scorer.with_cache())
}

/// The 0.7 default is calibrated for sentence embeddings only.
fn resolve_alpha(alpha: Option<f64>, scorer: ScorerFlag) -> Result<f64, CliError> {
    match (alpha, scorer) {
        (Some(a), _) => Ok(a),
        (None, ScorerFlag::Lexical) => Err(CliError::new(
            EXIT_INPUT,
            "--alpha is required with the lexical scorer (0.7 is calibrated for sentence embeddings)",
        )),
        (None, _) => Ok(DEFAULT_ALPHA),
    }
}

/// Parses one `--metrics` entry into a spec per cutoff.
pub fn parse_metric(token: &str, ks: &[usize], alpha: f64, brevity_penalty: bool) -> Result<Vec<MetricSpec>, CliError> {
    let bad = || CliError::new(EXIT_INPUT, format!("unknown metric {token:?} (expected relevance, bleu-N, diverse[@K], dist-N, self-bleu-N)"));
    let t = token.trim().to_ascii_lowercase();
    let (base, at_k) = match t.split_once('@') {
        Some((b, k)) => (b.to_owned(), Some(k.parse::<usize>().map_err(|_| bad())?)),
        None => (t.clone(), None),
    };
    let ks: Vec<usize> = at_k.map(|k| vec![k]).unwrap_or_else(|| ks.to_vec());
    let order = |prefix: &str| -> Result<Option<usize>, CliError> {
        match base.strip_prefix(prefix) {
            Some(n) => n.parse::<usize>().map(Some).map_err(|_| bad()),
            None => Ok(None),
        }
    };
    let make: Box<dyn Fn(usize) -> MetricSpec> = if base == "relevance" {
        Box::new(|k| MetricSpec::Relevance { k })
    } else if base == "diverse" {
        Box::new(move |k| MetricSpec::Diverse { k, alpha })
    } else if let Some(n) = order("self-bleu-")? {
        Box::new(move |k| MetricSpec::SelfBleu { k, n })
    } else if let Some(n) = order("bleu-")? {
        Box::new(move |k| MetricSpec::Bleu { k, n, brevity_penalty })
    } else if let Some(n) = order("dist-")? {
        Box::new(move |k| MetricSpec::Distinct { k, n })
    } else {
        return Err(bad());
    };
    let specs: Vec<MetricSpec> = ks.into_iter().map(make).collect();
    for s in &specs {
        s.validate().map_err(|e| CliError::new(EXIT_INPUT, format!("{}: {e}", s.name())))?;
    }
    Ok(specs)
}

fn round6(x: f64) -> f64 {
    (x * 1e6).round() / 1e6
}

fn rounded(mut report: CorpusMetricReport) -> CorpusMetricReport {
    report.corpus_value = round6(report.corpus_value);
    for v in &mut report.per_instance {
        v.value = round6(v.value);
    }
    report
}

fn column_label(spec: &MetricSpec, embedding: bool) -> String {
    match *spec {
        MetricSpec::Relevance { .. } if embedding => "simCSE".into(),
        MetricSpec::Relevance { .. } => "Lexical*".into(),
        MetricSpec::Bleu { n, .. } => format!("BLEU-{n}"),
        MetricSpec::Diverse { .. } => "Diverse@k".into(),
        MetricSpec::Distinct { n, .. } => format!("Dist-{n}"),
        MetricSpec::SelfBleu { n, .. } => format!("Self-BLEU-{n}"),
    }
}

/// One row per cutoff, one column per metric, in request order.
pub fn render_table(reports: &[CorpusMetricReport], embedding: bool, alpha: f64) -> String {
    let mut columns: Vec<String> = Vec::new();
    let mut cells: BTreeMap<(usize, String), f64> = BTreeMap::new();
    let mut ks = BTreeSet::new();
    for r in reports {
        let label = column_label(&r.params, embedding);
        if !columns.contains(&label) {
            columns.push(label.clone());
        }
        ks.insert(r.params.k());
        cells.insert((r.params.k(), label), r.corpus_value);
    }
    let width = columns.iter().map(String::len).max().unwrap_or(0).max(8);
    let mut s = String::new();
    if embedding {
        let _ = writeln!(s, "relevance: embedding cosine; diverse gate alpha = {alpha}");
    } else {
        let _ = writeln!(
            s,
            "relevance: Lexical* = unigram-count cosine, not comparable to simCSE; diverse gate alpha = {alpha}"
        );
    }
    let _ = write!(s, "{:<6}", "");
    for c in &columns {
        let _ = write!(s, " | {c:>width$}");
    }
    s.push('\n');
    for k in ks {
        let _ = write!(s, "{:<6}", format!("Top-{k}"));
        for c in &columns {
            match cells.get(&(k, c.clone())) {
                Some(v) => {
                    let _ = write!(s, " | {:>width$}", format!("{v:.6}"));
                }
                None => {
                    let _ = write!(s, " | {:>width$}", "-");
                }
            }
        }
        s.push('\n');
    }
    s
}

#[derive(Serialize)]
struct ResolvedEval<'a> {
    command: &'static str,
    instances: &'a Path,
    candidates: Option<&'a Path>,
    metrics: Vec<String>,
    scorer: ScorerFlag,
    alpha: f64,
    tokenizer: TokenizeConfig,
    out_dir: &'a Path,
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), CliError> {
    let mut bytes = serde_json::to_vec_pretty(value).expect("serializes");
    bytes.push(b'\n');
    write_atomic(path, &bytes).map_err(|e| CliError::new(EXIT_OTHER, e.to_string()))
}

fn cmd_eval(a: &EvalArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), CliError> {
    let tok = a.tokens.config();
    let needs_alpha = a.metrics.iter().any(|m| m.trim().to_ascii_lowercase().starts_with("diverse"));
    let alpha = if needs_alpha {
        resolve_alpha(a.alpha, a.scorer.scorer)?
    } else {
        a.alpha.unwrap_or(DEFAULT_ALPHA)
    };
    let mut specs = Vec::new();
    for m in &a.metrics {
        specs.extend(parse_metric(m, &a.k, alpha, !a.no_brevity_penalty)?);
    }
    print_resolved(
        err,
        &ResolvedEval {
            command: "eval",
            instances: &a.instances,
            candidates: a.candidates.as_deref(),
            metrics: specs.iter().map(MetricSpec::name).collect(),
            scorer: a.scorer.scorer,
            alpha,
            tokenizer: tok,
            out_dir: &a.out_dir,
        },
    );
    let scorer = build_scorer(&a.scorer)?;
    let mut instances = load_instances(&a.instances, None)?;
    if let Some(c) = &a.candidates {
        attach_candidates(&mut instances, c)?;
    }
    std::fs::create_dir_all(&a.out_dir).map_err(io_err(&a.out_dir))?;
    let mut reports = Vec::with_capacity(specs.len());
    for spec in &specs {
        let report = rounded(corpus_metric(&instances, spec, &scorer, &tok)?);
        write_json(&a.out_dir.join(format!("{}.json", report.metric_name)), &report)?;
        reports.push(report);
    }
    let table = render_table(&reports, scorer.kind().is_embedding(), alpha);
    write_atomic(&a.out_dir.join("table.txt"), table.as_bytes()).map_err(|e| CliError::new(EXIT_OTHER, e.to_string()))?;
    write!(out, "{table}").map_err(io_err(Path::new("stdout")))?;
    Ok(())
}

fn write_outcome(out_dir: &Path, stem: &str, outcome: &SelectionOutcome, out: &mut dyn Write) -> Result<(), CliError> {
    std::fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    write_pseudo_pairs(&outcome.selected, &out_dir.join(format!("{stem}_pairs.jsonl")))?;
    write_jsonl_atomic(&outcome.rejected, &out_dir.join(format!("{stem}_rejected.jsonl")))?;
    let summary = outcome.summary();
    write_json(&out_dir.join(format!("{stem}_summary.json")), &summary)?;
    writeln!(
        out,
        "selected {} of {} (threshold {})",
        summary.selected, summary.input, summary.threshold
    )
    .map_err(io_err(Path::new("stdout")))
}

#[derive(Serialize)]
struct ResolvedForward<'a> {
    command: &'static str,
    instances: &'a Path,
    candidates: Option<&'a Path>,
    k: usize,
    scorer: ScorerFlag,
    alpha: f64,
    separator: &'a str,
    tokenizer: TokenizeConfig,
    out_dir: &'a Path,
}

fn cmd_select_forward(a: &SelectForwardArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), CliError> {
    let alpha = resolve_alpha(a.alpha, a.scorer.scorer)?;
    if a.k == 0 {
        return Err(CliError::new(EXIT_INPUT, "--k must be at least 1"));
    }
    let tok = a.tokens.config();
    print_resolved(
        err,
        &ResolvedForward {
            command: "select-forward",
            instances: &a.instances,
            candidates: a.candidates.as_deref(),
            k: a.k,
            scorer: a.scorer.scorer,
            alpha,
            separator: &a.separator,
            tokenizer: tok,
            out_dir: &a.out_dir,
        },
    );
    let scorer = build_scorer(&a.scorer)?;
    let mut instances = load_instances(&a.instances, None)?;
    if let Some(c) = &a.candidates {
        attach_candidates(&mut instances, c)?;
    }
    let mut groups = Vec::with_capacity(instances.len());
    for inst in &instances {
        let cands = inst
            .candidates
            .as_ref()
            .ok_or_else(|| CliError::new(EXIT_INPUT, format!("instance {:?} has no generated questions", inst.id)))?;
        groups.push(ForwardGroup {
            instance: inst,
            generated: &cands.questions,
        });
    }
    let opts = ForwardOptions {
        rule: ThresholdRule::inclusive(alpha),
        k: a.k,
        separator: a.separator.clone(),
        tokenizer: tok,
    };
    let outcome = select_forward(&groups, &scorer, &opts, Provenance::default())?;
    write_outcome(&a.out_dir, "forward", &outcome, out)
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RoundTripLine {
    origin_id: String,
    pseudo_source: String,
    roundtrip: String,
}

#[derive(Serialize)]
struct ResolvedBackward<'a> {
    command: &'static str,
    external_questions: &'a Path,
    roundtrips: &'a Path,
    scorer: ScorerFlag,
    threshold: f64,
    out_dir: &'a Path,
}

fn cmd_select_backward(a: &SelectBackwardArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), CliError> {
    print_resolved(
        err,
        &ResolvedBackward {
            command: "select-backward",
            external_questions: &a.external_questions,
            roundtrips: &a.roundtrips,
            scorer: a.scorer.scorer,
            threshold: a.threshold,
            out_dir: &a.out_dir,
        },
    );
    let scorer = build_scorer(&a.scorer)?;
    let external = load_external_questions(&a.external_questions)?;
    let by_id: BTreeMap<&str, &Question> = external.questions.iter().map(|q| (q.id.as_str(), q)).collect();
    let lines: Vec<RoundTripLine> = read_jsonl_all(&a.roundtrips)?;
    let mut trips = Vec::with_capacity(lines.len());
    for l in lines {
        let ext = by_id.get(l.origin_id.as_str()).ok_or_else(|| {
            CliError::new(
                EXIT_INPUT,
                format!("{}: unknown origin_id {:?}", a.roundtrips.display(), l.origin_id),
            )
        })?;
        trips.push(RoundTrip {
            roundtrip: Question::new(format!("{}#rt", l.origin_id), l.roundtrip),
            external: (*ext).clone(),
            origin_id: l.origin_id,
            pseudo_source: l.pseudo_source,
        });
    }
    let outcome = select_backward(&trips, &scorer, ThresholdRule::strict(a.threshold), Provenance::default())?;
    write_outcome(&a.out_dir, "backward", &outcome, out)
}

fn report_run(report: &RunReport, out: &mut dyn Write) -> Result<(), CliError> {
    let w = |e| CliError::new(EXIT_OTHER, format!("stdout: {e}"));
    if report.already_done {
        writeln!(out, "run {} already done", report.run_id).map_err(w)?;
        return Ok(());
    }
    for r in &report.history {
        writeln!(
            out,
            "iteration {} {} epoch {}: generated {}, selected {}, trained {}",
            r.iteration, r.phase, r.epoch, r.generated, r.selected, r.trained
        )
        .map_err(w)?;
    }
    writeln!(out, "run {} done ({})", report.run_id, report.run_dir.display()).map_err(w)
}

#[derive(Serialize)]
struct ResolvedRun<'a> {
    command: &'static str,
    config_path: &'a Path,
    run_dir: &'a Path,
    config_digest: &'a str,
    config: &'a orchestrator::RunConfig,
}

fn cmd_orchestrate(a: &OrchestrateArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), CliError> {
    let mut orch = Orchestrator::load(&a.config, a.out_dir.as_deref(), a.seed)?;
    print_resolved(
        err,
        &ResolvedRun {
            command: "orchestrate",
            config_path: &a.config,
            run_dir: orch.run_dir(),
            config_digest: orch.config_digest(),
            config: orch.config(),
        },
    );
    let report = orch.run()?;
    report_run(&report, out)
}

fn cmd_resume(a: &ResumeArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), CliError> {
    let state = OrchestratorState::load(&a.run_dir)?;
    let mut orch = Orchestrator::load(&state.config_path, Some(&a.run_dir), state.seed_override)?;
    print_resolved(
        err,
        &ResolvedRun {
            command: "resume",
            config_path: &state.config_path,
            run_dir: orch.run_dir(),
            config_digest: orch.config_digest(),
            config: orch.config(),
        },
    );
    let report = orch.run()?;
    report_run(&report, out)
}

fn read_scores(path: &Path) -> Result<BTreeMap<String, f64>, CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::new(EXIT_INPUT, format!("{}: {e}", path.display())))?;
    serde_json::from_slice(&bytes).map_err(|e| {
        CliError::new(
            EXIT_INPUT,
            format!("{}:{}: expected a JSON object of numbers: {e}", path.display(), e.line()),
        )
    })
}

fn cmd_correlate(a: &CorrelateArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), CliError> {
    print_resolved(
        err,
        &serde_json::json!({"command": "correlate", "system": a.system, "human": a.human}),
    );
    let system = read_scores(&a.system)?;
    let human = read_scores(&a.human)?;
    let r = pearson_by_key(&system, &human)?;
    writeln!(out, "{r:.3}").map_err(io_err(Path::new("stdout")))
}
