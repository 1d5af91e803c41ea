use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use trc_core::client::{self, AnswerExtractor, EndpointConfig, ResponseCache};
use trc_core::io;
use trc_core::metrics::{self, Comparison, EvalOptions, EvalReport, ResponseRecord};
use trc_core::prompt::{self, Pairing, PromptKind, PromptRecord, PromptStyle};
use trc_core::query::{self, BenchmarkInstance, L3Record};
use trc_core::relation::RelationTable;
use trc_core::report::{self, RunManifest};
use trc_core::translation::{self, ChrfConfig, TrigramDetector};

/// Paired-query temporal consistency toolkit.
#[derive(Debug, Parser)]
#[command(name = "trc", version)]
struct Cli {
    /// Seed for every random choice made by the command.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Event-event source records (JSONL) to a paired-query dataset.
    Build(BuildArgs),
    /// Positive and antagonist consistency pairs.
    Pairs(PairsArgs),
    /// Instruction-tuning records with reasoning pathways.
    ExportSft(ExportSftArgs),
    /// Render evaluation prompts.
    Prompt(PromptArgs),
    /// Query a chat-completions endpoint for every prompt.
    Collect(CollectArgs),
    /// Score responses against a dataset.
    Evaluate(EvaluateArgs),
    /// Summary, per-entity and per-language tables from an evaluation.
    Report(ReportArgs),
    /// chrF++, BLEU and language-detection agreement for translations.
    MtAgree(MtAgreeArgs),
    /// Seeded subsample of a dataset.
    Subsample(SubsampleArgs),
}

#[derive(Debug, Args, Serialize)]
struct BuildArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Where to list skipped records; defaults to `<out>.skipped.jsonl`.
    #[arg(long)]
    skip_log: Option<PathBuf>,
    /// Relation table JSON replacing the built-in one.
    #[arg(long)]
    relations: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct PairsArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct ExportSftArgs {
    #[arg(long)]
    dataset: PathBuf,
    /// cross or unilateral
    #[arg(long, default_value = "cross")]
    pairing: String,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = prompt::DEFAULT_SFT_INSTRUCTION)]
    instruction: String,
}

#[derive(Debug, Args, Serialize)]
struct PromptArgs {
    /// Instances to build prompts for.
    #[arg(long)]
    dataset: PathBuf,
    /// Demonstration pool; defaults to the dataset itself.
    #[arg(long)]
    pool: Option<PathBuf>,
    /// zero, icl, semantic-icl or semantic-cot
    #[arg(long, default_value = "zero")]
    style: String,
    #[arg(long, default_value_t = prompt::DEFAULT_SHOTS)]
    shots: usize,
    #[arg(long)]
    out: PathBuf,
    /// Print the first N prompts to stdout.
    #[arg(long, default_value_t = 0)]
    preview: usize,
}

#[derive(Debug, Args, Serialize)]
struct CollectArgs {
    #[arg(long)]
    prompts: PathBuf,
    /// Base URL; requests go to `<endpoint>/chat/completions`.
    #[arg(long)]
    endpoint: String,
    #[arg(long)]
    model: String,
    #[arg(long)]
    cache: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Prompt style the prompts were rendered with (picks the extraction rule).
    #[arg(long, default_value = "zero")]
    style: String,
    #[arg(long, default_value_t = 4)]
    parallelism: usize,
    #[arg(long, default_value_t = 3)]
    retry_limit: u32,
    #[arg(long, default_value_t = 60)]
    timeout_secs: u64,
    #[arg(long, default_value_t = 30)]
    max_new_tokens: u32,
    #[arg(long, default_value_t = 0.0)]
    temperature: f64,
    /// Regex marking the answer in reasoning-style completions.
    #[arg(long, default_value = client::DEFAULT_ANSWER_MARKER)]
    answer_marker: String,
}

#[derive(Debug, Args, Serialize)]
struct EvaluateArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    responses: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Compare raw strings instead of normalized answers.
    #[arg(long)]
    strict: bool,
}

#[derive(Debug, Args, Serialize)]
struct ReportArgs {
    /// Evaluation JSON written by `evaluate`.
    #[arg(long)]
    report: PathBuf,
    #[arg(long)]
    dataset: PathBuf,
    /// Baseline evaluation JSON over the same dataset.
    #[arg(long)]
    compare: Option<PathBuf>,
    /// JSON output; the text table goes beside it with a `.txt` extension.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct MtAgreeArgs {
    /// Hypotheses, one per line.
    #[arg(long)]
    hyp: PathBuf,
    /// References, one per line, aligned with the hypotheses.
    #[arg(long = "ref")]
    reference: PathBuf,
    #[arg(long, default_value_t = 4)]
    max_order: usize,
    /// Directory of `<lang>.txt` corpora or `<lang>.json` profiles.
    #[arg(long, requires = "expected")]
    profiles: Option<PathBuf>,
    /// Language the hypotheses should be in.
    #[arg(long, requires = "profiles")]
    expected: Option<String>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct SubsampleArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    out: PathBuf,
}

/// A finished command: what it read, what it wrote, and whether some work
/// items failed without aborting the run.
struct Outcome {
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
    partial_failure: bool,
}

impl Outcome {
    fn new(inputs: &[&Path], outputs: &[&Path]) -> Self {
        Self {
            inputs: inputs.iter().map(|p| p.to_path_buf()).collect(),
            outputs: outputs.iter().map(|p| p.to_path_buf()).collect(),
            partial_failure: false,
        }
    }
}

fn read_dataset(path: &Path) -> Result<Vec<BenchmarkInstance>> {
    io::read_jsonl(path).with_context(|| format!("reading dataset {}", path.display()))
}

fn build(args: &BuildArgs) -> Result<Outcome> {
    let custom;
    let table = match &args.relations {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))?;
            custom = RelationTable::from_json(&text)?;
            &custom
        }
        None => RelationTable::builtin(),
    };
    let records: Vec<L3Record> = io::read_jsonl(&args.input)?;
    let out = query::build_dataset(&records, table);
    io::write_jsonl(&args.out, &out.instances)?;
    let skip_log = args
        .skip_log
        .clone()
        .unwrap_or_else(|| suffixed(&args.out, ".skipped.jsonl"));
    io::write_jsonl(&skip_log, &out.skipped)?;
    eprintln!(
        "built {} instances from {} records ({} skipped)",
        out.instances.len(),
        records.len(),
        out.skipped.len()
    );
    let mut inputs = vec![args.input.as_path()];
    if let Some(r) = &args.relations {
        inputs.push(r);
    }
    Ok(Outcome::new(&inputs, &[&args.out, &skip_log]))
}

fn pairs(args: &PairsArgs, seed: u64) -> Result<Outcome> {
    let dataset = read_dataset(&args.dataset)?;
    let pairs = query::build_consistency_pairs(&dataset, args.n, seed)?;
    io::write_jsonl(&args.out, &pairs)?;
    Ok(Outcome::new(&[&args.dataset], &[&args.out]))
}

fn export_sft(args: &ExportSftArgs) -> Result<Outcome> {
    let pairing: Pairing = args.pairing.parse()?;
    let dataset = read_dataset(&args.dataset)?;
    let records = prompt::export_sft(&dataset, pairing, &args.instruction);
    io::write_jsonl(&args.out, &records)?;
    Ok(Outcome::new(&[&args.dataset], &[&args.out]))
}

fn prompt_cmd(args: &PromptArgs, seed: u64) -> Result<Outcome> {
    let kind: PromptKind = args.style.parse()?;
    let style = PromptStyle::new(kind, args.shots);
    let targets = read_dataset(&args.dataset)?;
    let pool = match &args.pool {
        Some(p) => read_dataset(p)?,
        None => targets.clone(),
    };
    let prompts = prompt::build_prompts(&targets, &pool, style, seed)?;
    for p in prompts.iter().take(args.preview) {
        println!("### {} ({})\n{}\n", p.instance_id, p.reference_kind.as_str(), p.prompt);
    }
    io::write_jsonl(&args.out, &prompts)?;
    let mut inputs = vec![args.dataset.as_path()];
    if let Some(p) = &args.pool {
        inputs.push(p);
    }
    Ok(Outcome::new(&inputs, &[&args.out]))
}

fn collect(args: &CollectArgs) -> Result<Outcome> {
    let kind: PromptKind = args.style.parse()?;
    let prompts: Vec<PromptRecord> = io::read_jsonl(&args.prompts)?;
    let mut config = EndpointConfig::new(&args.endpoint, &args.model);
    config.parallelism = args.parallelism;
    config.retry_limit = args.retry_limit;
    config.timeout = Duration::from_secs(args.timeout_secs);
    config.max_new_tokens = args.max_new_tokens;
    config.temperature = args.temperature;
    let extractor = AnswerExtractor::with_marker(&args.answer_marker)?;
    let mut cache = ResponseCache::open(&args.cache)?;
    let outcome = client::collect_responses(&prompts, &config, &mut cache, kind, &extractor)?;
    io::write_jsonl(&args.out, &outcome.records)?;
    let failures = outcome.failures();
    eprintln!(
        "{} records ({} from cache, {} requests, {} failed)",
        outcome.records.len(),
        outcome.cache_hits,
        outcome.requests,
        failures
    );
    let mut done = Outcome::new(&[&args.prompts], &[&args.out]);
    done.partial_failure = failures > 0;
    Ok(done)
}

fn evaluate(args: &EvaluateArgs) -> Result<Outcome> {
    let dataset = read_dataset(&args.dataset)?;
    let responses: Vec<ResponseRecord> = io::read_jsonl(&args.responses)?;
    let pairs = metrics::pair_responses(&responses)?;
    let comparison = if args.strict {
        Comparison::Strict
    } else {
        Comparison::Normalized
    };
    let report = metrics::evaluate(&dataset, &pairs, EvalOptions { comparison })?;
    io::write_json(&args.out, &report)?;
    let r = report.rounded();
    eprintln!(
        "EM {:.2}/{:.2} (dev {:.2})  F1 {:.2}/{:.2} (dev {:.2})  consistency {:.2}  consistent factuality {:.2}",
        r.em_ctr, r.em_atr, r.dev_em, r.f1_ctr, r.f1_atr, r.dev_f1, r.trc, r.trcf
    );
    Ok(Outcome::new(&[&args.dataset, &args.responses], &[&args.out]))
}

fn report_cmd(args: &ReportArgs) -> Result<Outcome> {
    let eval: EvalReport = io::read_json(&args.report)?;
    let dataset = read_dataset(&args.dataset)?;
    let baseline: Option<EvalReport> = args.compare.as_ref().map(io::read_json).transpose()?;
    let doc = report::build_report(&eval, &dataset, baseline.as_ref())?;
    let text = doc.to_text();
    let text_path = args.out.with_extension("txt");
    io::write_json(&args.out, &doc)?;
    io::write_text(&text_path, &text)?;
    print!("{text}");
    let mut inputs = vec![args.report.as_path(), args.dataset.as_path()];
    if let Some(c) = &args.compare {
        inputs.push(c);
    }
    Ok(Outcome::new(&inputs, &[&args.out, &text_path]))
}

fn mt_agree(args: &MtAgreeArgs) -> Result<Outcome> {
    let hyps = io::read_lines(&args.hyp)?;
    let refs = io::read_lines(&args.reference)?;
    let detector = match &args.profiles {
        Some(dir) => Some(TrigramDetector::new(translation::load_profiles(dir)?)),
        None => None,
    };
    let check = match (&detector, &args.expected) {
        (Some(d), Some(lang)) => Some((d as &dyn translation::LanguageDetector, lang.as_str())),
        _ => None,
    };
    let summary =
        translation::mt_agreement(&hyps, &refs, &ChrfConfig::default(), args.max_order, check)?;
    io::write_json(&args.out, &summary)?;
    Ok(Outcome::new(&[&args.hyp, &args.reference], &[&args.out]))
}

fn subsample(args: &SubsampleArgs, seed: u64) -> Result<Outcome> {
    let dataset = read_dataset(&args.dataset)?;
    let picked = query::subsample(&dataset, args.n, seed)?;
    io::write_jsonl(&args.out, &picked)?;
    Ok(Outcome::new(&[&args.dataset], &[&args.out]))
}

fn suffixed(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn run(cli: &Cli) -> Result<bool> {
    let seed = cli.seed;
    let (name, config, outcome) = match &cli.command {
        Command::Build(a) => ("build", serde_json::to_value(a)?, build(a)?),
        Command::Pairs(a) => ("pairs", serde_json::to_value(a)?, pairs(a, seed)?),
        Command::ExportSft(a) => ("export-sft", serde_json::to_value(a)?, export_sft(a)?),
        Command::Prompt(a) => ("prompt", serde_json::to_value(a)?, prompt_cmd(a, seed)?),
        Command::Collect(a) => ("collect", serde_json::to_value(a)?, collect(a)?),
        Command::Evaluate(a) => ("evaluate", serde_json::to_value(a)?, evaluate(a)?),
        Command::Report(a) => ("report", serde_json::to_value(a)?, report_cmd(a)?),
        Command::MtAgree(a) => ("mt-agree", serde_json::to_value(a)?, mt_agree(a)?),
        Command::Subsample(a) => ("subsample", serde_json::to_value(a)?, subsample(a, seed)?),
    };
    let Some(primary) = outcome.outputs.first() else {
        bail!("{name} produced no output");
    };
    let inputs: Vec<&Path> = outcome.inputs.iter().map(PathBuf::as_path).collect();
    let outputs: Vec<&Path> = outcome.outputs.iter().map(PathBuf::as_path).collect();
    let config = serde_json::json!({ "command": name, "seed": seed, "args": config });
    RunManifest::new(name, &config, &inputs, &outputs, seed)?.write_beside(primary)?;
    Ok(!outcome.partial_failure)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    // Usage errors are validation errors (exit 1); 2 is reserved for
    // partially failed collections.
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
