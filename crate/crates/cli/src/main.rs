use std::fs;
use std::io::Write;
use std::net::{IpAddr, SocketAddr};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rngt_core::corpus::{read_corpus, CorpusError, CorpusPaths};
use rngt_core::report::{aggregate, compare, render_reports, BaselineSet, ReportError};
use rngt_core::sources::{
    calibrate_bias_model, BiasPreset, BiasSource, CalibrationOptions, LengthSpec,
    LlmEndpointConfig, LlmSource, PatternTargets, SequenceSource, SourceError, UniformSource,
};
use rngt_core::{collect, resume, CollectOptions, ProtocolError, RunManifest};
use rngt_server::{ServeConfig, ServerError};
use serde_json::json;
use url::Url;

/// Exit codes. Documented in INTERFACES.md; keep them stable.
const EXIT_RUNTIME: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_COLLECTION: u8 = 3;
const EXIT_NOT_CONVERGED: u8 = 4;

#[derive(Parser)]
#[command(name = "rngt", version, about = "Random number generation task toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Collect a corpus from a sequence source.
    Generate(GenerateArgs),
    /// Write aggregate, comparison and digit reports for a corpus.
    Analyze(AnalyzeArgs),
    /// Print the baseline comparison table for a corpus.
    Compare(CompareArgs),
    /// Fit bias-model parameters to target pattern frequencies.
    Calibrate(CalibrateArgs),
    /// Run the local session service.
    Serve(ServeArgs),
}

#[derive(Args)]
struct GenerateArgs {
    /// uniform, llm, or bias:<preset> where <preset> is a built-in name
    /// (uniform, human, chatgpt_2024) or a preset file from `calibrate`.
    #[arg(long)]
    source: String,
    /// Accepted records to collect.
    #[arg(long)]
    n: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "corpus.jsonl")]
    out: PathBuf,
    #[command(flatten)]
    length: LengthArgs,
    #[command(flatten)]
    llm: LlmArgs,
    /// Total attempts allowed, rejected ones included [default: 10n + 100].
    #[arg(long)]
    attempt_budget: Option<u64>,
    /// Continue the run recorded next to --out instead of starting over.
    #[arg(long)]
    resume: bool,
}

#[derive(Args)]
struct LengthArgs {
    #[arg(long, default_value_t = LengthSpec::default().mean)]
    mean: f64,
    #[arg(long, default_value_t = LengthSpec::default().sd)]
    sd: f64,
    #[arg(long, default_value_t = LengthSpec::default().min_len)]
    min_len: usize,
    #[arg(long, default_value_t = LengthSpec::default().max_len)]
    max_len: usize,
}

impl LengthArgs {
    fn spec(&self) -> LengthSpec {
        LengthSpec {
            mean: self.mean,
            sd: self.sd,
            min_len: self.min_len,
            max_len: self.max_len,
        }
    }
}

#[derive(Args)]
struct LlmArgs {
    /// Base URL of a chat-completions endpoint (llm source only).
    #[arg(long)]
    endpoint: Option<Url>,
    #[arg(long)]
    model: Option<String>,
    /// Environment variable holding the API key.
    #[arg(long, default_value = "OPENAI_API_KEY")]
    api_key_env: String,
    #[arg(long)]
    temperature: Option<f64>,
    #[arg(long)]
    timeout_secs: Option<f64>,
    #[arg(long)]
    max_retries: Option<u32>,
    /// Requests in flight at once.
    #[arg(long)]
    concurrency: Option<usize>,
}

impl LlmArgs {
    fn any_set(&self) -> bool {
        self.endpoint.is_some()
            || self.model.is_some()
            || self.temperature.is_some()
            || self.timeout_secs.is_some()
            || self.max_retries.is_some()
            || self.concurrency.is_some()
    }
}

const DEFAULT_MODEL: &str = "gpt-3.5-turbo-0125";

#[derive(Args)]
struct AnalyzeArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, value_delimiter = ',', default_values_t = default_profiles())]
    profiles: Vec<String>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Text,
    Csv,
}

#[derive(Args)]
struct CompareArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_delimiter = ',', default_values_t = default_profiles())]
    profiles: Vec<String>,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    format: Format,
}

fn default_profiles() -> Vec<String> {
    BaselineSet::PROFILE_NAMES.map(String::from).to_vec()
}

#[derive(Args)]
struct CalibrateArgs {
    #[arg(long)]
    repeat: f64,
    #[arg(long)]
    increase: f64,
    #[arg(long)]
    decrease: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Preset file to write.
    #[arg(long)]
    out: PathBuf,
    /// Preset name; defaults to the output file stem.
    #[arg(long)]
    name: Option<String>,
}

#[derive(Args)]
struct ServeArgs {
    /// Corpus file that receives submitted sessions.
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long, default_value_t = rngt_server::DEFAULT_PORT)]
    port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    bind: IpAddr,
    /// Built session UI to serve at `/`.
    #[arg(long)]
    assets: Option<PathBuf>,
}

/// Stdout writes ignore errors so a closed pipe (`rngt ... | head`) is not a
/// crash.
fn emit(text: &str) {
    let _ = std::io::stdout().lock().write_all(text.as_bytes());
}

macro_rules! emitln {
    ($($arg:tt)*) => {
        emit(&format!("{}\n", format_args!($($arg)*)))
    };
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn new(code: u8, message: impl ToString) -> Self {
        Self {
            code,
            message: message.to_string(),
        }
    }

    fn config(message: impl ToString) -> Self {
        Self::new(EXIT_CONFIG, message)
    }
}

fn corpus_code(e: &CorpusError) -> u8 {
    match e {
        CorpusError::Io { .. } => EXIT_RUNTIME,
        _ => EXIT_CONFIG,
    }
}

impl From<SourceError> for Failure {
    fn from(e: SourceError) -> Self {
        let code = match &e {
            SourceError::InvalidLengthSpec(_)
            | SourceError::InvalidParams(_)
            | SourceError::Config(_) => EXIT_CONFIG,
            SourceError::NotConverged { .. } => EXIT_NOT_CONVERGED,
            SourceError::Corpus(c) => corpus_code(c),
            _ => EXIT_COLLECTION,
        };
        Self::new(code, e)
    }
}

impl From<ProtocolError> for Failure {
    fn from(e: ProtocolError) -> Self {
        let code = match &e {
            ProtocolError::Source(s) => match s {
                SourceError::Corpus(c) => corpus_code(c),
                SourceError::InvalidLengthSpec(_)
                | SourceError::InvalidParams(_)
                | SourceError::Config(_) => EXIT_CONFIG,
                _ => EXIT_COLLECTION,
            },
            ProtocolError::Corpus(CorpusError::Io { .. }) | ProtocolError::BudgetExhausted { .. } => {
                EXIT_COLLECTION
            }
            _ => EXIT_CONFIG,
        };
        Self::new(code, e)
    }
}

impl From<CorpusError> for Failure {
    fn from(e: CorpusError) -> Self {
        Self::new(corpus_code(&e), e)
    }
}

impl From<ReportError> for Failure {
    fn from(e: ReportError) -> Self {
        Self::config(e)
    }
}

impl From<ServerError> for Failure {
    fn from(e: ServerError) -> Self {
        let code = match &e {
            ServerError::Bind { .. } => EXIT_CONFIG,
            ServerError::Corpus(c) => corpus_code(c),
            ServerError::Io(_) => EXIT_RUNTIME,
        };
        Self::new(code, e)
    }
}

fn io_failure(path: &Path, e: std::io::Error) -> Failure {
    Failure::new(EXIT_RUNTIME, format!("{}: {e}", path.display()))
}

fn load_preset(name: &str) -> Result<BiasPreset, Failure> {
    if let Some(p) = BiasPreset::builtin(name) {
        return Ok(p);
    }
    let text = fs::read_to_string(name).map_err(|e| {
        Failure::config(format!(
            "bias preset {name:?} is neither built in ({}) nor a readable file: {e}",
            BiasPreset::BUILTIN.join(", ")
        ))
    })?;
    let preset: BiasPreset = serde_json::from_str(&text)
        .map_err(|e| Failure::config(format!("{name}: not a bias preset: {e}")))?;
    preset.params.validate()?;
    Ok(preset)
}

fn build_source(args: &GenerateArgs) -> Result<Box<dyn SequenceSource>, Failure> {
    let spec = args.length.spec();
    let source = args.source.as_str();
    if source != "llm" && args.llm.any_set() {
        return Err(Failure::config(
            "--endpoint, --model, --temperature, --timeout-secs, --max-retries and --concurrency apply only to --source llm",
        ));
    }
    if source == "uniform" {
        return Ok(Box::new(UniformSource::new(args.seed, spec)?));
    }
    if let Some(name) = source.strip_prefix("bias:") {
        let preset = load_preset(name)?;
        return Ok(Box::new(BiasSource::new(
            preset.name,
            preset.params,
            args.seed,
            spec,
        )?));
    }
    if source == "llm" {
        let llm = &args.llm;
        let endpoint = llm
            .endpoint
            .clone()
            .ok_or_else(|| Failure::config("--source llm needs --endpoint"))?;
        let api_key = std::env::var(&llm.api_key_env).unwrap_or_default();
        let mut config = LlmEndpointConfig::new(
            endpoint,
            llm.model.clone().unwrap_or_else(|| DEFAULT_MODEL.into()),
            api_key,
        );
        config.temperature = llm.temperature;
        if let Some(secs) = llm.timeout_secs {
            config.timeout = Duration::try_from_secs_f64(secs)
                .map_err(|e| Failure::config(format!("--timeout-secs: {e}")))?;
        }
        if let Some(r) = llm.max_retries {
            config.max_retries = r;
        }
        if let Some(c) = llm.concurrency {
            config.concurrency = c;
        }
        return Ok(Box::new(LlmSource::new(config, spec, args.seed)?));
    }
    Err(Failure::config(format!(
        "unknown source {source:?}; expected uniform, llm or bias:<preset>"
    )))
}

fn generate(args: GenerateArgs) -> Result<(), Failure> {
    let mut source = build_source(&args)?;
    let paths = CorpusPaths::for_corpus(&args.out);
    let options = CollectOptions {
        attempt_budget: args.attempt_budget,
        stop_after: None,
    };
    let manifest = if args.resume {
        let stored = RunManifest::load(&paths.manifest)?;
        if stored.target_count != args.n {
            return Err(Failure::config(format!(
                "manifest target is {} but --n is {}",
                stored.target_count, args.n
            )));
        }
        if args.attempt_budget.is_some_and(|b| b != stored.attempt_budget) {
            return Err(Failure::config(
                "--attempt-budget differs from the manifest of the run being resumed",
            ));
        }
        resume(&mut source, &paths, &options)?
    } else {
        collect(&mut source, args.n, &paths, &options)?
    };
    emitln!(
        "{}: {} accepted, {} rejected, {} attempts (source {}, seed {})",
        paths.corpus.display(),
        manifest.completed_count,
        manifest.rejected_count,
        manifest.attempts,
        manifest.source_tag,
        manifest
            .seed
            .map_or_else(|| "none".to_string(), |s| s.to_string()),
    );
    emitln!("manifest: {}", paths.manifest.display());
    Ok(())
}

fn analyze(args: AnalyzeArgs) -> Result<(), Failure> {
    let corpus = read_corpus(&args.input).map_err(Failure::config)?;
    let reports = render_reports(&corpus, &BaselineSet::reference(), &args.profiles)?;
    fs::create_dir_all(&args.out_dir).map_err(|e| io_failure(&args.out_dir, e))?;
    for (name, contents) in &reports {
        let path = args.out_dir.join(name);
        fs::write(&path, contents).map_err(|e| io_failure(&path, e))?;
    }
    emit(&reports[0].1);
    emitln!(
        "wrote {} files to {}",
        reports.len(),
        args.out_dir.display()
    );
    Ok(())
}

fn compare_cmd(args: CompareArgs) -> Result<(), Failure> {
    let corpus = read_corpus(&args.input).map_err(Failure::config)?;
    let stats = aggregate(&corpus)?;
    let table = compare(&stats, &BaselineSet::reference(), &args.profiles)?;
    match args.format {
        Format::Text => emit(&table.render_text()),
        Format::Csv => emit(&table.to_csv()),
    }
    Ok(())
}

fn calibrate(args: CalibrateArgs) -> Result<(), Failure> {
    let targets = PatternTargets::new(args.repeat, args.increase, args.decrease);
    let calibration = calibrate_bias_model(targets, args.seed, &CalibrationOptions::default())?;
    let name = args.name.clone().unwrap_or_else(|| {
        args.out
            .file_stem()
            .map_or_else(|| "custom".into(), |s| s.to_string_lossy().into_owned())
    });
    let preset = BiasPreset {
        name,
        params: calibration.params,
        targets: Some(targets),
    };
    let mut doc = serde_json::to_value(&preset).expect("preset serializes");
    doc["calibration"] = json!({
        "achieved": calibration.achieved,
        "residual": calibration.residual,
        "iterations": calibration.iterations,
        "seed": calibration.seed,
    });
    let text = serde_json::to_string_pretty(&doc).expect("json value serializes") + "\n";
    fs::write(&args.out, text).map_err(|e| io_failure(&args.out, e))?;
    emitln!(
        "{}: p_repeat {:.6} p_up {:.6} p_down {:.6} (residual {:.6} after {} iterations)",
        args.out.display(),
        calibration.params.p_repeat,
        calibration.params.p_up,
        calibration.params.p_down,
        calibration.residual,
        calibration.iterations,
    );
    Ok(())
}

fn serve(args: ServeArgs) -> Result<(), Failure> {
    let config = ServeConfig {
        addr: SocketAddr::new(args.bind, args.port),
        corpus: args.corpus,
        assets: args.assets,
    };
    let runtime = tokio::runtime::Runtime::new().map_err(|e| Failure::new(EXIT_RUNTIME, e))?;
    runtime.block_on(async {
        let (listener, app) = rngt_server::bind(&config).await?;
        let addr = listener.local_addr().map_err(ServerError::Io)?;
        emitln!("serving http://{addr} (corpus {})", config.corpus.display());
        rngt_server::serve_on(listener, app).await?;
        Ok(())
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Generate(a) => generate(a),
        Command::Analyze(a) => analyze(a),
        Command::Compare(a) => compare_cmd(a),
        Command::Calibrate(a) => calibrate(a),
        Command::Serve(a) => serve(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
