use std::error::Error;
use std::fs;
use std::io::{Read, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use triggerscope::eval::{
    aggregate_pabak, bench_latency, load_technique_dataset, parse_manifest, parse_moralization_jsonl,
    run_cbt_eval, run_moralization_eval, to_f64, to_flags, AliasTable, BenchCorpus, BenchOptions, BinThresholds,
    MetricReport,
};
use triggerscope::gateway::{HttpTransport, ResultCache, Transcript, TranscriptTransport, Transport};
use triggerscope::llm::PromptMode;
use triggerscope::mitigation;
use triggerscope::patterns::parse_rules;
use triggerscope::service::{self, AppState};
use triggerscope::taxonomy::LoadOptions;
use triggerscope::{AnalysisRequest, Analyzer, BackendConfig, Finding, Gateway, Locale, Taxonomy, Tier};

type CliResult<T> = Result<T, Box<dyn Error>>;

#[derive(Parser)]
#[command(name = "triggerscope", version, about = "Detect persuasion triggers in text")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct BackendArgs {
    #[arg(long, default_value = "pattern")]
    backend_tier: Tier,
    /// Chat-completion base URL for the API tiers.
    #[arg(long)]
    endpoint: Option<String>,
    #[arg(long, default_value = "")]
    model: String,
    #[arg(long, default_value_t = 60_000)]
    timeout_ms: u64,
    /// Environment variable holding the API key.
    #[arg(long)]
    credential_env: Option<String>,
    /// Replay completions from a JSON transcript instead of calling a model.
    #[arg(long)]
    transcript: Option<PathBuf>,
}

#[derive(Args, Clone)]
struct TaxonomyArgs {
    /// Taxonomy JSON; the shipped one by default.
    #[arg(long)]
    taxonomy: Option<PathBuf>,
    /// Pattern rule JSON; the shipped rules by default.
    #[arg(long)]
    rules: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Benchmark,
    Production,
}

#[derive(Subcommand)]
enum Command {
    /// Run the HTTP service.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8000")]
        listen: SocketAddr,
        #[arg(long)]
        cors_origin: Option<String>,
        #[command(flatten)]
        taxonomy: TaxonomyArgs,
        #[command(flatten)]
        backend: BackendArgs,
    },
    /// Analyze text from --text, --file or stdin.
    Analyze {
        #[arg(long)]
        text: Option<String>,
        #[arg(long)]
        file: Option<PathBuf>,
        #[arg(long, value_delimiter = ',', default_value = "cbt-regex")]
        plugins: Vec<String>,
        #[arg(long, default_value = "en")]
        locale: Locale,
        #[arg(long, default_value_t = 0.0)]
        sensitivity: f64,
        #[arg(long, default_value = "cli")]
        content_id: String,
        #[command(flatten)]
        taxonomy: TaxonomyArgs,
        #[command(flatten)]
        backend: BackendArgs,
    },
    /// Rewrite text, or produce --k alternatives, for the given findings.
    Rewrite {
        #[arg(long)]
        text: Option<String>,
        #[arg(long)]
        file: Option<PathBuf>,
        /// JSON array of findings.
        #[arg(long)]
        findings: PathBuf,
        #[arg(long)]
        k: Option<usize>,
        #[command(flatten)]
        backend: BackendArgs,
    },
    /// Score technique detection against span-level gold labels.
    EvalCbt {
        /// Tab-separated gold spans: article id, technique, start, end.
        #[arg(long)]
        labels: PathBuf,
        #[arg(long)]
        articles: PathBuf,
        /// Optional list of article ids to evaluate.
        #[arg(long)]
        manifest: Option<PathBuf>,
        /// Alias table mapping dataset labels to taxonomy ids.
        #[arg(long)]
        aliases: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "benchmark")]
        mode: ModeArg,
        #[command(flatten)]
        taxonomy: TaxonomyArgs,
        #[command(flatten)]
        backend: BackendArgs,
    },
    /// Score binary moralization detection from a JSONL file.
    EvalMoralization {
        #[arg(long)]
        data: PathBuf,
        #[command(flatten)]
        taxonomy: TaxonomyArgs,
        #[command(flatten)]
        backend: BackendArgs,
    },
    /// Time analysis over the length-binned corpus.
    BenchLatency {
        #[arg(long, default_value = "cbt-regex")]
        plugin: String,
        #[arg(long)]
        repetitions: Option<usize>,
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        short_max_chars: Option<usize>,
        #[arg(long)]
        medium_max_chars: Option<usize>,
        #[arg(long)]
        no_cached_pass: bool,
        #[command(flatten)]
        taxonomy: TaxonomyArgs,
        #[command(flatten)]
        backend: BackendArgs,
    },
    /// Load and check a taxonomy file.
    ValidateTaxonomy {
        path: PathBuf,
        /// Also require the full trigger and category counts.
        #[arg(long)]
        strict: bool,
    },
    /// PABAK between model labels and each rater (comma-separated 0/1 lists).
    Agreement {
        #[arg(long, value_delimiter = ',')]
        model: Vec<i64>,
        #[arg(long = "rater")]
        raters: Vec<String>,
    },
}

fn read_text(text: Option<String>, file: Option<&Path>) -> CliResult<String> {
    match (text, file) {
        (Some(t), None) => Ok(t),
        (None, Some(f)) => Ok(fs::read_to_string(f)?),
        (None, None) => {
            let mut buf = String::new();
            std::io::stdin().read_to_string(&mut buf)?;
            Ok(buf)
        }
        (Some(_), Some(_)) => Err("pass either --text or --file, not both".into()),
    }
}

fn load_taxonomy(args: &TaxonomyArgs) -> CliResult<Taxonomy> {
    match &args.taxonomy {
        Some(p) => Ok(Taxonomy::load(&fs::read(p)?, LoadOptions::default())?),
        None => Ok(Taxonomy::shipped()),
    }
}

fn backend_config(args: &BackendArgs) -> CliResult<BackendConfig> {
    let mut endpoint = args.endpoint.clone();
    // Transcripts replay through the normal HTTP path, so give them a placeholder address.
    if args.transcript.is_some() && endpoint.is_none() {
        endpoint = Some("transcript://local".to_string());
    }
    let config = BackendConfig {
        tier: args.backend_tier,
        endpoint,
        model_id: args.model.clone(),
        credential_env: args.credential_env.clone(),
        timeout_ms: args.timeout_ms,
    };
    config.validate()?;
    Ok(config)
}

fn gateway(args: &BackendArgs) -> CliResult<Gateway> {
    let transport: Arc<dyn Transport> = match &args.transcript {
        Some(path) => {
            let transcript: Transcript = serde_json::from_str(&fs::read_to_string(path)?)?;
            Arc::new(TranscriptTransport::new(transcript))
        }
        None => Arc::new(HttpTransport::new()),
    };
    Ok(Gateway::new(transport))
}

fn analyzer(tax: &TaxonomyArgs, backend: &BackendArgs) -> CliResult<Analyzer> {
    let taxonomy = load_taxonomy(tax)?;
    let rules = match &tax.rules {
        Some(p) => Some(parse_rules(&fs::read_to_string(p)?)?),
        None => None,
    };
    let registry = service::default_registry(&taxonomy, rules.as_deref())?;
    Ok(Analyzer::new(Arc::new(taxonomy), Arc::new(registry), gateway(backend)?).with_backend(backend_config(backend)?))
}

fn print_json<T: Serialize>(value: &T) -> CliResult<()> {
    let mut out = std::io::stdout().lock();
    match writeln!(out, "{}", serde_json::to_string_pretty(value)?) {
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
        other => Ok(other?),
    }
}

fn metric_table(m: &MetricReport) {
    eprintln!("{:<10} {:>8}", "metric", "value");
    eprintln!("{:<10} {:>8.4}", "precision", to_f64(m.precision));
    eprintln!("{:<10} {:>8.4}", "recall", to_f64(m.recall));
    eprintln!("{:<10} {:>8.4}", "f1", to_f64(m.f1));
    if let Some(macro_f1) = m.macro_f1 {
        eprintln!("{:<10} {:>8.4}", "macro-f1", to_f64(macro_f1));
    }
    eprintln!("{:<10} {:>8}", "n", m.n);
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Serve {
            listen,
            cors_origin,
            taxonomy,
            backend,
        } => {
            let state = AppState::new(analyzer(&taxonomy, &backend)?);
            let app = service::router(state, cors_origin.as_deref())?;
            let runtime = tokio::runtime::Runtime::new()?;
            runtime.block_on(async {
                let listener = tokio::net::TcpListener::bind(listen).await?;
                tracing::info!("listening on {}", listener.local_addr()?);
                service::serve(listener, app, async {
                    let _ = tokio::signal::ctrl_c().await;
                })
                .await
            })?;
        }
        Command::Analyze {
            text,
            file,
            plugins,
            locale,
            sensitivity,
            content_id,
            taxonomy,
            backend,
        } => {
            let analyzer = analyzer(&taxonomy, &backend)?;
            let ids: Vec<&str> = plugins.iter().map(String::as_str).collect();
            let mut request = AnalysisRequest::new(content_id, read_text(text, file.as_deref())?, &ids);
            request.locale = locale;
            request.sensitivity = sensitivity;
            let result = analyzer.analyze(&request)?;
            print_json(&result)?;
        }
        Command::Rewrite {
            text,
            file,
            findings,
            k,
            backend,
        } => {
            let text = read_text(text, file.as_deref())?;
            let findings: Vec<Finding> = serde_json::from_str(&fs::read_to_string(findings)?)?;
            let gateway = gateway(&backend)?;
            let config = backend_config(&backend)?;
            match k {
                None => {
                    let result = mitigation::rewrite(&gateway, &text, &findings, &config)?;
                    let check = mitigation::verify_rewrite(&text, &result, &findings);
                    print_json(&serde_json::json!({"result": result, "verification": check}))?;
                }
                Some(k) => print_json(&mitigation::alternatives(&gateway, &text, &findings, k, &config)?)?,
            }
        }
        Command::EvalCbt {
            labels,
            articles,
            manifest,
            aliases,
            mode,
            taxonomy,
            backend,
        } => {
            let tax = load_taxonomy(&taxonomy)?;
            let aliases = match aliases {
                Some(p) => AliasTable::parse(&fs::read_to_string(p)?, &tax)?,
                None => AliasTable::shipped(&tax)?,
            };
            let manifest = match manifest {
                Some(p) => Some(parse_manifest(&fs::read_to_string(p)?)),
                None => None,
            };
            let dataset = load_technique_dataset(&labels, &articles, manifest.as_deref(), &aliases)?;
            let mode = match mode {
                ModeArg::Benchmark => PromptMode::Benchmark,
                ModeArg::Production => PromptMode::Production,
            };
            let report = run_cbt_eval(&dataset, &tax, &gateway(&backend)?, &backend_config(&backend)?, mode)?;
            metric_table(&report.metrics);
            print_json(&report)?;
        }
        Command::EvalMoralization {
            data,
            taxonomy,
            backend,
        } => {
            let tax = load_taxonomy(&taxonomy)?;
            let instances = parse_moralization_jsonl(&fs::read_to_string(data)?)?;
            let report = run_moralization_eval(&instances, &tax, &gateway(&backend)?, &backend_config(&backend)?)?;
            metric_table(&report.metrics);
            if let Some(a) = &report.agreement {
                eprintln!("{:<10} {:>8.4}", "pabak", to_f64(a.aggregate_pabak));
            }
            print_json(&report)?;
        }
        Command::BenchLatency {
            plugin,
            repetitions,
            corpus,
            short_max_chars,
            medium_max_chars,
            no_cached_pass,
            taxonomy,
            backend,
        } => {
            let config = backend_config(&backend)?;
            let analyzer = analyzer(&taxonomy, &backend)?.with_cache(Arc::new(ResultCache::default()));
            let mut corpus = match corpus {
                Some(p) => BenchCorpus::parse(&fs::read_to_string(p)?)?,
                None => BenchCorpus::shipped(),
            };
            if short_max_chars.is_some() || medium_max_chars.is_some() {
                let defaults = corpus.thresholds;
                corpus = corpus.with_thresholds(BinThresholds {
                    short_max_chars: short_max_chars.unwrap_or(defaults.short_max_chars),
                    medium_max_chars: medium_max_chars.unwrap_or(defaults.medium_max_chars),
                })?;
            }
            let mut options = BenchOptions::for_tier(plugin, config.tier);
            if let Some(r) = repetitions {
                options.repetitions = r;
            }
            options.cached_pass = !no_cached_pass;
            let report = bench_latency(&analyzer, &corpus, &config, &options)?;
            eprintln!("{:<10} {:<7} {:>10} {:>10}", "pass", "bin", "median_ms", "p95_ms");
            let passes = [("uncached", Some(&report.uncached)), ("cached", report.cached.as_ref())];
            for (name, pass) in passes {
                let Some(pass) = pass else { continue };
                eprintln!("{:<10} {:<7} {:>10.3} {:>10.3}", name, "all", pass.median_ms, pass.p95_ms);
                for b in &pass.bins {
                    eprintln!("{:<10} {:<7} {:>10.3} {:>10.3}", name, b.bin.to_string(), b.median_ms, b.p95_ms);
                }
            }
            print_json(&report)?;
        }
        Command::ValidateTaxonomy { path, strict } => {
            let tax = Taxonomy::load(&fs::read(&path)?, LoadOptions { strict_counts: strict })?;
            print_json(&serde_json::json!({
                "valid": true,
                "version": tax.version(),
                "trigger_types": tax.trigger_types().len(),
                "moral_categories": tax.moral_categories().len(),
                "protagonist_roles": tax.protagonist_roles().len(),
            }))?;
        }
        Command::Agreement { model, raters } => {
            let model = to_flags(&model)?;
            let raters = raters
                .iter()
                .map(|r| {
                    let values = r
                        .split(',')
                        .map(|v| v.trim().parse::<i64>())
                        .collect::<Result<Vec<_>, _>>()?;
                    Ok(to_flags(&values)?)
                })
                .collect::<CliResult<Vec<_>>>()?;
            print_json(&aggregate_pabak(&model, &raters)?)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    tracing_subscriber::fmt().with_writer(std::io::stderr).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
