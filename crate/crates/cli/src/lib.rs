//! The `ehrsum` command. [`run`] takes the argument list and output streams
//! so it can be driven from tests; `main` only wires it to the process.

use std::fs;
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use chrono::{DateTime, Utc};
use clap::{ArgGroup, Parser, Subcommand, ValueEnum};

use ehrsum_core::evaluator::{evaluate, run_stress_suite, Checklist};
use ehrsum_core::fhir_client::{EndpointConfig, FhirClient, FhirSource};
use ehrsum_core::normalizer::ClinicalContextPackage;
use ehrsum_core::pipeline::build_package;
use ehrsum_core::settings::Settings;
use ehrsum_core::summarizer::{
    render_markdown, render_text, summarize_deterministic_with, summarize_with_fallback, GuardrailPrompt,
    HostedBackend, RenderMode, SummaryDocument, SummaryOptions,
};
use ehrsum_core::testkit::{
    export_fixtures, fixture_source, generate_patient, VariabilityProfile, MOCK_BASE, MOCK_MAX_PAGES, PROFILE_NAMES,
};

pub const EXIT_OK: u8 = 0;
pub const EXIT_USAGE: u8 = 1;
pub const EXIT_UNAVAILABLE: u8 = 2;
pub const EXIT_FAILED: u8 = 3;

#[derive(Debug, Parser)]
#[command(name = "ehrsum", version, about = "Grounded summaries of FHIR patient records")]
pub struct Cli {
    /// TOML configuration; EHRSUM_* variables override it.
    #[arg(long, global = true, env = "EHRSUM_CONFIG")]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutputFormat {
    Text,
    Json,
    Markdown,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    OmitEmpty,
    NoticeEmpty,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BackendArg {
    Deterministic,
    Hosted,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Retrieve one patient and print a summary.
    #[command(group(ArgGroup::new("source").required(true).args(["fhir_base", "fixtures"])))]
    Summarize {
        #[arg(long)]
        fhir_base: Option<String>,
        /// Directory written by `gen-fixtures`.
        #[arg(long)]
        fixtures: Option<PathBuf>,
        #[arg(long)]
        patient: String,
        #[arg(long, value_enum, default_value = "text")]
        format: OutputFormat,
        #[arg(long, value_enum, default_value = "notice-empty")]
        mode: ModeArg,
        #[arg(long, value_enum, default_value = "deterministic")]
        backend: BackendArg,
        /// Output file; `-` or absent for stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write the context package JSON here.
        #[arg(long)]
        emit_ccp: Option<PathBuf>,
        /// Pin the retrieval clock (RFC 3339) for reproducible output.
        #[arg(long)]
        now: Option<DateTime<Utc>>,
    },
    /// Score a summary against its context package.
    Evaluate {
        #[arg(long)]
        ccp: PathBuf,
        /// Summary JSON; `-` reads stdin.
        #[arg(long)]
        summary: PathBuf,
        #[arg(long)]
        checklist: Option<PathBuf>,
    },
    /// Write a synthetic patient in the fixture layout.
    GenFixtures {
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value = "baseline")]
        profile: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the named stress cases against the mock source.
    Stress {
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Write the suite report JSON here.
        #[arg(long)]
        report: Option<PathBuf>,
    },
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Unavailable(String),
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: io::Error,
    },
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) | CliError::Io { .. } => EXIT_USAGE,
            CliError::Unavailable(_) => EXIT_UNAVAILABLE,
        }
    }
}

fn io_err(context: impl Into<String>) -> impl FnOnce(io::Error) -> CliError {
    let context = context.into();
    move |source| CliError::Io { context, source }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I, stdin: &mut dyn Read, stdout: &mut dyn Write, stderr: &mut dyn Write) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let out: &mut dyn Write = if e.use_stderr() { stderr } else { stdout };
            let _ = write!(out, "{}", e.render());
            return code;
        }
    };
    let runtime = match tokio::runtime::Builder::new_current_thread().enable_all().build() {
        Ok(r) => r,
        Err(e) => {
            let _ = writeln!(stderr, "ehrsum: cannot start runtime: {e}");
            return EXIT_USAGE;
        }
    };
    match runtime.block_on(dispatch(cli, stdin, stdout, stderr)) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(stderr, "ehrsum: {e}");
            e.code()
        }
    }
}

async fn dispatch(
    cli: Cli,
    stdin: &mut dyn Read,
    stdout: &mut dyn Write,
    stderr: &mut dyn Write,
) -> Result<u8, CliError> {
    let settings = || {
        let s = Settings::load(cli.config.as_deref()).map_err(|e| CliError::Usage(e.to_string()))?;
        Ok::<_, CliError>(s)
    };
    match &cli.command {
        Command::Summarize {
            fhir_base,
            fixtures,
            patient,
            format,
            mode,
            backend,
            out,
            emit_ccp,
            now,
        } => {
            let settings = settings()?;
            let client = make_client(&settings, fhir_base.as_deref(), fixtures.as_deref(), *now)?;
            let ccp = build_package(&client, patient).await.map_err(|e| {
                if e.is_patient_unavailable() {
                    CliError::Unavailable(format!("patient {patient}: record unavailable from source"))
                } else {
                    CliError::Usage(e.to_string())
                }
            })?;
            if let Some(path) = emit_ccp {
                write_file(path, ccp.to_json().as_bytes())?;
            }
            let options = SummaryOptions::with_mode(match mode {
                ModeArg::OmitEmpty => RenderMode::OmitEmpty,
                ModeArg::NoticeEmpty => RenderMode::NoticeEmpty,
            });
            let doc = summarize(&settings, &ccp, &options, *backend).await?;
            if let Some(reason) = &doc.metadata.fallback_reason {
                let _ = writeln!(stderr, "ehrsum: {reason}; template summary used");
            }
            let rendered = match format {
                OutputFormat::Text => render_text(&doc),
                OutputFormat::Json => doc.to_json() + "\n",
                OutputFormat::Markdown => render_markdown(&doc),
            };
            match out.as_deref().filter(|p| *p != Path::new("-")) {
                Some(path) => write_file(path, rendered.as_bytes())?,
                None => stdout.write_all(rendered.as_bytes()).map_err(io_err("stdout"))?,
            }
            Ok(EXIT_OK)
        }
        Command::Evaluate {
            ccp,
            summary,
            checklist,
        } => {
            let ccp_text = read_input(ccp, stdin)?;
            let ccp = ClinicalContextPackage::from_json(&ccp_text)
                .map_err(|e| CliError::Usage(format!("{}: {e}", ccp.display())))?;
            let doc_text = read_input(summary, stdin)?;
            let doc = SummaryDocument::from_json(&doc_text)
                .map_err(|e| CliError::Usage(format!("{}: {e}", summary.display())))?;
            let list = match checklist {
                Some(p) => Checklist::from_json(&read_input(p, stdin)?)
                    .map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))?,
                None => Checklist::default(),
            };
            let report = evaluate(&ccp, &doc, &list).map_err(|e| CliError::Usage(e.to_string()))?;
            writeln!(stdout, "{}", report.to_json()).map_err(io_err("stdout"))?;
            Ok(if report.overall_pass { EXIT_OK } else { EXIT_FAILED })
        }
        Command::GenFixtures { seed, profile, out } => {
            let p = VariabilityProfile::named(profile, *seed).map_err(|_| {
                CliError::Usage(format!(
                    "unknown profile `{profile}`; expected one of {}",
                    PROFILE_NAMES.join(", ")
                ))
            })?;
            let set = generate_patient(&p);
            let dir = export_fixtures(&set, out).map_err(|e| CliError::Io {
                context: format!("cannot write fixtures to {}", out.display()),
                source: io::Error::other(e.to_string()),
            })?;
            writeln!(stdout, "{}", dir.display()).map_err(io_err("stdout"))?;
            Ok(EXIT_OK)
        }
        Command::Stress { seed, report } => {
            let suite = run_stress_suite(*seed).await;
            if let Some(path) = report {
                write_file(path, (suite.to_json() + "\n").as_bytes())?;
            }
            write!(stdout, "{}", suite.to_table()).map_err(io_err("stdout"))?;
            Ok(if suite.passed { EXIT_OK } else { EXIT_FAILED })
        }
    }
}

fn make_client(
    settings: &Settings,
    fhir_base: Option<&str>,
    fixtures: Option<&Path>,
    now: Option<DateTime<Utc>>,
) -> Result<FhirClient, CliError> {
    let client = match (fhir_base, fixtures) {
        (Some(base), None) => {
            FhirClient::http(settings.endpoint_for(base)).map_err(|e| CliError::Usage(e.to_string()))?
        }
        (None, Some(dir)) => {
            let source: Arc<dyn FhirSource> =
                Arc::new(fixture_source(dir).map_err(|e| CliError::Usage(e.to_string()))?);
            let config = EndpointConfig::new(MOCK_BASE).with_max_pages(MOCK_MAX_PAGES);
            FhirClient::new(config, source).map_err(|e| CliError::Usage(e.to_string()))?
        }
        _ => return Err(CliError::Usage("give exactly one of --fhir-base and --fixtures".into())),
    };
    Ok(match now {
        Some(at) => client.with_clock(Arc::new(move || at)),
        None => client,
    })
}

async fn summarize(
    settings: &Settings,
    ccp: &ClinicalContextPackage,
    options: &SummaryOptions,
    backend: BackendArg,
) -> Result<SummaryDocument, CliError> {
    match backend {
        BackendArg::Deterministic => Ok(summarize_deterministic_with(ccp, options)),
        BackendArg::Hosted => {
            let url = settings
                .backend
                .url
                .clone()
                .ok_or_else(|| CliError::Usage("backend.url is not configured for --backend hosted".into()))?;
            let hosted = HostedBackend::http(url, settings.backend.model.clone().unwrap_or_default())
                .map_err(|e| CliError::Usage(e.to_string()))?;
            Ok(summarize_with_fallback(ccp, &hosted, &GuardrailPrompt::default(), options).await)
        }
    }
}

fn read_input(path: &Path, stdin: &mut dyn Read) -> Result<String, CliError> {
    if path == Path::new("-") {
        let mut s = String::new();
        stdin.read_to_string(&mut s).map_err(io_err("stdin"))?;
        Ok(s)
    } else {
        fs::read_to_string(path).map_err(io_err(format!("cannot read {}", path.display())))
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    fs::write(path, bytes).map_err(io_err(format!("cannot write {}", path.display())))
}
