use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use tracing_subscriber::EnvFilter;

use ehrsum_core::fhir_client::FhirClient;
use ehrsum_core::settings::Settings;
use ehrsum_service::{start, Service};

#[derive(Debug, Parser)]
#[command(name = "ehrsum-serve", version, about = "Serve grounded patient summaries over HTTP")]
struct Args {
    /// TOML configuration; EHRSUM_* variables override it.
    #[arg(long, env = "EHRSUM_CONFIG")]
    config: Option<PathBuf>,
    #[arg(long, default_value = "127.0.0.1:8080")]
    bind: String,
}

#[tokio::main]
async fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("info")))
        .init();
    let args = Args::parse();
    match run(args).await {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("ehrsum-serve: {e}");
            ExitCode::FAILURE
        }
    }
}

async fn run(args: Args) -> Result<(), Box<dyn std::error::Error>> {
    let settings = Settings::load(args.config.as_deref())?;
    let endpoint = settings.endpoint().ok_or("fhir.base_url is not configured")?;
    if settings.api_keys.is_empty() {
        tracing::warn!("no api keys configured; every request will be refused");
    }
    if settings.audit.salt.is_empty() {
        tracing::warn!("audit.salt is empty; patient hashes are unsalted");
    }
    let client = FhirClient::http(endpoint)?;
    let service = Service::new(&settings, client)?;
    let running = start(&service, &args.bind).await?;
    tracing::info!(addr = %running.addr, "listening");
    tokio::signal::ctrl_c().await?;
    tracing::info!("shutting down");
    running.stop().await?;
    Ok(())
}
