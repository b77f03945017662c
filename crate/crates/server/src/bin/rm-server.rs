use clap::Parser;
use std::path::PathBuf;

#[derive(Parser)]
#[command(name = "rm-server", about = "Continuum resource manager service")]
struct Args {
    /// Config file (TOML or JSON). Falls back to RM_CONFIG.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[tokio::main]
async fn main() -> std::process::ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()))
        .init();
    let args = Args::parse();
    let running = match rm_server::boot_from_env(args.config.as_deref()).await {
        Ok(r) => r,
        Err(e) => {
            eprintln!("rm-server: {e}");
            return std::process::ExitCode::FAILURE;
        }
    };
    println!("listening on {}", running.url());
    tokio::select! {
        _ = tokio::signal::ctrl_c() => running.shutdown().await,
        _ = std::future::pending::<()>() => {}
    }
    std::process::ExitCode::SUCCESS
}
