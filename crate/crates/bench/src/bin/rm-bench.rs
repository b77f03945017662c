use clap::{Args, Parser, Subcommand};
use rm_bench::{scenario1, scenario2, scenario3, Harness, HarnessConfig, ScenarioReport};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "rm-bench", about = "Benchmark scenarios for the resource manager")]
struct Cli {
    #[command(subcommand)]
    scenario: Scenario,
}

#[derive(Subcommand)]
enum Scenario {
    /// Deployment and termination times per composition and concurrency.
    Scenario1 {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 5)]
        repetitions: usize,
    },
    /// Alert reaction time for 1..4 monitored deployments.
    Scenario2 {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 50)]
        injections: usize,
    },
    /// Invocation round trips at increasing concurrency.
    Scenario3 {
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args)]
struct Common {
    /// Service configuration for the embedded server.
    #[arg(long, env = "RM_CONFIG")]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, env = "RM_TIME_SCALE")]
    time_scale: Option<f64>,
    #[arg(long)]
    evaluation_interval_ms: Option<u64>,
    /// Output directory; defaults to bench-out/<scenario>.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Use a running service instead of booting one.
    #[arg(long)]
    url: Option<String>,
    #[arg(long, default_value = "bench")]
    user: String,
    #[arg(long, env = "RM_BENCH_PASSWORD", default_value = "bench")]
    password: String,
}

impl Common {
    fn harness(&self) -> HarnessConfig {
        HarnessConfig {
            config_path: self.config.clone(),
            url: self.url.clone(),
            user: self.user.clone(),
            password: self.password.clone(),
            seed: self.seed,
            time_scale: self.time_scale,
            evaluation_interval_ms: self.evaluation_interval_ms,
            testbed_slots: None,
        }
    }
}

async fn run(cli: Cli) -> rm_bench::Result<(ScenarioReport, PathBuf)> {
    let (common, name) = match &cli.scenario {
        Scenario::Scenario1 { common, .. } => (common, "scenario1"),
        Scenario::Scenario2 { common, .. } => (common, "scenario2"),
        Scenario::Scenario3 { common } => (common, "scenario3"),
    };
    let out = common.out.clone().unwrap_or_else(|| PathBuf::from("bench-out").join(name));
    let h = Harness::start(&common.harness()).await?;
    let report = match &cli.scenario {
        Scenario::Scenario1 { repetitions, .. } => {
            let opts = scenario1::Options { repetitions: *repetitions, ..Default::default() };
            scenario1::run(&h, &opts).await
        }
        Scenario::Scenario2 { injections, .. } => {
            let opts = scenario2::Options { injections: *injections, ..Default::default() };
            scenario2::run(&h, &opts).await
        }
        Scenario::Scenario3 { .. } => scenario3::run(&h, &scenario3::Options::default()).await,
    };
    h.shutdown().await;
    Ok((report?, out))
}

#[tokio::main]
async fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "warn".into()))
        .with_writer(std::io::stderr)
        .init();
    match run(Cli::parse()).await {
        Ok((report, out)) => {
            print!("{}", report.render());
            if let Err(e) = report.write(&out) {
                eprintln!("writing {}: {e}", out.display());
                return ExitCode::FAILURE;
            }
            println!("wrote {}", out.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("rm-bench: {e}");
            ExitCode::FAILURE
        }
    }
}
