use clap::Parser;
use crl_core::sandbox::{global_worker_cap, ExecLimits, RunnerSet, WORKERS_ENV};
use crl_service::{serve, ServiceConfig, COMPILE_ALLOWANCE, DEFAULT_OVERHEAD};
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

/// Verification service: runs submitted programs against test cases.
#[derive(Parser, Debug)]
#[command(name = "crl-service", version)]
struct Args {
    #[arg(long, default_value = "127.0.0.1")]
    host: String,
    /// 0 picks a free port; the bound address is printed on startup.
    #[arg(long, default_value_t = 8080)]
    port: u16,
    /// Verifications executing at once. Defaults to the sandbox worker cap
    /// (the `CRL_SANDBOX_WORKERS` variable, else the CPU count).
    #[arg(long)]
    workers: Option<usize>,
    /// Requests allowed to wait for a worker before 503 is returned.
    #[arg(long, default_value_t = 256)]
    max_queue: usize,
    /// TOML file of `[[runner]]` entries replacing the built-in runners.
    #[arg(long)]
    runner_config: Option<PathBuf>,
    /// Default per-test wall-clock timeout.
    #[arg(long, default_value_t = ExecLimits::default().wall_timeout_ms)]
    timeout_ms: u64,
    /// Slack added to `timeout * tests` for the per-request time cap.
    #[arg(long, default_value_t = DEFAULT_OVERHEAD.as_millis() as u64)]
    overhead_ms: u64,
    /// Added to the time cap for runners with a compile step.
    #[arg(long, default_value_t = COMPILE_ALLOWANCE.as_millis() as u64)]
    compile_allowance_ms: u64,
}

async fn shutdown_signal() {
    let ctrl_c = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    let term = async {
        match tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()) {
            Ok(mut s) => {
                s.recv().await;
            }
            Err(_) => std::future::pending::<()>().await,
        }
    };
    tokio::select! {
        _ = ctrl_c => {},
        _ = term => {},
    }
    log::info!("shutdown signal received, draining");
}

fn load_runners(path: &Option<PathBuf>) -> Result<RunnerSet, String> {
    let Some(path) = path else {
        return Ok(RunnerSet::default());
    };
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    RunnerSet::from_toml(&text).map_err(|e| format!("{}: {e}", path.display()))
}

#[tokio::main]
async fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let args = Args::parse();
    let runners = match load_runners(&args.runner_config) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: runner config {e}");
            return ExitCode::from(2);
        }
    };
    for name in runners.names() {
        let spec = runners.get(name).expect("listed");
        if let Err(e) = spec.check_available() {
            log::warn!("{e}");
        }
    }
    let default_limits = ExecLimits {
        wall_timeout_ms: args.timeout_ms,
        ..ExecLimits::default()
    };
    if let Err(e) = default_limits.validate() {
        eprintln!("error: {e}");
        return ExitCode::from(2);
    }
    let config = ServiceConfig {
        runners,
        default_limits,
        workers: args.workers.unwrap_or_else(global_worker_cap).max(1),
        max_queue: args.max_queue,
        overhead: Duration::from_millis(args.overhead_ms),
        compile_allowance: Duration::from_millis(args.compile_allowance_ms),
    };
    let listener = match tokio::net::TcpListener::bind((args.host.as_str(), args.port)).await {
        Ok(l) => l,
        Err(e) => {
            eprintln!("error: bind {}:{}: {e}", args.host, args.port);
            return ExitCode::from(1);
        }
    };
    let addr = listener.local_addr().expect("bound socket has an address");
    log::info!(
        "{} workers, queue {}, sandbox process cap {} (set {WORKERS_ENV} to change)",
        config.workers,
        config.max_queue,
        global_worker_cap()
    );
    println!("listening on http://{addr}");
    match serve(listener, config, shutdown_signal()).await {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
