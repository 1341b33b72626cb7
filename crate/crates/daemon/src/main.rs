use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use clap::Parser;
use gridwatch_core::monitor::{Monitor, MonitorOptions};
use gridwatch_core::retention::read_retention;
use gridwatch_core::{
    load_paths, ArchiveSpec, Clock, NotificationLog, ScaledClock, SchedulerPolicy, SeriesStore, SystemClock,
};
use gridwatch_daemon::{pipe, router, spawn, ApiState, EngineConfig, TokenTable};

#[derive(Parser)]
#[command(name = "gridwatchd", version, about = "Grid monitoring daemon")]
struct Cli {
    /// Configuration files or directories of .cfg files.
    #[arg(short = 'c', long = "config", required = true)]
    config: Vec<PathBuf>,
    /// Check the configuration and exit.
    #[arg(long)]
    verify: bool,
    #[arg(long, default_value = "127.0.0.1")]
    bind: String,
    #[arg(long, default_value_t = 8080)]
    port: u16,
    /// Retention file, read at startup and rewritten every 60 virtual seconds.
    #[arg(long)]
    state_file: Option<PathBuf>,
    /// FIFO or plain file to read external commands from.
    #[arg(long)]
    command_pipe: Option<PathBuf>,
    /// Virtual clock speed factor.
    #[arg(long, default_value_t = 1.0)]
    speed: f64,
    /// Token file with `token<TAB>role` lines.
    #[arg(long)]
    tokens: Option<PathBuf>,
    #[arg(long)]
    notification_log: Option<PathBuf>,
    /// Directory for time-series files; in memory when unset.
    #[arg(long)]
    rrd_dir: Option<PathBuf>,
    #[arg(long, default_value_t = 8)]
    max_parallel: usize,
    #[arg(long, default_value_t = 10)]
    check_timeout: u64,
    /// Fraction of the interval used as scheduling jitter, 0 to 0.1.
    #[arg(long, default_value_t = 0.0)]
    jitter: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Time-series base step in seconds.
    #[arg(long, default_value_t = 10)]
    step: u64,
    /// Archive as CF:STEPS_PER_ROW:ROWS; repeatable.
    #[arg(long = "archive")]
    archives: Vec<ArchiveSpec>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("gridwatchd: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<(), Box<dyn std::error::Error>> {
    let model = load_paths(&cli.config)?;
    if cli.verify {
        println!(
            "configuration OK: {} hosts, {} services, {} sites, {} contacts, {} escalations",
            model.hosts.len(),
            model.services.len(),
            model.sites.len(),
            model.contacts.len(),
            model.escalations.len()
        );
        return Ok(());
    }
    if !(cli.speed.is_finite() && cli.speed > 0.0) {
        return Err("--speed must be positive".into());
    }
    let scheduler = SchedulerPolicy {
        max_parallel_checks: cli.max_parallel,
        check_timeout: Duration::from_secs(cli.check_timeout),
        jitter_fraction: cli.jitter,
    };
    scheduler.validate()?;
    let tokens = match &cli.tokens {
        Some(p) => TokenTable::load(p)?,
        None => {
            log::warn!("no token file given: every API request will be rejected");
            TokenTable::default()
        }
    };
    let archives = if cli.archives.is_empty() { ArchiveSpec::defaults() } else { cli.archives.clone() };
    let series = SeriesStore::new(cli.step, archives, cli.rrd_dir.clone())?;
    let log = match &cli.notification_log {
        Some(p) => NotificationLog::open(p)?,
        None => NotificationLog::in_memory(),
    };

    let clock: Arc<dyn Clock> = Arc::new(ScaledClock::new(SystemClock.now(), cli.speed));
    let model = Arc::new(model);
    let options = MonitorOptions { scheduler, seed: cli.seed, ..MonitorOptions::default() };
    let mut monitor = Monitor::new(model.clone(), options, clock.now()).with_log(log).with_series(series);
    if let Some(path) = cli.state_file.as_ref().filter(|p| p.exists()) {
        let loaded = read_retention(path, &model)?;
        let dropped = monitor.restore(loaded.snapshot);
        log::info!("restored state from {} ({dropped} stale entries dropped)", path.display());
    }

    let engine = spawn(
        monitor,
        clock,
        EngineConfig { state_file: cli.state_file.clone(), ..EngineConfig::default() },
    );
    if let Some(p) = &cli.command_pipe {
        pipe::spawn_command_pipe(p.clone(), engine.commands())?;
    }
    let state = ApiState {
        snapshot: engine.snapshot_cell(),
        commands: engine.commands(),
        tokens: Arc::new(tokens),
    };
    let addr: SocketAddr = format!("{}:{}", cli.bind, cli.port).parse()?;
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(addr).await?;
        log::info!("serving on http://{}", listener.local_addr()?);
        axum::serve(listener, router(state))
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
                log::info!("shutting down");
            })
            .await
    })?;
    engine.shutdown();
    Ok(())
}
