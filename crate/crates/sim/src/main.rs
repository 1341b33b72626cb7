use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use gridwatch_sim::{generate, load_dir, random_events, GenParams, LiveRun};

#[derive(Parser)]
#[command(name = "gridwatch-sim", version, about = "Synthetic grid testbed for gridwatch")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write monitor.cfg and scenario.cfg for a generated testbed.
    Generate {
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, default_value_t = 5)]
        sites: usize,
        /// Hosts per site, routers not included.
        #[arg(long, default_value_t = 3)]
        hosts: usize,
        #[arg(long, default_value_t = 1)]
        router_depth: usize,
        #[arg(long, default_value_t = 20000)]
        base_port: u16,
        /// Random failure/recovery pairs to script.
        #[arg(long, default_value_t = 0)]
        events: usize,
        /// Virtual seconds the random events are spread over.
        #[arg(long, default_value_t = 3600)]
        horizon: u64,
        #[arg(short = 'o', long)]
        out: PathBuf,
    },
    /// Start the agents of a generated directory and play its events.
    Run {
        dir: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        speed: f64,
        /// Stop after this many virtual seconds.
        #[arg(long)]
        duration: Option<u64>,
        /// Defaults to DIR/events.log.
        #[arg(long)]
        event_log: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let result = match Cli::parse().command {
        Command::Generate { seed, sites, hosts, router_depth, base_port, events, horizon, out } => {
            let params = GenParams { sites, hosts_per_site: hosts, router_depth, base_port };
            generate(seed, &params).and_then(|mut g| {
                if events > 0 {
                    random_events(&mut g.scenario, events, horizon)?;
                }
                g.write_to(&out)?;
                println!(
                    "wrote {} ({} agents, {} events)",
                    out.display(),
                    g.scenario.agents.len(),
                    g.scenario.events.len()
                );
                Ok(())
            })
        }
        Command::Run { dir, speed, duration, event_log } => load_dir(&dir).and_then(|(model, scenario)| {
            let log = event_log.unwrap_or_else(|| dir.join("events.log"));
            let mut run = LiveRun::start(&model, scenario, speed, Some(log))?;
            log::info!("agents up on 127.0.0.1; speed {speed}x");
            run.run(duration)
        }),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("gridwatch-sim: {e}");
            ExitCode::FAILURE
        }
    }
}
