use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use netwin::config::NetwinConfig;
use netwin::gateway::Gateway;
use netwin::runtime::{self, AllInOne, RuntimeError};
use netwin_core::handler::Placement;
use netwin_core::simulator::{ClockMode, Simulator, SimulatorNode};
use tracing_subscriber::EnvFilter;

#[derive(Debug, Parser)]
#[command(
    name = "netwin",
    version,
    about = "Network digital twin: simulator, handler, controller and gateway"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    flags: Flags,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// In-memory bus, simulator, handler, controller and gateway in one process.
    AllInOne,
    /// Device simulator publishing to an MQTT broker.
    Simulate,
    /// Signal handler between raw and curated topics.
    Handler,
    /// Twin controller consuming curated readings.
    Controller,
    /// Twin controller plus the HTTP/WebSocket gateway.
    Serve,
}

#[derive(Debug, Args)]
struct Flags {
    /// JSON configuration file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// `memory` or `mqtt://host[:port]`.
    #[arg(long, global = true)]
    bus: Option<String>,
    #[arg(long, global = true)]
    host: Option<String>,
    #[arg(long, global = true)]
    port: Option<u16>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Scenario file or built-in name (`ubikampus-demo`).
    #[arg(long, global = true)]
    scenario: Option<String>,
    #[arg(long, global = true)]
    snapshot_dir: Option<PathBuf>,
    /// One simulator tick per tick interval of wall time.
    #[arg(long, global = true, conflicts_with = "fast")]
    realtime: bool,
    /// Simulator ticks back to back.
    #[arg(long, global = true)]
    fast: bool,
    /// Run the signal handler inside the simulator.
    #[arg(long, global = true)]
    handler_on_device: bool,
    /// EWMA smoothing factor.
    #[arg(long, global = true)]
    alpha: Option<f64>,
    /// Directory of built console assets.
    #[arg(long, global = true)]
    console_dir: Option<PathBuf>,
}

impl Flags {
    fn resolve(self) -> Result<NetwinConfig, RuntimeError> {
        let mut c = match &self.config {
            Some(path) => NetwinConfig::load(path)?,
            None => NetwinConfig::default(),
        };
        if let Some(v) = self.bus {
            c.bus = v;
        }
        if let Some(v) = self.host {
            c.host = v;
        }
        if let Some(v) = self.port {
            c.port = v;
        }
        if let Some(v) = self.seed {
            c.seed = Some(v);
        }
        if let Some(v) = self.scenario {
            c.scenario = v;
        }
        if let Some(v) = self.snapshot_dir {
            c.controller.snapshot_dir = Some(v);
        }
        if self.realtime {
            c.clock = ClockMode::Realtime;
        }
        if self.fast {
            c.clock = ClockMode::Fast;
        }
        if self.handler_on_device {
            c.handler.placement = Placement::Device;
        }
        if let Some(v) = self.alpha {
            c.handler.alpha = v;
        }
        if let Some(v) = self.console_dir {
            c.gateway.console_dir = v;
        }
        c.validate()?;
        Ok(c)
    }
}

async fn interrupted() {
    if let Err(e) = tokio::signal::ctrl_c().await {
        tracing::error!(error = %e, "cannot listen for interrupts");
        std::future::pending::<()>().await;
    }
}

async fn all_in_one(config: NetwinConfig) -> Result<(), RuntimeError> {
    let mut aio = AllInOne::start(config, true).await?;
    if let Some(gw) = aio.gateway() {
        println!("gateway listening on {}", gw.url());
    }
    tokio::select! {
        r = aio.run_simulation() => {
            r?;
            tracing::info!("scenario finished; serving until interrupted");
            interrupted().await;
        }
        _ = interrupted() => {}
    }
    if let Some(path) = aio.shutdown().await? {
        println!("snapshot written to {}", path.display());
    }
    Ok(())
}

async fn simulate(config: NetwinConfig) -> Result<(), RuntimeError> {
    let spec = config.load_scenario()?;
    let bus = runtime::connect_bus(&config.bus, "netwin-simulator").await?;
    let mut node =
        SimulatorNode::new(Simulator::new(spec), bus, Some(config.handler.clone())).await?;
    tokio::select! {
        r = node.run(config.clock) => r?,
        _ = interrupted() => {}
    }
    let stats = node.stats();
    println!(
        "published {} readings over {} ms; {} actions applied, {} rejected",
        stats.published(),
        stats.sim_time_ms(),
        stats.actions_applied(),
        stats.actions_rejected()
    );
    Ok(())
}

async fn handler(config: NetwinConfig) -> Result<(), RuntimeError> {
    let bus = runtime::connect_bus(&config.bus, "netwin-handler").await?;
    let mut handler_config = config.handler.clone();
    handler_config.placement = Placement::Cloud;
    let node = runtime::start_handler(bus, &handler_config)
        .await?
        .expect("cloud placement always starts a node");
    interrupted().await;
    node.shutdown();
    let total = node.stats().snapshot().total();
    println!(
        "consumed {}, accepted {}, published {}",
        total.consumed, total.accepted, total.published
    );
    Ok(())
}

async fn controller(config: NetwinConfig, serve: bool) -> Result<(), RuntimeError> {
    let bus = runtime::connect_bus(
        &config.bus,
        if serve {
            "netwin-serve"
        } else {
            "netwin-controller"
        },
    )
    .await?;
    let (controller, node) = runtime::start_controller(bus.clone(), &config.controller).await?;
    let gateway = if serve {
        let gw = Gateway::new(
            controller.clone(),
            Arc::clone(&bus),
            None,
            config.gateway.clone(),
            config.analytics.clone(),
        )
        .await?;
        let running = gw.bind(&format!("{}:{}", config.host, config.port)).await?;
        println!("gateway listening on {}", running.url());
        Some(running)
    } else {
        None
    };
    interrupted().await;
    if let Some(gw) = gateway {
        gw.shutdown().await;
    }
    node.shutdown();
    if let Some(path) = runtime::flush_snapshot(&controller, &config.controller)? {
        println!("snapshot written to {}", path.display());
    }
    Ok(())
}

#[tokio::main]
async fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("info")),
        )
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    let outcome = match cli.flags.resolve() {
        Ok(config) => match cli.command {
            Command::AllInOne => all_in_one(config).await,
            Command::Simulate => simulate(config).await,
            Command::Handler => handler(config).await,
            Command::Controller => controller(config, false).await,
            Command::Serve => controller(config, true).await,
        },
        Err(e) => Err(e),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
