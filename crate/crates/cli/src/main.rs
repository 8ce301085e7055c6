use std::path::PathBuf;
use std::time::Duration;

use anyhow::{bail, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use tokio::net::TcpListener;
use tracing::info;
use tracing_subscriber::EnvFilter;

use cotransport::harness::HeadlessOptions;
use cotransport::service::CommMode;
use cotransport::stats::Include;
use cotransport_cli::commands::{self, summary};
use cotransport_cli::server::{serve, ServeOptions};

#[derive(Parser)]
#[command(
    name = "cotransport",
    version,
    about = "Multi-operator collective transport: server, harness and analysis"
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Args)]
struct GameArgs {
    /// Scenario JSON; the bundled two-operator layout when omitted.
    #[arg(long)]
    scenario: Option<PathBuf>,
    #[arg(long, value_enum)]
    mode: Option<Mode>,
    #[arg(long)]
    seed: Option<u64>,
    /// Write an NDJSON recording of the game.
    #[arg(long)]
    record: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Host a live game over TCP and WebSocket on one port.
    Serve {
        #[command(flatten)]
        game: GameArgs,
        #[arg(long, default_value_t = 7878)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        /// Wall-clock milliseconds per tick; defaults to the scenario's dt.
        #[arg(long)]
        tick_ms: Option<u64>,
        /// Ticks between full keyframes.
        #[arg(long, default_value_t = 50)]
        keyframe_every: u64,
    },
    /// Play a game with scripted operators, as fast as possible.
    Headless {
        #[command(flatten)]
        game: GameArgs,
        /// JSON list of operator scripts; the bundled scripts when omitted.
        #[arg(long)]
        scripts: Option<PathBuf>,
        /// Stop after this many ticks.
        #[arg(long)]
        max_ticks: Option<u64>,
        /// Print the full report as JSON.
        #[arg(long)]
        json: bool,
    },
    /// Re-run a recording and check it reproduces itself.
    Replay { log: PathBuf },
    /// Per-game metrics from recordings.
    Analyze {
        #[arg(long = "log", required = true)]
        logs: Vec<PathBuf>,
        #[arg(long)]
        csv: bool,
    },
    /// Rank statistics.
    Stats {
        #[command(subcommand)]
        command: StatsCmd,
    },
}

#[derive(Subcommand)]
enum StatsCmd {
    /// Friedman test on a subjects x conditions CSV with a header row.
    Friedman {
        #[arg(long)]
        csv: PathBuf,
    },
    /// Borda count over per-scale rankings; the bundled study rankings when
    /// no file is given.
    Borda {
        #[arg(long)]
        rankings: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Inclusion::Stated)]
        include: Inclusion,
        /// Score negative scales as printed instead of reversing them.
        #[arg(long)]
        no_invert: bool,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Nc,
    Dc,
    Ic,
    Mc,
}

impl From<Mode> for CommMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Nc => CommMode::Nc,
            Mode::Dc => CommMode::Dc,
            Mode::Ic => CommMode::Ic,
            Mode::Mc => CommMode::Mc,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Inclusion {
    Significant,
    Stated,
    All,
}

impl From<Inclusion> for Include {
    fn from(i: Inclusion) -> Self {
        match i {
            Inclusion::Significant => Include::SignificantOnly,
            Inclusion::Stated => Include::Stated,
            Inclusion::All => Include::All,
        }
    }
}

fn main() -> Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(
            EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("info")),
        )
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    match cli.command {
        Cmd::Serve {
            game,
            port,
            host,
            tick_ms,
            keyframe_every,
        } => {
            let cfg = commands::load_scenario(
                game.scenario.as_deref(),
                game.mode.map(Into::into),
                game.seed,
            )?;
            let mut opts = ServeOptions::new(cfg);
            if let Some(ms) = tick_ms {
                opts.tick = Duration::from_millis(ms.max(1));
            }
            opts.record = game.record;
            opts.keyframe_every = keyframe_every;
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(async {
                let listener = TcpListener::bind((host.as_str(), port)).await?;
                info!("listening on {}", listener.local_addr()?);
                let shutdown = async {
                    let _ = tokio::signal::ctrl_c().await;
                };
                let out = serve(listener, opts, shutdown).await?;
                println!(
                    "{}/{} points at {:.1} s ({:?}), world {}",
                    out.status.points_scored,
                    out.status.max_points,
                    out.status.sim_time,
                    out.status.phase,
                    out.world_digest
                );
                Ok(())
            })
        }
        Cmd::Headless {
            game,
            scripts,
            max_ticks,
            json,
        } => {
            let cfg = commands::load_scenario(
                game.scenario.as_deref(),
                game.mode.map(Into::into),
                game.seed,
            )?;
            let scripts = commands::load_scripts(scripts.as_deref())?;
            let opts = HeadlessOptions {
                max_ticks,
                ..HeadlessOptions::default()
            };
            let out = commands::headless(&cfg, scripts, &opts, game.record.as_deref())?;
            if json {
                println!("{}", serde_json::to_string_pretty(&out.report)?);
            } else {
                println!("{} ({:?})", summary(&out.report), out.status.phase);
            }
            Ok(())
        }
        Cmd::Replay { log } => {
            let out = commands::replay_file(&log)?;
            println!(
                "replay matches: {}; world {}",
                summary(&out.report),
                out.digest
            );
            Ok(())
        }
        Cmd::Analyze { logs, csv } => {
            print!("{}", commands::analyze(&logs, csv)?);
            Ok(())
        }
        Cmd::Stats { command } => {
            let text = match command {
                StatsCmd::Friedman { csv } => commands::friedman_csv(&csv)?,
                StatsCmd::Borda {
                    rankings,
                    include,
                    no_invert,
                } => commands::borda_file(rankings.as_deref(), include.into(), !no_invert)?,
            };
            if text.is_empty() {
                bail!("nothing to report");
            }
            print!("{text}");
            Ok(())
        }
    }
}
