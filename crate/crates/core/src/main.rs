use std::fs::File;
use std::io::{BufWriter, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use facemouse::app::fixtures::write_fixtures;
use facemouse::app::service::{serve, ServiceOptions};
use facemouse::app::{run_pipeline, DirectorySource, JsonlSink, PipelineConfig, Session, SystemClock};
use facemouse::{Error, Result};

#[derive(Parser)]
#[command(name = "facemouse", version, about = "Pointer control from nose tracking and eye blinks")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Process a directory of frames (sorted by file name) and write the event log.
    Run {
        #[arg(long)]
        frames: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Write an annotated PNG per frame here.
        #[arg(long)]
        overlay: Option<PathBuf>,
        /// Event log path; stdout when omitted.
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Accept one live session over WebSocket at /ws.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        bind: SocketAddr,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Write synthetic faces and a scripted blink session with ground truth.
    GenFixtures {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

fn load_config(path: Option<&Path>) -> Result<PipelineConfig> {
    match path {
        Some(p) => PipelineConfig::load(p),
        None => Ok(PipelineConfig::default()),
    }
}

fn with_path(p: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", p.display())))
}

fn run(frames: &Path, config: Option<&Path>, overlay: Option<&Path>, log: Option<&Path>) -> Result<()> {
    let cfg = load_config(config)?;
    let source = DirectorySource::open(frames).map_err(|e| match e {
        Error::Io(io) => with_path(frames)(io),
        other => other,
    })?;
    let mut session = Session::new(cfg, Box::new(SystemClock::new()))?;
    let out: Box<dyn Write> = match log {
        Some(p) => Box::new(BufWriter::new(File::create(p).map_err(with_path(p))?)),
        None => Box::new(BufWriter::new(std::io::stdout().lock())),
    };
    let mut sink = JsonlSink::new(out);
    let summary = run_pipeline(source, &mut session, &mut sink, overlay)?;
    eprintln!("{}", serde_json::to_string(&summary).expect("summary serializes"));
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let res = match cli.command {
        Cmd::Run { frames, config, overlay, log } => run(&frames, config.as_deref(), overlay.as_deref(), log.as_deref()),
        Cmd::Serve { bind, config } => load_config(config.as_deref()).and_then(|cfg| {
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(serve(bind, cfg, ServiceOptions::default()))
        }),
        Cmd::GenFixtures { out, seed } => write_fixtures(&out, seed),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
