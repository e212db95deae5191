use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use voicebot::scenario::{replay, run_scenario, Scenario};
use voicebot::service::{serve, ServeOptions};
use voicebot::Trace;

#[derive(Parser)]
#[command(name = "voicebot", version, about = "Voice-command robot simulator")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a scenario to completion and print the final state.
    Run {
        scenario: PathBuf,
        /// Write the trace here ("-" for stdout).
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Override the scenario seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Rebuild the final firmware state from a trace file.
    Replay { trace: PathBuf },
    /// Run a scenario live and accept commands over WebSocket.
    Serve {
        scenario: PathBuf,
        /// Port to listen on (0 picks a free one).
        #[arg(long)]
        port: u16,
        /// Wall-clock milliseconds per simulation tick.
        #[arg(long, default_value_t = 10)]
        tick_ms: u64,
        /// Address to bind.
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
    },
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<(), Box<dyn std::error::Error>> {
    match cli.command {
        Cmd::Run {
            scenario,
            trace,
            seed,
        } => {
            let mut s = Scenario::load(&scenario)?;
            if let Some(seed) = seed {
                s = s.with_seed(seed);
            }
            let out = run_scenario(&s)?;
            match trace.as_deref() {
                Some(p) if p.as_os_str() == "-" => out.trace.write_jsonl(io::stdout().lock())?,
                Some(p) => {
                    let mut w = BufWriter::new(File::create(p)?);
                    out.trace.write_jsonl(&mut w)?;
                    w.flush()?;
                }
                None => {}
            }
            if trace.as_deref().is_none_or(|p| p.as_os_str() != "-") {
                println!("{}", serde_json::to_string_pretty(&out.final_state)?);
                println!(
                    "pose: x={:.4} y={:.4} heading={:.4}, {} events",
                    out.final_pose.x,
                    out.final_pose.y,
                    out.final_pose.heading,
                    out.trace.events.len()
                );
            }
        }
        Cmd::Replay { trace } => {
            let trace = Trace::read_jsonl(BufReader::new(File::open(trace)?))?;
            let state = replay(&trace)?;
            println!("{}", serde_json::to_string_pretty(&state)?);
        }
        Cmd::Serve {
            scenario,
            port,
            tick_ms,
            host,
        } => {
            let s = Scenario::load(&scenario)?;
            serve(s, &ServeOptions { host, port, tick_ms })?;
        }
    }
    Ok(())
}
