use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use thiserror::Error;
use tracing_subscriber::EnvFilter;

use veil_core::{ClientMode, SniValue};

mod commands;
mod session;

use session::SessionError;

/// Masked server-name channels, the SNI observer they defeat, and the lab
/// tools around both.
#[derive(Debug, Parser)]
#[command(name = "veil", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a fronting server from a certificate store.
    Serve(ServeArgs),
    /// Connect to a server, establish the channel and echo a payload.
    Connect(ConnectArgs),
    /// Classify every flow in a capture file the way an on-path observer would.
    Sniff {
        capture: PathBuf,
    },
    /// Simulate a shaped download and emit its throughput timeline as CSV.
    Shapesim(ShapesimArgs),
    /// Compare legacy and masked transfer times.
    Bench(BenchArgs),
    /// Create or update a certificate store entry.
    Certgen(CertgenArgs),
}

#[derive(Debug, clap::Args)]
pub struct ServeArgs {
    /// Address to listen on. Use port 443 to match deployed servers.
    #[arg(long, default_value = "127.0.0.1:8443")]
    pub listen: SocketAddr,
    #[arg(long)]
    pub store: PathBuf,
    /// Refuse nameless ClientHellos with a fallback alert.
    #[arg(long)]
    pub legacy_only: bool,
    /// Append every record crossing the server to this capture file.
    #[arg(long)]
    pub capture: Option<PathBuf>,
}

#[derive(Debug, clap::Args)]
pub struct ConnectArgs {
    pub addr: String,
    /// Server name to reach. Address literals are rejected.
    #[arg(long, value_parser = parse_sni)]
    pub sni: SniValue,
    #[arg(long, default_value = "masked", value_parser = parse_mode)]
    pub mode: ClientMode,
    /// Require the first-phase certificate to carry this subject.
    #[arg(long)]
    pub expect_front_name: Option<String>,
    /// Bytes to echo through the established channel.
    #[arg(long, default_value_t = 1024)]
    pub payload: usize,
    /// Record this connection's traffic to a capture file.
    #[arg(long)]
    pub capture: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, clap::Args)]
pub struct ShapesimArgs {
    /// File of `host rate` lines; rates like 1M or 2.5Mbps are bits per second.
    #[arg(long)]
    pub rate_map: Option<PathBuf>,
    /// Rate for unclassified flows and unlisted names.
    #[arg(long, default_value = "1G")]
    pub default_rate: String,
    /// Link capacity in bits per second.
    #[arg(long, default_value = "2.5M")]
    pub capacity: String,
    /// One-way propagation delay.
    #[arg(long, default_value_t = 10)]
    pub delay_ms: u64,
    /// Shaper bucket depth in bytes.
    #[arg(long)]
    pub bucket_depth: Option<u64>,
    #[arg(long, default_value = "masked", value_parser = parse_mode)]
    pub mode: ClientMode,
    #[arg(long, default_value = "video.example", value_parser = parse_sni)]
    pub sni: SniValue,
    /// Download size in bytes.
    #[arg(long, default_value_t = 10_000_000)]
    pub payload: u64,
    /// CSV output path; standard output when absent.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    /// Also write the simulated wire capture.
    #[arg(long)]
    pub capture: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
}

#[derive(Debug, clap::Args)]
pub struct BenchArgs {
    /// Payload size in bytes. A "100Mb" transfer is 12500000 bytes if read
    /// as megabits and 100000000 if read as megabytes; the default is the
    /// megabit reading.
    #[arg(long, default_value_t = 12_500_000)]
    pub payload: u64,
    #[arg(long, default_value_t = 5)]
    pub repeats: u32,
    /// Simulated link capacity in bits per second.
    #[arg(long, default_value = "10M")]
    pub capacity: String,
    /// Simulated one-way propagation delay.
    #[arg(long, default_value_t = 10)]
    pub delay_ms: u64,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Time real loopback sockets instead of the simulated link. Results are
    /// noisy and host dependent.
    #[arg(long)]
    pub wallclock: bool,
    /// Print the report as JSON.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, clap::Args)]
pub struct CertgenArgs {
    #[arg(long)]
    pub subject: String,
    #[arg(long, default_value_t = 365)]
    pub days: u32,
    #[arg(long)]
    pub out: PathBuf,
    /// Make this the certificate served to nameless ClientHellos.
    #[arg(long)]
    pub default: bool,
    /// Derive the key from a seed instead of the OS generator.
    #[arg(long)]
    pub seed: Option<u64>,
}

fn parse_sni(s: &str) -> Result<SniValue, String> {
    SniValue::new(s).map_err(|e| e.to_string())
}

fn parse_mode(s: &str) -> Result<ClientMode, String> {
    s.parse::<ClientMode>().map_err(|e| e.to_string())
}

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad flags, unreadable config or input files.
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Session(#[from] SessionError),
    #[error("{0}")]
    Failure(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Session(_) | CliError::Failure(_) => 1,
        }
    }
}

fn main() -> ExitCode {
    let filter = EnvFilter::try_from_env("VEIL_LOG").unwrap_or_else(|_| EnvFilter::new("info"));
    tracing_subscriber::fmt()
        .json()
        .with_env_filter(filter)
        .with_writer(std::io::stderr)
        .init();

    let cli = Cli::parse();
    let result = match cli.command {
        Command::Serve(args) => commands::serve(args),
        Command::Connect(args) => commands::connect(args),
        Command::Sniff { capture } => commands::sniff(&capture),
        Command::Shapesim(args) => commands::shapesim(args),
        Command::Bench(args) => commands::bench(args),
        Command::Certgen(args) => commands::certgen(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

#[cfg(test)]
mod tests {
    use clap::CommandFactory;

    use super::*;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn address_literals_are_usage_errors() {
        let err = Cli::try_parse_from(["veil", "connect", "127.0.0.1:1", "--sni", "10.0.0.1"]).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(Cli::try_parse_from(["veil", "connect", "x:1", "--sni", "video.example"]).is_ok());
    }

    #[test]
    fn bench_help_spells_out_both_readings() {
        let help = Cli::command().find_subcommand_mut("bench").unwrap().render_long_help().to_string();
        assert!(help.contains("12500000") && help.contains("100000000"));
    }
}
