use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use rotaprec::harness::{self, ExperimentSpec, Method, OutputFormat};
use rotaprec::io::{self, SolutionRecord};
use rotaprec::{BracketMode, ChannelPair, Error, InitStrategy, OracleConfig, SolveConfig};

#[derive(Parser)]
#[command(
    name = "rotaprec",
    version,
    about = "Secrecy-rate precoding for MIMO wiretap channels"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Optimize the transmit covariance for one channel pair.
    Solve(SolveArgs),
    /// Average rates over seeded random channels.
    Montecarlo(MonteCarloArgs),
    /// Brute-force reference rate for nt ≤ 3.
    Oracle(OracleArgs),
}

#[derive(Args)]
struct ChannelArgs {
    /// Legitimate channel H (JSON or CSV)
    #[arg(long)]
    h: PathBuf,
    /// Eavesdropper channel G (JSON or CSV)
    #[arg(long)]
    g: PathBuf,
    /// Total transmit power
    #[arg(long)]
    pt: f64,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum InitArg {
    Gsvd,
    Identity,
}

#[derive(Args)]
struct SolveArgs {
    #[command(flatten)]
    channel: ChannelArgs,
    #[arg(long, value_enum, default_value = "gsvd")]
    init: InitArg,
    #[arg(long, default_value_t = 1e-4)]
    eps1: f64,
    #[arg(long, default_value_t = 1e-4)]
    eps2: f64,
    #[arg(long, default_value_t = 500)]
    max_iters: usize,
    #[arg(long, default_value = "verbatim", value_parser = parse_from_str::<BracketMode>)]
    bracket_mode: BracketMode,
    /// Output file, or - for stdout
    #[arg(long, default_value = "-")]
    out: String,
}

#[derive(Args)]
struct MonteCarloArgs {
    #[arg(long)]
    nt: usize,
    /// Receiver antennas, N or A..B
    #[arg(long, value_parser = parse_range)]
    nr: AntennaRange,
    /// Eavesdropper antennas, N or A..B
    #[arg(long, value_parser = parse_range)]
    ne: AntennaRange,
    /// Comma-separated total powers
    #[arg(long, value_delimiter = ',', required = true)]
    pt: Vec<f64>,
    #[arg(long, default_value_t = 1000)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Comma-separated subset of rotation-bfgs, gsvd, oracle
    #[arg(long, value_delimiter = ',', default_value = "rotation-bfgs,gsvd", value_parser = parse_from_str::<Method>)]
    methods: Vec<Method>,
    #[arg(long, default_value = "-")]
    out: String,
    #[arg(long, default_value = "csv", value_parser = parse_from_str::<OutputFormat>)]
    format: OutputFormat,
    /// Order cells by power and flag per-method monotonicity
    #[arg(long)]
    sweep: bool,
    /// Record wall-clock time per trial (makes output non-reproducible)
    #[arg(long)]
    timing: bool,
    #[arg(long, default_value_t = 1e-4)]
    eps1: f64,
    #[arg(long, default_value_t = 1e-4)]
    eps2: f64,
    #[arg(long, default_value_t = 500)]
    max_iters: usize,
    #[arg(long, default_value = "verbatim", value_parser = parse_from_str::<BracketMode>)]
    bracket_mode: BracketMode,
    /// Grid points per coordinate for the oracle method (nt = 2)
    #[arg(long, default_value_t = 200)]
    resolution: usize,
    /// Random samples for the oracle method (nt = 3)
    #[arg(long, default_value_t = 1_000_000)]
    samples: usize,
}

#[derive(Args)]
struct OracleArgs {
    #[command(flatten)]
    channel: ChannelArgs,
    /// Grid points per coordinate (nt = 2)
    #[arg(long, default_value_t = 200)]
    resolution: usize,
    /// Random samples (nt = 3)
    #[arg(long, default_value_t = 1_000_000)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "-")]
    out: String,
}

fn parse_from_str<T: std::str::FromStr<Err = Error>>(s: &str) -> Result<T, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

#[derive(Clone, Debug)]
struct AntennaRange(Vec<usize>);

fn parse_range(s: &str) -> Result<AntennaRange, String> {
    let num = |t: &str| t.trim().parse::<usize>().map_err(|e| format!("{t:?}: {e}"));
    match s.split_once("..") {
        Some((a, b)) => {
            let (a, b) = (num(a)?, num(b.trim_start_matches('='))?);
            if a > b {
                return Err(format!("empty range {s}"));
            }
            Ok(AntennaRange((a..=b).collect()))
        }
        None => Ok(AntennaRange(vec![num(s)?])),
    }
}

fn load_channel(args: &ChannelArgs) -> Result<ChannelPair, Error> {
    ChannelPair::new(io::read_matrix(&args.h)?, io::read_matrix(&args.g)?)
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable output");
    s.push('\n');
    s
}

fn run_solve(args: SolveArgs) -> Result<(), Error> {
    let ch = load_channel(&args.channel)?;
    let mut cfg = SolveConfig::new(args.channel.pt).with_bracket_mode(args.bracket_mode);
    cfg.init = match args.init {
        InitArg::Gsvd => InitStrategy::Gsvd,
        InitArg::Identity => InitStrategy::Identity,
    };
    cfg.eps1 = args.eps1;
    cfg.eps2 = args.eps2;
    cfg.max_iters = args.max_iters;
    let (sol, _) = rotaprec::solve(&ch, &cfg)?;
    io::write_output(&args.out, &to_json(&SolutionRecord::from(&sol)))
}

fn run_montecarlo(args: MonteCarloArgs) -> Result<(), Error> {
    let mut spec = ExperimentSpec::new(
        args.nt,
        args.nr.0,
        args.ne.0,
        args.pt,
        args.trials,
        args.seed,
    );
    spec.methods = args.methods;
    spec.eps1 = args.eps1;
    spec.eps2 = args.eps2;
    spec.max_iters = args.max_iters;
    spec.bracket_mode = args.bracket_mode;
    spec.timing = args.timing;
    spec.oracle = OracleConfig {
        grid_points: args.resolution,
        random_samples: args.samples,
        seed: args.seed,
    };
    let result = if args.sweep {
        harness::run_power_sweep(&spec)?
    } else {
        harness::run_table(&spec)?
    };
    harness::emit(&result, args.format, &args.out)
}

#[derive(Serialize)]
struct OracleOutput {
    rate: f64,
    nt: usize,
    resolution: usize,
    samples: usize,
}

fn run_oracle(args: OracleArgs) -> Result<(), Error> {
    let ch = load_channel(&args.channel)?;
    let cfg = OracleConfig {
        grid_points: args.resolution,
        random_samples: args.samples,
        seed: args.seed,
    };
    let pool = harness::thread_pool()?;
    let rate = pool.install(|| rotaprec::grid_oracle(&ch, args.channel.pt, &cfg))?;
    let out = OracleOutput {
        rate,
        nt: ch.nt(),
        resolution: args.resolution,
        samples: args.samples,
    };
    io::write_output(&args.out, &to_json(&out))
}

fn exit_code(e: &Error) -> u8 {
    match e.root() {
        Error::Argument(_) | Error::Contract(_) | Error::Parse { .. } | Error::Unsupported(_) => 2,
        Error::Numerical { .. } | Error::FailureThreshold { .. } | Error::Solve { .. } => 3,
        Error::Io { .. } => 4,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match cli.command {
        Command::Solve(a) => run_solve(a),
        Command::Montecarlo(a) => run_montecarlo(a),
        Command::Oracle(a) => run_oracle(a),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("rotaprec: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
