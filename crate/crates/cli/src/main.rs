use std::collections::BTreeMap;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use protocheck_core::checker::Bounds;
use protocheck_core::report::{exit, run, Format, RunConfig};

#[derive(Clone, Copy, Debug, ValueEnum)]
enum EngineArg {
    Search,
    Ban,
    Strand,
    All,
}

impl EngineArg {
    fn name(self) -> &'static str {
        match self {
            EngineArg::Search => "search",
            EngineArg::Ban => "ban",
            EngineArg::Strand => "strand",
            EngineArg::All => "all",
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum FormatArg {
    Text,
    Json,
}

/// Looks for attacks on an authentication protocol and checks its
/// guarantees.
///
/// Exit status: 0 no violation, 10 attack or violated guarantee, 2 input
/// error, 3 state budget exceeded.
#[derive(Debug, Parser)]
#[command(name = "protocheck", version)]
struct Cli {
    /// Protocol file, or a bundled protocol name (nspk, nsl).
    #[arg(long)]
    protocol: String,

    #[arg(long, value_enum, default_value = "search")]
    engine: EngineArg,

    /// Sessions per role, e.g. `A=1,B=2`; overrides the #System section.
    #[arg(long, value_parser = parse_sessions)]
    sessions: Option<BTreeMap<String, usize>>,

    #[arg(long, default_value_t = 12)]
    max_depth: usize,

    #[arg(long, default_value_t = 1_000_000)]
    state_budget: usize,

    #[arg(long, value_enum, default_value = "text")]
    format: FormatArg,

    /// BAN idealization file, or a bundled one (nspk-sym.ban).
    #[arg(long)]
    idealization: Option<String>,

    /// Threads used to expand each search level.
    #[arg(long, default_value_t = 1)]
    workers: usize,
}

fn parse_sessions(s: &str) -> Result<BTreeMap<String, usize>, String> {
    s.split(',')
        .filter(|p| !p.trim().is_empty())
        .map(|p| {
            let (role, n) = p
                .split_once('=')
                .ok_or_else(|| format!("expected role=count, got `{p}`"))?;
            let n: usize = n
                .trim()
                .parse()
                .map_err(|_| format!("bad session count `{n}`"))?;
            Ok((role.trim().to_string(), n))
        })
        .collect()
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            eprint!("{e}");
            return ExitCode::from(exit::INPUT_ERROR as u8);
        }
    };
    let format = match cli.format {
        FormatArg::Text => Format::Text,
        FormatArg::Json => Format::Json,
    };
    let config = RunConfig {
        protocol: cli.protocol,
        engine: cli.engine.name().to_string(),
        bounds: Bounds {
            sessions: cli.sessions.unwrap_or_default(),
            max_depth: cli.max_depth,
            state_budget: cli.state_budget,
            workers: cli.workers,
        },
        format,
        idealization: cli.idealization,
    };
    match run(&config) {
        Ok(report) => {
            print!("{}", report.render(format));
            ExitCode::from(report.exit_code as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
