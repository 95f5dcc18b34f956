use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use msssn::mobility::MobilityModel;
use msssn::scenario::compare::{compare, table};
use msssn::scenario::output::{summary_for_comparison, summary_for_runs, write_outputs};
use msssn::scenario::{batch, ConfigError, RunError, RunOptions, RunResult, ScenarioConfig, System};

const EXIT_CONFIG: u8 = 2;
const EXIT_RUNTIME: u8 = 3;

#[derive(Parser)]
#[command(name = "msssn", version, about = "Mobile-sink sensor network simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one replication.
    Run(RunArgs),
    /// Run paired MSSSN and flat-baseline replications on shared seeds.
    Compare(CommonArgs),
    /// Run several replications of one system.
    Batch(RunArgs),
    /// Check a configuration file without running it.
    Validate(ValidateArgs),
    /// List model names and print every configuration default.
    DescribeModels,
}

#[derive(Args)]
struct CommonArgs {
    /// Scenario file (TOML). Defaults apply to anything it omits.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed; overrides the file.
    #[arg(long)]
    seed: Option<u64>,
    /// Replications; overrides the file.
    #[arg(long)]
    reps: Option<usize>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Write the JSONL event trace.
    #[arg(long)]
    trace: bool,
    /// Accept a sink range ratio outside 20-30.
    #[arg(long)]
    allow_out_of_paper_range: bool,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long, value_enum, default_value_t = SystemArg::Msssn)]
    system: SystemArg,
}

#[derive(Args)]
struct ValidateArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    allow_out_of_paper_range: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum SystemArg {
    Msssn,
    Flat,
}

impl From<SystemArg> for System {
    fn from(s: SystemArg) -> Self {
        match s {
            SystemArg::Msssn => System::Msssn,
            SystemArg::Flat => System::Flat,
        }
    }
}

enum Failure {
    Config(String),
    Runtime(String),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e.to_string())
    }
}

impl From<RunError> for Failure {
    fn from(e: RunError) -> Self {
        match e {
            RunError::Config(c) => Failure::Config(c.to_string()),
            other => Failure::Runtime(other.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Runtime(format!("writing outputs: {e}"))
    }
}

fn load(path: Option<&Path>, allow: bool) -> Result<ScenarioConfig, Failure> {
    let cfg = match path {
        Some(p) => ScenarioConfig::load(p, allow)?,
        None => ScenarioConfig::default(),
    };
    cfg.validate(allow)?;
    Ok(cfg)
}

fn run_many(args: &RunArgs, reps: Option<usize>) -> Result<(), Failure> {
    let c = &args.common;
    let cfg = load(c.config.as_deref(), c.allow_out_of_paper_range)?;
    let seed = c.seed.unwrap_or(cfg.seed);
    let reps = reps.or(c.reps).unwrap_or(cfg.replications as usize).max(1);
    let runs = batch(&cfg, seed, reps, args.system.into(), RunOptions { trace: c.trace })?;
    let indexed: Vec<(usize, &RunResult)> = runs.iter().enumerate().collect();
    let summary = summary_for_runs(seed, &runs.iter().collect::<Vec<_>>());
    write_outputs(&c.out, &indexed, &summary)?;
    for (i, r) in &indexed {
        let s = &r.summary;
        println!(
            "rep {i} seed {} {}: delivered {}/{} ({:.4}), mean delay {:.4} s, median sensor energy {:.6} J",
            r.seed,
            r.system.name(),
            s.delivered,
            s.generated,
            s.delivery_ratio,
            s.mean_delay,
            s.median_sensor_energy
        );
    }
    println!("outputs in {}", c.out.display());
    Ok(())
}

fn run_compare(c: &CommonArgs) -> Result<(), Failure> {
    let cfg = load(c.config.as_deref(), c.allow_out_of_paper_range)?;
    let seed = c.seed.unwrap_or(cfg.seed);
    let reps = c.reps.unwrap_or(cfg.replications as usize).max(1);
    let cmp = compare(&cfg, seed, reps, RunOptions { trace: c.trace })?;
    let mut runs: Vec<(usize, &RunResult)> = Vec::new();
    for p in &cmp.pairs {
        runs.push((p.replication, &p.msssn));
        runs.push((p.replication, &p.flat));
    }
    write_outputs(&c.out, &runs, &summary_for_comparison(seed, &cmp))?;
    print!("{}", table(&cmp));
    println!("outputs in {}", c.out.display());
    Ok(())
}

fn describe_models() {
    println!("mobility models (sinks.mobility, sinks.models):");
    for m in MobilityModel::NAMES {
        println!("  {m}");
    }
    println!("tree strategies (tree.strategy): sink_rooted, access_node_rooted");
    println!("broadcast strategies (broadcast.strategy): flood, probabilistic {{ p }}, counter {{ k }}, location {{ theta }}");
    println!("sensor layouts (sensors.layout): uniform, grid, file");
    println!();
    println!("# defaults");
    print!("{}", ScenarioConfig::default().to_toml());
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(a) => run_many(a, Some(1)),
        Command::Batch(a) => run_many(a, None),
        Command::Compare(c) => run_compare(c),
        Command::Validate(v) => {
            ScenarioConfig::load(&v.config, v.allow_out_of_paper_range)
                .map(|_| println!("{}: ok", v.config.display()))
                .map_err(Failure::from)
        }
        Command::DescribeModels => {
            describe_models();
            Ok(())
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("config error: {msg}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_RUNTIME)
        }
    }
}
