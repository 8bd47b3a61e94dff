use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use qmclab::report::{run_campaign_records, Record};
use qmclab::{CampaignConfig, CampaignSummary, Command, QmcError};

/// Seeded bound-verification and protocol-simulation campaigns.
///
/// Exit status: 0 when every check passes, 2 when any bound or guarantee
/// fails, 1 on usage or runtime errors. QMCLAB_MAX_DIM caps the total
/// Hilbert-space dimension (default 4096).
#[derive(Parser, Debug)]
#[command(name = "qmclab", version)]
struct Args {
    /// verify-bounds | tomo-sim | tomo-chain-sim | certify-sim | qmc-test-sim | gen-state | budget
    #[arg(long)]
    command: String,
    /// Subsystem dimensions, e.g. 2,3,2
    #[arg(long, value_delimiter = ',', required = true)]
    dims: Vec<usize>,
    #[arg(long, default_value_t = 1)]
    trials: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Infidelity target
    #[arg(long)]
    delta: Option<f64>,
    /// Trace-distance or tester target
    #[arg(long)]
    eps: Option<f64>,
    /// Bound filter (names or base names)
    #[arg(long, value_delimiter = ',')]
    bounds: Vec<String>,
    /// Near-boundary instances and adversarial oracles
    #[arg(long)]
    stress: bool,
    /// Slack tolerance for bound reports
    #[arg(long)]
    tol: Option<f64>,
    /// Output directory for details.jsonl and summary.json
    #[arg(long)]
    out: Option<PathBuf>,
    /// Input state (protocol commands) or output file (gen-state)
    #[arg(long)]
    state: Option<PathBuf>,
    /// Budget formula name
    #[arg(long)]
    formula: Option<String>,
    /// Budget constant, e.g. C=1 (repeatable)
    #[arg(long = "constant", value_parser = parse_constant)]
    constants: Vec<(String, f64)>,
    /// Worker threads (output does not depend on this)
    #[arg(long)]
    threads: Option<usize>,
}

fn parse_constant(s: &str) -> Result<(String, f64), String> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| format!("expected NAME=VALUE, got `{s}`"))?;
    let v: f64 = v.trim().parse().map_err(|e| format!("{k}: {e}"))?;
    Ok((k.trim().to_string(), v))
}

fn config(args: Args) -> Result<CampaignConfig, QmcError> {
    let mut cfg = CampaignConfig::new(Command::parse(&args.command)?, args.dims);
    cfg.trials = args.trials;
    cfg.seed = args.seed;
    cfg.delta = args.delta;
    cfg.eps = args.eps;
    cfg.bounds = args.bounds;
    cfg.stress = args.stress;
    cfg.tol = args.tol;
    cfg.out = args.out;
    cfg.state = args.state;
    cfg.formula = args.formula;
    cfg.constants = args.constants.into_iter().collect::<BTreeMap<_, _>>();
    cfg.threads = args.threads;
    Ok(cfg)
}

fn print_summary(s: &CampaignSummary) {
    println!(
        "{:<28} {:>7} {:>7} {:>7} {:>5} {:>13} {:>13}",
        "name", "trials", "passes", "fails", "n/a", "min_slack", "mean_slack"
    );
    let fmt = |x: Option<f64>| x.map_or("-".to_string(), |v| format!("{v:.4e}"));
    for (name, a) in &s.aggregates {
        println!(
            "{:<28} {:>7} {:>7} {:>7} {:>5} {:>13} {:>13}",
            name,
            a.trials,
            a.passes,
            a.failures,
            a.not_applicable,
            fmt(a.min_slack),
            fmt(a.mean_slack)
        );
    }
    for b in &s.budgets {
        println!(
            "budget {} {:?} target={} n={}",
            b.formula_name, b.dims, b.target, b.n
        );
    }
    println!(
        "{} records, {} failures, {:.2}s",
        s.records, s.failures, s.wall_clock_seconds
    );
}

fn run(args: Args) -> Result<bool, QmcError> {
    let cfg = config(args)?;
    let (summary, records) = run_campaign_records(&cfg)?;
    match (cfg.command, records.first()) {
        (Command::Budget, Some(Record::Budget(b))) => println!("{}", b.n),
        (Command::GenState, Some(Record::State(s))) => match &s.path {
            Some(p) => println!("{} {}", p.display(), s.digest),
            None => println!("{}", s.digest),
        },
        _ => print_summary(&summary),
    }
    Ok(summary.all_pass())
}

fn main() -> ExitCode {
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(args) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
