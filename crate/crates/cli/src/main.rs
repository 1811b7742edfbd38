//! `dfroute`: DF rates and route selection on Gaussian multiple-relay
//! channels.
//!
//! Subcommands: `rate` (evaluate one route), `route` (find routes via
//! nna/nnsa/mspa/brute force), `enumerate` (walk or count the route space),
//! `experiment` (seeded Monte Carlo runs with CSV/JSON output).
//!
//! Exit codes: 0 success; 2 malformed input or invalid configuration;
//! 3 invalid route; 4 optimizer non-convergence under `--strict`;
//! 5 NNSA candidate explosion; 6 enumeration line cap exceeded;
//! 7 every experiment trial failed.

use clap::{Args, Parser, Subcommand, ValueEnum};
use dfroute::experiments::{
    self, ExperimentConfig, ExperimentKind, Reference, TrialOutcome,
};
use dfroute::{
    brute_force_optimal, df_rate, enumerate_routes, mspa, nna, nnsa_optimal, pi_size, Network,
    NnaOutcome, OptimizerConfig, RateMode, RateResult, Route, RoutingError,
};
use serde::Serialize;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

const EXIT_OK: u8 = 0;
const EXIT_BAD_INPUT: u8 = 2;
const EXIT_BAD_ROUTE: u8 = 3;
const EXIT_NOT_CONVERGED: u8 = 4;
const EXIT_EXPLOSION: u8 = 5;
const EXIT_LINE_CAP: u8 = 6;
const EXIT_ALL_FAILED: u8 = 7;

#[derive(Parser)]
#[command(name = "dfroute", version, about, disable_help_subcommand = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate the DF rate of one route on a network
    Rate(RateArgs),
    /// Find routes with nna, nnsa, mspa, or brute force
    Route(RouteArgs),
    /// Stream or count the route space of a D-node network
    Enumerate(EnumerateArgs),
    /// Run a seeded Monte Carlo experiment
    Experiment(ExperimentArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum ModeArg {
    Coherent,
    Independent,
}

impl From<ModeArg> for RateMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Coherent => RateMode::Coherent,
            ModeArg::Independent => RateMode::IndependentCodewords,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum FormatArg {
    Json,
    Csv,
}

#[derive(Args, Serialize)]
struct OptimizerArgs {
    /// Random restarts for the coherent optimizer
    #[arg(long, default_value_t = 20)]
    starts: usize,
    /// Per-start iteration budget
    #[arg(long, default_value_t = 2000)]
    max_iters: usize,
    /// Base seed for the optimizer's restart sampling
    #[arg(long, default_value_t = 0)]
    opt_seed: u64,
}

impl OptimizerArgs {
    fn to_config(&self) -> OptimizerConfig {
        OptimizerConfig {
            random_starts: self.starts,
            max_iters: self.max_iters,
            seed: self.opt_seed,
            ..OptimizerConfig::default()
        }
    }
}

#[derive(Args, Serialize)]
struct RateArgs {
    /// Network JSON file
    #[arg(long)]
    network: PathBuf,
    /// Comma-separated node list, e.g. 1,2,4
    #[arg(long)]
    route: String,
    #[arg(long, value_enum, default_value_t = ModeArg::Coherent)]
    mode: ModeArg,
    #[arg(long, value_enum, default_value_t = FormatArg::Json)]
    format: FormatArg,
    /// Fail (exit 4) if the optimizer did not converge
    #[arg(long, default_value_t = false)]
    strict: bool,
    #[command(flatten)]
    optimizer: OptimizerArgs,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum AlgorithmArg {
    Nna,
    Nnsa,
    Mspa,
    Brute,
}

#[derive(Args, Serialize)]
struct RouteArgs {
    /// Network JSON file
    #[arg(long)]
    network: PathBuf,
    #[arg(long, value_enum)]
    algorithm: AlgorithmArg,
    #[arg(long, value_enum, default_value_t = ModeArg::Coherent)]
    mode: ModeArg,
    #[arg(long, value_enum, default_value_t = FormatArg::Json)]
    format: FormatArg,
    /// NNSA candidate cap
    #[arg(long, default_value_t = 1_000_000)]
    cap: usize,
    /// Override the brute-force search-space guard
    #[arg(long, default_value_t = false)]
    force: bool,
    #[arg(long, default_value_t = false)]
    strict: bool,
    #[command(flatten)]
    optimizer: OptimizerArgs,
}

#[derive(Args, Serialize)]
struct EnumerateArgs {
    /// Node count D
    #[arg(long)]
    nodes: usize,
    /// Print only the route count
    #[arg(long, default_value_t = false)]
    count_only: bool,
    /// Maximum routes to stream without --force
    #[arg(long, default_value_t = 100_000)]
    limit: u64,
    /// Stream past the line cap
    #[arg(long, default_value_t = false)]
    force: bool,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum KindArg {
    Mspa,
    NnsaSize,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum ReferenceArg {
    Auto,
    Brute,
    Nnsa,
}

#[derive(Args, Serialize)]
struct ExperimentArgs {
    /// Experiment kind
    #[arg(value_enum)]
    kind: KindArg,
    /// Node count D
    #[arg(long)]
    nodes: usize,
    #[arg(long)]
    trials: usize,
    /// Base seed; generated from entropy (and echoed) when absent
    #[arg(long)]
    seed: Option<u64>,
    /// Output file prefix: writes PREFIX.records.csv and PREFIX.summary.json
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = ModeArg::Coherent)]
    mode: ModeArg,
    /// Square side multiplier (mspa uses a (D-1)-sized square, nnsa-size a unit square)
    #[arg(long, default_value_t = 1.0)]
    side_length: f64,
    #[arg(long, default_value_t = 1.0)]
    kappa: f64,
    #[arg(long, default_value_t = 2.0)]
    eta: f64,
    #[arg(long, default_value_t = 1.0)]
    power: f64,
    #[arg(long, default_value_t = 1.0)]
    noise: f64,
    /// Worker threads (default: available parallelism)
    #[arg(long)]
    workers: Option<usize>,
    /// Reference search for the mspa experiment
    #[arg(long, value_enum, default_value_t = ReferenceArg::Auto)]
    reference: ReferenceArg,
    /// NNSA candidate cap
    #[arg(long, default_value_t = 1_000_000)]
    cap: usize,
    #[command(flatten)]
    optimizer: OptimizerArgs,
}

/// Machine-readable wrapper around every JSON result.
#[derive(Serialize)]
struct Envelope<C: Serialize, R: Serialize> {
    tool: &'static str,
    version: &'static str,
    command: &'static str,
    config: C,
    warnings: Vec<String>,
    result: R,
    duration_ms: f64,
}

fn emit_json<C: Serialize, R: Serialize>(
    command: &'static str,
    config: C,
    warnings: Vec<String>,
    result: R,
    started: Instant,
) {
    let envelope = Envelope {
        tool: "dfroute",
        version: env!("CARGO_PKG_VERSION"),
        command,
        config,
        warnings,
        result,
        duration_ms: started.elapsed().as_secs_f64() * 1e3,
    };
    println!("{}", serde_json::to_string_pretty(&envelope).expect("serializable"));
}

fn fail(code: u8, message: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {message}");
    ExitCode::from(code)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Rate(args) => cmd_rate(args),
        Command::Route(args) => cmd_route(args),
        Command::Enumerate(args) => cmd_enumerate(args),
        Command::Experiment(args) => cmd_experiment(args),
    }
}

fn load_network(path: &Path) -> Result<Network, ExitCode> {
    Network::from_json_file(path).map_err(|e| fail(EXIT_BAD_INPUT, format!("{}: {e}", path.display())))
}

fn cmd_rate(args: RateArgs) -> ExitCode {
    let started = Instant::now();
    let network = match load_network(&args.network) {
        Ok(n) => n,
        Err(code) => return code,
    };
    let route = match Route::parse(&args.route, network.node_count()) {
        Ok(r) => r,
        Err(e) => return fail(EXIT_BAD_ROUTE, e),
    };
    let cfg = args.optimizer.to_config();
    let result = match df_rate(&network, &route, args.mode.into(), &cfg) {
        Ok(r) => r,
        Err(e) => return fail(EXIT_BAD_ROUTE, e),
    };
    let converged = result.diagnostics.converged;
    let mut warnings = network.warnings();
    if !converged {
        warnings.push("optimizer did not converge; the rate is a lower bound".into());
    }
    match args.format {
        FormatArg::Json => emit_json("rate", &args, warnings, &result, started),
        FormatArg::Csv => {
            for w in &warnings {
                eprintln!("warning: {w}");
            }
            print_rate_csv(&result);
        }
    }
    if args.strict && !converged {
        return ExitCode::from(EXIT_NOT_CONVERGED);
    }
    ExitCode::from(EXIT_OK)
}

// rates are presented with 9 decimal digits; JSON carries full precision
fn print_rate_csv(result: &RateResult) {
    println!("rate,reception_rates,converged,iterations,restarts");
    let rates: Vec<String> = result.reception_rates.iter().map(|r| format!("{r:.9}")).collect();
    println!(
        "{:.9},{},{},{},{}",
        result.rate,
        rates.join(";"),
        result.diagnostics.converged,
        result.diagnostics.iterations,
        result.diagnostics.restarts
    );
}

#[derive(Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
enum RouteOutcome {
    Complete {
        #[serde(skip_serializing_if = "Option::is_none")]
        route: Option<Route>,
        #[serde(skip_serializing_if = "Option::is_none")]
        routes: Option<Vec<Route>>,
        rate: f64,
        #[serde(skip_serializing_if = "Option::is_none")]
        candidates: Option<usize>,
        converged: bool,
    },
    Premature {
        partial: Vec<usize>,
    },
}

fn cmd_route(args: RouteArgs) -> ExitCode {
    let started = Instant::now();
    let network = match load_network(&args.network) {
        Ok(n) => n,
        Err(code) => return code,
    };
    let cfg = args.optimizer.to_config();
    let mode: RateMode = args.mode.into();
    let outcome = match args.algorithm {
        AlgorithmArg::Nna => match nna(&network) {
            NnaOutcome::Complete { route } => {
                let result = df_rate(&network, &route, mode, &cfg).expect("nna route is valid");
                RouteOutcome::Complete {
                    route: Some(route),
                    routes: None,
                    rate: result.rate,
                    candidates: None,
                    converged: result.diagnostics.converged,
                }
            }
            NnaOutcome::Premature { partial } => RouteOutcome::Premature {
                partial: partial.nodes().iter().map(|n| n.get()).collect(),
            },
        },
        AlgorithmArg::Nnsa => match nnsa_optimal(&network, mode, &cfg, args.cap) {
            Ok(best) => RouteOutcome::Complete {
                route: Some(best.route),
                routes: None,
                rate: best.rate,
                candidates: Some(best.candidate_count),
                converged: true,
            },
            Err(e @ RoutingError::CandidateExplosion { .. }) => return fail(EXIT_EXPLOSION, e),
            Err(e) => return fail(EXIT_BAD_INPUT, e),
        },
        AlgorithmArg::Mspa => {
            let route = mspa(&network);
            let result = df_rate(&network, &route, mode, &cfg).expect("mspa route is valid");
            RouteOutcome::Complete {
                route: Some(route),
                routes: None,
                rate: result.rate,
                candidates: None,
                converged: result.diagnostics.converged,
            }
        }
        AlgorithmArg::Brute => match brute_force_optimal(&network, mode, &cfg, args.force) {
            Ok(res) => RouteOutcome::Complete {
                route: None,
                routes: Some(res.best_routes),
                rate: res.max_rate,
                candidates: Some(res.evaluated),
                converged: true,
            },
            Err(e @ RoutingError::SearchSpaceTooLarge { .. }) => return fail(EXIT_BAD_INPUT, e),
            Err(e) => return fail(EXIT_BAD_INPUT, e),
        },
    };
    let strict_violation = matches!(
        outcome,
        RouteOutcome::Complete { converged: false, .. }
    ) && args.strict;
    match args.format {
        FormatArg::Json => emit_json("route", &args, network.warnings(), &outcome, started),
        FormatArg::Csv => print_route_csv(&outcome),
    }
    if strict_violation {
        return ExitCode::from(EXIT_NOT_CONVERGED);
    }
    ExitCode::from(EXIT_OK)
}

fn print_route_csv(outcome: &RouteOutcome) {
    println!("status,route,rate,candidates");
    match outcome {
        RouteOutcome::Complete { route, routes, rate, candidates, .. } => {
            let shown = match (route, routes) {
                (Some(r), _) => r.to_string(),
                (None, Some(rs)) => {
                    rs.iter().map(|r| r.to_string()).collect::<Vec<_>>().join("|")
                }
                (None, None) => String::new(),
            };
            println!(
                "complete,\"{}\",{:.9},{}",
                shown,
                rate,
                candidates.map(|c| c.to_string()).unwrap_or_default()
            );
        }
        RouteOutcome::Premature { partial } => {
            let shown: Vec<String> = partial.iter().map(|n| n.to_string()).collect();
            println!("premature,\"{}\",,", shown.join(","));
        }
    }
}

fn cmd_enumerate(args: EnumerateArgs) -> ExitCode {
    if args.nodes < 2 {
        return fail(EXIT_BAD_INPUT, "enumeration needs at least 2 nodes");
    }
    let count = pi_size(args.nodes);
    if args.count_only {
        println!("{count}");
        return ExitCode::from(EXIT_OK);
    }
    if !args.force && count > args.limit.into() {
        return fail(
            EXIT_LINE_CAP,
            format!(
                "{count} routes exceed the line cap of {}; pass --force to stream anyway",
                args.limit
            ),
        );
    }
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    for route in enumerate_routes(args.nodes) {
        if writeln!(out, "{route}").is_err() {
            return ExitCode::from(EXIT_OK); // downstream closed the pipe
        }
    }
    ExitCode::from(EXIT_OK)
}

fn cmd_experiment(args: ExperimentArgs) -> ExitCode {
    let started = Instant::now();
    let seed = args.seed.unwrap_or_else(rand::random);
    let kind = match args.kind {
        KindArg::Mspa => ExperimentKind::MspaQuality,
        KindArg::NnsaSize => ExperimentKind::NnsaSize,
    };
    let mut cfg = ExperimentConfig::new(kind, args.nodes, args.trials, seed);
    cfg.mode = args.mode.into();
    cfg.side_length = args.side_length;
    cfg.kappa = args.kappa;
    cfg.eta = args.eta;
    cfg.power = args.power;
    cfg.noise = args.noise;
    cfg.workers = args.workers;
    cfg.candidate_cap = args.cap;
    cfg.optimizer = args.optimizer.to_config();
    cfg.reference = match args.reference {
        ReferenceArg::Auto => Reference::Auto,
        ReferenceArg::Brute => Reference::BruteForce,
        ReferenceArg::Nnsa => Reference::NnsaBacked,
    };

    let outcome = match kind {
        ExperimentKind::MspaQuality => experiments::run_mspa_quality(&cfg),
        ExperimentKind::NnsaSize => experiments::run_nnsa_size(&cfg),
    };
    let (records, summary) = match outcome {
        Ok(x) => x,
        Err(e) => return fail(EXIT_BAD_INPUT, e),
    };

    if let Some(prefix) = &args.out {
        let records_path = path_with_suffix(prefix, ".records.csv");
        let summary_path = path_with_suffix(prefix, ".summary.json");
        let write = || -> Result<(), experiments::ExperimentError> {
            let file = std::fs::File::create(&records_path)?;
            experiments::write_records_csv(file, &records)?;
            std::fs::write(&summary_path, experiments::summary_json(&cfg, &summary))?;
            Ok(())
        };
        if let Err(e) = write() {
            return fail(EXIT_BAD_INPUT, format!("writing outputs: {e}"));
        }
        eprintln!("wrote {} and {}", records_path.display(), summary_path.display());
    }

    let all_failed = records
        .iter()
        .all(|r| matches!(r.outcome, TrialOutcome::Failed { .. }));
    emit_json("experiment", &cfg, Vec::new(), &summary, started);
    if all_failed {
        return fail(EXIT_ALL_FAILED, "every trial failed");
    }
    ExitCode::from(EXIT_OK)
}

fn path_with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut name = prefix.file_name().map(|s| s.to_os_string()).unwrap_or_default();
    name.push(suffix);
    prefix.with_file_name(name)
}
