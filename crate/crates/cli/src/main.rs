use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use coopsense::experiment::{self, Algorithm, SweepParam, SweepRow, SweepSpec};
use coopsense::sensing::ChannelDecision;
use coopsense::{
    load_scenario_file, normalized_throughput, optimize_design, AssignmentOutcome, ChannelAssignment, OptimizerOptions,
    ParameterPolicy, Scenario, SensingDesign, SimConfig, ThroughputReport,
};

/// Throughput analysis and channel assignment for cooperative-sensing
/// cognitive radio MACs.
#[derive(Parser)]
#[command(name = "coopsense", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Throughput of a given assignment and design.
    Eval(EvalArgs),
    /// Best sensing times and contention window for an assignment.
    Optimize(OptimizeArgs),
    /// Channel assignment search.
    Assign(AssignArgs),
    /// Monte Carlo run compared against the analytical model.
    Simulate(SimulateArgs),
    /// One CSV row per value of a swept parameter.
    Sweep(SweepArgs),
}

#[derive(Args)]
struct Common {
    /// Scenario file (JSON) or preset name (paper_4x4, paper_10x4).
    scenario: PathBuf,
    /// Overrides the scenario seed used for random SNR and target draws.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the fusion rule on every channel (or, and, majority, or a
    /// threshold count).
    #[arg(long)]
    fusion: Option<String>,
    /// Write CSV here instead of stdout.
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct DesignArgs {
    /// Assignment rows of 0/1 joined by ';', e.g. "1000;0100". Defaults to
    /// the scenario's, else every SU on every channel.
    #[arg(long)]
    assignment: Option<String>,
    /// Sensing-time matrix in µs: space-separated rows joined by ';'.
    #[arg(long, conflicts_with_all = ["tau_us", "tau_fraction"])]
    tau: Option<String>,
    /// Same sensing time (µs) on every assigned pair.
    #[arg(long, conflicts_with = "tau_fraction")]
    tau_us: Option<f64>,
    /// Same sensing time on every assigned pair, as a fraction of the cycle.
    #[arg(long)]
    tau_fraction: Option<f64>,
    /// Contention window. Used with explicit sensing times (default 32) and
    /// replaces the window of a stored or optimized design.
    #[arg(long)]
    window: Option<u32>,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    design: DesignArgs,
}

#[derive(Args)]
struct OptimizeArgs {
    #[command(flatten)]
    common: Common,
    /// Assignment rows of 0/1 joined by ';'. Defaults to the scenario's,
    /// else every SU on every channel.
    #[arg(long)]
    assignment: Option<String>,
    /// Cheaper search settings.
    #[arg(long)]
    coarse: bool,
    /// Largest contention window tried. Defaults to the scenario's.
    #[arg(long)]
    w_max: Option<u32>,
}

#[derive(Clone, Copy, ValueEnum)]
enum AlgoArg {
    Greedy,
    Brute,
    Rr,
    HungarianSeed,
    Fixed,
}

#[derive(Args)]
struct AssignArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, value_enum)]
    algo: AlgoArg,
    /// Channels per SU for round-robin.
    #[arg(long, default_value_t = 1)]
    width: usize,
    /// Minimum greedy gain; defaults to the scenario's.
    #[arg(long)]
    delta: Option<f64>,
    /// Brute force with the full optimizer on every candidate.
    #[arg(long)]
    full_fidelity: bool,
    /// Fixed sensing time (fraction of the cycle) instead of optimizing.
    #[arg(long)]
    fixed_tau: Option<f64>,
    /// Window used with --fixed-tau.
    #[arg(long, default_value_t = experiment::BASELINE_WINDOW)]
    window: u32,
    /// Also print the assignment matrix to stderr.
    #[arg(long)]
    show: bool,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    design: DesignArgs,
    /// Cycles to simulate.
    #[arg(long, default_value_t = 100_000)]
    cycles: u64,
    /// Cycles per batch. Batch means give the standard errors.
    #[arg(long, default_value_t = 1_000)]
    batch: u64,
    /// Simulation seed; defaults to --seed, then 1.
    #[arg(long)]
    sim_seed: Option<u64>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: Common,
    /// pidle, snr-shift, fusion or fixed-tau.
    #[arg(long)]
    param: String,
    /// Comma list, "a..b" or "a..b:step" (fusion: or,and,majority,k).
    #[arg(long, allow_hyphen_values = true)]
    values: String,
    /// greedy, brute, brute-full, rr<width>, fixed or hungarian-seed.
    #[arg(long, default_value = "greedy")]
    algo: String,
    /// Fixed sensing time (fraction of the cycle) for every point.
    #[arg(long)]
    fixed_tau: Option<f64>,
    /// Window used with fixed sensing times.
    #[arg(long, default_value_t = experiment::BASELINE_WINDOW)]
    window: u32,
    /// Leave wall_ms empty so that output is byte-reproducible.
    #[arg(long)]
    no_timing: bool,
}

fn main() -> ExitCode {
    if let Err(e) = configure_threads().and_then(|_| run(Cli::parse())) {
        eprintln!("error: {}", format!("{e:#}").replace('\n', " "));
        return ExitCode::FAILURE;
    }
    ExitCode::SUCCESS
}

fn configure_threads() -> Result<()> {
    if let Ok(v) = std::env::var("COOPSENSE_THREADS") {
        let n: usize = v
            .trim()
            .parse()
            .with_context(|| format!("COOPSENSE_THREADS must be a positive integer, got '{v}'"))?;
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Eval(a) => cmd_eval(a),
        Command::Optimize(a) => cmd_optimize(a),
        Command::Assign(a) => cmd_assign(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Sweep(a) => cmd_sweep(a),
    }
}

fn load(common: &Common) -> Result<Scenario> {
    let mut file = load_scenario_file(&common.scenario)?;
    if let Some(seed) = common.seed {
        file.seed = Some(seed);
    }
    let s = Scenario::from_file(&file).with_context(|| format!("invalid scenario {}", common.scenario.display()))?;
    Ok(match &common.fusion {
        Some(rule) => s.with_fusion(rule.parse()?),
        None => s,
    })
}

fn pick_assignment(scenario: &Scenario, text: Option<&str>) -> Result<ChannelAssignment> {
    let a = match text {
        Some(t) => ChannelAssignment::parse_compact(t)?,
        None => match &scenario.assignment {
            Some(a) => a.clone(),
            None => ChannelAssignment::full(scenario.num_sus, scenario.num_channels),
        },
    };
    if a.num_sus() != scenario.num_sus || a.num_channels() != scenario.num_channels {
        bail!(
            "assignment is {}x{} but the scenario is {}x{}",
            a.num_sus(),
            a.num_channels(),
            scenario.num_sus,
            scenario.num_channels
        );
    }
    Ok(a)
}

/// Design from flags, else the scenario's, else optimized.
fn pick_design(scenario: &Scenario, a: &ChannelAssignment, args: &DesignArgs) -> Result<SensingDesign> {
    let window = args.window.or(scenario.design.as_ref().map(|d| d.window));
    let uniform = |tau: f64| SensingDesign::uniform(a, tau, window.unwrap_or(experiment::BASELINE_WINDOW));
    Ok(match (&args.tau, args.tau_us, args.tau_fraction) {
        (Some(text), _, _) => SensingDesign::parse_compact_tau(text, window.unwrap_or(experiment::BASELINE_WINDOW))?,
        (None, Some(us), _) => uniform(us),
        (None, None, Some(f)) => uniform(f * scenario.cycle_us()),
        (None, None, None) => match &scenario.design {
            Some(d) => SensingDesign {
                window: window.unwrap_or(d.window),
                ..d.clone()
            },
            None => {
                let mut d = optimize_design(scenario, a, &OptimizerOptions::default())?.design;
                if let Some(w) = args.window {
                    d.window = w;
                }
                d
            }
        },
    })
}

fn csv_writer(out: Option<&Path>) -> Result<csv::Writer<Box<dyn Write>>> {
    let sink: Box<dyn Write> = match out {
        Some(p) => Box::new(std::fs::File::create(p).with_context(|| format!("cannot create {}", p.display()))?),
        None => Box::new(std::io::stdout().lock()),
    };
    Ok(csv::Writer::from_writer(sink))
}

const REPORT_HEADER: [&str; 14] = [
    "algorithm",
    "nt",
    "expected_idle",
    "single_throughput",
    "window",
    "tau_total_us",
    "slots_per_cycle",
    "transmit_prob",
    "success_prob",
    "mean_slot_us",
    "channel_false_alarm",
    "evaluations",
    "assignment",
    "tau_us",
];

fn report_record(
    algorithm: &str,
    report: &ThroughputReport,
    evaluations: usize,
    a: &ChannelAssignment,
    d: &SensingDesign,
) -> Vec<String> {
    let pf: Vec<String> = report
        .sensing
        .channels
        .iter()
        .map(|c| match c {
            ChannelDecision::Sensed(s) => s.false_alarm.to_string(),
            ChannelDecision::Unsensed => "-".into(),
        })
        .collect();
    vec![
        algorithm.to_string(),
        report.normalized_throughput.to_string(),
        report.expected_idle.to_string(),
        report.single_channel_throughput.to_string(),
        report.window.to_string(),
        report.tau_total_us.to_string(),
        report.slots_per_cycle.to_string(),
        report.contention.transmit.to_string(),
        report.contention.success.to_string(),
        report.contention.mean_slot.to_string(),
        pf.join(";"),
        evaluations.to_string(),
        a.to_compact(),
        d.compact_tau(),
    ]
}

fn write_report(out: Option<&Path>, record: Vec<String>) -> Result<()> {
    let mut w = csv_writer(out)?;
    w.write_record(REPORT_HEADER)?;
    w.write_record(record)?;
    w.flush()?;
    Ok(())
}

fn cmd_eval(args: EvalArgs) -> Result<()> {
    let s = load(&args.common)?;
    let a = pick_assignment(&s, args.design.assignment.as_deref())?;
    let d = pick_design(&s, &a, &args.design)?;
    let report = normalized_throughput(&s, &a, &d)?;
    write_report(args.common.out.as_deref(), report_record("eval", &report, 1, &a, &d))
}

fn cmd_optimize(args: OptimizeArgs) -> Result<()> {
    let s = load(&args.common)?;
    let a = pick_assignment(&s, args.assignment.as_deref())?;
    let mut opts = if args.coarse {
        OptimizerOptions::coarse()
    } else {
        OptimizerOptions::default()
    };
    opts.w_max = args.w_max.or(opts.w_max);
    let o = optimize_design(&s, &a, &opts)?;
    let evaluations = usize::try_from(o.evaluations).unwrap_or(usize::MAX);
    write_report(
        args.common.out.as_deref(),
        report_record("optimize", &o.report, evaluations, &a, &o.design),
    )
}

fn cmd_assign(args: AssignArgs) -> Result<()> {
    let mut s = load(&args.common)?;
    if let Some(d) = args.delta {
        s.delta = d;
    }
    let policy = match args.fixed_tau {
        Some(tau_fraction) => ParameterPolicy::Fixed {
            tau_fraction,
            window: args.window,
        },
        None => ParameterPolicy::default(),
    };
    let algorithm = match args.algo {
        AlgoArg::Greedy => Algorithm::Greedy,
        AlgoArg::Brute => Algorithm::Brute {
            full_fidelity: args.full_fidelity,
        },
        AlgoArg::Rr => Algorithm::RoundRobin(args.width),
        AlgoArg::HungarianSeed => Algorithm::HungarianSeed,
        AlgoArg::Fixed => Algorithm::Fixed,
    };
    let o: AssignmentOutcome = experiment::run_algorithm(&s, algorithm, policy)?;
    if args.show {
        eprint!("{}", o.assignment);
    }
    write_report(
        args.common.out.as_deref(),
        report_record(&o.algorithm, &o.report, o.evaluations, &o.assignment, &o.design),
    )
}

fn cmd_simulate(args: SimulateArgs) -> Result<()> {
    let s = load(&args.common)?;
    let a = pick_assignment(&s, args.design.assignment.as_deref())?;
    let d = pick_design(&s, &a, &args.design)?;
    let report = normalized_throughput(&s, &a, &d)?;
    let cfg = SimConfig {
        n_cycles: args.cycles,
        seed: args.sim_seed.or(args.common.seed).unwrap_or(1),
        batch_cycles: args.batch,
    };
    let emp = coopsense::simulate_cycles(&s, &a, &d, &cfg)?;
    let mut w = csv_writer(args.common.out.as_deref())?;
    w.write_record(["quantity", "analytic", "empirical", "std_error", "relative_delta"])?;
    let mut row = |name: String, analytic: f64, empirical: f64, se: f64| {
        let rel = if analytic != 0.0 {
            (empirical - analytic) / analytic
        } else {
            f64::NAN
        };
        w.write_record([
            name,
            analytic.to_string(),
            empirical.to_string(),
            se.to_string(),
            rel.to_string(),
        ])
    };
    row("nt".into(), report.normalized_throughput, emp.nt_mean, emp.nt_std_error)?;
    row(
        "transmit_prob".into(),
        report.contention.transmit,
        emp.phi_estimate,
        emp.phi_std_error,
    )?;
    for (j, c) in report.sensing.channels.iter().enumerate() {
        let analytic = c.idle_declaration();
        let rate = emp.idle_declaration_rate(j);
        let n = emp.idle_cycles[j].max(1) as f64;
        row(
            format!("idle_declared_ch{}", j + 1),
            analytic,
            rate,
            (rate * (1.0 - rate) / n).sqrt(),
        )?;
    }
    w.flush()?;
    Ok(())
}

fn cmd_sweep(args: SweepArgs) -> Result<()> {
    let s = load(&args.common)?;
    let param: SweepParam = args.param.parse()?;
    let values = experiment::parse_values(param, &args.values)?;
    let algorithm: Algorithm = args.algo.parse()?;
    let spec = SweepSpec {
        fixed_tau_fraction: args.fixed_tau,
        baseline_window: args.window,
        ..SweepSpec::new(param, values, algorithm)
    };
    let rows = experiment::run_sweep(&s, &spec)?;
    let mut w = csv_writer(args.common.out.as_deref())?;
    w.write_record(SweepRow::HEADER)?;
    for r in &rows {
        w.write_record(r.record(!args.no_timing))?;
    }
    w.flush()?;
    Ok(())
}
