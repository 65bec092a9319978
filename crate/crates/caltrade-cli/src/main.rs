//! `backtest` — calibrated-forecast trading experiments from the command
//! line.

use std::path::PathBuf;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};

use caltrade::backtest::{
    run_experiment, ChainConfig, DataSource, ExperimentConfig, KernelChoice, ScheduleChoice,
    StrategyChoice,
};
use caltrade::calibration::{
    calibration_error, hoeffding_bound, fixed_resolution_bound, calibration_bound, CalibrationStep,
    CheckingRule, Interval,
};
use caltrade::adversary::{verify_outperformance, SignStrategy};
use caltrade::{ForecastSession, RandomSource};

#[derive(Parser)]
#[command(
    name = "backtest",
    version,
    about = "Randomized calibrated forecasting and universal trading backtests"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a trading experiment on CSV data or the synthetic TEST stock
    Run(RunArgs),
    /// Score forecaster calibration against interval checking rules
    Calibrate(CalibrateArgs),
    /// Demonstrate the adversarial market against an i.i.d. strategy
    Adversary(AdversaryArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum StrategyArg {
    Rise,
    Fall,
    Both,
    Defensive,
}

#[derive(Clone, Copy, ValueEnum)]
enum KernelArg {
    Sobolev,
    Gaussian,
    Cosine,
    Expsmooth,
    Discretized,
}

impl From<KernelArg> for KernelChoice {
    fn from(value: KernelArg) -> Self {
        match value {
            KernelArg::Sobolev => KernelChoice::Sobolev,
            KernelArg::Gaussian => KernelChoice::Gaussian,
            KernelArg::Cosine => KernelChoice::Cosine,
            KernelArg::Expsmooth => KernelChoice::ExpSmooth,
            KernelArg::Discretized => KernelChoice::Discretized,
        }
    }
}

#[derive(Args)]
struct RunArgs {
    /// Input CSV with header `ticker,date,time,close`
    #[arg(long, conflicts_with = "test")]
    data: Option<PathBuf>,

    /// Simulate the TEST stock, e.g. `--test n=20000 sigma=0.0014 s0=1.0`
    #[arg(long, num_args = 0.., value_name = "KEY=VALUE")]
    test: Option<Vec<String>>,

    #[arg(long, value_enum, default_value = "both")]
    strategy: StrategyArg,

    #[arg(long, value_enum, default_value = "sobolev")]
    kernel: KernelArg,

    /// Fixed rounding resolution (must be 1/K)
    #[arg(long, conflicts_with = "epsilon")]
    delta: Option<f64>,

    /// Doubling-trick accuracy parameter in (0,1)
    #[arg(long)]
    epsilon: Option<f64>,

    /// Share count K for the fixed-size strategies
    #[arg(long, default_value_t = 5.0)]
    shares: f64,

    /// Transaction cost rate (0.0001 = 0.01%)
    #[arg(long, default_value_t = 0.0001)]
    cost: f64,

    #[arg(long, default_value_t = 42)]
    seed: u64,

    /// Chain window length
    #[arg(long, default_value_t = 5000)]
    lmax: usize,

    /// Warmup/overlap length
    #[arg(long, default_value_t = 2000)]
    lshift: usize,

    /// Price scaling constant c
    #[arg(long = "scale-c", default_value_t = 14.0)]
    scale_c: f64,

    /// Gaussian side-kernel width
    #[arg(long = "gaussian-sigma", default_value_t = 0.1)]
    gaussian_sigma: f64,

    /// Output directory for results.csv and equity curves
    #[arg(long)]
    out: Option<PathBuf>,

    /// Also write SVG equity charts
    #[arg(long)]
    svg: bool,
}

#[derive(Args)]
struct CalibrateArgs {
    /// Number of forecasting rounds
    #[arg(long, default_value_t = 10_000)]
    rounds: usize,

    /// Outcome generator: the adversarial 1{p < 1/2} sequence or a random walk
    #[arg(long, value_enum, default_value = "adversarial")]
    outcomes: OutcomeArg,

    #[arg(long, value_enum, default_value = "discretized")]
    kernel: KernelArg,

    /// Fixed rounding resolution (must be 1/K)
    #[arg(long, conflicts_with = "epsilon", default_value_t = 0.05)]
    delta: f64,

    /// Doubling-trick accuracy parameter in (0,1)
    #[arg(long)]
    epsilon: Option<f64>,

    /// Confidence parameter δ, union-split across the checking rules
    #[arg(long, default_value_t = 0.05)]
    confidence: f64,

    #[arg(long, default_value_t = 42)]
    seed: u64,

    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum OutcomeArg {
    Adversarial,
    Walk,
}

#[derive(Args)]
struct AdversaryArgs {
    /// Market rounds per replication
    #[arg(long, default_value_t = 50)]
    rounds: usize,

    /// Monte Carlo replications
    #[arg(long, default_value_t = 1000)]
    runs: usize,

    /// P{M̃ = +1} of the i.i.d. sign strategy
    #[arg(long = "up-probability", default_value_t = 0.5)]
    up_probability: f64,

    #[arg(long, default_value_t = 42)]
    seed: u64,

    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() {
    let result = match Cli::parse().command {
        Command::Run(args) => run(args),
        Command::Calibrate(args) => calibrate(args),
        Command::Adversary(args) => adversary(args),
    };
    if let Err(error) = result {
        eprintln!("error: {error:#}");
        std::process::exit(1);
    }
}

fn parse_test_params(tokens: &[String]) -> anyhow::Result<DataSource> {
    let mut n = 20_000usize;
    let mut sigma = 0.0014f64;
    let mut s0 = 1.0f64;
    for token in tokens {
        for part in token.split(',').filter(|p| !p.is_empty()) {
            let (key, value) = part
                .split_once('=')
                .with_context(|| format!("expected key=value in --test, got {part:?}"))?;
            match key {
                "n" => n = value.parse().with_context(|| format!("bad n={value}"))?,
                "sigma" => sigma = value.parse().with_context(|| format!("bad sigma={value}"))?,
                "s0" => s0 = value.parse().with_context(|| format!("bad s0={value}"))?,
                other => bail!("unknown TEST parameter {other:?} (use n, sigma, s0)"),
            }
        }
    }
    Ok(DataSource::Test { n, sigma, s0 })
}

fn schedule_choice(delta: Option<f64>, epsilon: Option<f64>) -> ScheduleChoice {
    match (delta, epsilon) {
        (_, Some(eps)) => ScheduleChoice::Epsilon(eps),
        (Some(d), None) => ScheduleChoice::FixedDelta(d),
        (None, None) => ScheduleChoice::FixedDelta(0.05),
    }
}

fn run(args: RunArgs) -> anyhow::Result<()> {
    let data = match (&args.data, &args.test) {
        (Some(path), None) => DataSource::Csv(path.clone()),
        (None, Some(tokens)) => parse_test_params(tokens)?,
        (None, None) => bail!("one of --data or --test is required"),
        (Some(_), Some(_)) => unreachable!("clap enforces the conflict"),
    };
    let config = ExperimentConfig {
        data,
        strategy: match args.strategy {
            StrategyArg::Rise => StrategyChoice::Rise,
            StrategyArg::Fall => StrategyChoice::Fall,
            StrategyArg::Both => StrategyChoice::Both,
            StrategyArg::Defensive => StrategyChoice::Defensive,
        },
        chain: ChainConfig {
            l_max: args.lmax,
            l_shift: args.lshift,
            scale_c: args.scale_c,
            kernel: args.kernel.into(),
            schedule: schedule_choice(args.delta, args.epsilon),
            seed: args.seed,
            gaussian_sigma: args.gaussian_sigma,
            ..ChainConfig::default()
        },
        shares: args.shares,
        cost_rate: args.cost,
        out_dir: args.out.clone(),
        svg: args.svg,
    };
    let output = run_experiment(&config).context("experiment failed")?;
    print!("{}", output.table.to_aligned_text());
    eprintln!(
        "{} live steps over {} window(s), {} scaled value(s) clamped",
        output.transcript.steps.len(),
        output
            .transcript
            .steps
            .last()
            .map_or(0, |s| s.window + 1),
        output.transcript.clamp_count
    );
    if let Some(dir) = &args.out {
        eprintln!("results written to {}", dir.display());
    }
    Ok(())
}

/// Twenty width-0.1 forecast intervals stepped by 0.05, crossed with the
/// full information range.
fn interval_rules() -> Vec<CheckingRule> {
    (0..20)
        .map(|i| {
            let lo = i as f64 * 0.05;
            let hi = (lo + 0.1).min(1.0);
            let forecast_interval = if hi >= 1.0 {
                Interval::closed(lo, 1.0)
            } else {
                Interval::half_open(lo, hi)
            };
            CheckingRule::IntervalProduct(vec![forecast_interval, Interval::full()])
        })
        .collect()
}

fn calibrate(args: CalibrateArgs) -> anyhow::Result<()> {
    if args.rounds == 0 {
        bail!("--rounds must be positive");
    }
    let schedule = schedule_choice(Some(args.delta), args.epsilon);
    let chain = ChainConfig {
        kernel: args.kernel.into(),
        schedule,
        seed: args.seed,
        history_cap: args.rounds.max(1),
        ..ChainConfig::default()
    };
    let (rounding, side) = chain.session_kernels()?;
    let mut session = ForecastSession::new(
        1,
        rounding,
        side,
        schedule.state()?,
        RandomSource::new(args.seed),
    )?
    .with_history_cap(args.rounds);

    let mut walk_rng = RandomSource::new(args.seed).derive(1);
    let mut transcript = Vec::with_capacity(args.rounds);
    let mut previous_outcome = 0.5f64;
    for _ in 0..args.rounds {
        let info = [previous_outcome];
        let p = session.next_forecast(&info, previous_outcome)?;
        let (p_tilde, info_tilde) = session.randomize_round(p, &info)?;
        let outcome = match args.outcomes {
            OutcomeArg::Adversarial => {
                if p < 0.5 {
                    1.0
                } else {
                    0.0
                }
            }
            OutcomeArg::Walk => {
                (previous_outcome + 0.02 * (walk_rng.uniform() - 0.5)).clamp(0.0, 1.0)
            }
        };
        session.update(p, &info, previous_outcome, outcome)?;
        transcript.push(CalibrationStep {
            forecast: p_tilde,
            info: info_tilde,
            outcome,
        });
        previous_outcome = outcome;
    }

    let rules = interval_rules();
    let mut report = calibration_error(&rules, &transcript)?;
    let per_rule_delta = args.confidence / rules.len() as f64;
    let c_embed = session.side_embedding_constant();
    let bound = match schedule {
        ScheduleChoice::FixedDelta(delta) => {
            fixed_resolution_bound(1, c_embed, delta, args.rounds, per_rule_delta)?
        }
        ScheduleChoice::Epsilon(eps) => {
            calibration_bound(1, c_embed, eps, args.rounds)
                + hoeffding_bound(args.rounds, per_rule_delta)?
        }
    };
    report.attach_bound(bound);

    println!("rounds: {}", report.rounds);
    println!("per-rule bound (δ = {} / {} rules): {bound:.3}", args.confidence, rules.len());
    println!("worst |cumulative|: {:.3}", report.worst_absolute_cumulative());
    for rule in &report.rules {
        println!(
            "{:<24} cumulative {:>12.4}  normalized {:>10.6}",
            rule.label, rule.cumulative, rule.normalized
        );
    }
    let within = report.worst_absolute_cumulative() <= bound;
    println!("within bound: {within}");
    if let Some(dir) = &args.out {
        std::fs::create_dir_all(dir)?;
        report.write_csv(&dir.join("calibration.csv"))?;
        eprintln!("calibration written to {}", dir.join("calibration.csv").display());
    }
    Ok(())
}

fn adversary(args: AdversaryArgs) -> anyhow::Result<()> {
    if !(0.0..=1.0).contains(&args.up_probability) {
        bail!("--up-probability must lie in [0,1]");
    }
    let strategy = SignStrategy {
        probability_up: args.up_probability,
    };
    let report = verify_outperformance(
        &strategy,
        args.rounds,
        args.runs,
        &RandomSource::new(args.seed),
    )?;
    println!("rounds:               {}", report.rounds);
    println!("runs:                 {}", report.runs);
    println!("rule gain:            {:.12}", report.rule_gain);
    println!("mean strategy gain:   {:.6}", report.mean_strategy_gain);
    println!("strategy gain stddev: {:.6}", report.strategy_gain_std);
    println!("outperformance stat:  {:.6}", report.statistic);
    if let Some(dir) = &args.out {
        std::fs::create_dir_all(dir)?;
        report.write_csv(&dir.join("adversary.csv"))?;
        eprintln!("report written to {}", dir.join("adversary.csv").display());
    }
    Ok(())
}
