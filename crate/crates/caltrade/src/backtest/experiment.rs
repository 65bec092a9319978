//! Experiment orchestration: forecast transcripts → strategy ledgers →
//! results tables and output files.

use std::path::PathBuf;

use crate::arma::ArmaModel;
use crate::error::{Error, Result};
use crate::rounding::{RandomSource, RoundingGrid};
use crate::trading::{defensive_run, EquityCurve, EquityPoint};

use super::chain::{run_chain_parallel, ChainConfig, ChainPlan, ChainTranscript};
use super::data::{ingest_csv, scale_window, simulate_test_stock, PriceSeries};
use super::svg;

/// RNG stream offset separating the ARMA randomization from the forecaster
/// windows.
const ARMA_STREAM_OFFSET: u64 = 1 << 32;

/// Default ARMA order for the baseline, refit every `L_shift` live steps.
const ARMA_ORDER: (usize, usize) = (2, 1);

/// Where the experiment prices come from.
#[derive(Debug, Clone)]
pub enum DataSource {
    Csv(PathBuf),
    Test { n: usize, sigma: f64, s0: f64 },
}

/// Which strategy family the results table reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StrategyChoice {
    Rise,
    Fall,
    Both,
    Defensive,
}

/// Full experiment configuration (the CLI maps flags straight onto this).
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub data: DataSource,
    pub strategy: StrategyChoice,
    pub chain: ChainConfig,
    /// Share count `K` for the fixed-size strategies.
    pub shares: f64,
    /// Transaction cost rate for the defensive table.
    pub cost_rate: f64,
    /// Output directory; `None` keeps results in memory.
    pub out_dir: Option<PathBuf>,
    /// Also emit SVG equity charts when writing outputs.
    pub svg: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            data: DataSource::Test {
                n: 20_000,
                sigma: 0.0014,
                s0: 1.0,
            },
            strategy: StrategyChoice::Both,
            chain: ChainConfig::default(),
            shares: 5.0,
            cost_rate: 0.0001,
            out_dir: None,
            svg: false,
        }
    }
}

/// A rectangular results table with a ticker label per row.
#[derive(Debug, Clone)]
pub struct ResultsTable {
    pub columns: Vec<String>,
    pub rows: Vec<(String, Vec<f64>)>,
}

impl ResultsTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("ticker");
        for c in &self.columns {
            out.push(',');
            out.push_str(c);
        }
        out.push('\n');
        for (ticker, values) in &self.rows {
            out.push_str(ticker);
            for v in values {
                out.push_str(&format!(",{v:.4}"));
            }
            out.push('\n');
        }
        out
    }

    /// Fixed-width text rendering for terminals.
    pub fn to_aligned_text(&self) -> String {
        let mut widths: Vec<usize> = self.columns.iter().map(|c| c.len().max(10)).collect();
        let ticker_width = self
            .rows
            .iter()
            .map(|(t, _)| t.len())
            .chain(std::iter::once(6))
            .max()
            .unwrap_or(6);
        for (_, values) in &self.rows {
            for (w, v) in widths.iter_mut().zip(values) {
                *w = (*w).max(format!("{v:.4}").len());
            }
        }
        let mut out = format!("{:<ticker_width$}", "ticker");
        for (c, w) in self.columns.iter().zip(&widths) {
            out.push_str(&format!("  {c:>w$}"));
        }
        out.push('\n');
        for (ticker, values) in &self.rows {
            out.push_str(&format!("{ticker:<ticker_width$}"));
            for (v, w) in values.iter().zip(&widths) {
                out.push_str(&format!("  {:>w$}", format!("{v:.4}")));
            }
            out.push('\n');
        }
        out
    }

    pub fn value(&self, ticker: &str, column: &str) -> Option<f64> {
        let col = self.columns.iter().position(|c| c == column)?;
        let row = self.rows.iter().find(|(t, _)| t == ticker)?;
        row.1.get(col).copied()
    }
}

/// Everything a run produces.
#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub table: ResultsTable,
    /// Named equity curves, `(strategy label, curve)`.
    pub curves: Vec<(String, EquityCurve)>,
    pub transcript: ChainTranscript,
    pub ticker: String,
}

/// Runs the configured experiment end to end.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutput> {
    let series = load_series(config)?;
    let transcript = run_chain_parallel(&series, &config.chain)?;
    if transcript.steps.is_empty() {
        return Err(Error::config("chain produced no live steps"));
    }
    let arma_entries = arma_chain_entries(&series, &config.chain)?;

    let raw = transcript.raw_prices();
    let initial_capital = config.shares * raw[0];
    let un_entries = transcript.entries();

    let mut curves: Vec<(String, EquityCurve)> = Vec::new();
    let buy_hold = fixed_position_curve(&raw, config.shares, initial_capital);
    let buy_hold_profit = profit_percent(&buy_hold);
    curves.push(("buyhold".into(), buy_hold));

    let (columns, values) = match config.strategy {
        StrategyChoice::Rise | StrategyChoice::Fall | StrategyChoice::Both => {
            let un_rise = entry_curve(&raw, &un_entries, config.shares, initial_capital, true);
            let un_fall = entry_curve(&raw, &un_entries, config.shares, initial_capital, false);
            let arma_rise = entry_curve(&raw, &arma_entries, config.shares, initial_capital, true);
            let arma_fall =
                entry_curve(&raw, &arma_entries, config.shares, initial_capital, false);
            let mut columns = vec!["buy_hold_profit_pct".to_string()];
            let mut values = vec![buy_hold_profit];
            if config.strategy != StrategyChoice::Fall {
                columns.push("un_rise_profit_pct".into());
                values.push(profit_percent(&un_rise));
            }
            if config.strategy != StrategyChoice::Rise {
                columns.push("un_fall_profit_pct".into());
                values.push(profit_percent(&un_fall));
            }
            if config.strategy != StrategyChoice::Fall {
                columns.push("arma_rise_profit_pct".into());
                values.push(profit_percent(&arma_rise));
            }
            if config.strategy != StrategyChoice::Rise {
                columns.push("arma_fall_profit_pct".into());
                values.push(profit_percent(&arma_fall));
            }
            match config.strategy {
                StrategyChoice::Rise => {
                    curves.push(("un_rise".into(), un_rise));
                    curves.push(("arma_rise".into(), arma_rise));
                }
                StrategyChoice::Fall => {
                    curves.push(("un_fall".into(), un_fall));
                    curves.push(("arma_fall".into(), arma_fall));
                }
                _ => {
                    curves.push(("un_rise".into(), un_rise));
                    curves.push(("un_fall".into(), un_fall));
                    curves.push(("arma_rise".into(), arma_rise));
                    curves.push(("arma_fall".into(), arma_fall));
                }
            }
            (columns, values)
        }
        StrategyChoice::Defensive => {
            let un_free = defensive_run(&raw, &un_entries, initial_capital, 0.0)?;
            let un_cost = defensive_run(&raw, &un_entries, initial_capital, config.cost_rate)?;
            let arma_free = defensive_run(&raw, &arma_entries, initial_capital, 0.0)?;
            let arma_cost = defensive_run(&raw, &arma_entries, initial_capital, config.cost_rate)?;
            let columns = vec![
                "buy_hold_profit_pct".to_string(),
                "un_profit_pct".into(),
                "un_profit_cost_pct".into(),
                "arma_profit_pct".into(),
                "arma_profit_cost_pct".into(),
                "un_in".into(),
                "arma_in".into(),
                "un_d".into(),
                "arma_d".into(),
            ];
            let values = vec![
                buy_hold_profit,
                profit_percent(&un_free),
                profit_percent(&un_cost),
                profit_percent(&arma_free),
                profit_percent(&arma_cost),
                entry_frequency(&un_entries),
                entry_frequency(&arma_entries),
                mean_entry_duration(&un_entries),
                mean_entry_duration(&arma_entries),
            ];
            curves.push(("un_defensive".into(), un_free));
            curves.push(("un_defensive_cost".into(), un_cost));
            curves.push(("arma_defensive".into(), arma_free));
            curves.push(("arma_defensive_cost".into(), arma_cost));
            (columns, values)
        }
    };

    let table = ResultsTable {
        columns,
        rows: vec![(series.ticker.clone(), values)],
    };
    let output = ExperimentOutput {
        table,
        curves,
        transcript,
        ticker: series.ticker.clone(),
    };
    if let Some(dir) = &config.out_dir {
        write_outputs(&output, dir, config.svg)?;
    }
    Ok(output)
}

fn load_series(config: &ExperimentConfig) -> Result<PriceSeries> {
    match &config.data {
        DataSource::Csv(path) => ingest_csv(path),
        DataSource::Test { n, sigma, s0 } => {
            if *sigma < 0.0 || *s0 <= 0.0 {
                return Err(Error::config("TEST simulation needs sigma >= 0 and s0 > 0"));
            }
            // stream well away from the window and ARMA streams
            let mut rng = RandomSource::new(config.chain.seed).derive(u64::MAX);
            Ok(simulate_test_stock(*n, *sigma, *s0, &mut rng))
        }
    }
}

fn profit_percent(curve: &EquityCurve) -> f64 {
    curve.profit_percent().unwrap_or(0.0)
}

/// Buy-and-hold ledger over raw prices.
fn fixed_position_curve(prices: &[f64], shares: f64, initial_capital: f64) -> EquityCurve {
    let mut curve = EquityCurve::anchored(initial_capital, prices[0]);
    let mut capital = initial_capital;
    for i in 1..prices.len() {
        capital += shares * (prices[i] - prices[i - 1]);
        curve.points.push(EquityPoint {
            step: i,
            position: shares,
            price: prices[i],
            capital,
        });
    }
    curve
}

/// Dealing for a rise (or, mirrored, for a fall) with `K` shares on raw
/// prices driven by per-step entry decisions.
fn entry_curve(
    prices: &[f64],
    entries: &[bool],
    shares: f64,
    initial_capital: f64,
    rise: bool,
) -> EquityCurve {
    let mut curve = EquityCurve::anchored(initial_capital, prices[0]);
    let mut capital = initial_capital;
    for i in 1..prices.len() {
        let in_market = entries[i - 1] == rise;
        let position = if in_market {
            if rise {
                shares
            } else {
                -shares
            }
        } else {
            0.0
        };
        capital += position * (prices[i] - prices[i - 1]);
        curve.points.push(EquityPoint {
            step: i,
            position,
            price: prices[i],
            capital,
        });
    }
    curve
}

/// Fraction of steps with a rise entry.
fn entry_frequency(entries: &[bool]) -> f64 {
    if entries.is_empty() {
        return 0.0;
    }
    entries.iter().filter(|&&e| e).count() as f64 / entries.len() as f64
}

/// Average length of maximal consecutive in-market runs.
fn mean_entry_duration(entries: &[bool]) -> f64 {
    let mut runs = 0usize;
    let mut total = 0usize;
    let mut current = 0usize;
    for &e in entries {
        if e {
            current += 1;
        } else if current > 0 {
            runs += 1;
            total += current;
            current = 0;
        }
    }
    if current > 0 {
        runs += 1;
        total += current;
    }
    if runs == 0 {
        0.0
    } else {
        total as f64 / runs as f64
    }
}

/// ARMA baseline over the same chain plan: fit on the warmup prefix of
/// each window, refit every `L_shift` live steps, randomize the clamped
/// forecasts on the same grid machinery, and emit per-step entry decisions.
pub fn arma_chain_entries(series: &PriceSeries, config: &ChainConfig) -> Result<Vec<bool>> {
    let plan = ChainPlan::new(series.len(), config.l_max, config.l_shift)?;
    let mut entries = Vec::new();
    for w in 0..plan.window_count() {
        let rows = plan.window_rows(w, series.len());
        let raw = &series.prices[rows.clone()];
        let scaled = scale_window(raw, plan.l_shift, config.scale_c)?;
        let mut rng = RandomSource::new(config.seed).derive(ARMA_STREAM_OFFSET + w as u64);

        let mut schedule = config.schedule.state()?;
        let mut grid = RoundingGrid::new(schedule.delta(1, 0.0))?;
        let mut model = fit_or_fallback(&scaled.values[..plan.l_shift]);
        for (live_steps, local) in (plan.l_shift..scaled.values.len()).enumerate() {
            if live_steps > 0 && live_steps.is_multiple_of(plan.l_shift) {
                let from = local.saturating_sub(config.l_shift);
                model = fit_or_fallback(&scaled.values[from..local]);
            }
            let prev = scaled.values[local - 1];
            let forecast = model
                .forecast_next(&scaled.values[..local])
                .unwrap_or(prev)
                .clamp(0.0, 1.0);
            let p_tilde = grid.sample(&grid.weights(forecast)?, &mut rng)[0];
            let s_tilde = grid.sample(&grid.weights(prev)?, &mut rng)[0];
            entries.push(p_tilde > s_tilde);
            if schedule.advance_for_rounds(local) {
                grid = RoundingGrid::new(schedule.delta(1, 0.0))?;
            }
        }
    }
    Ok(entries)
}

/// ARMA(2,1), falling back to a random-walk forecast when the window is
/// degenerate (constant warmup, singular fit).
fn fit_or_fallback(data: &[f64]) -> ArmaModel {
    ArmaModel::fit(data, ARMA_ORDER.0, ARMA_ORDER.1)
        .unwrap_or_else(|_| ArmaModel::from_parts(vec![1.0], vec![], 0.0, 0.0))
}

fn write_outputs(output: &ExperimentOutput, dir: &std::path::Path, emit_svg: bool) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("results.csv"), output.table.to_csv())?;
    for (name, curve) in &output.curves {
        let path = dir.join(format!("equity_{}_{}.csv", output.ticker, name));
        curve.write_csv(&path)?;
    }
    if emit_svg {
        let series: Vec<(String, Vec<f64>)> = output
            .curves
            .iter()
            .map(|(name, curve)| {
                (
                    name.clone(),
                    curve.points.iter().map(|p| p.capital).collect(),
                )
            })
            .collect();
        let path = dir.join(format!("equity_{}.svg", output.ticker));
        svg::write_line_chart(&path, &format!("{} equity", output.ticker), &series)?;
    }
    Ok(())
}
