//! Checking rules, calibration reports and theoretical bounds.
//!
//! A checking rule selects the rounds over which the signed forecast
//! residuals are summed; a well-calibrated forecaster keeps every such sum
//! small relative to the round count. The bound helpers evaluate the
//! theoretical envelopes those sums are compared against.

use crate::error::{Error, Result};
use crate::kernels::InducedFunction;
use crate::trading::DecisionRule;

/// A closed or half-open subinterval of `[0,1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
    pub lo_closed: bool,
    pub hi_closed: bool,
}

impl Interval {
    pub fn closed(lo: f64, hi: f64) -> Self {
        Interval {
            lo,
            hi,
            lo_closed: true,
            hi_closed: true,
        }
    }

    /// `[lo, hi)`.
    pub fn half_open(lo: f64, hi: f64) -> Self {
        Interval {
            lo,
            hi,
            lo_closed: true,
            hi_closed: false,
        }
    }

    pub fn full() -> Self {
        Interval::closed(0.0, 1.0)
    }

    pub fn contains(&self, x: f64) -> bool {
        let above = if self.lo_closed { x >= self.lo } else { x > self.lo };
        let below = if self.hi_closed { x <= self.hi } else { x < self.hi };
        above && below
    }
}

/// A measurable region of `(forecast, information)` space.
///
/// Only the families the guarantees are stated for are represented: interval
/// products, the two half-space rules used by trading, and decision-rule
/// regions.
#[derive(Debug, Clone)]
pub enum CheckingRule {
    /// Product of `k+1` intervals over the coordinates `(p, x̄)`.
    IntervalProduct(Vec<Interval>),
    /// `p > x̄[0]`.
    ForecastAboveInfo,
    /// `p ≤ x̄[0]`.
    ForecastAtMostInfo,
    /// Rounds where the decision rule takes its `value_index`-th value on
    /// the last information coordinate.
    DecisionRegion {
        rule: DecisionRule,
        value_index: usize,
    },
}

impl CheckingRule {
    /// Indicator `I_S(p, x̄)`.
    pub fn indicator(&self, forecast: f64, info: &[f64]) -> Result<bool> {
        match self {
            CheckingRule::IntervalProduct(intervals) => {
                if intervals.len() != info.len() + 1 {
                    return Err(Error::domain(format!(
                        "interval rule has {} coordinates, transcript has {}",
                        intervals.len(),
                        info.len() + 1
                    )));
                }
                if !intervals[0].contains(forecast) {
                    return Ok(false);
                }
                Ok(intervals
                    .iter()
                    .skip(1)
                    .zip(info)
                    .all(|(interval, &x)| interval.contains(x)))
            }
            CheckingRule::ForecastAboveInfo => {
                let x0 = info
                    .first()
                    .ok_or_else(|| Error::domain("half-space rule needs an information vector"))?;
                Ok(forecast > *x0)
            }
            CheckingRule::ForecastAtMostInfo => {
                let x0 = info
                    .first()
                    .ok_or_else(|| Error::domain("half-space rule needs an information vector"))?;
                Ok(forecast <= *x0)
            }
            CheckingRule::DecisionRegion { rule, value_index } => {
                let x = info
                    .last()
                    .ok_or_else(|| Error::domain("decision region needs an information vector"))?;
                Ok(rule.in_region(*x, *value_index))
            }
        }
    }

    pub fn label(&self) -> String {
        match self {
            CheckingRule::IntervalProduct(intervals) => {
                let parts: Vec<String> = intervals
                    .iter()
                    .map(|iv| {
                        format!(
                            "{}{:.4},{:.4}{}",
                            if iv.lo_closed { "[" } else { "(" },
                            iv.lo,
                            iv.hi,
                            if iv.hi_closed { "]" } else { ")" }
                        )
                    })
                    .collect();
                parts.join("x")
            }
            CheckingRule::ForecastAboveInfo => "p>x0".into(),
            CheckingRule::ForecastAtMostInfo => "p<=x0".into(),
            CheckingRule::DecisionRegion { value_index, .. } => {
                format!("decision-region-{value_index}")
            }
        }
    }
}

/// One transcript row `(p̃, x̃, y)` scored by the checking rules.
#[derive(Debug, Clone)]
pub struct CalibrationStep {
    pub forecast: f64,
    pub info: Vec<f64>,
    pub outcome: f64,
}

/// Per-rule outcome of a calibration scoring pass.
#[derive(Debug, Clone)]
pub struct RuleOutcome {
    pub label: String,
    /// `Σ I_S(p̃_i, x̃_i)(y_i − p̃_i)`.
    pub cumulative: f64,
    /// Cumulative sum divided by the number of rounds.
    pub normalized: f64,
    /// Theoretical envelope attached by the caller (NaN when unset).
    pub bound: f64,
}

#[derive(Debug, Clone)]
pub struct CalibrationReport {
    pub rounds: usize,
    pub rules: Vec<RuleOutcome>,
}

impl CalibrationReport {
    /// Attaches one shared per-rule bound (union-split accounting).
    pub fn attach_bound(&mut self, bound: f64) {
        for rule in &mut self.rules {
            rule.bound = bound;
        }
    }

    /// CSV rows `rule,cumulative,normalized,bound`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("rule,cumulative,normalized,bound\n");
        for rule in &self.rules {
            out.push_str(&format!(
                "{},{},{},{}\n",
                rule.label, rule.cumulative, rule.normalized, rule.bound
            ));
        }
        out
    }

    pub fn write_csv(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }

    pub fn worst_absolute_cumulative(&self) -> f64 {
        self.rules
            .iter()
            .fold(0.0f64, |acc, r| acc.max(r.cumulative.abs()))
    }
}

/// Scores a transcript against a set of checking rules.
pub fn calibration_error(
    rules: &[CheckingRule],
    transcript: &[CalibrationStep],
) -> Result<CalibrationReport> {
    if transcript.is_empty() {
        return Err(Error::domain("calibration needs a nonempty transcript"));
    }
    let n = transcript.len();
    let mut outcomes = Vec::with_capacity(rules.len());
    for rule in rules {
        let mut cumulative = 0.0;
        for step in transcript {
            if rule.indicator(step.forecast, &step.info)? {
                cumulative += step.outcome - step.forecast;
            }
        }
        outcomes.push(RuleOutcome {
            label: rule.label(),
            cumulative,
            normalized: cumulative / n as f64,
            bound: f64::NAN,
        });
    }
    Ok(CalibrationReport {
        rounds: n,
        rules: outcomes,
    })
}

/// High-probability calibration envelope (without the confidence term):
/// `4e·((k+1)/2)^{2/(k+3)}·(c²+1)^{1/(k+3)}·n^{1−1/(k+3)+ε}`.
pub fn calibration_bound(k: usize, c_embed: f64, epsilon: f64, n: usize) -> f64 {
    let e = std::f64::consts::E;
    let kf = k as f64;
    let exponent = 1.0 - 1.0 / (kf + 3.0) + epsilon;
    4.0 * e
        * ((kf + 1.0) / 2.0).powf(2.0 / (kf + 3.0))
        * (c_embed * c_embed + 1.0).powf(1.0 / (kf + 3.0))
        * (n as f64).powf(exponent)
}

/// Azuma–Hoeffding deviation term `sqrt((n/2)·ln(2/δ))` for confidence
/// `1 − δ`.
pub fn hoeffding_bound(n: usize, delta: f64) -> Result<f64> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::domain(format!("delta must lie in (0,1), got {delta}")));
    }
    Ok((n as f64 / 2.0 * (2.0 / delta).ln()).sqrt())
}

/// Fixed-resolution calibration envelope
/// `Δn + sqrt((c²+1)n/Δ^{k+1}) + sqrt((n/2)ln(2/δ))`.
pub fn fixed_resolution_bound(
    k: usize,
    c_embed: f64,
    grid_delta: f64,
    n: usize,
    delta: f64,
) -> Result<f64> {
    if grid_delta <= 0.0 || grid_delta > 1.0 {
        return Err(Error::domain("grid resolution must lie in (0,1]"));
    }
    let c2p1 = c_embed * c_embed + 1.0;
    let nf = n as f64;
    Ok(grid_delta * nf
        + (c2p1 * nf / grid_delta.powi(k as i32 + 1)).sqrt()
        + hoeffding_bound(n, delta)?)
}

/// Signed residual of a stationary competitor against deterministic
/// forecasts: `|Σ D(x_i)(y_i − p_i)|` over `(signal, forecast, outcome)`
/// rows.
pub fn rkhs_residual(d: &InducedFunction, transcript: &[(f64, f64, f64)]) -> Result<f64> {
    let mut total = 0.0;
    for &(signal, forecast, outcome) in transcript {
        total += d.eval(&[signal])? * (outcome - forecast);
    }
    Ok(total.abs())
}
