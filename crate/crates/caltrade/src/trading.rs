//! Universal randomized trading strategies, baselines and regret bounds.
//!
//! The randomized strategies compare the rounded forecast `p̃_i` against the
//! rounded past price `S̃_{i-1}` and take unit (or `±1`) positions scaled by
//! a share count. Stationary competitors are fixed functions of the side
//! information; the regret bounds say how far a randomized run may trail the
//! best normalized competitor.

use crate::calibration::hoeffding_bound;
use crate::error::{Error, Result};
use crate::forecaster::ForecastSession;
use crate::kernels::InducedFunction;

/// Nontriviality floor for `‖D‖_∞`.
const NORM_FLOOR: f64 = 1e-12;

/// A step function `[0,1] → {d_1..d_m}` with finitely many values.
///
/// `values[j]` applies on `[breakpoints[j-1], breakpoints[j])`, the last
/// value up to and including 1.
#[derive(Debug, Clone, PartialEq)]
pub struct DecisionRule {
    breakpoints: Vec<f64>,
    values: Vec<f64>,
}

impl DecisionRule {
    pub fn new(breakpoints: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if values.len() != breakpoints.len() + 1 {
            return Err(Error::domain(
                "decision rule needs exactly one more value than breakpoints",
            ));
        }
        if breakpoints.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::domain("decision rule breakpoints must be increasing"));
        }
        if breakpoints.iter().any(|b| !(0.0..=1.0).contains(b)) {
            return Err(Error::domain("decision rule breakpoints must lie in [0,1]"));
        }
        Ok(DecisionRule { breakpoints, values })
    }

    pub fn constant(value: f64) -> Self {
        DecisionRule {
            breakpoints: Vec::new(),
            values: vec![value],
        }
    }

    /// The rule deciding `+1` above `threshold` and `-1` at or below it.
    pub fn sign_threshold(threshold: f64) -> Result<Self> {
        // value switches strictly above the threshold, so the threshold cell
        // must end just past it
        let above = next_up(threshold);
        DecisionRule::new(vec![above], vec![-1.0, 1.0])
    }

    pub fn value(&self, x: f64) -> f64 {
        let cell = self.breakpoints.partition_point(|&b| b <= x);
        self.values[cell]
    }

    /// Distinct values of the rule, in first-use order.
    pub fn range(&self) -> Vec<f64> {
        let mut seen = Vec::new();
        for &v in &self.values {
            if !seen.contains(&v) {
                seen.push(v);
            }
        }
        seen
    }

    /// Range cardinality `m`.
    pub fn range_cardinality(&self) -> usize {
        self.range().len()
    }

    pub fn norm_inf(&self) -> f64 {
        self.values.iter().fold(0.0f64, |acc, v| acc.max(v.abs()))
    }

    /// Whether `D(x)` equals the `j`-th value of the range.
    pub fn in_region(&self, x: f64, value_index: usize) -> bool {
        let range = self.range();
        value_index < range.len() && self.value(x) == range[value_index]
    }
}

fn next_up(x: f64) -> f64 {
    if x == f64::INFINITY {
        return x;
    }
    let bits = if x == 0.0 {
        1
    } else if x > 0.0 {
        x.to_bits() + 1
    } else {
        x.to_bits() - 1
    };
    f64::from_bits(bits)
}

/// One step of a capital ledger.
#[derive(Debug, Clone, PartialEq)]
pub struct EquityPoint {
    pub step: usize,
    /// Signed share count held through the step.
    pub position: f64,
    /// Price revealed at the end of the step.
    pub price: f64,
    /// Capital after the step.
    pub capital: f64,
}

/// Per-step capital trajectory of a strategy.
///
/// The first point is a step-0 anchor holding the starting price and the
/// initial capital, so serialized curves are self-describing.
#[derive(Debug, Clone, PartialEq)]
pub struct EquityCurve {
    pub initial_capital: f64,
    pub points: Vec<EquityPoint>,
}

impl EquityCurve {
    pub fn new(initial_capital: f64) -> Self {
        EquityCurve {
            initial_capital,
            points: Vec::new(),
        }
    }

    /// A curve anchored at `(step 0, no position, start_price, 𝓚_0)`.
    pub fn anchored(initial_capital: f64, start_price: f64) -> Self {
        EquityCurve {
            initial_capital,
            points: vec![EquityPoint {
                step: 0,
                position: 0.0,
                price: start_price,
                capital: initial_capital,
            }],
        }
    }

    pub fn final_capital(&self) -> f64 {
        self.points
            .last()
            .map_or(self.initial_capital, |p| p.capital)
    }

    /// Total gain `𝓚_N − 𝓚_0`.
    pub fn gain(&self) -> f64 {
        self.final_capital() - self.initial_capital
    }

    /// Relative return in percent; requires a nonzero initial capital.
    pub fn profit_percent(&self) -> Option<f64> {
        if self.initial_capital == 0.0 {
            None
        } else {
            Some(self.gain() / self.initial_capital * 100.0)
        }
    }

    /// CSV rows `step,position,price,capital`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("step,position,price,capital\n");
        for p in &self.points {
            out.push_str(&format!(
                "{},{},{},{}\n",
                p.step, p.position, p.price, p.capital
            ));
        }
        out
    }

    pub fn write_csv(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }
}

/// A stationary competitor: a fixed function of the side information.
#[derive(Debug, Clone)]
pub enum StationaryRule {
    /// RKHS competitor evaluated on the raw signal.
    Induced(InducedFunction),
    /// Finite-range decision rule evaluated on the randomized information
    /// vector's last coordinate.
    Decision(DecisionRule),
}

/// Strategy selector for [`run_strategy`].
#[derive(Debug, Clone)]
pub enum StrategyKind {
    /// Buy one unit when the rounded forecast exceeds the rounded price.
    RiseOnly,
    /// `+1` on a predicted rise, `-1` otherwise.
    RiseFall,
    /// `l` times the rise/fall position.
    Scaled(u32),
    /// Hold the share count throughout.
    BuyHold,
    /// A stationary competitor run under the same protocol.
    Stationary(StationaryRule),
    /// Capital-protected dealing for a rise with working capital
    /// `min(𝓚_0, 𝓚_{i-1})`.
    DefensiveCapital { initial_capital: f64 },
}

/// Rise-only decision: 1 iff `p̃ > S̃`, else 0.
pub fn m1_decision(p_tilde: f64, s_tilde: f64) -> f64 {
    if p_tilde > s_tilde {
        1.0
    } else {
        0.0
    }
}

/// Rise/fall decision: +1 iff `p̃ > S̃`, −1 otherwise.
pub fn m_decision(p_tilde: f64, s_tilde: f64) -> f64 {
    if p_tilde > s_tilde {
        1.0
    } else {
        -1.0
    }
}

/// Runs one strategy over a scaled price path.
///
/// `prices` holds `S_0..S_N` in `[0,1]`; step `i` decides a position on the
/// strength of `S_{i-1}` and settles at `S_i`. The session supplies the
/// forecasts and randomization: its information vector is `(S_{i-1})` for
/// `k = 1` or `(S_{i-1}, x_i)` for `k = 2` with explicit `signals` (one per
/// step). Without explicit signals the side kernel sees `S_{i-1}`.
pub fn run_strategy(
    prices: &[f64],
    signals: Option<&[f64]>,
    kind: &StrategyKind,
    session: &mut ForecastSession,
    shares: f64,
    initial_capital: f64,
) -> Result<EquityCurve> {
    if prices.len() < 2 {
        return Err(Error::domain("need at least two prices to trade"));
    }
    if prices.iter().any(|p| !(0.0..=1.0).contains(p)) {
        return Err(Error::domain("prices must be scaled into [0,1]"));
    }
    let steps = prices.len() - 1;
    if let Some(sig) = signals {
        if sig.len() != steps {
            return Err(Error::domain(format!(
                "expected {steps} signals, got {}",
                sig.len()
            )));
        }
    }
    if session.k() == 2 && signals.is_none() {
        return Err(Error::domain(
            "a session with two information coordinates needs explicit signals",
        ));
    }
    if !matches!(kind, StrategyKind::BuyHold | StrategyKind::Stationary(StationaryRule::Induced(_)))
        && !(session.k() == 1 || session.k() == 2)
    {
        return Err(Error::domain(
            "trading requires an information vector holding the past price",
        ));
    }

    if let StrategyKind::DefensiveCapital { initial_capital: k0 } = kind {
        let entries = entry_decisions(prices, signals, session)?;
        return defensive_run(prices, &entries, *k0, 0.0);
    }

    if let StrategyKind::Stationary(StationaryRule::Induced(rule)) = kind {
        if rule.sup_norm()? <= NORM_FLOOR {
            return Err(Error::domain("stationary competitor must be nontrivial"));
        }
    }

    let mut curve = EquityCurve::anchored(initial_capital, prices[0]);
    let mut capital = initial_capital;
    for i in 1..prices.len() {
        let prev = prices[i - 1];
        let signal = signals.map_or(prev, |s| s[i - 1]);
        let position = match kind {
            StrategyKind::BuyHold => shares,
            StrategyKind::Stationary(StationaryRule::Induced(rule)) => rule.eval(&[signal])?,
            StrategyKind::RiseOnly
            | StrategyKind::RiseFall
            | StrategyKind::Scaled(_)
            | StrategyKind::Stationary(StationaryRule::Decision(_)) => {
                let info = session_info(session.k(), prev, signal);
                let p = session.next_forecast(&info, signal)?;
                let (p_tilde, info_tilde) = session.randomize_round(p, &info)?;
                let s_tilde = info_tilde[0];
                let position = match kind {
                    StrategyKind::RiseOnly => shares * m1_decision(p_tilde, s_tilde),
                    StrategyKind::RiseFall => shares * m_decision(p_tilde, s_tilde),
                    StrategyKind::Scaled(l) => *l as f64 * shares * m_decision(p_tilde, s_tilde),
                    StrategyKind::Stationary(StationaryRule::Decision(rule)) => {
                        rule.value(*info_tilde.last().expect("info vector is nonempty"))
                    }
                    _ => unreachable!(),
                };
                session.update(p, &info, signal, prices[i])?;
                position
            }
            StrategyKind::DefensiveCapital { .. } => unreachable!(),
        };
        capital += position * (prices[i] - prev);
        curve.points.push(EquityPoint {
            step: i,
            position,
            price: prices[i],
            capital,
        });
    }
    Ok(curve)
}

/// Per-step rise decisions `p̃_i > S̃_{i-1}` from a session run.
pub fn entry_decisions(
    prices: &[f64],
    signals: Option<&[f64]>,
    session: &mut ForecastSession,
) -> Result<Vec<bool>> {
    if prices.len() < 2 {
        return Err(Error::domain("need at least two prices to trade"));
    }
    let mut entries = Vec::with_capacity(prices.len() - 1);
    for i in 1..prices.len() {
        let prev = prices[i - 1];
        let signal = signals.map_or(prev, |s| s[i - 1]);
        let info = session_info(session.k(), prev, signal);
        let p = session.next_forecast(&info, signal)?;
        let (p_tilde, info_tilde) = session.randomize_round(p, &info)?;
        entries.push(p_tilde > info_tilde[0]);
        session.update(p, &info, signal, prices[i])?;
    }
    Ok(entries)
}

fn session_info(k: usize, prev_price: f64, signal: f64) -> Vec<f64> {
    if k == 2 {
        vec![prev_price, signal]
    } else {
        vec![prev_price]
    }
}

/// Capital-protected trading: at each step the working capital is
/// `𝓛 = min(𝓚_0, 𝓚_{i-1})`; on an entry signal `𝓛/S_{i-1}` shares are
/// bought, an optional transaction cost `rate·M_i·S_{i-1}` is deducted, and
/// the run stops permanently once `𝓛 ≤ 0`.
pub fn defensive_run(
    prices: &[f64],
    entries: &[bool],
    initial_capital: f64,
    cost_rate: f64,
) -> Result<EquityCurve> {
    if initial_capital <= 0.0 {
        return Err(Error::domain("defensive trading needs positive initial capital"));
    }
    if prices.len() != entries.len() + 1 {
        return Err(Error::domain(format!(
            "expected one entry decision per step: {} prices vs {} entries",
            prices.len(),
            entries.len()
        )));
    }
    if cost_rate < 0.0 {
        return Err(Error::domain("transaction cost rate must be nonnegative"));
    }
    let mut curve = EquityCurve::anchored(initial_capital, prices[0]);
    let mut capital = initial_capital;
    let mut stopped = false;
    for i in 1..prices.len() {
        let prev = prices[i - 1];
        let working = initial_capital.min(capital);
        let mut position = 0.0;
        if !stopped {
            if working <= 0.0 {
                stopped = true;
            } else if entries[i - 1] && prev > 0.0 {
                position = working / prev;
                capital += position * (prices[i] - prev);
                capital -= cost_rate * position * prev;
            }
            // an entry with a zero previous price is skipped outright
        }
        curve.points.push(EquityPoint {
            step: i,
            position,
            price: prices[i],
            capital,
        });
    }
    Ok(curve)
}

/// Rise-only regret bound:
/// `(4/3)(7e−1)(c²+1)^{1/4} n^{3/4+ε} + (‖D‖_F/‖D‖_∞)·sqrt((c²+1)n) + sqrt((n/2)ln(2/δ))`.
pub fn rise_regret_bound(
    n: usize,
    c_embed: f64,
    epsilon: f64,
    delta: f64,
    norm_rkhs: f64,
    norm_inf: f64,
) -> Result<f64> {
    regret_bound_rise_fall(n, c_embed, epsilon, delta, norm_rkhs, norm_inf, false)
}

/// Rise-and-fall regret bound:
/// `(8/3)(5e−2)(c²+1)^{1/4} n^{3/4+ε} + (‖D‖_F/‖D‖_∞)·sqrt((c²+1)n) + 2·sqrt((n/2)ln(2/δ))`.
pub fn rise_fall_regret_bound(
    n: usize,
    c_embed: f64,
    epsilon: f64,
    delta: f64,
    norm_rkhs: f64,
    norm_inf: f64,
) -> Result<f64> {
    regret_bound_rise_fall(n, c_embed, epsilon, delta, norm_rkhs, norm_inf, true)
}

fn regret_bound_rise_fall(
    n: usize,
    c_embed: f64,
    epsilon: f64,
    delta: f64,
    norm_rkhs: f64,
    norm_inf: f64,
    both_sides: bool,
) -> Result<f64> {
    if n == 0 {
        return Err(Error::domain("regret bound needs n >= 1"));
    }
    if norm_inf <= NORM_FLOOR {
        return Err(Error::domain("competitor must be nontrivial (‖D‖_∞ > 0)"));
    }
    let e = std::f64::consts::E;
    let c2p1 = c_embed * c_embed + 1.0;
    let nf = n as f64;
    let leading = if both_sides {
        (8.0 / 3.0) * (5.0 * e - 2.0)
    } else {
        (4.0 / 3.0) * (7.0 * e - 1.0)
    };
    let hoeffding_scale = if both_sides { 2.0 } else { 1.0 };
    Ok(leading * c2p1.powf(0.25) * nf.powf(0.75 + epsilon)
        + (norm_rkhs / norm_inf) * (c2p1 * nf).sqrt()
        + hoeffding_scale * hoeffding_bound(n, delta)?)
}

/// Decision-rule regret bound for a range of cardinality `m`:
/// `5(m+1)e·n^{4/5+ε} + (4/3)(m+1)(e−1)·n^{3/4+ε} + (m+1)·sqrt((n/2)ln(2m/δ))`.
pub fn decision_rule_regret_bound(n: usize, m: usize, epsilon: f64, delta: f64) -> Result<f64> {
    if n == 0 || m == 0 {
        return Err(Error::domain("regret bound needs n >= 1 and m >= 1"));
    }
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(Error::domain(format!("delta must lie in (0,1], got {delta}")));
    }
    let e = std::f64::consts::E;
    let nf = n as f64;
    let mf = (m + 1) as f64;
    Ok(5.0 * mf * e * nf.powf(0.8 + epsilon)
        + mf * (e - 1.0) * (4.0 / 3.0) * nf.powf(0.75 + epsilon)
        + mf * (nf / 2.0 * (2.0 * m as f64 / delta).ln()).sqrt())
}
