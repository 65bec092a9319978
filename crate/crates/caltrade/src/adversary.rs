//! Adversarial market against i.i.d. randomized strategies.
//!
//! Given the marginal `x = P{M̃ > 0}` of an i.i.d. strategy, the market
//! moves the price by `∓2^{-(i+1)}` against the strategy's lean, and a
//! binary decision rule reading the same marginal rides every move. The
//! construction shows the rule collects `1/2 − 2^{-(n+1)}` while the
//! strategy's expected gain stays below `1/4`.

use crate::error::{Error, Result};
use crate::rounding::RandomSource;

/// Prices driven by the announced marginals: `S_0 = 1/2`,
/// `S_i = S_{i-1} − 2^{-(i+1)}` when `x_i > 1/2`, else `+2^{-(i+1)}`.
pub fn adversarial_prices(signals: &[f64]) -> Vec<f64> {
    let mut prices = Vec::with_capacity(signals.len() + 1);
    prices.push(0.5);
    for (i, &x) in signals.iter().enumerate() {
        let step = 2f64.powi(-(i as i32 + 2));
        let prev = prices[i];
        prices.push(if x > 0.5 { prev - step } else { prev + step });
    }
    prices
}

/// The outperforming decision rule: −1 iff `x > 1/2`, +1 otherwise.
pub fn adversary_rule(x: f64) -> f64 {
    if x > 0.5 {
        -1.0
    } else {
        1.0
    }
}

/// An i.i.d. randomized strategy with a declared marginal `P{M̃ > 0}`.
///
/// The marginal is metadata handed to the market as the signal, not
/// something estimated from draws.
pub trait StrategySampler {
    fn marginal_positive(&self) -> f64;
    /// One position draw; must satisfy `|M̃| ≤ 1`.
    fn draw(&self, rng: &mut RandomSource) -> f64;
}

/// `+1` with probability `probability_up`, `-1` otherwise.
#[derive(Debug, Clone, Copy)]
pub struct SignStrategy {
    pub probability_up: f64,
}

impl StrategySampler for SignStrategy {
    fn marginal_positive(&self) -> f64 {
        self.probability_up
    }

    fn draw(&self, rng: &mut RandomSource) -> f64 {
        if rng.uniform() < self.probability_up {
            1.0
        } else {
            -1.0
        }
    }
}

/// Never trades.
#[derive(Debug, Clone, Copy)]
pub struct FlatStrategy;

impl StrategySampler for FlatStrategy {
    fn marginal_positive(&self) -> f64 {
        0.0
    }

    fn draw(&self, _rng: &mut RandomSource) -> f64 {
        0.0
    }
}

/// Monte Carlo summary of the outperformance construction.
#[derive(Debug, Clone)]
pub struct AdversaryReport {
    pub rounds: usize,
    pub runs: usize,
    /// `Σ M̃_i ΔS_i` averaged over runs.
    pub mean_strategy_gain: f64,
    /// Sample standard deviation of the per-run strategy gain.
    pub strategy_gain_std: f64,
    /// `Σ D(x_i) ΔS_i`, equal to `1/2 − 2^{-(n+1)}`.
    pub rule_gain: f64,
    /// `(mean strategy gain − rule gain / 2) / n`.
    pub statistic: f64,
}

impl AdversaryReport {
    /// One-row CSV summary.
    pub fn to_csv(&self) -> String {
        format!(
            "rounds,runs,mean_strategy_gain,strategy_gain_std,rule_gain,statistic\n{},{},{},{},{},{}\n",
            self.rounds,
            self.runs,
            self.mean_strategy_gain,
            self.strategy_gain_std,
            self.rule_gain,
            self.statistic
        )
    }

    pub fn write_csv(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }
}

/// Plays the adversarial market against `strategy` for `n` rounds,
/// averaging the strategy's gain over `runs` independent replications.
/// Runs use streams derived from the passed source by run index.
pub fn verify_outperformance(
    strategy: &dyn StrategySampler,
    n: usize,
    runs: usize,
    rng: &RandomSource,
) -> Result<AdversaryReport> {
    if n == 0 || runs == 0 {
        return Err(Error::domain("adversary run needs n >= 1 and runs >= 1"));
    }
    let marginal = strategy.marginal_positive();
    if !(0.0..=1.0).contains(&marginal) {
        return Err(Error::domain("strategy marginal must lie in [0,1]"));
    }
    let signals = vec![marginal; n];
    let prices = adversarial_prices(&signals);

    let mut gains = Vec::with_capacity(runs);
    for run in 0..runs {
        let mut run_rng = rng.derive(run as u64);
        let mut gain = 0.0;
        for i in 1..=n {
            let position = strategy.draw(&mut run_rng);
            if position.abs() > 1.0 + 1e-12 {
                return Err(Error::domain(format!(
                    "strategy drew |M̃| = {} > 1",
                    position.abs()
                )));
            }
            gain += position * (prices[i] - prices[i - 1]);
        }
        gains.push(gain);
    }
    let mean = gains.iter().sum::<f64>() / runs as f64;
    let variance = if runs > 1 {
        gains.iter().map(|g| (g - mean) * (g - mean)).sum::<f64>() / (runs as f64 - 1.0)
    } else {
        0.0
    };

    let rule_gain: f64 = signals
        .iter()
        .enumerate()
        .map(|(i, &x)| adversary_rule(x) * (prices[i + 1] - prices[i]))
        .sum();

    Ok(AdversaryReport {
        rounds: n,
        runs,
        mean_strategy_gain: mean,
        strategy_gain_std: variance.sqrt(),
        rule_gain,
        statistic: (mean - 0.5 * rule_gain) / n as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn price_construction_follows_signals() {
        let prices = adversarial_prices(&[0.7, 0.3]);
        assert_eq!(prices, vec![0.5, 0.25, 0.375]);

        let empty = adversarial_prices(&[]);
        assert_eq!(empty, vec![0.5]);
    }

    #[test]
    fn low_signals_drive_prices_monotonically_toward_one() {
        let signals = vec![0.5; 40];
        let prices = adversarial_prices(&signals);
        assert!(prices.windows(2).all(|w| w[1] > w[0]));
        assert!(prices.iter().all(|&s| s > 0.0 && s <= 1.0));
        assert!((prices[40] - (1.0 - 2f64.powi(-41))).abs() < 1e-15);
    }

    #[test]
    fn prices_stay_positive_under_any_signals() {
        let signals = vec![0.9; 60];
        let prices = adversarial_prices(&signals);
        assert!(prices.iter().all(|&s| s > 0.0));
    }

    #[test]
    fn rule_matches_definition() {
        assert_eq!(adversary_rule(0.7), -1.0);
        assert_eq!(adversary_rule(0.5), 1.0);
        assert_eq!(adversary_rule(0.0), 1.0);
    }

    #[test]
    fn rule_gain_is_exact_dyadic_sum() {
        let rng = RandomSource::new(3);
        let report =
            verify_outperformance(&SignStrategy { probability_up: 0.5 }, 2, 4, &rng).unwrap();
        assert_eq!(report.rule_gain, 0.375);

        let report =
            verify_outperformance(&SignStrategy { probability_up: 0.5 }, 50, 4, &rng).unwrap();
        assert_eq!(report.rule_gain, 0.5 - 2f64.powi(-51));
    }

    #[test]
    fn flat_strategy_has_zero_gain_and_nonpositive_statistic() {
        let rng = RandomSource::new(9);
        let report = verify_outperformance(&FlatStrategy, 30, 8, &rng).unwrap();
        assert_eq!(report.mean_strategy_gain, 0.0);
        assert!(report.statistic <= 0.0);
    }

    #[test]
    fn uniform_sign_strategy_is_outperformed() {
        let rng = RandomSource::new(2718);
        let report =
            verify_outperformance(&SignStrategy { probability_up: 0.5 }, 50, 1000, &rng).unwrap();
        assert!(report.mean_strategy_gain.abs() < 0.05);
        assert!(report.statistic <= 0.05);
        // expected strategy gain stays below the 1/4 envelope (3σ slack)
        let stderr = report.strategy_gain_std / (report.runs as f64).sqrt();
        assert!(report.mean_strategy_gain + 3.0 * stderr <= 0.25);
    }

    #[test]
    fn replications_are_deterministic_in_the_master_seed() {
        let a = verify_outperformance(
            &SignStrategy { probability_up: 0.4 },
            20,
            50,
            &RandomSource::new(77),
        )
        .unwrap();
        let b = verify_outperformance(
            &SignStrategy { probability_up: 0.4 },
            20,
            50,
            &RandomSource::new(77),
        )
        .unwrap();
        assert_eq!(a.mean_strategy_gain, b.mean_strategy_gain);
    }

    #[test]
    fn oversized_positions_are_rejected() {
        struct Oversized;
        impl StrategySampler for Oversized {
            fn marginal_positive(&self) -> f64 {
                1.0
            }
            fn draw(&self, _rng: &mut RandomSource) -> f64 {
                2.0
            }
        }
        let rng = RandomSource::new(1);
        assert!(verify_outperformance(&Oversized, 5, 2, &rng).is_err());
    }
}
