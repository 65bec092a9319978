//! One-step-ahead ARMA baseline.
//!
//! Fitting is two-stage: a long autoregression estimates the innovations,
//! then the ARMA coefficients come from a least-squares regression on
//! lagged values and lagged innovation estimates. Forecasts are the
//! one-step conditional mean, clamped to `[0,1]` so they plug into the same
//! decision rules as the calibrated forecasts.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Minimum observations per estimated parameter.
const MIN_OBS_PER_PARAM: usize = 10;

#[derive(Debug, Clone)]
pub struct ArmaModel {
    ar: Vec<f64>,
    ma: Vec<f64>,
    intercept: f64,
    innovation_variance: f64,
}

impl ArmaModel {
    /// Assembles a model from known coefficients (tests, manual baselines).
    pub fn from_parts(ar: Vec<f64>, ma: Vec<f64>, intercept: f64, innovation_variance: f64) -> Self {
        ArmaModel {
            ar,
            ma,
            intercept,
            innovation_variance,
        }
    }

    pub fn ar(&self) -> &[f64] {
        &self.ar
    }

    pub fn ma(&self) -> &[f64] {
        &self.ma
    }

    pub fn intercept(&self) -> f64 {
        self.intercept
    }

    pub fn innovation_variance(&self) -> f64 {
        self.innovation_variance
    }

    /// Fits an ARMA(p, q) model by the two-stage regression.
    pub fn fit(series: &[f64], p: usize, q: usize) -> Result<ArmaModel> {
        if p + q == 0 {
            return Err(Error::domain("ARMA order needs p + q >= 1"));
        }
        let needed = MIN_OBS_PER_PARAM * (p + q + 1);
        if series.len() < needed {
            return Err(Error::domain(format!(
                "ARMA({p},{q}) needs at least {needed} observations, got {}",
                series.len()
            )));
        }
        let n = series.len();
        let mean = series.iter().sum::<f64>() / n as f64;
        let spread = series.iter().map(|y| (y - mean) * (y - mean)).sum::<f64>() / n as f64;
        if spread < 1e-24 {
            return Err(Error::Fit("series is constant".into()));
        }

        let (innovations, innovations_valid_from) = if q > 0 {
            // long autoregression whose residuals estimate the innovations
            let long_order = ((n as f64).sqrt().ceil() as usize)
                .max(p + q)
                .min(n / 4);
            let long_coeffs = least_squares_ar(series, long_order)?;
            (Some(ar_residuals(series, &long_coeffs, long_order)), long_order)
        } else {
            (None, 0)
        };

        // regression rows must not touch zero-filled residual estimates
        let start = p.max(innovations_valid_from + q);
        let rows = n - start;
        let cols = 1 + p + q;
        if rows < cols {
            return Err(Error::Fit("not enough rows for the ARMA regression".into()));
        }
        let mut design = DMatrix::zeros(rows, cols);
        let mut target = DVector::zeros(rows);
        for (row, t) in (start..n).enumerate() {
            design[(row, 0)] = 1.0;
            for i in 1..=p {
                design[(row, i)] = series[t - i];
            }
            if let Some(eps) = &innovations {
                for j in 1..=q {
                    design[(row, p + j)] = eps[t - j];
                }
            }
            target[row] = series[t];
        }
        let solution = solve_least_squares(design, target)?;
        let intercept = solution[0];
        let ar: Vec<f64> = (1..=p).map(|i| solution[i]).collect();
        let ma: Vec<f64> = (1..=q).map(|j| solution[p + j]).collect();

        let mut model = ArmaModel {
            ar,
            ma,
            intercept,
            innovation_variance: 0.0,
        };
        let residuals = model.residual_pass(series);
        let used = residuals.len().saturating_sub(start).max(1);
        model.innovation_variance =
            residuals[start..].iter().map(|e| e * e).sum::<f64>() / used as f64;
        Ok(model)
    }

    /// One-step conditional mean given the history, clamped to `[0,1]`.
    pub fn forecast_next(&self, history: &[f64]) -> Result<f64> {
        if history.len() < self.ar.len() {
            return Err(Error::domain(format!(
                "forecast needs at least {} past values, got {}",
                self.ar.len(),
                history.len()
            )));
        }
        let residuals = self.residual_pass(history);
        let n = history.len();
        let mut value = self.intercept;
        for (i, phi) in self.ar.iter().enumerate() {
            value += phi * history[n - 1 - i];
        }
        for (j, theta) in self.ma.iter().enumerate() {
            if n > j {
                value += theta * residuals[n - 1 - j];
            }
        }
        Ok(value.clamp(0.0, 1.0))
    }

    /// Conditional residuals `ε_t = y_t − ŷ_t`, zero-initialized where
    /// lags are missing.
    fn residual_pass(&self, series: &[f64]) -> Vec<f64> {
        let p = self.ar.len();
        let mut eps = vec![0.0; series.len()];
        for t in 0..series.len() {
            if t < p {
                continue;
            }
            let mut pred = self.intercept;
            for (i, phi) in self.ar.iter().enumerate() {
                pred += phi * series[t - 1 - i];
            }
            for (j, theta) in self.ma.iter().enumerate() {
                if t > j {
                    pred += theta * eps[t - 1 - j];
                }
            }
            eps[t] = series[t] - pred;
        }
        eps
    }
}

/// Least-squares AR(p) with intercept, coefficients ordered
/// `[intercept, φ_1, ..., φ_p]`.
fn least_squares_ar(series: &[f64], p: usize) -> Result<Vec<f64>> {
    let n = series.len();
    if n <= 2 * (p + 1) {
        return Err(Error::Fit("series too short for the long autoregression".into()));
    }
    let rows = n - p;
    let mut design = DMatrix::zeros(rows, p + 1);
    let mut target = DVector::zeros(rows);
    for (row, t) in (p..n).enumerate() {
        design[(row, 0)] = 1.0;
        for i in 1..=p {
            design[(row, i)] = series[t - i];
        }
        target[row] = series[t];
    }
    let solution = solve_least_squares(design, target)?;
    Ok(solution.iter().copied().collect())
}

fn ar_residuals(series: &[f64], coeffs: &[f64], order: usize) -> Vec<f64> {
    let mut eps = vec![0.0; series.len()];
    for t in order..series.len() {
        let mut pred = coeffs[0];
        for i in 1..=order {
            pred += coeffs[i] * series[t - i];
        }
        eps[t] = series[t] - pred;
    }
    eps
}

fn solve_least_squares(design: DMatrix<f64>, target: DVector<f64>) -> Result<DVector<f64>> {
    let svd = design.svd(true, true);
    svd.solve(&target, 1e-12)
        .map_err(|e| Error::Fit(format!("least squares failed: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rounding::RandomSource;

    fn simulate_ar1(n: usize, phi: f64, intercept: f64, sigma: f64, seed: u64) -> Vec<f64> {
        let mut rng = RandomSource::new(seed);
        let mut series = Vec::with_capacity(n);
        let mut prev = intercept / (1.0 - phi);
        for _ in 0..n {
            let value = intercept + phi * prev + sigma * rng.standard_normal();
            series.push(value);
            prev = value;
        }
        series
    }

    #[test]
    fn recovers_ar1_coefficient() {
        let series = simulate_ar1(5000, 0.6, 0.2, 0.1, 11);
        let model = ArmaModel::fit(&series, 1, 0).unwrap();
        assert!(
            (model.ar()[0] - 0.6).abs() < 0.05,
            "recovered phi = {}",
            model.ar()[0]
        );
    }

    #[test]
    fn white_noise_has_negligible_ar_coefficient() {
        let series = simulate_ar1(5000, 0.0, 0.5, 0.1, 5);
        let model = ArmaModel::fit(&series, 1, 0).unwrap();
        assert!(model.ar()[0].abs() < 0.05, "phi = {}", model.ar()[0]);
    }

    #[test]
    fn constant_series_is_a_fit_error() {
        let series = vec![0.4; 500];
        assert!(matches!(ArmaModel::fit(&series, 1, 0), Err(Error::Fit(_))));
    }

    #[test]
    fn order_and_length_preconditions() {
        assert!(ArmaModel::fit(&[0.1, 0.2, 0.3], 0, 0).is_err());
        let short = simulate_ar1(15, 0.5, 0.0, 0.1, 3);
        assert!(ArmaModel::fit(&short, 1, 0).is_err());
    }

    #[test]
    fn forecast_known_models() {
        // random-walk mean: φ = 1 echoes the last value
        let rw = ArmaModel::from_parts(vec![1.0], vec![], 0.0, 0.01);
        assert_eq!(rw.forecast_next(&[0.2, 0.4]).unwrap(), 0.4);

        // all-zero coefficients forecast the intercept
        let flat = ArmaModel::from_parts(vec![0.0], vec![0.0], 0.3, 0.01);
        assert_eq!(flat.forecast_next(&[0.9, 0.1]).unwrap(), 0.3);

        // AR(1): 0.5·0.6 + 0.2 = 0.5
        let ar = ArmaModel::from_parts(vec![0.6], vec![], 0.2, 0.01);
        assert_eq!(ar.forecast_next(&[0.1, 0.5]).unwrap(), 0.5);
    }

    #[test]
    fn forecast_clamps_to_unit_interval() {
        let hot = ArmaModel::from_parts(vec![3.0], vec![], 0.5, 0.01);
        assert_eq!(hot.forecast_next(&[0.9]).unwrap(), 1.0);
        let cold = ArmaModel::from_parts(vec![3.0], vec![], -3.0, 0.01);
        assert_eq!(cold.forecast_next(&[0.1]).unwrap(), 0.0);
    }

    #[test]
    fn one_step_rmse_tracks_innovation_sigma() {
        let sigma = 0.1;
        let series = simulate_ar1(6000, 0.6, 0.2, sigma, 21);
        let (train, test) = series.split_at(5000);
        let model = ArmaModel::fit(train, 1, 0).unwrap();
        let mut sq_err = 0.0;
        let mut count = 0usize;
        for (t, &observed) in test.iter().enumerate() {
            // unclamped conditional mean for the RMSE check
            let last = series[5000 + t - 1];
            let forecast = model.intercept() + model.ar()[0] * last;
            let err = observed - forecast;
            sq_err += err * err;
            count += 1;
        }
        let rmse = (sq_err / count as f64).sqrt();
        assert!(
            (rmse - sigma).abs() / sigma < 0.1,
            "rmse {rmse} vs sigma {sigma}"
        );
    }

    #[test]
    fn fit_reports_innovation_variance_near_truth() {
        let sigma = 0.1;
        let series = simulate_ar1(5000, 0.6, 0.2, sigma, 8);
        let model = ArmaModel::fit(&series, 1, 0).unwrap();
        let ratio = model.innovation_variance() / (sigma * sigma);
        assert!((0.8..1.2).contains(&ratio), "variance ratio {ratio}");
    }

    #[test]
    fn arma21_fit_runs_and_forecasts_in_range() {
        // ARMA(2,1) on a bounded series: the fit must produce usable
        // one-step forecasts even if individual coefficients are noisy
        let mut rng = RandomSource::new(17);
        let mut series = vec![0.5f64, 0.5];
        for t in 2..3000 {
            let drift = 0.4 * (series[t - 1] - 0.5) + 0.2 * (series[t - 2] - 0.5);
            let value: f64 = 0.5 + drift + 0.02 * rng.standard_normal();
            series.push(value.clamp(0.0, 1.0));
        }
        let model = ArmaModel::fit(&series, 2, 1).unwrap();
        let forecast = model.forecast_next(&series).unwrap();
        assert!((0.0..=1.0).contains(&forecast));
    }

    #[test]
    fn shift_equivariance_of_pure_ar_forecasts() {
        // adding a constant and refitting shifts forecasts by (1 - Σφ)·c + φ·c ≈ c
        let series = simulate_ar1(4000, 0.5, 0.0, 0.05, 31);
        let shifted: Vec<f64> = series.iter().map(|y| y + 2.0).collect();
        let base = ArmaModel::fit(&series, 1, 0).unwrap();
        let moved = ArmaModel::fit(&shifted, 1, 0).unwrap();
        let f_base = {
            let h = &series;
            base.intercept() + base.ar()[0] * h[h.len() - 1]
        };
        let f_moved = {
            let h = &shifted;
            moved.intercept() + moved.ar()[0] * h[h.len() - 1]
        };
        assert!(
            (f_moved - f_base - 2.0).abs() < 0.05,
            "shift gap {}",
            f_moved - f_base
        );
    }
}
