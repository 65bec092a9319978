//! Python bindings: the rounding grid, the defensive forecaster, trading
//! decisions and bounds, the adversarial market and the ARMA baseline.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use caltrade::adversary;
use caltrade::arma;
use caltrade::backtest::{simulate_test_stock, ChainConfig, KernelChoice, ScheduleChoice};
use caltrade::calibration;
use caltrade::trading;
use caltrade::{ForecastSession, KernelSpec, ScheduleState};

fn to_py_err(err: caltrade::Error) -> PyErr {
    PyValueError::new_err(err.to_string())
}

fn kernel_choice(name: &str) -> PyResult<KernelChoice> {
    match name {
        "sobolev" => Ok(KernelChoice::Sobolev),
        "gaussian" => Ok(KernelChoice::Gaussian),
        "cosine" => Ok(KernelChoice::Cosine),
        "expsmooth" => Ok(KernelChoice::ExpSmooth),
        "discretized" => Ok(KernelChoice::Discretized),
        other => Err(PyValueError::new_err(format!(
            "unknown kernel {other:?}; use sobolev|gaussian|cosine|expsmooth|discretized"
        ))),
    }
}

/// The Δ-resolution grid with its rounding weights and kernel.
#[pyclass(name = "RoundingGrid")]
struct PyRoundingGrid {
    inner: caltrade::RoundingGrid,
}

#[pymethods]
impl PyRoundingGrid {
    #[new]
    fn new(delta: f64) -> PyResult<Self> {
        Ok(PyRoundingGrid {
            inner: caltrade::RoundingGrid::new(delta).map_err(to_py_err)?,
        })
    }

    #[getter]
    fn delta(&self) -> f64 {
        self.inner.delta()
    }

    #[getter]
    fn subintervals(&self) -> u32 {
        self.inner.subintervals()
    }

    fn points(&self) -> Vec<f64> {
        self.inner.points()
    }

    /// Two-point rounding weights of `p` as a `{grid value: weight}` dict.
    fn weights<'py>(&self, py: Python<'py>, p: f64) -> PyResult<Bound<'py, PyDict>> {
        let weights = self.inner.weights(p).map_err(to_py_err)?;
        let dict = PyDict::new(py);
        for (key, w) in weights.entries() {
            dict.set_item(self.inner.point(key[0]), w)?;
        }
        Ok(dict)
    }

    /// Expectation of the rounding weights of `p` (recovers `p`).
    fn expectation(&self, p: f64) -> PyResult<f64> {
        let weights = self.inner.weights(p).map_err(to_py_err)?;
        Ok(weights.expectation(&self.inner)[0])
    }

    /// Discretized rounding kernel over same-length vectors.
    fn rounding_kernel(&self, a: Vec<f64>, b: Vec<f64>) -> PyResult<f64> {
        self.inner.rounding_kernel(&a, &b).map_err(to_py_err)
    }

    /// Rounds every coordinate of `point` to a random grid point.
    fn sample(&self, point: Vec<f64>, rng: &mut PyRandomSource) -> PyResult<Vec<f64>> {
        let weights = self.inner.product_weights(&point).map_err(to_py_err)?;
        Ok(self.inner.sample(&weights, &mut rng.inner))
    }
}

/// Seedable, replayable random source.
#[pyclass(name = "RandomSource")]
struct PyRandomSource {
    inner: caltrade::RandomSource,
}

#[pymethods]
impl PyRandomSource {
    #[new]
    fn new(seed: u64) -> Self {
        PyRandomSource {
            inner: caltrade::RandomSource::new(seed),
        }
    }

    fn derive(&self, stream: u64) -> Self {
        PyRandomSource {
            inner: self.inner.derive(stream),
        }
    }

    fn uniform(&mut self) -> f64 {
        self.inner.uniform()
    }

    fn standard_normal(&mut self) -> f64 {
        self.inner.standard_normal()
    }
}

/// Defensive forecasting session over `k`-dimensional information vectors.
#[pyclass(name = "ForecastSession")]
struct PyForecastSession {
    inner: ForecastSession,
}

#[pymethods]
impl PyForecastSession {
    #[new]
    #[pyo3(signature = (
        k=1, kernel="sobolev", delta=None, epsilon=None, seed=0,
        gaussian_sigma=0.1, exp_c=1.0, exp_c2=1.0, history_cap=5000
    ))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        k: usize,
        kernel: &str,
        delta: Option<f64>,
        epsilon: Option<f64>,
        seed: u64,
        gaussian_sigma: f64,
        exp_c: f64,
        exp_c2: f64,
        history_cap: usize,
    ) -> PyResult<Self> {
        let schedule = match (delta, epsilon) {
            (_, Some(eps)) => ScheduleChoice::Epsilon(eps),
            (Some(d), None) => ScheduleChoice::FixedDelta(d),
            (None, None) => ScheduleChoice::FixedDelta(0.05),
        };
        let chain = ChainConfig {
            kernel: kernel_choice(kernel)?,
            schedule,
            gaussian_sigma,
            exp_c,
            exp_c2,
            ..ChainConfig::default()
        };
        let (rounding, side) = chain.session_kernels().map_err(to_py_err)?;
        let schedule_state: ScheduleState = schedule.state().map_err(to_py_err)?;
        let session = ForecastSession::new(
            k,
            rounding,
            side,
            schedule_state,
            caltrade::RandomSource::new(seed),
        )
        .map_err(to_py_err)?
        .with_history_cap(history_cap);
        Ok(PyForecastSession { inner: session })
    }

    /// Kernel-weighted residual sum `U_n(p)`.
    fn u_value(&self, p: f64, info: Vec<f64>, signal: f64) -> PyResult<f64> {
        self.inner.u_value(p, &info, signal).map_err(to_py_err)
    }

    /// Next deterministic forecast for the announced information.
    fn next_forecast(&self, info: Vec<f64>, signal: f64) -> PyResult<f64> {
        self.inner.next_forecast(&info, signal).map_err(to_py_err)
    }

    /// Rounds `(p, info)` to random grid points; forecast draw first.
    fn randomize(&mut self, p: f64, info: Vec<f64>) -> PyResult<(f64, Vec<f64>)> {
        self.inner.randomize_round(p, &info).map_err(to_py_err)
    }

    /// Records an observed round.
    fn update(&mut self, p: f64, info: Vec<f64>, signal: f64, outcome: f64) -> PyResult<()> {
        self.inner.update(p, &info, signal, outcome).map_err(to_py_err)
    }

    #[getter]
    fn supermartingale(&self) -> f64 {
        self.inner.supermartingale()
    }

    #[getter]
    fn rounds(&self) -> usize {
        self.inner.rounds()
    }

    #[getter]
    fn grid_delta(&self) -> f64 {
        self.inner.grid().delta()
    }

    #[getter]
    fn side_embedding_constant(&self) -> f64 {
        self.inner.side_embedding_constant()
    }
}

/// One-step-ahead ARMA baseline.
#[pyclass(name = "ArmaModel")]
struct PyArmaModel {
    inner: arma::ArmaModel,
}

#[pymethods]
impl PyArmaModel {
    #[staticmethod]
    fn fit(series: Vec<f64>, p: usize, q: usize) -> PyResult<Self> {
        Ok(PyArmaModel {
            inner: arma::ArmaModel::fit(&series, p, q).map_err(to_py_err)?,
        })
    }

    #[staticmethod]
    fn from_parts(ar: Vec<f64>, ma: Vec<f64>, intercept: f64, innovation_variance: f64) -> Self {
        PyArmaModel {
            inner: arma::ArmaModel::from_parts(ar, ma, intercept, innovation_variance),
        }
    }

    fn forecast_next(&self, history: Vec<f64>) -> PyResult<f64> {
        self.inner.forecast_next(&history).map_err(to_py_err)
    }

    #[getter]
    fn ar(&self) -> Vec<f64> {
        self.inner.ar().to_vec()
    }

    #[getter]
    fn ma(&self) -> Vec<f64> {
        self.inner.ma().to_vec()
    }

    #[getter]
    fn intercept(&self) -> f64 {
        self.inner.intercept()
    }

    #[getter]
    fn innovation_variance(&self) -> f64 {
        self.inner.innovation_variance()
    }
}

/// Kernel value `K(x, y)` for a named kernel.
#[pyfunction]
#[pyo3(signature = (kernel, x, y, sigma=0.1, delta=0.1))]
fn kernel_eval(kernel: &str, x: Vec<f64>, y: Vec<f64>, sigma: f64, delta: f64) -> PyResult<f64> {
    let spec = kernel_spec(kernel, sigma, delta)?;
    spec.eval(&x, &y).map_err(to_py_err)
}

/// Embedding constant of a named kernel.
#[pyfunction]
#[pyo3(signature = (kernel, sigma=0.1, delta=0.1))]
fn embedding_constant(kernel: &str, sigma: f64, delta: f64) -> PyResult<f64> {
    Ok(kernel_spec(kernel, sigma, delta)?.embedding_constant())
}

fn kernel_spec(kernel: &str, sigma: f64, delta: f64) -> PyResult<KernelSpec> {
    Ok(match kernel {
        "sobolev" => KernelSpec::Sobolev,
        "gaussian" => KernelSpec::Gaussian { sigma },
        "cosine" => KernelSpec::CosineHalfPi,
        "zero" => KernelSpec::Zero,
        "discretized" => KernelSpec::DiscretizedRounding(
            caltrade::RoundingGrid::new(delta).map_err(to_py_err)?,
        ),
        other => {
            return Err(PyValueError::new_err(format!(
                "unknown kernel {other:?}; use sobolev|gaussian|cosine|zero|discretized"
            )))
        }
    })
}

#[pyfunction]
fn m1_decision(p_tilde: f64, s_tilde: f64) -> f64 {
    trading::m1_decision(p_tilde, s_tilde)
}

#[pyfunction]
fn m_decision(p_tilde: f64, s_tilde: f64) -> f64 {
    trading::m_decision(p_tilde, s_tilde)
}

#[pyfunction]
fn calibration_bound(k: usize, c_embed: f64, epsilon: f64, n: usize) -> f64 {
    calibration::calibration_bound(k, c_embed, epsilon, n)
}

#[pyfunction]
fn hoeffding_bound(n: usize, delta: f64) -> PyResult<f64> {
    calibration::hoeffding_bound(n, delta).map_err(to_py_err)
}

#[pyfunction]
fn rise_regret_bound(
    n: usize,
    c_embed: f64,
    epsilon: f64,
    delta: f64,
    norm_rkhs: f64,
    norm_inf: f64,
) -> PyResult<f64> {
    trading::rise_regret_bound(n, c_embed, epsilon, delta, norm_rkhs, norm_inf).map_err(to_py_err)
}

#[pyfunction]
fn rise_fall_regret_bound(
    n: usize,
    c_embed: f64,
    epsilon: f64,
    delta: f64,
    norm_rkhs: f64,
    norm_inf: f64,
) -> PyResult<f64> {
    trading::rise_fall_regret_bound(n, c_embed, epsilon, delta, norm_rkhs, norm_inf).map_err(to_py_err)
}

#[pyfunction]
fn decision_rule_regret_bound(n: usize, m: usize, epsilon: f64, delta: f64) -> PyResult<f64> {
    trading::decision_rule_regret_bound(n, m, epsilon, delta).map_err(to_py_err)
}

#[pyfunction]
fn adversarial_prices(signals: Vec<f64>) -> Vec<f64> {
    adversary::adversarial_prices(&signals)
}

#[pyfunction]
fn adversary_rule(x: f64) -> f64 {
    adversary::adversary_rule(x)
}

/// Simulated TEST stock prices (Gaussian walk reflected at a tiny floor).
#[pyfunction]
#[pyo3(signature = (n, sigma=0.0014, s0=1.0, seed=42))]
fn test_stock(n: usize, sigma: f64, s0: f64, seed: u64) -> Vec<f64> {
    let mut rng = caltrade::RandomSource::new(seed).derive(u64::MAX);
    simulate_test_stock(n, sigma, s0, &mut rng).prices
}

#[pymodule]
fn caltrade_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyRoundingGrid>()?;
    m.add_class::<PyRandomSource>()?;
    m.add_class::<PyForecastSession>()?;
    m.add_class::<PyArmaModel>()?;
    m.add_function(wrap_pyfunction!(kernel_eval, m)?)?;
    m.add_function(wrap_pyfunction!(embedding_constant, m)?)?;
    m.add_function(wrap_pyfunction!(m1_decision, m)?)?;
    m.add_function(wrap_pyfunction!(m_decision, m)?)?;
    m.add_function(wrap_pyfunction!(calibration_bound, m)?)?;
    m.add_function(wrap_pyfunction!(hoeffding_bound, m)?)?;
    m.add_function(wrap_pyfunction!(rise_regret_bound, m)?)?;
    m.add_function(wrap_pyfunction!(rise_fall_regret_bound, m)?)?;
    m.add_function(wrap_pyfunction!(decision_rule_regret_bound, m)?)?;
    m.add_function(wrap_pyfunction!(adversarial_prices, m)?)?;
    m.add_function(wrap_pyfunction!(adversary_rule, m)?)?;
    m.add_function(wrap_pyfunction!(test_stock, m)?)?;
    Ok(())
}
