//! Defensive forecasting with randomized rounding.
//!
//! Each round the session evaluates the kernel-weighted residual sum
//!
//! ```text
//! U_n(p) = Σ_{i<n} [ K((p, x̄_n), (p_i, x̄_i)) + R(x_n, x_i) ] · (y_i − p_i)
//! ```
//!
//! and picks the next deterministic forecast as a root of `U_n(p) = 0`
//! (or the boundary value when `U_n` has constant sign). This keeps the
//! supermartingale `𝓜_n = 𝓜_{n-1} + U_n(p_n)(y_n − p_n)` from increasing.
//! The forecast and the information vector are then rounded to random grid
//! points on the current resolution, which follows either a fixed `Δ` or
//! the staged doubling-trick schedule.
//!
//! Evaluating `U_n` naively costs `O(n)` per probe. The rounding part
//! factors through the weight-vector representation, so the session keeps a
//! residual-weighted accumulator (the grid vector `Σ_i W̄(p_i, x̄_i)(y_i −
//! p_i)`, or the analogous separable sums for the smooth substitutes) and
//! each probe of the rounding part costs `O(1)`. The side part is
//! independent of `p` and is summed once per round.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::kernels::KernelSpec;
use crate::rounding::{RandomSource, RoundingGrid};

/// Root is accepted when `|U(p)|` drops below this value.
const ROOT_VALUE_TOL: f64 = 1e-9;
/// ... or when the bracketing interval is narrower than this.
const ROOT_WIDTH_TOL: f64 = 1e-12;
/// Initial sign-scan cells over `[0,1]`.
const SCAN_CELLS: usize = 64;
/// `U` values below this are treated as exact zeros during the scan.
const ZERO_TOL: f64 = 1e-12;

/// One completed forecasting round.
#[derive(Debug, Clone, PartialEq)]
pub struct Round {
    /// Deterministic forecast `p_i`.
    pub forecast: f64,
    /// Information vector `x̄_i ∈ [0,1]^k` used for randomization.
    pub info: Vec<f64>,
    /// Signal `x_i` seen by the side kernel.
    pub signal: f64,
    /// Outcome `y_i ∈ [0,1]`.
    pub outcome: f64,
}

/// Resolution schedule: fixed `Δ`, or the doubling-trick staging with
/// boundaries `n_s = (s + M)^M`, `M = ⌈1/ε⌉`.
#[derive(Debug, Clone, PartialEq)]
pub enum ScheduleMode {
    FixedDelta(f64),
    DoublingTrick { epsilon: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScheduleState {
    mode: ScheduleMode,
    /// `M = ⌈1/ε⌉` in doubling mode, unused otherwise.
    m: u32,
    /// Current stage index `s` (doubling mode), starting at 0.
    stage: u32,
}

impl ScheduleState {
    /// A fixed-resolution schedule. `delta` must be a grid reciprocal.
    pub fn fixed(delta: f64) -> Result<Self> {
        RoundingGrid::new(delta)?;
        Ok(ScheduleState {
            mode: ScheduleMode::FixedDelta(delta),
            m: 0,
            stage: 0,
        })
    }

    /// The doubling-trick schedule for accuracy parameter `ε ∈ (0,1)`.
    pub fn doubling(epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon < 1.0) {
            return Err(Error::domain(format!("epsilon must lie in (0,1), got {epsilon}")));
        }
        Ok(ScheduleState {
            mode: ScheduleMode::DoublingTrick { epsilon },
            m: (1.0 / epsilon).ceil() as u32,
            stage: 0,
        })
    }

    pub fn mode(&self) -> &ScheduleMode {
        &self.mode
    }

    pub fn stage(&self) -> u32 {
        self.stage
    }

    /// Stage boundary `n_s = (s + M)^M` (infinite for fixed schedules).
    pub fn stage_boundary(&self, stage: u32) -> f64 {
        match self.mode {
            ScheduleMode::FixedDelta(_) => f64::INFINITY,
            ScheduleMode::DoublingTrick { .. } => ((stage + self.m) as f64).powi(self.m as i32),
        }
    }

    /// Current resolution `Δ_s`, rounded down to the nearest reciprocal
    /// `1/K` so the grid stays valid; values at or above 1 clamp to `1/2`.
    pub fn delta(&self, k: usize, c_embed: f64) -> f64 {
        match self.mode {
            ScheduleMode::FixedDelta(delta) => delta,
            ScheduleMode::DoublingTrick { .. } => {
                let n_s = self.stage_boundary(self.stage);
                let kf = k as f64;
                let raw = ((kf + 1.0) / 2.0).powf(2.0 / (kf + 3.0))
                    * (c_embed * c_embed + 1.0).powf(1.0 / (kf + 3.0))
                    * n_s.powf(-1.0 / (kf + 3.0));
                clamp_to_reciprocal(raw)
            }
        }
    }

    /// Advances the stage for every boundary passed by `completed_rounds`.
    /// Returns true when the stage moved.
    pub fn advance_for_rounds(&mut self, completed_rounds: usize) -> bool {
        if matches!(self.mode, ScheduleMode::FixedDelta(_)) {
            return false;
        }
        let mut moved = false;
        while completed_rounds as f64 >= self.stage_boundary(self.stage + 1) {
            self.stage += 1;
            moved = true;
        }
        moved
    }
}

/// Rounds `raw` down to the nearest `1/K`; clamps to `1/2` at or above 1.
fn clamp_to_reciprocal(raw: f64) -> f64 {
    if !raw.is_finite() || raw >= 1.0 {
        return 0.5;
    }
    let k = (1.0 / raw).ceil().max(1.0);
    1.0 / k
}

/// Residual-weighted accumulator for the rounding part of `U_n`.
enum ResidualAccum {
    /// `μ[flat(v)] = Σ_i W_v(p_i, x̄_i)(y_i − p_i)` over `V^{k+1}`, with the
    /// forecast coordinate as digit zero of the flattened key.
    Grid { mu: BTreeMap<u64, f64> },
    /// Separable sums for the half-period cosine substitute:
    /// `a = Σ cos(πp_i/2)·r_i`, `b = Σ sin(πp_i/2)·r_i`.
    Cosine { a: f64, b: f64 },
    /// Separable sum for the exponential substitute:
    /// `Σ exp(−c·p_i − c'·x_{i,0})·r_i`.
    Exp { sum: f64 },
    /// No shortcut; probes fall back to direct summation over history.
    Direct,
}

/// Evolving state of the defensive forecaster.
pub struct ForecastSession {
    history: Vec<Round>,
    k: usize,
    rounding_part: KernelSpec,
    side_part: KernelSpec,
    schedule: ScheduleState,
    grid: RoundingGrid,
    supermartingale: f64,
    rng: RandomSource,
    accum: ResidualAccum,
    history_cap: usize,
    c_embed: f64,
    last_forecast: f64,
}

impl ForecastSession {
    /// Builds a session over information vectors of dimension `k`.
    ///
    /// `rounding_part` evaluates over `(p, x̄)`; a `DiscretizedRounding`
    /// variant always tracks the schedule's current grid (any grid embedded
    /// in the passed spec is replaced). One-dimensional substitutes
    /// (`CosineHalfPi`) see only the forecast coordinate and `ExpSmooth`
    /// sees `(p, x̄₀)`, mirroring their use as smooth stand-ins for the
    /// combined kernel. `side_part` is the RKHS kernel over signals.
    pub fn new(
        k: usize,
        rounding_part: KernelSpec,
        side_part: KernelSpec,
        schedule: ScheduleState,
        rng: RandomSource,
    ) -> Result<Self> {
        let c_embed = side_part.embedding_constant();
        let grid = RoundingGrid::new(schedule.delta(k, c_embed))?;
        let rounding_part = match rounding_part {
            KernelSpec::DiscretizedRounding(_) => {
                check_key_space(&grid, k)?;
                KernelSpec::DiscretizedRounding(grid.clone())
            }
            other => other,
        };
        // both kernels must accept the inputs this session will feed them
        let probe_input = rounding_input(&rounding_part, 0.0, &vec![0.0; k]);
        rounding_part.eval(&probe_input, &probe_input).map_err(|e| {
            Error::domain(format!("rounding part rejects (p, x̄) inputs: {e}"))
        })?;
        if !matches!(side_part, KernelSpec::Zero) {
            side_part
                .eval1(0.0, 0.0)
                .map_err(|e| Error::domain(format!("side part rejects scalar signals: {e}")))?;
        }
        let accum = match &rounding_part {
            KernelSpec::DiscretizedRounding(_) => ResidualAccum::Grid { mu: BTreeMap::new() },
            KernelSpec::CosineHalfPi => ResidualAccum::Cosine { a: 0.0, b: 0.0 },
            KernelSpec::ExpSmooth { .. } => ResidualAccum::Exp { sum: 0.0 },
            _ => ResidualAccum::Direct,
        };
        Ok(ForecastSession {
            history: Vec::new(),
            k,
            rounding_part,
            side_part,
            schedule,
            grid,
            supermartingale: 1.0,
            rng,
            accum,
            history_cap: 5000,
            c_embed,
            last_forecast: 0.5,
        })
    }

    /// Caps the retained history window (default 5000 rounds). Older rounds
    /// are dropped from the kernel sums, bounding per-round cost.
    pub fn with_history_cap(mut self, cap: usize) -> Self {
        self.history_cap = cap.max(1);
        self
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn history(&self) -> &[Round] {
        &self.history
    }

    pub fn rounds(&self) -> usize {
        self.history.len()
    }

    /// Current supermartingale value `𝓜_n` (starts at 1).
    pub fn supermartingale(&self) -> f64 {
        self.supermartingale
    }

    pub fn grid(&self) -> &RoundingGrid {
        &self.grid
    }

    pub fn schedule(&self) -> &ScheduleState {
        &self.schedule
    }

    pub fn side_part(&self) -> &KernelSpec {
        &self.side_part
    }

    pub fn rounding_part(&self) -> &KernelSpec {
        &self.rounding_part
    }

    /// Embedding constant of the side kernel.
    pub fn side_embedding_constant(&self) -> f64 {
        self.c_embed
    }

    /// Evaluates `U_n(p)` against the retained history.
    pub fn u_value(&self, p: f64, info: &[f64], signal: f64) -> Result<f64> {
        self.check_info(info)?;
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::domain(format!("forecast {p} outside [0,1]")));
        }
        let probe = self.round_probe(info, signal)?;
        Ok(probe.eval(self, p))
    }

    /// Computes the next deterministic forecast for the announced
    /// information vector and signal.
    ///
    /// An empty history yields `1/2`. Otherwise `U_n` is probed on a
    /// 65-point scan: all-positive gives 1, all-negative gives 0, an
    /// (effectively) identically zero scan repeats the previous forecast,
    /// and the first sign-change bracket is bisected to `|U| ≤ 1e-9` or
    /// width `1e-12`.
    pub fn next_forecast(&self, info: &[f64], signal: f64) -> Result<f64> {
        self.check_info(info)?;
        if self.history.is_empty() {
            return Ok(0.5);
        }
        let probe = self.round_probe(info, signal)?;

        let mut values = [0.0f64; SCAN_CELLS + 1];
        for (j, value) in values.iter_mut().enumerate() {
            *value = probe.eval(self, j as f64 / SCAN_CELLS as f64);
        }
        if values.iter().all(|v| v.abs() < ZERO_TOL) {
            return Ok(self.last_forecast);
        }
        for j in 0..=SCAN_CELLS {
            let x = j as f64 / SCAN_CELLS as f64;
            if values[j].abs() <= ZERO_TOL {
                return Ok(x);
            }
            if j < SCAN_CELLS && values[j] * values[j + 1] < 0.0 {
                let lo = x;
                let hi = (j + 1) as f64 / SCAN_CELLS as f64;
                return Ok(bisect(&probe, self, lo, hi, values[j]));
            }
        }
        // No sign change: U has constant sign on the scan.
        Ok(if values[0] > 0.0 { 1.0 } else { 0.0 })
    }

    /// Rounds the forecast and the information vector to random grid
    /// points on the current grid.
    ///
    /// Draw order is documented and fixed: one uniform for the forecast
    /// first, then one per information coordinate in index order.
    pub fn randomize_round(&mut self, p: f64, info: &[f64]) -> Result<(f64, Vec<f64>)> {
        self.check_info(info)?;
        let w_forecast = self.grid.weights(p)?;
        let p_tilde = self.grid.sample(&w_forecast, &mut self.rng)[0];
        let info_tilde = if info.is_empty() {
            Vec::new()
        } else {
            let w_info = self.grid.product_weights(info)?;
            self.grid.sample(&w_info, &mut self.rng)
        };
        Ok((p_tilde, info_tilde))
    }

    /// Records an observed round and advances the resolution schedule.
    ///
    /// The supermartingale picks up `U_n(p)(y − p)`; in doubling mode the
    /// grid is refined whenever the completed-round count crosses the next
    /// stage boundary (history is retained, only the grid changes).
    pub fn update(&mut self, p: f64, info: &[f64], signal: f64, outcome: f64) -> Result<()> {
        self.check_info(info)?;
        if !(0.0..=1.0).contains(&outcome) {
            return Err(Error::domain(format!("outcome {outcome} outside [0,1]")));
        }
        let u = self.u_value(p, info, signal)?;
        self.supermartingale += u * (outcome - p);

        let round = Round {
            forecast: p,
            info: info.to_vec(),
            signal,
            outcome,
        };
        self.accumulate(&round, 1.0)?;
        self.history.push(round);
        self.last_forecast = p;

        if self.history.len() > self.history_cap {
            let dropped = self.history.remove(0);
            self.accumulate(&dropped, -1.0)?;
        }

        if self.schedule.advance_for_rounds(self.history.len()) {
            self.apply_stage_transition()?;
        }
        Ok(())
    }

    fn check_info(&self, info: &[f64]) -> Result<()> {
        if info.len() != self.k {
            return Err(Error::domain(format!(
                "information vector has dimension {}, session expects {}",
                info.len(),
                self.k
            )));
        }
        Ok(())
    }

    /// Folds one round into the residual accumulator with sign `sign`.
    fn accumulate(&mut self, round: &Round, sign: f64) -> Result<()> {
        let residual = sign * (round.outcome - round.forecast);
        match &mut self.accum {
            ResidualAccum::Grid { mu } => {
                let joint = joint_point(round.forecast, &round.info);
                let weights = self.grid.product_weights(&joint)?;
                let base = self.grid.point_count() as u64;
                for (key, w) in weights.entries() {
                    let flat = flatten_key(key, base);
                    *mu.entry(flat).or_insert(0.0) += w * residual;
                }
            }
            ResidualAccum::Cosine { a, b } => {
                let angle = std::f64::consts::FRAC_PI_2 * round.forecast;
                *a += angle.cos() * residual;
                *b += angle.sin() * residual;
            }
            ResidualAccum::Exp { sum } => {
                if let KernelSpec::ExpSmooth { c, c2 } = self.rounding_part {
                    let mut exponent = -c * round.forecast;
                    if let Some(&x0) = round.info.first() {
                        exponent -= c2 * x0;
                    }
                    *sum += exponent.exp() * residual;
                }
            }
            ResidualAccum::Direct => {}
        }
        Ok(())
    }

    /// Refines the grid at a stage boundary and rebuilds grid-backed state.
    fn apply_stage_transition(&mut self) -> Result<()> {
        let new_delta = self.schedule.delta(self.k, self.c_embed);
        let new_grid = RoundingGrid::new(new_delta)?;
        if new_grid == self.grid {
            return Ok(());
        }
        debug_assert!(
            schedule_growth_ok(&self.schedule, self.k, self.c_embed),
            "stage growth constraint violated at stage {}",
            self.schedule.stage()
        );
        if matches!(self.rounding_part, KernelSpec::DiscretizedRounding(_)) {
            check_key_space(&new_grid, self.k)?;
        }
        self.grid = new_grid;
        if matches!(self.rounding_part, KernelSpec::DiscretizedRounding(_)) {
            self.rounding_part = KernelSpec::DiscretizedRounding(self.grid.clone());
            self.accum = ResidualAccum::Grid { mu: BTreeMap::new() };
            let rounds = std::mem::take(&mut self.history);
            for round in &rounds {
                self.accumulate(round, 1.0)?;
            }
            self.history = rounds;
        }
        Ok(())
    }

    /// Precomputes the per-round pieces of `U_n`: the side-kernel sum
    /// (independent of `p`) and the rounding-part context.
    fn round_probe(&self, info: &[f64], signal: f64) -> Result<RoundProbe> {
        let side_sum = match self.side_part {
            KernelSpec::Zero => 0.0,
            _ => {
                let mut total = 0.0;
                for round in &self.history {
                    total += self.side_part.eval1(signal, round.signal)?
                        * (round.outcome - round.forecast);
                }
                total
            }
        };
        let ctx = match &self.accum {
            ResidualAccum::Grid { .. } => {
                // flatten the info-coordinate weights once; each probe then
                // pairs them with the (at most two) forecast weights
                let base = self.grid.point_count() as u64;
                // the forecast index is the high digit of the flattened key
                let shift = base.pow(self.k as u32);
                let info_flat = if info.is_empty() {
                    vec![(0u64, 1.0f64)]
                } else {
                    self.grid
                        .product_weights(info)?
                        .entries()
                        .map(|(key, w)| (flatten_key(key, base), w))
                        .collect()
                };
                ProbeCtx::Grid { info_flat, shift }
            }
            ResidualAccum::Cosine { a, b } => ProbeCtx::Cosine { a: *a, b: *b },
            ResidualAccum::Exp { sum } => {
                let factor = if let KernelSpec::ExpSmooth { c2, .. } = self.rounding_part {
                    info.first().map_or(0.0, |&x0| c2 * x0)
                } else {
                    0.0
                };
                ProbeCtx::Exp {
                    sum: *sum,
                    info_exponent: factor,
                }
            }
            ResidualAccum::Direct => ProbeCtx::Direct {
                info: info.to_vec(),
            },
        };
        Ok(RoundProbe { side_sum, ctx })
    }
}

/// `(p, x̄)` concatenated with the forecast first.
fn joint_point(p: f64, info: &[f64]) -> Vec<f64> {
    let mut joint = Vec::with_capacity(1 + info.len());
    joint.push(p);
    joint.extend_from_slice(info);
    joint
}

fn flatten_key(key: &[u32], base: u64) -> u64 {
    key.iter().fold(0u64, |acc, &digit| acc * base + digit as u64)
}

/// The flattened key space `(K+1)^{k+1}` must fit in a `u64`.
fn check_key_space(grid: &RoundingGrid, k: usize) -> Result<()> {
    let base = grid.point_count() as u64;
    let mut space: u64 = 1;
    for _ in 0..=k {
        space = space.checked_mul(base).ok_or_else(|| {
            Error::domain(format!(
                "grid with {} points is too fine for information dimension {k}",
                grid.point_count()
            ))
        })?;
    }
    let _ = space;
    Ok(())
}

/// Numeric check of the growth requirement
/// `n_{s+1} ≥ (2sΔ_s + Δ_{s+1}) / (Δ_{s+1}(2s+1)) · n_s`
/// at the transition into the current stage, using the raw (unclamped)
/// resolutions. The chosen boundaries `n_s = (s+M)^M` imply it; this
/// asserts it rather than enforcing it independently.
fn schedule_growth_ok(schedule: &ScheduleState, k: usize, c_embed: f64) -> bool {
    let s = schedule.stage();
    if s == 0 {
        return true;
    }
    let raw_delta = |stage: u32| {
        let kf = k as f64;
        ((kf + 1.0) / 2.0).powf(2.0 / (kf + 3.0))
            * (c_embed * c_embed + 1.0).powf(1.0 / (kf + 3.0))
            * schedule.stage_boundary(stage).powf(-1.0 / (kf + 3.0))
    };
    let prev = (s - 1) as f64;
    let n_prev = schedule.stage_boundary(s - 1);
    let n_now = schedule.stage_boundary(s);
    let required =
        (2.0 * prev * raw_delta(s - 1) + raw_delta(s)) / (raw_delta(s) * (2.0 * prev + 1.0));
    n_now >= required * n_prev
}

struct RoundProbe {
    side_sum: f64,
    ctx: ProbeCtx,
}

enum ProbeCtx {
    Grid { info_flat: Vec<(u64, f64)>, shift: u64 },
    Cosine { a: f64, b: f64 },
    Exp { sum: f64, info_exponent: f64 },
    Direct { info: Vec<f64> },
}

impl RoundProbe {
    fn eval(&self, session: &ForecastSession, p: f64) -> f64 {
        let rounding = match &self.ctx {
            ProbeCtx::Grid { info_flat, shift } => {
                let ResidualAccum::Grid { mu } = &session.accum else {
                    unreachable!("grid probe implies grid accumulator");
                };
                let weights = session
                    .grid
                    .weights(p)
                    .expect("forecast probe stays in [0,1]");
                let mut total = 0.0;
                for (key, w_forecast) in weights.entries() {
                    let high = key[0] as u64 * shift;
                    for &(flat_info, w_info) in info_flat {
                        if let Some(value) = mu.get(&(high + flat_info)) {
                            total += w_forecast * w_info * value;
                        }
                    }
                }
                total
            }
            ProbeCtx::Cosine { a, b } => {
                let angle = std::f64::consts::FRAC_PI_2 * p;
                angle.cos() * a + angle.sin() * b
            }
            ProbeCtx::Exp { sum, info_exponent } => {
                if let KernelSpec::ExpSmooth { c, .. } = session.rounding_part {
                    (c * p + info_exponent).exp() * sum
                } else {
                    0.0
                }
            }
            ProbeCtx::Direct { info } => {
                let x = rounding_input(&session.rounding_part, p, info);
                let mut total = 0.0;
                for round in &session.history {
                    let y = rounding_input(&session.rounding_part, round.forecast, &round.info);
                    let value = session
                        .rounding_part
                        .eval(&x, &y)
                        .expect("rounding part accepts its own projection");
                    total += value * (round.outcome - round.forecast);
                }
                total
            }
        };
        rounding + self.side_sum
    }
}

/// Input projection for the rounding part: one-dimensional substitutes see
/// only the forecast, `ExpSmooth` sees `(p, x̄₀)`, everything else the full
/// `(p, x̄)`.
fn rounding_input(kernel: &KernelSpec, p: f64, info: &[f64]) -> Vec<f64> {
    match kernel {
        KernelSpec::CosineHalfPi | KernelSpec::Sobolev => vec![p],
        KernelSpec::ExpSmooth { .. } => {
            if let Some(&x0) = info.first() {
                vec![p, x0]
            } else {
                vec![p]
            }
        }
        _ => joint_point(p, info),
    }
}

fn bisect(probe: &RoundProbe, session: &ForecastSession, lo: f64, hi: f64, u_lo: f64) -> f64 {
    let mut lo = lo;
    let mut hi = hi;
    let mut u_lo = u_lo;
    while hi - lo > ROOT_WIDTH_TOL {
        let mid = 0.5 * (lo + hi);
        let u_mid = probe.eval(session, mid);
        if u_mid.abs() <= ROOT_VALUE_TOL {
            return mid;
        }
        if u_mid * u_lo > 0.0 {
            lo = mid;
            u_lo = u_mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rounding::RandomSource;

    fn cosine_session(k: usize) -> ForecastSession {
        ForecastSession::new(
            k,
            KernelSpec::CosineHalfPi,
            KernelSpec::Zero,
            ScheduleState::fixed(0.25).unwrap(),
            RandomSource::new(1),
        )
        .unwrap()
    }

    fn grid_session(delta: f64, side: KernelSpec, seed: u64) -> ForecastSession {
        let grid = RoundingGrid::new(delta).unwrap();
        ForecastSession::new(
            1,
            KernelSpec::DiscretizedRounding(grid),
            side,
            ScheduleState::fixed(delta).unwrap(),
            RandomSource::new(seed),
        )
        .unwrap()
    }

    #[test]
    fn empty_history_behaviour() {
        let session = cosine_session(0);
        assert_eq!(session.u_value(0.3, &[], 0.0).unwrap(), 0.0);
        assert_eq!(session.next_forecast(&[], 0.0).unwrap(), 0.5);
    }

    #[test]
    fn single_round_cosine_u_value() {
        let mut session = cosine_session(0);
        session.update(0.5, &[], 0.0, 1.0).unwrap();
        // U₂(p) = 0.5·cos(π(p − 0.5)/2)
        let u = session.u_value(0.5, &[], 0.0).unwrap();
        assert!((u - 0.5).abs() < 1e-12);
        let u = session.u_value(0.0, &[], 0.0).unwrap();
        assert!((u - 0.5 * (std::f64::consts::FRAC_PI_4).cos()).abs() < 1e-12);
        // all-positive U forces the forecast to 1
        assert_eq!(session.next_forecast(&[], 0.0).unwrap(), 1.0);
    }

    #[test]
    fn single_round_mirror_forces_zero() {
        let mut session = cosine_session(0);
        session.update(0.5, &[], 0.0, 0.0).unwrap();
        assert_eq!(session.next_forecast(&[], 0.0).unwrap(), 0.0);
    }

    #[test]
    fn zero_residual_keeps_u_identically_zero() {
        let mut session = cosine_session(0);
        session.update(0.5, &[], 0.0, 0.5).unwrap();
        for j in 0..=10 {
            let p = j as f64 / 10.0;
            assert!(session.u_value(p, &[], 0.0).unwrap().abs() < 1e-15);
        }
        // identically-zero U repeats the previous forecast
        assert_eq!(session.next_forecast(&[], 0.0).unwrap(), 0.5);
        let m = session.supermartingale();
        assert!((m - 1.0).abs() < 1e-15);
    }

    #[test]
    fn update_rejects_bad_arguments() {
        let mut session = cosine_session(0);
        assert!(session.update(0.5, &[], 0.0, 1.5).is_err());
        assert!(session.update(0.5, &[0.1], 0.0, 0.5).is_err());
        assert!(session.u_value(0.5, &[0.1, 0.2], 0.0).is_err());
    }

    #[test]
    fn grid_accumulator_matches_direct_summation() {
        let mut session = grid_session(0.1, KernelSpec::Sobolev, 3);
        let mut rng = RandomSource::new(17);
        let mut outcome = 0.5f64;
        for _ in 0..60 {
            let info = [outcome];
            let signal = outcome;
            let p = session.next_forecast(&info, signal).unwrap();
            session.update(p, &info, signal, outcome).unwrap();
            outcome = (outcome + 0.2 * (rng.uniform() - 0.5)).clamp(0.0, 1.0);
        }
        // direct O(n) evaluation as the oracle for the accumulator path
        let probes = [0.0, 0.17, 0.5, 0.83, 1.0];
        let info = [0.4];
        let signal = 0.4;
        for &p in &probes {
            let mut direct = 0.0;
            for round in session.history() {
                let kernel_part = session
                    .grid()
                    .rounding_kernel(&[p, info[0]], &[round.forecast, round.info[0]])
                    .unwrap();
                let side_part = KernelSpec::Sobolev.eval1(signal, round.signal).unwrap();
                direct += (kernel_part + side_part) * (round.outcome - round.forecast);
            }
            let fast = session.u_value(p, &info, signal).unwrap();
            assert!(
                (fast - direct).abs() < 1e-9,
                "p={p}: fast {fast} vs direct {direct}"
            );
        }
    }

    #[test]
    fn supermartingale_never_increases_on_random_walk() {
        let mut session = grid_session(0.1, KernelSpec::Sobolev, 11);
        let mut rng = RandomSource::new(5);
        let mut outcome = 0.5f64;
        let mut previous = session.supermartingale();
        for _ in 0..300 {
            let info = [outcome];
            let p = session.next_forecast(&info, outcome).unwrap();
            let next = (outcome + 0.05 * (rng.uniform() - 0.5)).clamp(0.0, 1.0);
            session.update(p, &info, outcome, next).unwrap();
            let m = session.supermartingale();
            assert!(m <= previous + 1e-7, "supermartingale rose: {previous} -> {m}");
            previous = m;
            outcome = next;
        }
    }

    #[test]
    fn update_with_outcome_equal_to_forecast_keeps_supermartingale() {
        let mut session = grid_session(0.25, KernelSpec::Sobolev, 2);
        session.update(0.5, &[0.5], 0.5, 0.9).unwrap();
        let before = session.supermartingale();
        let p = session.next_forecast(&[0.9], 0.9).unwrap();
        session.update(p, &[0.9], 0.9, p).unwrap();
        assert!((session.supermartingale() - before).abs() < 1e-12);
    }

    #[test]
    fn randomize_round_consumes_documented_draws() {
        let mut session = grid_session(0.25, KernelSpec::Zero, 77);
        // p on a grid point rounds to itself regardless of the draw
        let (p_tilde, info_tilde) = session.randomize_round(0.5, &[0.0]).unwrap();
        assert_eq!(p_tilde, 0.5);
        assert_eq!(info_tilde, vec![0.0]);

        // identical seeds give identical randomization sequences
        let mut a = grid_session(0.25, KernelSpec::Zero, 123);
        let mut b = grid_session(0.25, KernelSpec::Zero, 123);
        for i in 0..50 {
            let p = (i as f64 / 50.0).clamp(0.0, 1.0);
            assert_eq!(
                a.randomize_round(p, &[0.3]).unwrap(),
                b.randomize_round(p, &[0.3]).unwrap()
            );
        }
    }

    #[test]
    fn randomized_forecast_frequencies_match_weights() {
        let mut session = grid_session(0.25, KernelSpec::Zero, 9);
        let draws = 100_000;
        let mut low = 0usize;
        for _ in 0..draws {
            let (p_tilde, _) = session.randomize_round(0.3, &[0.5]).unwrap();
            if p_tilde == 0.25 {
                low += 1;
            }
        }
        let freq = low as f64 / draws as f64;
        assert!((0.79..=0.81).contains(&freq), "frequency {freq}");
    }

    #[test]
    fn doubling_schedule_boundaries_and_delta() {
        let schedule = ScheduleState::doubling(0.25).unwrap();
        assert_eq!(schedule.stage_boundary(1), 625.0);
        assert_eq!(schedule.stage_boundary(2), 1296.0);

        // k=1, c²+1 = 2 at n_s = 625: raw 2^{1/4}·625^{-1/4} ≈ 0.2378 → 1/5
        let mut at_stage_one = schedule.clone();
        at_stage_one.advance_for_rounds(625);
        assert_eq!(at_stage_one.stage(), 1);
        assert!((at_stage_one.delta(1, 1.0) - 0.2).abs() < 1e-15);

        // k=2, c=0 at n_s=1: raw (3/2)^{2/5} ≥ 1 clamps to 1/2
        let tiny = ScheduleState {
            mode: ScheduleMode::DoublingTrick { epsilon: 0.9 },
            m: 1,
            stage: 0,
        };
        assert_eq!(tiny.stage_boundary(0), 1.0);
        assert_eq!(tiny.delta(2, 0.0), 0.5);

        let fixed = ScheduleState::fixed(0.05).unwrap();
        assert_eq!(fixed.delta(1, 12.0), 0.05);
        assert!(!fixed.clone().advance_for_rounds(10_000_000));
    }

    #[test]
    fn stage_advances_at_documented_round() {
        let schedule = ScheduleState::doubling(0.25).unwrap();
        let grid = RoundingGrid::new(0.5).unwrap();
        let mut session = ForecastSession::new(
            1,
            KernelSpec::DiscretizedRounding(grid),
            KernelSpec::Zero,
            schedule,
            RandomSource::new(4),
        )
        .unwrap();
        let mut rng = RandomSource::new(6);
        for round in 1..=626 {
            let y = rng.uniform();
            let p = session.next_forecast(&[0.5], 0.5).unwrap();
            session.update(p, &[0.5], 0.5, y).unwrap();
            if round < 625 {
                assert_eq!(session.schedule().stage(), 0, "round {round}");
            } else {
                assert_eq!(session.schedule().stage(), 1, "round {round}");
            }
        }
        // the grid now reflects the refined stage resolution
        let refined = session.schedule().delta(1, 0.0);
        assert_eq!(session.grid().delta(), refined);
    }

    #[test]
    fn accumulator_rebuild_survives_stage_transitions() {
        // ε = 0.9 gives M = 2 and boundaries (s+2)²: 9, 16, 25, ...
        let schedule = ScheduleState::doubling(0.9).unwrap();
        let grid = RoundingGrid::new(0.5).unwrap();
        let mut session = ForecastSession::new(
            1,
            KernelSpec::DiscretizedRounding(grid),
            KernelSpec::Zero,
            schedule,
            RandomSource::new(14),
        )
        .unwrap();
        let mut rng = RandomSource::new(41);
        for round in 0..40 {
            let x = rng.uniform();
            let y = rng.uniform();
            let p = session.next_forecast(&[x], x).unwrap();
            session.update(p, &[x], x, y).unwrap();

            // fast path equals direct summation on the current grid
            let probe_info = [0.3];
            let fast = session.u_value(0.6, &probe_info, 0.3).unwrap();
            let mut direct = 0.0;
            for past in session.history() {
                direct += session
                    .grid()
                    .rounding_kernel(&[0.6, probe_info[0]], &[past.forecast, past.info[0]])
                    .unwrap()
                    * (past.outcome - past.forecast);
            }
            assert!(
                (fast - direct).abs() < 1e-9,
                "round {round}: fast {fast} vs direct {direct}"
            );
        }
        assert!(session.schedule().stage() >= 2, "transitions exercised");
    }

    #[test]
    fn history_cap_drops_oldest_rounds() {
        let mut session = grid_session(0.25, KernelSpec::Zero, 21).with_history_cap(16);
        let mut rng = RandomSource::new(8);
        for _ in 0..40 {
            let y = rng.uniform();
            let p = session.next_forecast(&[0.5], 0.5).unwrap();
            session.update(p, &[0.5], 0.5, y).unwrap();
        }
        assert_eq!(session.rounds(), 16);
        // accumulator still matches a direct sum over the retained window
        let fast = session.u_value(0.3, &[0.5], 0.5).unwrap();
        let mut direct = 0.0;
        for round in session.history() {
            direct += session
                .grid()
                .rounding_kernel(&[0.3, 0.5], &[round.forecast, round.info[0]])
                .unwrap()
                * (round.outcome - round.forecast);
        }
        assert!((fast - direct).abs() < 1e-9);
    }

    #[test]
    fn identical_seeds_reproduce_forecast_sequences() {
        let run = |seed: u64| -> Vec<(f64, f64)> {
            let mut session = grid_session(0.1, KernelSpec::Sobolev, seed);
            let mut rng = RandomSource::new(33);
            let mut out = Vec::new();
            let mut prev = 0.5f64;
            for _ in 0..80 {
                let y = (prev + 0.1 * (rng.uniform() - 0.5)).clamp(0.0, 1.0);
                let p = session.next_forecast(&[prev], prev).unwrap();
                let (p_tilde, _) = session.randomize_round(p, &[prev]).unwrap();
                session.update(p, &[prev], prev, y).unwrap();
                out.push((p, p_tilde));
                prev = y;
            }
            out
        };
        let a = run(42);
        let b = run(42);
        assert_eq!(a, b);
        assert!(a.iter().zip(run(43).iter()).any(|(x, y)| x != y));
    }

    #[test]
    fn expsmooth_accumulator_matches_direct() {
        let mut session = ForecastSession::new(
            1,
            KernelSpec::ExpSmooth { c: 1.0, c2: 1.0 },
            KernelSpec::Zero,
            ScheduleState::fixed(0.25).unwrap(),
            RandomSource::new(3),
        )
        .unwrap();
        let mut rng = RandomSource::new(19);
        for _ in 0..40 {
            let y = rng.uniform();
            let x = rng.uniform();
            let p = session.next_forecast(&[x], x).unwrap();
            session.update(p, &[x], x, y).unwrap();
        }
        let (p, x) = (0.37, 0.61);
        let mut direct = 0.0;
        for round in session.history() {
            let value = ((p - round.forecast) + (x - round.info[0])).exp();
            direct += value * (round.outcome - round.forecast);
        }
        let fast = session.u_value(p, &[x], x).unwrap();
        assert!((fast - direct).abs() < 1e-9, "fast {fast} direct {direct}");
    }
}
