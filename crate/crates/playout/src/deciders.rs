//! Playout-delay deciders: the closed-form quality optimizer, the
//! grid-search reference it is checked against, and the four classic
//! adaptive estimators (slow/fast exponential average, window minimum,
//! spike detection).
//!
//! The quality-based deciders minimize `Idd(pd) + Ie_eff(L(pd))`, the sum of
//! the simplified delay impairment and the loss-dependent equipment
//! impairment under the fitted Pareto tail. Setting the Idd derivative
//! against the negative Ie_eff derivative gives a quadratic in the
//! buffer-loss mass `x` (percent of packets lost to the buffer):
//!
//! ```text
//! 55 x^2 + (a2 - a1) x + 55 (a2/110)^2 = 0
//! a1 = k * BurstR^2 * (95 - Ie) * ln(10) * Bpl
//! a2 = 110 * (100 rho_n + BurstR * Bpl)
//! ```
//!
//! whose smaller root `x_lo = (a1 - a2 - sqrt(a1 (a1 - 2 a2))) / 110` is the
//! interior minimum; mapping back through the tail CCDF yields
//! `pd = scale * (50 (1 - rho_n) / x_lo)^(1/k)`. The objective can also
//! have a second local minimum at the 150 ms boundary (the delay impairment
//! is flat below it), so the closed form compares the two candidates —
//! still a fixed number of operations, independent of any grid.

use std::collections::VecDeque;

use crate::delay::{predicted_loss, ParetoFit};
use crate::error::{Error, Result};
use crate::quality::{idd_simplified, ie_eff, ImpairmentConfig};
use crate::scalar::{c, Scalar};

/// Quality-based deciders never choose a playout delay below this: the
/// simplified delay impairment is zero up to here, so smaller values buy
/// nothing.
pub const MIN_PLAYOUT_MS: f64 = 150.0;

/// Everything a quality-based decider needs at a talkspurt boundary.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizerInputs<T> {
    pub fit: ParetoFit<T>,
    /// Network loss probability (0..=1).
    pub rho_n: T,
    /// Estimated burst ratio (floored per the config when used).
    pub burst_r: T,
    pub cfg: ImpairmentConfig<T>,
}

impl<T: Scalar> OptimizerInputs<T> {
    pub fn new(fit: ParetoFit<T>, rho_n: T, burst_r: T, cfg: ImpairmentConfig<T>) -> Result<Self> {
        cfg.validate()?;
        if !(fit.scale > T::zero()) || !(fit.shape > T::zero()) {
            return Err(Error::domain(format!(
                "tail fit must have positive scale and shape, got {:?}/{:?}",
                fit.scale, fit.shape
            )));
        }
        if !(rho_n >= T::zero() && rho_n <= T::one()) {
            return Err(Error::domain(format!(
                "network loss probability must be in [0, 1], got {:?}",
                rho_n
            )));
        }
        if !(burst_r > T::zero()) {
            return Err(Error::domain(format!(
                "burst ratio must be positive, got {:?}",
                burst_r
            )));
        }
        Ok(OptimizerInputs {
            fit,
            rho_n,
            burst_r,
            cfg,
        })
    }
}

/// Assembles decider inputs from a window snapshot: tail fit, observed
/// network-loss fraction, and the burst ratio of the window's loss pattern
/// (1 when the window is too short to estimate one).
pub fn inputs_from_window<T: Scalar>(
    window: &crate::delay::DelayWindow<T>,
    cfg: ImpairmentConfig<T>,
) -> Result<OptimizerInputs<T>> {
    let fit = crate::delay::fit_pareto_tail(window)?;
    let rho_n = window.network_loss_fraction();
    let burst_r = if window.len() >= 2 {
        let est = crate::delay::estimate_gilbert::<T, _>(window.flags())?;
        crate::quality::burst_ratio(&est.params)?
    } else {
        T::one()
    };
    OptimizerInputs::new(fit, rho_n, burst_r, cfg)
}

/// Impairment sum the quality-based deciders minimize:
/// `idd_simplified(pd) + ie_eff(predicted_loss(pd))`.
///
/// Below the tail scale the loss model is pinned to its maximum (the tail
/// only describes delays above the median), so `pd` is clamped to the scale
/// for the loss term while the delay term uses `pd` itself.
pub fn objective<T: Scalar>(pd_ms: T, inputs: &OptimizerInputs<T>) -> Result<T> {
    if !(pd_ms > T::zero()) {
        return Err(Error::domain(format!(
            "playout delay must be positive, got {:?} ms",
            pd_ms
        )));
    }
    let model_pd = pd_ms.max(inputs.fit.scale);
    let loss = predicted_loss(&inputs.fit, inputs.rho_n, model_pd)?;
    let delay_term = idd_simplified(pd_ms)?;
    let loss_term = ie_eff(loss, inputs.burst_r, &inputs.cfg)?;
    Ok(delay_term + loss_term)
}

/// Closed-form optimal playout delay, clamped to at least 150 ms.
///
/// Returns 150 when no interior stationary point exists (negative
/// discriminant, a root outside the feasible loss range, or the boundary
/// candidate winning the final comparison). Fixed operation count: one
/// square root, one power, and at most two objective evaluations.
pub fn closed_form_playout<T: Scalar>(inputs: &OptimizerInputs<T>) -> Result<T> {
    let min_pd = c::<T>(MIN_PLAYOUT_MS);
    let b = inputs.cfg.effective_burst(inputs.burst_r);
    let ie = inputs.cfg.ie;
    let bpl = inputs.cfg.bpl;
    let k = inputs.fit.shape;
    let rho = inputs.rho_n;

    // Buffer-loss mass available at the scale: the tail holds half the
    // received packets.
    let x_start = c::<T>(50.0) * (T::one() - rho);
    if !(x_start > T::zero()) {
        return Ok(min_pd);
    }

    let ln10 = c::<T>(10.0).ln();
    let a1 = k * b * b * (c::<T>(95.0) - ie) * ln10 * bpl;
    let a2 = c::<T>(110.0) * (c::<T>(100.0) * rho + b * bpl);
    let disc = a1 * (a1 - c::<T>(2.0) * a2);
    if disc < T::zero() {
        // Marginal loss benefit never matches the delay cost.
        return Ok(min_pd);
    }
    let root = disc.sqrt();
    let x_lo = (a1 - a2 - root) / c(110.0);
    if x_lo <= T::zero() || x_lo >= x_start {
        // Stationary point below the median: infeasible for the tail model.
        return Ok(min_pd);
    }
    let pd = inputs.fit.scale * (x_start / x_lo).powf(k.recip());
    if !(pd > min_pd) {
        return Ok(min_pd);
    }
    // The objective can hold a second local minimum at the 150 ms boundary:
    // when the scale sits above 150, when 150 lies left of the interior
    // local maximum (x at 150 beyond x_hi), or when the 95-unit loss cap
    // flattens the loss term near 150. Outside those cases the objective
    // falls monotonically from 150 to the root and the comparison is
    // skipped.
    let x_hi = (a1 - a2 + root) / c(110.0);
    let x_at_edge = x_start * (inputs.fit.scale / min_pd).powf(k);
    let loss_at_edge = c::<T>(100.0) * rho + x_at_edge;
    let raw_ie_at_edge =
        ie + (c::<T>(95.0) - ie) * loss_at_edge / (loss_at_edge / b + bpl);
    let need_edge_check = inputs.fit.scale > min_pd
        || x_at_edge > x_hi
        || raw_ie_at_edge >= c(95.0);
    if need_edge_check {
        let at_edge = objective(min_pd, inputs)?;
        let at_root = objective(pd, inputs)?;
        if at_edge <= at_root {
            return Ok(min_pd);
        }
    }
    Ok(pd)
}

/// Candidate playout-delay grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec<T> {
    pub lo: T,
    pub hi: T,
    pub points: usize,
}

/// Default grid: 200 log-spaced candidates over [150, 5000] ms.
pub const DEFAULT_GRID_POINTS: usize = 200;

impl<T: Scalar> Default for GridSpec<T> {
    fn default() -> Self {
        GridSpec {
            lo: c(MIN_PLAYOUT_MS),
            hi: c(5000.0),
            points: DEFAULT_GRID_POINTS,
        }
    }
}

impl<T: Scalar> GridSpec<T> {
    pub fn new(lo: T, hi: T, points: usize) -> Result<Self> {
        let spec = GridSpec { lo, hi, points };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lo > T::zero()) {
            return Err(Error::config("grid lower bound must be positive"));
        }
        if !(self.lo < self.hi) {
            return Err(Error::config("grid requires lo < hi"));
        }
        if self.points < 2 {
            return Err(Error::config("grid requires at least 2 points"));
        }
        Ok(())
    }

    /// The i-th of `points` log-spaced candidates.
    pub fn point(&self, i: usize) -> T {
        let frac = T::from_usize(i).expect("index fits scalar")
            / T::from_usize(self.points - 1).expect("count fits scalar");
        self.lo * (self.hi / self.lo).powf(frac)
    }
}

/// Reference decider: evaluates the objective on every grid candidate and
/// returns the argmin (ties toward the smaller delay), clamped to 150 ms.
/// Cost grows linearly with the grid.
pub fn grid_search_playout<T: Scalar>(inputs: &OptimizerInputs<T>, grid: &GridSpec<T>) -> Result<T> {
    grid.validate()?;
    let mut best_pd = grid.point(0);
    let mut best_val = objective(best_pd, inputs)?;
    for i in 1..grid.points {
        let pd = grid.point(i);
        let val = objective(pd, inputs)?;
        // Strict comparison keeps the earliest (smallest) tying candidate.
        if val < best_val {
            best_val = val;
            best_pd = pd;
        }
    }
    Ok(best_pd.max(c(MIN_PLAYOUT_MS)))
}

/// Which classic adaptive estimator a [`BaselineState`] runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaselineKind {
    /// Slow exponential average of delay and deviation.
    ExpAvg,
    /// Exponential average that tracks delay rises quickly.
    FastExpAvg,
    /// Minimum delay over a bounded window of recent packets.
    MinDelay,
    /// Two-mode estimator that follows delay deltas during spikes.
    SpikeDetect,
}

/// Spike-detection operating mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpikeMode {
    Normal,
    Impulse,
}

/// Canonical constants of the classic estimators. Times are milliseconds.
pub mod baseline_constants {
    /// Slow exponential-average weight on the previous estimate.
    pub const SLOW_WEIGHT: f64 = 0.998002;
    /// Fast weight used by the fast variant while delay rises.
    pub const FAST_WEIGHT: f64 = 0.75;
    /// Previous-estimate weight of the spike detector's normal mode (7/8).
    pub const SPIKE_KEEP_WEIGHT: f64 = 0.875;
    /// Spike entry offset: a delay jump beyond `2 |v| + 800` opens a spike.
    pub const SPIKE_ENTRY_OFFSET_MS: f64 = 800.0;
    /// Spike exit threshold on the decaying delta tracker.
    pub const SPIKE_EXIT_VAR: f64 = 63.0;
    /// Playout delay = estimate + SAFETY_FACTOR * deviation.
    pub const SAFETY_FACTOR: f64 = 4.0;
}

/// Per-packet state of one classic adaptive estimator.
#[derive(Debug, Clone, PartialEq)]
pub struct BaselineState<T> {
    kind: BaselineKind,
    d_hat: T,
    v_hat: T,
    mode: SpikeMode,
    spike_var: T,
    prev: T,
    prev2: T,
    recent: VecDeque<T>,
    recent_capacity: usize,
    updates: usize,
}

impl<T: Scalar> BaselineState<T> {
    /// `window_capacity` bounds the recent-delay window of the
    /// minimum-delay variant.
    pub fn new(kind: BaselineKind, window_capacity: usize) -> Self {
        BaselineState {
            kind,
            d_hat: T::zero(),
            v_hat: T::zero(),
            mode: SpikeMode::Normal,
            spike_var: T::zero(),
            prev: T::zero(),
            prev2: T::zero(),
            recent: VecDeque::new(),
            recent_capacity: window_capacity.max(1),
            updates: 0,
        }
    }

    pub fn kind(&self) -> BaselineKind {
        self.kind
    }

    pub fn d_hat(&self) -> T {
        self.d_hat
    }

    pub fn v_hat(&self) -> T {
        self.v_hat
    }

    pub fn mode(&self) -> SpikeMode {
        self.mode
    }

    pub fn updates(&self) -> usize {
        self.updates
    }

    /// Feeds one received packet's delay into the estimator.
    pub fn update(&mut self, delay_ms: T) -> Result<()> {
        if !(delay_ms > T::zero()) {
            return Err(Error::domain(format!(
                "delay must be positive, got {:?} ms",
                delay_ms
            )));
        }
        self.updates += 1;
        if self.updates == 1 {
            // First observation seeds the estimate directly.
            self.d_hat = delay_ms;
            self.v_hat = T::zero();
            self.prev = delay_ms;
            self.prev2 = delay_ms;
            self.push_recent(delay_ms);
            return Ok(());
        }
        match self.kind {
            BaselineKind::ExpAvg => self.update_exp_avg(delay_ms, c(baseline_constants::SLOW_WEIGHT)),
            BaselineKind::FastExpAvg => {
                let weight = if delay_ms > self.d_hat {
                    c(baseline_constants::FAST_WEIGHT)
                } else {
                    c(baseline_constants::SLOW_WEIGHT)
                };
                self.update_exp_avg(delay_ms, weight);
            }
            BaselineKind::MinDelay => {
                self.push_recent(delay_ms);
                self.d_hat = self
                    .recent
                    .iter()
                    .copied()
                    .fold(T::infinity(), T::min);
                let slow = c::<T>(baseline_constants::SLOW_WEIGHT);
                self.v_hat =
                    slow * self.v_hat + (T::one() - slow) * (self.d_hat - delay_ms).abs();
            }
            BaselineKind::SpikeDetect => self.update_spike_detect(delay_ms),
        }
        self.prev2 = self.prev;
        self.prev = delay_ms;
        Ok(())
    }

    fn update_exp_avg(&mut self, delay: T, weight: T) {
        let slow = c::<T>(baseline_constants::SLOW_WEIGHT);
        self.d_hat = weight * self.d_hat + (T::one() - weight) * delay;
        self.v_hat = slow * self.v_hat + (T::one() - slow) * (self.d_hat - delay).abs();
    }

    fn update_spike_detect(&mut self, delay: T) {
        let keep = c::<T>(baseline_constants::SPIKE_KEEP_WEIGHT);
        let gain = T::one() - keep;
        match self.mode {
            SpikeMode::Normal => {
                let threshold = c::<T>(2.0) * self.v_hat.abs()
                    + c(baseline_constants::SPIKE_ENTRY_OFFSET_MS);
                if (delay - self.prev).abs() > threshold {
                    self.spike_var = T::zero();
                    self.mode = SpikeMode::Impulse;
                }
            }
            SpikeMode::Impulse => {
                let delta = (c::<T>(2.0) * delay - self.prev - self.prev2) / c(8.0);
                self.spike_var = self.spike_var / c(2.0) + delta.abs();
                if self.spike_var <= c(baseline_constants::SPIKE_EXIT_VAR) {
                    // Spike over: resume normal tracking next packet,
                    // leaving the estimates untouched this packet.
                    self.mode = SpikeMode::Normal;
                    return;
                }
            }
        }
        match self.mode {
            SpikeMode::Normal => self.d_hat = keep * self.d_hat + gain * delay,
            SpikeMode::Impulse => self.d_hat = self.d_hat + delay - self.prev,
        }
        self.v_hat = keep * self.v_hat + gain * (delay - self.d_hat).abs();
    }

    fn push_recent(&mut self, delay: T) {
        if self.recent.len() == self.recent_capacity {
            self.recent.pop_front();
        }
        self.recent.push_back(delay);
    }

    /// Playout delay `d_hat + 4 v_hat`. Baselines are not quality-based and
    /// are deliberately not clamped to 150 ms.
    pub fn playout_delay(&self) -> Result<T> {
        if self.updates == 0 {
            return Err(Error::insufficient(
                "estimator has not observed any packet yet",
            ));
        }
        Ok(self.d_hat + c::<T>(baseline_constants::SAFETY_FACTOR) * self.v_hat)
    }
}
