//! Sliding-window delay statistics: median, Pareto tail fitting, buffer-loss
//! prediction, Gilbert loss-model estimation, and goodness-of-fit
//! diagnostics against alternative delay distributions.
//!
//! The window records the fate of the last `W` probe packets. Received
//! packets contribute a delay sample; lost packets contribute only a loss
//! flag. The tail model fits a Pareto distribution to the delays strictly
//! above the window median: under the assumption that useful playout delays
//! sit above the median, the tail is all the loss model needs, and the
//! buffer-loss integral is capped at 0.5.

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::quality::GilbertParams;
use crate::scalar::{c, Scalar};

/// Fate of one probe packet slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossFlag {
    Received,
    Lost,
}

/// FIFO record of the last `capacity` packets' delays and loss flags.
///
/// Single-writer value type: push packets in sequence order, snapshot
/// estimates at talkspurt boundaries.
#[derive(Debug, Clone, PartialEq)]
pub struct DelayWindow<T> {
    capacity: usize,
    slots: VecDeque<Option<T>>,
}

/// Default window size, in packets.
pub const DEFAULT_WINDOW_CAPACITY: usize = 500;

impl<T: Scalar> DelayWindow<T> {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::config("window capacity must be at least 1"));
        }
        Ok(DelayWindow {
            capacity,
            slots: VecDeque::with_capacity(capacity),
        })
    }

    pub fn with_default_capacity() -> Self {
        DelayWindow::new(DEFAULT_WINDOW_CAPACITY).expect("default capacity is valid")
    }

    /// Records a received packet's one-way delay (must be positive).
    pub fn push_received(&mut self, delay_ms: T) -> Result<()> {
        if !(delay_ms > T::zero()) {
            return Err(Error::domain(format!(
                "delay must be positive, got {:?} ms",
                delay_ms
            )));
        }
        self.push_slot(Some(delay_ms));
        Ok(())
    }

    /// Records a packet that never arrived.
    pub fn push_lost(&mut self) {
        self.push_slot(None);
    }

    fn push_slot(&mut self, slot: Option<T>) {
        if self.slots.len() == self.capacity {
            self.slots.pop_front();
        }
        self.slots.push_back(slot);
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Number of packet slots currently recorded (received + lost).
    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn received_count(&self) -> usize {
        self.slots.iter().filter(|s| s.is_some()).count()
    }

    pub fn lost_count(&self) -> usize {
        self.slots.iter().filter(|s| s.is_none()).count()
    }

    /// Delays of received packets, oldest first.
    pub fn delays(&self) -> impl Iterator<Item = T> + '_ {
        self.slots.iter().filter_map(|s| *s)
    }

    /// Loss flags over all recorded slots, oldest first.
    pub fn flags(&self) -> impl Iterator<Item = LossFlag> + '_ {
        self.slots.iter().map(|s| match s {
            Some(_) => LossFlag::Received,
            None => LossFlag::Lost,
        })
    }

    /// Fraction of recorded slots that were lost (0 for an empty window).
    pub fn network_loss_fraction(&self) -> T {
        if self.slots.is_empty() {
            return T::zero();
        }
        let lost = T::from_usize(self.lost_count()).expect("count fits scalar");
        let total = T::from_usize(self.len()).expect("count fits scalar");
        lost / total
    }
}

/// Pareto model of the above-median delay tail.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParetoFit<T> {
    /// Scale parameter: the window median, in ms.
    pub scale: T,
    /// Shape parameter k (larger = thinner tail), capped to
    /// [`SHAPE_MIN`], [`SHAPE_MAX`].
    pub shape: T,
    /// Number of strictly-above-median samples behind the fit.
    pub n_tail: usize,
}

/// Lower cap on the fitted shape; guards the `1/k` exponent downstream.
pub const SHAPE_MIN: f64 = 0.05;
/// Upper cap on the fitted shape.
pub const SHAPE_MAX: f64 = 50.0;

/// Median of the received-packet delays. Even counts average the two
/// central order statistics.
pub fn window_median<T: Scalar>(window: &DelayWindow<T>) -> Result<T> {
    let mut delays: Vec<T> = window.delays().collect();
    if delays.is_empty() {
        return Err(Error::insufficient("window holds no received packets"));
    }
    delays.sort_by(|a, b| a.partial_cmp(b).expect("delays are finite"));
    let n = delays.len();
    if n % 2 == 1 {
        Ok(delays[n / 2])
    } else {
        Ok((delays[n / 2 - 1] + delays[n / 2]) / c(2.0))
    }
}

/// Fits the Pareto tail: scale is the window median, shape the maximum
/// likelihood estimate `n / sum(ln(d_i / scale))` over delays strictly above
/// the median. Ties at the median are excluded so every log term is
/// positive.
pub fn fit_pareto_tail<T: Scalar>(window: &DelayWindow<T>) -> Result<ParetoFit<T>> {
    let median = window_median(window)?;
    let mut distinct = false;
    let mut n_tail = 0usize;
    let mut log_sum = T::zero();
    let mut first: Option<T> = None;
    for d in window.delays() {
        match first {
            None => first = Some(d),
            Some(f) if d != f => distinct = true,
            _ => {}
        }
        if d > median {
            n_tail += 1;
            log_sum = log_sum + (d / median).ln();
        }
    }
    if !distinct {
        return Err(Error::degenerate(
            "all delays equal: tail has no spread to fit",
        ));
    }
    if n_tail == 0 {
        return Err(Error::insufficient("no delays strictly above the median"));
    }
    let shape_raw = T::from_usize(n_tail).expect("count fits scalar") / log_sum;
    let shape = shape_raw.min(c(SHAPE_MAX)).max(c(SHAPE_MIN));
    Ok(ParetoFit {
        scale: median,
        shape,
        n_tail,
    })
}

/// Tail probability `P(d >= pd) = (scale / pd)^shape` for `pd >= scale`.
///
/// The tail model is undefined below the median; callers that need the loss
/// model there clamp `pd` to the scale first.
pub fn pareto_ccdf<T: Scalar>(fit: &ParetoFit<T>, pd_ms: T) -> Result<T> {
    if pd_ms < fit.scale {
        return Err(Error::domain(format!(
            "pd {:?} ms is below the tail scale {:?} ms",
            pd_ms, fit.scale
        )));
    }
    Ok((fit.scale / pd_ms).powf(fit.shape))
}

/// Total predicted loss in percent at playout delay `pd`:
/// `100 rho_n + 50 (1 - rho_n) * ccdf(pd)`.
///
/// The 0.5 factor reflects that the tail models only the upper half of the
/// received delays, so the buffer-loss integral is at most 0.5.
pub fn predicted_loss<T: Scalar>(fit: &ParetoFit<T>, rho_n: T, pd_ms: T) -> Result<T> {
    if !(rho_n >= T::zero() && rho_n <= T::one()) {
        return Err(Error::domain(format!(
            "network loss probability must be in [0, 1], got {:?}",
            rho_n
        )));
    }
    let ccdf = pareto_ccdf(fit, pd_ms)?;
    Ok(c::<T>(100.0) * rho_n + c::<T>(50.0) * (T::one() - rho_n) * ccdf)
}

/// Gilbert-model estimate from an observed loss-flag sequence.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GilbertEstimate<T> {
    pub params: GilbertParams<T>,
    /// Number of adjacent flag pairs the estimate is based on.
    pub n_transitions: usize,
    /// Observed loss fraction (0..=1) over the sequence.
    pub network_loss: T,
}

/// Estimates Gilbert transition probabilities from adjacent-pair counts:
/// `p = n_RL / (n_RL + n_RR)`, `q = n_LR / (n_LR + n_LL)`.
///
/// Conventions for unobservable corners: with no lost entries, `p = 0` and
/// `q = 1` (burst ratio 1). A sequence whose losses never recover inside the
/// window has MLE `q = 0`, which would mean permanent loss; the estimate is
/// smoothed to `1 / (n_LL + 2)` instead.
pub fn estimate_gilbert<T, I>(flags: I) -> Result<GilbertEstimate<T>>
where
    T: Scalar,
    I: IntoIterator<Item = LossFlag>,
{
    let mut n_rl = 0usize;
    let mut n_rr = 0usize;
    let mut n_lr = 0usize;
    let mut n_ll = 0usize;
    let mut lost = 0usize;
    let mut total = 0usize;
    let mut prev: Option<LossFlag> = None;
    for flag in flags {
        total += 1;
        if flag == LossFlag::Lost {
            lost += 1;
        }
        if let Some(p) = prev {
            match (p, flag) {
                (LossFlag::Received, LossFlag::Lost) => n_rl += 1,
                (LossFlag::Received, LossFlag::Received) => n_rr += 1,
                (LossFlag::Lost, LossFlag::Received) => n_lr += 1,
                (LossFlag::Lost, LossFlag::Lost) => n_ll += 1,
            }
        }
        prev = Some(flag);
    }
    if total < 2 {
        return Err(Error::insufficient(format!(
            "need at least 2 flags to count transitions, got {total}"
        )));
    }

    let ratio = |num: usize, den: usize| {
        T::from_usize(num).expect("count fits scalar") / T::from_usize(den).expect("count fits scalar")
    };
    let p = if n_rl + n_rr > 0 {
        ratio(n_rl, n_rl + n_rr)
    } else {
        T::zero()
    };
    let q = if n_lr > 0 {
        ratio(n_lr, n_lr + n_ll)
    } else if n_ll > 0 {
        ratio(1, n_ll + 2)
    } else {
        T::one()
    };

    Ok(GilbertEstimate {
        params: GilbertParams::new(p, q)?,
        n_transitions: total - 1,
        network_loss: ratio(lost, total),
    })
}

/// Which distribution family a diagnostic fit belongs to.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FittedDistribution<T> {
    Pareto { scale: T, shape: T },
    Weibull { scale: T, shape: T },
    LogNormal { mu: T, sigma: T },
    Exponential { rate: T },
}

impl<T: Scalar> FittedDistribution<T> {
    pub fn name(&self) -> &'static str {
        match self {
            FittedDistribution::Pareto { .. } => "pareto",
            FittedDistribution::Weibull { .. } => "weibull",
            FittedDistribution::LogNormal { .. } => "log-normal",
            FittedDistribution::Exponential { .. } => "exponential",
        }
    }

    /// Cumulative distribution function of the fitted model.
    pub fn cdf(&self, x: T) -> T {
        let xf = x.to_f64().expect("scalar converts to f64");
        let v = match *self {
            FittedDistribution::Pareto { scale, shape } => {
                let (s, k) = (as_f64(scale), as_f64(shape));
                if xf < s {
                    0.0
                } else {
                    1.0 - (s / xf).powf(k)
                }
            }
            FittedDistribution::Weibull { scale, shape } => {
                let (s, k) = (as_f64(scale), as_f64(shape));
                if xf <= 0.0 {
                    0.0
                } else {
                    1.0 - (-(xf / s).powf(k)).exp()
                }
            }
            FittedDistribution::LogNormal { mu, sigma } => {
                let (m, s) = (as_f64(mu), as_f64(sigma));
                if xf <= 0.0 {
                    0.0
                } else {
                    0.5 + 0.5 * libm::erf((xf.ln() - m) / (s * std::f64::consts::SQRT_2))
                }
            }
            FittedDistribution::Exponential { rate } => {
                let l = as_f64(rate);
                if xf <= 0.0 {
                    0.0
                } else {
                    1.0 - (-l * xf).exp()
                }
            }
        };
        c(v)
    }
}

fn as_f64<T: Scalar>(v: T) -> f64 {
    v.to_f64().expect("scalar converts to f64")
}

/// One fitted candidate with its Kolmogorov-Smirnov distance from the
/// empirical CDF.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistributionFit<T> {
    pub model: FittedDistribution<T>,
    pub ks_statistic: T,
}

/// Fits the four candidate delay distributions (Pareto, Weibull, log-normal,
/// exponential) to the window's received delays by maximum likelihood and
/// reports each fit's K-S statistic. Diagnostics only; the optimizer uses
/// the tail fit.
pub fn fit_alternatives<T: Scalar>(window: &DelayWindow<T>) -> Result<Vec<DistributionFit<T>>> {
    let mut samples: Vec<f64> = window.delays().map(as_f64).collect();
    if samples.len() < 10 {
        return Err(Error::insufficient(format!(
            "need at least 10 received delays for distribution fitting, got {}",
            samples.len()
        )));
    }
    samples.sort_by(|a, b| a.partial_cmp(b).expect("delays are finite"));
    let n = samples.len() as f64;
    let first = samples[0];
    if samples[samples.len() - 1] == first {
        return Err(Error::degenerate("all delays equal"));
    }

    let mean: f64 = samples.iter().sum::<f64>() / n;
    let log_samples: Vec<f64> = samples.iter().map(|x| x.ln()).collect();
    let log_mean: f64 = log_samples.iter().sum::<f64>() / n;

    // Pareto: scale = sample minimum, shape = n / sum ln(x / min).
    let pareto_logsum: f64 = log_samples.iter().map(|lx| lx - first.ln()).sum();
    let pareto = FittedDistribution::Pareto {
        scale: c(first),
        shape: c(n / pareto_logsum),
    };

    // Exponential: rate = 1 / mean.
    let exponential = FittedDistribution::Exponential { rate: c(1.0 / mean) };

    // Log-normal: moments of ln x.
    let log_var: f64 = log_samples.iter().map(|lx| (lx - log_mean).powi(2)).sum::<f64>() / n;
    let log_normal = FittedDistribution::LogNormal {
        mu: c(log_mean),
        sigma: c(log_var.sqrt()),
    };

    // Weibull: Newton on the profile-likelihood shape equation
    //   1/k = sum x^k ln x / sum x^k - mean(ln x)
    let weibull = {
        let k = weibull_mle_shape(&samples, &log_samples, log_mean);
        let scale = (samples.iter().map(|x| x.powf(k)).sum::<f64>() / n).powf(1.0 / k);
        FittedDistribution::Weibull {
            scale: c(scale),
            shape: c(k),
        }
    };

    let fits = [pareto, weibull, log_normal, exponential]
        .into_iter()
        .map(|model| DistributionFit {
            ks_statistic: c(ks_statistic_f64(&samples, |x| as_f64(model.cdf(c::<T>(x))))),
            model,
        })
        .collect();
    Ok(fits)
}

/// K-S statistic of sorted samples against a model CDF.
fn ks_statistic_f64(sorted: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let n = sorted.len() as f64;
    let mut sup: f64 = 0.0;
    for (i, &x) in sorted.iter().enumerate() {
        let f = cdf(x);
        sup = sup.max(f - i as f64 / n).max((i + 1) as f64 / n - f);
    }
    sup
}

fn weibull_mle_shape(samples: &[f64], log_samples: &[f64], log_mean: f64) -> f64 {
    // Moment-based start, then Newton with a bisection-style safety clamp.
    let n = samples.len() as f64;
    let log_var = log_samples.iter().map(|lx| (lx - log_mean).powi(2)).sum::<f64>() / n;
    let mut k = if log_var > 0.0 {
        (std::f64::consts::PI / (6.0f64.sqrt() * log_var.sqrt())).max(0.05)
    } else {
        1.0
    };
    for _ in 0..60 {
        let mut sx = 0.0;
        let mut sxl = 0.0;
        let mut sxll = 0.0;
        for (&x, &lx) in samples.iter().zip(log_samples) {
            let xk = x.powf(k);
            sx += xk;
            sxl += xk * lx;
            sxll += xk * lx * lx;
        }
        let g = sxl / sx - 1.0 / k - log_mean;
        let dg = (sxll * sx - sxl * sxl) / (sx * sx) + 1.0 / (k * k);
        if dg <= 0.0 {
            break;
        }
        let step = g / dg;
        let next = (k - step).clamp(k / 2.0, k * 2.0);
        if (next - k).abs() <= 1e-12 * k {
            k = next;
            break;
        }
        k = next;
    }
    k.clamp(0.01, 1e3)
}
