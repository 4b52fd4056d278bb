//! E-model speech quality scoring: impairment factors, the R factor and
//! its MOS mapping.
//!
//! The transmission rating is `R = R0 - Ie_eff - Idd`, where `Ie_eff` is the
//! loss-dependent equipment impairment (burst-aware via the burst ratio of a
//! two-state Markov loss model) and `Idd` the delay impairment. Two delay
//! impairment curves are provided: the full ITU-T G.107 one and a simplified
//! logarithmic one that is analytically tractable for the closed-form playout
//! optimizer.

use crate::error::{Error, Result};
use crate::scalar::{c, Scalar};

/// Which delay impairment curve to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum IddVariant {
    /// `55 * log10(pd / 150)` above 150 ms, zero below.
    #[default]
    Simplified,
    /// The full ITU-T G.107 sixth-root expression.
    G107Full,
}

/// Everything the R-factor computation needs besides the measured loss and
/// playout delay.
///
/// `ie` and `bpl` are codec planning values from ITU-T G.113 Appendix I;
/// see [`CODEC_TABLE`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImpairmentConfig<T> {
    /// Basic signal-to-noise ratio R0, in R-units. G.107 default: 93.2.
    pub r0: T,
    /// Codec equipment impairment Ie, in R-units.
    pub ie: T,
    /// Codec packet-loss robustness Bpl (dimensionless, > 0).
    pub bpl: T,
    /// Delay impairment curve used by `r_factor`.
    pub idd_variant: IddVariant,
    /// Floor the burst ratio at 1.0 before use. A measured BurstR below 1
    /// means better-than-random interleaving, which short-window estimates
    /// produce spuriously; the floor avoids rewarding it. Disable to feed
    /// raw estimates through.
    pub floor_burst_ratio: bool,
}

impl<T: Scalar> Default for ImpairmentConfig<T> {
    fn default() -> Self {
        ImpairmentConfig {
            r0: c(93.2),
            ie: T::zero(),
            bpl: c(4.3),
            idd_variant: IddVariant::Simplified,
            floor_burst_ratio: true,
        }
    }
}

impl<T: Scalar> ImpairmentConfig<T> {
    /// Validating constructor: requires `0 < r0 <= 100`, `0 <= ie < 95`,
    /// `bpl > 0`.
    pub fn new(r0: T, ie: T, bpl: T) -> Result<Self> {
        let cfg = ImpairmentConfig {
            r0,
            ie,
            bpl,
            ..ImpairmentConfig::default()
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_idd_variant(mut self, variant: IddVariant) -> Self {
        self.idd_variant = variant;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.r0 > T::zero() && self.r0 <= c(100.0)) {
            return Err(Error::domain(format!(
                "r0 must be in (0, 100], got {:?}",
                self.r0
            )));
        }
        if !(self.ie >= T::zero() && self.ie < c(95.0)) {
            return Err(Error::domain(format!(
                "ie must be in [0, 95), got {:?}",
                self.ie
            )));
        }
        if !(self.bpl > T::zero()) {
            return Err(Error::domain(format!(
                "bpl must be positive, got {:?}",
                self.bpl
            )));
        }
        Ok(())
    }

    /// The burst ratio actually used in impairment computations: floored at
    /// 1.0 unless flooring is disabled.
    pub fn effective_burst(&self, burst_r: T) -> T {
        if self.floor_burst_ratio {
            burst_r.max(T::one())
        } else {
            burst_r
        }
    }
}

/// One codec row of planning values.
#[derive(Debug, Clone, Copy)]
pub struct CodecEntry {
    pub name: &'static str,
    /// Equipment impairment Ie (R-units).
    pub ie: f64,
    /// Packet-loss robustness Bpl.
    pub bpl: f64,
}

/// Provisional planning values from ITU-T G.113 Appendix I.
///
/// Only codecs with published (Ie, Bpl) pairs are listed; for anything else
/// pass explicit values. Edit or extend as newer amendments publish values.
pub const CODEC_TABLE: &[CodecEntry] = &[
    CodecEntry { name: "g711", ie: 0.0, bpl: 4.3 },
    CodecEntry { name: "g711-plc", ie: 0.0, bpl: 25.1 },
    CodecEntry { name: "g723.1", ie: 15.0, bpl: 16.1 },
    CodecEntry { name: "g729a", ie: 11.0, bpl: 19.0 },
    CodecEntry { name: "gsm-efr", ie: 5.0, bpl: 10.0 },
];

/// Looks up a codec by name in [`CODEC_TABLE`].
pub fn codec_by_name(name: &str) -> Option<&'static CodecEntry> {
    CODEC_TABLE.iter().find(|e| e.name.eq_ignore_ascii_case(name))
}

/// Two-state Markov (Gilbert) loss model transition probabilities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GilbertParams<T> {
    /// Probability of moving from the received to the lost state.
    pub p: T,
    /// Probability of moving from the lost back to the received state.
    pub q: T,
}

impl<T: Scalar> GilbertParams<T> {
    /// Requires `0 <= p <= 1` and `0 < q <= 1` (q = 0 would mean permanent
    /// loss).
    pub fn new(p: T, q: T) -> Result<Self> {
        if !(p >= T::zero() && p <= T::one()) {
            return Err(Error::domain(format!("p must be in [0, 1], got {:?}", p)));
        }
        if !(q > T::zero() && q <= T::one()) {
            return Err(Error::domain(format!("q must be in (0, 1], got {:?}", q)));
        }
        Ok(GilbertParams { p, q })
    }

    /// Stationary loss rate of the chain, in percent: `100 p / (p + q)`.
    pub fn stationary_loss_pct(&self) -> T {
        c::<T>(100.0) * self.p / (self.p + self.q)
    }
}

/// Simplified delay impairment: zero below 150 ms, `55 * log10(pd / 150)`
/// beyond. Continuous at 150 ms and strictly increasing after it.
pub fn idd_simplified<T: Scalar>(pd_ms: T) -> Result<T> {
    if !(pd_ms > T::zero()) {
        return Err(Error::domain(format!(
            "playout delay must be positive, got {:?} ms",
            pd_ms
        )));
    }
    let threshold = c::<T>(150.0);
    if pd_ms < threshold {
        Ok(T::zero())
    } else {
        Ok(c::<T>(55.0) * (pd_ms / threshold).log10())
    }
}

/// Full ITU-T G.107 delay impairment:
/// `25 * ((1 + X^6)^(1/6) - 3 (1 + (X/3)^6)^(1/6) + 2)` with
/// `X = log10(Ta/100) / log10(2)`, zero for `Ta <= 100 ms`.
pub fn idd_g107<T: Scalar>(pd_ms: T) -> Result<T> {
    if !(pd_ms > T::zero()) {
        return Err(Error::domain(format!(
            "playout delay must be positive, got {:?} ms",
            pd_ms
        )));
    }
    let hundred = c::<T>(100.0);
    if pd_ms <= hundred {
        return Ok(T::zero());
    }
    let x = (pd_ms / hundred).log10() / c::<T>(2.0).log10();
    let sixth = c::<T>(1.0 / 6.0);
    let one = T::one();
    let term1 = (one + x.powi(6)).powf(sixth);
    let term2 = c::<T>(3.0) * (one + (x / c(3.0)).powi(6)).powf(sixth);
    Ok(c::<T>(25.0) * (term1 - term2 + c(2.0)))
}

/// Delay impairment under the chosen variant.
pub fn idd<T: Scalar>(pd_ms: T, variant: IddVariant) -> Result<T> {
    match variant {
        IddVariant::Simplified => idd_simplified(pd_ms),
        IddVariant::G107Full => idd_g107(pd_ms),
    }
}

/// Burst ratio of a Gilbert loss process: `1 / (p + q)`. Equals 1 for
/// random loss (p + q = 1), above 1 for bursty loss.
pub fn burst_ratio<T: Scalar>(params: &GilbertParams<T>) -> Result<T> {
    let sum = params.p + params.q;
    if !(sum > T::zero()) {
        return Err(Error::degenerate(
            "p + q = 0: loss process has no transitions",
        ));
    }
    Ok(sum.recip())
}

/// Loss-dependent equipment impairment:
/// `Ie + (95 - Ie) * L / (L / BurstR + Bpl)`, capped at 95 R-units.
///
/// `loss_pct` is the overall loss rate in percent (network plus buffer).
pub fn ie_eff<T: Scalar>(loss_pct: T, burst_r: T, cfg: &ImpairmentConfig<T>) -> Result<T> {
    cfg.validate()?;
    if !(loss_pct >= T::zero() && loss_pct <= c(100.0)) {
        return Err(Error::domain(format!(
            "loss percentage must be in [0, 100], got {:?}",
            loss_pct
        )));
    }
    if !(burst_r > T::zero()) {
        return Err(Error::domain(format!(
            "burst ratio must be positive, got {:?}",
            burst_r
        )));
    }
    let b = cfg.effective_burst(burst_r);
    let ceiling = c::<T>(95.0);
    let raw = cfg.ie + (ceiling - cfg.ie) * loss_pct / (loss_pct / b + cfg.bpl);
    Ok(raw.min(ceiling))
}

/// Transmission rating factor `R = R0 - Ie_eff - Idd`.
///
/// May go negative for severe impairments; [`r_to_mos`] clamps.
pub fn r_factor<T: Scalar>(
    pd_ms: T,
    loss_pct: T,
    burst_r: T,
    cfg: &ImpairmentConfig<T>,
) -> Result<T> {
    let delay_imp = idd(pd_ms, cfg.idd_variant)?;
    let loss_imp = ie_eff(loss_pct, burst_r, cfg)?;
    Ok(cfg.r0 - loss_imp - delay_imp)
}

/// Maps an R factor to a mean opinion score on the 1.0-4.5 scale using the
/// G.107 cubic: `1 + 0.035 R + R (R - 60)(100 - R) * 7e-6`, clamped so that
/// `R <= 0` gives 1.0 and `R >= 100` gives 4.5.
///
/// The raw cubic dips slightly below 1 on R in (0, 6.5); the result is
/// floored at 1 so the mapping stays monotone with range [1, 4.5].
pub fn r_to_mos<T: Scalar>(r: T) -> T {
    if r <= T::zero() {
        return T::one();
    }
    if r >= c(100.0) {
        return c(4.5);
    }
    let cubic = T::one()
        + c::<T>(0.035) * r
        + r * (r - c(60.0)) * (c::<T>(100.0) - r) * c(7.0e-6);
    cubic.max(T::one())
}
