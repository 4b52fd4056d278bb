//! Probe-trace files and the seeded synthetic generator.
//!
//! Format (extension `.ptrace.csv`): optional `#`-prefixed metadata comment
//! lines, then a header `seq,send_ms,recv_ms` (plus an optional trailing
//! `spurt` column), then one line per probe packet. Times are decimal
//! milliseconds with up to three fractional digits; a lost packet leaves
//! `recv_ms` empty.
//!
//! ```text
//! # rng: chacha8 seed_from_u64(7); uniform = (next_u64 >> 11) * 2^-53
//! seq,send_ms,recv_ms,spurt
//! 1,0,42.5,1
//! 2,30,,1
//! 3,60,95,2
//! ```
//!
//! The generator is reproducible across implementations, not merely across
//! runs: the random source is ChaCha8 (64-bit block counter, zero stream
//! id) keyed by the PCG32 seed expansion of rand_core 0.6's
//! `seed_from_u64`, uniforms are `(next_u64 >> 11) * 2^-53` with the two
//! 32-bit keystream words of each `u64` taken low-first, and all variates
//! come from documented inverse transforms in a fixed per-packet draw
//! order (loss transition, tail, spike). The recipe is written into the
//! file header, and an independent reimplementation reproduces generated
//! traces byte-for-byte.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use crate::error::{Error, Result};
use crate::quality::GilbertParams;

/// One probe packet: when it was sent and when (or whether) it arrived.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PacketRecord {
    pub seq: u64,
    pub send_ms: f64,
    /// Receive timestamp; `None` marks a packet lost in the network.
    pub recv_ms: Option<f64>,
    /// Optional talkspurt id supplied by the trace.
    pub spurt_id: Option<u32>,
}

impl PacketRecord {
    /// One-way network delay, when the packet arrived.
    pub fn delay_ms(&self) -> Option<f64> {
        self.recv_ms.map(|r| r - self.send_ms)
    }

    pub fn is_lost(&self) -> bool {
        self.recv_ms.is_none()
    }
}

/// An ordered probe trace plus its metadata comment lines.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trace {
    metadata: Vec<String>,
    records: Vec<PacketRecord>,
}

impl Trace {
    /// Builds a trace, enforcing strictly increasing sequence numbers,
    /// monotone send times and non-negative delays.
    pub fn new(records: Vec<PacketRecord>) -> Result<Self> {
        Self::with_metadata(Vec::new(), records)
    }

    pub fn with_metadata(metadata: Vec<String>, records: Vec<PacketRecord>) -> Result<Self> {
        for (i, rec) in records.iter().enumerate() {
            if let Some(recv) = rec.recv_ms {
                if recv < rec.send_ms {
                    return Err(Error::Validation(format!(
                        "packet {} has negative delay ({} before send {})",
                        rec.seq, recv, rec.send_ms
                    )));
                }
            }
            if i > 0 {
                let prev = &records[i - 1];
                if rec.seq <= prev.seq {
                    return Err(Error::Validation(format!(
                        "sequence numbers must increase: {} after {}",
                        rec.seq, prev.seq
                    )));
                }
                if rec.send_ms < prev.send_ms {
                    return Err(Error::Validation(format!(
                        "send times must not decrease: {} after {}",
                        rec.send_ms, prev.send_ms
                    )));
                }
            }
        }
        Ok(Trace { metadata, records })
    }

    pub fn records(&self) -> &[PacketRecord] {
        &self.records
    }

    pub fn metadata(&self) -> &[String] {
        &self.metadata
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// True when any record carries a talkspurt id (the writer then emits
    /// the `spurt` column).
    pub fn has_spurt_ids(&self) -> bool {
        self.records.iter().any(|r| r.spurt_id.is_some())
    }
}

/// Parses the documented CSV format.
pub fn parse_trace(text: &str) -> Result<Trace> {
    let mut metadata = Vec::new();
    let mut records = Vec::new();
    let mut saw_header = false;
    let mut has_spurt_column = false;

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        if let Some(comment) = line.strip_prefix('#') {
            metadata.push(comment.strip_prefix(' ').unwrap_or(comment).to_string());
            continue;
        }
        if !saw_header {
            match line {
                "seq,send_ms,recv_ms" => has_spurt_column = false,
                "seq,send_ms,recv_ms,spurt" => has_spurt_column = true,
                _ => {
                    return Err(Error::Parse {
                        line: line_no,
                        message: format!(
                            "expected header 'seq,send_ms,recv_ms[,spurt]', got '{line}'"
                        ),
                    })
                }
            }
            saw_header = true;
            continue;
        }

        let fields: Vec<&str> = line.split(',').collect();
        let expected = if has_spurt_column { 4 } else { 3 };
        if fields.len() != expected {
            return Err(Error::Parse {
                line: line_no,
                message: format!("expected {expected} fields, got {}", fields.len()),
            });
        }
        let seq: u64 = fields[0].parse().map_err(|_| Error::Parse {
            line: line_no,
            message: format!("bad sequence number '{}'", fields[0]),
        })?;
        let send_ms: f64 = fields[1].parse().map_err(|_| Error::Parse {
            line: line_no,
            message: format!("bad send time '{}'", fields[1]),
        })?;
        let recv_ms: Option<f64> = if fields[2].is_empty() {
            None
        } else {
            Some(fields[2].parse().map_err(|_| Error::Parse {
                line: line_no,
                message: format!("bad receive time '{}'", fields[2]),
            })?)
        };
        let spurt_id: Option<u32> = if has_spurt_column && !fields[3].is_empty() {
            Some(fields[3].parse().map_err(|_| Error::Parse {
                line: line_no,
                message: format!("bad talkspurt id '{}'", fields[3]),
            })?)
        } else {
            None
        };
        records.push(PacketRecord {
            seq,
            send_ms,
            recv_ms,
            spurt_id,
        });
    }

    if !saw_header {
        return Err(Error::Parse {
            line: 1,
            message: "missing header line 'seq,send_ms,recv_ms[,spurt]'".into(),
        });
    }
    Trace::with_metadata(metadata, records)
}

/// Writes the canonical form: metadata comments, header, one line per
/// packet, times with up to three fractional digits, lost packets as an
/// empty `recv_ms`, the `spurt` column present iff any record has an id.
pub fn write_trace(trace: &Trace) -> String {
    let mut out = String::new();
    for line in trace.metadata() {
        out.push_str("# ");
        out.push_str(line);
        out.push('\n');
    }
    let spurt = trace.has_spurt_ids();
    out.push_str(if spurt {
        "seq,send_ms,recv_ms,spurt\n"
    } else {
        "seq,send_ms,recv_ms\n"
    });
    for rec in trace.records() {
        out.push_str(&rec.seq.to_string());
        out.push(',');
        out.push_str(&format_ms(rec.send_ms));
        out.push(',');
        if let Some(recv) = rec.recv_ms {
            out.push_str(&format_ms(recv));
        }
        if spurt {
            out.push(',');
            if let Some(id) = rec.spurt_id {
                out.push_str(&id.to_string());
            }
        }
        out.push('\n');
    }
    out
}

/// Milliseconds to at most three fractional digits, trailing zeros trimmed.
fn format_ms(value: f64) -> String {
    let s = format!("{value:.3}");
    let trimmed = s.trim_end_matches('0').trim_end_matches('.');
    trimmed.to_string()
}

/// Delay tail model for the generator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TailModel {
    /// Inverse transform `scale * (1 - u)^(-1/shape)`.
    Pareto { scale_ms: f64, shape: f64 },
    /// `exp(mu + sigma * z)` with Box-Muller
    /// `z = sqrt(-2 ln(1 - u1)) * cos(2 pi u2)`.
    LogNormal { mu: f64, sigma: f64 },
    /// Inverse transform `-ln(1 - u) / rate`.
    Exponential { rate_per_ms: f64 },
}

impl TailModel {
    fn validate(&self) -> Result<()> {
        match *self {
            TailModel::Pareto { scale_ms, shape } => {
                if !(scale_ms > 0.0 && shape > 0.0) {
                    return Err(Error::config(format!(
                        "pareto tail needs positive scale and shape, got {scale_ms}/{shape}"
                    )));
                }
            }
            TailModel::LogNormal { mu, sigma } => {
                if !(sigma > 0.0 && mu.is_finite()) {
                    return Err(Error::config(format!(
                        "log-normal tail needs finite mu and positive sigma, got {mu}/{sigma}"
                    )));
                }
            }
            TailModel::Exponential { rate_per_ms } => {
                if !(rate_per_ms > 0.0) {
                    return Err(Error::config(format!(
                        "exponential tail needs a positive rate, got {rate_per_ms}"
                    )));
                }
            }
        }
        Ok(())
    }

    fn describe(&self) -> String {
        match *self {
            TailModel::Pareto { scale_ms, shape } => {
                format!("pareto(scale={},k={})", format_ms(scale_ms), format_ms(shape))
            }
            TailModel::LogNormal { mu, sigma } => {
                format!("lognormal(mu={},sigma={})", format_ms(mu), format_ms(sigma))
            }
            TailModel::Exponential { rate_per_ms } => {
                format!("exponential(rate={})", format_ms(rate_per_ms))
            }
        }
    }
}

/// Optional delay-spike process: with probability `rate` per packet, a
/// spike of `magnitude_ms` is added to a level that decays geometrically
/// (factor `decay`) on every subsequent packet.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpikeModel {
    pub rate: f64,
    pub magnitude_ms: f64,
    pub decay: f64,
}

impl SpikeModel {
    fn validate(&self) -> Result<()> {
        if !(self.rate >= 0.0 && self.rate <= 1.0) {
            return Err(Error::config(format!(
                "spike rate must be in [0, 1], got {}",
                self.rate
            )));
        }
        if !(self.magnitude_ms > 0.0) {
            return Err(Error::config(format!(
                "spike magnitude must be positive, got {}",
                self.magnitude_ms
            )));
        }
        if !(self.decay >= 0.0 && self.decay < 1.0) {
            return Err(Error::config(format!(
                "spike decay must be in [0, 1), got {}",
                self.decay
            )));
        }
        Ok(())
    }
}

/// Synthetic-trace recipe.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GenConfig {
    pub seed: u64,
    pub n_packets: usize,
    /// Spacing of probe packets, default 30 ms.
    pub interval_ms: f64,
    /// Fixed propagation delay added under every tail draw.
    pub base_delay_ms: f64,
    pub tail: TailModel,
    /// Gilbert loss chain; the state starts at Received.
    pub loss: GilbertParams<f64>,
    pub spikes: Option<SpikeModel>,
}

impl GenConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_packets == 0 {
            return Err(Error::config("n_packets must be at least 1"));
        }
        if !(self.interval_ms > 0.0) {
            return Err(Error::config(format!(
                "interval must be positive, got {} ms",
                self.interval_ms
            )));
        }
        if !(self.base_delay_ms >= 0.0) {
            return Err(Error::config(format!(
                "base delay must be non-negative, got {} ms",
                self.base_delay_ms
            )));
        }
        self.tail.validate()?;
        GilbertParams::new(self.loss.p, self.loss.q).map_err(|e| match e {
            Error::Domain(msg) => Error::Config(msg),
            other => other,
        })?;
        if let Some(s) = self.spikes {
            s.validate()?;
        }
        Ok(())
    }
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            seed: 0,
            n_packets: 10_000,
            interval_ms: 30.0,
            base_delay_ms: 40.0,
            tail: TailModel::Pareto { scale_ms: 20.0, shape: 2.0 },
            loss: GilbertParams { p: 0.0, q: 1.0 },
            spikes: None,
        }
    }
}

fn unit_uniform(rng: &mut ChaCha8Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Generates a reproducible synthetic trace: send times at `i * interval`,
/// losses from the Gilbert chain, received delays `base + tail (+ spikes)`.
pub fn generate_trace(cfg: &GenConfig) -> Result<Trace> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut records = Vec::with_capacity(cfg.n_packets);
    let mut in_loss_state = false;
    let mut spike_level = 0.0f64;

    for i in 0..cfg.n_packets {
        let lost = in_loss_state;
        // Fixed draw order: (1) loss transition, (2) tail, (3) spike.
        let u_transition = unit_uniform(&mut rng);
        in_loss_state = if in_loss_state {
            u_transition >= cfg.loss.q
        } else {
            u_transition < cfg.loss.p
        };
        let tail = match cfg.tail {
            TailModel::Pareto { scale_ms, shape } => {
                scale_ms * (1.0 - unit_uniform(&mut rng)).powf(-1.0 / shape)
            }
            TailModel::LogNormal { mu, sigma } => {
                let u1 = unit_uniform(&mut rng);
                let u2 = unit_uniform(&mut rng);
                let z = (-2.0 * (1.0 - u1).ln()).sqrt()
                    * (2.0 * std::f64::consts::PI * u2).cos();
                (mu + sigma * z).exp()
            }
            TailModel::Exponential { rate_per_ms } => {
                -(1.0 - unit_uniform(&mut rng)).ln() / rate_per_ms
            }
        };
        if let Some(spikes) = cfg.spikes {
            if unit_uniform(&mut rng) < spikes.rate {
                spike_level += spikes.magnitude_ms;
            }
        }
        // Strictly positive delay even in the measure-zero corner where
        // base = 0 and the tail draw is exactly 0.
        let delay = (cfg.base_delay_ms + tail + spike_level).max(1e-9);
        if let Some(spikes) = cfg.spikes {
            spike_level *= spikes.decay;
        }

        let send_ms = i as f64 * cfg.interval_ms;
        records.push(PacketRecord {
            seq: (i + 1) as u64,
            send_ms,
            recv_ms: if lost { None } else { Some(send_ms + delay) },
            spurt_id: None,
        });
    }

    let metadata = vec![
        "generator: playout synthetic trace".to_string(),
        format!(
            "rng: chacha8(key = pcg32 expansion of seed {} per rand_core-0.6 seed_from_u64, \
             64-bit block counter, zero stream id); uniform = (next_u64 >> 11) * 2^-53, \
             u64 = low keystream word first; per-packet draws: loss-transition, tail, \
             spike(if configured)",
            cfg.seed
        ),
        format!(
            "model: n={} interval_ms={} base_ms={} tail={} loss=gilbert(p={},q={}) spikes={}",
            cfg.n_packets,
            format_ms(cfg.interval_ms),
            format_ms(cfg.base_delay_ms),
            cfg.tail.describe(),
            format_ms(cfg.loss.p),
            format_ms(cfg.loss.q),
            match cfg.spikes {
                None => "none".to_string(),
                Some(s) => format!(
                    "(rate={},magnitude={},decay={})",
                    format_ms(s.rate),
                    format_ms(s.magnitude_ms),
                    format_ms(s.decay)
                ),
            }
        ),
    ];
    Trace::with_metadata(metadata, records)
}
