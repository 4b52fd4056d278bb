//! Trace-driven playout simulator: segments a probe trace into talkspurts,
//! re-decides the playout delay at every talkspurt start, schedules
//! per-packet deadlines, accounts network and late losses, and scores each
//! talkspurt with the E-model.
//!
//! Causality is structural: a decider only ever sees packets sent before
//! the talkspurt it is deciding for. Within a talkspurt the playout delay
//! is frozen; the talkspurt's own packets enter the estimator window only
//! once a later talkspurt starts.

use std::time::{Duration, Instant};

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use crate::deciders::{
    closed_form_playout, grid_search_playout, inputs_from_window, BaselineKind, BaselineState,
    GridSpec, OptimizerInputs, MIN_PLAYOUT_MS,
};
use crate::delay::{estimate_gilbert, DelayWindow, LossFlag};
use crate::error::{Error, Result};
use crate::quality::{burst_ratio, r_factor, r_to_mos, ImpairmentConfig};
use crate::trace::{PacketRecord, Trace};

/// How a trace is cut into talkspurts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SegmentationPolicy {
    /// Use the trace's own `spurt` column; consecutive runs of one id form
    /// a talkspurt. Errors if any record lacks an id.
    ExplicitColumn,
    /// Split wherever consecutive send times differ by more than the gap.
    GapThreshold { gap_ms: f64 },
    /// Overlay a seeded exponential on/off pattern on the send timeline.
    /// Packets inside ON periods form talkspurts; packets inside OFF
    /// periods belong to no talkspurt (probes keep flowing through
    /// silence and still feed the estimators).
    OnOffModel {
        seed: u64,
        mean_on_ms: f64,
        mean_off_ms: f64,
    },
}

/// A contiguous run of packets played out with one playout delay.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Talkspurt<'a> {
    pub id: u32,
    pub packets: &'a [PacketRecord],
}

impl Talkspurt<'_> {
    pub fn start_send_ms(&self) -> f64 {
        self.packets[0].send_ms
    }

    /// Span from first to last send plus one frame interval.
    pub fn duration_ms(&self, frame_interval_ms: f64) -> f64 {
        let last = self.packets[self.packets.len() - 1].send_ms;
        last - self.packets[0].send_ms + frame_interval_ms
    }
}

/// Absolute playout deadlines for one talkspurt:
/// `send(first) + pd + index * frame_interval`.
#[derive(Debug, Clone, PartialEq)]
pub struct PlayoutSchedule {
    pub pd_ms: f64,
    pub deadlines_ms: Vec<f64>,
}

impl PlayoutSchedule {
    pub fn for_talkspurt(spurt: &Talkspurt<'_>, pd_ms: f64, frame_interval_ms: f64) -> Self {
        let start = spurt.start_send_ms();
        let deadlines_ms = (0..spurt.packets.len())
            .map(|j| start + pd_ms + j as f64 * frame_interval_ms)
            .collect();
        PlayoutSchedule { pd_ms, deadlines_ms }
    }
}

fn unit_uniform(rng: &mut ChaCha8Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Cuts the trace into talkspurts under the chosen policy.
pub fn segment_talkspurts<'a>(
    trace: &'a Trace,
    policy: &SegmentationPolicy,
) -> Result<Vec<Talkspurt<'a>>> {
    let records = trace.records();
    if records.is_empty() {
        return Err(Error::insufficient("trace holds no packets"));
    }
    let mut ranges: Vec<(usize, usize)> = Vec::new();
    match *policy {
        SegmentationPolicy::ExplicitColumn => {
            let mut start = 0usize;
            let mut current = match records[0].spurt_id {
                Some(id) => id,
                None => {
                    return Err(Error::Validation(
                        "explicit segmentation needs a spurt id on every packet".into(),
                    ))
                }
            };
            for (i, rec) in records.iter().enumerate().skip(1) {
                let id = rec.spurt_id.ok_or_else(|| {
                    Error::Validation(format!("packet {} has no spurt id", rec.seq))
                })?;
                if id != current {
                    ranges.push((start, i));
                    start = i;
                    current = id;
                }
            }
            ranges.push((start, records.len()));
        }
        SegmentationPolicy::GapThreshold { gap_ms } => {
            if !(gap_ms > 0.0) {
                return Err(Error::config(format!(
                    "gap threshold must be positive, got {gap_ms} ms"
                )));
            }
            let mut start = 0usize;
            for i in 1..records.len() {
                if records[i].send_ms - records[i - 1].send_ms > gap_ms {
                    ranges.push((start, i));
                    start = i;
                }
            }
            ranges.push((start, records.len()));
        }
        SegmentationPolicy::OnOffModel {
            seed,
            mean_on_ms,
            mean_off_ms,
        } => {
            if !(mean_on_ms > 0.0 && mean_off_ms > 0.0) {
                return Err(Error::config(
                    "on/off model needs positive mean durations",
                ));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut draw = |mean: f64| -> f64 {
                let u = unit_uniform(&mut rng);
                (-(1.0 - u).ln() * mean).max(1e-6)
            };
            let mut on = true;
            let mut seg_end = records[0].send_ms + draw(mean_on_ms);
            let mut start: Option<usize> = Some(0);
            for (i, rec) in records.iter().enumerate() {
                while rec.send_ms >= seg_end {
                    if on {
                        if let Some(s) = start.take() {
                            if i > s {
                                ranges.push((s, i));
                            }
                        }
                    }
                    on = !on;
                    if on {
                        start = Some(i);
                    }
                    seg_end += draw(if on { mean_on_ms } else { mean_off_ms });
                }
                if on && start.is_none() {
                    start = Some(i);
                }
            }
            if on {
                if let Some(s) = start {
                    if records.len() > s {
                        ranges.push((s, records.len()));
                    }
                }
            }
            if ranges.is_empty() {
                return Err(Error::insufficient(
                    "on/off pattern produced no talkspurts",
                ));
            }
        }
    }
    Ok(ranges
        .into_iter()
        .enumerate()
        .map(|(i, (s, e))| Talkspurt {
            id: i as u32 + 1,
            packets: &records[s..e],
        })
        .collect())
}

/// Which playout-delay decider drives a simulation run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Decider {
    /// Closed-form quality optimizer over the fitted tail.
    Proposed,
    /// Grid-search quality optimizer (the p-optimum stand-in).
    GridSearch,
    /// One of the classic adaptive estimators.
    Baseline(BaselineKind),
    /// Constant playout delay; useful as a stub and for sweeps.
    Fixed(f64),
}

impl Decider {
    pub fn name(&self) -> String {
        match self {
            Decider::Proposed => "proposed".into(),
            Decider::GridSearch => "p-optimum".into(),
            Decider::Baseline(BaselineKind::ExpAvg) => "exp-avg".into(),
            Decider::Baseline(BaselineKind::FastExpAvg) => "f-exp-avg".into(),
            Decider::Baseline(BaselineKind::MinDelay) => "min-del".into(),
            Decider::Baseline(BaselineKind::SpikeDetect) => "spike-det".into(),
            Decider::Fixed(pd) => format!("fixed({pd})"),
        }
    }
}

/// Simulation configuration; defaults mirror the toolkit-wide ones
/// (window 500, frame 30 ms, grid 200 points on [150, 5000]).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimConfig {
    pub window_capacity: usize,
    pub frame_interval_ms: f64,
    pub impairment: ImpairmentConfig<f64>,
    pub segmentation: SegmentationPolicy,
    /// Grid used by the grid-search decider.
    pub grid: GridSpec<f64>,
    /// Drop talkspurts shorter than this, when set (the classic filter is
    /// 250 ms).
    pub min_spurt_ms: Option<f64>,
    /// Extra fixed pipeline delay added to every decided playout delay
    /// before scheduling and scoring.
    pub pd_offset_ms: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            window_capacity: crate::delay::DEFAULT_WINDOW_CAPACITY,
            frame_interval_ms: 30.0,
            impairment: ImpairmentConfig::default(),
            segmentation: SegmentationPolicy::GapThreshold { gap_ms: 100.0 },
            grid: GridSpec::default(),
            min_spurt_ms: None,
            pd_offset_ms: 0.0,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window_capacity == 0 {
            return Err(Error::config("window capacity must be at least 1"));
        }
        if !(self.frame_interval_ms > 0.0) {
            return Err(Error::config("frame interval must be positive"));
        }
        if !(self.pd_offset_ms >= 0.0) {
            return Err(Error::config("pd offset must be non-negative"));
        }
        self.impairment.validate()?;
        self.grid.validate()?;
        Ok(())
    }
}

/// Outcome of one talkspurt under one decider.
#[derive(Debug, Clone, PartialEq)]
pub struct TalkspurtResult {
    pub spurt_id: u32,
    pub packet_count: usize,
    /// Effective playout delay (decided + configured offset), ms.
    pub pd_ms: f64,
    pub network_lost: usize,
    pub late_lost: usize,
    pub received_on_time: usize,
    pub r: f64,
    pub mos: f64,
}

/// Whole-run aggregates.
#[derive(Debug, Clone, PartialEq)]
pub struct RunTotals {
    pub packets: usize,
    pub network_lost: usize,
    pub late_lost: usize,
    pub loss_pct: f64,
    pub network_loss_pct: f64,
    pub late_loss_pct: f64,
    pub mean_pd_ms: f64,
    pub e_mos_avg: f64,
    /// Burst ratio of the run's combined on-time/lost pattern.
    pub measured_burst_r: f64,
}

/// One decider's results on one trace.
#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub decider: String,
    pub per_talkspurt: Vec<TalkspurtResult>,
    pub totals: RunTotals,
    /// Fallback notes (degenerate fits, short windows); empty on clean runs.
    pub warnings: Vec<String>,
}

/// Runs one decider over the trace per the configuration.
pub fn run_simulation(trace: &Trace, decider: &Decider, cfg: &SimConfig) -> Result<RunResult> {
    cfg.validate()?;
    if let Decider::Fixed(pd) = decider {
        if !(*pd > 0.0) {
            return Err(Error::config(format!(
                "fixed playout delay must be positive, got {pd} ms"
            )));
        }
    }
    let spurts = segment_talkspurts(trace, &cfg.segmentation)?;
    let spurts: Vec<Talkspurt<'_>> = match cfg.min_spurt_ms {
        Some(min) => spurts
            .into_iter()
            .filter(|s| s.duration_ms(cfg.frame_interval_ms) >= min)
            .collect(),
        None => spurts,
    };
    if spurts.is_empty() {
        return Err(Error::insufficient(
            "no talkspurt satisfies the minimum-duration filter",
        ));
    }

    let records = trace.records();
    let mut warnings = Vec::new();
    let mut window = DelayWindow::<f64>::new(cfg.window_capacity)?;
    let mut baseline = match decider {
        Decider::Baseline(kind) => Some(BaselineState::<f64>::new(*kind, cfg.window_capacity)),
        _ => None,
    };

    let mut cursor = 0usize;
    let mut per_talkspurt = Vec::with_capacity(spurts.len());
    let mut combined_flags: Vec<LossFlag> = Vec::new();

    for spurt in &spurts {
        // History = every packet sent before this talkspurt begins.
        while cursor < records.len() && records[cursor].send_ms < spurt.start_send_ms() {
            let rec = &records[cursor];
            match rec.delay_ms() {
                Some(delay) => {
                    // Parsing admits zero delay (clock-skew corner); the
                    // window requires strictly positive samples.
                    window.push_received(delay.max(1e-9))?;
                    if let Some(state) = baseline.as_mut() {
                        state.update(delay.max(1e-9))?;
                    }
                }
                None => window.push_lost(),
            }
            cursor += 1;
        }

        let decided = decide(decider, &window, baseline.as_ref(), cfg, spurt.id, &mut warnings)?;
        let pd = decided + cfg.pd_offset_ms;
        let schedule = PlayoutSchedule::for_talkspurt(spurt, pd, cfg.frame_interval_ms);

        let mut network_lost = 0usize;
        let mut late_lost = 0usize;
        let mut on_time = 0usize;
        let mut flags = Vec::with_capacity(spurt.packets.len());
        for (rec, deadline) in spurt.packets.iter().zip(&schedule.deadlines_ms) {
            match rec.recv_ms {
                None => {
                    network_lost += 1;
                    flags.push(LossFlag::Lost);
                }
                Some(recv) if recv > *deadline => {
                    late_lost += 1;
                    flags.push(LossFlag::Lost);
                }
                Some(_) => {
                    on_time += 1;
                    flags.push(LossFlag::Received);
                }
            }
        }
        combined_flags.extend_from_slice(&flags);

        let count = spurt.packets.len();
        let loss_pct = 100.0 * (network_lost + late_lost) as f64 / count as f64;
        let burst = measured_burst(&flags);
        let r = r_factor(pd, loss_pct, burst, &cfg.impairment)?;
        per_talkspurt.push(TalkspurtResult {
            spurt_id: spurt.id,
            packet_count: count,
            pd_ms: pd,
            network_lost,
            late_lost,
            received_on_time: on_time,
            r,
            mos: r_to_mos(r),
        });
    }

    let packets: usize = per_talkspurt.iter().map(|t| t.packet_count).sum();
    let network_lost: usize = per_talkspurt.iter().map(|t| t.network_lost).sum();
    let late_lost: usize = per_talkspurt.iter().map(|t| t.late_lost).sum();
    let n_spurts = per_talkspurt.len() as f64;
    let totals = RunTotals {
        packets,
        network_lost,
        late_lost,
        loss_pct: 100.0 * (network_lost + late_lost) as f64 / packets as f64,
        network_loss_pct: 100.0 * network_lost as f64 / packets as f64,
        late_loss_pct: 100.0 * late_lost as f64 / packets as f64,
        mean_pd_ms: per_talkspurt.iter().map(|t| t.pd_ms).sum::<f64>() / n_spurts,
        e_mos_avg: per_talkspurt.iter().map(|t| t.mos).sum::<f64>() / n_spurts,
        measured_burst_r: measured_burst(&combined_flags),
    };
    Ok(RunResult {
        decider: decider.name(),
        per_talkspurt,
        totals,
        warnings,
    })
}

/// Burst ratio of an observed flag pattern, falling back to 1 when the
/// pattern is too short to estimate.
fn measured_burst(flags: &[LossFlag]) -> f64 {
    if flags.len() < 2 {
        return 1.0;
    }
    match estimate_gilbert::<f64, _>(flags.iter().copied()) {
        Ok(est) => burst_ratio(&est.params).unwrap_or(1.0),
        Err(_) => 1.0,
    }
}

fn decide(
    decider: &Decider,
    window: &DelayWindow<f64>,
    baseline: Option<&BaselineState<f64>>,
    cfg: &SimConfig,
    spurt_id: u32,
    warnings: &mut Vec<String>,
) -> Result<f64> {
    match decider {
        Decider::Fixed(pd) => Ok(*pd),
        Decider::Baseline(_) => {
            let state = baseline.expect("baseline state exists for baseline deciders");
            if state.updates() == 0 {
                // No packet observed yet: bootstrap like the quality
                // deciders; later decisions stay unclamped.
                Ok(MIN_PLAYOUT_MS)
            } else {
                state.playout_delay()
            }
        }
        Decider::Proposed | Decider::GridSearch => {
            if window.received_count() == 0 {
                return Ok(MIN_PLAYOUT_MS);
            }
            let inputs = match inputs_from_window(window, cfg.impairment) {
                Ok(inputs) => inputs,
                Err(err @ (Error::Degenerate(_) | Error::InsufficientData(_))) => {
                    warnings.push(format!(
                        "talkspurt {spurt_id}: {err}; using {MIN_PLAYOUT_MS} ms"
                    ));
                    return Ok(MIN_PLAYOUT_MS);
                }
                Err(err) => return Err(err),
            };
            match decider {
                Decider::Proposed => closed_form_playout(&inputs),
                _ => grid_search_playout(&inputs, &cfg.grid),
            }
        }
    }
}

/// Side-by-side runs of several deciders on the identical trace and
/// segmentation, in the order given.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonTable {
    pub rows: Vec<RunResult>,
}

pub fn compare(trace: &Trace, deciders: &[Decider], cfg: &SimConfig) -> Result<ComparisonTable> {
    if deciders.is_empty() {
        return Err(Error::config("need at least one decider to compare"));
    }
    let rows = deciders
        .iter()
        .map(|d| run_simulation(trace, d, cfg))
        .collect::<Result<Vec<_>>>()?;
    Ok(ComparisonTable { rows })
}

/// Wall-clock cost of one decider invocation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimingReport {
    pub repetitions: u32,
    pub total: Duration,
    pub per_call_ns: f64,
}

/// Times a quality-based decider on fixed inputs. At least 1000 repetitions
/// are required for a stable figure.
pub fn timing_benchmark(
    decider: &Decider,
    inputs: &OptimizerInputs<f64>,
    grid: &GridSpec<f64>,
    repetitions: u32,
) -> Result<TimingReport> {
    if repetitions < 1000 {
        return Err(Error::config(format!(
            "need at least 1000 repetitions, got {repetitions}"
        )));
    }
    let run: Box<dyn Fn() -> f64> = match decider {
        Decider::Proposed => Box::new(|| closed_form_playout(inputs).expect("valid inputs")),
        Decider::GridSearch => {
            Box::new(|| grid_search_playout(inputs, grid).expect("valid inputs"))
        }
        other => {
            return Err(Error::config(format!(
                "timing benchmark covers the quality-based deciders, not {}",
                other.name()
            )))
        }
    };
    let start = Instant::now();
    for _ in 0..repetitions {
        std::hint::black_box(run());
    }
    let total = start.elapsed();
    Ok(TimingReport {
        repetitions,
        total,
        per_call_ns: total.as_nanos() as f64 / repetitions as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quality::GilbertParams;
    use crate::trace::{generate_trace, GenConfig, TailModel};
    use approx::assert_relative_eq;

    fn hand_trace(delays: &[Option<f64>], interval: f64) -> Trace {
        let records = delays
            .iter()
            .enumerate()
            .map(|(i, d)| PacketRecord {
                seq: i as u64 + 1,
                send_ms: i as f64 * interval,
                recv_ms: d.map(|d| i as f64 * interval + d),
                spurt_id: None,
            })
            .collect();
        Trace::new(records).unwrap()
    }

    fn spurt_trace(ids: &[u32]) -> Trace {
        let records = ids
            .iter()
            .enumerate()
            .map(|(i, &id)| PacketRecord {
                seq: i as u64 + 1,
                send_ms: i as f64 * 30.0,
                recv_ms: Some(i as f64 * 30.0 + 40.0),
                spurt_id: Some(id),
            })
            .collect();
        Trace::new(records).unwrap()
    }

    #[test]
    fn explicit_segmentation_partitions_by_id_runs() {
        let t = spurt_trace(&[1, 1, 1, 2, 2]);
        let spurts = segment_talkspurts(&t, &SegmentationPolicy::ExplicitColumn).unwrap();
        assert_eq!(spurts.len(), 2);
        assert_eq!(spurts[0].packets.len(), 3);
        assert_eq!(spurts[1].packets.len(), 2);
        assert_eq!(spurts[0].id, 1);
        assert_eq!(spurts[1].id, 2);
    }

    #[test]
    fn explicit_segmentation_requires_ids() {
        let t = hand_trace(&[Some(40.0), Some(41.0)], 30.0);
        assert!(segment_talkspurts(&t, &SegmentationPolicy::ExplicitColumn).is_err());
    }

    #[test]
    fn gap_segmentation_splits_on_silence() {
        let records = vec![
            PacketRecord { seq: 1, send_ms: 0.0, recv_ms: Some(40.0), spurt_id: None },
            PacketRecord { seq: 2, send_ms: 30.0, recv_ms: Some(75.0), spurt_id: None },
            PacketRecord { seq: 3, send_ms: 60.0, recv_ms: Some(99.0), spurt_id: None },
            PacketRecord { seq: 4, send_ms: 500.0, recv_ms: Some(541.0), spurt_id: None },
            PacketRecord { seq: 5, send_ms: 530.0, recv_ms: Some(581.0), spurt_id: None },
        ];
        let t = Trace::new(records).unwrap();
        let spurts =
            segment_talkspurts(&t, &SegmentationPolicy::GapThreshold { gap_ms: 100.0 }).unwrap();
        assert_eq!(spurts.len(), 2);
        assert_eq!(spurts[0].packets.len(), 3);
        assert_eq!(spurts[1].packets.len(), 2);
        assert_eq!(spurts[1].start_send_ms(), 500.0);
    }

    #[test]
    fn onoff_segmentation_is_deterministic() {
        let t = generate_trace(&GenConfig { seed: 3, n_packets: 2_000, ..GenConfig::default() }).unwrap();
        let policy = SegmentationPolicy::OnOffModel {
            seed: 9,
            mean_on_ms: 1000.0,
            mean_off_ms: 500.0,
        };
        let a = segment_talkspurts(&t, &policy).unwrap();
        let b = segment_talkspurts(&t, &policy).unwrap();
        assert_eq!(a, b);
        assert!(a.len() > 10, "expected many talkspurts, got {}", a.len());
        // Silence periods leave some packets outside every talkspurt.
        let covered: usize = a.iter().map(|s| s.packets.len()).sum();
        assert!(covered < t.len());
        // Different seed, different segmentation.
        let c = segment_talkspurts(
            &t,
            &SegmentationPolicy::OnOffModel { seed: 10, mean_on_ms: 1000.0, mean_off_ms: 500.0 },
        )
        .unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn segmentation_rejects_empty_trace() {
        let t = Trace::default();
        assert!(segment_talkspurts(&t, &SegmentationPolicy::GapThreshold { gap_ms: 100.0 }).is_err());
    }

    #[test]
    fn hand_worked_deadline_arithmetic() {
        // Sends at 0,30,...,120; delays 40,60,300,50,45; pd fixed at 150.
        // Deadlines are 150,180,210,240,270; only the 300 ms delay
        // (arrival 360 vs deadline 210) misses.
        let t = hand_trace(
            &[Some(40.0), Some(60.0), Some(300.0), Some(50.0), Some(45.0)],
            30.0,
        );
        let res = run_simulation(&t, &Decider::Fixed(150.0), &SimConfig::default()).unwrap();
        assert_eq!(res.per_talkspurt.len(), 1);
        let ts = &res.per_talkspurt[0];
        assert_eq!(ts.packet_count, 5);
        assert_eq!(ts.network_lost, 0);
        assert_eq!(ts.late_lost, 1);
        assert_eq!(ts.received_on_time, 4);
        assert_eq!(ts.pd_ms, 150.0);
        assert_relative_eq!(ts.r, r_factor(150.0, 20.0, 1.0, &ImpairmentConfig::default()).unwrap());
    }

    #[test]
    fn schedule_deadlines_step_by_frame_interval() {
        let t = hand_trace(&[Some(40.0); 4], 30.0);
        let spurts =
            segment_talkspurts(&t, &SegmentationPolicy::GapThreshold { gap_ms: 100.0 }).unwrap();
        let sched = PlayoutSchedule::for_talkspurt(&spurts[0], 150.0, 30.0);
        assert_eq!(sched.deadlines_ms, vec![150.0, 180.0, 210.0, 240.0]);
    }

    #[test]
    fn clean_trace_scores_codec_only_quality() {
        // No network loss, every delay far below 150 ms: the proposed
        // decider clamps to 150, nothing arrives late, and every talkspurt
        // scores r0 - ie.
        let cfg = GenConfig {
            seed: 5,
            n_packets: 4_000,
            base_delay_ms: 30.0,
            tail: TailModel::Exponential { rate_per_ms: 1.0 },
            loss: GilbertParams { p: 0.0, q: 1.0 },
            ..GenConfig::default()
        };
        let t = generate_trace(&cfg).unwrap();
        let sim = SimConfig {
            segmentation: SegmentationPolicy::OnOffModel {
                seed: 1,
                mean_on_ms: 1000.0,
                mean_off_ms: 500.0,
            },
            ..SimConfig::default()
        };
        let res = run_simulation(&t, &Decider::Proposed, &sim).unwrap();
        assert!(res.per_talkspurt.iter().all(|ts| ts.pd_ms == 150.0));
        assert_eq!(res.totals.late_lost, 0);
        assert_eq!(res.totals.network_lost, 0);
        assert_relative_eq!(res.totals.e_mos_avg, r_to_mos(93.2), max_relative = 1e-12);
        assert_eq!(res.totals.measured_burst_r, 1.0);
        assert!(res.warnings.is_empty());
    }

    #[test]
    fn loss_accounting_is_conserved() {
        let cfg = GenConfig {
            seed: 21,
            n_packets: 6_000,
            loss: GilbertParams { p: 0.03, q: 0.4 },
            spikes: Some(crate::trace::SpikeModel {
                rate: 0.002,
                magnitude_ms: 400.0,
                decay: 0.8,
            }),
            ..GenConfig::default()
        };
        let t = generate_trace(&cfg).unwrap();
        let sim = SimConfig {
            segmentation: SegmentationPolicy::OnOffModel {
                seed: 2,
                mean_on_ms: 900.0,
                mean_off_ms: 400.0,
            },
            ..SimConfig::default()
        };
        for decider in [
            Decider::Proposed,
            Decider::GridSearch,
            Decider::Baseline(BaselineKind::ExpAvg),
            Decider::Baseline(BaselineKind::SpikeDetect),
        ] {
            let res = run_simulation(&t, &decider, &sim).unwrap();
            for ts in &res.per_talkspurt {
                assert_eq!(
                    ts.network_lost + ts.late_lost + ts.received_on_time,
                    ts.packet_count
                );
            }
            let total: usize = res.per_talkspurt.iter().map(|t| t.packet_count).sum();
            assert_eq!(res.totals.packets, total);
            assert!(res.totals.loss_pct >= 0.0 && res.totals.loss_pct <= 100.0);
        }
    }

    #[test]
    fn identical_runs_are_bit_identical() {
        let t = generate_trace(&GenConfig {
            seed: 33,
            n_packets: 3_000,
            loss: GilbertParams { p: 0.02, q: 0.3 },
            ..GenConfig::default()
        })
        .unwrap();
        let sim = SimConfig {
            segmentation: SegmentationPolicy::OnOffModel {
                seed: 4,
                mean_on_ms: 1000.0,
                mean_off_ms: 500.0,
            },
            ..SimConfig::default()
        };
        for decider in [Decider::Proposed, Decider::Baseline(BaselineKind::MinDelay)] {
            let a = run_simulation(&t, &decider, &sim).unwrap();
            let b = run_simulation(&t, &decider, &sim).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn future_packets_cannot_influence_past_decisions() {
        let base = generate_trace(&GenConfig {
            seed: 55,
            n_packets: 2_000,
            ..GenConfig::default()
        })
        .unwrap();
        let sim = SimConfig {
            segmentation: SegmentationPolicy::OnOffModel {
                seed: 6,
                mean_on_ms: 800.0,
                mean_off_ms: 400.0,
            },
            ..SimConfig::default()
        };
        let reference = run_simulation(&base, &Decider::Proposed, &sim).unwrap();

        // Rewrite everything from the midpoint on: huge delays and losses.
        let cut = reference.per_talkspurt[reference.per_talkspurt.len() / 2].spurt_id;
        let spurts = segment_talkspurts(&base, &sim.segmentation).unwrap();
        let cut_send = spurts[(cut - 1) as usize].start_send_ms();
        let mutated: Vec<PacketRecord> = base
            .records()
            .iter()
            .map(|r| {
                if r.send_ms >= cut_send {
                    PacketRecord {
                        recv_ms: r.recv_ms.map(|_| r.send_ms + 2_000.0),
                        ..*r
                    }
                } else {
                    *r
                }
            })
            .collect();
        let mutated = Trace::new(mutated).unwrap();
        let altered = run_simulation(&mutated, &Decider::Proposed, &sim).unwrap();

        for (a, b) in reference
            .per_talkspurt
            .iter()
            .zip(&altered.per_talkspurt)
            .take_while(|(a, _)| a.spurt_id <= cut)
        {
            assert_eq!(a.pd_ms, b.pd_ms, "pd changed on talkspurt {}", a.spurt_id);
        }
    }

    #[test]
    fn raising_fixed_pd_never_creates_late_loss() {
        let t = generate_trace(&GenConfig {
            seed: 77,
            n_packets: 3_000,
            tail: TailModel::Pareto { scale_ms: 25.0, shape: 1.2 },
            ..GenConfig::default()
        })
        .unwrap();
        let sim = SimConfig {
            segmentation: SegmentationPolicy::OnOffModel {
                seed: 8,
                mean_on_ms: 1000.0,
                mean_off_ms: 500.0,
            },
            ..SimConfig::default()
        };
        let mut prev_late = usize::MAX;
        for pd in [60.0, 100.0, 150.0, 250.0, 400.0, 800.0] {
            let res = run_simulation(&t, &Decider::Fixed(pd), &sim).unwrap();
            assert!(
                res.totals.late_lost <= prev_late,
                "late loss rose when pd grew to {pd}"
            );
            prev_late = res.totals.late_lost;
        }
    }

    #[test]
    fn pd_offset_is_equivalent_to_larger_fixed_delay() {
        let t = generate_trace(&GenConfig { seed: 88, n_packets: 2_000, ..GenConfig::default() })
            .unwrap();
        let base = SimConfig {
            segmentation: SegmentationPolicy::OnOffModel {
                seed: 3,
                mean_on_ms: 900.0,
                mean_off_ms: 300.0,
            },
            ..SimConfig::default()
        };
        let offset = SimConfig { pd_offset_ms: 20.0, ..base };
        let with_offset = run_simulation(&t, &Decider::Fixed(150.0), &offset).unwrap();
        let equivalent = run_simulation(&t, &Decider::Fixed(170.0), &base).unwrap();
        assert_eq!(with_offset.per_talkspurt, equivalent.per_talkspurt);
    }

    #[test]
    fn min_spurt_filter_drops_short_talkspurts() {
        let t = spurt_trace(&[1, 1, 1, 1, 1, 1, 1, 1, 1, 2, 3, 3, 3, 3, 3, 3, 3, 3, 3]);
        let keep_all = SimConfig {
            segmentation: SegmentationPolicy::ExplicitColumn,
            ..SimConfig::default()
        };
        let filtered = SimConfig { min_spurt_ms: Some(250.0), ..keep_all };
        let all = run_simulation(&t, &Decider::Fixed(150.0), &keep_all).unwrap();
        let some = run_simulation(&t, &Decider::Fixed(150.0), &filtered).unwrap();
        assert_eq!(all.per_talkspurt.len(), 3);
        // The singleton talkspurt (30 ms) falls under the 250 ms filter.
        assert_eq!(some.per_talkspurt.len(), 2);
    }

    #[test]
    fn compare_rows_follow_requested_order() {
        let t = generate_trace(&GenConfig {
            seed: 96,
            n_packets: 3_000,
            loss: GilbertParams { p: 0.01, q: 0.5 },
            ..GenConfig::default()
        })
        .unwrap();
        let sim = SimConfig {
            segmentation: SegmentationPolicy::OnOffModel {
                seed: 5,
                mean_on_ms: 1000.0,
                mean_off_ms: 500.0,
            },
            ..SimConfig::default()
        };
        let single = compare(&t, &[Decider::Proposed], &sim).unwrap();
        assert_eq!(single.rows.len(), 1);

        let dup = compare(&t, &[Decider::Proposed, Decider::Proposed], &sim).unwrap();
        assert_eq!(dup.rows[0], dup.rows[1]);

        let table = compare(
            &t,
            &[
                Decider::Proposed,
                Decider::GridSearch,
                Decider::Baseline(BaselineKind::ExpAvg),
            ],
            &sim,
        )
        .unwrap();
        assert_eq!(table.rows[0].decider, "proposed");
        assert_eq!(table.rows[1].decider, "p-optimum");
        assert_eq!(table.rows[2].decider, "exp-avg");
        // Both quality-based deciders optimize the same objective.
        assert!(
            (table.rows[0].totals.e_mos_avg - table.rows[1].totals.e_mos_avg).abs() <= 0.02,
            "proposed {} vs p-optimum {}",
            table.rows[0].totals.e_mos_avg,
            table.rows[1].totals.e_mos_avg
        );
        assert!(compare(&t, &[], &sim).is_err());
    }

    #[test]
    fn benchmark_scales_with_grid_and_validates_reps() {
        let inputs = OptimizerInputs::new(
            crate::delay::ParetoFit { scale: 60.0, shape: 1.5, n_tail: 250 },
            0.01,
            1.5,
            ImpairmentConfig::default(),
        )
        .unwrap();
        let grid200 = GridSpec { lo: 150.0, hi: 5000.0, points: 200 };
        let grid400 = GridSpec { lo: 150.0, hi: 5000.0, points: 400 };
        assert!(timing_benchmark(&Decider::GridSearch, &inputs, &grid200, 10).is_err());
        assert!(timing_benchmark(
            &Decider::Baseline(BaselineKind::ExpAvg),
            &inputs,
            &grid200,
            2000
        )
        .is_err());
        let t200 = timing_benchmark(&Decider::GridSearch, &inputs, &grid200, 3000).unwrap();
        let t400 = timing_benchmark(&Decider::GridSearch, &inputs, &grid400, 3000).unwrap();
        assert!(
            t400.per_call_ns > t200.per_call_ns,
            "grid 400 ({} ns) should cost more than grid 200 ({} ns)",
            t400.per_call_ns,
            t200.per_call_ns
        );
    }
}
