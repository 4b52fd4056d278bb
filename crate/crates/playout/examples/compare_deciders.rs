//! Generates a bursty synthetic trace and benchmarks all six playout
//! deciders on it.
//!
//! ```sh
//! cargo run --example compare_deciders
//! ```

use playout::deciders::BaselineKind;
use playout::quality::{GilbertParams, ImpairmentConfig};
use playout::sim::{compare, Decider, SegmentationPolicy, SimConfig};
use playout::trace::{generate_trace, GenConfig, SpikeModel, TailModel};

fn main() -> playout::Result<()> {
    let trace = generate_trace(&GenConfig {
        seed: 7,
        n_packets: 8_000,
        interval_ms: 30.0,
        base_delay_ms: 40.0,
        tail: TailModel::Pareto { scale_ms: 15.0, shape: 1.4 },
        loss: GilbertParams { p: 0.02, q: 0.4 },
        spikes: Some(SpikeModel { rate: 0.004, magnitude_ms: 700.0, decay: 0.8 }),
    })?;

    let sim = SimConfig {
        impairment: ImpairmentConfig::new(93.2, 11.0, 19.0)?,
        segmentation: SegmentationPolicy::OnOffModel {
            seed: 1,
            mean_on_ms: 1000.0,
            mean_off_ms: 500.0,
        },
        ..SimConfig::default()
    };

    let deciders = [
        Decider::Proposed,
        Decider::GridSearch,
        Decider::Baseline(BaselineKind::ExpAvg),
        Decider::Baseline(BaselineKind::FastExpAvg),
        Decider::Baseline(BaselineKind::MinDelay),
        Decider::Baseline(BaselineKind::SpikeDetect),
    ];
    let table = compare(&trace, &deciders, &sim)?;

    println!(
        "{:<10} {:>6} {:>8} {:>8} {:>8} {:>9}",
        "decider", "e-mos", "loss%", "net%", "late%", "mean-pd"
    );
    for run in &table.rows {
        println!(
            "{:<10} {:>6.3} {:>8.3} {:>8.3} {:>8.3} {:>9.1}",
            run.decider,
            run.totals.e_mos_avg,
            run.totals.loss_pct,
            run.totals.network_loss_pct,
            run.totals.late_loss_pct,
            run.totals.mean_pd_ms,
        );
    }
    Ok(())
}
