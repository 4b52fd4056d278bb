//! Batch command-line front end: synthetic trace generation, delay-model
//! fitting, playout-delay optimization, algorithm comparison, plot-data
//! sweeps and timing benchmarks. Tabular results go to stdout in TSV, CSV
//! or JSON-lines form; human-readable notes go to stderr.

// `!(x > 0)` guards deliberately reject NaN, unlike `x <= 0`.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::fmt::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use playout::deciders::{
    closed_form_playout, grid_search_playout, inputs_from_window, objective, BaselineKind,
    GridSpec, OptimizerInputs,
};
use playout::delay::{
    estimate_gilbert, fit_alternatives, fit_pareto_tail, predicted_loss, window_median,
    DelayWindow, FittedDistribution, GilbertEstimate, DEFAULT_WINDOW_CAPACITY,
};
use playout::quality::{
    burst_ratio, codec_by_name, idd_g107, idd_simplified, ie_eff, r_factor, r_to_mos,
    GilbertParams, IddVariant, ImpairmentConfig, CODEC_TABLE,
};
use playout::sim::{
    compare, timing_benchmark, Decider, RunResult, SegmentationPolicy, SimConfig,
};
use playout::trace::{
    generate_trace, parse_trace, write_trace, GenConfig, SpikeModel, TailModel, Trace,
};
use playout::Error;

#[derive(Parser)]
#[command(
    name = "playout",
    version,
    about = "Quality-based VoIP playout delay toolkit",
    after_help = "Exit codes: 0 success, 1 usage/configuration error, \
                  2 data/parse error, 3 degeneracy warnings under --strict."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Output format for tabular data on stdout.
    #[arg(long, global = true, value_enum, default_value_t = Format::Tsv)]
    format: Format,

    /// Write the primary output to this file instead of stdout.
    #[arg(short, long, global = true)]
    output: Option<PathBuf>,

    /// Escalate numerical-degeneracy warnings to exit code 3.
    #[arg(long, global = true)]
    strict: bool,

    /// Print the effective configuration to stderr before running.
    #[arg(long, global = true)]
    show_config: bool,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Tsv,
    Csv,
    #[value(name = "json-lines")]
    JsonLines,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a reproducible synthetic probe trace.
    Gen(GenArgs),
    /// Fit the delay and loss models to a trace window and report them.
    Fit(FitArgs),
    /// Compute the optimal playout delay for fitted or explicit parameters.
    Optimize(OptimizeArgs),
    /// Run several playout algorithms over one trace and tabulate quality.
    Compare(CompareArgs),
    /// Emit impairment-curve and objective sweep data for plotting.
    Curves(CurvesArgs),
    /// Time the closed-form decider against the grid search.
    Bench(BenchArgs),
}

#[derive(Args)]
struct GenArgs {
    /// Seed for the trace's random source.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Number of probe packets.
    #[arg(long = "n", default_value_t = 10_000)]
    n_packets: usize,
    /// Spacing between probe packets, ms.
    #[arg(long, default_value_t = 30.0)]
    interval: f64,
    /// Fixed propagation delay under the jitter, ms.
    #[arg(long, default_value_t = 40.0)]
    base: f64,
    /// Delay tail model: `pareto:<scale>,<shape>` | `lognormal:<mu>,<sigma>` |
    /// `exponential:<rate-per-ms>`.
    #[arg(long, default_value = "pareto:20,2")]
    tail: String,
    /// Gilbert loss chain as `<p>,<q>` (received->lost, lost->received).
    #[arg(long, default_value = "0,1")]
    loss: String,
    /// Optional spike process as `<rate>,<magnitude-ms>,<decay>`.
    #[arg(long)]
    spikes: Option<String>,
}

#[derive(Args)]
struct FitArgs {
    /// Trace file (.ptrace.csv).
    trace: PathBuf,
    /// Fit over the last N packets.
    #[arg(long, default_value_t = DEFAULT_WINDOW_CAPACITY)]
    window: usize,
}

#[derive(Args)]
struct OptimizeArgs {
    /// Fit the model to this trace instead of passing parameters.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Window size used with --trace.
    #[arg(long, default_value_t = DEFAULT_WINDOW_CAPACITY)]
    window: usize,
    /// Pareto tail scale (the delay median), ms.
    #[arg(long)]
    scale: Option<f64>,
    /// Pareto tail shape k.
    #[arg(long)]
    shape: Option<f64>,
    /// Network loss probability (0..=1).
    #[arg(long = "rho-n", default_value_t = 0.0)]
    rho_n: f64,
    /// Burst ratio of the loss process.
    #[arg(long = "burst-r", default_value_t = 1.0)]
    burst_r: f64,
    #[command(flatten)]
    codec: CodecArgs,
    #[command(flatten)]
    grid: GridArgs,
}

#[derive(Args)]
struct CompareArgs {
    /// Trace file (.ptrace.csv).
    trace: PathBuf,
    /// Comma-separated algorithms: proposed, p-optimum, exp-avg, f-exp-avg,
    /// min-del, spike-det, `fixed:<ms>`.
    #[arg(long, default_value = "proposed,p-optimum,exp-avg,f-exp-avg,min-del,spike-det")]
    algorithms: String,
    /// Estimator window size, packets.
    #[arg(long, default_value_t = DEFAULT_WINDOW_CAPACITY)]
    window: usize,
    /// Voice frame interval, ms.
    #[arg(long = "frame-interval", default_value_t = 30.0)]
    frame_interval: f64,
    /// Talkspurt segmentation: `auto` | `spurt-column` | `gap:<ms>` |
    /// `onoff:<seed>,<mean-on-ms>,<mean-off-ms>`.
    #[arg(long, default_value = "auto")]
    segmentation: String,
    /// Drop talkspurts shorter than this many ms.
    #[arg(long = "min-spurt")]
    min_spurt: Option<f64>,
    /// Extra fixed pipeline delay added to every decision, ms.
    #[arg(long = "pd-offset", default_value_t = 0.0)]
    pd_offset: f64,
    /// Also emit one row per talkspurt per algorithm.
    #[arg(long)]
    detail: bool,
    #[command(flatten)]
    codec: CodecArgs,
    #[command(flatten)]
    grid: GridArgs,
}

#[derive(Args)]
struct CurvesArgs {
    /// Sweep start, ms.
    #[arg(long, default_value_t = 150.0)]
    lo: f64,
    /// Sweep end, ms (inclusive).
    #[arg(long, default_value_t = 500.0)]
    hi: f64,
    /// Sweep step, ms.
    #[arg(long, default_value_t = 1.0)]
    step: f64,
    /// Pareto tail scale; with --shape adds loss/objective columns.
    #[arg(long)]
    scale: Option<f64>,
    /// Pareto tail shape k.
    #[arg(long)]
    shape: Option<f64>,
    /// Network loss probability (0..=1).
    #[arg(long = "rho-n", default_value_t = 0.0)]
    rho_n: f64,
    /// Burst ratio of the loss process.
    #[arg(long = "burst-r", default_value_t = 1.0)]
    burst_r: f64,
    #[command(flatten)]
    codec: CodecArgs,
}

#[derive(Args)]
struct BenchArgs {
    /// Repetitions per decider (at least 1000).
    #[arg(long, default_value_t = 100_000)]
    repetitions: u32,
    /// Pareto tail scale of the benchmark inputs, ms.
    #[arg(long, default_value_t = 60.0)]
    scale: f64,
    /// Pareto tail shape of the benchmark inputs.
    #[arg(long, default_value_t = 1.5)]
    shape: f64,
    /// Network loss probability of the benchmark inputs.
    #[arg(long = "rho-n", default_value_t = 0.01)]
    rho_n: f64,
    /// Burst ratio of the benchmark inputs.
    #[arg(long = "burst-r", default_value_t = 1.5)]
    burst_r: f64,
    #[command(flatten)]
    codec: CodecArgs,
    #[command(flatten)]
    grid: GridArgs,
}

#[derive(Args)]
struct CodecArgs {
    /// Codec name from the built-in G.113 table (see README).
    #[arg(long, default_value = "g711")]
    codec: String,
    /// Override the codec's equipment impairment Ie, R-units.
    #[arg(long)]
    ie: Option<f64>,
    /// Override the codec's loss robustness Bpl.
    #[arg(long)]
    bpl: Option<f64>,
    /// Basic signal-to-noise ratio R0.
    #[arg(long, default_value_t = 93.2)]
    r0: f64,
    /// Delay impairment curve used for scoring.
    #[arg(long = "idd-variant", value_enum, default_value_t = IddArg::Simplified)]
    idd_variant: IddArg,
    /// Feed raw burst-ratio estimates through instead of flooring at 1.
    #[arg(long = "no-burst-floor")]
    no_burst_floor: bool,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum IddArg {
    Simplified,
    G107,
}

#[derive(Args)]
struct GridArgs {
    /// Grid-search candidate count.
    #[arg(long = "grid-points", default_value_t = 200)]
    grid_points: usize,
    /// Grid-search lower bound, ms.
    #[arg(long = "grid-lo", default_value_t = 150.0)]
    grid_lo: f64,
    /// Grid-search upper bound, ms.
    #[arg(long = "grid-hi", default_value_t = 5000.0)]
    grid_hi: f64,
}

impl CodecArgs {
    fn impairment(&self) -> Result<ImpairmentConfig<f64>, Error> {
        let entry = codec_by_name(&self.codec).ok_or_else(|| {
            Error::Config(format!(
                "unknown codec '{}'; known: {}",
                self.codec,
                CODEC_TABLE
                    .iter()
                    .map(|e| e.name)
                    .collect::<Vec<_>>()
                    .join(", ")
            ))
        })?;
        let mut cfg = ImpairmentConfig::new(
            self.r0,
            self.ie.unwrap_or(entry.ie),
            self.bpl.unwrap_or(entry.bpl),
        )?;
        cfg.idd_variant = match self.idd_variant {
            IddArg::Simplified => IddVariant::Simplified,
            IddArg::G107 => IddVariant::G107Full,
        };
        cfg.floor_burst_ratio = !self.no_burst_floor;
        Ok(cfg)
    }
}

impl GridArgs {
    fn spec(&self) -> Result<GridSpec<f64>, Error> {
        GridSpec::new(self.grid_lo, self.grid_hi, self.grid_points)
    }
}

/// Rows of one output table plus its column names.
struct Table {
    columns: Vec<&'static str>,
    rows: Vec<Vec<String>>,
}

impl Table {
    fn render(&self, format: Format) -> String {
        let mut out = String::new();
        match format {
            Format::Tsv | Format::Csv => {
                let sep = if format == Format::Tsv { "\t" } else { "," };
                out.push_str(&self.columns.join(sep));
                out.push('\n');
                for row in &self.rows {
                    out.push_str(&row.join(sep));
                    out.push('\n');
                }
            }
            Format::JsonLines => {
                for row in &self.rows {
                    let mut map = serde_json::Map::new();
                    for (col, val) in self.columns.iter().zip(row) {
                        // Numeric-looking values pass through as numbers.
                        let v = if let Ok(n) = val.parse::<i64>() {
                            serde_json::json!(n)
                        } else if let Ok(n) = val.parse::<f64>() {
                            if n.is_finite() {
                                serde_json::json!(n)
                            } else {
                                serde_json::Value::String(val.clone())
                            }
                        } else {
                            serde_json::Value::String(val.clone())
                        };
                        map.insert((*col).to_string(), v);
                    }
                    let _ = writeln!(out, "{}", serde_json::Value::Object(map));
                }
            }
        }
        out
    }
}

fn fmt(v: f64) -> String {
    format!("{v:.6}")
}

fn parse_pair(text: &str, what: &str) -> Result<(f64, f64), Error> {
    let parts: Vec<&str> = text.split(',').collect();
    if parts.len() != 2 {
        return Err(Error::Config(format!(
            "{what} expects '<a>,<b>', got '{text}'"
        )));
    }
    let a = parts[0]
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("bad {what} component '{}'", parts[0])))?;
    let b = parts[1]
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("bad {what} component '{}'", parts[1])))?;
    Ok((a, b))
}

fn parse_tail(text: &str) -> Result<TailModel, Error> {
    let (kind, params) = text.split_once(':').ok_or_else(|| {
        Error::Config(format!("tail expects '<kind>:<params>', got '{text}'"))
    })?;
    match kind {
        "pareto" => {
            let (scale_ms, shape) = parse_pair(params, "pareto tail")?;
            Ok(TailModel::Pareto { scale_ms, shape })
        }
        "lognormal" => {
            let (mu, sigma) = parse_pair(params, "lognormal tail")?;
            Ok(TailModel::LogNormal { mu, sigma })
        }
        "exponential" | "exp" => {
            let rate: f64 = params
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("bad exponential rate '{params}'")))?;
            Ok(TailModel::Exponential { rate_per_ms: rate })
        }
        other => Err(Error::Config(format!(
            "unknown tail model '{other}' (pareto, lognormal, exponential)"
        ))),
    }
}

fn parse_spikes(text: &str) -> Result<SpikeModel, Error> {
    let parts: Vec<&str> = text.split(',').collect();
    if parts.len() != 3 {
        return Err(Error::Config(format!(
            "spikes expects '<rate>,<magnitude-ms>,<decay>', got '{text}'"
        )));
    }
    let num = |s: &str| -> Result<f64, Error> {
        s.trim()
            .parse()
            .map_err(|_| Error::Config(format!("bad spike component '{s}'")))
    };
    Ok(SpikeModel {
        rate: num(parts[0])?,
        magnitude_ms: num(parts[1])?,
        decay: num(parts[2])?,
    })
}

fn parse_segmentation(text: &str, trace: &Trace) -> Result<SegmentationPolicy, Error> {
    if text == "auto" {
        return Ok(if trace.has_spurt_ids() {
            SegmentationPolicy::ExplicitColumn
        } else {
            SegmentationPolicy::OnOffModel {
                seed: 1,
                mean_on_ms: 1000.0,
                mean_off_ms: 500.0,
            }
        });
    }
    if text == "spurt-column" {
        return Ok(SegmentationPolicy::ExplicitColumn);
    }
    if let Some(ms) = text.strip_prefix("gap:") {
        let gap_ms: f64 = ms
            .parse()
            .map_err(|_| Error::Config(format!("bad gap threshold '{ms}'")))?;
        return Ok(SegmentationPolicy::GapThreshold { gap_ms });
    }
    if let Some(rest) = text.strip_prefix("onoff:") {
        let parts: Vec<&str> = rest.split(',').collect();
        if parts.len() != 3 {
            return Err(Error::Config(
                "onoff expects 'onoff:<seed>,<mean-on-ms>,<mean-off-ms>'".into(),
            ));
        }
        let seed: u64 = parts[0]
            .parse()
            .map_err(|_| Error::Config(format!("bad on/off seed '{}'", parts[0])))?;
        let on: f64 = parts[1]
            .parse()
            .map_err(|_| Error::Config(format!("bad mean-on '{}'", parts[1])))?;
        let off: f64 = parts[2]
            .parse()
            .map_err(|_| Error::Config(format!("bad mean-off '{}'", parts[2])))?;
        return Ok(SegmentationPolicy::OnOffModel {
            seed,
            mean_on_ms: on,
            mean_off_ms: off,
        });
    }
    Err(Error::Config(format!(
        "unknown segmentation '{text}' (auto, spurt-column, gap:<ms>, onoff:<seed>,<on>,<off>)"
    )))
}

fn parse_algorithms(text: &str) -> Result<Vec<Decider>, Error> {
    const KNOWN: &str = "proposed, p-optimum, exp-avg, f-exp-avg, min-del, spike-det, fixed:<ms>";
    text.split(',')
        .map(|name| match name.trim() {
            "proposed" => Ok(Decider::Proposed),
            "p-optimum" => Ok(Decider::GridSearch),
            "exp-avg" => Ok(Decider::Baseline(BaselineKind::ExpAvg)),
            "f-exp-avg" => Ok(Decider::Baseline(BaselineKind::FastExpAvg)),
            "min-del" => Ok(Decider::Baseline(BaselineKind::MinDelay)),
            "spike-det" => Ok(Decider::Baseline(BaselineKind::SpikeDetect)),
            other => {
                if let Some(ms) = other.strip_prefix("fixed:") {
                    let pd: f64 = ms
                        .parse()
                        .map_err(|_| Error::Config(format!("bad fixed playout delay '{ms}'")))?;
                    Ok(Decider::Fixed(pd))
                } else {
                    Err(Error::Config(format!(
                        "unknown algorithm '{other}'; valid: {KNOWN}"
                    )))
                }
            }
        })
        .collect()
}

fn load_trace(path: &PathBuf) -> Result<Trace, Error> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    parse_trace(&text)
}

fn window_from_trace(trace: &Trace, capacity: usize) -> Result<DelayWindow<f64>, Error> {
    let mut window = DelayWindow::new(capacity)?;
    for rec in trace.records() {
        match rec.delay_ms() {
            Some(d) => window.push_received(d.max(1e-9))?,
            None => window.push_lost(),
        }
    }
    Ok(window)
}

struct CmdOutput {
    text: String,
    warnings: Vec<String>,
}

fn run(cli: &Cli) -> Result<CmdOutput, Error> {
    match &cli.command {
        Command::Gen(args) => cmd_gen(cli, args),
        Command::Fit(args) => cmd_fit(cli, args),
        Command::Optimize(args) => cmd_optimize(cli, args),
        Command::Compare(args) => cmd_compare(cli, args),
        Command::Curves(args) => cmd_curves(cli, args),
        Command::Bench(args) => cmd_bench(cli, args),
    }
}

fn show_config(cli: &Cli, entries: &[(&str, String)]) {
    if cli.show_config {
        for (key, value) in entries {
            eprintln!("config {key} = {value}");
        }
    }
}

fn cmd_gen(cli: &Cli, args: &GenArgs) -> Result<CmdOutput, Error> {
    let cfg = GenConfig {
        seed: args.seed,
        n_packets: args.n_packets,
        interval_ms: args.interval,
        base_delay_ms: args.base,
        tail: parse_tail(&args.tail)?,
        loss: {
            let (p, q) = parse_pair(&args.loss, "loss")?;
            GilbertParams { p, q }
        },
        spikes: args.spikes.as_deref().map(parse_spikes).transpose()?,
    };
    show_config(
        cli,
        &[
            ("seed", cfg.seed.to_string()),
            ("n_packets", cfg.n_packets.to_string()),
            ("interval_ms", cfg.interval_ms.to_string()),
            ("base_delay_ms", cfg.base_delay_ms.to_string()),
        ],
    );
    let trace = generate_trace(&cfg)?;
    Ok(CmdOutput {
        text: write_trace(&trace),
        warnings: Vec::new(),
    })
}

fn cmd_fit(cli: &Cli, args: &FitArgs) -> Result<CmdOutput, Error> {
    show_config(cli, &[("window", args.window.to_string())]);
    let trace = load_trace(&args.trace)?;
    if trace.is_empty() {
        return Err(Error::InsufficientData("trace holds no packets".into()));
    }
    let window = window_from_trace(&trace, args.window)?;
    let median = window_median(&window)?;
    let fit = fit_pareto_tail(&window)?;
    let gilbert: GilbertEstimate<f64> = estimate_gilbert(window.flags())?;
    let burst = burst_ratio(&gilbert.params)?;
    let alternatives = fit_alternatives(&window)?;

    let mut rows = vec![
        vec!["packets".into(), window.len().to_string()],
        vec!["received".into(), window.received_count().to_string()],
        vec!["median_ms".into(), fmt(median)],
        vec!["pareto_scale_ms".into(), fmt(fit.scale)],
        vec!["pareto_shape".into(), fmt(fit.shape)],
        vec!["pareto_n_tail".into(), fit.n_tail.to_string()],
        vec!["rho_n".into(), fmt(window.network_loss_fraction())],
        vec!["gilbert_p".into(), fmt(gilbert.params.p)],
        vec!["gilbert_q".into(), fmt(gilbert.params.q)],
        vec!["burst_ratio".into(), fmt(burst)],
    ];
    let mut best = ("", f64::INFINITY);
    for alt in &alternatives {
        let name = alt.model.name();
        rows.push(vec![format!("ks_{name}"), fmt(alt.ks_statistic)]);
        let params = match alt.model {
            FittedDistribution::Pareto { scale, shape }
            | FittedDistribution::Weibull { scale, shape } => {
                format!("scale={scale:.6};k={shape:.6}")
            }
            FittedDistribution::LogNormal { mu, sigma } => {
                format!("mu={mu:.6};sigma={sigma:.6}")
            }
            FittedDistribution::Exponential { rate } => format!("rate={rate:.6}"),
        };
        rows.push(vec![format!("params_{name}"), params]);
        if alt.ks_statistic < best.1 {
            best = (name, alt.ks_statistic);
        }
    }
    rows.push(vec!["ks_best".into(), best.0.into()]);

    let table = Table {
        columns: vec!["field", "value"],
        rows,
    };
    Ok(CmdOutput {
        text: table.render(cli.format),
        warnings: Vec::new(),
    })
}

fn cmd_optimize(cli: &Cli, args: &OptimizeArgs) -> Result<CmdOutput, Error> {
    let impairment = args.codec.impairment()?;
    let grid = args.grid.spec()?;
    let mut warnings = Vec::new();

    let inputs: OptimizerInputs<f64> = if let Some(path) = &args.trace {
        if args.scale.is_some() || args.shape.is_some() {
            return Err(Error::Config(
                "pass either --trace or explicit --scale/--shape, not both".into(),
            ));
        }
        let trace = load_trace(path)?;
        let window = window_from_trace(&trace, args.window)?;
        inputs_from_window(&window, impairment)?
    } else {
        let scale = args
            .scale
            .ok_or_else(|| Error::Config("need --scale and --shape (or --trace)".into()))?;
        let shape = args
            .shape
            .ok_or_else(|| Error::Config("need --scale and --shape (or --trace)".into()))?;
        OptimizerInputs::new(
            playout::delay::ParetoFit { scale, shape, n_tail: 0 },
            args.rho_n,
            args.burst_r,
            impairment,
        )?
    };
    show_config(
        cli,
        &[
            ("scale_ms", fmt(inputs.fit.scale)),
            ("shape", fmt(inputs.fit.shape)),
            ("rho_n", fmt(inputs.rho_n)),
            ("burst_r", fmt(inputs.burst_r)),
            ("r0", fmt(impairment.r0)),
            ("ie", fmt(impairment.ie)),
            ("bpl", fmt(impairment.bpl)),
            ("grid_points", grid.points.to_string()),
        ],
    );

    let closed = closed_form_playout(&inputs)?;
    let gridded = grid_search_playout(&inputs, &grid)?;
    let model_pd = closed.max(inputs.fit.scale);
    let loss = predicted_loss(&inputs.fit, inputs.rho_n, model_pd)?;
    let r = r_factor(closed, loss, inputs.burst_r, &impairment)?;
    let mos = r_to_mos(r);
    // One multiplicative grid step of slack between the two answers.
    let step = (grid.hi / grid.lo).powf(1.0 / (grid.points as f64 - 1.0));
    if (closed - gridded).abs() > (step - 1.0) * closed.max(gridded) + 1e-9 {
        warnings.push(format!(
            "closed form {closed:.3} and grid check {gridded:.3} differ by more than one grid step"
        ));
    }

    let table = Table {
        columns: vec!["field", "value"],
        rows: vec![
            vec!["closed_form_pd_ms".into(), fmt(closed)],
            vec!["grid_check_pd_ms".into(), fmt(gridded)],
            vec!["predicted_loss_pct".into(), fmt(loss)],
            vec!["r_factor".into(), fmt(r)],
            vec!["e_mos".into(), fmt(mos)],
        ],
    };
    Ok(CmdOutput {
        text: table.render(cli.format),
        warnings,
    })
}

const SUMMARY_COLUMNS: &[&str] = &[
    "algorithm",
    "e_mos",
    "loss_pct",
    "network_loss_pct",
    "late_loss_pct",
    "mean_pd_ms",
    "measured_burst_r",
];

fn summary_row(run: &RunResult) -> Vec<String> {
    vec![
        run.decider.clone(),
        fmt(run.totals.e_mos_avg),
        fmt(run.totals.loss_pct),
        fmt(run.totals.network_loss_pct),
        fmt(run.totals.late_loss_pct),
        fmt(run.totals.mean_pd_ms),
        fmt(run.totals.measured_burst_r),
    ]
}

fn cmd_compare(cli: &Cli, args: &CompareArgs) -> Result<CmdOutput, Error> {
    let trace = load_trace(&args.trace)?;
    let deciders = parse_algorithms(&args.algorithms)?;
    let sim = SimConfig {
        window_capacity: args.window,
        frame_interval_ms: args.frame_interval,
        impairment: args.codec.impairment()?,
        segmentation: parse_segmentation(&args.segmentation, &trace)?,
        grid: args.grid.spec()?,
        min_spurt_ms: args.min_spurt,
        pd_offset_ms: args.pd_offset,
    };
    show_config(
        cli,
        &[
            ("window", sim.window_capacity.to_string()),
            ("frame_interval_ms", sim.frame_interval_ms.to_string()),
            ("segmentation", format!("{:?}", sim.segmentation)),
            ("grid_points", sim.grid.points.to_string()),
            ("r0", fmt(sim.impairment.r0)),
            ("ie", fmt(sim.impairment.ie)),
            ("bpl", fmt(sim.impairment.bpl)),
        ],
    );
    let result = compare(&trace, &deciders, &sim)?;

    let mut warnings = Vec::new();
    for run in &result.rows {
        warnings.extend(run.warnings.iter().cloned());
    }

    let summary = Table {
        columns: SUMMARY_COLUMNS.to_vec(),
        rows: result.rows.iter().map(summary_row).collect(),
    };
    let mut text = summary.render(cli.format);
    if args.detail {
        let detail = Table {
            columns: vec![
                "algorithm",
                "talkspurt",
                "packets",
                "pd_ms",
                "network_lost",
                "late_lost",
                "on_time",
                "r_factor",
                "e_mos",
            ],
            rows: result
                .rows
                .iter()
                .flat_map(|run| {
                    run.per_talkspurt.iter().map(|ts| {
                        vec![
                            run.decider.clone(),
                            ts.spurt_id.to_string(),
                            ts.packet_count.to_string(),
                            fmt(ts.pd_ms),
                            ts.network_lost.to_string(),
                            ts.late_lost.to_string(),
                            ts.received_on_time.to_string(),
                            fmt(ts.r),
                            fmt(ts.mos),
                        ]
                    })
                })
                .collect(),
        };
        if cli.format != Format::JsonLines {
            text.push('\n');
        }
        text.push_str(&detail.render(cli.format));
    }
    Ok(CmdOutput { text, warnings })
}

fn cmd_curves(cli: &Cli, args: &CurvesArgs) -> Result<CmdOutput, Error> {
    if !(args.step > 0.0) || !(args.lo > 0.0) || args.hi < args.lo {
        return Err(Error::Config(
            "curves need 0 < lo <= hi and a positive step".into(),
        ));
    }
    let impairment = args.codec.impairment()?;
    let with_objective = match (args.scale, args.shape) {
        (Some(scale), Some(shape)) => Some(OptimizerInputs::new(
            playout::delay::ParetoFit { scale, shape, n_tail: 0 },
            args.rho_n,
            args.burst_r,
            impairment,
        )?),
        (None, None) => None,
        _ => {
            return Err(Error::Config(
                "objective columns need both --scale and --shape".into(),
            ))
        }
    };
    show_config(
        cli,
        &[
            ("lo", fmt(args.lo)),
            ("hi", fmt(args.hi)),
            ("step", fmt(args.step)),
        ],
    );

    let mut columns = vec!["pd_ms", "idd_simplified", "idd_g107"];
    if with_objective.is_some() {
        columns.extend(["predicted_loss_pct", "ie_eff", "objective"]);
    }
    let steps = ((args.hi - args.lo) / args.step + 1e-9).floor() as usize;
    let mut rows = Vec::with_capacity(steps + 1);
    for i in 0..=steps {
        let pd = args.lo + args.step * i as f64;
        let mut row = vec![fmt(pd), fmt(idd_simplified(pd)?), fmt(idd_g107(pd)?)];
        if let Some(inputs) = &with_objective {
            let model_pd = pd.max(inputs.fit.scale);
            let loss = predicted_loss(&inputs.fit, inputs.rho_n, model_pd)?;
            row.push(fmt(loss));
            row.push(fmt(ie_eff(loss, inputs.burst_r, &impairment)?));
            row.push(fmt(objective(pd, inputs)?));
        }
        rows.push(row);
    }
    let table = Table { columns, rows };
    Ok(CmdOutput {
        text: table.render(cli.format),
        warnings: Vec::new(),
    })
}

fn cmd_bench(cli: &Cli, args: &BenchArgs) -> Result<CmdOutput, Error> {
    let impairment = args.codec.impairment()?;
    let grid = args.grid.spec()?;
    let inputs = OptimizerInputs::new(
        playout::delay::ParetoFit {
            scale: args.scale,
            shape: args.shape,
            n_tail: 0,
        },
        args.rho_n,
        args.burst_r,
        impairment,
    )?;
    show_config(
        cli,
        &[
            ("repetitions", args.repetitions.to_string()),
            ("grid_points", grid.points.to_string()),
        ],
    );
    // The grid search costs roughly `points` times more per call; scale its
    // repetition count down (never below the 1000-call minimum).
    let grid_reps = (args.repetitions / 20).max(1000);
    let closed = timing_benchmark(&Decider::Proposed, &inputs, &grid, args.repetitions)?;
    let gridded = timing_benchmark(&Decider::GridSearch, &inputs, &grid, grid_reps)?;
    let ratio = gridded.per_call_ns / closed.per_call_ns;

    let table = Table {
        columns: vec!["decider", "repetitions", "per_call_ns", "speedup"],
        rows: vec![
            vec![
                "proposed".into(),
                closed.repetitions.to_string(),
                fmt(closed.per_call_ns),
                fmt(ratio),
            ],
            vec![
                "p-optimum".into(),
                gridded.repetitions.to_string(),
                fmt(gridded.per_call_ns),
                fmt(1.0),
            ],
        ],
    };
    Ok(CmdOutput {
        text: table.render(cli.format),
        warnings: Vec::new(),
    })
}

fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::Config(_) | Error::Domain(_) => 1,
        Error::Parse { .. }
        | Error::Validation(_)
        | Error::InsufficientData(_)
        | Error::Degenerate(_) => 2,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(output) => {
            for warning in &output.warnings {
                eprintln!("warning: {warning}");
            }
            if let Some(path) = &cli.output {
                if let Err(e) = std::fs::write(path, &output.text) {
                    eprintln!("error: cannot write {}: {e}", path.display());
                    return ExitCode::from(1);
                }
            } else {
                print!("{}", output.text);
            }
            if cli.strict && !output.warnings.is_empty() {
                eprintln!(
                    "error: {} degeneracy warning(s) escalated by --strict",
                    output.warnings.len()
                );
                return ExitCode::from(3);
            }
            ExitCode::SUCCESS
        }
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code_for(&err))
        }
    }
}
