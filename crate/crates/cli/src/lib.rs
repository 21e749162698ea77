//! The `rhhh` command: `run`, `compare` and `bench`.
//!
//! Output schemas (format version 1):
//!
//! * `run --output json`: `{"version", "config", "psi", "packets", "candidates": [{"prefix", "lower", "upper", "conditioned"}]}`
//! * `run --output csv`: `#`-prefixed header lines, then `prefix,lower,upper,conditioned`
//! * `compare --output json`: `{"version", "config", "psi", "runs": [EvalReport + "seed"], "mean": EvalReport}`
//! * `compare --output csv`: `seed,` followed by the report columns; the last row has seed `mean`
//! * `bench --output json`: `{"version", "config", "psi", "packets", "repeats", "pps": [...], "mean_pps", "stddev_pps"}`
//!
//! Exit codes: 0 on success, 1 on I/O or malformed trace, 2 on bad configuration.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rhhh::experiment::run_seeds;
use rhhh::ingest::TraceSource;
use rhhh::metrics::aggregate;
use rhhh::sketch::SketchInfo;
use rhhh::{
    count_exact, Algorithm, ConfidenceMode, ConfidenceParams, Error, EvalReport, HhhCandidate, HhhSketch,
    HierarchyKind, HierarchySpec, PacketKey, SketchConfig,
};
use serde::Serialize;

pub const FORMAT_VERSION: u32 = 1;
pub const BENCH_REPEATS: usize = 5;
pub const MIN_BENCH_PACKETS: u64 = 100_000;

#[derive(Debug, Parser)]
#[command(
    name = "rhhh",
    version,
    about = "Hierarchical heavy hitters with constant-time updates"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Stream a trace through a sketch and print the HHH candidates.
    Run(RunArgs),
    /// Score a sketch against the exact answer, optionally over several seeds.
    Compare {
        #[command(flatten)]
        args: RunArgs,
        /// Independent runs, seeded `seed`, `seed + 1`, ...
        #[arg(long, default_value_t = 1)]
        runs: u64,
    },
    /// Measure update throughput on an in-memory stream.
    Bench {
        #[command(flatten)]
        args: RunArgs,
        /// Packets per repeat; synthetic sources are resized to this length.
        #[arg(long, default_value_t = 10_000_000)]
        packets: u64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutputFormat {
    Json,
    Csv,
    Text,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ConfidenceArg {
    Analysis,
    Literal,
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    #[arg(long, default_value = "src-byte")]
    pub hierarchy: String,
    #[arg(long, default_value = "rhhh")]
    pub algorithm: String,
    #[arg(long, default_value_t = 0.01)]
    pub epsilon: f64,
    #[arg(long, default_value_t = 0.05)]
    pub delta: f64,
    /// Sampling share of epsilon; defaults to half.
    #[arg(long)]
    pub epsilon_s: Option<f64>,
    /// Sampling failure probability; defaults to a quarter of delta.
    #[arg(long)]
    pub delta_s: Option<f64>,
    #[arg(long, default_value_t = 0.1)]
    pub theta: f64,
    /// V as a multiple of H.
    #[arg(long, default_value_t = 1)]
    pub v_ratio: u64,
    /// Sampling draws per packet.
    #[arg(long, default_value_t = 1)]
    pub r: u32,
    #[arg(long, env = "RHHH_SEED", default_value_t = 1)]
    pub seed: u64,
    /// csv:PATH, zipf:alpha=A,universe=U,n=N[,seed=S] or uniform:universe=U,n=N[,seed=S]
    #[arg(long, default_value = "zipf:alpha=1,universe=100000,n=1000000,seed=1")]
    pub source: String,
    #[arg(long, value_enum, default_value_t = OutputFormat::Text)]
    pub output: OutputFormat,
    #[arg(long, value_enum, default_value_t = ConfidenceArg::Analysis)]
    pub confidence: ConfidenceArg,
    /// Also test unmonitored generalizations of emitted prefixes.
    #[arg(long)]
    pub synthetic_candidates: bool,
}

/// A validated configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub sketch: SketchConfig,
    pub theta: f64,
    pub seed: u64,
    pub source: TraceSource,
    pub output: OutputFormat,
}

impl RunConfig {
    pub fn from_args(a: &RunArgs) -> rhhh::Result<Self> {
        let hierarchy: HierarchyKind = a.hierarchy.parse()?;
        let algorithm: Algorithm = a.algorithm.parse()?;
        if !(a.theta > 0.0 && a.theta < 1.0) {
            return Err(Error::Usage(format!("theta must be in (0, 1), got {}", a.theta)));
        }
        if a.v_ratio < 1 {
            return Err(Error::Usage("v-ratio must be at least 1".into()));
        }
        if a.r < 1 {
            return Err(Error::Usage("r must be at least 1".into()));
        }
        let params = if a.epsilon_s.is_some() || a.delta_s.is_some() {
            ConfidenceParams::with_sampling_share(
                a.epsilon,
                a.delta,
                a.epsilon_s.unwrap_or(a.epsilon / 2.0),
                a.delta_s.unwrap_or(a.delta / 4.0),
            )?
        } else {
            ConfidenceParams::from_totals(a.epsilon, a.delta)?
        };
        let mut sketch = SketchConfig::new(hierarchy, algorithm, params);
        sketch.v_ratio = a.v_ratio;
        sketch.r = a.r;
        sketch.confidence = match a.confidence {
            ConfidenceArg::Analysis => ConfidenceMode::Analysis,
            ConfidenceArg::Literal => ConfidenceMode::Literal,
        };
        sketch.synthetic_candidates = a.synthetic_candidates;
        // Surfaces V < H and similar problems before any trace is read.
        sketch.build(a.seed)?;
        Ok(RunConfig {
            sketch,
            theta: a.theta,
            seed: a.seed,
            source: a.source.parse()?,
            output: a.output,
        })
    }

    fn dims(&self) -> u8 {
        self.sketch.hierarchy.dims()
    }

    pub fn load(&self) -> rhhh::Result<Vec<PacketKey>> {
        self.source.load(self.dims())
    }
}

/// Echoed configuration; together with the binary version it reproduces a run.
#[derive(Debug, Clone, Serialize)]
pub struct ConfigEcho {
    #[serde(flatten)]
    pub sketch: SketchInfo,
    pub v_ratio: u64,
    pub theta: f64,
    pub source: String,
}

impl ConfigEcho {
    fn new(cfg: &RunConfig, mut info: SketchInfo) -> Self {
        // The baseline ignores the seed but the header should still show it.
        info.seed = cfg.seed;
        ConfigEcho {
            sketch: info,
            v_ratio: cfg.sketch.v_ratio,
            theta: cfg.theta,
            source: cfg.source.to_string(),
        }
    }

    fn lines(&self) -> Vec<String> {
        let value = serde_json::to_value(self).expect("config serializes");
        let serde_json::Value::Object(map) = value else {
            unreachable!()
        };
        let mut keys: Vec<&String> = map.keys().collect();
        keys.sort();
        keys.into_iter()
            .map(|k| match &map[k] {
                serde_json::Value::String(s) => format!("{k}={s}"),
                v => format!("{k}={v}"),
            })
            .collect()
    }
}

#[derive(Serialize)]
struct CandidateRow {
    prefix: String,
    lower: f64,
    upper: f64,
    conditioned: f64,
}

impl From<&HhhCandidate> for CandidateRow {
    fn from(c: &HhhCandidate) -> Self {
        CandidateRow {
            prefix: c.prefix.to_string(),
            lower: c.lower,
            upper: c.upper,
            conditioned: c.conditioned,
        }
    }
}

#[derive(Serialize)]
struct RunOutput<'a> {
    version: u32,
    config: &'a ConfigEcho,
    psi: f64,
    packets: u64,
    candidates: Vec<CandidateRow>,
}

fn header_lines(echo: &ConfigEcho, psi: f64, packets: Option<u64>) -> Vec<String> {
    let mut lines = vec![format!("rhhh format {FORMAT_VERSION}")];
    lines.extend(echo.lines());
    lines.push(format!("psi={psi}"));
    if let Some(n) = packets {
        let state = if (n as f64) >= psi { "active" } else { "not yet active" };
        lines.push(format!("packets={n} (sampling guarantee {state})"));
    }
    lines
}

/// Streams the source through the configured sketch and writes the candidates.
pub fn cmd_run(cfg: &RunConfig, out: &mut dyn Write) -> rhhh::Result<()> {
    let stream = cfg.load()?;
    let mut sketch = cfg.sketch.build(cfg.seed)?;
    sketch.extend(&stream);
    let candidates = if stream.is_empty() {
        Vec::new()
    } else {
        sketch.output(cfg.theta)?
    };
    let echo = ConfigEcho::new(cfg, sketch.info());
    let psi = sketch.psi()?;
    let n = sketch.packets();
    let mut text = String::new();
    match cfg.output {
        OutputFormat::Json => {
            let doc = RunOutput {
                version: FORMAT_VERSION,
                config: &echo,
                psi,
                packets: n,
                candidates: candidates.iter().map(CandidateRow::from).collect(),
            };
            text.push_str(&serde_json::to_string_pretty(&doc).expect("output serializes"));
            text.push('\n');
        }
        OutputFormat::Csv => {
            for l in header_lines(&echo, psi, Some(n)) {
                let _ = writeln!(text, "# {l}");
            }
            text.push_str("prefix,lower,upper,conditioned\n");
            for c in &candidates {
                let _ = writeln!(text, "{},{},{},{}", c.prefix, c.lower, c.upper, c.conditioned);
            }
        }
        OutputFormat::Text => {
            for l in header_lines(&echo, psi, Some(n)) {
                let _ = writeln!(text, "# {l}");
            }
            let _ = writeln!(
                text,
                "{:<36} {:>14} {:>14} {:>14}",
                "prefix", "lower", "upper", "conditioned"
            );
            for c in &candidates {
                let _ = writeln!(
                    text,
                    "{:<36} {:>14.1} {:>14.1} {:>14.1}",
                    c.prefix.to_string(),
                    c.lower,
                    c.upper,
                    c.conditioned
                );
            }
            let _ = writeln!(text, "# {} candidates", candidates.len());
        }
    }
    out.write_all(text.as_bytes())?;
    Ok(())
}

#[derive(Serialize)]
struct SeededReport {
    seed: u64,
    #[serde(flatten)]
    report: EvalReport,
}

#[derive(Serialize)]
struct CompareOutput<'a> {
    version: u32,
    config: &'a ConfigEcho,
    psi: f64,
    runs: Vec<SeededReport>,
    mean: EvalReport,
}

/// Runs the sketch and the exact oracle on the same stream and scores each seed.
pub fn cmd_compare(cfg: &RunConfig, runs: u64, out: &mut dyn Write) -> rhhh::Result<()> {
    if runs == 0 {
        return Err(Error::Usage("--runs must be at least 1".into()));
    }
    let stream = cfg.load()?;
    if stream.is_empty() {
        return Err(Error::Usage(format!("source {} yielded no packets", cfg.source)));
    }
    let spec = HierarchySpec::new(cfg.sketch.hierarchy);
    let counts = count_exact(&stream, &spec)?;
    let seeds: Vec<u64> = (0..runs).map(|i| cfg.seed.wrapping_add(i)).collect();
    let reports = run_seeds(&cfg.sketch, &stream, &counts, cfg.theta, &seeds)?;
    let mean = aggregate(&reports)?;
    let probe = cfg.sketch.build(cfg.seed)?;
    let echo = ConfigEcho::new(cfg, probe.info());
    let psi = probe.psi()?;

    let mut text = String::new();
    match cfg.output {
        OutputFormat::Json => {
            let doc = CompareOutput {
                version: FORMAT_VERSION,
                config: &echo,
                psi,
                runs: seeds
                    .iter()
                    .zip(&reports)
                    .map(|(&seed, r)| SeededReport {
                        seed,
                        report: r.clone(),
                    })
                    .collect(),
                mean,
            };
            text.push_str(&serde_json::to_string_pretty(&doc).expect("output serializes"));
            text.push('\n');
        }
        OutputFormat::Csv => {
            for l in header_lines(&echo, psi, Some(stream.len() as u64)) {
                let _ = writeln!(text, "# {l}");
            }
            let _ = writeln!(text, "seed,{}", EvalReport::CSV_HEADER);
            for (seed, r) in seeds.iter().zip(&reports) {
                let _ = writeln!(text, "{seed},{}", r.to_csv_row());
            }
            let _ = writeln!(text, "mean,{}", mean.to_csv_row());
        }
        OutputFormat::Text => {
            for l in header_lines(&echo, psi, Some(stream.len() as u64)) {
                let _ = writeln!(text, "# {l}");
            }
            let _ = writeln!(
                text,
                "{:>8} {:>8} {:>8} {:>10} {:>10} {:>10} {:>8} {:>8}",
                "seed", "output", "exact", "acc_viol", "cov_viol", "cov_fail", "fpr", "recall"
            );
            let row = |label: String, r: &EvalReport| {
                format!(
                    "{:>8} {:>8.2} {:>8.2} {:>10.4} {:>10.4} {:>10.4} {:>8.4} {:>8.4}",
                    label,
                    r.output_size,
                    r.exact_size,
                    r.accuracy_violation_rate,
                    r.coverage_violation_rate,
                    r.coverage_failure_rate,
                    r.false_positive_ratio,
                    r.recall
                )
            };
            for (seed, r) in seeds.iter().zip(&reports) {
                let _ = writeln!(text, "{}", row(seed.to_string(), r));
            }
            let _ = writeln!(text, "{}", row("mean".into(), &mean));
        }
    }
    out.write_all(text.as_bytes())?;
    Ok(())
}

/// Throughput of repeated ingestion runs over one stream.
#[derive(Debug, Clone, Serialize)]
pub struct BenchStats {
    pub packets: u64,
    pub repeats: usize,
    pub pps: Vec<f64>,
    pub mean_pps: f64,
    pub stddev_pps: f64,
}

/// Times `repeats` fresh sketches over `stream`. Only ingestion is timed.
pub fn measure_throughput(
    sketch: &SketchConfig,
    stream: &[PacketKey],
    seed: u64,
    repeats: usize,
) -> rhhh::Result<BenchStats> {
    if stream.is_empty() || repeats == 0 {
        return Err(Error::Usage("nothing to measure".into()));
    }
    let mut pps = Vec::with_capacity(repeats);
    for i in 0..repeats {
        let mut s = sketch.build(seed.wrapping_add(i as u64))?;
        let start = Instant::now();
        s.extend(stream);
        let secs = start.elapsed().as_secs_f64();
        std::hint::black_box(s.packets());
        pps.push(stream.len() as f64 / secs);
    }
    let mean = pps.iter().sum::<f64>() / pps.len() as f64;
    let var = if pps.len() > 1 {
        pps.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (pps.len() - 1) as f64
    } else {
        0.0
    };
    Ok(BenchStats {
        packets: stream.len() as u64,
        repeats,
        pps,
        mean_pps: mean,
        stddev_pps: var.sqrt(),
    })
}

#[derive(Serialize)]
struct BenchOutput<'a> {
    version: u32,
    config: &'a ConfigEcho,
    psi: f64,
    #[serde(flatten)]
    stats: &'a BenchStats,
}

/// Pre-generates `packets` packets and reports mean and stddev throughput over five repeats.
pub fn cmd_bench(cfg: &RunConfig, packets: u64, out: &mut dyn Write) -> rhhh::Result<()> {
    if packets < MIN_BENCH_PACKETS {
        return Err(Error::Usage(format!(
            "--packets must be at least {MIN_BENCH_PACKETS}, got {packets}"
        )));
    }
    let cfg = RunConfig {
        source: cfg.source.with_len(packets),
        ..cfg.clone()
    };
    let stream = cfg.load()?;
    if (stream.len() as u64) < MIN_BENCH_PACKETS {
        return Err(Error::Usage(format!(
            "source {} has {} packets; bench needs at least {MIN_BENCH_PACKETS}",
            cfg.source,
            stream.len()
        )));
    }
    let stats = measure_throughput(&cfg.sketch, &stream, cfg.seed, BENCH_REPEATS)?;
    let probe = cfg.sketch.build(cfg.seed)?;
    let echo = ConfigEcho::new(&cfg, probe.info());
    let psi = probe.psi()?;
    let mut text = String::new();
    match cfg.output {
        OutputFormat::Json => {
            let doc = BenchOutput {
                version: FORMAT_VERSION,
                config: &echo,
                psi,
                stats: &stats,
            };
            text.push_str(&serde_json::to_string_pretty(&doc).expect("output serializes"));
            text.push('\n');
        }
        OutputFormat::Csv => {
            for l in header_lines(&echo, psi, None) {
                let _ = writeln!(text, "# {l}");
            }
            text.push_str("packets,repeats,mean_pps,stddev_pps\n");
            let _ = writeln!(
                text,
                "{},{},{},{}",
                stats.packets, stats.repeats, stats.mean_pps, stats.stddev_pps
            );
        }
        OutputFormat::Text => {
            for l in header_lines(&echo, psi, None) {
                let _ = writeln!(text, "# {l}");
            }
            let _ = writeln!(
                text,
                "{} packets x {}: {:.3} +- {:.3} Mpps",
                stats.packets,
                stats.repeats,
                stats.mean_pps / 1e6,
                stats.stddev_pps / 1e6
            );
        }
    }
    out.write_all(text.as_bytes())?;
    Ok(())
}

/// Process exit status for an error.
pub fn exit_code(err: &Error) -> i32 {
    if err.is_usage() {
        2
    } else {
        1
    }
}

/// Parses `args` and runs the command, returning the exit status.
pub fn main_with<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let rendered = e.render().to_string();
            let _ = if code == 0 {
                out.write_all(rendered.as_bytes())
            } else {
                err.write_all(rendered.as_bytes())
            };
            return code;
        }
    };
    let result = match &cli.command {
        Command::Run(a) => RunConfig::from_args(a).and_then(|c| cmd_run(&c, out)),
        Command::Compare { args, runs } => RunConfig::from_args(args).and_then(|c| cmd_compare(&c, *runs, out)),
        Command::Bench { args, packets } => RunConfig::from_args(args).and_then(|c| cmd_bench(&c, *packets, out)),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "rhhh: {e}");
            exit_code(&e)
        }
    }
}
