//! Command-line front end: batch and streaming assessment, decomposition and
//! exponent dumps, threshold inspection, tuning and synthetic scenarios.

use std::fs::File;
use std::io::{self, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use stvs_core::config::ConfigDocument;
use stvs_core::distribution::{gompertz_reference, Grid};
use stvs_core::indices::{self, imf_threshold_detail, AssessConfig, GeneratorConfig};
use stvs_core::ingest::{self, CsvLayout, CsvSchema, IngestConfig, VoltageTrajectory};
use stvs_core::lyapunov::{self, ExponentSeries};
use stvs_core::oel::{SearchRanges, TuningResult};
use stvs_core::stream::{StreamAssessor, StreamConfig, StreamError, DEFAULT_REPORT_INTERVAL_S};
use stvs_core::synth::{synth_scenario, ScenarioKind, ScenarioParams};
use stvs_core::{emd, Error};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 1;
pub const EXIT_COMPUTATION: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "stvs", version, about = "Short-term voltage stability indices from post-fault measurements")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Oscillation and per-generator recovery assessment as JSON.
    Assess(AssessArgs),
    /// Post-fault window split into IMFs and residuals, as CSV.
    Decompose(RunArgs),
    /// Time-resolved exponents of the oscillatory part and every residual, as CSV.
    Exponents(RunArgs),
    /// Critical oscillation value and the reference vectors behind it.
    Thresholds(ThresholdArgs),
    /// Tuned recovery reference per configured generator, as JSON.
    Tune(RunArgs),
    /// Synthetic scenario in the standard CSV input format.
    Synth(SynthArgs),
}

#[derive(Debug, Clone, Args)]
struct GridArgs {
    /// Histogram bins.
    #[arg(long, default_value_t = 20)]
    bins: usize,
    /// Lower edge of the divergence-factor grid.
    #[arg(long, default_value_t = 0.0)]
    lo: f64,
    /// Upper edge of the divergence-factor grid.
    #[arg(long, default_value_t = 1.5)]
    hi: f64,
    /// Shape of the oscillation reference.
    #[arg(long, default_value_t = indices::DEFAULT_GAMMA2)]
    gamma2: f64,
}

#[derive(Debug, Clone, Args)]
struct RunArgs {
    /// Input CSV; standard input when omitted or `-`.
    #[arg(long = "in", value_name = "PATH")]
    input: Option<PathBuf>,
    /// Output file; standard output when omitted.
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
    /// Fault-clear time in seconds; auto-detected when omitted.
    #[arg(long)]
    t0: Option<f64>,
    /// Post-fault analysis window in seconds.
    #[arg(long)]
    window: Option<f64>,
    #[command(flatten)]
    grid: GridArgs,
    /// Generator and tuner configuration.
    #[arg(long = "gen-config", value_name = "PATH")]
    gen_config: Option<PathBuf>,
    /// Post-fault equilibrium voltage; defaults to each channel's pre-fault mean.
    #[arg(long)]
    eq0: Option<f64>,
}

#[derive(Debug, Clone, Args)]
struct AssessArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Read rows incrementally and emit one JSON line per report.
    #[arg(long)]
    stream: bool,
    /// Seconds of new data between streamed reports.
    #[arg(long = "report-interval", default_value_t = DEFAULT_REPORT_INTERVAL_S)]
    report_interval: f64,
}

#[derive(Debug, Clone, Args)]
struct ThresholdArgs {
    #[command(flatten)]
    grid: GridArgs,
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
struct SynthArgs {
    /// stable-osc, growing-osc, fast-recovery, stalled-recovery or mixed.
    kind: String,
    /// Scenario parameters as `key=value`.
    params: Vec<String>,
    /// Noise seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

#[derive(Debug)]
enum CliError {
    Validation(String),
    Computation(String),
}

impl CliError {
    fn code(&self) -> i32 {
        match self {
            CliError::Validation(_) => EXIT_VALIDATION,
            CliError::Computation(_) => EXIT_COMPUTATION,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Validation(m) | CliError::Computation(m) => m,
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        if e.is_validation() {
            CliError::Validation(e.to_string())
        } else {
            CliError::Computation(e.to_string())
        }
    }
}

macro_rules! impl_from_stage {
    ($($t:ty),*) => {$(
        impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                Error::from(e).into()
            }
        }
    )*};
}

impl_from_stage!(
    stvs_core::ingest::IngestError,
    stvs_core::config::ConfigError,
    stvs_core::emd::EmdError,
    stvs_core::embed::EmbedError,
    stvs_core::lyapunov::LyapunovError,
    stvs_core::distribution::DistributionError,
    stvs_core::oel::OelError,
    stvs_core::synth::SynthError
);

fn io_error(what: &str, e: io::Error) -> CliError {
    CliError::Computation(format!("{what}: {e}"))
}

/// Resolved settings for the data-driven subcommands, echoed in JSON output
/// through the assessment's config block.
#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub input: Option<PathBuf>,
    pub fault_clear_time: Option<f64>,
    pub window: f64,
    pub lookback: f64,
    pub grid: Grid,
    pub gamma2: f64,
    pub search: SearchRanges,
    pub gen_config: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub stream: bool,
    pub report_interval: f64,
    #[serde(skip)]
    pub assess: AssessConfig,
}

fn positive(name: &str, v: f64) -> Result<f64, CliError> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(CliError::Validation(format!("--{name} must be a positive number, got {v}")))
    }
}

fn grid_from(args: &GridArgs) -> Result<(Grid, f64), CliError> {
    let grid = Grid::new(args.bins, args.lo, args.hi).map_err(|e| CliError::Validation(e.to_string()))?;
    Ok((grid, positive("gamma2", args.gamma2)?))
}

impl RunConfig {
    fn from_args(args: &RunArgs, stream: bool, report_interval: f64) -> Result<Self, CliError> {
        let (grid, gamma2) = grid_from(&args.grid)?;
        let (ingest_cfg, generators) = match &args.gen_config {
            Some(path) => {
                let doc = ConfigDocument::load(path)?;
                (IngestConfig::from_document(&doc)?, GeneratorConfig::from_document(&doc)?)
            }
            None => (
                IngestConfig::default(),
                GeneratorConfig {
                    generators: Vec::new(),
                    search: SearchRanges::default(),
                },
            ),
        };
        let window = match args.window {
            Some(w) => positive("window", w)?,
            None => ingest_cfg.window_duration,
        };
        let fault_clear_time = match args.t0.or(ingest_cfg.fault_clear_time) {
            Some(t) if !t.is_finite() => return Err(CliError::Validation(format!("--t0 must be finite, got {t}"))),
            other => other,
        };
        let eq0 = args.eq0.map(|v| positive("eq0", v)).transpose()?;
        let report_interval = positive("report-interval", report_interval)?;
        let assess = AssessConfig {
            window,
            grid,
            gamma2,
            eq0,
            search: generators.search.clone(),
            generators: generators.generators,
            ..AssessConfig::default()
        };
        Ok(Self {
            input: args.input.clone(),
            fault_clear_time,
            window,
            lookback: ingest_cfg.lookback,
            grid,
            gamma2,
            search: generators.search,
            gen_config: args.gen_config.clone(),
            out: args.out.clone(),
            stream,
            report_interval,
            assess,
        })
    }

    fn reads_stdin(&self) -> bool {
        self.input.as_deref().is_none_or(|p| p == Path::new("-"))
    }

    fn load(&self, stdin: &mut dyn Read) -> Result<VoltageTrajectory, CliError> {
        let schema = CsvSchema::default();
        let traj = if self.reads_stdin() {
            ingest::read_trajectory(stdin, &schema)?
        } else {
            ingest::load_trajectory(self.input.as_ref().expect("checked"), &schema)?
        };
        Ok(ingest::prepare_trajectory(traj, self.fault_clear_time, self.lookback)?)
    }
}

fn open_output<'a>(out: &Option<PathBuf>, stdout: &'a mut dyn Write) -> Result<Box<dyn Write + 'a>, CliError> {
    match out {
        Some(path) => {
            let f = File::create(path).map_err(|e| io_error(&format!("cannot create {}", path.display()), e))?;
            Ok(Box::new(BufWriter::new(f)))
        }
        None => Ok(Box::new(stdout)),
    }
}

fn write_json<T: Serialize>(value: &T, out: &mut dyn Write) -> Result<(), CliError> {
    serde_json::to_writer_pretty(&mut *out, value).map_err(|e| CliError::Computation(e.to_string()))?;
    writeln!(out).map_err(|e| io_error("write failed", e))?;
    out.flush().map_err(|e| io_error("write failed", e))
}

/// Parses `args` (program name first) and runs the chosen subcommand.
/// Returns the process exit code.
pub fn run<I, T>(args: I, stdin: &mut dyn Read, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_VALIDATION } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() {
                write!(stderr, "{text}")
            } else {
                write!(stdout, "{text}")
            };
            return code;
        }
    };
    let result = match cli.command {
        Command::Assess(a) => assess_cmd(&a, stdin, stdout),
        Command::Decompose(a) => decompose_cmd(&a, stdin, stdout),
        Command::Exponents(a) => exponents_cmd(&a, stdin, stdout),
        Command::Thresholds(a) => thresholds_cmd(&a, stdout),
        Command::Tune(a) => tune_cmd(&a, stdin, stdout),
        Command::Synth(a) => synth_cmd(&a, stdout),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(stderr, "error: {}", e.message());
            e.code()
        }
    }
}

fn assess_cmd(args: &AssessArgs, stdin: &mut dyn Read, stdout: &mut dyn Write) -> Result<(), CliError> {
    let cfg = RunConfig::from_args(&args.run, args.stream, args.report_interval)?;
    log::debug!("run config: {cfg:?}");
    if cfg.stream {
        return stream_cmd(&cfg, stdin, stdout);
    }
    let traj = cfg.load(stdin)?;
    let report = indices::assess(&traj, &cfg.assess)?;
    let mut out = open_output(&cfg.out, stdout)?;
    write_json(&report, &mut out)
}

#[derive(Serialize)]
struct ErrorLine<'a> {
    error: &'a str,
    kind: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    row: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    at: Option<f64>,
}

fn error_fields(e: &StreamError) -> (&'static str, Option<usize>, Option<f64>) {
    match e {
        StreamError::OutOfOrder { row, .. } => ("out-of-order", Some(*row), None),
        StreamError::Row { row, .. } => ("row", Some(*row), None),
        StreamError::Report { at, .. } => ("report", None, Some(*at)),
    }
}

fn emit_line<T: Serialize>(value: &T, out: &mut dyn Write) -> Result<(), CliError> {
    serde_json::to_writer(&mut *out, value).map_err(|e| CliError::Computation(e.to_string()))?;
    writeln!(out).map_err(|e| io_error("write failed", e))?;
    out.flush().map_err(|e| io_error("write failed", e))
}

fn emit_stream_result(
    r: Result<indices::StabilityAssessment, StreamError>,
    out: &mut dyn Write,
) -> Result<(), CliError> {
    match r {
        Ok(report) => emit_line(&report, out),
        Err(e) => {
            log::warn!("{e}");
            let message = e.to_string();
            let (kind, row, at) = error_fields(&e);
            emit_line(
                &ErrorLine {
                    error: &message,
                    kind,
                    row,
                    at,
                },
                out,
            )
        }
    }
}

fn stream_cmd(cfg: &RunConfig, stdin: &mut dyn Read, stdout: &mut dyn Write) -> Result<(), CliError> {
    let t0 = cfg
        .fault_clear_time
        .ok_or_else(|| CliError::Validation("--stream needs the fault-clear time (--t0 or fault_clear_time in --gen-config)".into()))?;
    let source: Box<dyn Read + '_> = if cfg.reads_stdin() {
        Box::new(stdin)
    } else {
        let path = cfg.input.as_ref().expect("checked");
        Box::new(File::open(path).map_err(|e| CliError::Validation(format!("cannot open {}: {e}", path.display())))?)
    };
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(source);
    let headers = reader
        .headers()
        .map_err(|e| CliError::Validation(format!("cannot read CSV header: {e}")))?
        .clone();
    if headers.is_empty() {
        return Ok(());
    }
    let layout = CsvLayout::from_headers(&headers, &CsvSchema::default())?;
    let stream_cfg = StreamConfig {
        report_interval: cfg.report_interval,
        lookback: cfg.lookback,
        ..StreamConfig::new(t0, cfg.assess.clone())
    };
    let mut assessor = StreamAssessor::new(layout, stream_cfg);
    let mut out = open_output(&cfg.out, stdout)?;
    let mut record = csv::StringRecord::new();
    let mut row = 0usize;
    loop {
        match reader.read_record(&mut record) {
            Ok(false) => break,
            Ok(true) => {
                for r in assessor.push_record(&record) {
                    emit_stream_result(r, &mut out)?;
                }
            }
            Err(e) => {
                let message = format!("row {row}: {e}");
                log::warn!("{message}");
                emit_line(
                    &ErrorLine {
                        error: &message,
                        kind: "row",
                        row: Some(row),
                        at: None,
                    },
                    &mut out,
                )?;
            }
        }
        row += 1;
    }
    if let Some(r) = assessor.finish() {
        emit_stream_result(r, &mut out)?;
    }
    Ok(())
}

fn decompose_cmd(args: &RunArgs, stdin: &mut dyn Read, stdout: &mut dyn Write) -> Result<(), CliError> {
    let cfg = RunConfig::from_args(args, false, DEFAULT_REPORT_INTERVAL_S)?;
    let traj = cfg.load(stdin)?;
    let window = ingest::extract_post_fault_window(&traj, cfg.window)?;
    let d = emd::decompose(&window, &cfg.assess.emd)?;
    let mut header = vec!["t".to_string()];
    for (c, id) in d.ids.iter().enumerate() {
        header.push(format!("V:{id}"));
        for k in 1..=d.imfs[c].len() {
            header.push(format!("IMF{k}:{id}"));
        }
        header.push(format!("R:{id}"));
    }
    let out = open_output(&cfg.out, stdout)?;
    let mut w = csv::Writer::from_writer(out);
    let csv_err = |e: csv::Error| CliError::Computation(format!("write failed: {e}"));
    w.write_record(&header).map_err(csv_err)?;
    let t0 = traj.fault_clear_time();
    for i in 0..window.len() {
        let mut rec = vec![format!("{}", t0 + i as f64 * window.dt())];
        for (c, ch) in window.channels().iter().enumerate() {
            rec.push(format!("{}", ch.voltage[i]));
            rec.extend(d.imfs[c].iter().map(|imf| format!("{}", imf[i])));
            rec.push(format!("{}", d.residual[c][i]));
        }
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush().map_err(|e| io_error("write failed", e))
}

fn exponents_cmd(args: &RunArgs, stdin: &mut dyn Read, stdout: &mut dyn Write) -> Result<(), CliError> {
    let cfg = RunConfig::from_args(args, false, DEFAULT_REPORT_INTERVAL_S)?;
    let traj = cfg.load(stdin)?;
    let window = ingest::extract_post_fault_window(&traj, cfg.window)?;
    let d = emd::decompose(&window, &cfg.assess.emd)?;
    let kept = emd::filter_imfs_by_frequency(&d, 0.0, cfg.assess.max_frequency_hz)?;

    let mut targets: Vec<(String, ExponentSeries)> = Vec::new();
    match indices::oscillation_series(&kept, &cfg.assess.embed)? {
        Some((series, ..)) => targets.push(("IMF".into(), series)),
        None => log::info!("no oscillatory content in the window"),
    }
    for (c, id) in d.ids.iter().enumerate() {
        let eq0 = cfg.assess.eq0.unwrap_or(window.prefault_voltage()[c]);
        match lyapunov::fsle_residual_series(&d.residual[c], eq0, 0, window.dt()) {
            Ok(series) => targets.push((format!("R:{id}"), series)),
            Err(lyapunov::LyapunovError::BelowFloor { deviation }) => {
                log::info!("{id}: initial deviation {deviation} below floor; no recovery exponents")
            }
            Err(e) => return Err(e.into()),
        }
    }

    let out = open_output(&cfg.out, stdout)?;
    let mut w = csv::Writer::from_writer(out);
    let csv_err = |e: csv::Error| CliError::Computation(format!("write failed: {e}"));
    w.write_record(["target", "k", "t", "lambda", "divergence_factor"]).map_err(csv_err)?;
    for (name, s) in &targets {
        for ((k, l), f) in s.k_offsets.iter().zip(&s.lambdas).zip(&s.divergence_factors) {
            w.write_record([
                name.clone(),
                k.to_string(),
                format!("{}", *k as f64 * s.dt),
                format!("{l}"),
                format!("{f}"),
            ])
            .map_err(csv_err)?;
        }
    }
    w.flush().map_err(|e| io_error("write failed", e))
}

#[derive(Serialize)]
struct ThresholdReport {
    threshold: f64,
    bins: usize,
    lo: f64,
    hi: f64,
    gamma2: f64,
    bin_centers: Vec<f64>,
    critical_distribution: Vec<f64>,
    reference: Vec<f64>,
}

fn thresholds_cmd(args: &ThresholdArgs, stdout: &mut dyn Write) -> Result<(), CliError> {
    let (grid, gamma2) = grid_from(&args.grid)?;
    let (threshold, p, reference) = imf_threshold_detail(grid, gamma2).map_err(|e| match e {
        Error::Indices(_) => CliError::Validation(e.to_string()),
        other => other.into(),
    })?;
    debug_assert_eq!(reference, gompertz_reference(gamma2, indices::OSCILLATION_X_STAR, grid)?);
    let report = ThresholdReport {
        threshold,
        bins: grid.bins,
        lo: grid.lo,
        hi: grid.hi,
        gamma2,
        bin_centers: grid.centers(),
        critical_distribution: p,
        reference: reference.probabilities,
    };
    let mut out = open_output(&args.out, stdout)?;
    write_json(&report, &mut out)
}

#[derive(Serialize)]
struct TuneEntry {
    id: String,
    vcaps: Vec<(f64, f64)>,
    tuning: Option<TuningResult>,
    note: Option<String>,
}

fn tune_cmd(args: &RunArgs, stdin: &mut dyn Read, stdout: &mut dyn Write) -> Result<(), CliError> {
    let cfg = RunConfig::from_args(args, false, DEFAULT_REPORT_INTERVAL_S)?;
    if cfg.assess.generators.is_empty() {
        return Err(CliError::Validation("tune needs at least one generator section in --gen-config".into()));
    }
    let traj = cfg.load(stdin)?;
    let report = indices::assess(&traj, &cfg.assess)?;
    let entries: Vec<TuneEntry> = report
        .generators
        .into_iter()
        .map(|g| TuneEntry {
            id: g.id,
            vcaps: g.vcaps,
            tuning: g.tuning,
            note: g.note,
        })
        .collect();
    let mut out = open_output(&cfg.out, stdout)?;
    write_json(&serde_json::json!({ "generators": entries, "config": report.config }), &mut out)
}

fn synth_cmd(args: &SynthArgs, stdout: &mut dyn Write) -> Result<(), CliError> {
    let kind: ScenarioKind = args.kind.parse()?;
    let mut params = ScenarioParams::default();
    for p in &args.params {
        params.set(p)?;
    }
    if let Some(seed) = args.seed {
        params.seed = seed;
    }
    let scenario = synth_scenario(kind, &params)?;
    log::info!(
        "{kind}: fault cleared at {} s (sample {})",
        scenario.truth.fault_clear_time,
        scenario.truth.fault_clear_index
    );
    let mut out = open_output(&args.out, stdout)?;
    ingest::write_csv(&scenario.trajectory, &mut out)?;
    out.flush().map_err(|e| io_error("write failed", e))
}
