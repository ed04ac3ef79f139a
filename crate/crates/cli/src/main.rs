//! `hbt`: simulate, correlate and fit photon-bunching ranging data.
//!
//! Exit status: 0 on success, 1 for invalid input or configuration, 2 for
//! internal failures.

use std::fmt::Display;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use hbt_core::config::RunConfig;
use hbt_core::correlator::{read_histogram_csv, series_from_csv, G2Series};
use hbt_core::estimator::{FitResult, SnrReport};
use hbt_core::photonsim::{simulate_ranging_scenario, PROBE_CHANNEL, REFERENCE_CHANNEL};
use hbt_core::tagio::{read_tags, read_text_tags, write_tags, write_text_tags, Quantization, TagFile};
use hbt_core::{
    cross_correlate, cross_correlate_chunked, estimate_range, fit_g2, normalize_g2, snr_measure, snr_predict, Error,
    Medium, Seconds,
};

#[derive(Debug, Parser)]
#[command(name = "hbt", version, about = "Thermal-light photon bunching: simulation, g2 correlation, ranging")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate a two-detector acquisition and write a tag file plus a truth document
    Simulate(SimulateArgs),
    /// Histogram time differences between the two channels of a tag file
    Correlate(CorrelateArgs),
    /// Fit the bunching peak of a histogram CSV
    Fit(FitArgs),
    /// Fit the bunching peak and convert its delay to a target distance
    Range(RangeArgs),
    /// Predict, and optionally measure, the signal-to-noise ratio of the bunching peak
    Snr(SnrArgs),
    /// Convert tag files between the binary and text formats
    Convert(ConvertArgs),
}

/// Configuration sources shared by all subcommands.
#[derive(Debug, Args)]
struct ConfigArgs {
    /// TOML run configuration file, layered over the preset if both are given
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Built-in configuration: short-range, long-range-1km or long-range-2km
    #[arg(long, value_name = "NAME")]
    preset: Option<String>,
    /// Override any configuration key, e.g. scenario.distance_m=1.5 (repeatable)
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[command(flatten)]
    cfg: ConfigArgs,
    /// Random seed (integer)
    #[arg(long, value_name = "N", conflicts_with = "seed_from_entropy")]
    seed: Option<u64>,
    /// Draw the seed from the operating system and report it
    #[arg(long)]
    seed_from_entropy: bool,
    /// Acquisition time in seconds
    #[arg(long, value_name = "SECONDS")]
    duration_s: Option<f64>,
    /// Target distance in meters
    #[arg(long, value_name = "METERS")]
    distance_m: Option<f64>,
    /// Tag file time resolution in picoseconds
    #[arg(long, value_name = "PS")]
    resolution_ps: Option<u64>,
    /// Output tag file path
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
    /// Output truth document path (JSON)
    #[arg(long, value_name = "PATH")]
    truth: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct CorrelateArgs {
    /// Input tag file (binary, or text with a .txt extension); defaults to output.tags
    #[arg(value_name = "TAGS")]
    input: Option<PathBuf>,
    #[command(flatten)]
    cfg: ConfigArgs,
    /// Histogram bin width in picoseconds
    #[arg(long, value_name = "PS")]
    bin_width_ps: Option<i64>,
    /// Delay window START:END in picoseconds, probe minus reference
    #[arg(long, value_name = "START:END", allow_hyphen_values = true)]
    window_ps: Option<String>,
    /// Process the reference stream in chunks of this many picoseconds
    #[arg(long, value_name = "PS")]
    chunk_ps: Option<i64>,
    /// Acquisition time in seconds used for normalization; defaults to the last event time
    #[arg(long, value_name = "SECONDS")]
    duration_s: Option<f64>,
    /// Output histogram CSV path
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct FitArgs {
    /// Input histogram CSV; defaults to output.histogram
    #[arg(value_name = "CSV")]
    input: Option<PathBuf>,
    #[command(flatten)]
    cfg: ConfigArgs,
    /// Output fit document path (JSON)
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct RangeArgs {
    /// Input histogram CSV; defaults to output.histogram
    #[arg(value_name = "CSV")]
    input: Option<PathBuf>,
    #[command(flatten)]
    cfg: ConfigArgs,
    /// Refractive index of the propagation medium (dimensionless)
    #[arg(long, value_name = "N")]
    refractive_index: Option<f64>,
    /// Output range document path (JSON)
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SnrArgs {
    /// Histogram CSV to measure the SNR from; without it only the prediction is computed
    #[arg(value_name = "CSV")]
    input: Option<PathBuf>,
    #[command(flatten)]
    cfg: ConfigArgs,
    /// Detection rate per detector in events per second
    #[arg(long, value_name = "HZ")]
    rate: f64,
    /// Squared visibility g2(0) - 1 (dimensionless); taken from the fit when a CSV is given
    #[arg(long, value_name = "V2")]
    v2: Option<f64>,
    /// Coherence time in nanoseconds; taken from the fit when a CSV is given
    #[arg(long, value_name = "NS")]
    tauc_ns: Option<f64>,
    /// Integration time in milliseconds
    #[arg(long, value_name = "MS")]
    dt_ms: f64,
    /// Output SNR document path (JSON)
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum TagFormat {
    Binary,
    Text,
}

#[derive(Debug, Args)]
struct ConvertArgs {
    /// Input tag file
    #[arg(value_name = "INPUT")]
    input: PathBuf,
    /// Output tag file
    #[arg(value_name = "OUTPUT")]
    output: PathBuf,
    /// Input format; inferred from the extension (.txt is text) when absent
    #[arg(long = "from", value_enum, value_name = "FORMAT")]
    from: Option<TagFormat>,
    /// Output format; inferred from the extension (.txt is text) when absent
    #[arg(long = "to", value_enum, value_name = "FORMAT")]
    to: Option<TagFormat>,
}

/// Failure classes mapped onto the exit status.
#[derive(Debug)]
enum Failure {
    User(String),
    Internal(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Overflow => Failure::Internal(e.to_string()),
            e => Failure::User(e.to_string()),
        }
    }
}

type CliResult<T = ()> = Result<T, Failure>;

fn user(msg: impl Display) -> Failure {
    Failure::User(msg.to_string())
}

fn load_config(args: &ConfigArgs, extra: Vec<String>) -> CliResult<RunConfig> {
    let mut sets = args.overrides.clone();
    sets.extend(extra);
    Ok(RunConfig::layered(args.preset.as_deref(), args.config.as_deref(), &sets)?)
}

fn push_set(sets: &mut Vec<String>, key: &str, value: Option<impl Display>) {
    if let Some(v) = value {
        sets.push(format!("{key}={v}"));
    }
}

fn push_path(sets: &mut Vec<String>, key: &str, value: &Option<PathBuf>) {
    if let Some(p) = value {
        // TOML string literal so that any path survives the override parser
        sets.push(format!("{key}={}", Value::String(p.display().to_string())));
    }
}

fn format_of(path: &Path, explicit: Option<TagFormat>) -> TagFormat {
    explicit.unwrap_or(match path.extension().and_then(|e| e.to_str()) {
        Some("txt") => TagFormat::Text,
        _ => TagFormat::Binary,
    })
}

fn read_any(path: &Path, format: TagFormat) -> CliResult<TagFile> {
    Ok(match format {
        TagFormat::Binary => read_tags(path)?,
        TagFormat::Text => read_text_tags(path)?,
    })
}

fn write_json(path: &Path, value: &Value) -> CliResult {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Failure::Internal(e.to_string()))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    Ok(())
}

/// Prints `key  value` rows with the values aligned.
fn print_table(rows: &[(&str, String)]) {
    let width = rows.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
    let mut out = std::io::stdout().lock();
    for (k, v) in rows {
        let _ = writeln!(out, "{k:<width$}  {v}");
    }
}

fn cmd_simulate(a: SimulateArgs) -> CliResult {
    let seed = if a.seed_from_entropy { Some(rand::random::<u64>()) } else { a.seed };
    let mut sets = Vec::new();
    push_set(&mut sets, "scenario.seed", seed);
    push_set(&mut sets, "scenario.duration_s", a.duration_s);
    push_set(&mut sets, "scenario.distance_m", a.distance_m);
    push_set(&mut sets, "output.resolution_ps", a.resolution_ps);
    push_path(&mut sets, "output.tags", &a.out);
    push_path(&mut sets, "output.truth", &a.truth);
    let cfg = load_config(&a.cfg, sets)?;
    let scenario = cfg.scenario.to_scenario()?;
    let out = simulate_ranging_scenario(&scenario)?;
    let quantization = Quantization::from(cfg.output.quantization);
    write_tags(
        &[out.reference.clone(), out.probe.clone()],
        cfg.output.resolution_ps,
        quantization,
        &cfg.output.tags,
    )?;
    let truth = serde_json::to_value(&out.truth).map_err(|e| Failure::Internal(e.to_string()))?;
    write_json(&cfg.output.truth, &truth)?;
    print_table(&[
        ("seed", scenario.seed.to_string()),
        ("duration_s", format!("{}", scenario.duration.0)),
        ("distance_m", format!("{}", scenario.distance.0)),
        ("delay_ps", out.truth.delay_ticks.to_string()),
        ("reference_events", out.reference.len().to_string()),
        ("probe_events", out.probe.len().to_string()),
        ("resolution_ps", cfg.output.resolution_ps.to_string()),
        ("tags", cfg.output.tags.display().to_string()),
        ("truth", cfg.output.truth.display().to_string()),
    ]);
    Ok(())
}

fn parse_window(s: &str) -> CliResult<(i64, i64)> {
    let (a, b) = s.split_once(':').ok_or_else(|| user(format!("window `{s}` is not START:END")))?;
    let parse = |v: &str| v.trim().parse::<i64>().map_err(|_| user(format!("bad window bound `{v}`")));
    Ok((parse(a)?, parse(b)?))
}

fn cmd_correlate(a: CorrelateArgs) -> CliResult {
    let mut sets = Vec::new();
    push_set(&mut sets, "correlation.bin_width_ps", a.bin_width_ps);
    if let Some(w) = &a.window_ps {
        let (start, end) = parse_window(w)?;
        push_set(&mut sets, "correlation.window_start_ps", Some(start));
        push_set(&mut sets, "correlation.window_end_ps", Some(end));
    }
    push_set(&mut sets, "correlation.chunk_ps", a.chunk_ps);
    push_path(&mut sets, "output.histogram", &a.out);
    let cfg = load_config(&a.cfg, sets)?;
    let input = a.input.clone().unwrap_or_else(|| cfg.output.tags.clone());
    let file = read_any(&input, format_of(&input, None))?;
    if file.total_events() == 0 {
        return Err(Error::NoEvents.into());
    }
    if file.streams.len() != 2 {
        return Err(user(format!("expected 2 channels, file has {}", file.streams.len())));
    }
    let (mut reference, mut probe) = (
        file.streams[REFERENCE_CHANNEL as usize].clone(),
        file.streams[PROBE_CHANNEL as usize].clone(),
    );
    if let Some(d) = a.duration_s {
        let rebuild = |s: &hbt_core::EventStream| {
            hbt_core::EventStream::new(s.channel, s.times().to_vec(), Seconds(d), s.origin)
        };
        reference = rebuild(&reference)?;
        probe = rebuild(&probe)?;
    }
    let binning = cfg.correlation.config()?;
    let hist = match cfg.correlation.chunk()? {
        Some(chunk) => cross_correlate_chunked(&reference, &probe, &binning, chunk)?,
        None => cross_correlate(&reference, &probe, &binning)?,
    };
    // fails with "no events" when either channel is empty
    normalize_g2::<f64>(&hist)?;
    hist.write_csv(&cfg.output.histogram)?;
    print_table(&[
        ("reference_events", hist.n_a.to_string()),
        ("probe_events", hist.n_b.to_string()),
        ("pairs_in_window", hist.total().to_string()),
        ("duration_s", format!("{}", hist.duration_seconds().0)),
        ("bins", binning.n_bins().to_string()),
        ("bin_width_ps", binning.bin_width().0.to_string()),
        ("histogram", cfg.output.histogram.display().to_string()),
    ]);
    Ok(())
}

fn load_series(input: &Option<PathBuf>, cfg: &RunConfig) -> CliResult<G2Series<f64>> {
    let path = input.clone().unwrap_or_else(|| cfg.output.histogram.clone());
    let rows = read_histogram_csv(&path)?;
    Ok(series_from_csv(&rows)?)
}

fn fit_json(fit: &FitResult<f64>) -> Value {
    let mut v = serde_json::to_value(fit).expect("fit serializes");
    let obj = v.as_object_mut().expect("object");
    obj.insert("g2_at_delay".into(), json!(fit.g2_at_delay()));
    obj.insert("peak_bin_g2".into(), json!(fit.peak_bin_g2()));
    v
}

fn fit_rows(fit: &FitResult<f64>) -> Vec<(&'static str, String)> {
    vec![
        ("baseline", format!("{:.6} ± {:.6}", fit.baseline, fit.baseline_sigma)),
        ("amplitude", format!("{:.6} ± {:.6}", fit.amplitude, fit.amplitude_sigma)),
        ("delay_ns", format!("{:.6} ± {:.6}", fit.delay * 1e9, fit.delay_sigma * 1e9)),
        (
            "coherence_time_ns",
            format!("{:.4} ± {:.4}", fit.coherence_time * 1e9, fit.coherence_time_sigma * 1e9),
        ),
        ("g2_at_delay", format!("{:.4}", fit.g2_at_delay())),
        ("peak_bin_g2", format!("{:.4}", fit.peak_bin_g2())),
        ("reduced_chi2", format!("{:.4}", fit.reduced_chi2)),
        ("points", fit.n_points.to_string()),
        ("iterations", fit.iterations.to_string()),
        ("converged", fit.converged.to_string()),
    ]
}

/// Fits, prints the table and writes the document; unconverged fits still
/// emit their diagnostics before failing.
fn fit_and_report(series: &G2Series<f64>, cfg: &RunConfig) -> CliResult<FitResult<f64>> {
    let fit = fit_g2(series, &cfg.fit.options()?)?;
    if !fit.converged {
        print_table(&fit_rows(&fit));
        write_json(&cfg.output.fit, &json!({ "fit": fit_json(&fit) }))?;
        return Err(Error::NotConverged {
            iterations: fit.iterations,
        }
        .into());
    }
    Ok(fit)
}

fn cmd_fit(a: FitArgs) -> CliResult {
    let mut sets = Vec::new();
    push_path(&mut sets, "output.fit", &a.out);
    let cfg = load_config(&a.cfg, sets)?;
    let series = load_series(&a.input, &cfg)?;
    let fit = fit_and_report(&series, &cfg)?;
    print_table(&fit_rows(&fit));
    write_json(&cfg.output.fit, &json!({ "fit": fit_json(&fit) }))
}

fn cmd_range(a: RangeArgs) -> CliResult {
    let mut sets = Vec::new();
    push_set(&mut sets, "scenario.refractive_index", a.refractive_index);
    push_path(&mut sets, "output.fit", &a.out);
    let cfg = load_config(&a.cfg, sets)?;
    let medium = Medium::new(cfg.scenario.refractive_index)?;
    let series = load_series(&a.input, &cfg)?;
    let fit = fit_and_report(&series, &cfg)?;
    let range = estimate_range(&fit, &medium)?;
    let mut rows = fit_rows(&fit);
    rows.push(("refractive_index", format!("{}", medium.refractive_index)));
    rows.push(("distance_m", format!("{:.6} ± {:.6}", range.range.0, range.sigma.0)));
    rows.push(("distance_mm", format!("{:.2} ± {:.2}", range.range.0 * 1e3, range.sigma.0 * 1e3)));
    print_table(&rows);
    write_json(
        &cfg.output.fit,
        &json!({
            "fit": fit_json(&fit),
            "range": {
                "distance_m": range.range.0,
                "sigma_m": range.sigma.0,
                "refractive_index": medium.refractive_index,
            },
        }),
    )
}

fn snr_json(r: &SnrReport<f64>) -> Value {
    serde_json::to_value(r).expect("report serializes")
}

fn cmd_snr(a: SnrArgs) -> CliResult {
    let cfg = load_config(&a.cfg, Vec::new())?;
    let dt = a.dt_ms * 1e-3;
    let doc = match &a.input {
        None => {
            let v2 = a.v2.ok_or_else(|| user("--v2 is required without a histogram"))?;
            let tc = a.tauc_ns.ok_or_else(|| user("--tauc-ns is required without a histogram"))? * 1e-9;
            let snr = snr_predict(a.rate, v2, tc, dt)?;
            print_table(&[
                ("rate_hz", format!("{}", a.rate)),
                ("v2", format!("{v2}")),
                ("coherence_time_ns", format!("{}", tc * 1e9)),
                ("integration_time_ms", format!("{}", a.dt_ms)),
                ("predicted_snr", format!("{snr:.1}")),
            ]);
            json!({
                "predicted_snr": snr,
                "rate": a.rate,
                "v2": v2,
                "coherence_time": tc,
                "integration_time": dt,
            })
        }
        Some(_) => {
            let series = load_series(&a.input, &cfg)?;
            let fit = fit_and_report(&series, &cfg)?;
            let report = snr_measure(&series, &fit, a.rate, dt)?;
            let mut rows = fit_rows(&fit);
            rows.push(("predicted_snr", format!("{:.1}", report.predicted_snr)));
            rows.push(("measured_snr", format!("{:.1}", report.measured_snr)));
            rows.push(("off_peak_bins", report.off_peak_bins.to_string()));
            print_table(&rows);
            json!({ "fit": fit_json(&fit), "snr": snr_json(&report) })
        }
    };
    match &a.out {
        Some(p) => write_json(p, &doc),
        None => Ok(()),
    }
}

fn cmd_convert(a: ConvertArgs) -> CliResult {
    let file = read_any(&a.input, format_of(&a.input, a.from))?;
    let res = file.header.resolution_ps;
    match format_of(&a.output, a.to) {
        TagFormat::Binary => write_tags(&file.streams, res, file.quantization, &a.output)?,
        TagFormat::Text => write_text_tags(&file.streams, res, file.quantization, &a.output)?,
    }
    print_table(&[
        ("events", file.total_events().to_string()),
        ("channels", file.header.channel_count.to_string()),
        ("resolution_ps", res.to_string()),
        ("output", a.output.display().to_string()),
    ]);
    Ok(())
}

fn run(cli: Cli) -> CliResult {
    match cli.command {
        Command::Simulate(a) => cmd_simulate(a),
        Command::Correlate(a) => cmd_correlate(a),
        Command::Fit(a) => cmd_fit(a),
        Command::Range(a) => cmd_range(a),
        Command::Snr(a) => cmd_snr(a),
        Command::Convert(a) => cmd_convert(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match std::panic::catch_unwind(|| run(cli)) {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(Failure::User(msg))) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Ok(Err(Failure::Internal(msg))) => {
            eprintln!("internal error: {msg}");
            ExitCode::from(2)
        }
        Err(_) => ExitCode::from(2),
    }
}
