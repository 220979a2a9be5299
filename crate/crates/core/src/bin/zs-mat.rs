use std::io::{BufReader, Write as _};
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use log::info;

use zsmat::io::config::{load_config, RunConfig};
use zsmat::io::detections::{load_detections, write_detections};
use zsmat::io::mot::{load_mot, write_mot};
use zsmat::io::report::{self, build_report, format_report, EVAL_FILE, EVENTS_SUFFIX, THRESHOLD_SUFFIX};
use zsmat::io::write_file;
use zsmat::metrics::{self, SequenceEval};
use zsmat::pipeline::{run_sequence, sequence_threshold, HISTOGRAM_BINS};
use zsmat::protocol::wire::{serve, StdioTransport, TcpTransport, WireSegmenter};
use zsmat::protocol::{conformance, SequenceInfo, Segmenter, SegmenterError};
use zsmat::synth::{self, presets, OracleSession, Scenario, ScenarioConfig};
use zsmat::threshold::ThresholdReport;
use zsmat::{Error, Result};

// stdout writes ignore a closed pipe, as in `zs-mat threshold ... | head`
macro_rules! say {
    ($($t:tt)*) => {{
        let _ = writeln!(std::io::stdout(), $($t)*);
    }};
}

macro_rules! emit {
    ($($t:tt)*) => {{
        let _ = write!(std::io::stdout(), $($t)*);
    }};
}

const DETECTIONS_SUFFIX: &str = ".detections.jsonl";
const SCENARIO_SUFFIX: &str = ".scenario.json";

#[derive(Parser)]
#[command(name = "zs-mat", version, about = "Zero-shot multi-object tracking engine")]
struct Cli {
    /// Seed for scenario generation and protocol fuzzing.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Run configuration (flat `key = value` file).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic scenario: ground truth, detections and its config.
    Synth(SynthArgs),
    /// Compute the per-sequence score threshold and its histogram.
    Threshold(ThresholdArgs),
    /// Track one sequence of detections against a segmenter.
    Track(TrackArgs),
    /// Score tracking results against ground truth.
    Eval(EvalArgs),
    /// Summarize one or more results directories.
    Report(ReportArgs),
    /// Run the protocol conformance suite against a segmenter.
    Conformance(ConformanceArgs),
    /// Serve the oracle segmenter for a scenario over stdio or TCP.
    #[command(hide = true)]
    ServeOracle(ServeArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// easy, crossing, crowded, ablation or vanishing.
    #[arg(long, default_value = "easy", conflicts_with = "scenario")]
    preset: String,
    /// Scenario config as JSON, instead of a preset.
    #[arg(long)]
    scenario: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ThresholdArgs {
    #[arg(long)]
    detections: PathBuf,
    /// Where to write the JSON report.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = HISTOGRAM_BINS)]
    bins: usize,
}

#[derive(Args)]
struct TrackArgs {
    #[arg(long)]
    detections: PathBuf,
    /// oracle, oracle:SCENARIO.json, exec:COMMAND or tcp:HOST:PORT.
    #[arg(long)]
    segmenter: Option<String>,
    /// Results CSV. The event log and threshold report are written beside it.
    #[arg(long)]
    out: PathBuf,
    /// Sequence name; defaults to the detections file name.
    #[arg(long)]
    name: Option<String>,
    #[arg(long)]
    width: Option<u32>,
    #[arg(long)]
    height: Option<u32>,
    #[arg(long)]
    frames: Option<u32>,
}

#[derive(Args)]
struct EvalArgs {
    /// Ground-truth CSV file or directory of `<sequence>.txt` files.
    #[arg(long)]
    gt: PathBuf,
    /// Results CSV file or directory with the same file names.
    #[arg(long)]
    pred: PathBuf,
    /// Directory receiving eval.txt and eval.json.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(long, num_args = 1.., required = true)]
    results: Vec<PathBuf>,
    /// Directory receiving report.txt and report.json.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ConformanceArgs {
    #[arg(long)]
    segmenter: String,
    /// Scenario JSON giving the sequence size and a probe box.
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long, default_value_t = 400)]
    steps: usize,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long)]
    scenario: PathBuf,
    /// Listen on this address instead of stdio; one session per connection.
    #[arg(long)]
    tcp: Option<String>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let cfg = match &cli.config {
        Some(p) => load_config(p)?,
        None => RunConfig::default(),
    };
    match cli.command {
        Command::Synth(a) => synth_cmd(a, cli.seed),
        Command::Threshold(a) => threshold_cmd(a, &cfg),
        Command::Track(a) => track_cmd(a, &cfg),
        Command::Eval(a) => eval_cmd(a),
        Command::Report(a) => report_cmd(a),
        Command::Conformance(a) => conformance_cmd(a, cli.seed),
        Command::ServeOracle(a) => serve_cmd(a),
    }
}

fn scenarios_for(preset: &str, seed: u64) -> Result<Vec<ScenarioConfig>> {
    Ok(match preset {
        "easy" => vec![presets::easy(seed)],
        "crossing" => vec![presets::crossing(seed)],
        "crowded" => vec![presets::crowded(seed)],
        "ablation" => presets::ablation_suite(seed),
        "vanishing" => vec![presets::vanishing(seed, 20, 60)],
        other => {
            return Err(Error::validation(
                "--preset",
                format!("unknown preset {other:?}; expected easy, crossing, crowded, ablation or vanishing"),
            ))
        }
    })
}

fn read_scenario(path: &Path) -> Result<ScenarioConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::validation(path.display().to_string(), e.to_string()))
}

fn generate(cfg: &ScenarioConfig) -> Result<Scenario> {
    synth::generate(cfg).map_err(|e| Error::validation(format!("scenario {}", cfg.name), e.to_string()))
}

fn synth_cmd(a: SynthArgs, seed: u64) -> Result<()> {
    let configs = match &a.scenario {
        Some(p) => vec![read_scenario(p)?],
        None => scenarios_for(&a.preset, seed)?,
    };
    for cfg in &configs {
        let world = generate(cfg)?;
        write_mot(&a.out.join("gt").join(format!("{}.txt", cfg.name)), &world.ground_truth_table())?;
        write_detections(&a.out.join(format!("{}{DETECTIONS_SUFFIX}", cfg.name)), &world.detections)?;
        write_file(
            &a.out.join(format!("{}{SCENARIO_SUFFIX}", cfg.name)),
            serde_json::to_string_pretty(cfg).expect("configs serialize"),
        )?;
        say!("{}: {} frames, {} objects", cfg.name, cfg.frames, cfg.objects.len());
    }
    Ok(())
}

/// `dir/seq.detections.jsonl` -> `seq`.
fn sequence_name(detections: &Path) -> String {
    let file = detections.file_name().map(|f| f.to_string_lossy().into_owned()).unwrap_or_default();
    file.strip_suffix(DETECTIONS_SUFFIX)
        .or_else(|| file.strip_suffix(".jsonl"))
        .unwrap_or(&file)
        .to_string()
}

fn threshold_cmd(a: ThresholdArgs, cfg: &RunConfig) -> Result<()> {
    let frames = load_detections(&a.detections)?;
    let (_, base) = sequence_threshold(&frames, cfg);
    let scores: Vec<f64> = frames.iter().flat_map(|f| f.detections.iter().map(|d| d.score)).collect();
    let mut report = ThresholdReport::compute(sequence_name(&a.detections), &scores, &cfg.threshold, a.bins);
    report.threshold = base.threshold;
    say!("sequence {}: tau = {:.6} over {} scores", report.sequence, report.threshold, scores.len());
    say!("{:>4} {:>8} {:>8} {:>7} {:>7}", "bin", "lo", "hi", "count", "cluster");
    for (i, b) in report.histogram.iter().enumerate() {
        let mark = if b.lo <= report.threshold && report.threshold < b.hi { "  <- tau" } else { "" };
        say!("{i:>4} {:>8.4} {:>8.4} {:>7} {:>7}{mark}", b.lo, b.hi, b.count, b.cluster);
    }
    if let Some(out) = &a.out {
        write_file(out, serde_json::to_string_pretty(&report).expect("reports serialize"))?;
    }
    Ok(())
}

fn scenario_beside(detections: &Path) -> PathBuf {
    let dir = detections.parent().unwrap_or(Path::new("."));
    dir.join(format!("{}{SCENARIO_SUFFIX}", sequence_name(detections)))
}

fn abort(sequence: &str) -> impl Fn(SegmenterError) -> Error + '_ {
    move |source| Error::TrackingAbort {
        sequence: sequence.to_string(),
        source,
    }
}

fn track_cmd(a: TrackArgs, cfg: &RunConfig) -> Result<()> {
    let detections = load_detections(&a.detections)?;
    let spec = a.segmenter.clone().or_else(|| cfg.segmenter.clone()).unwrap_or_else(|| "oracle".into());
    let name = a.name.clone().unwrap_or_else(|| sequence_name(&a.detections));

    let scenario_path = match spec.strip_prefix("oracle") {
        Some("") => Some(scenario_beside(&a.detections)),
        Some(rest) => match rest.strip_prefix(':') {
            Some(p) => Some(PathBuf::from(p)),
            None => return Err(Error::validation("--segmenter", format!("unknown segmenter {spec:?}"))),
        },
        None => None,
    };
    let world = match &scenario_path {
        Some(p) if p.is_file() => Some(Arc::new(generate(&read_scenario(p)?)?)),
        Some(p) => return Err(Error::MissingInputs(vec![p.clone()])),
        None => None,
    };

    let observed_frames = detections.last().map_or(0, |f| f.frame + 1);
    // a scenario echo next to the detections also sizes external segmenters
    let beside = scenario_beside(&a.detections);
    let dims = match &world {
        Some(w) => Some((w.config.width, w.config.height, w.config.frames)),
        None if beside.is_file() => read_scenario(&beside).ok().map(|c| (c.width, c.height, c.frames)),
        None => None,
    };
    let info = SequenceInfo {
        sequence_id: name.clone(),
        width: a.width.or(dims.map(|d| d.0)).ok_or_else(|| Error::validation("--width", "required without a scenario"))?,
        height: a.height.or(dims.map(|d| d.1)).ok_or_else(|| Error::validation("--height", "required without a scenario"))?,
        frames: a.frames.or(dims.map(|d| d.2)).unwrap_or(observed_frames),
    };

    let session: Box<dyn Segmenter> = match (&world, spec.split_once(':')) {
        (Some(w), _) => Box::new(OracleSession::new(w.clone())),
        (None, Some(("exec", cmd))) => Box::new(WireSegmenter::new(StdioTransport::spawn(cmd).map_err(abort(&name))?)),
        (None, Some(("tcp", addr))) => Box::new(WireSegmenter::new(TcpTransport::connect(addr).map_err(abort(&name))?)),
        _ => return Err(Error::validation("--segmenter", format!("unknown segmenter {spec:?}"))),
    };
    info!("tracking {name} with {spec}");
    let mut run = run_sequence(session, info, &detections, cfg)?;
    run.threshold_report.sequence = name.clone();

    write_mot(&a.out, &run.results)?;
    let dir = a.out.parent().unwrap_or(Path::new(""));
    let stem = a.out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or(name);
    write_file(&dir.join(format!("{stem}{EVENTS_SUFFIX}")), report::format_events(&run.events))?;
    write_file(
        &dir.join(format!("{stem}{THRESHOLD_SUFFIX}")),
        serde_json::to_string_pretty(&run.threshold_report).expect("reports serialize"),
    )?;
    say!(
        "{}: tau {:.4}, {} rows, {} events",
        run.name,
        run.threshold,
        run.results.rows.len(),
        run.events.len()
    );
    Ok(())
}

fn sequence_files(dir: &Path) -> Result<Vec<String>> {
    let mut names: Vec<String> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok())
        .filter_map(|e| e.file_name().to_str().and_then(|n| n.strip_suffix(".txt")).map(String::from))
        .filter(|n| n != "eval" && n != "report")
        .collect();
    names.sort();
    Ok(names)
}

fn eval_cmd(a: EvalArgs) -> Result<()> {
    let pairs: Vec<(String, PathBuf, PathBuf)> = if a.gt.is_dir() {
        let names = sequence_files(&a.gt)?;
        if names.is_empty() {
            return Err(Error::MissingInputs(vec![a.gt.join("*.txt")]));
        }
        names
            .into_iter()
            .map(|n| {
                let (g, p) = (a.gt.join(format!("{n}.txt")), a.pred.join(format!("{n}.txt")));
                (n, g, p)
            })
            .collect()
    } else {
        let name = a.gt.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        vec![(name, a.gt.clone(), a.pred.clone())]
    };
    let missing: Vec<PathBuf> = pairs
        .iter()
        .flat_map(|(_, g, p)| [g, p])
        .filter(|p| !p.is_file())
        .cloned()
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingInputs(missing));
    }
    let alphas = metrics::default_alphas();
    let mut rows: Vec<SequenceEval> = pairs
        .iter()
        .map(|(n, g, p)| metrics::evaluate_named(n, &load_mot(g)?, &load_mot(p)?, &alphas))
        .collect::<Result<_>>()?;
    rows.push(metrics::aggregate("COMBINED", &rows)?);
    let table = metrics::format_table(&rows);
    emit!("{table}");
    if let Some(out) = &a.out {
        write_file(&out.join("eval.txt"), &table)?;
        write_file(&out.join(EVAL_FILE), serde_json::to_string_pretty(&rows).expect("evals serialize"))?;
    }
    Ok(())
}

fn report_cmd(a: ReportArgs) -> Result<()> {
    let report = build_report(&a.results)?;
    let text = format_report(&report);
    emit!("{text}");
    if let Some(out) = &a.out {
        write_file(&out.join("report.txt"), &text)?;
        write_file(&out.join("report.json"), serde_json::to_string_pretty(&report).expect("reports serialize"))?;
    }
    Ok(())
}

fn conformance_cmd(a: ConformanceArgs, seed: u64) -> Result<()> {
    let cfg = read_scenario(&a.scenario)?;
    let world = Arc::new(generate(&cfg)?);
    let info = OracleSession::new(world.clone()).info();
    let probe = world
        .truth
        .iter()
        .flat_map(|f| f.objects.iter())
        .find_map(|o| o.bbox())
        .ok_or_else(|| Error::validation(a.scenario.display().to_string(), "no visible object to probe with"))?;
    let report = match a.segmenter.split_once(':') {
        Some(("exec", cmd)) => conformance::run(|| StdioTransport::spawn(cmd), &info, probe, seed, a.steps),
        Some(("tcp", addr)) => conformance::run(|| TcpTransport::connect(addr), &info, probe, seed, a.steps),
        _ => return Err(Error::validation("--segmenter", "expected exec:COMMAND or tcp:HOST:PORT")),
    };
    for c in &report.checks {
        let verdict = if c.violations.is_empty() { "PASS" } else { "FAIL" };
        say!("{verdict} {}", c.name);
        for v in &c.violations {
            say!("     {v}");
        }
    }
    if report.passed() {
        Ok(())
    } else {
        Err(Error::validation(
            a.segmenter,
            format!("{} protocol violations", report.violations()),
        ))
    }
}

fn serve_cmd(a: ServeArgs) -> Result<()> {
    let world = Arc::new(generate(&read_scenario(&a.scenario)?)?);
    let Some(addr) = a.tcp else {
        let stdin = std::io::stdin();
        return serve(&mut OracleSession::new(world), stdin.lock(), std::io::stdout().lock())
            .map_err(|e| Error::io("<stdio>", e));
    };
    let listener = TcpListener::bind(&addr).map_err(|e| Error::io(&addr, e))?;
    let local = listener.local_addr().map_err(|e| Error::io(&addr, e))?;
    println!("{local}");
    std::io::stdout().flush().map_err(|e| Error::io("<stdout>", e))?;
    for stream in listener.incoming() {
        let stream = stream.map_err(|e| Error::io(&addr, e))?;
        let reader = BufReader::new(stream.try_clone().map_err(|e| Error::io(&addr, e))?);
        if let Err(e) = serve(&mut OracleSession::new(world.clone()), reader, stream) {
            log::warn!("connection ended: {e}");
        }
    }
    Ok(())
}
