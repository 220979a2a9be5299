//! End-to-end runs: threshold a sequence's detections, track them against a
//! segmenter, and score the result.

use std::path::Path;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::geometry::Detection;
use crate::io::config::{DetectionThreshold, RunConfig};
use crate::io::detections::FrameDetections;
use crate::io::mot::{MotRow, MotTable};
use crate::io::report::{self, EVENTS_SUFFIX, THRESHOLD_SUFFIX};
use crate::metrics::{self, SequenceEval};
use crate::protocol::{SequenceInfo, Segmenter};
use crate::synth::{self, OracleSession, Scenario, ScenarioConfig};
use crate::threshold::ThresholdReport;
use crate::tracker::{FrameResult, LoggedEvent, Tracker};

/// Score histogram resolution used in threshold reports.
pub const HISTOGRAM_BINS: usize = 50;

/// Output of tracking one sequence.
#[derive(Debug, Clone)]
pub struct SequenceRun {
    pub name: String,
    pub threshold: f64,
    pub threshold_report: ThresholdReport,
    pub results: MotTable,
    pub events: Vec<LoggedEvent>,
    pub frames: Vec<FrameResult>,
}

impl SequenceRun {
    /// Writes `<name>.txt`, `<name>.events.jsonl` and `<name>.threshold.json`
    /// into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        crate::io::mot::write_mot(&dir.join(format!("{}.txt", self.name)), &self.results)?;
        crate::io::write_file(
            &dir.join(format!("{}{EVENTS_SUFFIX}", self.name)),
            report::format_events(&self.events),
        )?;
        crate::io::write_file(
            &dir.join(format!("{}{THRESHOLD_SUFFIX}", self.name)),
            serde_json::to_string_pretty(&self.threshold_report).expect("reports serialize"),
        )
    }
}

/// The score threshold applied to a whole sequence.
pub fn sequence_threshold(frames: &[FrameDetections], cfg: &RunConfig) -> (f64, ThresholdReport) {
    let scores: Vec<f64> = frames.iter().flat_map(|f| f.detections.iter().map(|d| d.score)).collect();
    let mut report = ThresholdReport::compute("", &scores, &cfg.threshold, HISTOGRAM_BINS);
    if let DetectionThreshold::Fixed(t) = cfg.detection_threshold {
        report.threshold = t;
    }
    (report.threshold, report)
}

/// Detections of frame `t`, empty when the file has no record for it.
fn frame_detections(frames: &[FrameDetections], t: u32) -> &[Detection] {
    frames
        .binary_search_by_key(&t, |f| f.frame)
        .map(|i| frames[i].detections.as_slice())
        .unwrap_or(&[])
}

/// Tracks one sequence from start to end.
pub fn run_sequence<S: Segmenter>(
    session: S,
    info: SequenceInfo,
    detections: &[FrameDetections],
    cfg: &RunConfig,
) -> Result<SequenceRun> {
    let name = info.sequence_id.clone();
    if let Some(f) = detections.iter().find(|f| f.frame >= info.frames) {
        return Err(Error::validation(
            &name,
            format!("detections for frame {} but the sequence has {} frames", f.frame, info.frames),
        ));
    }
    let (threshold, mut threshold_report) = sequence_threshold(detections, cfg);
    threshold_report.sequence = name.clone();
    let abort = |source| Error::TrackingAbort {
        sequence: name.clone(),
        source,
    };
    let frames_total = info.frames;
    let mut tracker = Tracker::new(session, info, cfg.tracker.clone()).map_err(abort)?;
    let mut rows = Vec::new();
    let mut events = Vec::new();
    let mut frames = Vec::with_capacity(frames_total as usize);
    for t in 0..frames_total {
        let kept: Vec<Detection> = frame_detections(detections, t)
            .iter()
            .filter(|d| d.score >= threshold)
            .cloned()
            .collect();
        let result = tracker.step(&kept).map_err(abort)?;
        for o in &result.outputs {
            rows.push(MotRow {
                frame: t + 1,
                id: o.track_id,
                bbox: o.bbox,
                conf: o.occ.value(),
                class: -1,
                visibility: -1.0,
            });
        }
        events.extend(result.events.iter().cloned().map(|event| LoggedEvent { frame: t, event }));
        frames.push(result);
    }
    tracker.finish().map_err(abort)?;
    Ok(SequenceRun {
        name: name.clone(),
        threshold,
        threshold_report,
        results: MotTable { rows },
        events,
        frames,
    })
}

/// Generates a scenario and tracks it with the oracle segmenter.
pub fn run_scenario(scenario: &ScenarioConfig, cfg: &RunConfig) -> Result<(Arc<Scenario>, SequenceRun)> {
    let world = Arc::new(
        synth::generate(scenario).map_err(|e| Error::validation(format!("scenario {}", scenario.name), e.to_string()))?,
    );
    let session = OracleSession::new(world.clone());
    let info = session.info();
    let run = run_sequence(session, info, &world.detections, cfg)?;
    Ok((world, run))
}

/// Tracks and scores a scenario in one go.
pub fn evaluate_scenario(scenario: &ScenarioConfig, cfg: &RunConfig) -> Result<(SequenceRun, SequenceEval)> {
    let (world, run) = run_scenario(scenario, cfg)?;
    let eval = metrics::evaluate_named(
        &scenario.name,
        &world.ground_truth_table(),
        &run.results,
        &metrics::default_alphas(),
    )?;
    Ok((run, eval))
}

/// Scores every scenario in a suite and pools the result.
pub fn evaluate_suite(suite: &[ScenarioConfig], cfg: &RunConfig) -> Result<(Vec<SequenceEval>, SequenceEval)> {
    let per: Vec<SequenceEval> = suite
        .iter()
        .map(|s| evaluate_scenario(s, cfg).map(|(_, e)| e))
        .collect::<Result<_>>()?;
    let pooled = metrics::aggregate("COMBINED", &per)?;
    Ok((per, pooled))
}
