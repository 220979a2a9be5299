//! Plot-ready tables built from the files a tracking run leaves behind:
//! `<seq>.threshold.json`, `<seq>.events.jsonl` and optionally `eval.json`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::SequenceEval;
use crate::threshold::ThresholdReport;
use crate::tracker::{Event, LoggedEvent};

pub const THRESHOLD_SUFFIX: &str = ".threshold.json";
pub const EVENTS_SUFFIX: &str = ".events.jsonl";
pub const EVAL_FILE: &str = "eval.json";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EventCounts {
    pub created: usize,
    pub rejected: usize,
    pub reprompted: usize,
    pub memory_dropped: usize,
    pub suppressed: usize,
    pub terminated: usize,
}

impl EventCounts {
    pub fn count(&mut self, e: &Event) {
        match e {
            Event::Created { .. } => self.created += 1,
            Event::Rejected { .. } => self.rejected += 1,
            Event::Reprompted { .. } => self.reprompted += 1,
            Event::MemoryDropped { .. } => self.memory_dropped += 1,
            Event::Suppressed { .. } => self.suppressed += 1,
            Event::Terminated { .. } => self.terminated += 1,
        }
    }
}

/// Everything read from one results directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub label: String,
    pub thresholds: Vec<ThresholdReport>,
    pub events: BTreeMap<String, EventCounts>,
    /// Scores per sequence plus the pooled row, when the run was evaluated.
    pub evaluation: Option<Vec<SequenceEval>>,
}

impl RunSummary {
    /// The pooled evaluation row (the last one in `eval.json`).
    pub fn combined(&self) -> Option<&SequenceEval> {
        self.evaluation.as_ref().and_then(|v| v.last())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub runs: Vec<RunSummary>,
}

pub fn parse_events(text: &str, origin: &str) -> Result<Vec<LoggedEvent>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| Error::validation(format!("{origin}:{}", i + 1), e.to_string())))
        .collect()
}

pub fn format_events(events: &[LoggedEvent]) -> String {
    let mut out = String::new();
    for e in events {
        let _ = writeln!(out, "{}", serde_json::to_string(e).expect("events serialize"));
    }
    out
}

fn json_file<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = super::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::validation(path.display().to_string(), e.to_string()))
}

pub fn load_run(dir: &Path) -> Result<RunSummary> {
    if !dir.is_dir() {
        return Err(Error::MissingInputs(vec![dir.to_path_buf()]));
    }
    let mut names: Vec<String> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok())
        .filter_map(|e| e.file_name().to_str().and_then(|n| n.strip_suffix(THRESHOLD_SUFFIX)).map(String::from))
        .collect();
    names.sort();
    if names.is_empty() {
        return Err(Error::MissingInputs(vec![dir.join(format!("*{THRESHOLD_SUFFIX}"))]));
    }
    let missing: Vec<PathBuf> = names
        .iter()
        .map(|n| dir.join(format!("{n}{EVENTS_SUFFIX}")))
        .filter(|p| !p.is_file())
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingInputs(missing));
    }
    let mut thresholds = Vec::new();
    let mut events = BTreeMap::new();
    for n in &names {
        thresholds.push(json_file::<ThresholdReport>(&dir.join(format!("{n}{THRESHOLD_SUFFIX}")))?);
        let path = dir.join(format!("{n}{EVENTS_SUFFIX}"));
        let mut counts = EventCounts::default();
        for e in parse_events(&super::read_to_string(&path)?, &path.display().to_string())? {
            counts.count(&e.event);
        }
        events.insert(n.clone(), counts);
    }
    let eval_path = dir.join(EVAL_FILE);
    let evaluation = if eval_path.is_file() {
        Some(json_file(&eval_path)?)
    } else {
        None
    };
    Ok(RunSummary {
        label: dir
            .file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| dir.display().to_string()),
        thresholds,
        events,
        evaluation,
    })
}

pub fn build_report(dirs: &[PathBuf]) -> Result<Report> {
    let missing: Vec<PathBuf> = dirs.iter().filter(|d| !d.is_dir()).cloned().collect();
    if !missing.is_empty() {
        return Err(Error::MissingInputs(missing));
    }
    Ok(Report {
        runs: dirs.iter().map(|d| load_run(d)).collect::<Result<_>>()?,
    })
}

pub fn format_report(report: &Report) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# thresholds\n");
    let _ = writeln!(out, "{:<16} {:<24} {:>8} {:>8} {:>8} {:>6}", "run", "sequence", "tau", "mu_low", "mu_high", "n");
    for run in &report.runs {
        for t in &run.thresholds {
            let (lo, hi, n) = t
                .clusters
                .map_or((f64::NAN, f64::NAN, 0), |c| (c.mu1, c.mu2, c.n1 + c.n2));
            let _ = writeln!(
                out,
                "{:<16} {:<24} {:>8.4} {:>8.4} {:>8.4} {:>6}",
                run.label, t.sequence, t.threshold, lo, hi, n
            );
        }
    }
    for run in &report.runs {
        for t in &run.thresholds {
            let _ = writeln!(out, "\n## histogram {} / {}\n", run.label, t.sequence);
            let _ = writeln!(out, "{:>6} {:>6} {:>6} {:>7}", "lo", "hi", "count", "cluster");
            for b in &t.histogram {
                let marker = if b.lo <= t.threshold && t.threshold < b.hi { "  <- tau" } else { "" };
                let _ = writeln!(out, "{:>6.3} {:>6.3} {:>6} {:>7}{marker}", b.lo, b.hi, b.count, b.cluster);
            }
        }
    }
    let _ = writeln!(out, "\n# events\n");
    let _ = writeln!(
        out,
        "{:<16} {:<24} {:>8} {:>8} {:>10} {:>8} {:>10} {:>10}",
        "run", "sequence", "created", "rejected", "reprompted", "dropped", "suppressed", "terminated"
    );
    for run in &report.runs {
        for (seq, c) in &run.events {
            let _ = writeln!(
                out,
                "{:<16} {:<24} {:>8} {:>8} {:>10} {:>8} {:>10} {:>10}",
                run.label, seq, c.created, c.rejected, c.reprompted, c.memory_dropped, c.suppressed, c.terminated
            );
        }
    }
    if report.runs.iter().any(|r| r.combined().is_some()) {
        let _ = writeln!(out, "\n# comparison\n");
        let _ = writeln!(
            out,
            "{:<16} {:>7} {:>7} {:>7} {:>7} {:>7} {:>6}",
            "run", "HOTA", "DetA", "AssA", "MOTA", "IDF1", "IDSW"
        );
        for run in &report.runs {
            if let Some(e) = run.combined() {
                let _ = writeln!(
                    out,
                    "{:<16} {:>7.2} {:>7.2} {:>7.2} {:>7.2} {:>7.2} {:>6}",
                    run.label,
                    100.0 * e.hota,
                    100.0 * e.deta,
                    100.0 * e.assa,
                    100.0 * e.mota,
                    100.0 * e.idf1,
                    e.idsw
                );
            }
        }
    }
    out
}
