//! Detections file: one JSON object per frame,
//! `{"frame": 0, "detections": [{"bbox": [x, y, w, h], "score": 0.9, "label": "ape"}]}`.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{BBox, Detection};

#[derive(Debug, Clone, PartialEq, Default)]
pub struct FrameDetections {
    pub frame: u32,
    pub detections: Vec<Detection>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Record {
    frame: u32,
    detections: Vec<Entry>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Entry {
    bbox: BBox,
    score: f64,
    label: String,
}

/// Parses a detections file. `origin` names the source in error messages.
/// Frames must be strictly increasing; gaps are allowed.
pub fn parse_detections(text: &str, origin: &str) -> Result<Vec<FrameDetections>> {
    let mut out: Vec<FrameDetections> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let at = || format!("{origin}:{}", i + 1);
        if line.trim().is_empty() {
            continue;
        }
        let record: Record = serde_json::from_str(line).map_err(|e| Error::validation(at(), e.to_string()))?;
        if let Some(prev) = out.last() {
            if record.frame <= prev.frame {
                return Err(Error::validation(
                    at(),
                    format!("frame {} does not follow frame {}", record.frame, prev.frame),
                ));
            }
        }
        let detections = record
            .detections
            .into_iter()
            .enumerate()
            .map(|(j, e)| {
                Detection::new(record.frame, e.bbox, e.score, e.label)
                    .map_err(|err| Error::validation(at(), format!("detection {j}: {err}")))
            })
            .collect::<Result<Vec<_>>>()?;
        out.push(FrameDetections {
            frame: record.frame,
            detections,
        });
    }
    Ok(out)
}

pub fn load_detections(path: &Path) -> Result<Vec<FrameDetections>> {
    let text = super::read_to_string(path)?;
    parse_detections(&text, &path.display().to_string())
}

pub fn format_detections(frames: &[FrameDetections]) -> String {
    let mut out = String::new();
    for f in frames {
        let record = Record {
            frame: f.frame,
            detections: f
                .detections
                .iter()
                .map(|d| Entry {
                    bbox: d.bbox,
                    score: d.score,
                    label: d.label.clone(),
                })
                .collect(),
        };
        let _ = writeln!(out, "{}", serde_json::to_string(&record).expect("records serialize"));
    }
    out
}

pub fn write_detections(path: &Path, frames: &[FrameDetections]) -> Result<()> {
    super::write_file(path, format_detections(frames))
}
